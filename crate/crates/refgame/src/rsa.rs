//! The RSA recursion over a meaning matrix: a literal listener normalizing
//! meaning × prior per utterance, and a pragmatic speaker soft-maximizing
//! listener probability against utterance cost, sharpened by α.
//!
//! Speaker weights are computed in log space with max-subtraction; α up to
//! 3.0 over small probabilities would underflow in linear space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meaning::MeaningMatrix;
use crate::utterance::CostMode;

#[derive(Debug, Error, PartialEq)]
pub enum RsaError {
    #[error("alpha must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("{what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("cost {value} at index {index} is not positive and finite")]
    InvalidCost { index: usize, value: f64 },
    #[error("speaker needs at least one utterance")]
    NoUtterances,
    #[error("object {object_index} has zero listener mass under every utterance")]
    UnreachableObject { object_index: usize },
}

/// Prior over objects; the paper's games use the uniform prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    Uniform,
    Explicit(Vec<f64>),
}

impl Prior {
    pub fn validate(&self) -> Result<(), RsaError> {
        if let Self::Explicit(weights) = self {
            if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                return Err(RsaError::InvalidPrior(
                    "negative or non-finite weight".into(),
                ));
            }
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(RsaError::InvalidPrior(format!(
                    "weights sum to {sum}, not 1"
                )));
            }
        }
        Ok(())
    }

    fn weights(&self, n_objects: usize) -> Result<Vec<f64>, RsaError> {
        self.validate()?;
        match self {
            Self::Uniform => Ok(vec![1.0 / n_objects as f64; n_objects]),
            Self::Explicit(weights) => {
                if weights.len() != n_objects {
                    return Err(RsaError::DimensionMismatch {
                        what: "prior length".into(),
                        expected: n_objects,
                        actual: weights.len(),
                    });
                }
                Ok(weights.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerConfig {
    pub alpha: f64,
    pub cost_mode: CostMode,
    pub prior: Prior,
}

impl SpeakerConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            cost_mode: CostMode::WordCount,
            prior: Prior::Uniform,
        }
    }

    pub fn validate(&self) -> Result<(), RsaError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(RsaError::InvalidAlpha(self.alpha));
        }
        self.prior.validate()
    }
}

/// P(object | utterance) per utterance row; all-zero rows (utterances true
/// of nothing) are flagged degenerate and carry no probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerTable {
    pub rows: Vec<Vec<f64>>,
    pub degenerate: Vec<bool>,
}

impl ListenerTable {
    pub fn utterance_count(&self) -> usize {
        self.rows.len()
    }

    pub fn object_count(&self) -> usize {
        self.rows.first().map(Vec::len).unwrap_or(0)
    }
}

/// P(utterance | object) per object column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerTable {
    columns: Vec<Vec<f64>>,
}

impl SpeakerTable {
    pub fn column(&self, object_index: usize) -> &[f64] {
        &self.columns[object_index]
    }

    pub fn object_count(&self) -> usize {
        self.columns.len()
    }

    pub fn utterance_count(&self) -> usize {
        self.columns.first().map(Vec::len).unwrap_or(0)
    }
}

/// Row u is M(u, ·) · P(·), normalized when it has any mass.
pub fn literal_listener(matrix: &MeaningMatrix, prior: &Prior) -> Result<ListenerTable, RsaError> {
    let n_objects = matrix.object_count();
    let prior_weights = prior.weights(n_objects)?;
    let mut rows = Vec::with_capacity(matrix.values.len());
    let mut degenerate = Vec::with_capacity(matrix.values.len());
    for (u, meaning_row) in matrix.values.iter().enumerate() {
        if meaning_row.len() != n_objects {
            return Err(RsaError::DimensionMismatch {
                what: format!("meaning row {u} length"),
                expected: n_objects,
                actual: meaning_row.len(),
            });
        }
        let mut row: Vec<f64> = meaning_row
            .iter()
            .zip(&prior_weights)
            .map(|(m, p)| m * p)
            .collect();
        let mass: f64 = row.iter().sum();
        if mass > 0.0 {
            for v in &mut row {
                *v /= mass;
            }
            degenerate.push(false);
        } else {
            row.fill(0.0);
            degenerate.push(true);
        }
        rows.push(row);
    }
    Ok(ListenerTable { rows, degenerate })
}

/// Column o is (L(o|u) / |u|)^α over non-degenerate utterances, normalized.
/// Utterances with zero listener mass on o get zero speaker mass; an object
/// with no support at all is an error.
pub fn pragmatic_speaker(
    listener: &ListenerTable,
    costs: &[f64],
    cfg: &SpeakerConfig,
) -> Result<SpeakerTable, RsaError> {
    cfg.validate()?;
    let n_utterances = listener.utterance_count();
    if n_utterances == 0 {
        return Err(RsaError::NoUtterances);
    }
    if costs.len() != n_utterances {
        return Err(RsaError::DimensionMismatch {
            what: "cost vector length".into(),
            expected: n_utterances,
            actual: costs.len(),
        });
    }
    for (index, &value) in costs.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(RsaError::InvalidCost { index, value });
        }
    }
    let n_objects = listener.object_count();
    let mut columns = Vec::with_capacity(n_objects);
    for o in 0..n_objects {
        let log_weights: Vec<Option<f64>> = (0..n_utterances)
            .map(|u| {
                let l = listener.rows[u][o];
                if listener.degenerate[u] || l <= 0.0 {
                    None
                } else {
                    Some(cfg.alpha * (l.ln() - costs[u].ln()))
                }
            })
            .collect();
        let max = log_weights
            .iter()
            .flatten()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if max == f64::NEG_INFINITY {
            return Err(RsaError::UnreachableObject { object_index: o });
        }
        let mut column: Vec<f64> = log_weights
            .iter()
            .map(|lw| lw.map(|w| (w - max).exp()).unwrap_or(0.0))
            .collect();
        let sum: f64 = column.iter().sum();
        for v in &mut column {
            *v /= sum;
        }
        columns.push(column);
    }
    Ok(SpeakerTable { columns })
}

/// Shannon entropy in nats of the speaker column; 0·ln 0 counts as 0.
pub fn speaker_entropy(speaker: &SpeakerTable, object_index: usize) -> f64 {
    -speaker
        .column(object_index)
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// All utterance indices within relative tolerance of the column maximum;
/// ties are reported, never broken.
pub fn argmax_tie_set(speaker: &SpeakerTable, object_index: usize) -> Vec<usize> {
    let column = speaker.column(object_index);
    let max = column.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    column
        .iter()
        .enumerate()
        .filter(|(_, &p)| max - p <= 1e-12 * max)
        .map(|(i, _)| i)
        .collect()
}
