//! Correlation analysis over scored records: how well model-assigned
//! utterance probabilities track the pragmatic speaker distribution,
//! overall and per reference game.

mod stats;
mod svg;

pub use stats::{average_ranks, mean_std, pearson, spearman};
pub use svg::{histogram_svg, scatter_svg};

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::is_metadata_line;
use crate::meaning::MfKind;

/// Rationality values every sweep covers by default.
pub const DEFAULT_ALPHAS: [f64; 6] = [0.2, 0.6, 1.0, 1.4, 1.8, 3.0];

/// Histogram resolution for per-group correlations: bins of width 0.05
/// spanning [-1, 1].
pub const HISTOGRAM_BINS: usize = 40;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("no records match {what} (need at least 2)")]
    EmptyFilter { what: String },
    #[error("every group was skipped (fewer than 3 utterances or undefined correlation)")]
    AllGroupsSkipped,
    #[error("record line {line}: {message}")]
    Record { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Which model-side score to correlate against the speaker probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlmScoreMode {
    /// Sequence probability renormalized over the candidate set.
    NormalizedProb,
    /// Raw total log-probability of the utterance.
    RawLogprob,
}

impl fmt::Display for LlmScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LlmScoreMode::NormalizedProb => "normalized-prob",
            LlmScoreMode::RawLogprob => "raw-logprob",
        })
    }
}

impl FromStr for LlmScoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normalized-prob" => Ok(LlmScoreMode::NormalizedProb),
            "raw-logprob" => Ok(LlmScoreMode::RawLogprob),
            other => Err(format!(
                "unknown llm score mode {other:?}; expected normalized-prob or raw-logprob"
            )),
        }
    }
}

/// Restrict an analysis to one utterance source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProvenanceFilter {
    All,
    Logic,
    Topk,
}

impl ProvenanceFilter {
    pub fn matches(self, provenance: &str) -> bool {
        match self {
            ProvenanceFilter::All => true,
            ProvenanceFilter::Logic => provenance == "logic",
            ProvenanceFilter::Topk => provenance == "topk",
        }
    }
}

impl fmt::Display for ProvenanceFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProvenanceFilter::All => "all",
            ProvenanceFilter::Logic => "logic",
            ProvenanceFilter::Topk => "topk",
        })
    }
}

impl FromStr for ProvenanceFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(ProvenanceFilter::All),
            "logic" => Ok(ProvenanceFilter::Logic),
            "topk" => Ok(ProvenanceFilter::Topk),
            other => Err(format!(
                "unknown provenance filter {other:?}; expected all, logic, or topk"
            )),
        }
    }
}

/// One scored utterance for one candidate object of one game. The field
/// order here is the column order of the TSV and JSONL encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub game_id: String,
    pub object_index: usize,
    pub utterance: String,
    /// "logic" or "topk".
    pub provenance: String,
    pub cost: f64,
    pub llm_logprob: f64,
    /// Model probability renormalized over the game's candidate set;
    /// sums to 1 per (game_id, object_index).
    pub llm_prob_norm: f64,
    /// "rule" or "prompt".
    pub mf_kind: String,
    pub alpha: f64,
    pub rsa_prob: f64,
}

pub const RECORD_COLUMNS: [&str; 10] = [
    "game_id",
    "object_index",
    "utterance",
    "provenance",
    "cost",
    "llm_logprob",
    "llm_prob_norm",
    "mf_kind",
    "alpha",
    "rsa_prob",
];

/// TSV rows in [`RECORD_COLUMNS`] order, preceded by a `# manifest: <hash>`
/// comment when a hash is given. Utterance texts are normalized and never
/// contain tabs. Floats use the shortest round-tripping form.
pub fn write_records_tsv<W: Write>(
    records: &[ScoreRecord],
    mut out: W,
    manifest_hash: Option<&str>,
) -> io::Result<()> {
    if let Some(hash) = manifest_hash {
        writeln!(out, "# manifest: {hash}")?;
    }
    writeln!(out, "{}", RECORD_COLUMNS.join("\t"))?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.game_id,
            r.object_index,
            r.utterance,
            r.provenance,
            r.cost,
            r.llm_logprob,
            r.llm_prob_norm,
            r.mf_kind,
            r.alpha,
            r.rsa_prob,
        )?;
    }
    Ok(())
}

pub fn read_records_tsv<R: BufRead>(input: R) -> Result<Vec<ScoreRecord>, AnalysisError> {
    let expected_header = RECORD_COLUMNS.join("\t");
    let mut records = Vec::new();
    let mut saw_header = false;
    for (index, line) in input.lines().enumerate() {
        let line = line?;
        let number = index + 1;
        if is_metadata_line(&line) {
            continue;
        }
        if !saw_header {
            if line != expected_header {
                return Err(AnalysisError::Record {
                    line: number,
                    message: format!("expected header {expected_header:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        records.push(parse_record_row(&line, number)?);
    }
    Ok(records)
}

fn parse_record_row(line: &str, number: usize) -> Result<ScoreRecord, AnalysisError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != RECORD_COLUMNS.len() {
        return Err(AnalysisError::Record {
            line: number,
            message: format!(
                "expected {} fields, found {}",
                RECORD_COLUMNS.len(),
                fields.len()
            ),
        });
    }
    let numeric = |column: usize| -> Result<f64, AnalysisError> {
        fields[column].parse().map_err(|_| AnalysisError::Record {
            line: number,
            message: format!(
                "column {} is not a number: {:?}",
                RECORD_COLUMNS[column], fields[column]
            ),
        })
    };
    let object_index: usize = fields[1].parse().map_err(|_| AnalysisError::Record {
        line: number,
        message: format!("column object_index is not an index: {:?}", fields[1]),
    })?;
    Ok(ScoreRecord {
        game_id: fields[0].to_string(),
        object_index,
        utterance: fields[2].to_string(),
        provenance: fields[3].to_string(),
        cost: numeric(4)?,
        llm_logprob: numeric(5)?,
        llm_prob_norm: numeric(6)?,
        mf_kind: fields[7].to_string(),
        alpha: numeric(8)?,
        rsa_prob: numeric(9)?,
    })
}

/// One JSON object per line, fields in [`RECORD_COLUMNS`] order.
pub fn write_records_jsonl<W: Write>(
    records: &[ScoreRecord],
    mut out: W,
    manifest_hash: Option<&str>,
) -> Result<(), AnalysisError> {
    if let Some(hash) = manifest_hash {
        writeln!(out, "{}", serde_json::json!({ "_manifest": hash }))?;
    }
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| AnalysisError::Record {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_records_jsonl<R: BufRead>(input: R) -> Result<Vec<ScoreRecord>, AnalysisError> {
    let mut records = Vec::new();
    for (index, line) in input.lines().enumerate() {
        let line = line?;
        if is_metadata_line(&line) {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| AnalysisError::Record {
            line: index + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn select(
    records: &[ScoreRecord],
    mf_kind: MfKind,
    alpha: f64,
    provenance: ProvenanceFilter,
) -> Vec<&ScoreRecord> {
    let mf_label = mf_kind.to_string();
    records
        .iter()
        .filter(|r| {
            r.mf_kind == mf_label
                && (r.alpha - alpha).abs() < 1e-12
                && provenance.matches(&r.provenance)
        })
        .collect()
}

fn model_score(record: &ScoreRecord, mode: LlmScoreMode) -> f64 {
    match mode {
        LlmScoreMode::NormalizedProb => record.llm_prob_norm,
        LlmScoreMode::RawLogprob => record.llm_logprob,
    }
}

/// Correlation pooled over every matching record.
#[derive(Debug, Clone, Serialize)]
pub struct OverallReport {
    pub mf_kind: MfKind,
    pub alpha: f64,
    pub provenance: ProvenanceFilter,
    pub llm_score_mode: LlmScoreMode,
    pub rows: usize,
    pub pcc: Option<f64>,
    pub srcc: Option<f64>,
}

pub fn overall_correlation(
    records: &[ScoreRecord],
    mf_kind: MfKind,
    alpha: f64,
    provenance: ProvenanceFilter,
    mode: LlmScoreMode,
) -> Result<OverallReport, AnalysisError> {
    let rows = select(records, mf_kind, alpha, provenance);
    if rows.len() < 2 {
        return Err(AnalysisError::EmptyFilter {
            what: format!("mf={mf_kind} alpha={alpha} provenance={provenance}"),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| model_score(r, mode)).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.rsa_prob).collect();
    Ok(OverallReport {
        mf_kind,
        alpha,
        provenance,
        llm_score_mode: mode,
        rows: rows.len(),
        pcc: pearson(&xs, &ys),
        srcc: spearman(&xs, &ys),
    })
}

/// Correlations computed within each (game, candidate object) group, then
/// summarized. Groups with fewer than 3 utterances, or where either
/// correlation is undefined, are skipped and counted.
#[derive(Debug, Clone, Serialize)]
pub struct PerGroupReport {
    pub mf_kind: MfKind,
    pub alpha: f64,
    pub provenance: ProvenanceFilter,
    pub llm_score_mode: LlmScoreMode,
    pub groups_used: usize,
    pub groups_skipped: usize,
    pub pcc_mean: f64,
    /// Population standard deviation over group correlations.
    pub pcc_std: f64,
    pub srcc_mean: f64,
    pub srcc_std: f64,
    pub pcc_histogram: Vec<usize>,
    pub srcc_histogram: Vec<usize>,
    pub pcc_values: Vec<f64>,
    pub srcc_values: Vec<f64>,
}

pub fn per_group_correlation(
    records: &[ScoreRecord],
    mf_kind: MfKind,
    alpha: f64,
    provenance: ProvenanceFilter,
    mode: LlmScoreMode,
) -> Result<PerGroupReport, AnalysisError> {
    let rows = select(records, mf_kind, alpha, provenance);
    if rows.is_empty() {
        return Err(AnalysisError::EmptyFilter {
            what: format!("mf={mf_kind} alpha={alpha} provenance={provenance}"),
        });
    }
    let mut groups: BTreeMap<(String, usize), Vec<&ScoreRecord>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.game_id.clone(), row.object_index))
            .or_default()
            .push(row);
    }

    let mut pcc_values = Vec::new();
    let mut srcc_values = Vec::new();
    let mut groups_skipped = 0usize;
    for group in groups.values() {
        if group.len() < 3 {
            groups_skipped += 1;
            continue;
        }
        let xs: Vec<f64> = group.iter().map(|r| model_score(r, mode)).collect();
        let ys: Vec<f64> = group.iter().map(|r| r.rsa_prob).collect();
        match (pearson(&xs, &ys), spearman(&xs, &ys)) {
            (Some(p), Some(s)) => {
                pcc_values.push(p);
                srcc_values.push(s);
            }
            _ => groups_skipped += 1,
        }
    }
    if pcc_values.is_empty() {
        return Err(AnalysisError::AllGroupsSkipped);
    }
    let (pcc_mean, pcc_std) = mean_std(&pcc_values).expect("nonempty");
    let (srcc_mean, srcc_std) = mean_std(&srcc_values).expect("nonempty");
    Ok(PerGroupReport {
        mf_kind,
        alpha,
        provenance,
        llm_score_mode: mode,
        groups_used: pcc_values.len(),
        groups_skipped,
        pcc_mean,
        pcc_std,
        srcc_mean,
        srcc_std,
        pcc_histogram: histogram(&pcc_values),
        srcc_histogram: histogram(&srcc_values),
        pcc_values,
        srcc_values,
    })
}

/// Counts per 0.05-wide bin over [-1, 1]; values outside are clamped to the
/// edge bins.
pub fn histogram(values: &[f64]) -> Vec<usize> {
    let mut bins = vec![0usize; HISTOGRAM_BINS];
    for &v in values {
        let index = (((v + 1.0) / 0.05).floor() as isize).clamp(0, HISTOGRAM_BINS as isize - 1);
        bins[index as usize] += 1;
    }
    bins
}

/// Pooled Pearson correlation per rationality value, split by utterance
/// source. `None` marks a slice with too few records or an undefined
/// correlation.
#[derive(Debug, Clone, Serialize)]
pub struct AlphaSweepRow {
    pub mf_kind: MfKind,
    pub alpha: f64,
    pub pcc_topk: Option<f64>,
    pub pcc_logic: Option<f64>,
    pub pcc_all: Option<f64>,
}

pub fn alpha_sweep(
    records: &[ScoreRecord],
    alphas: &[f64],
    mode: LlmScoreMode,
) -> Vec<AlphaSweepRow> {
    let mut rows = Vec::new();
    for mf_kind in [MfKind::Rule, MfKind::Prompt] {
        let mf_label = mf_kind.to_string();
        if !records.iter().any(|r| r.mf_kind == mf_label) {
            continue;
        }
        for &alpha in alphas {
            let pcc_for = |filter| {
                overall_correlation(records, mf_kind, alpha, filter, mode)
                    .ok()
                    .and_then(|report| report.pcc)
            };
            rows.push(AlphaSweepRow {
                mf_kind,
                alpha,
                pcc_topk: pcc_for(ProvenanceFilter::Topk),
                pcc_logic: pcc_for(ProvenanceFilter::Logic),
                pcc_all: pcc_for(ProvenanceFilter::All),
            });
        }
    }
    rows
}

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "n/a".to_string(),
    }
}

/// Fixed-width summary: one row per (meaning function, utterance source)
/// pair with per-group correlation means and spreads.
pub fn render_summary_table(reports: &[PerGroupReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8}  {:<6}  {:>6}  {:>7}  {:>9}  {:>7}  {:>9}  {:>7}\n",
        "mf", "source", "groups", "skipped", "PCC mean", "PCC sd", "SRCC mean", "SRCC sd"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<8}  {:<6}  {:>6}  {:>7}  {:>9.3}  {:>7.3}  {:>9.3}  {:>7.3}\n",
            r.mf_kind.to_string(),
            r.provenance.to_string(),
            r.groups_used,
            r.groups_skipped,
            r.pcc_mean,
            r.pcc_std,
            r.srcc_mean,
            r.srcc_std,
        ));
    }
    out
}

/// Fixed-width sweep table: pooled PCC per rationality value and source.
pub fn render_alpha_sweep(rows: &[AlphaSweepRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8}  {:>5}  {:>8}  {:>9}  {:>7}\n",
        "mf", "alpha", "PCC topk", "PCC logic", "PCC all"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<8}  {:>5}  {:>8}  {:>9}  {:>7}\n",
            r.mf_kind.to_string(),
            r.alpha,
            fmt_opt(r.pcc_topk),
            fmt_opt(r.pcc_logic),
            fmt_opt(r.pcc_all),
        ));
    }
    out
}
