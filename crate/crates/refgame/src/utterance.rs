//! Utterance spaces: exhaustive logical alternatives built from feature
//! bundles, ingestion of model-generated top-k alternatives, and utterance
//! cost.
//!
//! A feature bundle is a partial assignment over a schema (absent slots
//! allowed everywhere). The logical space of a game keeps every bundle that
//! truthfully describes at least one object, realized through the same
//! noun-phrase template as full object descriptions, with absent parts
//! dropped and an absent type rephrased as "thing".

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::world::{
    AttributeSchema, ObjectDescription, ReferenceGame, ATTR_COLOUR, ATTR_ORIENTATION, ATTR_SIZE,
    ATTR_TYPE,
};

/// A partial attribute assignment; attributes missing from the map are absent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureBundle {
    present: BTreeMap<String, String>,
}

impl FeatureBundle {
    pub fn empty() -> Self {
        Self {
            present: BTreeMap::new(),
        }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self {
            present: pairs
                .into_iter()
                .map(|(a, f)| (a.to_string(), f.to_string()))
                .collect(),
        }
    }

    /// The total bundle carrying every feature of the object.
    pub fn full_of(object: &ObjectDescription) -> Self {
        Self {
            present: object.assignment().clone(),
        }
    }

    pub fn feature(&self, attribute: &str) -> Option<&str> {
        self.present.get(attribute).map(String::as_str)
    }

    pub fn present(&self) -> &BTreeMap<String, String> {
        &self.present
    }

    pub fn present_count(&self) -> usize {
        self.present.len()
    }

    /// True when every present feature matches the object's assignment.
    pub fn subsumes(&self, object: &ObjectDescription) -> bool {
        self.present
            .iter()
            .all(|(a, f)| object.feature(a) == Some(f.as_str()))
    }
}

/// All partial assignments over the schema: each slot ranges over the
/// attribute's domain plus absent. Enumeration order is fixed: attributes in
/// schema order with the last attribute varying fastest, absent last in each
/// slot. Furniture: (4+1)(4+1)(2+1)(4+1) = 375.
pub fn enumerate_bundles(schema: &AttributeSchema) -> Vec<FeatureBundle> {
    let mut bundles = vec![FeatureBundle::empty()];
    for attr in schema.attributes() {
        let mut next = Vec::with_capacity(bundles.len() * (attr.features.len() + 1));
        for bundle in &bundles {
            for feature in &attr.features {
                let mut b = bundle.clone();
                b.present.insert(attr.name.clone(), feature.clone());
                next.push(b);
            }
            next.push(bundle.clone());
        }
        bundles = next;
    }
    bundles
}

/// Instantiates the noun-phrase template for a partial assignment. Absent
/// type is rephrased as "thing"; the comma appears only when both size and
/// colour are present; an absent orientation drops the whole facing clause.
pub fn realize_bundle(bundle: &FeatureBundle) -> String {
    let word = |attr: &str| bundle.feature(attr).map(|f| f.to_lowercase());
    let size = word(ATTR_SIZE);
    let colour = word(ATTR_COLOUR);
    let kind = word(ATTR_TYPE).unwrap_or_else(|| "thing".to_string());

    let mut text = String::from("a ");
    match (&size, &colour) {
        (Some(s), Some(c)) => {
            text.push_str(s);
            text.push_str(", ");
            text.push_str(c);
            text.push(' ');
        }
        (Some(s), None) => {
            text.push_str(s);
            text.push(' ');
        }
        (None, Some(c)) => {
            text.push_str(c);
            text.push(' ');
        }
        (None, None) => {}
    }
    text.push_str(&kind);
    if let Some(o) = word(ATTR_ORIENTATION) {
        text.push_str(" facing ");
        text.push_str(&o);
    }
    text
}

/// Canonical surface form: collapsed whitespace, lowercase, trailing
/// punctuation stripped. Deduplication and word counting both run on this.
pub fn normalize_text(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(['.', '!', '?', ',', ';', ':'])
        .trim_end()
        .to_string()
}

/// Whitespace word count of the normalized text.
pub fn word_count(text: &str) -> usize {
    normalize_text(text).split_whitespace().count()
}

/// Where an utterance came from; logic utterances keep their bundle, top-k
/// utterances keep rank, raw generation text, and the generation score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Logic {
        bundle: FeatureBundle,
    },
    #[serde(rename = "topk")]
    TopK {
        rank: usize,
        raw_text: String,
        gen_logprob: Option<f64>,
    },
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Logic { .. } => "logic",
            Self::TopK { .. } => "topk",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub provenance: Provenance,
    /// Default length cost: whitespace word count of the text, always ≥ 1.
    pub cost: f64,
}

impl Utterance {
    pub fn logic(bundle: FeatureBundle) -> Self {
        let text = realize_bundle(&bundle);
        let cost = word_count(&text) as f64;
        Self {
            text,
            provenance: Provenance::Logic { bundle },
            cost,
        }
    }

    pub fn topk(raw_text: &str, rank: usize, gen_logprob: f64) -> Self {
        let text = normalize_text(raw_text);
        let cost = word_count(&text).max(1) as f64;
        Self {
            text,
            provenance: Provenance::TopK {
                rank,
                raw_text: raw_text.to_string(),
                gen_logprob: Some(gen_logprob),
            },
            cost,
        }
    }
}

/// How |u| is measured when building speaker tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    WordCount,
    TokenCount,
    FeatureCount,
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::WordCount => "word-count",
            Self::TokenCount => "token-count",
            Self::FeatureCount => "feature-count",
        })
    }
}

impl FromStr for CostMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word-count" => Ok(Self::WordCount),
            "token-count" => Ok(Self::TokenCount),
            "feature-count" => Ok(Self::FeatureCount),
            other => Err(format!(
                "unknown cost mode '{other}' (expected word-count, token-count, or feature-count)"
            )),
        }
    }
}

/// Cost of an utterance under the selected mode, always ≥ 1. Token counts
/// come from the scoring stage; feature counts apply to logic provenance
/// (other provenances fall back to word count).
pub fn utterance_cost(u: &Utterance, mode: CostMode, token_count: Option<usize>) -> f64 {
    let words = word_count(&u.text).max(1) as f64;
    match mode {
        CostMode::WordCount => words,
        CostMode::TokenCount => token_count.map(|n| n.max(1) as f64).unwrap_or(words),
        CostMode::FeatureCount => match &u.provenance {
            Provenance::Logic { bundle } => bundle.present_count().max(1) as f64,
            Provenance::TopK { .. } => words,
        },
    }
}

/// The alternatives considered for one game: texts unique, logic utterances
/// in enumeration order followed by top-k utterances by rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSpace {
    pub game_id: String,
    pub utterances: Vec<Utterance>,
}

impl UtteranceSpace {
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.utterances.iter().map(|u| u.text.as_str())
    }

    pub fn costs(&self, mode: CostMode, token_counts: Option<&[usize]>) -> Vec<f64> {
        self.utterances
            .iter()
            .enumerate()
            .map(|(i, u)| utterance_cost(u, mode, token_counts.map(|t| t[i])))
            .collect()
    }

    /// Appends the other space's utterances, keeping the first occurrence of
    /// each text. Merging a logic space with a top-k space therefore prefers
    /// the logic reading of a shared surface form.
    pub fn merge(mut self, other: UtteranceSpace) -> UtteranceSpace {
        let mut seen: BTreeSet<String> = self.texts().map(str::to_string).collect();
        for u in other.utterances {
            if seen.insert(u.text.clone()) {
                self.utterances.push(u);
            }
        }
        self
    }
}

/// Every bundle true of at least one object, realized. The space depends only
/// on the object set, never on the target.
pub fn logical_utterances(game: &ReferenceGame) -> UtteranceSpace {
    let mut seen = BTreeSet::new();
    let utterances = enumerate_bundles(&game.schema)
        .into_iter()
        .filter(|b| game.objects.iter().any(|o| b.subsumes(o)))
        .map(Utterance::logic)
        .filter(|u| seen.insert(u.text.clone()))
        .collect();
    UtteranceSpace {
        game_id: game.id.clone(),
        utterances,
    }
}

/// Normalizes generated candidates and drops surface duplicates, keeping the
/// best-ranked occurrence. Generations are (raw text, rank, score) with rank
/// 1 best.
pub fn ingest_topk(game_id: &str, generations: &[(String, usize, f64)]) -> UtteranceSpace {
    if generations.is_empty() {
        log::warn!("game {game_id}: empty top-k generation list");
    }
    let mut ranked: Vec<&(String, usize, f64)> = generations.iter().collect();
    ranked.sort_by_key(|(_, rank, _)| *rank);
    let mut seen = BTreeSet::new();
    let mut utterances = Vec::new();
    for (raw, rank, score) in ranked {
        let u = Utterance::topk(raw, *rank, *score);
        if u.text.is_empty() {
            log::warn!("game {game_id}: generation {rank} is empty after normalization");
            continue;
        }
        if seen.insert(u.text.clone()) {
            utterances.push(u);
        }
    }
    UtteranceSpace {
        game_id: game_id.to_string(),
        utterances,
    }
}
