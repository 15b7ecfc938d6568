//! Meaning functions M(u, o) in [0, 1] and their evaluation harness.
//!
//! The rule-based function reads utterance words through a lexicon and
//! returns 0 exactly when some word names a feature the object contradicts;
//! words outside the lexicon carry no evidence. The prompt-based function
//! asks a model a Yes/No question and normalizes the two answer
//! probabilities. Evaluation compares binarized scores against labelled
//! pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::{LanguageModel, LlmError, PromptTemplate};
use crate::utterance::UtteranceSpace;
use crate::world::{
    realize_description, AttributeSchema, ObjectDescription, ReferenceGame, WorldError,
};

const FURNITURE_LEXICON: &str = include_str!("../assets/furniture_lexicon.tsv");

#[derive(Debug, Error)]
pub enum MeaningError {
    #[error("lexicon line {line}: {message}")]
    LexiconParse { line: usize, message: String },
    #[error("lexicon word '{word}' maps to '{feature}', which is not in the domain of attribute '{attribute}'")]
    LexiconFeatureUnknown {
        word: String,
        attribute: String,
        feature: String,
    },
    #[error("label line {line}: {message}")]
    LabelParse { line: usize, message: String },
    #[error("predicted and truth lengths differ ({predicted} vs {truth})")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("no labelled pairs to evaluate")]
    EmptyInput,
    #[error("scoring '{utterance}' against object {object} failed: {source}")]
    Scoring {
        utterance: String,
        object: String,
        source: LlmError,
    },
    #[error("Yes and No probabilities are both zero for '{utterance}'")]
    DegenerateAnswer { utterance: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The word → (attribute, feature) relation, synonyms included. A word may
/// carry several senses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    by_word: BTreeMap<String, Vec<(String, String)>>,
}

impl Lexicon {
    pub fn from_entries<'a>(
        entries: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    ) -> Self {
        let mut by_word: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        for (word, attribute, feature) in entries {
            let senses = by_word.entry(word.to_lowercase()).or_default();
            let sense = (attribute.to_string(), feature.to_string());
            if !senses.contains(&sense) {
                senses.push(sense);
            }
        }
        for senses in by_word.values_mut() {
            senses.sort();
        }
        Self { by_word }
    }

    /// Parses `word TAB attribute TAB feature` lines; `#` starts a comment.
    pub fn parse_tsv(text: &str) -> Result<Self, MeaningError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
                return Err(MeaningError::LexiconParse {
                    line: i + 1,
                    message: format!("expected 'word<TAB>attribute<TAB>feature', got '{line}'"),
                });
            }
            entries.push((fields[0].trim(), fields[1].trim(), fields[2].trim()));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn from_tsv_file(path: &Path) -> Result<Self, MeaningError> {
        Self::parse_tsv(&std::fs::read_to_string(path)?)
    }

    /// The shipped furniture lexicon: identity entries for every feature
    /// word plus the synonym set (forwards/backwards, tiny/big, table,
    /// couch, gray).
    pub fn furniture_default() -> Self {
        Self::parse_tsv(FURNITURE_LEXICON).expect("shipped lexicon parses")
    }

    /// One identity entry per feature word of the schema.
    pub fn identity_for_schema(schema: &AttributeSchema) -> Self {
        Self::from_entries(schema.attributes().iter().flat_map(|a| {
            a.features
                .iter()
                .map(move |f| (f.as_str(), a.name.as_str(), f.as_str()))
        }))
    }

    /// Checks every referenced (attribute, feature) against the schema.
    pub fn validate(&self, schema: &AttributeSchema) -> Result<(), MeaningError> {
        for (word, senses) in &self.by_word {
            for (attribute, feature) in senses {
                if !schema.contains_feature(attribute, feature) {
                    return Err(MeaningError::LexiconFeatureUnknown {
                        word: word.clone(),
                        attribute: attribute.clone(),
                        feature: feature.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn senses(&self, word: &str) -> &[(String, String)] {
        self.by_word.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (word, senses) in &self.by_word {
            for (attribute, feature) in senses {
                out.push_str(&format!("{word}\t{attribute}\t{feature}\n"));
            }
        }
        out
    }

    /// Content hash over the canonical (sorted) serialization.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_tsv().as_bytes());
        format!("{:x}", hasher.finalize())
    }
}

/// Lowercased alphanumeric words; punctuation separates.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// False exactly when some utterance word names, under any of its senses, a
/// feature the object contradicts. Words outside the lexicon are ignored, as
/// are senses for attributes the object does not carry.
pub fn rule_meaning(utterance: &str, object: &ObjectDescription, lexicon: &Lexicon) -> bool {
    for word in tokenize(utterance) {
        for (attribute, feature) in lexicon.senses(&word) {
            if let Some(actual) = object.feature(attribute) {
                if actual != feature {
                    return false;
                }
            }
        }
    }
    true
}

/// P(Yes) normalized over {Yes, No} for the rendered n-shot template.
pub fn prompt_meaning_with(
    utterance: &str,
    object: &ObjectDescription,
    client: &dyn LanguageModel,
    template: &PromptTemplate,
) -> Result<f64, MeaningError> {
    let description = realize_description(object)?;
    let scoring = |source| MeaningError::Scoring {
        utterance: utterance.to_string(),
        object: description.clone(),
        source,
    };
    let prompt = template
        .render(&[
            ("object_description", description.as_str()),
            ("utterance", utterance),
        ])
        .map_err(scoring)?;
    let (p_yes, p_no) = client.yes_no_probability(&prompt).map_err(scoring)?;
    let total = p_yes + p_no;
    if total <= 0.0 {
        return Err(MeaningError::DegenerateAnswer {
            utterance: utterance.to_string(),
        });
    }
    Ok(p_yes / total)
}

/// [`prompt_meaning_with`] using the shipped template for `shots` (3 or 6).
pub fn prompt_meaning(
    utterance: &str,
    object: &ObjectDescription,
    client: &dyn LanguageModel,
    shots: usize,
) -> Result<f64, MeaningError> {
    let template = PromptTemplate::mf_default(shots).map_err(|source| MeaningError::Scoring {
        utterance: utterance.to_string(),
        object: String::new(),
        source,
    })?;
    prompt_meaning_with(utterance, object, client, &template)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MfKind {
    Rule,
    Prompt,
}

impl fmt::Display for MfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rule => "rule",
            Self::Prompt => "prompt",
        })
    }
}

impl FromStr for MfKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(Self::Rule),
            "prompt" => Ok(Self::Prompt),
            other => Err(format!(
                "unknown meaning function '{other}' (expected rule or prompt)"
            )),
        }
    }
}

/// M(u, o) for one game: rows are the space's utterances, columns its
/// objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeaningMatrix {
    pub game_id: String,
    pub mf_kind: MfKind,
    pub template_hash: Option<String>,
    pub utterances: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl MeaningMatrix {
    pub fn object_count(&self) -> usize {
        self.values.first().map(Vec::len).unwrap_or(0)
    }
}

pub fn rule_matrix(
    game: &ReferenceGame,
    space: &UtteranceSpace,
    lexicon: &Lexicon,
) -> MeaningMatrix {
    let values = space
        .utterances
        .iter()
        .map(|u| {
            game.objects
                .iter()
                .map(|o| {
                    if rule_meaning(&u.text, o, lexicon) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    MeaningMatrix {
        game_id: game.id.clone(),
        mf_kind: MfKind::Rule,
        template_hash: None,
        utterances: space.texts().map(str::to_string).collect(),
        values,
    }
}

pub fn prompt_matrix(
    game: &ReferenceGame,
    space: &UtteranceSpace,
    client: &dyn LanguageModel,
    template: &PromptTemplate,
) -> Result<MeaningMatrix, MeaningError> {
    let mut values = Vec::with_capacity(space.utterances.len());
    for u in &space.utterances {
        let mut row = Vec::with_capacity(game.objects.len());
        for o in &game.objects {
            row.push(prompt_meaning_with(&u.text, o, client, template)?);
        }
        values.push(row);
    }
    Ok(MeaningMatrix {
        game_id: game.id.clone(),
        mf_kind: MfKind::Prompt,
        template_hash: Some(template.hash()),
        utterances: space.texts().map(str::to_string).collect(),
        values,
    })
}

/// 1 iff the score reaches the threshold (inclusive).
pub fn binarize(score: f64, threshold: f64) -> u8 {
    u8::from(score >= threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfEvalReport {
    pub threshold: Option<f64>,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

/// Accuracy, precision, and recall from binary predictions; ratios with zero
/// denominators are reported as absent rather than 0.
pub fn evaluate_mf(predicted: &[u8], truth: &[u8]) -> Result<MfEvalReport, MeaningError> {
    if predicted.len() != truth.len() {
        return Err(MeaningError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MeaningError::EmptyInput);
    }
    let (mut tp, mut fp, mut tn, mut fal_n) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fal_n += 1,
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(MfEvalReport {
        threshold: None,
        accuracy: (tp + tn) as f64 / predicted.len() as f64,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fal_n),
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fal_n,
    })
}

/// Tries every observed score as an inclusive threshold (plus 1.0) and
/// returns the accuracy-maximizing one, ties toward the smaller threshold.
pub fn sweep_threshold(scores: &[f64], truth: &[u8]) -> Result<(f64, MfEvalReport), MeaningError> {
    if scores.len() != truth.len() {
        return Err(MeaningError::LengthMismatch {
            predicted: scores.len(),
            truth: truth.len(),
        });
    }
    if scores.is_empty() {
        return Err(MeaningError::EmptyInput);
    }
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.push(1.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best: Option<(f64, MfEvalReport)> = None;
    for &t in &candidates {
        let predicted: Vec<u8> = scores.iter().map(|&s| binarize(s, t)).collect();
        let mut report = evaluate_mf(&predicted, truth)?;
        report.threshold = Some(t);
        let better = match &best {
            None => true,
            Some((_, b)) => report.accuracy > b.accuracy,
        };
        if better {
            best = Some((t, report));
        }
    }
    Ok(best.expect("at least one candidate threshold"))
}

/// One human-labelled (object, utterance) pair for MF evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledPair {
    pub object: ObjectDescription,
    pub utterance: String,
    pub label: u8,
}

/// Reads line-delimited labelled pairs, skipping blanks, `#` comments, and
/// metadata header lines.
pub fn read_labelled_pairs(reader: impl BufRead) -> Result<Vec<LabelledPair>, MeaningError> {
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if crate::corpus::is_metadata_line(&line) {
            continue;
        }
        let pair: LabelledPair =
            serde_json::from_str(&line).map_err(|e| MeaningError::LabelParse {
                line: i + 1,
                message: e.to_string(),
            })?;
        if pair.label > 1 {
            return Err(MeaningError::LabelParse {
                line: i + 1,
                message: format!("label must be 0 or 1, got {}", pair.label),
            });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obj(kind: &str, colour: &str, size: &str, orientation: &str) -> ObjectDescription {
        ObjectDescription::from_pairs([
            ("type", kind),
            ("colour", colour),
            ("size", size),
            ("orientation", orientation),
        ])
    }

    #[test]
    fn contradicting_colour_is_false() {
        let lex = Lexicon::furniture_default();
        let o = obj("chair", "grey", "large", "front");
        assert!(!rule_meaning("a green thing", &o, &lex));
        assert!(rule_meaning("a grey thing", &o, &lex));
    }

    #[test]
    fn synonyms_resolve_through_the_lexicon() {
        let lex = Lexicon::furniture_default();
        let o = obj("desk", "green", "small", "left");
        assert!(rule_meaning("a tiny green table", &o, &lex));
        assert!(!rule_meaning("a big green table", &o, &lex));
    }

    #[test]
    fn negation_is_misread_by_design() {
        // The rule function has no negation semantics: "not facing forwards"
        // still contradicts a back-facing chair because "forwards" maps to
        // front. This wrong answer is the documented behavior.
        let lex = Lexicon::furniture_default();
        let o = obj("chair", "grey", "small", "back");
        assert!(!rule_meaning(
            "the small grey chair that is not facing forwards",
            &o,
            &lex
        ));
    }

    #[test]
    fn unknown_words_carry_no_evidence() {
        let lex = Lexicon::furniture_default();
        let o = obj("fan", "blue", "large", "right");
        assert!(rule_meaning("a gorgeous futuristic fan", &o, &lex));
    }

    #[test]
    fn lexicon_rejects_out_of_schema_features() {
        let lex = Lexicon::from_entries([("purple", "colour", "purple")]);
        assert!(lex.validate(&AttributeSchema::furniture()).is_err());
        assert!(Lexicon::furniture_default()
            .validate(&AttributeSchema::furniture())
            .is_ok());
    }

    #[test]
    fn lexicon_parse_errors_name_the_line() {
        let err = Lexicon::parse_tsv("chair\ttype\tchair\nbroken line\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn lexicon_hash_is_content_stable() {
        let a = Lexicon::from_entries([("chair", "type", "chair"), ("red", "colour", "red")]);
        let b = Lexicon::from_entries([("red", "colour", "red"), ("chair", "type", "chair")]);
        assert_eq!(a.hash(), b.hash());
        assert_ne!(
            a.hash(),
            Lexicon::from_entries([("chair", "type", "chair")]).hash()
        );
    }

    struct FixedYesNo(f64, f64);

    impl LanguageModel for FixedYesNo {
        fn model_id(&self) -> &str {
            "fixed"
        }
        fn generate_topk(
            &self,
            _: &str,
            _: usize,
            _: &[&str],
        ) -> Result<Vec<crate::llm::Generation>, LlmError> {
            unimplemented!()
        }
        fn score_sequence(&self, _: &str, _: &str) -> Result<crate::llm::ScoredSequence, LlmError> {
            unimplemented!()
        }
        fn yes_no_probability(&self, _: &str) -> Result<(f64, f64), LlmError> {
            Ok((self.0, self.1))
        }
    }

    #[test]
    fn prompt_meaning_normalizes_yes_over_yes_plus_no() {
        let o = obj("desk", "red", "small", "front");
        let p = prompt_meaning("a red desk", &o, &FixedYesNo(0.9, 0.1), 3).unwrap();
        assert!((p - 0.9).abs() < 1e-12);
        let p = prompt_meaning("a red desk", &o, &FixedYesNo(0.2, 0.2), 6).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        assert!(prompt_meaning("a red desk", &o, &FixedYesNo(0.0, 0.0), 3).is_err());
    }

    #[test]
    fn binarization_is_inclusive() {
        assert_eq!(binarize(0.61, 0.6), 1);
        assert_eq!(binarize(0.79, 0.8), 0);
        assert_eq!(binarize(0.8, 0.8), 1);
    }

    #[test]
    fn evaluation_counts_and_undefined_ratios() {
        let all_ones = evaluate_mf(&[1, 1, 1], &[1, 1, 1]).unwrap();
        assert_eq!(all_ones.accuracy, 1.0);
        assert_eq!(all_ones.precision, Some(1.0));
        assert_eq!(all_ones.recall, Some(1.0));

        let all_missed = evaluate_mf(&[0, 0], &[1, 1]).unwrap();
        assert_eq!(all_missed.accuracy, 0.0);
        assert_eq!(all_missed.recall, Some(0.0));
        assert_eq!(all_missed.precision, None);

        assert!(evaluate_mf(&[1], &[1, 0]).is_err());
        assert!(evaluate_mf(&[], &[]).is_err());
    }

    #[test]
    fn threshold_sweep_prefers_the_smallest_winning_threshold() {
        let (t, report) = sweep_threshold(&[0.1, 0.9], &[0, 1]).unwrap();
        assert_eq!(t, 0.9);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.threshold, Some(0.9));

        // Identical scores: the observed value itself wins for an all-1
        // majority.
        let (t, report) = sweep_threshold(&[0.4, 0.4, 0.4], &[1, 1, 0]).unwrap();
        assert_eq!(t, 0.4);
        assert!((report.accuracy - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rule_matrix_is_zero_one_valued() {
        let game = ReferenceGame {
            id: "g".into(),
            schema: AttributeSchema::furniture(),
            objects: vec![
                obj("chair", "blue", "large", "left"),
                obj("desk", "red", "small", "front"),
            ],
            target_index: 0,
        };
        let space = crate::utterance::logical_utterances(&game);
        let m = rule_matrix(&game, &space, &Lexicon::furniture_default());
        assert_eq!(m.values.len(), space.utterances.len());
        assert!(m.values.iter().flatten().all(|&v| v == 0.0 || v == 1.0));
        // Every utterance in the logic space is true of at least one object.
        assert!(m.values.iter().all(|row| row.contains(&1.0)));
    }

    proptest! {
        // An object's own description never contradicts it.
        #[test]
        fn own_description_is_always_true(
            t in 0usize..4, c in 0usize..4, s in 0usize..2, r in 0usize..4,
        ) {
            let schema = AttributeSchema::furniture();
            let pick = |name: &str, i: usize| schema.attribute(name).unwrap().features[i].clone();
            let o = obj(&pick("type", t), &pick("colour", c), &pick("size", s), &pick("orientation", r));
            let text = realize_description(&o).unwrap();
            prop_assert!(rule_meaning(&text, &o, &Lexicon::furniture_default()));
        }

        // The best sweep accuracy matches a dense grid scan.
        #[test]
        fn sweep_matches_grid_scan(
            pairs in proptest::collection::vec((0.0f64..=1.0, 0u8..=1), 1..40),
        ) {
            let scores: Vec<f64> = pairs.iter().map(|(s, _)| *s).collect();
            let truth: Vec<u8> = pairs.iter().map(|(_, t)| *t).collect();
            let (_, report) = sweep_threshold(&scores, &truth).unwrap();
            let grid_best = (0..=1000)
                .map(|i| i as f64 / 1000.0)
                .map(|t| {
                    let predicted: Vec<u8> = scores.iter().map(|&s| binarize(s, t)).collect();
                    evaluate_mf(&predicted, &truth).unwrap().accuracy
                })
                .fold(0.0f64, f64::max);
            prop_assert!(report.accuracy >= grid_best - 1e-12);
        }
    }
}
