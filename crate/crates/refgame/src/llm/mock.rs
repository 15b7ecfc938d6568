//! A seeded offline model. Token log-probabilities are hash-derived, so every
//! operation is a pure function of (seed, inputs); top-k generation draws
//! candidate texts from the furniture bundle realizations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::utterance::{enumerate_bundles, realize_bundle};
use crate::world::AttributeSchema;

use super::{Generation, LanguageModel, LlmError, ScoredSequence};

pub struct MockClient {
    seed: u64,
    constant_token_logprob: Option<f64>,
}

impl MockClient {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            constant_token_logprob: None,
        }
    }

    /// Every token gets probability `p` regardless of content; scoring a
    /// 4-token utterance then totals exactly 4·ln p.
    pub fn with_constant_token_prob(seed: u64, p: f64) -> Self {
        assert!(p > 0.0 && p <= 1.0, "token probability must be in (0, 1]");
        Self {
            seed,
            constant_token_logprob: Some(p.ln()),
        }
    }

    /// Hash of the seed and the given parts, mapped to [0, 1).
    fn unit(&self, parts: &[&[u8]]) -> f64 {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        for part in parts {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part);
        }
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes) as f64 / (u64::MAX as f64 + 1.0)
    }

    /// Tokens are whitespace words. Probabilities stay in [0.05, 0.95] so
    /// log-probabilities are finite and strictly negative.
    fn token_logprob(&self, context: &str, token: &str, index: usize) -> f64 {
        if let Some(lp) = self.constant_token_logprob {
            return lp;
        }
        let u = self.unit(&[
            b"token",
            context.as_bytes(),
            token.as_bytes(),
            &index.to_le_bytes(),
        ]);
        (0.05 + 0.9 * u).ln()
    }
}

impl LanguageModel for MockClient {
    fn model_id(&self) -> &str {
        "mock"
    }

    fn generate_topk(
        &self,
        context: &str,
        k: usize,
        starts: &[&str],
    ) -> Result<Vec<Generation>, LlmError> {
        let pool: Vec<String> = enumerate_bundles(&AttributeSchema::furniture())
            .iter()
            .map(realize_bundle)
            .collect();
        let mut candidates = Vec::new();
        for start in starts {
            let mut texts: Vec<String> = pool
                .iter()
                .map(|t| match t.strip_prefix("a ") {
                    Some(rest) => format!("{start} {rest}"),
                    None => t.clone(),
                })
                .collect();
            let shuffle_seed = self.unit(&[b"shuffle", context.as_bytes(), start.as_bytes()]);
            let mut rng = ChaCha8Rng::seed_from_u64((shuffle_seed * u64::MAX as f64) as u64);
            texts.shuffle(&mut rng);
            let take = k.min(texts.len());
            let mut picked: Vec<String> = texts.into_iter().take(take).collect();
            // A near-duplicate of the first pick exercises downstream dedup.
            if take >= 3 {
                picked[take - 1] = format!("{}.", picked[0]);
            }
            candidates.extend(picked);
        }
        let mut scored: Vec<(String, f64)> = candidates
            .into_iter()
            .map(|text| {
                let total = self.score_sequence(context, &text).map(|s| s.total_logprob);
                total.map(|t| (text, t))
            })
            .collect::<Result<_, _>>()?;
        scored.sort_by(|(ta, sa), (tb, sb)| sb.total_cmp(sa).then_with(|| ta.cmp(tb)));
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (text, total_logprob))| Generation {
                text,
                rank: i + 1,
                total_logprob,
            })
            .collect())
    }

    fn score_sequence(&self, context: &str, utterance: &str) -> Result<ScoredSequence, LlmError> {
        let token_logprobs = utterance
            .split_whitespace()
            .enumerate()
            .map(|(i, token)| self.token_logprob(context, token, i))
            .collect();
        Ok(ScoredSequence::new(utterance, token_logprobs))
    }

    fn yes_no_probability(&self, prompt: &str) -> Result<(f64, f64), LlmError> {
        let u = self.unit(&[b"yesno", prompt.as_bytes()]);
        // Yes and No deliberately sum to 0.9 so callers must normalize.
        let p_yes = (0.1 + 0.8 * u) * 0.9;
        let p_no = 0.9 - p_yes;
        Ok((p_yes, p_no))
    }
}
