//! Prompt templates with named placeholders and stable content hashes.
//!
//! Templates are plain text files; `{name}` marks a placeholder. Shipped
//! defaults cover top-k generation and the 3/6-shot Yes/No meaning prompts.
//! Every run records template hashes so prompts are auditable.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::world::{realize_description, ReferenceGame};

use super::LlmError;

const TOPK_DEFAULT: &str = include_str!("../../assets/templates/topk_prompt.txt");
const MF_3SHOT_DEFAULT: &str = include_str!("../../assets/templates/mf_3shot.txt");
const MF_6SHOT_DEFAULT: &str = include_str!("../../assets/templates/mf_6shot.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    text: String,
}

impl PromptTemplate {
    pub fn new(name: &str, text: &str) -> Self {
        Self {
            name: name.to_string(),
            text: text.to_string(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "template".to_string());
        Ok(Self { name, text })
    }

    /// The shipped top-k generation prompt (world context, marked target,
    /// minimal-words instruction).
    pub fn topk_default() -> Self {
        Self::new("topk_prompt", TOPK_DEFAULT)
    }

    /// The shipped n-shot Yes/No meaning prompt; `shots` is 3 or 6.
    pub fn mf_default(shots: usize) -> Result<Self, LlmError> {
        match shots {
            3 => Ok(Self::new("mf_3shot", MF_3SHOT_DEFAULT)),
            6 => Ok(Self::new("mf_6shot", MF_6SHOT_DEFAULT)),
            other => Err(LlmError::Template(format!(
                "no shipped meaning template for {other} shots (have 3 and 6)"
            ))),
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.text.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    /// Substitutes `{name}` placeholders. Any placeholder left unresolved
    /// after substitution is an error.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, LlmError> {
        let mut out = self.text.clone();
        for (name, value) in vars {
            out = out.replace(&format!("{{{name}}}"), value);
        }
        if let Some(placeholder) = find_placeholder(&out) {
            return Err(LlmError::Template(format!(
                "unresolved placeholder '{{{placeholder}}}' in template '{}'",
                self.name
            )));
        }
        Ok(out)
    }
}

fn find_placeholder(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(end) = text[i + 1..].find(['}', '{']) {
                let inner = &text[i + 1..i + 1 + end];
                if text.as_bytes()[i + 1 + end] == b'}'
                    && !inner.is_empty()
                    && inner
                        .chars()
                        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
                {
                    return Some(inner);
                }
                i += 1 + end;
                continue;
            }
        }
        i += 1;
    }
    None
}

/// Renders the generation prompt for a game: a numbered object list with the
/// target marked, plus the task instruction. Bit-identical for identical
/// inputs.
pub fn render_context(game: &ReferenceGame, template: &PromptTemplate) -> Result<String, LlmError> {
    let mut lines = Vec::with_capacity(game.objects.len());
    for (i, object) in game.objects.iter().enumerate() {
        let description = realize_description(object)
            .map_err(|e| LlmError::Template(format!("game {}, object {i}: {e}", game.id)))?;
        let marker = if i == game.target_index {
            " <- the target"
        } else {
            ""
        };
        lines.push(format!("{}. {description}{marker}", i + 1));
    }
    let world_description = lines.join("\n");
    let target_index = (game.target_index + 1).to_string();
    let target_description = realize_description(game.target())
        .map_err(|e| LlmError::Template(format!("game {}, target: {e}", game.id)))?;
    template.render(&[
        ("world_description", &world_description),
        ("target_index", &target_index),
        ("target_description", &target_description),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{AttributeSchema, ObjectDescription};

    fn sample_game() -> ReferenceGame {
        let obj = |t: &str, c: &str, s: &str, o: &str| {
            ObjectDescription::from_pairs([
                ("type", t),
                ("colour", c),
                ("size", s),
                ("orientation", o),
            ])
        };
        ReferenceGame {
            id: "g".into(),
            schema: AttributeSchema::furniture(),
            objects: vec![
                obj("chair", "blue", "large", "left"),
                obj("desk", "red", "small", "front"),
                obj("fan", "green", "small", "back"),
            ],
            target_index: 1,
        }
    }

    #[test]
    fn renders_placeholders() {
        let t = PromptTemplate::new("t", "x {a} y {b}");
        assert_eq!(t.render(&[("a", "1"), ("b", "2")]).unwrap(), "x 1 y 2");
    }

    #[test]
    fn unresolved_placeholder_is_an_error() {
        let t = PromptTemplate::new("t", "x {missing} y");
        let err = t.render(&[]).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn braces_that_are_not_placeholders_pass() {
        let t = PromptTemplate::new("t", "set {1, 2} and {A} and {}");
        assert!(t.render(&[]).is_ok());
    }

    #[test]
    fn hash_is_stable_and_text_sensitive() {
        let a = PromptTemplate::new("a", "same text");
        let b = PromptTemplate::new("b", "same text");
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), PromptTemplate::new("a", "other text").hash());
    }

    #[test]
    fn context_is_deterministic_and_complete() {
        let game = sample_game();
        let template = PromptTemplate::topk_default();
        let once = render_context(&game, &template).unwrap();
        let twice = render_context(&game, &template).unwrap();
        assert_eq!(once, twice);
        for object in &game.objects {
            let d = realize_description(object).unwrap();
            assert_eq!(
                once.matches(&d).count(),
                1,
                "{d} should appear exactly once"
            );
        }
        assert!(once.contains("as few words as possible"));
        assert!(once.contains("2. a small, red desk facing front <- the target"));
    }

    #[test]
    fn shipped_meaning_templates_resolve() {
        for shots in [3, 6] {
            let t = PromptTemplate::mf_default(shots).unwrap();
            let rendered = t
                .render(&[
                    ("object_description", "a small, red desk facing front"),
                    ("utterance", "a red desk"),
                ])
                .unwrap();
            assert!(rendered.ends_with("Answer:"));
            // Odd shot counts give the extra example to Yes.
            assert_eq!(rendered.matches("Answer: Yes").count(), shots.div_ceil(2));
            assert_eq!(rendered.matches("Answer: No").count(), shots / 2);
        }
        assert!(PromptTemplate::mf_default(4).is_err());
    }
}
