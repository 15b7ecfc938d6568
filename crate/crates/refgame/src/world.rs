//! Reference-game worlds: attribute schemas, fully-specified objects, and games.
//!
//! A world is a set of objects, each a total assignment of one feature per
//! schema attribute. A reference game singles out one object as the target.
//! Realization maps an object onto the fixed noun-phrase surface form
//! `a <size>, <colour> <type> facing <orientation>`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Attribute names the noun-phrase template knows about.
pub const ATTR_TYPE: &str = "type";
pub const ATTR_COLOUR: &str = "colour";
pub const ATTR_SIZE: &str = "size";
pub const ATTR_ORIENTATION: &str = "orientation";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("schema attribute name must be non-empty")]
    EmptyAttributeName,
    #[error("duplicate attribute '{0}' in schema")]
    DuplicateAttribute(String),
    #[error("attribute '{0}' has an empty feature domain")]
    EmptyDomain(String),
    #[error("duplicate feature '{feature}' in domain of attribute '{attribute}'")]
    DuplicateFeature { attribute: String, feature: String },
    #[error("schema mismatch: object has no value for attribute '{attribute}'")]
    MissingAttribute { attribute: String },
    #[error("object assigns unknown attribute '{attribute}'")]
    UnknownAttribute { attribute: String },
    #[error("feature '{feature}' not in domain of attribute '{attribute}'")]
    FeatureNotInDomain { attribute: String, feature: String },
}

/// One named attribute together with its ordered feature domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub features: Vec<String>,
}

impl Attribute {
    pub fn new(name: &str, features: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            features: features.iter().map(|f| f.to_string()).collect(),
        }
    }
}

/// An ordered list of attributes defining a world's vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
}

impl AttributeSchema {
    /// Builds a schema, checking name uniqueness and domain well-formedness.
    pub fn new(attributes: Vec<Attribute>) -> Result<Self, WorldError> {
        let mut seen = Vec::new();
        for attr in &attributes {
            if attr.name.is_empty() {
                return Err(WorldError::EmptyAttributeName);
            }
            if seen.contains(&&attr.name) {
                return Err(WorldError::DuplicateAttribute(attr.name.clone()));
            }
            seen.push(&attr.name);
            if attr.features.is_empty() {
                return Err(WorldError::EmptyDomain(attr.name.clone()));
            }
            for (i, f) in attr.features.iter().enumerate() {
                if attr.features[..i].contains(f) {
                    return Err(WorldError::DuplicateFeature {
                        attribute: attr.name.clone(),
                        feature: f.clone(),
                    });
                }
            }
        }
        Ok(Self { attributes })
    }

    /// The TUNA furniture domain: type, colour, size, orientation.
    pub fn furniture() -> Self {
        Self::new(vec![
            Attribute::new(ATTR_TYPE, &["chair", "sofa", "desk", "fan"]),
            Attribute::new(ATTR_COLOUR, &["blue", "red", "green", "grey"]),
            Attribute::new(ATTR_SIZE, &["large", "small"]),
            Attribute::new(ATTR_ORIENTATION, &["left", "right", "front", "back"]),
        ])
        .expect("furniture schema is well-formed")
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn contains_feature(&self, attribute: &str, feature: &str) -> bool {
        self.attribute(attribute)
            .map(|a| a.features.iter().any(|f| f == feature))
            .unwrap_or(false)
    }

    /// Number of distinct total assignments: the product over attribute
    /// domain sizes (furniture: 4*4*2*4 = 128).
    pub fn full_assignment_count(&self) -> u128 {
        self.attributes
            .iter()
            .map(|a| a.features.len() as u128)
            .product()
    }
}

/// A total assignment of one feature per schema attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectDescription {
    assignment: BTreeMap<String, String>,
}

impl ObjectDescription {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self {
            assignment: pairs
                .into_iter()
                .map(|(a, f)| (a.to_string(), f.to_string()))
                .collect(),
        }
    }

    pub fn feature(&self, attribute: &str) -> Option<&str> {
        self.assignment.get(attribute).map(String::as_str)
    }

    pub fn assignment(&self) -> &BTreeMap<String, String> {
        &self.assignment
    }

    /// Checks that the assignment is total over the schema and stays within
    /// each attribute's domain.
    pub fn validate(&self, schema: &AttributeSchema) -> Result<(), WorldError> {
        for attr in schema.attributes() {
            match self.assignment.get(&attr.name) {
                None => {
                    return Err(WorldError::MissingAttribute {
                        attribute: attr.name.clone(),
                    })
                }
                Some(f) if !attr.features.contains(f) => {
                    return Err(WorldError::FeatureNotInDomain {
                        attribute: attr.name.clone(),
                        feature: f.clone(),
                    })
                }
                Some(_) => {}
            }
        }
        for name in self.assignment.keys() {
            if schema.attribute(name).is_none() {
                return Err(WorldError::UnknownAttribute {
                    attribute: name.clone(),
                });
            }
        }
        Ok(())
    }
}

/// A set of objects plus one target index; the unit of evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceGame {
    pub id: String,
    pub schema: AttributeSchema,
    pub objects: Vec<ObjectDescription>,
    pub target_index: usize,
}

impl ReferenceGame {
    pub fn target(&self) -> &ObjectDescription {
        &self.objects[self.target_index]
    }
}

/// One broken game invariant; violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GameViolation {
    TooFewObjects {
        count: usize,
    },
    TargetIndexOutOfRange {
        index: usize,
        count: usize,
    },
    /// Another object has an assignment identical to the target's.
    TargetNotUnique {
        duplicate_index: usize,
    },
    MissingAttribute {
        object_index: usize,
        attribute: String,
    },
    UnknownAttribute {
        object_index: usize,
        attribute: String,
    },
    FeatureNotInDomain {
        object_index: usize,
        attribute: String,
        feature: String,
    },
}

impl fmt::Display for GameViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewObjects { count } => {
                write!(f, "game needs at least 2 objects, found {count}")
            }
            Self::TargetIndexOutOfRange { index, count } => {
                write!(f, "target index {index} out of range for {count} objects")
            }
            Self::TargetNotUnique { duplicate_index } => write!(
                f,
                "target not uniquely identifiable: object {duplicate_index} has an identical assignment"
            ),
            Self::MissingAttribute {
                object_index,
                attribute,
            } => write!(f, "object {object_index}: missing attribute '{attribute}'"),
            Self::UnknownAttribute {
                object_index,
                attribute,
            } => write!(f, "object {object_index}: unknown attribute '{attribute}'"),
            Self::FeatureNotInDomain {
                object_index,
                attribute,
                feature,
            } => write!(
                f,
                "object {object_index}: feature '{feature}' not in domain of attribute '{attribute}'"
            ),
        }
    }
}

/// Checks every game invariant; an empty report means the game is well-formed.
pub fn validate_game(game: &ReferenceGame) -> Vec<GameViolation> {
    let mut violations = Vec::new();
    if game.objects.len() < 2 {
        violations.push(GameViolation::TooFewObjects {
            count: game.objects.len(),
        });
    }
    for (i, obj) in game.objects.iter().enumerate() {
        match obj.validate(&game.schema) {
            Ok(()) => {}
            Err(WorldError::MissingAttribute { attribute }) => {
                violations.push(GameViolation::MissingAttribute {
                    object_index: i,
                    attribute,
                });
            }
            Err(WorldError::UnknownAttribute { attribute }) => {
                violations.push(GameViolation::UnknownAttribute {
                    object_index: i,
                    attribute,
                });
            }
            Err(WorldError::FeatureNotInDomain { attribute, feature }) => {
                violations.push(GameViolation::FeatureNotInDomain {
                    object_index: i,
                    attribute,
                    feature,
                });
            }
            Err(_) => unreachable!("object validation only raises object-level errors"),
        }
    }
    if game.target_index >= game.objects.len() {
        violations.push(GameViolation::TargetIndexOutOfRange {
            index: game.target_index,
            count: game.objects.len(),
        });
    } else {
        let target = &game.objects[game.target_index];
        for (i, obj) in game.objects.iter().enumerate() {
            if i != game.target_index && obj == target {
                violations.push(GameViolation::TargetNotUnique { duplicate_index: i });
            }
        }
    }
    violations
}

/// Instantiates `a <size>, <colour> <type> facing <orientation>` for a fully
/// specified object. Feature words are lowercased; the surface form is fixed
/// because downstream scoring is sensitive to the exact string.
pub fn realize_description(object: &ObjectDescription) -> Result<String, WorldError> {
    let get = |attr: &str| -> Result<String, WorldError> {
        object
            .feature(attr)
            .map(|f| f.to_lowercase())
            .ok_or(WorldError::MissingAttribute {
                attribute: attr.to_string(),
            })
    };
    let size = get(ATTR_SIZE)?;
    let colour = get(ATTR_COLOUR)?;
    let kind = get(ATTR_TYPE)?;
    let orientation = get(ATTR_ORIENTATION)?;
    Ok(format!("a {size}, {colour} {kind} facing {orientation}"))
}
