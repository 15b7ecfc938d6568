//! Corpus handling: TUNA trial ingestion, canonical line-delimited
//! persistence, and synthetic world generation.
//!
//! A trial is a set of entities with named attribute/value pairs. Each trial
//! expands into one game per object-as-target, so a 7-object trial yields 7
//! games; the trial's own target marker is ignored. Only the four furniture
//! attributes are read, everything else (spatial coordinates, role markers)
//! is tolerated and dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::world::{validate_game, AttributeSchema, ObjectDescription, ReferenceGame};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed XML: {message}")]
    Xml { message: String },
    #[error("trial has no ID attribute")]
    MissingTrialId,
    #[error("trial '{trial_id}' contains no entities")]
    EmptyTrial { trial_id: String },
    #[error("trial '{trial_id}', entity '{entity}': missing attribute '{attribute}'")]
    MissingAttribute {
        trial_id: String,
        entity: String,
        attribute: String,
    },
    #[error("game '{game_id}' is invalid: {violations}")]
    InvalidGame { game_id: String, violations: String },
    #[error("duplicate game id '{0}'")]
    DuplicateGameId(String),
    #[error(
        "{requested} objects requested but the schema only has {available} distinct assignments"
    )]
    Capacity { requested: usize, available: u128 },
    #[error("corpus line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<CorpusError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<quick_xml::Error> for CorpusError {
    fn from(e: quick_xml::Error) -> Self {
        Self::Xml {
            message: e.to_string(),
        }
    }
}

/// True for lines the line-delimited readers skip: blanks, `#` comments, and
/// the manifest header every pipeline output starts with.
pub fn is_metadata_line(line: &str) -> bool {
    let line = line.trim_start();
    line.is_empty() || line.starts_with('#') || line.starts_with("{\"_manifest\"")
}

/// Where a game came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub source_file: String,
    pub trial_id: String,
}

/// Canonical persisted form of one game; field order is fixed for
/// byte-stable output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CorpusRecord {
    game_id: String,
    schema: AttributeSchema,
    objects: Vec<ObjectDescription>,
    target_index: usize,
    source_file: String,
    trial_id: String,
}

/// Validated games plus per-game source metadata, aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    games: Vec<ReferenceGame>,
    meta: Vec<SourceMeta>,
}

impl Corpus {
    /// Enforces the corpus invariants: unique game ids and every game
    /// passing validation.
    pub fn new(games: Vec<ReferenceGame>, meta: Vec<SourceMeta>) -> Result<Self, CorpusError> {
        assert_eq!(games.len(), meta.len(), "games and metadata must align");
        let mut ids = BTreeSet::new();
        for game in &games {
            if !ids.insert(game.id.clone()) {
                return Err(CorpusError::DuplicateGameId(game.id.clone()));
            }
            let violations = validate_game(game);
            if !violations.is_empty() {
                return Err(CorpusError::InvalidGame {
                    game_id: game.id.clone(),
                    violations: violations
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join("; "),
                });
            }
        }
        Ok(Self { games, meta })
    }

    pub fn empty() -> Self {
        Self {
            games: Vec::new(),
            meta: Vec::new(),
        }
    }

    pub fn games(&self) -> &[ReferenceGame] {
        &self.games
    }

    pub fn meta(&self) -> &[SourceMeta] {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    /// One JSON record per game, fixed field order, byte-stable.
    pub fn write_jsonl(&self, mut writer: impl Write) -> Result<(), CorpusError> {
        for (game, meta) in self.games.iter().zip(&self.meta) {
            let record = CorpusRecord {
                game_id: game.id.clone(),
                schema: game.schema.clone(),
                objects: game.objects.clone(),
                target_index: game.target_index,
                source_file: meta.source_file.clone(),
                trial_id: meta.trial_id.clone(),
            };
            let line = serde_json::to_string(&record).expect("corpus records serialize");
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, CorpusError> {
        let mut games = Vec::new();
        let mut meta = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if is_metadata_line(&line) {
                continue;
            }
            let record: CorpusRecord =
                serde_json::from_str(&line).map_err(|e| CorpusError::Record {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            games.push(ReferenceGame {
                id: record.game_id,
                schema: record.schema,
                objects: record.objects,
                target_index: record.target_index,
            });
            meta.push(SourceMeta {
                source_file: record.source_file,
                trial_id: record.trial_id,
            });
        }
        Self::new(games, meta)
    }

    /// Hash of the canonical serialization; identifies the corpus in run
    /// manifests.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::new();
        self.write_jsonl(&mut bytes).expect("writing to memory");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        format!("{:x}", hasher.finalize())
    }

    pub fn stats(&self) -> CorpusStats {
        let trials: BTreeSet<&str> = self.meta.iter().map(|m| m.trial_id.as_str()).collect();
        let mut feature_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        let mut objects = 0usize;
        for game in &self.games {
            objects += game.objects.len();
            for object in &game.objects {
                for (attribute, feature) in object.assignment() {
                    *feature_counts
                        .entry(attribute.clone())
                        .or_default()
                        .entry(feature.clone())
                        .or_default() += 1;
                }
            }
        }
        CorpusStats {
            games: self.games.len(),
            trials: trials.len(),
            objects,
            feature_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub games: usize,
    pub trials: usize,
    pub objects: usize,
    pub feature_counts: BTreeMap<String, BTreeMap<String, usize>>,
}

fn attr_map(start: &BytesStart<'_>) -> Result<BTreeMap<String, String>, CorpusError> {
    let mut map = BTreeMap::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| CorpusError::Xml {
            message: e.to_string(),
        })?;
        let key = String::from_utf8_lossy(attr.key.local_name().as_ref()).to_uppercase();
        let value = attr
            .unescape_value()
            .map_err(|e| CorpusError::Xml {
                message: e.to_string(),
            })?
            .into_owned();
        map.insert(key, value);
    }
    Ok(map)
}

/// Parses one TUNA trial document into one game per object-as-target.
/// Game ids are `<trial-id>#<object-index>`.
pub fn parse_tuna_trial(document: &str) -> Result<Vec<ReferenceGame>, CorpusError> {
    let mut reader = Reader::from_str(document);
    reader.config_mut().trim_text(true);

    let mut trial_id: Option<String> = None;
    let mut entities: Vec<(String, BTreeMap<String, String>)> = Vec::new();
    let mut current: Option<(String, BTreeMap<String, String>)> = None;

    loop {
        let event = reader.read_event()?;
        match &event {
            Event::Start(e) | Event::Empty(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).to_uppercase();
                match name.as_str() {
                    "TRIAL" => {
                        trial_id = attr_map(e)?.remove("ID");
                    }
                    "ENTITY" => {
                        let label = attr_map(e)?
                            .remove("ID")
                            .unwrap_or_else(|| format!("entity {}", entities.len()));
                        let started = (label, BTreeMap::new());
                        if matches!(event, Event::Empty(_)) {
                            entities.push(started);
                        } else {
                            current = Some(started);
                        }
                    }
                    "ATTRIBUTE" => {
                        if let Some((_, attrs)) = current.as_mut() {
                            let mut fields = attr_map(e)?;
                            if let (Some(name), Some(value)) =
                                (fields.remove("NAME"), fields.remove("VALUE"))
                            {
                                attrs.insert(name.to_lowercase(), value.to_lowercase());
                            }
                        }
                    }
                    _ => {}
                }
            }
            Event::End(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).to_uppercase();
                if name == "ENTITY" {
                    if let Some(done) = current.take() {
                        entities.push(done);
                    }
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }

    let trial_id = trial_id.ok_or(CorpusError::MissingTrialId)?;
    if entities.is_empty() {
        return Err(CorpusError::EmptyTrial { trial_id });
    }

    let schema = AttributeSchema::furniture();
    let mut objects = Vec::with_capacity(entities.len());
    for (label, attrs) in &entities {
        let mut assignment = Vec::new();
        for attr in schema.attributes() {
            match attrs.get(&attr.name) {
                Some(value) => assignment.push((attr.name.as_str(), value.as_str())),
                None => {
                    return Err(CorpusError::MissingAttribute {
                        trial_id: trial_id.clone(),
                        entity: label.clone(),
                        attribute: attr.name.clone(),
                    })
                }
            }
        }
        objects.push(ObjectDescription::from_pairs(assignment));
    }

    Ok((0..objects.len())
        .map(|target_index| ReferenceGame {
            id: format!("{trial_id}#{target_index}"),
            schema: schema.clone(),
            objects: objects.clone(),
            target_index,
        })
        .collect())
}

/// Per-file problems collected in skip-bad mode.
#[derive(Debug)]
pub struct CorpusLoad {
    pub corpus: Corpus,
    pub skipped: Vec<(PathBuf, String)>,
}

/// Loads every `.xml` file under the directory, lexicographically by path,
/// expanding trials into games. With `skip_bad`, files that fail to parse or
/// validate are collected instead of aborting the load.
pub fn load_corpus(dir: &Path, skip_bad: bool) -> Result<CorpusLoad, CorpusError> {
    let mut paths: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.file_type().is_file())
        .map(|entry| entry.into_path())
        .filter(|path| {
            path.extension()
                .map(|ext| ext.eq_ignore_ascii_case("xml"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        log::warn!("no trial files under {}", dir.display());
    }

    let mut games = Vec::new();
    let mut meta = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let result = load_trial_file(&path);
        match result {
            Ok(trial_games) => {
                for game in trial_games {
                    let trial_id = game
                        .id
                        .rsplit_once('#')
                        .map(|(t, _)| t.to_string())
                        .unwrap_or_else(|| game.id.clone());
                    meta.push(SourceMeta {
                        source_file: path.to_string_lossy().into_owned(),
                        trial_id,
                    });
                    games.push(game);
                }
            }
            Err(e) if skip_bad => skipped.push((path, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let corpus = Corpus::new(games, meta)?;
    log::info!(
        "loaded {} games ({} objects) from {}",
        corpus.len(),
        corpus.stats().objects,
        dir.display()
    );
    Ok(CorpusLoad { corpus, skipped })
}

fn load_trial_file(path: &Path) -> Result<Vec<ReferenceGame>, CorpusError> {
    let in_file = |source: CorpusError| CorpusError::InFile {
        path: path.to_path_buf(),
        source: Box::new(source),
    };
    let document = std::fs::read_to_string(path).map_err(|e| in_file(e.into()))?;
    let games = parse_tuna_trial(&document).map_err(in_file)?;
    for game in &games {
        let violations = validate_game(game);
        if !violations.is_empty() {
            return Err(in_file(CorpusError::InvalidGame {
                game_id: game.id.clone(),
                violations: violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            }));
        }
    }
    Ok(games)
}

/// All full assignments of the schema in deterministic odometer order (last
/// attribute fastest).
pub fn enumerate_objects(schema: &AttributeSchema) -> Vec<ObjectDescription> {
    let mut partial: Vec<Vec<(&str, &str)>> = vec![Vec::new()];
    for attr in schema.attributes() {
        let mut next = Vec::with_capacity(partial.len() * attr.features.len());
        for assignment in &partial {
            for feature in &attr.features {
                let mut grown = assignment.clone();
                grown.push((attr.name.as_str(), feature.as_str()));
                next.push(grown);
            }
        }
        partial = next;
    }
    partial
        .into_iter()
        .map(ObjectDescription::from_pairs)
        .collect()
}

/// Pseudo-random games with distinct objects, reproducible from the seed.
/// Trial ids follow `syn-s<seed>-g<index>`.
pub fn generate_synthetic(
    seed: u64,
    schema: &AttributeSchema,
    n_objects: usize,
    n_games: usize,
) -> Result<Corpus, CorpusError> {
    let available = schema.full_assignment_count();
    if n_objects as u128 > available {
        return Err(CorpusError::Capacity {
            requested: n_objects,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Small schemas are enumerated and sampled without replacement; large
    // ones fall back to rejection sampling over random assignments.
    let pool = if available <= 65_536 {
        Some(enumerate_objects(schema))
    } else {
        None
    };
    let mut games = Vec::with_capacity(n_games);
    let mut meta = Vec::with_capacity(n_games);
    for g in 0..n_games {
        let objects: Vec<ObjectDescription> = match &pool {
            Some(pool) => rand::seq::index::sample(&mut rng, pool.len(), n_objects)
                .iter()
                .map(|i| pool[i].clone())
                .collect(),
            None => {
                let mut picked: Vec<ObjectDescription> = Vec::with_capacity(n_objects);
                while picked.len() < n_objects {
                    let candidate = ObjectDescription::from_pairs(
                        schema
                            .attributes()
                            .iter()
                            .map(|a| {
                                let i = rng.random_range(0..a.features.len());
                                (a.name.as_str(), a.features[i].as_str())
                            })
                            .collect::<Vec<_>>(),
                    );
                    if !picked.contains(&candidate) {
                        picked.push(candidate);
                    }
                }
                picked
            }
        };
        let target_index = rng.random_range(0..n_objects);
        let trial_id = format!("syn-s{seed}-g{g:04}");
        games.push(ReferenceGame {
            id: format!("{trial_id}#{target_index}"),
            schema: schema.clone(),
            objects,
            target_index,
        });
        meta.push(SourceMeta {
            source_file: "synthetic".into(),
            trial_id,
        });
    }
    Corpus::new(games, meta)
}
