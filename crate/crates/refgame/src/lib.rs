//! Reference-game pragmatics toolkit.
//!
//! The pipeline turns referring-expression worlds into scored utterance sets:
//!
//! 1. [`world`] / [`corpus`]: attribute schemas, objects, reference games,
//!    TUNA ingestion and synthetic world generation.
//! 2. [`utterance`]: utterance-space construction, both exhaustive logical
//!    alternatives over feature bundles and ingested LLM top-k output.
//! 3. [`meaning`]: rule-based and prompt-based meaning functions
//!    `M(u, o) -> [0, 1]`, with an evaluation harness against labelled data.
//! 4. [`rsa`]: the literal listener and pragmatic speaker recursion over a
//!    meaning matrix.
//! 5. [`llm`]: generation, retroactive sequence scoring, and Yes/No
//!    probability queries against an OpenAI-compatible endpoint, with a
//!    deterministic mock for offline runs.
//! 6. [`analysis`]: score records, Pearson/Spearman correlation reports,
//!    alpha sweeps, and SVG plot emission.

pub mod analysis;
pub mod corpus;
pub mod llm;
pub mod meaning;
pub mod rsa;
pub mod utterance;
pub mod world;
