//! LLM-driven event extraction: hierarchical prompts over the CAMEO
//! relation tree, entity linking with K-means batched merge prompts, and
//! a judge that scores extraction precision. Every model call goes through
//! a [`Transport`], so tests run on mock or replay transports.

pub mod hierarchy;
pub mod judge;
pub mod linking;
pub mod pipeline;
pub mod prompt;
pub mod transport;

use std::path::PathBuf;

pub use hierarchy::{Hierarchy, CAMEO_ROOTS, NO_SPECIFIC};
pub use judge::{evaluate_extraction, parse_judgement, Precision};
pub use linking::{link_entities, name_embedding, LinkMap, LinkReport, LinkingConfig};
pub use pipeline::{extract_corpus, extract_hierarchical, read_articles, CorpusExtraction, Extraction, ParsedEvent};
pub use prompt::{
    build_extraction_prompt, build_judge_prompt, build_linking_prompt, candidates, parse_extraction, prompt_hash,
    Article, Parsed, TargetEvent, Triple,
};
pub use transport::{
    HttpConfig, HttpTransport, MockTransport, RecordingTransport, ReplayTransport, Transport, TransportRegistry,
    TransportSettings,
};

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("relation hierarchy: {0}")]
    Hierarchy(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("level {level} prompts need a parent relation")]
    MissingParent { level: u8 },
    #[error("relation {0:?} has no children to refine into")]
    NoChildren(String),
    #[error("extraction level must be 1, 2 or 3, got {0}")]
    BadLevel(u8),
    #[error("transport {transport}: {reason}")]
    Transport { transport: String, reason: String },
    #[error("unknown transport {name:?}; known: {known}")]
    UnknownTransport { name: String, known: String },
    #[error("judge returned {got} verdicts for {expected} events")]
    MalformedJudgement { expected: usize, got: usize },
    #[error("judgement is not a boolean list: {0}")]
    JudgementSyntax(String),
    #[error("nothing to judge")]
    NoEvents,
    #[error("K must be between 1 and the number of entities ({entities}), got {k}")]
    InvalidK { k: usize, entities: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExtractError {
    fn transport(name: &str, reason: impl Into<String>) -> Self {
        ExtractError::Transport {
            transport: name.to_string(),
            reason: reason.into(),
        }
    }
}
