//! Complex-event identification: time-aware document features, density
//! clustering, supercluster splitting and split assignment.

mod features;
mod filter;
mod hdbscan;
mod io;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{AtomicEvent, CeTag, ComplexEvent, Dataset, Day, DocRef, EventError, NameTable, Vocab};

pub use features::time_aware_features;
pub use filter::{filter_and_split, split_boundaries, FilterConfig};
pub use hdbscan::{adjusted_rand_index, cluster_documents, Assignment, DensityParams};
pub use io::{
    read_doc_events, read_docs, read_embeddings, write_assignment, write_doc_events, write_docs, write_embeddings,
};
pub use split::{split_supercluster, SplitThresholds};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("reduced dimension {requested} exceeds embedding dimension {available}")]
    DimensionTooLarge { requested: usize, available: usize },
    #[error("no complex event landed in the training split")]
    EmptyTrain,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Event(#[from] EventError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocRecord {
    pub id: String,
    pub day: Day,
}

/// One extracted event with surface names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocEvent {
    pub doc_id: String,
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// Documents with one embedding row each and their extracted events.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub docs: Vec<DocRecord>,
    pub embeddings: Vec<Vec<f64>>,
    pub events: Vec<DocEvent>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Weight of the day-index feature.
    pub lambda: f64,
    pub min_cluster_size: usize,
    /// Core-distance neighbor count; `min_cluster_size` when absent.
    pub min_samples: Option<usize>,
    pub reduced_dim: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            min_cluster_size: 10,
            min_samples: None,
            reduced_dim: 200,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        if !(self.lambda >= 0.0) {
            return Err(BuildError::Invalid("cluster.lambda must be non-negative".into()));
        }
        if self.min_cluster_size < 2 {
            return Err(BuildError::Invalid("cluster.min_cluster_size must be at least 2".into()));
        }
        if self.min_samples == Some(0) {
            return Err(BuildError::Invalid("cluster.min_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn density(&self) -> DensityParams {
        DensityParams {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub cluster: ClusterConfig,
    pub split: SplitThresholds,
    pub filter: FilterConfig,
}

#[derive(Clone, Debug)]
pub struct BuildOutput {
    pub dataset: Dataset,
    /// Cluster label per document, in corpus order.
    pub assignment: Assignment,
}

/// Runs the whole pipeline. Entity and relation ids follow sorted name
/// order; the corpus span ends at the latest document day.
pub fn build_dataset(corpus: &Corpus, cfg: &BuildConfig, epoch: NaiveDate) -> Result<BuildOutput, BuildError> {
    cfg.cluster.validate()?;
    cfg.split.validate()?;
    if corpus.docs.len() != corpus.embeddings.len() {
        return Err(BuildError::Invalid(format!(
            "{} documents but {} embedding rows",
            corpus.docs.len(),
            corpus.embeddings.len()
        )));
    }
    let times: Vec<Day> = corpus.docs.iter().map(|d| d.day).collect();
    let features = time_aware_features(&corpus.embeddings, &times, cfg.cluster.lambda, cfg.cluster.reduced_dim)?;
    let assignment = cluster_documents(&features, cfg.cluster.density());

    let entity_names: BTreeSet<&str> = corpus
        .events
        .iter()
        .flat_map(|e| [e.subject.as_str(), e.object.as_str()])
        .collect();
    let relation_names: BTreeSet<&str> = corpus.events.iter().map(|e| e.relation.as_str()).collect();
    let entities = NameTable::from_names(entity_names)?;
    let relations = NameTable::from_names(relation_names)?;

    let doc_index: HashMap<&str, usize> = corpus.docs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    let mut per_cluster: BTreeMap<usize, Vec<AtomicEvent>> = BTreeMap::new();
    let mut outliers = Vec::new();
    for e in &corpus.events {
        let &i = doc_index
            .get(e.doc_id.as_str())
            .ok_or_else(|| BuildError::Invalid(format!("event refers to unknown document {:?}", e.doc_id)))?;
        let id = |t: &NameTable, n: &str| t.id(n).expect("name interned above");
        let ev = AtomicEvent::new(
            id(&entities, &e.subject),
            id(&relations, &e.relation),
            id(&entities, &e.object),
            corpus.docs[i].day,
            CeTag::Outlier,
        );
        match assignment[i] {
            Some(c) => per_cluster.entry(c).or_default().push(ev),
            None => outliers.push(ev),
        }
    }
    let mut ces = Vec::new();
    for (c, events) in per_cluster {
        let mut ce = ComplexEvent::from_events(c as u32, events);
        ce.label = format!("c{c}");
        ce.docs = corpus
            .docs
            .iter()
            .zip(&assignment)
            .filter(|(_, a)| **a == Some(c))
            .map(|(d, _)| DocRef {
                id: d.id.clone(),
                day: d.day,
            })
            .collect();
        ces.extend(split_supercluster(&ce, cfg.split));
    }
    let t_max = times.iter().copied().max().unwrap_or(0);
    let dataset = filter_and_split(ces, outliers, Vocab::new(entities, relations), t_max, epoch, &cfg.filter)?;
    Ok(BuildOutput { dataset, assignment })
}
