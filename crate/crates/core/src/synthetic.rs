//! Seeded synthetic corpora used by tests, the acceptance suite and the
//! `synth` command.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::builder::{Corpus, DocEvent, DocRecord};
use crate::event::{AtomicEvent, CeTag, Dataset, Day, EventError, Split, Vocab};
use crate::seed::rng_for;

/// Parameters of the modular-rule corpus where every event satisfies
/// `object = (subject + relation) mod entities`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModularSpec {
    pub entities: usize,
    pub relations: usize,
    pub timestamps: u32,
    /// Random events per CE per day; `None` emits every (subject, relation)
    /// pair each day.
    pub events_per_day: Option<usize>,
}

impl Default for ModularSpec {
    fn default() -> Self {
        Self {
            entities: 12,
            relations: 3,
            timestamps: 20,
            events_per_day: None,
        }
    }
}

/// Three CEs spanning the same days, one per split (train, val, test).
pub fn modular_dataset(spec: ModularSpec, seed: u64) -> Result<Dataset, EventError> {
    let mut rng = rng_for(seed, "synthetic.modular");
    let n = spec.entities as u32;
    let mut per_split: [(Split, Vec<AtomicEvent>); 3] =
        [(Split::Train, vec![]), (Split::Val, vec![]), (Split::Test, vec![])];
    for (ce, (_, events)) in per_split.iter_mut().enumerate() {
        for t in 0..spec.timestamps {
            let pairs: Vec<(u32, u32)> = match spec.events_per_day {
                Some(k) => (0..k)
                    .map(|_| (rng.random_range(0..n), rng.random_range(0..spec.relations as u32)))
                    .collect(),
                None => (0..n)
                    .flat_map(|s| (0..spec.relations as u32).map(move |r| (s, r)))
                    .collect(),
            };
            for (s, r) in pairs {
                events.push(AtomicEvent::new(s, r, (s + r) % n, t, CeTag::Ce(ce as u32)));
            }
        }
    }
    Dataset::from_split_events(
        Vocab::anonymous(spec.entities, spec.relations),
        per_split,
        vec![],
        Dataset::default_epoch(),
    )
}

/// Parameters of the corpus where each CE follows its own rule
/// `object = (subject + relation + offset_c) mod entities` while a larger
/// stream of outlier events follows the offset-0 rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContradictionSpec {
    pub entities: usize,
    pub relations: usize,
    /// Subjects `0..subjects` take part in every CE.
    pub subjects: usize,
    pub ces: usize,
    pub ce_days: u32,
    /// Days between consecutive CE starts.
    pub stagger: u32,
    /// Copies of the majority rule emitted as outliers per day.
    pub outlier_copies: usize,
}

impl Default for ContradictionSpec {
    fn default() -> Self {
        Self {
            entities: 24,
            relations: 3,
            subjects: 4,
            ces: 20,
            ce_days: 8,
            stagger: 2,
            outlier_copies: 2,
        }
    }
}

/// CEs are assigned to splits chronologically: the first 60% train, the
/// next 20% val, the rest test.
pub fn contradiction_dataset(spec: ContradictionSpec, seed: u64) -> Result<Dataset, EventError> {
    let mut rng = rng_for(seed, "synthetic.contradiction");
    let n = spec.entities as u32;
    let mut offsets: Vec<u32> = (1..n).collect();
    offsets.shuffle(&mut rng);
    let n_train = spec.ces * 3 / 5;
    let n_val = spec.ces / 5;
    let mut per_split: [(Split, Vec<AtomicEvent>); 3] =
        [(Split::Train, vec![]), (Split::Val, vec![]), (Split::Test, vec![])];
    let mut last_day: Day = 0;
    for c in 0..spec.ces {
        let k = offsets[c % offsets.len()];
        let start = c as u32 * spec.stagger;
        let slot = if c < n_train {
            0
        } else if c < n_train + n_val {
            1
        } else {
            2
        };
        for t in start..start + spec.ce_days {
            last_day = last_day.max(t);
            for s in 0..spec.subjects as u32 {
                for r in 0..spec.relations as u32 {
                    per_split[slot]
                        .1
                        .push(AtomicEvent::new(s, r, (s + r + k) % n, t, CeTag::Ce(c as u32)));
                }
            }
        }
    }
    let mut outliers = Vec::new();
    for t in 0..=last_day {
        for _ in 0..spec.outlier_copies {
            for s in 0..spec.subjects as u32 {
                for r in 0..spec.relations as u32 {
                    outliers.push(AtomicEvent::new(s, r, (s + r) % n, t, CeTag::Outlier));
                }
            }
        }
    }
    Dataset::from_split_events(
        Vocab::anonymous(spec.entities, spec.relations),
        per_split,
        outliers,
        Dataset::default_epoch(),
    )
}

/// Labelled points for clustering checks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlobCorpus {
    pub embeddings: Vec<Vec<f64>>,
    pub times: Vec<Day>,
    /// Generative label per point when time is taken into account.
    pub labels: Vec<Option<usize>>,
    /// Generative label per point from semantics alone.
    pub semantic_labels: Vec<Option<usize>>,
}

fn gaussian_rows(center: &[f64], sigma: f64, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    (0..n)
        .map(|_| center.iter().map(|c| c + normal.sample(rng)).collect())
        .collect()
}

/// Two blobs of 50 points (sigma 0.1, centers 10 apart) in 5 dimensions,
/// days drawn from `0..30`.
pub fn two_blob_corpus(seed: u64) -> BlobCorpus {
    let mut rng = rng_for(seed, "synthetic.two_blob");
    let mut out = BlobCorpus {
        embeddings: vec![],
        times: vec![],
        labels: vec![],
        semantic_labels: vec![],
    };
    for b in 0..2 {
        let center = [10.0 * b as f64, 0.0, 0.0, 0.0, 0.0];
        out.embeddings.extend(gaussian_rows(&center, 0.1, 50, &mut rng));
        for _ in 0..50 {
            out.times.push(rng.random_range(0..30));
            out.labels.push(Some(b));
            out.semantic_labels.push(Some(b));
        }
    }
    out
}

/// Two semantic blobs, each active in two phases a thousand days apart.
/// With a unit time weight the four (blob, phase) groups separate; without
/// it only the two blobs do.
pub fn four_blob_corpus(seed: u64) -> BlobCorpus {
    let mut rng = rng_for(seed, "synthetic.four_blob");
    let mut out = BlobCorpus {
        embeddings: vec![],
        times: vec![],
        labels: vec![],
        semantic_labels: vec![],
    };
    for b in 0..2 {
        let center = [10.0 * b as f64, 0.0, 0.0, 0.0, 0.0];
        for phase in 0..2 {
            out.embeddings.extend(gaussian_rows(&center, 0.5, 40, &mut rng));
            for _ in 0..40 {
                out.times.push(1000 * phase + rng.random_range(0..3));
                out.labels.push(Some(2 * b + phase as usize));
                out.semantic_labels.push(Some(b));
            }
        }
    }
    out
}

/// Shape of the synthetic news corpus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DocCorpusSpec {
    pub topics: usize,
    pub docs_per_topic: usize,
    pub events_per_doc: usize,
    /// Topic-free documents whose events become outliers.
    pub noise_docs: usize,
    pub entities: usize,
    pub relations: usize,
    pub dim: usize,
    pub days: u32,
    /// Days a topic stays active.
    pub topic_days: u32,
}

impl Default for DocCorpusSpec {
    fn default() -> Self {
        Self {
            topics: 40,
            docs_per_topic: 24,
            events_per_doc: 2,
            noise_docs: 60,
            entities: 30,
            relations: 5,
            dim: 8,
            days: 4 * 365,
            topic_days: 6,
        }
    }
}

/// Topic documents share an embedding center and a short active window, and
/// their events follow a topic-specific rule
/// `object = (subject + relation + offset) mod entities` over a few subjects.
pub fn document_corpus(spec: DocCorpusSpec, seed: u64) -> Corpus {
    let mut rng = rng_for(seed, "synthetic.documents");
    let n = spec.entities as u32;
    let mut corpus = Corpus {
        docs: vec![],
        embeddings: vec![],
        events: vec![],
    };
    let entity = |i: u32| format!("entity_{i:03}");
    let relation = |i: u32| format!("relation_{i:02}");
    for topic in 0..spec.topics {
        let center: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(-20.0..20.0)).collect();
        let start = rng.random_range(0..spec.days.saturating_sub(spec.topic_days).max(1));
        let offset = rng.random_range(1..n);
        let subjects: Vec<u32> = (0..3).map(|_| rng.random_range(0..n)).collect();
        for (k, row) in gaussian_rows(&center, 0.5, spec.docs_per_topic, &mut rng).into_iter().enumerate() {
            let id = format!("t{topic:03}d{k:03}");
            for _ in 0..spec.events_per_doc {
                let s = subjects[rng.random_range(0..subjects.len())];
                let r = rng.random_range(0..spec.relations as u32);
                corpus.events.push(DocEvent {
                    doc_id: id.clone(),
                    subject: entity(s),
                    relation: relation(r),
                    object: entity((s + r + offset) % n),
                });
            }
            corpus.docs.push(DocRecord {
                id,
                day: start + rng.random_range(0..spec.topic_days),
            });
            corpus.embeddings.push(row);
        }
    }
    for k in 0..spec.noise_docs {
        let id = format!("noise{k:03}");
        let s = rng.random_range(0..n);
        let r = rng.random_range(0..spec.relations as u32);
        corpus.events.push(DocEvent {
            doc_id: id.clone(),
            subject: entity(s),
            relation: relation(r),
            object: entity((s + r) % n),
        });
        corpus.docs.push(DocRecord {
            id,
            day: rng.random_range(0..spec.days),
        });
        corpus
            .embeddings
            .push((0..spec.dim).map(|_| rng.random_range(-60.0..60.0)).collect());
    }
    corpus
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modular_rule_holds_everywhere() {
        let ds = modular_dataset(ModularSpec::default(), 1).unwrap();
        assert_eq!(ds.ces.len(), 3);
        for e in ds.all_events() {
            assert_eq!(e.object, (e.subject + e.relation) % 12);
        }
        let days: std::collections::BTreeSet<Day> = ds.all_events().map(|e| e.time).collect();
        assert_eq!(days.len(), 20);
        assert_eq!(modular_dataset(ModularSpec::default(), 1).unwrap(), ds);
    }

    #[test]
    fn contradiction_rules_differ_from_majority() {
        let ds = contradiction_dataset(ContradictionSpec::default(), 1).unwrap();
        for ce in ds.ces.values() {
            for e in ce.events() {
                assert_ne!(e.object, (e.subject + e.relation) % 24);
            }
        }
        ds.validate().unwrap();
        assert!(!ds.queries(Split::Test).is_empty());
    }

    #[test]
    fn blob_clustering_recovers_generative_labels() {
        use crate::builder::{adjusted_rand_index, cluster_documents, time_aware_features, DensityParams};
        let params = DensityParams { min_cluster_size: 10, min_samples: None };
        let two = two_blob_corpus(3);
        let f = time_aware_features(&two.embeddings, &two.times, 0.0, 5).unwrap();
        assert!(adjusted_rand_index(&cluster_documents(&f, params), &two.labels) >= 0.95);

        let four = four_blob_corpus(3);
        let with_time = time_aware_features(&four.embeddings, &four.times, 1.0, 5).unwrap();
        assert!(adjusted_rand_index(&cluster_documents(&with_time, params), &four.labels) >= 0.95);
        let without = time_aware_features(&four.embeddings, &four.times, 0.0, 5).unwrap();
        assert!(adjusted_rand_index(&cluster_documents(&without, params), &four.semantic_labels) >= 0.95);
    }

    #[test]
    fn document_corpus_builds_a_dataset() {
        use crate::builder::{build_dataset, BuildConfig};
        let corpus = document_corpus(DocCorpusSpec::default(), 5);
        let mut cfg = BuildConfig::default();
        cfg.cluster.reduced_dim = 8;
        let out = build_dataset(&corpus, &cfg, Dataset::default_epoch()).unwrap();
        let ds = &out.dataset;
        for split in [Split::Train, Split::Val, Split::Test] {
            assert!(!ds.splits.get(split).is_empty(), "{split} empty");
        }
        assert!(!ds.outliers.is_empty());
    }
}
