//! Time-aware filtered ranking and MRR / HIT@{1,3,10}.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::event::{snapshot_index, Dataset, Day, EntityId, Query, RelationId, SnapshotIndex, Split};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold entity {0} is in its own filter set")]
    GoldFiltered(EntityId),
    #[error("gold entity {gold} outside score vector of length {len}")]
    GoldOutOfRange { gold: EntityId, len: usize },
    #[error("no queries to evaluate in the {0} split")]
    EmptySplit(Split),
    #[error("no ranks to summarize")]
    NoRanks,
    #[error("forecaster failed: {0}")]
    Forecaster(#[source] Box<dyn std::error::Error + Send + Sync>),
}

/// Raw and filtered 1-based ranks of the gold object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ranks {
    pub raw: usize,
    pub filtered: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankResult {
    pub query: Query,
    pub raw_rank: usize,
    pub filtered_rank: usize,
}

/// Ranks `gold` among `scores`. Ties favour the gold entity: only strictly
/// greater scores push it down. Filtered entities are left out of the
/// comparison set for the filtered rank.
pub fn rank_with_filter(scores: &[f64], gold: EntityId, filter: &BTreeSet<EntityId>) -> Result<Ranks, EvalError> {
    let g = gold as usize;
    let Some(&target) = scores.get(g) else {
        return Err(EvalError::GoldOutOfRange { gold, len: scores.len() });
    };
    if filter.contains(&gold) {
        return Err(EvalError::GoldFiltered(gold));
    }
    let mut raw = 1;
    let mut filtered = 1;
    for (i, &s) in scores.iter().enumerate() {
        if i != g && s > target {
            raw += 1;
            if !filter.contains(&(i as EntityId)) {
                filtered += 1;
            }
        }
    }
    Ok(Ranks { raw, filtered })
}

/// Objects known true for each `(subject, relation, day)` across all splits.
#[derive(Clone, Debug, Default)]
pub struct FilterIndex {
    objects: HashMap<(EntityId, RelationId, Day), BTreeSet<EntityId>>,
}

impl FilterIndex {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let mut objects: HashMap<_, BTreeSet<EntityId>> = HashMap::new();
        for ce in dataset.ces.values() {
            for e in ce.events() {
                objects.entry((e.subject, e.relation, e.time)).or_default().insert(e.object);
            }
        }
        Self { objects }
    }

    /// Every other object seen with the query's subject and relation at the
    /// query's exact day, in any CE of any split.
    pub fn filter_set(&self, query: &Query) -> BTreeSet<EntityId> {
        let mut set = self
            .objects
            .get(&(query.subject, query.relation, query.time))
            .cloned()
            .unwrap_or_default();
        set.remove(&query.gold);
        set
    }
}

pub fn build_filter_set(index: &FilterIndex, query: &Query) -> BTreeSet<EntityId> {
    index.filter_set(query)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub mrr: f64,
    pub hit1: f64,
    pub hit3: f64,
    pub hit10: f64,
    pub n_queries: usize,
}

impl MetricsReport {
    /// Summarizes filtered ranks. The reciprocal-rank sum is accumulated as an
    /// exact rational over a rank histogram, so the result does not depend on
    /// query order.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self, EvalError> {
        if ranks.is_empty() {
            return Err(EvalError::NoRanks);
        }
        let mut histogram: std::collections::BTreeMap<usize, u64> = std::collections::BTreeMap::new();
        for &r in ranks {
            *histogram.entry(r).or_default() += 1;
        }
        let mut sum = BigRational::from_integer(BigInt::from(0));
        for (&rank, &count) in &histogram {
            sum += BigRational::new(BigInt::from(count), BigInt::from(rank));
        }
        let n = ranks.len();
        let mean = sum / BigRational::from_integer(BigInt::from(n));
        let hits = |k: usize| histogram.range(..=k).map(|(_, c)| *c).sum::<u64>() as f64 / n as f64;
        Ok(Self {
            mrr: mean.to_f64().unwrap_or(f64::NAN),
            hit1: hits(1),
            hit3: hits(3),
            hit10: hits(10),
            n_queries: n,
        })
    }

    pub fn from_results(results: &[RankResult]) -> Result<Self, EvalError> {
        let ranks: Vec<usize> = results.iter().map(|r| r.filtered_rank).collect();
        Self::from_ranks(&ranks)
    }
}

/// Renders rows of metrics as an aligned text table.
pub fn render_table(rows: &[(String, MetricsReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}", "Model", "MRR", "HIT@1", "HIT@3", "HIT@10", "queries");
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8}",
            name, m.mrr, m.hit1, m.hit3, m.hit10, m.n_queries
        );
    }
    out
}

/// Per-query dump: `s\tr\tgold\tt\tce\traw\tfiltered`.
pub fn write_rank_dump<W: Write>(mut w: W, results: &[RankResult]) -> std::io::Result<()> {
    for r in results {
        let q = &r.query;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            q.subject, q.relation, q.gold, q.time, q.ce, r.raw_rank, r.filtered_rank
        )?;
    }
    Ok(())
}

/// Anything that turns queries into one score vector over all entities each.
pub trait Forecaster {
    fn score(&self, dataset: &Dataset, index: &SnapshotIndex, queries: &[Query]) -> Result<Vec<Vec<f64>>, EvalError>;
}

/// Shared, immutable evaluation state for one dataset.
pub struct EvalContext {
    pub index: SnapshotIndex,
    pub filter: FilterIndex,
}

impl EvalContext {
    pub fn new(dataset: &Dataset) -> Self {
        Self {
            index: snapshot_index(dataset),
            filter: FilterIndex::from_dataset(dataset),
        }
    }

    /// Queries of `split` that have at least one earlier global snapshot.
    pub fn answerable_queries(&self, dataset: &Dataset, split: Split) -> Vec<Query> {
        let first = self.index.global.first().map(|s| s.time);
        dataset
            .queries(split)
            .into_iter()
            .filter(|q| first.is_some_and(|f| f < q.time))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub ranks: Vec<RankResult>,
}

pub fn evaluate_split<F: Forecaster + ?Sized>(
    forecaster: &F,
    ctx: &EvalContext,
    dataset: &Dataset,
    split: Split,
) -> Result<Evaluation, EvalError> {
    let queries = ctx.answerable_queries(dataset, split);
    if queries.is_empty() {
        return Err(EvalError::EmptySplit(split));
    }
    let scores = forecaster.score(dataset, &ctx.index, &queries)?;
    let ranks = queries
        .iter()
        .zip(&scores)
        .map(|(q, s)| {
            let r = rank_with_filter(s, q.gold, &ctx.filter.filter_set(q))?;
            Ok(RankResult {
                query: *q,
                raw_rank: r.raw,
                filtered_rank: r.filtered,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(Evaluation {
        report: MetricsReport::from_results(&ranks)?,
        ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{AtomicEvent, CeTag, Vocab};
    use proptest::prelude::*;

    fn set(ids: &[u32]) -> BTreeSet<u32> {
        ids.iter().copied().collect()
    }

    #[test]
    fn rank_examples() {
        let s = [0.9, 0.5, 0.1];
        assert_eq!(rank_with_filter(&s, 0, &set(&[])).unwrap(), Ranks { raw: 1, filtered: 1 });
        assert_eq!(rank_with_filter(&s, 2, &set(&[0])).unwrap(), Ranks { raw: 3, filtered: 2 });
        let flat = [0.3; 7];
        assert_eq!(rank_with_filter(&flat, 4, &set(&[])).unwrap(), Ranks { raw: 1, filtered: 1 });
        assert!(matches!(rank_with_filter(&s, 1, &set(&[1])), Err(EvalError::GoldFiltered(1))));
    }

    #[test]
    fn metrics_examples() {
        let m = MetricsReport::from_ranks(&[1, 2, 4]).unwrap();
        assert!((m.mrr - 1.75 / 3.0).abs() < 1e-15);
        assert_eq!((m.hit1, m.hit3, m.hit10), (1.0 / 3.0, 2.0 / 3.0, 1.0));
        let one = MetricsReport::from_ranks(&[1]).unwrap();
        assert_eq!((one.mrr, one.hit1, one.hit3, one.hit10), (1.0, 1.0, 1.0, 1.0));
        assert!(MetricsReport::from_ranks(&[]).is_err());
    }

    fn q(s: u32, r: u32, o: u32, t: u32, c: u32) -> Query {
        Query {
            time: t,
            ce: c,
            subject: s,
            relation: r,
            gold: o,
        }
    }

    #[test]
    fn filter_is_time_aware_and_spans_ces() {
        let ev = |s, r, o, t, c| AtomicEvent::new(s, r, o, t, CeTag::Ce(c));
        let ds = Dataset::from_split_events(
            Vocab::anonymous(10, 2),
            [
                (Split::Train, vec![ev(0, 0, 5, 2, 3)]),
                (Split::Val, vec![]),
                (Split::Test, vec![ev(0, 0, 1, 3, 1), ev(0, 0, 2, 3, 2), ev(4, 1, 6, 3, 1)]),
            ],
            vec![],
            Dataset::default_epoch(),
        )
        .unwrap();
        let idx = FilterIndex::from_dataset(&ds);
        assert_eq!(build_filter_set(&idx, &q(0, 0, 1, 3, 1)), set(&[2]));
        assert!(build_filter_set(&idx, &q(4, 1, 6, 3, 1)).is_empty());
        // (0, 0, 5) holds at day 2 only
        assert!(!build_filter_set(&idx, &q(0, 0, 1, 3, 1)).contains(&5));
    }

    #[test]
    fn table_has_paper_metric_names() {
        let m = MetricsReport::from_ranks(&[1, 3]).unwrap();
        let t = render_table(&[("full".into(), m)]);
        assert!(t.lines().next().unwrap().contains("HIT@10"));
        assert!(t.contains("0.6667"));
    }

    proptest! {
        #[test]
        fn filtered_never_exceeds_raw(scores in proptest::collection::vec(-5.0f64..5.0, 1..30),
                                      gold_seed in 0usize..1000,
                                      mask in proptest::collection::vec(any::<bool>(), 30)) {
            let gold = (gold_seed % scores.len()) as u32;
            let filter: BTreeSet<u32> = (0..scores.len() as u32).filter(|&i| i != gold && mask[i as usize]).collect();
            let r = rank_with_filter(&scores, gold, &filter).unwrap();
            prop_assert!(1 <= r.filtered && r.filtered <= r.raw && r.raw <= scores.len());
            let unfiltered = rank_with_filter(&scores, gold, &BTreeSet::new()).unwrap();
            prop_assert_eq!(unfiltered.raw, unfiltered.filtered);
        }

        #[test]
        fn metrics_ignore_query_order(mut ranks in proptest::collection::vec(1usize..50, 1..60)) {
            let a = MetricsReport::from_ranks(&ranks).unwrap();
            ranks.reverse();
            let b = MetricsReport::from_ranks(&ranks).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn improving_one_rank_raises_mrr(ranks in proptest::collection::vec(2usize..50, 1..40), pick in 0usize..40) {
            let i = pick % ranks.len();
            let before = MetricsReport::from_ranks(&ranks).unwrap().mrr;
            let mut better = ranks.clone();
            better[i] -= 1;
            prop_assert!(MetricsReport::from_ranks(&better).unwrap().mrr > before);
        }
    }
}
