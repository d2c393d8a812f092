use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::event::{
    AtomicEvent, CeTag, ComplexEvent, Dataset, Day, EntityId, RelationId, Split, SplitBoundaries, Splits, Vocab,
};

use super::BuildError;

const DAYS_PER_YEAR: u32 = 365;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_days: u32,
    pub min_events: usize,
    pub val_years: u32,
    pub test_years: u32,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_days: 2,
            min_events: 10,
            val_years: 1,
            test_years: 1,
        }
    }
}

/// Split boundaries for a corpus whose last day is `t_max`: test covers the
/// final `test_years`, val the `val_years` before that.
pub fn split_boundaries(t_max: Day, cfg: &FilterConfig) -> SplitBoundaries {
    let end = t_max + 1;
    let test_start = end.saturating_sub(DAYS_PER_YEAR * cfg.test_years);
    let val_start = test_start.saturating_sub(DAYS_PER_YEAR * cfg.val_years);
    SplitBoundaries { val_start, test_start }
}

fn split_for(centroid: f64, b: &SplitBoundaries) -> Split {
    if centroid >= b.test_start as f64 {
        Split::Test
    } else if centroid >= b.val_start as f64 {
        Split::Val
    } else {
        Split::Train
    }
}

fn large_enough(ce: &ComplexEvent, cfg: &FilterConfig) -> bool {
    ce.span_days() >= cfg.min_days && ce.event_count() >= cfg.min_events
}

fn into_outliers(ce: &ComplexEvent, outliers: &mut Vec<AtomicEvent>) {
    outliers.extend(ce.events().map(|e| AtomicEvent { ce: CeTag::Outlier, ..*e }));
}

/// Drops undersized CEs, assigns the rest to splits by their mean event day,
/// removes val/test events whose entities or relation never occur in train,
/// and re-applies the size minimum to the pruned CEs. Every removed event is
/// kept as an outlier. CE ids are renumbered by (first day, label).
pub fn filter_and_split(
    ces: Vec<ComplexEvent>,
    mut outliers: Vec<AtomicEvent>,
    vocab: Vocab,
    t_max: Day,
    epoch: NaiveDate,
    cfg: &FilterConfig,
) -> Result<Dataset, BuildError> {
    let bounds = split_boundaries(t_max, cfg);
    let mut assigned: Vec<(Split, ComplexEvent)> = Vec::new();
    for ce in ces {
        if large_enough(&ce, cfg) {
            assigned.push((split_for(ce.centroid(), &bounds), ce));
        } else {
            into_outliers(&ce, &mut outliers);
        }
    }
    let mut entities: BTreeSet<EntityId> = BTreeSet::new();
    let mut relations: BTreeSet<RelationId> = BTreeSet::new();
    for (split, ce) in &assigned {
        if *split == Split::Train {
            for e in ce.events() {
                entities.insert(e.subject);
                entities.insert(e.object);
                relations.insert(e.relation);
            }
        }
    }
    if entities.is_empty() {
        return Err(BuildError::EmptyTrain);
    }
    let known = |e: &AtomicEvent| {
        entities.contains(&e.subject) && entities.contains(&e.object) && relations.contains(&e.relation)
    };
    let mut kept: Vec<(Split, ComplexEvent)> = Vec::new();
    for (split, ce) in assigned {
        if split == Split::Train {
            kept.push((split, ce));
            continue;
        }
        let (keep, drop): (Vec<AtomicEvent>, Vec<AtomicEvent>) = ce.events().copied().partition(|e| known(e));
        outliers.extend(drop.into_iter().map(|e| AtomicEvent { ce: CeTag::Outlier, ..e }));
        let mut pruned = ComplexEvent::from_events(ce.id, keep);
        pruned.label = ce.label.clone();
        pruned.docs = ce.docs.clone();
        if large_enough(&pruned, cfg) {
            kept.push((split, pruned));
        } else {
            into_outliers(&pruned, &mut outliers);
        }
    }
    kept.sort_by(|(_, a), (_, b)| a.first_day().cmp(&b.first_day()).then_with(|| a.label.cmp(&b.label)));

    let mut out_ces = BTreeMap::new();
    let mut splits = Splits::default();
    for (new_id, (split, ce)) in kept.into_iter().enumerate() {
        let id = new_id as u32;
        let mut renumbered = ComplexEvent::from_events(id, ce.events().copied());
        renumbered.label = ce.label;
        renumbered.docs = ce.docs;
        splits.get_mut(split).insert(id);
        out_ces.insert(id, renumbered);
    }
    outliers.sort_by_key(|e| (e.time, e.subject, e.relation, e.object));
    let dataset = Dataset {
        vocab,
        ces: out_ces,
        outliers,
        splits,
        epoch,
        t_max,
        boundaries: Some(bounds),
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ce(id: u32, events: &[(u32, u32, u32, u32)]) -> ComplexEvent {
        ComplexEvent::from_events(id, events.iter().map(|&(s, r, o, t)| AtomicEvent::new(s, r, o, t, CeTag::Ce(id))))
    }

    /// `n` events of `(0, 0, 1)` spread over days `start..start + span`.
    fn block(id: u32, start: u32, span: u32, n: usize) -> ComplexEvent {
        let evs: Vec<_> = (0..n).map(|i| (0, 0, 1, start + (i as u32 % span))).collect();
        ce(id, &evs)
    }

    fn run(ces: Vec<ComplexEvent>, t_max: Day) -> Result<Dataset, BuildError> {
        filter_and_split(
            ces,
            vec![],
            Vocab::anonymous(5, 3),
            t_max,
            Dataset::default_epoch(),
            &FilterConfig::default(),
        )
    }

    #[test]
    fn undersized_ces_become_outliers() {
        let ds = run(vec![block(0, 0, 5, 20), block(1, 10, 1, 30), block(2, 20, 5, 9)], 2000).unwrap();
        assert_eq!(ds.ces.len(), 1);
        assert_eq!(ds.outliers.len(), 39);
        assert!(ds.outliers.iter().all(|e| e.ce == CeTag::Outlier));
    }

    #[test]
    fn centroid_years_pick_splits() {
        let year = 365;
        let ds = run(
            vec![
                block(0, 0 * year + 100, 5, 12),
                block(1, 5 * year + 100, 5, 12),
                block(2, 6 * year + 100, 5, 12),
            ],
            7 * year - 1,
        )
        .unwrap();
        assert_eq!(ds.splits.split_of(0), Some(Split::Train));
        assert_eq!(ds.splits.split_of(1), Some(Split::Val));
        assert_eq!(ds.splits.split_of(2), Some(Split::Test));
    }

    #[test]
    fn cold_start_events_are_pruned() {
        let mut test_events: Vec<(u32, u32, u32, u32)> = (0..12).map(|i| (0, 0, 1, 700 + i % 3)).collect();
        test_events.push((4, 0, 1, 701));
        test_events.push((0, 2, 1, 702));
        let ds = run(vec![block(0, 0, 5, 12), ce(1, &test_events)], 1000).unwrap();
        let test_ce = &ds.ces[&1];
        assert_eq!(test_ce.event_count(), 12);
        assert_eq!(ds.outliers.len(), 2);
        for split in [Split::Val, Split::Test] {
            for e in ds.split_events(split) {
                assert!(e.subject <= 1 && e.object <= 1 && e.relation == 0);
            }
        }
    }

    #[test]
    fn pruning_can_drop_a_ce() {
        let mut test_events: Vec<(u32, u32, u32, u32)> = (0..8).map(|i| (0, 0, 1, 700 + i % 3)).collect();
        test_events.extend((0..4).map(|i| (3, 0, 1, 700 + i)));
        let ds = run(vec![block(0, 0, 5, 12), ce(1, &test_events)], 1000).unwrap();
        assert_eq!(ds.ces.len(), 1);
        assert_eq!(ds.outliers.len(), 12);
    }

    #[test]
    fn empty_train_is_an_error() {
        assert!(matches!(run(vec![block(0, 700, 5, 12)], 730), Err(BuildError::EmptyTrain)));
    }
}
