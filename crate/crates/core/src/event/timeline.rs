use std::collections::BTreeMap;

use super::{AtomicEvent, CeId, ComplexEvent, Dataset, Day, HistoryWindow, Scope, Snapshot};

/// Per-CE timelines plus the global timeline of a dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SnapshotIndex {
    pub per_ce: BTreeMap<CeId, Vec<Snapshot>>,
    pub global: Vec<Snapshot>,
}

impl SnapshotIndex {
    pub fn ce_timeline(&self, ce: CeId) -> &[Snapshot] {
        self.per_ce.get(&ce).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Global snapshot at exactly `time`, if any events occurred that day.
    pub fn global_at(&self, time: Day) -> Option<&Snapshot> {
        self.global
            .binary_search_by_key(&time, |s| s.time)
            .ok()
            .map(|i| &self.global[i])
    }
}

/// Builds per-CE and global timelines. The global snapshot at day `t` holds
/// every CE event at `t` (in CE id order) followed by the outliers at `t`.
pub fn snapshot_index(dataset: &Dataset) -> SnapshotIndex {
    let per_ce: BTreeMap<CeId, Vec<Snapshot>> = dataset
        .ces
        .iter()
        .map(|(&id, ce)| (id, ce.snapshots.clone()))
        .collect();
    let mut by_day: BTreeMap<Day, Vec<AtomicEvent>> = BTreeMap::new();
    for ce in dataset.ces.values() {
        for snap in &ce.snapshots {
            by_day.entry(snap.time).or_default().extend_from_slice(&snap.events);
        }
    }
    for e in &dataset.outliers {
        by_day.entry(e.time).or_default().push(*e);
    }
    let global = by_day
        .into_iter()
        .map(|(time, events)| Snapshot {
            scope: Scope::Global,
            time,
            events,
        })
        .collect();
    SnapshotIndex { per_ce, global }
}

/// The last `min(window, available)` snapshots with `time < query_time`.
/// `snapshots` must be ascending in time.
pub fn history_window(snapshots: &[Snapshot], query_time: Day, window: usize) -> HistoryWindow<'_> {
    let end = snapshots.partition_point(|s| s.time < query_time);
    let start = end.saturating_sub(window);
    HistoryWindow {
        snapshots: snapshots[start..end].iter().collect(),
    }
}

pub fn local_history(ce: &ComplexEvent, query_time: Day, window: usize) -> HistoryWindow<'_> {
    history_window(&ce.snapshots, query_time, window)
}

pub fn global_history(global: &[Snapshot], query_time: Day, window: usize) -> HistoryWindow<'_> {
    history_window(global, query_time, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{CeTag, Split, Vocab};
    use proptest::prelude::*;

    fn ev(s: u32, o: u32, t: u32, c: CeTag) -> AtomicEvent {
        AtomicEvent::new(s, 0, o, t, c)
    }

    fn dataset(events: Vec<AtomicEvent>, outliers: Vec<AtomicEvent>) -> Dataset {
        Dataset::from_split_events(
            Vocab::anonymous(10, 1),
            [(Split::Train, events), (Split::Val, vec![]), (Split::Test, vec![])],
            outliers,
            Dataset::default_epoch(),
        )
        .unwrap()
    }

    #[test]
    fn ce_timeline_groups_its_own_events() {
        let c1 = CeTag::Ce(1);
        let ds = dataset(vec![ev(0, 1, 1, c1), ev(1, 2, 1, c1), ev(2, 3, 2, c1)], vec![]);
        let idx = snapshot_index(&ds);
        let tl = idx.ce_timeline(1);
        assert_eq!(tl.len(), 2);
        assert_eq!((tl[0].time, tl[0].len()), (1, 2));
        assert_eq!((tl[1].time, tl[1].len()), (2, 1));
    }

    #[test]
    fn outliers_only_reach_global() {
        let ds = dataset(vec![ev(0, 1, 2, CeTag::Ce(1))], vec![ev(4, 5, 1, CeTag::Outlier)]);
        let idx = snapshot_index(&ds);
        assert_eq!(idx.global_at(1).unwrap().events, vec![ev(4, 5, 1, CeTag::Outlier)]);
        assert!(idx.ce_timeline(1).iter().all(|s| s.time != 1));
    }

    #[test]
    fn global_is_union_of_ces() {
        let ds = dataset(vec![ev(0, 1, 1, CeTag::Ce(1)), ev(2, 3, 1, CeTag::Ce(2))], vec![]);
        let idx = snapshot_index(&ds);
        assert_eq!(idx.global_at(1).unwrap().len(), 2);
        assert_eq!(idx.ce_timeline(1)[0].len(), 1);
        assert_eq!(idx.ce_timeline(2)[0].len(), 1);
    }

    #[test]
    fn local_window_examples() {
        let ce = ComplexEvent::from_events(
            0,
            [1, 3, 7].into_iter().map(|t| ev(0, 1, t, CeTag::Ce(0))),
        );
        let w = local_history(&ce, 8, 2);
        assert_eq!(w.iter().map(|s| s.time).collect::<Vec<_>>(), vec![3, 7]);
        assert!(local_history(&ce, 1, 2).is_empty());
        assert_eq!(local_history(&ce, 5, 5).len(), 2);
    }

    #[test]
    fn global_window_examples() {
        let ds = dataset(
            (0..3).map(|t| ev(0, 1, t, CeTag::Ce(0))).collect(),
            vec![],
        );
        let idx = snapshot_index(&ds);
        let w = global_history(&idx.global, 2, 10);
        assert_eq!(w.iter().map(|s| s.time).collect::<Vec<_>>(), vec![0, 1]);
        assert!(global_history(&idx.global, 0, 10).is_empty());
        let w = global_history(&idx.global, 3, 1);
        assert_eq!(w.iter().map(|s| s.time).collect::<Vec<_>>(), vec![2]);
    }

    proptest! {
        #[test]
        fn global_snapshot_partitions_events(
            rows in proptest::collection::vec((0u32..6, 0u32..6, 0u32..12, -1i32..4), 1..60)
        ) {
            let mut events = Vec::new();
            let mut outliers = Vec::new();
            for (s, o, t, c) in rows {
                if c < 0 {
                    outliers.push(ev(s, o, t, CeTag::Outlier));
                } else {
                    events.push(ev(s, o, t, CeTag::Ce(c as u32)));
                }
            }
            let ds = dataset(events.clone(), outliers.clone());
            let idx = snapshot_index(&ds);
            for snap in &idx.global {
                let mut expected: Vec<AtomicEvent> = events
                    .iter()
                    .chain(outliers.iter())
                    .filter(|e| e.time == snap.time)
                    .copied()
                    .collect();
                let mut got = snap.events.clone();
                expected.sort();
                got.sort();
                prop_assert_eq!(got, expected);
            }
            let total: usize = idx.global.iter().map(Snapshot::len).sum();
            prop_assert_eq!(total, events.len() + outliers.len());
        }

        #[test]
        fn windows_stay_before_query(times in proptest::collection::btree_set(0u32..100, 0..30),
                                     q in 0u32..110, t in 1usize..8) {
            let ce = ComplexEvent::from_events(0, times.iter().map(|&d| ev(0, 1, d, CeTag::Ce(0))));
            let w = local_history(&ce, q, t);
            prop_assert!(w.len() <= t);
            prop_assert!(w.iter().all(|s| s.time < q));
            prop_assert!(w.snapshots.windows(2).all(|p| p[0].time < p[1].time));
            let earlier = times.iter().filter(|&&d| d < q).count();
            prop_assert_eq!(w.len(), earlier.min(t));
        }
    }
}
