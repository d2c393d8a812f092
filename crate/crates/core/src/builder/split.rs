use serde::{Deserialize, Serialize};

use crate::event::{ComplexEvent, Snapshot};

use super::BuildError;

/// Size and span limits for one CE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitThresholds {
    /// Maximum atomic events.
    pub h_a: usize,
    /// Maximum span in days, counting both ends.
    pub h_t: u32,
}

impl Default for SplitThresholds {
    fn default() -> Self {
        Self { h_a: 112, h_t: 78 }
    }
}

impl SplitThresholds {
    pub fn validate(&self) -> Result<(), BuildError> {
        if self.h_a < 10 {
            return Err(BuildError::Invalid("split.h_a must be at least 10".into()));
        }
        if self.h_t < 2 {
            return Err(BuildError::Invalid("split.h_t must be at least 2".into()));
        }
        Ok(())
    }
}

/// Greedy chronological cut of an oversized CE. Snapshots accumulate from
/// the first day; a piece is closed once it holds `h_a` events or spans
/// `h_t` days, and also before a snapshot whose day would stretch the piece
/// past `h_t`. Days are never divided. Pieces keep the parent id and get
/// labels `parent.0`, `parent.1`, ...; a CE under both limits comes back
/// unchanged.
pub fn split_supercluster(ce: &ComplexEvent, th: SplitThresholds) -> Vec<ComplexEvent> {
    if ce.event_count() < th.h_a && ce.span_days() < th.h_t {
        return vec![ce.clone()];
    }
    let mut pieces: Vec<Vec<Snapshot>> = Vec::new();
    let mut acc: Vec<Snapshot> = Vec::new();
    let mut count = 0usize;
    for snap in &ce.snapshots {
        if let Some(first) = acc.first() {
            if snap.time - first.time + 1 > th.h_t {
                pieces.push(std::mem::take(&mut acc));
                count = 0;
            }
        }
        count += snap.len();
        acc.push(snap.clone());
        let span = snap.time - acc[0].time + 1;
        if count >= th.h_a || span >= th.h_t {
            pieces.push(std::mem::take(&mut acc));
            count = 0;
        }
    }
    if !acc.is_empty() {
        pieces.push(acc);
    }
    if pieces.len() == 1 {
        return vec![ce.clone()];
    }
    pieces
        .into_iter()
        .enumerate()
        .map(|(k, snapshots)| {
            let (lo, hi) = (snapshots[0].time, snapshots[snapshots.len() - 1].time);
            ComplexEvent {
                id: ce.id,
                label: format!("{}.{k}", ce.label),
                docs: ce.docs.iter().filter(|d| d.day >= lo && d.day <= hi).cloned().collect(),
                snapshots,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{AtomicEvent, CeTag};
    use proptest::prelude::*;

    fn ce_from_days(days: &[u32]) -> ComplexEvent {
        ComplexEvent::from_events(
            4,
            days.iter().enumerate().map(|(i, &t)| AtomicEvent::new(i as u32, 0, 0, t, CeTag::Ce(4))),
        )
    }

    fn sizes(pieces: &[ComplexEvent]) -> Vec<usize> {
        pieces.iter().map(ComplexEvent::event_count).collect()
    }

    #[test]
    fn count_limited_pieces() {
        let ce = ce_from_days(&(0..25).collect::<Vec<_>>());
        let out = split_supercluster(&ce, SplitThresholds { h_a: 10, h_t: 1000 });
        assert_eq!(sizes(&out), [10, 10, 5]);
        assert_eq!(out[2].label, "4.2");
    }

    #[test]
    fn span_limited_pieces() {
        let ce = ce_from_days(&(0..200).collect::<Vec<_>>());
        let out = split_supercluster(&ce, SplitThresholds { h_a: 1_000_000_000, h_t: 78 });
        let spans: Vec<u32> = out.iter().map(ComplexEvent::span_days).collect();
        assert_eq!(spans, [78, 78, 44]);
    }

    #[test]
    fn small_ce_unchanged() {
        let ce = ce_from_days(&[0, 1, 2, 5]);
        assert_eq!(split_supercluster(&ce, SplitThresholds::default()), vec![ce]);
    }

    #[test]
    fn day_gap_starts_new_piece() {
        let ce = ce_from_days(&[0, 1, 2, 300, 301]);
        let out = split_supercluster(&ce, SplitThresholds { h_a: 100, h_t: 10 });
        assert_eq!(sizes(&out), [3, 2]);
    }

    proptest! {
        #[test]
        fn conserves_events_and_respects_limits(
            days in proptest::collection::vec(0u32..400, 1..300),
            h_a in 10usize..60,
            h_t in 2u32..50,
        ) {
            let ce = ce_from_days(&days);
            let th = SplitThresholds { h_a, h_t };
            let out = split_supercluster(&ce, th);
            let mut before: Vec<AtomicEvent> = ce.events().copied().collect();
            let mut after: Vec<AtomicEvent> = out.iter().flat_map(|c| c.events().copied()).collect();
            before.sort_by_key(|e| (e.time, e.subject));
            after.sort_by_key(|e| (e.time, e.subject));
            prop_assert_eq!(before, after);
            for piece in &out {
                prop_assert!(piece.span_days() <= h_t || piece.snapshots.len() == 1);
                let last = piece.snapshots.last().unwrap().len();
                prop_assert!(piece.event_count() < h_a + last);
            }
        }
    }
}
