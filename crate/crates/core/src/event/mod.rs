//! Data model for temporal complex-event datasets.
//!
//! An [`AtomicEvent`] is a quintuple `(subject, relation, object, time, ce)`.
//! Events of one complex event (CE) grouped by day form that CE's
//! [`Snapshot`]s; the union of every CE plus the outlier events at one day
//! forms the global snapshot.

mod io;
mod timeline;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

pub use io::{load_quintuples, read_quintuples, write_quintuples, DatasetMeta, SplitBoundaries};
pub use timeline::{global_history, history_window, local_history, snapshot_index, SnapshotIndex};

pub type EntityId = u32;
pub type RelationId = u32;
pub type CeId = u32;
/// Whole days since the dataset epoch.
pub type Day = u32;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record ({reason})")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: {kind} id {id} outside vocabulary of size {size}")]
    UnknownId {
        line: usize,
        kind: &'static str,
        id: u64,
        size: usize,
    },
    #[error("relation id {relation} is already in the inverse range (|R| = {num_relations})")]
    AlreadyAugmented { relation: RelationId, num_relations: usize },
    #[error("metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// Complex-event membership of an atomic event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CeTag {
    Ce(CeId),
    /// Event extracted from a document that no cluster claimed.
    Outlier,
}

impl CeTag {
    pub fn id(self) -> Option<CeId> {
        match self {
            CeTag::Ce(id) => Some(id),
            CeTag::Outlier => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomicEvent {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub time: Day,
    pub ce: CeTag,
}

impl AtomicEvent {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId, time: Day, ce: CeTag) -> Self {
        Self {
            subject,
            relation,
            object,
            time,
            ce,
        }
    }
}

/// Returns `events` followed by one inverse event `(o, r + |R|, s, t, c)` per input.
pub fn add_inverse_relations(
    events: &[AtomicEvent],
    num_relations: usize,
) -> Result<Vec<AtomicEvent>, EventError> {
    if let Some(e) = events.iter().find(|e| e.relation as usize >= num_relations) {
        return Err(EventError::AlreadyAugmented {
            relation: e.relation,
            num_relations,
        });
    }
    let mut out = Vec::with_capacity(events.len() * 2);
    out.extend_from_slice(events);
    out.extend(events.iter().map(|e| AtomicEvent {
        subject: e.object,
        relation: e.relation + num_relations as RelationId,
        object: e.subject,
        ..*e
    }));
    Ok(out)
}

/// Dense bijection between names and ids `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NameTable {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl NameTable {
    pub fn from_names<I, S>(names: I) -> Result<Self, EventError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = NameTable::default();
        for name in names {
            let name = name.into();
            if table.index.contains_key(&name) {
                return Err(EventError::Invalid(format!("duplicate name {name:?}")));
            }
            table.index.insert(name.clone(), table.names.len() as u32);
            table.names.push(name);
        }
        Ok(table)
    }

    /// Returns the id of `name`, inserting it if absent.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Entity and relation vocabularies, with optional relation parent links
/// for a three-level ontology.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    pub entities: NameTable,
    pub relations: NameTable,
    parents: Vec<Option<RelationId>>,
}

impl Vocab {
    pub fn new(entities: NameTable, relations: NameTable) -> Self {
        let parents = vec![None; relations.len()];
        Self {
            entities,
            relations,
            parents,
        }
    }

    /// Anonymous vocabulary with numeric names, handy for synthetic data.
    pub fn anonymous(num_entities: usize, num_relations: usize) -> Self {
        let entities = NameTable::from_names((0..num_entities).map(|i| format!("e{i}"))).unwrap();
        let relations = NameTable::from_names((0..num_relations).map(|i| format!("r{i}"))).unwrap();
        Self::new(entities, relations)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn parent(&self, relation: RelationId) -> Option<RelationId> {
        self.parents.get(relation as usize).copied().flatten()
    }

    pub fn set_parent(&mut self, child: RelationId, parent: RelationId) -> Result<(), EventError> {
        let n = self.relations.len();
        if child as usize >= n || parent as usize >= n {
            return Err(EventError::Invalid(format!(
                "hierarchy link {child}->{parent} outside relation range {n}"
            )));
        }
        if parent >= child {
            return Err(EventError::Invalid(format!(
                "hierarchy link {child}->{parent}: parent must have a lower id"
            )));
        }
        if self.parents.len() < n {
            self.parents.resize(n, None);
        }
        self.parents[child as usize] = Some(parent);
        Ok(())
    }

    pub fn hierarchy_links(&self) -> impl Iterator<Item = (RelationId, RelationId)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter_map(|(child, p)| p.map(|p| (child as RelationId, p)))
    }

    pub(crate) fn check_event(&self, e: &AtomicEvent, line: usize, relation_space: usize) -> Result<(), EventError> {
        let ne = self.num_entities();
        for (kind, id) in [("entity", e.subject), ("entity", e.object)] {
            if id as usize >= ne {
                return Err(EventError::UnknownId {
                    line,
                    kind,
                    id: id as u64,
                    size: ne,
                });
            }
        }
        if e.relation as usize >= relation_space {
            return Err(EventError::UnknownId {
                line,
                kind: "relation",
                id: e.relation as u64,
                size: relation_space,
            });
        }
        Ok(())
    }
}

/// Whose events a snapshot carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scope {
    Ce(CeId),
    Global,
}

/// All events of one scope at one day.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub scope: Scope,
    pub time: Day,
    pub events: Vec<AtomicEvent>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DocRef {
    pub id: String,
    pub day: Day,
}

/// A chronologically ordered list of nonempty snapshots sharing one CE id.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexEvent {
    pub id: CeId,
    /// Provenance label; pieces of a split supercluster get `parent.k`.
    pub label: String,
    pub snapshots: Vec<Snapshot>,
    pub docs: Vec<DocRef>,
}

impl ComplexEvent {
    /// Groups `events` by day. Every event is re-tagged with `id`.
    pub fn from_events(id: CeId, events: impl IntoIterator<Item = AtomicEvent>) -> Self {
        let mut by_day: BTreeMap<Day, Vec<AtomicEvent>> = BTreeMap::new();
        for mut e in events {
            e.ce = CeTag::Ce(id);
            by_day.entry(e.time).or_default().push(e);
        }
        let snapshots = by_day
            .into_iter()
            .map(|(time, events)| Snapshot {
                scope: Scope::Ce(id),
                time,
                events,
            })
            .collect();
        Self {
            id,
            label: id.to_string(),
            snapshots,
            docs: Vec::new(),
        }
    }

    pub fn events(&self) -> impl Iterator<Item = &AtomicEvent> + '_ {
        self.snapshots.iter().flat_map(|s| s.events.iter())
    }

    pub fn event_count(&self) -> usize {
        self.snapshots.iter().map(Snapshot::len).sum()
    }

    pub fn first_day(&self) -> Option<Day> {
        self.snapshots.first().map(|s| s.time)
    }

    pub fn last_day(&self) -> Option<Day> {
        self.snapshots.last().map(|s| s.time)
    }

    /// Number of calendar days covered, counting both ends.
    pub fn span_days(&self) -> u32 {
        match (self.first_day(), self.last_day()) {
            (Some(a), Some(b)) => b - a + 1,
            _ => 0,
        }
    }

    /// Mean day index over events.
    pub fn centroid(&self) -> f64 {
        let n = self.event_count();
        if n == 0 {
            return 0.0;
        }
        let total: f64 = self.snapshots.iter().map(|s| s.time as f64 * s.len() as f64).sum();
        total / n as f64
    }

    pub fn validate(&self) -> Result<(), EventError> {
        for pair in self.snapshots.windows(2) {
            if pair[0].time >= pair[1].time {
                return Err(EventError::Invalid(format!(
                    "CE {}: snapshot times not strictly increasing",
                    self.id
                )));
            }
        }
        for s in &self.snapshots {
            if s.events.is_empty() {
                return Err(EventError::Invalid(format!("CE {}: empty snapshot at {}", self.id, s.time)));
            }
            if s.events.iter().any(|e| e.time != s.time || e.ce != CeTag::Ce(self.id)) {
                return Err(EventError::Invalid(format!(
                    "CE {}: snapshot at {} holds a foreign event",
                    self.id, s.time
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    /// File stem used on disk.
    pub fn file_stem(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = EventError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(EventError::Invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: BTreeSet<CeId>,
    pub val: BTreeSet<CeId>,
    pub test: BTreeSet<CeId>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &BTreeSet<CeId> {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, split: Split) -> &mut BTreeSet<CeId> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn split_of(&self, ce: CeId) -> Option<Split> {
        Split::ALL.into_iter().find(|&s| self.get(s).contains(&ce))
    }
}

/// One forecasting query `(s, r, ?, t, c)` with its gold object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Query {
    pub time: Day,
    pub ce: CeId,
    pub subject: EntityId,
    pub relation: RelationId,
    pub gold: EntityId,
}

/// Up to `T` snapshots strictly before a query time, ascending.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HistoryWindow<'a> {
    pub snapshots: Vec<&'a Snapshot>,
}

impl<'a> HistoryWindow<'a> {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a Snapshot> + '_ {
        self.snapshots.iter().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub vocab: Vocab,
    pub ces: BTreeMap<CeId, ComplexEvent>,
    pub outliers: Vec<AtomicEvent>,
    pub splits: Splits,
    pub epoch: NaiveDate,
    pub t_max: Day,
    pub boundaries: Option<SplitBoundaries>,
}

impl Dataset {
    /// Assembles a dataset from per-split CE events and outliers.
    pub fn from_split_events(
        vocab: Vocab,
        split_events: [(Split, Vec<AtomicEvent>); 3],
        outliers: Vec<AtomicEvent>,
        epoch: NaiveDate,
    ) -> Result<Self, EventError> {
        let mut grouped: BTreeMap<CeId, Vec<AtomicEvent>> = BTreeMap::new();
        let mut splits = Splits::default();
        for (split, events) in split_events {
            for e in events {
                let id = e.ce.id().ok_or_else(|| {
                    EventError::Invalid(format!("outlier event inside the {split} split"))
                })?;
                splits.get_mut(split).insert(id);
                grouped.entry(id).or_default().push(e);
            }
        }
        let ces = grouped
            .into_iter()
            .map(|(id, events)| (id, ComplexEvent::from_events(id, events)))
            .collect();
        let t_max = Self::max_time(&ces, &outliers);
        let ds = Self {
            vocab,
            ces,
            outliers,
            splits,
            epoch,
            t_max,
            boundaries: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn max_time(ces: &BTreeMap<CeId, ComplexEvent>, outliers: &[AtomicEvent]) -> Day {
        ces.values()
            .filter_map(ComplexEvent::last_day)
            .chain(outliers.iter().map(|e| e.time))
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), EventError> {
        let sets = [&self.splits.train, &self.splits.val, &self.splits.test];
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                if let Some(id) = a.intersection(b).next() {
                    return Err(EventError::Invalid(format!("CE {id} appears in two splits")));
                }
            }
            if let Some(id) = a.iter().find(|id| !self.ces.contains_key(id)) {
                return Err(EventError::Invalid(format!("split references unknown CE {id}")));
            }
        }
        let relation_space = self.vocab.num_relations();
        for (id, ce) in &self.ces {
            if *id != ce.id {
                return Err(EventError::Invalid(format!("CE keyed {id} carries id {}", ce.id)));
            }
            ce.validate()?;
            for e in ce.events() {
                self.vocab.check_event(e, 0, relation_space)?;
            }
        }
        for e in &self.outliers {
            if e.ce != CeTag::Outlier {
                return Err(EventError::Invalid("outlier list holds a CE event".into()));
            }
            self.vocab.check_event(e, 0, relation_space)?;
        }
        if let Some(e) = self.all_events().find(|e| e.time > self.t_max) {
            return Err(EventError::Invalid(format!(
                "event at day {} beyond t_max {}",
                e.time, self.t_max
            )));
        }
        Ok(())
    }

    pub fn all_events(&self) -> impl Iterator<Item = &AtomicEvent> + '_ {
        self.ces.values().flat_map(ComplexEvent::events).chain(self.outliers.iter())
    }

    pub fn split_events(&self, split: Split) -> Vec<AtomicEvent> {
        self.splits
            .get(split)
            .iter()
            .flat_map(|id| self.ces[id].events().copied())
            .collect()
    }

    /// Object queries from every event of the CEs in `split`, sorted by
    /// `(time, ce, subject, relation, gold)`. Outliers never produce queries.
    pub fn queries(&self, split: Split) -> Vec<Query> {
        let mut out: Vec<Query> = self
            .split_events(split)
            .into_iter()
            .map(|e| Query {
                time: e.time,
                ce: e.ce.id().expect("split events belong to a CE"),
                subject: e.subject,
                relation: e.relation,
                gold: e.object,
            })
            .collect();
        out.sort();
        out
    }

    /// Copy of this dataset with inverse relations `r + |R|` added to every
    /// CE and outlier event. Relation names gain an `^-1` suffix.
    pub fn with_inverse_relations(&self) -> Result<Dataset, EventError> {
        let nr = self.vocab.num_relations();
        let mut relations = self.vocab.relations.clone();
        for i in 0..nr {
            let name = format!("{}^-1", self.vocab.relations.name(i as u32).unwrap_or_default());
            relations.intern(&name);
        }
        let mut vocab = Vocab::new(self.vocab.entities.clone(), relations);
        for (c, p) in self.vocab.hierarchy_links() {
            vocab.set_parent(c, p)?;
        }
        let ces = self
            .ces
            .iter()
            .map(|(&id, ce)| {
                let events: Vec<AtomicEvent> = ce.events().copied().collect();
                let mut rebuilt = ComplexEvent::from_events(id, add_inverse_relations(&events, nr)?);
                rebuilt.label = ce.label.clone();
                rebuilt.docs = ce.docs.clone();
                Ok((id, rebuilt))
            })
            .collect::<Result<BTreeMap<_, _>, EventError>>()?;
        Ok(Dataset {
            vocab,
            ces,
            outliers: add_inverse_relations(&self.outliers, nr)?,
            splits: self.splits.clone(),
            epoch: self.epoch,
            t_max: self.t_max,
            boundaries: self.boundaries,
        })
    }

    pub fn default_epoch() -> NaiveDate {
        NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
    }
}
