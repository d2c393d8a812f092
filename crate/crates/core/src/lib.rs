//! Temporal complex-event (SCTc-TE) datasets and the LoGo forecaster.
//!
//! The crate is split into the data model ([`event`]), a small reverse-mode
//! differentiation kernel ([`kernel`]), the forecaster itself ([`model`]),
//! ranking metrics ([`eval`]), and the dataset construction pipeline
//! ([`builder`]).

pub mod builder;
pub mod eval;
pub mod event;
pub mod kernel;
pub mod model;
pub mod seed;
pub mod synthetic;

pub use event::{AtomicEvent, CeTag, ComplexEvent, Dataset, HistoryWindow, Query, Snapshot, Vocab};
pub use kernel::Tensor;
