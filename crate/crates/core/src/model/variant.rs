//! Fusion strategies, looked up by name at runtime.
//!
//! A strategy decides how many parameter branches and decoders a model owns,
//! which branch encodes each context, and how the encodings become logits.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::kernel::{Graph, Var};

use super::config::ModelConfig;
use super::decoder::{decode, score_candidates};
use super::layers::BranchEncoding;
use super::params::DecoderVars;
use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Context {
    Local,
    Global,
}

impl Context {
    pub fn layers(self, cfg: &ModelConfig) -> usize {
        match self {
            Context::Local => cfg.layers_local,
            Context::Global => cfg.layers_global,
        }
    }

    pub fn history(self, cfg: &ModelConfig) -> usize {
        match self {
            Context::Local => cfg.history_local,
            Context::Global => cfg.history_global,
        }
    }
}

/// Context encodings for one group of queries. A context the strategy does
/// not use is `None`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Encodings {
    pub local: Option<BranchEncoding>,
    pub global: Option<BranchEncoding>,
}

/// Subject and relation ids of a query batch.
#[derive(Clone, Copy, Debug)]
pub struct QueryRows<'a> {
    pub subjects: &'a [usize],
    pub relations: &'a [usize],
}

/// Decoder geometry shared by every strategy.
#[derive(Clone, Copy, Debug)]
pub struct DecodeSettings {
    pub width: usize,
    pub slope: f64,
}

pub trait FusionStrategy: Send + Sync {
    fn name(&self) -> &str;

    /// Propagation depth allocated for each parameter branch.
    fn branch_layers(&self, cfg: &ModelConfig) -> Vec<usize>;

    fn decoders(&self) -> usize;

    /// Which parameter branch encodes `ctx`; `None` if the context is unused.
    fn branch_for(&self, ctx: Context) -> Option<usize>;

    /// `B×|E|` logits for the batch.
    fn logits(
        &self,
        g: &mut Graph,
        enc: &Encodings,
        decoders: &[DecoderVars],
        rows: QueryRows<'_>,
        settings: DecodeSettings,
    ) -> Result<Var, ModelError>;
}

impl fmt::Debug for dyn FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FusionStrategy({})", self.name())
    }
}

fn branch_layers_from(map: &[(Context, Option<usize>)], cfg: &ModelConfig) -> Vec<usize> {
    let n = map.iter().filter_map(|(_, b)| *b).max().map_or(0, |m| m + 1);
    let mut layers = vec![0; n];
    for &(ctx, b) in map {
        if let Some(b) = b {
            layers[b] = layers[b].max(ctx.layers(cfg));
        }
    }
    layers
}

fn sum_tables(g: &mut Graph, enc: &Encodings) -> Result<(Var, Var), ModelError> {
    match (enc.local, enc.global) {
        (Some(a), Some(b)) => Ok((g.add(a.entities, b.entities)?, g.add(a.relations, b.relations)?)),
        (Some(a), None) | (None, Some(a)) => Ok((a.entities, a.relations)),
        (None, None) => Err(ModelError::InvalidConfig("no context encoding available".into())),
    }
}

/// Sums the available context encodings before a single decoder. Covers the
/// two-branch model, either single-context model and the shared-parameter
/// model, depending on the branch mapping.
pub struct EarlyFusion {
    name: String,
    local: Option<usize>,
    global: Option<usize>,
}

impl EarlyFusion {
    pub fn new(name: impl Into<String>, local: Option<usize>, global: Option<usize>) -> Self {
        Self {
            name: name.into(),
            local,
            global,
        }
    }
}

impl FusionStrategy for EarlyFusion {
    fn name(&self) -> &str {
        &self.name
    }

    fn branch_layers(&self, cfg: &ModelConfig) -> Vec<usize> {
        branch_layers_from(&[(Context::Local, self.local), (Context::Global, self.global)], cfg)
    }

    fn decoders(&self) -> usize {
        1
    }

    fn branch_for(&self, ctx: Context) -> Option<usize> {
        match ctx {
            Context::Local => self.local,
            Context::Global => self.global,
        }
    }

    fn logits(
        &self,
        g: &mut Graph,
        enc: &Encodings,
        decoders: &[DecoderVars],
        rows: QueryRows<'_>,
        settings: DecodeSettings,
    ) -> Result<Var, ModelError> {
        let dec = decoders
            .first()
            .ok_or_else(|| ModelError::InvalidConfig("missing decoder".into()))?;
        let (ents, rels) = sum_tables(g, enc)?;
        let s = g.gather(ents, rows.subjects)?;
        let r = g.gather(rels, rows.relations)?;
        let v = decode(g, dec, s, r, settings.width, settings.slope)?;
        score_candidates(g, v, ents)
    }
}

/// Each context passes its own decoder; the decoded vectors are summed and
/// scored against the summed entity tables.
pub struct LateFusion;

impl FusionStrategy for LateFusion {
    fn name(&self) -> &str {
        "late"
    }

    fn branch_layers(&self, cfg: &ModelConfig) -> Vec<usize> {
        vec![cfg.layers_local, cfg.layers_global]
    }

    fn decoders(&self) -> usize {
        2
    }

    fn branch_for(&self, ctx: Context) -> Option<usize> {
        Some(match ctx {
            Context::Local => 0,
            Context::Global => 1,
        })
    }

    fn logits(
        &self,
        g: &mut Graph,
        enc: &Encodings,
        decoders: &[DecoderVars],
        rows: QueryRows<'_>,
        settings: DecodeSettings,
    ) -> Result<Var, ModelError> {
        let (Some(local), Some(global)) = (enc.local, enc.global) else {
            return Err(ModelError::InvalidConfig("late fusion needs both contexts".into()));
        };
        if decoders.len() < 2 {
            return Err(ModelError::InvalidConfig("late fusion needs two decoders".into()));
        }
        let mut decoded = Vec::with_capacity(2);
        for (e, dec) in [local, global].iter().zip(decoders) {
            let s = g.gather(e.entities, rows.subjects)?;
            let r = g.gather(e.relations, rows.relations)?;
            decoded.push(decode(g, dec, s, r, settings.width, settings.slope)?);
        }
        let v = g.add(decoded[0], decoded[1])?;
        let cand = g.add(local.entities, global.entities)?;
        score_candidates(g, v, cand)
    }
}

/// Name-indexed set of fusion strategies.
#[derive(Clone, Default)]
pub struct VariantRegistry {
    entries: BTreeMap<String, Arc<dyn FusionStrategy>>,
}

impl VariantRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// `full`, `local`, `global`, `share` and `late`.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(EarlyFusion::new("full", Some(0), Some(1))));
        reg.register(Arc::new(EarlyFusion::new("local", Some(0), None)));
        reg.register(Arc::new(EarlyFusion::new("global", None, Some(0))));
        reg.register(Arc::new(EarlyFusion::new("share", Some(0), Some(0))));
        reg.register(Arc::new(LateFusion));
        reg
    }

    /// Adds or replaces a strategy under its own name.
    pub fn register(&mut self, strategy: Arc<dyn FusionStrategy>) {
        self.entries.insert(strategy.name().to_string(), strategy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn FusionStrategy>, ModelError> {
        self.entries
            .get(name)
            .cloned()
            .ok_or_else(|| ModelError::UnknownVariant {
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }
}

impl fmt::Debug for VariantRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}
