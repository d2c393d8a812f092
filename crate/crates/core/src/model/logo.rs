use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use crate::eval::{EvalError, Forecaster};
use crate::event::{history_window, CeId, Dataset, Day, Query, SnapshotIndex};
use crate::kernel::{check_gradients, read_checkpoint, write_checkpoint, Graph, KernelError, Tensor, Var};

use super::layers::{encode_branch, BranchEncoding};
use super::params::{BoundParams, Dims, LogoParams};
use super::variant::{Context, DecodeSettings, Encodings, FusionStrategy, QueryRows, VariantRegistry};
use super::{ModelConfig, ModelError};

/// Queries bucketed by day, then by CE, remembering their input positions.
type Groups = BTreeMap<Day, BTreeMap<CeId, Vec<(usize, Query)>>>;

fn group(queries: &[Query]) -> Groups {
    let mut out: Groups = BTreeMap::new();
    for (i, q) in queries.iter().enumerate() {
        out.entry(q.time).or_default().entry(q.ce).or_default().push((i, *q));
    }
    out
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Clone, Debug)]
pub struct LogoModel {
    config: ModelConfig,
    dims: Dims,
    strategy: Arc<dyn FusionStrategy>,
    params: LogoParams,
}

impl LogoModel {
    pub fn new(
        config: ModelConfig,
        entities: usize,
        relations: usize,
        registry: &VariantRegistry,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if entities == 0 || relations == 0 {
            return Err(ModelError::InvalidConfig("vocabulary must be nonempty".into()));
        }
        let strategy = registry.get(&config.variant)?;
        let dims = Dims {
            entities,
            relations,
            dim: config.dim,
            channels: config.channels,
            kernel_width: config.kernel_width,
        };
        let params = LogoParams::init(dims, &strategy.branch_layers(&config), strategy.decoders(), seed)?;
        Ok(Self {
            config,
            dims,
            strategy,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn strategy(&self) -> &dyn FusionStrategy {
        self.strategy.as_ref()
    }

    pub fn params(&self) -> &LogoParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut LogoParams {
        &mut self.params
    }

    fn encode(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        index: &SnapshotIndex,
        ctx: Context,
        ce: CeId,
        time: Day,
        slope: f64,
    ) -> Result<Option<BranchEncoding>, ModelError> {
        let Some(b) = self.strategy.branch_for(ctx) else {
            return Ok(None);
        };
        let snapshots = match ctx {
            Context::Local => index.ce_timeline(ce),
            Context::Global => &index.global,
        };
        let window = history_window(snapshots, time, ctx.history(&self.config));
        let enc = encode_branch(g, &window, &bound.branches[b], ctx.layers(&self.config), slope)?;
        Ok(Some(enc))
    }

    /// Logits for every CE group at one day. The global encoding is built
    /// once and shared by all groups.
    fn forward_day(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        index: &SnapshotIndex,
        time: Day,
        groups: &BTreeMap<CeId, Vec<(usize, Query)>>,
        slope: f64,
    ) -> Result<Vec<Var>, ModelError> {
        let global = self.encode(g, bound, index, Context::Global, 0, time, slope)?;
        let settings = DecodeSettings {
            width: self.config.kernel_width,
            slope,
        };
        let mut out = Vec::with_capacity(groups.len());
        for (&ce, qs) in groups {
            let local = self.encode(g, bound, index, Context::Local, ce, time, slope)?;
            let subjects: Vec<usize> = qs.iter().map(|(_, q)| q.subject as usize).collect();
            let relations: Vec<usize> = qs.iter().map(|(_, q)| q.relation as usize).collect();
            let rows = QueryRows {
                subjects: &subjects,
                relations: &relations,
            };
            let enc = Encodings { local, global };
            out.push(self.strategy.logits(g, &enc, &bound.decoders, rows, settings)?);
        }
        Ok(out)
    }

    /// Summed cross-entropy of `queries` recorded on `g`.
    pub(crate) fn loss_on_graph(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        index: &SnapshotIndex,
        queries: &[Query],
        slope: f64,
    ) -> Result<Var, ModelError> {
        if queries.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut total: Option<Var> = None;
        for (time, groups) in group(queries) {
            let logits = self.forward_day(g, bound, index, time, &groups, slope)?;
            for (l, qs) in logits.into_iter().zip(groups.values()) {
                let gold: Vec<usize> = qs.iter().map(|(_, q)| q.gold as usize).collect();
                let ce = g.cross_entropy(l, &gold)?;
                total = Some(match total {
                    Some(t) => g.add(t, ce)?,
                    None => ce,
                });
            }
        }
        total.ok_or(ModelError::EmptyBatch)
    }

    fn logits_for_days(
        &self,
        index: &SnapshotIndex,
        days: &[(&Day, &BTreeMap<CeId, Vec<(usize, Query)>>)],
    ) -> Result<Vec<(usize, Vec<f64>)>, ModelError> {
        let mut out = Vec::new();
        for &(&time, groups) in days {
            let mut g = Graph::new();
            let bound = self.params.bind(&mut g);
            let logits = self.forward_day(&mut g, &bound, index, time, groups, self.config.slope)?;
            for (l, qs) in logits.into_iter().zip(groups.values()) {
                let t = g.value(l);
                for (row, (pos, _)) in qs.iter().enumerate() {
                    out.push((*pos, t.row(row).to_vec()));
                }
            }
        }
        Ok(out)
    }

    /// Evaluation-mode logits, one row per query in input order. Days are
    /// scored independently across worker threads.
    pub fn logits(&self, index: &SnapshotIndex, queries: &[Query]) -> Result<Vec<Vec<f64>>, ModelError> {
        let groups = group(queries);
        let days: Vec<_> = groups.iter().collect();
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(days.len().max(1));
        let chunk = days.len().div_ceil(workers).max(1);
        let parts: Vec<Result<Vec<(usize, Vec<f64>)>, ModelError>> = std::thread::scope(|s| {
            let handles: Vec<_> = days
                .chunks(chunk)
                .map(|part| s.spawn(move || self.logits_for_days(index, part)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scoring worker panicked"))
                .collect()
        });
        let mut rows = vec![Vec::new(); queries.len()];
        for part in parts {
            for (pos, row) in part? {
                rows[pos] = row;
            }
        }
        Ok(rows)
    }

    /// Softmax distribution over entities for each query.
    pub fn probabilities(&self, index: &SnapshotIndex, queries: &[Query]) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(self.logits(index, queries)?.iter().map(|l| softmax(l)).collect())
    }

    /// Summed negative log-likelihood of the gold objects.
    pub fn loss(&self, index: &SnapshotIndex, queries: &[Query]) -> Result<f64, ModelError> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let l = self.loss_on_graph(&mut g, &bound, index, queries, self.config.slope)?;
        Ok(g.value(l).item())
    }

    /// Loss value and gradients with respect to every parameter tensor, in
    /// [`LogoParams::named_tensors`] order.
    pub fn loss_and_gradients(
        &self,
        index: &SnapshotIndex,
        queries: &[Query],
        slope: f64,
    ) -> Result<(f64, Vec<Tensor>), ModelError> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let l = self.loss_on_graph(&mut g, &bound, index, queries, slope)?;
        let value = g.value(l).item();
        let grads = g.backward(l);
        Ok((value, bound.order.iter().map(|&v| grads.wrt(v)).collect()))
    }

    /// Maximum relative error between tape gradients of the loss and central
    /// differences over all parameters.
    pub fn gradient_check(&self, index: &SnapshotIndex, queries: &[Query], eps: f64) -> Result<f64, ModelError> {
        let params = self.params.tensors();
        let loss_fn = |g: &mut Graph, vars: &[Var]| -> Result<Var, KernelError> {
            let bound = self.params.bind_vars(vars);
            self.loss_on_graph(g, &bound, index, queries, self.config.slope)
                .map_err(|e| match e {
                    ModelError::Kernel(k) => k,
                    other => KernelError::Checkpoint(other.to_string()),
                })
        };
        Ok(check_gradients(loss_fn, &params, eps)?)
    }

    pub fn save_params<W: Write>(&self, w: W) -> Result<(), ModelError> {
        let named: Vec<(String, Tensor)> = self
            .params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        Ok(write_checkpoint(w, &named)?)
    }

    /// Replaces the parameters with a checkpoint written by
    /// [`Self::save_params`] for the same configuration and vocabulary.
    pub fn load_params<R: Read>(&mut self, r: R) -> Result<(), ModelError> {
        let named = read_checkpoint(r)?;
        self.params.load_named(named)
    }
}

impl Forecaster for LogoModel {
    fn score(&self, _dataset: &Dataset, index: &SnapshotIndex, queries: &[Query]) -> Result<Vec<Vec<f64>>, EvalError> {
        self.logits(index, queries).map_err(|e| EvalError::Forecaster(Box::new(e)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{snapshot_index, AtomicEvent, CeTag, Split, Vocab};

    fn cfg(variant: &str, d: usize) -> ModelConfig {
        ModelConfig {
            dim: d,
            layers_local: 1,
            layers_global: 1,
            history_local: 2,
            history_global: 2,
            variant: variant.into(),
            channels: 2,
            kernel_width: 3,
            ..Default::default()
        }
    }

    /// Two CEs over five entities and three relations, days 0..=3.
    fn toy() -> Dataset {
        let ev = |s, r, o, t, c| AtomicEvent::new(s, r, o, t, CeTag::Ce(c));
        let train = vec![
            ev(0, 0, 1, 0, 0),
            ev(1, 1, 2, 1, 0),
            ev(2, 2, 3, 2, 0),
            ev(0, 1, 4, 3, 0),
            ev(3, 0, 4, 0, 1),
            ev(4, 2, 0, 1, 1),
            ev(1, 0, 3, 2, 1),
            ev(2, 1, 0, 3, 1),
        ];
        let outliers = vec![AtomicEvent::new(4, 1, 2, 1, CeTag::Outlier)];
        Dataset::from_split_events(
            Vocab::anonymous(5, 3),
            [(Split::Train, train), (Split::Val, vec![]), (Split::Test, vec![])],
            outliers,
            Dataset::default_epoch(),
        )
        .unwrap()
    }

    fn queries_at(ds: &Dataset, time: Day) -> Vec<Query> {
        ds.queries(Split::Train).into_iter().filter(|q| q.time == time).collect()
    }

    #[test]
    fn gradient_fidelity_full_variant() {
        let ds = toy();
        let index = snapshot_index(&ds);
        let model = LogoModel::new(cfg("full", 8), 5, 3, &VariantRegistry::builtin(), 11).unwrap();
        let mut qs = queries_at(&ds, 2);
        qs.extend(queries_at(&ds, 3));
        assert_eq!(qs.len(), 4);
        let err = model.gradient_check(&index, &qs, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn every_variant_yields_distributions() {
        let ds = toy();
        let index = snapshot_index(&ds);
        let qs = ds.queries(Split::Train);
        for name in VariantRegistry::builtin().names() {
            let model = LogoModel::new(cfg(&name, 4), 5, 3, &VariantRegistry::builtin(), 3).unwrap();
            for p in model.probabilities(&index, &qs).unwrap() {
                assert_eq!(p.len(), 5);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{name}");
                assert!(p.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[0.5, -1.0, 2.0]);
        let b = softmax(&[100.5, 99.0, 102.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_decoder_is_uniform() {
        let ds = toy();
        let index = snapshot_index(&ds);
        for name in ["full", "late"] {
            let mut model = LogoModel::new(cfg(name, 4), 5, 3, &VariantRegistry::builtin(), 3).unwrap();
            let dims = model.dims();
            for d in &mut model.params_mut().decoders {
                *d = crate::model::DecoderParams::zeros(dims);
            }
            for p in model.probabilities(&index, &ds.queries(Split::Train)).unwrap() {
                assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-12));
            }
            let q = queries_at(&ds, 1);
            let loss = model.loss(&index, &q[..1]).unwrap();
            assert!((loss - 5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn local_variant_ignores_global_context() {
        let ds = toy();
        let index = snapshot_index(&ds);
        let model = LogoModel::new(cfg("local", 4), 5, 3, &VariantRegistry::builtin(), 5).unwrap();
        let qs = ds.queries(Split::Train);
        let before = model.logits(&index, &qs).unwrap();
        let mut mutated = index.clone();
        for s in &mut mutated.global {
            s.events.push(AtomicEvent::new(3, 2, 1, s.time, CeTag::Outlier));
            s.events.reverse();
        }
        assert_eq!(model.logits(&mutated, &qs).unwrap(), before);
    }

    #[test]
    fn shared_branch_on_equal_windows_doubles_encoding() {
        // One CE that also makes up the whole global timeline, so both
        // windows coincide.
        let ev = |s, r, o, t| AtomicEvent::new(s, r, o, t, CeTag::Ce(0));
        let ds = Dataset::from_split_events(
            Vocab::anonymous(5, 3),
            [
                (Split::Train, vec![ev(0, 0, 1, 0), ev(1, 2, 3, 1), ev(2, 1, 4, 2), ev(4, 0, 2, 3)]),
                (Split::Val, vec![]),
                (Split::Test, vec![]),
            ],
            vec![],
            Dataset::default_epoch(),
        )
        .unwrap();
        let index = snapshot_index(&ds);
        let reg = VariantRegistry::builtin();
        let share = LogoModel::new(cfg("share", 4), 5, 3, &reg, 9).unwrap();
        let mut single = LogoModel::new(cfg("local", 4), 5, 3, &reg, 9).unwrap();
        *single.params_mut() = share.params().clone();

        let mut g = Graph::new();
        let bound = share.params.bind(&mut g);
        let loc = share.encode(&mut g, &bound, &index, Context::Local, 0, 3, 0.2).unwrap().unwrap();
        let glo = share.encode(&mut g, &bound, &index, Context::Global, 0, 3, 0.2).unwrap().unwrap();
        let fused = g.add(loc.entities, glo.entities).unwrap();
        let twice = g.value(loc.entities).scaled(2.0);
        assert_eq!(g.value(fused), &twice);

        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
                .0
        };
        let qs = ds.queries(Split::Train);
        let a = share.logits(&index, &qs).unwrap();
        let b = single.logits(&index, &qs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(argmax(x), argmax(y));
        }
    }

    #[test]
    fn loss_requires_queries() {
        let ds = toy();
        let model = LogoModel::new(cfg("full", 4), 5, 3, &VariantRegistry::builtin(), 1).unwrap();
        assert!(matches!(
            model.loss(&snapshot_index(&ds), &[]),
            Err(ModelError::EmptyBatch)
        ));
    }

    #[test]
    fn unknown_variant_is_rejected() {
        let err = LogoModel::new(cfg("mid", 4), 5, 3, &VariantRegistry::builtin(), 1).unwrap_err();
        assert!(matches!(err, ModelError::UnknownVariant { .. }));
    }

    #[test]
    fn checkpoint_round_trip_preserves_scores() {
        let ds = toy();
        let index = snapshot_index(&ds);
        let reg = VariantRegistry::builtin();
        let a = LogoModel::new(cfg("late", 4), 5, 3, &reg, 1).unwrap();
        let mut buf = Vec::new();
        a.save_params(&mut buf).unwrap();
        let mut b = LogoModel::new(cfg("late", 4), 5, 3, &reg, 2).unwrap();
        b.load_params(buf.as_slice()).unwrap();
        let qs = ds.queries(Split::Train);
        assert_eq!(a.logits(&index, &qs).unwrap(), b.logits(&index, &qs).unwrap());
    }
}
