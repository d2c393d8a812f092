//! Learnable arrays of the forecaster and their tape bindings.

use crate::kernel::{xavier_init, Graph, KernelError, Tensor, Var};
use crate::seed::derive_seed;

use super::ModelError;

#[derive(Clone, Debug, PartialEq)]
pub struct RgcnWeights {
    /// Neighbor transform `W1`.
    pub neighbor: Tensor,
    /// Self-loop transform `W2`.
    pub self_loop: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub wz: Tensor,
    pub uz: Tensor,
    pub bz: Tensor,
    pub wr: Tensor,
    pub ur: Tensor,
    pub br: Tensor,
    pub wh: Tensor,
    pub uh: Tensor,
    pub bh: Tensor,
}

/// One context encoder: initial entity table, static relation table,
/// propagation layers and the GRU kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchParams {
    pub entity_table: Tensor,
    pub relation_table: Tensor,
    pub layers: Vec<RgcnWeights>,
    pub gru: GruParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    /// `C × (2·k)`, laid out `[channel][input row][tap]`.
    pub kernel: Tensor,
    pub conv_bias: Tensor,
    /// `(C·d) × d`.
    pub projection: Tensor,
    pub proj_bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogoParams {
    pub branches: Vec<BranchParams>,
    pub decoders: Vec<DecoderParams>,
}

#[derive(Clone, Copy, Debug)]
pub struct RgcnVars {
    pub neighbor: Var,
    pub self_loop: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub wz: Var,
    pub uz: Var,
    pub bz: Var,
    pub wr: Var,
    pub ur: Var,
    pub br: Var,
    pub wh: Var,
    pub uh: Var,
    pub bh: Var,
}

#[derive(Clone, Debug)]
pub struct BranchVars {
    pub entity_table: Var,
    pub relation_table: Var,
    pub layers: Vec<RgcnVars>,
    pub gru: GruVars,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderVars {
    pub kernel: Var,
    pub conv_bias: Var,
    pub projection: Var,
    pub proj_bias: Var,
}

/// Parameters bound to one tape, in [`LogoParams::named_tensors`] order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub branches: Vec<BranchVars>,
    pub decoders: Vec<DecoderVars>,
    pub order: Vec<Var>,
}

/// Sizes needed to allocate parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub entities: usize,
    pub relations: usize,
    pub dim: usize,
    pub channels: usize,
    pub kernel_width: usize,
}

impl BranchParams {
    pub fn init(dims: Dims, layers: usize, seed: u64) -> Result<Self, KernelError> {
        let d = dims.dim;
        let x = |label: String, shape: &[usize]| xavier_init(shape, derive_seed(seed, &label));
        let layers = (0..layers)
            .map(|l| {
                Ok(RgcnWeights {
                    neighbor: x(format!("w1.{l}"), &[d, d])?,
                    self_loop: x(format!("w2.{l}"), &[d, d])?,
                })
            })
            .collect::<Result<Vec<_>, KernelError>>()?;
        let zeros = || Tensor::zeros(&[1, d]);
        Ok(Self {
            entity_table: x("entities".into(), &[dims.entities, d])?,
            relation_table: x("relations".into(), &[dims.relations, d])?,
            layers,
            gru: GruParams {
                wz: x("wz".into(), &[d, d])?,
                uz: x("uz".into(), &[d, d])?,
                bz: zeros(),
                wr: x("wr".into(), &[d, d])?,
                ur: x("ur".into(), &[d, d])?,
                br: zeros(),
                wh: x("wh".into(), &[d, d])?,
                uh: x("uh".into(), &[d, d])?,
                bh: zeros(),
            },
        })
    }
}

impl DecoderParams {
    pub fn init(dims: Dims, seed: u64) -> Result<Self, KernelError> {
        let (c, k, d) = (dims.channels, dims.kernel_width, dims.dim);
        Ok(Self {
            kernel: xavier_init(&[c, 2 * k], derive_seed(seed, "kernel"))?,
            conv_bias: Tensor::zeros(&[1, c]),
            projection: xavier_init(&[c * d, d], derive_seed(seed, "projection"))?,
            proj_bias: Tensor::zeros(&[1, d]),
        })
    }

    pub fn zeros(dims: Dims) -> Self {
        let (c, k, d) = (dims.channels, dims.kernel_width, dims.dim);
        Self {
            kernel: Tensor::zeros(&[c, 2 * k]),
            conv_bias: Tensor::zeros(&[1, c]),
            projection: Tensor::zeros(&[c * d, d]),
            proj_bias: Tensor::zeros(&[1, d]),
        }
    }
}

impl LogoParams {
    /// Allocates `layers_per_branch.len()` branches and `decoders` decoders.
    pub fn init(dims: Dims, layers_per_branch: &[usize], decoders: usize, seed: u64) -> Result<Self, KernelError> {
        let branches = layers_per_branch
            .iter()
            .enumerate()
            .map(|(i, &l)| BranchParams::init(dims, l, derive_seed(seed, &format!("branch{i}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let decoders = (0..decoders)
            .map(|i| DecoderParams::init(dims, derive_seed(seed, &format!("decoder{i}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { branches, decoders })
    }

    /// Every tensor with a stable dotted name, in binding order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (b, br) in self.branches.iter().enumerate() {
            out.push((format!("branch{b}.entity_table"), &br.entity_table));
            out.push((format!("branch{b}.relation_table"), &br.relation_table));
            for (l, layer) in br.layers.iter().enumerate() {
                out.push((format!("branch{b}.rgcn{l}.neighbor"), &layer.neighbor));
                out.push((format!("branch{b}.rgcn{l}.self_loop"), &layer.self_loop));
            }
            let g = &br.gru;
            for (n, t) in [
                ("wz", &g.wz),
                ("uz", &g.uz),
                ("bz", &g.bz),
                ("wr", &g.wr),
                ("ur", &g.ur),
                ("br", &g.br),
                ("wh", &g.wh),
                ("uh", &g.uh),
                ("bh", &g.bh),
            ] {
                out.push((format!("branch{b}.gru.{n}"), t));
            }
        }
        for (i, dec) in self.decoders.iter().enumerate() {
            out.push((format!("decoder{i}.kernel"), &dec.kernel));
            out.push((format!("decoder{i}.conv_bias"), &dec.conv_bias));
            out.push((format!("decoder{i}.projection"), &dec.projection));
            out.push((format!("decoder{i}.proj_bias"), &dec.proj_bias));
        }
        out
    }

    /// Mutable tensors in the same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for br in &mut self.branches {
            out.push(&mut br.entity_table);
            out.push(&mut br.relation_table);
            for layer in &mut br.layers {
                out.push(&mut layer.neighbor);
                out.push(&mut layer.self_loop);
            }
            let g = &mut br.gru;
            out.extend([
                &mut g.wz, &mut g.uz, &mut g.bz, &mut g.wr, &mut g.ur, &mut g.br, &mut g.wh, &mut g.uh, &mut g.bh,
            ]);
        }
        for dec in &mut self.decoders {
            out.extend([&mut dec.kernel, &mut dec.conv_bias, &mut dec.projection, &mut dec.proj_bias]);
        }
        out
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t.clone()).collect()
    }

    /// Adds every tensor to `g` as a leaf.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        let vars: Vec<Var> = self.named_tensors().into_iter().map(|(_, t)| g.leaf(t.clone())).collect();
        self.bind_vars(&vars)
    }

    /// Rebuilds the parameter structure over already-created leaves given
    /// in [`Self::named_tensors`] order.
    pub fn bind_vars(&self, vars: &[Var]) -> BoundParams {
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("one var per parameter tensor");
        let branches = self
            .branches
            .iter()
            .map(|br| BranchVars {
                entity_table: next(),
                relation_table: next(),
                layers: br
                    .layers
                    .iter()
                    .map(|_| RgcnVars {
                        neighbor: next(),
                        self_loop: next(),
                    })
                    .collect(),
                gru: GruVars {
                    wz: next(),
                    uz: next(),
                    bz: next(),
                    wr: next(),
                    ur: next(),
                    br: next(),
                    wh: next(),
                    uh: next(),
                    bh: next(),
                },
            })
            .collect();
        let decoders = self
            .decoders
            .iter()
            .map(|_| DecoderVars {
                kernel: next(),
                conv_bias: next(),
                projection: next(),
                proj_bias: next(),
            })
            .collect();
        BoundParams {
            branches,
            decoders,
            order: vars.to_vec(),
        }
    }

    /// Replaces tensors from `(name, tensor)` pairs; names and shapes must
    /// match this parameter set exactly.
    pub fn load_named(&mut self, named: Vec<(String, Tensor)>) -> Result<(), ModelError> {
        let expected: Vec<(String, Vec<usize>)> = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected.len() != named.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                named.len()
            )));
        }
        for ((name, shape), (got_name, got)) in expected.iter().zip(&named) {
            if name != got_name || shape.as_slice() != got.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {got_name} {:?} does not match {name} {shape:?}",
                    got.shape()
                )));
            }
        }
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(named) {
            *dst = src;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            entities: 5,
            relations: 3,
            dim: 4,
            channels: 2,
            kernel_width: 3,
        }
    }

    #[test]
    fn named_and_mutable_orders_agree() {
        let mut p = LogoParams::init(dims(), &[2, 1], 2, 7).unwrap();
        let shapes: Vec<Vec<usize>> = p.named_tensors().iter().map(|(_, t)| t.shape().to_vec()).collect();
        let mut_shapes: Vec<Vec<usize>> = p.tensors_mut().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, mut_shapes);
        let mut g = Graph::new();
        let bound = p.bind(&mut g);
        assert_eq!(bound.order.len(), shapes.len());
        assert_eq!(g.value(bound.branches[1].gru.bh).shape(), &[1, 4]);
        assert_eq!(g.value(bound.decoders[1].projection).shape(), &[8, 4]);
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(LogoParams::init(dims(), &[1], 1, 3).unwrap(), LogoParams::init(dims(), &[1], 1, 3).unwrap());
        assert_ne!(LogoParams::init(dims(), &[1], 1, 3).unwrap(), LogoParams::init(dims(), &[1], 1, 4).unwrap());
    }

    #[test]
    fn load_named_checks_layout() {
        let src = LogoParams::init(dims(), &[1], 1, 3).unwrap();
        let mut dst = LogoParams::init(dims(), &[1], 1, 9).unwrap();
        let named: Vec<(String, Tensor)> = src.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        dst.load_named(named.clone()).unwrap();
        assert_eq!(dst, src);
        let mut wrong = LogoParams::init(dims(), &[2], 1, 9).unwrap();
        assert!(wrong.load_named(named).is_err());
    }
}
