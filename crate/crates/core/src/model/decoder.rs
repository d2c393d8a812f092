//! Convolutional translation decoder: subject and relation rows are stacked
//! as a two-row signal, convolved, flattened and projected back to `d`.

use crate::kernel::{Graph, Var};

use super::params::DecoderVars;
use super::ModelError;

/// Decodes `B` (subject, relation) row pairs into `B×d` query vectors.
pub fn decode(
    g: &mut Graph,
    dec: &DecoderVars,
    subjects: Var,
    relations: Var,
    width: usize,
    slope: f64,
) -> Result<Var, ModelError> {
    let conv = g.conv_stack(subjects, relations, dec.kernel, dec.conv_bias, width)?;
    let hidden = g.leaky(conv, slope);
    let proj = g.matmul(hidden, dec.projection)?;
    let proj = g.add_row(proj, dec.proj_bias)?;
    Ok(g.leaky(proj, slope))
}

/// Query vectors against every candidate row: `B×|E|` logits.
pub fn score_candidates(g: &mut Graph, queries: Var, candidates: Var) -> Result<Var, ModelError> {
    Ok(g.matmul_nt(queries, candidates)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Tensor;
    use crate::model::params::{DecoderParams, Dims};

    fn dims() -> Dims {
        Dims {
            entities: 4,
            relations: 2,
            dim: 3,
            channels: 2,
            kernel_width: 3,
        }
    }

    #[test]
    fn zero_decoder_gives_equal_logits() {
        let p = DecoderParams::zeros(dims());
        let mut g = Graph::new();
        let dec = DecoderVars {
            kernel: g.leaf(p.kernel.clone()),
            conv_bias: g.leaf(p.conv_bias.clone()),
            projection: g.leaf(p.projection.clone()),
            proj_bias: g.leaf(p.proj_bias.clone()),
        };
        let s = g.leaf(Tensor::filled(&[2, 3], 0.7));
        let r = g.leaf(Tensor::filled(&[2, 3], -0.2));
        let v = decode(&mut g, &dec, s, r, 3, 0.2).unwrap();
        let cand = g.leaf(Tensor::matrix(4, 3, (0..12).map(|i| i as f64).collect()).unwrap());
        let logits = score_candidates(&mut g, v, cand).unwrap();
        assert!(g.value(logits).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn positive_homogeneity_without_biases() {
        let p = DecoderParams::init(dims(), 4).unwrap();
        let mut g = Graph::new();
        let dec = DecoderVars {
            kernel: g.leaf(p.kernel.clone()),
            conv_bias: g.leaf(p.conv_bias.clone()),
            projection: g.leaf(p.projection.clone()),
            proj_bias: g.leaf(p.proj_bias.clone()),
        };
        let st = Tensor::matrix(1, 3, vec![0.3, -1.0, 0.5]).unwrap();
        let rt = Tensor::matrix(1, 3, vec![-0.4, 0.2, 0.9]).unwrap();
        let (s, r) = (g.leaf(st.clone()), g.leaf(rt.clone()));
        let (s2, r2) = (g.leaf(st.scaled(2.0)), g.leaf(rt.scaled(2.0)));
        let v = decode(&mut g, &dec, s, r, 3, 0.2).unwrap();
        let v2 = decode(&mut g, &dec, s2, r2, 3, 0.2).unwrap();
        let doubled = g.value(v).scaled(2.0);
        assert!(g.value(v2).max_abs_diff(&doubled).unwrap() < 1e-12);
    }
}
