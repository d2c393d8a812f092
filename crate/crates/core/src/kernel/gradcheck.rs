//! Central-difference verification of reverse-mode gradients.

use super::{Graph, KernelError, Tensor, Var};

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(loss_fn: &F, params: &[Tensor]) -> Result<f64, KernelError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, KernelError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let out = loss_fn(&mut g, &vars)?;
    let value = g.value(out).item();
    if !value.is_finite() {
        return Err(KernelError::NonFiniteLoss(value));
    }
    Ok(value)
}

/// Compares supplied `analytic` gradients against central differences of
/// `value_fn` and returns the maximum relative error. `coords` restricts the
/// check to `(param, element)` pairs; `None` checks every element.
pub fn compare_gradients<V>(
    value_fn: V,
    analytic: &[Tensor],
    params: &[Tensor],
    eps: f64,
    coords: Option<&[(usize, usize)]>,
) -> Result<f64, KernelError>
where
    V: Fn(&[Tensor]) -> Result<f64, KernelError>,
{
    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = params
                .iter()
                .enumerate()
                .flat_map(|(p, t)| (0..t.len()).map(move |i| (p, i)))
                .collect();
            &all
        }
    };
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for &(p, i) in coords {
        let orig = work[p].data()[i];
        work[p].data_mut()[i] = orig + eps;
        let plus = value_fn(&work)?;
        work[p].data_mut()[i] = orig - eps;
        let minus = value_fn(&work)?;
        work[p].data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(KernelError::NonFiniteLoss(if plus.is_finite() { minus } else { plus }));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[p].data()[i], numeric));
    }
    Ok(worst)
}

/// Maximum relative error between the tape's gradients of `loss_fn` and
/// central differences, over every coordinate of every parameter.
pub fn check_gradients<F>(loss_fn: F, params: &[Tensor], eps: f64) -> Result<f64, KernelError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, KernelError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let out = loss_fn(&mut g, &vars)?;
    let value = g.value(out).item();
    if !value.is_finite() {
        return Err(KernelError::NonFiniteLoss(value));
    }
    let grads = g.backward(out);
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();
    compare_gradients(|ps| evaluate(&loss_fn, ps), &analytic, params, eps, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(g: &mut Graph, p: &[Var]) -> Result<Var, KernelError> {
        let sq = g.mul(p[0], p[0])?;
        Ok(g.sum_all(sq))
    }

    #[test]
    fn square_at_three() {
        let err = check_gradients(square, &[Tensor::scalar(3.0)], 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let err = check_gradients(
            |g, p| {
                let z = g.affine(p[0], 0.0, 4.0);
                Ok(g.sum_all(z))
            },
            &[Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()],
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let x = Tensor::scalar(3.0);
        let corrupted = Tensor::scalar(12.0); // true gradient is 6
        let err = compare_gradients(|p| Ok(p[0].item().powi(2)), &[corrupted], &[x], 1e-5, None).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "{err}");
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let res = check_gradients(
            |g, p| {
                let z = g.affine(p[0], f64::INFINITY, 0.0);
                Ok(g.sum_all(z))
            },
            &[Tensor::scalar(1.0)],
            1e-5,
        );
        assert!(matches!(res, Err(KernelError::NonFiniteLoss(_))));
    }
}
