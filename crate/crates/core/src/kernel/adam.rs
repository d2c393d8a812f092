use super::{KernelError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(like: &Tensor, config: AdamConfig) -> Self {
        Self {
            m: Tensor::zeros(like.shape()),
            v: Tensor::zeros(like.shape()),
            step: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update. Weight decay is an L2 term added to the
/// gradient before the moment updates.
pub fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<(), KernelError> {
    if param.shape() != grad.shape() || param.shape() != state.m.shape() {
        return Err(KernelError::ShapeMismatch {
            op: "adam_step",
            left: param.shape().to_vec(),
            right: grad.shape().to_vec(),
        });
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let AdamState { m, v, .. } = state;
    for (((p, &g), m), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.data_mut())
        .zip(v.data_mut())
    {
        let g = g + weight_decay * *p;
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(theta: f64, g: f64, lr: f64, wd: f64) -> (f64, u64) {
        let mut p = Tensor::filled(&[3], theta);
        let grad = Tensor::filled(&[3], g);
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &grad, &mut st, lr, wd).unwrap();
        (p.data()[0], st.step)
    }

    #[test]
    fn unit_gradient_moves_by_lr() {
        let (p, _) = run(0.0, 1.0, 0.01, 0.0);
        // m̂ = 1, v̂ = 1 → Δ = lr / (1 + ε)
        assert!((p + 0.01).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_param() {
        let (p, step) = run(0.7, 0.0, 0.01, 0.0);
        assert_eq!(p, 0.7);
        assert_eq!(step, 1);
    }

    #[test]
    fn weight_decay_enters_the_gradient() {
        // g_eff = 0 + 0.5·2 = 1 → θ = 2 - 0.01/(1+1e-8)
        let (p, _) = run(2.0, 0.0, 0.01, 0.5);
        let expected = 2.0 - 0.01 / (1.0 + 1e-8);
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 1.99).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::zeros(&[2]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(adam_step(&mut p, &Tensor::zeros(&[3]), &mut st, 0.1, 0.0).is_err());
    }

    #[test]
    fn deterministic() {
        let mut a = Tensor::new(vec![3], vec![0.1, -0.4, 2.0]).unwrap();
        let mut b = a.clone();
        let g = Tensor::new(vec![3], vec![0.3, 0.2, -1.0]).unwrap();
        let mut sa = AdamState::new(&a, AdamConfig::default());
        let mut sb = sa.clone();
        for _ in 0..5 {
            adam_step(&mut a, &g, &mut sa, 0.01, 1e-4).unwrap();
            adam_step(&mut b, &g, &mut sb, 0.01, 1e-4).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }
}
