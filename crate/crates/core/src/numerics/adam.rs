use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn for_tensors(params: &[&Matrix]) -> Self {
        Self::new(params.iter().map(|p| p.data().len()))
    }
}

/// One bias-corrected Adam update over a list of tensors.
///
/// Gradients are validated before anything is touched, so a non-finite
/// gradient leaves both parameters and state unchanged.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} params, {} grads, {} state buffers", params.len(), grads.len(), state.m.len()),
        ));
    }
    if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
        return Err(Error::InvalidArgument("adam betas must lie in [0, 1)".into()));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.data().len() != g.data().len() || m.len() != g.data().len() {
            return Err(Error::shape("adam_step", "parameter/gradient size mismatch"));
        }
        if !g.is_finite() {
            return Err(Error::GradientOverflow);
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64) -> Matrix {
        Matrix::row_vector(vec![w])
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Matrix::row_vector(vec![1.0, -2.0, 3.5]);
        let g = Matrix::zeros(1, 3);
        let mut st = AdamState::for_tensors(&[&p]);
        adam_step(&mut [&mut p], &[&g], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 3.5]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = single(1.0);
        let g = single(1.0);
        let mut st = AdamState::for_tensors(&[&p]);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        adam_step(&mut [&mut p], &[&g], &mut st, &cfg).unwrap();
        // m_hat = v_hat = 1 so the step is lr / (1 + eps)
        assert!((p.data()[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn moments_decay_under_zero_gradients() {
        let mut p = single(0.0);
        let mut st = AdamState::for_tensors(&[&p]);
        let cfg = AdamConfig::default();
        adam_step(&mut [&mut p], &[&single(2.0)], &mut st, &cfg).unwrap();
        let (m1, v1) = (st.m[0][0], st.v[0][0]);
        assert!((m1 - 0.2).abs() < 1e-15);
        assert!((v1 - 0.004).abs() < 1e-15);
        adam_step(&mut [&mut p], &[&single(0.0)], &mut st, &cfg).unwrap();
        adam_step(&mut [&mut p], &[&single(0.0)], &mut st, &cfg).unwrap();
        assert!((st.m[0][0] - m1 * 0.9 * 0.9).abs() < 1e-15);
        assert!((st.v[0][0] - v1 * 0.999 * 0.999).abs() < 1e-15);
        assert_eq!(st.t, 3);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = Matrix::row_vector(vec![0.3, -0.7]);
        let before = p.clone();
        let mut st = AdamState::for_tensors(&[&p]);
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        for _ in 0..5 {
            adam_step(&mut [&mut p], &[&Matrix::row_vector(vec![1.0, -4.0])], &mut st, &cfg).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = single(1.0);
        let mut st = AdamState::for_tensors(&[&p]);
        let err = adam_step(&mut [&mut p], &[&single(f64::NAN)], &mut st, &AdamConfig::default());
        assert!(matches!(err, Err(Error::GradientOverflow)));
        assert_eq!(p.data(), &[1.0]);
        assert_eq!(st.t, 0);
    }
}
