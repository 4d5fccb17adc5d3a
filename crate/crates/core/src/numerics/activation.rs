use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn layer_norm(v: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if v.len() != gamma.len() || v.len() != beta.len() {
        return Err(Error::shape(
            "layer_norm",
            format!("v[{}] gamma[{}] beta[{}]", v.len(), gamma.len(), beta.len()),
        ));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidArgument("layer_norm eps must be positive".into()));
    }
    let mut out = vec![0.0; v.len()];
    layer_norm_row(v, gamma, beta, eps, &mut out);
    Ok(out)
}

/// Writes the normalized row into `out` and returns `1/sqrt(var + eps)`.
pub(crate) fn layer_norm_row(v: &[f64], gamma: &[f64], beta: &[f64], eps: f64, out: &mut [f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    for i in 0..v.len() {
        out[i] = (v[i] - mean) * inv_std * gamma[i] + beta[i];
    }
    inv_std
}

/// Backward pass of one layer-norm row.
///
/// `xhat` is the normalized input (before gamma/beta). Accumulates into
/// `dgamma`/`dbeta` and writes the input gradient into `dx`.
pub(crate) fn layer_norm_row_backward(
    dy: &[f64],
    xhat: &[f64],
    gamma: &[f64],
    inv_std: f64,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
    dx: &mut [f64],
) {
    let n = dy.len() as f64;
    let mut mean_dxhat = 0.0;
    let mut mean_dxhat_xhat = 0.0;
    for i in 0..dy.len() {
        dgamma[i] += dy[i] * xhat[i];
        dbeta[i] += dy[i];
        let dxh = dy[i] * gamma[i];
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * xhat[i];
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    for i in 0..dy.len() {
        let dxh = dy[i] * gamma[i];
        dx[i] = inv_std * (dxh - mean_dxhat - xhat[i] * mean_dxhat_xhat);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_examples() {
        assert_eq!(gelu(0.0), 0.0);
        // Phi(1) = 0.5 * (1 + erf(1/sqrt 2)) = 0.841344746068543
        assert!((gelu(1.0) - 0.841_344_746_068_543).abs() < 1e-12);
        assert!(gelu(-10.0).abs() < 1e-8);
    }

    #[test]
    fn gelu_odd_part_is_identity() {
        for i in -400..=400 {
            let x = i as f64 * 0.025;
            assert!((gelu(x) - gelu(-x) - x).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn gelu_monotone_above_minus_one() {
        let mut prev = gelu(-1.0);
        for i in 1..=2000 {
            let x = -1.0 + i as f64 * 0.005;
            let y = gelu(x);
            // the minimum sits near -0.7518, so only check past it
            if x > -0.75 {
                assert!(y >= prev, "gelu not monotone at {x}");
            }
            prev = y;
        }
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for i in -30..=30 {
            let x = i as f64 * 0.2;
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_examples() {
        let ones = [1.0, 1.0, 1.0];
        let zeros = [0.0, 0.0, 0.0];
        assert_eq!(layer_norm(&ones, &ones, &zeros, 1e-12).unwrap(), vec![0.0, 0.0, 0.0]);

        let y = layer_norm(&[1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0], 1e-15).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && (y[1] + 1.0).abs() < 1e-9);

        let y = layer_norm(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0], 1e-12).unwrap();
        assert_eq!(y, vec![2.0, 2.0]);
    }

    #[test]
    fn layer_norm_length_mismatch() {
        assert!(layer_norm(&[1.0, 2.0], &[1.0], &[0.0, 0.0], 1e-5).is_err());
    }

    #[test]
    fn layer_norm_standardizes() {
        let v = [3.0, -1.5, 0.25, 8.0, 2.0];
        let g = [1.0; 5];
        let b = [0.0; 5];
        let y = layer_norm(&v, &g, &b, 1e-12).unwrap();
        let mean = y.iter().sum::<f64>() / 5.0;
        let var = y.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }
}
