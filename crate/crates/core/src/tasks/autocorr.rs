//! Autoconvolution ratio R(f) = ||f*f||_2^2 / (||f*f||_1 ||f*f||_inf) for
//! nonnegative step functions on [-1, 1].
//!
//! For a step function with n bins of width h = 2/n, f*f is exactly piecewise
//! linear with nodes at t_j = -2 + j*h. All three norms are computed from that
//! exact representation; a rectangle-rule approximation would inflate R for
//! spiky f (a single occupied bin would score 1.0 instead of the true 2/3).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tasks::Evaluation;

/// Node values g_j of f*f at t_j = -2 + j*h, j = 0..=2n.
/// g_0 = g_{2n} = 0 and g_j = h * sum_i f_i f_{j-1-i} otherwise.
pub fn autoconv_nodes(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let h = 2.0 / n as f64;
    let mut nodes = vec![0.0; 2 * n + 1];
    for (j, node) in nodes.iter_mut().enumerate().take(2 * n).skip(1) {
        let mut acc = 0.0;
        // i ranges over indices with 0 <= i < n and 0 <= j-1-i < n.
        let lo = (j as isize - n as isize).max(0) as usize;
        let hi = (j - 1).min(n - 1);
        for i in lo..=hi {
            acc += values[i] * values[j - 1 - i];
        }
        *node = h * acc;
    }
    nodes
}

/// The three norms of the piecewise-linear f*f: (sup, L1, squared L2).
pub fn autoconv_norms(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    let h = 2.0 / n as f64;
    let nodes = autoconv_nodes(values);
    let sup = nodes.iter().cloned().fold(0.0, f64::max);
    let mut l1 = 0.0;
    let mut l2_sq = 0.0;
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        // Both exact for a linear segment with nonnegative endpoints.
        l1 += h * (a + b) / 2.0;
        l2_sq += h * (a * a + a * b + b * b) / 3.0;
    }
    (sup, l1, l2_sq)
}

pub fn ratio(values: &[f64]) -> Result<f64> {
    if values.is_empty() || values.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("step function is identically zero".into()));
    }
    if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain("step values must be finite and >= 0".into()));
    }
    let (sup, l1, l2_sq) = autoconv_norms(values);
    Ok(l2_sq / (l1 * sup))
}

pub fn evaluate(values: &[f64]) -> Result<Evaluation> {
    let r = ratio(values)?;
    let (sup, l1, l2_sq) = autoconv_norms(values);
    let mut detail = BTreeMap::new();
    detail.insert("ratio".to_string(), r);
    detail.insert("norm_inf".to_string(), sup);
    detail.insert("norm_1".to_string(), l1);
    detail.insert("norm_2_sq".to_string(), l2_sq);
    Ok(Evaluation {
        score: r,
        valid: true,
        detail,
        violation: None,
    })
}
