//! Circle-packing verification in the unit square: sum of radii, maximized,
//! subject to pairwise non-overlap and containment.
//!
//! Two verification modes: `Exact` (zero slack) and `Relaxed` (slack 1e-6).
//! The pair models a source/target environment split where the relaxed
//! verifier admits solutions the exact one rejects.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tasks::{Circle, Evaluation};

pub const RELAXED_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    Exact,
    Relaxed,
}

impl VerifyMode {
    pub fn slack(self) -> f64 {
        match self {
            VerifyMode::Exact => 0.0,
            VerifyMode::Relaxed => RELAXED_SLACK,
        }
    }
}

pub fn evaluate(circles: &[Circle], mode: VerifyMode) -> Result<Evaluation> {
    for c in circles {
        if c.r < 0.0 {
            return Err(Error::Domain(format!("radius {} must be >= 0", c.r)));
        }
    }
    let slack = mode.slack();
    let mut min_gap = f64::INFINITY;
    let mut violation: Option<String> = None;

    for (i, c) in circles.iter().enumerate() {
        let margin = [c.x - c.r, 1.0 - c.r - c.x, c.y - c.r, 1.0 - c.r - c.y]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        min_gap = min_gap.min(margin);
        if margin < -slack && violation.is_none() {
            violation = Some(format!("circle {i} outside unit square by {:.3e}", -margin));
        }
    }
    for i in 0..circles.len() {
        for j in i + 1..circles.len() {
            let (a, b) = (&circles[i], &circles[j]);
            let dist = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
            let gap = dist - (a.r + b.r);
            min_gap = min_gap.min(gap);
            if gap < -slack && violation.is_none() {
                violation = Some(format!("circles {i} and {j} overlap by {:.3e}", -gap));
            }
        }
    }

    let sum_radii: f64 = circles.iter().map(|c| c.r).sum();
    let valid = violation.is_none();
    let mut detail = BTreeMap::new();
    detail.insert("sum_radii".to_string(), sum_radii);
    if min_gap.is_finite() {
        detail.insert("min_gap".to_string(), min_gap);
    }
    Ok(Evaluation {
        score: if valid { sum_radii } else { 0.0 },
        valid,
        detail,
        violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64, y: f64, r: f64) -> Circle {
        Circle { x, y, r }
    }

    #[test]
    fn inscribed_circle_scores_half() {
        let ev = evaluate(&[c(0.5, 0.5, 0.5)], VerifyMode::Exact).unwrap();
        assert!(ev.valid);
        assert_eq!(ev.score, 0.5);
    }

    #[test]
    fn overlap_invalidates() {
        let ev = evaluate(&[c(0.5, 0.5, 0.3), c(0.6, 0.5, 0.3)], VerifyMode::Exact).unwrap();
        assert!(!ev.valid);
        assert_eq!(ev.score, 0.0);
        assert!(ev.violation.as_deref().unwrap().contains("overlap"));
    }

    #[test]
    fn tiny_overlap_splits_relaxed_and_exact() {
        // Two circles at distance r_i + r_j - 5e-7.
        let gap = -5e-7;
        let pair = [c(0.3, 0.5, 0.2), c(0.3 + 0.4 + gap, 0.5, 0.2)];
        let relaxed = evaluate(&pair, VerifyMode::Relaxed).unwrap();
        let exact = evaluate(&pair, VerifyMode::Exact).unwrap();
        assert!(relaxed.valid);
        assert!(!exact.valid);
    }

    #[test]
    fn negative_radius_rejected() {
        assert!(evaluate(&[c(0.5, 0.5, -0.1)], VerifyMode::Exact).is_err());
    }

    #[test]
    fn min_gap_reports_most_negative_slack() {
        let ev = evaluate(&[c(0.5, 0.5, 0.6)], VerifyMode::Exact).unwrap();
        assert!((ev.detail["min_gap"] - (-0.1)).abs() < 1e-12);
    }
}
