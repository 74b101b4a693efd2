//! Outcome-level metrics: deterministic real-valued functionals of a
//! solution payload. Each metric doubles as a planner action in both
//! directions.
//!
//! Variance and standard deviation are population (no Bessel correction)
//! throughout. Degenerate cases (singular matrix, zero radius, single
//! circle) report flagged sentinel values so ranking stays total.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tasks::hadamard::{exact_det, LOG10_DET_SENTINEL};
use crate::tasks::{Circle, SolutionPayload, TaskId};
use num_traits::{Signed, ToPrimitive, Zero};

/// Threshold below which a step value counts as sparse.
pub const SPARSITY_EPS: f64 = 1e-6;

/// Computed metric values plus notes about degenerate sentinels.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricSet {
    pub values: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

pub const HADAMARD_METRICS: [&str; 4] = [
    "row_orthogonality_deviation",
    "row_sum_variance",
    "element_balance",
    "log10_abs_det",
];

pub const AUTOCORR_METRICS: [&str; 6] = [
    "smoothness_score",
    "center_concentration",
    "sparsity",
    "peak_to_average_ratio",
    "tail_mass",
    "entropy",
];

pub const CIRCLE_METRICS: [&str; 7] = [
    "density_score",
    "center_spread_index",
    "radius_std_normalized",
    "neighbor_distance_ratio",
    "large_circle_margin",
    "pairwise_radii_product_sum",
    "centroid_distance_variance",
];

/// Registered metric names for a task, in registry order.
pub fn metric_names(task: TaskId) -> &'static [&'static str] {
    match task {
        TaskId::Hadamard => &HADAMARD_METRICS,
        TaskId::Autocorr => &AUTOCORR_METRICS,
        TaskId::CirclePacking => &CIRCLE_METRICS,
    }
}

fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
}

pub fn hadamard_metrics(entries: &[Vec<i8>]) -> Result<MetricSet> {
    let n = entries.len();
    if n < 2 {
        return Err(Error::Domain(
            "row orthogonality is undefined for n < 2".into(),
        ));
    }
    let mut values = BTreeMap::new();
    let mut flags = Vec::new();

    let mut dev_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dot: i64 = (0..n)
                .map(|k| entries[i][k] as i64 * entries[j][k] as i64)
                .sum();
            dev_sum += dot.abs() as f64;
        }
    }
    values.insert(
        "row_orthogonality_deviation".to_string(),
        dev_sum / (n * (n - 1)) as f64,
    );

    let row_sums: Vec<f64> = entries
        .iter()
        .map(|r| r.iter().map(|&v| v as i64).sum::<i64>() as f64)
        .collect();
    values.insert("row_sum_variance".to_string(), population_variance(&row_sums));

    let plus = entries
        .iter()
        .flatten()
        .filter(|&&v| v == 1)
        .count();
    values.insert("element_balance".to_string(), plus as f64 / (n * n) as f64);

    let det = exact_det(entries)?;
    let log10 = if det.is_zero() {
        flags.push("log10_abs_det: singular matrix, sentinel -999".to_string());
        LOG10_DET_SENTINEL
    } else {
        det.abs().to_f64().unwrap_or(f64::INFINITY).log10()
    };
    values.insert("log10_abs_det".to_string(), log10);

    Ok(MetricSet { values, flags })
}

pub fn autocorr_metrics(values_in: &[f64]) -> Result<MetricSet> {
    let n = values_in.len();
    if n == 0 {
        return Err(Error::Domain("empty step function".into()));
    }
    let total: f64 = values_in.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput("step function is identically zero".into()));
    }
    let mut values = BTreeMap::new();
    let mut flags = Vec::new();

    let smoothness = if n == 1 {
        flags.push("smoothness_score: undefined for n=1, reported as 0".to_string());
        0.0
    } else {
        values_in
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .sum::<f64>()
            / (n - 1) as f64
    };
    values.insert("smoothness_score".to_string(), smoothness);

    // Bin midpoints x_i = -1 + (i + 0.5) * 2/n; |x_i| <= 0.5 is the center.
    let h = 2.0 / n as f64;
    let mut center = 0.0;
    for (i, &f) in values_in.iter().enumerate() {
        let x = -1.0 + (i as f64 + 0.5) * h;
        if x.abs() <= 0.5 {
            center += f;
        }
    }
    let center_concentration = center / total;
    values.insert("center_concentration".to_string(), center_concentration);
    // Complement, not an independent sum: the partition must be exact.
    values.insert("tail_mass".to_string(), 1.0 - center_concentration);

    let sparse = values_in.iter().filter(|&&v| v < SPARSITY_EPS).count();
    values.insert("sparsity".to_string(), sparse as f64 / n as f64);

    let max = values_in.iter().cloned().fold(f64::MIN, f64::max);
    let mean = total / n as f64;
    values.insert("peak_to_average_ratio".to_string(), max / mean);

    let entropy = -values_in
        .iter()
        .map(|&f| {
            let p = f / total;
            if p > 0.0 {
                p * p.ln()
            } else {
                0.0
            }
        })
        .sum::<f64>();
    values.insert("entropy".to_string(), entropy);

    Ok(MetricSet { values, flags })
}

pub fn circle_metrics(circles: &[Circle]) -> Result<MetricSet> {
    let n = circles.len();
    if n == 0 {
        return Err(Error::Domain("empty packing".into()));
    }
    let mut values = BTreeMap::new();
    let mut flags = Vec::new();
    let nf = n as f64;

    let density: f64 = circles.iter().map(|c| std::f64::consts::PI * c.r * c.r).sum();
    values.insert("density_score".to_string(), density);

    let spread = circles
        .iter()
        .map(|c| ((c.x - 0.5).powi(2) + (c.y - 0.5).powi(2)).sqrt())
        .sum::<f64>()
        / nf;
    values.insert("center_spread_index".to_string(), spread);

    let radii: Vec<f64> = circles.iter().map(|c| c.r).collect();
    let mean_r = radii.iter().sum::<f64>() / nf;
    let std_r = population_variance(&radii).sqrt();
    let std_norm = if mean_r > 0.0 {
        std_r / mean_r
    } else {
        flags.push("radius_std_normalized: zero mean radius, sentinel 0".to_string());
        0.0
    };
    values.insert("radius_std_normalized".to_string(), std_norm);

    let ndr = if n == 1 {
        flags.push("neighbor_distance_ratio: single circle, sentinel 0".to_string());
        0.0
    } else if radii.iter().any(|&r| r == 0.0) {
        flags.push("neighbor_distance_ratio: zero radius present, sentinel 0".to_string());
        0.0
    } else {
        circles
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let nearest = circles
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, o)| ((c.x - o.x).powi(2) + (c.y - o.y).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                nearest / c.r
            })
            .sum::<f64>()
            / nf
    };
    values.insert("neighbor_distance_ratio".to_string(), ndr);

    let large: Vec<&Circle> = circles.iter().filter(|c| c.r > mean_r).collect();
    let margin = if large.is_empty() {
        0.0
    } else {
        large
            .iter()
            .map(|c| {
                [c.x, 1.0 - c.x, c.y, 1.0 - c.y]
                    .into_iter()
                    .fold(f64::INFINITY, f64::min)
                    - c.r
            })
            .sum::<f64>()
            / large.len() as f64
    };
    values.insert("large_circle_margin".to_string(), margin);

    let mut prod_sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            prod_sum += radii[i] * radii[j];
        }
    }
    values.insert("pairwise_radii_product_sum".to_string(), prod_sum);

    let cx = circles.iter().map(|c| c.x).sum::<f64>() / nf;
    let cy = circles.iter().map(|c| c.y).sum::<f64>() / nf;
    let dists: Vec<f64> = circles
        .iter()
        .map(|c| ((c.x - cx).powi(2) + (c.y - cy).powi(2)).sqrt())
        .collect();
    values.insert(
        "centroid_distance_variance".to_string(),
        population_variance(&dists),
    );

    Ok(MetricSet { values, flags })
}

/// Compute the registered metric set for a payload.
pub fn compute_metrics(payload: &SolutionPayload) -> Result<MetricSet> {
    match payload {
        SolutionPayload::HadamardMatrix { entries, .. } => hadamard_metrics(entries),
        SolutionPayload::StepFunction { values, .. } => autocorr_metrics(values),
        SolutionPayload::CirclePacking { circles } => circle_metrics(circles),
    }
}
