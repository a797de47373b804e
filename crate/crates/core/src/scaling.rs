//! Market-size scaling: sub-markets of varying size carved from one
//! panel, group-averaged spectral observables, and power-law fits.
//!
//! Firms are ranked by average traded volume and dealt round-robin into
//! `k` groups, so every group mirrors the full set's size composition.
//! Each group runs the full-sample spectral pipeline; the leading
//! eigenvalue, Delta^2, and the beta dispersion are averaged over groups
//! and fitted against group size on a log-log scale.

use crate::indices::{IndicesError, MarketSeries};
use crate::returns::ReturnPanel;
use crate::spectral::WindowSpec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScalingError {
    #[error("cannot split {n_firms} firms into {k} groups of at least 2")]
    TooManyGroups { n_firms: usize, k: usize },

    #[error("group count must be at least 1")]
    ZeroGroups,

    #[error("power-law fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("power-law fit requires positive values, got {0}")]
    NonPositiveValue(f64),

    #[error(transparent)]
    Pipeline(#[from] IndicesError),
}

/// Group-averaged observables at one sub-market size.
#[derive(Debug, Clone)]
pub struct ScalingPoint {
    pub groups: usize,
    pub group_size: usize,
    pub lambda0_mean: f64,
    pub delta_sq_mean: f64,
    pub sigma_beta_mean: f64,
    /// Spread of the leading eigenvalue across groups (population std).
    pub lambda0_spread: f64,
}

/// Split firm indices into `k` groups balanced by volume rank.
///
/// Firms sort by `volumes` descending and deal round-robin; the lowest
/// `n mod k` ranked firms are dropped so groups come out equal-sized.
pub fn partition(volumes: &[f64], k: usize) -> Result<Vec<Vec<usize>>, ScalingError> {
    if k == 0 {
        return Err(ScalingError::ZeroGroups);
    }
    let n = volumes.len();
    if k > n / 2 {
        return Err(ScalingError::TooManyGroups { n_firms: n, k });
    }
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| {
        volumes[b]
            .partial_cmp(&volumes[a])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    let usable = (n / k) * k;
    let mut groups = vec![Vec::with_capacity(n / k); k];
    for (rank, &firm) in ranked[..usable].iter().enumerate() {
        groups[rank % k].push(firm);
    }
    Ok(groups)
}

/// Run the sub-market experiment over a grid of group counts, using the
/// maximum window (the whole sample) inside every group.
pub fn scaling_curve(panel: &ReturnPanel, ks: &[usize]) -> Result<Vec<ScalingPoint>, ScalingError> {
    let volumes = panel.mean_volume();
    let t_obs = panel.n_obs();
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let groups = partition(&volumes, k)?;
        let mut lambda0s = Vec::with_capacity(k);
        let mut delta_sqs = Vec::with_capacity(k);
        let mut sigmas = Vec::with_capacity(k);
        for group in &groups {
            let sub = panel.select_firms(group);
            let spec = WindowSpec::full_sample(t_obs);
            let series = MarketSeries::compute(&sub, &[spec])?;
            let summary = &series.windows[0];
            lambda0s.push(summary.lambda0);
            delta_sqs.push(summary.delta_sq);
            let betas_mean = summary.beta_bar;
            // Population dispersion; sum beta^2 = N makes this
            // sqrt(1 - beta_bar^2).
            sigmas.push((1.0 - betas_mean * betas_mean).max(0.0).sqrt());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let lambda0_mean = mean(&lambda0s);
        let spread = (lambda0s
            .iter()
            .map(|l| (l - lambda0_mean) * (l - lambda0_mean))
            .sum::<f64>()
            / lambda0s.len() as f64)
            .sqrt();
        points.push(ScalingPoint {
            groups: k,
            group_size: groups[0].len(),
            lambda0_mean,
            delta_sq_mean: mean(&delta_sqs),
            sigma_beta_mean: mean(&sigmas),
            lambda0_spread: spread,
        });
    }
    Ok(points)
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, ScalingError> {
    if points.len() < 3 {
        return Err(ScalingError::TooFewPoints(points.len()));
    }
    for &(x, y) in points {
        if x <= 0.0 {
            return Err(ScalingError::NonPositiveValue(x));
        }
        if y <= 0.0 {
            return Err(ScalingError::NonPositiveValue(y));
        }
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in &logs {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let exponent = sxy / sxx;
    let intercept = mean_y - exponent * mean_x;
    let max_residual = logs
        .iter()
        .map(|&(x, y)| (y - (intercept + exponent * x)).abs())
        .fold(0.0f64, f64::max);
    Ok(PowerLawFit {
        exponent,
        intercept,
        max_residual,
    })
}
