//! Windowed covariance matrices, their spectra, and the market mode.
//!
//! A covariance window of width `t_w` centered on day `tau` is
//! `C_ij = (1/t_w) * sum_t r_i(t) r_j(t)` over the window's days, with no
//! mean subtraction and no per-firm standardization. The leading
//! eigenvector `e^0` of each window is the market mode; a firm's beta is
//! `sqrt(N) * e_i^0`, and the market return on a day is the scalar
//! product of `e^0` with that day's returns, scaled by `1/sqrt(N)`.
//!
//! Day selection uses the half-open interval
//! `tau - ceil(t_w/2) <= t < tau + floor(t_w/2)`, which puts exactly
//! `t_w` observations in every window.

use crate::eig::{eigensystem, EigError, EigenSystem};
use crate::returns::ReturnPanel;
use ndarray::Array2;
use std::ops::Range;
use thiserror::Error;

/// Trading days per year used when window sizes are given in years.
pub const TRADING_DAYS_PER_YEAR: usize = 252;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("window [{start}, {end}) falls outside the return range [0, {t_obs})")]
    WindowOutOfRange {
        start: i64,
        end: i64,
        t_obs: usize,
    },

    #[error("window step {step} must be in 1..=width ({width})")]
    BadStep { step: usize, width: usize },

    #[error(transparent)]
    Eig(#[from] EigError),
}

/// One analysis window: center day index, width, and grid stride, all in
/// return-observation days.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub center: usize,
    pub width: usize,
    pub step: usize,
}

impl WindowSpec {
    pub fn new(center: usize, width: usize, step: usize) -> Self {
        WindowSpec {
            center,
            width,
            step,
        }
    }

    /// Full-width day range of this window.
    pub fn range(&self) -> Range<usize> {
        let lo = self.center.saturating_sub(self.width.div_ceil(2));
        lo..self.center + self.width / 2
    }

    /// Step-span day range, used to stitch market returns across a grid.
    pub fn step_range(&self) -> Range<usize> {
        let lo = self.center.saturating_sub(self.step.div_ceil(2));
        lo..self.center + self.step / 2
    }

    pub fn validate(&self, t_obs: usize) -> Result<(), SpectralError> {
        if self.step == 0 || self.step > self.width {
            return Err(SpectralError::BadStep {
                step: self.step,
                width: self.width,
            });
        }
        let lo = self.center as i64 - self.width.div_ceil(2) as i64;
        let hi = self.center as i64 + (self.width / 2) as i64;
        if lo < 0 || hi > t_obs as i64 || self.width == 0 {
            return Err(SpectralError::WindowOutOfRange {
                start: lo,
                end: hi,
                t_obs,
            });
        }
        Ok(())
    }

    /// A single window spanning all `t_obs` observations.
    pub fn full_sample(t_obs: usize) -> Self {
        WindowSpec {
            center: t_obs.div_ceil(2),
            width: t_obs,
            step: t_obs,
        }
    }
}

/// Regular grid of windows: fixed width, centers advancing by `step`.
/// Consecutive step spans tile the covered days without gap or overlap.
pub fn window_grid(t_obs: usize, width: usize, step: usize) -> Vec<WindowSpec> {
    let mut grid = Vec::new();
    if width == 0 || step == 0 || step > width || width > t_obs {
        return grid;
    }
    let mut center = width.div_ceil(2);
    while center + width / 2 <= t_obs {
        grid.push(WindowSpec {
            center,
            width,
            step,
        });
        center += step;
    }
    grid
}

/// Windowed second-moment matrix of the returns: no mean subtraction,
/// no variance normalization.
pub fn covariance(panel: &ReturnPanel, spec: &WindowSpec) -> Result<Array2<f64>, SpectralError> {
    spec.validate(panel.n_obs())?;
    let n = panel.n_firms();
    let range = spec.range();
    let mut cov = Array2::zeros((n, n));
    for t in range {
        for i in 0..n {
            let ri = panel.returns[[i, t]];
            if ri == 0.0 {
                continue;
            }
            for j in i..n {
                cov[[i, j]] += ri * panel.returns[[j, t]];
            }
        }
    }
    let scale = 1.0 / spec.width as f64;
    for i in 0..n {
        for j in i..n {
            let v = cov[[i, j]] * scale;
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    Ok(cov)
}

/// A window's covariance matrix together with its full eigensystem and
/// the derived beta coefficients.
#[derive(Debug, Clone)]
pub struct SpectralWindow {
    pub spec: WindowSpec,
    pub cov: Array2<f64>,
    pub eigen: EigenSystem,
    /// `beta_i = sqrt(N) * e_i^0`, so `sum beta_i^2 = N` by construction.
    pub betas: Vec<f64>,
}

impl SpectralWindow {
    pub fn compute(panel: &ReturnPanel, spec: WindowSpec) -> Result<Self, SpectralError> {
        let cov = covariance(panel, &spec)?;
        Self::from_covariance(spec, cov)
    }

    pub fn from_covariance(spec: WindowSpec, cov: Array2<f64>) -> Result<Self, SpectralError> {
        let eigen = eigensystem(&cov)?;
        let betas = betas(&eigen);
        Ok(SpectralWindow {
            spec,
            cov,
            eigen,
            betas,
        })
    }

    pub fn n_firms(&self) -> usize {
        self.betas.len()
    }

    pub fn leading_eigenvalue(&self) -> f64 {
        self.eigen.values[0]
    }

    pub fn trace(&self) -> f64 {
        (0..self.cov.nrows()).map(|i| self.cov[[i, i]]).sum()
    }

    /// Mean beta, equal to the overlap of the market mode with the
    /// uniform direction.
    pub fn beta_bar(&self) -> f64 {
        let n = self.n_firms() as f64;
        self.betas.iter().sum::<f64>() / n
    }
}

/// Beta coefficients from a computed eigensystem.
pub fn betas(eigen: &EigenSystem) -> Vec<f64> {
    let n = eigen.dim();
    let scale = (n as f64).sqrt();
    (0..n).map(|i| scale * eigen.vectors[[i, 0]]).collect()
}

/// Market return over the window's step span: for each selected day,
/// the projection of that day's cross-section onto the market mode.
/// Returns the day range and one value per day in it.
pub fn market_return(panel: &ReturnPanel, window: &SpectralWindow) -> (Range<usize>, Vec<f64>) {
    market_return_over(panel, window, window.spec.step_range())
}

/// Same projection evaluated over an arbitrary day range.
pub fn market_return_over(
    panel: &ReturnPanel,
    window: &SpectralWindow,
    range: Range<usize>,
) -> (Range<usize>, Vec<f64>) {
    let n = panel.n_firms();
    let scale = 1.0 / (n as f64).sqrt();
    let values = range
        .clone()
        .map(|t| {
            let mut dot = 0.0;
            for i in 0..n {
                dot += window.eigen.vectors[[i, 0]] * panel.returns[[i, t]];
            }
            dot * scale
        })
        .collect();
    (range, values)
}

/// One row of a market-leader table.
#[derive(Debug, Clone, PartialEq)]
pub struct Leader {
    pub ticker: String,
    pub sector: String,
    pub beta: f64,
    pub volume: f64,
}

/// Firms with beta above the threshold, sorted by beta descending.
pub fn market_leaders(
    betas: &[f64],
    threshold: f64,
    tickers: &[String],
    sectors: &[String],
    volumes: &[f64],
) -> Vec<Leader> {
    let mut leaders: Vec<Leader> = betas
        .iter()
        .enumerate()
        .filter(|(_, b)| **b > threshold)
        .map(|(i, &beta)| Leader {
            ticker: tickers[i].clone(),
            sector: sectors[i].clone(),
            beta,
            volume: volumes[i],
        })
        .collect();
    leaders.sort_by(|a, b| {
        b.beta
            .partial_cmp(&a.beta)
            .unwrap()
            .then_with(|| a.ticker.cmp(&b.ticker))
    });
    leaders
}
