//! Globally normalized log returns.
//!
//! Prices convert to returns as `r_i(t) = r_N * ln(S_i(t+1) / S_i(t))`
//! with a single panel-wide factor `r_N` chosen so that the sum of
//! squared returns equals N times the number of return observations.
//! Returns are deliberately not demeaned and not standardized per firm:
//! the covariance analysis downstream wants the raw volatility structure.

use crate::ingest::{IngestError, PricePanel};
use chrono::NaiveDate;
use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReturnsError {
    #[error("panel needs at least 2 dates to form returns, got {0}")]
    TooShort(usize),

    #[error("degenerate panel: zero variance")]
    DegeneratePanel,
}

/// Normalized log-return panel: N firms by T-1 return observations,
/// with firm metadata and daily volumes carried along from the prices.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    /// Start day of each return interval, length T-1.
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub sectors: Vec<String>,
    /// N x (T-1) normalized returns.
    pub returns: Array2<f64>,
    /// Global normalization factor applied to every log return.
    pub r_norm: f64,
    /// Original daily volumes (N x T) and their dates, for turnover lookups.
    pub volumes: Array2<f64>,
    pub volume_dates: Vec<NaiveDate>,
}

impl ReturnPanel {
    pub fn n_firms(&self) -> usize {
        self.tickers.len()
    }

    /// Number of return observations (one fewer than trading days).
    pub fn n_obs(&self) -> usize {
        self.dates.len()
    }

    /// Per-firm volume summed over the panel dates falling in `year`.
    pub fn annual_volume(&self, year: i32) -> Result<Vec<f64>, IngestError> {
        crate::ingest::annual_volume_impl(&self.volume_dates, &self.volumes, year)
    }

    /// Per-firm mean daily volume over the whole panel.
    pub fn mean_volume(&self) -> Vec<f64> {
        let t = self.volume_dates.len().max(1);
        (0..self.n_firms())
            .map(|i| self.volumes.row(i).sum() / t as f64)
            .collect()
    }

    /// Wrap an already-scaled return matrix (synthetic data paths).
    ///
    /// `r_norm` is recorded as 1 and no rescaling is applied, so model
    /// couplings stay directly comparable to spectral observables.
    /// `volume_dates` must cover at least as many days as there are
    /// return observations; return dates are the interval starts.
    pub fn from_returns(
        returns: Array2<f64>,
        tickers: Vec<String>,
        sectors: Vec<String>,
        volumes: Array2<f64>,
        volume_dates: Vec<NaiveDate>,
    ) -> Self {
        let dates = volume_dates[..returns.ncols()].to_vec();
        ReturnPanel {
            dates,
            tickers,
            sectors,
            returns,
            r_norm: 1.0,
            volumes,
            volume_dates,
        }
    }

    /// Restrict the panel to a subset of firms (indices into the firm axis).
    pub fn select_firms(&self, keep: &[usize]) -> ReturnPanel {
        let t = self.n_obs();
        let tv = self.volume_dates.len();
        let mut returns = Array2::zeros((keep.len(), t));
        let mut volumes = Array2::zeros((keep.len(), tv));
        for (new_i, &i) in keep.iter().enumerate() {
            for j in 0..t {
                returns[[new_i, j]] = self.returns[[i, j]];
            }
            for j in 0..tv {
                volumes[[new_i, j]] = self.volumes[[i, j]];
            }
        }
        ReturnPanel {
            dates: self.dates.clone(),
            tickers: keep.iter().map(|&i| self.tickers[i].clone()).collect(),
            sectors: keep.iter().map(|&i| self.sectors[i].clone()).collect(),
            returns,
            r_norm: self.r_norm,
            volumes,
            volume_dates: self.volume_dates.clone(),
        }
    }
}

/// Convert an aligned price panel into globally normalized log returns.
pub fn compute_returns(panel: &PricePanel) -> Result<ReturnPanel, ReturnsError> {
    let n = panel.n_firms();
    let t = panel.n_days();
    if t < 2 {
        return Err(ReturnsError::TooShort(t));
    }
    let t_obs = t - 1;

    let mut raw = Array2::zeros((n, t_obs));
    let mut sum_sq = 0.0;
    for i in 0..n {
        for j in 0..t_obs {
            let r = (panel.prices[[i, j + 1]] / panel.prices[[i, j]]).ln();
            raw[[i, j]] = r;
            sum_sq += r * r;
        }
    }
    if sum_sq == 0.0 {
        return Err(ReturnsError::DegeneratePanel);
    }

    let r_norm = ((n * t_obs) as f64 / sum_sq).sqrt();
    raw.mapv_inplace(|r| r * r_norm);

    Ok(ReturnPanel {
        dates: panel.dates[..t_obs].to_vec(),
        tickers: panel.tickers.clone(),
        sectors: panel.sectors.clone(),
        returns: raw,
        r_norm,
        volumes: panel.volumes.clone(),
        volume_dates: panel.dates.clone(),
    })
}
