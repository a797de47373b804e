//! Market descriptions compared: average return, pseudo indices, the
//! divergence Delta^2 between market and average return, its spectral
//! upper bound, and the average-correlation identity.
//!
//! The exported market return series is stitched across a window grid:
//! each day takes its value from the window whose step span contains
//! it, so the series stays single-valued when windows overlap. Days
//! before the first step span and after the last fall to the nearest
//! window. Per-window diagnostics (Delta^2, its bound, the correlation
//! identity) instead project with the window's own market mode over its
//! full span; that is the configuration in which the spectral
//! identities and the bound hold exactly, and the two choices coincide
//! when the step equals the width.

use crate::returns::ReturnPanel;
use crate::spectral::{market_return_over, SpectralError, SpectralWindow, WindowSpec};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndicesError {
    #[error("degenerate market return: zero variance on window")]
    DegenerateMarketReturn,

    #[error("average correlation needs at least 2 firms, got {0}")]
    TooFewFirms(usize),

    #[error("series does not cover window days [{start}, {end})")]
    SeriesGap { start: usize, end: usize },

    #[error("empty window grid")]
    EmptyGrid,

    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// A day-indexed series covering `start..start + values.len()`.
#[derive(Debug, Clone)]
pub struct DaySeries {
    pub start: usize,
    pub values: Vec<f64>,
}

impl DaySeries {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.values.len()
    }

    pub fn slice(&self, range: Range<usize>) -> Option<&[f64]> {
        let lo = range.start.checked_sub(self.start)?;
        let hi = range.end.checked_sub(self.start)?;
        self.values.get(lo..hi)
    }
}

/// Equal-weight average return per day.
pub fn average_return(panel: &ReturnPanel) -> Vec<f64> {
    let n = panel.n_firms() as f64;
    (0..panel.n_obs())
        .map(|t| panel.returns.column(t).sum() / n)
        .collect()
}

/// Log pseudo index: cumulative sum of `r(t) / r_norm`, shifted so the
/// index sums to zero over its span. One point per day plus the closing
/// level, so the output is one longer than the input.
pub fn pseudo_index(series: &[f64], r_norm: f64) -> Vec<f64> {
    let mut level = 0.0;
    let mut index = Vec::with_capacity(series.len() + 1);
    index.push(0.0);
    for r in series {
        level += r / r_norm;
        index.push(level);
    }
    recenter(&mut index);
    index
}

/// Recenter an external log-index series so it sums to zero, making it
/// comparable with the pseudo indices.
pub fn recentered_log_index(prices: &[f64]) -> Vec<f64> {
    let mut logs: Vec<f64> = prices.iter().map(|p| p.ln()).collect();
    recenter(&mut logs);
    logs
}

fn recenter(series: &mut [f64]) {
    if series.is_empty() {
        return;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    for x in series.iter_mut() {
        *x -= mean;
    }
}

/// Normalized squared divergence between market and average return over
/// a window: `sum (r_M - r_av)^2 / sum r_M^2` on the window's days.
pub fn delta_squared(
    r_m: &DaySeries,
    r_av: &DaySeries,
    spec: &WindowSpec,
) -> Result<f64, IndicesError> {
    let range = spec.range();
    let m = r_m.slice(range.clone()).ok_or(IndicesError::SeriesGap {
        start: range.start,
        end: range.end,
    })?;
    let av = r_av.slice(range.clone()).ok_or(IndicesError::SeriesGap {
        start: range.start,
        end: range.end,
    })?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in m.iter().zip(av) {
        num += (x - y) * (x - y);
        den += x * x;
    }
    if den == 0.0 {
        return Err(IndicesError::DegenerateMarketReturn);
    }
    Ok(num / den)
}

/// Spectral upper bound on Delta^2:
/// `(1 - beta_bar) * (2 * trace(C) / lambda_0 - 1 - beta_bar)`.
pub fn delta_bound(window: &SpectralWindow) -> f64 {
    let beta_bar = window.beta_bar();
    (1.0 - beta_bar) * (2.0 * window.trace() / window.leading_eigenvalue() - 1.0 - beta_bar)
}

/// Average off-diagonal correlation, both directly from the matrix and
/// via the market-mode identity
/// `<r_M^2> * (Delta^2 + 2*beta_bar - 1) - 1/N`.
///
/// The two agree up to terms of order 1/N.
pub fn average_correlation(
    window: &SpectralWindow,
    delta_sq: f64,
    market_var: f64,
) -> Result<(f64, f64), IndicesError> {
    let n = window.n_firms();
    if n < 2 {
        return Err(IndicesError::TooFewFirms(n));
    }
    let mut off_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off_sum += window.cov[[i, j]];
            }
        }
    }
    let direct = off_sum / (n * (n - 1)) as f64;
    let identity = market_var * (delta_sq + 2.0 * window.beta_bar() - 1.0) - 1.0 / n as f64;
    Ok((direct, identity))
}

/// Overlaps of each eigenvector with the uniform direction:
/// `a_mu = (1/sqrt(N)) * sum_i e_i^mu`. The leading overlap equals the
/// mean beta, and Parseval gives `sum_mu a_mu^2 = 1`.
pub fn mode_overlaps(window: &SpectralWindow) -> Vec<f64> {
    let n = window.n_firms();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|mu| {
            let mut sum = 0.0;
            for i in 0..n {
                sum += window.eigen.vectors[[i, mu]];
            }
            // Overlap magnitudes are what matter; the per-vector sign fix
            // already makes each sum non-negative up to roundoff.
            sum * scale
        })
        .collect()
}

/// Reconstruction of Delta^2 from the spectrum and overlaps:
/// `(1 - beta_bar)^2 + sum_{mu>0} (lambda_mu / lambda_0) a_mu^2`.
/// Exact when the stitched step equals the window width.
pub fn delta_squared_from_modes(window: &SpectralWindow) -> f64 {
    let overlaps = mode_overlaps(window);
    let beta_bar = window.beta_bar();
    let lambda0 = window.leading_eigenvalue();
    let tail: f64 = overlaps
        .iter()
        .zip(&window.eigen.values)
        .skip(1)
        .map(|(a, lam)| lam / lambda0 * a * a)
        .sum();
    (1.0 - beta_bar) * (1.0 - beta_bar) + tail
}

/// Per-window summary emitted by the stitched-series analysis.
#[derive(Debug, Clone)]
pub struct WindowSummary {
    pub spec: WindowSpec,
    pub lambda0: f64,
    pub trace: f64,
    pub beta_bar: f64,
    pub delta_sq: f64,
    pub delta_bound: f64,
    pub c_av_direct: f64,
    pub c_av_identity: f64,
    /// Window mean of the stitched market return squared.
    pub market_var: f64,
}

/// Market and average return series over a window grid, their pseudo
/// indices, and the per-window comparison table.
#[derive(Debug, Clone)]
pub struct MarketSeries {
    /// Days covered by the stitched series (union of window ranges).
    pub day_range: Range<usize>,
    pub r_m: DaySeries,
    /// Average return restricted to the same covered days.
    pub r_av: DaySeries,
    /// Pseudo indices on the covered days (one longer than the series).
    pub l_m: Vec<f64>,
    pub l_av: Vec<f64>,
    pub windows: Vec<WindowSummary>,
    /// Mean beta per window, one entry per grid window.
    pub beta_bars: Vec<f64>,
}

impl MarketSeries {
    /// Run the spectral pipeline over a grid of windows sharing one
    /// width and step, stitch the market return, and summarize each
    /// window. Windows must be grid-ordered (centers increasing).
    pub fn compute(panel: &ReturnPanel, grid: &[WindowSpec]) -> Result<Self, IndicesError> {
        let windows: Result<Vec<SpectralWindow>, SpectralError> = grid
            .iter()
            .map(|spec| SpectralWindow::compute(panel, *spec))
            .collect();
        Self::from_windows(panel, windows?)
    }

    pub fn from_windows(
        panel: &ReturnPanel,
        spectral: Vec<SpectralWindow>,
    ) -> Result<Self, IndicesError> {
        if spectral.is_empty() {
            return Err(IndicesError::EmptyGrid);
        }
        let cover_start = spectral
            .iter()
            .map(|w| w.spec.range().start)
            .min()
            .unwrap();
        let cover_end = spectral.iter().map(|w| w.spec.range().end).max().unwrap();
        let day_range = cover_start..cover_end;

        // Stitch: each window contributes its step span; the first and
        // last stretch to the covered edges.
        let mut r_m_values = vec![0.0; day_range.len()];
        let last = spectral.len() - 1;
        for (k, window) in spectral.iter().enumerate() {
            let mut segment = window.spec.step_range();
            if k == 0 {
                segment.start = cover_start;
            }
            if k == last {
                segment.end = cover_end;
            }
            let (range, values) = market_return_over(panel, window, segment);
            for (t, v) in range.zip(values) {
                r_m_values[t - cover_start] = v;
            }
        }
        let r_m = DaySeries {
            start: cover_start,
            values: r_m_values,
        };

        let full_average = average_return(panel);
        let r_av = DaySeries {
            start: cover_start,
            values: full_average[day_range.clone()].to_vec(),
        };

        let l_m = pseudo_index(&r_m.values, panel.r_norm);
        let l_av = pseudo_index(&r_av.values, panel.r_norm);

        let mut summaries = Vec::with_capacity(spectral.len());
        let mut beta_bars = Vec::with_capacity(spectral.len());
        for window in &spectral {
            let win_days = window.spec.range();
            let (own_range, own_values) =
                market_return_over(panel, window, win_days.clone());
            let own_series = DaySeries {
                start: own_range.start,
                values: own_values,
            };
            let delta_sq = delta_squared(&own_series, &r_av, &window.spec)?;
            let bound = delta_bound(window);
            let market_var =
                own_series.values.iter().map(|x| x * x).sum::<f64>() / win_days.len() as f64;
            let (c_av_direct, c_av_identity) = average_correlation(window, delta_sq, market_var)?;
            beta_bars.push(window.beta_bar());
            summaries.push(WindowSummary {
                spec: window.spec,
                lambda0: window.leading_eigenvalue(),
                trace: window.trace(),
                beta_bar: window.beta_bar(),
                delta_sq,
                delta_bound: bound,
                c_av_direct,
                c_av_identity,
                market_var,
            });
        }

        Ok(MarketSeries {
            day_range,
            r_m,
            r_av,
            l_m,
            l_av,
            windows: summaries,
            beta_bars,
        })
    }
}

/// Centered moving average with truncated edges; `width` of zero or one
/// returns the input unchanged.
pub fn centered_mean(series: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 || series.is_empty() {
        return series.to_vec();
    }
    let half_lo = width / 2;
    let half_hi = width - half_lo;
    (0..series.len())
        .map(|t| {
            let lo = t.saturating_sub(half_lo);
            let hi = (t + half_hi).min(series.len());
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn panel_from_returns(rows: Vec<Vec<f64>>) -> ReturnPanel {
        let n = rows.len();
        let t = rows[0].len();
        let mut returns = Array2::zeros((n, t));
        for (i, row) in rows.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                returns[[i, j]] = r;
            }
        }
        let dates: Vec<NaiveDate> = (0..=t)
            .map(|j| NaiveDate::from_ymd_opt(2001, 1, 1).unwrap() + chrono::Days::new(j as u64))
            .collect();
        ReturnPanel::from_returns(
            returns,
            (0..n).map(|i| format!("F{i:03}")).collect(),
            vec!["IT".to_string(); n],
            Array2::ones((n, t + 1)),
            dates,
        )
    }

    fn random_panel(seed: u64, n: usize, t: usize) -> ReturnPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..t).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        panel_from_returns(rows)
    }

    #[test]
    fn average_return_cancels_opposites() {
        let panel = panel_from_returns(vec![vec![1.0, 0.5], vec![-1.0, 0.5]]);
        let avg = average_return(&panel);
        assert_eq!(avg[0], 0.0);
        assert!((avg[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn average_return_of_identical_firms_is_the_common_series() {
        let row = vec![0.3, -0.2, 0.9];
        let panel = panel_from_returns(vec![row.clone(), row.clone(), row.clone()]);
        let avg = average_return(&panel);
        for (a, r) in avg.iter().zip(&row) {
            assert!((a - r).abs() < 1e-15);
        }
    }

    #[test]
    fn average_return_matches_row_mean_oracle() {
        let panel = random_panel(5, 4, 20);
        let avg = average_return(&panel);
        for t in 0..20 {
            let mut sum = 0.0;
            for i in 0..4 {
                sum += panel.returns[[i, t]];
            }
            assert!((avg[t] - sum / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_returns_give_flat_index() {
        let index = pseudo_index(&[0.0; 5], 2.0);
        assert!(index.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_return_gives_recentred_ramp() {
        // Closed form: levels 0, c/rn, 2c/rn, ... recentred to mean zero.
        let c = 0.4;
        let rn = 2.0;
        let index = pseudo_index(&[c; 4], rn);
        let raw: Vec<f64> = (0..5).map(|k| k as f64 * c / rn).collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        for (got, want) in index.iter().zip(raw.iter().map(|x| x - mean)) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!(index.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn pseudo_index_matches_prefix_sum_oracle() {
        let series = [0.3, -0.8, 0.5, 1.1, -0.2];
        let rn = 1.7;
        let index = pseudo_index(&series, rn);
        let mut levels = vec![0.0];
        for r in &series {
            levels.push(levels.last().unwrap() + r / rn);
        }
        let mean = levels.iter().sum::<f64>() / levels.len() as f64;
        for (got, want) in index.iter().zip(levels.iter().map(|x| x - mean)) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_squared_zero_for_identical_series() {
        let spec = WindowSpec::new(2, 4, 4);
        let s = DaySeries {
            start: 0,
            values: vec![0.5, -0.2, 0.7, 0.1],
        };
        assert_eq!(delta_squared(&s, &s.clone(), &spec).unwrap(), 0.0);
    }

    #[test]
    fn delta_squared_one_for_pure_market() {
        let spec = WindowSpec::new(2, 4, 4);
        let m = DaySeries {
            start: 0,
            values: vec![0.5, -0.2, 0.7, 0.1],
        };
        let av = DaySeries {
            start: 0,
            values: vec![0.0; 4],
        };
        assert!((delta_squared(&m, &av, &spec).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn delta_squared_matches_naive_loop() {
        let spec = WindowSpec::new(3, 6, 6);
        let m = DaySeries {
            start: 0,
            values: vec![0.5, -0.2, 0.7, 0.1, -0.9, 0.3],
        };
        let av = DaySeries {
            start: 0,
            values: vec![0.4, -0.1, 0.6, 0.2, -0.7, 0.2],
        };
        let got = delta_squared(&m, &av, &spec).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..6 {
            num += (m.values[t] - av.values[t]).powi(2);
            den += m.values[t].powi(2);
        }
        assert!((got - num / den).abs() < 1e-12);
    }

    #[test]
    fn delta_squared_needs_full_window_coverage() {
        let spec = WindowSpec::new(3, 6, 6);
        let short = DaySeries {
            start: 0,
            values: vec![0.5, -0.2, 0.7],
        };
        assert!(matches!(
            delta_squared(&short, &short.clone(), &spec),
            Err(IndicesError::SeriesGap { .. })
        ));
    }

    #[test]
    fn delta_squared_zero_market_is_degenerate() {
        let spec = WindowSpec::new(1, 2, 2);
        let m = DaySeries {
            start: 0,
            values: vec![0.0, 0.0],
        };
        let av = DaySeries {
            start: 0,
            values: vec![0.1, 0.2],
        };
        assert!(matches!(
            delta_squared(&m, &av, &spec),
            Err(IndicesError::DegenerateMarketReturn)
        ));
    }

    #[test]
    fn uniform_mode_forces_zero_bound() {
        let n = 4;
        let cov = Array2::from_elem((n, n), 1.0);
        let window = SpectralWindow::from_covariance(WindowSpec::new(1, 1, 1), cov).unwrap();
        assert!(delta_bound(&window).abs() < 1e-12);
    }

    #[test]
    fn bound_matches_hand_evaluation() {
        let panel = random_panel(11, 5, 30);
        let window = SpectralWindow::compute(&panel, WindowSpec::full_sample(30)).unwrap();
        let beta_bar = window.beta_bar();
        let expected = (1.0 - beta_bar)
            * (2.0 * window.trace() / window.leading_eigenvalue() - 1.0 - beta_bar);
        assert!((delta_bound(&window) - expected).abs() < 1e-12);
    }

    #[test]
    fn average_correlation_reads_off_diagonal() {
        let c = 0.37;
        let mut cov = Array2::from_elem((2, 2), c);
        cov[[0, 0]] = 1.0;
        cov[[1, 1]] = 1.0;
        let window = SpectralWindow::from_covariance(WindowSpec::new(1, 1, 1), cov).unwrap();
        let (direct, _) = average_correlation(&window, 0.0, 1.0).unwrap();
        assert!((direct - c).abs() < 1e-14);
    }

    #[test]
    fn diagonal_covariance_has_zero_average_correlation() {
        let mut cov = Array2::zeros((3, 3));
        for i in 0..3 {
            cov[[i, i]] = 1.0 + i as f64;
        }
        let window = SpectralWindow::from_covariance(WindowSpec::new(1, 1, 1), cov).unwrap();
        let (direct, _) = average_correlation(&window, 0.0, 1.0).unwrap();
        assert_eq!(direct, 0.0);
    }

    #[test]
    fn average_correlation_needs_two_firms() {
        let cov = Array2::from_elem((1, 1), 2.0);
        let window = SpectralWindow::from_covariance(WindowSpec::new(1, 1, 1), cov).unwrap();
        assert!(matches!(
            average_correlation(&window, 0.0, 1.0),
            Err(IndicesError::TooFewFirms(1))
        ));
    }

    #[test]
    fn uniform_mode_has_complete_overlap() {
        let n = 6;
        let cov = Array2::from_elem((n, n), 1.0);
        let window = SpectralWindow::from_covariance(WindowSpec::new(1, 1, 1), cov).unwrap();
        let overlaps = mode_overlaps(&window);
        assert!((overlaps[0] - 1.0).abs() < 1e-12);
        let tail: f64 = overlaps.iter().skip(1).map(|a| a * a).sum();
        assert!(tail < 1e-20);
    }

    #[test]
    fn overlaps_satisfy_parseval() {
        let panel = random_panel(23, 6, 40);
        let window = SpectralWindow::compute(&panel, WindowSpec::full_sample(40)).unwrap();
        let overlaps = mode_overlaps(&window);
        let total: f64 = overlaps.iter().map(|a| a * a).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn schwartz_bound_on_overlaps() {
        let panel = random_panel(29, 8, 60);
        let window = SpectralWindow::compute(&panel, WindowSpec::full_sample(60)).unwrap();
        let overlaps = mode_overlaps(&window);
        let cap = 2.0 * (1.0 - window.beta_bar()) + 1e-12;
        for a in overlaps.iter().skip(1) {
            assert!(a * a <= cap, "overlap^2 {} vs cap {cap}", a * a);
        }
    }

    #[test]
    fn mode_reconstruction_matches_direct_delta_squared() {
        // Both routes evaluated independently on a full-sample window.
        let panel = random_panel(31, 5, 48);
        let spec = WindowSpec::full_sample(48);
        let series = MarketSeries::compute(&panel, &[spec]).unwrap();
        let window = SpectralWindow::compute(&panel, spec).unwrap();
        let direct = series.windows[0].delta_sq;
        let reconstructed = delta_squared_from_modes(&window);
        assert!(
            (direct - reconstructed).abs() < 1e-10,
            "direct {direct} vs modes {reconstructed}"
        );
    }

    #[test]
    fn stitched_series_summaries_respect_bound() {
        let panel = random_panel(37, 6, 120);
        let grid = crate::spectral::window_grid(120, 40, 20);
        assert!(grid.len() >= 2);
        let series = MarketSeries::compute(&panel, &grid).unwrap();
        for w in &series.windows {
            assert!(w.delta_sq <= w.delta_bound + 1e-10);
        }
        // Pseudo indices sum to zero over the covered span.
        assert!(series.l_m.iter().sum::<f64>().abs() < 1e-9);
        assert!(series.l_av.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn centered_mean_truncates_edges() {
        let smoothed = centered_mean(&[1.0, 2.0, 3.0, 4.0, 5.0], 3);
        assert!((smoothed[0] - 1.5).abs() < 1e-15);
        assert!((smoothed[2] - 3.0).abs() < 1e-15);
        assert!((smoothed[4] - 4.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn pseudo_index_always_sums_to_zero(
            values in proptest::collection::vec(-2.0f64..2.0, 1..40),
            r_norm in 0.1f64..10.0,
        ) {
            let index = pseudo_index(&values, r_norm);
            prop_assert!(index.iter().sum::<f64>().abs() < 1e-9);
        }
    }
}
