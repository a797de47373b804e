//! Config-led batch commands: synthesize, ingest, analyze, scaling,
//! phase.
//!
//! One declarative TOML file drives every run. All randomness flows from
//! the single `seed` through named substreams, and outputs are written
//! with stable ordering and formatting, so a config plus its inputs
//! reproduces an output tree byte for byte.

use crate::indices::{centered_mean, IndicesError, MarketSeries};
use crate::ingest::{self, IngestError, PricePanel};
use crate::phase::{self, PhaseError, SectorTaxonomy};
use crate::returns::{compute_returns, ReturnsError};
use crate::scaling::{fit_power_law, scaling_curve, ScalingError, ScalingPoint};
use crate::spectral::{
    market_leaders, window_grid, SpectralError, SpectralWindow, WindowSpec,
    TRADING_DAYS_PER_YEAR,
};
use crate::svm::{sample_returns, SvmError, SvmParams};
use chrono::{Datelike, NaiveDate, Weekday};
use ndarray::Array2;
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Returns(#[from] ReturnsError),

    #[error(transparent)]
    Spectral(#[from] SpectralError),

    #[error(transparent)]
    Indices(#[from] IndicesError),

    #[error(transparent)]
    Svm(#[from] SvmError),

    #[error(transparent)]
    Scaling(#[from] ScalingError),

    #[error(transparent)]
    Phase(#[from] PhaseError),
}

impl RunError {
    /// Machine-parseable category for exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Io { .. } => "io",
            RunError::Ingest(IngestError::Io { .. }) => "io",
            RunError::Ingest(IngestError::Parse { .. }) => "parse",
            RunError::Ingest(_) => "data",
            RunError::Returns(_) => "data",
            RunError::Spectral(_) => "window",
            RunError::Indices(_) => "numeric",
            RunError::Svm(_) => "config",
            RunError::Scaling(_) => "numeric",
            RunError::Phase(_) => "numeric",
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub filters: FilterConfig,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub phase: PhaseConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub synth: Option<SynthConfig>,
}

fn default_delimiter() -> String {
    ",".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Quote file; defaults to `<output_dir>/quotes.csv` (the synth output).
    pub quotes: Option<PathBuf>,
    /// Sector map; defaults to `<output_dir>/sectors.csv`.
    pub sector_map: Option<PathBuf>,
    /// Optional external index series (date,value) for comparison plots.
    pub index: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub stale_fraction: f64,
    pub max_flat_run: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            stale_fraction: ingest::DEFAULT_STALE_FRACTION,
            max_flat_run: ingest::DEFAULT_MAX_FLAT_RUN,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub width_days: Option<usize>,
    pub width_years: Option<f64>,
    pub step_days: Option<usize>,
    pub step_years: Option<f64>,
    /// Centered moving-average width for exported index series; 0 disables.
    #[serde(default = "default_smoothing")]
    pub smoothing_days: usize,
}

fn default_smoothing() -> usize {
    TRADING_DAYS_PER_YEAR
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            width_days: None,
            width_years: None,
            step_days: None,
            step_years: None,
            smoothing_days: default_smoothing(),
        }
    }
}

fn days_from(
    days: Option<usize>,
    years: Option<f64>,
    default_days: usize,
    what: &str,
) -> Result<usize, RunError> {
    match (days, years) {
        (Some(_), Some(_)) => Err(RunError::Config(format!(
            "{what} given in both days and years; pick one"
        ))),
        (Some(d), None) => Ok(d),
        (None, Some(y)) => {
            if y <= 0.0 {
                return Err(RunError::Config(format!("{what} in years must be positive")));
            }
            Ok((y * TRADING_DAYS_PER_YEAR as f64).round() as usize)
        }
        (None, None) => Ok(default_days),
    }
}

impl WindowConfig {
    /// Analysis window width; defaults to 7 years.
    pub fn width(&self) -> Result<usize, RunError> {
        days_from(
            self.width_days,
            self.width_years,
            7 * TRADING_DAYS_PER_YEAR,
            "window width",
        )
    }

    /// Grid step; defaults to 1 year.
    pub fn step(&self) -> Result<usize, RunError> {
        days_from(
            self.step_days,
            self.step_years,
            TRADING_DAYS_PER_YEAR,
            "window step",
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Market-leader cut on beta.
    pub beta_c: f64,
    /// Heaviside gate of the sector risk function.
    pub risk_beta: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            beta_c: 1.39,
            risk_beta: phase::RISK_BETA_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub width_days: Option<usize>,
    pub width_years: Option<f64>,
    pub step_days: Option<usize>,
    pub step_years: Option<f64>,
    pub permutations: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            width_days: None,
            width_years: None,
            step_days: None,
            step_years: None,
            permutations: phase::DEFAULT_PERMUTATIONS,
        }
    }
}

impl PhaseConfig {
    /// Phase window width; defaults to 5 years.
    pub fn width(&self) -> Result<usize, RunError> {
        days_from(
            self.width_days,
            self.width_years,
            5 * TRADING_DAYS_PER_YEAR,
            "phase window width",
        )
    }

    pub fn step(&self) -> Result<usize, RunError> {
        days_from(
            self.step_days,
            self.step_years,
            TRADING_DAYS_PER_YEAR,
            "phase window step",
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub k_grid: Vec<usize>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            k_grid: vec![1, 2, 3, 4, 6, 8, 12],
        }
    }
}

/// Per-firm coupling or loading specification.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CouplingSpec {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    List { values: Vec<f64> },
}

impl CouplingSpec {
    fn build(&self, n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Vec<f64>, RunError> {
        use rand::Rng;
        match self {
            CouplingSpec::Constant { value } => Ok(vec![*value; n]),
            CouplingSpec::Uniform { low, high } => {
                if low >= high || !low.is_finite() || !high.is_finite() {
                    return Err(RunError::Config(format!(
                        "uniform coupling needs low < high, got [{low}, {high}]"
                    )));
                }
                Ok((0..n).map(|_| rng.random_range(*low..*high)).collect())
            }
            CouplingSpec::List { values } => {
                if values.len() != n {
                    return Err(RunError::Config(format!(
                        "coupling list has {} values for {} firms",
                        values.len(),
                        n
                    )));
                }
                Ok(values.clone())
            }
        }
    }
}

/// A planted sector regime for synthetic data: during the first
/// `epoch_fraction` of days, firms of `sector` get their market coupling
/// and traded volume multiplied up.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub sector: String,
    pub coupling: f64,
    pub volume: f64,
    pub epoch_fraction: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_firms: usize,
    /// Number of return observations; the price series is one day longer.
    pub n_days: usize,
    pub gamma_m: f64,
    pub gamma: CouplingSpec,
    #[serde(default = "default_beta0")]
    pub beta0: CouplingSpec,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    #[serde(default = "default_start_price")]
    pub start_price: f64,
    /// Sector taxonomy for generated firms; defaults to the GICS set.
    #[serde(default)]
    pub sectors: Option<Vec<String>>,
    /// Base daily volumes cycled over the firms within each sector.
    #[serde(default = "default_volume_pattern")]
    pub volume_pattern: Vec<f64>,
    #[serde(default)]
    pub plant: Option<PlantConfig>,
}

fn default_beta0() -> CouplingSpec {
    CouplingSpec::Constant { value: 1.0 }
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1990, 1, 2).unwrap()
}

fn default_start_price() -> f64 {
    100.0
}

fn default_volume_pattern() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn delimiter_byte(&self) -> Result<u8, RunError> {
        let bytes = self.delimiter.as_bytes();
        if bytes.len() != 1 {
            return Err(RunError::Config(format!(
                "delimiter must be one byte, got {:?}",
                self.delimiter
            )));
        }
        Ok(bytes[0])
    }

    pub fn quotes_path(&self) -> PathBuf {
        self.input
            .quotes
            .clone()
            .unwrap_or_else(|| self.output_dir.join("quotes.csv"))
    }

    pub fn sector_map_path(&self) -> PathBuf {
        self.input
            .sector_map
            .clone()
            .unwrap_or_else(|| self.output_dir.join("sectors.csv"))
    }
}

// ---------------------------------------------------------------------------
// File plumbing
// ---------------------------------------------------------------------------

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn ensure_dir(path: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn load_clean_panel(config: &RunConfig) -> Result<PricePanel, RunError> {
    let delim = config.delimiter_byte()?;
    let open = |name: &str| -> Result<std::fs::File, RunError> {
        let path = config.output_dir.join(name);
        std::fs::File::open(&path).map_err(io_err(&path))
    };
    Ok(ingest::read_panel(
        open("panel_prices.csv")?,
        open("panel_volumes.csv")?,
        open("panel_sectors.csv")?,
        delim,
    )?)
}

fn analysis_grid(
    t_obs: usize,
    width: usize,
    step: usize,
) -> Result<Vec<WindowSpec>, RunError> {
    let grid = window_grid(t_obs, width, step);
    if grid.is_empty() {
        let first = WindowSpec::new(width.div_ceil(2), width, step);
        first.validate(t_obs)?;
        return Err(RunError::Config(format!(
            "window grid is empty for width {width}, step {step} on {t_obs} observations"
        )));
    }
    Ok(grid)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

/// Outcome summary of an ingest run.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub n_firms: usize,
    pub n_days: usize,
    pub dropped: Vec<(String, String)>,
}

/// Load, align, filter, and persist the clean panel plus a drop report.
pub fn run_ingest(config: &RunConfig) -> Result<IngestReport, RunError> {
    let delim = config.delimiter_byte()?;
    let quotes = ingest::read_quotes_file(&config.quotes_path(), delim)?;
    let sector_map = ingest::read_sector_map_file(&config.sector_map_path(), delim)?;
    let panel = ingest::load_panel(&quotes, &sector_map)?;
    let outcome = ingest::filter_liquidity(
        &panel,
        config.filters.stale_fraction,
        config.filters.max_flat_run,
    )?;

    ensure_dir(&config.output_dir)?;
    let mut prices = Vec::new();
    let mut volumes = Vec::new();
    let mut sectors = Vec::new();
    ingest::write_panel(&outcome.panel, &mut prices, &mut volumes, &mut sectors, delim)?;
    write_text(
        &config.output_dir.join("panel_prices.csv"),
        &String::from_utf8(prices).expect("ascii"),
    )?;
    write_text(
        &config.output_dir.join("panel_volumes.csv"),
        &String::from_utf8(volumes).expect("ascii"),
    )?;
    write_text(
        &config.output_dir.join("panel_sectors.csv"),
        &String::from_utf8(sectors).expect("ascii"),
    )?;

    let sep = config.delimiter.as_str();
    let mut report = format!("ticker{sep}reason\n");
    for drop in &outcome.dropped {
        writeln!(report, "{}{sep}{}", drop.ticker, drop.reason).expect("string write");
    }
    write_text(&config.output_dir.join("ingest_report.csv"), &report)?;

    Ok(IngestReport {
        n_firms: outcome.panel.n_firms(),
        n_days: outcome.panel.n_days(),
        dropped: outcome
            .dropped
            .iter()
            .map(|d| (d.ticker.clone(), d.reason.to_string()))
            .collect(),
    })
}

/// Summary of an analyze run.
#[derive(Debug, Clone)]
pub struct AnalyzeReport {
    pub n_windows: usize,
    pub bound_checks_passed: usize,
    pub r_norm: f64,
}

/// Windowed spectral analysis of the persisted clean panel: eigenvalue
/// files, the beta matrix, the market-series export, and the per-window
/// comparison table.
pub fn run_analyze(config: &RunConfig) -> Result<AnalyzeReport, RunError> {
    let sep = config.delimiter.as_str();
    let panel = load_clean_panel(config)?;
    let returns = compute_returns(&panel)?;
    let width = config.window.width()?;
    let step = config.window.step()?;
    let grid = analysis_grid(returns.n_obs(), width, step)?;
    let spectral: Vec<SpectralWindow> = grid
        .iter()
        .map(|spec| SpectralWindow::compute(&returns, *spec))
        .collect::<Result<_, _>>()?;

    ensure_dir(&config.output_dir)?;
    let eig_dir = config.output_dir.join("eigenvalues");
    ensure_dir(&eig_dir)?;

    let mut beta_columns: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    for (spec, window) in grid.iter().zip(&spectral) {
        let date = returns.dates[spec.center.min(returns.n_obs() - 1)];
        let mut text = format!("rank{sep}eigenvalue\n");
        for (rank, lam) in window.eigen.values.iter().enumerate() {
            writeln!(text, "{rank}{sep}{lam}").expect("string write");
        }
        write_text(&eig_dir.join(format!("{date}.csv")), &text)?;
        beta_columns.push(window.betas.clone());
    }
    let series = MarketSeries::from_windows(&returns, spectral)?;

    // Normalized returns, wide layout, for inspection.
    let mut returns_text = String::from("date");
    for ticker in &returns.tickers {
        write!(returns_text, "{sep}{ticker}").expect("string write");
    }
    returns_text.push('\n');
    for (t, date) in returns.dates.iter().enumerate() {
        write!(returns_text, "{date}").expect("string write");
        for i in 0..returns.n_firms() {
            write!(returns_text, "{sep}{}", returns.returns[[i, t]]).expect("string write");
        }
        returns_text.push('\n');
    }
    write_text(&config.output_dir.join("returns.csv"), &returns_text)?;

    let mut betas_text = String::from("ticker");
    for spec in &grid {
        let date = returns.dates[spec.center.min(returns.n_obs() - 1)];
        write!(betas_text, "{sep}{date}").expect("string write");
    }
    betas_text.push('\n');
    for (i, ticker) in returns.tickers.iter().enumerate() {
        write!(betas_text, "{ticker}").expect("string write");
        for column in &beta_columns {
            write!(betas_text, "{sep}{}", column[i]).expect("string write");
        }
        betas_text.push('\n');
    }
    write_text(&config.output_dir.join("betas.csv"), &betas_text)?;

    // Market series: pseudo-index levels per covered price day, with the
    // optional external index recentred the same way.
    let index_series = match &config.input.index {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(io_err(path))?;
            let raw = ingest::read_index_series(file, config.delimiter_byte()?)?;
            let by_date: std::collections::BTreeMap<NaiveDate, f64> = raw.into_iter().collect();
            let mut values = Vec::new();
            for k in series.day_range.start..=series.day_range.end {
                let date = returns.volume_dates[k];
                match by_date.get(&date) {
                    Some(v) => values.push(*v),
                    None => {
                        return Err(RunError::Config(format!(
                            "index series is missing panel date {date}"
                        )))
                    }
                }
            }
            Some(crate::indices::recentered_log_index(&values))
        }
        None => None,
    };

    let smooth = config.window.smoothing_days;
    let l_m_smooth = centered_mean(&series.l_m, smooth);
    let l_av_smooth = centered_mean(&series.l_av, smooth);
    let l_index_smooth = index_series.as_ref().map(|s| centered_mean(s, smooth));

    let mut market_text = String::from("date");
    for column in ["l_market", "l_average"] {
        write!(market_text, "{sep}{column}").expect("string write");
    }
    if index_series.is_some() {
        write!(market_text, "{sep}l_index").expect("string write");
    }
    if smooth > 1 {
        write!(market_text, "{sep}l_market_smooth{sep}l_average_smooth").expect("string write");
        if index_series.is_some() {
            write!(market_text, "{sep}l_index_smooth").expect("string write");
        }
    }
    market_text.push('\n');
    for (k, offset) in (series.day_range.start..=series.day_range.end).enumerate() {
        let date = returns.volume_dates[offset];
        write!(market_text, "{date}{sep}{}{sep}{}", series.l_m[k], series.l_av[k])
            .expect("string write");
        if let Some(index) = &index_series {
            write!(market_text, "{sep}{}", index[k]).expect("string write");
        }
        if smooth > 1 {
            write!(market_text, "{sep}{}{sep}{}", l_m_smooth[k], l_av_smooth[k])
                .expect("string write");
            if let Some(index) = &l_index_smooth {
                write!(market_text, "{sep}{}", index[k]).expect("string write");
            }
        }
        market_text.push('\n');
    }
    write_text(&config.output_dir.join("market_series.csv"), &market_text)?;

    let mut windows_text = format!(
        "center_date{sep}width_days{sep}step_days{sep}lambda0{sep}trace{sep}beta_bar{sep}delta_sq{sep}delta_bound{sep}c_av_direct{sep}c_av_identity{sep}market_var\n"
    );
    let mut bound_ok = 0usize;
    for summary in &series.windows {
        let date = returns.dates[summary.spec.center.min(returns.n_obs() - 1)];
        if summary.delta_sq <= summary.delta_bound + 1e-10 {
            bound_ok += 1;
        }
        writeln!(
            windows_text,
            "{date}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}",
            summary.spec.width,
            summary.spec.step,
            summary.lambda0,
            summary.trace,
            summary.beta_bar,
            summary.delta_sq,
            summary.delta_bound,
            summary.c_av_direct,
            summary.c_av_identity,
            summary.market_var
        )
        .expect("string write");
    }
    write_text(&config.output_dir.join("windows.csv"), &windows_text)?;

    let mut metadata = String::new();
    writeln!(metadata, "version={}", env!("CARGO_PKG_VERSION")).expect("string write");
    writeln!(metadata, "r_norm={}", returns.r_norm).expect("string write");
    writeln!(metadata, "n_firms={}", returns.n_firms()).expect("string write");
    writeln!(metadata, "n_observations={}", returns.n_obs()).expect("string write");
    writeln!(metadata, "window_width_days={width}").expect("string write");
    writeln!(metadata, "window_step_days={step}").expect("string write");
    writeln!(metadata, "n_windows={}", grid.len()).expect("string write");
    writeln!(metadata, "bound_checks_passed={bound_ok}").expect("string write");
    writeln!(metadata, "bound_checks_total={}", series.windows.len()).expect("string write");
    write_text(&config.output_dir.join("metadata.txt"), &metadata)?;

    Ok(AnalyzeReport {
        n_windows: grid.len(),
        bound_checks_passed: bound_ok,
        r_norm: returns.r_norm,
    })
}

/// Sub-market scaling table and power-law fits.
pub fn run_scaling(config: &RunConfig) -> Result<Vec<ScalingPoint>, RunError> {
    let sep = config.delimiter.as_str();
    let panel = load_clean_panel(config)?;
    let returns = compute_returns(&panel)?;
    let points = scaling_curve(&returns, &config.scaling.k_grid)?;

    ensure_dir(&config.output_dir)?;
    let mut table = format!(
        "k{sep}n_sub{sep}lambda0_mean{sep}delta_sq_mean{sep}sigma_beta_mean{sep}lambda0_spread\n"
    );
    for p in &points {
        writeln!(
            table,
            "{}{sep}{}{sep}{}{sep}{}{sep}{}{sep}{}",
            p.groups, p.group_size, p.lambda0_mean, p.delta_sq_mean, p.sigma_beta_mean,
            p.lambda0_spread
        )
        .expect("string write");
    }
    write_text(&config.output_dir.join("scaling.csv"), &table)?;

    type Observable = fn(&ScalingPoint) -> f64;
    let mut fits = format!("observable{sep}exponent{sep}intercept{sep}max_residual\n");
    let observables: [(&str, Observable); 3] = [
        ("lambda0", |p| p.lambda0_mean),
        ("delta_sq", |p| p.delta_sq_mean),
        ("sigma_beta", |p| p.sigma_beta_mean),
    ];
    for (name, getter) in &observables {
        let pairs: Vec<(f64, f64)> = points
            .iter()
            .map(|p| (p.group_size as f64, getter(p)))
            .collect();
        match fit_power_law(&pairs) {
            Ok(fit) => writeln!(
                fits,
                "{name}{sep}{}{sep}{}{sep}{}",
                fit.exponent, fit.intercept, fit.max_residual
            )
            .expect("string write"),
            Err(_) => writeln!(fits, "{name}{sep}nan{sep}nan{sep}nan").expect("string write"),
        }
    }
    write_text(&config.output_dir.join("scaling_fits.csv"), &fits)?;

    Ok(points)
}

/// Phase series over yearly windows plus market-leader tables.
pub fn run_phase(config: &RunConfig) -> Result<Vec<phase::PhasePoint>, RunError> {
    let sep = config.delimiter.as_str();
    let delim = config.delimiter_byte()?;
    let panel = load_clean_panel(config)?;
    let returns = compute_returns(&panel)?;
    let sector_map = ingest::read_sector_map_file(&config.sector_map_path(), delim)?;
    let taxonomy = SectorTaxonomy::new(sector_map.taxonomy())?;

    let width = config.phase.width()?;
    let step = config.phase.step()?;
    let grid = analysis_grid(returns.n_obs(), width, step)?;
    let points = phase::phase_series(
        &returns,
        &grid,
        &taxonomy,
        config.thresholds.risk_beta,
        config.phase.permutations,
        config.seed,
    )?;

    ensure_dir(&config.output_dir)?;
    let mut table = format!(
        "center_date{sep}year{sep}sector{sep}risk{sep}m{sep}noise_threshold{sep}label\n"
    );
    for point in &points {
        let date = returns.dates[point.spec.center.min(returns.n_obs() - 1)];
        let label = point.label.describe(&taxonomy);
        for (s, name) in taxonomy.names().iter().enumerate() {
            writeln!(
                table,
                "{date}{sep}{}{sep}{name}{sep}{}{sep}{}{sep}{}{sep}{label}",
                point.year, point.risk.risk[s], point.m[s], point.noise_threshold
            )
            .expect("string write");
        }
    }
    write_text(&config.output_dir.join("phase.csv"), &table)?;

    // Leader tables at the configured cut, one block per window.
    let mut leaders_text =
        format!("center_date{sep}ticker{sep}sector{sep}beta{sep}annual_volume\n");
    for (spec, point) in grid.iter().zip(&points) {
        let window = SpectralWindow::compute(&returns, *spec)?;
        let volumes = returns.annual_volume(point.year)?;
        let leaders = market_leaders(
            &window.betas,
            config.thresholds.beta_c,
            &returns.tickers,
            &returns.sectors,
            &volumes,
        );
        let date = returns.dates[spec.center.min(returns.n_obs() - 1)];
        for leader in leaders {
            writeln!(
                leaders_text,
                "{date}{sep}{}{sep}{}{sep}{}{sep}{}",
                leader.ticker, leader.sector, leader.beta, leader.volume
            )
            .expect("string write");
        }
    }
    write_text(&config.output_dir.join("leaders.csv"), &leaders_text)?;

    Ok(points)
}

/// Generate a synthetic market and write it in the ingest quote format.
pub fn run_synth(config: &RunConfig) -> Result<(), RunError> {
    let synth = config
        .synth
        .as_ref()
        .ok_or_else(|| RunError::Config("synth section missing from config".into()))?;
    if synth.n_firms == 0 || synth.n_days < 2 {
        return Err(RunError::Config(
            "synth needs at least 1 firm and 2 days".into(),
        ));
    }
    let sep = config.delimiter.as_str();
    let taxonomy = match &synth.sectors {
        Some(names) => SectorTaxonomy::new(names.clone())?,
        None => SectorTaxonomy::gics(),
    };
    let n = synth.n_firms;
    let s = taxonomy.len();

    // Firm i joins sector i mod S; base volumes cycle within the sector
    // so every sector carries the same volume composition.
    let firm_sectors: Vec<usize> = (0..n).map(|i| i % s).collect();
    let base_volume: Vec<f64> = (0..n)
        .map(|i| synth.volume_pattern[(i / s) % synth.volume_pattern.len()])
        .collect();

    let mut gamma_rng = crate::substream(config.seed, "synth-gamma");
    let gamma = synth.gamma.build(n, &mut gamma_rng)?;
    let mut beta0_rng = crate::substream(config.seed, "synth-beta0");
    let beta0_base = synth.beta0.build(n, &mut beta0_rng)?;

    let plant_sector = match &synth.plant {
        Some(plant) => Some(
            taxonomy
                .index_of(&plant.sector)
                .ok_or_else(|| RunError::Config(format!(
                    "planted sector {:?} is not in the taxonomy",
                    plant.sector
                )))?,
        ),
        None => None,
    };

    let epochs: Vec<(usize, Vec<f64>, f64)> = match (&synth.plant, plant_sector) {
        (Some(plant), Some(sector)) => {
            if !(plant.epoch_fraction > 0.0 && plant.epoch_fraction < 1.0) {
                return Err(RunError::Config(
                    "plant epoch_fraction must be in (0, 1)".into(),
                ));
            }
            let t1 = ((synth.n_days as f64) * plant.epoch_fraction).round() as usize;
            let t1 = t1.clamp(1, synth.n_days - 1);
            let mut planted = beta0_base.clone();
            for (i, b) in planted.iter_mut().enumerate() {
                if firm_sectors[i] == sector {
                    *b *= plant.coupling;
                }
            }
            vec![
                (t1, planted, plant.volume),
                (synth.n_days - t1, beta0_base.clone(), 1.0),
            ]
        }
        _ => vec![(synth.n_days, beta0_base.clone(), 1.0)],
    };

    // Trading dates: consecutive weekdays, one more than return days.
    let mut dates = Vec::with_capacity(synth.n_days + 1);
    let mut date = synth.start_date;
    while dates.len() < synth.n_days + 1 {
        if date.weekday() != Weekday::Sat && date.weekday() != Weekday::Sun {
            dates.push(date);
        }
        date = date.succ_opt().expect("date range");
    }

    // Generate returns epoch by epoch and integrate into prices. Model
    // returns are scaled down for the price path; the global return
    // normalization downstream removes any constant factor.
    const PRICE_SCALE: f64 = 0.01;
    let mut returns = Array2::zeros((n, synth.n_days));
    let mut offset = 0usize;
    for (k, (len, beta0, _)) in epochs.iter().enumerate() {
        let mut params = SvmParams {
            beta0: beta0.clone(),
            gamma_m: synth.gamma_m,
            gamma: gamma.clone(),
            seed: derived_seed(config.seed, &format!("synth-epoch-{k}")),
        };
        params.normalize_beta0();
        params.validate()?;
        let block = sample_returns(&params, *len);
        for i in 0..n {
            for t in 0..*len {
                returns[[i, offset + t]] = block[[i, t]];
            }
        }
        offset += len;
    }

    let epoch_of_day = |t: usize| -> usize {
        // Price day t sits in the epoch covering return day min(t, last).
        let mut day = t.min(synth.n_days - 1);
        for (k, (len, _, _)) in epochs.iter().enumerate() {
            if day < *len {
                return k;
            }
            day -= len;
        }
        epochs.len() - 1
    };

    ensure_dir(&config.output_dir)?;
    let mut quotes = format!("date{sep}ticker{sep}price{sep}volume\n");
    let mut prices = vec![synth.start_price; n];
    for (t, date) in dates.iter().enumerate() {
        let epoch = epoch_of_day(t);
        let volume_boost = epochs[epoch].2;
        for i in 0..n {
            let volume = if Some(firm_sectors[i]) == plant_sector {
                base_volume[i] * volume_boost
            } else {
                base_volume[i]
            };
            writeln!(
                quotes,
                "{date}{sep}F{i:03}{sep}{}{sep}{volume}",
                prices[i]
            )
            .expect("string write");
        }
        if t < synth.n_days {
            for i in 0..n {
                prices[i] *= (returns[[i, t]] * PRICE_SCALE).exp();
            }
        }
    }
    write_text(&config.output_dir.join("quotes.csv"), &quotes)?;

    let mut sectors_text = format!("ticker{sep}sector\n");
    for (i, &sector) in firm_sectors.iter().enumerate() {
        writeln!(sectors_text, "F{i:03}{sep}{}", taxonomy.names()[sector])
            .expect("string write");
    }
    // Unpopulated taxonomy sectors still need to exist in the map so the
    // downstream sector count S matches the declared taxonomy.
    if n < s {
        for name in taxonomy.names().iter().skip(n) {
            writeln!(sectors_text, "_UNUSED_{name}{sep}{name}").expect("string write");
        }
    }
    write_text(&config.output_dir.join("sectors.csv"), &sectors_text)?;

    Ok(())
}

/// Deterministic seed derivation for named sub-purposes.
pub fn derived_seed(seed: u64, name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for byte in name.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
