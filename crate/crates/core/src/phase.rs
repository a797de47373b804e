//! Sector risk mass, the macroeconomic order parameter, and phase
//! labelling of analysis windows.
//!
//! Per window, each sector accumulates the beta-weighted annual turnover
//! of its above-unity-beta firms. Normalizing the sector shares gives an
//! order parameter per sector that sums to zero over the taxonomy: near
//! zero everywhere in a disordered market, close to one for a sector
//! that concentrates the risk. A window is labelled ordered toward a
//! sector when that sector alone exceeds the 95th percentile of the
//! maximum order parameter under random relabellings of firms.

use crate::ingest::IngestError;
use crate::returns::ReturnPanel;
use crate::spectral::{SpectralError, SpectralWindow, WindowSpec};
use chrono::Datelike;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Beta threshold of the risk gate: only firms with beta above this
/// contribute to sector risk.
pub const RISK_BETA_THRESHOLD: f64 = 1.0;

/// Default number of label permutations behind the noise threshold.
pub const DEFAULT_PERMUTATIONS: usize = 100;

/// The ten GICS sectors used as the default taxonomy for synthetic data.
pub const GICS_SECTORS: [&str; 10] = [
    "Consumer Discretionary",
    "Consumer Staples",
    "Energy",
    "Financials",
    "Health Care",
    "Industrials",
    "IT",
    "Materials",
    "Telecommunication Services",
    "Utilities",
];

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error("no risk mass: all betas below unity")]
    NoRiskMass,

    #[error("herding ratio must be non-negative, got {0}")]
    NegativeTheta(f64),

    #[error("firm arrays disagree: {0}")]
    LengthMismatch(String),

    #[error("sector {0} is not in the taxonomy")]
    UnknownSector(String),

    #[error("taxonomy needs at least 2 sectors, got {0}")]
    TooFewSectors(usize),

    #[error(transparent)]
    Spectral(#[from] SpectralError),

    #[error(transparent)]
    Volume(#[from] IngestError),
}

/// Fixed, ordered sector taxonomy. Sector count S includes sectors with
/// no firms in the current panel.
#[derive(Debug, Clone)]
pub struct SectorTaxonomy {
    names: Vec<String>,
}

impl SectorTaxonomy {
    pub fn new(names: Vec<String>) -> Result<Self, PhaseError> {
        if names.len() < 2 {
            return Err(PhaseError::TooFewSectors(names.len()));
        }
        Ok(SectorTaxonomy { names })
    }

    pub fn gics() -> Self {
        SectorTaxonomy {
            names: GICS_SECTORS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, sector: &str) -> Option<usize> {
        self.names.iter().position(|s| s == sector)
    }

    /// Map firm sector labels to taxonomy indices.
    pub fn assign(&self, sectors: &[String]) -> Result<Vec<usize>, PhaseError> {
        sectors
            .iter()
            .map(|s| {
                self.index_of(s)
                    .ok_or_else(|| PhaseError::UnknownSector(s.clone()))
            })
            .collect()
    }
}

/// Per-sector risk mass at one window.
#[derive(Debug, Clone)]
pub struct SectorRisk {
    pub window_center: usize,
    /// One entry per taxonomy sector, in taxonomy order.
    pub risk: Vec<f64>,
}

/// Per-sector order parameter at one window; entries sum to zero and lie
/// in `[-1/(S-1), 1]`.
#[derive(Debug, Clone)]
pub struct OrderParameter {
    pub window_center: usize,
    pub m: Vec<f64>,
}

/// Beta-gated, volume-weighted risk mass per sector:
/// `R(s) = sum_{i in s} theta(beta_i - threshold) * beta_i * v_i`.
/// Firms at or below the threshold contribute nothing; a sector with no
/// firms simply reports zero.
pub fn sector_risk(
    betas: &[f64],
    volumes: &[f64],
    firm_sectors: &[usize],
    n_sectors: usize,
    threshold: f64,
    window_center: usize,
) -> Result<SectorRisk, PhaseError> {
    if betas.len() != volumes.len() || betas.len() != firm_sectors.len() {
        return Err(PhaseError::LengthMismatch(format!(
            "betas {}, volumes {}, sectors {}",
            betas.len(),
            volumes.len(),
            firm_sectors.len()
        )));
    }
    let mut risk = vec![0.0; n_sectors];
    for ((beta, volume), &sector) in betas.iter().zip(volumes).zip(firm_sectors) {
        if *beta > threshold {
            risk[sector] += beta * volume;
        }
    }
    Ok(SectorRisk {
        window_center,
        risk,
    })
}

/// Normalize risk shares into order parameters:
/// `m(s) = S/(S-1) * (R(s)/sum R - 1/S)`.
pub fn order_parameters(risk: &SectorRisk) -> Result<OrderParameter, PhaseError> {
    let s = risk.risk.len();
    let total: f64 = risk.risk.iter().sum();
    if total <= 0.0 {
        return Err(PhaseError::NoRiskMass);
    }
    let s_f = s as f64;
    let m = risk
        .risk
        .iter()
        .map(|r| s_f / (s_f - 1.0) * (r / total - 1.0 / s_f))
        .collect();
    Ok(OrderParameter {
        window_center: risk.window_center,
        m,
    })
}

/// The order parameter of one reference sector.
pub fn order_parameter(risk: &SectorRisk, sector: usize) -> Result<f64, PhaseError> {
    Ok(order_parameters(risk)?.m[sector])
}

/// Microeconomic order parameter of the herding picture: a
/// noise-trader-to-fundamentalist ratio `theta` maps to
/// `m = theta / (1 + theta)`, strictly increasing and bounded in [0, 1).
pub fn kirman_order_parameter(theta: f64) -> Result<f64, PhaseError> {
    if theta < 0.0 || !theta.is_finite() {
        return Err(PhaseError::NegativeTheta(theta));
    }
    Ok(theta / (1.0 + theta))
}

/// Phase label of one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PhaseLabel {
    /// Exactly one sector exceeds the permutation-noise threshold.
    Ordered(usize),
    Disordered,
}

impl PhaseLabel {
    pub fn describe(&self, taxonomy: &SectorTaxonomy) -> String {
        match self {
            PhaseLabel::Ordered(s) => format!("ordered:{}", taxonomy.names()[*s]),
            PhaseLabel::Disordered => "disordered".to_string(),
        }
    }
}

/// 95th percentile of the maximum sector order parameter under random
/// permutations of the firm-to-sector assignment, holding betas and
/// volumes fixed. Permutations with zero risk mass contribute zero.
pub fn permutation_threshold(
    betas: &[f64],
    volumes: &[f64],
    firm_sectors: &[usize],
    n_sectors: usize,
    threshold: f64,
    n_perms: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, PhaseError> {
    let mut labels = firm_sectors.to_vec();
    let mut maxima = Vec::with_capacity(n_perms);
    for _ in 0..n_perms {
        labels.shuffle(rng);
        let risk = sector_risk(betas, volumes, &labels, n_sectors, threshold, 0)?;
        let max = match order_parameters(&risk) {
            Ok(op) => op.m.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
            Err(PhaseError::NoRiskMass) => 0.0,
            Err(e) => return Err(e),
        };
        maxima.push(max);
    }
    maxima.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((0.95 * n_perms as f64).ceil() as usize).min(n_perms) - 1;
    Ok(maxima[idx])
}

/// Label a window from its order parameters and noise threshold:
/// ordered toward `s` when sector `s` alone exceeds the threshold.
pub fn classify(m: &[f64], noise_threshold: f64) -> PhaseLabel {
    let above: Vec<usize> = m
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > noise_threshold)
        .map(|(s, _)| s)
        .collect();
    match above.as_slice() {
        [only] => PhaseLabel::Ordered(*only),
        _ => PhaseLabel::Disordered,
    }
}

/// One entry of the phase time series.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub spec: WindowSpec,
    pub year: i32,
    pub risk: SectorRisk,
    pub m: Vec<f64>,
    pub noise_threshold: f64,
    pub label: PhaseLabel,
}

/// Compute the order-parameter series over a window grid.
///
/// Per window: diagonalize, take betas, look up annual volumes for the
/// calendar year containing the window center, and form sector risk,
/// order parameters, and the permutation-noise label. A window whose
/// betas all sit below the gate is labelled disordered with zero risk.
pub fn phase_series(
    panel: &ReturnPanel,
    grid: &[WindowSpec],
    taxonomy: &SectorTaxonomy,
    threshold: f64,
    n_perms: usize,
    seed: u64,
) -> Result<Vec<PhasePoint>, PhaseError> {
    let firm_sectors = taxonomy.assign(&panel.sectors)?;
    let mut points = Vec::with_capacity(grid.len());
    for (k, spec) in grid.iter().enumerate() {
        let window = SpectralWindow::compute(panel, *spec)?;
        let year = panel.dates[spec.center.min(panel.n_obs() - 1)].year();
        let volumes = panel.annual_volume(year)?;
        let risk = sector_risk(
            &window.betas,
            &volumes,
            &firm_sectors,
            taxonomy.len(),
            threshold,
            spec.center,
        )?;
        let mut rng = crate::substream(seed, &format!("phase-permutations-{k}"));
        let (m, noise_threshold, label) = match order_parameters(&risk) {
            Ok(op) => {
                let noise = permutation_threshold(
                    &window.betas,
                    &volumes,
                    &firm_sectors,
                    taxonomy.len(),
                    threshold,
                    n_perms,
                    &mut rng,
                )?;
                let label = classify(&op.m, noise);
                (op.m, noise, label)
            }
            Err(PhaseError::NoRiskMass) => {
                (vec![0.0; taxonomy.len()], 0.0, PhaseLabel::Disordered)
            }
            Err(e) => return Err(e),
        };
        points.push(PhasePoint {
            spec: *spec,
            year,
            risk,
            m,
            noise_threshold,
            label,
        });
    }
    Ok(points)
}
