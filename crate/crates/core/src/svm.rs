//! Synthetic market generator under a stochastic volatility model, and
//! the perturbation-theory oracle that predicts its spectrum in closed
//! form.
//!
//! Returns are generated as
//! `r_i(t) = beta0_i * gamma_m * eta_M(t) + gamma_i * eta_i(t)`
//! with independent standard-normal noise, couplings frozen over the
//! sample. The infinite-sample covariance is then
//! `C = gamma_m^2 * beta0 beta0^T + diag(gamma_i^2)`: a strong rank-one
//! market term plus a diagonal perturbation. Second-order
//! Rayleigh-Schroedinger theory around the rank-one term gives the
//! leading eigenvalue and eigenvector to order `1/(gamma_m^2 N)^2`, and
//! a basis construction on the orthogonal complement gives the
//! non-leading eigenvalues.

use crate::eig::eigensystem;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("invalid parameters: {0}")]
    BadParams(String),

    #[error("market coupling gamma_m must be positive for the perturbation oracle")]
    ZeroMarketCoupling,
}

/// Generative model parameters.
///
/// `beta0` must satisfy `sum beta0_i^2 = N`; idiosyncratic couplings are
/// non-negative and the market coupling strictly positive.
#[derive(Debug, Clone)]
pub struct SvmParams {
    pub beta0: Vec<f64>,
    pub gamma_m: f64,
    pub gamma: Vec<f64>,
    pub seed: u64,
}

impl SvmParams {
    pub fn n_firms(&self) -> usize {
        self.beta0.len()
    }

    /// Uniform-coupling model: every firm tied to the market identically.
    pub fn uniform(n: usize, gamma_m: f64, gamma: f64, seed: u64) -> Self {
        SvmParams {
            beta0: vec![1.0; n],
            gamma_m,
            gamma: vec![gamma; n],
            seed,
        }
    }

    /// Rescale `beta0` so the normalization constraint holds exactly.
    pub fn normalize_beta0(&mut self) {
        let n = self.n_firms() as f64;
        let sum_sq: f64 = self.beta0.iter().map(|b| b * b).sum();
        if sum_sq > 0.0 {
            let scale = (n / sum_sq).sqrt();
            for b in &mut self.beta0 {
                *b *= scale;
            }
        }
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        let n = self.n_firms();
        if n == 0 {
            return Err(SvmError::BadParams("no firms".into()));
        }
        if self.gamma.len() != n {
            return Err(SvmError::BadParams(format!(
                "gamma has {} entries for {} firms",
                self.gamma.len(),
                n
            )));
        }
        if self.gamma_m <= 0.0 || !self.gamma_m.is_finite() {
            return Err(SvmError::BadParams(format!(
                "gamma_m must be > 0, got {}",
                self.gamma_m
            )));
        }
        if self.gamma.iter().any(|g| *g < 0.0 || !g.is_finite()) {
            return Err(SvmError::BadParams("gamma entries must be >= 0".into()));
        }
        let sum_sq: f64 = self.beta0.iter().map(|b| b * b).sum();
        if (sum_sq - n as f64).abs() > 1e-12 * n as f64 {
            return Err(SvmError::BadParams(format!(
                "beta0 normalization violated: sum of squares {} for N = {}",
                sum_sq, n
            )));
        }
        Ok(())
    }

    /// Average of `a_i * beta0_i^2` over firms; the weighting that shows
    /// up throughout the perturbation expansion.
    fn beta_weighted_mean(&self, a: impl Fn(usize) -> f64) -> f64 {
        let n = self.n_firms();
        (0..n)
            .map(|i| a(i) * self.beta0[i] * self.beta0[i])
            .sum::<f64>()
            / n as f64
    }
}

/// Closed-form spectral predictions for the ideal covariance.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub lambda0: f64,
    pub betas: Vec<f64>,
    pub sub_eigs: Option<Vec<f64>>,
}

/// Infinite-sample covariance of the model:
/// `C_ij = beta0_i beta0_j gamma_m^2 + delta_ij gamma_i^2`.
pub fn ideal_covariance(params: &SvmParams) -> Array2<f64> {
    let n = params.n_firms();
    let gm2 = params.gamma_m * params.gamma_m;
    let mut cov = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            cov[[i, j]] = params.beta0[i] * params.beta0[j] * gm2;
        }
        cov[[i, i]] += params.gamma[i] * params.gamma[i];
    }
    cov
}

/// Draw a return matrix of `n_days` columns from the model.
///
/// Noise streams are keyed by firm: the market factor uses stream 0 and
/// firm `i` uses stream `i + 1` of a counter-based generator, so
/// enlarging the panel never perturbs existing firms' noise.
pub fn sample_returns(params: &SvmParams, n_days: usize) -> Array2<f64> {
    let n = params.n_firms();
    let mut market_rng = ChaCha8Rng::seed_from_u64(params.seed);
    market_rng.set_stream(0);
    let market: Vec<f64> = (0..n_days)
        .map(|_| StandardNormal.sample(&mut market_rng))
        .collect();

    let mut returns = Array2::zeros((n, n_days));
    for i in 0..n {
        let mut firm_rng = ChaCha8Rng::seed_from_u64(params.seed);
        firm_rng.set_stream(i as u64 + 1);
        let load = params.beta0[i] * params.gamma_m;
        for t in 0..n_days {
            let eta: f64 = StandardNormal.sample(&mut firm_rng);
            returns[[i, t]] = load * market[t] + params.gamma[i] * eta;
        }
    }
    returns
}

/// Leading eigenvalue and eigenvector prediction to second order:
///
/// `lambda_0 = N gamma_m^2 + <g^2> + (<g^4> - <g^2>^2) / (gamma_m^2 N)`
/// `beta_i   = beta0_i * (1 + (gamma_i^2 - <g^2>) / (gamma_m^2 N))`
///
/// where `<.>` averages over firms with weight `beta0_i^2`.
pub fn oracle_leading(params: &SvmParams) -> Result<OracleResult, SvmError> {
    params.validate().map_err(|e| match e {
        SvmError::BadParams(m) if m.starts_with("gamma_m") => SvmError::ZeroMarketCoupling,
        other => other,
    })?;
    let n = params.n_firms() as f64;
    let e0 = params.gamma_m * params.gamma_m * n;
    let g2 = params.beta_weighted_mean(|i| params.gamma[i] * params.gamma[i]);
    let g4 = params.beta_weighted_mean(|i| params.gamma[i].powi(4));

    let lambda0 = e0 + g2 + (g4 - g2 * g2) / e0;
    let betas = params
        .beta0
        .iter()
        .zip(&params.gamma)
        .map(|(b0, g)| b0 * (1.0 + (g * g - g2) / e0))
        .collect();

    Ok(OracleResult {
        lambda0,
        betas,
        sub_eigs: None,
    })
}

/// Non-leading eigenvalue predictions.
///
/// An orthonormal basis of the complement of `f0 = beta0 / sqrt(N)` is
/// built that diagonalizes the diagonal perturbation restricted to that
/// subspace (Householder complement, then a small eigensolve). Each
/// basis vector then carries the prediction
/// `lambda_nu = (f_nu, C1 f_nu) - (f0, C1 f_nu)^2 / E0`.
/// Returned sorted descending. With a degenerate idiosyncratic spectrum
/// the basis is not unique but the predicted set is.
pub fn oracle_subleading(params: &SvmParams) -> Result<Vec<f64>, SvmError> {
    params.validate().map_err(|e| match e {
        SvmError::BadParams(m) if m.starts_with("gamma_m") => SvmError::ZeroMarketCoupling,
        other => other,
    })?;
    let n = params.n_firms();
    if n == 1 {
        return Ok(Vec::new());
    }
    let e0 = params.gamma_m * params.gamma_m * n as f64;
    let sqrt_n = (n as f64).sqrt();
    let f0: Vec<f64> = params.beta0.iter().map(|b| b / sqrt_n).collect();

    // Householder reflection mapping e_1 to f0; its remaining columns
    // span the orthogonal complement.
    let mut u: Vec<f64> = f0.clone();
    u[0] -= 1.0;
    let u_norm_sq: f64 = u.iter().map(|x| x * x).sum();
    let complement_col = |k: usize, i: usize| -> f64 {
        // Column k+1 of H = I - 2 u u^T / |u|^2, for k = 0..n-2.
        let col = k + 1;
        let delta = if i == col { 1.0 } else { 0.0 };
        if u_norm_sq == 0.0 {
            delta
        } else {
            delta - 2.0 * u[i] * u[col] / u_norm_sq
        }
    };

    // Restriction of C1 = diag(gamma^2) to the complement: A_kl =
    // sum_i q_k(i) gamma_i^2 q_l(i).
    let m = n - 1;
    let mut restricted = Array2::zeros((m, m));
    for k in 0..m {
        for l in k..m {
            let mut sum = 0.0;
            for i in 0..n {
                sum += complement_col(k, i)
                    * params.gamma[i]
                    * params.gamma[i]
                    * complement_col(l, i);
            }
            restricted[[k, l]] = sum;
            restricted[[l, k]] = sum;
        }
    }
    let eig = eigensystem(&restricted).map_err(|e| SvmError::BadParams(e.to_string()))?;

    // lambda_nu = Lambda_nu - (f0, C1 f_nu)^2 / E0 with f_nu = Q v_nu.
    let mut predictions: Vec<f64> = (0..m)
        .map(|nu| {
            let mut cross = 0.0;
            for (i, f0_i) in f0.iter().enumerate() {
                let mut f_nu_i = 0.0;
                for k in 0..m {
                    f_nu_i += complement_col(k, i) * eig.vectors[[k, nu]];
                }
                cross += f0_i * params.gamma[i] * params.gamma[i] * f_nu_i;
            }
            eig.values[nu] - cross * cross / e0
        })
        .collect();
    predictions.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(predictions)
}
