//! The hierarchical generative law and its exact log-likelihood.
//!
//! Daily rainfall D is a censored view of a latent Gaussian-like panel Y:
//!
//! ```text
//! D_t(sᵢ) = Y_t(sᵢ)·1{Y_t(sᵢ) > 0}          (zeros are censoring events)
//! Y_t     = β₀ + Σ_k X_kt β_k + V_t           (regression mean)
//! V_t     = b·V_{t−1} + U_t                   (AR(1) errors)
//! U_t     = S_t Z_t                           (ARCH volatility × spatial GH)
//! S²_t    = ω + α·U²_{t−1}  componentwise
//! Z_t     ~ GH, standardized to mean 0, covariance ρ (Matérn)
//! ```
//!
//! Z is the correlated standardization of the GH law with common skewness
//! m_τ: the zero-mean, covariance-ρ member whose skew loading is the same
//! at every station (γ_z = γ_c·1). Its dispersion is the exchangeable
//! perturbation Σ_ρ = c_I·ρ + c_J·11′, with the scalars read off from the
//! identity-covariance standardization. Scaling by the diagonal S_t then
//! gives E U_t = 0, Var U_t = S_t ρ S_t exactly, per-station skew loading
//! γ_c·S_t(sᵢ) — the univariate volatility-scaled skew — and a likelihood
//! that is invariant under station relabeling. Mixing an exchangeable GH
//! vector through chol(ρ) instead would tie the law to station order,
//! because a Cholesky factor is basis-dependent.
//!
//! The row density collapses onto Σ_ρ: with e = S_t⁻¹(y − μ_t), the
//! quadratic form needs one triangular solve against chol(Σ_ρ) and the
//! skew term is γ_c·e′(Σ_ρ⁻¹1) with the solve precomputed — per row a
//! diagonal scale, one O(N²) solve, and a single Bessel evaluation.

use crate::error::{Error, Result};
use crate::gh::{self, standardize_gh, GhParams};
use crate::linalg;
use crate::spatial::{build_correlation_from_distances, distance_matrix, MaternParams, StationSet};
use crate::special::log_bessel_k;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const LN_2PI: f64 = 1.8378770664093453;

/// Everything the posterior explores, in natural units.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    /// AR(1) coefficient of the error process; |b| < 1.
    pub b: f64,
    /// ARCH level; ω ≥ 0 (jointly positive with α·u²).
    pub omega: f64,
    /// ARCH load on the squared lagged innovation; 0 ≤ α < 1 so the
    /// unconditional scale √(ω/(1−α)) exists for the t = 1 state.
    pub alpha: f64,
    /// GH subclass index.
    pub lambda: f64,
    /// GH shape; ψ > 0 (χ is gauge-fixed to 1).
    pub psi: f64,
    /// Common skewness: τ(sᵢ) = m_τ at every station.
    pub m_tau: f64,
    /// Global intercept.
    pub beta0: f64,
    /// Regression loadings, one per covariate panel.
    pub beta: Vec<f64>,
    /// Matérn decay (per degree) and smoothness.
    pub theta: f64,
    pub phi: f64,
}

impl ParameterVector {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.b,
            self.omega,
            self.alpha,
            self.lambda,
            self.psi,
            self.m_tau,
            self.beta0,
            self.theta,
            self.phi,
        ];
        if scalars.iter().any(|v| !v.is_finite())
            || self.beta.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Domain("parameters must be finite".into()));
        }
        if self.b.abs() >= 1.0 {
            return Err(Error::Domain(format!("|b| < 1 required, got {}", self.b)));
        }
        if self.omega < 0.0 || !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!(
                "need ω ≥ 0 and 0 ≤ α < 1, got ω={}, α={}",
                self.omega, self.alpha
            )));
        }
        if self.omega == 0.0 {
            // every t = 1 volatility would be zero regardless of α
            return Err(Error::Domain("ω = 0 gives a degenerate first step".into()));
        }
        if !(self.psi > 0.0) || !(self.theta > 0.0) || !(self.phi > 0.0) {
            return Err(Error::Domain(format!(
                "need ψ, θ, φ > 0; got ψ={}, θ={}, φ={}",
                self.psi, self.theta, self.phi
            )));
        }
        Ok(())
    }
}

/// Observed panel: stations, censored data matrix (NaN marks missing),
/// and covariate panels already broadcast to T×N.
#[derive(Clone, Debug)]
pub struct PanelData {
    stations: StationSet,
    d: DMatrix<f64>,
    x: Vec<DMatrix<f64>>,
    dist: DMatrix<f64>,
    pattern: CensoringPattern,
}

/// Partition of station indices per day: strictly positive observations,
/// zeros (censored), and missing values.
#[derive(Clone, Debug, Default)]
pub struct CensoringPattern {
    pub observed: Vec<Vec<usize>>,
    pub censored: Vec<Vec<usize>>,
    pub missing: Vec<Vec<usize>>,
}

impl PanelData {
    pub fn new(stations: StationSet, d: DMatrix<f64>, x: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = stations.len();
        let t_len = d.nrows();
        if d.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: d.ncols(),
            });
        }
        if t_len == 0 {
            return Err(Error::Data("panel has no time steps".into()));
        }
        for (k, xk) in x.iter().enumerate() {
            if xk.nrows() != t_len || xk.ncols() != n {
                return Err(Error::Data(format!(
                    "covariate panel {k} is {}×{}, want {t_len}×{n}",
                    xk.nrows(),
                    xk.ncols()
                )));
            }
            if xk.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("covariate panel {k} has non-finite entries")));
            }
        }
        let mut pattern = CensoringPattern::default();
        for t in 0..t_len {
            let mut obs = Vec::new();
            let mut cen = Vec::new();
            let mut mis = Vec::new();
            for i in 0..n {
                let v = d[(t, i)];
                if v.is_nan() {
                    mis.push(i);
                } else if v > 0.0 {
                    obs.push(i);
                } else if v == 0.0 {
                    cen.push(i);
                } else {
                    return Err(Error::Data(format!(
                        "negative observation {v} at (t={t}, station {i})"
                    )));
                }
            }
            pattern.observed.push(obs);
            pattern.censored.push(cen);
            pattern.missing.push(mis);
        }
        let dist = distance_matrix(&stations);
        Ok(Self {
            stations,
            d,
            x,
            dist,
            pattern,
        })
    }

    pub fn stations(&self) -> &StationSet {
        &self.stations
    }
    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }
    pub fn t_len(&self) -> usize {
        self.d.nrows()
    }
    pub fn observations(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn covariates(&self) -> &[DMatrix<f64>] {
        &self.x
    }
    pub fn n_covariates(&self) -> usize {
        self.x.len()
    }
    pub fn pattern(&self) -> &CensoringPattern {
        &self.pattern
    }
    /// Cached pairwise station distances in the degree metric.
    pub fn distances(&self) -> &DMatrix<f64> {
        &self.dist
    }

    /// Regression mean row β₀ + Σ_k X_kt β_k.
    pub fn regression_row(&self, z: &ParameterVector, t: usize) -> Result<DVector<f64>> {
        if z.beta.len() != self.x.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                found: z.beta.len(),
            });
        }
        let mut row = DVector::from_element(self.n_stations(), z.beta0);
        for (xk, bk) in self.x.iter().zip(&z.beta) {
            for i in 0..self.n_stations() {
                row[i] += xk[(t, i)] * bk;
            }
        }
        Ok(row)
    }
}

/// Augmented latent panel and its derived AR/ARCH fields. Redundant by
/// construction: V, U, S are functions of (Y, ζ) and must stay consistent
/// with the stored Y — rebuild with [`LatentState::from_augmented`] after
/// any change to Y or ζ.
#[derive(Clone, Debug)]
pub struct LatentState {
    pub y: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

/// Componentwise √(ω + α·u²); errors when a component has no variance
/// source at all.
pub fn volatility_update(u_prev: &DVector<f64>, omega: f64, alpha: f64) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(u_prev.len());
    for i in 0..u_prev.len() {
        let s2 = omega + alpha * u_prev[i] * u_prev[i];
        if !(s2 > 0.0) {
            return Err(Error::Domain(format!(
                "zero volatility at component {i}: ω={omega}, α={alpha}, u={}",
                u_prev[i]
            )));
        }
        out[i] = s2.sqrt();
    }
    Ok(out)
}

impl LatentState {
    /// Rebuild (V, U, S) from an augmented Y panel under ζ. The t = 1
    /// volatility is the unconditional ARCH scale √(ω/(1−α)); V₀ = 0.
    pub fn from_augmented(z: &ParameterVector, data: &PanelData, y: DMatrix<f64>) -> Result<Self> {
        z.validate()?;
        let (t_len, n) = (data.t_len(), data.n_stations());
        if y.nrows() != t_len || y.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: t_len * n,
                found: y.nrows() * y.ncols(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("augmented panel must be finite".into()));
        }
        let mut v = DMatrix::zeros(t_len, n);
        let mut u = DMatrix::zeros(t_len, n);
        let mut s = DMatrix::zeros(t_len, n);
        let s1 = (z.omega / (1.0 - z.alpha)).sqrt();
        for t in 0..t_len {
            let reg = data.regression_row(z, t)?;
            for i in 0..n {
                v[(t, i)] = y[(t, i)] - reg[i];
                let v_prev = if t == 0 { 0.0 } else { v[(t - 1, i)] };
                u[(t, i)] = v[(t, i)] - z.b * v_prev;
                s[(t, i)] = if t == 0 {
                    s1
                } else {
                    let s2 = z.omega + z.alpha * u[(t - 1, i)] * u[(t - 1, i)];
                    s2.sqrt()
                };
            }
        }
        Ok(Self { y, v, u, s })
    }
}

/// Per-ζ quantities reused by every row of the likelihood: the
/// ρ-standardized innovation law and the constant part of the log density.
pub struct InnovationKernel {
    /// Z_t's law: mean 0, covariance ρ, skew loading γ_c·1.
    z_rho: GhParams,
    /// chol(Σ_ρ) for the per-row quadratic form.
    chol_rho: DMatrix<f64>,
    /// Σ_ρ⁻¹·1, so the skew term of a row is γ_c·e′w.
    w: DVector<f64>,
    mu_c: f64,
    gamma_c: f64,
    log_const: f64,
    ln_psi_p: f64,
    order: f64,
    lambda: f64,
    psi: f64,
    b: f64,
    n: usize,
}

impl InnovationKernel {
    pub fn new(z: &ParameterVector, distances: &DMatrix<f64>) -> Result<Self> {
        z.validate()?;
        let n = distances.nrows();
        let tau = DVector::from_element(n, z.m_tau);
        let z_std = standardize_gh(z.lambda, z.psi, &tau)?;
        // exchangeable scalars of the identity standardization: Σ_z is
        // c_I·I + c_J·11′, the mean −μ_c·… and skew γ_c common to every
        // component
        let mu_c = z_std.mu()[0];
        let gamma_c = z_std.gamma()[0];
        let c_j = if n > 1 { z_std.sigma()[(0, 1)] } else { 0.0 };
        let c_i = z_std.sigma()[(0, 0)] - c_j;

        // swap the identity block for the Matérn correlation: the same
        // scalars then give E Z = 0, Var Z = ρ exactly
        let matern = MaternParams::new(z.theta, z.phi)?;
        let rho = build_correlation_from_distances(&matern, distances)?;
        let mut sigma_rho = rho.matrix().clone() * c_i;
        sigma_rho.iter_mut().for_each(|v| *v += c_j);
        let chol_rho = linalg::cholesky(&sigma_rho)?;
        let w = linalg::chol_solve(&chol_rho, &DVector::from_element(n, 1.0));
        let tau_rho = &w * gamma_c;
        let z_rho = GhParams::new(
            z.lambda,
            1.0,
            z.psi,
            DVector::from_element(n, mu_c),
            sigma_rho,
            tau_rho,
        )?;

        let p_quad = gamma_c * gamma_c * w.sum();
        let ln_psi_p = (z.psi + p_quad).ln();
        let log_const = 0.5 * z.lambda * z.psi.ln()
            - 0.5 * n as f64 * LN_2PI
            - 0.5 * linalg::log_det(&chol_rho)
            - log_bessel_k(z.lambda, z.psi.sqrt())?;
        Ok(Self {
            z_rho,
            chol_rho,
            w,
            mu_c,
            gamma_c,
            log_const,
            ln_psi_p,
            order: z.lambda - 0.5 * n as f64,
            lambda: z.lambda,
            psi: z.psi,
            b: z.b,
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The innovation law Z_t itself (mean 0, covariance ρ).
    pub fn innovation_law(&self) -> &GhParams {
        &self.z_rho
    }

    /// Mean of the day-t row law: reg + b·V_{t−1} + μ_c·S_t.
    fn row_mean(
        &self,
        reg: &DVector<f64>,
        v_prev: &DVector<f64>,
        s_row: &DVector<f64>,
    ) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| {
            reg[i] + self.b * v_prev[i] + s_row[i] * self.mu_c
        })
    }

    /// Log density of one augmented row given the previous state, through
    /// the standardized solve. O(N²) plus one Bessel call.
    pub fn row_log_density(
        &self,
        y_row: &DVector<f64>,
        reg: &DVector<f64>,
        v_prev: &DVector<f64>,
        s_row: &DVector<f64>,
    ) -> Result<f64> {
        let mean = self.row_mean(reg, v_prev, s_row);
        let e = DVector::from_fn(self.n, |i, _| (y_row[i] - mean[i]) / s_row[i]);
        let f = linalg::solve_lower(&self.chol_rho, &e);
        let q = f.norm_squared();

        let ln_chi_q = (1.0 + q).ln();
        let arg = (0.5 * (ln_chi_q + self.ln_psi_p)).exp();
        let log_s_sum: f64 = s_row.iter().map(|s| s.ln()).sum();
        Ok(self.log_const - log_s_sum
            + 0.25 * (self.n as f64 - 2.0 * self.lambda) * (self.ln_psi_p - ln_chi_q)
            + log_bessel_k(self.order, arg)?
            + self.gamma_c * e.dot(&self.w))
    }

    /// Full GH parameters of the day-t row law — the explicit route used
    /// by prediction and tests, not by the likelihood loop.
    pub fn row_law(
        &self,
        reg: &DVector<f64>,
        v_prev: &DVector<f64>,
        s_row: &DVector<f64>,
    ) -> Result<GhParams> {
        let mean = self.row_mean(reg, v_prev, s_row);
        let cov = DMatrix::from_fn(self.n, self.n, |i, j| {
            s_row[i] * self.z_rho.sigma()[(i, j)] * s_row[j]
        });
        // τ_t = Σ_t⁻¹(γ_c·S1) = γ_c·S⁻¹Σ_ρ⁻¹1
        let tau = DVector::from_fn(self.n, |i, _| self.gamma_c * self.w[i] / s_row[i]);
        GhParams::new(self.lambda, 1.0, self.psi, mean, cov, tau)
    }
}

/// Row law of Y_t given the previous state, with S_t derived from
/// U_{t−1} through the ARCH recursion.
pub fn conditional_y_params(
    z: &ParameterVector,
    v_prev: &DVector<f64>,
    u_prev: &DVector<f64>,
    reg_row: &DVector<f64>,
    distances: &DMatrix<f64>,
) -> Result<GhParams> {
    let kernel = InnovationKernel::new(z, distances)?;
    let s_row = volatility_update(u_prev, z.omega, z.alpha)?;
    kernel.row_law(reg_row, v_prev, &s_row)
}

/// Joint log-likelihood of the augmented panel: Σ_t ln f(Y_t | Y_{t−1}, ζ).
///
/// The state must be consistent with the data's censoring pattern —
/// censored coordinates nonpositive, observed coordinates equal to the
/// data — because the augmented values stand in for the censored integral.
pub fn panel_log_likelihood(
    z: &ParameterVector,
    lat: &LatentState,
    data: &PanelData,
) -> Result<f64> {
    let (t_len, n) = (data.t_len(), data.n_stations());
    let pat = data.pattern();
    for t in 0..t_len {
        for &i in &pat.censored[t] {
            if lat.y[(t, i)] > 0.0 {
                return Err(Error::Domain(format!(
                    "augmented Y at (t={t}, station {i}) is {} but the day is censored",
                    lat.y[(t, i)]
                )));
            }
        }
        for &i in &pat.observed[t] {
            if lat.y[(t, i)] != data.observations()[(t, i)] {
                return Err(Error::Domain(format!(
                    "augmented Y at (t={t}, station {i}) disagrees with the observation"
                )));
            }
        }
    }

    let kernel = InnovationKernel::new(z, data.distances())?;
    let zero = DVector::zeros(n);
    let mut total = 0.0;
    for t in 0..t_len {
        let reg = data.regression_row(z, t)?;
        let y_row = lat.y.row(t).transpose();
        let s_row = lat.s.row(t).transpose();
        let v_prev = if t == 0 {
            zero.clone()
        } else {
            lat.v.row(t - 1).transpose()
        };
        let lf = kernel.row_log_density(&y_row, &reg, &v_prev, &s_row)?;
        if !lf.is_finite() {
            return Err(Error::NonFiniteDensity { t });
        }
        total += lf;
    }
    Ok(total)
}

/// Forward pass of the generative law: simulate T days at the given
/// stations, emit the censored view, and keep the ground-truth latents.
pub fn simulate_panel(
    z: &ParameterVector,
    stations: &StationSet,
    x: &[DMatrix<f64>],
    t_len: usize,
    seed: u64,
) -> Result<(PanelData, LatentState)> {
    z.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    simulate_panel_with_rng(z, stations, x, t_len, &mut rng)
}

pub fn simulate_panel_with_rng<R: Rng + ?Sized>(
    z: &ParameterVector,
    stations: &StationSet,
    x: &[DMatrix<f64>],
    t_len: usize,
    rng: &mut R,
) -> Result<(PanelData, LatentState)> {
    z.validate()?;
    let n = stations.len();
    if z.beta.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: z.beta.len(),
        });
    }
    let dist = distance_matrix(stations);
    let kernel = InnovationKernel::new(z, &dist)?;

    let mut y = DMatrix::<f64>::zeros(t_len, n);
    let mut v = DMatrix::<f64>::zeros(t_len, n);
    let mut u = DMatrix::<f64>::zeros(t_len, n);
    let mut s = DMatrix::<f64>::zeros(t_len, n);
    let mut d = DMatrix::<f64>::zeros(t_len, n);

    let s1 = (z.omega / (1.0 - z.alpha)).sqrt();
    for t in 0..t_len {
        let z_draw = gh::sample(kernel.innovation_law(), rng);
        for i in 0..n {
            s[(t, i)] = if t == 0 {
                s1
            } else {
                (z.omega + z.alpha * u[(t - 1, i)] * u[(t - 1, i)]).sqrt()
            };
            u[(t, i)] = s[(t, i)] * z_draw[i];
            let v_prev = if t == 0 { 0.0 } else { v[(t - 1, i)] };
            v[(t, i)] = z.b * v_prev + u[(t, i)];
            let mut reg = z.beta0;
            for (xk, bk) in x.iter().zip(&z.beta) {
                reg += xk[(t, i)] * bk;
            }
            y[(t, i)] = reg + v[(t, i)];
            d[(t, i)] = if y[(t, i)] > 0.0 { y[(t, i)] } else { 0.0 };
        }
    }
    let data = PanelData::new(stations.clone(), d, x.to_vec())?;
    let lat = LatentState { y, v, u, s };
    Ok((data, lat))
}
