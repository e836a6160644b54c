//! Out-of-sample prediction: the law of the process at unmonitored sites,
//! one-step-ahead forecasts at the stations, and posterior-predictive
//! ensembles composed over archive draws.
//!
//! A fresh site carries its own AR/ARCH state, which is unobservable. We
//! run the same recursion the stations use, seeding it at the stationary
//! volatility and *sampling* the site's innovations step by step from
//! their law given the station panel. Zeroing the site state instead
//! would understate predictive spread. Because the site state at step t
//! depends on the sampled value at t−1, a prediction at time t always
//! simulates the full path from the start of the record; requesting a
//! subset of times changes only what is recorded, not what is simulated.
//!
//! Ensembles pair each simulation with one retained posterior draw and
//! that draw's augmented panel, so parameter and augmentation uncertainty
//! both propagate. Simulations own independent RNG streams and are merged
//! by index, making an ensemble a pure function of (archive, request,
//! seed) regardless of worker count.

use crate::error::{Error, Result};
use crate::gh::{self, condition_gh, GhParams};
use crate::inference::{sorted_quantile, PosteriorArchive};
use crate::model::{
    conditional_y_params, volatility_update, InnovationKernel, LatentState, PanelData,
    ParameterVector,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Targets closer than this (degrees) to a station or to each other make
/// the joint correlation matrix numerically singular.
const COINCIDENCE_TOL_DEG: f64 = 1e-9;

/// An unmonitored location to predict at.
#[derive(Clone, Debug)]
pub struct PredictionSite {
    pub id: String,
    /// (longitude, latitude) in degrees, same convention as `StationSet`.
    pub coords: (f64, f64),
    pub elevation_m: f64,
    /// Covariate row at the prediction time, aligned with the fitted set.
    pub covariates: Vec<f64>,
}

impl PredictionSite {
    fn validate(&self, n_covariates: usize) -> Result<()> {
        if !(self.coords.0.is_finite() && self.coords.1.is_finite() && self.elevation_m.is_finite())
        {
            return Err(Error::Domain(format!(
                "site {}: non-finite coordinates or elevation",
                self.id
            )));
        }
        if self.covariates.len() != n_covariates {
            return Err(Error::DimensionMismatch {
                expected: n_covariates,
                found: self.covariates.len(),
            });
        }
        if self.covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "site {}: non-finite covariate",
                self.id
            )));
        }
        Ok(())
    }
}

/// AR/ARCH state carried at the target sites between steps of the
/// recursive prediction.
#[derive(Clone, Debug)]
pub struct TargetState {
    pub v_prev: DVector<f64>,
    pub u_prev: DVector<f64>,
}

impl TargetState {
    /// Pre-sample state: V₀ = U₀ = 0, matching the station convention.
    pub fn initial(r: usize) -> Self {
        TargetState {
            v_prev: DVector::zeros(r),
            u_prev: DVector::zeros(r),
        }
    }
}

/// Distance matrix over stations followed by target sites, with a guard
/// against (near-)coincident locations.
fn joint_distances(data: &PanelData, sites: &[PredictionSite]) -> Result<DMatrix<f64>> {
    let stations = data.stations();
    let n = stations.len();
    let r = sites.len();
    let mut coords: Vec<(f64, f64)> = (0..n).map(|i| stations.coords()[i]).collect();
    coords.extend(sites.iter().map(|s| s.coords));
    let mut d = DMatrix::zeros(n + r, n + r);
    for i in 0..n + r {
        for j in 0..i {
            let dx = coords[i].0 - coords[j].0;
            let dy = coords[i].1 - coords[j].1;
            let v = (dx * dx + dy * dy).sqrt();
            if i >= n && v < COINCIDENCE_TOL_DEG {
                let other = if j < n {
                    format!("station {}", stations.ids()[j])
                } else {
                    format!("site {}", sites[j - n].id)
                };
                return Err(Error::Domain(format!(
                    "site {} coincides with {}; perturb the target or read the value off the station",
                    sites[i - n].id, other
                )));
            }
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Volatility row at the targets: stationary at the first record step,
/// ARCH-updated from the carried state afterwards.
fn target_volatility(z: &ParameterVector, prev: &TargetState, t: usize) -> Result<DVector<f64>> {
    if t == 0 {
        let s1 = (z.omega / (1.0 - z.alpha)).sqrt();
        Ok(DVector::from_element(prev.u_prev.len(), s1))
    } else {
        volatility_update(&prev.u_prev, z.omega, z.alpha)
    }
}

/// Joint day-t law over (stations, targets) conditioned on the stations'
/// augmented values; shared by the one-shot API and the ensemble loop.
fn conditional_at_targets(
    kernel: &InnovationKernel,
    z: &ParameterVector,
    data: &PanelData,
    lat: &LatentState,
    t: usize,
    target_reg: &DVector<f64>,
    prev: &TargetState,
) -> Result<GhParams> {
    let n = data.n_stations();
    let r = target_reg.len();
    if t >= data.t_len() {
        return Err(Error::Domain(format!(
            "time {t} outside the fitted record of length {}",
            data.t_len()
        )));
    }

    let reg_s = data.regression_row(z, t)?;
    let s_star = target_volatility(z, prev, t)?;
    let mut reg = DVector::zeros(n + r);
    let mut s_row = DVector::zeros(n + r);
    let mut v_prev = DVector::zeros(n + r);
    for i in 0..n {
        reg[i] = reg_s[i];
        s_row[i] = lat.s[(t, i)];
        v_prev[i] = if t == 0 { 0.0 } else { lat.v[(t - 1, i)] };
    }
    for j in 0..r {
        reg[n + j] = target_reg[j];
        s_row[n + j] = s_star[j];
        v_prev[n + j] = prev.v_prev[j];
    }

    let joint = kernel.row_law(&reg, &v_prev, &s_row)?;
    let observed: Vec<usize> = (0..n).collect();
    let y_obs = lat.y.row(t).transpose();
    condition_gh(&joint, &observed, &y_obs)
}

/// Law of the process at `sites` on day `t`, given the fitted stations'
/// augmented values and the sites' carried state.
///
/// The conditioning block is the *augmented* panel, so dry station-days
/// contribute their latent (negative) values, not zeros. `prev` is the
/// target-site state produced by the previous step of the recursion —
/// `TargetState::initial` when predicting the first record step.
pub fn spatial_predictive(
    z: &ParameterVector,
    data: &PanelData,
    lat: &LatentState,
    t: usize,
    sites: &[PredictionSite],
    prev: &TargetState,
) -> Result<GhParams> {
    if sites.is_empty() {
        return Err(Error::Domain("no prediction sites given".into()));
    }
    if prev.v_prev.len() != sites.len() {
        return Err(Error::DimensionMismatch {
            expected: sites.len(),
            found: prev.v_prev.len(),
        });
    }
    for site in sites {
        site.validate(data.n_covariates())?;
    }
    let dist = joint_distances(data, sites)?;
    let kernel = InnovationKernel::new(z, &dist)?;
    let target_reg = DVector::from_fn(sites.len(), |j, _| {
        z.beta0
            + z.beta
                .iter()
                .zip(&sites[j].covariates)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    });
    conditional_at_targets(&kernel, z, data, lat, t, &target_reg, prev)
}

/// One draw of the station vector at T+1 given the fitted state through T.
///
/// `x_next` holds the covariate values at T+1, one vector of length N per
/// fitted covariate. The draw is on the process scale; apply
/// `max(·, 0)` to move to precipitation.
pub fn temporal_forecast<R: Rng + ?Sized>(
    z: &ParameterVector,
    data: &PanelData,
    lat: &LatentState,
    x_next: &[DVector<f64>],
    rng: &mut R,
) -> Result<DVector<f64>> {
    let law = forecast_law(z, data, lat, x_next)?;
    Ok(gh::sample(&law, rng))
}

/// GH law of Y_{T+1} given the fitted state through T.
pub fn forecast_law(
    z: &ParameterVector,
    data: &PanelData,
    lat: &LatentState,
    x_next: &[DVector<f64>],
) -> Result<GhParams> {
    let n = data.n_stations();
    if x_next.len() != data.n_covariates() {
        return Err(Error::DimensionMismatch {
            expected: data.n_covariates(),
            found: x_next.len(),
        });
    }
    for x in x_next {
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite covariate at T+1".into()));
        }
    }
    let t_last = data.t_len() - 1;
    let v_prev = lat.v.row(t_last).transpose();
    let u_prev = lat.u.row(t_last).transpose();
    let mut reg = DVector::from_element(n, z.beta0);
    for (k, x) in x_next.iter().enumerate() {
        reg += x * z.beta[k];
    }
    conditional_y_params(z, &v_prev, &u_prev, &reg, data.distances())
}

/// Spatial prediction request: simulate the sites over the fitted record
/// and record the listed times.
#[derive(Clone, Debug)]
pub struct SpatialRequest {
    pub sites: Vec<PredictionSite>,
    /// Per-covariate target panels, T × r, aligned with the fitted record.
    pub target_x: Vec<DMatrix<f64>>,
    /// Strictly increasing panel time indices to record.
    pub times: Vec<usize>,
}

impl SpatialRequest {
    /// Record every step of the fitted record.
    pub fn full_record(
        sites: Vec<PredictionSite>,
        target_x: Vec<DMatrix<f64>>,
        t_len: usize,
    ) -> Self {
        SpatialRequest {
            sites,
            target_x,
            times: (0..t_len).collect(),
        }
    }

    fn validate(&self, data: &PanelData) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::Domain("no prediction sites given".into()));
        }
        for site in &self.sites {
            site.validate(data.n_covariates())?;
        }
        if self.target_x.len() != data.n_covariates() {
            return Err(Error::DimensionMismatch {
                expected: data.n_covariates(),
                found: self.target_x.len(),
            });
        }
        for x in &self.target_x {
            if x.nrows() != data.t_len() || x.ncols() != self.sites.len() {
                return Err(Error::Domain(format!(
                    "target covariate panel must be {}×{}, got {}×{}",
                    data.t_len(),
                    self.sites.len(),
                    x.nrows(),
                    x.ncols()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite target covariate".into()));
            }
        }
        if self.times.is_empty() {
            return Err(Error::Domain("no prediction times requested".into()));
        }
        if !self.times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Domain(
                "prediction times must be strictly increasing".into(),
            ));
        }
        if *self.times.last().unwrap() >= data.t_len() {
            return Err(Error::Domain(format!(
                "prediction time {} outside the fitted record of length {}",
                self.times.last().unwrap(),
                data.t_len()
            )));
        }
        Ok(())
    }
}

/// Builds target covariate panels by copying the stations' values, which
/// is valid only for covariates that are constant across stations (the
/// climate-index kind). Station-varying covariates must be supplied
/// explicitly.
pub fn broadcast_target_covariates(data: &PanelData, r: usize) -> Result<Vec<DMatrix<f64>>> {
    let mut out = Vec::with_capacity(data.n_covariates());
    for (k, x) in data.covariates().iter().enumerate() {
        let mut panel = DMatrix::zeros(data.t_len(), r);
        for t in 0..data.t_len() {
            let row = x.row(t);
            let v = row[0];
            if row.iter().any(|u| (u - v).abs() > 1e-9) {
                return Err(Error::Domain(format!(
                    "covariate {k} varies across stations; supply target values explicitly"
                )));
            }
            for j in 0..r {
                panel[(t, j)] = v;
            }
        }
        out.push(panel);
    }
    Ok(out)
}

/// One-step forecast request: covariate values at T+1, one N-vector per
/// fitted covariate.
#[derive(Clone, Debug)]
pub struct ForecastRequest {
    pub x_next: Vec<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub enum PredictionRequest {
    Spatial(SpatialRequest),
    Forecast(ForecastRequest),
}

/// Posterior-predictive sample on the precipitation scale.
#[derive(Clone, Debug)]
pub struct PredictiveEnsemble {
    pub site_ids: Vec<String>,
    /// Panel time indices; `t_len` denotes the one-step-ahead slot.
    pub times: Vec<usize>,
    /// One simulations × sites matrix per recorded time, all entries ≥ 0.
    pub draws: Vec<DMatrix<f64>>,
    /// Pooled posterior-draw index backing each simulation.
    pub provenance: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub site: String,
    pub time: usize,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q97_5: f64,
}

impl PredictiveEnsemble {
    pub fn n_sims(&self) -> usize {
        self.provenance.len()
    }

    /// Per (time, site) moments and central 95% interval.
    pub fn summaries(&self) -> Vec<EnsembleSummary> {
        let mut out = Vec::with_capacity(self.times.len() * self.site_ids.len());
        for (ti, &time) in self.times.iter().enumerate() {
            for (j, site) in self.site_ids.iter().enumerate() {
                let mut col: Vec<f64> = self.draws[ti].column(j).iter().copied().collect();
                col.sort_by(|a, b| a.total_cmp(b));
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n - 1.0).max(1.0);
                out.push(EnsembleSummary {
                    site: site.clone(),
                    time,
                    mean,
                    sd: var.sqrt(),
                    q2_5: sorted_quantile(&col, 0.025),
                    q97_5: sorted_quantile(&col, 0.975),
                });
            }
        }
        out
    }
}

/// Retained draws with their augmented panels, pooled across chains.
fn pooled_draws(archive: &PosteriorArchive) -> Result<Vec<(&ParameterVector, &DMatrix<f64>)>> {
    let mut out = Vec::new();
    for chain in &archive.chains {
        if chain.latent_panels.len() != chain.draws.len() {
            return Err(Error::Domain(
                "archive lacks augmented panels; refit with keep_latents enabled".into(),
            ));
        }
        out.extend(chain.draws.iter().zip(&chain.latent_panels));
    }
    if out.is_empty() {
        return Err(Error::Domain("empty posterior archive".into()));
    }
    Ok(out)
}

/// Posterior-predictive ensemble for a spatial or forecast request.
///
/// Each simulation draws one retained (ζ, augmented panel) pair and one
/// predictive path from it, then applies `max(·, 0)`. Deterministic in
/// (archive, request, seed).
pub fn predictive_ensemble(
    archive: &PosteriorArchive,
    data: &PanelData,
    request: &PredictionRequest,
    n_sims: usize,
    seed: u64,
) -> Result<PredictiveEnsemble> {
    let pooled = pooled_draws(archive)?;

    let (site_ids, times) = match request {
        PredictionRequest::Spatial(req) => {
            req.validate(data)?;
            joint_distances(data, &req.sites)?;
            (
                req.sites.iter().map(|s| s.id.clone()).collect::<Vec<_>>(),
                req.times.clone(),
            )
        }
        PredictionRequest::Forecast(req) => {
            // validated once here; per-sim calls then cannot fail on shape
            forecast_law(pooled[0].0, data, &reconstruct(pooled[0], data)?, &req.x_next)?;
            (data.stations().ids().to_vec(), vec![data.t_len()])
        }
    };

    let mut selector = ChaCha20Rng::seed_from_u64(seed);
    let provenance: Vec<usize> = (0..n_sims)
        .map(|_| selector.random_range(0..pooled.len()))
        .collect();

    let r = site_ids.len();
    let mut draws: Vec<DMatrix<f64>> = times.iter().map(|_| DMatrix::zeros(n_sims, r)).collect();

    let workers = std::thread::available_parallelism().map_or(1, |v| v.get());
    let chunk = n_sims.div_ceil(workers.max(1)).max(1);
    let sim_ids: Vec<usize> = (0..n_sims).collect();
    let results: Vec<Result<Vec<(usize, Vec<DVector<f64>>)>>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for sims in sim_ids.chunks(chunk) {
            let pooled = &pooled;
            let provenance = &provenance;
            handles.push(scope.spawn(move || {
                let mut part = Vec::with_capacity(sims.len());
                for &sim in sims {
                    let mut rng = ChaCha20Rng::seed_from_u64(seed);
                    rng.set_stream(sim as u64 + 1);
                    let pair = pooled[provenance[sim]];
                    let path = simulate_one(pair, data, request, &mut rng)?;
                    part.push((sim, path));
                }
                Ok(part)
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("ensemble worker panicked"))
            .collect()
    });
    for part in results {
        for (sim, path) in part? {
            for (ti, y) in path.iter().enumerate() {
                for j in 0..r {
                    draws[ti][(sim, j)] = y[j];
                }
            }
        }
    }

    Ok(PredictiveEnsemble {
        site_ids,
        times,
        draws,
        provenance,
    })
}

fn reconstruct(
    pair: (&ParameterVector, &DMatrix<f64>),
    data: &PanelData,
) -> Result<LatentState> {
    LatentState::from_augmented(pair.0, data, pair.1.clone())
}

/// One predictive path under one posterior draw, already censored to the
/// precipitation scale. Returns one target vector per recorded time.
fn simulate_one(
    pair: (&ParameterVector, &DMatrix<f64>),
    data: &PanelData,
    request: &PredictionRequest,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<DVector<f64>>> {
    let (z, _) = pair;
    let lat = reconstruct(pair, data)?;
    match request {
        PredictionRequest::Forecast(req) => {
            let y = temporal_forecast(z, data, &lat, &req.x_next, rng)?;
            Ok(vec![y.map(|v| v.max(0.0))])
        }
        PredictionRequest::Spatial(req) => {
            let dist = joint_distances(data, &req.sites)?;
            let kernel = InnovationKernel::new(z, &dist)?;
            let r = req.sites.len();
            let t_max = *req.times.last().unwrap();
            let mut state = TargetState::initial(r);
            let mut out = Vec::with_capacity(req.times.len());
            let mut next = 0usize;
            for t in 0..=t_max {
                let target_reg = DVector::from_fn(r, |j, _| {
                    z.beta0
                        + z.beta
                            .iter()
                            .enumerate()
                            .map(|(k, b)| b * req.target_x[k][(t, j)])
                            .sum::<f64>()
                });
                let law = conditional_at_targets(&kernel, z, data, &lat, t, &target_reg, &state)?;
                let y_star = gh::sample(&law, rng);
                let v_star = &y_star - &target_reg;
                let u_star = &v_star - &state.v_prev * z.b;
                state = TargetState {
                    v_prev: v_star,
                    u_prev: u_star,
                };
                if next < req.times.len() && req.times[next] == t {
                    out.push(y_star.map(|v| v.max(0.0)));
                    next += 1;
                }
            }
            Ok(out)
        }
    }
}
