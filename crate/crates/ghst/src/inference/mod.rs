//! Posterior sampling: priors, the blockwise MH kernel with censored-data
//! augmentation, multi-chain orchestration, and convergence diagnostics.
//!
//! A chain alternates a four-block random-walk Metropolis sweep on the
//! parameter vector with a forward augmentation pass over censored and
//! missing cells. Proposal scales adapt toward ~25% acceptance during
//! burn-in only — per-component metrics from a running variance estimate,
//! per-block Robbins–Monro on the global step — and freeze at the end of
//! burn-in, so every retained draw comes from a fixed Markov kernel.

mod priors;
mod sweep;

pub use priors::{log_prior, Prior, PriorSpec};
pub use sweep::{augment_censored, mh_step, parameter_by_name, parameter_names};

use crate::error::{Error, Result};
use crate::model::{LatentState, PanelData, ParameterVector};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sweep::{SweepState, N_BLOCKS};

/// Sampler run configuration, shared by every chain of a fit.
#[derive(Clone, Debug)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Initial per-block step multipliers (regression | AR+ARCH | GH
    /// shape | spatial); adaptation refines them during burn-in.
    pub initial_scales: [f64; 4],
    /// Enable burn-in adaptation.
    pub adapt: bool,
    /// Sweeps of history required before the per-component metric is
    /// trusted (and refreshed) during adaptation.
    pub adapt_window: usize,
    /// Keep every retained draw's augmented panel (needed for prediction).
    pub keep_latents: bool,
    /// Upper bound on concurrently running chains; 0 means all at once.
    pub max_concurrent: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 10_000,
            burn_in: 3_000,
            thin: 5,
            n_chains: 2,
            seed: 0,
            initial_scales: [0.5; 4],
            adapt: true,
            adapt_window: 25,
            keep_latents: false,
            max_concurrent: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 || self.n_chains == 0 {
            return Err(Error::Config("thin and n_chains must be at least 1".into()));
        }
        if self.initial_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("proposal scales must be positive".into()));
        }
        if self.adapt && self.adapt_window == 0 {
            return Err(Error::Config("adapt_window must be at least 1".into()));
        }
        Ok(())
    }

    /// Exact number of retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// One chain's output.
#[derive(Clone, Debug)]
pub struct ChainArchive {
    pub draws: Vec<ParameterVector>,
    pub log_posterior: Vec<f64>,
    /// Post-burn-in acceptance rate per proposal block.
    pub acceptance: Vec<f64>,
    /// Augmented panels per retained draw; empty unless `keep_latents`.
    pub latent_panels: Vec<DMatrix<f64>>,
    /// Posterior mean and sd of the augmented panel over retained draws.
    pub latent_mean: DMatrix<f64>,
    pub latent_sd: DMatrix<f64>,
}

/// Merged multi-chain output; chain identity is the vector index.
#[derive(Clone, Debug)]
pub struct PosteriorArchive {
    pub chains: Vec<ChainArchive>,
    /// Flat component names in draw order.
    pub names: Vec<String>,
}

/// Location/scale summary of one marginal posterior.
#[derive(Clone, Debug)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub median: f64,
    pub q97_5: f64,
}

impl PosteriorArchive {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn retained_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.draws.len())
    }

    /// All retained values of one named component, one vector per chain.
    pub fn component_series(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        self.chains
            .iter()
            .map(|c| {
                c.draws
                    .iter()
                    .map(|z| {
                        parameter_by_name(z, name).ok_or_else(|| {
                            Error::Domain(format!("unknown parameter name {name:?}"))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Pooled draws of one component across chains.
    pub fn pooled_component(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.component_series(name)?.concat())
    }

    /// Per-parameter posterior summaries over the pooled chains.
    pub fn summaries(&self) -> Result<Vec<ParamSummary>> {
        self.names
            .iter()
            .map(|name| {
                let mut vals = self.pooled_component(name)?;
                vals.sort_by(|a, b| a.total_cmp(b));
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n - 1.0).max(1.0);
                Ok(ParamSummary {
                    name: name.clone(),
                    mean,
                    sd: var.sqrt(),
                    q2_5: sorted_quantile(&vals, 0.025),
                    median: sorted_quantile(&vals, 0.5),
                    q97_5: sorted_quantile(&vals, 0.975),
                })
            })
            .collect()
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub(crate) fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

const INIT_ATTEMPTS: u32 = 30;

/// Data-informed overdispersed start for the early attempts; prior-center
/// fallbacks afterwards so tight custom priors still find support.
fn starting_point<R: Rng + ?Sized>(
    data: &PanelData,
    priors: &PriorSpec,
    attempt: u32,
    rng: &mut R,
) -> ParameterVector {
    let m = data.n_covariates();
    if attempt < INIT_ATTEMPTS / 2 {
        let vals: Vec<f64> = data
            .observations()
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        let mean_d = if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let var_d = if vals.len() < 2 {
            1.0
        } else {
            let n = vals.len() as f64;
            (vals.iter().map(|v| (v - mean_d) * (v - mean_d)).sum::<f64>() / (n - 1.0)).max(0.5)
        };
        let normal = |rng: &mut R| -> f64 { rng.sample(rand_distr::StandardNormal) };
        ParameterVector {
            b: rng.random_range(-0.5..0.5),
            omega: var_d * (0.7 * normal(rng)).exp(),
            alpha: rng.random_range(0.01..0.4),
            lambda: 1.0 + 0.7 * normal(rng),
            psi: (0.7 * normal(rng)).exp(),
            m_tau: 0.05 * normal(rng),
            beta0: mean_d + 0.5 * var_d.sqrt() * normal(rng),
            beta: (0..m).map(|_| 0.2 * normal(rng)).collect(),
            theta: rng.random_range(0.15..1.35),
            phi: match &priors.phi {
                Some(_) => rng.random_range(0.3..1.5),
                None => 0.5,
            },
        }
    } else {
        let wiggle = |p: &Prior, rng: &mut R| -> f64 {
            let c = p.center();
            c + 0.01 * (1.0 + c.abs()) * rng.random_range(-1.0..1.0)
        };
        ParameterVector {
            b: wiggle(&priors.b, rng),
            omega: wiggle(&priors.omega, rng).abs().max(1e-3),
            alpha: wiggle(&priors.alpha, rng).clamp(0.0, 0.95),
            lambda: wiggle(&priors.lambda, rng),
            psi: wiggle(&priors.psi, rng).abs().max(1e-3),
            m_tau: wiggle(&priors.m_tau, rng),
            beta0: wiggle(&priors.beta0, rng),
            beta: (0..m).map(|_| wiggle(&priors.beta, rng)).collect(),
            theta: wiggle(&priors.theta, rng),
            phi: match &priors.phi {
                Some(p) => wiggle(p, rng),
                None => 0.5,
            },
        }
    }
}

/// Initial augmented panel: observed cells as recorded, censored and
/// missing cells at the censoring limit.
fn initial_augmented(data: &PanelData) -> DMatrix<f64> {
    let mut y = data.observations().clone();
    y.iter_mut().for_each(|v| {
        if !v.is_finite() {
            *v = 0.0;
        }
    });
    y
}

fn init_state<R: Rng + ?Sized>(
    data: &PanelData,
    priors: &PriorSpec,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<SweepState> {
    let y0 = initial_augmented(data);
    for attempt in 0..INIT_ATTEMPTS {
        let z = starting_point(data, priors, attempt, rng);
        if z.validate().is_err() || !log_prior(&z, priors).is_finite() {
            continue;
        }
        let Ok(lat) = LatentState::from_augmented(&z, data, y0.clone()) else {
            continue;
        };
        match SweepState::new(z, lat, priors, data, &cfg.initial_scales) {
            Ok(state) if state.log_posterior().is_finite() => return Ok(state),
            _ => continue,
        }
    }
    Err(Error::NoFiniteStart {
        attempts: INIT_ATTEMPTS,
    })
}

/// Run a single chain on its own random stream.
fn run_chain_stream(
    data: &PanelData,
    priors: &PriorSpec,
    cfg: &ChainConfig,
    stream: u64,
) -> Result<ChainArchive> {
    cfg.validate()?;
    if data.t_len() == 0 || data.n_stations() == 0 {
        return Err(Error::Data("cannot fit an empty panel".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let mut state = init_state(data, priors, cfg, &mut rng)?;
    let mut accepted = [0usize; N_BLOCKS];
    let retained = cfg.retained();
    let mut draws = Vec::with_capacity(retained);
    let mut log_posterior = Vec::with_capacity(retained);
    let mut latent_panels = Vec::new();
    let (t_len, n) = (data.t_len(), data.n_stations());
    let mut lat_mean = DMatrix::<f64>::zeros(t_len, n);
    let mut lat_m2 = DMatrix::<f64>::zeros(t_len, n);
    let mut kept = 0u64;

    for s in 1..=cfg.iterations {
        let flags = sweep::sweep_once(&mut state, data, priors, &mut rng)?;
        if s <= cfg.burn_in {
            if cfg.adapt {
                state.observe_for_adaptation(cfg.adapt_window);
                for (k, &f) in flags.iter().enumerate() {
                    state.adapt_scale(k, f, s);
                }
            }
            continue;
        }
        for (k, &f) in flags.iter().enumerate() {
            if f {
                accepted[k] += 1;
            }
        }
        if (s - cfg.burn_in) % cfg.thin == 0 {
            draws.push(state.z.clone());
            log_posterior.push(state.log_posterior());
            kept += 1;
            for t in 0..t_len {
                for i in 0..n {
                    let x = state.lat.y[(t, i)];
                    let d = x - lat_mean[(t, i)];
                    lat_mean[(t, i)] += d / kept as f64;
                    lat_m2[(t, i)] += d * (x - lat_mean[(t, i)]);
                }
            }
            if cfg.keep_latents {
                latent_panels.push(state.lat.y.clone());
            }
        }
    }

    let post_sweeps = (cfg.iterations - cfg.burn_in) as f64;
    let latent_sd = lat_m2.map(|m2| {
        if kept > 1 {
            (m2 / (kept - 1) as f64).sqrt()
        } else {
            0.0
        }
    });
    Ok(ChainArchive {
        draws,
        log_posterior,
        acceptance: accepted.iter().map(|a| *a as f64 / post_sweeps).collect(),
        latent_panels,
        latent_mean: lat_mean,
        latent_sd,
    })
}

/// Single-chain fit on stream 0.
pub fn run_chain(
    data: &PanelData,
    priors: &PriorSpec,
    cfg: &ChainConfig,
) -> Result<PosteriorArchive> {
    let chain = run_chain_stream(data, priors, cfg, 0)?;
    Ok(PosteriorArchive {
        chains: vec![chain],
        names: parameter_names(data.n_covariates(), priors.free_phi()),
    })
}

/// Fit `cfg.n_chains` chains on distinct random streams, concurrently up
/// to `max_concurrent` at a time, and merge the archives in chain order.
pub fn run_parallel_chains(
    data: &PanelData,
    priors: &PriorSpec,
    cfg: &ChainConfig,
) -> Result<PosteriorArchive> {
    cfg.validate()?;
    let limit = if cfg.max_concurrent == 0 {
        cfg.n_chains
    } else {
        cfg.max_concurrent
    };
    let mut results: Vec<Option<Result<ChainArchive>>> = (0..cfg.n_chains).map(|_| None).collect();
    let ids: Vec<usize> = (0..cfg.n_chains).collect();
    for batch in ids.chunks(limit.max(1)) {
        let mut outcomes = Vec::with_capacity(batch.len());
        std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|&i| scope.spawn(move || (i, run_chain_stream(data, priors, cfg, i as u64))))
                .collect();
            for h in handles {
                outcomes.push(h.join().expect("chain thread panicked"));
            }
        });
        for (i, r) in outcomes {
            results[i] = Some(r);
        }
    }

    let mut chains = Vec::with_capacity(cfg.n_chains);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r.expect("every chain scheduled") {
            Ok(c) => chains.push(c),
            Err(e) => failures.push(format!("chain {i}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(Error::NoConvergence(failures.join("; ")));
    }
    Ok(PosteriorArchive {
        chains,
        names: parameter_names(data.n_covariates(), priors.free_phi()),
    })
}

/// Gelman–Rubin potential scale reduction for one named component.
///
/// Classic two-part estimator: V̂ = (n−1)/n·W + (1 + 1/m)·B/n, R̂ = √(V̂/W),
/// clamped below at 1 (identical chains give √((n−1)/n) < 1 otherwise).
pub fn gelman_rubin_rhat(archive: &PosteriorArchive, name: &str) -> Result<f64> {
    let series = archive.component_series(name)?;
    let m = series.len();
    if m < 2 {
        return Err(Error::Domain(
            "R̂ needs at least two chains".into(),
        ));
    }
    let n = series.iter().map(Vec::len).min().unwrap_or(0);
    if n < 10 {
        return Err(Error::Domain(format!(
            "R̂ needs at least 10 retained draws per chain, found {n}"
        )));
    }
    let nf = n as f64;
    let means: Vec<f64> = series
        .iter()
        .map(|c| c[..n].iter().sum::<f64>() / nf)
        .collect();
    let within: f64 = series
        .iter()
        .zip(&means)
        .map(|(c, mu)| c[..n].iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n = means
        .iter()
        .map(|mu| (mu - grand) * (mu - grand))
        .sum::<f64>()
        / (m as f64 - 1.0);
    if within <= 0.0 {
        // constant identical chains: no variance anywhere
        return Ok(1.0);
    }
    let v_hat = (nf - 1.0) / nf * within + (1.0 + 1.0 / m as f64) * b_over_n;
    Ok((v_hat / within).sqrt().max(1.0))
}
