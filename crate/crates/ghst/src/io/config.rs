//! Run configuration: a single JSON document validated up front, with
//! unknown keys rejected everywhere so a typo cannot silently fall back
//! to a default.

use crate::error::{Error, Result};
use crate::inference::{ChainConfig, Prior, PriorSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub priors: PriorsBlock,
    #[serde(default)]
    pub mcmc: McmcBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictionBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variogram: Option<VariogramBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateBlock>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub stations: PathBuf,
    /// Optional for `simulate`, which writes rather than reads it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    /// Matérn smoothness: fixed at a value, or "free" to sample it.
    pub phi: PhiChoice,
    /// Covariate names to regress on; "ELE" draws station elevation.
    pub covariates: Vec<String>,
    pub aggregation: Aggregation,
    /// Inclusive modeled date range; defaults to the observation span.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub date_start: Option<chrono::NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub date_end: Option<chrono::NaiveDate>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            phi: PhiChoice::Fixed(0.5),
            covariates: Vec::new(),
            aggregation: Aggregation::Daily,
            date_start: None,
            date_end: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum PhiChoice {
    Free,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Daily,
    Weekly,
}

/// Prior overrides; anything omitted keeps the library default.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PriorsBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<PriorChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<PriorChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<PriorChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<PriorChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<PriorChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_tau: Option<PriorChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta0: Option<PriorChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<PriorChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<PriorChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<PriorChoice>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "snake_case")]
pub enum PriorChoice {
    Normal { mean: f64, variance: f64 },
    TruncatedNormal { mean: f64, variance: f64, lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl From<&PriorChoice> for Prior {
    fn from(c: &PriorChoice) -> Prior {
        match *c {
            PriorChoice::Normal { mean, variance } => Prior::Normal { mean, variance },
            PriorChoice::TruncatedNormal {
                mean,
                variance,
                lo,
                hi,
            } => Prior::TruncatedNormal {
                mean,
                variance,
                lo,
                hi,
            },
            PriorChoice::Uniform { lo, hi } => Prior::Uniform { lo, hi },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct McmcBlock {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub keep_latents: bool,
    pub adapt_window: usize,
    pub max_concurrent: usize,
}

impl Default for McmcBlock {
    fn default() -> Self {
        let c = ChainConfig::default();
        McmcBlock {
            iterations: c.iterations,
            burn_in: c.burn_in,
            thin: c.thin,
            n_chains: c.n_chains,
            keep_latents: c.keep_latents,
            adapt_window: c.adapt_window,
            max_concurrent: c.max_concurrent,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PredictionBlock {
    /// Directory holding a completed fit (archive + latents + manifest).
    pub fit_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<SiteSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub n_sims: usize,
    /// Panel dates to record; defaults to the final record step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dates: Option<Vec<chrono::NaiveDate>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    pub id: String,
    pub longitude_deg: f64,
    pub latitude_deg: f64,
    #[serde(default)]
    pub elevation_m: f64,
}

/// Bounding box filled with `n_points` on a near-square lattice,
/// row-major from the south-west corner.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub n_points: usize,
    #[serde(default)]
    pub elevation_m: f64,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<SiteSpec>> {
        if self.n_points == 0 {
            return Err(Error::Config("grid needs n_points ≥ 1".into()));
        }
        if !(self.lon_min < self.lon_max && self.lat_min < self.lat_max) {
            return Err(Error::Config("grid bounding box is empty".into()));
        }
        let nx = (self.n_points as f64).sqrt().ceil() as usize;
        let ny = self.n_points.div_ceil(nx);
        let mut out = Vec::with_capacity(self.n_points);
        'rows: for iy in 0..ny {
            for ix in 0..nx {
                if out.len() == self.n_points {
                    break 'rows;
                }
                let fx = if nx == 1 { 0.5 } else { ix as f64 / (nx - 1) as f64 };
                let fy = if ny == 1 { 0.5 } else { iy as f64 / (ny - 1) as f64 };
                out.push(SiteSpec {
                    id: format!("grid_{:04}", out.len()),
                    longitude_deg: self.lon_min + fx * (self.lon_max - self.lon_min),
                    latitude_deg: self.lat_min + fy * (self.lat_max - self.lat_min),
                    elevation_m: self.elevation_m,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub params: ParamsSpec,
    pub t_len: usize,
    pub date_start: chrono::NaiveDate,
}

/// Generator parameters for `simulate`, mirroring the model vector.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub b: f64,
    pub omega: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub psi: f64,
    pub m_tau: f64,
    pub beta0: f64,
    #[serde(default)]
    pub beta: Vec<f64>,
    pub theta: f64,
    #[serde(default = "default_phi")]
    pub phi: f64,
}

fn default_phi() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RiskBlock {
    /// Return-curve levels (mm), strictly increasing.
    pub levels: Vec<f64>,
    /// Duration/count thresholds (mm).
    pub thresholds: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct VariogramBlock {
    pub space_edges: Vec<f64>,
    pub time_lags: Vec<usize>,
    /// When present, also compute the model variogram from this fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_dir: Option<PathBuf>,
    #[serde(default = "default_variogram_sims")]
    pub n_sims: usize,
}

fn default_variogram_sims() -> usize {
    200
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ValidateBlock {
    pub n_sims: usize,
    /// Stations to hold out; empty means every station in turn.
    #[serde(default)]
    pub stations: Vec<String>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rebase relative paths onto the config file's directory and make
    /// them absolute, so the config embedded in a manifest keeps working
    /// no matter where a rerun is launched from.
    fn resolve_paths(&mut self, dir: &Path) -> Result<()> {
        let absolutize = |p: &mut PathBuf| -> Result<()> {
            let joined = if p.is_absolute() { p.clone() } else { dir.join(&p) };
            *p = std::path::absolute(&joined)
                .map_err(|e| Error::Config(format!("cannot resolve {}: {e}", joined.display())))?;
            Ok(())
        };
        absolutize(&mut self.data.stations)?;
        if let Some(p) = self.data.observations.as_mut() {
            absolutize(p)?;
        }
        if let Some(p) = self.data.covariates.as_mut() {
            absolutize(p)?;
        }
        if let Some(b) = self.prediction.as_mut() {
            absolutize(&mut b.fit_dir)?;
        }
        if let Some(b) = self.variogram.as_mut() {
            if let Some(p) = b.fit_dir.as_mut() {
                absolutize(p)?;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if let PhiChoice::Fixed(v) = self.model.phi {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("fixed phi must be positive, got {v}")));
            }
        }
        if let (Some(a), Some(b)) = (self.model.date_start, self.model.date_end) {
            if a > b {
                return Err(Error::Config(format!("date_start {a} after date_end {b}")));
            }
        }
        let m = &self.mcmc;
        if m.iterations == 0 || m.thin == 0 || m.n_chains == 0 {
            return Err(Error::Config(
                "mcmc iterations, thin, and n_chains must be positive".into(),
            ));
        }
        if m.burn_in >= m.iterations {
            return Err(Error::Config(format!(
                "burn_in {} must be below iterations {}",
                m.burn_in, m.iterations
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &self.model.covariates {
            if !seen.insert(name.clone()) {
                return Err(Error::Config(format!("covariate {name} selected twice")));
            }
        }
        if let Some(p) = &self.prediction {
            // sites/grid are spatial-only; forecast uses neither.
            if p.sites.is_some() && p.grid.is_some() {
                return Err(Error::Config(
                    "prediction takes sites or a grid, not both".into(),
                ));
            }
            if let Some(sites) = &p.sites {
                if sites.is_empty() {
                    return Err(Error::Config("prediction sites list is empty".into()));
                }
            }
            if let Some(g) = &p.grid {
                g.points()?;
            }
        }
        if let Some(r) = &self.risk {
            if r.levels.is_empty() || !r.levels.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Config(
                    "risk levels must be nonempty and strictly increasing".into(),
                ));
            }
        }
        if let Some(s) = &self.simulate {
            if s.t_len == 0 {
                return Err(Error::Config("simulate t_len must be positive".into()));
            }
        }
        Ok(())
    }

    /// Composite prior spec: defaults overlaid with the config block.
    pub fn prior_spec(&self) -> PriorSpec {
        let mut spec = if matches!(self.model.phi, PhiChoice::Free) {
            PriorSpec::default().with_free_phi()
        } else {
            PriorSpec::default()
        };
        let p = &self.priors;
        if let Some(c) = &p.b {
            spec.b = c.into();
        }
        if let Some(c) = &p.omega {
            spec.omega = c.into();
        }
        if let Some(c) = &p.alpha {
            spec.alpha = c.into();
        }
        if let Some(c) = &p.lambda {
            spec.lambda = c.into();
        }
        if let Some(c) = &p.psi {
            spec.psi = c.into();
        }
        if let Some(c) = &p.m_tau {
            spec.m_tau = c.into();
        }
        if let Some(c) = &p.beta0 {
            spec.beta0 = c.into();
        }
        if let Some(c) = &p.beta {
            spec.beta = c.into();
        }
        if let Some(c) = &p.theta {
            spec.theta = c.into();
        }
        if let Some(c) = &p.phi {
            spec.phi = Some(c.into());
        }
        spec
    }

    /// Chain configuration with the CLI-level overrides applied.
    pub fn chain_config(&self, seed_override: Option<u64>, threads: Option<usize>) -> ChainConfig {
        let m = &self.mcmc;
        ChainConfig {
            iterations: m.iterations,
            burn_in: m.burn_in,
            thin: m.thin,
            n_chains: m.n_chains,
            seed: seed_override.unwrap_or(self.seed),
            keep_latents: m.keep_latents,
            adapt_window: m.adapt_window,
            max_concurrent: threads.unwrap_or(m.max_concurrent),
            ..ChainConfig::default()
        }
    }
}

impl From<&ParamsSpec> for crate::model::ParameterVector {
    fn from(s: &ParamsSpec) -> Self {
        crate::model::ParameterVector {
            b: s.b,
            omega: s.omega,
            alpha: s.alpha,
            lambda: s.lambda,
            psi: s.psi,
            m_tau: s.m_tau,
            beta0: s.beta0,
            beta: s.beta.clone(),
            theta: s.theta,
            phi: s.phi,
        }
    }
}
