//! Run artifacts: the manifest that makes every run reproducible, the
//! posterior archive written by `fit` and read back by the prediction
//! commands, and the flat CSV emitters for derived products.
//!
//! Nothing here carries a timestamp or hostname: two runs from the same
//! resolved config and seed must produce byte-identical files, and the
//! manifest embeds that resolved config so any artifact can be
//! regenerated from its manifest alone.

use crate::error::{Error, Result};
use crate::inference::{gelman_rubin_rhat, parameter_by_name, ChainArchive, PosteriorArchive};
use crate::io::config::RunConfig;
use crate::model::ParameterVector;
use crate::prediction::PredictiveEnsemble;
use crate::risk::VariogramEstimate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ARCHIVE_FILE: &str = "archive.csv";
pub const LATENTS_FILE: &str = "latents.csv";
pub const SUMMARIES_FILE: &str = "summaries.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub format: u32,
    pub command: String,
    /// Effective seed (CLI override already applied; equals config.seed).
    pub seed: u64,
    /// SHA-256 of the canonical (re-serialized) config JSON.
    pub config_sha256: String,
    /// The resolved configuration this run actually used.
    pub config: RunConfig,
    /// SHA-256 per input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 per output file, keyed by file name within the run dir.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot hash {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub fn config_digest(config: &RunConfig) -> Result<String> {
    let canon = serde_json::to_string(config)
        .map_err(|e| Error::Config(format!("config serialization: {e}")))?;
    Ok(sha256_hex(canon.as_bytes()))
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Result<Self> {
        Ok(Manifest {
            tool: "ghst".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            format: 1,
            command: command.into(),
            seed: config.seed,
            config_sha256: config_digest(config)?,
            config: config.clone(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Hash an already-written artifact in the run directory.
    pub fn record_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.outputs
            .insert(name.to_string(), sha256_file(&dir.join(name))?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text + "\n")
            .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(file))
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// archive.csv: one row per retained draw, all components by name plus a
/// phi column even when phi is fixed (prediction needs it either way).
pub fn write_archive(dir: &Path, archive: &PosteriorArchive) -> Result<()> {
    let mut names = archive.names.clone();
    if !names.iter().any(|n| n == "phi") {
        names.push("phi".into());
    }
    let path = dir.join(ARCHIVE_FILE);
    let mut w = create(&path)?;
    writeln!(w, "chain,draw,{},log_posterior", names.join(","))?;
    for (c, chain) in archive.chains.iter().enumerate() {
        for (d, z) in chain.draws.iter().enumerate() {
            let mut row = format!("{c},{d}");
            for name in &names {
                let v = parameter_by_name(z, name).ok_or_else(|| {
                    Error::Domain(format!("unknown parameter name {name:?}"))
                })?;
                row.push(',');
                row.push_str(&fmt(v));
            }
            writeln!(w, "{row},{}", fmt(chain.log_posterior[d]))?;
        }
    }
    Ok(w.flush()?)
}

/// latents.csv: augmented panels, one row per (chain, draw, time step).
pub fn write_latents(dir: &Path, archive: &PosteriorArchive, station_ids: &[String]) -> Result<()> {
    let path = dir.join(LATENTS_FILE);
    let mut w = create(&path)?;
    writeln!(w, "chain,draw,t,{}", station_ids.join(","))?;
    for (c, chain) in archive.chains.iter().enumerate() {
        for (d, panel) in chain.latent_panels.iter().enumerate() {
            for t in 0..panel.nrows() {
                let mut row = format!("{c},{d},{t}");
                for i in 0..panel.ncols() {
                    row.push(',');
                    row.push_str(&fmt(panel[(t, i)]));
                }
                writeln!(w, "{row}")?;
            }
        }
    }
    Ok(w.flush()?)
}

/// summaries.csv: pooled posterior summaries plus split-chain R̂ (empty
/// when only one chain was run). Regression coefficients are sampled on
/// the standardized covariate scale; when the transform is supplied the
/// raw-scale versions are appended as extra `*_raw` rows (β_k/sd_k, and
/// the intercept shifted back by Σ β_k·mean_k/sd_k). R̂ is left empty on
/// those rows — convergence is diagnosed in the sampled parameterization.
pub fn write_summaries(
    dir: &Path,
    archive: &PosteriorArchive,
    scales: &[crate::io::files::CovariateScale],
) -> Result<()> {
    let path = dir.join(SUMMARIES_FILE);
    let mut w = create(&path)?;
    writeln!(w, "name,mean,sd,q2_5,median,q97_5,rhat")?;
    for s in archive.summaries()? {
        let rhat = if archive.n_chains() >= 2 {
            fmt(gelman_rubin_rhat(archive, &s.name)?)
        } else {
            String::new()
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{rhat}",
            s.name,
            fmt(s.mean),
            fmt(s.sd),
            fmt(s.q2_5),
            fmt(s.median),
            fmt(s.q97_5)
        )?;
    }
    if !scales.is_empty() {
        let pooled: Vec<&ParameterVector> =
            archive.chains.iter().flat_map(|c| c.draws.iter()).collect();
        let mut raw_rows: Vec<(String, Vec<f64>)> = Vec::with_capacity(scales.len() + 1);
        raw_rows.push((
            "beta0_raw".into(),
            pooled
                .iter()
                .map(|z| {
                    z.beta0
                        - z.beta
                            .iter()
                            .zip(scales)
                            .map(|(bk, s)| bk * s.mean / s.sd)
                            .sum::<f64>()
                })
                .collect(),
        ));
        for (k, s) in scales.iter().enumerate() {
            raw_rows.push((
                format!("beta{}_raw", k + 1),
                pooled.iter().map(|z| z.beta[k] / s.sd).collect(),
            ));
        }
        for (name, mut vals) in raw_rows {
            vals.sort_by(|a, b| a.total_cmp(b));
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
            writeln!(
                w,
                "{name},{},{},{},{},{},",
                fmt(mean),
                fmt(var.sqrt()),
                fmt(crate::inference::sorted_quantile(&vals, 0.025)),
                fmt(crate::inference::sorted_quantile(&vals, 0.5)),
                fmt(crate::inference::sorted_quantile(&vals, 0.975))
            )?;
        }
    }
    Ok(w.flush()?)
}

#[derive(Serialize, Deserialize)]
struct Diagnostics {
    /// Post-burn-in acceptance rate per proposal block, per chain.
    acceptance: Vec<Vec<f64>>,
    retained_per_chain: usize,
}

pub fn write_diagnostics(dir: &Path, archive: &PosteriorArchive) -> Result<()> {
    let diag = Diagnostics {
        acceptance: archive.chains.iter().map(|c| c.acceptance.clone()).collect(),
        retained_per_chain: archive.retained_per_chain(),
    };
    let text = serde_json::to_string_pretty(&diag)
        .map_err(|e| Error::Data(format!("diagnostics serialization: {e}")))?;
    std::fs::write(dir.join(DIAGNOSTICS_FILE), text + "\n")?;
    Ok(())
}

/// Reload a fit written by `write_archive`/`write_latents`. The manifest
/// in the same directory supplies the resolved config (and thus the
/// component names); draws come back bit-exact thanks to shortest-
/// roundtrip float formatting.
pub fn read_fit(dir: &Path) -> Result<(Manifest, PosteriorArchive)> {
    let manifest = Manifest::read(dir)?;
    let path = dir.join(ARCHIVE_FILE);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("chain")
        || header.get(1).map(String::as_str) != Some("draw")
        || header.last().map(String::as_str) != Some("log_posterior")
    {
        return Err(Error::Data(format!(
            "{}: not a posterior archive (bad header)",
            path.display()
        )));
    }
    let names: Vec<String> = header[2..header.len() - 1].to_vec();
    let n_beta = names.iter().filter(|n| n.starts_with("beta") && n.as_str() != "beta0").count();

    let mut chains: Vec<ChainArchive> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let parse = |idx: usize| -> Result<f64> {
            rec.get(idx)
                .ok_or_else(|| Error::Data(format!("{}: short row", path.display())))?
                .parse()
                .map_err(|_| Error::Data(format!("{}: bad number in archive", path.display())))
        };
        let chain = parse(0)? as usize;
        if chain > chains.len() {
            return Err(Error::Data(format!(
                "{}: chain indices must be contiguous",
                path.display()
            )));
        }
        if chain == chains.len() {
            chains.push(ChainArchive {
                draws: Vec::new(),
                log_posterior: Vec::new(),
                acceptance: Vec::new(),
                latent_panels: Vec::new(),
                latent_mean: DMatrix::zeros(0, 0),
                latent_sd: DMatrix::zeros(0, 0),
            });
        }
        let mut z = ParameterVector {
            b: 0.0,
            omega: 1.0,
            alpha: 0.0,
            lambda: 1.0,
            psi: 1.0,
            m_tau: 0.0,
            beta0: 0.0,
            beta: vec![0.0; n_beta],
            theta: 1.0,
            phi: 0.5,
        };
        for (k, name) in names.iter().enumerate() {
            let v = parse(2 + k)?;
            set_by_name(&mut z, name, v)?;
        }
        let lp = parse(2 + names.len())?;
        chains[chain].draws.push(z);
        chains[chain].log_posterior.push(lp);
    }
    if chains.is_empty() {
        return Err(Error::Data(format!("{}: archive has no draws", path.display())));
    }

    if let Ok(diag_text) = std::fs::read_to_string(dir.join(DIAGNOSTICS_FILE)) {
        if let Ok(diag) = serde_json::from_str::<Diagnostics>(&diag_text) {
            for (c, acc) in diag.acceptance.into_iter().enumerate() {
                if let Some(chain) = chains.get_mut(c) {
                    chain.acceptance = acc;
                }
            }
        }
    }

    let latents_path = dir.join(LATENTS_FILE);
    if latents_path.exists() {
        read_latents(&latents_path, &mut chains)?;
    }

    // Component names follow the stored config, not the widened CSV header.
    let free_phi = matches!(
        manifest.config.model.phi,
        crate::io::config::PhiChoice::Free
    );
    let archive = PosteriorArchive {
        chains,
        names: crate::inference::parameter_names(n_beta, free_phi),
    };
    Ok((manifest, archive))
}

fn set_by_name(z: &mut ParameterVector, name: &str, v: f64) -> Result<()> {
    match name {
        "b" => z.b = v,
        "omega" => z.omega = v,
        "alpha" => z.alpha = v,
        "lambda" => z.lambda = v,
        "psi" => z.psi = v,
        "m_tau" => z.m_tau = v,
        "beta0" => z.beta0 = v,
        "theta" => z.theta = v,
        "phi" => z.phi = v,
        _ => {
            let k: usize = name
                .strip_prefix("beta")
                .and_then(|s| s.parse().ok())
                .filter(|k| *k >= 1 && *k <= z.beta.len())
                .ok_or_else(|| Error::Data(format!("unknown archive column {name:?}")))?;
            z.beta[k - 1] = v;
        }
    }
    Ok(())
}

fn read_latents(path: &Path, chains: &mut [ChainArchive]) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let n = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .len()
        .saturating_sub(3);
    if n == 0 {
        return Err(Error::Data(format!("{}: no station columns", path.display())));
    }
    // Rows arrive grouped by (chain, draw) with t ascending; collect each
    // panel's rows then freeze the matrix when the key changes.
    let mut key: Option<(usize, usize)> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut flush = |key: Option<(usize, usize)>, rows: &mut Vec<Vec<f64>>| -> Result<()> {
        if let Some((c, d)) = key {
            let chain = chains
                .get_mut(c)
                .ok_or_else(|| Error::Data(format!("latents reference unknown chain {c}")))?;
            if d != chain.latent_panels.len() {
                return Err(Error::Data(format!(
                    "latents for chain {c} are out of order at draw {d}"
                )));
            }
            let t_len = rows.len();
            let mut panel = DMatrix::zeros(t_len, n);
            for (t, row) in rows.iter().enumerate() {
                for (i, v) in row.iter().enumerate() {
                    panel[(t, i)] = *v;
                }
            }
            chain.latent_panels.push(panel);
            rows.clear();
        }
        Ok(())
    };
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let parse = |idx: usize| -> Result<f64> {
            rec.get(idx)
                .ok_or_else(|| Error::Data(format!("{}: short row", path.display())))?
                .parse()
                .map_err(|_| Error::Data(format!("{}: bad number", path.display())))
        };
        let c = parse(0)? as usize;
        let d = parse(1)? as usize;
        if key != Some((c, d)) {
            flush(key, &mut rows)?;
            key = Some((c, d));
        }
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            row.push(parse(3 + i)?);
        }
        rows.push(row);
    }
    flush(key, &mut rows)?;
    for chain in chains.iter_mut() {
        if chain.latent_panels.is_empty() {
            continue;
        }
        let (t_len, n) = chain.latent_panels[0].shape();
        let k = chain.latent_panels.len() as f64;
        let mut mean = DMatrix::zeros(t_len, n);
        for p in &chain.latent_panels {
            mean += p;
        }
        mean /= k;
        let mut var = DMatrix::zeros(t_len, n);
        for p in &chain.latent_panels {
            let d = p - &mean;
            var += d.component_mul(&d);
        }
        var /= k;
        chain.latent_mean = mean;
        chain.latent_sd = var.map(f64::sqrt);
    }
    Ok(())
}

/// ensemble.csv: every simulated value, one row per (sim, site, time).
pub fn write_ensemble_draws(
    path: &Path,
    ens: &PredictiveEnsemble,
    dates: &[String],
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "sim,site_id,time,date,value")?;
    for (ti, t) in ens.times.iter().enumerate() {
        let block = &ens.draws[ti];
        for sim in 0..block.nrows() {
            for (s, id) in ens.site_ids.iter().enumerate() {
                writeln!(w, "{sim},{id},{t},{},{}", dates[ti], fmt(block[(sim, s)]))?;
            }
        }
    }
    Ok(w.flush()?)
}

/// summary.csv: predictive mean/sd and central 95% band per site × time.
pub fn write_ensemble_summary(
    path: &Path,
    ens: &PredictiveEnsemble,
    dates: &[String],
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "site_id,time,date,mean,sd,q2_5,q97_5")?;
    let summaries = ens.summaries();
    let date_of: BTreeMap<usize, &String> =
        ens.times.iter().copied().zip(dates.iter()).collect();
    for s in &summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.site,
            s.time,
            date_of.get(&s.time).map_or("", |d| d.as_str()),
            fmt(s.mean),
            fmt(s.sd),
            fmt(s.q2_5),
            fmt(s.q97_5)
        )?;
    }
    Ok(w.flush()?)
}

pub fn write_variogram(
    path: &Path,
    empirical: &VariogramEstimate,
    model: Option<&VariogramEstimate>,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "source,space_lo,space_hi,time_lag,semivariance,pairs")?;
    let mut dump = |label: &str, est: &VariogramEstimate| -> Result<()> {
        for c in &est.cells {
            writeln!(
                w,
                "{label},{},{},{},{},{}",
                fmt(c.space_lo),
                fmt(c.space_hi),
                c.time_lag,
                fmt(c.semivariance),
                c.pairs
            )?;
        }
        Ok(())
    };
    dump("empirical", empirical)?;
    if let Some(m) = model {
        dump("model", m)?;
    }
    w.flush()?;
    Ok(())
}

/// Resolve a path from the config against the config file's directory.
pub fn resolve_path(config_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_dir.join(p)
    }
}
