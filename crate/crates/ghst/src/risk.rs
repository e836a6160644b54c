//! Risk products on precipitation series and predictive ensembles:
//! binomial event probabilities, empirical return-period curves, spell
//! durations, threshold counts, spatio-temporal variograms, and Q-Q
//! validation pairs.
//!
//! Threshold conventions, fixed here once: "over" is strictly greater,
//! "below" is ≤, and "zero" is exact equality with 0 on the precipitation
//! scale. Missing values never satisfy a predicate and break spells.

use crate::error::{Error, Result};
use crate::inference::{sorted_quantile, PosteriorArchive};
use crate::model::{simulate_panel_with_rng, PanelData};
use crate::prediction::PredictiveEnsemble;
use crate::special::ln_gamma;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Over,
    Below,
}

/// Threshold predicate on one value; `None` for missing.
fn satisfies(v: f64, threshold: f64, direction: Direction) -> Option<bool> {
    if v.is_nan() {
        return None;
    }
    Some(match direction {
        Direction::Over => v > threshold,
        Direction::Below => v <= threshold,
    })
}

/// P(exactly r of n independent events), each of probability p, through
/// log-gamma so that n in the thousands stays exact to rounding.
pub fn event_probability(p: f64, n: u64, r: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::Domain("event count n must be positive".into()));
    }
    if r > n {
        return Err(Error::Domain(format!("r = {r} exceeds n = {n}")));
    }
    // degenerate edges avoid ln(0)
    if p == 0.0 {
        return Ok(if r == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if r == n { 1.0 } else { 0.0 });
    }
    let (nf, rf) = (n as f64, r as f64);
    let ln_choose = ln_gamma(nf + 1.0) - ln_gamma(rf + 1.0) - ln_gamma(nf - rf + 1.0);
    Ok((ln_choose + rf * p.ln() + (nf - rf) * (1.0 - p).ln()).exp())
}

/// Empirical return periods: 1 / (exceedance fraction), with levels no
/// observation exceeds reported as absent.
#[derive(Clone, Debug)]
pub struct ReturnCurve {
    pub levels: Vec<f64>,
    /// Return interval per level; `None` where the period is infinite.
    pub periods: Vec<Option<f64>>,
    /// Pointwise 2.5% / 97.5% bands, present in ensemble mode.
    pub lower: Option<Vec<Option<f64>>>,
    pub upper: Option<Vec<Option<f64>>>,
}

fn empirical_periods(series: &[f64], levels: &[f64]) -> Vec<f64> {
    let n = series.iter().filter(|v| !v.is_nan()).count();
    levels
        .iter()
        .map(|&x| {
            let exceed = series.iter().filter(|v| !v.is_nan() && **v > x).count();
            if exceed == 0 {
                f64::INFINITY
            } else {
                n as f64 / exceed as f64
            }
        })
        .collect()
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Return-period curve of one observed series.
pub fn return_period_curve(series: &[f64], levels: &[f64]) -> Result<ReturnCurve> {
    validate_levels(levels)?;
    if !series.iter().any(|v| !v.is_nan()) {
        return Err(Error::Domain("no observed values in the series".into()));
    }
    let periods = empirical_periods(series, levels);
    Ok(ReturnCurve {
        levels: levels.to_vec(),
        periods: periods.into_iter().map(finite_or_none).collect(),
        lower: None,
        upper: None,
    })
}

/// Return-period curve of an ensemble: per-simulation curves reduced to
/// the pointwise median with a central 95% band. Infinite per-simulation
/// periods order above every finite one, so a mostly-dry level reports an
/// absent median rather than a fabricated number.
pub fn ensemble_return_curve(
    ensemble: &PredictiveEnsemble,
    site: &str,
    levels: &[f64],
) -> Result<ReturnCurve> {
    validate_levels(levels)?;
    let j = site_index(ensemble, site)?;
    if ensemble.n_sims() == 0 {
        return Err(Error::Domain("empty ensemble".into()));
    }
    let n_sims = ensemble.n_sims();
    let mut per_level: Vec<Vec<f64>> = vec![Vec::with_capacity(n_sims); levels.len()];
    let mut series = Vec::with_capacity(ensemble.times.len());
    for sim in 0..n_sims {
        series.clear();
        series.extend(ensemble.draws.iter().map(|m| m[(sim, j)]));
        for (k, p) in empirical_periods(&series, levels).into_iter().enumerate() {
            per_level[k].push(p);
        }
    }
    let mut med = Vec::with_capacity(levels.len());
    let mut lo = Vec::with_capacity(levels.len());
    let mut hi = Vec::with_capacity(levels.len());
    for ps in &mut per_level {
        ps.sort_by(|a, b| a.total_cmp(b));
        med.push(finite_or_none(sorted_quantile(ps, 0.5)));
        lo.push(finite_or_none(sorted_quantile(ps, 0.025)));
        hi.push(finite_or_none(sorted_quantile(ps, 0.975)));
    }
    Ok(ReturnCurve {
        levels: levels.to_vec(),
        periods: med,
        lower: Some(lo),
        upper: Some(hi),
    })
}

fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Domain("no levels given".into()));
    }
    if levels.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite level".into()));
    }
    if !levels.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Domain("levels must be strictly increasing".into()));
    }
    Ok(())
}

fn site_index(ensemble: &PredictiveEnsemble, site: &str) -> Result<usize> {
    ensemble
        .site_ids
        .iter()
        .position(|s| s == site)
        .ok_or_else(|| Error::Domain(format!("site {site} not in the ensemble")))
}

/// Maximal-run statistics over or below a threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct DurationSummary {
    pub threshold: f64,
    pub direction: Direction,
    /// Mean spell length; absent when no spell occurs.
    pub mean_length: Option<f64>,
    pub spell_count: usize,
}

pub fn duration_stats(series: &[f64], threshold: f64, direction: Direction) -> DurationSummary {
    let mut count = 0usize;
    let mut total = 0usize;
    let mut run = 0usize;
    for &v in series {
        if satisfies(v, threshold, direction) == Some(true) {
            run += 1;
        } else if run > 0 {
            count += 1;
            total += run;
            run = 0;
        }
    }
    if run > 0 {
        count += 1;
        total += run;
    }
    DurationSummary {
        threshold,
        direction,
        mean_length: (count > 0).then(|| total as f64 / count as f64),
        spell_count: count,
    }
}

/// Number of entries satisfying the predicate; missing entries never count.
pub fn count_over_threshold(series: &[f64], threshold: f64, direction: Direction) -> usize {
    series
        .iter()
        .filter(|v| satisfies(**v, threshold, direction) == Some(true))
        .count()
}

/// Number of exact zeros — dry units on the precipitation scale.
pub fn count_zero(series: &[f64]) -> usize {
    series.iter().filter(|v| **v == 0.0).count()
}

/// One (space bin, time lag) cell of a variogram estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct VariogramCell {
    /// Half-open spatial bin [lo, hi) in degrees; the first bin also
    /// captures exact-zero distance.
    pub space_lo: f64,
    pub space_hi: f64,
    pub time_lag: usize,
    pub semivariance: f64,
    pub pairs: usize,
}

/// Binned semivariances ½·E[(Z(s,t) − Z(s′,t′))²]; empty cells omitted.
#[derive(Clone, Debug)]
pub struct VariogramEstimate {
    pub cells: Vec<VariogramCell>,
}

impl VariogramEstimate {
    pub fn cell(&self, space_bin: usize, edges: &[f64], time_lag: usize) -> Option<&VariogramCell> {
        let (lo, hi) = (edges[space_bin], edges[space_bin + 1]);
        self.cells
            .iter()
            .find(|c| c.space_lo == lo && c.space_hi == hi && c.time_lag == time_lag)
    }
}

/// Empirical spatio-temporal variogram of a T × N panel with pairwise
/// deletion of missing entries. Same-station pairs populate the
/// zero-distance bin, which is what exposes the temporal structure at
/// distance ≈ 0; the (0 space, 0 time) cell is identically zero.
pub fn empirical_st_variogram(
    distances: &DMatrix<f64>,
    panel: &DMatrix<f64>,
    space_edges: &[f64],
    time_lags: &[usize],
) -> Result<VariogramEstimate> {
    let n = distances.nrows();
    let t_len = panel.nrows();
    if panel.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: panel.ncols(),
        });
    }
    if n < 2 || t_len < 2 {
        return Err(Error::Domain(
            "variogram needs at least 2 stations and 2 time steps".into(),
        ));
    }
    if space_edges.len() < 2 || !space_edges.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Domain(
            "space bin edges must be strictly increasing with ≥ 2 entries".into(),
        ));
    }
    if time_lags.is_empty() || !time_lags.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Domain(
            "time lags must be strictly increasing and nonempty".into(),
        ));
    }

    let n_bins = space_edges.len() - 1;
    let bin_of = |d: f64| -> Option<usize> {
        if d < space_edges[0] {
            return None;
        }
        (0..n_bins).find(|&k| d < space_edges[k + 1] || (k == n_bins - 1 && d == space_edges[k + 1]))
    };
    // station-pair bins are reused across the whole record
    let mut pair_bin = vec![None; n * n];
    for i in 0..n {
        for j in 0..n {
            pair_bin[i * n + j] = bin_of(distances[(i, j)]);
        }
    }

    let mut acc = vec![(0.0f64, 0usize); n_bins * time_lags.len()];
    for (li, &lag) in time_lags.iter().enumerate() {
        if lag >= t_len {
            continue;
        }
        for t in 0..t_len - lag {
            for i in 0..n {
                let a = panel[(t, i)];
                if a.is_nan() {
                    continue;
                }
                for j in 0..n {
                    // unordered pairs once; same station allowed across lags
                    if lag == 0 && j < i {
                        continue;
                    }
                    if lag == 0 && i == j && t > 0 {
                        // one degenerate self-pair is enough for the cell
                        continue;
                    }
                    let Some(bin) = pair_bin[i * n + j] else {
                        continue;
                    };
                    let b = panel[(t + lag, j)];
                    if b.is_nan() {
                        continue;
                    }
                    let d = a - b;
                    let slot = &mut acc[bin * time_lags.len() + li];
                    slot.0 += 0.5 * d * d;
                    slot.1 += 1;
                }
            }
        }
    }

    let mut cells = Vec::new();
    for bin in 0..n_bins {
        for (li, &lag) in time_lags.iter().enumerate() {
            let (sum, pairs) = acc[bin * time_lags.len() + li];
            if pairs == 0 {
                continue;
            }
            cells.push(VariogramCell {
                space_lo: space_edges[bin],
                space_hi: space_edges[bin + 1],
                time_lag: lag,
                semivariance: sum / pairs as f64,
                pairs,
            });
        }
    }
    Ok(VariogramEstimate { cells })
}

/// Model variogram: `empirical_st_variogram` averaged over posterior-
/// predictive panels, one panel per retained-draw sample. Simulation s
/// uses the stream `seed`/(s+1), so the estimate is deterministic in
/// (archive, geometry, n_sims, seed).
pub fn model_variogram(
    archive: &PosteriorArchive,
    data: &PanelData,
    space_edges: &[f64],
    time_lags: &[usize],
    n_sims: usize,
    seed: u64,
) -> Result<VariogramEstimate> {
    let draws: Vec<_> = archive.chains.iter().flat_map(|c| &c.draws).collect();
    if draws.is_empty() {
        return Err(Error::Domain("empty posterior archive".into()));
    }
    if n_sims == 0 {
        return Err(Error::Domain("n_sims must be positive".into()));
    }
    let mut selector = ChaCha20Rng::seed_from_u64(seed);
    let mut pooled: std::collections::BTreeMap<(u64, u64, usize), (f64, usize)> =
        std::collections::BTreeMap::new();
    for sim in 0..n_sims {
        let z = draws[rand::Rng::random_range(&mut selector, 0..draws.len())];
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(sim as u64 + 1);
        let (sim_data, _) = simulate_panel_with_rng(
            z,
            data.stations(),
            data.covariates(),
            data.t_len(),
            &mut rng,
        )?;
        let est = empirical_st_variogram(
            data.distances(),
            sim_data.observations(),
            space_edges,
            time_lags,
        )?;
        for c in est.cells {
            let key = (c.space_lo.to_bits(), c.space_hi.to_bits(), c.time_lag);
            let slot = pooled.entry(key).or_insert((0.0, 0));
            slot.0 += c.semivariance * c.pairs as f64;
            slot.1 += c.pairs;
        }
    }
    let cells = pooled
        .into_iter()
        .map(|((lo, hi, lag), (sum, pairs))| VariogramCell {
            space_lo: f64::from_bits(lo),
            space_hi: f64::from_bits(hi),
            time_lag: lag,
            semivariance: sum / pairs as f64,
            pairs,
        })
        .collect();
    Ok(VariogramEstimate { cells })
}

/// Matched quantiles for Q-Q validation: observed quantiles against the
/// across-draw mean of each simulation's quantile, on a fixed probability
/// grid.
#[derive(Clone, Debug, PartialEq)]
pub struct QqPair {
    pub prob: f64,
    pub observed: f64,
    pub simulated: f64,
}

/// The 1%–99% grid used by the validation plots.
pub fn default_prob_grid() -> Vec<f64> {
    (1..100).map(|k| k as f64 / 100.0).collect()
}

pub fn qq_pairs(
    observed: &[f64],
    ensemble: &PredictiveEnsemble,
    site: &str,
    probs: &[f64],
) -> Result<Vec<QqPair>> {
    let j = site_index(ensemble, site)?;
    if ensemble.n_sims() == 0 {
        return Err(Error::Domain("empty ensemble".into()));
    }
    if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Domain("probability grid must lie in [0, 1]".into()));
    }
    let mut obs: Vec<f64> = observed.iter().copied().filter(|v| !v.is_nan()).collect();
    if obs.is_empty() {
        return Err(Error::Domain("no observed values".into()));
    }
    obs.sort_by(|a, b| a.total_cmp(b));

    let mut sim_q = vec![0.0f64; probs.len()];
    let mut series = Vec::with_capacity(ensemble.times.len());
    for sim in 0..ensemble.n_sims() {
        series.clear();
        series.extend(ensemble.draws.iter().map(|m| m[(sim, j)]));
        series.sort_by(|a, b| a.total_cmp(b));
        for (k, &p) in probs.iter().enumerate() {
            sim_q[k] += sorted_quantile(&series, p);
        }
    }
    Ok(probs
        .iter()
        .enumerate()
        .map(|(k, &p)| QqPair {
            prob: p,
            observed: sorted_quantile(&obs, p),
            simulated: sim_q[k] / ensemble.n_sims() as f64,
        })
        .collect())
}
