//! CSV ingestion and emission.
//!
//! Three input files: stations (id, coordinates, elevation), observations
//! (long format, one row per date × station, empty precipitation field for
//! missing — never 0, which means a dry day), and optional covariates
//! (long format, one row per date × index name). Ingest produces a dense
//! T×N panel over the modeled date range, with every selected covariate
//! standardized to zero mean and unit variance and the transform recorded
//! so later inputs (forecast steps, held-out sites) go through the same
//! map. Any malformed cell is reported with file, line, and column; gaps
//! and duplicates are errors, not warnings.
//!
//! Weekly aggregation sums precipitation over consecutive 7-day blocks
//! (a block with any missing day is missing) and averages covariates over
//! the same blocks; standardization happens after aggregation. Aggregation
//! is lossy, so the emit/ingest round trip is exact at daily resolution.

use crate::error::{Error, Result};
use crate::io::config::{Aggregation, ModelBlock, RunConfig};
use crate::model::PanelData;
use crate::spatial::StationSet;
use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;

pub const ELEVATION_COVARIATE: &str = "ELE";

/// Standardization applied to one covariate: x ↦ (x − mean) / sd.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CovariateScale {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

impl CovariateScale {
    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.sd
    }
}

/// Ingested model input: the dense panel plus everything needed to map
/// new raw inputs onto the fitted scale.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub panel: PanelData,
    /// Date of each panel row (block start dates under weekly aggregation).
    pub dates: Vec<NaiveDate>,
    pub covariate_names: Vec<String>,
    pub scales: Vec<CovariateScale>,
    /// Raw (pre-standardization) covariate series at panel resolution,
    /// kept for one-step-ahead lookups; ELE has no series here.
    pub raw_series: BTreeMap<String, BTreeMap<NaiveDate, f64>>,
    pub aggregation: Aggregation,
}

fn line_of(pos: Option<&csv::Position>) -> u64 {
    pos.map_or(0, |p| p.line())
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, want: &[&str]) -> Result<()> {
    let got = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let got: Vec<&str> = got.iter().collect();
    if got != want {
        return Err(Error::Data(format!(
            "{}: header must be {}, found {}",
            path.display(),
            want.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn field<'r>(path: &Path, rec: &'r csv::StringRecord, idx: usize, col: &str) -> Result<&'r str> {
    rec.get(idx).ok_or_else(|| {
        Error::Data(format!(
            "{}:{}: missing column {col}",
            path.display(),
            line_of(rec.position())
        ))
    })
}

fn parse_float(path: &Path, rec: &csv::StringRecord, idx: usize, col: &str) -> Result<f64> {
    let raw = field(path, rec, idx, col)?;
    let v: f64 = raw.parse().map_err(|_| {
        Error::Data(format!(
            "{}:{}: column {col}: invalid number {raw:?}",
            path.display(),
            line_of(rec.position())
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::Data(format!(
            "{}:{}: column {col}: non-finite value {raw:?}",
            path.display(),
            line_of(rec.position())
        )));
    }
    Ok(v)
}

fn parse_date(path: &Path, rec: &csv::StringRecord, idx: usize) -> Result<NaiveDate> {
    let raw = field(path, rec, idx, "date")?;
    raw.parse().map_err(|_| {
        Error::Data(format!(
            "{}:{}: column date: expected ISO-8601 (YYYY-MM-DD), found {raw:?}",
            path.display(),
            line_of(rec.position())
        ))
    })
}

/// stations.csv: station_id,longitude_deg,latitude_deg,elevation_m
pub fn read_stations(path: &Path) -> Result<StationSet> {
    let mut reader = open_reader(path)?;
    check_header(
        path,
        &mut reader,
        &["station_id", "longitude_deg", "latitude_deg", "elevation_m"],
    )?;
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    let mut elevation = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let id = field(path, &rec, 0, "station_id")?.to_string();
        if id.is_empty() {
            return Err(Error::Data(format!(
                "{}:{}: empty station_id",
                path.display(),
                line_of(rec.position())
            )));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Data(format!(
                "{}:{}: duplicate station_id {id:?}",
                path.display(),
                line_of(rec.position())
            )));
        }
        let lon = parse_float(path, &rec, 1, "longitude_deg")?;
        let lat = parse_float(path, &rec, 2, "latitude_deg")?;
        let elev = parse_float(path, &rec, 3, "elevation_m")?;
        ids.push(id);
        coords.push((lon, lat));
        elevation.push(elev);
    }
    if ids.is_empty() {
        return Err(Error::Data(format!("{}: no stations", path.display())));
    }
    StationSet::new(ids, coords, elevation)
}

/// Daily observation table keyed by (date, station index); NaN = missing.
struct DailyPanel {
    dates: Vec<NaiveDate>,
    values: DMatrix<f64>,
}

/// observations.csv: date,station_id,precip_mm (empty precip = missing).
fn read_observations(
    path: &Path,
    stations: &StationSet,
    model: &ModelBlock,
) -> Result<DailyPanel> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &["date", "station_id", "precip_mm"])?;
    let index: BTreeMap<&str, usize> = stations
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut cells: BTreeMap<(NaiveDate, usize), f64> = BTreeMap::new();
    let mut span: Option<(NaiveDate, NaiveDate)> = None;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let date = parse_date(path, &rec, 0)?;
        let id = field(path, &rec, 1, "station_id")?;
        let Some(&station) = index.get(id) else {
            return Err(Error::Data(format!(
                "{}:{}: unknown station_id {id:?}",
                path.display(),
                line_of(rec.position())
            )));
        };
        let raw = field(path, &rec, 2, "precip_mm")?;
        let value = if raw.is_empty() {
            f64::NAN
        } else {
            let v = parse_float(path, &rec, 2, "precip_mm")?;
            if v < 0.0 {
                return Err(Error::Data(format!(
                    "{}:{}: column precip_mm: negative precipitation {v}",
                    path.display(),
                    line_of(rec.position())
                )));
            }
            v
        };
        if in_range(date, model) {
            if cells.insert((date, station), value).is_some() {
                return Err(Error::Data(format!(
                    "{}:{}: duplicate row for {date} / station {id:?}",
                    path.display(),
                    line_of(rec.position())
                )));
            }
            span = Some(match span {
                None => (date, date),
                Some((lo, hi)) => (lo.min(date), hi.max(date)),
            });
        }
    }
    let Some((first, last)) = span else {
        return Err(Error::Data(format!(
            "{}: no observations in the modeled date range",
            path.display()
        )));
    };
    let start = model.date_start.unwrap_or(first);
    let end = model.date_end.unwrap_or(last);
    let dates = date_run(start, end);

    // Dense panel: every (date, station) pair must be present; missing
    // days are encoded explicitly as empty fields, never by omission.
    let mut gaps = Vec::new();
    for date in &dates {
        if (0..stations.len()).all(|i| !cells.contains_key(&(*date, i))) {
            gaps.push(*date);
        }
    }
    if !gaps.is_empty() {
        let head: Vec<String> = gaps.iter().take(5).map(|d| d.to_string()).collect();
        return Err(Error::Data(format!(
            "{}: {} date gap(s) in {start}..={end}, first: {}",
            path.display(),
            gaps.len(),
            head.join(", ")
        )));
    }
    let mut values = DMatrix::from_element(dates.len(), stations.len(), f64::NAN);
    for (t, date) in dates.iter().enumerate() {
        for i in 0..stations.len() {
            match cells.get(&(*date, i)) {
                Some(v) => values[(t, i)] = *v,
                None => {
                    return Err(Error::Data(format!(
                        "{}: no row for {date} / station {:?}; encode missing \
                         values as an empty precip_mm field",
                        path.display(),
                        stations.ids()[i]
                    )))
                }
            }
        }
    }
    Ok(DailyPanel { dates, values })
}

fn in_range(date: NaiveDate, model: &ModelBlock) -> bool {
    model.date_start.is_none_or(|s| date >= s) && model.date_end.is_none_or(|e| date <= e)
}

fn date_run(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = start;
    while d <= end {
        out.push(d);
        d = d + Days::new(1);
    }
    out
}

/// covariates.csv: date,name,value — long format, station-constant.
fn read_covariates(path: &Path) -> Result<BTreeMap<String, BTreeMap<NaiveDate, f64>>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &["date", "name", "value"])?;
    let mut series: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let date = parse_date(path, &rec, 0)?;
        let name = field(path, &rec, 1, "name")?.to_string();
        if name.is_empty() {
            return Err(Error::Data(format!(
                "{}:{}: empty covariate name",
                path.display(),
                line_of(rec.position())
            )));
        }
        let value = parse_float(path, &rec, 2, "value")?;
        if series.entry(name.clone()).or_default().insert(date, value).is_some() {
            return Err(Error::Data(format!(
                "{}:{}: duplicate row for {date} / {name}",
                path.display(),
                line_of(rec.position())
            )));
        }
    }
    Ok(series)
}

/// Sum 7-day blocks; a block with any missing day is missing. The trailing
/// partial block (fewer than 7 days) is dropped.
fn aggregate_weekly(daily: &DailyPanel) -> Result<DailyPanel> {
    let t_weeks = daily.dates.len() / 7;
    if t_weeks == 0 {
        return Err(Error::Data(format!(
            "weekly aggregation needs at least 7 days, have {}",
            daily.dates.len()
        )));
    }
    let n = daily.values.ncols();
    let mut values = DMatrix::zeros(t_weeks, n);
    for w in 0..t_weeks {
        for i in 0..n {
            let mut sum = 0.0;
            for d in 0..7 {
                sum += daily.values[(umw(w) + d, i)];
            }
            values[(w, i)] = sum; // NaN propagates: missing day ⇒ missing week
        }
    }
    let dates = (0..t_weeks).map(|w| daily.dates[umw(w)]).collect();
    Ok(DailyPanel { dates, values })
}

fn umw(w: usize) -> usize {
    w * 7
}

/// Mean of a covariate series over each 7-day block.
fn weekly_covariate(
    name: &str,
    daily_dates: &[NaiveDate],
    series: &BTreeMap<NaiveDate, f64>,
    t_weeks: usize,
) -> Result<BTreeMap<NaiveDate, f64>> {
    let mut out = BTreeMap::new();
    for w in 0..t_weeks {
        let mut sum = 0.0;
        for d in 0..7 {
            let date = daily_dates[umw(w) + d];
            let Some(v) = series.get(&date) else {
                return Err(Error::Data(format!(
                    "covariate {name} has no value for {date}; \
                     covariates must cover the modeled range completely"
                )));
            };
            sum += v;
        }
        out.insert(daily_dates[umw(w)], sum / 7.0);
    }
    Ok(out)
}

fn standardize_series(name: &str, values: &[f64]) -> Result<(CovariateScale, Vec<f64>)> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::Data(format!(
            "covariate {name} is constant over the modeled range; \
             it cannot be standardized (drop it from model.covariates)"
        )));
    }
    let scale = CovariateScale {
        name: name.to_string(),
        mean,
        sd: var.sqrt(),
    };
    let standardized = values.iter().map(|v| scale.apply(*v)).collect();
    Ok((scale, standardized))
}

/// Full ingest: read, validate, aggregate, standardize, assemble.
pub fn ingest(config: &RunConfig) -> Result<Dataset> {
    let stations = read_stations(&config.data.stations)?;
    let obs_path = config.data.observations.as_ref().ok_or_else(|| {
        Error::Config("data.observations is required for this command".into())
    })?;
    let daily = read_observations(obs_path, &stations, &config.model)?;

    let needs_file = config
        .model
        .covariates
        .iter()
        .any(|n| n != ELEVATION_COVARIATE);
    let file_series = match (&config.data.covariates, needs_file) {
        (Some(path), _) => read_covariates(path)?,
        (None, false) => BTreeMap::new(),
        (None, true) => {
            return Err(Error::Config(
                "model.covariates names index series but data.covariates is not set".into(),
            ))
        }
    };

    let panel_source = match config.model.aggregation {
        Aggregation::Daily => daily,
        Aggregation::Weekly => aggregate_weekly(&daily)?,
    };
    // Daily calendar for covariate lookups (weekly blocks average over it).
    let daily_dates = match config.model.aggregation {
        Aggregation::Daily => panel_source.dates.clone(),
        Aggregation::Weekly => {
            let start = panel_source.dates[0];
            let end = start + Days::new(7 * panel_source.dates.len() as u64 - 1);
            date_run(start, end)
        }
    };

    let t_len = panel_source.dates.len();
    let n = stations.len();
    let mut x = Vec::new();
    let mut scales = Vec::new();
    let mut raw_series = BTreeMap::new();
    for name in &config.model.covariates {
        if name == ELEVATION_COVARIATE {
            let (scale, std_vals) = standardize_series(name, stations.elevation())?;
            let mut panel = DMatrix::zeros(t_len, n);
            for i in 0..n {
                for t in 0..t_len {
                    panel[(t, i)] = std_vals[i];
                }
            }
            scales.push(scale);
            x.push(panel);
            continue;
        }
        let Some(series) = file_series.get(name) else {
            return Err(Error::Data(format!(
                "covariate {name} selected in the config but absent from the covariate file"
            )));
        };
        let at_panel_dates: BTreeMap<NaiveDate, f64> = match config.model.aggregation {
            Aggregation::Daily => {
                let mut out = BTreeMap::new();
                for date in &panel_source.dates {
                    let Some(v) = series.get(date) else {
                        return Err(Error::Data(format!(
                            "covariate {name} has no value for {date}; \
                             covariates must cover the modeled range completely"
                        )));
                    };
                    out.insert(*date, *v);
                }
                out
            }
            Aggregation::Weekly => weekly_covariate(name, &daily_dates, series, t_len)?,
        };
        let raw: Vec<f64> = panel_source.dates.iter().map(|d| at_panel_dates[d]).collect();
        let (scale, std_vals) = standardize_series(name, &raw)?;
        let mut panel = DMatrix::zeros(t_len, n);
        for t in 0..t_len {
            for i in 0..n {
                panel[(t, i)] = std_vals[t];
            }
        }
        scales.push(scale);
        x.push(panel);
        raw_series.insert(name.clone(), at_panel_dates);
    }

    let panel = PanelData::new(stations, panel_source.values, x)?;
    Ok(Dataset {
        panel,
        dates: panel_source.dates,
        covariate_names: config.model.covariates.clone(),
        scales,
        raw_series,
        aggregation: config.model.aggregation,
    })
}

/// Daily covariate panels over an explicit date run, standardized over
/// that run — what `simulate` needs before any observations exist.
pub fn covariate_panels_for_dates(
    stations: &StationSet,
    names: &[String],
    covariates_path: Option<&Path>,
    dates: &[NaiveDate],
) -> Result<(Vec<DMatrix<f64>>, Vec<CovariateScale>)> {
    let needs_file = names.iter().any(|n| n != ELEVATION_COVARIATE);
    let file_series = match (covariates_path, needs_file) {
        (Some(path), _) => read_covariates(path)?,
        (None, false) => BTreeMap::new(),
        (None, true) => {
            return Err(Error::Config(
                "covariates are selected but data.covariates is not set".into(),
            ))
        }
    };
    let (t_len, n) = (dates.len(), stations.len());
    let mut x = Vec::new();
    let mut scales = Vec::new();
    for name in names {
        if name == ELEVATION_COVARIATE {
            let (scale, std_vals) = standardize_series(name, stations.elevation())?;
            let mut panel = DMatrix::zeros(t_len, n);
            for i in 0..n {
                for t in 0..t_len {
                    panel[(t, i)] = std_vals[i];
                }
            }
            scales.push(scale);
            x.push(panel);
            continue;
        }
        let Some(series) = file_series.get(name) else {
            return Err(Error::Data(format!(
                "covariate {name} absent from the covariate file"
            )));
        };
        let mut raw = Vec::with_capacity(t_len);
        for date in dates {
            let Some(v) = series.get(date) else {
                return Err(Error::Data(format!(
                    "covariate {name} has no value for {date}; \
                     covariates must cover the simulated range completely"
                )));
            };
            raw.push(*v);
        }
        let (scale, std_vals) = standardize_series(name, &raw)?;
        let mut panel = DMatrix::zeros(t_len, n);
        for t in 0..t_len {
            for i in 0..n {
                panel[(t, i)] = std_vals[t];
            }
        }
        scales.push(scale);
        x.push(panel);
    }
    Ok((x, scales))
}

/// Consecutive daily dates, inclusive on both ends.
pub fn date_span(start: NaiveDate, len: usize) -> Vec<NaiveDate> {
    (0..len)
        .map(|k| start + Days::new(k as u64))
        .collect()
}

/// Standardized covariate row for the step after the panel ends. ELE comes
/// from station elevation; file-backed series are read at the next panel
/// date (daily) or averaged over the next 7-day block (weekly).
pub fn next_step_covariates(ds: &Dataset, config: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let n = ds.panel.n_stations();
    let last = *ds.dates.last().expect("nonempty panel");
    let file_series = if ds.covariate_names.iter().any(|n| n != ELEVATION_COVARIATE) {
        let path = config.data.covariates.as_ref().ok_or_else(|| {
            Error::Config("data.covariates is required to build the forecast step".into())
        })?;
        read_covariates(path)?
    } else {
        BTreeMap::new()
    };
    let mut rows = Vec::new();
    for (name, scale) in ds.covariate_names.iter().zip(&ds.scales) {
        if name == ELEVATION_COVARIATE {
            rows.push(
                ds.panel
                    .stations()
                    .elevation()
                    .iter()
                    .map(|e| scale.apply(*e))
                    .collect(),
            );
            continue;
        }
        let series = file_series.get(name).ok_or_else(|| {
            Error::Data(format!("covariate {name} absent from the covariate file"))
        })?;
        let raw = match ds.aggregation {
            Aggregation::Daily => {
                let date = last + Days::new(1);
                *series.get(&date).ok_or_else(|| {
                    Error::Data(format!(
                        "covariate {name} has no value for the forecast date {date}"
                    ))
                })?
            }
            Aggregation::Weekly => {
                let start = last + Days::new(7);
                let mut sum = 0.0;
                for d in 0..7 {
                    let date = start + Days::new(d);
                    sum += *series.get(&date).ok_or_else(|| {
                        Error::Data(format!(
                            "covariate {name} has no value for the forecast block day {date}"
                        ))
                    })?;
                }
                sum / 7.0
            }
        };
        rows.push(vec![scale.apply(raw); n]);
    }
    Ok(rows)
}

/// Target covariate panels (T × sites) on the standardized scale: ELE from
/// site elevation through the persisted transform, index series broadcast
/// from the (station-constant) fitted panels.
pub fn spatial_covariates(
    ds: &Dataset,
    sites: &[crate::io::config::SiteSpec],
) -> Result<Vec<DMatrix<f64>>> {
    let t_len = ds.panel.t_len();
    let r = sites.len();
    let mut out = Vec::with_capacity(ds.covariate_names.len());
    for (k, name) in ds.covariate_names.iter().enumerate() {
        let mut panel = DMatrix::zeros(t_len, r);
        if name == ELEVATION_COVARIATE {
            for (j, site) in sites.iter().enumerate() {
                let v = ds.scales[k].apply(site.elevation_m);
                for t in 0..t_len {
                    panel[(t, j)] = v;
                }
            }
        } else {
            let x = &ds.panel.covariates()[k];
            for t in 0..t_len {
                let v = x[(t, 0)];
                for i in 1..ds.panel.n_stations() {
                    if (x[(t, i)] - v).abs() > 1e-9 {
                        return Err(Error::Data(format!(
                            "covariate {name} varies across stations; \
                             cannot broadcast it to prediction sites"
                        )));
                    }
                }
                for j in 0..r {
                    panel[(t, j)] = v;
                }
            }
        }
        out.push(panel);
    }
    Ok(out)
}

/// Prediction sites with covariate rows taken from the target panels at
/// panel time `at`.
pub fn prediction_sites(
    specs: &[crate::io::config::SiteSpec],
    target_x: &[DMatrix<f64>],
    at: usize,
) -> Vec<crate::prediction::PredictionSite> {
    specs
        .iter()
        .enumerate()
        .map(|(j, s)| crate::prediction::PredictionSite {
            id: s.id.clone(),
            coords: (s.longitude_deg, s.latitude_deg),
            elevation_m: s.elevation_m,
            covariates: target_x.iter().map(|x| x[(at, j)]).collect(),
        })
        .collect()
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(file))
}

/// Shortest-roundtrip decimal so emitted files reproduce exact bits.
fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_stations(path: &Path, stations: &StationSet) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "station_id,longitude_deg,latitude_deg,elevation_m")?;
    for (i, id) in stations.ids().iter().enumerate() {
        let (lon, lat) = stations.coords()[i];
        writeln!(
            w,
            "{id},{},{},{}",
            fmt(lon),
            fmt(lat),
            fmt(stations.elevation()[i])
        )?;
    }
    Ok(w.flush()?)
}

pub fn write_observations(
    path: &Path,
    dates: &[NaiveDate],
    stations: &StationSet,
    values: &DMatrix<f64>,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "date,station_id,precip_mm")?;
    for (t, date) in dates.iter().enumerate() {
        for (i, id) in stations.ids().iter().enumerate() {
            let v = values[(t, i)];
            if v.is_nan() {
                writeln!(w, "{date},{id},")?;
            } else {
                writeln!(w, "{date},{id},{}", fmt(v))?;
            }
        }
    }
    Ok(w.flush()?)
}

pub fn write_covariates(
    path: &Path,
    series: &BTreeMap<String, BTreeMap<NaiveDate, f64>>,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "date,name,value")?;
    for (name, vals) in series {
        for (date, v) in vals {
            writeln!(w, "{date},{name},{}", fmt(*v))?;
        }
    }
    Ok(w.flush()?)
}

/// Write a dataset back out as input files (stations + observations +
/// covariates). At daily resolution `ingest` of the result reproduces the
/// panel exactly.
pub fn emit_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_stations(&dir.join("stations.csv"), ds.panel.stations())?;
    write_observations(
        &dir.join("observations.csv"),
        &ds.dates,
        ds.panel.stations(),
        ds.panel.observations(),
    )?;
    if !ds.raw_series.is_empty() {
        write_covariates(&dir.join("covariates.csv"), &ds.raw_series)?;
    }
    Ok(())
}
