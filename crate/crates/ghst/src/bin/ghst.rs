//! Command-line front end: fit the model, simulate from it, and turn a
//! finished fit into predictive ensembles and risk products. Every run
//! writes its artifacts plus a manifest into `--out`; rerunning from the
//! same resolved config and seed reproduces every byte.

use clap::{Parser, Subcommand};
use ghst::inference::run_parallel_chains;
use ghst::io::artifacts::{
    self, Manifest, ARCHIVE_FILE, DIAGNOSTICS_FILE, LATENTS_FILE, SUMMARIES_FILE,
};
use ghst::io::config::{PredictionBlock, RunConfig, SiteSpec};
use ghst::io::files::{self, Dataset};
use ghst::io::Aggregation;
use ghst::model::{PanelData, ParameterVector};
use ghst::prediction::{
    predictive_ensemble, ForecastRequest, PredictionRequest, PredictionSite, PredictiveEnsemble,
    SpatialRequest,
};
use ghst::risk::{self, Direction};
use ghst::spatial::StationSet;
use ghst::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "ghst",
    version,
    about = "Spatio-temporal precipitation modelling with generalised-hyperbolic innovations"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = "ghst_run")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on concurrently running chains.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Chatty progress on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model by MCMC and archive the posterior.
    Fit,
    /// Simulate a synthetic observation panel from fixed parameters.
    Simulate,
    /// Predictive ensembles at unobserved sites over the fitted record.
    PredictSpace,
    /// One-step-ahead predictive ensemble at the fitted stations.
    Forecast,
    /// Return curves, spell durations, and exceedance counts per station.
    Risk,
    /// Empirical (and optionally model) space-time variogram.
    Variogram,
    /// Hold-one-station-out cross-validation.
    Validate,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let payload = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() }
            });
            eprintln!("{payload}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: &Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = RunConfig::from_path(config_path)?;
    if let Some(seed) = cli.seed {
        // Fold the override in so the manifest's embedded config is the
        // complete recipe for the run.
        config.seed = seed;
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", cli.out.display())))?;
    match cli.command {
        Command::Fit => cmd_fit(&config, cli),
        Command::Simulate => cmd_simulate(&config, cli),
        Command::PredictSpace => cmd_predict_space(&config, cli),
        Command::Forecast => cmd_forecast(&config, cli),
        Command::Risk => cmd_risk(&config, cli),
        Command::Variogram => cmd_variogram(&config, cli),
        Command::Validate => cmd_validate(&config, cli),
    }
}

fn chat(cli: &Cli, msg: &str) {
    if cli.verbose > 0 {
        eprintln!("{msg}");
    }
}

fn record_data_inputs(manifest: &mut Manifest, config: &RunConfig) -> Result<()> {
    manifest.record_input(&config.data.stations)?;
    if let Some(p) = &config.data.observations {
        if p.exists() {
            manifest.record_input(p)?;
        }
    }
    if let Some(p) = &config.data.covariates {
        if p.exists() {
            manifest.record_input(p)?;
        }
    }
    Ok(())
}

fn cmd_fit(config: &RunConfig, cli: &Cli) -> Result<()> {
    let ds = files::ingest(config)?;
    chat(
        cli,
        &format!(
            "ingested {} stations × {} steps ({} covariates)",
            ds.panel.n_stations(),
            ds.panel.t_len(),
            ds.panel.n_covariates()
        ),
    );
    let priors = config.prior_spec();
    let chain_cfg = config.chain_config(None, cli.threads);
    let archive = run_parallel_chains(&ds.panel, &priors, &chain_cfg)?;
    chat(
        cli,
        &format!(
            "retained {} draws over {} chains",
            archive.retained_per_chain() * archive.n_chains(),
            archive.n_chains()
        ),
    );

    artifacts::write_archive(&cli.out, &archive)?;
    artifacts::write_summaries(&cli.out, &archive, &ds.scales)?;
    artifacts::write_diagnostics(&cli.out, &archive)?;
    let mut manifest = Manifest::new("fit", config)?;
    record_data_inputs(&mut manifest, config)?;
    manifest.record_output(&cli.out, ARCHIVE_FILE)?;
    manifest.record_output(&cli.out, SUMMARIES_FILE)?;
    manifest.record_output(&cli.out, DIAGNOSTICS_FILE)?;
    if chain_cfg.keep_latents {
        artifacts::write_latents(&cli.out, &archive, ds.panel.stations().ids())?;
        manifest.record_output(&cli.out, LATENTS_FILE)?;
    }
    manifest.write(&cli.out)?;

    if cli.verbose > 0 {
        for s in archive.summaries()? {
            eprintln!(
                "  {:<8} mean {:>12.5}  sd {:>11.5}  95% [{:.5}, {:.5}]",
                s.name, s.mean, s.sd, s.q2_5, s.q97_5
            );
        }
    }
    println!("fit written to {}", cli.out.display());
    Ok(())
}

fn cmd_simulate(config: &RunConfig, cli: &Cli) -> Result<()> {
    let sim = config
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("simulate block missing from config".into()))?;
    let stations = files::read_stations(&config.data.stations)?;
    let dates = files::date_span(sim.date_start, sim.t_len);
    let (x, _) = files::covariate_panels_for_dates(
        &stations,
        &config.model.covariates,
        config.data.covariates.as_deref(),
        &dates,
    )?;
    let z = ParameterVector::from(&sim.params);
    if z.beta.len() != config.model.covariates.len() {
        return Err(Error::Config(format!(
            "simulate.params.beta has {} entries for {} covariates",
            z.beta.len(),
            config.model.covariates.len()
        )));
    }
    let (panel, _) = ghst::model::simulate_panel(&z, &stations, &x, sim.t_len, config.seed)?;
    files::write_stations(&cli.out.join("stations.csv"), &stations)?;
    files::write_observations(
        &cli.out.join("observations.csv"),
        &dates,
        &stations,
        panel.observations(),
    )?;
    let mut manifest = Manifest::new("simulate", config)?;
    manifest.record_input(&config.data.stations)?;
    if let Some(p) = &config.data.covariates {
        manifest.record_input(p)?;
    }
    manifest.record_output(&cli.out, "stations.csv")?;
    manifest.record_output(&cli.out, "observations.csv")?;
    manifest.write(&cli.out)?;
    println!("simulated panel written to {}", cli.out.display());
    Ok(())
}

fn prediction_block(config: &RunConfig) -> Result<&PredictionBlock> {
    config
        .prediction
        .as_ref()
        .ok_or_else(|| Error::Config("prediction block missing from config".into()))
}

fn requested_times(ds: &Dataset, block: &PredictionBlock) -> Result<Vec<usize>> {
    match &block.dates {
        None => Ok(vec![ds.panel.t_len() - 1]),
        Some(dates) => {
            let mut times = Vec::with_capacity(dates.len());
            for date in dates {
                let t = ds.dates.iter().position(|d| d == date).ok_or_else(|| {
                    Error::Config(format!("prediction date {date} is not in the modeled record"))
                })?;
                times.push(t);
            }
            times.sort_unstable();
            times.dedup();
            Ok(times)
        }
    }
}

fn cmd_predict_space(config: &RunConfig, cli: &Cli) -> Result<()> {
    let block = prediction_block(config)?;
    let ds = files::ingest(config)?;
    let (fit_manifest, archive) = artifacts::read_fit(&block.fit_dir)?;
    let specs: Vec<SiteSpec> = match (&block.sites, &block.grid) {
        (Some(s), None) => s.clone(),
        (None, Some(g)) => g.points()?,
        (None, None) => {
            return Err(Error::Config(
                "predict-space needs prediction.sites or prediction.grid".into(),
            ))
        }
        _ => unreachable!("validated at load"),
    };
    let target_x = files::spatial_covariates(&ds, &specs)?;
    let times = requested_times(&ds, block)?;
    let sites = files::prediction_sites(&specs, &target_x, *times.last().expect("nonempty"));
    let request = PredictionRequest::Spatial(SpatialRequest {
        sites,
        target_x,
        times: times.clone(),
    });
    chat(
        cli,
        &format!(
            "{} sites × {} times × {} sims from fit {}",
            specs.len(),
            times.len(),
            block.n_sims,
            fit_manifest.config_sha256
        ),
    );
    let ens = predictive_ensemble(&archive, &ds.panel, &request, block.n_sims, config.seed)?;
    let dates: Vec<String> = times.iter().map(|&t| ds.dates[t].to_string()).collect();
    write_ensemble_outputs(config, cli, "predict-space", &ens, &dates, &block.fit_dir)
}

fn cmd_forecast(config: &RunConfig, cli: &Cli) -> Result<()> {
    let block = prediction_block(config)?;
    let ds = files::ingest(config)?;
    let (_, archive) = artifacts::read_fit(&block.fit_dir)?;
    let rows = files::next_step_covariates(&ds, config)?;
    let x_next: Vec<DVector<f64>> = rows.into_iter().map(DVector::from_vec).collect();
    let request = PredictionRequest::Forecast(ForecastRequest { x_next });
    let ens = predictive_ensemble(&archive, &ds.panel, &request, block.n_sims, config.seed)?;
    let next_date = match ds.aggregation {
        Aggregation::Daily => *ds.dates.last().expect("nonempty") + chrono::Days::new(1),
        Aggregation::Weekly => *ds.dates.last().expect("nonempty") + chrono::Days::new(7),
    };
    write_ensemble_outputs(
        config,
        cli,
        "forecast",
        &ens,
        &[next_date.to_string()],
        &block.fit_dir,
    )
}

fn write_ensemble_outputs(
    config: &RunConfig,
    cli: &Cli,
    command: &str,
    ens: &PredictiveEnsemble,
    dates: &[String],
    fit_dir: &Path,
) -> Result<()> {
    artifacts::write_ensemble_draws(&cli.out.join("ensemble.csv"), ens, dates)?;
    artifacts::write_ensemble_summary(&cli.out.join("summary.csv"), ens, dates)?;
    let mut manifest = Manifest::new(command, config)?;
    record_data_inputs(&mut manifest, config)?;
    manifest.record_input(&fit_dir.join(ARCHIVE_FILE))?;
    manifest.record_output(&cli.out, "ensemble.csv")?;
    manifest.record_output(&cli.out, "summary.csv")?;
    manifest.write(&cli.out)?;
    println!(
        "{command}: {} sims × {} sites written to {}",
        ens.n_sims(),
        ens.site_ids.len(),
        cli.out.display()
    );
    Ok(())
}

fn cmd_risk(config: &RunConfig, cli: &Cli) -> Result<()> {
    let block = config
        .risk
        .as_ref()
        .ok_or_else(|| Error::Config("risk block missing from config".into()))?;
    let ds = files::ingest(config)?;
    let obs = ds.panel.observations();
    let ids = ds.panel.stations().ids();

    let curves_path = cli.out.join("return_curves.csv");
    let mut w = io_writer(&curves_path)?;
    writeln!(w, "station_id,level_mm,period_steps")?;
    for (i, id) in ids.iter().enumerate() {
        let series: Vec<f64> = obs.column(i).iter().copied().collect();
        let curve = risk::return_period_curve(&series, &block.levels)?;
        for (lvl, period) in curve.levels.iter().zip(&curve.periods) {
            match period {
                Some(p) => writeln!(w, "{id},{lvl},{p}")?,
                None => writeln!(w, "{id},{lvl},")?,
            }
        }
    }
    w.flush()?;

    let durations_path = cli.out.join("durations.csv");
    let mut w = io_writer(&durations_path)?;
    writeln!(w, "station_id,threshold_mm,direction,mean_spell_steps,spell_count")?;
    for (i, id) in ids.iter().enumerate() {
        let series: Vec<f64> = obs.column(i).iter().copied().collect();
        for &th in &block.thresholds {
            for (dir, label) in [(Direction::Over, "over"), (Direction::Below, "below")] {
                let d = risk::duration_stats(&series, th, dir);
                let mean = d.mean_length.map_or(String::new(), |m| format!("{m}"));
                writeln!(w, "{id},{th},{label},{mean},{}", d.spell_count)?;
            }
        }
    }
    w.flush()?;

    let counts_path = cli.out.join("counts.csv");
    let mut w = io_writer(&counts_path)?;
    writeln!(w, "station_id,statistic,threshold_mm,count")?;
    for (i, id) in ids.iter().enumerate() {
        let series: Vec<f64> = obs.column(i).iter().copied().collect();
        writeln!(w, "{id},zero_steps,,{}", risk::count_zero(&series))?;
        for &th in &block.thresholds {
            writeln!(
                w,
                "{id},steps_over,{th},{}",
                risk::count_over_threshold(&series, th, Direction::Over)
            )?;
        }
    }
    w.flush()?;

    let mut manifest = Manifest::new("risk", config)?;
    record_data_inputs(&mut manifest, config)?;
    manifest.record_output(&cli.out, "return_curves.csv")?;
    manifest.record_output(&cli.out, "durations.csv")?;
    manifest.record_output(&cli.out, "counts.csv")?;
    manifest.write(&cli.out)?;
    println!("risk statistics written to {}", cli.out.display());
    Ok(())
}

fn cmd_variogram(config: &RunConfig, cli: &Cli) -> Result<()> {
    let block = config
        .variogram
        .as_ref()
        .ok_or_else(|| Error::Config("variogram block missing from config".into()))?;
    let ds = files::ingest(config)?;
    let empirical = risk::empirical_st_variogram(
        ds.panel.distances(),
        ds.panel.observations(),
        &block.space_edges,
        &block.time_lags,
    )?;
    let model = match &block.fit_dir {
        None => None,
        Some(dir) => {
            let (_, archive) = artifacts::read_fit(dir)?;
            Some(risk::model_variogram(
                &archive,
                &ds.panel,
                &block.space_edges,
                &block.time_lags,
                block.n_sims,
                config.seed,
            )?)
        }
    };
    artifacts::write_variogram(&cli.out.join("variogram.csv"), &empirical, model.as_ref())?;
    let mut manifest = Manifest::new("variogram", config)?;
    record_data_inputs(&mut manifest, config)?;
    manifest.record_output(&cli.out, "variogram.csv")?;
    manifest.write(&cli.out)?;
    println!("variogram written to {}", cli.out.display());
    Ok(())
}

fn cmd_validate(config: &RunConfig, cli: &Cli) -> Result<()> {
    let block = config
        .validate
        .as_ref()
        .ok_or_else(|| Error::Config("validate block missing from config".into()))?;
    let ds = files::ingest(config)?;
    let ids = ds.panel.stations().ids().to_vec();
    let held: Vec<String> = if block.stations.is_empty() {
        ids.clone()
    } else {
        for s in &block.stations {
            if !ids.contains(s) {
                return Err(Error::Config(format!("validate.stations: unknown station {s:?}")));
            }
        }
        block.stations.clone()
    };
    if ids.len() < 3 {
        return Err(Error::Data(
            "hold-one-out validation needs at least 3 stations".into(),
        ));
    }

    let priors = config.prior_spec();
    let mut chain_cfg = config.chain_config(None, cli.threads);
    chain_cfg.keep_latents = true; // prediction needs matched latents

    let cov_path = cli.out.join("coverage.csv");
    let mut cov_w = io_writer(&cov_path)?;
    writeln!(cov_w, "station_id,n_obs,coverage_95")?;
    let qq_path = cli.out.join("qq.csv");
    let mut qq_w = io_writer(&qq_path)?;
    writeln!(qq_w, "station_id,prob,observed_mm,simulated_mm")?;

    for id in &held {
        let hold = ids.iter().position(|s| s == id).expect("checked above");
        chat(cli, &format!("holding out {id}"));
        let (train, site_spec) = drop_station(&ds, hold)?;
        let archive = run_parallel_chains(&train, &priors, &chain_cfg)?;

        let train_ds = Dataset {
            panel: train.clone(),
            dates: ds.dates.clone(),
            covariate_names: ds.covariate_names.clone(),
            scales: ds.scales.clone(),
            raw_series: ds.raw_series.clone(),
            aggregation: ds.aggregation,
        };
        let target_x = files::spatial_covariates(&train_ds, std::slice::from_ref(&site_spec))?;
        let t_len = train.t_len();
        let sites = files::prediction_sites(std::slice::from_ref(&site_spec), &target_x, t_len - 1);
        let request =
            PredictionRequest::Spatial(SpatialRequest::full_record(sites, target_x, t_len));
        let ens = predictive_ensemble(&archive, &train, &request, block.n_sims, config.seed)?;

        let observed: Vec<f64> = ds.panel.observations().column(hold).iter().copied().collect();
        let mut n_obs = 0usize;
        let mut inside = 0usize;
        for s in ens.summaries() {
            let y = observed[s.time];
            if y.is_nan() {
                continue;
            }
            n_obs += 1;
            if s.q2_5 <= y && y <= s.q97_5 {
                inside += 1;
            }
        }
        let coverage = inside as f64 / n_obs.max(1) as f64;
        writeln!(cov_w, "{id},{n_obs},{coverage}")?;
        for pair in risk::qq_pairs(&observed, &ens, id, &risk::default_prob_grid())? {
            writeln!(qq_w, "{id},{},{},{}", pair.prob, pair.observed, pair.simulated)?;
        }
    }
    cov_w.flush()?;
    qq_w.flush()?;

    let mut manifest = Manifest::new("validate", config)?;
    record_data_inputs(&mut manifest, config)?;
    manifest.record_output(&cli.out, "coverage.csv")?;
    manifest.record_output(&cli.out, "qq.csv")?;
    manifest.write(&cli.out)?;
    println!("validation written to {}", cli.out.display());
    Ok(())
}

/// Training panel without station `hold`, plus a site spec for it.
fn drop_station(ds: &Dataset, hold: usize) -> Result<(PanelData, SiteSpec)> {
    let st = ds.panel.stations();
    let keep: Vec<usize> = (0..st.len()).filter(|&i| i != hold).collect();
    let ids = keep.iter().map(|&i| st.ids()[i].clone()).collect();
    let coords = keep.iter().map(|&i| st.coords()[i]).collect();
    let elev = keep.iter().map(|&i| st.elevation()[i]).collect();
    let reduced = StationSet::new(ids, coords, elev)?;
    let t_len = ds.panel.t_len();
    let take = |m: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(t_len, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            out.set_column(j, &m.column(i));
        }
        out
    };
    let d = take(ds.panel.observations());
    let x: Vec<DMatrix<f64>> = ds.panel.covariates().iter().map(take).collect();
    let panel = PanelData::new(reduced, d, x)?;
    let spec = SiteSpec {
        id: st.ids()[hold].clone(),
        longitude_deg: st.coords()[hold].0,
        latitude_deg: st.coords()[hold].1,
        elevation_m: st.elevation()[hold],
    };
    Ok((panel, spec))
}

fn io_writer(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(file))
}
