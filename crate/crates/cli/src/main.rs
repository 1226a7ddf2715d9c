//! `windcast` command-line front end: simulation, fitting, forecasting and evaluation.
//!
//! Every command writes a `<out>.manifest.json` next to its output with the hashes of
//! the effective configuration, the input data and each file written.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use windcast::baselines::{run_baseline_backtest, BaselineKind};
use windcast::config::RunConfig;
use windcast::data::{load_csv, split_train_test, SeriesFrame};
use windcast::evaluation::{pce_alpha_sweep, summarize, write_reports_csv, write_sweep_csv};
use windcast::forecaster::{write_records_csv, write_records_jsonl, Forecaster};
use windcast::snapshot;
use windcast::synth::{simulate, SimSpec};

#[derive(Parser, Debug)]
#[command(name = "windcast", version, about = "Probabilistic one-step wind power forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a synthetic (speed, power) series plus a ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Tune and fit on the training split and write a model snapshot.
    Fit(FitArgs),
    /// One-step forecasts over the test split.
    Forecast(ForecastArgs),
    /// Metric table for the proposed method and the baselines.
    Evaluate(EvaluateArgs),
    /// Average PCE of every method over a grid of alpha.
    SweepAlpha(SweepArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Simulation spec (TOML); defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Series CSV; the truth sidecar goes to <stem>.truth.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunInput {
    /// CSV with timestamp, wind_speed and power columns.
    #[arg(long)]
    data: PathBuf,
    /// Run configuration (TOML); defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: RunInput,
    /// Snapshot path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[command(flatten)]
    input: RunInput,
    /// Underestimation penalty for the point forecast, in (0,1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Records as CSV, or JSON lines when the name ends in .jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Continue from a snapshot instead of fitting; forecasting resumes at its step.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Write the state after the last forecast here.
    #[arg(long)]
    save_snapshot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    input: RunInput,
    #[arg(long)]
    alpha: Option<f64>,
    /// Refit the baseline speed models every this many steps.
    #[arg(long)]
    refit_every: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    input: RunInput,
    /// Grid points (repeatable); 0.1, 0.2, ..., 0.9 when omitted.
    #[arg(long)]
    alpha: Vec<f64>,
    #[arg(long)]
    refit_every: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Bad invocation: missing files, invalid configuration or flag values. Exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_input_file(path: &Path, what: &str) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(usage(format!("{what} file {} does not exist", path.display())));
    }
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let bytes = read_input_file(p, "config")?;
            let text = String::from_utf8(bytes).map_err(|_| usage(format!("config {} is not UTF-8", p.display())))?;
            RunConfig::from_toml_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(usage(format!("--alpha {alpha} must lie strictly between 0 and 1")))
    }
}

struct Loaded {
    config: RunConfig,
    frame: SeriesFrame,
    input_hash: String,
    dataset: String,
}

fn load_run(input: &RunInput, mut adjust: impl FnMut(&mut RunConfig) -> Result<()>) -> Result<Loaded> {
    let mut config = load_config(input.config.as_deref())?;
    adjust(&mut config)?;
    config.validate().map_err(|e| usage(e.to_string()))?;
    let bytes = read_input_file(&input.data, "data")?;
    let frame = load_csv(&input.data, &config).with_context(|| format!("loading {}", input.data.display()))?;
    let dataset = input.data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "data".into());
    Ok(Loaded { config, frame, input_hash: sha256_hex(&bytes), dataset })
}

#[derive(Serialize)]
struct OutputEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    tool_version: &'static str,
    seed: Option<u64>,
    config_sha256: String,
    input_sha256: Option<String>,
    outputs: Vec<OutputEntry>,
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<OutputEntry> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(OutputEntry { path: path.display().to_string(), sha256: sha256_hex(bytes) })
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_manifest(out: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    write_output(&manifest_path(out), text.as_bytes())?;
    Ok(())
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> windcast::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "series".into());
    out.with_file_name(format!("{stem}.truth.csv"))
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut spec = match &args.config {
        None => SimSpec::default(),
        Some(p) => {
            let text = String::from_utf8(read_input_file(p, "config")?)
                .map_err(|_| usage(format!("config {} is not UTF-8", p.display())))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(steps) = args.steps {
        spec.n_steps = steps;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let out = simulate(&spec)?;
    log::info!("simulated {} steps, {} clamped", spec.n_steps, out.clamp_count);
    let series = write_output(&args.out, &csv_bytes(|b| out.frame.write_csv(b))?)?;
    let truth = write_output(&truth_path(&args.out), &csv_bytes(|b| out.write_truth_csv(b))?)?;
    let spec_text = toml::to_string(&spec)?;
    write_manifest(
        &args.out,
        &Manifest {
            command: "simulate",
            tool_version: env!("CARGO_PKG_VERSION"),
            seed: Some(spec.seed),
            config_sha256: sha256_hex(spec_text.as_bytes()),
            input_sha256: None,
            outputs: vec![series, truth],
        },
    )
}

fn run_manifest(command: &'static str, loaded: &Loaded, outputs: Vec<OutputEntry>) -> Manifest {
    Manifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: None,
        config_sha256: sha256_hex(loaded.config.to_toml_string().as_bytes()),
        input_sha256: Some(loaded.input_hash.clone()),
        outputs,
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let loaded = load_run(&args.input, |_| Ok(()))?;
    let (train, _) = split_train_test(&loaded.frame, &loaded.config)?;
    let model = Forecaster::fit(&train, &loaded.config)?;
    log::info!(
        "Q = {:?}, sigma_z2 = {}, delta = {}, gamma = {}, sigma_F = {}",
        model.hyper.q_diag,
        model.hyper.sigma_z2,
        model.curve.delta,
        model.curve.gamma,
        model.curve.sigma_f
    );
    let entry = write_output(&args.out, snapshot::to_json(&model)?.as_bytes())?;
    write_manifest(&args.out, &run_manifest("fit", &loaded, vec![entry]))
}

fn cmd_forecast(args: ForecastArgs) -> Result<()> {
    let alpha = args.alpha.map(check_alpha).transpose()?;
    let resumed = match &args.resume {
        None => None,
        Some(p) => {
            let bytes = read_input_file(p, "snapshot")?;
            let text = String::from_utf8(bytes).map_err(|_| usage(format!("snapshot {} is not UTF-8", p.display())))?;
            Some(snapshot::parse_snapshot(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?)
        }
    };
    let loaded = load_run(&args.input, |cfg| {
        if let Some(f) = &resumed {
            *cfg = f.config.clone();
        }
        if let Some(a) = alpha {
            cfg.alpha_loss = a;
        }
        Ok(())
    })?;
    if !(loaded.config.alpha_loss > 0.0 && loaded.config.alpha_loss < 1.0) {
        return Err(usage("the point forecast needs alpha strictly between 0 and 1; pass --alpha"));
    }
    let (train, test) = split_train_test(&loaded.frame, &loaded.config)?;
    let mut model = match resumed {
        Some(mut f) => {
            f.config = loaded.config.clone();
            f
        }
        None => Forecaster::fit(&train, &loaded.config)?,
    };
    if model.step > test.len() {
        return Err(usage(format!("snapshot is at step {} but the test split has {} rows", model.step, test.len())));
    }
    let remaining = test.slice(model.step..test.len());
    let records = model.run(&remaining)?;
    let jsonl = args.out.extension().is_some_and(|e| e == "jsonl");
    let bytes = if jsonl {
        csv_bytes(|b| write_records_jsonl(&records, b))?
    } else {
        csv_bytes(|b| write_records_csv(&records, b))?
    };
    let mut outputs = vec![write_output(&args.out, &bytes)?];
    if let Some(p) = &args.save_snapshot {
        outputs.push(write_output(p, snapshot::to_json(&model)?.as_bytes())?);
    }
    write_manifest(&args.out, &run_manifest("forecast", &loaded, outputs))
}

fn apply_refit(cfg: &mut RunConfig, refit_every: Option<usize>) -> Result<()> {
    if let Some(r) = refit_every {
        if r == 0 {
            return Err(usage("--refit-every must be at least 1"));
        }
        cfg.baselines.refit_every = r;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let alpha = args.alpha.map(check_alpha).transpose()?;
    let loaded = load_run(&args.input, |cfg| {
        if let Some(a) = alpha {
            cfg.alpha_loss = a;
        }
        apply_refit(cfg, args.refit_every)
    })?;
    let cfg = &loaded.config;
    let alpha = check_alpha(cfg.alpha_loss)?;
    let (train, test) = split_train_test(&loaded.frame, cfg)?;
    let proposed = Forecaster::fit(&train, cfg)?.run(&test)?;
    let baselines = BaselineKind::ALL
        .iter()
        .map(|&k| Ok((k, run_baseline_backtest(k, &train, &test, cfg, &[alpha])?)))
        .collect::<windcast::Result<Vec<_>>>()?;
    let reports = summarize(&proposed, &baselines, alpha)?;
    let table = vec![(loaded.dataset.clone(), reports)];
    let bytes = csv_bytes(|b| write_reports_csv(&table, &cfg.interval_levels, b))?;
    let entry = write_output(&args.out, &bytes)?;
    write_manifest(&args.out, &run_manifest("evaluate", &loaded, vec![entry]))
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let alphas: Vec<f64> = if args.alpha.is_empty() {
        (1..=9).map(|i| i as f64 / 10.0).collect()
    } else {
        args.alpha.iter().map(|&a| check_alpha(a)).collect::<Result<_>>()?
    };
    let loaded = load_run(&args.input, |cfg| apply_refit(cfg, args.refit_every))?;
    let cfg = &loaded.config;
    let (train, test) = split_train_test(&loaded.frame, cfg)?;
    let mut fit_cfg = cfg.clone();
    // The sweep re-derives each alpha from the stored densities; the point alpha is unused.
    if !(fit_cfg.alpha_loss > 0.0 && fit_cfg.alpha_loss < 1.0) {
        fit_cfg.alpha_loss = 0.5;
    }
    let proposed = Forecaster::fit(&train, &fit_cfg)?.run(&test)?;
    let baselines = BaselineKind::ALL
        .iter()
        .map(|&k| Ok((k, run_baseline_backtest(k, &train, &test, cfg, &alphas)?)))
        .collect::<windcast::Result<Vec<_>>>()?;
    let rows = pce_alpha_sweep(&proposed, &baselines, &alphas)?;
    let entry = write_output(&args.out, &csv_bytes(|b| write_sweep_csv(&rows, b))?)?;
    write_manifest(&args.out, &run_manifest("sweep-alpha", &loaded, vec![entry]))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::SweepAlpha(a) => cmd_sweep(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
