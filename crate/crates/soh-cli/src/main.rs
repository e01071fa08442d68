//! `soh` — reproducible battery SOH estimation runs.
//!
//! Subcommands: `synth` (generate a synthetic dataset), `profile` (matrix
//! profile and discord), `select` (per-cycle segments), `train` (offline
//! training), `estimate` (online estimation), `sweep` (threshold sweep),
//! `eval` (recompute metrics from a report).
//!
//! Every run writes a `run.json` echoing the fully resolved configuration;
//! re-running with `-c run.json` reproduces the outputs bit for bit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use soh_core::data::{
    load_battery_csv, synth_battery, write_battery_csv, write_profile_csv, DataError, SynthConfig,
};
use soh_core::pipeline::{
    compute_metrics, discover_spec, load_model, load_report, run_offline_with_spec, run_online,
    save_model, save_report, sweep_segments, write_report_csv, write_sweep_csv, PipelineError,
    RunConfig, SegmentDiscovery,
};
use soh_core::plot::{soh_chart, sweep_chart};
use soh_core::profile::{mp_fast_par, partition_profile, ProfileConfig};
use soh_core::segment::{select_segment, PadPolicy, SegmentSpec};
use soh_core::series::concat_cycles;

const EXIT_VALIDATION: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_DIVERGENCE: u8 = 5;

/// Resolved configuration for a whole run: generator settings plus the
/// estimation pipeline settings. Serialized into `run.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct AppConfig {
    synth: SynthConfig,
    run: RunConfig,
}

/// Echo of one invocation, written next to the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunEcho {
    subcommand: String,
    inputs: Inputs,
    config: AppConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct Inputs {
    cycles: Option<PathBuf>,
    labels: Option<PathBuf>,
    model: Option<PathBuf>,
    report: Option<PathBuf>,
}

#[derive(Parser)]
#[command(
    name = "soh",
    version,
    about = "Battery state-of-health estimation from partial discharge segments"
)]
struct Cli {
    /// Configuration file (TOML, JSON, or a previous run.json).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, global = true, default_value = "out")]
    out: PathBuf,
    /// Increase verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Cycles CSV (header `cycle,t,voltage`).
    #[arg(long)]
    cycles: PathBuf,
    /// Labels CSV (header `cycle,soh`).
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// Seed override (generator seed for `synth`, training seed otherwise).
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs override.
    #[arg(long)]
    epochs: Option<usize>,
    /// Segment and profile window length override.
    #[arg(long)]
    m: Option<usize>,
    /// Segment threshold override, bypassing the matrix-profile selection.
    #[arg(long)]
    vref: Option<f64>,
    /// Pad policy for online segments: `error` or `pad_last`.
    #[arg(long)]
    pad_policy: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic battery dataset.
    Synth {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compute the matrix profile of the early cycles and locate the
    /// discord on the reference cycle.
    Profile {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Extract every cycle's voltage segment.
    Select {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the estimation model on the offline split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Estimate SOH for the online split with a trained model.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        /// Trained model artifact (model.json).
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train and evaluate one pipeline per candidate threshold.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated candidate thresholds in volts; default is seven
        /// candidates at 0.02 V spacing centered on the MP selection.
        #[arg(long, value_delimiter = ',')]
        candidates: Vec<f64>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute metrics from a report and verify the stored aggregates.
    Eval {
        /// Estimation report (report.json).
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Pipeline(PipelineError),
    Data(DataError),
    Config(String),
    Io(String),
    Validation(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Pipeline(e) => write!(f, "{e}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Config(msg) | CliError::Io(msg) | CliError::Validation(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Pipeline(e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

impl CliError {
    fn category(&self) -> (&'static str, u8) {
        match self {
            CliError::Pipeline(e) => match e {
                PipelineError::Gcn(soh_core::gcn::GcnError::DivergenceDetected { .. }) => {
                    ("divergence", EXIT_DIVERGENCE)
                }
                PipelineError::Data(d) => data_category(d),
                _ => ("validation", EXIT_VALIDATION),
            },
            CliError::Data(d) => data_category(d),
            CliError::Config(_) | CliError::Validation(_) => ("validation", EXIT_VALIDATION),
            CliError::Io(_) => ("io", EXIT_IO),
        }
    }
}

fn data_category(e: &DataError) -> (&'static str, u8) {
    match e {
        DataError::Io { .. } => ("io", EXIT_IO),
        _ => ("validation", EXIT_VALIDATION),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (category, code) = e.category();
            eprintln!("error[{category}]: {e}");
            ExitCode::from(code)
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = if quiet {
        "error"
    } else {
        match verbose {
            0 => "warn",
            1 => "info",
            _ => "debug",
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn load_config(path: Option<&Path>) -> Result<AppConfig, CliError> {
    let Some(path) = path else {
        return Ok(AppConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("json"))
        .unwrap_or(false)
        || text.trim_start().starts_with('{');
    if is_json {
        // Accept either a bare AppConfig or a previous run.json echo.
        if let Ok(echo) = serde_json::from_str::<RunEcho>(&text) {
            return Ok(echo.config);
        }
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn apply_overrides(config: &mut AppConfig, overrides: &Overrides, is_synth: bool) -> Result<(), CliError> {
    if let Some(seed) = overrides.seed {
        if is_synth {
            config.synth.seed = seed;
        } else {
            config.run.train.seed = seed;
        }
    }
    if let Some(epochs) = overrides.epochs {
        config.run.train.epochs = epochs;
    }
    if let Some(m) = overrides.m {
        config.run.m = m;
        if config.synth.anomaly.map(|a| a.width != m).unwrap_or(false) {
            if let Some(anomaly) = &mut config.synth.anomaly {
                anomaly.width = m;
            }
        }
    }
    if let Some(policy) = &overrides.pad_policy {
        config.run.pad_policy = match policy.as_str() {
            "error" => PadPolicy::Error,
            "pad_last" => PadPolicy::PadLast,
            other => {
                return Err(CliError::Config(format!(
                    "unknown pad policy {other:?}; expected `error` or `pad_last`"
                )))
            }
        };
    }
    Ok(())
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))
}

fn write_run_echo(
    out: &Path,
    subcommand: &str,
    inputs: Inputs,
    config: &AppConfig,
) -> Result<(), CliError> {
    let echo = RunEcho {
        subcommand: subcommand.into(),
        inputs,
        config: config.clone(),
    };
    let text = serde_json::to_string_pretty(&echo).expect("config serializes");
    soh_core::data::write_atomic(&out.join("run.json"), text.as_bytes())?;
    Ok(())
}

fn load_dataset(data: &DataArgs) -> Result<soh_core::data::BatteryDataset, CliError> {
    Ok(load_battery_csv(&data.cycles, &data.labels)?)
}

/// Discover the segment spec, honoring a `--vref` override.
fn resolve_spec(
    battery: &soh_core::data::BatteryDataset,
    run: &RunConfig,
    vref: Option<f64>,
) -> Result<(SegmentSpec, Option<SegmentDiscovery>), CliError> {
    match vref {
        Some(v) => Ok((
            SegmentSpec::new(v, run.m).map_err(PipelineError::from)?,
            None,
        )),
        None => {
            let discovery = discover_spec(battery, run)?;
            Ok((discovery.spec, Some(discovery)))
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut config = load_config(cli.config.as_deref())?;
    let out = &cli.out;
    match &cli.command {
        Command::Synth { overrides } => {
            apply_overrides(&mut config, overrides, true)?;
            ensure_out_dir(out)?;
            let battery = synth_battery(&config.synth)?;
            write_battery_csv(&battery, &out.join("cycles.csv"), &out.join("labels.csv"))?;
            write_run_echo(out, "synth", Inputs::default(), &config)?;
            println!(
                "wrote {} cycles (EOL at {:?}) to {}",
                battery.cycles.len(),
                battery.eol_cycle(),
                out.display()
            );
            Ok(())
        }
        Command::Profile { data, overrides } => {
            apply_overrides(&mut config, overrides, false)?;
            ensure_out_dir(out)?;
            let battery = load_dataset(data)?;
            let run_cfg = &config.run;
            run_cfg.validate()?;
            let mut early = Vec::with_capacity(run_cfg.base.k);
            for index in 1..=run_cfg.base.k {
                early.push(
                    battery
                        .cycle(index)
                        .ok_or(PipelineError::MissingCycle(index))?
                        .clone(),
                );
            }
            let series = concat_cycles(&early).map_err(PipelineError::from)?;
            let profile_cfg = ProfileConfig::new(run_cfg.m).with_distance(run_cfg.distance);
            let mp = mp_fast_par(&series, &profile_cfg).map_err(PipelineError::from)?;
            let slices = partition_profile(&mp, &series).map_err(PipelineError::from)?;
            write_profile_csv(&mp, &out.join("profile.csv"))?;
            let discovery = discover_spec(&battery, run_cfg)?;
            write_run_echo(
                out,
                "profile",
                Inputs {
                    cycles: Some(data.cycles.clone()),
                    labels: Some(data.labels.clone()),
                    ..Inputs::default()
                },
                &config,
            )?;
            println!(
                "profile over {} windows ({} cycles); discord at step {} of cycle {}, v_ref = {} V",
                mp.len(),
                slices.len(),
                discovery.discord.lambda,
                discovery.golden_cycle,
                discovery.spec.v_ref
            );
            Ok(())
        }
        Command::Select { data, overrides } => {
            apply_overrides(&mut config, overrides, false)?;
            ensure_out_dir(out)?;
            let battery = load_dataset(data)?;
            let (spec, _) = resolve_spec(&battery, &config.run, overrides.vref)?;
            let mut out_csv = String::from("cycle,theta,padded");
            for j in 0..spec.m {
                out_csv.push_str(&format!(",x{j}"));
            }
            out_csv.push('\n');
            let mut written = 0usize;
            for cycle in &battery.cycles {
                match select_segment(cycle, &spec, config.run.pad_policy) {
                    Ok(feat) => {
                        out_csv.push_str(&format!(
                            "{},{},{}",
                            feat.cycle_index, feat.theta, feat.padded
                        ));
                        for v in &feat.x {
                            out_csv.push_str(&format!(",{v}"));
                        }
                        out_csv.push('\n');
                        written += 1;
                    }
                    Err(e) => log::warn!("cycle {}: {e}", cycle.index),
                }
            }
            soh_core::data::write_atomic(&out.join("segments.csv"), out_csv.as_bytes())?;
            write_run_echo(
                out,
                "select",
                Inputs {
                    cycles: Some(data.cycles.clone()),
                    labels: Some(data.labels.clone()),
                    ..Inputs::default()
                },
                &config,
            )?;
            println!(
                "wrote {written} segments (v_ref = {} V, m = {}) to {}",
                spec.v_ref,
                spec.m,
                out.join("segments.csv").display()
            );
            Ok(())
        }
        Command::Train { data, overrides } => {
            apply_overrides(&mut config, overrides, false)?;
            ensure_out_dir(out)?;
            let battery = load_dataset(data)?;
            let (spec, _) = resolve_spec(&battery, &config.run, overrides.vref)?;
            let (artifact, report) = run_offline_with_spec(&battery, &config.run, &spec)?;
            save_model(&artifact, &out.join("model.json"))?;
            let report_text =
                serde_json::to_string_pretty(&report).expect("training report serializes");
            soh_core::data::write_atomic(&out.join("train_report.json"), report_text.as_bytes())?;
            write_run_echo(
                out,
                "train",
                Inputs {
                    cycles: Some(data.cycles.clone()),
                    labels: Some(data.labels.clone()),
                    ..Inputs::default()
                },
                &config,
            )?;
            println!(
                "trained on {} graphs over {} epochs (final loss {:.6e}); model {}",
                report.training_graphs,
                report.epochs_run,
                report.final_loss,
                artifact.reference()
            );
            Ok(())
        }
        Command::Estimate {
            data,
            model,
            overrides,
        } => {
            apply_overrides(&mut config, overrides, false)?;
            ensure_out_dir(out)?;
            let battery = load_dataset(data)?;
            let artifact = load_model(model)?;
            let report = run_online(&artifact, &battery, &config.run)?;
            save_report(&report, &out.join("report.json"))?;
            write_report_csv(&report, &out.join("report.csv"))?;
            soh_chart(&report, &out.join("soh.svg"))?;
            write_run_echo(
                out,
                "estimate",
                Inputs {
                    cycles: Some(data.cycles.clone()),
                    labels: Some(data.labels.clone()),
                    model: Some(model.clone()),
                    ..Inputs::default()
                },
                &config,
            )?;
            println!(
                "estimated {} online cycles ({} skipped): RMSE {:.5}, MAE {:.5}",
                report.evaluated,
                report.skipped.len(),
                report.rmse,
                report.mae
            );
            Ok(())
        }
        Command::Sweep {
            data,
            candidates,
            overrides,
        } => {
            apply_overrides(&mut config, overrides, false)?;
            ensure_out_dir(out)?;
            let battery = load_dataset(data)?;
            let offsets: Vec<f64> = if candidates.is_empty() {
                let (spec, _) = resolve_spec(&battery, &config.run, overrides.vref)?;
                (-3i32..=3)
                    .map(|i| spec.v_ref + 0.02 * i as f64)
                    .collect()
            } else {
                candidates.clone()
            };
            let table = sweep_segments(&battery, &config.run, &offsets)?;
            let json_text =
                serde_json::to_string_pretty(&table).expect("sweep table serializes");
            soh_core::data::write_atomic(&out.join("sweep.json"), json_text.as_bytes())?;
            write_sweep_csv(&table, &out.join("sweep.csv"))?;
            sweep_chart(&table, &out.join("sweep.svg"))?;
            write_run_echo(
                out,
                "sweep",
                Inputs {
                    cycles: Some(data.cycles.clone()),
                    labels: Some(data.labels.clone()),
                    ..Inputs::default()
                },
                &config,
            )?;
            for row in &table.rows {
                let marker = if row.mp_selected { " *" } else { "" };
                match row.rmse {
                    Some(rmse) => println!("{:>8.4} V  RMSE {rmse:.5}{marker}", row.v_ref),
                    None => println!(
                        "{:>8.4} V  failed: {}{marker}",
                        row.v_ref,
                        row.error.as_deref().unwrap_or("unknown")
                    ),
                }
            }
            if let Some(rank) = table.mp_rank() {
                println!("MP-selected threshold ranks {rank} of {}", table.rows.len());
            }
            Ok(())
        }
        Command::Eval { report } => {
            let loaded = load_report(report)?;
            let (mae, rmse) = compute_metrics(&loaded.rows);
            println!(
                "report {}: stored RMSE {:.6}, MAE {:.6}; recomputed RMSE {rmse:.6}, MAE {mae:.6}",
                report.display(),
                loaded.rmse,
                loaded.mae
            );
            let tolerance = 1e-12;
            if (mae - loaded.mae).abs() > tolerance || (rmse - loaded.rmse).abs() > tolerance {
                return Err(CliError::Validation(format!(
                    "stored aggregates disagree with the per-cycle rows: \
                     |ΔMAE| = {:e}, |ΔRMSE| = {:e}",
                    (mae - loaded.mae).abs(),
                    (rmse - loaded.rmse).abs()
                )));
            }
            println!("aggregates verified against per-cycle rows");
            Ok(())
        }
    }
}
