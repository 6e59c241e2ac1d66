//! The `qchannel` command-line tool.
//!
//! Each subcommand reads and writes plain files in one output directory:
//!
//! | file | written by |
//! |---|---|
//! | `config.toml`, `train.csv`, `validation.csv`, `*_shots.csv` | `simulate` |
//! | `model.json`, `train_report.json` | `train` |
//! | `evaluation.json`, `predictions.csv` | `evaluate` |
//! | `floquet.csv` | `floquet-scan` |
//! | `zz_fit.json` | `fit-zz` |
//! | `losses.csv`, `report.md` | `report` |
//!
//! Every command also writes `<command>.manifest.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::channel::{PauliBasis, TransferMatrix};
use crate::dataset::TrajectoryDataset;
use crate::dynamics::lindblad::{one_period_superoperator, PeriodicLindbladParams};
use crate::dynamics::transpose::transpose_transfer;
use crate::error::{Error, Result};
use crate::eval::{
    all_axis_pairs, error_measure, fit_zz_coupling, floquet_check, pearson, pearson_series, pearson_shot_std, purity,
    trajectory_errors, Axis, FloquetResult, FloquetVerdict, ZzFit, ZzFitOptions, ZzWeighting,
};
use crate::experiment::{generate, ExperimentConfig, Scenario};
use crate::io::{
    model_from_json, model_to_json, read_text, read_trajectories, write_file, write_shots, write_trajectories,
    Manifest,
};
use crate::trainer::{pretrain_then_train, train, TrainConfig, TrainReport, Validation};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "QCHANNEL_OUT";

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::Parse { .. }
        | Error::MissingData(_)
        | Error::DimensionMismatch { .. }
        | Error::NotNormalized(_)
        | Error::NonFinite(_)
        | Error::Json(_) => EXIT_DATA,
        Error::Diverged { .. } => EXIT_DIVERGED,
        Error::Integrator(_) | Error::Io(_) => EXIT_OTHER,
    }
}

#[derive(Debug, Parser)]
#[command(name = "qchannel", version, about = "Learn effective quantum channels from trajectory data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate training and validation trajectories.
    Simulate(SimulateArgs),
    /// Fit a channel to the training trajectories.
    Train(TrainArgs),
    /// Compare a trained channel with validation trajectories.
    Evaluate(EvaluateArgs),
    /// Floquet-generator verdicts over a grid of drive parameters.
    FloquetScan(FloquetArgs),
    /// Estimate the ZZ coupling from two-qubit Pearson series.
    FitZz(FitZzArgs),
    /// Summarize the artifacts of a run directory.
    Report(ReportArgs),
}

/// Config and overrides shared by the commands that need an experiment.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Experiment TOML; defaults to `config.toml` in the output directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the config's `out_dir`, then
    /// `$QCHANNEL_OUT/<config name>`, then `runs/<config name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides both the data and the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the environment dimension of every training phase.
    #[arg(long = "d-e")]
    pub d_e: Option<usize>,
    /// Overrides the number of training trajectories.
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Regenerate from the configuration recorded in a manifest.
    #[arg(long, conflicts_with = "config")]
    pub from_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Directory holding `train.csv` (and `validation.csv`); defaults to the
    /// output directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Model file; defaults to `model.json` in the output directory.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Validation trajectories; defaults to `validation.csv` in the output
    /// directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// First time of the window; defaults to the config's `eval_t_min`.
    #[arg(long)]
    pub t_min: Option<u32>,
    /// Last time of the window; defaults to the config's `t_final`.
    #[arg(long)]
    pub t_max: Option<u32>,
    /// Shots per basis behind shot-estimated data, for the 2σ band.
    #[arg(long)]
    pub shots: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FloquetArgs {
    /// Output directory; defaults to `$QCHANNEL_OUT/floquet`, then `runs/floquet`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `start:stop:count` grid of E_x/E_z.
    #[arg(long, default_value = "0.1:1.0:10")]
    pub ex: String,
    /// `start:stop:count` grid of ω/E_z.
    #[arg(long, default_value = "0.2:2.0:10")]
    pub omega: String,
    /// Decay rate γ/E_z.
    #[arg(long, default_value_t = 0.01)]
    pub gamma: f64,
    /// Check the transpose channel instead of a grid.
    #[arg(long, conflicts_with = "model")]
    pub transpose: bool,
    /// Check a trained model (one period per step at `--period-omega`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Drive frequency used to scale the generator of `--model`.
    #[arg(long, default_value_t = 1.0)]
    pub period_omega: f64,
}

#[derive(Debug, Args)]
pub struct FitZzArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Two-qubit trajectories; defaults to `train.csv` in the output
    /// directory. Shot subsets are pooled per initial condition.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fit to the predictions of this model from the data's initial states
    /// instead of the data itself.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// First time of the window; defaults to the config's `eval_t_min`.
    #[arg(long)]
    pub t_min: Option<u32>,
    /// Last time of the window; defaults to the config's `t_final`.
    #[arg(long)]
    pub t_max: Option<u32>,
    /// Comma-separated axis pairs such as `xx,yz`; default all nine.
    #[arg(long)]
    pub pairs: Option<String>,
    /// Weight residuals by the shot noise at this many shots per basis.
    #[arg(long)]
    pub weighted_shots: Option<u64>,
    /// Also fit every initial condition separately.
    #[arg(long)]
    pub per_trajectory: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return EXIT_CONFIG;
        }
    }
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => {
            let (cfg, out) = simulate(&a)?;
            println!(
                "{}: {} training and {} validation trajectories written to {}",
                cfg.scenario.name(),
                cfg.m,
                cfg.r,
                out.display()
            );
        }
        Command::Train(a) => {
            let report = train_cmd(&a)?;
            let epochs: usize = report.phases.iter().map(|p| p.losses.len()).sum();
            println!(
                "trained over {} phase(s), {} epochs, final loss {:.3e}{}",
                report.phases.len(),
                epochs,
                report.losses().last().copied().unwrap_or(f64::NAN),
                report
                    .validation_error
                    .map(|e| format!(", validation error {e:.3e}"))
                    .unwrap_or_default()
            );
            report.into_result()?;
        }
        Command::Evaluate(a) => {
            let e = evaluate(&a)?;
            println!("epsilon over t={}..={}: {:.4e}", e.t_min, e.t_max, e.epsilon);
        }
        Command::FloquetScan(a) => print!("{}", floquet_scan(&a)?),
        Command::FitZz(a) => {
            let r = fit_zz(&a)?;
            println!("V = {:.6} ± {:.6} from {} points", r.joint.v, r.joint.sigma, r.joint.n_points);
        }
        Command::Report(a) => print!("{}", report(&a)?),
    }
    Ok(())
}

fn default_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

/// Applies command-line overrides to a loaded config.
fn apply_overrides(mut cfg: ExperimentConfig, args: &ConfigArgs) -> Result<ExperimentConfig> {
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
        if let Some(pre) = &mut cfg.pretrain {
            pre.seed = seed;
        }
    }
    if let Some(d_e) = args.d_e {
        cfg.train.d_e = d_e;
        if let Some(pre) = &mut cfg.pretrain {
            pre.d_e = d_e;
        }
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Config given by `--config`, else `config.toml` inside `--out` if any.
fn resolve_config(args: &ConfigArgs) -> Result<Option<(ExperimentConfig, PathBuf)>> {
    let path = match (&args.config, &args.out) {
        (Some(p), _) => p.clone(),
        (None, Some(out)) if out.join("config.toml").exists() => out.join("config.toml"),
        _ => return Ok(None),
    };
    let cfg = apply_overrides(ExperimentConfig::load(&path)?, args)?;
    Ok(Some((cfg, path)))
}

fn resolve_out(args: &ConfigArgs, cfg: Option<&(ExperimentConfig, PathBuf)>) -> Result<PathBuf> {
    if let Some(out) = &args.out {
        return Ok(out.clone());
    }
    match cfg {
        Some((c, _)) if c.out_dir.is_some() => Ok(c.out_dir.clone().unwrap()),
        Some((_, path)) => Ok(default_root().join(stem(path))),
        None => Err(Error::Config("no --config or --out given".into())),
    }
}

/// Files written by `simulate`, keyed by name, in writing order.
pub fn dataset_files(cfg: &ExperimentConfig) -> Result<Vec<(String, String)>> {
    let data = generate(cfg)?;
    let mut files = vec![
        ("config.toml".to_string(), cfg.to_toml()),
        ("train.csv".to_string(), write_trajectories(&data.train)),
        ("validation.csv".to_string(), write_trajectories(&data.validation)),
    ];
    if let Some(shots) = &data.train_shots {
        files.push(("train_shots.csv".into(), write_shots(shots)));
    }
    if let Some(shots) = &data.validation_shots {
        files.push(("validation_shots.csv".into(), write_shots(shots)));
    }
    Ok(files)
}

fn write_manifest(dir: &Path, command: &str, cfg: Option<&ExperimentConfig>, files: &[(String, String)]) -> Result<Manifest> {
    let toml = cfg.map(|c| c.to_toml()).unwrap_or_default();
    let mut manifest = Manifest::new(
        command,
        &toml,
        cfg.map_or(0, |c| c.seed),
        cfg.map_or(0, |c| c.train.seed),
    );
    for (name, contents) in files {
        manifest.add_file(name, contents.as_bytes());
    }
    write_file(dir, &format!("{command}.manifest.json"), &manifest.to_json())?;
    Ok(manifest)
}

fn write_all(dir: &Path, files: &[(String, String)]) -> Result<()> {
    for (name, contents) in files {
        write_file(dir, name, contents)?;
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let (cfg, out) = if let Some(path) = &args.from_manifest {
        let manifest: Manifest = serde_json::from_str(&read_text(path)?)?;
        let cfg = apply_overrides(ExperimentConfig::from_toml(&manifest.config)?, &args.common)?;
        let out = match &args.common.out {
            Some(o) => o.clone(),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        (cfg, out)
    } else {
        let path = args
            .common
            .config
            .clone()
            .ok_or_else(|| Error::Config("simulate needs --config or --from-manifest".into()))?;
        let loaded = (apply_overrides(ExperimentConfig::load(&path)?, &args.common)?, path);
        let out = resolve_out(&args.common, Some(&loaded))?;
        (loaded.0, out)
    };
    let files = dataset_files(&cfg)?;
    write_all(&out, &files)?;
    write_manifest(&out, "simulate", Some(&cfg), &files)?;
    Ok((cfg, out))
}

fn load_dataset(path: &Path) -> Result<TrajectoryDataset> {
    read_trajectories(&read_text(path)?)
}

/// Phases used for `data`: shot-estimated data always gets the two-phase
/// schedule, falling back to the device preset when the config has no
/// pre-training section.
fn training_phases(cfg: &ExperimentConfig, data: &TrajectoryDataset) -> (Option<TrainConfig>, TrainConfig) {
    if data.is_shot_estimated() {
        let pre = cfg
            .effective_pretrain()
            .unwrap_or_else(|| TrainConfig::device_pretrain(cfg.train.d_e, cfg.train.seed));
        (Some(pre), cfg.train.clone())
    } else {
        if cfg.pretrain.is_some() {
            eprintln!("warning: exact data; ignoring the pre-training phase");
        }
        (None, cfg.train.clone())
    }
}

/// Trains and writes the model and report. A diverged run is written too
/// and returned as `Ok`; check `diverged`.
pub fn train_cmd(args: &TrainArgs) -> Result<TrainReport> {
    let mut common = args.common.clone();
    if common.out.is_none() && common.config.is_none() {
        common.out = args.data.clone();
    }
    let resolved = resolve_config(&common)?;
    let out = resolve_out(&common, resolved.as_ref())?;
    let (cfg, _) = resolved.ok_or_else(|| Error::Config("train needs --config or config.toml in --out".into()))?;
    let data_dir = args.data.clone().unwrap_or_else(|| out.clone());
    let data = load_dataset(&data_dir.join("train.csv"))?;
    if data.dim != cfg.scenario.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.scenario.dim(),
            found: data.dim,
        });
    }
    let val_path = data_dir.join("validation.csv");
    let validation_data = if val_path.exists() { Some(load_dataset(&val_path)?) } else { None };
    let validation = validation_data.as_ref().map(|d| Validation {
        data: d,
        t_min: cfg.eval_t_min,
        t_max: cfg.t_final,
    });
    if let Some(v) = &validation {
        v.data.require_times(v.t_min, v.t_max)?;
    }

    let (pre, main) = training_phases(&cfg, &data);
    let report = match &pre {
        Some(pre) => pretrain_then_train(&data, pre, &main, validation)?,
        None => train(&data, &main, validation)?,
    };
    let files = vec![
        ("model.json".to_string(), model_to_json(&report.model)),
        (
            "train_report.json".to_string(),
            serde_json::to_string_pretty(&report)? + "\n",
        ),
    ];
    write_all(&out, &files)?;
    write_manifest(&out, "train", Some(&cfg), &files)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub trajectory: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub t_min: u32,
    pub t_max: u32,
    pub epsilon: f64,
    pub trajectories: Vec<TrajectoryError>,
}

/// One-sigma shot noise of a coherence-vector component; single-qubit
/// expectations are pooled over the three bases measuring that axis.
fn component_std(label: &str, value: f64, shots: u64) -> f64 {
    let weight = label.chars().filter(|&c| c != 'I').count();
    let n = if weight == 1 { 3 * shots } else { shots } as f64;
    ((1.0 - value * value).max(0.0) / n).sqrt()
}

pub fn evaluate(args: &EvaluateArgs) -> Result<Evaluation> {
    let resolved = resolve_config(&args.common)?;
    let out = resolve_out(&args.common, resolved.as_ref())?;
    let cfg = resolved.map(|(c, _)| c);
    let model = model_from_json(&read_text(&args.model.clone().unwrap_or_else(|| out.join("model.json")))?)?;
    let data = load_dataset(&args.data.clone().unwrap_or_else(|| out.join("validation.csv")))?;
    if data.dim != model.sys_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.sys_dim(),
            found: data.dim,
        });
    }
    let last = data
        .trajectories
        .iter()
        .filter_map(|t| t.times.last().copied())
        .max()
        .unwrap_or(0);
    let t_min = args.t_min.or(cfg.as_ref().map(|c| c.eval_t_min)).unwrap_or(1);
    let t_max = args.t_max.or(cfg.as_ref().map(|c| c.t_final)).unwrap_or(last);
    data.require_times(t_min, t_max)?;
    let shots = args.shots.or(match cfg.as_ref().map(|c| &c.scenario) {
        Some(Scenario::DeviceEmulation(p)) if data.is_shot_estimated() => Some(p.shots_per_basis),
        _ => None,
    });

    let basis = PauliBasis::for_dim(data.dim)?;
    let transfer = model.transfer_matrix(&basis)?;
    let errors = trajectory_errors(&transfer, &data, t_min, t_max)?;
    let epsilon = error_measure(&transfer, &data, t_min, t_max)?;
    let eval = Evaluation {
        t_min,
        t_max,
        epsilon,
        trajectories: data
            .trajectories
            .iter()
            .zip(errors)
            .map(|(tr, error)| TrajectoryError {
                trajectory: tr.id,
                error,
            })
            .collect(),
    };
    let files = vec![
        ("evaluation.json".to_string(), serde_json::to_string_pretty(&eval)? + "\n"),
        ("predictions.csv".to_string(), predictions_csv(&transfer, &basis, &data, t_max, shots)?),
    ];
    write_all(&out, &files)?;
    write_manifest(&out, "evaluate", cfg.as_ref(), &files)?;
    Ok(eval)
}

fn push_row(csv: &mut String, id: usize, t: u32, name: &str, exact: f64, predicted: f64, sd: Option<f64>) {
    let (lo, hi) = match sd {
        Some(s) => (exact - 2.0 * s, exact + 2.0 * s),
        None => (exact, exact),
    };
    writeln!(csv, "{id},{t},{name},{exact:e},{predicted:e},{lo:e},{hi:e}").unwrap();
}

/// Plot-ready comparison of data and model predictions: every coherence
/// component, the purity and, for two qubits, all Pearson coefficients.
fn predictions_csv(
    transfer: &TransferMatrix,
    basis: &PauliBasis,
    data: &TrajectoryDataset,
    t_max: u32,
    shots: Option<u64>,
) -> Result<String> {
    let labels = basis.labels();
    let mut csv = String::from("trajectory_id,t,observable,exact,predicted,band_lo,band_hi\n");
    for tr in &data.trajectories {
        let mut predicted = tr.initial.clone();
        for t in 1..=t_max {
            predicted = transfer.propagate(&predicted);
            let Some(exact) = tr.state_at(t) else { continue };
            for (j, label) in labels.iter().enumerate().skip(1) {
                let (e, p) = (exact.values()[j], predicted.values()[j]);
                push_row(&mut csv, tr.id, t, label, e, p, shots.map(|n| component_std(label, e, n)));
            }
            push_row(&mut csv, tr.id, t, "purity", purity(exact), purity(&predicted), None);
            if data.dim == 4 {
                for (a1, a2) in all_axis_pairs() {
                    let (Some(e), Some(p)) = (pearson(exact, a1, a2)?.value, pearson(&predicted, a1, a2)?.value) else {
                        continue;
                    };
                    let sd = shots.and_then(|n| pearson_shot_std(exact, a1, a2, n));
                    let name = format!("pearson_{}{}", a1.letter(), a2.letter());
                    push_row(&mut csv, tr.id, t, &name, e, p, sd);
                }
            }
        }
    }
    Ok(csv)
}

/// Parses `start:stop:count` into `count` evenly spaced values.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("grid `{spec}` is not start:stop:count"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts[..] else { return Err(bad()) };
    let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    match n {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
    }
}

fn verdict_name(v: FloquetVerdict) -> &'static str {
    match v {
        FloquetVerdict::Exists => "exists",
        FloquetVerdict::Absent => "absent",
        FloquetVerdict::Inconclusive => "inconclusive",
    }
}

fn floquet_row(csv: &mut String, ex: &str, omega: &str, result: Result<FloquetResult>) {
    match result {
        Ok(r) => writeln!(
            csv,
            "{ex},{omega},{},{},{}",
            verdict_name(r.verdict),
            r.min_ccp_eigenvalue.map(|x| format!("{x:e}")).unwrap_or_default(),
            r.note.replace(',', ";")
        ),
        Err(e) => writeln!(csv, "{ex},{omega},error,,{}", e.to_string().replace(',', ";")),
    }
    .unwrap();
}

/// Writes `floquet.csv` and returns it.
pub fn floquet_scan(args: &FloquetArgs) -> Result<String> {
    let out = args.out.clone().unwrap_or_else(|| default_root().join("floquet"));
    let mut csv = String::from("ratio_ex,ratio_omega,verdict,min_ccp_eigenvalue,note\n");
    if args.transpose {
        floquet_row(&mut csv, "", "", floquet_check(&transpose_transfer(), 1.0));
    } else if let Some(path) = &args.model {
        let model = model_from_json(&read_text(path)?)?;
        let transfer = model.transfer_matrix(&PauliBasis::for_dim(model.sys_dim())?)?;
        let omega = format!("{}", args.period_omega);
        floquet_row(&mut csv, "", &omega, floquet_check(&transfer, args.period_omega));
    } else {
        let exs = parse_grid(&args.ex)?;
        let omegas = parse_grid(&args.omega)?;
        let points: Vec<(f64, f64)> = exs.iter().flat_map(|&e| omegas.iter().map(move |&w| (e, w))).collect();
        let results: Vec<Result<FloquetResult>> = {
            use rayon::prelude::*;
            points
                .par_iter()
                .map(|&(ratio_ex, ratio_omega)| {
                    let p = PeriodicLindbladParams {
                        e_z: 1.0,
                        ratio_ex,
                        ratio_omega,
                        gamma: args.gamma,
                    };
                    p.validate().map_err(|e| Error::Config(e.to_string()))?;
                    floquet_check(&one_period_superoperator(&p)?, p.omega())
                })
                .collect()
        };
        for ((e, w), r) in points.iter().zip(results) {
            floquet_row(&mut csv, &format!("{e}"), &format!("{w}"), r);
        }
    }
    let files = vec![("floquet.csv".to_string(), csv.clone())];
    write_all(&out, &files)?;
    write_manifest(&out, "floquet-scan", None, &files)?;
    Ok(csv)
}

pub fn parse_pairs(spec: &str) -> Result<Vec<(Axis, Axis)>> {
    spec.split(',')
        .map(|p| {
            let p = p.trim();
            let mut chars = p.chars().map(|c| Axis::parse(&c.to_string()));
            match (chars.next(), chars.next(), chars.next()) {
                (Some(Some(a)), Some(Some(b)), None) => Ok((a, b)),
                _ => Err(Error::Config(format!("bad axis pair `{p}`"))),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZzReport {
    pub t_min: u32,
    pub t_max: u32,
    pub pairs: Vec<String>,
    pub options: ZzFitOptions,
    pub joint: ZzFit,
    /// `(initial condition id, fit)`; failed fits are omitted.
    pub per_trajectory: Vec<(usize, ZzFit)>,
}

pub fn fit_zz(args: &FitZzArgs) -> Result<ZzReport> {
    let resolved = resolve_config(&args.common)?;
    let out = resolve_out(&args.common, resolved.as_ref())?;
    let cfg = resolved.map(|(c, _)| c);
    let raw = load_dataset(&args.data.clone().unwrap_or_else(|| out.join("train.csv")))?;
    let mut data = raw.pool_subsets()?;
    if let Some(path) = &args.model {
        let model = model_from_json(&read_text(path)?)?;
        let transfer = model.transfer_matrix(&PauliBasis::for_dim(model.sys_dim())?)?;
        for tr in &mut data.trajectories {
            let mut v = tr.initial.clone();
            let mut t_prev = 0;
            for (t, s) in tr.times.iter().zip(tr.states.iter_mut()) {
                v = transfer.propagate_steps(&v, (t - t_prev) as usize);
                t_prev = *t;
                *s = v.clone();
            }
        }
    }
    let last = data
        .trajectories
        .iter()
        .filter_map(|t| t.times.last().copied())
        .max()
        .unwrap_or(0);
    let t_min = args.t_min.or(cfg.as_ref().map(|c| c.eval_t_min)).unwrap_or(1);
    let t_max = args.t_max.or(cfg.as_ref().map(|c| c.t_final)).unwrap_or(last);
    let pairs = match &args.pairs {
        Some(p) => parse_pairs(p)?,
        None => all_axis_pairs(),
    };
    let options = ZzFitOptions {
        weighting: match args.weighted_shots {
            Some(shots) => ZzWeighting::ShotNoise { shots },
            None => ZzWeighting::Uniform,
        },
        ..ZzFitOptions::default()
    };
    let series = pearson_series(&data, &pairs, t_min, t_max)?;
    let joint = fit_zz_coupling(&series, &options)?;
    let per_trajectory = if args.per_trajectory {
        data.trajectories
            .iter()
            .zip(&series)
            .filter_map(|(tr, s)| fit_zz_coupling(std::slice::from_ref(s), &options).ok().map(|f| (tr.id, f)))
            .collect()
    } else {
        Vec::new()
    };
    let report = ZzReport {
        t_min,
        t_max,
        pairs: pairs.iter().map(|(a, b)| format!("{}{}", a.letter(), b.letter())).collect(),
        options,
        joint,
        per_trajectory,
    };
    let files = vec![("zz_fit.json".to_string(), serde_json::to_string_pretty(&report)? + "\n")];
    write_all(&out, &files)?;
    write_manifest(&out, "fit-zz", cfg.as_ref(), &files)?;
    Ok(report)
}

/// Writes `losses.csv` and `report.md` from whatever artifacts exist in the
/// run directory; returns the markdown.
pub fn report(args: &ReportArgs) -> Result<String> {
    let out = args.out.clone().ok_or_else(|| Error::Config("report needs --out".into()))?;
    if !out.is_dir() {
        return Err(Error::MissingData(format!("{} is not a directory", out.display())));
    }
    let mut md = format!("# Run `{}`\n\n", out.display());
    let mut files = Vec::new();

    if let Ok(text) = std::fs::read_to_string(out.join("config.toml")) {
        let cfg = ExperimentConfig::from_toml(&text)?;
        writeln!(
            md,
            "Scenario `{}`: M = {}, r = {}, T = {}, seed {}.\n",
            cfg.scenario.name(),
            cfg.m,
            cfg.r,
            cfg.t_final,
            cfg.seed
        )
        .unwrap();
    }
    if let Ok(text) = std::fs::read_to_string(out.join("train_report.json")) {
        let rep: TrainReport = serde_json::from_str(&text)?;
        let mut csv = String::from("epoch,phase,loss\n");
        let mut epoch = 0;
        md.push_str("## Training\n\n| phase | d_e | epochs | lr | final loss |\n|---|---|---|---|---|\n");
        for (k, phase) in rep.phases.iter().enumerate() {
            for loss in &phase.losses {
                writeln!(csv, "{epoch},{k},{loss:e}").unwrap();
                epoch += 1;
            }
            writeln!(
                md,
                "| {k} | {} | {} | {} | {:.3e} |",
                phase.config.d_e,
                phase.losses.len(),
                phase.config.lr,
                phase.losses.last().copied().unwrap_or(f64::NAN)
            )
            .unwrap();
        }
        writeln!(md, "\nWall time {:.1} s.", rep.wall_time_s).unwrap();
        if let Some(d) = &rep.diverged {
            writeln!(md, "Diverged at epoch {} (loss {:e}).", d.epoch, d.loss).unwrap();
        }
        md.push('\n');
        files.push(("losses.csv".to_string(), csv));
    }
    if let Ok(text) = std::fs::read_to_string(out.join("evaluation.json")) {
        let ev: Evaluation = serde_json::from_str(&text)?;
        let worst = ev.trajectories.iter().map(|t| t.error).fold(0.0, f64::max);
        writeln!(
            md,
            "## Evaluation\n\nε over t = {}..{}: {:.4e} (worst trajectory {:.4e}).\n",
            ev.t_min, ev.t_max, ev.epsilon, worst
        )
        .unwrap();
    }
    if let Ok(text) = std::fs::read_to_string(out.join("zz_fit.json")) {
        let zz: ZzReport = serde_json::from_str(&text)?;
        writeln!(
            md,
            "## ZZ coupling\n\nV = {:.6} ± {:.6} ({} points, t = {}..{}).\n",
            zz.joint.v, zz.joint.sigma, zz.joint.n_points, zz.t_min, zz.t_max
        )
        .unwrap();
    }
    if let Ok(text) = std::fs::read_to_string(out.join("floquet.csv")) {
        let rows: Vec<&str> = text.lines().skip(1).collect();
        let count = |v: &str| rows.iter().filter(|r| r.split(',').nth(2) == Some(v)).count();
        writeln!(
            md,
            "## Floquet scan\n\n{} points: {} exists, {} absent, {} inconclusive, {} errors.\n",
            rows.len(),
            count("exists"),
            count("absent"),
            count("inconclusive"),
            count("error")
        )
        .unwrap();
    }
    files.push(("report.md".to_string(), md.clone()));
    write_all(&out, &files)?;
    Ok(md)
}
