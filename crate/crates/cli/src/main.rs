use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sparse_hc::calibration::CalibrationRecord;
use sparse_hc::detector::DetectorKind;
use sparse_hc::harness::{
    calibrate_cells, localization_demo, phase_transition_sweep, rolling_detection_probability,
    run_arl_experiment, run_edd_experiment, sweep_to_csv, ExperimentConfig, PValueMode, StatChoice,
};
use sparse_hc::model::{generate_paths, ChangeModel, ChangeTime};
use sparse_hc::rng::Substreams;
use sparse_hc::theory::{delay_point, theory_grid_csv};

#[derive(Parser, Debug)]
#[command(
    name = "sparse-hc",
    version,
    about = "Sparse multi-stream change detection with Higher Criticism"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate the threshold b to a target ARL.
    Calibrate(Common),
    /// Simulate one trial of observations and write them as CSV.
    Simulate(Common),
    /// Expected detection delay over a grid of cells.
    EddTable(Common),
    /// Null ARL of a fixed threshold.
    Arl(Common),
    /// Rolling empirical detection probability against the null quantile.
    Rolling {
        #[command(flatten)]
        common: Common,
        /// Null quantile defining the per-tick threshold
        #[arg(long, default_value_t = 0.95)]
        quantile: f64,
    },
    /// Paired (ARL, EDD) over a list of thresholds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma list of thresholds b
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<f64>,
    },
    /// Detection boundary rho* and minimal delay Delta*.
    Theory {
        /// Signal strengths (comma list)
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<f64>,
        /// Sparsity exponents in (1/2, 1)
        #[arg(long, value_delimiter = ',', required = true)]
        beta: Vec<f64>,
        /// Post-change standard deviations
        #[arg(long, value_delimiter = ',', default_value = "1")]
        sigma: Vec<f64>,
        /// Write the grid as CSV here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run HC on one trial and report the streams it selects at the alarm.
    Localize {
        #[command(flatten)]
        common: Common,
        /// Trial index to replay
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StatArg {
    Lr,
    Glr,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PValueArg {
    Table,
    Asymptotic,
}

/// Flags shared by the experiment subcommands. Each overrides the matching
/// key of `--config`.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML file with the same keys as the flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// hc, xs, chan, chen-chan, logp-sum, logp-min or ssbh
    #[arg(long)]
    detector: Option<String>,
    /// Number of streams (comma list)
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Sparsity exponents; each stream changes with probability N^-beta
    #[arg(long, value_delimiter = ',', conflicts_with = "affected")]
    beta: Option<Vec<f64>>,
    /// Exact affected-set sizes
    #[arg(long = "I", id = "affected", value_delimiter = ',')]
    affected: Option<Vec<usize>>,
    /// Signal strengths; mu = sqrt(2 r ln N)
    #[arg(long, value_delimiter = ',', conflicts_with = "mu")]
    r: Option<Vec<f64>>,
    /// Direct post-change means
    #[arg(long, value_delimiter = ',')]
    mu: Option<Vec<f64>>,
    /// Post-change standard deviation
    #[arg(long)]
    sigma: Option<f64>,
    /// First post-change tick (1-based)
    #[arg(long)]
    tau: Option<u64>,
    /// Last monitored tick of each trial
    #[arg(long)]
    horizon: Option<u64>,
    /// Fixed alarm threshold
    #[arg(long, allow_negative_numbers = true, conflicts_with = "target_arl")]
    b: Option<f64>,
    /// Calibrate b to this null ARL
    #[arg(long)]
    target_arl: Option<f64>,
    /// Trials per cell
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// HC scan fraction
    #[arg(long)]
    alpha0: Option<f64>,
    /// GLR window
    #[arg(long)]
    window: Option<usize>,
    /// Per-stream statistic
    #[arg(long, value_enum)]
    stat: Option<StatArg>,
    /// P-values from a simulated null table or the tail approximation
    #[arg(long, value_enum)]
    pvalue: Option<PValueArg>,
    /// CUSUM design mean (default: the cell shift)
    #[arg(long)]
    assumed_mu: Option<f64>,
    /// Null paths per P-value table
    #[arg(long)]
    table_samples: Option<usize>,
    /// Tick of the steady-state table column
    #[arg(long)]
    table_horizon: Option<u64>,
    /// Ticks with their own table column; also the calibration start
    #[arg(long)]
    burn_in: Option<u64>,
    /// Null run length for calibration
    #[arg(long)]
    cal_horizon: Option<u64>,
    /// Null runs for calibration
    #[arg(long)]
    cal_trials: Option<usize>,
    /// Relative ARL tolerance of the calibration
    #[arg(long)]
    cal_tol: Option<f64>,
    /// Directory for persisted P-value tables
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

macro_rules! set {
    ($cfg:ident, $src:ident, $($field:ident),*) => {
        $(if let Some(v) = $src.$field.clone() { $cfg.$field = v; })*
    };
}

macro_rules! set_opt {
    ($cfg:ident, $src:ident, $($field:ident),*) => {
        $(if let Some(v) = $src.$field.clone() { $cfg.$field = Some(v); })*
    };
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)
                .with_context(|| format!("loading config {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.detector {
            cfg.detector = d.parse::<DetectorKind>()?;
        }
        set!(cfg, self, n, sigma, tau, horizon, reps, seed, alpha0, window);
        set!(
            cfg,
            self,
            table_samples,
            table_horizon,
            burn_in,
            cal_horizon,
            cal_trials,
            cal_tol
        );
        set_opt!(cfg, self, out, cache_dir, assumed_mu);
        if self.beta.is_some() {
            cfg.beta = self.beta.clone();
            cfg.affected = None;
        }
        if self.affected.is_some() {
            cfg.affected = self.affected.clone();
            cfg.beta = None;
        }
        if self.r.is_some() {
            cfg.r = self.r.clone();
            cfg.mu = None;
        }
        if self.mu.is_some() {
            cfg.mu = self.mu.clone();
            cfg.r = None;
        }
        if self.b.is_some() {
            cfg.b = self.b;
            cfg.target_arl = None;
        }
        if self.target_arl.is_some() {
            cfg.target_arl = self.target_arl;
            cfg.b = None;
        }
        if let Some(s) = self.stat {
            cfg.stat = match s {
                StatArg::Lr => StatChoice::Lr,
                StatArg::Glr => StatChoice::Glr,
            };
        }
        if let Some(p) = self.pvalue {
            cfg.pvalue = match p {
                PValueArg::Table => PValueMode::Table,
                PValueArg::Asymptotic => PValueMode::Asymptotic,
            };
        }
        Ok(cfg)
    }

    /// Config for commands that do not need a sparsity grid.
    fn null_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = self.config()?;
        if cfg.beta.is_none() && cfg.affected.is_none() {
            cfg.affected = Some(vec![0]);
        }
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, data: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, data).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(data.as_bytes())?;
            Ok(())
        }
    }
}

/// One-line summary: stdout when data went to a file, stderr otherwise.
fn summary(out: Option<&Path>, line: &str) {
    if out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CalibrationFile {
    calibration: Vec<CalibrationRecord>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(c) => {
            set_threads(c.threads)?;
            let cfg = c.null_config()?;
            if cfg.target_arl.is_none() {
                bail!("calibrate needs --target-arl");
            }
            let records = calibrate_cells(&cfg)?;
            let text = toml::to_string(&CalibrationFile {
                calibration: records.clone(),
            })?;
            emit(cfg.out.as_deref(), &text)?;
            for r in &records {
                summary(
                    cfg.out.as_deref(),
                    &format!(
                        "detector={} N={} b={} arl={} r2={}",
                        r.detector,
                        r.n_streams,
                        r.b,
                        r.arl_estimate,
                        r.r_squared.map_or("--".into(), |v| v.to_string())
                    ),
                );
            }
        }
        Command::Simulate(c) => {
            let cfg = c.config()?;
            let cell = cfg.cells()?[0];
            let mut model: ChangeModel = cfg.model(&cell)?;
            if let Some(t) = c.tau {
                model.tau = ChangeTime::At(t);
            }
            let batch = generate_paths(&model, &Substreams::new(cfg.seed), 0)?;
            let mut text = String::from("t");
            for n in 0..model.n_streams {
                text.push_str(&format!(",x{n}"));
            }
            text.push('\n');
            for t in 1..=model.horizon {
                text.push_str(&t.to_string());
                for v in batch.tick(t) {
                    text.push_str(&format!(",{v}"));
                }
                text.push('\n');
            }
            emit(cfg.out.as_deref(), &text)?;
            summary(
                cfg.out.as_deref(),
                &format!(
                    "simulated N={} horizon={} affected={:?}",
                    model.n_streams, model.horizon, batch.affected_set
                ),
            );
        }
        Command::EddTable(c) => {
            set_threads(c.threads)?;
            let mut cfg = c.config()?;
            let out = cfg.out.take();
            let res = run_edd_experiment(&cfg)?;
            emit(out.as_deref(), &res.to_csv())?;
            for cell in &res.cells {
                summary(
                    out.as_deref(),
                    &format!(
                        "N={} beta_or_I={} r_or_mu={} b={} edd={} censored={}",
                        cell.cell.n_streams,
                        cell.cell.sparsity_label(),
                        cell.cell.shift_label(),
                        cell.b,
                        cell.edd.map_or("--".into(), |v| v.to_string()),
                        cell.n_censored
                    ),
                );
            }
        }
        Command::Arl(c) => {
            set_threads(c.threads)?;
            let mut cfg = c.null_config()?;
            let out = cfg.out.take();
            let res = run_arl_experiment(&cfg)?;
            emit(out.as_deref(), &res.to_csv())?;
            for cell in &res.cells {
                summary(
                    out.as_deref(),
                    &format!(
                        "N={} b={} arl={} r2={}",
                        cell.cell.n_streams,
                        cell.b,
                        cell.arl_est.map_or("--".into(), |v| v.to_string()),
                        cell.r2.map_or("--".into(), |v| v.to_string())
                    ),
                );
            }
        }
        Command::Rolling { common, quantile } => {
            set_threads(common.threads)?;
            let cfg = common.config()?;
            let cell = cfg.cells()?[0];
            let curve = rolling_detection_probability(&cfg, &cell, quantile)?;
            emit(cfg.out.as_deref(), &curve.to_csv())?;
            let marker = curve.marker.map_or("--".into(), |m| m.to_string());
            summary(
                cfg.out.as_deref(),
                &format!("rolling points={} marker={marker}", curve.points.len()),
            );
        }
        Command::Sweep { common, thresholds } => {
            set_threads(common.threads)?;
            let cfg = common.config()?;
            let cell = cfg.cells()?[0];
            let points = phase_transition_sweep(&cfg, &cell, &thresholds)?;
            emit(cfg.out.as_deref(), &sweep_to_csv(&points))?;
            summary(
                cfg.out.as_deref(),
                &format!("sweep thresholds={}", points.len()),
            );
        }
        Command::Theory {
            r,
            beta,
            sigma,
            out,
        } => {
            if r.len() == 1 && beta.len() == 1 && sigma.len() == 1 && out.is_none() {
                let p = delay_point(r[0], beta[0], sigma[0])?;
                println!(
                    "rho_star={} delta_star={} on_integer_boundary={}",
                    p.rho_star, p.delta_star, p.on_integer_boundary
                );
            } else {
                let csv = theory_grid_csv(&beta, &sigma, &r)?;
                emit(out.as_deref(), &csv)?;
                summary(
                    out.as_deref(),
                    &format!("theory rows={}", csv.lines().count() - 1),
                );
            }
        }
        Command::Localize { common, trial } => {
            let mut cfg = common.config()?;
            cfg.detector = DetectorKind::Hc;
            let b = cfg.b.context("localize needs --b")?;
            let cell = cfg.cells()?[0];
            let loc = localization_demo(&cfg, &cell, b, trial)?;
            let hits = loc
                .selected
                .iter()
                .filter(|i| loc.affected.contains(i))
                .count();
            let text = format!(
                "alarm_time={} hc={} selected={:?} affected={:?} true_positives={hits}\n",
                loc.alarm_time.map_or("--".into(), |t| t.to_string()),
                loc.hc_value,
                loc.selected,
                loc.affected
            );
            emit(cfg.out.as_deref(), &text)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
