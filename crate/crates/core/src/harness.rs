//! Monte Carlo experiments: detection delay and run-length tables, rolling
//! detection probability, threshold sweeps and CSV output.
//!
//! A grid cell is one `(N, sparsity, shift)` combination. All cells share the
//! same master seed, so trial `i` of every cell sees the same pre-change
//! noise, and results do not depend on the order in which cells run.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    arl_estimate, calibrate_detector, survival_at, ArlEstimate, CalibrationOptions,
    CalibrationRecord, NullRecords, NullRunConfig,
};
use crate::detector::{Detector, DetectorKind};
use crate::error::{Error, Result};
use crate::hc_detector::{HcConfig, HcMonitor, DEFAULT_ALPHA0};
use crate::model::{ChangeModel, ChangeTime, PathTicks, Shift, Sparsity};
use crate::pvalue::{
    NullTableCache, NullTableSpec, PValueSource, DEFAULT_BURN_IN, EXPERIMENT_SAMPLES,
};
use crate::rng::{Purpose, Substreams};
use crate::stream_stats::StatKind;
use crate::theory::delay_point;

/// Exact CSV header of [`ExperimentResult::to_csv`].
pub const CSV_HEADER: &str =
    "detector,N,beta_or_I,r_or_mu,sigma,b,n_reps,edd,edd_se,n_censored,arl_est,r2";

const TABLE_SEED_LABEL: u64 = 0x7ab1e;
const CALIBRATION_SEED_LABEL: u64 = 0xca11b;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatChoice {
    Lr,
    Glr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMode {
    Table,
    Asymptotic,
}

/// Flat experiment description. Keys mirror the command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub detector: DetectorKind,
    pub n: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(rename = "I", skip_serializing_if = "Option::is_none")]
    pub affected: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    pub sigma: f64,
    pub tau: u64,
    /// Last monitored tick of each alternative trial.
    pub horizon: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_arl: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    pub alpha0: f64,
    pub window: usize,
    pub stat: StatChoice,
    pub pvalue: PValueMode,
    /// CUSUM design mean; defaults to each cell's true shift.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumed_mu: Option<f64>,
    pub table_samples: usize,
    pub table_horizon: u64,
    pub burn_in: u64,
    pub cal_horizon: u64,
    pub cal_trials: usize,
    pub cal_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            detector: DetectorKind::Hc,
            n: vec![100],
            beta: None,
            affected: None,
            r: None,
            mu: None,
            sigma: 1.0,
            tau: 1,
            horizon: 1000,
            b: None,
            target_arl: None,
            reps: 200,
            seed: 0,
            alpha0: DEFAULT_ALPHA0,
            window: crate::baselines::DEFAULT_WINDOW,
            stat: StatChoice::Lr,
            pvalue: PValueMode::Table,
            assumed_mu: None,
            table_samples: EXPERIMENT_SAMPLES,
            table_horizon: 2000,
            burn_in: DEFAULT_BURN_IN,
            cal_horizon: crate::calibration::DEFAULT_HORIZON,
            cal_trials: crate::calibration::DEFAULT_TRIALS,
            cal_tol: crate::calibration::DEFAULT_TOL_REL,
            out: None,
            cache_dir: None,
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n_streams: usize,
    pub sparsity: Sparsity,
    pub shift: Shift,
}

impl Cell {
    pub fn sparsity_label(&self) -> String {
        match self.sparsity {
            Sparsity::Beta(b) => format!("{b}"),
            Sparsity::Count(k) => format!("{k}"),
        }
    }

    pub fn shift_label(&self) -> String {
        match self.shift {
            Shift::R(r) | Shift::Mu(r) => format!("{r}"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            return Err(Error::Config("grid needs at least one N".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("reps must be at least 1".into()));
        }
        if self.beta.is_some() && self.affected.is_some() {
            return Err(Error::Config("give either beta or I, not both".into()));
        }
        if self.r.is_some() && self.mu.is_some() {
            return Err(Error::Config("give either r or mu, not both".into()));
        }
        if self.tau == 0 {
            return Err(Error::Config("tau is 1-based".into()));
        }
        if self.tau > self.horizon {
            return Err(Error::Config(format!(
                "tau {} lies beyond the horizon {}",
                self.tau, self.horizon
            )));
        }
        Ok(())
    }

    /// Grid cells in row-major order `N x sparsity x shift`.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        self.validate()?;
        let sparsities: Vec<Sparsity> = match (&self.beta, &self.affected) {
            (Some(b), None) => b.iter().map(|&x| Sparsity::Beta(x)).collect(),
            (None, Some(k)) => k.iter().map(|&x| Sparsity::Count(x)).collect(),
            _ => return Err(Error::Config("give a sparsity grid via beta or I".into())),
        };
        let shifts: Vec<Shift> = match (&self.r, &self.mu) {
            (Some(r), None) => r.iter().map(|&x| Shift::R(x)).collect(),
            (None, Some(m)) => m.iter().map(|&x| Shift::Mu(x)).collect(),
            _ => return Err(Error::Config("give a shift grid via r or mu".into())),
        };
        if sparsities.is_empty() || shifts.is_empty() {
            return Err(Error::Config("grid is empty".into()));
        }
        let mut cells = Vec::new();
        for &n_streams in &self.n {
            for &sparsity in &sparsities {
                for &shift in &shifts {
                    cells.push(Cell {
                        n_streams,
                        sparsity,
                        shift,
                    });
                }
            }
        }
        Ok(cells)
    }

    pub fn model(&self, cell: &Cell) -> Result<ChangeModel> {
        let m = ChangeModel {
            n_streams: cell.n_streams,
            sparsity: cell.sparsity,
            shift: cell.shift,
            sigma: self.sigma,
            tau: ChangeTime::At(self.tau),
            horizon: self.horizon,
        };
        m.validate()?;
        Ok(m)
    }

    /// Per-stream statistic for a cell.
    pub fn stat_kind(&self, cell: &Cell) -> Result<StatKind> {
        match self.stat {
            StatChoice::Glr => Ok(StatKind::Glr {
                window: self.window,
            }),
            StatChoice::Lr => {
                let mu = match self.assumed_mu {
                    Some(m) => m,
                    None => self.model(cell)?.mu()?,
                };
                if !(mu > 0.0) {
                    return Err(Error::Config(format!(
                        "CUSUM needs a positive design mean; cell shift gives {mu}, set assumed_mu"
                    )));
                }
                Ok(StatKind::Lr { mu })
            }
        }
    }

    pub fn table_spec(&self, kind: StatKind) -> NullTableSpec {
        let seed = Substreams::new(self.seed).child(TABLE_SEED_LABEL).seed();
        NullTableSpec::new(
            kind,
            self.table_horizon.max(self.burn_in),
            self.table_samples,
            self.burn_in,
            seed,
        )
    }

    pub fn pvalue_source(&self, kind: StatKind, cache: &NullTableCache) -> Result<PValueSource> {
        match self.pvalue {
            PValueMode::Asymptotic => Ok(PValueSource::Asymptotic(kind)),
            PValueMode::Table => Ok(PValueSource::Table(
                cache.get_or_build(&self.table_spec(kind))?,
            )),
        }
    }

    pub fn detector(&self, cell: &Cell, cache: &NullTableCache) -> Result<Detector> {
        let kind = self.stat_kind(cell)?;
        let source = self.pvalue_source(kind, cache)?;
        let mut det = Detector::new(self.detector, cell.n_streams, source)?;
        det.alpha0 = self.alpha0;
        det.window = self.window;
        det.validate()?;
        Ok(det)
    }

    pub fn null_run_config(&self) -> NullRunConfig {
        NullRunConfig {
            horizon: self.cal_horizon,
            n_trials: self.cal_trials,
            t_start: self.burn_in,
            seed: Substreams::new(self.seed)
                .child(CALIBRATION_SEED_LABEL)
                .seed(),
        }
    }

    pub fn cache(&self) -> Result<NullTableCache> {
        match &self.cache_dir {
            Some(d) => NullTableCache::persistent(d),
            None => Ok(NullTableCache::in_memory()),
        }
    }
}

/// The threshold a cell runs with, and its null ARL when known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub b: f64,
    pub arl: Option<ArlEstimate>,
}

fn calibration_key(det: &Detector) -> String {
    let stat = match det.stream_kind() {
        StatKind::Lr { mu } => format!("lr{:016x}", mu.to_bits()),
        StatKind::Glr { window } => format!("glr{window}"),
    };
    format!("{}-{}-{stat}", det.kind, det.n_streams)
}

/// Fixed `b`, or a calibrated one when `target_arl` is set.
pub fn resolve_threshold(cfg: &ExperimentConfig, det: &Detector) -> Result<Threshold> {
    match (cfg.b, cfg.target_arl) {
        (Some(b), None) => Ok(Threshold { b, arl: None }),
        (None, Some(target)) => {
            let opts = CalibrationOptions {
                tol_rel: cfg.cal_tol,
                ..CalibrationOptions::new(target)
            };
            log::info!(
                "calibrating {} at N = {} to ARL {target}",
                det.kind,
                det.n_streams
            );
            let cal = calibrate_detector(det, &cfg.null_run_config(), &opts)?;
            log::info!(
                "b = {} (ARL {}, R2 {:?})",
                cal.calibration.b,
                cal.calibration.arl.arl,
                cal.calibration.arl.r_squared
            );
            Ok(Threshold {
                b: cal.calibration.b,
                arl: Some(cal.calibration.arl),
            })
        }
        (Some(_), Some(_)) => Err(Error::Config(
            "give either b or target_arl, not both".into(),
        )),
        (None, None) => Err(Error::Config("give a threshold b or a target_arl".into())),
    }
}

/// Delay `T - tau + 1` of one trial, or `None` when no alarm occurs at or
/// after `tau` within the horizon. Crossings before `tau` are ignored.
pub fn detection_delay(
    det: &Detector,
    model: &ChangeModel,
    streams: &Substreams,
    trial: u64,
    b: f64,
) -> Result<Option<u64>> {
    let tau = match model.tau {
        ChangeTime::At(t) => t,
        ChangeTime::Never => 1,
    };
    let mut ticks = PathTicks::new(model, streams, trial)?;
    let mut mon = det.monitor()?;
    let mut x = vec![0.0; model.n_streams];
    while let Some(t) = ticks.next_into(&mut x) {
        let v = mon.step(&x)?;
        if t >= tau && v > b {
            return Ok(Some(t - tau + 1));
        }
    }
    Ok(None)
}

/// Running-maximum records of the statistic from tick `from` onward,
/// stopping after the first record above `stop_above`.
pub fn trajectory_records(
    det: &Detector,
    ticks: &mut PathTicks,
    from: u64,
    stop_above: f64,
) -> Result<Vec<(u64, f64)>> {
    let mut mon = det.monitor()?;
    let mut x = vec![0.0; ticks.n_streams()];
    let mut best = f64::NEG_INFINITY;
    let mut recs = Vec::new();
    while let Some(t) = ticks.next_into(&mut x) {
        let v = mon.step(&x)?;
        if t >= from && v > best {
            best = v;
            recs.push((t, v));
            if v > stop_above {
                break;
            }
        }
    }
    Ok(recs)
}

fn first_above(recs: &[(u64, f64)], b: f64) -> Option<u64> {
    let i = recs.partition_point(|&(_, v)| v <= b);
    recs.get(i).map(|&(t, _)| t)
}

/// Mean and standard error (`sd / sqrt(n)`).
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub detector: DetectorKind,
    pub cell: Cell,
    pub sigma: f64,
    pub b: f64,
    pub n_reps: usize,
    /// Mean delay with censored trials counted at the horizon; `None` when
    /// every trial is censored.
    pub edd: Option<f64>,
    pub edd_se: Option<f64>,
    pub n_alarms: usize,
    pub n_censored: usize,
    pub arl_est: Option<f64>,
    pub r2: Option<f64>,
    pub delta_star: Option<u64>,
    /// Per-trial delays, censored trials as `None`.
    pub delays: Vec<Option<u64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "--".to_string(), |x| format!("{x}"))
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.detector,
                c.cell.n_streams,
                c.cell.sparsity_label(),
                c.cell.shift_label(),
                c.sigma,
                c.b,
                c.n_reps,
                fmt_opt(c.edd),
                fmt_opt(c.edd_se),
                c.n_censored,
                fmt_opt(c.arl_est),
                fmt_opt(c.r2),
            )
            .expect("write to string");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn delta_star_for(cfg: &ExperimentConfig, cell: &Cell) -> Option<u64> {
    match (cell.sparsity, cell.shift) {
        (Sparsity::Beta(beta), Shift::R(r)) => {
            delay_point(r, beta, cfg.sigma).ok().map(|p| p.delta_star)
        }
        _ => None,
    }
}

/// Thresholds resolved once per distinct detector within an experiment.
struct ThresholdCache<'a> {
    cfg: &'a ExperimentConfig,
    map: HashMap<String, Threshold>,
}

impl<'a> ThresholdCache<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        Self {
            cfg,
            map: HashMap::new(),
        }
    }

    fn get(&mut self, det: &Detector) -> Result<Threshold> {
        let key = calibration_key(det);
        if let Some(t) = self.map.get(&key) {
            return Ok(*t);
        }
        let t = resolve_threshold(self.cfg, det)?;
        self.map.insert(key, t);
        Ok(t)
    }
}

/// Expected detection delay for every grid cell.
pub fn run_edd_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let cache = cfg.cache()?;
    let mut thresholds = ThresholdCache::new(cfg);
    let streams = Substreams::new(cfg.seed);
    let mut result = ExperimentResult::default();
    for cell in cfg.cells()? {
        let det = cfg.detector(&cell, &cache)?;
        let threshold = thresholds.get(&det)?;
        let model = cfg.model(&cell)?;
        log::info!(
            "EDD cell N = {}, sparsity {}, shift {} ({} reps)",
            cell.n_streams,
            cell.sparsity_label(),
            cell.shift_label(),
            cfg.reps
        );
        let delays = (0..cfg.reps as u64)
            .into_par_iter()
            .map(|trial| detection_delay(&det, &model, &streams, trial, threshold.b))
            .collect::<Result<Vec<_>>>()?;
        let censored_delay = (cfg.horizon - cfg.tau + 1) as f64;
        let values: Vec<f64> = delays
            .iter()
            .map(|d| d.map_or(censored_delay, |v| v as f64))
            .collect();
        let n_alarms = delays.iter().filter(|d| d.is_some()).count();
        let (edd, edd_se) = if n_alarms == 0 {
            (None, None)
        } else {
            let (m, se) = mean_se(&values);
            (Some(m), Some(se))
        };
        result.cells.push(CellResult {
            detector: cfg.detector,
            cell,
            sigma: cfg.sigma,
            b: threshold.b,
            n_reps: cfg.reps,
            edd,
            edd_se,
            n_alarms,
            n_censored: cfg.reps - n_alarms,
            arl_est: threshold.arl.map(|a| a.arl),
            r2: threshold.arl.and_then(|a| a.r_squared),
            delta_star: delta_star_for(cfg, &cell),
            delays,
        });
    }
    if let Some(path) = &cfg.out {
        result.write_csv(path)?;
    }
    Ok(result)
}

/// Calibrates every distinct detector in the grid to `target_arl` and
/// returns the persisted records, one per distinct `(N, statistic)`.
pub fn calibrate_cells(cfg: &ExperimentConfig) -> Result<Vec<CalibrationRecord>> {
    let target = cfg
        .target_arl
        .ok_or_else(|| Error::Config("calibration needs target_arl".into()))?;
    let cache = cfg.cache()?;
    let opts = CalibrationOptions {
        tol_rel: cfg.cal_tol,
        ..CalibrationOptions::new(target)
    };
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for cell in cfg.cells()? {
        let det = cfg.detector(&cell, &cache)?;
        let key = calibration_key(&det);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        log::info!(
            "calibrating {} at N = {} to ARL {target}",
            det.kind,
            det.n_streams
        );
        out.push(calibrate_detector(&det, &cfg.null_run_config(), &opts)?.record);
    }
    Ok(out)
}

/// Null ARL per cell via the exponential-tail fit (or calibration when a
/// target is given).
pub fn run_arl_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let cache = cfg.cache()?;
    let mut result = ExperimentResult::default();
    let mut done: HashMap<String, (f64, ArlEstimate)> = HashMap::new();
    for cell in cfg.cells()? {
        let det = cfg.detector(&cell, &cache)?;
        let key = calibration_key(&det);
        let (b, arl) = match done.get(&key) {
            Some(v) => *v,
            None => {
                let v = match (cfg.b, cfg.target_arl) {
                    (Some(b), None) => {
                        log::info!(
                            "null runs for {} at N = {}, b = {b}",
                            det.kind,
                            det.n_streams
                        );
                        let recs = NullRecords::simulate(&det, &cfg.null_run_config())?;
                        (b, arl_estimate(&survival_at(&recs, b)))
                    }
                    _ => {
                        let t = resolve_threshold(cfg, &det)?;
                        (t.b, t.arl.expect("calibrated threshold has an ARL"))
                    }
                };
                done.insert(key, v);
                v
            }
        };
        result.cells.push(CellResult {
            detector: cfg.detector,
            cell,
            sigma: cfg.sigma,
            b,
            n_reps: cfg.cal_trials,
            edd: None,
            edd_se: None,
            n_alarms: arl.n_alarms,
            n_censored: cfg.cal_trials.saturating_sub(arl.n_alarms),
            arl_est: Some(arl.arl),
            r2: arl.r_squared,
            delta_star: delta_star_for(cfg, &cell),
            delays: Vec::new(),
        });
    }
    if let Some(path) = &cfg.out {
        result.write_csv(path)?;
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollingPoint {
    pub t: u64,
    pub null_quantile: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingCurve {
    pub points: Vec<RollingPoint>,
    /// `tau + Delta*` when the cell is given as `(beta, r)`.
    pub marker: Option<u64>,
}

impl RollingCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,null_quantile,probability,marker\n");
        for p in &self.points {
            let mark = self.marker == Some(p.t);
            writeln!(
                out,
                "{},{},{},{}",
                p.t, p.null_quantile, p.probability, mark as u8
            )
            .expect("write to string");
        }
        out
    }
}

fn trajectory(det: &Detector, mut ticks: PathTicks) -> Result<Vec<f64>> {
    let mut mon = det.monitor()?;
    let mut x = vec![0.0; ticks.n_streams()];
    let mut out = Vec::new();
    while ticks.next_into(&mut x).is_some() {
        out.push(mon.step(&x)?);
    }
    Ok(out)
}

/// Per tick, the fraction of alternative trajectories above the null
/// `quantile` of the statistic at that tick.
pub fn rolling_detection_probability(
    cfg: &ExperimentConfig,
    cell: &Cell,
    quantile: f64,
) -> Result<RollingCurve> {
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::Domain(format!(
            "quantile must lie in (0, 1), got {quantile}"
        )));
    }
    let cache = cfg.cache()?;
    let det = cfg.detector(cell, &cache)?;
    let model = cfg.model(cell)?;
    let streams = Substreams::new(cfg.seed);
    let null: Vec<Vec<f64>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|i| {
            trajectory(
                &det,
                PathTicks::null(
                    cell.n_streams,
                    cfg.horizon,
                    &streams,
                    Purpose::Calibration,
                    i,
                ),
            )
        })
        .collect::<Result<_>>()?;
    let alt: Vec<Vec<f64>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|i| trajectory(&det, PathTicks::new(&model, &streams, i)?))
        .collect::<Result<_>>()?;
    let idx = ((quantile * cfg.reps as f64).ceil() as usize).clamp(1, cfg.reps) - 1;
    let mut column = vec![0.0; cfg.reps];
    let points = (0..cfg.horizon as usize)
        .map(|ti| {
            for (c, path) in column.iter_mut().zip(&null) {
                *c = path[ti];
            }
            column.sort_unstable_by(|a, b| a.total_cmp(b));
            let q = column[idx];
            let hits = alt.iter().filter(|p| p[ti] > q).count();
            RollingPoint {
                t: ti as u64 + 1,
                null_quantile: q,
                probability: hits as f64 / cfg.reps as f64,
            }
        })
        .collect();
    let marker = delta_star_for(cfg, cell).map(|d| cfg.tau + d);
    Ok(RollingCurve { points, marker })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub b: f64,
    /// Mean null run length, censored trials counted at the horizon.
    pub arl: f64,
    pub arl_se: f64,
    pub null_censored: usize,
    pub edd: f64,
    pub edd_se: f64,
    pub alt_censored: usize,
}

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("b,arl,arl_se,null_censored,edd,edd_se,alt_censored\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.b, p.arl, p.arl_se, p.null_censored, p.edd, p.edd_se, p.alt_censored
        )
        .expect("write to string");
    }
    out
}

/// Paired run length and detection delay for each threshold, all computed
/// from the same null and alternative trajectories.
pub fn phase_transition_sweep(
    cfg: &ExperimentConfig,
    cell: &Cell,
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>> {
    let cache = cfg.cache()?;
    let det = cfg.detector(cell, &cache)?;
    let model = cfg.model(cell)?;
    let streams = Substreams::new(cfg.seed);
    let horizon = cfg.horizon;
    let top = thresholds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    log::info!(
        "sweep: {} null and {} alternative trajectories to t = {horizon}",
        cfg.reps,
        cfg.reps
    );
    let null: Vec<Vec<(u64, f64)>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut ticks =
                PathTicks::null(cell.n_streams, horizon, &streams, Purpose::Calibration, i);
            trajectory_records(&det, &mut ticks, 1, top)
        })
        .collect::<Result<_>>()?;
    let alt: Vec<Vec<(u64, f64)>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut ticks = PathTicks::new(&model, &streams, i)?;
            trajectory_records(&det, &mut ticks, cfg.tau, top)
        })
        .collect::<Result<_>>()?;
    Ok(thresholds
        .iter()
        .map(|&b| {
            let rl: Vec<f64> = null
                .iter()
                .map(|r| first_above(r, b).unwrap_or(horizon) as f64)
                .collect();
            let dd: Vec<f64> = alt
                .iter()
                .map(|r| (first_above(r, b).unwrap_or(horizon) - cfg.tau + 1) as f64)
                .collect();
            let (arl, arl_se) = mean_se(&rl);
            let (edd, edd_se) = mean_se(&dd);
            SweepPoint {
                b,
                arl,
                arl_se,
                null_censored: null.iter().filter(|r| first_above(r, b).is_none()).count(),
                edd,
                edd_se,
                alt_censored: alt.iter().filter(|r| first_above(r, b).is_none()).count(),
            }
        })
        .collect())
}

/// Outcome of running the HC rule on one alternative trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub alarm_time: Option<u64>,
    pub hc_value: f64,
    pub selected: Vec<usize>,
    pub affected: Vec<usize>,
}

/// Runs HC on trial `trial` of `cell` until it alarms and reports the
/// selected streams at that time (or at the horizon).
pub fn localization_demo(
    cfg: &ExperimentConfig,
    cell: &Cell,
    b: f64,
    trial: u64,
) -> Result<Localization> {
    let cache = cfg.cache()?;
    let kind = cfg.stat_kind(cell)?;
    let source = cfg.pvalue_source(kind, &cache)?;
    let model = cfg.model(cell)?;
    let streams = Substreams::new(cfg.seed);
    let mut ticks = PathTicks::new(&model, &streams, trial)?;
    let mut mon = HcMonitor::new(cell.n_streams, source, HcConfig::new(cfg.alpha0, b)?)?;
    let mut x = vec![0.0; cell.n_streams];
    let mut last = None;
    while let Some(t) = ticks.next_into(&mut x) {
        let (res, alarm) = mon.step(&x)?;
        let stop = alarm && t >= cfg.tau;
        last = Some((t, res));
        if stop {
            let (t, res) = last.expect("just set");
            return Ok(Localization {
                alarm_time: Some(t),
                hc_value: res.value,
                selected: res.selected,
                affected: ticks.affected_set().to_vec(),
            });
        }
    }
    let (_, res) = last.ok_or_else(|| Error::Domain("empty horizon".into()))?;
    Ok(Localization {
        alarm_time: None,
        hc_value: res.value,
        selected: res.selected,
        affected: ticks.affected_set().to_vec(),
    })
}
