//! Threshold calibration from null run lengths.
//!
//! Null monitors are run to a fixed horizon. After `t_start` the survival
//! function of the alarm time is close to exponential, `S(t) ~ exp(-lambda (t - t_start))`,
//! so a least-squares line through the origin on `(t - t_start, -log S)` gives
//! `lambda` and `ARL = 1 / lambda` without waiting for every trial to alarm.
//!
//! [`NullRecords`] keeps, per trial, every time the detection statistic sets a
//! new running maximum. The alarm time for any threshold `b` is the first
//! record above `b`, so one simulation serves every bisection step.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::model::PathTicks;
use crate::rng::{Purpose, Substreams};

pub const DEFAULT_HORIZON: u64 = 20_000;
pub const DEFAULT_TRIALS: usize = 500;
pub const DEFAULT_TOL_REL: f64 = 0.1;
/// Minimum number of survival points entering the fit.
pub const MIN_FIT_POINTS: usize = 10;
/// Survivors-to-alarm floor: only `S > FLOOR_COUNT / n_trials` enters the fit.
pub const FLOOR_COUNT: f64 = 10.0;
const MAX_CURVE_POINTS: u64 = 1000;

/// Settings for a batch of null monitors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullRunConfig {
    pub horizon: u64,
    pub n_trials: usize,
    /// Alarms are only counted for `t > t_start`.
    pub t_start: u64,
    pub seed: u64,
}

impl Default for NullRunConfig {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            n_trials: DEFAULT_TRIALS,
            t_start: 200,
            seed: 0,
        }
    }
}

impl NullRunConfig {
    fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Domain("need at least one null trial".into()));
        }
        if self.horizon <= self.t_start || self.horizon < 2 * self.t_start {
            return Err(Error::Domain(format!(
                "horizon {} must be at least twice the burn-in {}",
                self.horizon, self.t_start
            )));
        }
        if self.n_trials < 100 {
            log::warn!(
                "only {} null trials; ARL estimates will be noisy",
                self.n_trials
            );
        }
        Ok(())
    }
}

/// Anything that yields per-trial alarm times for a threshold `b`.
///
/// Alarm times are absolute and lie in `(t_start, horizon]`; `None` means the
/// trial was censored at the horizon.
pub trait AlarmSource {
    fn t_start(&self) -> u64;
    fn horizon(&self) -> u64;
    fn n_trials(&self) -> usize;
    fn alarm_times(&self, b: f64) -> Vec<Option<u64>>;
}

/// Running-maximum records of the detection statistic on null paths.
#[derive(Debug, Clone, PartialEq)]
pub struct NullRecords {
    pub config: NullRunConfig,
    /// Per trial, `(t, value)` each time `value` exceeds every earlier
    /// post-`t_start` value.
    pub runs: Vec<Vec<(u64, f64)>>,
}

impl NullRecords {
    pub fn simulate(det: &Detector, config: &NullRunConfig) -> Result<Self> {
        config.validate()?;
        det.validate()?;
        let streams = Substreams::new(config.seed);
        let runs = (0..config.n_trials as u64)
            .into_par_iter()
            .map(|trial| null_trial_records(det, config, &streams, trial))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: *config,
            runs,
        })
    }

    /// Alarm time of one trial at threshold `b`.
    pub fn first_passage(&self, trial: usize, b: f64) -> Option<u64> {
        let recs = &self.runs[trial];
        let i = recs.partition_point(|&(_, v)| v <= b);
        recs.get(i).map(|&(t, _)| t)
    }

    /// Largest statistic value seen after `t_start` in any trial.
    pub fn max_value(&self) -> f64 {
        self.runs
            .iter()
            .filter_map(|r| r.last().map(|&(_, v)| v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest first post-`t_start` value over trials.
    pub fn min_first_value(&self) -> f64 {
        self.runs
            .iter()
            .filter_map(|r| r.first().map(|&(_, v)| v))
            .fold(f64::INFINITY, f64::min)
    }
}

fn null_trial_records(
    det: &Detector,
    config: &NullRunConfig,
    streams: &Substreams,
    trial: u64,
) -> Result<Vec<(u64, f64)>> {
    let mut ticks = PathTicks::null(
        det.n_streams,
        config.horizon,
        streams,
        Purpose::Calibration,
        trial,
    );
    let mut mon = det.monitor()?;
    let mut x = vec![0.0; det.n_streams];
    let mut best = f64::NEG_INFINITY;
    let mut records = Vec::new();
    while let Some(t) = ticks.next_into(&mut x) {
        let v = mon.step(&x)?;
        if t > config.t_start && v > best {
            best = v;
            records.push((t, v));
        }
    }
    Ok(records)
}

impl AlarmSource for NullRecords {
    fn t_start(&self) -> u64 {
        self.config.t_start
    }

    fn horizon(&self) -> u64 {
        self.config.horizon
    }

    fn n_trials(&self) -> usize {
        self.runs.len()
    }

    fn alarm_times(&self, b: f64) -> Vec<Option<u64>> {
        (0..self.runs.len())
            .map(|i| self.first_passage(i, b))
            .collect()
    }
}

/// Empirical `P(T > t)` on a time grid after `t_start`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub t_start: u64,
    pub times: Vec<u64>,
    pub survival: Vec<f64>,
    pub n_trials: usize,
    pub n_alarms: usize,
    /// Sum over trials of `min(T, horizon) - t_start`.
    pub exposure: f64,
}

impl SurvivalCurve {
    pub fn from_alarms(alarms: &[Option<u64>], t_start: u64, horizon: u64) -> Self {
        let mut times_sorted: Vec<u64> = alarms.iter().flatten().copied().collect();
        times_sorted.sort_unstable();
        let n = alarms.len();
        let span = horizon.saturating_sub(t_start);
        let step = span.div_ceil(MAX_CURVE_POINTS).max(1);
        let times: Vec<u64> = (1..=span / step)
            .map(|j| t_start + j * step)
            .chain((!span.is_multiple_of(step)).then_some(horizon))
            .collect();
        let survival = times
            .iter()
            .map(|&t| (n - times_sorted.partition_point(|&a| a <= t)) as f64 / n as f64)
            .collect();
        let exposure = alarms
            .iter()
            .map(|a| (a.unwrap_or(horizon).min(horizon) - t_start) as f64)
            .sum();
        Self {
            t_start,
            times,
            survival,
            n_trials: n,
            n_alarms: times_sorted.len(),
            exposure,
        }
    }

    /// Censored-exponential maximum likelihood rate `alarms / exposure`.
    pub fn mle_rate(&self) -> f64 {
        if self.exposure > 0.0 {
            self.n_alarms as f64 / self.exposure
        } else {
            f64::INFINITY
        }
    }
}

/// Simulates null monitors and tabulates the survival curve at threshold `b`.
pub fn estimate_survival(det: &Detector, b: f64, config: &NullRunConfig) -> Result<SurvivalCurve> {
    let recs = NullRecords::simulate(det, config)?;
    Ok(survival_at(&recs, b))
}

/// Survival curve of any alarm source at threshold `b`.
pub fn survival_at<S: AlarmSource + ?Sized>(src: &S, b: f64) -> SurvivalCurve {
    let curve = SurvivalCurve::from_alarms(&src.alarm_times(b), src.t_start(), src.horizon());
    if curve.n_alarms < 10 {
        log::warn!(
            "only {} alarms at b = {b} before horizon {}; widen the horizon or expect a noisy fit",
            curve.n_alarms,
            src.horizon()
        );
    }
    curve
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub lambda: f64,
    pub r_squared: f64,
    pub arl_estimate: f64,
    pub n_points: usize,
}

/// Least squares through the origin on `(t - t_start, -log S)`, using points
/// with `FLOOR_COUNT / n_trials < S < 1`.
pub fn fit_exponential(curve: &SurvivalCurve) -> Result<ExponentialFit> {
    let floor = FLOOR_COUNT / curve.n_trials as f64;
    let pts: Vec<(f64, f64)> = curve
        .times
        .iter()
        .zip(&curve.survival)
        .filter(|(_, &s)| s > floor && s < 1.0)
        .map(|(&t, &s)| ((t - curve.t_start) as f64, -s.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::FitDegenerate {
            found: pts.len(),
            required: MIN_FIT_POINTS,
        });
    }
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let lambda = sxy / sxx;
    let mean_y = pts.iter().map(|(_, y)| y).sum::<f64>() / pts.len() as f64;
    let ss_res: f64 = pts.iter().map(|(x, y)| (y - lambda * x).powi(2)).sum();
    let ss_tot: f64 = pts.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(ExponentialFit {
        lambda,
        r_squared,
        arl_estimate: 1.0 / lambda,
        n_points: pts.len(),
    })
}

/// How an ARL estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArlMethod {
    ExponentialFit,
    /// Too few survival points for the fit; censored-exponential MLE instead.
    CensoredMle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArlEstimate {
    pub arl: f64,
    /// Present when the exponential fit succeeded.
    pub r_squared: Option<f64>,
    pub method: ArlMethod,
    pub n_alarms: usize,
}

/// ARL from the exponential fit, falling back to the censored MLE.
pub fn arl_estimate(curve: &SurvivalCurve) -> ArlEstimate {
    match fit_exponential(curve) {
        Ok(fit) if fit.lambda > 0.0 => ArlEstimate {
            arl: fit.arl_estimate,
            r_squared: Some(fit.r_squared),
            method: ArlMethod::ExponentialFit,
            n_alarms: curve.n_alarms,
        },
        _ => ArlEstimate {
            arl: 1.0 / curve.mle_rate(),
            r_squared: None,
            method: ArlMethod::CensoredMle,
            n_alarms: curve.n_alarms,
        },
    }
}

fn arl_quiet<S: AlarmSource + ?Sized>(src: &S, b: f64) -> ArlEstimate {
    arl_estimate(&SurvivalCurve::from_alarms(
        &src.alarm_times(b),
        src.t_start(),
        src.horizon(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub target_arl: f64,
    /// Search interval; derived from the data when absent.
    pub bracket: Option<(f64, f64)>,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl CalibrationOptions {
    pub fn new(target_arl: f64) -> Self {
        Self {
            target_arl,
            bracket: None,
            tol_rel: DEFAULT_TOL_REL,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub b: f64,
    pub arl: ArlEstimate,
    pub iterations: usize,
    pub converged: bool,
}

/// Bisection on `b` against an alarm source whose alarm times are
/// nondecreasing in `b`.
pub fn calibrate_threshold<S: AlarmSource + ?Sized>(
    src: &S,
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    let target = opts.target_arl;
    if !(target > 0.0) {
        return Err(Error::Domain(format!(
            "target ARL must be positive, got {target}"
        )));
    }
    let (mut lo, mut hi) = opts.bracket.ok_or(()).or_else(|_| auto_bracket(src))?;
    let arl_lo = arl_quiet(src, lo).arl;
    let arl_hi = arl_quiet(src, hi).arl;
    if !(arl_lo < target && target < arl_hi) {
        return Err(Error::Bracket {
            b_lo: lo,
            b_hi: hi,
            target,
            arl_lo,
            arl_hi,
        });
    }
    let mut best: Option<(f64, ArlEstimate)> = None;
    for it in 1..=opts.max_iter {
        let mid = 0.5 * (lo + hi);
        let est = arl_quiet(src, mid);
        let err = (est.arl - target).abs() / target;
        if best.is_none_or(|(_, e)| err < (e.arl - target).abs() / target) {
            best = Some((mid, est));
        }
        if err <= opts.tol_rel {
            return Ok(Calibration {
                b: mid,
                arl: est,
                iterations: it,
                converged: true,
            });
        }
        if est.arl < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let (b, arl) = best.expect("at least one iteration");
    log::warn!(
        "calibration did not reach tolerance {}; closest ARL {} at b = {b}",
        opts.tol_rel,
        arl.arl
    );
    Ok(Calibration {
        b,
        arl,
        iterations: opts.max_iter,
        converged: false,
    })
}

fn auto_bracket<S: AlarmSource + ?Sized>(src: &S) -> Result<(f64, f64)> {
    // Expand outward until every trial alarms immediately / none alarm.
    let mut lo = -1.0;
    let mut hi = 1.0;
    for _ in 0..64 {
        let all_alarm_first = src
            .alarm_times(lo)
            .iter()
            .all(|a| *a == Some(src.t_start() + 1));
        if all_alarm_first {
            break;
        }
        lo *= 2.0;
    }
    for _ in 0..64 {
        if src.alarm_times(hi).iter().all(Option::is_none) {
            break;
        }
        hi *= 2.0;
    }
    Ok((lo, hi))
}

/// Persisted outcome of a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub detector: String,
    pub n_streams: usize,
    pub stat: String,
    /// Assumed mean (CUSUM) or window (GLR).
    pub stat_param: f64,
    pub pvalue: String,
    pub alpha0: f64,
    pub target_arl: f64,
    pub b: f64,
    pub arl_estimate: f64,
    pub lambda: f64,
    pub r_squared: Option<f64>,
    pub method: ArlMethod,
    pub n_trials: usize,
    pub horizon: u64,
    pub t_start: u64,
    pub seed: u64,
}

impl CalibrationRecord {
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Result of [`calibrate_detector`].
#[derive(Debug, Clone)]
pub struct DetectorCalibration {
    pub calibration: Calibration,
    pub records: NullRecords,
    pub record: CalibrationRecord,
}

/// Simulates null runs for `det` and bisects to the target ARL. A bracket
/// failure triggers one retry with twice the trials.
pub fn calibrate_detector(
    det: &Detector,
    config: &NullRunConfig,
    opts: &CalibrationOptions,
) -> Result<DetectorCalibration> {
    let mut cfg = *config;
    let mut records = NullRecords::simulate(det, &cfg)?;
    let calibration = match calibrate_threshold(&records, opts) {
        Err(Error::Bracket { .. }) => {
            cfg.n_trials *= 2;
            log::warn!(
                "calibration bracket failed; retrying with {} trials",
                cfg.n_trials
            );
            records = NullRecords::simulate(det, &cfg)?;
            calibrate_threshold(&records, opts)?
        }
        other => other?,
    };
    let (stat, stat_param) = match det.stream_kind() {
        crate::stream_stats::StatKind::Lr { mu } => ("lr", mu),
        crate::stream_stats::StatKind::Glr { window } => ("glr", window as f64),
    };
    let pvalue = match det.source {
        crate::pvalue::PValueSource::Table(_) => "table",
        crate::pvalue::PValueSource::Asymptotic(_) => "asymptotic",
    };
    let record = CalibrationRecord {
        detector: det.kind.name().to_string(),
        n_streams: det.n_streams,
        stat: stat.to_string(),
        stat_param,
        pvalue: pvalue.to_string(),
        alpha0: det.alpha0,
        target_arl: opts.target_arl,
        b: calibration.b,
        arl_estimate: calibration.arl.arl,
        lambda: 1.0 / calibration.arl.arl,
        r_squared: calibration.arl.r_squared,
        method: calibration.arl.method,
        n_trials: cfg.n_trials,
        horizon: cfg.horizon,
        t_start: cfg.t_start,
        seed: cfg.seed,
    };
    Ok(DetectorCalibration {
        calibration,
        records,
        record,
    })
}
