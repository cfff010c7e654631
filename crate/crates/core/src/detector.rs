//! A uniform interface over HC and the baselines: every detector turns a tick
//! of `N` observations into one scalar, and stops at the first tick where that
//! scalar exceeds its threshold `b`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    chan_stat_with, chen_chan_values, default_lambda2, default_p0, ssbh_sorted, xs_stat_with,
    WindowedWMatrix, DEFAULT_LAMBDA_HORIZON, DEFAULT_WINDOW,
};
use crate::error::{Error, Result};
use crate::hc_detector::{HcScan, DEFAULT_ALPHA0};
use crate::pvalue::PValueSource;
use crate::stream_stats::{CusumState, GlrState, StatKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Hc,
    Xs,
    Chan,
    #[serde(alias = "chen-chan")]
    ChenChan,
    #[serde(alias = "logp-sum")]
    LogpSum,
    #[serde(alias = "logp-min")]
    LogpMin,
    Ssbh,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 7] = [
        DetectorKind::Hc,
        DetectorKind::Xs,
        DetectorKind::Chan,
        DetectorKind::ChenChan,
        DetectorKind::LogpSum,
        DetectorKind::LogpMin,
        DetectorKind::Ssbh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Hc => "hc",
            DetectorKind::Xs => "xs",
            DetectorKind::Chan => "chan",
            DetectorKind::ChenChan => "chen_chan",
            DetectorKind::LogpSum => "logp_sum",
            DetectorKind::LogpMin => "logp_min",
            DetectorKind::Ssbh => "ssbh",
        }
    }

    /// Whether the detector combines P-values (as opposed to raw GLR terms).
    pub fn uses_pvalues(self) -> bool {
        !matches!(self, DetectorKind::Xs | DetectorKind::Chan)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = DetectorKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown detector '{s}', expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// A fully parameterized detector. Thresholds are supplied separately.
#[derive(Debug, Clone)]
pub struct Detector {
    pub kind: DetectorKind,
    pub n_streams: usize,
    /// P-value source for P-value combiners; ignored by XS and Chan.
    pub source: PValueSource,
    pub alpha0: f64,
    /// GLR window for XS and Chan.
    pub window: usize,
    pub p0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Detector {
    /// Detector with default hyperparameters.
    pub fn new(kind: DetectorKind, n_streams: usize, source: PValueSource) -> Result<Self> {
        let d = Self {
            kind,
            n_streams,
            source,
            alpha0: DEFAULT_ALPHA0,
            window: DEFAULT_WINDOW,
            p0: default_p0(n_streams),
            lambda1: 1.0,
            lambda2: default_lambda2(DEFAULT_LAMBDA_HORIZON),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_streams < 2 {
            return Err(Error::Domain(format!(
                "need at least two streams, got {}",
                self.n_streams
            )));
        }
        match self.kind {
            DetectorKind::Hc => {
                HcScan::new(self.alpha0, self.n_streams)?;
            }
            DetectorKind::Xs | DetectorKind::Chan => {
                if self.window == 0 {
                    return Err(Error::Domain("window must be positive".into()));
                }
                if !(self.p0 > 0.0 && self.p0 < 1.0) {
                    return Err(Error::Domain(format!(
                        "p0 must lie in (0, 1), got {}",
                        self.p0
                    )));
                }
            }
            DetectorKind::ChenChan if !(self.lambda1 >= 0.0 && self.lambda2 > 0.0) => {
                return Err(Error::Domain(
                    "chen_chan needs lambda1 >= 0 and lambda2 > 0".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Per-stream statistic the monitor runs.
    pub fn stream_kind(&self) -> StatKind {
        if self.kind.uses_pvalues() {
            self.source.kind()
        } else {
            StatKind::Glr {
                window: self.window,
            }
        }
    }

    pub fn monitor(&self) -> Result<Monitor<'_>> {
        self.validate()?;
        let kind = self.stream_kind();
        let scan = match self.kind {
            DetectorKind::Hc => Some(HcScan::new(self.alpha0, self.n_streams)?),
            _ => None,
        };
        let states = match kind {
            StatKind::Lr { mu } => Bank::Lr(vec![CusumState::new(mu); self.n_streams]),
            StatKind::Glr { window } => Bank::Glr(vec![GlrState::new(window); self.n_streams]),
        };
        Ok(Monitor {
            det: self,
            states,
            t: 0,
            ys: Vec::with_capacity(self.n_streams),
            ps: Vec::with_capacity(self.n_streams),
            scan,
            wmat: WindowedWMatrix::default(),
            sums: Vec::new(),
        })
    }
}

#[derive(Debug)]
enum Bank {
    Lr(Vec<CusumState>),
    Glr(Vec<GlrState>),
}

impl Bank {
    fn len(&self) -> usize {
        match self {
            Bank::Lr(v) => v.len(),
            Bank::Glr(v) => v.len(),
        }
    }

    fn update(&mut self, x: &[f64], ys: &mut Vec<f64>) {
        ys.resize(x.len(), 0.0);
        match self {
            Bank::Lr(v) => {
                for ((s, &xi), y) in v.iter_mut().zip(x).zip(ys.iter_mut()) {
                    *y = s.update(xi);
                }
            }
            Bank::Glr(v) => {
                for ((s, &xi), y) in v.iter_mut().zip(x).zip(ys.iter_mut()) {
                    *y = s.update(xi);
                }
            }
        }
    }
}

/// Running state of one detector on one sequence.
#[derive(Debug)]
pub struct Monitor<'a> {
    det: &'a Detector,
    states: Bank,
    t: u64,
    ys: Vec<f64>,
    ps: Vec<f64>,
    scan: Option<HcScan>,
    wmat: WindowedWMatrix,
    sums: Vec<f64>,
}

impl Monitor<'_> {
    pub fn time(&self) -> u64 {
        self.t
    }

    /// Feeds one tick and returns the detection statistic at the new time.
    pub fn step(&mut self, x: &[f64]) -> Result<f64> {
        if x.len() != self.states.len() {
            return Err(Error::Domain(format!(
                "tick has {} observations for {} streams",
                x.len(),
                self.states.len()
            )));
        }
        self.t += 1;
        let t = self.t;
        self.states.update(x, &mut self.ys);
        let src = &self.det.source;
        let desc = |a: &f64, b: &f64| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal);
        let value = match self.det.kind {
            DetectorKind::Hc => {
                // P-values are nonincreasing in the statistic and share a null
                // column at time t, so the smallest P-values come from the
                // largest statistics.
                let scan = self.scan.as_ref().expect("HC scan");
                let k = scan.len();
                if k < self.ys.len() {
                    self.ys.select_nth_unstable_by(k - 1, desc);
                }
                let top = &mut self.ys[..k];
                top.sort_unstable_by(desc);
                src.pvalues_desc(t, top, &mut self.ps);
                scan.evaluate(&self.ps).0
            }
            DetectorKind::LogpMin => {
                let y = self.ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                -src.pvalue(t, y).ln()
            }
            DetectorKind::LogpSum => src.neg_log_pvalue_sum(t, &self.ys),
            DetectorKind::Ssbh => {
                self.ys.sort_unstable_by(desc);
                src.pvalues_desc(t, &self.ys, &mut self.ps);
                ssbh_sorted(&self.ps)
            }
            DetectorKind::ChenChan => {
                self.ps.clear();
                self.ps.extend(self.ys.iter().map(|&y| src.pvalue(t, y)));
                chen_chan_values(
                    &self.ps,
                    self.det.lambda1,
                    self.det.lambda2,
                    self.det.n_streams,
                )?
            }
            DetectorKind::Xs | DetectorKind::Chan => {
                let Bank::Glr(glrs) = &self.states else {
                    unreachable!("XS and Chan run GLR states")
                };
                self.wmat.fill(glrs.iter());
                if self.det.kind == DetectorKind::Xs {
                    xs_stat_with(&self.wmat, self.det.p0, &mut self.sums)
                } else {
                    chan_stat_with(&self.wmat, self.det.p0, &mut self.sums)
                }
            }
        };
        Ok(value)
    }
}
