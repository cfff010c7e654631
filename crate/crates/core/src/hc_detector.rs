//! Higher Criticism over per-stream P-values.
//!
//! `HC*_t = max_{1 <= n <= floor(alpha0 N)} sqrt(N) (n/N - pi_(n)) / sqrt((n/N)(1 - n/N))`
//! where `pi_(1) <= pi_(2) <= ...` are the sorted P-values. The streams with
//! `pi_i <= pi_(n*)` form the localized set.

use crate::error::{Error, Result};
use crate::pvalue::{PValueSnapshot, PValueSource};
use crate::stream_stats::StreamState;

pub const DEFAULT_ALPHA0: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcConfig {
    pub alpha0: f64,
    pub threshold: f64,
}

impl HcConfig {
    pub fn new(alpha0: f64, threshold: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0 < 1.0) {
            return Err(Error::Domain(format!(
                "alpha0 must lie in (0, 1), got {alpha0}"
            )));
        }
        Ok(Self { alpha0, threshold })
    }
}

impl Default for HcConfig {
    fn default() -> Self {
        Self {
            alpha0: DEFAULT_ALPHA0,
            threshold: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcResult {
    pub value: f64,
    /// 1-based rank `n*` attaining the maximum (smallest on ties).
    pub argmax_index: usize,
    /// Stream indices with `pi_i <= pi_(n*)`, ascending.
    pub selected: Vec<usize>,
}

/// `floor(alpha0 N)`, the number of order statistics scanned.
pub fn scan_count(alpha0: f64, n_streams: usize) -> Result<usize> {
    if !(alpha0 > 0.0 && alpha0 < 1.0) {
        return Err(Error::Domain(format!(
            "alpha0 must lie in (0, 1), got {alpha0}"
        )));
    }
    // Guard against alpha0 * N landing just below an integer.
    let k = (alpha0 * n_streams as f64 * (1.0 + 1e-12)).floor() as usize;
    let k = k.min(n_streams.saturating_sub(1));
    if k < 1 {
        return Err(Error::DegenerateScan { alpha0, n_streams });
    }
    Ok(k)
}

/// Precomputed weights for the HC objective at a fixed `N` and `alpha0`.
#[derive(Debug, Clone)]
pub struct HcScan {
    n_streams: usize,
    frac: Vec<f64>,
    scale: Vec<f64>,
}

impl HcScan {
    pub fn new(alpha0: f64, n_streams: usize) -> Result<Self> {
        let k = scan_count(alpha0, n_streams)?;
        let nf = n_streams as f64;
        let frac: Vec<f64> = (1..=k).map(|n| n as f64 / nf).collect();
        let scale = frac
            .iter()
            .map(|&u| nf.sqrt() / (u * (1.0 - u)).sqrt())
            .collect();
        Ok(Self {
            n_streams,
            frac,
            scale,
        })
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    /// Number of order statistics scanned.
    pub fn len(&self) -> usize {
        self.frac.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frac.is_empty()
    }

    /// Maximum and 1-based argmax over the scanned ranks, given the smallest
    /// `len()` P-values in ascending order.
    #[inline]
    pub fn evaluate(&self, smallest: &[f64]) -> (f64, usize) {
        debug_assert_eq!(smallest.len(), self.len());
        let mut best = f64::NEG_INFINITY;
        let mut arg = 1;
        for (i, &p) in smallest.iter().enumerate() {
            let v = self.scale[i] * (self.frac[i] - p);
            if v > best {
                best = v;
                arg = i + 1;
            }
        }
        (best, arg)
    }
}

fn check_snapshot(values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::Domain(format!(
            "HC needs at least two streams, got {}",
            values.len()
        )));
    }
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && **v <= 1.0))
    {
        return Err(Error::Domain(format!(
            "P-value {v} at stream {i} is outside (0, 1]"
        )));
    }
    Ok(())
}

/// HC statistic, maximizing rank and localized set for one snapshot.
pub fn hc_star(snapshot: &PValueSnapshot, alpha0: f64) -> Result<HcResult> {
    hc_star_values(&snapshot.values, alpha0)
}

pub fn hc_star_values(values: &[f64], alpha0: f64) -> Result<HcResult> {
    check_snapshot(values)?;
    let scan = HcScan::new(alpha0, values.len())?;
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let (value, argmax_index) = scan.evaluate(&sorted[..scan.len()]);
    let cut = sorted[argmax_index - 1];
    let selected = (0..values.len()).filter(|&i| values[i] <= cut).collect();
    Ok(HcResult {
        value,
        argmax_index,
        selected,
    })
}

/// Streams suspected to have changed: `{i : pi_i <= pi_(n*)}`.
pub fn localize(snapshot: &PValueSnapshot, alpha0: f64) -> Result<Vec<usize>> {
    Ok(hc_star(snapshot, alpha0)?.selected)
}

/// Streaming HC stopping rule over raw observations.
#[derive(Debug, Clone)]
pub struct HcMonitor {
    states: Vec<StreamState>,
    source: PValueSource,
    cfg: HcConfig,
    t: u64,
    pvalues: Vec<f64>,
}

impl HcMonitor {
    pub fn new(n_streams: usize, source: PValueSource, cfg: HcConfig) -> Result<Self> {
        scan_count(cfg.alpha0, n_streams)?;
        let kind = source.kind();
        Ok(Self {
            states: (0..n_streams).map(|_| kind.initial_state()).collect(),
            source,
            cfg,
            t: 0,
            pvalues: vec![1.0; n_streams],
        })
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn states(&self) -> &[StreamState] {
        &self.states
    }

    /// Current P-values (all 1 before the first step).
    pub fn snapshot(&self) -> PValueSnapshot {
        PValueSnapshot {
            values: self.pvalues.clone(),
            t: self.t,
        }
    }

    /// Feeds one tick; returns the HC result and whether it exceeds the threshold.
    pub fn step(&mut self, x: &[f64]) -> Result<(HcResult, bool)> {
        hc_monitor_step(
            &mut self.states,
            x,
            self.t + 1,
            &self.source,
            &self.cfg,
            &mut self.pvalues,
        )
        .inspect(|_| self.t += 1)
    }
}

/// Updates every stream statistic with `x`, converts to P-values at time `t`
/// and evaluates HC against `cfg.threshold`.
pub fn hc_monitor_step(
    states: &mut [StreamState],
    x: &[f64],
    t: u64,
    source: &PValueSource,
    cfg: &HcConfig,
    pvalues: &mut Vec<f64>,
) -> Result<(HcResult, bool)> {
    if x.len() != states.len() {
        return Err(Error::Domain(format!(
            "tick has {} observations for {} streams",
            x.len(),
            states.len()
        )));
    }
    pvalues.clear();
    pvalues.extend(
        states
            .iter_mut()
            .zip(x)
            .map(|(s, &xi)| source.pvalue(t, s.update(xi))),
    );
    let res = hc_star_values(pvalues, cfg.alpha0)?;
    let alarm = res.value > cfg.threshold;
    Ok((res, alarm))
}
