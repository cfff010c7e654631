//! Reference combining statistics.
//!
//! XS and Chan's statistic scan the in-window change offsets of the GLR
//! statistic and combine the positive parts across streams. The remaining
//! detectors combine per-stream P-values: Chen and Chan's score statistic,
//! Fisher's log-sum, the minimum P-value, and SSBH.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::pvalue::PValueSnapshot;
use crate::stream_stats::GlrState;

/// `C = 2 (sqrt 2 - 1)` in Chan's mixture term.
pub const CHAN_C: f64 = 2.0 * (SQRT_2 - 1.0);
/// GLR window used by the window-limited baselines.
pub const DEFAULT_WINDOW: usize = 200;
/// Horizon entering the default `lambda2`.
pub const DEFAULT_LAMBDA_HORIZON: f64 = 20_000.0;

/// `p0 = 1 / sqrt(N)`.
pub fn default_p0(n_streams: usize) -> f64 {
    1.0 / (n_streams as f64).sqrt()
}

/// `lambda2 = sqrt(log T / log log T)`.
pub fn default_lambda2(horizon: f64) -> f64 {
    (horizon.ln() / horizon.ln().ln()).sqrt()
}

/// Signed `W_{t,k,n} = (S_{n,t} - S_{n,k}) / sqrt(t - k)` for every stream and
/// every in-window offset `d = t - k`.
#[derive(Debug, Clone, Default)]
pub struct WindowedWMatrix {
    n_streams: usize,
    offsets: usize,
    values: Vec<f64>,
}

impl WindowedWMatrix {
    pub fn from_states(states: &[GlrState]) -> Self {
        let mut m = Self::default();
        m.fill(states.iter());
        m
    }

    /// Refills from `states` reusing the allocation. All states must share a clock.
    pub fn fill<'a>(&mut self, states: impl ExactSizeIterator<Item = &'a GlrState>) {
        self.n_streams = states.len();
        self.values.clear();
        self.offsets = 0;
        for (n, s) in states.enumerate() {
            if n == 0 {
                self.offsets = s.offsets();
            }
            debug_assert_eq!(s.offsets(), self.offsets);
            s.for_each_offset(|_, w| self.values.push(w));
        }
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    pub fn offsets(&self) -> usize {
        self.offsets
    }

    /// Signed value for stream `n` and offset `d` (1-based).
    pub fn get(&self, n: usize, d: usize) -> f64 {
        self.values[n * self.offsets + d - 1]
    }

    pub fn positive(&self, n: usize, d: usize) -> f64 {
        self.get(n, d).max(0.0)
    }

    fn scan(&self, term: impl Fn(f64) -> f64, sums: &mut Vec<f64>) -> f64 {
        if self.offsets == 0 {
            return 0.0;
        }
        sums.clear();
        sums.resize(self.offsets, 0.0);
        for row in self.values.chunks_exact(self.offsets) {
            for (acc, &w) in sums.iter_mut().zip(row) {
                *acc += term(w.max(0.0));
            }
        }
        sums.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `log(1 - p0 + p0 exp(z^2 / 2))` without overflow.
#[inline]
pub fn xs_term(z: f64, p0: f64) -> f64 {
    let a = 0.5 * z * z;
    if a <= 1.0 {
        (p0 * a.exp_m1()).ln_1p()
    } else {
        a + (p0 + (1.0 - p0) * (-a).exp()).ln()
    }
}

/// `log(1 + p0 (C exp(z^2 / 4) - 1))` without overflow.
#[inline]
pub fn chan_term(z: f64, p0: f64) -> f64 {
    let a = 0.25 * z * z;
    if a <= 1.0 {
        (p0 * (CHAN_C * a.exp() - 1.0)).ln_1p()
    } else {
        a + (p0 * CHAN_C + (1.0 - p0) * (-a).exp()).ln()
    }
}

fn check_p0(p0: f64) -> Result<()> {
    if p0 > 0.0 && p0 < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("p0 must lie in (0, 1), got {p0}")))
    }
}

pub fn xs_stat(wmat: &WindowedWMatrix, p0: f64) -> Result<f64> {
    check_p0(p0)?;
    Ok(wmat.scan(|z| xs_term(z, p0), &mut Vec::new()))
}

pub fn chan_stat(wmat: &WindowedWMatrix, p0: f64) -> Result<f64> {
    check_p0(p0)?;
    Ok(wmat.scan(|z| chan_term(z, p0), &mut Vec::new()))
}

pub(crate) fn xs_stat_with(wmat: &WindowedWMatrix, p0: f64, sums: &mut Vec<f64>) -> f64 {
    wmat.scan(|z| xs_term(z, p0), sums)
}

pub(crate) fn chan_stat_with(wmat: &WindowedWMatrix, p0: f64, sums: &mut Vec<f64>) -> f64 {
    wmat.scan(|z| chan_term(z, p0), sums)
}

/// `g1(z) = 1 / (z (2 - log z)^2) - 1/2`.
pub fn g1(z: f64) -> f64 {
    let l = 2.0 - z.ln();
    1.0 / (z * l * l) - 0.5
}

/// `g2(z) = 1 / sqrt(z) - 2`.
pub fn g2(z: f64) -> f64 {
    1.0 / z.sqrt() - 2.0
}

/// Chen and Chan's score statistic
/// `sum_n log(1 + (l1 log N / N) g1(pi_n) + (l2 / sqrt(N log N)) g2(pi_n))`.
pub fn chen_chan_stat(
    snapshot: &PValueSnapshot,
    lambda1: f64,
    lambda2: f64,
    n_streams: usize,
) -> Result<f64> {
    chen_chan_values(&snapshot.values, lambda1, lambda2, n_streams)
}

pub fn chen_chan_values(
    values: &[f64],
    lambda1: f64,
    lambda2: f64,
    n_streams: usize,
) -> Result<f64> {
    let nf = n_streams as f64;
    let a = lambda1 * nf.ln() / nf;
    let c = lambda2 / (nf * nf.ln()).sqrt();
    let mut total = 0.0;
    for (stream, &p) in values.iter().enumerate() {
        let arg = 1.0 + a * g1(p) + c * g2(p);
        if !(arg > 0.0) {
            return Err(Error::ChenChanDomain { stream, value: arg });
        }
        total += arg.ln();
    }
    Ok(total)
}

/// Fisher's combination `-sum_n log pi_n`.
pub fn fisher_sum_stat(snapshot: &PValueSnapshot) -> f64 {
    fisher_sum_values(&snapshot.values)
}

pub fn fisher_sum_values(values: &[f64]) -> f64 {
    -values.iter().map(|p| p.ln()).sum::<f64>()
}

/// `max_n (-log pi_n)`.
pub fn min_logp_stat(snapshot: &PValueSnapshot) -> f64 {
    min_logp_values(&snapshot.values)
}

pub fn min_logp_values(values: &[f64]) -> f64 {
    -values.iter().copied().fold(1.0, f64::min).ln()
}

/// `-min_n pi_(n) / (n / N)` over all ranks.
pub fn ssbh_stat(snapshot: &PValueSnapshot) -> f64 {
    let mut sorted = snapshot.values.clone();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    ssbh_sorted(&sorted)
}

/// SSBH on P-values already sorted ascending.
pub fn ssbh_sorted(sorted: &[f64]) -> f64 {
    let nf = sorted.len() as f64;
    let best = sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| p * nf / (i + 1) as f64)
        .fold(f64::INFINITY, f64::min);
    -best
}
