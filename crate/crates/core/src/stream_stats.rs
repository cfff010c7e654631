//! Per-stream sequential statistics.
//!
//! * CUSUM for a known post-change mean `mu`:
//!   `Y_t = max_{k <= t} (S_t - S_k - mu (t - k) / 2) mu`, updated recursively as
//!   `Y_t = max(0, Y_{t-1} + mu x_t - mu^2 / 2)`.
//! * Window-limited GLR: `Y_t = max_{max(0, t-w) <= k <= t-1} |S_t - S_k| / sqrt(t - k)`.
//!   The degenerate `k = t` term is excluded and `Y_0 = 0`.
//!
//! The `*_bruteforce` functions evaluate the definitions by enumerating every
//! candidate change offset and serve as test oracles.

use std::sync::Arc;

/// Which per-stream statistic to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatKind {
    /// CUSUM with assumed post-change mean.
    Lr { mu: f64 },
    /// Window-limited GLR with window length.
    Glr { window: usize },
}

impl StatKind {
    pub fn name(&self) -> &'static str {
        match self {
            StatKind::Lr { .. } => "lr",
            StatKind::Glr { .. } => "glr",
        }
    }

    pub fn initial_state(&self) -> StreamState {
        match *self {
            StatKind::Lr { mu } => StreamState::Lr(CusumState::new(mu)),
            StatKind::Glr { window } => StreamState::Glr(GlrState::new(window)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CusumState {
    pub value: f64,
    pub mu_assumed: f64,
}

impl CusumState {
    pub fn new(mu_assumed: f64) -> Self {
        Self {
            value: 0.0,
            mu_assumed,
        }
    }

    #[inline]
    pub fn update(&mut self, x: f64) -> f64 {
        let mu = self.mu_assumed;
        self.value = (self.value + mu * x - 0.5 * mu * mu).max(0.0);
        self.value
    }
}

/// Functional form of [`CusumState::update`].
pub fn cusum_update(state: CusumState, x: f64) -> CusumState {
    let mut next = state;
    next.update(x);
    next
}

fn prefix_sums(xs: &[f64]) -> Vec<f64> {
    let mut s = Vec::with_capacity(xs.len() + 1);
    s.push(0.0);
    let mut acc = 0.0;
    for &x in xs {
        acc += x;
        s.push(acc);
    }
    s
}

/// CUSUM by enumeration of every `k in 0..=t`, for each `t = 1..=len`.
pub fn cusum_bruteforce(xs: &[f64], mu: f64) -> Vec<f64> {
    let s = prefix_sums(xs);
    (1..=xs.len())
        .map(|t| {
            (0..=t)
                .map(|k| (s[t] - s[k] - 0.5 * mu * (t - k) as f64) * mu)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Smallest `k` maximizing the CUSUM term at time `t` (1-based, `t <= len`).
pub fn cusum_argmax(xs: &[f64], mu: f64, t: usize) -> usize {
    let s = prefix_sums(&xs[..t]);
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=t {
        let v = (s[t] - s[k] - 0.5 * mu * (t - k) as f64) * mu;
        if v > best {
            best = v;
            best_k = k;
        }
    }
    best_k
}

/// Window-limited GLR by enumeration, for each `t = 1..=len`.
pub fn glr_bruteforce(xs: &[f64], window: usize) -> Vec<f64> {
    let s = prefix_sums(xs);
    (1..=xs.len())
        .map(|t| {
            let lo = t.saturating_sub(window);
            (lo..t)
                .map(|k| (s[t] - s[k]).abs() / ((t - k) as f64).sqrt())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Neumaier-compensated prefix sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn minus(&self, other: &CompensatedSum) -> f64 {
        (self.sum - other.sum) + (self.comp - other.comp)
    }
}

/// Window-limited GLR state: a ring of the last `w + 1` prefix sums.
#[derive(Debug, Clone)]
pub struct GlrState {
    window: usize,
    ring: Vec<CompensatedSum>,
    running: CompensatedSum,
    t: u64,
    value: f64,
    inv_sqrt: Arc<[f64]>,
}

impl GlrState {
    pub fn new(window: usize) -> Self {
        assert!(window >= 1, "GLR window must be positive");
        let inv_sqrt: Arc<[f64]> = (0..=window)
            .map(|d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
            .collect();
        Self {
            window,
            ring: vec![CompensatedSum::default(); window + 1],
            running: CompensatedSum::default(),
            t: 0,
            value: 0.0,
            inv_sqrt,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Number of in-window offsets currently available (`min(t, w)`).
    pub fn offsets(&self) -> usize {
        (self.t as usize).min(self.window)
    }

    #[inline]
    fn slot(&self, t: u64) -> usize {
        (t % (self.window as u64 + 1)) as usize
    }

    pub fn update(&mut self, x: f64) -> f64 {
        self.running.add(x);
        self.t += 1;
        let cur = self.slot(self.t);
        self.ring[cur] = self.running;
        let mut best = 0.0f64;
        let span = self.offsets();
        for d in 1..=span {
            let prev = &self.ring[self.slot(self.t - d as u64)];
            let w = self.running.minus(prev).abs() * self.inv_sqrt[d];
            best = best.max(w);
        }
        self.value = best;
        best
    }

    /// Calls `f(d, W)` with the signed `W = (S_t - S_{t-d}) / sqrt(d)` for
    /// each in-window offset `d = 1..=min(t, w)`.
    pub fn for_each_offset(&self, mut f: impl FnMut(usize, f64)) {
        for d in 1..=self.offsets() {
            let prev = &self.ring[self.slot(self.t - d as u64)];
            f(d, self.running.minus(prev) * self.inv_sqrt[d]);
        }
    }
}

/// Functional form of [`GlrState::update`].
pub fn glr_update(state: GlrState, x: f64) -> (GlrState, f64) {
    let mut next = state;
    let y = next.update(x);
    (next, y)
}

/// A stream's statistic state, either kind.
#[derive(Debug, Clone)]
pub enum StreamState {
    Lr(CusumState),
    Glr(GlrState),
}

impl StreamState {
    #[inline]
    pub fn update(&mut self, x: f64) -> f64 {
        match self {
            StreamState::Lr(s) => s.update(x),
            StreamState::Glr(s) => s.update(x),
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            StreamState::Lr(s) => s.value,
            StreamState::Glr(s) => s.value(),
        }
    }

    pub fn as_glr(&self) -> Option<&GlrState> {
        match self {
            StreamState::Glr(s) => Some(s),
            StreamState::Lr(_) => None,
        }
    }
}
