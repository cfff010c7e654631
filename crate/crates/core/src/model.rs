//! Sparse multi-stream change-point model and synthetic path generation.
//!
//! `N` independent streams are standard normal. At the change time `tau` an
//! affected subset switches to `Normal(mu, sigma^2)`; the others never change.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, Substreams};

/// Mean shift calibrated to the number of streams: `sqrt(2 r ln N)`.
pub fn mu_from_r(r: f64, n_streams: usize) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("r must be positive, got {r}")));
    }
    if n_streams < 2 {
        return Err(Error::Domain(format!(
            "mu_r(N) needs N >= 2, got N = {n_streams}"
        )));
    }
    Ok((2.0 * r * (n_streams as f64).ln()).sqrt())
}

/// Per-stream probability of being affected: `N^(-beta)`.
pub fn p_from_beta(beta: f64, n_streams: usize) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    if n_streams == 0 {
        return Err(Error::Domain("N must be positive".into()));
    }
    Ok((n_streams as f64).powf(-beta))
}

/// How the affected set is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sparsity {
    /// Each stream independently with probability `N^(-beta)`.
    Beta(f64),
    /// A uniformly random subset of exactly this size.
    Count(usize),
}

/// Magnitude of the post-change mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shift {
    /// `mu = sqrt(2 r ln N)`.
    R(f64),
    /// Direct mean shift.
    Mu(f64),
}

/// First post-change time index, or no change at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeTime {
    At(u64),
    Never,
}

impl ChangeTime {
    /// Whether tick `t` (1-based) is post-change.
    #[inline]
    pub fn is_post_change(self, t: u64) -> bool {
        matches!(self, ChangeTime::At(tau) if t >= tau)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeModel {
    pub n_streams: usize,
    pub sparsity: Sparsity,
    pub shift: Shift,
    /// Post-change standard deviation.
    pub sigma: f64,
    pub tau: ChangeTime,
    /// Last simulated time index.
    pub horizon: u64,
}

impl ChangeModel {
    /// Null model: no stream ever changes.
    pub fn null(n_streams: usize, horizon: u64) -> Self {
        Self {
            n_streams,
            sparsity: Sparsity::Count(0),
            shift: Shift::Mu(0.0),
            sigma: 1.0,
            tau: ChangeTime::Never,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_streams == 0 {
            return Err(Error::InvalidModel("n_streams must be positive".into()));
        }
        match self.sparsity {
            Sparsity::Beta(b) if !(b > 0.0 && b < 1.0) => {
                return Err(Error::InvalidModel(format!(
                    "beta must lie in (0, 1), got {b}"
                )))
            }
            Sparsity::Count(k) if k > self.n_streams => {
                return Err(Error::InvalidModel(format!(
                    "affected_count {k} exceeds n_streams {}",
                    self.n_streams
                )))
            }
            _ => {}
        }
        match self.shift {
            Shift::R(r) if !(r > 0.0) || !r.is_finite() => {
                return Err(Error::InvalidModel(format!("r must be positive, got {r}")))
            }
            Shift::R(_) if self.n_streams < 2 => {
                return Err(Error::InvalidModel(
                    "shift given as r needs n_streams >= 2".into(),
                ))
            }
            Shift::Mu(m) if !m.is_finite() => {
                return Err(Error::InvalidModel(format!("mu must be finite, got {m}")))
            }
            _ => {}
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidModel(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidModel("horizon must be at least 1".into()));
        }
        if self.tau == ChangeTime::At(0) {
            return Err(Error::InvalidModel(
                "tau is 1-based and must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// The post-change mean implied by the shift parameter.
    pub fn mu(&self) -> Result<f64> {
        match self.shift {
            Shift::R(r) => mu_from_r(r, self.n_streams),
            Shift::Mu(m) => Ok(m),
        }
    }
}

/// Draws the affected set; the result is sorted and duplicate free.
pub fn sample_affected_set<R: Rng + ?Sized>(
    model: &ChangeModel,
    rng: &mut R,
) -> Result<Vec<usize>> {
    model.validate()?;
    let n = model.n_streams;
    Ok(match model.sparsity {
        Sparsity::Beta(beta) => {
            let p = p_from_beta(beta, n)?;
            (0..n).filter(|_| rng.random::<f64>() < p).collect()
        }
        Sparsity::Count(k) => {
            let mut set = rand::seq::index::sample(rng, n, k).into_vec();
            set.sort_unstable();
            set
        }
    })
}

/// Observation matrix, stored tick by tick: the `N` values of tick `t`
/// are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    pub n_streams: usize,
    pub horizon: u64,
    pub rng_seed: u64,
    pub affected_set: Vec<usize>,
    data: Vec<f64>,
}

impl ObservationBatch {
    /// All stream values at tick `t` (1-based).
    pub fn tick(&self, t: u64) -> &[f64] {
        assert!(
            t >= 1 && t <= self.horizon,
            "tick {t} outside 1..={}",
            self.horizon
        );
        let start = (t as usize - 1) * self.n_streams;
        &self.data[start..start + self.n_streams]
    }

    pub fn get(&self, stream: usize, t: u64) -> f64 {
        self.tick(t)[stream]
    }

    /// One stream's full path.
    pub fn stream_path(&self, stream: usize) -> Vec<f64> {
        (1..=self.horizon).map(|t| self.get(stream, t)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Streaming form of the path generator: yields one tick at a time.
///
/// Stream `n` of trial `trial` always consumes draws from the same
/// substream, so the pre-change noise is shared between models that differ
/// only in shift or affected set.
const BLOCK: usize = 16;

pub struct PathTicks {
    rngs: Vec<ChaCha8Rng>,
    /// Pre-drawn standard normals, tick-major, `BLOCK` ticks at a time.
    block: Vec<f64>,
    block_pos: usize,
    block_len: usize,
    affected: Vec<bool>,
    affected_set: Vec<usize>,
    mu: f64,
    sigma: f64,
    tau: ChangeTime,
    horizon: u64,
    t: u64,
}

impl PathTicks {
    pub fn new(model: &ChangeModel, streams: &Substreams, trial: u64) -> Result<Self> {
        model.validate()?;
        let affected_set = match model.tau {
            ChangeTime::Never => Vec::new(),
            ChangeTime::At(_) => {
                let mut rng = streams.rng(Purpose::AffectedSet, trial, 0);
                sample_affected_set(model, &mut rng)?
            }
        };
        Self::with_affected(model, affected_set, streams, Purpose::Observations, trial)
    }

    /// Pure null noise for `n_streams` streams under the given purpose.
    pub fn null(
        n_streams: usize,
        horizon: u64,
        streams: &Substreams,
        purpose: Purpose,
        trial: u64,
    ) -> Self {
        let model = ChangeModel::null(n_streams, horizon);
        Self::with_affected(&model, Vec::new(), streams, purpose, trial)
            .expect("null model is valid")
    }

    /// Paths with an explicitly chosen affected set.
    pub fn with_affected(
        model: &ChangeModel,
        affected_set: Vec<usize>,
        streams: &Substreams,
        purpose: Purpose,
        trial: u64,
    ) -> Result<Self> {
        model.validate()?;
        let mut affected = vec![false; model.n_streams];
        for &i in &affected_set {
            if i >= model.n_streams {
                return Err(Error::InvalidModel(format!(
                    "affected stream {i} out of range"
                )));
            }
            affected[i] = true;
        }
        let mu = if affected_set.is_empty() {
            0.0
        } else {
            model.mu()?
        };
        Ok(Self {
            rngs: (0..model.n_streams)
                .map(|n| streams.rng(purpose, trial, n as u64))
                .collect(),
            block: Vec::new(),
            block_pos: 0,
            block_len: 0,
            affected,
            affected_set,
            mu,
            sigma: model.sigma,
            tau: model.tau,
            horizon: model.horizon,
            t: 0,
        })
    }

    pub fn affected_set(&self) -> &[usize] {
        &self.affected_set
    }

    pub fn n_streams(&self) -> usize {
        self.rngs.len()
    }

    /// Time index of the most recently produced tick (0 before the first).
    pub fn time(&self) -> u64 {
        self.t
    }

    /// Writes the next tick into `out` and returns its time index, or `None`
    /// past the horizon.
    pub fn next_into(&mut self, out: &mut [f64]) -> Option<u64> {
        if self.t >= self.horizon {
            return None;
        }
        if self.block_pos == self.block_len {
            self.refill();
        }
        self.t += 1;
        let n = self.rngs.len();
        let z = &self.block[self.block_pos * n..(self.block_pos + 1) * n];
        self.block_pos += 1;
        if self.tau.is_post_change(self.t) && !self.affected_set.is_empty() {
            for ((slot, &zi), &hit) in out.iter_mut().zip(z).zip(&self.affected) {
                *slot = if hit { self.mu + self.sigma * zi } else { zi };
            }
        } else {
            out[..n].copy_from_slice(z);
        }
        Some(self.t)
    }

    fn refill(&mut self) {
        let n = self.rngs.len();
        let len = (self.horizon - self.t).min(BLOCK as u64) as usize;
        self.block.resize(len * n, 0.0);
        for (i, rng) in self.rngs.iter_mut().enumerate() {
            for j in 0..len {
                self.block[j * n + i] = rng.sample(StandardNormal);
            }
        }
        self.block_pos = 0;
        self.block_len = len;
    }
}

/// Materializes the whole observation matrix.
pub fn generate_paths(
    model: &ChangeModel,
    streams: &Substreams,
    trial: u64,
) -> Result<ObservationBatch> {
    let mut ticks = PathTicks::new(model, streams, trial)?;
    let n = model.n_streams;
    let mut data = vec![0.0; n * model.horizon as usize];
    for chunk in data.chunks_exact_mut(n) {
        ticks.next_into(chunk);
    }
    Ok(ObservationBatch {
        n_streams: n,
        horizon: model.horizon,
        rng_seed: streams.seed(),
        affected_set: ticks.affected_set,
        data,
    })
}

/// Change time as written in a config file: an index or `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSetting {
    Index(u64),
    Sentinel(String),
}

/// Flat key-value form of a model plus its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_streams: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<TauSetting>,
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_sigma() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn from_model(model: &ChangeModel, seed: u64) -> Self {
        let (beta, affected_count) = match model.sparsity {
            Sparsity::Beta(b) => (Some(b), None),
            Sparsity::Count(k) => (None, Some(k)),
        };
        let (r, mu) = match model.shift {
            Shift::R(r) => (Some(r), None),
            Shift::Mu(m) => (None, Some(m)),
        };
        let tau = Some(match model.tau {
            ChangeTime::At(t) => TauSetting::Index(t),
            ChangeTime::Never => TauSetting::Sentinel("inf".into()),
        });
        Self {
            n_streams: model.n_streams,
            beta,
            affected_count,
            r,
            mu,
            sigma: model.sigma,
            tau,
            horizon: model.horizon,
            seed,
        }
    }

    pub fn to_model(&self) -> Result<ChangeModel> {
        let sparsity = match (self.beta, self.affected_count) {
            (Some(b), None) => Sparsity::Beta(b),
            (None, Some(k)) => Sparsity::Count(k),
            (None, None) => Sparsity::Count(0),
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either beta or affected_count, not both".into(),
                ))
            }
        };
        let shift = match (self.r, self.mu) {
            (Some(r), None) => Shift::R(r),
            (None, Some(m)) => Shift::Mu(m),
            (None, None) => Shift::Mu(0.0),
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either r or mu, not both".into()))
            }
        };
        let tau = match &self.tau {
            None => ChangeTime::Never,
            Some(TauSetting::Index(t)) => ChangeTime::At(*t),
            Some(TauSetting::Sentinel(s)) if matches!(s.as_str(), "inf" | "never" | "none") => {
                ChangeTime::Never
            }
            Some(TauSetting::Sentinel(s)) => {
                return Err(Error::Config(format!(
                    "tau must be an integer or \"inf\", got {s:?}"
                )))
            }
        };
        let model = ChangeModel {
            n_streams: self.n_streams,
            sparsity,
            shift,
            sigma: self.sigma,
            tau,
            horizon: self.horizon,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fixed(n: usize, k: usize, mu: f64, tau: ChangeTime, horizon: u64) -> ChangeModel {
        ChangeModel {
            n_streams: n,
            sparsity: Sparsity::Count(k),
            shift: Shift::Mu(mu),
            sigma: 1.0,
            tau,
            horizon,
        }
    }

    #[test]
    fn mu_from_r_examples() {
        assert_relative_eq!(mu_from_r(1.0, 100).unwrap(), 3.0349, epsilon = 1e-4);
        // N = e^2 is not an integer; check the formula through ln directly.
        assert_relative_eq!((2.0f64 * 0.5 * 2.0).sqrt(), std::f64::consts::SQRT_2);
        assert_relative_eq!(mu_from_r(0.05, 500).unwrap(), 0.788328, epsilon = 1e-6);
        assert!(mu_from_r(0.0, 100).is_err());
        assert!(mu_from_r(-1.0, 100).is_err());
        assert!(mu_from_r(1.0, 1).is_err());
    }

    #[test]
    fn p_from_beta_examples() {
        assert_relative_eq!(p_from_beta(0.5, 100).unwrap(), 0.1, epsilon = 1e-12);
        assert_relative_eq!(p_from_beta(0.7, 10_000).unwrap(), 0.0015849, epsilon = 1e-7);
        assert!(p_from_beta(1.0, 100).is_err());
        assert!(p_from_beta(0.0, 100).is_err());
    }

    #[test]
    fn affected_set_extremes() {
        let s = Substreams::new(1);
        let mut rng = s.rng(Purpose::AffectedSet, 0, 0);
        let none = fixed(50, 0, 1.0, ChangeTime::At(1), 10);
        assert!(sample_affected_set(&none, &mut rng).unwrap().is_empty());
        let all = fixed(50, 50, 1.0, ChangeTime::At(1), 10);
        assert_eq!(
            sample_affected_set(&all, &mut rng).unwrap(),
            (0..50).collect::<Vec<_>>()
        );
        let some = fixed(50, 7, 1.0, ChangeTime::At(1), 10);
        let set = sample_affected_set(&some, &mut rng).unwrap();
        assert_eq!(set.len(), 7);
        assert!(set.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn null_model_has_empty_affected_set() {
        let mut m = fixed(20, 5, 2.0, ChangeTime::Never, 4);
        m.sparsity = Sparsity::Count(5);
        let batch = generate_paths(&m, &Substreams::new(3), 0).unwrap();
        assert!(batch.affected_set.is_empty());
    }

    #[test]
    fn generation_is_reproducible() {
        let m = ChangeModel {
            n_streams: 30,
            sparsity: Sparsity::Beta(0.5),
            shift: Shift::R(0.3),
            sigma: 1.5,
            tau: ChangeTime::At(5),
            horizon: 12,
        };
        let a = generate_paths(&m, &Substreams::new(11), 2).unwrap();
        let b = generate_paths(&m, &Substreams::new(11), 2).unwrap();
        assert_eq!(a, b);
        let c = generate_paths(&m, &Substreams::new(12), 2).unwrap();
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn pre_change_noise_shared_across_shifts() {
        let s = Substreams::new(8);
        let a = generate_paths(&fixed(4, 4, 0.0, ChangeTime::At(3), 5), &s, 0).unwrap();
        let b = generate_paths(&fixed(4, 4, 2.0, ChangeTime::At(3), 5), &s, 0).unwrap();
        for n in 0..4 {
            for t in 1..=5 {
                let expected = if t >= 3 { 2.0 } else { 0.0 };
                assert_relative_eq!(b.get(n, t) - a.get(n, t), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_change_matches_null() {
        let s = Substreams::new(5);
        let null = generate_paths(&fixed(6, 0, 0.0, ChangeTime::Never, 8), &s, 1).unwrap();
        let zero = generate_paths(&fixed(6, 6, 0.0, ChangeTime::At(2), 8), &s, 1).unwrap();
        assert_eq!(null.as_slice(), zero.as_slice());
    }

    #[test]
    fn invalid_models_rejected() {
        let mut m = fixed(10, 11, 1.0, ChangeTime::At(1), 5);
        assert!(m.validate().is_err());
        m.sparsity = Sparsity::Beta(1.0);
        assert!(m.validate().is_err());
        m.sparsity = Sparsity::Count(1);
        m.sigma = 0.0;
        assert!(m.validate().is_err());
        m.sigma = 1.0;
        m.horizon = 0;
        assert!(m.validate().is_err());
        m.horizon = 3;
        m.tau = ChangeTime::At(0);
        assert!(m.validate().is_err());
    }

    #[test]
    fn config_round_trip() {
        let m = ChangeModel {
            n_streams: 100,
            sparsity: Sparsity::Beta(0.7),
            shift: Shift::R(0.1),
            sigma: 1.0,
            tau: ChangeTime::At(1),
            horizon: 1000,
        };
        let cfg = ModelConfig::from_model(&m, 77);
        let text = cfg.to_toml_string().unwrap();
        let back = ModelConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_model().unwrap(), m);

        let null =
            ModelConfig::from_toml_str("n_streams = 5\nhorizon = 9\ntau = \"inf\"\nseed = 1\n")
                .unwrap();
        assert_eq!(null.to_model().unwrap().tau, ChangeTime::Never);
        assert!(ModelConfig::from_toml_str(
            "n_streams = 5\nhorizon = 9\nbeta = 0.5\naffected_count = 2\n"
        )
        .unwrap()
        .to_model()
        .is_err());
        assert!(ModelConfig::from_toml_str("n_streams = 5\nhorizon = 9\nbogus = 1\n").is_err());
    }
}
