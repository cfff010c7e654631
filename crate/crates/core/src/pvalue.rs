//! P-values for per-stream statistics.
//!
//! A [`NullTable`] stores, for each time on a grid, the sorted values of the
//! statistic over `M` simulated null paths. The grid is dense on `1..=burn_in`
//! and ends with one steady-state column (taken at the table horizon) that
//! serves every `t > burn_in`. Lookups use the `(r + 1) / (M + 1)` rule so a
//! P-value is never zero.
//!
//! Closed-form tail approximations are also provided:
//! `exp(-y)` for CUSUM and `exp(-y^2 / 2)` for the GLR statistic.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{Purpose, Substreams};
use crate::stream_stats::StatKind;

/// Burn-in after which the null distribution is treated as stationary.
pub const DEFAULT_BURN_IN: u64 = 200;
/// Sample count for experiment-grade tables.
pub const EXPERIMENT_SAMPLES: usize = 100_000;
/// Sample count for test-grade tables.
pub const TEST_SAMPLES: usize = 10_000;
/// Default cap on table memory.
pub const DEFAULT_BUDGET_BYTES: usize = 2 << 30;

const MAGIC: &[u8; 8] = b"SHCNULL1";
const PATHS_PER_TASK: usize = 512;

/// CUSUM tail approximation `min(1, exp(-y))`, floored at the smallest
/// positive normal double.
pub fn asymptotic_pvalue_lr(y: f64) -> f64 {
    if y <= 0.0 {
        1.0
    } else {
        (-y).exp().max(f64::MIN_POSITIVE)
    }
}

/// GLR tail approximation `exp(-y^2 / 2)` for `y >= 0`, 1 otherwise.
pub fn asymptotic_pvalue_glr(y: f64) -> f64 {
    if y <= 0.0 {
        1.0
    } else {
        (-0.5 * y * y).exp().max(f64::MIN_POSITIVE)
    }
}

/// Everything that determines a table's contents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullTableSpec {
    pub kind: StatKind,
    pub horizon: u64,
    pub n_samples: usize,
    pub burn_in: u64,
    pub seed: u64,
}

impl NullTableSpec {
    pub fn new(kind: StatKind, horizon: u64, n_samples: usize, burn_in: u64, seed: u64) -> Self {
        Self {
            kind,
            horizon,
            n_samples,
            burn_in,
            seed,
        }
    }

    fn grid(&self) -> Vec<u64> {
        let mut grid: Vec<u64> = (1..=self.burn_in).collect();
        if self.horizon > self.burn_in {
            grid.push(self.horizon);
        }
        grid
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Domain("null table needs at least one sample".into()));
        }
        if self.horizon == 0 || self.horizon < self.burn_in {
            return Err(Error::Domain(format!(
                "table horizon {} must be positive and at least the burn-in {}",
                self.horizon, self.burn_in
            )));
        }
        match self.kind {
            StatKind::Lr { mu } if !(mu > 0.0) || !mu.is_finite() => Err(Error::Domain(format!(
                "assumed CUSUM mean must be positive, got {mu}"
            ))),
            StatKind::Glr { window: 0 } => Err(Error::Domain("GLR window must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Bytes needed to hold the sorted samples.
    pub fn footprint(&self) -> usize {
        self.grid().len() * self.n_samples * std::mem::size_of::<f64>()
    }

    /// File name used by [`NullTableCache`].
    pub fn cache_key(&self) -> String {
        let param = match self.kind {
            StatKind::Lr { mu } => format!("lr-{:016x}", mu.to_bits()),
            StatKind::Glr { window } => format!("glr-{window}"),
        };
        format!(
            "{param}_h{}_m{}_b{}_s{}.bin",
            self.horizon, self.n_samples, self.burn_in, self.seed
        )
    }
}

/// Accelerates `partition_point` on a sorted column with equal-width buckets.
///
/// Samples tied with the column minimum (the atom of CUSUM at zero) are
/// counted once and kept out of the buckets.
#[derive(Debug, Clone, Default)]
struct BucketIndex {
    lo: f64,
    hi: f64,
    /// Number of samples equal to `lo`.
    base: usize,
    /// Smallest sample above `lo`.
    start: f64,
    inv_width: f64,
    starts: Vec<u32>,
}

impl BucketIndex {
    fn build(col: &[f64]) -> Self {
        let lo = col[0];
        let hi = col[col.len() - 1];
        let base = col.partition_point(|&v| v <= lo);
        if base == col.len() {
            return Self {
                lo,
                hi,
                base,
                start: hi,
                inv_width: 0.0,
                starts: Vec::new(),
            };
        }
        let start = col[base];
        let rest = &col[base..];
        let n_buckets = (rest.len() / 8).clamp(1, 1 << 16);
        if !(hi > start) {
            return Self {
                lo,
                hi,
                base,
                start,
                inv_width: 0.0,
                starts: Vec::new(),
            };
        }
        let width = (hi - start) / n_buckets as f64;
        let starts = (0..=n_buckets)
            .map(|b| (base + rest.partition_point(|&v| v < start + b as f64 * width)) as u32)
            .collect();
        Self {
            lo,
            hi,
            base,
            start,
            inv_width: 1.0 / width,
            starts,
        }
    }

    /// Number of samples strictly below `x`.
    #[inline]
    fn count_below(&self, col: &[f64], x: f64) -> usize {
        if x <= self.lo {
            return 0;
        }
        if x > self.hi {
            return col.len();
        }
        if x <= self.start {
            return self.base;
        }
        let mut i = if self.starts.is_empty() {
            self.base
        } else {
            let nb = self.starts.len() - 1;
            let b = (((x - self.start) * self.inv_width) as usize).min(nb - 1);
            let (a, z) = (self.starts[b] as usize, self.starts[b + 1] as usize);
            a + col[a..z].partition_point(|&v| v < x)
        };
        // Floating-point bucket edges may be off by a few samples.
        while i > 0 && col[i - 1] >= x {
            i -= 1;
        }
        while i < col.len() && col[i] < x {
            i += 1;
        }
        i
    }
}

/// Sorted null samples of a per-stream statistic on a time grid.
#[derive(Debug, Clone)]
pub struct NullTable {
    spec: NullTableSpec,
    grid: Vec<u64>,
    samples: Vec<f64>,
    index: Vec<BucketIndex>,
    /// `-log((r + 1) / (M + 1))` by exceedance count `r`.
    neg_log: Vec<f64>,
}

impl PartialEq for NullTable {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.grid == other.grid
            && self.samples.len() == other.samples.len()
            && self
                .samples
                .iter()
                .zip(&other.samples)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl NullTable {
    pub fn build(spec: &NullTableSpec) -> Result<Self> {
        Self::build_with_budget(spec, DEFAULT_BUDGET_BYTES)
    }

    /// Simulates `M` independent null paths of length `horizon`, records the
    /// statistic at each grid time, and sorts each column.
    pub fn build_with_budget(spec: &NullTableSpec, budget_bytes: usize) -> Result<Self> {
        spec.validate()?;
        let needed = spec.footprint();
        if needed > budget_bytes {
            return Err(Error::Resource {
                needed,
                budget: budget_bytes,
            });
        }
        if spec.n_samples < 1000 {
            log::warn!(
                "null table with only {} samples; P-values are coarse",
                spec.n_samples
            );
        }
        let grid = spec.grid();
        let m = spec.n_samples;
        let g = grid.len();
        let streams = Substreams::new(spec.seed);

        // Path-major chunks, scattered into time-major columns afterwards.
        let chunk_starts: Vec<usize> = (0..m).step_by(PATHS_PER_TASK).collect();
        let mut samples = vec![0.0; g * m];
        for batch in chunk_starts.chunks(64) {
            let results: Vec<(usize, Vec<f64>)> = batch
                .par_iter()
                .map(|&start| {
                    let end = (start + PATHS_PER_TASK).min(m);
                    let mut out = Vec::with_capacity((end - start) * g);
                    for path in start..end {
                        simulate_null_path(&spec.kind, &grid, &streams, path as u64, &mut out);
                    }
                    (start, out)
                })
                .collect();
            for (start, out) in results {
                for (p, row) in out.chunks_exact(g).enumerate() {
                    for (gi, &v) in row.iter().enumerate() {
                        samples[gi * m + start + p] = v;
                    }
                }
            }
        }
        samples
            .par_chunks_mut(m)
            .for_each(|col| col.sort_unstable_by(|a, b| a.total_cmp(b)));
        Ok(Self::from_parts(*spec, grid, samples))
    }

    fn from_parts(spec: NullTableSpec, grid: Vec<u64>, samples: Vec<f64>) -> Self {
        let index = samples
            .chunks_exact(spec.n_samples)
            .map(BucketIndex::build)
            .collect();
        let m = spec.n_samples;
        let neg_log = (0..=m)
            .map(|r| -((r as f64 + 1.0) / (m as f64 + 1.0)).ln())
            .collect();
        Self {
            spec,
            grid,
            samples,
            index,
            neg_log,
        }
    }

    pub fn spec(&self) -> &NullTableSpec {
        &self.spec
    }

    pub fn kind(&self) -> StatKind {
        self.spec.kind
    }

    pub fn n_samples(&self) -> usize {
        self.spec.n_samples
    }

    pub fn burn_in(&self) -> u64 {
        self.spec.burn_in
    }

    pub fn time_grid(&self) -> &[u64] {
        &self.grid
    }

    /// Column index serving time `t`.
    #[inline]
    pub fn grid_index(&self, t: u64) -> usize {
        if t >= 1 && t <= self.spec.burn_in {
            (t - 1) as usize
        } else {
            self.grid.len() - 1
        }
    }

    /// Sorted null samples at grid column `gi`.
    pub fn column(&self, gi: usize) -> &[f64] {
        let m = self.spec.n_samples;
        &self.samples[gi * m..(gi + 1) * m]
    }

    /// `(r + 1) / (M + 1)` where `r` counts null samples `>= x` at the grid
    /// column serving `t`.
    #[inline]
    pub fn pvalue(&self, t: u64, x: f64) -> f64 {
        let gi = self.grid_index(t);
        let col = self.column(gi);
        let m = col.len();
        let r = m - self.index[gi].count_below(col, x);
        (r as f64 + 1.0) / (m as f64 + 1.0)
    }

    /// `-sum log pvalue(t, y)` over `ys`.
    pub fn neg_log_pvalue_sum(&self, t: u64, ys: &[f64]) -> f64 {
        let gi = self.grid_index(t);
        let col = self.column(gi);
        let idx = &self.index[gi];
        let m = col.len();
        let mut total = 0.0;
        for &y in ys {
            // At or below the column minimum the P-value is exactly 1.
            if y > idx.lo {
                total += self.neg_log[m - idx.count_below(col, y)];
            }
        }
        total
    }

    /// P-values for statistics sorted in descending order, written to `out`
    /// in ascending order. Walks the column once instead of searching per value.
    pub fn pvalues_desc(&self, t: u64, ys_desc: &[f64], out: &mut Vec<f64>) {
        let gi = self.grid_index(t);
        let col = self.column(gi);
        let m = col.len();
        out.clear();
        let mut hi = m;
        for &y in ys_desc {
            // Largest i <= hi with col[i - 1] < y, found by galloping down.
            let pos = if hi == 0 || col[hi - 1] < y {
                hi
            } else {
                let mut step = 1;
                let mut upper = hi - 1;
                loop {
                    if step > upper {
                        break col[..upper].partition_point(|&v| v < y);
                    }
                    let probe = upper - step;
                    if col[probe] < y {
                        break probe + 1 + col[probe + 1..upper].partition_point(|&v| v < y);
                    }
                    upper = probe;
                    step *= 2;
                }
            };
            hi = pos;
            out.push(((m - pos) as f64 + 1.0) / (m as f64 + 1.0));
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        match self.spec.kind {
            StatKind::Lr { mu } => {
                w.write_all(&[0u8])?;
                w.write_all(&mu.to_bits().to_le_bytes())?;
            }
            StatKind::Glr { window } => {
                w.write_all(&[1u8])?;
                w.write_all(&(window as u64).to_le_bytes())?;
            }
        }
        for v in [
            self.spec.horizon,
            self.spec.n_samples as u64,
            self.spec.burn_in,
            self.spec.seed,
            self.grid.len() as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &t in &self.grid {
            w.write_all(&t.to_le_bytes())?;
        }
        for &v in &self.samples {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::TableFormat("bad magic".into()));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let param = read_u64(r)?;
        let kind = match tag[0] {
            0 => StatKind::Lr {
                mu: f64::from_bits(param),
            },
            1 => StatKind::Glr {
                window: param as usize,
            },
            other => return Err(Error::TableFormat(format!("unknown statistic tag {other}"))),
        };
        let horizon = read_u64(r)?;
        let n_samples = read_u64(r)? as usize;
        let burn_in = read_u64(r)?;
        let seed = read_u64(r)?;
        let grid_len = read_u64(r)? as usize;
        let spec = NullTableSpec {
            kind,
            horizon,
            n_samples,
            burn_in,
            seed,
        };
        spec.validate()?;
        let grid = (0..grid_len)
            .map(|_| read_u64(r))
            .collect::<Result<Vec<_>>>()?;
        if grid != spec.grid() {
            return Err(Error::TableFormat("time grid does not match header".into()));
        }
        let samples = (0..grid_len * n_samples)
            .map(|_| read_u64(r).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::TableFormat("trailing bytes".into()));
        }
        Ok(Self::from_parts(spec, grid, samples))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn simulate_null_path(
    kind: &StatKind,
    grid: &[u64],
    streams: &Substreams,
    path: u64,
    out: &mut Vec<f64>,
) {
    let mut rng = streams.rng(Purpose::NullTable, path, 0);
    let mut state = kind.initial_state();
    let horizon = *grid.last().expect("grid is nonempty");
    let mut next = 0;
    for t in 1..=horizon {
        let y = state.update(rng.sample(StandardNormal));
        if grid[next] == t {
            out.push(y);
            next += 1;
        }
    }
}

/// In-memory and on-disk cache of null tables keyed by their spec.
#[derive(Debug, Default)]
pub struct NullTableCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Arc<NullTable>>>,
}

impl NullTableCache {
    /// Cache that only lives in memory.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Cache persisted under `dir` (created if missing).
    pub fn persistent(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            memory: Mutex::default(),
        })
    }

    pub fn get_or_build(&self, spec: &NullTableSpec) -> Result<Arc<NullTable>> {
        let key = spec.cache_key();
        if let Some(t) = self.memory.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = match self.dir.as_ref().map(|d| d.join(&key)) {
            Some(path) if path.exists() => {
                let t = NullTable::load(&path)?;
                if t.spec() != spec {
                    return Err(Error::TableFormat(format!(
                        "{} does not match its key",
                        path.display()
                    )));
                }
                log::debug!("null table cache hit: {}", path.display());
                t
            }
            Some(path) => {
                let t = NullTable::build(spec)?;
                t.save(&path)?;
                t
            }
            None => NullTable::build(spec)?,
        };
        let table = Arc::new(table);
        self.memory
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&table));
        Ok(table)
    }

    /// Drops in-memory entries; persisted files stay.
    pub fn clear_memory(&self) {
        self.memory.lock().expect("cache lock").clear();
    }
}

/// Where per-stream P-values come from.
#[derive(Debug, Clone)]
pub enum PValueSource {
    Table(Arc<NullTable>),
    Asymptotic(StatKind),
}

impl PValueSource {
    pub fn kind(&self) -> StatKind {
        match self {
            PValueSource::Table(t) => t.kind(),
            PValueSource::Asymptotic(k) => *k,
        }
    }

    #[inline]
    pub fn pvalue(&self, t: u64, y: f64) -> f64 {
        match self {
            PValueSource::Table(table) => table.pvalue(t, y),
            PValueSource::Asymptotic(StatKind::Lr { .. }) => asymptotic_pvalue_lr(y),
            PValueSource::Asymptotic(StatKind::Glr { .. }) => asymptotic_pvalue_glr(y),
        }
    }

    /// Fisher combination `-sum log pvalue(t, y)`.
    pub fn neg_log_pvalue_sum(&self, t: u64, ys: &[f64]) -> f64 {
        match self {
            PValueSource::Table(table) => table.neg_log_pvalue_sum(t, ys),
            _ => ys
                .iter()
                .filter(|&&y| y > 0.0)
                .map(|&y| -self.pvalue(t, y).ln())
                .sum(),
        }
    }

    /// Batch form of [`pvalue`](Self::pvalue) for statistics sorted in
    /// descending order; `out` receives ascending P-values.
    pub fn pvalues_desc(&self, t: u64, ys_desc: &[f64], out: &mut Vec<f64>) {
        match self {
            PValueSource::Table(table) => table.pvalues_desc(t, ys_desc, out),
            _ => {
                out.clear();
                out.extend(ys_desc.iter().map(|&y| self.pvalue(t, y)));
            }
        }
    }
}

/// The `N` P-values at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueSnapshot {
    pub values: Vec<f64>,
    pub t: u64,
}

impl PValueSnapshot {
    pub fn new(values: Vec<f64>, t: u64) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && **v <= 1.0))
        {
            return Err(Error::Domain(format!(
                "P-value {v} at stream {i} is outside (0, 1]"
            )));
        }
        Ok(Self { values, t })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_from(values: Vec<f64>) -> NullTable {
        let spec = NullTableSpec::new(StatKind::Lr { mu: 1.0 }, 1, values.len(), 0, 0);
        let mut v = values;
        v.sort_by(|a, b| a.total_cmp(b));
        NullTable::from_parts(spec, vec![1], v)
    }

    #[test]
    fn lookup_hand_count() {
        let table = table_from((1..=9).map(f64::from).collect());
        assert_relative_eq!(table.pvalue(1, 5.0), 0.6, epsilon = 1e-15);
        assert_eq!(table.pvalue(1, -100.0), 1.0);
        assert_relative_eq!(table.pvalue(1, 100.0), 0.1, epsilon = 1e-15);
        assert_relative_eq!(table.pvalue(7, 9.0), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn lookup_handles_ties() {
        let table = table_from(vec![0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0]);
        assert_eq!(table.pvalue(1, 0.0), 1.0);
        assert_relative_eq!(table.pvalue(1, 1.0), 7.0 / 10.0);
        assert_relative_eq!(table.pvalue(1, 1.5), 5.0 / 10.0);
        assert_relative_eq!(table.pvalue(1, 2.0), 5.0 / 10.0);
        assert_relative_eq!(table.pvalue(1, 3.0), 2.0 / 10.0);
        let flat = table_from(vec![2.0; 5]);
        assert_eq!(flat.pvalue(1, 2.0), 1.0);
        assert_relative_eq!(flat.pvalue(1, 2.1), 1.0 / 6.0);
    }

    #[test]
    fn lr_table_first_tick_matches_cusum() {
        let spec = NullTableSpec::new(StatKind::Lr { mu: 1.0 }, 3, 4, 2, 9);
        let table = NullTable::build(&spec).unwrap();
        assert_eq!(table.time_grid(), &[1, 2, 3]);
        let streams = Substreams::new(9);
        let mut expected: Vec<f64> = (0..4)
            .map(|p| {
                let x: f64 = streams.rng(Purpose::NullTable, p, 0).sample(StandardNormal);
                (x - 0.5).max(0.0)
            })
            .collect();
        expected.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(table.column(0), expected.as_slice());
        for gi in 0..3 {
            assert!(table.column(gi).windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn batch_lookup_matches_single() {
        let spec = NullTableSpec::new(StatKind::Lr { mu: 1.0 }, 30, 500, 10, 2);
        let table = NullTable::build(&spec).unwrap();
        let mut ys: Vec<f64> = table.column(10).iter().step_by(7).copied().collect();
        ys.extend([-1.0, 0.0, 0.0, 100.0, 3.0, 3.0, 1e-3]);
        ys.sort_by(|a, b| b.total_cmp(a));
        for t in [1, 5, 11, 400] {
            let mut out = Vec::new();
            table.pvalues_desc(t, &ys, &mut out);
            let single: Vec<f64> = ys.iter().map(|&y| table.pvalue(t, y)).collect();
            assert_eq!(out, single);
            let direct: f64 = ys.iter().map(|&y| -table.pvalue(t, y).ln()).sum();
            assert_relative_eq!(
                table.neg_log_pvalue_sum(t, &ys),
                direct,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn grid_routing() {
        let spec = NullTableSpec::new(StatKind::Glr { window: 5 }, 50, 10, 20, 1);
        let table = NullTable::build(&spec).unwrap();
        assert_eq!(table.time_grid().len(), 21);
        assert_eq!(table.grid_index(1), 0);
        assert_eq!(table.grid_index(20), 19);
        assert_eq!(table.grid_index(21), 20);
        assert_eq!(table.grid_index(10_000), 20);
    }

    #[test]
    fn budget_enforced() {
        let spec = NullTableSpec::new(StatKind::Lr { mu: 1.0 }, 300, 1000, 200, 1);
        match NullTable::build_with_budget(&spec, 1024) {
            Err(Error::Resource { needed, budget }) => {
                assert_eq!(needed, 201 * 1000 * 8);
                assert_eq!(budget, 1024);
            }
            other => panic!("expected resource error, got {other:?}"),
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let spec = NullTableSpec::new(StatKind::Lr { mu: 0.3 }, 40, 64, 10, 5);
        let table = NullTable::build(&spec).unwrap();
        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        let back = NullTable::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, table);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);

        let mut truncated = buf.clone();
        truncated.truncate(buf.len() - 3);
        assert!(NullTable::read_from(&mut truncated.as_slice()).is_err());
        let mut bad = buf;
        bad[0] = b'X';
        assert!(NullTable::read_from(&mut bad.as_slice()).is_err());
    }

    #[test]
    fn cache_persists_and_hits() {
        let dir = tempfile::tempdir().unwrap();
        let spec = NullTableSpec::new(StatKind::Glr { window: 4 }, 12, 50, 5, 3);
        let cache = NullTableCache::persistent(dir.path()).unwrap();
        let a = cache.get_or_build(&spec).unwrap();
        assert!(dir.path().join(spec.cache_key()).exists());
        let b = cache.get_or_build(&spec).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let fresh = NullTableCache::persistent(dir.path()).unwrap();
        let c = fresh.get_or_build(&spec).unwrap();
        assert_eq!(*c, *a);
    }

    #[test]
    fn asymptotic_examples() {
        assert_eq!(asymptotic_pvalue_lr(0.0), 1.0);
        assert_relative_eq!(asymptotic_pvalue_lr(1.0), 0.36788, epsilon = 1e-5);
        assert_eq!(asymptotic_pvalue_lr(-2.0), 1.0);
        assert_eq!(asymptotic_pvalue_glr(0.0), 1.0);
        assert_relative_eq!(asymptotic_pvalue_glr(2.0), 0.13534, epsilon = 1e-5);
        assert_relative_eq!(asymptotic_pvalue_glr(3.0), 0.011109, epsilon = 1e-6);
        assert!(asymptotic_pvalue_glr(1e3) > 0.0);
        assert!(asymptotic_pvalue_lr(1e4) > 0.0);
    }

    #[test]
    fn snapshot_validation() {
        assert!(PValueSnapshot::new(vec![0.5, 1.0], 1).is_ok());
        assert!(PValueSnapshot::new(vec![0.0, 0.5], 1).is_err());
        assert!(PValueSnapshot::new(vec![1.5], 1).is_err());
        assert!(PValueSnapshot::new(vec![f64::NAN], 1).is_err());
    }
}
