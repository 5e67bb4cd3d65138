//! Batches of martingale paths with exact conditional variances.
//!
//! Each path is generated sequentially: step `i` reads the current partial
//! sum, asks the kernel which branch applies, and draws one fair sign. The
//! conditional variance of every step is stored next to the increment, so
//! the quadratic variation of a path is known exactly given its history.
//!
//! Two representations are produced:
//!
//! * [`PathBatch`] keeps every increment (row-major `m × n`), subject to a
//!   memory budget.
//! * [`PathSummaries`] keeps only per-path reductions and has no size limit.
//!
//! Both consume the per-path sign streams in the same order, so for equal
//! inputs they agree bit for bit on every statistic they share.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{Branch, KernelPlan, KernelSpec};
use crate::rng::{Phase, RngPolicy, SignSource, StreamFactory};

/// Default cap on the bytes held by a full [`PathBatch`].
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

/// Per-path quantities the estimators need, shared by both batch
/// representations.
pub trait PathStatistics: Sync {
    /// Path length `n`.
    fn steps(&self) -> usize;
    /// Number of paths `m`.
    fn paths(&self) -> usize;
    /// `S(X)` of path `k`.
    fn terminal_sum(&self, k: usize) -> f64;
    /// `Σ_i E[X_i² | F_{i−1}]` along path `k`.
    fn quadratic_variation(&self, k: usize) -> f64;
    /// `Σ_i E[|X_i|^{2p} | F_{i−1}]` along path `k`. Every kernel here is a
    /// fair sign times a predictable magnitude, so each summand is `v_i^p`.
    fn conditional_moment_sum(&self, k: usize, p: f64) -> f64;
    /// `max_i |X_i|` along path `k`.
    fn max_abs_increment(&self, k: usize) -> f64;

    fn terminal_sums(&self) -> Vec<f64> {
        (0..self.paths()).map(|k| self.terminal_sum(k)).collect()
    }
}

/// `m` full paths of length `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBatch {
    n: usize,
    m: usize,
    seed: u64,
    increments: Vec<f64>,
    cond_variances: Vec<f64>,
    terminal_sums: Vec<f64>,
}

impl PathBatch {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major `m × n` increments.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Row-major `m × n` conditional variances.
    pub fn cond_variances(&self) -> &[f64] {
        &self.cond_variances
    }

    pub fn increments_row(&self, k: usize) -> &[f64] {
        &self.increments[k * self.n..(k + 1) * self.n]
    }

    pub fn cond_variances_row(&self, k: usize) -> &[f64] {
        &self.cond_variances[k * self.n..(k + 1) * self.n]
    }

    pub fn terminal_sums_slice(&self) -> &[f64] {
        &self.terminal_sums
    }

    /// `S_{n,i}` for every path; `i = 0` gives zeros and `i = n` the
    /// terminal sums.
    pub fn running_sum_prefixes(&self, i: usize) -> Result<Vec<f64>> {
        if i > self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                lo: 0,
                hi: self.n,
            });
        }
        Ok((0..self.m)
            .map(|k| self.increments_row(k)[..i].iter().sum())
            .collect())
    }

    /// Per-path reduction to a [`PathSummaries`].
    pub fn summarize(&self) -> PathSummaries {
        let paths = (0..self.m)
            .map(|k| {
                let mut summary = PathSummary {
                    terminal_sum: self.terminal_sums[k],
                    ..PathSummary::default()
                };
                for (&x, &v) in self.increments_row(k).iter().zip(self.cond_variances_row(k)) {
                    summary.quadratic_variation += v;
                    summary.max_abs = summary.max_abs.max(x.abs());
                    if v > 1.0 {
                        summary.inflated += 1;
                    } else if v < 1.0 {
                        summary.deflated += 1;
                    }
                }
                summary
            })
            .collect();
        PathSummaries {
            n: self.n,
            seed: self.seed,
            paths,
        }
    }

    /// Debug dump: `n`, `m`, `seed` as little-endian `u64`, then the
    /// increments and the conditional variances as row-major little-endian
    /// `f64`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        for header in [self.n as u64, self.m as u64, self.seed] {
            w.write_all(&header.to_le_bytes())?;
        }
        for x in self.increments.iter().chain(&self.cond_variances) {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let m = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        let len = n
            .checked_mul(m)
            .ok_or_else(|| Error::arg("dump", "header overflows"))?;
        let mut read_block = |r: &mut R| -> Result<Vec<f64>> {
            (0..len)
                .map(|_| next(r).map(f64::from_le_bytes))
                .collect()
        };
        let increments = read_block(&mut r)?;
        let cond_variances = read_block(&mut r)?;
        let terminal_sums = increments
            .chunks(n.max(1))
            .take(m)
            .map(|row| row.iter().sum())
            .collect();
        Ok(PathBatch {
            n,
            m,
            seed,
            increments,
            cond_variances,
            terminal_sums,
        })
    }
}

impl PathStatistics for PathBatch {
    fn steps(&self) -> usize {
        self.n
    }

    fn paths(&self) -> usize {
        self.m
    }

    fn terminal_sum(&self, k: usize) -> f64 {
        self.terminal_sums[k]
    }

    fn quadratic_variation(&self, k: usize) -> f64 {
        self.cond_variances_row(k).iter().sum()
    }

    fn conditional_moment_sum(&self, k: usize, p: f64) -> f64 {
        self.cond_variances_row(k).iter().map(|v| v.powf(p)).sum()
    }

    fn max_abs_increment(&self, k: usize) -> f64 {
        self.increments_row(k)
            .iter()
            .fold(0.0, |acc, x| acc.max(x.abs()))
    }

    fn terminal_sums(&self) -> Vec<f64> {
        self.terminal_sums.clone()
    }
}

/// Reduction of one path.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PathSummary {
    pub terminal_sum: f64,
    pub quadratic_variation: f64,
    pub max_abs: f64,
    /// Steps drawn from the `±√(3/2)` law.
    pub inflated: u32,
    /// Steps drawn from the `±√(1/2)` law.
    pub deflated: u32,
}

/// Streaming representation: one [`PathSummary`] per path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSummaries {
    n: usize,
    seed: u64,
    paths: Vec<PathSummary>,
}

impl PathSummaries {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.paths.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn summaries(&self) -> &[PathSummary] {
        &self.paths
    }
}

impl PathStatistics for PathSummaries {
    fn steps(&self) -> usize {
        self.n
    }

    fn paths(&self) -> usize {
        self.paths.len()
    }

    fn terminal_sum(&self, k: usize) -> f64 {
        self.paths[k].terminal_sum
    }

    fn quadratic_variation(&self, k: usize) -> f64 {
        self.paths[k].quadratic_variation
    }

    fn conditional_moment_sum(&self, k: usize, p: f64) -> f64 {
        let s = &self.paths[k];
        let unit = (self.n - s.inflated as usize - s.deflated as usize) as f64;
        unit + s.inflated as f64 * 1.5f64.powf(p) + s.deflated as f64 * 0.5f64.powf(p)
    }

    fn max_abs_increment(&self, k: usize) -> f64 {
        self.paths[k].max_abs
    }
}

fn check_shape(n: usize, m: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::arg("n", "must be at least 1"));
    }
    if m == 0 {
        return Err(Error::arg("m", "must be at least 1"));
    }
    Ok(())
}

fn fill_path(
    plan: &KernelPlan,
    streams: &StreamFactory,
    k: usize,
    increments: &mut [f64],
    cond_variances: &mut [f64],
) -> f64 {
    let mut signs = SignSource::new(streams.stream(k as u64));
    let mut s = 0.0;
    for (idx, (x, v)) in increments.iter_mut().zip(cond_variances.iter_mut()).enumerate() {
        let b = plan.branch(idx + 1, s);
        *x = signs.next_sign() * b.magnitude();
        *v = b.variance();
        s += *x;
    }
    s
}

fn summarize_path(plan: &KernelPlan, streams: &StreamFactory, k: usize) -> PathSummary {
    let mut signs = SignSource::new(streams.stream(k as u64));
    let prefix = plan.unit_prefix();
    let mut summary = PathSummary {
        terminal_sum: signs.sum_signs(prefix) as f64,
        quadratic_variation: prefix as f64,
        max_abs: if prefix > 0 { 1.0 } else { 0.0 },
        ..PathSummary::default()
    };
    for i in prefix + 1..=plan.n() {
        let b = plan.branch(i, summary.terminal_sum);
        let x = signs.next_sign() * b.magnitude();
        summary.terminal_sum += x;
        summary.quadratic_variation += b.variance();
        summary.max_abs = summary.max_abs.max(x.abs());
        match b {
            Branch::Inflated => summary.inflated += 1,
            Branch::Deflated => summary.deflated += 1,
            Branch::Unit => {}
        }
    }
    summary
}

/// Samples `m` full paths of length `n`, refusing batches larger than
/// [`DEFAULT_MEMORY_BUDGET`].
pub fn sample_paths(spec: &KernelSpec, n: usize, m: usize, policy: RngPolicy) -> Result<PathBatch> {
    sample_paths_with_budget(spec, n, m, policy, DEFAULT_MEMORY_BUDGET)
}

pub fn sample_paths_with_budget(
    spec: &KernelSpec,
    n: usize,
    m: usize,
    policy: RngPolicy,
    budget_bytes: usize,
) -> Result<PathBatch> {
    check_shape(n, m)?;
    let plan = KernelPlan::new(spec, n)?;
    let bytes = n
        .checked_mul(m)
        .and_then(|c| c.checked_mul(16))
        .and_then(|b| b.checked_add(8 * m));
    if bytes.is_none_or(|b| b > budget_bytes) {
        return Err(Error::ResourceLimit {
            paths: m,
            steps: n,
            budget_bytes,
        });
    }
    let streams = policy.streams(Phase::Path);
    let mut increments = vec![0.0; n * m];
    let mut cond_variances = vec![0.0; n * m];
    let mut terminal_sums = vec![0.0; m];
    increments
        .par_chunks_mut(n)
        .zip(cond_variances.par_chunks_mut(n))
        .zip(terminal_sums.par_iter_mut())
        .enumerate()
        .for_each(|(k, ((inc, var), total))| {
            *total = fill_path(&plan, &streams, k, inc, var);
        });
    Ok(PathBatch {
        n,
        m,
        seed: policy.master_seed,
        increments,
        cond_variances,
        terminal_sums,
    })
}

/// Samples `m` paths of length `n`, keeping only per-path reductions.
pub fn sample_summaries(
    spec: &KernelSpec,
    n: usize,
    m: usize,
    policy: RngPolicy,
) -> Result<PathSummaries> {
    check_shape(n, m)?;
    let plan = KernelPlan::new(spec, n)?;
    let streams = policy.streams(Phase::Path);
    let paths = (0..m)
        .into_par_iter()
        .with_min_len(256)
        .map(|k| summarize_path(&plan, &streams, k))
        .collect();
    Ok(PathSummaries {
        n,
        seed: policy.master_seed,
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::conditional_variance;
    use rand::{Rng, SeedableRng};

    const BANDED: KernelSpec = KernelSpec::Banded {
        alpha: 0.75,
        beta: 0.25,
    };

    #[test]
    fn rademacher_variances_are_one() {
        let batch = sample_paths(&KernelSpec::Rademacher, 5, 1000, RngPolicy::new(7)).unwrap();
        assert!(batch.cond_variances().iter().all(|&v| v == 1.0));
        assert!(batch.increments().iter().all(|&x| x == 1.0 || x == -1.0));
    }

    #[test]
    fn prefixes() {
        let batch = sample_paths(&KernelSpec::Rademacher, 6, 300, RngPolicy::new(3)).unwrap();
        assert!(batch.running_sum_prefixes(0).unwrap().iter().all(|&s| s == 0.0));
        assert_eq!(batch.running_sum_prefixes(6).unwrap(), batch.terminal_sums());
        assert!(batch
            .running_sum_prefixes(1)
            .unwrap()
            .iter()
            .all(|&s| s == 1.0 || s == -1.0));
        assert!(matches!(
            batch.running_sum_prefixes(7),
            Err(Error::IndexOutOfRange { index: 7, .. })
        ));
    }

    #[test]
    fn batch_invariants() {
        let batch = sample_paths(&BANDED, 64, 2000, RngPolicy::new(11)).unwrap();
        for k in 0..batch.m() {
            let row_sum: f64 = batch.increments_row(k).iter().sum();
            assert!((row_sum - batch.terminal_sum(k)).abs() <= 1e-9);
        }
        assert!(batch
            .cond_variances()
            .iter()
            .all(|&v| v == 0.5 || v == 1.0 || v == 1.5));
        assert!(batch.increments().iter().all(|x| x.abs() <= 2.0));
        assert!(batch.cond_variances().iter().any(|&v| v != 1.0));
    }

    #[test]
    fn stored_variances_match_recomputed_states() {
        let n = 128;
        let batch = sample_paths(&BANDED, n, 500, RngPolicy::new(5)).unwrap();
        let mut probe = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k = probe.random_range(0..batch.m());
            let i = probe.random_range(1..=n);
            let s_prev: f64 = batch.increments_row(k)[..i - 1].iter().sum();
            let expected = conditional_variance(&BANDED, n, i, s_prev).unwrap();
            assert_eq!(batch.cond_variances_row(k)[i - 1], expected);
        }
    }

    #[test]
    fn independent_of_worker_count() {
        let policy = RngPolicy::new(42);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    (
                        sample_paths(&BANDED, 40, 3000, policy).unwrap(),
                        sample_summaries(&BANDED, 300, 3000, policy).unwrap(),
                    )
                })
        };
        let (a, sa) = run(1);
        let (b, sb) = run(8);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn summaries_agree_with_full_batch() {
        for spec in [KernelSpec::Rademacher, BANDED] {
            for n in [1, 7, 64, 65, 200] {
                let policy = RngPolicy::new(n as u64);
                let full = sample_paths(&spec, n, 400, policy).unwrap();
                let streamed = sample_summaries(&spec, n, 400, policy).unwrap();
                assert_eq!(full.summarize(), streamed, "n = {n}");
                for k in 0..400 {
                    assert_eq!(
                        full.conditional_moment_sum(k, 2.0),
                        streamed.conditional_moment_sum(k, 2.0)
                    );
                }
            }
        }
    }

    #[test]
    fn martingale_step_means() {
        let m = 20_000;
        let n = 256;
        let batch = sample_paths(&BANDED, n, m, RngPolicy::new(8)).unwrap();
        for i in (0..n).step_by(17).chain([n - 1]) {
            let mean: f64 = (0..m).map(|k| batch.increments_row(k)[i]).sum::<f64>() / m as f64;
            assert!(mean.abs() <= 4.0 / (m as f64).sqrt(), "step {i}: {mean}");
        }
    }

    #[test]
    fn memory_budget_is_enforced() {
        let err = sample_paths_with_budget(&KernelSpec::Rademacher, 1000, 1000, RngPolicy::new(0), 1 << 20)
            .unwrap_err();
        assert!(matches!(err, Error::ResourceLimit { .. }));
        assert!(err.is_budget());
        assert!(sample_paths(&KernelSpec::Rademacher, 0, 10, RngPolicy::new(0)).is_err());
        assert!(sample_summaries(&KernelSpec::Rademacher, 10, 0, RngPolicy::new(0)).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let batch = sample_paths(&BANDED, 33, 17, RngPolicy::new(9)).unwrap();
        let mut bytes = Vec::new();
        batch.write_dump(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 24 + 2 * 8 * 33 * 17);
        assert_eq!(&bytes[..8], &33u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &9u64.to_le_bytes());
        assert_eq!(PathBatch::read_dump(&bytes[..]).unwrap(), batch);
    }
}
