//! Monte Carlo estimators with explicit error contracts.
//!
//! Mean-type quantities come with a standard error (sample standard
//! deviation over `√m`). The Kolmogorov distance comes with the
//! Dvoretzky–Kiefer–Wolfowitz radius: with probability at least
//! `1 − δ`, `sup_t |F̂_m(t) − F(t)| ≤ sqrt(ln(2/δ) / 2m)`, hence
//! `|D̂ − D| ≤ ε` on the same event.
//!
//! All reductions run sequentially in path order so estimates are
//! reproducible bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::std_normal_cdf;
use crate::sampler::{PathBatch, PathStatistics};

/// Default DKW confidence parameter `δ`.
pub const DEFAULT_CONFIDENCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub m: usize,
}

impl Estimate {
    /// Sample mean and its standard error. A constant sample reports its
    /// value exactly with zero standard error.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let m = samples.len();
        let Some(&first) = samples.first() else {
            return Err(Error::Empty { what: "sample" });
        };
        if samples.iter().all(|&x| x == first) {
            return Ok(Estimate {
                value: first,
                stderr: 0.0,
                m,
            });
        }
        let mean = samples.iter().sum::<f64>() / m as f64;
        let var = if m > 1 {
            samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        Ok(Estimate {
            value: mean,
            stderr: (var / m as f64).sqrt(),
            m,
        })
    }

    /// `|value − target| ≤ k·stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KolmogorovEstimate {
    /// `sup_t |F̂_m(t) − Φ(t)|` over the rescaled sample.
    pub d_hat: f64,
    /// DKW radius at level `1 − confidence`.
    pub dkw_epsilon: f64,
    /// The `δ` of the DKW radius.
    pub confidence: f64,
    pub m: usize,
}

/// `sqrt(ln(2/δ) / 2m)`.
pub fn dkw_epsilon(m: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * m as f64)).sqrt()
}

fn check_nonempty<B: PathStatistics + ?Sized>(batch: &B) -> Result<()> {
    if batch.paths() == 0 {
        Err(Error::Empty { what: "batch" })
    } else {
        Ok(())
    }
}

fn check_s2(s2: f64) -> Result<()> {
    if s2 > 0.0 && s2.is_finite() {
        Ok(())
    } else {
        Err(Error::arg("s2", "must be positive and finite"))
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::arg("p", "must be a finite real >= 1"))
    }
}

/// `s²(X)` as the path mean of `Σ_i E[X_i² | F_{i−1}]`, unbiased by the
/// tower property.
pub fn estimate_s2<B: PathStatistics + ?Sized>(batch: &B) -> Result<Estimate> {
    check_nonempty(batch)?;
    let qv: Vec<f64> = (0..batch.paths()).map(|k| batch.quadratic_variation(k)).collect();
    Estimate::from_samples(&qv)
}

/// `‖V² − 1‖_p^p` as the path mean of `|Σ_i v_i / s2 − 1|^p`, with `s2`
/// supplied from an independent batch or from the oracle.
pub fn estimate_v2_moment<B: PathStatistics + ?Sized>(batch: &B, s2: f64, p: f64) -> Result<Estimate> {
    check_nonempty(batch)?;
    check_s2(s2)?;
    check_p(p)?;
    let samples: Vec<f64> = (0..batch.paths())
        .map(|k| (batch.quadratic_variation(k) / s2 - 1.0).abs().powf(p))
        .collect();
    Estimate::from_samples(&samples)
}

/// Largest `|V² − 1|` seen in the batch. This is a lower bound for the
/// essential supremum.
pub fn estimate_sup_v2_deviation<B: PathStatistics + ?Sized>(batch: &B, s2: f64) -> Result<f64> {
    check_nonempty(batch)?;
    check_s2(s2)?;
    Ok((0..batch.paths())
        .map(|k| (batch.quadratic_variation(k) / s2 - 1.0).abs())
        .fold(0.0, f64::max))
}

/// `Σ_i ‖X_i‖_{2p}^{2p}` as the path mean of `Σ_i E[|X_i|^{2p} | F_{i−1}]`.
pub fn estimate_moment_sum<B: PathStatistics + ?Sized>(batch: &B, p: f64) -> Result<Estimate> {
    check_nonempty(batch)?;
    check_p(p)?;
    let samples: Vec<f64> = (0..batch.paths())
        .map(|k| batch.conditional_moment_sum(k, p))
        .collect();
    Estimate::from_samples(&samples)
}

/// `E[X_i²]` for every step `i = 1..=n` of a full batch.
pub fn estimate_step_second_moments(batch: &PathBatch) -> Result<Vec<Estimate>> {
    check_nonempty(batch)?;
    let mut column = vec![0.0; batch.m()];
    (0..batch.n())
        .map(|i| {
            for (k, slot) in column.iter_mut().enumerate() {
                *slot = batch.cond_variances_row(k)[i];
            }
            Estimate::from_samples(&column)
        })
        .collect()
}

/// Kolmogorov distance between the law of `S / scale` and `Φ`, estimated
/// from terminal sums.
///
/// The empirical distribution function is a step function, so the supremum
/// of `|F̂_m − Φ|` is attained at a sample point, either at the jump value or
/// at its left limit. One sort and one pass suffice.
pub fn estimate_kolmogorov(terminal_sums: &[f64], scale: f64, delta: f64) -> Result<KolmogorovEstimate> {
    if terminal_sums.is_empty() {
        return Err(Error::Empty { what: "sample" });
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::arg("scale", "must be positive and finite"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::arg("confidence", "must lie in (0, 1)"));
    }
    let m = terminal_sums.len();
    let mut z: Vec<f64> = terminal_sums.iter().map(|s| s / scale).collect();
    z.sort_unstable_by(f64::total_cmp);

    let inv_m = 1.0 / m as f64;
    let mut d: f64 = 0.0;
    let mut idx = 0;
    while idx < m {
        let t = z[idx];
        let start = idx;
        while idx < m && z[idx] == t {
            idx += 1;
        }
        let phi = std_normal_cdf(t);
        let before = start as f64 * inv_m;
        let at = idx as f64 * inv_m;
        d = d.max((at - phi).abs()).max((before - phi).abs());
    }
    Ok(KolmogorovEstimate {
        d_hat: d.min(1.0),
        dkw_epsilon: dkw_epsilon(m, delta),
        confidence: delta,
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::rng::RngPolicy;
    use crate::sampler::{sample_paths, sample_summaries};
    use proptest::prelude::*;

    const BANDED: KernelSpec = KernelSpec::Banded {
        alpha: 0.75,
        beta: 0.25,
    };

    #[test]
    fn estimate_basics() {
        let e = Estimate::from_samples(&[0.1; 7]).unwrap();
        assert_eq!((e.value, e.stderr, e.m), (0.1, 0.0, 7));
        let e = Estimate::from_samples(&[1.0, 3.0]).unwrap();
        assert_eq!(e.value, 2.0);
        assert!((e.stderr - 1.0).abs() < 1e-15);
        assert!(Estimate::from_samples(&[]).is_err());
    }

    #[test]
    fn rademacher_s2_and_v2_are_exact() {
        let batch = sample_paths(&KernelSpec::Rademacher, 10, 500, RngPolicy::new(1)).unwrap();
        let s2 = estimate_s2(&batch).unwrap();
        assert_eq!((s2.value, s2.stderr), (10.0, 0.0));
        for p in [1.0, 2.0, 7.5] {
            let v = estimate_v2_moment(&batch, 10.0, p).unwrap();
            assert_eq!((v.value, v.stderr), (0.0, 0.0));
        }
        assert_eq!(estimate_sup_v2_deviation(&batch, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn argument_errors() {
        let batch = sample_paths(&KernelSpec::Rademacher, 3, 10, RngPolicy::new(1)).unwrap();
        assert!(estimate_v2_moment(&batch, 0.0, 1.0).is_err());
        assert!(estimate_v2_moment(&batch, 3.0, 0.9).is_err());
        assert!(estimate_sup_v2_deviation(&batch, -1.0).is_err());
        assert!(estimate_kolmogorov(&[], 1.0, 0.01).is_err());
        assert!(estimate_kolmogorov(&[1.0], 0.0, 0.01).is_err());
        assert!(estimate_kolmogorov(&[1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn kolmogorov_of_point_mass() {
        let k = estimate_kolmogorov(&[0.0; 100], 1.0, 0.01).unwrap();
        assert_eq!(k.d_hat, 0.5);
        assert!((k.dkw_epsilon - (200f64.ln() / 200.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_of_single_rademacher_step() {
        let batch = sample_paths(&KernelSpec::Rademacher, 1, 1_000_000, RngPolicy::new(2)).unwrap();
        let k = estimate_kolmogorov(batch.terminal_sums_slice(), 1.0, 0.01).unwrap();
        let exact = std_normal_cdf(1.0) - 0.5;
        assert!((k.d_hat - exact).abs() <= k.dkw_epsilon);
    }

    #[test]
    fn sup_deviation_tends_to_one_for_huge_scale() {
        let batch = sample_summaries(&BANDED, 64, 1000, RngPolicy::new(3)).unwrap();
        let s2 = estimate_s2(&batch).unwrap().value;
        let sup = estimate_sup_v2_deviation(&batch, 1e6 * s2).unwrap();
        assert!((sup - 1.0).abs() < 1e-5);
        assert!(estimate_sup_v2_deviation(&batch, s2).unwrap() > 0.0);
    }

    #[test]
    fn step_moments_of_rademacher() {
        let batch = sample_paths(&KernelSpec::Rademacher, 4, 50, RngPolicy::new(3)).unwrap();
        let steps = estimate_step_second_moments(&batch).unwrap();
        assert_eq!(steps.len(), 4);
        assert!(steps.iter().all(|e| e.value == 1.0 && e.stderr == 0.0));
    }

    #[test]
    fn moment_sum_for_p_one_is_s2() {
        let batch = sample_summaries(&BANDED, 128, 2000, RngPolicy::new(4)).unwrap();
        let a = estimate_moment_sum(&batch, 1.0).unwrap();
        let b = estimate_s2(&batch).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
    }

    #[test]
    fn large_banded_batch_properties() {
        let n = 4096;
        let m = 100_000;
        let batch = sample_summaries(&BANDED, n, m, RngPolicy::new(12)).unwrap();
        let sums = batch.terminal_sums();
        let mean = Estimate::from_samples(&sums).unwrap();
        assert!(mean.within(0.0, 3.0), "{mean:?}");
        let s2 = estimate_s2(&batch).unwrap();
        let ratio = s2.value / n as f64;
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn path_order_does_not_matter(seed in 0u64..1000, shift in 1usize..200) {
            let batch = sample_paths(&BANDED, 48, 300, RngPolicy::new(seed)).unwrap();
            let s2 = estimate_s2(&batch).unwrap();
            let v = estimate_v2_moment(&batch, s2.value, 1.5).unwrap();
            let k = estimate_kolmogorov(batch.terminal_sums_slice(), s2.value.sqrt(), 0.05).unwrap();

            let mut rotated_qv: Vec<f64> = (0..300).map(|j| batch.quadratic_variation(j)).collect();
            rotated_qv.rotate_left(shift);
            let mut rotated_s: Vec<f64> = batch.terminal_sums();
            rotated_s.rotate_left(shift);
            let s2_rot = Estimate::from_samples(&rotated_qv).unwrap();
            prop_assert!((s2_rot.value - s2.value).abs() <= 1e-12 * s2.value);
            let v_rot: Vec<f64> = rotated_qv.iter().map(|q| (q / s2.value - 1.0).abs().powf(1.5)).collect();
            let v_rot = Estimate::from_samples(&v_rot).unwrap();
            prop_assert!((v_rot.value - v.value).abs() <= 1e-12);
            let k_rot = estimate_kolmogorov(&rotated_s, s2.value.sqrt(), 0.05).unwrap();
            prop_assert_eq!(k_rot.d_hat, k.d_hat);
        }
    }
}
