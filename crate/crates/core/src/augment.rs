//! Extension of a bounded-increment path of length `n` to length `2n` with
//! deterministic quadratic variation.
//!
//! Given the conditional variances `v_i` of a path and the total variance
//! `s²` of the sequence that generated it:
//!
//! 1. `τ` is the last index `k ≤ n` with `Σ_{i≤k} v_i ≤ s²`; the first `τ`
//!    increments are kept.
//! 2. The deficit `s² − Σ_{i≤τ} v_i` is paid with `r = ⌊deficit / γ²⌋` fair
//!    `±γ` steps,
//! 3. then one fair step of magnitude `sqrt(deficit − rγ²)`,
//! 4. then zeros up to length `2n`.
//!
//! The extended path has `Σ v̂_i = s²` on every history, so `V² = 1` almost
//! surely, and no increment exceeds `γ`.

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{Phase, RngPolicy, SignSource};
use crate::sampler::PathBatch;

/// Accumulated round-off tolerated on variance sums.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentResult {
    pub increments: Vec<f64>,
    pub cond_variances: Vec<f64>,
    /// Number of original increments kept.
    pub tau: usize,
    /// Number of `±γ` filler steps.
    pub r: usize,
    pub residual_magnitude: f64,
}

impl AugmentResult {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn terminal_sum(&self) -> f64 {
        self.increments.iter().sum()
    }
}

/// Augments one path. Signs of the filler and residual steps come from
/// `rng`, one bit each.
pub fn augment_path<R: RngCore>(
    increments: &[f64],
    cond_variances: &[f64],
    s2: f64,
    gamma: f64,
    rng: R,
) -> Result<AugmentResult> {
    let n = increments.len();
    if cond_variances.len() != n {
        return Err(Error::arg(
            "cond_variances",
            format!("length {} differs from {n} increments", cond_variances.len()),
        ));
    }
    if !(s2 > 0.0) || !s2.is_finite() {
        return Err(Error::arg("s2", "must be positive and finite"));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::arg("gamma", "must be positive and finite"));
    }
    if let Some(x) = increments.iter().find(|x| x.abs() > gamma) {
        return Err(Error::Precondition(format!(
            "increment {x} exceeds gamma = {gamma}"
        )));
    }

    let mut tau = 0;
    let mut kept = 0.0;
    for &v in cond_variances {
        let next = kept + v;
        if next > s2 {
            break;
        }
        kept = next;
        tau += 1;
    }

    let g2 = gamma * gamma;
    let deficit = s2 - kept;
    let mut r = (deficit / g2).floor().max(0.0) as usize;
    let mut residual_var = deficit - r as f64 * g2;
    if residual_var >= g2 {
        r += 1;
        residual_var -= g2;
    }
    if residual_var < -VARIANCE_TOLERANCE {
        return Err(Error::Precondition(format!(
            "negative residual variance {residual_var}"
        )));
    }
    let residual_var = residual_var.max(0.0);
    let needs_residual = residual_var > VARIANCE_TOLERANCE;
    if r > n || tau + r + usize::from(needs_residual) > 2 * n {
        return Err(Error::Precondition(format!(
            "s2 = {s2} needs {r} filler steps of size {gamma}, more than a length-{n} path allows"
        )));
    }

    let len = 2 * n;
    let mut signs = SignSource::new(rng);
    let mut out_x = Vec::with_capacity(len);
    let mut out_v = Vec::with_capacity(len);
    out_x.extend_from_slice(&increments[..tau]);
    out_v.extend_from_slice(&cond_variances[..tau]);
    for _ in 0..r {
        out_x.push(signs.next_sign() * gamma);
        out_v.push(g2);
    }
    let residual_magnitude = residual_var.sqrt();
    if out_x.len() < len {
        out_x.push(signs.next_sign() * residual_magnitude);
        out_v.push(residual_var);
    }
    out_x.resize(len, 0.0);
    out_v.resize(len, 0.0);

    Ok(AugmentResult {
        increments: out_x,
        cond_variances: out_v,
        tau,
        r,
        residual_magnitude,
    })
}

/// `Σ v̂_i = s²` within [`VARIANCE_TOLERANCE`].
pub fn verify_v2_one(result: &AugmentResult, s2: f64) -> bool {
    let total: f64 = result.cond_variances.iter().sum();
    (total - s2).abs() <= VARIANCE_TOLERANCE
}

/// Pass counts of the augmentation invariants over a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AugmentCheck {
    pub paths: usize,
    pub v2_one: usize,
    pub length: usize,
    pub bounded: usize,
    pub prefix: usize,
    pub zero_tail: usize,
}

impl AugmentCheck {
    pub fn all_pass(&self) -> bool {
        [self.v2_one, self.length, self.bounded, self.prefix, self.zero_tail]
            .iter()
            .all(|&c| c == self.paths)
    }
}

/// Augments every path of `batch` (signs from the [`Phase::Augment`]
/// stream of each path) and counts how many satisfy each invariant.
pub fn check_batch(batch: &PathBatch, s2: f64, gamma: f64, policy: RngPolicy) -> Result<AugmentCheck> {
    let streams = policy.streams(Phase::Augment);
    let n = batch.n();
    let outcomes = (0..batch.m())
        .into_par_iter()
        .map(|k| {
            let x = batch.increments_row(k);
            let res = augment_path(x, batch.cond_variances_row(k), s2, gamma, streams.stream(k as u64))?;
            let tail_start = (res.tau + res.r + 1).min(res.len());
            Ok([
                verify_v2_one(&res, s2),
                res.len() == 2 * n,
                res.increments.iter().all(|v| v.abs() <= gamma),
                res.increments[..res.tau] == x[..res.tau],
                res.increments[tail_start..].iter().all(|&v| v == 0.0),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut check = AugmentCheck {
        paths: outcomes.len(),
        ..AugmentCheck::default()
    };
    for o in outcomes {
        check.v2_one += o[0] as usize;
        check.length += o[1] as usize;
        check.bounded += o[2] as usize;
        check.prefix += o[3] as usize;
        check.zero_tail += o[4] as usize;
    }
    Ok(check)
}
