//! Exact enumeration of the partial-sum chain for short lengths.
//!
//! Every increment is `±1`, `±√(3/2)` or `±√(1/2)`, and these three numbers
//! are linearly independent over the rationals, so a reachable partial sum
//! is identified exactly by its integer coefficient triple ([`StateKey`]).
//! Probabilities are dyadic rationals `k/2^i` and stay exact in `f64` up to
//! the enumeration cap of 40 steps.
//!
//! The enumeration also tracks the accumulated conditional variance of each
//! history, counted in half units, so the law of `V²` is exact as well.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{self, Branch, KernelSpec};
use crate::normal::std_normal_cdf;

/// Longest chain the oracle will enumerate.
pub const MAX_ENUMERATION_STEPS: usize = 40;

/// Hard cap on the number of annotated atoms held at any step.
pub const DEFAULT_ATOM_BUDGET: usize = 10_000_000;

const SQRT_3_2: f64 = 1.224_744_871_391_589;
const SQRT_1_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Exact partial-sum value `a + b·√(3/2) + c·√(1/2)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StateKey {
    pub a: i32,
    pub b: i32,
    pub c: i32,
}

impl StateKey {
    pub const ORIGIN: StateKey = StateKey { a: 0, b: 0, c: 0 };

    pub fn new(a: i32, b: i32, c: i32) -> Self {
        StateKey { a, b, c }
    }

    pub fn value(&self) -> f64 {
        self.a as f64 + self.b as f64 * SQRT_3_2 + self.c as f64 * SQRT_1_2
    }

    /// Number of increments needed to reach this state, at least.
    pub fn norm(&self) -> u32 {
        self.a.unsigned_abs() + self.b.unsigned_abs() + self.c.unsigned_abs()
    }

    fn shifted(self, branch: Branch, sign: i32) -> StateKey {
        let mut next = self;
        match branch {
            Branch::Unit => next.a += sign,
            Branch::Inflated => next.b += sign,
            Branch::Deflated => next.c += sign,
        }
        next
    }
}

/// Exact law of the partial sum after `step` increments.
#[derive(Clone, Debug, PartialEq)]
pub struct StateDistribution {
    step: usize,
    atoms: BTreeMap<StateKey, f64>,
}

impl StateDistribution {
    pub fn new(step: usize, atoms: BTreeMap<StateKey, f64>) -> Self {
        StateDistribution { step, atoms }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn atoms(&self) -> &BTreeMap<StateKey, f64> {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.atoms.values().sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(k, p)| k.value() * p).sum()
    }

    pub fn probability(&self, key: StateKey) -> f64 {
        self.atoms.get(&key).copied().unwrap_or(0.0)
    }
}

/// Output of [`enumerate_chain`].
#[derive(Clone, Debug)]
pub struct ChainEnumeration {
    spec: KernelSpec,
    n: usize,
    distributions: Vec<StateDistribution>,
    step_second_moments: Vec<f64>,
    s2_prefix: Vec<f64>,
    histories: BTreeMap<(StateKey, u32), f64>,
}

impl ChainEnumeration {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Law of `S_{n,i}` for `i = 0..=n`.
    pub fn distributions(&self) -> &[StateDistribution] {
        &self.distributions
    }

    pub fn terminal(&self) -> &StateDistribution {
        &self.distributions[self.n]
    }

    /// `E[X²_{ni}]` for `i = 1..=n` (index `i − 1`).
    pub fn step_second_moments(&self) -> &[f64] {
        &self.step_second_moments
    }

    /// `s²(X_{ni})` for `i = 0..=n`.
    pub fn s2_prefix(&self) -> &[f64] {
        &self.s2_prefix
    }

    /// `s²(X_n)`.
    pub fn s2(&self) -> f64 {
        self.s2_prefix[self.n]
    }

    /// Final-step atoms keyed by `(state, Σ 2·E[X_i² | F_{i−1}])`.
    pub fn histories(&self) -> &BTreeMap<(StateKey, u32), f64> {
        &self.histories
    }
}

/// Enumerates the chain with the default atom budget.
pub fn enumerate_chain(spec: &KernelSpec, n: usize) -> Result<ChainEnumeration> {
    enumerate_chain_with_budget(spec, n, DEFAULT_ATOM_BUDGET)
}

pub fn enumerate_chain_with_budget(
    spec: &KernelSpec,
    n: usize,
    atom_budget: usize,
) -> Result<ChainEnumeration> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::arg("n", "must be at least 1"));
    }
    if n > MAX_ENUMERATION_STEPS {
        return Err(Error::EnumerationTooLong {
            n,
            max: MAX_ENUMERATION_STEPS,
        });
    }

    let mut layer: BTreeMap<(StateKey, u32), f64> = BTreeMap::new();
    layer.insert((StateKey::ORIGIN, 0), 1.0);
    let mut distributions = vec![project(0, &layer)];
    let mut step_second_moments = Vec::with_capacity(n);
    let mut s2_prefix = vec![0.0];

    for i in 1..=n {
        let mut second_moment = 0.0;
        for (key, &p) in distributions[i - 1].atoms() {
            second_moment += p * kernels::conditional_variance(spec, n, i, key.value())?;
        }
        step_second_moments.push(second_moment);
        s2_prefix.push(s2_prefix[i - 1] + second_moment);

        let mut next: BTreeMap<(StateKey, u32), f64> = BTreeMap::new();
        for (&(key, half_units), &p) in &layer {
            let b = kernels::branch(spec, n, i, key.value())?;
            for sign in [-1, 1] {
                *next
                    .entry((key.shifted(b, sign), half_units + b.half_units()))
                    .or_insert(0.0) += 0.5 * p;
            }
        }
        if next.len() > atom_budget {
            return Err(Error::BudgetExceeded {
                step: i,
                atoms: next.len(),
                budget: atom_budget,
            });
        }
        distributions.push(project(i, &next));
        layer = next;
    }

    Ok(ChainEnumeration {
        spec: *spec,
        n,
        distributions,
        step_second_moments,
        s2_prefix,
        histories: layer,
    })
}

fn project(step: usize, layer: &BTreeMap<(StateKey, u32), f64>) -> StateDistribution {
    let mut atoms = BTreeMap::new();
    for (&(key, _), &p) in layer {
        *atoms.entry(key).or_insert(0.0) += p;
    }
    StateDistribution { step, atoms }
}

/// `sup_t |P[S/scale ≤ t] − Φ(t)|` for an exact finite law.
///
/// The distribution function is a step function, so the supremum is
/// attained at a jump, either at its value or at its left limit.
pub fn exact_kolmogorov(dist: &StateDistribution, scale: f64) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::Empty {
            what: "state distribution",
        });
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::arg("scale", "must be positive and finite"));
    }
    let mut points: Vec<(f64, f64)> = dist
        .atoms()
        .iter()
        .map(|(k, &p)| (k.value() / scale, p))
        .collect();
    points.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut below = 0.0;
    let mut worst: f64 = 0.0;
    let mut idx = 0;
    while idx < points.len() {
        let t = points[idx].0;
        let mut mass = 0.0;
        while idx < points.len() && points[idx].0 == t {
            mass += points[idx].1;
            idx += 1;
        }
        let phi = std_normal_cdf(t);
        let at = below + mass;
        worst = worst.max((at - phi).abs()).max((below - phi).abs());
        below = at;
    }
    Ok(worst.min(1.0))
}

fn v2_deviation(half_units: u32, s2: f64) -> f64 {
    (half_units as f64 * 0.5 / s2 - 1.0).abs()
}

/// `E|V² − 1|^p`, exactly.
pub fn exact_v2_moment(chain: &ChainEnumeration, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::arg("p", "must be a finite real >= 1"));
    }
    let s2 = chain.s2();
    Ok(chain
        .histories()
        .iter()
        .map(|(&(_, h), &prob)| prob * v2_deviation(h, s2).powf(p))
        .sum())
}

/// `ess sup |V² − 1|`: the largest deviation over histories of positive
/// probability.
pub fn exact_v2_sup(chain: &ChainEnumeration) -> f64 {
    let s2 = chain.s2();
    chain
        .histories()
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(&(_, h), _)| v2_deviation(h, s2))
        .fold(0.0, f64::max)
}

/// Exact statistics of one enumerated chain, in report form.
#[derive(Clone, Debug, Serialize)]
pub struct ExactStatistics {
    pub kernel: KernelSpec,
    pub n: usize,
    pub s2: f64,
    pub step_second_moments: Vec<f64>,
    pub kolmogorov: f64,
    pub v2_moments: Vec<V2Moment>,
    pub v2_sup: f64,
    pub terminal_atoms: usize,
    pub histories: usize,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct V2Moment {
    pub p: f64,
    pub value: f64,
}

impl ExactStatistics {
    pub fn from_chain(chain: &ChainEnumeration, p_values: &[f64]) -> Result<Self> {
        Ok(ExactStatistics {
            kernel: *chain.spec(),
            n: chain.n(),
            s2: chain.s2(),
            step_second_moments: chain.step_second_moments().to_vec(),
            kolmogorov: exact_kolmogorov(chain.terminal(), chain.s2().sqrt())?,
            v2_moments: p_values
                .iter()
                .map(|&p| exact_v2_moment(chain, p).map(|value| V2Moment { p, value }))
                .collect::<Result<_>>()?,
            v2_sup: exact_v2_sup(chain),
            terminal_atoms: chain.terminal().len(),
            histories: chain.histories().len(),
        })
    }
}

/// Writes every step's law as CSV: `step,atom_a,atom_b,atom_c,probability`.
pub fn write_distribution_csv<W: Write>(chain: &ChainEnumeration, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "atom_a", "atom_b", "atom_c", "probability"])?;
    for dist in chain.distributions() {
        for (key, p) in dist.atoms() {
            out.write_record([
                dist.step().to_string(),
                key.a.to_string(),
                key.b.to_string(),
                key.c.to_string(),
                crate::report::fmt_f64(*p),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::conditional_law;
    use crate::normal::std_normal_cdf;

    const BANDED: KernelSpec = KernelSpec::Banded {
        alpha: 0.75,
        beta: 0.25,
    };

    /// Brute force over all `2^n` sign sequences, following the kernel's
    /// conditional laws literally. Returns `(S, Σ v)` per sequence.
    fn all_histories(spec: &KernelSpec, n: usize) -> Vec<(f64, f64)> {
        (0u64..1 << n)
            .map(|mask| {
                let (mut s, mut qv) = (0.0, 0.0);
                for i in 1..=n {
                    let law = conditional_law(spec, n, i, s).unwrap();
                    let (x, _) = law.atoms()[((mask >> (i - 1)) & 1) as usize];
                    qv += law.second_moment();
                    s += x;
                }
                (s, qv)
            })
            .collect()
    }

    /// Kolmogorov distance by direct counting at every atom and just below it.
    fn brute_kolmogorov(values: &[f64], scale: f64) -> f64 {
        let w = 1.0 / values.len() as f64;
        let cdf = |t: f64, strict: bool| {
            values
                .iter()
                .filter(|&&v| if strict { v / scale < t } else { v / scale <= t })
                .count() as f64
                * w
        };
        values
            .iter()
            .map(|&v| {
                let t = v / scale;
                let phi = std_normal_cdf(t);
                (cdf(t, false) - phi).abs().max((cdf(t, true) - phi).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn rademacher_three_steps() {
        let chain = enumerate_chain(&KernelSpec::Rademacher, 3).unwrap();
        let t = chain.terminal();
        assert_eq!(t.len(), 4);
        assert_eq!(t.probability(StateKey::new(3, 0, 0)), 0.125);
        assert_eq!(t.probability(StateKey::new(-3, 0, 0)), 0.125);
        assert_eq!(t.probability(StateKey::new(1, 0, 0)), 0.375);
        assert_eq!(t.probability(StateKey::new(-1, 0, 0)), 0.375);
        assert_eq!(chain.s2(), 3.0);
        assert_eq!(chain.step_second_moments(), &[1.0, 1.0, 1.0]);
        assert_eq!(exact_v2_moment(&chain, 1.0).unwrap(), 0.0);
        assert_eq!(exact_v2_sup(&chain), 0.0);
    }

    #[test]
    fn short_banded_chain_matches_rademacher() {
        // Every step of a length-2 chain is modulated, but lambda exceeds 1
        // at step 2 and the origin is never in a band, so the law is the
        // same as for plain signs.
        assert!(BANDED.is_modulated(2, 1) && BANDED.is_modulated(2, 2));
        let banded = enumerate_chain(&BANDED, 2).unwrap();
        let plain = enumerate_chain(&KernelSpec::Rademacher, 2).unwrap();
        for (a, b) in banded.distributions().iter().zip(plain.distributions()) {
            assert_eq!(a, b);
        }
        assert_eq!(banded.s2(), 2.0);
    }

    #[test]
    fn probability_and_mean_invariants() {
        for n in [4, 8, 12, 16] {
            let chain = enumerate_chain(&BANDED, n).unwrap();
            for d in chain.distributions() {
                assert!((d.total_probability() - 1.0).abs() <= 1e-12);
                assert!(d.mean().abs() <= 1e-12, "n = {n}, step {}", d.step());
                assert!(d.atoms().keys().all(|k| k.norm() as usize <= d.step()));
            }
            let hist_total: f64 = chain.histories().values().sum();
            assert_eq!(hist_total, 1.0);
        }
    }

    #[test]
    fn agrees_with_brute_force_over_sign_sequences() {
        for n in [4, 6, 8, 10, 12] {
            let chain = enumerate_chain(&BANDED, n).unwrap();
            let paths = all_histories(&BANDED, n);
            let w = 1.0 / paths.len() as f64;
            let s2: f64 = paths.iter().map(|&(_, q)| q * w).sum();
            assert!((chain.s2() - s2).abs() <= 1e-12);
            for p in [1.0, 2.0, 3.5] {
                let brute: f64 = paths.iter().map(|&(_, q)| (q / s2 - 1.0).abs().powf(p) * w).sum();
                assert!((exact_v2_moment(&chain, p).unwrap() - brute).abs() <= 1e-12);
            }
            let brute_sup = paths.iter().map(|&(_, q)| (q / s2 - 1.0).abs()).fold(0.0, f64::max);
            assert!((exact_v2_sup(&chain) - brute_sup).abs() <= 1e-12);
            let terminal: Vec<f64> = paths.iter().map(|&(s, _)| s).collect();
            let d = exact_kolmogorov(chain.terminal(), s2.sqrt()).unwrap();
            assert!((d - brute_kolmogorov(&terminal, s2.sqrt())).abs() <= 1e-12, "n = {n}");
        }
    }

    #[test]
    fn kolmogorov_examples() {
        let point = StateDistribution::new(0, BTreeMap::from([(StateKey::ORIGIN, 1.0)]));
        assert_eq!(exact_kolmogorov(&point, 1.0).unwrap(), 0.5);

        let one = enumerate_chain(&KernelSpec::Rademacher, 1).unwrap();
        let d = exact_kolmogorov(one.terminal(), 1.0).unwrap();
        assert!((d - (std_normal_cdf(1.0) - 0.5)).abs() < 1e-15);
        assert!((d - 0.341_344_746_068_543).abs() < 1e-12);

        let two = enumerate_chain(&KernelSpec::Rademacher, 2).unwrap();
        assert_eq!(exact_kolmogorov(two.terminal(), 2f64.sqrt()).unwrap(), 0.25);

        let empty = StateDistribution::new(0, BTreeMap::new());
        assert!(exact_kolmogorov(&empty, 1.0).is_err());
        assert!(exact_kolmogorov(&point, 0.0).is_err());
    }

    #[test]
    fn frozen_v2_moments_for_eight_steps() {
        let chain = enumerate_chain(&BANDED, 8).unwrap();
        let v1 = exact_v2_moment(&chain, 1.0).unwrap();
        let v2 = exact_v2_moment(&chain, 2.0).unwrap();
        // Exact rationals from an independent brute force over all 256
        // sign sequences.
        assert_eq!(chain.s2(), 253.0 / 32.0);
        assert!((v1 - 779.0 / 8096.0).abs() < 1e-15);
        assert!((v2 - 85.0 / 5819.0).abs() < 1e-15);
        assert!((exact_v2_sup(&chain) - 7.0 / 23.0).abs() < 1e-15);
        assert_eq!(exact_kolmogorov(chain.terminal(), chain.s2().sqrt()).unwrap(), 0.13671875);
        // ‖·‖₂² ≤ ‖·‖∞ · ‖·‖₁.
        assert!(v2 <= exact_v2_sup(&chain) * v1 + 1e-15);
        assert!(exact_v2_moment(&chain, 0.5).is_err());
    }

    #[test]
    fn budget_and_length_caps() {
        let err = enumerate_chain(&KernelSpec::Rademacher, 60).unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLong { n: 60, .. }));
        assert!(err.is_budget());
        let err = enumerate_chain_with_budget(&BANDED, 12, 10).unwrap_err();
        match err {
            Error::BudgetExceeded { step, atoms, budget } => {
                assert_eq!(budget, 10);
                assert!(atoms > 10);
                assert!(step <= 12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(enumerate_chain(&BANDED, 40).is_ok());
    }

    #[test]
    fn csv_layout() {
        let chain = enumerate_chain(&KernelSpec::Rademacher, 2).unwrap();
        let mut out = Vec::new();
        write_distribution_csv(&chain, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,atom_a,atom_b,atom_c,probability");
        assert_eq!(lines.len(), 1 + 1 + 2 + 3);
        assert!(lines[1].starts_with("0,0,0,0,"));
    }
}
