//! Martingale-difference constructions, described as conditional-increment
//! kernels.
//!
//! Every kernel in this crate is a fair random sign multiplied by a
//! magnitude that depends on the step index and the current partial sum:
//!
//! * [`KernelSpec::Rademacher`] always uses magnitude 1 (i.i.d. signs).
//! * [`KernelSpec::Banded`] uses magnitude 1 for the first `n − n^α` steps.
//!   On the remaining steps it compares the partial sum `S` with
//!   `λ = sqrt(n − i + κ²)`, `κ = n^β`: the magnitude is `√(3/2)` when
//!   `S ∈ [λ, 2λ]`, `√(1/2)` when `S ∈ [−2λ, −λ]`, and 1 otherwise.
//!
//! Inflating the variance above the origin and deflating it below keeps
//! the partial sums a martingale while skewing the law of `S`, which is
//! what makes the Kolmogorov distance decay only like `n^{(α−1)/2}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_3_2: f64 = 1.224_744_871_391_589;
const SQRT_1_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Declarative description of a martingale-difference construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Independent fair ±1 signs.
    Rademacher,
    /// Variance-modulating kernel active on the last `n^α` steps, with band
    /// scale `κ_n = n^β`. Admissible parameters satisfy `1/2 < α < 1` and
    /// `1 − α < 2β < α`.
    Banded {
        alpha: f64,
        #[serde(default = "default_beta")]
        beta: f64,
    },
}

fn default_beta() -> f64 {
    0.25
}

impl KernelSpec {
    /// Banded kernel with the default `β = 1/4`.
    pub fn banded(alpha: f64) -> Self {
        KernelSpec::Banded {
            alpha,
            beta: default_beta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rademacher => Ok(()),
            KernelSpec::Banded { alpha, beta } => {
                if !(alpha > 0.5 && alpha < 1.0) {
                    return Err(Error::InvalidKernel(format!(
                        "alpha = {alpha} outside (1/2, 1)"
                    )));
                }
                if !(1.0 - alpha < 2.0 * beta && 2.0 * beta < alpha) {
                    return Err(Error::InvalidKernel(format!(
                        "beta = {beta} violates 1 - alpha < 2 beta < alpha for alpha = {alpha}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Band scale `κ_n = n^β`; 1 for the Rademacher kernel.
    pub fn kappa(&self, n: usize) -> f64 {
        match *self {
            KernelSpec::Rademacher => 1.0,
            KernelSpec::Banded { beta, .. } => (n as f64).powf(beta),
        }
    }

    /// Whether step `i` of a length-`n` chain uses the state-dependent
    /// branch, i.e. `i > n − n^α` compared as reals.
    pub fn is_modulated(&self, n: usize, i: usize) -> bool {
        match *self {
            KernelSpec::Rademacher => false,
            KernelSpec::Banded { alpha, .. } => {
                let nf = n as f64;
                (i as f64) > nf - nf.powf(alpha)
            }
        }
    }

    /// Largest increment magnitude the kernel can ever emit.
    pub fn max_increment(&self) -> f64 {
        match self {
            KernelSpec::Rademacher => 1.0,
            KernelSpec::Banded { .. } => SQRT_3_2,
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match *self {
            KernelSpec::Rademacher => "rademacher".to_string(),
            KernelSpec::Banded { alpha, beta } => format!("banded(alpha={alpha}, beta={beta})"),
        }
    }
}

/// Which of the three conditional laws applies at a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    /// `±1`, variance 1.
    Unit,
    /// `±√(3/2)`, variance 3/2; partial sum in the upper band.
    Inflated,
    /// `±√(1/2)`, variance 1/2; partial sum in the lower band.
    Deflated,
}

impl Branch {
    pub fn magnitude(self) -> f64 {
        match self {
            Branch::Unit => 1.0,
            Branch::Inflated => SQRT_3_2,
            Branch::Deflated => SQRT_1_2,
        }
    }

    pub fn variance(self) -> f64 {
        match self {
            Branch::Unit => 1.0,
            Branch::Inflated => 1.5,
            Branch::Deflated => 0.5,
        }
    }

    /// Conditional variance in half units (`2·variance`), exact.
    pub fn half_units(self) -> u32 {
        match self {
            Branch::Unit => 2,
            Branch::Inflated => 3,
            Branch::Deflated => 1,
        }
    }

    pub fn law(self) -> IncrementDistribution {
        let a = self.magnitude();
        IncrementDistribution {
            atoms: vec![(-a, 0.5), (a, 0.5)],
        }
    }
}

/// Finite discrete law of one conditional increment.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementDistribution {
    atoms: Vec<(f64, f64)>,
}

impl IncrementDistribution {
    /// Builds a law from `(value, probability)` atoms, checking that the
    /// probabilities are positive and normalized and that the mean is 0.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty { what: "atom list" });
        }
        if atoms.iter().any(|&(_, p)| !(p > 0.0)) {
            return Err(Error::arg("atoms", "probabilities must be positive"));
        }
        let law = IncrementDistribution { atoms };
        if (law.total_mass() - 1.0).abs() > 1e-12 {
            return Err(Error::arg("atoms", "probabilities must sum to 1"));
        }
        if law.mean().abs() > 1e-12 {
            return Err(Error::arg("atoms", "a martingale difference has mean 0"));
        }
        Ok(law)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, p)| p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(v, p)| v * p).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms.iter().map(|&(v, p)| v * v * p).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.atoms.iter().map(|&(v, _)| v.abs()).fold(0.0, f64::max)
    }
}

/// The band `[λ, 2λ]`; its mirror image `[−2λ, −λ]` is the lower band.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bands {
    pub lower: f64,
    pub upper: f64,
}

impl Bands {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::arg("lambda", "must be positive and finite"));
        }
        Ok(Bands {
            lower: lambda,
            upper: 2.0 * lambda,
        })
    }

    /// `s ∈ [λ, 2λ]`, closed at both ends.
    #[inline]
    pub fn contains_upper(&self, s: f64) -> bool {
        s >= self.lower && s <= self.upper
    }

    /// `s ∈ [−2λ, −λ]`, closed at both ends.
    #[inline]
    pub fn contains_lower(&self, s: f64) -> bool {
        s >= -self.upper && s <= -self.lower
    }

    #[inline]
    pub fn classify(&self, s: f64) -> Branch {
        if self.contains_upper(s) {
            Branch::Inflated
        } else if self.contains_lower(s) {
            Branch::Deflated
        } else {
            Branch::Unit
        }
    }
}

fn check_step(n: usize, i: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::arg("n", "must be positive"));
    }
    if i < 1 || i > n {
        return Err(Error::IndexOutOfRange {
            index: i,
            lo: 1,
            hi: n,
        });
    }
    Ok(())
}

/// `λ_{ni} = sqrt(n − i + κ²)`.
pub fn lambda_ni(n: usize, i: usize, kappa: f64) -> Result<f64> {
    check_step(n, i)?;
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::arg("kappa", "must be positive and finite"));
    }
    Ok(((n - i) as f64 + kappa * kappa).sqrt())
}

/// Branch of the conditional law of step `i` given the partial sum `s_prev`
/// of the first `i − 1` increments.
pub fn branch(spec: &KernelSpec, n: usize, i: usize, s_prev: f64) -> Result<Branch> {
    spec.validate()?;
    check_step(n, i)?;
    if !spec.is_modulated(n, i) {
        return Ok(Branch::Unit);
    }
    let lambda = lambda_ni(n, i, spec.kappa(n))?;
    Ok(Bands::new(lambda)?.classify(s_prev))
}

/// Conditional law of `X_{ni}` given `S_{n,i−1} = s_prev`.
pub fn conditional_law(
    spec: &KernelSpec,
    n: usize,
    i: usize,
    s_prev: f64,
) -> Result<IncrementDistribution> {
    branch(spec, n, i, s_prev).map(Branch::law)
}

/// `E[X²_{ni} | S_{n,i−1} = s_prev]`, one of 1/2, 1, 3/2.
pub fn conditional_variance(spec: &KernelSpec, n: usize, i: usize, s_prev: f64) -> Result<f64> {
    branch(spec, n, i, s_prev).map(Branch::variance)
}

/// Per-length precomputation of the step threshold and the `λ` table, used
/// on the sampling hot path. Decisions agree exactly with [`branch`].
#[derive(Clone, Debug)]
pub struct KernelPlan {
    n: usize,
    first_modulated: usize,
    bands: Vec<Bands>,
}

impl KernelPlan {
    pub fn new(spec: &KernelSpec, n: usize) -> Result<Self> {
        spec.validate()?;
        if n == 0 {
            return Err(Error::arg("n", "must be positive"));
        }
        let first_modulated = (1..=n)
            .find(|&i| spec.is_modulated(n, i))
            .unwrap_or(n + 1);
        let kappa = spec.kappa(n);
        let bands = (first_modulated..=n)
            .map(|i| lambda_ni(n, i, kappa).and_then(Bands::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelPlan {
            n,
            first_modulated,
            bands,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of leading steps that are plain fair ±1 signs.
    pub fn unit_prefix(&self) -> usize {
        self.first_modulated - 1
    }

    /// Branch at step `i` (1-based) given the previous partial sum.
    #[inline]
    pub fn branch(&self, i: usize, s_prev: f64) -> Branch {
        debug_assert!(i >= 1 && i <= self.n);
        if i < self.first_modulated {
            Branch::Unit
        } else {
            self.bands[i - self.first_modulated].classify(s_prev)
        }
    }
}
