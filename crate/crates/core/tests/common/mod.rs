//! Helpers shared by the integration and acceptance targets.

#![allow(dead_code)]

use mclt::oracle::{exact_kolmogorov, exact_v2_moment, ChainEnumeration};
use mclt::stats::{estimate_kolmogorov, estimate_step_second_moments};
use mclt::{estimate_s2, estimate_v2_moment, sample_paths, PathStatistics, RngPolicy};

/// Which Monte Carlo estimates landed within their confidence radius of
/// the exact values.
#[derive(Clone, Copy, Debug, Default)]
pub struct Agreement {
    pub s2: bool,
    pub step_moments: bool,
    pub kolmogorov: bool,
    pub v2_l1: bool,
}

/// One repetition: `m` paths of the chain's kernel, compared with the
/// enumeration at `4·stderr` for means and the DKW radius at `δ = 0.01`
/// for the Kolmogorov distance.
pub fn agreement(chain: &ChainEnumeration, m: usize, policy: RngPolicy) -> Agreement {
    let n = chain.n();
    let batch = sample_paths(chain.spec(), n, m, policy).unwrap();
    let s2 = chain.s2();

    let step = estimate_step_second_moments(&batch).unwrap();
    let step_moments = step
        .iter()
        .zip(chain.step_second_moments())
        .all(|(e, &exact)| e.within(exact, 4.0));

    let d_exact = exact_kolmogorov(chain.terminal(), s2.sqrt()).unwrap();
    let d = estimate_kolmogorov(&batch.terminal_sums(), s2.sqrt(), 0.01).unwrap();

    Agreement {
        s2: estimate_s2(&batch).unwrap().within(s2, 4.0),
        step_moments,
        kolmogorov: (d.d_hat - d_exact).abs() <= d.dkw_epsilon,
        v2_l1: estimate_v2_moment(&batch, s2, 1.0)
            .unwrap()
            .within(exact_v2_moment(chain, 1.0).unwrap(), 4.0),
    }
}
