//! Monte Carlo and exact tools for measuring how fast martingale sums
//! approach the normal law.
//!
//! The crate is organized bottom-up:
//!
//! * [`kernels`]: increment laws, including the banded example whose
//!   conditional variance is perturbed near the end of the path.
//! * [`sampler`]: reproducible parallel path generation.
//! * [`oracle`]: exact enumeration of short chains.
//! * [`stats`]: estimators of `s²`, `‖V²−1‖_p^p` and the Kolmogorov distance.
//! * [`augment`]: extension of a path to one with `V² = 1`.
//! * [`analysis`]: bound functionals, power-law fits and the experiment harness.
//! * [`cli`], [`config`], [`report`]: the `mclt` binary and its file formats.
//!
//! ```
//! use mclt::{enumerate_chain, KernelSpec};
//!
//! let chain = enumerate_chain(&KernelSpec::Rademacher, 3).unwrap();
//! assert_eq!(chain.s2(), 3.0);
//! assert_eq!(chain.terminal().len(), 4);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod augment;
pub mod cli;
pub mod config;
pub mod error;
pub mod kernels;
pub mod normal;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use analysis::{fit_power_law, run_experiment, ExperimentReport, PowerLawFit, RateSeries};
pub use augment::{augment_path, verify_v2_one};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use kernels::KernelSpec;
pub use oracle::{enumerate_chain, ChainEnumeration};
pub use rng::RngPolicy;
pub use sampler::{sample_paths, sample_summaries, PathBatch, PathStatistics, PathSummaries};
pub use stats::{estimate_kolmogorov, estimate_s2, estimate_v2_moment};

/// Compiles and runs the code blocks of the guide in `book/`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/rates.md")]
    mod rates {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
