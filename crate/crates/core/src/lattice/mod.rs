//! Core distribution types, exact oracles, sampling and distances.

mod block;
mod exact;
mod gaussian;
mod hypothesis;
mod matrix;
mod pmf;

pub use block::{block_gaussian_pmf, hybrid_pmf_at, Block, BlockGaussian, DecompositionConfig, StructuralDecomposition};
pub use exact::{gmd_pmf_exact, pmd_pmf_exact, pmd_sample, siirv_pmf_exact, PmdSampler};
pub use gaussian::{discretized_gaussian_pmf, reduce_degenerate, round_half_even, DiscretizedGaussian, EIGEN_FLOOR};
pub use hypothesis::{ExactPmd, Hypothesis, HypothesisSampler, SiirvForm};
pub use matrix::{crv_covariance, GmdParams, ParamMatrix};
pub use pmf::{convolve, kolmogorov_distance_1d, tv_distance, PmfSampler, SparsePmf, PRUNE_THRESHOLD};

/// Integer lattice point.
pub type Point = Vec<i64>;

/// Schema tag written into every JSON document.
pub const SCHEMA: &str = "pmdlab/1";

/// Default cap on the number of support points an exact oracle may produce.
pub const DEFAULT_SUPPORT_CAP: u128 = 10_000_000;

/// Support cap, overridable through `PMDLAB_SUPPORT_CAP`.
pub fn support_cap() -> u128 {
    std::env::var("PMDLAB_SUPPORT_CAP").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_SUPPORT_CAP)
}

pub(crate) fn check_schema(schema: &Option<String>) -> crate::Result<()> {
    match schema.as_deref() {
        None | Some(SCHEMA) => Ok(()),
        Some(other) => Err(crate::Error::Parse(format!("unsupported schema `{other}`"))),
    }
}

/// `binom(n, r)` as u128, saturating.
pub fn binomial(n: u64, r: u64) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}
