//! Fixtures shared by the benchmarks.

use blockgth::models::{self, random_spec, MxM1WvParams, SpecFamily};
use blockgth::{augment, BlockMatrix, Mg1Spec};

/// The working-vacation queue with a shortened batch-size cutoff.
pub fn vacation_spec(cutoff: usize) -> Mg1Spec {
    models::working_vacation_spec(&MxM1WvParams {
        pmf_cutoff: cutoff,
        ..Default::default()
    })
    .expect("default parameters are valid")
}

/// A random M/G/1 spec with three repeating phases.
pub fn random_mg1(seed: u64) -> Mg1Spec {
    random_spec(seed, &SpecFamily::default())
}

/// Dense block form of the natural LBCA truncation of `random_mg1(seed)`.
pub fn banded_chain(seed: u64, levels: usize) -> BlockMatrix {
    augment::natural_lbca(&random_mg1(seed), levels - 1).expect("valid truncation")
}
