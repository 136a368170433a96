//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use blockgth::blocklinalg::{check_irreducible, level_offsets};
use blockgth::{Block, BlockMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Irreducible, aperiodic stochastic chain with 1..=`max_levels` levels
/// and 1..=`max_phases` phases per level. About a third of the entries
/// are zero; draws are repeated until the chain is irreducible.
pub fn random_chain(seed: u64, max_levels: usize, max_phases: usize) -> BlockMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let levels = rng.gen_range(1..=max_levels);
        let phases: Vec<usize> = (0..levels).map(|_| rng.gen_range(1..=max_phases)).collect();
        let offsets = level_offsets(&phases);
        let n = offsets[levels];
        let mut dense = DMatrix::from_fn(n, n, |_, _| {
            if rng.gen_bool(0.35) {
                0.0
            } else {
                rng.gen_range(0.01..1.0)
            }
        });
        for k in 0..n {
            dense[(k, k)] += 0.05;
        }
        for mut row in dense.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        let p = BlockMatrix::square_from_dense(&dense, phases).expect("shapes agree");
        if check_irreducible(&p).is_ok() {
            return p;
        }
    }
}

/// The 200-chain corpus used by the solver and censoring criteria.
pub fn corpus() -> Vec<BlockMatrix> {
    (0..200).map(|seed| random_chain(seed, 8, 4)).collect()
}

/// `b` or a zero block of the given shape.
pub fn or_zero(b: Option<&Block>, rows: usize, cols: usize) -> Block {
    b.cloned().unwrap_or_else(|| Block::zeros(rows, cols))
}
