//! Random fixtures for unit tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocklinalg::BlockMatrix;

/// Irreducible stochastic chain with `levels` levels and 1..=`max_phases`
/// phases per level. Neighbouring-level blocks are always dense so the
/// chain is irreducible; other blocks are dropped at random.
pub fn random_chain(seed: u64, levels: usize, max_phases: usize) -> BlockMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<usize> = (0..levels).map(|_| rng.gen_range(1..=max_phases)).collect();
    let total: usize = phases.iter().sum();
    let mut dense = DMatrix::zeros(total, total);
    let offsets = crate::blocklinalg::level_offsets(&phases);
    for i in 0..levels {
        for j in 0..levels {
            let keep = i.abs_diff(j) <= 1 || rng.gen_bool(0.6);
            if !keep {
                continue;
            }
            for a in 0..phases[i] {
                for b in 0..phases[j] {
                    dense[(offsets[i] + a, offsets[j] + b)] = rng.gen_range(0.05..1.0);
                }
            }
        }
    }
    for mut row in dense.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    BlockMatrix::square_from_dense(&dense, phases).unwrap()
}
