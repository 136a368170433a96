//! Independent reference computations: power iteration, explicit path
//! enumeration, dense censoring of a deep truncation, and the reference
//! stationary vector of an M/G/1 chain.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::augment::{self, natural_lbca, natural_lbca_truncation};
use crate::blocklinalg::{Block, BlockMatrix, StationaryVector};
use crate::censor::censor_prefix;
use crate::error::{Error, Result};
use crate::gth;
use crate::mg1::Mg1Spec;

pub const DEFAULT_POWER_TOL: f64 = 1e-13;
pub const DEFAULT_POWER_MAX_ITER: usize = 1_000_000;

/// Largest depth accepted by [`path_sum_oracle`].
pub const PATH_DEPTH_LIMIT: usize = 8;

/// Largest scalar state count handled by [`dense_censor_oracle`].
pub const DENSE_STATE_LIMIT: usize = 5000;

/// Iterates `x <- x P` from the uniform vector until `|x P - x|_1 <= tol`.
/// The chain must be aperiodic; damp with `(P + I) / 2` otherwise.
pub fn power_iteration(p: &BlockMatrix, tol: f64, max_iter: usize) -> Result<StationaryVector> {
    power_iteration_cancellable(p, tol, max_iter, &AtomicBool::new(false))
}

/// [`power_iteration`] that checks `cancel` once per sweep.
pub fn power_iteration_cancellable(
    p: &BlockMatrix,
    tol: f64,
    max_iter: usize,
    cancel: &AtomicBool,
) -> Result<StationaryVector> {
    p.check_stochastic(crate::blocklinalg::STOCHASTIC_TOL)?;
    let states = p.scalar_rows() as f64;
    let mut x = StationaryVector::from_levels(p.row_phases().iter().map(|&c| vec![1.0 / states; c]).collect())?;
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        if cancel.load(Ordering::Relaxed) {
            return Err(Error::Cancelled { iterations: it });
        }
        let next = x.times(p)?;
        residual = next.l1_distance(&x)?;
        x = StationaryVector::normalized((0..next.num_levels()).map(|i| next.level(i).to_vec()).collect())?;
        if residual <= tol {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// `sum A_{k_1} ... A_{k_m} A_{-1}` over step sequences that start at
/// offset `i`, never go below offset 0, and end at offset 0. This is
/// `G^(m)_i` computed by brute force.
pub fn path_sum_oracle(spec: &Mg1Spec, m: usize, i: usize) -> Result<Block> {
    if m > PATH_DEPTH_LIMIT {
        return Err(Error::DepthTooLarge {
            depth: m,
            limit: PATH_DEPTH_LIMIT,
        });
    }
    let r = spec.repeat_phases();
    let mut total = Block::zeros(r, r);
    if i > m {
        return Ok(total);
    }
    walk(spec, m, i, &Block::identity(r, r), &mut total);
    Ok(total)
}

fn walk(spec: &Mg1Spec, steps_left: usize, level: usize, prefix: &Block, total: &mut Block) {
    if steps_left == 0 {
        if level == 0 {
            *total += prefix * spec.a_down();
        }
        return;
    }
    // each later step lowers the level by at most one
    let highest = (steps_left - 1) as isize - level as isize;
    for k in -1..=highest {
        let next = level as isize + k;
        if next < 0 {
            continue;
        }
        let Some(ak) = spec.a(k) else { continue };
        walk(spec, steps_left - 1, next as usize, &(prefix * ak), total);
    }
}

/// Default gap between the censoring level and the dense truncation.
pub fn default_buffer(n: usize) -> usize {
    n + 200
}

/// Builds the natural LBCA at level `n + buffer` and censors it exactly
/// onto levels `0..=n`.
pub fn dense_censor_oracle(spec: &Mg1Spec, n: usize, buffer: usize) -> Result<BlockMatrix> {
    let top = n + buffer;
    let states = spec.boundary_phases() + top * spec.repeat_phases();
    if states > DENSE_STATE_LIMIT {
        return Err(Error::TooLarge {
            states,
            limit: DENSE_STATE_LIMIT,
        });
    }
    censor_prefix(&natural_lbca(spec, top)?, n)
}

/// Reference stationary vector and its self-consistency check.
#[derive(Debug, Clone)]
pub struct Reference {
    pub pi: StationaryVector,
    /// `l1(N_ref/2, inf)` of the half-depth reference against this one.
    pub self_consistency: f64,
}

/// Natural LBCA at `n_ref` solved by structured GTH, compared with the
/// same construction at `n_ref / 2`. Transient levels are allowed; they
/// receive zero mass.
pub fn reference_stationary(spec: &Mg1Spec, n_ref: usize) -> Result<Reference> {
    if n_ref < 2 {
        return Err(Error::InvalidParameter("reference level must be at least 2".into()));
    }
    let pi = gth::solve_upper_hessenberg(&natural_lbca_truncation(spec, n_ref)?)?;
    let half = gth::solve_upper_hessenberg(&natural_lbca_truncation(spec, n_ref / 2)?)?;
    let self_consistency = augment::l1_truncation_error(&half, &pi)?;
    Ok(Reference { pi, self_consistency })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mg1::g_columns;
    use crate::models::{random_spec, SpecFamily};
    use nalgebra::DMatrix;

    #[test]
    fn power_examples() {
        let p = BlockMatrix::square_from_dense(&DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]), vec![2]).unwrap();
        let pi = power_iteration(&p, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER).unwrap();
        assert!((pi.values()[0] - 0.75).abs() < 1e-12);
        let sym = BlockMatrix::square_from_dense(&DMatrix::from_element(3, 3, 1.0 / 3.0), vec![1, 2]).unwrap();
        let pi = power_iteration(&sym, DEFAULT_POWER_TOL, 10).unwrap();
        assert!(pi.values().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn power_reports_cancellation_and_non_convergence() {
        let p =
            BlockMatrix::square_from_dense(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), vec![1, 1]).unwrap();
        let uneven =
            BlockMatrix::square_from_dense(&DMatrix::from_row_slice(2, 2, &[0.99, 0.01, 0.5, 0.5]), vec![1, 1])
                .unwrap();
        assert!(matches!(
            power_iteration(&uneven, 1e-15, 2),
            Err(Error::NoConvergence { iterations: 2, .. })
        ));
        let stop = AtomicBool::new(true);
        assert_eq!(
            power_iteration_cancellable(&p, 1e-13, 10, &stop).unwrap_err(),
            Error::Cancelled { iterations: 0 }
        );
    }

    #[test]
    fn path_examples() {
        let spec = random_spec(2, &SpecFamily::default());
        let a = |k| spec.a(k).unwrap();
        assert!((path_sum_oracle(&spec, 1, 0).unwrap() - a(0) * a(-1)).amax() < 1e-15);
        assert_eq!(path_sum_oracle(&spec, 1, 2).unwrap().amax(), 0.0);
        let (am, a0, a1) = (a(-1), a(0), a(1));
        let five = (&am * &a0 * &a0 + &am * &a1 * &am + &a0 * &am * &a0 + &a0 * &a0 * &am + &a1 * &am * &am) * &am;
        assert!((path_sum_oracle(&spec, 3, 1).unwrap() - five).amax() < 1e-15);
        assert!(matches!(path_sum_oracle(&spec, 9, 0), Err(Error::DepthTooLarge { .. })));
    }

    #[test]
    fn recursion_matches_paths() {
        let spec = random_spec(8, &SpecFamily::default());
        let g = g_columns(&spec, 5);
        for m in 0..=5 {
            for i in 0..=m {
                let diff = (g.g(m, i).unwrap() - path_sum_oracle(&spec, m, i).unwrap()).amax();
                assert!(diff <= 1e-13, "m {m} i {i}: {diff}");
            }
        }
    }

    #[test]
    fn dense_oracle_guard() {
        let spec = random_spec(1, &SpecFamily::default());
        assert!(matches!(
            dense_censor_oracle(&spec, 10, 5000),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn dense_oracle_is_stochastic_and_composes() {
        let spec = random_spec(3, &SpecFamily::default());
        let c = dense_censor_oracle(&spec, 4, 40).unwrap();
        assert!(c.max_row_deviation() <= 1e-12);
        let big = natural_lbca(&spec, 44).unwrap();
        let staged = censor_prefix(&censor_prefix(&big, 20).unwrap(), 4).unwrap();
        assert!(c.max_abs_diff(&staged).unwrap() <= 1e-12);
    }

    #[test]
    fn reference_of_contained_support_is_exact() {
        let spec = random_spec(6, &SpecFamily::skip_free_up(2, 2, 3));
        // levels above the B support are transient, so the chain on 0..=3 is closed
        let exact = gth::solve(&natural_lbca(&spec, 3).unwrap()).unwrap();
        let r = reference_stationary(&spec, 12).unwrap();
        assert!(r.pi.tail_mass(3) < 1e-15);
        for i in 0..=3 {
            for (a, b) in r.pi.level(i).iter().zip(exact.level(i)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        assert!(r.self_consistency < 1e-14);
    }
}
