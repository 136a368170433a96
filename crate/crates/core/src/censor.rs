//! Exact censoring of finite block chains onto level prefixes `0..=n`.

use nalgebra::DMatrix;

use crate::blocklinalg::{BlockMatrix, STOCHASTIC_TOL};
use crate::error::{Error, Result};
use crate::gth;

/// `T + U (I - Q)^{-1} D` for the split of `p` after level `n`.
///
/// The fundamental matrix is never formed; `(I - Q)^{-1} D` comes from one
/// multi-right-hand-side LU solve. `n` equal to the top level returns `p`.
pub fn censor_prefix(p: &BlockMatrix, n: usize) -> Result<BlockMatrix> {
    p.check_stochastic(STOCHASTIC_TOL)?;
    let top = p.num_row_levels() - 1;
    if n > top {
        return Err(Error::LevelOutOfRange {
            index: n,
            levels: p.num_row_levels(),
        });
    }
    if n == top {
        return Ok(p.clone());
    }
    let parts = p.partition(n)?;
    let q = parts.q.to_dense();
    let dim = q.nrows();
    let i_minus_q = DMatrix::identity(dim, dim) - q;
    let lu = i_minus_q.lu();
    let x = lu
        .solve(&parts.d.to_dense())
        .ok_or(Error::SingularPivot { level: n + 1 })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularPivot { level: n + 1 });
    }
    let mut censored = parts.t.to_dense() + parts.u.to_dense() * x;
    censored.iter_mut().for_each(|v| *v = v.max(0.0));
    let out = BlockMatrix::square_from_dense(&censored, p.row_phases()[..=n].to_vec())?;
    out.check_stochastic(STOCHASTIC_TOL)?;
    Ok(out)
}

/// `max |censor(P, n2) - censor(censor(P, n1), n2)|` for `n2 < n1`.
pub fn censor_composition_check(p: &BlockMatrix, n1: usize, n2: usize) -> Result<f64> {
    if n2 >= n1 {
        return Err(Error::InvalidParameter(format!(
            "composition needs n2 < n1, got n1 = {n1}, n2 = {n2}"
        )));
    }
    let direct = censor_prefix(p, n2)?;
    let staged = censor_prefix(&censor_prefix(p, n1)?, n2)?;
    direct.max_abs_diff(&staged)
}

/// Largest deviation between the stationary vector of `censor(P, n)` and
/// the renormalized restriction of the stationary vector of `P`.
pub fn stationary_restriction_check(p: &BlockMatrix, n: usize) -> Result<f64> {
    let pi = gth::solve(p)?;
    let censored = gth::solve(&censor_prefix(p, n)?)?;
    let prefix_mass: f64 = (0..=n).map(|i| pi.level_mass(i)).sum();
    let mut worst: f64 = 0.0;
    for i in 0..=n {
        for (a, b) in censored.level(i).iter().zip(pi.level(i)) {
            worst = worst.max((a - b / prefix_mass).abs());
        }
    }
    Ok(worst)
}

/// `T_n + (0, ..., 0, C_n)` where `C_n` sums each row's blocks beyond level
/// `n`. Levels `n..` must share one phase count.
pub fn last_column_augmentation(p: &BlockMatrix, n: usize) -> Result<BlockMatrix> {
    let top = p.num_row_levels() - 1;
    if n >= top {
        return Err(Error::LevelOutOfRange {
            index: n,
            levels: p.num_row_levels(),
        });
    }
    let phases = p.row_phases();
    if phases[n..].iter().any(|&c| c != phases[n]) {
        return Err(Error::Shape(
            "levels above the cut must share the phase count of the last kept level".into(),
        ));
    }
    let mut out = p.partition(n)?.t;
    for i in 0..=n {
        let mut tail = DMatrix::zeros(phases[i], phases[n]);
        for j in n + 1..=top {
            if let Some(b) = p.block_ref(i, j) {
                tail += b;
            }
        }
        out.add_to_block(i, n, &tail)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::random_chain;

    fn scalar(rows: usize, data: &[f64]) -> BlockMatrix {
        BlockMatrix::square_from_dense(&DMatrix::from_row_slice(rows, rows, data), vec![1; rows]).unwrap()
    }

    #[test]
    fn two_state_censors_to_one() {
        let c = censor_prefix(&scalar(2, &[0.5, 0.5, 0.5, 0.5]), 0).unwrap();
        assert!((c.block(0, 0).unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_step_matches_one_elimination() {
        let p = random_chain(11, 5, 3);
        let c = censor_prefix(&p, 3).unwrap();
        let e = gth::forward_eliminate_to(&p, 3).unwrap();
        assert!(c.max_abs_diff(&e).unwrap() < 1e-12);
    }

    #[test]
    fn censoring_equals_forward_elimination_at_every_level() {
        for seed in 0..10 {
            let p = random_chain(seed, 8, 3);
            for n in 0..7 {
                let c = censor_prefix(&p, n).unwrap();
                let e = gth::forward_eliminate_to(&p, n).unwrap();
                assert!(c.max_abs_diff(&e).unwrap() <= 1e-12, "seed {seed} n {n}");
                assert!(c.max_row_deviation() <= 1e-12);
            }
        }
    }

    #[test]
    fn composition_examples() {
        let p = random_chain(5, 3, 3);
        assert!(censor_composition_check(&p, 1, 0).unwrap() <= 1e-12);
        let p = scalar(2, &[0.3, 0.7, 0.6, 0.4]);
        assert!(censor_composition_check(&p, 1, 0).unwrap() <= 1e-15);
        assert!(censor_composition_check(&p, 0, 0).is_err());
    }

    #[test]
    fn restriction_examples() {
        let p = random_chain(9, 5, 3);
        assert!(stationary_restriction_check(&p, 4).unwrap() <= 1e-14);
        assert!(stationary_restriction_check(&p, 2).unwrap() <= 1e-10);
        let sym = scalar(2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(stationary_restriction_check(&sym, 0).unwrap() <= 1e-15);
    }

    #[test]
    fn out_of_range_level() {
        let p = random_chain(1, 3, 2);
        assert!(matches!(censor_prefix(&p, 3), Err(Error::LevelOutOfRange { .. })));
    }
}
