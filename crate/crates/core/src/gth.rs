//! Block-form GTH: forward block elimination from the highest level down,
//! subtraction-free scalar GTH on the level-0 pivot, back block
//! substitution and normalization.

use nalgebra::{Dyn, RowDVector, LU};

use crate::blocklinalg::{level_offsets, Block, BlockMatrix, LevelBlocks, StationaryVector, STOCHASTIC_TOL};
use crate::error::{Error, Result};

/// Row-sum tolerance for censored intermediates produced by elimination.
pub const ELIMINATION_TOL: f64 = 1e-10;

/// First-passage blocks `(I - Phi)^{-1} P` are probabilities; anything
/// larger than this means the pivot solve has broken down.
const PROBABILITY_SLACK: f64 = 1e-8;

type PivotLu = LU<f64, Dyn, Dyn>;

/// Blocks kept by forward elimination for back substitution and the
/// RG-factorization.
#[derive(Debug, Clone)]
pub struct EliminationRecord {
    phase_counts: Vec<usize>,
    pivots: Vec<Block>,
    // up[k][i] = P^(k)_{i,k}, down[k][i] = P^(k)_{k,i}, for i < k
    up: Vec<Vec<Option<Block>>>,
    down: Vec<Vec<Option<Block>>>,
}

impl EliminationRecord {
    pub fn num_levels(&self) -> usize {
        self.phase_counts.len()
    }

    pub fn phase_counts(&self) -> &[usize] {
        &self.phase_counts
    }

    /// `Phi_k = P^(k)_{k,k}`.
    pub fn pivot(&self, k: usize) -> &Block {
        &self.pivots[k]
    }

    /// `P^(k)_{i,k}` for `i < k`, `None` when zero.
    pub fn up_block(&self, k: usize, i: usize) -> Option<&Block> {
        self.up[k][i].as_ref()
    }

    /// `P^(k)_{k,i}` for `i < k`, `None` when zero.
    pub fn down_block(&self, k: usize, i: usize) -> Option<&Block> {
        self.down[k][i].as_ref()
    }
}

fn identity_minus(phi: &Block) -> Block {
    let mut a = -phi;
    for d in 0..a.nrows() {
        a[(d, d)] += 1.0;
    }
    a
}

fn clamp_nonnegative(b: &mut Block) {
    b.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
}

/// `(I - Phi)^{-1} rhs`, checked for breakdown.
fn solve_pivot(lu: &PivotLu, rhs: &Block, level: usize) -> Result<Block> {
    let mut y = lu.solve(rhs).ok_or(Error::SingularPivot { level })?;
    if y.iter().any(|v| !v.is_finite() || *v > 1.0 + PROBABILITY_SLACK) {
        return Err(Error::SingularPivot { level });
    }
    clamp_nonnegative(&mut y);
    Ok(y)
}

/// Row-vector solve `x (I - Phi) = h`.
fn solve_pivot_left(lu_t: &PivotLu, h: &RowDVector<f64>, level: usize) -> Result<Vec<f64>> {
    let x = lu_t.solve(&h.transpose()).ok_or(Error::SingularPivot { level })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularPivot { level });
    }
    Ok(x.iter().map(|v| v.max(0.0)).collect())
}

struct Eliminator {
    phases: Vec<usize>,
    work: Vec<Vec<Option<Block>>>,
}

impl Eliminator {
    fn new(p: &BlockMatrix) -> Result<Self> {
        if !p.is_square() || p.num_row_levels() == 0 {
            return Err(Error::Shape("elimination needs a non-empty square block matrix".into()));
        }
        let levels = p.num_row_levels();
        let work = (0..levels)
            .map(|i| (0..levels).map(|j| p.block_ref(i, j).cloned()).collect())
            .collect();
        Ok(Self {
            phases: p.row_phases().to_vec(),
            work,
        })
    }

    fn zero(&self, i: usize, j: usize) -> Block {
        Block::zeros(self.phases[i], self.phases[j])
    }

    /// Censors level `n` out of the current working chain on `0..=n`,
    /// returning `(Phi_n, column n, row n)`.
    #[allow(clippy::type_complexity)]
    fn eliminate(&mut self, n: usize) -> Result<(Block, Vec<Option<Block>>, Vec<Option<Block>>)> {
        let phi = self.work[n][n].take().unwrap_or_else(|| self.zero(n, n));
        let col: Vec<Option<Block>> = (0..n).map(|i| self.work[i][n].take()).collect();
        let row: Vec<Option<Block>> = (0..n).map(|j| self.work[n][j].take()).collect();
        let lu = identity_minus(&phi).lu();
        if !lu.is_invertible() {
            return Err(Error::SingularPivot { level: n });
        }
        for (j, rj) in row.iter().enumerate() {
            let Some(rj) = rj else { continue };
            let y = solve_pivot(&lu, rj, n)?;
            for (i, ci) in col.iter().enumerate() {
                let Some(ci) = ci else { continue };
                let shape = (self.phases[i], self.phases[j]);
                let target = self.work[i][j].get_or_insert_with(|| Block::zeros(shape.0, shape.1));
                target.gemm(1.0, ci, &y, 1.0);
            }
        }
        Ok((phi, col, row))
    }

    fn into_matrix(mut self, n: usize) -> Result<BlockMatrix> {
        let phases = self.phases[..=n].to_vec();
        let mut out = BlockMatrix::square_zeros(phases);
        for i in 0..=n {
            for j in 0..=n {
                if let Some(b) = self.work[i][j].take() {
                    out.set_block(i, j, b)?;
                }
            }
        }
        Ok(out)
    }
}

/// Runs the forward block elimination over every level `N, N-1, ..., 1`.
pub fn forward_eliminate(p: &BlockMatrix) -> Result<EliminationRecord> {
    p.check_stochastic(STOCHASTIC_TOL)?;
    let mut el = Eliminator::new(p)?;
    let levels = el.phases.len();
    let mut pivots = vec![Block::zeros(0, 0); levels];
    let mut up = vec![Vec::new(); levels];
    let mut down = vec![Vec::new(); levels];
    for n in (1..levels).rev() {
        let (phi, col, row) = el.eliminate(n)?;
        pivots[n] = phi;
        up[n] = col;
        down[n] = row;
    }
    let phi0 = el.work[0][0].take().unwrap_or_else(|| el.zero(0, 0));
    for (a, row) in phi0.row_iter().enumerate() {
        let sum = row.sum();
        if (sum - 1.0).abs() > ELIMINATION_TOL {
            return Err(Error::NotStochastic {
                level: 0,
                phase: a + 1,
                sum,
            });
        }
    }
    pivots[0] = phi0;
    Ok(EliminationRecord {
        phase_counts: el.phases,
        pivots,
        up,
        down,
    })
}

/// Forward elimination stopped after level `n + 1`, returning the censored
/// chain `P^(n)` on levels `0..=n`.
pub fn forward_eliminate_to(p: &BlockMatrix, n: usize) -> Result<BlockMatrix> {
    let mut el = Eliminator::new(p)?;
    let levels = el.phases.len();
    if n >= levels {
        return Err(Error::LevelOutOfRange { index: n, levels });
    }
    for k in (n + 1..levels).rev() {
        el.eliminate(k)?;
    }
    el.into_matrix(n)
}

/// Scalar GTH on the level-0 pivot block.
///
/// Returns the unnormalized stationary row with first component 1. Pivot
/// denominators are `sum_{k < g} a[g][k]`, never `1 - a[g][g]`.
pub fn scalar_gth_level0(phi0: &Block) -> Result<Vec<f64>> {
    let r = phi0.nrows();
    if r == 0 || phi0.ncols() != r {
        return Err(Error::Shape("level-0 block must be square and non-empty".into()));
    }
    let mut a = phi0.clone();
    let mut denom = vec![0.0; r];
    for g in (1..r).rev() {
        let s: f64 = (0..g).map(|k| a[(g, k)]).sum();
        if !(s > 0.0) {
            return Err(Error::ZeroDenominator { phase: g + 1 });
        }
        denom[g] = s;
        for i in 0..g {
            let f = a[(i, g)] / s;
            if f == 0.0 {
                continue;
            }
            for j in 0..g {
                a[(i, j)] += f * a[(g, j)];
            }
        }
    }
    let mut out = vec![0.0; r];
    out[0] = 1.0;
    for b in 1..r {
        out[b] = (0..b).map(|i| out[i] * a[(i, b)]).sum::<f64>() / denom[b];
    }
    Ok(out)
}

/// Back block substitution `r_j = sum_{i<j} r_i P^(j)_{i,j} (I - Phi_j)^{-1}`.
pub fn back_substitute(rec: &EliminationRecord, r0: &[f64]) -> Result<Vec<Vec<f64>>> {
    if r0.len() != rec.phase_counts[0] {
        return Err(Error::Shape("level-0 row has the wrong length".into()));
    }
    let levels = rec.num_levels();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(levels);
    rows.push(r0.to_vec());
    for j in 1..levels {
        let mut h = RowDVector::zeros(rec.phase_counts[j]);
        for (i, ri) in rows.iter().enumerate() {
            if let Some(b) = rec.up_block(j, i) {
                h += RowDVector::from_row_slice(ri) * b;
            }
        }
        let lu_t = identity_minus(&rec.pivots[j]).transpose().lu();
        rows.push(solve_pivot_left(&lu_t, &h, j)?);
    }
    Ok(rows)
}

/// Scales unnormalized level rows to total mass one.
pub fn normalize(rows: Vec<Vec<f64>>) -> Result<StationaryVector> {
    StationaryVector::normalized(rows)
}

/// Stationary distribution of a finite irreducible stochastic block chain.
pub fn solve(p: &BlockMatrix) -> Result<StationaryVector> {
    let rec = forward_eliminate(p)?;
    let r0 = scalar_gth_level0(rec.pivot(0))?;
    normalize(back_substitute(&rec, &r0)?)
}

/// Block GTH for chains that are skip-free to the left (block upper
/// Hessenberg: block `(i, j)` vanishes for `j < i - 1`).
///
/// Eliminating level `n` then only touches column `n - 1`, so the censored
/// columns can be regenerated by a Horner sweep over
/// `Gamma_n = (I - Phi_n)^{-1} P_{n,n-1}` instead of being stored. Memory is
/// linear in the number of levels and time quadratic.
pub fn solve_upper_hessenberg<M: LevelBlocks + ?Sized>(m: &M) -> Result<StationaryVector> {
    let phases = m.phase_counts().to_vec();
    let levels = phases.len();
    if levels == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    for i in 2..levels {
        for j in 0..i - 1 {
            if m.block_at(i, j).is_some() {
                return Err(Error::Shape(format!(
                    "block ({i}, {j}) lies below the first subdiagonal"
                )));
            }
        }
    }
    let last = levels - 1;
    let zero = |i: usize, j: usize| Block::zeros(phases[i], phases[j]);
    let block_or_zero = |i: usize, j: usize| m.block_at(i, j).cloned().unwrap_or_else(|| zero(i, j));

    // gammas[n] for n >= 1; pivot_lu_t[n] factors (I - Phi_n)^T
    let mut gammas: Vec<Block> = vec![Block::zeros(0, 0); levels];
    let mut pivot_lu_t: Vec<Option<PivotLu>> = (0..levels).map(|_| None).collect();
    let mut phi0 = None;
    for n in (0..levels).rev() {
        let mut h = block_or_zero(n, last);
        for k in (n..last).rev() {
            let mut next = block_or_zero(n, k);
            next.gemm(1.0, &h, &gammas[k + 1], 1.0);
            h = next;
        }
        if n == 0 {
            phi0 = Some(h);
            break;
        }
        let a = identity_minus(&h);
        let down = m.block_at(n, n - 1).ok_or(Error::Reducible {
            state: level_offsets(&phases)[n],
        })?;
        gammas[n] = solve_pivot(&a.clone().lu(), down, n)?;
        pivot_lu_t[n] = Some(a.transpose().lu());
    }
    let phi0 = phi0.expect("level 0 is always reached");
    for (a, row) in phi0.row_iter().enumerate() {
        let sum = row.sum();
        if (sum - 1.0).abs() > ELIMINATION_TOL {
            return Err(Error::NotStochastic {
                level: 0,
                phase: a + 1,
                sum,
            });
        }
    }

    // pending[k] = sum_{i < j} r_i P_{i,k} for the level j being recovered
    let mut pending: Vec<RowDVector<f64>> = phases.iter().map(|&p| RowDVector::zeros(p)).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(levels);
    let r0 = scalar_gth_level0(&phi0)?;
    let push_row = |rows: &mut Vec<Vec<f64>>, pending: &mut Vec<RowDVector<f64>>, j: usize, r: Vec<f64>| {
        let rv = RowDVector::from_row_slice(&r);
        for (k, acc) in pending.iter_mut().enumerate().skip(j + 1) {
            if let Some(b) = m.block_at(j, k) {
                *acc += &rv * b;
            }
        }
        rows.push(r);
    };
    push_row(&mut rows, &mut pending, 0, r0);
    for (j, lu_t) in pivot_lu_t.iter().enumerate().skip(1) {
        let mut h = pending[last].clone();
        for k in (j..last).rev() {
            h = &h * &gammas[k + 1] + &pending[k];
        }
        let lu_t = lu_t.as_ref().expect("factored in the forward sweep");
        let r = solve_pivot_left(lu_t, &h, j)?;
        push_row(&mut rows, &mut pending, j, r);
    }
    normalize(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::random_chain;
    use nalgebra::DMatrix;

    fn scalar(rows: usize, data: &[f64]) -> BlockMatrix {
        BlockMatrix::square_from_dense(&DMatrix::from_row_slice(rows, rows, data), vec![1; rows]).unwrap()
    }

    /// Dense reference: solve pi (I - P) = 0 with the last equation
    /// replaced by normalization.
    fn dense_stationary(p: &BlockMatrix) -> Vec<f64> {
        let d = p.to_dense();
        let n = d.nrows();
        let mut a = (DMatrix::identity(n, n) - d).transpose();
        for c in 0..n {
            a[(n - 1, c)] = 1.0;
        }
        let mut b = nalgebra::DVector::zeros(n);
        b[n - 1] = 1.0;
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn one_level_record() {
        let p = BlockMatrix::square_from_dense(&DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]), vec![2]).unwrap();
        let rec = forward_eliminate(&p).unwrap();
        assert_eq!(rec.pivot(0), &p.block(0, 0).unwrap());
        assert_eq!(rec.num_levels(), 1);
    }

    #[test]
    fn two_state_censored_pivot_is_one() {
        let rec = forward_eliminate(&scalar(2, &[0.5, 0.5, 0.25, 0.75])).unwrap();
        assert!((rec.pivot(0)[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_gth_examples() {
        assert_eq!(scalar_gth_level0(&DMatrix::from_element(1, 1, 1.0)).unwrap(), vec![1.0]);
        assert_eq!(
            scalar_gth_level0(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap(),
            vec![1.0, 1.0]
        );
        let r = scalar_gth_level0(&DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7])).unwrap();
        assert!((r[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_gth_reducible_block() {
        let err = scalar_gth_level0(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap_err();
        assert_eq!(err, Error::ZeroDenominator { phase: 2 });
    }

    #[test]
    fn back_substitution_examples() {
        let p = scalar(1, &[1.0]);
        let rec = forward_eliminate(&p).unwrap();
        assert_eq!(back_substitute(&rec, &[1.0]).unwrap(), vec![vec![1.0]]);

        let p = scalar(2, &[0.5, 0.5, 0.5, 0.5]);
        let rec = forward_eliminate(&p).unwrap();
        let r0 = scalar_gth_level0(rec.pivot(0)).unwrap();
        let rows = back_substitute(&rec, &r0).unwrap();
        assert!((rows[1][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(vec![vec![1.0]]).unwrap().values(), &[1.0]);
        let v = normalize(vec![vec![1.0], vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(v.values(), &[0.25, 0.25, 0.5]);
        assert_eq!(normalize(vec![vec![0.0, 0.0]]).unwrap_err(), Error::ZeroMass);
    }

    #[test]
    fn solve_small_examples() {
        let v = solve(&scalar(2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(v.values(), &[0.5, 0.5]);
        let v = solve(&scalar(2, &[0.9, 0.1, 0.3, 0.7])).unwrap();
        assert!((v.values()[0] - 0.75).abs() < 1e-15);
        assert!((v.values()[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn solve_matches_dense_linear_system() {
        for seed in 0..20 {
            let p = random_chain(seed, 6, 4);
            let pi = solve(&p).unwrap();
            let want = dense_stationary(&p);
            for (a, b) in pi.values().iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "seed {seed}");
            }
            let residual = pi.times(&p).unwrap().max_abs_diff(&pi).unwrap();
            assert!(residual < 1e-10);
        }
    }

    #[test]
    fn intermediate_chains_stay_stochastic() {
        let p = random_chain(7, 6, 3);
        for n in 0..6 {
            let pn = forward_eliminate_to(&p, n).unwrap();
            assert!(pn.max_row_deviation() <= ELIMINATION_TOL, "level {n}");
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        // level 1 is closed
        let p = scalar(2, &[0.5, 0.5, 0.0, 1.0]);
        assert_eq!(forward_eliminate(&p).unwrap_err(), Error::SingularPivot { level: 1 });
    }

    fn random_hessenberg(seed: u64, levels: usize) -> BlockMatrix {
        let full = random_chain(seed, levels, 3);
        let mut h = BlockMatrix::square_zeros(full.row_phases().to_vec());
        for (i, j, b) in full.nonzero_blocks() {
            if j + 1 >= i {
                h.set_block(i, j, b.clone()).unwrap();
            }
        }
        // renormalize rows
        let d = h.to_dense();
        let mut d2 = d.clone();
        for (mut row, s) in d2.row_iter_mut().zip(h.row_sums()) {
            row /= s;
        }
        BlockMatrix::square_from_dense(&d2, full.row_phases().to_vec()).unwrap()
    }

    #[test]
    fn hessenberg_solver_agrees_with_general_solver() {
        for seed in 0..20 {
            let p = random_hessenberg(seed, 7);
            let a = solve(&p).unwrap();
            let b = solve_upper_hessenberg(&p).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() < 1e-13, "seed {seed}");
        }
    }

    #[test]
    fn hessenberg_solver_rejects_deep_down_blocks() {
        let p = random_chain(3, 4, 2);
        let has_deep = (2..4).any(|i| (0..i - 1).any(|j| p.block_ref(i, j).is_some()));
        if has_deep {
            assert!(matches!(solve_upper_hessenberg(&p), Err(Error::Shape(_))));
        }
    }
}
