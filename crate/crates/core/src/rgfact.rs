//! RG-factorization `I - P = (I - R_U)(I - Phi_D)(I - G_L)` read off the
//! forward elimination, and the two-step triangular solve built on it.

use nalgebra::{DMatrix, RowDVector};

use crate::blocklinalg::{level_offsets, Block, BlockMatrix, StationaryVector};
use crate::error::{Error, Result};
use crate::gth::{self, EliminationRecord};

/// R-measure, censored diagonal and G-measure blocks of a finite chain.
#[derive(Debug, Clone)]
pub struct RGFactors {
    phase_counts: Vec<usize>,
    // r[j][i] = R_{i,j} (i < j); g[k][i] = G_{k,i} (i < k)
    r: Vec<Vec<Option<Block>>>,
    phi: Vec<Block>,
    g: Vec<Vec<Option<Block>>>,
}

impl RGFactors {
    pub fn num_levels(&self) -> usize {
        self.phase_counts.len()
    }

    pub fn phase_counts(&self) -> &[usize] {
        &self.phase_counts
    }

    /// `R_{i,j}` for `i < j`, `None` when zero.
    pub fn r_block(&self, i: usize, j: usize) -> Option<&Block> {
        self.r.get(j)?.get(i)?.as_ref()
    }

    /// `G_{i,j}` for `i > j`, `None` when zero.
    pub fn g_block(&self, i: usize, j: usize) -> Option<&Block> {
        self.g.get(i)?.get(j)?.as_ref()
    }

    pub fn phi(&self, k: usize) -> &Block {
        &self.phi[k]
    }

    /// Zeroes every `R` block; used to check residual sensitivity.
    pub fn without_r(&self) -> Self {
        let mut out = self.clone();
        out.r.iter_mut().flatten().for_each(|b| *b = None);
        out
    }

    /// Strictly block-upper-triangular `R_U`.
    pub fn r_matrix(&self) -> Result<BlockMatrix> {
        let mut m = BlockMatrix::square_zeros(self.phase_counts.clone());
        for (j, col) in self.r.iter().enumerate() {
            for (i, b) in col.iter().enumerate() {
                if let Some(b) = b {
                    m.set_block(i, j, b.clone())?;
                }
            }
        }
        Ok(m)
    }

    /// Block-diagonal `Phi_D`.
    pub fn phi_matrix(&self) -> Result<BlockMatrix> {
        let mut m = BlockMatrix::square_zeros(self.phase_counts.clone());
        for (k, b) in self.phi.iter().enumerate() {
            m.set_block(k, k, b.clone())?;
        }
        Ok(m)
    }

    /// Strictly block-lower-triangular `G_L`.
    pub fn g_matrix(&self) -> Result<BlockMatrix> {
        let mut m = BlockMatrix::square_zeros(self.phase_counts.clone());
        for (k, row) in self.g.iter().enumerate() {
            for (i, b) in row.iter().enumerate() {
                if let Some(b) = b {
                    m.set_block(k, i, b.clone())?;
                }
            }
        }
        Ok(m)
    }
}

fn identity_minus(phi: &Block) -> Block {
    DMatrix::identity(phi.nrows(), phi.ncols()) - phi
}

/// Builds the factors from an elimination record:
/// `R_{i,k} = P^(k)_{i,k} (I - Phi_k)^{-1}`, `G_{k,i} = (I - Phi_k)^{-1} P^(k)_{k,i}`.
pub fn factors_from_record(rec: &EliminationRecord) -> Result<RGFactors> {
    let levels = rec.num_levels();
    let mut r = vec![Vec::new(); levels];
    let mut g = vec![Vec::new(); levels];
    let phi: Vec<Block> = (0..levels).map(|k| rec.pivot(k).clone()).collect();
    for k in 1..levels {
        let a = identity_minus(&phi[k]);
        let lu = a.clone().lu();
        let lu_t = a.transpose().lu();
        let mut rk = Vec::with_capacity(k);
        let mut gk = Vec::with_capacity(k);
        for i in 0..k {
            rk.push(match rec.up_block(k, i) {
                Some(up) => {
                    let x = lu_t.solve(&up.transpose()).ok_or(Error::SingularPivot { level: k })?;
                    Some(x.transpose().map(|v| v.max(0.0)))
                }
                None => None,
            });
            gk.push(match rec.down_block(k, i) {
                Some(down) => {
                    let y = lu.solve(down).ok_or(Error::SingularPivot { level: k })?;
                    Some(y.map(|v| v.max(0.0)))
                }
                None => None,
            });
        }
        r[k] = rk;
        g[k] = gk;
    }
    Ok(RGFactors {
        phase_counts: rec.phase_counts().to_vec(),
        r,
        phi,
        g,
    })
}

/// RG-factorization of a finite irreducible stochastic block chain.
pub fn factorize(p: &BlockMatrix) -> Result<RGFactors> {
    factors_from_record(&gth::forward_eliminate(p)?)
}

/// Seeds `pi_0` with the stationary row of `Phi_0`, then runs
/// `pi_j = sum_{i<j} pi_i R_{i,j}` and normalizes.
pub fn solve_by_factors(f: &RGFactors) -> Result<StationaryVector> {
    let levels = f.num_levels();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(levels);
    rows.push(gth::scalar_gth_level0(&f.phi[0])?);
    for j in 1..levels {
        let mut acc = RowDVector::zeros(f.phase_counts[j]);
        for (i, pi_i) in rows.iter().enumerate() {
            if let Some(b) = f.r_block(i, j) {
                acc += RowDVector::from_row_slice(pi_i) * b;
            }
        }
        rows.push(acc.iter().copied().collect());
    }
    gth::normalize(rows)
}

/// `max |(I - R_U)(I - Phi_D)(I - G_L) - (I - P)|`.
pub fn residual(p: &BlockMatrix, f: &RGFactors) -> Result<f64> {
    if p.row_phases() != f.phase_counts.as_slice() || !p.is_square() {
        return Err(Error::Shape(
            "factors and matrix have different level structures".into(),
        ));
    }
    let n = level_offsets(&f.phase_counts)[f.num_levels()];
    let eye = DMatrix::<f64>::identity(n, n);
    let lhs =
        (&eye - f.r_matrix()?.to_dense()) * (&eye - f.phi_matrix()?.to_dense()) * (&eye - f.g_matrix()?.to_dense());
    let rhs = &eye - p.to_dense();
    Ok((lhs - rhs).amax())
}
