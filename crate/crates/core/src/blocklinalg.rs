//! Level/phase block matrices and stationary vectors.
//!
//! A [`BlockMatrix`] is partitioned into level × level blocks, each level
//! carrying its own phase count. Blocks that are entirely zero are not
//! stored, so banded and Hessenberg structures cost memory proportional to
//! their nonzero pattern.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense level block.
pub type Block = DMatrix<f64>;

/// Row-sum tolerance for anything flagged stochastic.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A state `(level, phase)`; the phase is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelPhaseIndex {
    level: usize,
    phase: usize,
}

impl LevelPhaseIndex {
    pub fn new(level: usize, phase: usize, phase_counts: &[usize]) -> Result<Self> {
        let count = *phase_counts.get(level).ok_or(Error::LevelOutOfRange {
            index: level,
            levels: phase_counts.len(),
        })?;
        if phase == 0 || phase > count {
            return Err(Error::PhaseOutOfRange { level, phase, count });
        }
        Ok(Self { level, phase })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    /// Position in the flattened scalar state space.
    pub fn flat(&self, phase_counts: &[usize]) -> usize {
        phase_counts[..self.level].iter().sum::<usize>() + self.phase - 1
    }
}

/// Read-only access to the blocks of a square level-partitioned matrix.
///
/// Implemented by [`BlockMatrix`] and by structured matrices that generate
/// their blocks from a compact description.
pub trait LevelBlocks {
    fn phase_counts(&self) -> &[usize];

    /// Block `(i, j)`, or `None` when it is identically zero.
    fn block_at(&self, i: usize, j: usize) -> Option<&Block>;

    fn num_levels(&self) -> usize {
        self.phase_counts().len()
    }
}

/// Cumulative offsets of each level in the flattened scalar index.
pub fn level_offsets(phase_counts: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(phase_counts.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for &p in phase_counts {
        acc += p;
        offsets.push(acc);
    }
    offsets
}

/// A nonnegative matrix partitioned into level blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    row_phases: Vec<usize>,
    col_phases: Vec<usize>,
    blocks: Vec<Option<Block>>,
}

/// The four corners of a square [`BlockMatrix`] split after level `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Levels `0..=n` to levels `0..=n`.
    pub t: BlockMatrix,
    /// Levels `0..=n` to levels `n+1..`.
    pub u: BlockMatrix,
    /// Levels `n+1..` to levels `0..=n`.
    pub d: BlockMatrix,
    /// Levels `n+1..` to levels `n+1..`.
    pub q: BlockMatrix,
}

impl BlockMatrix {
    /// All-zero matrix with the given row and column level structure.
    pub fn zeros(row_phases: Vec<usize>, col_phases: Vec<usize>) -> Self {
        let len = row_phases.len() * col_phases.len();
        Self {
            row_phases,
            col_phases,
            blocks: vec![None; len],
        }
    }

    pub fn square_zeros(phases: Vec<usize>) -> Self {
        Self::zeros(phases.clone(), phases)
    }

    /// Splits a dense matrix into blocks, dropping all-zero blocks.
    pub fn from_dense(dense: &DMatrix<f64>, row_phases: Vec<usize>, col_phases: Vec<usize>) -> Result<Self> {
        let ro = level_offsets(&row_phases);
        let co = level_offsets(&col_phases);
        if dense.nrows() != ro[row_phases.len()] || dense.ncols() != co[col_phases.len()] {
            return Err(Error::Shape(format!(
                "dense matrix is {}x{}, level structure needs {}x{}",
                dense.nrows(),
                dense.ncols(),
                ro[row_phases.len()],
                co[col_phases.len()]
            )));
        }
        let mut m = Self::zeros(row_phases.clone(), col_phases.clone());
        for i in 0..row_phases.len() {
            for j in 0..col_phases.len() {
                let b = dense.view((ro[i], co[j]), (row_phases[i], col_phases[j])).into_owned();
                m.set_block(i, j, b)?;
            }
        }
        Ok(m)
    }

    /// Square matrix from a dense matrix.
    pub fn square_from_dense(dense: &DMatrix<f64>, phases: Vec<usize>) -> Result<Self> {
        Self::from_dense(dense, phases.clone(), phases)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let ro = level_offsets(&self.row_phases);
        let co = level_offsets(&self.col_phases);
        let mut dense = DMatrix::zeros(ro[self.row_phases.len()], co[self.col_phases.len()]);
        for (i, j, b) in self.nonzero_blocks() {
            dense.view_mut((ro[i], co[j]), (b.nrows(), b.ncols())).copy_from(b);
        }
        dense
    }

    pub fn row_phases(&self) -> &[usize] {
        &self.row_phases
    }

    pub fn col_phases(&self) -> &[usize] {
        &self.col_phases
    }

    pub fn num_row_levels(&self) -> usize {
        self.row_phases.len()
    }

    pub fn num_col_levels(&self) -> usize {
        self.col_phases.len()
    }

    pub fn is_square(&self) -> bool {
        self.row_phases == self.col_phases
    }

    pub fn scalar_rows(&self) -> usize {
        self.row_phases.iter().sum()
    }

    fn check_index(&self, i: usize, j: usize) -> Result<usize> {
        if i >= self.row_phases.len() {
            return Err(Error::LevelOutOfRange {
                index: i,
                levels: self.row_phases.len(),
            });
        }
        if j >= self.col_phases.len() {
            return Err(Error::LevelOutOfRange {
                index: j,
                levels: self.col_phases.len(),
            });
        }
        Ok(i * self.col_phases.len() + j)
    }

    /// Block `(i, j)` by value; absent blocks come back as zeros.
    pub fn block(&self, i: usize, j: usize) -> Result<Block> {
        let k = self.check_index(i, j)?;
        Ok(match &self.blocks[k] {
            Some(b) => b.clone(),
            None => Block::zeros(self.row_phases[i], self.col_phases[j]),
        })
    }

    /// Block `(i, j)` by reference, `None` when zero or out of range.
    pub fn block_ref(&self, i: usize, j: usize) -> Option<&Block> {
        if i >= self.row_phases.len() || j >= self.col_phases.len() {
            return None;
        }
        self.blocks[i * self.col_phases.len() + j].as_ref()
    }

    /// Replaces block `(i, j)`. Entries must be finite and nonnegative.
    pub fn set_block(&mut self, i: usize, j: usize, block: Block) -> Result<()> {
        let k = self.check_index(i, j)?;
        if block.nrows() != self.row_phases[i] || block.ncols() != self.col_phases[j] {
            return Err(Error::Shape(format!(
                "block ({i}, {j}) must be {}x{}, got {}x{}",
                self.row_phases[i],
                self.col_phases[j],
                block.nrows(),
                block.ncols()
            )));
        }
        if let Some(&value) = block.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::NegativeEntry {
                row_level: i,
                col_level: j,
                value,
            });
        }
        self.blocks[k] = if block.iter().all(|&v| v == 0.0) {
            None
        } else {
            Some(block)
        };
        Ok(())
    }

    /// Adds `block` into position `(i, j)`.
    pub fn add_to_block(&mut self, i: usize, j: usize, block: &Block) -> Result<()> {
        let current = self.block(i, j)?;
        self.set_block(i, j, current + block)
    }

    /// Iterates the stored (nonzero) blocks in row-major order.
    pub fn nonzero_blocks(&self) -> impl Iterator<Item = (usize, usize, &Block)> {
        let cols = self.col_phases.len();
        self.blocks
            .iter()
            .enumerate()
            .filter_map(move |(k, b)| b.as_ref().map(|b| (k / cols, k % cols, b)))
    }

    /// Sum of scalar row `(i, alpha)` across every block; `alpha` is 1-based.
    pub fn row_sum(&self, i: usize, alpha: usize) -> Result<f64> {
        let idx = LevelPhaseIndex::new(i, alpha, &self.row_phases)?;
        let row = idx.phase() - 1;
        Ok((0..self.col_phases.len())
            .filter_map(|j| self.block_ref(i, j))
            .map(|b| b.row(row).sum())
            .sum())
    }

    /// Missing mass `1 - row_sum(i, alpha)` of a substochastic row.
    pub fn row_defect(&self, i: usize, alpha: usize) -> Result<f64> {
        let sum = self.row_sum(i, alpha)?;
        if sum > 1.0 + STOCHASTIC_TOL {
            return Err(Error::NotSubstochastic {
                level: i,
                phase: alpha,
                sum,
            });
        }
        let defect = 1.0 - sum;
        Ok(if defect < 0.0 { 0.0 } else { defect })
    }

    /// All scalar row sums, level-major.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.scalar_rows()];
        let ro = level_offsets(&self.row_phases);
        for (i, _, b) in self.nonzero_blocks() {
            for a in 0..b.nrows() {
                sums[ro[i] + a] += b.row(a).sum();
            }
        }
        sums
    }

    /// Largest `|row sum - 1|` over all scalar rows.
    pub fn max_row_deviation(&self) -> f64 {
        self.row_sums().into_iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Errors on the first scalar row whose sum is further than `tol` from 1.
    pub fn check_stochastic(&self, tol: f64) -> Result<()> {
        let ro = level_offsets(&self.row_phases);
        for (k, sum) in self.row_sums().into_iter().enumerate() {
            if (sum - 1.0).abs() > tol {
                let level = ro.partition_point(|&o| o <= k) - 1;
                return Err(Error::NotStochastic {
                    level,
                    phase: k - ro[level] + 1,
                    sum,
                });
            }
        }
        Ok(())
    }

    fn sub_matrix(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> BlockMatrix {
        let mut out = BlockMatrix::zeros(
            self.row_phases[rows.clone()].to_vec(),
            self.col_phases[cols.clone()].to_vec(),
        );
        let ncols = cols.len();
        for (oi, i) in rows.clone().enumerate() {
            for (oj, j) in cols.clone().enumerate() {
                out.blocks[oi * ncols + oj] = self.block_ref(i, j).cloned();
            }
        }
        out
    }

    /// Splits a square matrix into `(T, U, D, Q)` around levels `0..=n`.
    pub fn partition(&self, n: usize) -> Result<Partition> {
        let levels = self.row_phases.len();
        if !self.is_square() {
            return Err(Error::Shape("partition needs a square block matrix".into()));
        }
        if n + 1 >= levels {
            return Err(Error::LevelOutOfRange {
                index: n,
                levels: levels.saturating_sub(1),
            });
        }
        Ok(Partition {
            t: self.sub_matrix(0..n + 1, 0..n + 1),
            u: self.sub_matrix(0..n + 1, n + 1..levels),
            d: self.sub_matrix(n + 1..levels, 0..n + 1),
            q: self.sub_matrix(n + 1..levels, n + 1..levels),
        })
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &BlockMatrix) -> Result<f64> {
        if self.row_phases != other.row_phases || self.col_phases != other.col_phases {
            return Err(Error::Shape("level structures differ".into()));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            let d = match (a, b) {
                (None, None) => 0.0,
                (Some(x), None) | (None, Some(x)) => x.amax(),
                (Some(x), Some(y)) => (x - y).amax(),
            };
            worst = worst.max(d);
        }
        Ok(worst)
    }
}

impl Partition {
    /// Inverse of [`BlockMatrix::partition`].
    pub fn reassemble(&self) -> BlockMatrix {
        let lt = self.t.num_row_levels();
        let mut phases = self.t.row_phases().to_vec();
        phases.extend_from_slice(self.q.row_phases());
        let mut out = BlockMatrix::square_zeros(phases);
        let parts = [(&self.t, 0, 0), (&self.u, 0, lt), (&self.d, lt, 0), (&self.q, lt, lt)];
        for (m, di, dj) in parts {
            for (i, j, b) in m.nonzero_blocks() {
                let k = (i + di) * out.col_phases.len() + j + dj;
                out.blocks[k] = Some(b.clone());
            }
        }
        out
    }
}

impl LevelBlocks for BlockMatrix {
    fn phase_counts(&self) -> &[usize] {
        &self.row_phases
    }

    fn block_at(&self, i: usize, j: usize) -> Option<&Block> {
        self.block_ref(i, j)
    }
}

/// Verifies that every scalar state communicates with state `(0, 1)`.
///
/// Two breadth-first sweeps (forward and reverse) walk the positive
/// entries block by block without materializing an adjacency list.
pub fn check_irreducible<M: LevelBlocks + ?Sized>(m: &M) -> Result<()> {
    let phases = m.phase_counts();
    let levels = phases.len();
    let offsets = level_offsets(phases);
    let total = offsets[levels];
    if total == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    let locate = |flat: usize| {
        let level = offsets.partition_point(|&o| o <= flat) - 1;
        (level, flat - offsets[level])
    };

    for reverse in [false, true] {
        let mut seen = vec![false; total];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(s) = queue.pop_front() {
            let (level, phase) = locate(s);
            for other in 0..levels {
                let block = if reverse {
                    m.block_at(other, level)
                } else {
                    m.block_at(level, other)
                };
                let Some(b) = block else { continue };
                for q in 0..phases[other] {
                    let v = if reverse { b[(q, phase)] } else { b[(phase, q)] };
                    let t = offsets[other] + q;
                    if v > 0.0 && !seen[t] {
                        seen[t] = true;
                        queue.push_back(t);
                    }
                }
            }
        }
        if let Some(state) = seen.iter().position(|&v| !v) {
            return Err(Error::Reducible { state });
        }
    }
    Ok(())
}

/// A level-partitioned probability row vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryVector {
    phase_counts: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl StationaryVector {
    /// Wraps per-level rows without rescaling. Entries must be nonnegative.
    pub fn from_levels(levels: Vec<Vec<f64>>) -> Result<Self> {
        let phase_counts: Vec<usize> = levels.iter().map(Vec::len).collect();
        let values: Vec<f64> = levels.into_iter().flatten().collect();
        if let Some(&v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "stationary entries must be finite and nonnegative, got {v}"
            )));
        }
        let offsets = level_offsets(&phase_counts);
        Ok(Self {
            phase_counts,
            offsets,
            values,
        })
    }

    /// Divides by the total mass so the entries sum to one.
    pub fn normalized(levels: Vec<Vec<f64>>) -> Result<Self> {
        let mut v = Self::from_levels(levels)?;
        let total: f64 = v.values.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroMass);
        }
        v.values.iter_mut().for_each(|x| *x /= total);
        Ok(v)
    }

    pub fn num_levels(&self) -> usize {
        self.phase_counts.len()
    }

    pub fn phase_counts(&self) -> &[usize] {
        &self.phase_counts
    }

    pub fn level(&self, i: usize) -> &[f64] {
        &self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn level_mass(&self, i: usize) -> f64 {
        self.level(i).iter().sum()
    }

    /// Mass on levels strictly above `n`.
    pub fn tail_mass(&self, n: usize) -> f64 {
        if n + 1 >= self.num_levels() {
            return 0.0;
        }
        self.values[self.offsets[n + 1]..].iter().sum()
    }

    /// Largest entrywise difference; the level structures must agree.
    pub fn max_abs_diff(&self, other: &StationaryVector) -> Result<f64> {
        if self.phase_counts != other.phase_counts {
            return Err(Error::Shape(
                "stationary vectors have different level structures".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn l1_distance(&self, other: &StationaryVector) -> Result<f64> {
        if self.phase_counts != other.phase_counts {
            return Err(Error::Shape(
                "stationary vectors have different level structures".into(),
            ));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum())
    }

    /// `self * P` for a square block matrix with matching levels.
    pub fn times(&self, p: &BlockMatrix) -> Result<StationaryVector> {
        if p.row_phases() != self.phase_counts.as_slice() || !p.is_square() {
            return Err(Error::Shape("vector and matrix level structures differ".into()));
        }
        let mut out = vec![0.0; self.values.len()];
        for (i, j, b) in p.nonzero_blocks() {
            let x = self.level(i);
            for (q, col) in b.column_iter().enumerate() {
                out[self.offsets[j] + q] += col.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            }
        }
        Ok(StationaryVector {
            phase_counts: self.phase_counts.clone(),
            offsets: self.offsets.clone(),
            values: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::random_chain;
    use proptest::prelude::*;

    fn two_level(a: f64, b: f64, c: f64, d: f64) -> BlockMatrix {
        BlockMatrix::square_from_dense(&DMatrix::from_row_slice(2, 2, &[a, b, c, d]), vec![1, 1]).unwrap()
    }

    #[test]
    fn block_get_scalar_and_layout() {
        let m = BlockMatrix::square_from_dense(&DMatrix::from_element(1, 1, 1.0), vec![1]).unwrap();
        assert_eq!(m.block(0, 0).unwrap(), DMatrix::from_element(1, 1, 1.0));

        let m = two_level(0.1, 0.9, 0.3, 0.7);
        assert_eq!(m.block(1, 0).unwrap()[(0, 0)], 0.3);
        assert!(matches!(m.block(2, 0), Err(Error::LevelOutOfRange { .. })));
    }

    #[test]
    fn heterogeneous_levels_shape_checks() {
        let mut m = BlockMatrix::square_zeros(vec![1, 3]);
        assert!(m.set_block(0, 1, Block::from_element(1, 3, 0.2)).is_ok());
        assert!(matches!(m.set_block(0, 1, Block::zeros(3, 1)), Err(Error::Shape(_))));
        assert!(matches!(
            m.set_block(1, 1, Block::from_element(3, 3, -0.1)),
            Err(Error::NegativeEntry { .. })
        ));
    }

    #[test]
    fn row_defect_cases() {
        let m = two_level(0.5, 0.5, 0.25, 0.75);
        assert_eq!(m.row_defect(0, 1).unwrap(), 0.0);
        let s = BlockMatrix::square_from_dense(&DMatrix::from_element(1, 1, 0.7), vec![1]).unwrap();
        assert!((s.row_defect(0, 1).unwrap() - 0.3).abs() < 1e-15);
        let over = BlockMatrix::square_from_dense(&DMatrix::from_element(1, 1, 1.1), vec![1]).unwrap();
        assert!(matches!(over.row_defect(0, 1), Err(Error::NotSubstochastic { .. })));
        assert!(matches!(s.row_defect(0, 2), Err(Error::PhaseOutOfRange { .. })));
    }

    #[test]
    fn partition_two_level_and_range() {
        let m = two_level(0.1, 0.9, 0.3, 0.7);
        let p = m.partition(0).unwrap();
        assert_eq!(p.t.block(0, 0).unwrap()[(0, 0)], 0.1);
        assert_eq!(p.u.block(0, 0).unwrap()[(0, 0)], 0.9);
        assert_eq!(p.d.block(0, 0).unwrap()[(0, 0)], 0.3);
        assert_eq!(p.q.block(0, 0).unwrap()[(0, 0)], 0.7);
        assert!(m.partition(1).is_err());
    }

    #[test]
    fn partition_of_hessenberg_has_single_down_entry() {
        // scalar upper-Hessenberg chain on 5 states
        let n = 5;
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            let lo = i.saturating_sub(1);
            let w = 1.0 / (n - lo) as f64;
            for j in lo..n {
                dense[(i, j)] = w;
            }
        }
        let m = BlockMatrix::square_from_dense(&dense, vec![1; n]).unwrap();
        let d = m.partition(2).unwrap().d.to_dense();
        let nonzero: Vec<_> = (0..d.nrows())
            .flat_map(|r| (0..d.ncols()).map(move |c| (r, c)))
            .filter(|&(r, c)| d[(r, c)] != 0.0)
            .collect();
        assert_eq!(nonzero, vec![(0, 2)]);
    }

    #[test]
    fn irreducibility_scan() {
        assert!(check_irreducible(&two_level(0.5, 0.5, 0.5, 0.5)).is_ok());
        assert!(matches!(
            check_irreducible(&two_level(1.0, 0.0, 0.5, 0.5)),
            Err(Error::Reducible { state: 1 })
        ));
    }

    proptest! {
        #[test]
        fn partition_reassembles_bit_exact(seed in 0u64..1000, levels in 2usize..6, n_frac in 0.0f64..1.0) {
            let p = random_chain(seed, levels, 3);
            let n = ((levels - 1) as f64 * n_frac) as usize;
            let n = n.min(levels - 2);
            let back = p.partition(n).unwrap().reassemble();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn defect_plus_sum_is_one(seed in 0u64..1000) {
            let p = random_chain(seed, 3, 2);
            // make it substochastic by scaling one level's blocks
            let mut sub = p.clone();
            for j in 0..3 {
                let b = p.block(1, j).unwrap() * 0.8;
                sub.set_block(1, j, b).unwrap();
            }
            for i in 0..3 {
                for a in 1..=sub.row_phases()[i] {
                    let s = sub.row_sum(i, a).unwrap();
                    let d = sub.row_defect(i, a).unwrap();
                    prop_assert!((s + d - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}
