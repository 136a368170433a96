//! Stochastic completions of the northwest corner of an M/G/1 chain and
//! the diagnostics used to compare them.

use nalgebra::DMatrix;

use crate::blocklinalg::{check_irreducible, level_offsets, Block, BlockMatrix, StationaryVector};
use crate::error::{Error, Result};
use crate::gth;
use crate::mg1::{self, censored_column, error_bound, ErrorBound, GColumnSeries, Mg1Spec, Mg1Truncation};

/// Masses at or below this are treated as zero by the renormalization.
pub const ZERO_MASS_TOL: f64 = 1e-14;

/// How one scalar row of the approximate censored column was completed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RenormRule {
    /// Multiplied by `target / captured`.
    Scaled(f64),
    /// Nothing captured: the target mass is spread evenly over the phases.
    UniformSpread,
    /// Nothing missing: left at zero.
    ZeroRow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowRenorm {
    /// Row defect `c_{i,alpha}` of `T_N`.
    pub target: f64,
    /// Row mass `c^(M)_{i,alpha}` of the approximate column.
    pub captured: f64,
    pub rule: RenormRule,
}

/// Per-row record of an RA-CM construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RenormReport {
    pub depth: usize,
    pub bound: ErrorBound,
    /// `rows[i][alpha]`.
    pub rows: Vec<Vec<RowRenorm>>,
}

/// Depth of the censored-column series used by [`racm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Depth {
    Fixed(usize),
    /// Minimal depth whose error bound is at most `eps`.
    Tolerance {
        eps: f64,
        ceiling: usize,
    },
}

/// Rescales `row` in place to carry `target` mass.
pub fn renormalize_row(target: f64, row: &mut [f64]) -> RowRenorm {
    let captured: f64 = row.iter().sum();
    let rule = if target <= ZERO_MASS_TOL {
        row.iter_mut().for_each(|v| *v = 0.0);
        RenormRule::ZeroRow
    } else if captured <= ZERO_MASS_TOL {
        let share = target / row.len() as f64;
        row.iter_mut().for_each(|v| *v = share);
        RenormRule::UniformSpread
    } else {
        let s = target / captured;
        row.iter_mut().for_each(|v| *v *= s);
        RenormRule::Scaled(s)
    };
    RowRenorm { target, captured, rule }
}

fn corner_block(spec: &Mg1Spec, i: usize, n: usize) -> Block {
    spec.block(i, n)
        .unwrap_or_else(|| Block::zeros(spec.phase_count(i), spec.repeat_phases()))
}

/// RA-CM truncation as a structured matrix, suitable for large `N`.
pub fn racm_truncation(spec: &Mg1Spec, n: usize, depth: Depth) -> Result<(Mg1Truncation, RenormReport)> {
    if n == 0 {
        return Err(Error::InvalidParameter("truncation level must be at least 1".into()));
    }
    let (series, bound) = match depth {
        Depth::Fixed(m) => {
            let mut g = GColumnSeries::start(spec, false);
            for _ in 0..m {
                g.advance(spec);
            }
            let b = error_bound(spec, n, &g)?;
            (g, b)
        }
        Depth::Tolerance { eps, ceiling } => {
            let found = mg1::stop_depth(spec, n, eps, ceiling)?;
            (found.series, found.bound)
        }
    };
    let column = censored_column(spec, n, &series)?;
    let defects = spec.corner_defects(n);
    let mut last = Vec::with_capacity(n + 1);
    let mut rows = Vec::with_capacity(n + 1);
    for (i, mut c) in column.into_iter().enumerate() {
        let mut report = Vec::with_capacity(c.nrows());
        for alpha in 0..c.nrows() {
            let mut row: Vec<f64> = c.row(alpha).iter().copied().collect();
            report.push(renormalize_row(defects[i][alpha], &mut row));
            for (beta, v) in row.into_iter().enumerate() {
                c[(alpha, beta)] = v;
            }
        }
        last.push(corner_block(spec, i, n) + c);
        rows.push(report);
    }
    let t = Mg1Truncation::new(spec, n, last)?;
    Ok((
        t,
        RenormReport {
            depth: series.depth(),
            bound,
            rows,
        },
    ))
}

/// Renormalized approximate censored matrix `P~^(N;M)`.
pub fn racm(spec: &Mg1Spec, n: usize, depth: Depth) -> Result<(BlockMatrix, RenormReport)> {
    let (t, report) = racm_truncation(spec, n, depth)?;
    Ok((t.to_block_matrix()?, report))
}

/// Natural last-block-column augmentation as a structured matrix: block
/// `(0, N)` gains `B_{>N}` and block `(i, N)` gains `A_{>N-i}`.
pub fn natural_lbca_truncation(spec: &Mg1Spec, n: usize) -> Result<Mg1Truncation> {
    if n == 0 {
        return Err(Error::InvalidParameter("truncation level must be at least 1".into()));
    }
    let last = (0..=n)
        .map(|i| {
            let tail = if i == 0 { spec.b_tail(n) } else { spec.a_tail(n - i) };
            corner_block(spec, i, n) + tail
        })
        .collect();
    Mg1Truncation::new(spec, n, last)
}

/// Natural last-block-column augmentation.
pub fn natural_lbca(spec: &Mg1Spec, n: usize) -> Result<BlockMatrix> {
    natural_lbca_truncation(spec, n)?.to_block_matrix()
}

fn scalar_defects(t: &BlockMatrix) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(t.scalar_rows());
    for (i, &p) in t.row_phases().iter().enumerate() {
        for alpha in 1..=p {
            out.push(t.row_defect(i, alpha)?);
        }
    }
    Ok(out)
}

/// Puts each row's missing mass on state `(0, 1)`.
pub fn first_column_augmentation(corner: &BlockMatrix) -> Result<BlockMatrix> {
    let defects = scalar_defects(corner)?;
    let phases = corner.row_phases().to_vec();
    let offsets = level_offsets(&phases);
    let mut out = corner.clone();
    for (i, &p) in phases.iter().enumerate() {
        let add = DMatrix::from_fn(p, phases[0], |a, b| if b == 0 { defects[offsets[i] + a] } else { 0.0 });
        out.add_to_block(i, 0, &add)?;
    }
    Ok(out)
}

/// Spreads each row's missing mass evenly over all states.
pub fn uniform_augmentation(corner: &BlockMatrix) -> Result<BlockMatrix> {
    let defects = scalar_defects(corner)?;
    let phases = corner.row_phases().to_vec();
    let offsets = level_offsets(&phases);
    let states = offsets[phases.len()] as f64;
    let mut out = corner.clone();
    for (i, &p) in phases.iter().enumerate() {
        for (j, &q) in phases.iter().enumerate() {
            let add = DMatrix::from_fn(p, q, |a, _| defects[offsets[i] + a] / states);
            out.add_to_block(i, j, &add)?;
        }
    }
    Ok(out)
}

/// Checks irreducibility, then solves with the structured Hessenberg GTH.
pub fn solve_truncation(t: &Mg1Truncation) -> Result<StationaryVector> {
    check_irreducible(t)?;
    gth::solve_upper_hessenberg(t)
}

/// Checks irreducibility, then solves with block GTH.
pub fn solve_augmented(p: &BlockMatrix) -> Result<StationaryVector> {
    check_irreducible(p)?;
    gth::solve(p)
}

/// `sum_{n<=N} |approx_n - ref_n|_1 + sum_{n>N} |ref_n|_1`.
pub fn l1_truncation_error(approx: &StationaryVector, reference: &StationaryVector) -> Result<f64> {
    let n = approx.num_levels();
    if n > reference.num_levels() || approx.phase_counts() != &reference.phase_counts()[..n] {
        return Err(Error::Shape(
            "approximation levels must be a prefix of the reference levels".into(),
        ));
    }
    let mut head = 0.0;
    for i in 0..n {
        head += approx
            .level(i)
            .iter()
            .zip(reference.level(i))
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    }
    let tail = if n < reference.num_levels() {
        reference.tail_mass(n - 1)
    } else {
        0.0
    };
    Ok(head + tail)
}

/// `|Z|_{1->1} * delta_norm` with `Z = (I - P + 1 pi)^{-1}`; the norm is the
/// one induced on row vectors, i.e. the largest absolute row sum.
pub fn perturbation_bound(pn: &BlockMatrix, pin: &StationaryVector, delta_norm: f64) -> Result<f64> {
    let p = pn.to_dense();
    let n = p.nrows();
    if pin.values().len() != n {
        return Err(Error::Shape("stationary vector does not match the matrix".into()));
    }
    let pi = nalgebra::RowDVector::from_row_slice(pin.values());
    let ones = nalgebra::DVector::from_element(n, 1.0);
    let a = DMatrix::identity(n, n) - p + ones * pi;
    let z = a.try_inverse().ok_or(Error::SingularPivot { level: 0 })?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularPivot { level: 0 });
    }
    let norm = z.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
    Ok(norm * delta_norm)
}

/// One line of a truncation comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub n: usize,
    pub lbca: f64,
    pub racm: f64,
    /// `lbca - racm`.
    pub improvement: f64,
    /// `100 * improvement / lbca`.
    pub relative_rate_percent: f64,
}

/// `l1(N, inf)` of the natural LBCA and of the RA-CM at each `N`, both
/// measured against `reference`.
pub fn compare_truncations(
    spec: &Mg1Spec,
    reference: &StationaryVector,
    levels: &[usize],
    depth: Depth,
) -> Result<Vec<ComparisonRow>> {
    levels
        .iter()
        .map(|&n| {
            let lbca = l1_truncation_error(&solve_truncation(&natural_lbca_truncation(spec, n)?)?, reference)?;
            let racm = l1_truncation_error(&solve_truncation(&racm_truncation(spec, n, depth)?.0)?, reference)?;
            let improvement = lbca - racm;
            Ok(ComparisonRow {
                n,
                lbca,
                racm,
                improvement,
                relative_rate_percent: if lbca > 0.0 { 100.0 * improvement / lbca } else { 0.0 },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{random_spec, SpecFamily};

    #[test]
    fn renormalization_branches() {
        let mut row = [0.1, 0.1];
        let r = renormalize_row(0.3, &mut row);
        assert!(matches!(r.rule, RenormRule::Scaled(s) if (s - 1.5).abs() < 1e-15));
        assert!((row[0] - 0.15).abs() < 1e-15 && (row[1] - 0.15).abs() < 1e-15);

        let mut row = [0.0, 0.0];
        assert_eq!(renormalize_row(0.2, &mut row).rule, RenormRule::UniformSpread);
        assert_eq!(row, [0.1, 0.1]);

        let mut row = [0.0, 0.0];
        assert_eq!(renormalize_row(0.0, &mut row).rule, RenormRule::ZeroRow);
        assert_eq!(row, [0.0, 0.0]);
    }

    #[test]
    fn racm_and_lbca_are_stochastic() {
        let spec = random_spec(7, &SpecFamily::default());
        for n in [1, 2, 5] {
            let (p, report) = racm(&spec, n, Depth::Fixed(20)).unwrap();
            assert!(p.max_row_deviation() <= 1e-12);
            for row in report.rows.iter().flatten() {
                assert!(row.captured <= row.target + 1e-12);
                if let RenormRule::Scaled(s) = row.rule {
                    assert!(s >= 1.0 - 1e-12);
                }
            }
            assert!(natural_lbca(&spec, n).unwrap().max_row_deviation() <= 1e-12);
        }
    }

    #[test]
    fn lbca_adds_nothing_where_tails_are_empty() {
        let spec = random_spec(1, &SpecFamily::default());
        let n = 6;
        let lbca = natural_lbca(&spec, n).unwrap();
        let corner = spec.corner(n).unwrap();
        // B has support 3 and A support 2: rows 0..=4 have no tail
        for i in 0..=4 {
            assert_eq!(lbca.block_ref(i, n), corner.block_ref(i, n), "row {i}");
        }
        assert_ne!(lbca.block_ref(5, n), corner.block_ref(5, n));
    }

    #[test]
    fn l1_examples() {
        let a = StationaryVector::from_levels(vec![vec![1.0]]).unwrap();
        let r = StationaryVector::from_levels(vec![vec![0.5], vec![0.5]]).unwrap();
        assert!((l1_truncation_error(&a, &r).unwrap() - 1.0).abs() < 1e-15);
        let r = StationaryVector::from_levels(vec![vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(l1_truncation_error(&a, &r).unwrap(), 0.0);
        let wide = StationaryVector::from_levels(vec![vec![0.5, 0.5]]).unwrap();
        assert!(l1_truncation_error(&wide, &r).is_err());
    }

    #[test]
    fn perturbation_bound_examples() {
        let p =
            BlockMatrix::square_from_dense(&DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]), vec![1, 1]).unwrap();
        let pi = gth::solve(&p).unwrap();
        assert_eq!(perturbation_bound(&p, &pi, 0.0).unwrap(), 0.0);
        // Z = (I - P + 1 pi)^{-1} = I here, so the norm is 1
        assert!((perturbation_bound(&p, &pi, 0.1).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn other_augmentations_are_stochastic() {
        let spec = random_spec(5, &SpecFamily::default());
        let corner = spec.corner(4).unwrap();
        assert!(first_column_augmentation(&corner).unwrap().max_row_deviation() <= 1e-12);
        assert!(uniform_augmentation(&corner).unwrap().max_row_deviation() <= 1e-12);
    }

    #[test]
    fn structured_solve_matches_dense() {
        let spec = random_spec(9, &SpecFamily::default());
        let t = natural_lbca_truncation(&spec, 8).unwrap();
        let a = solve_truncation(&t).unwrap();
        let b = solve_augmented(&t.to_block_matrix().unwrap()).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-13);
    }
}
