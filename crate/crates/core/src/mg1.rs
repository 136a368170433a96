//! M/G/1-type chains: block layout, the censored last-column series
//! `G^(m)`, captured return masses, the depth-`M` censored column and its
//! a posteriori error bound.
//!
//! Indexing is canonical throughout: `A_{-1}` moves one level down, `A_0`
//! stays, `A_k` moves up by `k`. Level 0 has `r0` phases and every other
//! level has `r`. The matrix is
//!
//! ```text
//! B_0  B_1  B_2  B_3 ...
//! C_0  A_0  A_1  A_2 ...
//!      A-1  A_0  A_1 ...
//!           A-1  A_0 ...
//! ```

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::blocklinalg::{Block, BlockMatrix, LevelBlocks, STOCHASTIC_TOL};
use crate::error::{Error, Result};

/// Scalar weights `w_1..w_K` of a scaled series plus exact suffix sums
/// `suffix[k] = sum_{j>k} w_j + remainder` for `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfWeights {
    weights: Vec<f64>,
    suffix: Vec<f64>,
}

impl PmfWeights {
    /// Suffix sums are accumulated from the smallest terms upward.
    pub fn new(weights: Vec<f64>, remainder: f64) -> Result<Self> {
        if weights.iter().chain([&remainder]).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        let mut suffix = vec![0.0; weights.len() + 1];
        suffix[weights.len()] = remainder;
        for k in (0..weights.len()).rev() {
            suffix[k] = suffix[k + 1] + weights[k];
        }
        Ok(Self { weights, suffix })
    }

    /// Uses caller-supplied suffix sums, e.g. closed-form survival values.
    pub fn with_suffix(weights: Vec<f64>, suffix: Vec<f64>) -> Result<Self> {
        if suffix.len() != weights.len() + 1 {
            return Err(Error::Shape(format!(
                "{} weights need {} suffix sums, got {}",
                weights.len(),
                weights.len() + 1,
                suffix.len()
            )));
        }
        if weights.iter().chain(&suffix).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        Ok(Self { weights, suffix })
    }

    pub fn cutoff(&self) -> usize {
        self.weights.len()
    }

    /// `w_k` for `k >= 1`, zero beyond the cutoff.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.weights.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    /// `sum_{j>k} w_j + remainder`.
    pub fn tail(&self, k: usize) -> f64 {
        self.suffix[k.min(self.cutoff())]
    }

    pub fn remainder(&self) -> f64 {
        self.suffix[self.cutoff()]
    }

    pub fn total(&self) -> f64 {
        self.suffix[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SeriesRepr {
    Explicit { terms: Vec<Block>, suffix: Vec<Block> },
    Scaled { base: Block, weights: Arc<PmfWeights> },
}

/// A sequence `X_1, X_2, ...` of equally shaped nonnegative blocks that is
/// zero beyond a cutoff `K`, plus a remainder block standing in for the
/// mass the cutoff discards. Tail sums include the remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSeries {
    rows: usize,
    cols: usize,
    repr: SeriesRepr,
}

impl BlockSeries {
    /// Explicit terms `X_1..X_K` and a remainder block.
    pub fn explicit(rows: usize, cols: usize, terms: Vec<Block>, remainder: Block) -> Result<Self> {
        for b in terms.iter().chain([&remainder]) {
            if b.shape() != (rows, cols) {
                return Err(Error::Shape(format!(
                    "series term is {}x{}, expected {rows}x{cols}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            if b.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidParameter(
                    "series blocks must be finite and nonnegative".into(),
                ));
            }
        }
        let mut suffix = vec![remainder; terms.len() + 1];
        for k in (0..terms.len()).rev() {
            suffix[k] = &suffix[k + 1] + &terms[k];
        }
        Ok(Self {
            rows,
            cols,
            repr: SeriesRepr::Explicit { terms, suffix },
        })
    }

    /// `X_k = w_k * base`; the remainder is `remainder * base`.
    pub fn scaled(base: Block, weights: Arc<PmfWeights>) -> Result<Self> {
        if base.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "series base must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            rows: base.nrows(),
            cols: base.ncols(),
            repr: SeriesRepr::Scaled { base, weights },
        })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            repr: SeriesRepr::Explicit {
                terms: Vec::new(),
                suffix: vec![Block::zeros(rows, cols)],
            },
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Index `K` beyond which every term is zero.
    pub fn cutoff(&self) -> usize {
        match &self.repr {
            SeriesRepr::Explicit { terms, .. } => terms.len(),
            SeriesRepr::Scaled { weights, .. } => weights.cutoff(),
        }
    }

    /// `Some((base, weights))` for a scaled series.
    pub fn as_scaled(&self) -> Option<(&Block, &PmfWeights)> {
        match &self.repr {
            SeriesRepr::Scaled { base, weights } => Some((base, weights)),
            SeriesRepr::Explicit { .. } => None,
        }
    }

    /// `X_k` for `k >= 1`, `None` when the term is zero.
    pub fn term(&self, k: usize) -> Option<Block> {
        if k == 0 {
            return None;
        }
        let b = match &self.repr {
            SeriesRepr::Explicit { terms, .. } => terms.get(k - 1)?.clone(),
            SeriesRepr::Scaled { base, weights } => base * weights.weight(k),
        };
        if b.iter().all(|v| *v == 0.0) {
            None
        } else {
            Some(b)
        }
    }

    /// `sum_{j>k} X_j` including the remainder.
    pub fn tail(&self, k: usize) -> Block {
        match &self.repr {
            SeriesRepr::Explicit { suffix, .. } => suffix[k.min(suffix.len() - 1)].clone(),
            SeriesRepr::Scaled { base, weights } => base * weights.tail(k),
        }
    }

    /// Row sums of [`BlockSeries::tail`].
    pub fn tail_row_sums(&self, k: usize) -> Vec<f64> {
        self.tail(k).row_iter().map(|r| r.sum()).collect()
    }

    pub fn remainder(&self) -> Block {
        self.tail(self.cutoff())
    }

    /// Multiplies every term and the remainder by `f`.
    pub fn scale(&self, f: f64) -> Result<Self> {
        match &self.repr {
            SeriesRepr::Explicit { terms, suffix } => Self::explicit(
                self.rows,
                self.cols,
                terms.iter().map(|t| t * f).collect(),
                &suffix[terms.len()] * f,
            ),
            SeriesRepr::Scaled { base, weights } => Self::scaled(base * f, weights.clone()),
        }
    }
}

/// An M/G/1-type stochastic matrix with a level-0 boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Mg1Spec {
    r0: usize,
    r: usize,
    b0: Block,
    b: BlockSeries,
    c0: Block,
    a_down: Block,
    a0: Block,
    a: BlockSeries,
}

fn check_block(name: &str, b: &Block, shape: (usize, usize)) -> Result<()> {
    if b.shape() != shape {
        return Err(Error::Shape(format!(
            "{name} is {}x{}, expected {}x{}",
            b.nrows(),
            b.ncols(),
            shape.0,
            shape.1
        )));
    }
    if b.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be finite and nonnegative"
        )));
    }
    Ok(())
}

fn row_sums(b: &Block) -> Vec<f64> {
    b.row_iter().map(|r| r.sum()).collect()
}

impl Mg1Spec {
    /// Validates shapes, nonnegativity and that every row of the assembled
    /// infinite matrix (with remainders) sums to 1 within `1e-12`.
    pub fn new(b0: Block, b: BlockSeries, c0: Block, a_down: Block, a0: Block, a: BlockSeries) -> Result<Self> {
        let r0 = b0.nrows();
        let r = a0.nrows();
        if r0 == 0 || r == 0 {
            return Err(Error::Shape("phase counts must be positive".into()));
        }
        check_block("B0", &b0, (r0, r0))?;
        check_block("C0", &c0, (r, r0))?;
        check_block("A-1", &a_down, (r, r))?;
        check_block("A0", &a0, (r, r))?;
        if b.shape() != (r0, r) {
            return Err(Error::Shape(format!("B series must be {r0}x{r}")));
        }
        if a.shape() != (r, r) {
            return Err(Error::Shape(format!("A series must be {r}x{r}")));
        }
        let spec = Self {
            r0,
            r,
            b0,
            b,
            c0,
            a_down,
            a0,
            a,
        };
        let up_b = spec.b.tail_row_sums(0);
        let up_a = spec.a.tail_row_sums(0);
        let local = row_sums(&spec.a0);
        let rows = [
            (0, row_sums(&spec.b0), &up_b),
            (1, row_sums(&spec.c0), &up_a),
            (2, row_sums(&spec.a_down), &up_a),
        ];
        for (level, own, up) in rows {
            for (alpha, base) in own.iter().enumerate() {
                let sum = base + up[alpha] + if level > 0 { local[alpha] } else { 0.0 };
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::NotStochastic {
                        level,
                        phase: alpha + 1,
                        sum,
                    });
                }
            }
        }
        Ok(spec)
    }

    /// The case `r0 = r`, `C_0 = A_{-1}`.
    pub fn homogeneous(b0: Block, b: BlockSeries, a_down: Block, a0: Block, a: BlockSeries) -> Result<Self> {
        let c0 = a_down.clone();
        Self::new(b0, b, c0, a_down, a0, a)
    }

    pub fn boundary_phases(&self) -> usize {
        self.r0
    }

    pub fn repeat_phases(&self) -> usize {
        self.r
    }

    pub fn phase_count(&self, level: usize) -> usize {
        if level == 0 {
            self.r0
        } else {
            self.r
        }
    }

    pub fn b0(&self) -> &Block {
        &self.b0
    }

    pub fn c0(&self) -> &Block {
        &self.c0
    }

    pub fn a_down(&self) -> &Block {
        &self.a_down
    }

    pub fn a0(&self) -> &Block {
        &self.a0
    }

    pub fn b_series(&self) -> &BlockSeries {
        &self.b
    }

    pub fn a_series(&self) -> &BlockSeries {
        &self.a
    }

    /// Largest index with a nonzero `A_k` or `B_k`.
    pub fn cutoff(&self) -> usize {
        self.a.cutoff().max(self.b.cutoff())
    }

    /// `A_k` for `k >= -1`, `None` when zero.
    pub fn a(&self, k: isize) -> Option<Block> {
        match k {
            -1 => Some(self.a_down.clone()),
            0 => Some(self.a0.clone()),
            k if k > 0 => self.a.term(k as usize),
            _ => None,
        }
    }

    /// `B_k` for `k >= 0`, `None` when zero.
    pub fn b(&self, k: usize) -> Option<Block> {
        if k == 0 {
            Some(self.b0.clone())
        } else {
            self.b.term(k)
        }
    }

    /// `sum_{j>k} A_j` including the remainder.
    pub fn a_tail(&self, k: usize) -> Block {
        self.a.tail(k)
    }

    /// `sum_{j>k} B_j` including the remainder.
    pub fn b_tail(&self, k: usize) -> Block {
        self.b.tail(k)
    }

    /// Largest remainder row mass over all rows; no finite depth can
    /// capture it.
    pub fn remainder_floor(&self) -> f64 {
        row_sums(&self.a.remainder())
            .into_iter()
            .chain(row_sums(&self.b.remainder()))
            .fold(0.0, f64::max)
    }

    /// Block `(i, j)` of the infinite matrix.
    pub fn block(&self, i: usize, j: usize) -> Option<Block> {
        if i == 0 {
            return self.b(j);
        }
        if j + 1 == i {
            return Some(if i == 1 { self.c0.clone() } else { self.a_down.clone() });
        }
        if j >= i {
            return self.a((j - i) as isize);
        }
        None
    }

    /// Northwest corner `T_N` on levels `0..=n`.
    pub fn corner(&self, n: usize) -> Result<BlockMatrix> {
        let mut m = BlockMatrix::square_zeros((0..=n).map(|l| self.phase_count(l)).collect());
        for i in 0..=n {
            for j in i.saturating_sub(1)..=n {
                if let Some(b) = self.block(i, j) {
                    m.set_block(i, j, b)?;
                }
            }
        }
        Ok(m)
    }

    /// Row masses missing from `T_N`: `B_{>N}` for level 0, `A_{>N-i}`
    /// for level `i`.
    pub fn corner_defects(&self, n: usize) -> Vec<Vec<f64>> {
        (0..=n)
            .map(|i| {
                if i == 0 {
                    self.b.tail_row_sums(n)
                } else {
                    self.a.tail_row_sums(n - i)
                }
            })
            .collect()
    }
}

/// Block-upper-Hessenberg truncation of an [`Mg1Spec`] to levels `0..=N`
/// whose last block column has been replaced. Blocks are generated on the
/// fly from `A_{-1..N}` and `B_{0..N}`, so memory is linear in `N`.
#[derive(Debug, Clone)]
pub struct Mg1Truncation {
    phases: Vec<usize>,
    // a[k + 1] = A_k for k = -1..=N
    a: Vec<Option<Block>>,
    b: Vec<Option<Block>>,
    c0: Block,
    last: Vec<Option<Block>>,
}

fn nonzero(b: Block) -> Option<Block> {
    if b.iter().all(|v| *v == 0.0) {
        None
    } else {
        Some(b)
    }
}

impl Mg1Truncation {
    /// `T_N` with `last[i]` as the new block `(i, N)`.
    pub fn new(spec: &Mg1Spec, n: usize, last: Vec<Block>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("truncation level must be at least 1".into()));
        }
        if last.len() != n + 1 {
            return Err(Error::Shape(format!(
                "last column needs {} blocks, got {}",
                n + 1,
                last.len()
            )));
        }
        for (i, blk) in last.iter().enumerate() {
            check_block("last-column block", blk, (spec.phase_count(i), spec.r))?;
        }
        Ok(Self {
            phases: (0..=n).map(|l| spec.phase_count(l)).collect(),
            a: (-1..=n as isize).map(|k| spec.a(k).and_then(nonzero)).collect(),
            b: (0..=n).map(|k| spec.b(k).and_then(nonzero)).collect(),
            c0: spec.c0.clone(),
            last: last.into_iter().map(nonzero).collect(),
        })
    }

    pub fn level(&self) -> usize {
        self.phases.len() - 1
    }

    pub fn to_block_matrix(&self) -> Result<BlockMatrix> {
        let mut m = BlockMatrix::square_zeros(self.phases.clone());
        let n = self.level();
        for i in 0..=n {
            for j in i.saturating_sub(1)..=n {
                if let Some(b) = self.block_at(i, j) {
                    m.set_block(i, j, b.clone())?;
                }
            }
        }
        Ok(m)
    }

    /// Largest `|row sum - 1|`.
    pub fn max_row_deviation(&self) -> f64 {
        let n = self.level();
        let mut worst: f64 = 0.0;
        for i in 0..=n {
            let mut sums = vec![0.0; self.phases[i]];
            for j in i.saturating_sub(1)..=n {
                if let Some(b) = self.block_at(i, j) {
                    for (s, row) in sums.iter_mut().zip(b.row_iter()) {
                        *s += row.sum();
                    }
                }
            }
            worst = sums.iter().fold(worst, |w, s| w.max((s - 1.0).abs()));
        }
        worst
    }
}

impl LevelBlocks for Mg1Truncation {
    fn phase_counts(&self) -> &[usize] {
        &self.phases
    }

    fn block_at(&self, i: usize, j: usize) -> Option<&Block> {
        let n = self.level();
        if i > n || j > n {
            return None;
        }
        if j == n {
            return self.last[i].as_ref();
        }
        if i == 0 {
            return self.b[j].as_ref();
        }
        if j + 1 == i {
            return if i == 1 { Some(&self.c0) } else { self.a[0].as_ref() };
        }
        if j >= i {
            return self.a[j - i + 1].as_ref();
        }
        None
    }
}

/// The blocks `G^(m)_s` of the censored last column, their partial sums
/// `H_s` and the captured return masses, advanced one depth at a time.
///
/// `G^(0)_0 = A_{-1}` and
/// `G^(m+1)_i = sum_{t=max(i-1,0)}^{m} A_{t-i} G^(m)_t`; `G^(m)_s` is zero
/// for `s > m`.
#[derive(Debug, Clone)]
pub struct GColumnSeries {
    depth: usize,
    current: Vec<Block>,
    history: Option<Vec<Vec<Block>>>,
    h: Vec<Block>,
    captured: Vec<Vec<f64>>,
}

/// Upper bound allowed on a captured mass.
pub const CAPTURED_SLACK: f64 = 1e-12;

impl GColumnSeries {
    /// Depth 0. With `keep_history` every `G^(m)` stays addressable.
    pub fn start(spec: &Mg1Spec, keep_history: bool) -> Self {
        let g0 = vec![spec.a_down.clone()];
        let captured = vec![row_sums(&spec.a_down)];
        Self {
            depth: 0,
            h: g0.clone(),
            history: keep_history.then(|| vec![g0.clone()]),
            current: g0,
            captured,
        }
    }

    /// Moves from depth `M` to `M + 1`.
    pub fn advance(&mut self, spec: &Mg1Spec) {
        let m = self.depth;
        let r = spec.r;
        let g = &self.current;
        let scaled = spec.a.as_scaled();
        let mut next = Vec::with_capacity(m + 2);
        for i in 0..=m + 1 {
            let mut acc = Block::zeros(r, r);
            if i >= 1 {
                acc.gemm(1.0, &spec.a_down, &g[i - 1], 1.0);
            }
            if i <= m {
                acc.gemm(1.0, &spec.a0, &g[i], 1.0);
                match scaled {
                    Some((base, w)) => {
                        let mut mix = Block::zeros(r, r);
                        for k in 1..=(m - i).min(w.cutoff()) {
                            let wk = w.weight(k);
                            mix.zip_apply(&g[i + k], |a, b| *a += wk * b);
                        }
                        acc.gemm(1.0, base, &mix, 1.0);
                    }
                    None => {
                        for k in 1..=(m - i).min(spec.a.cutoff()) {
                            if let Some(ak) = spec.a.term(k) {
                                acc.gemm(1.0, &ak, &g[i + k], 1.0);
                            }
                        }
                    }
                }
            }
            next.push(acc);
        }
        for (h, gs) in self.h.iter_mut().zip(&next) {
            *h += gs;
        }
        self.h.push(next[m + 1].clone());
        self.captured = self
            .h
            .iter()
            .map(|h| row_sums(h).into_iter().map(|v| v.min(1.0 + CAPTURED_SLACK)).collect())
            .collect();
        if let Some(hist) = self.history.as_mut() {
            hist.push(next.clone());
        }
        self.current = next;
        self.depth = m + 1;
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `G^(m)_s`; `None` for `s > m`, for `m` beyond the depth, or for
    /// `m` below the depth when history was not kept.
    pub fn g(&self, m: usize, s: usize) -> Option<&Block> {
        if m > self.depth || s > m {
            return None;
        }
        match &self.history {
            Some(hist) => hist[m].get(s),
            None if m == self.depth => self.current.get(s),
            None => None,
        }
    }

    /// `H_s = sum_{m=s}^{M} G^(m)_s`.
    pub fn h(&self, s: usize) -> Option<&Block> {
        self.h.get(s)
    }

    /// `r^(M)_{s,p}` for `p = 1..=r` (stored 0-based).
    pub fn captured(&self, s: usize) -> Option<&[f64]> {
        self.captured.get(s).map(|v| v.as_slice())
    }
}

/// `G^(m)` for every `m <= depth`, with history.
pub fn g_columns(spec: &Mg1Spec, depth: usize) -> GColumnSeries {
    let mut g = GColumnSeries::start(spec, true);
    for _ in 0..depth {
        g.advance(spec);
    }
    g
}

/// `sum_s U_{i,s} X_s` where `U_{0,s} = B_{N+1+s}`, `U_{i,s} = A_{N+1+s-i}`,
/// for `X_s` indexed `0..xs.len()`. Returns an `rows x cols` block.
fn u_row_times(spec: &Mg1Spec, n: usize, i: usize, xs: &[Block]) -> Block {
    let series = if i == 0 { &spec.b } else { &spec.a };
    let rows = spec.phase_count(i);
    let cols = xs.first().map_or(spec.r, |x| x.ncols());
    let offset = n + 1 - i;
    let last_s = series.cutoff().saturating_sub(offset).min(xs.len());
    if series.cutoff() < offset {
        return Block::zeros(rows, cols);
    }
    match series.as_scaled() {
        Some((base, w)) => {
            let mut mix = Block::zeros(xs[0].nrows(), cols);
            for (s, x) in xs.iter().enumerate().take(last_s + 1) {
                let wk = w.weight(offset + s);
                if wk != 0.0 {
                    mix.zip_apply(x, |a, b| *a += wk * b);
                }
            }
            base * mix
        }
        None => {
            let mut acc = Block::zeros(rows, cols);
            for (s, x) in xs.iter().enumerate().take(last_s + 1) {
                if let Some(u) = series.term(offset + s) {
                    acc.gemm(1.0, &u, x, 1.0);
                }
            }
            acc
        }
    }
}

/// Depth-`M` censored last block column `C_N^(M)` on levels `0..=N`:
/// block `i` is `sum_s U_{i,s} H_s`.
pub fn censored_column(spec: &Mg1Spec, n: usize, g: &GColumnSeries) -> Result<Vec<Block>> {
    if n == 0 {
        return Err(Error::InvalidParameter("censoring level must be at least 1".into()));
    }
    Ok((0..=n).map(|i| u_row_times(spec, n, i, &g.h)).collect())
}

/// A posteriori bound on `C_N - C_N^(M)`. Every entry of scalar row
/// `(i, alpha)` shares the bound `rows[i][alpha]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBound {
    pub rows: Vec<Vec<f64>>,
    pub max: f64,
}

impl ErrorBound {
    /// Bound on entry `(alpha, beta)` of block row `i`.
    pub fn entry(&self, i: usize, alpha: usize, _beta: usize) -> f64 {
        self.rows[i][alpha]
    }
}

/// `sum_{s<=M} sum_p U_{i,s}(alpha,p) (1 - r^(M)_{s,p})` plus the full
/// `U`-row tail mass for `s > M`.
pub fn error_bound(spec: &Mg1Spec, n: usize, g: &GColumnSeries) -> Result<ErrorBound> {
    if n == 0 {
        return Err(Error::InvalidParameter("censoring level must be at least 1".into()));
    }
    let depth = g.depth();
    let missing: Vec<Block> = g
        .captured
        .iter()
        .map(|c| DMatrix::from_iterator(spec.r, 1, c.iter().map(|v| (1.0 - v).max(0.0))))
        .collect();
    let mut rows = Vec::with_capacity(n + 1);
    let mut max: f64 = 0.0;
    for i in 0..=n {
        let head = u_row_times(spec, n, i, &missing);
        let tail = if i == 0 {
            spec.b.tail_row_sums(n + 1 + depth)
        } else {
            spec.a.tail_row_sums(n + 1 + depth - i)
        };
        let row: Vec<f64> = head.iter().zip(&tail).map(|(h, t)| h + t).collect();
        max = row.iter().fold(max, |m, v| m.max(*v));
        rows.push(row);
    }
    Ok(ErrorBound { rows, max })
}

/// Default ceiling on the depth searched by [`stop_depth`].
pub const DEFAULT_DEPTH_CEILING: usize = 100_000;

/// Result of [`stop_depth`].
#[derive(Debug, Clone)]
pub struct StopDepth {
    pub depth: usize,
    pub bound: ErrorBound,
    pub series: GColumnSeries,
}

/// Smallest depth `M <= ceiling` whose [`error_bound`] maximum is at most
/// `eps`. The depth grows by one per step, so the returned `M` is minimal.
pub fn stop_depth(spec: &Mg1Spec, n: usize, eps: f64, ceiling: usize) -> Result<StopDepth> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let floor = spec.remainder_floor();
    if floor > eps {
        return Err(Error::UnreachableTolerance { eps, floor });
    }
    let mut series = GColumnSeries::start(spec, false);
    let mut best = f64::INFINITY;
    loop {
        let bound = error_bound(spec, n, &series)?;
        if bound.max <= eps {
            return Ok(StopDepth {
                depth: series.depth(),
                bound,
                series,
            });
        }
        best = best.min(bound.max);
        if series.depth() >= ceiling {
            return Err(Error::DepthCeiling {
                ceiling,
                depth: series.depth(),
                best_bound: best,
            });
        }
        series.advance(spec);
    }
}
