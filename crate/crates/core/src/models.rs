//! Model builders: the M^X/M/1 queue with working vacations, its
//! uniformization, and seeded random M/G/1 families for testing.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::blocklinalg::Block;
use crate::error::{Error, Result};
use crate::mg1::{BlockSeries, Mg1Spec, PmfWeights};

/// Default support cutoff for the batch-size pmf; the discarded tail is
/// about `5.7e-11` at `alpha = 1.55`.
pub const DEFAULT_PMF_CUTOFF: usize = 4_000_000;

/// Parameters of the M^X/M/1 queue with multiple working vacations.
#[derive(Debug, Clone, PartialEq)]
pub struct MxM1WvParams {
    pub lambda: f64,
    pub mu: f64,
    pub theta: f64,
    pub nu: [f64; 4],
    pub p: [f64; 4],
    pub pareto_alpha: f64,
    pub pmf_cutoff: usize,
    /// Uniformization constant; `None` uses [`MxM1WvParams::default_c`].
    pub c: Option<f64>,
}

impl Default for MxM1WvParams {
    fn default() -> Self {
        Self {
            lambda: 0.4,
            mu: 2.0,
            theta: 0.4,
            nu: [1.5, 1.3, 1.2, 1.6],
            p: [0.2, 0.3, 0.25, 0.25],
            pareto_alpha: 1.55,
            pmf_cutoff: DEFAULT_PMF_CUTOFF,
            c: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    lambda: Option<f64>,
    mu: Option<f64>,
    theta: Option<f64>,
    nu1: Option<f64>,
    nu2: Option<f64>,
    nu3: Option<f64>,
    nu4: Option<f64>,
    p1: Option<f64>,
    p2: Option<f64>,
    p3: Option<f64>,
    p4: Option<f64>,
    alpha: Option<f64>,
    cutoff: Option<usize>,
    c: Option<f64>,
}

impl MxM1WvParams {
    /// Reads a TOML document with keys `lambda`, `mu`, `theta`,
    /// `nu1..nu4`, `p1..p4`, `alpha`, `cutoff` and optionally `c`.
    /// Missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawParams = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        let d = Self::default();
        let params = Self {
            lambda: raw.lambda.unwrap_or(d.lambda),
            mu: raw.mu.unwrap_or(d.mu),
            theta: raw.theta.unwrap_or(d.theta),
            nu: [
                raw.nu1.unwrap_or(d.nu[0]),
                raw.nu2.unwrap_or(d.nu[1]),
                raw.nu3.unwrap_or(d.nu[2]),
                raw.nu4.unwrap_or(d.nu[3]),
            ],
            p: [
                raw.p1.unwrap_or(d.p[0]),
                raw.p2.unwrap_or(d.p[1]),
                raw.p3.unwrap_or(d.p[2]),
                raw.p4.unwrap_or(d.p[3]),
            ],
            pareto_alpha: raw.alpha.unwrap_or(d.pareto_alpha),
            pmf_cutoff: raw.cutoff.unwrap_or(d.pmf_cutoff),
            c: raw.c.or(d.c),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [self.lambda, self.mu, self.theta].into_iter().chain(self.nu);
        if rates.into_iter().any(|v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("all rates must be positive and finite".into()));
        }
        if self.p.iter().any(|v| !(*v >= 0.0)) || (self.p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(
                "p1..p4 must be nonnegative and sum to 1".into(),
            ));
        }
        if !(self.pareto_alpha > 1.0) {
            return Err(Error::InvalidParameter("alpha must exceed 1".into()));
        }
        if self.pmf_cutoff == 0 {
            return Err(Error::InvalidParameter("cutoff must be at least 1".into()));
        }
        Ok(())
    }

    /// `lambda + theta + mu + max nu`.
    pub fn default_c(&self) -> f64 {
        self.lambda + self.theta + self.mu + self.nu.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// Batch-size pmf with survival `P(X >= k) = k^{-alpha}`:
/// `g_k = k^{-alpha} - (k+1)^{-alpha}` for `k = 1..=cutoff`, remainder
/// `(cutoff+1)^{-alpha}`. Suffix sums are the exact survival values.
pub fn pareto_pmf(alpha: f64, cutoff: usize) -> Result<PmfWeights> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must exceed 1, got {alpha}")));
    }
    if cutoff == 0 {
        return Err(Error::InvalidParameter("cutoff must be at least 1".into()));
    }
    let weights = (1..=cutoff)
        .map(|k| {
            let k = k as f64;
            // k^-a (1 - (1 + 1/k)^-a) without cancellation
            k.powf(-alpha) * -(-alpha * (1.0 / k).ln_1p()).exp_m1()
        })
        .collect();
    let suffix = (0..=cutoff).map(|k| ((k + 1) as f64).powf(-alpha)).collect();
    PmfWeights::with_suffix(weights, suffix)
}

/// Continuous-time M/G/1-type generator. Same layout as [`Mg1Spec`], but
/// `b0` and `a0` carry the negative diagonal.
#[derive(Debug, Clone)]
pub struct RateSpec {
    pub b0: Block,
    pub b: BlockSeries,
    pub c0: Block,
    pub a_down: Block,
    pub a0: Block,
    pub a: BlockSeries,
}

impl RateSpec {
    /// Largest total outflow rate `-Q(x, x)`.
    pub fn max_outflow(&self) -> f64 {
        self.b0
            .diagonal()
            .iter()
            .chain(self.a0.diagonal().iter())
            .fold(0.0, |m: f64, v| m.max(-v))
    }

    /// Largest `|row sum|` over the three distinct row kinds, counting
    /// remainders.
    pub fn max_row_sum(&self) -> f64 {
        let sums = |b: &Block| b.row_iter().map(|r| r.sum()).collect::<Vec<_>>();
        let up_b = self.b.tail_row_sums(0);
        let up_a = self.a.tail_row_sums(0);
        let local = sums(&self.a0);
        let mut worst: f64 = 0.0;
        for (x, u) in sums(&self.b0).iter().zip(&up_b) {
            worst = worst.max((x + u).abs());
        }
        for own in [sums(&self.c0), sums(&self.a_down)] {
            for ((x, l), u) in own.iter().zip(&local).zip(&up_a) {
                worst = worst.max((x + l + u).abs());
            }
        }
        worst
    }
}

/// Rate blocks of the working-vacation queue in canonical indexing.
///
/// Level 0 is the empty system (one phase). Phases 1..4 of a busy level
/// are the vacation phases, phase 5 regular service. A batch of size `k`
/// arriving to an empty system starts vacation phase `j` with
/// probability `p_j`.
pub fn build_rate_spec(params: &MxM1WvParams) -> Result<RateSpec> {
    params.validate()?;
    let MxM1WvParams {
        lambda,
        mu,
        theta,
        nu,
        p,
        ..
    } = *params;
    let pmf = Arc::new(pareto_pmf(params.pareto_alpha, params.pmf_cutoff)?);
    let b0 = DMatrix::from_element(1, 1, -lambda);
    let b_base = DMatrix::from_row_slice(1, 5, &[lambda * p[0], lambda * p[1], lambda * p[2], lambda * p[3], 0.0]);
    let c0 = DMatrix::from_column_slice(5, 1, &[nu[0], nu[1], nu[2], nu[3], mu]);
    let a_down = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[nu[0], nu[1], nu[2], nu[3], mu]));
    let mut a0 = Block::zeros(5, 5);
    for j in 0..4 {
        a0[(j, j)] = -(lambda + nu[j] + theta);
        a0[(j, 4)] = theta;
    }
    a0[(4, 4)] = -(lambda + mu);
    let a_base = Block::identity(5, 5) * lambda;
    Ok(RateSpec {
        b0,
        b: BlockSeries::scaled(b_base, pmf.clone())?,
        c0,
        a_down,
        a0,
        a: BlockSeries::scaled(a_base, pmf)?,
    })
}

/// `P = I + Q / c`; `c = None` uses the largest outflow rate.
pub fn uniformize(rate: &RateSpec, c: Option<f64>) -> Result<Mg1Spec> {
    let need = rate.max_outflow();
    let c = c.unwrap_or(need);
    if !(c > 0.0) || c < need {
        return Err(Error::InvalidParameter(format!(
            "uniformization constant {c} is below the largest outflow rate {need}"
        )));
    }
    let plus_identity = |b: &Block| Block::identity(b.nrows(), b.ncols()) + b / c;
    let clamp = |b: Block| b.map(|v| if v < 0.0 && v > -1e-15 { 0.0 } else { v });
    Mg1Spec::new(
        clamp(plus_identity(&rate.b0)),
        rate.b.scale(1.0 / c)?,
        &rate.c0 / c,
        &rate.a_down / c,
        clamp(plus_identity(&rate.a0)),
        rate.a.scale(1.0 / c)?,
    )
}

/// The uniformized working-vacation chain at `params.c` (or its default).
pub fn working_vacation_spec(params: &MxM1WvParams) -> Result<Mg1Spec> {
    let c = params.c.unwrap_or_else(|| params.default_c());
    uniformize(&build_rate_spec(params)?, Some(c))
}

/// Mean batch size `sum k g_k` over the supported range.
pub fn pmf_mean(pmf: &PmfWeights) -> f64 {
    (1..=pmf.cutoff()).rev().map(|k| k as f64 * pmf.weight(k)).sum()
}

/// Shape of a random M/G/1 test family.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecFamily {
    pub boundary_phases: usize,
    pub repeat_phases: usize,
    /// Number of nonzero `A_k`, `k >= 1`; zero gives a chain that never
    /// moves up from a non-boundary level.
    pub a_support: usize,
    /// Number of nonzero `B_k`, `k >= 1`.
    pub b_support: usize,
    /// Row mass of `A_{-1}` (and `C_0`).
    pub down_mass: f64,
    /// Row mass of `A_1 + A_2 + ...`.
    pub up_mass: f64,
}

impl Default for SpecFamily {
    fn default() -> Self {
        Self {
            boundary_phases: 2,
            repeat_phases: 3,
            a_support: 2,
            b_support: 3,
            down_mass: 0.5,
            up_mass: 0.2,
        }
    }
}

impl SpecFamily {
    /// `A_k = 0` for `k >= 1`: every level above 0 can only stay or move
    /// down, so dense censoring of a truncation beyond the `B` support is
    /// exact.
    pub fn skip_free_up(boundary_phases: usize, repeat_phases: usize, b_support: usize) -> Self {
        Self {
            boundary_phases,
            repeat_phases,
            a_support: 0,
            b_support,
            down_mass: 0.4,
            up_mass: 0.0,
        }
    }
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, masses: &[f64]) -> Block {
    let mut b = Block::from_fn(rows, cols, |_, _| rng.gen_range(0.05..1.0));
    for (mut row, m) in b.row_iter_mut().zip(masses) {
        let s = row.sum();
        row *= m / s;
    }
    b
}

/// A seeded random positive-recurrent M/G/1 chain of the given family.
/// Every block is dense, `A_k` mass decays geometrically in `k`, and the
/// downward drift dominates whenever `up_mass * a_support < down_mass`.
pub fn random_spec(seed: u64, family: &SpecFamily) -> Mg1Spec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r0, r) = (family.boundary_phases, family.repeat_phases);
    let down = vec![family.down_mass; r];
    let local = vec![1.0 - family.down_mass - family.up_mass; r];
    let shares = |n: usize| {
        let raw: Vec<f64> = (0..n).map(|k| 0.5f64.powi(k as i32)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    let a_terms: Vec<Block> = shares(family.a_support)
        .into_iter()
        .map(|w| random_rows(&mut rng, r, r, &vec![family.up_mass * w; r]))
        .collect();
    let b_up = if family.b_support == 0 { 0.0 } else { 0.5 };
    let b_terms: Vec<Block> = shares(family.b_support)
        .into_iter()
        .map(|w| random_rows(&mut rng, r0, r, &vec![b_up * w; r0]))
        .collect();
    let b0 = random_rows(&mut rng, r0, r0, &vec![1.0 - b_up; r0]);
    let c0 = random_rows(&mut rng, r, r0, &down);
    let a_down = random_rows(&mut rng, r, r, &down);
    let a0 = random_rows(&mut rng, r, r, &local);
    let zero_a = Block::zeros(r, r);
    let zero_b = Block::zeros(r0, r);
    Mg1Spec::new(
        b0,
        BlockSeries::explicit(r0, r, b_terms, zero_b).expect("shapes are consistent"),
        c0,
        a_down,
        a0,
        BlockSeries::explicit(r, r, a_terms, zero_a).expect("shapes are consistent"),
    )
    .expect("random family rows are stochastic by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pareto_first_weight_and_telescoping() {
        let w = pareto_pmf(1.55, 1000).unwrap();
        assert!((w.weight(1) - (1.0 - 2f64.powf(-1.55))).abs() < 1e-15);
        let total: f64 = (1..=1000).rev().map(|k| w.weight(k)).sum::<f64>() + w.remainder();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((w.remainder() - 1001f64.powf(-1.55)).abs() < 1e-20);
    }

    #[test]
    fn pareto_large_alpha_is_degenerate() {
        let w = pareto_pmf(200.0, 10).unwrap();
        assert!((w.weight(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn default_uniformization_constant() {
        assert!((MxM1WvParams::default().default_c() - 4.4).abs() < 1e-15);
    }

    #[test]
    fn rate_blocks_match_layout() {
        let rate = build_rate_spec(&MxM1WvParams {
            pmf_cutoff: 1000,
            ..Default::default()
        })
        .unwrap();
        let want = [1.5, 1.3, 1.2, 1.6, 2.0];
        for (j, w) in want.iter().enumerate() {
            assert_eq!(rate.a_down[(j, j)], *w);
        }
        assert_eq!(rate.a_down.sum(), want.iter().sum::<f64>());
        assert!(rate.max_row_sum() <= 1e-12);
        assert!((rate.a0[(0, 0)] + 0.4 + 1.5 + 0.4).abs() < 1e-15);
        assert_eq!(rate.a0[(0, 4)], 0.4);
        assert!((rate.a0[(4, 4)] + 2.4).abs() < 1e-15);
    }

    #[test]
    fn uniformized_rows_are_stochastic() {
        let spec = working_vacation_spec(&MxM1WvParams {
            pmf_cutoff: 1000,
            ..Default::default()
        })
        .unwrap();
        assert!((spec.b0()[(0, 0)] - (1.0 - 0.4 / 4.4)).abs() < 1e-15);
        assert_eq!(spec.boundary_phases(), 1);
        assert_eq!(spec.repeat_phases(), 5);
    }

    #[test]
    fn zero_generator_uniformizes_to_identity() {
        let rate = RateSpec {
            b0: Block::zeros(1, 1),
            b: BlockSeries::empty(1, 1),
            c0: Block::zeros(1, 1),
            a_down: Block::zeros(1, 1),
            a0: Block::zeros(1, 1),
            a: BlockSeries::empty(1, 1),
        };
        let spec = uniformize(&rate, Some(1.0)).unwrap();
        assert_eq!(spec.b0()[(0, 0)], 1.0);
        assert_eq!(spec.a0()[(0, 0)], 1.0);
    }

    #[test]
    fn c_below_outflow_is_rejected() {
        let rate = build_rate_spec(&MxM1WvParams {
            pmf_cutoff: 10,
            ..Default::default()
        })
        .unwrap();
        assert!(uniformize(&rate, Some(2.0)).is_err());
    }

    #[test]
    fn load_is_below_one() {
        let p = MxM1WvParams::default();
        let mean = pmf_mean(&pareto_pmf(p.pareto_alpha, p.pmf_cutoff).unwrap());
        assert!((mean - 2.47).abs() < 0.05, "{mean}");
        assert!(p.lambda * mean / p.mu < 1.0);
    }

    #[test]
    fn config_reads_keys_and_defaults() {
        let p = MxM1WvParams::from_toml("lambda = 0.5\nnu2 = 1.0\ncutoff = 100\n").unwrap();
        assert_eq!(p.lambda, 0.5);
        assert_eq!(p.nu, [1.5, 1.0, 1.2, 1.6]);
        assert_eq!(p.pmf_cutoff, 100);
        assert_eq!(p.mu, 2.0);
        let err = MxM1WvParams::from_toml("lambda = 0.5\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn random_families_are_valid() {
        for seed in 0..10 {
            let s = random_spec(seed, &SpecFamily::default());
            assert_eq!(s.a_series().cutoff(), 2);
            let s = random_spec(seed, &SpecFamily::skip_free_up(1, 2, 4));
            assert_eq!(s.a_series().cutoff(), 0);
            assert_eq!(s.b_series().cutoff(), 4);
        }
    }
}
