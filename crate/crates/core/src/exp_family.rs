//! Categorical and Dirichlet numerics: digamma, softmax, entropy, divergences
//! and Dirichlet summaries.
//!
//! Probabilities are clamped at [`LOG_FLOOR`] before any logarithm so that
//! posteriors which underflow to zero never produce NaN.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking logs.
pub const LOG_FLOOR: f64 = 1e-16;

/// Tolerance on the sum of a [`ProbVector`].
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Natural log with the probability clamp applied.
#[inline]
pub fn ln_clamped(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

/// A categorical parameter vector: non-empty, non-negative, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Array1<f64>);

impl ProbVector {
    pub fn new(values: impl Into<Array1<f64>>) -> Result<Self> {
        let values = values.into();
        if values.is_empty() {
            return Err(Error::InvalidProbVector("empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidProbVector(format!(
                "entry {i} = {} is negative or non-finite",
                values[i]
            )));
        }
        let total = values.sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidProbVector(format!("entries sum to {total}")));
        }
        Ok(Self(values))
    }

    /// Normalises non-negative weights.
    pub fn from_weights(weights: impl Into<Array1<f64>>) -> Result<Self> {
        let w = weights.into();
        if w.is_empty() {
            return Err(Error::InvalidProbVector("empty".into()));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidProbVector(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total = w.sum();
        if total <= 0.0 {
            return Err(Error::ZeroEvidence);
        }
        Ok(Self(w / total))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("uniform over zero categories".into()));
        }
        Ok(Self(Array1::from_elem(n, 1.0 / n as f64)))
    }

    /// Caller guarantees the invariants (e.g. softmax output).
    pub(crate) fn from_array_unchecked(values: Array1<f64>) -> Self {
        debug_assert!(!values.is_empty());
        Self(values)
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.to_vec()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(self.0.iter().copied())
    }

    /// Entrywise clamped logarithm.
    pub fn ln(&self) -> Array1<f64> {
        self.0.mapv(ln_clamped)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0.to_vec()
    }
}

/// Lowest index attaining the maximum.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// One-hot encoding of a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneHot {
    index: usize,
    dimension: usize,
}

impl OneHot {
    pub fn new(index: usize, dimension: usize) -> Result<Self> {
        if index >= dimension {
            return Err(Error::IndexOutOfRange { index, dimension });
        }
        Ok(Self { index, dimension })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn to_prob_vector(&self) -> ProbVector {
        let mut v = Array1::zeros(self.dimension);
        v[self.index] = 1.0;
        ProbVector(v)
    }
}

/// Dirichlet pseudo-counts, one column per conditioning index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletBlock {
    counts: Array2<f64>,
}

impl DirichletBlock {
    pub fn new(counts: Array2<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidDirichlet("empty block".into()));
        }
        if let Some(((i, j), v)) = counts.indexed_iter().find(|(_, v)| !v.is_finite() || **v <= 0.0) {
            return Err(Error::InvalidDirichlet(format!(
                "entry ({i}, {j}) = {v} must be finite and > 0"
            )));
        }
        Ok(Self { counts })
    }

    /// Single-column block from a vector of counts.
    pub fn from_column(counts: &[f64]) -> Result<Self> {
        Self::new(Array1::from(counts.to_vec()).insert_axis(Axis(1)))
    }

    pub fn counts(&self) -> &Array2<f64> {
        &self.counts
    }

    pub fn shape(&self) -> (usize, usize) {
        self.counts.dim()
    }

    /// Adds non-negative counts; the result stays strictly positive.
    pub fn add(&self, delta: &Array2<f64>) -> Result<Self> {
        if delta.dim() != self.counts.dim() {
            return Err(Error::Dimension(format!(
                "count update {:?} does not match block {:?}",
                delta.dim(),
                self.counts.dim()
            )));
        }
        Self::new(&self.counts + delta)
    }

    pub fn expected_log(&self) -> Array2<f64> {
        expected_log_dirichlet(self)
    }

    /// Column-normalised counts.
    pub fn mean(&self) -> Array2<f64> {
        let totals = self.counts.sum_axis(Axis(0));
        &self.counts / &totals.insert_axis(Axis(0))
    }

    /// Sum over columns of KL(Dir(self) || Dir(prior)).
    pub fn kl_to(&self, prior: &DirichletBlock) -> Result<f64> {
        if prior.shape() != self.shape() {
            return Err(Error::Dimension("KL between blocks of different shape".into()));
        }
        Ok(self
            .counts
            .axis_iter(Axis(1))
            .zip(prior.counts.axis_iter(Axis(1)))
            .map(|(q, p)| kl_dirichlet(q, p))
            .sum())
    }
}

/// KL(Dir(q) || Dir(p)) for one column.
pub fn kl_dirichlet(q: ArrayView1<'_, f64>, p: ArrayView1<'_, f64>) -> f64 {
    let q0: f64 = q.sum();
    let p0: f64 = p.sum();
    let psi_q0 = digamma_unchecked(q0);
    let mut kl = ln_gamma(q0) - ln_gamma(p0);
    for (&qi, &pi) in q.iter().zip(p.iter()) {
        kl += ln_gamma(pi) - ln_gamma(qi) + (qi - pi) * (digamma_unchecked(qi) - psi_q0);
    }
    kl.max(0.0)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    softmax_array(&ArrayView1::from(logits))
}

/// Softmax over an ndarray view. `-inf` entries receive zero mass.
pub fn softmax_array(logits: &ArrayView1<'_, f64>) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::Dimension("softmax of an empty vector".into()));
    }
    if logits.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Numeric("softmax input contains NaN or +inf".into()));
    }
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if max == f64::NEG_INFINITY {
        return Err(Error::Numeric("softmax input is entirely -inf".into()));
    }
    let e = logits.mapv(|v| (v - max).exp());
    let total = e.sum();
    Ok(ProbVector(e / total))
}

/// Log of the softmax normaliser, `ln Σ exp(v)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

// Bernoulli-number coefficients B_2k / (2k) of the asymptotic expansion.
const DIGAMMA_ASYMPTOTIC: [f64; 9] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
    -3617.0 / 8160.0,
    43867.0 / 14364.0,
];

/// Digamma function ψ(x) for x > 0.
///
/// Lifts x to at least 6 with ψ(x) = ψ(x+1) − 1/x, then applies the
/// asymptotic series through the x^-18 term.
pub fn digamma(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    if x == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut series = 0.0;
    for c in DIGAMMA_ASYMPTOTIC.iter().rev() {
        series = series * inv2 + c;
    }
    shift + x.ln() - 0.5 / x - series * inv2
}

/// Entry (i, j) is ψ(counts_ij) − ψ(Σ_k counts_kj).
pub fn expected_log_dirichlet(block: &DirichletBlock) -> Array2<f64> {
    let counts = block.counts();
    let mut out = counts.mapv(digamma_unchecked);
    for (mut col, total) in out.axis_iter_mut(Axis(1)).zip(counts.sum_axis(Axis(0)).iter()) {
        let psi_total = digamma_unchecked(*total);
        col.mapv_inplace(|v| v - psi_total);
    }
    out
}

/// Kullback–Leibler divergence KL(p || q) in nats.
///
/// Returns `f64::INFINITY` when q assigns zero mass where p does not.
pub fn kl_categorical(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    kl_view(p.view(), q.view())
}

pub(crate) fn kl_view(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "KL between vectors of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q.iter()) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += pi * (ln_clamped(pi) - ln_clamped(qi));
    }
    Ok(kl.max(0.0))
}

/// Shannon entropy in nats.
pub fn entropy_categorical(p: &ProbVector) -> f64 {
    entropy_view(p.view())
}

pub(crate) fn entropy_view(p: ArrayView1<'_, f64>) -> f64 {
    let h: f64 = p.iter().map(|&v| if v > 0.0 { -v * ln_clamped(v) } else { 0.0 }).sum();
    h.max(0.0)
}

fn check_theta(theta: &[f64]) -> Result<()> {
    if theta.is_empty() {
        return Err(Error::InvalidDirichlet("empty concentration vector".into()));
    }
    if let Some(i) = theta.iter().position(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::InvalidDirichlet(format!(
            "concentration {i} = {} must be finite and > 0",
            theta[i]
        )));
    }
    Ok(())
}

/// Mode of Dir(θ): (θ_i − 1) / (Σθ − K). Requires every θ_i > 1.
pub fn dirichlet_mode(theta: &[f64]) -> Result<ProbVector> {
    check_theta(theta)?;
    if let Some(index) = theta.iter().position(|v| *v <= 1.0) {
        return Err(Error::ModeUndefined {
            index,
            value: theta[index],
        });
    }
    let k = theta.len() as f64;
    let denom = theta.iter().sum::<f64>() - k;
    Ok(ProbVector(theta.iter().map(|t| (t - 1.0) / denom).collect()))
}

/// Marginal variance of component i under Dir(θ).
pub fn dirichlet_variance(theta: &[f64], i: usize) -> Result<f64> {
    check_theta(theta)?;
    if i >= theta.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            dimension: theta.len(),
        });
    }
    let theta0: f64 = theta.iter().sum();
    let m = theta[i] / theta0;
    Ok(m * (1.0 - m) / (theta0 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    // Reference values from a 30-digit evaluation.
    const DIGAMMA_TABLE: [(f64, f64); 12] = [
        (0.001, -1_000.575_571_931_810_3),
        (0.1, -10.423_754_940_411_077),
        (0.5, -1.963_510_026_021_423_5),
        (1.0, -0.577_215_664_901_532_9),
        (1.5, 0.036_489_973_978_576_52),
        (2.0, 0.422_784_335_098_467_1),
        (3.7, 1.167_153_539_361_511_4),
        (6.0, 1.706_117_668_431_800_5),
        (10.0, 2.251_752_589_066_721),
        (100.0, 4.600_161_852_738_087),
        (12345.678, 9.421_020_820_741_761),
        (1e6, 13.815_510_057_964_19),
    ];

    #[test]
    fn digamma_matches_reference_table() {
        for (x, want) in DIGAMMA_TABLE {
            let got = digamma(x).unwrap();
            assert!((got - want).abs() < 1e-12, "psi({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn digamma_closed_forms() {
        assert_abs_diff_eq!(digamma(1.0).unwrap(), -EULER_GAMMA, epsilon = 1e-14);
        let half = -EULER_GAMMA - 2.0 * std::f64::consts::LN_2;
        assert_abs_diff_eq!(digamma(0.5).unwrap(), half, epsilon = 1e-13);
        assert_abs_diff_eq!(digamma(2.0).unwrap(), digamma(1.0).unwrap() + 1.0, epsilon = 1e-14);
    }

    #[test]
    fn digamma_recurrence_grid() {
        for x in [0.1, 0.5, 1.0, 2.0, 10.0, 100.0] {
            let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            assert!((d - 1.0 / x).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn digamma_rejects_non_positive() {
        assert!(matches!(digamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(digamma(-1.5), Err(Error::Domain(_))));
        assert!(matches!(digamma(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn digamma_agrees_with_statrs() {
        for x in [0.3, 0.9, 4.2, 7.5, 55.0, 1234.5] {
            let ours = digamma(x).unwrap();
            let theirs = statrs::function::gamma::digamma(x);
            assert!((ours - theirs).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p.get(0), 0.5, epsilon = 1e-15);
        let p = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert_abs_diff_eq!(p.get(0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.get(1), 1.0 / 3.0, epsilon = 1e-15);
        let p = softmax(&[1000.0, 1000.0]).unwrap();
        assert_abs_diff_eq!(p.get(0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn softmax_errors() {
        assert!(matches!(softmax(&[]), Err(Error::Dimension(_))));
        assert!(matches!(softmax(&[0.0, f64::NAN]), Err(Error::Numeric(_))));
        assert!(matches!(softmax(&[f64::NEG_INFINITY]), Err(Error::Numeric(_))));
    }

    #[test]
    fn softmax_gives_zero_mass_to_neg_infinity() {
        let p = softmax(&[0.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(p.to_vec(), vec![1.0, 0.0]);
    }

    fn block(rows: Array2<f64>) -> DirichletBlock {
        DirichletBlock::new(rows).unwrap()
    }

    #[test]
    fn expected_log_small_columns() {
        let e = expected_log_dirichlet(&block(array![[1.0, 2.0], [1.0, 1.0]]));
        assert_abs_diff_eq!(e[[0, 0]], -1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(e[[1, 0]], -1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(e[[0, 1]], -0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(e[[1, 1]], -1.5, epsilon = 1e-13);
    }

    #[test]
    fn expected_log_random_block_matches_reference() {
        let e = expected_log_dirichlet(&block(array![[0.7, 2.5, 13.0], [1.3, 0.2, 4.4], [9.1, 3.3, 0.05]]));
        let want = array![
            [
                -3.581_247_811_782_181_8,
                -1.002_961_027_786_557_3,
                -0.304_417_759_504_314_07
            ],
            [-2.530_415_146_951_047, -6.995_157_565_023_989, -1.466_727_289_387_371],
            [
                -0.208_900_010_880_208_9,
                -0.671_295_179_372_178_7,
                -23.328_257_764_113_33
            ]
        ];
        for (g, w) in e.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn dirichlet_block_rejects_non_positive() {
        assert!(DirichletBlock::new(array![[1.0, 0.0]]).is_err());
        assert!(DirichletBlock::new(array![[1.0, f64::INFINITY]]).is_err());
        assert!(DirichletBlock::new(Array2::zeros((0, 0))).is_err());
    }

    #[test]
    fn dirichlet_kl_is_zero_for_identical_blocks() {
        let b = block(array![[1.0, 3.0], [2.0, 0.5]]);
        assert_abs_diff_eq!(b.kl_to(&b).unwrap(), 0.0, epsilon = 1e-14);
        let c = block(array![[2.0, 3.0], [2.0, 1.5]]);
        assert!(c.kl_to(&b).unwrap() > 0.0);
    }

    #[test]
    fn kl_examples() {
        let p = ProbVector::new(vec![1.0, 0.0]).unwrap();
        let u = ProbVector::uniform(2).unwrap();
        assert_abs_diff_eq!(kl_categorical(&p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_categorical(&p, &u).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(kl_categorical(&u, &p).unwrap(), f64::INFINITY);
        let q = ProbVector::uniform(3).unwrap();
        assert!(matches!(kl_categorical(&p, &q), Err(Error::Dimension(_))));
    }

    #[test]
    fn entropy_examples() {
        let p = ProbVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(entropy_categorical(&p), 0.0);
        let u2 = ProbVector::uniform(2).unwrap();
        assert_abs_diff_eq!(entropy_categorical(&u2), 2f64.ln(), epsilon = 1e-15);
        let u4 = ProbVector::uniform(4).unwrap();
        assert_abs_diff_eq!(entropy_categorical(&u4), 4f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn mode_examples() {
        assert_eq!(dirichlet_mode(&[2.0, 2.0]).unwrap().to_vec(), vec![0.5, 0.5]);
        let m = dirichlet_mode(&[3.0, 2.0]).unwrap();
        assert_abs_diff_eq!(m.get(0), 2.0 / 3.0, epsilon = 1e-15);
        let m = dirichlet_mode(&[2.0, 2.0, 2.0]).unwrap();
        assert_abs_diff_eq!(m.get(2), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(
            dirichlet_mode(&[2.0, 1.0]),
            Err(Error::ModeUndefined { index: 1, value: 1.0 })
        );
    }

    #[test]
    fn variance_examples() {
        assert_abs_diff_eq!(dirichlet_variance(&[2.0, 2.0], 0).unwrap(), 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(dirichlet_variance(&[1.0, 1.0], 0).unwrap(), 1.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            dirichlet_variance(&[100.0, 100.0], 0).unwrap(),
            0.25 / 201.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            dirichlet_variance(&[1.0, 1.0], 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        let json = serde_json::to_string(&ProbVector::uniform(2).unwrap()).unwrap();
        assert_eq!(json, "[0.5,0.5]");
        assert!(serde_json::from_str::<ProbVector>("[0.9,0.2]").is_err());
    }

    #[test]
    fn one_hot_bounds() {
        assert!(OneHot::new(2, 2).is_err());
        let o = OneHot::new(1, 3).unwrap();
        assert_eq!(o.to_prob_vector().to_vec(), vec![0.0, 1.0, 0.0]);
    }

    fn simplex(n: usize) -> impl Strategy<Value = ProbVector> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |w| ProbVector::from_weights(w).ok())
    }

    fn simplex_pair() -> impl Strategy<Value = (ProbVector, ProbVector)> {
        (1usize..6).prop_flat_map(|n| (simplex(n), simplex(n)))
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(v in prop::collection::vec(-700.0f64..700.0, 1..8)) {
            let p = softmax(&v).unwrap();
            prop_assert!(ProbVector::new(p.values().clone()).is_ok());
        }

        #[test]
        fn softmax_shift_invariant(
            v in prop::collection::vec(-50.0f64..50.0, 1..8),
            c in -1e3f64..1e3,
        ) {
            let p = softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.values().iter().zip(q.values().iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn kl_non_negative((p, q) in simplex_pair()) {
            let kl = kl_categorical(&p, &q).unwrap();
            prop_assert!(kl >= 0.0);
            prop_assert!(kl_categorical(&p, &p).unwrap() < 1e-12);
        }

        #[test]
        fn kl_zero_only_at_equality((p, q) in simplex_pair()) {
            let kl = kl_categorical(&p, &q).unwrap();
            let max_diff = p.values().iter().zip(q.values().iter())
                .map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if kl < 1e-15 {
                prop_assert!(max_diff < 1e-6);
            }
            if max_diff > 1e-3 {
                prop_assert!(kl > 1e-9);
            }
        }

        #[test]
        fn entropy_peaks_at_uniform(p in (2usize..7).prop_flat_map(simplex)) {
            let u = ProbVector::uniform(p.len()).unwrap();
            prop_assert!(entropy_categorical(&p) <= entropy_categorical(&u) + 1e-12);
            prop_assert!(entropy_categorical(&p) >= 0.0);
        }

        #[test]
        fn entropy_uniform_beats_perturbations(
            n in 2usize..7,
            eps in prop::collection::vec(-1.0f64..1.0, 7),
            scale in 1e-6f64..0.1,
        ) {
            let base = 1.0 / n as f64;
            let mut w: Vec<f64> = (0..n).map(|i| base * (1.0 + scale * eps[i])).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            let p = ProbVector::new(w).unwrap();
            let u = ProbVector::uniform(n).unwrap();
            prop_assert!(entropy_categorical(&p) <= entropy_categorical(&u));
        }

        #[test]
        fn variance_shrinks_and_mode_centres_as_c_grows(
            g in prop::collection::vec(-5.0f64..5.0, 2..6),
        ) {
            let cs = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6];
            for i in 0..g.len() {
                let mut prev = f64::INFINITY;
                for c in cs {
                    let theta: Vec<f64> = g.iter().map(|gi| c - gi).collect();
                    let v = dirichlet_variance(&theta, i).unwrap();
                    prop_assert!(v < prev);
                    prev = v;
                }
            }
            let theta: Vec<f64> = g.iter().map(|gi| 1e6 - gi).collect();
            let mode = dirichlet_mode(&theta).unwrap();
            let centre = 1.0 / g.len() as f64;
            for m in mode.values() {
                prop_assert!((m - centre).abs() < 1e-3);
            }
        }
    }
}
