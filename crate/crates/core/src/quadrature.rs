//! Adaptive Gauss–Kronrod (7/15) quadrature on a finite interval, and the
//! expectation of the policy log-partition under an exponential precision.

use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Most subintervals kept by [`integrate`] before it returns its best estimate.
pub const MAX_INTERVALS: usize = 2000;

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(mid);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let s = f(mid - dx) + f(mid + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * half, (k - g).abs() * half)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn piece<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let (value, err) = kronrod(f, a, b);
    Piece { a, b, value, err }
}

/// ∫_a^b f with an absolute error target `tol`.
///
/// Globally adaptive: the subinterval with the largest error estimate is
/// bisected until the summed estimate meets `tol`, the interval budget runs
/// out, or the estimate stops being finite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let first = piece(&f, a, b);
    let (mut total, mut err) = (first.value, first.err);
    let mut heap = BinaryHeap::from([first]);
    while err > tol && heap.len() < MAX_INTERVALS && total.is_finite() {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (left, right) = (piece(&f, worst.a, mid), piece(&f, mid, worst.b));
        total += left.value + right.value - worst.value;
        err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the running updates.
    heap.iter().map(|p| p.value).sum()
}

/// E[ln Σ_k exp(−γ g_k)] for γ ~ Exp(rate).
///
/// The linear part −γ·min g is taken exactly; the bounded remainder is
/// integrated over u = 1 − exp(−rate·γ) ∈ [0, 1). Entries of +∞ contribute
/// nothing.
pub fn expected_log_partition(g: &[f64], rate: f64) -> f64 {
    let g_min = g.iter().copied().fold(f64::INFINITY, f64::min);
    if g_min == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let gaps: Vec<f64> = g.iter().filter(|x| x.is_finite()).map(|x| x - g_min).collect();
    let ties = gaps.iter().filter(|d| **d == 0.0).count() as f64;
    let remainder = |u: f64| {
        if u >= 1.0 {
            return ties.ln();
        }
        let gamma = -(-u).ln_1p() / rate;
        let total: f64 = gaps
            .iter()
            .map(|d| if *d == 0.0 { 1.0 } else { (-gamma * d).exp() })
            .sum();
        total.ln()
    };
    -g_min / rate + integrate(remainder, 0.0, 1.0, 1e-14)
}
