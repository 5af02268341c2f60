//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals, plus a fixed
//! 8-point Gauss–Legendre rule.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

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
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];

const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Integral estimate with an absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { value: 0.0, error: 0.0 };

    pub fn scale(self, factor: f64) -> Estimate {
        Estimate {
            value: self.value * factor,
            error: self.error * factor.abs(),
        }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
        }
    }
}

impl std::ops::Sub for Estimate {
    type Output = Estimate;
    fn sub(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value - rhs.value,
            error: self.error + rhs.error,
        }
    }
}

impl std::iter::Sum for Estimate {
    fn sum<I: Iterator<Item = Estimate>>(iter: I) -> Estimate {
        iter.fold(Estimate::ZERO, |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-12,
            rel: 1e-12,
            max_intervals: 2000,
        }
    }
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Tolerance {
            abs,
            rel: 0.0,
            ..Default::default()
        }
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut fv = [0.0; 15];
    fv[7] = fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }
    let value = kronrod * half;
    let res_abs = abs_sum * half.abs();
    let res_asc = asc * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Adaptive integration of `f` over `[a, b]`, bisecting the interval with the
/// largest error until `error <= max(abs, rel * |value|)`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate::ZERO);
    }
    let (value, error) = kronrod15(&mut f, a, b);
    let mut total_value = value;
    let mut total_error = error;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    loop {
        let target = tol.abs.max(tol.rel * total_value.abs());
        if total_error <= target {
            break;
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Accuracy {
                estimate: total_value,
                error_bound: total_error,
                tolerance: target,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = kronrod15(&mut f, worst.a, mid);
        let (v2, e2) = kronrod15(&mut f, mid, worst.b);
        total_value += v1 + v2 - worst.value;
        total_error += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // Re-sum to shed accumulated rounding from the running updates.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(Estimate { value, error })
}

/// 8-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre8_unit<F: FnMut(f64) -> f64>(mut f: F) -> f64 {
    let mut sum = 0.0;
    for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
        sum += w * (f(0.5 - 0.5 * x) + f(0.5 + 0.5 * x));
    }
    0.5 * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let est = integrate(|x| 3.0 * x * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((est.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn long_exponential_interval() {
        // ∫_{-3000}^{0} e^{0.01 u} du = 100 (1 - e^{-30})
        let want = 100.0 * (1.0 - (-30.0f64).exp());
        let est = integrate(|u| (0.01 * u).exp(), -3000.0, 0.0, Tolerance::default()).unwrap();
        assert!(((est.value - want) / want).abs() < 1e-12, "{est:?}");
    }

    #[test]
    fn oscillatory() {
        let want = 1.0 - 200f64.cos();
        let est = integrate(f64::sin, 0.0, 200.0, Tolerance::absolute(1e-11)).unwrap();
        assert!((est.value - want).abs() < 1e-10, "{est:?}");
    }

    #[test]
    fn reports_failure_when_budget_exhausted() {
        let tol = Tolerance::absolute(1e-14).with_max_intervals(3);
        let err = integrate(|x| (1.0 / x).sin(), 1e-3, 1.0, tol).unwrap_err();
        assert!(matches!(err, Error::Accuracy { .. }));
    }

    #[test]
    fn gauss_legendre_degree_15() {
        let got = gauss_legendre8_unit(|s| s.powi(15) + s.powi(4));
        assert!((got - (1.0 / 16.0 + 0.2)).abs() < 1e-15);
    }
}
