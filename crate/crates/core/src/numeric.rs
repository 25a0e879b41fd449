//! Small numerical kernels shared by the modules: compensated summation,
//! adaptive Gauss–Kronrod quadrature and ordinary least squares.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be accumulated by the quadrature and summation helpers.
pub trait Accumulate: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Accumulate for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Accumulate for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Neumaier (improved Kahan) summation of real numbers.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Componentwise Neumaier summation of complex numbers.
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexSum {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl ComplexSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: Complex64) {
        self.re.add(v.re);
        self.im.add(v.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

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

/// One 15-point Kronrod rule with its embedded 7-point Gauss estimate.
/// Returns `(kronrod, |kronrod - gauss|)`.
pub fn gauss_kronrod15<T, F>(f: &mut F, a: f64, b: f64) -> (T, f64)
where
    T: Accumulate,
    F: FnMut(f64) -> T,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + pair * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + pair * WG[j / 2];
        }
    }
    let kronrod = kronrod * half;
    let gauss = gauss * half;
    (kronrod, (kronrod - gauss).magnitude())
}

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: f64,
    pub intervals: usize,
}

/// Globally adaptive Gauss–Kronrod quadrature over `[a, b]` with optional
/// interior breakpoints. Stops when the summed error estimate is below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<T, F>(
    mut f: F,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Quadrature<T>>
where
    T: Accumulate,
    F: FnMut(f64) -> T,
{
    if breakpoints.len() < 2 {
        return Err(Error::domain("quadrature needs at least two breakpoints"));
    }
    let mut intervals: Vec<(f64, f64, T, f64)> = Vec::with_capacity(max_intervals.max(16));
    for w in breakpoints.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::domain("quadrature breakpoints must be increasing"));
        }
        let (v, e) = gauss_kronrod15(&mut f, w[0], w[1]);
        intervals.push((w[0], w[1], v, e));
    }
    loop {
        let mut value = T::zero();
        let mut error = 0.0;
        let mut worst = 0;
        for (i, iv) in intervals.iter().enumerate() {
            value = value + iv.2;
            error += iv.3;
            if iv.3 > intervals[worst].3 {
                worst = i;
            }
        }
        let target = abs_tol.max(rel_tol * value.magnitude());
        if error <= target {
            return Ok(Quadrature {
                value,
                error,
                intervals: intervals.len(),
            });
        }
        let (a, b, _, _) = intervals[worst];
        let mid = 0.5 * (a + b);
        if intervals.len() >= max_intervals || mid <= a || mid >= b {
            return Err(Error::numerical(format!(
                "adaptive quadrature did not converge: achieved error {error:.3e}, target {target:.3e}"
            )));
        }
        let (v1, e1) = gauss_kronrod15(&mut f, a, mid);
        let (v2, e2) = gauss_kronrod15(&mut f, mid, b);
        intervals[worst] = (a, mid, v1, e1);
        intervals.push((mid, b, v2, e2));
    }
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub n: usize,
}

pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::domain("least squares: x and y lengths differ"));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "least squares needs at least 2 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::domain("least squares: all abscissae are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        rms_residual: (ss / nf).sqrt(),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_integrates_polynomials_exactly() {
        let q = integrate(|x: f64| x.powi(6) - 3.0 * x, &[0.0, 2.0], 1e-14, 1e-14, 50).unwrap();
        assert!((q.value - (128.0 / 7.0 - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let q = integrate(|x: f64| 1.0 / (1e-4 + x * x), &[-1.0, 1.0], 1e-10, 1e-12, 500).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((q.value - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn complex_quadrature() {
        let q = integrate(
            |t: f64| Complex64::new(0.0, 3.0 * t).exp(),
            &[0.0, 1.0],
            1e-14,
            1e-13,
            50,
        )
        .unwrap();
        let exact = (Complex64::new(0.0, 3.0).exp() - 1.0) / Complex64::new(0.0, 3.0);
        assert!((q.value - exact).norm() < 1e-13);
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let mut s = NeumaierSum::new();
        for v in [1.0, 1e100, 1.0, -1e100] {
            s.add(v);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn line_fit_exact() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let fit = least_squares_line(&xs, &ys).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-15);
        assert!((fit.intercept - 2.0).abs() < 1e-15);
        assert!(fit.rms_residual < 1e-15);
    }
}
