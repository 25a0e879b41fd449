//! Three-stage Radau IIA (order 5) for the stiff regime of large `C N0`.
//!
//! Stage equations are solved by simplified Newton iteration with the
//! analytic Jacobian; the local error is estimated by step doubling. The
//! dense output on each half step is its cubic collocation polynomial.

use super::{check_finite, error_norm, jacobian, rhs, RawSolution, RateParams, Segment, StepLimits};
use crate::error::{Error, Result};

const S6: f64 = 2.449_489_742_783_178;

const C: [f64; 3] = [(4.0 - S6) / 10.0, (4.0 + S6) / 10.0, 1.0];

const A: [[f64; 3]; 3] = [
    [
        (88.0 - 7.0 * S6) / 360.0,
        (296.0 - 169.0 * S6) / 1800.0,
        (-2.0 + 3.0 * S6) / 225.0,
    ],
    [
        (296.0 + 169.0 * S6) / 1800.0,
        (88.0 + 7.0 * S6) / 360.0,
        (-2.0 - 3.0 * S6) / 225.0,
    ],
    [(16.0 - S6) / 36.0, (16.0 + S6) / 36.0, 1.0 / 9.0],
];

const NEWTON_MAX_ITER: usize = 12;
const NEWTON_TOL: f64 = 1e-4;

type Stages = [[f64; 3]; 3];

/// Dense LU with partial pivoting for the 9×9 Newton matrix.
struct Lu {
    m: [[f64; 9]; 9],
    piv: [usize; 9],
}

impl Lu {
    fn factor(mut m: [[f64; 9]; 9]) -> Option<Self> {
        let mut piv = [0usize; 9];
        for k in 0..9 {
            let mut p = k;
            for i in k + 1..9 {
                if m[i][k].abs() > m[p][k].abs() {
                    p = i;
                }
            }
            if m[p][k] == 0.0 || !m[p][k].is_finite() {
                return None;
            }
            m.swap(k, p);
            piv[k] = p;
            for i in k + 1..9 {
                let f = m[i][k] / m[k][k];
                m[i][k] = f;
                for j in k + 1..9 {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
        Some(Self { m, piv })
    }

    fn solve(&self, b: &mut [f64; 9]) {
        for k in 0..9 {
            b.swap(k, self.piv[k]);
        }
        for i in 1..9 {
            for j in 0..i {
                b[i] -= self.m[i][j] * b[j];
            }
        }
        for i in (0..9).rev() {
            for j in i + 1..9 {
                b[i] -= self.m[i][j] * b[j];
            }
            b[i] /= self.m[i][i];
        }
    }
}

/// Solves the collocation equations for one step; `None` if Newton fails.
fn collocate(p: &RateParams, t: f64, y: &[f64; 3], h: f64, rtol: f64, atol: f64) -> Option<Stages> {
    let jac = jacobian(p, y);
    let mut m = [[0.0; 9]; 9];
    for i in 0..3 {
        for j in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    let delta = if i == j && a == b { 1.0 } else { 0.0 };
                    m[3 * i + a][3 * j + b] = delta - h * A[i][j] * jac[a][b];
                }
            }
        }
    }
    let lu = Lu::factor(m)?;
    let sc: Vec<f64> = y.iter().map(|v| atol + rtol * v.abs()).collect();
    let mut z: Stages = [[0.0; 3]; 3];
    let mut prev_norm = f64::INFINITY;
    for iter in 0..NEWTON_MAX_ITER {
        let mut f = [[0.0; 3]; 3];
        for j in 0..3 {
            let yj = [y[0] + z[j][0], y[1] + z[j][1], y[2] + z[j][2]];
            f[j] = rhs(p, t + C[j] * h, &yj);
        }
        let mut r = [0.0; 9];
        for i in 0..3 {
            for a in 0..3 {
                let mut s = 0.0;
                for j in 0..3 {
                    s += A[i][j] * f[j][a];
                }
                r[3 * i + a] = -z[i][a] + h * s;
            }
        }
        lu.solve(&mut r);
        let mut norm = 0.0;
        for i in 0..3 {
            for a in 0..3 {
                let d = r[3 * i + a];
                z[i][a] += d;
                norm += (d / sc[a]).powi(2);
            }
        }
        let norm = (norm / 9.0).sqrt();
        if !norm.is_finite() {
            return None;
        }
        if norm < NEWTON_TOL {
            return Some(z);
        }
        if iter >= 1 && norm > 0.9 * prev_norm {
            return None;
        }
        prev_norm = norm;
    }
    None
}

/// Monomial coefficients of the collocation polynomial `y0 + θ q(θ)`.
fn dense(y0: &[f64; 3], z: &Stages) -> [[f64; 5]; 3] {
    let mut coef = [[0.0; 5]; 3];
    for a in 0..3 {
        let mut q = [0.0; 3];
        for i in 0..3 {
            let (j, k) = match i {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let w = z[i][a] / (C[i] * (C[i] - C[j]) * (C[i] - C[k]));
            q[0] += w * C[j] * C[k];
            q[1] -= w * (C[j] + C[k]);
            q[2] += w;
        }
        coef[a] = [y0[a], q[0], q[1], q[2], 0.0];
    }
    coef
}

#[inline]
fn advance(y: &[f64; 3], z: &Stages) -> [f64; 3] {
    [y[0] + z[2][0], y[1] + z[2][1], y[2] + z[2][2]]
}

pub(crate) fn integrate(p: &RateParams, lim: &StepLimits, rtol: f64, atol: f64) -> Result<RawSolution> {
    let mut t = 0.0f64;
    let mut y = [0.0f64; 3];
    let mut h = (1e-3f64).min(lim.h_max_at(t));
    let mut times = vec![t];
    let mut states = vec![y];
    let mut segments = Vec::new();
    let mut rejected = 0usize;
    let mut last_rejected = false;

    while t < lim.t_end {
        if segments.len() >= lim.max_steps {
            return Err(Error::numerical(format!(
                "step budget of {} exhausted at t = {t:.6e}",
                lim.max_steps
            )));
        }
        h = h.min(lim.h_max_at(t));
        let remaining = lim.t_end - t;
        let is_last = h >= remaining * (1.0 - 1e-12);
        if is_last {
            h = remaining;
        }
        if h < 1e-14 * t.max(1.0) {
            return Err(Error::Stiffness { t, h });
        }
        let half = 0.5 * h;
        let attempt = (|| {
            let full = collocate(p, t, &y, h, rtol, atol)?;
            let z1 = collocate(p, t, &y, half, rtol, atol)?;
            let ym = advance(&y, &z1);
            let z2 = collocate(p, t + half, &ym, half, rtol, atol)?;
            Some((advance(&y, &full), z1, ym, z2))
        })();
        let Some((y_full, z1, ym, z2)) = attempt else {
            rejected += 1;
            last_rejected = true;
            h *= 0.25;
            continue;
        };
        let y1 = advance(&ym, &z2);
        let mut err = [0.0; 3];
        for i in 0..3 {
            err[i] = (y1[i] - y_full[i]) / 31.0;
        }
        let en = error_norm(&err, &y, &y1, atol, rtol);
        if !en.is_finite() {
            rejected += 1;
            last_rejected = true;
            h *= 0.1;
            continue;
        }
        if en <= 1.0 {
            let t1 = if is_last { lim.t_end } else { t + h };
            check_finite(t1, &y1)?;
            let tm = t + half;
            segments.push(Segment {
                t0: t,
                h: half,
                coef: dense(&y, &z1),
            });
            times.push(tm);
            states.push(ym);
            segments.push(Segment {
                t0: tm,
                h: t1 - tm,
                coef: dense(&ym, &z2),
            });
            times.push(t1);
            states.push(y1);
            t = t1;
            y = y1;
            let fac = (0.9 * en.max(1e-12).powf(-1.0 / 6.0)).clamp(0.2, if last_rejected { 1.0 } else { 5.0 });
            h *= fac;
            last_rejected = false;
        } else {
            rejected += 1;
            last_rejected = true;
            h *= (0.9 * en.powf(-1.0 / 6.0)).clamp(0.1, 0.9);
        }
    }
    Ok(RawSolution {
        times,
        states,
        segments,
        rejected,
    })
}
