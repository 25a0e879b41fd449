//! Dormand–Prince 5(4) with its quartic continuous extension.

use super::{check_finite, error_norm, rhs, RawSolution, RateParams, Segment, StepLimits};
use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[inline]
fn lin(y: &[f64; 3], terms: &[(f64, &[f64; 3])], h: f64) -> [f64; 3] {
    let mut out = *y;
    for i in 0..3 {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] += h * s;
    }
    out
}

pub(crate) fn integrate(p: &RateParams, lim: &StepLimits, rtol: f64, atol: f64) -> Result<RawSolution> {
    let mut t = 0.0f64;
    let mut y = [0.0f64; 3];
    let mut k1 = rhs(p, t, &y);
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

        let k2 = rhs(p, t + C2 * h, &lin(&y, &[(A21, &k1)], h));
        let k3 = rhs(p, t + C3 * h, &lin(&y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = rhs(p, t + C4 * h, &lin(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = rhs(
            p,
            t + C5 * h,
            &lin(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h),
        );
        let k6 = rhs(
            p,
            t + h,
            &lin(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h),
        );
        let y1 = lin(&y, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)], h);
        let t1 = if is_last { lim.t_end } else { t + h };
        let k7 = rhs(p, t1, &y1);

        let mut err = [0.0; 3];
        for i in 0..3 {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&err, &y, &y1, atol, rtol);
        if !en.is_finite() {
            // Overflow inside the trial step: retry much smaller.
            rejected += 1;
            last_rejected = true;
            h *= 0.1;
            continue;
        }

        if en <= 1.0 {
            check_finite(t1, &y1)?;
            let mut coef = [[0.0; 5]; 3];
            for i in 0..3 {
                let rc1 = y[i];
                let rc2 = y1[i] - y[i];
                let rc3 = h * k1[i] - rc2;
                let rc4 = rc2 - h * k7[i] - rc3;
                let rc5 = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                coef[i] = [rc1, rc2 + rc3, -rc3 + rc4 + rc5, -rc4 - 2.0 * rc5, rc5];
            }
            segments.push(Segment { t0: t, h: t1 - t, coef });
            t = t1;
            y = y1;
            k1 = k7;
            times.push(t);
            states.push(y);
            let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, if last_rejected { 1.0 } else { 5.0 });
            h *= fac;
            last_rejected = false;
        } else {
            rejected += 1;
            last_rejected = true;
            h *= (0.9 * en.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok(RawSolution {
        times,
        states,
        segments,
        rejected,
    })
}
