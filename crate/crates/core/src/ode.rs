//! Adaptive Dormand-Prince 5(4) for a complex scalar.

use crate::error::{Error, Result};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 100_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn combine(y: C64, h: f64, a: &[f64], k: &[C64]) -> C64 {
    y + h * a.iter().zip(k).map(|(&c, &kk)| c * kk).sum::<C64>()
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, y0: C64, opts: OdeOptions) -> Result<(C64, OdeStats)>
where
    F: FnMut(f64, C64) -> Result<C64>,
{
    let mut stats = OdeStats::default();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok((y0, stats));
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, y)?;
    stats.evaluations += 1;
    let mut h = (span.abs() * 0.01).min(0.05 * (1.0 + y.norm()) / (k1.norm() + 1e-300)).max(span.abs() * 1e-6) * dir;

    while (t1 - t) * dir > 0.0 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Integration(format!("step budget {} exhausted at t = {t}", opts.max_steps)));
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let k2 = f(t + C[1] * h, combine(y, h, &A2, &[k1]))?;
        let k3 = f(t + C[2] * h, combine(y, h, &A3, &[k1, k2]))?;
        let k4 = f(t + C[3] * h, combine(y, h, &A4, &[k1, k2, k3]))?;
        let k5 = f(t + C[4] * h, combine(y, h, &A5, &[k1, k2, k3, k4]))?;
        let k6 = f(t + C[5] * h, combine(y, h, &A6, &[k1, k2, k3, k4, k5]))?;
        let y5 = combine(y, h, &B5[..6], &[k1, k2, k3, k4, k5, k6]);
        let k7 = f(t + h, y5)?;
        stats.evaluations += 6;
        let ks = [k1, k2, k3, k4, k5, k6, k7];
        let err: C64 = h * B5.iter().zip(&B4).zip(&ks).map(|((b5, b4), k)| (b5 - b4) * k).sum::<C64>();
        let scale = opts.atol + opts.rtol * y.norm().max(y5.norm());
        let ratio = err.norm() / scale;
        if !ratio.is_finite() || !y5.re.is_finite() || !y5.im.is_finite() {
            return Err(Error::Integration(format!("non-finite state at t = {t}")));
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        if ratio <= 1.0 {
            t += h;
            y = y5;
            k1 = k7;
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }
        let h_new = h * factor;
        if h_new.abs() <= f64::EPSILON * t.abs().max(1.0) * 16.0 {
            return Err(Error::Integration(format!("step size underflow at t = {t}")));
        }
        h = h_new;
    }
    Ok((y, stats))
}
