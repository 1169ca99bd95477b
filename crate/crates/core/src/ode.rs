//! Dormand–Prince 5(4) with embedded error control on complex state vectors.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub reltol: f64,
    pub abstol: f64,
    pub max_steps: usize,
    /// First trial step; chosen automatically when `None`.
    pub initial_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            reltol: 1e-9,
            abstol: 1e-12,
            max_steps: 2_000_000,
            initial_step: None,
        }
    }
}

impl OdeOptions {
    pub fn with_reltol(reltol: f64) -> Result<Self> {
        if !(1e-12..=1e-3).contains(&reltol) {
            return Err(Error::InvalidParams(format!(
                "reltol must lie in [1e-12, 1e-3], got {reltol}"
            )));
        }
        Ok(Self {
            reltol,
            abstol: (reltol * 1e-3).max(1e-15),
            ..Default::default()
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

// Dormand–Prince tableau
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine(out: &mut [Complex64], y: &[Complex64], h: f64, terms: &[(f64, &[Complex64])]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (w, k) in terms {
            acc += k[i] * *w;
        }
        *o = y[i] + acc * h;
    }
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` in place.
///
/// `f` writes the derivative of its second argument into the third.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y: &mut [Complex64],
    opts: &OdeOptions,
) -> Result<OdeStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let mut stats = OdeStats::default();
    if t1 == t0 {
        return Ok(stats);
    }
    if t1 < t0 {
        return Err(Error::InvalidParams("backward integration is not supported".into()));
    }
    let n = y.len();
    let mut k1 = vec![Complex64::new(0.0, 0.0); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut k5 = k1.clone();
    let mut k6 = k1.clone();
    let mut k7 = k1.clone();
    let mut tmp = k1.clone();
    let mut y_new = k1.clone();

    f(t0, y, &mut k1);
    stats.evaluations += 1;

    let span = t1 - t0;
    let mut h = match opts.initial_step {
        Some(h) => h.min(span),
        None => initial_step(y, &k1, opts).min(span),
    };
    let h_min = 1e-14 * t1.abs().max(span).max(1e-300);
    let mut t = t0;

    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::NoConvergence(format!(
                "integrator exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }

        combine(&mut tmp, y, h, &[(A21, &k1)]);
        f(t + C2 * h, &tmp, &mut k2);
        combine(&mut tmp, y, h, &[(A31, &k1), (A32, &k2)]);
        f(t + C3 * h, &tmp, &mut k3);
        combine(&mut tmp, y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f(t + C4 * h, &tmp, &mut k4);
        combine(&mut tmp, y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        f(t + C5 * h, &tmp, &mut k5);
        combine(
            &mut tmp,
            y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        f(t + h, &tmp, &mut k6);
        combine(
            &mut y_new,
            y,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        f(t + h, &y_new, &mut k7);
        stats.evaluations += 6;

        let mut err: f64 = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let scale = opts.abstol + opts.reltol * y[i].norm().max(y_new[i].norm());
            err = err.max(e.norm() / scale);
        }

        if err.is_finite() && err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&y_new);
            std::mem::swap(&mut k1, &mut k7);
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            stats.rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= factor;
            if h < h_min {
                return Err(Error::StepSizeUnderflow { t });
            }
        }
    }
    Ok(stats)
}

fn initial_step(y: &[Complex64], dy: &[Complex64], opts: &OdeOptions) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (yi, fi) in y.iter().zip(dy) {
        let scale = opts.abstol + opts.reltol * yi.norm();
        d0 = d0.max(yi.norm() / scale);
        d1 = d1.max(fi.norm() / scale);
    }
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}
