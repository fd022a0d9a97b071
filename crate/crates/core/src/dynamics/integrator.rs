//! Adaptive Dormand–Prince 5(4) stepping with dense output.

use num_complex::Complex64 as C64;

use super::MasterEquation;
use crate::error::{Error, Result};

/// Error tolerances, applied per vector entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-8, atol: 1e-10 }
    }
}

impl Tolerances {
    /// Smallest accepted `rtol`.
    pub const MIN_RTOL: f64 = 1e-13;
    /// Smallest accepted `atol`.
    pub const MIN_ATOL: f64 = 1e-15;

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol.is_finite() && self.rtol >= Self::MIN_RTOL) {
            return Err(Error::param("rtol", format!("must be finite and >= {:e}, got {}", Self::MIN_RTOL, self.rtol)));
        }
        if !(self.atol.is_finite() && self.atol >= Self::MIN_ATOL) {
            return Err(Error::param("atol", format!("must be finite and >= {:e}, got {}", Self::MIN_ATOL, self.atol)));
        }
        Ok(())
    }
}

const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

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

/// Integration statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

struct Work {
    k: [Vec<C64>; 7],
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    rcont: [Vec<C64>; 5],
}

fn combo(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    out.copy_from_slice(y);
    for &(a, k) in terms {
        let s = a * h;
        for (o, v) in out.iter_mut().zip(k) {
            o.re += s * v.re;
            o.im += s * v.im;
        }
    }
}

/// Integrates `eq` from `t = 0` to `t_end`, calling `sample(k, t, y)` at every
/// time of the sorted `grid` (all within `[0, t_end]`).
///
/// The step sequence restarts at each breakpoint reported by the equation so
/// that discontinuities in the generator are never straddled.
pub(crate) fn integrate<E: MasterEquation + ?Sized>(
    eq: &mut E,
    mut y: Vec<C64>,
    t_end: f64,
    grid: &[f64],
    tol: Tolerances,
    mut sample: impl FnMut(usize, f64, &[C64]) -> Result<()>,
) -> Result<(Vec<C64>, StepStats)> {
    tol.validate()?;
    let n = y.len();
    let mut stats = StepStats::default();
    let mut w = Work {
        k: std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n]),
        ytmp: vec![C64::new(0.0, 0.0); n],
        ynew: vec![C64::new(0.0, 0.0); n],
        rcont: std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n]),
    };
    let mut cuts: Vec<f64> = eq.breakpoints().into_iter().filter(|&b| b > 0.0 && b < t_end).collect();
    cuts.push(t_end);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut next_sample = 0;
    while next_sample < grid.len() && grid[next_sample] <= 0.0 {
        sample(next_sample, grid[next_sample], &y)?;
        next_sample += 1;
    }
    let mut t = 0.0;
    let mut h = 0.0;
    let mut err_old: f64 = 1e-4;
    for &stop in &cuts {
        if stop <= t {
            continue;
        }
        // fresh derivative after every cut: the generator may jump there
        eq.derivative(t, &y, &mut w.k[0]);
        stats.evaluations += 1;
        if h <= 0.0 {
            h = initial_step(&y, &w.k[0], tol, stop - t);
        }
        while t < stop {
            let last = t + h >= stop - 1e-12 * stop.abs().max(1.0);
            let hh = if last { stop - t } else { h };
            let err = trial_step(eq, t, hh, stop.next_down(), &y, &mut w, tol);
            stats.evaluations += 6;
            if !err.is_finite() {
                h = hh * 0.1;
                stats.rejected += 1;
            } else if err <= 1.0 {
                stats.accepted += 1;
                let t_new = if last { stop } else { t + hh };
                fill_dense(&y, hh, &mut w);
                while next_sample < grid.len() && grid[next_sample] <= t_new {
                    let theta = ((grid[next_sample] - t) / hh).clamp(0.0, 1.0);
                    interpolate(&w.rcont, theta, &mut w.ytmp);
                    sample(next_sample, grid[next_sample], &w.ytmp)?;
                    next_sample += 1;
                }
                std::mem::swap(&mut y, &mut w.ynew);
                w.k.swap(0, 6);
                t = t_new;
                // proportional-integral control damps step-size oscillation
                // at the stability boundary
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-PI_ALPHA) * err_old.powf(PI_BETA)).clamp(0.2, 5.0) };
                err_old = err.max(1e-4);
                if !last || fac < 1.0 {
                    h = hh * fac;
                }
            } else {
                stats.rejected += 1;
                h = hh * (0.9 * err.powf(-PI_ALPHA)).clamp(0.1, 0.9);
            }
            if h < 1e-13 * t.abs().max(1.0) {
                return Err(Error::Stiffness { time: t, step: h });
            }
        }
    }
    while next_sample < grid.len() {
        sample(next_sample, grid[next_sample], &y)?;
        next_sample += 1;
    }
    Ok((y, stats))
}

fn initial_step(y: &[C64], f: &[C64], tol: Tolerances, span: f64) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (a, b) in y.iter().zip(f) {
        let sc = tol.atol + tol.rtol * a.norm();
        d0 = d0.max(a.norm() / sc);
        d1 = d1.max(b.norm() / sc);
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span).max(1e-10)
}

/// One Dormand-Prince step. Stage times are clamped below `edge` so a step
/// ending on a cut sees the generator of its own segment.
fn trial_step<E: MasterEquation + ?Sized>(eq: &mut E, t: f64, h: f64, edge: f64, y: &[C64], w: &mut Work, tol: Tolerances) -> f64 {
    let [k1, k2, k3, k4, k5, k6, k7] = &mut w.k;
    let at = |c: f64| (t + c * h).min(edge);
    combo(&mut w.ytmp, y, h, &[(A21, k1)]);
    eq.derivative(at(C2), &w.ytmp, k2);
    combo(&mut w.ytmp, y, h, &[(A31, k1), (A32, k2)]);
    eq.derivative(at(C3), &w.ytmp, k3);
    combo(&mut w.ytmp, y, h, &[(A41, k1), (A42, k2), (A43, k3)]);
    eq.derivative(at(C4), &w.ytmp, k4);
    combo(&mut w.ytmp, y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
    eq.derivative(at(C5), &w.ytmp, k5);
    combo(&mut w.ytmp, y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]);
    eq.derivative(at(1.0), &w.ytmp, k6);
    combo(&mut w.ynew, y, h, &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)]);
    eq.derivative(at(1.0), &w.ynew, k7);
    let mut err: f64 = 0.0;
    for i in 0..y.len() {
        let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        let sc = tol.atol + tol.rtol * y[i].norm().max(w.ynew[i].norm());
        err = err.max(e.norm() / sc);
    }
    err
}

fn fill_dense(y: &[C64], h: f64, w: &mut Work) {
    let [k1, _k2, k3, k4, k5, k6, k7] = &w.k;
    let [r1, r2, r3, r4, r5] = &mut w.rcont;
    for i in 0..y.len() {
        let dy = w.ynew[i] - y[i];
        let bspl = k1[i] * h - dy;
        r1[i] = y[i];
        r2[i] = dy;
        r3[i] = bspl;
        r4[i] = dy - k7[i] * h - bspl;
        r5[i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
    }
}

fn interpolate(r: &[Vec<C64>; 5], theta: f64, out: &mut [C64]) {
    let t1 = 1.0 - theta;
    for i in 0..out.len() {
        out[i] = r[0][i] + (r[1][i] + (r[2][i] + (r[3][i] + r[4][i] * t1) * theta) * t1) * theta;
    }
}
