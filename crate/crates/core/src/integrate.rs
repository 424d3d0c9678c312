//! Adaptive Dormand–Prince 5(4) integration of autonomous systems.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("trajectory left the guard region (|state| = {norm:.3e} > {guard:.3e}) at t = {t}")]
    GuardEscape { t: f64, norm: f64, guard: f64 },
    #[error("step size underflow (h = {h:.3e}) at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {steps} exhausted at t = {t}")]
    StepBudget { t: f64, steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// Local error tolerance (mixed absolute/relative).
    pub tol: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { tol: 1e-13, h_min: 1e-12, max_steps: 200_000 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Trajectory<const N: usize> {
    pub state: [f64; N],
    pub steps: usize,
    pub rejected: usize,
}

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
// Differences between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        *o += h * acc;
    }
    out
}

/// Integrate `y' = field(y)` from `y0` over signed duration `t`.
///
/// `guard(state)` returns the norm compared against `guard_radius`; the
/// integration fails as soon as it is exceeded.
pub fn integrate<const N: usize, F, G>(
    field: F,
    y0: [f64; N],
    t: f64,
    control: StepControl,
    guard: G,
    guard_radius: f64,
) -> Result<Trajectory<N>, IntegrationError>
where
    F: Fn(&[f64; N]) -> [f64; N],
    G: Fn(&[f64; N]) -> f64,
{
    let mut y = y0;
    if t == 0.0 {
        return Ok(Trajectory { state: y, steps: 0, rejected: 0 });
    }
    let dir = t.signum();
    let total = t.abs();
    let mut done = 0.0;
    let mut h = (0.1_f64).min(total);
    let mut k1 = field(&y);
    let mut steps = 0;
    let mut rejected = 0;
    while done < total {
        if steps + rejected >= control.max_steps {
            return Err(IntegrationError::StepBudget { t: dir * done, steps: control.max_steps });
        }
        let last = done + h >= total;
        if last {
            h = total - done;
        }
        let hs = dir * h;
        let k2 = field(&axpy(&y, hs, &[(A21, &k1)]));
        let k3 = field(&axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = field(&axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = field(&axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = field(&axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = axpy(&y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = field(&y_new);
        let mut err: f64 = 0.0;
        for i in 0..N {
            let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = control.tol * (1.0 + y[i].abs().max(y_new[i].abs()));
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            if h <= control.h_min {
                return Err(IntegrationError::NonFinite { t: dir * done });
            }
            h *= 0.25;
            rejected += 1;
            continue;
        }
        if err <= 1.0 {
            done = if last { total } else { done + h };
            y = y_new;
            k1 = k7;
            steps += 1;
            let norm = guard(&y);
            if norm > guard_radius {
                return Err(IntegrationError::GuardEscape { t: dir * done, norm, guard: guard_radius });
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            rejected += 1;
            if h < control.h_min {
                return Err(IntegrationError::StepUnderflow { t: dir * done, h });
            }
        }
    }
    Ok(Trajectory { state: y, steps, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_guard<const N: usize>(_: &[f64; N]) -> f64 {
        0.0
    }

    #[test]
    fn harmonic_oscillator_one_period() {
        let field = |y: &[f64; 2]| [y[1], -y[0]];
        let tr = integrate(field, [1.0, 0.0], 2.0 * std::f64::consts::PI, StepControl::default(), no_guard, 1.0).unwrap();
        assert!((tr.state[0] - 1.0).abs() < 1e-11);
        assert!(tr.state[1].abs() < 1e-11);
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let field = |y: &[f64; 2]| [y[1] * y[1] - 0.3, y[0].sin()];
        let c = StepControl::default();
        let fwd = integrate(field, [0.4, -0.2], 1.0, c, no_guard, 1.0).unwrap();
        let back = integrate(field, fwd.state, -1.0, c, no_guard, 1.0).unwrap();
        assert!((back.state[0] - 0.4).abs() < 1e-12);
        assert!((back.state[1] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn guard_escape_reported() {
        let field = |y: &[f64; 1]| [y[0] * y[0]];
        let err = integrate(field, [1.0], 2.0, StepControl::default(), |y| y[0].abs(), 10.0).unwrap_err();
        assert!(matches!(err, IntegrationError::GuardEscape { .. }));
    }
}
