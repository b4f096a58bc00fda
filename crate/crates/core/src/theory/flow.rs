//! The depth-limit covariance flow and its Euler discretization.
//!
//! With a normalized scaling the width-first kernel follows, in depth time
//! `t in [0, 1]`,
//!
//! `dq/dt = F(t, q) = (e^{t/2} / 2) zeta f(q / (zeta e^{t/2}))`,
//!
//! where `zeta = sqrt(q0_aa q0_bb)`. The diagonal solves to `q0 e^{t/2}`, which
//! is what turns the usual `f(c)/c * q` right-hand side into this form without
//! the removable singularity at `c = 0`.

use serde::Serialize;

use super::dual::{clamp_correlation, relu_dual_unchecked};
use super::kernel::KernelTriple;
use crate::error::{Error, Result};
use crate::scaling::ScalingSequence;

/// Default RK4 step.
pub const DEFAULT_FLOW_STEP: f64 = 1e-5;

/// Right-hand side of the off-diagonal flow for a given `zeta`.
#[derive(Debug, Clone, Copy)]
pub struct FlowField {
    zeta: f64,
}

impl FlowField {
    pub fn new(q0: &KernelTriple) -> Self {
        FlowField { zeta: q0.scale() }
    }

    /// `F(t, q)`; the second value flags a clamped correlation.
    #[inline]
    pub fn eval(&self, t: f64, q: f64) -> (f64, bool) {
        let growth = (0.5 * t).exp();
        let (c, flagged) = clamp_correlation(q / (self.zeta * growth));
        (0.5 * growth * self.zeta * relu_dual_unchecked(c), flagged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSolution {
    pub t_grid: Vec<f64>,
    pub values: Vec<KernelTriple>,
    pub step: f64,
    pub clamp_events: usize,
}

impl FlowSolution {
    pub fn last(&self) -> KernelTriple {
        *self.values.last().unwrap()
    }

    /// Value at an arbitrary `t` in the solved range, by cubic Hermite
    /// interpolation of the off-diagonal (using `F` for the slopes) and the
    /// analytic diagonal.
    pub fn value_at(&self, t: f64) -> Result<KernelTriple> {
        let t0 = self.t_grid[0];
        let t_end = *self.t_grid.last().unwrap();
        if !(t >= t0 - 1e-12 && t <= t_end + 1e-12) {
            return Err(Error::domain(format!("t = {t} outside the solved range [{t0}, {t_end}]")));
        }
        let t = t.clamp(t0, t_end);
        let q0 = self.values[0];
        let field = FlowField::new(&q0);
        let growth = (0.5 * t).exp();
        let diag = |x: f64| x * growth;

        // grid is uniform except possibly the final interval
        let k = (((t - t0) / self.step).floor() as usize).min(self.t_grid.len() - 2);
        let (ta, tb) = (self.t_grid[k], self.t_grid[k + 1]);
        let (ya, yb) = (self.values[k].q_ab, self.values[k + 1].q_ab);
        let h = tb - ta;
        let s = if h > 0.0 { (t - ta) / h } else { 0.0 };
        let (da, _) = field.eval(ta, ya);
        let (db, _) = field.eval(tb, yb);
        let s2 = s * s;
        let s3 = s2 * s;
        let q_ab = (2.0 * s3 - 3.0 * s2 + 1.0) * ya
            + (s3 - 2.0 * s2 + s) * h * da
            + (-2.0 * s3 + 3.0 * s2) * yb
            + (s3 - s2) * h * db;
        Ok(KernelTriple::new(diag(q0.q_aa), q_ab, diag(q0.q_bb)))
    }

    /// CSV rows `t, q_aa, q_ab, q_bb, c`.
    pub fn rows(&self) -> impl Iterator<Item = (f64, KernelTriple)> + '_ {
        self.t_grid.iter().copied().zip(self.values.iter().copied())
    }
}

/// Fixed-step classical Runge-Kutta solution of the flow on `[0, t_end]`.
pub fn covariance_flow(q0: KernelTriple, step: f64, t_end: f64) -> Result<FlowSolution> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("step", format!("must be positive, got {step}")));
    }
    if !(t_end > 0.0 && t_end <= 1.0 + 1e-12) {
        return Err(Error::domain(format!("t_end must lie in (0, 1], got {t_end}")));
    }
    if !(q0.q_aa > 0.0 && q0.q_bb > 0.0) {
        return Err(Error::domain("initial kernel needs a positive diagonal"));
    }
    let field = FlowField::new(&q0);
    let n_steps = ((t_end / step) - 1e-9).ceil().max(1.0) as usize;

    let mut t_grid = Vec::with_capacity(n_steps + 1);
    let mut values = Vec::with_capacity(n_steps + 1);
    t_grid.push(0.0);
    values.push(q0);

    let mut clamp_events = 0usize;
    let mut f = |t: f64, q: f64| {
        let (v, flagged) = field.eval(t, q);
        clamp_events += flagged as usize;
        v
    };

    let mut q = q0.q_ab;
    for k in 0..n_steps {
        let t = k as f64 * step;
        let t_next = if k + 1 == n_steps { t_end } else { (k + 1) as f64 * step };
        let h = t_next - t;
        let k1 = f(t, q);
        let k2 = f(t + 0.5 * h, q + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, q + 0.5 * h * k2);
        let k4 = f(t + h, q + h * k3);
        q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let growth = (0.5 * t_next).exp();
        t_grid.push(t_next);
        values.push(KernelTriple::new(q0.q_aa * growth, q, q0.q_bb * growth));
    }

    Ok(FlowSolution {
        t_grid,
        values,
        step,
        clamp_events,
    })
}

/// Flow value at `t = 1`.
pub fn flow_endpoint(q0: KernelTriple, step: f64) -> Result<KernelTriple> {
    Ok(covariance_flow(q0, step, 1.0)?.last())
}

/// Euler iterates `q^E_l = q^E_{l-1} + alpha[l, L]^2 F(t_{l-1}, q^E_{l-1})` on the
/// time grid `t_l` given by the partial energies of a normalized sequence.
///
/// Returns `(t_l, q^E_l)` for `l = 0..=L`.
pub fn euler_trace(seq: &ScalingSequence, depth: usize, q0: KernelTriple) -> Result<Vec<(f64, f64)>> {
    if !seq.is_normalized_at(depth, seq.default_tol())? {
        return Err(Error::domain(format!(
            "Euler scheme needs a normalized sequence at L = {depth}"
        )));
    }
    let grid = seq.partial_energies(depth)?;
    let steps = seq.alphas_sq(depth)?;
    let field = FlowField::new(&q0);
    let mut q = q0.q_ab;
    let mut out = Vec::with_capacity(depth + 1);
    out.push((0.0, q));
    for (l, a2) in steps.iter().enumerate() {
        q += a2 * field.eval(grid[l], q).0;
        out.push((grid[l + 1], q));
    }
    Ok(out)
}
