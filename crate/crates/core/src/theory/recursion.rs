//! Infinite-width (width-first) kernel recursions.

use serde::Serialize;

use super::dual::{clamp_correlation, relu_dual, relu_dual_unchecked};
use super::kernel::KernelTriple;
use crate::error::{Error, Result};
use crate::scaling::{ScalingSequence, SeriesSpec};

/// Kernel values per layer plus the number of correlations that had to be
/// clamped by more than the tolerated slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelTrace {
    pub values: Vec<KernelTriple>,
    pub clamp_events: usize,
}

impl KernelTrace {
    pub fn last(&self) -> KernelTriple {
        *self.values.last().expect("trace holds at least the input layer")
    }
}

#[inline]
fn variance_step(prev: f64, alpha_sq: f64) -> f64 {
    prev * (1.0 + 0.5 * alpha_sq)
}

/// `E[(Y_l^1)^2] = (||a||^2 / d) prod_{k <= l} (1 + alpha[k, L]^2 / 2)` for `l = 0..=L`.
pub fn variance_profile(seq: &ScalingSequence, depth: usize, norm_sq_over_d: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(depth + 1);
    out.push(norm_sq_over_d);
    for a2 in seq.alphas_sq(depth)? {
        let prev = *out.last().unwrap();
        out.push(variance_step(prev, a2));
    }
    Ok(out)
}

/// Limit of the auxiliary-process kernel as width grows, at fixed depth:
///
/// `q[l] = q[l-1] + alpha^2 sqrt(q_{l-1}(a)/2) sqrt(q_{l-1}(b)/2) f(c[l-1])`.
///
/// The diagonal coincides with [`variance_profile`] bit for bit.
pub fn infinite_width_trace(seq: &ScalingSequence, depth: usize, q0: KernelTriple) -> Result<KernelTrace> {
    let mut values = Vec::with_capacity(depth + 1);
    values.push(q0);
    let mut clamp_events = 0;
    let mut q = q0;
    for a2 in seq.alphas_sq(depth)? {
        let (c, flagged) = q.clamped_correlation();
        clamp_events += flagged as usize;
        let vol = (0.5 * q.q_aa).sqrt() * (0.5 * q.q_bb).sqrt();
        q = KernelTriple {
            q_aa: variance_step(q.q_aa, a2),
            q_ab: q.q_ab + a2 * vol * relu_dual_unchecked(c),
            q_bb: variance_step(q.q_bb, a2),
        };
        values.push(q);
    }
    Ok(KernelTrace { values, clamp_events })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesLimit {
    pub kernel: KernelTriple,
    /// Number of series terms applied.
    pub terms: usize,
    /// Bound on the distance to the true limit when iteration stopped.
    pub error_bound: f64,
    pub clamp_events: usize,
}

const MAX_SERIES_TERMS: usize = 1 << 31;

/// Limit kernel of a depth-independent scaling `alpha[l, L] = zeta_l` as `L -> inf`.
///
/// Iterates `q_ab += (1/2) zeta_l^2 f(c) sqrt(q_aa q_bb)` (the `f(c)/c * q_ab` form
/// with the `c` cancelled) until the remaining increments are provably below
/// `tol`: each is at most `(1/2) zeta^2 sqrt(q_aa q_bb)` and the diagonal can grow
/// by at most `exp(tail / 2)` more.
pub fn series_limit_kernel(series: &SeriesSpec, q0: KernelTriple, tol: f64) -> Result<SeriesLimit> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    if !series.is_square_summable() {
        return Err(Error::domain(
            "series is not square-summable; the limit kernel does not exist",
        ));
    }
    let bound = |q: &KernelTriple, terms: usize| {
        let tail = series.tail_sq_bound(terms).unwrap_or(f64::INFINITY);
        0.5 * q.scale() * (0.5 * tail).exp() * tail
    };

    // the bound only grows with q, so this is a certificate of infeasibility
    let floor = series.tail_sq_bound(MAX_SERIES_TERMS).unwrap_or(f64::INFINITY) * 0.5 * q0.scale();
    if floor >= tol {
        return Err(Error::domain(format!(
            "series tail decays too slowly to certify tol {tol} within {MAX_SERIES_TERMS} terms"
        )));
    }

    let mut q = q0;
    let mut clamp_events = 0;
    let mut terms = 0;
    let mut err = bound(&q, 0);
    while err >= tol {
        if terms >= MAX_SERIES_TERMS {
            return Err(Error::domain(format!(
                "series limit did not reach tol {tol} within {MAX_SERIES_TERMS} terms (bound {err})"
            )));
        }
        terms += 1;
        let z2 = series.zeta_sq(terms);
        let (c, flagged) = q.clamped_correlation();
        clamp_events += flagged as usize;
        q = KernelTriple {
            q_aa: variance_step(q.q_aa, z2),
            q_ab: q.q_ab + 0.5 * z2 * relu_dual_unchecked(c) * q.scale(),
            q_bb: variance_step(q.q_bb, z2),
        };
        err = bound(&q, terms);
    }
    Ok(SeriesLimit {
        kernel: q,
        terms,
        error_bound: err,
        clamp_events,
    })
}

/// Width-first correlation map of a He-initialized ReLU MLP: `c_l = f(c_{l-1})`.
pub fn mlp_correlation_trace(c0: f64, depth: usize) -> Result<Vec<f64>> {
    let mut c = relu_dual(c0).map(|_| c0.clamp(-1.0, 1.0))?;
    let mut out = Vec::with_capacity(depth + 1);
    out.push(c);
    for _ in 0..depth {
        c = relu_dual_unchecked(c);
        out.push(c);
    }
    Ok(out)
}

/// `E[phi_L(Z)^2]` for the shaped ReLU `phi_L(z) = z + relu(z)/sqrt(L)`.
pub fn shaped_relu_gain(depth: usize) -> f64 {
    let l = depth as f64;
    1.0 + 1.0 / l.sqrt() + 0.5 / l
}

/// `E[phi_L(u) phi_L(v)]` for centered Gaussians with covariance `q`.
fn shaped_pair_moment(q: &KernelTriple, depth: usize, clamp_events: &mut usize) -> f64 {
    let (c, flagged) = clamp_correlation(q.correlation());
    *clamp_events += flagged as usize;
    let l = depth as f64;
    // E[uv] + (E[u relu v] + E[relu u v]) / sqrt(L) + E[relu u relu v] / L
    q.q_ab * (1.0 + 1.0 / l.sqrt()) + 0.5 * q.scale() * relu_dual_unchecked(c) / l
}

fn trace_by(
    q0: KernelTriple,
    depth: usize,
    mut step: impl FnMut(&KernelTriple, &mut usize) -> KernelTriple,
) -> KernelTrace {
    let mut values = Vec::with_capacity(depth + 1);
    values.push(q0);
    let mut clamp_events = 0;
    let mut q = q0;
    for _ in 0..depth {
        q = step(&q, &mut clamp_events);
        values.push(q);
    }
    KernelTrace { values, clamp_events }
}

/// Width-first kernel of the ReLU MLP with `N(0, 2/n)` hidden weights.
pub fn mlp_kernel_trace(q0: KernelTriple, depth: usize) -> KernelTrace {
    trace_by(q0, depth, |q, ev| {
        let (c, flagged) = q.clamped_correlation();
        *ev += flagged as usize;
        KernelTriple::new(q.q_aa, q.scale() * relu_dual_unchecked(c), q.q_bb)
    })
}

/// Width-first kernel of the shaped-ReLU MLP whose hidden weights have
/// variance `1 / (n * shaped_relu_gain(L))`, so the diagonal is preserved.
pub fn shaped_mlp_kernel_trace(q0: KernelTriple, depth: usize) -> KernelTrace {
    let gain = shaped_relu_gain(depth);
    trace_by(q0, depth, |q, ev| {
        let ab = shaped_pair_moment(q, depth, ev) / gain;
        KernelTriple::new(q.q_aa, ab, q.q_bb)
    })
}

/// Width-first kernel of `Y_l = beta Y_{l-1} + sqrt(1 - beta^2) W phi_L(Y_{l-1})`
/// with `N(0, 1/n)` weights.
pub fn shaped_resnet_kernel_trace(q0: KernelTriple, depth: usize, beta: f64) -> KernelTrace {
    let b2 = beta * beta;
    let gain = shaped_relu_gain(depth);
    trace_by(q0, depth, |q, ev| {
        let ab = b2 * q.q_ab + (1.0 - b2) * shaped_pair_moment(q, depth, ev);
        let diag = |x: f64| b2 * x + (1.0 - b2) * x * gain;
        KernelTriple::new(diag(q.q_aa), ab, diag(q.q_bb))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_profile_examples() {
        let u = ScalingSequence::normalized_uniform();
        assert_eq!(variance_profile(&u, 0, 1.0).unwrap(), vec![1.0]);
        assert_eq!(variance_profile(&u, 2, 1.0).unwrap(), vec![1.0, 1.25, 1.5625]);
    }

    #[test]
    fn trace_diagonal_is_variance_profile_bitwise() {
        let seqs = [
            ScalingSequence::normalized_uniform(),
            ScalingSequence::inverse_power(1.0).unwrap(),
            ScalingSequence::log_damped(),
        ];
        let q0 = KernelTriple::new(0.7, 0.2, 1.3);
        for s in &seqs {
            let t = infinite_width_trace(s, 200, q0).unwrap();
            let va = variance_profile(s, 200, 0.7).unwrap();
            let vb = variance_profile(s, 200, 1.3).unwrap();
            for (k, triple) in t.values.iter().enumerate() {
                assert_eq!(triple.q_aa.to_bits(), va[k].to_bits());
                assert_eq!(triple.q_bb.to_bits(), vb[k].to_bits());
            }
        }
    }

    #[test]
    fn equal_inputs_follow_variance() {
        let u = ScalingSequence::normalized_uniform();
        let t = infinite_width_trace(&u, 64, KernelTriple::new(2.0, 2.0, 2.0)).unwrap();
        let v = variance_profile(&u, 64, 2.0).unwrap();
        for (k, triple) in t.values.iter().enumerate() {
            assert!((triple.q_ab - v[k]).abs() <= 1e-13 * v[k]);
        }
        assert_eq!(t.clamp_events, 0);
    }

    #[test]
    fn zero_depth_keeps_input_kernel() {
        let q0 = KernelTriple::new(1.0, 0.3, 1.0);
        let t = infinite_width_trace(&ScalingSequence::normalized_uniform(), 0, q0).unwrap();
        assert_eq!(t.values, vec![q0]);
    }

    #[test]
    fn series_limit_trivial_cases() {
        let q0 = KernelTriple::new(1.0, 0.5, 1.0);
        let z = series_limit_kernel(&SeriesSpec::Explicit(vec![]), q0, 1e-9).unwrap();
        assert_eq!(z.kernel, q0);
        assert_eq!(z.terms, 0);

        let one = series_limit_kernel(&SeriesSpec::Explicit(vec![1.0]), KernelTriple::unit(1.0), 1e-9).unwrap();
        assert_eq!(one.kernel.q_ab, 1.5);
        assert_eq!(one.kernel.q_aa, 1.5);
    }

    #[test]
    fn log_damped_tail_is_too_slow_for_tight_tolerances() {
        // sum_{l > L} 1/(l log^2 l) ~ 1/log L: no feasible truncation certifies 1e-3
        let r = series_limit_kernel(&SeriesSpec::LogDamped, KernelTriple::unit(0.5), 1e-3);
        assert!(matches!(r, Err(Error::Domain(_))));
        assert!(series_limit_kernel(&SeriesSpec::LogDamped, KernelTriple::unit(0.5), 0.5).is_ok());
    }

    #[test]
    fn series_limit_rejects_divergent() {
        let q0 = KernelTriple::unit(0.5);
        assert!(series_limit_kernel(&SeriesSpec::InversePower { p: 0.5 }, q0, 1e-3).is_err());
        assert!(series_limit_kernel(&SeriesSpec::InversePower { p: 1.0 }, q0, 0.0).is_err());
    }

    #[test]
    fn series_limit_is_cauchy() {
        let q0 = KernelTriple::unit(0.5);
        for (s, tol) in [
            (SeriesSpec::InversePower { p: 1.0 }, 1e-4),
            (SeriesSpec::InversePower { p: 0.8 }, 1e-3),
            (SeriesSpec::Explicit(vec![0.5; 40]), 1e-6),
        ] {
            let a = series_limit_kernel(&s, q0, tol).unwrap();
            let b = series_limit_kernel(&s, q0, tol / 10.0).unwrap();
            assert!((a.kernel.q_ab - b.kernel.q_ab).abs() < tol);
            assert!(a.error_bound < tol);
        }
    }

    #[test]
    fn mlp_correlation_examples() {
        assert!(mlp_correlation_trace(1.0, 50).unwrap().iter().all(|&c| c == 1.0));
        let one = mlp_correlation_trace(0.5, 1).unwrap();
        assert!((one[1] - 0.608998).abs() < 1e-6);
        assert!(mlp_correlation_trace(1.1, 3).is_err());
    }

    #[test]
    fn shaped_traces_keep_mlp_diagonal() {
        let q0 = KernelTriple::new(0.4, 0.1, 0.9);
        let t = shaped_mlp_kernel_trace(q0, 128);
        let last = t.last();
        assert!((last.q_aa - 0.4).abs() < 1e-12);
        assert!((last.q_bb - 0.9).abs() < 1e-12);
        assert!(last.satisfies_cauchy_schwarz(1e-12));
        // correlation stays away from one, unlike the plain ReLU MLP
        assert!(last.correlation() < 0.99);
        let m = mlp_kernel_trace(q0, 4096).last();
        assert!(m.correlation() > 0.999);
    }

    #[test]
    fn shaped_resnet_diagonal_growth() {
        let q0 = KernelTriple::unit(0.5);
        let depth = 16;
        let t = shaped_resnet_kernel_trace(q0, depth, 0.5);
        let per_layer = 0.25 + 0.75 * shaped_relu_gain(depth);
        let expect = per_layer.powi(depth as i32);
        assert!((t.last().q_aa - expect).abs() < 1e-12 * expect);
    }
}
