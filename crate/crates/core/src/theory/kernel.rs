use serde::{Deserialize, Serialize};

use super::dual::clamp_correlation;
use crate::error::{Error, Result};
use crate::rng;

/// `(q(a,a), q(a,b), q(b,b))` at one layer or time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelTriple {
    pub q_aa: f64,
    pub q_ab: f64,
    pub q_bb: f64,
}

impl KernelTriple {
    pub fn new(q_aa: f64, q_ab: f64, q_bb: f64) -> Self {
        KernelTriple { q_aa, q_ab, q_bb }
    }

    /// Unit diagonal with off-diagonal `c`.
    pub fn unit(c: f64) -> Self {
        KernelTriple::new(1.0, c, 1.0)
    }

    /// `sqrt(q_aa q_bb)`.
    pub fn scale(&self) -> f64 {
        (self.q_aa * self.q_bb).sqrt()
    }

    /// Raw correlation; may exceed `[-1, 1]` by rounding.
    pub fn correlation(&self) -> f64 {
        self.q_ab / self.scale()
    }

    pub fn clamped_correlation(&self) -> (f64, bool) {
        clamp_correlation(self.correlation())
    }

    /// `|q_ab| <= sqrt(q_aa q_bb) (1 + rel)`.
    pub fn satisfies_cauchy_schwarz(&self, rel: f64) -> bool {
        self.q_aa > 0.0 && self.q_bb > 0.0 && self.q_ab.abs() <= self.scale() * (1.0 + rel)
    }
}

/// Two nonzero inputs in `R^d` with a nonzero inner product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPair {
    a: Vec<f64>,
    b: Vec<f64>,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl InputPair {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::invalid("d", "input dimension must be at least 1"));
        }
        if a.len() != b.len() {
            return Err(Error::invalid(
                "inputs",
                format!("length mismatch: {} vs {}", a.len(), b.len()),
            ));
        }
        if a.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(Error::invalid("inputs", "entries must be finite"));
        }
        if a.iter().all(|&x| x == 0.0) || b.iter().all(|&x| x == 0.0) {
            return Err(Error::invalid("inputs", "inputs must be nonzero"));
        }
        if dot(&a, &b) == 0.0 {
            return Err(Error::invalid("inputs", "inputs must have a nonzero inner product"));
        }
        Ok(InputPair { a, b })
    }

    /// Two vectors in `R^2` with `q_aa = q_bb = 1` and `q_ab = c0`.
    pub fn with_correlation(c0: f64) -> Result<Self> {
        if !(c0.abs() <= 1.0) || c0 == 0.0 {
            return Err(Error::invalid("c0", format!("need 0 < |c0| <= 1, got {c0}")));
        }
        let s = 2f64.sqrt();
        InputPair::new(
            vec![s, 0.0],
            vec![s * c0, s * (1.0 - c0 * c0).max(0.0).sqrt()],
        )
    }

    /// `a, b ~ N(0, I_d)` rescaled to unit Euclidean norm.
    pub fn sample_unit(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "input dimension must be at least 1"));
        }
        for attempt in 0u64.. {
            let mut r = rng::layer_stream(seed, attempt, rng::stream::INPUTS);
            let mut draw = || {
                let mut v = vec![0.0; d];
                rng::fill_normal(&mut r, &mut v);
                let norm = dot(&v, &v).sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                v
            };
            let (a, b) = (draw(), draw());
            if let Ok(p) = InputPair::new(a, b) {
                return Ok(p);
            }
        }
        unreachable!()
    }

    /// Both inputs multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        InputPair::new(
            self.a.iter().map(|x| x * s).collect(),
            self.b.iter().map(|x| x * s).collect(),
        )
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn norm_a(&self) -> f64 {
        dot(&self.a, &self.a).sqrt()
    }

    pub fn norm_b(&self) -> f64 {
        dot(&self.b, &self.b).sqrt()
    }

    /// `||a|| ||b|| / d`.
    pub fn zeta(&self) -> f64 {
        self.norm_a() * self.norm_b() / self.dim() as f64
    }

    /// Initial kernel `q_0 = (<a,a>, <a,b>, <b,b>) / d`.
    pub fn kernel(&self) -> KernelTriple {
        let d = self.dim() as f64;
        KernelTriple::new(
            dot(&self.a, &self.a) / d,
            dot(&self.a, &self.b) / d,
            dot(&self.b, &self.b) / d,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_validation() {
        assert!(InputPair::new(vec![], vec![]).is_err());
        assert!(InputPair::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(InputPair::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(InputPair::new(vec![1.0, 0.0], vec![0.0, 2.0]).is_err());
        assert!(InputPair::new(vec![1.0, 0.0], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn derived_quantities() {
        let p = InputPair::new(vec![3.0, 4.0], vec![4.0, 3.0]).unwrap();
        let k = p.kernel();
        assert_eq!(k, KernelTriple::new(12.5, 12.0, 12.5));
        assert_eq!(p.zeta(), 12.5);
        assert!((k.correlation() - 0.96).abs() < 1e-15);
        assert!(k.satisfies_cauchy_schwarz(0.0));
    }

    #[test]
    fn with_correlation_has_unit_diagonal() {
        let k = InputPair::with_correlation(0.5).unwrap().kernel();
        assert!((k.q_aa - 1.0).abs() < 1e-15);
        assert!((k.q_bb - 1.0).abs() < 1e-15);
        assert!((k.q_ab - 0.5).abs() < 1e-15);
        assert!(InputPair::with_correlation(0.0).is_err());
        assert!(InputPair::with_correlation(1.5).is_err());
    }

    #[test]
    fn sampled_inputs_are_unit_and_reproducible() {
        let p = InputPair::sample_unit(30, 42).unwrap();
        assert!((p.norm_a() - 1.0).abs() < 1e-14);
        assert!((p.norm_b() - 1.0).abs() < 1e-14);
        assert_eq!(p, InputPair::sample_unit(30, 42).unwrap());
        assert_ne!(p, InputPair::sample_unit(30, 43).unwrap());
        let k = p.kernel();
        assert!((k.q_aa - 1.0 / 30.0).abs() < 1e-15);
    }
}
