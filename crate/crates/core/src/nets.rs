//! Finite-width Monte Carlo forward passes.
//!
//! Both inputs of a pair are pushed through the same sampled network, and the
//! empirical kernel `(|Y(a)|^2, <Y(a),Y(b)>, |Y(b)|^2) / n` is recorded at every
//! layer. Weights are never stored as a matrix: each layer only ever needs the
//! products `W v` for the (at most three) post-activation vectors in flight.
//!
//! Two samplers produce those products:
//!
//! * [`WeightSampler::Streaming`] draws every row `w_i` of `W` from its own
//!   counter-based stream, applies it to all vectors, and drops it. Cost
//!   `O(n^2)` per layer, memory `O(n * block_rows)`.
//! * [`WeightSampler::Projected`] draws `(w_i . v_1, ..., w_i . v_k)` directly
//!   as a Gaussian vector with covariance `Gram(v) / n`. Because `W_l` is
//!   independent of everything computed before layer `l` and its rows are
//!   i.i.d., this reproduces the joint law of the whole trajectory exactly, at
//!   `O(n)` cost per layer.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::scaling::ScalingSequence;
use crate::theory::{shaped_relu_gain, variance_profile, InputPair, KernelTriple};

/// Forward passes abort once a pre-activation norm exceeds this.
pub const INSTABILITY_THRESHOLD: f64 = 1e150;

/// Default main-branch factor of the shaped ResNet.
pub const DEFAULT_BETA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "arch", rename_all = "kebab-case")]
pub enum Architecture {
    /// `Y_l = Y_{l-1} + alpha[l, L] W_l relu(Y_{l-1})`, `W_l ~ N(0, 1/n)`.
    ScaledResNet { scaling: ScalingSequence },
    /// `Y_l = W_l relu(Y_{l-1})`, `W_l ~ N(0, 2/n)`.
    Mlp,
    /// `Y_l = W_l phi_L(Y_{l-1})` with `phi_L(z) = z + relu(z)/sqrt(L)` and
    /// `W_l ~ N(0, 1/(n E[phi_L(Z)^2]))`.
    ShapedMlp,
    /// `Y_l = beta Y_{l-1} + sqrt(1 - beta^2) W_l phi_L(Y_{l-1})`, `W_l ~ N(0, 1/n)`.
    ShapedResNet { beta: f64 },
}

impl Architecture {
    pub fn scaled_resnet(scaling: ScalingSequence) -> Self {
        Architecture::ScaledResNet { scaling }
    }

    pub fn shaped_resnet(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid("beta", format!("must lie in (0, 1), got {beta}")));
        }
        Ok(Architecture::ShapedResNet { beta })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::ScaledResNet { .. } => "scaled-resnet",
            Architecture::Mlp => "mlp",
            Architecture::ShapedMlp => "shaped-mlp",
            Architecture::ShapedResNet { .. } => "shaped-resnet",
        }
    }

    pub fn uses_shaped_relu(&self) -> bool {
        matches!(self, Architecture::ShapedMlp | Architecture::ShapedResNet { .. })
    }

    /// Variance of hidden-layer weight entries times `n`.
    pub fn hidden_variance_times_width(&self, depth: usize) -> f64 {
        match self {
            Architecture::ScaledResNet { .. } | Architecture::ShapedResNet { .. } => 1.0,
            Architecture::Mlp => 2.0,
            Architecture::ShapedMlp => 1.0 / shaped_relu_gain(depth),
        }
    }
}

/// ReLU, or the shaped ReLU `z + relu(z)/sqrt(L)` for the shaped architectures.
#[inline]
pub fn apply_activation(arch: &Architecture, z: f64, depth: usize) -> f64 {
    let relu = z.max(0.0);
    if arch.uses_shaped_relu() {
        z + relu / (depth as f64).sqrt()
    } else {
        relu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(tag = "sampler", rename_all = "kebab-case")]
pub enum WeightSampler {
    Streaming { block_rows: usize },
    #[default]
    Projected,
}

impl WeightSampler {
    pub fn streaming() -> Self {
        WeightSampler::Streaming { block_rows: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkSpec {
    pub arch: Architecture,
    pub width: usize,
    pub depth: usize,
    pub input_dim: usize,
    pub sampler: WeightSampler,
}

impl NetworkSpec {
    pub fn new(arch: Architecture, width: usize, depth: usize, input_dim: usize) -> Result<Self> {
        let spec = NetworkSpec {
            arch,
            width,
            depth,
            input_dim,
            sampler: WeightSampler::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_sampler(mut self, sampler: WeightSampler) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::invalid("n", "width must be at least 1"));
        }
        if self.depth == 0 {
            return Err(Error::invalid("L", "depth must be at least 1"));
        }
        if self.input_dim == 0 {
            return Err(Error::invalid("d", "input dimension must be at least 1"));
        }
        if let WeightSampler::Streaming { block_rows } = self.sampler {
            if block_rows == 0 {
                return Err(Error::invalid("block_rows", "must be at least 1"));
            }
        }
        match &self.arch {
            Architecture::ScaledResNet { scaling } => {
                scaling.validate()?;
                scaling.alphas(self.depth)?;
            }
            Architecture::ShapedResNet { beta } => {
                Architecture::shaped_resnet(*beta)?;
            }
            Architecture::Mlp | Architecture::ShapedMlp => {}
        }
        Ok(())
    }
}

/// Empirical kernels of one sampled network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialTrace {
    /// `q_{l,n}` for `l = 0..=L`.
    pub kernels: Vec<KernelTriple>,
    /// `Y_l^1(a)`, the first coordinate of the first input's pre-activation.
    pub first_coords: Vec<f64>,
    /// `|Y_l(a) - Ytilde_l(a)|^2 / n` per layer when the auxiliary process ran.
    pub deviation: Option<Vec<f64>>,
    /// First coordinate of `Ytilde_L(a)` when the auxiliary process ran.
    pub aux_first_coord: Option<f64>,
    /// Layers where `relu(Y_{l-1}(a))` vanished and the fallback direction was used.
    pub fallback_events: usize,
    pub seed: u64,
    pub spec: NetworkSpec,
}

impl TrialTrace {
    pub fn last(&self) -> KernelTriple {
        *self.kernels.last().unwrap()
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Computes `Z v_j` for a standard Gaussian matrix `Z` (layer `layer` of the
/// network keyed by `seed`) and each distinct vector `v_j`.
struct Projector {
    sampler: WeightSampler,
    row_buf: Vec<f64>,
}

impl Projector {
    fn new(sampler: WeightSampler) -> Self {
        Projector {
            sampler,
            row_buf: Vec::new(),
        }
    }

    /// `out[j][i] = sum_k Z[i, k] vs[j][k]`. Bitwise-equal vectors get bitwise-equal
    /// products.
    #[allow(clippy::needless_range_loop)]
    fn project(&mut self, seed: u64, layer: u64, vs: &[&[f64]], out: &mut [Vec<f64>]) {
        let n_rows = out[0].len();
        // map each vector to its first bitwise-equal representative
        let mut rep = [0usize; 3];
        let mut uniq: Vec<usize> = Vec::with_capacity(vs.len());
        for j in 0..vs.len() {
            match uniq.iter().position(|&u| vs[u] == vs[j]) {
                Some(p) => rep[j] = p,
                None => {
                    rep[j] = uniq.len();
                    uniq.push(j);
                }
            }
        }
        let k = uniq.len();

        match self.sampler {
            WeightSampler::Streaming { block_rows } => {
                let cols = vs[0].len();
                self.row_buf.resize(block_rows * cols, 0.0);
                let mut start = 0;
                while start < n_rows {
                    let end = (start + block_rows).min(n_rows);
                    for (r, row) in (start..end).zip(self.row_buf.chunks_exact_mut(cols)) {
                        let mut s = rng::layer_stream(seed, layer, r as u64);
                        rng::fill_normal(&mut s, row);
                    }
                    for (r, row) in (start..end).zip(self.row_buf.chunks_exact(cols)) {
                        for (u, &j) in uniq.iter().enumerate() {
                            out[u][r] = dot(row, vs[j]);
                        }
                    }
                    start = end;
                }
            }
            WeightSampler::Projected => {
                let chol = gram_cholesky(&uniq.iter().map(|&j| vs[j]).collect::<Vec<_>>());
                let mut s: ChaCha8Rng = rng::layer_stream(seed, layer, rng::stream::PROJECTED);
                let mut z = [0.0f64; 3];
                for r in 0..n_rows {
                    for zi in z.iter_mut().take(k) {
                        *zi = rng::normal(&mut s);
                    }
                    for u in 0..k {
                        let mut acc = 0.0;
                        for m in 0..=u {
                            acc += chol[u][m] * z[m];
                        }
                        out[u][r] = acc;
                    }
                }
            }
        }

        // expand representatives into the caller's slots (highest first so
        // sources are not overwritten)
        for j in (0..vs.len()).rev() {
            let src = rep[j];
            if src != j {
                let (lo, hi) = out.split_at_mut(j);
                hi[0].copy_from_slice(&lo[src]);
            }
        }
    }
}

/// Lower Cholesky factor of the Gram matrix of up to three vectors; columns
/// with a nonpositive pivot (numerically dependent vectors) are zeroed.
#[allow(clippy::needless_range_loop)]
fn gram_cholesky(vs: &[&[f64]]) -> [[f64; 3]; 3] {
    let k = vs.len();
    let mut g = [[0.0f64; 3]; 3];
    for i in 0..k {
        for j in 0..=i {
            g[i][j] = dot(vs[i], vs[j]);
        }
    }
    let mut l = [[0.0f64; 3]; 3];
    for j in 0..k {
        let mut d = g[j][j];
        for m in 0..j {
            d -= l[j][m] * l[j][m];
        }
        if d <= 1e-14 * g[j][j].max(f64::MIN_POSITIVE) {
            continue;
        }
        let piv = d.sqrt();
        l[j][j] = piv;
        for i in (j + 1)..k {
            let mut s = g[i][j];
            for m in 0..j {
                s -= l[i][m] * l[j][m];
            }
            l[i][j] = s / piv;
        }
    }
    l
}

struct Buffers {
    ya: Vec<f64>,
    yb: Vec<f64>,
    va: Vec<f64>,
    vb: Vec<f64>,
    dots: [Vec<f64>; 2],
}

impl Buffers {
    fn new(n: usize) -> Self {
        Buffers {
            ya: vec![0.0; n],
            yb: vec![0.0; n],
            va: vec![0.0; n],
            vb: vec![0.0; n],
            dots: [vec![0.0; n], vec![0.0; n]],
        }
    }

    fn kernel(&self) -> KernelTriple {
        let n = self.ya.len() as f64;
        KernelTriple::new(
            dot(&self.ya, &self.ya) / n,
            dot(&self.ya, &self.yb) / n,
            dot(&self.yb, &self.yb) / n,
        )
    }
}

fn check_spec(spec: &NetworkSpec, pair: &InputPair) -> Result<()> {
    spec.validate()?;
    if pair.dim() != spec.input_dim {
        return Err(Error::invalid(
            "d",
            format!("input pair has dimension {} but the network expects {}", pair.dim(), spec.input_dim),
        ));
    }
    Ok(())
}

fn input_layer(seed: u64, pair: &InputPair, buf: &mut Buffers) {
    let d = pair.dim();
    let scale = 1.0 / (d as f64).sqrt();
    let mut row = vec![0.0; d];
    for i in 0..buf.ya.len() {
        let mut s = rng::layer_stream(seed, 0, i as u64);
        rng::fill_normal(&mut s, &mut row);
        buf.ya[i] = scale * dot(&row, pair.a());
        buf.yb[i] = scale * dot(&row, pair.b());
    }
}

fn guard(layer: usize, k: &KernelTriple, n: usize) -> Result<()> {
    let worst = k.q_aa.max(k.q_bb);
    let norm = (worst * n as f64).sqrt();
    if !norm.is_finite() || norm > INSTABILITY_THRESHOLD {
        return Err(Error::Instability {
            layer,
            norm,
            threshold: INSTABILITY_THRESHOLD,
        });
    }
    Ok(())
}

/// Forward pass of both inputs through one sampled network.
pub fn simulate_pair(spec: &NetworkSpec, pair: &InputPair, seed: u64) -> Result<TrialTrace> {
    run(spec, pair, seed, false)
}

/// Scaled-ResNet forward pass co-propagated with the auxiliary process
/// `Ytilde_l = Ytilde_{l-1} + alpha sqrt(q_{l-1}(a)/2) G_l(a)`, where `G_l(a)` is
/// the normalized image `sqrt(n) W_l relu(Y_{l-1}(a)) / |relu(Y_{l-1}(a))|` under
/// the same weights. When `relu(Y_{l-1}(a))` vanishes, the unit vector
/// `e / sqrt(n)` stands in for the direction.
pub fn simulate_with_auxiliary(spec: &NetworkSpec, pair: &InputPair, seed: u64) -> Result<TrialTrace> {
    if !matches!(spec.arch, Architecture::ScaledResNet { .. }) {
        return Err(Error::domain(format!(
            "the auxiliary process is defined for the scaled ResNet only, not {}",
            spec.arch.name()
        )));
    }
    run(spec, pair, seed, true)
}

fn run(spec: &NetworkSpec, pair: &InputPair, seed: u64, with_aux: bool) -> Result<TrialTrace> {
    check_spec(spec, pair)?;
    let n = spec.width;
    let depth = spec.depth;
    let nf = n as f64;
    let mut buf = Buffers::new(n);
    let mut proj = Projector::new(spec.sampler);

    input_layer(seed, pair, &mut buf);
    let mut kernels = Vec::with_capacity(depth + 1);
    let mut first_coords = Vec::with_capacity(depth + 1);
    let k0 = buf.kernel();
    guard(0, &k0, n)?;
    kernels.push(k0);
    first_coords.push(buf.ya[0]);

    let alphas = match &spec.arch {
        Architecture::ScaledResNet { scaling } => scaling.alphas(depth)?,
        _ => Vec::new(),
    };
    let sigma = (spec.arch.hidden_variance_times_width(depth) / nf).sqrt();

    let mut aux = if with_aux {
        let Architecture::ScaledResNet { scaling } = &spec.arch else { unreachable!() };
        let var = variance_profile(scaling, depth, pair.kernel().q_aa)?;
        let mut dev = Vec::with_capacity(depth + 1);
        dev.push(0.0);
        Some((buf.ya.clone(), var, dev, vec![1.0 / nf.sqrt(); n]))
    } else {
        None
    };
    let mut fallback_events = 0;

    for l in 1..=depth {
        let arch = &spec.arch;
        for (v, y) in buf.va.iter_mut().zip(&buf.ya) {
            *v = apply_activation(arch, *y, depth);
        }
        for (v, y) in buf.vb.iter_mut().zip(&buf.yb) {
            *v = apply_activation(arch, *y, depth);
        }

        let mut a_dir_norm = None;
        if let Some((_, _, _, unit)) = &aux {
            let na = dot(&buf.va, &buf.va).sqrt();
            let (da, db) = buf.dots.split_at_mut(1);
            let mut outs = [std::mem::take(&mut da[0]), std::mem::take(&mut db[0])];
            if na > 0.0 {
                proj.project(seed, l as u64, &[&buf.va, &buf.vb], &mut outs);
                a_dir_norm = Some(na);
            } else {
                // relu(Y(a)) = 0, so W relu(Y(a)) = 0; project the fallback direction instead
                fallback_events += 1;
                proj.project(seed, l as u64, &[unit, &buf.vb], &mut outs);
            }
            let [o0, o1] = outs;
            buf.dots = [o0, o1];
        } else {
            let [o0, o1] = std::mem::take(&mut buf.dots);
            let mut outs = [o0, o1];
            proj.project(seed, l as u64, &[&buf.va, &buf.vb], &mut outs);
            buf.dots = outs;
        }

        if let Some((ytilde, var, _, _)) = aux.as_mut() {
            let vol = (0.5 * var[l - 1]).sqrt() * alphas[l - 1];
            let inv = a_dir_norm.map_or(1.0, |na| 1.0 / na);
            for (yt, z) in ytilde.iter_mut().zip(&buf.dots[0]) {
                *yt += vol * z * inv;
            }
        }

        let fallback_active = aux.is_some() && a_dir_norm.is_none();
        match arch {
            Architecture::ScaledResNet { .. } => {
                let s = alphas[l - 1] * sigma;
                if !fallback_active {
                    for (y, z) in buf.ya.iter_mut().zip(&buf.dots[0]) {
                        *y += s * z;
                    }
                }
                for (y, z) in buf.yb.iter_mut().zip(&buf.dots[1]) {
                    *y += s * z;
                }
            }
            Architecture::Mlp | Architecture::ShapedMlp => {
                for (y, z) in buf.ya.iter_mut().zip(&buf.dots[0]) {
                    *y = sigma * z;
                }
                for (y, z) in buf.yb.iter_mut().zip(&buf.dots[1]) {
                    *y = sigma * z;
                }
            }
            Architecture::ShapedResNet { beta } => {
                let skip = *beta;
                let branch = (1.0 - beta * beta).sqrt() * sigma;
                for (y, z) in buf.ya.iter_mut().zip(&buf.dots[0]) {
                    *y = skip * *y + branch * z;
                }
                for (y, z) in buf.yb.iter_mut().zip(&buf.dots[1]) {
                    *y = skip * *y + branch * z;
                }
            }
        }

        let k = buf.kernel();
        guard(l, &k, n)?;
        kernels.push(k);
        first_coords.push(buf.ya[0]);

        if let Some((ytilde, _, dev, _)) = aux.as_mut() {
            let d: f64 = buf
                .ya
                .iter()
                .zip(ytilde.iter())
                .map(|(y, t)| (y - t) * (y - t))
                .sum();
            dev.push(d / nf);
        }
    }

    let (deviation, aux_first_coord) = match aux {
        Some((ytilde, _, dev, _)) => (Some(dev), Some(ytilde[0])),
        None => (None, None),
    };
    Ok(TrialTrace {
        kernels,
        first_coords,
        deviation,
        aux_first_coord,
        fallback_events,
        seed,
        spec: spec.clone(),
    })
}

/// Moment summary of `W v` for random unit `v` (self test of the weight streams).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionTestReport {
    pub width: usize,
    pub trials: usize,
    /// Rows of `W v` inspected per trial.
    pub coords: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// `E[X^4]`; 3 for a standard normal.
    pub fourth_moment: f64,
    pub per_coordinate: Vec<(f64, f64)>,
}

/// Draws `sqrt(n) W v` (standard-normal entries under the weight law) for a
/// fresh unit vector `v` and fresh weights per trial, inspecting the first
/// `min(n, 8)` coordinates, and summarizes their moments.
pub fn gaussian_direction_test(width: usize, trials: usize, seed: u64) -> Result<DirectionTestReport> {
    if width < 8 {
        return Err(Error::invalid("n", "the direction test needs n >= 8"));
    }
    if trials < 2 {
        return Err(Error::invalid("trials", "need at least 2 trials"));
    }
    let coords = width.min(8);
    let mut v = vec![0.0; width];
    let mut row = vec![0.0; width];
    let mut per = vec![(0.0f64, 0.0f64); coords];
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    for t in 0..trials {
        let ts = rng::trial_seed(seed, 0, t as u64);
        let mut dir = rng::layer_stream(ts, 0, rng::stream::DIRECTION);
        rng::fill_normal(&mut dir, &mut v);
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        for (c, acc) in per.iter_mut().enumerate() {
            let mut s = rng::layer_stream(ts, 1, c as u64);
            rng::fill_normal(&mut s, &mut row);
            let x = dot(&row, &v);
            acc.0 += x;
            acc.1 += x * x;
            s1 += x;
            s2 += x * x;
            s3 += x * x * x;
            s4 += x * x * x * x;
        }
    }
    let m = (trials * coords) as f64;
    let mean = s1 / m;
    let variance = s2 / m - mean * mean;
    let skewness = (s3 / m - 3.0 * mean * s2 / m + 2.0 * mean.powi(3)) / variance.powf(1.5);
    let tf = trials as f64;
    Ok(DirectionTestReport {
        width,
        trials,
        coords,
        mean,
        variance,
        skewness,
        fourth_moment: s4 / m,
        per_coordinate: per
            .into_iter()
            .map(|(a, b)| (a / tf, b / tf - (a / tf).powi(2)))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resnet(n: usize, depth: usize) -> NetworkSpec {
        NetworkSpec::new(Architecture::scaled_resnet(ScalingSequence::normalized_uniform()), n, depth, 4).unwrap()
    }

    fn pair() -> InputPair {
        InputPair::new(vec![1.0, 0.5, -0.3, 0.2], vec![0.4, 1.0, 0.1, -0.6]).unwrap()
    }

    #[test]
    fn activation_examples() {
        let plain = Architecture::Mlp;
        let shaped = Architecture::ShapedMlp;
        assert_eq!(apply_activation(&plain, -1.0, 4), 0.0);
        assert_eq!(apply_activation(&shaped, -1.0, 4), -1.0);
        assert_eq!(apply_activation(&shaped, 2.0, 4), 3.0);
    }

    #[test]
    fn spec_validation() {
        let a = Architecture::scaled_resnet(ScalingSequence::normalized_uniform());
        assert!(NetworkSpec::new(a.clone(), 0, 4, 2).is_err());
        assert!(NetworkSpec::new(a.clone(), 4, 0, 2).is_err());
        assert!(NetworkSpec::new(a, 4, 4, 0).is_err());
        assert!(Architecture::shaped_resnet(1.0).is_err());
        assert!(Architecture::shaped_resnet(0.5).is_ok());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let spec = NetworkSpec::new(Architecture::Mlp, 8, 2, 3).unwrap();
        assert!(simulate_pair(&spec, &pair(), 1).is_err());
    }

    #[test]
    fn determinism_both_samplers() {
        for sampler in [WeightSampler::streaming(), WeightSampler::Projected] {
            let spec = resnet(32, 8).with_sampler(sampler);
            let a = simulate_pair(&spec, &pair(), 7).unwrap();
            let b = simulate_pair(&spec, &pair(), 7).unwrap();
            assert_eq!(a, b);
            let c = simulate_pair(&spec, &pair(), 8).unwrap();
            assert_ne!(a.kernels, c.kernels);
        }
    }

    #[test]
    fn block_size_does_not_change_streaming_result() {
        let one = simulate_pair(&resnet(33, 5).with_sampler(WeightSampler::Streaming { block_rows: 1 }), &pair(), 3).unwrap();
        let many = simulate_pair(&resnet(33, 5).with_sampler(WeightSampler::Streaming { block_rows: 8 }), &pair(), 3).unwrap();
        assert_eq!(one.kernels, many.kernels);
    }

    #[test]
    fn equal_inputs_give_identical_passes() {
        let p = InputPair::new(vec![0.3, -1.0, 2.0, 0.1], vec![0.3, -1.0, 2.0, 0.1]).unwrap();
        let archs = [
            Architecture::scaled_resnet(ScalingSequence::normalized_uniform()),
            Architecture::Mlp,
            Architecture::ShapedMlp,
            Architecture::shaped_resnet(0.5).unwrap(),
        ];
        for arch in archs {
            for sampler in [WeightSampler::streaming(), WeightSampler::Projected] {
                let spec = NetworkSpec::new(arch.clone(), 16, 6, 4).unwrap().with_sampler(sampler);
                let t = simulate_pair(&spec, &p, 11).unwrap();
                for k in &t.kernels {
                    assert_eq!(k.q_ab.to_bits(), k.q_aa.to_bits());
                    assert_eq!(k.q_bb.to_bits(), k.q_aa.to_bits());
                }
            }
        }
    }

    #[test]
    fn unstable_sequence_reports_layer() {
        // gamma = 0.05 => alpha^2 ~ 0.44 at L = 4000: variance grows like 1.2^l
        let spec = NetworkSpec::new(Architecture::scaled_resnet(ScalingSequence::uniform(0.05).unwrap()), 64, 4000, 4).unwrap();
        match simulate_pair(&spec, &pair(), 1) {
            Err(Error::Instability { layer, .. }) => assert!(layer > 100 && layer < 4000),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn auxiliary_starts_at_zero_deviation() {
        let spec = resnet(64, 16);
        let t = simulate_with_auxiliary(&spec, &pair(), 5).unwrap();
        let dev = t.deviation.as_ref().unwrap();
        assert_eq!(dev.len(), 17);
        assert_eq!(dev[0], 0.0);
        assert!(dev.iter().all(|d| d.is_finite() && *d >= 0.0));
        // the pair trace is unchanged by running the auxiliary process
        assert_eq!(t.kernels, simulate_pair(&spec, &pair(), 5).unwrap().kernels);
    }

    #[test]
    fn auxiliary_only_for_resnet() {
        let spec = NetworkSpec::new(Architecture::Mlp, 8, 2, 4).unwrap();
        assert!(simulate_with_auxiliary(&spec, &pair(), 1).is_err());
    }

    #[test]
    fn fallback_direction_when_post_activation_vanishes() {
        // width 1: relu(Y_0(a)) = 0 whenever the single pre-activation is negative
        let spec = resnet(1, 4).with_sampler(WeightSampler::streaming());
        let mut hits = 0;
        for seed in 0..64 {
            let t = simulate_with_auxiliary(&spec, &pair(), seed).unwrap();
            hits += t.fallback_events;
            assert!(t.deviation.unwrap().iter().all(|d| d.is_finite()));
        }
        assert!(hits > 0);
    }

    #[test]
    fn cholesky_handles_dependent_vectors() {
        let a = [1.0, 2.0, 3.0];
        let b = [2.0, 4.0, 6.0];
        let l = gram_cholesky(&[&a, &b]);
        assert!((l[0][0] - 14f64.sqrt()).abs() < 1e-12);
        assert!((l[1][0] - 2.0 * 14f64.sqrt()).abs() < 1e-12);
        assert_eq!(l[1][1], 0.0);
    }

    #[test]
    fn direction_test_small() {
        let r = gaussian_direction_test(16, 2000, 3).unwrap();
        assert_eq!(r.coords, 8);
        assert!(r.mean.abs() < 0.05);
        assert!((r.variance - 1.0).abs() < 0.05);
        assert!(gaussian_direction_test(4, 10, 1).is_err());
    }
}
