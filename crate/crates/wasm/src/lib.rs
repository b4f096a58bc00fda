//! Browser bindings. Every export returns a JSON string so the page needs no
//! glue beyond `JSON.parse`.

use covlab::experiments::{cell_trial_seed, depth_rate_study, quantile, Summary, StudyOptions};
use covlab::nets::{simulate_pair, Architecture, NetworkSpec, DEFAULT_BETA};
use covlab::theory::{covariance_flow, euler_trace, infinite_width_trace};
use covlab::{InputPair, KernelTriple, ScalingSequence};
use serde::Serialize;
use wasm_bindgen::prelude::*;

// Coarser than the library default; the curves are drawn, not fitted.
const FLOW_STEP: f64 = 1e-4;
const MAX_DEMO_WORK: usize = 40_000_000;

#[derive(Serialize)]
pub struct FlowCurves {
    pub c0: f64,
    pub depth: usize,
    pub flow: Vec<[f64; 2]>,
    pub euler: Vec<[f64; 2]>,
    pub width_first: f64,
    pub flow_end: f64,
}

#[derive(Serialize)]
pub struct DepthRate {
    pub depths: Vec<usize>,
    pub deltas: Vec<f64>,
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
}

#[derive(Serialize)]
pub struct Samples {
    pub arch: &'static str,
    pub n: usize,
    pub depth: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub reference: f64,
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

pub fn flow_curves_value(c0: f64, depth: usize) -> covlab::Result<FlowCurves> {
    let q0 = KernelTriple::unit(c0);
    let sol = covariance_flow(q0, FLOW_STEP, 1.0)?;
    let stride = (sol.t_grid.len() / 200).max(1);
    let flow = sol
        .rows()
        .enumerate()
        .filter(|(i, _)| i % stride == 0 || *i == sol.t_grid.len() - 1)
        .map(|(_, (t, k))| [t, k.q_ab])
        .collect();
    let seq = ScalingSequence::normalized_uniform();
    let euler = euler_trace(&seq, depth, q0)?.into_iter().map(|(t, q)| [t, q]).collect();
    Ok(FlowCurves {
        c0,
        depth,
        flow,
        euler,
        width_first: infinite_width_trace(&seq, depth, q0)?.last().q_ab,
        flow_end: sol.last().q_ab,
    })
}

/// Flow of `q_ab` on `[0, 1]` for unit inputs with correlation `c0`, next to
/// the width-first recursion of a depth-`depth` network with `alpha = 1/sqrt(L)`.
#[wasm_bindgen(js_name = flowCurves)]
pub fn flow_curves(c0: f64, depth: usize) -> Result<String, JsError> {
    to_json(&flow_curves_value(c0, depth).map_err(js_err)?)
}

pub fn depth_rate_value(c0: f64, max_pow: u32) -> covlab::Result<DepthRate> {
    let depths: Vec<usize> = (2..=max_pow.clamp(3, 14)).map(|k| 1usize << k).collect();
    let opts = StudyOptions {
        flow_step: FLOW_STEP,
        ..StudyOptions::default()
    };
    let r = depth_rate_study(&ScalingSequence::normalized_uniform(), &depths, KernelTriple::unit(c0), &opts)?;
    Ok(DepthRate {
        depths,
        deltas: r.rows.iter().map(|row| row.delta).collect(),
        slope: r.fit.as_ref().map(|f| f.slope),
        r_squared: r.fit.as_ref().map(|f| f.r_squared),
    })
}

/// `|q_{L,inf} - q_{t=1}|` for `L = 4, 8, ..., 2^max_pow` and its log-log slope.
#[wasm_bindgen(js_name = depthRate)]
pub fn depth_rate(c0: f64, max_pow: u32) -> Result<String, JsError> {
    to_json(&depth_rate_value(c0, max_pow).map_err(js_err)?)
}

fn architecture(name: &str) -> covlab::Result<Architecture> {
    match name {
        "scaled-resnet" => Ok(Architecture::scaled_resnet(ScalingSequence::normalized_uniform())),
        "mlp" => Ok(Architecture::Mlp),
        "shaped-mlp" => Ok(Architecture::ShapedMlp),
        "shaped-resnet" => Architecture::shaped_resnet(DEFAULT_BETA),
        other => Err(covlab::Error::invalid("arch", format!("unknown architecture {other:?}"))),
    }
}

pub fn sample_kernels_value(arch: &str, n: usize, depth: usize, trials: usize, seed: u64) -> covlab::Result<Samples> {
    if n.saturating_mul(depth).saturating_mul(trials) > MAX_DEMO_WORK {
        return Err(covlab::Error::invalid("trials", "too much work for the browser; lower n, L or trials"));
    }
    let arch = architecture(arch)?;
    let pair = InputPair::with_correlation(0.5)?;
    let spec = NetworkSpec::new(arch.clone(), n, depth, pair.dim())?;
    let values = (0..trials)
        .map(|i| simulate_pair(&spec, &pair, cell_trial_seed(seed, n, depth, i)).map(|t| t.last().q_ab))
        .collect::<covlab::Result<Vec<f64>>>()?;
    let s = Summary::of(&values)?;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let reference = covlab::experiments::width_first_trace(&arch, depth, pair.kernel())?
        .last()
        .map_or(f64::NAN, |k| k.q_ab);
    Ok(Samples {
        arch: arch.name(),
        n,
        depth,
        mean: s.mean,
        std: s.std,
        q05: quantile(&sorted, 0.05),
        q50: quantile(&sorted, 0.5),
        q95: quantile(&sorted, 0.95),
        values,
        reference,
    })
}

/// Monte Carlo draws of the output kernel `q_ab` for unit inputs with
/// correlation 0.5, plus the width-first value for comparison.
#[wasm_bindgen(js_name = sampleKernels)]
pub fn sample_kernels(arch: &str, n: usize, depth: usize, trials: usize, seed: u32) -> Result<String, JsError> {
    to_json(&sample_kernels_value(arch, n, depth, trials, u64::from(seed)).map_err(js_err)?)
}
