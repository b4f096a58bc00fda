//! The parameterized studies: finite-width sweeps against limit kernels, the
//! depth and width convergence rates, the proportional (`L = n`) regime and
//! per-layer simulation summaries.

use serde::Serialize;

use super::harness::{cell_trial_seed, run_trials};
use super::stats::{l2_error, Quantiles, RateFit, Summary};
use super::table::Table;
use crate::error::{Error, Result};
use crate::nets::{simulate_pair, simulate_with_auxiliary, Architecture, NetworkSpec, WeightSampler};
use crate::rng;
use crate::scaling::ScalingSequence;
use crate::theory::{
    covariance_flow, flow_endpoint, infinite_width_trace, mlp_kernel_trace, relu_dual,
    relu_dual_prime, series_limit_kernel, shaped_mlp_kernel_trace, shaped_resnet_kernel_trace,
    FlowSolution, InputPair, KernelTriple, DEFAULT_FLOW_STEP,
};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 42;
/// Tolerance of series limit kernels used as references.
pub const DEFAULT_SERIES_TOL: f64 = 1e-8;
/// Smallest trial count accepted by the width-rate study.
pub const MIN_WIDTH_RATE_TRIALS: usize = 50;

/// Knobs shared by every study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyOptions {
    pub master_seed: u64,
    pub workers: usize,
    pub flow_step: f64,
    pub series_tol: f64,
    pub sampler: WeightSampler,
    /// Fraction of smallest x-values left out of rate fits.
    pub drop_fraction: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            master_seed: DEFAULT_SEED,
            workers: 1,
            flow_step: DEFAULT_FLOW_STEP,
            series_tol: DEFAULT_SERIES_TOL,
            sampler: WeightSampler::Projected,
            drop_fraction: super::stats::DEFAULT_DROP_FRACTION,
        }
    }
}

/// Inputs as recorded in manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub d: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub q0: KernelTriple,
    pub zeta: f64,
}

impl From<&InputPair> for PairRecord {
    fn from(p: &InputPair) -> Self {
        PairRecord {
            d: p.dim(),
            a: p.a().to_vec(),
            b: p.b().to_vec(),
            q0: p.kernel(),
            zeta: p.zeta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub study: String,
    pub master_seed: u64,
    pub options: StudyOptions,
    pub pair: Option<PairRecord>,
    pub architecture: Option<String>,
    pub sequence: Option<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub version: String,
}

impl RunManifest {
    fn start(study: &str, opts: &StudyOptions) -> Self {
        RunManifest {
            study: study.to_string(),
            master_seed: opts.master_seed,
            options: *opts,
            pair: None,
            architecture: None,
            sequence: None,
            started_unix: unix_now(),
            finished_unix: 0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    fn finish(mut self) -> Self {
        self.finished_unix = unix_now();
        self
    }
}

// No clock on bare wasm; SystemTime::now panics there.
#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
fn unix_now() -> u64 {
    0
}

#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Where a reference kernel comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Depth-limit flow at `t = 1` (normalized scalings).
    Flow,
    /// Limit of a square-summable series scaling.
    SeriesLimit,
    /// The input kernel itself: the residual branches vanish as `L -> inf`.
    InputKernel,
    /// Width-first recursion at the simulated depth.
    WidthFirst,
}

impl ReferenceKind {
    pub fn name(&self) -> &'static str {
        match self {
            ReferenceKind::Flow => "flow",
            ReferenceKind::SeriesLimit => "series-limit",
            ReferenceKind::InputKernel => "input-kernel",
            ReferenceKind::WidthFirst => "width-first",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reference {
    pub kind: ReferenceKind,
    pub kernel: KernelTriple,
    /// Set when the value is not a proven limit of the simulated networks, only
    /// a width-first comparison point.
    pub reference_only: bool,
}

/// The limit kernel a finite network of depth `depth` is compared against.
pub fn reference_kernel(arch: &Architecture, depth: usize, q0: KernelTriple, opts: &StudyOptions) -> Result<Reference> {
    let width_first = |kernel| Reference {
        kind: ReferenceKind::WidthFirst,
        kernel,
        reference_only: true,
    };
    Ok(match arch {
        Architecture::ScaledResNet { scaling } => {
            if let Some(series) = scaling.series() {
                Reference {
                    kind: ReferenceKind::SeriesLimit,
                    kernel: series_limit_kernel(series, q0, opts.series_tol)?.kernel,
                    reference_only: false,
                }
            } else if scaling.is_normalized_at(depth, scaling.default_tol())? {
                Reference {
                    kind: ReferenceKind::Flow,
                    kernel: flow_endpoint(q0, opts.flow_step)?,
                    reference_only: false,
                }
            } else if matches!(scaling, ScalingSequence::UniformPower { gamma } if *gamma > 0.5) {
                Reference {
                    kind: ReferenceKind::InputKernel,
                    kernel: q0,
                    reference_only: false,
                }
            } else {
                width_first(infinite_width_trace(scaling, depth, q0)?.last())
            }
        }
        Architecture::Mlp => width_first(mlp_kernel_trace(q0, depth).last()),
        Architecture::ShapedMlp => width_first(shaped_mlp_kernel_trace(q0, depth).last()),
        Architecture::ShapedResNet { beta } => width_first(shaped_resnet_kernel_trace(q0, depth, *beta).last()),
    })
}

fn sequence_of(arch: &Architecture) -> Option<String> {
    match arch {
        Architecture::ScaledResNet { scaling } => Some(scaling.describe()),
        _ => None,
    }
}

/// Final-layer `q_ab` of `trials` networks in one grid cell, in trial order.
fn final_q_ab(
    arch: &Architecture,
    n: usize,
    depth: usize,
    trials: usize,
    pair: &InputPair,
    opts: &StudyOptions,
    master: u64,
) -> Result<Vec<f64>> {
    let at_cell = |e: Error| Error::AtCell {
        n,
        depth,
        source: Box::new(e),
    };
    let spec = NetworkSpec::new(arch.clone(), n, depth, pair.dim())
        .map_err(at_cell)?
        .with_sampler(opts.sampler);
    run_trials(opts.workers, trials, |i| {
        let seed = cell_trial_seed(master, n, depth, i);
        Ok(simulate_pair(&spec, pair, seed)?.last().q_ab)
    })
    .map_err(at_cell)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub trials: usize,
    pub mean_q: f64,
    pub std_q: f64,
    pub se_q: f64,
    pub l2_error: f64,
    pub theory_q: f64,
}

impl SweepRow {
    fn from_samples(n: usize, depth: usize, xs: &[f64], theory_q: f64) -> Result<Self> {
        let s = Summary::of(xs)?;
        Ok(SweepRow {
            n,
            depth,
            trials: xs.len(),
            mean_q: s.mean,
            std_q: s.std,
            se_q: s.se,
            l2_error: l2_error(xs, theory_q),
            theory_q,
        })
    }
}

fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(["n", "L", "trials", "mean_q", "std_q", "se_q", "l2_error", "theory_q"]);
    for r in rows {
        t.push(vec![
            r.n.into(),
            r.depth.into(),
            r.trials.into(),
            r.mean_q.into(),
            r.std_q.into(),
            r.se_q.into(),
            r.l2_error.into(),
            r.theory_q.into(),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub reference: ReferenceKind,
    pub reference_only: bool,
    pub manifest: RunManifest,
}

impl SweepResult {
    pub fn table(&self) -> Table {
        sweep_table(&self.rows)
    }

    pub fn row(&self, n: usize, depth: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.n == n && r.depth == depth)
    }
}

fn check_list(key: &str, xs: &[usize]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::invalid(key, "must be nonempty"));
    }
    if xs.contains(&0) {
        return Err(Error::invalid(key, "entries must be positive"));
    }
    Ok(())
}

fn check_trials(trials: usize, min: usize) -> Result<()> {
    if trials < min {
        return Err(Error::invalid("trials", format!("need at least {min}, got {trials}")));
    }
    Ok(())
}

/// Monte Carlo statistics of the final-layer `q_ab` over an `n x L` grid,
/// compared with the architecture's limit kernel.
pub fn grid_study(
    arch: &Architecture,
    n_list: &[usize],
    l_list: &[usize],
    trials: usize,
    pair: &InputPair,
    opts: &StudyOptions,
) -> Result<SweepResult> {
    check_list("n_list", n_list)?;
    check_list("L_list", l_list)?;
    check_trials(trials, 2)?;
    let mut manifest = RunManifest::start("grid", opts);
    manifest.pair = Some(pair.into());
    manifest.architecture = Some(arch.name().into());
    manifest.sequence = sequence_of(arch);

    let q0 = pair.kernel();
    let mut rows = Vec::with_capacity(n_list.len() * l_list.len());
    let mut kind = None;
    for &depth in l_list {
        let r = reference_kernel(arch, depth, q0, opts)?;
        kind = Some((r.kind, r.reference_only));
        for &n in n_list {
            let xs = final_q_ab(arch, n, depth, trials, pair, opts, opts.master_seed)?;
            rows.push(SweepRow::from_samples(n, depth, &xs, r.kernel.q_ab)?);
        }
    }
    let (reference, reference_only) = kind.expect("L_list is nonempty");
    Ok(SweepResult {
        rows,
        reference,
        reference_only,
        manifest: manifest.finish(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthRateRow {
    #[serde(rename = "L")]
    pub depth: usize,
    /// Width-first kernel at depth `L`.
    pub q_width_first: f64,
    /// Flow at `t = 1`.
    pub q_flow: f64,
    pub delta: f64,
    /// `delta_L / delta_{L_prev}` for the previous row.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthRateResult {
    pub rows: Vec<DepthRateRow>,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub manifest: RunManifest,
}

impl DepthRateResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["L", "q_width_first", "q_flow", "delta", "ratio"]);
        for r in &self.rows {
            t.push(vec![
                r.depth.into(),
                r.q_width_first.into(),
                r.q_flow.into(),
                r.delta.into(),
                r.ratio.into(),
            ]);
        }
        t
    }
}

fn fit_or_reason(xs: &[f64], ys: &[f64], drop_fraction: f64) -> (Option<RateFit>, Option<String>) {
    match RateFit::fit_dropping(xs, ys, drop_fraction) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// `delta_L = |q_{L,inf}(a,b) - q_{t=1}(a,b)|` for each depth, and its log-log
/// slope. Deterministic: no sampling is involved.
pub fn depth_rate_study(
    seq: &ScalingSequence,
    l_list: &[usize],
    q0: KernelTriple,
    opts: &StudyOptions,
) -> Result<DepthRateResult> {
    check_list("L_list", l_list)?;
    if l_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("L_list", "depths must be strictly ascending"));
    }
    let mut manifest = RunManifest::start("depth-rate", opts);
    manifest.sequence = Some(seq.describe());

    let q_flow = flow_endpoint(q0, opts.flow_step)?.q_ab;
    let mut rows: Vec<DepthRateRow> = Vec::with_capacity(l_list.len());
    for &depth in l_list {
        if !seq.is_normalized_at(depth, seq.default_tol())? {
            return Err(Error::domain(format!(
                "the depth rate needs a normalized sequence; {} is not normalized at L = {depth}",
                seq.describe()
            )));
        }
        let q_width_first = infinite_width_trace(seq, depth, q0)?.last().q_ab;
        let delta = (q_width_first - q_flow).abs();
        let ratio = rows.last().map(|p| delta / p.delta);
        rows.push(DepthRateRow {
            depth,
            q_width_first,
            q_flow,
            delta,
            ratio,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.depth as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let (fit, fit_error) = fit_or_reason(&xs, &ys, opts.drop_fraction);
    Ok(DepthRateResult {
        rows,
        fit,
        fit_error,
        manifest: manifest.finish(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthRateResult {
    pub rows: Vec<SweepRow>,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub manifest: RunManifest,
}

impl WidthRateResult {
    pub fn table(&self) -> Table {
        sweep_table(&self.rows)
    }
}

/// L2 error of the final `q_ab` against the flow at `t = 1`, per width at a
/// fixed depth, with its log-log slope in `n`.
pub fn width_rate_study(
    seq: &ScalingSequence,
    n_list: &[usize],
    depth: usize,
    trials: usize,
    pair: &InputPair,
    opts: &StudyOptions,
) -> Result<WidthRateResult> {
    check_list("n_list", n_list)?;
    check_trials(trials, MIN_WIDTH_RATE_TRIALS)?;
    if !seq.is_normalized_at(depth, seq.default_tol())? {
        return Err(Error::domain(format!(
            "the width rate is measured against the flow, which needs a normalized sequence; {} is not normalized at L = {depth}",
            seq.describe()
        )));
    }
    let arch = Architecture::scaled_resnet(seq.clone());
    let mut manifest = RunManifest::start("width-rate", opts);
    manifest.pair = Some(pair.into());
    manifest.architecture = Some(arch.name().into());
    manifest.sequence = Some(seq.describe());

    let theory_q = flow_endpoint(pair.kernel(), opts.flow_step)?.q_ab;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let xs = final_q_ab(&arch, n, depth, trials, pair, opts, opts.master_seed)?;
        rows.push(SweepRow::from_samples(n, depth, &xs, theory_q)?);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
    let (fit, fit_error) = fit_or_reason(&xs, &ys, opts.drop_fraction);
    Ok(WidthRateResult {
        rows,
        fit,
        fit_error,
        manifest: manifest.finish(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointRow {
    pub arch: String,
    /// Width, equal to the depth.
    pub n: usize,
    pub trials: usize,
    pub summary: Summary,
    pub quantiles: Quantiles,
    pub reference: f64,
    pub reference_kind: ReferenceKind,
    pub reference_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointResult {
    pub rows: Vec<JointRow>,
    pub manifest: RunManifest,
}

impl JointResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "arch", "n", "L", "trials", "mean_q", "std_q", "se_q", "q05", "q25", "q50", "q75", "q95",
            "reference_q", "reference_kind", "reference_only",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.arch.as_str().into(),
                r.n.into(),
                r.n.into(),
                r.trials.into(),
                r.summary.mean.into(),
                r.summary.std.into(),
                r.summary.se.into(),
                r.quantiles.q05.into(),
                r.quantiles.q25.into(),
                r.quantiles.q50.into(),
                r.quantiles.q75.into(),
                r.quantiles.q95.into(),
                r.reference.into(),
                r.reference_kind.name().into(),
                r.reference_only.into(),
            ]);
        }
        t
    }

    pub fn row(&self, arch: &str, n: usize) -> Option<&JointRow> {
        self.rows.iter().find(|r| r.arch == arch && r.n == n)
    }
}

/// Seed namespace of one architecture, so different architectures in one
/// joint study never share networks.
fn arch_master(master: u64, arch: &Architecture) -> u64 {
    let label = arch.name().bytes().fold(0u64, |h, b| rng::mix64(h ^ u64::from(b)));
    rng::derive(master, label)
}

/// Distribution of the final `q_ab` in the proportional regime `L = n`.
///
/// The scaled ResNet is compared with its sequential limit (the flow at
/// `t = 1` for a normalized scaling); the shaped architectures only get their
/// width-first recursion as a reference, flagged `reference_only`.
pub fn joint_diagonal_study(
    n_list: &[usize],
    archs: &[Architecture],
    trials: usize,
    pair: &InputPair,
    opts: &StudyOptions,
) -> Result<JointResult> {
    check_list("n_list", n_list)?;
    check_trials(trials, 2)?;
    if archs.is_empty() {
        return Err(Error::invalid("archs", "must be nonempty"));
    }
    let mut manifest = RunManifest::start("joint", opts);
    manifest.pair = Some(pair.into());
    manifest.architecture = Some(archs.iter().map(|a| a.name()).collect::<Vec<_>>().join(","));
    manifest.sequence = archs.iter().find_map(sequence_of);

    let q0 = pair.kernel();
    let mut rows = Vec::new();
    for arch in archs {
        let master = arch_master(opts.master_seed, arch);
        for &n in n_list {
            let r = reference_kernel(arch, n, q0, opts)?;
            let xs = final_q_ab(arch, n, n, trials, pair, opts, master)?;
            rows.push(JointRow {
                arch: arch.name().into(),
                n,
                trials,
                summary: Summary::of(&xs)?,
                quantiles: Quantiles::of(&xs),
                reference: r.kernel.q_ab,
                reference_kind: r.kind,
                reference_only: r.reference_only,
            });
        }
    }
    Ok(JointResult {
        rows,
        manifest: manifest.finish(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerRow {
    pub layer: usize,
    pub mean_q_aa: f64,
    pub mean_q_ab: f64,
    pub mean_q_bb: f64,
    pub se_q_ab: f64,
    /// Mean and standard error of `(Y_l^1(a))^2`.
    pub mean_first_sq: f64,
    pub se_first_sq: f64,
    /// Width-first kernel at this layer; its diagonal is the variance profile
    /// for the scaled ResNet.
    pub theory_q_aa: f64,
    pub theory_q_ab: f64,
    pub mean_deviation: Option<f64>,
    pub se_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateResult {
    pub rows: Vec<LayerRow>,
    /// Summary of `(Ytilde_L^1(a))^2` when the auxiliary process ran.
    pub aux_final_sq: Option<Summary>,
    pub fallback_events: usize,
    pub manifest: RunManifest,
}

impl SimulateResult {
    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "layer", "mean_q_aa", "mean_q_ab", "mean_q_bb", "se_q_ab", "mean_first_sq", "se_first_sq",
            "theory_q_aa", "theory_q_ab", "mean_deviation", "se_deviation",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.layer.into(),
                r.mean_q_aa.into(),
                r.mean_q_ab.into(),
                r.mean_q_bb.into(),
                r.se_q_ab.into(),
                r.mean_first_sq.into(),
                r.se_first_sq.into(),
                r.theory_q_aa.into(),
                r.theory_q_ab.into(),
                r.mean_deviation.into(),
                r.se_deviation.into(),
            ]);
        }
        t
    }
}

/// Width-first kernel trace of any architecture.
pub fn width_first_trace(arch: &Architecture, depth: usize, q0: KernelTriple) -> Result<Vec<KernelTriple>> {
    Ok(match arch {
        Architecture::ScaledResNet { scaling } => infinite_width_trace(scaling, depth, q0)?.values,
        Architecture::Mlp => mlp_kernel_trace(q0, depth).values,
        Architecture::ShapedMlp => shaped_mlp_kernel_trace(q0, depth).values,
        Architecture::ShapedResNet { beta } => shaped_resnet_kernel_trace(q0, depth, *beta).values,
    })
}

/// Per-layer averages of `trials` networks of one shape, next to the
/// width-first kernel. With `auxiliary` (scaled ResNet only) the coupled
/// process runs too and the deviation `|Y_l - Ytilde_l|^2 / n` is averaged.
pub fn simulate_study(
    spec: &NetworkSpec,
    pair: &InputPair,
    trials: usize,
    auxiliary: bool,
    opts: &StudyOptions,
) -> Result<SimulateResult> {
    check_trials(trials, 2)?;
    let spec = spec.clone().with_sampler(opts.sampler);
    spec.validate()?;
    let mut manifest = RunManifest::start("simulate", opts);
    manifest.pair = Some(pair.into());
    manifest.architecture = Some(spec.arch.name().into());
    manifest.sequence = sequence_of(&spec.arch);

    let (n, depth) = (spec.width, spec.depth);
    let traces = run_trials(opts.workers, trials, |i| {
        let seed = cell_trial_seed(opts.master_seed, n, depth, i);
        if auxiliary {
            simulate_with_auxiliary(&spec, pair, seed)
        } else {
            simulate_pair(&spec, pair, seed)
        }
    })
    .map_err(|e| Error::AtCell {
        n,
        depth,
        source: Box::new(e),
    })?;
    let theory = width_first_trace(&spec.arch, depth, pair.kernel())?;

    let mut rows = Vec::with_capacity(depth + 1);
    for (l, th) in theory.iter().enumerate() {
        let col = |f: &dyn Fn(&crate::nets::TrialTrace) -> f64| traces.iter().map(f).collect::<Vec<f64>>();
        let aa = Summary::of(&col(&|t| t.kernels[l].q_aa))?;
        let ab = Summary::of(&col(&|t| t.kernels[l].q_ab))?;
        let bb = Summary::of(&col(&|t| t.kernels[l].q_bb))?;
        let first = Summary::of(&col(&|t| t.first_coords[l] * t.first_coords[l]))?;
        let dev = if auxiliary {
            Some(Summary::of(&col(&|t| t.deviation.as_ref().map_or(f64::NAN, |d| d[l])))?)
        } else {
            None
        };
        rows.push(LayerRow {
            layer: l,
            mean_q_aa: aa.mean,
            mean_q_ab: ab.mean,
            mean_q_bb: bb.mean,
            se_q_ab: ab.se,
            mean_first_sq: first.mean,
            se_first_sq: first.se,
            theory_q_aa: th.q_aa,
            theory_q_ab: th.q_ab,
            mean_deviation: dev.map(|s| s.mean),
            se_deviation: dev.map(|s| s.se),
        });
    }
    let aux_final_sq = if auxiliary {
        let xs: Vec<f64> = traces
            .iter()
            .map(|t| t.aux_first_coord.map_or(f64::NAN, |y| y * y))
            .collect();
        Some(Summary::of(&xs)?)
    } else {
        None
    };
    Ok(SimulateResult {
        rows,
        aux_final_sq,
        fallback_events: traces.iter().map(|t| t.fallback_events).sum(),
        manifest: manifest.finish(),
    })
}

/// `c, f(c), f'(c)` on the given correlations; `f'` is left empty at `|c| = 1`.
pub fn dual_table(cs: &[f64]) -> Result<Table> {
    let mut t = Table::new(["c", "f", "f_prime"]);
    for &c in cs {
        let f = relu_dual(c)?;
        let fp = if c.abs() < 1.0 { Some(relu_dual_prime(c)?) } else { None };
        t.push(vec![c.into(), f.into(), fp.into()]);
    }
    Ok(t)
}

/// `t, q_aa, q_ab, q_bb, c` along a flow solution, every `stride`-th point
/// (the endpoint is always included).
pub fn flow_table(sol: &FlowSolution, stride: usize) -> Table {
    let stride = stride.max(1);
    let mut t = Table::new(["t", "q_aa", "q_ab", "q_bb", "c"]);
    let last = sol.t_grid.len() - 1;
    for (i, (time, k)) in sol.rows().enumerate() {
        if i % stride == 0 || i == last {
            t.push(vec![time.into(), k.q_aa.into(), k.q_ab.into(), k.q_bb.into(), k.correlation().into()]);
        }
    }
    t
}

/// Flow on `[0, 1]` sampled at `points + 1` evenly spaced times.
pub fn flow_curve(q0: KernelTriple, step: f64, points: usize) -> Result<Table> {
    let sol = covariance_flow(q0, step, 1.0)?;
    let stride = ((sol.t_grid.len() - 1) / points.max(1)).max(1);
    Ok(flow_table(&sol, stride))
}

