//! Study dispatch: runs the configured study and renders its artifacts.

use anyhow::Result;
use covlab::experiments::{
    depth_rate_study, dual_table, flow_curve, grid_study, joint_diagonal_study, simulate_study, width_rate_study,
    ReferenceKind, RunManifest, Table,
};
use covlab::nets::NetworkSpec;
use covlab::theory::{covariance_flow, euler_trace, relu_dual};
use covlab::KernelTriple;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, Study};
use crate::output::Artifact;

/// Where the output directory came from, for the manifest.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutSource {
    Flag,
    File,
    Env,
    Default,
}

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Headline numbers, also stored in the manifest.
    pub results: Value,
}

struct Rendered {
    stem: &'static str,
    table: Table,
    figure: String,
}

fn csv(t: &Table) -> Vec<u8> {
    t.to_csv_string().into_bytes()
}

fn dat(t: &Table, comment: &str) -> Vec<u8> {
    let mut buf = Vec::new();
    t.write_dat(&mut buf, comment).expect("writing to memory cannot fail");
    buf
}

pub fn run(cfg: &RunConfig, config_file: Option<&str>, out_source: OutSource) -> Result<Outcome> {
    let opts = cfg.options();
    let mut extra: Vec<Artifact> = Vec::new();
    let (main, results, run_manifest): (Rendered, Value, Option<RunManifest>) = match cfg.study() {
        Study::Theory => {
            let c0 = cfg.c0.expect("resolved");
            let mut cs: Vec<f64> = (0..=20).map(|k| -1.0 + k as f64 / 10.0).collect();
            if !cs.contains(&c0) {
                cs.push(c0);
                cs.sort_by(f64::total_cmp);
            }
            extra.push(Artifact::new("dual.csv", csv(&dual_table(&cs)?)));

            let q0 = KernelTriple::unit(c0);
            let sol = covariance_flow(q0, opts.flow_step, 1.0)?;
            let mut euler = Table::new(["L", "l", "t", "q_euler", "q_flow", "gap"]);
            let mut gaps = serde_json::Map::new();
            for &depth in cfg.l_list() {
                let mut worst = 0.0f64;
                for (l, (t, q)) in euler_trace(cfg.scaling(), depth, q0)?.into_iter().enumerate() {
                    let qf = sol.value_at(t)?.q_ab;
                    worst = worst.max((q - qf).abs());
                    euler.push(vec![depth.into(), l.into(), t.into(), q.into(), qf.into(), (q - qf).abs().into()]);
                }
                gaps.insert(depth.to_string(), json!(worst));
            }
            extra.push(Artifact::new("euler.csv", csv(&euler)));
            let results = json!({
                "c0": c0,
                "f_c0": relu_dual(c0)?,
                "flow_q_ab_t1": sol.last().q_ab,
                "flow_clamp_events": sol.clamp_events,
                "euler_max_gap": gaps,
            });
            let table = flow_curve(q0, opts.flow_step, 100)?;
            (
                Rendered {
                    stem: "flow",
                    table,
                    figure: format!("Depth-limit covariance flow for unit inputs with c0 = {c0} (the Figure 1 reference curve)"),
                },
                results,
                None,
            )
        }
        Study::Simulate => {
            let arch = cfg.architecture(cfg.arch.expect("resolved"))?;
            let (n, depth) = (cfg.n_list()[0], cfg.l_list()[0]);
            let pair = cfg.pair()?;
            let spec = NetworkSpec::new(arch, n, depth, pair.dim())?;
            let r = simulate_study(&spec, &pair, cfg.trials.unwrap(), cfg.auxiliary.unwrap(), &opts)?;
            let last = r.rows.last().expect("depth >= 1");
            let results = json!({
                "n": n,
                "L": depth,
                "final_mean_q_ab": last.mean_q_ab,
                "final_se_q_ab": last.se_q_ab,
                "final_theory_q_ab": last.theory_q_ab,
                "final_mean_deviation": last.mean_deviation,
                "aux_final_sq": r.aux_final_sq,
                "fallback_events": r.fallback_events,
            });
            (
                Rendered {
                    stem: "simulate",
                    table: r.table(),
                    figure: format!(
                        "Per-layer empirical kernels of {} (n = {n}, L = {depth}) against the width-first recursion and variance profile",
                        spec.arch.name()
                    ),
                },
                results,
                Some(r.manifest),
            )
        }
        Study::Grid => {
            let arch = cfg.architecture(cfg.arch.expect("resolved"))?;
            let pair = cfg.pair()?;
            let r = grid_study(&arch, cfg.n_list(), cfg.l_list(), cfg.trials.unwrap(), &pair, &opts)?;
            let figure = match r.reference {
                ReferenceKind::Flow => "Figure 1: L2 error of q_{L,n} against the flow at t = 1 over the (n, L) grid",
                ReferenceKind::SeriesLimit => "Figure 2: L2 error of q_{L,n} against the series limit kernel over the (n, L) grid",
                _ => "Grid of q_{L,n} statistics against the width-first reference (reference only)",
            };
            let best = r.rows.iter().min_by(|a, b| a.l2_error.total_cmp(&b.l2_error)).expect("nonempty grid");
            let results = json!({
                "reference": r.reference,
                "reference_only": r.reference_only,
                "min_l2_error": best.l2_error,
                "min_l2_cell": {"n": best.n, "L": best.depth},
            });
            (
                Rendered {
                    stem: "grid",
                    table: r.table(),
                    figure: figure.to_string(),
                },
                results,
                Some(r.manifest),
            )
        }
        Study::DepthRate => {
            let pair = cfg.pair()?;
            let mut r = depth_rate_study(cfg.scaling(), cfg.l_list(), pair.kernel(), &opts)?;
            r.manifest.pair = Some((&pair).into());
            let results = json!({
                "slope": r.fit.as_ref().map(|f| f.slope),
                "intercept": r.fit.as_ref().map(|f| f.intercept),
                "r_squared": r.fit.as_ref().map(|f| f.r_squared),
                "fit_points_dropped": r.fit.as_ref().map(|f| f.dropped),
                "fit_error": r.fit_error,
            });
            (
                Rendered {
                    stem: "depth_rate",
                    table: r.table(),
                    figure: "Figure 4: depth convergence delta_L = |q_{L,inf} - q_{t=1}| (raw, no intercept adjustment)".into(),
                },
                results,
                Some(r.manifest),
            )
        }
        Study::WidthRate => {
            let pair = cfg.pair()?;
            let depth = cfg.l_list()[0];
            let r = width_rate_study(cfg.scaling(), cfg.n_list(), depth, cfg.trials.unwrap(), &pair, &opts)?;
            let results = json!({
                "L": depth,
                "slope": r.fit.as_ref().map(|f| f.slope),
                "intercept": r.fit.as_ref().map(|f| f.intercept),
                "r_squared": r.fit.as_ref().map(|f| f.r_squared),
                "fit_points_dropped": r.fit.as_ref().map(|f| f.dropped),
                "fit_error": r.fit_error,
            });
            (
                Rendered {
                    stem: "width_rate",
                    table: r.table(),
                    figure: format!("Width convergence at L = {depth}: L2 error of q_{{L,n}} against the flow at t = 1"),
                },
                results,
                Some(r.manifest),
            )
        }
        Study::Joint => {
            let archs = cfg
                .archs
                .as_deref()
                .expect("resolved")
                .iter()
                .map(|a| cfg.architecture(*a))
                .collect::<Result<Vec<_>, _>>()?;
            let pair = cfg.pair()?;
            let r = joint_diagonal_study(cfg.n_list(), &archs, cfg.trials.unwrap(), &pair, &opts)?;
            let std_shrink: serde_json::Map<String, Value> = archs
                .iter()
                .filter_map(|a| {
                    let first = r.row(a.name(), *cfg.n_list().first()?)?;
                    let last = r.row(a.name(), *cfg.n_list().last()?)?;
                    Some((a.name().to_string(), json!(first.summary.std / last.summary.std)))
                })
                .collect();
            let results = json!({ "std_shrink_first_to_last_n": std_shrink });
            (
                Rendered {
                    stem: "joint",
                    table: r.table(),
                    figure: "Figure 3: distribution of q_{L,n} with L = n; references for shaped architectures are width-first only".into(),
                },
                results,
                Some(r.manifest),
            )
        }
    };

    let csv_name = format!("{}.csv", main.stem);
    let dat_name = format!("{}.dat", main.stem);
    let mut artifacts = vec![
        Artifact::new(csv_name.clone(), csv(&main.table)),
        Artifact::new(dat_name.clone(), dat(&main.table, &main.figure)),
    ];
    artifacts.append(&mut extra);
    let mut names: Vec<String> = artifacts.iter().map(|a| a.name.clone()).collect();
    names.push("manifest.json".into());

    let manifest = json!({
        "study": cfg.study().name(),
        "config": cfg,
        "config_file": config_file,
        "output_dir_source": out_source,
        "figure": main.figure,
        "artifacts": names,
        "results": results,
        "run": run_manifest,
        "pair": cfg.pair().ok().map(|p| covlab::experiments::PairRecord::from(&p)),
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    artifacts.push(Artifact::new("manifest.json", text));
    Ok(Outcome { artifacts, results })
}
