use covlab::experiments::{
    depth_rate_study, dual_table, flow_curve, grid_study, joint_diagonal_study, reference_kernel, simulate_study,
    width_rate_study, ReferenceKind, StudyOptions,
};
use covlab::nets::{Architecture, NetworkSpec};
use covlab::{Error, InputPair, KernelTriple, ScalingSequence};

fn pair() -> InputPair {
    InputPair::sample_unit(30, 42).unwrap()
}

fn uniform() -> Architecture {
    Architecture::scaled_resnet(ScalingSequence::normalized_uniform())
}

#[test]
fn smoke_grid_is_well_formed() {
    let r = grid_study(&uniform(), &[8], &[2], 2, &pair(), &StudyOptions::default()).unwrap();
    assert_eq!(r.rows.len(), 1);
    let row = r.rows[0];
    assert_eq!((row.n, row.depth, row.trials), (8, 2, 2));
    assert!(row.std_q.is_finite() && row.std_q >= 0.0);
    assert_eq!(r.reference, ReferenceKind::Flow);
    let csv = r.table().to_csv_string();
    assert!(csv.starts_with("n,L,trials,mean_q,std_q,se_q,l2_error,theory_q\n8,2,2,"));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn l2_error_dominates_bias() {
    let r = grid_study(&uniform(), &[8, 32], &[2, 8], 10, &pair(), &StudyOptions::default()).unwrap();
    for row in &r.rows {
        assert!(row.l2_error.powi(2) + 1e-18 >= (row.mean_q - row.theory_q).powi(2));
    }
}

#[test]
fn grid_error_decreases_with_width() {
    let r = grid_study(&uniform(), &[8, 256, 4096], &[2, 8, 64], 100, &pair(), &StudyOptions::default()).unwrap();
    let errs: Vec<f64> = [8, 256, 4096].iter().map(|&n| r.row(n, 64).unwrap().l2_error).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn instability_carries_grid_coordinates() {
    let arch = Architecture::scaled_resnet(ScalingSequence::uniform(0.05).unwrap());
    let err = grid_study(&arch, &[64], &[4000], 2, &pair(), &StudyOptions::default()).unwrap_err();
    assert!(err.is_instability());
    assert!(matches!(err, Error::AtCell { n: 64, depth: 4000, .. }), "{err}");
}

#[test]
fn references_by_scaling() {
    let q0 = KernelTriple::unit(0.5);
    let o = StudyOptions::default();
    let kind = |a: Architecture| reference_kernel(&a, 16, q0, &o).unwrap();
    assert_eq!(kind(uniform()).kind, ReferenceKind::Flow);
    let series = kind(Architecture::scaled_resnet(ScalingSequence::inverse_power(1.0).unwrap()));
    assert_eq!(series.kind, ReferenceKind::SeriesLimit);
    let aggressive = kind(Architecture::scaled_resnet(ScalingSequence::uniform(1.0).unwrap()));
    assert_eq!((aggressive.kind, aggressive.kernel), (ReferenceKind::InputKernel, q0));
    let shaped = kind(Architecture::ShapedMlp);
    assert!(shaped.reference_only && shaped.kind == ReferenceKind::WidthFirst);
}

#[test]
fn depth_rate_contracts() {
    let o = StudyOptions::default();
    let seq = ScalingSequence::normalized_uniform();
    let q0 = pair().kernel();
    let r = depth_rate_study(&seq, &[8, 16, 32, 64, 128], q0, &o).unwrap();
    assert_eq!(r.rows[0].ratio, None);
    assert!(r.fit.is_some());
    assert_eq!(r.table().to_csv_string(), depth_rate_study(&seq, &[8, 16, 32, 64, 128], q0, &o).unwrap().table().to_csv_string());

    let short = depth_rate_study(&seq, &[8, 16], q0, &o).unwrap();
    assert!(short.fit.is_none() && short.fit_error.is_some());
    assert!(depth_rate_study(&seq, &[16, 8, 32], q0, &o).is_err());
    let series = ScalingSequence::inverse_power(1.0).unwrap();
    assert!(matches!(depth_rate_study(&series, &[8, 16, 32], q0, &o), Err(Error::Domain(_))));
}

#[test]
fn width_rate_single_width_still_reports_table() {
    let o = StudyOptions::default();
    let r = width_rate_study(&ScalingSequence::normalized_uniform(), &[16], 4, 50, &pair(), &o).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert!(r.fit.is_none());
    assert!(r.fit_error.unwrap().contains("at least 3"));
    let few = width_rate_study(&ScalingSequence::normalized_uniform(), &[16, 32, 64], 4, 10, &pair(), &o);
    assert!(matches!(few, Err(Error::Invalid { ref key, .. }) if key == "trials"));
}

#[test]
fn width_rate_std_scales_like_inverse_root_width() {
    let o = StudyOptions {
        workers: 2,
        ..StudyOptions::default()
    };
    let r = width_rate_study(&ScalingSequence::normalized_uniform(), &[64, 512, 4096], 64, 100, &pair(), &o).unwrap();
    let ratio = r.rows[0].std_q / r.rows[2].std_q;
    assert!((6.0..=11.0).contains(&ratio), "{ratio}");
}

#[test]
fn joint_study_flags_reference_only() {
    let archs = [uniform(), Architecture::ShapedMlp, Architecture::shaped_resnet(0.5).unwrap()];
    let r = joint_diagonal_study(&[8, 16], &archs, 5, &pair(), &StudyOptions::default()).unwrap();
    assert_eq!(r.rows.len(), 6);
    assert!(!r.row("scaled-resnet", 8).unwrap().reference_only);
    assert!(r.row("shaped-mlp", 16).unwrap().reference_only);
    assert!(r.row("shaped-resnet", 16).unwrap().reference_only);
    let q = r.row("shaped-mlp", 8).unwrap().quantiles;
    assert!(q.q05 <= q.q25 && q.q25 <= q.q50 && q.q50 <= q.q75 && q.q75 <= q.q95);
}

#[test]
fn simulate_study_rows() {
    let spec = NetworkSpec::new(uniform(), 16, 4, 30).unwrap();
    let r = simulate_study(&spec, &pair(), 10, true, &StudyOptions::default()).unwrap();
    assert_eq!(r.rows.len(), 5);
    assert_eq!(r.rows[0].mean_deviation, Some(0.0));
    assert!(r.aux_final_sq.is_some());
    let plain = simulate_study(&spec, &pair(), 10, false, &StudyOptions::default()).unwrap();
    assert!(plain.rows.iter().all(|x| x.mean_deviation.is_none()));
    let mlp = NetworkSpec::new(Architecture::Mlp, 16, 4, 30).unwrap();
    assert!(simulate_study(&mlp, &pair(), 10, true, &StudyOptions::default()).is_err());
}

#[test]
fn theory_tables() {
    let t = dual_table(&[-1.0, 0.0, 1.0]).unwrap().to_csv_string();
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines[0], "c,f,f_prime");
    assert_eq!(lines[1], "-1.0000000000000000e0,0.0000000000000000e0,");
    assert!(lines[2].starts_with("0.0000000000000000e0,3.1830988618379069e-1,5.0000000000000000e-1"));
    let curve = flow_curve(KernelTriple::unit(1.0), 1e-3, 10).unwrap();
    assert_eq!(curve.rows.len(), 11);
}
