use covlab::experiments::RateFit;
use covlab::theory::{
    covariance_flow, euler_trace, flow_endpoint, infinite_width_trace, mlp_correlation_trace, relu_dual,
    relu_dual_prime, series_limit_kernel,
};
use covlab::{KernelTriple, ScalingSequence, SeriesSpec};

#[test]
fn derivative_matches_finite_differences() {
    let h = 1e-6;
    for i in 1..1000 {
        let c = -0.998 + 1.996 * i as f64 / 1000.0;
        let fd = (relu_dual(c + h).unwrap() - relu_dual(c - h).unwrap()) / (2.0 * h);
        assert!((fd - relu_dual_prime(c).unwrap()).abs() < 1e-6, "c = {c}");
    }
}

#[test]
fn dual_is_nonnegative_and_nondecreasing() {
    let vals: Vec<f64> = (0..=2000).map(|i| relu_dual(-1.0 + i as f64 / 1000.0).unwrap()).collect();
    assert!(vals.iter().all(|v| *v >= 0.0));
    assert!(vals.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn mlp_map_half_step() {
    let c = mlp_correlation_trace(0.5, 1).unwrap();
    assert_eq!(c[0], 0.5);
    assert!((c[1] - 0.608998).abs() < 1e-6);
    assert!(mlp_correlation_trace(1.0, 50).unwrap().iter().all(|x| *x == 1.0));
}

#[test]
fn euler_scheme_is_first_order() {
    let q0 = KernelTriple::new(1.0, 0.3, 0.8);
    let seq = ScalingSequence::normalized_uniform();
    let flow = covariance_flow(q0, 2f64.powi(-16), 1.0).unwrap();
    let mut depths = Vec::new();
    let mut gaps = Vec::new();
    for k in 4..=12 {
        let depth = 1usize << k;
        let gap = euler_trace(&seq, depth, q0)
            .unwrap()
            .iter()
            .map(|(t, q)| (q - flow.value_at(*t).unwrap().q_ab).abs())
            .fold(0.0f64, f64::max);
        depths.push(depth as f64);
        gaps.push(gap);
    }
    let fit = RateFit::fit(&depths, &gaps).unwrap();
    assert!((fit.slope + 1.0).abs() <= 0.1, "slope {}", fit.slope);
    for w in gaps.windows(2) {
        let r = w[1] / w[0];
        assert!((0.4..=0.6).contains(&r), "ratio {r}");
    }
}

#[test]
fn flow_stays_inside_cauchy_schwarz() {
    for c0 in [-1.0, -0.7, 0.0, 0.4, 1.0] {
        let sol = covariance_flow(KernelTriple::new(2.0, c0 * 2f64.sqrt(), 1.0), 1e-3, 1.0).unwrap();
        assert!(sol.values.iter().all(|k| k.satisfies_cauchy_schwarz(1e-12)), "c0 = {c0}");
    }
}

#[test]
fn width_first_trace_converges_to_flow() {
    // doubling the depth halves the gap
    let q0 = KernelTriple::unit(0.5);
    let seq = ScalingSequence::normalized_uniform();
    let flow = flow_endpoint(q0, 1e-5).unwrap().q_ab;
    let gap = |depth| (infinite_width_trace(&seq, depth, q0).unwrap().last().q_ab - flow).abs();
    let r = gap(4096) / gap(2048);
    assert!((0.45..0.55).contains(&r), "{r}");
}

#[test]
fn series_limit_exceeds_every_truncation() {
    let q0 = KernelTriple::unit(0.5);
    let lim = series_limit_kernel(&SeriesSpec::InversePower { p: 1.0 }, q0, 1e-7).unwrap();
    let seq = ScalingSequence::inverse_power(1.0).unwrap();
    let mut prev = 0.0;
    for depth in [1, 10, 100, 1000, 10000] {
        let q = infinite_width_trace(&seq, depth, q0).unwrap().last().q_ab;
        assert!(q > prev && q < lim.kernel.q_ab);
        prev = q;
    }
    assert!(lim.kernel.q_ab - prev < 1e-4);
}
