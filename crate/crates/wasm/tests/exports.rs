use covlab_wasm::{depth_rate, depth_rate_value, flow_curves_value, sample_kernels_value};

fn f(c: f64) -> f64 {
    (c * c.asin() + (1.0 - c * c).sqrt()) / std::f64::consts::PI + c / 2.0
}

#[test]
fn flow_curve_starts_at_c0_and_euler_tracks_it() {
    let r = flow_curves_value(0.3, 256).unwrap();
    assert_eq!(r.flow[0], [0.0, 0.3]);
    assert!((r.flow.last().unwrap()[0] - 1.0).abs() < 1e-12);
    assert_eq!(r.euler.len(), 257);
    assert!((r.width_first - r.flow_end).abs() < 1e-2);
    // one explicit step at alpha^2 = 1/L; E[relu(u) relu(v)] = f(c)/2 for unit inputs
    let first = r.euler[1][1];
    assert!((first - (0.3 + f(0.3) / 512.0)).abs() < 1e-12, "{first}");
}

#[test]
fn depth_rate_is_first_order() {
    let r = depth_rate_value(0.5, 11).unwrap();
    assert_eq!(r.depths.first(), Some(&4));
    assert_eq!(r.depths.last(), Some(&2048));
    assert!((r.slope.unwrap() + 1.0).abs() < 0.05);
    let json: serde_json::Value = serde_json::from_str(&depth_rate(0.5, 11).unwrap()).unwrap();
    assert_eq!(json["deltas"].as_array().unwrap().len(), 10);
}

#[test]
fn samples_are_reproducible_and_sorted_quantiles() {
    let a = sample_kernels_value("mlp", 16, 4, 40, 3).unwrap();
    let b = sample_kernels_value("mlp", 16, 4, 40, 3).unwrap();
    assert_eq!(a.values, b.values);
    assert!(a.q05 <= a.q50 && a.q50 <= a.q95);
    assert_ne!(a.values, sample_kernels_value("mlp", 16, 4, 40, 4).unwrap().values);
    assert!(sample_kernels_value("resnet", 16, 4, 40, 3).is_err());
    assert!(sample_kernels_value("mlp", 4096, 4096, 100, 3).is_err());
}
