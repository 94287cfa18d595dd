use corral::scenario::reference_scenario;
use corral_web::{cvt_view, lloyd, warp, Demo};

#[test]
fn demo_steps_and_serializes() {
    let mut s = reference_scenario();
    s.duration = 0.5;
    let mut demo = Demo::new(&s).unwrap();
    assert_eq!(demo.record().t, 0.0);
    assert!(demo.advance(10));
    assert!((demo.record().t - 0.1).abs() < 1e-12);
    while demo.advance(7) {}
    assert!((demo.record().t - 0.5).abs() < 1e-12);
    assert!(demo.fault().is_none());
    assert!(!demo.advance(1));

    let scene = serde_json::to_value(demo.scene()).unwrap();
    assert_eq!(scene["obstacles"].as_array().unwrap().len(), 2);
    assert_eq!(scene["virtual_width"], serde_json::json!(4.0));
}

#[test]
fn wrapper_defaults_to_the_reference_scenario() {
    let Ok(mut sim) = corral_web::Simulation::new("") else { panic!("reference scenario builds") };
    assert!(sim.advance(5));
    let frame: serde_json::Value = serde_json::from_str(&sim.frame_json()).unwrap();
    assert_eq!(frame["leaders"].as_array().unwrap().len(), 10);
    assert_eq!(frame["followers_virtual"].as_array().unwrap().len(), 20);
    assert!((frame["t"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    assert!(sim.fault().is_none());
}

#[test]
fn demo_rejects_bad_json() {
    assert!(Demo::from_json("{").is_err());
    let mut v: serde_json::Value = serde_json::from_str(&reference_scenario().to_json()).unwrap();
    v["dt"] = serde_json::json!(0.0);
    let err = Demo::from_json(&v.to_string()).err().unwrap();
    assert!(err.contains("dt"), "{err}");
}

#[test]
fn lloyd_iterations_reach_a_centroidal_tessellation() {
    let mut pts = vec![0.1, 0.1, 0.15, 0.2, 0.3, 0.1, 0.9, 0.8, 0.5, 0.5];
    let e0 = cvt_view(&pts, 2.0, 1.0).unwrap().error;
    for _ in 0..500 {
        pts = lloyd(&pts, 2.0, 1.0, 1.0).unwrap();
    }
    let view = cvt_view(&pts, 2.0, 1.0).unwrap();
    assert!(view.error < 1e-6 * e0, "{} vs {e0}", view.error);
    let area: f64 = view
        .cells
        .iter()
        .map(|c| 0.5 * (0..c.len()).map(|i| c[i].cross(c[(i + 1) % c.len()])).sum::<f64>())
        .sum();
    assert!((area - 2.0).abs() < 1e-9);
}

#[test]
fn bad_point_lists_are_errors() {
    assert!(cvt_view(&[0.1, 0.2, 0.3], 1.0, 1.0).is_err());
    assert!(cvt_view(&[0.5, 0.5, 0.5, 0.5], 1.0, 1.0).is_err());
    assert!(cvt_view(&[2.0, 0.5], 1.0, 1.0).is_err());
}

#[test]
fn warped_grid_hits_the_corners() {
    let quad = [0.0, 0.0, 3.0, 0.5, 2.5, 2.0, 0.2, 1.5];
    let lines = warp(&quad, 4, 9).unwrap();
    assert_eq!(lines.len(), 10);
    let close = |p: corral::Vec2, x: f64, y: f64| (p.x - x).abs() < 1e-9 && (p.y - y).abs() < 1e-9;
    // first row starts at corner 0 and ends at corner 1; last row runs 3 → 2
    assert!(close(lines[0][0], 0.0, 0.0) && close(lines[0][8], 3.0, 0.5));
    assert!(close(lines[4][0], 0.2, 1.5) && close(lines[4][8], 2.5, 2.0));
    // a projective map keeps straight lines straight
    for l in &lines {
        let d = l[l.len() - 1] - l[0];
        for p in l {
            assert!(d.cross(*p - l[0]).abs() < 1e-9 * d.norm());
        }
    }
    assert!(warp(&[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2, 3).is_err());
}
