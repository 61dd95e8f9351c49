use cate_web::{bootstrap_json, fit_map_json, sweep_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn map_grid_matches_resolution_and_reports_error() {
    let v = parse(fit_map_json(1, 800, 3, 0, 20, 24).unwrap());
    assert_eq!(v["grid"]["values"].as_array().unwrap().len(), 24 * 24);
    assert_eq!(v["points"].as_array().unwrap().len(), 800);
    let leaves = v["n_leaves"].as_u64().unwrap();
    assert!(leaves >= 1);
    assert!(v["mse"].as_f64().unwrap() >= 0.0);
    // every grid value is one of the leaf effects
    let tau_hat: Vec<f64> = v["points"].as_array().unwrap().iter().map(|p| p[3].as_f64().unwrap()).collect();
    let mut distinct = tau_hat.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    assert!(distinct.len() as u64 <= leaves);
}

#[test]
fn large_designs_are_thinned() {
    let v = parse(fit_map_json(1, 4000, 1, 5, 20, 10).unwrap());
    assert_eq!(v["k"], 5);
    assert!(v["points"].as_array().unwrap().len() <= 1500);
}

#[test]
fn sweep_and_bootstrap_shapes() {
    let s = parse(sweep_json(1, 300, 2, 3, 2).unwrap());
    assert_eq!(s["k"], serde_json::json!([1, 2, 3]));
    assert_eq!(s["mean_mse"].as_array().unwrap().len(), 3);

    let b = parse(bootstrap_json(1, 200, 2, 20, 0.9).unwrap());
    let units = b["units"].as_array().unwrap();
    assert_eq!(units.len(), 200);
    for w in units.windows(2) {
        assert!(w[0][0].as_f64().unwrap() <= w[1][0].as_f64().unwrap());
    }
    let c = b["coverage"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&c));
}

#[test]
fn bad_inputs_are_errors() {
    assert!(fit_map_json(7, 600, 1, 0, 20, 10).is_err());
    assert!(fit_map_json(9, 600, 1, 0, 20, 10).is_err());
    assert!(fit_map_json(1, 600, 1, 0, 20, 1).is_err());
    assert!(sweep_json(1, 300, 1, 0, 2).is_err());
}
