use qrot_wasm::{bounds_report_json, fig2_curve_json, fig3_curve_json, fig3_params_json, table1_params_json};
use serde_json::Value;

#[test]
fn fig2_curve_matches_reference_points() {
    let v: Value = serde_json::from_str(&fig2_curve_json(0.03, 61, 0.35, 0.01, 0.025, 1.2).unwrap()).unwrap();
    assert_eq!(v["p_max"].as_array().unwrap().len(), 61);
    assert!((v["finite"][0].as_f64().unwrap() - 0.063).abs() < 0.005);
    assert!((v["p_crit"].as_f64().unwrap() - 0.028).abs() < 0.001);
    assert_eq!(v["asymptotic"][60].as_f64().unwrap(), 0.0);
    assert!(fig2_curve_json(0.6, 10, 0.35, 0.01, 0.025, 1.2).is_err());
}

#[test]
fn bounds_report_table1() {
    let v: Value = serde_json::from_str(&bounds_report_json(&table1_params_json(), true).unwrap()).unwrap();
    let eps = v["report"]["eps_max"].as_f64().unwrap();
    assert!((1.91e-8 / 2.0..=1.91e-8 * 2.0).contains(&eps), "{eps}");
    assert_eq!(v["dominant"], "stat");
}

#[test]
fn bounds_report_errors_are_messages() {
    let mut p: Value = serde_json::from_str(&table1_params_json()).unwrap();
    p["p_max"] = 0.4.into();
    let e = bounds_report_json(&p.to_string(), false).unwrap_err();
    assert!(e.contains("rate bracket undefined"), "{e}");
    assert!(bounds_report_json("{", false).unwrap_err().starts_with("parameters"));
}

#[test]
fn fig3_curve_has_a_sharp_threshold() {
    let v: Value = serde_json::from_str(&fig3_curve_json(&fig3_params_json(), 1e-7, 1e5, 1e8, 10).unwrap()).unwrap();
    let threshold = v["threshold"].as_u64().unwrap();
    assert!((5.0e6..5.5e6).contains(&(threshold as f64)));
    for (n0, r) in v["n0"].as_array().unwrap().iter().zip(v["r_key"].as_array().unwrap()) {
        let (n0, r) = (n0.as_u64().unwrap(), r.as_f64().unwrap());
        assert_eq!(r == 0.0, n0 < threshold, "n0 = {n0}");
    }
}
