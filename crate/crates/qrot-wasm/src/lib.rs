//! Browser bindings. Every export takes and returns plain numbers or JSON
//! strings; the `*_json` functions hold the logic so they run natively too.

use qrot::bounds::{eps_max, ProtocolParams};
use qrot::rates::{asymptotic_rate, finite_limit_rate, key_rate, min_n0, p_crit, Fig3Config};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct Fig2Curve {
    pub p_max: Vec<f64>,
    pub asymptotic: Vec<f64>,
    pub finite: Vec<f64>,
    /// Root of the asymptotic curve at `f = 1`.
    pub p_crit: f64,
}

pub fn fig2_curve_json(p_to: f64, points: usize, alpha: f64, delta1: f64, delta2: f64, f: f64) -> Result<String, String> {
    if !(p_to > 0.0 && p_to < 0.5) || points < 2 {
        return Err("need 0 < p_to < 0.5 and at least 2 points".into());
    }
    let mut curve = Fig2Curve {
        p_max: Vec::with_capacity(points),
        asymptotic: Vec::with_capacity(points),
        finite: Vec::with_capacity(points),
        p_crit: p_crit(1.0).map_err(|e| e.to_string())?,
    };
    for i in 0..points {
        let p = p_to * i as f64 / (points - 1) as f64;
        curve.p_max.push(p);
        curve.asymptotic.push(asymptotic_rate(p, 1.0).map_err(|e| e.to_string())?);
        curve.finite.push(finite_limit_rate(p, alpha, delta1, delta2, f).map_err(|e| e.to_string())?);
    }
    Ok(serde_json::to_string(&curve).expect("plain data"))
}

fn parse_params(json: &str) -> Result<ProtocolParams, String> {
    let p: ProtocolParams = serde_json::from_str(json).map_err(|e| format!("parameters: {e}"))?;
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

#[derive(Debug, Serialize)]
struct BoundsOut {
    n_test: u64,
    n_check: u64,
    n_raw: u64,
    dominant: &'static str,
    report: qrot::bounds::BoundReport,
}

pub fn bounds_report_json(params: &str, experimental: bool) -> Result<String, String> {
    let p = parse_params(params)?;
    let report = eps_max(&p, experimental).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&BoundsOut {
        n_test: p.n_test(),
        n_check: p.n_check(),
        n_raw: p.n_raw(),
        dominant: report.dominant().name(),
        report,
    })
    .expect("plain data"))
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Fig3Curve {
    pub n0: Vec<u64>,
    pub r_key: Vec<f64>,
    /// Smallest `N_0` with a positive rate; `None` past the search cap.
    pub threshold: Option<u64>,
    /// `N_0 -> infinity` limit of the rate.
    pub limit: f64,
}

pub fn fig3_curve_json(
    params: &str,
    eps_target: f64,
    n0_from: f64,
    n0_to: f64,
    points_per_decade: usize,
) -> Result<String, String> {
    let p = parse_params(params)?;
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err("eps_target must lie in (0, 1)".into());
    }
    if !(n0_from >= 1.0 && n0_to > n0_from) || !(1..=200).contains(&points_per_decade) {
        return Err("need 1 <= n0_from < n0_to and 1..200 points per decade".into());
    }
    let grid = Fig3Config { params: p, eps_targets: vec![eps_target], n0_from, n0_to, points_per_decade }.n0_grid();
    let mut r_key = Vec::with_capacity(grid.len());
    for &n0 in &grid {
        r_key.push(key_rate(&ProtocolParams { n0, ..p }, eps_target, true).map_err(|e| e.to_string())?.r_key);
    }
    let threshold = min_n0(&p, eps_target, true).map_err(|e| e.to_string())?.map(|(n, _)| n);
    let limit = finite_limit_rate(p.p_max, p.alpha, p.delta1, p.delta2, p.f).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&Fig3Curve { n0: grid, r_key, threshold, limit }).expect("plain data"))
}

pub fn table1_params_json() -> String {
    serde_json::to_string(&ProtocolParams::table1()).expect("plain data")
}

pub fn fig3_params_json() -> String {
    serde_json::to_string(&Fig3Config::default().params).expect("plain data")
}

#[wasm_bindgen]
pub fn fig2_curve(p_to: f64, points: usize, alpha: f64, delta1: f64, delta2: f64, f: f64) -> Result<String, JsError> {
    fig2_curve_json(p_to, points, alpha, delta1, delta2, f).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bounds_report(params: &str, experimental: bool) -> Result<String, JsError> {
    bounds_report_json(params, experimental).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fig3_curve(
    params: &str,
    eps_target: f64,
    n0_from: f64,
    n0_to: f64,
    points_per_decade: usize,
) -> Result<String, JsError> {
    fig3_curve_json(params, eps_target, n0_from, n0_to, points_per_decade).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn table1_params() -> String {
    table1_params_json()
}

#[wasm_bindgen]
pub fn fig3_params() -> String {
    fig3_params_json()
}
