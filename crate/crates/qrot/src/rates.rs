//! Key rates, critical error rates and critical signal counts.
//!
//! Everything here is a search over [`crate::bounds`]. `eps_max` is
//! non-decreasing in the output length `n` and non-increasing in `N_0`, so
//! both `n_max` and the smallest admissible `N_0` are found by bisection.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bounds::{binary_entropy, eps_max, BoundReport, ProtocolParams};
use crate::error::{Error, Result};

/// Largest `N_0` any search will consider.
pub const N0_CAP: u64 = 1 << 44;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub p_max: f64,
    /// `n_max / N_0`.
    pub r_key: f64,
    /// Parameters with `n = n_max`.
    pub params: ProtocolParams,
    /// `None` when `n_max = 0`.
    pub eps_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub n_crit: u64,
    pub alpha: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub eps_max: f64,
    pub n_target: u64,
    /// Full parameter record at the optimum, `n0 = n_crit` and `n = n_target`.
    pub params: ProtocolParams,
}

fn within_target(p: &ProtocolParams, eps_target: f64, experimental: bool) -> Option<BoundReport> {
    if p.n_raw() <= p.n {
        return None;
    }
    eps_max(p, experimental)
        .ok()
        .filter(|r| r.eps_max <= eps_target)
}

/// Longest output meeting `eps_target`; the `n` field of `params` is ignored.
pub fn n_max(params: &ProtocolParams, eps_target: f64, experimental: bool) -> Result<u64> {
    params.validate()?;
    match params.rate_bracket(experimental) {
        Ok(b) if b > 0.0 => {}
        Ok(_) | Err(Error::RateBracketUndefined(_)) => return Ok(0),
        Err(e) => return Err(e),
    }
    let ok = |n: u64| {
        let mut p = *params;
        p.n = n;
        within_target(&p, eps_target, experimental).is_some()
    };
    let n_raw = params.n_raw();
    if n_raw < 2 || !ok(1) {
        return Ok(0);
    }
    // ok(lo) holds, ok(hi) fails or hi is out of range
    let (mut lo, mut hi) = (1u64, n_raw);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn key_rate(params: &ProtocolParams, eps_target: f64, experimental: bool) -> Result<RatePoint> {
    let n = n_max(params, eps_target, experimental)?;
    let mut p = *params;
    p.n = n;
    let eps = if n == 0 {
        None
    } else {
        Some(eps_max(&p, experimental)?.eps_max)
    };
    Ok(RatePoint {
        p_max: params.p_max,
        r_key: n as f64 / params.n0 as f64,
        params: p,
        eps_max: eps,
    })
}

/// `1/2 - h(2p) - f h(p)`: the bracket with every tolerance at zero.
pub fn asymptotic_bracket(p_max: f64, f: f64) -> Result<f64> {
    if !(0.0..0.25).contains(&p_max) {
        return Err(Error::ProbabilityOutOfRange(p_max));
    }
    Ok(0.5 - binary_entropy(2.0 * p_max)? - f * binary_entropy(p_max)?)
}

/// `R_key` for `alpha, delta1, delta2 -> 0` and `N_0 -> infinity`.
pub fn asymptotic_rate(p_max: f64, f: f64) -> Result<f64> {
    Ok((0.5 * asymptotic_bracket(p_max, f)?).max(0.0))
}

/// `n_max` in the tolerance-free limit at finite `N_0`: the statistical terms
/// are dropped and only the leftover-hash term is charged against the target.
pub fn n_max_asymptotic(n0: u64, p_max: f64, f: f64, eps_target: f64) -> Result<u64> {
    if !(eps_target > 0.0) {
        return Err(Error::InvalidParameter(format!("eps_target {eps_target} must be positive")));
    }
    let n_raw = (n0 / 2) as f64;
    let limit = n_raw * asymptotic_bracket(p_max, f)? + 2.0 * (2.0 * eps_target).log2();
    Ok(if limit > 0.0 { limit.floor() as u64 } else { 0 })
}

/// Root of `1/2 - h(2p) - f h(p)` in `(0, 1/4)`, to `1e-9`.
pub fn p_crit(f: f64) -> Result<f64> {
    if !(f >= 1.0) || !f.is_finite() {
        return Err(Error::InvalidParameter(format!("IR efficiency f = {f} < 1")));
    }
    let (mut lo, mut hi) = (0.0f64, 0.25 - 1e-12);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if asymptotic_bracket(mid, f)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest `p_max` with a positive bracket at the tolerances of `params`.
pub fn p_crit_finite(params: &ProtocolParams, experimental: bool) -> Result<f64> {
    let positive = |p: f64| {
        let mut q = *params;
        q.p_max = p;
        matches!(q.rate_bracket(experimental), Ok(b) if b > 0.0)
    };
    if !positive(0.0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, 0.5 - 1e-12);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if positive(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Smallest `N_0` at which `params` with output length `params.n` meets
/// `eps_target`, or `None` below [`N0_CAP`].
pub fn min_n0(
    params: &ProtocolParams,
    eps_target: f64,
    experimental: bool,
) -> Result<Option<(u64, BoundReport)>> {
    let mut p = *params;
    p.n0 = N0_CAP;
    p.validate()?;
    if !matches!(p.rate_bracket(experimental), Ok(b) if b > 0.0) {
        return Ok(None);
    }
    if 2.0 * p.eps_ir + p.eps_bind >= eps_target {
        return Ok(None);
    }
    let at = |n0: u64| {
        let mut q = p;
        q.n0 = n0;
        within_target(&q, eps_target, experimental)
    };
    let mut hi = 64u64;
    let report = loop {
        if let Some(r) = at(hi) {
            break r;
        }
        if hi >= N0_CAP {
            return Ok(None);
        }
        hi = (hi * 2).min(N0_CAP);
    };
    let (mut lo, mut best) = (hi / 2, report);
    // at(lo) fails (or lo is below the first probe), at(hi) holds
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match at(mid) {
            Some(r) => {
                hi = mid;
                best = r;
            }
            None => lo = mid,
        }
    }
    Ok(Some((hi, best)))
}

/// One search dimension mapped from `u in [0, 1]`.
#[derive(Clone, Copy, Debug)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    steps: usize,
}

impl Axis {
    fn value(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if self.log {
            self.lo * (self.hi / self.lo).powf(u)
        } else {
            self.lo + (self.hi - self.lo) * u
        }
    }

    fn step(&self) -> f64 {
        if self.steps > 1 {
            1.0 / (self.steps - 1) as f64
        } else {
            0.0
        }
    }

    fn coarse(&self) -> Vec<f64> {
        (0..self.steps).map(|i| i as f64 * self.step()).collect()
    }

    /// 21 points spaced a tenth of a coarse step around `u`.
    fn fine(&self, u: f64) -> Vec<f64> {
        let h = self.step() / 10.0;
        let mut out: Vec<f64> = (-10..=10)
            .map(|k| (u + k as f64 * h).clamp(0.0, 1.0))
            .collect();
        out.dedup();
        out
    }
}

/// Resolution of the tolerance search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub alpha_steps: usize,
    pub delta1_steps: usize,
    pub delta2_steps: usize,
    /// Second pass at ten times the resolution around the coarse optimum.
    pub refine: bool,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            alpha_steps: 10,
            delta1_steps: 10,
            delta2_steps: 10,
            refine: true,
        }
    }
}

impl Grid {
    pub fn coarse(steps: usize) -> Self {
        Self {
            alpha_steps: steps,
            delta1_steps: steps,
            delta2_steps: steps,
            refine: false,
        }
    }
}

pub const ALPHA_RANGE: (f64, f64) = (0.05, 0.5);
pub const DELTA1_MIN: f64 = 1e-4;
pub const DELTA2_RANGE: (f64, f64) = (1e-4, 0.05);

/// Problem statement for [`n_crit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CritConfig {
    pub eps_target: f64,
    pub p_max: f64,
    pub f: f64,
    pub p_multi: f64,
    pub n_target: u64,
    pub eps_ir: f64,
    pub eps_bind: f64,
}

impl CritConfig {
    fn params(&self, alpha: f64, delta1: f64, delta2: f64) -> ProtocolParams {
        ProtocolParams {
            n0: N0_CAP,
            alpha,
            delta1,
            delta2,
            p_max: self.p_max,
            n: self.n_target,
            f: self.f,
            p_multi: self.p_multi,
            eps_ir: self.eps_ir,
            eps_bind: self.eps_bind,
        }
    }
}

type Candidate = (u64, f64, f64, f64, f64, [f64; 3]);

fn lexicographic(a: &Candidate, b: &Candidate) -> Ordering {
    a.0.cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.total_cmp(&b.2))
        .then(a.3.total_cmp(&b.3))
}

/// Smallest `N_0` over the tolerance grid at which an `n_target`-bit ROT
/// meets `eps_target`. `delta1` ranges over `[1e-4, p_crit(f) - p_max)`.
pub fn n_crit(config: &CritConfig, grid: &Grid) -> Result<OptimizeResult> {
    if grid.alpha_steps == 0 || grid.delta1_steps == 0 || grid.delta2_steps == 0 {
        return Err(Error::InvalidParameter("grid needs at least one step per axis".into()));
    }
    if !(config.eps_target > 0.0 && config.eps_target <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps_target {} outside (0, 1]",
            config.eps_target
        )));
    }
    if config.n_target == 0 {
        return Err(Error::InvalidParameter("n_target must be positive".into()));
    }
    let pc = p_crit(config.f)?;
    let gap = pc - config.p_max;
    if gap <= DELTA1_MIN {
        return Err(Error::Infeasible(format!(
            "p_max = {} is not below p_crit(f = {}) = {pc:.6}",
            config.p_max, config.f
        )));
    }
    let d1_steps = grid.delta1_steps;
    let axes = [
        Axis { lo: ALPHA_RANGE.0, hi: ALPHA_RANGE.1, log: false, steps: grid.alpha_steps },
        Axis {
            lo: DELTA1_MIN,
            hi: DELTA1_MIN + (gap - DELTA1_MIN) * (d1_steps.max(2) - 1) as f64 / d1_steps.max(2) as f64,
            log: false,
            steps: d1_steps,
        },
        Axis { lo: DELTA2_RANGE.0, hi: DELTA2_RANGE.1, log: true, steps: grid.delta2_steps },
    ];

    let evaluate = |u: [f64; 3]| -> Result<Option<Candidate>> {
        let (a, d1, d2) = (axes[0].value(u[0]), axes[1].value(u[1]), axes[2].value(u[2]));
        let p = config.params(a, d1, d2);
        Ok(min_n0(&p, config.eps_target, true)?.map(|(n0, r)| (n0, a, d1, d2, r.eps_max, u)))
    };
    let search = |us: [Vec<f64>; 3]| -> Result<Option<Candidate>> {
        let mut best: Option<Candidate> = None;
        for &u0 in &us[0] {
            for &u1 in &us[1] {
                for &u2 in &us[2] {
                    if let Some(c) = evaluate([u0, u1, u2])? {
                        if best.as_ref().is_none_or(|b| lexicographic(&c, b) == Ordering::Less) {
                            best = Some(c);
                        }
                    }
                }
            }
        }
        Ok(best)
    };

    let mut best = search([axes[0].coarse(), axes[1].coarse(), axes[2].coarse()])?;
    if grid.refine {
        if let Some(c) = best {
            let u = c.5;
            if let Some(fine) = search([axes[0].fine(u[0]), axes[1].fine(u[1]), axes[2].fine(u[2])])? {
                if lexicographic(&fine, &c) == Ordering::Less {
                    best = Some(fine);
                }
            }
        }
    }
    let (n0, alpha, delta1, delta2, eps, _) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no grid point reaches eps_max <= {:e} with N_0 <= {N0_CAP}",
            config.eps_target
        ))
    })?;
    let mut params = config.params(alpha, delta1, delta2);
    params.n0 = n0;
    Ok(OptimizeResult {
        n_crit: n0,
        alpha,
        delta1,
        delta2,
        eps_max: eps,
        n_target: config.n_target,
        params,
    })
}

/// `R_OT = R_c / N_crit`.
pub fn ot_rate(coincidence_rate: f64, n_crit: u64) -> Result<f64> {
    if n_crit == 0 {
        return Err(Error::InvalidParameter("N_crit must be positive".into()));
    }
    if !(coincidence_rate >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "coincidence rate {coincidence_rate} must be non-negative"
        )));
    }
    Ok(coincidence_rate / n_crit as f64)
}

/// One row of a user-supplied source characterisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourcePoint {
    pub pump_power: f64,
    pub coincidence_rate: f64,
    pub qber: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtRow {
    pub source: SourcePoint,
    /// `None` when the error rate admits no ROT.
    pub n_crit: Option<u64>,
    pub r_ot: f64,
}

/// `R_OT` for each source point, treating its error rate as `p_max`.
pub fn ot_table(points: &[SourcePoint], base: &CritConfig, grid: &Grid) -> Result<Vec<OtRow>> {
    points
        .iter()
        .map(|&source| {
            let config = CritConfig { p_max: source.qber, ..*base };
            match n_crit(&config, grid) {
                Ok(r) => Ok(OtRow {
                    source,
                    n_crit: Some(r.n_crit),
                    r_ot: ot_rate(source.coincidence_rate, r.n_crit)?,
                }),
                Err(Error::Infeasible(_)) => Ok(OtRow { source, n_crit: None, r_ot: 0.0 }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Ten significant digits, `.` decimal point.
pub fn csv_float(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.9e}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2Config {
    pub p_from: f64,
    pub p_to: f64,
    pub points: usize,
    /// Tolerances of the finite curve, evaluated in the `N_0 -> infinity` limit.
    pub alpha: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub f: f64,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Self {
            p_from: 0.0,
            p_to: 0.03,
            points: 61,
            alpha: 0.35,
            delta1: 0.01,
            delta2: 0.025,
            f: 1.2,
        }
    }
}

/// `(1/2 - delta2)(1 - alpha)` times the bracket, floored at 0.
pub fn finite_limit_rate(p_max: f64, alpha: f64, delta1: f64, delta2: f64, f: f64) -> Result<f64> {
    let p = ProtocolParams {
        n0: 1,
        alpha,
        delta1,
        delta2,
        p_max,
        n: 0,
        f,
        p_multi: 0.0,
        eps_ir: 0.0,
        eps_bind: 0.0,
    };
    Ok(match p.rate_bracket(false) {
        Ok(b) => ((0.5 - delta2) * (1.0 - alpha) * b).max(0.0),
        Err(Error::RateBracketUndefined(_)) => 0.0,
        Err(e) => return Err(e),
    })
}

/// Columns `p_max, r_key_asymptotic, r_key_finite`.
pub fn fig2_csv(c: &Fig2Config) -> Result<String> {
    if c.points < 2 || !(c.p_to > c.p_from) {
        return Err(Error::InvalidParameter("fig2 needs p_to > p_from and 2+ points".into()));
    }
    let mut out = String::from("p_max,r_key_asymptotic,r_key_finite\n");
    for i in 0..c.points {
        let p = c.p_from + (c.p_to - c.p_from) * i as f64 / (c.points - 1) as f64;
        let blue = asymptotic_rate(p, 1.0)?;
        let orange = finite_limit_rate(p, c.alpha, c.delta1, c.delta2, c.f)?;
        let _ = writeln!(out, "{},{},{}", csv_float(p), csv_float(blue), csv_float(orange));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Config {
    pub params: ProtocolParams,
    pub eps_targets: Vec<f64>,
    pub n0_from: f64,
    pub n0_to: f64,
    pub points_per_decade: usize,
}

impl Default for Fig3Config {
    fn default() -> Self {
        Self {
            params: ProtocolParams {
                n0: 1,
                alpha: 0.35,
                delta1: 9.2e-3,
                delta2: 3e-3,
                p_max: 0.01,
                n: 1,
                f: 1.2,
                p_multi: 0.0,
                eps_ir: 0.0,
                eps_bind: 0.0,
            },
            eps_targets: vec![1e-3, 1e-5, 1e-7, 1e-9],
            n0_from: 1e5,
            n0_to: 1e8,
            points_per_decade: 40,
        }
    }
}

impl Fig3Config {
    pub fn n0_grid(&self) -> Vec<u64> {
        let decades = (self.n0_to / self.n0_from).log10();
        let steps = (decades * self.points_per_decade as f64).round().max(1.0) as usize;
        let mut out: Vec<u64> = (0..=steps)
            .map(|i| (self.n0_from * 10f64.powf(i as f64 / self.points_per_decade as f64)).round() as u64)
            .collect();
        out.dedup();
        out
    }
}

/// Long format `eps_target, n0, r_key`.
pub fn fig3_csv(c: &Fig3Config) -> Result<String> {
    if !(c.n0_from >= 1.0 && c.n0_to > c.n0_from) || c.points_per_decade == 0 {
        return Err(Error::InvalidParameter("fig3 needs 1 <= n0_from < n0_to".into()));
    }
    let mut out = String::from("eps_target,n0,r_key\n");
    for &eps in &c.eps_targets {
        for n0 in c.n0_grid() {
            let mut p = c.params;
            p.n0 = n0;
            let r = key_rate(&p, eps, true)?.r_key;
            let _ = writeln!(out, "{},{n0},{}", csv_float(eps), csv_float(r));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig4Config {
    pub base: CritConfig,
    pub eps_targets: Vec<f64>,
    pub grid: Grid,
}

impl Default for Fig4Config {
    fn default() -> Self {
        Self {
            base: CritConfig {
                eps_target: 1e-7,
                p_max: 0.01,
                f: 1.2,
                p_multi: 0.0,
                n_target: 1,
                eps_ir: 0.0,
                eps_bind: 0.0,
            },
            eps_targets: (2..=12).map(|k| 10f64.powi(-k)).collect(),
            grid: Grid::default(),
        }
    }
}

/// Columns `neg_log10_eps, n_crit, alpha, delta1, delta2`; infeasible targets
/// are skipped.
pub fn fig4_csv(c: &Fig4Config) -> Result<String> {
    let mut out = String::from("neg_log10_eps,n_crit,alpha,delta1,delta2\n");
    for &eps in &c.eps_targets {
        let config = CritConfig { eps_target: eps, ..c.base };
        match n_crit(&config, &c.grid) {
            Ok(r) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    csv_float(-eps.log10()),
                    r.n_crit,
                    csv_float(r.alpha),
                    csv_float(r.delta1),
                    csv_float(r.delta2)
                );
            }
            Err(Error::Infeasible(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
