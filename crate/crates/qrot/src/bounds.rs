//! Closed-form finite-key security bounds.
//!
//! Every exponential is evaluated through its natural logarithm, so a term far
//! below `f64::MIN_POSITIVE` becomes an exact zero tagged as underflow rather
//! than a NaN or a denormal.
//!
//! Conventions: binary entropy is in bits (`log2`), the binary relative entropy
//! that enters the Chernoff exponent is in nats (`ln`).

use std::f64::consts::{LN_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything below this is reported as 0 with an underflow annotation.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;
/// Upper clamp on any single component; `sqrt(2) * sqrt(2)` is the largest
/// value the statistical term can take.
pub const COMPONENT_CAP: f64 = 2.0;

/// Binary entropy `h(p)` in bits.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-p * p.log2() - (1.0 - p) * (1.0 - p).log2())
}

/// `D(q || p)` between Bernoulli distributions, in nats.
pub fn binary_kl(q: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::ProbabilityOutOfRange(q));
    }
    let a = if q == 0.0 { 0.0 } else { q * (q / p).ln() };
    let b = if q == 1.0 {
        0.0
    } else {
        (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln()
    };
    Ok(a + b)
}

/// Sampling a fraction `alpha` of `n` positions: test set against the whole.
pub fn hoeffding_a(n: f64, alpha: f64, delta: f64) -> f64 {
    2.0 * (-2.0 * alpha * n * delta * delta).exp()
}

/// Test set against its complement.
pub fn hoeffding_b(n: f64, alpha: f64, delta: f64) -> f64 {
    2.0 * (-2.0 * alpha * (1.0 - alpha).powi(2) * n * delta * delta).exp()
}

/// A random subset of at least `n0` test positions against the complement.
pub fn hoeffding_c(n: f64, alpha: f64, delta: f64, n0: f64) -> f64 {
    2.0 * ((-0.5 * alpha * (1.0 - alpha).powi(2) * n * delta * delta).exp()
        + (-0.5 * n0 * delta * delta).exp())
}

fn floor_size(x: f64) -> u64 {
    // absorb representation error on products that are integral on paper
    (x * (1.0 + 4.0 * f64::EPSILON)).floor().max(0.0) as u64
}

/// Full protocol parameter record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Number of shared signals `N_0`.
    pub n0: u64,
    /// Test ratio.
    pub alpha: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub p_max: f64,
    /// Output length in bits.
    pub n: u64,
    /// Reconciliation efficiency.
    pub f: f64,
    /// Accepted multi-photon ratio; 0 disables the multi-photon amendment.
    pub p_multi: f64,
    pub eps_ir: f64,
    pub eps_bind: f64,
}

impl ProtocolParams {
    /// The experimental parameter row reported for the 128-bit ROT
    /// demonstration.
    pub fn table1() -> Self {
        Self {
            n0: 5_860_000,
            alpha: 0.35,
            delta1: 9.00e-3,
            delta2: 3e-3,
            p_max: 0.0114,
            n: 128,
            f: 1.64,
            p_multi: 3.67e-3,
            eps_ir: 2f64.powi(-32),
            eps_bind: 2f64.powi(-32),
        }
    }

    pub fn n_test(&self) -> u64 {
        floor_size(self.alpha * self.n0 as f64)
    }

    pub fn n_check(&self) -> u64 {
        floor_size((0.5 - self.delta2) * self.alpha * self.n0 as f64)
    }

    pub fn n_raw(&self) -> u64 {
        floor_size((0.5 - self.delta2) * (1.0 - self.alpha) * self.n0 as f64)
    }

    /// Range checks that do not involve the entropy bracket.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n0 == 0 {
            return bad("N_0 must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} outside (0, 1)", self.alpha));
        }
        if !(self.delta1 >= 0.0) || !(self.delta2 >= 0.0) || self.delta2 >= 0.5 {
            return bad(format!(
                "tolerances delta1 = {}, delta2 = {} invalid",
                self.delta1, self.delta2
            ));
        }
        if !(0.0..0.5).contains(&self.p_max) {
            return bad(format!("p_max = {} outside [0, 1/2)", self.p_max));
        }
        if !(self.f >= 1.0) {
            return bad(format!("IR efficiency f = {} < 1", self.f));
        }
        if !(self.p_multi >= 0.0) {
            return bad(format!("p_multi = {} negative", self.p_multi));
        }
        if !(0.0..=1.0).contains(&self.eps_ir) || !(0.0..=1.0).contains(&self.eps_bind) {
            return bad("scheme securities must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// The error-rate argument `(p_max + delta1) / (1/2 - delta2)` of the
    /// smooth min-entropy term.
    pub fn entropy_argument(&self) -> f64 {
        (self.p_max + self.delta1) / (0.5 - self.delta2)
    }

    /// Per-raw-bit entropy left after parameter estimation and syndrome
    /// leakage; with `experimental` the multi-photon leak is subtracted too.
    pub fn rate_bracket(&self, experimental: bool) -> Result<f64> {
        self.validate()?;
        let arg = self.entropy_argument();
        if arg >= 0.5 {
            return Err(Error::RateBracketUndefined(arg));
        }
        let q = self.p_max + self.delta1;
        let mut bracket = 0.5 - 2.0 * self.delta2 / (1.0 - 2.0 * self.delta2)
            - binary_entropy(arg)?
            - self.f * binary_entropy(q)?;
        if experimental {
            bracket -= self.p_multi / (0.5 - self.delta2);
        }
        Ok(bracket)
    }
}

/// Labels of the individual bound components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Correct,
    Stat,
    Kl,
    Bind,
    Lhl,
}

impl Component {
    pub fn name(self) -> &'static str {
        match self {
            Component::Correct => "correct",
            Component::Stat => "stat",
            Component::Kl => "kl",
            Component::Bind => "bind",
            Component::Lhl => "lhl",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub eps_correct: f64,
    pub eps_stat: f64,
    pub eps_kl: f64,
    pub eps_bind: f64,
    pub eps_lhl: f64,
    pub eps_receiver: f64,
    pub eps_max: f64,
    pub experimental: bool,
    /// Components that fell below [`UNDERFLOW_FLOOR`] and were reported as 0.
    pub underflow: Vec<Component>,
}

impl BoundReport {
    /// Largest component by value.
    pub fn dominant(&self) -> Component {
        [
            (Component::Correct, self.eps_correct),
            (Component::Stat, self.eps_stat),
            (Component::Kl, self.eps_kl),
            (Component::Bind, self.eps_bind),
            (Component::Lhl, self.eps_lhl),
        ]
        .into_iter()
        .fold((Component::Correct, f64::NEG_INFINITY), |best, c| {
            if c.1 > best.1 {
                c
            } else {
                best
            }
        })
        .0
    }

    /// `key=value` lines in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("eps_correct", self.eps_correct),
            ("eps_stat", self.eps_stat),
            ("eps_kl", self.eps_kl),
            ("eps_bind", self.eps_bind),
            ("eps_lhl", self.eps_lhl),
            ("eps_receiver", self.eps_receiver),
            ("eps_max", self.eps_max),
        ] {
            s.push_str(&format!("{k}={v:.6e}\n"));
        }
        s.push_str(&format!(
            "variant={}\n",
            if self.experimental {
                "experimental"
            } else {
                "theoretical"
            }
        ));
        let uf: Vec<_> = self
            .underflow
            .iter()
            .map(|c| c.name())
            .collect();
        s.push_str(&format!("underflow={}\n", uf.join(",")));
        s
    }
}

fn from_ln(ln_value: f64, which: Component, underflow: &mut Vec<Component>) -> f64 {
    let v = ln_value.min(COMPONENT_CAP.ln()).exp();
    if v < UNDERFLOW_FLOOR {
        underflow.push(which);
        0.0
    } else {
        v
    }
}

fn ln_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Correctness error `2^{-(N_raw - n)/2} + 2 eps_IR`.
pub fn eps_correctness(params: &ProtocolParams) -> Result<f64> {
    params.validate()?;
    let n_raw = params.n_raw();
    if n_raw <= params.n {
        return Err(Error::InvalidParameter(format!(
            "N_raw = {n_raw} must exceed n = {}",
            params.n
        )));
    }
    let ln_first = -0.5 * (n_raw - params.n) as f64 * LN_2;
    let first = if ln_first < UNDERFLOW_FLOOR.ln() {
        0.0
    } else {
        ln_first.exp()
    };
    Ok(first + 2.0 * params.eps_ir)
}

/// Receiver-side components: `(stat, kl, bind, lhl)`.
pub fn eps_receiver_components(
    params: &ProtocolParams,
    experimental: bool,
    underflow: &mut Vec<Component>,
) -> Result<(f64, f64, f64, f64)> {
    components_with_leak(params, experimental, 0, underflow)
}

fn components_with_leak(
    params: &ProtocolParams,
    experimental: bool,
    extra_leak_bits: u64,
    underflow: &mut Vec<Component>,
) -> Result<(f64, f64, f64, f64)> {
    let bracket = params.rate_bracket(experimental)?;
    let d1sq = params.delta1 * params.delta1;
    let ln_t1 = -0.5 * (1.0 - params.alpha).powi(2) * params.n_test() as f64 * d1sq;
    let ln_t2 = -0.5 * params.n_check() as f64 * d1sq;
    let ln_stat = 0.5 * LN_2 + 0.5 * ln_sum_exp(ln_t1, ln_t2);
    let stat = from_ln(ln_stat, Component::Stat, underflow);

    let kl = binary_kl(0.5 - params.delta2, 0.5)?;
    let ln_kl = -kl * (1.0 - params.alpha) * params.n0 as f64;
    let kl_term = from_ln(ln_kl, Component::Kl, underflow);

    let ln_lhl = -LN_2
        + 0.5 * LN_2 * ((params.n + extra_leak_bits) as f64 - params.n_raw() as f64 * bracket);
    let lhl = from_ln(ln_lhl, Component::Lhl, underflow);

    Ok((stat, kl_term, params.eps_bind, lhl))
}

/// Dishonest-receiver security `eps'` (or its multi-photon corrected variant).
pub fn eps_receiver(params: &ProtocolParams, experimental: bool) -> Result<f64> {
    let (s, k, b, l) = eps_receiver_components(params, experimental, &mut Vec::new())?;
    Ok(s + k + b + l)
}

/// `eps_max = eps + eps'` with the itemized breakdown.
pub fn eps_max(params: &ProtocolParams, experimental: bool) -> Result<BoundReport> {
    eps_max_strict(params, experimental, 0)
}

/// [`eps_max`] with `tag_bits` of reconciliation tag charged as extra leakage
/// on top of the syndrome.
pub fn eps_max_strict(params: &ProtocolParams, experimental: bool, tag_bits: u64) -> Result<BoundReport> {
    let eps_correct = eps_correctness(params)?;
    let mut underflow = Vec::new();
    let (eps_stat, eps_kl, eps_bind, eps_lhl) =
        components_with_leak(params, experimental, tag_bits, &mut underflow)?;
    let eps_receiver = eps_stat + eps_kl + eps_bind + eps_lhl;
    Ok(BoundReport {
        eps_correct,
        eps_stat,
        eps_kl,
        eps_bind,
        eps_lhl,
        eps_receiver,
        eps_max: eps_correct + eps_receiver,
        experimental,
        underflow,
    })
}

/// `sqrt(2) * (stat bracket)^(1/2)` written directly, for cross-checks.
pub fn stat_term_direct(params: &ProtocolParams) -> f64 {
    let d1sq = params.delta1 * params.delta1;
    SQRT_2
        * ((-0.5 * (1.0 - params.alpha).powi(2) * params.n_test() as f64 * d1sq).exp()
            + (-0.5 * params.n_check() as f64 * d1sq).exp())
        .sqrt()
}
