//! Parametric stand-in for the quantum phase.
//!
//! The simulator is a trusted third party: it draws every round, then hands
//! Alice and Bob disjoint views. A round becomes a coincidence when Bob's
//! click pattern is reported successful; Alice keeps it when her side looked
//! like a single pair.
//!
//! Multi-pair model: on a double-pair coincidence Alice sees a multi-click
//! pattern with probability 3/4, so undetected multi-pair rounds are a third
//! of the detected ones. Her two photons then share one state, Bob's pair is
//! identically polarised, and Bob sees one click on a matching basis or, on a
//! conjugate basis, one click or two same-basis clicks with equal odds.

use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitcore::{BitString, SessionRng};
use crate::error::{Error, Result};

/// Probability that Alice notices a double pair.
pub const MULTI_DETECTION: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    /// Intrinsic error rate on matching bases.
    pub p_err: f64,
    /// Probability that a non-lost round stems from a double pair.
    pub p_double: f64,
    /// Probability that a round yields no coincidence at all.
    pub p_loss: f64,
    /// Probability of a spurious extra click on Bob's side.
    pub p_dark: f64,
    /// Fault hook: probability that Bob's basis is forced to Alice's.
    pub basis_bias: f64,
    /// Adversarial Bob splits undetected double pairs and learns Alice's bit.
    pub adversarial_split: bool,
    pub seed: u64,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            p_err: 0.0,
            p_double: 0.0,
            p_loss: 0.0,
            p_dark: 0.0,
            basis_bias: 0.0,
            adversarial_split: false,
            seed: 0,
        }
    }
}

impl SourceModel {
    pub fn noiseless(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_double", self.p_double),
            ("p_dark", self.p_dark),
            ("basis_bias", self.basis_bias),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if !(0.0..0.5).contains(&self.p_err) {
            return Err(Error::InvalidParameter(format!("p_err = {} outside [0, 1/2)", self.p_err)));
        }
        // p_loss = 1 would never terminate
        if !(0.0..1.0).contains(&self.p_loss) || self.p_dark >= 1.0 {
            return Err(Error::InvalidParameter(
                "p_loss and p_dark must leave some coincidences".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BobPattern {
    Single { basis: bool, bit: bool },
    DoubleSameBasis { basis: bool },
    Other,
    None,
}

impl BobPattern {
    pub fn name(&self) -> &'static str {
        match self {
            BobPattern::Single { .. } => "single",
            BobPattern::DoubleSameBasis { .. } => "double_same_basis",
            BobPattern::Other => "other",
            BobPattern::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliceRound {
    pub basis: bool,
    pub bit: bool,
    /// Alice saw a pattern incompatible with a single pair.
    pub multi_detected: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub alice: AliceRound,
    /// Bob's basis choice, independent of whether any detector clicked.
    pub bob_basis: bool,
    pub bob: BobPattern,
    /// Ground truth: the round carried a double pair.
    pub multi: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Report {
    /// Rule (a).
    Success(bool),
    /// Rule (b): the bit was drawn uniformly.
    SuccessRandom(bool),
    /// Rule (c).
    Failure,
}

impl Report {
    pub fn bit(&self) -> Option<bool> {
        match *self {
            Report::Success(b) | Report::SuccessRandom(b) => Some(b),
            Report::Failure => None,
        }
    }
}

/// Bob's reporting rules for a click pattern.
pub fn report<R: Rng + ?Sized>(pattern: &BobPattern, rng: &mut R) -> Report {
    match *pattern {
        BobPattern::Single { bit, .. } => Report::Success(bit),
        BobPattern::DoubleSameBasis { .. } => Report::SuccessRandom(rng.gen()),
        BobPattern::Other | BobPattern::None => Report::Failure,
    }
}

pub fn generate_round<R: Rng + ?Sized>(model: &SourceModel, rng: &mut R) -> RoundOutcome {
    let a_basis: bool = rng.gen();
    let a_bit: bool = rng.gen();
    let b_basis = if model.basis_bias > 0.0 && rng.gen_bool(model.basis_bias) {
        a_basis
    } else {
        rng.gen()
    };
    let correlated = |rng: &mut R| {
        if a_basis == b_basis {
            a_bit ^ (model.p_err > 0.0 && rng.gen_bool(model.p_err))
        } else {
            rng.gen()
        }
    };
    let alice = |multi_detected| AliceRound { basis: a_basis, bit: a_bit, multi_detected };

    if model.p_loss > 0.0 && rng.gen_bool(model.p_loss) {
        return RoundOutcome { alice: alice(false), bob_basis: b_basis, bob: BobPattern::None, multi: false };
    }
    let multi = model.p_double > 0.0 && rng.gen_bool(model.p_double);
    let dark = model.p_dark > 0.0 && rng.gen_bool(model.p_dark);
    if !multi {
        let bob = if dark {
            BobPattern::Other
        } else {
            BobPattern::Single { basis: b_basis, bit: correlated(rng) }
        };
        return RoundOutcome { alice: alice(false), bob_basis: b_basis, bob, multi: false };
    }
    let detected = rng.gen_bool(MULTI_DETECTION);
    let bob = if dark {
        BobPattern::Other
    } else if detected {
        // uncorrelated pairs: two independent photons on Bob's side
        if rng.gen() {
            BobPattern::Single { basis: b_basis, bit: rng.gen() }
        } else {
            BobPattern::DoubleSameBasis { basis: b_basis }
        }
    } else if a_basis == b_basis || rng.gen() {
        BobPattern::Single { basis: b_basis, bit: correlated(rng) }
    } else {
        BobPattern::DoubleSameBasis { basis: b_basis }
    };
    RoundOutcome { alice: alice(detected), bob_basis: b_basis, bob, multi: true }
}

/// `N_multi / (3 N_tot)`.
pub fn multi_photon_estimate(n_tot: u64, n_multi: u64) -> Result<f64> {
    if n_tot == 0 {
        return Err(Error::InvalidParameter("N_tot must be positive".into()));
    }
    if n_multi > n_tot {
        return Err(Error::InvalidParameter(format!("N_multi = {n_multi} exceeds N_tot = {n_tot}")));
    }
    Ok(n_multi as f64 / (3.0 * n_tot as f64))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AliceView {
    pub basis: BitString,
    pub outcome: BitString,
    /// Coincidences seen, including multi-click ones.
    pub n_tot: u64,
    pub n_multi: u64,
}

impl AliceView {
    pub fn multi_photon_estimate(&self) -> Result<f64> {
        multi_photon_estimate(self.n_tot, self.n_multi)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BobView {
    pub basis: BitString,
    pub outcome: BitString,
    /// `true` where the bit came from rule (a), `false` for rule (b).
    pub measured: BitString,
    /// Alice's bit on accepted double-pair rounds, present only when the
    /// model lets Bob split pairs.
    pub split_knowledge: Vec<(usize, bool)>,
}

/// Simulator-side bookkeeping never shown to either party.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub raw_rounds: u64,
    /// Accepted rounds that carried a double pair.
    pub accepted_multi: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantumPhase {
    pub alice: AliceView,
    pub bob: BobView,
    pub truth: GroundTruth,
}

pub fn run_quantum_phase(model: &SourceModel, n0: usize) -> Result<QuantumPhase> {
    run_with_dump(model, n0, None)
}

/// Like [`run_quantum_phase`], writing one CSV record per raw round.
pub fn run_quantum_phase_dump(model: &SourceModel, n0: usize, dump: &mut dyn Write) -> Result<QuantumPhase> {
    run_with_dump(model, n0, Some(dump))
}

fn io_err(e: io::Error) -> Error {
    Error::InvalidParameter(format!("round dump: {e}"))
}

fn run_with_dump(model: &SourceModel, n0: usize, mut dump: Option<&mut dyn Write>) -> Result<QuantumPhase> {
    model.validate()?;
    if n0 == 0 {
        return Err(Error::InvalidParameter("N_0 must be positive".into()));
    }
    let mut rng = SessionRng::from_u64(model.seed);
    let mut a_basis = BitString::zeros(0);
    let mut a_bits = BitString::zeros(0);
    let mut b_basis = BitString::zeros(0);
    let mut b_bits = BitString::zeros(0);
    let mut measured = BitString::zeros(0);
    let mut split = Vec::new();
    let mut accepted_multi = Vec::new();
    let (mut n_tot, mut n_multi, mut raw) = (0u64, 0u64, 0u64);
    if let Some(w) = dump.as_deref_mut() {
        writeln!(w, "index,theta_a,x_a,theta_b,pattern,accepted").map_err(io_err)?;
    }
    while a_bits.len() < n0 {
        let round = generate_round(model, &mut rng);
        raw += 1;
        let rep = report(&round.bob, &mut rng);
        let mut accepted = false;
        if let Some(bit) = rep.bit() {
            n_tot += 1;
            if round.alice.multi_detected {
                n_multi += 1;
            } else {
                accepted = true;
                let idx = a_bits.len();
                let mut bob_bit = bit;
                if round.multi {
                    accepted_multi.push(idx);
                    if model.adversarial_split {
                        split.push((idx, round.alice.bit));
                        bob_bit = round.alice.bit;
                    }
                }
                a_basis.push(round.alice.basis);
                a_bits.push(round.alice.bit);
                b_basis.push(round.bob_basis);
                b_bits.push(bob_bit);
                measured.push(matches!(rep, Report::Success(_)));
            }
        }
        if let Some(w) = dump.as_deref_mut() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                raw - 1,
                round.alice.basis as u8,
                round.alice.bit as u8,
                round.bob_basis as u8,
                round.bob.name(),
                accepted as u8
            )
            .map_err(io_err)?;
        }
    }
    Ok(QuantumPhase {
        alice: AliceView { basis: a_basis, outcome: a_bits, n_tot, n_multi },
        bob: BobView { basis: b_basis, outcome: b_bits, measured, split_knowledge: split },
        truth: GroundTruth { raw_rounds: raw, accepted_multi },
    })
}
