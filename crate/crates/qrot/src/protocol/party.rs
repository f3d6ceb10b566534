use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::message::{AbortReason, Message, MessageType, SessionConfig};
use crate::bitcore::{sample_from, sample_subset, BitString, IndexSet, SessionRng};
use crate::commit::{Challenge, CommitKey, Opening};
use crate::pamp::ToeplitzSeed;
use crate::qsim::{AliceView, BobView};
use crate::recon::IrCode;
use crate::wire::Frame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Handshake,
    Quantum,
    Challenge,
    Commit,
    Test,
    Check,
    Bases,
    Separate,
    Syndrome,
    Hash,
    Done,
    Aborted { reason: AbortReason, by_peer: bool },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SenderOutput {
    pub m0: BitString,
    pub m1: BitString,
}

impl SenderOutput {
    /// The string a receiver with choice `c` holds. Bob's matching-basis set
    /// sits at position `c` of the separation pair, so he learns `m_c`.
    pub fn get(&self, c: bool) -> &BitString {
        if c {
            &self.m1
        } else {
            &self.m0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReceiverOutput {
    pub c: bool,
    pub m: BitString,
}

/// Values the sender learns while checking the test set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SenderStats {
    /// `|I_s|`.
    pub checked: usize,
    /// Error rate on `I_s`.
    pub p_estimate: f64,
    pub multi_estimate: Option<f64>,
}

/// Deviations a dishonest or faulty sender may apply.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SenderHooks {
    /// Flip one bit in every syndrome before sending.
    pub corrupt_syndrome: bool,
}

/// Deviations a dishonest or faulty receiver may apply.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReceiverHooks {
    /// Commit to `x_B` flipped with this probability.
    pub flip_committed_rate: f64,
    /// Override the sampled choice bit; the draw still happens.
    pub force_choice: Option<bool>,
    /// Send openings in place of commitments.
    pub skip_commitments: bool,
}

/// One party's reaction to an incoming frame.
pub trait Party {
    fn start(&mut self) -> Vec<Message>;
    fn handle(&mut self, msg: Message) -> Vec<Message>;
    fn phase(&self) -> Phase;
    fn config(&self) -> &SessionConfig;
    /// Local abort from outside the state machine (transport trouble).
    fn abort(&mut self, reason: AbortReason) -> Vec<Message>;

    fn is_finished(&self) -> bool {
        matches!(self.phase(), Phase::Done | Phase::Aborted { .. })
    }

    fn handle_frame(&mut self, frame: &Frame) -> Vec<Message> {
        match Message::decode(frame, Some(self.config())) {
            Ok(m) => self.handle(m),
            // an undecodable syndrome is a reconciliation failure
            Err(_) if frame.msg_type == MessageType::Syndromes as u8 => self.abort(AbortReason::IrFailed),
            Err(_) => self.abort(AbortReason::ProtocolError),
        }
    }
}

/// Complement positions where the bases agree and where they differ.
/// `theta_a` lists Alice's bases over `complement` in order.
pub fn split_bases(
    complement: &IndexSet,
    theta_a: &BitString,
    theta_b: &BitString,
) -> std::result::Result<(Vec<u32>, Vec<u32>), AbortReason> {
    if theta_a.len() != complement.len() || theta_b.len() != complement.universe() {
        return Err(AbortReason::ProtocolError);
    }
    let (mut same, mut diff) = (Vec::new(), Vec::new());
    for (k, i) in complement.iter().enumerate() {
        if theta_a.bit(k) == theta_b.bit(i) {
            same.push(i as u32);
        } else {
            diff.push(i as u32);
        }
    }
    Ok((same, diff))
}

/// Uniform `N_raw`-subsets `(I_0, I_1)` of the matching and non-matching
/// positions.
pub fn partition_bases<R: RngCore + ?Sized>(
    rng: &mut R,
    complement: &IndexSet,
    theta_a: &BitString,
    theta_b: &BitString,
    n_raw: usize,
) -> std::result::Result<(IndexSet, IndexSet), AbortReason> {
    let (same, diff) = split_bases(complement, theta_a, theta_b)?;
    if same.len() < n_raw || diff.len() < n_raw {
        return Err(AbortReason::InsufficientBases);
    }
    let universe = complement.universe();
    let i0 = sample_from(rng, &same, n_raw, universe).map_err(|_| AbortReason::InsufficientBases)?;
    let i1 = sample_from(rng, &diff, n_raw, universe).map_err(|_| AbortReason::InsufficientBases)?;
    Ok((i0, i1))
}

/// The ordered pair `(I_c, I_{1-c})`.
pub fn order_pair(i0: IndexSet, i1: IndexSet, c: bool) -> (IndexSet, IndexSet) {
    if c {
        (i1, i0)
    } else {
        (i0, i1)
    }
}

/// `p <= p_max` with `p = errors / checked`, compared exactly.
pub fn error_rate_acceptable(errors: usize, checked: usize, p_max: f64) -> bool {
    checked == 0 || (errors as f64) <= p_max * checked as f64 && errors as f64 / checked as f64 <= p_max
}

pub struct Sender {
    config: SessionConfig,
    view: AliceView,
    rng: SessionRng,
    hooks: SenderHooks,
    phase: Phase,
    key: Option<CommitKey>,
    commitments: Vec<BitString>,
    test_set: Option<IndexSet>,
    stats: Option<SenderStats>,
    output: Option<SenderOutput>,
}

impl Sender {
    pub fn new(config: SessionConfig, view: AliceView, rng: SessionRng, hooks: SenderHooks) -> Self {
        Self {
            config,
            view,
            rng,
            hooks,
            phase: Phase::Handshake,
            key: None,
            commitments: Vec::new(),
            test_set: None,
            stats: None,
            output: None,
        }
    }

    pub fn output(&self) -> Option<&SenderOutput> {
        self.output.as_ref()
    }

    pub fn stats(&self) -> Option<SenderStats> {
        self.stats
    }

    fn fail(&mut self, reason: AbortReason) -> Vec<Message> {
        self.phase = Phase::Aborted { reason, by_peer: false };
        vec![Message::Abort(reason)]
    }

    /// Multi-photon gate, then the challenge.
    fn after_handshake(&mut self) -> Vec<Message> {
        self.phase = Phase::Quantum;
        if self.view.basis.len() != self.config.n0() || self.view.outcome.len() != self.config.n0() {
            return self.fail(AbortReason::ProtocolError);
        }
        let multi = self.view.multi_photon_estimate().ok();
        self.stats = Some(SenderStats { checked: 0, p_estimate: 0.0, multi_estimate: multi });
        if self.config.params.p_multi > 0.0 && multi.is_some_and(|m| m >= self.config.params.p_multi) {
            return self.fail(AbortReason::Multiphoton);
        }
        let cp = match self.config.commit_params() {
            Ok(cp) => cp,
            Err(_) => return self.fail(AbortReason::ProtocolError),
        };
        let challenge = Challenge::random(&mut self.rng, &cp);
        match CommitKey::new(cp, self.config.hash, &challenge) {
            Ok(key) => self.key = Some(key),
            Err(_) => return self.fail(AbortReason::ProtocolError),
        }
        self.phase = Phase::Commit;
        vec![Message::Challenge(challenge.bits().clone())]
    }

    fn on_commitments(&mut self, coms: Vec<BitString>) -> Vec<Message> {
        if coms.len() != self.config.n0() {
            return self.fail(AbortReason::ProtocolError);
        }
        self.commitments = coms;
        let test = match sample_subset(&mut self.rng, self.config.n0(), self.config.n_test()) {
            Ok(t) => t,
            Err(_) => return self.fail(AbortReason::ProtocolError),
        };
        self.test_set = Some(test.clone());
        self.phase = Phase::Test;
        vec![Message::TestSet(test)]
    }

    fn on_openings(&mut self, openings: Vec<BitString>) -> Vec<Message> {
        self.phase = Phase::Check;
        let test = self.test_set.clone().expect("set in Commit phase");
        let key = self.key.as_ref().expect("set in Quantum phase");
        if openings.len() != test.len() {
            return self.fail(AbortReason::TestFailed);
        }
        let (mut checked, mut errors) = (0usize, 0usize);
        for (j, bits) in test.iter().zip(&openings) {
            let Ok(opening) = Opening::from_bits(key.params(), bits) else {
                return self.fail(AbortReason::TestFailed);
            };
            let Some(m) = key.verify(&self.commitments[j], &opening) else {
                return self.fail(AbortReason::TestFailed);
            };
            let (theta_b, x_b) = (m.bit(0), m.bit(1));
            if theta_b == self.view.basis.bit(j) {
                checked += 1;
                errors += (x_b != self.view.outcome.bit(j)) as usize;
            }
        }
        let p = if checked == 0 { 0.0 } else { errors as f64 / checked as f64 };
        if let Some(s) = self.stats.as_mut() {
            s.checked = checked;
            s.p_estimate = p;
        }
        if checked < self.config.n_check() || !error_rate_acceptable(errors, checked, self.config.params.p_max) {
            return self.fail(AbortReason::TestFailed);
        }
        let complement = test.complement();
        let bases = self.view.basis.extract(&complement).expect("same universe");
        self.phase = Phase::Separate;
        vec![Message::Bases(bases)]
    }

    fn on_sep(&mut self, first: IndexSet, second: IndexSet) -> Vec<Message> {
        self.phase = Phase::Syndrome;
        let test = self.test_set.as_ref().expect("set in Commit phase");
        let n_raw = self.config.n_raw();
        let valid = first.len() == n_raw
            && second.len() == n_raw
            && first.is_disjoint(&second)
            && first.is_disjoint(test)
            && second.is_disjoint(test);
        if !valid {
            return self.fail(AbortReason::ProtocolError);
        }
        let xa0 = self.view.outcome.extract(&first).expect("same universe");
        let xa1 = self.view.outcome.extract(&second).expect("same universe");
        let ir = match self.config.ir_params() {
            Ok(p) => p,
            Err(_) => return self.fail(AbortReason::ProtocolError),
        };
        let mut syndromes = Vec::with_capacity(2);
        for x in [&xa0, &xa1] {
            let seed = self.rng.seed32();
            let s = IrCode::new(ir, seed).and_then(|code| code.syndrome(x));
            match s {
                Ok(mut s) => {
                    if self.hooks.corrupt_syndrome {
                        if s.syn.is_empty() {
                            s.tag.flip(0);
                        } else {
                            s.syn.flip(0);
                        }
                    }
                    syndromes.push(s);
                }
                Err(_) => return self.fail(AbortReason::ProtocolError),
            }
        }
        self.phase = Phase::Hash;
        let f = match ToeplitzSeed::random(&mut self.rng, n_raw, self.config.params.n as usize) {
            Ok(f) => f,
            Err(_) => return self.fail(AbortReason::ProtocolError),
        };
        let (Ok(m0), Ok(m1)) = (f.hash(&xa0), f.hash(&xa1)) else {
            return self.fail(AbortReason::ProtocolError);
        };
        self.output = Some(SenderOutput { m0, m1 });
        self.phase = Phase::Done;
        let s1 = syndromes.pop().expect("two syndromes");
        let s0 = syndromes.pop().expect("two syndromes");
        vec![Message::Syndromes(s0, s1), Message::HashSeed(f)]
    }
}

impl Party for Sender {
    fn start(&mut self) -> Vec<Message> {
        if self.config.validate().is_err() {
            return self.fail(AbortReason::HandshakeMismatch);
        }
        vec![Message::Hello(self.config)]
    }

    fn handle(&mut self, msg: Message) -> Vec<Message> {
        if self.is_finished() {
            return Vec::new();
        }
        match (self.phase, msg) {
            (_, Message::Abort(reason)) => {
                self.phase = Phase::Aborted { reason, by_peer: true };
                Vec::new()
            }
            (Phase::Handshake, Message::HelloAck(echo)) => {
                if echo != self.config {
                    return self.fail(AbortReason::HandshakeMismatch);
                }
                self.after_handshake()
            }
            (Phase::Commit, Message::Commitments(c)) => self.on_commitments(c),
            (Phase::Test, Message::Openings(o)) => self.on_openings(o),
            (Phase::Separate, Message::Sep(a, b)) => self.on_sep(a, b),
            _ => self.fail(AbortReason::ProtocolError),
        }
    }

    fn phase(&self) -> Phase {
        self.phase
    }

    fn config(&self) -> &SessionConfig {
        &self.config
    }

    fn abort(&mut self, reason: AbortReason) -> Vec<Message> {
        if self.is_finished() {
            return Vec::new();
        }
        self.fail(reason)
    }
}

pub struct Receiver {
    config: SessionConfig,
    view: BobView,
    rng: SessionRng,
    hooks: ReceiverHooks,
    phase: Phase,
    openings: Vec<BitString>,
    test_set: Option<IndexSet>,
    choice: bool,
    i0: Option<IndexSet>,
    reconciled: Option<BitString>,
    output: Option<ReceiverOutput>,
}

impl Receiver {
    pub fn new(config: SessionConfig, view: BobView, rng: SessionRng, hooks: ReceiverHooks) -> Self {
        Self {
            config,
            view,
            rng,
            hooks,
            phase: Phase::Handshake,
            openings: Vec::new(),
            test_set: None,
            choice: false,
            i0: None,
            reconciled: None,
            output: None,
        }
    }

    pub fn output(&self) -> Option<&ReceiverOutput> {
        self.output.as_ref()
    }

    fn fail(&mut self, reason: AbortReason) -> Vec<Message> {
        self.phase = Phase::Aborted { reason, by_peer: false };
        vec![Message::Abort(reason)]
    }

    fn on_hello(&mut self, offered: SessionConfig) -> Vec<Message> {
        if offered != self.config || self.config.validate().is_err() {
            return self.fail(AbortReason::HandshakeMismatch);
        }
        if self.view.basis.len() != self.config.n0() || self.view.outcome.len() != self.config.n0() {
            return self.fail(AbortReason::ProtocolError);
        }
        self.phase = Phase::Challenge;
        vec![Message::HelloAck(self.config)]
    }

    fn on_challenge(&mut self, r: BitString) -> Vec<Message> {
        let cp = match self.config.commit_params() {
            Ok(cp) => cp,
            Err(_) => return self.fail(AbortReason::ProtocolError),
        };
        let key = match Challenge::new(&cp, r).and_then(|ch| CommitKey::new(cp, self.config.hash, &ch)) {
            Ok(k) => k,
            Err(_) => return self.fail(AbortReason::ProtocolError),
        };
        let n0 = self.config.n0();
        let mut coms = Vec::with_capacity(n0);
        self.openings = Vec::with_capacity(n0);
        for i in 0..n0 {
            let mut x = self.view.outcome.bit(i);
            if self.hooks.flip_committed_rate > 0.0 && self.rng.gen_bool(self.hooks.flip_committed_rate.min(1.0)) {
                x = !x;
            }
            let m = BitString::from_bits([self.view.basis.bit(i), x]);
            let rec = key.commit_random(&mut self.rng, &m).expect("lengths fixed by params");
            coms.push(rec.com);
            self.openings.push(rec.opening.to_bits());
        }
        self.phase = Phase::Test;
        if self.hooks.skip_commitments {
            return vec![Message::Openings(std::mem::take(&mut self.openings))];
        }
        vec![Message::Commitments(coms)]
    }

    fn on_test_set(&mut self, test: IndexSet) -> Vec<Message> {
        if test.len() != self.config.n_test() {
            return self.fail(AbortReason::ProtocolError);
        }
        let opened = test.iter().map(|j| self.openings[j].clone()).collect();
        self.test_set = Some(test);
        self.phase = Phase::Bases;
        vec![Message::Openings(opened)]
    }

    fn on_bases(&mut self, theta_a: BitString) -> Vec<Message> {
        let complement = self.test_set.as_ref().expect("set in Test phase").complement();
        let split = partition_bases(&mut self.rng, &complement, &theta_a, &self.view.basis, self.config.n_raw());
        let (i0, i1) = match split {
            Ok(p) => p,
            Err(reason) => return self.fail(reason),
        };
        let drawn: bool = self.rng.gen();
        self.choice = self.hooks.force_choice.unwrap_or(drawn);
        self.i0 = Some(i0.clone());
        self.phase = Phase::Syndrome;
        let (first, second) = order_pair(i0, i1, self.choice);
        vec![Message::Sep(first, second)]
    }

    fn on_syndromes(&mut self, s: [crate::recon::Syndrome; 2]) -> Vec<Message> {
        let i0 = self.i0.as_ref().expect("set in Bases phase");
        let y = self.view.outcome.extract(i0).expect("same universe");
        // I_0 sits at pair position c
        let [s0, s1] = s;
        let syn = if self.choice { s1 } else { s0 };
        let decoded = self
            .config
            .ir_params()
            .and_then(|p| IrCode::new(p, syn.code_seed))
            .and_then(|code| code.decode(&syn, &y));
        match decoded {
            Ok(Some(x)) => {
                self.reconciled = Some(x);
                self.phase = Phase::Hash;
                Vec::new()
            }
            _ => self.fail(AbortReason::IrFailed),
        }
    }

    fn on_hash_seed(&mut self, f: ToeplitzSeed) -> Vec<Message> {
        let y = self.reconciled.take().expect("set in Syndrome phase");
        if f.input_len() != self.config.n_raw() || f.output_len() != self.config.params.n as usize {
            return self.fail(AbortReason::ProtocolError);
        }
        match f.hash(&y) {
            Ok(m) => {
                self.output = Some(ReceiverOutput { c: self.choice, m });
                self.phase = Phase::Done;
                Vec::new()
            }
            Err(_) => self.fail(AbortReason::ProtocolError),
        }
    }
}

impl Party for Receiver {
    fn start(&mut self) -> Vec<Message> {
        Vec::new()
    }

    fn handle(&mut self, msg: Message) -> Vec<Message> {
        if self.is_finished() {
            return Vec::new();
        }
        match (self.phase, msg) {
            (_, Message::Abort(reason)) => {
                self.phase = Phase::Aborted { reason, by_peer: true };
                Vec::new()
            }
            (Phase::Handshake, Message::Hello(c)) => self.on_hello(c),
            (Phase::Challenge, Message::Challenge(r)) => self.on_challenge(r),
            (Phase::Test, Message::TestSet(t)) => self.on_test_set(t),
            (Phase::Bases, Message::Bases(b)) => self.on_bases(b),
            (Phase::Syndrome, Message::Syndromes(a, b)) => self.on_syndromes([a, b]),
            (Phase::Hash, Message::HashSeed(f)) => self.on_hash_seed(f),
            _ => self.fail(AbortReason::ProtocolError),
        }
    }

    fn phase(&self) -> Phase {
        self.phase
    }

    fn config(&self) -> &SessionConfig {
        &self.config
    }

    fn abort(&mut self, reason: AbortReason) -> Vec<Message> {
        if self.is_finished() {
            return Vec::new();
        }
        self.fail(reason)
    }
}
