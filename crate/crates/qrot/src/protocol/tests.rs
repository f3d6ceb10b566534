use super::*;
use crate::bitcore::{BitString, IndexSet, SessionRng};
use crate::qsim::SourceModel;
use crate::wire::channel_pair;
use std::time::Duration;

fn model(p_err: f64, seed: u64) -> SourceModel {
    SourceModel { p_err, seed, ..SourceModel::noiseless(seed) }
}

fn run(p_err: f64, seed: u64, options: SessionOptions) -> SessionResult {
    run_session(SessionConfig::desk(), &model(p_err, seed), seed, options).unwrap()
}

#[test]
fn honest_session_agrees() {
    let r = run(0.01, 7, SessionOptions::default());
    assert_eq!(r.abort_reason(), None, "{:?} / {:?}", r.sender_phase, r.receiver_phase);
    assert!(r.is_correct());
    let (s, b) = r.rot().unwrap();
    assert_eq!(s.m0.len(), 16);
    assert_ne!(s.m0, s.m1);
    assert_eq!(b.m, *s.get(b.c));
}

#[test]
fn message_order_is_fixed() {
    use Direction::*;
    use MessageType as M;
    let r = run(0.0, 3, SessionOptions::default());
    let expected: Vec<(Direction, u8)> = [
        (Sent, M::Hello),
        (Received, M::HelloAck),
        (Sent, M::Challenge),
        (Received, M::Commitments),
        (Sent, M::TestSet),
        (Received, M::Openings),
        (Sent, M::Bases),
        (Received, M::Sep),
        (Sent, M::Syndromes),
        (Sent, M::HashSeed),
    ]
    .into_iter()
    .map(|(d, m)| (d, m as u8))
    .collect();
    assert_eq!(r.transcript.sequence(), expected);
    let bob: Vec<_> = r
        .receiver_transcript
        .sequence()
        .into_iter()
        .map(|(d, m)| (if d == Sent { Received } else { Sent }, m))
        .collect();
    assert_eq!(bob, expected);
}

#[test]
fn leak_ledger_matches_sizes() {
    let r = run(0.0, 11, SessionOptions::default());
    let c = r.config;
    let cp = c.commit_params().unwrap();
    let ir = c.ir_params().unwrap();
    let expected = c.n0() * cp.commitment_len()
        + c.n_test() * cp.opening_len()
        + (c.n0() - c.n_test())
        + 2 * (ir.leak_syndrome() + c.tau as usize)
        + (c.n_raw() + c.params.n as usize - 1);
    assert_eq!(r.leak_bits(), expected);
    assert_eq!(r.receiver_transcript.leak_bits(Direction::Sent), r.transcript.leak_bits(Direction::Received));
}

#[test]
fn same_seed_same_session() {
    let a = run(0.01, 21, SessionOptions::default());
    let b = run(0.01, 21, SessionOptions::default());
    assert_eq!(a.transcript, b.transcript);
    assert_eq!(a.sender_output, b.sender_output);
}

#[test]
fn high_noise_fails_the_test() {
    let r = run(0.05, 5, SessionOptions::default());
    assert_eq!(r.abort_reason(), Some(AbortReason::TestFailed));
    assert!(r.rot().is_none());
    assert!(r.sender_stats.unwrap().p_estimate > 0.03);
}

#[test]
fn flipped_commitments_fail_the_test() {
    let hooks = ReceiverHooks { flip_committed_rate: 0.1, ..Default::default() };
    let r = run(0.0, 9, SessionOptions { receiver_hooks: hooks, ..Default::default() });
    assert_eq!(r.abort_reason(), Some(AbortReason::TestFailed));
}

#[test]
fn skipped_commitments_are_a_protocol_error() {
    let hooks = ReceiverHooks { skip_commitments: true, ..Default::default() };
    let r = run(0.0, 9, SessionOptions { receiver_hooks: hooks, ..Default::default() });
    assert_eq!(r.abort_reason(), Some(AbortReason::ProtocolError));
}

#[test]
fn corrupted_syndrome_is_caught() {
    let hooks = SenderHooks { corrupt_syndrome: true };
    let r = run(0.01, 13, SessionOptions { sender_hooks: hooks, ..Default::default() });
    assert_eq!(r.receiver_phase, Phase::Aborted { reason: AbortReason::IrFailed, by_peer: false });
    assert!(r.receiver_output.is_none());
}

#[test]
fn forced_choice_is_honoured() {
    for c in [false, true] {
        let hooks = ReceiverHooks { force_choice: Some(c), ..Default::default() };
        let r = run(0.0, 17, SessionOptions { receiver_hooks: hooks, ..Default::default() });
        assert_eq!(r.rot().unwrap().1.c, c);
        assert!(r.is_correct());
    }
}

#[test]
fn forcing_the_choice_keeps_other_coins() {
    let base = run(0.0, 19, SessionOptions::default());
    let c = base.rot().unwrap().1.c;
    let hooks = ReceiverHooks { force_choice: Some(c), ..Default::default() };
    let forced = run(0.0, 19, SessionOptions { receiver_hooks: hooks, ..Default::default() });
    assert_eq!(base.transcript, forced.transcript);
}

#[test]
fn handshake_mismatch() {
    let config = SessionConfig::desk();
    let mut other = config;
    other.params.p_max = 0.016;
    let q = crate::qsim::run_quantum_phase(&model(0.0, 1), config.n0()).unwrap();
    let (ra, rb) = party_rngs(1);
    let mut sender = Sender::new(config, q.alice, ra, SenderHooks::default());
    let mut receiver = Receiver::new(other, q.bob, rb, ReceiverHooks::default());
    let (mut ta, mut tb) = channel_pair();
    let t = Duration::from_secs(5);
    std::thread::scope(|s| {
        s.spawn(|| run_party(&mut sender, &mut ta, t));
        run_party(&mut receiver, &mut tb, t);
    });
    assert_eq!(receiver.phase(), Phase::Aborted { reason: AbortReason::HandshakeMismatch, by_peer: false });
    assert_eq!(sender.phase(), Phase::Aborted { reason: AbortReason::HandshakeMismatch, by_peer: true });
}

#[test]
fn silent_peer_is_a_transport_abort() {
    let config = SessionConfig::desk();
    let q = crate::qsim::run_quantum_phase(&model(0.0, 2), config.n0()).unwrap();
    let mut sender = Sender::new(config, q.alice, SessionRng::from_u64(2), SenderHooks::default());
    let (mut ta, _tb) = channel_pair();
    run_party(&mut sender, &mut ta, Duration::from_millis(50));
    assert_eq!(sender.phase(), Phase::Aborted { reason: AbortReason::Transport, by_peer: false });
}

#[test]
fn out_of_phase_message_is_rejected() {
    let config = SessionConfig::desk();
    let q = crate::qsim::run_quantum_phase(&model(0.0, 4), config.n0()).unwrap();
    let mut receiver = Receiver::new(config, q.bob, SessionRng::from_u64(4), ReceiverHooks::default());
    let out = receiver.handle(Message::Bases(BitString::zeros(3)));
    assert_eq!(out, vec![Message::Abort(AbortReason::ProtocolError)]);
    assert!(receiver.is_finished());
    assert!(receiver.handle(Message::Hello(config)).is_empty());
}

#[test]
fn partition_requires_enough_of_each() {
    let complement = IndexSet::full(8);
    let theta_a = BitString::zeros(8);
    let theta_b: BitString = "00001111".parse().unwrap();
    let mut rng = SessionRng::from_u64(0);
    let (i0, i1) = partition_bases(&mut rng, &complement, &theta_a, &theta_b, 3).unwrap();
    assert!(i0.iter().all(|i| i < 4));
    assert!(i1.iter().all(|i| i >= 4));
    assert_eq!(
        partition_bases(&mut rng, &complement, &theta_a, &theta_b, 5),
        Err(AbortReason::InsufficientBases)
    );
    let (a, b) = order_pair(i0.clone(), i1.clone(), true);
    assert_eq!((a, b), (i1, i0));
}

#[test]
fn error_rate_boundary_is_inclusive() {
    assert!(error_rate_acceptable(15, 1000, 0.015));
    assert!(!error_rate_acceptable(16, 1000, 0.015));
}

fn small_config() -> SessionConfig {
    let mut c = SessionConfig::desk();
    c.params.n0 = 4096;
    c.params.n = 8;
    // keeps each basis class about 5 sigma above N_raw at this size
    c.params.delta2 = 0.05;
    c.backend = crate::recon::IrBackend::Trivial;
    c
}

/// Runs both parties in lockstep without a transport and returns the
/// messages each one received, in order.
fn lockstep(sender: &mut Sender, receiver: &mut Receiver) -> (Vec<Message>, Vec<Message>) {
    let (mut to_alice, mut to_bob) = (Vec::new(), Vec::new());
    let mut ab = sender.start();
    let mut ba = receiver.start();
    while !ab.is_empty() || !ba.is_empty() {
        for m in std::mem::take(&mut ab) {
            to_bob.push(m.clone());
            ba.extend(receiver.handle(m));
        }
        for m in std::mem::take(&mut ba) {
            to_alice.push(m.clone());
            ab.extend(sender.handle(m));
        }
    }
    (to_alice, to_bob)
}

fn fresh_parties(config: SessionConfig, seed: u64) -> (Sender, Receiver) {
    let q = crate::qsim::run_quantum_phase(&model(0.0, seed), config.n0()).unwrap();
    let (ra, rb) = party_rngs(seed);
    (
        Sender::new(config, q.alice, ra, SenderHooks::default()),
        Receiver::new(config, q.bob, rb, ReceiverHooks::default()),
    )
}

#[test]
fn reordered_or_duplicated_messages_never_finish() {
    use rand::seq::SliceRandom;
    use rand::Rng;
    let config = small_config();
    let (mut s, mut r) = fresh_parties(config, 31);
    let (to_alice, to_bob) = lockstep(&mut s, &mut r);
    assert_eq!(s.phase(), Phase::Done);
    assert_eq!(r.phase(), Phase::Done);
    let kinds = |v: &[Message]| v.iter().map(Message::kind).collect::<Vec<_>>();
    let mut rng = SessionRng::from_u64(32);
    for _ in 0..40 {
        for alice_side in [true, false] {
            let original = if alice_side { &to_alice } else { &to_bob };
            let mut feed = original.clone();
            if rng.gen_bool(0.5) {
                feed.shuffle(&mut rng);
            } else {
                let i = rng.gen_range(0..feed.len());
                let dup = feed[i].clone();
                feed.insert(rng.gen_range(0..=feed.len()), dup);
            }
            if kinds(&feed) == kinds(original) {
                continue;
            }
            let (mut s2, mut r2) = fresh_parties(config, 31);
            let party: &mut dyn Party = if alice_side { &mut s2 } else { &mut r2 };
            party.start();
            let mut consumed = Vec::new();
            for m in feed {
                if party.is_finished() {
                    break;
                }
                consumed.push(m.clone());
                party.handle(m);
            }
            // trailing duplicates after completion are never read
            if party.phase() == Phase::Done {
                assert_eq!(kinds(&consumed), kinds(original));
            }
        }
    }
}

#[test]
fn unchosen_string_is_independent_of_the_receiver_output() {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let config = small_config();
    let runs = 2000;
    // 16 x 16 contingency table of the low nibbles of m_c and m_{1-c}
    let mut table = [[0f64; 16]; 16];
    let mut choice = [0f64; 2];
    for seed in 0..runs {
        let r = run_session(config, &model(0.0, 10_000 + seed), seed, SessionOptions::default()).unwrap();
        let (s, b) = r.rot().expect("noiseless sessions succeed");
        assert_eq!(&b.m, s.get(b.c));
        let other = s.get(!b.c);
        table[(b.m.to_u64() & 15) as usize][(other.to_u64() & 15) as usize] += 1.0;
        choice[b.c as usize] += 1.0;
    }
    let n = runs as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..16).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut chi2 = 0.0;
    for i in 0..16 {
        for j in 0..16 {
            let e = rows[i] * cols[j] / n;
            chi2 += (table[i][j] - e).powi(2) / e;
        }
    }
    let p = 1.0 - ChiSquared::new(225.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "independence chi2 = {chi2}, p = {p}");
    let chi_c = (choice[1] - n / 2.0).powi(2) / (n / 4.0);
    let p_c = 1.0 - ChiSquared::new(1.0).unwrap().cdf(chi_c);
    assert!(p_c > 0.01, "choice bit chi2 = {chi_c}");
}
