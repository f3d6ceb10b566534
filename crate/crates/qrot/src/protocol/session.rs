use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::message::{AbortReason, Message, MessageType, SessionConfig};
use super::party::{
    Party, Phase, Receiver, ReceiverHooks, ReceiverOutput, Sender, SenderHooks, SenderOutput, SenderStats,
};
use crate::bitcore::SessionRng;
use crate::error::{Error, Result};
use crate::qsim::{run_quantum_phase, GroundTruth, SourceModel};
use crate::wire::{channel_pair, Frame, Transport, WireError, DEFAULT_TIMEOUT, HEADER_LEN, TRAILER_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub msg_type: u8,
    /// Frame bytes on the wire, header and checksum included.
    pub frame_len: usize,
    pub payload_digest: [u8; 32],
    /// Content bits disclosed; zero for frames that failed to decode.
    pub leak_bits: usize,
}

/// One party's record of every frame exchanged, in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    fn record(&mut self, direction: Direction, frame: &Frame, leak_bits: usize) {
        self.entries.push(TranscriptEntry {
            direction,
            msg_type: frame.msg_type,
            frame_len: HEADER_LEN + frame.payload.len() + TRAILER_LEN,
            payload_digest: *blake3::hash(&frame.payload).as_bytes(),
            leak_bits,
        });
    }

    pub fn bytes(&self, direction: Direction) -> usize {
        self.entries.iter().filter(|e| e.direction == direction).map(|e| e.frame_len).sum()
    }

    pub fn leak_bits(&self, direction: Direction) -> usize {
        self.entries.iter().filter(|e| e.direction == direction).map(|e| e.leak_bits).sum()
    }

    pub fn count(&self, msg_type: MessageType) -> usize {
        self.entries.iter().filter(|e| e.msg_type == msg_type as u8).count()
    }

    pub fn sequence(&self) -> Vec<(Direction, u8)> {
        self.entries.iter().map(|e| (e.direction, e.msg_type)).collect()
    }
}

/// Drives `party` over `transport` until it finishes.
///
/// Transport failures end the run with `TRANSPORT`; the abort frame is sent
/// on a best-effort basis.
pub fn run_party(party: &mut dyn Party, transport: &mut dyn Transport, timeout: Duration) -> Transcript {
    let mut transcript = Transcript::default();
    let mut outgoing = party.start();
    loop {
        for msg in outgoing.drain(..) {
            let frame = msg.encode();
            let is_abort = matches!(msg, Message::Abort(_));
            match transport.send(&frame) {
                Ok(()) => transcript.record(Direction::Sent, &frame, msg.leak_bits()),
                Err(_) if is_abort => {}
                Err(_) => {
                    party.abort(AbortReason::Transport);
                    return transcript;
                }
            }
        }
        if party.is_finished() {
            return transcript;
        }
        match transport.recv(timeout) {
            Ok(frame) => {
                let leak = Message::decode(&frame, Some(party.config())).map_or(0, |m| m.leak_bits());
                transcript.record(Direction::Received, &frame, leak);
                outgoing = party.handle_frame(&frame);
            }
            Err(WireError::Timeout | WireError::Closed | WireError::Io(_)) => {
                outgoing = party.abort(AbortReason::Transport);
            }
            // corrupted or out-of-order frames
            Err(_) => outgoing = party.abort(AbortReason::ProtocolError),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    pub sender_hooks: SenderHooks,
    pub receiver_hooks: ReceiverHooks,
    /// Per-message receive timeout; `None` uses the wire default.
    pub timeout: Option<Duration>,
}

#[derive(Clone, Debug)]
pub struct SessionResult {
    pub config: SessionConfig,
    pub sender_phase: Phase,
    pub receiver_phase: Phase,
    pub sender_output: Option<SenderOutput>,
    pub receiver_output: Option<ReceiverOutput>,
    pub sender_stats: Option<SenderStats>,
    /// Alice's transcript.
    pub transcript: Transcript,
    pub receiver_transcript: Transcript,
    pub truth: GroundTruth,
}

impl SessionResult {
    /// Both outputs when neither party aborted.
    pub fn rot(&self) -> Option<(&SenderOutput, &ReceiverOutput)> {
        match (self.sender_phase, self.receiver_phase) {
            (Phase::Done, Phase::Done) => Some((self.sender_output.as_ref()?, self.receiver_output.as_ref()?)),
            _ => None,
        }
    }

    /// The reason raised by whichever party aborted first on its own account.
    pub fn abort_reason(&self) -> Option<AbortReason> {
        let own = |p: Phase| match p {
            Phase::Aborted { reason, by_peer: false } => Some(reason),
            _ => None,
        };
        let peer = |p: Phase| match p {
            Phase::Aborted { reason, .. } => Some(reason),
            _ => None,
        };
        own(self.sender_phase)
            .or(own(self.receiver_phase))
            .or(peer(self.sender_phase))
            .or(peer(self.receiver_phase))
    }

    /// Every bit disclosed in either direction.
    pub fn leak_bits(&self) -> usize {
        self.transcript.leak_bits(Direction::Sent) + self.transcript.leak_bits(Direction::Received)
    }

    /// `m^B == m^A_c` on success.
    pub fn is_correct(&self) -> bool {
        self.rot().is_some_and(|(s, r)| s.get(r.c) == &r.m)
    }
}

/// Party seeds derived from one session seed.
pub fn party_rngs(session_seed: u64) -> (SessionRng, SessionRng) {
    let material = session_seed.to_le_bytes();
    (SessionRng::derived(&material, "alice"), SessionRng::derived(&material, "bob"))
}

/// Simulates the quantum phase and runs both parties over an in-memory
/// channel, Alice on a worker thread.
pub fn run_session(
    config: SessionConfig,
    model: &SourceModel,
    session_seed: u64,
    options: SessionOptions,
) -> Result<SessionResult> {
    config.validate()?;
    if options.receiver_hooks.flip_committed_rate < 0.0 || options.receiver_hooks.flip_committed_rate > 1.0 {
        return Err(Error::InvalidParameter("flip rate must lie in [0, 1]".into()));
    }
    let quantum = run_quantum_phase(model, config.n0())?;
    let (alice_rng, bob_rng) = party_rngs(session_seed);
    let timeout = options.timeout.unwrap_or(DEFAULT_TIMEOUT);
    let (mut ta, mut tb) = channel_pair();
    let mut sender = Sender::new(config, quantum.alice, alice_rng, options.sender_hooks);
    let mut receiver = Receiver::new(config, quantum.bob, bob_rng, options.receiver_hooks);

    let (sender, transcript, receiver_transcript) = std::thread::scope(|scope| {
        let alice = scope.spawn(move || {
            let t = run_party(&mut sender, &mut ta, timeout);
            drop(ta);
            (sender, t)
        });
        let rt = run_party(&mut receiver, &mut tb, timeout);
        drop(tb);
        let (sender, t) = alice.join().expect("sender thread panicked");
        (sender, t, rt)
    });

    Ok(SessionResult {
        config,
        sender_phase: sender.phase(),
        receiver_phase: receiver.phase(),
        sender_output: sender.output().cloned(),
        receiver_output: receiver.output().cloned(),
        sender_stats: sender.stats(),
        transcript,
        receiver_transcript,
        truth: quantum.truth,
    })
}
