use serde::{Deserialize, Serialize};

use crate::bitcore::{BitString, IndexSet};
use crate::bounds::ProtocolParams;
use crate::codec::ByteReader;
use crate::commit::{encode_batch, read_batch, CommitParams};
use crate::error::{Error, Result};
use crate::owf::HashAlgorithm;
use crate::pamp::ToeplitzSeed;
use crate::recon::{IrBackend, IrParams, Syndrome};
use crate::wire::Frame;

pub const PROTOCOL_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AbortReason {
    TestFailed,
    InsufficientBases,
    IrFailed,
    Multiphoton,
    ProtocolError,
    Transport,
    HandshakeMismatch,
}

impl AbortReason {
    pub fn code(self) -> u8 {
        match self {
            AbortReason::TestFailed => 1,
            AbortReason::InsufficientBases => 2,
            AbortReason::IrFailed => 3,
            AbortReason::Multiphoton => 4,
            AbortReason::ProtocolError => 5,
            AbortReason::Transport => 6,
            AbortReason::HandshakeMismatch => 7,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            1 => AbortReason::TestFailed,
            2 => AbortReason::InsufficientBases,
            3 => AbortReason::IrFailed,
            4 => AbortReason::Multiphoton,
            5 => AbortReason::ProtocolError,
            6 => AbortReason::Transport,
            7 => AbortReason::HandshakeMismatch,
            other => return Err(Error::Malformed(format!("unknown abort code {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AbortReason::TestFailed => "TEST_FAILED",
            AbortReason::InsufficientBases => "INSUFFICIENT_BASES",
            AbortReason::IrFailed => "IR_FAILED",
            AbortReason::Multiphoton => "MULTIPHOTON",
            AbortReason::ProtocolError => "PROTOCOL_ERROR",
            AbortReason::Transport => "TRANSPORT",
            AbortReason::HandshakeMismatch => "HANDSHAKE_MISMATCH",
        }
    }
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything both parties must agree on before the quantum phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub params: ProtocolParams,
    /// Commitment security parameter.
    pub k: u16,
    /// Reconciliation tag length.
    pub tau: u16,
    pub hash: HashAlgorithm,
    pub backend: IrBackend,
}

impl SessionConfig {
    /// Table 1 parameters with 32-bit commitment and tag security.
    pub fn table1() -> Self {
        Self {
            params: ProtocolParams::table1(),
            k: 32,
            tau: 32,
            hash: HashAlgorithm::Blake3,
            backend: IrBackend::Ldpc,
        }
    }

    /// Small enough for hundreds of sessions in a test run.
    pub fn desk() -> Self {
        Self {
            params: ProtocolParams {
                n0: 1 << 16,
                alpha: 0.35,
                delta1: 0.005,
                delta2: 0.015,
                p_max: 0.015,
                n: 16,
                f: 1.3,
                p_multi: 0.0,
                eps_ir: 2f64.powi(-16),
                eps_bind: 2f64.powi(-16),
            },
            k: 16,
            tau: 16,
            hash: HashAlgorithm::Blake3,
            backend: IrBackend::Ldpc,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.commit_params()?;
        self.ir_params()?;
        if self.params.n == 0 {
            return Err(Error::InvalidParameter("output length n must be positive".into()));
        }
        if self.params.n0 > u32::MAX as u64 {
            return Err(Error::InvalidParameter("N_0 must fit in 32 bits".into()));
        }
        if self.params.n_raw() == 0 {
            return Err(Error::InvalidParameter("N_raw is zero".into()));
        }
        Ok(())
    }

    pub fn n0(&self) -> usize {
        self.params.n0 as usize
    }

    pub fn n_test(&self) -> usize {
        self.params.n_test() as usize
    }

    pub fn n_check(&self) -> usize {
        self.params.n_check() as usize
    }

    pub fn n_raw(&self) -> usize {
        self.params.n_raw() as usize
    }

    /// Each round commits the 2-bit message `(theta_B, x_B)`.
    pub fn commit_params(&self) -> Result<CommitParams> {
        CommitParams::new(self.k as usize, 2)
    }

    pub fn ir_params(&self) -> Result<IrParams> {
        IrParams::new(
            self.n_raw(),
            self.params.p_max + self.params.delta1,
            self.params.f,
            self.tau as u32,
            self.backend,
            self.hash,
        )
    }

    /// Handshake encoding; derived sizes are appended so both sides compare
    /// the floored values bit for bit.
    pub fn encode(&self, out: &mut Vec<u8>) {
        let p = &self.params;
        out.push(PROTOCOL_VERSION);
        out.push(self.hash.id());
        out.push(self.backend.id());
        out.extend_from_slice(&self.k.to_be_bytes());
        out.extend_from_slice(&self.tau.to_be_bytes());
        out.extend_from_slice(&p.n0.to_be_bytes());
        out.extend_from_slice(&p.n.to_be_bytes());
        for v in [p.alpha, p.delta1, p.delta2, p.p_max, p.f, p.p_multi, p.eps_ir, p.eps_bind] {
            out.extend_from_slice(&v.to_bits().to_be_bytes());
        }
        for v in [p.n_test(), p.n_check(), p.n_raw()] {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }

    pub(crate) fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        let version = r.u8("version")?;
        if version != PROTOCOL_VERSION {
            return Err(Error::Malformed(format!("protocol version {version}")));
        }
        let hash = HashAlgorithm::from_id(r.u8("hash id")?)?;
        let backend = IrBackend::from_id(r.u8("IR backend")?)?;
        let k = r.u16("k")?;
        let tau = r.u16("tau")?;
        let n0 = r.u64("N_0")?;
        let n = r.u64("n")?;
        let mut f = [0.0; 8];
        for v in f.iter_mut() {
            *v = r.f64("parameter")?;
        }
        let params = ProtocolParams {
            n0,
            alpha: f[0],
            delta1: f[1],
            delta2: f[2],
            p_max: f[3],
            n,
            f: f[4],
            p_multi: f[5],
            eps_ir: f[6],
            eps_bind: f[7],
        };
        let sizes = [r.u64("N_test")?, r.u64("N_check")?, r.u64("N_raw")?];
        if sizes != [params.n_test(), params.n_check(), params.n_raw()] {
            return Err(Error::Malformed(format!("derived sizes {sizes:?} disagree")));
        }
        Ok(Self { params, k, tau, hash, backend })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageType {
    Hello = 0x01,
    HelloAck = 0x02,
    Challenge = 0x03,
    Commitments = 0x04,
    TestSet = 0x05,
    Openings = 0x06,
    Bases = 0x07,
    Sep = 0x08,
    Syndromes = 0x09,
    HashSeed = 0x0A,
    Abort = 0x0B,
}

impl MessageType {
    pub fn from_code(code: u8) -> Result<Self> {
        use MessageType::*;
        Ok(match code {
            0x01 => Hello,
            0x02 => HelloAck,
            0x03 => Challenge,
            0x04 => Commitments,
            0x05 => TestSet,
            0x06 => Openings,
            0x07 => Bases,
            0x08 => Sep,
            0x09 => Syndromes,
            0x0A => HashSeed,
            0x0B => Abort,
            other => return Err(Error::Malformed(format!("unknown message type {other:#04x}"))),
        })
    }

    pub fn name(self) -> &'static str {
        use MessageType::*;
        match self {
            Hello => "HELLO",
            HelloAck => "HELLO_ACK",
            Challenge => "CHALLENGE",
            Commitments => "COMMITMENTS",
            TestSet => "TEST_SET",
            Openings => "OPENINGS",
            Bases => "BASES",
            Sep => "SEP",
            Syndromes => "SYNDROMES",
            HashSeed => "HASH_SEED",
            Abort => "ABORT",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Hello(SessionConfig),
    HelloAck(SessionConfig),
    Challenge(BitString),
    Commitments(Vec<BitString>),
    TestSet(IndexSet),
    /// Openings `m || s` in the order of the test set.
    Openings(Vec<BitString>),
    /// Alice's bases on the complement of the test set, in index order.
    Bases(BitString),
    Sep(IndexSet, IndexSet),
    Syndromes(Syndrome, Syndrome),
    HashSeed(ToeplitzSeed),
    Abort(AbortReason),
}

impl Message {
    pub fn kind(&self) -> MessageType {
        match self {
            Message::Hello(_) => MessageType::Hello,
            Message::HelloAck(_) => MessageType::HelloAck,
            Message::Challenge(_) => MessageType::Challenge,
            Message::Commitments(_) => MessageType::Commitments,
            Message::TestSet(_) => MessageType::TestSet,
            Message::Openings(_) => MessageType::Openings,
            Message::Bases(_) => MessageType::Bases,
            Message::Sep(..) => MessageType::Sep,
            Message::Syndromes(..) => MessageType::Syndromes,
            Message::HashSeed(_) => MessageType::HashSeed,
            Message::Abort(_) => MessageType::Abort,
        }
    }

    /// Bits of protocol content this message discloses.
    pub fn leak_bits(&self) -> usize {
        match self {
            Message::Commitments(items) | Message::Openings(items) => {
                items.iter().map(BitString::len).sum()
            }
            Message::Bases(b) => b.len(),
            Message::Syndromes(a, b) => a.leak_bits() + b.leak_bits(),
            Message::HashSeed(s) => s.diag().len(),
            _ => 0,
        }
    }

    pub fn encode(&self) -> Frame {
        let mut out = Vec::new();
        match self {
            Message::Hello(c) | Message::HelloAck(c) => c.encode(&mut out),
            Message::Challenge(r) => r.write_wire(&mut out),
            Message::Commitments(items) | Message::Openings(items) => {
                let width = items.first().map_or(0, BitString::len);
                encode_batch(items, width, &mut out);
            }
            Message::TestSet(s) => s.write_wire(&mut out),
            Message::Bases(b) => b.write_wire(&mut out),
            Message::Sep(a, b) => {
                a.write_wire(&mut out);
                b.write_wire(&mut out);
            }
            Message::Syndromes(a, b) => {
                a.write_wire(&mut out);
                b.write_wire(&mut out);
            }
            Message::HashSeed(s) => s.write_wire(&mut out),
            Message::Abort(r) => out.push(r.code()),
        }
        Frame::new(self.kind() as u8, out)
    }

    /// Decodes `frame`; `config` supplies the universe and item widths and is
    /// required for everything except the handshake and aborts.
    pub fn decode(frame: &Frame, config: Option<&SessionConfig>) -> Result<Self> {
        let kind = MessageType::from_code(frame.msg_type)?;
        let mut r = ByteReader::new(&frame.payload);
        let need = || config.ok_or_else(|| Error::Malformed(format!("{} needs session context", kind.name())));
        let msg = match kind {
            MessageType::Hello => Message::Hello(SessionConfig::decode(&mut r)?),
            MessageType::HelloAck => Message::HelloAck(SessionConfig::decode(&mut r)?),
            MessageType::Abort => Message::Abort(AbortReason::from_code(r.u8("abort reason")?)?),
            MessageType::Challenge => Message::Challenge(BitString::read_wire(&mut r)?),
            MessageType::Commitments => {
                let cp = need()?.commit_params()?;
                Message::Commitments(read_batch(&mut r, cp.commitment_len())?)
            }
            MessageType::Openings => {
                let cp = need()?.commit_params()?;
                Message::Openings(read_batch(&mut r, cp.opening_len())?)
            }
            MessageType::TestSet => Message::TestSet(IndexSet::read_wire(&mut r, need()?.n0())?),
            MessageType::Bases => Message::Bases(BitString::read_wire(&mut r)?),
            MessageType::Sep => {
                let n0 = need()?.n0();
                let a = IndexSet::read_wire(&mut r, n0)?;
                let b = IndexSet::read_wire(&mut r, n0)?;
                Message::Sep(a, b)
            }
            MessageType::Syndromes => {
                let a = Syndrome::read_wire(&mut r)?;
                let b = Syndrome::read_wire(&mut r)?;
                Message::Syndromes(a, b)
            }
            MessageType::HashSeed => Message::HashSeed(ToeplitzSeed::read_wire(&mut r)?),
        };
        r.finish(kind.name())?;
        Ok(msg)
    }
}
