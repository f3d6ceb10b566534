//! Framed, checksummed duplex transport.
//!
//! Frame layout: `seq(4) | type(1) | len(4) | payload | crc32(type | len | payload)`,
//! integers big-endian. Sequence numbers start at 0 in each direction and
//! must arrive consecutively. Any defect poisons the connection.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender};
use std::time::Duration;

use thiserror::Error;

/// Largest accepted payload.
pub const MAX_PAYLOAD: usize = 64 << 20;
pub const HEADER_LEN: usize = 9;
pub const TRAILER_LEN: usize = 4;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
/// Exchanged as the first byte on socket connections.
pub const WIRE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("timed out waiting for a frame")]
    Timeout,
    #[error("connection closed")]
    Closed,
    #[error("frame checksum mismatch")]
    Checksum,
    #[error("sequence gap: expected {expected}, got {got}")]
    Sequence { expected: u32, got: u32 },
    #[error("frame payload of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("truncated frame")]
    Truncated,
    #[error("peer speaks wire version {0}")]
    Version(u8),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<io::Error> for WireError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => WireError::Timeout,
            io::ErrorKind::UnexpectedEof
            | io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
            | io::ErrorKind::BrokenPipe => WireError::Closed,
            _ => WireError::Io(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: u8, payload: Vec<u8>) -> Self {
        Self { msg_type, payload }
    }
}

fn checksum(msg_type: u8, len: [u8; 4], payload: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&[msg_type]);
    h.update(&len);
    h.update(payload);
    h.finalize()
}

pub fn encode_frame(seq: u32, frame: &Frame) -> Result<Vec<u8>, WireError> {
    if frame.payload.len() > MAX_PAYLOAD {
        return Err(WireError::TooLarge(frame.payload.len()));
    }
    let len = (frame.payload.len() as u32).to_be_bytes();
    let mut out = Vec::with_capacity(HEADER_LEN + frame.payload.len() + TRAILER_LEN);
    out.extend_from_slice(&seq.to_be_bytes());
    out.push(frame.msg_type);
    out.extend_from_slice(&len);
    out.extend_from_slice(&frame.payload);
    out.extend_from_slice(&checksum(frame.msg_type, len, &frame.payload).to_be_bytes());
    Ok(out)
}

/// Reads exactly one frame from `r`.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<(u32, Frame), WireError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    let seq = u32::from_be_bytes(header[..4].try_into().expect("4 bytes"));
    let msg_type = header[4];
    let len_bytes: [u8; 4] = header[5..9].try_into().expect("4 bytes");
    let len = u32::from_be_bytes(len_bytes) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len));
    }
    let mut payload = vec![0u8; len];
    let mut crc = [0u8; TRAILER_LEN];
    r.read_exact(&mut payload).map_err(truncated)?;
    r.read_exact(&mut crc).map_err(truncated)?;
    if u32::from_be_bytes(crc) != checksum(msg_type, len_bytes, &payload) {
        return Err(WireError::Checksum);
    }
    Ok((seq, Frame { msg_type, payload }))
}

fn truncated(e: io::Error) -> WireError {
    match WireError::from(e) {
        WireError::Closed => WireError::Truncated,
        other => other,
    }
}

/// Decodes a buffer that must hold exactly one frame.
pub fn decode_frame(buf: &[u8]) -> Result<(u32, Frame), WireError> {
    let mut cursor = buf;
    let out = read_frame(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(WireError::Io(format!("{} trailing bytes after frame", cursor.len())));
    }
    Ok(out)
}

/// A reliable, ordered frame channel owned by one session.
pub trait Transport: Send {
    fn send(&mut self, frame: &Frame) -> Result<(), WireError>;
    fn recv(&mut self, timeout: Duration) -> Result<Frame, WireError>;
}

#[derive(Debug, Default)]
struct Sequencer {
    next_out: u32,
    next_in: u32,
    poisoned: bool,
}

impl Sequencer {
    fn check_open(&self) -> Result<(), WireError> {
        if self.poisoned {
            Err(WireError::Closed)
        } else {
            Ok(())
        }
    }

    fn outgoing(&mut self) -> u32 {
        let s = self.next_out;
        self.next_out = self.next_out.wrapping_add(1);
        s
    }

    /// Validates an incoming frame; any error poisons the connection except a
    /// clean timeout between frames.
    fn incoming(&mut self, r: Result<(u32, Frame), WireError>) -> Result<Frame, WireError> {
        let r = r.and_then(|(seq, frame)| {
            if seq != self.next_in {
                return Err(WireError::Sequence { expected: self.next_in, got: seq });
            }
            self.next_in = self.next_in.wrapping_add(1);
            Ok(frame)
        });
        if let Err(e) = &r {
            if *e != WireError::Timeout {
                self.poisoned = true;
            }
        }
        r
    }
}

/// In-process backend: each side owns the sending half of one queue and the
/// receiving half of the other; the queues carry encoded frames.
pub struct ChannelTransport {
    tx: SyncSender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    seq: Sequencer,
}

/// Frames buffered per direction before `send` blocks.
pub const CHANNEL_DEPTH: usize = 256;

pub fn channel_pair() -> (ChannelTransport, ChannelTransport) {
    let (a_tx, b_rx) = mpsc::sync_channel(CHANNEL_DEPTH);
    let (b_tx, a_rx) = mpsc::sync_channel(CHANNEL_DEPTH);
    (
        ChannelTransport { tx: a_tx, rx: a_rx, seq: Sequencer::default() },
        ChannelTransport { tx: b_tx, rx: b_rx, seq: Sequencer::default() },
    )
}

impl ChannelTransport {
    /// Pushes arbitrary bytes as one queue item, bypassing framing.
    pub fn send_raw(&mut self, bytes: Vec<u8>) -> Result<(), WireError> {
        self.tx.send(bytes).map_err(|_| WireError::Closed)
    }
}

impl Transport for ChannelTransport {
    fn send(&mut self, frame: &Frame) -> Result<(), WireError> {
        self.seq.check_open()?;
        let bytes = encode_frame(self.seq.outgoing(), frame)?;
        self.tx.send(bytes).map_err(|_| WireError::Closed)
    }

    fn recv(&mut self, timeout: Duration) -> Result<Frame, WireError> {
        self.seq.check_open()?;
        let r = match self.rx.recv_timeout(timeout) {
            Ok(bytes) => decode_frame(&bytes),
            Err(RecvTimeoutError::Timeout) => Err(WireError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(WireError::Closed),
        };
        self.seq.incoming(r)
    }
}

/// Socket backend over a TCP stream.
pub struct TcpTransport {
    reader: io::BufReader<TcpStream>,
    writer: io::BufWriter<TcpStream>,
    seq: Sequencer,
}

impl TcpTransport {
    /// Wraps a connected stream and exchanges version bytes.
    pub fn handshake(stream: TcpStream, timeout: Duration) -> Result<Self, WireError> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        let mut writer = io::BufWriter::new(stream.try_clone()?);
        writer.write_all(&[WIRE_VERSION])?;
        writer.flush()?;
        let mut reader = io::BufReader::new(stream);
        let mut v = [0u8; 1];
        reader.read_exact(&mut v)?;
        if v[0] != WIRE_VERSION {
            return Err(WireError::Version(v[0]));
        }
        Ok(Self { reader, writer, seq: Sequencer::default() })
    }

    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<Self, WireError> {
        Self::handshake(TcpStream::connect(addr)?, timeout)
    }

    /// Accepts one connection from `listener`.
    pub fn accept(listener: &TcpListener, timeout: Duration) -> Result<Self, WireError> {
        let (stream, _) = listener.accept()?;
        Self::handshake(stream, timeout)
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, frame: &Frame) -> Result<(), WireError> {
        self.seq.check_open()?;
        let bytes = encode_frame(self.seq.outgoing(), frame)?;
        let r = self.writer.write_all(&bytes).and_then(|_| self.writer.flush());
        r.map_err(|e| {
            self.seq.poisoned = true;
            e.into()
        })
    }

    fn recv(&mut self, timeout: Duration) -> Result<Frame, WireError> {
        self.seq.check_open()?;
        self.reader.get_ref().set_read_timeout(Some(timeout))?;
        let r = read_frame(&mut self.reader);
        // a timeout may have consumed part of a frame; the stream is unusable
        let r = r.map_err(|e| {
            if e == WireError::Timeout {
                self.seq.poisoned = true;
            }
            e
        });
        self.seq.incoming(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::bitcore::SessionRng;

    const T: Duration = Duration::from_millis(500);

    #[test]
    fn frame_layout() {
        let bytes = encode_frame(7, &Frame::new(0x03, vec![0xAB, 0xCD])).unwrap();
        assert_eq!(&bytes[..9], &[0, 0, 0, 7, 0x03, 0, 0, 0, 2]);
        assert_eq!(&bytes[9..11], &[0xAB, 0xCD]);
        let crc = crc32fast::hash(&[0x03, 0, 0, 0, 2, 0xAB, 0xCD]);
        assert_eq!(&bytes[11..], &crc.to_be_bytes());
        assert_eq!(decode_frame(&bytes).unwrap(), (7, Frame::new(0x03, vec![0xAB, 0xCD])));
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode_frame(0, &Frame::new(0x05, vec![1, 2, 3, 4])).unwrap();
        for i in 4..bytes.len() {
            let mut b = bytes.clone();
            b[i] ^= 0x10;
            assert!(decode_frame(&b).is_err(), "flip at byte {i} undetected");
        }
        for cut in 0..bytes.len() {
            assert!(decode_frame(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn oversized_frames_refused() {
        let big = Frame::new(1, vec![0; MAX_PAYLOAD + 1]);
        assert_eq!(encode_frame(0, &big), Err(WireError::TooLarge(MAX_PAYLOAD + 1)));
        let mut header = vec![0, 0, 0, 0, 1];
        header.extend_from_slice(&((MAX_PAYLOAD + 1) as u32).to_be_bytes());
        assert_eq!(decode_frame(&header), Err(WireError::TooLarge(MAX_PAYLOAD + 1)));
    }

    #[test]
    fn loopback_roundtrip_and_timeout() {
        let (mut a, mut b) = channel_pair();
        let f = Frame::new(0x0A, b"hello".to_vec());
        a.send(&f).unwrap();
        assert_eq!(b.recv(T).unwrap(), f);
        assert_eq!(b.recv(Duration::from_millis(10)), Err(WireError::Timeout));
        // a clean timeout leaves the connection usable
        a.send(&f).unwrap();
        assert_eq!(b.recv(T).unwrap(), f);
    }

    #[test]
    fn truncated_frame_aborts_connection() {
        let (mut a, mut b) = channel_pair();
        let bytes = encode_frame(0, &Frame::new(1, vec![9; 100])).unwrap();
        a.send_raw(bytes[..50].to_vec()).unwrap();
        assert_eq!(b.recv(T), Err(WireError::Truncated));
        a.send(&Frame::new(1, vec![])).unwrap();
        assert_eq!(b.recv(T), Err(WireError::Closed));
    }

    #[test]
    fn sequence_gap_aborts_connection() {
        let (mut a, mut b) = channel_pair();
        a.send_raw(encode_frame(1, &Frame::new(1, vec![])).unwrap()).unwrap();
        assert_eq!(b.recv(T), Err(WireError::Sequence { expected: 0, got: 1 }));
    }

    #[test]
    fn dropped_peer_reads_as_closed() {
        let (a, mut b) = channel_pair();
        drop(a);
        assert_eq!(b.recv(T), Err(WireError::Closed));
    }

    #[test]
    fn ten_thousand_frames_keep_order() {
        let (mut a, mut b) = channel_pair();
        let handle = std::thread::spawn(move || {
            let mut rng = SessionRng::from_u64(1);
            let mut sent = Vec::new();
            for i in 0..10_000u32 {
                let len = rng.gen_range(0..=100_000usize);
                let mut payload = vec![0u8; len];
                rng.fill(&mut payload[..]);
                if len >= 4 {
                    payload[..4].copy_from_slice(&i.to_be_bytes());
                }
                sent.push(crc32fast::hash(&payload));
                a.send(&Frame::new((i % 11) as u8 + 1, payload)).unwrap();
            }
            sent
        });
        let mut got = Vec::new();
        for i in 0..10_000u32 {
            let f = b.recv(Duration::from_secs(10)).unwrap();
            assert_eq!(f.msg_type, (i % 11) as u8 + 1);
            got.push(crc32fast::hash(&f.payload));
        }
        assert_eq!(handle.join().unwrap(), got);
    }

    #[test]
    fn tcp_loopback() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let mut t = TcpTransport::accept(&listener, Duration::from_secs(5)).unwrap();
            let f = t.recv(Duration::from_secs(5)).unwrap();
            t.send(&Frame::new(f.msg_type + 1, f.payload.iter().rev().copied().collect())).unwrap();
        });
        let mut c = TcpTransport::connect(addr, Duration::from_secs(5)).unwrap();
        c.send(&Frame::new(1, vec![1, 2, 3])).unwrap();
        assert_eq!(c.recv(Duration::from_secs(5)).unwrap(), Frame::new(2, vec![3, 2, 1]));
        server.join().unwrap();
        assert!(matches!(c.recv(Duration::from_secs(5)), Err(WireError::Closed)));
    }

    #[test]
    fn tcp_version_mismatch() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            s.write_all(&[WIRE_VERSION + 1]).unwrap();
            let mut v = [0u8; 1];
            let _ = s.read_exact(&mut v);
        });
        let r = TcpTransport::connect(addr, Duration::from_secs(5));
        assert!(matches!(r, Err(WireError::Version(v)) if v == WIRE_VERSION + 1));
        server.join().unwrap();
    }
}
