//! Verifiable one-way reconciliation: LDPC syndromes, belief-propagation
//! decoding, and a hash tag that turns every decoder mistake into a reject.
//!
//! The parity-check matrix is a column-weight-3 Gallager-style ensemble drawn
//! from a 32-byte code seed. Row degrees differ by at most one.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitcore::{BitString, SessionRng};
use crate::bounds::binary_entropy;
use crate::codec::ByteReader;
use crate::error::{Error, Result};
use crate::owf::{HashAlgorithm, DOMAIN_IR_TAG};

pub const COLUMN_WEIGHT: usize = 3;
pub const MAX_ITERATIONS: usize = 60;
pub const LLR_CLAMP: f64 = 25.0;
pub const MIN_TAG_BITS: u32 = 8;
const FOUR_CYCLE_PASSES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IrBackend {
    /// No syndrome; only the tag is sent. Correct only on identical strings.
    Trivial,
    Ldpc,
}

impl IrBackend {
    pub fn id(self) -> u8 {
        match self {
            IrBackend::Trivial => 0x00,
            IrBackend::Ldpc => 0x01,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0x00 => Ok(IrBackend::Trivial),
            0x01 => Ok(IrBackend::Ldpc),
            other => Err(Error::Malformed(format!("unknown IR backend {other:#04x}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IrBackend::Trivial => "trivial",
            IrBackend::Ldpc => "ldpc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrParams {
    n_raw: usize,
    p_design: f64,
    f: f64,
    tau: u32,
    backend: IrBackend,
    hash: HashAlgorithm,
}

impl IrParams {
    pub fn new(
        n_raw: usize,
        p_design: f64,
        f: f64,
        tau: u32,
        backend: IrBackend,
        hash: HashAlgorithm,
    ) -> Result<Self> {
        if n_raw == 0 {
            return Err(Error::InvalidParameter("N_raw must be positive".into()));
        }
        if !(p_design > 0.0 && p_design < 0.5) {
            return Err(Error::InvalidParameter(format!("p_design = {p_design} outside (0, 1/2)")));
        }
        if !(f >= 1.0) {
            return Err(Error::InvalidParameter(format!("IR efficiency f = {f} < 1")));
        }
        if !(MIN_TAG_BITS..=u16::MAX as u32).contains(&tau) {
            return Err(Error::InvalidParameter(format!("tag length {tau} outside [8, 65535]")));
        }
        let p = Self { n_raw, p_design, f, tau, backend, hash };
        if backend == IrBackend::Ldpc && p.leak_syndrome() >= n_raw {
            return Err(Error::InvalidParameter(format!(
                "syndrome length {} not below N_raw = {n_raw}",
                p.leak_syndrome()
            )));
        }
        Ok(p)
    }

    pub fn n_raw(&self) -> usize {
        self.n_raw
    }

    pub fn p_design(&self) -> f64 {
        self.p_design
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    pub fn backend(&self) -> IrBackend {
        self.backend
    }

    pub fn hash(&self) -> HashAlgorithm {
        self.hash
    }

    /// `ceil(f h(p_design) N_raw)`, or 0 for the trivial backend.
    pub fn leak_syndrome(&self) -> usize {
        match self.backend {
            IrBackend::Trivial => 0,
            IrBackend::Ldpc => {
                let h = binary_entropy(self.p_design).expect("p_design checked in new");
                (self.f * h * self.n_raw as f64).ceil() as usize
            }
        }
    }

    /// Syndrome plus tag.
    pub fn leak_total(&self) -> usize {
        self.leak_syndrome() + self.tau as usize
    }
}

/// Tag collision bound `2^-tau`.
pub fn epsilon_ir_for_tag(tau: u32) -> f64 {
    2f64.powi(-(tau as i32))
}

pub fn epsilon_ir(params: &IrParams) -> f64 {
    epsilon_ir_for_tag(params.tau)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Syndrome {
    pub code_seed: [u8; 32],
    pub syn: BitString,
    pub tag: BitString,
}

impl Syndrome {
    /// `seed(32) | l(4) | syn | tau(2) | tag`.
    pub fn write_wire(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.code_seed);
        out.extend_from_slice(&(self.syn.len() as u32).to_be_bytes());
        out.extend_from_slice(self.syn.as_bytes());
        out.extend_from_slice(&(self.tag.len() as u16).to_be_bytes());
        out.extend_from_slice(self.tag.as_bytes());
    }

    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_wire(&mut out);
        out
    }

    pub(crate) fn read_wire(r: &mut ByteReader<'_>) -> Result<Self> {
        let code_seed: [u8; 32] = r.take(32, "code seed")?.try_into().expect("32 bytes");
        let l = r.u32("syndrome length")? as usize;
        let syn = BitString::from_bytes(r.take(l.div_ceil(8), "syndrome")?.to_vec(), l)?;
        let tau = r.u16("tag length")? as usize;
        let tag = BitString::from_bytes(r.take(tau.div_ceil(8), "tag")?.to_vec(), tau)?;
        Ok(Self { code_seed, syn, tag })
    }

    pub fn from_wire(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        let s = Self::read_wire(&mut r)?;
        r.finish("syndrome")?;
        Ok(s)
    }

    /// Bits revealed by this syndrome.
    pub fn leak_bits(&self) -> usize {
        self.syn.len() + self.tag.len()
    }
}

/// Sparse `l x n` parity-check matrix stored by rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheck {
    n: usize,
    row_ptr: Vec<usize>,
    /// Column index of each edge, grouped by row.
    edge_col: Vec<u32>,
    /// Edge indices touching each column.
    col_edges: Vec<Vec<u32>>,
}

impl ParityCheck {
    /// Deterministic column-weight-3 ensemble from `code_seed`.
    pub fn generate(n: usize, l: usize, code_seed: &[u8; 32]) -> Result<Self> {
        if l == 0 || n == 0 {
            return Err(Error::InvalidParameter("parity-check dimensions must be positive".into()));
        }
        let w = COLUMN_WEIGHT.min(l);
        let mut rng = SessionRng::from_seed(*code_seed);
        // each row appears floor(wn/l) or ceil(wn/l) times
        let mut deck: Vec<u32> = (0..w * n).map(|s| (s % l) as u32).collect();
        deck.shuffle(&mut rng);
        for col in 0..n {
            for slot in 1..w {
                let here = col * w + slot;
                let mut tries = 0;
                while deck[col * w..here].contains(&deck[here]) {
                    let other = rng.gen_range(0..deck.len());
                    let oc = other / w;
                    let (a, b) = (deck[here], deck[other]);
                    // the swap must leave both columns free of repeats
                    if oc != col
                        && !deck[col * w..col * w + w].contains(&b)
                        && !deck[oc * w..oc * w + w].contains(&a)
                    {
                        deck.swap(here, other);
                    }
                    tries += 1;
                    if tries > 100_000 {
                        return Err(Error::InvalidParameter(
                            "could not repair parity-check ensemble".into(),
                        ));
                    }
                }
            }
        }
        remove_four_cycles(&mut deck, n, l, w, &mut rng);
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); l];
        for (socket, &r) in deck.iter().enumerate() {
            rows[r as usize].push((socket / w) as u32);
        }
        let mut row_ptr = Vec::with_capacity(l + 1);
        let mut edge_col = Vec::with_capacity(w * n);
        let mut col_edges = vec![Vec::with_capacity(w); n];
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            for &c in row.iter() {
                col_edges[c as usize].push(edge_col.len() as u32);
                edge_col.push(c);
            }
            row_ptr.push(edge_col.len());
        }
        Ok(Self { n, row_ptr, edge_col, col_edges })
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.edge_col[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn column_weight(&self, c: usize) -> usize {
        self.col_edges[c].len()
    }

    pub fn multiply(&self, x: &BitString) -> Result<BitString> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, actual: x.len() });
        }
        Ok(BitString::from_bits(
            (0..self.rows()).map(|r| self.row(r).iter().fold(false, |acc, &c| acc ^ x.bit(c as usize))),
        ))
    }

    /// Sum-product decoding of `x` from `syn = H x` and a BSC(p) observation
    /// `y`. `None` when no iterate satisfies the syndrome.
    pub fn decode_bp(&self, syn: &BitString, y: &BitString, p: f64) -> Option<BitString> {
        let prior_mag = ((1.0 - p) / p).ln().min(LLR_CLAMP);
        let prior: Vec<f64> = y.iter().map(|b| if b { -prior_mag } else { prior_mag }).collect();
        let edges = self.edge_col.len();
        let mut v2c: Vec<f64> = self.edge_col.iter().map(|&c| prior[c as usize]).collect();
        let mut c2v = vec![0.0f64; edges];
        let mut t = Vec::new();
        let mut suffix = Vec::new();
        let mut x = y.clone();
        if &self.multiply(&x).ok()? == syn {
            return Some(x);
        }
        for _ in 0..MAX_ITERATIONS {
            for r in 0..self.rows() {
                let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
                let sign = if syn.bit(r) { -1.0 } else { 1.0 };
                t.clear();
                t.extend(v2c[lo..hi].iter().map(|&m| (0.5 * m).tanh()));
                suffix.clear();
                suffix.resize(t.len() + 1, 1.0);
                for i in (0..t.len()).rev() {
                    suffix[i] = suffix[i + 1] * t[i];
                }
                let mut prefix = 1.0;
                for (i, e) in (lo..hi).enumerate() {
                    let prod = (prefix * suffix[i + 1]).clamp(-0.999_999_999_999, 0.999_999_999_999);
                    c2v[e] = (sign * 2.0 * prod.atanh()).clamp(-LLR_CLAMP, LLR_CLAMP);
                    prefix *= t[i];
                }
            }
            for (c, es) in self.col_edges.iter().enumerate() {
                let total: f64 = prior[c] + es.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                x.set(c, total < 0.0);
                for &e in es {
                    v2c[e as usize] = (total - c2v[e as usize]).clamp(-LLR_CLAMP, LLR_CLAMP);
                }
            }
            if &self.multiply(&x).ok()? == syn {
                return Some(x);
            }
        }
        None
    }
}

/// Moves sockets until no two columns share two rows, or the pass budget
/// runs out. Keeps every column free of repeated rows.
fn remove_four_cycles(deck: &mut [u32], n: usize, l: usize, w: usize, rng: &mut SessionRng) {
    if w < 2 {
        return;
    }
    let mut stamp = vec![usize::MAX; n];
    for _ in 0..FOUR_CYCLE_PASSES {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); l];
        for (socket, &r) in deck.iter().enumerate() {
            rows[r as usize].push((socket / w) as u32);
        }
        let mut found = 0;
        for col in 0..n {
            let mut clash = None;
            'scan: for slot in 0..w {
                for &other in &rows[deck[col * w + slot] as usize] {
                    let other = other as usize;
                    if other == col {
                        continue;
                    }
                    if stamp[other] == col {
                        clash = Some(slot);
                        break 'scan;
                    }
                    stamp[other] = col;
                }
            }
            let Some(slot) = clash else { continue };
            found += 1;
            let here = col * w + slot;
            for _ in 0..64 {
                let other = rng.gen_range(0..deck.len());
                let oc = other / w;
                let (a, b) = (deck[here], deck[other]);
                if oc != col
                    && !deck[col * w..col * w + w].contains(&b)
                    && !deck[oc * w..oc * w + w].contains(&a)
                {
                    deck.swap(here, other);
                    break;
                }
            }
        }
        stamp.fill(usize::MAX);
        if found == 0 {
            return;
        }
    }
}

/// A parity-check matrix bound to its parameters.
#[derive(Clone, Debug)]
pub struct IrCode {
    params: IrParams,
    code_seed: [u8; 32],
    matrix: Option<ParityCheck>,
}

impl IrCode {
    pub fn new(params: IrParams, code_seed: [u8; 32]) -> Result<Self> {
        let matrix = match params.backend {
            IrBackend::Trivial => None,
            IrBackend::Ldpc => Some(ParityCheck::generate(params.n_raw, params.leak_syndrome(), &code_seed)?),
        };
        Ok(Self { params, code_seed, matrix })
    }

    pub fn params(&self) -> &IrParams {
        &self.params
    }

    pub fn matrix(&self) -> Option<&ParityCheck> {
        self.matrix.as_ref()
    }

    fn tag(&self, x: &BitString) -> BitString {
        let mut input = self.code_seed.to_vec();
        x.write_wire(&mut input);
        self.params.hash.expand(DOMAIN_IR_TAG, &input, self.params.tau as usize)
    }

    fn check_len(&self, x: &BitString) -> Result<()> {
        if x.len() != self.params.n_raw {
            return Err(Error::LengthMismatch { expected: self.params.n_raw, actual: x.len() });
        }
        Ok(())
    }

    pub fn syndrome(&self, x: &BitString) -> Result<Syndrome> {
        self.check_len(x)?;
        let syn = match &self.matrix {
            Some(h) => h.multiply(x)?,
            None => BitString::zeros(0),
        };
        Ok(Syndrome { code_seed: self.code_seed, syn, tag: self.tag(x) })
    }

    /// The reconciled string, or `None` for reject.
    pub fn decode(&self, s: &Syndrome, y: &BitString) -> Result<Option<BitString>> {
        self.check_len(y)?;
        if s.code_seed != self.code_seed
            || s.syn.len() != self.params.leak_syndrome()
            || s.tag.len() != self.params.tau as usize
        {
            return Ok(None);
        }
        let candidate = match &self.matrix {
            Some(h) => h.decode_bp(&s.syn, y, self.params.p_design),
            None => Some(y.clone()),
        };
        Ok(candidate.filter(|x| self.tag(x) == s.tag))
    }
}

pub fn syn(x: &BitString, params: &IrParams, code_seed: [u8; 32]) -> Result<Syndrome> {
    IrCode::new(*params, code_seed)?.syndrome(x)
}

pub fn dec(s: &Syndrome, y: &BitString, params: &IrParams) -> Result<Option<BitString>> {
    IrCode::new(*params, s.code_seed)?.decode(s, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ldpc(n: usize, p: f64, f: f64, tau: u32) -> IrParams {
        IrParams::new(n, p, f, tau, IrBackend::Ldpc, HashAlgorithm::Blake3).unwrap()
    }

    fn noisy(rng: &mut SessionRng, x: &BitString, errors: usize) -> BitString {
        let mut y = x.clone();
        let idx = crate::bitcore::sample_subset(rng, x.len(), errors).unwrap();
        for i in idx.iter() {
            y.flip(i);
        }
        y
    }

    #[test]
    fn epsilon_examples() {
        assert!((epsilon_ir_for_tag(32) - 2.328_306_436_538_696_3e-10).abs() < 1e-22);
        assert_eq!(epsilon_ir_for_tag(1), 0.5);
        assert!((epsilon_ir_for_tag(16) - 1.526e-5).abs() < 1e-8);
        assert_eq!(epsilon_ir(&ldpc(1000, 0.03, 1.3, 16)), epsilon_ir_for_tag(16));
    }

    #[test]
    fn leak_lengths() {
        let p = ldpc(4096, 0.03, 1.3, 32);
        let expected = (1.3 * binary_entropy(0.03).unwrap() * 4096.0).ceil() as usize;
        assert_eq!(p.leak_syndrome(), expected);
        assert_eq!(p.leak_total(), expected + 32);
        let t = IrParams::new(64, 0.03, 1.3, 16, IrBackend::Trivial, HashAlgorithm::Blake3).unwrap();
        assert_eq!(t.leak_syndrome(), 0);
        assert!(IrParams::new(100, 0.3, 1.5, 16, IrBackend::Ldpc, HashAlgorithm::Blake3).is_err());
        assert!(IrParams::new(100, 0.03, 1.5, 4, IrBackend::Ldpc, HashAlgorithm::Blake3).is_err());
    }

    #[test]
    fn matrix_shape() {
        let h = ParityCheck::generate(1000, 250, &[3; 32]).unwrap();
        assert_eq!(h.rows(), 250);
        for c in 0..1000 {
            assert_eq!(h.column_weight(c), 3);
        }
        for r in 0..250 {
            let row = h.row(r);
            assert_eq!(row.len(), 12);
            assert!(row.windows(2).all(|w| w[0] < w[1]), "duplicate column in row {r}");
        }
        let uneven = ParityCheck::generate(1000, 300, &[4; 32]).unwrap();
        for r in 0..300 {
            assert!((10..=11).contains(&uneven.row(r).len()));
        }
        assert_eq!(ParityCheck::generate(1000, 300, &[4; 32]).unwrap(), uneven);
        assert_ne!(ParityCheck::generate(1000, 300, &[5; 32]).unwrap(), uneven);
    }

    #[test]
    fn syndrome_is_linear_and_deterministic() {
        let mut rng = SessionRng::from_u64(1);
        let code = IrCode::new(ldpc(2000, 0.03, 1.3, 16), [9; 32]).unwrap();
        assert!(code.syndrome(&BitString::zeros(2000)).unwrap().syn.is_zero());
        let x = BitString::random(&mut rng, 2000);
        let y = BitString::random(&mut rng, 2000);
        let sx = code.syndrome(&x).unwrap().syn;
        let sy = code.syndrome(&y).unwrap().syn;
        assert_eq!(code.syndrome(&x.xor(&y).unwrap()).unwrap().syn, sx.xor(&sy).unwrap());
        assert_eq!(syn(&x, code.params(), [9; 32]).unwrap(), code.syndrome(&x).unwrap());
        assert!(code.syndrome(&BitString::zeros(10)).is_err());
    }

    #[test]
    fn wire_roundtrip() {
        let mut rng = SessionRng::from_u64(2);
        let code = IrCode::new(ldpc(500, 0.05, 1.2, 20), [1; 32]).unwrap();
        let s = code.syndrome(&BitString::random(&mut rng, 500)).unwrap();
        let w = s.to_wire();
        let l = s.syn.len();
        assert_eq!(w.len(), 32 + 4 + l.div_ceil(8) + 2 + 3);
        assert_eq!(&w[32..36], &(l as u32).to_be_bytes());
        assert_eq!(Syndrome::from_wire(&w).unwrap(), s);
        assert!(Syndrome::from_wire(&w[..w.len() - 1]).is_err());
        assert_eq!(s.leak_bits(), l + 20);
    }

    #[test]
    fn zero_errors_decode() {
        let mut rng = SessionRng::from_u64(3);
        for backend in [IrBackend::Trivial, IrBackend::Ldpc] {
            let p = IrParams::new(1024, 0.02, 1.3, 16, backend, HashAlgorithm::Blake3).unwrap();
            let x = BitString::random(&mut rng, 1024);
            let s = syn(&x, &p, [7; 32]).unwrap();
            assert_eq!(dec(&s, &x, &p).unwrap(), Some(x));
        }
    }

    #[test]
    fn trivial_backend_rejects_any_difference() {
        let mut rng = SessionRng::from_u64(4);
        let p = IrParams::new(256, 0.02, 1.3, 16, IrBackend::Trivial, HashAlgorithm::Blake3).unwrap();
        let x = BitString::random(&mut rng, 256);
        let s = syn(&x, &p, [7; 32]).unwrap();
        assert_eq!(dec(&s, &noisy(&mut rng, &x, 1), &p).unwrap(), None);
    }

    #[test]
    fn decodes_at_half_design_error() {
        let mut rng = SessionRng::from_u64(5);
        let p = ldpc(4096, 0.03, 1.3, 32);
        let code = IrCode::new(p, [11; 32]).unwrap();
        let errors = (0.5 * 0.03 * 4096.0) as usize;
        let ok = (0..300)
            .filter(|_| {
                let x = BitString::random(&mut rng, 4096);
                let y = noisy(&mut rng, &x, errors);
                code.decode(&code.syndrome(&x).unwrap(), &y).unwrap() == Some(x)
            })
            .count();
        assert!(ok >= 297, "{ok}/300");
    }

    #[test]
    fn unrelated_strings_reject() {
        let mut rng = SessionRng::from_u64(6);
        let p = ldpc(1024, 0.03, 1.3, 16);
        let code = IrCode::new(p, [12; 32]).unwrap();
        for _ in 0..200 {
            let x = BitString::random(&mut rng, 1024);
            let y = BitString::random(&mut rng, 1024);
            assert_eq!(code.decode(&code.syndrome(&x).unwrap(), &y).unwrap(), None);
        }
    }

    #[test]
    fn mismatched_syndrome_shapes_reject() {
        let mut rng = SessionRng::from_u64(7);
        let code = IrCode::new(ldpc(512, 0.03, 1.3, 16), [13; 32]).unwrap();
        let x = BitString::random(&mut rng, 512);
        let mut s = code.syndrome(&x).unwrap();
        s.code_seed[0] ^= 1;
        assert_eq!(code.decode(&s, &x).unwrap(), None);
        let mut s = code.syndrome(&x).unwrap();
        s.tag = BitString::zeros(8);
        assert_eq!(code.decode(&s, &x).unwrap(), None);
    }
}
