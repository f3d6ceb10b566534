//! Packed bit strings, index sets and the seeded session RNG.
//!
//! Bits are packed most-significant-bit first inside each byte and trailing
//! pad bits are always zero, so the packed bytes of two equal strings are
//! identical and can go on the wire unchanged.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::codec::ByteReader;
use crate::error::{Error, Result};

/// Fixed-length packed bit string.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    len: usize,
    bytes: Vec<u8>,
}

#[inline]
fn byte_len(bits: usize) -> usize {
    bits.div_ceil(8)
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            bytes: vec![0; byte_len(len)],
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut out = Self::zeros(0);
        for b in bits {
            out.push(b);
        }
        out
    }

    /// Wraps already packed bytes. Rejects a byte count that does not match
    /// `len` and any non-zero pad bit.
    pub fn from_bytes(bytes: Vec<u8>, len: usize) -> Result<Self> {
        if bytes.len() != byte_len(len) {
            return Err(Error::LengthMismatch {
                expected: byte_len(len),
                actual: bytes.len(),
            });
        }
        let pad = bytes.len() * 8 - len;
        if pad > 0 && bytes[bytes.len() - 1] & ((1u8 << pad) - 1) != 0 {
            return Err(Error::Malformed("non-zero pad bits".into()));
        }
        Ok(Self { len, bytes })
    }

    /// Builds a string from the leading `len` bits of `bytes`, clearing the pad.
    pub fn from_bytes_truncated(mut bytes: Vec<u8>, len: usize) -> Self {
        bytes.resize(byte_len(len), 0);
        let mut out = Self { len, bytes };
        out.clear_pad();
        out
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R, len: usize) -> Self {
        let mut bytes = vec![0u8; byte_len(len)];
        rng.fill_bytes(&mut bytes);
        Self::from_bytes_truncated(bytes, len)
    }

    fn clear_pad(&mut self) {
        let pad = self.bytes.len() * 8 - self.len;
        if pad > 0 {
            let last = self.bytes.len() - 1;
            self.bytes[last] &= !((1u8 << pad) - 1);
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    /// Unchecked read; panics past the end like slice indexing.
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.bytes[i >> 3] & (0x80 >> (i & 7)) != 0
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        (i < self.len).then(|| self.bit(i))
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 0x80 >> (i & 7);
        if value {
            self.bytes[i >> 3] |= mask;
        } else {
            self.bytes[i >> 3] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let b = self.bit(i);
        self.set(i, !b);
    }

    pub fn push(&mut self, value: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.bit(i))
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.bytes.iter().all(|&b| b == 0)
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        let mut out = self.clone();
        out.xor_assign(other)?;
        Ok(out)
    }

    pub fn xor_assign(&mut self, other: &BitString) -> Result<()> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: other.len,
            });
        }
        for (a, b) in self.bytes.iter_mut().zip(&other.bytes) {
            *a ^= b;
        }
        Ok(())
    }

    /// Restriction `x_S`: bit `j` of the result is `self[s[j]]`.
    pub fn extract(&self, s: &IndexSet) -> Result<BitString> {
        let mut out = BitString::zeros(s.len());
        for (j, &i) in s.as_slice().iter().enumerate() {
            let i = i as usize;
            if i >= self.len {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.len,
                });
            }
            if self.bit(i) {
                out.set(j, true);
            }
        }
        Ok(out)
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = self.clone();
        for b in other.iter() {
            out.push(b);
        }
        out
    }

    /// Splits into `[0, at)` and `[at, len)`.
    pub fn split_at(&self, at: usize) -> Result<(BitString, BitString)> {
        if at > self.len {
            return Err(Error::IndexOutOfRange {
                index: at,
                len: self.len,
            });
        }
        let head = BitString::from_bits((0..at).map(|i| self.bit(i)));
        let tail = BitString::from_bits((at..self.len).map(|i| self.bit(i)));
        Ok((head, tail))
    }

    /// Wire form: 4-byte big-endian bit length, then the packed payload.
    pub fn write_wire(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.len as u32).to_be_bytes());
        out.extend_from_slice(&self.bytes);
    }

    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.bytes.len());
        self.write_wire(&mut out);
        out
    }

    pub(crate) fn read_wire(r: &mut ByteReader<'_>) -> Result<BitString> {
        let len = r.u32("bit length")? as usize;
        let bytes = r.take(byte_len(len), "bit payload")?.to_vec();
        BitString::from_bytes(bytes, len)
    }

    /// Parses a wire-form bit string, requiring the whole buffer be consumed.
    pub fn from_wire(buf: &[u8]) -> Result<BitString> {
        let mut r = ByteReader::new(buf);
        let out = Self::read_wire(&mut r)?;
        r.finish("bit string")?;
        Ok(out)
    }

    /// Low `len` bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> BitString {
        assert!(len <= 64);
        BitString::from_bits((0..len).rev().map(|i| value >> i & 1 == 1))
    }

    /// Inverse of [`BitString::from_u64`]; only for strings of at most 64 bits.
    pub fn to_u64(&self) -> u64 {
        assert!(self.len <= 64);
        self.iter().fold(0u64, |acc, b| acc << 1 | b as u64)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            write!(f, "BitString({self})")
        } else {
            write!(f, "BitString(len={}, ones={})", self.len, self.count_ones())
        }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Malformed(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitString::from_bits)
    }
}

/// Relative Hamming weight `|x| / len(x)`.
pub fn relative_hamming(x: &BitString) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(x.count_ones() as f64 / x.len() as f64)
}

/// Rounds to 12 decimal digits before threshold comparisons so that the
/// acceptance decision does not depend on the last few ulps.
pub fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Sorted, duplicate-free subset of `0..universe`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct IndexSet {
    universe: usize,
    indices: Vec<u32>,
}

impl IndexSet {
    pub fn new(universe: usize, indices: Vec<u32>) -> Result<Self> {
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Malformed("index set not strictly ascending".into()));
            }
        }
        if let Some(&last) = indices.last() {
            if last as usize >= universe {
                return Err(Error::IndexOutOfRange {
                    index: last as usize,
                    len: universe,
                });
            }
        }
        Ok(Self { universe, indices })
    }

    pub fn from_unsorted(universe: usize, mut indices: Vec<u32>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(universe, indices)
    }

    pub fn full(universe: usize) -> Self {
        Self {
            universe,
            indices: (0..universe as u32).collect(),
        }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().map(|&i| i as usize)
    }

    pub fn contains(&self, i: usize) -> bool {
        u32::try_from(i)
            .map(|i| self.indices.binary_search(&i).is_ok())
            .unwrap_or(false)
    }

    pub fn complement(&self) -> IndexSet {
        let mut member = vec![false; self.universe];
        for i in self.iter() {
            member[i] = true;
        }
        IndexSet {
            universe: self.universe,
            indices: (0..self.universe as u32)
                .filter(|&i| !member[i as usize])
                .collect(),
        }
    }

    pub fn is_disjoint(&self, other: &IndexSet) -> bool {
        let (mut a, mut b) = (self.indices.iter().peekable(), other.indices.iter().peekable());
        while let (Some(x), Some(y)) = (a.peek(), b.peek()) {
            match x.cmp(y) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    pub fn union(&self, other: &IndexSet) -> Result<IndexSet> {
        if self.universe != other.universe {
            return Err(Error::LengthMismatch {
                expected: self.universe,
                actual: other.universe,
            });
        }
        let mut all = self.indices.clone();
        all.extend_from_slice(&other.indices);
        IndexSet::from_unsorted(self.universe, all)
    }

    /// Wire form: 4-byte count, then 4-byte big-endian indices. The universe
    /// is implied by context.
    pub fn write_wire(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.indices.len() as u32).to_be_bytes());
        for &i in &self.indices {
            out.extend_from_slice(&i.to_be_bytes());
        }
    }

    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.indices.len());
        self.write_wire(&mut out);
        out
    }

    pub(crate) fn read_wire(r: &mut ByteReader<'_>, universe: usize) -> Result<IndexSet> {
        let count = r.u32("index count")? as usize;
        let raw = r.take(
            count
                .checked_mul(4)
                .ok_or_else(|| Error::Malformed("index count overflow".into()))?,
            "indices",
        )?;
        let indices = raw
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
            .collect();
        IndexSet::new(universe, indices)
    }

    pub fn from_wire(buf: &[u8], universe: usize) -> Result<IndexSet> {
        let mut r = ByteReader::new(buf);
        let out = Self::read_wire(&mut r, universe)?;
        r.finish("index set")?;
        Ok(out)
    }
}

/// Uniform `size`-subset of `0..universe` by partial Fisher-Yates.
pub fn sample_subset<R: Rng + ?Sized>(rng: &mut R, universe: usize, size: usize) -> Result<IndexSet> {
    sample_from(rng, &(0..universe as u32).collect::<Vec<_>>(), size, universe)
}

/// Uniform `size`-subset of the given population (sorted or not).
pub fn sample_from<R: Rng + ?Sized>(
    rng: &mut R,
    population: &[u32],
    size: usize,
    universe: usize,
) -> Result<IndexSet> {
    if size > population.len() {
        return Err(Error::SubsetTooLarge {
            size,
            universe: population.len(),
        });
    }
    let mut pool = population.to_vec();
    for i in 0..size {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(size);
    IndexSet::from_unsorted(universe, pool)
}

/// Deterministic ChaCha20 stream used for every honest-party coin.
///
/// Tests seed it explicitly; production runs pull the seed from the
/// operating system.
#[derive(Clone, Debug)]
pub struct SessionRng {
    inner: ChaCha20Rng,
}

impl SessionRng {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            inner: ChaCha20Rng::from_seed(seed),
        }
    }

    pub fn from_u64(seed: u64) -> Self {
        Self::derived(&seed.to_be_bytes(), "qrot seed")
    }

    pub fn from_os() -> Self {
        Self {
            inner: ChaCha20Rng::from_entropy(),
        }
    }

    /// Seeds a stream from arbitrary material under a context label, so one
    /// master seed can feed several independent parties.
    pub fn derived(material: &[u8], label: &str) -> Self {
        let mut h = blake3::Hasher::new_derive_key(label);
        h.update(material);
        Self::from_seed(*h.finalize().as_bytes())
    }

    /// Splits off an independent child stream.
    pub fn fork(&mut self, label: &str) -> Self {
        let mut material = [0u8; 32];
        self.inner.fill_bytes(&mut material);
        Self::derived(&material, label)
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn bit(&mut self) -> bool {
        self.inner.next_u32() & 1 == 1
    }

    pub fn seed32(&mut self) -> [u8; 32] {
        let mut s = [0u8; 32];
        self.inner.fill_bytes(&mut s);
        s
    }
}

impl RngCore for SessionRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
