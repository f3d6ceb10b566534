//! Weakly-interactive hash-based string commitment.
//!
//! The verifier sends a random `(3k + n)`-bit vector `r_1`. Both sides expand
//! it into `n` linearly independent vectors `r_1..r_n`. The committer picks a
//! `k`-bit seed `s` and sends `c = H(s) xor sum_{i: m_i = 1} r_i`; opening
//! reveals `(m, s)` and the verifier recomputes `c`.

use rand::RngCore;

use crate::bitcore::{BitString, SessionRng};
use crate::codec::ByteReader;
use crate::error::{Error, Result};
use crate::owf::{HashAlgorithm, DOMAIN_COMMIT};

/// Attempts allowed per basis vector before giving up.
pub const BASIS_ATTEMPTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommitParams {
    k: usize,
    n_msg: usize,
}

impl CommitParams {
    pub fn new(k: usize, n_msg: usize) -> Result<Self> {
        if k < 16 {
            return Err(Error::InvalidParameter(format!("commitment k = {k} < 16")));
        }
        if n_msg < 1 {
            return Err(Error::InvalidParameter("commitment message length 0".into()));
        }
        Ok(Self { k, n_msg })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn message_len(&self) -> usize {
        self.n_msg
    }

    pub fn challenge_len(&self) -> usize {
        3 * self.k + self.n_msg
    }

    pub fn commitment_len(&self) -> usize {
        3 * self.k + self.n_msg
    }

    pub fn seed_len(&self) -> usize {
        self.k
    }

    pub fn opening_len(&self) -> usize {
        self.n_msg + self.k
    }

    /// Packed byte width of one commitment in a batch.
    pub fn commitment_bytes(&self) -> usize {
        self.commitment_len().div_ceil(8)
    }

    pub fn opening_bytes(&self) -> usize {
        self.opening_len().div_ceil(8)
    }
}

/// The verifier's random vector `r_1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Challenge(BitString);

impl Challenge {
    pub fn new(params: &CommitParams, r1: BitString) -> Result<Self> {
        if r1.len() != params.challenge_len() {
            return Err(Error::LengthMismatch {
                expected: params.challenge_len(),
                actual: r1.len(),
            });
        }
        Ok(Self(r1))
    }

    /// Uniform non-zero challenge.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R, params: &CommitParams) -> Self {
        loop {
            let r = BitString::random(rng, params.challenge_len());
            if !r.is_zero() {
                return Self(r);
            }
        }
    }

    pub fn bits(&self) -> &BitString {
        &self.0
    }
}

/// `(m, s)`; serialized as the concatenation `m || s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Opening {
    pub message: BitString,
    pub seed: BitString,
}

impl Opening {
    pub fn to_bits(&self) -> BitString {
        self.message.concat(&self.seed)
    }

    pub fn from_bits(params: &CommitParams, bits: &BitString) -> Result<Self> {
        if bits.len() != params.opening_len() {
            return Err(Error::LengthMismatch {
                expected: params.opening_len(),
                actual: bits.len(),
            });
        }
        let (message, seed) = bits.split_at(params.message_len())?;
        Ok(Self { message, seed })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitmentRecord {
    pub com: BitString,
    pub opening: Opening,
}

fn reduce(basis: &[(usize, BitString)], mut v: BitString) -> BitString {
    for (pivot, b) in basis {
        if v.bit(*pivot) {
            v.xor_assign(b).expect("equal lengths");
        }
    }
    v
}

fn leading_one(v: &BitString) -> Option<usize> {
    v.iter().position(|b| b)
}

/// Expands `r_1` into `n_msg` vectors that are linearly independent over
/// GF(2). `r_2..` come from a ChaCha stream keyed by `r_1`; a candidate in the
/// span of its predecessors is skipped.
pub fn derive_basis(r1: &Challenge, n_msg: usize) -> Result<Vec<BitString>> {
    let first = r1.bits();
    if first.is_zero() {
        return Err(Error::ZeroChallenge);
    }
    let width = first.len();
    if n_msg > width {
        return Err(Error::InvalidParameter(format!(
            "{n_msg} independent vectors requested in dimension {width}"
        )));
    }
    let mut rng = SessionRng::derived(&first.to_wire(), "qrot commitment basis");
    let mut out = vec![first.clone()];
    let mut echelon = vec![(leading_one(first).unwrap(), first.clone())];
    while out.len() < n_msg {
        let mut accepted = false;
        for _ in 0..BASIS_ATTEMPTS {
            let candidate = BitString::random(&mut rng, width);
            let reduced = reduce(&echelon, candidate.clone());
            if let Some(p) = leading_one(&reduced) {
                echelon.push((p, reduced));
                out.push(candidate);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::BasisExhausted(BASIS_ATTEMPTS));
        }
    }
    Ok(out)
}

/// Rank of a set of vectors over GF(2).
pub fn gf2_rank(vectors: &[BitString]) -> usize {
    let mut echelon: Vec<(usize, BitString)> = Vec::new();
    for v in vectors {
        let r = reduce(&echelon, v.clone());
        if let Some(p) = leading_one(&r) {
            echelon.push((p, r));
        }
    }
    echelon.len()
}

/// Basis derived once per challenge; commits and verifies many messages.
#[derive(Clone, Debug)]
pub struct CommitKey {
    params: CommitParams,
    hash: HashAlgorithm,
    basis: Vec<BitString>,
}

impl CommitKey {
    pub fn new(params: CommitParams, hash: HashAlgorithm, challenge: &Challenge) -> Result<Self> {
        if challenge.bits().len() != params.challenge_len() {
            return Err(Error::LengthMismatch {
                expected: params.challenge_len(),
                actual: challenge.bits().len(),
            });
        }
        let basis = derive_basis(challenge, params.message_len())?;
        Ok(Self {
            params,
            hash,
            basis,
        })
    }

    pub fn params(&self) -> &CommitParams {
        &self.params
    }

    pub fn hash(&self) -> HashAlgorithm {
        self.hash
    }

    pub fn basis(&self) -> &[BitString] {
        &self.basis
    }

    /// `H(s)` stretched to the commitment length.
    pub fn mask(&self, seed: &BitString) -> BitString {
        self.hash
            .expand(DOMAIN_COMMIT, &seed.to_wire(), self.params.commitment_len())
    }

    pub fn commit(&self, message: &BitString, seed: &BitString) -> Result<BitString> {
        if message.len() != self.params.message_len() {
            return Err(Error::LengthMismatch {
                expected: self.params.message_len(),
                actual: message.len(),
            });
        }
        if seed.len() != self.params.seed_len() {
            return Err(Error::LengthMismatch {
                expected: self.params.seed_len(),
                actual: seed.len(),
            });
        }
        let mut com = self.mask(seed);
        for (i, r) in self.basis.iter().enumerate() {
            if message.bit(i) {
                com.xor_assign(r)?;
            }
        }
        Ok(com)
    }

    /// Samples a fresh seed and returns the commitment with its opening.
    pub fn commit_random<R: RngCore + ?Sized>(
        &self,
        rng: &mut R,
        message: &BitString,
    ) -> Result<CommitmentRecord> {
        let seed = BitString::random(rng, self.params.seed_len());
        let com = self.commit(message, &seed)?;
        Ok(CommitmentRecord {
            com,
            opening: Opening {
                message: message.clone(),
                seed,
            },
        })
    }

    /// The committed message, or `None` when the opening does not match.
    pub fn verify(&self, com: &BitString, opening: &Opening) -> Option<BitString> {
        if com.len() != self.params.commitment_len() {
            return None;
        }
        let expected = self.commit(&opening.message, &opening.seed).ok()?;
        (expected == *com).then(|| opening.message.clone())
    }
}

pub fn commit(
    hash: HashAlgorithm,
    params: CommitParams,
    message: &BitString,
    seed: &BitString,
    challenge: &Challenge,
) -> Result<BitString> {
    CommitKey::new(params, hash, challenge)?.commit(message, seed)
}

pub fn open(params: &CommitParams, message: &BitString, seed: &BitString) -> Result<Opening> {
    if message.len() != params.message_len() {
        return Err(Error::LengthMismatch {
            expected: params.message_len(),
            actual: message.len(),
        });
    }
    if seed.len() != params.seed_len() {
        return Err(Error::LengthMismatch {
            expected: params.seed_len(),
            actual: seed.len(),
        });
    }
    Ok(Opening {
        message: message.clone(),
        seed: seed.clone(),
    })
}

pub fn verify(
    hash: HashAlgorithm,
    params: CommitParams,
    com: &BitString,
    opening: &Opening,
    challenge: &Challenge,
) -> Option<BitString> {
    CommitKey::new(params, hash, challenge)
        .ok()?
        .verify(com, opening)
}

/// Batch wire form: 4-byte count, then fixed-width packed items.
pub fn encode_batch(items: &[BitString], width_bits: usize, out: &mut Vec<u8>) {
    out.extend_from_slice(&(items.len() as u32).to_be_bytes());
    for item in items {
        debug_assert_eq!(item.len(), width_bits);
        out.extend_from_slice(item.as_bytes());
    }
}

pub(crate) fn read_batch(r: &mut ByteReader<'_>, width_bits: usize) -> Result<Vec<BitString>> {
    let count = r.u32("batch count")? as usize;
    let width = width_bits.div_ceil(8);
    let total = count
        .checked_mul(width)
        .ok_or_else(|| Error::Malformed("batch size overflow".into()))?;
    let raw = r.take(total, "batch items")?;
    raw.chunks_exact(width.max(1))
        .take(count)
        .map(|c| BitString::from_bytes(c.to_vec(), width_bits))
        .collect()
}

pub fn decode_batch(buf: &[u8], width_bits: usize) -> Result<Vec<BitString>> {
    let mut r = ByteReader::new(buf);
    let out = read_batch(&mut r, width_bits)?;
    r.finish("batch")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(k: usize, hash: HashAlgorithm, seed: u64) -> (CommitKey, SessionRng) {
        let params = CommitParams::new(k, 2).unwrap();
        let mut rng = SessionRng::from_u64(seed);
        let ch = Challenge::random(&mut rng, &params);
        (CommitKey::new(params, hash, &ch).unwrap(), rng)
    }

    #[test]
    fn params_lengths() {
        let p = CommitParams::new(32, 2).unwrap();
        assert_eq!(p.challenge_len(), 98);
        assert_eq!(p.commitment_len(), 98);
        assert_eq!(p.seed_len(), 32);
        assert_eq!(p.opening_len(), 34);
        assert!(CommitParams::new(15, 2).is_err());
        assert!(CommitParams::new(16, 0).is_err());
    }

    #[test]
    fn derive_basis_examples() {
        let p = CommitParams::new(16, 2).unwrap();
        let mut rng = SessionRng::from_u64(5);
        let ch = Challenge::random(&mut rng, &p);
        let one = derive_basis(&ch, 1).unwrap();
        assert_eq!(one, vec![ch.bits().clone()]);
        let two = derive_basis(&ch, 2).unwrap();
        assert_eq!(gf2_rank(&two), 2);
        assert_eq!(two, derive_basis(&ch, 2).unwrap());
        let wide = derive_basis(&ch, 40).unwrap();
        assert_eq!(gf2_rank(&wide), 40);

        let zero = Challenge::new(&p, BitString::zeros(50)).unwrap();
        assert_eq!(derive_basis(&zero, 2), Err(Error::ZeroChallenge));
    }

    #[test]
    fn commit_zero_message_is_mask() {
        let (key, mut rng) = setup(16, HashAlgorithm::Blake3, 6);
        let s = BitString::random(&mut rng, 16);
        assert_eq!(key.commit(&"00".parse().unwrap(), &s).unwrap(), key.mask(&s));
    }

    #[test]
    fn commit_is_linear_in_message() {
        let (key, mut rng) = setup(32, HashAlgorithm::Blake3, 7);
        let s = BitString::random(&mut rng, 32);
        let m: BitString = "10".parse().unwrap();
        for i in 0..2 {
            let mut m2 = m.clone();
            m2.flip(i);
            let diff = key.commit(&m, &s).unwrap().xor(&key.commit(&m2, &s).unwrap()).unwrap();
            assert_eq!(diff, key.basis()[i]);
        }
    }

    #[test]
    fn commit_rejects_bad_lengths() {
        let (key, _) = setup(16, HashAlgorithm::Blake3, 8);
        assert!(key.commit(&"0".parse().unwrap(), &BitString::zeros(16)).is_err());
        assert!(key.commit(&"01".parse().unwrap(), &BitString::zeros(15)).is_err());
    }

    #[test]
    fn open_concatenates() {
        let p = CommitParams::new(16, 2).unwrap();
        let s: BitString = "1011001110001111".parse().unwrap();
        let o = open(&p, &"00".parse().unwrap(), &s).unwrap();
        assert_eq!(o.to_bits().to_string(), format!("00{s}"));
        let o = open(&p, &"11".parse().unwrap(), &s).unwrap();
        assert_eq!(o.to_bits().to_string(), format!("11{s}"));
        assert_eq!(Opening::from_bits(&p, &o.to_bits()).unwrap(), o);
        assert!(open(&p, &"1".parse().unwrap(), &s).is_err());
    }

    #[test]
    fn golden_commitment_k32() {
        let p = CommitParams::new(32, 2).unwrap();
        let mut rng = SessionRng::from_seed([7u8; 32]);
        let ch = Challenge::random(&mut rng, &p);
        let s = BitString::random(&mut rng, 32);
        let com = commit(HashAlgorithm::Blake3, p, &"10".parse().unwrap(), &s, &ch).unwrap();
        assert_eq!(hex(com.as_bytes()), GOLDEN_K32);
    }

    const GOLDEN_K32: &str = "394a96e018b218028fd177f940";

    fn hex(b: &[u8]) -> String {
        b.iter().map(|x| format!("{x:02x}")).collect()
    }

    #[test]
    fn verify_correctness_many() {
        let p = CommitParams::new(16, 2).unwrap();
        let mut rng = SessionRng::from_u64(9);
        for _ in 0..10_000 {
            let ch = Challenge::random(&mut rng, &p);
            let m = BitString::random(&mut rng, 2);
            let s = BitString::random(&mut rng, 16);
            let com = commit(HashAlgorithm::Blake3, p, &m, &s, &ch).unwrap();
            let o = open(&p, &m, &s).unwrap();
            assert_eq!(verify(HashAlgorithm::Blake3, p, &com, &o, &ch), Some(m));
        }
    }

    #[test]
    fn single_bit_flips_reject() {
        for hash in [HashAlgorithm::Blake3, HashAlgorithm::Toy] {
            let (key, mut rng) = setup(16, hash, 10);
            let rec = key.commit_random(&mut rng, &"01".parse().unwrap()).unwrap();
            for i in 0..rec.com.len() {
                let mut bad = rec.com.clone();
                bad.flip(i);
                assert_eq!(key.verify(&bad, &rec.opening), None, "flip {i}");
            }
        }
    }

    #[test]
    fn wrong_seed_rejects() {
        let (key, mut rng) = setup(16, HashAlgorithm::Blake3, 11);
        let trials = 20_000;
        let mut accepted = 0;
        for _ in 0..trials {
            let m = BitString::random(&mut rng, 2);
            let rec = key.commit_random(&mut rng, &m).unwrap();
            let mut other = BitString::random(&mut rng, 16);
            if other == rec.opening.seed {
                other.flip(0);
            }
            let forged = Opening {
                message: m,
                seed: other,
            };
            if key.verify(&rec.com, &forged).is_some() {
                accepted += 1;
            }
        }
        // 2^-16 * 20000 ~ 0.3 expected
        assert!(accepted as f64 / trials as f64 <= 2f64.powi(-16) + 3.0 * (2f64.powi(-16) / trials as f64).sqrt());
    }

    #[test]
    fn malformed_opening_rejects() {
        let (key, mut rng) = setup(16, HashAlgorithm::Blake3, 12);
        let rec = key.commit_random(&mut rng, &"11".parse().unwrap()).unwrap();
        let short = Opening {
            message: "1".parse().unwrap(),
            seed: rec.opening.seed.clone(),
        };
        assert_eq!(key.verify(&rec.com, &short), None);
        assert_eq!(key.verify(&BitString::zeros(3), &rec.opening), None);
    }

    #[test]
    fn batch_wire_roundtrip() {
        let (key, mut rng) = setup(16, HashAlgorithm::Blake3, 13);
        let coms: Vec<_> = (0..5)
            .map(|_| {
                let m = BitString::random(&mut rng, 2);
                key.commit_random(&mut rng, &m).unwrap().com
            })
            .collect();
        let mut buf = Vec::new();
        encode_batch(&coms, 50, &mut buf);
        assert_eq!(buf.len(), 4 + 5 * 7);
        assert_eq!(decode_batch(&buf, 50).unwrap(), coms);
        assert!(decode_batch(&buf[..buf.len() - 1], 50).is_err());
    }
}
