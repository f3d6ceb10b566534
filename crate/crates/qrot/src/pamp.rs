//! Privacy amplification with random Toeplitz matrices over GF(2).
//!
//! The `n x N_raw` matrix is described by `N_raw + n - 1` bits `d` with
//! `T[i][j] = d[n - 1 - i + j]`: the first row is `d[n-1..]` and the first
//! column, read bottom to top, is `d[0..n)`. `T x` is a slice of the linear
//! convolution of `d` with the reversed `x`; the fast path computes that
//! convolution exactly with a number-theoretic transform and reduces mod 2.

use rand::RngCore;

use crate::bitcore::BitString;
use crate::bounds::ProtocolParams;
use crate::codec::ByteReader;
use crate::error::{Error, Result};

/// Above this many matrix entries `hash` switches to the transform path.
pub const FFT_THRESHOLD: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzSeed {
    n_raw: usize,
    n: usize,
    diag: BitString,
}

impl ToeplitzSeed {
    pub fn new(n_raw: usize, n: usize, diag: BitString) -> Result<Self> {
        if n == 0 || n_raw == 0 {
            return Err(Error::InvalidParameter("Toeplitz dimensions must be positive".into()));
        }
        if diag.len() != n_raw + n - 1 {
            return Err(Error::LengthMismatch {
                expected: n_raw + n - 1,
                actual: diag.len(),
            });
        }
        Ok(Self { n_raw, n, diag })
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R, n_raw: usize, n: usize) -> Result<Self> {
        Self::new(n_raw, n, BitString::random(rng, n_raw + n - 1))
    }

    pub fn input_len(&self) -> usize {
        self.n_raw
    }

    pub fn output_len(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> &BitString {
        &self.diag
    }

    pub fn entry(&self, row: usize, col: usize) -> bool {
        self.diag.bit(self.n - 1 - row + col)
    }

    /// Descriptor wire form: 4-byte `N_raw`, 4-byte `n`, packed diagonal.
    pub fn write_wire(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.n_raw as u32).to_be_bytes());
        out.extend_from_slice(&(self.n as u32).to_be_bytes());
        out.extend_from_slice(self.diag.as_bytes());
    }

    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_wire(&mut out);
        out
    }

    pub(crate) fn read_wire(r: &mut ByteReader<'_>) -> Result<Self> {
        let n_raw = r.u32("N_raw")? as usize;
        let n = r.u32("n")? as usize;
        if n == 0 || n_raw == 0 {
            return Err(Error::Malformed("zero Toeplitz dimension".into()));
        }
        let bits = n_raw + n - 1;
        let diag = BitString::from_bytes(r.take(bits.div_ceil(8), "diagonal")?.to_vec(), bits)?;
        Self::new(n_raw, n, diag)
    }

    pub fn from_wire(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        let out = Self::read_wire(&mut r)?;
        r.finish("hash descriptor")?;
        Ok(out)
    }

    fn check_input(&self, x: &BitString) -> Result<()> {
        if x.len() != self.n_raw {
            return Err(Error::LengthMismatch {
                expected: self.n_raw,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `T x`, choosing the transform path for large matrices.
    pub fn hash(&self, x: &BitString) -> Result<BitString> {
        if self.n * self.n_raw > FFT_THRESHOLD {
            self.hash_fft(x)
        } else {
            self.hash_naive(x)
        }
    }

    /// Direct evaluation: output bit `i` is the parity of the diagonal window
    /// starting at `n - 1 - i`, restricted to the ones of `x`.
    pub fn hash_naive(&self, x: &BitString) -> Result<BitString> {
        self.check_input(x)?;
        let ones: Vec<usize> = (0..x.len()).filter(|&j| x.bit(j)).collect();
        Ok(BitString::from_bits((0..self.n).map(|i| {
            let base = self.n - 1 - i;
            ones.iter().fold(false, |acc, &j| acc ^ self.diag.bit(base + j))
        })))
    }

    /// Exact integer convolution via NTT, then parity.
    pub fn hash_fft(&self, x: &BitString) -> Result<BitString> {
        self.check_input(x)?;
        let n_raw = self.n_raw;
        // Cyclic length N_raw + n - 1 is enough: wrapped terms never land on
        // the output window [N_raw - 1, N_raw + n - 2].
        let size = (n_raw + self.n - 1).next_power_of_two();
        let mut a: Vec<u64> = (0..size)
            .map(|i| (i < self.diag.len() && self.diag.bit(i)) as u64)
            .collect();
        let mut b: Vec<u64> = (0..size)
            .map(|i| (i < n_raw && x.bit(n_raw - 1 - i)) as u64)
            .collect();
        ntt::transform(&mut a, false);
        ntt::transform(&mut b, false);
        for (u, v) in a.iter_mut().zip(&b) {
            *u = ntt::mul(*u, *v);
        }
        ntt::transform(&mut a, true);
        Ok(BitString::from_bits(
            (0..self.n).map(|i| a[(n_raw + self.n - 2 - i) % size] & 1 == 1),
        ))
    }
}

/// Number-theoretic transform over the prime `2^64 - 2^32 + 1`.
pub(crate) mod ntt {
    pub const P: u64 = 0xFFFF_FFFF_0000_0001;
    const GENERATOR: u64 = 7;

    #[inline]
    pub fn mul(a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % P as u128) as u64
    }

    #[inline]
    fn add(a: u64, b: u64) -> u64 {
        let (s, over) = a.overflowing_add(b);
        if over || s >= P {
            s.wrapping_sub(P)
        } else {
            s
        }
    }

    #[inline]
    fn sub(a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a.wrapping_sub(b).wrapping_add(P)
        }
    }

    pub fn pow(mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = mul(acc, base);
            }
            base = mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// In-place iterative radix-2 transform; `a.len()` must be a power of two
    /// not exceeding `2^32`.
    pub fn transform(a: &mut [u64], inverse: bool) {
        let n = a.len();
        assert!(n.is_power_of_two() && n as u64 <= 1u64 << 32);
        let mut j = 0;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                a.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let mut w_len = pow(GENERATOR, (P - 1) / len as u64);
            if inverse {
                w_len = pow(w_len, P - 2);
            }
            for chunk in a.chunks_mut(len) {
                let mut w = 1u64;
                let (lo, hi) = chunk.split_at_mut(len / 2);
                for (u, v) in lo.iter_mut().zip(hi.iter_mut()) {
                    let t = mul(*v, w);
                    *v = sub(*u, t);
                    *u = add(*u, t);
                    w = mul(w, w_len);
                }
            }
            len <<= 1;
        }
        if inverse {
            let inv_n = pow(n as u64, P - 2);
            for x in a.iter_mut() {
                *x = mul(*x, inv_n);
            }
        }
    }
}

/// Collision frequency of the Toeplitz family on random distinct input pairs.
pub fn universality_probe<R: RngCore + ?Sized>(
    rng: &mut R,
    n_raw: usize,
    n: usize,
    trials: usize,
) -> Result<f64> {
    if n_raw > 24 {
        return Err(Error::InvalidParameter(format!(
            "universality probe limited to N_raw <= 24, got {n_raw}"
        )));
    }
    let mut collisions = 0usize;
    for _ in 0..trials {
        let x = BitString::random(rng, n_raw);
        let mut y = BitString::random(rng, n_raw);
        while y == x {
            y = BitString::random(rng, n_raw);
        }
        let seed = ToeplitzSeed::random(rng, n_raw, n)?;
        if seed.hash_naive(&x)? == seed.hash_naive(&y)? {
            collisions += 1;
        }
    }
    Ok(collisions as f64 / trials as f64)
}

/// Largest output length whose leftover-hash term
/// `1/2 * 2^{(n - N_raw * bracket) / 2}` stays within `budget`, floored at 0
/// and capped at `N_raw`. The multi-photon flag selects the corrected bracket.
pub fn output_length(params: &ProtocolParams, multi_photon: bool, budget: f64) -> Result<u64> {
    if !(budget > 0.0) {
        return Err(Error::InvalidParameter(format!("budget {budget} must be positive")));
    }
    let bracket = match params.rate_bracket(multi_photon) {
        Ok(b) => b,
        Err(Error::RateBracketUndefined(_)) => return Ok(0),
        Err(e) => return Err(e),
    };
    let n_raw = params.n_raw() as f64;
    let limit = n_raw * bracket + 2.0 * (2.0 * budget).log2();
    if !(limit >= 0.0) {
        return Ok(0);
    }
    Ok((limit.floor() as u64).min(params.n_raw()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcore::SessionRng;
    use proptest::prelude::*;

    #[test]
    fn zero_diagonal_or_input_gives_zero() {
        let mut rng = SessionRng::from_u64(1);
        let zero = ToeplitzSeed::new(40, 8, BitString::zeros(47)).unwrap();
        let x = BitString::random(&mut rng, 40);
        assert!(zero.hash(&x).unwrap().is_zero());
        assert!(zero.hash_fft(&x).unwrap().is_zero());
        let seed = ToeplitzSeed::random(&mut rng, 40, 8).unwrap();
        assert!(seed.hash(&BitString::zeros(40)).unwrap().is_zero());
        assert!(seed.hash_fft(&BitString::zeros(40)).unwrap().is_zero());
    }

    #[test]
    fn naive_matches_matrix_definition() {
        let mut rng = SessionRng::from_u64(2);
        let seed = ToeplitzSeed::random(&mut rng, 13, 5).unwrap();
        let x = BitString::random(&mut rng, 13);
        let y = seed.hash_naive(&x).unwrap();
        for i in 0..5 {
            let mut acc = false;
            for j in 0..13 {
                acc ^= seed.entry(i, j) & x.bit(j);
            }
            assert_eq!(y.bit(i), acc);
        }
        // first row / first column layout
        for j in 0..13 {
            assert_eq!(seed.entry(0, j), seed.diag().bit(4 + j));
        }
        for i in 0..5 {
            assert_eq!(seed.entry(i, 0), seed.diag().bit(4 - i));
        }
    }

    #[test]
    fn fft_equals_naive_exhaustively_small() {
        // N_raw = 6, n = 3: all 2^8 diagonals times all 2^6 inputs
        for d in 0u64..(1 << 8) {
            let seed = ToeplitzSeed::new(6, 3, BitString::from_u64(d, 8)).unwrap();
            for x in 0u64..(1 << 6) {
                let x = BitString::from_u64(x, 6);
                assert_eq!(seed.hash_naive(&x).unwrap(), seed.hash_fft(&x).unwrap());
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let mut rng = SessionRng::from_u64(3);
        assert!(ToeplitzSeed::new(10, 4, BitString::zeros(12)).is_err());
        let seed = ToeplitzSeed::random(&mut rng, 10, 4).unwrap();
        assert!(seed.hash(&BitString::zeros(9)).is_err());
        assert!(seed.hash_fft(&BitString::zeros(11)).is_err());
    }

    #[test]
    fn descriptor_wire_roundtrip() {
        let mut rng = SessionRng::from_u64(4);
        let seed = ToeplitzSeed::random(&mut rng, 100, 16).unwrap();
        let w = seed.to_wire();
        assert_eq!(&w[..8], &[0, 0, 0, 100, 0, 0, 0, 16]);
        assert_eq!(w.len(), 8 + 115usize.div_ceil(8));
        assert_eq!(ToeplitzSeed::from_wire(&w).unwrap(), seed);
    }

    #[test]
    fn ntt_roundtrip() {
        let mut a: Vec<u64> = (0..64).map(|i| i * i % 17).collect();
        let orig = a.clone();
        ntt::transform(&mut a, false);
        ntt::transform(&mut a, true);
        assert_eq!(a, orig);
    }

    #[test]
    fn universality_single_bit() {
        let mut rng = SessionRng::from_u64(5);
        let f = universality_probe(&mut rng, 12, 1, 100_000).unwrap();
        assert!((f - 0.5).abs() < 0.01, "{f}");
    }

    #[test]
    fn universality_four_bits() {
        let mut rng = SessionRng::from_u64(6);
        let trials = 100_000;
        let f = universality_probe(&mut rng, 20, 4, trials).unwrap();
        let p = 1.0 / 16.0;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!(f <= p + 3.0 * sigma, "{f}");
        assert!(universality_probe(&mut rng, 25, 4, 1).is_err());
    }

    #[test]
    fn output_length_examples() {
        let mut p = ProtocolParams::table1();
        let n = output_length(&p, true, 2f64.powi(-64)).unwrap();
        assert!(n >= 128, "{n}");
        // bracket 3.87e-3 over 1.89e6 raw bits, minus 126 bits of budget
        assert!((7000..7400).contains(&n), "{n}");

        p.p_max = 0.2;
        assert_eq!(output_length(&p, true, 1e-9).unwrap(), 0);
        p.p_max = 0.05;
        assert!(p.rate_bracket(true).unwrap() <= 0.0);
        assert_eq!(output_length(&p, true, 1e-9).unwrap(), 0);
    }

    #[test]
    fn bracket_in_the_tolerance_free_limit() {
        let p = ProtocolParams {
            n0: 1_000_000,
            alpha: 1e-9,
            delta1: 0.0,
            delta2: 0.0,
            p_max: 0.01,
            n: 1,
            f: 1.0,
            p_multi: 0.0,
            eps_ir: 0.0,
            eps_bind: 0.0,
        };
        let b = p.rate_bracket(false).unwrap();
        assert!((b - 0.278).abs() < 1e-3, "{b}");
    }

    #[test]
    fn output_length_monotone_in_every_penalty() {
        let base = ProtocolParams::table1();
        let budget = 1e-12;
        type Tweak = fn(&mut ProtocolParams, f64);
        let knobs: [(Tweak, f64, f64); 5] = [
            (|p, v| p.p_max = v, 0.0, 0.03),
            (|p, v| p.delta1 = v, 0.0, 0.03),
            (|p, v| p.delta2 = v, 0.0, 0.05),
            (|p, v| p.f = v, 1.0, 2.0),
            (|p, v| p.p_multi = v, 0.0, 0.02),
        ];
        for (set, lo, hi) in knobs {
            let mut prev = u64::MAX;
            for k in 0..=40 {
                let mut p = base;
                set(&mut p, lo + (hi - lo) * k as f64 / 40.0);
                let n = output_length(&p, true, budget).unwrap();
                assert!(n <= prev);
                prev = n;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn hash_is_linear(seed in any::<u64>(), n_raw in 1usize..300, n in 1usize..40) {
            let mut rng = SessionRng::from_u64(seed);
            let t = ToeplitzSeed::random(&mut rng, n_raw, n).unwrap();
            let x = BitString::random(&mut rng, n_raw);
            let y = BitString::random(&mut rng, n_raw);
            let lhs = t.hash(&x.xor(&y).unwrap()).unwrap();
            let rhs = t.hash(&x).unwrap().xor(&t.hash(&y).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn fft_matches_naive(seed in any::<u64>(), n_raw in 1usize..2000, n in 1usize..70) {
            let mut rng = SessionRng::from_u64(seed);
            let t = ToeplitzSeed::random(&mut rng, n_raw, n).unwrap();
            let x = BitString::random(&mut rng, n_raw);
            prop_assert_eq!(t.hash_naive(&x).unwrap(), t.hash_fft(&x).unwrap());
        }
    }
}
