//! One-way functions behind the commitment and reconciliation tags.
//!
//! Every call is domain separated by a one-byte label and expanded to an
//! arbitrary output length, so one primitive serves both the `3k + n` bit
//! commitment mask and the `tau` bit verification tag.

use crate::bitcore::BitString;
use crate::error::{Error, Result};

/// Domain label for the commitment mask `H(s)`.
pub const DOMAIN_COMMIT: u8 = 0x01;
/// Domain label for reconciliation tags.
pub const DOMAIN_IR_TAG: u8 = 0x02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum HashAlgorithm {
    /// BLAKE3 in extendable-output mode.
    Blake3,
    /// SplitMix64 counter-mode expander. Not one-way in any useful sense;
    /// it is only fast enough to brute force every seed at `k = 16`.
    Toy,
}

impl HashAlgorithm {
    /// Identifier carried in the session handshake.
    pub fn id(self) -> u8 {
        match self {
            HashAlgorithm::Blake3 => 0x01,
            HashAlgorithm::Toy => 0x7F,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0x01 => Ok(HashAlgorithm::Blake3),
            0x7F => Ok(HashAlgorithm::Toy),
            other => Err(Error::Malformed(format!("unknown hash id {other:#04x}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HashAlgorithm::Blake3 => "blake3",
            HashAlgorithm::Toy => "toy",
        }
    }

    /// `out_bits` pseudorandom bits derived from `(domain, input)`.
    pub fn expand(self, domain: u8, input: &[u8], out_bits: usize) -> BitString {
        let mut out = vec![0u8; out_bits.div_ceil(8)];
        match self {
            HashAlgorithm::Blake3 => {
                let mut h = blake3::Hasher::new();
                h.update(&[domain]);
                h.update(input);
                h.finalize_xof().fill(&mut out);
            }
            HashAlgorithm::Toy => {
                let mut state = splitmix64(0x5152_4f54 ^ (domain as u64) << 56);
                for chunk in input.chunks(8) {
                    let mut word = [0u8; 8];
                    word[..chunk.len()].copy_from_slice(chunk);
                    state = splitmix64(state ^ u64::from_be_bytes(word));
                }
                state = splitmix64(state ^ input.len() as u64);
                for (i, block) in out.chunks_mut(8).enumerate() {
                    let word = splitmix64(state.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN)));
                    block.copy_from_slice(&word.to_be_bytes()[..block.len()]);
                }
            }
        }
        BitString::from_bytes_truncated(out, out_bits)
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_roundtrip() {
        for h in [HashAlgorithm::Blake3, HashAlgorithm::Toy] {
            assert_eq!(HashAlgorithm::from_id(h.id()).unwrap(), h);
        }
        assert!(HashAlgorithm::from_id(0).is_err());
    }

    #[test]
    fn expansion_is_prefix_consistent_and_domain_separated() {
        for h in [HashAlgorithm::Blake3, HashAlgorithm::Toy] {
            let long = h.expand(DOMAIN_COMMIT, b"seed", 200);
            let short = h.expand(DOMAIN_COMMIT, b"seed", 70);
            assert_eq!(long.split_at(70).unwrap().0, short);
            assert_ne!(h.expand(DOMAIN_IR_TAG, b"seed", 70), short);
        }
    }

    #[test]
    fn toy_is_injective_on_16_bit_seeds() {
        let mut seen = std::collections::HashSet::new();
        for s in 0..=u16::MAX {
            let out = HashAlgorithm::Toy.expand(DOMAIN_COMMIT, &s.to_be_bytes(), 50);
            assert!(seen.insert(out));
        }
    }
}
