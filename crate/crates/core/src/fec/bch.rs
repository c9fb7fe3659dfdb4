//! Extended BCH(32,11): the (31,11) t = 5 BCH code plus an overall parity
//! bit, decoded by exhaustive soft-decision correlation.
//!
//! The code contains the first-order Reed–Muller code RM(1,5), so it splits
//! into 32 cosets of it. Correlating against one coset is a 32-point
//! Walsh–Hadamard transform, which makes the exhaustive search about ten
//! times cheaper than correlating with each of the 2048 codewords.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};

use super::walsh::fwht;

pub const BCH_N: usize = 32;
pub const BCH_K: usize = 11;

/// Generator of BCH(31,11), octal 5423325, degree 20 (MSB = x^20).
pub const BCH_GENERATOR: u32 = 0o5423325;

const PARITY_BITS: usize = 20;

#[derive(Clone, Debug)]
pub struct BchCode {
    /// All 2^11 codewords as ±1 (bit 1 → +1), row = message index.
    antipodal: Array2<f64>,
    words: Vec<u32>,
    cosets: Option<CosetTables>,
}

/// RM(1,5) coset structure in the codeword coordinates.
#[derive(Clone, Debug)]
struct CosetTables {
    /// Column pattern of each coordinate (first bit = index 0), a bijection
    /// onto 0..32.
    pattern: [usize; BCH_N],
    /// Linear function `x ↦ <w, x>` as a codeword, for each `w`.
    linear: [u32; BCH_N],
    leaders: Vec<u32>,
}

fn bit(word: u32, j: usize) -> bool {
    (word >> (BCH_N - 1 - j)) & 1 == 1
}

/// Cyclic shift of the 31 base bits, keeping the parity bit in place.
fn rotate31(word: u32) -> u32 {
    let base = word >> 1;
    let r = ((base << 1) | (base >> 30)) & 0x7fff_ffff;
    (r << 1) | (word & 1)
}

impl CosetTables {
    fn find(words: &[u32]) -> Option<Self> {
        let set: HashSet<u32> = words.iter().copied().collect();
        if !set.contains(&u32::MAX) {
            return None;
        }
        // A weight-16 word whose first five shifts give every column
        // pattern exactly once spans RM(1,5) without the constant.
        for &w in words.iter().filter(|w| w.count_ones() == 16 && *w & 1 == 0) {
            let mut basis = [w; 5];
            for i in 1..5 {
                basis[i] = rotate31(basis[i - 1]);
            }
            if !basis.iter().all(|b| set.contains(b)) {
                continue;
            }
            let mut pattern = [0usize; BCH_N];
            let mut seen = [false; BCH_N];
            let mut ok = true;
            for (j, p) in pattern.iter_mut().enumerate() {
                *p = (0..5).filter(|&i| bit(basis[i], j)).map(|i| 1 << i).sum();
                ok &= !std::mem::replace(&mut seen[*p], true);
            }
            if !ok {
                continue;
            }
            let mut linear = [0u32; BCH_N];
            for (wv, l) in linear.iter_mut().enumerate() {
                *l = (0..BCH_N)
                    .filter(|&j| (wv & pattern[j]).count_ones() % 2 == 1)
                    .fold(0, |acc, j| acc | 1 << (BCH_N - 1 - j));
            }
            let mut covered = HashSet::new();
            let mut leaders = Vec::new();
            for &c in words {
                if covered.contains(&c) {
                    continue;
                }
                leaders.push(c);
                for &l in &linear {
                    covered.insert(c ^ l);
                    covered.insert(c ^ l ^ u32::MAX);
                }
            }
            return Some(Self {
                pattern,
                linear,
                leaders,
            });
        }
        None
    }

    /// Most correlated codeword.
    fn decode(&self, soft: &[f64]) -> u32 {
        let mut best = (f64::NEG_INFINITY, 0u32);
        let mut a = [0.0; BCH_N];
        for &c in &self.leaders {
            for (j, &v) in soft.iter().enumerate() {
                a[self.pattern[j]] = if bit(c, j) { v } else { -v };
            }
            fwht(&mut a);
            for (w, &f) in a.iter().enumerate() {
                if f > best.0 {
                    best = (f, c ^ self.linear[w]);
                }
                if -f > best.0 {
                    best = (-f, c ^ self.linear[w] ^ u32::MAX);
                }
            }
        }
        best.1
    }
}

impl Default for BchCode {
    fn default() -> Self {
        Self::new()
    }
}

/// Systematic (31,11) encoding of a message given as an integer, message
/// bits first. Returns the 31 code bits in the low bits, first bit highest.
fn encode31(msg: u32) -> u32 {
    let mut rem = msg << PARITY_BITS;
    for i in (PARITY_BITS..31).rev() {
        if rem & (1 << i) != 0 {
            rem ^= BCH_GENERATOR << (i - PARITY_BITS);
        }
    }
    (msg << PARITY_BITS) | rem
}

fn bits_to_u32(bits: &[u8]) -> u32 {
    bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as u32)
}

impl BchCode {
    pub fn new() -> Self {
        let words: Vec<u32> = (0..1u32 << BCH_K)
            .map(|m| {
                let c = encode31(m);
                (c << 1) | (c.count_ones() & 1)
            })
            .collect();
        let antipodal = Array2::from_shape_fn((words.len(), BCH_N), |(i, j)| {
            if (words[i] >> (BCH_N - 1 - j)) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        });
        let cosets = CosetTables::find(&words);
        Self {
            antipodal,
            words,
            cosets,
        }
    }

    /// Whether the fast coset decoder is in use.
    pub fn has_coset_decoder(&self) -> bool {
        self.cosets.is_some()
    }

    /// Message index of the most correlated codeword.
    pub fn decode_soft_index(&self, soft: &[f64]) -> usize {
        assert_eq!(soft.len(), BCH_N, "BCH soft input length");
        match &self.cosets {
            // Systematic: the message is the top 11 bits.
            Some(t) => (t.decode(soft) >> (BCH_N - BCH_K)) as usize,
            None => self.decode_exhaustive(soft),
        }
    }

    /// Reference decoder: correlation with every codeword, ties to the
    /// lowest message.
    pub fn decode_exhaustive(&self, soft: &[f64]) -> usize {
        assert_eq!(soft.len(), BCH_N, "BCH soft input length");
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, row) in self.antipodal.rows().into_iter().enumerate() {
            let v: f64 = row.iter().zip(soft).map(|(a, b)| a * b).sum();
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        best
    }

    /// Codeword of message index `m` as a 32-bit integer, first bit highest.
    pub fn codeword(&self, m: usize) -> u32 {
        self.words[m]
    }

    pub fn encode(&self, msg: &[u8]) -> Vec<u8> {
        assert_eq!(msg.len(), BCH_K, "BCH message length");
        let w = self.words[bits_to_u32(msg) as usize];
        (0..BCH_N).rev().map(|i| ((w >> i) & 1) as u8).collect()
    }

    /// Maximum-likelihood decision over all codewords. Soft values are
    /// antipodal: positive favours bit 1.
    pub fn decode_soft(&self, soft: &[f64]) -> Vec<u8> {
        message_bits(self.decode_soft_index(soft))
    }

    /// Batch soft-decision decoding, one 32-value word per row. Returns the
    /// decoded message indices.
    pub fn decode_soft_batch(&self, soft: ArrayView2<f64>) -> Vec<usize> {
        assert_eq!(soft.ncols(), BCH_N, "BCH soft input length");
        if self.cosets.is_none() {
            let corr = soft.dot(&self.antipodal.t());
            return corr
                .rows()
                .into_iter()
                .map(|r| crate::codec::argmax(r.as_slice().expect("row")))
                .collect();
        }
        soft.rows()
            .into_iter()
            .map(|r| match r.as_slice() {
                Some(s) => self.decode_soft_index(s),
                None => self.decode_soft_index(&r.to_vec()),
            })
            .collect()
    }

    /// Hard-decision decoding by nearest codeword in Hamming distance.
    pub fn decode_hard(&self, bits: &[u8]) -> Vec<u8> {
        let r = bits_to_u32(bits);
        let best = (0..self.words.len())
            .min_by_key(|&i| ((self.words[i] ^ r).count_ones(), i))
            .expect("non-empty code");
        message_bits(best)
    }

    /// Minimum distance of the base (31,11) code, by exhaustive pairwise check.
    pub fn base_min_distance(&self) -> u32 {
        let base: Vec<u32> = self.words.iter().map(|w| w >> 1).collect();
        let mut d = u32::MAX;
        for i in 0..base.len() {
            for j in i + 1..base.len() {
                d = d.min((base[i] ^ base[j]).count_ones());
            }
        }
        d
    }
}

pub fn message_bits(index: usize) -> Vec<u8> {
    (0..BCH_K).rev().map(|i| ((index >> i) & 1) as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn coset_decoder_matches_exhaustive_search() {
        let code = BchCode::new();
        assert!(code.has_coset_decoder());
        let t = code.cosets.as_ref().unwrap();
        assert_eq!(t.leaders.len(), 32);
        let mut rng = crate::rng::rng_from(3, &[]);
        for _ in 0..2000 {
            let m = rng.random_range(0..2048usize);
            let soft: Vec<f64> = code
                .encode(&message_bits(m))
                .iter()
                .map(|&c| if c == 1 { 1.0 } else { -1.0 } + rng.random_range(-1.6..1.6))
                .collect();
            assert_eq!(code.decode_soft_index(&soft), code.decode_exhaustive(&soft));
        }
    }
}
