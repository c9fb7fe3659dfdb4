//! Conventional DSSS reference: LFSR m-sequences, antipodal spreading,
//! correlation despreading and unique-word frame search.

use crate::error::{Error, Result};

pub const MAX_LFSR_DEGREE: u32 = 24;

/// Feedback taps of a primitive polynomial for each degree 3..=24.
pub fn default_taps(degree: u32) -> Option<&'static [u32]> {
    const TABLE: [&[u32]; 22] = [
        &[3, 2],
        &[4, 3],
        &[5, 3],
        &[6, 5],
        &[7, 6],
        &[8, 6, 5, 4],
        &[9, 5],
        &[10, 7],
        &[11, 9],
        &[12, 6, 4, 1],
        &[13, 4, 3, 1],
        &[14, 5, 3, 1],
        &[15, 14],
        &[16, 15, 13, 4],
        &[17, 14],
        &[18, 11],
        &[19, 6, 2, 1],
        &[20, 17],
        &[21, 19],
        &[22, 21],
        &[23, 18],
        &[24, 23, 22, 17],
    ];
    (3..=24).contains(&degree).then(|| TABLE[degree as usize - 3])
}

/// Fibonacci LFSR: stage 1 takes the XOR of the tapped stages, the output
/// is read from stage `degree`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LfsrSpec {
    pub degree: u32,
    pub taps: Vec<u32>,
    pub seed: u32,
}

impl LfsrSpec {
    pub fn new(degree: u32, taps: &[u32], seed: u32) -> Result<Self> {
        if !(2..=MAX_LFSR_DEGREE).contains(&degree) {
            return Err(Error::InvalidLfsr(format!("degree {degree} outside 2..=24")));
        }
        if taps.is_empty() || taps.iter().any(|&t| t == 0 || t > degree) || !taps.contains(&degree) {
            return Err(Error::InvalidLfsr(format!(
                "taps {taps:?} must lie in 1..={degree} and include {degree}"
            )));
        }
        let mask = (1u32 << degree) - 1;
        if seed & mask == 0 || seed & !mask != 0 {
            return Err(Error::InvalidLfsr(format!("seed {seed:#x} must be a nonzero {degree}-bit state")));
        }
        Ok(Self {
            degree,
            taps: taps.to_vec(),
            seed,
        })
    }

    /// Tabulated primitive taps, seed 1.
    pub fn standard(degree: u32) -> Result<Self> {
        let taps = default_taps(degree)
            .ok_or_else(|| Error::InvalidLfsr(format!("no tabulated polynomial for degree {degree}")))?;
        Self::new(degree, taps, 1)
    }

    pub fn period(&self) -> usize {
        (1usize << self.degree) - 1
    }
}

/// One period of an m-sequence as ±1 chips (bit 1 → +1).
#[derive(Clone, Debug, PartialEq)]
pub struct PnSequence {
    pub chips: Vec<f64>,
}

impl PnSequence {
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// Normalized periodic autocorrelation at `lag`.
    pub fn periodic_acf(&self, lag: usize) -> f64 {
        let n = self.chips.len();
        let s: f64 = (0..n).map(|i| self.chips[i] * self.chips[(i + lag) % n]).sum();
        s / n as f64
    }
}

/// Generates one period; fails unless the period is exactly 2^m − 1.
pub fn msequence(spec: &LfsrSpec) -> Result<PnSequence> {
    let m = spec.degree;
    let tap_mask: u32 = spec.taps.iter().map(|&t| 1u32 << (t - 1)).fold(0, |a, b| a | b);
    let full = spec.period();
    let mut state = spec.seed;
    let mut chips = Vec::with_capacity(full);
    loop {
        let out = (state >> (m - 1)) & 1;
        chips.push(if out == 1 { 1.0 } else { -1.0 });
        let fb = (state & tap_mask).count_ones() & 1;
        state = ((state << 1) | fb) & ((1u32 << m) - 1);
        if state == spec.seed || chips.len() > full {
            break;
        }
    }
    if chips.len() != full {
        return Err(Error::InvalidTaps {
            degree: m,
            taps: spec.taps.clone(),
            period: chips.len(),
        });
    }
    Ok(PnSequence { chips })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modulation {
    Bpsk,
    /// Bit pairs map to (I, Q); each spread symbol occupies 2·N chips,
    /// interleaved I, Q, I, Q.
    Qpsk,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sequences {
    /// One sequence, bit 1 → +PN and bit 0 → −PN.
    Shared(PnSequence),
    /// A dedicated sequence for each bit value.
    PerBit { one: PnSequence, zero: PnSequence },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DsssConfig {
    /// Chips per bit (per I or Q symbol for QPSK).
    pub spreading: usize,
    pub modulation: Modulation,
    pub sequences: Sequences,
    pub unique_word: Vec<u8>,
}

impl DsssConfig {
    pub fn bpsk(spreading: usize, pn: PnSequence) -> Result<Self> {
        let cfg = Self {
            spreading,
            modulation: Modulation::Bpsk,
            sequences: Sequences::Shared(pn),
            unique_word: Vec::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let shortest = match &self.sequences {
            Sequences::Shared(p) => p.len(),
            Sequences::PerBit { one, zero } => one.len().min(zero.len()),
        };
        if self.spreading == 0 || self.spreading > shortest {
            return Err(Error::Config(format!(
                "spreading factor {} must be in 1..={shortest}",
                self.spreading
            )));
        }
        Ok(())
    }

    fn segment(&self, bit: u8) -> impl Iterator<Item = f64> + '_ {
        let n = self.spreading;
        let (seq, sign) = match &self.sequences {
            Sequences::Shared(p) => (p, if bit & 1 == 1 { 1.0 } else { -1.0 }),
            Sequences::PerBit { one, zero } => (if bit & 1 == 1 { one } else { zero }, 1.0),
        };
        seq.chips[..n].iter().map(move |c| sign * c)
    }
}

/// Spread chip stream, unit power.
pub fn spread(bits: &[u8], config: &DsssConfig) -> Result<Vec<f64>> {
    if bits.is_empty() {
        return Err(Error::EmptyInput("bit stream"));
    }
    config.validate()?;
    let n = config.spreading;
    match config.modulation {
        Modulation::Bpsk => Ok(bits.iter().flat_map(|&b| config.segment(b)).collect()),
        Modulation::Qpsk => {
            let mut out = Vec::with_capacity(bits.len().div_ceil(2) * 2 * n);
            for pair in bits.chunks(2) {
                let i_bit = pair[0];
                let q_bit = pair.get(1).copied().unwrap_or(0);
                for (a, b) in config.segment(i_bit).zip(config.segment(q_bit)) {
                    out.push(a);
                    out.push(b);
                }
            }
            Ok(out)
        }
    }
}

/// Correlator output per bit: positive for a one, negative for a zero.
pub fn despread(received: &[f64], config: &DsssConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let n = config.spreading;
    let per_symbol = match config.modulation {
        Modulation::Bpsk => n,
        Modulation::Qpsk => 2 * n,
    };
    if received.len() < per_symbol {
        return Err(Error::TooFewChips {
            needed: per_symbol,
            got: received.len(),
        });
    }
    let corr = |chips: &mut dyn Iterator<Item = f64>| -> f64 {
        match &config.sequences {
            Sequences::Shared(p) => chips.zip(&p.chips[..n]).map(|(r, c)| r * c).sum(),
            Sequences::PerBit { one, zero } => {
                let r: Vec<f64> = chips.collect();
                let a: f64 = r.iter().zip(&one.chips[..n]).map(|(x, c)| x * c).sum();
                let b: f64 = r.iter().zip(&zero.chips[..n]).map(|(x, c)| x * c).sum();
                a - b
            }
        }
    };
    let mut out = Vec::new();
    for sym in received.chunks_exact(per_symbol) {
        match config.modulation {
            Modulation::Bpsk => out.push(corr(&mut sym.iter().copied())),
            Modulation::Qpsk => {
                out.push(corr(&mut sym.iter().step_by(2).copied()));
                out.push(corr(&mut sym.iter().skip(1).step_by(2).copied()));
            }
        }
    }
    Ok(out)
}

/// First offset where `unique_word` matches `stream` with at most
/// `threshold` bit differences.
pub fn unique_word_sync(stream: &[u8], unique_word: &[u8], threshold: usize) -> Option<usize> {
    if unique_word.is_empty() || stream.len() < unique_word.len() {
        return None;
    }
    (0..=stream.len() - unique_word.len()).find(|&off| {
        stream[off..off + unique_word.len()]
            .iter()
            .zip(unique_word)
            .filter(|(a, b)| (*a ^ *b) & 1 == 1)
            .count()
            <= threshold
    })
}

/// A stream of `periods` back-to-back copies of `pn`.
pub fn repeated_pn(pn: &PnSequence, periods: usize) -> Vec<f64> {
    pn.chips.iter().copied().cycle().take(pn.len() * periods).collect()
}
