//! Seeded Monte-Carlo BER simulation.
//!
//! A point is simulated in waves of [`BATCHES_PER_WAVE`] batches. Batch `b`
//! of grid point `p` draws from `rng_from(seed, [p, b])`, and the stopping
//! rule is checked only between waves, so the result is the same whether
//! a wave runs on one thread or many.

use std::io::Write;
use std::ops::AddAssign;

use ndarray::{Array2, ArrayView2};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use statrs::function::erf::{erfc, erfc_inv};

use crate::channel::{
    add_noise_in_place, ebn0_from_snr, estimate_noise_variance, noise_variance, snr_from_ebn0,
};
use crate::codec::{decode_batch, encode_batch, random_bits, ArchSpec, LlrCalibration};
use crate::dsss::{despread, spread, DsssConfig, Modulation};
use crate::error::{Error, Result};
use crate::fec::{
    deinterleave, fwht, interleave, BchCode, LdpcCode, BCH_K, BCH_N, WH_K, WH_N,
};
use crate::nn::{ArchKind, NetworkModel};
use crate::rng::{rng_from, SimRng};

pub const BATCHES_PER_WAVE: usize = 8;

/// Fewest errors behind a point reported as converged.
pub const MIN_CONVERGED_ERRORS: u64 = 50;

/// Counts accumulated over simulated batches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub bits: u64,
    pub errors: u64,
    pub frames: u64,
    pub frame_errors: u64,
}

impl AddAssign for Tally {
    fn add_assign(&mut self, o: Self) {
        self.bits += o.bits;
        self.errors += o.errors;
        self.frames += o.frames;
        self.frame_errors += o.frame_errors;
    }
}

impl Tally {
    /// Compares decoded against sent bits, one frame per row.
    pub fn compare(sent: ArrayView2<u8>, decoded: ArrayView2<u8>) -> Self {
        let mut t = Tally::default();
        for (s, d) in sent.rows().into_iter().zip(decoded.rows()) {
            let e = s.iter().zip(d.iter()).filter(|(a, b)| a != b).count() as u64;
            t.bits += s.len() as u64;
            t.errors += e;
            t.frames += 1;
            t.frame_errors += (e > 0) as u64;
        }
        t
    }
}

/// A transmit/channel/receive chain driven at a given per-chip noise
/// variance.
pub trait Link: Sync {
    fn name(&self) -> String;
    /// Chips per channel-input bit.
    fn spreading(&self) -> f64;
    /// Information bits per channel-input bit.
    fn rate(&self) -> f64;
    fn run_batch(&self, sigma2: f64, rng: &mut SimRng) -> Result<Tally>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StopRule {
    /// A point stops once this many bit errors are counted...
    pub min_errors: u64,
    /// ...or this many bits are simulated.
    pub max_bits: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            min_errors: 100,
            max_bits: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BerRecord {
    pub link: String,
    pub snr_db: f64,
    pub ebn0_db: f64,
    pub bits_simulated: u64,
    pub bit_errors: u64,
    pub frames: u64,
    pub frame_errors: u64,
    pub ber: f64,
    pub fer: f64,
    /// The error target (at least [`MIN_CONVERGED_ERRORS`]) was reached
    /// before the bit budget ran out.
    pub converged: bool,
}

/// How the batches of a wave are run. Both give identical results.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon work-stealing; the same as `Sequential` when the crate is
    /// built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

fn run_wave<L: Link + ?Sized>(
    link: &L,
    sigma2: f64,
    seed: u64,
    point: u64,
    wave: u64,
    exec: Execution,
) -> Result<Tally> {
    let batch = |i: u64| {
        let mut rng = rng_from(seed, &[point, wave * BATCHES_PER_WAVE as u64 + i]);
        link.run_batch(sigma2, &mut rng)
    };
    let range = 0..BATCHES_PER_WAVE as u64;
    let tallies: Vec<Result<Tally>> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => range.into_par_iter().map(batch).collect(),
        _ => range.map(batch).collect(),
    };
    let mut total = Tally::default();
    for t in tallies {
        total += t?;
    }
    Ok(total)
}

/// Simulates one Eb/N0 point. `point` indexes the point within its sweep
/// and selects the RNG streams.
pub fn simulate_point<L: Link + ?Sized>(
    link: &L,
    ebn0_db: f64,
    rule: &StopRule,
    seed: u64,
    point: u64,
) -> Result<BerRecord> {
    simulate_point_with(link, ebn0_db, rule, seed, point, Execution::default())
}

pub fn simulate_point_with<L: Link + ?Sized>(
    link: &L,
    ebn0_db: f64,
    rule: &StopRule,
    seed: u64,
    point: u64,
    exec: Execution,
) -> Result<BerRecord> {
    let snr_db = snr_from_ebn0(ebn0_db, link.spreading(), link.rate());
    let sigma2 = noise_variance(snr_db);
    let mut total = Tally::default();
    let mut wave = 0;
    while total.errors < rule.min_errors && total.bits < rule.max_bits {
        let t = run_wave(link, sigma2, seed, point, wave, exec)?;
        if t.bits == 0 {
            return Err(Error::Config(format!("link {} simulated no bits", link.name())));
        }
        total += t;
        wave += 1;
    }
    Ok(BerRecord {
        link: link.name(),
        snr_db,
        ebn0_db,
        bits_simulated: total.bits,
        bit_errors: total.errors,
        frames: total.frames,
        frame_errors: total.frame_errors,
        ber: total.errors as f64 / total.bits.max(1) as f64,
        fer: total.frame_errors as f64 / total.frames.max(1) as f64,
        converged: total.errors >= rule.min_errors.max(MIN_CONVERGED_ERRORS),
    })
}

/// Simulates a strictly increasing Eb/N0 grid.
pub fn sweep<L: Link + ?Sized>(link: &L, ebn0_grid: &[f64], rule: &StopRule, seed: u64) -> Result<Vec<BerRecord>> {
    if ebn0_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("SNR grid must be strictly increasing".into()));
    }
    ebn0_grid
        .iter()
        .enumerate()
        .map(|(i, &e)| simulate_point(link, e, rule, seed, i as u64))
        .collect()
}

/// Eb/N0 at which the BER curve crosses `target`, by linear interpolation
/// of log10(BER) between the bracketing points.
pub fn ebn0_at_ber(records: &[BerRecord], target: f64) -> Option<f64> {
    records.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        if a.ber >= target && b.ber < target && a.ber > 0.0 {
            if b.ber == 0.0 {
                return Some(b.ebn0_db);
            }
            let (la, lb, lt) = (a.ber.log10(), b.ber.log10(), target.log10());
            Some(a.ebn0_db + (la - lt) / (la - lb) * (b.ebn0_db - a.ebn0_db))
        } else {
            None
        }
    })
}

/// Same crossing on the per-chip SNR axis.
pub fn snr_at_ber(records: &[BerRecord], target: f64, spreading: f64, rate: f64) -> Option<f64> {
    ebn0_at_ber(records, target).map(|e| snr_from_ebn0(e, spreading, rate))
}

/// Q(x) = ½·erfc(x/√2).
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Uncoded BPSK over AWGN: Q(√(2·Eb/N0)).
pub fn bpsk_ber(ebn0_db: f64) -> f64 {
    q_function((2.0 * 10f64.powf(ebn0_db / 10.0)).sqrt())
}

/// Eb/N0 in dB at which uncoded BPSK reaches `ber`.
pub fn bpsk_ebn0_for_ber(ber: f64) -> f64 {
    let x = std::f64::consts::SQRT_2 * erfc_inv(2.0 * ber);
    10.0 * (x * x / 2.0).log10()
}

/// Hex SHA-256 of a resolved configuration text.
pub fn config_hash(config_text: &str) -> String {
    Sha256::digest(config_text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub const BER_CSV_COLUMNS: &str =
    "link,snr_db,ebn0_db,bits_simulated,bit_errors,frames,frame_errors,ber,fer,converged";

/// Writes records as CSV behind a `#` line carrying the crate version and
/// the configuration hash.
pub fn write_ber_csv<W: Write>(records: &[BerRecord], config_text: &str, mut w: W) -> Result<()> {
    writeln!(
        w,
        "# mlss {} config_sha256={}",
        env!("CARGO_PKG_VERSION"),
        config_hash(config_text)
    )?;
    writeln!(w, "{BER_CSV_COLUMNS}")?;
    for r in records {
        writeln!(
            w,
            "{},{:.6},{:.6},{},{},{},{},{:.6e},{:.6e},{}",
            r.link,
            r.snr_db,
            r.ebn0_db,
            r.bits_simulated,
            r.bit_errors,
            r.frames,
            r.frame_errors,
            r.ber,
            r.fer,
            r.converged
        )?;
    }
    Ok(())
}

/// Eb/N0 consistency of a record with its link's spreading and rate.
pub fn record_is_consistent(r: &BerRecord, spreading: f64, rate: f64) -> bool {
    (ebn0_from_snr(r.snr_db, spreading, rate) - r.ebn0_db).abs() < 1e-9
}

fn noisy(mut chips: Array2<f64>, sigma2: f64, rng: &mut SimRng) -> Array2<f64> {
    add_noise_in_place(
        chips.as_slice_mut().expect("standard layout"),
        sigma2.sqrt(),
        rng,
    );
    chips
}

/// Conventional DSSS with correlation despreading.
#[derive(Clone, Debug)]
pub struct DsssLink {
    pub config: DsssConfig,
    pub bits_per_batch: usize,
}

impl Link for DsssLink {
    fn name(&self) -> String {
        format!("dsss-n{}", self.config.spreading)
    }

    fn spreading(&self) -> f64 {
        self.config.spreading as f64
    }

    fn rate(&self) -> f64 {
        1.0
    }

    fn run_batch(&self, sigma2: f64, rng: &mut SimRng) -> Result<Tally> {
        let bits = random_bits(rng, self.bits_per_batch, 1);
        let bits = bits.as_slice().expect("contiguous");
        let mut chips = spread(bits, &self.config)?;
        add_noise_in_place(&mut chips, sigma2.sqrt(), rng);
        let soft = despread(&chips, &self.config)?;
        let decided: Vec<u8> = soft.iter().take(bits.len()).map(|&v| (v > 0.0) as u8).collect();
        let n = bits.len();
        let sent = ArrayView2::from_shape((n, 1), bits).expect("shape");
        let dec = ArrayView2::from_shape((n, 1), &decided[..]).expect("shape");
        Ok(Tally::compare(sent, dec))
    }
}

impl DsssLink {
    pub fn new(config: DsssConfig, bits_per_batch: usize) -> Result<Self> {
        config.validate()?;
        if config.modulation == Modulation::Qpsk && !bits_per_batch.is_multiple_of(2) {
            return Err(Error::Config("QPSK batches need an even bit count".into()));
        }
        Ok(Self {
            config,
            bits_per_batch,
        })
    }
}

/// A trained network without outer coding. Each block is a frame.
#[derive(Clone, Debug)]
pub struct NetworkLink<'a> {
    pub model: &'a NetworkModel,
    arch: ArchSpec,
    pub blocks_per_batch: usize,
}

impl<'a> NetworkLink<'a> {
    pub fn new(model: &'a NetworkModel, blocks_per_batch: usize) -> Result<Self> {
        Ok(Self {
            arch: ArchSpec::of_model(model)?,
            model,
            blocks_per_batch,
        })
    }
}

impl Link for NetworkLink<'_> {
    fn name(&self) -> String {
        match self.arch.kind {
            ArchKind::OneHot => format!("mlss-onehot-k{}-n{}", self.arch.k, self.arch.hidden_dim),
            _ => format!("mlss-direct-k{}-n{}", self.arch.k, self.arch.hidden_dim),
        }
    }

    fn spreading(&self) -> f64 {
        self.arch.spreading_factor() as f64
    }

    fn rate(&self) -> f64 {
        1.0
    }

    fn run_batch(&self, sigma2: f64, rng: &mut SimRng) -> Result<Tally> {
        let bits = random_bits(rng, self.blocks_per_batch, self.arch.k);
        let chips = noisy(encode_batch(self.model, bits.view())?, sigma2, rng);
        let dec = decode_batch(self.model, chips.view())?;
        Ok(Tally::compare(bits.view(), dec.view()))
    }
}

/// The (256, 8) Walsh–Hadamard code with exhaustive soft decoding, the
/// maximum-likelihood reference for the k = 8, 256-chip one-hot network.
/// Draws bits and noise in the same order as [`NetworkLink`], so equal
/// seeds give paired noise realizations.
#[derive(Clone, Debug)]
pub struct WalshLink {
    pub blocks_per_batch: usize,
}

impl Link for WalshLink {
    fn name(&self) -> String {
        "walsh-hadamard-256-8".into()
    }

    fn spreading(&self) -> f64 {
        (WH_N / WH_K) as f64
    }

    fn rate(&self) -> f64 {
        1.0
    }

    fn run_batch(&self, sigma2: f64, rng: &mut SimRng) -> Result<Tally> {
        let bits = random_bits(rng, self.blocks_per_batch, WH_K);
        let chips = Array2::from_shape_fn((bits.nrows(), WH_N), |(r, j)| {
            let i = crate::codec::block_index(bits.row(r).as_slice().expect("row"));
            if (i & j).count_ones().is_multiple_of(2) {
                1.0
            } else {
                -1.0
            }
        });
        let mut chips = noisy(chips, sigma2, rng);
        let mut dec = Array2::zeros(bits.dim());
        for (mut row, mut out) in chips.rows_mut().into_iter().zip(dec.rows_mut()) {
            let r = row.as_slice_mut().expect("row");
            fwht(r);
            let idx = crate::codec::argmax(r);
            for (j, o) in out.iter_mut().enumerate() {
                *o = ((idx >> (WH_K - 1 - j)) & 1) as u8;
            }
        }
        Ok(Tally::compare(bits.view(), dec.view()))
    }
}

fn require_direct32(model: &NetworkModel) -> Result<ArchSpec> {
    let arch = ArchSpec::of_model(model)?;
    if arch.kind != ArchKind::Direct || arch.k != BCH_N {
        return Err(Error::Config(format!(
            "coded chains need a direct k = {BCH_N} model"
        )));
    }
    Ok(arch)
}

/// eBCH(32,11) per network block with exhaustive soft decoding of the
/// receiver pre-activations. Each block is a frame.
#[derive(Clone, Debug)]
pub struct BchLink<'a> {
    pub model: &'a NetworkModel,
    arch: ArchSpec,
    code: BchCode,
    pub blocks_per_batch: usize,
}

impl<'a> BchLink<'a> {
    pub fn new(model: &'a NetworkModel, blocks_per_batch: usize) -> Result<Self> {
        Ok(Self {
            arch: require_direct32(model)?,
            model,
            code: BchCode::new(),
            blocks_per_batch,
        })
    }
}

impl Link for BchLink<'_> {
    fn name(&self) -> String {
        "mlss-direct-ebch-32-11".into()
    }

    fn spreading(&self) -> f64 {
        self.arch.spreading_factor() as f64
    }

    fn rate(&self) -> f64 {
        BCH_K as f64 / BCH_N as f64
    }

    fn run_batch(&self, sigma2: f64, rng: &mut SimRng) -> Result<Tally> {
        let msgs = random_bits(rng, self.blocks_per_batch, BCH_K);
        let mut coded = Array2::zeros((msgs.nrows(), BCH_N));
        for (m, mut c) in msgs.rows().into_iter().zip(coded.rows_mut()) {
            let w = self.code.encode(m.as_slice().expect("row"));
            c.iter_mut().zip(w).for_each(|(o, b)| *o = b);
        }
        let chips = noisy(encode_batch(self.model, coded.view())?, sigma2, rng);
        let z = self.model.logits_batch(chips.view());
        let idx = self.code.decode_soft_batch(z.view());
        let dec = Array2::from_shape_fn(msgs.dim(), |(r, j)| ((idx[r] >> (BCH_K - 1 - j)) & 1) as u8);
        Ok(Tally::compare(msgs.view(), dec.view()))
    }
}

/// LDPC codeword, zero-padded to whole network blocks, row-in/column-out
/// interleaved across its blocks, with LLRs from a calibrated Gaussian model
/// re-targeted to the noise variance estimated from each received frame.
/// Each codeword is a frame.
#[derive(Clone, Debug)]
pub struct LdpcLink<'a> {
    pub model: &'a NetworkModel,
    arch: ArchSpec,
    code: LdpcCode,
    calibration: LlrCalibration,
    pub frames_per_batch: usize,
    pub interleave: bool,
}

impl<'a> LdpcLink<'a> {
    pub fn new(
        model: &'a NetworkModel,
        code: LdpcCode,
        calibration: LlrCalibration,
        frames_per_batch: usize,
    ) -> Result<Self> {
        Ok(Self {
            arch: require_direct32(model)?,
            model,
            code,
            calibration,
            frames_per_batch,
            interleave: true,
        })
    }

    /// Network blocks per codeword.
    pub fn blocks_per_frame(&self) -> usize {
        self.code.n().div_ceil(self.arch.k)
    }
}

impl Link for LdpcLink<'_> {
    fn name(&self) -> String {
        format!("mlss-direct-ldpc-{}-{}", self.code.n(), self.code.k())
    }

    fn spreading(&self) -> f64 {
        self.arch.spreading_factor() as f64
    }

    /// Padding bits cost energy, so they count against the rate.
    fn rate(&self) -> f64 {
        self.code.k() as f64 / (self.blocks_per_frame() * self.arch.k) as f64
    }

    fn run_batch(&self, sigma2: f64, rng: &mut SimRng) -> Result<Tally> {
        let (k, n) = (self.code.k(), self.code.n());
        let blocks = self.blocks_per_frame();
        let padded = blocks * self.arch.k;
        let msgs = random_bits(rng, self.frames_per_batch, k);
        let mut dec = Array2::zeros(msgs.dim());
        for (m, mut out) in msgs.rows().into_iter().zip(dec.rows_mut()) {
            let mut word = self.code.encode(m.as_slice().expect("row"))?;
            word.resize(padded, 0);
            if self.interleave {
                word = interleave(&word, blocks, self.arch.k)?;
            }
            let bits = Array2::from_shape_vec((blocks, self.arch.k), word).expect("shape");
            let chips = noisy(encode_batch(self.model, bits.view())?, sigma2, rng);
            let nv = estimate_noise_variance(chips.as_slice().expect("contiguous"), 1.0)?;
            let cal = self.calibration.at_noise_variance(nv);
            let mut llr = cal.llrs(self.model.logits_batch(chips.view()).view()).into_raw_vec_and_offset().0;
            if self.interleave {
                llr = deinterleave(&llr, blocks, self.arch.k)?;
            }
            llr.truncate(n);
            let d = self.code.decode(&llr)?;
            out.iter_mut().zip(d.message).for_each(|(o, b)| *o = b);
        }
        Ok(Tally::compare(msgs.view(), dec.view()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_inverse_round_trips() {
        for e in [0.0, 4.0, 6.8, 9.6] {
            let b = bpsk_ber(e);
            assert!((bpsk_ebn0_for_ber(b) - e).abs() < 1e-6);
        }
        assert!((bpsk_ebn0_for_ber(1e-4) - 8.3983).abs() < 1e-3);
    }

    #[test]
    fn crossing_interpolates_in_log_domain() {
        let rec = |e: f64, ber: f64| BerRecord {
            link: "x".into(),
            snr_db: e,
            ebn0_db: e,
            bits_simulated: 1,
            bit_errors: 0,
            frames: 1,
            frame_errors: 0,
            ber,
            fer: 0.0,
            converged: true,
        };
        let r = [rec(0.0, 1e-2), rec(1.0, 1e-4), rec(2.0, 1e-6)];
        assert!((ebn0_at_ber(&r, 1e-3).unwrap() - 0.5).abs() < 1e-12);
        assert!((ebn0_at_ber(&r, 1e-5).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(ebn0_at_ber(&r, 1e-1), None);
    }

    #[test]
    fn grid_must_increase() {
        let link = WalshLink { blocks_per_batch: 4 };
        assert!(sweep(&link, &[1.0, 1.0], &StopRule::default(), 1).is_err());
    }
}
