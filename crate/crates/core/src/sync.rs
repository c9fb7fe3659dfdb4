//! CRC-based joint chip acquisition and frame synchronization.
//!
//! A sync frame is `init_params ‖ payload ‖ CRC-16`, optionally protected
//! by eBCH(32,11), cut into network blocks and spread by the trained
//! encoder. The receiver slides over candidate chip offsets, decodes one
//! frame at each and accepts the first offset whose CRC passes on
//! `confirm_count` consecutive frames. No unique word or shared key is
//! involved.
//!
//! Brute force costs one frame decode per offset. The receiver half is
//! linear up to its decision, so the output pre-activations for every
//! offset of a chunk are computed at once by FFT cross-correlation.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::channel::{add_noise_in_place, noise_variance, snr_from_ebn0};
use crate::codec::{argmax, encode_batch, ArchSpec};
use crate::rng::rng_from;
use crate::error::{Error, Result};
use crate::fec::{crc_append, crc_check, reassemble, segment, BchCode, BCH_K, BCH_N, CRC_BITS};
use crate::nn::{ArchKind, NetworkModel};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyncFrame {
    pub init_params: Vec<u8>,
    pub payload: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyncFec {
    None,
    /// eBCH(32,11) per 32-bit network block; needs a direct k = 32 model.
    Bch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyncConfig {
    /// Number of candidate chip offsets searched.
    pub search_window: usize,
    /// Consecutive frames whose CRC must pass.
    pub confirm_count: usize,
    /// Frames between sync checks while tracking.
    pub resync_interval: usize,
    /// Coarse search step; 1 is the plain chip-by-chip search.
    pub stride: usize,
    pub init_bits: usize,
    pub payload_bits: usize,
    pub fec: SyncFec,
    /// Consecutive failed checks before sync is declared lost.
    pub loss_after: usize,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            search_window: 4096,
            confirm_count: 2,
            resync_interval: 1,
            stride: 1,
            init_bits: 64,
            payload_bits: 0,
            fec: SyncFec::Bch,
            loss_after: 3,
        }
    }
}

/// Frame layout derived from a model and a config.
#[derive(Clone, Debug)]
pub struct SyncCodec<'a> {
    model: &'a NetworkModel,
    arch: ArchSpec,
    config: SyncConfig,
    bch: Option<BchCode>,
}

impl<'a> SyncCodec<'a> {
    pub fn new(model: &'a NetworkModel, config: &SyncConfig) -> Result<Self> {
        let arch = ArchSpec::of_model(model)?;
        if config.confirm_count == 0 || config.resync_interval == 0 || config.stride == 0 {
            return Err(Error::Config("confirm count, resync interval and stride must be positive".into()));
        }
        let bch = match config.fec {
            SyncFec::None => None,
            SyncFec::Bch if arch.kind == ArchKind::Direct && arch.k == BCH_N => Some(BchCode::new()),
            SyncFec::Bch => {
                return Err(Error::Config(format!(
                    "BCH-protected sync frames need a direct k = {BCH_N} model"
                )))
            }
        };
        Ok(Self {
            model,
            arch,
            config: config.clone(),
            bch,
        })
    }

    /// Bits covered by the CRC plus the CRC itself.
    pub fn frame_bits(&self) -> usize {
        self.config.init_bits + self.config.payload_bits + CRC_BITS
    }

    fn bits_per_block(&self) -> usize {
        if self.bch.is_some() {
            BCH_K
        } else {
            self.arch.k
        }
    }

    pub fn blocks_per_frame(&self) -> usize {
        self.frame_bits().div_ceil(self.bits_per_block())
    }

    pub fn frame_chips(&self) -> usize {
        self.blocks_per_frame() * self.arch.hidden_dim
    }

    /// Frame bits (CRC included) per network input bit; the padding of
    /// the last block counts against it.
    pub fn rate(&self) -> f64 {
        self.frame_bits() as f64 / (self.blocks_per_frame() * self.arch.k) as f64
    }

    /// Chips per network input bit.
    pub fn spreading(&self) -> f64 {
        self.arch.spreading_factor() as f64
    }

    pub fn build(&self, frame: &SyncFrame) -> Result<Vec<f64>> {
        let cfg = &self.config;
        if frame.init_params.len() != cfg.init_bits || frame.payload.len() > cfg.payload_bits {
            return Err(Error::PayloadTooLarge {
                got: frame.init_params.len() + frame.payload.len(),
                capacity: cfg.init_bits + cfg.payload_bits,
            });
        }
        let mut bits = frame.init_params.clone();
        bits.extend_from_slice(&frame.payload);
        bits.resize(cfg.init_bits + cfg.payload_bits, 0);
        let framed = crc_append(&bits);
        let seg = segment(&framed, self.bits_per_block());
        let blocks: Vec<Vec<u8>> = match &self.bch {
            Some(code) => seg.blocks.iter().map(|b| code.encode(b)).collect(),
            None => seg.blocks,
        };
        let k = self.arch.k;
        let flat: Vec<u8> = blocks.concat();
        let bits = Array2::from_shape_vec((blocks.len(), k), flat).expect("block shape");
        Ok(encode_batch(self.model, bits.view())?.into_raw_vec_and_offset().0)
    }

    /// Hard message bits of one block from its receiver pre-activations.
    fn block_bits(&self, z: &[f64]) -> Vec<u8> {
        match (&self.bch, self.arch.kind) {
            (Some(code), _) => code.decode_soft(z),
            (None, ArchKind::OneHot) => {
                let idx = argmax(z);
                (0..self.arch.k).rev().map(|i| ((idx >> i) & 1) as u8).collect()
            }
            (None, _) => z.iter().map(|&v| (v > 0.0) as u8).collect(),
        }
    }

    fn frame_from_blocks(&self, blocks: &[Vec<u8>]) -> Vec<u8> {
        let pad = self.blocks_per_frame() * self.bits_per_block() - self.frame_bits();
        reassemble(blocks, pad)
    }

    /// CRC verdict for the frame starting at `offset` of `stream`.
    pub fn frame_passes(&self, stream: &[f64], offset: usize) -> bool {
        let n = self.arch.hidden_dim;
        if offset + self.frame_chips() > stream.len() {
            return false;
        }
        let chips = &stream[offset..offset + self.frame_chips()];
        let view = ndarray::ArrayView2::from_shape((self.blocks_per_frame(), n), chips).expect("frame shape");
        let z = self.model.logits_batch(view);
        let blocks: Vec<Vec<u8>> = z
            .rows()
            .into_iter()
            .map(|r| self.block_bits(r.to_slice().expect("row")))
            .collect();
        crc_check(&self.frame_from_blocks(&blocks))
    }
}

pub fn build_sync_frame(model: &NetworkModel, config: &SyncConfig, frame: &SyncFrame) -> Result<Vec<f64>> {
    SyncCodec::new(model, config)?.build(frame)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Acquisition {
    pub offset: usize,
    /// Candidate offsets examined up to and including the accepted one.
    pub trials: usize,
}

/// Receiver pre-activations for every block start in a chunk of the stream,
/// by FFT cross-correlation against the receiver rows.
struct SlidingLogits {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    size: usize,
    /// Conjugated spectra of the receiver rows (scaled by 1/gain).
    rows: Vec<Vec<Complex<f64>>>,
    bias: Vec<f64>,
    span: usize,
}

impl SlidingLogits {
    fn new(model: &NetworkModel, size: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(size);
        let ifft = planner.plan_fft_inverse(size);
        let inv_g = 1.0 / model.norm_gain;
        let rows = model
            .w2
            .rows()
            .into_iter()
            .map(|w| {
                let mut buf = vec![Complex::new(0.0, 0.0); size];
                for (b, &v) in buf.iter_mut().zip(w.iter()) {
                    *b = Complex::new(v * inv_g, 0.0);
                }
                fft.process(&mut buf);
                buf.iter_mut().for_each(|c| *c = c.conj());
                buf
            })
            .collect();
        let bias = (&model.b2 + &(model.w2.sum_axis(ndarray::Axis(1)) * model.norm_offset)).to_vec();
        Self {
            fft,
            ifft,
            size,
            rows,
            bias,
            span: model.hidden_dim(),
        }
    }

    /// `out[t][i]` = logit `i` of the block starting at `seg[t]`, for every
    /// `t` with the block inside `seg`.
    fn compute(&self, seg: &[f64]) -> Array2<f64> {
        assert!(seg.len() <= self.size);
        let valid = seg.len() + 1 - self.span;
        let mut spec = vec![Complex::new(0.0, 0.0); self.size];
        for (s, &v) in spec.iter_mut().zip(seg) {
            *s = Complex::new(v, 0.0);
        }
        self.fft.process(&mut spec);
        let scale = 1.0 / self.size as f64;
        let mut out = Array2::zeros((valid, self.rows.len()));
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (i, row) in self.rows.iter().enumerate() {
            for ((b, s), r) in buf.iter_mut().zip(&spec).zip(row) {
                *b = s * r;
            }
            self.ifft.process(&mut buf);
            for t in 0..valid {
                out[[t, i]] = buf[t].re * scale + self.bias[i];
            }
        }
        out
    }
}

/// Largest FFT used for one chunk of the search.
const MAX_CHUNK: usize = 1 << 16;

/// Searches offsets `0..last` for the first one whose CRC passes on
/// `confirm_count` consecutive frames.
///
/// With `stride > 1` only one offset per window of `stride` offsets is
/// checked: the one with the largest receiver output energy over the
/// frame. Aligned frames concentrate energy in the receiver outputs, so the
/// true offset usually wins its window.
fn first_passing(codec: &SyncCodec, stream: &[f64], last: usize, stride: usize) -> Option<usize> {
    search_offsets(codec, stream, last, stride, true).first().copied()
}

/// Passing offsets in `0..last`; only the earliest when `first_only`.
fn search_offsets(codec: &SyncCodec, stream: &[f64], last: usize, stride: usize, first_only: bool) -> Vec<usize> {
    let frame = codec.frame_chips();
    let confirm = codec.config.confirm_count;
    let span = frame * confirm;
    let last = last.min((stream.len() + 1).saturating_sub(span));
    if last == 0 {
        return Vec::new();
    }
    let n = codec.arch.hidden_dim;
    let blocks = codec.blocks_per_frame();
    let min = 2 * span.next_power_of_two();
    let size = (span + last).next_power_of_two().clamp(min, MAX_CHUNK.max(min));
    // Whole windows per chunk keep the coarse pass independent of chunking.
    let per_chunk = ((size - span + 1) / stride).max(1) * stride;
    let sl = SlidingLogits::new(codec.model, size.max(per_chunk + span - 1).next_power_of_two());
    let chunks: Vec<usize> = (0..last).step_by(per_chunk).collect();
    let search = |&start: &usize| -> Vec<usize> {
        let end = (start + per_chunk).min(last);
        let z = sl.compute(&stream[start..end - 1 + span]);
        let mut cache: Vec<Option<Vec<u8>>> = vec![None; z.nrows()];
        let mut passes = |o: usize| {
            (0..confirm).all(|f| {
                let bits: Vec<Vec<u8>> = (0..blocks)
                    .map(|blk| {
                        let t = o - start + f * frame + blk * n;
                        cache[t]
                            .get_or_insert_with(|| codec.block_bits(z.row(t).to_slice().expect("row")))
                            .clone()
                    })
                    .collect();
                crc_check(&codec.frame_from_blocks(&bits))
            })
        };
        if stride == 1 {
            let mut hits = (start..end).filter(|&o| passes(o));
            return if first_only {
                hits.next().into_iter().collect()
            } else {
                hits.collect()
            };
        }
        let energy: Vec<f64> = z.rows().into_iter().map(|r| r.dot(&r)).collect();
        let frame_energy = |o: usize| -> f64 {
            (0..confirm * blocks).map(|b| energy[o - start + b * n]).sum()
        };
        let mut hits = (start..end).step_by(stride).filter_map(|w| {
            let best = (w..(w + stride).min(end))
                .max_by(|&a, &b| frame_energy(a).total_cmp(&frame_energy(b)))
                .expect("non-empty window");
            passes(best).then_some(best)
        });
        if first_only {
            hits.next().into_iter().collect()
        } else {
            hits.collect()
        }
    };
    if first_only {
        let nonempty = |c: &usize| Some(search(c)).filter(|h| !h.is_empty());
        #[cfg(feature = "parallel")]
        let found = chunks.par_iter().find_map_first(nonempty);
        #[cfg(not(feature = "parallel"))]
        let found = chunks.iter().find_map(nonempty);
        return found.unwrap_or_default();
    }
    #[cfg(feature = "parallel")]
    let all: Vec<Vec<usize>> = chunks.par_iter().map(search).collect();
    #[cfg(not(feature = "parallel"))]
    let all: Vec<Vec<usize>> = chunks.iter().map(search).collect();
    all.concat()
}

/// Slides over `search_window` offsets and returns the earliest offset
/// with `confirm_count` consecutive CRC passes.
///
/// With `stride > 1` a coarse pass checks one offset per window first; if
/// it finds nothing the full chip-by-chip search runs. `trials` counts the
/// offsets whose CRC was evaluated.
pub fn acquire(stream: &[f64], model: &NetworkModel, config: &SyncConfig) -> Result<Option<Acquisition>> {
    let codec = SyncCodec::new(model, config)?;
    let last = config.search_window;
    let s = config.stride;
    if s > 1 {
        if let Some(offset) = first_passing(&codec, stream, last, s) {
            return Ok(Some(Acquisition {
                offset,
                trials: offset / s + 1,
            }));
        }
    }
    let coarse_trials = if s > 1 { last.div_ceil(s) } else { 0 };
    Ok(first_passing(&codec, stream, last, 1).map(|offset| Acquisition {
        offset,
        trials: coarse_trials + offset + 1,
    }))
}

/// Every offset in `0..search_window` (chip-by-chip) whose CRC passes on
/// `confirm_count` consecutive frames. Used to measure false syncs.
pub fn scan(stream: &[f64], model: &NetworkModel, config: &SyncConfig) -> Result<Vec<usize>> {
    let codec = SyncCodec::new(model, config)?;
    Ok(search_offsets(&codec, stream, config.search_window, 1, false))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrackReport {
    /// CRC verdict at each check.
    pub checks: Vec<bool>,
    /// Whether sync is held after each check.
    pub in_sync: Vec<bool>,
    /// Index of the check at which loss was declared.
    pub lost_at: Option<usize>,
}

/// Checks the CRC every `resync_interval` frames from `offset`; sync is lost
/// after `loss_after` consecutive failures.
pub fn track(stream: &[f64], offset: usize, model: &NetworkModel, config: &SyncConfig) -> Result<TrackReport> {
    let codec = SyncCodec::new(model, config)?;
    let step = codec.frame_chips() * config.resync_interval;
    let mut checks = Vec::new();
    let mut in_sync = Vec::new();
    let mut lost_at = None;
    let mut fails = 0;
    let mut pos = offset;
    while pos + codec.frame_chips() <= stream.len() {
        let ok = codec.frame_passes(stream, pos);
        fails = if ok { 0 } else { fails + 1 };
        if lost_at.is_none() && fails >= config.loss_after {
            lost_at = Some(checks.len());
        }
        checks.push(ok);
        in_sync.push(lost_at.is_none());
        pos += step;
    }
    Ok(TrackReport {
        checks,
        in_sync,
        lost_at,
    })
}

/// One row of the sync experiment output.
#[derive(Clone, Debug, PartialEq)]
pub struct SyncRecord {
    pub snr_db: f64,
    pub trials: usize,
    pub p_acq: f64,
    pub mean_offset_error: f64,
    pub false_syncs: usize,
}

pub fn write_sync_csv<W: Write>(records: &[SyncRecord], mut w: W) -> Result<()> {
    writeln!(w, "snr_db,trials,p_acq,mean_offset_error,false_syncs")?;
    for r in records {
        writeln!(
            w,
            "{:.4},{},{:.6},{:.4},{}",
            r.snr_db, r.trials, r.p_acq, r.mean_offset_error, r.false_syncs
        )?;
    }
    Ok(())
}

/// Acquisition experiment: each trial plants `confirm_count + 1` frames at
/// chip `plant_at` of an AWGN stream (noise only before the frame) and
/// runs [`acquire`]. Trials draw from `rng_from(seed, [trial])`.
pub fn sync_trials(
    model: &NetworkModel,
    config: &SyncConfig,
    ebn0_db: f64,
    trials: usize,
    plant_at: usize,
    seed: u64,
) -> Result<SyncRecord> {
    let codec = SyncCodec::new(model, config)?;
    if plant_at >= config.search_window {
        return Err(Error::Config(format!(
            "planted offset {plant_at} lies outside the search window {}",
            config.search_window
        )));
    }
    let snr_db = snr_from_ebn0(ebn0_db, codec.spreading(), codec.rate());
    let sigma = noise_variance(snr_db).sqrt();
    let trial = |t: usize| -> Result<Option<usize>> {
        let mut rng = rng_from(seed, &[t as u64]);
        let mut stream = vec![0.0; plant_at];
        for _ in 0..=config.confirm_count {
            stream.extend(codec.build(&random_frame(&mut rng, config))?);
        }
        stream.resize(stream.len() + codec.frame_chips(), 0.0);
        add_noise_in_place(&mut stream, sigma, &mut rng);
        Ok(acquire(&stream, model, config)?.map(|a| a.offset))
    };
    // Trials run one after another; each acquisition is itself parallel.
    let found: Vec<Option<usize>> = (0..trials).map(trial).collect::<Result<_>>()?;
    let hits = found.iter().filter(|f| **f == Some(plant_at)).count();
    let errs: Vec<f64> = found.iter().flatten().map(|&o| o.abs_diff(plant_at) as f64).collect();
    Ok(SyncRecord {
        snr_db,
        trials,
        p_acq: hits as f64 / trials.max(1) as f64,
        mean_offset_error: if errs.is_empty() {
            0.0
        } else {
            errs.iter().sum::<f64>() / errs.len() as f64
        },
        false_syncs: found.iter().flatten().filter(|&&o| o != plant_at).count(),
    })
}

/// Counts CRC passes over `offsets` candidate offsets of a pure-noise
/// stream. Returns (offsets searched, passes).
pub fn false_sync_count(model: &NetworkModel, config: &SyncConfig, offsets: usize, seed: u64) -> Result<(usize, usize)> {
    let codec = SyncCodec::new(model, config)?;
    let mut rng = rng_from(seed, &[0xfa15e]);
    let mut stream = vec![0.0; offsets + codec.frame_chips() * config.confirm_count];
    add_noise_in_place(&mut stream, 1.0, &mut rng);
    let cfg = SyncConfig {
        search_window: offsets,
        ..config.clone()
    };
    Ok((offsets, scan(&stream, model, &cfg)?.len()))
}

/// Random init-parameter fill for a frame.
pub fn random_frame<R: rand::Rng + ?Sized>(rng: &mut R, config: &SyncConfig) -> SyncFrame {
    SyncFrame {
        init_params: (0..config.init_bits).map(|_| rng.random_range(0..2u8)).collect(),
        payload: (0..config.payload_bits).map(|_| rng.random_range(0..2u8)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{build, ArchSpec};
    use rand::Rng;

    /// Direct model whose receiver is the matched filter of its transmitter.
    fn matched(hidden: usize) -> NetworkModel {
        let mut m = build(ArchSpec::direct(32, hidden).unwrap(), 2).unwrap();
        m.w2 = m.w1.t().to_owned();
        m.b2.fill(0.0);
        m.b1.fill(0.0);
        m.norm_gain = 1.0 / (32.0f64 / 3.0).sqrt();
        m
    }

    fn planted(m: &NetworkModel, cfg: &SyncConfig, at: usize, frames: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, &[]);
        let mut s: Vec<f64> = (0..at).map(|_| rng.random_range(-1.7..1.7)).collect();
        for _ in 0..frames {
            s.extend(build_sync_frame(m, cfg, &random_frame(&mut rng, cfg)).unwrap());
        }
        s.extend((0..500).map(|_| rng.random_range(-1.7..1.7)));
        s
    }

    #[test]
    fn frame_layout() {
        let m = matched(256);
        let cfg = SyncConfig::default();
        let c = SyncCodec::new(&m, &cfg).unwrap();
        assert_eq!(c.frame_bits(), 80);
        assert_eq!(c.blocks_per_frame(), 8);
        assert_eq!(c.frame_chips(), 8 * 256);
        let plain = SyncConfig {
            fec: SyncFec::None,
            init_bits: 48,
            ..SyncConfig::default()
        };
        assert_eq!(SyncCodec::new(&m, &plain).unwrap().frame_chips(), 2 * 256);
        let onehot = build(ArchSpec::one_hot(4, 16).unwrap(), 1).unwrap();
        assert!(SyncCodec::new(&onehot, &cfg).is_err());
        let big = SyncFrame {
            init_params: vec![0; 64],
            payload: vec![1; 3],
        };
        assert!(matches!(c.build(&big), Err(Error::PayloadTooLarge { .. })));
    }

    #[test]
    fn noise_free_acquisition_is_exact_and_shift_equivariant() {
        let m = matched(256);
        let cfg = SyncConfig {
            search_window: 3000,
            ..SyncConfig::default()
        };
        for at in [0, 1, 777, 1500] {
            let s = planted(&m, &cfg, at, 3, at as u64);
            let a = acquire(&s, &m, &cfg).unwrap().unwrap();
            assert_eq!(a.offset, at);
            assert_eq!(a.trials, at + 1);
            let strided = SyncConfig { stride: 37, ..cfg.clone() };
            assert_eq!(acquire(&s, &m, &strided).unwrap().unwrap().offset, at);
        }
    }

    #[test]
    fn sliding_logits_match_direct_decoding() {
        let m = matched(128);
        let mut rng = rng_from(4, &[]);
        let s: Vec<f64> = (0..1000).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sl = SlidingLogits::new(&m, 1024);
        let z = sl.compute(&s);
        assert_eq!(z.nrows(), 1000 - 128 + 1);
        for t in [0, 5, 400, 872] {
            let r = ndarray::ArrayView2::from_shape((1, 128), &s[t..t + 128]).unwrap();
            let d = m.logits_batch(r);
            for (a, b) in z.row(t).iter().zip(d.row(0).iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn track_declares_loss_after_three_failures() {
        let m = matched(256);
        let cfg = SyncConfig::default();
        let mut s = planted(&m, &cfg, 10, 10, 9);
        let frame = SyncCodec::new(&m, &cfg).unwrap().frame_chips();
        // Cut the stream after five frames.
        let cut = 10 + 5 * frame;
        let mut rng = rng_from(1, &[]);
        for v in &mut s[cut..] {
            *v = rng.random_range(-1.7..1.7);
        }
        let r = track(&s, 10, &m, &cfg).unwrap();
        assert!(r.checks[..5].iter().all(|&c| c));
        assert_eq!(r.lost_at, Some(7));
        assert!(r.in_sync[..7].iter().all(|&c| c));
        assert!(!r.in_sync[7]);
    }

    #[test]
    fn csv_has_header() {
        let mut out = Vec::new();
        let rec = SyncRecord {
            snr_db: -12.0,
            trials: 200,
            p_acq: 1.0,
            mean_offset_error: 0.0,
            false_syncs: 0,
        };
        write_sync_csv(&[rec], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("snr_db,trials,p_acq,mean_offset_error,false_syncs\n"));
        assert_eq!(text.lines().count(), 2);
    }
}
