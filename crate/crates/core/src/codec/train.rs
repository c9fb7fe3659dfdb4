use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::arch::{exhaustive_bits, input_matrix, random_bits, target_matrix, ArchSpec};
use crate::channel::noise_variance;
use crate::error::{Error, Result};
use crate::nn::{corpus_loss, corpus_loss_grad, oss_step, Corpus, NetworkModel, OssState};
use crate::rng::rng_from;

/// Lags covered by the post-training chip reorder.
pub const REORDER_MAX_LAG: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Batch {
    /// Every message once (only feasible for small k).
    Exhaustive,
    /// A fixed corpus of random blocks.
    RandomBlocks(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: Batch,
    /// Per-chip SNR at which noise is injected; `None` trains noise-free.
    pub train_snr_db: Option<f64>,
    pub seed: u64,
    /// Training stops once the loss drops to this value.
    pub target_loss: f64,
    /// Initial steepest-descent step of the optimizer.
    pub initial_step: f64,
    /// Stop after this many consecutive rejected line searches.
    pub max_rejections: usize,
    /// L2 penalty `λ/2·‖W‖²` on the weight matrices (biases excluded).
    pub weight_decay: f64,
    /// Redraw the training noise every this many epochs; `None` keeps one
    /// fixed draw for the whole run.
    pub noise_refresh: Option<usize>,
    /// Annealing proposals for the post-training chip reorder that
    /// flattens the structural autocorrelation; 0 skips it.
    #[serde(default)]
    pub chip_reorder: usize,
}

impl TrainConfig {
    /// Noise-free, exhaustive-message training of the one-hot network. The
    /// small weight penalty steers it to a large-margin, matched receiver.
    pub fn one_hot_default(seed: u64) -> Self {
        Self {
            epochs: 3000,
            batch: Batch::Exhaustive,
            train_snr_db: None,
            seed,
            target_loss: 0.0,
            initial_step: 1.0,
            max_rejections: 4,
            weight_decay: 1e-5,
            noise_refresh: None,
            chip_reorder: 0,
        }
    }

    /// Training at −12 dB per-chip SNR on a fixed random corpus. Fresh
    /// noise every 10 epochs keeps the receiver from fitting one draw, and
    /// the weight penalty pulls it towards the matched filter.
    pub fn direct_default(seed: u64) -> Self {
        Self {
            epochs: 300,
            batch: Batch::RandomBlocks(4096),
            train_snr_db: Some(-12.0),
            seed,
            target_loss: 0.0,
            initial_step: 1.0,
            max_rejections: 4,
            weight_decay: 1e-3,
            noise_refresh: Some(10),
            chip_reorder: 500_000,
        }
    }

    pub fn default_for(arch: &ArchSpec, seed: u64) -> Self {
        match arch.kind {
            crate::nn::ArchKind::OneHot => Self::one_hot_default(seed),
            _ => Self::direct_default(seed),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: NetworkModel,
    /// Loss before training followed by the loss after every accepted step.
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
    pub converged: bool,
    pub accepted_steps: usize,
}

/// Builds the training corpus for a config. Deterministic in the seed.
pub fn training_corpus(arch: &ArchSpec, config: &TrainConfig) -> Result<Corpus> {
    let mut rng = rng_from(config.seed, &[0x7a1e]);
    let bits = match config.batch {
        Batch::Exhaustive => {
            if arch.k > 16 {
                return Err(Error::Config(format!(
                    "exhaustive training over 2^{} messages is not feasible",
                    arch.k
                )));
            }
            exhaustive_bits(arch.k)
        }
        Batch::RandomBlocks(0) => return Err(Error::Config("empty training corpus".into())),
        Batch::RandomBlocks(n) => random_bits(&mut rng, n, arch.k),
    };
    let inputs = input_matrix(arch, bits.view())?;
    let targets = target_matrix(arch, inputs.view());
    let noise = config
        .train_snr_db
        .map(|snr| draw_noise(&mut rng, inputs.nrows(), arch.hidden_dim, snr));
    Ok(Corpus {
        inputs,
        targets,
        noise,
    })
}

fn draw_noise<R: rand::Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, snr_db: f64) -> Array2<f64> {
    let sigma = noise_variance(snr_db).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || {
        let v: f64 = StandardNormal.sample(rng);
        sigma * v
    })
}

/// Trains with the one-step secant optimizer, then centers the chip
/// positions and fixes the chip normalization over the training inputs.
pub fn train(model: &NetworkModel, config: &TrainConfig) -> Result<TrainReport> {
    let arch = ArchSpec::of_model(model)?;
    let loss_kind = arch.loss();
    let mut corpus = training_corpus(&arch, config)?;
    let mut refresh_rng = rng_from(config.seed, &[0x7a1e, 1]);
    let mut work = model.clone();
    let mut scratch = model.clone();
    let mut params = work.params();
    let mut state = OssState::with_line_search(params.len(), config.initial_step, Default::default());

    let n_w1 = work.w1.len();
    let n_b1 = work.b1.len();
    let n_w2 = work.w2.len();
    let is_weight = |i: usize| i < n_w1 || (i >= n_w1 + n_b1 && i < n_w1 + n_b1 + n_w2);
    let decay = config.weight_decay;
    let penalty = |p: &[f64]| {
        if decay == 0.0 {
            return 0.0;
        }
        0.5 * decay
            * p.iter()
                .enumerate()
                .filter(|&(i, _)| is_weight(i))
                .map(|(_, v)| v * v)
                .sum::<f64>()
    };
    let objective = |corpus: &Corpus, m: &NetworkModel, p: &[f64]| {
        let (l, mut g) = corpus_loss_grad(m, corpus, loss_kind);
        if decay != 0.0 {
            for (i, gv) in g.iter_mut().enumerate() {
                if is_weight(i) {
                    *gv += decay * p[i];
                }
            }
        }
        (l + penalty(p), g)
    };
    let (mut loss, mut grad) = objective(&corpus, &work, &params);
    if !loss.is_finite() {
        return Err(Error::TrainingDiverged(format!("initial loss {loss}")));
    }
    let mut history = vec![loss];
    let mut rejections = 0;
    let mut accepted = 0;
    for epoch in 0..config.epochs {
        if loss <= config.target_loss {
            break;
        }
        if let (Some(r), Some(snr)) = (config.noise_refresh, config.train_snr_db) {
            if r > 0 && epoch > 0 && epoch % r == 0 {
                let (rows, cols) = (corpus.inputs.nrows(), arch.hidden_dim);
                corpus.noise = Some(draw_noise(&mut refresh_rng, rows, cols, snr));
                (loss, grad) = objective(&corpus, &work, &params);
                state.reset = true;
            }
        }
        let (next, outcome) = oss_step(&params, loss, &grad, &mut state, |p| {
            scratch.set_params(p).expect("length checked");
            corpus_loss(&scratch, &corpus, loss_kind) + penalty(p)
        })?;
        if !outcome.accepted {
            rejections += 1;
            if rejections >= config.max_rejections {
                break;
            }
            continue;
        }
        rejections = 0;
        accepted += 1;
        params = next;
        work.set_params(&params)?;
        let (l, g) = objective(&corpus, &work, &params);
        loss = l;
        grad = g;
        history.push(loss);
    }

    work.center_and_normalize(corpus.inputs.view());
    if config.chip_reorder > 0 {
        super::order::decorrelate_chip_order(&mut work, REORDER_MAX_LAG, config.chip_reorder, config.seed)?;
    }
    work.meta.trained_snr_db = config.train_snr_db;
    work.meta.seed = config.seed;
    work.meta.epochs = accepted;
    if !work.is_finite() {
        return Err(Error::TrainingDiverged("non-finite weights after training".into()));
    }
    Ok(TrainReport {
        model: work,
        final_loss: loss,
        converged: loss <= config.target_loss,
        loss_history: history,
        accepted_steps: accepted,
    })
}
