use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::input::window_indices;
use super::loss::{bce_loss, logit_gradient};
use super::network::{Architecture, WmNetwork};
use crate::autolabel::WeightlessAnnotation;
use crate::error::{Error, Result};
use crate::motion::MotionSequence;
use crate::seed::stage_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub lambda_smooth: f64,
    /// δ is drawn from `[-max_future_offset, max_future_offset]` frames.
    pub max_future_offset: i64,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Frames per training window (truncated to the shortest sequence).
    pub window: usize,
    pub hidden_sizes: Vec<usize>,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 64,
            lambda_smooth: 0.1,
            max_future_offset: 10,
            epochs: 100,
            seed: 0,
            adam: AdamConfig::default(),
            window: 48,
            hidden_sizes: vec![256, 256, 64],
            dropout: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.lambda_smooth >= 0.0) {
            return Err(Error::InvalidArgument("lambda_smooth must be non-negative".into()));
        }
        if self.max_future_offset < 0 {
            return Err(Error::InvalidArgument("max_future_offset must be non-negative".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidArgument("window must be at least 1 frame".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, dof: usize) -> Architecture {
        Architecture { hidden_sizes: self.hidden_sizes.clone(), dropout: self.dropout, ..Architecture::for_dof(dof) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean total loss per epoch.
    pub loss_history: Vec<f64>,
    pub steps: u64,
}

struct Prepared<'a> {
    seq: &'a MotionSequence,
    targets: Vec<Vec<f64>>,
}

fn prepare<'a>(dataset: &'a [(MotionSequence, WeightlessAnnotation)]) -> Result<(usize, Vec<Prepared<'a>>)> {
    let first = dataset.first().ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
    let dof = first.0.dof();
    let mut out = Vec::with_capacity(dataset.len());
    for (i, (seq, ann)) in dataset.iter().enumerate() {
        if seq.is_empty() {
            return Err(Error::InvalidArgument(format!("sequence {i} has no frames")));
        }
        if seq.dof() != dof {
            return Err(Error::dims("sequence dof", dof, seq.dof()));
        }
        if ann.frame_count != seq.len() || ann.labels.len() != seq.len() {
            return Err(Error::Malformed {
                what: "annotation",
                message: format!("annotation {i} covers {} frames, sequence has {}", ann.labels.len(), seq.len()),
            });
        }
        if ann.dof != dof {
            return Err(Error::dims("annotation dof", dof, ann.dof));
        }
        out.push(Prepared { seq, targets: ann.activation_targets() });
    }
    Ok((dof, out))
}

fn fill_row(x: &mut Array2<f64>, row: usize, seq: &MotionSequence, t: usize, delta: i64) {
    let k = seq.dof();
    let mut r = x.row_mut(row);
    for (slot, i) in window_indices(seq.len(), t, delta).into_iter().enumerate() {
        for (j, &v) in seq.frames[i].q.iter().enumerate() {
            r[slot * k + j] = v;
        }
    }
}

pub fn train(
    dataset: &[(MotionSequence, WeightlessAnnotation)],
    cfg: &TrainConfig,
) -> Result<(WmNetwork, TrainReport)> {
    train_with_progress(dataset, cfg, |_, _| {})
}

/// Mini-batch BPTT over fixed-length windows. `progress(epoch, loss)` runs after each epoch.
pub fn train_with_progress<F: FnMut(usize, f64)>(
    dataset: &[(MotionSequence, WeightlessAnnotation)],
    cfg: &TrainConfig,
    mut progress: F,
) -> Result<(WmNetwork, TrainReport)> {
    cfg.validate()?;
    let (dof, data) = prepare(dataset)?;
    let mut net = WmNetwork::init(cfg.architecture(dof), &mut stage_rng(cfg.seed, "wm-init"))?;
    let mut rng = stage_rng(cfg.seed, "wm-train");
    let steps = data.iter().map(|d| d.seq.len()).min().unwrap().min(cfg.window);

    // Window starts shift by a random phase each epoch so every frame sees
    // varied positions relative to the zero initial state.
    let windows = |rng: &mut ChaCha8Rng| -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (s, d) in data.iter().enumerate() {
            let n = d.seq.len();
            let phase = if n > steps { rng.gen_range(0..steps.min(n - steps + 1)) } else { 0 };
            if phase > 0 {
                out.push((s, 0));
            }
            let mut start = phase;
            while start + steps <= n {
                out.push((s, start));
                start += steps;
            }
            if start < n && start > 0 {
                out.push((s, n - steps));
            }
        }
        out
    };

    let mut adam = AdamState::new(net.param_count());
    let mut history = Vec::with_capacity(cfg.epochs);
    let width = net.architecture().input_size;
    for epoch in 0..cfg.epochs {
        let mut samples = windows(&mut rng);
        samples.shuffle(&mut rng);
        let deltas: Vec<i64> =
            samples.iter().map(|_| rng.gen_range(-cfg.max_future_offset..=cfg.max_future_offset)).collect();
        let mut epoch_loss = 0.0;
        for (chunk, dchunk) in samples.chunks(cfg.batch_size).zip(deltas.chunks(cfg.batch_size)) {
            let batch = chunk.len();
            let mut x = Array2::zeros((steps * batch, width));
            let mut y = Array2::zeros((steps * batch, dof));
            for (b, (&(s, start), &delta)) in chunk.iter().zip(dchunk).enumerate() {
                let d = &data[s];
                for t in 0..steps {
                    let row = t * batch + b;
                    fill_row(&mut x, row, d.seq, start + t, delta);
                    for (j, &v) in d.targets[start + t].iter().enumerate() {
                        y[[row, j]] = v;
                    }
                }
            }
            let masks = net.sample_masks(steps, batch, &mut rng);
            let trace = net.forward_sequence(&x, steps, batch, Some(&masks))?;
            let (_, per_sample, d_logits) = logit_gradient(trace.outputs(), &y, steps, batch, cfg.lambda_smooth)?;
            let grad = net.backward_logits(&trace, &d_logits)?;
            adam_step(net.params_mut(), &grad, &mut adam, &cfg.adam, cfg.lr)?;
            epoch_loss += per_sample.iter().sum::<f64>();
        }
        let mean = epoch_loss / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at epoch {epoch}")));
        }
        history.push(mean);
        progress(epoch, mean);
    }
    Ok((net, TrainReport { loss_history: history, steps: adam.t }))
}

/// Deterministic prediction over a whole sequence from zero state with δ = 0.
pub fn predict_sequence(net: &WmNetwork, seq: &MotionSequence) -> Result<Vec<Vec<f64>>> {
    if seq.is_empty() {
        return Err(Error::InvalidArgument("motion sequence has no frames".into()));
    }
    if net.architecture().output_size != seq.dof() {
        return Err(Error::dims("network joints", net.architecture().output_size, seq.dof()));
    }
    let n = seq.len();
    let mut x = Array2::zeros((n, net.architecture().input_size));
    for t in 0..n {
        fill_row(&mut x, t, seq, t, 0);
    }
    Ok(net.forward_sequence(&x, n, 1, None)?.sample_outputs(0))
}

/// `(1/K) Σ_i Σ_t |w_{t,i} - w_{t-1,i}|`.
pub fn total_variation(pred: &[Vec<f64>]) -> f64 {
    let k = pred.first().map_or(1, Vec::len).max(1);
    let tv: f64 = pred.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a - b).abs()).sum::<f64>()).sum();
    tv / k as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Fraction of frames where every joint is on the correct side of the threshold.
    pub frame_accuracy: f64,
    pub joint_accuracy: f64,
    pub bce: f64,
    pub mean_total_variation: f64,
    pub frames: usize,
}

pub fn evaluate(
    net: &WmNetwork,
    dataset: &[(MotionSequence, WeightlessAnnotation)],
    threshold: f64,
) -> Result<EvalReport> {
    let (_, data) = prepare(dataset)?;
    let (mut frames, mut frames_ok, mut joints, mut joints_ok) = (0usize, 0usize, 0usize, 0usize);
    let (mut bce, mut tv) = (0.0, 0.0);
    for d in &data {
        let pred = predict_sequence(net, d.seq)?;
        for (p, y) in pred.iter().zip(&d.targets) {
            let ok = p.iter().zip(y).filter(|(p, y)| (**p >= threshold) == (**y >= 0.5)).count();
            frames += 1;
            joints += p.len();
            joints_ok += ok;
            frames_ok += usize::from(ok == p.len());
        }
        bce += bce_loss(&pred, &d.targets)? * pred.len() as f64;
        tv += total_variation(&pred);
    }
    Ok(EvalReport {
        frame_accuracy: frames_ok as f64 / frames as f64,
        joint_accuracy: joints_ok as f64 / joints as f64,
        bce: bce / frames as f64,
        mean_total_variation: tv / data.len() as f64,
        frames,
    })
}
