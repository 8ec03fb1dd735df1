//! Training protocol: seeded batching with augmentation, a two-phase learning
//! rate schedule with patience-based phase transition and early stop,
//! per-epoch validation macro mIoU, and best-checkpoint selection. Also
//! whole-raster inference.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::augment::Augmentation;
use crate::geodata::raster::RasterGrid;
use crate::geodata::tiles::{NormStats, Split, TileSet};
use crate::labels::{LabelMap, BACKGROUND};
use crate::loss::{composite_loss, one_hot, ClassWeights};
use crate::metrics::{macro_iou, ConfusionMatrix};
use crate::model::{checkpoint, predict_labels, Adam, ArchitectureSpec, SegmentationModel};
use crate::nn::Tensor;
use crate::seed::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub phase1: PhaseConfig,
    pub phase2: PhaseConfig,
    /// Epochs without improvement before the phase ends.
    pub patience: usize,
    /// Smallest validation mIoU gain that counts as an improvement.
    pub min_improvement: f64,
    pub class_weights: [f64; 4],
    pub seed: u64,
    pub width_multiplier: f64,
    pub tile_size: usize,
    pub augment: bool,
    /// Hard cap on optimizer steps across both phases.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            phase1: PhaseConfig { epochs: 100, lr: 1e-3 },
            phase2: PhaseConfig { epochs: 100, lr: 1e-4 },
            patience: 15,
            min_improvement: 1e-6,
            class_weights: ClassWeights::default().0,
            seed: 0,
            width_multiplier: 1.0,
            tile_size: 224,
            augment: true,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        for p in [self.phase1, self.phase2] {
            if !(p.lr > 0.0 && p.lr.is_finite()) {
                return Err(Error::invalid("learning rates must be positive"));
            }
        }
        if !(self.min_improvement >= 0.0) {
            return Err(Error::invalid("minimum improvement must be non-negative"));
        }
        ClassWeights::new(self.class_weights)?;
        Ok(())
    }

    pub fn architecture(&self, in_channels: usize) -> ArchitectureSpec {
        ArchitectureSpec {
            in_channels,
            ..ArchitectureSpec::with_width(self.width_multiplier, self.tile_size)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transition {
    Continue,
    EnterPhaseTwo,
    Stop,
}

/// Phase/stop state machine driven by one validation score per epoch.
///
/// A score improves when it exceeds the best so far by at least
/// `min_improvement`. After `patience` consecutive epochs without
/// improvement, or when the phase's epoch budget is spent, phase 1 hands
/// over to phase 2 and phase 2 stops. Weights are never restored at the
/// hand-over.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    phase1: PhaseConfig,
    phase2: PhaseConfig,
    patience: usize,
    min_improvement: f64,
    phase: u8,
    epochs_in_phase: usize,
    since_improvement: usize,
    best: f64,
    best_epoch: Option<usize>,
    epoch: usize,
    stopped: bool,
}

impl Schedule {
    pub fn new(cfg: &TrainConfig) -> Self {
        let mut s = Schedule {
            phase1: cfg.phase1,
            phase2: cfg.phase2,
            patience: cfg.patience,
            min_improvement: cfg.min_improvement,
            phase: 1,
            epochs_in_phase: 0,
            since_improvement: 0,
            best: f64::NEG_INFINITY,
            best_epoch: None,
            epoch: 0,
            stopped: false,
        };
        if cfg.phase1.epochs == 0 {
            s.phase = 2;
        }
        if cfg.phase2.epochs == 0 && s.phase == 2 {
            s.stopped = true;
        }
        s
    }

    pub fn phase(&self) -> u8 {
        self.phase
    }

    pub fn lr(&self) -> f64 {
        if self.phase == 1 {
            self.phase1.lr
        } else {
            self.phase2.lr
        }
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Epoch index holding the highest score seen (earliest on ties).
    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Records the score of the epoch just finished; returns whether it was
    /// an improvement and what happens next.
    pub fn observe(&mut self, score: f64) -> (bool, Transition) {
        assert!(!self.stopped, "schedule already stopped");
        let improved = score >= self.best + self.min_improvement || self.best_epoch.is_none();
        if improved {
            self.best = score;
            self.best_epoch = Some(self.epoch);
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        self.epoch += 1;
        self.epochs_in_phase += 1;
        let budget = if self.phase == 1 {
            self.phase1.epochs
        } else {
            self.phase2.epochs
        };
        let exhausted = self.since_improvement >= self.patience || self.epochs_in_phase >= budget;
        if !exhausted {
            return (improved, Transition::Continue);
        }
        if self.phase == 1 && self.phase2.epochs > 0 {
            self.phase = 2;
            self.epochs_in_phase = 0;
            self.since_improvement = 0;
            (improved, Transition::EnterPhaseTwo)
        } else {
            self.stopped = true;
            (improved, Transition::Stop)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: u8,
    pub train_loss: f64,
    pub val_miou: f64,
    pub lr: f64,
    pub seconds: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn best_val_miou(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].val_miou)
    }

    /// `epoch,phase,loss,val_miou,lr,seconds`. With `include_timing` false the
    /// seconds column is left empty so identical runs give identical files.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut s = String::from("epoch,phase,loss,val_miou,lr,seconds\n");
        for r in &self.epochs {
            let _ = write!(s, "{},{},{:.9},{:.9},{},", r.epoch, r.phase, r.train_loss, r.val_miou, r.lr);
            if include_timing {
                let _ = write!(s, "{:.3}", r.seconds);
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path, include_timing: bool) -> Result<()> {
        fs::write(path, self.to_csv(include_timing))?;
        Ok(())
    }
}

/// Eval-mode forward and argmax for a list of tiles, in order.
pub fn predict_tiles(model: &SegmentationModel<f32>, tiles: &TileSet, indices: &[usize]) -> Result<Vec<Vec<u8>>> {
    let t = tiles.tile_size;
    let shape = [1, tiles.bands, t, t];
    indices
        .par_iter()
        .map(|&i| {
            let x = Tensor::new(&shape, tiles.tiles[i].image.clone())?;
            Ok(predict_labels(&model.infer(&x)?)?.data)
        })
        .collect()
}

/// One global confusion matrix over every tile of `split`, from eval-mode
/// argmax predictions.
pub fn confusion_for_split(model: &SegmentationModel<f32>, tiles: &TileSet, split: Split) -> Result<ConfusionMatrix> {
    let indices = tiles.indices(split);
    let preds = predict_tiles(model, tiles, &indices)?;
    let mut cm = ConfusionMatrix::new();
    for (&i, p) in indices.iter().zip(&preds) {
        cm.add_pixels(&tiles.tiles[i].label, p)?;
    }
    Ok(cm)
}

/// Macro mIoU of `split` (undefined classes skipped).
pub fn validate(model: &SegmentationModel<f32>, tiles: &TileSet, split: Split) -> Result<f64> {
    Ok(macro_iou(&confusion_for_split(model, tiles, split)?))
}

/// Replaces the model-based validation score, e.g. with a scripted curve.
pub type ValidationSeam = Box<dyn FnMut(usize, &SegmentationModel<f32>) -> Result<f64> + Send>;

pub struct Trainer<'a> {
    cfg: TrainConfig,
    tiles: &'a TileSet,
    model: SegmentationModel<f32>,
    optimizer: Adam<f32>,
    weights: ClassWeights,
    schedule: Schedule,
    history: TrainHistory,
    best_checkpoint: Option<Vec<u8>>,
    steps: usize,
    seam: Option<ValidationSeam>,
}

/// Final result of a completed run.
pub struct TrainOutcome {
    /// Encoded checkpoint (model and optimizer) of the best-validation epoch.
    pub best_checkpoint: Vec<u8>,
    pub history: TrainHistory,
    /// Weights after the last epoch.
    pub final_model: SegmentationModel<f32>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: SegmentationModel<f32>, tiles: &'a TileSet, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if tiles.stats.is_none() {
            return Err(Error::invalid("tiles must be normalized before training"));
        }
        if tiles.count(Split::Train) < cfg.batch_size {
            return Err(Error::invalid(format!(
                "training split has {} tiles, fewer than one batch of {}",
                tiles.count(Split::Train),
                cfg.batch_size
            )));
        }
        if tiles.count(Split::Val) == 0 {
            return Err(Error::invalid("validation split is empty"));
        }
        let spec = model.spec();
        if spec.input_size != tiles.tile_size || spec.in_channels != tiles.bands {
            return Err(Error::invalid(format!(
                "model expects {}-band {}px tiles, tile set has {}-band {}px",
                spec.in_channels, spec.input_size, tiles.bands, tiles.tile_size
            )));
        }
        let optimizer = Adam::new(&model);
        Ok(Trainer {
            weights: ClassWeights::new(cfg.class_weights)?,
            schedule: Schedule::new(&cfg),
            cfg,
            tiles,
            model,
            optimizer,
            history: TrainHistory::default(),
            best_checkpoint: None,
            steps: 0,
            seam: None,
        })
    }

    pub fn with_validation_seam(mut self, seam: ValidationSeam) -> Self {
        self.seam = Some(seam);
        self
    }

    pub fn model(&self) -> &SegmentationModel<f32> {
        &self.model
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Checkpoint of the best epoch so far; survives an aborted run.
    pub fn best_checkpoint(&self) -> Option<&[u8]> {
        self.best_checkpoint.as_deref()
    }

    pub fn is_finished(&self) -> bool {
        self.schedule.is_stopped() || self.cfg.max_steps.is_some_and(|m| self.steps >= m)
    }

    fn batch(&self, indices: &[usize], epoch: usize) -> Result<(Tensor<f32>, LabelMap)> {
        let t = self.tiles.tile_size;
        let px = t * t;
        let mut x = Vec::with_capacity(indices.len() * self.tiles.bands * px);
        let mut y = Vec::with_capacity(indices.len() * px);
        for &i in indices {
            let tile = &self.tiles.tiles[i];
            if self.cfg.augment {
                let aug = Augmentation::sample(&mut rng_for(self.cfg.seed, &[1, epoch as u64, i as u64]));
                let (img, lab) = aug.apply(&tile.image, &tile.label, t);
                x.extend(img);
                y.extend(lab);
            } else {
                x.extend_from_slice(&tile.image);
                y.extend_from_slice(&tile.label);
            }
        }
        Ok((
            Tensor::new(&[indices.len(), self.tiles.bands, t, t], x)?,
            LabelMap::new(indices.len(), t, t, y)?,
        ))
    }

    /// One optimizer step on a batch; returns the loss.
    fn step(&mut self, x: &Tensor<f32>, y: &LabelMap, epoch: usize, step: usize, lr: f64) -> Result<f64> {
        let target = one_hot::<f32>(y)?;
        let (out, tape) = self.model.forward_train(x)?;
        let loss = composite_loss(&target, &out, &self.weights)?;
        let value = loss.total as f64;
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step });
        }
        self.model.zero_grad();
        self.model.backward(tape, &loss.grad_logits)?;
        self.optimizer.step(&mut self.model, lr)?;
        self.steps += 1;
        Ok(value)
    }

    /// Trains one epoch, validates, and advances the schedule.
    pub fn run_epoch(&mut self) -> Result<Transition> {
        if self.is_finished() {
            return Ok(Transition::Stop);
        }
        let start = Instant::now();
        let epoch = self.history.epochs.len();
        let phase = self.schedule.phase();
        let lr = self.schedule.lr();
        let mut order = self.tiles.indices(Split::Train);
        order.shuffle(&mut rng_for(self.cfg.seed, &[0, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        // the trailing partial batch is dropped
        for (k, chunk) in order.chunks_exact(self.cfg.batch_size).enumerate() {
            if self.cfg.max_steps.is_some_and(|m| self.steps >= m) {
                break;
            }
            let (x, y) = self.batch(chunk, epoch)?;
            loss_sum += self.step(&x, &y, epoch, k, lr)?;
            batches += 1;
        }
        let val = match self.seam.as_mut() {
            Some(seam) => seam(epoch, &self.model)?,
            None => validate(&self.model, self.tiles, Split::Val)?,
        };
        let (improved, mut transition) = self.schedule.observe(val);
        if improved {
            self.best_checkpoint = Some(checkpoint::encode(&self.model, Some(&self.optimizer))?);
        }
        self.history.best_epoch = self.schedule.best_epoch();
        self.history.epochs.push(EpochRecord {
            epoch,
            phase,
            train_loss: if batches > 0 { loss_sum / batches as f64 } else { f64::NAN },
            val_miou: val,
            lr,
            seconds: start.elapsed().as_secs_f64(),
            steps: self.steps,
        });
        if self.cfg.max_steps.is_some_and(|m| self.steps >= m) {
            transition = Transition::Stop;
        }
        Ok(transition)
    }

    /// Runs epochs until the schedule stops or the step cap is reached.
    pub fn run(self) -> Result<TrainOutcome> {
        self.run_with(|_, _| {})
    }

    /// As [`Trainer::run`], calling `on_epoch` after every epoch.
    pub fn run_with(mut self, mut on_epoch: impl FnMut(&EpochRecord, &Trainer<'a>)) -> Result<TrainOutcome> {
        while !self.is_finished() {
            let t = self.run_epoch()?;
            on_epoch(self.history.epochs.last().expect("epoch recorded"), &self);
            if t == Transition::Stop {
                break;
            }
        }
        Ok(TrainOutcome {
            best_checkpoint: self.best_checkpoint.expect("at least one epoch ran"),
            history: self.history,
            final_model: self.model,
        })
    }
}

/// Builds a fresh model from `cfg` (seeded by `cfg.seed`) and trains it.
pub fn train(tiles: &TileSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let model = SegmentationModel::build(cfg.architecture(tiles.bands), cfg.seed)?;
    Trainer::new(model, tiles, cfg.clone())?.run()
}

/// Labels a whole raster: z-score with `stats`, cut into `tile`-sized
/// windows (edge windows zero-padded), predict each, stitch and crop.
/// Pixels that are nodata in the input are labeled background.
pub fn predict_raster(model: &SegmentationModel<f32>, image: &RasterGrid<f32>, stats: &NormStats) -> Result<RasterGrid<u8>> {
    image.validate()?;
    let spec = model.spec();
    if image.bands != spec.in_channels || stats.mean.len() != image.bands {
        return Err(Error::invalid(format!(
            "raster has {} bands, model expects {} (stats for {})",
            image.bands,
            spec.in_channels,
            stats.mean.len()
        )));
    }
    let t = spec.input_size;
    let (h, w) = (image.height, image.width);
    let mut norm = image.data.clone();
    stats.apply(&mut norm, h * w, image.nodata);
    let valid = image.valid_mask();
    let (rows, cols) = (h.div_ceil(t), w.div_ceil(t));
    let bands = image.bands;
    let tiles: Vec<Vec<u8>> = (0..rows * cols)
        .into_par_iter()
        .map(|k| {
            let (r0, c0) = ((k / cols) * t, (k % cols) * t);
            let mut x = vec![0.0f32; bands * t * t];
            for b in 0..bands {
                for i in 0..t.min(h - r0) {
                    let n = t.min(w - c0);
                    let src = &norm[b * h * w + (r0 + i) * w + c0..][..n];
                    x[(b * t + i) * t..][..n].copy_from_slice(src);
                }
            }
            let x = Tensor::new(&[1, bands, t, t], x)?;
            Ok(predict_labels(&model.infer(&x)?)?.data)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![BACKGROUND; h * w];
    for (k, lab) in tiles.iter().enumerate() {
        let (r0, c0) = ((k / cols) * t, (k % cols) * t);
        for i in 0..t.min(h - r0) {
            for j in 0..t.min(w - c0) {
                let p = (r0 + i) * w + c0 + j;
                if valid[p] {
                    out[p] = lab[i * t + j];
                }
            }
        }
    }
    RasterGrid::new(image.geometry(), vec!["class".into()], None, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p1: usize, p2: usize, patience: usize) -> TrainConfig {
        TrainConfig {
            phase1: PhaseConfig { epochs: p1, lr: 1e-3 },
            phase2: PhaseConfig { epochs: p2, lr: 1e-4 },
            patience,
            ..TrainConfig::default()
        }
    }

    /// Replays `curve` and returns the transitions by epoch.
    fn drive(c: &TrainConfig, curve: &[f64]) -> (Schedule, Vec<(usize, Transition)>) {
        let mut s = Schedule::new(c);
        let mut events = Vec::new();
        for (e, &v) in curve.iter().enumerate() {
            if s.is_stopped() {
                break;
            }
            let (_, t) = s.observe(v);
            if t != Transition::Continue {
                events.push((e, t));
            }
        }
        (s, events)
    }

    #[test]
    fn plateau_triggers_transition_after_patience() {
        // improves through epoch 9, then flat
        let curve: Vec<f64> = (0..60).map(|e| (e.min(9) as f64) * 0.01).collect();
        let (_, events) = drive(&cfg(100, 100, 15), &curve);
        assert_eq!(events[0], (9 + 15, Transition::EnterPhaseTwo));
        // phase 2 has its own patience window
        assert_eq!(events[1], (9 + 15 + 15, Transition::Stop));
        assert_eq!(events.len(), 2);
    }

    #[test]
    fn jitter_below_threshold_is_not_improvement() {
        let mut curve = vec![0.5];
        curve.extend((1..40).map(|e| 0.5 + e as f64 * 1e-8));
        let (s, events) = drive(&cfg(100, 100, 15), &curve);
        assert_eq!(events[0].0, 15);
        assert_eq!(s.best_epoch(), Some(0));
    }

    #[test]
    fn epoch_budgets_bound_the_run() {
        let curve: Vec<f64> = (0..10).map(|e| e as f64).collect();
        let (s, events) = drive(&cfg(1, 1, 15), &curve);
        assert_eq!(events, vec![(0, Transition::EnterPhaseTwo), (1, Transition::Stop)]);
        assert_eq!(s.best_epoch(), Some(1));
    }

    #[test]
    fn best_epoch_is_global_argmax() {
        let curve = [0.1, 0.4, 0.3, 0.4, 0.2, 0.35];
        let (s, _) = drive(&cfg(100, 100, 15), &curve);
        assert_eq!(s.best_epoch(), Some(1));
        assert_eq!(s.best(), 0.4);
    }

    #[test]
    fn csv_columns() {
        let h = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 0,
                phase: 1,
                train_loss: 1.5,
                val_miou: 0.25,
                lr: 0.001,
                seconds: 2.0,
                steps: 3,
            }],
            best_epoch: Some(0),
        };
        let csv = h.to_csv(false);
        assert_eq!(csv.lines().next().unwrap(), "epoch,phase,loss,val_miou,lr,seconds");
        assert_eq!(csv.lines().nth(1).unwrap(), "0,1,1.500000000,0.250000000,0.001,");
        assert!(h.to_csv(true).ends_with(",2.000\n"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                patience: 0,
                ..TrainConfig::default()
            },
            cfg(1, 1, 1).with_lr(0.0),
        ] {
            assert!(bad.validate().is_err());
        }
    }

    impl TrainConfig {
        fn with_lr(mut self, lr: f64) -> Self {
            self.phase1.lr = lr;
            self
        }
    }
}
