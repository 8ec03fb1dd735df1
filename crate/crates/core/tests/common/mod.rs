//! Fixtures shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod oracle;

use ldseg::geodata::{Split, TileSet};
use ldseg::loss::{composite_loss, one_hot, ClassWeights};
use ldseg::metrics::ConfusionMatrix;
use ldseg::model::{ArchitectureSpec, SegmentationModel};
use ldseg::nn::gradcheck::{grad_check, sample_coords, GradCheckReport, DEFAULT_STEP};
use ldseg::nn::Tensor;
use ldseg::synth::{generate_tiles, SceneSpec};
use ldseg::train::{validate, PhaseConfig, TrainConfig, TrainOutcome, Trainer};
use ldseg::{LabelMap, Model32};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Published per-class test results (precision, recall, F1, IoU, support), in class order
/// background, pipeline, road, cutline.
pub const PUBLISHED: [(f64, f64, f64, f64, f64); 4] = [
    (0.966, 0.972, 0.969, 0.940, 3.5e8),
    (0.579, 0.477, 0.523, 0.354, 4.3e6),
    (0.789, 0.764, 0.776, 0.635, 6.4e6),
    (0.517, 0.478, 0.497, 0.331, 1.5e7),
];
/// Macro Avg row: P, R, F1, IoU.
pub const PUBLISHED_MACRO: [f64; 4] = [0.713, 0.673, 0.692, 0.565];
/// Weighted Avg row: P, R, F1, IoU.
pub const PUBLISHED_WEIGHTED: [f64; 4] = [0.940, 0.943, 0.942, 0.903];

/// Smallest gradient magnitude a sampled coordinate may have; below this the
/// relative error is dominated by finite-difference round-off.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Central-difference check of the full model plus composite loss in f64.
/// Coordinates are drawn from parameters whose analytic gradient is at least
/// [`GRAD_FLOOR`] in magnitude.
pub fn model_gradcheck(width: f64, size: usize, batch: usize, coords: usize, seed: u64) -> GradCheckReport {
    let spec = ArchitectureSpec::with_width(width, size);
    let mut model = SegmentationModel::<f64>::build(spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let x = Tensor::<f64>::uniform(&[batch, 4, size, size], -1.0, 1.0, &mut rng);
    let labels: Vec<u8> = (0..batch * size * size).map(|_| rng.random_range(0..4)).collect();
    let y = one_hot::<f64>(&LabelMap::new(batch, size, size, labels).unwrap()).unwrap();
    let w = ClassWeights::default();

    let (out, tape) = model.forward_train(&x).unwrap();
    let loss = composite_loss(&y, &out, &w).unwrap();
    model.zero_grad();
    model.backward(tape, &loss.grad_logits).unwrap();
    let point = model.flat_parameters();
    let analytic = model.flat_gradients();

    let eligible: Vec<usize> = (0..analytic.len()).filter(|&i| analytic[i].abs() >= GRAD_FLOOR).collect();
    let picks = sample_coords(eligible.len(), coords, seed);
    let chosen: Vec<usize> = picks.iter().map(|&k| eligible[k]).collect();

    let mut probe = model.clone();
    grad_check(&point, &analytic, &chosen, DEFAULT_STEP, |p| {
        probe.set_flat_parameters(p).unwrap();
        let (out, _) = probe.forward_train(&x).unwrap();
        composite_loss(&y, &out, &w).unwrap().total
    })
}

/// Four synthetic 64×64 tiles as the train split, the same four copied into
/// the val split so validation measures fit on the training data.
pub fn overfit_tiles() -> TileSet {
    let spec = SceneSpec {
        size: 128,
        origin_y: 1280.0,
        ..SceneSpec::default()
    };
    let raw = generate_tiles(3, &spec, 64, 1).unwrap();
    let mut set = TileSet {
        tiles: raw.tiles[..4].to_vec(),
        ..raw
    };
    set.zscore().unwrap();
    let mut val = set.tiles.clone();
    for t in &mut val {
        t.split = Split::Val;
    }
    set.tiles.extend(val);
    set
}

pub fn overfit_config(seed: u64) -> TrainConfig {
    TrainConfig {
        width_multiplier: 0.25,
        tile_size: 64,
        augment: false,
        patience: 1000,
        phase1: PhaseConfig { epochs: 300, lr: 1e-3 },
        phase2: PhaseConfig { epochs: 0, lr: 1e-4 },
        max_steps: Some(300),
        seed,
        ..TrainConfig::default()
    }
}

pub struct OverfitRun {
    pub outcome: TrainOutcome,
    /// Train macro mIoU of the final weights.
    pub train_miou: f64,
    /// First step count at which validation (= train tiles) reached 0.90.
    pub steps_to_target: Option<usize>,
}

pub fn overfit_run(seed: u64) -> OverfitRun {
    let set = overfit_tiles();
    let cfg = overfit_config(seed);
    let model = Model32::build(cfg.architecture(set.bands), cfg.seed).unwrap();
    let mut steps_to_target = None;
    let outcome = Trainer::new(model, &set, cfg)
        .unwrap()
        .run_with(|r, _| {
            if steps_to_target.is_none() && r.val_miou >= 0.90 {
                steps_to_target = Some(r.steps);
            }
        })
        .unwrap();
    let train_miou = validate(&outcome.final_model, &set, Split::Train).unwrap();
    OverfitRun {
        outcome,
        train_miou,
        steps_to_target,
    }
}

/// Random confusion matrix; some rows or columns may be empty.
pub fn random_confusion(rng: &mut impl Rng) -> ConfusionMatrix {
    let mut counts = [[0u64; 4]; 4];
    for row in &mut counts {
        for v in row.iter_mut() {
            *v = match rng.random_range(0..10) {
                0 => 0,
                1..=6 => rng.random_range(0..1000),
                _ => rng.random_range(0..10_000_000),
            };
        }
    }
    ConfusionMatrix::from_counts(counts)
}
