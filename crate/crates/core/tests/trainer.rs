use std::sync::{Arc, Mutex};

use ldseg::geodata::{GridGeometry, RasterGrid, Split, TileSet};
use ldseg::metrics::{macro_iou, ConfusionMatrix};
use ldseg::model::decode_checkpoint;
use ldseg::synth::{generate_dataset, SceneSpec};
use ldseg::train::{
    confusion_for_split, predict_raster, predict_tiles, validate, PhaseConfig, TrainConfig, Trainer, Transition,
};
use ldseg::{Error, Model32};

fn small_set() -> TileSet {
    let spec = SceneSpec {
        size: 128,
        origin_y: 1280.0,
        ..SceneSpec::default()
    };
    generate_dataset(2, &spec, 32, 4).unwrap()
}

fn cfg(p1: usize, p2: usize, patience: usize) -> TrainConfig {
    TrainConfig {
        width_multiplier: 0.125,
        tile_size: 32,
        batch_size: 2,
        phase1: PhaseConfig { epochs: p1, lr: 1e-3 },
        phase2: PhaseConfig { epochs: p2, lr: 1e-4 },
        patience,
        seed: 2,
        ..TrainConfig::default()
    }
}

fn model_for(c: &TrainConfig, set: &TileSet) -> Model32 {
    Model32::build(c.architecture(set.bands), c.seed).unwrap()
}

#[test]
fn one_plus_one_epochs_runs_both_phases() {
    let set = small_set();
    let c = cfg(1, 1, 15);
    let out = Trainer::new(model_for(&c, &set), &set, c.clone()).unwrap().run().unwrap();
    let h = &out.history;
    assert_eq!(h.epochs.len(), 2);
    assert_eq!((h.epochs[0].phase, h.epochs[1].phase), (1, 2));
    assert_eq!((h.epochs[0].lr, h.epochs[1].lr), (1e-3, 1e-4));
    let per_epoch = set.count(Split::Train) / c.batch_size;
    assert_eq!(h.epochs[1].steps, 2 * per_epoch);

    let best = h.best_epoch.unwrap();
    let max = h.epochs.iter().map(|r| r.val_miou).fold(f64::MIN, f64::max);
    assert_eq!(h.epochs[best].val_miou, max);
    let restored = decode_checkpoint::<f32>(&out.best_checkpoint).unwrap();
    assert!(restored.optimizer.is_some());
    assert_eq!(validate(&restored.model, &set, Split::Val).unwrap(), max);
}

#[test]
fn scripted_plateau_drives_the_schedule_and_checkpoint() {
    let set = small_set();
    // improves through epoch 2, then flat
    let curve = [0.1, 0.2, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3];
    let c = cfg(20, 20, 2);
    let snapshots: Arc<Mutex<Vec<Model32>>> = Arc::default();
    let seen = snapshots.clone();
    let trainer = Trainer::new(model_for(&c, &set), &set, c)
        .unwrap()
        .with_validation_seam(Box::new(move |epoch, model| {
            seen.lock().unwrap().push(model.clone());
            Ok(curve[epoch])
        }));
    let mut transitions = Vec::new();
    let mut t = trainer;
    loop {
        let tr = t.run_epoch().unwrap();
        if tr != Transition::Continue {
            transitions.push((t.history().epochs.len() - 1, tr));
        }
        if tr == Transition::Stop {
            break;
        }
    }
    assert_eq!(transitions, vec![(4, Transition::EnterPhaseTwo), (6, Transition::Stop)]);
    assert_eq!(t.history().best_epoch, Some(2));
    let phases: Vec<u8> = t.history().epochs.iter().map(|r| r.phase).collect();
    assert_eq!(phases, vec![1, 1, 1, 1, 1, 2, 2]);
    let best = decode_checkpoint::<f32>(t.best_checkpoint().unwrap()).unwrap().model;
    assert_eq!(best.flat_parameters(), snapshots.lock().unwrap()[2].flat_parameters());
}

#[test]
fn validation_matches_an_independent_confusion() {
    let set = small_set();
    let c = cfg(1, 0, 1);
    let model = model_for(&c, &set);
    let idx = set.indices(Split::Val);
    let preds = predict_tiles(&model, &set, &idx).unwrap();
    let mut counts = [[0u64; 4]; 4];
    for (&i, p) in idx.iter().zip(&preds) {
        for (&t, &q) in set.tiles[i].label.iter().zip(p) {
            counts[t as usize][q as usize] += 1;
        }
    }
    let cm = ConfusionMatrix::from_counts(counts);
    assert_eq!(confusion_for_split(&model, &set, Split::Val).unwrap(), cm);
    assert_eq!(validate(&model, &set, Split::Val).unwrap(), macro_iou(&cm));

    // perfect predictions: every class with support scores 1
    let mut perfect = ConfusionMatrix::new();
    for &i in &idx {
        perfect.add_pixels(&set.tiles[i].label, &set.tiles[i].label).unwrap();
    }
    assert_eq!(macro_iou(&perfect), 1.0);
}

#[test]
fn evaluation_leaves_the_model_untouched() {
    let set = small_set();
    let c = cfg(1, 0, 1);
    let model = model_for(&c, &set);
    let before = model.clone();
    let a = validate(&model, &set, Split::Val).unwrap();
    let b = validate(&model, &set, Split::Val).unwrap();
    assert_eq!(a, b);
    assert_eq!(model, before);
}

fn raster(h: usize, w: usize, fill: impl Fn(usize) -> f32) -> RasterGrid<f32> {
    let g = GridGeometry::new(w, h, 0.0, h as f64 * 10.0, 10.0);
    let data = (0..4 * h * w).map(fill).collect();
    RasterGrid::new(g, ["red", "green", "blue", "nir"].map(String::from).to_vec(), Some(-9999.0), data).unwrap()
}

#[test]
fn predict_raster_handles_small_exact_and_empty_inputs() {
    let set = small_set();
    let c = cfg(1, 0, 1);
    let model = model_for(&c, &set);
    let stats = set.stats.clone().unwrap();

    // smaller than one tile
    let small = raster(20, 13, |i| (i % 97) as f32);
    let out = predict_raster(&model, &small, &stats).unwrap();
    assert_eq!((out.height, out.width), (20, 13));
    assert!(out.data.iter().all(|&v| v < 4));

    // exactly 2x2 tiles: each window equals a direct tile prediction
    let exact = raster(64, 64, |i| ((i * 37) % 251) as f32);
    let out = predict_raster(&model, &exact, &stats).unwrap();
    let mut norm = exact.data.clone();
    stats.apply(&mut norm, 64 * 64, None);
    for (r0, c0) in [(0, 0), (0, 32), (32, 0), (32, 32)] {
        let mut img = vec![0f32; 4 * 32 * 32];
        for b in 0..4 {
            for i in 0..32 {
                for j in 0..32 {
                    img[(b * 32 + i) * 32 + j] = norm[b * 4096 + (r0 + i) * 64 + c0 + j];
                }
            }
        }
        let x = ldseg::Tensor32::new(&[1, 4, 32, 32], img).unwrap();
        let lab = ldseg::model::predict_labels(&model.infer(&x).unwrap()).unwrap().data;
        for i in 0..32 {
            for j in 0..32 {
                assert_eq!(out.data[(r0 + i) * 64 + c0 + j], lab[i * 32 + j]);
            }
        }
    }

    // all nodata: background everywhere
    let empty = raster(40, 40, |_| -9999.0);
    let out = predict_raster(&model, &empty, &stats).unwrap();
    assert!(out.data.iter().all(|&v| v == 0));
}

#[test]
fn non_finite_input_aborts_with_a_numeric_error() {
    let mut set = small_set();
    for t in &mut set.tiles {
        t.image[0] = f32::NAN;
    }
    let c = cfg(1, 0, 1);
    let err = Trainer::new(model_for(&c, &set), &set, c).unwrap().run().err().unwrap();
    assert!(matches!(err, Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. }), "{err:?}");
}

#[test]
fn trainer_rejects_unusable_tile_sets() {
    let set = small_set();
    let c = cfg(1, 0, 1);
    let mut raw = set.clone();
    raw.stats = None;
    assert!(Trainer::new(model_for(&c, &set), &raw, c.clone()).is_err());
    let mut no_val = set.clone();
    no_val.tiles.retain(|t| t.split != Split::Val);
    assert!(Trainer::new(model_for(&c, &set), &no_val, c.clone()).is_err());
    let wrong = TrainConfig { tile_size: 64, ..c.clone() };
    assert!(Trainer::new(model_for(&wrong, &set), &set, c).is_err());
}
