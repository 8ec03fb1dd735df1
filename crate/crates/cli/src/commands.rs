use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use ldseg::geodata::png::write_label_png;
use ldseg::geodata::{
    rasterize, read_raster, read_raster_f32, tile, write_raster, NormStats, RasterGrid, TileSet, VectorLayer,
};
use ldseg::metrics::{
    confusion_csv, normalize, normalized_csv, spatial_miou, Axis, BoundingBox, ConfusionMatrix, MetricsReport,
    TileEvaluation, UndefinedPolicy,
};
use ldseg::model::checkpoint::load_checkpoint;
use ldseg::seed::derive_seed;
use ldseg::synth::{generate_dataset, generate_scene, scene_spec_for};
use ldseg::train::{predict_raster, predict_tiles, Trainer};
use ldseg::{Error, Model32};
use serde_json::json;

use crate::config::RunConfig;

const CRS_NOTE: &str = "projected metres";

pub fn run(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    match cfg.command.as_str() {
        "synth" => synth(cfg),
        "rasterize" => rasterize_cmd(cfg),
        "tile" => tile_cmd(cfg),
        "train" => train(cfg),
        "eval" => eval(cfg),
        "predict" => predict(cfg),
        other => Err(Error::InvalidArgument(format!("unknown command {other:?}")).into()),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required")).into())
}

/// Reading an input that is missing or unreadable is a malformed-input error.
fn read_input<T>(path: &Path, f: impl FnOnce(&Path) -> ldseg::Result<T>) -> Result<T> {
    f(path).map_err(|e| match e {
        Error::Io(io) => Error::Malformed {
            path: path.to_path_buf(),
            reason: io.to_string(),
        }
        .into(),
        other => anyhow::Error::from(other),
    })
}

fn load_model(path: &Path) -> Result<Model32> {
    Ok(read_input(path, |p| load_checkpoint::<f32>(p))?.model)
}

fn synth(cfg: &RunConfig) -> Result<()> {
    cfg.scene.validate()?;
    if cfg.scenes == 0 {
        return Err(Error::InvalidArgument("--scenes must be at least 1".into()).into());
    }
    for k in 0..cfg.scenes {
        let spec = scene_spec_for(&cfg.scene, cfg.scenes, k, cfg.seed);
        let scene = generate_scene(&spec)?;
        let stem = format!("scene_{k:03}");
        write_raster(&cfg.out.join(format!("{stem}.json")), &scene.image, CRS_NOTE)?;
        scene.vectors.write(&cfg.out.join(format!("{stem}.geojson")))?;
        eprintln!("{stem}: {} features", scene.vectors.len());
    }
    if let Some(t) = cfg.synth_tile_size {
        let set = generate_dataset(cfg.scenes, &cfg.scene, t, cfg.seed)?;
        set.save(&cfg.out.join("tiles.ldt"))?;
        eprintln!("tiles.ldt: {} tiles, digest {}", set.tiles.len(), set.digest());
    }
    Ok(())
}

fn rasterize_cmd(cfg: &RunConfig) -> Result<()> {
    let vectors = required(&cfg.inputs.vectors, "vectors")?;
    let template = required(&cfg.inputs.template, "template")?;
    let layer = read_input(vectors, VectorLayer::read)?;
    let grid = read_input(template, read_raster_f32)?.geometry();
    let labels = rasterize(&layer, &grid, cfg.mode)?;
    write_raster(&cfg.out.join("labels.json"), &labels, CRS_NOTE)?;
    write_label_png(&cfg.out.join("labels.png"), &labels.data, labels.width, labels.height)?;
    Ok(())
}

fn tile_cmd(cfg: &RunConfig) -> Result<()> {
    let images = &cfg.inputs.images;
    let labels = &cfg.inputs.labels;
    if images.is_empty() || images.len() != labels.len() {
        return Err(Error::InvalidArgument("give one --labels per --image (at least one pair)".into()).into());
    }
    cfg.split_fractions.validate()?;
    let mut tiles = Vec::new();
    let mut bounds: Option<BoundingBox> = None;
    let mut first: Option<RasterGrid<f32>> = None;
    for (k, (ip, lp)) in images.iter().zip(labels).enumerate() {
        let image = read_input(ip, read_raster_f32)?;
        let lab: RasterGrid<u8> = read_input(lp, |p| read_raster(p))?;
        if let Some(f) = &first {
            if f.band_names != image.band_names || f.pixel_size_m != image.pixel_size_m || f.nodata != image.nodata {
                return Err(Error::InvalidArgument(format!(
                    "{} does not match the bands, pixel size or nodata of the first image",
                    ip.display()
                ))
                .into());
            }
        }
        tiles.extend(tile(&image, &lab, cfg.tile_size, k as u32)?);
        let (x0, y0, x1, y1) = image.geometry().extent();
        bounds = Some(match bounds {
            None => BoundingBox { min_x: x0, min_y: y0, max_x: x1, max_y: y1 },
            Some(b) => BoundingBox {
                min_x: b.min_x.min(x0),
                min_y: b.min_y.min(y0),
                max_x: b.max_x.max(x1),
                max_y: b.max_y.max(y1),
            },
        });
        if first.is_none() {
            first = Some(image);
        }
    }
    let first = first.expect("at least one image");
    let mut set = TileSet::new(
        cfg.tile_size,
        first.band_names.clone(),
        first.pixel_size_m,
        first.nodata,
        bounds.expect("at least one image"),
        tiles,
    )?;
    if set.tiles.is_empty() {
        return Err(Error::InvalidArgument("no window passed the validity and disturbance filters".into()).into());
    }
    set.split(&cfg.split_fractions, derive_seed(cfg.seed, &[u64::MAX]))?;
    let stats = set.zscore()?;
    set.save(&cfg.out.join("tiles.ldt"))?;
    write_json(&cfg.out.join("stats.json"), &stats)?;
    eprintln!(
        "{} tiles (train {}, val {}, test {}), digest {}",
        set.tiles.len(),
        set.count(ldseg::geodata::Split::Train),
        set.count(ldseg::geodata::Split::Val),
        set.count(ldseg::geodata::Split::Test),
        set.digest()
    );
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<()> {
    let path = required(&cfg.inputs.tiles, "tiles")?;
    let tiles = read_input(path, TileSet::load)?;
    let mut tc = cfg.train.clone();
    tc.tile_size = tiles.tile_size;
    let model = Model32::build(tc.architecture(tiles.bands), tc.seed)?;
    let trainer = Trainer::new(model, &tiles, tc)?;
    let outcome = trainer.run_with(|r, _| {
        eprintln!(
            "epoch {:>3} phase {} loss {:.5} val mIoU {:.4} lr {:e} {:.1}s",
            r.epoch, r.phase, r.train_loss, r.val_miou, r.lr, r.seconds
        );
    })?;
    fs::write(cfg.out.join("best.ldck"), &outcome.best_checkpoint)?;
    let reproducible = cfg.reproducible();
    outcome.history.write_csv(&cfg.out.join("history.csv"), !reproducible)?;
    if reproducible {
        let mut timing = String::from("epoch,seconds\n");
        for r in &outcome.history.epochs {
            timing.push_str(&format!("{},{:.3}\n", r.epoch, r.seconds));
        }
        fs::write(cfg.out.join("timing.csv"), timing)?;
    }
    let summary = json!({
        "best_epoch": outcome.history.best_epoch,
        "best_val_miou": outcome.history.best_val_miou(),
        "epochs": outcome.history.epochs.len(),
        "parameters": outcome.final_model.num_parameters(),
        "tiles_digest": tiles.digest(),
    });
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<()> {
    let model = load_model(required(&cfg.inputs.checkpoint, "checkpoint")?)?;
    let tiles = read_input(required(&cfg.inputs.tiles, "tiles")?, TileSet::load)?;
    if tiles.stats.is_none() {
        return Err(Error::InvalidArgument("tile set is not normalized".into()).into());
    }
    let indices = tiles.indices(cfg.eval_split);
    if indices.is_empty() {
        return Err(Error::InvalidArgument(format!("split {:?} has no tiles", cfg.eval_split)).into());
    }
    let preds = predict_tiles(&model, &tiles, &indices)?;
    let mut total = ConfusionMatrix::new();
    let mut per_tile = Vec::with_capacity(indices.len());
    for (&i, pred) in indices.iter().zip(&preds) {
        let t = &tiles.tiles[i];
        let mut cm = ConfusionMatrix::new();
        cm.add_pixels(&t.label, pred)?;
        total.merge(&cm);
        per_tile.push(TileEvaluation {
            origin_x: t.origin_x,
            origin_y: t.origin_y,
            confusion: cm,
        });
    }
    let report = MetricsReport::from_confusion(&total, UndefinedPolicy::Skip)?;
    write_json(&cfg.out.join("metrics.json"), &report)?;
    fs::write(cfg.out.join("confusion.csv"), confusion_csv(&total))?;
    fs::write(cfg.out.join("confusion_rows.csv"), normalized_csv(&normalize(&total, Axis::Rows)))?;
    fs::write(cfg.out.join("confusion_cols.csv"), normalized_csv(&normalize(&total, Axis::Columns)))?;
    let [rows, cols] = cfg.grid;
    let grid = spatial_miou(&per_tile, tiles.bounds, rows, cols)?;
    write_json(&cfg.out.join("spatial.json"), &grid)?;
    for c in &report.classes {
        eprintln!(
            "{:<10} P {} R {} F1 {} IoU {}",
            c.class,
            fmt(c.metrics.precision),
            fmt(c.metrics.recall),
            fmt(c.metrics.f1),
            fmt(c.metrics.iou)
        );
    }
    eprintln!("macro IoU {}", fmt(report.macro_avg.iou));
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "  -   ".to_string(), |v| format!("{v:.4}"))
}

fn load_stats(path: &Path) -> Result<NormStats> {
    let bytes = read_input(path, |p| Ok(fs::read(p)?))?;
    if bytes.starts_with(b"LDT1") {
        let set = TileSet::decode(&bytes).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        return set
            .stats
            .ok_or_else(|| anyhow!(Error::InvalidArgument(format!("{} is not normalized", path.display()))));
    }
    serde_json::from_slice(&bytes).map_err(|e| {
        Error::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
        .into()
    })
}

fn predict(cfg: &RunConfig) -> Result<()> {
    let model = load_model(required(&cfg.inputs.checkpoint, "checkpoint")?)?;
    let image = read_input(required(&cfg.inputs.raster, "raster")?, read_raster_f32)?;
    let stats = load_stats(required(&cfg.inputs.stats, "stats")?)?;
    let labels = predict_raster(&model, &image, &stats)?;
    write_raster(&cfg.out.join("prediction.json"), &labels, CRS_NOTE)?;
    write_label_png(&cfg.out.join("prediction.png"), &labels.data, labels.width, labels.height)?;
    Ok(())
}
