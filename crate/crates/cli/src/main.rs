//! `ldseg`: synthesize data, rasterize labels, tile, train, evaluate and
//! predict.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ldseg::Error;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "ldseg", version, about = "Linear-disturbance segmentation pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 selects the bitwise-reproducible mode.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON run configuration; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic scenes (imagery + vector truth).
    Synth(SynthArgs),
    /// Burn a GeoJSON layer into a label raster on a template grid.
    Rasterize(RasterizeArgs),
    /// Cut image/label rasters into a split, normalized tile set.
    Tile(TileArgs),
    /// Train a model on a tile set.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a tile set.
    Eval(EvalArgs),
    /// Label a whole raster with a checkpoint.
    Predict(PredictArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    scenes: Option<usize>,
    /// Scene side in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Fraction of disturbance pixels.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    buried_fraction: Option<f64>,
    /// Also write a split, normalized tile set with this tile size.
    #[arg(long)]
    tile_size: Option<usize>,
}

#[derive(Args, Debug)]
struct RasterizeArgs {
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// LDR1 raster whose grid the labels are written on.
    #[arg(long)]
    template: Option<PathBuf>,
    /// touch-any (default) or center.
    #[arg(long)]
    mode: Option<ldseg::geodata::RasterizeMode>,
}

#[derive(Args, Debug)]
struct TileArgs {
    /// Image raster; repeat together with --labels for several scenes.
    #[arg(long = "image")]
    images: Vec<PathBuf>,
    #[arg(long = "labels")]
    labels: Vec<PathBuf>,
    #[arg(long)]
    tile_size: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    tiles: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs1: Option<usize>,
    #[arg(long)]
    lr1: Option<f64>,
    #[arg(long)]
    epochs2: Option<usize>,
    #[arg(long)]
    lr2: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// Channel width multiplier.
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    no_augment: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    tiles: Option<PathBuf>,
    /// train, val or test.
    #[arg(long)]
    split: Option<ldseg::geodata::Split>,
    /// Spatial grid as ROWSxCOLS, e.g. 8x8.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; 2]>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    raster: Option<PathBuf>,
    /// Normalization statistics: a stats JSON or a tile set.
    #[arg(long)]
    stats: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid {s:?} is not ROWSxCOLS"))?;
    let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0);
    match (parse(r), parse(c)) {
        (Some(r), Some(c)) => Ok([r, c]),
        _ => Err(format!("grid {s:?} needs two positive integers")),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Config file first, then explicit flags.
fn effective_config(cli: Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Malformed {
                path: p.clone(),
                reason: e.to_string(),
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Malformed {
                path: p.clone(),
                reason: e.to_string(),
            })?
        }
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.common.seed);
    if cli.common.threads.is_some() {
        cfg.threads = cli.common.threads;
    }
    set(&mut cfg.out, cli.common.out);
    match cli.command {
        Command::Synth(a) => {
            cfg.command = "synth".into();
            set(&mut cfg.scenes, a.scenes);
            if let Some(size) = a.size {
                cfg.scene.size = size;
                cfg.scene.origin_y = size as f64 * cfg.scene.pixel_size_m;
            }
            set(&mut cfg.scene.disturbance_density, a.density);
            set(&mut cfg.scene.buried_fraction, a.buried_fraction);
            if a.tile_size.is_some() {
                cfg.synth_tile_size = a.tile_size;
            }
        }
        Command::Rasterize(a) => {
            cfg.command = "rasterize".into();
            if a.vectors.is_some() {
                cfg.inputs.vectors = a.vectors;
            }
            if a.template.is_some() {
                cfg.inputs.template = a.template;
            }
            set(&mut cfg.mode, a.mode);
        }
        Command::Tile(a) => {
            cfg.command = "tile".into();
            if !a.images.is_empty() {
                cfg.inputs.images = a.images;
            }
            if !a.labels.is_empty() {
                cfg.inputs.labels = a.labels;
            }
            set(&mut cfg.tile_size, a.tile_size);
        }
        Command::Train(a) => {
            cfg.command = "train".into();
            if a.tiles.is_some() {
                cfg.inputs.tiles = a.tiles;
            }
            let t = &mut cfg.train;
            set(&mut t.batch_size, a.batch_size);
            set(&mut t.phase1.epochs, a.epochs1);
            set(&mut t.phase1.lr, a.lr1);
            set(&mut t.phase2.epochs, a.epochs2);
            set(&mut t.phase2.lr, a.lr2);
            set(&mut t.patience, a.patience);
            set(&mut t.width_multiplier, a.width);
            if a.max_steps.is_some() {
                t.max_steps = a.max_steps;
            }
            if a.no_augment {
                t.augment = false;
            }
        }
        Command::Eval(a) => {
            cfg.command = "eval".into();
            if a.checkpoint.is_some() {
                cfg.inputs.checkpoint = a.checkpoint;
            }
            if a.tiles.is_some() {
                cfg.inputs.tiles = a.tiles;
            }
            set(&mut cfg.eval_split, a.split);
            set(&mut cfg.grid, a.grid);
        }
        Command::Predict(a) => {
            cfg.command = "predict".into();
            if a.checkpoint.is_some() {
                cfg.inputs.checkpoint = a.checkpoint;
            }
            if a.raster.is_some() {
                cfg.inputs.raster = a.raster;
            }
            if a.stats.is_some() {
                cfg.inputs.stats = a.stats;
            }
        }
    }
    cfg.train.seed = cfg.seed;
    cfg.scene.seed = cfg.seed;
    Ok(cfg)
}

/// Error type to process exit code: 2 bad arguments, 3 malformed input,
/// 4 numeric failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NonFiniteLoss { .. } | Error::NonFiniteGradient { .. }) => 4,
        Some(
            Error::Malformed { .. }
            | Error::Json(_)
            | Error::Truncated(_)
            | Error::NotACheckpoint
            | Error::UnsupportedVersion(_)
            | Error::InvalidGeometry { .. }
            | Error::LabelOutOfRange { .. }
            | Error::ParameterShapeMismatch { .. }
            | Error::MissingParameter(_)
            | Error::Io(_),
        ) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = effective_config(cli).and_then(|cfg| {
        if let Some(n) = cfg.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global()
                .map_err(|e| anyhow::anyhow!(Error::InvalidArgument(e.to_string())))?;
        }
        commands::run(&cfg)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parses_rows_by_cols() {
        assert_eq!(parse_grid("8x8"), Ok([8, 8]));
        assert_eq!(parse_grid("3X5"), Ok([3, 5]));
        assert!(parse_grid("0x4").is_err());
        assert!(parse_grid("8").is_err());
        assert!(parse_grid("ax2").is_err());
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut file_cfg = RunConfig::default();
        file_cfg.seed = 5;
        file_cfg.train.patience = 3;
        file_cfg.train.batch_size = 8;
        std::fs::write(&path, serde_json::to_string(&file_cfg).unwrap()).unwrap();
        let cli = Cli::parse_from(["ldseg", "--config", path.to_str().unwrap(), "train", "--patience", "7"]);
        let cfg = effective_config(cli).unwrap();
        assert_eq!(cfg.command, "train");
        assert_eq!((cfg.seed, cfg.train.seed), (5, 5));
        assert_eq!(cfg.train.patience, 7);
        assert_eq!(cfg.train.batch_size, 8);
    }
}
