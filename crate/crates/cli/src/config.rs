//! The serializable union of everything a command reads.

use std::path::PathBuf;

use ldseg::geodata::{RasterizeMode, Split, SplitFractions};
use ldseg::synth::SceneSpec;
use ldseg::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Inputs {
    pub vectors: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub images: Vec<PathBuf>,
    pub labels: Vec<PathBuf>,
    pub tiles: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub raster: Option<PathBuf>,
    pub stats: Option<PathBuf>,
}

/// Effective configuration of one run. Written as `config.json` next to the
/// outputs; passing it back with `--config` repeats the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub inputs: Inputs,
    pub scenes: usize,
    pub scene: SceneSpec,
    pub tile_size: usize,
    /// When set, `synth` also writes a ready tile set at this tile size.
    pub synth_tile_size: Option<usize>,
    pub split_fractions: SplitFractions,
    pub mode: RasterizeMode,
    pub train: TrainConfig,
    pub eval_split: Split,
    pub grid: [usize; 2],
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            seed: 0,
            threads: None,
            out: PathBuf::from("out"),
            inputs: Inputs::default(),
            scenes: 1,
            scene: SceneSpec::default(),
            tile_size: 224,
            synth_tile_size: None,
            split_fractions: SplitFractions::default(),
            mode: RasterizeMode::TouchAny,
            train: TrainConfig::default(),
            eval_split: Split::Test,
            grid: [8, 8],
        }
    }
}

impl RunConfig {
    /// Single-threaded runs are the reproducible ones.
    pub fn reproducible(&self) -> bool {
        self.threads == Some(1)
    }
}
