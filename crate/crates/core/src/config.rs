//! Flat key/value run configuration shared by every command. Values come
//! from built-in defaults, then an optional TOML file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::OrderModelConfig;
use crate::assembler::PoseModelConfig;
use crate::error::{Error, Result};
use crate::evaluation::{MetricConfig, OrderMode};
use crate::objective::LossWeights;
use crate::synth::dataset::{DatasetConfig, Split};
use crate::synth::{Camera, Category, GenConfig};
use crate::train::TrainConfig;

/// File name of the merged configuration written to output directories.
pub const ECHO_FILE: &str = "config.toml";

/// Which training stage a command runs; selects the stage defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Order,
    Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,

    pub out: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub order_checkpoint: Option<PathBuf>,
    pub gt_order: bool,

    // dataset generation
    pub category: Category,
    pub count: usize,
    pub min_parts: usize,
    pub max_parts: usize,
    pub points_per_part: usize,
    pub raster: usize,
    pub group_rel_tol: f64,

    // training; unset values fall back to the stage defaults
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch: usize,
    pub weight_decay: f64,
    pub decay_every: Option<usize>,
    pub decay_factor: f64,

    // models
    pub dim: usize,
    pub patch: usize,
    pub hidden: usize,
    pub points: usize,
    pub tau: f64,
    pub tau_p: f64,
    pub heads: usize,
    pub ffn: usize,
    pub layers: usize,

    // pose objective
    pub lambda_t: f64,
    pub lambda_c: f64,
    pub lambda_e: f64,
    pub lambda_s: f64,

    // evaluation
    pub mode: OrderMode,
    pub split: Split,
    pub pa_threshold: f64,
    pub scd_scale: f64,
    pub noise_scales: Vec<f64>,
    pub sweep_seeds: u64,
    pub attn_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        let m = MetricConfig::default();
        Self {
            seed: 0,
            workers: 0,
            out: None,
            dataset: None,
            checkpoint: None,
            order_checkpoint: None,
            gt_order: false,
            category: Category::Chair,
            count: 200,
            min_parts: 2,
            max_parts: 20,
            points_per_part: 1000,
            raster: 64,
            group_rel_tol: GenConfig::default().group_rel_tol,
            epochs: None,
            lr: None,
            batch: 16,
            weight_decay: 1e-4,
            decay_every: None,
            decay_factor: 0.9,
            dim: 64,
            patch: 8,
            hidden: 0,
            points: 0,
            tau: 0.07,
            tau_p: 10000.0,
            heads: 4,
            ffn: 128,
            layers: 6,
            lambda_t: w.translation,
            lambda_c: w.chamfer,
            lambda_e: w.point,
            lambda_s: w.shape,
            mode: OrderMode::Predicted,
            split: Split::Test,
            pa_threshold: m.pa_threshold,
            scd_scale: m.scd_scale,
            noise_scales: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0],
            sweep_seeds: 4,
            attn_samples: 8,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the effective configuration into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let path = dir.join(ECHO_FILE);
        fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))
    }

    pub fn gen(&self) -> GenConfig {
        GenConfig {
            points_per_part: self.points_per_part,
            raster_size: self.raster,
            group_rel_tol: self.group_rel_tol,
        }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            category: self.category,
            count: self.count,
            seed: self.seed,
            min_parts: self.min_parts,
            max_parts: self.max_parts,
            gen: self.gen(),
            camera: Camera::default(),
        }
    }

    pub fn train(&self, stage: Stage) -> TrainConfig {
        let (epochs, lr, every) = match stage {
            Stage::Order => (30, 3e-3, 5),
            Stage::Pose => (200, 3e-3, 50),
        };
        TrainConfig {
            epochs: self.epochs.unwrap_or(epochs),
            lr: self.lr.unwrap_or(lr),
            batch: self.batch,
            weight_decay: self.weight_decay,
            decay_every: self.decay_every.unwrap_or(every),
            decay_factor: self.decay_factor,
            seed: self.seed,
        }
    }

    pub fn order_model(&self) -> OrderModelConfig {
        OrderModelConfig {
            dim: self.dim,
            patch: self.patch,
            raster: self.raster,
            tau: self.tau,
            points: self.points,
            hidden: self.hidden,
        }
    }

    pub fn pose_model(&self) -> PoseModelConfig {
        PoseModelConfig {
            dim: self.dim,
            heads: self.heads,
            ffn: self.ffn,
            layers: self.layers,
            patch: self.patch,
            raster: self.raster,
            points: self.points,
            hidden: self.hidden,
            tau_p: self.tau_p,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            translation: self.lambda_t,
            chamfer: self.lambda_c,
            point: self.lambda_e,
            shape: self.lambda_s,
        }
    }

    pub fn metric(&self) -> MetricConfig {
        MetricConfig {
            pa_threshold: self.pa_threshold,
            scd_scale: self.scd_scale,
        }
    }

    /// Named path or a configuration error naming the missing key.
    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing `{key}` (set --{} or `{key}` in the config file)", key.replace('_', "-"))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.epochs = Some(3);
        c.dataset = Some(PathBuf::from("data"));
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_files_keep_defaults_and_reject_typos() {
        let c = RunConfig::from_toml("seed = 9\ncategory = \"table\"\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.category, Category::Table);
        assert_eq!(c.layers, 6);
        assert!(RunConfig::from_toml("epochz = 3").is_err());
    }

    #[test]
    fn stage_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.train(Stage::Order).decay_every, 5);
        assert_eq!(c.train(Stage::Pose).decay_every, 50);
    }
}
