//! On-disk datasets: a JSON manifest plus per-sample point clouds, pose
//! metadata and PGM drawings.
//!
//! ```text
//! <root>/manifest.json
//! <root>/samples/<id>/meta.json
//! <root>/samples/<id>/part_00.pcld ...
//! <root>/samples/<id>/step_00.pgm ...
//! <root>/samples/<id>/diff_00.pgm ...
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_manual, Camera, Category, Furniture, GenConfig, ManualSample, Raster};
use crate::assignment::Order;
use crate::error::{Error, Result};
use crate::geometry::{read_pcld_file, write_pcld_file, EquivalenceGroups, Pose};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub category: Category,
    pub n_parts: usize,
    pub seed: u64,
    pub split: Split,
    /// Paths relative to the dataset root.
    pub meta: String,
    pub parts: Vec<String>,
    pub steps: Vec<String>,
    pub diffs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub category: Category,
    pub seed: u64,
    pub gen: GenConfig,
    pub camera: Camera,
    pub samples: Vec<SampleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleMeta {
    id: String,
    category: Category,
    seed: u64,
    gt_order: Vec<usize>,
    groups: Vec<Vec<usize>>,
    gt_poses: Vec<Pose>,
    camera: Camera,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub category: Category,
    pub count: usize,
    pub seed: u64,
    pub min_parts: usize,
    pub max_parts: usize,
    pub gen: GenConfig,
    pub camera: Camera,
}

impl DatasetConfig {
    pub fn new(category: Category, count: usize, seed: u64) -> Self {
        Self {
            category,
            count,
            seed,
            min_parts: 2,
            max_parts: super::MAX_PARTS,
            gen: GenConfig::default(),
            camera: Camera::default(),
        }
    }
}

/// SplitMix64 finalizer; spreads consecutive candidate indices over seeds.
pub fn sample_seed(dataset_seed: u64, index: u64) -> u64 {
    let mut z = dataset_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 80/10/10 split of `n` items in seed order: `(train, val)` counts.
pub fn split_sizes(n: usize) -> (usize, usize) {
    let train = n * 8 / 10;
    let val = n / 10;
    (train, val)
}

/// Candidates are generated in fixed-size batches so the accepted set does not
/// depend on how many worker threads run.
const BATCH: usize = 32;
const MAX_CANDIDATES_PER_SAMPLE: usize = 50;

/// Generates manuals until `count` samples with an accepted part count exist.
pub fn generate_samples(cfg: &DatasetConfig) -> Result<Vec<ManualSample>> {
    if cfg.min_parts > cfg.max_parts {
        return Err(Error::Config(format!(
            "min_parts {} exceeds max_parts {}",
            cfg.min_parts, cfg.max_parts
        )));
    }
    let mut out = Vec::with_capacity(cfg.count);
    let mut next = 0u64;
    let limit = (cfg.count.max(1) * MAX_CANDIDATES_PER_SAMPLE) as u64;
    while out.len() < cfg.count {
        if next >= limit {
            return Err(Error::Config(format!(
                "could not find {} {} samples with {}..={} parts",
                cfg.count, cfg.category, cfg.min_parts, cfg.max_parts
            )));
        }
        let batch: Vec<Result<ManualSample>> = (next..next + BATCH as u64)
            .into_par_iter()
            .map(|k| generate_manual(cfg.category, sample_seed(cfg.seed, k), &cfg.gen, &cfg.camera))
            .collect();
        next += BATCH as u64;
        for s in batch {
            let s = s?;
            let n = s.furniture.num_parts();
            if out.len() < cfg.count && (cfg.min_parts..=cfg.max_parts).contains(&n) {
                out.push(s);
            }
        }
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes one sample's files under `root` and returns its manifest entry.
pub fn write_sample(root: &Path, id: &str, split: Split, s: &ManualSample) -> Result<SampleEntry> {
    let rel = format!("samples/{id}");
    let dir = root.join(&rel);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let f = &s.furniture;
    let meta = SampleMeta {
        id: id.to_string(),
        category: f.category,
        seed: f.seed,
        gt_order: s.gt_order.sigma.clone(),
        groups: f.groups.groups().to_vec(),
        gt_poses: f.gt_poses.clone(),
        camera: s.camera,
    };
    let meta_rel = format!("{rel}/meta.json");
    write_json(&root.join(&meta_rel), &meta)?;
    let mut parts = Vec::new();
    for (i, c) in f.parts.iter().enumerate() {
        let p = format!("{rel}/part_{i:02}.pcld");
        write_pcld_file(&root.join(&p), c)?;
        parts.push(p);
    }
    let save = |prefix: &str, rs: &[Raster]| -> Result<Vec<String>> {
        rs.iter()
            .enumerate()
            .map(|(j, r)| {
                let p = format!("{rel}/{prefix}_{j:02}.pgm");
                r.save_pgm(&root.join(&p))?;
                Ok(p)
            })
            .collect()
    };
    let steps = save("step", &s.steps)?;
    let diffs = save("diff", &s.diffs)?;
    Ok(SampleEntry {
        id: id.to_string(),
        category: f.category,
        n_parts: f.num_parts(),
        seed: f.seed,
        split,
        meta: meta_rel,
        parts,
        steps,
        diffs,
    })
}

/// Generates and writes a full dataset; samples are split 80/10/10 after
/// sorting by seed.
pub fn build_dataset(cfg: &DatasetConfig, root: &Path) -> Result<Manifest> {
    let mut samples = generate_samples(cfg)?;
    samples.sort_by_key(|s| s.furniture.seed);
    let (n_train, n_val) = split_sizes(samples.len());
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let entries = samples
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let split = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            write_sample(root, &format!("{}_{k:05}", cfg.category), split, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        category: cfg.category,
        seed: cfg.seed,
        gen: cfg.gen,
        camera: cfg.camera,
        samples: entries,
    };
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// A dataset opened from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&root.join(MANIFEST_FILE))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::format(
                root.join(MANIFEST_FILE),
                format!("unsupported manifest version {}", manifest.version),
            ));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn entries(&self, split: Split) -> Vec<&SampleEntry> {
        self.manifest.samples.iter().filter(|e| e.split == split).collect()
    }

    pub fn load(&self, e: &SampleEntry) -> Result<ManualSample> {
        load_sample(&self.root, e)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<ManualSample>> {
        self.entries(split).into_par_iter().map(|e| self.load(e)).collect()
    }
}

pub fn load_sample(root: &Path, e: &SampleEntry) -> Result<ManualSample> {
    let meta_path = root.join(&e.meta);
    let meta: SampleMeta = read_json(&meta_path)?;
    let parts = e
        .parts
        .iter()
        .map(|p| read_pcld_file(&root.join(p)))
        .collect::<Result<Vec<_>>>()?;
    let load = |ps: &[String]| -> Result<Vec<Raster>> { ps.iter().map(|p| Raster::load_pgm(&root.join(p))).collect() };
    let steps = load(&e.steps)?;
    let diffs = load(&e.diffs)?;
    let bad = |reason: String| Error::format(&meta_path, reason);
    let n = parts.len();
    if meta.gt_poses.len() != n || steps.len() != n || diffs.len() != n || meta.gt_order.len() != n {
        return Err(bad(format!("inconsistent part count (expected {n})")));
    }
    for p in &meta.gt_poses {
        p.validate().map_err(|err| bad(err.to_string()))?;
    }
    let groups = EquivalenceGroups::new(meta.groups).map_err(|err| bad(err.to_string()))?;
    if groups.num_parts() != n {
        return Err(bad("groups do not cover all parts".into()));
    }
    let gt_order = Order::new(meta.gt_order).map_err(|err| bad(err.to_string()))?;
    Ok(ManualSample {
        furniture: Furniture {
            parts,
            gt_poses: meta.gt_poses,
            category: meta.category,
            groups,
            seed: meta.seed,
        },
        camera: meta.camera,
        steps,
        diffs,
        gt_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_80_10_10() {
        assert_eq!(split_sizes(500), (400, 50));
        assert_eq!(split_sizes(10), (8, 1));
    }

    #[test]
    fn seeds_are_distinct() {
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|k| sample_seed(1, k)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(sample_seed(1, 0), sample_seed(2, 0));
    }

    #[test]
    fn round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = DatasetConfig::new(Category::Chair, 5, 3);
        cfg.gen.points_per_part = 32;
        cfg.gen.raster_size = 32;
        cfg.min_parts = 4;
        cfg.max_parts = 10;
        let m = build_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(m.samples.len(), 5);
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.manifest, m);
        let fresh = generate_samples(&cfg).unwrap();
        for e in &m.samples {
            let s = ds.load(e).unwrap();
            assert!((4..=10).contains(&s.furniture.num_parts()));
            let orig = fresh.iter().find(|f| f.furniture.seed == e.seed).unwrap();
            assert_eq!(&s, orig);
        }
    }
}
