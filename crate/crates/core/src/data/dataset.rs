use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pset::{load_pset, save_pset};
use super::shapes::{make_shape, ShapeFamily, ShapeSpec};
use crate::error::{Error, Result};
use crate::model::PointSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<PointSet>,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl Dataset {
    /// Checks that every sample shares one dimension and has a valid label.
    pub fn new(samples: Vec<PointSet>, class_names: Vec<String>, split: Split) -> Result<Self> {
        if let Some(first) = samples.first() {
            let d = first.dim();
            for ps in &samples {
                if ps.dim() != d {
                    return Err(Error::Data(format!(
                        "sample '{}' has dimension {} but '{}' has {d}",
                        ps.name(),
                        ps.dim(),
                        first.name()
                    )));
                }
                if ps.label() >= class_names.len() {
                    return Err(Error::Data(format!(
                        "sample '{}' has label {} with only {} classes",
                        ps.name(),
                        ps.label(),
                        class_names.len()
                    )));
                }
            }
        }
        Ok(Dataset {
            samples,
            class_names,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(PointSet::dim)
    }

    /// Loads the entries of `split` listed in a manifest; paths are relative
    /// to the manifest's directory.
    pub fn load(manifest_path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
        let manifest_path = manifest_path.as_ref();
        let manifest = Manifest::load(manifest_path)?;
        let root = manifest_path.parent().unwrap_or(Path::new("."));
        let samples = manifest
            .entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| {
                let ps = load_pset(root.join(&e.path))?;
                if ps.label() != e.label {
                    return Err(Error::Data(format!(
                        "{} stores label {} but the manifest says {}",
                        e.path,
                        ps.label(),
                        e.label
                    )));
                }
                Ok(ps)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples, manifest.classes, split)
    }
}

/// Centroid to the origin, then scale so the farthest point has norm 1. A
/// set whose points all coincide maps to zeros.
pub fn normalize(ps: &PointSet) -> PointSet {
    let c = ps.centroid();
    let mut m = ps.coords().clone();
    let mut max_norm: f64 = 0.0;
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        for (v, cv) in row.iter_mut().zip(&c) {
            *v -= cv;
        }
        max_norm = max_norm.max(row.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    if max_norm > 0.0 {
        for v in m.data_mut() {
            *v /= max_norm;
        }
    }
    PointSet::new(ps.ids().to_vec(), m, ps.label(), ps.name()).expect("finite, same ids")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: usize,
    pub split: Split,
}

/// Index of a dataset directory: class names and one entry per file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub classes: Vec<String>,
    pub points: usize,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub classes: Vec<ShapeFamily>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub points: usize,
    pub seed: u64,
    /// Relative half-width of the per-sample scale jitter.
    pub scale_jitter: f64,
    /// Relative half-width of the per-sample aspect jitter.
    pub aspect_jitter: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            classes: ShapeFamily::ALL.to_vec(),
            train_per_class: 200,
            test_per_class: 50,
            points: 256,
            seed: 0,
            scale_jitter: 0.2,
            aspect_jitter: 0.2,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::Parameter("points per sample must be positive".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Parameter("no shape classes selected".into()));
        }
        if !(0.0..0.75).contains(&self.scale_jitter) || !(0.0..0.75).contains(&self.aspect_jitter) {
            return Err(Error::Parameter("jitter must lie in [0, 0.75)".into()));
        }
        Ok(())
    }
}

/// One generated sample before it is written anywhere.
#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub split: Split,
    pub class_index: usize,
    pub index: usize,
    pub spec: ShapeSpec,
    pub points: PointSet,
}

impl GeneratedSample {
    pub fn file_name(&self) -> String {
        format!("{}_{:04}.pset", self.spec.family.name(), self.index)
    }
}

/// Generates the normalized synthetic dataset. Each sample is a pure
/// function of `(seed, split, class, index)`.
pub fn generate(config: &GenConfig) -> Result<Vec<GeneratedSample>> {
    config.validate()?;
    let mut jobs = Vec::new();
    for (split, per_class) in [(Split::Train, config.train_per_class), (Split::Test, config.test_per_class)] {
        for class_index in 0..config.classes.len() {
            for index in 0..per_class {
                jobs.push((split, class_index, index));
            }
        }
    }
    jobs.par_iter()
        .map(|&(split, class_index, index)| {
            let family = config.classes[class_index];
            let stream = ((split == Split::Test) as u64) << 62
                | (family.index() as u64) << 40
                | index as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(stream);
            let scale = 1.0 + config.scale_jitter * rng.gen_range(-1.0..=1.0);
            let aspect = 1.0 + config.aspect_jitter * rng.gen_range(-1.0..=1.0);
            let spec = ShapeSpec::new(family, scale, aspect)?;
            let raw = make_shape(&spec, config.points, rng.gen())?;
            let name = format!("{}_{:04}", family.name(), index);
            let points = normalize(&raw.with_label(class_index));
            let points = PointSet::new(points.ids().to_vec(), points.coords().clone(), class_index, name)?;
            Ok(GeneratedSample {
                split,
                class_index,
                index,
                spec,
                points,
            })
        })
        .collect()
}

/// Writes `generate(config)` under `outdir` as `<split>/<family>_<index>.pset`
/// plus `manifest.json`, and returns the manifest path.
pub fn write_dataset(config: &GenConfig, outdir: impl AsRef<Path>) -> Result<PathBuf> {
    let outdir = outdir.as_ref();
    let samples = generate(config)?;
    for split in [Split::Train, Split::Test] {
        let dir = outdir.join(split.to_string());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut entries = Vec::with_capacity(samples.len());
    for s in &samples {
        let rel = format!("{}/{}", s.split, s.file_name());
        save_pset(&s.points, outdir.join(&rel))?;
        entries.push(ManifestEntry {
            path: rel,
            label: s.class_index,
            split: s.split,
        });
    }
    let manifest = Manifest {
        classes: config.classes.iter().map(|c| c.name().to_string()).collect(),
        points: config.points,
        entries,
    };
    let path = outdir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Splits generated samples into train and test datasets.
pub fn into_datasets(config: &GenConfig, samples: Vec<GeneratedSample>) -> (Dataset, Dataset) {
    let names: Vec<String> = config.classes.iter().map(|c| c.name().to_string()).collect();
    let (train, test): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| s.split == Split::Train);
    let pick = |v: Vec<GeneratedSample>| v.into_iter().map(|s| s.points).collect();
    (
        Dataset {
            samples: pick(train),
            class_names: names.clone(),
            split: Split::Train,
        },
        Dataset {
            samples: pick(test),
            class_names: names,
            split: Split::Test,
        },
    )
}
