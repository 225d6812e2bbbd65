use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use setsel::data::{Dataset, Split};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(CliError::Config(format!("precision must be f32 or f64, got '{s}'"))),
        }
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Global {
    pub seed: u64,
    pub precision: Precision,
    pub threads: Option<usize>,
}

/// The resolved parameters of one invocation, written as `config.json`
/// beside its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig<P> {
    pub command: String,
    pub version: String,
    pub global: Global,
    pub params: P,
}

impl<P: Serialize> RunConfig<P> {
    pub fn new(command: &str, global: &Global, params: P) -> Self {
        RunConfig {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            global: global.clone(),
            params,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        self.write_to(dir.join("config.json"))
    }

    pub fn write_to(&self, path: PathBuf) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(self).map_err(setsel::Error::from)? + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Accepts a dataset directory or its manifest.
pub fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("manifest.json")
    } else {
        data.to_path_buf()
    }
}

pub fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(CliError::Config(format!("split must be train or test, got '{s}'"))),
    }
}

/// `limit` samples spread evenly over the dataset, in dataset order.
pub fn spread(dataset: Dataset, limit: Option<usize>) -> Result<Dataset> {
    if dataset.is_empty() {
        return Err(setsel::Error::Data(format!("the {} split is empty", dataset.split)).into());
    }
    let n = dataset.len();
    let samples = match limit {
        Some(0) => return Err(CliError::Config("--limit must be positive".into())),
        Some(l) if l < n => (0..l).map(|i| dataset.samples[i * n / l].clone()).collect(),
        _ => dataset.samples,
    };
    Ok(Dataset { samples, ..dataset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use setsel::model::PointSet;
    use setsel::tensor::Matrix;

    #[test]
    fn spread_picks_evenly() {
        let samples = (0..10)
            .map(|i| PointSet::from_coords(Matrix::zeros(1, 3), 0, format!("s{i}")).unwrap())
            .collect();
        let d = Dataset::new(samples, vec!["a".into()], Split::Test).unwrap();
        let names: Vec<String> = spread(d.clone(), Some(4))
            .unwrap()
            .samples
            .iter()
            .map(|p| p.name().to_string())
            .collect();
        assert_eq!(names, ["s0", "s2", "s5", "s7"]);
        assert_eq!(spread(d.clone(), Some(20)).unwrap().len(), 10);
        assert!(spread(d, Some(0)).is_err());
    }
}
