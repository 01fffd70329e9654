//! Dataset manifests, the train/validation split and mini-batch ordering.
//!
//! The manifest is a TOML file:
//!
//! ```toml
//! classes = ["happy", "angry", "disgust"]
//! temporal = "uniform"
//! split_seed = 7
//!
//! [[entries]]
//! clip = "clips/s01.mclp"
//! landmarks = "landmarks/s01.txt"
//! label = 0
//! split = "train"
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::sampling::TemporalMode;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Val => "val",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub clip: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<PathBuf>,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Subset>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIndex {
    pub classes: Vec<String>,
    #[serde(default)]
    pub temporal: TemporalMode,
    /// Seed of the generator that produced a synthetic dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_fraction: Option<f64>,
    pub entries: Vec<Entry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetIndex {
    pub fn new(classes: Vec<String>, entries: Vec<Entry>) -> Self {
        DatasetIndex {
            classes,
            temporal: TemporalMode::Uniform,
            generator_seed: None,
            split_seed: None,
            split_fraction: None,
            entries,
            base_dir: PathBuf::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.entries.iter().find(|e| e.label >= self.classes.len()) {
            return Err(Error::ClassOutOfRange {
                class: e.label,
                num_classes: self.classes.len(),
            });
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::malformed("manifest", e))
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut index: DatasetIndex = toml::from_str(text).map_err(|e| Error::malformed("manifest", e))?;
        index.base_dir = base_dir.to_path_buf();
        index.validate()?;
        Ok(index)
    }

    /// Loads a manifest file, or `manifest.toml` inside a directory.
    pub fn load(path: &Path) -> Result<Self> {
        let file = manifest_path(path);
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let base = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = manifest_path(path);
        fs::write(&file, self.to_toml()?).map_err(|e| Error::io(&file, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn is_split(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.split.is_some())
    }

    /// Entry indices of a subset, in manifest order.
    pub fn subset(&self, subset: Subset) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == Some(subset))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_landmarks(&self) -> bool {
        self.entries.iter().all(|e| e.landmarks.is_some())
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.toml")
    } else {
        path.to_path_buf()
    }
}

/// Seeded whole-dataset shuffle; the first `round(fraction * n)` entries go
/// to training and the rest to validation. The split is recorded in the index.
pub fn split_dataset(index: &mut DatasetIndex, fraction: f64, seed: u64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} outside (0, 1)")));
    }
    let n = index.entries.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {n} entries")));
    }
    let n_train = train_count(n, fraction);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (rank, &i) in order.iter().enumerate() {
        index.entries[i].split = Some(if rank < n_train { Subset::Train } else { Subset::Val });
    }
    index.split_seed = Some(seed);
    index.split_fraction = Some(fraction);
    Ok(())
}

pub fn train_count(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).round() as usize
}

/// Splits `0..n` into batches of `batch_size` (the last may be shorter),
/// shuffled by `shuffle_seed` when given.
pub fn batch_order(n: usize, batch_size: usize, shuffle_seed: Option<u64>) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Batches of entry indices for one epoch. Training order is reshuffled by
/// `epoch_seed`; validation order is fixed.
pub fn make_batches(
    index: &DatasetIndex,
    subset: Subset,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let members = index.subset(subset);
    if members.is_empty() {
        return Err(Error::EmptySubset(subset.name().into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let seed = (subset == Subset::Train).then_some(epoch_seed);
    Ok(batch_order(members.len(), batch_size, seed)
        .into_iter()
        .map(|b| b.into_iter().map(|i| members[i]).collect())
        .collect())
}
