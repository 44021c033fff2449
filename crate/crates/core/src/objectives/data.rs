use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::compression::{Purpose, RngStream};
use crate::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Labeled samples with row-major features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dataset("feature dimension must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Dataset(format!(
                "{} feature values for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if classes < 2 {
            return Err(Error::Dataset("need at least two classes".into()));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Dataset(format!("label {y} out of range for {classes} classes")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(Dataset {
            features,
            labels,
            dim,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    /// Appends a constant 1 feature to every sample.
    pub fn with_bias(&self) -> Dataset {
        let dim = self.dim + 1;
        let mut features = Vec::with_capacity(self.len() * dim);
        for j in 0..self.len() {
            features.extend_from_slice(self.sample(j));
            features.push(1.0);
        }
        Dataset {
            features,
            labels: self.labels.clone(),
            dim,
            classes: self.classes,
        }
    }

    /// The samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &j in indices {
            features.extend_from_slice(self.sample(j));
        }
        Dataset {
            features,
            labels: indices.iter().map(|&j| self.labels[j]).collect(),
            dim: self.dim,
            classes: self.classes,
        }
    }

    /// Isotropic Gaussian clusters, one per class. Class means are drawn
    /// from `N(0, separation² I)`; samples add `N(0, noise² I)`. Labels cycle
    /// `0, 1, …, C−1, 0, …` so the natural order is already mixed.
    pub fn gaussian_mixture(
        classes: usize,
        per_class: usize,
        dim: usize,
        separation: f64,
        noise: f64,
        seed: u64,
    ) -> Result<Dataset> {
        if per_class == 0 {
            return Err(Error::Dataset("per_class must be positive".into()));
        }
        let mut rng = RngStream::new(seed, 0, 0, Purpose::Data).rng();
        let means: Vec<f64> = (0..classes * dim)
            .map(|_| separation * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = classes * per_class;
        let mut features = Vec::with_capacity(m * dim);
        let mut labels = Vec::with_capacity(m);
        for j in 0..m {
            let c = j % classes;
            for k in 0..dim {
                features.push(means[c * dim + k] + noise * rng.sample::<f64, _>(StandardNormal));
            }
            labels.push(c);
        }
        Dataset::new(features, labels, dim, classes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PartitionMode {
    /// Contiguous blocks of the label-sorted order.
    #[default]
    LabelSorted,
    /// Seeded random permutation split into equal blocks.
    Shuffled { seed: u64 },
}

/// Sample indices owned by each agent. Every sample belongs to exactly one agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPartition {
    pub shards: Vec<Vec<usize>>,
    pub mode: PartitionMode,
}

impl DataPartition {
    pub fn num_agents(&self) -> usize {
        self.shards.len()
    }

    /// True when every index in `0..samples` appears in exactly one shard.
    pub fn is_exact(&self, samples: usize) -> bool {
        let mut seen = vec![false; samples];
        for &j in self.shards.iter().flatten() {
            if j >= samples || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

pub fn partition_by_label(labels: &[usize], n: usize, mode: PartitionMode) -> Result<DataPartition> {
    let m = labels.len();
    if n == 0 || n > m {
        return Err(Error::Dataset(format!("cannot split {m} samples across {n} agents")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    match mode {
        PartitionMode::LabelSorted => order.sort_by_key(|&j| (labels[j], j)),
        PartitionMode::Shuffled { seed } => {
            order.shuffle(&mut RngStream::new(seed, 0, 0, Purpose::Partition).rng())
        }
    }
    let (base, extra) = (m / n, m % n);
    let mut shards = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let len = base + usize::from(i < extra);
        let mut shard = order[start..start + len].to_vec();
        if matches!(mode, PartitionMode::Shuffled { .. }) {
            shard.sort_unstable();
        }
        shards.push(shard);
        start += len;
    }
    Ok(DataPartition { shards, mode })
}

/// Header of an IDX image file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdxImageHeader {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Dataset(format!("{what}: truncated header")))
}

/// Validates the magic number and reads the dimensions of an image file.
pub fn parse_idx_image_header(bytes: &[u8]) -> Result<IdxImageHeader> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Dataset(format!("images: bad magic {magic:#010x}")));
    }
    Ok(IdxImageHeader {
        count: be_u32(bytes, 4, "images")? as usize,
        rows: be_u32(bytes, 8, "images")? as usize,
        cols: be_u32(bytes, 12, "images")? as usize,
    })
}

/// Parses an IDX image/label pair. Pixels are scaled to `[0, 1]` by `/255`;
/// the class count is `max label + 1` (at least 2).
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let h = parse_idx_image_header(images)?;
    let dim = h.rows * h.cols;
    let pixels = &images[16..];
    if pixels.len() != h.count * dim {
        return Err(Error::Dataset(format!(
            "images: expected {} pixel bytes, found {}",
            h.count * dim,
            pixels.len()
        )));
    }
    let magic = be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Dataset(format!("labels: bad magic {magic:#010x}")));
    }
    let count = be_u32(labels, 4, "labels")? as usize;
    let raw = &labels[8..];
    if raw.len() != count {
        return Err(Error::Dataset(format!(
            "labels: expected {count} bytes, found {}",
            raw.len()
        )));
    }
    if count != h.count {
        return Err(Error::Dataset(format!(
            "{} images but {count} labels",
            h.count
        )));
    }
    let labels: Vec<usize> = raw.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().copied().max().map_or(2, |m| (m + 1).max(2));
    let features = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    Dataset::new(features, labels, dim, classes)
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;
    parse_idx(&img, &lab)
}

/// Serializes raw pixel rows into an IDX image file.
pub fn encode_idx_images(pixels: &[u8], count: usize, rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols, "pixel buffer does not match shape");
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
