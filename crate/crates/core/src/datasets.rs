//! IDX image datasets, complex inputs and synthetic regression data.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::linalg::CMatrix;
use crate::network::{NetOutput, Network, Shape, Targets};
use crate::rng;
use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn check_header(bytes: &[u8], path: &Path, magic: u32, header: usize) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            found: bytes.len(),
            expected: header,
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::IdxMagic {
            path: path.to_path_buf(),
            found,
            expected: magic,
        });
    }
    if bytes.len() < header {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            found: bytes.len(),
            expected: header,
        });
    }
    Ok(())
}

fn check_payload(bytes: &[u8], path: &Path, expected: usize) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            found: bytes.len(),
            expected,
        });
    }
    if bytes.len() > expected {
        return Err(Error::InvalidInput(format!(
            "{}: {} trailing bytes after IDX payload",
            path.display(),
            bytes.len() - expected
        )));
    }
    Ok(())
}

/// Parses image-file bytes; `path` only labels errors.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    check_header(bytes, path, IMAGE_MAGIC, 16)?;
    let (count, rows, cols) = (
        be_u32(bytes, 4) as usize,
        be_u32(bytes, 8) as usize,
        be_u32(bytes, 12) as usize,
    );
    check_payload(bytes, path, 16 + count * rows * cols)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    check_header(bytes, path, LABEL_MAGIC, 8)?;
    let count = be_u32(bytes, 4) as usize;
    check_payload(bytes, path, 8 + count)?;
    Ok(bytes[8..].to_vec())
}

pub fn idx_images_bytes(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn idx_labels_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// One sample per row, flattened in `shape` order.
    pub inputs: CMatrix,
    pub shape: Shape,
    pub targets: Targets,
    pub split: Split,
    /// Number of classes for labelled data, 0 for regression.
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Labels(l) => Some(l),
            Targets::Complex(_) => None,
        }
    }

    /// Rows `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let d = self.inputs.cols();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.inputs.row(i));
        }
        let inputs = CMatrix::new(indices.len(), d, data).expect("row lengths agree");
        let targets = match &self.targets {
            Targets::Labels(l) => Targets::Labels(indices.iter().map(|&i| l[i]).collect()),
            Targets::Complex(m) => {
                let c = m.cols();
                let mut data = Vec::with_capacity(indices.len() * c);
                for &i in indices {
                    data.extend_from_slice(m.row(i));
                }
                Targets::Complex(CMatrix::new(indices.len(), c, data).expect("row lengths agree"))
            }
        };
        Dataset {
            inputs,
            shape: self.shape,
            targets,
            split: self.split,
            classes: self.classes,
        }
    }

    /// Re-encodes an image dataset as IDX image and label bytes.
    pub fn to_idx(&self) -> Result<(Vec<u8>, Vec<u8>)> {
        let labels = self
            .labels()
            .ok_or_else(|| Error::InvalidInput("regression data has no IDX form".into()))?;
        if self.shape.channels != 1 {
            return Err(Error::InvalidInput(format!("IDX images are single-channel, got {}", self.shape)));
        }
        let mut pixels = Vec::with_capacity(self.inputs.data().len());
        for z in self.inputs.data() {
            let v = (z.re * 255.0).round();
            if z.im != 0.0 || !(0.0..=255.0).contains(&v) || v / 255.0 != z.re {
                return Err(Error::InvalidInput(format!("{z} is not an IDX pixel value")));
            }
            pixels.push(v as u8);
        }
        let labels: Vec<u8> = labels
            .iter()
            .map(|&l| u8::try_from(l).map_err(|_| Error::InvalidInput(format!("label {l} exceeds 255"))))
            .collect::<Result<_>>()?;
        let images = IdxImages {
            count: self.len(),
            rows: self.shape.height,
            cols: self.shape.width,
            pixels,
        };
        Ok((idx_images_bytes(&images), idx_labels_bytes(&labels)))
    }
}

/// Builds a labelled dataset from parsed IDX contents; pixels become
/// `p / 255 + 0i`.
pub fn dataset_from_idx(images: &IdxImages, labels: &[u8], split: Split) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::IdxCountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let real: Vec<f64> = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let inputs = to_complex(&real, images.count, images.rows * images.cols)?;
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    Ok(Dataset {
        inputs,
        shape: Shape::new(1, images.rows, images.cols),
        targets: Targets::Labels(labels),
        split,
        classes,
    })
}

pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let images = parse_idx_images(&std::fs::read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?, labels_path)?;
    dataset_from_idx(&images, &labels, split)
}

/// Real `rows x cols` data as complex values with zero imaginary part.
pub fn to_complex(real: &[f64], rows: usize, cols: usize) -> Result<CMatrix> {
    if real.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("real inputs"));
    }
    CMatrix::from_real(rows, cols, real)
}

/// `n` inputs with i.i.d. standard complex Gaussian entries, labelled by
/// the teacher's output plus complex Gaussian noise of scale `noise`.
pub fn synthetic_regression(n: usize, d: usize, teacher: &Network, noise: f64, seed: u64) -> Result<Dataset> {
    if teacher.input_shape().len() != d {
        return Err(Error::DimensionMismatch(format!(
            "teacher takes {} inputs, data has {d}",
            teacher.input_shape().len()
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidInput(format!("noise scale must be finite and >= 0, got {noise}")));
    }
    let mut rng = rng::seeded(seed);
    let inputs = CMatrix::random(n, d, &mut rng);
    let NetOutput::Complex(clean) = teacher.forward(&inputs)? else {
        return Err(Error::InvalidInput("teacher must produce complex outputs, not class scores".into()));
    };
    let mut noisy = clean;
    let mut noise_rng = rng::derived(seed, 1);
    for y in noisy.data_mut() {
        *y += rng::complex_normal(&mut noise_rng) * noise;
    }
    Ok(Dataset {
        inputs,
        shape: teacher.input_shape(),
        targets: Targets::Complex(noisy),
        split: Split::Train,
        classes: 0,
    })
}

/// Seeded subsample of `n_keep` rows in their original order. Labelled data
/// is stratified: class quotas are proportional by largest remainder, so
/// each class count is within one of its exact share.
pub fn subsample(ds: &Dataset, n_keep: usize, seed: u64) -> Result<Dataset> {
    let n = ds.len();
    if n_keep > n {
        return Err(Error::InvalidInput(format!("cannot keep {n_keep} of {n} samples")));
    }
    let mut rng = rng::seeded(seed);
    let mut keep = match ds.labels() {
        None => {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all.truncate(n_keep);
            all
        }
        Some(labels) => {
            let classes = labels.iter().max().map_or(0, |&m| m + 1);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
            for (i, &l) in labels.iter().enumerate() {
                members[l].push(i);
            }
            let mut quota: Vec<usize> = members.iter().map(|m| m.len() * n_keep / n).collect();
            let mut left = n_keep - quota.iter().sum::<usize>();
            let mut order: Vec<usize> = (0..classes).collect();
            // Largest remainder first; ties go to the lower class.
            order.sort_by_key(|&c| std::cmp::Reverse(members[c].len() * n_keep % n));
            for c in order {
                if left == 0 {
                    break;
                }
                if !(members[c].len() * n_keep).is_multiple_of(n) {
                    quota[c] += 1;
                    left -= 1;
                }
            }
            let mut keep = Vec::with_capacity(n_keep);
            for (c, m) in members.iter_mut().enumerate() {
                m.shuffle(&mut rng);
                keep.extend_from_slice(&m[..quota[c]]);
            }
            keep
        }
    };
    keep.sort_unstable();
    Ok(ds.select(&keep))
}
