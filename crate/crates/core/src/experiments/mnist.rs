//! MNIST IDX files.

use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, streams};

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, image after image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

fn be_u32(bytes: &[u8], word: usize) -> Result<u32> {
    let b = bytes.get(4 * word..4 * word + 4).ok_or_else(|| Error::Format("IDX header is truncated".into()))?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!("image file magic {magic}, expected {IMAGE_MAGIC}")));
    }
    let (count, rows, cols) = (be_u32(bytes, 1)? as usize, be_u32(bytes, 2)? as usize, be_u32(bytes, 3)? as usize);
    let need = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != need {
        return Err(Error::Format(format!("image payload has {} bytes, header promises {need}", payload.len())));
    }
    Ok(IdxImages { count, rows, cols, pixels: payload.to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!("label file magic {magic}, expected {LABEL_MAGIC}")));
    }
    let count = be_u32(bytes, 1)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::Format(format!("label payload has {} bytes, header promises {count}", payload.len())));
    }
    if let Some(bad) = payload.iter().find(|&&l| l > 9) {
        return Err(Error::Format(format!("label {bad} outside 0..=9")));
    }
    Ok(payload.to_vec())
}

/// Pixels scaled to [0, 1]. `subset` draws that many images without
/// replacement from the subset stream of `seed`; `None` keeps every image.
pub fn load_mnist(images: &Path, labels: &Path, subset: Option<usize>, seed: u64) -> Result<Dataset> {
    let imgs = parse_idx_images(&std::fs::read(images)?)?;
    let labs = parse_idx_labels(&std::fs::read(labels)?)?;
    if imgs.count != labs.len() {
        return Err(Error::Format(format!("{} images but {} labels", imgs.count, labs.len())));
    }
    let idx: Vec<usize> = match subset {
        None => (0..imgs.count).collect(),
        Some(0) => return Err(Error::domain("MNIST subset size must be positive")),
        Some(n) if n > imgs.count => return Err(Error::domain(format!("subset of {n} from {} images", imgs.count))),
        Some(n) => rand::seq::index::sample(&mut rng::stream(seed, streams::SUBSET), imgs.count, n).into_vec(),
    };
    let xs = idx.iter().map(|&i| imgs.image(i).iter().map(|&p| f64::from(p) / 255.0).collect()).collect();
    let ys = idx.iter().map(|&i| labs[i]).collect();
    Dataset::classification(xs, ys, format!("mnist:{}", images.display()))
}
