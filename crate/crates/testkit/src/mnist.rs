//! IDX-format MNIST reader.

use std::fs;
use std::path::{Path, PathBuf};

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

/// Images scaled to [0, 1], one `PIXELS`-long row per image.
#[derive(Debug, Clone)]
pub struct Split {
    pub images: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Indices of every image with `label`, in file order.
    pub fn indices_of(&self, label: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

/// `$CNNSLICER_MNIST_DIR`, else `data/mnist` at the workspace root.
pub fn data_dir() -> PathBuf {
    std::env::var_os("CNNSLICER_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| crate::workspace_root().join("data").join("mnist"))
}

fn be_u32(b: &[u8], at: usize) -> usize {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]]) as usize
}

fn read_idx(path: &Path, magic: usize) -> Result<(Vec<usize>, Vec<u8>), String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if bytes.len() < 8 || be_u32(&bytes, 0) != magic {
        return Err(format!("{}: not an IDX file with magic {magic:#x}", path.display()));
    }
    let ndim = magic & 0xff;
    let dims: Vec<usize> = (0..ndim).map(|d| be_u32(&bytes, 4 + 4 * d)).collect();
    let start = 4 + 4 * ndim;
    let len: usize = dims.iter().product();
    if bytes.len() != start + len {
        return Err(format!("{}: payload length mismatch", path.display()));
    }
    Ok((dims, bytes[start..].to_vec()))
}

pub fn load_split(dir: &Path, prefix: &str) -> Result<Split, String> {
    let (idims, pixels) = read_idx(&dir.join(format!("{prefix}-images-idx3-ubyte")), 0x0803)?;
    let (ldims, labels) = read_idx(&dir.join(format!("{prefix}-labels-idx1-ubyte")), 0x0801)?;
    if idims[1..] != [SIDE, SIDE] || idims[0] != ldims[0] {
        return Err(format!("unexpected MNIST dimensions {idims:?} / {ldims:?}"));
    }
    Ok(Split {
        images: pixels.into_iter().map(|p| f32::from(p) / 255.0).collect(),
        labels,
    })
}

pub fn train() -> Result<Split, String> {
    load_split(&data_dir(), "train")
}

pub fn test() -> Result<Split, String> {
    load_split(&data_dir(), "t10k")
}
