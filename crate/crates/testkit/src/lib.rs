//! Fixtures and reference implementations shared by the test suites.
//!
//! Nothing here depends on the analysis library: the NPY writer, the
//! forward pass, the oracles and the trainer are separate implementations
//! so tests compare two independent computations.

pub mod dump;
pub mod mnist;
pub mod npy;
pub mod oracle;
pub mod train;

use std::fs::{self, File};
use std::path::{Path, PathBuf};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .expect("crates/testkit lives two levels below the workspace root")
        .to_path_buf()
}

pub const REFERENCE_RUN_ID: &str = "mnist-reference";

/// Directory of the seeded MNIST reference run: `$CNNSLICER_REFERENCE_RUN`,
/// else `target/reference-run` in the workspace. Trains and writes it on
/// first use; concurrent callers wait on a file lock.
pub fn reference_run() -> Result<PathBuf, String> {
    let dir = std::env::var_os("CNNSLICER_REFERENCE_RUN")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("target").join("reference-run"));
    let cfg = train::TrainConfig::default();
    let stamp = serde_json::to_string(&cfg.describe()).expect("config serializes");
    let marker = dir.join(".complete");
    if fs::read_to_string(&marker).is_ok_and(|s| s == stamp) {
        return Ok(dir);
    }

    let parent = dir.parent().ok_or("reference run path has no parent")?;
    fs::create_dir_all(parent).map_err(|e| e.to_string())?;
    let lock_path = dir.with_extension("lock");
    let lock = File::create(&lock_path).map_err(|e| format!("{}: {e}", lock_path.display()))?;
    lock.lock().map_err(|e| e.to_string())?;
    if fs::read_to_string(&marker).is_ok_and(|s| s == stamp) {
        return Ok(dir);
    }

    let tmp = dir.with_extension("partial");
    let _ = fs::remove_dir_all(&tmp);
    train::train_and_dump(&cfg, REFERENCE_RUN_ID, &tmp)?;
    fs::write(tmp.join(".complete"), &stamp).map_err(|e| e.to_string())?;
    let _ = fs::remove_dir_all(&dir);
    fs::rename(&tmp, &dir).map_err(|e| e.to_string())?;
    Ok(dir)
}

/// Raw MNIST training images for the input-diversity experiment:
/// `per_class` images of every class, pixels in [0, 1], as
/// `(rows, 784, data)`. Smaller sets are subsets of larger ones.
pub fn diversity_set(per_class: usize, seed: u64) -> Result<(usize, usize, Vec<f64>), String> {
    let split = mnist::train()?;
    let idx = train::stratified_indices(&split, per_class, seed);
    let data = idx
        .iter()
        .flat_map(|&i| split.image(i).iter().map(|&v| f64::from(v)))
        .collect();
    Ok((idx.len(), mnist::PIXELS, data))
}
