use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{s, Array2, Array4, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::{load_loss_csv, LayerDescriptor, LossRow, RunManifest, SampleTable};
use super::slice::{Pick, SampleSelector, SliceSpec};
use crate::error::{Error, Result};
use crate::flow::HistogramCache;
use crate::npy::{read_tensor_file, read_tensor_header};

pub const INDEX_FILE: &str = "index.json";
/// Softmax rows in `outputs/` must sum to one within this tolerance.
pub const OUTPUT_ROW_TOLERANCE: f64 = 1e-5;

/// Activations of one layer at one epoch for a set of samples.
///
/// `data` is `[N, C, H, W]`; vector layers are stored as `[N, 1, 1, D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBlock {
    pub layer: LayerDescriptor,
    pub epoch: u32,
    pub data: Array4<f32>,
    pub sample_ids: Vec<usize>,
    /// Channel index of `data`'s channel axis position 0 when the block was
    /// restricted to a single channel.
    pub channel: Option<usize>,
}

impl ActivationBlock {
    pub fn n_samples(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.data.shape()[1]
    }

    /// Feature map of sample row `row`, channel position `c`, flattened.
    pub fn map(&self, row: usize, c: usize) -> &[f32] {
        self.data
            .slice(s![row, c, .., ..])
            .to_slice()
            .expect("blocks are kept in standard layout")
    }

    /// `[N, H*W]` matrix of one channel position across samples, widened to f64.
    pub fn channel_matrix(&self, c: usize) -> Array2<f64> {
        let [n, _, h, w] = self.shape();
        let mut out = Array2::<f64>::zeros((n, h * w));
        for (row, mut dst) in out.axis_iter_mut(Axis(0)).enumerate() {
            for (d, v) in dst.iter_mut().zip(self.map(row, c)) {
                *d = f64::from(*v);
            }
        }
        out
    }

    /// `[N, C*H*W]` matrix with every channel of a sample concatenated.
    pub fn flattened(&self) -> Array2<f64> {
        let [n, c, h, w] = self.shape();
        let view: ArrayView2<f32> = self
            .data
            .view()
            .into_shape_with_order((n, c * h * w))
            .expect("blocks are kept in standard layout");
        view.mapv(f64::from)
    }

    pub fn shape(&self) -> [usize; 4] {
        let s = self.data.shape();
        [s[0], s[1], s[2], s[3]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub path: String,
    pub shape: Vec<usize>,
}

/// Written next to the manifest by `ingest`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunIndex {
    pub run_id: String,
    pub fingerprint: String,
    pub tensors: Vec<IndexEntry>,
}

/// A loaded training run. Immutable after construction; shareable across
/// threads.
#[derive(Debug)]
pub struct Run {
    manifest: RunManifest,
    samples: SampleTable,
    loss: Vec<LossRow>,
    fingerprint: String,
    cache: HistogramCache,
}

impl Run {
    /// Loads metadata and checks that every expected tensor file exists,
    /// without reading tensor payloads.
    pub fn open(dir: impl AsRef<Path>) -> Result<Run> {
        let dir = dir.as_ref();
        let manifest = RunManifest::load(dir)?;
        let samples = SampleTable::load(&dir.join("samples.csv"), &manifest)?;
        let loss = load_loss_csv(&dir.join("loss.csv"))?;
        let mut run = Run {
            manifest,
            samples,
            loss,
            fingerprint: String::new(),
            cache: HistogramCache::default(),
        };
        run.fingerprint = run.compute_fingerprint()?;
        Ok(run)
    }

    /// Full validation of a dump directory (including every tensor payload),
    /// followed by writing `index.json`. Re-ingesting an unchanged directory
    /// rewrites an identical index.
    pub fn ingest(dir: impl AsRef<Path>) -> Result<Run> {
        let run = Run::open(dir)?;
        let index = run.validate_tensors()?;
        run.write_index(&index)?;
        Ok(run)
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn id(&self) -> &str {
        &self.manifest.run_id
    }

    pub fn root(&self) -> &Path {
        &self.manifest.root_path
    }

    pub fn samples(&self) -> &SampleTable {
        &self.samples
    }

    pub fn loss(&self) -> &[LossRow] {
        &self.loss
    }

    /// Hash of the metadata files plus every tensor's path and byte length.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub(crate) fn histogram_cache(&self) -> &HistogramCache {
        &self.cache
    }

    pub fn layer(&self, index: usize) -> Result<&LayerDescriptor> {
        self.manifest.layer(index)
    }

    pub fn check_epoch(&self, epoch: u32) -> Result<()> {
        if self.manifest.has_epoch(epoch) {
            Ok(())
        } else {
            Err(Error::UnknownEpoch(epoch))
        }
    }

    pub fn dumped_layer(&self, index: usize) -> Result<&LayerDescriptor> {
        let layer = self.layer(index)?;
        if !layer.dumped {
            return Err(Error::LayerNotDumped(index));
        }
        Ok(layer)
    }

    pub fn activation_path(&self, epoch: u32, layer: usize) -> PathBuf {
        self.root()
            .join("acts")
            .join(format!("epoch_{epoch}"))
            .join(format!("layer_{layer}.npy"))
    }

    pub fn output_path(&self, epoch: u32) -> PathBuf {
        self.root().join("outputs").join(format!("epoch_{epoch}.npy"))
    }

    pub fn kernel_path(&self, epoch: u32, layer: usize) -> PathBuf {
        self.root()
            .join("weights")
            .join(format!("epoch_{epoch}"))
            .join(format!("layer_{layer}.kernel.npy"))
    }

    pub fn bias_path(&self, epoch: u32, layer: usize) -> PathBuf {
        self.root()
            .join("weights")
            .join(format!("epoch_{epoch}"))
            .join(format!("layer_{layer}.bias.npy"))
    }

    /// Sample rows (= sample ids) picked by a selector, in ascending id order
    /// for `all`/`label`, in the given order for `ids`.
    pub fn select_rows(&self, selector: &SampleSelector) -> Result<Vec<usize>> {
        let rows = match selector {
            SampleSelector::All => (0..self.samples.len()).collect(),
            SampleSelector::Label(label) => {
                if *label >= self.manifest.num_classes {
                    return Err(Error::InvalidSlice(format!(
                        "label {label} >= num_classes {}",
                        self.manifest.num_classes
                    )));
                }
                self.samples.ids_with_label(*label)
            }
            SampleSelector::Ids(ids) => {
                let mut seen = vec![false; self.samples.len()];
                for &id in ids {
                    if id >= self.samples.len() {
                        return Err(Error::UnknownSample(id));
                    }
                    if std::mem::replace(&mut seen[id], true) {
                        return Err(Error::InvalidSlice(format!("sample {id} listed twice")));
                    }
                }
                ids.clone()
            }
        };
        if rows.is_empty() {
            return Err(Error::EmptySelection);
        }
        Ok(rows)
    }

    /// All probe-sample activations of a dumped layer at one epoch.
    pub fn read_layer(&self, layer: usize, epoch: u32) -> Result<Array4<f32>> {
        let desc = self.dumped_layer(layer)?;
        self.check_epoch(epoch)?;
        let tensor = read_tensor_file(self.activation_path(epoch, layer))?;
        let [c, h, w] = desc.feature_shape();
        let expected = self.activation_shape(desc);
        if tensor.shape != expected {
            return Err(Error::ShapeMismatch(format!(
                "layer {layer} epoch {epoch}: file shape {:?}, manifest shape {expected:?}",
                tensor.shape
            )));
        }
        Array4::from_shape_vec((self.samples.len(), c, h, w), tensor.data)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))
    }

    /// One (layer, epoch) block restricted to selected samples and channels.
    pub fn block(
        &self,
        layer: usize,
        epoch: u32,
        selector: &SampleSelector,
        channel: Pick<usize>,
    ) -> Result<ActivationBlock> {
        let desc = self.dumped_layer(layer)?.clone();
        self.check_epoch(epoch)?;
        if let Pick::One(c) = channel {
            if c >= desc.channels {
                return Err(Error::UnknownChannel { layer, channel: c });
            }
        }
        let rows = self.select_rows(selector)?;
        let full = self.read_layer(layer, epoch)?;
        let data = match channel {
            Pick::All if rows.len() == full.shape()[0] && is_identity(&rows) => full,
            Pick::All => full.select(Axis(0), &rows),
            Pick::One(c) => full
                .slice(s![.., c..c + 1, .., ..])
                .select(Axis(0), &rows),
        };
        Ok(ActivationBlock {
            layer: desc,
            epoch,
            data: data.as_standard_layout().into_owned(),
            sample_ids: rows,
            channel: channel.one(),
        })
    }

    /// Lazily yields the blocks selected by `spec`, one per (layer, epoch),
    /// ascending by layer then epoch. `l=*` covers the dumped layers only;
    /// with `l=*` and a fixed channel, layers without that channel are
    /// skipped.
    pub fn slice(&self, spec: &SliceSpec) -> Result<SliceIter<'_>> {
        let layers: Vec<usize> = match spec.l {
            Pick::One(l) => {
                let desc = self.dumped_layer(l)?;
                if let Pick::One(c) = spec.c {
                    if c >= desc.channels {
                        return Err(Error::UnknownChannel { layer: l, channel: c });
                    }
                }
                vec![l]
            }
            Pick::All => self
                .manifest
                .layers
                .iter()
                .filter(|d| d.dumped)
                .filter(|d| spec.c.one().is_none_or(|c| c < d.channels))
                .map(|d| d.index)
                .collect(),
        };
        let epochs: Vec<u32> = match spec.t {
            Pick::One(t) => {
                self.check_epoch(t)?;
                vec![t]
            }
            Pick::All => self.manifest.epochs.clone(),
        };
        self.select_rows(&spec.x)?;
        let plan = layers
            .iter()
            .flat_map(|&l| epochs.iter().map(move |&t| (l, t)))
            .collect::<Vec<_>>();
        Ok(SliceIter {
            run: self,
            spec: spec.clone(),
            plan: plan.into_iter(),
        })
    }

    /// Post-softmax outputs `[N, num_classes]` at a dumped epoch.
    pub fn outputs(&self, epoch: u32) -> Result<Array2<f32>> {
        if !self.manifest.has_epoch(epoch) {
            return Err(Error::MissingOutputs(epoch));
        }
        let path = self.output_path(epoch);
        let tensor = read_tensor_file(&path).map_err(|e| match e {
            Error::MissingFile(_) => Error::MissingOutputs(epoch),
            other => other,
        })?;
        let expected = vec![self.samples.len(), self.manifest.num_classes];
        if tensor.shape != expected {
            return Err(Error::ShapeMismatch(format!(
                "outputs epoch {epoch}: file shape {:?}, expected {expected:?}",
                tensor.shape
            )));
        }
        Array2::from_shape_vec((expected[0], expected[1]), tensor.data)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))
    }

    fn activation_shape(&self, desc: &LayerDescriptor) -> Vec<usize> {
        let n = self.samples.len();
        let [c, h, w] = desc.feature_shape();
        if desc.is_vector() {
            vec![n, w]
        } else {
            vec![n, c, h, w]
        }
    }

    /// Every tensor file the layout requires, with its expected shape.
    fn expected_tensors(&self) -> Result<Vec<(PathBuf, Vec<usize>)>> {
        let m = &self.manifest;
        let mut out = Vec::new();
        for &epoch in &m.epochs {
            for (i, desc) in m.layers.iter().enumerate() {
                if desc.dumped {
                    out.push((self.activation_path(epoch, i), self.activation_shape(desc)));
                }
                if desc.has_weights() {
                    let prev = &m.layers[i - 1];
                    let (kernel, bias) = if desc.kind == super::LayerKind::Conv {
                        let k = self.kernel_size(epoch, i)?;
                        (vec![desc.channels, prev.channels, k.0, k.1], vec![desc.channels])
                    } else {
                        let [_, _, d_in] = prev.feature_shape();
                        let [_, _, d_out] = desc.feature_shape();
                        (vec![d_out, d_in], vec![d_out])
                    };
                    out.push((self.kernel_path(epoch, i), kernel));
                    out.push((self.bias_path(epoch, i), bias));
                }
            }
            out.push((self.output_path(epoch), vec![self.samples.len(), m.num_classes]));
        }
        Ok(out)
    }

    /// Spatial kernel size of a conv layer, read from the kernel file header.
    pub fn kernel_size(&self, epoch: u32, layer: usize) -> Result<(usize, usize)> {
        let header = read_tensor_header(self.kernel_path(epoch, layer))?;
        match header.shape.as_slice() {
            [_, _, kh, kw] if kh % 2 == 1 && kw % 2 == 1 => Ok((*kh, *kw)),
            other => Err(Error::ShapeMismatch(format!(
                "conv layer {layer}: kernel shape {other:?} is not [C_out, C_in, odd, odd]"
            ))),
        }
    }

    fn compute_fingerprint(&self) -> Result<String> {
        let root = self.root();
        let mut hasher = Sha256::new();
        for name in ["manifest.json", "samples.csv", "loss.csv"] {
            let path = root.join(name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            hasher.update(name.as_bytes());
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
        let mut files: Vec<PathBuf> = self
            .expected_tensors()?
            .into_iter()
            .map(|(p, _)| p)
            .collect();
        files.sort();
        for path in files {
            let meta = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?;
            hasher.update(relative(root, &path).as_bytes());
            hasher.update(meta.len().to_le_bytes());
        }
        Ok(hex::encode(hasher.finalize()))
    }

    fn validate_tensors(&self) -> Result<RunIndex> {
        let root = self.root();
        let mut tensors = Vec::new();
        for (path, expected) in self.expected_tensors()? {
            let tensor = read_tensor_file(&path)?;
            let rel = relative(root, &path);
            if tensor.shape != expected {
                return Err(Error::ShapeMismatch(format!(
                    "{rel}: file shape {:?}, manifest shape {expected:?}",
                    tensor.shape
                )));
            }
            if let Some(v) = tensor.data.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue(format!("{rel} contains {v}")));
            }
            if rel.starts_with("outputs") {
                let classes = self.manifest.num_classes;
                for (row, probs) in tensor.data.chunks_exact(classes).enumerate() {
                    let sum: f64 = probs.iter().map(|&p| f64::from(p)).sum();
                    if (sum - 1.0).abs() > OUTPUT_ROW_TOLERANCE || probs.iter().any(|&p| p < 0.0) {
                        return Err(Error::ShapeMismatch(format!(
                            "{rel}: row {row} is not a probability vector (sum {sum})"
                        )));
                    }
                }
            }
            tensors.push(IndexEntry {
                path: rel,
                shape: expected,
            });
        }
        tensors.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(RunIndex {
            run_id: self.manifest.run_id.clone(),
            fingerprint: self.fingerprint.clone(),
            tensors,
        })
    }

    fn write_index(&self, index: &RunIndex) -> Result<()> {
        let path = self.root().join(INDEX_FILE);
        let mut body = serde_json::to_vec_pretty(index).expect("index serializes");
        body.push(b'\n');
        if std::fs::read(&path).is_ok_and(|existing| existing == body) {
            return Ok(());
        }
        let tmp = self.root().join(format!(".{INDEX_FILE}.tmp"));
        std::fs::write(&tmp, &body).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// Whether `index.json` exists and matches the current fingerprint.
    pub fn is_indexed(&self) -> bool {
        std::fs::read(self.root().join(INDEX_FILE))
            .ok()
            .and_then(|b| serde_json::from_slice::<RunIndex>(&b).ok())
            .is_some_and(|idx| idx.fingerprint == self.fingerprint)
    }
}

fn is_identity(rows: &[usize]) -> bool {
    rows.iter().enumerate().all(|(i, &r)| i == r)
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Iterator returned by [`Run::slice`].
pub struct SliceIter<'a> {
    run: &'a Run,
    spec: SliceSpec,
    plan: std::vec::IntoIter<(usize, u32)>,
}

impl Iterator for SliceIter<'_> {
    type Item = Result<ActivationBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        let (layer, epoch) = self.plan.next()?;
        Some(self.run.block(layer, epoch, &self.spec.x, self.spec.c))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.plan.size_hint()
    }
}

/// The set of runs below a data root: every immediate subdirectory holding
/// a `manifest.json` (symlinks included).
#[derive(Debug, Default)]
pub struct Catalog {
    root: PathBuf,
    runs: BTreeMap<String, Arc<Run>>,
}

impl Catalog {
    /// Opens every run under `root`, ingesting any whose index is missing or
    /// stale. Runs that fail validation are returned alongside the catalog
    /// instead of aborting the scan.
    pub fn open(root: impl AsRef<Path>) -> Result<(Catalog, Vec<(PathBuf, Error)>)> {
        let root = root.as_ref().to_path_buf();
        let entries = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("manifest.json").is_file())
            .collect();
        dirs.sort();

        let mut catalog = Catalog {
            root,
            runs: BTreeMap::new(),
        };
        let mut failures = Vec::new();
        for dir in dirs {
            let loaded = Run::open(&dir).and_then(|run| {
                if run.is_indexed() {
                    Ok(run)
                } else {
                    Run::ingest(&dir)
                }
            });
            match loaded {
                Ok(run) => {
                    if catalog.runs.contains_key(run.id()) {
                        failures.push((
                            dir,
                            Error::BadManifest(format!("duplicate run id {:?}", run.id())),
                        ));
                    } else {
                        catalog.runs.insert(run.id().to_string(), Arc::new(run));
                    }
                }
                Err(e) => failures.push((dir, e)),
            }
        }
        Ok((catalog, failures))
    }

    /// Ingests `dump_dir` and makes it visible under `root` as `root/<run_id>`
    /// (a symlink when the dump lives elsewhere). Idempotent.
    pub fn register(root: impl AsRef<Path>, dump_dir: impl AsRef<Path>) -> Result<Run> {
        let root = root.as_ref();
        let run = Run::ingest(dump_dir.as_ref())?;
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let link = root.join(run.id());
        let target = std::fs::canonicalize(run.root()).map_err(|e| Error::io(run.root(), e))?;
        match std::fs::canonicalize(&link) {
            Ok(existing) if existing == target => Ok(run),
            Ok(existing) => Err(Error::BadManifest(format!(
                "run id {:?} is already registered at {}",
                run.id(),
                existing.display()
            ))),
            Err(_) => {
                link_dir(&target, &link)?;
                Ok(run)
            }
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn get(&self, run_id: &str) -> Result<Arc<Run>> {
        self.runs
            .get(run_id)
            .cloned()
            .ok_or_else(|| Error::UnknownRun(run_id.to_string()))
    }

    pub fn runs(&self) -> impl Iterator<Item = &Arc<Run>> {
        self.runs.values()
    }

    pub fn insert(&mut self, run: Run) {
        self.runs.insert(run.id().to_string(), Arc::new(run));
    }
}

#[cfg(unix)]
fn link_dir(target: &Path, link: &Path) -> Result<()> {
    std::os::unix::fs::symlink(target, link).map_err(|e| Error::io(link, e))
}

#[cfg(not(unix))]
fn link_dir(_target: &Path, link: &Path) -> Result<()> {
    Err(Error::InvalidArgument(format!(
        "cannot link {} on this platform; place the dump under the data root instead",
        link.display()
    )))
}
