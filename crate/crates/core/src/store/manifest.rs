use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Input,
    Conv,
    Relu,
    Maxpool,
    Flatten,
    Linear,
    Output,
}

impl LayerKind {
    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv => "conv",
            LayerKind::Relu => "relu",
            LayerKind::Maxpool => "maxpool",
            LayerKind::Flatten => "flatten",
            LayerKind::Linear => "linear",
            LayerKind::Output => "output",
        }
    }
}

/// One entry of the sequential architecture.
///
/// Spatial layers carry `height`/`width`; vector layers (flatten, linear,
/// output, and relu applied to a vector) have `channels == 1`, no spatial
/// extent, and their width in `units`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub index: usize,
    pub name: String,
    pub kind: LayerKind,
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<usize>,
    pub dumped: bool,
}

impl LayerDescriptor {
    pub fn is_vector(&self) -> bool {
        self.height.is_none()
    }

    /// `[C, H, W]`; vector layers report `[1, 1, D]`.
    pub fn feature_shape(&self) -> [usize; 3] {
        match (self.height, self.width) {
            (Some(h), Some(w)) => [self.channels, h, w],
            _ => [1, 1, self.units.unwrap_or(0)],
        }
    }

    /// Number of values in one channel's feature map.
    pub fn map_len(&self) -> usize {
        let [_, h, w] = self.feature_shape();
        h * w
    }

    pub fn sample_len(&self) -> usize {
        let [c, h, w] = self.feature_shape();
        c * h * w
    }

    pub fn has_weights(&self) -> bool {
        matches!(self.kind, LayerKind::Conv | LayerKind::Linear)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub dataset: String,
    pub num_classes: usize,
    pub probe_count: usize,
    pub epochs: Vec<u32>,
    pub layers: Vec<LayerDescriptor>,
    /// Free-form exporter metadata (hyperparameters, seeds).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extras: serde_json::Value,
    /// Directory the run was loaded from; not part of the file on disk.
    #[serde(default)]
    pub root_path: PathBuf,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut manifest: RunManifest = serde_json::from_slice(&bytes)
            .map_err(|e| Error::BadManifest(format!("{}: {e}", path.display())))?;
        manifest.root_path = dir.to_path_buf();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn output_layer(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, index: usize) -> Result<&LayerDescriptor> {
        self.layers.get(index).ok_or(Error::UnknownLayer(index))
    }

    pub fn has_epoch(&self, epoch: u32) -> bool {
        self.epochs.binary_search(&epoch).is_ok()
    }

    pub fn final_epoch(&self) -> u32 {
        *self.epochs.last().expect("validated manifests list epoch 0")
    }

    pub fn validate(&mut self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadManifest(msg));
        if self.run_id.is_empty()
            || !self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return bad(format!("run_id {:?} must be non-empty [A-Za-z0-9._-]", self.run_id));
        }
        if self.num_classes == 0 {
            return bad("num_classes must be positive".into());
        }
        if self.probe_count == 0 {
            return bad("probe_count must be positive".into());
        }
        if self.epochs.first() != Some(&0) {
            return bad("epochs must start with 0 (the initialization state)".into());
        }
        if self.epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("epochs must be strictly ascending".into());
        }
        if self.layers.len() < 2 {
            return bad("need at least an input and an output layer".into());
        }

        let last = self.layers.len() - 1;
        for i in 0..self.layers.len() {
            let layer = &self.layers[i];
            if layer.index != i {
                return bad(format!("layer at position {i} has index {}", layer.index));
            }
            if layer.channels == 0 {
                return bad(format!("layer {i} has zero channels"));
            }
            if layer.height.is_some() != layer.width.is_some() {
                return bad(format!("layer {i} must give both height and width or neither"));
            }
            if matches!(layer.height, Some(0)) || matches!(layer.width, Some(0)) {
                return bad(format!("layer {i} has an empty spatial extent"));
            }
            match (i, layer.kind) {
                (0, LayerKind::Input) => {}
                (0, _) => return bad("layer 0 must be the input".into()),
                (_, LayerKind::Input) => return bad(format!("layer {i}: input only at index 0")),
                (i, LayerKind::Output) if i != last => {
                    return bad(format!("layer {i}: output must be the last layer"))
                }
                (i, kind) if i == last && kind != LayerKind::Output => {
                    return bad("the last layer must be the output".into())
                }
                _ => {}
            }
            if i == 0 {
                if layer.is_vector() {
                    let units = layer.units.unwrap_or(0);
                    if units == 0 || layer.channels != 1 {
                        return bad("vector input needs channels=1 and positive units".into());
                    }
                }
                continue;
            }
            let derived = derive_shape(&self.layers[i - 1], layer, self.num_classes)?;
            let layer = &mut self.layers[i];
            layer.units = derived;
        }
        Ok(())
    }
}

/// Checks `layer` against its predecessor and returns the vector width the
/// layer should carry (`None` for spatial layers).
fn derive_shape(
    prev: &LayerDescriptor,
    layer: &LayerDescriptor,
    num_classes: usize,
) -> Result<Option<usize>> {
    let i = layer.index;
    let bad = |msg: String| Err(Error::BadManifest(format!("layer {i} ({}): {msg}", layer.kind.name())));
    let [pc, ph, pw] = prev.feature_shape();
    let spatial = |l: &LayerDescriptor| (l.height, l.width);

    match layer.kind {
        LayerKind::Conv => {
            if prev.is_vector() || layer.is_vector() {
                return bad("conv needs spatial input and output".into());
            }
            if spatial(layer) != (Some(ph), Some(pw)) {
                return bad(format!("conv must preserve {ph}x{pw}"));
            }
            Ok(None)
        }
        LayerKind::Relu => {
            if layer.is_vector() != prev.is_vector() {
                return bad("relu must keep the predecessor's layout".into());
            }
            if prev.is_vector() {
                if layer.units.is_some_and(|u| u != pw) {
                    return bad(format!("relu must keep width {pw}"));
                }
                return Ok(Some(pw));
            }
            if layer.channels != pc || spatial(layer) != (Some(ph), Some(pw)) {
                return bad(format!("relu must keep shape {pc}x{ph}x{pw}"));
            }
            Ok(None)
        }
        LayerKind::Maxpool => {
            if prev.is_vector() || layer.is_vector() {
                return bad("maxpool needs spatial input and output".into());
            }
            if layer.channels != pc || spatial(layer) != (Some(ph / 2), Some(pw / 2)) || ph < 2 || pw < 2 {
                return bad(format!("2x2 max-pooling of {pc}x{ph}x{pw} gives {pc}x{}x{}", ph / 2, pw / 2));
            }
            Ok(None)
        }
        LayerKind::Flatten => {
            if !layer.is_vector() || layer.channels != 1 {
                return bad("flatten output is a vector with channels=1".into());
            }
            let units = pc * ph * pw;
            if layer.units.is_some_and(|u| u != units) {
                return bad(format!("flatten of {pc}x{ph}x{pw} has {units} units"));
            }
            Ok(Some(units))
        }
        LayerKind::Linear => {
            if !prev.is_vector() || !layer.is_vector() || layer.channels != 1 {
                return bad("linear maps a vector to a vector with channels=1".into());
            }
            match layer.units {
                Some(u) if u > 0 => Ok(Some(u)),
                _ => bad("linear must declare its width in units".into()),
            }
        }
        LayerKind::Output => {
            if !prev.is_vector() || !layer.is_vector() || layer.channels != 1 {
                return bad("output is a class-probability vector with channels=1".into());
            }
            if pw != num_classes || layer.units.is_some_and(|u| u != num_classes) {
                return bad(format!("output width must equal num_classes={num_classes}"));
            }
            Ok(Some(num_classes))
        }
        LayerKind::Input => unreachable!("input handled by caller"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: usize,
    pub label: usize,
    pub split: Split,
}

/// Probe samples, indexed by `sample_id` (which is also the tensor row).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleTable {
    pub rows: Vec<SampleRow>,
}

impl SampleTable {
    pub fn load(path: &Path, manifest: &RunManifest) -> Result<Self> {
        let file = path.display().to_string();
        let bad = |reason: String| Error::BadCsv {
            file: file.clone(),
            reason,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => bad(format!("{other:?}")),
        })?;
        let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["sample_id", "label", "split"] {
            return Err(bad("header must be sample_id,label,split".into()));
        }
        let mut rows = Vec::new();
        for (line, record) in reader.deserialize::<SampleRow>().enumerate() {
            let row = record.map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
            rows.push(row);
        }
        let table = SampleTable { rows };
        table.validate(manifest).map_err(bad)?;
        Ok(table)
    }

    fn validate(&self, manifest: &RunManifest) -> std::result::Result<(), String> {
        if self.rows.len() != manifest.probe_count {
            return Err(format!(
                "{} rows for probe_count {}",
                self.rows.len(),
                manifest.probe_count
            ));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.sample_id != i {
                return Err(format!("sample ids must be dense 0..N-1; row {i} has {}", row.sample_id));
            }
            if row.label >= manifest.num_classes {
                return Err(format!("sample {i} has label {} >= num_classes", row.label));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().map(|r| r.label)
    }

    pub fn ids_with_label(&self, label: usize) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.sample_id)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: u32,
    pub train_loss: f64,
    pub test_accuracy: f64,
}

pub fn load_loss_csv(path: &Path) -> Result<Vec<LossRow>> {
    let file = path.display().to_string();
    let bad = |reason: String| Error::BadCsv {
        file: file.clone(),
        reason,
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(bad("file is empty".into()));
    }
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["epoch", "train_loss", "test_accuracy"] {
        return Err(bad("header must be epoch,train_loss,test_accuracy".into()));
    }
    let mut rows: Vec<LossRow> = Vec::new();
    for (line, record) in reader.deserialize::<LossRow>().enumerate() {
        let row = record.map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        if !row.train_loss.is_finite() || !row.test_accuracy.is_finite() {
            return Err(bad(format!("row {}: non-finite value", line + 1)));
        }
        if rows.last().is_some_and(|prev| prev.epoch >= row.epoch) {
            return Err(bad(format!("row {}: epochs must ascend", line + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}
