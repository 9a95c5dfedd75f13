//! Miniature run dumps in the exporter's on-disk layout.
//!
//! Weights are drawn from a seeded generator and every activation is
//! computed here with a plain f64 forward pass, so a dump doubles as an
//! independent oracle for the library's own inference code.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::npy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Input,
    Conv { kernel: usize },
    Relu,
    Maxpool,
    Flatten,
    Linear,
    Output,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Input => "input",
            Kind::Conv { .. } => "conv",
            Kind::Relu => "relu",
            Kind::Maxpool => "maxpool",
            Kind::Flatten => "flatten",
            Kind::Linear => "linear",
            Kind::Output => "output",
        }
    }
}

/// `[C, H, W]`, vectors as `[1, 1, D]` with `spatial = false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub spatial: bool,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape of the activation file: `[N, C, H, W]` or `[N, D]`.
    pub fn file_shape(&self, n: usize) -> Vec<usize> {
        if self.spatial {
            vec![n, self.c, self.h, self.w]
        } else {
            vec![n, self.w]
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub kind: Kind,
    pub shape: Shape,
    pub dumped: bool,
}

/// Sequential architecture built layer by layer.
#[derive(Debug, Clone)]
pub struct Net {
    pub layers: Vec<Layer>,
}

impl Net {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Net {
            layers: vec![Layer {
                kind: Kind::Input,
                shape: Shape { c, h, w, spatial: true },
                dumped: true,
            }],
        }
    }

    fn last(&self) -> Shape {
        self.layers.last().expect("input layer").shape
    }

    fn push(mut self, kind: Kind, shape: Shape) -> Self {
        self.layers.push(Layer { kind, shape, dumped: true });
        self
    }

    pub fn conv(self, out: usize, kernel: usize) -> Self {
        let s = self.last();
        self.push(Kind::Conv { kernel }, Shape { c: out, ..s })
    }

    pub fn relu(self) -> Self {
        let s = self.last();
        self.push(Kind::Relu, s)
    }

    pub fn maxpool(self) -> Self {
        let s = self.last();
        self.push(Kind::Maxpool, Shape { h: s.h / 2, w: s.w / 2, ..s })
    }

    pub fn flatten(self) -> Self {
        let s = self.last();
        self.push(Kind::Flatten, Shape { c: 1, h: 1, w: s.len(), spatial: false })
    }

    pub fn linear(self, out: usize) -> Self {
        self.push(Kind::Linear, Shape { c: 1, h: 1, w: out, spatial: false })
    }

    pub fn output(self) -> Self {
        let s = self.last();
        self.push(Kind::Output, s)
    }

    /// Marks which layers get activation files.
    pub fn dump_only(mut self, layers: &[usize]) -> Self {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.dumped = layers.contains(&i);
        }
        self
    }

    /// The fixed reference architecture for 1x28x28 inputs.
    pub fn reference(c: usize, h: usize, w: usize, classes: usize) -> Self {
        Net::new(c, h, w)
            .conv(32, 3)
            .relu()
            .maxpool()
            .conv(64, 3)
            .relu()
            .maxpool()
            .conv(64, 3)
            .relu()
            .flatten()
            .linear(classes)
            .output()
    }

    pub fn manifest_layers(&self) -> Value {
        Value::Array(
            self.layers
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let mut v = json!({
                        "index": i,
                        "name": format!("{}{i}", l.kind.name()),
                        "kind": l.kind.name(),
                        "channels": l.shape.c,
                        "dumped": l.dumped,
                    });
                    if l.shape.spatial {
                        v["height"] = json!(l.shape.h);
                        v["width"] = json!(l.shape.w);
                    } else {
                        v["units"] = json!(l.shape.w);
                    }
                    v
                })
                .collect(),
        )
    }
}

/// Parameters of one conv or linear layer. Conv kernels are
/// `[C_out, C_in, kh, kw]`, linear weights `[D_out, D_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub shape: Vec<usize>,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

pub type Weights = BTreeMap<usize, Params>;

pub fn random_weights(net: &Net, rng: &mut ChaCha8Rng, zero_bias: bool) -> Weights {
    let mut out = BTreeMap::new();
    for (i, l) in net.layers.iter().enumerate() {
        let prev = if i > 0 { net.layers[i - 1].shape } else { l.shape };
        let shape = match l.kind {
            Kind::Conv { kernel } => vec![l.shape.c, prev.c, kernel, kernel],
            Kind::Linear => vec![l.shape.w, prev.len()],
            _ => continue,
        };
        let fan_in: usize = shape[1..].iter().product();
        let scale = (2.0 / fan_in as f32).sqrt();
        let weight = (0..shape.iter().product::<usize>())
            .map(|_| rng.random_range(-1.0f32..1.0) * scale)
            .collect();
        let bias = (0..shape[0])
            .map(|_| if zero_bias { 0.0 } else { rng.random_range(-0.1f32..0.1) })
            .collect();
        out.insert(i, Params { shape, weight, bias });
    }
    out
}

/// Plain f64 forward pass. Returns every layer's activation, flattened in
/// C order.
pub fn forward(net: &Net, weights: &Weights, input: &[f32]) -> Vec<Vec<f64>> {
    let mut acts: Vec<Vec<f64>> = vec![input.iter().map(|&v| f64::from(v)).collect()];
    for (i, layer) in net.layers.iter().enumerate().skip(1) {
        let prev_shape = net.layers[i - 1].shape;
        let x = &acts[i - 1];
        let s = layer.shape;
        let y: Vec<f64> = match layer.kind {
            Kind::Input => x.clone(),
            Kind::Conv { kernel } => {
                let p = &weights[&i];
                let pad = kernel / 2;
                let mut y = vec![0.0; s.len()];
                for o in 0..s.c {
                    for r in 0..s.h {
                        for c in 0..s.w {
                            let mut acc = f64::from(p.bias[o]);
                            for ci in 0..prev_shape.c {
                                for dy in 0..kernel {
                                    for dx in 0..kernel {
                                        let (yy, xx) = (r + dy, c + dx);
                                        if yy < pad || xx < pad || yy - pad >= s.h || xx - pad >= s.w {
                                            continue;
                                        }
                                        let wi = ((o * prev_shape.c + ci) * kernel + dy) * kernel + dx;
                                        let xi = (ci * s.h + yy - pad) * s.w + xx - pad;
                                        acc += f64::from(p.weight[wi]) * x[xi];
                                    }
                                }
                            }
                            y[(o * s.h + r) * s.w + c] = acc;
                        }
                    }
                }
                y
            }
            Kind::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            Kind::Maxpool => {
                let mut y = vec![0.0; s.len()];
                for ch in 0..s.c {
                    for r in 0..s.h {
                        for c in 0..s.w {
                            let at = |dy: usize, dx: usize| {
                                x[(ch * prev_shape.h + 2 * r + dy) * prev_shape.w + 2 * c + dx]
                            };
                            y[(ch * s.h + r) * s.w + c] = at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1));
                        }
                    }
                }
                y
            }
            Kind::Flatten => x.clone(),
            Kind::Linear => {
                let p = &weights[&i];
                let d_in = prev_shape.len();
                (0..s.w)
                    .map(|o| {
                        f64::from(p.bias[o])
                            + (0..d_in)
                                .map(|k| f64::from(p.weight[o * d_in + k]) * x[k])
                                .sum::<f64>()
                    })
                    .collect()
            }
            Kind::Output => {
                let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|v| v / z).collect()
            }
        };
        acts.push(y);
    }
    acts
}

/// Everything needed to write one run directory.
#[derive(Debug, Clone)]
pub struct DumpSpec {
    pub run_id: String,
    pub dataset: String,
    pub num_classes: usize,
    pub net: Net,
    pub epochs: Vec<u32>,
    /// Per sample, flattened `[C, H, W]` input.
    pub inputs: Vec<Vec<f32>>,
    pub labels: Vec<usize>,
    pub weights: BTreeMap<u32, Weights>,
    /// Replaces the computed softmax outputs at an epoch.
    pub outputs: BTreeMap<u32, Vec<Vec<f32>>>,
    /// `(epoch, train_loss, test_accuracy)` rows for loss.csv.
    pub loss: Vec<(u32, f64, f64)>,
    pub extras: Value,
}

impl DumpSpec {
    /// Random inputs and weights for `net`, one weight set per epoch.
    pub fn random(run_id: &str, net: Net, num_classes: usize, per_class: usize, epochs: &[u32], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_in = net.layers[0].shape.len();
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for s in 0..num_classes * per_class {
            let label = s % num_classes;
            inputs.push(
                (0..n_in)
                    .map(|_| rng.random_range(0.0f32..1.0) + label as f32 * 0.1)
                    .collect(),
            );
            labels.push(label);
        }
        let weights = epochs
            .iter()
            .map(|&t| (t, random_weights(&net, &mut rng, false)))
            .collect();
        let last = *epochs.last().expect("at least one epoch");
        DumpSpec {
            run_id: run_id.to_string(),
            dataset: "synthetic".into(),
            num_classes,
            net,
            epochs: epochs.to_vec(),
            inputs,
            labels,
            weights,
            outputs: BTreeMap::new(),
            loss: (1..=last.max(1)).map(|t| (t, 1.0 / f64::from(t), 0.5)).collect(),
            extras: json!({"seed": seed}),
        }
    }

    pub fn probe_count(&self) -> usize {
        self.inputs.len()
    }

    /// Writes the run directory and returns its path.
    pub fn write(&self, dir: &Path) -> PathBuf {
        self.write_metadata(dir);
        let n = self.probe_count();
        for &t in &self.epochs {
            let weights = &self.weights[&t];
            let acts: Vec<Vec<Vec<f64>>> = self
                .inputs
                .iter()
                .map(|x| forward(&self.net, weights, x))
                .collect();
            for (l, layer) in self.net.layers.iter().enumerate() {
                if !layer.dumped {
                    continue;
                }
                let data: Vec<f32> = acts.iter().flat_map(|a| a[l].iter().map(|&v| v as f32)).collect();
                npy::write(
                    &dir.join(format!("acts/epoch_{t}/layer_{l}.npy")),
                    &layer.shape.file_shape(n),
                    &data,
                );
            }
            let outputs: Vec<f32> = match self.outputs.get(&t) {
                Some(rows) => rows.iter().flatten().copied().collect(),
                None => acts.iter().flat_map(|a| a.last().unwrap().iter().map(|&v| v as f32)).collect(),
            };
            npy::write(&dir.join(format!("outputs/epoch_{t}.npy")), &[n, self.num_classes], &outputs);
            self.write_weights(t, dir);
        }
        dir.to_path_buf()
    }

    /// manifest.json, samples.csv and loss.csv.
    pub fn write_metadata(&self, dir: &Path) {
        fs::create_dir_all(dir).expect("create dump dir");
        let manifest = json!({
            "run_id": self.run_id,
            "dataset": self.dataset,
            "num_classes": self.num_classes,
            "probe_count": self.probe_count(),
            "epochs": self.epochs,
            "layers": self.net.manifest_layers(),
            "extras": self.extras,
        });
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest).unwrap()).unwrap();

        let mut samples = String::from("sample_id,label,split\n");
        for (i, l) in self.labels.iter().enumerate() {
            samples.push_str(&format!("{i},{l},test\n"));
        }
        fs::write(dir.join("samples.csv"), samples).unwrap();

        let mut loss = String::from("epoch,train_loss,test_accuracy\n");
        for (t, l, a) in &self.loss {
            loss.push_str(&format!("{t},{l},{a}\n"));
        }
        fs::write(dir.join("loss.csv"), loss).unwrap();
    }

    pub fn write_weights(&self, epoch: u32, dir: &Path) {
        for (l, p) in &self.weights[&epoch] {
            npy::write(&dir.join(format!("weights/epoch_{epoch}/layer_{l}.kernel.npy")), &p.shape, &p.weight);
            npy::write(&dir.join(format!("weights/epoch_{epoch}/layer_{l}.bias.npy")), &[p.bias.len()], &p.bias);
        }
    }
}

/// A small conv net over 1x8x8 inputs with every layer dumped: input,
/// conv(4), relu, maxpool, conv(6), relu, maxpool, flatten, linear(3),
/// output.
pub fn tiny_net() -> Net {
    Net::new(1, 8, 8)
        .conv(4, 3)
        .relu()
        .maxpool()
        .conv(6, 3)
        .relu()
        .maxpool()
        .flatten()
        .linear(3)
        .output()
}

/// `tiny_net` with 3 classes x `per_class` samples and the given epochs.
pub fn tiny_dump(dir: &Path, per_class: usize, epochs: &[u32]) -> PathBuf {
    DumpSpec::random("tiny", tiny_net(), 3, per_class, epochs, 11).write(dir)
}

/// One-hot probability rows for the given class indices.
pub fn one_hot_outputs(classes: usize, predicted: &[usize]) -> Vec<Vec<f32>> {
    predicted
        .iter()
        .map(|&p| (0..classes).map(|c| if c == p { 1.0 } else { 0.0 }).collect())
        .collect()
}
