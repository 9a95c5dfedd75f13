//! Seeded trainer for the reference CNN on MNIST, writing a run dump.
//!
//! input 1x28x28 -> conv3x3(32) -> relu -> maxpool -> conv3x3(64) -> relu
//! -> maxpool -> conv3x3(64) -> relu -> flatten -> linear(10) -> softmax.
//! Plain SGD with momentum on the cross-entropy loss, f32 throughout, convs
//! as im2col + GEMM.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::dump::{DumpSpec, Net, Params};
use crate::mnist::{self, Split, SIDE};

const CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub per_class: usize,
    pub epochs: u32,
    pub dump_epochs: Vec<u32>,
    pub probe_per_class: usize,
    pub lr: f32,
    pub momentum: f32,
    pub batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            per_class: 500,
            epochs: 8,
            dump_epochs: vec![0, 8],
            probe_per_class: 100,
            lr: 0.01,
            momentum: 0.9,
            batch: 64,
        }
    }
}

impl TrainConfig {
    pub fn describe(&self) -> serde_json::Value {
        json!({
            "seed": self.seed,
            "samples_per_class": self.per_class,
            "epochs": self.epochs,
            "dump_epochs": self.dump_epochs,
            "probe_per_class": self.probe_per_class,
            "optimizer": "sgd",
            "lr": self.lr,
            "momentum": self.momentum,
            "batch_size": self.batch,
        })
    }
}

/// `C = alpha * A B + beta * C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    (rsc, csc): (usize, usize),
) {
    assert!(a.len() >= (m - 1) * rsa + (k - 1) * csa + 1);
    assert!(b.len() >= (k - 1) * rsb + (n - 1) * csb + 1);
    assert!(c.len() >= (m - 1) * rsc + (n - 1) * csc + 1);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa as isize, csa as isize,
            b.as_ptr(), rsb as isize, csb as isize,
            beta,
            c.as_mut_ptr(), rsc as isize, csc as isize,
        );
    }
}

#[derive(Debug, Clone)]
struct Conv {
    out: usize,
    inp: usize,
    w: Vec<f32>,
    b: Vec<f32>,
}

impl Conv {
    fn new(out: usize, inp: usize, rng: &mut ChaCha8Rng) -> Self {
        let k = inp * 9;
        let bound = (6.0 / k as f32).sqrt();
        Conv {
            out,
            inp,
            w: (0..out * k).map(|_| rng.random_range(-bound..bound)).collect(),
            b: vec![0.0; out],
        }
    }

    fn k(&self) -> usize {
        self.inp * 9
    }
}

fn im2col(x: &[f32], c: usize, side: usize) -> Vec<f32> {
    let hw = side * side;
    let mut col = vec![0.0f32; c * 9 * hw];
    for ci in 0..c {
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &mut col[(ci * 9 + dy * 3 + dx) * hw..][..hw];
                for y in 0..side {
                    let sy = y + dy;
                    if sy < 1 || sy > side {
                        continue;
                    }
                    for xx in 0..side {
                        let sx = xx + dx;
                        if sx < 1 || sx > side {
                            continue;
                        }
                        row[y * side + xx] = x[(ci * side + sy - 1) * side + sx - 1];
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &[f32], c: usize, side: usize) -> Vec<f32> {
    let hw = side * side;
    let mut x = vec![0.0f32; c * hw];
    for ci in 0..c {
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &col[(ci * 9 + dy * 3 + dx) * hw..][..hw];
                for y in 0..side {
                    let sy = y + dy;
                    if sy < 1 || sy > side {
                        continue;
                    }
                    for xx in 0..side {
                        let sx = xx + dx;
                        if sx < 1 || sx > side {
                            continue;
                        }
                        x[(ci * side + sy - 1) * side + sx - 1] += row[y * side + xx];
                    }
                }
            }
        }
    }
    x
}

fn conv_forward(conv: &Conv, col: &[f32], hw: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; conv.out * hw];
    for (o, plane) in out.chunks_exact_mut(hw).enumerate() {
        plane.fill(conv.b[o]);
    }
    gemm(conv.out, conv.k(), hw, &conv.w, (conv.k(), 1), col, (hw, 1), 1.0, &mut out, (hw, 1));
    out
}

fn relu(x: &[f32]) -> Vec<f32> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// 2x2 max-pool; switches hold the flat input index of each maximum.
fn maxpool(x: &[f32], c: usize, side: usize) -> (Vec<f32>, Vec<usize>) {
    let half = side / 2;
    let mut out = Vec::with_capacity(c * half * half);
    let mut sw = Vec::with_capacity(c * half * half);
    for ci in 0..c {
        for y in 0..half {
            for xx in 0..half {
                let mut best = (ci * side + 2 * y) * side + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = (ci * side + 2 * y + dy) * side + 2 * xx + dx;
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.push(x[best]);
                sw.push(best);
            }
        }
    }
    (out, sw)
}

#[derive(Debug, Clone)]
pub struct Model {
    c1: Conv,
    c2: Conv,
    c3: Conv,
    fc_w: Vec<f32>,
    fc_b: Vec<f32>,
}

const FLAT: usize = 64 * 7 * 7;

/// Every intermediate of one forward pass, in layer order.
struct Trace {
    input: Vec<f32>,
    col1: Vec<f32>,
    a1: Vec<f32>,
    r1: Vec<f32>,
    p1: Vec<f32>,
    sw1: Vec<usize>,
    col2: Vec<f32>,
    a2: Vec<f32>,
    r2: Vec<f32>,
    p2: Vec<f32>,
    sw2: Vec<usize>,
    col3: Vec<f32>,
    a3: Vec<f32>,
    r3: Vec<f32>,
    logits: Vec<f32>,
    probs: Vec<f32>,
}

impl Trace {
    /// Activations for layers 0..=11 of the reference architecture.
    fn layers(&self) -> [&[f32]; 12] {
        [
            &self.input, &self.a1, &self.r1, &self.p1, &self.a2, &self.r2, &self.p2, &self.a3,
            &self.r3, &self.r3, &self.logits, &self.probs,
        ]
    }
}

fn softmax(x: &[f32]) -> Vec<f32> {
    let m = x.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let e: Vec<f32> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f32 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

impl Model {
    pub fn new(rng: &mut ChaCha8Rng) -> Self {
        let c1 = Conv::new(32, 1, rng);
        let c2 = Conv::new(64, 32, rng);
        let c3 = Conv::new(64, 64, rng);
        let bound = (6.0 / FLAT as f32).sqrt();
        let fc_w = (0..CLASSES * FLAT).map(|_| rng.random_range(-bound..bound)).collect();
        Model { c1, c2, c3, fc_w, fc_b: vec![0.0; CLASSES] }
    }

    fn forward(&self, input: &[f32]) -> Trace {
        let col1 = im2col(input, 1, 28);
        let a1 = conv_forward(&self.c1, &col1, 784);
        let r1 = relu(&a1);
        let (p1, sw1) = maxpool(&r1, 32, 28);
        let col2 = im2col(&p1, 32, 14);
        let a2 = conv_forward(&self.c2, &col2, 196);
        let r2 = relu(&a2);
        let (p2, sw2) = maxpool(&r2, 64, 14);
        let col3 = im2col(&p2, 64, 7);
        let a3 = conv_forward(&self.c3, &col3, 49);
        let r3 = relu(&a3);
        let mut logits = self.fc_b.clone();
        gemm(CLASSES, FLAT, 1, &self.fc_w, (FLAT, 1), &r3, (1, 1), 1.0, &mut logits, (1, 1));
        let probs = softmax(&logits);
        Trace {
            input: input.to_vec(),
            col1, a1, r1, p1, sw1, col2, a2, r2, p2, sw2, col3, a3, r3, logits, probs,
        }
    }

    pub fn predict(&self, input: &[f32]) -> Vec<f32> {
        self.forward(input).probs
    }

    fn params(&self) -> BTreeMap<usize, Params> {
        let conv = |c: &Conv| Params {
            shape: vec![c.out, c.inp, 3, 3],
            weight: c.w.clone(),
            bias: c.b.clone(),
        };
        let mut out = BTreeMap::new();
        out.insert(1, conv(&self.c1));
        out.insert(4, conv(&self.c2));
        out.insert(7, conv(&self.c3));
        out.insert(
            10,
            Params { shape: vec![CLASSES, FLAT], weight: self.fc_w.clone(), bias: self.fc_b.clone() },
        );
        out
    }
}

/// Gradient buffers mirroring [`Model`].
struct Grads {
    c: [(Vec<f32>, Vec<f32>); 3],
    fc_w: Vec<f32>,
    fc_b: Vec<f32>,
}

impl Grads {
    fn zeros(m: &Model) -> Self {
        let z = |c: &Conv| (vec![0.0; c.w.len()], vec![0.0; c.b.len()]);
        Grads {
            c: [z(&m.c1), z(&m.c2), z(&m.c3)],
            fc_w: vec![0.0; m.fc_w.len()],
            fc_b: vec![0.0; m.fc_b.len()],
        }
    }

    fn scale(&mut self, s: f32) {
        for (w, b) in &mut self.c {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= s);
        }
        self.fc_w.iter_mut().chain(self.fc_b.iter_mut()).for_each(|v| *v *= s);
    }
}

/// Accumulates weight gradients of one conv and returns the input gradient
/// (or nothing for the first layer).
fn conv_backward(conv: &Conv, col: &[f32], dout: &[f32], hw: usize, side: usize, grads: &mut (Vec<f32>, Vec<f32>), need_input: bool) -> Option<Vec<f32>> {
    let k = conv.k();
    gemm(conv.out, hw, k, dout, (hw, 1), col, (1, hw), 1.0, &mut grads.0, (k, 1));
    for (o, plane) in dout.chunks_exact(hw).enumerate() {
        grads.1[o] += plane.iter().sum::<f32>();
    }
    if !need_input {
        return None;
    }
    let mut dcol = vec![0.0f32; k * hw];
    gemm(k, conv.out, hw, &conv.w, (1, k), dout, (hw, 1), 0.0, &mut dcol, (hw, 1));
    Some(col2im(&dcol, conv.inp, side))
}

fn relu_backward(mut d: Vec<f32>, pre: &[f32]) -> Vec<f32> {
    for (g, &a) in d.iter_mut().zip(pre) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
    d
}

fn unpool(d: &[f32], sw: &[usize], len: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; len];
    for (&g, &i) in d.iter().zip(sw) {
        out[i] += g;
    }
    out
}

impl Model {
    /// Adds this sample's gradients and returns its loss.
    fn backward(&self, t: &Trace, label: usize, g: &mut Grads) -> f32 {
        let loss = -t.probs[label].max(1e-12).ln();
        let mut dlogits = t.probs.clone();
        dlogits[label] -= 1.0;
        gemm(CLASSES, 1, FLAT, &dlogits, (1, 1), &t.r3, (FLAT, 1), 1.0, &mut g.fc_w, (FLAT, 1));
        for (b, d) in g.fc_b.iter_mut().zip(&dlogits) {
            *b += d;
        }
        let mut dr3 = vec![0.0f32; FLAT];
        gemm(1, CLASSES, FLAT, &dlogits, (CLASSES, 1), &self.fc_w, (FLAT, 1), 0.0, &mut dr3, (FLAT, 1));
        let da3 = relu_backward(dr3, &t.a3);
        let dp2 = conv_backward(&self.c3, &t.col3, &da3, 49, 7, &mut g.c[2], true).unwrap();
        let da2 = relu_backward(unpool(&dp2, &t.sw2, t.r2.len()), &t.a2);
        let dp1 = conv_backward(&self.c2, &t.col2, &da2, 196, 14, &mut g.c[1], true).unwrap();
        let da1 = relu_backward(unpool(&dp1, &t.sw1, t.r1.len()), &t.a1);
        conv_backward(&self.c1, &t.col1, &da1, 784, 28, &mut g.c[0], false);
        loss
    }

    fn apply(&mut self, g: &Grads, v: &mut Grads, lr: f32, momentum: f32) {
        let step = |w: &mut [f32], g: &[f32], v: &mut [f32]| {
            for ((w, g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                *v = momentum * *v + g;
                *w -= lr * *v;
            }
        };
        for (i, conv) in [&mut self.c1, &mut self.c2, &mut self.c3].into_iter().enumerate() {
            step(&mut conv.w, &g.c[i].0, &mut v.c[i].0);
            step(&mut conv.b, &g.c[i].1, &mut v.c[i].1);
        }
        step(&mut self.fc_w, &g.fc_w, &mut v.fc_w);
        step(&mut self.fc_b, &g.fc_b, &mut v.fc_b);
    }
}

/// Seeded per-class sample: for every class, the first `per_class` entries
/// of a class-wise shuffle. Growing `per_class` with the same seed yields a
/// superset.
pub fn stratified_indices(split: &Split, per_class: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * CLASSES);
    for class in 0..CLASSES as u8 {
        let mut idx = split.indices_of(class);
        idx.shuffle(&mut rng);
        assert!(idx.len() >= per_class, "class {class} has only {} images", idx.len());
        out.extend_from_slice(&idx[..per_class]);
    }
    out
}

fn accuracy(model: &Model, split: &Split) -> f64 {
    let correct = (0..split.len())
        .filter(|&i| {
            let p = model.predict(split.image(i));
            let mut best = 0;
            for (c, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = c;
                }
            }
            best == usize::from(split.labels[i])
        })
        .count();
    correct as f64 / split.len() as f64
}

/// Trains on MNIST per `cfg` and writes the dump to `out`. The probe set is
/// the first `probe_per_class` test images of each class.
pub fn train_and_dump(cfg: &TrainConfig, run_id: &str, out: &Path) -> Result<(), String> {
    let train = mnist::train()?;
    let test = mnist::test()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train_idx = stratified_indices(&train, cfg.per_class, cfg.seed);

    let mut probe = Vec::new();
    for class in 0..CLASSES as u8 {
        probe.extend(test.indices_of(class).into_iter().take(cfg.probe_per_class));
    }

    let mut model = Model::new(&mut rng);
    let mut snapshots: BTreeMap<u32, Model> = BTreeMap::new();
    if cfg.dump_epochs.contains(&0) {
        snapshots.insert(0, model.clone());
    }
    let mut velocity = Grads::zeros(&model);
    let mut loss_rows = Vec::new();
    let mut order = train_idx.clone();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for batch in order.chunks(cfg.batch) {
            let mut g = Grads::zeros(&model);
            for &i in batch {
                let t = model.forward(train.image(i));
                total += f64::from(model.backward(&t, usize::from(train.labels[i]), &mut g));
            }
            g.scale(1.0 / batch.len() as f32);
            model.apply(&g, &mut velocity, cfg.lr, cfg.momentum);
        }
        let acc = accuracy(&model, &test);
        loss_rows.push((epoch, total / order.len() as f64, acc));
        if cfg.dump_epochs.contains(&epoch) {
            snapshots.insert(epoch, model.clone());
        }
    }

    let net = Net::reference(1, SIDE, SIDE, CLASSES).dump_only(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 11]);
    let inputs: Vec<Vec<f32>> = probe.iter().map(|&i| test.image(i).to_vec()).collect();
    let labels: Vec<usize> = probe.iter().map(|&i| usize::from(test.labels[i])).collect();
    let epochs: Vec<u32> = snapshots.keys().copied().collect();
    let spec = DumpSpec {
        run_id: run_id.to_string(),
        dataset: "mnist".into(),
        num_classes: CLASSES,
        net,
        epochs: epochs.clone(),
        inputs,
        labels,
        weights: snapshots.iter().map(|(&t, m)| (t, m.params())).collect(),
        outputs: BTreeMap::new(),
        loss: loss_rows,
        extras: cfg.describe(),
    };
    write_with_model_activations(&spec, &snapshots, out);
    Ok(())
}

/// Writes the dump with activations from the trainer's own f32 forward
/// pass (what an exporter hooking a live model would record).
fn write_with_model_activations(spec: &DumpSpec, models: &BTreeMap<u32, Model>, out: &Path) {
    use crate::npy;
    spec.write_metadata(out);
    let n = spec.probe_count();
    for (&t, model) in models {
        let traces: Vec<Trace> = spec.inputs.iter().map(|x| model.forward(x)).collect();
        for (l, layer) in spec.net.layers.iter().enumerate() {
            if !layer.dumped {
                continue;
            }
            let data: Vec<f32> = traces.iter().flat_map(|tr| tr.layers()[l].iter().copied()).collect();
            npy::write(&out.join(format!("acts/epoch_{t}/layer_{l}.npy")), &layer.shape.file_shape(n), &data);
        }
        let probs: Vec<f32> = traces.iter().flat_map(|tr| tr.probs.iter().copied()).collect();
        npy::write(&out.join(format!("outputs/epoch_{t}.npy")), &[n, CLASSES], &probs);
        spec.write_weights(t, out);
    }
}
