//! Forward inference of a dumped sequential CNN with max-pool switch
//! recording, and single-channel deconvnet projection back to input space.
//!
//! All arithmetic is done in f64. Conv layers are cross-correlations with
//! stride 1 and zero padding `k / 2` on each side; max-pooling is 2x2 with
//! stride 2.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView2, ArrayView3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::npy::read_tensor_file;
use crate::store::{LayerDescriptor, LayerKind, Pick, Run, SampleSelector};

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Conv { kernel: Array4<f64>, bias: Array1<f64> },
    Linear { weight: Array2<f64>, bias: Array1<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub epoch: u32,
    pub layers: Vec<LayerDescriptor>,
    pub params: BTreeMap<usize, LayerParams>,
}

fn widen(data: Vec<f32>) -> Vec<f64> {
    data.into_iter().map(f64::from).collect()
}

impl NetworkWeights {
    /// Checks that every conv/linear layer has parameters of a shape that
    /// fits its neighbours.
    pub fn new(epoch: u32, layers: Vec<LayerDescriptor>, params: BTreeMap<usize, LayerParams>) -> Result<Self> {
        for (i, desc) in layers.iter().enumerate() {
            if !desc.has_weights() {
                continue;
            }
            let prev = layers[i - 1].feature_shape();
            let this = desc.feature_shape();
            match (desc.kind, params.get(&i)) {
                (LayerKind::Conv, Some(LayerParams::Conv { kernel, bias })) => {
                    let k = kernel.shape();
                    if k[0] != this[0] || k[1] != prev[0] || k[2] % 2 == 0 || k[3] % 2 == 0 || bias.len() != this[0] {
                        return Err(Error::ShapeMismatch(format!(
                            "conv layer {i}: kernel {k:?} / bias [{}] do not fit {prev:?} -> {this:?}",
                            bias.len()
                        )));
                    }
                }
                (LayerKind::Linear, Some(LayerParams::Linear { weight, bias })) => {
                    let w = weight.shape();
                    if w[0] != this[2] || w[1] != prev.iter().product::<usize>() || bias.len() != this[2] {
                        return Err(Error::ShapeMismatch(format!(
                            "linear layer {i}: weight {w:?} / bias [{}] do not fit {prev:?} -> {this:?}",
                            bias.len()
                        )));
                    }
                }
                _ => {
                    return Err(Error::ShapeMismatch(format!(
                        "layer {i} ({}) has no matching parameters",
                        desc.kind.name()
                    )))
                }
            }
        }
        Ok(NetworkWeights { epoch, layers, params })
    }

    pub fn load(run: &Run, epoch: u32) -> Result<Self> {
        run.check_epoch(epoch)?;
        let layers = run.manifest().layers.clone();
        let mut params = BTreeMap::new();
        for desc in layers.iter().filter(|d| d.has_weights()) {
            let i = desc.index;
            let w = read_tensor_file(run.kernel_path(epoch, i))?;
            let b = read_tensor_file(run.bias_path(epoch, i))?;
            let bias = Array1::from(widen(b.data));
            let p = match (desc.kind, w.shape.as_slice()) {
                (LayerKind::Conv, &[o, c, kh, kw]) => LayerParams::Conv {
                    kernel: Array4::from_shape_vec((o, c, kh, kw), widen(w.data)).expect("shape checked"),
                    bias,
                },
                (LayerKind::Linear, &[o, d]) => LayerParams::Linear {
                    weight: Array2::from_shape_vec((o, d), widen(w.data)).expect("shape checked"),
                    bias,
                },
                (_, shape) => {
                    return Err(Error::ShapeMismatch(format!("layer {i}: weight file shape {shape:?}")));
                }
            };
            params.insert(i, p);
        }
        NetworkWeights::new(epoch, layers, params)
    }

    fn shape(&self, layer: usize) -> [usize; 3] {
        self.layers[layer].feature_shape()
    }
}

/// Argmax window position (0..4, row-major within the 2x2 window) of every
/// pooled output, per maxpool layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SwitchRecord {
    pub switches: BTreeMap<usize, Array3<u8>>,
}

pub fn conv2d(input: &Array3<f64>, kernel: &Array4<f64>, bias: &Array1<f64>) -> Array3<f64> {
    let (c_in, h, w) = input.dim();
    let (c_out, _, kh, kw) = kernel.dim();
    let (ph, pw) = (kh / 2, kw / 2);
    let mut out = Array3::<f64>::zeros((c_out, h, w));
    for o in 0..c_out {
        let mut plane = out.slice_mut(s![o, .., ..]);
        plane.fill(bias[o]);
        for i in 0..c_in {
            for dy in 0..kh {
                for dx in 0..kw {
                    let k = kernel[[o, i, dy, dx]];
                    if k == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let sy = y + dy;
                        if sy < ph || sy - ph >= h {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x + dx;
                            if sx < pw || sx - pw >= w {
                                continue;
                            }
                            plane[[y, x]] += k * input[[i, sy - ph, sx - pw]];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`conv2d`] without bias: correlation with the spatially
/// flipped kernel, mapping output channels back to input channels.
pub fn conv2d_transpose(output: &Array3<f64>, kernel: &Array4<f64>) -> Array3<f64> {
    let (c_out, h, w) = output.dim();
    let (_, c_in, kh, kw) = kernel.dim();
    let (ph, pw) = (kh / 2, kw / 2);
    let mut input = Array3::<f64>::zeros((c_in, h, w));
    for o in 0..c_out {
        for i in 0..c_in {
            for dy in 0..kh {
                for dx in 0..kw {
                    let k = kernel[[o, i, dy, dx]];
                    if k == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let sy = y + dy;
                        if sy < ph || sy - ph >= h {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x + dx;
                            if sx < pw || sx - pw >= w {
                                continue;
                            }
                            input[[i, sy - ph, sx - pw]] += k * output[[o, y, x]];
                        }
                    }
                }
            }
        }
    }
    input
}

/// 2x2 stride-2 max-pooling. Ties go to the first position in row-major
/// window order.
pub fn maxpool2x2(input: &Array3<f64>) -> (Array3<f64>, Array3<u8>) {
    let (c, h, w) = input.dim();
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Array3::<f64>::zeros((c, ho, wo));
    let mut switches = Array3::<u8>::zeros((c, ho, wo));
    for ch in 0..c {
        for y in 0..ho {
            for x in 0..wo {
                let mut best = input[[ch, 2 * y, 2 * x]];
                let mut pos = 0u8;
                for p in 1..4u8 {
                    let v = input[[ch, 2 * y + usize::from(p / 2), 2 * x + usize::from(p % 2)]];
                    if v > best {
                        best = v;
                        pos = p;
                    }
                }
                out[[ch, y, x]] = best;
                switches[[ch, y, x]] = pos;
            }
        }
    }
    (out, switches)
}

/// Scatters each pooled value to its recorded switch position in a zeroed
/// map of the pre-pool shape.
pub fn unpool2x2(pooled: &Array3<f64>, switches: &Array3<u8>, height: usize, width: usize) -> Result<Array3<f64>> {
    if pooled.dim() != switches.dim() {
        return Err(Error::ShapeMismatch(format!(
            "pooled map {:?} vs switches {:?}",
            pooled.dim(),
            switches.dim()
        )));
    }
    let (c, ho, wo) = pooled.dim();
    let mut out = Array3::<f64>::zeros((c, height, width));
    for ch in 0..c {
        for y in 0..ho {
            for x in 0..wo {
                let p = switches[[ch, y, x]];
                if p > 3 {
                    return Err(Error::ShapeMismatch(format!("switch {p} outside 2x2 window")));
                }
                out[[ch, 2 * y + usize::from(p / 2), 2 * x + usize::from(p % 2)]] = pooled[[ch, y, x]];
            }
        }
    }
    Ok(out)
}

fn as_vector(a: &Array3<f64>) -> Array1<f64> {
    a.iter().copied().collect()
}

fn from_vector(v: Array1<f64>) -> Array3<f64> {
    let d = v.len();
    v.into_shape_with_order((1, 1, d)).expect("vector reshape")
}

/// Runs one sample through the network. Returns every layer's activation
/// (`[C, H, W]`, vectors as `[1, 1, D]`) and the max-pool switches.
pub fn forward(weights: &NetworkWeights, input: ArrayView3<'_, f32>) -> Result<(Vec<Array3<f32>>, SwitchRecord)> {
    let (acts, switches) = forward_f64(weights, input)?;
    Ok((acts.into_iter().map(|a| a.mapv(|v| v as f32)).collect(), switches))
}

pub fn forward_f64(weights: &NetworkWeights, input: ArrayView3<'_, f32>) -> Result<(Vec<Array3<f64>>, SwitchRecord)> {
    let expected = weights.shape(0);
    if input.shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "input shape {:?}, network expects {expected:?}",
            input.shape()
        )));
    }
    let mut acts = vec![input.mapv(f64::from)];
    let mut record = SwitchRecord::default();
    for (l, desc) in weights.layers.iter().enumerate().skip(1) {
        let prev = &acts[l - 1];
        let next = match desc.kind {
            LayerKind::Input => prev.clone(),
            LayerKind::Conv => match &weights.params[&l] {
                LayerParams::Conv { kernel, bias } => conv2d(prev, kernel, bias),
                LayerParams::Linear { .. } => unreachable!("validated in NetworkWeights::new"),
            },
            LayerKind::Relu => prev.mapv(|v| v.max(0.0)),
            LayerKind::Maxpool => {
                let (out, sw) = maxpool2x2(prev);
                record.switches.insert(l, sw);
                out
            }
            LayerKind::Flatten => from_vector(as_vector(prev)),
            LayerKind::Linear => match &weights.params[&l] {
                LayerParams::Linear { weight, bias } => from_vector(weight.dot(&as_vector(prev)) + bias),
                LayerParams::Conv { .. } => unreachable!("validated in NetworkWeights::new"),
            },
            LayerKind::Output => {
                let v = as_vector(prev);
                let max = v.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let e = v.mapv(|x| (x - max).exp());
                let sum = e.sum();
                from_vector(e / sum)
            }
        };
        if next.shape() != weights.shape(l) {
            return Err(Error::ShapeMismatch(format!(
                "layer {l} produced {:?}, manifest says {:?}",
                next.shape(),
                weights.shape(l)
            )));
        }
        acts.push(next);
    }
    Ok((acts, record))
}

/// Projects one channel's feature map at `layer` back to input space by
/// walking down the network: rectify at relu layers, unpool with the
/// recorded switches at maxpool layers, transposed convolution (no bias)
/// at conv layers. Flatten and linear layers are undone by reshaping and by
/// the transposed weight. All other channels start at zero.
pub fn deconv_project(
    weights: &NetworkWeights,
    switches: &SwitchRecord,
    layer: usize,
    channel: usize,
    featmap: ArrayView2<'_, f32>,
) -> Result<Array3<f64>> {
    let desc = weights.layers.get(layer).ok_or(Error::UnknownLayer(layer))?;
    if desc.kind == LayerKind::Output {
        return Err(Error::InvalidArgument("cannot project from the softmax output layer".into()));
    }
    let [c, h, w] = desc.feature_shape();
    if channel >= c {
        return Err(Error::UnknownChannel { layer, channel });
    }
    if featmap.shape() != [h, w] {
        return Err(Error::ShapeMismatch(format!(
            "feature map {:?}, layer {layer} maps are [{h}, {w}]",
            featmap.shape()
        )));
    }
    let mut state = Array3::<f64>::zeros((c, h, w));
    state
        .slice_mut(s![channel, .., ..])
        .assign(&featmap.mapv(f64::from));

    for l in (1..=layer).rev() {
        let [pc, ph, pw] = weights.shape(l - 1);
        state = match weights.layers[l].kind {
            LayerKind::Relu => state.mapv(|v| v.max(0.0)),
            LayerKind::Maxpool => {
                let sw = switches.switches.get(&l).ok_or(Error::MissingSwitches(l))?;
                unpool2x2(&state, sw, ph, pw)?
            }
            LayerKind::Conv => match &weights.params[&l] {
                LayerParams::Conv { kernel, .. } => conv2d_transpose(&state, kernel),
                LayerParams::Linear { .. } => unreachable!("validated in NetworkWeights::new"),
            },
            LayerKind::Flatten => as_vector(&state)
                .into_shape_with_order((pc, ph, pw))
                .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
            LayerKind::Linear => match &weights.params[&l] {
                LayerParams::Linear { weight, .. } => {
                    from_vector(weight.t().dot(&as_vector(&state)))
                        .into_shape_with_order((pc, ph, pw))
                        .map_err(|e| Error::ShapeMismatch(e.to_string()))?
                }
                LayerParams::Conv { .. } => unreachable!("validated in NetworkWeights::new"),
            },
            LayerKind::Input | LayerKind::Output => {
                return Err(Error::InvalidArgument(format!("layer {l} cannot be inverted")));
            }
        };
    }
    Ok(state)
}

/// One sample's dumped input, `[C, H, W]`.
pub fn sample_input(run: &Run, epoch: u32, sample: usize) -> Result<Array3<f32>> {
    let block = run.block(0, epoch, &SampleSelector::Ids(vec![sample]), Pick::All)?;
    Ok(block.data.index_axis_move(ndarray::Axis(0), 0))
}

/// One dumped feature map, `[H, W]`.
pub fn feature_map(run: &Run, epoch: u32, layer: usize, channel: usize, sample: usize) -> Result<Array2<f32>> {
    let block = run.block(layer, epoch, &SampleSelector::Ids(vec![sample]), Pick::One(channel))?;
    Ok(block.data.slice(s![0, 0, .., ..]).to_owned())
}

/// Deconvnet projection of `(layer, channel)` for one probe sample, using
/// that epoch's dumped weights and switches recomputed from the dumped
/// input.
pub fn project_sample(run: &Run, epoch: u32, layer: usize, channel: usize, sample: usize) -> Result<Array3<f64>> {
    let weights = NetworkWeights::load(run, epoch)?;
    let input = sample_input(run, epoch, sample)?;
    let (acts, switches) = forward(&weights, input.view())?;
    let desc = run.layer(layer)?;
    if channel >= desc.channels {
        return Err(Error::UnknownChannel { layer, channel });
    }
    let map = acts[layer].slice(s![channel, .., ..]).to_owned();
    deconv_project(&weights, &switches, layer, channel, map.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};

    fn layer(index: usize, kind: LayerKind, c: usize, hw: Option<(usize, usize)>, units: Option<usize>) -> LayerDescriptor {
        LayerDescriptor {
            index,
            name: format!("{}{index}", kind.name()),
            kind,
            channels: c,
            height: hw.map(|p| p.0),
            width: hw.map(|p| p.1),
            units,
            dumped: true,
        }
    }

    #[test]
    fn identity_conv_then_pool_gives_window_maxima() {
        let layers = vec![
            layer(0, LayerKind::Input, 1, Some((4, 4)), None),
            layer(1, LayerKind::Conv, 1, Some((4, 4)), None),
            layer(2, LayerKind::Maxpool, 1, Some((2, 2)), None),
        ];
        let mut params = BTreeMap::new();
        params.insert(1, LayerParams::Conv { kernel: Array4::ones((1, 1, 1, 1)), bias: Array1::zeros(1) });
        let net = NetworkWeights::new(0, layers, params).unwrap();
        let input = array![[[1.0f32, 5.0, 2.0, 2.0], [3.0, 4.0, 2.0, 2.0], [0.0, 0.0, 9.0, 1.0], [0.0, 7.0, 1.0, 9.0]]];
        let (acts, sw) = forward(&net, input.view()).unwrap();
        assert_eq!(acts[2], array![[[5.0f32, 2.0], [7.0, 9.0]]]);
        assert_eq!(sw.switches[&2], array![[[1u8, 0], [3, 0]]]);
    }

    #[test]
    fn padding_keeps_spatial_size_and_matches_hand_sum() {
        let input = Array::from_shape_vec((1, 3, 3), (1..=9).map(f64::from).collect()).unwrap();
        let kernel = Array4::ones((1, 1, 3, 3));
        let out = conv2d(&input, &kernel, &Array1::from(vec![0.5]));
        assert_eq!(out.dim(), (1, 3, 3));
        assert_eq!(out[[0, 1, 1]], 45.5);
        assert_eq!(out[[0, 0, 0]], 1.0 + 2.0 + 4.0 + 5.0 + 0.5);
    }

    #[test]
    fn transpose_is_the_adjoint_of_conv() {
        let x = Array::from_shape_fn((2, 5, 4), |(c, y, x)| ((c * 7 + y * 3 + x) % 5) as f64 - 2.0);
        let y = Array::from_shape_fn((3, 5, 4), |(c, y, x)| ((c + y * 2 + x * 5) % 7) as f64 - 3.0);
        let k = Array::from_shape_fn((3, 2, 3, 3), |(o, i, a, b)| ((o * 11 + i * 5 + a * 3 + b) % 9) as f64 - 4.0);
        let lhs: f64 = (conv2d(&x, &k, &Array1::zeros(3)) * &y).sum();
        let rhs: f64 = (&x * &conv2d_transpose(&y, &k)).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn unpool_puts_values_at_switches() {
        let x = Array::from_shape_fn((2, 4, 6), |(c, y, x)| ((c * 13 + y * 7 + x * 3) % 17) as f64);
        let (pooled, sw) = maxpool2x2(&x);
        let back = unpool2x2(&pooled, &sw, 4, 6).unwrap();
        assert_eq!(back.sum(), pooled.sum());
        for ((c, y, xx), &v) in back.indexed_iter() {
            if v != 0.0 {
                assert_eq!(usize::from(sw[[c, y / 2, xx / 2]]), (y % 2) * 2 + xx % 2);
            }
        }
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let layers = vec![layer(0, LayerKind::Input, 1, Some((4, 4)), None)];
        let net = NetworkWeights::new(0, layers, BTreeMap::new()).unwrap();
        let bad = Array3::<f32>::zeros((1, 3, 4));
        assert!(matches!(forward(&net, bad.view()), Err(Error::ShapeMismatch(_))));
    }
}
