//! Layered patch classifier: architecture descriptor, parameters, and the
//! per-patch forward and backward passes.
//!
//! Parameters live in one flat vector (per parameterized layer: weights, then
//! biases). Convolution weights are laid out `[out][in][ky][kx]`, dense
//! weights `[out][in]`. The class order of the two logits is
//! `[non-vessel, vessel]`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// Valid 2-D convolution, stride 1.
    Conv { kernel_h: usize, kernel_w: usize, in_channels: usize, out_channels: usize },
    /// 2×2 max pooling, stride 2, trailing odd row/column dropped.
    MaxPool2,
    /// Fully connected layer over the flattened `(channel, row, col)` input.
    Dense { inputs: usize, outputs: usize },
    Relu,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Conv { kernel_h, kernel_w, in_channels, out_channels } => {
                out_channels * in_channels * kernel_h * kernel_w + out_channels
            }
            Layer::Dense { inputs, outputs } => inputs * outputs + outputs,
            Layer::MaxPool2 | Layer::Relu => 0,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            Layer::Conv { kernel_h, kernel_w, in_channels, out_channels } => {
                (in_channels * kernel_h * kernel_w, out_channels * kernel_h * kernel_w)
            }
            Layer::Dense { inputs, outputs } => (inputs, outputs),
            _ => (0, 0),
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Layer::Conv { kernel_h, kernel_w, in_channels, out_channels } => {
                write!(f, "conv{kernel_h}x{kernel_w}:{in_channels}>{out_channels}")
            }
            Layer::MaxPool2 => f.write_str("pool2"),
            Layer::Dense { inputs, outputs } => write!(f, "dense:{inputs}>{outputs}"),
            Layer::Relu => f.write_str("relu"),
        }
    }
}

impl std::str::FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ModelFormat(format!("invalid layer descriptor `{s}`"));
        let pair = |t: &str| -> Result<(usize, usize)> {
            let (a, b) = t.split_once('>').ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        };
        match s {
            "relu" => Ok(Layer::Relu),
            "pool2" => Ok(Layer::MaxPool2),
            _ => {
                if let Some(rest) = s.strip_prefix("dense:") {
                    let (inputs, outputs) = pair(rest)?;
                    Ok(Layer::Dense { inputs, outputs })
                } else if let Some(rest) = s.strip_prefix("conv") {
                    let (kernel, chans) = rest.split_once(':').ok_or_else(bad)?;
                    let (kh, kw) = kernel.split_once('x').ok_or_else(bad)?;
                    let (in_channels, out_channels) = pair(chans)?;
                    Ok(Layer::Conv {
                        kernel_h: kh.parse().map_err(|_| bad())?,
                        kernel_w: kw.parse().map_err(|_| bad())?,
                        in_channels,
                        out_channels,
                    })
                } else {
                    Err(bad())
                }
            }
        }
    }
}

/// Activation tensor shape `(channels, rows, cols)`. After a dense layer the
/// shape is `(outputs, 1, 1)` and the tensor is no longer spatial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    patch_side: usize,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
}

impl Architecture {
    /// Validates that the layer shapes chain from a `patch_side`² single
    /// channel input down to two logits.
    pub fn new(patch_side: usize, layers: Vec<Layer>) -> Result<Self> {
        if patch_side < 3 || patch_side % 2 == 0 {
            return Err(Error::Shape(format!("patch side must be odd and >= 3, got {patch_side}")));
        }
        let mut shape = Shape { channels: 1, height: patch_side, width: patch_side };
        let mut spatial = true;
        let mut shapes = vec![shape];
        for (i, layer) in layers.iter().enumerate() {
            let fail = |msg: String| Error::Shape(format!("layer {i} ({layer}): {msg}"));
            shape = match *layer {
                Layer::Conv { kernel_h, kernel_w, in_channels, out_channels } => {
                    if !spatial {
                        return Err(fail("convolution after a dense layer".into()));
                    }
                    if in_channels != shape.channels {
                        return Err(fail(format!("expects {in_channels} channels, input has {}", shape.channels)));
                    }
                    if kernel_h == 0 || kernel_w == 0 || out_channels == 0 {
                        return Err(fail("zero-sized kernel or channel count".into()));
                    }
                    if kernel_h > shape.height || kernel_w > shape.width {
                        return Err(fail(format!("kernel exceeds {}x{} input", shape.height, shape.width)));
                    }
                    Shape {
                        channels: out_channels,
                        height: shape.height - kernel_h + 1,
                        width: shape.width - kernel_w + 1,
                    }
                }
                Layer::MaxPool2 => {
                    if !spatial || shape.height < 2 || shape.width < 2 {
                        return Err(fail(format!("cannot pool a {}x{} input", shape.height, shape.width)));
                    }
                    Shape { channels: shape.channels, height: shape.height / 2, width: shape.width / 2 }
                }
                Layer::Dense { inputs, outputs } => {
                    if inputs != shape.len() {
                        return Err(fail(format!("expects {inputs} inputs, previous layer yields {}", shape.len())));
                    }
                    if outputs == 0 {
                        return Err(fail("zero outputs".into()));
                    }
                    spatial = false;
                    Shape { channels: outputs, height: 1, width: 1 }
                }
                Layer::Relu => shape,
            };
            shapes.push(shape);
        }
        if shape.len() != 2 {
            return Err(Error::Shape(format!("network must end in 2 logits, ends in {}", shape.len())));
        }
        Ok(Self { patch_side, layers, shapes })
    }

    /// Default vessel classifier: 33×33 patch, two conv/pool stages, a
    /// 64-unit hidden layer and a two-way output.
    pub fn vessel_default() -> Self {
        Self::new(
            33,
            vec![
                Layer::Conv { kernel_h: 5, kernel_w: 5, in_channels: 1, out_channels: 16 },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Conv { kernel_h: 5, kernel_w: 5, in_channels: 16, out_channels: 32 },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Dense { inputs: 800, outputs: 64 },
                Layer::Relu,
                Layer::Dense { inputs: 64, outputs: 2 },
            ],
        )
        .expect("default architecture chains")
    }

    pub fn patch_side(&self) -> usize {
        self.patch_side
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Input shape followed by the output shape of every layer.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn describe(&self) -> String {
        self.layers.iter().map(Layer::to_string).collect::<Vec<_>>().join(",")
    }

    pub fn parse(patch_side: usize, descriptor: &str) -> Result<Self> {
        let layers = descriptor.split(',').map(str::parse).collect::<Result<Vec<Layer>>>()?;
        Self::new(patch_side, layers)
    }
}

/// Architecture plus its trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Per-layer activations from a forward pass: `acts[0]` is the input patch,
/// `acts[i + 1]` the output of layer `i`; the last entry holds the logits.
pub type Trace = Vec<Vec<f64>>;

impl Network {
    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.param_count();
        Self::from_params(arch, vec![0.0; n]).expect("length matches")
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "architecture needs {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        let mut offsets = Vec::with_capacity(arch.layers.len());
        let mut at = 0;
        for l in &arch.layers {
            offsets.push(at);
            at += l.param_count();
        }
        Ok(Self { arch, params, offsets })
    }

    /// Uniform ±√(6/(fan_in+fan_out)) weights, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut net = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, layer) in net.arch.layers.clone().iter().enumerate() {
            let n = layer.param_count();
            if n == 0 {
                continue;
            }
            let (fan_in, fan_out) = layer.fans();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n_bias = match *layer {
                Layer::Conv { out_channels, .. } => out_channels,
                Layer::Dense { outputs, .. } => outputs,
                _ => 0,
            };
            let start = net.offsets[i];
            for w in &mut net.params[start..start + n - n_bias] {
                *w = rng.random_range(-limit..limit);
            }
        }
        net
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn patch_side(&self) -> usize {
        self.arch.patch_side
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn layer_params(&self, i: usize) -> &[f64] {
        let n = self.arch.layers[i].param_count();
        &self.params[self.offsets[i]..self.offsets[i] + n]
    }

    fn check_patch(&self, patch: &[f64]) -> Result<()> {
        let k = self.arch.patch_side;
        if patch.len() != k * k {
            return Err(Error::arg(format!("patch has {} values, model expects {k}x{k}", patch.len())));
        }
        Ok(())
    }

    pub fn forward_trace(&self, patch: &[f64]) -> Result<Trace> {
        self.check_patch(patch)?;
        let mut acts: Trace = Vec::with_capacity(self.arch.layers.len() + 1);
        acts.push(patch.to_vec());
        for (i, layer) in self.arch.layers.iter().enumerate() {
            let input = acts.last().expect("non-empty");
            let in_shape = self.arch.shapes[i];
            let out = match *layer {
                Layer::Conv { kernel_h, kernel_w, in_channels, out_channels } => {
                    let out_shape = self.arch.shapes[i + 1];
                    let mut out = vec![0.0; out_shape.len()];
                    conv_forward(
                        self.layer_params(i),
                        ConvGeometry { kernel_h, kernel_w, in_channels, out_channels, dilation: 1 },
                        input,
                        (in_shape.height, in_shape.width),
                        &mut out,
                        (out_shape.height, out_shape.width),
                    );
                    out
                }
                Layer::MaxPool2 => {
                    let out_shape = self.arch.shapes[i + 1];
                    let mut out = vec![0.0; out_shape.len()];
                    pool_forward(input, (in_shape.height, in_shape.width), &mut out, (out_shape.height, out_shape.width), in_shape.channels, 1, 2);
                    out
                }
                Layer::Dense { inputs, outputs } => dense_forward(self.layer_params(i), inputs, outputs, input),
                Layer::Relu => input.iter().map(|&v| relu(v)).collect(),
            };
            acts.push(out);
        }
        Ok(acts)
    }

    /// Probability of the vessel class for one patch.
    pub fn forward(&self, patch: &[f64]) -> Result<f64> {
        let acts = self.forward_trace(patch)?;
        Ok(softmax2(acts.last().expect("logits"))[1])
    }

    /// Accumulates `d loss / d params` into `grads` given the gradient with
    /// respect to the logits.
    pub fn backward(&self, acts: &Trace, grad_logits: &[f64], grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut grad = grad_logits.to_vec();
        for (i, layer) in self.arch.layers.iter().enumerate().rev() {
            let input = &acts[i];
            let in_shape = self.arch.shapes[i];
            let out_shape = self.arch.shapes[i + 1];
            let start = self.offsets[i];
            let n = layer.param_count();
            grad = match *layer {
                Layer::Conv { kernel_h, kernel_w, in_channels, out_channels } => conv_backward(
                    self.layer_params(i),
                    &mut grads[start..start + n],
                    (kernel_h, kernel_w, in_channels, out_channels),
                    input,
                    (in_shape.height, in_shape.width),
                    &grad,
                    (out_shape.height, out_shape.width),
                    i > 0,
                ),
                Layer::MaxPool2 => {
                    let mut g_in = vec![0.0; input.len()];
                    let (ih, iw) = (in_shape.height, in_shape.width);
                    let (oh, ow) = (out_shape.height, out_shape.width);
                    for c in 0..in_shape.channels {
                        for y in 0..oh {
                            for x in 0..ow {
                                let base = c * ih * iw;
                                let mut best = base + 2 * y * iw + 2 * x;
                                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                    let idx = base + (2 * y + dy) * iw + 2 * x + dx;
                                    if input[idx] > input[best] {
                                        best = idx;
                                    }
                                }
                                g_in[best] += grad[(c * oh + y) * ow + x];
                            }
                        }
                    }
                    g_in
                }
                Layer::Dense { inputs, outputs } => {
                    let (w, b) = self.layer_params(i).split_at(inputs * outputs);
                    let _ = b;
                    let (gw, gb) = grads[start..start + n].split_at_mut(inputs * outputs);
                    let mut g_in = vec![0.0; inputs];
                    for o in 0..outputs {
                        let g = grad[o];
                        gb[o] += g;
                        let row = &w[o * inputs..(o + 1) * inputs];
                        let grow = &mut gw[o * inputs..(o + 1) * inputs];
                        for j in 0..inputs {
                            grow[j] += g * input[j];
                            g_in[j] += g * row[j];
                        }
                    }
                    g_in
                }
                Layer::Relu => input.iter().zip(&grad).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect(),
            };
        }
    }

    /// Cross-entropy of one labelled patch and its logit gradient.
    pub fn loss_and_grad(&self, patch: &[f64], vessel: bool, grads: &mut [f64], scale: f64) -> Result<f64> {
        let acts = self.forward_trace(patch)?;
        let logits = acts.last().expect("logits");
        let target = usize::from(vessel);
        let p = softmax2(logits);
        let loss = cross_entropy(logits, target);
        let mut g = [p[0] * scale, p[1] * scale];
        g[target] -= scale;
        self.backward(&acts, &g, grads);
        Ok(loss)
    }

    pub fn loss(&self, patch: &[f64], vessel: bool) -> Result<f64> {
        let acts = self.forward_trace(patch)?;
        Ok(cross_entropy(acts.last().expect("logits"), usize::from(vessel)))
    }
}

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Numerically stable two-way softmax.
#[inline]
pub fn softmax2(z: &[f64]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

#[inline]
pub(crate) fn cross_entropy(z: &[f64], target: usize) -> f64 {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    lse - z[target]
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub dilation: usize,
}

/// Valid (dilated) convolution over planar `[channel][row][col]` buffers.
///
/// Every output starts at its bias and accumulates taps in `(channel, ky,
/// kx)` order. The per-patch path (dilation 1) and the whole-image path
/// share this routine, so both produce bit-identical sums.
pub(crate) fn conv_forward(
    params: &[f64],
    g: ConvGeometry,
    input: &[f64],
    (ih, iw): (usize, usize),
    out: &mut [f64],
    (oh, ow): (usize, usize),
) {
    let taps = g.kernel_h * g.kernel_w;
    let (weights, bias) = params.split_at(g.out_channels * g.in_channels * taps);
    for (o, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
        conv_plane(&weights[o * g.in_channels * taps..(o + 1) * g.in_channels * taps], bias[o], g, input, (ih, iw), plane, (oh, ow));
    }
}

/// One output channel of [`conv_forward`].
pub(crate) fn conv_plane(
    weights: &[f64],
    bias: f64,
    g: ConvGeometry,
    input: &[f64],
    (ih, iw): (usize, usize),
    plane: &mut [f64],
    (oh, ow): (usize, usize),
) {
    plane.fill(bias);
    let d = g.dilation;
    for c in 0..g.in_channels {
        let chan = &input[c * ih * iw..(c + 1) * ih * iw];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let w = weights[(c * g.kernel_h + ky) * g.kernel_w + kx];
                for y in 0..oh {
                    let src = &chan[(y + d * ky) * iw + d * kx..][..ow];
                    let dst = &mut plane[y * ow..(y + 1) * ow];
                    for (o, &s) in dst.iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            }
        }
    }
}

/// 2×2 max over taps spaced `dilation` apart; output samples are spaced by
/// `stride` in the input.
pub(crate) fn pool_forward(
    input: &[f64],
    (ih, iw): (usize, usize),
    out: &mut [f64],
    (oh, ow): (usize, usize),
    channels: usize,
    dilation: usize,
    stride: usize,
) {
    for c in 0..channels {
        let chan = &input[c * ih * iw..(c + 1) * ih * iw];
        let plane = &mut out[c * oh * ow..(c + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let (sy, sx) = (stride * y, stride * x);
                let mut m = chan[sy * iw + sx];
                for (dy, dx) in [(0, dilation), (dilation, 0), (dilation, dilation)] {
                    let v = chan[(sy + dy) * iw + sx + dx];
                    if v > m {
                        m = v;
                    }
                }
                plane[y * ow + x] = m;
            }
        }
    }
}

pub(crate) fn dense_forward(params: &[f64], inputs: usize, outputs: usize, x: &[f64]) -> Vec<f64> {
    let (w, b) = params.split_at(inputs * outputs);
    (0..outputs)
        .map(|o| {
            let mut acc = b[o];
            for (wi, xi) in w[o * inputs..(o + 1) * inputs].iter().zip(x) {
                acc += wi * xi;
            }
            acc
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    params: &[f64],
    grads: &mut [f64],
    (kh, kw, cin, cout): (usize, usize, usize, usize),
    input: &[f64],
    (ih, iw): (usize, usize),
    grad_out: &[f64],
    (oh, ow): (usize, usize),
    need_input_grad: bool,
) -> Vec<f64> {
    let taps = kh * kw;
    let (weights, _) = params.split_at(cout * cin * taps);
    let (gw, gb) = grads.split_at_mut(cout * cin * taps);
    let mut g_in = if need_input_grad { vec![0.0; input.len()] } else { Vec::new() };
    for o in 0..cout {
        let go = &grad_out[o * oh * ow..(o + 1) * oh * ow];
        gb[o] += go.iter().sum::<f64>();
        for c in 0..cin {
            let chan = &input[c * ih * iw..(c + 1) * ih * iw];
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((o * cin + c) * kh + ky) * kw + kx;
                    let mut acc = 0.0;
                    for y in 0..oh {
                        let src = &chan[(y + ky) * iw + kx..][..ow];
                        for (g, s) in go[y * ow..(y + 1) * ow].iter().zip(src) {
                            acc += g * s;
                        }
                    }
                    gw[widx] += acc;
                    if need_input_grad {
                        let w = weights[widx];
                        let gchan = &mut g_in[c * ih * iw..(c + 1) * ih * iw];
                        for y in 0..oh {
                            let dst = &mut gchan[(y + ky) * iw + kx..][..ow];
                            for (d, g) in dst.iter_mut().zip(&go[y * ow..(y + 1) * ow]) {
                                *d += w * g;
                            }
                        }
                    }
                }
            }
        }
    }
    g_in
}
