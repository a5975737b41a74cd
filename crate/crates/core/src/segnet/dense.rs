//! Whole-image evaluation of a patch classifier.
//!
//! Running the network on every pixel's mirror-padded patch repeats most of
//! the convolution work. Here each spatial layer is instead evaluated once
//! over the padded image: a feature at patch-local position `(i, j)` of the
//! patch whose top-left corner sits at `o` lives at `o + d·(i, j)` in the full
//! map, where the dilation `d` doubles after every pooling layer. Convolution
//! taps and pooling windows are dilated accordingly. The features of each
//! pixel are then gathered in `(channel, row, col)` order and pushed through
//! the remaining fully connected layers exactly as in the per-patch path.
//! Summation order matches the per-patch routines, so the result is
//! bit-identical to calling [`Network::forward`] on every patch.

use rayon::prelude::*;

use super::network::{conv_plane, dense_forward, pool_forward, relu, softmax2, ConvGeometry, Layer, Network};
use crate::raster::{mirror_pad, GrayImage, RoiMask};

struct FullMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Vessel probability for every ROI pixel; pixels outside the ROI are 0.
pub(crate) fn probability_map(net: &Network, img: &GrayImage, roi: &RoiMask) -> Vec<f64> {
    let k = net.patch_side();
    let (padded, pw) = mirror_pad(img, k / 2);
    let mut map = FullMap { channels: 1, height: padded.len() / pw, width: pw, data: padded };
    let mut dilation = 1;
    let layers = net.arch().layers();
    let shapes = net.arch().shapes();

    let first_dense = layers.iter().position(|l| matches!(l, Layer::Dense { .. })).unwrap_or(layers.len());
    for (i, layer) in layers[..first_dense].iter().enumerate() {
        map = match *layer {
            Layer::Conv { kernel_h, kernel_w, in_channels, out_channels } => {
                let g = ConvGeometry { kernel_h, kernel_w, in_channels, out_channels, dilation };
                let oh = map.height - dilation * (kernel_h - 1);
                let ow = map.width - dilation * (kernel_w - 1);
                let params = net.layer_params(i);
                let taps = kernel_h * kernel_w;
                let (weights, bias) = params.split_at(out_channels * in_channels * taps);
                let mut data = vec![0.0; out_channels * oh * ow];
                data.par_chunks_mut(oh * ow).enumerate().for_each(|(o, plane)| {
                    let w = &weights[o * in_channels * taps..(o + 1) * in_channels * taps];
                    conv_plane(w, bias[o], g, &map.data, (map.height, map.width), plane, (oh, ow));
                });
                FullMap { channels: out_channels, height: oh, width: ow, data }
            }
            Layer::MaxPool2 => {
                let (oh, ow) = (map.height - dilation, map.width - dilation);
                let mut data = vec![0.0; map.channels * oh * ow];
                let plane_in = map.height * map.width;
                data.par_chunks_mut(oh * ow).enumerate().for_each(|(c, plane)| {
                    let chan = &map.data[c * plane_in..(c + 1) * plane_in];
                    pool_forward(chan, (map.height, map.width), plane, (oh, ow), 1, dilation, 1);
                });
                dilation *= 2;
                FullMap { channels: map.channels, height: oh, width: ow, data }
            }
            Layer::Relu => {
                map.data.par_iter_mut().for_each(|v| *v = relu(*v));
                map
            }
            Layer::Dense { .. } => unreachable!("spatial prefix has no dense layer"),
        };
    }

    let local = shapes[first_dense];
    let tail = &layers[first_dense..];
    let (w, h) = img.dims();
    let plane = map.height * map.width;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut features = vec![0.0; local.len()];
        for (x, cell) in row.iter_mut().enumerate() {
            if !roi.contains(x, y) {
                continue;
            }
            let mut at = 0;
            for c in 0..local.channels {
                for i in 0..local.height {
                    let base = c * plane + (y + dilation * i) * map.width + x;
                    for j in 0..local.width {
                        features[at] = map.data[base + dilation * j];
                        at += 1;
                    }
                }
            }
            let mut v = features.clone();
            for (ti, layer) in tail.iter().enumerate() {
                v = match *layer {
                    Layer::Dense { inputs, outputs } => {
                        dense_forward(net.layer_params(first_dense + ti), inputs, outputs, &v)
                    }
                    Layer::Relu => v.iter().map(|&a| relu(a)).collect(),
                    _ => unreachable!("architecture validation keeps spatial layers before dense ones"),
                };
            }
            *cell = softmax2(&v)[1];
        }
    });
    out
}
