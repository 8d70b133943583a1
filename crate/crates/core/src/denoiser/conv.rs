//! Same-padded 2D cross-correlation and its gradients.
//!
//! Loops run in a fixed order (output channel, input channel, kernel row,
//! kernel column, image row, image column), so results are bitwise
//! reproducible.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Kernel `[out, in, k, k]` plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel: Tensor,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(out_channels: usize, in_channels: usize, k: usize) -> Self {
        ConvLayer {
            kernel: Tensor::zeros([out_channels, in_channels, k, k]),
            bias: vec![0.0; out_channels],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn size(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }
}

/// Range of output coordinates for which `coord + shift` stays inside `0..len`.
#[inline]
fn valid(len: usize, shift: isize) -> std::ops::Range<usize> {
    let lo = (-shift).max(0) as usize;
    let hi = (len as isize - shift).clamp(0, len as isize) as usize;
    lo..hi.max(lo)
}

/// Forward pass for one image laid out `[in_channels, h, w]`.
pub(crate) fn forward_single(layer: &ConvLayer, input: &[f64], h: usize, w: usize) -> Vec<f64> {
    let [cout, cin, k, _] = layer.kernel.shape();
    let pad = (k / 2) as isize;
    let plane = h * w;
    let kernel = layer.kernel.data();
    let mut out = vec![0.0; cout * plane];
    for o in 0..cout {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        out_plane.iter_mut().for_each(|v| *v = layer.bias[o]);
        for c in 0..cin {
            let in_plane = &input[c * plane..(c + 1) * plane];
            for ky in 0..k {
                let dy = ky as isize - pad;
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let wv = kernel[((o * cin + c) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let xs = valid(w, dx);
                    for y in valid(h, dy) {
                        let src_row = (y as isize + dy) as usize * w;
                        let dst = &mut out_plane[y * w + xs.start..y * w + xs.end];
                        let src_start = (src_row as isize + xs.start as isize + dx) as usize;
                        let src = &in_plane[src_start..src_start + dst.len()];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of one image: accumulates into `grad` (same shape as `layer`)
/// and returns the gradient with respect to the input.
pub(crate) fn backward_single(
    layer: &ConvLayer,
    input: &[f64],
    grad_out: &[f64],
    h: usize,
    w: usize,
    grad: &mut ConvLayer,
    need_input_grad: bool,
) -> Vec<f64> {
    let [cout, cin, k, _] = layer.kernel.shape();
    let pad = (k / 2) as isize;
    let plane = h * w;
    let kernel = layer.kernel.data();
    let mut grad_in = if need_input_grad {
        vec![0.0; cin * plane]
    } else {
        Vec::new()
    };
    for o in 0..cout {
        let go = &grad_out[o * plane..(o + 1) * plane];
        grad.bias[o] += go.iter().sum::<f64>();
        for c in 0..cin {
            let in_plane = &input[c * plane..(c + 1) * plane];
            for ky in 0..k {
                let dy = ky as isize - pad;
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let widx = ((o * cin + c) * k + ky) * k + kx;
                    let wv = kernel[widx];
                    let xs = valid(w, dx);
                    let mut acc = 0.0;
                    for y in valid(h, dy) {
                        let src_start =
                            ((y as isize + dy) as usize * w) as isize + xs.start as isize + dx;
                        let src_start = src_start as usize;
                        let g = &go[y * w + xs.start..y * w + xs.end];
                        let src = &in_plane[src_start..src_start + g.len()];
                        for (a, b) in g.iter().zip(src) {
                            acc += a * b;
                        }
                        if need_input_grad && wv != 0.0 {
                            let gi = &mut grad_in
                                [c * plane + src_start..c * plane + src_start + g.len()];
                            for (d, a) in gi.iter_mut().zip(g) {
                                *d += wv * a;
                            }
                        }
                    }
                    grad.kernel.data_mut()[widx] += acc;
                }
            }
        }
    }
    grad_in
}

/// Batched same-padded convolution.
pub fn conv2d_same(input: &Tensor, kernel: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let [batch, cin, h, w] = input.shape();
    let [cout, kin, kh, kw] = kernel.shape();
    if kh != kw || kh % 2 == 0 {
        return Err(Error::param(format!(
            "kernel must be square with odd size, got {kh}x{kw}"
        )));
    }
    if kin != cin {
        return Err(Error::param(format!(
            "kernel expects {kin} input channels, input has {cin}"
        )));
    }
    if bias.len() != cout {
        return Err(Error::param(format!(
            "{} biases for {cout} output channels",
            bias.len()
        )));
    }
    let layer = ConvLayer {
        kernel: kernel.clone(),
        bias: bias.to_vec(),
    };
    let mut data = Vec::with_capacity(batch * cout * h * w);
    for b in 0..batch {
        data.extend(forward_single(&layer, input.item(b), h, w));
    }
    Tensor::from_vec([batch, cout, h, w], data)
}
