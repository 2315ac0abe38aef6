//! Naive reference kernels for cross-checking the engine.
//!
//! These work on nested `[channel][row][col]` arrays built from scratch, pad
//! explicitly with zeros, and read weights straight out of the flat
//! weight-file stream with their own index arithmetic. They share nothing with
//! the engine beyond the declared summation order.

// index loops are deliberate: this is the naive reference
#![allow(dead_code, clippy::needless_range_loop)]

use convscope_core::{Architecture, LayerKind, Model, Tensor3};

pub type Planes = Vec<Vec<Vec<f32>>>;

pub fn to_planes(t: &Tensor3) -> Planes {
    let (h, w, c) = (t.height(), t.width(), t.channels());
    let mut planes = vec![vec![vec![0.0f32; w]; h]; c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                planes[ch][y][x] = t.data()[(y * w + x) * c + ch];
            }
        }
    }
    planes
}

/// Back to interleaved `(row, col, channel)` order.
pub fn interleave(planes: &Planes) -> Vec<f32> {
    let c = planes.len();
    let h = planes[0].len();
    let w = planes[0][0].len();
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for plane in planes {
                out.push(plane[y][x]);
            }
        }
    }
    out
}

/// `kernels[o][i]` is a `k*k` row-major grid.
pub fn conv(
    input: &Planes,
    kernels: &[Vec<Vec<f32>>],
    biases: &[f32],
    k: usize,
    stride: usize,
    pad: usize,
) -> Planes {
    let h = input[0].len();
    let w = input[0][0].len();
    let padded: Planes = input
        .iter()
        .map(|plane| {
            let mut p = vec![vec![0.0f32; w + 2 * pad]; h + 2 * pad];
            for y in 0..h {
                for x in 0..w {
                    p[y + pad][x + pad] = plane[y][x];
                }
            }
            p
        })
        .collect();
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![vec![vec![0.0f32; ow]; oh]; kernels.len()];
    for o in 0..kernels.len() {
        for y in 0..oh {
            for x in 0..ow {
                let mut s = 0.0f32;
                for i in 0..input.len() {
                    let mut channel_sum = 0.0f32;
                    for r in 0..k {
                        for q in 0..k {
                            channel_sum += padded[i][y * stride + r][x * stride + q] * kernels[o][i][r * k + q];
                        }
                    }
                    s += channel_sum;
                }
                out[o][y][x] = s + biases[o];
            }
        }
    }
    out
}

pub fn relu(input: &Planes) -> Planes {
    input
        .iter()
        .map(|p| p.iter().map(|row| row.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()).collect())
        .collect()
}

pub fn maxpool(input: &Planes, size: usize, stride: usize) -> Planes {
    let h = input[0].len();
    let w = input[0][0].len();
    let oh = (h - size) / stride + 1;
    let ow = (w - size) / stride + 1;
    input
        .iter()
        .map(|plane| {
            (0..oh)
                .map(|y| {
                    (0..ow)
                        .map(|x| {
                            let mut m = plane[y * stride][x * stride];
                            for r in 0..size {
                                for q in 0..size {
                                    let v = plane[y * stride + r][x * stride + q];
                                    if v > m {
                                        m = v;
                                    }
                                }
                            }
                            m
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn dense(x: &[f32], matrix: &[Vec<f32>], biases: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(matrix.len());
    for o in 0..matrix.len() {
        let mut s = 0.0f32;
        for f in 0..x.len() {
            s += matrix[o][f] * x[f];
        }
        out.push(s + biases[o]);
    }
    out
}

/// Every layer's output, interleaved, computed with the naive kernels and
/// weights pulled from the flat parameter stream.
pub fn forward(model: &Model, input: &Tensor3) -> Vec<Vec<f32>> {
    let arch: &Architecture = model.arch();
    let params = model.weights().to_flat();
    let mut cursor = 0usize;
    let mut take = |n: usize| {
        let s = params[cursor..cursor + n].to_vec();
        cursor += n;
        s
    };
    let mut planes = to_planes(input);
    let mut flat: Option<Vec<f32>> = None;
    let mut outs = Vec::new();
    for layer in &arch.layers {
        match layer.kind {
            LayerKind::Conv(h) => {
                let cin = planes.len();
                let k = h.kernel_size;
                let kernels: Vec<Vec<Vec<f32>>> =
                    (0..h.out_channels).map(|_| (0..cin).map(|_| take(k * k)).collect()).collect();
                let biases = take(h.out_channels);
                planes = conv(&planes, &kernels, &biases, k, h.stride, h.padding);
                outs.push(interleave(&planes));
            }
            LayerKind::Relu => {
                planes = relu(&planes);
                outs.push(interleave(&planes));
            }
            LayerKind::MaxPool(p) => {
                planes = maxpool(&planes, p.pool_size, p.stride);
                outs.push(interleave(&planes));
            }
            LayerKind::Flatten => {
                let f = interleave(&planes);
                outs.push(f.clone());
                flat = Some(f);
            }
            LayerKind::Dense { out_units } => {
                let x = flat.take().expect("dense follows flatten");
                let matrix: Vec<Vec<f32>> = (0..out_units).map(|_| take(x.len())).collect();
                let biases = take(out_units);
                outs.push(dense(&x, &matrix, &biases));
            }
        }
    }
    outs
}
