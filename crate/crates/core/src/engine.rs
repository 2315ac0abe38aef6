//! Forward-pass kernels and the activation-retaining driver.
//!
//! Summation orders are part of the contract. A convolution output visits
//! input channels outermost, then kernel rows, then kernel columns. Each input
//! channel is summed from `0.0` into its own partial; the partials are then
//! added in ascending channel order, again from `0.0`, and the bias comes
//! last. That grouping is exactly "sum of per-channel intermediates plus
//! bias", so a neuron's decomposition reconstructs its activation bit for bit.
//! A dense output sums in ascending flat index and adds the bias last. Zero-padded taps are skipped; since an accumulator
//! seeded with `+0.0` can never become `-0.0`, skipping them yields the same
//! bits as adding their zero products.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::{ConvHyper, ConvWeights, DenseWeights, Error, LayerKind, LayerSpec, Model, Result, Shape, Tensor3};

/// Shape produced by `spec` from an input of shape `input`.
pub fn output_shape(input: Shape, spec: &LayerSpec) -> Result<Shape> {
    let shape = match spec.kind {
        LayerKind::Conv(h) => {
            if h.kernel_size == 0 || h.stride == 0 || h.out_channels == 0 {
                Err(Error::Shape(format!(
                    "kernel size, stride and filter count must be positive (k={}, s={}, out={})",
                    h.kernel_size, h.stride, h.out_channels
                )))
            } else {
                let dim = |n: usize| conv_extent(n, h.kernel_size, h.stride, h.padding);
                match (dim(input.height), dim(input.width)) {
                    (Some(oh), Some(ow)) => Ok(Shape::new(oh, ow, h.out_channels)),
                    _ => Err(Error::Shape(format!(
                        "{}x{} kernel with padding {} does not fit a {input} input",
                        h.kernel_size, h.kernel_size, h.padding
                    ))),
                }
            }
        }
        LayerKind::Relu => Ok(input),
        LayerKind::MaxPool(p) => {
            if p.pool_size == 0 || p.stride == 0 {
                Err(Error::Shape("pool size and stride must be positive".into()))
            } else {
                let dim = |n: usize| conv_extent(n, p.pool_size, p.stride, 0);
                match (dim(input.height), dim(input.width)) {
                    (Some(oh), Some(ow)) => Ok(Shape::new(oh, ow, input.channels)),
                    _ => Err(Error::Shape(format!(
                        "pool size {} exceeds the {input} input plane",
                        p.pool_size
                    ))),
                }
            }
        }
        LayerKind::Flatten => Ok(Shape::new(1, 1, input.len())),
        LayerKind::Dense { out_units } => {
            if out_units == 0 {
                Err(Error::Shape("dense layer needs at least one unit".into()))
            } else {
                Ok(Shape::new(1, 1, out_units))
            }
        }
    };
    shape.map_err(|e| e.in_layer(&spec.name))
}

/// `floor((n + 2p - k) / s) + 1`, or `None` when the window does not fit.
fn conv_extent(n: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (n + 2 * padding).checked_sub(kernel).map(|span| span / stride + 1)
}

pub fn conv_forward(input: &Tensor3, hyper: &ConvHyper, weights: &ConvWeights) -> Result<Tensor3> {
    check_conv(input, hyper, weights)?;
    let out_shape = conv_out_shape(input, hyper)?;
    let in_shape = input.shape();
    let src = input.data();
    let k = hyper.kernel_size;
    let mut out = Vec::with_capacity(out_shape.len());
    for oy in 0..out_shape.height {
        for ox in 0..out_shape.width {
            for o in 0..hyper.out_channels {
                let mut acc = 0.0f32;
                for i in 0..in_shape.channels {
                    let kernel = weights.kernel(o, i);
                    let mut partial = 0.0f32;
                    for r in 0..k {
                        let Some(iy) = tap(oy, r, hyper, in_shape.height) else { continue };
                        for q in 0..k {
                            let Some(ix) = tap(ox, q, hyper, in_shape.width) else { continue };
                            partial += src[in_shape.index(iy, ix, i)] * kernel[r * k + q];
                        }
                    }
                    acc += partial;
                }
                out.push(acc + weights.biases[o]);
            }
        }
    }
    Tensor3::from_vec(out_shape, out)
}

/// Convolution of one input channel with one kernel, without bias. Each
/// element sums kernel rows then columns from `0.0`, exactly as
/// [`conv_window_products`] followed by a row-major sum would.
pub fn conv_single_channel(
    input: &Tensor3,
    channel: usize,
    kernel: &[f32],
    hyper: &ConvHyper,
) -> Result<Tensor3> {
    input.check_channel(channel)?;
    let k = hyper.kernel_size;
    if kernel.len() != k * k {
        return Err(Error::Model(format!("kernel has {} values, expected {}", kernel.len(), k * k)));
    }
    let out_shape = conv_out_shape(input, hyper)?;
    let in_shape = input.shape();
    let mut out = Vec::with_capacity(out_shape.height * out_shape.width);
    for oy in 0..out_shape.height {
        for ox in 0..out_shape.width {
            let mut acc = 0.0f32;
            for r in 0..k {
                let Some(iy) = tap(oy, r, hyper, in_shape.height) else { continue };
                for q in 0..k {
                    let Some(ix) = tap(ox, q, hyper, in_shape.width) else { continue };
                    acc += input.data()[in_shape.index(iy, ix, channel)] * kernel[r * k + q];
                }
            }
            out.push(acc);
        }
    }
    Tensor3::from_vec(Shape::new(out_shape.height, out_shape.width, 1), out)
}

/// The zero-padded input patch under output position `(row, col)` and its
/// elementwise products with `kernel`, both `k*k` row-major.
pub fn conv_window_products(
    input: &Tensor3,
    channel: usize,
    kernel: &[f32],
    hyper: &ConvHyper,
    row: usize,
    col: usize,
) -> Result<(Vec<f32>, Vec<f32>)> {
    input.check_channel(channel)?;
    let k = hyper.kernel_size;
    let in_shape = input.shape();
    let mut patch = vec![0.0f32; k * k];
    let mut products = vec![0.0f32; k * k];
    for r in 0..k {
        for q in 0..k {
            let v = match (tap(row, r, hyper, in_shape.height), tap(col, q, hyper, in_shape.width)) {
                (Some(iy), Some(ix)) => input.at(iy, ix, channel),
                _ => 0.0,
            };
            patch[r * k + q] = v;
            products[r * k + q] = v * kernel[r * k + q];
        }
    }
    Ok((patch, products))
}

/// Input coordinate read by output position `out` at kernel offset `offset`,
/// or `None` when it lands in the zero padding.
#[inline]
fn tap(out: usize, offset: usize, hyper: &ConvHyper, extent: usize) -> Option<usize> {
    (out * hyper.stride + offset).checked_sub(hyper.padding).filter(|&i| i < extent)
}

fn conv_out_shape(input: &Tensor3, hyper: &ConvHyper) -> Result<Shape> {
    let spec = LayerSpec::new("conv", LayerKind::Conv(*hyper), None);
    output_shape(input.shape(), &spec).map_err(|e| e.root().clone())
}

fn check_conv(input: &Tensor3, hyper: &ConvHyper, weights: &ConvWeights) -> Result<()> {
    if weights.in_channels != input.channels()
        || weights.out_channels != hyper.out_channels
        || weights.kernel_size != hyper.kernel_size
    {
        return Err(Error::Shape(format!(
            "weights for {} -> {} channels with {}x{} kernels cannot convolve a {} input into {} channels",
            weights.in_channels,
            weights.out_channels,
            weights.kernel_size,
            weights.kernel_size,
            input.shape(),
            hyper.out_channels
        )));
    }
    Ok(())
}

pub fn relu_forward(input: &Tensor3) -> Tensor3 {
    input.map(relu)
}

#[inline]
pub fn relu(v: f32) -> f32 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Valid max pooling; rows and columns that do not fill a window are dropped.
pub fn maxpool_forward(input: &Tensor3, pool_size: usize, stride: usize) -> Result<Tensor3> {
    let hyper = ConvHyper { kernel_size: pool_size, stride, padding: 0, out_channels: input.channels() };
    let out_shape = conv_out_shape(input, &hyper)
        .map_err(|_| Error::Shape(format!("pool size {pool_size} exceeds the {} input plane", input.shape())))?;
    let mut out = Vec::with_capacity(out_shape.len());
    for oy in 0..out_shape.height {
        for ox in 0..out_shape.width {
            for c in 0..input.channels() {
                out.push(window_max(input, c, oy * stride, ox * stride, pool_size));
            }
        }
    }
    Tensor3::from_vec(out_shape, out)
}

/// Max of a window, scanning row-major and replacing only on strictly greater.
pub(crate) fn window_max(input: &Tensor3, channel: usize, row: usize, col: usize, size: usize) -> f32 {
    let mut best = input.at(row, col, channel);
    for r in row..row + size {
        for q in col..col + size {
            let v = input.at(r, q, channel);
            if v > best {
                best = v;
            }
        }
    }
    best
}

/// Relabel a volume as `1×1×N`; storage order is already `(row, col, channel)`.
pub fn flatten_forward(input: &Tensor3) -> Tensor3 {
    let shape = Shape::new(1, 1, input.shape().len());
    Tensor3::from_vec(shape, input.data().to_vec()).expect("length preserved")
}

pub fn dense_forward(flat: &Tensor3, weights: &DenseWeights) -> Result<Vec<f32>> {
    let x = flat.data();
    if x.len() != weights.in_len {
        return Err(Error::Shape(format!(
            "dense layer expects {} inputs, got {}",
            weights.in_len,
            x.len()
        )));
    }
    Ok((0..weights.out_units)
        .map(|o| {
            let acc = weights.row(o).iter().zip(x).fold(0.0f32, |acc, (w, v)| acc + w * v);
            acc + weights.biases[o]
        })
        .collect())
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let Some(max) = logits.iter().copied().reduce(|a, b| if b > a { b } else { a }) else {
        return Vec::new();
    };
    let exps: Vec<f32> = logits.iter().map(|&l| libm::expf(l - max)).collect();
    let sum: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the first maximal element.
pub fn argmax(values: &[f32]) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Hooks around each layer of [`run_forward_observed`]; used for per-layer timing.
pub trait ForwardObserver {
    fn layer_started(&mut self, _index: usize) {}
    fn layer_finished(&mut self, _index: usize) {}
}

impl ForwardObserver for () {}

/// One input's complete forward pass with every layer output retained.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceSession {
    model: Arc<Model>,
    input: Tensor3,
    activations: Vec<Tensor3>,
    logits: Vec<f32>,
    probabilities: Vec<f32>,
}

impl InferenceSession {
    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn input(&self) -> &Tensor3 {
        &self.input
    }

    /// One tensor per layer; the flatten output is `1×1×N` and the dense
    /// output `1×1×classes`.
    pub fn activations(&self) -> &[Tensor3] {
        &self.activations
    }

    pub fn logits(&self) -> &[f32] {
        &self.logits
    }

    pub fn probabilities(&self) -> &[f32] {
        &self.probabilities
    }

    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.model.arch().layer_index(name).ok_or_else(|| {
            let names: Vec<&str> = self.model.arch().layer_names().collect();
            Error::Query(format!("unknown layer `{name}`; valid layers: {}", names.join(", ")))
        })
    }

    pub fn activation(&self, name: &str) -> Result<&Tensor3> {
        Ok(&self.activations[self.layer_index(name)?])
    }

    /// Input of layer `index`: the image for the first layer, else the previous activation.
    pub fn layer_input(&self, index: usize) -> &Tensor3 {
        if index == 0 {
            &self.input
        } else {
            &self.activations[index - 1]
        }
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.probabilities).expect("at least one class")
    }
}

pub fn run_forward(model: Arc<Model>, input: Tensor3) -> Result<InferenceSession> {
    run_forward_observed(model, input, &mut ())
}

pub fn run_forward_observed(
    model: Arc<Model>,
    input: Tensor3,
    observer: &mut impl ForwardObserver,
) -> Result<InferenceSession> {
    let arch = model.arch();
    if input.shape() != arch.input_shape {
        return Err(Error::Shape(format!(
            "input is {}, model expects {}",
            input.shape(),
            arch.input_shape
        )));
    }
    if !input.is_finite() {
        return Err(Error::Validation("input contains non-finite values".into()));
    }
    let mut activations: Vec<Tensor3> = Vec::with_capacity(arch.layers.len());
    let mut logits = Vec::new();
    for (i, layer) in arch.layers.iter().enumerate() {
        observer.layer_started(i);
        let x = activations.last().unwrap_or(&input);
        let out = match layer.kind {
            LayerKind::Conv(h) => model.conv_weights(i).and_then(|w| conv_forward(x, &h, w)),
            LayerKind::Relu => Ok(relu_forward(x)),
            LayerKind::MaxPool(p) => maxpool_forward(x, p.pool_size, p.stride),
            LayerKind::Flatten => Ok(flatten_forward(x)),
            LayerKind::Dense { .. } => model.dense_weights(i).and_then(|w| dense_forward(x, w)).and_then(|l| {
                let t = Tensor3::from_vec(Shape::new(1, 1, l.len()), l.clone());
                logits = l;
                t
            }),
        }
        .map_err(|e| e.in_layer(&layer.name))?;
        observer.layer_finished(i);
        activations.push(out);
    }
    let probabilities = softmax(&logits);
    Ok(InferenceSession { model, input, activations, logits, probabilities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::PoolHyper;

    fn conv_weights(kernel: &[f32], bias: f32) -> ConvWeights {
        ConvWeights { out_channels: 1, in_channels: 1, kernel_size: 3, kernels: kernel.to_vec(), biases: vec![bias] }
    }

    #[test]
    fn output_shapes() {
        let conv = LayerSpec::new("c", LayerKind::Conv(ConvHyper::square3(10)), None);
        assert_eq!(output_shape(Shape::new(64, 64, 3), &conv).unwrap(), Shape::new(62, 62, 10));
        let pool = LayerSpec::new("p", LayerKind::MaxPool(PoolHyper::default()), None);
        assert_eq!(output_shape(Shape::new(26, 26, 10), &pool).unwrap(), Shape::new(13, 13, 10));
        assert_eq!(output_shape(Shape::new(5, 5, 1), &pool).unwrap(), Shape::new(2, 2, 1));
        let flat = LayerSpec::new("f", LayerKind::Flatten, None);
        assert_eq!(output_shape(Shape::new(13, 13, 10), &flat).unwrap(), Shape::new(1, 1, 1690));
        let padded = LayerSpec::new(
            "c",
            LayerKind::Conv(ConvHyper { kernel_size: 3, stride: 2, padding: 1, out_channels: 4 }),
            None,
        );
        assert_eq!(output_shape(Shape::new(7, 6, 3), &padded).unwrap(), Shape::new(4, 3, 4));
    }

    #[test]
    fn oversized_kernel_is_shape_error_naming_layer() {
        let conv = LayerSpec::new("conv_x", LayerKind::Conv(ConvHyper::square3(1)), None);
        let err = output_shape(Shape::new(2, 5, 1), &conv).unwrap_err();
        assert!(matches!(&err, Error::Layer { layer, source } if layer == "conv_x" && matches!(**source, Error::Shape(_))));
    }

    #[test]
    fn conv_all_ones() {
        let input = Tensor3::new(4, 4, 1, 1.0).unwrap();
        let out = conv_forward(&input, &ConvHyper::square3(1), &conv_weights(&[1.0; 9], 0.0)).unwrap();
        assert_eq!(out.shape(), Shape::new(2, 2, 1));
        assert_eq!(out.data(), &[9.0; 4]);
    }

    #[test]
    fn conv_identity_kernel_crops() {
        let input = Tensor3::from_vec(Shape::new(4, 4, 1), (0..16).map(|v| v as f32 * 0.5 - 3.0).collect()).unwrap();
        let mut k = [0.0; 9];
        k[4] = 1.0;
        let out = conv_forward(&input, &ConvHyper::square3(1), &conv_weights(&k, 0.0)).unwrap();
        assert_eq!(out.data(), &[input.at(1, 1, 0), input.at(1, 2, 0), input.at(2, 1, 0), input.at(2, 2, 0)]);
    }

    #[test]
    fn conv_weight_mismatch_is_shape_error() {
        let input = Tensor3::new(4, 4, 2, 1.0).unwrap();
        let err = conv_forward(&input, &ConvHyper::square3(1), &conv_weights(&[1.0; 9], 0.0)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn relu_clamps() {
        let t = Tensor3::from_vec(Shape::new(1, 1, 3), vec![-3.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&t).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor3::new(3, 3, 2, -1.5).unwrap();
        assert!(relu_forward(&neg).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maxpool_cases() {
        let t = Tensor3::from_vec(Shape::new(2, 2, 1), vec![1.0, -2.0, 3.0, 0.0]).unwrap();
        assert_eq!(maxpool_forward(&t, 2, 2).unwrap().data(), &[3.0]);
        let t = Tensor3::new(5, 5, 1, 0.0).unwrap();
        assert_eq!(maxpool_forward(&t, 2, 2).unwrap().shape(), Shape::new(2, 2, 1));
        let t = Tensor3::new(26, 26, 10, 0.0).unwrap();
        assert_eq!(maxpool_forward(&t, 2, 2).unwrap().shape(), Shape::new(13, 13, 10));
        let t = Tensor3::new(1, 4, 1, 0.0).unwrap();
        assert!(matches!(maxpool_forward(&t, 2, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn flatten_keeps_storage() {
        let t = Tensor3::from_vec(Shape::new(13, 13, 10), (0..1690).map(|v| v as f32).collect()).unwrap();
        let f = flatten_forward(&t);
        assert_eq!(f.shape(), Shape::new(1, 1, 1690));
        assert_eq!(f.data()[0], t.at(0, 0, 0));
        assert_eq!(f.data()[130], t.at(1, 0, 0));
    }

    #[test]
    fn dense_cases() {
        let flat = Tensor3::from_vec(Shape::new(1, 1, 3), vec![4.0, 5.0, 6.0]).unwrap();
        let picker = DenseWeights {
            out_units: 3,
            in_len: 3,
            matrix: vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            biases: vec![0.0; 3],
        };
        assert_eq!(dense_forward(&flat, &picker).unwrap(), vec![6.0, 4.0, 5.0]);
        let zero = DenseWeights { out_units: 2, in_len: 3, matrix: vec![0.0; 6], biases: vec![0.25, -1.0] };
        assert_eq!(dense_forward(&flat, &zero).unwrap(), vec![0.25, -1.0]);
        let short = DenseWeights { out_units: 1, in_len: 2, matrix: vec![0.0; 2], biases: vec![0.0] };
        assert!(matches!(dense_forward(&flat, &short), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 0.0]);
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!(softmax(&[]).is_empty());
    }

    #[test]
    fn argmax_takes_first_of_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }
}
