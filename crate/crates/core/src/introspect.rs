//! View data derived on demand from a retained [`InferenceSession`].
//!
//! - [`decompose_conv_neuron`]: one intermediate map per input channel, the
//!   kernels, and their recombination with the bias.
//! - [`flatten_wiring`]: every flatten element's path into one output logit.
//! - [`trace_window`]: the single sliding-window computation behind one
//!   output pixel of a conv, ReLU or max-pool layer.
//! - [`color_scales`]: shared `max_abs` per layer, unit, module or globally.
//! - [`edge_topology`]: neuron-level connectivity between consecutive layers.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::engine::{conv_single_channel, conv_window_products, relu, window_max};
use crate::{ColorScale, Error, InferenceSession, LayerKind, Model, Result, Scope, Shape, Tensor3, Window};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvDecomposition {
    pub layer: String,
    pub out_channel: usize,
    pub kernel_size: usize,
    /// One single-channel map per input channel, bias excluded.
    pub intermediates: Vec<Tensor3>,
    /// One `kernel_size²` row-major grid per input channel.
    pub kernels: Vec<Vec<f32>>,
    pub bias: f32,
    /// Elementwise sum of the intermediates in channel order, plus the bias.
    pub reconstructed: Tensor3,
}

pub fn decompose_conv_neuron(session: &InferenceSession, layer: &str, out_channel: usize) -> Result<ConvDecomposition> {
    let index = session.layer_index(layer)?;
    let spec = &session.model().arch().layers[index];
    let LayerKind::Conv(hyper) = spec.kind else {
        return Err(Error::Query(format!("`{layer}` is a {} layer, not a convolution", spec.kind.label())));
    };
    if out_channel >= hyper.out_channels {
        return Err(Error::Bounds(format!(
            "channel {out_channel} outside `{layer}` with {} channels",
            hyper.out_channels
        )));
    }
    let weights = session.model().conv_weights(index)?;
    let input = session.layer_input(index);
    let mut intermediates = Vec::with_capacity(weights.in_channels);
    let mut kernels = Vec::with_capacity(weights.in_channels);
    for i in 0..weights.in_channels {
        let kernel = weights.kernel(out_channel, i);
        intermediates.push(conv_single_channel(input, i, kernel, &hyper)?);
        kernels.push(kernel.to_vec());
    }
    let bias = weights.biases[out_channel];
    let plane = intermediates[0].shape();
    let reconstructed: Vec<f32> = (0..plane.len())
        .map(|p| intermediates.iter().fold(0.0f32, |acc, m| acc + m.data()[p]) + bias)
        .collect();
    Ok(ConvDecomposition {
        layer: layer.to_string(),
        out_channel,
        kernel_size: hyper.kernel_size,
        intermediates,
        kernels,
        bias,
        reconstructed: Tensor3::from_vec(plane, reconstructed)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlattenEdge {
    /// `(row, col, channel)` in the layer feeding the flatten.
    pub source: (usize, usize, usize),
    pub flat_index: usize,
    pub source_value: f32,
    pub weight: f32,
    pub contribution: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlattenWiring {
    pub class_index: usize,
    pub class_label: String,
    /// Name of the layer whose output is unrolled.
    pub source_layer: String,
    pub source_shape: Shape,
    pub edges: Vec<FlattenEdge>,
    pub bias: f32,
    pub logit: f32,
}

impl FlattenWiring {
    /// `bias + Σ contributions`, summed in flat order.
    pub fn reconstructed_logit(&self) -> f32 {
        self.edges.iter().fold(0.0f32, |acc, e| acc + e.contribution) + self.bias
    }
}

pub fn flatten_wiring(session: &InferenceSession, class_index: usize) -> Result<FlattenWiring> {
    let arch = session.model().arch();
    if class_index >= arch.class_labels.len() {
        return Err(Error::Bounds(format!(
            "class {class_index} outside {} classes",
            arch.class_labels.len()
        )));
    }
    let flatten = flatten_index(session.model())?;
    let source = session.layer_input(flatten);
    let source_layer = if flatten == 0 { "input".to_string() } else { arch.layers[flatten - 1].name.clone() };
    let dense = session.model().dense_weights(flatten + 1)?;
    let row = dense.row(class_index);
    let shape = source.shape();
    let edges = source
        .data()
        .iter()
        .zip(row)
        .enumerate()
        .map(|(flat_index, (&source_value, &weight))| FlattenEdge {
            source: shape.coords(flat_index),
            flat_index,
            source_value,
            weight,
            contribution: source_value * weight,
        })
        .collect();
    Ok(FlattenWiring {
        class_index,
        class_label: arch.class_labels[class_index].clone(),
        source_layer,
        source_shape: shape,
        edges,
        bias: dense.biases[class_index],
        logit: session.logits()[class_index],
    })
}

fn flatten_index(model: &Model) -> Result<usize> {
    model
        .arch()
        .layers
        .iter()
        .position(|l| matches!(l.kind, LayerKind::Flatten))
        .ok_or_else(|| Error::Validation("model has no flatten layer".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Conv,
    Relu,
    MaxPool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowTrace {
    pub kind: TraceKind,
    pub layer: String,
    pub out_channel: usize,
    /// Input channel read by the window; equals `out_channel` for ReLU and max pooling.
    pub in_channel: usize,
    pub row: usize,
    pub col: usize,
    /// For convolutions the origin is in zero-padded input coordinates, and
    /// padded taps hold `0.0`.
    pub input_window: Window,
    pub padding: usize,
    pub kernel: Option<Vec<f32>>,
    pub products: Option<Vec<f32>>,
    pub result: f32,
}

/// Trace the computation behind output pixel `(row, col)` of `out_channel`.
/// Convolution traces follow one input channel's intermediate map, so
/// `in_channel` is required for them and ignored otherwise.
pub fn trace_window(
    session: &InferenceSession,
    layer: &str,
    out_channel: usize,
    row: usize,
    col: usize,
    in_channel: Option<usize>,
) -> Result<WindowTrace> {
    let index = session.layer_index(layer)?;
    let spec = &session.model().arch().layers[index];
    let out = &session.activations()[index];
    if out_channel >= out.channels() || row >= out.height() || col >= out.width() {
        return Err(Error::Bounds(format!(
            "pixel ({row}, {col}) channel {out_channel} outside the {} output of `{layer}`",
            out.shape()
        )));
    }
    let input = session.layer_input(index);
    let base = |kind, in_channel, input_window, padding, kernel, products, result| WindowTrace {
        kind,
        layer: layer.to_string(),
        out_channel,
        in_channel,
        row,
        col,
        input_window,
        padding,
        kernel,
        products,
        result,
    };
    match spec.kind {
        LayerKind::Conv(hyper) => {
            let i = in_channel.ok_or_else(|| {
                Error::Query(format!("tracing convolution `{layer}` needs an input channel"))
            })?;
            if i >= input.channels() {
                return Err(Error::Bounds(format!(
                    "input channel {i} outside the {} input of `{layer}`",
                    input.shape()
                )));
            }
            let kernel = session.model().conv_weights(index)?.kernel(out_channel, i);
            let (patch, products) = conv_window_products(input, i, kernel, &hyper, row, col)?;
            let result = products.iter().fold(0.0f32, |acc, p| acc + p);
            let window = Window {
                origin_row: row * hyper.stride,
                origin_col: col * hyper.stride,
                size: hyper.kernel_size,
                values: patch,
            };
            Ok(base(TraceKind::Conv, i, window, hyper.padding, Some(kernel.to_vec()), Some(products), result))
        }
        LayerKind::Relu => {
            let window = input.extract_window(out_channel, row, col, 1)?;
            let result = relu(window.values[0]);
            Ok(base(TraceKind::Relu, out_channel, window, 0, None, None, result))
        }
        LayerKind::MaxPool(p) => {
            let window = input.extract_window(out_channel, row * p.stride, col * p.stride, p.pool_size)?;
            let result = window_max(input, out_channel, row * p.stride, col * p.stride, p.pool_size);
            Ok(base(TraceKind::MaxPool, out_channel, window, 0, None, None, result))
        }
        LayerKind::Flatten | LayerKind::Dense { .. } => Err(Error::Query(format!(
            "`{layer}` is a {} layer; window traces cover conv, relu and maxpool layers",
            spec.kind.label()
        ))),
    }
}

/// Output positions of a layer in the order a sliding window visits them (row-major).
pub fn window_positions(session: &InferenceSession, layer: &str) -> Result<Vec<(usize, usize)>> {
    let out = session.activation(layer)?;
    Ok((0..out.height()).flat_map(|r| (0..out.width()).map(move |c| (r, c))).collect())
}

/// One scale per group in `scope`. Layers without a group tag form their own
/// group under the unit and module scopes. The input image is never included.
pub fn color_scales(session: &InferenceSession, scope: Scope) -> Vec<ColorScale> {
    let arch = session.model().arch();
    let mut groups: Vec<ColorScale> = Vec::new();
    for (spec, act) in arch.layers.iter().zip(session.activations()) {
        let key = match (scope, spec.group) {
            (Scope::Global, _) => "global".to_string(),
            (Scope::Unit, Some(g)) => format!("unit_{}", g.unit),
            (Scope::Module, Some(g)) => format!("module_{}", g.module),
            _ => spec.name.clone(),
        };
        let max_abs = act.max_abs();
        match groups.iter_mut().find(|g| g.key == key) {
            Some(g) => {
                g.layers.push(spec.name.clone());
                if max_abs > g.max_abs {
                    g.max_abs = max_abs;
                }
            }
            None => groups.push(ColorScale::new(scope, key, alloc::vec![spec.name.clone()], max_abs)),
        }
    }
    groups
}

/// The scale in `scales` that covers `layer`.
pub fn scale_for_layer<'a>(scales: &'a [ColorScale], layer: &str) -> Option<&'a ColorScale> {
    scales.iter().find(|s| s.covers(layer))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Every target neuron connects to every source neuron (conv, dense).
    Full,
    /// Target neuron `i` connects to source neuron `i` only (ReLU, max pooling).
    OneToOne,
    /// Each source element feeds one flat neuron.
    Unroll,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTopology {
    pub layer: String,
    /// Layer the edges come from; dense layers skip over the flatten layer.
    pub source: String,
    pub connectivity: Connectivity,
    pub source_neurons: usize,
    pub target_neurons: usize,
    /// `(source neuron, target neuron)` pairs. For flatten, sources are
    /// channels and targets flat indices.
    pub edges: Vec<(usize, usize)>,
}

pub fn edge_topology(model: &Model) -> Result<Vec<LayerTopology>> {
    let arch = model.arch();
    let shapes = arch.shapes()?;
    let name_of = |i: usize| if i == 0 { "input".to_string() } else { arch.layers[i - 1].name.clone() };
    let shape_before = |i: usize| if i == 0 { arch.input_shape } else { shapes[i - 1] };
    let mut out = Vec::with_capacity(arch.layers.len());
    for (i, spec) in arch.layers.iter().enumerate() {
        let (source, from, connectivity, edges) = match spec.kind {
            LayerKind::Conv(h) => {
                let from = shape_before(i).channels;
                let edges = (0..h.out_channels).flat_map(|o| (0..from).map(move |s| (s, o))).collect();
                (name_of(i), from, Connectivity::Full, edges)
            }
            LayerKind::Relu | LayerKind::MaxPool(_) => {
                let n = shape_before(i).channels;
                (name_of(i), n, Connectivity::OneToOne, (0..n).map(|c| (c, c)).collect())
            }
            LayerKind::Flatten => {
                let s = shape_before(i);
                let edges = (0..s.len()).map(|f| (s.coords(f).2, f)).collect();
                (name_of(i), s.channels, Connectivity::Unroll, edges)
            }
            LayerKind::Dense { out_units } => {
                // neuron-level view: classes connect to the channels that were unrolled
                let from = shape_before(i - 1).channels;
                let edges = (0..out_units).flat_map(|o| (0..from).map(move |s| (s, o))).collect();
                (name_of(i - 1), from, Connectivity::Full, edges)
            }
        };
        out.push(LayerTopology {
            layer: spec.name.clone(),
            source,
            connectivity,
            source_neurons: from,
            target_neurons: shapes[i].channels,
            edges,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{fixture_image, fixture_model, zero_model};
    use crate::{run_forward, Architecture};
    use alloc::sync::Arc;

    fn session(seed: u64) -> InferenceSession {
        let model = Arc::new(fixture_model(seed, Architecture::tiny_vgg()).unwrap());
        run_forward(model, fixture_image(seed, Shape::new(64, 64, 3)).unwrap()).unwrap()
    }

    #[test]
    fn first_conv_has_three_intermediates() {
        let s = session(1);
        let d = decompose_conv_neuron(&s, "conv_1_1", 4).unwrap();
        assert_eq!(d.intermediates.len(), 3);
        assert_eq!(d.kernels.len(), 3);
        assert_eq!(d.intermediates[0].shape(), Shape::new(62, 62, 1));
    }

    #[test]
    fn decomposition_errors() {
        let s = session(1);
        assert!(matches!(decompose_conv_neuron(&s, "relu_1_1", 0), Err(Error::Query(_))));
        assert!(matches!(decompose_conv_neuron(&s, "conv_1_1", 10), Err(Error::Bounds(_))));
        assert!(matches!(decompose_conv_neuron(&s, "nope", 0), Err(Error::Query(_))));
    }

    #[test]
    fn wiring_covers_every_flat_element() {
        let s = session(2);
        let w = flatten_wiring(&s, 9).unwrap();
        assert_eq!(w.class_label, "sport car");
        assert_eq!(w.source_layer, "max_pool_2");
        assert_eq!(w.edges.len(), 1690);
        assert_eq!(w.edges[0].source, (0, 0, 0));
        assert_eq!(w.edges[0].flat_index, 0);
        assert_eq!(w.edges[130].source, (1, 0, 0));
        assert!((w.reconstructed_logit() - w.logit).abs() <= 1e-4);
        assert!(matches!(flatten_wiring(&s, 10), Err(Error::Bounds(_))));
    }

    #[test]
    fn traces_match_stored_outputs() {
        let s = session(3);
        let relu = trace_window(&s, "relu_1_2", 2, 5, 7, None).unwrap();
        assert_eq!(relu.result, s.activation("relu_1_2").unwrap().at(5, 7, 2));
        let pool = trace_window(&s, "max_pool_1", 2, 5, 7, None).unwrap();
        assert_eq!(pool.input_window.size, 2);
        assert_eq!(pool.result, s.activation("max_pool_1").unwrap().at(5, 7, 2));
        let conv = trace_window(&s, "conv_2_1", 3, 4, 9, Some(6)).unwrap();
        let d = decompose_conv_neuron(&s, "conv_2_1", 3).unwrap();
        assert_eq!(conv.result, d.intermediates[6].at(4, 9, 0));
        assert!(matches!(trace_window(&s, "conv_2_1", 3, 4, 9, None), Err(Error::Query(_))));
        assert!(matches!(trace_window(&s, "conv_2_1", 3, 28, 0, Some(0)), Err(Error::Bounds(_))));
        assert!(matches!(trace_window(&s, "flatten", 0, 0, 0, None), Err(Error::Query(_))));
    }

    #[test]
    fn zero_model_scales_are_degenerate() {
        let model = Arc::new(zero_model(Architecture::tiny_vgg()).unwrap());
        let s = run_forward(model, fixture_image(0, Shape::new(64, 64, 3)).unwrap()).unwrap();
        for scope in Scope::ALL {
            for scale in color_scales(&s, scope) {
                assert_eq!(scale.max_abs, 0.0);
                assert_eq!(scale.rgb(1.0), crate::colormap::WHITE);
            }
        }
    }

    #[test]
    fn scope_group_counts() {
        let s = session(4);
        assert_eq!(color_scales(&s, Scope::Layer).len(), 12);
        // four units plus the ungrouped flatten and output layers
        assert_eq!(color_scales(&s, Scope::Unit).len(), 6);
        assert_eq!(color_scales(&s, Scope::Module).len(), 4);
        assert_eq!(color_scales(&s, Scope::Global).len(), 1);
    }

    #[test]
    fn topology_counts() {
        let model = fixture_model(0, Architecture::tiny_vgg()).unwrap();
        let topo = edge_topology(&model).unwrap();
        assert_eq!(topo[0].edges.len(), 30);
        assert_eq!(topo[0].source, "input");
        assert_eq!(topo[1].connectivity, Connectivity::OneToOne);
        assert_eq!(topo[1].edges.len(), 10);
        assert_eq!(topo[10].edges.len(), 1690);
        let out = &topo[11];
        assert_eq!(out.source, "max_pool_2");
        for class in 0..10 {
            assert_eq!(out.edges.iter().filter(|e| e.1 == class).count(), 10);
        }
    }
}
