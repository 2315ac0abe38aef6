//! Activation dumps with canonical serialization.
//!
//! Field names are declared in alphabetical order and maps are `BTreeMap`s, so
//! keys always come out sorted. Floats use the shortest representation that
//! round-trips to the same `f32`. The document is compact JSON followed by one
//! newline.

use std::collections::BTreeMap;

use base64::Engine as _;
use convscope_core::introspect::{color_scales, decompose_conv_neuron, flatten_wiring, scale_for_layer};
use convscope_core::{blob, InferenceSession, LayerKind, Scope, Tensor3};
use serde::{Deserialize, Serialize};

use crate::image::tensor_digest;
use crate::Result;

pub type Grid = Vec<Vec<f32>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ActivationDump {
    pub class_probabilities: BTreeMap<String, f32>,
    pub color_scope: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv_decompositions: Option<Vec<DecompositionRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flatten_wirings: Option<Vec<WiringRecord>>,
    pub input_digest: String,
    pub model_name: String,
    pub per_layer: Vec<LayerDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LayerDump {
    pub color_scale_max_abs: f32,
    pub layer_name: String,
    pub shape: [usize; 3],
    /// `[row][col][channel]`.
    pub values: Vec<Vec<Vec<f32>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DecompositionRecord {
    pub bias: f32,
    /// One `[row][col]` plane per input channel.
    pub intermediates: Vec<Grid>,
    pub kernels: Vec<Grid>,
    pub layer_name: String,
    pub out_channel: usize,
    pub reconstructed: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WiringRecord {
    pub bias: f32,
    pub class_index: usize,
    pub class_label: String,
    pub edges: Vec<EdgeRecord>,
    pub logit: f32,
    pub source_layer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EdgeRecord {
    pub contribution: f32,
    pub flat_index: usize,
    pub source: [usize; 3],
    pub source_value: f32,
    pub weight: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpOptions {
    /// Restrict the dump to these layers; `None` keeps every layer.
    pub layers: Option<Vec<String>>,
    pub include_intermediates: bool,
    pub scope: Scope,
}

impl Default for DumpOptions {
    fn default() -> Self {
        DumpOptions { layers: None, include_intermediates: false, scope: Scope::Layer }
    }
}

impl DumpOptions {
    fn keeps(&self, layer: &str) -> bool {
        self.layers.as_ref().is_none_or(|names| names.iter().any(|n| n == layer))
    }
}

/// `[row][col][channel]` nesting of a tensor.
pub fn nested(t: &Tensor3) -> Vec<Vec<Vec<f32>>> {
    t.data()
        .chunks(t.width() * t.channels())
        .map(|row| row.chunks(t.channels()).map(<[f32]>::to_vec).collect())
        .collect()
}

/// `[row][col]` grid of a single-channel tensor or a square kernel.
fn grid(values: &[f32], width: usize) -> Grid {
    values.chunks(width).map(<[f32]>::to_vec).collect()
}

pub fn build_dump(session: &InferenceSession, options: &DumpOptions) -> Result<ActivationDump> {
    let arch = session.model().arch();
    if let Some(names) = &options.layers {
        for name in names {
            session.layer_index(name)?;
        }
    }
    let scales = color_scales(session, options.scope);
    let per_layer = arch
        .layers
        .iter()
        .zip(session.activations())
        .filter(|(spec, _)| options.keeps(&spec.name))
        .map(|(spec, act)| {
            let s = act.shape();
            LayerDump {
                color_scale_max_abs: scale_for_layer(&scales, &spec.name).map_or(0.0, |sc| sc.max_abs),
                layer_name: spec.name.clone(),
                shape: [s.height, s.width, s.channels],
                values: nested(act),
            }
        })
        .collect();
    let class_probabilities =
        arch.class_labels.iter().cloned().zip(session.probabilities().iter().copied()).collect();

    let (mut conv_decompositions, mut flatten_wirings) = (None, None);
    if options.include_intermediates {
        let mut decs = Vec::new();
        for spec in arch.layers.iter().filter(|l| options.keeps(&l.name)) {
            let LayerKind::Conv(h) = spec.kind else { continue };
            for o in 0..h.out_channels {
                decs.push(decomposition_record(session, &spec.name, o)?);
            }
        }
        conv_decompositions = Some(decs);
        let wiring_wanted = arch
            .layers
            .iter()
            .any(|l| matches!(l.kind, LayerKind::Flatten | LayerKind::Dense { .. }) && options.keeps(&l.name));
        if wiring_wanted {
            let wirings = (0..arch.class_labels.len())
                .map(|c| wiring_record(session, c))
                .collect::<Result<Vec<_>>>()?;
            flatten_wirings = Some(wirings);
        }
    }

    Ok(ActivationDump {
        class_probabilities,
        color_scope: options.scope.as_str().into(),
        conv_decompositions,
        flatten_wirings,
        input_digest: tensor_digest(session.input()),
        model_name: session.model().name().into(),
        per_layer,
    })
}

pub fn decomposition_record(session: &InferenceSession, layer: &str, out_channel: usize) -> Result<DecompositionRecord> {
    let d = decompose_conv_neuron(session, layer, out_channel)?;
    let w = d.reconstructed.width();
    Ok(DecompositionRecord {
        bias: d.bias,
        intermediates: d.intermediates.iter().map(|m| grid(m.data(), w)).collect(),
        kernels: d.kernels.iter().map(|k| grid(k, d.kernel_size)).collect(),
        layer_name: d.layer,
        out_channel,
        reconstructed: grid(d.reconstructed.data(), w),
    })
}

pub fn wiring_record(session: &InferenceSession, class_index: usize) -> Result<WiringRecord> {
    let w = flatten_wiring(session, class_index)?;
    Ok(WiringRecord {
        bias: w.bias,
        class_index: w.class_index,
        class_label: w.class_label,
        edges: w
            .edges
            .iter()
            .map(|e| EdgeRecord {
                contribution: e.contribution,
                flat_index: e.flat_index,
                source: [e.source.0, e.source.1, e.source.2],
                source_value: e.source_value,
                weight: e.weight,
            })
            .collect(),
        logit: w.logit,
        source_layer: w.source_layer,
    })
}

impl ActivationDump {
    /// Canonical bytes: compact JSON plus a trailing newline.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("dump serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    /// The same document with every layer's values packed as base64
    /// little-endian `f32` in `(row, col, channel)` order.
    pub fn to_binary(&self) -> BinaryOverview {
        BinaryOverview {
            class_probabilities: self.class_probabilities.clone(),
            color_scope: self.color_scope.clone(),
            input_digest: self.input_digest.clone(),
            model_name: self.model_name.clone(),
            per_layer: self
                .per_layer
                .iter()
                .map(|l| {
                    let flat: Vec<f32> = l.values.iter().flatten().flatten().copied().collect();
                    BinaryLayer {
                        color_scale_max_abs: l.color_scale_max_abs,
                        layer_name: l.layer_name.clone(),
                        shape: l.shape,
                        values_base64: base64::engine::general_purpose::STANDARD.encode(blob::encode_f32le(&flat)),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BinaryOverview {
    pub class_probabilities: BTreeMap<String, f32>,
    pub color_scope: String,
    pub input_digest: String,
    pub model_name: String,
    pub per_layer: Vec<BinaryLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BinaryLayer {
    pub color_scale_max_abs: f32,
    pub layer_name: String,
    pub shape: [usize; 3],
    pub values_base64: String,
}
