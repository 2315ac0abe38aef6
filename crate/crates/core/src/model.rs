//! Weight storage and validated model bundles.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Architecture, Error, LayerKind, Result};

/// Kernels for one conv layer, stored `[out][in][row][col]`, plus one bias per
/// output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_size: usize,
    pub kernels: Vec<f32>,
    pub biases: Vec<f32>,
}

impl ConvWeights {
    pub fn kernel(&self, out: usize, input: usize) -> &[f32] {
        let k2 = self.kernel_size * self.kernel_size;
        let start = (out * self.in_channels + input) * k2;
        &self.kernels[start..start + k2]
    }

    fn check(&self) -> Result<()> {
        let k2 = self.kernel_size * self.kernel_size;
        if self.kernels.len() != self.out_channels * self.in_channels * k2 {
            return Err(Error::Model(format!(
                "{} kernel values for {}x{} kernels of size {}",
                self.kernels.len(),
                self.out_channels,
                self.in_channels,
                self.kernel_size
            )));
        }
        if self.biases.len() != self.out_channels {
            return Err(Error::Model(format!(
                "{} biases for {} output channels",
                self.biases.len(),
                self.out_channels
            )));
        }
        Ok(())
    }
}

/// Row-major `[out_unit][flat_index]` matrix plus one bias per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWeights {
    pub out_units: usize,
    pub in_len: usize,
    pub matrix: Vec<f32>,
    pub biases: Vec<f32>,
}

impl DenseWeights {
    pub fn row(&self, out: usize) -> &[f32] {
        &self.matrix[out * self.in_len..(out + 1) * self.in_len]
    }

    fn check(&self) -> Result<()> {
        if self.matrix.len() != self.out_units * self.in_len {
            return Err(Error::Model(format!(
                "{} matrix values for a {}x{} dense layer",
                self.matrix.len(),
                self.out_units,
                self.in_len
            )));
        }
        if self.biases.len() != self.out_units {
            return Err(Error::Model(format!(
                "{} biases for {} output units",
                self.biases.len(),
                self.out_units
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    None,
    Conv(ConvWeights),
    Dense(DenseWeights),
}

impl LayerWeights {
    fn values(&self) -> impl Iterator<Item = &f32> {
        let (a, b): (&[f32], &[f32]) = match self {
            LayerWeights::None => (&[], &[]),
            LayerWeights::Conv(c) => (&c.kernels, &c.biases),
            LayerWeights::Dense(d) => (&d.matrix, &d.biases),
        };
        a.iter().chain(b)
    }
}

/// One entry per layer, aligned with [`Architecture::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub layers: Vec<LayerWeights>,
}

impl WeightStore {
    /// Split a flat parameter stream in file order: per layer, conv kernels
    /// `[out][in][row][col]` then biases; dense matrix `[out][flat]` then
    /// biases.
    pub fn from_flat(arch: &Architecture, params: &[f32]) -> Result<Self> {
        let expected = arch.parameter_count()?;
        if params.len() != expected {
            return Err(Error::Model(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        let shapes = arch.shapes()?;
        let mut rest = params;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let mut layers = Vec::with_capacity(arch.layers.len());
        for (i, layer) in arch.layers.iter().enumerate() {
            let input = if i == 0 { arch.input_shape } else { shapes[i - 1] };
            layers.push(match layer.kind {
                LayerKind::Conv(h) => {
                    let n = h.out_channels * input.channels * h.kernel_size * h.kernel_size;
                    LayerWeights::Conv(ConvWeights {
                        out_channels: h.out_channels,
                        in_channels: input.channels,
                        kernel_size: h.kernel_size,
                        kernels: take(n),
                        biases: take(h.out_channels),
                    })
                }
                LayerKind::Dense { out_units } => LayerWeights::Dense(DenseWeights {
                    out_units,
                    in_len: input.len(),
                    matrix: take(out_units * input.len()),
                    biases: take(out_units),
                }),
                _ => LayerWeights::None,
            });
        }
        Ok(WeightStore { layers })
    }

    /// Flat parameter stream in file order; inverse of [`WeightStore::from_flat`].
    pub fn to_flat(&self) -> Vec<f32> {
        self.layers.iter().flat_map(|l| l.values()).copied().collect()
    }

    /// Check every layer's weights against the architecture.
    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        let shapes = arch.shapes()?;
        if self.layers.len() != arch.layers.len() {
            return Err(Error::Model(format!(
                "{} weight entries for {} layers",
                self.layers.len(),
                arch.layers.len()
            )));
        }
        for (i, (layer, weights)) in arch.layers.iter().zip(&self.layers).enumerate() {
            let input = if i == 0 { arch.input_shape } else { shapes[i - 1] };
            let ok = match (&layer.kind, weights) {
                (LayerKind::Conv(h), LayerWeights::Conv(w)) => {
                    if w.out_channels != h.out_channels
                        || w.in_channels != input.channels
                        || w.kernel_size != h.kernel_size
                    {
                        return Err(Error::Model(format!(
                            "conv weights {}x{}x{k}x{k} do not match layer {}x{}x{k2}x{k2}",
                            w.out_channels,
                            w.in_channels,
                            h.out_channels,
                            input.channels,
                            k = w.kernel_size,
                            k2 = h.kernel_size
                        ))
                        .in_layer(&layer.name));
                    }
                    w.check().map_err(|e| e.in_layer(&layer.name))?;
                    true
                }
                (LayerKind::Dense { out_units }, LayerWeights::Dense(w)) => {
                    if w.out_units != *out_units || w.in_len != input.len() {
                        return Err(Error::Model(format!(
                            "dense weights {}x{} do not match layer {}x{}",
                            w.out_units,
                            w.in_len,
                            out_units,
                            input.len()
                        ))
                        .in_layer(&layer.name));
                    }
                    w.check().map_err(|e| e.in_layer(&layer.name))?;
                    true
                }
                (LayerKind::Conv(_) | LayerKind::Dense { .. }, _) => false,
                (_, LayerWeights::None) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Model("missing or mismatched weights".into()).in_layer(&layer.name));
            }
            if let Some(offset) = weights.values().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "non-finite weight at offset {offset} within the layer"
                ))
                .in_layer(&layer.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metadata {
    pub name: String,
    pub version: String,
    pub provenance: String,
    /// File name of the weight blob, relative to the manifest.
    pub weights_file: String,
}

impl Metadata {
    pub fn named(name: &str) -> Self {
        Metadata {
            name: name.into(),
            version: "1".into(),
            provenance: String::new(),
            weights_file: format!("{name}.weights.bin"),
        }
    }
}

/// A descriptor plus its validated weights. Construct through [`Model::new`]
/// so that every bundle in circulation has passed shape validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    weights: WeightStore,
    metadata: Metadata,
}

impl Model {
    pub fn new(arch: Architecture, weights: WeightStore, metadata: Metadata) -> Result<Self> {
        weights.validate(&arch)?;
        Ok(Model { arch, weights, metadata })
    }

    pub fn from_flat(arch: Architecture, params: &[f32], metadata: Metadata) -> Result<Self> {
        let weights = WeightStore::from_flat(&arch, params)?;
        Self::new(arch, weights, metadata)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &WeightStore {
        &self.weights
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    pub fn name(&self) -> &str {
        &self.metadata.name
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.layers.iter().map(|l| l.values().count()).sum()
    }

    pub fn conv_weights(&self, layer: usize) -> Result<&ConvWeights> {
        match self.weights.layers.get(layer) {
            Some(LayerWeights::Conv(w)) => Ok(w),
            _ => Err(Error::Model(format!("no convolution weights for layer {layer}"))),
        }
    }

    pub fn dense_weights(&self, layer: usize) -> Result<&DenseWeights> {
        match self.weights.layers.get(layer) {
            Some(LayerWeights::Dense(w)) => Ok(w),
            _ => Err(Error::Model(format!("no dense weights for layer {layer}"))),
        }
    }
}
