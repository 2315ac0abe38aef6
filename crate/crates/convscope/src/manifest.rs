//! The two-file model format.
//!
//! A JSON manifest describes the architecture, and a headerless blob holds
//! every parameter as little-endian `f32`. Layers appear in manifest order.
//! Within a conv layer the kernels are ordered `[out][in][row][col]` and its
//! biases follow. A dense layer stores its matrix row-major `[out][flat]`,
//! then its biases.
//!
//! ```json
//! {
//!   "formatVersion": 1,
//!   "name": "tiny-vgg",
//!   "inputShape": [64, 64, 3],
//!   "layers": [
//!     {"kind": "conv", "name": "conv_1_1",
//!      "hyper": {"kernelSize": 3, "stride": 1, "padding": 0, "outChannels": 10},
//!      "groupTag": {"unit": 0, "module": 0}},
//!     {"kind": "maxpool", "name": "max_pool_1", "hyper": {"poolSize": 2, "stride": 2}, ...},
//!     {"kind": "flatten", "name": "flatten"},
//!     {"kind": "dense", "name": "output", "hyper": {"outUnits": 10}}
//!   ],
//!   "classLabels": ["lifeboat", ...],
//!   "weightsFile": "tiny-vgg.weights.bin",
//!   "dtype": "f32le",
//!   "totalParams": 19920,
//!   "metadata": {"version": "1", "provenance": "..."}
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use convscope_core::{blob, Architecture, ConvHyper, GroupTag, LayerKind, LayerSpec, Metadata, Model, PoolHyper, Shape};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerRecord>,
    pub class_labels: Vec<String>,
    pub weights_file: String,
    pub dtype: String,
    pub total_params: usize,
    #[serde(default)]
    pub metadata: MetadataRecord,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataRecord {
    #[serde(default)]
    pub version: String,
    #[serde(default)]
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", rename_all_fields = "camelCase", deny_unknown_fields)]
pub enum LayerRecord {
    Conv {
        name: String,
        hyper: ConvRecord,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group_tag: Option<GroupRecord>,
    },
    Relu {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group_tag: Option<GroupRecord>,
    },
    Maxpool {
        name: String,
        #[serde(default)]
        hyper: PoolRecord,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group_tag: Option<GroupRecord>,
    },
    Flatten {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group_tag: Option<GroupRecord>,
    },
    Dense {
        name: String,
        hyper: DenseRecord,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group_tag: Option<GroupRecord>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConvRecord {
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PoolRecord {
    pub pool_size: usize,
    pub stride: usize,
}

impl Default for PoolRecord {
    fn default() -> Self {
        let p = PoolHyper::default();
        PoolRecord { pool_size: p.pool_size, stride: p.stride }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DenseRecord {
    pub out_units: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRecord {
    pub unit: usize,
    pub module: usize,
}

impl From<GroupRecord> for GroupTag {
    fn from(g: GroupRecord) -> Self {
        GroupTag { unit: g.unit, module: g.module }
    }
}

impl From<GroupTag> for GroupRecord {
    fn from(g: GroupTag) -> Self {
        GroupRecord { unit: g.unit, module: g.module }
    }
}

impl From<&LayerRecord> for LayerSpec {
    fn from(record: &LayerRecord) -> Self {
        let (name, kind, group) = match record {
            LayerRecord::Conv { name, hyper, group_tag } => (
                name,
                LayerKind::Conv(ConvHyper {
                    kernel_size: hyper.kernel_size,
                    stride: hyper.stride,
                    padding: hyper.padding,
                    out_channels: hyper.out_channels,
                }),
                group_tag,
            ),
            LayerRecord::Relu { name, group_tag } => (name, LayerKind::Relu, group_tag),
            LayerRecord::Maxpool { name, hyper, group_tag } => (
                name,
                LayerKind::MaxPool(PoolHyper { pool_size: hyper.pool_size, stride: hyper.stride }),
                group_tag,
            ),
            LayerRecord::Flatten { name, group_tag } => (name, LayerKind::Flatten, group_tag),
            LayerRecord::Dense { name, hyper, group_tag } => {
                (name, LayerKind::Dense { out_units: hyper.out_units }, group_tag)
            }
        };
        LayerSpec { name: name.clone(), kind, group: group.map(Into::into) }
    }
}

impl From<&LayerSpec> for LayerRecord {
    fn from(spec: &LayerSpec) -> Self {
        let name = spec.name.clone();
        let group_tag = spec.group.map(Into::into);
        match spec.kind {
            LayerKind::Conv(h) => LayerRecord::Conv {
                name,
                hyper: ConvRecord {
                    kernel_size: h.kernel_size,
                    stride: h.stride,
                    padding: h.padding,
                    out_channels: h.out_channels,
                },
                group_tag,
            },
            LayerKind::Relu => LayerRecord::Relu { name, group_tag },
            LayerKind::MaxPool(p) => {
                LayerRecord::Maxpool { name, hyper: PoolRecord { pool_size: p.pool_size, stride: p.stride }, group_tag }
            }
            LayerKind::Flatten => LayerRecord::Flatten { name, group_tag },
            LayerKind::Dense { out_units } => LayerRecord::Dense { name, hyper: DenseRecord { out_units }, group_tag },
        }
    }
}

impl Manifest {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn architecture(&self) -> Architecture {
        let [h, w, c] = self.input_shape;
        Architecture {
            input_shape: Shape::new(h, w, c),
            layers: self.layers.iter().map(LayerSpec::from).collect(),
            class_labels: self.class_labels.clone(),
        }
    }

    pub fn for_model(model: &Model) -> Self {
        let arch = model.arch();
        let meta = model.metadata();
        let s = arch.input_shape;
        Manifest {
            format_version: FORMAT_VERSION,
            name: meta.name.clone(),
            input_shape: [s.height, s.width, s.channels],
            layers: arch.layers.iter().map(LayerRecord::from).collect(),
            class_labels: arch.class_labels.clone(),
            weights_file: meta.weights_file.clone(),
            dtype: DTYPE.into(),
            total_params: model.parameter_count(),
            metadata: MetadataRecord { version: meta.version.clone(), provenance: meta.provenance.clone() },
        }
    }

    /// Checks that do not need the weight blob.
    pub fn validate(&self) -> Result<Architecture> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported formatVersion {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.dtype != DTYPE {
            return Err(Error::Invalid(format!("unsupported dtype `{}` (expected `{DTYPE}`)", self.dtype)));
        }
        let arch = self.architecture();
        let count = arch.parameter_count()?;
        if count != self.total_params {
            return Err(Error::Invalid(format!(
                "manifest declares totalParams {} but the architecture has {count}",
                self.total_params
            )));
        }
        Ok(arch)
    }

    pub fn metadata(&self) -> Metadata {
        Metadata {
            name: self.name.clone(),
            version: self.metadata.version.clone(),
            provenance: self.metadata.provenance.clone(),
            weights_file: self.weights_file.clone(),
        }
    }
}

/// Parse and fully validate a bundle from manifest and weight bytes.
pub fn load_model(manifest_bytes: &[u8], weight_bytes: &[u8]) -> Result<Model> {
    let manifest = Manifest::parse(manifest_bytes)?;
    let arch = manifest.validate()?;
    let expected = manifest.total_params * 4;
    if weight_bytes.len() != expected {
        return Err(Error::CorruptModel { expected, actual: weight_bytes.len() });
    }
    let params = blob::decode_f32le(weight_bytes, manifest.total_params)?;
    Ok(Model::from_flat(arch, &params, manifest.metadata())?)
}

/// Exact inverse of [`load_model`]: pretty JSON manifest plus the raw blob.
pub fn save_model(model: &Model) -> (Vec<u8>, Vec<u8>) {
    let mut manifest = serde_json::to_vec_pretty(&Manifest::for_model(model)).expect("manifest serializes");
    manifest.push(b'\n');
    (manifest, blob::encode_f32le(&model.weights().to_flat()))
}

/// Read a manifest and the weight file it names (resolved next to the manifest).
pub fn read_model(manifest_path: &Path) -> Result<Model> {
    let manifest_bytes = fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest = Manifest::parse(&manifest_bytes)?;
    let weights_path = weights_path(manifest_path, &manifest.weights_file);
    let weight_bytes = fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
    load_model(&manifest_bytes, &weight_bytes)
}

/// Write `<dir>/<name>.json` and the weight file; returns the manifest path.
pub fn write_model(model: &Model, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, weights) = save_model(model);
    let manifest_path = dir.join(format!("{}.json", model.name()));
    let weights_path = dir.join(&model.metadata().weights_file);
    fs::write(&weights_path, weights).map_err(|e| Error::io(&weights_path, e))?;
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

fn weights_path(manifest_path: &Path, weights_file: &str) -> PathBuf {
    manifest_path.parent().unwrap_or_else(|| Path::new(".")).join(weights_file)
}
