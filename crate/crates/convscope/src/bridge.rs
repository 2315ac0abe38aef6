//! Request/response API for embedding hosts such as the web explainer.
//!
//! A request is `{"op": ..., "args": {...}, "id": optional}`; the response is
//! `{"bridgeVersion": 1, "id": ..., "ok": payload}` or
//! `{"bridgeVersion": 1, "id": ..., "err": {"code": ..., "message": ...}}`.
//! Every request gets exactly one response.
//!
//! | op                       | args                                                   |
//! |--------------------------|--------------------------------------------------------|
//! | `load_model`             | `manifest` (JSON text), `weights` (base64 blob)        |
//! | `set_input`              | `image` (base64 PNG or raw RGB8)                       |
//! | `get_overview`           | `scope`?, `encoding`? (`json`/`base64`), `layers`?     |
//! | `get_conv_decomposition` | `layer`, `channel`                                     |
//! | `get_flatten_wiring`     | `classIndex`                                           |
//! | `get_window_trace`       | `layer`, `channel`, `row`, `col`, `inChannel`?         |
//! | `get_color_scales`       | `scope`                                                |
//! | `get_topology`           | none                                                   |
//!
//! Only `load_model` and `set_input` change session state.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use base64::Engine as _;
use convscope_core::introspect::{
    color_scales, edge_topology, trace_window, Connectivity, TraceKind,
};
use convscope_core::{run_forward, InferenceSession, Model, Scope};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dump::{build_dump, decomposition_record, wiring_record, DecompositionRecord, DumpOptions, Grid, WiringRecord};
use crate::image::ingest_image;
use crate::manifest::load_model;
use crate::Error;

pub const BRIDGE_VERSION: u32 = 1;

pub const OPS: [&str; 8] = [
    "load_model",
    "set_input",
    "get_overview",
    "get_conv_decomposition",
    "get_flatten_wiring",
    "get_window_trace",
    "get_color_scales",
    "get_topology",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadOp,
    NoInput,
    Bounds,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeError {
    pub code: ErrorCode,
    pub message: String,
}

impl BridgeError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        BridgeError { code, message: message.into() }
    }
}

impl From<Error> for BridgeError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Core(core) if matches!(core.root(), convscope_core::Error::Bounds(_)) => ErrorCode::Bounds,
            _ => ErrorCode::Validation,
        };
        BridgeError::new(code, e.to_string())
    }
}

impl From<convscope_core::Error> for BridgeError {
    fn from(e: convscope_core::Error) -> Self {
        Error::from(e).into()
    }
}

#[derive(Debug, Deserialize)]
struct RawRequest {
    op: String,
    #[serde(default)]
    args: Option<Value>,
    #[serde(default)]
    id: Option<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct LoadModelArgs {
    manifest: String,
    weights: String,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SetInputArgs {
    image: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct OverviewArgs {
    #[serde(default)]
    scope: Option<String>,
    #[serde(default)]
    encoding: Option<String>,
    #[serde(default)]
    layers: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NeuronArgs {
    layer: String,
    channel: usize,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct WiringArgs {
    class_index: usize,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct TraceArgs {
    layer: String,
    channel: usize,
    row: usize,
    col: usize,
    #[serde(default)]
    in_channel: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ScopeArgs {
    scope: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelInfo {
    pub class_labels: Vec<String>,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerInfo>,
    pub name: String,
    pub total_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LayerInfo {
    pub group_tag: Option<[usize; 2]>,
    pub kind: String,
    pub name: String,
    pub shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InputInfo {
    pub input_digest: String,
    pub predicted_class: usize,
    pub probabilities: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WindowRecord {
    pub origin_col: usize,
    pub origin_row: usize,
    pub size: usize,
    pub values: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceRecord {
    pub col: usize,
    pub in_channel: usize,
    pub input_window: WindowRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Grid>,
    pub kind: String,
    pub layer_name: String,
    pub out_channel: usize,
    pub padding: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub products: Option<Grid>,
    pub result: f32,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScaleRecord {
    pub key: String,
    pub layers: Vec<String>,
    pub max_abs: f32,
    pub scope: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TopologyRecord {
    pub connectivity: String,
    pub edges: Vec<[usize; 2]>,
    pub layer: String,
    pub source: String,
    pub source_neurons: usize,
    pub target_neurons: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    Model(ModelInfo),
    Input(InputInfo),
    Overview(Box<crate::dump::ActivationDump>),
    BinaryOverview(crate::dump::BinaryOverview),
    Decomposition(DecompositionRecord),
    Wiring(WiringRecord),
    Trace(TraceRecord),
    Scales(Vec<ScaleRecord>),
    Topology(Vec<TopologyRecord>),
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct OkEnvelope<'a> {
    bridge_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<&'a Value>,
    ok: &'a Payload,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ErrEnvelope<'a> {
    bridge_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<&'a Value>,
    err: &'a BridgeError,
}

/// One loaded model, at most one current input, and its cached forward pass.
#[derive(Debug, Default)]
pub struct Session {
    model: Option<Arc<Model>>,
    current: Option<InferenceSession>,
}

type Reply = Result<Payload, BridgeError>;

fn parse_args<T: DeserializeOwned>(op: &str, args: Option<Value>) -> Result<T, BridgeError> {
    serde_json::from_value(args.unwrap_or_else(|| Value::Object(Default::default())))
        .map_err(|e| BridgeError::new(ErrorCode::Validation, format!("bad arguments for `{op}`: {e}")))
}

fn parse_scope(s: Option<&str>) -> Result<Scope, BridgeError> {
    s.map_or(Ok(Scope::Layer), |s| s.parse().map_err(BridgeError::from))
}

fn decode_base64(field: &str, data: &str) -> Result<Vec<u8>, BridgeError> {
    base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| BridgeError::new(ErrorCode::Validation, format!("`{field}` is not valid base64: {e}")))
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    /// Start from an already loaded model.
    pub fn with_model(model: Arc<Model>) -> Self {
        Session { model: Some(model), current: None }
    }

    /// Handle one serialized request and produce its serialized response.
    pub fn handle_request(&mut self, request: &str) -> String {
        let (id, reply) = match serde_json::from_str::<RawRequest>(request) {
            Ok(raw) => {
                let id = raw.id.clone();
                (id, self.dispatch(&raw.op, raw.args))
            }
            Err(e) => (None, Err(BridgeError::new(ErrorCode::BadOp, format!("malformed request: {e}")))),
        };
        encode_response(id.as_ref(), &reply)
    }

    /// Typed entry point behind [`Session::handle_request`].
    pub fn dispatch(&mut self, op: &str, args: Option<Value>) -> Reply {
        match op {
            "load_model" => {
                let a: LoadModelArgs = parse_args(op, args)?;
                let weights = decode_base64("weights", &a.weights)?;
                let model = Arc::new(load_model(a.manifest.as_bytes(), &weights)?);
                let info = model_info(&model)?;
                self.model = Some(model);
                self.current = None;
                Ok(Payload::Model(info))
            }
            "set_input" => {
                let a: SetInputArgs = parse_args(op, args)?;
                let model = self.model.clone().ok_or_else(no_model)?;
                let bytes = decode_base64("image", &a.image)?;
                let image = ingest_image(&bytes, model.arch().input_shape)?;
                let session = run_forward(model, image.into_tensor())?;
                let info = InputInfo {
                    input_digest: crate::image::tensor_digest(session.input()),
                    predicted_class: session.predicted_class(),
                    probabilities: session.probabilities().to_vec(),
                };
                self.current = Some(session);
                Ok(Payload::Input(info))
            }
            "get_overview" => {
                let a: OverviewArgs = parse_args(op, args)?;
                let session = self.session()?;
                let options =
                    DumpOptions { layers: a.layers, include_intermediates: false, scope: parse_scope(a.scope.as_deref())? };
                let dump = build_dump(session, &options)?;
                match a.encoding.as_deref() {
                    None | Some("json") => Ok(Payload::Overview(Box::new(dump))),
                    Some("base64") => Ok(Payload::BinaryOverview(dump.to_binary())),
                    Some(other) => Err(BridgeError::new(
                        ErrorCode::Validation,
                        format!("unknown encoding `{other}`; expected json or base64"),
                    )),
                }
            }
            "get_conv_decomposition" => {
                let a: NeuronArgs = parse_args(op, args)?;
                Ok(Payload::Decomposition(decomposition_record(self.session()?, &a.layer, a.channel)?))
            }
            "get_flatten_wiring" => {
                let a: WiringArgs = parse_args(op, args)?;
                Ok(Payload::Wiring(wiring_record(self.session()?, a.class_index)?))
            }
            "get_window_trace" => {
                let a: TraceArgs = parse_args(op, args)?;
                let t = trace_window(self.session()?, &a.layer, a.channel, a.row, a.col, a.in_channel)?;
                let size = t.input_window.size;
                let grid = |v: &[f32]| v.chunks(size).map(<[f32]>::to_vec).collect::<Grid>();
                Ok(Payload::Trace(TraceRecord {
                    col: t.col,
                    in_channel: t.in_channel,
                    input_window: WindowRecord {
                        origin_col: t.input_window.origin_col,
                        origin_row: t.input_window.origin_row,
                        size,
                        values: grid(&t.input_window.values),
                    },
                    kernel: t.kernel.as_deref().map(grid),
                    kind: match t.kind {
                        TraceKind::Conv => "conv",
                        TraceKind::Relu => "relu",
                        TraceKind::MaxPool => "maxpool",
                    }
                    .into(),
                    layer_name: t.layer,
                    out_channel: t.out_channel,
                    padding: t.padding,
                    products: t.products.as_deref().map(grid),
                    result: t.result,
                    row: t.row,
                }))
            }
            "get_color_scales" => {
                let a: ScopeArgs = parse_args(op, args)?;
                let scope = parse_scope(Some(&a.scope))?;
                Ok(Payload::Scales(
                    color_scales(self.session()?, scope)
                        .into_iter()
                        .map(|s| ScaleRecord { key: s.key, layers: s.layers, max_abs: s.max_abs, scope: scope.as_str().into() })
                        .collect(),
                ))
            }
            "get_topology" => {
                let _: BTreeMap<String, Value> = parse_args(op, args)?;
                let model = self.model.as_ref().ok_or_else(no_model)?;
                Ok(Payload::Topology(
                    edge_topology(model)?
                        .into_iter()
                        .map(|t| TopologyRecord {
                            connectivity: match t.connectivity {
                                Connectivity::Full => "full",
                                Connectivity::OneToOne => "one_to_one",
                                Connectivity::Unroll => "unroll",
                            }
                            .into(),
                            edges: t.edges.iter().map(|&(a, b)| [a, b]).collect(),
                            layer: t.layer,
                            source: t.source,
                            source_neurons: t.source_neurons,
                            target_neurons: t.target_neurons,
                        })
                        .collect(),
                ))
            }
            other => Err(BridgeError::new(
                ErrorCode::BadOp,
                format!("unknown op `{other}`; expected one of {}", OPS.join(", ")),
            )),
        }
    }

    fn session(&self) -> Result<&InferenceSession, BridgeError> {
        if self.model.is_none() {
            return Err(no_model());
        }
        self.current
            .as_ref()
            .ok_or_else(|| BridgeError::new(ErrorCode::NoInput, "no input set; call set_input first"))
    }
}

fn no_model() -> BridgeError {
    BridgeError::new(ErrorCode::NoInput, "no model loaded; call load_model first")
}

fn model_info(model: &Model) -> Result<ModelInfo, BridgeError> {
    let arch = model.arch();
    let shapes = arch.shapes()?;
    let s = arch.input_shape;
    Ok(ModelInfo {
        class_labels: arch.class_labels.clone(),
        input_shape: [s.height, s.width, s.channels],
        layers: arch
            .layers
            .iter()
            .zip(shapes)
            .map(|(l, sh)| LayerInfo {
                group_tag: l.group.map(|g| [g.unit, g.module]),
                kind: l.kind.label().into(),
                name: l.name.clone(),
                shape: [sh.height, sh.width, sh.channels],
            })
            .collect(),
        name: model.name().into(),
        total_params: model.parameter_count(),
    })
}

fn encode_response(id: Option<&Value>, reply: &Reply) -> String {
    match reply {
        Ok(ok) => serde_json::to_string(&OkEnvelope { bridge_version: BRIDGE_VERSION, id, ok }),
        Err(err) => serde_json::to_string(&ErrEnvelope { bridge_version: BRIDGE_VERSION, id, err }),
    }
    .expect("responses serialize")
}

/// Opaque handle to a session owned by a [`Bridge`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionHandle(pub u64);

/// Session registry. Requests to one session run in order under its lock;
/// distinct sessions proceed independently.
#[derive(Debug, Default)]
pub struct Bridge {
    next: AtomicU64,
    sessions: Mutex<BTreeMap<SessionHandle, Arc<Mutex<Session>>>>,
}

impl Bridge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_session(&self) -> SessionHandle {
        let handle = SessionHandle(self.next.fetch_add(1, Ordering::Relaxed));
        self.sessions.lock().expect("registry lock").insert(handle, Arc::default());
        handle
    }

    pub fn close_session(&self, handle: SessionHandle) -> bool {
        self.sessions.lock().expect("registry lock").remove(&handle).is_some()
    }

    pub fn handle_request(&self, handle: SessionHandle, request: &str) -> String {
        let session = self.sessions.lock().expect("registry lock").get(&handle).cloned();
        match session {
            Some(s) => s.lock().expect("session lock").handle_request(request),
            None => {
                let id = serde_json::from_str::<RawRequest>(request).ok().and_then(|r| r.id);
                let err = BridgeError::new(ErrorCode::Validation, format!("unknown session handle {}", handle.0));
                encode_response(id.as_ref(), &Err(err))
            }
        }
    }
}
