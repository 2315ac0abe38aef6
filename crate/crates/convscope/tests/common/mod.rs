#![allow(dead_code)]

#[path = "../../../core/tests/support/mod.rs"]
pub mod support;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use convscope_core::engine::softmax;
use convscope_core::fixture::fixture_model;
use convscope_core::{Architecture, Model, Tensor3};
use sha2::{Digest, Sha256};

pub const GOLDEN_SEED: u64 = 42;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn golden_image() -> PathBuf {
    data_dir().join("golden.png")
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convscope")).args(args).output().expect("spawn convscope")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn golden_model() -> Model {
    fixture_model(GOLDEN_SEED, Architecture::tiny_vgg()).unwrap()
}

/// Write `model` into `dir` and return the manifest path as a string.
pub fn write_bundle(model: &Model, dir: &Path) -> String {
    convscope::manifest::write_model(model, dir).unwrap().to_str().unwrap().to_owned()
}

/// Every oracle activation, concatenated as little-endian `f32`.
pub fn oracle_activation_blob(model: &Model, input: &Tensor3) -> Vec<u8> {
    support::oracle::forward(model, input).iter().flatten().flat_map(|v| v.to_le_bytes()).collect()
}

/// Classification table computed from the oracle's logits.
pub fn oracle_classify_table(model: &Model, input: &Tensor3) -> String {
    let acts = support::oracle::forward(model, input);
    let p = softmax(acts.last().unwrap());
    let labels = &model.arch().class_labels;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    let width = labels.iter().map(|l| l.len()).chain([5]).max().unwrap();
    let mut out = format!("{:<width$}  probability\n", "class");
    for i in order {
        out.push_str(&format!("{:<width$}  {:.4}\n", labels[i], p[i]));
    }
    out
}

pub fn read_golden(name: &str) -> String {
    std::fs::read_to_string(data_dir().join(name)).unwrap_or_else(|e| panic!("golden file {name}: {e}"))
}
