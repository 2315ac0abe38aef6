//! Deterministic stand-ins for trained weights and dataset images.
//!
//! Weights come from SplitMix64, chosen because it is fully specified by three
//! constants and produces identical streams on every platform. Each draw keeps
//! the top 24 bits, so `(z >> 40) / 2^24 - 0.5` is exact in `f32`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Architecture, Metadata, Model, Result, Shape, Tensor3};

pub const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
pub const SPLITMIX_MUL1: u64 = 0xBF58_476D_1CE4_E5B9;
pub const SPLITMIX_MUL2: u64 = 0x94D0_49BB_1331_11EB;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(SPLITMIX_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(SPLITMIX_MUL1);
        z = (z ^ (z >> 27)).wrapping_mul(SPLITMIX_MUL2);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` on a 2^-24 grid.
    pub fn next_unit(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 / (1u64 << 24) as f32
    }

    /// Uniform in `[-0.5, 0.5)`.
    pub fn next_weight(&mut self) -> f32 {
        self.next_unit() - 0.5
    }
}

/// Provenance string recorded in fixture manifests.
pub fn provenance(seed: u64) -> String {
    format!(
        "fixture: splitmix64 seed={seed} gamma={SPLITMIX_GAMMA:#018x} \
         mix1={SPLITMIX_MUL1:#018x} mix2={SPLITMIX_MUL2:#018x}; \
         weight = (next >> 40) / 2^24 - 0.5, drawn in weight-file order"
    )
}

/// A model whose parameters are SplitMix64 draws in `[-0.5, 0.5)`, taken in
/// weight-file order.
pub fn fixture_model(seed: u64, arch: Architecture) -> Result<Model> {
    let count = arch.parameter_count()?;
    let mut rng = SplitMix64::new(seed);
    let params: Vec<f32> = (0..count).map(|_| rng.next_weight()).collect();
    let mut meta = Metadata::named(&format!("fixture-{seed}"));
    meta.provenance = provenance(seed);
    Model::from_flat(arch, &params, meta)
}

/// All weights and biases zero.
pub fn zero_model(arch: Architecture) -> Result<Model> {
    let count = arch.parameter_count()?;
    let mut meta = Metadata::named("zero");
    meta.provenance = String::from("fixture: all parameters zero");
    Model::from_flat(arch, &alloc::vec![0.0; count], meta)
}

/// An RGB image with pixel values `k / 255`, `k` drawn from SplitMix64, so it
/// survives an 8-bit PNG round trip exactly.
pub fn fixture_image(seed: u64, shape: Shape) -> Result<Tensor3> {
    let bytes = fixture_image_bytes(seed, shape);
    Tensor3::from_vec(shape, bytes.iter().map(|&b| f32::from(b) / 255.0).collect())
}

/// The 8-bit pixel values behind [`fixture_image`].
pub fn fixture_image_bytes(seed: u64, shape: Shape) -> Vec<u8> {
    let mut rng = SplitMix64::new(seed ^ 0x1A6E_5EED);
    (0..shape.len()).map(|_| (rng.next_u64() >> 56) as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // first outputs for seed 0 from the published reference implementation
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn weights_in_range() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..10_000 {
            let w = rng.next_weight();
            assert!((-0.5..0.5).contains(&w));
        }
    }

    #[test]
    fn same_seed_same_model() {
        let a = fixture_model(3, Architecture::tiny_vgg()).unwrap();
        let b = fixture_model(3, Architecture::tiny_vgg()).unwrap();
        assert_eq!(a, b);
        let c = fixture_model(4, Architecture::tiny_vgg()).unwrap();
        assert_ne!(a.weights().to_flat(), c.weights().to_flat());
    }

    #[test]
    fn image_bytes_match_image() {
        let shape = Shape::new(4, 5, 3);
        let img = fixture_image(42, shape).unwrap();
        let bytes = fixture_image_bytes(42, shape);
        for (v, b) in img.data().iter().zip(bytes) {
            assert_eq!(*v, f32::from(b) / 255.0);
        }
    }
}
