//! Seeded generators for random tensors and valid descriptors.

#![allow(dead_code)]

use convscope_core::fixture::SplitMix64;
use convscope_core::{Architecture, ConvHyper, GroupTag, LayerKind, LayerSpec, PoolHyper, Shape, Tensor3};

pub fn below(rng: &mut SplitMix64, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

pub fn range(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + below(rng, hi - lo + 1)
}

/// Values in [-2, 2).
pub fn tensor(rng: &mut SplitMix64, shape: Shape) -> Tensor3 {
    Tensor3::from_vec(shape, (0..shape.len()).map(|_| rng.next_unit() * 4.0 - 2.0).collect()).unwrap()
}

pub fn values(rng: &mut SplitMix64, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.next_weight()).collect()
}

/// A random linear descriptor: 1-3 units of conv (+relu) (+pool), then
/// flatten and dense. Every unit keeps the running shape positive.
pub fn architecture(rng: &mut SplitMix64) -> Architecture {
    let input = Shape::new(range(rng, 6, 16), range(rng, 6, 16), range(rng, 1, 3));
    let mut shape = input;
    let mut layers = Vec::new();
    let units = range(rng, 1, 3);
    let modules_split = range(rng, 0, units);
    for unit in 0..units {
        let tag = Some(GroupTag { unit, module: usize::from(unit >= modules_split) });
        let hyper = ConvHyper {
            kernel_size: range(rng, 1, 3),
            stride: range(rng, 1, 2),
            padding: range(rng, 0, 1),
            out_channels: range(rng, 1, 4),
        };
        let conv = LayerSpec::new(&format!("conv_{unit}"), LayerKind::Conv(hyper), tag);
        let Ok(next) = convscope_core::engine::output_shape(shape, &conv) else { break };
        shape = next;
        layers.push(conv);
        if below(rng, 3) > 0 {
            layers.push(LayerSpec::new(&format!("relu_{unit}"), LayerKind::Relu, tag));
        }
        if shape.height >= 2 && shape.width >= 2 && below(rng, 2) == 0 {
            let pool = LayerSpec::new(&format!("pool_{unit}"), LayerKind::MaxPool(PoolHyper::default()), tag);
            shape = convscope_core::engine::output_shape(shape, &pool).unwrap();
            layers.push(pool);
        }
    }
    let classes = range(rng, 1, 5);
    layers.push(LayerSpec::new("flatten", LayerKind::Flatten, None));
    layers.push(LayerSpec::new("output", LayerKind::Dense { out_units: classes }, None));
    Architecture {
        input_shape: input,
        layers,
        class_labels: (0..classes).map(|c| format!("class_{c}")).collect(),
    }
}
