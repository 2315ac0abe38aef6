//! Architecture descriptors for linear CNNs.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::engine::output_shape;
use crate::{Error, Result, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvHyper {
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_channels: usize,
}

impl ConvHyper {
    /// 3×3 kernel, stride 1, no padding.
    pub const fn square3(out_channels: usize) -> Self {
        ConvHyper { kernel_size: 3, stride: 1, padding: 0, out_channels }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolHyper {
    pub pool_size: usize,
    pub stride: usize,
}

impl Default for PoolHyper {
    fn default() -> Self {
        PoolHyper { pool_size: 2, stride: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv(ConvHyper),
    Relu,
    MaxPool(PoolHyper),
    Flatten,
    Dense { out_units: usize },
}

impl LayerKind {
    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::Conv(_) => "conv",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool(_) => "maxpool",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense { .. } => "dense",
        }
    }
}

/// Position of a layer in the unit/module grouping used for colormap scoping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupTag {
    pub unit: usize,
    pub module: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// `None` for layers outside every unit (the flatten/output tail).
    pub group: Option<GroupTag>,
}

impl LayerSpec {
    pub fn new(name: &str, kind: LayerKind, group: Option<GroupTag>) -> Self {
        LayerSpec { name: name.into(), kind, group }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
    pub class_labels: Vec<String>,
}

pub const TINY_VGG_CLASSES: [&str; 10] = [
    "lifeboat",
    "ladybug",
    "pizza",
    "bell pepper",
    "school bus",
    "koala",
    "espresso",
    "red panda",
    "orange",
    "sport car",
];

impl Architecture {
    /// Two modules of (conv-relu, conv-relu, maxpool) with 10 filters per
    /// convolution, on 64×64 RGB inputs, followed by flatten and a 10-way
    /// dense output.
    pub fn tiny_vgg() -> Self {
        use LayerKind::*;
        let g = |unit, module| Some(GroupTag { unit, module });
        let conv = Conv(ConvHyper::square3(10));
        let pool = MaxPool(PoolHyper::default());
        let layers = [
            ("conv_1_1", conv, g(0, 0)),
            ("relu_1_1", Relu, g(0, 0)),
            ("conv_1_2", conv, g(1, 0)),
            ("relu_1_2", Relu, g(1, 0)),
            ("max_pool_1", pool, g(1, 0)),
            ("conv_2_1", conv, g(2, 1)),
            ("relu_2_1", Relu, g(2, 1)),
            ("conv_2_2", conv, g(3, 1)),
            ("relu_2_2", Relu, g(3, 1)),
            ("max_pool_2", pool, g(3, 1)),
            ("flatten", Flatten, None),
            ("output", Dense { out_units: 10 }, None),
        ]
        .into_iter()
        .map(|(name, kind, group)| LayerSpec::new(name, kind, group))
        .collect();
        Architecture {
            input_shape: Shape::new(64, 64, 3),
            layers,
            class_labels: TINY_VGG_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.layers.iter().map(|l| l.name.as_str())
    }

    /// Output shape of every layer, in order. Validates the whole descriptor.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        self.validate_chain()?;
        let mut shape = self.input_shape;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = output_shape(shape, layer)?;
            shapes.push(shape);
        }
        let out = *shapes.last().expect("chain validated non-empty");
        if out.len() != self.class_labels.len() {
            return Err(Error::Validation(format!(
                "{} class labels for {} output units",
                self.class_labels.len(),
                out.len()
            )));
        }
        Ok(shapes)
    }

    /// Input shape of layer `index`.
    pub fn input_shape_of(&self, index: usize) -> Result<Shape> {
        if index == 0 {
            Ok(self.input_shape)
        } else {
            Ok(self.shapes()?[index - 1])
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    fn validate_chain(&self) -> Result<()> {
        self.input_shape.ensure_positive()?;
        let n = self.layers.len();
        if n < 2 {
            return Err(Error::Validation("a model needs at least flatten and dense layers".into()));
        }
        for (i, a) in self.layers.iter().enumerate() {
            if a.name.is_empty() {
                return Err(Error::Validation(format!("layer {i} has an empty name")));
            }
            if self.layers[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Validation(format!("duplicate layer name `{}`", a.name)));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let tail = i + 2 >= n;
            match layer.kind {
                LayerKind::Flatten if i + 2 != n => {
                    return Err(Error::Validation(format!(
                        "flatten layer `{}` must be immediately followed by the final dense layer",
                        layer.name
                    )))
                }
                LayerKind::Dense { .. } if i + 1 != n => {
                    return Err(Error::Validation(format!(
                        "dense layer `{}` must be the final layer",
                        layer.name
                    )))
                }
                LayerKind::Conv(_) | LayerKind::Relu | LayerKind::MaxPool(_) if tail => {
                    return Err(Error::Validation(format!(
                        "layer `{}` follows the flatten/dense tail position",
                        layer.name
                    )))
                }
                _ => {}
            }
        }
        if !matches!(self.layers[n - 2].kind, LayerKind::Flatten)
            || !matches!(self.layers[n - 1].kind, LayerKind::Dense { .. })
        {
            return Err(Error::Validation("the chain must end with flatten then dense".into()));
        }

        let mut last: Option<GroupTag> = None;
        let mut conv_units: Vec<usize> = Vec::new();
        for layer in &self.layers {
            let Some(tag) = layer.group else { continue };
            if let Some(prev) = last {
                if tag.unit < prev.unit || tag.module < prev.module {
                    return Err(Error::Validation(format!(
                        "group tags must not decrease along the chain (at `{}`)",
                        layer.name
                    )));
                }
                if tag.unit == prev.unit && tag.module != prev.module {
                    return Err(Error::Validation(format!(
                        "unit {} spans more than one module (at `{}`)",
                        tag.unit, layer.name
                    )));
                }
            }
            if matches!(layer.kind, LayerKind::Conv(_)) {
                if conv_units.contains(&tag.unit) {
                    return Err(Error::Validation(format!(
                        "unit {} holds more than one convolutional layer",
                        tag.unit
                    )));
                }
                conv_units.push(tag.unit);
            }
            last = Some(tag);
        }
        Ok(())
    }

    /// Trainable parameter count: kernels and biases of every conv layer plus
    /// the dense matrix and biases.
    pub fn parameter_count(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        let mut total = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { self.input_shape } else { shapes[i - 1] };
            total += match layer.kind {
                LayerKind::Conv(h) => {
                    h.out_channels * input.channels * h.kernel_size * h.kernel_size + h.out_channels
                }
                LayerKind::Dense { out_units } => out_units * input.len() + out_units,
                _ => 0,
            };
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tiny_vgg_shapes() {
        let shapes = Architecture::tiny_vgg().shapes().unwrap();
        let expect = [
            (62, 62, 10),
            (62, 62, 10),
            (60, 60, 10),
            (60, 60, 10),
            (30, 30, 10),
            (28, 28, 10),
            (28, 28, 10),
            (26, 26, 10),
            (26, 26, 10),
            (13, 13, 10),
            (1, 1, 1690),
            (1, 1, 10),
        ];
        let got: Vec<_> = shapes.iter().map(|s| (s.height, s.width, s.channels)).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn tiny_vgg_parameter_count() {
        // 3*10*9+10 = 280; 10*10*9+10 = 910 (x3); 10*1690+10 = 16910
        assert_eq!(280 + 910 * 3 + 16_910, 19_920);
        assert_eq!(Architecture::tiny_vgg().parameter_count().unwrap(), 19_920);
    }

    #[test]
    fn rejects_two_convs_in_one_unit() {
        let mut a = Architecture::tiny_vgg();
        a.layers[2].group = Some(GroupTag { unit: 0, module: 0 });
        a.layers[3].group = Some(GroupTag { unit: 0, module: 0 });
        a.layers[4].group = Some(GroupTag { unit: 0, module: 0 });
        assert!(matches!(a.validate(), Err(Error::Validation(m)) if m.contains("more than one convolutional")));
    }

    #[test]
    fn rejects_decreasing_groups() {
        let mut a = Architecture::tiny_vgg();
        a.layers[5].group = Some(GroupTag { unit: 0, module: 0 });
        assert!(a.validate().is_err());
    }

    #[test]
    fn rejects_dense_without_flatten() {
        let mut a = Architecture::tiny_vgg();
        a.layers.remove(10);
        assert!(a.validate().is_err());
    }

    #[test]
    fn rejects_label_mismatch() {
        let mut a = Architecture::tiny_vgg();
        a.class_labels.pop();
        assert!(matches!(a.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn collapsing_shape_names_layer() {
        let a = Architecture {
            input_shape: Shape::new(2, 2, 1),
            layers: vec![
                LayerSpec::new("big", LayerKind::Conv(ConvHyper::square3(1)), None),
                LayerSpec::new("flatten", LayerKind::Flatten, None),
                LayerSpec::new("out", LayerKind::Dense { out_units: 1 }, None),
            ],
            class_labels: vec!["x".into()],
        };
        let err = a.validate().unwrap_err();
        assert!(matches!(&err, Error::Layer { layer, .. } if layer == "big"), "{err:?}");
    }
}
