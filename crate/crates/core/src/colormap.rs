//! Symmetric diverging red-white-blue color scales.
//!
//! A value `v` maps to the position `v / max_abs` clamped to `[-1, 1]`:
//! `-1` is saturated red, `0` pure white and `+1` saturated blue. The two
//! endpoints are channel-swapped images of each other, so negating a value
//! swaps the red and blue channels of its color exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

pub const WHITE: [u8; 3] = [255, 255, 255];
pub const NEGATIVE_END: [u8; 3] = [202, 0, 32];
pub const POSITIVE_END: [u8; 3] = [32, 0, 202];

/// Which layers share one color scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Layer,
    Unit,
    Module,
    Global,
}

impl Scope {
    pub const ALL: [Scope; 4] = [Scope::Layer, Scope::Unit, Scope::Module, Scope::Global];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scope::Layer => "layer",
            Scope::Unit => "unit",
            Scope::Module => "module",
            Scope::Global => "global",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scope::ALL
            .into_iter()
            .find(|scope| scope.as_str() == s)
            .ok_or_else(|| Error::Query(format!("unknown scope `{s}`; expected layer, unit, module or global")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorScale {
    pub scope: Scope,
    /// Group identifier: a layer name, `unit_N`, `module_N` or `global`.
    pub key: String,
    /// Layers covered by this scale, in network order.
    pub layers: Vec<String>,
    pub max_abs: f32,
}

impl ColorScale {
    pub fn new(scope: Scope, key: String, layers: Vec<String>, max_abs: f32) -> Self {
        ColorScale { scope, key, layers, max_abs }
    }

    /// Normalized position in `[-1, 1]`; always `0` for a degenerate scale.
    pub fn position(&self, value: f32) -> f32 {
        if self.max_abs == 0.0 {
            return 0.0;
        }
        (value / self.max_abs).clamp(-1.0, 1.0)
    }

    pub fn rgb(&self, value: f32) -> [u8; 3] {
        diverging_rgb(self.position(value))
    }

    pub fn covers(&self, layer: &str) -> bool {
        self.layers.iter().any(|l| l == layer)
    }
}

/// Color at a normalized position: linear blend from white to the endpoint on
/// the value's side.
pub fn diverging_rgb(position: f32) -> [u8; 3] {
    let t = libm::fabsf(position).min(1.0);
    let end = if position < 0.0 { NEGATIVE_END } else { POSITIVE_END };
    let mix = |e: u8| libm::roundf(255.0 + t * (f32::from(e) - 255.0)) as u8;
    [mix(end[0]), mix(end[1]), mix(end[2])]
}

/// Colors for a row-major plane under `scale`.
pub fn render_plane(values: &[f32], scale: &ColorScale) -> Vec<[u8; 3]> {
    values.iter().map(|&v| scale.rgb(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scale(max_abs: f32) -> ColorScale {
        ColorScale::new(Scope::Layer, "l".into(), vec!["l".into()], max_abs)
    }

    #[test]
    fn zero_is_white() {
        assert_eq!(scale(3.0).rgb(0.0), WHITE);
        assert_eq!(scale(3.0).rgb(-0.0), WHITE);
        assert_eq!(scale(0.0).rgb(5.0), WHITE);
    }

    #[test]
    fn endpoints_saturate() {
        let s = scale(2.0);
        assert_eq!(s.rgb(-2.0), NEGATIVE_END);
        assert_eq!(s.rgb(2.0), POSITIVE_END);
        assert_eq!(s.rgb(-9.0), NEGATIVE_END);
    }

    #[test]
    fn position_definition() {
        let s = scale(3.0);
        assert_eq!(s.position(-2.0), -2.0 / 3.0);
        assert_eq!(s.position(3.0), 1.0);
    }

    #[test]
    fn negation_swaps_red_and_blue() {
        let s = scale(1.7);
        for i in -40..=40 {
            let v = i as f32 * 0.05;
            let [r, g, b] = s.rgb(v);
            assert_eq!(s.rgb(-v), [b, g, r], "v={v}");
            assert_eq!(s.position(-v), -s.position(v));
        }
    }

    #[test]
    fn scope_parsing() {
        for scope in Scope::ALL {
            assert_eq!(scope.as_str().parse::<Scope>().unwrap(), scope);
        }
        assert!("layers".parse::<Scope>().is_err());
    }
}
