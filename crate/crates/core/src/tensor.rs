//! Dense rank-3 activation volumes.
//!
//! Storage is row-major over `(row, column, channel)`, so the flat index of
//! `(h, w, c)` is `(h * width + w) * channels + c`. Flattening a volume is
//! therefore a relabeling of its storage.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape { height, width, channels }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ensure_positive(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Shape(format!(
                "dimensions must be positive, got {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        Ok(())
    }

    #[inline]
    pub const fn index(&self, h: usize, w: usize, c: usize) -> usize {
        (h * self.width + w) * self.channels + c
    }

    /// Inverse of [`Shape::index`].
    pub const fn coords(&self, flat: usize) -> (usize, usize, usize) {
        let c = flat % self.channels;
        let hw = flat / self.channels;
        (hw / self.width, hw % self.width, c)
    }
}

impl core::fmt::Display for Shape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, fill: f32) -> Result<Self> {
        let shape = Shape::new(height, width, channels);
        shape.ensure_positive()?;
        Ok(Tensor3 { shape, data: vec![fill; shape.len()] })
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::new(shape.height, shape.width, shape.channels, 0.0)
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        shape.ensure_positive()?;
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "{} elements cannot fill a {shape} tensor ({} expected)",
                data.len(),
                shape.len()
            )));
        }
        Ok(Tensor3 { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Unchecked read; panics when out of range.
    #[inline]
    pub fn at(&self, h: usize, w: usize, c: usize) -> f32 {
        self.data[self.shape.index(h, w, c)]
    }

    pub fn get(&self, h: usize, w: usize, c: usize) -> Result<f32> {
        self.check_coord(h, w, c)?;
        Ok(self.at(h, w, c))
    }

    pub fn set(&mut self, h: usize, w: usize, c: usize, value: f32) -> Result<()> {
        self.check_coord(h, w, c)?;
        let i = self.shape.index(h, w, c);
        self.data[i] = value;
        Ok(())
    }

    fn check_coord(&self, h: usize, w: usize, c: usize) -> Result<()> {
        if h >= self.shape.height || w >= self.shape.width || c >= self.shape.channels {
            return Err(Error::Bounds(format!(
                "coordinate ({h}, {w}, {c}) outside {} tensor",
                self.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn check_channel(&self, channel: usize) -> Result<()> {
        if channel >= self.shape.channels {
            return Err(Error::Bounds(format!(
                "channel {channel} outside {} tensor with {} channels",
                self.shape, self.shape.channels
            )));
        }
        Ok(())
    }

    /// One channel plane, row-major.
    pub fn plane(&self, channel: usize) -> Result<Vec<f32>> {
        self.check_channel(channel)?;
        Ok(self.data.iter().skip(channel).step_by(self.shape.channels).copied().collect())
    }

    /// Copy a `size`×`size` square from one channel plane.
    pub fn extract_window(&self, channel: usize, row: usize, col: usize, size: usize) -> Result<Window> {
        self.check_channel(channel)?;
        if size == 0 {
            return Err(Error::Shape("window size must be at least 1".into()));
        }
        if row + size > self.shape.height {
            return Err(Error::Bounds(format!(
                "window row {row} + size {size} exceeds plane height {}",
                self.shape.height
            )));
        }
        if col + size > self.shape.width {
            return Err(Error::Bounds(format!(
                "window column {col} + size {size} exceeds plane width {}",
                self.shape.width
            )));
        }
        let mut values = Vec::with_capacity(size * size);
        for r in row..row + size {
            for q in col..col + size {
                values.push(self.at(r, q, channel));
            }
        }
        Ok(Window { origin_row: row, origin_col: col, size, values })
    }

    /// Write a window's values back at its origin.
    pub fn embed_window(&mut self, channel: usize, window: &Window) -> Result<()> {
        self.check_channel(channel)?;
        if window.origin_row + window.size > self.shape.height
            || window.origin_col + window.size > self.shape.width
        {
            return Err(Error::Bounds(format!(
                "window at ({}, {}) of size {} does not fit a {} tensor",
                window.origin_row, window.origin_col, window.size, self.shape
            )));
        }
        for r in 0..window.size {
            for q in 0..window.size {
                let i = self.shape.index(window.origin_row + r, window.origin_col + q, channel);
                self.data[i] = window.get(r, q);
            }
        }
        Ok(())
    }

    /// Exact extrema of one channel plane.
    pub fn plane_minmax(&self, channel: usize) -> Result<(f32, f32)> {
        self.check_channel(channel)?;
        let mut values = self.data.iter().skip(channel).step_by(self.shape.channels);
        let first = *values.next().expect("tensor planes are never empty");
        Ok(values.fold((first, first), |(lo, hi), &v| {
            (if v < lo { v } else { lo }, if v > hi { v } else { hi })
        }))
    }

    /// Largest absolute value over the whole tensor.
    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| {
            let a = libm::fabsf(*v);
            if a > m {
                a
            } else {
                m
            }
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor3 {
        Tensor3 { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A square region copied out of one channel plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub origin_row: usize,
    pub origin_col: usize,
    pub size: usize,
    /// `size * size` values, row-major.
    pub values: Vec<f32>,
}

impl Window {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.size + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks(self.size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, c: usize) -> Tensor3 {
        let shape = Shape::new(h, w, c);
        Tensor3::from_vec(shape, (0..shape.len()).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn new_fills() {
        let t = Tensor3::new(2, 2, 1, 0.0).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        let t = Tensor3::new(64, 64, 3, 1.0).unwrap();
        assert_eq!(t.data().len(), 12288);
        assert!(t.data().iter().all(|&v| v == 1.0));
        assert_eq!(Tensor3::new(13, 13, 10, 0.0).unwrap().data().len(), 1690);
    }

    #[test]
    fn zero_dimension_is_shape_error() {
        assert!(matches!(Tensor3::new(0, 4, 1, 0.0), Err(Error::Shape(_))));
        assert!(matches!(Tensor3::new(4, 4, 0, 0.0), Err(Error::Shape(_))));
        assert!(matches!(Tensor3::from_vec(Shape::new(2, 2, 1), vec![0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn window_of_ones() {
        let t = Tensor3::new(4, 4, 1, 1.0).unwrap();
        let w = t.extract_window(0, 0, 0, 3).unwrap();
        assert_eq!(w.values, vec![1.0; 9]);
    }

    #[test]
    fn window_values_follow_layout() {
        let t = ramp(4, 4, 1);
        let w = t.extract_window(0, 1, 1, 2).unwrap();
        assert_eq!(w.values, vec![5.0, 6.0, 9.0, 10.0]);
        // second channel of an interleaved tensor
        let t = ramp(4, 4, 2);
        let w = t.extract_window(1, 1, 1, 2).unwrap();
        assert_eq!(w.values, vec![11.0, 13.0, 19.0, 21.0]);
    }

    #[test]
    fn window_out_of_bounds_names_coordinate() {
        let t = ramp(4, 4, 1);
        let err = t.extract_window(0, 3, 3, 3).unwrap_err();
        match err {
            Error::Bounds(msg) => assert!(msg.contains("row 3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(t.extract_window(1, 0, 0, 1), Err(Error::Bounds(_))));
    }

    #[test]
    fn minmax() {
        let t = Tensor3::from_vec(Shape::new(2, 2, 1), vec![-2.0, 0.0, 1.0, 3.0]).unwrap();
        assert_eq!(t.plane_minmax(0).unwrap(), (-2.0, 3.0));
        let z = Tensor3::new(3, 3, 2, 0.0).unwrap();
        assert_eq!(z.plane_minmax(1).unwrap(), (0.0, 0.0));
        assert!(matches!(z.plane_minmax(2), Err(Error::Bounds(_))));
    }

    #[test]
    fn coords_inverts_index() {
        let s = Shape::new(13, 13, 10);
        assert_eq!(s.index(1, 0, 0), 130);
        for flat in [0, 1, 129, 130, 1689] {
            let (h, w, c) = s.coords(flat);
            assert_eq!(s.index(h, w, c), flat);
        }
    }

    #[test]
    fn plane_extracts_channel() {
        let t = ramp(2, 2, 3);
        assert_eq!(t.plane(2).unwrap(), vec![2.0, 5.0, 8.0, 11.0]);
    }
}
