//! Dense 4-D tensors in (channels, height, width, depth) order.
//!
//! The element buffer is row-major with depth (time) as the fastest axis. A
//! vector of length `n` is stored with shape `(n, 1, 1, 1)`. This layout is
//! also the byte order used by checkpoints (little-endian floats).

use std::fmt;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result};

/// Floating-point precision of a tensor buffer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

/// Element type of a [`Tensor`]: `f32` or `f64`.
pub trait Scalar:
    Float
    + Default
    + fmt::Debug
    + fmt::Display
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    const PRECISION: Precision;

    /// Converts from `f64`, rounding to nearest for `f32`.
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    /// Reads one element from the first `PRECISION.bytes()` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::F32;

    fn lit(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::F64;

    fn lit(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// Extents of a 4-D tensor: (channels, height, width, depth).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape4 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub depth: usize,
}

impl Shape4 {
    pub fn new(channels: usize, height: usize, width: usize, depth: usize) -> Result<Self> {
        let shape = Shape4 {
            channels,
            height,
            width,
            depth,
        };
        shape.validate()?;
        Ok(shape)
    }

    /// Shape of a vector of length `n`.
    pub fn vector(n: usize) -> Result<Self> {
        Self::new(n, 1, 1, 1)
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, extent) in self.axes() {
            if extent == 0 {
                return Err(Error::InvalidShape(format!("{axis} extent is 0 in {self}")));
            }
        }
        self.checked_len()
            .map(|_| ())
            .ok_or_else(|| Error::InvalidShape(format!("element count of {self} overflows")))
    }

    fn checked_len(&self) -> Option<usize> {
        self.channels
            .checked_mul(self.height)?
            .checked_mul(self.width)?
            .checked_mul(self.depth)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width * self.depth
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_vector(&self) -> bool {
        self.height == 1 && self.width == 1 && self.depth == 1
    }

    pub fn axes(&self) -> [(Axis, usize); 4] {
        [
            (Axis::Channels, self.channels),
            (Axis::Height, self.height),
            (Axis::Width, self.width),
            (Axis::Depth, self.depth),
        ]
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize, t: usize) -> usize {
        ((c * self.height + y) * self.width + x) * self.depth + t
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_vector() {
            write!(f, "{}", self.channels)
        } else {
            write!(
                f,
                "{} x {} x {} x {}",
                self.channels, self.height, self.width, self.depth
            )
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape4,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape4) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape4, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape4, data: Vec<T>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "buffer of {} elements does not fit shape {shape}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// A `(n, 1, 1, 1)` tensor. Fails for an empty buffer.
    pub fn vector(data: Vec<T>) -> Result<Self> {
        Self::from_vec(Shape4::vector(data.len())?, data)
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, c: usize, y: usize, x: usize, t: usize) -> T {
        self.data[self.shape.index(c, y, x, t)]
    }

    pub fn at_mut(&mut self, c: usize, y: usize, x: usize, t: usize) -> &mut T {
        let i = self.shape.index(c, y, x, t);
        &mut self.data[i]
    }

    /// Same buffer viewed under a new shape with the same element count.
    pub fn reshape(self, shape: Shape4) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "cannot add {} into {}",
                other.shape, self.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts every element to another precision.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_extent_rejected() {
        assert!(matches!(Shape4::new(1, 0, 2, 2), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn overflowing_shape_rejected() {
        let err = Shape4::new(usize::MAX, 2, 1, 1).unwrap_err();
        assert!(err.to_string().contains("overflows"));
    }

    #[test]
    fn index_is_row_major_depth_fastest() {
        let s = Shape4::new(2, 3, 4, 5).unwrap();
        assert_eq!(s.index(0, 0, 0, 1), 1);
        assert_eq!(s.index(0, 0, 1, 0), 5);
        assert_eq!(s.index(0, 1, 0, 0), 20);
        assert_eq!(s.index(1, 0, 0, 0), 60);
        assert_eq!(s.index(1, 2, 3, 4), s.len() - 1);
    }

    #[test]
    fn display_matches_table_convention() {
        assert_eq!(Shape4::new(32, 62, 62, 82).unwrap().to_string(), "32 x 62 x 62 x 82");
        assert_eq!(Shape4::vector(345600).unwrap().to_string(), "345600");
    }

    #[test]
    fn buffer_length_checked() {
        let s = Shape4::new(1, 2, 2, 1).unwrap();
        assert!(Tensor::<f64>::from_vec(s, vec![0.0; 3]).is_err());
    }
}
