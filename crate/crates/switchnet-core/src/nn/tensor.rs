//! Minimal dense real tensor, up to three axes (height, width, channels),
//! contiguous row-major with the channel axis fastest.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl RealTensor {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        RealTensor { h, w, c, data: vec![0.0; h * w * c] }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::shape(
                "tensor",
                format!("{} values for {h}x{w}x{c}", h * w * c),
                format!("{}", data.len()),
            ));
        }
        Ok(RealTensor { h, w, c, data })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.w + j) * self.c + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.data[(i * self.w + j) * self.c + k] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &RealTensor) -> bool {
        self.h == other.h && self.w == other.w && self.c == other.c
    }
}
