//! Grayscale images with real-valued pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    /// Row-major pixels, nominally in [0, 1].
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape {
                what: "image pixels",
                expected: vec![height, width],
                got: vec![pixels.len()],
            });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn linf_distance(&self, other: &Image) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn l2_distance(&self, other: &Image) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn clamp_unit(&mut self) {
        for p in &mut self.pixels {
            *p = p.clamp(0.0, 1.0);
        }
    }

    /// Round every pixel to the nearest of 256 levels, as an 8-bit export would.
    pub fn quantize_8bit(&self) -> Image {
        let mut out = self.clone();
        for p in &mut out.pixels {
            *p = f64::from(to_u8(*p)) / 255.0;
        }
        out
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| to_u8(p)).collect()
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(vec![self.height, self.width], self.pixels.clone())
            .expect("image pixels are finite")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [h, w] => Self::new(h, w, t.to_f64_vec()),
            _ => Err(Error::Shape {
                what: "image tensor rank",
                expected: vec![2],
                got: t.shape().to_vec(),
            }),
        }
    }

    /// Split an N x H x W tensor (or a single H x W one) into images.
    pub fn batch_from_tensor(t: &Tensor) -> Result<Vec<Self>> {
        match *t.shape() {
            [_, _] => Ok(vec![Self::from_tensor(t)?]),
            [n, h, w] => {
                let data = t.to_f64_vec();
                (0..n)
                    .map(|i| Self::new(h, w, data[i * h * w..(i + 1) * h * w].to_vec()))
                    .collect()
            }
            _ => Err(Error::Shape {
                what: "image batch tensor rank",
                expected: vec![3],
                got: t.shape().to_vec(),
            }),
        }
    }

    pub fn batch_to_tensor(images: &[Image]) -> Result<Tensor> {
        let (h, w) = images.first().map_or((0, 0), |i| (i.height, i.width));
        if images.iter().any(|i| i.height != h || i.width != w) {
            return Err(Error::invalid("images", "batch images differ in shape"));
        }
        let data = images.iter().flat_map(|i| i.pixels.iter().copied()).collect();
        Tensor::from_f64(vec![images.len(), h, w], data)
    }
}

fn to_u8(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}
