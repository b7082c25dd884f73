//! Synthetic image/prompt pairs.
//!
//! Each item has an attribute vector `a` in R^d. The image is a sum of
//! Gaussian blobs, four attributes per blob (center row, center column,
//! width, amplitude), clamped to [0, 1]. The prompt embedding is `a` plus
//! small Gaussian jitter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const EMBEDDING_JITTER: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyDatasetSpec {
    pub count: usize,
    pub image_size: usize,
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        Self {
            count: 64,
            image_size: 16,
            embed_dim: 16,
            seed: 0,
        }
    }
}

impl ToyDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("count", "dataset must be non-empty"));
        }
        if self.image_size < 2 {
            return Err(Error::invalid("image_size", "must be at least 2"));
        }
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(4) {
            return Err(Error::invalid("embed_dim", "must be a positive multiple of 4"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyItem {
    pub attributes: Vec<f64>,
    pub image: Image,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub spec: ToyDatasetSpec,
    pub items: Vec<ToyItem>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Render the blob image described by `attributes` (length a multiple of 4).
pub fn render(attributes: &[f64], size: usize) -> Image {
    let mid = (size as f64 - 1.0) / 2.0;
    let reach = size as f64 * 0.35;
    let blobs: Vec<(f64, f64, f64, f64)> = attributes
        .chunks_exact(4)
        .map(|a| {
            let row = mid + reach * (a[0] / 1.5).tanh();
            let col = mid + reach * (a[1] / 1.5).tanh();
            let width = size as f64 * (0.08 + 0.12 * sigmoid(a[2]));
            let amp = 0.25 + 0.5 * sigmoid(a[3]);
            (row, col, width, amp)
        })
        .collect();
    let mut pixels = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let v: f64 = blobs
                .iter()
                .map(|&(br, bc, w, amp)| {
                    let d2 = (r as f64 - br).powi(2) + (c as f64 - bc).powi(2);
                    amp * (-d2 / (2.0 * w * w)).exp()
                })
                .sum();
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    Image {
        height: size,
        width: size,
        pixels,
    }
}

pub fn generate_dataset(spec: &ToyDatasetSpec) -> Result<ToyDataset> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let items = (0..spec.count)
        .map(|i| {
            let mut rng = root.child_indexed("item", i as u64);
            let attributes = rng.gaussian_vec(spec.embed_dim);
            let image = render(&attributes, spec.image_size);
            let embedding = attributes
                .iter()
                .map(|a| a + EMBEDDING_JITTER * rng.gaussian())
                .collect();
            ToyItem {
                attributes,
                image,
                embedding,
            }
        })
        .collect();
    Ok(ToyDataset { spec: *spec, items })
}

impl ToyDataset {
    pub fn images(&self) -> Vec<Image> {
        self.items.iter().map(|i| i.image.clone()).collect()
    }

    /// `images` (N x H x W) and `embeddings` (N x d) tensors.
    pub fn to_tensors(&self) -> Result<(Tensor, Tensor)> {
        let images = Image::batch_to_tensor(&self.images())?;
        let d = self.spec.embed_dim;
        let emb = Tensor::from_f64(
            vec![self.items.len(), d],
            self.items.iter().flat_map(|i| i.embedding.iter().copied()).collect(),
        )?;
        Ok((images, emb))
    }
}
