//! Genotype-to-phenotype mapping: latent vectors in, RGB images out.
//!
//! Two backends share one contract. [`SyntheticGenerator`] renders a
//! procedural face from eight parameters that are sigmoids of fixed
//! orthonormal latent projections, which makes every latent-space claim
//! measurable. [`ExternalGenerator`] delegates to a neural model living
//! behind a subprocess or HTTP endpoint.

mod external;
mod synthetic;

use std::io::Cursor;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use external::{ExternalEndpoint, ExternalGenerator, GenerateRequest};
pub use synthetic::{
    feature_region, SyntheticFaceParams, SyntheticGenerator, FEATURE_NAMES, NUM_FEATURES,
};

use crate::axes::FeatureAxis;
use crate::error::{Error, Result};
use crate::latent::LatentVector;

/// Row-major 8-bit RGB image.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImageBuffer({}x{})", self.width, self.height)
    }
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation("image dimensions must be positive".into()));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::Validation(format!(
                "expected {expected} RGB bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let img = image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w, h, rgb.into_raw())
    }

    pub(crate) fn to_rgba_image(&self) -> image::RgbaImage {
        let mut rgba = Vec::with_capacity(self.pixels.len() / 3 * 4);
        for px in self.pixels.chunks_exact(3) {
            rgba.extend_from_slice(&[px[0], px[1], px[2], 255]);
        }
        image::RgbaImage::from_raw(self.width, self.height, rgba).expect("sized above")
    }
}

/// Which backend a descriptor refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorKind {
    Synthetic {
        seed: u64,
    },
    ExternalModel {
        model: String,
        endpoint: ExternalEndpoint,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default)]
        retries: u32,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

/// Everything needed to reproduce a rendering: backend, latent width and
/// output resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDescriptor {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub dim: usize,
    pub width: u32,
    pub height: u32,
}

impl GeneratorDescriptor {
    pub fn synthetic(seed: u64, dim: usize) -> Self {
        Self {
            kind: GeneratorKind::Synthetic { seed },
            dim,
            width: 128,
            height: 128,
        }
    }

    pub fn with_resolution(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self.kind, GeneratorKind::Synthetic { .. })
    }
}

/// A configured backend, ready to render.
#[derive(Debug, Clone)]
pub enum Generator {
    Synthetic(SyntheticGenerator),
    External(ExternalGenerator),
}

impl Generator {
    pub fn from_descriptor(descriptor: &GeneratorDescriptor) -> Result<Self> {
        if descriptor.dim == 0 {
            return Err(Error::InvalidDimension);
        }
        if descriptor.width == 0 || descriptor.height == 0 {
            return Err(Error::Validation("output resolution must be positive".into()));
        }
        Ok(match &descriptor.kind {
            GeneratorKind::Synthetic { seed } => Generator::Synthetic(SyntheticGenerator::new(
                *seed,
                descriptor.dim,
                descriptor.width,
                descriptor.height,
            )?),
            GeneratorKind::ExternalModel { .. } => {
                Generator::External(ExternalGenerator::new(descriptor.clone())?)
            }
        })
    }

    pub fn descriptor(&self) -> GeneratorDescriptor {
        match self {
            Generator::Synthetic(g) => g.descriptor(),
            Generator::External(g) => g.descriptor().clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Generator::Synthetic(g) => g.dim(),
            Generator::External(g) => g.descriptor().dim,
        }
    }

    pub fn generate(&self, latent: &LatentVector) -> Result<ImageBuffer> {
        match self {
            Generator::Synthetic(g) => g.generate(latent),
            Generator::External(g) => g.generate(latent),
        }
    }

    pub fn synthetic_params(&self, latent: &LatentVector) -> Result<SyntheticFaceParams> {
        match self {
            Generator::Synthetic(g) => g.params(latent),
            Generator::External(_) => Err(Error::Unsupported(
                "synthetic parameters exist only for the synthetic backend",
            )),
        }
    }

    pub fn ground_truth_axes(&self) -> Result<Vec<FeatureAxis>> {
        match self {
            Generator::Synthetic(g) => g.ground_truth_axes(),
            Generator::External(_) => Err(Error::Unsupported(
                "ground-truth axes exist only for the synthetic backend",
            )),
        }
    }

    pub fn as_synthetic(&self) -> Option<&SyntheticGenerator> {
        match self {
            Generator::Synthetic(g) => Some(g),
            Generator::External(_) => None,
        }
    }
}

/// One-shot render. Prefer building a [`Generator`] once when rendering
/// many latents.
pub fn generate(descriptor: &GeneratorDescriptor, latent: &LatentVector) -> Result<ImageBuffer> {
    Generator::from_descriptor(descriptor)?.generate(latent)
}

pub fn synthetic_params(
    descriptor: &GeneratorDescriptor,
    latent: &LatentVector,
) -> Result<SyntheticFaceParams> {
    Generator::from_descriptor(descriptor)?.synthetic_params(latent)
}

pub fn ground_truth_axes(descriptor: &GeneratorDescriptor) -> Result<Vec<FeatureAxis>> {
    Generator::from_descriptor(descriptor)?.ground_truth_axes()
}

/// Content address of a rendering: SHA-256 over the descriptor's JSON and
/// the latent's little-endian bytes.
pub fn image_key(descriptor: &GeneratorDescriptor, latent: &LatentVector) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(descriptor).expect("descriptor serializes"));
    hasher.update(latent.to_le_bytes());
    hex::encode(hasher.finalize())
}
