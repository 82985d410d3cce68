use serde::{Deserialize, Serialize};

use super::{GeneratorDescriptor, GeneratorKind, ImageBuffer};
use crate::axes::{orthonormal_basis, FeatureAxis};
use crate::error::{Error, Result};
use crate::latent::{dot, LatentVector, RandomStream};

pub const NUM_FEATURES: usize = 8;

/// Parameter names, in row order of the projection matrix.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "skin_tone",
    "hair_length",
    "hair_color",
    "beard_density",
    "eye_size",
    "face_width",
    "mouth_width",
    "glasses",
];

const SKIN_TONE: usize = 0;
const HAIR_LENGTH: usize = 1;
const HAIR_COLOR: usize = 2;
const BEARD: usize = 3;
const EYE_SIZE: usize = 4;
const FACE_WIDTH: usize = 5;
const MOUTH_WIDTH: usize = 6;
const GLASSES: usize = 7;

/// Procedural face parameters, each in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFaceParams {
    pub skin_tone: f64,
    pub hair_length: f64,
    pub hair_color: f64,
    pub beard_density: f64,
    pub eye_size: f64,
    pub face_width: f64,
    pub mouth_width: f64,
    pub glasses: f64,
}

impl SyntheticFaceParams {
    pub fn from_array(p: [f64; NUM_FEATURES]) -> Result<Self> {
        if let Some(&v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange {
                what: "synthetic face parameter",
                value: v,
            });
        }
        Ok(Self {
            skin_tone: p[SKIN_TONE],
            hair_length: p[HAIR_LENGTH],
            hair_color: p[HAIR_COLOR],
            beard_density: p[BEARD],
            eye_size: p[EYE_SIZE],
            face_width: p[FACE_WIDTH],
            mouth_width: p[MOUTH_WIDTH],
            glasses: p[GLASSES],
        })
    }

    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [
            self.skin_tone,
            self.hair_length,
            self.hair_color,
            self.beard_density,
            self.eye_size,
            self.face_width,
            self.mouth_width,
            self.glasses,
        ]
    }

    /// Parameter by name, as listed in [`FEATURE_NAMES`].
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.to_array()[i])
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Deterministic procedural face renderer.
///
/// Parameters are `sigmoid(W · z)` for a row-orthonormal `W` drawn from the
/// seed, so the rows of `W` are exact ground-truth feature axes. Each
/// parameter only touches pixels inside its [`feature_region`].
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    seed: u64,
    dim: usize,
    width: u32,
    height: u32,
    rows: Vec<Vec<f64>>,
}

impl SyntheticGenerator {
    pub fn new(seed: u64, dim: usize, width: u32, height: u32) -> Result<Self> {
        if dim < NUM_FEATURES {
            return Err(Error::Configuration(format!(
                "synthetic generator needs dim >= {NUM_FEATURES}, got {dim}"
            )));
        }
        let mut rng = RandomStream::new(seed);
        let raw: Vec<Vec<f64>> = (0..NUM_FEATURES)
            .map(|_| (0..dim).map(|_| rng.standard_normal()).collect())
            .collect();
        let rows = orthonormal_basis(raw.iter().map(Vec::as_slice));
        if rows.len() != NUM_FEATURES {
            return Err(Error::Configuration(
                "synthetic projection rows are linearly dependent".into(),
            ));
        }
        Ok(Self {
            seed,
            dim,
            width,
            height,
            rows,
        })
    }

    pub fn descriptor(&self) -> GeneratorDescriptor {
        GeneratorDescriptor {
            kind: GeneratorKind::Synthetic { seed: self.seed },
            dim: self.dim,
            width: self.width,
            height: self.height,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row `i` of the projection matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn params(&self, latent: &LatentVector) -> Result<SyntheticFaceParams> {
        latent.check_dim(self.dim)?;
        let mut p = [0.0; NUM_FEATURES];
        for (out, row) in p.iter_mut().zip(&self.rows) {
            *out = sigmoid(dot(row, latent.as_slice()));
        }
        SyntheticFaceParams::from_array(p)
    }

    pub fn ground_truth_axes(&self) -> Result<Vec<FeatureAxis>> {
        FEATURE_NAMES
            .iter()
            .zip(&self.rows)
            .map(|(name, row)| FeatureAxis::new(*name, LatentVector::new(row.clone())?, 0))
            .collect()
    }

    /// The eight ground-truth axes plus two entangled composite attributes,
    /// `gender` (toward male) and `age` (toward old), built as fixed mixtures
    /// of the ground-truth rows.
    pub fn feature_axes(&self) -> Result<Vec<FeatureAxis>> {
        let mut axes = self.ground_truth_axes()?;
        let mix = |weights: &[(usize, f64)]| -> Result<LatentVector> {
            let mut v = vec![0.0; self.dim];
            for &(i, w) in weights {
                v.iter_mut().zip(&self.rows[i]).for_each(|(a, r)| *a += w * r);
            }
            LatentVector::new(v)
        };
        axes.push(FeatureAxis::new(
            "gender",
            mix(&[(BEARD, 0.75), (HAIR_LENGTH, -0.55), (FACE_WIDTH, 0.35)])?,
            0,
        )?);
        axes.push(FeatureAxis::new(
            "age",
            mix(&[
                (HAIR_COLOR, 0.6),
                (EYE_SIZE, -0.4),
                (GLASSES, 0.35),
                (MOUTH_WIDTH, 0.3),
            ])?,
            0,
        )?);
        Ok(axes)
    }

    pub fn generate(&self, latent: &LatentVector) -> Result<ImageBuffer> {
        let params = self.params(latent)?;
        Ok(render(&params, self.width, self.height))
    }
}

type Rgb = [f64; 3];

const BACKGROUND: Rgb = [200.0, 210.0, 220.0];
const SKIN_LIGHT: Rgb = [255.0, 224.0, 196.0];
const SKIN_DARK: Rgb = [110.0, 70.0, 45.0];
const HAIR_DARK: Rgb = [40.0, 28.0, 20.0];
const HAIR_GRAY: Rgb = [200.0, 200.0, 205.0];
const BEARD_COLOR: Rgb = [60.0, 40.0, 30.0];
const SCLERA: Rgb = [245.0, 245.0, 245.0];
const PUPIL: Rgb = [30.0, 30.0, 40.0];
const FRAME: Rgb = [20.0, 20.0, 20.0];
const LIPS: Rgb = [160.0, 60.0, 70.0];

const FACE_CENTER: (f64, f64) = (0.5, 0.55);
const FACE_RY: f64 = 0.32;
const FACE_RX_MIN: f64 = 0.20;
const FACE_RX_SPAN: f64 = 0.08;
const HAIR_CAP: (f64, f64, f64, f64) = (0.5, 0.40, 0.33, 0.30);
const HAIR_X: (f64, f64) = (0.16, 0.84);
const HAIR_TOP: f64 = 0.40;
const HAIR_SPAN: f64 = 0.50;
const BEARD_TOP: f64 = 0.64;
const EYES: [(f64, f64); 2] = [(0.41, 0.50), (0.59, 0.50)];
const EYE_R_MIN: f64 = 0.02;
const EYE_R_SPAN: f64 = 0.035;
const RING: (f64, f64) = (0.068, 0.08);
const MOUTH_CENTER: (f64, f64) = (0.5, 0.74);
const MOUTH_HALF_H: f64 = 0.018;
const MOUTH_HALF_W_MIN: f64 = 0.04;
const MOUTH_HALF_W_SPAN: f64 = 0.08;

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn in_ellipse(u: f64, v: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
    let du = (u - cx) / rx;
    let dv = (v - cy) / ry;
    du * du + dv * dv <= 1.0
}

fn in_rect(u: f64, v: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> bool {
    (x0..=x1).contains(&u) && (y0..=y1).contains(&v)
}

fn face_rx(face_width: f64) -> f64 {
    FACE_RX_MIN + FACE_RX_SPAN * face_width
}

fn shade(p: &SyntheticFaceParams, u: f64, v: f64) -> Rgb {
    let mut c = BACKGROUND;

    let hair = lerp(HAIR_DARK, HAIR_GRAY, p.hair_color);
    let (hx, hy, hrx, hry) = HAIR_CAP;
    let long_hair = in_rect(
        u,
        v,
        HAIR_X.0,
        HAIR_X.1,
        HAIR_TOP,
        HAIR_TOP + HAIR_SPAN * p.hair_length,
    );
    if in_ellipse(u, v, hx, hy, hrx, hry) || long_hair {
        c = hair;
    }

    let (fx, fy) = FACE_CENTER;
    if in_ellipse(u, v, fx, fy, face_rx(p.face_width), FACE_RY) {
        let skin = lerp(SKIN_LIGHT, SKIN_DARK, p.skin_tone);
        c = if v > BEARD_TOP {
            lerp(skin, BEARD_COLOR, 0.85 * p.beard_density)
        } else {
            skin
        };
    }

    let eye_r = EYE_R_MIN + EYE_R_SPAN * p.eye_size;
    for &(ex, ey) in &EYES {
        let d = ((u - ex).powi(2) + (v - ey).powi(2)).sqrt();
        if d <= eye_r * 0.45 {
            c = PUPIL;
        } else if d <= eye_r {
            c = SCLERA;
        }
        if (RING.0..=RING.1).contains(&d) {
            c = lerp(c, FRAME, p.glasses);
        }
    }
    if in_rect(u, v, 0.48, 0.52, 0.495, 0.505) {
        c = lerp(c, FRAME, p.glasses);
    }

    let (mx, my) = MOUTH_CENTER;
    let half_w = MOUTH_HALF_W_MIN + MOUTH_HALF_W_SPAN * p.mouth_width;
    if in_rect(u, v, mx - half_w, mx + half_w, my - MOUTH_HALF_H, my + MOUTH_HALF_H) {
        c = LIPS;
    }
    c
}

fn render(p: &SyntheticFaceParams, width: u32, height: u32) -> ImageBuffer {
    let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
    for y in 0..height {
        let v = (y as f64 + 0.5) / height as f64;
        for x in 0..width {
            let u = (x as f64 + 0.5) / width as f64;
            let c = shade(p, u, v);
            pixels.extend(c.iter().map(|ch| ch.round().clamp(0.0, 255.0) as u8));
        }
    }
    ImageBuffer::new(width, height, pixels).expect("sized by construction")
}

/// Whether normalized image coordinate `(u, v)` lies inside the region that
/// parameter `feature` (an index into [`FEATURE_NAMES`]) can affect.
/// Pixels outside the region never change when only that parameter moves.
pub fn feature_region(feature: usize, u: f64, v: f64) -> bool {
    let (fx, fy) = FACE_CENTER;
    let max_face = in_ellipse(u, v, fx, fy, FACE_RX_MIN + FACE_RX_SPAN, FACE_RY);
    let eye_box = |u: f64, v: f64| {
        EYES.iter()
            .any(|&(ex, ey)| (u - ex).abs() <= 0.06 && (v - ey).abs() <= 0.06)
    };
    match feature {
        SKIN_TONE | FACE_WIDTH => max_face,
        HAIR_LENGTH => in_rect(u, v, HAIR_X.0, HAIR_X.1, HAIR_TOP, HAIR_TOP + HAIR_SPAN),
        HAIR_COLOR => {
            let (hx, hy, hrx, hry) = HAIR_CAP;
            in_ellipse(u, v, hx, hy, hrx, hry)
                || in_rect(u, v, HAIR_X.0, HAIR_X.1, HAIR_TOP, HAIR_TOP + HAIR_SPAN)
        }
        BEARD => max_face && v > BEARD_TOP,
        EYE_SIZE => eye_box(u, v),
        MOUTH_WIDTH => in_rect(
            u,
            v,
            MOUTH_CENTER.0 - MOUTH_HALF_W_MIN - MOUTH_HALF_W_SPAN,
            MOUTH_CENTER.0 + MOUTH_HALF_W_MIN + MOUTH_HALF_W_SPAN,
            MOUTH_CENTER.1 - MOUTH_HALF_H,
            MOUTH_CENTER.1 + MOUTH_HALF_H,
        ),
        GLASSES => in_rect(u, v, 0.32, 0.68, 0.41, 0.59),
        _ => false,
    }
}

impl SyntheticGenerator {
    /// Pixel mask of [`feature_region`] at this generator's resolution,
    /// row-major.
    pub fn region_mask(&self, feature: usize) -> Vec<bool> {
        let mut mask = Vec::with_capacity((self.width * self.height) as usize);
        for y in 0..self.height {
            let v = (y as f64 + 0.5) / self.height as f64;
            for x in 0..self.width {
                let u = (x as f64 + 0.5) / self.width as f64;
                mask.push(feature_region(feature, u, v));
            }
        }
        mask
    }
}
