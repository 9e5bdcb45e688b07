use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Side length of every augmented output.
pub const AUGMENT_SIZE: u32 = 224;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    HorizontalFlip,
    VerticalFlip,
    Rotate,
    Brightness,
    Contrast,
    CropResize,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 6] = [
        AugmentKind::HorizontalFlip,
        AugmentKind::VerticalFlip,
        AugmentKind::Rotate,
        AugmentKind::Brightness,
        AugmentKind::Contrast,
        AugmentKind::CropResize,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentationOp {
    /// `gain` is a brightness multiplier, 1.0 on the first pass through the op set.
    HorizontalFlip { gain: f32 },
    VerticalFlip { gain: f32 },
    Rotate { degrees: f32 },
    Brightness { factor: f32 },
    Contrast { factor: f32 },
    /// 90% window with its top-left corner at these fractions of the extent.
    CropResize { left: f32, top: f32 },
}

impl AugmentationOp {
    pub fn kind(&self) -> AugmentKind {
        match self {
            Self::HorizontalFlip { .. } => AugmentKind::HorizontalFlip,
            Self::VerticalFlip { .. } => AugmentKind::VerticalFlip,
            Self::Rotate { .. } => AugmentKind::Rotate,
            Self::Brightness { .. } => AugmentKind::Brightness,
            Self::Contrast { .. } => AugmentKind::Contrast,
            Self::CropResize { .. } => AugmentKind::CropResize,
        }
    }
}

fn rng_for(image_id: &str, seed: u64, op_index: Option<usize>) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(image_id.as_bytes());
    if let Some(i) = op_index {
        h.update((i as u64).to_le_bytes());
    }
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// A signed magnitude in `±[lo, hi]`.
fn signed(rng: &mut ChaCha8Rng, lo: f32, hi: f32) -> f32 {
    let m = lo + (hi - lo) * rng.random::<f32>();
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

/// `factor` operations for one image: the six kinds in a seeded order without
/// replacement, cycling with fresh parameters once all six are used.
pub fn plan_ops(image_id: &str, factor: usize, seed: u64) -> Vec<AugmentationOp> {
    let mut order = AugmentKind::ALL;
    order.shuffle(&mut rng_for(image_id, seed, None));
    (0..factor)
        .map(|i| {
            let mut rng = rng_for(image_id, seed, Some(i));
            let repeat = i >= order.len();
            let gain = if repeat { 1.0 + signed(&mut rng, 0.05, 0.2) } else { 1.0 };
            match order[i % order.len()] {
                AugmentKind::HorizontalFlip => AugmentationOp::HorizontalFlip { gain },
                AugmentKind::VerticalFlip => AugmentationOp::VerticalFlip { gain },
                AugmentKind::Rotate => AugmentationOp::Rotate {
                    degrees: signed(&mut rng, 1.0, 25.0),
                },
                AugmentKind::Brightness => AugmentationOp::Brightness {
                    factor: 1.0 + signed(&mut rng, 0.05, 0.2),
                },
                AugmentKind::Contrast => AugmentationOp::Contrast {
                    factor: 1.0 + signed(&mut rng, 0.05, 0.2),
                },
                AugmentKind::CropResize => AugmentationOp::CropResize {
                    left: 0.1 * rng.random::<f32>(),
                    top: 0.1 * rng.random::<f32>(),
                },
            }
        })
        .collect()
}

fn scale(img: &mut RgbImage, gain: f32) {
    for p in img.pixels_mut() {
        for v in p.0.iter_mut() {
            *v = (*v as f32 * gain).round().clamp(0.0, 255.0) as u8;
        }
    }
}

fn bilinear_at(img: &RgbImage, x: f32, y: f32) -> Rgb<u8> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x = x.clamp(0.0, (w - 1) as f32);
    let y = y.clamp(0.0, (h - 1) as f32);
    let (x0, y0) = (x.floor() as i64, y.floor() as i64);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f32, y - y0 as f32);
    let px = |xx: i64, yy: i64| img.get_pixel(xx as u32, yy as u32).0;
    let (a, b, c, d) = (px(x0, y0), px(x1, y0), px(x0, y1), px(x1, y1));
    let mut out = [0u8; 3];
    for k in 0..3 {
        let top = a[k] as f32 * (1.0 - fx) + b[k] as f32 * fx;
        let bottom = c[k] as f32 * (1.0 - fx) + d[k] as f32 * fx;
        out[k] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

fn rotate(img: &RgbImage, degrees: f32) -> RgbImage {
    let (w, h) = img.dimensions();
    let (cx, cy) = ((w as f32 - 1.0) / 2.0, (h as f32 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    RgbImage::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f32 - cx, y as f32 - cy);
        bilinear_at(img, c * dx + s * dy + cx, -s * dx + c * dy + cy)
    })
}

fn contrast(img: &mut RgbImage, factor: f32) {
    let n = (img.width() * img.height()).max(1) as f32;
    let mean: f32 = img
        .pixels()
        .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
        .sum::<f32>()
        / n;
    for p in img.pixels_mut() {
        for v in p.0.iter_mut() {
            *v = (mean + (*v as f32 - mean) * factor).round().clamp(0.0, 255.0) as u8;
        }
    }
}

/// Applies one op and resizes the result to [`AUGMENT_SIZE`] square.
pub fn apply_op(img: &RgbImage, op: AugmentationOp) -> RgbImage {
    let out = match op {
        AugmentationOp::HorizontalFlip { gain } => {
            let mut o = imageops::flip_horizontal(img);
            scale(&mut o, gain);
            o
        }
        AugmentationOp::VerticalFlip { gain } => {
            let mut o = imageops::flip_vertical(img);
            scale(&mut o, gain);
            o
        }
        AugmentationOp::Rotate { degrees } => rotate(img, degrees),
        AugmentationOp::Brightness { factor } => {
            let mut o = img.clone();
            scale(&mut o, factor);
            o
        }
        AugmentationOp::Contrast { factor } => {
            let mut o = img.clone();
            contrast(&mut o, factor);
            o
        }
        AugmentationOp::CropResize { left, top } => {
            let (w, h) = img.dimensions();
            let cw = ((w as f32 * 0.9).round() as u32).max(1);
            let ch = ((h as f32 * 0.9).round() as u32).max(1);
            let x = ((w as f32 * left) as u32).min(w - cw);
            let y = ((h as f32 * top) as u32).min(h - ch);
            imageops::crop_imm(img, x, y, cw, ch).to_image()
        }
    };
    if out.dimensions() == (AUGMENT_SIZE, AUGMENT_SIZE) {
        out
    } else {
        imageops::resize(&out, AUGMENT_SIZE, AUGMENT_SIZE, FilterType::Triangle)
    }
}

/// `factor` augmented 224×224 copies of `img`, deterministic in `(image_id, seed)`.
pub fn apply_augmentations(img: &RgbImage, image_id: &str, factor: usize, seed: u64) -> Vec<(AugmentationOp, RgbImage)> {
    plan_ops(image_id, factor, seed)
        .into_iter()
        .map(|op| (op, apply_op(img, op)))
        .collect()
}
