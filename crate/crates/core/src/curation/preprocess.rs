use std::path::Path;

use image::RgbImage;

use super::{io_err, CurationError, Result};
use crate::tensor::{bilinear_resize, Tensor};

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// Resizes a `(1, 3, H, W)` tensor with values in `[0, 1]` to `size`×`size`
/// and applies per-channel mean/std normalisation.
pub fn preprocess_tensor(rgb: &Tensor, size: usize) -> crate::tensor::Result<Tensor> {
    let mut x = if rgb.height() == size && rgb.width() == size {
        rgb.clone()
    } else {
        bilinear_resize(rgb, size, size)?
    };
    let plane = size * size;
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        let c = (i / plane) % 3;
        *v = (*v - IMAGENET_MEAN[c]) / IMAGENET_STD[c];
    }
    Ok(x)
}

/// RGB image → normalised `(1, 3, size, size)` model input.
pub fn preprocess(image: &RgbImage, size: usize) -> Tensor {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let raw = image.as_raw();
    let rgb = Tensor::from_fn([1, 3, h, w], |[_, c, y, x]| raw[(y * w + x) * 3 + c] as f32 / 255.0);
    preprocess_tensor(&rgb, size).expect("non-empty image and target")
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load_from_memory(bytes).map_err(|e| CurationError::Decode {
        id: "<upload>".into(),
        reason: e.to_string(),
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(CurationError::Decode {
            id: "<upload>".into(),
            reason: "empty image".into(),
        });
    }
    Ok(img.to_rgb8())
}

pub fn preprocess_bytes(bytes: &[u8], size: usize) -> Result<Tensor> {
    Ok(preprocess(&decode_image(bytes)?, size))
}

pub fn preprocess_path(path: impl AsRef<Path>, size: usize) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    preprocess_bytes(&bytes, size).map_err(|e| match e {
        CurationError::Decode { reason, .. } => CurationError::Decode {
            id: path.display().to_string(),
            reason,
        },
        other => other,
    })
}
