use std::path::Path;

use image::{DynamicImage, GrayImage, Luma};
use md5::{Digest, Md5};

use super::{io_err, CurationError, Result};
use crate::tensor::{bilinear_resize, Tensor};

/// MD5 of raw bytes.
pub fn hash_exact(bytes: &[u8]) -> [u8; 16] {
    Md5::digest(bytes).into()
}

pub fn hash_file(path: impl AsRef<Path>) -> Result<[u8; 16]> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hash_exact(&bytes))
}

pub fn digest_hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// 64-bit difference hash.
///
/// The image is reduced to Rec.601 luma, resized bilinearly to 9×8 and rounded
/// to whole 8-bit levels. Bit `r·8+x` (counted from the most significant bit)
/// is set when pixel `x` of row `r` is brighter than pixel `x+1`.
pub fn phash64(image: &DynamicImage) -> u64 {
    let rgb = image.to_rgb8();
    let (w, h) = rgb.dimensions();
    let luma: Vec<f32> = rgb
        .pixels()
        .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
        .collect();
    let gray = Tensor::new([1, 1, h as usize, w as usize], luma).expect("pixel count matches extents");
    let small = bilinear_resize(&gray, 8, 9).expect("non-zero target");
    let px: Vec<f32> = small.data().iter().map(|v| v.round()).collect();
    let mut hash = 0u64;
    for row in 0..8 {
        for x in 0..8 {
            hash <<= 1;
            if px[row * 9 + x] > px[row * 9 + x + 1] {
                hash |= 1;
            }
        }
    }
    hash
}

pub fn phash_file(path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| CurationError::Decode {
        id: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(phash64(&img))
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

/// A 9×8 grayscale image whose difference hash is exactly `bits`.
pub fn image_with_dhash(bits: u64) -> GrayImage {
    let mut img = GrayImage::new(9, 8);
    for row in 0..8u32 {
        let mut v: i32 = 128;
        img.put_pixel(0, row, Luma([v as u8]));
        for x in 0..8u32 {
            let bit = (bits >> (63 - (row * 8 + x))) & 1;
            v += if bit == 1 { -10 } else { 10 };
            img.put_pixel(x + 1, row, Luma([v as u8]));
        }
    }
    img
}
