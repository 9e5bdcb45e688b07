//! Grad-CAM at the final 1×1 conv output.
//!
//! The only path from those activations `A` to a logit is
//! GAP → linear(W1, b1) → ReLU → linear(W2, b2), so the gradient is analytic:
//!
//! ```text
//! ∂logit_c / ∂A[k,i,j] = (1 / HW) · Σ_h W2[c,h] · 1[z_h > 0] · W1[h,k]
//! ```
//!
//! where `z` is the hidden pre-activation. It is constant over space, so the
//! channel weight `α_k` equals it.

use std::io::Cursor;

use image::{ImageFormat, Rgba, RgbaImage};

use crate::curation::{IMAGENET_MEAN, IMAGENET_STD};
use crate::model::{HeadView, ModelError, ModelGraph, Result};
use crate::tensor::{bilinear_resize, softmax, Tensor, TensorError};

/// Overlay side length.
pub const OVERLAY_SIZE: usize = 224;
/// Heatmap opacity when compositing.
pub const OVERLAY_ALPHA: f32 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CamResult {
    pub target_class: usize,
    pub logits: Vec<f32>,
    pub probabilities: Vec<f32>,
    pub alphas: Vec<f32>,
    pub height: usize,
    pub width: usize,
    /// `ReLU(Σ_k α_k·A_k)`, row-major `height × width`.
    pub raw_map: Vec<f32>,
    /// Min-max scaled `raw_map`; all zeros when `raw_map` is constant.
    pub normalized_map: Vec<f32>,
    pub overlay: RgbaImage,
}

impl CamResult {
    pub fn overlay_png(&self) -> Vec<u8> {
        encode_png(&self.overlay)
    }
}

fn check_single(a: &Tensor, op: &'static str) -> Result<()> {
    if a.batch() != 1 {
        return Err(TensorError::Dimension {
            op,
            axis: "batch",
            expected: 1,
            actual: a.batch(),
        }
        .into());
    }
    Ok(())
}

/// Gradient of logit `class` with respect to activations `a` of shape `(1, C, H, W)`.
pub fn head_gradient(head: HeadView<'_>, a: &Tensor, class: usize) -> Result<Tensor> {
    check_single(a, "head_gradient")?;
    let (hidden, output) = (head.hidden, head.output);
    if class >= output.out_features {
        return Err(ModelError::ClassOutOfRange {
            class,
            num_classes: output.out_features,
        });
    }
    let [_, c, h, w] = a.shape();
    if c != hidden.in_features {
        return Err(TensorError::Dimension {
            op: "head_gradient",
            axis: "channels",
            expected: hidden.in_features,
            actual: c,
        }
        .into());
    }
    let hw = (h * w) as f64;
    let pooled: Vec<f64> = (0..c)
        .map(|k| a.plane(0, k).iter().map(|&v| v as f64).sum::<f64>() / hw)
        .collect();
    let w2 = output.row(class);
    let mut grad = vec![0f64; c];
    for (j, &w2_cj) in w2.iter().enumerate() {
        let row = hidden.row(j);
        let z = hidden.bias[j] as f64 + row.iter().zip(&pooled).map(|(&wk, &p)| wk as f64 * p).sum::<f64>();
        if z > 0.0 && w2_cj != 0.0 {
            for (g, &wk) in grad.iter_mut().zip(row) {
                *g += w2_cj as f64 * wk as f64;
            }
        }
    }
    Ok(Tensor::from_fn([1, c, h, w], |[_, k, _, _]| (grad[k] / hw) as f32))
}

/// Channel weights: spatial mean of each gradient channel.
pub fn channel_weights(grad: &Tensor) -> Vec<f32> {
    let hw = (grad.height() * grad.width()) as f64;
    (0..grad.channels())
        .map(|k| (grad.plane(0, k).iter().map(|&v| v as f64).sum::<f64>() / hw) as f32)
        .collect()
}

/// `(raw, normalized)` maps from activations `(1, C, H, W)` and channel weights.
pub fn cam_from_activations(a: &Tensor, alphas: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
    check_single(a, "gradcam")?;
    if alphas.len() != a.channels() {
        return Err(TensorError::Dimension {
            op: "gradcam",
            axis: "channels",
            expected: a.channels(),
            actual: alphas.len(),
        }
        .into());
    }
    let plane = a.height() * a.width();
    let mut acc = vec![0f64; plane];
    for (k, &alpha) in alphas.iter().enumerate() {
        for (s, &v) in acc.iter_mut().zip(a.plane(0, k)) {
            *s += alpha as f64 * v as f64;
        }
    }
    let raw: Vec<f32> = acc.into_iter().map(|v| v.max(0.0) as f32).collect();
    Ok((raw.clone(), normalize_map(&raw)))
}

/// `(x − min) / (max − min)`, or zeros for a constant map.
pub fn normalize_map(map: &[f32]) -> Vec<f32> {
    let min = map.iter().copied().fold(f32::INFINITY, f32::min);
    let max = map.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let range = max - min;
    if range.is_nan() || range <= 0.0 {
        return vec![0.0; map.len()];
    }
    map.iter().map(|&v| ((v - min) / range).clamp(0.0, 1.0)).collect()
}

/// Blue → cyan → yellow → red ramp.
pub fn colormap(t: f32) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let ch = |centre: f32| ((1.5 - (4.0 * t - centre).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0), ch(2.0), ch(1.0)]
}

/// Alpha-composites the coloured map over `base` (both `OVERLAY_SIZE` square).
pub fn overlay(normalized_map: &[f32], base: &RgbaImage) -> RgbaImage {
    let (w, h) = base.dimensions();
    assert_eq!(normalized_map.len(), (w * h) as usize, "map and base extents differ");
    RgbaImage::from_fn(w, h, |x, y| {
        let heat = colormap(normalized_map[(y * w + x) as usize]);
        let px = base.get_pixel(x, y);
        let mut out = [0u8, 0, 0, 255];
        for c in 0..3 {
            let v = OVERLAY_ALPHA * heat[c] as f32 + (1.0 - OVERLAY_ALPHA) * px[c] as f32;
            out[c] = v.round().clamp(0.0, 255.0) as u8;
        }
        Rgba(out)
    })
}

/// Undoes mean/std normalisation of a `(1, 3, H, W)` model input and resamples
/// it to the overlay size.
pub fn denormalize_to_rgba(input: &Tensor) -> Result<RgbaImage> {
    let s = OVERLAY_SIZE;
    let x = if input.height() == s && input.width() == s {
        input.clone()
    } else {
        bilinear_resize(input, s, s)?
    };
    Ok(RgbaImage::from_fn(s as u32, s as u32, |px, py| {
        let mut out = [0u8, 0, 0, 255];
        for c in 0..3 {
            let v = x.at(0, c, py as usize, px as usize) * IMAGENET_STD[c] + IMAGENET_MEAN[c];
            out[c] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
        }
        Rgba(out)
    }))
}

pub fn encode_png(img: &RgbaImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("in-memory PNG encoding");
    buf.into_inner()
}

/// Grad-CAM for one preprocessed image `(1, 3, S, S)`. `class = None` explains the argmax.
pub fn gradcam_map(model: &ModelGraph, input: &Tensor, class: Option<usize>) -> Result<CamResult> {
    check_single(input, "gradcam")?;
    let trace = model.forward_trace(input)?;
    let logits = trace.logits_row(0).to_vec();
    let target = match class {
        Some(c) => c,
        None => argmax(&logits),
    };
    let grad = head_gradient(model.head(), &trace.features, target)?;
    let alphas = channel_weights(&grad);
    let (raw_map, normalized_map) = cam_from_activations(&trace.features, &alphas)?;
    let (height, width) = (trace.features.height(), trace.features.width());
    let small = Tensor::new([1, 1, height, width], normalized_map.clone())?;
    let up: Vec<f32> = bilinear_resize(&small, OVERLAY_SIZE, OVERLAY_SIZE)?
        .into_data()
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    let overlay = overlay(&up, &denormalize_to_rgba(input)?);
    Ok(CamResult {
        target_class: target,
        probabilities: softmax(&logits),
        logits,
        alphas,
        height,
        width,
        raw_map,
        normalized_map,
        overlay,
    })
}

/// First index of the largest value.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Linear, ModelConfig};
    use crate::NUM_CLASSES;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn head(c: usize, hidden: usize, classes: usize, rng: &mut ChaCha8Rng) -> (Linear, Linear) {
        let mut fc1 = Linear::new("fc1", c, hidden, true);
        let mut fc2 = Linear::new("fc2", hidden, classes, false);
        for v in fc1.weight.iter_mut().chain(fc1.bias.iter_mut()).chain(fc2.weight.iter_mut()).chain(fc2.bias.iter_mut()) {
            *v = rng.random_range(-1.0..1.0);
        }
        (fc1, fc2)
    }

    fn logit(fc1: &Linear, fc2: &Linear, a: &[f64], c: usize, hw: usize, class: usize) -> f64 {
        let pooled: Vec<f64> = (0..c).map(|k| a[k * hw..(k + 1) * hw].iter().sum::<f64>() / hw as f64).collect();
        let hidden: Vec<f64> = (0..fc1.out_features)
            .map(|j| {
                let z = fc1.bias[j] as f64 + fc1.row(j).iter().zip(&pooled).map(|(&w, &p)| w as f64 * p).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        fc2.bias[class] as f64 + fc2.row(class).iter().zip(&hidden).map(|(&w, &h)| w as f64 * h).sum::<f64>()
    }

    #[test]
    fn single_hidden_unit_by_hand() {
        let mut fc1 = Linear::new("fc1", 3, 1, true);
        let mut fc2 = Linear::new("fc2", 1, 2, false);
        fc1.weight = vec![0.8; 3];
        fc1.bias = vec![0.1];
        fc2.weight = vec![1.0, 0.0];
        let a = Tensor::filled([1, 3, 2, 2], 1.0);
        let g = head_gradient(HeadView { hidden: &fc1, output: &fc2 }, &a, 0).unwrap();
        for v in g.data() {
            assert!((v - 0.2).abs() < 1e-7);
        }
    }

    #[test]
    fn dead_relu_gives_zero_gradient() {
        let mut fc1 = Linear::new("fc1", 2, 3, true);
        let mut fc2 = Linear::new("fc2", 3, 2, false);
        fc1.weight = vec![1.0; 6];
        fc1.bias = vec![-10.0; 3];
        fc2.weight = vec![1.0; 6];
        let a = Tensor::filled([1, 2, 3, 3], 0.5);
        let g = head_gradient(HeadView { hidden: &fc1, output: &fc2 }, &a, 1).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn class_out_of_range() {
        let fc1 = Linear::new("fc1", 2, 3, true);
        let fc2 = Linear::new("fc2", 3, 2, false);
        let a = Tensor::zeros([1, 2, 2, 2]);
        let err = head_gradient(HeadView { hidden: &fc1, output: &fc2 }, &a, 2).unwrap_err();
        assert!(matches!(err, ModelError::ClassOutOfRange { class: 2, num_classes: 2 }));
    }

    #[test]
    fn matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut checked = 0;
        for trial in 0..60 {
            let (c, hidden, classes, h, w) = (1 + trial % 5, 1 + trial % 7, 2 + trial % 3, 1 + trial % 3, 2);
            let (fc1, fc2) = head(c, hidden, classes, &mut rng);
            let a = Tensor::from_fn([1, c, h, w], |_| rng.random_range(0.0..2.0));
            let class = trial % classes;
            let hw = h * w;
            let base: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
            let pooled: Vec<f64> = (0..c).map(|k| base[k * hw..(k + 1) * hw].iter().sum::<f64>() / hw as f64).collect();
            let near_kink = (0..hidden).any(|j| {
                let z = fc1.bias[j] as f64 + fc1.row(j).iter().zip(&pooled).map(|(&wk, &p)| wk as f64 * p).sum::<f64>();
                z.abs() < 1e-4
            });
            if near_kink {
                continue;
            }
            let g = head_gradient(HeadView { hidden: &fc1, output: &fc2 }, &a, class).unwrap();
            let step = 1e-3;
            for i in 0..base.len() {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[i] += step;
                minus[i] -= step;
                let fd = (logit(&fc1, &fc2, &plus, c, hw, class) - logit(&fc1, &fc2, &minus, c, hw, class)) / (2.0 * step);
                let an = g.data()[i] as f64;
                assert!((an - fd).abs() <= 1e-3 * fd.abs().max(1e-3), "trial {trial}: {an} vs {fd}");
            }
            checked += 1;
        }
        assert!(checked >= 50, "only {checked} heads checked");
    }

    #[test]
    fn hand_built_two_channel_map() {
        let a = Tensor::new([1, 2, 2, 2], vec![3.0, 1.0, 0.0, 2.0, 1.0, 2.0, 0.5, 2.0]).unwrap();
        let (raw, norm) = cam_from_activations(&a, &[1.0, -1.0]).unwrap();
        assert_eq!(raw, vec![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(norm, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_map_normalises_to_zero() {
        assert_eq!(normalize_map(&[0.3; 5]), vec![0.0; 5]);
        assert_eq!(normalize_map(&[0.0; 5]), vec![0.0; 5]);
    }

    fn test_input(size: usize) -> Tensor {
        Tensor::from_fn([1, 3, size, size], |[_, c, y, x]| ((x * 7 + y * 3 + c * 11) % 17) as f32 / 8.0 - 1.0)
    }

    #[test]
    fn zero_head_gives_zero_map() {
        let mut model = build_model(&ModelConfig::small(), 4).unwrap();
        let (fc1, fc2) = model.head_mut();
        fc1.weight.fill(0.0);
        fc2.weight.fill(0.0);
        let cam = gradcam_map(&model, &test_input(32), Some(3)).unwrap();
        assert!(cam.raw_map.iter().all(|&v| v == 0.0));
        assert!(cam.normalized_map.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positive_scaling_invariance() {
        let cfg = ModelConfig::small();
        let model = build_model(&cfg, 8).unwrap();
        let input = test_input(32);
        let (class, a) = (0..NUM_CLASSES)
            .map(|c| (c, gradcam_map(&model, &input, Some(c)).unwrap()))
            .find(|(_, cam)| cam.raw_map.iter().any(|&v| v > 0.0))
            .expect("some class has a non-empty map");
        let mut scaled = model.clone();
        let (_, fc2) = scaled.head_mut();
        let n = fc2.in_features;
        for v in &mut fc2.weight[class * n..(class + 1) * n] {
            *v *= 2.0;
        }
        let b = gradcam_map(&scaled, &input, Some(class)).unwrap();
        for (x, y) in a.raw_map.iter().zip(&b.raw_map) {
            assert!((2.0 * x - y).abs() <= 1e-6 * y.abs().max(1.0));
        }
        assert_eq!(a.normalized_map, b.normalized_map);
        assert_eq!(argmax(&a.raw_map), argmax(&b.raw_map));
        assert!(a.raw_map.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn overlay_colours() {
        let base = RgbaImage::from_pixel(224, 224, Rgba([100, 100, 100, 255]));
        let cold = overlay(&vec![0.0; 224 * 224], &base);
        let first = *cold.get_pixel(0, 0);
        assert!(cold.pixels().all(|p| *p == first));
        assert!(first[2] > first[0]);

        let mut map = vec![0.0; 224 * 224];
        map[224 * 10 + 20] = 1.0;
        let hot = overlay(&map, &base);
        let peak = *hot.get_pixel(20, 10);
        assert_ne!(peak, first);
        assert!(peak[0] > peak[2]);
        assert_eq!(hot.pixels().filter(|p| **p == peak).count(), 1);
        assert_eq!(encode_png(&hot), encode_png(&overlay(&map, &base)));
    }

    #[test]
    fn default_target_is_argmax_and_png_decodes() {
        let model = build_model(&ModelConfig::small(), 2).unwrap();
        let cam = gradcam_map(&model, &test_input(32), None).unwrap();
        assert_eq!(cam.target_class, argmax(&cam.logits));
        let png = cam.overlay_png();
        let decoded = image::load_from_memory(&png).unwrap();
        assert_eq!((decoded.width(), decoded.height()), (224, 224));
        assert!(cam.normalized_map.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
