//! Direct f64 loop implementations of the kernels, and a random-shape sweep
//! comparing them against the engine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cane_core::tensor::{channel_shuffle, conv2d, global_avg_pool, linear, max_pool2d, PoolSpec};
use cane_core::{ConvSpec, Tensor};

pub const KERNEL_REL_TOL: f64 = 1e-5;

/// `|a − b| / max(|b|, 1)`.
pub fn rel_err(a: f32, b: f64) -> f64 {
    (f64::from(a) - b).abs() / b.abs().max(1.0)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0f32..1.0))
}

pub fn conv_oracle(x: &Tensor, wt: &Tensor, s: &ConvSpec) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, w] = x.shape();
    let (kh, kw) = s.kernel;
    let oh = (h + 2 * s.padding.0 - kh) / s.stride.0 + 1;
    let ow = (w + 2 * s.padding.1 - kw) / s.stride.1 + 1;
    let cin_g = c / s.groups;
    let cout_g = s.out_channels / s.groups;
    let mut out = Vec::with_capacity(n * s.out_channels * oh * ow);
    for b in 0..n {
        for o in 0..s.out_channels {
            let g = o / cout_g;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0f64;
                    for ci in 0..cin_g {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y * s.stride.0 + ky) as isize - s.padding.0 as isize;
                                let ix = (xx * s.stride.1 + kx) as isize - s.padding.1 as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let v = x.at(b, g * cin_g + ci, iy as usize, ix as usize);
                                acc += f64::from(v) * f64::from(wt.at(o, ci, ky, kx));
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    (out, [n, s.out_channels, oh, ow])
}

pub fn maxpool_oracle(x: &Tensor, p: PoolSpec) -> Vec<f64> {
    let [n, c, h, w] = x.shape();
    let oh = (h + 2 * p.padding - p.kernel) / p.stride + 1;
    let ow = (w + 2 * p.padding - p.kernel) / p.stride + 1;
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for ky in 0..p.kernel {
                        for kx in 0..p.kernel {
                            let iy = (y * p.stride + ky) as isize - p.padding as isize;
                            let ix = (xx * p.stride + kx) as isize - p.padding as isize;
                            if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                                best = best.max(f64::from(x.at(b, ch, iy as usize, ix as usize)));
                            }
                        }
                    }
                    out.push(best);
                }
            }
        }
    }
    out
}

pub fn gap_oracle(x: &Tensor) -> Vec<f64> {
    let [n, c, h, w] = x.shape();
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            let s: f64 = x.plane(b, ch).iter().map(|&v| f64::from(v)).sum();
            out.push(s / (h * w) as f64);
        }
    }
    out
}

pub fn linear_oracle(x: &Tensor, wt: &[f32], out_features: usize, bias: &[f32]) -> Vec<f64> {
    let f = x.channels() * x.height() * x.width();
    let mut out = Vec::new();
    for b in 0..x.batch() {
        let row = &x.data()[b * f..(b + 1) * f];
        for o in 0..out_features {
            let dot: f64 = row.iter().zip(&wt[o * f..(o + 1) * f]).map(|(&a, &w)| f64::from(a) * f64::from(w)).sum();
            out.push(dot + f64::from(bias[o]));
        }
    }
    out
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SweepStats {
    pub conv_cases: usize,
    pub grouped_cases: usize,
    pub depthwise_cases: usize,
    pub pool_cases: usize,
    pub gap_cases: usize,
    pub linear_cases: usize,
    pub max_rel_err: f64,
}

fn check(stats: &mut SweepStats, what: &str, got: &[f32], want: &[f64]) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{what}: {} outputs, oracle has {}", got.len(), want.len()));
    }
    for (i, (&a, &b)) in got.iter().zip(want).enumerate() {
        let e = rel_err(a, b);
        stats.max_rel_err = stats.max_rel_err.max(e);
        if e > KERNEL_REL_TOL {
            return Err(format!("{what}: element {i} engine {a} oracle {b} rel err {e:.3e}"));
        }
    }
    Ok(())
}

/// Runs `cases` random shapes through every kernel.
pub fn kernel_sweep(cases: usize, seed: u64) -> Result<SweepStats, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = SweepStats::default();
    for case in 0..cases {
        let n = rng.random_range(1..=2);
        let h = rng.random_range(1..=9);
        let w = rng.random_range(1..=9);
        let kind = case % 3;
        let groups = match kind {
            0 => 1,
            1 => rng.random_range(2..=4),
            _ => 0,
        };
        let (c, out_c, groups) = if groups == 0 {
            let c = rng.random_range(1..=8);
            (c, c, c)
        } else {
            let cin_g = rng.random_range(1..=4);
            let cout_g = rng.random_range(1..=4);
            (cin_g * groups, cout_g * groups, groups)
        };
        let k = rng.random_range(1..=3usize).min(h + 2).min(w + 2);
        let pad = rng.random_range(0..k.max(1));
        let stride = rng.random_range(1..=2);
        let (kh, kw) = (k.min(h + 2 * pad), k.min(w + 2 * pad));
        let spec = ConvSpec {
            in_channels: c,
            out_channels: out_c,
            kernel: (kh, kw),
            stride: (stride, stride),
            padding: (pad, pad),
            groups,
        };
        let x = random_tensor(&mut rng, [n, c, h, w]);
        let wt = random_tensor(&mut rng, spec.weight_shape());
        let got = conv2d(&x, &wt, &spec).map_err(|e| format!("conv {spec:?}: {e}"))?;
        let (want, shape) = conv_oracle(&x, &wt, &spec);
        if got.shape() != shape {
            return Err(format!("conv {spec:?}: shape {:?} vs {shape:?}", got.shape()));
        }
        check(&mut stats, &format!("conv {spec:?}"), got.data(), &want)?;
        stats.conv_cases += 1;
        match kind {
            1 => stats.grouped_cases += 1,
            2 => stats.depthwise_cases += 1,
            _ => {}
        }

        let pk = rng.random_range(1..=3usize).min(h).min(w).max(1);
        let pool = PoolSpec {
            kernel: pk,
            stride: rng.random_range(1..=2),
            padding: rng.random_range(0..pk),
        };
        let got = max_pool2d(&x, pool).map_err(|e| format!("maxpool {pool:?}: {e}"))?;
        check(&mut stats, &format!("maxpool {pool:?}"), got.data(), &maxpool_oracle(&x, pool))?;
        stats.pool_cases += 1;

        let got = global_avg_pool(&x).map_err(|e| e.to_string())?;
        check(&mut stats, "gap", got.data(), &gap_oracle(&x))?;
        stats.gap_cases += 1;

        let of = rng.random_range(1..=12);
        let lw: Vec<f32> = (0..of * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lb: Vec<f32> = (0..of).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = linear(&x, &lw, of, &lb).map_err(|e| e.to_string())?;
        check(&mut stats, "linear", got.data(), &linear_oracle(&x, &lw, of, &lb))?;
        stats.linear_cases += 1;
    }
    Ok(stats)
}

/// `shuffle(shuffle(x, g), C/g) == x` for every `C ≤ max_c` and every divisor `g`.
pub fn shuffle_identity_sweep(max_c: usize) -> Result<usize, String> {
    let mut checked = 0;
    for c in 1..=max_c {
        let x = Tensor::from_fn([1, c, 2, 1], |[_, ch, h, _]| (ch * 2 + h) as f32);
        for g in (1..=c).filter(|g| c % g == 0) {
            let y = channel_shuffle(&x, g).map_err(|e| e.to_string())?;
            let back = channel_shuffle(&y, c / g).map_err(|e| e.to_string())?;
            if back != x {
                return Err(format!("C={c} g={g}: composition is not the identity"));
            }
            for gi in 0..g {
                for k in 0..c / g {
                    if y.plane(0, k * g + gi) != x.plane(0, gi * (c / g) + k) {
                        return Err(format!("C={c} g={g}: channel {} misplaced", gi * (c / g) + k));
                    }
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}
