use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::space::{Assignment, DimKind, Dimension, ParamValue, SearchSpace};
use super::study::{TrialRecord, TrialState};
use super::{HpoError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    /// Fraction of completed trials treated as "good".
    pub gamma: f64,
    /// Uniform random trials before the density model kicks in.
    pub n_startup: usize,
    /// Draws from the good density per suggestion.
    pub n_candidates: usize,
    /// Minimum kernel width as a fraction of the (possibly log) range.
    pub bandwidth_floor: f64,
    pub seed: u64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 10,
            n_candidates: 24,
            bandwidth_floor: 1e-3,
            seed: 0,
        }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(HpoError::Config(format!("gamma {} must lie in (0, 1)", self.gamma)));
        }
        if self.n_startup == 0 || self.n_candidates == 0 {
            return Err(HpoError::Config("n_startup and n_candidates must be positive".into()));
        }
        Ok(())
    }

    /// `⌈gamma·n⌉`, at least one.
    pub fn n_good(&self, n: usize) -> usize {
        ((self.gamma * n as f64).ceil() as usize).clamp(1, n.max(1))
    }
}

/// Internal coordinates: log for log-scaled floats.
fn to_internal(log: bool, v: f64) -> f64 {
    if log {
        v.ln()
    } else {
        v
    }
}

fn from_internal(log: bool, low: f64, high: f64, x: f64) -> f64 {
    let v = if log { x.exp() } else { x };
    v.clamp(low, high)
}

/// Mixture of Gaussians truncated to `[a, b]`, equally weighted.
struct Parzen {
    a: f64,
    b: f64,
    kernels: Vec<(Normal, f64)>,
}

impl Parzen {
    fn fit(points: &[f64], a: f64, b: f64, floor: f64) -> Self {
        let range = b - a;
        let n = points.len();
        let sigma = if n == 0 {
            range
        } else {
            let mean = points.iter().sum::<f64>() / n as f64;
            let var = points.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n as f64;
            let scott = var.sqrt() * (n as f64).powf(-0.2);
            scott.clamp(floor * range, range)
        };
        let kernels = points
            .iter()
            .map(|&mu| {
                let normal = Normal::new(mu, sigma).expect("positive bandwidth");
                let mass = normal.cdf(b) - normal.cdf(a);
                (normal, mass)
            })
            .collect();
        Self { a, b, kernels }
    }

    fn pdf(&self, x: f64) -> f64 {
        if self.kernels.is_empty() {
            return 1.0 / (self.b - self.a);
        }
        let sum: f64 = self
            .kernels
            .iter()
            .map(|(k, mass)| if *mass > 0.0 { k.pdf(x) / mass } else { 0.0 })
            .sum();
        sum / self.kernels.len() as f64
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.kernels.is_empty() {
            return rng.random_range(self.a..=self.b);
        }
        let (k, _) = &self.kernels[rng.random_range(0..self.kernels.len())];
        let (lo, hi) = (k.cdf(self.a), k.cdf(self.b));
        let u: f64 = rng.random();
        if hi - lo < 1e-12 {
            return k.inverse_cdf(0.5).clamp(self.a, self.b);
        }
        k.inverse_cdf(lo + u * (hi - lo)).clamp(self.a, self.b)
    }
}

/// Smoothed frequency table: `(count + 1) / (n + K)`.
fn categorical_probs(values: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![1.0; k];
    for &v in values {
        counts[v] += 1.0;
    }
    let total = (values.len() + k) as f64;
    counts.iter().map(|c| c / total).collect()
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn uniform_draw(dim: &Dimension, rng: &mut ChaCha8Rng) -> ParamValue {
    match &dim.kind {
        DimKind::Float { low, high, log } => {
            let (a, b) = (to_internal(*log, *low), to_internal(*log, *high));
            ParamValue::Float(from_internal(*log, *low, *high, rng.random_range(a..=b)))
        }
        DimKind::Categorical { choices } => ParamValue::Choice(choices[rng.random_range(0..choices.len())].clone()),
    }
}

/// Next assignment to evaluate.
///
/// With fewer than `n_startup` completed trials this is a seeded uniform draw
/// (log-uniform for log dimensions). Afterwards the completed trials are split
/// into the best `⌈gamma·N⌉` and the rest, per-dimension densities `l` and `g`
/// are fitted to each, `n_candidates` points are drawn from `l`, and the one
/// maximising `Π l/g` is returned. Only the rank order of objectives matters,
/// and the random stream is keyed on `(seed, history length)`.
pub fn suggest(history: &[TrialRecord], space: &SearchSpace, config: &TpeConfig) -> Result<Assignment> {
    space.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (history.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut completed: Vec<(usize, &TrialRecord)> = history
        .iter()
        .filter(|t| t.state == TrialState::Completed && t.objective.is_finite())
        .enumerate()
        .collect();

    if completed.len() < config.n_startup {
        return Ok(space.dims.iter().map(|d| (d.name.clone(), uniform_draw(d, &mut rng))).collect());
    }

    completed.sort_by(|(ia, a), (ib, b)| a.objective.total_cmp(&b.objective).then(ia.cmp(ib)));
    let n_good = config.n_good(completed.len());
    let (good, bad) = completed.split_at(n_good);

    let mut candidates: Vec<Assignment> = vec![Assignment::new(); config.n_candidates];
    let mut scores = vec![0f64; config.n_candidates];
    for dim in &space.dims {
        match &dim.kind {
            DimKind::Float { low, high, log } => {
                let (a, b) = (to_internal(*log, *low), to_internal(*log, *high));
                let pick = |set: &[(usize, &TrialRecord)]| -> Vec<f64> {
                    set.iter()
                        .filter_map(|(_, t)| t.assignment.get(&dim.name).and_then(ParamValue::as_f64))
                        .map(|v| to_internal(*log, v).clamp(a, b))
                        .collect()
                };
                let l = Parzen::fit(&pick(good), a, b, config.bandwidth_floor);
                let g = Parzen::fit(&pick(bad), a, b, config.bandwidth_floor);
                for (cand, score) in candidates.iter_mut().zip(scores.iter_mut()) {
                    let x = l.sample(&mut rng);
                    *score += l.pdf(x).max(f64::MIN_POSITIVE).ln() - g.pdf(x).max(f64::MIN_POSITIVE).ln();
                    cand.insert(dim.name.clone(), ParamValue::Float(from_internal(*log, *low, *high, x)));
                }
            }
            DimKind::Categorical { choices } => {
                let pick = |set: &[(usize, &TrialRecord)]| -> Vec<usize> {
                    set.iter()
                        .filter_map(|(_, t)| t.assignment.get(&dim.name).and_then(ParamValue::as_str))
                        .filter_map(|c| choices.iter().position(|x| x == c))
                        .collect()
                };
                let l = categorical_probs(&pick(good), choices.len());
                let g = categorical_probs(&pick(bad), choices.len());
                for (cand, score) in candidates.iter_mut().zip(scores.iter_mut()) {
                    let i = sample_index(&l, &mut rng);
                    *score += l[i].ln() - g[i].ln();
                    cand.insert(dim.name.clone(), ParamValue::Choice(choices[i].clone()));
                }
            }
        }
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(candidates.swap_remove(best))
}
