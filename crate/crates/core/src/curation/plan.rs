use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusEntry, Role};
use crate::classes::CLASS_NAMES;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Extra augmented copies per training image, chosen from the class's
/// original (post-dedup) size.
pub fn augmentation_factor(original: usize) -> usize {
    match original {
        0..=99 => 6,
        100..=199 => 4,
        200..=249 => 3,
        250..=399 => 2,
        400..=499 => 1,
        _ => 0,
    }
}

/// `(⌊fraction·n⌋, n − train)`.
pub fn split_counts(n: usize, train_fraction: f64) -> (usize, usize) {
    assert!((0.0..=1.0).contains(&train_fraction), "train fraction must lie in [0, 1]");
    let train = ((n as f64) * train_fraction + 1e-9).floor() as usize;
    let train = train.min(n);
    (train, n - train)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPlan {
    pub class: String,
    pub original: usize,
    pub train: usize,
    pub test: usize,
    pub factor: usize,
    pub final_train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationPlan {
    pub train_fraction: f64,
    pub classes: Vec<ClassPlan>,
}

impl CurationPlan {
    /// Split only: every factor is zero and final equals train.
    pub fn skeleton(counts: &[(String, usize)], train_fraction: f64) -> Self {
        let classes = counts
            .iter()
            .map(|(class, n)| {
                let (train, test) = split_counts(*n, train_fraction);
                ClassPlan {
                    class: class.clone(),
                    original: *n,
                    train,
                    test,
                    factor: 0,
                    final_train: train,
                }
            })
            .collect();
        Self { train_fraction, classes }
    }

    /// Fills factors from the tier table; `final = train·(1+factor)`.
    pub fn with_augmentation(mut self) -> Self {
        for c in &mut self.classes {
            c.factor = augmentation_factor(c.original);
            c.final_train = c.train * (1 + c.factor);
        }
        self
    }

    pub fn get(&self, class: &str) -> Option<&ClassPlan> {
        self.classes.iter().find(|c| c.class == class)
    }

    pub fn total_original(&self) -> usize {
        self.classes.iter().map(|c| c.original).sum()
    }

    pub fn total_train(&self) -> usize {
        self.classes.iter().map(|c| c.train).sum()
    }

    pub fn total_test(&self) -> usize {
        self.classes.iter().map(|c| c.test).sum()
    }

    pub fn total_final(&self) -> usize {
        self.classes.iter().map(|c| c.final_train).sum()
    }

    /// Newly generated images.
    pub fn total_generated(&self) -> usize {
        self.classes.iter().map(|c| c.train * c.factor).sum()
    }

    /// Largest over smallest original class count.
    pub fn original_imbalance(&self) -> f64 {
        ratio(self.classes.iter().map(|c| c.original))
    }

    /// Largest over smallest final training count.
    pub fn final_imbalance(&self) -> f64 {
        ratio(self.classes.iter().map(|c| c.final_train))
    }
}

fn ratio(values: impl Iterator<Item = usize> + Clone) -> f64 {
    let max = values.clone().max().unwrap_or(0);
    let min = values.min().unwrap_or(0);
    if min == 0 {
        f64::INFINITY
    } else {
        max as f64 / min as f64
    }
}

/// Split and augmentation plan for per-class original counts at an 80/20 split.
pub fn augmentation_plan(counts: &[(String, usize)]) -> CurationPlan {
    CurationPlan::skeleton(counts, DEFAULT_TRAIN_FRACTION).with_augmentation()
}

/// Marks each entry `Train` or `Test`, class by class, by a seeded shuffle.
/// Returns the split skeleton in class-index order.
pub fn stratified_split(entries: &mut [CorpusEntry], train_fraction: f64, seed: u64) -> CurationPlan {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].path.cmp(&entries[b].path));
    for i in order {
        by_class.entry(entries[i].class).or_default().push(i);
    }
    let mut counts = Vec::new();
    for (class, mut idx) in by_class {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        idx.shuffle(&mut rng);
        let (train, _) = split_counts(idx.len(), train_fraction);
        for (k, &i) in idx.iter().enumerate() {
            entries[i].role = if k < train { Role::Train } else { Role::Test };
        }
        counts.push((CLASS_NAMES[class].to_string(), idx.len()));
    }
    CurationPlan::skeleton(&counts, train_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_examples() {
        assert_eq!(split_counts(75, 0.8), (60, 15));
        assert_eq!(split_counts(1131, 0.8), (904, 227));
        assert_eq!(split_counts(10, 0.8), (8, 2));
        assert_eq!(split_counts(1, 0.8), (0, 1));
    }

    #[test]
    fn tier_boundaries() {
        let cases = [(0, 6), (99, 6), (100, 4), (199, 4), (200, 3), (249, 3), (250, 2), (399, 2), (400, 1), (499, 1), (500, 0), (5000, 0)];
        for (n, f) in cases {
            assert_eq!(augmentation_factor(n), f, "n={n}");
        }
    }

    #[test]
    fn smallest_class_row() {
        let plan = augmentation_plan(&[("Red Leaf Spot".into(), 43)]);
        let row = &plan.classes[0];
        assert_eq!((row.train, row.test, row.factor, row.final_train), (34, 9, 6, 238));
    }

    fn entry(path: String, class: usize) -> CorpusEntry {
        CorpusEntry {
            path: path.into(),
            class,
            digest: [0; 16],
            hash: 0,
            role: Role::Unassigned,
        }
    }

    proptest! {
        #[test]
        fn split_is_stratified_and_seeded(sizes in prop::collection::vec(1usize..40, 1..6), seed in any::<u64>()) {
            let mut entries = Vec::new();
            for (class, &n) in sizes.iter().enumerate() {
                for i in 0..n {
                    entries.push(entry(format!("c{class}/{i:03}.jpg"), class));
                }
            }
            let mut again = entries.clone();
            let plan = stratified_split(&mut entries, 0.8, seed);
            stratified_split(&mut again, 0.8, seed);
            prop_assert_eq!(&entries, &again);
            for (class, &n) in sizes.iter().enumerate() {
                let train = entries.iter().filter(|e| e.class == class && e.role == Role::Train).count();
                let test = entries.iter().filter(|e| e.class == class && e.role == Role::Test).count();
                prop_assert_eq!(train, n * 4 / 5);
                prop_assert_eq!(train + test, n);
                prop_assert_eq!(plan.classes[class].train, train);
            }
        }
    }
}
