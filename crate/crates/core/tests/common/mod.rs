#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};

use cane_core::curation::image_with_dhash;

pub const BASE_HASH: u64 = 0x0123_4567_89ab_cdef;

/// Flips `n` bits of `bits`, spaced seven apart.
pub fn flip(bits: u64, n: u32) -> u64 {
    (0..n).fold(bits, |b, i| b ^ (1 << (i * 7)))
}

/// Writes the five-file dedup corpus under `root/<class>/`: `f2` is a byte copy
/// of `f1`, `f3` sits at Hamming 4 from it, `f4` at 6 and `f5` is the complement.
pub fn write_dedup_fixture(root: &Path, class: &str) -> Vec<PathBuf> {
    let dir = root.join(class);
    std::fs::create_dir_all(&dir).unwrap();
    let hashes = [BASE_HASH, BASE_HASH, flip(BASE_HASH, 4), flip(BASE_HASH, 6), !BASE_HASH];
    let mut paths = Vec::new();
    for (i, h) in hashes.iter().enumerate() {
        let path = dir.join(format!("f{}.png", i + 1));
        if i == 1 {
            std::fs::copy(&paths[0], &path).unwrap();
        } else {
            image_with_dhash(*h).save(&path).unwrap();
        }
        paths.push(path);
    }
    paths
}

/// Reference split: `(class, original, train, factor, final train)` per class.
pub const TABLE_COUNTS: [(&str, usize, usize, usize, usize); 17] = [
    ("Eye Spot", 75, 60, 6, 420),
    ("Red Leaf Spot", 43, 34, 6, 238),
    ("Ring Spot", 83, 66, 6, 462),
    ("Brown Rust", 163, 130, 4, 650),
    ("Dried Leaves", 185, 148, 4, 740),
    ("Smut", 149, 119, 4, 595),
    ("Banded Chlorosis", 293, 234, 2, 702),
    ("Grassy Shoot", 286, 228, 2, 684),
    ("Mosaic", 376, 300, 2, 900),
    ("Pokkah Boeng", 227, 181, 3, 724),
    ("Rust", 443, 354, 1, 708),
    ("Sett Rot", 478, 382, 1, 764),
    ("Viral Disease", 425, 340, 1, 680),
    ("Brown Spot", 1019, 815, 0, 815),
    ("Healthy", 930, 744, 0, 744),
    ("Red Rot", 731, 584, 0, 584),
    ("Yellow Leaf", 1131, 904, 0, 904),
];
