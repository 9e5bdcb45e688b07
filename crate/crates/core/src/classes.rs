//! The 17-class roster in canonical (report) order.

pub const NUM_CLASSES: usize = 17;

pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "Banded Chlorosis",
    "Brown Rust",
    "Brown Spot",
    "Dried Leaves",
    "Eye Spot",
    "Grassy Shoot",
    "Healthy",
    "Mosaic",
    "Pokkah Boeng",
    "Red Rot",
    "Red Leaf Spot",
    "Ring Spot",
    "Rust",
    "Sett Rot",
    "Smut",
    "Viral Disease",
    "Yellow Leaf",
];

/// Looks up a class by name, ignoring case, spaces, `_` and `-`
/// (so `RedRot`, `red_rot` and `Red Rot` all resolve), or by numeric index.
pub fn class_index(name: &str) -> Option<usize> {
    let key = squash(name);
    if let Some(i) = CLASS_NAMES.iter().position(|c| squash(c) == key) {
        return Some(i);
    }
    name.trim().parse::<usize>().ok().filter(|&i| i < NUM_CLASSES)
}

fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}
