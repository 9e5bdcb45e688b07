//! Local three-section advice for every class.

use serde::{Deserialize, Serialize};

use cane_core::{class_index, CLASS_NAMES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sections {
    pub cause: String,
    pub immediate_steps: String,
    pub long_term_control: String,
}

impl Sections {
    pub fn is_complete(&self) -> bool {
        [&self.cause, &self.immediate_steps, &self.long_term_control]
            .iter()
            .all(|s| !s.trim().is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Local,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub disease: String,
    pub sections: Sections,
    pub source: Source,
}

// (class, cause, immediate steps, long-term control), in canonical class order.
const ENTRIES: [(&str, &str, &str, &str); 17] = [
    (
        "Banded Chlorosis",
        "A physiological disorder rather than an infection. Cold nights while the spindle leaves are unfolding damage chlorophyll and leave pale transverse bands across the blade.",
        "No fungicide is needed. Confirm the bands run across the leaf and are not spreading, keep the crop well watered and avoid extra nitrogen stress until temperatures rise.",
        "Prefer varieties with good cold tolerance and schedule planting so that early leaf growth avoids the coldest weeks.",
    ),
    (
        "Brown Rust",
        "The rust fungus Puccinia melanocephala. Wind carries its spores between leaves and fields; cool humid weather favours outbreaks.",
        "Strip and destroy the worst affected leaves and apply a recommended triazole or strobilurin fungicide if pustules keep spreading to young leaves.",
        "Plant rust-resistant varieties, avoid heavy nitrogen doses and scout fields weekly during humid periods.",
    ),
    (
        "Brown Spot",
        "The fungus Cercospora longipes, favoured by warm wet weather and dense canopies.",
        "Remove heavily spotted leaves and spray a protectant fungicide such as mancozeb or copper oxychloride when spots cover much of the leaf.",
        "Grow tolerant varieties, keep fertiliser balanced (especially potassium) and clear crop debris after harvest.",
    ),
    (
        "Dried Leaves",
        "Usually water stress, nutrient shortage or natural ageing of lower leaves rather than a single pathogen.",
        "Check soil moisture and irrigate if dry, remove dead trash that harbours pests, and inspect stalks for signs of rot before assuming drought.",
        "Plan irrigation around dry spells, mulch with trash to hold moisture and keep potassium and nitrogen supply balanced.",
    ),
    (
        "Eye Spot",
        "The fungus Bipolaris sacchari (formerly Helminthosporium sacchari). Spores spread by wind and rain and infect through young leaves in cool damp weather.",
        "Remove and burn infected leaves, hold back nitrogen top dressing and apply a recommended fungicide on susceptible varieties.",
        "Most varieties resist eye spot; replace susceptible cultivars and avoid planting them in low, humid fields.",
    ),
    (
        "Grassy Shoot",
        "A phytoplasma carried in infected seed cane and spread by sap-feeding insects such as leafhoppers.",
        "Uproot and destroy clumps with grassy tillers as soon as they appear and control insect vectors around the field.",
        "Plant only certified disease-free setts, treat seed cane with moist hot air or hot water before planting and do not ratoon infected fields.",
    ),
    (
        "Healthy",
        "No disease symptoms were detected on this leaf.",
        "No treatment is needed. Keep scouting the field regularly and photograph any new spots or discoloration for another check.",
        "Maintain clean planting material, balanced fertiliser and good drainage to keep the crop healthy.",
    ),
    (
        "Mosaic",
        "Sugarcane mosaic virus, spread by aphids and by planting infected setts.",
        "Rogue out plants showing the mosaic pattern and control aphid populations near the crop.",
        "Use resistant varieties and virus-free seed cane, and keep grassy weeds that host the virus away from fields.",
    ),
    (
        "Pokkah Boeng",
        "Fungi of the Fusarium fujikuroi complex. Airborne spores infect the spindle during hot humid weather and rapid growth.",
        "Spray carbendazim or copper oxychloride on affected stools and cut out malformed tops where knife-cut symptoms appear.",
        "Grow resistant varieties, avoid excess nitrogen during the monsoon growth flush and remove infected plant material after harvest.",
    ),
    (
        "Red Rot",
        "The fungus Colletotrichum falcatum. It spreads mainly through infected planting material and soil, and also through irrigation water, rain and wind.",
        "Uproot and burn infected clumps, stop irrigation water from flowing from infected to healthy plots and do not ratoon the affected field.",
        "Plant resistant varieties, use healthy setts treated with fungicide or hot water, rotate crops and keep fields well drained.",
    ),
    (
        "Red Leaf Spot",
        "The fungus Dimeriella sacchari. Severe outbreaks follow warm humid weather and stunt growth and lower juice sucrose.",
        "Remove badly spotted leaves, especially near the tips, and apply a recommended leaf-spot fungicide when spots begin to merge.",
        "Grow tolerant varieties, avoid dense planting that keeps leaves wet and monitor fields closely after rainy spells.",
    ),
    (
        "Ring Spot",
        "The fungus Leptosphaeria sacchari. Its spores travel by wind and rain and mostly attack older leaves.",
        "Remove older infected leaves and apply fungicide only where lesions spread onto young leaves.",
        "Practise field sanitation, destroy crop residue after harvest and choose tolerant varieties where the disease recurs.",
    ),
    (
        "Rust",
        "Rust fungi of the genus Puccinia, whose orange to brown pustules release wind-borne spores.",
        "Remove the most infected leaves and apply a recommended triazole or strobilurin fungicide if pustules appear on young leaves.",
        "Plant resistant varieties, avoid excess nitrogen and scout regularly in cool humid seasons.",
    ),
    (
        "Sett Rot",
        "The fungus Ceratocystis paradoxa (pineapple disease), which enters through the cut ends of setts in cold, wet or poorly drained soil.",
        "Fill gaps with fresh treated setts and improve drainage in waterlogged patches.",
        "Dip setts in a recommended fungicide before planting, plant when soil is warm and avoid planting too deep in heavy wet soil.",
    ),
    (
        "Smut",
        "The fungus Sporisorium scitamineum. The black whip that emerges from the shoot releases spores carried by wind to neighbouring plants.",
        "Bag each whip and cut it out before it bursts, then destroy it together with the affected clump.",
        "Plant resistant varieties, treat setts with hot water and limit the number of ratoon crops.",
    ),
    (
        "Viral Disease",
        "Virus infections such as streak or yellow leaf viruses, spread by insect vectors and infected seed cane.",
        "Rogue out plants with clear viral symptoms and control aphids and leafhoppers around the crop.",
        "Use virus-free seed cane from tissue culture and grow tolerant varieties.",
    ),
    (
        "Yellow Leaf",
        "Sugarcane yellow leaf virus, spread by the sugarcane aphid Melanaphis sacchari and by infected setts.",
        "Control aphids and remove plants whose midribs are turning bright yellow.",
        "Plant virus-free seed cane produced by tissue culture and choose tolerant varieties.",
    ),
];

/// Three-section advice for `disease` (any spelling accepted by `class_index`).
pub fn lookup(disease: &str) -> Option<Recommendation> {
    let idx = class_index(disease)?;
    let (name, cause, now, later) = ENTRIES[idx];
    debug_assert_eq!(name, CLASS_NAMES[idx]);
    Some(Recommendation {
        disease: name.to_string(),
        sections: Sections {
            cause: cause.to_string(),
            immediate_steps: now.to_string(),
            long_term_control: later.to_string(),
        },
        source: Source::Local,
    })
}
