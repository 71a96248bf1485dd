//! Annotation schema, attachment construction, and the proposal
//! labeling/sampling protocol used by every trainer.
//!
//! The JSON schema mirrors COCO's images/annotations/categories layout but
//! stores masks as explicit point lists, so desk-scale oracles stay trivial.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{directed_hausdorff, iou, BinaryMask, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryDef {
    pub id: u32,
    pub name: String,
    pub supercategory: String,
    pub is_person: bool,
    pub is_addon: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    /// [x, y, w, h]
    pub bbox: [f64; 4],
    /// Explicit pixel coordinates; may be empty when no segmentation exists.
    #[serde(default)]
    pub mask: Vec<[i64; 2]>,
    #[serde(default)]
    pub ignore: bool,
}

impl Annotation {
    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])
    }

    pub fn binary_mask(&self, bounds: (u32, u32)) -> BinaryMask {
        BinaryMask::new(self.mask.iter().map(|p| (p[0], p[1])).collect(), bounds)
    }
}

/// A validated set of images, categories, and annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSet {
    pub images: Vec<ImageInfo>,
    pub categories: Vec<CategoryDef>,
    pub annotations: Vec<Annotation>,
}

impl SceneSet {
    pub fn validate(&self) -> Result<()> {
        let mut image_dims: HashMap<u64, (u32, u32)> = HashMap::new();
        for (i, img) in self.images.iter().enumerate() {
            let path = format!("images[{}]", i);
            if img.width == 0 || img.height == 0 {
                return Err(Error::schema(path, "zero image dimension"));
            }
            if image_dims.insert(img.id, (img.width, img.height)).is_some() {
                return Err(Error::schema(path, format!("duplicate image id {}", img.id)));
            }
        }
        let mut cat_ids = BTreeSet::new();
        let mut person_count = 0usize;
        for (i, c) in self.categories.iter().enumerate() {
            let path = format!("categories[{}]", i);
            if !cat_ids.insert(c.id) {
                return Err(Error::schema(path, format!("duplicate category id {}", c.id)));
            }
            if c.is_person {
                person_count += 1;
            }
        }
        if person_count != 1 {
            return Err(Error::schema(
                "categories",
                format!("expected exactly one person category, found {}", person_count),
            ));
        }
        let mut ann_ids = BTreeSet::new();
        for (i, a) in self.annotations.iter().enumerate() {
            let path = format!("annotations[{}]", i);
            if !ann_ids.insert(a.id) {
                return Err(Error::schema(path, format!("duplicate annotation id {}", a.id)));
            }
            let (w_img, h_img) = *image_dims
                .get(&a.image_id)
                .ok_or_else(|| Error::schema(format!("{}.image_id", path), "unknown image"))?;
            if !cat_ids.contains(&a.category_id) {
                return Err(Error::schema(format!("{}.category_id", path), "unknown category"));
            }
            let [x, y, w, h] = a.bbox;
            let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
            if !finite || w <= 0.0 || h <= 0.0 {
                return Err(Error::schema(format!("{}.bbox", path), "degenerate box"));
            }
            if x < 0.0 || y < 0.0 || x + w > w_img as f64 || y + h > h_img as f64 {
                return Err(Error::schema(format!("{}.bbox", path), "box outside image"));
            }
            for (j, p) in a.mask.iter().enumerate() {
                if p[0] < 0 || p[1] < 0 || p[0] >= w_img as i64 || p[1] >= h_img as i64 {
                    return Err(Error::schema(
                        format!("{}.mask[{}]", path, j),
                        "point outside image",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn category(&self, id: u32) -> Option<&CategoryDef> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn person_category(&self) -> u32 {
        self.categories
            .iter()
            .find(|c| c.is_person)
            .map(|c| c.id)
            .expect("validated set has a person category")
    }

    pub fn addon_category_ids(&self) -> Vec<u32> {
        self.categories.iter().filter(|c| c.is_addon).map(|c| c.id).collect()
    }

    pub fn image_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.images.iter().map(|i| i.id).collect();
        ids.sort_unstable();
        ids
    }

    pub fn annotations_for(&self, image_id: u64) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(move |a| a.image_id == image_id)
    }

    /// Category ids present (non-ignored) per image; the MIL label source.
    pub fn image_category_labels(&self) -> BTreeMap<u64, BTreeSet<u32>> {
        let mut map: BTreeMap<u64, BTreeSet<u32>> =
            self.images.iter().map(|i| (i.id, BTreeSet::new())).collect();
        for a in &self.annotations {
            if !a.ignore {
                map.entry(a.image_id).or_default().insert(a.category_id);
            }
        }
        map
    }
}

pub fn load_annotations(path: &Path) -> Result<SceneSet> {
    let text = std::fs::read_to_string(path)?;
    let set: SceneSet = serde_json::from_str(&text)?;
    set.validate()?;
    Ok(set)
}

pub fn save_annotations(set: &SceneSet, path: &Path) -> Result<()> {
    set.validate()?;
    std::fs::write(path, serde_json::to_string_pretty(set)?)?;
    Ok(())
}

/// Per-image proposal boxes, stored as a sibling JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub proposals: BTreeMap<u64, Vec<[f64; 4]>>,
}

impl ProposalSet {
    pub fn boxes_for(&self, image_id: u64) -> Vec<BoundingBox> {
        self.proposals
            .get(&image_id)
            .map(|v| {
                v.iter()
                    .map(|b| BoundingBox::new(b[0], b[1], b[2], b[3]))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn insert(&mut self, image_id: u64, boxes: &[BoundingBox]) {
        self.proposals
            .insert(image_id, boxes.iter().map(|b| [b.x, b.y, b.w, b.h]).collect());
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// For each person annotation, at most one attached annotation per add-on
/// category.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttachmentMap {
    /// person annotation id -> add-on category id -> add-on annotation id
    pub by_person: BTreeMap<u64, BTreeMap<u32, u64>>,
}

impl AttachmentMap {
    pub fn attached_addon_ids(&self) -> BTreeSet<u64> {
        self.by_person
            .values()
            .flat_map(|m| m.values().copied())
            .collect()
    }

    pub fn get(&self, person_ann: u64, category: u32) -> Option<u64> {
        self.by_person.get(&person_ann).and_then(|m| m.get(&category)).copied()
    }

    pub fn person_of_addon(&self, addon_ann: u64) -> Option<u64> {
        for (person, cats) in &self.by_person {
            if cats.values().any(|&a| a == addon_ann) {
                return Some(*person);
            }
        }
        None
    }

    pub fn len(&self) -> usize {
        self.by_person.values().map(|m| m.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Assigns every add-on object to the person with the smallest directed
/// Hausdorff distance from the add-on mask to the person mask. Add-ons in
/// person-free images are discarded. When one person collects several objects
/// of the same category, the closest one wins. All ties break toward the
/// lowest annotation id.
pub fn build_attachments(set: &SceneSet) -> Result<AttachmentMap> {
    let person_cat = set.person_category();
    let addon_cats: BTreeSet<u32> = set.addon_category_ids().into_iter().collect();
    let mut best: BTreeMap<(u64, u32), (f64, u64)> = BTreeMap::new();

    for img in &set.images {
        let bounds = (img.width, img.height);
        let people: Vec<&Annotation> = set
            .annotations_for(img.id)
            .filter(|a| a.category_id == person_cat)
            .collect();
        if people.is_empty() {
            continue;
        }
        for addon in set
            .annotations_for(img.id)
            .filter(|a| addon_cats.contains(&a.category_id))
        {
            let addon_mask = addon.binary_mask(bounds);
            if addon_mask.is_empty() {
                return Err(Error::EmptyMask(format!("annotation {} has no mask", addon.id)));
            }
            let mut chosen: Option<(f64, u64)> = None;
            for person in &people {
                let person_mask = person.binary_mask(bounds);
                if person_mask.is_empty() {
                    return Err(Error::EmptyMask(format!("annotation {} has no mask", person.id)));
                }
                let d = directed_hausdorff(&addon_mask, &person_mask)?;
                let better = match chosen {
                    None => true,
                    Some((bd, bid)) => d < bd || (d == bd && person.id < bid),
                };
                if better {
                    chosen = Some((d, person.id));
                }
            }
            let (dist, person_id) = chosen.expect("at least one person");
            let key = (person_id, addon.category_id);
            let replace = match best.get(&key) {
                None => true,
                Some((bd, bid)) => dist < *bd || (dist == *bd && addon.id < *bid),
            };
            if replace {
                best.insert(key, (dist, addon.id));
            }
        }
    }

    let mut map = AttachmentMap::default();
    for ((person_id, cat), (_, addon_id)) in best {
        map.by_person.entry(person_id).or_default().insert(cat, addon_id);
    }
    Ok(map)
}

/// Label for one proposal: a positive class or background. Total: every
/// proposal gets exactly one label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProposalLabel {
    /// None = background.
    pub category_id: Option<u32>,
    /// Index into the ground-truth slice for positives.
    pub gt_index: Option<usize>,
    pub max_iou: f64,
}

impl ProposalLabel {
    pub fn is_positive(&self) -> bool {
        self.category_id.is_some()
    }
}

/// IoU ≥ 0.5 against some ground truth labels the proposal with the
/// highest-IoU ground truth's class; everything else is background, including
/// proposals under 10% overlap.
pub fn label_proposals(proposals: &[BoundingBox], gts: &[(u32, BoundingBox)]) -> Vec<ProposalLabel> {
    proposals
        .iter()
        .map(|p| {
            let mut best: Option<(f64, usize)> = None;
            for (i, (_, g)) in gts.iter().enumerate() {
                let v = iou(p, g);
                let better = match best {
                    None => v > 0.0,
                    Some((bv, _)) => v > bv,
                };
                if better {
                    best = Some((v, i));
                }
            }
            match best {
                Some((v, i)) if v >= 0.5 => ProposalLabel {
                    category_id: Some(gts[i].0),
                    gt_index: Some(i),
                    max_iou: v,
                },
                Some((v, _)) => ProposalLabel {
                    category_id: None,
                    gt_index: None,
                    max_iou: v,
                },
                None => ProposalLabel {
                    category_id: None,
                    gt_index: None,
                    max_iou: 0.0,
                },
            }
        })
        .collect()
}

/// Samples a minibatch of proposal indices with positives capped at
/// `positive_fraction` of the batch. Deterministic for a fixed seed.
pub fn sample_minibatch(
    labels: &[ProposalLabel],
    size: usize,
    positive_fraction: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    assert!(size >= 4, "batch size must be at least 4");
    if labels.is_empty() {
        return Err(Error::Training("no proposals to sample from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_positive()).collect();
    let mut backgrounds: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_positive()).collect();
    positives.shuffle(&mut rng);
    backgrounds.shuffle(&mut rng);

    let pos_target = ((size as f64) * positive_fraction).round() as usize;
    let n_pos = pos_target.min(positives.len());
    let n_bg = (size - n_pos).min(backgrounds.len());
    let mut batch: Vec<usize> = positives.iter().copied().take(n_pos).collect();
    batch.extend(backgrounds.iter().copied().take(n_bg));
    // short on backgrounds: top up with remaining positives
    if batch.len() < size {
        batch.extend(
            positives
                .iter()
                .copied()
                .skip(n_pos)
                .take(size - batch.len()),
        );
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_for(b: &BoundingBox) -> Vec<[i64; 2]> {
        // box corners as a minimal mask
        vec![
            [b.x as i64, b.y as i64],
            [(b.right() - 1.0) as i64, (b.bottom() - 1.0) as i64],
        ]
    }

    fn tiny_set() -> SceneSet {
        let person = BoundingBox::new(10.0, 10.0, 30.0, 50.0);
        let person2 = BoundingBox::new(100.0, 10.0, 30.0, 50.0);
        let addon = BoundingBox::new(42.0, 20.0, 10.0, 10.0);
        SceneSet {
            images: vec![ImageInfo { id: 1, width: 200, height: 200 }],
            categories: vec![
                CategoryDef {
                    id: 1,
                    name: "person".into(),
                    supercategory: "person".into(),
                    is_person: true,
                    is_addon: false,
                },
                CategoryDef {
                    id: 2,
                    name: "backpack".into(),
                    supercategory: "accessory".into(),
                    is_person: false,
                    is_addon: true,
                },
            ],
            annotations: vec![
                Annotation {
                    id: 1,
                    image_id: 1,
                    category_id: 1,
                    bbox: [person.x, person.y, person.w, person.h],
                    mask: mask_for(&person),
                    ignore: false,
                },
                Annotation {
                    id: 2,
                    image_id: 1,
                    category_id: 1,
                    bbox: [person2.x, person2.y, person2.w, person2.h],
                    mask: mask_for(&person2),
                    ignore: false,
                },
                Annotation {
                    id: 3,
                    image_id: 1,
                    category_id: 2,
                    bbox: [addon.x, addon.y, addon.w, addon.h],
                    mask: mask_for(&addon),
                    ignore: false,
                },
            ],
        }
    }

    #[test]
    fn validate_accepts_good_set() {
        tiny_set().validate().unwrap();
    }

    #[test]
    fn validate_rejects_runaway_bbox() {
        let mut set = tiny_set();
        set.annotations[0].bbox = [190.0, 10.0, 30.0, 50.0];
        let err = set.validate().unwrap_err();
        assert!(err.to_string().contains("annotations[0].bbox"), "{}", err);
    }

    #[test]
    fn validate_requires_one_person_category() {
        let mut set = tiny_set();
        set.categories[0].is_person = false;
        assert!(set.validate().is_err());
    }

    #[test]
    fn empty_set_roundtrip() {
        let set = SceneSet {
            images: vec![],
            categories: tiny_set().categories,
            annotations: vec![],
        };
        let dir = std::env::temp_dir().join("ctxdet_dataset_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.json");
        save_annotations(&set, &path).unwrap();
        let loaded = load_annotations(&path).unwrap();
        assert_eq!(set, loaded);
    }

    #[test]
    fn attachment_prefers_closer_person() {
        let set = tiny_set();
        let map = build_attachments(&set).unwrap();
        // addon at x=42 is nearer person 1 (ends at x=40) than person 2 (starts at 100)
        assert_eq!(map.get(1, 2), Some(3));
        assert_eq!(map.len(), 1);
    }

    #[test]
    fn attachment_tie_breaks_to_lower_person_id() {
        let mut set = tiny_set();
        // place the addon exactly between two identical people
        set.annotations[0].bbox = [10.0, 10.0, 10.0, 10.0];
        set.annotations[0].mask = vec![[10, 10]];
        set.annotations[1].bbox = [110.0, 10.0, 10.0, 10.0];
        set.annotations[1].mask = vec![[110, 10]];
        set.annotations[2].bbox = [60.0, 10.0, 10.0, 10.0];
        set.annotations[2].mask = vec![[60, 10]];
        let map = build_attachments(&set).unwrap();
        assert_eq!(map.get(1, 2), Some(3));
        assert_eq!(map.get(2, 2), None);
    }

    #[test]
    fn attachment_drops_addons_without_people() {
        let mut set = tiny_set();
        set.annotations.remove(0);
        set.annotations.remove(0); // both people gone
        let map = build_attachments(&set).unwrap();
        assert!(map.is_empty());
    }

    #[test]
    fn attachment_requires_masks() {
        let mut set = tiny_set();
        set.annotations[2].mask.clear();
        assert!(matches!(build_attachments(&set), Err(Error::EmptyMask(_))));
    }

    #[test]
    fn labels_are_total_and_thresholded() {
        let gt = vec![(7u32, BoundingBox::new(0.0, 0.0, 10.0, 10.0))];
        let proposals = vec![
            BoundingBox::new(0.0, 0.0, 10.0, 10.0), // identical: positive
            BoundingBox::new(0.0, 0.0, 10.0, 30.0), // iou 1/3: background
            BoundingBox::new(50.0, 50.0, 4.0, 4.0), // disjoint: background
        ];
        let labels = label_proposals(&proposals, &gt);
        assert_eq!(labels.len(), 3);
        assert_eq!(labels[0].category_id, Some(7));
        assert_eq!(labels[1].category_id, None);
        assert_eq!(labels[2].category_id, None);
    }

    #[test]
    fn label_iou_exactly_half_is_positive() {
        let gt = vec![(7u32, BoundingBox::new(0.0, 0.0, 10.0, 10.0))];
        // iou = 50/100 = 0.5 exactly
        let p = BoundingBox::new(0.0, 0.0, 10.0, 5.0);
        let labels = label_proposals(&[p], &gt);
        assert_eq!(labels[0].category_id, Some(7));
    }

    #[test]
    fn minibatch_quarter_positive() {
        // 100 proposals, 50 positive
        let mut labels = Vec::new();
        for i in 0..100 {
            labels.push(ProposalLabel {
                category_id: if i < 50 { Some(1) } else { None },
                gt_index: None,
                max_iou: 0.0,
            });
        }
        let batch = sample_minibatch(&labels, 64, 0.25, 9).unwrap();
        assert_eq!(batch.len(), 64);
        let n_pos = batch.iter().filter(|&&i| labels[i].is_positive()).count();
        assert_eq!(n_pos, 16);
    }

    #[test]
    fn minibatch_deterministic_and_all_background() {
        let labels: Vec<ProposalLabel> = (0..20)
            .map(|_| ProposalLabel { category_id: None, gt_index: None, max_iou: 0.0 })
            .collect();
        let a = sample_minibatch(&labels, 8, 0.25, 3).unwrap();
        let b = sample_minibatch(&labels, 8, 0.25, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&i| !labels[i].is_positive()));
        assert!(sample_minibatch(&[], 8, 0.25, 3).is_err());
    }
}
