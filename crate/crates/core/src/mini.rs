//! Greedy balanced mini-dataset construction.
//!
//! Categories are sorted ascending by total instance count (ties broken by
//! ascending category id). Step `i` moves every remaining image containing
//! at least one instance of the i-th category — together with all of its
//! annotations — out of the pool and into the step increment. After each
//! step a [`StepRecord`] captures balance and capacity metrics of the
//! cumulative selection; the final cut is chosen manually over those
//! records via [`select_step`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::coco::Dataset;
use crate::matcher::{within_band, CategoryMode, FilterConfig};
use crate::slots::{SlotDatabase, SlotRecord};
use crate::{Error, Result};

/// Metrics of the cumulative selection after one accumulation step.
///
/// `instance_std` is the population standard deviation of per-category
/// instance counts, taken over *all* dataset categories with absent ones
/// counted as zero, accumulated in ascending category-id order. `capacity`
/// counts the ordered (slot, candidate) pairs that pass the supplied filter
/// configuration within the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub category_added: u64,
    pub cumulative_images: u64,
    pub cumulative_instances: u64,
    pub slot_amount: u64,
    pub avg_slots_per_image: f64,
    pub instance_std: f64,
    pub all_categories_included: bool,
    pub capacity: u64,
}

/// Output of the builder: per-step records plus the disjoint per-step
/// dataset increments whose prefix unions form the cumulative selections.
#[derive(Debug, Clone)]
pub struct MiniDatasetResult {
    pub records: Vec<StepRecord>,
    /// `increments[i]` holds exactly the images (with all their
    /// annotations) first taken at step `i`; the full category list is
    /// repeated in each so every increment parses standalone.
    pub increments: Vec<Dataset>,
    pub chosen_step: Option<usize>,
}

/// Runs the accumulation over every category of the source.
///
/// `cfg` governs the capacity metric only; the default config reproduces
/// the standard same-category ±20% filters.
pub fn build_mini_dataset(
    source: &Dataset,
    db: &SlotDatabase,
    cfg: &FilterConfig,
) -> Result<MiniDatasetResult> {
    cfg.validate()?;
    if source.categories.is_empty() {
        return Err(Error::InvalidArgument(
            "mini-dataset construction needs at least one category".to_string(),
        ));
    }

    // Total instance count per category over the full source.
    let mut totals: BTreeMap<u64, u64> = source.categories.iter().map(|c| (c.id, 0)).collect();
    for inst in &source.instances {
        *totals.entry(inst.category_id).or_insert(0) += 1;
    }
    let mut order: Vec<u64> = source.categories.iter().map(|c| c.id).collect();
    order.sort_by_key(|id| (totals[id], *id));

    let supercats: BTreeMap<u64, &str> = source
        .categories
        .iter()
        .map(|c| (c.id, c.supercategory.as_str()))
        .collect();
    let slot_counts = db.slot_counts_per_image();

    // Remaining pool: image id -> indices of its instances.
    let mut remaining: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (idx, inst) in source.instances.iter().enumerate() {
        remaining.entry(inst.image_id).or_default().push(idx);
    }
    let image_records: BTreeMap<u64, usize> = source
        .images
        .iter()
        .enumerate()
        .map(|(idx, img)| (img.id, idx))
        .collect();

    let mut cumulative_images = 0u64;
    let mut cumulative_instances = 0u64;
    let mut cumulative_slots = 0u64;
    let mut per_category: BTreeMap<u64, u64> = source.categories.iter().map(|c| (c.id, 0)).collect();
    let mut cumulative_slot_records: Vec<SlotRecord> = Vec::new();

    let mut records = Vec::with_capacity(order.len());
    let mut increments = Vec::with_capacity(order.len());

    for (step_index, &category_id) in order.iter().enumerate() {
        let taken: Vec<u64> = remaining
            .iter()
            .filter(|(_, idxs)| {
                idxs.iter()
                    .any(|&i| source.instances[i].category_id == category_id)
            })
            .map(|(&img, _)| img)
            .collect();

        let mut inc_images = Vec::with_capacity(taken.len());
        let mut inc_instances = Vec::new();
        for image_id in taken {
            let idxs = remaining.remove(&image_id).expect("image still in pool");
            inc_images.push(source.images[image_records[&image_id]].clone());
            for idx in idxs {
                let inst = &source.instances[idx];
                *per_category.get_mut(&inst.category_id).expect("known category") += 1;
                inc_instances.push(inst.clone());
            }
            cumulative_images += 1;
            cumulative_slots += slot_counts.get(&image_id).copied().unwrap_or(0);
            cumulative_slot_records.extend(db.slots_of_image(image_id).cloned());
        }
        cumulative_instances += inc_instances.len() as u64;

        let all_included = per_category.values().all(|&c| c > 0);
        let capacity = augmentation_capacity(&mut cumulative_slot_records, cfg, &supercats);
        records.push(StepRecord {
            step_index,
            category_added: category_id,
            cumulative_images,
            cumulative_instances,
            slot_amount: cumulative_slots,
            avg_slots_per_image: if cumulative_images == 0 {
                0.0
            } else {
                cumulative_slots as f64 / cumulative_images as f64
            },
            instance_std: population_std(&per_category),
            all_categories_included: all_included,
            capacity,
        });
        increments.push(Dataset {
            images: inc_images,
            instances: inc_instances,
            categories: source.categories.clone(),
            info: None,
            licenses: None,
        });
    }

    Ok(MiniDatasetResult {
        records,
        increments,
        chosen_step: None,
    })
}

/// Population standard deviation of per-category counts, accumulated in
/// ascending category-id order (the map's natural order).
fn population_std(per_category: &BTreeMap<u64, u64>) -> f64 {
    let n = per_category.len() as f64;
    let mean = per_category.values().map(|&c| c as f64).sum::<f64>() / n;
    let var = per_category
        .values()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    var.sqrt()
}

/// Counts ordered (slot, candidate) pairs passing the filters among the
/// given slots. Exactly equivalent to summing `filter_candidates` lengths
/// over every slot, but grouped by the category stage and windowed over a
/// sorted area axis so large selections stay tractable.
///
/// Sorts `slots` by area as a side effect.
fn augmentation_capacity(
    slots: &mut [SlotRecord],
    cfg: &FilterConfig,
    supercats: &BTreeMap<u64, &str>,
) -> u64 {
    slots.sort_by(|a, b| a.area.total_cmp(&b.area).then(a.instance_id.cmp(&b.instance_id)));

    let mut groups: BTreeMap<&str, Vec<&SlotRecord>> = BTreeMap::new();
    match cfg.category_mode {
        CategoryMode::Any => {
            groups.insert("", slots.iter().collect());
        }
        CategoryMode::SameSupercategory => {
            for slot in slots.iter() {
                groups
                    .entry(supercats.get(&slot.category_id).copied().unwrap_or(""))
                    .or_default()
                    .push(slot);
            }
        }
        CategoryMode::SameCategory => {
            let mut by_cat: BTreeMap<u64, Vec<&SlotRecord>> = BTreeMap::new();
            for slot in slots.iter() {
                by_cat.entry(slot.category_id).or_default().push(slot);
            }
            return by_cat
                .values()
                .map(|group| capacity_within_group(group, cfg))
                .sum();
        }
    }
    groups
        .values()
        .map(|group| capacity_within_group(group, cfg))
        .sum()
}

/// Two-pointer pass over one category group sorted by area. When the scale
/// filter is on, the area band `|c - s| <= tol * s` selects a contiguous,
/// monotonically advancing window of the sorted group, so each slot only
/// inspects its own window.
fn capacity_within_group(group: &[&SlotRecord], cfg: &FilterConfig) -> u64 {
    let n = group.len();
    let mut count = 0u64;
    let mut lo = 0usize;
    let mut hi = 0usize;
    for i in 0..n {
        let s = group[i];
        let (start, end) = if cfg.scale_filter {
            while lo < n
                && group[lo].area < s.area
                && !within_band(s.area, cfg.scale_tolerance, group[lo].area)
            {
                lo += 1;
            }
            if hi < lo {
                hi = lo;
            }
            while hi < n
                && (group[hi].area <= s.area
                    || within_band(s.area, cfg.scale_tolerance, group[hi].area))
            {
                hi += 1;
            }
            (lo, hi)
        } else {
            (0, n)
        };
        for c in &group[start..end] {
            if c.instance_id == s.instance_id {
                continue;
            }
            if cfg.exclude_same_image && c.image_id == s.image_id {
                continue;
            }
            if cfg.ratio_filter && !within_band(s.aspect_ratio, cfg.ratio_tolerance, c.aspect_ratio)
            {
                continue;
            }
            count += 1;
        }
    }
    count
}

/// Returns the cumulative dataset through `step` (inclusive) as a
/// standalone dataset with ids preserved from the source.
pub fn select_step(result: &MiniDatasetResult, step: usize) -> Result<Dataset> {
    if step >= result.increments.len() {
        return Err(Error::InvalidArgument(format!(
            "step {step} out of range (have {} steps)",
            result.increments.len()
        )));
    }
    let mut out = Dataset {
        images: Vec::new(),
        instances: Vec::new(),
        categories: result.increments[step].categories.clone(),
        info: None,
        licenses: None,
    };
    for increment in &result.increments[..=step] {
        out.images.extend(increment.images.iter().cloned());
        out.instances.extend(increment.instances.iter().cloned());
    }
    Ok(out)
}

/// Image-id sets of each increment; exposed for partition checks.
pub fn increment_image_sets(result: &MiniDatasetResult) -> Vec<BTreeSet<u64>> {
    result
        .increments
        .iter()
        .map(|d| d.images.iter().map(|img| img.id).collect())
        .collect()
}
