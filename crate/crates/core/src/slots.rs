//! The slot database: every isolated foreground promoted to a replaceable
//! slot, with derived scale attributes and simple attribute queries.
//!
//! Slots and substitution candidates are the same records — every isolated
//! foreground can play either role; the matcher, not the database, decides
//! which side a record is on.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coco::{CategoryTable, Dataset, Instance};
use crate::geometry::find_isolated;
use crate::{BBox, Error, Result};

/// An isolated instance promoted to a slot, with scale attributes derived
/// from the rectangular bbox (not the segmentation mask).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub instance_id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub width: f64,
    pub height: f64,
    pub area: f64,
    pub aspect_ratio: f64,
}

impl SlotRecord {
    pub fn from_instance(inst: &Instance) -> Self {
        let width = inst.bbox.width();
        let height = inst.bbox.height();
        SlotRecord {
            instance_id: inst.id,
            image_id: inst.image_id,
            category_id: inst.category_id,
            bbox: inst.bbox,
            width,
            height,
            area: width * height,
            aspect_ratio: width / height,
        }
    }

    /// Re-derives every attribute from the bbox and compares bit-exactly.
    pub fn attributes_consistent(&self) -> bool {
        let width = self.bbox.width();
        let height = self.bbox.height();
        self.width == width
            && self.height == height
            && self.area == width * height
            && self.aspect_ratio == width / height
    }
}

/// Attribute constraints for [`SlotDatabase::query`]. An empty query matches
/// every slot.
#[derive(Debug, Clone, Default)]
pub struct SlotQuery {
    category_ids: Option<Vec<u64>>,
    area: Option<(f64, f64)>,
    aspect_ratio: Option<(f64, f64)>,
    exclude_image: Option<u64>,
}

impl SlotQuery {
    pub fn new() -> Self {
        SlotQuery::default()
    }

    pub fn category(mut self, id: u64) -> Self {
        self.category_ids = Some(vec![id]);
        self
    }

    pub fn categories(mut self, ids: impl IntoIterator<Item = u64>) -> Self {
        self.category_ids = Some(ids.into_iter().collect());
        self
    }

    /// Constrains to categories under `supercategory` (possibly none).
    pub fn supercategory(mut self, supercategory: &str, table: &CategoryTable) -> Self {
        self.category_ids = Some(table.ids_of_supercategory(supercategory));
        self
    }

    /// Inclusive area range in square pixels.
    pub fn area_range(mut self, min: f64, max: f64) -> Self {
        self.area = Some((min, max));
        self
    }

    /// Inclusive aspect-ratio range.
    pub fn aspect_ratio_range(mut self, min: f64, max: f64) -> Self {
        self.aspect_ratio = Some((min, max));
        self
    }

    pub fn exclude_image(mut self, image_id: u64) -> Self {
        self.exclude_image = Some(image_id);
        self
    }

    fn validate(&self) -> Result<()> {
        for (label, range) in [("area", self.area), ("aspect_ratio", self.aspect_ratio)] {
            if let Some((min, max)) = range {
                if min > max {
                    return Err(Error::InvalidArgument(format!(
                        "inverted {label} range: {min} > {max}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn matches(&self, slot: &SlotRecord) -> bool {
        if let Some(ids) = &self.category_ids {
            if !ids.contains(&slot.category_id) {
                return false;
            }
        }
        if let Some((min, max)) = self.area {
            if !(min <= slot.area && slot.area <= max) {
                return false;
            }
        }
        if let Some((min, max)) = self.aspect_ratio {
            if !(min <= slot.aspect_ratio && slot.aspect_ratio <= max) {
                return false;
            }
        }
        if let Some(image_id) = self.exclude_image {
            if slot.image_id == image_id {
                return false;
            }
        }
        true
    }
}

/// Immutable collection of slots, kept sorted by `(image_id, instance_id)`
/// with category/image/instance indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDatabase {
    slots: Vec<SlotRecord>,
    by_category: BTreeMap<u64, Vec<usize>>,
    by_image: BTreeMap<u64, Vec<usize>>,
    by_instance: BTreeMap<u64, usize>,
}

impl SlotDatabase {
    /// Builds a database from already-derived records; records are sorted
    /// and checked for attribute consistency and duplicate instance ids.
    pub fn from_records(mut records: Vec<SlotRecord>) -> Result<Self> {
        records.sort_by_key(|r| (r.image_id, r.instance_id));
        for rec in &records {
            if !rec.bbox.is_valid() {
                return Err(Error::Integrity(format!(
                    "slot {} has an invalid bbox",
                    rec.instance_id
                )));
            }
            if !rec.attributes_consistent() {
                return Err(Error::Integrity(format!(
                    "slot {} has attributes inconsistent with its bbox",
                    rec.instance_id
                )));
            }
        }
        let mut by_category: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut by_image: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut by_instance = BTreeMap::new();
        for (idx, rec) in records.iter().enumerate() {
            by_category.entry(rec.category_id).or_default().push(idx);
            by_image.entry(rec.image_id).or_default().push(idx);
            if by_instance.insert(rec.instance_id, idx).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate slot for instance {}",
                    rec.instance_id
                )));
            }
        }
        Ok(SlotDatabase {
            slots: records,
            by_category,
            by_image,
            by_instance,
        })
    }

    /// All slots in stable `(image_id, instance_id)` order.
    pub fn slots(&self) -> &[SlotRecord] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn by_instance_id(&self, instance_id: u64) -> Option<&SlotRecord> {
        self.by_instance.get(&instance_id).map(|&i| &self.slots[i])
    }

    pub fn slots_of_category(&self, category_id: u64) -> impl Iterator<Item = &SlotRecord> {
        self.by_category
            .get(&category_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.slots[i])
    }

    pub fn slots_of_image(&self, image_id: u64) -> impl Iterator<Item = &SlotRecord> {
        self.by_image
            .get(&image_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.slots[i])
    }

    /// Slot count per image id (images without slots are absent).
    pub fn slot_counts_per_image(&self) -> BTreeMap<u64, u64> {
        self.by_image
            .iter()
            .map(|(&id, v)| (id, v.len() as u64))
            .collect()
    }

    /// Returns every slot matching all of the query's constraints, in
    /// stable `(image_id, instance_id)` order.
    pub fn query(&self, query: &SlotQuery) -> Result<Vec<&SlotRecord>> {
        query.validate()?;
        Ok(self.slots.iter().filter(|s| query.matches(s)).collect())
    }
}

/// Applies isolation detection to every image of the dataset and promotes
/// each isolated non-crowd instance to a [`SlotRecord`].
///
/// Images are processed in parallel and merged in `(image_id, instance_id)`
/// order, so the result is independent of thread scheduling.
pub fn build_slot_database(dataset: &Dataset) -> Result<SlotDatabase> {
    let groups: Vec<(u64, Vec<&Instance>)> = dataset.instances_by_image().into_iter().collect();
    let per_image: Vec<Vec<SlotRecord>> = groups
        .par_iter()
        .map(|(_, instances)| {
            let owned: Vec<Instance> = instances.iter().map(|&i| i.clone()).collect();
            find_isolated(&owned).map(|iso| iso.iter().map(|i| SlotRecord::from_instance(i)).collect())
        })
        .collect::<Result<_>>()?;
    SlotDatabase::from_records(per_image.into_iter().flatten().collect())
}

/// Writes the slot database as a JSON sidecar (a flat array of records).
pub fn save_slot_db(db: &SlotDatabase, path: &Path) -> Result<()> {
    let bytes = serde_json::to_vec(db.slots()).expect("slot records serialize");
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a sidecar written by [`save_slot_db`], revalidating attribute
/// consistency.
pub fn load_slot_db(path: &Path) -> Result<SlotDatabase> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<SlotRecord> = serde_json::from_slice(&bytes).map_err(|e| Error::Json {
        offset: 0,
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    SlotDatabase::from_records(records)
}
