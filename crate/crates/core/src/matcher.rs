//! Candidate filtering and deterministic plan construction.
//!
//! A slot's candidates are filtered in three stages: aspect ratio, scale
//! (bbox area) and category. Both tolerance bands are inclusive and
//! multiplicative: a candidate value `c` passes against slot value `s` when
//! `|c - s| <= tol * s`, which is the `[s*(1-tol), s*(1+tol)]` band written
//! in a float-stable form. The final pick among surviving candidates is
//! pseudo-random but fully deterministic: index `mix64(seed, slot_instance_id)
//! % len`, so a plan does not depend on iteration order or thread count.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coco::CategoryTable;
use crate::slots::{SlotDatabase, SlotRecord};
use crate::{Error, Result};

/// Category stage behaviour of the filter pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryMode {
    /// Candidate must share the slot's category.
    #[default]
    SameCategory,
    /// Candidate category must live under the same supercategory.
    SameSupercategory,
    /// No category restriction.
    Any,
}

impl std::str::FromStr for CategoryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same-category" | "same_category" => Ok(CategoryMode::SameCategory),
            "same-supercategory" | "same_supercategory" => Ok(CategoryMode::SameSupercategory),
            "any" => Ok(CategoryMode::Any),
            other => Err(Error::InvalidArgument(format!(
                "unknown category mode '{other}' (expected same-category, same-supercategory or any)"
            ))),
        }
    }
}

/// Tolerances and category behaviour governing candidate selection.
///
/// `ratio_filter` / `scale_filter` exist for ablation runs; production use
/// leaves all three filters on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub ratio_tolerance: f64,
    pub scale_tolerance: f64,
    pub category_mode: CategoryMode,
    pub exclude_same_image: bool,
    pub seed: u64,
    pub ratio_filter: bool,
    pub scale_filter: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            ratio_tolerance: 0.20,
            scale_tolerance: 0.20,
            category_mode: CategoryMode::SameCategory,
            exclude_same_image: true,
            seed: 0,
            ratio_filter: true,
            scale_filter: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        for (label, tol) in [
            ("ratio_tolerance", self.ratio_tolerance),
            ("scale_tolerance", self.scale_tolerance),
        ] {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{label} must lie in (0, 1), got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// Inclusive multiplicative band test: `|value - center| <= tolerance * center`.
pub fn within_band(center: f64, tolerance: f64, value: f64) -> bool {
    (value - center).abs() <= tolerance * center
}

/// 64-bit avalanche over `seed XOR key` (splitmix64-style finalizer).
///
/// This is the documented selection hash: the final candidate for a slot is
/// `filtered[mix64(seed, slot_instance_id) % filtered.len()]`.
pub fn mix64(seed: u64, key: u64) -> u64 {
    let mut z = (seed ^ key).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Selects which slots a plan will fill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSelector {
    /// Every slot in the database.
    All,
    /// Slots whose category id is in the set.
    Categories(Vec<u64>),
    /// Slots whose category lives under the supercategory.
    Supercategory(String),
}

impl TargetSelector {
    pub fn matches(&self, slot: &SlotRecord, table: &CategoryTable) -> Result<bool> {
        self.matches_category(slot.category_id, table)
    }

    pub fn matches_category(&self, category_id: u64, table: &CategoryTable) -> Result<bool> {
        match self {
            TargetSelector::All => Ok(true),
            TargetSelector::Categories(ids) => Ok(ids.contains(&category_id)),
            TargetSelector::Supercategory(name) => {
                Ok(&table.require(category_id)?.supercategory == name)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TargetSelector::All => "all slots".to_string(),
            TargetSelector::Categories(ids) => format!("categories {ids:?}"),
            TargetSelector::Supercategory(name) => format!("supercategory '{name}'"),
        }
    }
}

/// One planned substitution.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub slot: SlotRecord,
    pub candidate: SlotRecord,
}

/// A slot that could not be filled at planning time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSkip {
    pub slot_instance_id: u64,
    pub slot_image_id: u64,
    /// Always "no_candidates" today; kept explicit for the skip report.
    pub reason: String,
}

/// Deterministic, seed-derived assignment of candidates to slots for one
/// augmentation epoch. Each slot appears at most once; candidates may be
/// reused across slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPlan {
    pub assignments: Vec<Assignment>,
    pub skipped: Vec<PlanSkip>,
    pub config: FilterConfig,
    pub target: TargetSelector,
    pub epoch: u32,
}

/// Runs the three-stage filter for one slot, in the documented order:
/// aspect ratio, scale, category, plus the self / same-image exclusions.
/// The result preserves the database's stable `(image_id, instance_id)`
/// order.
pub fn filter_candidates<'db>(
    slot: &SlotRecord,
    db: &'db SlotDatabase,
    cfg: &FilterConfig,
    table: &CategoryTable,
) -> Result<Vec<&'db SlotRecord>> {
    cfg.validate()?;
    let slot_category = table.require(slot.category_id)?;
    let mut out = Vec::new();
    for candidate in db.slots() {
        if candidate.instance_id == slot.instance_id {
            continue;
        }
        if cfg.exclude_same_image && candidate.image_id == slot.image_id {
            continue;
        }
        if cfg.ratio_filter
            && !within_band(slot.aspect_ratio, cfg.ratio_tolerance, candidate.aspect_ratio)
        {
            continue;
        }
        if cfg.scale_filter && !within_band(slot.area, cfg.scale_tolerance, candidate.area) {
            continue;
        }
        let category_ok = match cfg.category_mode {
            CategoryMode::SameCategory => candidate.category_id == slot.category_id,
            CategoryMode::SameSupercategory => {
                table.require(candidate.category_id)?.supercategory == slot_category.supercategory
            }
            CategoryMode::Any => true,
        };
        if category_ok {
            out.push(candidate);
        }
    }
    Ok(out)
}

/// Picks the final candidate: `filtered[mix64(seed, slot_instance_id) % len]`.
/// Returns `None` for an empty list (the no-candidate signal).
pub fn select_candidate<'a>(
    slot: &SlotRecord,
    filtered: &[&'a SlotRecord],
    seed: u64,
) -> Option<&'a SlotRecord> {
    if filtered.is_empty() {
        return None;
    }
    let idx = (mix64(seed, slot.instance_id) % filtered.len() as u64) as usize;
    Some(filtered[idx])
}

/// Builds a one-epoch plan: every targeted slot, in stable order, is
/// filtered and assigned its deterministic candidate; slots with no
/// surviving candidate are recorded in the skip report.
///
/// Slots are evaluated in parallel; the per-slot hash selection makes the
/// outcome independent of evaluation order.
pub fn build_plan(
    db: &SlotDatabase,
    target: &TargetSelector,
    cfg: &FilterConfig,
    table: &CategoryTable,
) -> Result<AugmentationPlan> {
    cfg.validate()?;
    let targeted: Vec<&SlotRecord> = db
        .slots()
        .iter()
        .map(|slot| target.matches(slot, table).map(|ok| (slot, ok)))
        .filter_map(|r| match r {
            Ok((slot, true)) => Some(Ok(slot)),
            Ok((_, false)) => None,
            Err(e) => Some(Err(e)),
        })
        .collect::<Result<_>>()?;

    let outcomes: Vec<std::result::Result<Assignment, PlanSkip>> = targeted
        .par_iter()
        .map(|slot| {
            let filtered = filter_candidates(slot, db, cfg, table)?;
            Ok(match select_candidate(slot, &filtered, cfg.seed) {
                Some(candidate) => Ok(Assignment {
                    slot: (*slot).clone(),
                    candidate: candidate.clone(),
                }),
                None => Err(PlanSkip {
                    slot_instance_id: slot.instance_id,
                    slot_image_id: slot.image_id,
                    reason: "no_candidates".to_string(),
                }),
            })
        })
        .collect::<Result<_>>()?;

    let mut assignments = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(a) => assignments.push(a),
            Err(s) => skipped.push(s),
        }
    }

    Ok(AugmentationPlan {
        assignments,
        skipped,
        config: cfg.clone(),
        target: target.clone(),
        epoch: 1,
    })
}

// Serialized plan layout: instance-id pairs plus a config echo, so a plan
// can be audited or replayed without the database in memory.

#[derive(Serialize, Deserialize)]
struct PlanFile {
    epoch: u32,
    config: FilterConfig,
    target: TargetSelector,
    assignments: Vec<PlanPair>,
    skipped: Vec<PlanSkip>,
}

#[derive(Serialize, Deserialize)]
struct PlanPair {
    slot: u64,
    candidate: u64,
}

/// Serializes the plan as deterministic JSON.
pub fn plan_to_json(plan: &AugmentationPlan) -> Vec<u8> {
    let file = PlanFile {
        epoch: plan.epoch,
        config: plan.config.clone(),
        target: plan.target.clone(),
        assignments: plan
            .assignments
            .iter()
            .map(|a| PlanPair {
                slot: a.slot.instance_id,
                candidate: a.candidate.instance_id,
            })
            .collect(),
        skipped: plan.skipped.clone(),
    };
    serde_json::to_vec_pretty(&file).expect("plan serialization cannot fail")
}

pub fn save_plan(plan: &AugmentationPlan, path: &Path) -> Result<()> {
    fs::write(path, plan_to_json(plan)).map_err(|e| Error::io(path, e))
}

/// Loads a plan file, resolving instance ids against the database.
pub fn load_plan(path: &Path, db: &SlotDatabase) -> Result<AugmentationPlan> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: PlanFile = serde_json::from_slice(&bytes).map_err(|e| Error::Json {
        offset: 0,
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let resolve = |id: u64| {
        db.by_instance_id(id).cloned().ok_or_else(|| {
            Error::Integrity(format!("plan references instance {id} not present in the slot database"))
        })
    };
    let mut seen_slots = std::collections::BTreeSet::new();
    let assignments = file
        .assignments
        .iter()
        .map(|pair| {
            if !seen_slots.insert(pair.slot) {
                return Err(Error::Integrity(format!(
                    "plan assigns slot {} more than once",
                    pair.slot
                )));
            }
            Ok(Assignment {
                slot: resolve(pair.slot)?,
                candidate: resolve(pair.candidate)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AugmentationPlan {
        assignments,
        skipped: file.skipped,
        config: file.config,
        target: file.target,
        epoch: file.epoch,
    })
}
