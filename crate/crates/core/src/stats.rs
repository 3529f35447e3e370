//! Dataset and augmentation-run statistics: per-category imbalance tables,
//! augmented-image counts and original-image proportions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coco::Dataset;
use crate::compositor::{DatasetDelta, FailureKind};
use crate::matcher::AugmentationPlan;
use crate::slots::SlotDatabase;
use crate::{Error, Result};

/// Per-category tallies. `image_count` counts images containing at least
/// one instance of the category; crowd annotations count as instances but
/// never as slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub category_id: u64,
    pub name: String,
    pub image_count: u64,
    pub instance_count: u64,
    pub slot_count: u64,
}

/// One row of the augmentation-count table.
///
/// `original_proportion` follows the source table's convention: the
/// formula `100 * original / (original + augmented)` when anything was
/// augmented, and `0%` for a no-augmentation row. The raw counts are kept
/// alongside so the plain formula reading stays recoverable (see
/// [`proportion_of_original`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSummary {
    pub method_label: String,
    pub original_images: u64,
    pub augmented_images: u64,
    pub original_proportion: f64,
}

impl AugmentationSummary {
    pub fn new(method_label: impl Into<String>, original: u64, augmented: u64) -> Self {
        let original_proportion = if augmented == 0 || original == 0 {
            0.0
        } else {
            100.0 * original as f64 / (original + augmented) as f64
        };
        AugmentationSummary {
            method_label: method_label.into(),
            original_images: original,
            augmented_images: augmented,
            original_proportion,
        }
    }

    /// Row for a combined method: flipped images plus slot-generated images.
    pub fn combined(
        method_label: impl Into<String>,
        original: u64,
        flip_augmented: u64,
        slot_augmented: u64,
    ) -> Self {
        AugmentationSummary::new(method_label, original, flip_augmented + slot_augmented)
    }
}

/// `100 * original / (original + augmented)`.
///
/// `original = 0` is only meaningful together with `augmented = 0` (an
/// empty run, reported as 0%); augmented images without any originals are
/// rejected.
pub fn proportion_of_original(original: u64, augmented: u64) -> Result<f64> {
    if original == 0 {
        if augmented == 0 {
            return Ok(0.0);
        }
        return Err(Error::InvalidArgument(
            "augmented images without any original images".to_string(),
        ));
    }
    Ok(100.0 * original as f64 / (original + augmented) as f64)
}

/// Rounds half-up to two decimals (table formatting convention).
pub fn round_percent(p: f64) -> f64 {
    (p * 100.0 + 0.5).floor() / 100.0
}

/// Formats a percentage with two decimals, rounding half-up.
pub fn format_percent(p: f64) -> String {
    format!("{:.2}", round_percent(p))
}

/// Per-category tallies of images, instances and slots, sorted descending
/// by instance count (ties ascending by category id).
pub fn category_stats(dataset: &Dataset, db: &SlotDatabase) -> Vec<CategoryStats> {
    let mut images_per_cat: BTreeMap<u64, std::collections::BTreeSet<u64>> = BTreeMap::new();
    let mut instances_per_cat: BTreeMap<u64, u64> = BTreeMap::new();
    for inst in &dataset.instances {
        images_per_cat
            .entry(inst.category_id)
            .or_default()
            .insert(inst.image_id);
        *instances_per_cat.entry(inst.category_id).or_insert(0) += 1;
    }
    let mut slots_per_cat: BTreeMap<u64, u64> = BTreeMap::new();
    for slot in db.slots() {
        *slots_per_cat.entry(slot.category_id).or_insert(0) += 1;
    }

    let mut rows: Vec<CategoryStats> = dataset
        .categories
        .iter()
        .map(|cat| CategoryStats {
            category_id: cat.id,
            name: cat.name.clone(),
            image_count: images_per_cat.get(&cat.id).map_or(0, |s| s.len() as u64),
            instance_count: instances_per_cat.get(&cat.id).copied().unwrap_or(0),
            slot_count: slots_per_cat.get(&cat.id).copied().unwrap_or(0),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.instance_count
            .cmp(&a.instance_count)
            .then(a.category_id.cmp(&b.category_id))
    });
    rows
}

/// Skip diagnostics of an executed plan, by reason.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SkipDiagnostics {
    pub no_candidates: u64,
    pub degenerate_rect: u64,
    pub io_failures: u64,
}

/// Summary plus diagnostics for one executed plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub summary: AugmentationSummary,
    pub skipped: SkipDiagnostics,
}

/// Builds the run report: `original_images` counts the distinct source
/// images the plan targeted (assigned or skipped), `augmented_images` the
/// images actually emitted.
pub fn run_report(plan: &AugmentationPlan, delta: &DatasetDelta) -> RunReport {
    let mut source_images: std::collections::BTreeSet<u64> = plan
        .assignments
        .iter()
        .map(|a| a.slot.image_id)
        .collect();
    source_images.extend(plan.skipped.iter().map(|s| s.slot_image_id));

    let mut diagnostics = SkipDiagnostics {
        no_candidates: plan.skipped.len() as u64,
        ..SkipDiagnostics::default()
    };
    for failure in &delta.failures {
        match failure.kind {
            FailureKind::DegenerateRect => diagnostics.degenerate_rect += 1,
            FailureKind::Io => diagnostics.io_failures += 1,
        }
    }

    RunReport {
        summary: AugmentationSummary::new(
            format!("slot substitution ({})", plan.target.describe()),
            source_images.len() as u64,
            delta.images.len() as u64,
        ),
        skipped: diagnostics,
    }
}

/// Plain-text table of category stats, columns aligned.
pub fn render_category_table(rows: &[CategoryStats]) -> String {
    let headers = ["category", "id", "images", "instances", "slots"];
    let mut cells: Vec<[String; 5]> = vec![headers.map(str::to_string)];
    for row in rows {
        cells.push([
            row.name.clone(),
            row.category_id.to_string(),
            row.image_count.to_string(),
            row.instance_count.to_string(),
            row.slot_count.to_string(),
        ]);
    }
    let mut widths = [0usize; 5];
    for row in &cells {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for (idx, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if idx == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}
