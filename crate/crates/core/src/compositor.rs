//! Plan execution at the pixel level: crop donor foregrounds, resize them
//! into slot rectangles with bilinear interpolation, paste, and rewrite the
//! annotations. Also the horizontal-flip baseline.
//!
//! Fractional bbox corners are snapped to integer pixels (round half-up)
//! only here, at paste time. By default one generated image is emitted per
//! source image with all of that image's planned slots substituted;
//! [`ExecuteOptions::emit_per_slot`] switches to one image per assignment
//! for ablation runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coco::{load_image, save_png, Dataset, ImageRecord, Instance};
use crate::matcher::{Assignment, AugmentationPlan};
use crate::slots::SlotRecord;
use crate::{BBox, Error, RasterImage, Result};

/// Integer pixel rectangle, half-open on the right/bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PixelRect {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Snaps a fractional bbox to integer pixels inside a `width` x `height`
/// image. `None` when the rectangle collapses below one pixel.
fn pixel_rect(bbox: &BBox, width: u32, height: u32) -> Option<PixelRect> {
    let x1 = round_half_up(bbox.x1).clamp(0, i64::from(width));
    let y1 = round_half_up(bbox.y1).clamp(0, i64::from(height));
    let x2 = round_half_up(bbox.x2).clamp(0, i64::from(width));
    let y2 = round_half_up(bbox.y2).clamp(0, i64::from(height));
    if x2 <= x1 || y2 <= y1 {
        return None;
    }
    Some(PixelRect {
        x: x1 as u32,
        y: y1 as u32,
        w: (x2 - x1) as u32,
        h: (y2 - y1) as u32,
    })
}

/// Bilinear resize of a source sub-rectangle to `dst_w` x `dst_h`, sampling
/// at pixel centers (`src = (dst + 0.5) * scale - 0.5`) with clamp-to-edge
/// inside the crop. A same-size crop copies verbatim: the mapping is then
/// the identity and the fractional weights vanish.
fn resize_crop_bilinear(
    src: &RasterImage,
    crop: PixelRect,
    dst_w: u32,
    dst_h: u32,
) -> RasterImage {
    let scale_x = f64::from(crop.w) / f64::from(dst_w);
    let scale_y = f64::from(crop.h) / f64::from(dst_h);
    let mut out = RasterImage::new(dst_w, dst_h);
    for dy in 0..dst_h {
        let sy = ((f64::from(dy) + 0.5) * scale_y - 0.5).clamp(0.0, f64::from(crop.h - 1));
        let y0 = sy.floor() as u32;
        let y1 = (y0 + 1).min(crop.h - 1);
        let fy = sy - f64::from(y0);
        for dx in 0..dst_w {
            let sx = ((f64::from(dx) + 0.5) * scale_x - 0.5).clamp(0.0, f64::from(crop.w - 1));
            let x0 = sx.floor() as u32;
            let x1 = (x0 + 1).min(crop.w - 1);
            let fx = sx - f64::from(x0);

            let p00 = src.get_pixel(crop.x + x0, crop.y + y0).0;
            let p10 = src.get_pixel(crop.x + x1, crop.y + y0).0;
            let p01 = src.get_pixel(crop.x + x0, crop.y + y1).0;
            let p11 = src.get_pixel(crop.x + x1, crop.y + y1).0;

            let mut px = [0u8; 3];
            for (c, out_channel) in px.iter_mut().enumerate() {
                let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
                let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                *out_channel = v.round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(dx, dy, image::Rgb(px));
        }
    }
    out
}

/// Crops the donor at the candidate bbox, bilinearly resizes the crop to
/// the slot's integer pixel rectangle and pastes it over the slot region.
/// Every pixel outside the slot rectangle is returned untouched.
pub fn substitute(
    source: &RasterImage,
    slot: &SlotRecord,
    donor_image: &RasterImage,
    candidate: &SlotRecord,
) -> Result<RasterImage> {
    let slot_rect = pixel_rect(&slot.bbox, source.width(), source.height()).ok_or_else(|| {
        Error::Substitution {
            slot_instance_id: slot.instance_id,
            reason: "slot rectangle is sub-pixel after rounding".to_string(),
        }
    })?;
    let cand_rect =
        pixel_rect(&candidate.bbox, donor_image.width(), donor_image.height()).ok_or_else(|| {
            Error::Substitution {
                slot_instance_id: slot.instance_id,
                reason: format!(
                    "candidate {} rectangle is sub-pixel after rounding",
                    candidate.instance_id
                ),
            }
        })?;

    let patch = resize_crop_bilinear(donor_image, cand_rect, slot_rect.w, slot_rect.h);
    let mut out = source.clone();
    for dy in 0..slot_rect.h {
        for dx in 0..slot_rect.w {
            out.put_pixel(slot_rect.x + dx, slot_rect.y + dy, *patch.get_pixel(dx, dy));
        }
    }
    Ok(out)
}

/// Mirrors the image left-right and remaps every bbox to
/// `(W - x2, y1, W - x1, y2)`. Categories and crowd flags are preserved;
/// opaque extras (e.g. segmentation polygons) are dropped because they
/// cannot be remapped.
pub fn flip_horizontal(
    image: &RasterImage,
    annotations: &[Instance],
) -> (RasterImage, Vec<Instance>) {
    let flipped = image::imageops::flip_horizontal(image);
    let w = f64::from(image.width());
    let anns = annotations
        .iter()
        .map(|inst| Instance {
            bbox: BBox::new(w - inst.bbox.x2, inst.bbox.y1, w - inst.bbox.x1, inst.bbox.y2),
            extra: Default::default(),
            ..inst.clone()
        })
        .collect();
    (flipped, anns)
}

/// One composed output image, before ids are assigned.
#[derive(Debug, Clone)]
pub struct GeneratedImage {
    pub source_image_id: u64,
    pub pixels: RasterImage,
    /// Full annotation set of the source image with substituted slots'
    /// categories swapped; same count as the source.
    pub annotations: Vec<Instance>,
    /// (slot instance id, candidate instance id) pairs actually applied.
    pub provenance: Vec<(u64, u64)>,
    /// Slots of this image that could not be applied.
    pub slot_failures: Vec<ExecutionFailure>,
}

/// Why a slot or image could not be processed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Io,
    DegenerateRect,
}

/// A recorded per-image or per-slot failure; the run continues past these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionFailure {
    pub image_id: u64,
    pub slot_instance_id: Option<u64>,
    pub kind: FailureKind,
    pub message: String,
}

/// Provenance of one emitted image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedProvenance {
    pub new_image_id: u64,
    pub source_image_id: u64,
    /// (slot instance id, candidate instance id) pairs applied.
    pub pairs: Vec<(u64, u64)>,
}

/// New records produced by executing a plan. `images` and `instances` carry
/// fresh unique ids (`max existing id + running counter`, assigned in stable
/// source-image order) and reference pixels already written to disk.
#[derive(Debug, Clone, Default)]
pub struct DatasetDelta {
    pub images: Vec<ImageRecord>,
    pub instances: Vec<Instance>,
    pub provenance: Vec<GeneratedProvenance>,
    pub failures: Vec<ExecutionFailure>,
}

impl DatasetDelta {
    /// Wraps the delta as a standalone dataset, reusing the source's
    /// category list so the file parses on its own.
    pub fn to_dataset(&self, source: &Dataset) -> Dataset {
        Dataset {
            images: self.images.clone(),
            instances: self.instances.clone(),
            categories: source.categories.clone(),
            info: None,
            licenses: None,
        }
    }
}

/// Execution switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExecuteOptions {
    /// Emit one generated image per assignment instead of one per source
    /// image.
    pub emit_per_slot: bool,
}

/// Applies all of one image's assignments to its pixels. Slots that fail
/// (degenerate rectangle, unreadable donor) are recorded and left original.
pub fn compose_generated(
    source_record: &ImageRecord,
    source_pixels: &RasterImage,
    source_annotations: &[Instance],
    assignments: &[&Assignment],
    donors: &BTreeMap<u64, RasterImage>,
) -> GeneratedImage {
    let mut pixels = source_pixels.clone();
    let mut provenance = Vec::new();
    let mut slot_failures = Vec::new();

    for assignment in assignments {
        let donor = match donors.get(&assignment.candidate.image_id) {
            Some(d) => d,
            None => {
                slot_failures.push(ExecutionFailure {
                    image_id: source_record.id,
                    slot_instance_id: Some(assignment.slot.instance_id),
                    kind: FailureKind::Io,
                    message: format!(
                        "donor image {} unavailable",
                        assignment.candidate.image_id
                    ),
                });
                continue;
            }
        };
        match substitute(&pixels, &assignment.slot, donor, &assignment.candidate) {
            Ok(next) => {
                pixels = next;
                provenance.push((
                    assignment.slot.instance_id,
                    assignment.candidate.instance_id,
                ));
            }
            Err(err) => slot_failures.push(ExecutionFailure {
                image_id: source_record.id,
                slot_instance_id: Some(assignment.slot.instance_id),
                kind: FailureKind::DegenerateRect,
                message: err.to_string(),
            }),
        }
    }

    let swapped: BTreeMap<u64, u64> = assignments
        .iter()
        .filter(|a| {
            provenance
                .iter()
                .any(|(slot_id, _)| *slot_id == a.slot.instance_id)
        })
        .map(|a| (a.slot.instance_id, a.candidate.category_id))
        .collect();

    let annotations = source_annotations
        .iter()
        .map(|inst| match swapped.get(&inst.id) {
            // Substituted slot: keep the slot bbox, adopt the candidate's
            // category; the old segmentation no longer describes the pixels.
            Some(&category_id) => Instance {
                category_id,
                extra: Default::default(),
                ..inst.clone()
            },
            None => inst.clone(),
        })
        .collect();

    GeneratedImage {
        source_image_id: source_record.id,
        pixels,
        annotations,
        provenance,
        slot_failures,
    }
}

/// Deterministic output name: the source stem followed by one
/// `_slot<id>_cand<id>` segment per applied substitution.
fn generated_file_name(source: &ImageRecord, pairs: &[(u64, u64)]) -> String {
    let stem = Path::new(&source.file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| source.file_name.clone());
    let mut name = stem;
    for (slot_id, cand_id) in pairs {
        name.push_str(&format!("_slot{slot_id}_cand{cand_id}"));
    }
    name.push_str(".png");
    name
}

/// Executes the plan: groups assignments by source image, composes and
/// writes one PNG per source image (or per assignment with
/// `emit_per_slot`), and returns the rewritten records. Missing files are
/// recorded as failures and the run continues.
///
/// Images are processed in parallel; results are assembled in ascending
/// source-image order, so outputs do not depend on thread count.
pub fn execute_plan(
    plan: &AugmentationPlan,
    dataset: &Dataset,
    image_root: &Path,
    out_root: &Path,
    options: &ExecuteOptions,
) -> Result<DatasetDelta> {
    std::fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;

    let mut by_source: BTreeMap<u64, Vec<&Assignment>> = BTreeMap::new();
    for assignment in &plan.assignments {
        by_source
            .entry(assignment.slot.image_id)
            .or_default()
            .push(assignment);
    }

    let image_records: BTreeMap<u64, &ImageRecord> =
        dataset.images.iter().map(|img| (img.id, img)).collect();
    let annotations_by_image = dataset.instances_by_image();

    // (source image id, assignments for one output image)
    let mut tasks: Vec<(u64, Vec<&Assignment>)> = Vec::new();
    for (&image_id, group) in &by_source {
        if options.emit_per_slot {
            for a in group {
                tasks.push((image_id, vec![a]));
            }
        } else {
            tasks.push((image_id, group.clone()));
        }
    }

    struct Emission {
        generated: GeneratedImage,
        file_name: String,
        width: u32,
        height: u32,
    }
    struct TaskOutput {
        generated: Option<Emission>,
        failures: Vec<ExecutionFailure>,
    }

    let outputs: Vec<TaskOutput> = tasks
        .par_iter()
        .map(|(image_id, assignments)| {
            let io_failure = |slot: Option<u64>, message: String| ExecutionFailure {
                image_id: *image_id,
                slot_instance_id: slot,
                kind: FailureKind::Io,
                message,
            };
            let Some(record) = image_records.get(image_id) else {
                return TaskOutput {
                    generated: None,
                    failures: vec![io_failure(
                        None,
                        format!("plan references missing source image {image_id}"),
                    )],
                };
            };
            let source_pixels = match load_image(record, image_root) {
                Ok(p) => p,
                Err(err) => {
                    return TaskOutput {
                        generated: None,
                        failures: vec![io_failure(None, err.to_string())],
                    }
                }
            };

            // Load each distinct donor once; assignments whose donor cannot
            // be read are dropped here with the underlying error.
            let mut donors = BTreeMap::new();
            let mut failures = Vec::new();
            let mut runnable: Vec<&Assignment> = Vec::new();
            for assignment in assignments {
                let donor_id = assignment.candidate.image_id;
                if donors.contains_key(&donor_id) {
                    runnable.push(assignment);
                    continue;
                }
                if donor_id == *image_id {
                    donors.insert(donor_id, source_pixels.clone());
                    runnable.push(assignment);
                    continue;
                }
                match image_records
                    .get(&donor_id)
                    .ok_or_else(|| {
                        Error::Integrity(format!("plan references missing donor image {donor_id}"))
                    })
                    .and_then(|rec| load_image(rec, image_root))
                {
                    Ok(pixels) => {
                        donors.insert(donor_id, pixels);
                        runnable.push(assignment);
                    }
                    Err(err) => {
                        failures.push(io_failure(Some(assignment.slot.instance_id), err.to_string()))
                    }
                }
            }

            let source_annotations: Vec<Instance> = annotations_by_image
                .get(image_id)
                .map(|v| v.iter().map(|&i| i.clone()).collect())
                .unwrap_or_default();
            let mut generated =
                compose_generated(record, &source_pixels, &source_annotations, &runnable, &donors);
            generated.slot_failures.extend(failures);

            if generated.provenance.is_empty() {
                TaskOutput {
                    failures: std::mem::take(&mut generated.slot_failures),
                    generated: None,
                }
            } else {
                let file_name = generated_file_name(record, &generated.provenance);
                TaskOutput {
                    generated: Some(Emission {
                        generated,
                        file_name,
                        width: record.width,
                        height: record.height,
                    }),
                    failures: Vec::new(),
                }
            }
        })
        .collect();

    let mut delta = DatasetDelta::default();
    let mut next_image_id = dataset.max_image_id() + 1;
    let mut next_instance_id = dataset.max_instance_id() + 1;

    for output in outputs {
        delta.failures.extend(output.failures);
        let Some(Emission {
            generated,
            file_name,
            width,
            height,
        }) = output.generated
        else {
            continue;
        };

        let out_path: PathBuf = out_root.join(&file_name);
        save_png(&generated.pixels, &out_path)?;

        let new_image_id = next_image_id;
        next_image_id += 1;
        delta.images.push(ImageRecord {
            id: new_image_id,
            file_name,
            width,
            height,
            extra: Default::default(),
        });
        delta.failures.extend(generated.slot_failures.clone());
        for inst in &generated.annotations {
            delta.instances.push(Instance {
                id: next_instance_id,
                image_id: new_image_id,
                ..inst.clone()
            });
            next_instance_id += 1;
        }
        delta.provenance.push(GeneratedProvenance {
            new_image_id,
            source_image_id: generated.source_image_id,
            pairs: generated.provenance,
        });
    }

    Ok(delta)
}
