//! COCO-format annotation parsing/serialization and image loading.
//!
//! The external format is the usual COCO JSON layout with top-level
//! `images`, `annotations` and `categories` arrays and `[x, y, width,
//! height]` pixel bboxes. Internally every bbox is kept in corner form
//! (`x1, y1, x2, y2`) as `f64`; fractional coordinates are preserved and
//! only snapped to integer pixels at compositing time.
//!
//! Unknown fields (segmentation polygons, keypoints, `info`/`licenses`
//! blocks, ...) are carried through opaquely so that writing a parsed
//! dataset does not lose them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{BBox, Error, RasterImage, Result};

/// One image entry of the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

/// One annotated object instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// Corner-form bounding box (x1, y1, x2, y2).
    pub bbox: BBox,
    pub is_crowd: bool,
    pub area: f64,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

/// One category entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecord {
    pub id: u64,
    pub name: String,
    pub supercategory: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

/// In-memory dataset model. Immutable by convention after construction;
/// all pipeline stages take it by shared reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub instances: Vec<Instance>,
    pub categories: Vec<CategoryRecord>,
    /// Opaque `info` block, if the source file had one.
    pub info: Option<Value>,
    /// Opaque `licenses` block, if the source file had one.
    pub licenses: Option<Value>,
}

impl Dataset {
    pub fn image_by_id(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|img| img.id == id)
    }

    pub fn category_by_id(&self, id: u64) -> Option<&CategoryRecord> {
        self.categories.iter().find(|cat| cat.id == id)
    }

    pub fn category_by_name(&self, name: &str) -> Option<&CategoryRecord> {
        self.categories.iter().find(|cat| cat.name == name)
    }

    /// Instances grouped per image, in dataset order. Images without
    /// annotations map to empty groups.
    pub fn instances_by_image(&self) -> BTreeMap<u64, Vec<&Instance>> {
        let mut groups: BTreeMap<u64, Vec<&Instance>> =
            self.images.iter().map(|img| (img.id, Vec::new())).collect();
        for inst in &self.instances {
            groups.entry(inst.image_id).or_default().push(inst);
        }
        groups
    }

    pub fn max_image_id(&self) -> u64 {
        self.images.iter().map(|i| i.id).max().unwrap_or(0)
    }

    pub fn max_instance_id(&self) -> u64 {
        self.instances.iter().map(|i| i.id).max().unwrap_or(0)
    }

    /// Checks every dataset invariant: unique ids, unique category names,
    /// resolvable references, positive image sizes and in-bounds positive
    /// bboxes.
    pub fn validate(&self) -> Result<()> {
        let mut image_ids = BTreeSet::new();
        for img in &self.images {
            if !image_ids.insert(img.id) {
                return Err(Error::Integrity(format!("duplicate image id {}", img.id)));
            }
            if img.width == 0 || img.height == 0 {
                return Err(Error::Integrity(format!(
                    "image {} has non-positive dimensions {}x{}",
                    img.id, img.width, img.height
                )));
            }
        }

        let mut category_ids = BTreeSet::new();
        let mut category_names = BTreeSet::new();
        for cat in &self.categories {
            if !category_ids.insert(cat.id) {
                return Err(Error::Integrity(format!("duplicate category id {}", cat.id)));
            }
            if !category_names.insert(cat.name.as_str()) {
                return Err(Error::Integrity(format!(
                    "duplicate category name '{}'",
                    cat.name
                )));
            }
        }

        let images: BTreeMap<u64, &ImageRecord> =
            self.images.iter().map(|img| (img.id, img)).collect();
        let mut instance_ids = BTreeSet::new();
        for inst in &self.instances {
            if !instance_ids.insert(inst.id) {
                return Err(Error::Integrity(format!(
                    "duplicate annotation id {}",
                    inst.id
                )));
            }
            let img = images.get(&inst.image_id).ok_or_else(|| {
                Error::Integrity(format!(
                    "annotation {} references missing image {}",
                    inst.id, inst.image_id
                ))
            })?;
            if !category_ids.contains(&inst.category_id) {
                return Err(Error::Integrity(format!(
                    "annotation {} references missing category {}",
                    inst.id, inst.category_id
                )));
            }
            check_instance_geometry(inst, img).map_err(|reason| Error::InvalidAnnotation {
                annotation_id: inst.id,
                reason,
            })?;
        }
        Ok(())
    }
}

fn check_instance_geometry(inst: &Instance, img: &ImageRecord) -> std::result::Result<(), String> {
    let b = &inst.bbox;
    if !(b.x1.is_finite() && b.y1.is_finite() && b.x2.is_finite() && b.y2.is_finite()) {
        return Err("bbox has non-finite coordinates".into());
    }
    if !b.is_valid() {
        return Err(format!(
            "bbox has non-positive width or height ({}x{})",
            b.width(),
            b.height()
        ));
    }
    let bounds = BBox::new(0.0, 0.0, f64::from(img.width), f64::from(img.height));
    if !bounds.contains(b) {
        return Err(format!(
            "bbox ({}, {}, {}, {}) exceeds image bounds {}x{}",
            b.x1, b.y1, b.x2, b.y2, img.width, img.height
        ));
    }
    if !inst.area.is_finite() || inst.area <= 0.0 {
        return Err(format!("area {} is not positive", inst.area));
    }
    Ok(())
}

/// Lookup table over a dataset's categories.
#[derive(Debug, Clone)]
pub struct CategoryTable<'a> {
    by_id: BTreeMap<u64, &'a CategoryRecord>,
}

impl<'a> CategoryTable<'a> {
    pub fn new(categories: &'a [CategoryRecord]) -> Self {
        CategoryTable {
            by_id: categories.iter().map(|c| (c.id, c)).collect(),
        }
    }

    pub fn get(&self, id: u64) -> Option<&'a CategoryRecord> {
        self.by_id.get(&id).copied()
    }

    /// Like [`CategoryTable::get`] but failing with an integrity error.
    pub fn require(&self, id: u64) -> Result<&'a CategoryRecord> {
        self.get(id)
            .ok_or_else(|| Error::UnknownCategory(format!("id {id}")))
    }

    /// Ids of every category under the given supercategory, in ascending order.
    pub fn ids_of_supercategory(&self, supercategory: &str) -> Vec<u64> {
        self.by_id
            .values()
            .filter(|c| c.supercategory == supercategory)
            .map(|c| c.id)
            .collect()
    }
}

/// What to do with annotations whose bbox cannot host or donate a
/// foreground (non-positive size, out of image bounds, non-finite, or
/// non-positive area).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InvalidBoxPolicy {
    /// Fail the whole parse naming the offending annotation.
    #[default]
    Fail,
    /// Drop the annotation and report it in [`Parsed::skipped`].
    Skip,
}

/// Parse configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub invalid_boxes: InvalidBoxPolicy,
}

/// An annotation dropped under [`InvalidBoxPolicy::Skip`].
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedAnnotation {
    pub annotation_id: u64,
    pub reason: String,
}

/// Parse result: the dataset plus any skipped annotations.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub dataset: Dataset,
    pub skipped: Vec<SkippedAnnotation>,
}

// Raw serde mirror of the on-disk layout.

#[derive(Serialize, Deserialize)]
struct RawDataset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    info: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    licenses: Option<Value>,
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotation>,
    categories: Vec<RawCategory>,
}

#[derive(Serialize, Deserialize)]
struct RawImage {
    id: u64,
    width: u32,
    height: u32,
    file_name: String,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area: Option<f64>,
    #[serde(default)]
    iscrowd: u8,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct RawCategory {
    id: u64,
    name: String,
    #[serde(default)]
    supercategory: String,
    #[serde(flatten)]
    extra: Map<String, Value>,
}

/// Parses COCO-style JSON with the default strict options.
pub fn parse_dataset(bytes: &[u8]) -> Result<Dataset> {
    parse_dataset_with(bytes, &ParseOptions::default()).map(|p| p.dataset)
}

/// Parses COCO-style JSON, converting bboxes to corner form and validating
/// referential integrity. Annotations with unusable bboxes are handled per
/// [`ParseOptions::invalid_boxes`].
pub fn parse_dataset_with(bytes: &[u8], options: &ParseOptions) -> Result<Parsed> {
    let raw: RawDataset =
        serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))?;

    let images: Vec<ImageRecord> = raw
        .images
        .into_iter()
        .map(|img| ImageRecord {
            id: img.id,
            file_name: img.file_name,
            width: img.width,
            height: img.height,
            extra: img.extra,
        })
        .collect();

    let image_index: BTreeMap<u64, usize> = images
        .iter()
        .enumerate()
        .map(|(idx, img)| (img.id, idx))
        .collect();
    let category_ids: BTreeSet<u64> = raw.categories.iter().map(|c| c.id).collect();

    let mut instances = Vec::with_capacity(raw.annotations.len());
    let mut skipped = Vec::new();
    for ann in raw.annotations {
        let img_idx = *image_index.get(&ann.image_id).ok_or_else(|| {
            Error::Integrity(format!(
                "annotation {} references missing image {}",
                ann.id, ann.image_id
            ))
        })?;
        if !category_ids.contains(&ann.category_id) {
            return Err(Error::Integrity(format!(
                "annotation {} references missing category {}",
                ann.id, ann.category_id
            )));
        }

        let [x, y, w, h] = ann.bbox;
        let bbox = BBox::from_xywh(x, y, w, h);
        let inst = Instance {
            id: ann.id,
            image_id: ann.image_id,
            category_id: ann.category_id,
            bbox,
            is_crowd: ann.iscrowd != 0,
            area: ann.area.unwrap_or_else(|| bbox.area()),
            extra: ann.extra,
        };

        if let Err(reason) = check_instance_geometry(&inst, &images[img_idx]) {
            match options.invalid_boxes {
                InvalidBoxPolicy::Fail => {
                    return Err(Error::InvalidAnnotation {
                        annotation_id: inst.id,
                        reason,
                    })
                }
                InvalidBoxPolicy::Skip => {
                    skipped.push(SkippedAnnotation {
                        annotation_id: inst.id,
                        reason,
                    });
                    continue;
                }
            }
        }
        instances.push(inst);
    }

    let categories = raw
        .categories
        .into_iter()
        .map(|cat| CategoryRecord {
            id: cat.id,
            name: cat.name,
            supercategory: cat.supercategory,
            extra: cat.extra,
        })
        .collect();

    let dataset = Dataset {
        images,
        instances,
        categories,
        info: raw.info,
        licenses: raw.licenses,
    };
    dataset.validate()?;
    Ok(Parsed { dataset, skipped })
}

fn json_error(bytes: &[u8], err: &serde_json::Error) -> Error {
    let (line, column) = (err.line(), err.column());
    // serde_json reports 1-based line/column; recover the byte offset for
    // tooling that wants to seek into the file.
    let mut offset = 0usize;
    let mut current_line = 1usize;
    for (pos, byte) in bytes.iter().enumerate() {
        if current_line == line {
            offset = pos + column.saturating_sub(1);
            break;
        }
        if *byte == b'\n' {
            current_line += 1;
            offset = pos + 1;
        }
    }
    Error::Json {
        offset: offset.min(bytes.len()),
        line,
        column,
        message: err.to_string(),
    }
}

fn to_raw(dataset: &Dataset) -> RawDataset {
    RawDataset {
        info: dataset.info.clone(),
        licenses: dataset.licenses.clone(),
        images: dataset
            .images
            .iter()
            .map(|img| RawImage {
                id: img.id,
                width: img.width,
                height: img.height,
                file_name: img.file_name.clone(),
                extra: img.extra.clone(),
            })
            .collect(),
        annotations: dataset
            .instances
            .iter()
            .map(|inst| RawAnnotation {
                id: inst.id,
                image_id: inst.image_id,
                category_id: inst.category_id,
                bbox: inst.bbox.to_xywh(),
                area: Some(inst.area),
                iscrowd: u8::from(inst.is_crowd),
                extra: inst.extra.clone(),
            })
            .collect(),
        categories: dataset
            .categories
            .iter()
            .map(|cat| RawCategory {
                id: cat.id,
                name: cat.name.clone(),
                supercategory: cat.supercategory.clone(),
                extra: cat.extra.clone(),
            })
            .collect(),
    }
}

/// Serializes the dataset back to COCO-style JSON bytes (corner boxes
/// converted back to `[x, y, w, h]`). Output is deterministic: fixed key
/// order for known fields, sorted keys for opaque ones.
pub fn dataset_to_json(dataset: &Dataset) -> Vec<u8> {
    serde_json::to_vec(&to_raw(dataset)).expect("dataset serialization cannot fail")
}

/// Writes the dataset as COCO-style JSON to `path`.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let bytes = dataset_to_json(dataset);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Loads and decodes the raster file behind an [`ImageRecord`] from
/// `root/<file_name>`, converting to 8-bit RGB and checking that the pixel
/// dimensions match the record.
pub fn load_image(record: &ImageRecord, root: &Path) -> Result<RasterImage> {
    let path = root.join(&record.file_name);
    let reader = image::ImageReader::open(&path).map_err(|e| Error::io(&path, e))?;
    let decoded = reader.decode().map_err(|e| Error::image(&path, e))?;
    let rgb = decoded.to_rgb8();
    if rgb.width() != record.width || rgb.height() != record.height {
        return Err(Error::DimensionMismatch {
            image_id: record.id,
            expected_width: record.width,
            expected_height: record.height,
            actual_width: rgb.width(),
            actual_height: rgb.height(),
        });
    }
    Ok(rgb)
}

/// Encodes an RGB buffer as PNG at `path` (lossless, so pixel-level
/// invariants survive a disk round trip).
pub fn save_png(image: &RasterImage, path: &Path) -> Result<()> {
    image
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::image(path, e))
}
