//! Deterministic synthetic datasets for the slotaug test suites.
//!
//! All fixture coordinates live on a quarter-pixel grid so that the
//! corner/size conversions and the flip arithmetic are exact in `f64`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::Rgb;
use slotaug::coco::{self, CategoryRecord, Dataset, ImageRecord, Instance};
use slotaug::{BBox, RasterImage};

/// A dataset plus the pixel buffers its records describe.
pub struct Fixture {
    pub dataset: Dataset,
    pub images: BTreeMap<u64, RasterImage>,
}

/// Paths produced by [`Fixture::write_to`].
pub struct FixturePaths {
    pub annotations: PathBuf,
    pub image_root: PathBuf,
}

impl Fixture {
    /// Writes `annotations.json` plus an `images/` directory under `dir`.
    pub fn write_to(&self, dir: &Path) -> FixturePaths {
        let image_root = dir.join("images");
        std::fs::create_dir_all(&image_root).expect("create image root");
        for record in &self.dataset.images {
            let pixels = &self.images[&record.id];
            coco::save_png(pixels, &image_root.join(&record.file_name)).expect("write png");
        }
        let annotations = dir.join("annotations.json");
        coco::write_dataset(&self.dataset, &annotations).expect("write annotations");
        FixturePaths {
            annotations,
            image_root,
        }
    }
}

pub fn solid(w: u32, h: u32, rgb: [u8; 3]) -> RasterImage {
    RasterImage::from_pixel(w, h, Rgb(rgb))
}

pub fn checkerboard(w: u32, h: u32, cell: u32, a: [u8; 3], b: [u8; 3]) -> RasterImage {
    RasterImage::from_fn(w, h, |x, y| {
        if ((x / cell) + (y / cell)).is_multiple_of(2) {
            Rgb(a)
        } else {
            Rgb(b)
        }
    })
}

/// Two-axis intensity ramp; distinct values along both axes.
pub fn gradient(w: u32, h: u32) -> RasterImage {
    RasterImage::from_fn(w, h, |x, y| {
        Rgb([
            (x * 255 / w.max(1)) as u8,
            (y * 255 / h.max(1)) as u8,
            ((x + y) * 255 / (w + h).max(1)) as u8,
        ])
    })
}

fn category(id: u64, name: &str, supercategory: &str) -> CategoryRecord {
    CategoryRecord {
        id,
        name: name.to_string(),
        supercategory: supercategory.to_string(),
        extra: Default::default(),
    }
}

fn instance(id: u64, image_id: u64, category_id: u64, bbox: BBox, is_crowd: bool) -> Instance {
    Instance {
        id,
        image_id,
        category_id,
        bbox,
        is_crowd,
        area: bbox.area(),
        extra: Default::default(),
    }
}

/// Standard augmentation fixture: `n` images of 160x120 with per image
///
/// * one isolated "car" box (40x20, shifted per image; areas within the
///   default ±20% band of each other),
/// * one isolated "cat" box (28x28) and, on odd images, an isolated "dog"
///   box (30x30) — band-compatible under the "animal" supercategory,
/// * a pair of overlapping "person" boxes (never slots),
/// * on every fifth image a crowd region overlapping the cat box, which
///   removes that cat from the slot set.
///
/// Pixel content cycles through solid colors, checkerboards and gradients
/// so substitutions are visible in the buffers.
pub fn augmentation_fixture(n: u64) -> Fixture {
    let categories = vec![
        category(1, "car", "vehicle"),
        category(2, "cat", "animal"),
        category(3, "dog", "animal"),
        category(4, "person", "person"),
    ];

    let mut images = Vec::new();
    let mut instances = Vec::new();
    let mut buffers = BTreeMap::new();
    let mut next_instance = 1u64;

    for i in 0..n {
        let image_id = i + 1;
        images.push(ImageRecord {
            id: image_id,
            file_name: format!("img{image_id:03}.png"),
            width: 160,
            height: 120,
            extra: Default::default(),
        });

        let pixels = match i % 3 {
            0 => solid(160, 120, [(40 + 5 * (i % 40)) as u8, 80, 120]),
            1 => checkerboard(160, 120, 4 + (i % 3) as u32, [250, 250, 250], [10, 10, 30]),
            _ => gradient(160, 120),
        };
        buffers.insert(image_id, pixels);

        // Quarter-pixel offsets keep coordinates dyadic.
        let dx = (i % 7) as f64 * 2.25;
        let dy = (i % 5) as f64 * 1.5;

        let car = BBox::from_xywh(8.0 + dx, 6.0 + dy, 40.0, 20.0);
        instances.push(instance(next_instance, image_id, 1, car, false));
        next_instance += 1;

        let cat = BBox::from_xywh(100.0 + dx * 0.5, 8.0 + dy, 28.0, 28.0);
        instances.push(instance(next_instance, image_id, 2, cat, false));
        next_instance += 1;

        if i % 2 == 1 {
            let dog = BBox::from_xywh(12.0 + dx, 80.0, 30.0, 30.0);
            instances.push(instance(next_instance, image_id, 3, dog, false));
            next_instance += 1;
        }

        let person_a = BBox::from_xywh(90.0, 70.0, 30.0, 40.0);
        let person_b = BBox::from_xywh(105.0, 80.0, 30.0, 35.0);
        instances.push(instance(next_instance, image_id, 4, person_a, false));
        next_instance += 1;
        instances.push(instance(next_instance, image_id, 4, person_b, false));
        next_instance += 1;

        if i % 5 == 4 {
            let crowd = BBox::from_xywh(120.0, 10.0, 30.0, 30.0);
            instances.push(instance(next_instance, image_id, 4, crowd, true));
            next_instance += 1;
        }
    }

    let dataset = Dataset {
        images,
        instances,
        categories,
        info: None,
        licenses: None,
    };
    dataset.validate().expect("fixture dataset is valid");
    Fixture {
        dataset,
        images: buffers,
    }
}

/// Mini-dataset fixture: 10 categories over 60 annotation-only images with
/// deliberately skewed instance counts and some multi-category images.
/// No pixel buffers; the mini builder never touches pixels.
pub fn mini_fixture() -> Dataset {
    let categories: Vec<CategoryRecord> = (1..=10)
        .map(|id| {
            let super_name = if id <= 5 { "alpha" } else { "beta" };
            category(id, &format!("cat{id:02}"), super_name)
        })
        .collect();

    let mut images = Vec::new();
    let mut instances = Vec::new();
    let mut next_instance = 1u64;

    for i in 0..60u64 {
        let image_id = i + 1;
        images.push(ImageRecord {
            id: image_id,
            file_name: format!("m{image_id:03}.png"),
            width: 320,
            height: 240,
            extra: Default::default(),
        });

        // Skewed membership: low-id categories are rare, high-id ones
        // common; most images hold 2-4 categories.
        let mut cats: Vec<u64> = Vec::new();
        cats.push(1 + (i % 10));
        cats.push(1 + ((i * 3 + 1) % 10));
        if i % 2 == 0 {
            cats.push(10 - (i % 4));
        }
        if i % 9 == 0 {
            cats.push(1 + (i % 3));
        }
        cats.sort_unstable();
        cats.dedup();

        for (k, cat_id) in cats.iter().enumerate() {
            // Lay boxes out in a row; every second one reaches into its
            // right neighbour so the fixture has both slots and non-slots.
            let x = 10.0 + 50.0 * k as f64;
            let overlap = if (i + k as u64).is_multiple_of(2) {
                0.0
            } else {
                15.0
            };
            let bbox = BBox::from_xywh(x, 20.0, 40.0 + overlap, 40.0);
            instances.push(instance(next_instance, image_id, *cat_id, bbox, false));
            next_instance += 1;
            // Duplicate instances for common categories skew the counts.
            if *cat_id > 6 {
                let extra_box = BBox::from_xywh(x + 2.0, 120.0 + 10.0 * k as f64, 36.0, 36.0);
                instances.push(instance(next_instance, image_id, *cat_id, extra_box, false));
                next_instance += 1;
            }
        }
    }

    let dataset = Dataset {
        images,
        instances,
        categories,
        info: None,
        licenses: None,
    };
    dataset.validate().expect("mini fixture is valid");
    dataset
}
