//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (visible with `--nocapture`).
//!
//! Criterion 10 needs the real MS-COCO 2014 annotations on disk and is
//! ignored by default; point SLOTAUG_COCO_ANNOTATIONS at a combined
//! train+valminusminival instances file and run with `--ignored` to
//! include it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use slotaug::coco::{parse_dataset, CategoryTable, Dataset, Instance};
use slotaug::compositor::{execute_plan, flip_horizontal, substitute, ExecuteOptions};
use slotaug::geometry::find_isolated;
use slotaug::matcher::{build_plan, within_band, FilterConfig, TargetSelector};
use slotaug::mini::{build_mini_dataset, increment_image_sets, select_step, StepRecord};
use slotaug::slots::{build_slot_database, SlotRecord};
use slotaug::stats::{category_stats, format_percent, proportion_of_original};
use slotaug::{BBox, RasterImage};
use slotaug_fixtures::{augmentation_fixture, checkerboard, gradient, mini_fixture, solid};

/// Interval-intersection oracle, written independently of the C1-C4
/// predicate: positive overlap extent on both axes.
fn interval_overlap(a: &BBox, b: &BBox) -> bool {
    let ow = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let oh = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    ow > 0.0 && oh > 0.0
}

#[test]
fn c01_overlap_oracle_agrees_on_randomized_pairs() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs: Vec<(BBox, BBox)> = Vec::new();

    // Integer-grid pairs: shared edges and corners are frequent.
    for _ in 0..4000 {
        let gen = |rng: &mut ChaCha8Rng| {
            let x1 = rng.gen_range(0..50) as f64;
            let y1 = rng.gen_range(0..50) as f64;
            BBox::new(
                x1,
                y1,
                x1 + rng.gen_range(1..20) as f64,
                y1 + rng.gen_range(1..20) as f64,
            )
        };
        pairs.push((gen(&mut rng), gen(&mut rng)));
    }
    // Fractional pairs.
    for _ in 0..3000 {
        let gen = |rng: &mut ChaCha8Rng| {
            let x1: f64 = rng.gen_range(0.0..64.0);
            let y1: f64 = rng.gen_range(0.0..64.0);
            BBox::new(
                x1,
                y1,
                x1 + rng.gen_range(0.1..16.0),
                y1 + rng.gen_range(0.1..16.0),
            )
        };
        pairs.push((gen(&mut rng), gen(&mut rng)));
    }
    // Nested pairs.
    for _ in 0..2000 {
        let x1: f64 = rng.gen_range(0.0..32.0);
        let y1: f64 = rng.gen_range(0.0..32.0);
        let outer = BBox::new(x1, y1, x1 + rng.gen_range(8.0..24.0), y1 + rng.gen_range(8.0..24.0));
        let inner = BBox::new(
            outer.x1 + outer.width() * 0.25,
            outer.y1 + outer.height() * 0.25,
            outer.x2 - outer.width() * 0.25,
            outer.y2 - outer.height() * 0.25,
        );
        pairs.push((outer, inner));
    }
    // Exactly edge-touching pairs on every side.
    for _ in 0..1500 {
        let x1 = rng.gen_range(0..40) as f64;
        let y1 = rng.gen_range(0..40) as f64;
        let a = BBox::new(x1, y1, x1 + 10.0, y1 + 10.0);
        let b = match rng.gen_range(0..4) {
            0 => BBox::new(a.x2, y1, a.x2 + 5.0, y1 + 5.0),
            1 => BBox::new(x1 - 5.0, a.y2, x1, a.y2 + 5.0),
            2 => BBox::new(a.x2, a.y2, a.x2 + 3.0, a.y2 + 3.0),
            _ => BBox::new(x1 - 7.0, y1 - 7.0, x1, y1),
        };
        pairs.push((a, b));
    }

    assert!(pairs.len() >= 10_000);
    let mut agreements = 0usize;
    for (a, b) in &pairs {
        assert_eq!(
            a.overlaps(b),
            interval_overlap(a, b),
            "disagreement on {a:?} vs {b:?}"
        );
        agreements += 1;
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "criterion 1: PASS - overlap matches the interval oracle on {agreements} pairs in {elapsed:?}"
    );
}

#[test]
fn c02_isolation_matches_the_quadratic_definition() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for image in 0..200u64 {
        let n = rng.gen_range(1..=30);
        let instances: Vec<Instance> = (0..n)
            .map(|k| {
                let x1 = rng.gen_range(0..56) as f64;
                let y1 = rng.gen_range(0..56) as f64;
                let bbox = BBox::new(
                    x1,
                    y1,
                    x1 + rng.gen_range(1..16) as f64,
                    y1 + rng.gen_range(1..16) as f64,
                );
                Instance {
                    id: k + 1,
                    image_id: image,
                    category_id: 1,
                    bbox,
                    is_crowd: rng.gen_bool(0.1),
                    area: bbox.area(),
                    extra: Default::default(),
                }
            })
            .collect();

        let got: Vec<u64> = find_isolated(&instances)
            .unwrap()
            .iter()
            .map(|i| i.id)
            .collect();

        // Quadratic definition with the independent overlap formulation.
        let expected: Vec<u64> = instances
            .iter()
            .filter(|inst| {
                !inst.is_crowd
                    && instances
                        .iter()
                        .all(|other| other.id == inst.id || !interval_overlap(&inst.bbox, &other.bbox))
            })
            .map(|i| i.id)
            .collect();
        assert_eq!(got, expected, "image {image}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("criterion 2: PASS - isolation equals the quadratic oracle on 200 images in {elapsed:?}");
}

#[test]
fn c03_filter_band_endpoints_are_exact() {
    for (area, expected) in [(79.0, false), (80.0, true), (120.0, true), (121.0, false)] {
        assert_eq!(
            within_band(100.0, 0.2, area),
            expected,
            "area {area} against slot area 100"
        );
    }
    for (ratio, expected) in [(0.79, false), (0.8, true), (1.2, true), (1.21, false)] {
        assert_eq!(
            within_band(1.0, 0.2, ratio),
            expected,
            "ratio {ratio} against slot ratio 1.0"
        );
    }
    println!("criterion 3: PASS - band arithmetic is exact at 79/80/120/121 and 0.79/0.8/1.2/1.21");
}

#[test]
fn c04_table_arithmetic_reproduces_the_published_rows() {
    // Expected percentages exactly as published. Note: the source table is
    // arithmetically inconsistent for two rows — (4139, 2224) computes to
    // 65.05% but was published as 64.05%, and (3025, 3956) computes to
    // 43.33% but was published as 43.31%. The formula is the contract here,
    // so those two assertions fail; see the decisions ledger for analysis.
    let rows = [
        (118_287u64, 118_287u64, "50.00"),
        (12_251, 3_262, "78.97"),
        (3_025, 940, "76.29"),
        (4_139, 2_224, "64.05"),
        (12_251, 15_513, "44.13"),
        (3_025, 3_956, "43.31"),
        (4_139, 6_363, "39.41"),
    ];
    let mut mismatches = Vec::new();
    for (original, augmented, published) in rows {
        let formatted = format_percent(proportion_of_original(original, augmented).unwrap());
        if formatted != published {
            mismatches.push(format!(
                "({original}, {augmented}): formula gives {formatted}%, published value is {published}%"
            ));
        }
    }
    assert!(
        mismatches.is_empty(),
        "criterion 4: FAIL - {} of 7 rows cannot be reproduced from their counts:\n  {}",
        mismatches.len(),
        mismatches.join("\n  ")
    );
    println!("criterion 4: PASS - all seven table rows reproduced to 2 decimals");
}

#[test]
fn c05_compositor_invariants_on_a_twenty_image_fixture() {
    let start = Instant::now();
    let fixture = augmentation_fixture(20);
    let dir = tempfile::tempdir().unwrap();
    let paths = fixture.write_to(dir.path());
    let db = build_slot_database(&fixture.dataset).unwrap();
    let table = CategoryTable::new(&fixture.dataset.categories);
    let cfg = FilterConfig {
        seed: 123,
        ..FilterConfig::default()
    };
    let plan = build_plan(&db, &TargetSelector::All, &cfg, &table).unwrap();
    assert!(!plan.assignments.is_empty());

    let out = dir.path().join("out");
    let delta = execute_plan(
        &plan,
        &fixture.dataset,
        &paths.image_root,
        &out,
        &ExecuteOptions::default(),
    )
    .unwrap();
    assert!(delta.failures.is_empty());
    assert!(!delta.images.is_empty());

    let slot_bbox: BTreeMap<u64, BBox> = plan
        .assignments
        .iter()
        .map(|a| (a.slot.instance_id, a.slot.bbox))
        .collect();
    let by_image = fixture.dataset.instances_by_image();

    let mut checked = 0usize;
    for prov in &delta.provenance {
        let (new_image_id, source_image_id, pairs) =
            (&prov.new_image_id, &prov.source_image_id, &prov.pairs);
        let record = delta.images.iter().find(|i| i.id == *new_image_id).unwrap();
        let source = fixture.dataset.image_by_id(*source_image_id).unwrap();

        // (a) source dimensions.
        assert_eq!((record.width, record.height), (source.width, source.height));

        // (b) byte-identical pixels outside substituted rectangles.
        let pixels = slotaug::coco::load_image(record, &out).unwrap();
        let source_pixels = &fixture.images[source_image_id];
        let rects: Vec<(u32, u32, u32, u32)> = pairs
            .iter()
            .map(|(slot_id, _)| {
                let b = slot_bbox[slot_id];
                (
                    (b.x1 + 0.5).floor() as u32,
                    (b.y1 + 0.5).floor() as u32,
                    (b.x2 + 0.5).floor() as u32,
                    (b.y2 + 0.5).floor() as u32,
                )
            })
            .collect();
        for y in 0..record.height {
            for x in 0..record.width {
                let inside = rects
                    .iter()
                    .any(|(x1, y1, x2, y2)| (*x1..*x2).contains(&x) && (*y1..*y2).contains(&y));
                if !inside {
                    assert_eq!(pixels.get_pixel(x, y), source_pixels.get_pixel(x, y));
                }
            }
        }

        // (c) annotation count conserved.
        let new_anns: Vec<&Instance> = delta
            .instances
            .iter()
            .filter(|i| i.image_id == *new_image_id)
            .collect();
        assert_eq!(new_anns.len(), by_image[source_image_id].len());

        // (d) substituted bboxes equal slot bboxes exactly.
        let substituted: BTreeSet<u64> = pairs.iter().map(|(slot_id, _)| *slot_id).collect();
        for (source_inst, new_inst) in by_image[source_image_id].iter().zip(&new_anns) {
            if substituted.contains(&source_inst.id) {
                assert_eq!(new_inst.bbox, slot_bbox[&source_inst.id]);
            }
        }
        checked += 1;
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "criterion 5: PASS - dimension/background/count/bbox invariants on {checked} generated images in {elapsed:?}"
    );
}

/// Reference bilinear resampler, written as the direct four-tap formula.
fn reference_bilinear(src: &RasterImage, crop: (u32, u32, u32, u32), dw: u32, dh: u32) -> RasterImage {
    let (cx, cy, cw, ch) = crop;
    let mut out = RasterImage::new(dw, dh);
    for oy in 0..dh {
        for ox in 0..dw {
            let u = ((ox as f64 + 0.5) * cw as f64 / dw as f64 - 0.5).clamp(0.0, (cw - 1) as f64);
            let v = ((oy as f64 + 0.5) * ch as f64 / dh as f64 - 0.5).clamp(0.0, (ch - 1) as f64);
            let (x0, y0) = (u.floor() as u32, v.floor() as u32);
            let (x1, y1) = ((x0 + 1).min(cw - 1), (y0 + 1).min(ch - 1));
            let (a, b) = (u - x0 as f64, v - y0 as f64);
            let mut px = [0u8; 3];
            for (c, out_channel) in px.iter_mut().enumerate() {
                let f = |x: u32, y: u32| f64::from(src.get_pixel(cx + x, cy + y).0[c]);
                let val = f(x0, y0) * (1.0 - a) * (1.0 - b)
                    + f(x1, y0) * a * (1.0 - b)
                    + f(x0, y1) * (1.0 - a) * b
                    + f(x1, y1) * a * b;
                *out_channel = (val + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(ox, oy, image::Rgb(px));
        }
    }
    out
}

fn slot_record(instance_id: u64, image_id: u64, bbox: BBox) -> SlotRecord {
    SlotRecord {
        instance_id,
        image_id,
        category_id: 1,
        bbox,
        width: bbox.width(),
        height: bbox.height(),
        area: bbox.area(),
        aspect_ratio: bbox.width() / bbox.height(),
    }
}

#[test]
fn c06_resampling_matches_an_independent_reference() {
    let cases: Vec<(RasterImage, BBox, BBox)> = vec![
        // checkerboard 20x20 crop into a 10x10 slot
        (
            checkerboard(40, 40, 2, [255, 255, 255], [0, 0, 0]),
            BBox::new(5.0, 5.0, 15.0, 15.0),
            BBox::new(10.0, 10.0, 30.0, 30.0),
        ),
        // gradient downscale with non-integer ratio
        (
            gradient(48, 36),
            BBox::new(3.0, 2.0, 23.0, 14.0),
            BBox::new(1.0, 1.0, 34.0, 21.0),
        ),
        // gradient upscale
        (
            gradient(32, 32),
            BBox::new(8.0, 8.0, 28.0, 24.0),
            BBox::new(2.0, 2.0, 12.0, 10.0),
        ),
    ];
    for (idx, (donor, slot_box, cand_box)) in cases.iter().enumerate() {
        let source = solid(40, 40, [7, 7, 7]);
        let slot = slot_record(1, 1, *slot_box);
        let cand = slot_record(2, 2, *cand_box);
        let out = substitute(&source, &slot, donor, &cand).unwrap();

        let crop = (
            cand_box.x1 as u32,
            cand_box.y1 as u32,
            cand_box.width() as u32,
            cand_box.height() as u32,
        );
        let (sx, sy) = (slot_box.x1 as u32, slot_box.y1 as u32);
        let (sw, sh) = (slot_box.width() as u32, slot_box.height() as u32);
        let reference = reference_bilinear(donor, crop, sw, sh);
        for y in 0..sh {
            for x in 0..sw {
                let got = out.get_pixel(sx + x, sy + y).0;
                let want = reference.get_pixel(x, y).0;
                for c in 0..3 {
                    let diff = (i16::from(got[c]) - i16::from(want[c])).abs();
                    assert!(diff <= 1, "case {idx}, pixel ({x},{y}), channel {c}: diff {diff}");
                }
            }
        }
    }
    println!("criterion 6: PASS - substitution within 1 intensity level of the reference bilinear on 3 donors");
}

#[test]
fn c07_flip_involution_is_exact_on_every_fixture_image() {
    let fixture = augmentation_fixture(20);
    let by_image = fixture.dataset.instances_by_image();
    let mut checked = 0usize;
    for record in &fixture.dataset.images {
        let pixels = &fixture.images[&record.id];
        let anns: Vec<Instance> = by_image[&record.id].iter().map(|&i| i.clone()).collect();
        let (once, anns_once) = flip_horizontal(pixels, &anns);
        let (twice, anns_twice) = flip_horizontal(&once, &anns_once);
        assert_eq!(&twice, pixels, "pixels of image {}", record.id);
        assert_eq!(anns_twice, anns, "annotations of image {}", record.id);
        checked += 1;
    }
    println!("criterion 7: PASS - flip..flip is the identity on {checked} fixture images");
}

fn snapshot_outputs(out: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for name in ["plan.json", "annotations.json", "report.json"] {
        files.insert(name.to_string(), std::fs::read(out.join(name)).unwrap());
    }
    for entry in std::fs::read_dir(out.join("images")).unwrap() {
        let entry = entry.unwrap();
        files.insert(
            format!("images/{}", entry.file_name().to_string_lossy()),
            std::fs::read(entry.path()).unwrap(),
        );
    }
    files
}

#[test]
fn c08_augment_is_byte_identical_across_runs_and_jobs() {
    let fixture = augmentation_fixture(12);
    let dir = tempfile::tempdir().unwrap();
    let paths = fixture.write_to(dir.path());

    let run = |label: &str, jobs: &str| {
        let out = dir.path().join(label);
        let output = Command::new(env!("CARGO_BIN_EXE_slotaug"))
            .args([
                "augment",
                "--annotations",
                paths.annotations.to_str().unwrap(),
                "--images",
                paths.image_root.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "42",
                "--jobs",
                jobs,
            ])
            .output()
            .expect("binary runs");
        assert!(output.status.success(), "{output:?}");
        snapshot_outputs(&out)
    };

    let first = run("run1", "1");
    let second = run("run2", "1");
    let eight = run("run8", "8");
    assert_eq!(first, second, "same seed, repeated run");
    assert_eq!(first, eight, "--jobs 1 vs --jobs 8");
    assert!(first.keys().any(|k| k.starts_with("images/")));
    println!(
        "criterion 8: PASS - {} output files byte-identical across reruns and thread counts",
        first.len()
    );
}

/// Fully independent recomputation of the mini-dataset records: its own
/// category order, its own isolation check, its own metric arithmetic.
/// Negated band comparisons are kept verbatim so the oracle's inclusion
/// predicate is the literal complement of the implementation's.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn brute_force_records(source: &Dataset, cfg: &FilterConfig) -> Vec<StepRecord> {
    // Category order: ascending (instance count, id).
    let mut counts: BTreeMap<u64, u64> = source.categories.iter().map(|c| (c.id, 0)).collect();
    for inst in &source.instances {
        *counts.get_mut(&inst.category_id).unwrap() += 1;
    }
    let mut order: Vec<u64> = counts.keys().copied().collect();
    order.sort_by_key(|id| (counts[id], *id));

    // Slots per image via the interval-overlap formulation.
    let mut slots_by_image: BTreeMap<u64, Vec<(u64, BBox)>> = BTreeMap::new();
    let mut boxes_by_image: BTreeMap<u64, Vec<&Instance>> = BTreeMap::new();
    for inst in &source.instances {
        boxes_by_image.entry(inst.image_id).or_default().push(inst);
    }
    for (image_id, group) in &boxes_by_image {
        for inst in group {
            let isolated = !inst.is_crowd
                && group
                    .iter()
                    .all(|o| o.id == inst.id || !interval_overlap(&inst.bbox, &o.bbox));
            if isolated {
                slots_by_image
                    .entry(*image_id)
                    .or_default()
                    .push((inst.id, inst.bbox));
            }
        }
    }

    struct BruteSlot {
        instance_id: u64,
        image_id: u64,
        category_id: u64,
        area: f64,
        ratio: f64,
    }

    let category_of: BTreeMap<u64, u64> = source.instances.iter().map(|i| (i.id, i.category_id)).collect();
    let mut taken: BTreeSet<u64> = BTreeSet::new();
    let mut records = Vec::new();

    for (step_index, &category_id) in order.iter().enumerate() {
        for inst in &source.instances {
            if inst.category_id == category_id && !taken.contains(&inst.image_id) {
                taken.insert(inst.image_id);
            }
        }
        // Recompute everything about the cumulative selection from scratch.
        let images: Vec<u64> = taken.iter().copied().collect();
        let selected: Vec<&Instance> = source
            .instances
            .iter()
            .filter(|i| taken.contains(&i.image_id))
            .collect();

        let mut per_cat: BTreeMap<u64, u64> = source.categories.iter().map(|c| (c.id, 0)).collect();
        for inst in &selected {
            *per_cat.get_mut(&inst.category_id).unwrap() += 1;
        }
        let n = per_cat.len() as f64;
        let mut sum = 0.0f64;
        for &c in per_cat.values() {
            sum += c as f64;
        }
        let mean = sum / n;
        let mut var_acc = 0.0f64;
        for &c in per_cat.values() {
            let d = c as f64 - mean;
            var_acc += d * d;
        }
        let std = (var_acc / n).sqrt();

        let mut slots: Vec<BruteSlot> = Vec::new();
        for image_id in &images {
            for (instance_id, bbox) in slots_by_image.get(image_id).into_iter().flatten() {
                let w = bbox.x2 - bbox.x1;
                let h = bbox.y2 - bbox.y1;
                slots.push(BruteSlot {
                    instance_id: *instance_id,
                    image_id: *image_id,
                    category_id: category_of[instance_id],
                    area: w * h,
                    ratio: w / h,
                });
            }
        }

        let mut capacity = 0u64;
        for s in &slots {
            for c in &slots {
                if c.instance_id == s.instance_id {
                    continue;
                }
                if cfg.exclude_same_image && c.image_id == s.image_id {
                    continue;
                }
                if cfg.ratio_filter && !((c.ratio - s.ratio).abs() <= cfg.ratio_tolerance * s.ratio) {
                    continue;
                }
                if cfg.scale_filter && !((c.area - s.area).abs() <= cfg.scale_tolerance * s.area) {
                    continue;
                }
                if c.category_id != s.category_id {
                    continue;
                }
                capacity += 1;
            }
        }

        records.push(StepRecord {
            step_index,
            category_added: category_id,
            cumulative_images: images.len() as u64,
            cumulative_instances: selected.len() as u64,
            slot_amount: slots.len() as u64,
            avg_slots_per_image: if images.is_empty() {
                0.0
            } else {
                slots.len() as f64 / images.len() as f64
            },
            instance_std: std,
            all_categories_included: per_cat.values().all(|&c| c > 0),
            capacity,
        });
    }
    records
}

#[test]
fn c09_mini_dataset_records_match_the_brute_force_oracle() {
    let start = Instant::now();
    let source = mini_fixture();
    assert_eq!(source.categories.len(), 10);
    assert_eq!(source.images.len(), 60);

    let db = build_slot_database(&source).unwrap();
    let cfg = FilterConfig::default();
    let result = build_mini_dataset(&source, &db, &cfg).unwrap();

    let expected = brute_force_records(&source, &cfg);
    assert_eq!(result.records.len(), expected.len());
    for (got, want) in result.records.iter().zip(&expected) {
        assert_eq!(got, want, "step {}", want.step_index);
    }

    // Partition: increments are disjoint and cover the annotated images.
    let sets = increment_image_sets(&result);
    let mut union: BTreeSet<u64> = BTreeSet::new();
    for set in &sets {
        assert!(union.is_disjoint(set));
        union.extend(set);
    }
    let annotated: BTreeSet<u64> = source.instances.iter().map(|i| i.image_id).collect();
    assert_eq!(union, annotated);

    // Coverage monotonicity.
    let mut covered = false;
    for record in &result.records {
        if covered {
            assert!(record.all_categories_included);
        }
        covered |= record.all_categories_included;
    }

    // The selected cumulative datasets are valid standalone files.
    let mid = select_step(&result, 4).unwrap();
    mid.validate().unwrap();

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "criterion 9: PASS - {} step records equal the brute-force oracle in {elapsed:?}",
        expected.len()
    );
}

#[test]
#[ignore = "integration scale: set SLOTAUG_COCO_ANNOTATIONS to a combined MS-COCO 2014 train+valminusminival instances file"]
fn c10_integration_scale_checks_on_real_ms_coco() {
    let path = std::env::var("SLOTAUG_COCO_ANNOTATIONS")
        .expect("SLOTAUG_COCO_ANNOTATIONS must point at the combined annotations file");
    let bytes = std::fs::read(&path).expect("read annotations");
    let dataset = parse_dataset(&bytes).expect("parse annotations");
    let db = build_slot_database(&dataset).unwrap();

    // Table tallies: person and hair drier.
    let rows = category_stats(&dataset, &db);
    let person = rows.iter().find(|r| r.name == "person").unwrap();
    assert_eq!((person.image_count, person.instance_count), (64_115, 262_465));
    let drier = rows.iter().find(|r| r.name == "hair drier").unwrap();
    assert_eq!((drier.image_count, drier.instance_count), (189, 198));

    // Mini builder at step 19 (the 20th category).
    let result = build_mini_dataset(&dataset, &db, &FilterConfig::default()).unwrap();
    let record = &result.records[19];
    assert_eq!(record.cumulative_images, 10_436);
    assert_eq!(record.cumulative_instances, 73_653);

    // Ratio sanity: ~8.8% of images, ~8.6% of instances.
    let image_pct = 100.0 * record.cumulative_images as f64 / dataset.images.len() as f64;
    let instance_pct = 100.0 * record.cumulative_instances as f64 / dataset.instances.len() as f64;
    assert!((image_pct - 8.8).abs() < 0.1, "image ratio {image_pct}%");
    assert!((instance_pct - 8.6).abs() < 0.1, "instance ratio {instance_pct}%");

    // Cars plan: ~3,262 generated images within +/-5%.
    let table = CategoryTable::new(&dataset.categories);
    let car = dataset.category_by_name("car").unwrap().id;
    let plan = build_plan(
        &db,
        &TargetSelector::Categories(vec![car]),
        &FilterConfig {
            seed: 42,
            ..FilterConfig::default()
        },
        &table,
    )
    .unwrap();
    let images: BTreeSet<u64> = plan.assignments.iter().map(|a| a.slot.image_id).collect();
    let count = images.len() as f64;
    assert!(
        (count - 3_262.0).abs() <= 3_262.0 * 0.05,
        "generated-image count {count} outside 3262 +/- 5%"
    );
    println!("criterion 10: PASS - integration tallies, mini step 19 and cars plan size all reproduced");
}
