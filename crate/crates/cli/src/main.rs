//! slotaug: augment object-detection datasets by substituting isolated
//! foreground objects (slots) with filtered candidate foregrounds.

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::FileConfig;
use slotaug::coco::{
    self, load_image, parse_dataset_with, CategoryTable, Dataset, ImageRecord, Instance,
    InvalidBoxPolicy, ParseOptions, Parsed,
};
use slotaug::compositor::{self, ExecuteOptions};
use slotaug::matcher::{self, CategoryMode, FilterConfig, TargetSelector};
use slotaug::mini;
use slotaug::slots::{self, SlotDatabase};
use slotaug::stats;

#[derive(Parser)]
#[command(
    name = "slotaug",
    about = "Slot-based augmentation toolkit for object-detection datasets",
    version
)]
struct Cli {
    /// Optional TOML config file; command-line flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker thread count (default: all cores). Outputs are identical for
    /// any value >= 1.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse annotations, build the slot database and write the sidecar.
    Init(InitArgs),
    /// Print per-category dataset statistics.
    Stats(StatsArgs),
    /// Build an augmentation plan and write it as JSON.
    Plan(PlanArgs),
    /// Build (or load) a plan, execute it and write images + annotations.
    Augment(AugmentArgs),
    /// Run the greedy mini-dataset builder and emit per-step records.
    Minify(MinifyArgs),
    /// Emit horizontally flipped copies of the (optionally filtered) images.
    Flip(FlipArgs),
}

#[derive(Args)]
struct InitArgs {
    /// COCO-style annotation file.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Output path of the slot-database sidecar.
    #[arg(long)]
    slot_db: Option<PathBuf>,
    /// Skip annotations with unusable bboxes instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Existing sidecar to reuse; the database is rebuilt when absent.
    #[arg(long)]
    slot_db: Option<PathBuf>,
    /// Optional output directory for category_stats.csv / .json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args, Clone)]
struct MatchArgs {
    /// Target category name; repeat for several categories.
    #[arg(long)]
    category: Vec<String>,
    /// Target supercategory name (mutually exclusive with --category).
    #[arg(long)]
    supercategory: Option<String>,
    /// Aspect-ratio tolerance as a fraction.
    #[arg(long)]
    ratio_tol: Option<f64>,
    /// Scale (area) tolerance as a fraction.
    #[arg(long)]
    scale_tol: Option<f64>,
    /// Category filter mode: same-category, same-supercategory or any.
    #[arg(long)]
    category_mode: Option<String>,
    /// Seed for deterministic candidate selection.
    #[arg(long)]
    seed: Option<u64>,
    /// Allow donors from the slot's own image.
    #[arg(long)]
    include_same_image: bool,
    /// Ablation: disable the aspect-ratio filter.
    #[arg(long)]
    no_ratio_filter: bool,
    /// Ablation: disable the scale filter.
    #[arg(long)]
    no_scale_filter: bool,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    slot_db: Option<PathBuf>,
    /// Output directory (plan.json is written here).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
    #[command(flatten)]
    matching: MatchArgs,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    slot_db: Option<PathBuf>,
    /// Image root directory (source pixels are read from here).
    #[arg(long)]
    images: Option<PathBuf>,
    /// Output directory (images/, annotations.json, plan.json, report.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Execute an existing plan file instead of building one.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Emit one generated image per assignment instead of per source image.
    #[arg(long)]
    emit_per_slot: bool,
    #[arg(long)]
    lenient: bool,
    #[command(flatten)]
    matching: MatchArgs,
}

#[derive(Args)]
struct MinifyArgs {
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    slot_db: Option<PathBuf>,
    /// Output directory (records.csv, optionally mini_annotations.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Materialize the cumulative dataset through this step index.
    #[arg(long)]
    select_step: Option<usize>,
    #[arg(long)]
    lenient: bool,
    #[command(flatten)]
    matching: MatchArgs,
}

#[derive(Args)]
struct FlipArgs {
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    /// Output directory (images/, annotations.json, report.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to images containing this category; repeatable.
    #[arg(long)]
    category: Vec<String>,
    /// Restrict to images containing this supercategory.
    #[arg(long)]
    supercategory: Option<String>,
    #[arg(long)]
    lenient: bool,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_ref())?;
    if let Some(jobs) = cli.jobs.or(file.jobs) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("initializing worker pool")?;
    }

    match cli.command {
        Command::Init(args) => cmd_init(args, &file),
        Command::Stats(args) => cmd_stats(args, &file),
        Command::Plan(args) => cmd_plan(args, &file),
        Command::Augment(args) => cmd_augment(args, &file),
        Command::Minify(args) => cmd_minify(args, &file),
        Command::Flip(args) => cmd_flip(args, &file),
    }
}

fn require(path: Option<PathBuf>, fallback: Option<&PathBuf>, flag: &str) -> anyhow::Result<PathBuf> {
    path.or_else(|| fallback.cloned())
        .with_context(|| format!("--{flag} is required (flag or config file)"))
}

fn load_annotations(path: &Path, lenient: bool) -> anyhow::Result<Dataset> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading annotations {}", path.display()))?;
    let options = ParseOptions {
        invalid_boxes: if lenient {
            InvalidBoxPolicy::Skip
        } else {
            InvalidBoxPolicy::Fail
        },
    };
    let Parsed { dataset, skipped } = parse_dataset_with(&bytes, &options)
        .with_context(|| format!("parsing annotations {}", path.display()))?;
    for skip in &skipped {
        eprintln!(
            "warning: skipped annotation {}: {}",
            skip.annotation_id, skip.reason
        );
    }
    Ok(dataset)
}

/// Loads the sidecar when it exists, otherwise builds the database from the
/// dataset.
fn load_or_build_db(dataset: &Dataset, sidecar: Option<&PathBuf>) -> anyhow::Result<SlotDatabase> {
    if let Some(path) = sidecar {
        if path.exists() {
            return slots::load_slot_db(path)
                .with_context(|| format!("loading slot database {}", path.display()));
        }
    }
    Ok(slots::build_slot_database(dataset)?)
}

fn resolve_target(
    categories: &[String],
    supercategory: Option<&String>,
    dataset: &Dataset,
) -> anyhow::Result<TargetSelector> {
    if !categories.is_empty() && supercategory.is_some() {
        bail!("--category and --supercategory are mutually exclusive");
    }
    if let Some(name) = supercategory {
        let known: BTreeSet<&str> = dataset
            .categories
            .iter()
            .map(|c| c.supercategory.as_str())
            .collect();
        if !known.contains(name.as_str()) {
            bail!(
                "unknown supercategory '{}'; valid supercategories: {}",
                name,
                known.into_iter().collect::<Vec<_>>().join(", ")
            );
        }
        return Ok(TargetSelector::Supercategory(name.clone()));
    }
    if categories.is_empty() {
        return Ok(TargetSelector::All);
    }
    let mut ids = Vec::new();
    for name in categories {
        match dataset.category_by_name(name) {
            Some(cat) => ids.push(cat.id),
            None => bail!(
                "unknown category '{}'; valid categories: {}",
                name,
                dataset
                    .categories
                    .iter()
                    .map(|c| c.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }
    }
    Ok(TargetSelector::Categories(ids))
}

fn build_filter_config(
    matching: &MatchArgs,
    file: &FileConfig,
    seed_required: bool,
) -> anyhow::Result<FilterConfig> {
    let defaults = FilterConfig::default();
    let seed = match matching.seed.or(file.seed) {
        Some(seed) => seed,
        None if seed_required => bail!("--seed is required for deterministic plans"),
        None => 0,
    };
    let category_mode = match matching
        .category_mode
        .as_ref()
        .or(file.category_mode.as_ref())
    {
        Some(text) => text.parse::<CategoryMode>()?,
        None => defaults.category_mode,
    };
    let cfg = FilterConfig {
        ratio_tolerance: matching
            .ratio_tol
            .or(file.ratio_tol)
            .unwrap_or(defaults.ratio_tolerance),
        scale_tolerance: matching
            .scale_tol
            .or(file.scale_tol)
            .unwrap_or(defaults.scale_tolerance),
        category_mode,
        exclude_same_image: !matching.include_same_image,
        seed,
        ratio_filter: !matching.no_ratio_filter,
        scale_filter: !matching.no_scale_filter,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_init(args: InitArgs, file: &FileConfig) -> anyhow::Result<()> {
    let annotations = require(args.annotations, file.annotations.as_ref(), "annotations")?;
    let slot_db = require(args.slot_db, file.slot_db.as_ref(), "slot-db")?;
    let lenient = args.lenient || file.lenient.unwrap_or(false);

    let dataset = load_annotations(&annotations, lenient)?;
    let db = slots::build_slot_database(&dataset)?;
    if let Some(parent) = slot_db.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    slots::save_slot_db(&db, &slot_db)?;
    println!(
        "{} images, {} instances, {} slots -> {}",
        dataset.images.len(),
        dataset.instances.len(),
        db.len(),
        slot_db.display()
    );
    Ok(())
}

fn cmd_stats(args: StatsArgs, file: &FileConfig) -> anyhow::Result<()> {
    let annotations = require(args.annotations, file.annotations.as_ref(), "annotations")?;
    let lenient = args.lenient || file.lenient.unwrap_or(false);
    let dataset = load_annotations(&annotations, lenient)?;
    let db = load_or_build_db(&dataset, args.slot_db.as_ref().or(file.slot_db.as_ref()))?;

    let rows = stats::category_stats(&dataset, &db);
    print!("{}", stats::render_category_table(&rows));
    println!(
        "total: {} images, {} instances, {} slots",
        dataset.images.len(),
        dataset.instances.len(),
        db.len()
    );

    if let Some(out) = args.out.or_else(|| file.out.clone()) {
        std::fs::create_dir_all(&out)?;
        let mut writer = csv::Writer::from_path(out.join("category_stats.csv"))?;
        for row in &rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
        std::fs::write(
            out.join("category_stats.json"),
            serde_json::to_vec_pretty(&rows)?,
        )?;
        println!("reports written to {}", out.display());
    }
    Ok(())
}

fn cmd_plan(args: PlanArgs, file: &FileConfig) -> anyhow::Result<()> {
    let annotations = require(args.annotations, file.annotations.as_ref(), "annotations")?;
    let out = require(args.out, file.out.as_ref(), "out")?;
    let lenient = args.lenient || file.lenient.unwrap_or(false);

    let dataset = load_annotations(&annotations, lenient)?;
    let db = load_or_build_db(&dataset, args.slot_db.as_ref().or(file.slot_db.as_ref()))?;
    let mut categories = args.matching.category.clone();
    if categories.is_empty() {
        categories = file.category.clone().unwrap_or_default();
    }
    let supercategory = args
        .matching
        .supercategory
        .clone()
        .or_else(|| file.supercategory.clone());
    let target = resolve_target(&categories, supercategory.as_ref(), &dataset)?;
    let cfg = build_filter_config(&args.matching, file, true)?;

    let table = CategoryTable::new(&dataset.categories);
    let plan = matcher::build_plan(&db, &target, &cfg, &table)?;

    std::fs::create_dir_all(&out)?;
    let plan_path = out.join("plan.json");
    matcher::save_plan(&plan, &plan_path)?;
    println!(
        "plan: {} assignments, {} slots skipped (no candidates) -> {}",
        plan.assignments.len(),
        plan.skipped.len(),
        plan_path.display()
    );
    Ok(())
}

fn cmd_augment(args: AugmentArgs, file: &FileConfig) -> anyhow::Result<()> {
    let annotations = require(args.annotations, file.annotations.as_ref(), "annotations")?;
    let images = require(args.images, file.images.as_ref(), "images")?;
    let out = require(args.out, file.out.as_ref(), "out")?;
    let lenient = args.lenient || file.lenient.unwrap_or(false);
    let emit_per_slot = args.emit_per_slot || file.emit_per_slot.unwrap_or(false);

    let dataset = load_annotations(&annotations, lenient)?;
    let db = load_or_build_db(&dataset, args.slot_db.as_ref().or(file.slot_db.as_ref()))?;
    std::fs::create_dir_all(&out)?;

    let plan = match &args.plan {
        Some(path) => matcher::load_plan(path, &db)?,
        None => {
            let mut categories = args.matching.category.clone();
            if categories.is_empty() {
                categories = file.category.clone().unwrap_or_default();
            }
            let supercategory = args
                .matching
                .supercategory
                .clone()
                .or_else(|| file.supercategory.clone());
            let target = resolve_target(&categories, supercategory.as_ref(), &dataset)?;
            let cfg = build_filter_config(&args.matching, file, true)?;
            let table = CategoryTable::new(&dataset.categories);
            let plan = matcher::build_plan(&db, &target, &cfg, &table)?;
            matcher::save_plan(&plan, &out.join("plan.json"))?;
            plan
        }
    };

    let options = ExecuteOptions { emit_per_slot };
    let image_out = out.join("images");
    let delta = compositor::execute_plan(&plan, &dataset, &images, &image_out, &options)?;

    coco::write_dataset(&delta.to_dataset(&dataset), &out.join("annotations.json"))?;
    let report = stats::run_report(&plan, &delta);
    std::fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;

    println!(
        "augmented {} images ({} assignments applied, {} slots skipped at planning, {} execution failures)",
        delta.images.len(),
        delta.provenance.iter().map(|p| p.pairs.len()).sum::<usize>(),
        plan.skipped.len(),
        delta.failures.len()
    );
    println!(
        "originals targeted: {}, proportion of originals: {}%",
        report.summary.original_images,
        stats::format_percent(report.summary.original_proportion)
    );
    for failure in &delta.failures {
        eprintln!(
            "warning: image {} slot {:?}: {}",
            failure.image_id, failure.slot_instance_id, failure.message
        );
    }
    Ok(())
}

fn cmd_minify(args: MinifyArgs, file: &FileConfig) -> anyhow::Result<()> {
    let annotations = require(args.annotations, file.annotations.as_ref(), "annotations")?;
    let out = require(args.out, file.out.as_ref(), "out")?;
    let lenient = args.lenient || file.lenient.unwrap_or(false);

    let dataset = load_annotations(&annotations, lenient)?;
    let db = load_or_build_db(&dataset, args.slot_db.as_ref().or(file.slot_db.as_ref()))?;
    let cfg = build_filter_config(&args.matching, file, false)?;

    let result = mini::build_mini_dataset(&dataset, &db, &cfg)?;
    std::fs::create_dir_all(&out)?;
    let csv_path = out.join("records.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    for record in &result.records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    println!("{} step records -> {}", result.records.len(), csv_path.display());

    if let Some(step) = args.select_step.or(file.select_step) {
        let selected = mini::select_step(&result, step)?;
        let path = out.join("mini_annotations.json");
        coco::write_dataset(&selected, &path)?;
        println!(
            "step {}: {} images, {} instances -> {}",
            step,
            selected.images.len(),
            selected.instances.len(),
            path.display()
        );
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct FlipReport {
    flipped_images: u64,
    failures: Vec<String>,
}

fn cmd_flip(args: FlipArgs, file: &FileConfig) -> anyhow::Result<()> {
    let annotations = require(args.annotations, file.annotations.as_ref(), "annotations")?;
    let images = require(args.images, file.images.as_ref(), "images")?;
    let out = require(args.out, file.out.as_ref(), "out")?;
    let lenient = args.lenient || file.lenient.unwrap_or(false);

    let dataset = load_annotations(&annotations, lenient)?;
    let target = resolve_target(&args.category, args.supercategory.as_ref(), &dataset)?;
    let table = CategoryTable::new(&dataset.categories);

    let by_image = dataset.instances_by_image();
    let selected: Vec<&ImageRecord> = dataset
        .images
        .iter()
        .filter(|img| match &target {
            TargetSelector::All => true,
            _ => by_image[&img.id].iter().any(|inst| {
                matches!(
                    target.matches_category(inst.category_id, &table),
                    Ok(true)
                )
            }),
        })
        .collect();

    let image_out = out.join("images");
    std::fs::create_dir_all(&image_out)?;

    enum FlipOutcome {
        Done {
            record: ImageRecord,
            annotations: Vec<Instance>,
        },
        Failed(String),
    }

    let outcomes: Vec<FlipOutcome> = selected
        .par_iter()
        .map(|record| {
            let pixels = match load_image(record, &images) {
                Ok(p) => p,
                Err(err) => return FlipOutcome::Failed(format!("image {}: {err}", record.id)),
            };
            let anns: Vec<Instance> = by_image[&record.id].iter().map(|&i| i.clone()).collect();
            let (flipped, flipped_anns) = compositor::flip_horizontal(&pixels, &anns);
            let stem = Path::new(&record.file_name)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| record.file_name.clone());
            let file_name = format!("{stem}_flip.png");
            if let Err(err) = coco::save_png(&flipped, &image_out.join(&file_name)) {
                return FlipOutcome::Failed(format!("image {}: {err}", record.id));
            }
            FlipOutcome::Done {
                record: ImageRecord {
                    id: 0,
                    file_name,
                    width: record.width,
                    height: record.height,
                    extra: Default::default(),
                },
                annotations: flipped_anns,
            }
        })
        .collect();

    let mut delta = Dataset {
        categories: dataset.categories.clone(),
        ..Dataset::default()
    };
    let mut failures = Vec::new();
    let mut next_image_id = dataset.max_image_id() + 1;
    let mut next_instance_id = dataset.max_instance_id() + 1;
    for outcome in outcomes {
        match outcome {
            FlipOutcome::Failed(message) => failures.push(message),
            FlipOutcome::Done {
                mut record,
                annotations,
            } => {
                record.id = next_image_id;
                next_image_id += 1;
                for mut inst in annotations {
                    inst.id = next_instance_id;
                    inst.image_id = record.id;
                    next_instance_id += 1;
                    delta.instances.push(inst);
                }
                delta.images.push(record);
            }
        }
    }

    coco::write_dataset(&delta, &out.join("annotations.json"))?;
    let report = FlipReport {
        flipped_images: delta.images.len() as u64,
        failures: failures.clone(),
    };
    std::fs::write(out.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    println!(
        "flipped {} of {} selected images -> {}",
        delta.images.len(),
        selected.len(),
        out.display()
    );
    for failure in &failures {
        eprintln!("warning: {failure}");
    }
    if !selected.is_empty() && delta.images.is_empty() {
        bail!("all {} flip operations failed", selected.len());
    }
    Ok(())
}
