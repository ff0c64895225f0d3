//! Subcommand implementations. Each returns `CliError` carrying the exit
//! code class: 2 for bad input, 3 for pipeline failures.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use linescan::config::{ConfigError, GlobalConfig};
use linescan::defects::{analyze_roi, classify, DefectError, DefectReport, StandardLibrary};
use linescan::evaluation::{evaluate_dataset, EvalError, EvalManifest, Split};
use linescan::imaging::{
    crop_roi, load_annotations, load_image, rgb_to_lab, save_id_png, save_paletted_png, ImagingError, RgbImage,
    RoiAnnotation,
};
use linescan::muis::segment;
use linescan::slic::{roi_superpixel_count, slic_segment, slic_segment_k};
use linescan::synthgen::{write_fixtures, ANNOTATIONS_FILE, STANDARDS_DIR};
use serde::Serialize;

use crate::overlay;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_PIPELINE: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Pipeline(_) => EXIT_PIPELINE,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Pipeline(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ImagingError> for CliError {
    fn from(e: ImagingError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DefectError> for CliError {
    fn from(e: DefectError) -> Self {
        match e {
            DefectError::UnknownDeviceClass(_)
            | DefectError::Imaging(_)
            | DefectError::InvalidConfig(_)
            | DefectError::Library(_) => CliError::Input(e.to_string()),
            _ => CliError::Pipeline(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Imaging(_) | EvalError::MissingTruth(_) => CliError::Input(e.to_string()),
            _ => CliError::Pipeline(e.to_string()),
        }
    }
}

fn pipeline(e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline(e.to_string())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

/// Pretty JSON with a trailing newline. Struct fields keep declaration
/// order and maps are `BTreeMap`s, so the bytes are stable.
pub fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("output types serialize") + "\n"
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    fs::write(path, to_json(value)).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

/// Annotations plus the directory their image paths are relative to.
struct Dataset {
    base: PathBuf,
    entries: Vec<RoiAnnotation>,
    images: BTreeMap<String, RgbImage>,
}

impl Dataset {
    fn load(annotations: &Path) -> Result<Self, CliError> {
        let entries = load_annotations(annotations)?;
        let base = annotations.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            base,
            entries,
            images: BTreeMap::new(),
        })
    }

    fn image(&mut self, rel: &str) -> Result<&RgbImage, CliError> {
        if !self.images.contains_key(rel) {
            let img = load_image(self.base.join(rel))?;
            self.images.insert(rel.to_string(), img);
        }
        Ok(&self.images[rel])
    }
}

fn roi_name(index: usize, suffix: &str) -> String {
    format!("roi_{index:03}_{suffix}.png")
}

#[derive(Serialize)]
struct SuperpixelSidecar {
    count: usize,
    /// (L, a, b, x, y) per superpixel.
    centers: Vec<[f64; 5]>,
}

pub fn superpixels(image: &Path, out_dir: &Path, cfg: &GlobalConfig) -> Result<(), CliError> {
    let img = load_image(image)?;
    let sp = slic_segment(&rgb_to_lab(&img), &cfg.slic).map_err(pipeline)?;
    create_dir(out_dir)?;
    save_id_png(sp.width, sp.height, &sp.labels, out_dir.join("superpixels.png"))?;
    write_json(
        &out_dir.join("superpixels.json"),
        &SuperpixelSidecar {
            count: sp.count(),
            centers: sp.centers.clone(),
        },
    )?;
    println!("{} superpixels", sp.count());
    Ok(())
}

#[derive(Serialize)]
struct SegmentSummary {
    index: usize,
    image: String,
    superpixels: usize,
    labels: usize,
    iterations_run: usize,
    final_loss: f64,
    label_counts: Vec<usize>,
}

pub fn segment_rois(annotations: &Path, out_dir: &Path, cfg: &GlobalConfig) -> Result<(), CliError> {
    let mut data = Dataset::load(annotations)?;
    create_dir(out_dir)?;
    let mut summaries = Vec::new();
    for (index, ann) in data.entries.clone().iter().enumerate() {
        let img = data.image(&ann.image_path)?;
        let roi = crop_roi(img, ann.bbox)?;
        let k = roi_superpixel_count(cfg.slic.k_init, roi.pixel_count(), img.pixel_count());
        let sp = slic_segment_k(&rgb_to_lab(&roi), k, &cfg.slic).map_err(pipeline)?;
        let out = segment(&roi, &sp, &cfg.muis_config()).map_err(pipeline)?;
        let map = &out.labels;
        save_paletted_png(map.width, map.height, &map.labels, out_dir.join(roi_name(index, "labels")))?;
        println!(
            "{index:03} {} {} labels after {} iterations",
            ann.image_path, map.count, out.iterations_run
        );
        summaries.push(SegmentSummary {
            index,
            image: ann.image_path.clone(),
            superpixels: sp.count(),
            labels: map.count,
            iterations_run: out.iterations_run,
            final_loss: out.final_loss,
            label_counts: out.label_counts.clone(),
        });
    }
    write_json(&out_dir.join("segment.json"), &summaries)
}

#[derive(Serialize)]
struct HierarchySummary {
    index: usize,
    image: String,
    i_max: usize,
    /// Region areas per layer, in region order.
    layers: BTreeMap<usize, Vec<usize>>,
}

pub fn hierarchy_rois(annotations: &Path, out_dir: &Path, cfg: &GlobalConfig) -> Result<(), CliError> {
    let mut data = Dataset::load(annotations)?;
    create_dir(out_dir)?;
    let mut summaries = Vec::new();
    for (index, ann) in data.entries.clone().iter().enumerate() {
        let img = data.image(&ann.image_path)?;
        let a = analyze_roi(img, ann, cfg)?;
        let h = &a.hierarchy;
        let mut layers = BTreeMap::new();
        for (&layer, regions) in &h.layers {
            let mut ids = vec![0u32; (h.width * h.height) as usize];
            for r in regions {
                for p in r.mask.points() {
                    ids[(p.y as u32 * h.width + p.x as u32) as usize] = (r.index - 1) as u32;
                }
            }
            save_paletted_png(h.width, h.height, &ids, out_dir.join(roi_name(index, &format!("layer{layer}"))))?;
            layers.insert(layer, regions.iter().map(|r| r.area()).collect());
        }
        println!("{index:03} {} i_max={}", ann.image_path, h.i_max);
        summaries.push(HierarchySummary {
            index,
            image: ann.image_path.clone(),
            i_max: h.i_max,
            layers,
        });
    }
    write_json(&out_dir.join("hierarchy.json"), &summaries)
}

pub struct ClassifyArgs<'a> {
    pub annotations: &'a Path,
    pub standards: &'a Path,
    pub out_dir: Option<&'a Path>,
    pub overlay: bool,
    pub json: bool,
}

pub fn classify_rois(args: &ClassifyArgs, cfg: &GlobalConfig) -> Result<(), CliError> {
    let library = StandardLibrary::load(args.standards)?;
    let mut data = Dataset::load(args.annotations)?;
    if let Some(dir) = args.out_dir {
        create_dir(dir)?;
    }
    let mut reports: Vec<DefectReport> = Vec::new();
    for (index, ann) in data.entries.clone().iter().enumerate() {
        let img = data.image(&ann.image_path)?;
        let report = classify(img, ann, &library, cfg)?;
        if !args.json {
            let s_c = report.scores.get(linescan::defects::RULE_COMPLETENESS).map_or(f64::NAN, |s| s.s);
            println!(
                "{index:03} {} {} {} s_c={s_c:.3}",
                ann.image_path,
                ann.device_class.as_str(),
                report.verdict.as_str()
            );
        }
        if let (true, Some(dir)) = (args.overlay, args.out_dir) {
            overlay::render(img, &report).save_png(dir.join(roi_name(index, "overlay")))?;
        }
        reports.push(report);
    }
    if args.json {
        print!("{}", to_json(&reports));
    }
    if let Some(dir) = args.out_dir {
        write_json(&dir.join("reports.json"), &reports)?;
    }
    Ok(())
}

pub struct EvaluateArgs<'a> {
    pub annotations: &'a Path,
    pub standards: &'a Path,
    pub out_dir: Option<&'a Path>,
    pub jobs: usize,
    pub split: Split,
    pub json: bool,
}

pub fn evaluate(args: &EvaluateArgs, cfg: &GlobalConfig) -> Result<(), CliError> {
    let library = StandardLibrary::load(args.standards)?;
    let entries = load_annotations(args.annotations)?;
    let base = args.annotations.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = EvalManifest::new(entries, args.split, cfg.seed)?;
    let report = evaluate_dataset(&manifest, &base, &library, cfg, args.jobs)?;
    if args.json {
        print!("{}", to_json(&report));
    } else {
        print!("{}", report.table.to_text());
        println!("evaluated {} entries, excluded {}", report.evaluated, report.excluded);
    }
    if let Some(dir) = args.out_dir {
        create_dir(dir)?;
        write_json(&dir.join("evaluation.json"), &report)?;
        fs::write(dir.join("evaluation.txt"), report.table.to_text())
            .map_err(|e| CliError::Input(format!("cannot write table: {e}")))?;
    }
    for e in report.entries.iter().filter(|e| e.error.is_some()) {
        eprintln!("entry {} ({}) failed: {}", e.index, e.image, e.error.as_deref().unwrap_or_default());
    }
    if report.excluded > 0 {
        return Err(CliError::Pipeline(format!("{} entries failed", report.excluded)));
    }
    Ok(())
}

pub fn gen_fixtures(out_dir: &Path, seed: u64) -> Result<(), CliError> {
    let anns = write_fixtures(out_dir, seed).map_err(|e| CliError::Input(e.to_string()))?;
    println!(
        "wrote {} scenes to {} (annotations {ANNOTATIONS_FILE}, standards {STANDARDS_DIR}/)",
        anns.len(),
        out_dir.display()
    );
    Ok(())
}
