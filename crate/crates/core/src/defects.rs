//! Rule-based defect classification of one ROI.
//!
//! Line ROIs are checked for completeness of the conductor and for a
//! foreign region attached to it; insulator ROIs for completeness and for
//! color normality of the matched insulator region.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::GlobalConfig;
use crate::histogram::mutual_distance;
use crate::hierarchy::{build_hierarchy, HierarchyError, Region, SegmentationHierarchy};
use crate::imaging::{
    crop_roi, load_image, load_mask, rgb_to_lab, DeviceClass, ImagingError, RgbImage, RoiAnnotation, TruthLabel,
};
use crate::mask::Mask;
use crate::muis::{segment, MuisError, SegmentOutcome};
use crate::similarity::{
    combined_similarity, max_similarity, MaxSimilarity, ShapeMeasure, SimilarityConfig, SimilarityError,
    StandardRegion, Transform, TransformedStandard,
};
use crate::slic::{roi_superpixel_count, slic_segment_k, SlicError};

/// Classification outcome; shares its vocabulary with the truth labels.
pub type Verdict = TruthLabel;

pub const RULE_COMPLETENESS: &str = "completeness";
pub const RULE_COLOR: &str = "color";
pub const RULE_FOREIGN: &str = "foreign_object";

#[derive(Debug, Error)]
pub enum DefectError {
    #[error("no standard region for device class {0}")]
    UnknownDeviceClass(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Slic(#[from] SlicError),
    #[error(transparent)]
    Muis(#[from] MuisError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("invalid rule configuration: {0}")]
    InvalidConfig(String),
    #[error("standard library: {0}")]
    Library(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub tau_complete: f64,
    pub tau_color: f64,
    /// γ of the completeness score.
    pub gamma_shape_rules: f64,
    /// γ of the color-normality score.
    pub gamma_lightning_color: f64,
    pub foreign_min_area_frac: f64,
    /// A foreign candidate must look unlike the background: its color
    /// similarity to the layer's background must not exceed this value.
    pub foreign_max_background_similarity: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            tau_complete: 0.80,
            tau_color: 0.75,
            gamma_shape_rules: 0.2,
            gamma_lightning_color: 1.0,
            foreign_min_area_frac: 0.01,
            foreign_max_background_similarity: 0.5,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), DefectError> {
        let open = |v: f64, name: &str| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(DefectError::InvalidConfig(format!("{name} must lie in (0, 1)")))
            }
        };
        let closed = |v: f64, name: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(DefectError::InvalidConfig(format!("{name} must lie in [0, 1]")))
            }
        };
        open(self.tau_complete, "tau_complete")?;
        open(self.tau_color, "tau_color")?;
        open(self.foreign_min_area_frac, "foreign_min_area_frac")?;
        closed(self.foreign_max_background_similarity, "foreign_max_background_similarity")?;
        closed(self.gamma_shape_rules, "gamma_shape_rules")?;
        closed(self.gamma_lightning_color, "gamma_lightning_color")?;
        Ok(())
    }
}

/// Inclusive: a score equal to the threshold counts as complete.
pub fn is_complete(s_c: f64, cfg: &RuleConfig) -> bool {
    s_c >= cfg.tau_complete
}

/// Standard regions keyed by device class.
#[derive(Debug, Clone, Default)]
pub struct StandardLibrary {
    pub standards: BTreeMap<DeviceClass, StandardRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardEntry {
    pub mask: PathBuf,
    pub image: PathBuf,
}

pub const STANDARDS_MANIFEST: &str = "manifest.json";

impl StandardLibrary {
    pub fn get(&self, class: DeviceClass) -> Result<&StandardRegion, DefectError> {
        self.standards
            .get(&class)
            .ok_or_else(|| DefectError::UnknownDeviceClass(class.as_str().to_string()))
    }

    pub fn insert(&mut self, standard: StandardRegion) {
        self.standards.insert(standard.device_class, standard);
    }

    /// Reads `dir/manifest.json`, which maps device classes to a binary mask
    /// PNG and an RGB image of equal size, both relative to `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, DefectError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(STANDARDS_MANIFEST);
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| DefectError::Library(format!("{}: {e}", manifest_path.display())))?;
        let entries: BTreeMap<DeviceClass, StandardEntry> =
            serde_json::from_str(&text).map_err(|e| DefectError::Library(e.to_string()))?;
        let mut lib = Self::default();
        for (class, entry) in entries {
            let image = load_image(dir.join(&entry.image))?;
            let (w, h, bits) = load_mask(dir.join(&entry.mask))?;
            if (w, h) != (image.width(), image.height()) {
                return Err(DefectError::Library(format!(
                    "{}: mask {w}x{h} does not match image {}x{}",
                    class.as_str(),
                    image.width(),
                    image.height()
                )));
            }
            let mask = Mask::from_bits(w, &bits);
            lib.insert(StandardRegion::new(class, mask, image)?);
        }
        Ok(lib)
    }
}

/// Score of one rule at its matched region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RuleScore {
    pub s: f64,
    pub layer: Option<usize>,
    pub index: Option<usize>,
    pub beta: Option<f64>,
    pub alpha_x: Option<f64>,
    pub alpha_y: Option<f64>,
}

impl RuleScore {
    fn at(s: f64, layer: usize, index: usize, t: &Transform) -> Self {
        Self {
            s,
            layer: Some(layer),
            index: Some(index),
            beta: Some(t.beta),
            alpha_x: Some(t.alpha_x),
            alpha_y: Some(t.alpha_y),
        }
    }
}

/// One evaluated rule: whether it fired and the comparison behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleRecord {
    pub rule: String,
    pub fired: bool,
    pub detail: String,
}

/// Pipeline statistics recorded for diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineStats {
    pub superpixels: usize,
    pub iterations_run: usize,
    pub labels: usize,
    pub i_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectReport {
    #[serde(flatten)]
    pub annotation: RoiAnnotation,
    pub verdict: Verdict,
    pub scores: BTreeMap<String, RuleScore>,
    pub explanation: Vec<RuleRecord>,
    pub pipeline: PipelineStats,
}

/// Verdict from the rule inputs. `s_k` is only consulted for insulators and
/// `foreign` only for lines.
pub fn decide(class: DeviceClass, s_c: f64, s_k: Option<f64>, foreign: bool, cfg: &RuleConfig) -> Verdict {
    let complete = is_complete(s_c, cfg);
    match class {
        DeviceClass::Line => {
            if foreign {
                Verdict::ForeignObject
            } else if !complete {
                Verdict::BrokenWire
            } else {
                Verdict::Normal
            }
        }
        DeviceClass::Insulator => {
            if !complete {
                Verdict::InsulatorMissing
            } else if s_k.is_some_and(|k| k < cfg.tau_color) {
                Verdict::LightningBreakage
            } else {
                Verdict::Normal
            }
        }
    }
}

/// Re-derives the verdict from the fired flags of an explanation list.
pub fn replay(class: DeviceClass, explanation: &[RuleRecord]) -> Verdict {
    let fired = |rule: &str| explanation.iter().any(|r| r.rule == rule && r.fired);
    match class {
        DeviceClass::Line if fired(RULE_FOREIGN) => Verdict::ForeignObject,
        DeviceClass::Line if fired(RULE_COMPLETENESS) => Verdict::BrokenWire,
        DeviceClass::Insulator if fired(RULE_COMPLETENESS) => Verdict::InsulatorMissing,
        DeviceClass::Insulator if fired(RULE_COLOR) => Verdict::LightningBreakage,
        _ => Verdict::Normal,
    }
}

/// A region attached to the matched device that is neither the device nor
/// the background.
#[derive(Debug, Clone, PartialEq)]
pub struct ForeignEvidence {
    pub layer: usize,
    pub index: usize,
    pub area_frac: f64,
}

/// Thresholds of the foreign-object evidence search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForeignCriteria {
    pub min_area_frac: f64,
    pub max_background_similarity: f64,
    pub hist_smoothing: f64,
}

impl ForeignCriteria {
    pub fn from_config(cfg: &GlobalConfig) -> Self {
        Self {
            min_area_frac: cfg.rules.foreign_min_area_frac,
            max_background_similarity: cfg.rules.foreign_max_background_similarity,
            hist_smoothing: cfg.similarity.hist_smoothing,
        }
    }
}

/// Scans layers 3..=i_max for a region that is 4-adjacent to and disjoint
/// from `device`, is not the layer's background (its largest
/// border-touching region), covers at least `min_area_frac` of the ROI and
/// whose mutual color similarity to that background does not exceed
/// `max_background_similarity`. Returns the first hit in layer, then index
/// order.
pub fn find_foreign_region(
    h: &SegmentationHierarchy,
    device: &Region,
    criteria: &ForeignCriteria,
) -> Result<Option<ForeignEvidence>, DefectError> {
    let roi_area = (h.width as usize * h.height as usize) as f64;
    for (&layer, regions) in h.layers.range(3..) {
        let background = regions
            .iter()
            .filter(|r| r.touches_border(h.width, h.height))
            .max_by(|a, b| a.area().cmp(&b.area()).then_with(|| b.index.cmp(&a.index)));
        for r in regions {
            if background.is_some_and(|b| b.index == r.index) || r.mask == device.mask {
                continue;
            }
            let frac = r.area() as f64 / roi_area;
            if frac < criteria.min_area_frac
                || r.mask.intersection_count(&device.mask) > 0
                || !r.mask.touches(&device.mask)
            {
                continue;
            }
            if let Some(b) = background {
                let d = mutual_distance(&r.hist, &b.hist, criteria.hist_smoothing)
                    .map_err(|e| DefectError::Similarity(e.into()))?;
                if (-d).exp() > criteria.max_background_similarity {
                    continue;
                }
            }
            return Ok(Some(ForeignEvidence {
                layer,
                index: r.index,
                area_frac: frac,
            }));
        }
    }
    Ok(None)
}

/// Intermediate products of the pipeline on one ROI.
pub struct RoiAnalysis {
    pub roi: RgbImage,
    pub superpixels: usize,
    pub segmentation: SegmentOutcome,
    pub hierarchy: SegmentationHierarchy,
}

/// SLIC, network segmentation and hierarchy for one ROI of `img`.
pub fn analyze_roi(img: &RgbImage, ann: &RoiAnnotation, cfg: &GlobalConfig) -> Result<RoiAnalysis, DefectError> {
    ann.validate()?;
    let roi = crop_roi(img, ann.bbox)?;
    let k = roi_superpixel_count(cfg.slic.k_init, roi.pixel_count(), img.pixel_count());
    let sp = slic_segment_k(&rgb_to_lab(&roi), k, &cfg.slic)?;
    let segmentation = segment(&roi, &sp, &cfg.muis_config())?;
    let hierarchy = build_hierarchy(
        &segmentation.labels,
        &roi,
        cfg.similarity.n_bins,
        cfg.similarity.hist_smoothing,
    )?;
    Ok(RoiAnalysis {
        roi,
        superpixels: sp.count(),
        segmentation,
        hierarchy,
    })
}

/// Completeness search settings derived from the rule configuration.
pub fn completeness_config(cfg: &GlobalConfig) -> SimilarityConfig {
    SimilarityConfig {
        gamma: cfg.rules.gamma_shape_rules,
        shape_measure: ShapeMeasure::Symmetric,
        ..cfg.similarity.clone()
    }
}

/// Everything the rules looked at, before the verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleInputs {
    pub completeness: MaxSimilarity,
    pub color: Option<f64>,
    pub foreign: Option<ForeignEvidence>,
}

pub fn evaluate_rules(
    h: &SegmentationHierarchy,
    class: DeviceClass,
    standard: &StandardRegion,
    cfg: &GlobalConfig,
) -> Result<RuleInputs, DefectError> {
    let completeness = max_similarity(h, standard, &completeness_config(cfg))?;
    let region = &h.regions_at_layer(completeness.layer)?[completeness.index - 1];
    let (color, foreign) = match class {
        DeviceClass::Insulator => {
            let color_cfg = SimilarityConfig {
                gamma: cfg.rules.gamma_lightning_color,
                shape_measure: ShapeMeasure::Symmetric,
                ..cfg.similarity.clone()
            };
            let ts = TransformedStandard::new(standard, completeness.transform, cfg.similarity.n_bins)?;
            (Some(combined_similarity(region, &ts, &color_cfg)?.s), None)
        }
        DeviceClass::Line => (None, find_foreign_region(h, region, &ForeignCriteria::from_config(cfg))?),
    };
    Ok(RuleInputs {
        completeness,
        color,
        foreign,
    })
}

fn report_from(ann: &RoiAnnotation, inputs: &RuleInputs, stats: PipelineStats, rules: &RuleConfig) -> DefectReport {
    let class = ann.device_class;
    let c = &inputs.completeness;
    let mut scores = BTreeMap::new();
    let mut explanation = Vec::new();
    scores.insert(
        RULE_COMPLETENESS.to_string(),
        RuleScore::at(c.score.s, c.layer, c.index, &c.transform),
    );
    explanation.push(RuleRecord {
        rule: RULE_COMPLETENESS.into(),
        fired: !is_complete(c.score.s, rules),
        detail: format!(
            "s_c = {:.4} at layer {} region {} vs tau_complete {:.4}",
            c.score.s, c.layer, c.index, rules.tau_complete
        ),
    });
    match class {
        DeviceClass::Line => {
            let f = inputs.foreign.as_ref();
            scores.insert(
                RULE_FOREIGN.to_string(),
                RuleScore {
                    s: f.map_or(0.0, |f| f.area_frac),
                    layer: f.map(|f| f.layer),
                    index: f.map(|f| f.index),
                    beta: None,
                    alpha_x: None,
                    alpha_y: None,
                },
            );
            explanation.push(RuleRecord {
                rule: RULE_FOREIGN.into(),
                fired: f.is_some(),
                detail: match f {
                    Some(f) => format!(
                        "region {} of layer {} ({:.4} of ROI) attached to the device",
                        f.index, f.layer, f.area_frac
                    ),
                    None => "no attached region besides device and background".into(),
                },
            });
        }
        DeviceClass::Insulator => {
            let s_k = inputs.color.unwrap_or(1.0);
            scores.insert(
                RULE_COLOR.to_string(),
                RuleScore::at(s_k, c.layer, c.index, &c.transform),
            );
            explanation.push(RuleRecord {
                rule: RULE_COLOR.into(),
                fired: s_k < rules.tau_color,
                detail: format!("s_k = {s_k:.4} vs tau_color {:.4}", rules.tau_color),
            });
        }
    }
    let verdict = decide(class, c.score.s, inputs.color, inputs.foreign.is_some(), rules);
    DefectReport {
        annotation: ann.clone(),
        verdict,
        scores,
        explanation,
        pipeline: stats,
    }
}

/// Runs the full pipeline on the ROI `ann.bbox` of `img` and applies the
/// rules of `ann.device_class`.
pub fn classify(
    img: &RgbImage,
    ann: &RoiAnnotation,
    lib: &StandardLibrary,
    cfg: &GlobalConfig,
) -> Result<DefectReport, DefectError> {
    cfg.rules.validate()?;
    let standard = lib.get(ann.device_class)?;
    let analysis = analyze_roi(img, ann, cfg)?;
    let inputs = evaluate_rules(&analysis.hierarchy, ann.device_class, standard, cfg)?;
    let stats = PipelineStats {
        superpixels: analysis.superpixels,
        iterations_run: analysis.segmentation.iterations_run,
        labels: analysis.segmentation.labels.count,
        i_max: analysis.hierarchy.i_max,
    };
    Ok(report_from(ann, &inputs, stats, &cfg.rules))
}
