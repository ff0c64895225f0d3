//! Deterministic synthetic inspection scenes with ground truth.
//!
//! Line scenes show a dark conductor segment over a sky background;
//! insulator scenes a vertical string of porcelain sheds on a rod. Defect
//! variants cut a gap into the conductor, attach a red foreign blob to it,
//! remove the middle sheds of the string or hue-shift the whole string. Every pixel
//! gets independent uniform noise of ±8 per channel.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defects::{StandardEntry, STANDARDS_MANIFEST};
use crate::imaging::{
    save_annotations, save_mask, Bbox, DeviceClass, ImagingError, RgbImage, RoiAnnotation, TruthLabel,
};
use crate::mask::{Mask, Point};
use crate::similarity::{SimilarityError, StandardRegion};

pub const ROI_SIZE: u32 = 64;
pub const DEFAULT_SCENE_WIDTH: u32 = 160;
pub const DEFAULT_SCENE_HEIGHT: u32 = 128;
pub const NOISE: i32 = 8;

const SKY: [f64; 3] = [176.0, 200.0, 228.0];
const CONDUCTOR: [u8; 3] = [62, 60, 58];
const FOREIGN: [u8; 3] = [235, 150, 30];
const PORCELAIN: [u8; 3] = [160, 100, 72];
/// Hue target of lightning damage; shares red and green with porcelain.
const SCORCH: [f64; 3] = [160.0, 100.0, 0.0];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("cannot write fixtures: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    NormalLine,
    BrokenWire,
    ForeignObject,
    NormalInsulator,
    InsulatorMissing,
    LightningBreakage,
}

impl SceneKind {
    pub const ALL: [SceneKind; 6] = [
        SceneKind::NormalLine,
        SceneKind::BrokenWire,
        SceneKind::ForeignObject,
        SceneKind::NormalInsulator,
        SceneKind::InsulatorMissing,
        SceneKind::LightningBreakage,
    ];

    pub fn device_class(self) -> DeviceClass {
        match self {
            SceneKind::NormalLine | SceneKind::BrokenWire | SceneKind::ForeignObject => DeviceClass::Line,
            _ => DeviceClass::Insulator,
        }
    }

    pub fn truth(self) -> TruthLabel {
        match self {
            SceneKind::NormalLine | SceneKind::NormalInsulator => TruthLabel::Normal,
            SceneKind::BrokenWire => TruthLabel::BrokenWire,
            SceneKind::ForeignObject => TruthLabel::ForeignObject,
            SceneKind::InsulatorMissing => TruthLabel::InsulatorMissing,
            SceneKind::LightningBreakage => TruthLabel::LightningBreakage,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SceneKind::NormalLine => "normal_line",
            SceneKind::BrokenWire => "broken_wire",
            SceneKind::ForeignObject => "foreign_object",
            SceneKind::NormalInsulator => "normal_insulator",
            SceneKind::InsulatorMissing => "insulator_missing",
            SceneKind::LightningBreakage => "lightning_breakage",
        }
    }
}

/// Kind-specific knobs; each kind reads only its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Fraction of the conductor length cut out (broken wire).
    pub gap_frac: f64,
    /// Foreign blob area as a fraction of the ROI.
    pub blob_frac: f64,
    /// Blend weight of the scorch hue on a lightning-damaged string.
    pub tint_strength: f64,
    pub shed_count: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            gap_frac: 0.4,
            blob_frac: 0.05,
            tint_strength: 0.8,
            shed_count: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub params: SceneParams,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, seed: u64) -> Self {
        Self {
            kind,
            width: DEFAULT_SCENE_WIDTH,
            height: DEFAULT_SCENE_HEIGHT,
            seed,
            params: SceneParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.width < ROI_SIZE || self.height < ROI_SIZE {
            return bad(format!("scene {}x{} smaller than 64x64", self.width, self.height));
        }
        let p = &self.params;
        for (name, v) in [
            ("gap_frac", p.gap_frac),
            ("blob_frac", p.blob_frac),
            ("tint_strength", p.tint_strength),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1)"));
            }
        }
        if p.blob_frac > 0.2 {
            return bad("blob_frac must not exceed 0.2".into());
        }
        if !(4..=8).contains(&p.shed_count) {
            return bad("shed_count must lie in 4..=8".into());
        }
        Ok(())
    }
}

/// Ground truth in ROI coordinates. The masks partition the ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub background: Mask,
    pub device: Mask,
    pub foreign: Option<Mask>,
    /// Device pixels of the undamaged variant of the same scene.
    pub intact_device: Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: RgbImage,
    pub annotation: RoiAnnotation,
    pub truth: GroundTruth,
    /// The undamaged device as a standard region (normal kinds only).
    pub standard: Option<StandardRegion>,
}

fn rect(x0: i32, y0: i32, w: i32, h: i32) -> Vec<Point> {
    (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| Point::new(x, y))).collect()
}

fn disk(cx: f64, cy: f64, r: f64) -> Vec<Point> {
    let ri = r.ceil() as i32 + 1;
    let (icx, icy) = (cx.round() as i32, cy.round() as i32);
    let mut pts = Vec::new();
    for y in icy - ri..=icy + ri {
        for x in icx - ri..=icx + ri {
            let (dx, dy) = (f64::from(x) - cx, f64::from(y) - cy);
            if dx * dx + dy * dy <= r * r {
                pts.push(Point::new(x, y));
            }
        }
    }
    pts
}

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64) -> Vec<Point> {
    let mut pts = Vec::new();
    for y in (cy - ry).floor() as i32..=(cy + ry).ceil() as i32 {
        for x in (cx - rx).floor() as i32..=(cx + rx).ceil() as i32 {
            let (dx, dy) = ((f64::from(x) - cx) / rx, (f64::from(y) - cy) / ry);
            if dx * dx + dy * dy <= 1.0 {
                pts.push(Point::new(x, y));
            }
        }
    }
    pts
}

fn blend(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| a[c] * (1.0 - t) + b[c] * t)
}

fn to_u8(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

fn f64s(c: [u8; 3]) -> [f64; 3] {
    c.map(f64::from)
}

/// Painted layers in ROI coordinates, later composited over the sky.
struct Painter {
    size: i32,
    colors: Vec<Option<[f64; 3]>>,
}

impl Painter {
    fn new(size: u32) -> Self {
        Self {
            size: size as i32,
            colors: vec![None; (size * size) as usize],
        }
    }

    fn paint(&mut self, pts: &[Point], color: [f64; 3]) {
        for p in pts {
            if (0..self.size).contains(&p.x) && (0..self.size).contains(&p.y) {
                self.colors[(p.y * self.size + p.x) as usize] = Some(color);
            }
        }
    }

    fn erase(&mut self, pts: &[Point]) {
        for p in pts {
            if (0..self.size).contains(&p.x) && (0..self.size).contains(&p.y) {
                self.colors[(p.y * self.size + p.x) as usize] = None;
            }
        }
    }

    fn painted(&self) -> Mask {
        Mask::from_bits(
            self.size as u32,
            &self.colors.iter().map(Option::is_some).collect::<Vec<_>>(),
        )
    }
}

fn within_roi(pts: Vec<Point>) -> Vec<Point> {
    pts.into_iter()
        .filter(|p| (0..ROI_SIZE as i32).contains(&p.x) && (0..ROI_SIZE as i32).contains(&p.y))
        .collect()
}

/// Generates one scene. Identical specs give identical bytes.
pub fn generate(spec: &SceneSpec) -> Result<Scene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (spec.kind as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let roi_x = rng.random_range(0..=spec.width - ROI_SIZE);
    let roi_y = rng.random_range(0..=spec.height - ROI_SIZE);

    let mut painter = Painter::new(ROI_SIZE);
    let mut foreign = None;
    let intact;
    match spec.kind.device_class() {
        DeviceClass::Line => {
            let length = 50;
            let thickness = 12;
            let x0 = 7 + rng.random_range(-2..=2);
            let y0 = 28 + rng.random_range(-4..=4);
            let band = rect(x0, y0, length, thickness);
            intact = Mask::from_points(band.clone());
            painter.paint(&band, f64s(CONDUCTOR));
            match spec.kind {
                SceneKind::BrokenWire => {
                    let gap = (spec.params.gap_frac * f64::from(length)).round() as i32;
                    let start = x0 + (length - gap) / 2 + rng.random_range(-1..=1);
                    painter.erase(&rect(start, y0, gap, thickness));
                }
                SceneKind::ForeignObject => {
                    let area = spec.params.blob_frac * f64::from(ROI_SIZE * ROI_SIZE);
                    let r = (area / std::f64::consts::PI).sqrt();
                    let cx = f64::from(x0) + f64::from(length) * rng.random_range(0.3..0.7);
                    // overlaps the conductor edge by two rows; the band stays connected
                    let above = rng.random_bool(0.5);
                    let cy = if above {
                        f64::from(y0) - r + 1.5
                    } else {
                        f64::from(y0 + thickness) + r - 2.5
                    };
                    let blob = within_roi(disk(cx, cy, r));
                    painter.paint(&blob, f64s(FOREIGN));
                    foreign = Some(Mask::from_points(blob));
                }
                _ => {}
            }
        }
        DeviceClass::Insulator => {
            let n = spec.params.shed_count as i32;
            let pitch = 7;
            let cx = 32.0 + f64::from(rng.random_range(-3..=3));
            let top = (ROI_SIZE as i32 - n * pitch) / 2 + rng.random_range(-2..=2);
            let rod = rect(cx as i32 - 2, top, 4, n * pitch);
            let sheds: Vec<Vec<Point>> = (0..n)
                .map(|k| ellipse(cx - 0.5, f64::from(top + k * pitch) + 3.0, 10.5, 2.0))
                .collect();
            let mut all = rod.clone();
            for s in &sheds {
                all.extend_from_slice(s);
            }
            intact = Mask::from_points(within_roi(all));
            painter.paint(&rod, f64s(PORCELAIN));
            for s in &sheds {
                painter.paint(s, f64s(PORCELAIN));
            }
            let middle = (n / 4)..(n - n / 4);
            match spec.kind {
                SceneKind::InsulatorMissing => {
                    for k in middle.clone() {
                        painter.erase(&sheds[k as usize]);
                    }
                    painter.erase(&rect(cx as i32 - 2, top + middle.start * pitch, 4, middle.len() as i32 * pitch));
                }
                SceneKind::LightningBreakage => {
                    let t = (spec.params.tint_strength + rng.random_range(-0.15..0.15)).clamp(0.05, 1.0);
                    // the whole string is discolored; its silhouette stays intact
                    let burnt = blend(f64s(PORCELAIN), SCORCH, t);
                    painter.paint(&rod, burnt);
                    for s in &sheds {
                        painter.paint(s, burnt);
                    }
                }
                _ => {}
            }
        }
    }
    let device_painted = painter.painted();
    let device = match &foreign {
        Some(f) => Mask::from_points(device_painted.points().iter().copied().filter(|p| !f.contains(*p)).collect()),
        None => device_painted.clone(),
    };
    let background = Mask::from_points(
        (0..ROI_SIZE as i32)
            .flat_map(|y| (0..ROI_SIZE as i32).map(move |x| Point::new(x, y)))
            .filter(|p| !device_painted.contains(*p))
            .collect(),
    );

    // sky with a gentle diagonal gradient, painted layers on top, then noise
    let gx = rng.random_range(-0.02..0.02);
    let gy = rng.random_range(-0.02..0.02);
    let mut image = RgbImage::filled(spec.width, spec.height, [0, 0, 0]);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let (lx, ly) = (x as i32 - roi_x as i32, y as i32 - roi_y as i32);
            let painted = if (0..ROI_SIZE as i32).contains(&lx) && (0..ROI_SIZE as i32).contains(&ly) {
                painter.colors[(ly * ROI_SIZE as i32 + lx) as usize]
            } else {
                None
            };
            let base = painted.unwrap_or_else(|| {
                let shift = gx * (f64::from(x) - f64::from(spec.width) / 2.0)
                    + gy * (f64::from(y) - f64::from(spec.height) / 2.0);
                SKY.map(|v| v + shift)
            });
            let noisy = base.map(|v| v + f64::from(rng.random_range(-NOISE..=NOISE)));
            image.put_pixel(x, y, to_u8(noisy));
        }
    }

    let annotation = RoiAnnotation {
        image_path: String::new(),
        device_class: spec.kind.device_class(),
        bbox: Bbox::new(roi_x, roi_y, ROI_SIZE, ROI_SIZE),
        truth_label: Some(spec.kind.truth()),
    };
    let standard = match spec.kind {
        SceneKind::NormalLine | SceneKind::NormalInsulator => {
            let roi = crate::imaging::crop_roi(&image, annotation.bbox)?;
            Some(StandardRegion::new(spec.kind.device_class(), device.clone(), roi)?)
        }
        _ => None,
    };
    Ok(Scene {
        image,
        annotation,
        truth: GroundTruth {
            background,
            device,
            foreign,
            intact_device: intact,
        },
        standard,
    })
}

/// Solid colors far apart in RGB, used by [`palette_scene`].
pub const PALETTE: [[u8; 3]; 5] = [[230, 30, 30], [30, 230, 30], [30, 30, 230], [230, 230, 30], [130, 130, 130]];

/// A 64×64 Voronoi mosaic of the five [`PALETTE`] colors with ±8 noise;
/// returns the image and the per-pixel color index.
pub fn palette_scene(seed: u64) -> (RgbImage, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = 64u32;
    // one site per quadrant plus one near the center keeps every cell sizeable
    let mut sites = Vec::new();
    for (qx, qy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        sites.push((
            f64::from(qx * 32) + rng.random_range(8.0..24.0),
            f64::from(qy * 32) + rng.random_range(8.0..24.0),
        ));
    }
    sites.push((rng.random_range(26.0..38.0), rng.random_range(26.0..38.0)));
    let mut truth = Vec::with_capacity((size * size) as usize);
    let mut img = RgbImage::filled(size, size, [0, 0, 0]);
    for y in 0..size {
        for x in 0..size {
            let k = sites
                .iter()
                .enumerate()
                .map(|(i, &(sx, sy))| (i, (f64::from(x) - sx).powi(2) + (f64::from(y) - sy).powi(2)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .unwrap();
            truth.push(k as u32);
            let c = PALETTE[k].map(|v| (i32::from(v) + rng.random_range(-NOISE..=NOISE)).clamp(0, 255) as u8);
            img.put_pixel(x, y, c);
        }
    }
    (img, truth)
}

/// Mean over predicted labels of the fraction of their pixels carrying the
/// label's majority truth value.
pub fn mean_purity(predicted: &[u32], truth: &[u32]) -> f64 {
    let mut pairs: Vec<(u32, u32)> = predicted.iter().copied().zip(truth.iter().copied()).collect();
    pairs.sort_unstable();
    let mut purities = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let label = pairs[i].0;
        let (mut total, mut best) = (0usize, 0usize);
        while i < pairs.len() && pairs[i].0 == label {
            let t = pairs[i].1;
            let mut j = i;
            while j < pairs.len() && pairs[j] == (label, t) {
                j += 1;
            }
            best = best.max(j - i);
            total += j - i;
            i = j;
        }
        purities.push(best as f64 / total as f64);
    }
    purities.iter().sum::<f64>() / purities.len().max(1) as f64
}

/// Scenes per kind in the acceptance suite.
pub fn suite_counts() -> [(SceneKind, usize); 6] {
    [
        (SceneKind::NormalLine, 20),
        (SceneKind::BrokenWire, 10),
        (SceneKind::ForeignObject, 10),
        (SceneKind::NormalInsulator, 20),
        (SceneKind::InsulatorMissing, 10),
        (SceneKind::LightningBreakage, 10),
    ]
}

/// Scene specs of the acceptance suite for `seed`.
pub fn suite_specs(seed: u64) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (kind, count) in suite_counts() {
        for _ in 0..count {
            out.push(SceneSpec::new(kind, rng.random()));
        }
    }
    out
}

/// Seeds of the scenes whose devices become the standard library.
fn standard_specs(seed: u64) -> [SceneSpec; 2] {
    let s = seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(0x5851_f42d);
    [SceneSpec::new(SceneKind::NormalLine, s), SceneSpec::new(SceneKind::NormalInsulator, s ^ 1)]
}

/// Standard regions for both device classes.
pub fn standard_regions(seed: u64) -> Result<Vec<StandardRegion>, SynthError> {
    standard_specs(seed)
        .iter()
        .map(|spec| {
            generate(spec)?
                .standard
                .ok_or_else(|| SynthError::InvalidSpec("standard scene must be a normal kind".into()))
        })
        .collect()
}

pub const ANNOTATIONS_FILE: &str = "manifest.json";
pub const IMAGES_DIR: &str = "images";
pub const STANDARDS_DIR: &str = "standards";

/// Writes the acceptance suite under `dir`:
///
/// ```text
/// dir/manifest.json            annotations with truth labels
/// dir/images/NNN_<kind>.png    one scene per annotation
/// dir/standards/manifest.json  device class -> {mask, image}
/// dir/standards/<class>.png, <class>_mask.png
/// ```
///
/// Returns the annotations written.
pub fn write_fixtures(dir: impl AsRef<Path>, seed: u64) -> Result<Vec<RoiAnnotation>, SynthError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join(IMAGES_DIR))?;
    std::fs::create_dir_all(dir.join(STANDARDS_DIR))?;
    let mut annotations = Vec::new();
    for (i, spec) in suite_specs(seed).iter().enumerate() {
        let scene = generate(spec)?;
        let rel = format!("{IMAGES_DIR}/{i:03}_{}.png", spec.kind.as_str());
        scene.image.save_png(dir.join(&rel))?;
        annotations.push(RoiAnnotation {
            image_path: rel,
            ..scene.annotation
        });
    }
    save_annotations(&annotations, dir.join(ANNOTATIONS_FILE))?;

    let mut entries = std::collections::BTreeMap::new();
    for std_region in standard_regions(seed)? {
        let name = std_region.device_class.as_str();
        let image = format!("{name}.png");
        let mask = format!("{name}_mask.png");
        std_region.image.save_png(dir.join(STANDARDS_DIR).join(&image))?;
        let (w, h) = (std_region.image.width(), std_region.image.height());
        let mut bits = vec![false; (w * h) as usize];
        for p in std_region.mask.points() {
            bits[(p.y as u32 * w + p.x as u32) as usize] = true;
        }
        save_mask(w, h, &bits, dir.join(STANDARDS_DIR).join(&mask))?;
        entries.insert(
            std_region.device_class,
            StandardEntry {
                mask: mask.into(),
                image: image.into(),
            },
        );
    }
    let text = serde_json::to_string_pretty(&entries).expect("manifest serializes");
    std::fs::write(dir.join(STANDARDS_DIR).join(STANDARDS_MANIFEST), text + "\n")?;
    Ok(annotations)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        for kind in SceneKind::ALL {
            let spec = SceneSpec::new(kind, 42);
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
        let a = generate(&SceneSpec::new(SceneKind::NormalLine, 1)).unwrap();
        let b = generate(&SceneSpec::new(SceneKind::NormalLine, 2)).unwrap();
        assert_ne!(a.image, b.image);
    }

    #[test]
    fn masks_partition_roi() {
        for kind in SceneKind::ALL {
            for seed in 0..5 {
                let s = generate(&SceneSpec::new(kind, seed)).unwrap();
                let t = &s.truth;
                let mut total = t.background.area() + t.device.area();
                assert_eq!(t.background.intersection_count(&t.device), 0);
                if let Some(f) = &t.foreign {
                    total += f.area();
                    assert_eq!(f.intersection_count(&t.device), 0);
                    assert_eq!(f.intersection_count(&t.background), 0);
                }
                assert_eq!(total, (ROI_SIZE * ROI_SIZE) as usize, "{kind:?}");
            }
        }
    }

    #[test]
    fn broken_wire_gap_fraction() {
        for seed in 0..10 {
            let mut spec = SceneSpec::new(SceneKind::BrokenWire, seed);
            spec.params.gap_frac = 0.3;
            let s = generate(&spec).unwrap();
            let removed = s.truth.intact_device.area() - s.truth.device.area();
            let frac = removed as f64 / s.truth.intact_device.area() as f64;
            assert!((frac - 0.3).abs() <= 0.01, "{frac}");
        }
    }

    #[test]
    fn foreign_blob_fraction() {
        for seed in 0..10 {
            let s = generate(&SceneSpec::new(SceneKind::ForeignObject, seed)).unwrap();
            let f = s.truth.foreign.as_ref().unwrap();
            let frac = f.area() as f64 / f64::from(ROI_SIZE * ROI_SIZE);
            assert!((frac - 0.05).abs() <= 0.01, "{frac}");
            assert!(f.touches(&s.truth.device));
        }
    }

    #[test]
    fn missing_sheds_split_the_string() {
        let s = generate(&SceneSpec::new(SceneKind::InsulatorMissing, 3)).unwrap();
        let (_, count) = crate::mask::components4(
            &(0..ROI_SIZE * ROI_SIZE)
                .map(|i| u32::from(s.truth.device.contains(Point::new((i % ROI_SIZE) as i32, (i / ROI_SIZE) as i32))))
                .collect::<Vec<_>>(),
            ROI_SIZE as usize,
            ROI_SIZE as usize,
        );
        // background plus two insulator pieces
        assert_eq!(count, 3);
        assert!(s.truth.device.area() * 2 < s.truth.intact_device.area() + 40);
    }

    #[test]
    fn standards_only_for_normal_kinds() {
        for kind in SceneKind::ALL {
            let s = generate(&SceneSpec::new(kind, 9)).unwrap();
            assert_eq!(s.standard.is_some(), kind.truth() == TruthLabel::Normal);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SceneSpec::new(SceneKind::NormalLine, 0);
        spec.width = 32;
        assert!(matches!(generate(&spec), Err(SynthError::InvalidSpec(_))));
        let mut spec = SceneSpec::new(SceneKind::BrokenWire, 0);
        spec.params.gap_frac = 1.5;
        assert!(matches!(generate(&spec), Err(SynthError::InvalidSpec(_))));
    }

    #[test]
    fn purity() {
        assert_eq!(mean_purity(&[0, 0, 1, 1], &[5, 5, 6, 6]), 1.0);
        assert_eq!(mean_purity(&[0, 0, 0, 0], &[5, 5, 6, 6]), 0.5);
        assert_eq!(mean_purity(&[0, 0, 0, 1], &[5, 5, 6, 6]), (2.0 / 3.0 + 1.0) / 2.0);
    }

    #[test]
    fn palette_scene_has_five_cells() {
        let (img, truth) = palette_scene(3);
        assert_eq!(img.pixel_count(), truth.len());
        for k in 0..5u32 {
            assert!(truth.iter().filter(|&&t| t == k).count() > 100);
        }
    }

    #[test]
    fn suite_composition() {
        let specs = suite_specs(7);
        assert_eq!(specs.len(), 80);
        assert_eq!(specs, suite_specs(7));
        assert_eq!(specs.iter().filter(|s| s.kind.truth() == TruthLabel::Normal).count(), 40);
    }
}
