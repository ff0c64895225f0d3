//! Alignment of standard device regions against candidate regions and the
//! combined color/shape similarity.
//!
//! A standard mask is mapped into the candidate's frame by
//! `p'' = S · R · (p − c_std) + c_cand`, with
//! `R = [cos β, sin β; −sin β, cos β]` acting on `(x, y)` column vectors and
//! `S = diag(α_x, α_y)`. With image rows growing downwards, positive β turns
//! the mask counter-clockwise on screen. Coordinates are rounded to the
//! nearest pixel; holes left by the rounding are then closed with a 3×3
//! closing, keeping only pixels whose inverse image falls inside the source.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{Region, SegmentationHierarchy};
use crate::histogram::{color_similarity, BinCountMismatch, Histogram};
use crate::imaging::{DeviceClass, RgbImage};
use crate::mask::{Mask, Raster};

pub const MIN_ALPHA: f64 = 0.25;
pub const MAX_ALPHA: f64 = 4.0;
/// Bound on coordinate sweeps per refinement step size.
const MAX_SWEEPS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("empty region")]
    EmptyRegion,
    #[error("scale factor {0} outside [0.25, 4]")]
    ScaleOutOfRange(f64),
    #[error(transparent)]
    BinCountMismatch(#[from] BinCountMismatch),
    #[error("hierarchy has no regions")]
    HierarchyUnavailable,
    #[error("invalid similarity configuration: {0}")]
    InvalidConfig(String),
}

/// Which pixel set the shape term is normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMeasure {
    /// `|C ∩ S''| / |C|`
    Candidate,
    /// `|C ∩ S''| / max(|C|, |S''|)`
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    pub gamma: f64,
    pub n_bins: usize,
    pub beta_step: f64,
    pub alpha_grid: Vec<f64>,
    pub refine_rounds: usize,
    pub hist_smoothing: f64,
    pub shape_measure: ShapeMeasure,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            n_bins: 16,
            beta_step: 5.0,
            alpha_grid: (-4..=4).map(|k| 2f64.powf(k as f64 / 4.0)).collect(),
            refine_rounds: 3,
            hist_smoothing: 1.0,
            shape_measure: ShapeMeasure::Candidate,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        let bad = |m: &str| Err(SimilarityError::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(1..=256).contains(&self.n_bins) {
            return bad("n_bins must lie in 1..=256");
        }
        if !(self.beta_step > 0.0 && self.beta_step <= 360.0) {
            return bad("beta_step must lie in (0, 360]");
        }
        if self.alpha_grid.is_empty() {
            return bad("alpha_grid must not be empty");
        }
        if let Some(&a) = self.alpha_grid.iter().find(|&&a| !(MIN_ALPHA..=MAX_ALPHA).contains(&a)) {
            return Err(SimilarityError::ScaleOutOfRange(a));
        }
        if !(self.hist_smoothing > 0.0 && self.hist_smoothing.is_finite()) {
            return bad("hist_smoothing must be > 0");
        }
        Ok(())
    }

    /// Multiplicative spacing of the scale grid; 2^(1/4) for a single-value
    /// grid.
    fn alpha_ratio(&self) -> f64 {
        let (lo, hi) = self.alpha_bounds();
        if self.alpha_grid.len() < 2 || hi <= lo {
            2f64.powf(0.25)
        } else {
            (hi / lo).powf(1.0 / (self.alpha_grid.len() - 1) as f64)
        }
    }

    fn alpha_bounds(&self) -> (f64, f64) {
        let lo = self.alpha_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.alpha_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo.max(MIN_ALPHA), hi.min(MAX_ALPHA))
    }

    /// First refinement step sizes: `(beta_step / 2, alpha_ratio^(1/2))`.
    pub fn refinement_step(&self) -> (f64, f64) {
        (self.beta_step / 2.0, self.alpha_ratio().sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub beta: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            beta: 0.0,
            alpha_x: 1.0,
            alpha_y: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }
}

/// Wraps an angle in degrees into [−180, 180).
pub fn wrap_degrees(beta: f64) -> f64 {
    let w = (beta + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Maps a centroid-relative point by `S · R`.
pub fn map_relative(x: f64, y: f64, beta: f64, alpha_x: f64, alpha_y: f64) -> (f64, f64) {
    let (s, c) = beta.to_radians().sin_cos();
    (alpha_x * (c * x + s * y), alpha_y * (-s * x + c * y))
}

/// Precomputed source side of a mask transform.
pub struct MaskMapper {
    rel: Vec<(f64, f64)>,
    centroid: (f64, f64),
    source: Raster,
}

impl MaskMapper {
    pub fn new(mask: &Mask, centroid: (f64, f64)) -> Result<Self, SimilarityError> {
        let source = mask.to_raster().ok_or(SimilarityError::EmptyRegion)?;
        let rel = mask
            .points()
            .iter()
            .map(|p| (f64::from(p.x) - centroid.0, f64::from(p.y) - centroid.1))
            .collect();
        Ok(Self { rel, centroid, source })
    }

    /// Source-image coordinates of target pixel `(x, y)` under `t`.
    pub fn inverse(&self, t: &Transform, x: f64, y: f64) -> (f64, f64) {
        InverseMap::new(t, self.centroid).apply(x, y)
    }

    /// Transformed, hole-closed mask as a raster.
    pub fn apply(&self, t: &Transform) -> Raster {
        let mut canvas = Canvas::default();
        self.render(t, &mut canvas);
        let g = &canvas.grid;
        let mut r = Raster::new(g.x0, g.y0, g.width, g.height);
        g.for_each_set(|x, y| r.set(x, y));
        r
    }

    /// [`MaskMapper::apply`] into reusable buffers.
    fn render(&self, t: &Transform, canvas: &mut Canvas) {
        let (s, c) = t.beta.to_radians().sin_cos();
        let (m00, m01) = (t.alpha_x * c, t.alpha_x * s);
        let (m10, m11) = (-t.alpha_y * s, t.alpha_y * c);
        canvas.mapped.clear();
        let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
        for &(x, y) in &self.rel {
            let px = round_half_away(m00 * x + m01 * y + t.tx);
            let py = round_half_away(m10 * x + m11 * y + t.ty);
            x0 = x0.min(px);
            y0 = y0.min(py);
            x1 = x1.max(px);
            y1 = y1.max(py);
            canvas.mapped.push((px, py));
        }
        // the margin keeps the dilated set off the grid edge
        const MARGIN: i32 = 2;
        let g = &mut canvas.grid;
        g.reset(
            x0 - MARGIN,
            y0 - MARGIN,
            (x1 - x0 + 1 + 2 * MARGIN) as usize,
            (y1 - y0 + 1 + 2 * MARGIN) as usize,
        );
        for &(px, py) in &canvas.mapped {
            g.set(px, py);
        }
        g.closing_into(&mut canvas.tmp, &mut canvas.closed);
        let (nw, gx0, gy0) = (g.words_per_row, g.x0, g.y0);
        let inv = InverseMap::new(t, self.centroid);
        for (i, (&cw, &fw)) in canvas.closed.iter().zip(&g.words).enumerate() {
            let mut extra = cw & !fw;
            while extra != 0 {
                let b = extra.trailing_zeros() as usize;
                extra &= extra - 1;
                let x = gx0 + ((i % nw) * 64 + b) as i32;
                let y = gy0 + (i / nw) as i32;
                let (sx, sy) = inv.apply(f64::from(x), f64::from(y));
                if self.source.get(round_half_away(sx), round_half_away(sy)) {
                    canvas.added.push((x, y));
                }
            }
        }
        for (x, y) in canvas.added.drain(..) {
            g.set(x, y);
        }
    }
}

/// Nearest integer, halves away from zero; agrees with `f64::round` on
/// pixel-scale coordinates without a libm call.
#[inline]
fn round_half_away(v: f64) -> i32 {
    let r = (v.abs() + 0.5) as i32;
    if v < 0.0 {
        -r
    } else {
        r
    }
}

struct InverseMap {
    c: f64,
    s: f64,
    inv_ax: f64,
    inv_ay: f64,
    t: (f64, f64),
    centroid: (f64, f64),
}

impl InverseMap {
    fn new(t: &Transform, centroid: (f64, f64)) -> Self {
        let (s, c) = t.beta.to_radians().sin_cos();
        Self {
            c,
            s,
            inv_ax: 1.0 / t.alpha_x,
            inv_ay: 1.0 / t.alpha_y,
            t: (t.tx, t.ty),
            centroid,
        }
    }

    #[inline]
    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let ux = (x - self.t.0) * self.inv_ax;
        let uy = (y - self.t.1) * self.inv_ay;
        (self.c * ux - self.s * uy + self.centroid.0, self.s * ux + self.c * uy + self.centroid.1)
    }
}

/// Bit-packed boolean grid anchored at `(x0, y0)`, one run of `u64` words
/// per row, bit `k` of a row's first word being column `x0 + k`.
#[derive(Default, Clone)]
struct BitGrid {
    x0: i32,
    y0: i32,
    width: usize,
    height: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitGrid {
    fn reset(&mut self, x0: i32, y0: i32, width: usize, height: usize) {
        self.x0 = x0;
        self.y0 = y0;
        self.width = width;
        self.height = height;
        self.words_per_row = width.div_ceil(64);
        self.words.clear();
        self.words.resize(self.words_per_row * height, 0);
    }

    fn from_mask(mask: &Mask) -> Option<Self> {
        let b = mask.bounds()?;
        let mut g = Self::default();
        g.reset(b.min_x, b.min_y, b.width(), b.height());
        for p in mask.points() {
            g.set(p.x, p.y);
        }
        Some(g)
    }

    #[inline]
    fn set(&mut self, x: i32, y: i32) {
        let (lx, ly) = ((x - self.x0) as usize, (y - self.y0) as usize);
        self.words[ly * self.words_per_row + lx / 64] |= 1 << (lx % 64);
    }

    /// 64 columns of row `y` starting at column `x`; zero outside the grid.
    #[inline]
    fn window(&self, x: i32, y: i32) -> u64 {
        let ly = y - self.y0;
        if ly < 0 || ly as usize >= self.height {
            return 0;
        }
        let row = &self.words[ly as usize * self.words_per_row..(ly as usize + 1) * self.words_per_row];
        let word = |q: i64| -> u64 {
            if q < 0 || q as usize >= row.len() {
                0
            } else {
                row[q as usize]
            }
        };
        let off = i64::from(x - self.x0);
        let (q, r) = (off.div_euclid(64), off.rem_euclid(64));
        if r == 0 {
            word(q)
        } else {
            (word(q) >> r) | (word(q + 1) << (64 - r))
        }
    }

    fn for_each_set(&self, mut f: impl FnMut(i32, i32)) {
        for (i, &w) in self.words.iter().enumerate() {
            let mut bits = w;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                f(
                    self.x0 + ((i % self.words_per_row) * 64 + b) as i32,
                    self.y0 + (i / self.words_per_row) as i32,
                );
            }
        }
    }

    /// 3×3 closing (dilation then erosion); cells outside count as unset.
    fn closing_into(&self, tmp: &mut Vec<u64>, out: &mut Vec<u64>) {
        let nw = self.words_per_row;
        let h = self.height;
        tmp.clear();
        tmp.resize(self.words.len(), 0);
        out.clear();
        out.resize(self.words.len(), 0);
        let horizontal = |src: &[u64], dst: &mut [u64], dilate: bool| {
            for row in 0..h {
                let r = &src[row * nw..(row + 1) * nw];
                for k in 0..nw {
                    let prev = if k > 0 { r[k - 1] >> 63 } else { 0 };
                    let next = if k + 1 < nw { r[k + 1] << 63 } else { 0 };
                    let left = (r[k] << 1) | prev;
                    let right = (r[k] >> 1) | next;
                    dst[row * nw + k] = if dilate { r[k] | left | right } else { r[k] & left & right };
                }
            }
        };
        let vertical = |src: &[u64], dst: &mut [u64], dilate: bool| {
            for row in 0..h {
                for k in 0..nw {
                    let up = if row > 0 { src[(row - 1) * nw + k] } else { 0 };
                    let down = if row + 1 < h { src[(row + 1) * nw + k] } else { 0 };
                    let c = src[row * nw + k];
                    dst[row * nw + k] = if dilate { up | c | down } else { up & c & down };
                }
            }
        };
        horizontal(&self.words, tmp, true);
        vertical(tmp, out, true);
        horizontal(out, tmp, false);
        vertical(tmp, out, false);
    }
}

/// Scratch buffers for repeated mask transforms.
#[derive(Default)]
struct Canvas {
    grid: BitGrid,
    tmp: Vec<u64>,
    closed: Vec<u64>,
    mapped: Vec<(i32, i32)>,
    added: Vec<(i32, i32)>,
}

fn validate_alphas(alpha_x: f64, alpha_y: f64) -> Result<(), SimilarityError> {
    for a in [alpha_x, alpha_y] {
        if !(MIN_ALPHA..=MAX_ALPHA).contains(&a) {
            return Err(SimilarityError::ScaleOutOfRange(a));
        }
    }
    Ok(())
}

/// Rotates `mask` by `beta` degrees about `centroid`.
pub fn rotate_region(mask: &Mask, centroid: (f64, f64), beta: f64) -> Result<Mask, SimilarityError> {
    let t = Transform {
        beta,
        tx: centroid.0,
        ty: centroid.1,
        ..Transform::identity()
    };
    Ok(MaskMapper::new(mask, centroid)?.apply(&t).to_mask())
}

/// Scales `mask` about `centroid` by `alpha_x`, `alpha_y`.
pub fn scale_region(
    mask: &Mask,
    centroid: (f64, f64),
    alpha_x: f64,
    alpha_y: f64,
) -> Result<Mask, SimilarityError> {
    validate_alphas(alpha_x, alpha_y)?;
    let t = Transform {
        alpha_x,
        alpha_y,
        tx: centroid.0,
        ty: centroid.1,
        ..Transform::identity()
    };
    Ok(MaskMapper::new(mask, centroid)?.apply(&t).to_mask())
}

/// `|c ∩ o| / |c|`
pub fn shape_similarity(c: &Mask, o: &Mask) -> Result<f64, SimilarityError> {
    if c.is_empty() {
        return Err(SimilarityError::EmptyRegion);
    }
    Ok(c.intersection_count(o) as f64 / c.area() as f64)
}

/// `|c ∩ o| / max(|c|, |o|)`
pub fn symmetric_overlap(c: &Mask, o: &Mask) -> Result<f64, SimilarityError> {
    if c.is_empty() {
        return Err(SimilarityError::EmptyRegion);
    }
    Ok(c.intersection_count(o) as f64 / c.area().max(o.area()) as f64)
}

/// `γ · color + (1 − γ) · shape`
pub fn blend(gamma: f64, color: f64, shape: f64) -> f64 {
    gamma * color + (1.0 - gamma) * shape
}

/// A healthy-device reference: mask and appearance in library coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardRegion {
    pub device_class: DeviceClass,
    pub mask: Mask,
    pub centroid: (f64, f64),
    pub image: RgbImage,
}

impl StandardRegion {
    pub fn new(device_class: DeviceClass, mask: Mask, image: RgbImage) -> Result<Self, SimilarityError> {
        let centroid = mask.centroid().ok_or(SimilarityError::EmptyRegion)?;
        Ok(Self {
            device_class,
            mask,
            centroid,
            image,
        })
    }

    pub fn histogram(&self, n_bins: usize) -> Histogram {
        Histogram::from_pixels(n_bins, self.mask.points().iter().map(|p| self.sample(f64::from(p.x), f64::from(p.y))))
    }

    fn sample(&self, x: f64, y: f64) -> [u8; 3] {
        let xi = (x.round() as i64).clamp(0, i64::from(self.image.width()) - 1) as u32;
        let yi = (y.round() as i64).clamp(0, i64::from(self.image.height()) - 1) as u32;
        self.image.pixel(xi, yi)
    }
}

/// A standard mapped into candidate coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedStandard {
    pub transform: Transform,
    pub mask: Mask,
    /// Colors of the transformed pixels, sampled from the standard image.
    pub hist: Histogram,
}

impl TransformedStandard {
    pub fn new(standard: &StandardRegion, transform: Transform, n_bins: usize) -> Result<Self, SimilarityError> {
        let mapper = MaskMapper::new(&standard.mask, standard.centroid)?;
        Ok(Self::from_mapper(standard, &mapper, transform, n_bins))
    }

    fn from_mapper(standard: &StandardRegion, mapper: &MaskMapper, transform: Transform, n_bins: usize) -> Self {
        let mask = mapper.apply(&transform).to_mask();
        let hist = Histogram::from_pixels(
            n_bins,
            mask.points().iter().map(|p| {
                let (sx, sy) = mapper.inverse(&transform, f64::from(p.x), f64::from(p.y));
                standard.sample(sx, sy)
            }),
        );
        Self { transform, mask, hist }
    }
}

/// Combined similarity of a candidate region against an aligned standard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub s: f64,
    pub color: f64,
    pub shape: f64,
}

pub fn combined_similarity(
    candidate: &Region,
    standard: &TransformedStandard,
    cfg: &SimilarityConfig,
) -> Result<Score, SimilarityError> {
    let color = color_similarity(&candidate.hist, &standard.hist, cfg.hist_smoothing)?;
    let shape = match cfg.shape_measure {
        ShapeMeasure::Candidate => shape_similarity(&candidate.mask, &standard.mask)?,
        ShapeMeasure::Symmetric => symmetric_overlap(&candidate.mask, &standard.mask)?,
    };
    Ok(Score {
        s: blend(cfg.gamma, color, shape),
        color,
        shape,
    })
}

/// Best transform found by [`align`] and its overlap score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub transform: Transform,
    pub score: f64,
}

struct Objective<'a> {
    mapper: &'a MaskMapper,
    candidate: BitGrid,
    candidate_area: usize,
    tx: f64,
    ty: f64,
    canvas: Canvas,
}

impl Objective<'_> {
    fn eval(&mut self, beta: f64, alpha_x: f64, alpha_y: f64) -> f64 {
        let t = Transform {
            beta,
            alpha_x,
            alpha_y,
            tx: self.tx,
            ty: self.ty,
        };
        self.mapper.render(&t, &mut self.canvas);
        let g = &self.canvas.grid;
        let mut inter = 0u32;
        let mut total = 0u32;
        for (i, &w) in g.words.iter().enumerate() {
            if w == 0 {
                continue;
            }
            total += w.count_ones();
            let x = g.x0 + ((i % g.words_per_row) * 64) as i32;
            let y = g.y0 + (i / g.words_per_row) as i32;
            inter += (w & self.candidate.window(x, y)).count_ones();
        }
        f64::from(inter) / self.candidate_area.max(total as usize) as f64
    }
}

/// Total preference order over candidate transforms: higher score, then
/// smaller |β|, then scales nearer 1, then smaller values.
fn rank(score: f64, beta: f64, ax: f64, ay: f64) -> (f64, f64, f64, f64, f64, f64) {
    (-score, beta.abs(), ax.ln().abs() + ay.ln().abs(), beta, ax, ay)
}

fn better(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> bool {
    rank(a.0, a.1, a.2, a.3).partial_cmp(&rank(b.0, b.1, b.2, b.3)) == Some(std::cmp::Ordering::Less)
}

/// Searches rotation and per-axis scale so the transformed standard overlaps
/// the candidate as much as possible. Translation is fixed by the centroids.
pub fn align(
    standard_mask: &Mask,
    standard_centroid: (f64, f64),
    candidate: &Mask,
    cfg: &SimilarityConfig,
) -> Result<Alignment, SimilarityError> {
    let mapper = MaskMapper::new(standard_mask, standard_centroid)?;
    align_with(&mapper, candidate, cfg)
}

fn align_with(mapper: &MaskMapper, candidate: &Mask, cfg: &SimilarityConfig) -> Result<Alignment, SimilarityError> {
    cfg.validate()?;
    let candidate_grid = BitGrid::from_mask(candidate).ok_or(SimilarityError::EmptyRegion)?;
    let (tx, ty) = candidate.centroid().ok_or(SimilarityError::EmptyRegion)?;
    let mut obj = Objective {
        mapper,
        candidate: candidate_grid,
        candidate_area: candidate.area(),
        tx,
        ty,
        canvas: Canvas::default(),
    };

    let mut betas = Vec::new();
    let mut k = 0;
    loop {
        let b = -180.0 + k as f64 * cfg.beta_step;
        if b >= 180.0 {
            break;
        }
        betas.push(b);
        k += 1;
    }
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for &b in &betas {
        for &ax in &cfg.alpha_grid {
            for &ay in &cfg.alpha_grid {
                let cand = (obj.eval(b, ax, ay), b, ax, ay);
                if best.is_none_or(|cur| better(cand, cur)) {
                    best = Some(cand);
                }
            }
        }
    }
    let mut best = best.expect("grid is nonempty");

    let (alo, ahi) = cfg.alpha_bounds();
    let mut beta_step = cfg.beta_step;
    let mut ratio = cfg.alpha_ratio();
    for _ in 0..cfg.refine_rounds {
        beta_step /= 2.0;
        ratio = ratio.sqrt();
        // sweep the three coordinates until a full sweep changes nothing
        for _ in 0..MAX_SWEEPS {
            let before = best;
            for coord in 0..3 {
                let (_, b, ax, ay) = best;
                let trials = match coord {
                    0 => [(wrap_degrees(b - beta_step), ax, ay), (wrap_degrees(b + beta_step), ax, ay)],
                    1 => [(b, ax / ratio, ay), (b, ax * ratio, ay)],
                    _ => [(b, ax, ay / ratio), (b, ax, ay * ratio)],
                };
                for (b, ax, ay) in trials {
                    if !(alo..=ahi).contains(&ax) || !(alo..=ahi).contains(&ay) {
                        continue;
                    }
                    let cand = (obj.eval(b, ax, ay), b, ax, ay);
                    if better(cand, best) {
                        best = cand;
                    }
                }
            }
            if best == before {
                break;
            }
        }
    }
    let (score, beta, alpha_x, alpha_y) = best;
    Ok(Alignment {
        transform: Transform {
            beta,
            alpha_x,
            alpha_y,
            tx,
            ty,
        },
        score,
    })
}

/// Outcome of the search over all hierarchy regions.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxSimilarity {
    pub score: Score,
    pub layer: usize,
    pub index: usize,
    pub transform: Transform,
}

/// Aligns and scores the standard against every region of every layer and
/// returns the best (ties to the smaller layer, then the smaller index).
/// Regions repeated unchanged across layers are aligned once.
pub fn max_similarity(
    h: &SegmentationHierarchy,
    standard: &StandardRegion,
    cfg: &SimilarityConfig,
) -> Result<MaxSimilarity, SimilarityError> {
    cfg.validate()?;
    let mapper = MaskMapper::new(&standard.mask, standard.centroid)?;
    let mut cache: HashMap<&Mask, (Score, Transform)> = HashMap::new();
    let mut best: Option<MaxSimilarity> = None;
    for region in h.regions() {
        let (score, transform) = match cache.get(&region.mask) {
            Some(&hit) => hit,
            None => {
                let a = align_with(&mapper, &region.mask, cfg)?;
                let ts = TransformedStandard::from_mapper(standard, &mapper, a.transform, cfg.n_bins);
                let score = combined_similarity(region, &ts, cfg)?;
                cache.insert(&region.mask, (score, a.transform));
                (score, a.transform)
            }
        };
        if best.as_ref().is_none_or(|b| score.s > b.score.s) {
            best = Some(MaxSimilarity {
                score,
                layer: region.layer,
                index: region.index,
                transform,
            });
        }
    }
    best.ok_or(SimilarityError::HierarchyUnavailable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::Point;
    use approx::assert_relative_eq;

    fn disk(cx: i32, cy: i32, r: f64) -> Mask {
        let ri = r.ceil() as i32;
        let mut pts = Vec::new();
        for y in cy - ri..=cy + ri {
            for x in cx - ri..=cx + ri {
                let (dx, dy) = (f64::from(x - cx), f64::from(y - cy));
                if dx * dx + dy * dy <= r * r {
                    pts.push(Point::new(x, y));
                }
            }
        }
        Mask::from_points(pts)
    }

    fn rect(x0: i32, y0: i32, w: i32, h: i32) -> Mask {
        Mask::from_points((y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| Point::new(x, y))).collect())
    }

    /// An L shape: no rotational symmetry.
    fn ell() -> Mask {
        rect(10, 10, 6, 24).union(&rect(16, 28, 14, 6))
    }

    #[test]
    fn eq5_matrix_direction() {
        let (x, y) = map_relative(1.0, 0.0, 90.0, 1.0, 1.0);
        assert_relative_eq!(x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(y, -1.0, epsilon = 1e-12);
        let (x, y) = map_relative(3.0, 4.0, 0.0, 2.0, 1.0);
        assert_eq!((x, y), (6.0, 4.0));
    }

    #[test]
    fn identity_transforms() {
        let m = ell();
        let c = m.centroid().unwrap();
        assert_eq!(rotate_region(&m, c, 0.0).unwrap(), m);
        assert_eq!(rotate_region(&m, c, 360.0).unwrap(), m);
        assert_eq!(scale_region(&m, c, 1.0, 1.0).unwrap(), m);
    }

    #[test]
    fn single_point_maps() {
        let m = Mask::from_points(vec![Point::new(1, 0), Point::new(0, 0), Point::new(-1, 0)]);
        let r = rotate_region(&m, (0.0, 0.0), 90.0).unwrap();
        assert_eq!(r, Mask::from_points(vec![Point::new(0, -1), Point::new(0, 0), Point::new(0, 1)]));
    }

    #[test]
    fn scaled_disk_area() {
        let d = disk(30, 30, 10.0);
        let s = scale_region(&d, d.centroid().unwrap(), 2.0, 2.0).unwrap();
        let ratio = s.area() as f64 / d.area() as f64;
        assert!((ratio - 4.0).abs() <= 0.4, "ratio {ratio}");
    }

    #[test]
    fn rotation_round_trip() {
        let m = ell();
        let c = m.centroid().unwrap();
        for beta in [17.0, 30.0, 45.0, 90.0, 133.0] {
            let back = rotate_region(&rotate_region(&m, c, beta).unwrap(), c, -beta).unwrap();
            let agree = back.intersection_count(&m) as f64 / m.area().max(back.area()) as f64;
            assert!(agree >= 0.95, "beta {beta}: {agree}");
        }
    }

    #[test]
    fn scale_limits() {
        let m = ell();
        let c = m.centroid().unwrap();
        assert_eq!(scale_region(&m, c, 5.0, 1.0), Err(SimilarityError::ScaleOutOfRange(5.0)));
        assert_eq!(rotate_region(&Mask::default(), (0.0, 0.0), 1.0), Err(SimilarityError::EmptyRegion));
    }

    #[test]
    fn shape_measures() {
        let a = rect(0, 0, 10, 10);
        assert_eq!(shape_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(shape_similarity(&a, &rect(20, 0, 5, 5)).unwrap(), 0.0);
        assert_relative_eq!(shape_similarity(&a, &rect(0, 0, 6, 10)).unwrap(), 0.6);
        assert_relative_eq!(symmetric_overlap(&rect(0, 0, 6, 10), &a).unwrap(), 0.6);
        assert_eq!(shape_similarity(&Mask::default(), &a), Err(SimilarityError::EmptyRegion));
    }

    #[test]
    fn blend_weights() {
        assert_eq!(blend(0.0, 0.3, 0.7), 0.7);
        assert_eq!(blend(1.0, 0.3, 0.7), 0.3);
        assert_relative_eq!(blend(0.5, 0.607, 0.6), 0.6035, epsilon = 1e-6);
    }

    #[test]
    fn self_alignment_is_identity() {
        let m = ell();
        let cfg = SimilarityConfig::default();
        let a = align(&m, m.centroid().unwrap(), &m, &cfg).unwrap();
        let (db, ra) = cfg.refinement_step();
        assert!(a.transform.beta.abs() <= cfg.beta_step / 2.0);
        assert!(a.transform.alpha_x.ln().abs() <= ra.ln() + 1e-9);
        assert!(a.transform.alpha_y.ln().abs() <= ra.ln() + 1e-9);
        assert!(db > 0.0);
        assert!(a.score >= 0.98);
    }

    #[test]
    fn recovers_rotation() {
        let m = ell();
        let c = m.centroid().unwrap();
        let target = rotate_region(&m, c, 30.0).unwrap();
        let a = align(&m, c, &target, &SimilarityConfig::default()).unwrap();
        assert!((a.transform.beta - 30.0).abs() <= 5.0, "{:?}", a.transform);
        assert!(a.score >= 0.95, "{}", a.score);
    }

    #[test]
    fn recovers_scale() {
        let m = ell();
        let c = m.centroid().unwrap();
        let target = scale_region(&m, c, 1.5, 1.5).unwrap();
        let cfg = SimilarityConfig::default();
        let a = align(&m, c, &target, &cfg).unwrap();
        let (_, step) = cfg.refinement_step();
        assert!((a.transform.alpha_x / 1.5).ln().abs() <= step.ln(), "{:?}", a.transform);
        assert!((a.transform.alpha_y / 1.5).ln().abs() <= step.ln(), "{:?}", a.transform);
        assert!(a.score >= 0.95, "{}", a.score);
    }

    #[test]
    fn align_not_worse_than_identity() {
        let m = ell();
        let cand = rect(8, 12, 12, 20);
        let cfg = SimilarityConfig::default();
        let a = align(&m, m.centroid().unwrap(), &cand, &cfg).unwrap();
        let t = Transform {
            tx: cand.centroid().unwrap().0,
            ty: cand.centroid().unwrap().1,
            ..Transform::identity()
        };
        let id = MaskMapper::new(&m, m.centroid().unwrap()).unwrap().apply(&t).to_mask();
        assert!(a.score >= symmetric_overlap(&cand, &id).unwrap());
    }

    #[test]
    fn wrap() {
        assert_eq!(wrap_degrees(180.0), -180.0);
        assert_eq!(wrap_degrees(-180.0), -180.0);
        assert_eq!(wrap_degrees(190.0), -170.0);
        assert_eq!(wrap_degrees(-190.0), 170.0);
        assert_eq!(wrap_degrees(360.0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(SimilarityConfig::default().validate().is_ok());
        let c = SimilarityConfig { gamma: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SimilarityConfig { alpha_grid: vec![0.1], ..Default::default() };
        assert_eq!(c.validate(), Err(SimilarityError::ScaleOutOfRange(0.1)));
        let (db, ra) = SimilarityConfig::default().refinement_step();
        assert_eq!(db, 2.5);
        assert_relative_eq!(ra, 2f64.powf(0.125), epsilon = 1e-12);
    }
}
