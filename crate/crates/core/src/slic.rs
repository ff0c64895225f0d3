//! SLIC superpixels.
//!
//! Grid-seeded k-means in (L, a, b, x, y) with the assignment search of each
//! center restricted to a 2S×2S window, followed by a connectivity pass that
//! absorbs small fragments into their largest neighbor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::LabImage;
use crate::mask::components4;

#[derive(Debug, Error, PartialEq)]
pub enum SlicError {
    #[error("requested {requested} centers but the image has only {pixels} pixels")]
    TooManyCenters { requested: usize, pixels: usize },
    #[error("invalid SLIC configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicConfig {
    /// Number of seeds requested for a full image.
    pub k_init: usize,
    /// Weight of spatial against color distance.
    pub compactness: f64,
    pub max_iters: usize,
    /// Fragments below this fraction of the mean superpixel area are absorbed.
    pub min_region_frac: f64,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            k_init: 1000,
            compactness: 10.0,
            max_iters: 10,
            min_region_frac: 0.25,
        }
    }
}

impl SlicConfig {
    pub fn validate(&self) -> Result<(), SlicError> {
        if self.k_init < 1 {
            return Err(SlicError::InvalidConfig("k_init must be >= 1".into()));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(SlicError::InvalidConfig("compactness must be > 0".into()));
        }
        if self.max_iters < 1 {
            return Err(SlicError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.min_region_frac > 0.0 && self.min_region_frac < 1.0) {
            return Err(SlicError::InvalidConfig(
                "min_region_frac must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// A cluster center in (L, a, b, x, y).
pub type Center = [f64; 5];

/// Pixel → superpixel assignment with dense ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
    pub centers: Vec<Center>,
}

impl SuperpixelMap {
    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0; self.count()];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }
}

/// Seed count for an ROI cut from a larger image: the full-image budget
/// scaled by area, floored at 64 and capped at the ROI's pixel count.
pub fn roi_superpixel_count(k_init: usize, roi_area: usize, image_area: usize) -> usize {
    let scaled = (k_init as f64 * roi_area as f64 / image_area.max(1) as f64).round() as usize;
    scaled.max(64).min(roi_area.max(1))
}

/// Grid interval S for `k` centers.
pub fn grid_interval(width: u32, height: u32, k: usize) -> f64 {
    (f64::from(width) * f64::from(height) / k as f64).sqrt()
}

/// Squared central differences of the L channel, clamped at the border.
pub fn l_gradient(lab: &LabImage, x: u32, y: u32) -> f64 {
    let (w, h) = (lab.width(), lab.height());
    let l = |x: u32, y: u32| lab.get(x, y)[0];
    let dx = l((x + 1).min(w - 1), y) - l(x.saturating_sub(1), y);
    let dy = l(x, (y + 1).min(h - 1)) - l(x, y.saturating_sub(1));
    dx * dx + dy * dy
}

/// Places `k` seeds on a regular grid and nudges each to the lowest-gradient
/// pixel of its 3×3 neighborhood.
pub fn init_centers(lab: &LabImage, k: usize) -> Result<Vec<Center>, SlicError> {
    let (w, h) = (lab.width(), lab.height());
    let pixels = w as usize * h as usize;
    if k > pixels {
        return Err(SlicError::TooManyCenters {
            requested: k,
            pixels,
        });
    }
    if k == 0 {
        return Err(SlicError::InvalidConfig("k must be >= 1".into()));
    }
    let s = grid_interval(w, h, k);
    let nx = ((f64::from(w) / s).round() as u32).clamp(1, w);
    let ny = ((f64::from(h) / s).round() as u32).clamp(1, h);
    let step_x = f64::from(w) / f64::from(nx);
    let step_y = f64::from(h) / f64::from(ny);

    let mut centers = Vec::with_capacity((nx * ny) as usize);
    for j in 0..ny {
        for i in 0..nx {
            let sx = (((f64::from(i) + 0.5) * step_x) as u32).min(w - 1);
            let sy = (((f64::from(j) + 0.5) * step_y) as u32).min(h - 1);
            let (mut bx, mut by) = (sx, sy);
            let mut best = l_gradient(lab, sx, sy);
            for ny_ in sy.saturating_sub(1)..=(sy + 1).min(h - 1) {
                for nx_ in sx.saturating_sub(1)..=(sx + 1).min(w - 1) {
                    let g = l_gradient(lab, nx_, ny_);
                    if g < best {
                        best = g;
                        bx = nx_;
                        by = ny_;
                    }
                }
            }
            let c = lab.get(bx, by);
            centers.push([c[0], c[1], c[2], f64::from(bx), f64::from(by)]);
        }
    }
    Ok(centers)
}

/// Runs SLIC with `k` seeds (rather than `cfg.k_init`).
pub fn slic_segment_k(lab: &LabImage, k: usize, cfg: &SlicConfig) -> Result<SuperpixelMap, SlicError> {
    cfg.validate()?;
    let (w, h) = (lab.width() as usize, lab.height() as usize);
    let mut centers = init_centers(lab, k)?;
    let s = grid_interval(lab.width(), lab.height(), k);
    let spatial_weight = (cfg.compactness / s).powi(2);
    let reach = s.ceil() as i64;

    let mut labels = vec![0u32; w * h];
    let mut dist = vec![f64::INFINITY; w * h];
    for _ in 0..cfg.max_iters {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (id, c) in centers.iter().enumerate() {
            let cx = c[3].round() as i64;
            let cy = c[4].round() as i64;
            let x0 = (cx - reach).max(0) as usize;
            let x1 = ((cx + reach) as usize).min(w - 1);
            let y0 = (cy - reach).max(0) as usize;
            let y1 = ((cy + reach) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * w + x;
                    let p = lab.data()[i];
                    let dc = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2);
                    let ds = (x as f64 - c[3]).powi(2) + (y as f64 - c[4]).powi(2);
                    let d = dc + ds * spatial_weight;
                    // strict comparison: lower center id wins ties
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = id as u32;
                    }
                }
            }
        }

        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let p = lab.data()[i];
            let acc = &mut sums[l as usize];
            acc[0] += p[0];
            acc[1] += p[1];
            acc[2] += p[2];
            acc[3] += (i % w) as f64;
            acc[4] += (i / w) as f64;
            acc[5] += 1.0;
        }
        let mut movement = 0.0;
        for (c, acc) in centers.iter_mut().zip(&sums) {
            if acc[5] == 0.0 {
                continue;
            }
            for d in 0..5 {
                let v = acc[d] / acc[5];
                movement += (v - c[d]).abs();
                c[d] = v;
            }
        }
        if movement < 1.0 {
            break;
        }
    }

    let raw = SuperpixelMap {
        width: lab.width(),
        height: lab.height(),
        labels,
        centers,
    };
    Ok(enforce_connectivity(&raw, lab, cfg.min_region_frac))
}

pub fn slic_segment(lab: &LabImage, cfg: &SlicConfig) -> Result<SuperpixelMap, SlicError> {
    slic_segment_k(lab, cfg.k_init, cfg)
}

/// Splits every label into its 4-connected pieces, folds pieces smaller than
/// `min_region_frac` × mean superpixel area into the largest adjacent piece,
/// then renumbers densely by (original id, first pixel).
pub fn enforce_connectivity(sp: &SuperpixelMap, lab: &LabImage, min_region_frac: f64) -> SuperpixelMap {
    let (w, h) = (sp.width as usize, sp.height as usize);
    let (comp, ncomp) = components4(&sp.labels, w, h);
    let used = {
        let mut seen = vec![false; sp.centers.len().max(1)];
        for &l in &sp.labels {
            if (l as usize) < seen.len() {
                seen[l as usize] = true;
            }
        }
        seen.iter().filter(|&&s| s).count().max(1)
    };
    let threshold = min_region_frac * (w * h) as f64 / used as f64;

    let mut size = vec![0usize; ncomp];
    let mut first = vec![usize::MAX; ncomp];
    let mut orig = vec![0u32; ncomp];
    for (i, &c) in comp.iter().enumerate() {
        let c = c as usize;
        size[c] += 1;
        if first[c] == usize::MAX {
            first[c] = i;
            orig[c] = sp.labels[i];
        }
    }

    // neighbor sets between components
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); ncomp];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let a = comp[i];
            if x + 1 < w && comp[i + 1] != a {
                adj[a as usize].push(comp[i + 1]);
                adj[comp[i + 1] as usize].push(a);
            }
            if y + 1 < h && comp[i + w] != a {
                adj[a as usize].push(comp[i + w]);
                adj[comp[i + w] as usize].push(a);
            }
        }
    }
    for n in &mut adj {
        n.sort_unstable();
        n.dedup();
    }

    // union-find over components; absorbed pieces point at their host
    let mut parent: Vec<usize> = (0..ncomp).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut merged_size = size.clone();
    let mut small: Vec<usize> = (0..ncomp).filter(|&c| (size[c] as f64) < threshold).collect();
    small.sort_by_key(|&c| (size[c], c));
    for c in small {
        let root = find(&mut parent, c);
        if root != c || (merged_size[root] as f64) >= threshold {
            continue;
        }
        let mut best: Option<usize> = None;
        for &n in &adj[c] {
            let r = find(&mut parent, n as usize);
            if r == root {
                continue;
            }
            best = match best {
                Some(b) if merged_size[b] > merged_size[r] || (merged_size[b] == merged_size[r] && b < r) => Some(b),
                _ => Some(r),
            };
        }
        if let Some(host) = best {
            parent[root] = host;
            merged_size[host] += merged_size[root];
        }
    }

    // roots ordered by (original label, first pixel)
    let mut roots: Vec<usize> = (0..ncomp).filter(|&c| find(&mut parent, c) == c).collect();
    roots.sort_by_key(|&c| (orig[c], first[c]));
    let mut new_id = vec![u32::MAX; ncomp];
    for (k, &r) in roots.iter().enumerate() {
        new_id[r] = k as u32;
    }
    let labels: Vec<u32> = comp
        .iter()
        .map(|&c| {
            let r = find(&mut parent, c as usize);
            new_id[r]
        })
        .collect();

    let mut sums = vec![[0.0f64; 6]; roots.len()];
    for (i, &l) in labels.iter().enumerate() {
        let p = lab.data()[i];
        let acc = &mut sums[l as usize];
        acc[0] += p[0];
        acc[1] += p[1];
        acc[2] += p[2];
        acc[3] += (i % w) as f64;
        acc[4] += (i / w) as f64;
        acc[5] += 1.0;
    }
    let centers = sums
        .iter()
        .map(|a| [a[0] / a[5], a[1] / a[5], a[2] / a[5], a[3] / a[5], a[4] / a[5]])
        .collect();
    SuperpixelMap {
        width: sp.width,
        height: sp.height,
        labels,
        centers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{rgb_to_lab, RgbImage};

    fn uniform(w: u32, h: u32) -> LabImage {
        rgb_to_lab(&RgbImage::filled(w, h, [90, 120, 150]))
    }

    fn quadrants() -> RgbImage {
        RgbImage::from_fn(64, 64, |x, y| match (x < 32, y < 32) {
            (true, true) => [220, 30, 30],
            (false, true) => [30, 200, 40],
            (true, false) => [40, 40, 210],
            (false, false) => [230, 220, 60],
        })
    }

    fn is_partition(sp: &SuperpixelMap) -> bool {
        let areas = sp.areas();
        sp.labels.iter().all(|&l| (l as usize) < sp.count()) && areas.iter().all(|&a| a > 0)
    }

    fn all_connected(sp: &SuperpixelMap) -> bool {
        let (_, n) = components4(&sp.labels, sp.width as usize, sp.height as usize);
        n == sp.count()
    }

    #[test]
    fn uniform_grid_seeds() {
        let centers = init_centers(&uniform(100, 100), 4).unwrap();
        let xy: Vec<(f64, f64)> = centers.iter().map(|c| (c[3], c[4])).collect();
        assert_eq!(xy, vec![(25.0, 25.0), (75.0, 25.0), (25.0, 75.0), (75.0, 75.0)]);
        assert_eq!(grid_interval(100, 100, 4), 50.0);
    }

    #[test]
    fn too_many_centers() {
        let err = init_centers(&uniform(10, 10), 101).unwrap_err();
        assert_eq!(err, SlicError::TooManyCenters { requested: 101, pixels: 100 });
    }

    #[test]
    fn seed_avoids_bright_pixel() {
        let mut img = RgbImage::filled(100, 100, [80, 80, 80]);
        img.put_pixel(26, 25, [255, 255, 255]);
        let lab = rgb_to_lab(&img);
        let centers = init_centers(&lab, 4).unwrap();

        // oracle: exhaustive scan of the seed's 3×3 window, first minimum in
        // row-major order unless the seed itself is already minimal
        let grad = |x: i64, y: i64| {
            let l = |x: i64, y: i64| lab.get(x.clamp(0, 99) as u32, y.clamp(0, 99) as u32)[0];
            (l(x + 1, y) - l(x - 1, y)).powi(2) + (l(x, y + 1) - l(x, y - 1)).powi(2)
        };
        let mut best = (25i64, 25i64, grad(25, 25));
        for y in 24..=26 {
            for x in 24..=26 {
                if grad(x, y) < best.2 {
                    best = (x, y, grad(x, y));
                }
            }
        }
        assert!(grad(25, 25) > 0.0, "the seed sits on the bright pixel's gradient");
        assert_eq!((centers[0][3], centers[0][4]), (best.0 as f64, best.1 as f64));
        assert_ne!((centers[0][3], centers[0][4]), (25.0, 25.0));
    }

    #[test]
    fn quadrant_scene_recovered() {
        let lab = rgb_to_lab(&quadrants());
        let cfg = SlicConfig::default();
        let sp = slic_segment_k(&lab, 4, &cfg).unwrap();
        assert!(is_partition(&sp) && all_connected(&sp));
        // majority label per quadrant, then agreement
        let quadrant = |i: usize| ((i % 64) >= 32) as usize + 2 * (((i / 64) >= 32) as usize);
        let mut votes = vec![vec![0usize; sp.count()]; 4];
        for (i, &l) in sp.labels.iter().enumerate() {
            votes[quadrant(i)][l as usize] += 1;
        }
        let agree: usize = votes.iter().map(|v| *v.iter().max().unwrap()).sum();
        assert!(agree as f64 / 4096.0 >= 0.99, "agreement {agree}");
    }

    #[test]
    fn uniform_image_even_grid() {
        let sp = slic_segment_k(&uniform(64, 64), 4, &SlicConfig::default()).unwrap();
        assert_eq!(sp.count(), 4);
        for a in sp.areas() {
            assert!((a as f64 - 1024.0).abs() <= 0.2 * 1024.0, "area {a}");
        }
    }

    #[test]
    fn single_center() {
        let sp = slic_segment_k(&rgb_to_lab(&quadrants()), 1, &SlicConfig::default()).unwrap();
        assert_eq!(sp.count(), 1);
        assert!(sp.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn connected_map_is_fixed_point() {
        let lab = uniform(6, 4);
        let labels = vec![
            0, 0, 0, 1, 1, 1, //
            0, 0, 0, 1, 1, 1, //
            2, 2, 2, 3, 3, 3, //
            2, 2, 2, 3, 3, 3,
        ];
        let sp = SuperpixelMap { width: 6, height: 4, labels: labels.clone(), centers: vec![[0.0; 5]; 4] };
        let out = enforce_connectivity(&sp, &lab, 0.25);
        assert_eq!(out.labels, labels);
    }

    #[test]
    fn orphan_pixel_absorbed() {
        let lab = uniform(5, 5);
        let mut labels = vec![1u32; 25];
        labels[12] = 0;
        let sp = SuperpixelMap { width: 5, height: 5, labels, centers: vec![[0.0; 5]; 2] };
        let out = enforce_connectivity(&sp, &lab, 0.25);
        assert_eq!(out.count(), 1);
        assert!(out.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn disconnected_halves_split() {
        // label 0 in columns 0-1 and 4-5, label 1 in columns 2-3
        let lab = uniform(6, 4);
        let labels: Vec<u32> = (0..24).map(|i| if (2..4).contains(&(i % 6)) { 1 } else { 0 }).collect();
        let sp = SuperpixelMap { width: 6, height: 4, labels: labels.clone(), centers: vec![[0.0; 5]; 2] };
        let out = enforce_connectivity(&sp, &lab, 0.25);
        let (oracle, n) = components4(&labels, 6, 4);
        assert_eq!(n, 3);
        assert_eq!(out.count(), 3);
        // same partition as the component oracle
        for i in 0..24 {
            for j in 0..24 {
                assert_eq!(oracle[i] == oracle[j], out.labels[i] == out.labels[j]);
            }
        }
    }

    #[test]
    fn large_compactness_approaches_grid() {
        let cfg = SlicConfig { compactness: 1e4, ..SlicConfig::default() };
        let scene = slic_segment_k(&rgb_to_lab(&quadrants()), 16, &cfg).unwrap();
        let flat = slic_segment_k(&uniform(64, 64), 16, &cfg).unwrap();
        assert_eq!(scene.count(), flat.count());
        let agree = scene.labels.iter().zip(&flat.labels).filter(|(a, b)| a == b).count();
        assert!(agree as f64 / 4096.0 >= 0.95, "agreement {agree}");
    }

    #[test]
    fn deterministic_and_partitioned_on_noise() {
        let mut state = 12345u32;
        let img = RgbImage::from_fn(40, 30, |_, _| {
            state = state.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
            let b = state.to_le_bytes();
            [b[1], b[2], b[3]]
        });
        let lab = rgb_to_lab(&img);
        let a = slic_segment_k(&lab, 50, &SlicConfig::default()).unwrap();
        let b = slic_segment_k(&lab, 50, &SlicConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(is_partition(&a) && all_connected(&a));
        for c in &a.centers {
            assert!(c[3] >= 0.0 && c[3] <= 39.0 && c[4] >= 0.0 && c[4] <= 29.0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SlicConfig { k_init: 0, ..Default::default() }.validate().is_err());
        assert!(SlicConfig { compactness: 0.0, ..Default::default() }.validate().is_err());
        assert!(SlicConfig { min_region_frac: 1.0, ..Default::default() }.validate().is_err());
        assert!(SlicConfig::default().validate().is_ok());
    }

    #[test]
    fn roi_count_scaling() {
        assert_eq!(roi_superpixel_count(1000, 4096, 4096), 1000);
        assert_eq!(roi_superpixel_count(1000, 100 * 100, 1000 * 1000), 64);
        assert_eq!(roi_superpixel_count(1000, 40, 1000), 40);
        assert_eq!(roi_superpixel_count(1000, 64 * 64, 128 * 128), 250);
    }
}
