//! Nested multi-granularity partitions of an ROI.
//!
//! The connected components of a label map are merged agglomeratively, one
//! adjacent pair at a time, always taking the pair with the smallest color
//! distance. Snapshots at 5, 4, 3 and 2 remaining regions become layers
//! 5..2, so every coarser layer is a union of regions of the finer one.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::histogram::{mutual_distance, BinCountMismatch, Histogram};
use crate::imaging::RgbImage;
use crate::mask::{components4, Mask, Point};
use crate::muis::LabelMap;

pub const MIN_LAYER: usize = 2;
pub const MAX_LAYER: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum HierarchyError {
    #[error("label map is constant; no hierarchy can be built")]
    HierarchyUnavailable,
    #[error("layer {layer} outside 2..={i_max}")]
    LayerOutOfRange { layer: usize, i_max: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Bins(#[from] BinCountMismatch),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub layer: usize,
    /// 1-based position within the layer.
    pub index: usize,
    pub mask: Mask,
    pub centroid: (f64, f64),
    pub hist: Histogram,
}

impl Region {
    pub fn area(&self) -> usize {
        self.mask.area()
    }

    pub fn touches_border(&self, width: u32, height: u32) -> bool {
        self.mask.bounds().is_some_and(|b| {
            b.min_x == 0 || b.min_y == 0 || b.max_x + 1 == width as i32 || b.max_y + 1 == height as i32
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationHierarchy {
    pub width: u32,
    pub height: u32,
    pub i_max: usize,
    pub layers: BTreeMap<usize, Vec<Region>>,
}

impl SegmentationHierarchy {
    pub fn regions_at_layer(&self, i: usize) -> Result<&[Region], HierarchyError> {
        self.layers
            .get(&i)
            .map(Vec::as_slice)
            .ok_or(HierarchyError::LayerOutOfRange {
                layer: i,
                i_max: self.i_max,
            })
    }

    /// All regions, layer by layer, in order.
    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.layers.values().flatten()
    }
}

struct Unit {
    points: Vec<Point>,
    hist: Histogram,
    top_left: Point,
    neighbors: BTreeSet<usize>,
}

/// Order-dependent merge key: distance, combined area, then the two
/// regions' topmost-leftmost pixels.
type MergeKey = (f64, usize, Point, Point);

fn merge_key(units: &[Option<Unit>], dist: f64, a: usize, b: usize) -> MergeKey {
    let (ua, ub) = (units[a].as_ref().unwrap(), units[b].as_ref().unwrap());
    let (lo, hi) = if ua.top_left < ub.top_left {
        (ua.top_left, ub.top_left)
    } else {
        (ub.top_left, ua.top_left)
    };
    (dist, ua.points.len() + ub.points.len(), lo, hi)
}

fn snapshot(units: &[Option<Unit>], layer: usize) -> Vec<Region> {
    let mut regions: Vec<Region> = units
        .iter()
        .flatten()
        .map(|u| {
            let mask = Mask::from_points(u.points.clone());
            let centroid = mask.centroid().expect("units are nonempty");
            Region {
                layer,
                index: 0,
                mask,
                centroid,
                hist: u.hist.clone(),
            }
        })
        .collect();
    regions.sort_by(|a, b| {
        b.area()
            .cmp(&a.area())
            .then_with(|| a.mask.top_left().cmp(&b.mask.top_left()))
    });
    for (j, r) in regions.iter_mut().enumerate() {
        r.index = j + 1;
    }
    regions
}

/// Builds layers `2..=min(5, components)` from the 4-connected components
/// of `labels`.
pub fn build_hierarchy(
    labels: &LabelMap,
    img: &RgbImage,
    n_bins: usize,
    hist_smoothing: f64,
) -> Result<SegmentationHierarchy, HierarchyError> {
    if labels.width != img.width() || labels.height != img.height() {
        return Err(HierarchyError::DimensionMismatch(format!(
            "label map {}x{} vs image {}x{}",
            labels.width,
            labels.height,
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (labels.width as usize, labels.height as usize);
    let (comp, count) = components4(&labels.labels, w, h);
    if count < MIN_LAYER {
        return Err(HierarchyError::HierarchyUnavailable);
    }

    let mut units: Vec<Option<Unit>> = (0..count)
        .map(|_| {
            Some(Unit {
                points: Vec::new(),
                hist: Histogram::new(n_bins),
                top_left: Point::new(i32::MAX, i32::MAX),
                neighbors: BTreeSet::new(),
            })
        })
        .collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let c = comp[i] as usize;
            let u = units[c].as_mut().unwrap();
            let p = Point::new(x as i32, y as i32);
            if u.points.is_empty() {
                u.top_left = p;
            }
            u.points.push(p);
            u.hist.add(img.pixel(x as u32, y as u32));
            let mut link = |j: usize| {
                let d = comp[j] as usize;
                if d != c {
                    units[c].as_mut().unwrap().neighbors.insert(d);
                    units[d].as_mut().unwrap().neighbors.insert(c);
                }
            };
            if x + 1 < w {
                link(i + 1);
            }
            if y + 1 < h {
                link(i + w);
            }
        }
    }

    let mut dist: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for a in 0..count {
        for &b in &units[a].as_ref().unwrap().neighbors {
            if a < b {
                let d = mutual_distance(
                    &units[a].as_ref().unwrap().hist,
                    &units[b].as_ref().unwrap().hist,
                    hist_smoothing,
                )?;
                dist.insert((a, b), d);
            }
        }
    }

    let i_max = count.min(MAX_LAYER);
    let mut layers = BTreeMap::new();
    let mut alive = count;
    loop {
        if alive <= i_max {
            layers.insert(alive, snapshot(&units, alive));
            if alive == MIN_LAYER {
                break;
            }
        }
        let mut best: Option<(MergeKey, usize, usize)> = None;
        for (&(a, b), &d) in &dist {
            let key = merge_key(&units, d, a, b);
            let better = match &best {
                None => true,
                Some((k, _, _)) => key.partial_cmp(k) == Some(std::cmp::Ordering::Less),
            };
            if better {
                best = Some((key, a, b));
            }
        }
        let (_, a, b) = best.expect("a partition with >= 2 regions has an adjacent pair");

        let ub = units[b].take().unwrap();
        for &n in &ub.neighbors {
            dist.remove(&(n.min(b), n.max(b)));
            if n != a {
                units[n].as_mut().unwrap().neighbors.remove(&b);
                units[n].as_mut().unwrap().neighbors.insert(a);
            }
        }
        {
            let ua = units[a].as_mut().unwrap();
            ua.points.extend(ub.points);
            ua.hist = ua.hist.merged(&ub.hist)?;
            ua.top_left = ua.top_left.min(ub.top_left);
            ua.neighbors.remove(&b);
            ua.neighbors.extend(ub.neighbors.into_iter().filter(|&n| n != a));
        }
        let neighbors: Vec<usize> = units[a].as_ref().unwrap().neighbors.iter().copied().collect();
        for n in neighbors {
            let d = mutual_distance(
                &units[a].as_ref().unwrap().hist,
                &units[n].as_ref().unwrap().hist,
                hist_smoothing,
            )?;
            dist.insert((a.min(n), a.max(n)), d);
        }
        alive -= 1;
    }

    Ok(SegmentationHierarchy {
        width: labels.width,
        height: labels.height,
        i_max,
        layers,
    })
}
