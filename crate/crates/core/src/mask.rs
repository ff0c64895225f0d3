//! Pixel-set geometry shared by the segmentation and matching stages.

use std::collections::VecDeque;

/// Integer pixel coordinate. Ordered row-major: by `y`, then `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub y: i32,
    pub x: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { y, x }
    }
}

/// A set of pixels, kept sorted row-major and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Mask {
    points: Vec<Point>,
}

/// Inclusive bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub min_x: i32,
    pub min_y: i32,
    pub max_x: i32,
    pub max_y: i32,
}

impl Bounds {
    pub fn width(&self) -> usize {
        (self.max_x - self.min_x + 1) as usize
    }

    pub fn height(&self) -> usize {
        (self.max_y - self.min_y + 1) as usize
    }
}

impl Mask {
    pub fn from_points(mut points: Vec<Point>) -> Self {
        points.sort_unstable();
        points.dedup();
        Self { points }
    }

    /// Builds a mask from a row-major boolean grid.
    pub fn from_bits(width: u32, bits: &[bool]) -> Self {
        let w = width as usize;
        let points = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| Point::new((i % w) as i32, (i / w) as i32))
            .collect();
        // enumeration order is already row-major
        Self { points }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn area(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.points.binary_search(&p).is_ok()
    }

    /// Mean pixel position `(x̄, ȳ)`; `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let (sx, sy) = self
            .points
            .iter()
            .fold((0i64, 0i64), |(sx, sy), p| (sx + i64::from(p.x), sy + i64::from(p.y)));
        let n = self.points.len() as f64;
        Some((sx as f64 / n, sy as f64 / n))
    }

    pub fn bounds(&self) -> Option<Bounds> {
        let first = self.points.first()?;
        let mut b = Bounds {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: self.points.last().map_or(first.y, |p| p.y),
        };
        for p in &self.points {
            b.min_x = b.min_x.min(p.x);
            b.max_x = b.max_x.max(p.x);
        }
        Some(b)
    }

    /// First pixel in row-major order (topmost, then leftmost).
    pub fn top_left(&self) -> Option<Point> {
        self.points.first().copied()
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        let (a, b) = (&self.points, &other.points);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn union(&self, other: &Mask) -> Mask {
        let mut points = Vec::with_capacity(self.points.len() + other.points.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.points, &other.points);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    points.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    points.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    points.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        points.extend_from_slice(&a[i..]);
        points.extend_from_slice(&b[j..]);
        Mask { points }
    }

    pub fn is_subset(&self, other: &Mask) -> bool {
        self.intersection_count(other) == self.area()
    }

    /// True when some pixel of `self` has a 4-neighbor in `other`.
    pub fn touches(&self, other: &Mask) -> bool {
        const NEIGHBORS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        self.points.iter().any(|p| {
            NEIGHBORS
                .iter()
                .any(|&(dx, dy)| other.contains(Point::new(p.x + dx, p.y + dy)))
        })
    }

    pub fn to_raster(&self) -> Option<Raster> {
        let b = self.bounds()?;
        let mut r = Raster::new(b.min_x, b.min_y, b.width(), b.height());
        for p in &self.points {
            r.set(p.x, p.y);
        }
        Some(r)
    }
}

/// Dense boolean grid anchored at `(x0, y0)`; everything outside is unset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub x0: i32,
    pub y0: i32,
    pub width: usize,
    pub height: usize,
    bits: Vec<bool>,
}

impl Raster {
    pub fn new(x0: i32, y0: i32, width: usize, height: usize) -> Self {
        Self {
            x0,
            y0,
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    #[inline]
    fn index(&self, x: i32, y: i32) -> Option<usize> {
        let lx = x - self.x0;
        let ly = y - self.y0;
        if lx < 0 || ly < 0 || lx as usize >= self.width || ly as usize >= self.height {
            None
        } else {
            Some(ly as usize * self.width + lx as usize)
        }
    }

    #[inline]
    pub fn get(&self, x: i32, y: i32) -> bool {
        self.index(x, y).is_some_and(|i| self.bits[i])
    }

    #[inline]
    pub fn set(&mut self, x: i32, y: i32) {
        if let Some(i) = self.index(x, y) {
            self.bits[i] = true;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Set pixels in absolute coordinates, row-major.
    pub fn iter_set(&self) -> impl Iterator<Item = Point> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| {
                Point::new(self.x0 + (i % self.width) as i32, self.y0 + (i / self.width) as i32)
            })
    }

    pub fn to_mask(&self) -> Mask {
        // row-major iteration keeps the point list sorted
        Mask {
            points: self.iter_set().collect(),
        }
    }

    /// Morphological closing with the 3×3 square element. The grid is
    /// assumed to carry a margin of at least two unset pixels so the dilated
    /// set never touches its edge.
    pub fn closing_candidates(&self) -> Vec<bool> {
        let (w, h) = (self.width, self.height);
        let dilated = separable(&self.bits, w, h, false);
        separable(&dilated, w, h, true)
    }

}

/// 3×3 dilation (`erode = false`) or erosion, computed as two 1-D passes.
/// Cells outside the grid count as unset.
fn separable(src: &[bool], w: usize, h: usize, erode: bool) -> Vec<bool> {
    let pick = |a: bool, b: bool, c: bool| if erode { a && b && c } else { a || b || c };
    let at = |v: &[bool], x: isize, y: isize| -> bool {
        if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
            false
        } else {
            v[y as usize * w + x as usize]
        }
    };
    let mut tmp = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            tmp[y as usize * w + x as usize] =
                pick(at(src, x - 1, y), at(src, x, y), at(src, x + 1, y));
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            out[y as usize * w + x as usize] =
                pick(at(&tmp, x, y - 1), at(&tmp, x, y), at(&tmp, x, y + 1));
        }
    }
    out
}

/// 4-connected component labeling of an id grid. Components are numbered
/// in row-major order of their first pixel; returns `(component_ids, count)`.
pub fn components4(ids: &[u32], width: usize, height: usize) -> (Vec<u32>, usize) {
    debug_assert_eq!(ids.len(), width * height);
    let mut comp = vec![u32::MAX; ids.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..ids.len() {
        if comp[start] != u32::MAX {
            continue;
        }
        let label = ids[start];
        comp[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if comp[j] == u32::MAX && ids[j] == label {
                    comp[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        next += 1;
    }
    (comp, next as usize)
}

/// Renumbers ids densely in order of first appearance (row-major).
pub fn densify(ids: &[u32]) -> (Vec<u32>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = ids
        .iter()
        .map(|&v| {
            let n = map.len() as u32;
            *map.entry(v).or_insert(n)
        })
        .collect();
    (out, map.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(pts: &[(i32, i32)]) -> Mask {
        Mask::from_points(pts.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    #[test]
    fn set_ops() {
        let a = mask(&[(0, 0), (1, 0), (2, 0)]);
        let b = mask(&[(2, 0), (3, 0)]);
        assert_eq!(a.intersection_count(&b), 1);
        assert_eq!(a.union(&b).area(), 4);
        assert!(!a.is_subset(&b));
        assert!(mask(&[(2, 0)]).is_subset(&a));
        assert!(a.touches(&mask(&[(1, 1)])));
        assert!(!a.touches(&mask(&[(5, 5)])));
        assert_eq!(a.centroid(), Some((1.0, 0.0)));
    }

    #[test]
    fn closing_fills_lattice_holes() {
        // every other pixel on a 5×5 lattice, margin of 2
        let mut r = Raster::new(-2, -2, 9, 9);
        for y in (0..5).step_by(2) {
            for x in (0..5).step_by(2) {
                r.set(x, y);
            }
        }
        let closed = r.closing_candidates();
        let filled = closed.iter().filter(|&&b| b).count();
        assert_eq!(filled, 25);
    }

    #[test]
    fn components_and_densify() {
        // 0 0 1
        // 1 0 1
        let ids = [0, 0, 1, 1, 0, 1];
        let (c, n) = components4(&ids, 3, 2);
        assert_eq!(n, 3);
        assert_eq!(c, vec![0, 0, 1, 2, 0, 1]);
        let (d, k) = densify(&[7, 7, 3, 9, 3]);
        assert_eq!(k, 3);
        assert_eq!(d, vec![0, 0, 1, 2, 1]);
    }

    proptest! {
        #[test]
        fn intersection_matches_naive(
            a in proptest::collection::vec((0i32..8, 0i32..8), 0..30),
            b in proptest::collection::vec((0i32..8, 0i32..8), 0..30),
        ) {
            let ma = mask(&a);
            let mb = mask(&b);
            let naive = ma.points().iter().filter(|p| mb.points().contains(p)).count();
            prop_assert_eq!(ma.intersection_count(&mb), naive);
            let u = ma.union(&mb);
            prop_assert_eq!(u.area(), ma.area() + mb.area() - naive);
            prop_assert!(u.points().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
