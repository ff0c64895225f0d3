//! Per-channel RGB histograms and the histogram-ratio color distance.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("histogram bin counts differ: {0} vs {1}")]
pub struct BinCountMismatch(pub usize, pub usize);

/// Raw counts of R, G and B values in `bins` equal-width bins each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bins: usize,
    counts: [Vec<u64>; 3],
}

impl Histogram {
    pub fn new(bins: usize) -> Self {
        assert!((1..=256).contains(&bins), "bin count must lie in 1..=256");
        Self {
            bins,
            counts: [vec![0; bins], vec![0; bins], vec![0; bins]],
        }
    }

    pub fn from_pixels(bins: usize, pixels: impl IntoIterator<Item = [u8; 3]>) -> Self {
        let mut h = Self::new(bins);
        for p in pixels {
            h.add(p);
        }
        h
    }

    #[inline]
    pub fn bin_of(&self, value: u8) -> usize {
        usize::from(value) * self.bins / 256
    }

    pub fn add(&mut self, rgb: [u8; 3]) {
        for (c, &v) in rgb.iter().enumerate() {
            let b = self.bin_of(v);
            self.counts[c][b] += 1;
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Counts of channel `c` (0 = R, 1 = G, 2 = B).
    pub fn channel(&self, c: usize) -> &[u64] {
        &self.counts[c]
    }

    /// Number of pixels counted.
    pub fn total(&self) -> u64 {
        self.counts[0].iter().sum()
    }

    /// Bin-wise sum.
    pub fn merged(&self, other: &Histogram) -> Result<Histogram, BinCountMismatch> {
        if self.bins != other.bins {
            return Err(BinCountMismatch(self.bins, other.bins));
        }
        let mut out = self.clone();
        for c in 0..3 {
            for (a, b) in out.counts[c].iter_mut().zip(&other.counts[c]) {
                *a += b;
            }
        }
        Ok(out)
    }

    /// Each channel normalized to sum 1, then `smoothing / bins` added to
    /// every bin.
    pub fn smoothed(&self, smoothing: f64) -> [Vec<f64>; 3] {
        let total = self.total().max(1) as f64;
        let extra = smoothing / self.bins as f64;
        let ch = |c: usize| -> Vec<f64> {
            self.counts[c].iter().map(|&v| v as f64 / total + extra).collect()
        };
        [ch(0), ch(1), ch(2)]
    }
}

/// `(1/n) Σ_l Σ_channels |a[l] / b[l] − 1|` over prepared distributions.
/// `b` is the reference side and must be strictly positive.
pub fn ratio_distance(a: &[Vec<f64>; 3], b: &[Vec<f64>; 3]) -> Result<f64, BinCountMismatch> {
    let n = b[0].len();
    for c in 0..3 {
        if a[c].len() != n || b[c].len() != n {
            return Err(BinCountMismatch(a[c].len(), b[c].len()));
        }
    }
    let mut d = 0.0;
    for c in 0..3 {
        for (x, y) in a[c].iter().zip(&b[c]) {
            d += (x / y - 1.0).abs();
        }
    }
    Ok(d / n as f64)
}

/// Color distance of `a` measured against the reference `b`.
pub fn color_distance(a: &Histogram, b: &Histogram, smoothing: f64) -> Result<f64, BinCountMismatch> {
    if a.bins != b.bins {
        return Err(BinCountMismatch(a.bins, b.bins));
    }
    ratio_distance(&a.smoothed(smoothing), &b.smoothed(smoothing))
}

/// Mean of the two directed distances; symmetric in its arguments.
pub fn mutual_distance(a: &Histogram, b: &Histogram, smoothing: f64) -> Result<f64, BinCountMismatch> {
    Ok(0.5 * (color_distance(a, b, smoothing)? + color_distance(b, a, smoothing)?))
}

/// `exp(−d)`, so identical histograms score 1.
pub fn color_similarity(a: &Histogram, b: &Histogram, smoothing: f64) -> Result<f64, BinCountMismatch> {
    Ok((-color_distance(a, b, smoothing)?).exp())
}
