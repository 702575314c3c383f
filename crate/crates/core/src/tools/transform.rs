//! Geometric and intensity transforms.

use super::image::{nearest_index, ImageBuffer};

/// CLAHE tile grid (rows and columns).
pub const CLAHE_GRID: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResizeOptions {
    /// 0 is nearest neighbour; anything higher samples bilinearly.
    pub order: u32,
    /// When false, samples are divided by 255 after resampling.
    pub preserve_range: bool,
}

impl Default for ResizeOptions {
    fn default() -> Self {
        Self {
            order: 1,
            preserve_range: false,
        }
    }
}

/// Resamples every channel to `height` x `width` with half-pixel centres.
pub fn resize(image: &ImageBuffer, height: usize, width: usize, opts: ResizeOptions) -> ImageBuffer {
    assert!(height > 0 && width > 0, "target shape must be positive");
    let ch = image.channels;
    let mut out = Vec::with_capacity(height * width * ch);
    let scale_r = image.height as f64 / height as f64;
    let scale_c = image.width as f64 / width as f64;
    let coord = |i: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, s - lo as f64)
    };
    for r in 0..height {
        for c in 0..width {
            for k in 0..ch {
                let v = if opts.order == 0 {
                    image.at(nearest_index(r, height, image.height), nearest_index(c, width, image.width), k)
                } else {
                    let (r0, r1, fr) = coord(r, scale_r, image.height);
                    let (c0, c1, fc) = coord(c, scale_c, image.width);
                    let top = image.at(r0, c0, k) * (1.0 - fc) + image.at(r0, c1, k) * fc;
                    let bottom = image.at(r1, c0, k) * (1.0 - fc) + image.at(r1, c1, k) * fc;
                    top * (1.0 - fr) + bottom * fr
                };
                out.push(if opts.preserve_range { v } else { v / 255.0 });
            }
        }
    }
    ImageBuffer::new(width, height, ch, out)
}

/// Sets the channel count by replicating channel 0.
pub fn expand_channels(image: &ImageBuffer, channels: usize) -> ImageBuffer {
    assert!(channels >= 1);
    if channels == image.channels {
        return image.clone();
    }
    let base = image.plane(0);
    let mut samples = Vec::with_capacity(base.len() * channels);
    for v in base {
        samples.extend(std::iter::repeat_n(v, channels));
    }
    ImageBuffer::new(image.width, image.height, channels, samples)
}

/// Channels a tool acts on: one selected channel, or all of them.
fn channels(image: &ImageBuffer, channel: Option<usize>) -> Vec<usize> {
    match channel {
        Some(c) => vec![c],
        None => (0..image.channels).collect(),
    }
}

/// Intensity span used for binning: [0, 255] when every sample fits, else
/// the sample range.
fn span(plane: &[f64]) -> (f64, f64) {
    let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo >= 0.0 && hi <= 255.0 {
        (0.0, 255.0)
    } else {
        (lo, hi)
    }
}

fn bin_of(x: f64, lo: f64, hi: f64, nbins: usize) -> usize {
    let b = ((x - lo) / (hi - lo) * nbins as f64).floor();
    if b.is_nan() || b < 0.0 {
        0
    } else {
        (b as usize).min(nbins - 1)
    }
}

fn is_constant(plane: &[f64]) -> bool {
    plane.windows(2).all(|w| w[0] == w[1])
}

/// Normalized cumulative histogram of a (possibly clipped) histogram.
fn cdf(hist: &[f64]) -> Vec<f64> {
    let total: f64 = hist.iter().sum();
    let mut acc = 0.0;
    hist.iter()
        .map(|h| {
            acc += h;
            acc / total
        })
        .collect()
}

fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64, nbins: usize) -> Vec<f64> {
    let mut hist = vec![0.0; nbins];
    for x in values {
        hist[bin_of(x, lo, hi, nbins)] += 1.0;
    }
    hist
}

/// Global histogram equalization. Each sample maps to `lo + cdf(bin) * (hi - lo)`.
pub fn histeq(image: &ImageBuffer, nbins: usize, channel: Option<usize>) -> ImageBuffer {
    assert!(nbins >= 2);
    let mut out = image.clone();
    for c in channels(image, channel) {
        let plane = image.plane(c);
        if is_constant(&plane) {
            continue;
        }
        let (lo, hi) = span(&plane);
        let map = cdf(&histogram(plane.iter().copied(), lo, hi, nbins));
        let mapped: Vec<f64> = plane.iter().map(|x| lo + map[bin_of(*x, lo, hi, nbins)] * (hi - lo)).collect();
        out.set_plane(c, &mapped);
    }
    out
}

/// Per-tile transfer functions of one channel.
#[derive(Debug, Clone)]
pub struct ClaheTransfer {
    lo: f64,
    hi: f64,
    nbins: usize,
    row_bounds: Vec<(usize, usize)>,
    col_bounds: Vec<(usize, usize)>,
    /// `maps[tile_row][tile_col][bin]` in [0, 1].
    maps: Vec<Vec<Vec<f64>>>,
}

fn tile_bounds(len: usize, tiles: usize) -> Vec<(usize, usize)> {
    (0..tiles).map(|i| (i * len / tiles, (i + 1) * len / tiles)).collect()
}

/// Locates `pos` between tile centres: (lower tile, upper tile, weight of upper).
fn between(pos: usize, bounds: &[(usize, usize)]) -> (usize, usize, f64) {
    let centre = |i: usize| (bounds[i].0 + bounds[i].1) as f64 / 2.0;
    let p = pos as f64 + 0.5;
    if p <= centre(0) {
        return (0, 0, 0.0);
    }
    let last = bounds.len() - 1;
    if p >= centre(last) {
        return (last, last, 0.0);
    }
    let i = (0..last).find(|&i| p < centre(i + 1)).expect("p lies before the last centre");
    (i, i + 1, (p - centre(i)) / (centre(i + 1) - centre(i)))
}

impl ClaheTransfer {
    /// Builds clipped per-tile mappings. The clip level per bin is
    /// `clip_limit * tile_pixels` (at least 1); excess is spread evenly.
    pub fn build(plane: &[f64], width: usize, height: usize, nbins: usize, clip_limit: f64, grid: usize) -> Self {
        let (lo, hi) = span(plane);
        let grid_r = if height < grid || width < grid { 1 } else { grid };
        let grid_c = grid_r;
        let row_bounds = tile_bounds(height, grid_r);
        let col_bounds = tile_bounds(width, grid_c);
        let maps = row_bounds
            .iter()
            .map(|&(r0, r1)| {
                col_bounds
                    .iter()
                    .map(|&(c0, c1)| {
                        let values = (r0..r1).flat_map(|r| (c0..c1).map(move |c| plane[r * width + c]));
                        let mut hist = histogram(values, lo, hi, nbins);
                        let tile_pixels = ((r1 - r0) * (c1 - c0)) as f64;
                        let limit = (clip_limit * tile_pixels).max(1.0);
                        let mut excess = 0.0;
                        for h in hist.iter_mut() {
                            if *h > limit {
                                excess += *h - limit;
                                *h = limit;
                            }
                        }
                        let share = excess / nbins as f64;
                        hist.iter_mut().for_each(|h| *h += share);
                        cdf(&hist)
                    })
                    .collect()
            })
            .collect();
        Self {
            lo,
            hi,
            nbins,
            row_bounds,
            col_bounds,
            maps,
        }
    }

    /// Output value for intensity `x` at pixel (`row`, `col`).
    pub fn value_at(&self, row: usize, col: usize, x: f64) -> f64 {
        let b = bin_of(x, self.lo, self.hi, self.nbins);
        let (r0, r1, wr) = between(row, &self.row_bounds);
        let (c0, c1, wc) = between(col, &self.col_bounds);
        let m = |r: usize, c: usize| self.maps[r][c][b];
        let top = m(r0, c0) * (1.0 - wc) + m(r0, c1) * wc;
        let bottom = m(r1, c0) * (1.0 - wc) + m(r1, c1) * wc;
        self.lo + (top * (1.0 - wr) + bottom * wr) * (self.hi - self.lo)
    }

    /// Largest rise of any tile mapping between adjacent bins, in output units.
    pub fn max_step(&self) -> f64 {
        let mut best = 0.0f64;
        for row in &self.maps {
            for map in row {
                let mut prev = 0.0;
                for v in map {
                    best = best.max(v - prev);
                    prev = *v;
                }
            }
        }
        best * (self.hi - self.lo)
    }
}

/// Contrast-limited adaptive histogram equalization on an 8x8 tile grid.
/// Images smaller than the grid are equalized with a single tile.
pub fn clahe(image: &ImageBuffer, nbins: usize, clip_limit: f64, channel: Option<usize>) -> ImageBuffer {
    clahe_with_grid(image, nbins, clip_limit, channel, CLAHE_GRID)
}

pub fn clahe_with_grid(image: &ImageBuffer, nbins: usize, clip_limit: f64, channel: Option<usize>, grid: usize) -> ImageBuffer {
    assert!(nbins >= 2 && grid >= 1);
    let mut out = image.clone();
    for c in channels(image, channel) {
        let plane = image.plane(c);
        if is_constant(&plane) {
            continue;
        }
        let t = ClaheTransfer::build(&plane, image.width, image.height, nbins, clip_limit, grid);
        let mapped: Vec<f64> = plane
            .iter()
            .enumerate()
            .map(|(i, x)| t.value_at(i / image.width, i % image.width, *x))
            .collect();
        out.set_plane(c, &mapped);
    }
    out
}

/// Standardizes to zero mean and unit population standard deviation. A
/// constant channel becomes all zeros.
pub fn z_score(image: &ImageBuffer, channel: Option<usize>) -> ImageBuffer {
    let mut out = image.clone();
    for c in channels(image, channel) {
        let plane = image.plane(c);
        let n = plane.len() as f64;
        let mean = plane.iter().sum::<f64>() / n;
        let var = plane.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let mapped: Vec<f64> = if std == 0.0 {
            vec![0.0; plane.len()]
        } else {
            plane.iter().map(|x| (x - mean) / std).collect()
        };
        out.set_plane(c, &mapped);
    }
    out
}
