//! Image and mask buffers plus 8-bit file IO.

use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use super::ToolError;

/// Row-major samples, channel-interleaved, float64 in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub samples: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), width * height * channels, "sample count does not match geometry");
        Self {
            width,
            height,
            channels,
            samples,
        }
    }

    pub fn gray(width: usize, height: usize, samples: Vec<f64>) -> Self {
        Self::new(width, height, 1, samples)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn at(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.samples[(row * self.width + col) * self.channels + channel]
    }

    /// One channel as a dense plane.
    pub fn plane(&self, channel: usize) -> Vec<f64> {
        self.samples.iter().skip(channel).step_by(self.channels).copied().collect()
    }

    pub fn set_plane(&mut self, channel: usize, plane: &[f64]) {
        assert_eq!(plane.len(), self.pixels());
        for (i, v) in plane.iter().enumerate() {
            self.samples[i * self.channels + channel] = *v;
        }
    }

    /// Little-endian sample bytes, for hashing.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.samples.len() * 8);
        for d in [self.width, self.height, self.channels] {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskBuffer {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl MaskBuffer {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "bit count does not match geometry");
        Self { width, height, bits }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.bits.len());
        out.extend_from_slice(&(self.width as u64).to_le_bytes());
        out.extend_from_slice(&(self.height as u64).to_le_bytes());
        out.extend(self.bits.iter().map(|b| *b as u8));
        out
    }

    /// Nearest-neighbour resample to another geometry.
    pub fn resized(&self, width: usize, height: usize) -> MaskBuffer {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut bits = Vec::with_capacity(width * height);
        for r in 0..height {
            let sr = nearest_index(r, height, self.height);
            for c in 0..width {
                let sc = nearest_index(c, width, self.width);
                bits.push(self.bits[sr * self.width + sc]);
            }
        }
        MaskBuffer::new(width, height, bits)
    }
}

/// Source index for output index `i` under half-pixel nearest sampling.
pub(crate) fn nearest_index(i: usize, out_len: usize, in_len: usize) -> usize {
    let s = ((i as f64 + 0.5) * in_len as f64 / out_len as f64).floor() as usize;
    s.min(in_len - 1)
}

/// Rounds half away from zero and clamps to the 8-bit range.
pub fn to_u8(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ToolError {
    ToolError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Loads a PNG or PGM file as a single-channel image with values in [0, 255].
pub fn load_gray(path: &Path) -> Result<ImageBuffer, ToolError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| ToolError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    Ok(ImageBuffer::gray(
        w as usize,
        h as usize,
        gray.into_raw().into_iter().map(f64::from).collect(),
    ))
}

/// Loads a mask file; any non-zero sample is foreground.
pub fn load_mask(path: &Path) -> Result<MaskBuffer, ToolError> {
    let img = load_gray(path)?;
    Ok(MaskBuffer::new(
        img.width,
        img.height,
        img.samples.iter().map(|v| *v > 0.0).collect(),
    ))
}

fn write(path: &Path, write: impl FnOnce(&Path) -> image::ImageResult<()>) -> Result<(), ToolError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    write(path).map_err(|e| io_err(path, e))
}

/// Writes channel 0 as an 8-bit grayscale PNG.
pub fn save_gray_png(image: &ImageBuffer, path: &Path) -> Result<(), ToolError> {
    let raw = image.plane(0).into_iter().map(to_u8).collect();
    let buf = GrayImage::from_raw(image.width as u32, image.height as u32, raw).expect("geometry checked");
    write(path, |p| buf.save_with_format(p, ImageFormat::Png))
}

/// Writes a mask as a 0/255 grayscale PNG.
pub fn save_mask_png(mask: &MaskBuffer, path: &Path) -> Result<(), ToolError> {
    let raw = mask.bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
    let buf = GrayImage::from_raw(mask.width as u32, mask.height as u32, raw).expect("geometry checked");
    write(path, |p| buf.save_with_format(p, ImageFormat::Png))
}

/// Writes an interleaved 3-channel image as an RGB PNG.
pub fn save_rgb_png(image: &ImageBuffer, path: &Path) -> Result<(), ToolError> {
    assert_eq!(image.channels, 3);
    let raw = image.samples.iter().map(|v| to_u8(*v)).collect();
    let buf = RgbImage::from_raw(image.width as u32, image.height as u32, raw).expect("geometry checked");
    write(path, |p| buf.save_with_format(p, ImageFormat::Png))
}
