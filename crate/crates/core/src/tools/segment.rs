//! Threshold segmenter, Dice, and overlays.
//!
//! The segmenter scores a pixel 1 when its 8-bit intensity reaches a learned
//! threshold and 0 otherwise; `prediction_threshold` is then applied to that
//! score map. Intensities already in [0, 255] are rounded; anything else is
//! min-max rescaled to [0, 255] per image first.

use std::collections::BTreeMap;
use std::fmt;

use super::image::{to_u8, ImageBuffer, MaskBuffer};
use super::ToolError;

pub const WEIGHTS_VERSION: u32 = 1;
pub const MODEL_NAME: &str = "global_threshold";

/// 2|A∩B| / (|A| + |B|); two empty masks score 1.
pub fn dice(a: &MaskBuffer, b: &MaskBuffer) -> Result<f64, ToolError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(ToolError::DimensionMismatch {
            what: "dice".into(),
            left: (a.width, a.height),
            right: (b.width, b.height),
        });
    }
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return Ok(1.0);
    }
    let both = a.bits.iter().zip(&b.bits).filter(|(x, y)| **x && **y).count();
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Channel 0 quantized to 8 bits in the segmenter's score domain.
pub fn quantize(image: &ImageBuffer) -> Vec<u8> {
    let plane = image.plane(0);
    let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo >= 0.0 && hi <= 255.0 {
        plane.into_iter().map(to_u8).collect()
    } else if hi > lo {
        plane.into_iter().map(|x| to_u8((x - lo) / (hi - lo) * 255.0)).collect()
    } else {
        vec![0; plane.len()]
    }
}

/// Learned segmenter state, stored as a `key: value` text record.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmenterWeights {
    pub threshold: u8,
    pub prediction_threshold: f64,
    pub training_cases: usize,
    pub mean_dice: f64,
}

impl fmt::Display for SegmenterWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tool: tf2_segmentation")?;
        writeln!(f, "version: {WEIGHTS_VERSION}")?;
        writeln!(f, "model: {MODEL_NAME}")?;
        writeln!(f, "threshold: {}", self.threshold)?;
        writeln!(f, "prediction_threshold: {:?}", self.prediction_threshold)?;
        writeln!(f, "training_cases: {}", self.training_cases)?;
        writeln!(f, "mean_dice: {:?}", self.mean_dice)
    }
}

impl SegmenterWeights {
    pub fn parse(text: &str) -> Result<Self, String> {
        let fields: BTreeMap<&str, &str> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once(':')
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| format!("malformed line `{l}`"))
            })
            .collect::<Result<_, _>>()?;
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("missing `{k}`"));
        if get("tool")? != "tf2_segmentation" || get("model")? != MODEL_NAME {
            return Err("not a threshold segmenter record".into());
        }
        if get("version")? != WEIGHTS_VERSION.to_string() {
            return Err(format!("unsupported version {}", get("version")?));
        }
        let num = |k: &str| get(k)?.parse::<f64>().map_err(|e| format!("`{k}`: {e}"));
        Ok(Self {
            threshold: get("threshold")?.parse().map_err(|e| format!("`threshold`: {e}"))?,
            prediction_threshold: num("prediction_threshold")?,
            training_cases: get("training_cases")?.parse().map_err(|e| format!("`training_cases`: {e}"))?,
            mean_dice: num("mean_dice")?,
        })
    }
}

/// The segmenter decision for one quantized intensity.
fn predicts(q: u8, threshold: u8, prediction_threshold: f64) -> bool {
    let score = if q >= threshold { 1.0 } else { 0.0 };
    score >= prediction_threshold
}

fn nearest_plane(q: &[u8], width: usize, height: usize, to_w: usize, to_h: usize) -> Vec<u8> {
    if (width, height) == (to_w, to_h) {
        return q.to_vec();
    }
    let mut out = Vec::with_capacity(to_w * to_h);
    for r in 0..to_h {
        let sr = super::image::nearest_index(r, to_h, height);
        for c in 0..to_w {
            out.push(q[sr * width + super::image::nearest_index(c, to_w, width)]);
        }
    }
    out
}

/// Picks the threshold in 0..=255 maximizing mean Dice against the
/// reference masks, smallest threshold on ties. Predictions are compared at
/// each reference mask's geometry.
pub fn learn_threshold(pairs: &[(ImageBuffer, MaskBuffer)], prediction_threshold: f64) -> Result<SegmenterWeights, ToolError> {
    if pairs.is_empty() {
        return Err(ToolError::EmptyTrainingSet);
    }
    // Per pair: counts of pixels per intensity, overall and inside the reference.
    let stats: Vec<([u64; 256], [u64; 256], u64)> = pairs
        .iter()
        .map(|(img, mask)| {
            let q = nearest_plane(&quantize(img), img.width, img.height, mask.width, mask.height);
            let mut all = [0u64; 256];
            let mut inside = [0u64; 256];
            for (v, m) in q.iter().zip(&mask.bits) {
                all[*v as usize] += 1;
                if *m {
                    inside[*v as usize] += 1;
                }
            }
            (all, inside, mask.count() as u64)
        })
        .collect();

    let mut best: Option<(u8, f64)> = None;
    for t in 0..=255u8 {
        let total: f64 = stats
            .iter()
            .map(|(all, inside, reference)| {
                let (mut predicted, mut overlap) = (0u64, 0u64);
                for v in 0..=255u8 {
                    if predicts(v, t, prediction_threshold) {
                        predicted += all[v as usize];
                        overlap += inside[v as usize];
                    }
                }
                if predicted + reference == 0 {
                    1.0
                } else {
                    2.0 * overlap as f64 / (predicted + reference) as f64
                }
            })
            .sum();
        let mean = total / stats.len() as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((t, mean));
        }
    }
    let (threshold, mean_dice) = best.expect("256 candidates");
    Ok(SegmenterWeights {
        threshold,
        prediction_threshold,
        training_cases: pairs.len(),
        mean_dice,
    })
}

/// Applies learned weights. The mask matches `reference`'s geometry when
/// given, else the image's.
pub fn infer_mask(
    image: &ImageBuffer,
    weights: &SegmenterWeights,
    prediction_threshold: f64,
    reference: Option<(usize, usize)>,
) -> MaskBuffer {
    let (w, h) = reference.unwrap_or((image.width, image.height));
    let q = nearest_plane(&quantize(image), image.width, image.height, w, h);
    MaskBuffer::new(
        w,
        h,
        q.into_iter()
            .map(|v| predicts(v, weights.threshold, prediction_threshold))
            .collect(),
    )
}

/// Overlay colour for mask pixels.
pub const MASK_COLOR: [f64; 3] = [255.0, 0.0, 0.0];

/// Blends `MASK_COLOR` into channel 0 of `image` inside `mask`:
/// `(1 - alpha) * pixel + alpha * colour`. Returns an RGB image.
pub fn overlay(image: &ImageBuffer, mask: Option<&MaskBuffer>, alpha: f64) -> Result<ImageBuffer, ToolError> {
    let gray = image.plane(0);
    let mask = match mask {
        Some(m) if (m.width, m.height) != (image.width, image.height) => {
            return Err(ToolError::DimensionMismatch {
                what: "save_image".into(),
                left: (image.width, image.height),
                right: (m.width, m.height),
            })
        }
        other => other,
    };
    let mut samples = Vec::with_capacity(gray.len() * 3);
    for (i, g) in gray.iter().enumerate() {
        let inside = mask.is_some_and(|m| m.bits[i]);
        for color in MASK_COLOR {
            samples.push(if inside { (1.0 - alpha) * g + alpha * color } else { *g });
        }
    }
    Ok(ImageBuffer::new(image.width, image.height, 3, samples))
}
