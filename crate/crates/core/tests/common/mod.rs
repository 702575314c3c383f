//! Shared test helpers: synthetic threshold-separable datasets, plans, and
//! an independent threshold oracle.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use kgflow::tools::image::{save_gray_png, save_mask_png};
use kgflow::tools::{ImageBuffer, MaskBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 32;
pub const FG_MIN: u8 = 160;
pub const BG_MAX: u8 = 120;

#[derive(Debug, Clone)]
pub struct Case {
    pub pixels: Vec<u8>,
    pub mask: Vec<bool>,
}

#[derive(Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub train_csv: PathBuf,
    pub test_csv: PathBuf,
    pub bindings: PathBuf,
    pub train: Vec<Case>,
    pub test: Vec<Case>,
}

fn case(rng: &mut ChaCha8Rng, offset: u8, noise: f64) -> Case {
    // A random rectangle of foreground covering a sizeable share of the image.
    let (h, w) = (rng.random_range(8..=20), rng.random_range(8..=20));
    let (r0, c0) = (rng.random_range(0..=SIDE - h), rng.random_range(0..=SIDE - w));
    let mut pixels = Vec::with_capacity(SIDE * SIDE);
    let mut mask = Vec::with_capacity(SIDE * SIDE);
    for r in 0..SIDE {
        for c in 0..SIDE {
            let inside = (r0..r0 + h).contains(&r) && (c0..c0 + w).contains(&c);
            mask.push(inside);
            pixels.push(if inside { rng.random_range(FG_MIN..=255) } else { offset });
        }
    }
    // Salt and pepper in equal parts; masks stay clean.
    if noise > 0.0 {
        for p in pixels.iter_mut() {
            let u: f64 = rng.random();
            if u < noise / 2.0 {
                *p = 0;
            } else if u < noise {
                *p = 255;
            }
        }
    }
    Case { pixels, mask }
}

fn write_split(dir: &Path, name: &str, cases: &[Case]) -> PathBuf {
    let mut csv = String::from("image,mask\n");
    for (i, c) in cases.iter().enumerate() {
        let img = format!("{name}_{i:02}.png");
        let mask = format!("{name}_{i:02}_mask.png");
        save_gray_png(&to_image(c), &dir.join(&img)).unwrap();
        save_mask_png(&to_mask(c), &dir.join(&mask)).unwrap();
        csv.push_str(&format!("{img},{mask}\n"));
    }
    let path = dir.join(format!("{name}.csv"));
    std::fs::write(&path, csv).unwrap();
    path
}

pub fn to_image(c: &Case) -> ImageBuffer {
    ImageBuffer::gray(SIDE, SIDE, c.pixels.iter().map(|p| f64::from(*p)).collect())
}

pub fn to_mask(c: &Case) -> MaskBuffer {
    MaskBuffer::new(SIDE, SIDE, c.mask.clone())
}

/// Writes `n_train` + `n_test` cases under `root` with manifests and a
/// bindings file. Training offsets are evenly spaced over [0, BG_MAX].
pub fn generate(root: &Path, n_train: usize, n_test: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train: Vec<Case> = (0..n_train)
        .map(|i| {
            let offset = if n_train == 1 {
                BG_MAX
            } else {
                (BG_MAX as usize * i / (n_train - 1)) as u8
            };
            case(&mut rng, offset, noise)
        })
        .collect();
    let test: Vec<Case> = (0..n_test)
        .map(|_| {
            let offset = rng.random_range(0..=BG_MAX);
            case(&mut rng, offset, noise)
        })
        .collect();
    let data = root.join("data");
    std::fs::create_dir_all(&data).unwrap();
    let train_csv = write_split(&data, "train", &train);
    let test_csv = write_split(&data, "test", &test);
    let bindings = root.join("bindings.json");
    std::fs::write(
        &bindings,
        r#"{"__header_params__": "image,mask", "learn": {"__input_images__": "data/train.csv"}, "think": {"__input_images__": "data/test.csv"}}"#,
    )
    .unwrap();
    Dataset {
        root: root.to_path_buf(),
        train_csv,
        test_csv,
        bindings,
        train,
        test,
    }
}

pub const TARGETS: [&str; 3] = ["lungs_chest_xr", "heart_chest_xr", "ribs_chest_xr"];

/// Reader plus three segmentation targets, as planner JSON.
pub fn three_target_plan() -> String {
    let mut sns = vec![r#""chest_xr_image": {"load_image": {"agents": {"reader": {"csv_path": "__input_images__", "header_params": "__header_params__", "supernode_output": true}}}}"#.to_string()];
    for t in TARGETS {
        let organ = t.split('_').next().unwrap();
        sns.push(format!(
            r#""{t}": {{
      "image_processing": {{"input": "chest_xr_image", "agents": {{
        "resize": {{"target_shape": "[32, 32]", "order": 0, "preserve_range": true, "anti_aliasing": false, "numpy_only": true}},
        "expand_channels": {{"number_of_channels": 1, "numpy_only": true}}}}}},
      "neural_net": {{"input_1": "chest_xr_image", "input_2": "from image_processing", "agents": {{
        "tf2_segmentation": {{"prediction_threshold": 0.5, "weights_path": "{t}", "supernode_output": true}}}}}},
      "save": {{"input_1": "chest_xr_image", "input_2": "{t}", "agents": {{
        "save_image": {{"mask_alpha": 0.5, "output_filename": "chest_xr_{organ}"}}}}}}}}"#
        ));
    }
    format!("{{\"chunks\": {{\n  {}\n}}}}\n", sns.join(",\n  "))
}

/// Independent brute force: the threshold in 0..=255 maximizing mean Dice
/// of {x >= t} against the masks, smallest on ties.
pub fn oracle_threshold(cases: &[Case]) -> (u8, f64) {
    let mut best = (0u8, f64::NEG_INFINITY);
    for t in 0..=255u8 {
        let mean = cases.iter().map(|c| oracle_dice(&predict(c, t), &c.mask)).sum::<f64>() / cases.len() as f64;
        if mean > best.1 {
            best = (t, mean);
        }
    }
    best
}

pub fn predict(c: &Case, t: u8) -> Vec<bool> {
    c.pixels.iter().map(|p| *p >= t).collect()
}

/// Dice by direct counting.
pub fn oracle_dice(a: &[bool], b: &[bool]) -> f64 {
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        na += *x as usize;
        nb += *y as usize;
        both += (*x && *y) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}
