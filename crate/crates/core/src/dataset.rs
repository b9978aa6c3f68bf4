//! Unpaired dataset index, batch sampling, and the procedural toy dataset.
//!
//! Directory scans are lexicographic so an index is reproducible; batches are
//! drawn uniformly with replacement, seeded per iteration. The toy generator
//! writes disjoint normal-light scenes and gamma/gain-darkened low-light
//! scenes plus small held-out test splits.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::image_io::{self, ImageBuffer};
use crate::tensor::Tensor;

/// Paths of the two unpaired pools plus the sampling seed.
#[derive(Clone, Debug)]
pub struct DatasetIndex {
    pub low_paths: Vec<PathBuf>,
    pub normal_paths: Vec<PathBuf>,
    pub rng_seed: u64,
}

impl DatasetIndex {
    /// Scans two directories (lexicographic order) and validates the pools.
    pub fn scan(low_dir: &Path, normal_dir: &Path, rng_seed: u64) -> Result<Self> {
        let low_paths = list_images(low_dir)?;
        let normal_paths = list_images(normal_dir)?;
        if low_paths.is_empty() {
            return Err(Error::Dataset(format!("no images found in {}", low_dir.display())));
        }
        if normal_paths.is_empty() {
            return Err(Error::Dataset(format!("no images found in {}", normal_dir.display())));
        }
        for p in &low_paths {
            if normal_paths.contains(p) {
                return Err(Error::Dataset(format!(
                    "path {} appears in both pools",
                    p.display()
                )));
            }
        }
        Ok(DatasetIndex { low_paths, normal_paths, rng_seed })
    }
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("png") | Some("ppm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// All images of both pools decoded and resized to the training resolution.
pub struct LoadedDataset {
    pub low: Vec<Tensor<f32>>,
    pub normal: Vec<Tensor<f32>>,
}

impl LoadedDataset {
    pub fn load(index: &DatasetIndex, width: usize, height: usize) -> Result<Self> {
        let load_pool = |paths: &[PathBuf]| -> Result<Vec<Tensor<f32>>> {
            paths
                .iter()
                .map(|p| {
                    let img = image_io::read_image(p)?;
                    Ok(image_io::resize_bilinear(&image_io::to_tensor(&img), height, width))
                })
                .collect()
        };
        Ok(LoadedDataset { low: load_pool(&index.low_paths)?, normal: load_pool(&index.normal_paths)? })
    }
}

/// RNG for one training iteration; resuming at iteration `i` reproduces the
/// exact stream an unbroken run would use.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    r.set_stream(iteration.wrapping_add(1));
    r
}

/// Uniform-with-replacement batch of samples, horizontally flipped with
/// probability one half, stacked into `N x 3 x H x W`.
pub fn sample_batch(pool: &[Tensor<f32>], batch: usize, rng: &mut ChaCha20Rng) -> Tensor<f32> {
    assert!(!pool.is_empty(), "sample_batch from an empty pool");
    let shape = pool[0].shape().to_vec();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut data = Vec::with_capacity(batch * c * h * w);
    for _ in 0..batch {
        let idx = rng.random_range(0..pool.len());
        let flip = rng.random_bool(0.5);
        let img = &pool[idx];
        if flip {
            for ch in 0..c {
                for y in 0..h {
                    let row = &img.data()[(ch * h + y) * w..][..w];
                    data.extend(row.iter().rev());
                }
            }
        } else {
            data.extend_from_slice(img.data());
        }
    }
    Tensor::new(vec![batch, c, h, w], data)
}

/// Summary statistics emitted by [`generate_toyset`].
#[derive(Clone, Copy, Debug)]
pub struct ToysetSummary {
    pub count: usize,
    pub test_count: usize,
    pub normal_mean_luminance: f64,
    pub low_mean_luminance: f64,
}

/// Number of held-out images per domain written to `test_low`/`test_normal`.
pub const TEST_IMAGES: usize = 8;

/// Generates the synthetic unpaired dataset: `count` procedural normal-light
/// scenes and a disjoint set of `count` scenes darkened by per-image gamma in
/// `[2, 4]` and gain in `[0.1, 0.4]`, plus held-out test splits.
pub fn generate_toyset(
    dir: &Path,
    count: usize,
    seed: u64,
    width: usize,
    height: usize,
) -> Result<ToysetSummary> {
    assert!(count >= 1, "toyset needs at least one image per pool");
    let sub = |name: &str| dir.join(name);
    for name in ["normal", "low", "test_normal", "test_low"] {
        std::fs::create_dir_all(sub(name)).map_err(|e| Error::io(sub(name), e))?;
    }

    let mut normal_lum = 0f64;
    let mut low_lum = 0f64;
    let write = |name: &str, i: usize, img: &ImageBuffer| -> Result<()> {
        let path = sub(name).join(format!("img{i:04}.png"));
        image_io::write_image(&path, img)
    };

    for i in 0..count + TEST_IMAGES {
        // Scene streams: normal scenes use even stream ids, low-light scenes
        // odd ones, so the two pools never share a scene.
        let normal = scene(seed, 2 * i as u64, width, height);
        let (dark_src, mut rng_dark) = (scene(seed, 2 * i as u64 + 1, width, height), darkener(seed, i as u64));
        let low = darken(&dark_src, &mut rng_dark);

        let (n_buf, l_buf) = (image_io::from_tensor(&normal), image_io::from_tensor(&low));
        if i < count {
            write("normal", i, &n_buf)?;
            write("low", i, &l_buf)?;
            normal_lum += image_io::mean_luminance(&normal);
            low_lum += image_io::mean_luminance(&low);
        } else {
            write("test_normal", i - count, &n_buf)?;
            write("test_low", i - count, &l_buf)?;
        }
    }

    let summary = ToysetSummary {
        count,
        test_count: TEST_IMAGES,
        normal_mean_luminance: normal_lum / count as f64,
        low_mean_luminance: low_lum / count as f64,
    };
    let gap = summary.normal_mean_luminance - summary.low_mean_luminance;
    if gap < 0.25 {
        return Err(Error::Dataset(format!(
            "toyset luminance gap {gap:.3} below the required 0.25"
        )));
    }
    Ok(summary)
}

fn scene_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed ^ 0x51ed_2701_93af_c0de);
    r.set_stream(stream);
    r
}

fn darkener(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed ^ 0x0dd_ba11);
    r.set_stream(stream);
    r
}

/// One procedural normal-light scene: gradient background, a handful of
/// shapes, faint sinusoidal texture, luminance steered into [0.55, 0.70].
fn scene(seed: u64, stream: u64, width: usize, height: usize) -> Tensor<f32> {
    let mut rng = scene_rng(seed, stream);
    let mut px = vec![0f32; 3 * height * width];
    let c0: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.35..0.95));
    let c1: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.35..0.95));
    let shade = rng.random_range(0.75..0.95);
    for y in 0..height {
        let v = 1.0 - (1.0 - shade) * y as f32 / height.max(1) as f32;
        for x in 0..width {
            let t = x as f32 / width.max(1) as f32;
            for c in 0..3 {
                px[(c * height + y) * width + x] = (c0[c] * (1.0 - t) + c1[c] * t) * v;
            }
        }
    }

    let shapes = rng.random_range(4..=8);
    for _ in 0..shapes {
        let color: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.25..1.0));
        let alpha: f32 = rng.random_range(0.5..1.0);
        let cx = rng.random_range(0.0..width as f32);
        let cy = rng.random_range(0.0..height as f32);
        let rx = rng.random_range(0.08..0.35) * width as f32;
        let ry = rng.random_range(0.08..0.35) * height as f32;
        let disc = rng.random_bool(0.5);
        let x0 = (cx - rx).max(0.0) as usize;
        let x1 = ((cx + rx) as usize).min(width.saturating_sub(1));
        let y0 = (cy - ry).max(0.0) as usize;
        let y1 = ((cy + ry) as usize).min(height.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                if disc {
                    let dx = (x as f32 - cx) / rx;
                    let dy = (y as f32 - cy) / ry;
                    if dx * dx + dy * dy > 1.0 {
                        continue;
                    }
                }
                for c in 0..3 {
                    let p = &mut px[(c * height + y) * width + x];
                    *p = *p * (1.0 - alpha) + color[c] * alpha;
                }
            }
        }
    }

    let (fx, fy, phase): (f32, f32, f32) = (
        rng.random_range(0.05..0.4),
        rng.random_range(0.05..0.4),
        rng.random_range(0.0..std::f32::consts::TAU),
    );
    for y in 0..height {
        for x in 0..width {
            let tex = 0.02 * (fx * x as f32 + fy * y as f32 + phase).sin();
            for c in 0..3 {
                px[(c * height + y) * width + x] += tex;
            }
        }
    }

    // Steer the mean luminance into the normal-light band.
    let target: f32 = rng.random_range(0.55..0.70);
    let img = Tensor::new(vec![3, height, width], px);
    let lum = crate::image_io::mean_luminance(&img) as f32;
    let gain = if lum > 1e-3 { target / lum } else { 1.0 };
    img.scale(gain as f64).clamp(0.02, 0.98)
}

/// Low-light degradation: `out = gain * in^gamma` with per-image parameters.
fn darken(img: &Tensor<f32>, rng: &mut ChaCha20Rng) -> Tensor<f32> {
    let gain: f32 = rng.random_range(0.1..0.4);
    let gamma: f32 = rng.random_range(2.0..4.0);
    let data = img.data().iter().map(|v| gain * v.max(0.0).powf(gamma)).collect();
    Tensor::new(img.shape().to_vec(), data)
}
