//! No-reference image quality scoring.
//!
//! The quality model is fit on pristine images: luminance is normalized into
//! MSCN coefficients (local mean subtracted, local contrast divided out),
//! patches are selected by sharpness, and each patch yields 18 features per
//! scale (a generalized-Gaussian fit of the MSCN values plus asymmetric
//! generalized-Gaussian fits of four directional pairwise products) at two
//! scales. The score of an image is the Mahalanobis-type distance between
//! its feature statistics and the model's:
//!
//! ```text
//! score = sqrt((nu - mu)^T ((Sigma_model + Sigma_img)/2 + sigma*I)^-1 (nu - mu))
//! ```
//!
//! Lower is better. Scores are comparable only against a model fit with this
//! implementation.

use crate::checkpoint::Container;
use crate::error::{Error, Result};
use crate::image_io::luma;
use crate::tensor::Tensor;

/// Features per scale: 2 (GGD) + 4 products x 4 (AGGD).
const FEATURES_PER_SCALE: usize = 18;
/// Two scales.
pub const FEATURE_DIM: usize = 2 * FEATURES_PER_SCALE;
/// Ridge added to the pooled covariance at scoring time.
const SCORE_REGULARIZER: f64 = 1e-6;
/// Default patch size at the full scale.
pub const DEFAULT_PATCH: usize = 96;
/// Default sharpness selection quantile.
pub const DEFAULT_SHARPNESS_QUANTILE: f64 = 0.75;

/// Fitted natural-scene-statistics model.
#[derive(Clone, Debug)]
pub struct NiqeModel {
    /// Mean feature vector, length [`FEATURE_DIM`].
    pub mean: Vec<f64>,
    /// Covariance matrix, row-major `FEATURE_DIM x FEATURE_DIM`.
    pub cov: Vec<f64>,
    pub patch_size: usize,
    /// FNV-1a hash over the fitting corpus for provenance checks.
    pub corpus_hash: u64,
}

/// Grayscale plane with explicit dimensions, `f64` throughout.
#[derive(Clone, Debug)]
pub struct GrayImage {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn from_rgb(rgb: &Tensor<f32>) -> Self {
        let l = luma(rgb);
        GrayImage {
            h: l.shape()[0],
            w: l.shape()[1],
            data: l.data().iter().map(|&v| v as f64).collect(),
        }
    }

    /// 2x2 average-pool downsample, truncating odd edges.
    fn half(&self) -> GrayImage {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut data = vec![0f64; h * w];
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * self.w + 2 * x;
                data[y * w + x] =
                    0.25 * (self.data[i] + self.data[i + 1] + self.data[i + self.w] + self.data[i + self.w + 1]);
            }
        }
        GrayImage { h, w, data }
    }
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let p = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(p);
    if i >= n as isize {
        i = p - i;
    }
    i as usize
}

/// Normalized 7x7 Gaussian window with sigma = 7/6.
fn gaussian_window() -> [f64; 49] {
    let sigma = 7.0 / 6.0;
    let mut w = [0f64; 49];
    let mut sum = 0f64;
    for dy in -3isize..=3 {
        for dx in -3isize..=3 {
            let v = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
            w[((dy + 3) * 7 + dx + 3) as usize] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

fn gaussian_filter(img: &GrayImage, window: &[f64; 49]) -> Vec<f64> {
    let (h, w) = (img.h, img.w);
    let mut out = vec![0f64; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0f64;
            for dy in -3isize..=3 {
                let yy = reflect(y + dy, h);
                for dx in -3isize..=3 {
                    let xx = reflect(x + dx, w);
                    acc += window[((dy + 3) * 7 + dx + 3) as usize] * img.data[yy * w + xx];
                }
            }
            out[(y as usize) * w + x as usize] = acc;
        }
    }
    out
}

/// MSCN coefficients and the local deviation field:
/// `(I - mu_local) / (sigma_local + 1)`.
pub fn mscn_with_sigma(gray: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let window = gaussian_window();
    let mu = gaussian_filter(gray, &window);
    let sq = GrayImage {
        h: gray.h,
        w: gray.w,
        data: gray.data.iter().map(|v| v * v).collect(),
    };
    let musq = gaussian_filter(&sq, &window);
    let n = gray.data.len();
    let mut sigma = vec![0f64; n];
    let mut out = vec![0f64; n];
    for i in 0..n {
        sigma[i] = (musq[i] - mu[i] * mu[i]).max(0.0).sqrt();
        out[i] = (gray.data[i] - mu[i]) / (sigma[i] + 1.0);
    }
    (out, sigma)
}

/// MSCN coefficients only.
pub fn mscn(gray: &GrayImage) -> Vec<f64> {
    mscn_with_sigma(gray).0
}

fn gamma_fn(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Shape grid `[0.2, 10]` at 1e-3 resolution with the moment ratios used by
/// the GGD and AGGD fits, computed once.
fn shape_grid() -> &'static Vec<(f64, f64, f64)> {
    static GRID: std::sync::OnceLock<Vec<(f64, f64, f64)>> = std::sync::OnceLock::new();
    GRID.get_or_init(|| {
        let mut grid = Vec::with_capacity(9801);
        let mut g = 0.2f64;
        while g <= 10.0 {
            let (g1, g2, g3) = (gamma_fn(1.0 / g), gamma_fn(2.0 / g), gamma_fn(3.0 / g));
            // (shape, GGD ratio Γ1Γ3/Γ2², AGGD ratio Γ2²/(Γ1Γ3))
            grid.push((g, g1 * g3 / (g2 * g2), g2 * g2 / (g1 * g3)));
            g += 1e-3;
        }
        grid
    })
}

/// Generalized-Gaussian fit by moment matching over the shape grid
/// `[0.2, 10]` at 1e-3 resolution; returns `(shape, variance)`.
pub fn ggd_fit(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 100 {
        return Err(Error::Numeric(format!("ggd fit needs >= 100 samples, got {}", samples.len())));
    }
    let n = samples.len() as f64;
    let sigma_sq: f64 = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let mean_abs: f64 = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    if sigma_sq <= 0.0 || mean_abs <= 0.0 {
        return Err(Error::Numeric("ggd fit: degenerate (all-zero) samples".into()));
    }
    let rho = sigma_sq / (mean_abs * mean_abs);
    let mut best = (f64::INFINITY, 0.2);
    for &(g, ggd_ratio, _) in shape_grid() {
        let d = (ggd_ratio - rho).abs();
        if d < best.0 {
            best = (d, g);
        }
    }
    Ok((best.1, sigma_sq))
}

/// Asymmetric generalized-Gaussian fit; returns
/// `(shape alpha, left scale beta_l, right scale beta_r)`.
pub fn aggd_fit(samples: &[f64]) -> Result<(f64, f64, f64)> {
    if samples.len() < 100 {
        return Err(Error::Numeric(format!(
            "aggd fit needs >= 100 samples, got {}",
            samples.len()
        )));
    }
    let mut left_sq = 0f64;
    let mut left_n = 0usize;
    let mut right_sq = 0f64;
    let mut right_n = 0usize;
    let mut abs_sum = 0f64;
    let mut sq_sum = 0f64;
    for &v in samples {
        if v < 0.0 {
            left_sq += v * v;
            left_n += 1;
        } else if v > 0.0 {
            right_sq += v * v;
            right_n += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    if left_n == 0 || right_n == 0 || sq_sum <= 0.0 {
        return Err(Error::Numeric("aggd fit: degenerate samples".into()));
    }
    let left_std = (left_sq / left_n as f64).sqrt();
    let right_std = (right_sq / right_n as f64).sqrt();
    let n = samples.len() as f64;
    let gamma_hat = left_std / right_std;
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n);
    let r_hat_norm =
        r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0) / (gamma_hat.powi(2) + 1.0).powi(2);

    let mut best = (f64::INFINITY, 0.2);
    for &(g, _, aggd_ratio) in shape_grid() {
        let d = (aggd_ratio - r_hat_norm).abs();
        if d < best.0 {
            best = (d, g);
        }
    }
    let alpha = best.1;
    let scale = (gamma_fn(1.0 / alpha) / gamma_fn(3.0 / alpha)).sqrt();
    Ok((alpha, left_std * scale, right_std * scale))
}

/// 18 features of one MSCN patch: GGD of the coefficients, AGGD of the four
/// directional pairwise products.
fn patch_features(mscn: &[f64], h: usize, w: usize) -> Result<[f64; FEATURES_PER_SCALE]> {
    let mut feats = [0f64; FEATURES_PER_SCALE];
    let (alpha, sigma_sq) = ggd_fit(mscn)?;
    feats[0] = alpha;
    feats[1] = sigma_sq;

    // (dy, dx) shifts: horizontal, vertical, main diagonal, anti-diagonal.
    let shifts = [(0isize, 1isize), (1, 0), (1, 1), (1, -1)];
    for (s, &(dy, dx)) in shifts.iter().enumerate() {
        let mut products = Vec::with_capacity(h * w);
        for y in 0..h as isize {
            let yy = y + dy;
            if yy < 0 || yy >= h as isize {
                continue;
            }
            for x in 0..w as isize {
                let xx = x + dx;
                if xx < 0 || xx >= w as isize {
                    continue;
                }
                products.push(
                    mscn[y as usize * w + x as usize] * mscn[yy as usize * w + xx as usize],
                );
            }
        }
        let (alpha, beta_l, beta_r) = aggd_fit(&products)?;
        let eta = (beta_r - beta_l) * gamma_fn(2.0 / alpha) / gamma_fn(1.0 / alpha);
        let base = 2 + 4 * s;
        feats[base] = alpha;
        feats[base + 1] = eta;
        feats[base + 2] = beta_l * beta_l;
        feats[base + 3] = beta_r * beta_r;
    }
    Ok(feats)
}

struct PatchSet {
    /// One feature vector per full patch, row-major grid order.
    features: Vec<[f64; FEATURE_DIM]>,
    /// Mean local deviation per patch (sharpness proxy), same order.
    sharpness: Vec<f64>,
}

/// Features of every full `patch x patch` block at both scales.
fn image_patches(gray: &GrayImage, patch: usize) -> Result<PatchSet> {
    if patch < 16 || patch % 2 != 0 {
        return Err(Error::Numeric(format!("patch size must be even and >= 16, got {patch}")));
    }
    let (rows, cols) = (gray.h / patch, gray.w / patch);
    if rows == 0 || cols == 0 {
        return Err(Error::Numeric(format!(
            "image {}x{} too small for a {patch}-pixel patch",
            gray.h, gray.w
        )));
    }
    let (mscn1, sigma1) = mscn_with_sigma(gray);
    let half = gray.half();
    let (mscn2, _) = mscn_with_sigma(&half);

    let mut features = Vec::with_capacity(rows * cols);
    let mut sharpness = Vec::with_capacity(rows * cols);
    let extract = |src: &[f64], stride: usize, y0: usize, x0: usize, side: usize| -> Vec<f64> {
        let mut block = Vec::with_capacity(side * side);
        for y in 0..side {
            block.extend_from_slice(&src[(y0 + y) * stride + x0..][..side]);
        }
        block
    };
    for py in 0..rows {
        for px in 0..cols {
            let block1 = extract(&mscn1, gray.w, py * patch, px * patch, patch);
            let f1 = patch_features(&block1, patch, patch)?;
            let half_patch = patch / 2;
            let block2 = extract(&mscn2, half.w, py * half_patch, px * half_patch, half_patch);
            let f2 = patch_features(&block2, half_patch, half_patch)?;
            let mut f = [0f64; FEATURE_DIM];
            f[..FEATURES_PER_SCALE].copy_from_slice(&f1);
            f[FEATURES_PER_SCALE..].copy_from_slice(&f2);
            features.push(f);

            let sblock = extract(&sigma1, gray.w, py * patch, px * patch, patch);
            sharpness.push(sblock.iter().sum::<f64>() / sblock.len() as f64);
        }
    }
    Ok(PatchSet { features, sharpness })
}

fn fnv1a(bytes: &[u8], mut state: u64) -> u64 {
    for &b in bytes {
        state ^= b as u64;
        state = state.wrapping_mul(0x100_0000_01b3);
    }
    state
}

/// Fits the model on a pristine corpus: patches whose sharpness reaches the
/// per-image quantile contribute to the feature mean and covariance.
pub fn fit_model(
    corpus: &[Tensor<f32>],
    patch: usize,
    sharpness_quantile: f64,
) -> Result<NiqeModel> {
    if corpus.len() < 10 {
        return Err(Error::Numeric(format!(
            "model fit needs a corpus of >= 10 images, got {}",
            corpus.len()
        )));
    }
    if !(0.0..1.0).contains(&sharpness_quantile) {
        return Err(Error::Numeric(format!(
            "sharpness quantile must be in [0, 1), got {sharpness_quantile}"
        )));
    }
    let mut selected: Vec<[f64; FEATURE_DIM]> = Vec::new();
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for rgb in corpus {
        for &d in rgb.shape() {
            hash = fnv1a(&(d as u64).to_le_bytes(), hash);
        }
        for &v in rgb.data() {
            hash = fnv1a(&v.to_bits().to_le_bytes(), hash);
        }
        let gray = GrayImage::from_rgb(rgb);
        let patches = image_patches(&gray, patch)?;
        let mut order: Vec<usize> = (0..patches.sharpness.len()).collect();
        order.sort_by(|&a, &b| patches.sharpness[a].total_cmp(&patches.sharpness[b]));
        let cut = ((patches.sharpness.len() - 1) as f64 * sharpness_quantile).floor() as usize;
        let threshold = patches.sharpness[order[cut]];
        for (i, f) in patches.features.iter().enumerate() {
            if patches.sharpness[i] >= threshold {
                selected.push(*f);
            }
        }
    }
    let (mean, cov) = mean_covariance(&selected);
    Ok(NiqeModel { mean, cov, patch_size: patch, corpus_hash: hash })
}

fn mean_covariance(rows: &[[f64; FEATURE_DIM]]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len();
    let mut mean = vec![0f64; FEATURE_DIM];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n.max(1) as f64;
    }
    let mut cov = vec![0f64; FEATURE_DIM * FEATURE_DIM];
    if n >= 2 {
        for r in rows {
            for i in 0..FEATURE_DIM {
                let di = r[i] - mean[i];
                for j in 0..FEATURE_DIM {
                    cov[i * FEATURE_DIM + j] += di * (r[j] - mean[j]);
                }
            }
        }
        for c in &mut cov {
            *c /= (n - 1) as f64;
        }
    }
    (mean, cov)
}

/// Scores an image against a fitted model; lower is better.
pub fn niqe_score(image: &Tensor<f32>, model: &NiqeModel) -> Result<f64> {
    let gray = GrayImage::from_rgb(image);
    let patches = image_patches(&gray, model.patch_size)?;
    let (nu, img_cov) = mean_covariance(&patches.features);
    score_from_stats(&nu, &img_cov, model)
}

/// Mahalanobis-type distance given image feature statistics.
pub fn score_from_stats(nu: &[f64], img_cov: &[f64], model: &NiqeModel) -> Result<f64> {
    assert_eq!(nu.len(), FEATURE_DIM);
    let n = FEATURE_DIM;
    let mut pooled = vec![0f64; n * n];
    for i in 0..n * n {
        pooled[i] = 0.5 * (model.cov[i] + img_cov[i]);
    }
    for i in 0..n {
        pooled[i * n + i] += SCORE_REGULARIZER;
    }
    let diff: Vec<f64> = nu.iter().zip(&model.mean).map(|(a, b)| a - b).collect();
    let solved = solve_linear(&pooled, &diff)?;
    let quad: f64 = diff.iter().zip(&solved).map(|(d, s)| d * s).sum();
    Ok(quad.max(0.0).sqrt())
}

/// Solves `A x = b` by LU factorization with partial pivoting (f64).
pub fn solve_linear(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "solve_linear: matrix/vector size mismatch");
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[col * n + col].abs();
        for row in col + 1..n {
            let v = m[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return Err(Error::Numeric(
                "singular covariance even after regularization".into(),
            ));
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            x.swap(col, pivot);
        }
        let d = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
    }
    Ok(x)
}

/// Persists the model in the named-tensor container format.
pub fn model_to_container(model: &NiqeModel) -> Container {
    let mut c = Container::new();
    c.insert("niqe.mu", Tensor::new(vec![FEATURE_DIM], model.mean.iter().map(|&v| v as f32).collect()));
    c.insert(
        "niqe.sigma",
        Tensor::new(vec![FEATURE_DIM, FEATURE_DIM], model.cov.iter().map(|&v| v as f32).collect()),
    );
    c.set_meta("niqe_patch_size", model.patch_size.to_string());
    c.set_meta("niqe_corpus_hash", model.corpus_hash.to_string());
    c
}

pub fn model_from_container(c: &Container) -> Result<NiqeModel> {
    let mu = c.tensor("niqe.mu")?;
    let sigma = c.tensor("niqe.sigma")?;
    if mu.shape() != [FEATURE_DIM] || sigma.shape() != [FEATURE_DIM, FEATURE_DIM] {
        return Err(Error::Checkpoint("niqe tensors have unexpected shapes".into()));
    }
    Ok(NiqeModel {
        mean: mu.data().iter().map(|&v| v as f64).collect(),
        cov: sigma.data().iter().map(|&v| v as f64).collect(),
        patch_size: c.meta_value("niqe_patch_size")?.parse().map_err(|_| {
            Error::Checkpoint("niqe_patch_size is not an integer".into())
        })?,
        corpus_hash: c.meta_value("niqe_corpus_hash")?.parse().unwrap_or(0),
    })
}
