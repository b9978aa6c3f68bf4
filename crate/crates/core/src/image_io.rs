//! Image reading/writing and tensor conversion.
//!
//! Supported formats: PNG (8-bit RGB/RGBA, alpha dropped on read) and binary
//! PPM (P6, maxval 255). PPM is byte-exact on round trips, which the
//! persistence tests rely on.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, `width * height * 3` bytes.
    pub pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height * 3, "pixel count must be width*height*3");
        ImageBuffer { width, height, pixels }
    }
}

/// Reads a PNG or PPM (P6) image, deciding by file extension.
pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    match extension(path) {
        Some("png") => read_png(path),
        Some("ppm") => read_ppm(path),
        _ => Err(Error::format("image", path, "unsupported extension (expected .png or .ppm)")),
    }
}

/// Writes a PNG or PPM (P6) image, deciding by file extension.
pub fn write_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    match extension(path) {
        Some("png") => write_png(path, img),
        Some("ppm") => write_ppm(path, img),
        _ => Err(Error::format("image", path, "unsupported extension (expected .png or .ppm)")),
    }
}

fn extension(path: &Path) -> Option<&str> {
    path.extension().and_then(|e| e.to_str()).map(|e| match e {
        "PNG" | "Png" => "png",
        "PPM" | "Ppm" => "ppm",
        other => other,
    })
}

fn read_png(path: &Path) -> Result<ImageBuffer> {
    let decoded = image::open(path).map_err(|e| Error::format("PNG", path, e.to_string()))?;
    let (rgb, width, height) = match decoded {
        image::DynamicImage::ImageRgb8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            (img.into_raw(), w, h)
        }
        image::DynamicImage::ImageRgba8(img) => {
            // Alpha is dropped.
            let (w, h) = (img.width() as usize, img.height() as usize);
            let raw = img.into_raw();
            let mut rgb = Vec::with_capacity(w * h * 3);
            for px in raw.chunks_exact(4) {
                rgb.extend_from_slice(&px[..3]);
            }
            (rgb, w, h)
        }
        other => {
            return Err(Error::format(
                "PNG",
                path,
                format!("unsupported color type {:?} (expected 8-bit RGB or RGBA)", other.color()),
            ))
        }
    };
    Ok(ImageBuffer::new(width, height, rgb))
}

fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.width as u32, img.height as u32, img.pixels.clone())
            .expect("ImageBuffer invariant violated");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::format("PNG", path, e.to_string()))
}

fn read_ppm(path: &Path) -> Result<ImageBuffer> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;

    let mut pos = 0usize;
    let magic = take_token(&bytes, &mut pos)
        .ok_or_else(|| Error::format("PPM", path, "missing magic"))?;
    if magic != b"P6" {
        return Err(Error::format(
            "PPM",
            path,
            format!("magic {:?} is not P6", String::from_utf8_lossy(magic)),
        ));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let tok = take_token(&bytes, &mut pos)
            .ok_or_else(|| Error::format("PPM", path, "truncated header"))?;
        *d = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("PPM", path, "bad header integer"))?;
    }
    let [width, height, maxval] = dims;
    if maxval != 255 {
        return Err(Error::format("PPM", path, format!("unsupported maxval {maxval} (only 255)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "truncated pixel data"),
        ));
    }
    Ok(ImageBuffer::new(width, height, bytes[pos..pos + need].to_vec()))
}

/// Next whitespace-delimited token, skipping `#` comments.
fn take_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some(&bytes[start..*pos])
}

fn write_ppm(path: &Path, img: &ImageBuffer) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write!(out, "P6\n{} {}\n255\n", img.width, img.height).map_err(|e| Error::io(path, e))?;
    out.write_all(&img.pixels).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// `3 x H x W` tensor in `[0, 1]`, planar channel order.
pub fn to_tensor(img: &ImageBuffer) -> Tensor<f32> {
    let (w, h) = (img.width, img.height);
    let mut data = vec![0f32; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                data[c * h * w + y * w + x] = img.pixels[(y * w + x) * 3 + c] as f32 / 255.0;
            }
        }
    }
    Tensor::new(vec![3, h, w], data)
}

/// Inverse of [`to_tensor`]: rounds half away from zero and clamps to `[0, 255]`.
pub fn from_tensor(t: &Tensor<f32>) -> ImageBuffer {
    assert_eq!(t.shape().len(), 3, "from_tensor expects 3 x H x W, got {:?}", t.shape());
    assert_eq!(t.shape()[0], 3, "from_tensor expects 3 channels, got {:?}", t.shape());
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let plane = h * w;
    let mut pixels = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = t.data()[c * plane + y * w + x] * 255.0;
                pixels[(y * w + x) * 3 + c] = (v.round().max(0.0).min(255.0)) as u8;
            }
        }
    }
    ImageBuffer::new(w, h, pixels)
}

/// Size record needed to undo [`pad_to_even`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRecord {
    pub height: usize,
    pub width: usize,
}

impl CropRecord {
    pub fn is_noop(&self, padded: &[usize]) -> bool {
        padded[padded.len() - 2] == self.height && padded[padded.len() - 1] == self.width
    }
}

/// Reflect-pads the bottom/right edges by at most one pixel so both spatial
/// dimensions are even (the squeeze step requires that).
pub fn pad_to_even<T: Scalar>(t: &Tensor<T>) -> (Tensor<T>, CropRecord) {
    let rank = t.shape().len();
    assert!(rank == 3, "pad_to_even expects 3 x H x W, got {:?}", t.shape());
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    let rec = CropRecord { height: h, width: w };
    let (nh, nw) = (h + h % 2, w + w % 2);
    if nh == h && nw == w {
        return (t.clone(), rec);
    }
    let mut data = vec![T::zero(); c * nh * nw];
    let mirror = |i: usize, n: usize| if i < n { i } else if n >= 2 { n - 2 } else { 0 };
    for ch in 0..c {
        for y in 0..nh {
            let sy = mirror(y, h);
            for x in 0..nw {
                let sx = mirror(x, w);
                data[(ch * nh + y) * nw + x] = t.data()[(ch * h + sy) * w + sx];
            }
        }
    }
    (Tensor::new(vec![c, nh, nw], data), rec)
}

/// Crops back to the recorded original size (top-left anchored).
pub fn crop_to_record<T: Scalar>(t: &Tensor<T>, rec: CropRecord) -> Tensor<T> {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    assert!(rec.height <= h && rec.width <= w, "crop record larger than tensor");
    if rec.height == h && rec.width == w {
        return t.clone();
    }
    let mut data = vec![T::zero(); c * rec.height * rec.width];
    for ch in 0..c {
        for y in 0..rec.height {
            let src = (ch * h + y) * w;
            let dst = (ch * rec.height + y) * rec.width;
            data[dst..dst + rec.width].copy_from_slice(&t.data()[src..src + rec.width]);
        }
    }
    (Tensor::new(vec![c, rec.height, rec.width], data)) as Tensor<T>
}

/// Bilinear resize of a `3 x H x W` tensor (half-pixel centers).
pub fn resize_bilinear(t: &Tensor<f32>, out_h: usize, out_w: usize) -> Tensor<f32> {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    if h == out_h && w == out_w {
        return t.clone();
    }
    let sy = h as f32 / out_h as f32;
    let sx = w as f32 / out_w as f32;
    let mut data = vec![0f32; c * out_h * out_w];
    for y in 0..out_h {
        let fy = ((y as f32 + 0.5) * sy - 0.5).max(0.0).min(h as f32 - 1.0);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f32;
        for x in 0..out_w {
            let fx = ((x as f32 + 0.5) * sx - 0.5).max(0.0).min(w as f32 - 1.0);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f32;
            for ch in 0..c {
                let p = |yy: usize, xx: usize| t.data()[(ch * h + yy) * w + xx];
                let top = p(y0, x0) * (1.0 - wx) + p(y0, x1) * wx;
                let bot = p(y1, x0) * (1.0 - wx) + p(y1, x1) * wx;
                data[(ch * out_h + y) * out_w + x] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], data)
}

/// Rec.601 luma of an RGB tensor (`3 x H x W` or `N x 3 x H x W` collapses
/// the leading dims), as a fresh `H x W` tensor.
pub fn luma<T: Scalar>(rgb: &Tensor<T>) -> Tensor<T> {
    assert_eq!(rgb.shape().len(), 3, "luma expects 3 x H x W, got {:?}", rgb.shape());
    let (h, w) = (rgb.shape()[1], rgb.shape()[2]);
    let plane = h * w;
    let d = rgb.data();
    let data: Vec<T> = (0..plane)
        .map(|i| {
            T::of_f64(
                0.299 * d[i].as_f64() + 0.587 * d[plane + i].as_f64() + 0.114 * d[2 * plane + i].as_f64(),
            )
        })
        .collect();
    Tensor::new(vec![h, w], data)
}

/// Mean Rec.601 luminance of an RGB tensor in `[0, 1]`.
pub fn mean_luminance(rgb: &Tensor<f32>) -> f64 {
    let l = luma(rgb);
    l.data().iter().map(|v| *v as f64).sum::<f64>() / l.numel() as f64
}
