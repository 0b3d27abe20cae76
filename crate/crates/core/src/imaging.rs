//! Small image helpers shared by the crop, reintegration and generator stages.

use image::{GrayImage, ImageBuffer, Pixel, RgbImage};
use sha2::{Digest, Sha256};

/// Bilinear sample at pixel-index coordinates `(x, y)` (pixel centres sit on
/// integers), clamping to the edge.
pub fn sample_bilinear(img: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    sample_bilinear_in(img, x, y, (0, 0, img.width() - 1, img.height() - 1))
}

/// As [`sample_bilinear`], clamped to the inclusive pixel box
/// `(x0, y0, x1, y1)`.
pub fn sample_bilinear_in(img: &RgbImage, x: f64, y: f64, bounds: (u32, u32, u32, u32)) -> [f64; 3] {
    let (bx0, by0, bx1, by1) = bounds;
    let x = x.clamp(bx0 as f64, bx1 as f64);
    let y = y.clamp(by0 as f64, by1 as f64);
    let xf = x.floor();
    let yf = y.floor();
    let fx = x - xf;
    let fy = y - yf;
    let x0 = xf as u32;
    let y0 = yf as u32;
    let x1 = (x0 + 1).min(bx1);
    let y1 = (y0 + 1).min(by1);
    let p00 = img.get_pixel(x0, y0).0;
    let p10 = img.get_pixel(x1, y0).0;
    let p01 = img.get_pixel(x0, y1).0;
    let p11 = img.get_pixel(x1, y1).0;
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = top * (1.0 - fy) + bottom * fy;
    }
    out
}

pub fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn rgb_from_f64(v: [f64; 3]) -> image::Rgb<u8> {
    image::Rgb([to_u8(v[0]), to_u8(v[1]), to_u8(v[2])])
}

/// Hex SHA-256 over the dimensions and raw bytes of a frame sequence.
pub fn frames_digest<P>(frames: &[ImageBuffer<P, Vec<u8>>]) -> String
where
    P: Pixel<Subpixel = u8>,
{
    let mut hasher = Sha256::new();
    hasher.update((frames.len() as u64).to_le_bytes());
    for f in frames {
        hasher.update(f.width().to_le_bytes());
        hasher.update(f.height().to_le_bytes());
        hasher.update(f.as_raw());
    }
    hex::encode(hasher.finalize())
}

/// PSNR in dB between two equally sized RGB images restricted to `region`
/// (non-zero entries). Returns `f64::INFINITY` for identical pixels.
pub fn psnr_masked(a: &RgbImage, b: &RgbImage, region: &GrayImage) -> f64 {
    let mut se = 0.0;
    let mut n = 0usize;
    for (x, y, m) in region.enumerate_pixels() {
        if m.0[0] == 0 {
            continue;
        }
        let pa = a.get_pixel(x, y).0;
        let pb = b.get_pixel(x, y).0;
        for c in 0..3 {
            let d = pa[c] as f64 - pb[c] as f64;
            se += d * d;
        }
        n += 3;
    }
    if n == 0 || se == 0.0 {
        return f64::INFINITY;
    }
    let mse = se / n as f64;
    10.0 * (255.0 * 255.0 / mse).log10()
}

pub fn is_all_zero<P>(img: &ImageBuffer<P, Vec<u8>>) -> bool
where
    P: Pixel<Subpixel = u8>,
{
    img.as_raw().iter().all(|&v| v == 0)
}
