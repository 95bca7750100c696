//! Peak signal-to-noise ratio on the luminance plane of studio-swing
//! BT.601 YCbCr, with border cropping. Identical images return the +inf
//! sentinel.

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Studio-swing BT.601 luma of RGB components in [0, 1].
pub fn luma_bt601(r: f64, g: f64, b: f64) -> f64 {
    (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0
}

fn luma_plane<T: Scalar>(img: &Tensor<T>) -> Vec<f64> {
    let s = img.shape();
    let hw = s.h * s.w;
    let mut out = vec![0.0; s.n * hw];
    for n in 0..s.n {
        for i in 0..hw {
            let r = img.data()[(n * 3) * hw + i].as_f64();
            let g = img.data()[(n * 3 + 1) * hw + i].as_f64();
            let b = img.data()[(n * 3 + 2) * hw + i].as_f64();
            out[n * hw + i] = luma_bt601(r, g, b).clamp(0.0, 1.0);
        }
    }
    out
}

/// PSNR in dB over the border-cropped Y plane of two 3-channel images in
/// [0, 1].
pub fn psnr_y<T: Scalar>(sr: &Tensor<T>, hr: &Tensor<T>, border: usize) -> Result<f64> {
    let s = sr.shape();
    if s != hr.shape() {
        return Err(Error::shape(format!("psnr shapes differ: {} vs {}", s, hr.shape())));
    }
    if s.c != 3 {
        return Err(Error::shape(format!("psnr expects 3-channel images, got {}", s.c)));
    }
    if s.h <= 2 * border || s.w <= 2 * border {
        return Err(Error::shape(format!("border {border} leaves no pixels of {s}")));
    }
    let (ya, yb) = (luma_plane(sr), luma_plane(hr));
    let hw = s.h * s.w;
    let mut acc = 0.0;
    let mut count = 0usize;
    for n in 0..s.n {
        for y in border..s.h - border {
            for x in border..s.w - border {
                let d = ya[n * hw + y * s.w + x] - yb[n * hw + y * s.w + x];
                acc += d * d;
                count += 1;
            }
        }
    }
    let mse = acc / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}
