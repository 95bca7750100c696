//! Bicubic resampling with the cubic convolution kernel (a = -0.5),
//! antialiased when downscaling: the kernel is stretched by the inverse
//! scale so its footprint covers the source pixels that map onto one
//! output pixel. Edges replicate; weights are normalized to sum to one,
//! so constant images stay constant at any scale.

use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use crate::{Error, Result};

/// Cubic convolution kernel with a = -0.5.
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let t = x.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Contribution weights of source samples for one output position.
/// `u` is the source-space center of output index `i`; `kscale` stretches
/// the kernel for antialiased downscaling (min(scale, 1)).
fn axis_weights(out_len: usize, in_len: usize, scale: f64) -> Vec<(usize, Vec<f64>)> {
    let kscale = scale.min(1.0);
    let support = 2.0 / kscale;
    (0..out_len)
        .map(|i| {
            let u = (i as f64 + 0.5) / scale - 0.5;
            let lo = (u - support).ceil() as isize;
            let hi = (u + support).floor() as isize;
            // Accumulate clamped-edge contributions per source index.
            let mut per_src: Vec<(usize, f64)> = Vec::new();
            for j in lo..=hi {
                let w = cubic_kernel((u - j as f64) * kscale);
                if w == 0.0 {
                    continue;
                }
                let src = j.clamp(0, in_len as isize - 1) as usize;
                match per_src.iter_mut().find(|(s, _)| *s == src) {
                    Some((_, acc_w)) => *acc_w += w,
                    None => per_src.push((src, w)),
                }
            }
            per_src.sort_by_key(|&(s, _)| s);
            let sum: f64 = per_src.iter().map(|&(_, w)| w).sum();
            let start = per_src.first().map(|&(s, _)| s).unwrap_or(0);
            let mut weights =
                vec![0.0; per_src.last().map(|&(s, _)| s - start + 1).unwrap_or(0)];
            for (s, w) in per_src {
                weights[s - start] += w / sum;
            }
            (start, weights)
        })
        .collect()
}

fn resample_rows<T: Scalar>(x: &Tensor<T>, out_h: usize, scale: f64) -> Tensor<T> {
    let s = x.shape();
    let wts = axis_weights(out_h, s.h, scale);
    let mut data = vec![T::zero(); s.n * s.c * out_h * s.w];
    for plane in 0..s.n * s.c {
        let src = &x.data()[plane * s.h * s.w..][..s.h * s.w];
        let dst = &mut data[plane * out_h * s.w..][..out_h * s.w];
        for (oy, (start, ws)) in wts.iter().enumerate() {
            for (dj, &w) in ws.iter().enumerate() {
                let wv = T::from_f64(w);
                let srow = &src[(start + dj) * s.w..][..s.w];
                let drow = &mut dst[oy * s.w..][..s.w];
                for (d, &v) in drow.iter_mut().zip(srow) {
                    *d += wv * v;
                }
            }
        }
    }
    Tensor::from_vec(Shape::new(s.n, s.c, out_h, s.w), data).expect("resample shape")
}

fn resample_cols<T: Scalar>(x: &Tensor<T>, out_w: usize, scale: f64) -> Tensor<T> {
    let s = x.shape();
    let wts = axis_weights(out_w, s.w, scale);
    let mut data = vec![T::zero(); s.n * s.c * s.h * out_w];
    for plane in 0..s.n * s.c {
        let src = &x.data()[plane * s.h * s.w..][..s.h * s.w];
        let dst = &mut data[plane * s.h * out_w..][..s.h * out_w];
        for y in 0..s.h {
            let srow = &src[y * s.w..][..s.w];
            let drow = &mut dst[y * out_w..][..out_w];
            for (ox, (start, ws)) in wts.iter().enumerate() {
                let mut acc = T::zero();
                for (dj, &w) in ws.iter().enumerate() {
                    acc += T::from_f64(w) * srow[start + dj];
                }
                drow[ox] = acc;
            }
        }
    }
    Tensor::from_vec(Shape::new(s.n, s.c, s.h, out_w), data).expect("resample shape")
}

/// Channel-wise separable bicubic resize; output dims are
/// round(dim * scale).
pub fn bicubic_resize<T: Scalar>(img: &Tensor<T>, scale: f64) -> Result<Tensor<T>> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::invalid(format!("scale {scale} must be positive")));
    }
    let s = img.shape();
    let out_h = ((s.h as f64) * scale).round() as usize;
    let out_w = ((s.w as f64) * scale).round() as usize;
    if out_h == 0 || out_w == 0 {
        return Err(Error::shape(format!("resize of {s} by {scale} collapses to zero size")));
    }
    let rows = resample_rows(img, out_h, scale);
    let out = resample_cols(&rows, out_w, scale);
    out.assert_finite("bicubic_resize")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::oracle::max_abs_diff;

    #[test]
    fn kernel_interpolates_at_integers() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        assert_eq!(cubic_kernel(-1.0), 0.0);
        assert!(cubic_kernel(0.5) > 0.0);
        assert!(cubic_kernel(1.5) < 0.0);
    }

    #[test]
    fn scale_one_is_identity() {
        let mut r = {
            use rand::SeedableRng;
            rand_chacha::ChaCha8Rng::seed_from_u64(1)
        };
        let x = Tensor::<f64>::random_uniform(Shape::new(1, 3, 7, 9), 0.0, 1.0, &mut r);
        let y = bicubic_resize(&x, 1.0).unwrap();
        assert!(max_abs_diff(&x, &y) < 1e-12);
    }

    #[test]
    fn constant_image_stays_constant_at_any_scale() {
        let x = Tensor::<f64>::filled(Shape::new(1, 3, 8, 8), 0.437);
        for scale in [0.25, 0.5, 0.75, 1.5, 2.0, 3.0] {
            let y = bicubic_resize(&x, scale).unwrap();
            for &v in y.data() {
                assert!((v - 0.437).abs() < 1e-12, "scale {scale}");
            }
        }
    }

    /// Literal separable kernel sum, written independently of the
    /// weight-precomputation machinery: evaluates the stretched kernel
    /// against every source sample with edge replication, then
    /// normalizes.
    fn direct_oracle(x: &Tensor<f64>, scale: f64) -> Tensor<f64> {
        let s = x.shape();
        let out_h = ((s.h as f64) * scale).round() as usize;
        let out_w = ((s.w as f64) * scale).round() as usize;
        let kscale = scale.min(1.0);
        let sample_axis = |i: usize, len: usize| -> Vec<f64> {
            let u = (i as f64 + 0.5) / scale - 0.5;
            let mut w = vec![0.0; len];
            let mut j = u.floor() as isize - (2.0 / kscale).ceil() as isize - 2;
            let end = u.ceil() as isize + (2.0 / kscale).ceil() as isize + 2;
            while j <= end {
                let kv = cubic_kernel((u - j as f64) * kscale);
                let src = j.clamp(0, len as isize - 1) as usize;
                w[src] += kv;
                j += 1;
            }
            let total: f64 = w.iter().sum();
            w.iter().map(|v| v / total).collect()
        };
        let mut out = vec![0.0; s.n * s.c * out_h * out_w];
        for n in 0..s.n {
            for c in 0..s.c {
                for oy in 0..out_h {
                    let wy = sample_axis(oy, s.h);
                    for ox in 0..out_w {
                        let wx = sample_axis(ox, s.w);
                        let mut acc = 0.0;
                        for (sy, &wyv) in wy.iter().enumerate() {
                            for (sx, &wxv) in wx.iter().enumerate() {
                                acc += wyv * wxv * x.at(n, c, sy, sx);
                            }
                        }
                        out[((n * s.c + c) * out_h + oy) * out_w + ox] = acc;
                    }
                }
            }
        }
        Tensor::from_vec(Shape::new(s.n, s.c, out_h, out_w), out).unwrap()
    }

    #[test]
    fn ramp_downscale_matches_direct_kernel_sum() {
        let data: Vec<f64> = (0..64).map(|i| {
            let (y, x) = (i / 8, i % 8);
            (y as f64 * 0.1 + x as f64 * 0.05) / 1.05
        }).collect();
        let img = Tensor::<f64>::from_vec(Shape::new(1, 1, 8, 8), data).unwrap();
        let fast = bicubic_resize(&img, 0.5).unwrap();
        let slow = direct_oracle(&img, 0.5);
        assert_eq!(fast.shape(), slow.shape());
        assert!(max_abs_diff(&fast, &slow) < 1e-12);
    }

    #[test]
    fn upscale_matches_direct_kernel_sum() {
        use rand::SeedableRng;
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let img = Tensor::<f64>::random_uniform(Shape::new(1, 2, 6, 5), 0.0, 1.0, &mut r);
        let fast = bicubic_resize(&img, 2.0).unwrap();
        let slow = direct_oracle(&img, 2.0);
        assert!(max_abs_diff(&fast, &slow) < 1e-12);
    }

    #[test]
    fn degenerate_sizes_are_rejected() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 1, 4, 4));
        assert!(bicubic_resize(&x, 0.05).is_err());
        assert!(bicubic_resize(&x, -1.0).is_err());
        assert!(bicubic_resize(&x, f64::NAN).is_err());
    }
}
