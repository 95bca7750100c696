//! Independent reference implementations used to cross-check the fast
//! kernels. These are deliberately written as plain nested loops with
//! their own indexing, and stay separate from the implementation paths
//! they check.

use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Direct convolution by nested loops. Padding positions multiply
/// against an explicit zero so the multiply count matches the analytic
/// flops formula. Returns the output and the number of multiplies.
pub fn conv2d_reference<T: Scalar>(
    x: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    wshape: Shape,
    stride: usize,
    dilation: usize,
    padding: usize,
) -> (Tensor<T>, u64) {
    let xs = x.shape();
    let (c_out, c_in, k) = (wshape.n, wshape.c, wshape.h);
    assert_eq!(xs.c, c_in, "oracle channel mismatch");
    let oh = (xs.h + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
    let ow = (xs.w + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
    let mut out = vec![T::zero(); xs.n * c_out * oh * ow];
    let mut muls = 0u64;
    for n in 0..xs.n {
        for co in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[co];
                    for ci in 0..c_in {
                        for u in 0..k {
                            for v in 0..k {
                                let iy = (oy * stride + u * dilation) as isize - padding as isize;
                                let ix = (ox * stride + v * dilation) as isize - padding as isize;
                                let xv = if iy >= 0
                                    && (iy as usize) < xs.h
                                    && ix >= 0
                                    && (ix as usize) < xs.w
                                {
                                    x.at(n, ci, iy as usize, ix as usize)
                                } else {
                                    T::zero()
                                };
                                let wv = weight[((co * c_in + ci) * k + u) * k + v];
                                acc += wv * xv;
                                muls += 1;
                            }
                        }
                    }
                    out[((n * c_out + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    let t = Tensor::from_vec(Shape::new(xs.n, c_out, oh, ow), out).expect("oracle shape");
    (t, muls)
}

/// Sliding 2x2 mean at stride 2.
pub fn avg_pool2_reference<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (oh, ow) = (s.h / 2, s.w / 2);
    let quarter = T::from_f64(0.25);
    let mut out = vec![T::zero(); s.n * s.c * oh * ow];
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..oh {
                for j in 0..ow {
                    let m = (x.at(n, c, 2 * i, 2 * j)
                        + x.at(n, c, 2 * i, 2 * j + 1)
                        + x.at(n, c, 2 * i + 1, 2 * j)
                        + x.at(n, c, 2 * i + 1, 2 * j + 1))
                        * quarter;
                    out[((n * s.c + c) * oh + i) * ow + j] = m;
                }
            }
        }
    }
    Tensor::from_vec(Shape::new(s.n, s.c, oh, ow), out).expect("oracle shape")
}

/// Per-block max with row-major position bookkeeping.
pub fn max_pool2_reference<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<(usize, usize)>) {
    let s = x.shape();
    let (oh, ow) = (s.h / 2, s.w / 2);
    let mut out = vec![T::zero(); s.n * s.c * oh * ow];
    let mut positions = Vec::with_capacity(out.len());
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = x.at(n, c, 2 * i, 2 * j);
                    let mut pos = (2 * i, 2 * j);
                    for (di, dj) in [(0usize, 1usize), (1, 0), (1, 1)] {
                        let v = x.at(n, c, 2 * i + di, 2 * j + dj);
                        if v > best {
                            best = v;
                            pos = (2 * i + di, 2 * j + dj);
                        }
                    }
                    out[((n * s.c + c) * oh + i) * ow + j] = best;
                    positions.push(pos);
                }
            }
        }
    }
    (Tensor::from_vec(Shape::new(s.n, s.c, oh, ow), out).expect("oracle shape"), positions)
}

/// Replication upsampling by explicit index arithmetic.
pub fn upsample2_reference<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (oh, ow) = (s.h * 2, s.w * 2);
    let mut out = vec![T::zero(); s.n * s.c * oh * ow];
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..oh {
                for j in 0..ow {
                    out[((n * s.c + c) * oh + i) * ow + j] = x.at(n, c, i / 2, j / 2);
                }
            }
        }
    }
    Tensor::from_vec(Shape::new(s.n, s.c, oh, ow), out).expect("oracle shape")
}

/// Stride-2 indexing with the top-left phase.
pub fn subsample2_reference<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let (oh, ow) = (s.h / 2, s.w / 2);
    let mut out = vec![T::zero(); s.n * s.c * oh * ow];
    for n in 0..s.n {
        for c in 0..s.c {
            for i in 0..oh {
                for j in 0..ow {
                    out[((n * s.c + c) * oh + i) * ow + j] = x.at(n, c, 2 * i, 2 * j);
                }
            }
        }
    }
    Tensor::from_vec(Shape::new(s.n, s.c, oh, ow), out).expect("oracle shape")
}

/// Index remap oracle for the sub-pixel rearrangement.
pub fn pixel_shuffle_reference<T: Scalar>(x: &Tensor<T>, r: usize) -> Tensor<T> {
    let s = x.shape();
    let out_shape = Shape::new(s.n, s.c / (r * r), s.h * r, s.w * r);
    let mut out = vec![T::zero(); out_shape.len()];
    for n in 0..s.n {
        for co in 0..out_shape.c {
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let c = co * r * r + (oy % r) * r + (ox % r);
                    out[((n * out_shape.c + co) * out_shape.h + oy) * out_shape.w + ox] =
                        x.at(n, c, oy / r, ox / r);
                }
            }
        }
    }
    Tensor::from_vec(out_shape, out).expect("oracle shape")
}

/// Largest absolute difference between two equally-shaped tensors.
pub fn max_abs_diff<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff shapes");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs().as_f64())
        .fold(0.0, f64::max)
}
