//! Forward kernels and their vector-Jacobian products.
//!
//! Every operation validates shapes, checks the output for non-finite
//! values, and records itself on the tape when any input is tracked.
//! Kernels parallelize over independent output planes with a fixed
//! per-element accumulation order, so results (and therefore training
//! runs) are bitwise reproducible regardless of thread count.

use rayon::prelude::*;

use super::tape::{accumulate, OpRec, Record, SavedInput};
use super::{Parameter, Shape, Tape, Tensor};
use crate::scalar::Scalar;
use crate::{Error, Result};

fn unify_tapes<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Option<Tape<T>>> {
    let mut found: Option<Tape<T>> = None;
    for t in inputs {
        if let Some((tape, _)) = t.node() {
            match &found {
                None => found = Some(tape),
                Some(existing) => {
                    if !existing.same_tape(&tape) {
                        return Err(Error::TapeMismatch);
                    }
                }
            }
        }
    }
    Ok(found)
}

fn finish<T: Scalar>(
    op_name: &'static str,
    shape: Shape,
    data: Vec<T>,
    tape: Option<Tape<T>>,
    op: impl FnOnce() -> OpRec<T>,
) -> Result<Tensor<T>> {
    let node = tape.map(|tape| {
        let id = tape.push(Record { shape, op: op() });
        (tape, id)
    });
    let out = Tensor::with_node(shape, data, node);
    out.assert_finite(op_name)?;
    Ok(out)
}

/// Output extent of a 1-d convolution: floor((n + 2p - d(k-1) - 1)/s) + 1.
pub fn conv_out_extent(n: usize, k: usize, stride: usize, dilation: usize, padding: usize) -> Option<usize> {
    let span = dilation * (k - 1) + 1;
    let padded = n + 2 * padding;
    if padded < span {
        return None;
    }
    Some((padded - span) / stride + 1)
}

pub(crate) fn conv2d_out_shape(
    x: Shape,
    w: Shape,
    stride: usize,
    dilation: usize,
    padding: usize,
) -> Result<Shape> {
    if stride < 1 || dilation < 1 {
        return Err(Error::invalid("conv2d requires stride >= 1 and dilation >= 1"));
    }
    if w.c != x.c {
        return Err(Error::shape(format!(
            "conv2d channel mismatch: input has {} channels, weight expects {}",
            x.c, w.c
        )));
    }
    let oh = conv_out_extent(x.h, w.h, stride, dilation, padding);
    let ow = conv_out_extent(x.w, w.w, stride, dilation, padding);
    match (oh, ow) {
        (Some(oh), Some(ow)) if oh >= 1 && ow >= 1 => Ok(Shape::new(x.n, w.n, oh, ow)),
        _ => Err(Error::shape(format!(
            "conv2d produces a non-positive output size for input {} and kernel {}x{} (s={stride}, d={dilation}, p={padding})",
            x, w.h, w.w
        ))),
    }
}

/// Range of output positions whose sampled input index lies in [0, n).
/// The sampled index is o*stride + tap - padding.
fn valid_out_range(n: usize, out: usize, stride: usize, tap: usize, padding: usize) -> (usize, usize) {
    let lo = if tap >= padding {
        0
    } else {
        // smallest o with o*stride + tap - padding >= 0
        (padding - tap).div_ceil(stride)
    };
    let hi_idx = n as isize - 1 + padding as isize - tap as isize;
    if hi_idx < 0 {
        return (1, 0); // empty
    }
    let hi = (hi_idx as usize / stride).min(out.saturating_sub(1));
    (lo, hi)
}

/// Below this many multiply-adds a kernel runs on the calling thread;
/// splitting the work costs more than it saves.
const PAR_THRESHOLD: usize = 1 << 20;

/// Run `body` over enumerated chunks, in parallel only when the total
/// work justifies it. Either way each chunk is produced by exactly one
/// closure call with a fixed accumulation order, so results are bitwise
/// identical.
fn for_each_plane<T: Send, F: Fn(usize, &mut [T]) + Send + Sync>(
    buf: &mut [T],
    plane_len: usize,
    work: usize,
    body: F,
) {
    if work < PAR_THRESHOLD {
        buf.chunks_mut(plane_len).enumerate().for_each(|(i, p)| body(i, p));
    } else {
        buf.par_chunks_mut(plane_len).enumerate().for_each(|(i, p)| body(i, p));
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(
    x: &[T],
    xs: Shape,
    weight: &[T],
    bias: &[T],
    ws: Shape,
    stride: usize,
    dilation: usize,
    padding: usize,
    out_shape: Shape,
) -> Vec<T> {
    let (oh, ow) = (out_shape.h, out_shape.w);
    let (c_in, k) = (ws.c, ws.h);
    let mut out = vec![T::zero(); out_shape.len()];
    let work = out.len() * c_in * k * k;
    for_each_plane(&mut out, oh * ow, work, |plane, yplane| {
        let n = plane / ws.n;
        let co = plane % ws.n;
        yplane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..c_in {
            let xplane = &x[(n * c_in + ci) * xs.h * xs.w..][..xs.h * xs.w];
            for u in 0..k {
                for v in 0..k {
                    let wv = weight[((co * c_in + ci) * k + u) * k + v];
                    if wv == T::zero() {
                        continue;
                    }
                    let (oy_lo, oy_hi) = valid_out_range(xs.h, oh, stride, u * dilation, padding);
                    let (ox_lo, ox_hi) = valid_out_range(xs.w, ow, stride, v * dilation, padding);
                    if oy_lo > oy_hi || ox_lo > ox_hi {
                        continue;
                    }
                    for oy in oy_lo..=oy_hi {
                        let iy = oy * stride + u * dilation - padding;
                        let xrow = &xplane[iy * xs.w..][..xs.w];
                        let yrow = &mut yplane[oy * ow..][..ow];
                        if stride == 1 {
                            // ix = ox + v*d - p walks in lockstep with ox.
                            let off = ox_lo + v * dilation - padding;
                            for (yv, &xv) in
                                yrow[ox_lo..=ox_hi].iter_mut().zip(&xrow[off..])
                            {
                                *yv += wv * xv;
                            }
                        } else {
                            for ox in ox_lo..=ox_hi {
                                let ix = ox * stride + v * dilation - padding;
                                yrow[ox] += wv * xrow[ix];
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

/// dL/dx of conv2d; one (n, ci) plane at a time, deterministic order.
fn conv2d_backward_input<T: Scalar>(
    go: &[T],
    gos: Shape,
    weight: &[T],
    ws: Shape,
    xs: Shape,
    stride: usize,
    dilation: usize,
    padding: usize,
) -> Vec<T> {
    let (c_out, c_in, k) = (ws.n, ws.c, ws.h);
    let (oh, ow) = (gos.h, gos.w);
    let mut dx = vec![T::zero(); xs.len()];
    let work = go.len() * c_in * k * k;
    for_each_plane(&mut dx, xs.h * xs.w, work, |plane, dxplane| {
        let n = plane / c_in;
        let ci = plane % c_in;
        for co in 0..c_out {
            let goplane = &go[(n * c_out + co) * oh * ow..][..oh * ow];
            for u in 0..k {
                for v in 0..k {
                    let wv = weight[((co * c_in + ci) * k + u) * k + v];
                    if wv == T::zero() {
                        continue;
                    }
                    let (oy_lo, oy_hi) = valid_out_range(xs.h, oh, stride, u * dilation, padding);
                    let (ox_lo, ox_hi) = valid_out_range(xs.w, ow, stride, v * dilation, padding);
                    if oy_lo > oy_hi || ox_lo > ox_hi {
                        continue;
                    }
                    for oy in oy_lo..=oy_hi {
                        let iy = oy * stride + u * dilation - padding;
                        let dxrow = &mut dxplane[iy * xs.w..][..xs.w];
                        let gorow = &goplane[oy * ow..][..ow];
                        if stride == 1 {
                            let off = ox_lo + v * dilation - padding;
                            for (dv, &gv) in
                                dxrow[off..].iter_mut().zip(&gorow[ox_lo..=ox_hi])
                            {
                                *dv += wv * gv;
                            }
                        } else {
                            for ox in ox_lo..=ox_hi {
                                let ix = ox * stride + v * dilation - padding;
                                dxrow[ix] += wv * gorow[ox];
                            }
                        }
                    }
                }
            }
        }
    });
    dx
}

/// dL/dw and dL/db of conv2d; one co row at a time, deterministic order.
fn conv2d_backward_params<T: Scalar>(
    go: &[T],
    gos: Shape,
    x: &[T],
    xs: Shape,
    ws: Shape,
    stride: usize,
    dilation: usize,
    padding: usize,
) -> (Vec<T>, Vec<T>) {
    let (c_out, c_in, k) = (ws.n, ws.c, ws.h);
    let (oh, ow) = (gos.h, gos.w);
    let mut dw = vec![T::zero(); ws.len()];
    let mut db = vec![T::zero(); c_out];
    let work = go.len() * c_in * k * k;
    let body = |co: usize, dwrow: &mut [T], dbv: &mut T| {
            for n in 0..gos.n {
                let goplane = &go[(n * c_out + co) * oh * ow..][..oh * ow];
                for g in goplane {
                    *dbv += *g;
                }
                for ci in 0..c_in {
                    let xplane = &x[(n * c_in + ci) * xs.h * xs.w..][..xs.h * xs.w];
                    for u in 0..k {
                        for v in 0..k {
                            let (oy_lo, oy_hi) =
                                valid_out_range(xs.h, oh, stride, u * dilation, padding);
                            let (ox_lo, ox_hi) =
                                valid_out_range(xs.w, ow, stride, v * dilation, padding);
                            if oy_lo > oy_hi || ox_lo > ox_hi {
                                continue;
                            }
                            let mut acc = T::zero();
                            for oy in oy_lo..=oy_hi {
                                let iy = oy * stride + u * dilation - padding;
                                let xrow = &xplane[iy * xs.w..][..xs.w];
                                let gorow = &goplane[oy * ow..][..ow];
                                if stride == 1 {
                                    let off = ox_lo + v * dilation - padding;
                                    for (&gv, &xv) in
                                        gorow[ox_lo..=ox_hi].iter().zip(&xrow[off..])
                                    {
                                        acc += gv * xv;
                                    }
                                } else {
                                    for ox in ox_lo..=ox_hi {
                                        let ix = ox * stride + v * dilation - padding;
                                        acc += gorow[ox] * xrow[ix];
                                    }
                                }
                            }
                            dwrow[(ci * k + u) * k + v] += acc;
                        }
                    }
                }
            }
        };
    if work < PAR_THRESHOLD {
        dw.chunks_mut(c_in * k * k)
            .zip(db.iter_mut())
            .enumerate()
            .for_each(|(co, (dwrow, dbv))| body(co, dwrow, dbv));
    } else {
        dw.par_chunks_mut(c_in * k * k)
            .zip(db.par_iter_mut())
            .enumerate()
            .for_each(|(co, (dwrow, dbv))| body(co, dwrow, dbv));
    }
    (dw, db)
}

impl<T: Scalar> Tensor<T> {
    /// 2-d convolution with zero padding; bias added per output channel.
    pub fn conv2d(
        &self,
        w: &Parameter<T>,
        stride: usize,
        dilation: usize,
        padding: usize,
    ) -> Result<Tensor<T>> {
        let out_shape = conv2d_out_shape(self.shape(), w.wshape(), stride, dilation, padding)?;
        let inner = w.inner().borrow();
        let data = conv2d_forward(
            self.data(),
            self.shape(),
            &inner.weight,
            &inner.bias,
            w.wshape(),
            stride,
            dilation,
            padding,
            out_shape,
        );
        drop(inner);
        let tape = unify_tapes(&[self])?;
        finish("conv2d", out_shape, data, tape, || OpRec::Conv2d {
            x: SavedInput::of(self),
            w: w.clone(),
            stride,
            dilation,
            padding,
        })
    }

    fn pool_in_shape(&self, op: &'static str) -> Result<Shape> {
        let s = self.shape();
        if s.h == 0 || s.w == 0 {
            return Err(Error::shape(format!("{op} on empty spatial dims {s}")));
        }
        if s.h % 2 != 0 || s.w % 2 != 0 {
            return Err(Error::shape(format!(
                "{op} requires even spatial dims, got {s}; pad explicitly"
            )));
        }
        Ok(Shape::new(s.n, s.c, s.h / 2, s.w / 2))
    }

    /// 2x2 average pooling with stride 2.
    pub fn avg_pool2(&self) -> Result<Tensor<T>> {
        let out = self.pool_in_shape("avg_pool2")?;
        let s = self.shape();
        let quarter = T::from_f64(0.25);
        let x = self.data();
        let mut data = vec![T::zero(); out.len()];
        for plane in 0..s.n * s.c {
            let xp = &x[plane * s.h * s.w..][..s.h * s.w];
            let yp = &mut data[plane * out.h * out.w..][..out.h * out.w];
            for i in 0..out.h {
                for j in 0..out.w {
                    let base = 2 * i * s.w + 2 * j;
                    yp[i * out.w + j] =
                        (xp[base] + xp[base + 1] + xp[base + s.w] + xp[base + s.w + 1]) * quarter;
                }
            }
        }
        let tape = unify_tapes(&[self])?;
        finish("avg_pool2", out, data, tape, || OpRec::AvgPool2 { x: SavedInput::of(self) })
    }

    /// 2x2 max pooling with stride 2. Ties break to the first element in
    /// row-major order; backward routes the gradient to the argmax.
    pub fn max_pool2(&self) -> Result<Tensor<T>> {
        let out = self.pool_in_shape("max_pool2")?;
        let s = self.shape();
        let x = self.data();
        let mut data = vec![T::zero(); out.len()];
        let mut argmax = vec![0usize; out.len()];
        for plane in 0..s.n * s.c {
            let poff = plane * s.h * s.w;
            let xp = &x[poff..][..s.h * s.w];
            for i in 0..out.h {
                for j in 0..out.w {
                    let base = 2 * i * s.w + 2 * j;
                    let mut best = xp[base];
                    let mut best_at = base;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + di * s.w + dj;
                        if xp[idx] > best {
                            best = xp[idx];
                            best_at = idx;
                        }
                    }
                    data[plane * out.h * out.w + i * out.w + j] = best;
                    argmax[plane * out.h * out.w + i * out.w + j] = poff + best_at;
                }
            }
        }
        let tape = unify_tapes(&[self])?;
        finish("max_pool2", out, data, tape, || OpRec::MaxPool2 {
            x: SavedInput::of(self),
            argmax,
        })
    }

    /// Nearest-neighbor 2x upsampling: each pixel replicated over a 2x2
    /// block.
    pub fn nearest_upsample2(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        let out = Shape::new(s.n, s.c, s.h * 2, s.w * 2);
        let x = self.data();
        let mut data = vec![T::zero(); out.len()];
        for plane in 0..s.n * s.c {
            let xp = &x[plane * s.h * s.w..][..s.h * s.w];
            let yp = &mut data[plane * out.h * out.w..][..out.h * out.w];
            for i in 0..s.h {
                for j in 0..s.w {
                    let v = xp[i * s.w + j];
                    let base = 2 * i * out.w + 2 * j;
                    yp[base] = v;
                    yp[base + 1] = v;
                    yp[base + out.w] = v;
                    yp[base + out.w + 1] = v;
                }
            }
        }
        let tape = unify_tapes(&[self])?;
        finish("nearest_upsample2", out, data, tape, || OpRec::Upsample2 {
            x: SavedInput::of(self),
        })
    }

    /// Nearest-neighbor 2x downsampling keeping the top-left element of
    /// each 2x2 block.
    pub fn nearest_subsample2(&self) -> Result<Tensor<T>> {
        let out = self.pool_in_shape("nearest_subsample2")?;
        let s = self.shape();
        let x = self.data();
        let mut data = vec![T::zero(); out.len()];
        for plane in 0..s.n * s.c {
            let xp = &x[plane * s.h * s.w..][..s.h * s.w];
            let yp = &mut data[plane * out.h * out.w..][..out.h * out.w];
            for i in 0..out.h {
                for j in 0..out.w {
                    yp[i * out.w + j] = xp[2 * i * s.w + 2 * j];
                }
            }
        }
        let tape = unify_tapes(&[self])?;
        finish("nearest_subsample2", out, data, tape, || OpRec::Subsample2 {
            x: SavedInput::of(self),
        })
    }

    /// Rearranges r^2 channel groups into an r-times-larger spatial grid.
    /// Channel c maps to sub-offset (floor(c mod r^2 / r), c mod r) of
    /// output channel floor(c / r^2).
    pub fn pixel_shuffle(&self, r: usize) -> Result<Tensor<T>> {
        let s = self.shape();
        if r == 0 {
            return Err(Error::invalid("pixel_shuffle requires r >= 1"));
        }
        if s.c % (r * r) != 0 {
            return Err(Error::shape(format!(
                "pixel_shuffle: {} channels not divisible by r^2 = {}",
                s.c,
                r * r
            )));
        }
        let out = Shape::new(s.n, s.c / (r * r), s.h * r, s.w * r);
        let x = self.data();
        let mut data = vec![T::zero(); out.len()];
        for n in 0..s.n {
            for c in 0..s.c {
                let co = c / (r * r);
                let dy = (c % (r * r)) / r;
                let dx = c % r;
                let xp = &x[(n * s.c + c) * s.h * s.w..][..s.h * s.w];
                let yp = &mut data[(n * out.c + co) * out.h * out.w..][..out.h * out.w];
                for i in 0..s.h {
                    for j in 0..s.w {
                        yp[(i * r + dy) * out.w + (j * r + dx)] = xp[i * s.w + j];
                    }
                }
            }
        }
        let tape = unify_tapes(&[self])?;
        finish("pixel_shuffle", out, data, tape, || OpRec::PixelShuffle {
            x: SavedInput::of(self),
            r,
        })
    }

    /// 2x2 mean filter at stride 1 (zero padding on the bottom/right
    /// edge); output keeps the input size.
    pub fn avg_filter2(&self) -> Result<Tensor<T>> {
        let s = self.shape();
        if s.h == 0 || s.w == 0 {
            return Err(Error::shape(format!("avg_filter2 on empty spatial dims {s}")));
        }
        let quarter = T::from_f64(0.25);
        let x = self.data();
        let mut data = vec![T::zero(); s.len()];
        for plane in 0..s.n * s.c {
            let xp = &x[plane * s.h * s.w..][..s.h * s.w];
            let yp = &mut data[plane * s.h * s.w..][..s.h * s.w];
            for i in 0..s.h {
                for j in 0..s.w {
                    let mut acc = xp[i * s.w + j];
                    if j + 1 < s.w {
                        acc += xp[i * s.w + j + 1];
                    }
                    if i + 1 < s.h {
                        acc += xp[(i + 1) * s.w + j];
                        if j + 1 < s.w {
                            acc += xp[(i + 1) * s.w + j + 1];
                        }
                    }
                    yp[i * s.w + j] = acc * quarter;
                }
            }
        }
        let tape = unify_tapes(&[self])?;
        finish("avg_filter2", s, data, tape, || OpRec::AvgFilter2 { x: SavedInput::of(self) })
    }

    pub fn relu(&self) -> Result<Tensor<T>> {
        let data: Vec<T> = self.data().iter().map(|&v| v.max(T::zero())).collect();
        let tape = unify_tapes(&[self])?;
        finish("relu", self.shape(), data, tape, || OpRec::Relu { x: SavedInput::of(self) })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "add shape mismatch: {} vs {}",
                self.shape(),
                other.shape()
            )));
        }
        let data: Vec<T> =
            self.data().iter().zip(other.data()).map(|(&a, &b)| a + b).collect();
        let tape = unify_tapes(&[self, other])?;
        finish("add", self.shape(), data, tape, || OpRec::Add {
            a: SavedInput::of(self),
            b: SavedInput::of(other),
        })
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "mul shape mismatch: {} vs {}",
                self.shape(),
                other.shape()
            )));
        }
        let data: Vec<T> =
            self.data().iter().zip(other.data()).map(|(&a, &b)| a * b).collect();
        let tape = unify_tapes(&[self, other])?;
        finish("mul", self.shape(), data, tape, || OpRec::Mul {
            a: SavedInput::of(self),
            b: SavedInput::of(other),
        })
    }

    pub fn scale(&self, factor: T) -> Result<Tensor<T>> {
        let data: Vec<T> = self.data().iter().map(|&v| v * factor).collect();
        let tape = unify_tapes(&[self])?;
        finish("scale", self.shape(), data, tape, || OpRec::Scale {
            x: SavedInput::of(self),
            factor,
        })
    }

    /// Sum of all elements as a 1x1x1x1 tensor.
    pub fn sum(&self) -> Result<Tensor<T>> {
        let mut acc = T::zero();
        for &v in self.data() {
            acc += v;
        }
        let tape = unify_tapes(&[self])?;
        finish("sum", Shape::SCALAR, vec![acc], tape, || OpRec::Sum { x: SavedInput::of(self) })
    }

    /// Mean absolute error against `target` as a scalar tensor.
    pub fn l1_loss(&self, target: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != target.shape() {
            return Err(Error::shape(format!(
                "l1_loss shape mismatch: {} vs {}",
                self.shape(),
                target.shape()
            )));
        }
        let numel = T::from_f64(self.shape().len() as f64);
        let mut acc = T::zero();
        for (&a, &b) in self.data().iter().zip(target.data()) {
            acc += (a - b).abs();
        }
        let tape = unify_tapes(&[self, target])?;
        finish("l1_loss", Shape::SCALAR, vec![acc / numel], tape, || OpRec::L1Loss {
            a: SavedInput::of(self),
            b: SavedInput::of(target),
        })
    }
}

/// Concatenate along the channel axis; all inputs share (n, h, w).
pub fn concat_channels<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
    let base = first.shape();
    let mut c_total = 0;
    for t in inputs {
        let s = t.shape();
        if (s.n, s.h, s.w) != (base.n, base.h, base.w) {
            return Err(Error::shape(format!(
                "concat_channels mismatch: {} vs {}",
                s, base
            )));
        }
        c_total += s.c;
    }
    let out = Shape::new(base.n, c_total, base.h, base.w);
    let hw = base.h * base.w;
    let mut data = vec![T::zero(); out.len()];
    for n in 0..base.n {
        let mut c_off = 0;
        for t in inputs {
            let s = t.shape();
            let src = &t.data()[n * s.c * hw..][..s.c * hw];
            data[(n * c_total + c_off) * hw..][..s.c * hw].copy_from_slice(src);
            c_off += s.c;
        }
    }
    let tape = unify_tapes(inputs)?;
    finish("concat_channels", out, data, tape, || OpRec::ConcatChannels {
        xs: inputs.iter().map(|t| SavedInput::of(t)).collect(),
    })
}

/// Backward dispatch for one record; `lower` holds gradient slots of all
/// earlier nodes.
pub(crate) fn backward_record<T: Scalar>(rec: &Record<T>, go: &[T], lower: &mut [Option<Vec<T>>]) {
    let mut send = |input: &SavedInput<T>, grad: Vec<T>| {
        if let Some(id) = input.id {
            accumulate(&mut lower[id], input.shape.len(), &grad);
        }
    };
    match &rec.op {
        OpRec::Leaf => {}
        OpRec::Conv2d { x, w, stride, dilation, padding } => {
            let ws = w.wshape();
            let (dw, db) = conv2d_backward_params(
                go, rec.shape, &x.data, x.shape, ws, *stride, *dilation, *padding,
            );
            {
                // Serialized accumulation per parameter: shared weights
                // collect contributions from every use site.
                let inner = &mut *w.inner().borrow_mut();
                for (g, d) in inner.wgrad.iter_mut().zip(&dw) {
                    *g += *d;
                }
                for (g, d) in inner.bgrad.iter_mut().zip(&db) {
                    *g += *d;
                }
            }
            if x.id.is_some() {
                let weight = w.inner().borrow().weight.clone();
                let dx = conv2d_backward_input(
                    go, rec.shape, &weight, ws, x.shape, *stride, *dilation, *padding,
                );
                send(x, dx);
            }
        }
        OpRec::AvgPool2 { x } => {
            let s = x.shape;
            let out = rec.shape;
            let quarter = T::from_f64(0.25);
            let mut dx = vec![T::zero(); s.len()];
            for plane in 0..s.n * s.c {
                let gp = &go[plane * out.h * out.w..][..out.h * out.w];
                let dp = &mut dx[plane * s.h * s.w..][..s.h * s.w];
                for i in 0..out.h {
                    for j in 0..out.w {
                        let g = gp[i * out.w + j] * quarter;
                        let base = 2 * i * s.w + 2 * j;
                        dp[base] += g;
                        dp[base + 1] += g;
                        dp[base + s.w] += g;
                        dp[base + s.w + 1] += g;
                    }
                }
            }
            send(x, dx);
        }
        OpRec::MaxPool2 { x, argmax } => {
            let mut dx = vec![T::zero(); x.shape.len()];
            for (out_idx, &src) in argmax.iter().enumerate() {
                dx[src] += go[out_idx];
            }
            send(x, dx);
        }
        OpRec::Upsample2 { x } => {
            let s = x.shape;
            let out = rec.shape;
            let mut dx = vec![T::zero(); s.len()];
            for plane in 0..s.n * s.c {
                let gp = &go[plane * out.h * out.w..][..out.h * out.w];
                let dp = &mut dx[plane * s.h * s.w..][..s.h * s.w];
                for i in 0..s.h {
                    for j in 0..s.w {
                        let base = 2 * i * out.w + 2 * j;
                        dp[i * s.w + j] +=
                            gp[base] + gp[base + 1] + gp[base + out.w] + gp[base + out.w + 1];
                    }
                }
            }
            send(x, dx);
        }
        OpRec::Subsample2 { x } => {
            let s = x.shape;
            let out = rec.shape;
            let mut dx = vec![T::zero(); s.len()];
            for plane in 0..s.n * s.c {
                let gp = &go[plane * out.h * out.w..][..out.h * out.w];
                let dp = &mut dx[plane * s.h * s.w..][..s.h * s.w];
                for i in 0..out.h {
                    for j in 0..out.w {
                        dp[2 * i * s.w + 2 * j] += gp[i * out.w + j];
                    }
                }
            }
            send(x, dx);
        }
        OpRec::PixelShuffle { x, r } => {
            let s = x.shape;
            let out = rec.shape;
            let r = *r;
            let mut dx = vec![T::zero(); s.len()];
            for n in 0..s.n {
                for c in 0..s.c {
                    let co = c / (r * r);
                    let dy = (c % (r * r)) / r;
                    let dxo = c % r;
                    let gp = &go[(n * out.c + co) * out.h * out.w..][..out.h * out.w];
                    let dp = &mut dx[(n * s.c + c) * s.h * s.w..][..s.h * s.w];
                    for i in 0..s.h {
                        for j in 0..s.w {
                            dp[i * s.w + j] += gp[(i * r + dy) * out.w + (j * r + dxo)];
                        }
                    }
                }
            }
            send(x, dx);
        }
        OpRec::AvgFilter2 { x } => {
            let s = x.shape;
            let quarter = T::from_f64(0.25);
            let mut dx = vec![T::zero(); s.len()];
            for plane in 0..s.n * s.c {
                let gp = &go[plane * s.h * s.w..][..s.h * s.w];
                let dp = &mut dx[plane * s.h * s.w..][..s.h * s.w];
                for i in 0..s.h {
                    for j in 0..s.w {
                        let g = gp[i * s.w + j] * quarter;
                        dp[i * s.w + j] += g;
                        if j + 1 < s.w {
                            dp[i * s.w + j + 1] += g;
                        }
                        if i + 1 < s.h {
                            dp[(i + 1) * s.w + j] += g;
                            if j + 1 < s.w {
                                dp[(i + 1) * s.w + j + 1] += g;
                            }
                        }
                    }
                }
            }
            send(x, dx);
        }
        OpRec::Relu { x } => {
            let dx: Vec<T> = x
                .data
                .iter()
                .zip(go)
                .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                .collect();
            send(x, dx);
        }
        OpRec::Add { a, b } => {
            send(a, go.to_vec());
            send(b, go.to_vec());
        }
        OpRec::Mul { a, b } => {
            if a.id.is_some() {
                send(a, b.data.iter().zip(go).map(|(&bv, &g)| bv * g).collect());
            }
            if b.id.is_some() {
                send(b, a.data.iter().zip(go).map(|(&av, &g)| av * g).collect());
            }
        }
        OpRec::Scale { x, factor } => {
            send(x, go.iter().map(|&g| g * *factor).collect());
        }
        OpRec::Sum { x } => {
            send(x, vec![go[0]; x.shape.len()]);
        }
        OpRec::L1Loss { a, b } => {
            let inv = T::from_f64(1.0 / a.shape.len() as f64);
            let g = go[0] * inv;
            let da: Vec<T> = a
                .data
                .iter()
                .zip(b.data.iter())
                .map(|(&av, &bv)| {
                    if av > bv {
                        g
                    } else if av < bv {
                        -g
                    } else {
                        T::zero()
                    }
                })
                .collect();
            if b.id.is_some() {
                send(b, da.iter().map(|&v| -v).collect());
            }
            send(a, da);
        }
        OpRec::ConcatChannels { xs } => {
            let out = rec.shape;
            let hw = out.h * out.w;
            let mut c_off = 0;
            for x in xs {
                let s = x.shape;
                if x.id.is_some() {
                    let mut dx = vec![T::zero(); s.len()];
                    for n in 0..out.n {
                        dx[n * s.c * hw..][..s.c * hw]
                            .copy_from_slice(&go[(n * out.c + c_off) * hw..][..s.c * hw]);
                    }
                    send(x, dx);
                }
                c_off += s.c;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::backward;
    use crate::verify::gradcheck::{fd_param_grad, fd_tensor_grad, max_rel_err, FD_STEP, GRAD_TOL};
    use crate::verify::oracle::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn rand_t(shape: Shape, r: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::random_uniform(shape, -1.0, 1.0, r)
    }

    #[test]
    fn conv_identity_case() {
        let x = Tensor::<f64>::from_vec(
            Shape::new(1, 1, 2, 2),
            vec![1.0, -2.0, 3.0, 0.5],
        )
        .unwrap();
        let w = Parameter::from_values(1, 1, 1, vec![1.0], vec![0.0]).unwrap();
        let y = x.conv2d(&w, 1, 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_zero_weight_gives_zero_output() {
        let mut r = rng(1);
        let x = rand_t(Shape::new(2, 3, 5, 5), &mut r);
        let w = Parameter::from_values(4, 3, 3, vec![0.0; 4 * 3 * 9], vec![0.0; 4]).unwrap();
        let y = x.conv2d(&w, 1, 1, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_matches_direct_oracle() {
        let mut r = rng(2);
        let x = rand_t(Shape::new(1, 2, 4, 4), &mut r);
        let w = Parameter::<f64>::conv_init(3, 2, 3, &mut r);
        let y = x.conv2d(&w, 1, 1, 1).unwrap();
        let (oracle, _) = conv2d_reference(&x, &w.weight(), &w.bias(), w.wshape(), 1, 1, 1);
        assert!(max_abs_diff(&y, &oracle) < 1e-12);
    }

    #[test]
    fn conv_oracle_grid_over_stride_dilation_padding() {
        let mut r = rng(3);
        for k in [1usize, 3] {
            for s in [1usize, 2] {
                for d in [1usize, 2] {
                    for p in [0usize, 1, 2] {
                        let x = rand_t(Shape::new(2, 2, 9, 8), &mut r);
                        let w = Parameter::<f64>::conv_init(3, 2, k, &mut r);
                        match x.conv2d(&w, s, d, p) {
                            Ok(y) => {
                                let (oracle, _) = conv2d_reference(
                                    &x, &w.weight(), &w.bias(), w.wshape(), s, d, p,
                                );
                                assert_eq!(y.shape(), oracle.shape());
                                assert!(
                                    max_abs_diff(&y, &oracle) < 1e-12,
                                    "k={k} s={s} d={d} p={p}"
                                );
                            }
                            Err(_) => panic!("grid case should be valid: k={k} s={s} d={d} p={p}"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn conv_rejects_bad_geometry() {
        let mut r = rng(4);
        let x = rand_t(Shape::new(1, 2, 3, 3), &mut r);
        let w_mismatch = Parameter::<f64>::conv_init(1, 3, 1, &mut r);
        assert!(x.conv2d(&w_mismatch, 1, 1, 0).is_err());
        let w_big = Parameter::<f64>::conv_init(1, 2, 3, &mut r);
        assert!(x.conv2d(&w_big, 1, 2, 0).is_err()); // span 5 > 3, no padding
        assert!(x.conv2d(&w_big, 0, 1, 1).is_err());
    }

    #[test]
    fn conv_is_linear_without_bias() {
        let mut r = rng(5);
        let x = rand_t(Shape::new(1, 2, 6, 6), &mut r);
        let y = rand_t(Shape::new(1, 2, 6, 6), &mut r);
        let w = Parameter::<f64>::conv_init(3, 2, 3, &mut r); // bias is zero-initialized
        let (a, b) = (0.7, -1.3);
        let lhs = x.scale(a).unwrap().add(&y.scale(b).unwrap()).unwrap().conv2d(&w, 1, 1, 1).unwrap();
        let rhs = x
            .conv2d(&w, 1, 1, 1)
            .unwrap()
            .scale(a)
            .unwrap()
            .add(&y.conv2d(&w, 1, 1, 1).unwrap().scale(b).unwrap())
            .unwrap();
        assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn avg_pool_basics_and_oracle() {
        let c = Tensor::<f64>::filled(Shape::new(1, 1, 4, 4), 3.25);
        let y = c.avg_pool2().unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert!(y.data().iter().all(|&v| v == 3.25));

        let b = Tensor::<f64>::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(b.avg_pool2().unwrap().data(), &[2.5]);

        let mut r = rng(6);
        let x = rand_t(Shape::new(1, 1, 6, 6), &mut r);
        assert_eq!(max_abs_diff(&x.avg_pool2().unwrap(), &avg_pool2_reference(&x)), 0.0);

        let odd = Tensor::<f64>::zeros(Shape::new(1, 1, 3, 4));
        assert!(odd.avg_pool2().is_err());
    }

    #[test]
    fn max_pool_forward_and_argmax_backward() {
        let c = Tensor::<f64>::filled(Shape::new(1, 1, 4, 4), -1.5);
        assert!(c.max_pool2().unwrap().data().iter().all(|&v| v == -1.5));

        let b = Tensor::<f64>::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(b.max_pool2().unwrap().data(), &[4.0]);

        let mut r = rng(7);
        let x = rand_t(Shape::new(1, 2, 6, 6), &mut r);
        let (oracle, positions) = max_pool2_reference(&x);
        let y = x.max_pool2().unwrap();
        assert_eq!(max_abs_diff(&y, &oracle), 0.0);

        // Backward: each block's incoming gradient lands on its argmax.
        let tape = Tape::new();
        let xt = tape.watch(&x);
        let p = xt.max_pool2().unwrap();
        let g = rand_t(p.shape(), &mut r);
        let loss = p.mul(&g).unwrap().sum().unwrap();
        backward(&loss).unwrap();
        let dx = tape.grad(&xt).unwrap().unwrap();
        let s = x.shape();
        let mut expected = vec![0.0; s.len()];
        let (oh, ow) = (s.h / 2, s.w / 2);
        for (out_idx, &(py, px)) in positions.iter().enumerate() {
            let plane = out_idx / (oh * ow);
            expected[plane * s.h * s.w + py * s.w + px] += g.data()[out_idx];
        }
        for (a, e) in dx.data().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn max_pool_ties_break_to_first_row_major() {
        let x = Tensor::<f64>::filled(Shape::new(1, 1, 2, 2), 2.0);
        let tape = Tape::new();
        let xt = tape.watch(&x);
        let loss = xt.max_pool2().unwrap().sum().unwrap();
        backward(&loss).unwrap();
        let dx = tape.grad(&xt).unwrap().unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn upsample_replicates_and_subsample_inverts() {
        let v = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 1), vec![7.5]).unwrap();
        assert_eq!(v.nearest_upsample2().unwrap().data(), &[7.5; 4]);

        let mut r = rng(8);
        let x = rand_t(Shape::new(2, 3, 5, 7), &mut r);
        let up = x.nearest_upsample2().unwrap();
        assert_eq!(max_abs_diff(&up, &upsample2_reference(&x)), 0.0);
        let back = up.nearest_subsample2().unwrap();
        assert_eq!(max_abs_diff(&back, &x), 0.0);
    }

    #[test]
    fn subsample_keeps_top_left_phase() {
        let x = Tensor::<f64>::from_vec(
            Shape::new(1, 1, 4, 4),
            (0..16).map(|i| i as f64).collect(),
        )
        .unwrap();
        let y = x.nearest_subsample2().unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 8.0, 10.0]);
        assert_eq!(max_abs_diff(&y, &subsample2_reference(&x)), 0.0);
        assert!(Tensor::<f64>::zeros(Shape::new(1, 1, 5, 4)).nearest_subsample2().is_err());
    }

    #[test]
    fn pixel_shuffle_layout_and_oracle() {
        // C=4, r=2: per-pixel channel values [a,b,c,d] become the 2x2
        // block [[a,b],[c,d]].
        let x = Tensor::<f64>::from_vec(Shape::new(1, 4, 1, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = x.pixel_shuffle(2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);

        let mut r = rng(9);
        let t = rand_t(Shape::new(1, 8, 3, 3), &mut r);
        assert_eq!(max_abs_diff(&t.pixel_shuffle(1).unwrap(), &t), 0.0);
        let s2 = t.pixel_shuffle(2).unwrap();
        assert_eq!(max_abs_diff(&s2, &pixel_shuffle_reference(&t, 2)), 0.0);
        assert!(t.pixel_shuffle(3).is_err());
    }

    #[test]
    fn elementwise_basics() {
        let x = Tensor::<f64>::from_vec(Shape::new(1, 1, 1, 2), vec![-1.0, 2.0]).unwrap();
        assert_eq!(x.relu().unwrap().data(), &[0.0, 2.0]);
        let zero = Tensor::<f64>::zeros(x.shape());
        assert_eq!(x.add(&zero).unwrap().data(), x.data());
        assert!(x.add(&Tensor::zeros(Shape::new(1, 1, 2, 1))).is_err());
        assert_eq!(x.scale(-2.0).unwrap().data(), &[2.0, -4.0]);
        assert_eq!(x.sum().unwrap().item().unwrap(), 1.0);
        assert_eq!(x.l1_loss(&x).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn sum_of_scaled_conv_grad_equals_sum_of_input() {
        // loss = sum(conv_1x1(x; w)) with a single scalar weight: the
        // weight gradient is sum(x).
        let mut r = rng(10);
        let x = rand_t(Shape::new(1, 1, 4, 4), &mut r);
        let w = Parameter::from_values(1, 1, 1, vec![0.37], vec![0.0]).unwrap();
        let tape = Tape::new();
        let xt = tape.watch(&x);
        let loss = xt.conv2d(&w, 1, 1, 0).unwrap().sum().unwrap();
        backward(&loss).unwrap();
        let total: f64 = x.data().iter().sum();
        assert!((w.wgrad()[0] - total).abs() < 1e-12);
    }

    #[test]
    fn backward_errors() {
        let x = Tensor::<f64>::zeros(Shape::SCALAR);
        assert!(matches!(backward(&x), Err(crate::Error::Detached)));

        let tape = Tape::new();
        let t = tape.watch(&Tensor::<f64>::zeros(Shape::new(1, 1, 2, 2)));
        assert!(backward(&t).is_err()); // non-scalar loss

        let other = Tape::new();
        let a = tape.watch(&Tensor::<f64>::zeros(Shape::SCALAR));
        let b = other.watch(&Tensor::<f64>::zeros(Shape::SCALAR));
        assert!(matches!(a.add(&b), Err(crate::Error::TapeMismatch)));
    }

    #[test]
    fn non_finite_outputs_are_reported() {
        let x = Tensor::<f64>::filled(Shape::new(1, 1, 1, 1), f64::MAX);
        let err = x.add(&x);
        assert!(matches!(err, Err(crate::Error::NonFinite { .. })));
    }

    fn vjp_loss(y: &Tensor<f64>, probe: &Tensor<f64>) -> Tensor<f64> {
        y.mul(probe).unwrap().sum().unwrap()
    }

    /// Check d(sum(f(x) * probe))/dx against central differences.
    fn check_input_grad(f: impl Fn(&Tensor<f64>) -> Tensor<f64>, x: &Tensor<f64>, probe: &Tensor<f64>) {
        let tape = Tape::new();
        let xt = tape.watch(x);
        let loss = vjp_loss(&f(&xt), probe);
        backward(&loss).unwrap();
        let analytic = tape.grad(&xt).unwrap().unwrap();
        let mut eval = |t: &Tensor<f64>| f(t).mul(probe).unwrap().sum().unwrap().item().unwrap();
        let numeric = fd_tensor_grad(&mut eval, x, FD_STEP);
        let err = max_rel_err(analytic.data(), &numeric);
        assert!(err < GRAD_TOL, "input gradient relative error {err}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(11);
        let x = rand_t(Shape::new(1, 2, 4, 4), &mut r);
        // Keep relu inputs away from the kink.
        let x_off = x.scale(1.0).unwrap().add(&Tensor::filled(x.shape(), 0.31)).unwrap();

        let p_same = rand_t(x.shape(), &mut r);
        check_input_grad(|t| t.relu().unwrap(), &x_off, &p_same);
        check_input_grad(|t| t.scale(-1.7).unwrap(), &x, &p_same);
        check_input_grad(|t| t.avg_filter2().unwrap(), &x, &p_same);

        let p_half = rand_t(Shape::new(1, 2, 2, 2), &mut r);
        check_input_grad(|t| t.avg_pool2().unwrap(), &x, &p_half);
        check_input_grad(|t| t.max_pool2().unwrap(), &x, &p_half);
        check_input_grad(|t| t.nearest_subsample2().unwrap(), &x, &p_half);

        let p_double = rand_t(Shape::new(1, 2, 8, 8), &mut r);
        check_input_grad(|t| t.nearest_upsample2().unwrap(), &x, &p_double);

        let x8 = rand_t(Shape::new(1, 8, 4, 4), &mut r);
        let p_shuf = rand_t(Shape::new(1, 2, 8, 8), &mut r);
        check_input_grad(|t| t.pixel_shuffle(2).unwrap(), &x8, &p_shuf);

        let w = Parameter::<f64>::conv_init(3, 2, 3, &mut r);
        let p_conv = rand_t(Shape::new(1, 3, 4, 4), &mut r);
        check_input_grad(|t| t.conv2d(&w, 1, 1, 1).unwrap(), &x, &p_conv);
        check_input_grad(|t| t.conv2d(&w, 1, 2, 2).unwrap(), &x, &p_conv);

        // Weight/bias gradients of conv2d. Accumulators still hold the
        // contributions of the input-grad passes above; reset them.
        w.zero_grad();
        let tape = Tape::new();
        let xt = tape.watch(&x);
        let loss = vjp_loss(&xt.conv2d(&w, 1, 1, 1).unwrap(), &p_conv);
        backward(&loss).unwrap();
        let mut eval = || {
            x.conv2d(&w, 1, 1, 1).unwrap().mul(&p_conv).unwrap().sum().unwrap().item().unwrap()
        };
        let (wg, bg) = fd_param_grad(&mut eval, &w, FD_STEP);
        assert!(max_rel_err(&w.wgrad(), &wg) < GRAD_TOL);
        assert!(max_rel_err(&w.bgrad(), &bg) < GRAD_TOL);
    }

    #[test]
    fn l1_and_mul_gradients() {
        let mut r = rng(12);
        let a = rand_t(Shape::new(1, 1, 3, 3), &mut r);
        let b = rand_t(Shape::new(1, 1, 3, 3), &mut r);

        let tape = Tape::new();
        let at = tape.watch(&a);
        let loss = at.l1_loss(&b).unwrap();
        backward(&loss).unwrap();
        let analytic = tape.grad(&at).unwrap().unwrap();
        let mut eval = |t: &Tensor<f64>| t.l1_loss(&b).unwrap().item().unwrap();
        let numeric = fd_tensor_grad(&mut eval, &a, FD_STEP);
        assert!(max_rel_err(analytic.data(), &numeric) < GRAD_TOL);

        let tape2 = Tape::new();
        let at2 = tape2.watch(&a);
        let loss2 = at2.mul(&b).unwrap().sum().unwrap();
        backward(&loss2).unwrap();
        let g = tape2.grad(&at2).unwrap().unwrap();
        assert!(max_abs_diff(&g, &b) < 1e-12);
    }

    #[test]
    fn shared_weight_gradient_sums_over_use_sites() {
        // One parameter used at two sites: its gradient is the sum of the
        // per-site finite-difference gradients (equivalently, finite
        // differences on the shared value).
        let mut r = rng(13);
        let x = rand_t(Shape::new(1, 2, 6, 6), &mut r);
        let w = Parameter::<f64>::conv_init(2, 2, 3, &mut r);
        let probe = rand_t(Shape::new(1, 2, 6, 6), &mut r);

        let forward = |xv: &Tensor<f64>| {
            let y1 = xv.conv2d(&w, 1, 1, 1).unwrap();
            let y2 = xv.conv2d(&w, 1, 2, 2).unwrap();
            y1.add(&y2).unwrap()
        };

        let tape = Tape::new();
        let xt = tape.watch(&x);
        let loss = vjp_loss(&forward(&xt), &probe);
        backward(&loss).unwrap();

        let mut eval =
            || forward(&x).mul(&probe).unwrap().sum().unwrap().item().unwrap();
        let (wg, bg) = fd_param_grad(&mut eval, &w, FD_STEP);
        assert!(max_rel_err(&w.wgrad(), &wg) < GRAD_TOL);
        assert!(max_rel_err(&w.bgrad(), &bg) < GRAD_TOL);
    }

    #[test]
    fn concat_channels_splits_gradient() {
        let mut r = rng(14);
        let a = rand_t(Shape::new(2, 2, 3, 3), &mut r);
        let b = rand_t(Shape::new(2, 3, 3, 3), &mut r);
        let tape = Tape::new();
        let at = tape.watch(&a);
        let bt = tape.watch(&b);
        let y = concat_channels(&[&at, &bt]).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 5, 3, 3));
        let probe = rand_t(y.shape(), &mut r);
        let loss = vjp_loss(&y, &probe);
        backward(&loss).unwrap();
        let ga = tape.grad(&at).unwrap().unwrap();
        let gb = tape.grad(&bt).unwrap().unwrap();
        // Forward layout check plus gradient split check.
        for n in 0..2 {
            for c in 0..2 {
                assert_eq!(y.at(n, c, 1, 1), a.at(n, c, 1, 1));
                assert_eq!(ga.at(n, c, 1, 1), probe.at(n, c, 1, 1));
            }
            for c in 0..3 {
                assert_eq!(y.at(n, 2 + c, 1, 1), b.at(n, c, 1, 1));
                assert_eq!(gb.at(n, c, 1, 1), probe.at(n, 2 + c, 1, 1));
            }
        }
    }

    #[test]
    fn flops_formula_matches_instrumented_oracle() {
        let mut r = rng(15);
        let x = rand_t(Shape::new(1, 3, 6, 6), &mut r);
        let w = Parameter::<f64>::conv_init(4, 3, 3, &mut r);
        let (_, muls) = conv2d_reference(&x, &w.weight(), &w.bias(), w.wshape(), 1, 1, 1);
        // c_out * c_in * k^2 * h_out * w_out (padding taps included)
        assert_eq!(muls, 4 * 3 * 9 * 6 * 6);
    }
}
