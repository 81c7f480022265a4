//! Forward and backward kernels on plain tensors.
//!
//! These functions know nothing about the tape; [`crate::autograd`] records
//! which kernel produced a value and calls the matching backward here.
//! Matrices are the last two axes of a tensor, batched over `n` and `c`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::par::for_each_chunk;
use crate::tensor::{Scalar, Shape, Tensor};

fn mismatch(op: &'static str, lhs: Shape, rhs: Shape) -> Error {
    Error::ShapeMismatch { op, lhs, rhs }
}

fn invalid(op: &'static str, shape: Shape, reason: impl Into<alloc::string::String>) -> Error {
    Error::InvalidShape {
        op,
        shape,
        reason: reason.into(),
    }
}

/// Output size of a stride-1 convolution.
fn conv_out(len: usize, k: usize, pad: usize) -> Option<usize> {
    (len + 2 * pad).checked_sub(k).map(|v| v + 1)
}

/// `x[n,i,y+dy-pad,x+dx-pad]` with zero padding, stride 1.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, pad: usize) -> Result<Tensor<T>> {
    let xs = x.shape();
    let ws = w.shape();
    if ws.c != xs.c {
        return Err(mismatch("conv2d", xs, ws));
    }
    if b.numel() != ws.n {
        return Err(mismatch("conv2d bias", ws, b.shape()));
    }
    let (kh, kw) = (ws.h, ws.w);
    let (ho, wo) = match (conv_out(xs.h, kh, pad), conv_out(xs.w, kw, pad)) {
        (Some(h), Some(w)) if h > 0 && w > 0 => (h, w),
        _ => return Err(invalid("conv2d", xs, format!("kernel {kh}×{kw} larger than padded input"))),
    };
    let co = ws.n;
    let ci = xs.c;
    let out_shape = Shape::new(xs.n, co, ho, wo);
    let mut out = Tensor::zeros(out_shape);
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let plane_in = xs.plane();
    for_each_chunk(out.data_mut(), ho * wo, |idx, dst| {
        let (n, o) = (idx / co, idx % co);
        dst.fill(bd[o]);
        for i in 0..ci {
            let src = &xd[(n * ci + i) * plane_in..(n * ci + i + 1) * plane_in];
            let wbase = ((o * ci) + i) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wd[wbase + ky * kw + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    let x_lo = pad.saturating_sub(kx);
                    let x_hi = wo.min((xs.w + pad).saturating_sub(kx));
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in 0..ho {
                        let iy = y + ky;
                        if iy < pad || iy - pad >= xs.h {
                            continue;
                        }
                        let row = &src[(iy - pad) * xs.w..(iy - pad + 1) * xs.w];
                        let out_row = &mut dst[y * wo..(y + 1) * wo];
                        let shift = x_lo + kx - pad;
                        for (o_v, &i_v) in out_row[x_lo..x_hi].iter_mut().zip(&row[shift..shift + (x_hi - x_lo)]) {
                            *o_v = *o_v + wv * i_v;
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    pad: usize,
    dout: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let xs = x.shape();
    let ws = w.shape();
    let os = dout.shape();
    let (co, ci, kh, kw) = (ws.n, ws.c, ws.h, ws.w);
    let (ho, wo) = (os.h, os.w);
    let xd = x.data();
    let wd = w.data();
    let gd = dout.data();
    let plane_in = xs.plane();
    let plane_out = os.plane();

    let mut dx = Tensor::zeros(xs);
    for_each_chunk(dx.data_mut(), plane_in, |idx, dst| {
        let (n, i) = (idx / ci, idx % ci);
        for o in 0..co {
            let g = &gd[(n * co + o) * plane_out..(n * co + o + 1) * plane_out];
            let wbase = ((o * ci) + i) * kh * kw;
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wd[wbase + ky * kw + kx];
                    let x_lo = pad.saturating_sub(kx);
                    let x_hi = wo.min((xs.w + pad).saturating_sub(kx));
                    if x_lo >= x_hi {
                        continue;
                    }
                    for y in 0..ho {
                        let iy = y + ky;
                        if iy < pad || iy - pad >= xs.h {
                            continue;
                        }
                        let shift = x_lo + kx - pad;
                        let drow = &mut dst[(iy - pad) * xs.w + shift..(iy - pad) * xs.w + shift + (x_hi - x_lo)];
                        for (d, &gv) in drow.iter_mut().zip(&g[y * wo + x_lo..y * wo + x_hi]) {
                            *d = *d + wv * gv;
                        }
                    }
                }
            }
        }
    });

    let mut dw = Tensor::zeros(ws);
    for_each_chunk(dw.data_mut(), ci * kh * kw, |o, dst| {
        for n in 0..xs.n {
            let g = &gd[(n * co + o) * plane_out..(n * co + o + 1) * plane_out];
            for i in 0..ci {
                let src = &xd[(n * ci + i) * plane_in..(n * ci + i + 1) * plane_in];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let x_lo = pad.saturating_sub(kx);
                        let x_hi = wo.min((xs.w + pad).saturating_sub(kx));
                        if x_lo >= x_hi {
                            continue;
                        }
                        let shift = x_lo + kx - pad;
                        let mut acc = T::zero();
                        for y in 0..ho {
                            let iy = y + ky;
                            if iy < pad || iy - pad >= xs.h {
                                continue;
                            }
                            let row = &src[(iy - pad) * xs.w + shift..(iy - pad) * xs.w + shift + (x_hi - x_lo)];
                            for (&gv, &iv) in g[y * wo + x_lo..y * wo + x_hi].iter().zip(row) {
                                acc = acc + gv * iv;
                            }
                        }
                        let slot = &mut dst[(i * kh + ky) * kw + kx];
                        *slot = *slot + acc;
                    }
                }
            }
        }
    });

    let mut db = Tensor::zeros(Shape::new(co, 1, 1, 1));
    for o in 0..co {
        let mut acc = T::zero();
        for n in 0..os.n {
            for &g in &gd[(n * co + o) * plane_out..(n * co + o + 1) * plane_out] {
                acc = acc + g;
            }
        }
        db.data_mut()[o] = acc;
    }
    (dx, dw, db)
}

/// Shapes accepted by the binary elementwise ops: exact match, or a
/// per-channel `n×c×1×1` right-hand side.
pub fn check_broadcast(op: &'static str, a: Shape, b: Shape) -> Result<bool> {
    if a == b {
        Ok(false)
    } else if b.n == a.n && b.c == a.c && b.h == 1 && b.w == 1 {
        Ok(true)
    } else {
        Err(mismatch(op, a, b))
    }
}

pub fn binary<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    let broadcast = check_broadcast(op, a.shape(), b.shape())?;
    let plane = a.shape().plane();
    let bd = b.data();
    let data = if broadcast {
        a.data()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, bd[i / plane]))
            .collect()
    } else {
        a.data().iter().zip(bd).map(|(&u, &v)| f(u, v)).collect()
    };
    Tensor::from_vec(a.shape(), data)
}

/// Reduce a full-shape gradient onto the `n×c×1×1` operand of a broadcast.
pub fn reduce_to_channels<T: Scalar>(g: &Tensor<T>, target: Shape) -> Tensor<T> {
    let plane = g.shape().plane();
    let mut out = Tensor::zeros(target);
    for (dst, chunk) in out.data_mut().iter_mut().zip(g.data().chunks(plane)) {
        *dst = chunk.iter().copied().sum();
    }
    out
}

pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if parts.len() < 2 {
        return Err(Error::contract("concat_channels needs at least two parts"));
    }
    let first = parts[0].shape();
    let mut channels = 0;
    for p in parts {
        let s = p.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(mismatch("concat_channels", first, s));
        }
        channels += s.c;
    }
    let out_shape = Shape::new(first.n, channels, first.h, first.w);
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..first.n {
        for p in parts {
            let len = p.shape().c * first.plane();
            data.extend_from_slice(&p.data()[n * len..(n + 1) * len]);
        }
    }
    Tensor::from_vec(out_shape, data)
}

/// Channels `start..start+len` of `x`.
pub fn slice_channels<T: Scalar>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if start + len > s.c || len == 0 {
        return Err(invalid(
            "slice_channels",
            s,
            format!("channel range {start}..{} out of bounds", start + len),
        ));
    }
    let plane = s.plane();
    let mut data = Vec::with_capacity(s.n * len * plane);
    for n in 0..s.n {
        let base = (n * s.c + start) * plane;
        data.extend_from_slice(&x.data()[base..base + len * plane]);
    }
    Tensor::from_vec(Shape::new(s.n, len, s.h, s.w), data)
}

/// Batched `a·b` over the last two axes.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let sa = a.shape();
    let sb = b.shape();
    if sa.n != sb.n || sa.c != sb.c || sa.w != sb.h {
        return Err(mismatch("matmul", sa, sb));
    }
    let (p, q, r) = (sa.h, sa.w, sb.w);
    let mut out = Tensor::zeros(Shape::new(sa.n, sa.c, p, r));
    let ad = a.data();
    let bd = b.data();
    for_each_chunk(out.data_mut(), r, |row, dst| {
        let batch = row / p;
        let i = row % p;
        let arow = &ad[(batch * p + i) * q..(batch * p + i + 1) * q];
        let bmat = &bd[batch * q * r..(batch + 1) * q * r];
        for (k, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            for (d, &bv) in dst.iter_mut().zip(&bmat[k * r..(k + 1) * r]) {
                *d = *d + av * bv;
            }
        }
    });
    Ok(out)
}

/// Gradients of [`matmul`]: `(g·bᵀ, aᵀ·g)`.
pub fn matmul_backward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, g: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let sa = a.shape();
    let sb = b.shape();
    let (p, q, r) = (sa.h, sa.w, sb.w);
    let ad = a.data();
    let bd = b.data();
    let gd = g.data();

    let mut da = Tensor::zeros(sa);
    for_each_chunk(da.data_mut(), q, |row, dst| {
        let batch = row / p;
        let i = row % p;
        let grow = &gd[(batch * p + i) * r..(batch * p + i + 1) * r];
        let bmat = &bd[batch * q * r..(batch + 1) * q * r];
        for (k, d) in dst.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (&gv, &bv) in grow.iter().zip(&bmat[k * r..(k + 1) * r]) {
                acc = acc + gv * bv;
            }
            *d = acc;
        }
    });

    let mut db = Tensor::zeros(sb);
    for_each_chunk(db.data_mut(), r, |row, dst| {
        let batch = row / q;
        let k = row % q;
        let amat = &ad[batch * p * q..(batch + 1) * p * q];
        let gmat = &gd[batch * p * r..(batch + 1) * p * r];
        for i in 0..p {
            let av = amat[i * q + k];
            if av == T::zero() {
                continue;
            }
            for (d, &gv) in dst.iter_mut().zip(&gmat[i * r..(i + 1) * r]) {
                *d = *d + av * gv;
            }
        }
    });
    (da, db)
}

/// Swap the last two axes.
pub fn transpose<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let out_shape = Shape::new(s.n, s.c, s.w, s.h);
    let mut out = Tensor::zeros(out_shape);
    let plane = s.plane();
    let xd = x.data();
    for (b, dst) in out.data_mut().chunks_mut(plane).enumerate() {
        let src = &xd[b * plane..(b + 1) * plane];
        for y in 0..s.h {
            for xx in 0..s.w {
                dst[xx * s.h + y] = src[y * s.w + xx];
            }
        }
    }
    out
}

/// Softmax over the last axis, with the row maximum subtracted first.
pub fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let mut out = x.clone();
    if s.w == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(s.w) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

/// `dx = y ⊙ (g − Σ g⊙y)` row by row.
pub fn softmax_rows_backward<T: Scalar>(y: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let w = y.shape().w;
    let mut dx = Tensor::zeros(y.shape());
    for ((d, yr), gr) in dx
        .data_mut()
        .chunks_mut(w)
        .zip(y.data().chunks(w))
        .zip(g.data().chunks(w))
    {
        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for ((dv, &yv), &gv) in d.iter_mut().zip(yr).zip(gr) {
            *dv = yv * (gv - dot);
        }
    }
    dx
}

/// `out[n, c, y·r+dy, x·r+dx] = in[n, c·r² + dy·r + dx, y, x]`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || s.c % (r * r) != 0 {
        return Err(invalid(
            "pixel_shuffle",
            s,
            format!("channels not divisible by r² = {}", r * r),
        ));
    }
    let c_out = s.c / (r * r);
    let out_shape = Shape::new(s.n, c_out, s.h * r, s.w * r);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.n {
        for c in 0..c_out {
            for dy in 0..r {
                for dx in 0..r {
                    let ci = c * r * r + dy * r + dx;
                    for y in 0..s.h {
                        for xx in 0..s.w {
                            let v = x.at(n, ci, y, xx);
                            out.set(n, c, y * r + dy, xx * r + dx, v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || s.h % r != 0 || s.w % r != 0 {
        return Err(invalid(
            "pixel_unshuffle",
            s,
            format!("spatial dims not divisible by {r}"),
        ));
    }
    let out_shape = Shape::new(s.n, s.c * r * r, s.h / r, s.w / r);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.n {
        for c in 0..s.c {
            for dy in 0..r {
                for dx in 0..r {
                    let co = c * r * r + dy * r + dx;
                    for y in 0..out_shape.h {
                        for xx in 0..out_shape.w {
                            out.set(n, co, y, xx, x.at(n, c, y * r + dy, xx * r + dx));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-sample channel covariance `(1/s)·Xc·Xcᵀ`, where `Xc` is the `C×s`
/// feature matrix with its row means removed. Output is `n×1×C×C`.
pub fn covariance_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    let len = s.plane();
    if len == 0 {
        return Err(invalid("covariance_pool", s, "empty spatial extent"));
    }
    let centered = center_rows(x);
    let cd = centered.data();
    let inv = T::one() / T::of(len as f64);
    let mut out = Tensor::zeros(Shape::new(s.n, 1, s.c, s.c));
    for n in 0..s.n {
        let base = n * s.c * len;
        for i in 0..s.c {
            let ri = &cd[base + i * len..base + (i + 1) * len];
            for j in i..s.c {
                let rj = &cd[base + j * len..base + (j + 1) * len];
                let dot: T = ri.iter().zip(rj).map(|(&a, &b)| a * b).sum();
                out.set(n, 0, i, j, dot * inv);
                out.set(n, 0, j, i, dot * inv);
            }
        }
    }
    Ok(out)
}

/// `dX = (1/s)(G + Gᵀ)·Xc`.
pub fn covariance_pool_backward<T: Scalar>(x: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let len = s.plane();
    let centered = center_rows(x);
    let cd = centered.data();
    let inv = T::one() / T::of(len as f64);
    let mut dx = Tensor::zeros(s);
    for n in 0..s.n {
        let base = n * s.c * len;
        for i in 0..s.c {
            let dst = &mut dx.data_mut()[base + i * len..base + (i + 1) * len];
            for j in 0..s.c {
                let coef = (g.at(n, 0, i, j) + g.at(n, 0, j, i)) * inv;
                if coef == T::zero() {
                    continue;
                }
                for (d, &v) in dst.iter_mut().zip(&cd[base + j * len..base + (j + 1) * len]) {
                    *d = *d + coef * v;
                }
            }
        }
    }
    dx
}

fn center_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let len = x.shape().plane();
    let mut out = x.clone();
    let inv = T::one() / T::of(len as f64);
    for row in out.data_mut().chunks_mut(len) {
        let mean = row.iter().copied().sum::<T>() * inv;
        for v in row.iter_mut() {
            *v = *v - mean;
        }
    }
    out
}

/// Trace of each `C×C` matrix in an `n×1×C×C` tensor, as `n×1×1×1`.
pub fn trace<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let s = a.shape();
    if s.h != s.w || s.c != 1 {
        return Err(invalid("trace", s, "expected n×1×C×C"));
    }
    let mut out = Tensor::zeros(Shape::new(s.n, 1, 1, 1));
    for n in 0..s.n {
        let mut acc = T::zero();
        for i in 0..s.h {
            acc = acc + a.at(n, 0, i, i);
        }
        out.data_mut()[n] = acc;
    }
    Ok(out)
}

/// Mean over the last axis: `n×c×h×w → n×c×h×1`.
pub fn mean_last<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let inv = T::one() / T::of(s.w as f64);
    let data = x
        .data()
        .chunks(s.w)
        .map(|row| row.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(Shape::new(s.n, s.c, s.h, 1), data).expect("row count matches")
}
