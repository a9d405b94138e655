//! Layer kinds and their forward/backward kernels. All loops run in a fixed
//! order, so outputs and gradients are bit-stable for identical inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Shape, Tensor};

/// Layer descriptor. Parameterized layers hold indices into the network's
/// parameter store.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Layer {
    /// Fully connected: (N, I) -> (N, O) with weight (O, I) and bias (O).
    Dense { weight: usize, bias: usize },
    /// 3x3 convolution, padding 1, stride 1 or 2, weight (OC, IC, 3, 3).
    Conv {
        weight: usize,
        bias: usize,
        stride: usize,
    },
    /// 3x3 transposed convolution, stride 2: doubles height and width.
    /// Weight layout (IC, OC, 3, 3).
    ConvTranspose { weight: usize, bias: usize },
    LeakyRelu { slope: f64 },
    Sigmoid,
    Flatten,
    /// Rows scaled to unit Euclidean norm.
    L2Normalize,
    /// Channel concatenation with the recorded output of an earlier layer.
    ConcatFrom { layer: usize },
}

fn dims4<S: Scalar>(t: &Tensor<S>) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s.n(), s.c(), s.h(), s.w())
}

pub fn conv_out_side(side: usize, stride: usize) -> usize {
    (side - 1) / stride + 1
}

pub fn dense_forward<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (n, in_f) = (x.shape().n(), x.shape().c());
    let out_f = w.shape().n();
    debug_assert_eq!(w.shape().c(), in_f);
    let mut y = Tensor::zeros(Shape::d2(n, out_f));
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let yd = y.data_mut();
    for ni in 0..n {
        let x_row = &xd[ni * in_f..(ni + 1) * in_f];
        let y_row = &mut yd[ni * out_f..(ni + 1) * out_f];
        for (o, out) in y_row.iter_mut().enumerate() {
            let w_row = &wd[o * in_f..(o + 1) * in_f];
            let mut acc = bd[o];
            for (xv, wv) in x_row.iter().zip(w_row) {
                acc += *xv * *wv;
            }
            *out = acc;
        }
    }
    y
}

pub fn dense_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    g: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let (n, in_f) = (x.shape().n(), x.shape().c());
    let out_f = w.shape().n();
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(Shape::d1(out_f));
    let mut dx = Tensor::zeros(x.shape());
    let (xd, wd, gd) = (x.data(), w.data(), g.data());
    {
        let dbd = db.data_mut();
        for ni in 0..n {
            for o in 0..out_f {
                dbd[o] += gd[ni * out_f + o];
            }
        }
    }
    {
        let dwd = dw.data_mut();
        for ni in 0..n {
            let x_row = &xd[ni * in_f..(ni + 1) * in_f];
            for o in 0..out_f {
                let gv = gd[ni * out_f + o];
                let dw_row = &mut dwd[o * in_f..(o + 1) * in_f];
                for (dwv, xv) in dw_row.iter_mut().zip(x_row) {
                    *dwv += gv * *xv;
                }
            }
        }
    }
    {
        let dxd = dx.data_mut();
        for ni in 0..n {
            let dx_row = &mut dxd[ni * in_f..(ni + 1) * in_f];
            for o in 0..out_f {
                let gv = gd[ni * out_f + o];
                let w_row = &wd[o * in_f..(o + 1) * in_f];
                for (dxv, wv) in dx_row.iter_mut().zip(w_row) {
                    *dxv += gv * *wv;
                }
            }
        }
    }
    (dw, db, dx)
}

pub fn conv_forward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
    stride: usize,
) -> Tensor<S> {
    let (n, ic, h, wd_) = dims4(x);
    let oc = w.shape().n();
    debug_assert_eq!(w.shape().c(), ic);
    let (oh, ow) = (conv_out_side(h, stride), conv_out_side(wd_, stride));
    let mut y = Tensor::zeros(Shape::d4(n, oc, oh, ow));
    let (xd, wv_all, bd) = (x.data(), w.data(), b.data());
    let (x_plane, y_plane) = (h * wd_, oh * ow);
    // batch samples are independent; chunk identity keeps results bit-stable
    y.data_mut()
        .par_chunks_mut(oc * y_plane)
        .enumerate()
        .for_each(|(ni, y_n)| {
            for oci in 0..oc {
                let y_base = oci * y_plane;
                let bias = bd[oci];
                for v in &mut y_n[y_base..y_base + y_plane] {
                    *v = bias;
                }
                for ici in 0..ic {
                    let x_base = (ni * ic + ici) * x_plane;
                    let w_base = (oci * ic + ici) * 9;
                    for oy in 0..oh {
                        let y_row = &mut y_n[y_base + oy * ow..y_base + (oy + 1) * ow];
                        for ky in 0..3usize {
                            let iy = (oy * stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let x_row =
                                &xd[x_base + iy as usize * wd_..x_base + (iy as usize + 1) * wd_];
                            for kx in 0..3usize {
                                let wv = wv_all[w_base + ky * 3 + kx];
                                let lo = usize::from(kx == 0);
                                let hi = ((wd_ - kx) / stride + 1).min(ow);
                                if stride == 1 {
                                    let xs = &x_row[lo + kx - 1..hi + kx - 1];
                                    for (out, xv) in y_row[lo..hi].iter_mut().zip(xs) {
                                        *out += wv * *xv;
                                    }
                                } else {
                                    for (ox, out) in y_row[lo..hi].iter_mut().enumerate() {
                                        *out += wv * x_row[(ox + lo) * stride + kx - 1];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    y
}

pub fn conv_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    g: &Tensor<S>,
    stride: usize,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let (n, ic, h, wd_) = dims4(x);
    let oc = w.shape().n();
    let (oh, ow) = (conv_out_side(h, stride), conv_out_side(wd_, stride));
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(Shape::d1(oc));
    let mut dx = Tensor::zeros(x.shape());
    let (xd, wv_all, gd) = (x.data(), w.data(), g.data());
    let (x_plane, y_plane) = (h * wd_, oh * ow);
    {
        let dbd = db.data_mut();
        for ni in 0..n {
            for oci in 0..oc {
                let g_base = (ni * oc + oci) * y_plane;
                let mut acc = S::ZERO;
                for gv in &gd[g_base..g_base + y_plane] {
                    acc += *gv;
                }
                dbd[oci] += acc;
            }
        }
    }
    // dx: each batch sample's input gradient is independent
    dx.data_mut()
        .par_chunks_mut(ic * x_plane)
        .enumerate()
        .for_each(|(ni, dx_n)| {
            for oci in 0..oc {
                let g_base = (ni * oc + oci) * y_plane;
                for ici in 0..ic {
                    let w_base = (oci * ic + ici) * 9;
                    for oy in 0..oh {
                        let g_row = &gd[g_base + oy * ow..g_base + (oy + 1) * ow];
                        for ky in 0..3usize {
                            let iy = (oy * stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row0 = ici * x_plane + iy as usize * wd_;
                            for kx in 0..3usize {
                                let wv = wv_all[w_base + ky * 3 + kx];
                                let lo = usize::from(kx == 0);
                                let hi = ((wd_ - kx) / stride + 1).min(ow);
                                if stride == 1 {
                                    let dxs = &mut dx_n[row0 + lo + kx - 1..row0 + hi + kx - 1];
                                    for (dxv, gv) in dxs.iter_mut().zip(&g_row[lo..hi]) {
                                        *dxv += wv * *gv;
                                    }
                                } else {
                                    for (ox, gv) in g_row[lo..hi].iter().enumerate() {
                                        dx_n[row0 + (ox + lo) * stride + kx - 1] += wv * *gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    // dw: each output channel's weight slice is independent; the batch loop
    // inside runs in a fixed order
    dw.data_mut()
        .par_chunks_mut(ic * 9)
        .enumerate()
        .for_each(|(oci, dw_oc)| {
            for ni in 0..n {
                let g_base = (ni * oc + oci) * y_plane;
                for ici in 0..ic {
                    let x_base = (ni * ic + ici) * x_plane;
                    let w_base = ici * 9;
                    for oy in 0..oh {
                        let g_row = &gd[g_base + oy * ow..g_base + (oy + 1) * ow];
                        for ky in 0..3usize {
                            let iy = (oy * stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row0 = x_base + iy as usize * wd_;
                            for kx in 0..3usize {
                                let lo = usize::from(kx == 0);
                                let hi = ((wd_ - kx) / stride + 1).min(ow);
                                let mut dwv = S::ZERO;
                                if stride == 1 {
                                    let xs = &xd[row0 + lo + kx - 1..row0 + hi + kx - 1];
                                    for (gv, xv) in g_row[lo..hi].iter().zip(xs) {
                                        dwv += *gv * *xv;
                                    }
                                } else {
                                    for (ox, gv) in g_row[lo..hi].iter().enumerate() {
                                        dwv += *gv * xd[row0 + (ox + lo) * stride + kx - 1];
                                    }
                                }
                                dw_oc[w_base + ky * 3 + kx] += dwv;
                            }
                        }
                    }
                }
            }
        });
    (dw, db, dx)
}

pub fn convt_forward<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (n, ic, h, wd_) = dims4(x);
    let oc = w.shape().c();
    debug_assert_eq!(w.shape().n(), ic);
    let (oh, ow) = (h * 2, wd_ * 2);
    let mut y = Tensor::zeros(Shape::d4(n, oc, oh, ow));
    let (xd, wv_all, bd) = (x.data(), w.data(), b.data());
    let (x_plane, y_plane) = (h * wd_, oh * ow);
    y.data_mut()
        .par_chunks_mut(oc * y_plane)
        .enumerate()
        .for_each(|(ni, y_n)| {
            for oci in 0..oc {
                let y_base = oci * y_plane;
                let bias = bd[oci];
                for v in &mut y_n[y_base..y_base + y_plane] {
                    *v = bias;
                }
                for ici in 0..ic {
                    let x_base = (ni * ic + ici) * x_plane;
                    let w_base = (ici * oc + oci) * 9;
                    for iy in 0..h {
                        let x_row = &xd[x_base + iy * wd_..x_base + (iy + 1) * wd_];
                        for ky in 0..3usize {
                            let oy = (2 * iy + ky) as isize - 1;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let y_row_base = y_base + oy as usize * ow;
                            for kx in 0..3usize {
                                let wv = wv_all[w_base + ky * 3 + kx];
                                let lo = usize::from(kx == 0);
                                for (ix, xv) in x_row[lo..].iter().enumerate() {
                                    y_n[y_row_base + 2 * (ix + lo) + kx - 1] += wv * *xv;
                                }
                            }
                        }
                    }
                }
            }
        });
    y
}

pub fn convt_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    g: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let (n, ic, h, wd_) = dims4(x);
    let oc = w.shape().c();
    let (oh, ow) = (h * 2, wd_ * 2);
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(Shape::d1(oc));
    let mut dx = Tensor::zeros(x.shape());
    let (xd, wv_all, gd) = (x.data(), w.data(), g.data());
    let (x_plane, y_plane) = (h * wd_, oh * ow);
    {
        let dbd = db.data_mut();
        for ni in 0..n {
            for oci in 0..oc {
                let g_base = (ni * oc + oci) * y_plane;
                let mut acc = S::ZERO;
                for gv in &gd[g_base..g_base + y_plane] {
                    acc += *gv;
                }
                dbd[oci] += acc;
            }
        }
    }
    // dx: independent per batch sample
    dx.data_mut()
        .par_chunks_mut(ic * x_plane)
        .enumerate()
        .for_each(|(ni, dx_n)| {
            for oci in 0..oc {
                let g_base = (ni * oc + oci) * y_plane;
                for ici in 0..ic {
                    let w_base = (ici * oc + oci) * 9;
                    for iy in 0..h {
                        let x_row_base = ici * x_plane + iy * wd_;
                        for ky in 0..3usize {
                            let oy = (2 * iy + ky) as isize - 1;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let g_row_base = g_base + oy as usize * ow;
                            for kx in 0..3usize {
                                let wv = wv_all[w_base + ky * 3 + kx];
                                let lo = usize::from(kx == 0);
                                for ix in lo..wd_ {
                                    dx_n[x_row_base + ix] += wv * gd[g_row_base + 2 * ix + kx - 1];
                                }
                            }
                        }
                    }
                }
            }
        });
    // dw: independent per input channel (the leading weight axis)
    dw.data_mut()
        .par_chunks_mut(oc * 9)
        .enumerate()
        .for_each(|(ici, dw_ic)| {
            for ni in 0..n {
                let x_base = (ni * ic + ici) * x_plane;
                for oci in 0..oc {
                    let g_base = (ni * oc + oci) * y_plane;
                    let w_base = oci * 9;
                    for iy in 0..h {
                        let x_row_base = x_base + iy * wd_;
                        for ky in 0..3usize {
                            let oy = (2 * iy + ky) as isize - 1;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let g_row_base = g_base + oy as usize * ow;
                            for kx in 0..3usize {
                                let lo = usize::from(kx == 0);
                                let mut dwv = S::ZERO;
                                for ix in lo..wd_ {
                                    dwv += gd[g_row_base + 2 * ix + kx - 1] * xd[x_row_base + ix];
                                }
                                dw_ic[w_base + ky * 3 + kx] += dwv;
                            }
                        }
                    }
                }
            }
        });
    (dw, db, dx)
}

pub fn leaky_relu_forward<S: Scalar>(x: &Tensor<S>, slope: f64) -> Tensor<S> {
    let s = S::from_f64(slope);
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v <= S::ZERO {
            *v *= s;
        }
    }
    y
}

pub fn leaky_relu_backward<S: Scalar>(x: &Tensor<S>, g: &Tensor<S>, slope: f64) -> Tensor<S> {
    let s = S::from_f64(slope);
    let mut dx = g.clone();
    for (d, xv) in dx.data_mut().iter_mut().zip(x.data()) {
        if *xv <= S::ZERO {
            *d *= s;
        }
    }
    dx
}

pub fn sigmoid_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut y = x.clone();
    for v in y.data_mut() {
        let xv = *v;
        *v = if xv >= S::ZERO {
            S::ONE / (S::ONE + (-xv).exp())
        } else {
            let e = xv.exp();
            e / (S::ONE + e)
        };
    }
    y
}

pub fn sigmoid_backward<S: Scalar>(y: &Tensor<S>, g: &Tensor<S>) -> Tensor<S> {
    let mut dx = g.clone();
    for (d, yv) in dx.data_mut().iter_mut().zip(y.data()) {
        *d *= *yv * (S::ONE - *yv);
    }
    dx
}

const NORM_GUARD: f64 = 1e-12;

pub fn l2_normalize_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (n, f) = (x.shape().n(), x.shape().c());
    let mut y = x.clone();
    let yd = y.data_mut();
    for ni in 0..n {
        let row = &mut yd[ni * f..(ni + 1) * f];
        let mut sq = S::from_f64(NORM_GUARD);
        for v in row.iter() {
            sq += *v * *v;
        }
        let inv = S::ONE / sq.sqrt();
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    y
}

pub fn l2_normalize_backward<S: Scalar>(x: &Tensor<S>, g: &Tensor<S>) -> Tensor<S> {
    let (n, f) = (x.shape().n(), x.shape().c());
    let mut dx = Tensor::zeros(x.shape());
    let (xd, gd) = (x.data(), g.data());
    let dxd = dx.data_mut();
    for ni in 0..n {
        let xr = &xd[ni * f..(ni + 1) * f];
        let gr = &gd[ni * f..(ni + 1) * f];
        let mut sq = S::from_f64(NORM_GUARD);
        let mut dot = S::ZERO;
        for (xv, gv) in xr.iter().zip(gr) {
            sq += *xv * *xv;
            dot += *xv * *gv;
        }
        let r = sq.sqrt();
        let r3 = r * r * r;
        let dr = &mut dxd[ni * f..(ni + 1) * f];
        for ((d, xv), gv) in dr.iter_mut().zip(xr).zip(gr) {
            *d = *gv / r - *xv * dot / r3;
        }
    }
    dx
}

/// Concatenates along axis 1 (channels for rank 4, features for rank 2).
pub fn concat_axis1<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (sa, sb) = (a.shape(), b.shape());
    assert_eq!(sa.rank(), sb.rank(), "concat rank mismatch");
    assert_eq!(sa.n(), sb.n(), "concat batch mismatch");
    let shape = if sa.rank() == 4 {
        assert_eq!((sa.h(), sa.w()), (sb.h(), sb.w()), "concat plane mismatch");
        Shape::d4(sa.n(), sa.c() + sb.c(), sa.h(), sa.w())
    } else {
        Shape::d2(sa.n(), sa.c() + sb.c())
    };
    let stride_a = sa.numel() / sa.n();
    let stride_b = sb.numel() / sb.n();
    let mut data = Vec::with_capacity(shape.numel());
    for ni in 0..sa.n() {
        data.extend_from_slice(&a.data()[ni * stride_a..(ni + 1) * stride_a]);
        data.extend_from_slice(&b.data()[ni * stride_b..(ni + 1) * stride_b]);
    }
    Tensor::from_vec(shape, data)
}

/// Splits a gradient of [`concat_axis1`] output back into the two parts,
/// given the first part's shape.
pub fn split_axis1<S: Scalar>(g: &Tensor<S>, first: Shape) -> (Tensor<S>, Tensor<S>) {
    let sg = g.shape();
    let n = sg.n();
    let stride_first = first.numel() / first.n();
    let stride_all = sg.numel() / n;
    let stride_second = stride_all - stride_first;
    let second = if sg.rank() == 4 {
        Shape::d4(n, sg.c() - first.c(), sg.h(), sg.w())
    } else {
        Shape::d2(n, sg.c() - first.c())
    };
    let mut da = Vec::with_capacity(n * stride_first);
    let mut db = Vec::with_capacity(n * stride_second);
    for ni in 0..n {
        let row = &g.data()[ni * stride_all..(ni + 1) * stride_all];
        da.extend_from_slice(&row[..stride_first]);
        db.extend_from_slice(&row[stride_first..]);
    }
    (Tensor::from_vec(first, da), Tensor::from_vec(second, db))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_shapes_and_identity_kernel() {
        let x = Tensor::<f64>::from_vec(
            Shape::d4(1, 1, 4, 4),
            (0..16).map(|v| v as f64).collect(),
        );
        // identity kernel: center tap 1
        let mut wv = vec![0.0; 9];
        wv[4] = 1.0;
        let w = Tensor::from_vec(Shape::d4(1, 1, 3, 3), wv);
        let b = Tensor::zeros(Shape::d1(1));
        let y = conv_forward(&x, &w, &b, 1);
        assert_eq!(y.shape(), Shape::d4(1, 1, 4, 4));
        assert_eq!(y.data(), x.data());
        let y2 = conv_forward(&x, &w, &b, 2);
        assert_eq!(y2.shape(), Shape::d4(1, 1, 2, 2));
        assert_eq!(y2.data(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn convt_doubles_the_plane() {
        let x = Tensor::<f64>::from_vec(Shape::d4(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]);
        let w = Tensor::from_vec(Shape::d4(1, 1, 3, 3), vec![1.0; 9]);
        let b = Tensor::zeros(Shape::d1(1));
        let y = convt_forward(&x, &w, &b);
        assert_eq!(y.shape(), Shape::d4(1, 1, 4, 4));
        // mass is conserved: each input contributes to 9 outputs (clipped at
        // the border), total = sum(x) * taps inside the canvas
        let total: f64 = y.data().iter().sum();
        assert!(total > 0.0);
    }

    #[test]
    fn concat_and_split_are_inverse() {
        let a = Tensor::<f32>::from_vec(Shape::d4(2, 1, 2, 2), (0..8).map(|v| v as f32).collect());
        let b = Tensor::<f32>::from_vec(
            Shape::d4(2, 2, 2, 2),
            (100..116).map(|v| v as f32).collect(),
        );
        let c = concat_axis1(&a, &b);
        assert_eq!(c.shape(), Shape::d4(2, 3, 2, 2));
        let (ra, rb) = split_axis1(&c, a.shape());
        assert_eq!(ra, a);
        assert_eq!(rb, b);
    }

    #[test]
    fn dense_matches_hand_computation() {
        let x = Tensor::<f64>::from_vec(Shape::d2(1, 2), vec![1.0, 2.0]);
        let w = Tensor::from_vec(Shape::d2(2, 2), vec![1.0, 0.5, -1.0, 2.0]);
        let b = Tensor::from_vec(Shape::d1(2), vec![0.25, -0.25]);
        let y = dense_forward(&x, &w, &b);
        assert_eq!(y.data(), &[1.0 + 1.0 + 0.25, -1.0 + 4.0 - 0.25]);
    }

    #[test]
    fn l2_rows_have_unit_norm() {
        let x = Tensor::<f64>::from_vec(Shape::d2(2, 3), vec![3.0, 0.0, 4.0, 1.0, 1.0, 1.0]);
        let y = l2_normalize_forward(&x);
        for ni in 0..2 {
            let norm: f64 = y.data()[ni * 3..(ni + 1) * 3]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }
}
