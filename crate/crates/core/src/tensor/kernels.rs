// Raw loops behind the tape operations. Shapes are validated by the caller.

/// Output length of a strided, padded cross-correlation along one axis.
pub fn conv2d_out_len(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn conv_transpose2d_out_len(input: usize, kernel: usize, stride: usize) -> usize {
    (input - 1) * stride + kernel
}

/// Output positions `o` in `0..out_len` for which `o * stride + offset`
/// lands inside `0..in_len`.
fn valid_range(out_len: usize, in_len: usize, stride: usize, offset: isize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let limit = in_len as isize - offset;
    let hi = if limit <= 0 { 0 } else { (limit - 1) / s + 1 };
    let hi = hi.min(out_len as isize).max(0) as usize;
    let lo = (lo as usize).min(hi);
    (lo, hi)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
}

pub(crate) fn conv2d_forward(x: &[f64], k: &[f64], g: &ConvGeom, out: &mut [f64]) {
    let (hw, ohw) = (g.h * g.w, g.oh * g.ow);
    for co in 0..g.c_out {
        let out_c = &mut out[co * ohw..(co + 1) * ohw];
        for ci in 0..g.c_in {
            let x_c = &x[ci * hw..(ci + 1) * hw];
            for i in 0..g.kh {
                let (oh_lo, oh_hi) = valid_range(g.oh, g.h, g.sh, i as isize - g.ph as isize);
                for j in 0..g.kw {
                    let kv = k[((co * g.c_in + ci) * g.kh + i) * g.kw + j];
                    if kv == 0.0 {
                        continue;
                    }
                    let off_w = j as isize - g.pw as isize;
                    let (ow_lo, ow_hi) = valid_range(g.ow, g.w, g.sw, off_w);
                    for oh in oh_lo..oh_hi {
                        let ih = oh * g.sh + i - g.ph;
                        let row = &x_c[ih * g.w..(ih + 1) * g.w];
                        let orow = &mut out_c[oh * g.ow..(oh + 1) * g.ow];
                        if g.sw == 1 {
                            let start = (ow_lo as isize + off_w) as usize;
                            let src = &row[start..start + (ow_hi - ow_lo)];
                            for (o, s) in orow[ow_lo..ow_hi].iter_mut().zip(src) {
                                *o += kv * s;
                            }
                        } else {
                            for ow in ow_lo..ow_hi {
                                let iw = (ow as isize * g.sw as isize + off_w) as usize;
                                orow[ow] += kv * row[iw];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates input and kernel gradients of [`conv2d_forward`].
pub(crate) fn conv2d_backward(
    x: &[f64],
    k: &[f64],
    g: &ConvGeom,
    grad_out: &[f64],
    mut gx: Option<&mut [f64]>,
    mut gk: Option<&mut [f64]>,
) {
    let (hw, ohw) = (g.h * g.w, g.oh * g.ow);
    for co in 0..g.c_out {
        let go_c = &grad_out[co * ohw..(co + 1) * ohw];
        for ci in 0..g.c_in {
            let x_c = &x[ci * hw..(ci + 1) * hw];
            for i in 0..g.kh {
                let (oh_lo, oh_hi) = valid_range(g.oh, g.h, g.sh, i as isize - g.ph as isize);
                for j in 0..g.kw {
                    let kidx = ((co * g.c_in + ci) * g.kh + i) * g.kw + j;
                    let kv = k[kidx];
                    let off_w = j as isize - g.pw as isize;
                    let (ow_lo, ow_hi) = valid_range(g.ow, g.w, g.sw, off_w);
                    let mut kacc = 0.0;
                    for oh in oh_lo..oh_hi {
                        let ih = oh * g.sh + i - g.ph;
                        let grow = &go_c[oh * g.ow..(oh + 1) * g.ow];
                        for ow in ow_lo..ow_hi {
                            let iw = (ow as isize * g.sw as isize + off_w) as usize;
                            let xi = ci * hw + ih * g.w + iw;
                            kacc += grow[ow] * x_c[ih * g.w + iw];
                            if let Some(gx) = gx.as_deref_mut() {
                                gx[xi] += kv * grow[ow];
                            }
                        }
                    }
                    if let Some(gk) = gk.as_deref_mut() {
                        gk[kidx] += kacc;
                    }
                }
            }
        }
    }
}

/// Transposed convolution without padding; kernel layout `[c_in, c_out, kh, kw]`.
/// `g.oh`/`g.ow` are the (larger) output sizes, `g.h`/`g.w` the input sizes.
pub(crate) fn conv_transpose2d_forward(x: &[f64], k: &[f64], g: &ConvGeom, out: &mut [f64]) {
    let (hw, ohw) = (g.h * g.w, g.oh * g.ow);
    for ci in 0..g.c_in {
        let x_c = &x[ci * hw..(ci + 1) * hw];
        for co in 0..g.c_out {
            let out_c = &mut out[co * ohw..(co + 1) * ohw];
            for i in 0..g.kh {
                for j in 0..g.kw {
                    let kv = k[((ci * g.c_out + co) * g.kh + i) * g.kw + j];
                    if kv == 0.0 {
                        continue;
                    }
                    for ih in 0..g.h {
                        let orow = &mut out_c[(ih * g.sh + i) * g.ow..];
                        let row = &x_c[ih * g.w..(ih + 1) * g.w];
                        for (iw, xv) in row.iter().enumerate() {
                            orow[iw * g.sw + j] += kv * xv;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_transpose2d_backward(
    x: &[f64],
    k: &[f64],
    g: &ConvGeom,
    grad_out: &[f64],
    mut gx: Option<&mut [f64]>,
    mut gk: Option<&mut [f64]>,
) {
    let (hw, ohw) = (g.h * g.w, g.oh * g.ow);
    for ci in 0..g.c_in {
        let x_c = &x[ci * hw..(ci + 1) * hw];
        for co in 0..g.c_out {
            let go_c = &grad_out[co * ohw..(co + 1) * ohw];
            for i in 0..g.kh {
                for j in 0..g.kw {
                    let kidx = ((ci * g.c_out + co) * g.kh + i) * g.kw + j;
                    let kv = k[kidx];
                    let mut kacc = 0.0;
                    for ih in 0..g.h {
                        let grow = &go_c[(ih * g.sh + i) * g.ow..];
                        for iw in 0..g.w {
                            let gv = grow[iw * g.sw + j];
                            kacc += gv * x_c[ih * g.w + iw];
                            if let Some(gx) = gx.as_deref_mut() {
                                gx[ci * hw + ih * g.w + iw] += kv * gv;
                            }
                        }
                    }
                    if let Some(gk) = gk.as_deref_mut() {
                        gk[kidx] += kacc;
                    }
                }
            }
        }
    }
}

/// `y[r, j] = sum_i x[r, i] * w[j, i] + b[j]`.
pub(crate) fn linear_forward(x: &[f64], w: &[f64], b: &[f64], f_in: usize, f_out: usize, y: &mut [f64]) {
    for (xr, yr) in x.chunks_exact(f_in).zip(y.chunks_exact_mut(f_out)) {
        for ((yv, wr), bv) in yr.iter_mut().zip(w.chunks_exact(f_in)).zip(b) {
            let mut acc = 0.0;
            for (a, c) in xr.iter().zip(wr) {
                acc += a * c;
            }
            *yv = acc + bv;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    x: &[f64],
    w: &[f64],
    f_in: usize,
    f_out: usize,
    grad_out: &[f64],
    mut gx: Option<&mut [f64]>,
    mut gw: Option<&mut [f64]>,
    mut gb: Option<&mut [f64]>,
) {
    for (r, (xr, gr)) in x.chunks_exact(f_in).zip(grad_out.chunks_exact(f_out)).enumerate() {
        for (j, &gv) in gr.iter().enumerate() {
            if gv == 0.0 {
                continue;
            }
            let wr = &w[j * f_in..(j + 1) * f_in];
            if let Some(gx) = gx.as_deref_mut() {
                for (g, wv) in gx[r * f_in..(r + 1) * f_in].iter_mut().zip(wr) {
                    *g += gv * wv;
                }
            }
            if let Some(gw) = gw.as_deref_mut() {
                for (g, xv) in gw[j * f_in..(j + 1) * f_in].iter_mut().zip(xr) {
                    *g += gv * xv;
                }
            }
            if let Some(gb) = gb.as_deref_mut() {
                gb[j] += gv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_brute_force() {
        for out_len in 0..6 {
            for in_len in 1..6 {
                for stride in 1..4 {
                    for offset in -4isize..4 {
                        let (lo, hi) = valid_range(out_len, in_len, stride, offset);
                        let expect: std::vec::Vec<usize> = (0..out_len)
                            .filter(|&o| {
                                let p = o as isize * stride as isize + offset;
                                p >= 0 && p < in_len as isize
                            })
                            .collect();
                        let got: std::vec::Vec<usize> = (lo..hi).collect();
                        assert_eq!(got, expect, "{out_len} {in_len} {stride} {offset}");
                    }
                }
            }
        }
    }

    #[test]
    fn out_len_rejects_oversized_kernels() {
        assert_eq!(conv2d_out_len(2, 3, 1, 0), None);
        assert_eq!(conv2d_out_len(2, 3, 1, 1), Some(2));
        assert_eq!(conv2d_out_len(4, 1, 2, 0), Some(2));
    }
}
