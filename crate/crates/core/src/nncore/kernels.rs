//! Raw forward/backward kernels shared by the tape and the free functions.

/// `c = a · b + beta · c` with optional transposes; `a` is `m×k`, `b` is `k×n`
/// after transposition, all row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly the strided extents passed in.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub batch: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.kh
    }
    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.kw
    }
    pub fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
    pub fn cols(&self) -> usize {
        self.batch * self.out_h() * self.out_w()
    }
}

/// Unfold a `[C, N, H, W]` input into a `[C·kh·kw, N·H'·W']` matrix.
pub(crate) fn im2col(g: &ConvGeom, input: &[f64]) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let ncols = g.cols();
    let mut cols = vec![0.0; g.k() * ncols];
    let pad = g.pad as isize;
    for ci in 0..g.c_in {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for n in 0..g.batch {
                    let plane = &input[(ci * g.batch + n) * g.h * g.w..][..g.h * g.w];
                    for oy in 0..oh {
                        let iy = oy as isize + ky as isize - pad;
                        let out = &mut dst[(n * oh + oy) * ow..][..ow];
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * g.w..][..g.w];
                        let shift = kx as isize - pad;
                        // ox range with 0 <= ox + shift < w
                        let lo = (-shift).max(0) as usize;
                        let hi = ((g.w as isize - shift).min(ow as isize)).max(0) as usize;
                        if lo < hi {
                            let s0 = (lo as isize + shift) as usize;
                            out[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
pub(crate) fn col2im(g: &ConvGeom, cols: &[f64]) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let ncols = g.cols();
    let mut input = vec![0.0; g.c_in * g.batch * g.h * g.w];
    let pad = g.pad as isize;
    for ci in 0..g.c_in {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src_row = &cols[row * ncols..(row + 1) * ncols];
                for n in 0..g.batch {
                    let plane = &mut input[(ci * g.batch + n) * g.h * g.w..][..g.h * g.w];
                    for oy in 0..oh {
                        let iy = oy as isize + ky as isize - pad;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src = &src_row[(n * oh + oy) * ow..][..ow];
                        let dst = &mut plane[iy as usize * g.w..][..g.w];
                        let shift = kx as isize - pad;
                        let lo = (-shift).max(0) as usize;
                        let hi = ((g.w as isize - shift).min(ow as isize)).max(0) as usize;
                        for ox in lo..hi {
                            dst[(ox as isize + shift) as usize] += src[ox];
                        }
                    }
                }
            }
        }
    }
    input
}

/// Returns the output `[C_out, N·H'·W']` and the unfolded input.
pub(crate) fn conv_forward(g: &ConvGeom, input: &[f64], weight: &[f64], bias: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cols = im2col(g, input);
    let ncols = g.cols();
    let mut out = vec![0.0; g.c_out * ncols];
    for (co, row) in out.chunks_mut(ncols.max(1)).enumerate() {
        row.fill(bias[co]);
    }
    gemm(g.c_out, g.k(), ncols, weight, false, &cols, false, 1.0, &mut out);
    (out, cols)
}

/// Returns `(d_input, d_weight, d_bias)`.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    cols: &[f64],
    weight: &[f64],
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let ncols = g.cols();
    let k = g.k();
    let mut dw = vec![0.0; g.c_out * k];
    gemm(g.c_out, ncols, k, dout, false, cols, true, 0.0, &mut dw);
    let db = dout.chunks(ncols.max(1)).map(|r| r.iter().sum()).collect();
    let mut dcols = vec![0.0; k * ncols];
    gemm(k, g.c_out, ncols, weight, true, dout, false, 0.0, &mut dcols);
    (col2im(g, &dcols), dw, db)
}

/// `[m, n]·[n, N] + b`.
pub(crate) fn linear_forward(
    m: usize,
    n: usize,
    batch: usize,
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; m * batch];
    for (i, row) in out.chunks_mut(batch.max(1)).enumerate() {
        row.fill(bias[i]);
    }
    gemm(m, n, batch, weight, false, input, false, 1.0, &mut out);
    out
}

pub(crate) fn linear_backward(
    m: usize,
    n: usize,
    batch: usize,
    input: &[f64],
    weight: &[f64],
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dw = vec![0.0; m * n];
    gemm(m, batch, n, dout, false, input, true, 0.0, &mut dw);
    let db = dout.chunks(batch.max(1)).map(|r| r.iter().sum()).collect();
    let mut dx = vec![0.0; n * batch];
    gemm(n, m, batch, weight, true, dout, false, 0.0, &mut dx);
    (dx, dw, db)
}

/// Column-wise log-softmax of a `[d, cols]` matrix.
pub(crate) fn log_softmax(d: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for c in 0..cols {
        let mut mx = f64::NEG_INFINITY;
        for i in 0..d {
            mx = mx.max(x[i * cols + c]);
        }
        let mut s = 0.0;
        for i in 0..d {
            s += (x[i * cols + c] - mx).exp();
        }
        let lse = mx + s.ln();
        for i in 0..d {
            out[i * cols + c] = x[i * cols + c] - lse;
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
