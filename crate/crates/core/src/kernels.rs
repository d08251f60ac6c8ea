//! Raw forward/backward kernels over `Tensor` storage.
//!
//! Everything here is eager and tape-free; `autodiff` wraps these into
//! recorded operations. Matrix products go through `matrixmultiply` and honor
//! the global [`Precision`](crate::tensor::Precision) switch.

use crate::error::{Error, Result};
use crate::tensor::{precision, Precision, Tensor};

/// Scalar type a GEMM can run in.
trait Element: Copy + Default + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = alpha * a·b + beta * c` with arbitrary strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Element for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Element for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Row/column strides of a row-major matrix, optionally viewed transposed.
#[derive(Clone, Copy)]
struct Layout {
    rs: isize,
    cs: isize,
}

impl Layout {
    fn row_major(cols: usize) -> Self {
        Layout { rs: cols as isize, cs: 1 }
    }
    fn transposed(cols: usize) -> Self {
        Layout { rs: 1, cs: cols as isize }
    }
}

fn convert<T: Element>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&x| T::from_f64(x)).collect()
}

/// Bounds-checked wrapper: `c (m×n, row-major) = a·b (+ c if accumulate)`.
#[allow(clippy::too_many_arguments)]
fn gemm_checked<T: Element>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    la: Layout,
    b: &[T],
    lb: Layout,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let beta = if accumulate { T::from_f64(1.0) } else { T::default() };
    // SAFETY: slice lengths cover every index reachable through the strides
    // (the layouts describe dense m×k, k×n and m×n matrices).
    unsafe {
        T::gemm(
            m,
            k,
            n,
            a.as_ptr(),
            la.rs,
            la.cs,
            b.as_ptr(),
            lb.rs,
            lb.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `a·b` on `f64` storage, running the product in the active precision.
fn gemm_f64(m: usize, k: usize, n: usize, a: &[f64], la: Layout, b: &[f64], lb: Layout) -> Vec<f64> {
    match precision() {
        Precision::F64 => {
            let mut c = vec![0.0; m * n];
            gemm_checked(m, k, n, a, la, b, lb, &mut c, false);
            c
        }
        Precision::F32 => {
            let a32: Vec<f32> = convert(a);
            let b32: Vec<f32> = convert(b);
            let mut c = vec![0f32; m * n];
            gemm_checked(m, k, n, &a32, la, &b32, lb, &mut c, false);
            c.into_iter().map(f64::from).collect()
        }
    }
}

fn matrix_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::shape(op, t.shape(), "expected a rank-2 tensor")),
    }
}

/// Matrix product `[M,K]·[K,N] -> [M,N]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = matrix_dims("matmul", a)?;
    let (k2, n) = matrix_dims("matmul", b)?;
    if k != k2 {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let c = gemm_f64(m, k, n, a.data(), Layout::row_major(k), b.data(), Layout::row_major(n));
    Ok(Tensor::from_parts(vec![m, n], c))
}

/// Gradients of `C = A·B`: `(dC·Bᵀ, Aᵀ·dC)`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, dc: &Tensor) -> (Tensor, Tensor) {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let da = gemm_f64(m, n, k, dc.data(), Layout::row_major(n), b.data(), Layout::transposed(n));
    let db = gemm_f64(k, m, n, a.data(), Layout::transposed(k), dc.data(), Layout::row_major(n));
    (
        Tensor::from_parts(vec![m, k], da),
        Tensor::from_parts(vec![k, n], db),
    )
}

/// Adds `bias[c]` along the last axis.
pub fn bias_add(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let c = *x.shape().last().unwrap_or(&1);
    if bias.shape() != [c] {
        return Err(Error::dim("bias_add", x.shape(), bias.shape()));
    }
    let b = bias.data();
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        for (v, bi) in row.iter_mut().zip(b) {
            *v += bi;
        }
    }
    Ok(out)
}

/// Sums over every axis but the last.
pub fn sum_to_last_axis(x: &Tensor) -> Tensor {
    let c = *x.shape().last().unwrap_or(&1);
    let mut acc = vec![0.0; c];
    for row in x.data().chunks_exact(c) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    Tensor::from_parts(vec![c], acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    /// Zero padding such that `out = ceil(in / stride)`.
    #[default]
    Same,
    Valid,
}

/// Resolved geometry of an NHWC cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub out_c: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2)
}

impl ConvGeometry {
    /// Output spatial size of a conv over `(h, w)` without a concrete batch.
    pub fn output_hw(
        (h, w): (usize, usize),
        (kh, kw): (usize, usize),
        padding: Padding,
        stride: usize,
    ) -> Option<(usize, usize)> {
        if stride == 0 {
            return None;
        }
        match padding {
            Padding::Same => Some((h.div_ceil(stride), w.div_ceil(stride))),
            Padding::Valid => {
                if h < kh || w < kw {
                    None
                } else {
                    Some(((h - kh) / stride + 1, (w - kw) / stride + 1))
                }
            }
        }
    }

    pub fn new(input: &[usize], kernel: &[usize], padding: Padding, stride: usize) -> Result<Self> {
        let &[batch, in_h, in_w, in_c] = input else {
            return Err(Error::shape("conv2d", input, "input must be [N,H,W,C]"));
        };
        let &[kernel_h, kernel_w, k_in, out_c] = kernel else {
            return Err(Error::shape("conv2d", kernel, "kernel must be [kh,kw,Cin,Cout]"));
        };
        if k_in != in_c {
            return Err(Error::dim("conv2d", input, kernel));
        }
        if stride == 0 {
            return Err(Error::Contract("conv2d stride must be at least 1".into()));
        }
        let ((out_h, pad_top), (out_w, pad_left)) = match padding {
            Padding::Same => (
                same_padding(in_h, kernel_h, stride),
                same_padding(in_w, kernel_w, stride),
            ),
            Padding::Valid => {
                if in_h < kernel_h || in_w < kernel_w {
                    return Err(Error::shape("conv2d", input, "kernel larger than input"));
                }
                (
                    ((in_h - kernel_h) / stride + 1, 0),
                    ((in_w - kernel_w) / stride + 1, 0),
                )
            }
        };
        Ok(ConvGeometry {
            batch,
            in_h,
            in_w,
            in_c,
            kernel_h,
            kernel_w,
            out_c,
            stride,
            out_h,
            out_w,
            pad_top,
            pad_left,
        })
    }

    fn patch_len(&self) -> usize {
        self.kernel_h * self.kernel_w * self.in_c
    }

    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    fn image_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_h, self.out_w, self.out_c]
    }

    /// Images per GEMM so that the patch matrix has a useful row count.
    fn chunk_images(&self) -> usize {
        (4096 / self.out_pixels()).clamp(1, self.batch)
    }

    /// Input row/col of kernel tap `k` for output pixel `o`, if not padding.
    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, in_dim: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < in_dim).then_some(pos as usize)
    }

    /// Writes the patch matrix of images `first..first+count` into `cols`.
    fn im2col<T: Element>(&self, x: &[f64], first: usize, count: usize, cols: &mut [T]) {
        let kl = self.patch_len();
        let cin = self.in_c;
        let mut row = 0;
        for img in first..first + count {
            let base = img * self.image_len();
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let dst = &mut cols[row * kl..(row + 1) * kl];
                    for ky in 0..self.kernel_h {
                        let iy = self.source(oy, ky, self.pad_top, self.in_h);
                        for kx in 0..self.kernel_w {
                            let tap = (ky * self.kernel_w + kx) * cin;
                            let ix = self.source(ox, kx, self.pad_left, self.in_w);
                            let d = &mut dst[tap..tap + cin];
                            match (iy, ix) {
                                (Some(iy), Some(ix)) => {
                                    let src = base + (iy * self.in_w + ix) * cin;
                                    for (o, &v) in d.iter_mut().zip(&x[src..src + cin]) {
                                        *o = T::from_f64(v);
                                    }
                                }
                                _ => d.fill(T::default()),
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Scatter-adds a patch-matrix gradient back onto image gradients.
    fn col2im<T: Element>(&self, cols: &[T], first: usize, count: usize, dx: &mut [f64]) {
        let kl = self.patch_len();
        let cin = self.in_c;
        let mut row = 0;
        for img in first..first + count {
            let base = img * self.image_len();
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let src = &cols[row * kl..(row + 1) * kl];
                    for ky in 0..self.kernel_h {
                        let Some(iy) = self.source(oy, ky, self.pad_top, self.in_h) else {
                            continue;
                        };
                        for kx in 0..self.kernel_w {
                            let Some(ix) = self.source(ox, kx, self.pad_left, self.in_w)
                            else {
                                continue;
                            };
                            let tap = (ky * self.kernel_w + kx) * cin;
                            let dst = base + (iy * self.in_w + ix) * cin;
                            for (d, &g) in dx[dst..dst + cin].iter_mut().zip(&src[tap..tap + cin]) {
                                *d += g.to_f64();
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn conv2d_forward_in<T: Element>(g: &ConvGeometry, x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Vec<f64> {
    let kl = g.patch_len();
    let px = g.out_pixels();
    let w: Vec<T> = convert(kernel.data());
    let chunk = g.chunk_images();
    let mut cols = vec![T::default(); chunk * px * kl];
    let mut acc = vec![T::default(); chunk * px * g.out_c];
    let mut out = Vec::with_capacity(g.batch * px * g.out_c);
    let b = bias.data();
    let mut first = 0;
    while first < g.batch {
        let count = chunk.min(g.batch - first);
        let rows = count * px;
        g.im2col(x.data(), first, count, &mut cols[..rows * kl]);
        gemm_checked(
            rows,
            kl,
            g.out_c,
            &cols[..rows * kl],
            Layout::row_major(kl),
            &w,
            Layout::row_major(g.out_c),
            &mut acc[..rows * g.out_c],
            false,
        );
        for r in acc[..rows * g.out_c].chunks_exact(g.out_c) {
            out.extend(r.iter().zip(b).map(|(&v, bi)| v.to_f64() + bi));
        }
        first += count;
    }
    out
}

/// NHWC cross-correlation (no kernel flip) plus per-output-channel bias.
pub fn conv2d(x: &Tensor, kernel: &Tensor, bias: &Tensor, padding: Padding, stride: usize) -> Result<(Tensor, ConvGeometry)> {
    let g = ConvGeometry::new(x.shape(), kernel.shape(), padding, stride)?;
    if bias.shape() != [g.out_c] {
        return Err(Error::dim("conv2d bias", kernel.shape(), bias.shape()));
    }
    let out = match precision() {
        Precision::F64 => conv2d_forward_in::<f64>(&g, x, kernel, bias),
        Precision::F32 => conv2d_forward_in::<f32>(&g, x, kernel, bias),
    };
    Ok((Tensor::from_parts(g.output_shape().to_vec(), out), g))
}

pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub kernel: Tensor,
    pub bias: Tensor,
}

fn conv2d_backward_in<T: Element>(
    g: &ConvGeometry,
    x: &Tensor,
    kernel: &Tensor,
    dy: &Tensor,
    need_input: bool,
) -> (Option<Vec<f64>>, Vec<f64>) {
    let kl = g.patch_len();
    let px = g.out_pixels();
    let w: Vec<T> = convert(kernel.data());
    let chunk = g.chunk_images();
    let mut cols = vec![T::default(); chunk * px * kl];
    let mut dcols = vec![T::default(); if need_input { chunk * px * kl } else { 0 }];
    let mut dw = vec![T::default(); kl * g.out_c];
    let mut dx = need_input.then(|| vec![0.0; x.numel()]);
    let mut first = 0;
    while first < g.batch {
        let count = chunk.min(g.batch - first);
        let rows = count * px;
        let dy_chunk: Vec<T> = convert(&dy.data()[first * px * g.out_c..(first + count) * px * g.out_c]);
        g.im2col(x.data(), first, count, &mut cols[..rows * kl]);
        // dW += colsᵀ · dY
        gemm_checked(
            kl,
            rows,
            g.out_c,
            &cols[..rows * kl],
            Layout::transposed(kl),
            &dy_chunk,
            Layout::row_major(g.out_c),
            &mut dw,
            true,
        );
        if let Some(dx) = dx.as_mut() {
            // dCols = dY · Wᵀ
            gemm_checked(
                rows,
                g.out_c,
                kl,
                &dy_chunk,
                Layout::row_major(g.out_c),
                &w,
                Layout::transposed(g.out_c),
                &mut dcols[..rows * kl],
                false,
            );
            g.col2im(&dcols[..rows * kl], first, count, dx);
        }
        first += count;
    }
    (dx, dw.into_iter().map(Element::to_f64).collect())
}

pub fn conv2d_backward(g: &ConvGeometry, x: &Tensor, kernel: &Tensor, dy: &Tensor, need_input: bool) -> ConvGrads {
    let (dx, dw) = match precision() {
        Precision::F64 => conv2d_backward_in::<f64>(g, x, kernel, dy, need_input),
        Precision::F32 => conv2d_backward_in::<f32>(g, x, kernel, dy, need_input),
    };
    ConvGrads {
        input: dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
        kernel: Tensor::from_parts(kernel.shape().to_vec(), dw),
        bias: sum_to_last_axis(dy),
    }
}

/// How a 2×2/stride-2 pool treats odd spatial sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolMode {
    /// Odd height or width is a shape error.
    #[default]
    Strict,
    /// Trailing odd row/column is dropped (`out = floor(in / 2)`).
    Floor,
}

pub const POOL: usize = 2;

pub fn pool_output_hw(h: usize, w: usize, mode: PoolMode) -> Option<(usize, usize)> {
    if mode == PoolMode::Strict && (h % POOL != 0 || w % POOL != 0) {
        return None;
    }
    let (oh, ow) = (h / POOL, w / POOL);
    (oh > 0 && ow > 0).then_some((oh, ow))
}

/// 2×2 max pool with stride 2. Returns the output and, per output element,
/// the flat input index it was taken from (first maximum in row-major scan).
pub fn maxpool2d(x: &Tensor, mode: PoolMode) -> Result<(Tensor, Vec<usize>)> {
    let &[n, h, w, c] = x.shape() else {
        return Err(Error::shape("maxpool2d", x.shape(), "input must be [N,H,W,C]"));
    };
    let (oh, ow) = pool_output_hw(h, w, mode).ok_or_else(|| {
        Error::shape("maxpool2d", x.shape(), "spatial dims must be divisible by 2")
    })?;
    let data = x.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut arg = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for dy in 0..POOL {
                        for dx in 0..POOL {
                            let i = ((b * h + oy * POOL + dy) * w + ox * POOL + dx) * c + ch;
                            // strict `>` keeps the first maximum; NaN never replaces
                            if best_i == usize::MAX || data[i] > best {
                                best = data[i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    Ok((Tensor::from_parts(vec![n, oh, ow, c], out), arg))
}

pub fn maxpool2d_backward(input_shape: &[usize], argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape.to_vec());
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        d[i] += g;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul() {
        let i2 = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(matmul(&i2, &m).unwrap(), m);
    }

    #[test]
    fn row_times_column() {
        let c = matmul(&t(&[1, 2], &[1.0, 2.0]), &t(&[2, 1], &[3.0, 4.0])).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_error_names_both_shapes() {
        let err = matmul(&Tensor::zeros([2, 3]), &Tensor::zeros([2, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::uniform([4, 5], -1.0, 1.0, &mut rng);
        let b = Tensor::uniform([5, 3], -1.0, 1.0, &mut rng);
        let c = matmul(&a, &b).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let expect: f64 = (0..5).map(|k| a.data()[i * 5 + k] * b.data()[k * 3 + j]).sum();
                assert!((c.data()[i * 3 + j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_one_by_one_conv() {
        let (y, _) = conv2d(
            &t(&[1, 1, 1, 1], &[3.0]),
            &t(&[1, 1, 1, 1], &[-2.0]),
            &t(&[1], &[0.5]),
            Padding::Same,
            1,
        )
        .unwrap();
        assert_eq!(y.data(), &[3.0 * -2.0 + 0.5]);
    }

    #[test]
    fn zero_input_conv_yields_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = Tensor::uniform([3, 3, 2, 4], -1.0, 1.0, &mut rng);
        let b = t(&[4], &[0.1, -0.2, 0.3, 4.0]);
        let (y, _) = conv2d(&Tensor::zeros([2, 5, 5, 2]), &k, &b, Padding::Same, 1).unwrap();
        assert_eq!(y.shape(), &[2, 5, 5, 4]);
        for px in y.data().chunks_exact(4) {
            assert_eq!(px, b.data());
        }
    }

    #[test]
    fn conv_channel_mismatch_is_dimension_error() {
        let r = conv2d(
            &Tensor::zeros([1, 4, 4, 3]),
            &Tensor::zeros([3, 3, 2, 4]),
            &Tensor::zeros([4]),
            Padding::Same,
            1,
        );
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn same_padding_keeps_spatial_size_at_stride_one() {
        let g = ConvGeometry::new(&[2, 32, 32, 3], &[3, 3, 3, 32], Padding::Same, 1).unwrap();
        assert_eq!(g.output_shape(), [2, 32, 32, 32]);
        assert_eq!((g.pad_top, g.pad_left), (1, 1));
        let g = ConvGeometry::new(&[1, 7, 7, 1], &[3, 3, 1, 1], Padding::Valid, 2).unwrap();
        assert_eq!((g.out_h, g.out_w), (3, 3));
    }

    #[test]
    fn single_window_pool() {
        let (y, arg) = maxpool2d(&t(&[1, 2, 2, 1], &[1.0, 2.0, 3.0, 4.0]), PoolMode::Strict).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(arg, vec![3]);
    }

    #[test]
    fn constant_pool_routes_to_first_element() {
        let x = Tensor::full([1, 4, 4, 1], 2.5);
        let (y, arg) = maxpool2d(&x, PoolMode::Strict).unwrap();
        assert!(y.data().iter().all(|&v| v == 2.5));
        let dx = maxpool2d_backward(x.shape(), &arg, &Tensor::ones([1, 2, 2, 1]));
        #[rustfmt::skip]
        let expect = [
            1.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            1.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        ];
        assert_eq!(dx.data(), &expect);
    }

    #[test]
    fn odd_pool_dims() {
        let x = Tensor::zeros([1, 7, 7, 2]);
        assert!(matches!(maxpool2d(&x, PoolMode::Strict), Err(Error::Shape { .. })));
        let (y, _) = maxpool2d(&x, PoolMode::Floor).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3, 2]);
    }

    #[test]
    fn f32_mode_is_close_to_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::uniform([2, 6, 6, 3], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform([3, 3, 3, 5], -1.0, 1.0, &mut rng);
        let b = Tensor::zeros([5]);
        let (y64, _) = conv2d(&x, &k, &b, Padding::Same, 1).unwrap();
        let y32 = conv2d_forward_in::<f32>(
            &ConvGeometry::new(x.shape(), k.shape(), Padding::Same, 1).unwrap(),
            &x,
            &k,
            &b,
        );
        let err = y64
            .data()
            .iter()
            .zip(&y32)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5 && err > 0.0, "{err}");
    }
}
