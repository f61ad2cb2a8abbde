//! Dense kernels shared by the network layers: strided GEMM, im2col/col2im.

use std::fmt::Debug;

use num_traits::Float;

/// Scalar type the network is generic over: `f32` for training, `f64` for
/// finite-difference checks.
pub trait Real: Float + Default + Debug + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C = alpha * A B + beta * C` on raw strided storage.
    ///
    /// # Safety
    /// Every element addressed through the given shapes and strides must lie
    /// inside the allocations behind `a`, `b` and `c`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
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

impl Real for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
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
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
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
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row and column stride of a matrix view.
#[derive(Debug, Clone, Copy)]
pub struct Strides(pub usize, pub usize);

impl Strides {
    pub fn row_major(cols: usize) -> Self {
        Strides(cols, 1)
    }
    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(cols: usize) -> Self {
        Strides(1, cols)
    }
    fn span(self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * self.0 + (cols - 1) * self.1 + 1
        }
    }
}

/// Bounds-checked `C = A B + beta * C` with `A: m x k`, `B: k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<R: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[R],
    sa: Strides,
    b: &[R],
    sb: Strides,
    beta: R,
    c: &mut [R],
    sc: Strides,
) {
    assert!(sa.span(m, k) <= a.len(), "gemm: A out of bounds");
    assert!(sb.span(k, n) <= b.len(), "gemm: B out of bounds");
    assert!(sc.span(m, n) <= c.len(), "gemm: C out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: spans checked above.
    unsafe {
        R::gemm_raw(
            m,
            k,
            n,
            R::one(),
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            sc.0 as isize,
            sc.1 as isize,
        )
    }
}

/// Geometry of a valid (unpadded) strided convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub size: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_size(&self) -> usize {
        (self.size - self.kernel) / self.stride + 1
    }
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }
    pub fn positions(&self) -> usize {
        self.out_size() * self.out_size()
    }
    pub fn input_len(&self) -> usize {
        self.channels * self.size * self.size
    }
}

/// `[C, H, W]` image to `[C*k*k, OH*OW]` patch matrix.
pub fn im2col<R: Real>(g: &ConvGeom, input: &[R], cols: &mut [R]) {
    let (k, s, h, o) = (g.kernel, g.stride, g.size, g.out_size());
    let p = o * o;
    for c in 0..g.channels {
        let plane = &input[c * h * h..(c + 1) * h * h];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..o {
                    let src = &plane[(oy * s + ky) * h + kx..];
                    let line = &mut dst[oy * o..(oy + 1) * o];
                    for (ox, d) in line.iter_mut().enumerate() {
                        *d = src[ox * s];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients into the image.
pub fn col2im<R: Real>(g: &ConvGeom, cols: &[R], input_grad: &mut [R]) {
    let (k, s, h, o) = (g.kernel, g.stride, g.size, g.out_size());
    let p = o * o;
    for c in 0..g.channels {
        let plane = &mut input_grad[c * h * h..(c + 1) * h * h];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..o {
                    let base = (oy * s + ky) * h + kx;
                    for ox in 0..o {
                        let d = &mut plane[base + ox * s];
                        *d = *d + src[oy * o + ox];
                    }
                }
            }
        }
    }
}
