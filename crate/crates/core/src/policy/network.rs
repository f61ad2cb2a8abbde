//! Convolutional actor-critic: two conv layers, one dense layer, a Gaussian
//! mean head, a value head and state-independent log standard deviations.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linalg::{col2im, gemm, im2col, ConvGeom, Real, Strides};
use super::PolicyOutput;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const HEAD_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub in_channels: usize,
    pub in_size: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub conv1_stride: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub conv2_stride: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl Default for NetShape {
    /// 4x84x84 -> 16@8x8/4 -> 32@4x4/2 -> 256 -> (2 means, 1 value).
    fn default() -> Self {
        Self {
            in_channels: 4,
            in_size: 84,
            conv1_filters: 16,
            conv1_kernel: 8,
            conv1_stride: 4,
            conv2_filters: 32,
            conv2_kernel: 4,
            conv2_stride: 2,
            hidden: 256,
            actions: 2,
        }
    }
}

impl NetShape {
    /// 4x8x8 -> 3@4x4/2 -> 4@2x2/1 -> 6, for gradient checks.
    pub fn miniature() -> Self {
        Self {
            in_channels: 4,
            in_size: 8,
            conv1_filters: 3,
            conv1_kernel: 4,
            conv1_stride: 2,
            conv2_filters: 4,
            conv2_kernel: 2,
            conv2_stride: 1,
            hidden: 6,
            actions: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.in_channels,
            self.in_size,
            self.conv1_filters,
            self.conv1_kernel,
            self.conv1_stride,
            self.conv2_filters,
            self.conv2_kernel,
            self.conv2_stride,
            self.hidden,
            self.actions,
        ];
        if fields.contains(&0) {
            return Err(Error::Shape("network dimensions must be positive".into()));
        }
        if self.actions != 2 {
            return Err(Error::Shape(
                "the action space has exactly 2 channels".into(),
            ));
        }
        let fits = |size: usize, k: usize, s: usize| size >= k && (size - k).is_multiple_of(s);
        if !fits(self.in_size, self.conv1_kernel, self.conv1_stride) {
            return Err(Error::Shape("conv1 does not tile the input".into()));
        }
        let o1 = self.conv1().out_size();
        if !fits(o1, self.conv2_kernel, self.conv2_stride) {
            return Err(Error::Shape("conv2 does not tile the conv1 output".into()));
        }
        Ok(())
    }

    pub fn conv1(&self) -> ConvGeom {
        ConvGeom {
            channels: self.in_channels,
            size: self.in_size,
            kernel: self.conv1_kernel,
            stride: self.conv1_stride,
        }
    }

    pub fn conv2(&self) -> ConvGeom {
        ConvGeom {
            channels: self.conv1_filters,
            size: self.conv1().out_size(),
            kernel: self.conv2_kernel,
            stride: self.conv2_stride,
        }
    }

    pub fn input_len(&self) -> usize {
        self.conv1().input_len()
    }

    pub fn flat_len(&self) -> usize {
        self.conv2_filters * self.conv2().positions()
    }

    pub fn layout(&self) -> Layout {
        let c1 = self.conv1();
        let c2 = self.conv2();
        let sizes = [
            self.conv1_filters * c1.patch_len(),
            self.conv1_filters,
            self.conv2_filters * c2.patch_len(),
            self.conv2_filters,
            self.hidden * self.flat_len(),
            self.hidden,
            self.actions * self.hidden,
            self.actions,
            self.hidden,
            1,
            self.actions,
        ];
        let mut r = [
            0..0,
            0..0,
            0..0,
            0..0,
            0..0,
            0..0,
            0..0,
            0..0,
            0..0,
            0..0,
            0..0,
        ];
        let mut at = 0;
        for (slot, n) in r.iter_mut().zip(sizes) {
            *slot = at..at + n;
            at += n;
        }
        let [conv1_w, conv1_b, conv2_w, conv2_b, dense_w, dense_b, mean_w, mean_b, value_w, value_b, log_std] =
            r;
        Layout {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            dense_w,
            dense_b,
            mean_w,
            mean_b,
            value_w,
            value_b,
            log_std,
            total: at,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

/// Offsets of each tensor in the flat parameter vector (checkpoint order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub conv1_w: Range<usize>,
    pub conv1_b: Range<usize>,
    pub conv2_w: Range<usize>,
    pub conv2_b: Range<usize>,
    pub dense_w: Range<usize>,
    pub dense_b: Range<usize>,
    pub mean_w: Range<usize>,
    pub mean_b: Range<usize>,
    pub value_w: Range<usize>,
    pub value_b: Range<usize>,
    pub log_std: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn named(&self) -> [(&'static str, Range<usize>); 11] {
        [
            ("conv1.w", self.conv1_w.clone()),
            ("conv1.b", self.conv1_b.clone()),
            ("conv2.w", self.conv2_w.clone()),
            ("conv2.b", self.conv2_b.clone()),
            ("dense.w", self.dense_w.clone()),
            ("dense.b", self.dense_b.clone()),
            ("mean.w", self.mean_w.clone()),
            ("mean.b", self.mean_b.clone()),
            ("value.w", self.value_w.clone()),
            ("value.b", self.value_b.clone()),
            ("log_std", self.log_std.clone()),
        ]
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<R> {
    batch: usize,
    generation: u64,
    a1: Vec<R>,
    a2: Vec<R>,
    h: Vec<R>,
}

impl<R> ForwardCache<R> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Upstream gradients at the network outputs for one batch.
#[derive(Debug, Clone, Default)]
pub struct HeadGradients {
    /// `[batch, actions]`
    pub mean: Vec<f64>,
    /// `[batch]`
    pub value: Vec<f64>,
    /// Gradient with respect to the raw (unclamped) log-std parameters.
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<R: Real> {
    shape: NetShape,
    layout: Layout,
    params: Vec<R>,
    generation: u64,
}

/// Rows of `m` orthonormalised with modified Gram-Schmidt; when there are
/// more rows than columns the columns are made orthonormal instead.
fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (r, c) = if rows <= cols {
        (rows, cols)
    } else {
        (cols, rows)
    };
    let mut m: Vec<f64> = (0..r * c).map(|_| StandardNormal.sample(rng)).collect();
    for i in 0..r {
        for j in 0..i {
            let dot: f64 = (0..c).map(|t| m[i * c + t] * m[j * c + t]).sum();
            for t in 0..c {
                m[i * c + t] -= dot * m[j * c + t];
            }
        }
        let norm = (0..c).map(|t| m[i * c + t].powi(2)).sum::<f64>().sqrt();
        for t in 0..c {
            m[i * c + t] /= norm;
        }
    }
    if rows <= cols {
        m.iter().map(|v| v * gain).collect()
    } else {
        let mut out = vec![0.0; rows * cols];
        for i in 0..r {
            for t in 0..c {
                out[t * cols + i] = m[i * c + t] * gain;
            }
        }
        out
    }
}

impl<R: Real> PolicyNet<R> {
    /// Scaled-orthogonal weights (gain sqrt(2) hidden, 0.01 heads), zero
    /// biases, zero log-std. Deterministic in `seed`.
    pub fn new(shape: NetShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let layout = shape.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![R::zero(); layout.total];
        let g = 2f64.sqrt();
        let mut fill = |range: &Range<usize>, rows: usize, gain: f64, rng: &mut ChaCha8Rng| {
            let cols = range.len() / rows;
            for (p, v) in params[range.clone()]
                .iter_mut()
                .zip(orthogonal(rows, cols, gain, rng))
            {
                *p = R::of(v);
            }
        };
        fill(&layout.conv1_w, shape.conv1_filters, g, &mut rng);
        fill(&layout.conv2_w, shape.conv2_filters, g, &mut rng);
        fill(&layout.dense_w, shape.hidden, g, &mut rng);
        fill(&layout.mean_w, shape.actions, HEAD_GAIN, &mut rng);
        fill(&layout.value_w, 1, HEAD_GAIN, &mut rng);
        Ok(Self {
            shape,
            layout,
            params,
            generation: 0,
        })
    }

    pub fn from_params(shape: NetShape, params: Vec<R>) -> Result<Self> {
        shape.validate()?;
        let layout = shape.layout();
        if params.len() != layout.total {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self {
            shape,
            layout,
            params,
            generation: 0,
        })
    }

    /// Same network in another precision.
    pub fn cast<S: Real>(&self) -> PolicyNet<S> {
        PolicyNet {
            shape: self.shape,
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| S::of(p.as_f64())).collect(),
            generation: 0,
        }
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[R] {
        &self.params
    }

    /// Mutable parameters. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [R] {
        self.generation += 1;
        &mut self.params
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Zeroes both output heads (weights and biases).
    pub fn zero_heads(&mut self) {
        let l = self.layout.clone();
        let p = self.params_mut();
        for r in [l.mean_w, l.mean_b, l.value_w, l.value_b] {
            p[r].fill(R::zero());
        }
    }

    pub fn log_std(&self) -> Vec<f64> {
        self.params[self.layout.log_std.clone()]
            .iter()
            .map(|v| v.as_f64().clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect()
    }

    /// Forward pass over `batch` observations laid out `[batch, C, H, W]`.
    pub fn forward_batch(
        &self,
        obs: &[R],
        batch: usize,
    ) -> Result<(Vec<PolicyOutput>, ForwardCache<R>)> {
        let sh = &self.shape;
        let (g1, g2) = (sh.conv1(), sh.conv2());
        let in_len = sh.input_len();
        if obs.len() != batch * in_len {
            return Err(Error::Shape(format!(
                "observation batch has {} values, expected {}",
                obs.len(),
                batch * in_len
            )));
        }
        let l = &self.layout;
        let p = &self.params;
        let (f1, p1) = (sh.conv1_filters, g1.positions());
        let (f2, p2) = (sh.conv2_filters, g2.positions());
        let flat = sh.flat_len();
        let mut a1 = vec![R::zero(); batch * f1 * p1];
        let mut a2 = vec![R::zero(); batch * flat];
        let mut cols1 = vec![R::zero(); g1.patch_len() * p1];
        let mut cols2 = vec![R::zero(); g2.patch_len() * p2];
        for b in 0..batch {
            im2col(&g1, &obs[b * in_len..(b + 1) * in_len], &mut cols1);
            let out1 = &mut a1[b * f1 * p1..(b + 1) * f1 * p1];
            conv_forward(
                &p[l.conv1_w.clone()],
                &p[l.conv1_b.clone()],
                &cols1,
                f1,
                g1.patch_len(),
                p1,
                out1,
            );
            im2col(&g2, out1, &mut cols2);
            let out2 = &mut a2[b * flat..(b + 1) * flat];
            conv_forward(
                &p[l.conv2_w.clone()],
                &p[l.conv2_b.clone()],
                &cols2,
                f2,
                g2.patch_len(),
                p2,
                out2,
            );
        }
        let hid = sh.hidden;
        let mut h = vec![R::zero(); batch * hid];
        dense_forward(
            &a2,
            batch,
            flat,
            &p[l.dense_w.clone()],
            &p[l.dense_b.clone()],
            hid,
            &mut h,
        );
        relu(&mut h);
        let na = sh.actions;
        let mut mean = vec![R::zero(); batch * na];
        dense_forward(
            &h,
            batch,
            hid,
            &p[l.mean_w.clone()],
            &p[l.mean_b.clone()],
            na,
            &mut mean,
        );
        let mut value = vec![R::zero(); batch];
        dense_forward(
            &h,
            batch,
            hid,
            &p[l.value_w.clone()],
            &p[l.value_b.clone()],
            1,
            &mut value,
        );
        let log_std = self.log_std();
        let mut outs = Vec::with_capacity(batch);
        for b in 0..batch {
            let m = [mean[b * na].as_f64(), mean[b * na + 1].as_f64()];
            let v = value[b].as_f64();
            if !m.iter().all(|x| x.is_finite()) || !v.is_finite() {
                return Err(Error::NumericOverflow("policy forward pass"));
            }
            outs.push(PolicyOutput {
                mean: m,
                log_std: [log_std[0], log_std[1]],
                value: v,
            });
        }
        let cache = ForwardCache {
            batch,
            generation: self.generation,
            a1,
            a2,
            h,
        };
        Ok((outs, cache))
    }

    /// Parameter gradients for the batch behind `cache`, given gradients at
    /// the outputs. `obs` must be the batch the cache was built from.
    pub fn backward(
        &self,
        obs: &[R],
        cache: &ForwardCache<R>,
        up: &HeadGradients,
    ) -> Result<Vec<R>> {
        if cache.generation != self.generation {
            return Err(Error::DetachedGraph(
                "parameters changed since the forward pass",
            ));
        }
        let sh = &self.shape;
        let batch = cache.batch;
        let na = sh.actions;
        if up.mean.len() != batch * na || up.value.len() != batch || up.log_std.len() != na {
            return Err(Error::Shape(
                "head gradient sizes do not match the batch".into(),
            ));
        }
        if obs.len() != batch * sh.input_len() {
            return Err(Error::Shape(
                "observation batch does not match the cache".into(),
            ));
        }
        let l = &self.layout;
        let p = &self.params;
        let mut grad = vec![R::zero(); l.total];
        let hid = sh.hidden;
        let d_mean: Vec<R> = up.mean.iter().map(|v| R::of(*v)).collect();
        let d_value: Vec<R> = up.value.iter().map(|v| R::of(*v)).collect();

        // Heads.
        let mut dh = vec![R::zero(); batch * hid];
        dense_backward(
            &cache.h,
            batch,
            hid,
            &p[l.mean_w.clone()],
            na,
            &d_mean,
            &mut grad,
            l.mean_w.clone(),
            l.mean_b.clone(),
            Some(&mut dh),
            R::zero(),
        );
        dense_backward(
            &cache.h,
            batch,
            hid,
            &p[l.value_w.clone()],
            1,
            &d_value,
            &mut grad,
            l.value_w.clone(),
            l.value_b.clone(),
            Some(&mut dh),
            R::one(),
        );
        relu_mask(&cache.h, &mut dh);

        // Dense.
        let flat = sh.flat_len();
        let mut da2 = vec![R::zero(); batch * flat];
        dense_backward(
            &cache.a2,
            batch,
            flat,
            &p[l.dense_w.clone()],
            hid,
            &dh,
            &mut grad,
            l.dense_w.clone(),
            l.dense_b.clone(),
            Some(&mut da2),
            R::zero(),
        );
        relu_mask(&cache.a2, &mut da2);

        // Convolutions, one sample at a time.
        let (g1, g2) = (sh.conv1(), sh.conv2());
        let (f1, p1) = (sh.conv1_filters, g1.positions());
        let (f2, p2) = (sh.conv2_filters, g2.positions());
        let in_len = sh.input_len();
        let mut cols1 = vec![R::zero(); g1.patch_len() * p1];
        let mut cols2 = vec![R::zero(); g2.patch_len() * p2];
        let mut dcols2 = vec![R::zero(); g2.patch_len() * p2];
        let mut da1 = vec![R::zero(); f1 * p1];
        for b in 0..batch {
            let a1 = &cache.a1[b * f1 * p1..(b + 1) * f1 * p1];
            im2col(&g2, a1, &mut cols2);
            let dout2 = &da2[b * flat..(b + 1) * flat];
            conv_backward_weights(
                dout2,
                &cols2,
                f2,
                g2.patch_len(),
                p2,
                &mut grad,
                l.conv2_w.clone(),
                l.conv2_b.clone(),
            );
            // dcols = W^T dout
            gemm(
                g2.patch_len(),
                f2,
                p2,
                &p[l.conv2_w.clone()],
                Strides::transposed(g2.patch_len()),
                dout2,
                Strides::row_major(p2),
                R::zero(),
                &mut dcols2,
                Strides::row_major(p2),
            );
            da1.fill(R::zero());
            col2im(&g2, &dcols2, &mut da1);
            relu_mask(a1, &mut da1);
            im2col(&g1, &obs[b * in_len..(b + 1) * in_len], &mut cols1);
            conv_backward_weights(
                &da1,
                &cols1,
                f1,
                g1.patch_len(),
                p1,
                &mut grad,
                l.conv1_w.clone(),
                l.conv1_b.clone(),
            );
        }

        // The clamp passes gradient only inside its range.
        for (i, idx) in l.log_std.clone().enumerate() {
            let raw = p[idx].as_f64();
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                grad[idx] = R::of(up.log_std[i]);
            }
        }
        Ok(grad)
    }
}

fn relu<R: Real>(x: &mut [R]) {
    for v in x {
        if !(*v > R::zero()) {
            *v = R::zero();
        }
    }
}

fn relu_mask<R: Real>(activation: &[R], grad: &mut [R]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if !(*a > R::zero()) {
            *g = R::zero();
        }
    }
}

// out[F, P] = relu(W[F, K] cols[K, P] + b)
fn conv_forward<R: Real>(
    w: &[R],
    b: &[R],
    cols: &[R],
    f: usize,
    k: usize,
    p: usize,
    out: &mut [R],
) {
    for (row, bias) in out.chunks_exact_mut(p).zip(b) {
        row.fill(*bias);
    }
    gemm(
        f,
        k,
        p,
        w,
        Strides::row_major(k),
        cols,
        Strides::row_major(p),
        R::one(),
        out,
        Strides::row_major(p),
    );
    relu(out);
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_weights<R: Real>(
    dout: &[R],
    cols: &[R],
    f: usize,
    k: usize,
    p: usize,
    grad: &mut [R],
    w: Range<usize>,
    b: Range<usize>,
) {
    gemm(
        f,
        p,
        k,
        dout,
        Strides::row_major(p),
        cols,
        Strides::transposed(p),
        R::one(),
        &mut grad[w],
        Strides::row_major(k),
    );
    for (gb, row) in grad[b].iter_mut().zip(dout.chunks_exact(p)) {
        *gb = row.iter().fold(*gb, |acc, v| acc + *v);
    }
}

// y[B, O] = x[B, I] W[O, I]^T + b
#[allow(clippy::too_many_arguments)]
fn dense_forward<R: Real>(
    x: &[R],
    batch: usize,
    inp: usize,
    w: &[R],
    b: &[R],
    out: usize,
    y: &mut [R],
) {
    for row in y.chunks_exact_mut(out) {
        row.copy_from_slice(b);
    }
    gemm(
        batch,
        inp,
        out,
        x,
        Strides::row_major(inp),
        w,
        Strides::transposed(inp),
        R::one(),
        y,
        Strides::row_major(out),
    );
}

#[allow(clippy::too_many_arguments)]
fn dense_backward<R: Real>(
    x: &[R],
    batch: usize,
    inp: usize,
    w: &[R],
    out: usize,
    dy: &[R],
    grad: &mut [R],
    w_range: Range<usize>,
    b_range: Range<usize>,
    dx: Option<&mut [R]>,
    dx_beta: R,
) {
    // dW[O, I] += dy^T x
    gemm(
        out,
        batch,
        inp,
        dy,
        Strides::transposed(out),
        x,
        Strides::row_major(inp),
        R::one(),
        &mut grad[w_range],
        Strides::row_major(inp),
    );
    let gb = &mut grad[b_range];
    for row in dy.chunks_exact(out) {
        for (g, v) in gb.iter_mut().zip(row) {
            *g = *g + *v;
        }
    }
    if let Some(dx) = dx {
        // dx[B, I] = dy W
        gemm(
            batch,
            out,
            inp,
            dy,
            Strides::row_major(out),
            w,
            Strides::row_major(inp),
            dx_beta,
            dx,
            Strides::row_major(inp),
        );
    }
}
