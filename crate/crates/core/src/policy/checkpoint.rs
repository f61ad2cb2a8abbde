//! Versioned binary parameter files.
//!
//! Layout, all little-endian:
//!
//! | bytes | content                                                   |
//! |-------|-----------------------------------------------------------|
//! | 8     | magic `GRIPCKPT`                                          |
//! | 4     | u32 format version (1)                                    |
//! | 40    | 10 x u32 shape: in_channels, in_size, conv1 filters,      |
//! |       | kernel, stride, conv2 filters, kernel, stride, hidden,    |
//! |       | actions                                                   |
//! | 8     | u64 parameter count                                       |
//! | 4 n   | f32 parameters in the order conv1.w, conv1.b, conv2.w,    |
//! |       | conv2.b, dense.w, dense.b, mean.w, mean.b, value.w,       |
//! |       | value.b, log_std                                          |
//!
//! Weights are row-major: conv `[out, in, ky, kx]`, dense `[out, in]`.

use std::path::Path;

use super::linalg::Real;
use super::network::{NetShape, PolicyNet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GRIPCKPT";
pub const VERSION: u32 = 1;

fn shape_words(s: &NetShape) -> [u32; 10] {
    [
        s.in_channels,
        s.in_size,
        s.conv1_filters,
        s.conv1_kernel,
        s.conv1_stride,
        s.conv2_filters,
        s.conv2_kernel,
        s.conv2_stride,
        s.hidden,
        s.actions,
    ]
    .map(|v| v as u32)
}

pub fn encode<R: Real>(net: &PolicyNet<R>) -> Vec<u8> {
    let params = net.params();
    let mut out = Vec::with_capacity(60 + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for w in shape_words(net.shape()) {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode<R: Real>(bytes: &[u8]) -> Result<PolicyNet<R>> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(at..at + n).ok_or_else(|| bad("truncated file"))?;
        at += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(bad("bad magic, not a policy checkpoint"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut w = [0usize; 10];
    for v in &mut w {
        *v = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    }
    let shape = NetShape {
        in_channels: w[0],
        in_size: w[1],
        conv1_filters: w[2],
        conv1_kernel: w[3],
        conv1_stride: w[4],
        conv2_filters: w[5],
        conv2_kernel: w[6],
        conv2_stride: w[7],
        hidden: w[8],
        actions: w[9],
    };
    shape.validate()?;
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    if count != shape.param_count() {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match shape ({})",
            shape.param_count()
        )));
    }
    let data = take(4 * count)?;
    let params = data
        .chunks_exact(4)
        .map(|c| R::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    if at != bytes.len() {
        return Err(bad("trailing bytes after parameters"));
    }
    PolicyNet::from_params(shape, params)
}

pub fn save<R: Real>(net: &PolicyNet<R>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load<R: Real>(path: impl AsRef<Path>) -> Result<PolicyNet<R>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
