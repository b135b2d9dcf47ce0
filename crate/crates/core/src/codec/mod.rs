//! Channel compression by circular convolution with a seasonal key, the
//! matching circular-correlation decoder, and the reconstruction head.

pub mod head;

use serde::{Deserialize, Serialize};

pub use head::{reconstruct, HeadCache, HeadGrad, ReconstructionHead};

use crate::error::{Error, Result};
use crate::keys::CircularKey;
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::series::NormStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One length-`L` convolution per channel with the tiled key.
    Dense,
    /// Independent length-`tau` convolutions per full segment; the tail
    /// shorter than `tau` is dropped.
    #[default]
    Sparse,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "sparse" => Ok(Self::Sparse),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Dense => "dense",
            Mode::Sparse => "sparse",
        })
    }
}

/// Length of the compressed channel for a window of `len` samples.
pub fn compressed_len(len: usize, tau: usize, mode: Mode) -> usize {
    match mode {
        Mode::Dense => len,
        Mode::Sparse => (len / tau) * tau,
    }
}

/// Circular convolution `y_t = sum_z x_z k_{(t - z) mod n}`.
pub fn encode_channel<T: Scalar>(x: &[T], key: &[T]) -> Result<Vec<T>> {
    if x.len() != key.len() {
        return Err(Error::arg(format!(
            "encode length mismatch: signal {} vs key {}",
            x.len(),
            key.len()
        )));
    }
    let mut y = vec![T::zero(); x.len()];
    convolve_into(x, key, &mut y);
    Ok(y)
}

/// Accumulates `x (*) key` into `out`. All three slices share a length.
fn convolve_into<T: Scalar>(x: &[T], key: &[T], out: &mut [T]) {
    let n = x.len();
    for (t, o) in out.iter_mut().enumerate() {
        let mut acc = T::zero();
        // z <= t: key index t - z; z > t: key index n + t - z
        for z in 0..=t {
            acc += x[z] * key[t - z];
        }
        for z in t + 1..n {
            acc += x[z] * key[n + t - z];
        }
        *o += acc;
    }
}

/// Accumulates the circular correlation `sum_z y_z k_{(z - t) mod n}`.
fn correlate_into<T: Scalar>(y: &[T], key: &[T], out: &mut [T]) {
    let n = y.len();
    for (t, o) in out.iter_mut().enumerate() {
        let mut acc = T::zero();
        for z in t..n {
            acc += y[z] * key[z - t];
        }
        for z in 0..t {
            acc += y[z] * key[n + z - t];
        }
        *o += acc;
    }
}

/// The single-channel compressed representation of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CompressedSeries<T> {
    pub y: Vec<T>,
    pub mode: Mode,
    pub tau: usize,
    pub norm: Option<NormStats<T>>,
}

const PAYLOAD_MAGIC: &[u8; 4] = b"PCDY";
const PAYLOAD_VERSION: u8 = 1;

impl<T: Scalar> CompressedSeries<T> {
    /// Binary edge-to-cloud payload: a 32-byte header followed by the
    /// samples as little-endian `f64`.
    ///
    /// Header: magic `PCDY`, version `u8`, mode `u8` (0 dense, 1 sparse),
    /// norm flags `u8` (bit 0 present, bit 1 floored), reserved `u8`,
    /// `tau: u32`, `len: u32`, `mean: f64`, `std: f64`.
    pub fn to_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.y.len());
        out.extend_from_slice(PAYLOAD_MAGIC);
        out.push(PAYLOAD_VERSION);
        out.push(match self.mode {
            Mode::Dense => 0,
            Mode::Sparse => 1,
        });
        let (flags, mean, std) = match &self.norm {
            Some(s) => (1 | (u8::from(s.floored) << 1), s.mean.as_f64(), s.std.as_f64()),
            None => (0, 0.0, 0.0),
        };
        out.push(flags);
        out.push(0);
        out.extend_from_slice(&(self.tau as u32).to_le_bytes());
        out.extend_from_slice(&(self.y.len() as u32).to_le_bytes());
        out.extend_from_slice(&mean.to_le_bytes());
        out.extend_from_slice(&std.to_le_bytes());
        for v in &self.y {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        out
    }

    pub fn from_payload(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Data(format!("malformed payload: {m}"));
        if bytes.len() < 32 || &bytes[..4] != PAYLOAD_MAGIC {
            return Err(bad("missing header"));
        }
        if bytes[4] != PAYLOAD_VERSION {
            return Err(bad("unsupported version"));
        }
        let mode = match bytes[5] {
            0 => Mode::Dense,
            1 => Mode::Sparse,
            _ => return Err(bad("unknown mode")),
        };
        let flags = bytes[6];
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
        let tau = u32_at(8);
        let len = u32_at(12);
        if bytes.len() != 32 + 8 * len {
            return Err(bad("length does not match header"));
        }
        let norm = (flags & 1 == 1).then(|| NormStats {
            mean: T::lit(f64_at(16)),
            std: T::lit(f64_at(24)),
            floored: flags & 2 == 2,
            applied_to: Default::default(),
        });
        let y = (0..len).map(|i| T::lit(f64_at(32 + 8 * i))).collect();
        Ok(Self { y, mode, tau, norm })
    }
}

fn check_keys<T: Scalar>(channels: usize, keys: &[CircularKey<T>]) -> Result<usize> {
    let tau = keys.first().ok_or_else(|| Error::arg("no key supplied"))?.tau();
    if keys.len() != 1 && keys.len() != channels {
        return Err(Error::arg(format!(
            "expected 1 shared key or {channels} per-channel keys, got {}",
            keys.len()
        )));
    }
    if keys.iter().any(|k| k.tau() != tau) {
        return Err(Error::arg("per-channel keys must share tau"));
    }
    Ok(tau)
}

/// Sum over channels of each channel convolved with the tiled key.
pub fn compress_dense<T: Scalar>(x: &Matrix<T>, key: &CircularKey<T>) -> Result<CompressedSeries<T>> {
    compress_with_keys(x, std::slice::from_ref(key), Mode::Dense)
}

/// Segment-wise compression: every full length-`tau` segment of every
/// channel is convolved with the base key; segments stay in time order and
/// channels are summed.
pub fn compress_sparse<T: Scalar>(x: &Matrix<T>, key: &CircularKey<T>) -> Result<CompressedSeries<T>> {
    compress_with_keys(x, std::slice::from_ref(key), Mode::Sparse)
}

pub fn compress<T: Scalar>(x: &Matrix<T>, key: &CircularKey<T>, mode: Mode) -> Result<CompressedSeries<T>> {
    compress_with_keys(x, std::slice::from_ref(key), mode)
}

/// Compression with one shared key or one key per channel.
pub fn compress_with_keys<T: Scalar>(
    x: &Matrix<T>,
    keys: &[CircularKey<T>],
    mode: Mode,
) -> Result<CompressedSeries<T>> {
    let (len, channels) = x.shape();
    let tau = check_keys(channels, keys)?;
    if tau > len {
        return Err(Error::arg(format!("tau = {tau} exceeds window length {len}")));
    }
    let out_len = compressed_len(len, tau, mode);
    let mut y = vec![T::zero(); out_len];
    let tiled: Vec<Vec<T>> = match mode {
        Mode::Dense => keys.iter().map(|k| k.tiled(len)).collect(),
        Mode::Sparse => Vec::new(),
    };
    // channel order is fixed so the sum is bitwise reproducible
    for c in 0..channels {
        let signal = x.column(c);
        let ki = if keys.len() == 1 { 0 } else { c };
        match mode {
            Mode::Dense => convolve_into(&signal, &tiled[ki], &mut y),
            Mode::Sparse => {
                for (seg, out) in signal[..out_len].chunks_exact(tau).zip(y.chunks_exact_mut(tau)) {
                    convolve_into(seg, &keys[ki].base, out);
                }
            }
        }
    }
    Ok(CompressedSeries {
        y,
        mode,
        tau,
        norm: None,
    })
}

/// Circular-correlation decoder. Sparse mode decodes each length-`tau`
/// block with the base key; dense mode correlates with the key tiled to
/// the length of `y_hat`.
pub fn decode<T: Scalar>(y_hat: &[T], key: &CircularKey<T>, mode: Mode) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); y_hat.len()];
    apply_decode(y_hat, key, mode, &mut out, false)?;
    Ok(out)
}

/// Adjoint of [`decode`] (a convolution), used for back-propagation.
pub fn decode_adjoint<T: Scalar>(g: &[T], key: &CircularKey<T>, mode: Mode) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); g.len()];
    apply_decode(g, key, mode, &mut out, true)?;
    Ok(out)
}

fn apply_decode<T: Scalar>(v: &[T], key: &CircularKey<T>, mode: Mode, out: &mut [T], adjoint: bool) -> Result<()> {
    let tau = key.tau();
    let op = if adjoint { convolve_into::<T> } else { correlate_into::<T> };
    match mode {
        Mode::Sparse => {
            if v.len() % tau != 0 {
                return Err(Error::Alignment {
                    horizon: v.len(),
                    tau,
                });
            }
            for (block, o) in v.chunks_exact(tau).zip(out.chunks_exact_mut(tau)) {
                op(block, &key.base, o);
            }
        }
        Mode::Dense => op(v, &key.tiled(v.len()), out),
    }
    Ok(())
}

/// Energy of the key as the decoder sees it: the base key's sum of squares
/// in sparse mode, the tiled key's over `len` samples in dense mode.
pub fn decode_gain<T: Scalar>(key: &CircularKey<T>, mode: Mode, len: usize) -> T {
    match mode {
        Mode::Sparse => key.sum_sq,
        Mode::Dense => {
            let k = key.tiled(len);
            crate::scalar::dot(&k, &k)
        }
    }
}

/// `decode(compress(X)) - sum_sq * sum_c X^c`: the cross-shift interference
/// left after decoding. Zero for orthogonal keys in sparse mode.
pub fn interference_estimate<T: Scalar>(x: &Matrix<T>, key: &CircularKey<T>, mode: Mode) -> Result<Vec<T>> {
    let compressed = compress(x, key, mode)?;
    let decoded = decode(&compressed.y, key, mode)?;
    Ok(decoded
        .iter()
        .enumerate()
        .map(|(t, &d)| d - key.sum_sq * x.row(t).iter().copied().sum::<T>())
        .collect())
}
