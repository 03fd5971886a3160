//! Delay-Doppler grid dimensions, steering vectors, the fractional delay and
//! Doppler operators, and the parametric channel matrix built from them.
//!
//! Flat indices follow the kron orderings of the operator definitions:
//! the delay diagonal `b_M ⊗ b_N` is indexed by `p = m·N + n`, the Doppler
//! diagonal `v_N ⊗ v_M` by `l = n·M + m`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{cis, C64, TAU};

/// Grid size and channel spread bounds, all in bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemDims {
    /// Delay bins `M`.
    #[serde(rename = "M")]
    pub delay_bins: usize,
    /// Doppler bins `N`.
    #[serde(rename = "N")]
    pub doppler_bins: usize,
    /// Maximum delay spread `ell_max`.
    pub ell_max: f64,
    /// Maximum Doppler spread `kappa_max`.
    pub kappa_max: f64,
}

impl SystemDims {
    pub fn new(delay_bins: usize, doppler_bins: usize, ell_max: f64, kappa_max: f64) -> Result<Self> {
        let dims = Self {
            delay_bins,
            doppler_bins,
            ell_max,
            kappa_max,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delay_bins < 2 {
            return Err(invalid("M >= 2"));
        }
        if self.doppler_bins < 2 {
            return Err(invalid("N >= 2"));
        }
        if !(self.ell_max >= 1.0 && self.ell_max < self.delay_bins as f64) {
            return Err(invalid("1 <= ell_max < M"));
        }
        if !(self.kappa_max > 0.0 && self.kappa_max < self.doppler_bins as f64 / 2.0) {
            return Err(invalid("0 < kappa_max < N/2"));
        }
        Ok(())
    }

    /// `M·N`, the frame length in samples.
    #[inline]
    pub fn frame_len(&self) -> usize {
        self.delay_bins * self.doppler_bins
    }
}

/// One propagation path: complex gain and fractional delay/Doppler in bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PathRecord", into = "PathRecord")]
pub struct DDPath {
    pub gain: C64,
    pub delay: f64,
    pub doppler: f64,
}

#[derive(Serialize, Deserialize)]
struct PathRecord {
    re: f64,
    im: f64,
    delay: f64,
    doppler: f64,
}

impl From<PathRecord> for DDPath {
    fn from(r: PathRecord) -> Self {
        DDPath {
            gain: C64::new(r.re, r.im),
            delay: r.delay,
            doppler: r.doppler,
        }
    }
}

impl From<DDPath> for PathRecord {
    fn from(p: DDPath) -> Self {
        PathRecord {
            re: p.gain.re,
            im: p.gain.im,
            delay: p.delay,
            doppler: p.doppler,
        }
    }
}

impl DDPath {
    pub fn new(gain: C64, delay: f64, doppler: f64) -> Self {
        Self { gain, delay, doppler }
    }

    pub fn validate(&self, dims: &SystemDims) -> Result<()> {
        if !(self.gain.re.is_finite() && self.gain.im.is_finite()) {
            return Err(invalid("path gain must be finite"));
        }
        if !(self.delay >= 0.0 && self.delay <= dims.ell_max - 1.0) {
            return Err(invalid(format!("path delay {} outside [0, ell_max-1]", self.delay)));
        }
        let half = dims.kappa_max / 2.0;
        if !(self.doppler >= -half && self.doppler <= half) {
            return Err(invalid(format!(
                "path Doppler {} outside [-kappa_max/2, kappa_max/2]",
                self.doppler
            )));
        }
        Ok(())
    }
}

/// `b_M(ell)`: entry `m` is `exp(-j 2π m ell / M)`.
pub fn steering_delay(ell: f64, len: usize) -> Vec<C64> {
    (0..len)
        .map(|m| cis(-TAU * m as f64 * ell / len as f64))
        .collect()
}

/// `v_N(kappa)`: entry `n` is `exp(+j 2π n kappa / N)`.
pub fn steering_doppler(kappa: f64, len: usize) -> Vec<C64> {
    (0..len)
        .map(|n| cis(TAU * n as f64 * kappa / len as f64))
        .collect()
}

/// `b_N(ell)`: entry `n < N` is `exp(-j 2π n ell / (MN))`.
pub fn steering_delay_fine(ell: f64, dims: &SystemDims) -> Vec<C64> {
    let mn = dims.frame_len() as f64;
    (0..dims.doppler_bins)
        .map(|n| cis(-TAU * n as f64 * ell / mn))
        .collect()
}

/// `v_M(kappa)`: entry `m < M` is `exp(+j 2π m kappa / (MN))`.
pub fn steering_doppler_fine(kappa: f64, dims: &SystemDims) -> Vec<C64> {
    let mn = dims.frame_len() as f64;
    (0..dims.delay_bins)
        .map(|m| cis(TAU * m as f64 * kappa / mn))
        .collect()
}

pub fn kron(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// Diagonal of `B^ell = diag(b_M(ell) ⊗ b_N(ell))`.
pub fn delay_operator_diag(ell: f64, dims: &SystemDims) -> Vec<C64> {
    kron(
        &steering_delay(ell, dims.delay_bins),
        &steering_delay_fine(ell, dims),
    )
}

/// Diagonal of `Δ^kappa = diag(v_N(kappa) ⊗ v_M(kappa))`.
pub fn doppler_operator(kappa: f64, dims: &SystemDims) -> Vec<C64> {
    kron(
        &steering_doppler(kappa, dims.doppler_bins),
        &steering_doppler_fine(kappa, dims),
    )
}

/// First column of the circulant `Π^ell = F^H B^ell F` (unitary DFT `F`):
/// `c[d] = (1/MN) Σ_p B[p] exp(j 2π p d / MN)`.
pub fn delay_kernel(ell: f64, dims: &SystemDims) -> Vec<C64> {
    let len = dims.frame_len();
    let diag = delay_operator_diag(ell, dims);
    let twiddle: Vec<C64> = (0..len).map(|k| cis(TAU * k as f64 / len as f64)).collect();
    let scale = 1.0 / len as f64;
    (0..len)
        .map(|d| {
            let mut acc = C64::new(0.0, 0.0);
            for (p, &b) in diag.iter().enumerate() {
                acc += b * twiddle[(p * d) % len];
            }
            acc * scale
        })
        .collect()
}

/// Dense `Π^ell` (MN×MN).
pub fn delay_operator(ell: f64, dims: &SystemDims) -> Mat<C64> {
    let len = dims.frame_len();
    let c = delay_kernel(ell, dims);
    Mat::from_fn(len, len, |a, b| c[(a + len - b) % len])
}

/// `H = Σ_i h_i Π^{ell_i} Δ^{kappa_i}`; an empty path list gives the zero matrix.
pub fn channel_matrix(paths: &[DDPath], dims: &SystemDims) -> Mat<C64> {
    let len = dims.frame_len();
    let mut h = Mat::<C64>::zeros(len, len);
    for path in paths {
        let c = delay_kernel(path.delay, dims);
        let dop = doppler_operator(path.doppler, dims);
        for b in 0..len {
            let col_scale = path.gain * dop[b];
            for a in 0..len {
                h[(a, b)] += col_scale * c[(a + len - b) % len];
            }
        }
    }
    h
}

/// `Σ_{k<len} exp(j θ k)`, stable near θ ≡ 0 (mod 2π).
fn geometric_sum(theta: f64, len: usize) -> C64 {
    let half = 0.5 * theta;
    let den = half.sin();
    if den.abs() < 1e-9 {
        // θ within ~1e-9 of a multiple of 2π: sum directly
        return (0..len).map(|k| cis(theta * k as f64)).sum();
    }
    cis(half * (len as f64 - 1.0)) * ((half * len as f64).sin() / den)
}

/// `‖Σ_i h_i Π^{ell_i} Δ^{kappa_i}‖_F²` without forming the MN×MN matrix.
///
/// Uses `tr((Π_i Δ_i)^H Π_j Δ_j) = (1/MN)·(Σ_p conj(B_i[p]) B_j[p])·(Σ_l conj(Δ_i[l]) Δ_j[l])`,
/// which holds because `Π_i^H Π_j` is circulant.
pub fn channel_frobenius_sq(paths: &[DDPath], dims: &SystemDims) -> f64 {
    let len = dims.frame_len();
    let mn = len as f64;
    let mut acc = 0.0;
    for (i, pi) in paths.iter().enumerate() {
        acc += pi.gain.norm_sqr() * mn;
        for pj in &paths[i + 1..] {
            let sb = geometric_sum(-TAU * (pj.delay - pi.delay) / mn, len);
            let sd = geometric_sum(TAU * (pj.doppler - pi.doppler) / mn, len);
            let cross = pi.gain.conj() * pj.gain * sb * sd / mn;
            acc += 2.0 * cross.re;
        }
    }
    acc.max(0.0)
}
