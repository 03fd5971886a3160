//! MU-PCP pilots: Zadoff-Chu generation, per-user Doppler bins, DD-grid
//! placement, the pilot's M-point spectrum, and association of observed
//! Dopplers back to users.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dd::SystemDims;
use crate::error::{invalid, Error, Result};
use crate::linalg::{cis, wrap_centered, wrap_to, C64, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotConfig {
    #[serde(rename = "M_ZC")]
    pub zc_len: usize,
    #[serde(rename = "M_CP")]
    pub cp_len: usize,
    #[serde(default = "default_root")]
    pub zc_root: usize,
    /// Number of users `Q`.
    #[serde(rename = "Q")]
    pub users: usize,
}

fn default_root() -> usize {
    1
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl PilotConfig {
    /// `M_PCP = M_CP + M_ZC`.
    pub fn pcp_len(&self) -> usize {
        self.cp_len + self.zc_len
    }

    pub fn validate(&self, dims: &SystemDims) -> Result<()> {
        if self.zc_len == 0 {
            return Err(invalid("M_ZC >= 1"));
        }
        if self.users == 0 {
            return Err(invalid("Q >= 1"));
        }
        if gcd(self.zc_root, self.zc_len) != 1 {
            return Err(Error::ZcRootNotCoprime {
                root: self.zc_root,
                len: self.zc_len,
            });
        }
        if (self.cp_len as f64) < dims.ell_max.ceil() {
            return Err(invalid("M_CP >= ceil(ell_max)"));
        }
        if self.pcp_len() >= dims.delay_bins {
            return Err(invalid("M_PCP = M_CP + M_ZC < M"));
        }
        if !capacity_check(dims.doppler_bins, dims.kappa_max, self.users) {
            return Err(invalid("Q <= floor(N / (2 kappa_max + 1))"));
        }
        Ok(())
    }

    /// Pilot Doppler bin `k^q` of every user.
    pub fn doppler_indices(&self, dims: &SystemDims) -> Vec<usize> {
        (0..self.users)
            .map(|q| doppler_index(q, dims.doppler_bins, self.users))
            .collect()
    }
}

/// Zadoff-Chu sequence of length `len` and root `root`:
/// `exp(-jπ u l² / L)` for even `L`, `exp(-jπ u l(l+1) / L)` for odd `L`.
pub fn zc_sequence(len: usize, root: usize) -> Result<Vec<C64>> {
    if len == 0 || gcd(root, len) != 1 {
        return Err(Error::ZcRootNotCoprime { root, len });
    }
    let odd = len % 2;
    Ok((0..len)
        .map(|l| {
            // reduce the exponent mod 2L before converting to keep the phase exact
            let e = (root as u128 * l as u128 * (l + odd) as u128) % (2 * len as u128);
            cis(-std::f64::consts::PI * e as f64 / len as f64)
        })
        .collect())
}

/// `k^q = floor(floor(N/Q)/2) + q·floor(N/Q)`.
pub fn doppler_index(q: usize, doppler_bins: usize, users: usize) -> usize {
    let spacing = doppler_bins / users;
    spacing / 2 + q * spacing
}

/// `Q <= floor(N / (2 kappa_max + 1))`.
pub fn capacity_check(doppler_bins: usize, kappa_max: f64, users: usize) -> bool {
    let bound = (doppler_bins as f64 / (2.0 * kappa_max + 1.0)).floor();
    (users as f64) <= bound
}

/// DD-domain pilot of user `q`: column `k^q` holds the CP followed by the ZC
/// sequence, every other entry is zero.
pub fn pcp_grid(cfg: &PilotConfig, dims: &SystemDims, q: usize) -> Result<Mat<C64>> {
    if cfg.pcp_len() >= dims.delay_bins {
        return Err(invalid("M_PCP = M_CP + M_ZC < M"));
    }
    if q >= cfg.users {
        return Err(invalid(format!("user index {q} >= Q")));
    }
    let zc = zc_sequence(cfg.zc_len, cfg.zc_root)?;
    let col = doppler_index(q, dims.doppler_bins, cfg.users);
    let mut grid = Mat::<C64>::zeros(dims.delay_bins, dims.doppler_bins);
    for l in 0..cfg.cp_len {
        // CP repeats the tail; cyclic indexing covers M_CP > M_ZC
        let src = (cfg.zc_len * cfg.cp_len + l - cfg.cp_len) % cfg.zc_len;
        grid[(l, col)] = zc[src];
    }
    for (l, &x) in zc.iter().enumerate() {
        grid[(cfg.cp_len + l, col)] = x;
    }
    Ok(grid)
}

/// Zero-padded, unnormalized `M`-point DFT of the ZC sequence.
pub fn pilot_spectrum(cfg: &PilotConfig, delay_bins: usize) -> Result<Vec<C64>> {
    if delay_bins < cfg.zc_len {
        return Err(invalid("M >= M_ZC"));
    }
    let zc = zc_sequence(cfg.zc_len, cfg.zc_root)?;
    Ok((0..delay_bins)
        .map(|m| {
            zc.iter()
                .enumerate()
                .map(|(l, &x)| x * cis(-TAU * ((m * l) % delay_bins) as f64 / delay_bins as f64))
                .sum()
        })
        .collect())
}

/// Observed Dopplers grouped per user, with the pilot offset removed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Association {
    /// `per_user[q]` lists `(index into the observed list, physical Doppler)`.
    pub per_user: Vec<Vec<(usize, f64)>>,
    /// Observed values that fell outside every user window.
    pub unassigned: Vec<(usize, f64)>,
}

impl Association {
    pub fn user_of(&self, index: usize) -> Option<(usize, f64)> {
        self.per_user.iter().enumerate().find_map(|(q, list)| {
            list.iter()
                .find(|(i, _)| *i == index)
                .map(|&(_, kappa)| (q, kappa))
        })
    }
}

/// Assigns each observed Doppler in `[0, N)` to the user whose window
/// `[k^q - kappa_max, k^q + kappa_max]` (cyclic mod N) contains it.
pub fn associate_users(observed: &[f64], dims: &SystemDims, cfg: &PilotConfig) -> Result<Association> {
    let n = dims.doppler_bins as f64;
    let spacing = (dims.doppler_bins / cfg.users) as f64;
    let offsets = cfg.doppler_indices(dims);
    let first = offsets[0] as f64;
    let last = *offsets.last().unwrap() as f64;
    let wrap_gap = n - (last - first);
    let min_gap = if cfg.users > 1 { spacing.min(wrap_gap) } else { wrap_gap };
    if 2.0 * dims.kappa_max >= min_gap {
        return Err(Error::OverlappingWindows {
            users: cfg.users,
            doppler_bins: dims.doppler_bins,
            kappa_max: dims.kappa_max,
        });
    }

    let mut out = Association {
        per_user: vec![Vec::new(); cfg.users],
        unassigned: Vec::new(),
    };
    for (i, &obs) in observed.iter().enumerate() {
        let obs = wrap_to(obs, n);
        let hit = offsets.iter().enumerate().find_map(|(q, &k)| {
            let kappa = wrap_centered(obs - k as f64, n);
            (kappa.abs() <= dims.kappa_max).then_some((q, kappa))
        });
        match hit {
            Some((q, kappa)) => out.per_user[q].push((i, kappa)),
            None => out.unassigned.push((i, obs)),
        }
    }
    Ok(out)
}
