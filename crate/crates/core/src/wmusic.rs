//! MU-W-MUSIC: Doppler-smoothed covariance, effective noise projector,
//! weighted-least-squares rooting of the Doppler null-spectrum determinant,
//! and one delay polynomial per retained Doppler root.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dd::SystemDims;
use crate::error::{invalid, Error, Result};
use crate::gains::{EstimatorOutput, Flag, PathEstimate};
use crate::linalg::{cis, hermitian_eigen, log_det, wrap_centered, wrap_to, C64, TAU};
use crate::pilot::{associate_users, PilotConfig};
use crate::poly::{laurent_roots, select_inside_roots, wls_fourier_fit, UnitCircleSamples};
use crate::synthesis::TfPilotGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WMusicConfig {
    /// Delay rows per snapshot `M′`.
    #[serde(rename = "M_sub")]
    pub sub_delay: usize,
    /// Doppler columns per snapshot `N′`.
    #[serde(rename = "N_sub")]
    pub sub_doppler: usize,
    /// Fourier order `G` of the null-spectrum fit.
    #[serde(rename = "G")]
    pub order: usize,
    /// Unit-circle samples `Q_sample`.
    #[serde(rename = "Q_sample")]
    pub samples: usize,
    #[serde(default = "default_eps_rel")]
    pub eps_rel: f64,
    /// Radians; `None` means 0.05 Doppler bins (`2π·0.05/N`).
    #[serde(default)]
    pub min_angle_sep: Option<f64>,
    /// Evaluate the delay polynomial at the Doppler root projected onto the
    /// unit circle rather than at the raw root.
    #[serde(default = "default_project")]
    pub project_doppler_root: bool,
}

fn default_eps_rel() -> f64 {
    1e-8
}

fn default_project() -> bool {
    true
}

impl WMusicConfig {
    pub fn new(sub_delay: usize, sub_doppler: usize, order: usize, samples: usize) -> Self {
        Self {
            sub_delay,
            sub_doppler,
            order,
            samples,
            eps_rel: default_eps_rel(),
            min_angle_sep: None,
            project_doppler_root: true,
        }
    }

    /// Number of smoothing snapshots `N − N′ + 1`.
    pub fn snapshot_count(&self, dims: &SystemDims) -> usize {
        dims.doppler_bins + 1 - self.sub_doppler
    }

    pub fn angle_sep(&self, dims: &SystemDims) -> f64 {
        self.min_angle_sep
            .unwrap_or(TAU * 0.05 / dims.doppler_bins as f64)
    }

    pub fn validate(&self, dims: &SystemDims, total_paths: usize) -> Result<()> {
        if !(1..=dims.delay_bins).contains(&self.sub_delay) {
            return Err(invalid("1 <= M_sub <= M"));
        }
        if !(1..=dims.doppler_bins).contains(&self.sub_doppler) {
            return Err(invalid("1 <= N_sub <= N"));
        }
        if self.sub_delay * self.sub_doppler <= total_paths {
            return Err(invalid("M_sub * N_sub > P_tot"));
        }
        if self.samples < 2 * self.order + 1 {
            return Err(invalid("Q_sample >= 2G + 1"));
        }
        if !(self.eps_rel >= 0.0 && self.eps_rel.is_finite()) {
            return Err(invalid("eps_rel >= 0"));
        }
        if let Some(s) = self.min_angle_sep {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(invalid("min_angle_sep >= 0"));
            }
        }
        Ok(())
    }
}

/// Covariance, its eigen-split, and (once filled) the effective projector.
#[derive(Debug, Clone)]
pub struct SubspaceState {
    pub covariance: Mat<C64>,
    /// Ascending eigenvalues of the covariance.
    pub eigenvalues: Vec<f64>,
    /// `E_n`: eigenvectors of all but the `P_tot` largest eigenvalues.
    pub noise_basis: Mat<C64>,
    /// Eigenvectors of the `P_tot` largest eigenvalues.
    pub signal_basis: Mat<C64>,
    /// `E_eff`, filled by [`effective_projection`].
    pub effective: Option<Mat<C64>>,
    /// Lag sums of `E_eff` blocks, index `k + N′ − 1` for block lag `k`.
    lag_blocks: Vec<Mat<C64>>,
    sub_delay: usize,
    sub_doppler: usize,
    /// A pilot bin within the first `M′` is zero.
    pub pilot_gap: bool,
    /// Delay indices `< M′` with a nonzero pilot bin.
    live: Vec<usize>,
}

/// Column `j` is the column-major vectorization of `R_TF[0..M′, j..j+N′]`:
/// row `n·M′ + m` holds `R_TF[m, j + n]`.
pub fn snapshots(grid: &Mat<C64>, cfg: &WMusicConfig) -> Result<Mat<C64>> {
    let (m_len, n_len) = (grid.nrows(), grid.ncols());
    if cfg.sub_doppler > n_len || cfg.sub_doppler == 0 {
        return Err(invalid("1 <= N_sub <= N"));
    }
    if cfg.sub_delay > m_len || cfg.sub_delay == 0 {
        return Err(invalid("1 <= M_sub <= M"));
    }
    let (mp, np) = (cfg.sub_delay, cfg.sub_doppler);
    let count = n_len - np + 1;
    Ok(Mat::from_fn(mp * np, count, |r, j| grid[(r % mp, j + r / mp)]))
}

/// `K̂ = S Sᴴ / L` and its noise/signal eigenvector split. `sub_delay` is the
/// `M′` the snapshots were built with.
pub fn covariance_and_noise_subspace(snaps: &Mat<C64>, total_paths: usize, sub_delay: usize) -> Result<SubspaceState> {
    let (dim, count) = (snaps.nrows(), snaps.ncols());
    if count == 0 {
        return Err(invalid("at least one snapshot"));
    }
    if total_paths >= dim {
        return Err(invalid("P_tot < M_sub * N_sub"));
    }
    if sub_delay == 0 || dim % sub_delay != 0 {
        return Err(invalid("snapshot length must be a multiple of M_sub"));
    }
    let raw = snaps * snaps.adjoint();
    let scale = 1.0 / count as f64;
    let covariance = Mat::from_fn(dim, dim, |i, j| (raw[(i, j)] + raw[(j, i)].conj()) * (0.5 * scale));
    let (eigenvalues, vecs) = hermitian_eigen(covariance.as_ref())?;
    let split = dim - total_paths;
    Ok(SubspaceState {
        noise_basis: vecs.subcols(0, split).to_owned(),
        signal_basis: vecs.subcols(split, total_paths).to_owned(),
        covariance,
        eigenvalues,
        effective: None,
        lag_blocks: Vec::new(),
        sub_delay,
        sub_doppler: dim / sub_delay,
        pilot_gap: false,
        live: (0..sub_delay).collect(),
    })
}

/// Fills `E_eff = (I ⊗ X̃′_f)ᴴ E_n E_nᴴ (I ⊗ X̃′_f)` with `X̃′_f` the leading
/// `M′` pilot bins. `E_n E_nᴴ` is formed as `I − U_s U_sᴴ`.
pub fn effective_projection(state: &mut SubspaceState, spectrum: &[C64]) -> Result<()> {
    let (mp, np) = (state.sub_delay, state.sub_doppler);
    if spectrum.len() < mp {
        return Err(invalid("pilot spectrum shorter than M_sub"));
    }
    let dim = mp * np;
    let us = &state.signal_basis;
    let signal_proj = us * us.adjoint();
    let peak = spectrum.iter().map(|v| v.norm()).fold(0.0, f64::max);
    // dead bins are zeroed exactly so they drop out of every determinant
    let x: Vec<C64> = spectrum[..mp]
        .iter()
        .map(|&v| if v.norm() < 1e-12 * peak { C64::new(0.0, 0.0) } else { v })
        .collect();
    state.live = (0..mp).filter(|&m| x[m] != C64::new(0.0, 0.0)).collect();
    state.pilot_gap = state.live.len() < mp;
    if state.live.is_empty() {
        return Err(invalid("pilot spectrum vanishes on the first M_sub bins"));
    }
    let eff = Mat::from_fn(dim, dim, |a, b| {
        let p = if a == b { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) } - signal_proj[(a, b)];
        x[a % mp].conj() * p * x[b % mp]
    });

    let mut lags = vec![Mat::<C64>::zeros(mp, mp); 2 * np - 1];
    for bn in 0..np {
        for an in 0..np {
            let lag = &mut lags[bn + np - 1 - an];
            for j in 0..mp {
                for i in 0..mp {
                    lag[(i, j)] += eff[(an * mp + i, bn * mp + j)];
                }
            }
        }
    }
    state.lag_blocks = lags;
    state.effective = Some(eff);
    Ok(())
}

fn effective(state: &SubspaceState) -> Result<&Mat<C64>> {
    state
        .effective
        .as_ref()
        .ok_or_else(|| invalid("effective projection not computed"))
}

/// `D(z) = (v_{N′}(z) ⊗ I)ᴴ E_eff (v_{N′}(z) ⊗ I)` with `v(z)[n] = zⁿ`.
pub fn doppler_null_matrix(state: &SubspaceState, z: C64) -> Result<Mat<C64>> {
    let eff = effective(state)?;
    let (mp, np) = (state.sub_delay, state.sub_doppler);
    let on_circle = (z.norm() - 1.0).abs() < 1e-14;
    if on_circle {
        let zu = z / z.norm();
        let mut d = Mat::<C64>::zeros(mp, mp);
        for (idx, block) in state.lag_blocks.iter().enumerate() {
            let w = zu.powi(idx as i32 - (np as i32 - 1));
            d += faer::Scale(w) * block;
        }
        return Ok(d);
    }
    let pows: Vec<C64> = (0..np).map(|n| z.powi(n as i32)).collect();
    Ok(Mat::from_fn(mp, mp, |i, j| {
        let mut acc = C64::new(0.0, 0.0);
        for an in 0..np {
            let left = pows[an].conj();
            for bn in 0..np {
                acc += left * pows[bn] * eff[(an * mp + i, bn * mp + j)];
            }
        }
        acc
    }))
}

/// `D(z)` restricted to the delay indices whose pilot bin is nonzero.
pub fn live_null_matrix(state: &SubspaceState, z: C64) -> Result<Mat<C64>> {
    let d = doppler_null_matrix(state, z)?;
    let live = &state.live;
    Ok(Mat::from_fn(live.len(), live.len(), |i, j| d[(live[i], live[j])]))
}

/// Selected Doppler roots and their observed (offset-included) Dopplers.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerRoots {
    pub roots: Vec<C64>,
    /// `(N/2π)·angle(root)` wrapped to `[0, N)`.
    pub observed: Vec<f64>,
    pub shortfall: bool,
    pub relaxed: bool,
}

/// Samples `det D(e^{jφ})` (over delay indices with a live pilot bin), fits the Laurent polynomial by WLS, roots it and
/// keeps the `P_tot` inside roots nearest the unit circle.
pub fn estimate_dopplers(
    state: &SubspaceState,
    cfg: &WMusicConfig,
    total_paths: usize,
    dims: &SystemDims,
) -> Result<DopplerRoots> {
    effective(state)?;
    if total_paths == 0 {
        return Ok(DopplerRoots {
            roots: Vec::new(),
            observed: Vec::new(),
            shortfall: false,
            relaxed: false,
        });
    }
    let angles = UnitCircleSamples::uniform_angles(cfg.samples);
    let mut logs = Vec::with_capacity(angles.len());
    for &phi in &angles {
        logs.push(log_det(live_null_matrix(state, cis(phi))?.as_ref()));
    }
    let top = logs.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::IllConditioned("null-spectrum determinant vanishes everywhere".into()));
    }
    let values = logs.iter().map(|&(lm, ph)| ph * (lm - top).exp()).collect();
    let fit = wls_fourier_fit(&UnitCircleSamples { angles, values }, cfg.order, cfg.eps_rel)?;
    let roots = laurent_roots(&fit.coeffs, cfg.order)?;
    let sel = select_inside_roots(&roots, total_paths, cfg.angle_sep(dims));
    let n = dims.doppler_bins as f64;
    Ok(DopplerRoots {
        observed: sel.roots.iter().map(|z| wrap_to(n * z.arg() / TAU, n)).collect(),
        roots: sel.roots,
        shortfall: sel.shortfall,
        relaxed: sel.relaxed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayRoot {
    /// `None` when the delay polynomial has no roots.
    pub delay: Option<f64>,
    pub root: Option<C64>,
    /// No root lay strictly inside the unit circle.
    pub fallback: bool,
}

/// Delay from a Doppler null matrix `D`: roots of
/// `J(z) = b(z)ᴴ D b(z)` (coefficient of `z^k` is the `k`-th anti-diagonal
/// sum `Σ_{b−a=k} D[a,b]`), closest inside root, `ℓ = −(M/2π)·angle(z)`.
pub fn delay_from_null_matrix(d: &Mat<C64>, delay_bins: usize) -> Result<DelayRoot> {
    let mp = d.nrows();
    let mut coeffs = vec![C64::new(0.0, 0.0); 2 * mp - 1];
    for b in 0..mp {
        for a in 0..mp {
            coeffs[b + mp - 1 - a] += d[(a, b)];
        }
    }
    let roots = laurent_roots(&coeffs, mp - 1)?;
    let inside = roots
        .iter()
        .copied()
        .filter(|z| z.norm() < 1.0)
        .max_by(|a, b| a.norm().total_cmp(&b.norm()));
    let (root, fallback) = match inside {
        Some(z) => (Some(z), false),
        None => (
            roots
                .iter()
                .copied()
                .min_by(|a, b| (a.norm() - 1.0).abs().total_cmp(&(b.norm() - 1.0).abs())),
            true,
        ),
    };
    let m = delay_bins as f64;
    Ok(DelayRoot {
        delay: root.map(|z| wrap_centered(-m * z.arg() / TAU, m)),
        root,
        fallback,
    })
}

/// Delay estimate for one Doppler root.
pub fn estimate_delay_for_root(
    state: &SubspaceState,
    z_kappa: C64,
    cfg: &WMusicConfig,
    dims: &SystemDims,
) -> Result<DelayRoot> {
    let z = if cfg.project_doppler_root && z_kappa.norm() > 0.0 {
        z_kappa / z_kappa.norm()
    } else {
        z_kappa
    };
    let d = doppler_null_matrix(state, z)?;
    delay_from_null_matrix(&d, dims.delay_bins)
}

/// Full W-MUSIC pass over one observation. Gains are left at zero.
pub fn run_wmusic(
    grid: &TfPilotGrid,
    dims: &SystemDims,
    pilot: &PilotConfig,
    cfg: &WMusicConfig,
    total_paths: usize,
) -> Result<EstimatorOutput> {
    cfg.validate(dims, total_paths)?;
    let snaps = snapshots(&grid.grid, cfg)?;
    let mut state = covariance_and_noise_subspace(&snaps, total_paths, cfg.sub_delay)?;
    effective_projection(&mut state, &grid.spectrum)?;

    let mut out = EstimatorOutput::default();
    if state.pilot_gap {
        out.flags.push(Flag::PilotSpectrumGap);
    }
    let dop = estimate_dopplers(&state, cfg, total_paths, dims)?;
    if dop.shortfall {
        out.flags.push(Flag::RootShortfall {
            found: dop.roots.len(),
            wanted: total_paths,
        });
    }
    if dop.relaxed {
        out.flags.push(Flag::SeparationRelaxed);
    }
    let assoc = associate_users(&dop.observed, dims, pilot)?;
    for &(_, obs) in &assoc.unassigned {
        out.flags.push(Flag::UnassignedDoppler { observed: obs });
    }
    for (q, list) in assoc.per_user.iter().enumerate() {
        for &(i, kappa) in list {
            let dr = estimate_delay_for_root(&state, dop.roots[i], cfg, dims)?;
            let observed_doppler = dop.observed[i];
            match dr.delay {
                Some(delay) => {
                    if dr.fallback {
                        out.flags.push(Flag::DelayRootFallback { observed_doppler });
                    }
                    out.estimates.push(PathEstimate::new(q, delay, kappa));
                }
                None => out.flags.push(Flag::NoDelayRoot { observed_doppler }),
            }
        }
    }
    Ok(out)
}
