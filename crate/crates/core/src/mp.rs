//! MU-MP: block-Hankel matrix pencil over the TF pilot grid. Doppler poles
//! come from the SVD-reduced pencil; delays from the phase slope of the
//! least-squares projection onto the estimated Doppler subspace.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dd::SystemDims;
use crate::error::{invalid, Result};
use crate::gains::{EstimatorOutput, Flag, PathEstimate};
use crate::linalg::{eigenvalues, thin_svd, wrap_centered, wrap_to, ThinSvd, C64, TAU};
use crate::pilot::{associate_users, PilotConfig};
use crate::synthesis::TfPilotGrid;

/// Relative singular-value floor below which the pencil order is reduced.
pub const RANK_TOL: f64 = 1e-12;
/// Poles closer than this (Doppler bins) are reported as clustered.
pub const CLUSTER_TOL_BINS: f64 = 1e-4;
/// Relative singular-value floor of the Doppler-subspace projection.
pub const PROJECTION_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpConfig {
    /// Delay pencil parameter `M_p`.
    #[serde(rename = "M_pencil")]
    pub pencil_delay: usize,
    /// Doppler pencil parameter `N_p`.
    #[serde(rename = "N_pencil")]
    pub pencil_doppler: usize,
}

impl MpConfig {
    pub fn new(pencil_delay: usize, pencil_doppler: usize) -> Self {
        Self {
            pencil_delay,
            pencil_doppler,
        }
    }

    /// `(K_M, K_N)`.
    pub fn block_counts(&self, dims: &SystemDims) -> (usize, usize) {
        (
            (dims.delay_bins + 1).saturating_sub(self.pencil_delay),
            (dims.doppler_bins + 1).saturating_sub(self.pencil_doppler),
        )
    }

    pub fn validate(&self, dims: &SystemDims, total_paths: usize) -> Result<()> {
        if !(1..=dims.delay_bins).contains(&self.pencil_delay) {
            return Err(invalid("1 <= M_pencil <= M"));
        }
        if !(1..=dims.doppler_bins).contains(&self.pencil_doppler) {
            return Err(invalid("1 <= N_pencil <= N"));
        }
        let (km, kn) = self.block_counts(dims);
        if kn < 2 {
            return Err(invalid("K_N = N - N_pencil + 1 >= 2"));
        }
        if self.pencil_delay * self.pencil_doppler < total_paths {
            return Err(invalid("M_pencil * N_pencil >= P_tot"));
        }
        if km * (kn - 1) < total_paths {
            return Err(invalid("K_M * (K_N - 1) >= P_tot"));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct PencilState {
    /// Block-Hankel `X` (`M_p N_p × K_M K_N`).
    pub x: Mat<C64>,
    pub left: Option<Mat<C64>>,
    pub right: Option<Mat<C64>>,
    /// Truncated SVD of `X_left`, filled by [`doppler_poles`].
    pub signal_svd: Option<ThinSvd>,
    pub pencil_delay: usize,
    pub pencil_doppler: usize,
    pub k_m: usize,
    pub k_n: usize,
}

/// `X[i·M_p + a, j·K_M + b] = R_TF[a + b, i + j]`: block `(i, j)` is the
/// delay-Hankel matrix of TF column `i + j`.
pub fn build_block_hankel(grid: &Mat<C64>, cfg: &MpConfig) -> Result<PencilState> {
    let (m_len, n_len) = (grid.nrows(), grid.ncols());
    let (mp, np) = (cfg.pencil_delay, cfg.pencil_doppler);
    if !(1..=m_len).contains(&mp) || !(1..=n_len).contains(&np) {
        return Err(invalid("pencil parameters must lie within the grid"));
    }
    let (km, kn) = (m_len - mp + 1, n_len - np + 1);
    let x = Mat::from_fn(mp * np, km * kn, |r, c| grid[(r % mp + c % km, r / mp + c / km)]);
    Ok(PencilState {
        x,
        left: None,
        right: None,
        signal_svd: None,
        pencil_delay: mp,
        pencil_doppler: np,
        k_m: km,
        k_n: kn,
    })
}

/// `R_TF[m, n] / x_f[m]` with dead bins (`|x_f| < 1e-12·max|x_f|`) set to
/// zero, plus the per-bin liveness mask. Removes the pilot's delay-domain
/// weighting so every path is a separable 2-D exponential.
pub fn deconvolve_pilot(grid: &Mat<C64>, spectrum: &[C64]) -> Result<(Mat<C64>, Vec<bool>)> {
    if spectrum.len() != grid.nrows() {
        return Err(invalid("pilot spectrum length differs from M"));
    }
    let peak = spectrum.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let live: Vec<bool> = spectrum.iter().map(|v| peak > 0.0 && v.norm() >= 1e-12 * peak).collect();
    let y = Mat::from_fn(grid.nrows(), grid.ncols(), |m, n| {
        if live[m] {
            grid[(m, n)] / spectrum[m]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok((y, live))
}

/// Drops every row `(i, a)` of `X` whose delay window `a..a+K_M` touches a
/// dead bin. Must run before [`pencil_split`].
pub fn restrict_rows(state: &mut PencilState, live: &[bool]) -> Result<()> {
    let (mp, km) = (state.pencil_delay, state.k_m);
    let keep_a: Vec<usize> = (0..mp).filter(|&a| live[a..a + km].iter().all(|&l| l)).collect();
    if keep_a.is_empty() {
        return Err(invalid("every delay window of the pencil touches a zero pilot bin"));
    }
    let rows: Vec<usize> = (0..state.pencil_doppler)
        .flat_map(|i| keep_a.iter().map(move |&a| i * mp + a))
        .collect();
    state.x = Mat::from_fn(rows.len(), state.x.ncols(), |r, c| state.x[(rows[r], c)]);
    state.left = None;
    state.right = None;
    Ok(())
}

/// `X_left` = block columns `0..K_N−1`, `X_right` = block columns `1..K_N`.
pub fn pencil_split(state: &mut PencilState) -> Result<()> {
    if state.k_n < 2 {
        return Err(invalid("K_N = N - N_pencil + 1 >= 2"));
    }
    let width = state.k_m * (state.k_n - 1);
    state.left = Some(state.x.subcols(0, width).to_owned());
    state.right = Some(state.x.subcols(state.k_m, width).to_owned());
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleSet {
    pub poles: Vec<C64>,
    /// `(N/2π)·angle(pole)` wrapped to `[0, N)`.
    pub observed: Vec<f64>,
    /// Effective pencil order after dropping zero singular values.
    pub order: usize,
    pub clustered: bool,
}

/// Eigenvalues of `T = Σ_s⁻¹ U_sᴴ X_right V_s` from the top `P_tot` SVD
/// triplets of `X_left`.
pub fn doppler_poles(state: &mut PencilState, total_paths: usize, doppler_bins: usize) -> Result<PoleSet> {
    let (left, right) = match (&state.left, &state.right) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(invalid("pencil not split")),
    };
    let n = doppler_bins as f64;
    if total_paths == 0 {
        return Ok(PoleSet {
            poles: Vec::new(),
            observed: Vec::new(),
            order: 0,
            clustered: false,
        });
    }
    let svd = thin_svd(left.as_ref())?;
    let s0 = svd.s[0];
    let order = svd
        .s
        .iter()
        .take(total_paths)
        .take_while(|&&v| v > RANK_TOL * s0 && v > 0.0)
        .count();
    let us = svd.u.subcols(0, order).to_owned();
    let vs = svd.v.subcols(0, order).to_owned();
    let ss: Vec<f64> = svd.s[..order].to_vec();

    let uxr = us.adjoint() * right;
    let core = &uxr * &vs;
    let t = Mat::from_fn(order, order, |i, j| core[(i, j)] / ss[i]);
    let poles = eigenvalues(t.as_ref())?;
    let observed: Vec<f64> = poles.iter().map(|z| wrap_to(n * z.arg() / TAU, n)).collect();

    let mut clustered = false;
    for i in 0..observed.len() {
        for j in i + 1..observed.len() {
            if wrap_centered(observed[i] - observed[j], n).abs() < CLUSTER_TOL_BINS {
                clustered = true;
            }
        }
    }
    state.signal_svd = Some(ThinSvd { u: us, s: ss, v: vs });
    Ok(PoleSet {
        poles,
        observed,
        order,
        clustered,
    })
}

/// `Ĝ = argmin ‖R_TF − G Θᵀ‖` with `Θ[n, i] = (λ_i/|λ_i|)ⁿ`, solved through a
/// truncated SVD of `Θ`. Returns `Ĝ` (M × P) and whether truncation occurred.
pub fn project_doppler_subspace(grid: &Mat<C64>, poles: &[C64]) -> Result<(Mat<C64>, bool)> {
    let (m_len, n_len) = (grid.nrows(), grid.ncols());
    let p = poles.len();
    if p == 0 {
        return Ok((Mat::zeros(m_len, 0), false));
    }
    let unit: Vec<C64> = poles
        .iter()
        .map(|z| if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) })
        .collect();
    let theta = Mat::from_fn(n_len, p, |n, i| unit[i].powi(n as i32));
    let svd = thin_svd(theta.as_ref())?;
    let cut = PROJECTION_RCOND * svd.s[0];
    let keep = svd.s.iter().take_while(|&&v| v > cut).count();
    let truncated = keep < p;

    // Ĝᵀ = V Σ⁺ Uᴴ Rᵀ
    let rt = grid.transpose().to_owned();
    let uhr = svd.u.subcols(0, keep).adjoint() * &rt;
    let scaled = Mat::from_fn(keep, m_len, |k, m| uhr[(k, m)] / svd.s[k]);
    let gt = svd.v.subcols(0, keep) * &scaled;
    Ok((gt.transpose().to_owned(), truncated))
}

/// Delay of every projected column: `−(M/2π)·angle(Σ_m w_m G̃[m+1] conj(G̃[m]))`
/// with `G̃ = Ĝ / x_f` and `w_m = |x_f[m] x_f[m+1]|²`; bins with
/// `|x_f| < 1e-12·max|x_f|` get zero weight.
pub fn phase_slope_delays(projected: &Mat<C64>, spectrum: &[C64]) -> Vec<f64> {
    let m_len = projected.nrows();
    let peak = spectrum.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let live: Vec<bool> = spectrum.iter().map(|v| v.norm() >= 1e-12 * peak).collect();
    let m = m_len as f64;
    (0..projected.ncols())
        .map(|i| {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..m_len - 1 {
                if live[k] && live[k + 1] {
                    // w·G̃[k+1]·conj(G̃[k]) = Ĝ[k+1]·conj(Ĝ[k])·conj(x[k+1])·x[k]
                    acc += projected[(k + 1, i)] * projected[(k, i)].conj() * spectrum[k + 1].conj() * spectrum[k];
                }
            }
            wrap_centered(-m * acc.arg() / TAU, m)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionDelays {
    pub delays: Vec<f64>,
    pub ill_conditioned: bool,
}

pub fn delay_from_projection(grid: &Mat<C64>, poles: &[C64], spectrum: &[C64]) -> Result<ProjectionDelays> {
    if spectrum.len() != grid.nrows() {
        return Err(invalid("pilot spectrum length differs from M"));
    }
    let (g, ill) = project_doppler_subspace(grid, poles)?;
    Ok(ProjectionDelays {
        delays: phase_slope_delays(&g, spectrum),
        ill_conditioned: ill,
    })
}

/// Full matrix-pencil pass over one observation. Gains are left at zero.
pub fn run_mp(
    grid: &TfPilotGrid,
    dims: &SystemDims,
    pilot: &PilotConfig,
    cfg: &MpConfig,
    total_paths: usize,
) -> Result<EstimatorOutput> {
    cfg.validate(dims, total_paths)?;
    let (y, live) = deconvolve_pilot(&grid.grid, &grid.spectrum)?;
    let mut state = build_block_hankel(&y, cfg)?;
    let mut out = EstimatorOutput::default();
    if live.iter().any(|&l| !l) {
        out.flags.push(Flag::PilotSpectrumGap);
        restrict_rows(&mut state, &live)?;
    }
    pencil_split(&mut state)?;
    let poles = doppler_poles(&mut state, total_paths, dims.doppler_bins)?;

    if poles.order < total_paths {
        out.flags.push(Flag::RankDeficient {
            order: poles.order,
            wanted: total_paths,
        });
    }
    if poles.clustered {
        out.flags.push(Flag::ClusteredPoles);
    }
    let delays = delay_from_projection(&grid.grid, &poles.poles, &grid.spectrum)?;
    if delays.ill_conditioned {
        out.flags.push(Flag::IllConditionedProjection);
    }
    let assoc = associate_users(&poles.observed, dims, pilot)?;
    for &(_, obs) in &assoc.unassigned {
        out.flags.push(Flag::UnassignedDoppler { observed: obs });
    }
    for (q, list) in assoc.per_user.iter().enumerate() {
        for &(i, kappa) in list {
            out.estimates.push(PathEstimate::new(q, delays.delays[i], kappa));
        }
    }
    Ok(out)
}
