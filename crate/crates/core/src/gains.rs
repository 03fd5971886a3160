//! Per-path estimates, the parametric dictionary built from them, and the
//! least-squares gain fit against the TF-domain observation.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dd::{steering_delay, steering_doppler, SystemDims};
use crate::error::{invalid, Result};
use crate::linalg::{lstsq, thin_svd, C64};
use crate::pilot::{doppler_index, PilotConfig};
use crate::synthesis::TfPilotGrid;

/// Condition number above which a gain fit is reported as ill-posed.
pub const GAIN_CONDITION_LIMIT: f64 = 1e10;

/// One estimated path of user `user`. `doppler` is physical (pilot offset
/// removed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub user: usize,
    /// Bins, in `(-M/2, M/2]`.
    pub delay: f64,
    pub doppler: f64,
    #[serde(with = "complex_pair")]
    pub gain: C64,
}

mod complex_pair {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &C64, s: S) -> Result<S::Ok, S::Error> {
        [v.re, v.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

impl PathEstimate {
    pub fn new(user: usize, delay: f64, doppler: f64) -> Self {
        Self {
            user,
            delay,
            doppler,
            gain: C64::new(0.0, 0.0),
        }
    }
}

/// Diagnostics raised by the estimators. None of them abort a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    /// Fewer Doppler roots/poles than `P_tot` were available.
    RootShortfall { found: usize, wanted: usize },
    /// The root separation rule was dropped to fill the selection.
    SeparationRelaxed,
    /// No delay root inside the unit circle; the closest root of any modulus
    /// was used.
    DelayRootFallback { observed_doppler: f64 },
    /// The delay polynomial had no roots at all; the path was dropped.
    NoDelayRoot { observed_doppler: f64 },
    /// A pilot spectrum bin used by the estimator is (numerically) zero.
    PilotSpectrumGap,
    /// The signal subspace had fewer than `wanted` nonzero singular values.
    RankDeficient { order: usize, wanted: usize },
    /// Two or more Doppler poles coincide within resolution.
    ClusteredPoles,
    /// The Doppler-subspace projection was solved with a truncated
    /// pseudo-inverse.
    IllConditionedProjection,
    /// An observed Doppler fell outside every user window.
    UnassignedDoppler { observed: f64 },
    /// The gain dictionary condition number exceeded the limit.
    IllPosedGains { condition: f64 },
}

/// What an estimator run returns before gain recovery.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutput {
    /// Grouped by user, in the estimator's root order within a user.
    pub estimates: Vec<PathEstimate>,
    pub flags: Vec<Flag>,
}

/// `vec(X_f b_M(ell) v_N^T(kappa + k^q))`, column-major: entry `n·M + m`.
pub fn dictionary_atom(est: &PathEstimate, spectrum: &[C64], dims: &SystemDims, pilot: &PilotConfig) -> Vec<C64> {
    let (m_len, n_len) = (dims.delay_bins, dims.doppler_bins);
    let offset = doppler_index(est.user, n_len, pilot.users) as f64;
    let b = steering_delay(est.delay, m_len);
    let v = steering_doppler(est.doppler + offset, n_len);
    let col: Vec<C64> = (0..m_len).map(|m| spectrum[m] * b[m]).collect();
    let mut atom = Vec::with_capacity(m_len * n_len);
    for &vn in &v {
        atom.extend(col.iter().map(|&c| c * vn));
    }
    atom
}

/// Dictionary `Ψ` (MN × P) with one atom per estimate.
pub fn dictionary(estimates: &[PathEstimate], spectrum: &[C64], dims: &SystemDims, pilot: &PilotConfig) -> Mat<C64> {
    let atoms: Vec<Vec<C64>> = estimates
        .iter()
        .map(|e| dictionary_atom(e, spectrum, dims, pilot))
        .collect();
    Mat::from_fn(dims.frame_len(), estimates.len(), |i, j| atoms[j][i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainFit {
    pub estimates: Vec<PathEstimate>,
    /// 2-norm condition number of the dictionary.
    pub condition: f64,
    pub ill_posed: bool,
}

/// `ĥ = argmin ‖vec(R_TF) − Ψ h‖₂`. Solved by QR; an ill-posed dictionary
/// falls back to a truncated SVD pseudo-inverse.
pub fn ls_gains(grid: &TfPilotGrid, estimates: &[PathEstimate], dims: &SystemDims, pilot: &PilotConfig) -> Result<GainFit> {
    if estimates.is_empty() {
        return Err(invalid("gain fit needs at least one path estimate"));
    }
    let (m_len, n_len) = (dims.delay_bins, dims.doppler_bins);
    if grid.grid.nrows() != m_len || grid.grid.ncols() != n_len {
        return Err(invalid("grid shape differs from M x N"));
    }
    let psi = dictionary(estimates, &grid.spectrum, dims, pilot);
    let r = Mat::from_fn(m_len * n_len, 1, |i, _| grid.grid[(i % m_len, i / m_len)]);

    let svd = thin_svd(psi.as_ref())?;
    let smax = svd.s[0];
    let smin = *svd.s.last().unwrap();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let ill_posed = condition.is_nan() || condition > GAIN_CONDITION_LIMIT;

    let h: Vec<C64> = if ill_posed {
        let cut = smax / GAIN_CONDITION_LIMIT;
        let uhr = svd.u.adjoint() * &r;
        (0..estimates.len())
            .map(|i| {
                (0..svd.s.len())
                    .filter(|&k| svd.s[k] > cut)
                    .map(|k| svd.v[(i, k)] * uhr[(k, 0)] / svd.s[k])
                    .sum()
            })
            .collect()
    } else {
        let sol = lstsq(psi.as_ref(), r.as_ref());
        (0..estimates.len()).map(|i| sol[(i, 0)]).collect()
    };

    Ok(GainFit {
        estimates: estimates
            .iter()
            .zip(h)
            .map(|(e, g)| PathEstimate { gain: g, ..*e })
            .collect(),
        condition,
        ill_posed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::DDPath;
    use crate::synthesis::{tf_pilot_response, Scenario};
    use crate::pilot::pilot_spectrum;

    fn setup() -> (SystemDims, PilotConfig) {
        (
            SystemDims::new(32, 64, 4.0, 6.0).unwrap(),
            PilotConfig {
                zc_len: 8,
                cp_len: 4,
                zc_root: 1,
                users: 4,
            },
        )
    }

    fn scenario(users: Vec<Vec<DDPath>>) -> Scenario {
        let (dims, pilot) = setup();
        Scenario {
            dims,
            pilot,
            users,
            seed: 0,
        }
    }

    fn truth_estimates(s: &Scenario) -> Vec<PathEstimate> {
        s.users
            .iter()
            .enumerate()
            .flat_map(|(q, ps)| ps.iter().map(move |p| PathEstimate::new(q, p.delay, p.doppler)))
            .collect()
    }

    fn multi() -> Scenario {
        scenario(vec![
            vec![DDPath::new(C64::new(0.8, -0.3), 1.3, 0.7), DDPath::new(C64::new(-0.2, 0.5), 2.6, -1.9)],
            vec![DDPath::new(C64::new(0.1, 0.9), 0.4, 2.2)],
            vec![DDPath::new(C64::new(-0.6, -0.6), 2.9, -0.25)],
            vec![DDPath::new(C64::new(0.3, 0.0), 0.0, 1.0), DDPath::new(C64::new(0.0, -0.7), 1.75, -2.4)],
        ])
    }

    #[test]
    fn zero_parameter_atom_is_pilot_times_tone() {
        let (dims, pilot) = setup();
        let x = pilot_spectrum(&pilot, 32).unwrap();
        let a = dictionary_atom(&PathEstimate::new(2, 0.0, 0.0), &x, &dims, &pilot);
        let k = doppler_index(2, 64, 4) as f64;
        let tone = steering_doppler(k, 64);
        for n in 0..64 {
            for m in 0..32 {
                assert!((a[n * 32 + m] - x[m] * tone[n]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn atom_equals_single_path_grid() {
        let (dims, pilot) = setup();
        let filler = || vec![DDPath::new(C64::new(0.0, 0.0), 0.0, 0.0)];
        let s = scenario(vec![filler(), vec![DDPath::new(C64::new(1.0, 0.0), 2.3, -1.7)], filler(), filler()]);
        let g = tf_pilot_response(&s).unwrap();
        let a = dictionary_atom(&PathEstimate::new(1, 2.3, -1.7), &g.spectrum, &dims, &pilot);
        for i in 0..a.len() {
            assert!((a[i] - g.grid[(i % 32, i / 32)]).norm() < 1e-12);
        }
        let b = dictionary_atom(&PathEstimate::new(1, 2.3, -1.7), &g.spectrum, &dims, &pilot);
        assert_eq!(a, b);
    }

    #[test]
    fn exact_parameters_give_exact_gains() {
        let s = multi();
        let g = tf_pilot_response(&s).unwrap();
        let fit = ls_gains(&g, &truth_estimates(&s), &s.dims, &s.pilot).unwrap();
        assert!(!fit.ill_posed);
        for (e, p) in fit.estimates.iter().zip(s.all_paths()) {
            assert!((e.gain - p.gain).norm() < 1e-10);
        }
    }

    #[test]
    fn gains_scale_linearly() {
        let s = scenario(vec![
            vec![DDPath::new(C64::new(0.5, 0.2), 1.1, 0.4)],
            vec![DDPath::new(C64::new(0.0, 0.0), 0.0, 0.0)],
            vec![DDPath::new(C64::new(0.0, 0.0), 0.0, 0.0)],
            vec![DDPath::new(C64::new(0.0, 0.0), 0.0, 0.0)],
        ]);
        let g = tf_pilot_response(&s).unwrap();
        let est = [PathEstimate::new(0, 1.1, 0.4)];
        let c = C64::new(-1.5, 2.0);
        let a = ls_gains(&g, &est, &s.dims, &s.pilot).unwrap();
        let b = ls_gains(&g.scaled(c), &est, &s.dims, &s.pilot).unwrap();
        assert!((b.estimates[0].gain - c * a.estimates[0].gain).norm() < 1e-12);
    }

    #[test]
    fn spurious_far_path_gets_no_gain() {
        let s = scenario(vec![
            vec![DDPath::new(C64::new(0.7, -0.4), 1.6, 1.2)],
            vec![DDPath::new(C64::new(0.0, 0.0), 0.0, 0.0)],
            vec![DDPath::new(C64::new(0.0, 0.0), 0.0, 0.0)],
            vec![DDPath::new(C64::new(0.0, 0.0), 0.0, 0.0)],
        ]);
        let g = tf_pilot_response(&s).unwrap();
        let est = [PathEstimate::new(0, 1.6, 1.2), PathEstimate::new(2, 20.0, -2.5)];
        let fit = ls_gains(&g, &est, &s.dims, &s.pilot).unwrap();
        assert!((fit.estimates[0].gain - C64::new(0.7, -0.4)).norm() < 1e-10);
        assert!(fit.estimates[1].gain.norm() < 1e-8);
    }

    #[test]
    fn residual_orthogonal_to_dictionary() {
        let s = multi();
        let mut g = tf_pilot_response(&s).unwrap();
        let mut rng = crate::synthesis::rng_for(5, 0);
        g = crate::synthesis::add_noise(&g, 10.0, &mut rng);
        let est: Vec<PathEstimate> = truth_estimates(&s)
            .into_iter()
            .map(|e| PathEstimate::new(e.user, e.delay + 0.05, e.doppler - 0.03))
            .collect();
        let fit = ls_gains(&g, &est, &s.dims, &s.pilot).unwrap();
        let psi = dictionary(&est, &g.spectrum, &s.dims, &s.pilot);
        let h = Mat::from_fn(est.len(), 1, |i, _| fit.estimates[i].gain);
        let r = Mat::from_fn(32 * 64, 1, |i, _| g.grid[(i % 32, i / 32)]);
        let resid = &r - &psi * &h;
        let proj = psi.adjoint() * &resid;
        let rnorm = r.norm_l2();
        for i in 0..est.len() {
            assert!(proj[(i, 0)].norm() < 1e-8 * rnorm);
        }
    }

    #[test]
    fn duplicate_atoms_flagged() {
        let s = multi();
        let g = tf_pilot_response(&s).unwrap();
        let est = [PathEstimate::new(0, 1.3, 0.7), PathEstimate::new(0, 1.3, 0.7)];
        let fit = ls_gains(&g, &est, &s.dims, &s.pilot).unwrap();
        assert!(fit.ill_posed);
        assert!(fit.estimates.iter().all(|e| e.gain.re.is_finite() && e.gain.im.is_finite()));
        assert!(ls_gains(&g, &[], &s.dims, &s.pilot).is_err());
    }
}
