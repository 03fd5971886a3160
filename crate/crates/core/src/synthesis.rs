//! Ground-truth scenarios and the TF-domain pilot observation they produce.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dd::{steering_delay, steering_doppler, DDPath, SystemDims};
use crate::error::{invalid, Error, Result};
use crate::linalg::{C64, TAU};
use crate::pilot::{pilot_spectrum, PilotConfig};

/// System, pilot and per-user path lists.
///
/// Serialized as a flat JSON object:
/// `{M, N, Q, M_ZC, M_CP, zc_root, ell_max, kappa_max, users, seed}` where
/// `users[q]` is a list of `{re, im, delay, doppler}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub dims: SystemDims,
    #[serde(flatten)]
    pub pilot: PilotConfig,
    pub users: Vec<Vec<DDPath>>,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.pilot.validate(&self.dims)?;
        if self.users.len() != self.pilot.users {
            return Err(invalid(format!(
                "users list has {} entries, Q = {}",
                self.users.len(),
                self.pilot.users
            )));
        }
        for (q, paths) in self.users.iter().enumerate() {
            if paths.is_empty() {
                return Err(invalid(format!("user {q} needs P_q >= 1 paths")));
            }
            for p in paths {
                p.validate(&self.dims)?;
            }
        }
        Ok(())
    }

    /// `P_tot`.
    pub fn total_paths(&self) -> usize {
        self.users.iter().map(Vec::len).sum()
    }

    /// All paths flattened in user order.
    pub fn all_paths(&self) -> impl Iterator<Item = &DDPath> {
        self.users.iter().flatten()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// TF-domain pilot observation `R_TF` (M×N) with the pilot spectrum used to
/// build it.
#[derive(Debug, Clone)]
pub struct TfPilotGrid {
    pub grid: Mat<C64>,
    pub spectrum: Vec<C64>,
    pub noise_variance: f64,
}

impl TfPilotGrid {
    /// Mean `|R_TF[m,n]|²` over the whole grid.
    pub fn mean_power(&self) -> f64 {
        let (m, n) = (self.grid.nrows(), self.grid.ncols());
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..m {
                acc += self.grid[(i, j)].norm_sqr();
            }
        }
        acc / (m * n) as f64
    }

    /// Multiplies the observation by `c`.
    pub fn scaled(&self, c: C64) -> Self {
        Self {
            grid: Mat::from_fn(self.grid.nrows(), self.grid.ncols(), |i, j| self.grid[(i, j)] * c),
            spectrum: self.spectrum.clone(),
            noise_variance: self.noise_variance * c.norm_sqr(),
        }
    }
}

/// Adds `h · (x_f ⊙ b_M(ell)) v_N(kappa + k)^T` into `grid`.
pub(crate) fn accumulate_path(grid: &mut Mat<C64>, spectrum: &[C64], path: &DDPath, offset: usize) {
    let (m_len, n_len) = (grid.nrows(), grid.ncols());
    let b = steering_delay(path.delay, m_len);
    let v = steering_doppler(path.doppler + offset as f64, n_len);
    let col: Vec<C64> = (0..m_len).map(|m| path.gain * spectrum[m] * b[m]).collect();
    for (n, &vn) in v.iter().enumerate() {
        for (m, &c) in col.iter().enumerate() {
            grid[(m, n)] += c * vn;
        }
    }
}

/// Noiseless `R_TF = Σ_q Σ_i h X_f b_M(ell) v_N^T(kappa + k^q)`.
pub fn tf_pilot_response(scenario: &Scenario) -> Result<TfPilotGrid> {
    scenario.validate()?;
    let dims = &scenario.dims;
    let spectrum = pilot_spectrum(&scenario.pilot, dims.delay_bins)?;
    let offsets = scenario.pilot.doppler_indices(dims);
    let mut grid = Mat::<C64>::zeros(dims.delay_bins, dims.doppler_bins);
    for (q, paths) in scenario.users.iter().enumerate() {
        for p in paths {
            accumulate_path(&mut grid, &spectrum, p, offsets[q]);
        }
    }
    Ok(TfPilotGrid {
        grid,
        spectrum,
        noise_variance: 0.0,
    })
}

/// Adds i.i.d. `CN(0, σ²)` noise with `σ² = mean|R_TF|² / 10^(snr_db/10)`.
/// `snr_db = +inf` returns the grid unchanged.
pub fn add_noise<R: Rng + ?Sized>(grid: &TfPilotGrid, snr_db: f64, rng: &mut R) -> TfPilotGrid {
    if snr_db == f64::INFINITY {
        return grid.clone();
    }
    let sigma2 = grid.mean_power() / 10f64.powf(snr_db / 10.0);
    let std = (sigma2 / 2.0).sqrt();
    let (m, n) = (grid.grid.nrows(), grid.grid.ncols());
    let mut noisy = grid.grid.clone();
    for j in 0..n {
        for i in 0..m {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            noisy[(i, j)] += C64::new(re * std, im * std);
        }
    }
    TfPilotGrid {
        grid: noisy,
        spectrum: grid.spectrum.clone(),
        noise_variance: grid.noise_variance + sigma2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConstraints {
    /// Minimum Doppler separation between paths of the same user (bins).
    pub min_doppler_sep: f64,
    pub max_paths_per_user: usize,
    /// Total redraw budget for one scenario.
    pub max_attempts: usize,
}

impl Default for ScenarioConstraints {
    fn default() -> Self {
        Self {
            min_doppler_sep: 0.3,
            max_paths_per_user: 3,
            max_attempts: 10_000,
        }
    }
}

/// Draws a scenario: `P_q` uniform on `1..=max_paths_per_user`, `|h|` uniform
/// on (0,1] with uniform phase, delay uniform on `[0, ell_max-1]`, Doppler
/// uniform on `[-kappa_max/2, kappa_max/2]`. Same-user Dopplers closer than
/// `min_doppler_sep` are redrawn.
pub fn random_scenario<R: Rng + ?Sized>(
    dims: &SystemDims,
    pilot: &PilotConfig,
    rng: &mut R,
    constraints: &ScenarioConstraints,
) -> Result<Scenario> {
    dims.validate()?;
    pilot.validate(dims)?;
    let max_paths = constraints.max_paths_per_user.max(1);
    let half = dims.kappa_max / 2.0;
    let mut attempts = 0usize;
    let mut users = Vec::with_capacity(pilot.users);
    for _ in 0..pilot.users {
        let count = rng.random_range(1..=max_paths);
        let mut paths: Vec<DDPath> = Vec::with_capacity(count);
        while paths.len() < count {
            let mag = 1.0 - rng.random::<f64>();
            let phase = TAU * rng.random::<f64>();
            let delay = rng.random_range(0.0..=dims.ell_max - 1.0);
            let doppler = loop {
                attempts += 1;
                if attempts > constraints.max_attempts {
                    return Err(Error::RejectionLimit {
                        attempts: constraints.max_attempts,
                    });
                }
                let k = rng.random_range(-half..=half);
                if paths
                    .iter()
                    .all(|p| (p.doppler - k).abs() >= constraints.min_doppler_sep)
                {
                    break k;
                }
            };
            paths.push(DDPath::new(C64::from_polar(mag, phase), delay, doppler));
        }
        users.push(paths);
    }
    Ok(Scenario {
        dims: *dims,
        pilot: *pilot,
        users,
        seed: 0,
    })
}

/// Independent deterministic stream `stream` under the global `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilot::doppler_index;

    fn sec5() -> (SystemDims, PilotConfig) {
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
        let (dims, pilot) = sec5();
        Scenario {
            dims,
            pilot,
            users,
            seed: 7,
        }
    }

    fn one() -> C64 {
        C64::new(1.0, 0.0)
    }

    fn filler() -> Vec<DDPath> {
        vec![DDPath::new(C64::new(0.0, 0.0), 0.0, 0.0)]
    }

    /// Triple-loop evaluation of the TF model, independent of the vector path.
    fn scalar_oracle(s: &Scenario, spectrum: &[C64]) -> Mat<C64> {
        let (m_len, n_len) = (s.dims.delay_bins, s.dims.doppler_bins);
        Mat::from_fn(m_len, n_len, |m, n| {
            let mut acc = C64::new(0.0, 0.0);
            for (q, paths) in s.users.iter().enumerate() {
                let k = doppler_index(q, n_len, s.pilot.users) as f64;
                for p in paths {
                    let ph = -TAU * m as f64 * p.delay / m_len as f64
                        + TAU * n as f64 * (p.doppler + k) / n_len as f64;
                    acc += p.gain * spectrum[m] * C64::from_polar(1.0, ph);
                }
            }
            acc
        })
    }

    fn max_diff(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
            }
        }
        worst
    }

    #[test]
    fn single_zero_path_is_pilot_tone() {
        let s = scenario(vec![vec![DDPath::new(one(), 0.0, 0.0)], filler(), filler(), filler()]);
        let r = tf_pilot_response(&s).unwrap();
        assert_eq!(r.noise_variance, 0.0);
        for n in 0..64 {
            let tone = C64::from_polar(1.0, TAU * n as f64 * 8.0 / 64.0);
            for m in 0..32 {
                assert!((r.grid[(m, n)] - r.spectrum[m] * tone).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn superposition_and_scalar_oracle() {
        let a = DDPath::new(C64::new(0.4, -0.3), 1.25, -2.2);
        let b = DDPath::new(C64::new(-0.1, 0.8), 2.9, 1.7);
        let c = DDPath::new(C64::new(0.6, 0.1), 0.3, 0.45);
        let both = scenario(vec![vec![a, b], vec![c], filler(), filler()]);
        let ra = tf_pilot_response(&scenario(vec![vec![a], filler(), filler(), filler()])).unwrap();
        let rb = tf_pilot_response(&scenario(vec![vec![b], filler(), filler(), filler()])).unwrap();
        let rc = tf_pilot_response(&scenario(vec![filler(), vec![c], filler(), filler()])).unwrap();
        let rab = tf_pilot_response(&both).unwrap();
        let sum = &ra.grid + &rb.grid + &rc.grid;
        assert!(max_diff(&rab.grid, &sum) < 1e-12);
        assert!(max_diff(&rab.grid, &scalar_oracle(&both, &rab.spectrum)) < 1e-11);
    }

    #[test]
    fn zero_doppler_leaves_only_pilot_tones() {
        let mut rng = rng_for(3, 0);
        let (dims, pilot) = sec5();
        let mut s = random_scenario(&dims, &pilot, &mut rng, &ScenarioConstraints::default()).unwrap();
        for p in s.users.iter_mut().flatten() {
            p.doppler = 0.0;
        }
        for q in 0..4 {
            let mut only = s.clone();
            for (u, paths) in only.users.iter_mut().enumerate() {
                if u != q {
                    for p in paths.iter_mut() {
                        p.gain = C64::new(0.0, 0.0);
                    }
                }
            }
            let r = tf_pilot_response(&only).unwrap();
            let k = doppler_index(q, 64, 4) as f64;
            for n in 1..64 {
                let ratio = C64::from_polar(1.0, TAU * n as f64 * k / 64.0);
                for m in 0..32 {
                    assert!((r.grid[(m, n)] - r.grid[(m, 0)] * ratio).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn infinite_snr_is_identity() {
        let s = scenario(vec![vec![DDPath::new(one(), 1.0, 0.5)], filler(), filler(), filler()]);
        let r = tf_pilot_response(&s).unwrap();
        let n = add_noise(&r, f64::INFINITY, &mut rng_for(1, 1));
        assert_eq!(n.noise_variance, 0.0);
        assert_eq!(max_diff(&r.grid, &n.grid), 0.0);
    }

    #[test]
    fn noise_moments() {
        // 100 grids × 2048 entries ≈ 2·10^5 draws
        let s = scenario(vec![vec![DDPath::new(one(), 1.0, 0.5)], filler(), filler(), filler()]);
        let r = tf_pilot_response(&s).unwrap();
        let mut rng = rng_for(11, 0);
        let (mut p, mut pr, mut pi, mut count, mut sigma2) = (0.0, 0.0, 0.0, 0usize, 0.0);
        for _ in 0..100 {
            let n = add_noise(&r, 10.0, &mut rng);
            sigma2 = n.noise_variance;
            for j in 0..64 {
                for i in 0..32 {
                    let w = n.grid[(i, j)] - r.grid[(i, j)];
                    p += w.norm_sqr();
                    pr += w.re * w.re;
                    pi += w.im * w.im;
                    count += 1;
                }
            }
        }
        let c = count as f64;
        assert!((sigma2 - r.mean_power() / 10.0).abs() < 1e-12);
        assert!((p / c / sigma2 - 1.0).abs() < 0.02);
        assert!((pr / c / (sigma2 / 2.0) - 1.0).abs() < 0.02);
        assert!((pi / c / (sigma2 / 2.0) - 1.0).abs() < 0.02);
    }

    /// One-sample Kolmogorov-Smirnov statistic against U(lo, hi).
    fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn raw_draw_distributions() {
        let (dims, pilot) = sec5();
        let cons = ScenarioConstraints {
            min_doppler_sep: 0.0,
            ..Default::default()
        };
        let mut rng = rng_for(5, 0);
        let (mut delays, mut dops, mut mags, mut phases, mut counts) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), [0usize; 3]);
        while delays.len() < 10_000 {
            let s = random_scenario(&dims, &pilot, &mut rng, &cons).unwrap();
            for paths in &s.users {
                counts[paths.len() - 1] += 1;
                for p in paths {
                    delays.push(p.delay);
                    dops.push(p.doppler);
                    mags.push(p.gain.norm());
                    phases.push(p.gain.arg().rem_euclid(TAU));
                }
            }
        }
        // 1.95/sqrt(n): alpha = 0.001 critical value
        let crit = 1.95 / (delays.len() as f64).sqrt();
        assert!(ks_uniform(delays, 0.0, 3.0) < crit);
        assert!(ks_uniform(dops, -3.0, 3.0) < crit);
        assert!(ks_uniform(mags, 0.0, 1.0) < crit);
        assert!(ks_uniform(phases, 0.0, TAU) < crit);
        let total: usize = counts.iter().sum();
        for c in counts {
            assert!((c as f64 / total as f64 - 1.0 / 3.0).abs() < 0.03);
        }
    }

    #[test]
    fn separation_and_ranges() {
        let (dims, pilot) = sec5();
        let mut rng = rng_for(9, 2);
        for _ in 0..500 {
            let s = random_scenario(&dims, &pilot, &mut rng, &ScenarioConstraints::default()).unwrap();
            assert!(s.validate().is_ok());
            for paths in &s.users {
                assert!((1..=3).contains(&paths.len()));
                for (i, a) in paths.iter().enumerate() {
                    assert!((0.0..=3.0).contains(&a.delay));
                    assert!((-3.0..=3.0).contains(&a.doppler));
                    assert!(a.gain.norm() > 0.0 && a.gain.norm() <= 1.0);
                    for b in &paths[i + 1..] {
                        assert!((a.doppler - b.doppler).abs() >= 0.3);
                    }
                }
            }
        }
    }

    #[test]
    fn rejection_limit() {
        let (dims, pilot) = sec5();
        let cons = ScenarioConstraints {
            min_doppler_sep: 10.0,
            max_paths_per_user: 3,
            max_attempts: 200,
        };
        let mut rng = rng_for(1, 0);
        let mut hit = false;
        for _ in 0..20 {
            if let Err(Error::RejectionLimit { .. }) = random_scenario(&dims, &pilot, &mut rng, &cons) {
                hit = true;
                break;
            }
        }
        assert!(hit);
    }

    #[test]
    fn determinism_and_json_round_trip() {
        let (dims, pilot) = sec5();
        let cons = ScenarioConstraints::default();
        let a = random_scenario(&dims, &pilot, &mut rng_for(42, 3), &cons).unwrap();
        let b = random_scenario(&dims, &pilot, &mut rng_for(42, 3), &cons).unwrap();
        assert_eq!(a, b);
        let ra = add_noise(&tf_pilot_response(&a).unwrap(), 5.0, &mut rng_for(42, 4));
        let rb = add_noise(&tf_pilot_response(&b).unwrap(), 5.0, &mut rng_for(42, 4));
        assert_eq!(max_diff(&ra.grid, &rb.grid), 0.0);

        let json = a.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["M", "N", "Q", "M_ZC", "M_CP", "zc_root", "ell_max", "kappa_max", "users", "seed"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["users"][0][0].get("re").is_some());
        assert_eq!(Scenario::from_json(&json).unwrap(), a);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut s = scenario(vec![vec![DDPath::new(one(), 0.0, 0.0)], filler(), filler(), filler()]);
        s.users[1].clear();
        assert!(tf_pilot_response(&s).is_err());
        s.users.pop();
        assert!(s.validate().is_err());
    }
}
