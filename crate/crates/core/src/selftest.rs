//! Operator and pipeline invariant checks, runnable outside the test harness
//! (the CLI `selftest` subcommand uses them).

use faer::Mat;
use rand::Rng;

use crate::dd::{delay_operator, delay_operator_diag, kron, steering_delay, steering_doppler, SystemDims};
use crate::gains::{dictionary, ls_gains, PathEstimate};
use crate::harness::{run_sweep, write_csv, Execution, SimConfig, Snr};
use crate::linalg::C64;
use crate::metrics::{match_cost, match_paths};
use crate::pilot::zc_sequence;
use crate::synthesis::{add_noise, random_scenario, rng_for, tf_pilot_response, Scenario};
use crate::wmusic::{covariance_and_noise_subspace, snapshots};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn bound(name: &'static str, value: f64, limit: f64) -> Self {
        Check {
            name,
            passed: value.is_finite() && value < limit,
            detail: format!("{value:.3e} < {limit:.0e}"),
        }
    }

    fn failed(name: &'static str, err: impl std::fmt::Display) -> Self {
        Check {
            name,
            passed: false,
            detail: err.to_string(),
        }
    }
}

fn small_dims() -> SystemDims {
    SystemDims::new(8, 16, 4.0, 6.0).expect("valid dims")
}

fn max_dev_from(a: &Mat<C64>, f: impl Fn(usize, usize) -> C64) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - f(i, j)).norm());
        }
    }
    worst
}

/// `‖Π^ℓ^H Π^ℓ − I‖_max` over a few fractional delays.
pub fn delay_operator_unitarity() -> Check {
    let d = small_dims();
    let worst = [0.0, 0.37, 1.5, 2.91]
        .iter()
        .map(|&ell| {
            let p = delay_operator(ell, &d);
            let g = p.adjoint() * &p;
            max_dev_from(&g, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
        })
        .fold(0.0, f64::max);
    Check::bound("delay operator unitarity", worst, 1e-10)
}

/// Integer `ℓ` makes `Π^ℓ` the cyclic shift by `ℓ`.
pub fn integer_shift_is_permutation() -> Check {
    let d = small_dims();
    let len = d.frame_len();
    let worst = (0..4usize)
        .map(|ell| {
            let p = delay_operator(ell as f64, &d);
            max_dev_from(&p, |i, j| if i == (j + ell) % len { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
        })
        .fold(0.0, f64::max);
    Check::bound("integer shift reduction", worst, 1e-10)
}

/// `B^a B^b = B^(a+b)` and `Π^a Π^b = Π^(a+b)`.
pub fn delay_semigroup() -> Check {
    let d = small_dims();
    let mut worst = 0.0f64;
    for (a, b) in [(0.3, 1.1), (1.75, 0.5), (2.2, 2.9)] {
        let (ba, bb, bab) = (delay_operator_diag(a, &d), delay_operator_diag(b, &d), delay_operator_diag(a + b, &d));
        for i in 0..ba.len() {
            worst = worst.max((ba[i] * bb[i] - bab[i]).norm());
        }
        let prod = delay_operator(a, &d) * delay_operator(b, &d);
        let sum = delay_operator(a + b, &d);
        worst = worst.max(max_dev_from(&prod, |i, j| sum[(i, j)]));
    }
    Check::bound("delay operator semigroup", worst, 1e-10)
}

/// Periodic autocorrelation of the ZC pilot vanishes off lag 0.
pub fn zc_autocorrelation() -> Check {
    let mut worst = 0.0f64;
    for (len, root) in [(8, 1), (8, 3), (13, 5), (31, 2)] {
        let x = match zc_sequence(len, root) {
            Ok(x) => x,
            Err(e) => return Check::failed("zc periodic autocorrelation", e),
        };
        for lag in 1..len {
            let r: C64 = (0..len).map(|n| x[n] * x[(n + lag) % len].conj()).sum();
            worst = worst.max(r.norm());
        }
    }
    Check::bound("zc periodic autocorrelation", worst, 1e-10)
}

fn reference_scenario(cfg: &SimConfig, trial: u64) -> crate::Result<Scenario> {
    random_scenario(&cfg.system, &cfg.pilot, &mut rng_for(cfg.sweep.seed, trial), &cfg.constraints())
}

/// Noiseless steering vectors of every true path are orthogonal to the
/// W-MUSIC noise basis, relative to their norm.
pub fn steering_orthogonality() -> Check {
    const NAME: &str = "noise subspace orthogonality";
    let cfg = SimConfig::reference();
    let run = || -> crate::Result<f64> {
        let mut worst = 0.0f64;
        for trial in 0..3 {
            let s = reference_scenario(&cfg, trial)?;
            let g = tf_pilot_response(&s)?;
            let snaps = snapshots(&g.grid, &cfg.wmusic)?;
            let st = covariance_and_noise_subspace(&snaps, s.total_paths(), cfg.wmusic.sub_delay)?;
            let offsets = s.pilot.doppler_indices(&s.dims);
            let (ms, ns) = (cfg.wmusic.sub_delay, cfg.wmusic.sub_doppler);
            for (q, paths) in s.users.iter().enumerate() {
                for p in paths {
                    let b = steering_delay(p.delay, s.dims.delay_bins);
                    let xb: Vec<C64> = (0..ms).map(|m| g.spectrum[m] * b[m]).collect();
                    let v = steering_doppler(p.doppler + offsets[q] as f64, s.dims.doppler_bins);
                    let sv = kron(&v[..ns], &xb);
                    let norm = sv.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                    for c in 0..st.noise_basis.ncols() {
                        let dot: C64 = (0..sv.len()).map(|r| st.noise_basis[(r, c)].conj() * sv[r]).sum();
                        worst = worst.max(dot.norm() / norm);
                    }
                }
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => Check::bound(NAME, w, 1e-8),
        Err(e) => Check::failed(NAME, e),
    }
}

/// The LS gain residual is orthogonal to every dictionary atom.
pub fn ls_residual_orthogonality() -> Check {
    const NAME: &str = "ls gain residual orthogonality";
    let cfg = SimConfig::reference();
    let run = || -> crate::Result<f64> {
        let mut worst = 0.0f64;
        let mut rng = rng_for(cfg.sweep.seed ^ 0x5eed, 0);
        for trial in 0..3 {
            let s = reference_scenario(&cfg, trial)?;
            let g = add_noise(&tf_pilot_response(&s)?, 10.0, &mut rng_for(7, trial));
            let est: Vec<PathEstimate> = s
                .users
                .iter()
                .enumerate()
                .flat_map(|(q, u)| u.iter().map(move |p| (q, *p)))
                .map(|(q, p)| PathEstimate::new(q, p.delay + rng.random_range(-0.1..0.1), p.doppler + rng.random_range(-0.1..0.1)))
                .collect();
            let fit = ls_gains(&g, &est, &s.dims, &s.pilot)?;
            let psi = dictionary(&est, &g.spectrum, &s.dims, &s.pilot);
            let m = s.dims.delay_bins;
            let r = Mat::from_fn(s.dims.frame_len(), 1, |i, _| g.grid[(i % m, i / m)]);
            let h = Mat::from_fn(est.len(), 1, |i, _| fit.estimates[i].gain);
            let resid = &r - &psi * &h;
            let proj = psi.adjoint() * &resid;
            let rnorm = r.norm_l2();
            for i in 0..proj.nrows() {
                worst = worst.max(proj[(i, 0)].norm() / rnorm);
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => Check::bound(NAME, w, 1e-8),
        Err(e) => Check::failed(NAME, e),
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Matching cost equals the exhaustive minimum over all permutations.
pub fn assignment_optimality() -> Check {
    let cfg = SimConfig::reference();
    let mut rng = rng_for(0xa55, 0);
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let s = match reference_scenario(&cfg, trial) {
            Ok(s) => s,
            Err(e) => return Check::failed("assignment optimality", e),
        };
        let est: Vec<PathEstimate> = s
            .users
            .iter()
            .enumerate()
            .flat_map(|(q, u)| u.iter().map(move |p| (q, *p)))
            .map(|(q, p)| PathEstimate::new(q, p.delay + rng.random_range(-1.5..1.5), p.doppler + rng.random_range(-1.5..1.5)))
            .collect();
        let m = match_paths(&s, &est);
        let mut best = 0.0;
        for (q, paths) in s.users.iter().enumerate() {
            let mine: Vec<&PathEstimate> = est.iter().filter(|e| e.user == q).collect();
            best += permutations(paths.len())
                .into_iter()
                .map(|perm| (0..paths.len()).map(|t| match_cost(&paths[t], mine[perm[t]], &s.dims)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
        }
        worst = worst.max((m.total_cost() - best).abs());
    }
    Check::bound("assignment optimality", worst, 1e-12)
}

/// Sweep CSVs are byte-identical across repeated runs and thread counts.
pub fn sweep_determinism() -> Check {
    const NAME: &str = "sweep determinism";
    let mut cfg = SimConfig::reference();
    cfg.sweep.snr_points_db = vec![Snr(5.0), Snr(25.0)];
    cfg.sweep.trials = 4;
    let csv = |exec| -> crate::Result<Vec<u8>> {
        let mut out = Vec::new();
        write_csv(&run_sweep(&cfg, exec)?, &mut out)?;
        Ok(out)
    };
    let runs = [
        Execution::Sequential,
        Execution::Sequential,
        Execution::Parallel { threads: Some(1) },
        Execution::Parallel { threads: Some(3) },
    ]
    .map(csv);
    let mut outputs = Vec::new();
    for r in runs {
        match r {
            Ok(v) => outputs.push(v),
            Err(e) => return Check::failed(NAME, e),
        }
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    Check {
        name: NAME,
        passed: same,
        detail: format!("{} runs, {} bytes, identical: {same}", outputs.len(), outputs[0].len()),
    }
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<Check> {
    vec![
        delay_operator_unitarity(),
        integer_shift_is_permutation(),
        delay_semigroup(),
        zc_autocorrelation(),
        steering_orthogonality(),
        ls_residual_orthogonality(),
        assignment_optimality(),
        sweep_determinism(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
