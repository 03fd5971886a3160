use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{EstimatorKind, SimConfig, Snr};
use crate::error::Result;
use crate::gains::{ls_gains, Flag, PathEstimate};
use crate::metrics::{channel_error_sq, match_paths, pair_errors, rmse_params, ErrorPool, MatchResult, PairError};
use crate::mp::run_mp;
use crate::synthesis::{add_noise, random_scenario, rng_for, tf_pilot_response, Scenario};
use crate::wmusic::run_wmusic;

pub const CSV_HEADER: &str = "snr_db,estimator,rmse_delay,rmse_doppler,rmse_gain,rmse_channel,miss_rate,trials";

const NOISE_KEY: u64 = 0x6e6f_6973_655f_6b65;

/// How trials are scheduled. Results do not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon data-parallel over trials; `None` uses the global pool. Without
    /// the `parallel` feature this runs sequentially.
    Parallel { threads: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimator: EstimatorKind,
    pub estimates: Vec<PathEstimate>,
    pub matches: MatchResult,
    pub errors: Vec<PairError>,
    /// `‖H − Ĥ‖_F² / MN`; absent when the estimator failed.
    pub channel_error_sq: Option<f64>,
    pub flags: Vec<Flag>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub snr_db: Snr,
    /// Ground truth; `scenario.seed` is the global seed, the trial index
    /// selects the stream.
    pub scenario: Scenario,
    pub estimators: Vec<EstimatorReport>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn run_estimator(kind: EstimatorKind, cfg: &SimConfig, scenario: &Scenario, grid: &crate::synthesis::TfPilotGrid) -> EstimatorReport {
    let p_tot = scenario.total_paths();
    let (dims, pilot) = (&cfg.system, &cfg.pilot);
    let raw = match kind {
        EstimatorKind::Wmusic => run_wmusic(grid, dims, pilot, &cfg.wmusic, p_tot),
        EstimatorKind::Mp => run_mp(grid, dims, pilot, &cfg.mp, p_tot),
    };
    let result = raw.and_then(|mut out| {
        if !out.estimates.is_empty() {
            let fit = ls_gains(grid, &out.estimates, dims, pilot)?;
            if fit.ill_posed {
                out.flags.push(Flag::IllPosedGains { condition: fit.condition });
            }
            out.estimates = fit.estimates;
        }
        Ok(out)
    });
    match result {
        Ok(out) => {
            let matches = match_paths(scenario, &out.estimates);
            EstimatorReport {
                estimator: kind,
                errors: pair_errors(scenario, &out.estimates, &matches),
                channel_error_sq: Some(channel_error_sq(scenario, &out.estimates, dims)),
                estimates: out.estimates,
                matches,
                flags: out.flags,
                failure: None,
            }
        }
        Err(e) => EstimatorReport {
            estimator: kind,
            estimates: Vec::new(),
            matches: match_paths(scenario, &[]),
            errors: Vec::new(),
            channel_error_sq: None,
            flags: Vec::new(),
            failure: Some(e.to_string()),
        },
    }
}

/// One Monte-Carlo trial. The scenario depends only on `(seed, trial)`, the
/// noise on `(seed, trial, snr)`.
pub fn run_trial(cfg: &SimConfig, snr: Snr, trial: usize) -> Result<TrialReport> {
    let seed = cfg.sweep.seed;
    let mut scenario = random_scenario(&cfg.system, &cfg.pilot, &mut rng_for(seed, trial as u64), &cfg.constraints())?;
    scenario.seed = seed;
    let clean = tf_pilot_response(&scenario)?;
    let stream = mix(snr.0.to_bits() ^ mix(trial as u64));
    let grid = add_noise(&clean, snr.0, &mut rng_for(seed ^ NOISE_KEY, stream));
    let estimators = cfg
        .sweep
        .estimators
        .iter()
        .map(|&k| run_estimator(k, cfg, &scenario, &grid))
        .collect();
    Ok(TrialReport {
        trial,
        snr_db: snr,
        scenario,
        estimators,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub snr_db: Snr,
    pub estimator: EstimatorKind,
    /// `None` when no pair was matched at this SNR point.
    pub rmse_delay: Option<f64>,
    pub rmse_doppler: Option<f64>,
    pub rmse_gain: Option<f64>,
    pub rmse_channel: Option<f64>,
    pub miss_rate: f64,
    pub trials: usize,
    /// Trials in which the estimator returned an error.
    pub failures: usize,
    /// Trials that raised at least one flag.
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, snr: Snr, estimator: EstimatorKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.snr_db == snr && r.estimator == estimator)
    }
}

fn map_trials<T: Send>(count: usize, exec: Execution, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    match exec {
        Execution::Sequential => Ok((0..count).map(f).collect()),
        #[cfg(feature = "parallel")]
        Execution::Parallel { threads } => {
            use rayon::prelude::*;
            let run = || (0..count).into_par_iter().map(&f).collect::<Vec<T>>();
            match threads {
                Some(k) => {
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(k.max(1))
                        .build()
                        .map_err(|e| crate::error::invalid(format!("thread pool: {e}")))?;
                    Ok(pool.install(run))
                }
                None => Ok(run()),
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel { .. } => Ok((0..count).map(f).collect()),
    }
}

/// Runs every `(SNR point, trial)` and pools errors per SNR point and
/// estimator. Per-trial results are collected in index order before pooling,
/// so the output is bitwise independent of `exec`.
pub fn run_sweep(cfg: &SimConfig, exec: Execution) -> Result<SweepTable> {
    cfg.validate()?;
    let points = &cfg.sweep.snr_points_db;
    let trials = cfg.sweep.trials;
    let reports = map_trials(points.len() * trials, exec, |i| run_trial(cfg, points[i / trials], i % trials))?;

    let kinds = &cfg.sweep.estimators;
    let mut rows = Vec::with_capacity(points.len() * kinds.len());
    for (si, &snr) in points.iter().enumerate() {
        for (ki, &kind) in kinds.iter().enumerate() {
            let mut pool = ErrorPool::default();
            let (mut failures, mut flagged) = (0, 0);
            for report in &reports[si * trials..(si + 1) * trials] {
                let report = report.as_ref().map_err(|e| crate::error::invalid(e.to_string()))?;
                let er = &report.estimators[ki];
                pool.truths += report.scenario.total_paths();
                pool.misses += er.matches.misses.len();
                pool.add_pairs(&er.errors);
                match er.channel_error_sq {
                    Some(c) if c.is_finite() => pool.add_channel(c),
                    _ => failures += 1,
                }
                if !er.flags.is_empty() {
                    flagged += 1;
                }
            }
            let params = rmse_params(&pool).ok();
            rows.push(SweepRow {
                snr_db: snr,
                estimator: kind,
                rmse_delay: params.map(|p| p.delay),
                rmse_doppler: params.map(|p| p.doppler),
                rmse_gain: params.map(|p| p.gain),
                rmse_channel: pool.rmse_channel(),
                miss_rate: pool.miss_rate(),
                trials,
                failures,
                flagged,
            });
        }
    }
    Ok(SweepTable { rows })
}

/// Header plus one line per row; undefined RMSEs are left empty.
pub fn write_csv<W: Write>(table: &SweepTable, mut w: W) -> std::io::Result<()> {
    let cell = |v: Option<f64>| v.filter(|x| x.is_finite()).map(|x| format!("{x:e}")).unwrap_or_default();
    writeln!(w, "{CSV_HEADER}")?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{:e},{}",
            r.snr_db,
            r.estimator.name(),
            cell(r.rmse_delay),
            cell(r.rmse_doppler),
            cell(r.rmse_gain),
            cell(r.rmse_channel),
            r.miss_rate,
            r.trials
        )?;
    }
    Ok(())
}
