//! Estimate-to-truth matching and the RMSE figures reported by sweeps.

use serde::{Deserialize, Serialize};

use crate::dd::{channel_frobenius_sq, DDPath, SystemDims};
use crate::error::{Error, Result};
use crate::gains::PathEstimate;
use crate::linalg::wrap_centered;
use crate::synthesis::Scenario;

/// `(user, index within the user's path list)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathId {
    pub user: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub truth: PathId,
    /// Index into the estimate list.
    pub estimate: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub misses: Vec<PathId>,
    pub false_alarms: Vec<usize>,
}

impl MatchResult {
    pub fn total_cost(&self) -> f64 {
        self.pairs.iter().map(|p| p.cost).sum()
    }
}

/// `wrap_M(ℓ−ℓ̂)² + wrap_N(κ−κ̂)²`.
pub fn match_cost(truth: &DDPath, est: &PathEstimate, dims: &SystemDims) -> f64 {
    let dl = wrap_centered(truth.delay - est.delay, dims.delay_bins as f64);
    let dk = wrap_centered(truth.doppler - est.doppler, dims.doppler_bins as f64);
    dl * dl + dk * dk
}

/// Minimum-cost injective assignment of the smaller side into the larger one,
/// by exhaustive search. `cost[r][c]`; returns `assign[r] = c`.
fn best_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    fn go(
        row: usize,
        cost: &[Vec<f64>],
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        if acc >= best.0 {
            return;
        }
        if row == cost.len() {
            *best = (acc, cur.clone());
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                cur.push(c);
                go(row + 1, cost, used, cur, acc + cost[row][c], best);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let cols = cost.first().map_or(0, Vec::len);
    let mut best = (f64::INFINITY, Vec::new());
    go(0, cost, &mut vec![false; cols], &mut Vec::new(), 0.0, &mut best);
    best.1
}

/// Per-user minimum-cost matching between true paths and estimates. Every
/// user gets `min(P_q, #estimates of q)` pairs.
pub fn match_paths(truth: &Scenario, estimates: &[PathEstimate]) -> MatchResult {
    let dims = &truth.dims;
    let mut out = MatchResult::default();
    let mut claimed = vec![false; estimates.len()];
    for (q, paths) in truth.users.iter().enumerate() {
        let est_idx: Vec<usize> = (0..estimates.len()).filter(|&i| estimates[i].user == q).collect();
        let truth_rows = paths.len() <= est_idx.len();
        let (rows, cols) = if truth_rows {
            (paths.len(), est_idx.len())
        } else {
            (est_idx.len(), paths.len())
        };
        let cost: Vec<Vec<f64>> = (0..rows)
            .map(|r| {
                (0..cols)
                    .map(|c| {
                        let (t, e) = if truth_rows { (r, c) } else { (c, r) };
                        match_cost(&paths[t], &estimates[est_idx[e]], dims)
                    })
                    .collect()
            })
            .collect();
        let assign = if rows == 0 { Vec::new() } else { best_assignment(&cost) };
        let mut matched_truth = vec![false; paths.len()];
        for (r, &c) in assign.iter().enumerate() {
            let (t, e) = if truth_rows { (r, c) } else { (c, r) };
            matched_truth[t] = true;
            claimed[est_idx[e]] = true;
            out.pairs.push(MatchPair {
                truth: PathId { user: q, index: t },
                estimate: est_idx[e],
                cost: cost[r][c],
            });
        }
        out.misses.extend(
            (0..paths.len())
                .filter(|&t| !matched_truth[t])
                .map(|t| PathId { user: q, index: t }),
        );
    }
    out.false_alarms = (0..estimates.len()).filter(|&i| !claimed[i]).collect();
    out
}

/// Signed/complex errors of one matched pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairError {
    pub delay: f64,
    pub doppler: f64,
    /// `|h − ĥ|²`.
    pub gain_sq: f64,
}

pub fn pair_errors(truth: &Scenario, estimates: &[PathEstimate], matches: &MatchResult) -> Vec<PairError> {
    let dims = &truth.dims;
    matches
        .pairs
        .iter()
        .map(|p| {
            let t = &truth.users[p.truth.user][p.truth.index];
            let e = &estimates[p.estimate];
            PairError {
                delay: wrap_centered(t.delay - e.delay, dims.delay_bins as f64),
                doppler: wrap_centered(t.doppler - e.doppler, dims.doppler_bins as f64),
                gain_sq: (t.gain - e.gain).norm_sqr(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRmse {
    pub delay: f64,
    pub doppler: f64,
    pub gain: f64,
}

/// Pooled sums of squared parameter errors. Merging is associative and
/// commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorPool {
    pub pairs: usize,
    pub misses: usize,
    pub truths: usize,
    pub delay_sq: f64,
    pub doppler_sq: f64,
    pub gain_sq: f64,
    pub channel_sq: f64,
    pub channel_trials: usize,
}

impl ErrorPool {
    pub fn add_pairs(&mut self, errs: &[PairError]) {
        for e in errs {
            self.pairs += 1;
            self.delay_sq += e.delay * e.delay;
            self.doppler_sq += e.doppler * e.doppler;
            self.gain_sq += e.gain_sq;
        }
    }

    /// Adds one trial's `‖H − Ĥ‖_F² / MN`.
    pub fn add_channel(&mut self, normalized_sq: f64) {
        self.channel_sq += normalized_sq;
        self.channel_trials += 1;
    }

    pub fn merge(&mut self, other: &ErrorPool) {
        self.pairs += other.pairs;
        self.misses += other.misses;
        self.truths += other.truths;
        self.delay_sq += other.delay_sq;
        self.doppler_sq += other.doppler_sq;
        self.gain_sq += other.gain_sq;
        self.channel_sq += other.channel_sq;
        self.channel_trials += other.channel_trials;
    }

    pub fn miss_rate(&self) -> f64 {
        if self.truths == 0 {
            0.0
        } else {
            self.misses as f64 / self.truths as f64
        }
    }

    /// `sqrt(mean over trials of ‖H − Ĥ‖²/MN)`; `None` with no trials.
    pub fn rmse_channel(&self) -> Option<f64> {
        (self.channel_trials > 0).then(|| (self.channel_sq / self.channel_trials as f64).sqrt())
    }
}

/// `sqrt(Σ err² / P)` for each parameter over all pooled pairs.
pub fn rmse_params(pool: &ErrorPool) -> Result<ParamRmse> {
    if pool.pairs == 0 {
        return Err(Error::EmptyMatchSet);
    }
    let p = pool.pairs as f64;
    Ok(ParamRmse {
        delay: (pool.delay_sq / p).sqrt(),
        doppler: (pool.doppler_sq / p).sqrt(),
        gain: (pool.gain_sq / p).sqrt(),
    })
}

/// `‖H − Ĥ‖_F² / MN` for one trial.
pub fn channel_error_sq(truth: &Scenario, estimates: &[PathEstimate], dims: &SystemDims) -> f64 {
    let mut paths: Vec<DDPath> = truth.all_paths().copied().collect();
    paths.extend(
        estimates
            .iter()
            .map(|e| DDPath::new(-e.gain, e.delay, e.doppler)),
    );
    channel_frobenius_sq(&paths, dims) / dims.frame_len() as f64
}

/// `sqrt(‖H − Ĥ‖_F² / MN)`.
pub fn rmse_channel(truth: &Scenario, estimates: &[PathEstimate], dims: &SystemDims) -> f64 {
    channel_error_sq(truth, estimates, dims).sqrt()
}
