//! Ensembles of conditional trajectories and the statistics drawn from them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::HilbertSpec;
use crate::lindblad::SimParams;
use crate::sme::{self, InitialState, Mode, PhononDistribution, SimulateOptions, TrajectoryRecord};

/// Half-width around an integer within which `mean_n` counts as resolved.
pub const RESOLVED_BAND: f64 = 0.2;

/// Per-sample mean and standard error of `mean_n` over an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub mean_of_mean_n: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trajectories: usize,
}

/// Evaluates `task(k)` for `k in 0..count` in parallel and returns the results
/// in index order, or a report of every failed index.
pub fn par_indexed<T, F>(count: usize, task: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = (0..count).into_par_iter().map(&task).collect();
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.is_err().then_some(k))
        .collect();
    if failed.is_empty() {
        return Ok(results.into_iter().map(|r| r.unwrap_or_else(|_| unreachable!())).collect());
    }
    let first = results
        .into_iter()
        .find_map(|r| r.err())
        .expect("at least one failure");
    Err(Error::Ensemble {
        total: count,
        failed,
        first: Box::new(first),
    })
}

/// Runs `count` trajectories; trajectory `k` uses stream `k` of `params.seed`.
pub fn run_trajectories(
    params: &SimParams,
    spec: &HilbertSpec,
    initial: &InitialState,
    mode: Mode,
    sample_every: usize,
    count: usize,
) -> Result<Vec<TrajectoryRecord>> {
    let options = SimulateOptions::default();
    par_indexed(count, |k| {
        sme::simulate_with(params, spec, initial, mode, sample_every, k as u64, &options)
    })
}

/// Mean and standard error of `mean_n` across `count ≥ 2` trajectories seeded
/// from `(base_seed, k)`. The reduction runs in trajectory order, so the
/// result does not depend on scheduling.
pub fn run_ensemble(
    params: &SimParams,
    spec: &HilbertSpec,
    initial: &InitialState,
    mode: Mode,
    sample_every: usize,
    count: usize,
    base_seed: u64,
) -> Result<EnsembleSummary> {
    if count < 2 {
        return Err(Error::InvalidParameter {
            name: "trajectories",
            reason: format!("need at least 2, got {count}"),
        });
    }
    let params = SimParams { seed: base_seed, ..*params };
    let options = SimulateOptions::default();
    let runs = par_indexed(count, |k| {
        let r = sme::simulate_with(&params, spec, initial, mode, sample_every, k as u64, &options)?;
        Ok((r.times, r.mean_n))
    })?;
    let times = runs[0].0.clone();
    let series: Vec<Vec<f64>> = runs.into_iter().map(|(_, m)| m).collect();
    summarize(times, &series)
}

/// Per-sample mean and standard error of equally long series.
pub fn summarize(times: Vec<f64>, series: &[Vec<f64>]) -> Result<EnsembleSummary> {
    let m = series.len();
    if m < 2 {
        return Err(Error::InvalidParameter {
            name: "trajectories",
            reason: format!("need at least 2, got {m}"),
        });
    }
    for s in series {
        if s.len() != times.len() {
            return Err(Error::LengthMismatch {
                left: times.len(),
                right: s.len(),
            });
        }
    }
    let mut mean = vec![0.0; times.len()];
    for s in series {
        for (acc, v) in mean.iter_mut().zip(s) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut var = vec![0.0; times.len()];
    for s in series {
        for ((acc, v), mu) in var.iter_mut().zip(s).zip(&mean) {
            *acc += (v - mu).powi(2);
        }
    }
    let stderr = var.iter().map(|v| (v / (m - 1) as f64 / m as f64).sqrt()).collect();
    Ok(EnsembleSummary {
        times,
        mean_of_mean_n: mean,
        stderr,
        trajectories: m,
    })
}

/// Distribution of `round(mean_n)` over the samples of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FockHistogram {
    pub weights: Vec<f64>,
    pub total_samples: usize,
}

impl FockHistogram {
    /// Weights padded with zeros (or truncated) to `len` levels.
    pub fn to_distribution(&self, len: usize) -> Result<PhononDistribution> {
        let mut w = self.weights.clone();
        w.resize(len, 0.0);
        PhononDistribution::new(w)
    }

    /// Weights never increase with the level.
    pub fn is_monotone_decreasing(&self) -> bool {
        self.weights.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Histogram of rounded `mean_n` after discarding `discard` of warm-up.
pub fn fock_histogram(traj: &TrajectoryRecord, discard: f64) -> Result<FockHistogram> {
    histogram_of(&traj.times, &traj.mean_n, discard)
}

/// Pooled histogram of several trajectories.
pub fn pooled_histogram(trajs: &[TrajectoryRecord], discard: f64) -> Result<FockHistogram> {
    let mut counts: Vec<usize> = Vec::new();
    let mut total = 0;
    for t in trajs {
        let (c, n) = level_counts(&t.times, &t.mean_n, discard)?;
        if c.len() > counts.len() {
            counts.resize(c.len(), 0);
        }
        for (acc, v) in counts.iter_mut().zip(c) {
            *acc += v;
        }
        total += n;
    }
    if total == 0 {
        return Err(Error::EmptyWindow);
    }
    Ok(FockHistogram {
        weights: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        total_samples: total,
    })
}

fn level_counts(times: &[f64], mean_n: &[f64], discard: f64) -> Result<(Vec<usize>, usize)> {
    if times.len() != mean_n.len() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: mean_n.len(),
        });
    }
    let mut counts = Vec::new();
    let mut total = 0;
    for (_, &m) in times.iter().zip(mean_n).filter(|(&t, _)| t > discard) {
        let level = m.round().max(0.0) as usize;
        if level >= counts.len() {
            counts.resize(level + 1, 0);
        }
        counts[level] += 1;
        total += 1;
    }
    Ok((counts, total))
}

fn histogram_of(times: &[f64], mean_n: &[f64], discard: f64) -> Result<FockHistogram> {
    let (counts, total) = level_counts(times, mean_n, discard)?;
    if total == 0 {
        return Err(Error::EmptyWindow);
    }
    Ok(FockHistogram {
        weights: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        total_samples: total,
    })
}

/// Bose–Einstein law `p_n ∝ (N̄/(N̄+1))^n` on `0..=n_max`.
pub fn thermal_distribution(nbar: f64, n_max: usize) -> Result<PhononDistribution> {
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(Error::InvalidRate { name: "nbar", value: nbar });
    }
    let x = nbar / (nbar + 1.0);
    PhononDistribution::new((0..=n_max).map(|n| x.powi(n as i32)).collect())
}

/// `½ Σ |p_n − q_n|`.
pub fn total_variation(p: &PhononDistribution, q: &PhononDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(0.5
        * p.probabilities()
            .iter()
            .zip(q.probabilities())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// Fraction of samples after `discard` with `mean_n` within
/// [`RESOLVED_BAND`] of an integer.
pub fn jump_resolution_score(traj: &TrajectoryRecord, discard: f64) -> Result<f64> {
    let kept: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.mean_n)
        .filter(|(&t, _)| t > discard)
        .map(|(_, &m)| m)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let resolved = kept.iter().filter(|m| (*m - m.round()).abs() < RESOLVED_BAND).count();
    Ok(resolved as f64 / kept.len() as f64)
}

/// Default warm-up: five cavity lifetimes plus one filter window.
pub fn default_discard(kappa: f64, window: f64) -> f64 {
    5.0 / kappa + window
}
