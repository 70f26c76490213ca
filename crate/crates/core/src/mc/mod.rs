//! Monte Carlo tail estimation and the exact small-instance oracles.

mod dominance;
mod lemmas;
mod renewal;
mod tightness;

pub use dominance::{dominance_table, DominanceConfig, DominanceRow, DominanceTable};
pub use lemmas::{verify_lemma_suite, LemmaCheck, LemmaReport};
pub use renewal::{exact_an, renewal_coefficients, renewal_sums, verify_renewal, RenewalLedger, RenewalReport};
pub use tightness::{dyadic_cutoff, tightness_experiment, TightnessReport};

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::chain::{exact_means, FiniteMarkovModel, ObservableSequence, PathSampler};
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::linalg::HermitianMatrix;
use crate::rng::StreamKey;

/// Confidence level of every interval reported by this module.
pub const CONFIDENCE: f64 = 0.999;

/// Trajectories per work unit; fixed so reductions do not depend on the thread count.
pub(crate) const CHUNK: usize = 1024;

/// Exact (Clopper-Pearson) two-sided interval for a binomial proportion.
pub fn clopper_pearson(count: u64, reps: u64, confidence: f64) -> (f64, f64) {
    assert!(count <= reps && reps > 0, "count {count} out of range for {reps} reps");
    let alpha = 1.0 - confidence;
    let (k, n) = (count as f64, reps as f64);
    let lower = if count == 0 { 0.0 } else { beta_quantile(alpha / 2.0, k, n - k + 1.0) };
    let upper = if count == reps { 1.0 } else { beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k) };
    (lower, upper)
}

/// Upper interval end when nothing is observed: `1 − (α/2)^{1/N}`.
pub fn resolution_floor(reps: u64, confidence: f64) -> f64 {
    1.0 - ((1.0 - confidence) / 2.0).powf(1.0 / reps as f64)
}

fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailEstimate {
    pub eps_grid: Vec<f64>,
    pub counts: Vec<u64>,
    pub reps: u64,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
}

impl TailEstimate {
    pub fn from_counts(eps_grid: Vec<f64>, counts: Vec<u64>, reps: u64) -> Self {
        let (ci_lower, ci_upper) = counts.iter().map(|&c| clopper_pearson(c, reps, CONFIDENCE)).unzip();
        TailEstimate { eps_grid, counts, reps, ci_lower, ci_upper }
    }

    pub fn p_hat(&self, i: usize) -> f64 {
        self.counts[i] as f64 / self.reps as f64
    }
}

/// Column-major complex tables of `F_t(x) − c_t` for `t = 1..=n`, flattened for the hot loop.
#[derive(Clone, Debug)]
pub(crate) struct FlatTables {
    m: usize,
    size: usize,
    data: Vec<Complex64>,
}

impl FlatTables {
    pub(crate) fn centered(obs: &ObservableSequence, size: usize, means: &[HermitianMatrix]) -> Result<Self> {
        let m = obs.dim();
        let mut data = Vec::with_capacity(means.len() * size * m * m);
        for (t, mean) in (1..=means.len()).zip(means) {
            for f in obs.table(t, size)? {
                data.extend(f.sub(mean).as_matrix().iter().cloned());
            }
        }
        Ok(FlatTables { m, size, data })
    }

    #[inline]
    pub(crate) fn get(&self, t: usize, x: usize) -> &[Complex64] {
        let mm = self.m * self.m;
        let at = ((t - 1) * self.size + x) * mm;
        &self.data[at..at + mm]
    }
}

pub(crate) fn to_hermitian(m: usize, flat: &[Complex64]) -> HermitianMatrix {
    HermitianMatrix::new(nalgebra::DMatrix::from_column_slice(m, m, flat)).expect("square buffer")
}

/// Everything the tail simulation needs, computed once per (model, observable, n).
#[derive(Clone, Debug)]
pub struct TailSetup {
    n: usize,
    m: usize,
    sampler: PathSampler,
    centered: FlatTables,
    /// `Σ_t (E F_t(X_t) − E[F_t(X_t) | X_0 = x])`, per starting state.
    cond_offset: Vec<Vec<Complex64>>,
    /// `E F_n(X_n) − E[F_n(X_n) | X_0 = x]`.
    cond_last: Vec<Vec<Complex64>>,
}

impl TailSetup {
    pub fn new(model: &FiniteMarkovModel, obs: &ObservableSequence, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(LabError::InvalidInput("tail simulation needs n >= 1".into()));
        }
        let size = model.size();
        let m = obs.dim();
        let means = exact_means(model, obs, n)?;
        let centered = FlatTables::centered(obs, size, &means)?;
        let kernels = model.materialize(n)?;
        let tables: Vec<Vec<HermitianMatrix>> = (1..=n).map(|t| obs.table(t, size)).collect::<Result<_>>()?;
        let mut cond_offset = Vec::with_capacity(size);
        let mut cond_last = Vec::with_capacity(size);
        for x0 in 0..size {
            let mut mu = vec![0.0; size];
            mu[x0] = 1.0;
            let mut offset = HermitianMatrix::zeros(m);
            let mut last = HermitianMatrix::zeros(m);
            for t in 1..=n {
                mu = kernels[t - 1].push_forward(&mu);
                let cond = HermitianMatrix::weighted_sum(m, mu.iter().cloned().zip(&tables[t - 1]));
                last = means[t - 1].sub(&cond);
                offset = offset.add(&last);
            }
            cond_offset.push(offset.as_matrix().iter().cloned().collect());
            cond_last.push(last.as_matrix().iter().cloned().collect());
        }
        Ok(TailSetup { n, m, sampler: PathSampler::new(model, n)?, centered, cond_offset, cond_last })
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    /// The three deviation statistics of one trajectory.
    pub fn statistics(&self, stream: StreamKey) -> Result<PathStatistics> {
        let mm = self.m * self.m;
        let mut sum = vec![Complex64::new(0.0, 0.0); mm];
        let mut last_state = 0;
        let x0 = self.sampler.walk(stream, |t, x| {
            for (acc, v) in sum.iter_mut().zip(self.centered.get(t, x)) {
                *acc += v;
            }
            last_state = x;
        });
        let s = to_hermitian(self.m, &sum);
        let cond: Vec<Complex64> = sum.iter().zip(&self.cond_offset[x0]).map(|(a, b)| a + b).collect();
        let point: Vec<Complex64> = self
            .centered
            .get(self.n, last_state)
            .iter()
            .zip(&self.cond_last[x0])
            .map(|(a, b)| a + b)
            .collect();
        Ok(PathStatistics {
            lambda_max: s.lambda_max()?,
            cond_op: to_hermitian(self.m, &cond).op_norm()?,
            point_op: to_hermitian(self.m, &point).op_norm()?,
        })
    }
}

/// Per-trajectory deviations: `λ_max(S)`, `‖S_cond‖_op` and `‖F̃_n(X_n)‖_op`
/// (the last two centred conditionally on `X_0`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathStatistics {
    pub lambda_max: f64,
    pub cond_op: f64,
    pub point_op: f64,
}

/// Tails of the three statistics on a common grid and common trajectories.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailBundle {
    /// `λ_max(S) ≥ nε`.
    pub sum: TailEstimate,
    /// `‖S_cond‖_op ≥ nε`.
    pub average: TailEstimate,
    /// `‖F̃_n(X_n)‖_op ≥ ε`, conditional centring.
    pub point: TailEstimate,
}

pub fn simulate_tails(setup: &TailSetup, eps_grid: &[f64], reps: usize, key: StreamKey, exec: &Exec) -> Result<TailBundle> {
    if reps < 100 {
        return Err(LabError::InvalidInput(format!("at least 100 trajectories required, got {reps}")));
    }
    let n = setup.n as f64;
    let g = eps_grid.len();
    let partial = exec.map_chunks(reps, CHUNK, |start, end| -> Result<Vec<u64>> {
        let mut counts = vec![0u64; 3 * g];
        for i in start..end {
            let st = setup.statistics(key.child(i as u64))?;
            for (k, &eps) in eps_grid.iter().enumerate() {
                counts[k] += (st.lambda_max >= n * eps) as u64;
                counts[g + k] += (st.cond_op >= n * eps) as u64;
                counts[2 * g + k] += (st.point_op >= eps) as u64;
            }
        }
        Ok(counts)
    });
    let mut counts = vec![0u64; 3 * g];
    for chunk in partial {
        for (c, v) in counts.iter_mut().zip(chunk?) {
            *c += v;
        }
    }
    let est = |r: std::ops::Range<usize>| TailEstimate::from_counts(eps_grid.to_vec(), counts[r].to_vec(), reps as u64);
    Ok(TailBundle { sum: est(0..g), average: est(g..2 * g), point: est(2 * g..3 * g) })
}

/// `#{trajectories with λ_max(S) ≥ n·ε}` on a grid, with exact binomial intervals.
pub fn empirical_tail(
    model: &FiniteMarkovModel,
    obs: &ObservableSequence,
    n: usize,
    eps_grid: &[f64],
    reps: usize,
    seed: u64,
    exec: &Exec,
) -> Result<TailEstimate> {
    let setup = TailSetup::new(model, obs, n)?;
    Ok(simulate_tails(&setup, eps_grid, reps, StreamKey::root(seed), exec)?.sum)
}

/// `P(λ_max(S) ≥ n·ε)` by full path enumeration.
pub fn exact_tail(model: &FiniteMarkovModel, obs: &ObservableSequence, n: usize, eps_grid: &[f64]) -> Result<Vec<f64>> {
    let means = exact_means(model, obs, n)?;
    let tables = FlatTables::centered(obs, model.size(), &means)?;
    let m = obs.dim();
    let mut probs = vec![0.0; eps_grid.len()];
    let mut failure = None;
    crate::chain::for_each_path(model, n, 1e6, |path, p| {
        let mut sum = vec![Complex64::new(0.0, 0.0); m * m];
        for (t, &x) in (1..).zip(path) {
            for (a, v) in sum.iter_mut().zip(tables.get(t, x)) {
                *a += v;
            }
        }
        match to_hermitian(m, &sum).lambda_max() {
            Ok(l) => {
                for (pr, &eps) in probs.iter_mut().zip(eps_grid) {
                    if l >= n as f64 * eps {
                        *pr += p;
                    }
                }
            }
            Err(e) => failure = Some(e),
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(probs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn clopper_pearson_reference_values() {
        // scipy.stats.beta.ppf(0.9995, 1, 100000) = 7.60061e-5
        let (lo, hi) = clopper_pearson(0, 100_000, 0.999);
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, resolution_floor(100_000, 0.999), max_relative = 1e-9);
        assert_relative_eq!(hi, 7.60061e-5, max_relative = 1e-5);
        // symmetric case k = N/2
        let (lo, hi) = clopper_pearson(50, 100, 0.95);
        assert_relative_eq!(lo + hi, 1.0, epsilon = 1e-12);
        assert_relative_eq!(lo, 0.398321, epsilon = 1e-5);
        assert_eq!(clopper_pearson(10, 10, 0.999).1, 1.0);
    }
}
