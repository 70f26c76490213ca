//! Projected Elo ratings under a dynamic Bradley-Terry-Luce environment.
//!
//! Time runs as in the tracking lemma: the match at step `t` is played in the
//! environment `E^t` from ratings `X^{t−1}`, then the environment moves on to
//! `E^{t+1}`. Elo randomness for step `t` of a run comes from
//! `run.child(0).child(t)` and environment randomness from `run.child(1).child(t)`,
//! so environment paths do not depend on match outcomes.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::{elo_avg_bound, elo_point_bound, TrackingParams};
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::rng::{cumulative, sample_cumulative, StreamKey};

const SUM_TOL: f64 = 1e-9;
const BOX_TOL: f64 = 1e-12;
const REP_CHUNK: usize = 8;

pub fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Number of unordered pairs.
pub fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Unordered pairs `i < j` in lexicographic order; `q` is indexed the same way.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

pub fn uniform_pairs(n: usize) -> Vec<f64> {
    vec![1.0 / pair_count(n) as f64; pair_count(n)]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projection {
    pub x: Vec<f64>,
    /// The shift with `x_i = clip(y_i − θ, −M, M)`; midpoint of the root set when it is an interval.
    pub theta: f64,
}

fn clipped_sum(y: &[f64], theta: f64, m: f64) -> f64 {
    y.iter().map(|v| (v - theta).clamp(-m, m)).sum()
}

/// Euclidean projection onto `{Σx = 0} ∩ [−M, M]ⁿ`.
pub fn project_zero_sum_box(y: &[f64], m: f64) -> Result<Projection> {
    if !(m > 0.0) {
        return Err(LabError::InvalidInput(format!("box radius must be positive, got {m}")));
    }
    if y.is_empty() || y.iter().any(|v| !v.is_finite()) {
        return Err(LabError::InvalidInput("projection needs a finite, nonempty vector".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    if y.iter().all(|v| (v - mean).abs() <= m) {
        return Ok(Projection { x: y.iter().map(|v| v - mean).collect(), theta: mean });
    }
    let theta = breakpoint_root(y, m).unwrap_or_else(|| bisection_root(y, m));
    let x = y.iter().map(|v| (v - theta).clamp(-m, m)).collect();
    Ok(Projection { x, theta })
}

/// `g(θ) = Σ clip(y_i − θ)` is piecewise linear and nonincreasing with kinks at `y_i ± M`,
/// so its root set is found exactly from the sorted kinks.
fn breakpoint_root(y: &[f64], m: f64) -> Option<f64> {
    let mut kinks: Vec<f64> = y.iter().flat_map(|v| [v - m, v + m]).collect();
    kinks.sort_by(f64::total_cmp);
    let g: Vec<f64> = kinks.iter().map(|&t| clipped_sum(y, t, m)).collect();
    let k = g.iter().position(|&v| v <= 0.0)?;
    let lo = if k == 0 || g[k] == 0.0 {
        kinks[k]
    } else {
        kinks[k - 1] + g[k - 1] * (kinks[k] - kinks[k - 1]) / (g[k - 1] - g[k])
    };
    let j = g.iter().rposition(|&v| v >= 0.0)?;
    let hi = if j + 1 == g.len() || g[j] == 0.0 {
        kinks[j]
    } else {
        kinks[j] + g[j] * (kinks[j + 1] - kinks[j]) / (g[j] - g[j + 1])
    };
    let theta = 0.5 * (lo + hi);
    theta.is_finite().then_some(theta)
}

fn bisection_root(y: &[f64], m: f64) -> f64 {
    let lo_init = y.iter().cloned().fold(f64::INFINITY, f64::min) - m;
    let hi_init = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + m;
    let (mut lo, mut hi) = (lo_init, hi_init);
    while hi - lo > 1e-12 * (1.0 + hi.abs().max(lo.abs())) {
        let mid = 0.5 * (lo + hi);
        if clipped_sum(y, mid, m) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn check_box_vector(v: &[f64], m: f64, what: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if sum.abs() > SUM_TOL {
        return Err(LabError::InvariantViolation(format!("{what} sums to {sum}, not 0")));
    }
    if let Some(bad) = v.iter().find(|x| x.abs() > m + BOX_TOL) {
        return Err(LabError::InvariantViolation(format!("{what} has entry {bad} outside [-{m}, {m}]")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EloState {
    pub x: Vec<f64>,
}

impl EloState {
    pub fn new(x: Vec<f64>, m: f64) -> Result<Self> {
        check_box_vector(&x, m, "rating vector")?;
        Ok(EloState { x })
    }

    pub fn zeros(n: usize) -> Self {
        EloState { x: vec![0.0; n] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvironmentState {
    pub rho: Vec<f64>,
    /// Matchup distribution over `pairs(n)`.
    pub q: Vec<f64>,
}

impl EnvironmentState {
    pub fn new(rho: Vec<f64>, q: Vec<f64>, m: f64) -> Result<Self> {
        let n = rho.len();
        if n < 2 {
            return Err(LabError::InvalidInput("need at least two players".into()));
        }
        check_box_vector(&rho, m, "true ratings")?;
        check_pair_distribution(&q, n)?;
        Ok(EnvironmentState { rho, q })
    }

    pub fn players(&self) -> usize {
        self.rho.len()
    }
}

fn check_pair_distribution(q: &[f64], n: usize) -> Result<()> {
    if q.len() != pair_count(n) {
        return Err(LabError::DimensionMismatch(format!("q has {} entries, expected {}", q.len(), pair_count(n))));
    }
    if q.iter().any(|&p| !(p >= 0.0)) || (q.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(LabError::InvariantViolation("q must be a probability vector over pairs".into()));
    }
    Ok(())
}

pub fn total_variation(q: &[f64], r: &[f64]) -> f64 {
    0.5 * q.iter().zip(r).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `d_E = ‖ρ − ρ̃‖₂ + 2√2 ‖q − q̃‖_TV`.
pub fn env_distance(e: &EnvironmentState, f: &EnvironmentState) -> f64 {
    l2(&e.rho, &f.rho) + 2.0 * SQRT_2 * total_variation(&e.q, &f.q)
}

/// Ratings together with their environment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointState {
    pub x: EloState,
    pub env: EnvironmentState,
}

/// `d_Z = ‖x − x̃‖₂ + d_E`.
pub fn joint_distance(z: &JointState, w: &JointState) -> f64 {
    l2(&z.x.x, &w.x.x) + env_distance(&z.env, &w.env)
}

/// `4M√n + 2√2`, an upper bound on the diameter of the joint space.
pub fn joint_diameter_bound(n: usize, m: f64) -> f64 {
    4.0 * m * (n as f64).sqrt() + 2.0 * SQRT_2
}

/// `true` when player `i` beats `j`, which happens with probability `σ(ρ_i − ρ_j)`.
pub fn btl_outcome(rho: &[f64], i: usize, j: usize, stream: StreamKey) -> bool {
    stream.uniform(0) < sigmoid(rho[i] - rho[j])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Match {
    pub winner: usize,
    pub loser: usize,
}

/// Winner gains `η σ(x_loser − x_winner)`, the loser gives up the same amount.
pub fn unprojected_update(x: &[f64], game: Match, eta: f64) -> Vec<f64> {
    let gain = eta * sigmoid(x[game.loser] - x[game.winner]);
    let mut y = x.to_vec();
    y[game.winner] += gain;
    y[game.loser] -= gain;
    y
}

/// One match drawn from the environment (pair from `u_pair`, outcome from `u_outcome`).
pub fn draw_match(env: &EnvironmentState, cum: &[f64], u_pair: f64, u_outcome: f64) -> Match {
    let n = env.players();
    let (i, j) = pair_at(sample_cumulative(cum, u_pair), n);
    if u_outcome < sigmoid(env.rho[i] - env.rho[j]) {
        Match { winner: i, loser: j }
    } else {
        Match { winner: j, loser: i }
    }
}

fn pair_at(k: usize, n: usize) -> (usize, usize) {
    let mut k = k;
    for i in 0..n {
        let row = n - i - 1;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
    }
    unreachable!("pair index out of range")
}

/// Full projected update with the played match.
pub fn elo_match(x: &EloState, env: &EnvironmentState, eta: f64, m: f64, stream: StreamKey) -> Result<(EloState, Match)> {
    let cum = cumulative(&env.q);
    let game = draw_match(env, &cum, stream.uniform(0), stream.uniform(1));
    let y = unprojected_update(&x.x, game, eta);
    Ok((EloState { x: project_zero_sum_box(&y, m)?.x }, game))
}

pub fn elo_step(x: &EloState, env: &EnvironmentState, eta: f64, m: f64, stream: StreamKey) -> Result<EloState> {
    Ok(elo_match(x, env, eta, m, stream)?.0)
}

/// Second smallest eigenvalue of `Σ q_ij (e_i − e_j)(e_i − e_j)ᵀ`.
pub fn laplacian_lambda(q: &[f64], n: usize) -> Result<f64> {
    check_pair_distribution(q, n)?;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for ((i, j), &w) in pairs(n).into_iter().zip(q) {
        l[(i, i)] += w;
        l[(j, j)] += w;
        l[(i, j)] -= w;
        l[(j, i)] -= w;
    }
    let eig = SymmetricEigen::try_new(l, 1e-15, 10_000).ok_or(LabError::EigenNonConvergence { dim: n })?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev[1].max(0.0))
}

/// `κ = η e^{−4M} λ / 8`.
pub fn elo_curvature(eta: f64, m: f64, lambda: f64) -> f64 {
    eta * (-4.0 * m).exp() * lambda / 8.0
}

pub type EnvStepFn = dyn Fn(&EnvironmentState, StreamKey) -> EnvironmentState + Send + Sync;

/// Constants a user-supplied environment claims about itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Declared {
    pub nu: f64,
    pub h_rho: f64,
    pub h_q: f64,
    pub drift: f64,
}

#[derive(Clone)]
pub enum EnvKind {
    /// The environment never moves.
    Static,
    /// `ρ' = Π((1 − ν)ρ + ζ)` with `ζ` uniform on the zero-sum ball of radius `noise_radius`,
    /// and `q' = (1 − ν)q + ν q_base`.
    ArContract { nu: f64, noise_radius: f64, q_base: Vec<f64> },
    Custom { step: Arc<EnvStepFn>, declared: Declared },
}

impl std::fmt::Debug for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvKind::Static => write!(f, "Static"),
            EnvKind::ArContract { nu, noise_radius, .. } => {
                write!(f, "ArContract {{ nu: {nu}, noise_radius: {noise_radius} }}")
            }
            EnvKind::Custom { declared, .. } => write!(f, "Custom({declared:?})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnvDynamics {
    pub kind: EnvKind,
    pub box_radius: f64,
}

impl EnvDynamics {
    pub fn new(kind: EnvKind, box_radius: f64) -> Result<Self> {
        if let EnvKind::ArContract { nu, noise_radius, .. } = &kind {
            if !(*nu > 0.0 && *nu <= 1.0) || !(*noise_radius >= 0.0) {
                return Err(LabError::InvalidInput("ar-contract needs nu in (0, 1] and a nonnegative noise radius".into()));
            }
        }
        Ok(EnvDynamics { kind, box_radius })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            EnvKind::Static => "static",
            EnvKind::ArContract { .. } => "ar-contract",
            EnvKind::Custom { .. } => "custom",
        }
    }

    pub fn step(&self, e: &EnvironmentState, stream: StreamKey) -> Result<EnvironmentState> {
        match &self.kind {
            EnvKind::Static => Ok(e.clone()),
            EnvKind::ArContract { nu, noise_radius, q_base } => {
                let zeta = zero_sum_ball(e.players(), *noise_radius, stream);
                let y: Vec<f64> = e.rho.iter().zip(&zeta).map(|(r, z)| (1.0 - nu) * r + z).collect();
                let rho = project_zero_sum_box(&y, self.box_radius)?.x;
                let q = e.q.iter().zip(q_base).map(|(a, b)| (1.0 - nu) * a + nu * b).collect();
                Ok(EnvironmentState { rho, q })
            }
            EnvKind::Custom { step, .. } => Ok(step(e, stream)),
        }
    }

    /// `(h_ρ, h_q)` one-step support radii.
    pub fn support_radii(&self, n: usize) -> (f64, f64) {
        match &self.kind {
            EnvKind::Static => (0.0, 0.0),
            EnvKind::ArContract { nu, noise_radius, .. } => (nu * self.rho_diameter(n) + noise_radius, *nu),
            EnvKind::Custom { declared, .. } => (declared.h_rho, declared.h_q),
        }
    }

    /// Largest `‖ρ‖₂` on the zero-sum box, bounded by `M√n`.
    pub fn rho_diameter(&self, n: usize) -> f64 {
        self.box_radius * (n as f64).sqrt()
    }

    /// Declared upper bound on `E[‖Δρ‖₂² + 4M‖Δρ‖₁]`:
    /// `(νD_ρ + r)² + 4M√n(νD_ρ + r)` for ar-contract.
    pub fn drift_envelope(&self, n: usize) -> f64 {
        match &self.kind {
            EnvKind::Static => 0.0,
            EnvKind::ArContract { .. } => {
                let h = self.support_radii(n).0;
                h * h + 4.0 * self.box_radius * (n as f64).sqrt() * h
            }
            EnvKind::Custom { declared, .. } => declared.drift,
        }
    }

    /// Contraction the environment is supposed to have; a static environment is a single point.
    pub fn declared_nu(&self) -> Option<f64> {
        match &self.kind {
            EnvKind::Static => None,
            EnvKind::ArContract { nu, .. } => Some(*nu),
            EnvKind::Custom { declared, .. } => Some(declared.nu),
        }
    }
}

/// Uniform draw from the ball of radius `r` in `{Σv = 0} ⊂ ℝⁿ`.
pub fn zero_sum_ball(n: usize, r: f64, stream: StreamKey) -> Vec<f64> {
    if r == 0.0 || n < 2 {
        return vec![0.0; n];
    }
    let mut rng = stream.rng();
    let mut g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mean = g.iter().sum::<f64>() / n as f64;
    g.iter_mut().for_each(|v| *v -= mean);
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = r * rng.random::<f64>().powf(1.0 / (n - 1) as f64);
    g.into_iter().map(|v| v * radius / norm).collect()
}

#[derive(Clone, Debug)]
pub struct EloConfig {
    pub players: usize,
    pub box_radius: f64,
    pub eta: f64,
    pub nu: f64,
    pub env: EnvDynamics,
    pub initial_env: EnvironmentState,
    pub initial_x: EloState,
    /// Number of matches simulated per run.
    pub horizon: usize,
    pub burn_in: usize,
    pub reps: usize,
    pub seed: u64,
}

impl EloConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.players;
        if n < 2 {
            return Err(LabError::InvalidInput("need at least two players".into()));
        }
        if !(self.box_radius > 1.0) {
            return Err(LabError::InvalidInput(format!("M must exceed 1, got {}", self.box_radius)));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(LabError::InvalidInput(format!("eta must lie in (0, 1/2), got {}", self.eta)));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(LabError::InvalidInput(format!("nu must lie in (0, 1], got {}", self.nu)));
        }
        if self.eta > self.nu / 2.0 {
            return Err(LabError::InvalidInput(format!("eta = {} exceeds nu/2 = {}", self.eta, self.nu / 2.0)));
        }
        if let Some(nu) = self.env.declared_nu() {
            if (nu - self.nu).abs() > 1e-12 {
                return Err(LabError::InvalidInput(format!("config nu = {} but the environment declares {nu}", self.nu)));
            }
        }
        if (self.env.box_radius - self.box_radius).abs() > 0.0 {
            return Err(LabError::InvalidInput("environment and ratings must share the box radius".into()));
        }
        if self.initial_env.players() != n || self.initial_x.x.len() != n {
            return Err(LabError::DimensionMismatch(format!("initial states must have {n} players")));
        }
        EnvironmentState::new(self.initial_env.rho.clone(), self.initial_env.q.clone(), self.box_radius)?;
        EloState::new(self.initial_x.x.clone(), self.box_radius)?;
        if self.horizon == 0 || self.reps == 0 || self.burn_in >= self.horizon {
            return Err(LabError::InvalidInput("need horizon > burn_in >= 0 and reps >= 1".into()));
        }
        Ok(())
    }

    fn run_key(&self, rep: usize) -> StreamKey {
        StreamKey::root(self.seed).child(rep as u64)
    }

    /// Environment path `E^1, …, E^T` of run `rep`.
    pub fn env_path(&self, rep: usize) -> Result<Vec<EnvironmentState>> {
        let key = self.run_key(rep).child(1);
        let mut path = Vec::with_capacity(self.horizon);
        path.push(self.initial_env.clone());
        for t in 1..self.horizon {
            let next = self.env.step(&path[t - 1], key.child(t as u64))?;
            path.push(next);
        }
        Ok(path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DriftEstimate {
    /// Largest per-state mean of `‖Δρ‖₂² + 4M‖Δρ‖₁`.
    pub value: f64,
    pub std_err: f64,
    pub states: usize,
    pub resamples: usize,
}

/// Re-samples `resamples` transitions from every `stride`-th visited state and keeps the largest mean.
pub fn drift_estimate(
    dynamics: &EnvDynamics,
    path: &[EnvironmentState],
    resamples: usize,
    stride: usize,
    key: StreamKey,
) -> Result<DriftEstimate> {
    if path.len() < 2 || resamples < 2 {
        return Err(LabError::InvalidInput("drift estimate needs a path of length >= 2 and >= 2 resamples".into()));
    }
    let m = dynamics.box_radius;
    let mut best = DriftEstimate { value: 0.0, std_err: 0.0, states: 0, resamples };
    for (t, e) in path.iter().enumerate().step_by(stride.max(1)) {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in 0..resamples {
            let next = dynamics.step(e, key.child(t as u64).child(r as u64))?;
            let l2sq: f64 = next.rho.iter().zip(&e.rho).map(|(a, b)| (a - b) * (a - b)).sum();
            let l1: f64 = next.rho.iter().zip(&e.rho).map(|(a, b)| (a - b).abs()).sum();
            let v = l2sq + 4.0 * m * l1;
            sum += v;
            sum_sq += v * v;
        }
        let k = resamples as f64;
        let mean = sum / k;
        let var = ((sum_sq / k - mean * mean) * k / (k - 1.0)).max(0.0);
        best.states += 1;
        if mean > best.value {
            best.value = mean;
            best.std_err = (var / k).sqrt();
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CouplingEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

fn mean_se(values: impl Iterator<Item = f64>) -> CouplingEstimate {
    let v: Vec<f64> = values.collect();
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0).max(1.0);
    CouplingEstimate { mean, std_err: (var / k).sqrt(), samples: v.len() }
}

/// Synchronous-noise coupling of one environment step: mean of `d_E(e', ẽ') / d_E(e, ẽ)`.
pub fn env_contraction(dynamics: &EnvDynamics, e: &EnvironmentState, f: &EnvironmentState, samples: usize, key: StreamKey) -> Result<CouplingEstimate> {
    let d0 = env_distance(e, f);
    if !(d0 > 0.0) {
        return Err(LabError::InvalidInput("contraction needs two distinct environments".into()));
    }
    let ratios = (0..samples)
        .map(|s| {
            let k = key.child(s as u64);
            Ok(env_distance(&dynamics.step(e, k)?, &dynamics.step(f, k)?) / d0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_se(ratios.into_iter()))
}

/// Pair draws under a maximal coupling of `q` and `q̃`, and a shared outcome uniform.
fn coupled_matches(e: &EnvironmentState, f: &EnvironmentState, stream: StreamKey) -> (Match, Match) {
    let n = e.players();
    let overlap: Vec<f64> = e.q.iter().zip(&f.q).map(|(a, b)| a.min(*b)).collect();
    let shared: f64 = overlap.iter().sum();
    let (u0, u1, u2) = (stream.uniform(0), stream.uniform(1), stream.uniform(2));
    let (ka, kb) = if u0 < shared || shared >= 1.0 {
        let k = sample_cumulative(&cumulative(&overlap), (u0 / shared).min(1.0 - 1e-16));
        (k, k)
    } else {
        let ra: Vec<f64> = e.q.iter().zip(&overlap).map(|(a, o)| a - o).collect();
        let rb: Vec<f64> = f.q.iter().zip(&overlap).map(|(b, o)| b - o).collect();
        (sample_cumulative(&cumulative(&ra), u1), sample_cumulative(&cumulative(&rb), u1))
    };
    let play = |env: &EnvironmentState, k: usize| {
        let (i, j) = pair_at(k, n);
        if u2 < sigmoid(env.rho[i] - env.rho[j]) {
            Match { winner: i, loser: j }
        } else {
            Match { winner: j, loser: i }
        }
    };
    (play(e, ka), play(f, kb))
}

fn coupled_elo(x: &[f64], xt: &[f64], e: &EnvironmentState, f: &EnvironmentState, eta: f64, m: f64, stream: StreamKey) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = coupled_matches(e, f, stream);
    Ok((
        project_zero_sum_box(&unprojected_update(x, a, eta), m)?.x,
        project_zero_sum_box(&unprojected_update(xt, b, eta), m)?.x,
    ))
}

/// Coupling estimate of `W₁(K_e(x,·), K_ẽ(x,·))`, to be compared with `η d_E(e, ẽ)`.
pub fn sensitivity_estimate(x: &EloState, e: &EnvironmentState, f: &EnvironmentState, eta: f64, m: f64, samples: usize, key: StreamKey) -> Result<CouplingEstimate> {
    let d = (0..samples)
        .map(|s| {
            let (a, b) = coupled_elo(&x.x, &x.x, e, f, eta, m, key.child(s as u64))?;
            Ok(l2(&a, &b))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_se(d.into_iter()))
}

/// One coupled step of the joint chain (environment first, then ratings): mean of `d_Z(z', z̃') / d_Z(z, z̃)`.
pub fn joint_contraction(dynamics: &EnvDynamics, z: &JointState, w: &JointState, eta: f64, samples: usize, key: StreamKey) -> Result<CouplingEstimate> {
    let d0 = joint_distance(z, w);
    if !(d0 > 0.0) {
        return Err(LabError::InvalidInput("contraction needs two distinct joint states".into()));
    }
    let m = dynamics.box_radius;
    let ratios = (0..samples)
        .map(|s| {
            let k = key.child(s as u64);
            let e = dynamics.step(&z.env, k.child(0))?;
            let f = dynamics.step(&w.env, k.child(0))?;
            let (a, b) = coupled_elo(&z.x.x, &w.x.x, &e, &f, eta, m, k.child(1))?;
            let next_z = JointState { x: EloState { x: a }, env: e };
            let next_w = JointState { x: EloState { x: b }, env: f };
            Ok(joint_distance(&next_z, &next_w) / d0)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_se(ratios.into_iter()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoggedMatch {
    pub t: usize,
    pub winner: usize,
    pub loser: usize,
    /// `‖X^t − ρ^t‖²` after the match.
    pub err2: f64,
}

/// Match-by-match replay of run `rep`; draws from the same streams as [`run_tracking`].
pub fn match_log(config: &EloConfig, rep: usize) -> Result<Vec<LoggedMatch>> {
    config.validate()?;
    let path = config.env_path(rep)?;
    let key = config.run_key(rep).child(0);
    let mut x = config.initial_x.x.clone();
    let mut log = Vec::with_capacity(config.horizon);
    for (i, env) in path.iter().enumerate() {
        let t = i + 1;
        let s = key.child(t as u64);
        let game = draw_match(env, &cumulative(&env.q), s.uniform(0), s.uniform(1));
        x = project_zero_sum_box(&unprojected_update(&x, game, config.eta), config.box_radius)?.x;
        let err2 = x.iter().zip(&env.rho).map(|(a, b)| (a - b) * (a - b)).sum();
        log.push(LoggedMatch { t, winner: game.winner, loser: game.loser, err2 });
    }
    Ok(log)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingOptions {
    pub eps: f64,
    pub delta: f64,
    /// Candidate values of the unspecified universal constant.
    pub c_sweep: Vec<f64>,
    pub drift_resamples: usize,
    pub drift_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRow {
    pub t: usize,
    pub mean_err2: f64,
    pub lemma_rhs: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowRow {
    pub c: f64,
    pub min_t: u64,
    /// `T_0 + min_T ≤ horizon`.
    pub feasible: bool,
    pub radius: f64,
    pub violations: u64,
    pub reps: u64,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointRow {
    pub c: f64,
    pub burn_in: u64,
    pub radius: f64,
    pub probability: f64,
    /// Violations of the radius at the final step, when it is past the burn-in.
    pub violations_at_horizon: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingReport {
    pub players: usize,
    pub eta: f64,
    pub box_radius: f64,
    pub env: String,
    pub reps: usize,
    pub horizon: usize,
    pub burn_in: usize,
    /// Smallest Laplacian gap along the environment path of run 0.
    pub lambda: f64,
    pub kappa: f64,
    pub drift: DriftEstimate,
    pub drift_envelope: f64,
    pub drift_consistent: bool,
    pub h_rho: f64,
    pub h_q: f64,
    pub initial_err2: f64,
    pub noise_floor: f64,
    pub steps: Vec<StepRow>,
    /// Every rep-mean value sits below the expectation bound.
    pub lemma_dominated: bool,
    /// Largest `mean_err2 − lemma_rhs`.
    pub worst_lemma_gap: f64,
    /// Rep-mean error averaged over `t > T_0`.
    pub plateau: f64,
    pub windows: Vec<WindowRow>,
    pub points: Vec<PointRow>,
    /// Smallest swept `C` whose window fits in the horizon.
    pub selected_c: Option<f64>,
    pub delta: f64,
}

impl TrackingReport {
    pub fn plateau_ok(&self) -> bool {
        self.plateau <= self.noise_floor
    }

    /// Window violation frequency at the selected `C` is at most `δ`.
    pub fn window_ok(&self) -> Option<bool> {
        let c = self.selected_c?;
        self.windows.iter().find(|w| w.c == c).map(|w| w.frequency <= self.delta)
    }
}

struct RunTotals {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    window_err: Vec<Vec<f64>>,
    final_err: Vec<f64>,
}

/// Simulates `reps` runs of the joint chain and compares them with the tracking bounds.
pub fn run_tracking(config: &EloConfig, options: &TrackingOptions, exec: &Exec) -> Result<TrackingReport> {
    config.validate()?;
    if options.c_sweep.is_empty() {
        return Err(LabError::MissingParameter("C"));
    }
    let n = config.players;
    let m = config.box_radius;
    let horizon = config.horizon;

    let path0 = config.env_path(0)?;
    let lambda = path0
        .iter()
        .step_by(options.drift_stride.max(1))
        .map(|e| laplacian_lambda(&e.q, n))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let kappa = elo_curvature(config.eta, m, lambda);
    if !(kappa > 0.0) {
        return Err(LabError::InvariantViolation(format!("Laplacian gap {lambda} gives no curvature")));
    }
    let drift = drift_estimate(
        &config.env,
        &path0,
        options.drift_resamples,
        options.drift_stride,
        StreamKey::root(config.seed).child(u64::MAX),
    )?;
    let drift_envelope = config.env.drift_envelope(n);
    let drift_consistent = drift.value <= drift_envelope + 3.0 * drift.std_err + 1e-12;
    let (h_rho, h_q) = config.env.support_radii(n);

    let params = TrackingParams { players: n, box_radius: m, eta: config.eta, kappa, drift: drift.value, h_rho, h_q };
    let windows_spec: Vec<(f64, u64)> = options
        .c_sweep
        .iter()
        .map(|&c| elo_avg_bound(&params, options.eps, options.delta, Some(c)).map(|b| (c, b.min_t)))
        .collect::<Result<_>>()?;
    let window_len: Vec<Option<usize>> = windows_spec
        .iter()
        .map(|&(_, t)| (config.burn_in as u64 + t <= horizon as u64).then_some(t as usize))
        .collect();

    let parts = exec.map_chunks(config.reps, REP_CHUNK, |start, end| -> Result<RunTotals> {
        let mut tot = RunTotals {
            sum: vec![0.0; horizon],
            sum_sq: vec![0.0; horizon],
            window_err: Vec::with_capacity(end - start),
            final_err: Vec::with_capacity(end - start),
        };
        for rep in start..end {
            let key = config.run_key(rep);
            let (elo_key, env_key) = (key.child(0), key.child(1));
            let mut env = config.initial_env.clone();
            let mut x = config.initial_x.x.clone();
            let mut cum = cumulative(&env.q);
            let mut diff_sums = vec![vec![0.0; n]; window_len.len()];
            let mut err2 = 0.0;
            for t in 1..=horizon {
                if t > 1 {
                    env = config.env.step(&env, env_key.child((t - 1) as u64))?;
                    if !matches!(config.env.kind, EnvKind::Static) {
                        cum = cumulative(&env.q);
                    }
                }
                let s = elo_key.child(t as u64);
                let game = draw_match(&env, &cum, s.uniform(0), s.uniform(1));
                x = project_zero_sum_box(&unprojected_update(&x, game, config.eta), m)?.x;
                err2 = x.iter().zip(&env.rho).map(|(a, b)| (a - b) * (a - b)).sum();
                tot.sum[t - 1] += err2;
                tot.sum_sq[t - 1] += err2 * err2;
                for (acc, len) in diff_sums.iter_mut().zip(&window_len) {
                    if let Some(len) = len {
                        if t > config.burn_in && t <= config.burn_in + len {
                            acc.iter_mut().zip(x.iter().zip(&env.rho)).for_each(|(d, (a, b))| *d += a - b);
                        }
                    }
                }
            }
            tot.window_err.push(
                diff_sums
                    .iter()
                    .zip(&window_len)
                    .map(|(d, len)| len.map_or(f64::NAN, |l| d.iter().map(|v| v * v).sum::<f64>().sqrt() / l as f64))
                    .collect(),
            );
            tot.final_err.push(err2.sqrt());
        }
        Ok(tot)
    });

    let mut sum = vec![0.0; horizon];
    let mut sum_sq = vec![0.0; horizon];
    let mut window_err = Vec::with_capacity(config.reps);
    let mut final_err = Vec::with_capacity(config.reps);
    for part in parts {
        let part = part?;
        sum.iter_mut().zip(&part.sum).for_each(|(a, b)| *a += b);
        sum_sq.iter_mut().zip(&part.sum_sq).for_each(|(a, b)| *a += b);
        window_err.extend(part.window_err);
        final_err.extend(part.final_err);
    }

    let reps = config.reps as f64;
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + crate::mc::CONFIDENCE / 2.0);
    let initial_err2: f64 = config.initial_x.x.iter().zip(&config.initial_env.rho).map(|(a, b)| (a - b) * (a - b)).sum();
    let noise_floor = 2.0 * config.eta * config.eta / kappa;
    let offset = drift.value / kappa + noise_floor;
    let mut steps = Vec::with_capacity(horizon);
    let mut worst_gap = f64::NEG_INFINITY;
    for t in 1..=horizon {
        let mean = sum[t - 1] / reps;
        let var = if config.reps > 1 { ((sum_sq[t - 1] / reps - mean * mean) * reps / (reps - 1.0)).max(0.0) } else { 0.0 };
        let half = z * (var / reps).sqrt();
        let rhs = (1.0 - kappa).powi((t - 1) as i32) * initial_err2 + offset;
        worst_gap = worst_gap.max(mean - rhs);
        steps.push(StepRow { t, mean_err2: mean, lemma_rhs: rhs, ci_lo: mean - half, ci_hi: mean + half });
    }
    let tail = &steps[config.burn_in..];
    let plateau = tail.iter().map(|s| s.mean_err2).sum::<f64>() / tail.len() as f64;

    let radius = params.base_radius(options.eps);
    let windows: Vec<WindowRow> = windows_spec
        .iter()
        .zip(&window_len)
        .enumerate()
        .map(|(k, (&(c, min_t), len))| {
            let violations = if len.is_some() { window_err.iter().filter(|w| w[k] > radius).count() as u64 } else { 0 };
            WindowRow {
                c,
                min_t,
                feasible: len.is_some(),
                radius,
                violations,
                reps: config.reps as u64,
                frequency: if len.is_some() { violations as f64 / reps } else { f64::NAN },
            }
        })
        .collect();
    let points = options
        .c_sweep
        .iter()
        .map(|&c| {
            let b = elo_point_bound(&params, options.eps, Some(c))?;
            let violations_at_horizon = (b.burn_in <= horizon as u64)
                .then(|| final_err.iter().filter(|&&e| e >= b.radius).count() as u64);
            Ok(PointRow { c, burn_in: b.burn_in, radius: b.radius, probability: b.probability, violations_at_horizon })
        })
        .collect::<Result<_>>()?;
    let selected_c = windows.iter().filter(|w| w.feasible).map(|w| w.c).fold(None, |a: Option<f64>, c| Some(a.map_or(c, |a| a.min(c))));

    Ok(TrackingReport {
        players: n,
        eta: config.eta,
        box_radius: m,
        env: config.env.name().to_string(),
        reps: config.reps,
        horizon,
        burn_in: config.burn_in,
        lambda,
        kappa,
        drift,
        drift_envelope,
        drift_consistent,
        h_rho,
        h_q,
        initial_err2,
        noise_floor,
        steps,
        lemma_dominated: worst_gap <= 0.0,
        worst_lemma_gap: worst_gap,
        plateau,
        windows,
        points,
        selected_c,
        delta: options.delta,
    })
}
