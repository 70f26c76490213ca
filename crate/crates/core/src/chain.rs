//! Time-inhomogeneous Markov chains on finite metric spaces.
//!
//! States are indices `0..size`; the metric is an explicit distance matrix.
//! Kernels are either an explicit finite list (`P_1, …, P_T`) or a rule
//! `t ↦ P_t` for unbounded horizons.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::linalg::HermitianMatrix;
use crate::rng::{cumulative, sample_cumulative, StreamKey};

const METRIC_TOL: f64 = 1e-9;
const STOCHASTIC_TOL: f64 = 1e-12;
const MASS_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetricSpace {
    size: usize,
    dist: Vec<f64>,
    diameter: f64,
}

impl FiniteMetricSpace {
    /// Validates symmetry, zero diagonal, nonnegativity and (optionally) the
    /// triangle inequality, all within `1e-9`.
    pub fn new(dist: Vec<Vec<f64>>, check_triangle: bool) -> Result<Self> {
        let size = dist.len();
        if size == 0 {
            return Err(LabError::InvalidInput("metric space must be nonempty".into()));
        }
        if dist.iter().any(|row| row.len() != size) {
            return Err(LabError::DimensionMismatch("distance matrix must be square".into()));
        }
        for i in 0..size {
            if dist[i][i].abs() > METRIC_TOL {
                return Err(LabError::InvalidInput(format!("d({i},{i}) = {} is not zero", dist[i][i])));
            }
            for j in 0..size {
                let d = dist[i][j];
                if !d.is_finite() || d < -METRIC_TOL {
                    return Err(LabError::InvalidInput(format!("d({i},{j}) = {d} is not a finite nonnegative distance")));
                }
                if (d - dist[j][i]).abs() > METRIC_TOL {
                    return Err(LabError::InvalidInput(format!("distance matrix not symmetric at ({i},{j})")));
                }
                if i != j && d <= 0.0 {
                    return Err(LabError::InvalidInput(format!("distinct states {i},{j} at distance zero")));
                }
            }
        }
        if check_triangle {
            for i in 0..size {
                for j in 0..size {
                    for k in 0..size {
                        if dist[i][k] > dist[i][j] + dist[j][k] + METRIC_TOL {
                            return Err(LabError::InvalidInput(format!(
                                "triangle inequality fails: d({i},{k}) > d({i},{j}) + d({j},{k})"
                            )));
                        }
                    }
                }
            }
        }
        let flat: Vec<f64> = dist.into_iter().flatten().collect();
        let diameter = flat.iter().cloned().fold(0.0, f64::max);
        Ok(FiniteMetricSpace { size, dist: flat, diameter })
    }

    /// Points on the real line with `d(x, y) = |x - y|`.
    pub fn on_line(points: &[f64]) -> Result<Self> {
        let dist = points
            .iter()
            .map(|a| points.iter().map(|b| (a - b).abs()).collect())
            .collect();
        Self::new(dist, false)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn d(&self, x: usize, y: usize) -> f64 {
        self.dist[x * self.size + y]
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Diameter of a subset of states (0 for sets of size ≤ 1).
    pub fn subset_diameter(&self, states: &[usize]) -> f64 {
        let mut best = 0.0f64;
        for (a, &x) in states.iter().enumerate() {
            for &y in &states[a + 1..] {
                best = best.max(self.d(x, y));
            }
        }
        best
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.size).map(|r| r.to_vec()).collect()
    }
}

/// Row-stochastic matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteKernel {
    size: usize,
    rows: Vec<f64>,
}

impl FiniteKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 || rows.iter().any(|r| r.len() != size) {
            return Err(LabError::DimensionMismatch("kernel must be a nonempty square matrix".into()));
        }
        for (x, row) in rows.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(LabError::InvalidInput(format!("kernel row {x} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(LabError::InvalidInput(format!("kernel row {x} sums to {s}, not 1")));
            }
        }
        Ok(FiniteKernel { size, rows: rows.into_iter().flatten().collect() })
    }

    /// Normalises each row of a nonnegative weight matrix before validating.
    pub fn from_weights(weights: Vec<Vec<f64>>) -> Result<Self> {
        let rows = weights
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|w| w / s).collect()
            })
            .collect();
        Self::new(rows)
    }

    pub fn identity(size: usize) -> Self {
        let mut rows = vec![0.0; size * size];
        for i in 0..size {
            rows[i * size + i] = 1.0;
        }
        FiniteKernel { size, rows }
    }

    /// Every row equal to `pi`: one-step mixing.
    pub fn rank_one(pi: &[f64]) -> Result<Self> {
        Self::new(vec![pi.to_vec(); pi.len()])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.rows[x * self.size + y]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x * self.size..(x + 1) * self.size]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.rows.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    /// `μP`.
    pub fn push_forward(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (x, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(x)) {
                *o += m * p;
            }
        }
        out
    }

    /// `(Pf)(x) = Σ_y P(x,y) f(y)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.size)
            .map(|x| self.row(x).iter().zip(f).map(|(p, v)| p * v).sum())
            .collect()
    }

    /// `(PF)(x) = Σ_y P(x,y) F(y)` for a matrix-valued function given as a table.
    pub fn apply_matrix(&self, f: &[HermitianMatrix]) -> Vec<HermitianMatrix> {
        let m = f[0].dim();
        (0..self.size)
            .map(|x| HermitianMatrix::weighted_sum(m, self.row(x).iter().cloned().zip(f.iter())))
            .collect()
    }

    /// States reachable in one step from `x`.
    pub fn support(&self, x: usize) -> Vec<usize> {
        self.row(x)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(y, _)| y)
            .collect()
    }
}

type KernelRule = Arc<dyn Fn(usize) -> FiniteKernel + Send + Sync>;

/// The kernels `P_1, P_2, …` of a chain.
#[derive(Clone)]
pub enum KernelSequence {
    Explicit(Vec<FiniteKernel>),
    Rule(KernelRule),
}

impl fmt::Debug for KernelSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSequence::Explicit(k) => write!(f, "Explicit({} kernels)", k.len()),
            KernelSequence::Rule(_) => write!(f, "Rule(..)"),
        }
    }
}

impl KernelSequence {
    pub fn rule<F>(f: F) -> Self
    where
        F: Fn(usize) -> FiniteKernel + Send + Sync + 'static,
    {
        KernelSequence::Rule(Arc::new(f))
    }

    /// The same kernel at every step.
    pub fn homogeneous(kernel: FiniteKernel) -> Self {
        Self::rule(move |_| kernel.clone())
    }

    /// `kernels[(t - 1) mod len]`.
    pub fn periodic(kernels: Vec<FiniteKernel>) -> Self {
        Self::rule(move |t| kernels[(t - 1) % kernels.len()].clone())
    }

    pub fn horizon(&self) -> Option<usize> {
        match self {
            KernelSequence::Explicit(k) => Some(k.len()),
            KernelSequence::Rule(_) => None,
        }
    }

    /// `P_t` for `t ≥ 1`.
    pub fn kernel(&self, t: usize) -> Result<Cow<'_, FiniteKernel>> {
        if t == 0 {
            return Err(LabError::InvalidInput("kernels are indexed from t = 1".into()));
        }
        match self {
            KernelSequence::Explicit(k) => k
                .get(t - 1)
                .map(Cow::Borrowed)
                .ok_or(LabError::Horizon { requested: t, available: k.len() }),
            KernelSequence::Rule(f) => Ok(Cow::Owned(f(t))),
        }
    }
}

/// Initial law plus kernel sequence on a finite metric space.
#[derive(Clone, Debug)]
pub struct FiniteMarkovModel {
    space: FiniteMetricSpace,
    mu0: Vec<f64>,
    kernels: KernelSequence,
}

impl FiniteMarkovModel {
    pub fn new(space: FiniteMetricSpace, mu0: Vec<f64>, kernels: KernelSequence) -> Result<Self> {
        let n = space.size();
        if mu0.len() != n {
            return Err(LabError::DimensionMismatch(format!("mu0 has {} entries, space has {n}", mu0.len())));
        }
        if mu0.iter().any(|&p| !(p >= 0.0)) || (mu0.iter().sum::<f64>() - 1.0).abs() > MASS_TOL {
            return Err(LabError::InvalidInput("mu0 must be a probability vector".into()));
        }
        let check = |k: &FiniteKernel, t: usize| {
            if k.size() != n {
                Err(LabError::DimensionMismatch(format!("kernel P_{t} has size {}, space has {n}", k.size())))
            } else {
                Ok(())
            }
        };
        match &kernels {
            KernelSequence::Explicit(list) => {
                for (i, k) in list.iter().enumerate() {
                    check(k, i + 1)?;
                }
            }
            KernelSequence::Rule(f) => check(&f(1), 1)?,
        }
        Ok(FiniteMarkovModel { space, mu0, kernels })
    }

    pub fn space(&self) -> &FiniteMetricSpace {
        &self.space
    }

    pub fn size(&self) -> usize {
        self.space.size()
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn kernels(&self) -> &KernelSequence {
        &self.kernels
    }

    pub fn kernel(&self, t: usize) -> Result<Cow<'_, FiniteKernel>> {
        let k = self.kernels.kernel(t)?;
        if k.size() != self.size() {
            return Err(LabError::DimensionMismatch(format!("kernel P_{t} has the wrong size")));
        }
        Ok(k)
    }

    /// `P_1, …, P_n` as owned kernels.
    pub fn materialize(&self, n: usize) -> Result<Vec<FiniteKernel>> {
        (1..=n).map(|t| self.kernel(t).map(Cow::into_owned)).collect()
    }

    /// `μ_1, …, μ_t` with `μ_k = μ_{k-1} P_k`.
    pub fn propagate(&self, t: usize) -> Result<Vec<Vec<f64>>> {
        if t == 0 {
            return Err(LabError::InvalidInput("propagate needs t >= 1".into()));
        }
        let mut all = self.marginals(t)?;
        all.remove(0);
        Ok(all)
    }

    /// `μ_0, μ_1, …, μ_t` (length `t + 1`).
    pub fn marginals(&self, t: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(t + 1);
        out.push(self.mu0.clone());
        for k in 1..=t {
            let next = self.kernel(k)?.push_forward(&out[k - 1]);
            out.push(next);
        }
        Ok(out)
    }
}

/// Free-function form of [`FiniteMarkovModel::propagate`].
pub fn propagate(model: &FiniteMarkovModel, t: usize) -> Result<Vec<Vec<f64>>> {
    model.propagate(t)
}

type ObservableFn = Arc<dyn Fn(usize, usize) -> HermitianMatrix + Send + Sync>;

/// Time-indexed Hermitian-valued observables `F_t : Ω → H_m`, `t ≥ 1`.
#[derive(Clone)]
pub struct ObservableSequence {
    dim: usize,
    horizon: Option<usize>,
    eval: ObservableFn,
}

impl fmt::Debug for ObservableSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObservableSequence")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ObservableSequence {
    pub fn from_fn<F>(dim: usize, horizon: Option<usize>, f: F) -> Self
    where
        F: Fn(usize, usize) -> HermitianMatrix + Send + Sync + 'static,
    {
        ObservableSequence { dim, horizon, eval: Arc::new(f) }
    }

    pub fn constant(c: HermitianMatrix) -> Self {
        let dim = c.dim();
        Self::from_fn(dim, None, move |_, _| c.clone())
    }

    /// `F_t(x) = table[x]` for every `t`.
    pub fn homogeneous(table: Vec<HermitianMatrix>) -> Result<Self> {
        Self::periodic(vec![table])
    }

    /// `F_t(x) = tables[(t - 1) mod len][x]`.
    pub fn periodic(tables: Vec<Vec<HermitianMatrix>>) -> Result<Self> {
        let dim = tables
            .first()
            .and_then(|t| t.first())
            .map(|a| a.dim())
            .ok_or_else(|| LabError::InvalidInput("empty observable table".into()))?;
        let states = tables[0].len();
        if tables.iter().any(|t| t.len() != states || t.iter().any(|a| a.dim() != dim)) {
            return Err(LabError::DimensionMismatch("observable tables disagree in shape".into()));
        }
        Ok(Self::from_fn(dim, None, move |t, x| tables[(t - 1) % tables.len()][x].clone()))
    }

    /// Scalar observable `F_t(x) = values[x]`.
    pub fn scalar(values: &[f64]) -> Self {
        let table: Vec<_> = values.iter().map(|&v| HermitianMatrix::scalar(v)).collect();
        Self::from_fn(1, None, move |_, x| table[x].clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    pub fn eval(&self, t: usize, x: usize) -> HermitianMatrix {
        (self.eval)(t, x)
    }

    fn check_time(&self, t: usize) -> Result<()> {
        match self.horizon {
            Some(h) if t > h => Err(LabError::Horizon { requested: t, available: h }),
            _ if t == 0 => Err(LabError::InvalidInput("observables are indexed from t = 1".into())),
            _ => Ok(()),
        }
    }

    /// `[F_t(0), …, F_t(size-1)]`.
    pub fn table(&self, t: usize, size: usize) -> Result<Vec<HermitianMatrix>> {
        self.check_time(t)?;
        let table: Vec<_> = (0..size).map(|x| self.eval(t, x)).collect();
        if table.iter().any(|a| a.dim() != self.dim) {
            return Err(LabError::DimensionMismatch(format!("observable at t = {t} changes dimension")));
        }
        Ok(table)
    }
}

/// A sampled path `X_0, X_1, …, X_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub initial: usize,
    /// `states[t - 1] = X_t`.
    pub states: Vec<usize>,
    pub stream: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `X_t` for `1 ≤ t ≤ n`.
    pub fn at(&self, t: usize) -> usize {
        self.states[t - 1]
    }
}

/// Cumulative transition tables for repeated path sampling up to a horizon.
///
/// Step `t` of a path on stream `k` uses the uniform `k.uniform(t)`; `X_0`
/// uses counter 0.
#[derive(Clone, Debug)]
pub struct PathSampler {
    size: usize,
    horizon: usize,
    initial: Vec<f64>,
    // cumulative rows, indexed [(t - 1) * size + x]
    steps: Vec<Vec<f64>>,
}

impl PathSampler {
    pub fn new(model: &FiniteMarkovModel, n: usize) -> Result<Self> {
        let size = model.size();
        let mut steps = Vec::with_capacity(n * size);
        for t in 1..=n {
            let k = model.kernel(t)?;
            for x in 0..size {
                steps.push(cumulative(k.row(x)));
            }
        }
        Ok(PathSampler { size, horizon: n, initial: cumulative(model.mu0()), steps })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Walks one path, calling `visit(t, X_t)` for `t = 1..=n`; returns `X_0`.
    #[inline]
    pub fn walk<F: FnMut(usize, usize)>(&self, stream: StreamKey, mut visit: F) -> usize {
        let x0 = sample_cumulative(&self.initial, stream.uniform(0));
        let mut x = x0;
        for t in 1..=self.horizon {
            x = sample_cumulative(&self.steps[(t - 1) * self.size + x], stream.uniform(t as u64));
            visit(t, x);
        }
        x0
    }

    pub fn sample(&self, stream: StreamKey) -> Trajectory {
        let mut states = Vec::with_capacity(self.horizon);
        let initial = self.walk(stream, |_, x| states.push(x));
        Trajectory { initial, states, stream: stream.id() }
    }
}

/// One path of length `n`; identical stream keys give identical paths.
pub fn sample_trajectory(model: &FiniteMarkovModel, n: usize, stream: StreamKey) -> Result<Trajectory> {
    if n == 0 {
        return Err(LabError::InvalidInput("trajectory horizon must be >= 1".into()));
    }
    Ok(PathSampler::new(model, n)?.sample(stream))
}

/// `E F_t(X_t) = Σ_x μ_t(x) F_t(x)`.
pub fn exact_mean(model: &FiniteMarkovModel, obs: &ObservableSequence, t: usize) -> Result<HermitianMatrix> {
    let mu = model.marginals(t)?;
    mean_under(&mu[t], &obs.table(t, model.size())?)
}

/// Exact means for `t = 1..=n`.
pub fn exact_means(model: &FiniteMarkovModel, obs: &ObservableSequence, n: usize) -> Result<Vec<HermitianMatrix>> {
    let mu = model.marginals(n)?;
    (1..=n).map(|t| mean_under(&mu[t], &obs.table(t, model.size())?)).collect()
}

pub fn mean_under(mu: &[f64], table: &[HermitianMatrix]) -> Result<HermitianMatrix> {
    if mu.len() != table.len() {
        return Err(LabError::DimensionMismatch("measure and table lengths differ".into()));
    }
    Ok(HermitianMatrix::weighted_sum(table[0].dim(), mu.iter().cloned().zip(table.iter())))
}

/// `S = Σ_{t=1}^n (F_t(X_t) − E F_t(X_t))`.
pub fn centered_sum(traj: &Trajectory, obs: &ObservableSequence, means: &[HermitianMatrix]) -> Result<HermitianMatrix> {
    if means.len() != traj.len() {
        return Err(LabError::DimensionMismatch(format!(
            "{} means for a trajectory of length {}",
            means.len(),
            traj.len()
        )));
    }
    let m = obs.dim();
    let mut acc = HermitianMatrix::zeros(m);
    for (t, mean) in (1..=traj.len()).zip(means) {
        acc = acc.add(&obs.eval(t, traj.at(t)).sub(mean));
    }
    Ok(acc)
}

/// `Lip(F_t)^op = max_{x≠y} ‖F_t(x) − F_t(y)‖_op / d(x, y)`.
pub fn lipschitz_op(obs: &ObservableSequence, space: &FiniteMetricSpace, t: usize) -> Result<f64> {
    let table = obs.table(t, space.size())?;
    let mut best = 0.0f64;
    for x in 0..space.size() {
        for y in x + 1..space.size() {
            best = best.max(table[x].sub(&table[y]).op_norm()? / space.d(x, y));
        }
    }
    Ok(best)
}

/// `osc(F_t) = max_{x,y} ‖F_t(x) − F_t(y)‖_op`.
pub fn oscillation_op(obs: &ObservableSequence, space: &FiniteMetricSpace, t: usize) -> Result<f64> {
    let table = obs.table(t, space.size())?;
    let mut best = 0.0f64;
    for x in 0..table.len() {
        for y in x + 1..table.len() {
            best = best.max(table[x].sub(&table[y]).op_norm()?);
        }
    }
    Ok(best)
}

/// `max_{x,y} ‖F_t(x) − F_t(y)‖_F`.
pub fn oscillation_frob(obs: &ObservableSequence, space: &FiniteMetricSpace, t: usize) -> Result<f64> {
    let table = obs.table(t, space.size())?;
    let mut best = 0.0f64;
    for x in 0..table.len() {
        for y in x + 1..table.len() {
            best = best.max(table[x].sub(&table[y]).frobenius_norm());
        }
    }
    Ok(best)
}

/// Largest diameter of a one-step support, `max_x diam supp P_t(x, ·)`.
pub fn granularity(model: &FiniteMarkovModel, t: usize) -> Result<f64> {
    let k = model.kernel(t)?;
    Ok((0..model.size())
        .map(|x| model.space().subset_diameter(&k.support(x)))
        .fold(0.0, f64::max))
}

/// Calls `visit(path, probability)` for every positive-probability path
/// `(X_1, …, X_n)`, with `X_0` marginalised out. Refuses when `|Ω|^n` exceeds `guard`.
pub fn for_each_path<F>(model: &FiniteMarkovModel, n: usize, guard: f64, mut visit: F) -> Result<()>
where
    F: FnMut(&[usize], f64),
{
    let size = model.size();
    let paths = (size as f64).powi(n as i32);
    if paths > guard {
        return Err(LabError::EnumerationGuard { paths, guard });
    }
    let kernels = model.materialize(n)?;
    let mu1 = kernels[0].push_forward(model.mu0());
    let mut path = Vec::with_capacity(n);

    fn rec<F: FnMut(&[usize], f64)>(
        kernels: &[FiniteKernel],
        path: &mut Vec<usize>,
        prob: f64,
        n: usize,
        visit: &mut F,
    ) {
        if path.len() == n {
            visit(path, prob);
            return;
        }
        let t = path.len() + 1;
        let last = *path.last().expect("path starts nonempty");
        for (y, &p) in kernels[t - 1].row(last).iter().enumerate() {
            if p > 0.0 {
                path.push(y);
                rec(kernels, path, prob * p, n, visit);
                path.pop();
            }
        }
    }

    if n == 0 {
        visit(&[], 1.0);
        return Ok(());
    }
    for (x1, &p) in mu1.iter().enumerate() {
        if p > 0.0 {
            path.push(x1);
            rec(&kernels, &mut path, p, n, &mut visit);
            path.pop();
        }
    }
    Ok(())
}
