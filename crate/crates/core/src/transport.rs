//! Exact Wasserstein-1 on finite metric spaces and Ollivier curvature.

use crate::chain::{FiniteMarkovModel, FiniteMetricSpace};
use crate::error::{LabError, Result};
use crate::exec::Exec;

const MARGINAL_TOL: f64 = 1e-8;
const CLAMP_FLOOR: f64 = -1e-6;
const WEAK: f64 = 1e-6;

/// An optimal coupling of two measures and its cost.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    /// `coupling[x][y]` = mass moved from `x` to `y`.
    pub coupling: Vec<Vec<f64>>,
    pub cost: f64,
}

/// `W_1(μ, ν)` with the optimal plan, by the transportation simplex.
pub fn wasserstein1(mu: &[f64], nu: &[f64], space: &FiniteMetricSpace) -> Result<TransportPlan> {
    let n = space.size();
    if mu.len() != n || nu.len() != n {
        return Err(LabError::DimensionMismatch(format!(
            "measures of length {} and {} on a space of size {n}",
            mu.len(),
            nu.len()
        )));
    }
    let (sm, sn) = (mu.iter().sum::<f64>(), nu.iter().sum::<f64>());
    if (sm - sn).abs() > MARGINAL_TOL || mu.iter().chain(nu).any(|&p| !(p >= 0.0)) {
        return Err(LabError::InvalidInput(format!("infeasible marginals: masses {sm} and {sn}")));
    }

    // Shared mass stays put; only the excess needs to move.
    let mut coupling = vec![vec![0.0; n]; n];
    let mut supply = Vec::new();
    let mut demand = Vec::new();
    for x in 0..n {
        let keep = mu[x].min(nu[x]);
        coupling[x][x] = keep;
        if mu[x] - keep > 0.0 {
            supply.push((x, mu[x] - keep));
        }
        if nu[x] - keep > 0.0 {
            demand.push((x, nu[x] - keep));
        }
    }
    if !supply.is_empty() && !demand.is_empty() {
        let total_s: f64 = supply.iter().map(|s| s.1).sum();
        let total_d: f64 = demand.iter().map(|d| d.1).sum();
        let scale = total_s / total_d;
        let a: Vec<f64> = supply.iter().map(|s| s.1).collect();
        let b: Vec<f64> = demand.iter().map(|d| d.1 * scale).collect();
        let cost: Vec<Vec<f64>> = supply
            .iter()
            .map(|&(x, _)| demand.iter().map(|&(y, _)| space.d(x, y)).collect())
            .collect();
        for (i, j, v) in transportation_simplex(&a, &b, &cost)? {
            coupling[supply[i].0][demand[j].0] += v;
        }
    }
    let mut total = 0.0;
    for (x, row) in coupling.iter().enumerate() {
        for (y, &v) in row.iter().enumerate() {
            total += v * space.d(x, y);
        }
    }
    Ok(TransportPlan { coupling, cost: total })
}

/// Solves the balanced transportation problem; returns nonzero basic cells.
fn transportation_simplex(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> Result<Vec<(usize, usize, f64)>> {
    let (r, c) = (a.len(), b.len());
    let nodes = r + c;
    let mut flow = vec![vec![0.0; c]; r];
    let mut basic = vec![vec![false; c]; r];

    // north-west corner start: a monotone staircase of r + c - 1 cells
    let (mut s, mut d) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let x = s[i].min(d[j]).max(0.0);
        flow[i][j] = x;
        basic[i][j] = true;
        s[i] -= x;
        d[j] -= x;
        if i == r - 1 && j == c - 1 {
            break;
        }
        if i == r - 1 {
            j += 1;
        } else if j == c - 1 || s[i] <= d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let cmax = cost.iter().flatten().cloned().fold(0.0, f64::max).max(1.0);
    let tol = 1e-12 * cmax;
    let cap = 20 * r * c + 1000;
    let mut u = vec![0.0; r];
    let mut v = vec![0.0; c];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut parent = vec![usize::MAX; nodes];

    for iter in 0..cap {
        // rebuild the spanning tree and potentials u_i + v_j = c_ij
        for list in adj.iter_mut() {
            list.clear();
        }
        for (i, row) in basic.iter().enumerate() {
            for (j, &on) in row.iter().enumerate() {
                if on {
                    adj[i].push(r + j);
                    adj[r + j].push(i);
                }
            }
        }
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        parent[0] = 0;
        u[0] = 0.0;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            for &next in &adj[node] {
                if parent[next] != usize::MAX {
                    continue;
                }
                parent[next] = node;
                if node < r {
                    v[next - r] = cost[node][next - r] - u[node];
                } else {
                    u[next] = cost[next][node - r] - v[node - r];
                }
                stack.push(next);
            }
        }
        if parent.contains(&usize::MAX) {
            return Err(LabError::Numerical("transportation basis is not a spanning tree".into()));
        }

        // pricing: Dantzig rule, switching to first-improving late to avoid cycling
        let bland = iter > cap / 2;
        let mut enter = None;
        let mut best = -tol;
        'scan: for i in 0..r {
            for j in 0..c {
                if basic[i][j] {
                    continue;
                }
                let rc = cost[i][j] - u[i] - v[j];
                if rc < best {
                    enter = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = rc;
                }
            }
        }
        let Some((ei, ej)) = enter else {
            let mut out = Vec::new();
            for (i, row) in flow.iter().enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    if basic[i][j] && x > 0.0 {
                        out.push((i, j, x));
                    }
                }
            }
            return Ok(out);
        };

        // tree path from column node ej up to the root, and from row ei; join at the common ancestor
        let path_to_root = |mut node: usize| {
            let mut p = vec![node];
            while node != 0 {
                node = parent[node];
                p.push(node);
            }
            p
        };
        let from_row = path_to_root(ei);
        let from_col = path_to_root(r + ej);
        let mut k1 = from_row.len();
        let mut k2 = from_col.len();
        while k1 > 0 && k2 > 0 && from_row[k1 - 1] == from_col[k2 - 1] {
            k1 -= 1;
            k2 -= 1;
        }
        // node sequence ei -> lca -> r+ej
        let mut path: Vec<usize> = from_row[..=k1].to_vec();
        path.extend(from_col[..k2].iter().rev());

        let cell = |p: usize, q: usize| if p < r { (p, q - r) } else { (q, p - r) };
        let mut theta = f64::INFINITY;
        let mut leave = None;
        for (k, w) in path.windows(2).enumerate() {
            if k % 2 == 0 {
                let (i, j) = cell(w[0], w[1]);
                if flow[i][j] < theta {
                    theta = flow[i][j];
                    leave = Some((i, j));
                }
            }
        }
        let (li, lj) = leave.ok_or_else(|| LabError::Numerical("degenerate pivot cycle".into()))?;
        for (k, w) in path.windows(2).enumerate() {
            let (i, j) = cell(w[0], w[1]);
            if k % 2 == 0 {
                flow[i][j] = (flow[i][j] - theta).max(0.0);
            } else {
                flow[i][j] += theta;
            }
        }
        flow[ei][ej] = theta;
        basic[ei][ej] = true;
        basic[li][lj] = false;
        flow[li][lj] = 0.0;
    }
    Err(LabError::Numerical(format!("transportation simplex hit its iteration cap ({cap})")))
}

/// `W_1` for atoms on the real line: `∫ |F_μ − F_ν|`.
pub fn wasserstein1_on_line(points: &[f64], mu: &[f64], nu: &[f64]) -> Result<f64> {
    if points.len() != mu.len() || points.len() != nu.len() {
        return Err(LabError::DimensionMismatch("points and weights differ in length".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let mut gap = 0.0;
    let mut total = 0.0;
    for w in order.windows(2) {
        gap += mu[w[0]] - nu[w[0]];
        total += gap.abs() * (points[w[1]] - points[w[0]]);
    }
    Ok(total)
}

/// `W_1` between `½δ_{x/2} + ½δ_{x/2+D/2}` and the same for `y`: the dyadic
/// chain's one-step laws from `x` and `y`. Both laws have two equal atoms in
/// the same order, so the sorted matching is optimal and moves each by `|x − y|/2`.
pub fn dyadic_step_w1(x: f64, y: f64, diameter: f64) -> f64 {
    debug_assert!(diameter > 0.0);
    (x - y).abs() / 2.0
}

/// `1 − W_1(P(x,·), P(y,·)) / |x − y|` for the dyadic chain.
pub fn dyadic_pair_kappa(x: f64, y: f64, diameter: f64) -> f64 {
    1.0 - dyadic_step_w1(x, y, diameter) / (x - y).abs()
}

/// `κ_t = min_{x≠y} 1 − W_1(P_t(x,·), P_t(y,·)) / d(x,y)`.
pub fn ollivier_kappa(model: &FiniteMarkovModel, t: usize) -> Result<f64> {
    let kernel = model.kernel(t)?;
    let space = model.space();
    let n = space.size();
    let mut kappa = 1.0f64;
    for x in 0..n {
        for y in x + 1..n {
            let w = wasserstein1(kernel.row(x), kernel.row(y), space)?.cost;
            kappa = kappa.min(1.0 - w / space.d(x, y));
        }
    }
    Ok(kappa)
}

/// Per-step curvatures `κ_1..κ_T` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureProfile {
    kappas: Vec<f64>,
    clamped: usize,
}

impl CurvatureProfile {
    /// Values in `[−1e−6, 0)` are rounding noise and clamp to 0; anything
    /// lower means the chain expands somewhere and is rejected.
    pub fn new(kappas: Vec<f64>) -> Result<Self> {
        if kappas.is_empty() {
            return Err(LabError::InvalidInput("empty curvature profile".into()));
        }
        let mut clamped = 0;
        let mut out = Vec::with_capacity(kappas.len());
        for (i, &k) in kappas.iter().enumerate() {
            if !(CLAMP_FLOOR..=1.0 + 1e-9).contains(&k) {
                return Err(LabError::InvariantViolation(format!("kappa_{} = {k} is outside [0, 1]", i + 1)));
            }
            if k < 0.0 {
                clamped += 1;
            }
            out.push(k.clamp(0.0, 1.0));
        }
        Ok(CurvatureProfile { kappas: out, clamped })
    }

    /// Number of entries that were clamped up to 0.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn len(&self) -> usize {
        self.kappas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappas.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.kappas.iter().cloned().fold(1.0, f64::min)
    }
}

/// `κ_1..κ_T` of a model.
pub fn curvature_profile(model: &FiniteMarkovModel, horizon: usize, exec: &Exec) -> Result<CurvatureProfile> {
    let kappas: Result<Vec<f64>> = exec.map(horizon, |i| ollivier_kappa(model, i + 1)).into_iter().collect();
    CurvatureProfile::new(kappas?)
}

/// An aggregate constant together with an "assumption weak" flag (value below 1e−6).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub value: f64,
    pub weak: bool,
}

impl Aggregate {
    pub(crate) fn from_worst_sum(worst: f64) -> Self {
        let value = 1.0 / worst;
        Aggregate { value, weak: value < WEAK }
    }
}

/// Largest `κ` with `1 + Σ_{k≤t} ∏_{ℓ=k}^{t} (1 − κ_ℓ) ≤ 1/κ` for every `t ≤ T`.
pub fn effective_kappa(profile: &CurvatureProfile) -> Aggregate {
    let mut acc = 0.0f64;
    let mut worst = 1.0f64;
    for &k in profile.kappas() {
        acc = (1.0 - k) * (1.0 + acc);
        worst = worst.max(1.0 + acc);
    }
    Aggregate::from_worst_sum(worst)
}

/// Windowed variant: the same bound over every window `s ≤ t`.
pub fn effective_kappa_tilde(profile: &CurvatureProfile) -> Aggregate {
    // for a fixed start s the windowed sum grows with t, so t = T is the worst
    let mut acc = 0.0f64;
    let mut worst = 1.0f64;
    for &k in profile.kappas().iter().rev() {
        acc = (1.0 - k) * (1.0 + acc);
        worst = worst.max(1.0 + acc);
    }
    Aggregate::from_worst_sum(worst)
}

/// `Σ_{i=1}^n e^{πκ(i−1)/24} ∏_{ℓ=n−i+2}^{n} (1 − κ_ℓ)`.
pub fn tilted_sum(profile: &CurvatureProfile, kappa: f64, n: usize) -> Result<f64> {
    if n == 0 || n > profile.len() {
        return Err(LabError::Horizon { requested: n, available: profile.len() });
    }
    let tilt = (std::f64::consts::PI * kappa / 24.0).exp();
    let k = profile.kappas();
    let mut acc = 1.0;
    for t in 2..=n {
        acc = 1.0 + tilt * (1.0 - k[t - 1]) * acc;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{FiniteKernel, KernelSequence};
    use approx::assert_relative_eq;

    fn line(n: usize) -> FiniteMetricSpace {
        FiniteMetricSpace::on_line(&(0..n).map(|i| i as f64).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn two_point_examples() {
        let s = line(2);
        assert_eq!(wasserstein1(&[0.3, 0.7], &[0.3, 0.7], &s).unwrap().cost, 0.0);
        assert_relative_eq!(wasserstein1(&[1.0, 0.0], &[0.0, 1.0], &s).unwrap().cost, 1.0);
        let plan = wasserstein1(&[0.7, 0.3], &[0.2, 0.8], &s).unwrap();
        assert_relative_eq!(plan.cost, 0.5, epsilon = 1e-15);
        assert_relative_eq!(plan.coupling[0][1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_marginals() {
        let s = line(2);
        assert!(matches!(wasserstein1(&[1.0, 0.0], &[0.5, 0.4], &s), Err(LabError::InvalidInput(_))));
        assert!(matches!(wasserstein1(&[1.0], &[1.0, 0.0], &s), Err(LabError::DimensionMismatch(_))));
    }

    #[test]
    fn plan_is_feasible_on_a_cycle() {
        // 5-cycle graph metric
        let n = 5;
        let dist: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| { let k = (i as i64 - j as i64).rem_euclid(n as i64) as f64; k.min(n as f64 - k) }).collect())
            .collect();
        let s = FiniteMetricSpace::new(dist, true).unwrap();
        let mu = [0.4, 0.1, 0.0, 0.3, 0.2];
        let nu = [0.0, 0.2, 0.5, 0.1, 0.2];
        let plan = wasserstein1(&mu, &nu, &s).unwrap();
        for x in 0..n {
            assert_relative_eq!(plan.coupling[x].iter().sum::<f64>(), mu[x], epsilon = 1e-12);
            assert_relative_eq!((0..n).map(|y| plan.coupling[y][x]).sum::<f64>(), nu[x], epsilon = 1e-12);
        }
        // 0.4 from 0 -> {1: .1, 2: .3}? cheapest is 0->1 (.1, d1), 0->2 (.3, d2), 3->2 (.2, d1)
        assert_relative_eq!(plan.cost, 0.1 + 0.6 + 0.2, epsilon = 1e-12);
    }

    #[test]
    fn line_oracle_small() {
        let pts = [0.0, 1.0, 3.0];
        let mu = [0.5, 0.5, 0.0];
        let nu = [0.0, 0.5, 0.5];
        assert_relative_eq!(wasserstein1_on_line(&pts, &mu, &nu).unwrap(), 0.5 + 1.0);
        let s = FiniteMetricSpace::on_line(&pts).unwrap();
        assert_relative_eq!(wasserstein1(&mu, &nu, &s).unwrap().cost, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn kappa_extremes() {
        let s = line(3);
        let mix = FiniteMarkovModel::new(
            s.clone(),
            vec![1.0, 0.0, 0.0],
            KernelSequence::homogeneous(FiniteKernel::rank_one(&[0.2, 0.5, 0.3]).unwrap()),
        )
        .unwrap();
        assert_relative_eq!(ollivier_kappa(&mix, 1).unwrap(), 1.0, epsilon = 1e-15);
        let id = FiniteMarkovModel::new(s, vec![1.0, 0.0, 0.0], KernelSequence::homogeneous(FiniteKernel::identity(3))).unwrap();
        assert_relative_eq!(ollivier_kappa(&id, 1).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn dyadic_closed_form() {
        assert_relative_eq!(dyadic_pair_kappa(0.0, 1024.0, 1024.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(dyadic_pair_kappa(3.5, 17.25, 1024.0), 0.5, epsilon = 1e-15);
        for (x, y) in [(0.3, 900.1), (511.0, 512.0), (1000.0, 2.5)] {
            let pts = [x / 2.0, x / 2.0 + 512.0, y / 2.0, y / 2.0 + 512.0];
            let cdf = wasserstein1_on_line(&pts, &[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.5, 0.5]).unwrap();
            assert_relative_eq!(dyadic_step_w1(x, y, 1024.0), cdf, max_relative = 1e-12);
        }
    }

    #[test]
    fn effective_kappa_examples() {
        let one = CurvatureProfile::new(vec![1.0; 5]).unwrap();
        assert_eq!(effective_kappa(&one).value, 1.0);
        assert_eq!(effective_kappa_tilde(&one).value, 1.0);
        let half = CurvatureProfile::new(vec![0.5; 3]).unwrap();
        assert_relative_eq!(effective_kappa(&half).value, 1.0 / 1.875, epsilon = 1e-15);
        let c = CurvatureProfile::new(vec![0.1; 2000]).unwrap();
        assert_relative_eq!(effective_kappa(&c).value, 0.1, epsilon = 1e-12);
        assert_relative_eq!(effective_kappa_tilde(&c).value, 0.1, epsilon = 1e-12);
        let alt = CurvatureProfile::new((0..10).map(|t| (t % 2) as f64).collect()).unwrap();
        assert_relative_eq!(effective_kappa_tilde(&alt).value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn weak_flag_and_clamping() {
        let zero = CurvatureProfile::new(vec![0.0; 10]).unwrap();
        let k = effective_kappa(&zero);
        assert_relative_eq!(k.value, 1.0 / 11.0, epsilon = 1e-15);
        assert!(!k.weak);
        let p = CurvatureProfile::new(vec![-1e-9, 0.5]).unwrap();
        assert_eq!(p.kappas()[0], 0.0);
        assert_eq!(p.clamped(), 1);
        assert!(CurvatureProfile::new(vec![-1e-3]).is_err());
    }

    #[test]
    fn tilted_sum_examples() {
        let one = CurvatureProfile::new(vec![1.0; 4]).unwrap();
        assert_eq!(tilted_sum(&one, 1.0, 1).unwrap(), 1.0);
        assert_eq!(tilted_sum(&one, 1.0, 4).unwrap(), 1.0);
        let p = CurvatureProfile::new(vec![0.3, 0.2, 0.5]).unwrap();
        let tilt = (std::f64::consts::PI * 0.25 / 24.0).exp();
        assert_relative_eq!(tilted_sum(&p, 0.25, 3).unwrap(), 1.0 + tilt * 0.5 + tilt * tilt * 0.5 * 0.8, epsilon = 1e-15);
    }
}
