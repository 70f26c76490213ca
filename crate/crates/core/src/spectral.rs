//! One-step L² contraction coefficients and the effective spectral gap.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::chain::{FiniteKernel, FiniteMarkovModel};
use crate::error::{LabError, Result};
use crate::linalg::HermitianMatrix;
use crate::transport::Aggregate;

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaProfile {
    sigmas: Vec<f64>,
}

impl SigmaProfile {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(LabError::InvalidInput("empty sigma profile".into()));
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0 && **s <= 1.0 + 1e-10)) {
            return Err(LabError::InvariantViolation(format!("sigma = {s} is outside [0, 1]")));
        }
        Ok(SigmaProfile { sigmas: sigmas.into_iter().map(|s| s.min(1.0)).collect() })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

/// Norm of `P` from mean-zero `L²(μ_next)` into `L²(μ_prev)`, both restricted to their supports.
pub fn sigma_between(prev: &[f64], kernel: &FiniteKernel, next: &[f64]) -> Result<f64> {
    let rows: Vec<usize> = (0..prev.len()).filter(|&x| prev[x] > 0.0).collect();
    let cols: Vec<usize> = (0..next.len()).filter(|&y| next[y] > 0.0).collect();
    for &x in &rows {
        if kernel.row(x).iter().enumerate().any(|(y, &p)| p > 0.0 && next[y] <= 0.0) {
            return Err(LabError::Numerical(format!("state reachable from {x} carries no mass at the next step")));
        }
    }
    let root: Vec<f64> = cols.iter().map(|&y| next[y].sqrt()).collect();
    let b = DMatrix::from_fn(rows.len(), cols.len(), |a, c| {
        prev[rows[a]].sqrt() * kernel.p(rows[a], cols[c]) / root[c]
    });
    // B (I − u uᵀ) with u = D^{1/2} 1
    let u = nalgebra::DVector::from_vec(root);
    let bu = &b * &u;
    let proj = b - bu * u.transpose();
    let gram = proj.transpose() * &proj;
    let eig = SymmetricEigen::try_new(gram, 1e-15, 10_000)
        .ok_or(LabError::EigenNonConvergence { dim: cols.len() })?;
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    Ok(top.max(0.0).sqrt())
}

/// `σ_t = ‖P_t‖_{L²₀(μ_t) → L²₀(μ_{t−1})}`.
pub fn sigma_t(model: &FiniteMarkovModel, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(LabError::InvalidInput("sigma_t needs t >= 1".into()));
    }
    let mu = model.marginals(t)?;
    sigma_between(&mu[t - 1], &*model.kernel(t)?, &mu[t])
}

/// `σ_1..σ_T` from a single propagation pass.
pub fn sigma_profile(model: &FiniteMarkovModel, horizon: usize) -> Result<SigmaProfile> {
    let mu = model.marginals(horizon)?;
    let sigmas = (1..=horizon)
        .map(|t| sigma_between(&mu[t - 1], &*model.kernel(t)?, &mu[t]))
        .collect::<Result<Vec<_>>>()?;
    SigmaProfile::new(sigmas)
}

/// `λ = 1 / max_t Σ_{k=1}^{t+1} ∏_{ℓ=k}^{t} σ_ℓ`.
pub fn effective_lambda(profile: &SigmaProfile) -> Aggregate {
    let mut g = 1.0f64;
    let mut worst = 1.0f64;
    for &s in profile.sigmas() {
        g = 1.0 + s * g;
        worst = worst.max(g);
    }
    Aggregate::from_worst_sum(worst)
}

/// `‖F‖_{2,μ} = (Σ_x μ(x) ‖F(x)‖_F²)^{1/2}`.
pub fn weighted_frobenius(mu: &[f64], table: &[HermitianMatrix]) -> f64 {
    mu.iter()
        .zip(table)
        .map(|(w, a)| w * a.frobenius_norm().powi(2))
        .sum::<f64>()
        .sqrt()
}
