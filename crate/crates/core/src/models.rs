//! Named model constructors and random instance generators.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::chain::{FiniteKernel, FiniteMarkovModel, FiniteMetricSpace, KernelSequence, ObservableSequence};
use crate::error::{LabError, Result};
use crate::linalg::HermitianMatrix;
use crate::rng::{StreamKey, StreamRng};

/// Identity kernel at every step.
pub fn identity_model(space: FiniteMetricSpace, mu0: Vec<f64>) -> Result<FiniteMarkovModel> {
    let n = space.size();
    FiniteMarkovModel::new(space, mu0, KernelSequence::homogeneous(FiniteKernel::identity(n)))
}

/// Every row equal to `pi`.
pub fn mixing_model(space: FiniteMetricSpace, mu0: Vec<f64>, pi: &[f64]) -> Result<FiniteMarkovModel> {
    FiniteMarkovModel::new(space, mu0, KernelSequence::homogeneous(FiniteKernel::rank_one(pi)?))
}

/// Grid `x_j = jD/G`, `G = 2^k`, for the halving chain `x ↦ x/2` or `x/2 + D/2`
/// with equal odds. From odd `j`, the target `j/2` falls between grid points
/// and its mass is split evenly between the two neighbours.
pub fn dyadic_grid(k: u32, diameter: f64, mu0: Option<Vec<f64>>) -> Result<FiniteMarkovModel> {
    if !(1..=12).contains(&k) {
        return Err(LabError::InvalidInput(format!("dyadic grid level {k} outside 1..=12")));
    }
    let g = 1usize << k;
    let size = g + 1;
    let points: Vec<f64> = (0..size).map(|j| j as f64 * diameter / g as f64).collect();
    let space = FiniteMetricSpace::on_line(&points)?;
    let rows = (0..size)
        .map(|j| {
            let mut row = vec![0.0; size];
            for shift in [0, g / 2] {
                if j % 2 == 0 {
                    row[j / 2 + shift] += 0.5;
                } else {
                    row[j / 2 + shift] += 0.25;
                    row[j / 2 + 1 + shift] += 0.25;
                }
            }
            row
        })
        .collect();
    let mu0 = mu0.unwrap_or_else(|| vec![1.0 / size as f64; size]);
    FiniteMarkovModel::new(space, mu0, KernelSequence::homogeneous(FiniteKernel::new(rows)?))
}

/// Exponential(1) weights normalised to a probability vector.
pub fn random_probability(size: usize, rng: &mut StreamRng) -> Vec<f64> {
    let w: Vec<f64> = (0..size).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Distances drawn from `[1, 2]`; any such symmetric matrix is a metric.
pub fn random_metric(size: usize, rng: &mut StreamRng) -> Result<FiniteMetricSpace> {
    let mut d = vec![vec![0.0; size]; size];
    for i in 0..size {
        for j in i + 1..size {
            let v = 1.0 + rng.random::<f64>();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    FiniteMetricSpace::new(d, true)
}

pub fn random_kernel(size: usize, rng: &mut StreamRng) -> FiniteKernel {
    let rows = (0..size).map(|_| random_probability(size, rng)).collect();
    FiniteKernel::new(rows).expect("normalised rows")
}

/// `P = a R + (1 − a) 1πᵀ` with `a ≤ 0.9 d_min / D`, so every pair contracts
/// and `κ ≥ 0.1`.
pub fn lazy_mix_kernel(space: &FiniteMetricSpace, rng: &mut StreamRng) -> FiniteKernel {
    let n = space.size();
    let mut dmin = f64::INFINITY;
    for x in 0..n {
        for y in x + 1..n {
            dmin = dmin.min(space.d(x, y));
        }
    }
    let cap = if n > 1 { 0.9 * dmin / space.diameter() } else { 1.0 };
    let a = cap * rng.random::<f64>();
    let r = random_kernel(n, rng);
    let pi = random_probability(n, rng);
    let rows = (0..n)
        .map(|x| (0..n).map(|y| a * r.p(x, y) + (1.0 - a) * pi[y]).collect())
        .collect();
    FiniteKernel::from_weights(rows).expect("convex combination of stochastic rows")
}

/// A random inhomogeneous chain whose kernel at step `t` is a deterministic
/// function of `(seed, t)`.
pub fn random_lazy_chain(size: usize, key: StreamKey) -> Result<FiniteMarkovModel> {
    let mut rng = key.child(0).rng();
    let space = random_metric(size, &mut rng)?;
    let mu0 = random_probability(size, &mut rng);
    let sp = space.clone();
    let rule = move |t: usize| lazy_mix_kernel(&sp, &mut key.child(t as u64).rng());
    FiniteMarkovModel::new(space, mu0, KernelSequence::rule(rule))
}

/// Unrestricted random chain with explicit kernels (curvature may be negative).
pub fn random_chain(size: usize, horizon: usize, key: StreamKey) -> Result<FiniteMarkovModel> {
    let mut rng = key.rng();
    let space = random_metric(size, &mut rng)?;
    let mu0 = random_probability(size, &mut rng);
    let kernels = (0..horizon).map(|_| random_kernel(size, &mut rng)).collect();
    FiniteMarkovModel::new(space, mu0, KernelSequence::Explicit(kernels))
}

/// Hermitian matrix with standard complex Gaussian entries times `scale`.
pub fn random_hermitian(m: usize, scale: f64, rng: &mut StreamRng) -> HermitianMatrix {
    let a = nalgebra::DMatrix::from_fn(m, m, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * scale
    });
    HermitianMatrix::new(a).expect("square")
}

/// Observable table cycling through `period` random Hermitian tables.
pub fn random_observable(size: usize, m: usize, period: usize, scale: f64, rng: &mut StreamRng) -> ObservableSequence {
    let tables = (0..period)
        .map(|_| (0..size).map(|_| random_hermitian(m, scale, rng)).collect())
        .collect();
    ObservableSequence::periodic(tables).expect("consistent shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::granularity;
    use crate::transport::ollivier_kappa;
    use approx::assert_relative_eq;

    #[test]
    fn dyadic_grid_curvature_and_granularity() {
        let m = dyadic_grid(4, 16.0, None).unwrap();
        assert_relative_eq!(ollivier_kappa(&m, 1).unwrap(), 0.5, epsilon = 1e-12);
        // odd states split their mass over a cell of width D/G
        assert_relative_eq!(granularity(&m, 1).unwrap(), 8.0 + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lazy_mix_contracts() {
        for seed in 0..5 {
            let m = random_lazy_chain(4, StreamKey::root(seed)).unwrap();
            for t in 1..=5 {
                assert!(ollivier_kappa(&m, t).unwrap() >= 0.1 - 1e-9);
            }
        }
    }
}
