//! Randomised checks of the supporting matrix and Markov-kernel inequalities.
//!
//! Every check draws its instances from `StreamKey::root(seed).child(check).child(i)`,
//! so a failing instance can be replayed from the reported stream id.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::chain::{FiniteKernel, FiniteMarkovModel, FiniteMetricSpace, KernelSequence, ObservableSequence};
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::linalg::{expm_hermitian, op_norm, trace_exp, ComplexMatrix, HermitianMatrix};
use crate::models::{lazy_mix_kernel, random_hermitian, random_kernel, random_metric, random_observable, random_probability};
use crate::rng::{StreamKey, StreamRng};
use crate::spectral::{sigma_between, weighted_frobenius};
use crate::transport::{effective_kappa, ollivier_kappa, tilted_sum, CurvatureProfile};

use super::renewal_coefficients;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    /// Smallest `rhs − lhs` over all instances, relative to `max(1, |rhs|)`.
    pub worst_margin: f64,
    /// Stream id of the instance attaining `worst_margin`.
    pub repro_seed: u64,
}

impl LemmaCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaReport {
    pub seed: u64,
    pub checks: Vec<LemmaCheck>,
}

impl LemmaReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(LemmaCheck::passed)
    }
}

type Instance = fn(StreamKey) -> Result<(f64, f64)>;

const CHECKS: [(&str, f64, Instance); 13] = [
    ("matrix_hoeffding", 1e-10, hoeffding),
    ("exp_norm", 1e-10, exp_norm),
    ("exp_difference_op", 1e-9, exp_difference_op),
    ("exp_difference_frobenius", 1e-9, exp_difference_frob),
    ("lipschitz_product", 1e-10, lipschitz_product),
    ("diameter_centering", 1e-10, diameter_centering),
    ("lipschitz_lift", 1e-9, lipschitz_lift),
    ("l2_lift", 1e-9, l2_lift),
    ("sigma_at_most_one", 1e-12, sigma_at_most_one),
    ("tilted_sum", 1e-9, tilted_sum_check),
    ("curvature_coefficients", 1e-9, curvature_coefficients),
    ("spectral_coefficients", 1e-9, spectral_coefficients),
    ("trace_exponential", 1e-12, trace_exponential),
];

/// Runs every check on `count` random instances.
pub fn verify_lemma_suite(seed: u64, count: usize, exec: &Exec) -> Result<LemmaReport> {
    if count == 0 {
        return Err(LabError::InvalidInput("lemma suite needs at least one instance".into()));
    }
    let root = StreamKey::root(seed);
    let checks = CHECKS
        .iter()
        .enumerate()
        .map(|(c, &(name, tol, f))| run_check(name, tol, f, root.child(c as u64), count, exec))
        .collect::<Result<_>>()?;
    Ok(LemmaReport { seed, checks })
}

fn run_check(name: &str, tol: f64, f: Instance, key: StreamKey, count: usize, exec: &Exec) -> Result<LemmaCheck> {
    let results = exec.map(count, |i| f(key.child(i as u64)).map(|r| (key.child(i as u64).id(), r)));
    let mut check = LemmaCheck {
        name: name.to_string(),
        instances: count,
        failures: 0,
        worst_margin: f64::INFINITY,
        repro_seed: key.id(),
    };
    for r in results {
        let (id, (lhs, rhs)) = r?;
        let scale = rhs.abs().max(1.0);
        if lhs > rhs + tol * scale {
            check.failures += 1;
        }
        let margin = (rhs - lhs) / scale;
        if margin < check.worst_margin {
            check.worst_margin = margin;
            check.repro_seed = id;
        }
    }
    Ok(check)
}

fn complex_gaussian(m: usize, scale: f64, rng: &mut StreamRng) -> ComplexMatrix {
    DMatrix::from_fn(m, m, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * scale
    })
}

/// Lipschitz constant of a matrix-valued map in operator norm.
fn lip(space: &FiniteMetricSpace, f: &[ComplexMatrix]) -> f64 {
    let mut best = 0.0f64;
    for x in 0..f.len() {
        for y in x + 1..f.len() {
            best = best.max(op_norm(&(&f[x] - &f[y])) / space.d(x, y));
        }
    }
    best
}

fn sup_norm(f: &[ComplexMatrix]) -> f64 {
    f.iter().map(op_norm).fold(0.0, f64::max)
}

fn hermitian_table(size: usize, m: usize, rng: &mut StreamRng) -> Vec<HermitianMatrix> {
    let scale = 0.1 + 2.0 * rng.random::<f64>();
    (0..size).map(|_| random_hermitian(m, scale, rng)).collect()
}

fn raw(table: &[HermitianMatrix]) -> Vec<ComplexMatrix> {
    table.iter().map(|h| h.as_matrix().clone()).collect()
}

/// `E Y = 0`, `‖Y‖ ≤ R`: `λ_max(E e^{sY}) ≤ cosh(sR) ≤ e^{s²R²/2}`.
fn hoeffding(key: StreamKey) -> Result<(f64, f64)> {
    let mut rng = key.rng();
    let m = rng.random_range(1..=4);
    let k = rng.random_range(2..=5);
    let p = random_probability(k, &mut rng);
    let ys: Vec<HermitianMatrix> = (0..k).map(|_| random_hermitian(m, 1.0, &mut rng)).collect();
    let mean = HermitianMatrix::weighted_sum(m, p.iter().cloned().zip(&ys));
    let ys: Vec<HermitianMatrix> = ys.iter().map(|y| y.sub(&mean)).collect();
    let r = ys.iter().map(|y| y.op_norm()).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    let s = 3.0 * rng.random::<f64>() / r.max(1e-12);
    let exps = ys.iter().map(|y| expm_hermitian(y, s)).collect::<Result<Vec<_>>>()?;
    let e = HermitianMatrix::weighted_sum(m, p.iter().cloned().zip(&exps));
    let cosh = (s * r).cosh();
    debug_assert!(cosh <= (s * s * r * r / 2.0).exp() * (1.0 + 1e-12));
    Ok((e.lambda_max()?, cosh))
}

/// `‖e^H‖ ≤ e^{‖H‖}` for a general complex `H`.
fn exp_norm(key: StreamKey) -> Result<(f64, f64)> {
    let mut rng = key.rng();
    let m = rng.random_range(1..=4);
    let h = complex_gaussian(m, 0.1 + rng.random::<f64>(), &mut rng);
    Ok((op_norm(&h.clone().exp()), op_norm(&h).exp()))
}

fn exp_pair(key: StreamKey) -> (ComplexMatrix, ComplexMatrix) {
    let mut rng = key.rng();
    let m = rng.random_range(1..=4);
    let a = complex_gaussian(m, 0.1 + rng.random::<f64>(), &mut rng);
    // half the time a nearby B, where the first-order term is tight
    let b = if rng.random::<bool>() {
        &a + complex_gaussian(m, 1e-3, &mut rng)
    } else {
        complex_gaussian(m, 0.1 + rng.random::<f64>(), &mut rng)
    };
    (a, b)
}

/// `‖e^A − e^B‖ ≤ e^{max(‖A‖, ‖B‖)} ‖A − B‖`.
fn exp_difference_op(key: StreamKey) -> Result<(f64, f64)> {
    let (a, b) = exp_pair(key);
    let growth = op_norm(&a).max(op_norm(&b)).exp();
    Ok((op_norm(&(a.clone().exp() - b.clone().exp())), growth * op_norm(&(a - b))))
}

/// Same with Frobenius norms of both differences.
fn exp_difference_frob(key: StreamKey) -> Result<(f64, f64)> {
    let (a, b) = exp_pair(key);
    let growth = op_norm(&a).max(op_norm(&b)).exp();
    Ok(((a.clone().exp() - b.clone().exp()).norm(), growth * (a - b).norm()))
}

/// `Lip(GH) ≤ ‖G‖_∞ Lip(H) + Lip(G) ‖H‖_∞`.
fn lipschitz_product(key: StreamKey) -> Result<(f64, f64)> {
    let mut rng = key.rng();
    let size = rng.random_range(2..=6);
    let m = rng.random_range(1..=3);
    let space = random_metric(size, &mut rng)?;
    let g: Vec<ComplexMatrix> = (0..size).map(|_| complex_gaussian(m, 1.0, &mut rng)).collect();
    let h: Vec<ComplexMatrix> = (0..size).map(|_| complex_gaussian(m, 1.0, &mut rng)).collect();
    let gh: Vec<ComplexMatrix> = g.iter().zip(&h).map(|(a, b)| a * b).collect();
    Ok((lip(&space, &gh), sup_norm(&g) * lip(&space, &h) + lip(&space, &g) * sup_norm(&h)))
}

/// `‖H − μ(H)‖_∞ ≤ D · Lip(H)`.
fn diameter_centering(key: StreamKey) -> Result<(f64, f64)> {
    let mut rng = key.rng();
    let size = rng.random_range(2..=6);
    let m = rng.random_range(1..=3);
    let space = random_metric(size, &mut rng)?;
    let mu = random_probability(size, &mut rng);
    let h = hermitian_table(size, m, &mut rng);
    let mean = HermitianMatrix::weighted_sum(m, mu.iter().cloned().zip(&h));
    let centered: Vec<ComplexMatrix> = h.iter().map(|x| x.sub(&mean).into_matrix()).collect();
    Ok((sup_norm(&centered), space.diameter() * lip(&space, &raw(&h))))
}

fn single_step(space: FiniteMetricSpace, mu0: Vec<f64>, kernel: FiniteKernel) -> Result<FiniteMarkovModel> {
    FiniteMarkovModel::new(space, mu0, KernelSequence::homogeneous(kernel))
}

/// `Lip(PF)^op ≤ (1 − κ) Lip(F)^op` with `κ` the measured coarse curvature of `P`.
fn lipschitz_lift(key: StreamKey) -> Result<(f64, f64)> {
    let mut rng = key.rng();
    let size = rng.random_range(2..=6);
    let m = rng.random_range(1..=3);
    let space = random_metric(size, &mut rng)?;
    let kernel = if rng.random::<bool>() { lazy_mix_kernel(&space, &mut rng) } else { random_kernel(size, &mut rng) };
    let f = hermitian_table(size, m, &mut rng);
    let pf = kernel.apply_matrix(&f);
    let mu0 = vec![1.0 / size as f64; size];
    let kappa = ollivier_kappa(&single_step(space.clone(), mu0, kernel)?, 1)?;
    Ok((lip(&space, &raw(&pf)), (1.0 - kappa) * lip(&space, &raw(&f))))
}

/// `‖P F‖_{2,μ_prev} ≤ σ ‖F‖_{2,μ_next}` for `F` centred under `μ_next`.
fn l2_lift(key: StreamKey) -> Result<(f64, f64)> {
    let mut rng = key.rng();
    let size = rng.random_range(2..=6);
    let m = rng.random_range(1..=3);
    let kernel = random_kernel(size, &mut rng);
    let prev = random_probability(size, &mut rng);
    let next = kernel.push_forward(&prev);
    let f = hermitian_table(size, m, &mut rng);
    let mean = HermitianMatrix::weighted_sum(m, next.iter().cloned().zip(&f));
    let f: Vec<HermitianMatrix> = f.iter().map(|x| x.sub(&mean)).collect();
    let sigma = sigma_between(&prev, &kernel, &next)?;
    Ok((weighted_frobenius(&prev, &kernel.apply_matrix(&f)), sigma * weighted_frobenius(&next, &f)))
}

fn sigma_at_most_one(key: StreamKey) -> Result<(f64, f64)> {
    let mut rng = key.rng();
    let size = rng.random_range(2..=8);
    let kernel = random_kernel(size, &mut rng);
    // sparse initial laws exercise the support restriction
    let mut prev = random_probability(size, &mut rng);
    if rng.random::<bool>() {
        prev.iter_mut().take(size / 2).for_each(|p| *p = 0.0);
        let s: f64 = prev.iter().sum();
        prev.iter_mut().for_each(|p| *p /= s);
    }
    let next = kernel.push_forward(&prev);
    Ok((sigma_between(&prev, &kernel, &next)?, 1.0))
}

/// `Σ_i e^{πκ(i−1)/24} ∏ (1 − κ_ℓ) ≤ 3/κ` at the effective curvature.
fn tilted_sum_check(key: StreamKey) -> Result<(f64, f64)> {
    let mut rng = key.rng();
    let n = rng.random_range(1..=50);
    let floor = 10f64.powf(-3.0 * rng.random::<f64>());
    let kappas: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { floor + (1.0 - floor) * rng.random::<f64>() })
        .collect();
    let profile = CurvatureProfile::new(kappas)?;
    let kappa = effective_kappa(&profile).value;
    let worst = (1..=n).map(|k| tilted_sum(&profile, kappa, k)).collect::<Result<Vec<_>>>()?;
    Ok((worst.into_iter().fold(0.0, f64::max), 3.0 / kappa))
}

struct ChainInstance {
    model: FiniteMarkovModel,
    obs: ObservableSequence,
    n: usize,
}

fn small_chain(key: StreamKey) -> Result<ChainInstance> {
    let mut rng = key.child(u64::MAX).rng();
    let size = rng.random_range(2..=4);
    let m = rng.random_range(1..=2);
    let n = rng.random_range(1..=4);
    let model = crate::models::random_lazy_chain(size, key)?;
    let obs = random_observable(size, m, n, 0.2 + rng.random::<f64>(), &mut rng);
    Ok(ChainInstance { model, obs, n })
}

/// The worst ratio `b_{n,i} / bound_i` under the curvature coefficient bounds.
fn curvature_coefficients(key: StreamKey) -> Result<(f64, f64)> {
    let c = small_chain(key)?;
    let space = c.model.space();
    let l = (1..=c.n).map(|t| crate::chain::lipschitz_op(&c.obs, space, t)).collect::<Result<Vec<_>>>()?;
    let ld = l.into_iter().fold(0.0, f64::max) * space.diameter();
    let mut rng = key.child(u64::MAX - 1).rng();
    let s = rng.random::<f64>() / ld;
    let phi = std::f64::consts::PI * (rng.random::<f64>() - 0.5);
    let kappas = (1..=c.n).map(|t| ollivier_kappa(&c.model, t)).collect::<Result<Vec<_>>>()?;
    let ledger = renewal_coefficients(&c.model, &c.obs, s, phi, c.n)?;
    let mut worst = 0.0f64;
    for (i, &b) in (1..=c.n).zip(&ledger.b) {
        let bound = if i == 1 {
            (s * s * ld * ld / 2.0).exp()
        } else {
            let tilt = (2.0 * s * ld).exp();
            2.0 * s * s * ld * ld * (c.n - i + 2..=c.n).map(|l| tilt * (1.0 - kappas[l - 1])).product::<f64>()
        };
        worst = worst.max(b / bound);
    }
    Ok((worst, 1.0))
}

/// Same under the spectral coefficient bounds, `s ≤ 1/(8Δ_op)`.
fn spectral_coefficients(key: StreamKey) -> Result<(f64, f64)> {
    let c = small_chain(key)?;
    let space = c.model.space();
    let mut d_op = 0.0f64;
    let mut d_f = 0.0f64;
    for t in 1..=c.n {
        d_op = d_op.max(crate::chain::oscillation_op(&c.obs, space, t)?);
        d_f = d_f.max(crate::chain::oscillation_frob(&c.obs, space, t)?);
    }
    let mut rng = key.child(u64::MAX - 1).rng();
    let s = rng.random::<f64>() / (8.0 * d_op);
    let phi = std::f64::consts::PI * (rng.random::<f64>() - 0.5);
    let sigmas = crate::spectral::sigma_profile(&c.model, c.n)?;
    let ledger = renewal_coefficients(&c.model, &c.obs, s, phi, c.n)?;
    let e = (s * d_op).exp();
    let mut worst = 0.0f64;
    for (i, &b) in (1..=c.n).zip(&ledger.b) {
        let bound = if i == 1 {
            (2.0 * s * s * d_op * d_f).exp()
        } else {
            4.0 * s * s * d_op * d_f * e * (c.n - i + 2..=c.n).map(|l| e * sigmas.sigmas()[l - 1]).product::<f64>()
        };
        worst = worst.max(b / bound);
    }
    Ok((worst, 1.0))
}

/// `e^{s λ_max(A)} ≤ tr e^{sA}`.
fn trace_exponential(key: StreamKey) -> Result<(f64, f64)> {
    let mut rng = key.rng();
    let m = rng.random_range(1..=5);
    let a = random_hermitian(m, 1.0, &mut rng);
    let s = 4.0 * rng.random::<f64>();
    let lhs = (s * a.lambda_max()?).exp();
    let rhs = trace_exp(&a.scale(s))?;
    Ok((lhs, rhs))
}
