//! Exact evaluation of the trace functionals `a_j` and the renewal coefficients.

use num_complex::Complex64;
use serde::Serialize;

use crate::chain::{exact_means, FiniteKernel, FiniteMarkovModel, ObservableSequence};
use crate::error::{LabError, Result};
use crate::linalg::{expm_hermitian, expm_scaled, frobenius_norm, ComplexMatrix, HermitianMatrix};

const GUARD: f64 = 1e6;
const SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenewalLedger {
    pub n: usize,
    pub s: f64,
    pub phi: f64,
    pub m: usize,
    /// `a_0, …, a_n`.
    pub a: Vec<f64>,
    /// `B_{n,1}, …, B_{n,n}` (empty when only `a` was requested).
    #[serde(skip)]
    pub big_b: Vec<HermitianMatrix>,
    /// `b_{n,i} = ‖B_{n,i}‖_op`.
    pub b: Vec<f64>,
}

struct Setup {
    m: usize,
    kernels: Vec<FiniteKernel>,
    /// `μ_0, …, μ_n`.
    marginals: Vec<Vec<f64>>,
    /// `F̃_t(x)` for `t = 1..=n`, indexed `[t - 1][x]`.
    centered: Vec<Vec<HermitianMatrix>>,
}

impl Setup {
    fn new(model: &FiniteMarkovModel, obs: &ObservableSequence, n: usize) -> Result<Self> {
        let means = exact_means(model, obs, n)?;
        let centered = (1..=n)
            .map(|t| Ok(obs.table(t, model.size())?.iter().map(|f| f.sub(&means[t - 1])).collect()))
            .collect::<Result<Vec<Vec<_>>>>()?;
        Ok(Setup { m: obs.dim(), kernels: model.materialize(n)?, marginals: model.marginals(n)?, centered })
    }

    /// `W_t(x) = exp(½ e^{iφ} s F̃_t(x))`.
    fn w(&self, t: usize, s: f64, phi: f64) -> Result<Vec<ComplexMatrix>> {
        let z = Complex64::from_polar(0.5 * s, phi);
        self.centered[t - 1].iter().map(|f| expm_scaled(f, z)).collect()
    }
}

fn check_inputs(s: f64, phi: f64) -> Result<()> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(LabError::InvalidInput(format!("s must be finite and nonnegative, got {s}")));
    }
    if !(phi.abs() <= std::f64::consts::FRAC_PI_2 + 1e-12) {
        return Err(LabError::InvalidInput(format!("phi = {phi} outside [-pi/2, pi/2]")));
    }
    Ok(())
}

/// `a_j = E tr(M_j M_j*)` for `j = 0..=n`, summing over every path.
pub fn exact_an(model: &FiniteMarkovModel, obs: &ObservableSequence, s: f64, phi: f64, n: usize) -> Result<RenewalLedger> {
    check_inputs(s, phi)?;
    let m = obs.dim();
    let mut ledger = RenewalLedger { n, s, phi, m, a: vec![m as f64], big_b: Vec::new(), b: Vec::new() };
    if n == 0 {
        return Ok(ledger);
    }
    let size = model.size();
    let paths = (size as f64).powi(n as i32);
    if paths > GUARD {
        return Err(LabError::EnumerationGuard { paths, guard: GUARD });
    }
    let setup = Setup::new(model, obs, n)?;
    let w: Vec<Vec<ComplexMatrix>> = (1..=n).map(|t| setup.w(t, s, phi)).collect::<Result<_>>()?;
    let mut a = vec![0.0; n + 1];
    a[0] = m as f64;

    struct Walk<'a> {
        kernels: &'a [FiniteKernel],
        w: &'a [Vec<ComplexMatrix>],
        a: &'a mut [f64],
        n: usize,
    }
    fn descend(walk: &mut Walk<'_>, t: usize, x: usize, prob: f64, prefix: &ComplexMatrix) {
        let product = prefix * &walk.w[t - 1][x];
        walk.a[t] += prob * frobenius_norm(&product).powi(2);
        if t == walk.n {
            return;
        }
        for (y, &p) in walk.kernels[t].row(x).iter().enumerate() {
            if p > 0.0 {
                descend(walk, t + 1, y, prob * p, &product);
            }
        }
    }

    let identity = ComplexMatrix::identity(m, m);
    let mut walk = Walk { kernels: &setup.kernels, w: &w, a: &mut a, n };
    for (x, &p) in setup.marginals[1].iter().enumerate() {
        if p > 0.0 {
            descend(&mut walk, 1, x, p, &identity);
        }
    }
    ledger.a = a;
    Ok(ledger)
}

fn coefficients_for(setup: &Setup, n: usize, s: f64, phi: f64) -> Result<Vec<HermitianMatrix>> {
    let m = setup.m;
    let gamma = phi.cos();
    let mean_under = |t: usize, table: &[HermitianMatrix]| {
        HermitianMatrix::weighted_sum(m, setup.marginals[t].iter().cloned().zip(table))
    };
    let theta: Vec<HermitianMatrix> =
        setup.centered[n - 1].iter().map(|f| expm_hermitian(f, s * gamma)).collect::<Result<_>>()?;
    let mut big_b = vec![mean_under(n, &theta)];
    let mut h: Vec<HermitianMatrix> = theta.iter().map(|th| th.sub(&big_b[0])).collect();
    for i in 2..=n {
        let tau = n - i + 1;
        let g = setup.kernels[tau].apply_matrix(&h);
        let w = setup.w(tau, s, phi)?;
        let theta: Vec<HermitianMatrix> = w
            .iter()
            .zip(&g)
            .map(|(wx, gx)| HermitianMatrix::new(wx * gx.as_matrix() * wx.adjoint()))
            .collect::<Result<_>>()?;
        let b = mean_under(tau, &theta);
        h = theta.iter().map(|th| th.sub(&b)).collect();
        big_b.push(b);
    }
    Ok(big_b)
}

/// `B_{n,i}` and `b_{n,i}` for `i = 1..=n` by the backward recursion.
pub fn renewal_coefficients(
    model: &FiniteMarkovModel,
    obs: &ObservableSequence,
    s: f64,
    phi: f64,
    n: usize,
) -> Result<RenewalLedger> {
    check_inputs(s, phi)?;
    if n == 0 {
        return Err(LabError::InvalidInput("renewal coefficients need n >= 1".into()));
    }
    let setup = Setup::new(model, obs, n)?;
    let big_b = coefficients_for(&setup, n, s, phi)?;
    let b = big_b.iter().map(|x| x.op_norm()).collect::<Result<_>>()?;
    Ok(RenewalLedger { n, s, phi, m: obs.dim(), a: Vec::new(), big_b, b })
}

/// `Σ_i b_{k,i}` for every horizon `k = 1..=n`.
pub fn renewal_sums(model: &FiniteMarkovModel, obs: &ObservableSequence, s: f64, phi: f64, n: usize) -> Result<Vec<f64>> {
    check_inputs(s, phi)?;
    let setup = Setup::new(model, obs, n)?;
    (1..=n)
        .map(|k| {
            coefficients_for(&setup, k, s, phi)?
                .iter()
                .map(|b| b.op_norm())
                .sum::<Result<f64>>()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenewalReport {
    pub ledger: RenewalLedger,
    /// `a_n`.
    pub lhs: f64,
    /// `Σ_i b_{n,i} a_{n−i}`.
    pub rhs: f64,
    pub holds: bool,
    /// `max(0, max_{k≤n} (Σ_i b_{k,i} − 1)/s²)`; `None` when `s = 0`.
    pub measured_c: Option<f64>,
    /// `a_k ≤ m (1 + C s²)^k` for every `k ≤ n`.
    pub close_holds: bool,
}

/// Checks `a_n ≤ Σ_i b_{n,i} a_{n−i}` and the growth bound it implies.
pub fn verify_renewal(model: &FiniteMarkovModel, obs: &ObservableSequence, s: f64, phi: f64, n: usize) -> Result<RenewalReport> {
    let an = exact_an(model, obs, s, phi, n)?;
    let coeffs = renewal_coefficients(model, obs, s, phi, n)?;
    let lhs = an.a[n];
    let rhs: f64 = (1..=n).map(|i| coeffs.b[i - 1] * an.a[n - i]).sum();
    let holds = lhs <= rhs + SLACK;

    let m = obs.dim() as f64;
    let (measured_c, close_holds) = if s > 0.0 {
        let sums = renewal_sums(model, obs, s, phi, n)?;
        let c = sums.iter().map(|t| (t - 1.0) / (s * s)).fold(0.0, f64::max);
        let growth = 1.0 + c * s * s;
        let ok = (0..=n).all(|k| an.a[k] <= m * growth.powi(k as i32) * (1.0 + 1e-12) + SLACK);
        (Some(c), ok)
    } else {
        (None, an.a.iter().all(|&a| (a - m).abs() <= SLACK))
    };
    let ledger = RenewalLedger { a: an.a, ..coeffs };
    Ok(RenewalReport { ledger, lhs, rhs, holds, measured_c, close_holds })
}
