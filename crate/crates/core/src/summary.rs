//! Per-step and aggregate constants of a finite chain with an observable.

use serde::Serialize;

use crate::bounds::BoundParams;
use crate::chain::{granularity, lipschitz_op, oscillation_frob, oscillation_op, FiniteMarkovModel, ObservableSequence};
use crate::error::Result;
use crate::exec::Exec;
use crate::spectral::{effective_lambda, sigma_profile};
use crate::transport::{curvature_profile, effective_kappa, effective_kappa_tilde, Aggregate};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepSummary {
    pub t: usize,
    pub kappa: f64,
    pub sigma: f64,
    pub lipschitz: f64,
    pub osc_op: f64,
    pub osc_frob: f64,
    pub granularity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainSummary {
    pub m: usize,
    pub horizon: usize,
    pub diameter: f64,
    pub steps: Vec<StepSummary>,
    pub kappa_eff: f64,
    pub kappa_weak: bool,
    pub kappa_tilde: f64,
    pub kappa_tilde_weak: bool,
    pub kappa_min: f64,
    pub lambda_eff: f64,
    pub lambda_weak: bool,
    pub lipschitz: f64,
    pub delta_op: f64,
    pub delta_f: f64,
    pub sigma_inf: f64,
    pub clamped_kappas: usize,
}

impl ChainSummary {
    pub fn compute(model: &FiniteMarkovModel, obs: &ObservableSequence, horizon: usize, exec: &Exec) -> Result<Self> {
        let kappas = curvature_profile(model, horizon, exec)?;
        let sigmas = sigma_profile(model, horizon)?;
        let space = model.space();
        let per_step: Vec<Result<StepSummary>> = exec.map(horizon, |i| {
            let t = i + 1;
            Ok(StepSummary {
                t,
                kappa: kappas.kappas()[i],
                sigma: sigmas.sigmas()[i],
                lipschitz: lipschitz_op(obs, space, t)?,
                osc_op: oscillation_op(obs, space, t)?,
                osc_frob: oscillation_frob(obs, space, t)?,
                granularity: granularity(model, t)?,
            })
        });
        let steps = per_step.into_iter().collect::<Result<Vec<_>>>()?;
        let sup = |f: fn(&StepSummary) -> f64| steps.iter().map(f).fold(0.0, f64::max);
        let Aggregate { value: kappa_eff, weak: kappa_weak } = effective_kappa(&kappas);
        let Aggregate { value: kappa_tilde, weak: kappa_tilde_weak } = effective_kappa_tilde(&kappas);
        let Aggregate { value: lambda_eff, weak: lambda_weak } = effective_lambda(&sigmas);
        Ok(ChainSummary {
            m: obs.dim(),
            horizon,
            diameter: space.diameter(),
            kappa_eff,
            kappa_weak,
            kappa_tilde,
            kappa_tilde_weak,
            kappa_min: kappas.min(),
            lambda_eff,
            lambda_weak,
            lipschitz: sup(|s| s.lipschitz),
            delta_op: sup(|s| s.osc_op),
            delta_f: sup(|s| s.osc_frob),
            sigma_inf: sup(|s| s.granularity),
            clamped_kappas: kappas.clamped(),
            steps,
        })
    }

    /// Bound inputs at horizon `n`; zero-valued constants are left unset so the
    /// evaluators that need them report the missing parameter.
    pub fn bound_params(&self, n: usize) -> BoundParams {
        let pos = |x: f64| (x > 0.0).then_some(x);
        BoundParams {
            m: Some(self.m),
            n: Some(n),
            eps: None,
            lipschitz: pos(self.lipschitz),
            diameter: pos(self.diameter),
            delta_op: pos(self.delta_op),
            delta_f: pos(self.delta_f),
            kappa: (!self.kappa_weak).then_some(self.kappa_eff),
            lambda: (!self.lambda_weak).then_some(self.lambda_eff),
            sigma_inf: pos(self.sigma_inf),
            kappa_tilde: (!self.kappa_tilde_weak).then_some(self.kappa_tilde),
        }
    }

    /// Same as [`bound_params`](Self::bound_params) but with the uniform lower
    /// bound `min_t κ_t` as `κ`, as the diameter-refined bound requires.
    pub fn uniform_bound_params(&self, n: usize) -> BoundParams {
        BoundParams { kappa: (self.kappa_min > 0.0).then_some(self.kappa_min), ..self.bound_params(n) }
    }
}
