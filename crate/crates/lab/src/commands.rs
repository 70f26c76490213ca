use chernoff_core::bounds::invert_for_n;
use chernoff_core::chain::ObservableSequence;
use chernoff_core::elo::{match_log, run_tracking};
use chernoff_core::mc::{dominance_table, DominanceConfig, CONFIDENCE};
use chernoff_core::{BoundKind, BoundParams, ChainSummary, Exec, HermitianMatrix};
use serde::Serialize;
use serde_json::json;

use crate::config::LoadedConfig;
use crate::error::RunError;
use crate::output::{opt_real, real, Outputs};
use crate::verify::verify_all;
use crate::Check;

/// Aggregate constants of a chain, without the per-step table.
#[derive(Debug, Serialize)]
pub struct Constants {
    pub m: usize,
    pub horizon: usize,
    pub diameter: f64,
    pub kappa_eff: f64,
    pub kappa_eff_weak: bool,
    pub kappa_tilde: f64,
    pub kappa_tilde_weak: bool,
    pub kappa_min: f64,
    pub lambda: f64,
    pub lambda_weak: bool,
    pub sigma_inf: f64,
    pub lipschitz: f64,
    pub delta_op: f64,
    pub delta_f: f64,
    pub clamped_kappas: usize,
}

impl From<&ChainSummary> for Constants {
    fn from(s: &ChainSummary) -> Self {
        Constants {
            m: s.m,
            horizon: s.horizon,
            diameter: s.diameter,
            kappa_eff: s.kappa_eff,
            kappa_eff_weak: s.kappa_weak,
            kappa_tilde: s.kappa_tilde,
            kappa_tilde_weak: s.kappa_tilde_weak,
            kappa_min: s.kappa_min,
            lambda: s.lambda_eff,
            lambda_weak: s.lambda_weak,
            sigma_inf: s.sigma_inf,
            lipschitz: s.lipschitz,
            delta_op: s.delta_op,
            delta_f: s.delta_f,
            clamped_kappas: s.clamped_kappas,
        }
    }
}

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

pub fn curvature(cfg: &LoadedConfig, exec: &Exec, out: &mut Outputs) -> Result<Vec<Check>, RunError> {
    let model = cfg.model()?;
    let horizon = cfg
        .config
        .horizon
        .or(model.kernels().horizon())
        .ok_or_else(|| RunError::Config("missing field `horizon`".into()))?;
    let obs = cfg
        .observable(model.size())?
        .unwrap_or_else(|| ObservableSequence::constant(HermitianMatrix::zeros(1)));
    let s = ChainSummary::compute(&model, &obs, horizon, exec).map_err(RunError::module("curvature"))?;

    let header = ["t", "kappa", "sigma", "lipschitz", "delta_op", "delta_f", "granularity"];
    let rows = s.steps.iter().map(|r| {
        vec![r.t.to_string(), real(r.kappa), real(r.sigma), real(r.lipschitz), real(r.osc_op), real(r.osc_frob), real(r.granularity)]
    });
    out.csv("curvature.csv", &header, rows)?;

    let c = Constants::from(&s);
    let header = [
        "diameter",
        "kappa_eff",
        "kappa_eff_weak",
        "kappa_tilde",
        "kappa_tilde_weak",
        "kappa_min",
        "lambda",
        "lambda_weak",
        "sigma_inf",
        "lipschitz",
        "delta_op",
        "delta_f",
        "clamped_kappas",
    ];
    let row = vec![
        real(c.diameter),
        real(c.kappa_eff),
        flag(c.kappa_eff_weak),
        real(c.kappa_tilde),
        flag(c.kappa_tilde_weak),
        real(c.kappa_min),
        real(c.lambda),
        flag(c.lambda_weak),
        real(c.sigma_inf),
        real(c.lipschitz),
        real(c.delta_op),
        real(c.delta_f),
        c.clamped_kappas.to_string(),
    ];
    out.csv("aggregates.csv", &header, [row])?;
    Ok(Vec::new())
}

pub fn bounds(cfg: &LoadedConfig, exec: &Exec, out: &mut Outputs) -> Result<Vec<Check>, RunError> {
    let spec = cfg.config.bounds.as_ref().ok_or_else(|| RunError::Config("missing field `bounds`".into()))?;
    let grid = spec.grid()?;
    let n = spec.n;
    if n == 0 {
        return Err(RunError::Config("field `bounds.n`: must be positive".into()));
    }
    let (params, uniform, constants): (BoundParams, BoundParams, Option<Constants>) = match &spec.params {
        Some(p) => (p.to_params(n), p.to_params(n), None),
        None => {
            let model = cfg.model()?;
            let obs = cfg
                .observable(model.size())?
                .ok_or_else(|| RunError::Config("field `bounds`: without `params`, `observable` is required".into()))?;
            let s = ChainSummary::compute(&model, &obs, n, exec).map_err(RunError::module("bounds"))?;
            (s.bound_params(n), s.uniform_bound_params(n), Some(Constants::from(&s)))
        }
    };
    let params_for = |kind: BoundKind| if kind == BoundKind::CurvDiam { &uniform } else { &params };

    let mut header = vec!["eps".to_string()];
    for kind in BoundKind::ALL {
        header.push(format!("bound_{}", kind.name()));
        header.push(format!("empty_{}", kind.name()));
        if spec.delta.is_some() {
            header.push(format!("n_min_{}", kind.name()));
        }
    }
    let mut unavailable = serde_json::Map::new();
    let mut rows = Vec::with_capacity(grid.len());
    for &eps in &grid {
        let mut row = vec![real(eps)];
        for kind in BoundKind::ALL {
            let p = params_for(kind).with_eps(eps);
            match kind.evaluate(&p) {
                Ok(b) => {
                    row.push(real(b.probability));
                    row.push(flag(b.event_empty));
                }
                Err(e) => {
                    unavailable.entry(kind.name()).or_insert_with(|| json!(e.to_string()));
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            if let Some(delta) = spec.delta {
                row.push(invert_for_n(kind, &p, delta).map(|n| n.to_string()).unwrap_or_default());
            }
        }
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("bounds.csv", &header, rows)?;
    out.json(
        "bounds_report.json",
        &json!({ "params": params, "uniform_params": uniform, "constants": constants, "unavailable": unavailable, "delta": spec.delta }),
    )?;
    Ok(Vec::new())
}

pub const TAIL_HEADER: [&str; 15] = [
    "eps",
    "count",
    "N",
    "p_hat",
    "ci_lo",
    "ci_hi",
    "bound_curv",
    "bound_spec",
    "bound_olv_pt",
    "bound_olv_avg",
    "bound_curv_diam",
    "count_pt",
    "ci_hi_pt",
    "count_avg",
    "ci_hi_avg",
];

pub fn simulate(cfg: &LoadedConfig, seed: u64, exec: &Exec, out: &mut Outputs) -> Result<Vec<Check>, RunError> {
    let spec = cfg.config.simulate.as_ref().ok_or_else(|| RunError::Config("missing field `simulate`".into()))?;
    if spec.n == 0 || spec.reps < 100 {
        return Err(RunError::Config("field `simulate`: need n >= 1 and reps >= 100".into()));
    }
    let model = cfg.model()?;
    let obs = cfg
        .observable(model.size())?
        .ok_or_else(|| RunError::Config("missing field `observable`".into()))?;
    let dc = DominanceConfig { n: spec.n, reps: spec.reps, grid_points: spec.grid_points, seed, eps_grid: spec.eps.clone() };
    let table = dominance_table(&model, &obs, &dc, exec).map_err(RunError::module("simulate"))?;

    let rows = table.rows.iter().map(|r| {
        vec![
            real(r.eps),
            r.count.to_string(),
            r.reps.to_string(),
            real(r.p_hat),
            real(r.ci_lo),
            real(r.ci_hi),
            opt_real(r.bound_curv),
            opt_real(r.bound_spec),
            opt_real(r.bound_olv_pt),
            opt_real(r.bound_olv_avg),
            opt_real(r.bound_curv_diam),
            r.count_pt.to_string(),
            real(r.ci_hi_pt),
            r.count_avg.to_string(),
            real(r.ci_hi_avg),
        ]
    });
    out.csv("tail.csv", &TAIL_HEADER, rows)?;
    let violations: Vec<_> = table
        .violations
        .iter()
        .map(|(name, eps, ci, b)| json!({ "bound": name, "eps": eps, "ci_hi": ci, "bound_value": b }))
        .collect();
    out.json(
        "simulate_report.json",
        &json!({
            "n": spec.n,
            "reps": spec.reps,
            "seed": seed,
            "confidence": CONFIDENCE,
            "resolution_floor": table.floor,
            "constants": Constants::from(&table.summary),
            "unavailable": table.unavailable.iter().map(|(k, e)| json!({ "bound": k, "reason": e })).collect::<Vec<_>>(),
            "unresolved_comparisons": table.unresolved,
            "violations": violations,
            "dominated": table.dominated(),
        }),
    )?;
    Ok(vec![Check::new("dominance", table.dominated(), format!("{} violations", table.violations.len()))])
}

pub fn elo(cfg: &LoadedConfig, seed: u64, exec: &Exec, out: &mut Outputs) -> Result<Vec<Check>, RunError> {
    let spec = cfg.elo()?;
    let (config, options) = spec.build(seed)?;
    let report = run_tracking(&config, &options, exec).map_err(RunError::module("elo"))?;

    let rows = report
        .steps
        .iter()
        .map(|r| vec![r.t.to_string(), real(r.mean_err2), real(r.lemma_rhs), real(r.ci_lo), real(r.ci_hi)]);
    out.csv("elo_steps.csv", &["t", "mean_err2", "lemma_rhs", "min_ci", "max_ci"], rows)?;
    let rows = report.windows.iter().map(|w| {
        vec![
            real(w.c),
            w.min_t.to_string(),
            flag(w.feasible),
            real(w.radius),
            w.violations.to_string(),
            w.reps.to_string(),
            real(w.frequency),
        ]
    });
    out.csv("elo_windows.csv", &["C", "min_T", "feasible", "radius", "violations", "reps", "frequency"], rows)?;
    let rows = report.points.iter().map(|p| {
        vec![
            real(p.c),
            p.burn_in.to_string(),
            real(p.radius),
            real(p.probability),
            p.violations_at_horizon.map(|v| v.to_string()).unwrap_or_default(),
        ]
    });
    out.csv("elo_points.csv", &["C", "burn_in", "radius", "probability", "violations_at_T"], rows)?;

    if let Some(rep) = spec.match_log {
        if rep >= config.reps {
            return Err(RunError::Config(format!("field `elo.match_log`: run {rep} out of range")));
        }
        let log = match_log(&config, rep).map_err(RunError::module("elo match log"))?;
        let rows = log
            .iter()
            .map(|m| vec![m.t.to_string(), m.winner.to_string(), m.loser.to_string(), real(m.err2)]);
        out.csv("matches.csv", &["t", "winner", "loser", "err2"], rows)?;
    }

    let window_ok = report.window_ok();
    out.json(
        "elo_summary.json",
        &json!({
            "players": report.players,
            "eta": report.eta,
            "M": report.box_radius,
            "env": report.env,
            "reps": report.reps,
            "T": report.horizon,
            "T0": report.burn_in,
            "seed": seed,
            "eps": options.eps,
            "delta": report.delta,
            "lambda": report.lambda,
            "kappa": report.kappa,
            "drift": report.drift,
            "drift_envelope": report.drift_envelope,
            "drift_consistent": report.drift_consistent,
            "h_rho": report.h_rho,
            "h_q": report.h_q,
            "initial_err2": report.initial_err2,
            "noise_floor": report.noise_floor,
            "lemma_dominated": report.lemma_dominated,
            "worst_lemma_gap": report.worst_lemma_gap,
            "plateau": report.plateau,
            "plateau_ok": report.plateau_ok(),
            "selected_C": report.selected_c,
            "window_ok": window_ok,
            "C_sweep": report.windows.iter().zip(&report.points).map(|(w, p)| json!({
                "C": w.c,
                "min_T": w.min_t,
                "feasible": w.feasible,
                "window_radius": w.radius,
                "window_frequency": w.frequency,
                "point_burn_in": p.burn_in,
                "point_radius": p.radius,
                "point_probability": p.probability,
            })).collect::<Vec<_>>(),
        }),
    )?;

    let mut checks = vec![
        Check::new("elo_lemma", report.lemma_dominated, format!("worst gap {:e}", report.worst_lemma_gap)),
        Check::new("elo_plateau", report.plateau_ok(), format!("plateau {} vs {}", report.plateau, report.noise_floor)),
        Check::new(
            "elo_drift",
            report.drift_consistent,
            format!("drift {} ± {} vs envelope {}", report.drift.value, report.drift.std_err, report.drift_envelope),
        ),
    ];
    match window_ok {
        Some(ok) => checks.push(Check::new("elo_window", ok, format!("selected C = {:?}", report.selected_c))),
        None => checks.push(Check::new("elo_window", true, "no swept C fits the horizon; nothing to check".into())),
    }
    Ok(checks)
}

pub fn verify(cfg: &LoadedConfig, seed: u64, exec: &Exec, out: &mut Outputs) -> Result<Vec<Check>, RunError> {
    let spec = cfg.config.verify.as_ref();
    let instances = spec.and_then(|v| v.instances).unwrap_or(100);
    let reps = spec.and_then(|v| v.tightness_reps).unwrap_or(10_000);
    if instances == 0 || reps == 0 {
        return Err(RunError::Config("field `verify`: instance counts must be positive".into()));
    }
    let rows = verify_all(seed, instances, reps, exec).map_err(RunError::module("verify"))?;
    let csv_rows = rows.iter().map(|r| {
        vec![
            r.name.clone(),
            r.instances.to_string(),
            r.failures.to_string(),
            real(r.worst_margin),
            r.repro_seed.to_string(),
            flag(r.passed()),
        ]
    });
    out.csv("verify.csv", &["check", "instances", "failures", "worst_margin", "repro_seed", "passed"], csv_rows)?;
    Ok(rows
        .iter()
        .map(|r| Check::new(&r.name, r.passed(), format!("{} of {} failed", r.failures, r.instances)))
        .collect())
}
