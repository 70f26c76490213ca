//! Empirical tails set against every applicable bound.

use serde::Serialize;

use crate::bounds::{BoundKind, BoundParams};
use crate::chain::{FiniteMarkovModel, ObservableSequence};
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::rng::StreamKey;
use crate::summary::ChainSummary;

use super::{resolution_floor, simulate_tails, TailBundle, TailSetup, CONFIDENCE};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceConfig {
    pub n: usize,
    pub reps: usize,
    pub grid_points: usize,
    pub seed: u64,
    /// Explicit grid; when `None`, it is placed below the smallest `ε` at which
    /// some bound falls under the Monte Carlo resolution floor.
    pub eps_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceRow {
    pub eps: f64,
    pub count: u64,
    pub reps: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub bound_curv: Option<f64>,
    pub bound_spec: Option<f64>,
    pub bound_olv_pt: Option<f64>,
    pub bound_olv_avg: Option<f64>,
    pub bound_curv_diam: Option<f64>,
    pub count_pt: u64,
    pub ci_hi_pt: f64,
    pub count_avg: u64,
    pub ci_hi_avg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceTable {
    pub summary: ChainSummary,
    pub floor: f64,
    pub rows: Vec<DominanceRow>,
    #[serde(skip)]
    pub tails: TailBundle,
    /// Bounds that could not be evaluated, with the reason.
    pub unavailable: Vec<(String, String)>,
    /// `(bound, eps, ci_hi, bound value)` for every grid point where the interval exceeds the bound.
    pub violations: Vec<(String, f64, f64, f64)>,
    /// Comparisons with no exceedances where the bound sits below the upper limit,
    /// i.e. below what `reps` trajectories can resolve.
    pub unresolved: usize,
}

impl DominanceTable {
    pub fn dominated(&self) -> bool {
        self.violations.is_empty()
    }
}

fn params_for(kind: BoundKind, summary: &ChainSummary, n: usize) -> BoundParams {
    match kind {
        BoundKind::CurvDiam => summary.uniform_bound_params(n),
        _ => summary.bound_params(n),
    }
}

/// Smallest `ε` with `bound(ε) ≤ floor`, by bisection on a bracket found by doubling.
fn floor_crossing(kind: BoundKind, p: &BoundParams, floor: f64) -> Result<f64> {
    let at = |e: f64| kind.evaluate(&p.with_eps(e)).map(|b| b.probability);
    let mut hi = 1e-3;
    let mut guard = 0;
    while at(hi)? > floor {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(LabError::Numerical(format!("{} never falls below {floor}", kind.name())));
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if at(mid)? > floor {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn dominance_table(
    model: &FiniteMarkovModel,
    obs: &ObservableSequence,
    config: &DominanceConfig,
    exec: &Exec,
) -> Result<DominanceTable> {
    let n = config.n;
    let summary = ChainSummary::compute(model, obs, n, exec)?;
    let floor = resolution_floor(config.reps as u64, CONFIDENCE);

    let mut usable = Vec::new();
    let mut unavailable = Vec::new();
    for kind in BoundKind::ALL {
        let p = params_for(kind, &summary, n).with_eps(0.0);
        match kind.evaluate(&p) {
            Ok(_) => usable.push(kind),
            Err(e) => unavailable.push((kind.name().to_string(), e.to_string())),
        }
    }

    let grid = match &config.eps_grid {
        Some(g) => g.clone(),
        None => {
            let mut top = f64::INFINITY;
            for &kind in &usable {
                top = top.min(floor_crossing(kind, &params_for(kind, &summary, n), floor)?);
            }
            if !top.is_finite() || top <= 0.0 {
                top = summary.delta_op.max(1e-12);
            }
            let k = config.grid_points.max(1);
            (1..=k).map(|i| top * i as f64 / k as f64).collect()
        }
    };

    let setup = TailSetup::new(model, obs, n)?;
    let tails = simulate_tails(&setup, &grid, config.reps, StreamKey::root(config.seed), exec)?;

    let mut rows = Vec::with_capacity(grid.len());
    let mut violations = Vec::new();
    let mut unresolved = 0;
    for (i, &eps) in grid.iter().enumerate() {
        let value = |kind: BoundKind| -> Option<f64> {
            usable
                .contains(&kind)
                .then(|| kind.evaluate(&params_for(kind, &summary, n).with_eps(eps)).ok().map(|b| b.probability))
                .flatten()
        };
        let row = DominanceRow {
            eps,
            count: tails.sum.counts[i],
            reps: tails.sum.reps,
            p_hat: tails.sum.p_hat(i),
            ci_lo: tails.sum.ci_lower[i],
            ci_hi: tails.sum.ci_upper[i],
            bound_curv: value(BoundKind::Curv),
            bound_spec: value(BoundKind::Spec),
            bound_olv_pt: value(BoundKind::OllivierPoint),
            bound_olv_avg: value(BoundKind::OllivierAvg),
            bound_curv_diam: value(BoundKind::CurvDiam),
            count_pt: tails.point.counts[i],
            ci_hi_pt: tails.point.ci_upper[i],
            count_avg: tails.average.counts[i],
            ci_hi_avg: tails.average.ci_upper[i],
        };
        let checks = [
            ("curv", row.bound_curv, row.ci_hi, row.count),
            ("spec", row.bound_spec, row.ci_hi, row.count),
            ("curv_diam", row.bound_curv_diam, row.ci_hi, row.count),
            ("ollivier_point", row.bound_olv_pt, row.ci_hi_pt, row.count_pt),
            ("ollivier_avg", row.bound_olv_avg, row.ci_hi_avg, row.count_avg),
        ];
        for (name, bound, ci_hi, count) in checks {
            let Some(b) = bound else { continue };
            // with no exceedances the upper limit is the resolution floor itself, which
            // neither confirms nor refutes a smaller bound
            if count == 0 && ci_hi > b {
                unresolved += 1;
            } else if ci_hi > b * (1.0 + 1e-12) {
                violations.push((name.to_string(), eps, ci_hi, b));
            }
        }
        rows.push(row);
    }
    Ok(DominanceTable { summary, floor, rows, tails, unavailable, violations, unresolved })
}
