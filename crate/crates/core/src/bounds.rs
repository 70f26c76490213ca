//! Closed-form tail bounds and sample-size inversion.

use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;

use crate::error::{LabError, Result};

/// Scalar inputs to the bound evaluators. Unused fields may stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BoundParams {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub eps: Option<f64>,
    pub lipschitz: Option<f64>,
    pub diameter: Option<f64>,
    pub delta_op: Option<f64>,
    pub delta_f: Option<f64>,
    pub kappa: Option<f64>,
    pub lambda: Option<f64>,
    pub sigma_inf: Option<f64>,
    pub kappa_tilde: Option<f64>,
}

fn need<T: Copy>(v: Option<T>, name: &'static str) -> Result<T> {
    v.ok_or(LabError::MissingParameter(name))
}

fn positive(v: Option<f64>, name: &'static str) -> Result<f64> {
    let x = need(v, name)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(LabError::InvalidInput(format!("{name} must be positive and finite, got {x}")));
    }
    Ok(x)
}

impl BoundParams {
    fn m(&self) -> Result<f64> {
        match need(self.m, "m")? {
            0 => Err(LabError::InvalidInput("m must be >= 1".into())),
            m => Ok(m as f64),
        }
    }

    fn n(&self) -> Result<f64> {
        Ok(need(self.n, "n")? as f64)
    }

    fn eps(&self) -> Result<f64> {
        let e = need(self.eps, "eps")?;
        if !(e >= 0.0) {
            return Err(LabError::InvalidInput(format!("eps must be nonnegative, got {e}")));
        }
        Ok(e)
    }

    /// `Δ_op ≤ L·D` and `Δ_op ≤ Δ_F` whenever the fields are present.
    pub fn check(&self) -> Result<()> {
        if let (Some(op), Some(l), Some(d)) = (self.delta_op, self.lipschitz, self.diameter) {
            if op > l * d * (1.0 + 1e-12) {
                return Err(LabError::InvariantViolation(format!("delta_op = {op} exceeds L*D = {}", l * d)));
            }
        }
        if let (Some(op), Some(f)) = (self.delta_op, self.delta_f) {
            if f < op * (1.0 - 1e-12) {
                return Err(LabError::InvariantViolation(format!("delta_f = {f} is below delta_op = {op}")));
            }
        }
        Ok(())
    }

    pub fn with_n(&self, n: usize) -> Self {
        BoundParams { n: Some(n), ..self.clone() }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        BoundParams { eps: Some(eps), ..self.clone() }
    }
}

/// A tail probability bound in `[0, 1]`. `event_empty` marks an `ε` above the
/// almost-sure bound on the deviation, where the probability is exactly 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailBound {
    pub probability: f64,
    pub event_empty: bool,
}

impl TailBound {
    fn of(p: f64) -> Self {
        TailBound { probability: p.clamp(0.0, 1.0), event_empty: false }
    }

    fn empty() -> Self {
        TailBound { probability: 0.0, event_empty: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Curv,
    CurvDiam,
    Spec,
    OllivierPoint,
    OllivierAvg,
}

impl BoundKind {
    pub const ALL: [BoundKind; 5] =
        [BoundKind::Curv, BoundKind::CurvDiam, BoundKind::Spec, BoundKind::OllivierPoint, BoundKind::OllivierAvg];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Curv => "curv",
            BoundKind::CurvDiam => "curv_diam",
            BoundKind::Spec => "spec",
            BoundKind::OllivierPoint => "ollivier_point",
            BoundKind::OllivierAvg => "ollivier_avg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::InvalidInput(format!("unknown bound '{s}'")))
    }

    pub fn evaluate(self, p: &BoundParams) -> Result<TailBound> {
        match self {
            BoundKind::Curv => bound_curv(p),
            BoundKind::CurvDiam => bound_curv_diam(p),
            BoundKind::Spec => bound_spec(p),
            BoundKind::OllivierPoint => bound_ollivier_point(p),
            BoundKind::OllivierAvg => bound_ollivier_avg(p),
        }
    }

    /// Log-prefactor and exponential rate per unit `n`: bound = min(1, e^{lp − n·rate}).
    fn shape(self, p: &BoundParams) -> Result<(f64, f64)> {
        let eps = p.eps()?;
        let lm = p.m()?.ln();
        let sub_gaussian = lm * (2.0 - PI / 4.0);
        Ok(match self {
            BoundKind::Curv => (sub_gaussian, eps * eps / (2.0 * curv_variance(p)?)),
            BoundKind::CurvDiam => (sub_gaussian, eps * eps / (2.0 * curv_diam_variance(p)?)),
            BoundKind::Spec => (sub_gaussian, eps * eps / (2.0 * spec_variance(p)?)),
            BoundKind::OllivierPoint => {
                return Err(LabError::InvalidInput("the pointwise bound does not depend on n".into()))
            }
            BoundKind::OllivierAvg => {
                let kt = positive(p.kappa_tilde, "kappa_tilde")?;
                let l = positive(p.lipschitz, "lipschitz")?;
                let s = positive(p.sigma_inf, "sigma_inf")?;
                (2f64.ln() + lm, kt * kt * eps * eps / (8.0 * l * l * s * s))
            }
        })
    }

    /// `(limit, name)` of the sub-Gaussian window in `ε`, if the bound has one.
    fn window(self, p: &BoundParams) -> Result<Option<(f64, &'static str)>> {
        Ok(match self {
            BoundKind::Curv => Some((positive(p.lipschitz, "lipschitz")? * positive(p.diameter, "diameter")?, "L*D")),
            BoundKind::CurvDiam | BoundKind::Spec => Some((positive(p.delta_op, "delta_op")?, "delta_op")),
            _ => None,
        })
    }
}

fn sub_gaussian(p: &BoundParams, variance: f64) -> Result<TailBound> {
    let m = p.m()?;
    let n = p.n()?;
    let eps = p.eps()?;
    Ok(TailBound::of(m.powf(2.0 - PI / 4.0) * (-n * eps * eps / (2.0 * variance)).exp()))
}

/// `v² = (192/π²) L²D²/κ`.
pub fn curv_variance(p: &BoundParams) -> Result<f64> {
    let l = positive(p.lipschitz, "lipschitz")?;
    let d = positive(p.diameter, "diameter")?;
    let k = positive(p.kappa, "kappa")?;
    Ok(192.0 / (PI * PI) * l * l * d * d / k)
}

/// `v̄² = (3200/π²) Δ_op² κ⁻¹ (1 + log(LD/Δ_op))`.
pub fn curv_diam_variance(p: &BoundParams) -> Result<f64> {
    let op = positive(p.delta_op, "delta_op")?;
    let l = positive(p.lipschitz, "lipschitz")?;
    let d = positive(p.diameter, "diameter")?;
    let k = positive(p.kappa, "kappa")?;
    p.check()?;
    let ratio = (l * d / op).max(1.0);
    Ok(3200.0 / (PI * PI) * op * op / k * (1.0 + ratio.ln()))
}

/// `v_B² = (768/π²) Δ_op Δ_F / λ`.
pub fn spec_variance(p: &BoundParams) -> Result<f64> {
    let op = positive(p.delta_op, "delta_op")?;
    let f = positive(p.delta_f, "delta_f")?;
    let lam = positive(p.lambda, "lambda")?;
    p.check()?;
    Ok(768.0 / (PI * PI) * op * f / lam)
}

/// Curvature bound with the effective `κ`.
pub fn bound_curv(p: &BoundParams) -> Result<TailBound> {
    let v2 = curv_variance(p)?;
    if p.eps()? > p.lipschitz.unwrap_or(f64::INFINITY) * p.diameter.unwrap_or(f64::INFINITY) {
        return Ok(TailBound::empty());
    }
    sub_gaussian(p, v2)
}

/// Diameter-refined curvature bound under a uniform lower bound `κ_t ≥ κ`.
pub fn bound_curv_diam(p: &BoundParams) -> Result<TailBound> {
    let v2 = curv_diam_variance(p)?;
    if p.eps()? > p.delta_op.unwrap_or(f64::INFINITY) {
        return Ok(TailBound::empty());
    }
    sub_gaussian(p, v2)
}

/// Spectral-gap bound with the effective `λ`.
pub fn bound_spec(p: &BoundParams) -> Result<TailBound> {
    let v2 = spec_variance(p)?;
    if p.eps()? > p.delta_op.unwrap_or(f64::INFINITY) {
        return Ok(TailBound::empty());
    }
    sub_gaussian(p, v2)
}

/// Tail of `‖F_T(X_T) − E F_T(X_T)‖_op`: `2m exp(−ε²κ/(8L²σ∞²))`.
pub fn bound_ollivier_point(p: &BoundParams) -> Result<TailBound> {
    let m = p.m()?;
    let eps = p.eps()?;
    let k = positive(p.kappa, "kappa")?;
    let l = positive(p.lipschitz, "lipschitz")?;
    let s = positive(p.sigma_inf, "sigma_inf")?;
    Ok(TailBound::of(2.0 * m * (-eps * eps * k / (8.0 * l * l * s * s)).exp()))
}

/// Tail of the time average over `T = n` steps: `2m exp(−κ̃² T ε²/(8L²σ∞²))`.
pub fn bound_ollivier_avg(p: &BoundParams) -> Result<TailBound> {
    let m = p.m()?;
    let n = p.n()?;
    let eps = p.eps()?;
    let kt = positive(p.kappa_tilde, "kappa_tilde")?;
    let l = positive(p.lipschitz, "lipschitz")?;
    let s = positive(p.sigma_inf, "sigma_inf")?;
    Ok(TailBound::of(2.0 * m * (-kt * kt * n * eps * eps / (8.0 * l * l * s * s)).exp()))
}

/// Smallest `n ≥ 1` with `kind(p with n) ≤ δ`.
pub fn invert_for_n(kind: BoundKind, p: &BoundParams, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LabError::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    let eps = p.eps()?;
    if let Some((limit, name)) = kind.window(p)? {
        if eps > limit {
            return Err(LabError::OutsideWindow { eps, window: limit, name });
        }
    }
    let (log_pref, rate) = kind.shape(p)?;
    let eval = |n: usize| kind.evaluate(&p.with_n(n)).map(|b| b.probability);
    if eval(1)? <= delta {
        return Ok(1);
    }
    if !(rate > 0.0) {
        return Err(LabError::InvalidInput("eps = 0 gives a bound that never decays".into()));
    }
    let guess = ((log_pref - delta.ln()) / rate).ceil();
    if guess > 1e15 {
        return Err(LabError::Numerical(format!("required n ~ {guess:e} is out of range")));
    }
    let mut n = (guess as usize).max(1);
    while eval(n)? > delta {
        n += 1;
    }
    while n > 1 && eval(n - 1)? <= delta {
        n -= 1;
    }
    Ok(n)
}

/// Inputs to the tracking theorems for the rating model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingParams {
    pub players: usize,
    pub box_radius: f64,
    pub eta: f64,
    pub kappa: f64,
    pub drift: f64,
    pub h_rho: f64,
    pub h_q: f64,
}

impl TrackingParams {
    /// `B = 2√2 η + 2h_ρ + 4√2 h_q`.
    pub fn b_constant(&self) -> f64 {
        2.0 * SQRT_2 * self.eta + 2.0 * self.h_rho + 4.0 * SQRT_2 * self.h_q
    }

    /// `√(Δ/κ) + (1+ε)√(2η²/κ)`.
    pub fn base_radius(&self, eps: f64) -> f64 {
        (self.drift / self.kappa).sqrt() + (1.0 + eps) * (2.0 * self.eta * self.eta / self.kappa).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if self.players < 2 || !(self.eta > 0.0) || !(self.kappa > 0.0) || !(self.box_radius > 0.0) {
            return Err(LabError::InvalidInput("tracking bound needs n >= 2 and positive eta, kappa, M".into()));
        }
        if self.drift < 0.0 || self.h_rho < 0.0 || self.h_q < 0.0 {
            return Err(LabError::InvalidInput("drift and support radii must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PointTracking {
    pub burn_in: u64,
    pub radius: f64,
    pub probability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AverageTracking {
    pub min_t: u64,
    pub radius: f64,
}

fn universal(c: Option<f64>) -> Result<f64> {
    let c = c.ok_or(LabError::MissingParameter("C"))?;
    if !(c > 0.0) {
        return Err(LabError::InvalidInput(format!("C must be positive, got {c}")));
    }
    Ok(c)
}

/// Pointwise tracking: burn-in `⌈Cκ⁻¹ log(nMε⁻¹η⁻¹)⌉`, radius
/// `√(Δ/κ) + (1+ε)√(2η²/κ) + CεB/√κ`, failure probability `2e^{−ε²}`.
pub fn elo_point_bound(p: &TrackingParams, eps: f64, c: Option<f64>) -> Result<PointTracking> {
    let c = universal(c)?;
    p.validate()?;
    if !(eps > 0.0) {
        return Err(LabError::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let log_arg = p.players as f64 * p.box_radius / (eps * p.eta);
    let burn = (c / p.kappa * log_arg.ln()).ceil().max(0.0);
    Ok(PointTracking {
        burn_in: burn as u64,
        radius: p.base_radius(eps) + c * eps * p.b_constant() / p.kappa.sqrt(),
        probability: (2.0 * (-eps * eps).exp()).min(1.0),
    })
}

/// Window-average tracking: `T ≥ C ε⁻² η⁻² M² n log(n/δ)` and radius `√(Δ/κ) + (1+ε)√(2η²/κ)`.
pub fn elo_avg_bound(p: &TrackingParams, eps: f64, delta: f64, c: Option<f64>) -> Result<AverageTracking> {
    let c = universal(c)?;
    p.validate()?;
    if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(LabError::InvalidInput("need eps > 0 and delta in (0, 1)".into()));
    }
    let n = p.players as f64;
    let min_t = c / (eps * eps * p.eta * p.eta) * p.box_radius * p.box_radius * n * (n / delta).ln();
    Ok(AverageTracking { min_t: min_t.ceil().max(1.0) as u64, radius: p.base_radius(eps) })
}
