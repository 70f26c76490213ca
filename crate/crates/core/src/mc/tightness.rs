//! The halving chain on `[0, D]` with frequency-doubling cosine observables.
//!
//! `2^t X_t / D` differs from `X_0 / D` by an integer, so every observable
//! sees the same phase and the partial sum degenerates to
//! `S_ℓ = (Δ/2) ℓ cos(2π X_0 / D)`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::rng::StreamKey;

use super::{clopper_pearson, CHUNK, CONFIDENCE};

/// Largest `ℓ` with `π Δ 2^ℓ ≤ L D`.
pub fn dyadic_cutoff(diameter: f64, delta: f64, lipschitz: f64) -> Result<u32> {
    let budget = lipschitz * diameter / (PI * delta);
    if !(budget >= 2.0 * (1.0 - 1e-12)) {
        return Err(LabError::InvalidInput(format!("need pi*Delta*2 <= L*D; L*D/(pi*Delta) = {budget}")));
    }
    let mut ell = 1u32;
    while ((1u64 << (ell + 1)) as f64) <= budget * (1.0 + 1e-12) {
        ell += 1;
    }
    Ok(ell)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TightnessReport {
    pub ell: u32,
    pub reps: u64,
    /// `#{S_ℓ > Δℓ/4}`.
    pub count: u64,
    pub p_hat: f64,
    pub std_err: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Mean of `S_ℓ` and its standard error.
    pub mean: f64,
    pub mean_std_err: f64,
    /// Largest `|S_ℓ − (Δ/2) ℓ cos(2π X_0/D)|` seen.
    pub max_identity_error: f64,
    pub identity_tolerance: f64,
}

impl TightnessReport {
    pub fn identity_holds(&self) -> bool {
        self.max_identity_error <= self.identity_tolerance
    }
}

#[derive(Default)]
struct Partial {
    count: u64,
    sum: f64,
    sum_sq: f64,
    max_err: f64,
}

pub fn tightness_experiment(
    diameter: f64,
    delta: f64,
    lipschitz: f64,
    reps: usize,
    key: StreamKey,
    exec: &Exec,
) -> Result<TightnessReport> {
    if reps == 0 || !(diameter > 0.0) || !(delta > 0.0) {
        return Err(LabError::InvalidInput("need reps >= 1 and positive D, Delta".into()));
    }
    let ell = dyadic_cutoff(diameter, delta, lipschitz)?;
    let threshold = delta * ell as f64 / 4.0;
    let parts = exec.map_chunks(reps, CHUNK, |start, end| {
        let mut p = Partial::default();
        for i in start..end {
            let stream = key.child(i as u64);
            let x0 = diameter * stream.uniform(0);
            let mut x = x0;
            let mut s = 0.0;
            for t in 1..=ell {
                let bit = stream.word(t as u64) >> 63;
                x = x / 2.0 + diameter / 2.0 * bit as f64;
                let phase = ((1u64 << t) as f64 * x / diameter).fract();
                s += delta / 2.0 * (2.0 * PI * phase).cos();
            }
            let closed = delta / 2.0 * ell as f64 * (2.0 * PI * x0 / diameter).cos();
            p.max_err = p.max_err.max((s - closed).abs());
            p.count += (s > threshold) as u64;
            p.sum += s;
            p.sum_sq += s * s;
        }
        p
    });
    let mut total = Partial::default();
    for p in parts {
        total.count += p.count;
        total.sum += p.sum;
        total.sum_sq += p.sum_sq;
        total.max_err = total.max_err.max(p.max_err);
    }
    let n = reps as f64;
    let p_hat = total.count as f64 / n;
    let mean = total.sum / n;
    let var = (total.sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    let (ci_lower, ci_upper) = clopper_pearson(total.count, reps as u64, CONFIDENCE);
    Ok(TightnessReport {
        ell,
        reps: reps as u64,
        count: total.count,
        p_hat,
        std_err: (p_hat * (1.0 - p_hat) / n).sqrt(),
        ci_lower,
        ci_upper,
        mean,
        mean_std_err: (var / n).sqrt(),
        max_identity_error: total.max_err,
        identity_tolerance: 1e-6 * ell as f64 * delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_examples() {
        assert_eq!(dyadic_cutoff(1024.0, 1.0, PI).unwrap(), 10);
        assert_eq!(dyadic_cutoff(1.0, 1.0, 2.0 * PI).unwrap(), 1);
        assert!(dyadic_cutoff(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn small_run_is_exact_and_deterministic() {
        let a = tightness_experiment(1024.0, 1.0, PI, 2000, StreamKey::root(4), &Exec::sequential()).unwrap();
        assert!(a.identity_holds(), "{a:?}");
        let b = tightness_experiment(1024.0, 1.0, PI, 2000, StreamKey::root(4), &Exec::with_threads(3)).unwrap();
        assert_eq!(a, b);
    }
}
