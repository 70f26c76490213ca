use chernoff_core::bounds::{elo_avg_bound, elo_point_bound, invert_for_n, TrackingParams};
use chernoff_core::{BoundKind, BoundParams, LabError};
use proptest::prelude::*;

prop_compose! {
    fn params()(
        m in 1usize..20,
        n in 1usize..100_000,
        l in 0.1f64..5.0,
        d in 0.1f64..5.0,
        op_frac in 0.05f64..1.0,
        f_mult in 1.0f64..3.0,
        kappa in 0.01f64..1.0,
        lambda in 0.01f64..1.0,
        sigma in 0.1f64..3.0,
        kappa_tilde in 0.01f64..1.0,
    ) -> BoundParams {
        let op = op_frac * l * d;
        BoundParams {
            m: Some(m),
            n: Some(n),
            eps: Some(0.0),
            lipschitz: Some(l),
            diameter: Some(d),
            delta_op: Some(op),
            delta_f: Some(op * f_mult),
            kappa: Some(kappa),
            lambda: Some(lambda),
            sigma_inf: Some(sigma),
            kappa_tilde: Some(kappa_tilde),
        }
    }
}

fn window(kind: BoundKind, p: &BoundParams) -> f64 {
    match kind {
        BoundKind::Curv => p.lipschitz.unwrap() * p.diameter.unwrap(),
        BoundKind::CurvDiam | BoundKind::Spec => p.delta_op.unwrap(),
        _ => 10.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn monotone_and_clamped(p in params(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        for kind in BoundKind::ALL {
            let w = window(kind, &p);
            let (e1, e2) = (a.min(b) * w, a.max(b) * w);
            let at = |q: &BoundParams| kind.evaluate(q).unwrap().probability;
            let lo = at(&p.with_eps(e1));
            let hi = at(&p.with_eps(e2));
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
            prop_assert!(hi <= lo, "{:?} not decreasing in eps", kind);
            let q = p.with_eps(e2);
            let more_n = at(&q.with_n(q.n.unwrap() * 2));
            prop_assert!(more_n <= at(&q) , "{:?} not decreasing in n", kind);
            let more_m = at(&BoundParams { m: Some(q.m.unwrap() + 1), ..q.clone() });
            prop_assert!(more_m >= at(&q), "{:?} not increasing in m", kind);
        }
    }

    #[test]
    fn inversion_is_minimal(p in params(), frac in 0.05f64..1.0, delta in 1e-6f64..0.5) {
        for kind in [BoundKind::Curv, BoundKind::CurvDiam, BoundKind::Spec, BoundKind::OllivierAvg] {
            let eps = frac * window(kind, &p).min(5.0);
            let q = p.with_eps(eps);
            let n = match invert_for_n(kind, &q, delta) {
                Ok(n) => n,
                Err(LabError::Numerical(_)) => continue,
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            };
            prop_assert!(kind.evaluate(&q.with_n(n)).unwrap().probability <= delta);
            if n > 1 {
                prop_assert!(kind.evaluate(&q.with_n(n - 1)).unwrap().probability > delta);
            }
        }
    }
}

#[test]
fn event_empty_exactly_past_delta_op() {
    let p = BoundParams {
        m: Some(2),
        n: Some(100),
        lipschitz: Some(1.0),
        diameter: Some(2.0),
        delta_op: Some(1.5),
        delta_f: Some(2.0),
        kappa: Some(0.5),
        lambda: Some(0.5),
        ..Default::default()
    };
    for kind in [BoundKind::CurvDiam, BoundKind::Spec] {
        assert!(!kind.evaluate(&p.with_eps(1.5)).unwrap().event_empty);
        assert!(kind.evaluate(&p.with_eps(1.5 + 1e-9)).unwrap().event_empty);
    }
    assert!(!BoundKind::Curv.evaluate(&p.with_eps(1.9)).unwrap().event_empty);
    assert!(BoundKind::Curv.evaluate(&p.with_eps(2.0 + 1e-9)).unwrap().event_empty);
    assert!(matches!(
        invert_for_n(BoundKind::Spec, &p.with_eps(1.6), 0.1),
        Err(LabError::OutsideWindow { name: "delta_op", .. })
    ));
}

#[test]
fn tracking_bound_substitution() {
    let (eta, m, lambda) = (0.05f64, 2.0f64, 2.0 / 9.0);
    let kappa = eta * (-4.0 * m).exp() * lambda / 8.0;
    let p = TrackingParams { players: 10, box_radius: m, eta, kappa, drift: 0.3, h_rho: 0.0, h_q: 0.0 };
    let eps = 0.7;
    let r = elo_avg_bound(&p, eps, 0.1, Some(1.0)).unwrap().radius;
    let closed = (0.3 * 8.0 * (4.0 * m).exp() / (eta * lambda)).sqrt()
        + (1.0 + eps) * (16.0 * eta * (4.0 * m).exp() / lambda).sqrt();
    assert!((r - closed).abs() <= 1e-9 * closed);
    assert_eq!(elo_point_bound(&p, eps, None), Err(LabError::MissingParameter("C")));
    // doubling the players doubles min_T up to the log factor
    let t10 = elo_avg_bound(&p, eps, 0.1, Some(1.0)).unwrap().min_t as f64;
    let t20 = elo_avg_bound(&TrackingParams { players: 20, ..p.clone() }, eps, 0.1, Some(1.0)).unwrap().min_t as f64;
    let ratio = t20 / t10;
    let expect = 2.0 * (200f64).ln() / (100f64).ln();
    assert!((ratio - expect).abs() < 1e-3 * expect);
}
