//! Oracle and property checks run by `lab verify`.

use std::f64::consts::{FRAC_PI_2, PI};

use chernoff_core::chain::FiniteMetricSpace;
use chernoff_core::elo::project_zero_sum_box;
use chernoff_core::mc::{tightness_experiment, verify_lemma_suite, verify_renewal, LemmaCheck};
use chernoff_core::models::{random_chain, random_metric, random_observable, random_probability};
use chernoff_core::transport::{dyadic_pair_kappa, wasserstein1, wasserstein1_on_line};
use chernoff_core::{Exec, Result, StreamKey};

/// Tallies `(error, tolerance)` pairs into a check row.
fn tally(name: &str, key: StreamKey, results: Vec<Result<(f64, f64)>>) -> Result<LemmaCheck> {
    let mut check = LemmaCheck {
        name: name.to_string(),
        instances: results.len(),
        failures: 0,
        worst_margin: f64::INFINITY,
        repro_seed: key.id(),
    };
    for (i, r) in results.into_iter().enumerate() {
        let (err, tol) = r?;
        let margin = tol - err;
        if !(margin >= 0.0) {
            check.failures += 1;
        }
        if !(margin >= check.worst_margin) {
            check.worst_margin = margin;
            check.repro_seed = key.child(i as u64).id();
        }
    }
    Ok(check)
}

fn index(key: StreamKey, counter: u64, lo: usize, hi: usize) -> usize {
    lo + ((key.uniform(counter) * (hi - lo + 1) as f64) as usize).min(hi - lo)
}

fn renewal(key: StreamKey, count: usize, exec: &Exec) -> Result<Vec<LemmaCheck>> {
    let results = exec.map(count, |i| {
        let k = key.child(i as u64);
        let size = index(k, 0, 2, 4);
        let n = index(k, 1, 1, 5);
        let m = index(k, 2, 1, 2);
        let s = 0.1 * (1.0 - k.uniform(3));
        let phi = -FRAC_PI_2 + PI * index(k, 4, 0, 8) as f64 / 8.0;
        let model = random_chain(size, n, k.child(0))?;
        let obs = random_observable(size, m, n, 1.0, &mut k.child(1).rng());
        let r = verify_renewal(&model, &obs, s, phi, n)?;
        Ok((r.lhs - r.rhs, r.close_holds))
    });
    let mut plain = Vec::with_capacity(count);
    let mut close = Vec::with_capacity(count);
    for r in results {
        match r {
            Ok((gap, ok)) => {
                plain.push(Ok((gap, 1e-9)));
                close.push(Ok((if ok { 0.0 } else { 1.0 }, 0.0)));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(vec![tally("renewal", key, plain)?, tally("renewal_closing", key, close)?])
}

fn w1_line(key: StreamKey, count: usize, exec: &Exec) -> Result<LemmaCheck> {
    let results = exec.map(count, |i| {
        let k = key.child(i as u64);
        let atoms = index(k, 0, 2, 64);
        let mut rng = k.child(1).rng();
        let mut points: Vec<f64> = (0..atoms).map(|j| 10.0 * k.child(2).uniform(j as u64) - 5.0).collect();
        points.sort_by(f64::total_cmp);
        let mu = random_probability(atoms, &mut rng);
        let nu = random_probability(atoms, &mut rng);
        let space = FiniteMetricSpace::on_line(&points)?;
        let lp = wasserstein1(&mu, &nu, &space)?.cost;
        let closed = wasserstein1_on_line(&points, &mu, &nu)?;
        Ok(((lp - closed).abs(), 1e-8))
    });
    tally("w1_line_oracle", key, results)
}

fn metric_axioms(key: StreamKey, count: usize, exec: &Exec) -> Result<LemmaCheck> {
    let results = exec.map(count, |i| {
        let k = key.child(i as u64);
        let mut rng = k.rng();
        let size = index(k.child(1), 0, 2, 8);
        let space = random_metric(size, &mut rng)?;
        let [a, b, c] = [0, 1, 2].map(|_| random_probability(size, &mut rng));
        let w = |p: &[f64], q: &[f64]| wasserstein1(p, q, &space).map(|t| t.cost);
        let (ab, ba, bc, ac, aa) = (w(&a, &b)?, w(&b, &a)?, w(&b, &c)?, w(&a, &c)?, w(&a, &a)?);
        let err = (ab - ba).abs().max(aa.abs()).max(ac - ab - bc).max(-ab);
        Ok((err, 1e-8))
    });
    tally("w1_metric_axioms", key, results)
}

fn dyadic_kappa(key: StreamKey, count: usize) -> Result<LemmaCheck> {
    let d = 1024.0;
    let results = (0..count)
        .map(|i| {
            let k = key.child(i as u64);
            let (x, y) = (d * k.uniform(0), d * k.uniform(1));
            if x == y {
                return Ok((0.0, 0.0));
            }
            Ok(((dyadic_pair_kappa(x, y, d) - 0.5).abs(), 1e-12))
        })
        .collect();
    tally("dyadic_kappa", key, results)
}

fn projection(key: StreamKey, count: usize) -> Result<LemmaCheck> {
    let results = (0..count)
        .map(|i| {
            let k = key.child(i as u64);
            let n = index(k, 0, 1, 6);
            let m = 0.1 + 2.9 * k.uniform(1);
            let y: Vec<f64> = (0..n).map(|j| 12.0 * k.child(1).uniform(j as u64) - 6.0).collect();
            let p = project_zero_sum_box(&y, m)?;
            let sum = p.x.iter().sum::<f64>().abs();
            let boxed = p.x.iter().map(|v| (v.abs() - m).max(0.0)).fold(0.0, f64::max);
            let again = project_zero_sum_box(&p.x, m)?;
            let idem = again.x.iter().zip(&p.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            // optimality: x_i = clip(y_i − θ, −M, M)
            let kkt = y
                .iter()
                .zip(&p.x)
                .map(|(yi, xi)| ((yi - p.theta).clamp(-m, m) - xi).abs())
                .fold(0.0, f64::max);
            Ok((sum.max(boxed).max(idem).max(kkt), 1e-10))
        })
        .collect();
    tally("projection", key, results)
}

fn tightness(key: StreamKey, reps: usize, exec: &Exec) -> Result<LemmaCheck> {
    let r = tightness_experiment(1024.0, 1.0, PI, reps, key, exec)?;
    Ok(LemmaCheck {
        name: "dyadic_tightness".into(),
        instances: reps,
        failures: usize::from((r.p_hat - 1.0 / 3.0).abs() > 0.02) + usize::from(!r.identity_holds()),
        worst_margin: 0.02 - (r.p_hat - 1.0 / 3.0).abs(),
        repro_seed: key.id(),
    })
}

/// Every check, in a fixed order.
pub fn verify_all(seed: u64, instances: usize, tightness_reps: usize, exec: &Exec) -> Result<Vec<LemmaCheck>> {
    let root = StreamKey::root(seed);
    let mut rows = verify_lemma_suite(seed, instances, exec)?.checks;
    rows.extend(renewal(root.child(1 << 20), instances, exec)?);
    rows.push(w1_line(root.child((1 << 20) + 1), instances, exec)?);
    rows.push(metric_axioms(root.child((1 << 20) + 2), instances, exec)?);
    rows.push(dyadic_kappa(root.child((1 << 20) + 3), instances)?);
    rows.push(projection(root.child((1 << 20) + 4), instances)?);
    rows.push(tightness(root.child((1 << 20) + 5), tightness_reps, exec)?);
    Ok(rows)
}
