//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;

use std::process::ExitCode;

use common::{pairs, rel, Fixture};
use varjet::identities::{
    allwright_sides, differential_residual, eq8_check, fraclin_differentials, remark2_normalized, scalar_formulas,
};
use varjet::matkron::Mat;
use varjet::riccati::{detect_flow, estimate_existence_window, frac_solution, DetectConfig, FracLin};
use varjet::selftest::{run_algebra_suite, run_polarize_suite};
use varjet::sysmodel::system_to_riccati;
use varjet::varflow::{fd_jets, integrate_directional, integrate_jets, IntegratorConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cfg(step: f64) -> IntegratorConfig {
    IntegratorConfig::with_step(step)
}

fn algebra() -> Outcome {
    let checks = run_algebra_suite(2024, 500, 1e-12);
    let worst = checks.iter().map(|c| c.max_rel_dev).fold(0.0, f64::max);
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    check(
        failed.is_empty(),
        format!("{} families x 500, max deviation {worst:.2e}, failing {failed:?}", checks.len()),
    )
}

fn polarization() -> Outcome {
    let checks = run_polarize_suite(2024, 200, 1e-10);
    let worst = checks.iter().map(|c| c.max_rel_dev).fold(0.0, f64::max);
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    check(
        failed.is_empty(),
        format!("{} families x 200, max deviation {worst:.2e}, failing {failed:?}", checks.len()),
    )
}

/// Largest relative error of the `x²` jets against `(2, 4, 8, 24)`.
fn square_jet_error(step: f64) -> f64 {
    let f = common::scalar_square();
    let traj = integrate_jets(&f.sys, 0.0, &[1.0], 0.5, &cfg(step)).unwrap();
    let j = traj.last();
    let got = [j.phi[0], j.dphi[(0, 0)], j.d2phi[(0, 0)], j.d3phi[(0, 0)]];
    got.iter()
        .zip([2.0, 4.0, 8.0, 24.0])
        .map(|(g, e)| ((g - e) / e).abs())
        .fold(0.0, f64::max)
}

fn jets() -> Outcome {
    let closed = square_jet_error(1e-3);
    let mut worst = [0.0f64; 3];
    for f in common::all() {
        let (tau, xi, _, t) = &f.point;
        let c = cfg(1e-3);
        let traj = integrate_jets(&f.sys, *tau, xi, *t, &c).unwrap();
        let fd = fd_jets(&f.sys, *tau, xi, *t, &c, 1e-5).unwrap();
        let j = traj.last();
        worst[0] = worst[0].max(rel(fd.dphi.as_slice(), j.dphi.as_slice()));
        worst[1] = worst[1].max(rel(fd.d2phi.as_slice(), j.d2phi.as_slice()));
        worst[2] = worst[2].max(rel(fd.d3phi.as_slice(), j.d3phi.as_slice()));
    }
    check(
        closed <= 1e-7 && worst[0] <= 1e-4 && worst[1] <= 1e-3 && worst[2] <= 1e-2,
        format!(
            "closed form rel {closed:.2e}; fd vs variational D {:.2e}, D2 {:.2e}, D3 {:.2e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn eq8_fixtures() -> Vec<Fixture> {
    vec![
        common::linear(),
        common::scalar_square(),
        common::riccati2(),
        common::quadratic(),
        common::cubic(),
    ]
}

fn eq8_residual(f: &Fixture, step: f64) -> f64 {
    let (tau, xi, _, t) = &f.point;
    let traj = integrate_jets(&f.sys, *tau, xi, *t, &cfg(step)).unwrap();
    eq8_check(&traj, &f.sys).unwrap().max()
}

fn second_order() -> Outcome {
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for f in eq8_fixtures() {
        let r = eq8_residual(&f, 1e-3);
        worst = worst.max(r);
        parts.push(format!("{} {r:.1e}", f.name));
    }
    check(worst <= 1e-6, format!("max {worst:.2e} ({})", parts.join(", ")))
}

struct ThirdOrder {
    normalized: f64,
    quad_scale: f64,
    quad_i2: f64,
}

/// Seeded `(ξ, h)` samples on `[τ − 0.4, τ + 0.4]` for every fixture.
fn third_order_run(step: f64) -> ThirdOrder {
    let mut out = ThirdOrder {
        normalized: 0.0,
        quad_scale: 0.0,
        quad_i2: 0.0,
    };
    for f in common::all() {
        let n = f.sys.dim();
        let tau = f.point.0;
        for (xi, h) in pairs(n, 6, 0.5, 11 + n as u64) {
            for end in [tau - 0.4, tau + 0.4] {
                let traj = integrate_directional(&f.sys, tau, &xi, &h, end, &cfg(step)).unwrap();
                let rep = allwright_sides(&traj);
                out.normalized = out.normalized.max(rep.max_normalized());
                if f.name == "quadratic" {
                    out.quad_scale = out.quad_scale.max(rep.max_scale());
                    out.quad_i2 = out.quad_i2.max(rep.max_i2());
                }
            }
        }
    }
    out
}

fn third_order() -> Outcome {
    let r = third_order_run(1e-3);
    check(
        r.normalized <= 1e-6 && r.quad_scale > 1e-4 && r.quad_i2 > 0.0,
        format!(
            "max normalized residual {:.2e}; quadratic max scale {:.2e}, max |I2| {:.2e}",
            r.normalized, r.quad_scale, r.quad_i2
        ),
    )
}

fn discrimination() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for f in common::all() {
        let structural = system_to_riccati(&f.sys, 1e-12).is_some();
        let det = detect_flow(&f.sys, f.point.0, &DetectConfig::around(f.point.0)).unwrap();
        let expect = f.riccati.is_some();
        let sound = if expect {
            det.max_normalized <= 1e-7
        } else {
            det.max_normalized > 1e-3
        };
        ok &= sound && structural == expect && det.riccati_consistent == expect;
        parts.push(format!("{} {:.1e}", f.name, det.max_normalized));
    }
    check(ok, format!("flow max normalized lhs: {}", parts.join(", ")))
}

fn fractional_solution() -> Outcome {
    let step = 1e-3;
    let mut worst = 0.0f64;
    for f in [common::scalar_square(), common::scalar_timevarying(), common::riccati2()] {
        let rc = f.riccati.as_ref().unwrap();
        let (tau, xi, _, _) = &f.point;
        let (lo, hi) = estimate_existence_window(rc, *tau, xi, 3.0, &cfg(step)).unwrap();
        for end in [tau + 0.9 * (lo - tau), tau + 0.9 * (hi - tau)] {
            let frac = frac_solution(rc, *tau, xi, end, &cfg(step)).unwrap();
            let direct = integrate_jets(&f.sys, *tau, xi, end, &cfg(step)).unwrap();
            for (p, s) in frac.phi.iter().zip(&direct.samples) {
                worst = worst.max(rel(p, &s.phi));
            }
        }
    }
    let rc = common::scalar_square().riccati.unwrap();
    let (_, hi) = estimate_existence_window(&rc, 0.0, &[1.0], 3.0, &cfg(step)).unwrap();
    check(
        worst <= 1e-6 && (hi - 1.0).abs() <= 2.0 * step,
        format!("max rel gap {worst:.2e} on 0.9 J; x^2 boundary {hi:.6}"),
    )
}

fn scalar_chain() -> Outcome {
    let c = cfg(1e-3);
    let s = scalar_formulas(&common::cubic().sys, 0.0, 1.0, 0.3, &c).unwrap();
    let (a, b, d) = (s.eq4_lhs, s.scaled_schwarzian(), s.eq4_rhs);
    let pair = |x: f64, y: f64| (x - y).abs() / y.abs();
    let cubic = pair(a, b).max(pair(a, d)).max(pair(b, d));
    let mut riccati = 0.0f64;
    for f in [common::scalar_square(), common::scalar_timevarying()] {
        let (tau, xi, _, t) = &f.point;
        let r = scalar_formulas(&f.sys, *tau, xi[0], *t, &c).unwrap();
        let scale = 1.0 + r.eq4_scale();
        for v in [r.eq4_lhs, r.scaled_schwarzian(), r.eq4_rhs] {
            riccati = riccati.max(v.abs() / scale);
        }
    }
    check(
        cubic <= 1e-6 && riccati < 1e-9 && a.abs() > 1e-2,
        format!("cubic pairwise rel {cubic:.2e} (lhs {a:.6}); Riccati max normalized magnitude {riccati:.2e}"),
    )
}

fn random_fraclin(rng: &mut impl rand::Rng) -> FracLin {
    let mut u = |s: f64| rng.gen_range(-s..=s);
    let a = Mat::from_fn(2, 2, |_, _| u(1.0));
    let beta = vec![u(1.0), u(1.0)];
    let gamma = vec![u(0.3), u(0.3)];
    FracLin::new(a, beta, gamma, 1.0).unwrap()
}

fn fraclin_fd(g: &FracLin, x: &[f64], h: &[f64]) -> [Vec<f64>; 3] {
    let at = |s: f64| {
        let p: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + s * b).collect();
        g.eval(&p).unwrap()
    };
    let comb = |terms: &[(f64, f64)], denom: f64| -> Vec<f64> {
        let mut acc = vec![0.0; x.len()];
        for &(w, s) in terms {
            for (a, v) in acc.iter_mut().zip(at(s)) {
                *a += w * v;
            }
        }
        acc.into_iter().map(|a| a / denom).collect()
    };
    let (e1, e2, e3) = (1e-5, 1e-4, 1e-3);
    [
        comb(&[(1.0, e1), (-1.0, -e1)], 2.0 * e1),
        comb(&[(1.0, e2), (-2.0, 0.0), (1.0, -e2)], e2 * e2),
        comb(&[(1.0, 2.0 * e3), (-2.0, e3), (2.0, -e3), (-1.0, -2.0 * e3)], 2.0 * e3 * e3 * e3),
    ]
}

fn fractional_linear() -> Outcome {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut fd_worst = 0.0f64;
    let mut remark = 0.0f64;
    for _ in 0..50 {
        let g = random_fraclin(&mut rng);
        let x: Vec<f64> = (0..2).map(|_| rand::Rng::gen_range(&mut rng, -1.0..=1.0)).collect();
        let h: Vec<f64> = (0..2).map(|_| rand::Rng::gen_range(&mut rng, -1.0..=1.0)).collect();
        let exact = fraclin_differentials(&g, &x, &h).unwrap();
        let approx = fraclin_fd(&g, &x, &h);
        for (e, a) in exact.iter().zip(&approx) {
            fd_worst = fd_worst.max(rel(a, e));
        }
        remark = remark.max(remark2_normalized(&g, &x).unwrap());
    }
    let g = random_fraclin(&mut rng);
    let x = [1.0, 1.0];
    let [d1, d2, d3] = fraclin_differentials(&g, &x, &x).unwrap();
    let bump = 2.0 * x[0] * x[0];
    let p1 = [d1[0] + bump, d1[1]];
    let p2 = [d2[0] + bump, d2[1]];
    let r = differential_residual(&p1, &p2, &d3);
    let planted = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check(
        fd_worst <= 1e-5 && remark <= 1e-9 && planted > 1e-3,
        format!("fd rel {fd_worst:.2e}; remark residual {remark:.2e}; perturbed {planted:.2e}"),
    )
}

fn eq8_max(step: f64) -> f64 {
    eq8_fixtures().iter().map(|f| eq8_residual(f, step)).fold(0.0, f64::max)
}

fn convergence() -> Outcome {
    let (coarse, fine) = (1e-3, 5e-4);
    let r3 = square_jet_error(coarse) / square_jet_error(fine);
    let r4 = eq8_max(coarse) / eq8_max(fine);
    let r5 = third_order_run(coarse).normalized / third_order_run(fine).normalized;
    check(
        r3 >= 8.0 && r4 >= 8.0 && r5 >= 8.0,
        format!("step {coarse} -> {fine}: jets x{r3:.1}, second order x{r4:.1}, third order x{r5:.1}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("algebra suite", algebra),
        ("polarization round trip", polarization),
        ("jet correctness", jets),
        ("second-order identity", second_order),
        ("third-order identity", third_order),
        ("Riccati discrimination", discrimination),
        ("fractional-linear solution", fractional_solution),
        ("scalar chain", scalar_chain),
        ("fractional-linear differentials", fractional_linear),
        ("convergence", convergence),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d}", i + 1),
            Err(d) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
