//! Quick invariant suites run from the command line.

use std::f64::consts::PI;

use boltzmann::orbits::{estimate_beta_bar, find_periodic_orbit, BetaBarOptions, OrbitOptions};
use boltzmann::variational::{maupertuis, maupertuis_gradient, PolarPath};
use boltzmann::{
    billiard_map, check_semiconjugacy, energy, integrate_to_wall, propagate_to_wall, Params, State, SymbolWord, Vec2,
};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn result(name: &'static str, pass: bool, detail: String) -> CheckResult {
    CheckResult { name, pass, detail }
}

fn launches(p: &Params, n: usize) -> Vec<State> {
    (0..n)
        .filter_map(|i| {
            let x = -2.0 + 4.0 * (i as f64 + 0.5) / n as f64;
            let angle = 0.1 + (PI - 0.2) * ((i * 7) % n) as f64 / n as f64;
            State::launch(x, angle, p).ok()
        })
        .collect()
}

fn energy_conservation(p: &Params) -> CheckResult {
    let mut worst = 0.0f64;
    let mut arcs = 0;
    for s in launches(p, 400) {
        let mut s = s;
        for _ in 0..5 {
            let Ok((next, arc)) = billiard_map(&s, p) else { break };
            for q in arc.samples.iter().map(|a| a.state()).chain([next]) {
                if let Ok(e) = energy(&q, p) {
                    worst = worst.max((e - p.h).abs() / p.h);
                }
            }
            arcs += 1;
            s = next;
        }
    }
    result("energy", arcs > 0 && worst <= 1e-9, format!("{arcs} arcs, worst relative drift {worst:.2e}"))
}

fn ode_agreement(p: &Params) -> CheckResult {
    let mut worst = 0.0f64;
    let mut n = 0;
    for s in launches(p, 200) {
        let Ok(arc) = propagate_to_wall(&s, p) else { continue };
        let Ok(out) = integrate_to_wall(&s, p, 2.0 * arc.flight_time + 1.0, 1e-12) else { continue };
        let end = out.last().unwrap().state();
        worst = worst.max((end.pos - arc.end.pos).norm()).max((end.vel - arc.end.vel).norm());
        n += 1;
    }
    result("ode", n > 0 && worst <= 1e-6, format!("{n} launches, worst end-state gap {worst:.2e}"))
}

fn mirror_symmetry(p: &Params) -> CheckResult {
    let mut worst = 0.0f64;
    for s in launches(p, 20) {
        let (Ok(a), Ok(b)) = (propagate_to_wall(&s, p), propagate_to_wall(&s.mirrored(), p)) else { continue };
        let m = b.end.mirrored();
        worst = worst.max((a.end.pos - m.pos).norm()).max((a.end.vel - m.vel).norm());
        worst = worst.max((a.flight_time - b.flight_time).abs());
    }
    result("mirror", worst <= 1e-9, format!("worst mirrored mismatch {worst:.2e}"))
}

fn gradient(p: &Params) -> CheckResult {
    let mut worst = 0.0f64;
    for i in 0..10 {
        let z0 = Vec2::new(-2.0 + 0.4 * i as f64, -p.l);
        let z1 = Vec2::new(1.5 - 0.3 * i as f64, -p.l);
        let k = [1i64, -1, 2, -2][i % 4];
        let Ok(mut path) = PolarPath::spiral(z0, z1, k, 24) else { continue };
        for j in 1..24 {
            let s = j as f64 / 24.0;
            path.rho[j] += 0.2 * (PI * s).sin();
            path.theta[j] += 0.1 * (2.0 * PI * s).sin();
        }
        let g = maupertuis_gradient(&path, p);
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let x = path.free();
        for m in 0..x.len() {
            let (mut u, mut v) = (x.clone(), x.clone());
            u[m] += 1e-6;
            v[m] -= 1e-6;
            let fd = (maupertuis(&path.with_free(&u), p) - maupertuis(&path.with_free(&v), p)) / 2e-6;
            worst = worst.max((fd - g[m]).abs() / scale);
        }
    }
    result("gradient", worst <= 1e-5, format!("worst relative error {worst:.2e}"))
}

fn periodic(p: &Params, opts: &OrbitOptions) -> CheckResult {
    let mut lines = Vec::new();
    let mut pass = true;
    for w in [vec![1i64], vec![1, -1]] {
        let word = SymbolWord::periodic(w.clone()).unwrap();
        match find_periodic_orbit(&word, p, opts).and_then(|o| o.certify(opts).map(|_| o)) {
            Ok(o) => {
                let agree = check_semiconjugacy(&o.initial_state(), p, 4).map(|r| r.agree).unwrap_or(false);
                pass &= agree;
                lines.push(format!("{word}: residual {:.1e}, window 4 agrees {agree}", o.max_residual()));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("{word}: {e}"));
            }
        }
    }
    result("periodic", pass, lines.join("; "))
}

fn beta_bar(p: &Params) -> CheckResult {
    match estimate_beta_bar(p, &BetaBarOptions::default()) {
        Ok(b) => result("beta-bar", b.beta_bar <= b.cap, format!("{:.6} <= cap {:.6}", b.beta_bar, b.cap)),
        Err(e) => result("beta-bar", false, e.to_string()),
    }
}

/// Available suites, in run order.
pub const SUITES: [&str; 6] = ["energy", "ode", "mirror", "gradient", "periodic", "beta-bar"];

pub fn run(suite: &str, p: &Params, opts: &OrbitOptions) -> Option<CheckResult> {
    Some(match suite {
        "energy" => energy_conservation(p),
        "ode" => ode_agreement(p),
        "mirror" => mirror_symmetry(p),
        "gradient" => gradient(p),
        "periodic" => periodic(p, opts),
        "beta-bar" => beta_bar(p),
        _ => return None,
    })
}
