mod common;

use boltzmann::orbits::{estimate_beta_bar, BetaBarOptions};
use boltzmann::propagator::{propagate_to_wall, propagate_to_wall_sampled};
use boltzmann::{
    angular_momentum, billiard_map, energy, integrate_ode, orbit_elements, potential, reflect, winding_number,
    Error, Params, State, Vec2,
};
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn closed_form_matches_ode_on_random_launches() {
    let mut r = rng(7);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut tries = 0;
    while checked < 60 {
        tries += 1;
        let p = Params::new(r.gen_range(0.2..2.0), 1.0, r.gen_range(0.0..0.2)).unwrap();
        let s = random_launch(&mut r, &p, 2.0);
        let arc = match propagate_to_wall(&s, &p) {
            Ok(a) => a,
            Err(e) if e.is_dynamical() => continue,
            Err(e) => panic!("{e}"),
        };
        let (end, t) = ode_flight(&s, &p, 2.0 * arc.flight_time + 1.0, 1e-12).unwrap();
        let dx = (end.pos - arc.end.pos).norm();
        worst = worst.max(dx);
        assert!(dx < 1e-6, "position {dx} for {s:?} {p:?}");
        assert!((t - arc.flight_time).abs() < 1e-6, "time {t} vs {}", arc.flight_time);
        checked += 1;
    }
    eprintln!("worst {worst:e} after {tries} tries");
}



#[test]
fn keplerian_arc_matches_the_conic_along_the_flight() {
    let p = Params::new(0.5, 1.0, 0.0).unwrap();
    let s = State::launch(0.2, 1.52, &p).unwrap();
    let arc = propagate_to_wall(&s, &p).unwrap();
    let out = integrate_ode(&s, &p, arc.flight_time, 1e-12).unwrap();
    let el = orbit_elements(&s, &p).unwrap();
    let t0 = el.time_at_anomaly(arc.nu_start);
    for smp in out.iter().step_by(7) {
        // invert t(nu) by bisection on the closed form
        let (mut lo, mut hi) = (arc.nu_start, arc.nu_end);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if el.time_at_anomaly(mid) - t0 < smp.t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let exact = el.state_at_anomaly(0.5 * (lo + hi));
        assert!((exact.pos - smp.pos).norm() < 1e-7, "t = {}", smp.t);
    }
}

#[test]
fn zero_time_request_returns_the_input() {
    let p = Params::new(1.0, 1.0, 0.1).unwrap();
    let s = State::launch(0.0, 1.0, &p).unwrap();
    let out = integrate_ode(&s, &p, 0.0, 1e-10).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].state(), s);
    assert_eq!(out[0].t, 0.0);
}

#[test]
fn tighter_tolerance_reduces_drift() {
    let p = Params::new(1.0, 1.0, 0.05).unwrap();
    let s = State::launch(0.1, 1.45, &p).unwrap();
    // relative to the local energy scale h + |V|
    let drift = |tol: f64| {
        let out = integrate_ode(&s, &p, 3.0, tol).unwrap();
        out.iter()
            .map(|a| {
                let st = a.state();
                (energy(&st, &p).unwrap() - p.h).abs() / (p.h + potential(&st.pos, &p).unwrap().abs())
            })
            .fold(0.0f64, f64::max)
    };
    let mut tol = 1e-9;
    let mut last = drift(tol);
    assert!(last <= 100.0 * tol);
    for _ in 0..4 {
        tol *= 0.5;
        let d = drift(tol);
        // the ratio tends to 1/2 from above as tol -> 0
        assert!(d <= 0.51 * last, "tol {tol}: {d:e} vs {last:e}");
        assert!(d <= 100.0 * tol);
        last = d;
    }
}

#[test]
fn collisional_ode_start_is_reported() {
    let p = Params::new(1.0, 1.0, 0.1).unwrap();
    let s = State::launch(0.0, std::f64::consts::FRAC_PI_2, &p).unwrap();
    let r = integrate_ode(&s, &p, 10.0, 1e-10);
    assert!(matches!(r, Err(Error::NearCollision { .. })), "{r:?}");
}

#[test]
fn momentum_constant_on_arcs_and_changes_at_bounces() {
    let p = Params::new(0.2, 1.0, 0.02).unwrap();
    // first launch on a grid that survives three bounces
    let three = |s: &State| {
        let mut s = *s;
        (0..3).all(|_| billiard_map(&s, &p).map(|(n, _)| s = n).is_ok())
    };
    let mut s = (0..200)
        .flat_map(|i| (0..100).map(move |j| (-2.0 + 0.02 * i as f64, 0.2 + 0.027 * j as f64)))
        .map(|(x, a)| State::launch(x, a, &p).unwrap())
        .find(three)
        .unwrap();
    let mut changed = false;
    for _ in 0..3 {
        let (next, arc) = billiard_map(&s, &p).unwrap();
        let c = angular_momentum(&s);
        for smp in &arc.samples {
            assert!((angular_momentum(&smp.state()) - c).abs() <= 1e-9 * c.abs());
        }
        changed |= (angular_momentum(&next) - c).abs() > 1e-6;
        s = next;
    }
    assert!(changed);
}

#[test]
fn tangent_launches_below_threshold_do_not_come_back_after_half_a_turn() {
    for h in [0.5, 1.0, 2.0] {
        let base = Params::new(h, 1.0, 0.0).unwrap();
        let bar = estimate_beta_bar(&base, &BetaBarOptions::default()).unwrap().beta_bar;
        let p = base.with_beta(0.9 * bar);
        for i in 1..60 {
            let x = -6.0 + 12.0 * i as f64 / 60.0;
            for dir in [1.0, -1.0] {
                let pos = Vec2::new(x, -1.0);
                let v = boltzmann::speed_at(&pos, &p).unwrap();
                // a hair above tangency so the launch leaves the wall
                let s = State::new(pos, Vec2::new(dir * v * 1e-6f64.cos(), v * 1e-6f64.sin()));
                match propagate_to_wall(&s, &p) {
                    Ok(arc) => assert!(arc.swept_angle().abs() < std::f64::consts::PI, "h {h} x {x}"),
                    Err(Error::Escape(_)) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
}

#[test]
fn samples_and_winding_are_consistent() {
    let mut r = rng(11);
    let mut n = 0;
    while n < 100 {
        let p = Params::new(r.gen_range(0.2..2.0), 1.0, r.gen_range(0.0..0.2)).unwrap();
        let s = random_launch(&mut r, &p, 3.0);
        let Ok(arc) = propagate_to_wall_sampled(&s, &p, 512) else { continue };
        n += 1;
        assert_eq!(arc.start.pos.y, -1.0);
        assert_eq!(arc.end.pos.y, -1.0);
        for w in &arc.samples[1..511] {
            assert!(w.pos.y + 1.0 > 0.0);
            assert!(((energy(&w.state(), &p).unwrap() - p.h) / p.h).abs() < 1e-8);
        }
        let pts: Vec<_> = arc.samples.iter().map(|w| w.pos).collect();
        assert_eq!(winding_number(&pts).unwrap(), arc.winding);
    }
}

proptest! {
    #[test]
    fn reflection_preserves_speed(x in -5.0f64..5.0, vx in -3.0f64..3.0, vy in -3.0f64..-1e-3) {
        let p = Params::new(1.0, 1.0, 0.0).unwrap();
        let s = State::from_xy(x, -1.0, vx, vy);
        let r = reflect(&s, &p).unwrap();
        prop_assert_eq!(r.vel.norm(), s.vel.norm());
        prop_assert_eq!(r.pos, s.pos);
        prop_assert_eq!(r.vel, Vec2::new(vx, -vy));
    }

    #[test]
    fn mirrored_launches_give_mirrored_arcs(x in -3.0f64..3.0, angle in 0.3f64..2.8, beta in 0.0f64..0.2) {
        let p = Params::new(1.0, 1.0, beta).unwrap();
        let s = State::launch(x, angle, &p).unwrap();
        if let Ok(a) = propagate_to_wall(&s, &p) {
            let b = propagate_to_wall(&s.mirrored(), &p).unwrap();
            prop_assert!((a.end.mirrored().pos - b.end.pos).norm() < 1e-9);
            prop_assert_eq!(a.winding, -b.winding);
        }
    }
}
