use lambda_profile::classify::{classify, ClassifierOptions};
use lambda_profile::dopri::{StepOptions, Stepper};
use lambda_profile::integrator::theta_ddot;
use lambda_profile::shoot::{delta_start, find_delta_s, scan_delta, ScanOptions, ShootOptions};
use lambda_profile::surface::{mirror_extend_uniform, AXIS_LAYER, polyline_self_intersects, revolve, segments_intersect};
use lambda_profile::{
    integrate, rhs, singular_start, Branch, Error, Event, EventKind, IntegrationControls, Params, ProfileState, Trajectory,
};
use proptest::prelude::*;

fn lam1() -> Params {
    Params::new(2, -1.0).unwrap()
}

fn sample_runs() -> Vec<Trajectory> {
    let p = lam1();
    let c = IntegrationControls::default().with_max_turns(2);
    let mut runs: Vec<Trajectory> =
        [0.004, 0.02, 0.3, 0.6].iter().map(|&d| integrate(delta_start(d), &p, &c).unwrap()).collect();
    for b in [-0.5, 0.0, 0.5] {
        runs.push(integrate(singular_start(b, Branch::Ascending, &p, 1e-4).unwrap(), &p, &c).unwrap());
    }
    runs
}

#[test]
fn events_persist_at_tenfold_resolution() {
    let p = lam1();
    for traj in sample_runs() {
        let c = traj.controls;
        let fine = IntegrationControls {
            rel_tol: c.rel_tol / 10.0,
            abs_tol: c.abs_tol / 10.0,
            h_max: c.h_max / 10.0,
            ..c
        };
        let fine_traj = integrate(*traj.start(), &p, &fine).unwrap();
        // Zeros inside the axis layer are integration noise.
        let outside = |t: &Trajectory| -> Vec<Event> {
            t.events.iter().filter(|e| e.state.r >= AXIS_LAYER || e.kind == EventKind::AxisHit).copied().collect()
        };
        let (events, fine_events) = (outside(&traj), outside(&fine_traj));
        let kinds: Vec<EventKind> = events.iter().map(|e| e.kind).collect();
        let fine_kinds: Vec<EventKind> = fine_events.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, fine_kinds, "start {:?}", traj.start());
        for (a, b) in events.iter().zip(&fine_events) {
            assert!((a.s - b.s).abs() < 1e-6, "{:?}: {} vs {}", a.kind, a.s, b.s);
        }
    }
}

#[test]
fn events_are_transversal() {
    for traj in sample_runs() {
        for ev in &traj.events {
            let st = ev.state;
            let (sin, cos) = st.theta.sin_cos();
            let td = rhs(&st, &traj.params).unwrap().2;
            let rate = match ev.kind {
                EventKind::RAxisTurn => cos * td,
                EventKind::FPrimeZero => -sin * td,
                EventKind::ThetaDotZero => theta_ddot(&st, &traj.params).unwrap(),
                _ => continue,
            };
            assert!(rate.abs() > 1e-8, "{:?} at s={}: {rate:e}", ev.kind, ev.s);
        }
    }
}

#[test]
fn backward_integration_recovers_the_start() {
    let p = lam1();
    let field = |_s: f64, y: &[f64; 3]| {
        rhs(&ProfileState::new(0.0, y[0], y[1], y[2]), &p).ok().map(|(a, b, c)| [a, b, c])
    };
    let opts = StepOptions { rel_tol: 1e-12, abs_tol: 1e-14, h_max: 0.05, direction: 1.0 };
    let mut fwd = Stepper::new(field, 0.0, [0.0, 0.5, 0.0], opts).unwrap();
    fwd.set_stop(2.0);
    while fwd.t() < 2.0 {
        fwd.step().unwrap();
    }
    let back_opts = StepOptions { direction: -1.0, ..opts };
    let mut back = Stepper::new(field, 2.0, fwd.y(), back_opts).unwrap();
    back.set_stop(0.0);
    while back.t() > 0.0 {
        back.step().unwrap();
    }
    let y = back.y();
    assert!(y[0].abs() < 1e-9 && (y[1] - 0.5).abs() < 1e-9 && y[2].abs() < 1e-9, "{y:?}");
}

#[test]
fn mirrored_state_runs_back_to_the_mirrored_start() {
    let p = lam1();
    let c = IntegrationControls { rel_tol: 1e-12, abs_tol: 1e-14, s_max: 1.5, ..Default::default() };
    let start = delta_start(0.5);
    let traj = integrate(start, &p, &c).unwrap();
    let m = traj.evaluate(1.5).unwrap().mirrored();
    let back = integrate(m, &p, &c).unwrap();
    let end = back.end();
    let target = start.mirrored();
    assert!((end.s - target.s).abs() < 1e-12);
    assert!((end.x - target.x).abs() < 1e-9 && (end.r - target.r).abs() < 1e-9 && (end.theta - target.theta).abs() < 1e-9);
}

#[test]
fn global_error_scales_with_tolerance() {
    let p = lam1();
    let run = |tol: f64| {
        let c = IntegrationControls { rel_tol: tol, abs_tol: tol * 1e-2, event_tol: tol.min(1e-12), s_max: 3.0, ..Default::default() };
        *integrate(delta_start(0.5), &p, &c).unwrap().end()
    };
    let reference = run(1e-14);
    let err = |st: ProfileState| {
        ((st.x - reference.x).powi(2) + (st.r - reference.r).powi(2) + (st.theta - reference.theta).powi(2)).sqrt()
    };
    let (coarse, fine) = (err(run(1e-9)), err(run(1e-11)));
    assert!(fine < coarse / 10.0, "{coarse:e} {fine:e}");
    assert!(coarse < 1e-7, "{coarse:e}");
}

#[test]
fn classification_is_stable_near_grid_points() {
    let p = lam1();
    let grid = [0.004, 0.009, 0.014, 0.02, 0.3, 0.6];
    let opts = ScanOptions::default();
    let centre = scan_delta(&p, &grid, &opts).unwrap();
    for shift in [-1e-6, 1e-6] {
        let shifted: Vec<f64> = grid.iter().map(|d| d + shift).collect();
        let rows = scan_delta(&p, &shifted, &opts).unwrap();
        for (a, b) in centre.iter().zip(&rows) {
            assert_eq!(a.label, b.label, "δ={} shifted by {shift}", a.parameter);
        }
    }
}

fn brute_force_self_intersects(points: &[[f64; 2]]) -> bool {
    let m = points.len().saturating_sub(1);
    for i in 0..m {
        for j in i + 2..m {
            if segments_intersect(points[i], points[i + 1], points[j], points[j + 1]) {
                return true;
            }
        }
    }
    false
}

#[test]
fn sweep_agrees_with_all_pairs_on_long_polylines() {
    // An embedded spiral, and the same spiral with one closing chord.
    let n = 10_000;
    let mut spiral: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let t = i as f64 * 0.01;
            [(1.0 + 0.1 * t) * t.cos(), (1.0 + 0.1 * t) * t.sin()]
        })
        .collect();
    assert!(!brute_force_self_intersects(&spiral));
    assert!(!polyline_self_intersects(&spiral));
    spiral.push([0.0, 0.0]);
    assert!(brute_force_self_intersects(&spiral));
    assert!(polyline_self_intersects(&spiral));
}

#[test]
fn discrete_mean_curvature_converges_quadratically_on_the_sphere() {
    let p = lam1();
    let start = ProfileState::new(0.0, 0.0, p.r_lambda, 0.0);
    let traj = integrate(start, &p, &IntegrationControls::default()).unwrap();
    let exact = 2.0 / p.r_lambda;
    let error = |points: usize, meridians: usize| {
        let prof = mirror_extend_uniform(&traj, points).unwrap();
        let mesh = revolve(&prof, meridians, &p).unwrap();
        mesh.discrete_mean_curvature().iter().map(|h| (h - exact).abs()).fold(0.0, f64::max)
    };
    let coarse = error(32, 64);
    let fine = error(64, 128);
    assert!(fine < coarse / 3.0, "{coarse:e} {fine:e}");
}

#[test]
fn construction_in_four_dimensions() {
    let p = Params::new(3, -4.0 * (2.0f64 / 5.0).sqrt()).unwrap();
    let res = find_delta_s(&p, 1e-6, &ShootOptions::default()).unwrap();
    assert_eq!(res.closing_class, "C2(2,3)");
    assert!(res.bracket.1 - res.bracket.0 < 1e-6);
    assert!(res.embedded);
    assert!(res.convexity.min_h > 0.0);
    assert!(res.convexity.kappa_profile_sign_changes >= 2);
}

#[test]
fn small_lambda_fails_cleanly() {
    let p = Params::new(2, -0.5).unwrap();
    match find_delta_s(&p, 1e-6, &ShootOptions::default()) {
        Ok(res) => assert!(!res.hypothesis_holds),
        Err(e) => assert!(matches!(e, Error::NotFound(_) | Error::NonConvergence(_)), "{e}"),
    }
    let c = IntegrationControls::default().with_max_turns(2);
    let traj = integrate(delta_start(0.1), &p, &c).unwrap();
    classify(&traj, &ClassifierOptions::default()).unwrap();
}

proptest! {
    #[test]
    fn radii_solve_their_quadratics(lambda in -100.0f64..100.0, n in 2u32..=10) {
        let p = Params::new(n, lambda).unwrap();
        let nm1 = f64::from(n - 1);
        let nf = f64::from(n);
        let c = p.c_lambda;
        let r = p.r_lambda;
        prop_assert!(c > 0.0 && r > 0.0);
        prop_assert!((c * c - lambda * c - nm1).abs() <= 1e-14 * (c * c).max(lambda.abs() * c).max(nm1));
        prop_assert!((r * r - lambda * r - nf).abs() <= 1e-14 * (r * r).max(lambda.abs() * r).max(nf));
    }

    #[test]
    fn trajectory_json_round_trips(delta in 0.01f64..1.5, lambda in -3.0f64..-0.5) {
        let p = Params::new(2, lambda).unwrap();
        prop_assume!(delta < p.c_lambda);
        let c = IntegrationControls { s_max: 3.0, ..Default::default() }.with_max_turns(2);
        let traj = integrate(delta_start(delta), &p, &c).unwrap();
        let text = traj.to_json().unwrap();
        let back = Trajectory::from_json(&text).unwrap();
        prop_assert_eq!(&back, &traj);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }
}
