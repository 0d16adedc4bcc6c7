//! Slow integration checks of the full map: fixed-point invariance and the
//! two qualitative limit solutions under the braking protocol.

use ringroad::equilibrium::{equilibrium_velocity, fixed_point};
use ringroad::model::{control, DriverView, KinematicState};
use ringroad::params::ModelParams;
use ringroad::ring::{
    classify, init_uniform, run, run_from, step, ClassifyThresholds, KickSchedule, LimitClass,
    RingConfig,
};

const N: usize = 28;
const C: f64 = 314.0;

fn cfg_with_v_star(v_star: f64) -> RingConfig {
    let mut params = ModelParams::default();
    params.v_star = v_star;
    RingConfig::new(N, C, params)
}

#[test]
fn control_vanishes_at_the_equilibrium_view() {
    let p = ModelParams::default();
    let rho = N as f64 / C;
    let eq = equilibrium_velocity(rho, &p, 1e-8).unwrap();
    let view = DriverView {
        ego: KinematicState::new(0.0, eq.v0, 0.0),
        leader: KinematicState::new(1.0 / rho, eq.v0, 0.0),
        gap: 1.0 / rho,
    };
    assert!(control(&view, &p).abs() < 1e-6);
}

#[test]
fn one_step_at_the_fixed_point_is_a_pure_translation() {
    let p = ModelParams::default();
    let rho = N as f64 / C;
    let eq = equilibrium_velocity(rho, &p, 1e-8).unwrap();
    let state = fixed_point(rho, N, &p).unwrap();
    let cfg = RingConfig::new(N, C, p);
    let out = step(&state, &cfg, None);
    for i in 0..N {
        assert!(out.controls[i].abs() < 1e-6);
        assert!(out.next.a[i].abs() < 1e-6);
        assert!((out.next.v[i] - eq.v0).abs() < 1e-12);
        let want_x = (state.x[i] + eq.v0 * cfg.params.dt).rem_euclid(C);
        assert!((out.next.x[i] - want_x).abs() < 1e-12);
    }
}

#[test]
fn fixed_point_is_invariant_for_a_thousand_steps() {
    let p = ModelParams::default();
    let rho = N as f64 / C;
    let eq = equilibrium_velocity(rho, &p, 1e-8).unwrap();
    let state = fixed_point(rho, N, &p).unwrap();
    let cfg = RingConfig::new(N, C, p);
    let traj = run_from(state, &cfg, 1000, None, 1).unwrap();
    for frame in &traj.frames {
        for &v in &frame.v {
            assert!(
                (v - eq.v0).abs() < 1e-4,
                "t={}: |v - v0| = {}",
                frame.t,
                (v - eq.v0).abs()
            );
        }
    }
    assert!(!traj.any_overlap());
}

#[test]
fn kicked_run_at_low_ideal_speed_settles_to_free_flow() {
    let cfg = cfg_with_v_star(9.0);
    let traj = run(&cfg, 6000, Some(KickSchedule::default_braking()), 1).unwrap();
    let (class, op) = classify(&traj, &ClassifyThresholds::default()).unwrap();
    assert_eq!(class, LimitClass::FreeFlow, "A = {}", op.amplitude_a);
    assert!(op.amplitude_a < 0.05);
}

#[test]
fn kicked_run_at_high_ideal_speed_sustains_a_wave() {
    let cfg = cfg_with_v_star(10.0);
    let traj = run(&cfg, 6000, Some(KickSchedule::default_braking()), 1).unwrap();
    let (class, op) = classify(&traj, &ClassifyThresholds::default()).unwrap();
    assert_eq!(class, LimitClass::StopAndGo, "A = {}", op.amplitude_a);
    assert!(op.amplitude_a > 1.0);
}

#[test]
fn translation_equivariance_of_the_map() {
    let cfg = cfg_with_v_star(10.49);
    let base = init_uniform(&cfg, cfg.params.v_star - 1.0).unwrap();
    let mut shifted = base.clone();
    for x in &mut shifted.x {
        *x = (*x + 97.25).rem_euclid(C);
    }
    let kick = KickSchedule::default_braking();
    let ta = run_from(base, &cfg, 100, Some(kick), 1).unwrap();
    let tb = run_from(shifted, &cfg, 100, Some(kick), 1).unwrap();
    for (fa, fb) in ta.frames.iter().zip(&tb.frames) {
        for i in 0..N {
            assert!(
                (fa.v[i] - fb.v[i]).abs() < 1e-12,
                "t={} i={i}: dv = {:e}",
                fa.t,
                (fa.v[i] - fb.v[i]).abs()
            );
            assert!((fa.a[i] - fb.a[i]).abs() < 1e-12);
            let dx = (fb.x[i] - fa.x[i] - 97.25).rem_euclid(C);
            let dx = dx.min(C - dx);
            assert!(dx < 1e-9, "t={} i={i}: dx = {dx:e}", fa.t);
        }
    }
}

#[test]
fn kick_dies_when_the_vehicle_stops() {
    // A harsh kick from a slow start drives v through zero; after that the
    // override must not reengage even though the window is still open.
    let mut params = ModelParams::default();
    params.v_star = 10.49;
    let cfg = RingConfig::new(N, C, params);
    let state = init_uniform(&cfg, 0.5).unwrap();
    let kick = KickSchedule {
        vehicle: 0,
        control_override: -6.0,
        start_time: 0.0,
        duration: 6.0,
    };
    let traj = run_from(state, &cfg, 36, Some(kick), 1).unwrap();
    let stopped_at = traj
        .frames
        .iter()
        .position(|f| f.v[0] <= 0.0)
        .expect("vehicle 0 should be dragged to a stop");
    for f in &traj.frames[stopped_at..] {
        assert!(
            (f.u_bar[0] - (-6.0)).abs() > 1e-9,
            "t={}: override still applied after the stop",
            f.t
        );
    }
}
