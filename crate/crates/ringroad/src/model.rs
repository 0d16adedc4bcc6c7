//! The driving policy: anticipation rollout, utility components, and the
//! Boltzmann-averaged control input for a single driver.
//!
//! Everything here is a pure function of its arguments. Positions enter
//! only through the ego-to-leader gap, which the caller must already have
//! unwrapped onto (0, C]; this module knows nothing about the ring.

use crate::params::ModelParams;

/// Exponents below this are flushed to exactly zero instead of calling
/// `exp`, which keeps far-tail utilities finite and reproducible.
const EXP_FLUSH: f64 = -700.0;

#[inline]
fn exp_or_zero(e: f64) -> f64 {
    if e < EXP_FLUSH {
        0.0
    } else {
        e.exp()
    }
}

/// Like `exp_or_zero` but also saturating above, so the backward penalty
/// stays finite for arbitrarily negative velocities.
#[inline]
fn exp_saturating(e: f64) -> f64 {
    if e < EXP_FLUSH {
        0.0
    } else {
        e.min(-EXP_FLUSH).exp()
    }
}

/// Kinematic state (x, v, a) of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

impl KinematicState {
    pub fn new(x: f64, v: f64, a: f64) -> Self {
        Self { x, v, a }
    }
}

/// What one driver sees: its own state, the leader's state, and the
/// center-to-center gap to the leader along the travel direction.
#[derive(Debug, Clone, Copy)]
pub struct DriverView {
    pub ego: KinematicState,
    pub leader: KinematicState,
    /// Center-to-center distance in (0, C], already unwrapped by the caller.
    pub gap: f64,
}

/// One entry of the anticipated rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnticipatedState {
    pub x_hat: f64,
    pub v_hat: f64,
    pub a_hat: f64,
}

/// Rollout recursion shared by ego and leader. `out` must have length
/// `horizon + 2`; entry 0 is the seed state, and the acceleration is the
/// seed's for the first step and `u` afterwards.
fn anticipate_into(seed: KinematicState, u: f64, dt: f64, out: &mut [AnticipatedState]) {
    out[0] = AnticipatedState {
        x_hat: seed.x,
        v_hat: seed.v,
        a_hat: seed.a,
    };
    for h in 0..out.len() - 1 {
        let prev = out[h];
        out[h + 1] = AnticipatedState {
            x_hat: prev.x_hat + prev.v_hat * dt,
            v_hat: prev.v_hat + prev.a_hat * dt,
            a_hat: u,
        };
    }
}

/// Anticipated ego trajectory under the constant action `u`.
///
/// Returns `horizon + 2` states (indices 0..=horizon+1). The current
/// acceleration applies for the first step, so `v_hat[1] = v + a*dt`.
pub fn anticipate_ego(
    ego: KinematicState,
    u: f64,
    horizon: u32,
    dt: f64,
) -> Vec<AnticipatedState> {
    let mut out = vec![AnticipatedState { x_hat: 0.0, v_hat: 0.0, a_hat: 0.0 }; horizon as usize + 2];
    anticipate_into(ego, u, dt, &mut out);
    out
}

/// Anticipated leader trajectory: the same recursion with zero action.
pub fn anticipate_leader(leader: KinematicState, horizon: u32, dt: f64) -> Vec<AnticipatedState> {
    anticipate_ego(leader, 0.0, horizon, dt)
}

/// Reward for moving at the desired speed; only the first anticipated step
/// matters.
pub fn utility_forward(u: f64, view: &DriverView, p: &ModelParams) -> f64 {
    let v1 = view.ego.v + view.ego.a * p.dt + u * p.dt;
    let d = (v1 - p.v_star) / (p.kappa1 * p.v_star);
    exp_or_zero(-d * d)
}

/// Penalty for moving backward; only the first anticipated step matters.
pub fn utility_backward(u: f64, view: &DriverView, p: &ModelParams) -> f64 {
    let v1 = view.ego.v + view.ego.a * p.dt + u * p.dt;
    exp_saturating(-p.kappa_v2 * (v1 + p.kappa_02))
}

/// Collision kernel F(x) = exp(-x^2 - 2x).
#[inline]
fn collision_kernel(x: f64) -> f64 {
    exp_or_zero(-x * x - 2.0 * x)
}

/// Perceived front-collision risk given precomputed rollouts.
///
/// The rollouts must be seeded with ego at x=0 and leader at x=gap, so the
/// anticipated bumper-to-bumper distance is an unwrapped relative
/// coordinate throughout the horizon.
fn collision_from_rollouts(
    u: f64,
    ego: &[AnticipatedState],
    leader: &[AnticipatedState],
    p: &ModelParams,
) -> f64 {
    let dt = p.dt;
    let half_len = p.vehicle_length / 2.0;
    let mut worst = 0.0_f64;
    for h in 0..=p.horizon as usize {
        let e = ego[h + 1];
        let l = leader[h + 1];
        let dx = (l.x_hat + l.v_hat * dt - half_len) - (e.x_hat + e.v_hat * dt + half_len);
        let value = if dx <= 0.0 {
            1.0
        } else {
            let v_next = e.v_hat + u * dt;
            let delta = p.kappa_c3
                + p.kappa_v3 * v_next.abs()
                + p.kappa_d3 * (v_next - l.v_hat).max(0.0);
            collision_kernel(dx / delta)
        };
        worst = worst.max(value);
    }
    worst
}

/// Perceived front-collision risk over the anticipation horizon, in (0, 1].
pub fn utility_collision(u: f64, view: &DriverView, p: &ModelParams) -> f64 {
    let len = p.horizon as usize + 2;
    let mut ego = vec![AnticipatedState { x_hat: 0.0, v_hat: 0.0, a_hat: 0.0 }; len];
    let mut leader = ego.clone();
    anticipate_into(
        KinematicState::new(0.0, view.ego.v, view.ego.a),
        u,
        p.dt,
        &mut ego,
    );
    anticipate_into(
        KinematicState::new(view.gap, view.leader.v, view.leader.a),
        0.0,
        p.dt,
        &mut leader,
    );
    collision_from_rollouts(u, &ego, &leader, p)
}

#[inline]
fn combine(u: f64, view: &DriverView, collision: f64, p: &ModelParams) -> f64 {
    p.w1 * utility_forward(u, view, p)
        + p.w2 * utility_backward(u, view, p)
        + p.w3 * collision
}

/// Weighted sum of the three utility components; the weights carry their
/// signs.
pub fn effective_utility(u: f64, view: &DriverView, p: &ModelParams) -> f64 {
    combine(u, view, utility_collision(u, view, p), p)
}

/// Boltzmann-weighted mean of `actions` under `lambda * utilities`.
///
/// The exponent is shifted by its maximum before exponentiation, so large
/// lambda cannot overflow. The result is a convex combination of the
/// actions.
pub fn boltzmann_mean(actions: &[f64], utilities: &[f64], lambda: f64) -> f64 {
    debug_assert_eq!(actions.len(), utilities.len());
    let m = utilities.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
    let mut norm = 0.0;
    let mut mean = 0.0;
    for (&u, &val) in actions.iter().zip(utilities) {
        let w = exp_or_zero(lambda * (val - m));
        norm += w;
        mean += u * w;
    }
    mean / norm
}

/// The regularized control input: the Boltzmann average of the effective
/// utility over the action grid. Always lies in [u_min, u_max].
pub fn control(view: &DriverView, p: &ModelParams) -> f64 {
    let actions = p.action_grid();
    let len = p.horizon as usize + 2;
    let mut ego = vec![AnticipatedState { x_hat: 0.0, v_hat: 0.0, a_hat: 0.0 }; len];
    let mut leader = ego.clone();
    // The leader rollout does not depend on the candidate action.
    anticipate_into(
        KinematicState::new(view.gap, view.leader.v, view.leader.a),
        0.0,
        p.dt,
        &mut leader,
    );
    let mut utilities = Vec::with_capacity(actions.len());
    for &u in &actions {
        anticipate_into(
            KinematicState::new(0.0, view.ego.v, view.ego.a),
            u,
            p.dt,
            &mut ego,
        );
        let collision = collision_from_rollouts(u, &ego, &leader, p);
        utilities.push(combine(u, view, collision, p));
    }
    boltzmann_mean(&actions, &utilities, p.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> ModelParams {
        ModelParams::default()
    }

    fn view(ego: (f64, f64, f64), leader: (f64, f64, f64), gap: f64) -> DriverView {
        DriverView {
            ego: KinematicState::new(ego.0, ego.1, ego.2),
            leader: KinematicState::new(leader.0, leader.1, leader.2),
            gap,
        }
    }

    #[test]
    fn anticipate_uniform_motion() {
        let out = anticipate_ego(KinematicState::new(0.0, 10.0, 0.0), 0.0, 1, 1.0 / 6.0);
        assert_eq!(out.len(), 3);
        let xs: Vec<f64> = out.iter().map(|s| s.x_hat).collect();
        let vs: Vec<f64> = out.iter().map(|s| s.v_hat).collect();
        let accs: Vec<f64> = out.iter().map(|s| s.a_hat).collect();
        for (got, want) in xs.iter().zip([0.0, 5.0 / 3.0, 10.0 / 3.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(vs, vec![10.0, 10.0, 10.0]);
        assert_eq!(accs, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn anticipate_first_velocity_increment_is_delayed() {
        // a_hat[0] = 0 means the action only moves v from index 2 on.
        let out = anticipate_ego(KinematicState::new(0.0, 0.0, 0.0), 1.0, 2, 1.0 / 6.0);
        let vs: Vec<f64> = out.iter().map(|s| s.v_hat).collect();
        for (got, want) in vs.iter().zip([0.0, 0.0, 1.0 / 6.0, 2.0 / 6.0]) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn anticipate_single_step_uses_current_acceleration() {
        let out = anticipate_ego(KinematicState::new(0.0, 10.0, -1.0), 0.0, 0, 1.0 / 6.0);
        assert!((out[1].v_hat - (10.0 - 1.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn leader_velocity_freezes_after_one_step() {
        let out = anticipate_leader(KinematicState::new(50.0, 8.0, 0.0), 7, 1.0 / 6.0);
        for s in &out {
            assert_eq!(s.v_hat, 8.0);
        }
        for w in out.windows(2) {
            assert!((w[1].x_hat - w[0].x_hat - 8.0 / 6.0).abs() < 1e-12);
        }

        // One decrement from the current acceleration, then frozen.
        let out = anticipate_leader(KinematicState::new(50.0, 8.0, -6.0), 2, 1.0 / 6.0);
        let vs: Vec<f64> = out.iter().map(|s| s.v_hat).collect();
        assert_eq!(vs, vec![8.0, 7.0, 7.0, 7.0]);

        let out = anticipate_leader(KinematicState::new(0.0, 0.0, 0.0), 5, 1.0 / 6.0);
        for s in out {
            assert_eq!((s.x_hat, s.v_hat, s.a_hat), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn forward_utility_values() {
        let p = defaults();
        // v + a*dt + u*dt = v* exactly.
        let v = view((0.0, p.v_star, 0.0), (0.0, 0.0, 0.0), 100.0);
        assert!((utility_forward(0.0, &v, &p) - 1.0).abs() < 1e-15);
        // One normalized deviation above the ideal speed.
        let v = view((0.0, p.v_star * (1.0 + p.kappa1), 0.0), (0.0, 0.0, 0.0), 100.0);
        assert!((utility_forward(0.0, &v, &p) - (-1.0_f64).exp()).abs() < 1e-12);
        // At rest with defaults.
        let v = view((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 100.0);
        let want = (-(10.49_f64 / 7.343).powi(2)).exp();
        assert!((utility_forward(0.0, &v, &p) - want).abs() < 1e-12);
        assert!((want - 0.12989).abs() < 1e-4);
    }

    #[test]
    fn backward_utility_values() {
        let p = defaults();
        let v = view((0.0, -p.kappa_02, 0.0), (0.0, 0.0, 0.0), 100.0);
        assert!((utility_backward(0.0, &v, &p) - 1.0).abs() < 1e-15);
        let v = view((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 100.0);
        assert!((utility_backward(0.0, &v, &p) - (-2.5_f64).exp()).abs() < 1e-15);
        // Large argument underflows toward zero but stays finite.
        let v = view((0.0, 10.0, 0.0), (0.0, 0.0, 0.0), 100.0);
        let got = utility_backward(0.0, &v, &p);
        assert!(got.is_finite());
        assert!(got > 0.0 && got < 1e-40);
        // The penalty saturates instead of overflowing for extreme
        // backward motion.
        let v = view((0.0, -200.0, 0.0), (0.0, 0.0, 0.0), 100.0);
        assert!(utility_backward(0.0, &v, &p).is_finite());
    }

    #[test]
    fn collision_is_one_on_contact() {
        let p = defaults();
        // gap below the vehicle length: bumper distance is negative at h=0.
        let v = view((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 3.0);
        assert_eq!(utility_collision(0.0, &v, &p), 1.0);
    }

    #[test]
    fn collision_at_unit_scale() {
        let p = defaults();
        // Stationary pair with bumper gap exactly delta = kappa_c3.
        let v = view((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), p.vehicle_length + p.kappa_c3);
        let got = utility_collision(0.0, &v, &p);
        assert!((got - (-3.0_f64).exp()).abs() < 1e-12, "{got}");
    }

    #[test]
    fn collision_vanishes_far_away() {
        let p = defaults();
        let v = view((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 100.0);
        assert_eq!(utility_collision(0.0, &v, &p), 0.0);
    }

    #[test]
    fn collision_non_increasing_in_gap() {
        let p = defaults();
        let mut last = f64::INFINITY;
        for i in 0..200 {
            let gap = 0.5 + 0.25 * i as f64;
            let v = view((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), gap);
            let got = utility_collision(0.0, &v, &p);
            assert!(got <= last + 1e-15, "gap={gap}: {got} > {last}");
            last = got;
        }
    }

    #[test]
    fn effective_utility_term_dominance() {
        let p = defaults();
        // Isolated slow vehicle: collision term negligible.
        let v = view((0.0, 3.0, 0.0), (0.0, 3.0, 0.0), 500.0);
        let want = utility_forward(0.0, &v, &p) - utility_backward(0.0, &v, &p);
        assert!((effective_utility(0.0, &v, &p) - want).abs() < 1e-12);

        // Bumper contact: the collision weight dominates everything else.
        let v = view((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 3.0);
        let got = effective_utility(0.0, &v, &p);
        assert!(got < -9.0 && got > -11.0, "{got}");

        // At the ideal speed with a huge gap the value is essentially 1.
        let v = view((0.0, p.v_star, 0.0), (0.0, p.v_star, 0.0), 1000.0);
        let got = effective_utility(0.0, &v, &p);
        assert!((got - 1.0).abs() < 1e-9, "{got}");
    }

    #[test]
    fn boltzmann_uniform_gives_grid_mean() {
        let p = defaults();
        let grid = p.action_grid();
        let utils = vec![0.5; grid.len()];
        let got = boltzmann_mean(&grid, &utils, p.lambda);
        assert!((got - (-1.0)).abs() < 1e-12, "{got}");
    }

    #[test]
    fn boltzmann_sharp_limit_selects_argmax() {
        let p = defaults();
        let grid = p.action_grid();
        let utils: Vec<f64> = grid.iter().map(|&u| -(u - 1.25).abs()).collect();
        let got = boltzmann_mean(&grid, &utils, 1e6);
        assert!((got - 1.25).abs() < 1e-9, "{got}");
    }

    #[test]
    fn control_matches_plain_effective_utility_path() {
        let p = defaults();
        let v = view((0.0, 8.0, 0.3), (0.0, 7.5, -0.2), 14.0);
        let grid = p.action_grid();
        let utils: Vec<f64> = grid.iter().map(|&u| effective_utility(u, &v, &p)).collect();
        let want = boltzmann_mean(&grid, &utils, p.lambda);
        assert_eq!(control(&v, &p), want);
    }

    #[test]
    fn control_ignores_absolute_positions() {
        let p = defaults();
        let a = view((0.0, 8.0, 0.1), (11.0, 7.0, 0.0), 11.0);
        let b = view((250.0, 8.0, 0.1), (261.0, 7.0, 0.0), 11.0);
        assert_eq!(control(&a, &p), control(&b, &p));
    }
}
