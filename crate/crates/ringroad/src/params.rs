use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Behavioral constants of the driving policy.
///
/// The defaults are the calibrated set for homogeneous agents; an
/// unmodified `ModelParams::default()` reproduces every headline number in
/// this crate's test suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Ideal speed v* [m/s].
    pub v_star: f64,
    /// Width of the desired-speed reward, relative to v* [-].
    pub kappa1: f64,
    /// Weight of the desired-speed reward [-].
    pub w1: f64,
    /// Decay rate of the backward-motion penalty [s/m].
    pub kappa_v2: f64,
    /// Velocity offset of the backward-motion penalty [m/s].
    pub kappa_02: f64,
    /// Weight of the backward-motion penalty (carries its sign) [-].
    pub w2: f64,
    /// Constant term of the collision length scale [m].
    pub kappa_c3: f64,
    /// Speed coefficient of the collision length scale [s].
    pub kappa_v3: f64,
    /// Closing-speed coefficient of the collision length scale [s].
    pub kappa_d3: f64,
    /// Weight of the collision penalty (carries its sign) [-].
    pub w3: f64,
    /// Simulation time step [s].
    pub dt: f64,
    /// AR(1) stickiness of acceleration [-].
    pub gamma: f64,
    /// Anticipation horizon H; the rollout covers H+1 future steps [-].
    pub horizon: u32,
    /// Sharpness of the Boltzmann action average [-].
    pub lambda: f64,
    /// Lower bound of the control input [m/s^2].
    pub u_min: f64,
    /// Upper bound of the control input [m/s^2].
    pub u_max: f64,
    /// Number of grid points spanning [u_min, u_max] [-].
    pub grid_points: usize,
    /// Common vehicle length L [m].
    pub vehicle_length: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            v_star: 10.49,
            kappa1: 0.7,
            w1: 1.0,
            kappa_v2: 10.0,
            kappa_02: 0.25,
            w2: -1.0,
            kappa_c3: 0.6,
            kappa_v3: 0.3,
            kappa_d3: 1.0,
            w3: -10.0,
            dt: 1.0 / 6.0,
            gamma: 0.7_f64.sqrt(),
            horizon: 7,
            lambda: 200.0,
            u_min: -6.0,
            u_max: 4.0,
            grid_points: 41,
            vehicle_length: 3.9,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParams(msg.to_string()))
            }
        };
        check(self.dt > 0.0, "dt must be positive")?;
        check(
            (0.0..1.0).contains(&self.gamma),
            "gamma must lie in [0, 1)",
        )?;
        check(self.lambda > 0.0, "lambda must be positive")?;
        check(self.u_min < self.u_max, "u_min must be below u_max")?;
        check(self.grid_points >= 2, "grid_points must be at least 2")?;
        check(
            self.vehicle_length > 0.0,
            "vehicle_length must be positive",
        )?;
        check(self.v_star > 0.0, "v_star must be positive")?;
        check(self.kappa1 > 0.0, "kappa1 must be positive")?;
        Ok(())
    }

    /// Uniform action grid including both endpoints.
    pub fn action_grid(&self) -> Vec<f64> {
        let step = (self.u_max - self.u_min) / (self.grid_points - 1) as f64;
        (0..self.grid_points)
            .map(|j| self.u_min + j as f64 * step)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_calibrated_set() {
        let p = ModelParams::default();
        assert_eq!(p.v_star, 10.49);
        assert_eq!(p.kappa1, 0.7);
        assert_eq!(p.w1, 1.0);
        assert_eq!(p.kappa_v2, 10.0);
        assert_eq!(p.kappa_02, 0.25);
        assert_eq!(p.w2, -1.0);
        assert_eq!(p.kappa_c3, 0.6);
        assert_eq!(p.kappa_v3, 0.3);
        assert_eq!(p.kappa_d3, 1.0);
        assert_eq!(p.w3, -10.0);
        assert_eq!(p.dt, 1.0 / 6.0);
        assert_eq!(p.gamma, 0.7_f64.sqrt());
        assert_eq!(p.horizon, 7);
        assert_eq!(p.lambda, 200.0);
        assert_eq!(p.u_min, -6.0);
        assert_eq!(p.u_max, 4.0);
        assert_eq!(p.grid_points, 41);
        assert_eq!(p.vehicle_length, 3.9);
        p.validate().unwrap();
    }

    #[test]
    fn action_grid_spacing_is_quarter() {
        let grid = ModelParams::default().action_grid();
        assert_eq!(grid.len(), 41);
        assert_eq!(grid[0], -6.0);
        assert_eq!(*grid.last().unwrap(), 4.0);
        for w in grid.windows(2) {
            assert!((w[1] - w[0] - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = ModelParams::default();
        p.gamma = 1.0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::default();
        p.grid_points = 1;
        assert!(p.validate().is_err());
        let mut p = ModelParams::default();
        p.u_min = 5.0;
        assert!(p.validate().is_err());
    }
}
