//! Free-flow fixed point: the equilibrium velocity at which the control
//! input vanishes for an equally spaced platoon.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{control, DriverView, KinematicState};
use crate::params::ModelParams;
use crate::ring::RingState;

/// Residual tolerance on |u| at the reported equilibrium velocity [m/s^2].
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-8;
/// Bisection terminates once the bracket is this narrow [m/s].
pub const BRACKET_WIDTH_TOL: f64 = 1e-10;
/// Number of points used to scan for sign changes before bisecting.
const SCAN_POINTS: usize = 64;
/// The scan bracket extends to this multiple of the ideal speed.
const BRACKET_FACTOR: f64 = 1.05;

/// A solved free-flow operating point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EquilibriumPoint {
    /// Vehicle density [1/m].
    pub density: f64,
    /// Ideal speed the solve was performed at [m/s].
    pub v_star: f64,
    /// Common equilibrium velocity [m/s].
    pub v0: f64,
    /// |u| at the solution [m/s^2].
    pub residual: f64,
    /// Number of sign changes seen in the initial scan; more than one means
    /// the reported root is the fastest branch of several.
    pub sign_changes: usize,
}

/// The stationary view of a driver in an equally spaced platoon moving at
/// `v0`.
pub fn equilibrium_view(rho: f64, v0: f64) -> DriverView {
    let headway = 1.0 / rho;
    DriverView {
        ego: KinematicState::new(0.0, v0, 0.0),
        leader: KinematicState::new(headway, v0, 0.0),
        gap: headway,
    }
}

fn stationary_control(rho: f64, v0: f64, p: &ModelParams) -> f64 {
    control(&equilibrium_view(rho, v0), p)
}

fn check_density(rho: f64, p: &ModelParams) -> Result<()> {
    let headway = 1.0 / rho;
    if !(rho > 0.0) || headway <= p.vehicle_length {
        return Err(Error::InvalidDensity {
            rho,
            headway,
            vehicle_length: p.vehicle_length,
        });
    }
    Ok(())
}

/// Solve for the equilibrium velocity v0(rho, v*) by scanning
/// [0, 1.05 v*] for sign changes of the stationary control input and
/// bisecting the fastest bracket.
pub fn equilibrium_velocity(rho: f64, p: &ModelParams, tol: f64) -> Result<EquilibriumPoint> {
    check_density(rho, p)?;
    let hi = BRACKET_FACTOR * p.v_star;
    let f = |v: f64| stationary_control(rho, v, p);

    let scan: Vec<(f64, f64)> = (0..SCAN_POINTS)
        .map(|i| {
            let v = hi * i as f64 / (SCAN_POINTS - 1) as f64;
            (v, f(v))
        })
        .collect();
    let brackets: Vec<(usize, usize)> = (0..SCAN_POINTS - 1)
        .filter(|&i| scan[i].1 == 0.0 || scan[i].1 * scan[i + 1].1 < 0.0)
        .map(|i| (i, i + 1))
        .collect();
    let sign_changes = brackets.len();
    let Some(&(ilo, ihi)) = brackets.last() else {
        return Err(Error::NoSignChange {
            lo: 0.0,
            hi,
            f_lo: scan[0].1,
            f_hi: scan[SCAN_POINTS - 1].1,
        });
    };
    if sign_changes > 1 {
        log::warn!(
            "equilibrium: {sign_changes} sign changes of the stationary control at rho={rho}; \
             reporting the fastest branch"
        );
    }

    let (mut lo, mut f_lo) = scan[ilo];
    let mut hi = scan[ihi].0;
    let mut mid = 0.5 * (lo + hi);
    while hi - lo > BRACKET_WIDTH_TOL {
        mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            break;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let residual = f(mid);
    if residual.abs() > tol {
        // A sign change this sharp would mean the control is discontinuous.
        return Err(Error::NoSignChange {
            lo,
            hi,
            f_lo,
            f_hi: residual,
        });
    }
    Ok(EquilibriumPoint {
        density: rho,
        v_star: p.v_star,
        v0: mid,
        residual: residual.abs(),
        sign_changes,
    })
}

/// The equally spaced constant-motion ring state for `n` vehicles at
/// density `rho`.
pub fn fixed_point(rho: f64, n: usize, p: &ModelParams) -> Result<RingState> {
    let eq = equilibrium_velocity(rho, p, DEFAULT_RESIDUAL_TOL)?;
    let circumference = n as f64 / rho;
    let headway = 1.0 / rho;
    Ok(RingState {
        time_index: 0,
        x: (0..n).map(|i| (i as f64 * headway) % circumference).collect(),
        v: vec![eq.v0; n],
        a: vec![0.0; n],
        prev_control: vec![0.0; n],
    })
}

/// Tabulate v0 over a density grid. Failed solves keep their row.
pub fn equilibrium_curve(
    rho_grid: &[f64],
    p: &ModelParams,
) -> Vec<(f64, Result<EquilibriumPoint>)> {
    rho_grid
        .par_iter()
        .map(|&rho| (rho, equilibrium_velocity(rho, p, DEFAULT_RESIDUAL_TOL)))
        .collect()
}
