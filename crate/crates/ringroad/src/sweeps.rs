//! Simulation-driven bifurcation sweeps: the 1D branch diagram over
//! density, stop-and-go onset/offset detection, the 2D (rho, v*) phase
//! diagram, and the speed-advisory curve derived from it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::fixed_point;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::ring::{
    classify, run_from, ClassifyThresholds, KickSchedule, LimitClass, OrderParameters,
    RingConfig, Trajectory,
};
use crate::stability::{critical_density, StabilitySettings};

/// Common budget and protocol knobs for every sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    /// Steps per classification run.
    pub steps: u64,
    /// Recording cadence inside classification runs.
    pub record_every: u64,
    /// Braking strengths tried when probing for stop-and-go; the verdict
    /// is stop-and-go if any of them triggers it.
    pub kick_strengths: Vec<f64>,
    /// Kick duration [s].
    pub kick_duration: f64,
    pub thresholds: ClassifyThresholds,
    /// Scan resolution in rho when hunting for the stop-and-go region.
    pub scan_step: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            steps: 12_000,
            record_every: 1,
            kick_strengths: vec![-1.0, -2.0, -4.0],
            kick_duration: 6.0,
            thresholds: ClassifyThresholds::default(),
            scan_step: 0.01,
        }
    }
}

/// Knobs of the speed-advisory inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VsaSettings {
    /// Safety margin subtracted from the critical ideal speed [m/s].
    pub margin: f64,
    /// Lowest ideal speed the advisory may recommend [m/s].
    pub v_star_floor: f64,
    /// Bisection resolution in v* [m/s].
    pub v_star_tol: f64,
}

impl Default for VsaSettings {
    fn default() -> Self {
        Self {
            margin: 0.1,
            v_star_floor: 2.0,
            v_star_tol: 0.05,
        }
    }
}

/// Pick the (N, C) pair realizing a density: the paper-matching vehicle
/// counts near the two critical regions, and N = round(314 rho) clamped
/// to [20, 50] elsewhere. The returned density is exactly N/C.
pub fn realize_density(rho: f64) -> (usize, f64) {
    let n = if (0.070..=0.105).contains(&rho) {
        28
    } else if (0.120..=0.155).contains(&rho) {
        42
    } else {
        ((rho * 314.0).round() as usize).clamp(20, 50)
    };
    (n, n as f64 / rho)
}

fn ring_at(rho: f64, v_star: f64, base: &ModelParams) -> RingConfig {
    let (n, c) = realize_density(rho);
    let mut params = base.clone();
    params.v_star = v_star;
    RingConfig::new(n, c, params)
}

fn kicked_run(
    cfg: &RingConfig,
    strength: f64,
    settings: &SweepSettings,
) -> Result<Trajectory> {
    let state = crate::ring::init_uniform(cfg, cfg.params.v_star - 1.0)?;
    let kick = KickSchedule {
        control_override: strength,
        duration: settings.kick_duration,
        ..KickSchedule::default_braking()
    };
    run_from(state, cfg, settings.steps, Some(kick), settings.record_every)
}

/// Classification of a kicked run at (rho, v*) for one kick strength.
fn classify_kicked(
    cfg: &RingConfig,
    strength: f64,
    settings: &SweepSettings,
) -> Result<(LimitClass, OrderParameters)> {
    let traj = kicked_run(cfg, strength, settings)?;
    classify(&traj, &settings.thresholds)
}

/// Stop-and-go probe: true if any configured kick strength produces a
/// stop-and-go verdict. Short-circuits on the first hit.
fn any_kick_stop_and_go(
    rho: f64,
    v_star: f64,
    base: &ModelParams,
    settings: &SweepSettings,
) -> Result<bool> {
    let cfg = ring_at(rho, v_star, base);
    cfg.validate()?;
    for &strength in &settings.kick_strengths {
        let (class, _) = classify_kicked(&cfg, strength, settings)?;
        if class == LimitClass::StopAndGo {
            return Ok(true);
        }
    }
    Ok(false)
}

/// One measured point of the 1D bifurcation diagram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPoint {
    /// Realized density, exactly n_vehicles / circumference [1/m].
    pub rho: f64,
    pub branch: LimitClass,
    pub amplitude_a: f64,
    pub mean_velocity_v: f64,
    pub n_vehicles: usize,
    pub circumference: f64,
    /// Diagnostic notes; empty for clean rows.
    pub flags: String,
}

/// Reconstruct the branch diagram over a density grid. Each density is
/// probed with the kicked protocol (from uniform flow) and the unkicked
/// protocol (from the fixed point); one point per observed branch.
pub fn bifurcation_1d(
    v_star: f64,
    rho_grid: &[f64],
    base: &ModelParams,
    settings: &SweepSettings,
) -> Vec<BranchPoint> {
    rho_grid
        .par_iter()
        .map(|&rho| branch_points_at(rho, v_star, base, settings))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn branch_points_at(
    rho: f64,
    v_star: f64,
    base: &ModelParams,
    settings: &SweepSettings,
) -> Vec<BranchPoint> {
    let cfg = ring_at(rho, v_star, base);
    let rho_exact = cfg.density();
    let make = |class: LimitClass, a: f64, v: f64, flags: String| BranchPoint {
        rho: rho_exact,
        branch: class,
        amplitude_a: a,
        mean_velocity_v: v,
        n_vehicles: cfg.n_vehicles,
        circumference: cfg.circumference,
        flags,
    };
    let mut points: Vec<BranchPoint> = Vec::new();

    // Protocol (b): unkicked start at the fixed point.
    let from_fp = fixed_point(rho_exact, cfg.n_vehicles, &cfg.params)
        .and_then(|s| run_from(s, &cfg, settings.steps, None, settings.record_every))
        .and_then(|t| classify(&t, &settings.thresholds));
    points.push(match from_fp {
        Ok((class, op)) => {
            let flags = if class == LimitClass::Ambiguous {
                "ambiguous;fixed-point-start"
            } else {
                "fixed-point-start"
            };
            make(class, op.amplitude_a, op.mean_velocity_v, flags.to_string())
        }
        Err(e) => make(
            LimitClass::Ambiguous,
            f64::NAN,
            f64::NAN,
            format!("fixed-point-start-failed:{e}"),
        ),
    });

    // Protocol (a): kicked start from uniform flow, default braking.
    let kicked = match classify_kicked(&cfg, -1.0, settings) {
        Ok((class, op)) => {
            let flags = if class == LimitClass::Ambiguous {
                "ambiguous;kicked-start"
            } else {
                "kicked-start"
            };
            make(class, op.amplitude_a, op.mean_velocity_v, flags.to_string())
        }
        Err(e) => make(
            LimitClass::Ambiguous,
            f64::NAN,
            f64::NAN,
            format!("kicked-start-failed:{e}"),
        ),
    };
    // One point per observed branch.
    if !points.iter().any(|b| b.branch == kicked.branch) {
        points.push(kicked);
    }

    points
}

/// Onset and offset densities of the stop-and-go branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SgBoundaries {
    pub v_star: f64,
    /// Density where the wave first becomes sustainable [1/m].
    pub rho_sg1: f64,
    /// Density where it disappears again [1/m].
    pub rho_sg2: f64,
    /// Resolution of both boundaries [1/m].
    pub tol: f64,
}

/// Locate the stop-and-go onset and offset inside `rho_bracket` at the
/// given ideal speed, by scanning and then bisecting the kicked-run
/// verdict. Detection by simulation is an upper bound on the true onset.
pub fn sg_onset(
    v_star: f64,
    rho_bracket: (f64, f64),
    base: &ModelParams,
    settings: &SweepSettings,
    tol: f64,
) -> Result<SgBoundaries> {
    let (lo, hi) = rho_bracket;
    let steps = ((hi - lo) / settings.scan_step).ceil().max(3.0) as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
        .collect();
    let verdicts: Vec<bool> = grid
        .par_iter()
        .map(|&rho| any_kick_stop_and_go(rho, v_star, base, settings).unwrap_or(false))
        .collect();

    let first_sg = verdicts.iter().position(|&b| b);
    let last_sg = verdicts.iter().rposition(|&b| b);
    let (Some(first), Some(last)) = (first_sg, last_sg) else {
        return Err(Error::NotFound { lo, hi });
    };

    let probe = |rho: f64| any_kick_stop_and_go(rho, v_star, base, settings);
    let rho_sg1 = if first == 0 {
        grid[0]
    } else {
        bisect_boundary(grid[first - 1], grid[first], tol, &probe)?
    };
    let rho_sg2 = if last == grid.len() - 1 {
        grid[last]
    } else {
        bisect_boundary(grid[last + 1], grid[last], tol, &probe)?
    };
    Ok(SgBoundaries {
        v_star,
        rho_sg1,
        rho_sg2,
        tol,
    })
}

/// Bisect between a non-SG density and an SG density until the bracket is
/// narrower than `tol`; returns the midpoint of the final bracket.
fn bisect_boundary(
    mut rho_ff: f64,
    mut rho_sg: f64,
    tol: f64,
    probe: &dyn Fn(f64) -> Result<bool>,
) -> Result<f64> {
    while (rho_sg - rho_ff).abs() > tol {
        let mid = 0.5 * (rho_ff + rho_sg);
        if probe(mid)? {
            rho_sg = mid;
        } else {
            rho_ff = mid;
        }
    }
    Ok(0.5 * (rho_ff + rho_sg))
}

/// Lower stop-and-go boundary only (used by the phase diagram and the
/// advisory inversion, where the offset is irrelevant).
fn sg_lower_boundary(
    v_star: f64,
    rho_bracket: (f64, f64),
    base: &ModelParams,
    settings: &SweepSettings,
    tol: f64,
) -> Result<f64> {
    let (lo, hi) = rho_bracket;
    let steps = ((hi - lo) / settings.scan_step).ceil().max(3.0) as usize;
    let mut prev = lo;
    for i in 0..=steps {
        let rho = lo + (hi - lo) * i as f64 / steps as f64;
        if any_kick_stop_and_go(rho, v_star, base, settings)? {
            if i == 0 {
                return Ok(rho);
            }
            return bisect_boundary(prev, rho, tol, &|r| {
                any_kick_stop_and_go(r, v_star, base, settings)
            });
        }
        prev = rho;
    }
    Err(Error::NotFound { lo, hi })
}

/// One row of the 2D phase diagram.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub v_star: f64,
    /// Simulated stop-and-go onset (upper bound) [1/m].
    pub rho_sg1: f64,
    /// Linear-stability critical density [1/m].
    pub rho_ff1: f64,
    pub flags: String,
}

/// Sweep the ideal speed and record both boundary curves. Failed rows are
/// kept with NaN entries and a flag.
pub fn phase_2d(
    v_star_grid: &[f64],
    base: &ModelParams,
    settings: &SweepSettings,
    stability: &StabilitySettings,
    sg_bracket: (f64, f64),
    sg_tol: f64,
) -> Vec<PhasePoint> {
    v_star_grid
        .par_iter()
        .map(|&v_star| {
            let mut flags = Vec::new();
            let mut params = base.clone();
            params.v_star = v_star;

            let rho_ff1 = match ff1_by_scan(28, &params, stability) {
                Ok(rho) => rho,
                Err(e) => {
                    flags.push(format!("ff1-failed:{e}"));
                    f64::NAN
                }
            };
            let rho_sg1 = match sg_lower_boundary(v_star, sg_bracket, base, settings, sg_tol) {
                Ok(rho) => rho,
                Err(e) => {
                    flags.push(format!("sg1-failed:{e}"));
                    f64::NAN
                }
            };
            PhasePoint {
                v_star,
                rho_sg1,
                rho_ff1,
                flags: flags.join(";"),
            }
        })
        .collect()
}

/// Find the first loss of linear stability at fixed N by scanning the
/// circumference for a sign change of the spectral radius and bisecting.
fn ff1_by_scan(n: usize, params: &ModelParams, stability: &StabilitySettings) -> Result<f64> {
    use crate::stability::{nontrivial_spectrum, spectral_radius};
    // Scan from sparse (stable) toward dense; stop at the first unstable
    // circumference. Densities above ~0.24 leave no room for a bumper gap.
    let c_grid: Vec<f64> = (0..24).map(|i| 400.0 - 15.0 * i as f64).collect();
    let mut prev: Option<(f64, f64)> = None;
    for &c in &c_grid {
        let rho = n as f64 / c;
        if 1.0 / rho <= params.vehicle_length + 0.5 {
            break;
        }
        let radius = match nontrivial_spectrum(n, rho, params, stability) {
            Ok(spectra) => spectral_radius(&spectra).0,
            // The free-flow root ceases to exist at high density; the
            // scannable range ends there.
            Err(Error::NoSignChange { .. } | Error::InvalidDensity { .. }) => break,
            Err(e) => return Err(e),
        };
        if let Some((c_prev, r_prev)) = prev {
            if (r_prev - 1.0) * (radius - 1.0) < 0.0 {
                let crit = critical_density(n, (c, c_prev), params, 1e-4, stability)?;
                return Ok(crit.rho_star);
            }
        }
        prev = Some((c, radius));
    }
    let (c_lo, c_hi) = (*c_grid.last().unwrap(), c_grid[0]);
    Err(Error::NoCrossing {
        c_lo,
        c_hi,
        f_lo: f64::NAN,
        f_hi: f64::NAN,
    })
}

/// One row of the speed-advisory table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VsaRecord {
    pub rho: f64,
    /// Critical ideal speed: above it the wave survives at this density.
    pub v_star_c: f64,
    /// Mean velocity running at v_star_c - margin (NaN until measured).
    pub v_with_vsa: f64,
    /// Mean velocity of the kicked run at the unrestricted ideal speed.
    pub v_without_vsa: f64,
    pub a_with: f64,
    pub a_without: f64,
    pub flags: String,
}

/// Invert the stop-and-go boundary into a critical ideal-speed curve:
/// v*_c(rho) is the largest ideal speed whose onset density still exceeds
/// rho. Each row is closed-loop verified: a kicked run at v*_c - margin
/// must classify free flow for every configured kick strength.
pub fn vsa_curve(
    rho_grid: &[f64],
    base: &ModelParams,
    settings: &SweepSettings,
    vsa: &VsaSettings,
) -> Vec<VsaRecord> {
    rho_grid
        .par_iter()
        .map(|&rho| vsa_record_at(rho, base, settings, vsa))
        .collect()
}

fn vsa_record_at(
    rho: f64,
    base: &ModelParams,
    settings: &SweepSettings,
    vsa: &VsaSettings,
) -> VsaRecord {
    let mut flags: Vec<String> = Vec::new();
    let sg_at = |v_star: f64| any_kick_stop_and_go(rho, v_star, base, settings);

    let v_cap = base.v_star;
    let v_star_c = match (sg_at(v_cap), sg_at(vsa.v_star_floor)) {
        (Ok(false), _) => {
            // No wave even at the unrestricted speed.
            flags.push("no-restriction-needed".into());
            v_cap
        }
        (Ok(true), Ok(true)) => {
            flags.push("untameable-at-this-density".into());
            f64::NAN
        }
        (Ok(true), Ok(false)) => {
            let (mut v_ff, mut v_sg) = (vsa.v_star_floor, v_cap);
            while v_sg - v_ff > vsa.v_star_tol {
                let mid = 0.5 * (v_ff + v_sg);
                match sg_at(mid) {
                    Ok(true) => v_sg = mid,
                    Ok(false) => v_ff = mid,
                    Err(e) => {
                        flags.push(format!("bisection-failed:{e}"));
                        break;
                    }
                }
            }
            // Report the certified wave-free side of the final bracket.
            v_ff
        }
        (Err(e), _) | (_, Err(e)) => {
            flags.push(format!("probe-failed:{e}"));
            f64::NAN
        }
    };

    let mut record = VsaRecord {
        rho,
        v_star_c,
        v_with_vsa: f64::NAN,
        v_without_vsa: f64::NAN,
        a_with: f64::NAN,
        a_without: f64::NAN,
        flags: String::new(),
    };

    if v_star_c.is_finite() {
        let advised = (v_star_c - vsa.margin).max(vsa.v_star_floor);
        let cfg = ring_at(rho, advised, base);
        let mut worst: Option<OrderParameters> = None;
        for &strength in &settings.kick_strengths {
            match classify_kicked(&cfg, strength, settings) {
                Ok((class, op)) => {
                    if class != LimitClass::FreeFlow {
                        flags.push(format!("verification-not-free-flow:kick={strength}"));
                    }
                    if worst.map_or(true, |w| op.amplitude_a > w.amplitude_a) {
                        worst = Some(op);
                    }
                }
                Err(e) => flags.push(format!("verification-failed:{e}")),
            }
        }
        if let Some(op) = worst {
            record.v_with_vsa = op.mean_velocity_v;
            record.a_with = op.amplitude_a;
        }
    }
    record.flags = flags.join(";");
    record
}

/// The advisory table augmented with the unrestricted-speed baseline, for
/// the with/without comparison.
pub fn vsa_comparison(
    rho_grid: &[f64],
    base: &ModelParams,
    settings: &SweepSettings,
    vsa: &VsaSettings,
) -> Vec<VsaRecord> {
    let mut records = vsa_curve(rho_grid, base, settings, vsa);
    let baselines: Vec<Result<(LimitClass, OrderParameters)>> = rho_grid
        .par_iter()
        .map(|&rho| {
            let cfg = ring_at(rho, base.v_star, base);
            classify_kicked(&cfg, -1.0, settings)
        })
        .collect();
    for (record, baseline) in records.iter_mut().zip(baselines) {
        match baseline {
            Ok((_, op)) => {
                record.v_without_vsa = op.mean_velocity_v;
                record.a_without = op.amplitude_a;
            }
            Err(e) => {
                if !record.flags.is_empty() {
                    record.flags.push(';');
                }
                record.flags.push_str(&format!("baseline-failed:{e}"));
            }
        }
    }
    records
}
