//! One driver per subcommand: resolve inputs, run the library, emit
//! deterministic tables plus the resolved-config snapshot.

use std::path::{Path, PathBuf};

use ringroad::equilibrium::equilibrium_curve;
use ringroad::ring::{classify, run_from, KickSchedule, RingConfig};
use ringroad::stability::{critical_density, nontrivial_spectrum, spectral_radius};
use ringroad::sweeps::{bifurcation_1d, phase_2d, sg_onset, vsa_comparison, vsa_curve};

use crate::config::{linspace, RunConfig};
use crate::table::{col, Cell, ColKind, Column, Table};

#[derive(Debug)]
pub enum CliError {
    Config(crate::config::ConfigError),
    Numeric(ringroad::Error),
    Io(PathBuf, std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Numeric(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(path, e) => write!(f, "I/O failure at {}: {e}", path.display()),
        }
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<ringroad::Error> for CliError {
    fn from(e: ringroad::Error) -> Self {
        CliError::Numeric(e)
    }
}

pub type CmdResult = Result<(), CliError>;

fn io_at<T>(path: &Path, result: std::io::Result<T>) -> Result<T, CliError> {
    result.map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Strip CSV-hostile characters out of free-text flags.
fn sanitize(flags: &str) -> String {
    flags.replace([',', '\n', '\r'], ";")
}

fn write_table(out_dir: &Path, name: &str, table: &Table) -> CmdResult {
    let path = out_dir.join(name);
    io_at(&path, table.write(&path))?;
    Ok(())
}

fn write_json<T: serde::Serialize>(out_dir: &Path, name: &str, value: &T) -> CmdResult {
    let path = out_dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    io_at(&path, std::fs::write(&path, text))?;
    Ok(())
}

/// Create the output directory and drop the resolved-config snapshot into
/// it before any computation starts.
pub fn prepare_out_dir(out_dir: &Path, config: &RunConfig) -> CmdResult {
    io_at(out_dir, std::fs::create_dir_all(out_dir))?;
    let path = out_dir.join("config_resolved.toml");
    io_at(&path, std::fs::write(&path, config.to_toml_string()))?;
    Ok(())
}

fn ring_config(config: &RunConfig) -> RingConfig {
    RingConfig::new(
        config.ring.n,
        config.ring.circumference(),
        config.model.clone(),
    )
}

pub const TRAJECTORY_SCHEMA: &[Column] = &[
    col("t", "-", ColKind::Int),
    col("vehicle", "1-based", ColKind::Int),
    col("x", "m", ColKind::Float),
    col("v", "m/s", ColKind::Float),
    col("a", "m/s^2", ColKind::Float),
    col("u_bar", "m/s^2", ColKind::Float),
    col("overlap", "-", ColKind::Bool),
];

pub fn simulate(config: &RunConfig, out_dir: &Path) -> CmdResult {
    let ring = ring_config(config);
    ring.validate()?;
    let v_init = config.sim.v_init.unwrap_or(config.model.v_star - 1.0);
    let state = ringroad::ring::init_uniform(&ring, v_init)?;
    let kick = config.sim.kick_enabled.then(|| KickSchedule {
        vehicle: config.sim.kick_vehicle - 1,
        control_override: config.sim.kick_u,
        start_time: config.sim.kick_start,
        duration: config.sim.kick_duration,
    });
    let traj = run_from(state, &ring, config.sim.steps, kick, config.sim.record_every)?;

    let mut table = Table::new(TRAJECTORY_SCHEMA);
    for frame in &traj.frames {
        for i in 0..traj.n_vehicles {
            table.push_row(vec![
                Cell::Int(frame.t as i64),
                Cell::Int(i as i64 + 1),
                Cell::Float(frame.x[i]),
                Cell::Float(frame.v[i]),
                Cell::Float(frame.a[i]),
                Cell::Float(frame.u_bar[i]),
                Cell::Bool(frame.overlap),
            ]);
        }
    }
    write_table(out_dir, "trajectory.csv", &table)?;

    let (class, op) = classify(&traj, &config.thresholds())?;
    println!(
        "simulate: N={} C={:.3} v*={} -> {class} (A={:.4} m/s, V={:.4} m/s)",
        ring.n_vehicles, ring.circumference, config.model.v_star, op.amplitude_a, op.mean_velocity_v
    );
    Ok(())
}

pub const EQUILIBRIUM_SCHEMA: &[Column] = &[
    col("rho", "1/m", ColKind::Float),
    col("v0", "m/s", ColKind::Float),
    col("residual", "m/s^2", ColKind::Float),
    col("flags", "-", ColKind::Str),
];

pub fn equilibrium(config: &RunConfig, out_dir: &Path) -> CmdResult {
    let grid = linspace(
        config.equilibrium.rho_min,
        config.equilibrium.rho_max,
        config.equilibrium.points,
    );
    let rows = equilibrium_curve(&grid, &config.model);
    let mut table = Table::new(EQUILIBRIUM_SCHEMA);
    let mut solved = 0usize;
    for (rho, outcome) in &rows {
        match outcome {
            Ok(eq) => {
                solved += 1;
                let flags = if eq.sign_changes > 1 {
                    format!("sign-changes:{}", eq.sign_changes)
                } else {
                    String::new()
                };
                table.push_row(vec![
                    Cell::Float(*rho),
                    Cell::Float(eq.v0),
                    Cell::Float(eq.residual),
                    Cell::Str(flags),
                ]);
            }
            Err(e) => table.push_row(vec![
                Cell::Float(*rho),
                Cell::Float(f64::NAN),
                Cell::Float(f64::NAN),
                Cell::Str(sanitize(&format!("failed:{e}"))),
            ]),
        }
    }
    write_table(out_dir, "equilibrium.csv", &table)?;
    println!("equilibrium: solved {solved}/{} grid points", rows.len());
    Ok(())
}

pub const SPECTRUM_SCHEMA: &[Column] = &[
    col("k", "-", ColKind::Int),
    col("re", "-", ColKind::Float),
    col("im", "-", ColKind::Float),
    col("modulus", "-", ColKind::Float),
    col("is_filtered", "trivial root, excluded", ColKind::Bool),
];

pub fn spectrum(config: &RunConfig, out_dir: &Path) -> CmdResult {
    let ring = ring_config(config);
    ring.validate()?;
    let spectra = nontrivial_spectrum(
        ring.n_vehicles,
        ring.density(),
        &config.model,
        &config.stability_settings(),
    )?;
    let mut table = Table::new(SPECTRUM_SCHEMA);
    for mode in &spectra {
        for z in &mode.roots {
            let kept = mode
                .filtered_roots
                .iter()
                .any(|w| w.re == z.re && w.im == z.im);
            table.push_row(vec![
                Cell::Int(mode.mode_k as i64),
                Cell::Float(z.re),
                Cell::Float(z.im),
                Cell::Float(z.norm()),
                Cell::Bool(!kept),
            ]);
        }
    }
    write_table(out_dir, "spectrum.csv", &table)?;
    let (radius, mode) = spectral_radius(&spectra);
    println!(
        "spectrum: N={} rho={:.6} -> max non-trivial |z| = {radius:.6} at mode {mode}",
        ring.n_vehicles,
        ring.density()
    );
    Ok(())
}

pub fn critical_density_cmd(config: &RunConfig, out_dir: &Path) -> CmdResult {
    let crit = critical_density(
        config.critical.n,
        (config.critical.c_lo, config.critical.c_hi),
        &config.model,
        config.critical.tol,
        &config.stability_settings(),
    )?;
    write_json(out_dir, "critical_density.json", &crit)?;
    println!(
        "critical-density: N={} -> rho* = {:.6} 1/m (C* = {:.3} m, {:?}, modes {:?})",
        crit.n_vehicles, crit.rho_star, crit.c_star, crit.direction, crit.crossing_modes
    );
    Ok(())
}

pub const BIFURCATION_SCHEMA: &[Column] = &[
    col("rho", "1/m", ColKind::Float),
    col("branch", "-", ColKind::Str),
    col("A", "m/s", ColKind::Float),
    col("V", "m/s", ColKind::Float),
    col("N", "-", ColKind::Int),
    col("C", "m", ColKind::Float),
    col("flags", "-", ColKind::Str),
];

pub fn bifurcation_1d_cmd(config: &RunConfig, out_dir: &Path) -> CmdResult {
    let grid = linspace(
        config.bifurcation.rho_min,
        config.bifurcation.rho_max,
        config.bifurcation.points,
    );
    let points = bifurcation_1d(
        config.model.v_star,
        &grid,
        &config.model,
        &config.sweep_settings(),
    );
    let mut table = Table::new(BIFURCATION_SCHEMA);
    for p in &points {
        table.push_row(vec![
            Cell::Float(p.rho),
            Cell::Str(p.branch.to_string()),
            Cell::Float(p.amplitude_a),
            Cell::Float(p.mean_velocity_v),
            Cell::Int(p.n_vehicles as i64),
            Cell::Float(p.circumference),
            Cell::Str(sanitize(&p.flags)),
        ]);
    }
    write_table(out_dir, "bifurcation_1d.csv", &table)?;
    println!(
        "bifurcation-1d: {} branch points over {} densities",
        points.len(),
        grid.len()
    );
    Ok(())
}

pub fn sg_onset_cmd(config: &RunConfig, out_dir: &Path) -> CmdResult {
    let bounds = sg_onset(
        config.model.v_star,
        (config.sg.rho_lo, config.sg.rho_hi),
        &config.model,
        &config.sweep_settings(),
        config.sg.tol,
    )?;
    write_json(out_dir, "sg_onset.json", &bounds)?;
    println!(
        "sg-onset: v*={} -> rho_sg1 = {:.4} 1/m, rho_sg2 = {:.4} 1/m",
        bounds.v_star, bounds.rho_sg1, bounds.rho_sg2
    );
    Ok(())
}

pub const PHASE_SCHEMA: &[Column] = &[
    col("v_star", "m/s", ColKind::Float),
    col("rho_sg1", "1/m", ColKind::Float),
    col("rho_ff1", "1/m", ColKind::Float),
    col("flags", "-", ColKind::Str),
];

pub fn phase_2d_cmd(config: &RunConfig, out_dir: &Path) -> CmdResult {
    let mut grid = Vec::new();
    let mut v = config.phase.v_star_min;
    while v < config.model.v_star - 1e-9 {
        grid.push(v);
        v += config.phase.v_star_step;
    }
    grid.push(config.model.v_star);

    let rows = phase_2d(
        &grid,
        &config.model,
        &config.sweep_settings(),
        &config.stability_settings(),
        (config.sg.rho_lo, config.sg.rho_hi),
        config.sg.tol,
    );
    let mut table = Table::new(PHASE_SCHEMA);
    for row in &rows {
        table.push_row(vec![
            Cell::Float(row.v_star),
            Cell::Float(row.rho_sg1),
            Cell::Float(row.rho_ff1),
            Cell::Str(sanitize(&row.flags)),
        ]);
    }
    write_table(out_dir, "phase_2d.csv", &table)?;
    println!("phase-2d: {} ideal-speed rows", rows.len());
    Ok(())
}

pub const VSA_SCHEMA: &[Column] = &[
    col("rho", "1/m", ColKind::Float),
    col("v_star_c", "m/s", ColKind::Float),
    col("V_with", "m/s", ColKind::Float),
    col("V_without", "m/s", ColKind::Float),
    col("A_with", "m/s", ColKind::Float),
    col("A_without", "m/s", ColKind::Float),
    col("flags", "-", ColKind::Str),
];

fn vsa_table(records: &[ringroad::sweeps::VsaRecord]) -> Table {
    let mut table = Table::new(VSA_SCHEMA);
    for r in records {
        table.push_row(vec![
            Cell::Float(r.rho),
            Cell::Float(r.v_star_c),
            Cell::Float(r.v_with_vsa),
            Cell::Float(r.v_without_vsa),
            Cell::Float(r.a_with),
            Cell::Float(r.a_without),
            Cell::Str(sanitize(&r.flags)),
        ]);
    }
    table
}

pub fn vsa_curve_cmd(config: &RunConfig, out_dir: &Path) -> CmdResult {
    let grid = linspace(config.vsa.rho_min, config.vsa.rho_max, config.vsa.points);
    let records = vsa_curve(
        &grid,
        &config.model,
        &config.sweep_settings(),
        &config.vsa.settings(),
    );
    write_table(out_dir, "vsa.csv", &vsa_table(&records))?;
    println!("vsa-curve: {} densities", records.len());
    Ok(())
}

pub fn vsa_compare_cmd(config: &RunConfig, out_dir: &Path) -> CmdResult {
    let grid = linspace(config.vsa.rho_min, config.vsa.rho_max, config.vsa.points);
    let records = vsa_comparison(
        &grid,
        &config.model,
        &config.sweep_settings(),
        &config.vsa.settings(),
    );
    write_table(out_dir, "vsa.csv", &vsa_table(&records))?;
    for r in &records {
        println!(
            "vsa-compare: rho={:.4} -> v*_c={:.3} V_with={:.3} V_without={:.3}",
            r.rho, r.v_star_c, r.v_with_vsa, r.v_without_vsa
        );
    }
    Ok(())
}
