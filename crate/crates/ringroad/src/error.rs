use thiserror::Error;

/// Errors produced by the solvers and sweeps in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The mean headway 1/rho does not leave a positive bumper-to-bumper gap.
    #[error("invalid density {rho} [1/m]: headway {headway:.4} m does not exceed vehicle length {vehicle_length} m")]
    InvalidDensity {
        rho: f64,
        headway: f64,
        vehicle_length: f64,
    },

    /// The stationary control input keeps one sign over the whole scan
    /// bracket, so bisection for the equilibrium velocity cannot start.
    #[error(
        "control residual has no sign change on v0 in [{lo}, {hi}]: u(lo)={f_lo:.3e}, u(hi)={f_hi:.3e}"
    )]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    /// No cubic root lies near z=0; the slope consistency identity must be
    /// badly violated upstream.
    #[error("mode {mode_k}: no root within {tol:.1e} of z=0 (smallest |z| = {min_abs:.3e})")]
    DegenerateFilter { mode_k: usize, tol: f64, min_abs: f64 },

    #[error("mode {mode_k}: root {root} fails residual certification ({residual:.3e} > {tol:.1e})")]
    RootResidual {
        mode_k: usize,
        root: num_complex::Complex64,
        residual: f64,
        tol: f64,
    },

    /// The spectral radius does not cross 1 anywhere in the circumference
    /// bracket.
    #[error(
        "spectral radius minus 1 keeps one sign on C in [{c_lo}, {c_hi}] m: {f_lo:.3e} and {f_hi:.3e}"
    )]
    NoCrossing { c_lo: f64, c_hi: f64, f_lo: f64, f_hi: f64 },

    /// No stop-and-go verdict anywhere inside the sweep bracket.
    #[error("no stop-and-go solution detected for rho in [{lo}, {hi}] 1/m")]
    NotFound { lo: f64, hi: f64 },

    #[error("empty measurement window [{start}, {end}]")]
    EmptyWindow { start: u64, end: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
