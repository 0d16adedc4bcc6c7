//! Linear stability of the free-flow fixed point.
//!
//! The map is linearized through finite differences of the control input,
//! decoupled into Fourier modes along the vehicle index, and each mode's
//! delayed difference equation is reduced to a monic cubic in z. The
//! fixed point is stable exactly when every non-trivial root stays inside
//! the unit circle.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::equilibrium::{equilibrium_velocity, equilibrium_view, DEFAULT_RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::model::{control, DriverView, KinematicState};
use crate::params::ModelParams;

/// Numerical knobs of the stability pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySettings {
    /// Central finite-difference step for the slope vectors.
    pub fd_step: f64,
    /// A root counts as the trivial z=0 root when |z| falls below this.
    /// Finite-difference error displaces that root from exact zero by
    /// roughly dt times the slope-identity residual (observed ~2e-5 with
    /// the default step), so this sits two orders above that.
    pub root_zero_tol: f64,
    /// Residual bound for certified roots.
    pub root_residual_tol: f64,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        Self {
            fd_step: 1e-3,
            root_zero_tol: 1e-4,
            root_residual_tol: 1e-8,
        }
    }
}

/// Partial derivatives of the control input with respect to one vehicle's
/// (x, v, a) at the fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeVector {
    pub beta_x: f64,
    pub beta_v: f64,
    pub beta_a: f64,
}

impl SlopeVector {
    /// Residual of beta_v - beta_a/dt - dt*beta_x, which vanishes for the
    /// exact derivatives because the utility sees states only through
    /// their one-step projections.
    pub fn consistency_residual(&self, dt: f64) -> f64 {
        self.beta_v - self.beta_a / dt - dt * self.beta_x
    }
}

/// Central finite differences of the control input at the fixed point for
/// density `rho`. Returns (ego slopes, leader slopes).
pub fn slope_vectors(
    rho: f64,
    p: &ModelParams,
    fd_step: f64,
) -> Result<(SlopeVector, SlopeVector)> {
    let eq = equilibrium_velocity(rho, p, DEFAULT_RESIDUAL_TOL)?;
    let base = equilibrium_view(rho, eq.v0);
    slope_vectors_at(&base, p, fd_step)
}

/// Slope vectors around an arbitrary view (exposed for oracle tests).
pub fn slope_vectors_at(
    base: &DriverView,
    p: &ModelParams,
    fd_step: f64,
) -> Result<(SlopeVector, SlopeVector)> {
    let h = fd_step;
    // Positions enter the control only through the gap, so an ego x
    // perturbation shrinks it and a leader x perturbation grows it.
    let with = |dgap: f64, dvi: f64, dai: f64, dvj: f64, daj: f64| -> f64 {
        let view = DriverView {
            ego: KinematicState::new(base.ego.x, base.ego.v + dvi, base.ego.a + dai),
            leader: KinematicState::new(base.leader.x, base.leader.v + dvj, base.leader.a + daj),
            gap: base.gap + dgap,
        };
        control(&view, p)
    };
    let central = |plus: f64, minus: f64| (plus - minus) / (2.0 * h);
    let beta0 = SlopeVector {
        beta_x: central(with(-h, 0.0, 0.0, 0.0, 0.0), with(h, 0.0, 0.0, 0.0, 0.0)),
        beta_v: central(with(0.0, h, 0.0, 0.0, 0.0), with(0.0, -h, 0.0, 0.0, 0.0)),
        beta_a: central(with(0.0, 0.0, h, 0.0, 0.0), with(0.0, 0.0, -h, 0.0, 0.0)),
    };
    let beta1 = SlopeVector {
        beta_x: central(with(h, 0.0, 0.0, 0.0, 0.0), with(-h, 0.0, 0.0, 0.0, 0.0)),
        beta_v: central(with(0.0, 0.0, 0.0, h, 0.0), with(0.0, 0.0, 0.0, -h, 0.0)),
        beta_a: central(with(0.0, 0.0, 0.0, 0.0, h), with(0.0, 0.0, 0.0, 0.0, -h)),
    };
    for (l, b) in [(0, &beta0), (1, &beta1)] {
        let residual = b.consistency_residual(p.dt);
        let scale = (p.dt * b.beta_x).abs().max(b.beta_v.abs());
        if scale > 0.0 && (residual / scale).abs() > 0.01 {
            log::warn!(
                "slope consistency identity violated for l={l}: residual {residual:.3e} \
                 against scale {scale:.3e}"
            );
        }
    }
    Ok((beta0, beta1))
}

/// Per-mode characteristic cubic in z (the AR(1) factor gamma - z is
/// already divided out).
#[derive(Debug, Clone, PartialEq)]
pub struct ModePolynomial {
    pub mode_k: usize,
    pub n_vehicles: usize,
    pub b_x: Complex64,
    pub b_v: Complex64,
    pub b_a: Complex64,
    pub dt: f64,
    /// Monic coefficients [1, c2, c1, c0] of z^3 + c2 z^2 + c1 z + c0.
    pub coefficients: [Complex64; 4],
}

impl ModePolynomial {
    /// The unexpanded per-mode determinant bracket
    /// (1-z)((1-z)(z - B_a) + dt B_v) - dt^2 B_x.
    pub fn bracket(&self, z: Complex64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        (one - z) * ((one - z) * (z - self.b_a) + self.dt * self.b_v)
            - self.dt * self.dt * self.b_x
    }

    /// Horner evaluation of the expanded cubic.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let [c3, c2, c1, c0] = self.coefficients;
        ((c3 * z + c2) * z + c1) * z + c0
    }
}

/// Assemble the mode-k cubic from the slope vectors.
pub fn mode_polynomial(
    k: usize,
    n: usize,
    betas: (SlopeVector, SlopeVector),
    p: &ModelParams,
) -> ModePolynomial {
    assert!(k < n, "mode index {k} out of range for N = {n}");
    let (b0, b1) = betas;
    let alpha = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
    let b_x = b0.beta_x + alpha * b1.beta_x;
    let b_v = b0.beta_v + alpha * b1.beta_v;
    let b_a = b0.beta_a + alpha * b1.beta_a;
    let dt = p.dt;
    let one = Complex64::new(1.0, 0.0);
    let coefficients = [
        one,
        -(2.0 + b_a),
        one + 2.0 * b_a - dt * b_v,
        dt * b_v - b_a - dt * dt * b_x,
    ];
    let poly = ModePolynomial {
        mode_k: k,
        n_vehicles: n,
        b_x,
        b_v,
        b_a,
        dt,
        coefficients,
    };
    // The expansion is exact algebra; spot-check it against the
    // unexpanded bracket at a fixed pseudo-random sample.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..10 {
        let z = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let diff = (poly.eval(z) - poly.bracket(z)).norm();
        assert!(
            diff < 1e-10,
            "cubic expansion disagrees with bracket at z={z}: {diff:e}"
        );
    }
    poly
}

/// Roots of one mode's cubic, before and after trivial-root filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    pub mode_k: usize,
    /// All three roots of the cubic.
    pub roots: Vec<Complex64>,
    /// Roots that survive filtering: the near-zero root always goes, and
    /// mode 0 additionally drops the translation root at z=1.
    pub filtered_roots: Vec<Complex64>,
}

/// All three roots of a monic cubic with complex coefficients, by
/// Durand-Kerner iteration plus a Newton polish.
fn cubic_roots(c2: Complex64, c1: Complex64, c0: Complex64) -> [Complex64; 3] {
    let eval = |z: Complex64| ((z + c2) * z + c1) * z + c0;
    let deriv = |z: Complex64| (3.0 * z + 2.0 * c2) * z + c1;

    // Starting points on a circle wide enough to enclose all roots.
    let radius = 1.0 + c2.norm().max(c1.norm()).max(c0.norm());
    let seed = Complex64::new(0.4, 0.9);
    let mut z = [seed * radius, seed * seed * radius, seed * seed * seed * radius];
    for _ in 0..200 {
        let mut max_step = 0.0_f64;
        for i in 0..3 {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..3 {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-14 {
            break;
        }
    }
    for zi in &mut z {
        for _ in 0..2 {
            let d = deriv(*zi);
            if d.norm() > 1e-30 {
                *zi -= eval(*zi) / d;
            }
        }
    }
    z
}

/// Extract, certify, and filter the roots of one mode polynomial.
pub fn mode_roots(poly: &ModePolynomial, settings: &StabilitySettings) -> Result<ModeSpectrum> {
    let [_, c2, c1, c0] = poly.coefficients;
    let roots = cubic_roots(c2, c1, c0).to_vec();
    for &z in &roots {
        let residual = poly.bracket(z).norm();
        if residual > settings.root_residual_tol {
            return Err(Error::RootResidual {
                mode_k: poly.mode_k,
                root: z,
                residual,
                tol: settings.root_residual_tol,
            });
        }
    }

    let mut filtered = roots.clone();
    let (zero_idx, zero_mag) = filtered
        .iter()
        .enumerate()
        .map(|(i, z)| (i, z.norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("cubic always has three roots");
    if zero_mag >= settings.root_zero_tol {
        return Err(Error::DegenerateFilter {
            mode_k: poly.mode_k,
            tol: settings.root_zero_tol,
            min_abs: zero_mag,
        });
    }
    filtered.swap_remove(zero_idx);
    if poly.mode_k == 0 {
        let (unit_idx, _) = filtered
            .iter()
            .enumerate()
            .map(|(i, z)| (i, (z - Complex64::new(1.0, 0.0)).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("two roots remain after removing z=0");
        filtered.swap_remove(unit_idx);
    }
    Ok(ModeSpectrum {
        mode_k: poly.mode_k,
        roots,
        filtered_roots: filtered,
    })
}

/// The full non-trivial spectrum at density `rho`: one `ModeSpectrum` per
/// Fourier mode, 2N-1 filtered roots in total.
pub fn nontrivial_spectrum(
    n: usize,
    rho: f64,
    p: &ModelParams,
    settings: &StabilitySettings,
) -> Result<Vec<ModeSpectrum>> {
    let betas = slope_vectors(rho, p, settings.fd_step)?;
    (0..n)
        .map(|k| mode_roots(&mode_polynomial(k, n, betas, p), settings))
        .collect()
}

/// Largest filtered-root modulus and the mode attaining it.
pub fn spectral_radius(spectra: &[ModeSpectrum]) -> (f64, usize) {
    assert!(!spectra.is_empty(), "spectral_radius of an empty spectrum");
    let mut best = (f64::NEG_INFINITY, 0);
    for s in spectra {
        for z in &s.filtered_roots {
            if z.norm() > best.0 {
                best = (z.norm(), s.mode_k);
            }
        }
    }
    best
}

/// Which way the roots move across the unit circle as density grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingDirection {
    /// Radius grows with density (stability is lost above rho*).
    Outward,
    /// Radius shrinks with density (stability is restored above rho*).
    Inward,
}

/// A located critical density, with the bisection diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct CriticalDensity {
    pub rho_star: f64,
    pub v_star: f64,
    /// Modes whose extremal roots sit on the unit circle at the crossing.
    pub crossing_modes: Vec<usize>,
    pub direction: CrossingDirection,
    /// Circumference realizing rho_star at the fixed vehicle count.
    pub c_star: f64,
    pub n_vehicles: usize,
    /// The circumference bracket the bisection started from.
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// max |z| at the reported crossing.
    pub max_modulus: f64,
}

/// Locate the density where the spectral radius crosses 1, by bisection on
/// the circumference at fixed N.
pub fn critical_density(
    n: usize,
    c_bracket: (f64, f64),
    p: &ModelParams,
    tol: f64,
    settings: &StabilitySettings,
) -> Result<CriticalDensity> {
    const WIDTH_TOL: f64 = 1e-3;
    let radius_at = |c: f64| -> Result<(f64, Vec<ModeSpectrum>)> {
        let spectra = nontrivial_spectrum(n, n as f64 / c, p, settings)?;
        Ok((spectral_radius(&spectra).0, spectra))
    };

    let (c_lo, c_hi) = c_bracket;
    let (r_lo, _) = radius_at(c_lo)?;
    let (r_hi, _) = radius_at(c_hi)?;
    let (f_lo, f_hi) = (r_lo - 1.0, r_hi - 1.0);
    if f_lo * f_hi > 0.0 {
        return Err(Error::NoCrossing {
            c_lo,
            c_hi,
            f_lo,
            f_hi,
        });
    }
    // Density grows as C shrinks; compare the high-density end (c_lo) with
    // the low-density end (c_hi).
    let direction = if r_lo > r_hi {
        CrossingDirection::Outward
    } else {
        CrossingDirection::Inward
    };

    let (mut lo, mut hi, mut sign_lo) = (c_lo, c_hi, f_lo < 0.0);
    let mut iterations = 0;
    let (mut c_star, mut radius, mut spectra);
    loop {
        c_star = 0.5 * (lo + hi);
        let (r, s) = radius_at(c_star)?;
        radius = r;
        spectra = s;
        iterations += 1;
        if (radius - 1.0).abs() < tol || hi - lo < WIDTH_TOL {
            break;
        }
        if ((radius - 1.0) < 0.0) == sign_lo {
            lo = c_star;
            sign_lo = (radius - 1.0) < 0.0;
        } else {
            hi = c_star;
        }
    }

    // Modes whose extremal roots reach the circle at the crossing, i.e.
    // tie with the spectral radius.
    let crossing_modes: Vec<usize> = spectra
        .iter()
        .filter(|s| {
            s.filtered_roots
                .iter()
                .any(|z| (z.norm() - radius).abs() < 1e-9)
        })
        .map(|s| s.mode_k)
        .collect();

    Ok(CriticalDensity {
        rho_star: n as f64 / c_star,
        v_star: p.v_star,
        crossing_modes,
        direction,
        c_star,
        n_vehicles: n,
        bracket: c_bracket,
        iterations,
        max_modulus: radius,
    })
}

/// Perturbation state of the linearized map: (phi, psi, theta) per vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub theta: Vec<f64>,
}

impl Perturbation {
    pub fn zeros(n: usize) -> Self {
        Self {
            phi: vec![0.0; n],
            psi: vec![0.0; n],
            theta: vec![0.0; n],
        }
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = self
            .phi
            .iter()
            .chain(&self.psi)
            .chain(&self.theta)
            .map(|x| x * x)
            .sum();
        sq.sqrt()
    }

    fn scale(&mut self, s: f64) {
        for v in self
            .phi
            .iter_mut()
            .chain(self.psi.iter_mut())
            .chain(self.theta.iter_mut())
        {
            *v *= s;
        }
    }
}

/// The linearized map around the fixed point, with its one-step delay.
#[derive(Debug, Clone)]
pub struct LinearizedMap {
    pub n: usize,
    pub dt: f64,
    pub gamma: f64,
    pub beta0: SlopeVector,
    pub beta1: SlopeVector,
}

impl LinearizedMap {
    pub fn at_density(n: usize, rho: f64, p: &ModelParams, fd_step: f64) -> Result<Self> {
        let (beta0, beta1) = slope_vectors(rho, p, fd_step)?;
        Ok(Self {
            n,
            dt: p.dt,
            gamma: p.gamma,
            beta0,
            beta1,
        })
    }

    /// One step of the linear recursion; `prev` is the perturbation one
    /// step earlier (the delayed term of the acceleration update).
    pub fn step(&self, curr: &Perturbation, prev: &Perturbation) -> Perturbation {
        let n = self.n;
        let mut next = Perturbation::zeros(n);
        for i in 0..n {
            next.phi[i] = curr.phi[i] + curr.psi[i] * self.dt;
            next.psi[i] = curr.psi[i] + curr.theta[i] * self.dt;
            let mut drive = self.gamma * curr.theta[i];
            for (l, b) in [(0usize, &self.beta0), (1usize, &self.beta1)] {
                let j = (i + l) % n;
                let dot_curr =
                    b.beta_x * curr.phi[j] + b.beta_v * curr.psi[j] + b.beta_a * curr.theta[j];
                let dot_prev =
                    b.beta_x * prev.phi[j] + b.beta_v * prev.psi[j] + b.beta_a * prev.theta[j];
                drive += dot_curr - self.gamma * dot_prev;
            }
            next.theta[i] = drive;
        }
        next
    }
}

/// Empirical per-step growth factor of the linearized map, measured over
/// the last half of `steps` from a small random zero-mean perturbation.
///
/// This is an independent time-domain check of the z-root analysis: the
/// growth factor converges to the largest non-trivial root modulus.
pub fn linearized_oracle(
    n: usize,
    rho: f64,
    p: &ModelParams,
    steps: u64,
    seed: u64,
    settings: &StabilitySettings,
) -> Result<f64> {
    let map = LinearizedMap::at_density(n, rho, p, settings.fd_step)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curr = Perturbation::zeros(n);
    for v in curr
        .phi
        .iter_mut()
        .chain(curr.psi.iter_mut())
        .chain(curr.theta.iter_mut())
    {
        *v = rng.gen_range(-1e-6..1e-6);
    }
    // Remove the uniform (k=0) component so the neutral translation root
    // does not mask the decaying modes.
    for field in [&mut curr.phi, &mut curr.psi, &mut curr.theta] {
        let mean = field.iter().sum::<f64>() / n as f64;
        field.iter_mut().for_each(|v| *v -= mean);
    }
    let mut prev = curr.clone();

    let burn_in = steps / 2;
    let mut log_sum = 0.0;
    let mut count = 0u64;
    for t in 0..steps {
        let next = map.step(&curr, &prev);
        let norm_next = next.norm();
        let norm_curr = curr.norm();
        if norm_next == 0.0 || norm_curr == 0.0 {
            return Ok(0.0);
        }
        if t >= burn_in {
            log_sum += (norm_next / norm_curr).ln();
            count += 1;
        }
        // Renormalize both history entries by the same factor so the
        // linear dynamics are unchanged while the norm stays O(1).
        prev = curr;
        let s = 1.0 / norm_next;
        prev.scale(s);
        let mut next = next;
        next.scale(s);
        curr = next;
    }
    Ok((log_sum / count as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    const RHO_314: f64 = 28.0 / 314.0;

    fn defaults() -> (ModelParams, StabilitySettings) {
        (ModelParams::default(), StabilitySettings::default())
    }

    #[test]
    fn slope_signs_and_antisymmetry() {
        let (p, s) = defaults();
        let (b0, b1) = slope_vectors(RHO_314, &p, s.fd_step).unwrap();
        assert!(
            (b0.beta_x + b1.beta_x).abs() <= 1e-6 * b1.beta_x.abs(),
            "beta0_x {} vs -beta1_x {}",
            b0.beta_x,
            b1.beta_x
        );
        assert!(b0.beta_v < 0.0);
        assert!(b1.beta_x > 0.0);
        assert!(b1.beta_v >= 0.0);
        // Cross-check the magnitudes against an independently coded
        // finite-difference evaluation of the same policy.
        assert!((b0.beta_x - (-0.23533805712)).abs() < 1e-6);
        assert!((b0.beta_v - (-1.081738440001)).abs() < 1e-6);
        assert!((b1.beta_v - 0.825540297686).abs() < 1e-6);
    }

    #[test]
    fn slope_consistency_identity() {
        let (p, s) = defaults();
        let (b0, b1) = slope_vectors(RHO_314, &p, s.fd_step).unwrap();
        for b in [b0, b1] {
            let scale = (p.dt * b.beta_x).abs().max(b.beta_v.abs());
            assert!(
                (b.consistency_residual(p.dt) / scale).abs() < 0.01,
                "identity violated: {:?}",
                b
            );
        }
    }

    #[test]
    fn slopes_are_richardson_consistent() {
        let (p, s) = defaults();
        let (b0_h, b1_h) = slope_vectors(RHO_314, &p, s.fd_step).unwrap();
        let (b0_h2, b1_h2) = slope_vectors(RHO_314, &p, s.fd_step / 2.0).unwrap();
        for (a, b) in [
            (b0_h.beta_x, b0_h2.beta_x),
            (b0_h.beta_v, b0_h2.beta_v),
            (b0_h.beta_a, b0_h2.beta_a),
            (b1_h.beta_x, b1_h2.beta_x),
            (b1_h.beta_v, b1_h2.beta_v),
            (b1_h.beta_a, b1_h2.beta_a),
        ] {
            assert!((a - b).abs() <= 0.05 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn mode_zero_has_unit_root() {
        let (p, s) = defaults();
        let betas = slope_vectors(RHO_314, &p, s.fd_step).unwrap();
        let poly = mode_polynomial(0, 28, betas, &p);
        let one = Complex64::new(1.0, 0.0);
        assert!(poly.bracket(one).norm() < 1e-12);
        let spectrum = mode_roots(&poly, &s).unwrap();
        assert_eq!(spectrum.filtered_roots.len(), 1);
        assert!(spectrum
            .roots
            .iter()
            .any(|z| (z - one).norm() < 1e-9));
    }

    #[test]
    fn every_mode_has_near_zero_root() {
        let (p, s) = defaults();
        let betas = slope_vectors(RHO_314, &p, s.fd_step).unwrap();
        for k in 0..28 {
            let poly = mode_polynomial(k, 28, betas, &p);
            let spectrum = mode_roots(&poly, &s).unwrap();
            let min = spectrum
                .roots
                .iter()
                .map(|z| z.norm())
                .fold(f64::INFINITY, f64::min);
            assert!(min < s.root_zero_tol, "mode {k}: min |z| = {min:e}");
        }
    }

    #[test]
    fn roots_satisfy_bracket_residual() {
        let (p, s) = defaults();
        let betas = slope_vectors(RHO_314, &p, s.fd_step).unwrap();
        let poly = mode_polynomial(1, 28, betas, &p);
        for z in mode_roots(&poly, &s).unwrap().roots {
            assert!(poly.bracket(z).norm() < 1e-10);
        }
    }

    #[test]
    fn gamma_root_was_factored_out() {
        let (p, s) = defaults();
        let betas = slope_vectors(RHO_314, &p, s.fd_step).unwrap();
        for k in 0..28 {
            let spectrum = mode_roots(&mode_polynomial(k, 28, betas, &p), &s).unwrap();
            for z in spectrum.roots {
                assert!((z - Complex64::new(p.gamma, 0.0)).norm() > 1e-6);
            }
        }
    }

    #[test]
    fn conjugate_modes_have_conjugate_roots() {
        let (p, s) = defaults();
        let spectra = nontrivial_spectrum(28, RHO_314, &p, &s).unwrap();
        for k in 1..28 {
            let a = &spectra[k];
            let b = &spectra[28 - k];
            for z in &a.filtered_roots {
                let closest = b
                    .filtered_roots
                    .iter()
                    .map(|w| (w.conj() - z).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(closest < 1e-9, "mode {k}: unmatched root {z}");
            }
        }
    }

    #[test]
    fn filtered_root_count_is_2n_minus_1() {
        let (p, s) = defaults();
        for n in [26usize, 28, 30] {
            let spectra = nontrivial_spectrum(n, n as f64 / 314.0, &p, &s).unwrap();
            let total: usize = spectra.iter().map(|m| m.filtered_roots.len()).sum();
            assert_eq!(total, 2 * n - 1);
        }
    }

    #[test]
    fn root_cloud_verdicts_near_first_crossing() {
        let (p, s) = defaults();
        let radius = |n: usize| {
            let spectra = nontrivial_spectrum(n, n as f64 / 314.0, &p, &s).unwrap();
            spectral_radius(&spectra)
        };
        let (r26, _) = radius(26);
        assert!(r26 < 1.0, "N=26 should be stable: {r26}");
        let (r28, k28) = radius(28);
        assert!((r28 - 1.0).abs() < 0.01, "N=28 should touch: {r28}");
        assert!(k28.min(28 - k28) <= 3, "crossing mode should be low-k");
        let (r30, _) = radius(30);
        assert!(r30 > 1.0, "N=30 should be unstable: {r30}");

        // The touching roots at N=28 form a conjugate pair off the real
        // axis, two pairs escape at N=30.
        let spectra = nontrivial_spectrum(28, 28.0 / 314.0, &p, &s).unwrap();
        let extremal: Vec<Complex64> = spectra
            .iter()
            .flat_map(|m| m.filtered_roots.iter().cloned())
            .filter(|z| (z.norm() - r28).abs() < 1e-9)
            .collect();
        assert_eq!(extremal.len(), 2);
        assert!(extremal.iter().all(|z| z.im.abs() > 0.01));
        assert!((extremal[0].conj() - extremal[1]).norm() < 1e-9);

        let spectra = nontrivial_spectrum(30, 30.0 / 314.0, &p, &s).unwrap();
        let outside = spectra
            .iter()
            .flat_map(|m| m.filtered_roots.iter())
            .filter(|z| z.norm() > 1.0)
            .count();
        assert!(outside >= 4, "expected two escaped pairs, got {outside} roots");
    }

    #[test]
    fn spectral_radius_of_synthetic_mode() {
        let spectra = vec![ModeSpectrum {
            mode_k: 5,
            roots: vec![],
            filtered_roots: vec![Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.5)],
        }];
        assert_eq!(spectral_radius(&spectra), (0.5, 5));
    }

    #[test]
    fn critical_density_near_first_crossing() {
        let (p, s) = defaults();
        let crit = critical_density(28, (300.0, 330.0), &p, 1e-4, &s).unwrap();
        assert!(
            (crit.rho_star - 0.090).abs() < 0.003,
            "rho*_FF1 = {}",
            crit.rho_star
        );
        assert_eq!(crit.direction, CrossingDirection::Outward);
        assert!((crit.max_modulus - 1.0).abs() < 1e-3);
        assert!(!crit.crossing_modes.is_empty());
    }

    #[test]
    fn critical_density_near_second_crossing() {
        let (p, s) = defaults();
        let crit = critical_density(42, (300.0, 330.0), &p, 1e-4, &s).unwrap();
        assert!(
            (crit.rho_star - 0.134).abs() < 0.003,
            "rho*_FF2 = {}",
            crit.rho_star
        );
        assert_eq!(crit.direction, CrossingDirection::Inward);
    }

    #[test]
    fn no_crossing_on_a_stable_bracket() {
        let (p, s) = defaults();
        let err = critical_density(20, (300.0, 330.0), &p, 1e-4, &s).unwrap_err();
        assert!(matches!(err, Error::NoCrossing { .. }));
    }

    #[test]
    fn degenerate_filter_when_the_identity_is_broken() {
        // Slopes that violate the consistency identity displace the
        // trivial root far from zero; filtering must refuse loudly.
        let (p, s) = defaults();
        let fake = SlopeVector {
            beta_x: 0.0,
            beta_v: 1.0,
            beta_a: 0.0,
        };
        let poly = mode_polynomial(1, 4, (fake, fake), &p);
        let err = mode_roots(&poly, &s).unwrap_err();
        assert!(matches!(err, Error::DegenerateFilter { .. }), "{err}");
    }

    #[test]
    fn zero_perturbation_stays_zero() {
        let (p, s) = defaults();
        let map = LinearizedMap::at_density(26, 26.0 / 314.0, &p, s.fd_step).unwrap();
        let zero = Perturbation::zeros(26);
        let next = map.step(&zero, &zero);
        assert_eq!(next, zero);
    }

    #[test]
    fn oracle_growth_matches_root_modulus() {
        let (p, s) = defaults();
        for n in [26usize, 28, 30] {
            let rho = n as f64 / 314.0;
            let spectra = nontrivial_spectrum(n, rho, &p, &s).unwrap();
            let (radius, _) = spectral_radius(&spectra);
            let growth = linearized_oracle(n, rho, &p, 5000, 7, &s).unwrap();
            assert!(
                (growth - radius).abs() / radius < 0.02,
                "N={n}: growth {growth} vs radius {radius}"
            );
        }
    }

    #[test]
    fn unstable_density_grows() {
        let (p, s) = defaults();
        let growth = linearized_oracle(30, 30.0 / 314.0, &p, 5000, 11, &s).unwrap();
        assert!(growth > 1.0, "{growth}");
    }
}
