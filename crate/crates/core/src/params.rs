//! Model constants and the coefficients derived from them.
//!
//! Everything here is a pure function of its inputs. The Landau expansion of
//! the free energy, the mean field and the hydrodynamic coefficients are all
//! computed from a single [`ModelParams`].

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector3;
use thiserror::Error;

use crate::neighbor::expected_neighbor_count;

/// Spatial dimension of the simulation domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Dimension {
    Two,
    #[default]
    Three,
}

impl Dimension {
    pub fn get(self) -> usize {
        match self {
            Dimension::Two => 2,
            Dimension::Three => 3,
        }
    }

    pub fn from_usize(d: usize) -> Option<Self> {
        match d {
            2 => Some(Dimension::Two),
            3 => Some(Dimension::Three),
            _ => None,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.get())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter `{name}` is invalid: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("no spontaneous symmetry breaking: the quadratic Landau coefficient vanishes (J = 0)")]
    NoSymmetryBreaking,
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ParamError {
    ParamError::Invalid {
        name,
        reason: reason.into(),
    }
}

/// Microscopic constants of the spin-particle model.
///
/// The spin/field coupling `zeta` is not stored: it is always `speed * mass`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Particle mass `m`.
    pub mass: f64,
    /// Self-propulsion speed `u`.
    pub speed: f64,
    /// Ferromagnetic coupling `J`.
    pub coupling: f64,
    /// Translational friction rate `gamma`.
    pub friction: f64,
    /// Spin relaxation rate `gamma_s`.
    pub spin_relaxation: f64,
    /// Inverse temperature `beta`.
    pub beta: f64,
    /// Mean number density `rho`.
    pub density: f64,
    /// Interaction radius `r_c`.
    pub interaction_radius: f64,
    /// Spin noise amplitude.
    pub noise_amplitude: f64,
    /// Lagrange multiplier of the fixed-speed constraint.
    pub kappa: f64,
    pub dims: Dimension,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            speed: 0.5,
            coupling: 1.0,
            friction: 1.0,
            spin_relaxation: 1.0,
            beta: 1.0,
            density: 0.5,
            interaction_radius: 1.0,
            noise_amplitude: 0.5,
            kappa: 0.0,
            dims: Dimension::Three,
        }
    }
}

impl ModelParams {
    /// Spin/field coupling `zeta = u * m`.
    pub fn zeta(&self) -> f64 {
        self.speed * self.mass
    }

    /// Renormalized mass `m + 2 kappa / beta`.
    pub fn renormalized_mass(&self) -> f64 {
        self.mass + 2.0 * self.kappa / self.beta
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        fn check(name: &'static str, v: f64, ok: bool, what: &str) -> Result<(), ParamError> {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
            if !ok {
                return Err(invalid(name, format!("must be {what}, got {v}")));
            }
            Ok(())
        }
        check("m", self.mass, self.mass > 0.0, "positive")?;
        check("u", self.speed, self.speed >= 0.0, "non-negative")?;
        check("J", self.coupling, true, "finite")?;
        check("gamma", self.friction, self.friction > 0.0, "positive")?;
        check(
            "gamma_s",
            self.spin_relaxation,
            self.spin_relaxation >= 0.0,
            "non-negative",
        )?;
        check("beta", self.beta, self.beta > 0.0, "positive")?;
        check("rho", self.density, self.density > 0.0, "positive")?;
        check(
            "r_c",
            self.interaction_radius,
            self.interaction_radius > 0.0,
            "positive",
        )?;
        check(
            "xi_noise",
            self.noise_amplitude,
            self.noise_amplitude >= 0.0,
            "non-negative",
        )?;
        check("kappa", self.kappa, true, "finite")?;
        let m_tilde = self.renormalized_mass();
        if !(m_tilde > 0.0) {
            return Err(invalid(
                "kappa",
                format!("renormalized mass m + 2 kappa / beta must be positive, got {m_tilde}"),
            ));
        }
        Ok(())
    }

    /// Expected number of interacting neighbors `N' = V_d rho`.
    pub fn expected_neighbors(&self) -> f64 {
        expected_neighbor_count(self.density, self.interaction_radius, self.dims)
    }
}

/// Coefficients of the quartic Landau free energy in the speed `|V|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandauCoefficients {
    pub lambda: f64,
    pub eta: f64,
    pub f0: f64,
    pub m_tilde: f64,
    pub beta: f64,
    /// Squared order-parameter magnitude; `None` when `lambda == 0`.
    pub v0_sq: Option<f64>,
}

impl LandauCoefficients {
    pub fn order_parameter_sq(&self) -> Result<f64, ParamError> {
        self.v0_sq.ok_or(ParamError::NoSymmetryBreaking)
    }
}

/// Landau coefficients for a given expected neighbor count `n_prime`.
pub fn landau_coefficients(p: &ModelParams, n_prime: f64) -> Result<LandauCoefficients, ParamError> {
    p.validate()?;
    if !(n_prime > 0.0) || !n_prime.is_finite() {
        return Err(invalid("n_prime", format!("must be positive, got {n_prime}")));
    }
    if !(p.speed > 0.0) {
        return Err(invalid("u", "must be positive for the Landau expansion"));
    }
    let m_tilde = p.renormalized_mass();
    let beta = p.beta;
    let u2 = p.speed * p.speed;
    let lambda = 3.0 * p.coupling * p.coupling * n_prime * n_prime / (8.0 * m_tilde * u2 * u2);
    let eta = 2.0 * lambda * lambda * beta / 9.0;
    let f0 = (3.0 * (m_tilde * beta).ln() - (2.0 * PI).ln()
        + 2.0 * p.density.ln()
        + 2.0 * p.kappa * u2)
        / (2.0 * beta);
    let v0_sq = (lambda != 0.0).then(|| 9.0 / (4.0 * lambda * beta));
    Ok(LandauCoefficients {
        lambda,
        eta,
        f0,
        m_tilde,
        beta,
        v0_sq,
    })
}

/// Free energy density `rho (-lambda |V|^2 + eta |V|^4 + F0)`.
pub fn free_energy_density(c: &LandauCoefficients, v_mag_sq: f64, rho_local: f64) -> f64 {
    debug_assert!(v_mag_sq >= 0.0);
    rho_local * (-c.lambda * v_mag_sq + c.eta * v_mag_sq * v_mag_sq + c.f0)
}

/// Mean field `(J N' / 2) S` with `N' = V_d rho`.
pub fn meanfield_b(p: &ModelParams, mean_spin: &Vector3<f64>) -> Vector3<f64> {
    mean_spin * (0.5 * p.coupling * p.expected_neighbors())
}

/// Coefficients of the continuum equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydroCoefficients {
    /// Linear growth `2 xi lambda`.
    pub lambda_tilde: f64,
    /// Advection coefficient `1 - 2 lambda`.
    pub lambda1: f64,
    /// Cubic saturation `4 xi eta`.
    pub eta_tilde: f64,
    /// Pressure coupling `1 / (rho beta)`.
    pub b: f64,
    /// Diffusion `1 / (gamma m beta)`.
    pub diffusion: f64,
    /// Noise strength `gamma / (rho beta)`.
    pub delta: f64,
    /// Renormalized density coupling (user input).
    pub a_i: f64,
    /// Ultraviolet cutoff of the noise spectrum.
    pub lambda_cut: f64,
    /// Proportionality in `V = xi r`.
    pub xi_align: f64,
}

impl HydroCoefficients {
    /// Stationary flock speed squared, `lambda_tilde / eta_tilde`.
    pub fn flock_speed_sq(&self) -> f64 {
        self.lambda_tilde / self.eta_tilde
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.b > 0.0) {
            return Err(invalid("B", format!("must be positive, got {}", self.b)));
        }
        if !(self.diffusion > 0.0) {
            return Err(invalid("D", format!("must be positive, got {}", self.diffusion)));
        }
        if !(self.delta >= 0.0) {
            return Err(invalid("Delta", format!("must be non-negative, got {}", self.delta)));
        }
        if !(self.lambda_cut > 0.0) {
            return Err(invalid(
                "lambda_cut",
                format!("must be positive, got {}", self.lambda_cut),
            ));
        }
        Ok(())
    }
}

pub fn hydro_coefficients(
    p: &ModelParams,
    c: &LandauCoefficients,
    xi_align: f64,
    a_i: f64,
    lambda_cut: f64,
) -> Result<HydroCoefficients, ParamError> {
    p.validate()?;
    if !xi_align.is_finite() {
        return Err(invalid("xi_align", "must be finite"));
    }
    if !a_i.is_finite() {
        return Err(invalid("A_I", "must be finite"));
    }
    let h = HydroCoefficients {
        lambda_tilde: 2.0 * xi_align * c.lambda,
        lambda1: 1.0 - 2.0 * c.lambda,
        eta_tilde: 4.0 * xi_align * c.eta,
        b: 1.0 / (p.density * p.beta),
        diffusion: 1.0 / (p.friction * p.mass * p.beta),
        delta: p.friction / (p.density * p.beta),
        a_i,
        lambda_cut,
        xi_align,
    };
    h.validate()?;
    Ok(h)
}
