//! Stochastic integrator for the spin-particle model.
//!
//! One step is a synchronous Euler-Maruyama update followed by projection of
//! every spin back onto the unit sphere:
//!
//! 1. rebuild the cell list from the current positions,
//! 2. compute every local mean spin from the *current* spins,
//! 3. `S_j <- normalize(S_j + dt * drift_j + noise_j)`,
//! 4. `r_j <- wrap(r_j + dt * u * S_j_new)` (plus optional translational noise),
//! 5. advance the clock.
//!
//! Each particle draws from its own counter-based stream keyed by
//! `(seed, step, particle)`, so trajectories do not depend on the number of
//! worker threads.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitCircle, UnitSphere};
use rayon::prelude::*;
use thiserror::Error;

use crate::neighbor::{wrap, CellIndex, NeighborError};
use crate::observables::{polar_order, time_averaged_order};
use crate::params::{Dimension, ModelParams, ParamError};
use crate::rng::{keyed_rng, INIT_STREAM};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
    #[error("invalid integrator setting `{name}`: {reason}")]
    Config { name: &'static str, reason: String },
    #[error("non-finite value in particle {particle} at step {step}")]
    NonFinite { step: u64, particle: usize },
    #[error("n_steps ({n_steps}) is smaller than the transient ({transient})")]
    ShortRun { n_steps: u64, transient: u64 },
    #[error("recorder failed at step {step}: {message}")]
    Recorder { step: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// `xi sqrt(dt) eta` with a standard Gaussian vector `eta`.
    GaussianWhite,
    /// `xi n'_j e` with a uniformly random unit vector `e`, added to the
    /// updated spin scaled by `n'_j`.
    #[default]
    Vectorial,
}

/// Which spins feed the alignment field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanFieldScope {
    /// Mean over the neighbors within `r_c`.
    #[default]
    Local,
    /// Population mean with `N' = V_d rho`, for comparison with mean-field theory.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Inertia {
    #[default]
    Overdamped,
    /// Experimental: velocities relax to `u S` at rate `gamma`.
    Inertial,
}

/// Integrator settings. Spins are always updated before positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub noise_model: NoiseModel,
    pub translational_noise: bool,
    pub seed: u64,
    pub mean_field: MeanFieldScope,
    pub inertia: Inertia,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            noise_model: NoiseModel::Vectorial,
            translational_noise: false,
            seed: 1,
            mean_field: MeanFieldScope::Local,
            inertia: Inertia::Overdamped,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self, p: &ModelParams) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::Config {
                name: "dt",
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if self.dt * p.spin_relaxation >= 1.0 {
            return Err(DynamicsError::Config {
                name: "dt",
                reason: format!(
                    "dt * gamma_s = {} must be below 1",
                    self.dt * p.spin_relaxation
                ),
            });
        }
        if self.inertia == Inertia::Inertial && self.dt * p.friction >= 1.0 {
            return Err(DynamicsError::Config {
                name: "dt",
                reason: format!("dt * gamma = {} must be below 1", self.dt * p.friction),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub dims: Dimension,
    pub box_length: f64,
    pub positions: Vec<Vector3<f64>>,
    pub spins: Vec<Vector3<f64>>,
    /// Only used in inertial mode; empty otherwise.
    pub velocities: Vec<Vector3<f64>>,
    pub time: f64,
    pub step_count: u64,
}

/// `round(rho L^d)`.
pub fn particle_count(rho: f64, box_length: f64, dims: Dimension) -> usize {
    (rho * box_length.powi(dims.get() as i32)).round() as usize
}

pub(crate) fn random_unit(dims: Dimension, rng: &mut impl Rng) -> Vector3<f64> {
    match dims {
        Dimension::Three => Vector3::from(UnitSphere.sample(rng)),
        Dimension::Two => {
            let [x, y]: [f64; 2] = UnitCircle.sample(rng);
            Vector3::new(x, y, 0.0)
        }
    }
}

fn gaussian_vector(dims: Dimension, rng: &mut impl Rng) -> Vector3<f64> {
    let mut g = Vector3::zeros();
    for c in 0..dims.get() {
        g[c] = rng.sample(StandardNormal);
    }
    g
}

impl ParticleState {
    pub fn new(
        dims: Dimension,
        box_length: f64,
        positions: Vec<Vector3<f64>>,
        spins: Vec<Vector3<f64>>,
    ) -> Self {
        assert_eq!(positions.len(), spins.len());
        Self {
            dims,
            box_length,
            positions,
            spins,
            velocities: Vec::new(),
            time: 0.0,
            step_count: 0,
        }
    }

    /// Uniform positions and isotropic unit spins (planar in 2D).
    pub fn random(n: usize, box_length: f64, dims: Dimension, seed: u64) -> Self {
        let (positions, spins) = (0..n)
            .map(|j| {
                let mut rng = keyed_rng(seed, INIT_STREAM, j as u64);
                let mut r = Vector3::zeros();
                for c in 0..dims.get() {
                    r[c] = wrap(rng.random::<f64>() * box_length, box_length);
                }
                (r, random_unit(dims, &mut rng))
            })
            .unzip();
        Self::new(dims, box_length, positions, spins)
    }

    /// Random initial state with `round(rho L^d)` particles.
    pub fn for_params(p: &ModelParams, box_length: f64, seed: u64) -> Self {
        Self::random(
            particle_count(p.density, box_length, p.dims),
            box_length,
            p.dims,
            seed,
        )
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn mean_spin(&self) -> Vector3<f64> {
        self.spins.iter().sum::<Vector3<f64>>() / self.len().max(1) as f64
    }
}

/// Deterministic spin drift: precession about the local field plus relaxation
/// towards the local mean spin `s_bar`.
pub fn spin_drift(
    s: &Vector3<f64>,
    s_bar: &Vector3<f64>,
    p: &ModelParams,
    n_prime: f64,
) -> Vector3<f64> {
    let b_local = s_bar * (0.5 * p.coupling * n_prime);
    -b_local.cross(s) - (s - s_bar) * p.spin_relaxation
}

/// Adds one noise increment to an unnormalized spin.
pub fn apply_spin_noise(
    s: &Vector3<f64>,
    cfg: &IntegratorConfig,
    xi_noise: f64,
    n_prime: f64,
    dims: Dimension,
    rng: &mut impl Rng,
) -> Vector3<f64> {
    if xi_noise == 0.0 {
        return *s;
    }
    match cfg.noise_model {
        NoiseModel::GaussianWhite => s + gaussian_vector(dims, rng) * (xi_noise * cfg.dt.sqrt()),
        NoiseModel::Vectorial => s + random_unit(dims, rng) * (xi_noise * n_prime),
    }
}

struct Update {
    spin: Vector3<f64>,
    position: Vector3<f64>,
    velocity: Option<Vector3<f64>>,
}

/// Advances the state by one step. The input is not modified.
pub fn step(
    state: &ParticleState,
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<ParticleState, DynamicsError> {
    let n = state.len();
    let dims = state.dims;
    let dt = cfg.dt;
    let box_length = state.box_length;
    let r_c = p.interaction_radius;

    let index = match cfg.mean_field {
        MeanFieldScope::Local => Some(CellIndex::build(&state.positions, box_length, r_c, dims)?),
        MeanFieldScope::Global => None,
    };
    let global = (state.mean_spin(), p.expected_neighbors());

    let mut base = ChaCha8Rng::seed_from_u64(cfg.seed);
    base.set_stream(state.step_count);
    let thermal = (2.0 * p.friction / (p.mass * p.beta)).sqrt() * dt.sqrt();
    let inertial = cfg.inertia == Inertia::Inertial;

    let updates: Vec<Update> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = base.clone();
            rng.set_word_pos((j as u128) << 32);
            let s = state.spins[j];
            let (s_bar, n_prime) = match &index {
                Some(idx) => {
                    let (sum, count) = idx.neighbor_spin_sum(&state.positions, &state.spins, j, r_c);
                    (sum / count as f64, count as f64)
                }
                None => global,
            };
            let mut moved = s + spin_drift(&s, &s_bar, p, n_prime) * dt;
            if cfg.noise_model == NoiseModel::Vectorial {
                // vectorial noise competes with the neighbor sum, not with a single spin
                moved *= n_prime;
            }
            let mut raw = apply_spin_noise(&moved, cfg, p.noise_amplitude, n_prime, dims, &mut rng);
            if dims == Dimension::Two {
                raw.z = 0.0;
            }
            let norm = raw.norm();
            let spin = if norm > 0.0 { raw / norm } else { s };

            let kick = if cfg.translational_noise {
                gaussian_vector(dims, &mut rng) * thermal
            } else {
                Vector3::zeros()
            };
            let (displacement, velocity) = if inertial {
                let v = state.velocities.get(j).copied().unwrap_or(s * p.speed);
                let v_new = v + (spin * p.speed - v) * (p.friction * dt) + kick;
                (v_new * dt, Some(v_new))
            } else {
                (spin * (p.speed * dt) + kick, None)
            };
            let mut position = state.positions[j];
            for c in 0..dims.get() {
                position[c] = wrap(position[c] + displacement[c], box_length);
            }
            Update {
                spin,
                position,
                velocity,
            }
        })
        .collect();

    let next_step = state.step_count + 1;
    if let Some(particle) = updates.iter().position(|u| {
        u.spin.iter().chain(u.position.iter()).any(|x| !x.is_finite())
    }) {
        return Err(DynamicsError::NonFinite {
            step: next_step,
            particle,
        });
    }

    let mut next = ParticleState {
        dims,
        box_length,
        positions: Vec::with_capacity(n),
        spins: Vec::with_capacity(n),
        velocities: Vec::new(),
        time: state.time + dt,
        step_count: next_step,
    };
    for u in updates {
        next.positions.push(u.position);
        next.spins.push(u.spin);
        if let Some(v) = u.velocity {
            next.velocities.push(v);
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderSample {
    pub step: u64,
    pub time: f64,
    pub phi: f64,
}

/// Hook invoked after every post-transient step.
pub trait Recorder {
    fn record(&mut self, state: &ParticleState) -> crate::Result<()>;
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_state: ParticleState,
    /// Polar order after each post-transient step.
    pub order_series: Vec<OrderSample>,
    /// Time average of `order_series`; `None` when it is empty.
    pub mean_order: Option<f64>,
}

/// Runs `n_steps` steps from `initial`, measuring after the first `transient`.
pub fn run(
    initial: ParticleState,
    p: &ModelParams,
    cfg: &IntegratorConfig,
    n_steps: u64,
    transient: u64,
    recorders: &mut [&mut dyn Recorder],
) -> crate::Result<RunSummary> {
    p.validate().map_err(DynamicsError::from)?;
    cfg.validate(p)?;
    if n_steps < transient {
        return Err(DynamicsError::ShortRun { n_steps, transient }.into());
    }
    let mut state = initial;
    let mut order_series = Vec::with_capacity((n_steps - transient) as usize);
    for k in 1..=n_steps {
        state = step(&state, p, cfg)?;
        if k > transient {
            order_series.push(OrderSample {
                step: state.step_count,
                time: state.time,
                phi: polar_order(&state.spins)?,
            });
            for r in recorders.iter_mut() {
                r.record(&state)?;
            }
        }
    }
    let phis: Vec<f64> = order_series.iter().map(|s| s.phi).collect();
    let mean_order = time_averaged_order(&phis, 0).ok();
    Ok(RunSummary {
        final_state: state,
        order_series,
        mean_order,
    })
}
