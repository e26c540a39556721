//! Explicit solvers for the continuum flocking equations.
//!
//! Two systems live here:
//!
//! - the full velocity equation with its stress tensor, coupled to the
//!   continuity equation ([`HydroFields`], [`step_full`]);
//! - the linear Goldstone system for transverse velocity and density
//!   fluctuations in the comoving frame ([`GoldstoneState`], [`step_goldstone`]).
//!
//! Both use second-order central differences on a periodic grid and explicit
//! Euler (Euler-Maruyama with noise) in time. The flock axis is grid axis 0.
//! Noise with spectrum `Delta (1 - exp(-k^2 / Lambda^2))` is generated in
//! Fourier space by [`CutoffNoise`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::params::{HydroCoefficients, ModelParams, ParamError};
use crate::rng::keyed_rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HydroError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("stability guard violated: dt = {dt} exceeds the {guard} limit {limit}")]
    Guard {
        guard: &'static str,
        dt: f64,
        limit: f64,
    },
    #[error("non-positive density {value} at site {site:?} after step {step}")]
    NegativeDensity {
        site: [usize; 3],
        value: f64,
        step: u64,
    },
    #[error("non-finite field value at site {site:?} after step {step}")]
    NonFinite { site: [usize; 3], step: u64 },
    #[error("invalid field setup: {0}")]
    Invalid(String),
}

/// Periodic grid with spacing `dx`; axes of length 1 are inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    pub dx: f64,
    plus: [Vec<usize>; 3],
    minus: [Vec<usize>; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], dx: f64) -> Result<Self, HydroError> {
        if dims.contains(&0) || !(dx > 0.0 && dx.is_finite()) {
            return Err(HydroError::Invalid(format!("grid {dims:?} with dx = {dx}")));
        }
        let len = dims.iter().product::<usize>();
        let strides = [dims[1] * dims[2], dims[2], 1];
        let shift = |axis: usize, forward: bool| -> Vec<usize> {
            (0..len)
                .map(|s| {
                    let n = dims[axis];
                    let c = (s / strides[axis]) % n;
                    let c2 = if forward { (c + 1) % n } else { (c + n - 1) % n };
                    s - c * strides[axis] + c2 * strides[axis]
                })
                .collect()
        };
        Ok(Self {
            dims,
            dx,
            plus: [shift(0, true), shift(1, true), shift(2, true)],
            minus: [shift(0, false), shift(1, false), shift(2, false)],
        })
    }

    pub fn cubic(n: usize, dx: f64) -> Result<Self, HydroError> {
        Self::new([n, n, n], dx)
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major site index.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn coords(&self, s: usize) -> [usize; 3] {
        [
            s / (self.dims[1] * self.dims[2]),
            (s / self.dims[2]) % self.dims[1],
            s % self.dims[2],
        ]
    }

    pub fn active_axes(&self) -> Vec<usize> {
        (0..3).filter(|&a| self.dims[a] > 1).collect()
    }

    /// `dx^d` with `d` the number of active axes.
    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.active_axes().len() as i32)
    }

    pub fn box_length(&self, axis: usize) -> f64 {
        self.dims[axis] as f64 * self.dx
    }

    #[inline]
    pub fn plus(&self, axis: usize, s: usize) -> usize {
        self.plus[axis][s]
    }

    #[inline]
    pub fn minus(&self, axis: usize, s: usize) -> usize {
        self.minus[axis][s]
    }

    /// Position of site `s` along `axis`.
    pub fn coordinate(&self, s: usize, axis: usize) -> f64 {
        self.coords(s)[axis] as f64 * self.dx
    }

    /// Continuum wavevector of FFT bin `s` (signed frequencies).
    pub fn wavevector(&self, s: usize) -> [f64; 3] {
        let c = self.coords(s);
        let mut k = [0.0; 3];
        for a in 0..3 {
            let n = self.dims[a] as i64;
            let m = c[a] as i64;
            let signed = if m > n / 2 { m - n } else { m };
            k[a] = 2.0 * PI * signed as f64 / (n as f64 * self.dx);
        }
        k
    }

    /// Central first difference of `f` along `axis` at `s`.
    #[inline]
    fn d1(&self, f: &[f64], axis: usize, s: usize) -> f64 {
        (f[self.plus[axis][s]] - f[self.minus[axis][s]]) / (2.0 * self.dx)
    }

    /// Compact second difference of `f` along `axis` at `s`.
    #[inline]
    fn d2(&self, f: &[f64], axis: usize, s: usize) -> f64 {
        (f[self.plus[axis][s]] - 2.0 * f[s] + f[self.minus[axis][s]]) / (self.dx * self.dx)
    }
}

/// Three-dimensional complex FFT built from 1D transforms along each active axis.
#[derive(Clone)]
pub struct Fft3 {
    dims: [usize; 3],
    forward: [Option<Arc<dyn Fft<f64>>>; 3],
    inverse: [Option<Arc<dyn Fft<f64>>>; 3],
}

impl fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = dims.map(|n| (n > 1).then(|| planner.plan_fft_forward(n)));
        let inverse = dims.map(|n| (n > 1).then(|| planner.plan_fft_inverse(n)));
        Self {
            dims,
            forward,
            inverse,
        }
    }

    /// Unnormalized forward transform `sum_x f(x) exp(-i k x)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(data, &self.forward);
    }

    /// Inverse transform including the `1/N` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(data, &self.inverse);
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    fn apply(&self, data: &mut [Complex64], plans: &[Option<Arc<dyn Fft<f64>>>; 3]) {
        let [nx, ny, nz] = self.dims;
        if let Some(fft) = &plans[2] {
            fft.process(data);
        }
        let mut line = Vec::new();
        for (axis, stride, count) in [(1usize, nz, nx * nz), (0, ny * nz, ny * nz)] {
            let Some(fft) = &plans[axis] else { continue };
            let n = self.dims[axis];
            line.resize(n, Complex64::new(0.0, 0.0));
            for l in 0..count {
                // base offset of line `l`, with the axis coordinate set to 0
                let base = if axis == 1 {
                    (l / nz) * ny * nz + l % nz
                } else {
                    l
                };
                for m in 0..n {
                    line[m] = data[base + m * stride];
                }
                fft.process(&mut line);
                for m in 0..n {
                    data[base + m * stride] = line[m];
                }
            }
        }
    }
}

/// Target spectrum `Delta (1 - exp(-k^2 / Lambda^2))`.
pub fn cutoff_spectrum(k_sq: f64, delta: f64, lambda_cut: f64) -> f64 {
    delta * (-(-k_sq / (lambda_cut * lambda_cut)).exp_m1())
}

/// Gaussian noise fields with the cutoff spectrum, white in time.
///
/// A sample `R` has `E|R_k|^2 = N * 2 S(k) / (dV dt)` for the unnormalized
/// DFT `R_k`, where `S` is [`cutoff_spectrum`] and `dV` the cell volume. In
/// the continuum limit this is `<R(r,t) R(r',t')> = 2 Delta delta(r-r') delta(t-t')`
/// filtered by the cutoff.
#[derive(Debug, Clone)]
pub struct CutoffNoise {
    grid: Grid,
    fft: Fft3,
    k_sq: Vec<f64>,
}

impl CutoffNoise {
    pub fn new(grid: &Grid) -> Self {
        let k_sq = (0..grid.len())
            .map(|s| grid.wavevector(s).iter().map(|k| k * k).sum())
            .collect();
        Self {
            grid: grid.clone(),
            fft: Fft3::new(grid.dims),
            k_sq,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k_sq(&self) -> &[f64] {
        &self.k_sq
    }

    /// Fourier coefficients of one sample (Hermitian, exactly zero at `k = 0`).
    pub fn sample_spectrum(
        &self,
        delta: f64,
        lambda_cut: f64,
        dt: f64,
        rng: &mut impl Rng,
    ) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..self.grid.len())
            .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
            .collect();
        self.fft.forward(&mut buf);
        let norm = 2.0 / (self.grid.cell_volume() * dt);
        for (c, &k2) in buf.iter_mut().zip(&self.k_sq) {
            *c *= (norm * cutoff_spectrum(k2, delta, lambda_cut)).sqrt();
        }
        buf
    }

    /// One real noise field.
    pub fn sample(&self, delta: f64, lambda_cut: f64, dt: f64, rng: &mut impl Rng) -> Vec<f64> {
        let mut buf = self.sample_spectrum(delta, lambda_cut, dt, rng);
        self.fft.inverse(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// `|R_k|^2 dV dt / (2 N)` per mode, whose expectation is the target spectrum.
    pub fn normalized_power(&self, field: &[f64], dt: f64) -> Vec<f64> {
        let mut buf: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut buf);
        let scale = self.grid.cell_volume() * dt / (2.0 * self.grid.len() as f64);
        buf.iter().map(|c| c.norm_sqr() * scale).collect()
    }
}

/// One real field with the cutoff spectrum; see [`CutoffNoise`].
pub fn sample_cutoff_noise(
    grid: &Grid,
    delta: f64,
    lambda_cut: f64,
    dt: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    CutoffNoise::new(grid).sample(delta, lambda_cut, dt, rng)
}

/// Noise switch for the field solvers. Draws are keyed by `(seed, step, component)`.
#[derive(Debug, Clone)]
pub struct FieldNoise {
    pub seed: u64,
    /// Adds the `V_a V_b` part of the velocity-noise covariance (experimental).
    pub anisotropic: bool,
    generator: CutoffNoise,
}

impl FieldNoise {
    pub fn new(grid: &Grid, seed: u64) -> Self {
        Self {
            seed,
            anisotropic: false,
            generator: CutoffNoise::new(grid),
        }
    }

    fn components(&self, axes: &[usize], step: u64, delta: f64, lambda_cut: f64, dt: f64) -> Vec<Vec<f64>> {
        axes.par_iter()
            .map(|&a| {
                let mut rng = keyed_rng(self.seed, step, a as u64);
                self.generator.sample(delta, lambda_cut, dt, &mut rng)
            })
            .collect()
    }
}

/// Mass, inverse temperature and friction entering the full equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidConstants {
    pub mass: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl From<&ModelParams> for FluidConstants {
    fn from(p: &ModelParams) -> Self {
        Self {
            mass: p.mass,
            beta: p.beta,
            gamma: p.friction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydroFields {
    pub grid: Grid,
    pub rho: Vec<f64>,
    /// Velocity components, one array per Cartesian axis.
    pub velocity: [Vec<f64>; 3],
    pub coeffs: HydroCoefficients,
    pub fluid: FluidConstants,
    pub time: f64,
    pub step_count: u64,
}

impl HydroFields {
    pub fn new(
        grid: Grid,
        rho: Vec<f64>,
        velocity: [Vec<f64>; 3],
        coeffs: HydroCoefficients,
        fluid: FluidConstants,
    ) -> Result<Self, HydroError> {
        coeffs.validate()?;
        let n = grid.len();
        if rho.len() != n || velocity.iter().any(|v| v.len() != n) {
            return Err(HydroError::Invalid("field sizes do not match the grid".into()));
        }
        if let Some(s) = rho.iter().position(|&r| !(r > 0.0)) {
            return Err(HydroError::NegativeDensity {
                site: grid.coords(s),
                value: rho[s],
                step: 0,
            });
        }
        Ok(Self {
            grid,
            rho,
            velocity,
            coeffs,
            fluid,
            time: 0.0,
            step_count: 0,
        })
    }

    /// Homogeneous flock moving along axis 0 at the stationary speed.
    pub fn uniform_flock(
        grid: Grid,
        rho0: f64,
        coeffs: HydroCoefficients,
        fluid: FluidConstants,
    ) -> Result<Self, HydroError> {
        let n = grid.len();
        let speed = coeffs.flock_speed_sq().sqrt();
        if !speed.is_finite() {
            return Err(HydroError::Invalid("flock speed is not finite".into()));
        }
        Self::new(
            grid,
            vec![rho0; n],
            [vec![speed; n], vec![0.0; n], vec![0.0; n]],
            coeffs,
            fluid,
        )
    }

    /// `sum rho dV`.
    pub fn total_mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean_density(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.grid.len())
            .map(|s| (0..3).map(|a| self.velocity[a][s].powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest stable time step under the diffusive and advective guards.
    pub fn max_dt(&self) -> f64 {
        let dx = self.grid.dx;
        let mut limit = 0.25 * dx * dx / self.coeffs.diffusion;
        let v = self.max_speed();
        if v > 0.0 {
            limit = limit.min(0.25 * dx / v);
        }
        limit
    }
}

fn check_guard(guard: &'static str, dt: f64, limit: f64) -> Result<(), HydroError> {
    if !(dt > 0.0) || dt > limit {
        return Err(HydroError::Guard { guard, dt, limit });
    }
    Ok(())
}

/// One explicit step of the full velocity and continuity equations.
pub fn step_full(
    fields: &HydroFields,
    dt: f64,
    noise: Option<&FieldNoise>,
) -> Result<HydroFields, HydroError> {
    let g = &fields.grid;
    let dx = g.dx;
    check_guard("diffusive", dt, 0.25 * dx * dx / fields.coeffs.diffusion)?;
    let v_max = fields.max_speed();
    if v_max > 0.0 {
        check_guard("advective", dt, 0.25 * dx / v_max)?;
    }

    let n = g.len();
    let axes = g.active_axes();
    let c = fields.coeffs;
    let FluidConstants { mass, beta, gamma } = fields.fluid;
    let vel = &fields.velocity;
    let rho = &fields.rho;

    // grad[s][a][b] = d_a V_b
    let grad: Vec<[[f64; 3]; 3]> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut t = [[0.0; 3]; 3];
            for &a in &axes {
                for b in 0..3 {
                    t[a][b] = g.d1(&vel[b], a, s);
                }
            }
            t
        })
        .collect();

    // stress[a][b][s] = rho/beta delta_ab - rho/(gamma beta) (d_a V_b + d_b V_a)
    let mut stress: [[Vec<f64>; 3]; 3] = Default::default();
    for a in 0..3 {
        for b in 0..3 {
            stress[a][b] = (0..n)
                .into_par_iter()
                .map(|s| {
                    let iso = if a == b { rho[s] / beta } else { 0.0 };
                    iso - rho[s] / (gamma * beta) * (grad[s][a][b] + grad[s][b][a])
                })
                .collect();
        }
    }
    let flux: [Vec<f64>; 3] =
        std::array::from_fn(|a| (0..n).into_par_iter().map(|s| rho[s] * vel[a][s]).collect());

    let step = fields.step_count;
    let (iso_noise, aniso_noise) = match noise {
        Some(nz) => {
            let iso = nz.components(&axes, step, c.delta, c.lambda_cut, dt);
            let aniso = nz.anisotropic.then(|| {
                let mut rng = keyed_rng(nz.seed, step, 3);
                (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>()
            });
            (Some(iso), aniso)
        }
        None => (None, None),
    };
    let dv = g.cell_volume();

    let updated: Vec<(f64, [f64; 3])> = (0..n)
        .into_par_iter()
        .map(|s| {
            let v = [vel[0][s], vel[1][s], vel[2][s]];
            let speed_sq = v.iter().map(|x| x * x).sum::<f64>();
            let mut v_new = v;
            for b in 0..3 {
                let mut div_p = 0.0;
                let mut adv = 0.0;
                for &a in &axes {
                    div_p += g.d1(&stress[a][b], a, s);
                    adv += v[a] * grad[s][a][b];
                }
                let mut force = c.lambda_tilde * v[b] - c.eta_tilde * speed_sq * v[b] - div_p / rho[s];
                if let Some(iso) = &iso_noise {
                    if let Some(k) = axes.iter().position(|&a| a == b) {
                        force += iso[k][s];
                    }
                }
                if let Some(z) = &aniso_noise {
                    let amp = (2.0 * gamma * mass / (rho[s] * dv * dt)).sqrt();
                    force += amp * v[b] * z[s];
                }
                v_new[b] = v[b] + dt * (force / mass - c.lambda1 * adv);
            }
            let div_flux: f64 = axes.iter().map(|&a| g.d1(&flux[a], a, s)).sum();
            (rho[s] - dt * div_flux, v_new)
        })
        .collect();

    let mut next = HydroFields {
        grid: g.clone(),
        rho: Vec::with_capacity(n),
        velocity: [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)],
        coeffs: fields.coeffs,
        fluid: fields.fluid,
        time: fields.time + dt,
        step_count: step + 1,
    };
    for (s, (r, v)) in updated.into_iter().enumerate() {
        if !r.is_finite() || v.iter().any(|x| !x.is_finite()) {
            return Err(HydroError::NonFinite {
                site: g.coords(s),
                step: step + 1,
            });
        }
        if !(r > 0.0) {
            return Err(HydroError::NegativeDensity {
                site: g.coords(s),
                value: r,
                step: step + 1,
            });
        }
        next.rho.push(r);
        for a in 0..3 {
            next.velocity[a].push(v[a]);
        }
    }
    Ok(next)
}

/// Coefficients of the linear Goldstone system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldstoneCoefficients {
    pub a_i: f64,
    pub b: f64,
    pub diffusion: f64,
    pub lambda1: f64,
    pub delta: f64,
    pub lambda_cut: f64,
}

impl From<&HydroCoefficients> for GoldstoneCoefficients {
    fn from(h: &HydroCoefficients) -> Self {
        Self {
            a_i: h.a_i,
            b: h.b,
            diffusion: h.diffusion,
            lambda1: h.lambda1,
            delta: h.delta,
            lambda_cut: h.lambda_cut,
        }
    }
}

/// Transverse velocity and density deviation in the frame comoving with the flock.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldstoneState {
    pub grid: Grid,
    /// Grid axes spanning the transverse space (active axes other than 0).
    pub perp_axes: Vec<usize>,
    /// One array per transverse axis, same order as `perp_axes`.
    pub v_perp: Vec<Vec<f64>>,
    pub delta_rho: Vec<f64>,
    pub coeffs: GoldstoneCoefficients,
    /// Include `lambda1 (V . d_perp) V`.
    pub advection: bool,
    pub time: f64,
    pub step_count: u64,
}

impl GoldstoneState {
    /// The mean of `delta_rho` is removed so that it is a true deviation.
    pub fn new(
        grid: Grid,
        v_perp: Vec<Vec<f64>>,
        mut delta_rho: Vec<f64>,
        coeffs: GoldstoneCoefficients,
    ) -> Result<Self, HydroError> {
        let perp_axes: Vec<usize> = grid.active_axes().into_iter().filter(|&a| a != 0).collect();
        if perp_axes.is_empty() {
            return Err(HydroError::Invalid("grid has no transverse axis".into()));
        }
        let n = grid.len();
        if v_perp.len() != perp_axes.len() || v_perp.iter().any(|v| v.len() != n) || delta_rho.len() != n {
            return Err(HydroError::Invalid("field sizes do not match the grid".into()));
        }
        let mean = delta_rho.iter().sum::<f64>() / n as f64;
        delta_rho.iter_mut().for_each(|x| *x -= mean);
        Ok(Self {
            grid,
            perp_axes,
            v_perp,
            delta_rho,
            coeffs,
            advection: false,
            time: 0.0,
            step_count: 0,
        })
    }

    pub fn zeros(grid: Grid, coeffs: GoldstoneCoefficients) -> Result<Self, HydroError> {
        let n = grid.len();
        let k = grid.active_axes().into_iter().filter(|&a| a != 0).count();
        Self::new(grid, vec![vec![0.0; n]; k], vec![0.0; n], coeffs)
    }

    pub fn max_dt(&self) -> f64 {
        let dx = self.grid.dx;
        let c = &self.coeffs;
        let mut limit = f64::INFINITY;
        if c.diffusion > 0.0 {
            limit = limit.min(0.25 * dx * dx / c.diffusion);
        }
        let sound = (c.a_i * c.b).abs().sqrt();
        if sound > 0.0 {
            limit = limit.min(0.25 * dx / sound);
        }
        let v = self.max_speed();
        if self.advection && v > 0.0 {
            limit = limit.min(0.25 * dx / (v * c.lambda1.abs().max(1.0)));
        }
        limit
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.grid.len())
            .map(|s| self.v_perp.iter().map(|v| v[s] * v[s]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn mean_delta_rho(&self) -> f64 {
        self.delta_rho.iter().sum::<f64>() / self.delta_rho.len() as f64
    }
}

/// One explicit step of the Goldstone system.
pub fn step_goldstone(
    state: &GoldstoneState,
    dt: f64,
    noise: Option<&FieldNoise>,
) -> Result<GoldstoneState, HydroError> {
    let limit = state.max_dt();
    check_guard("goldstone stability", dt, limit)?;
    let g = &state.grid;
    let n = g.len();
    let c = state.coeffs;
    let axes = g.active_axes();
    let perp = &state.perp_axes;
    let v = &state.v_perp;

    let div: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|s| perp.iter().zip(v).map(|(&a, va)| g.d1(va, a, s)).sum())
        .collect();
    let noise_fields = noise.map(|nz| nz.components(perp, state.step_count, c.delta, c.lambda_cut, dt));

    let new_v: Vec<Vec<f64>> = perp
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            (0..n)
                .into_par_iter()
                .map(|s| {
                    let lap: f64 = axes.iter().map(|&ax| g.d2(&v[i], ax, s)).sum();
                    let mut rate = -c.b * g.d1(&state.delta_rho, a, s)
                        + c.diffusion * g.d1(&div, a, s)
                        + c.diffusion * lap;
                    if state.advection {
                        let adv: f64 = perp.iter().zip(v).map(|(&ac, vc)| vc[s] * g.d1(&v[i], ac, s)).sum();
                        rate -= c.lambda1 * adv;
                    }
                    if let Some(nf) = &noise_fields {
                        rate += nf[i][s];
                    }
                    v[i][s] + dt * rate
                })
                .collect()
        })
        .collect();
    let new_rho: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|s| state.delta_rho[s] - dt * c.a_i * div[s])
        .collect();

    let step = state.step_count + 1;
    if let Some(s) = (0..n).find(|&s| !new_rho[s].is_finite() || new_v.iter().any(|f| !f[s].is_finite())) {
        return Err(HydroError::NonFinite {
            site: g.coords(s),
            step,
        });
    }
    Ok(GoldstoneState {
        grid: g.clone(),
        perp_axes: perp.clone(),
        v_perp: new_v,
        delta_rho: new_rho,
        coeffs: c,
        advection: state.advection,
        time: state.time + dt,
        step_count: step,
    })
}

/// Longitudinal diffusion constant of the discrete Goldstone operator for a
/// wave of wavenumber `k` along a transverse axis: the operator damps such a
/// wave at rate `D (sin^2(k dx) + 4 sin^2(k dx / 2)) / dx^2`, which is
/// `2 D_eff k^2`.
pub fn discrete_longitudinal_diffusion(diffusion: f64, k: f64, dx: f64) -> f64 {
    let wide = (k * dx).sin().powi(2);
    let compact = 4.0 * (0.5 * k * dx).sin().powi(2);
    diffusion * (wide + compact) / (dx * dx) / (2.0 * k * k)
}

/// `omega = -i D_eff k^2 +/- sqrt(A_I B k^2 - D_eff^2 k^4)`, `+` branch first.
pub fn goldstone_dispersion(k: f64, a_i: f64, b: f64, d_eff: f64) -> [Complex64; 2] {
    let damping = Complex64::new(0.0, -d_eff * k * k);
    let root = Complex64::new(a_i * b * k * k - d_eff * d_eff * k.powi(4), 0.0).sqrt();
    [damping + root, damping - root]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionPoint {
    pub k: f64,
    /// Measured complex frequencies, larger real part first.
    pub measured: [Complex64; 2],
    /// [`goldstone_dispersion`] with the discrete `D_eff`.
    pub predicted: [Complex64; 2],
    pub d_eff: f64,
}

/// Settings for [`measure_goldstone_dispersion`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionProbe {
    /// Wave index `n` of `k = 2 pi n / L` along the first transverse axis.
    pub mode: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub sample_every: usize,
    pub amplitude: f64,
}

impl Default for DispersionProbe {
    fn default() -> Self {
        Self {
            mode: 1,
            dt: 0.05,
            n_steps: 400,
            sample_every: 4,
            amplitude: 1e-3,
        }
    }
}

/// Launches a longitudinal plane wave `V = a cos(k y)`, records its Fourier
/// amplitude and recovers both complex frequencies with a two-term Prony fit.
pub fn measure_goldstone_dispersion(
    grid: &Grid,
    coeffs: GoldstoneCoefficients,
    probe: DispersionProbe,
) -> Result<DispersionPoint, HydroError> {
    let axis = 1;
    if grid.dims[axis] < 2 {
        return Err(HydroError::Invalid("axis 1 must be active".into()));
    }
    if probe.sample_every == 0 || probe.n_steps < 4 * probe.sample_every {
        return Err(HydroError::Invalid("need at least four samples".into()));
    }
    let n = grid.len();
    let k = 2.0 * PI * probe.mode as f64 / grid.box_length(axis);
    let mut state = GoldstoneState::zeros(grid.clone(), coeffs)?;
    for s in 0..n {
        state.v_perp[0][s] = probe.amplitude * (k * grid.coordinate(s, axis)).cos();
    }
    let phase: Vec<Complex64> = (0..n)
        .map(|s| Complex64::from_polar(1.0 / n as f64, -k * grid.coordinate(s, axis)))
        .collect();
    let project = |st: &GoldstoneState| -> Complex64 {
        st.v_perp[0].iter().zip(&phase).map(|(&x, &p)| p * x).sum()
    };

    let mut samples = vec![project(&state)];
    for i in 1..=probe.n_steps {
        state = step_goldstone(&state, probe.dt, None)?;
        if i % probe.sample_every == 0 {
            samples.push(project(&state));
        }
    }
    let roots = prony2(&samples)?;
    let mut measured = roots.map(|r| {
        let per_step = r.powf(1.0 / probe.sample_every as f64);
        let growth = (per_step - 1.0) / probe.dt;
        Complex64::new(0.0, 1.0) * growth
    });
    measured.sort_by(|a, b| b.re.total_cmp(&a.re));
    let d_eff = discrete_longitudinal_diffusion(coeffs.diffusion, k, grid.dx);
    Ok(DispersionPoint {
        k,
        measured,
        predicted: goldstone_dispersion(k, coeffs.a_i, coeffs.b, d_eff),
        d_eff,
    })
}

/// Least-squares fit of `x[n+2] = c1 x[n+1] + c0 x[n]`, returning the roots
/// of `r^2 - c1 r - c0`.
fn prony2(x: &[Complex64]) -> Result<[Complex64; 2], HydroError> {
    // normal equations for (c1, c0)
    let mut a11 = Complex64::new(0.0, 0.0);
    let mut a12 = a11;
    let mut a22 = a11;
    let mut b1 = a11;
    let mut b2 = a11;
    for w in x.windows(3) {
        let (p, q, y) = (w[1], w[0], w[2]);
        a11 += p.conj() * p;
        a12 += p.conj() * q;
        a22 += q.conj() * q;
        b1 += p.conj() * y;
        b2 += q.conj() * y;
    }
    let a21 = a12.conj();
    let det = a11 * a22 - a12 * a21;
    if det.norm() == 0.0 {
        return Err(HydroError::Invalid("degenerate dispersion fit".into()));
    }
    let c1 = (b1 * a22 - a12 * b2) / det;
    let c0 = (a11 * b2 - a21 * b1) / det;
    let disc = (c1 * c1 + 4.0 * c0).sqrt();
    Ok([(c1 + disc) / 2.0, (c1 - disc) / 2.0])
}

/// Least-squares slope through the origin of `Re omega_+` against `k`.
pub fn sound_speed(points: &[DispersionPoint]) -> f64 {
    let num: f64 = points.iter().map(|p| p.k * p.measured[0].re).sum();
    let den: f64 = points.iter().map(|p| p.k * p.k).sum();
    num / den
}
