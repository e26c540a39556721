//! Run orchestration: one output directory per run, CSV artifacts, snapshots,
//! gnuplot scripts and a manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde_json::{json, Map, Value};

use crate::config::{HydroSystem, Mode, RunConfig};
use crate::dynamics::{run, ParticleState, Recorder};
use crate::hydro::{
    measure_goldstone_dispersion, sound_speed, step_full, DispersionPoint, DispersionProbe, FieldNoise,
    FluidConstants, GoldstoneCoefficients, Grid, HydroFields,
};
use crate::io::{self, gnuplot_script, write_file, Manifest};
use crate::observables::{band_report, sweep_phase_diagram, velocity_correlation, SweepBase};
use crate::params::{hydro_coefficients, landau_coefficients, HydroCoefficients};
use crate::rg::{exponent_report, fixed_point_exponents, integrate_flow, RgState};
use crate::rng::{fnv1a64, keyed_rng};
use crate::{Error, Result};

/// Environment variable consulted when no thread count is given.
pub const THREADS_ENV: &str = "QVM_THREADS";

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub output: PathBuf,
    pub artifacts: Vec<String>,
    /// Text for standard output (the exponent report for `rg`).
    pub report: String,
}

/// `--threads`, then `QVM_THREADS`, then rayon's default.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Other(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Runs `cfg` on a dedicated pool of `threads` workers (rayon default when `None`).
pub fn run_command(cfg: &RunConfig, threads: Option<usize>) -> Result<Outcome> {
    cfg.validate()?;
    if threads == Some(0) {
        return Err(Error::Other("thread count must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Other(e.to_string()))?;
    let started = Instant::now();
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).map_err(io::io_err(&dir))?;

    let mut run = RunArtifacts {
        dir: dir.clone(),
        names: Vec::new(),
        summary: Map::new(),
        report: String::new(),
    };
    pool.install(|| match cfg.mode {
        Mode::Simulate => simulate(cfg, &mut run),
        Mode::Sweep => sweep(cfg, &mut run),
        Mode::Hydro => hydro(cfg, &mut run),
        Mode::Rg => rg(cfg, &mut run),
        Mode::Analyze => analyze(cfg, &mut run),
    })?;

    let manifest = Manifest {
        mode: cfg.mode.to_string(),
        seed: cfg.seed,
        threads: pool.current_num_threads(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.to_text(),
        artifacts: run.names.clone(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        summary: run.summary,
    };
    manifest.write(&dir)?;
    Ok(Outcome {
        output: dir,
        artifacts: run.names,
        report: run.report,
    })
}

struct RunArtifacts {
    dir: PathBuf,
    names: Vec<String>,
    summary: Map<String, Value>,
    report: String,
}

impl RunArtifacts {
    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        write_file(&self.dir.join(name), contents)?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }

    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }
}

struct SnapshotRecorder {
    dir: PathBuf,
    every: u64,
    written: Vec<String>,
}

impl Recorder for SnapshotRecorder {
    fn record(&mut self, state: &ParticleState) -> Result<()> {
        if self.every > 0 && state.step_count.is_multiple_of(self.every) {
            let name = format!("snapshots/step_{:08}.qvm", state.step_count);
            io::write_snapshot(&self.dir.join(&name), state)?;
            self.written.push(name);
        }
        Ok(())
    }
}

struct BandRecorder {
    every: u64,
    n_bins: usize,
    threshold_factor: f64,
    rows: Vec<(u64, f64, usize, f64)>,
}

impl Recorder for BandRecorder {
    fn record(&mut self, state: &ParticleState) -> Result<()> {
        if self.every > 0 && state.step_count.is_multiple_of(self.every) {
            let r = band_report(state, self.n_bins, self.threshold_factor)?;
            self.rows.push((state.step_count, state.time, r.bands.len(), r.contrast));
        }
        Ok(())
    }
}

fn simulate(cfg: &RunConfig, out: &mut RunArtifacts) -> Result<()> {
    let s = &cfg.simulate;
    let init = ParticleState::for_params(&cfg.model, cfg.box_length, cfg.seed);
    let mut snaps = SnapshotRecorder {
        dir: out.dir.clone(),
        every: s.snapshot_every,
        written: Vec::new(),
    };
    let mut bands = BandRecorder {
        every: s.band_every,
        n_bins: s.n_bins,
        threshold_factor: s.threshold_factor,
        rows: Vec::new(),
    };
    let n_particles = init.len();
    let summary = run(init, &cfg.model, &cfg.integrator, s.n_steps, s.transient, &mut [&mut snaps, &mut bands])?;
    out.names.extend(snaps.written);
    out.write("order.csv", io::order_series_csv(&summary.order_series))?;
    out.write(
        "order.gp",
        gnuplot_script("order.csv", "polar order", 2, &[(3, "phi")], "time", "phi"),
    )?;
    if s.band_every > 0 {
        let mut csv = String::from("step,time,n_bands,contrast\n");
        for (step, t, n, c) in &bands.rows {
            let _ = writeln!(csv, "{step},{t},{n},{c}");
        }
        out.write("bands.csv", csv)?;
        let hits = bands.rows.iter().filter(|r| r.2 >= 1 && r.3 >= 2.0).count();
        if !bands.rows.is_empty() {
            out.note("band_fraction", hits as f64 / bands.rows.len() as f64);
        }
    }
    let path = out.path("final.qvm");
    io::write_snapshot(&path, &summary.final_state)?;
    let report = band_report(&summary.final_state, s.n_bins, s.threshold_factor)?;
    out.write("final_profile.csv", io::profile_csv(&report.profile))?;
    out.write(
        "final_profile.gp",
        gnuplot_script("final_profile.csv", "density along the order direction", 1, &[(2, "density")], "x", "density"),
    )?;
    out.note("particles", n_particles as u64);
    out.note("measurements", summary.order_series.len() as u64);
    if let Some(m) = summary.mean_order {
        out.note("mean_order", m);
    }
    Ok(())
}

fn sweep(cfg: &RunConfig, out: &mut RunArtifacts) -> Result<()> {
    let base = SweepBase {
        model: cfg.model,
        integrator: cfg.integrator,
        box_length: cfg.box_length,
        n_steps: cfg.simulate.n_steps,
        transient: cfg.simulate.transient,
    };
    let meta = format!("{:016x}", fnv1a64(cfg.to_text().as_bytes()));
    let pd = sweep_phase_diagram(&base, &cfg.sweep.gamma_s_inv, &cfg.sweep.xi, meta.clone())?;
    out.write("phase_diagram.csv", pd.to_csv())?;
    let script = "set datafile separator ','\n\
        set xlabel 'gamma_s^{-1}'\nset ylabel 'xi'\nset cblabel 'phi'\n\
        set view map\nset logscale x\n\
        splot 'phase_diagram.csv' every ::1 using 1:2:3 with points pointtype 5 pointsize 3 palette notitle\n";
    out.write("phase_diagram.gp", script)?;
    out.note("config_hash", meta);
    out.note("points", (pd.gamma_s_inv_axis.len() * pd.xi_axis.len()) as u64);
    Ok(())
}

fn hydro_coeffs(cfg: &RunConfig) -> Result<HydroCoefficients> {
    let h = &cfg.hydro;
    let landau = landau_coefficients(&cfg.model, cfg.model.expected_neighbors())?;
    Ok(hydro_coefficients(&cfg.model, &landau, h.xi_align, h.a_i, h.lambda_cut)?)
}

fn hydro(cfg: &RunConfig, out: &mut RunArtifacts) -> Result<()> {
    let h = &cfg.hydro;
    let coeffs = hydro_coeffs(cfg)?;
    let grid = Grid::new(h.grid, h.dx)?;
    out.note("lambda_tilde", coeffs.lambda_tilde);
    out.note("eta_tilde", coeffs.eta_tilde);
    out.note("lambda1", coeffs.lambda1);
    out.note("B", coeffs.b);
    out.note("D", coeffs.diffusion);
    out.note("Delta", coeffs.delta);
    match h.system {
        HydroSystem::Full => hydro_full(cfg, grid, coeffs, out),
        HydroSystem::Goldstone => hydro_goldstone(cfg, grid, coeffs, out),
    }
}

fn hydro_full(cfg: &RunConfig, grid: Grid, coeffs: HydroCoefficients, out: &mut RunArtifacts) -> Result<()> {
    let h = &cfg.hydro;
    let mut fields = HydroFields::uniform_flock(grid, cfg.model.density, coeffs, FluidConstants::from(&cfg.model))?;
    if h.perturbation != 0.0 {
        let n = fields.grid.len();
        for a in fields.grid.active_axes() {
            let mut rng = keyed_rng(cfg.seed, u64::MAX, a as u64);
            for s in 0..n {
                fields.velocity[a][s] += h.perturbation * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
    }
    let noise = h.noise.then(|| FieldNoise::new(&fields.grid, cfg.seed));
    let mass0 = fields.total_mass();
    let mut csv = String::from("step,time,mass,mean_vx,mean_vy,mean_vz,max_speed\n");
    let row = |f: &HydroFields, csv: &mut String| {
        let n = f.grid.len() as f64;
        let mean = |a: usize| f.velocity[a].iter().sum::<f64>() / n;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            f.step_count,
            f.time,
            f.total_mass(),
            mean(0),
            mean(1),
            mean(2),
            f.max_speed()
        );
    };
    row(&fields, &mut csv);
    for _ in 0..h.n_steps {
        fields = step_full(&fields, h.dt, noise.as_ref())?;
        row(&fields, &mut csv);
        if h.snapshot_every > 0 && fields.step_count % h.snapshot_every == 0 {
            let name = format!("snapshots/step_{:08}.qvh", fields.step_count);
            let path = out.path(&name);
            io::write_field_snapshot(&path, &fields)?;
        }
    }
    out.write("hydro_series.csv", csv)?;
    out.write(
        "hydro_series.gp",
        gnuplot_script("hydro_series.csv", "mean velocity", 2, &[(4, "mean_vx"), (5, "mean_vy"), (6, "mean_vz")], "time", "V"),
    )?;
    let path = out.path("final.qvh");
    io::write_field_snapshot(&path, &fields)?;
    out.note("mass_drift", (fields.total_mass() - mass0).abs() / mass0);
    out.note("flock_speed", coeffs.flock_speed_sq().sqrt());
    Ok(())
}

fn hydro_goldstone(cfg: &RunConfig, grid: Grid, coeffs: HydroCoefficients, out: &mut RunArtifacts) -> Result<()> {
    let h = &cfg.hydro;
    let gc = GoldstoneCoefficients::from(&coeffs);
    let probe = DispersionProbe {
        mode: 1,
        dt: h.dt,
        n_steps: h.n_steps as usize,
        sample_every: (h.n_steps as usize / 200).max(1),
        amplitude: 1e-3,
    };
    let points: Vec<DispersionPoint> = h
        .modes
        .iter()
        .map(|&mode| measure_goldstone_dispersion(&grid, gc, DispersionProbe { mode, ..probe }))
        .collect::<std::result::Result<_, _>>()?;
    out.write("dispersion.csv", dispersion_csv(&points))?;
    out.write(
        "dispersion.gp",
        "set datafile separator ','\nset xlabel 'k'\nset ylabel 'omega'\n\
         plot 'dispersion.csv' every ::1 using 1:3 title 'Re omega', \\\n     \
         '' every ::1 using 1:4 title 'Im omega', \\\n     \
         '' every ::1 using 1:5 with lines title 'Re omega (theory)', \\\n     \
         '' every ::1 using 1:6 with lines title 'Im omega (theory)'\n",
    )?;
    out.note("sound_speed", sound_speed(&points));
    out.note("sound_speed_theory", (gc.a_i * gc.b).sqrt());
    Ok(())
}

pub fn dispersion_csv(points: &[DispersionPoint]) -> String {
    let mut csv = String::from("k,branch,re_omega,im_omega,re_omega_theory,im_omega_theory\n");
    for p in points {
        for (b, (m, t)) in p.measured.iter().zip(&p.predicted).enumerate() {
            let sign = if b == 0 { "+" } else { "-" };
            let _ = writeln!(csv, "{},{sign},{},{},{},{}", p.k, m.re, m.im, t.re, t.im);
        }
    }
    csv
}

fn rg(cfg: &RunConfig, out: &mut RunArtifacts) -> Result<()> {
    let r = &cfg.rg;
    let e = fixed_point_exponents();
    let report = exponent_report(&e, r.f31);
    out.write("exponents.txt", &report)?;
    let traj = integrate_flow(RgState::with_reduced_coupling(r.lambda_bar_sq), &e, r.f31, r.l_max, r.dl)?;
    out.write("flow.csv", traj.to_csv())?;
    out.write(
        "flow.gp",
        gnuplot_script("flow.csv", "reduced coupling flow", 1, &[(6, "lambda_bar_sq")], "l", "lambda_bar_sq"),
    )?;
    out.note("z", e.z);
    out.note("chi", e.chi);
    out.note("chi_rho", e.chi_rho);
    out.note("lambda_bar_sq_final", traj.last().lambda_bar_sq());
    out.note("chain_rule_defect", traj.chain_rule_defect(&e));
    out.report = report;
    Ok(())
}

fn analyze(cfg: &RunConfig, out: &mut RunArtifacts) -> Result<()> {
    let a = &cfg.analyze;
    let path: &Path = a.snapshot.as_deref().expect("validated");
    let state = io::read_snapshot(path)?;
    let phi = crate::observables::polar_order(&state.spins)?;
    let report = band_report(&state, a.n_bins, a.threshold_factor)?;
    out.write("profile.csv", io::profile_csv(&report.profile))?;
    let mut bands = String::from("start,end,mean_density\n");
    for b in &report.bands {
        let _ = writeln!(bands, "{},{},{}", b.start, b.end, b.mean_density);
    }
    out.write("bands.csv", bands)?;
    let corr = velocity_correlation(&state.positions, &state.spins, state.box_length, a.r_max, a.correlation_bins);
    let mut csv = String::from("r,correlation,pairs\n");
    for c in &corr {
        let _ = writeln!(csv, "{},{},{}", c.r, c.correlation, c.pairs);
    }
    out.write("correlation.csv", csv)?;
    out.write(
        "profile.gp",
        gnuplot_script("profile.csv", "density along the order direction", 1, &[(2, "density")], "x", "density"),
    )?;
    out.write(
        "correlation.gp",
        gnuplot_script("correlation.csv", "spin correlation", 1, &[(2, "C(r)")], "r", "C"),
    )?;
    out.note("phi", phi);
    out.note("bands", report.bands.len() as u64);
    out.note("contrast", report.contrast);
    out.note("particles", state.len() as u64);
    out.summary.insert("snapshot".into(), json!(path.display().to_string()));
    Ok(())
}
