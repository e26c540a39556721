//! Measurements on particle configurations and parameter sweeps.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{run, IntegratorConfig, ParticleState};
use crate::neighbor::minimum_image;
use crate::params::{Dimension, ModelParams};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservableError {
    #[error("order parameter of an empty population")]
    EmptyPopulation,
    #[error("no samples after the transient ({transient} of {len})")]
    EmptyWindow { transient: usize, len: usize },
    #[error("need at least 4 bins, got {0}")]
    TooFewBins(usize),
    #[error("band threshold factor must exceed 1, got {0}")]
    BadThreshold(f64),
    #[error("direction must be a non-zero vector")]
    ZeroDirection,
    #[error("malformed phase-diagram csv: {0}")]
    Csv(String),
}

/// Error raised by one grid point of a sweep.
#[derive(Debug, Error)]
#[error("sweep point (gamma_s_inv = {gamma_s_inv}, xi = {xi}) failed: {source}")]
pub struct SweepError {
    pub gamma_s_inv: f64,
    pub xi: f64,
    #[source]
    pub source: Box<crate::Error>,
}

/// `|mean of spins|`.
pub fn polar_order(spins: &[Vector3<f64>]) -> Result<f64, ObservableError> {
    if spins.is_empty() {
        return Err(ObservableError::EmptyPopulation);
    }
    let sum: Vector3<f64> = spins.iter().sum();
    Ok((sum / spins.len() as f64).norm())
}

/// Mean of `series[transient..]`.
pub fn time_averaged_order(series: &[f64], transient: usize) -> Result<f64, ObservableError> {
    let window = series.get(transient..).unwrap_or(&[]);
    if window.is_empty() {
        return Err(ObservableError::EmptyWindow {
            transient,
            len: series.len(),
        });
    }
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub box_length: f64,
    pub counts: Vec<usize>,
    /// Number density per slab.
    pub densities: Vec<f64>,
}

impl DensityProfile {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.box_length / self.n_bins() as f64
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        (b as f64 + 0.5) * self.bin_width()
    }

    pub fn mean_density(&self) -> f64 {
        self.densities.iter().sum::<f64>() / self.n_bins() as f64
    }
}

/// Histogram of `(r . direction) mod L`, normalized by slab volume.
pub fn density_profile(
    positions: &[Vector3<f64>],
    direction: &Vector3<f64>,
    n_bins: usize,
    box_length: f64,
    dims: Dimension,
) -> Result<DensityProfile, ObservableError> {
    if n_bins < 4 {
        return Err(ObservableError::TooFewBins(n_bins));
    }
    let norm = direction.norm();
    if !(norm > 0.0) {
        return Err(ObservableError::ZeroDirection);
    }
    let e = direction / norm;
    let width = box_length / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for r in positions {
        let x = crate::neighbor::wrap(r.dot(&e), box_length);
        counts[((x / width) as usize).min(n_bins - 1)] += 1;
    }
    let slab = width * box_length.powi(dims.get() as i32 - 1);
    let densities = counts.iter().map(|&c| c as f64 / slab).collect();
    Ok(DensityProfile {
        box_length,
        counts,
        densities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    /// First bin of the band.
    pub start_bin: usize,
    /// Number of bins; the band may wrap past the last bin.
    pub len_bins: usize,
    pub start: f64,
    /// End coordinate, reduced mod L (smaller than `start` for wrapping bands).
    pub end: f64,
    pub mean_density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandReport {
    pub direction: Vector3<f64>,
    pub profile: DensityProfile,
    pub bands: Vec<Band>,
    /// Maximum bin density over mean density.
    pub contrast: f64,
}

/// Finds circular runs of bins denser than `threshold_factor * mean`.
pub fn detect_bands(
    profile: &DensityProfile,
    direction: Vector3<f64>,
    threshold_factor: f64,
) -> Result<BandReport, ObservableError> {
    if !(threshold_factor > 1.0) {
        return Err(ObservableError::BadThreshold(threshold_factor));
    }
    let n = profile.n_bins();
    let mean = profile.mean_density();
    let max = profile.densities.iter().cloned().fold(f64::MIN, f64::max);
    let contrast = if mean > 0.0 { max / mean } else { 1.0 };
    let threshold = threshold_factor * mean;
    let dense: Vec<bool> = profile.densities.iter().map(|&d| d > threshold).collect();

    let mut bands = Vec::new();
    // Start scanning just after a sparse bin so that seam-crossing runs stay whole.
    if let Some(anchor) = dense.iter().position(|&d| !d) {
        let mut k = 0;
        while k < n {
            let b = (anchor + 1 + k) % n;
            if !dense[b] {
                k += 1;
                continue;
            }
            let start_bin = b;
            let mut len = 0;
            while k < n && dense[(anchor + 1 + k) % n] {
                len += 1;
                k += 1;
            }
            let total: f64 = (0..len).map(|o| profile.densities[(start_bin + o) % n]).sum();
            let w = profile.bin_width();
            bands.push(Band {
                start_bin,
                len_bins: len,
                start: start_bin as f64 * w,
                end: ((start_bin + len) % n) as f64 * w,
                mean_density: total / len as f64,
            });
        }
    }
    bands.sort_by_key(|b| b.start_bin);
    Ok(BandReport {
        direction,
        profile: profile.clone(),
        bands,
        contrast,
    })
}

/// Density profile along the global order direction followed by band detection.
pub fn band_report(
    state: &ParticleState,
    n_bins: usize,
    threshold_factor: f64,
) -> Result<BandReport, ObservableError> {
    let mut direction = state.mean_spin();
    if !(direction.norm() > 0.0) {
        direction = Vector3::x();
    }
    let direction = direction.normalize();
    let profile = density_profile(
        &state.positions,
        &direction,
        n_bins,
        state.box_length,
        state.dims,
    )?;
    detect_bands(&profile, direction, threshold_factor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationBin {
    pub r: f64,
    pub correlation: f64,
    pub pairs: u64,
}

/// Binned pair average of `S_i . S_j` against minimum-image distance.
///
/// Exploratory only: O(N^2) and far too noisy for exponent fits at desk scale.
pub fn velocity_correlation(
    positions: &[Vector3<f64>],
    spins: &[Vector3<f64>],
    box_length: f64,
    r_max: f64,
    n_bins: usize,
) -> Vec<CorrelationBin> {
    let width = r_max / n_bins as f64;
    let (sum, count) = (0..positions.len())
        .into_par_iter()
        .fold(
            || (vec![0.0; n_bins], vec![0u64; n_bins]),
            |(mut s, mut c), i| {
                for j in (i + 1)..positions.len() {
                    let r = minimum_image(positions[j] - positions[i], box_length).norm();
                    if r < r_max {
                        let b = ((r / width) as usize).min(n_bins - 1);
                        s[b] += spins[i].dot(&spins[j]);
                        c[b] += 1;
                    }
                }
                (s, c)
            },
        )
        .reduce(
            || (vec![0.0; n_bins], vec![0u64; n_bins]),
            |(mut s1, mut c1), (s2, c2)| {
                for b in 0..n_bins {
                    s1[b] += s2[b];
                    c1[b] += c2[b];
                }
                (s1, c1)
            },
        );
    (0..n_bins)
        .map(|b| CorrelationBin {
            r: (b as f64 + 0.5) * width,
            correlation: if count[b] > 0 { sum[b] / count[b] as f64 } else { 0.0 },
            pairs: count[b],
        })
        .collect()
}

/// Everything a sweep point needs apart from the two swept parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepBase {
    pub model: ModelParams,
    pub integrator: IntegratorConfig,
    pub box_length: f64,
    pub n_steps: u64,
    pub transient: u64,
}

impl SweepBase {
    /// Model, integrator and initial seed for grid point `(i, j)`.
    pub fn point(&self, i: usize, j: usize, gamma_s_inv: f64, xi: f64) -> (ModelParams, IntegratorConfig) {
        let seed = derive_seed(self.integrator.seed, i as u64, j as u64);
        let model = ModelParams {
            spin_relaxation: 1.0 / gamma_s_inv,
            noise_amplitude: xi,
            ..self.model
        };
        let integrator = IntegratorConfig {
            seed,
            ..self.integrator
        };
        (model, integrator)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    pub gamma_s_inv_axis: Vec<f64>,
    pub xi_axis: Vec<f64>,
    /// `phi[i][j]` for `gamma_s_inv_axis[i]`, `xi_axis[j]`.
    pub phi: Vec<Vec<f64>>,
    pub meta: String,
}

pub const PHASE_DIAGRAM_HEADER: &str = "gamma_s_inv,xi,phi";

impl PhaseDiagram {
    /// Long-format CSV, one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(PHASE_DIAGRAM_HEADER);
        out.push('\n');
        for (i, g) in self.gamma_s_inv_axis.iter().enumerate() {
            for (j, x) in self.xi_axis.iter().enumerate() {
                let _ = writeln!(out, "{g},{x},{}", self.phi[i][j]);
            }
        }
        out
    }

    pub fn from_csv(text: &str, meta: impl Into<String>) -> Result<Self, ObservableError> {
        let mut lines = text.lines();
        if lines.next() != Some(PHASE_DIAGRAM_HEADER) {
            return Err(ObservableError::Csv("missing header".into()));
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(ObservableError::Csv(format!("row {}: expected 3 fields", k + 1)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| ObservableError::Csv(format!("row {}: {e}", k + 1)))
            };
            rows.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
        }
        let mut g_axis: Vec<f64> = Vec::new();
        let mut x_axis: Vec<f64> = Vec::new();
        for &(g, x, _) in &rows {
            if !g_axis.contains(&g) {
                g_axis.push(g);
            }
            if !x_axis.contains(&x) {
                x_axis.push(x);
            }
        }
        if rows.len() != g_axis.len() * x_axis.len() {
            return Err(ObservableError::Csv("rows do not form a full grid".into()));
        }
        let mut phi = vec![vec![f64::NAN; x_axis.len()]; g_axis.len()];
        for (g, x, v) in rows {
            let i = g_axis.iter().position(|&a| a == g).unwrap();
            let j = x_axis.iter().position(|&a| a == x).unwrap();
            phi[i][j] = v;
        }
        Ok(Self {
            gamma_s_inv_axis: g_axis,
            xi_axis: x_axis,
            phi,
            meta: meta.into(),
        })
    }
}

/// One independent run per `(gamma_s_inv, xi)` grid point, in parallel.
pub fn sweep_phase_diagram(
    base: &SweepBase,
    gamma_s_inv_axis: &[f64],
    xi_axis: &[f64],
    meta: impl Into<String>,
) -> Result<PhaseDiagram, SweepError> {
    let points: Vec<(usize, usize)> = (0..gamma_s_inv_axis.len())
        .flat_map(|i| (0..xi_axis.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<f64, SweepError>> = points
        .par_iter()
        .map(|&(i, j)| {
            let (g, x) = (gamma_s_inv_axis[i], xi_axis[j]);
            let tag = |e: crate::Error| SweepError {
                gamma_s_inv: g,
                xi: x,
                source: Box::new(e),
            };
            let (model, integrator) = base.point(i, j, g, x);
            let init = ParticleState::for_params(&model, base.box_length, integrator.seed);
            let summary = run(init, &model, &integrator, base.n_steps, base.transient, &mut [])
                .map_err(tag)?;
            summary.mean_order.ok_or_else(|| {
                tag(ObservableError::EmptyWindow {
                    transient: base.transient as usize,
                    len: base.n_steps as usize,
                }
                .into())
            })
        })
        .collect();
    let mut phi = vec![vec![0.0; xi_axis.len()]; gamma_s_inv_axis.len()];
    for (&(i, j), r) in points.iter().zip(results) {
        phi[i][j] = r?;
    }
    Ok(PhaseDiagram {
        gamma_s_inv_axis: gamma_s_inv_axis.to_vec(),
        xi_axis: xi_axis.to_vec(),
        phi,
        meta: meta.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::random_unit;
    use crate::rng::keyed_rng;
    use proptest::prelude::*;

    fn profile_from(densities: Vec<f64>) -> DensityProfile {
        DensityProfile {
            box_length: densities.len() as f64,
            counts: densities.iter().map(|&d| d.round() as usize).collect(),
            densities,
        }
    }

    #[test]
    fn polar_order_extremes() {
        let s = Vector3::new(0.0, 0.6, 0.8);
        assert!((polar_order(&[s, s, s]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(polar_order(&[s, -s]).unwrap(), 0.0);
        assert_eq!(polar_order(&[]), Err(ObservableError::EmptyPopulation));
    }

    // For N isotropic unit vectors the norm of their mean is Maxwell distributed
    // in 3D (mean sqrt(8 / (3 pi N))) and Rayleigh distributed in 2D
    // (mean sqrt(pi / (4 N))).
    #[test]
    fn random_spins_order_matches_random_walk() {
        let n = 10_000;
        let trials = 200;
        for (dims, coeff) in [
            (Dimension::Three, (8.0 / (3.0 * std::f64::consts::PI)).sqrt()),
            (Dimension::Two, (std::f64::consts::PI / 4.0).sqrt()),
        ] {
            let samples: Vec<f64> = (0..trials)
                .map(|t| {
                    let mut rng = keyed_rng(77, t, 0);
                    let spins: Vec<_> = (0..n).map(|_| random_unit(dims, &mut rng)).collect();
                    polar_order(&spins).unwrap()
                })
                .collect();
            let mean = samples.iter().sum::<f64>() / trials as f64;
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
            let se = (var / trials as f64).sqrt();
            let expected = coeff / (n as f64).sqrt();
            assert!((mean - expected).abs() < 3.0 * se, "{dims}: {mean} vs {expected} (se {se})");
        }
    }

    #[test]
    fn time_average_cases() {
        assert_eq!(time_averaged_order(&[0.3; 10], 4).unwrap(), 0.3);
        let alt: Vec<f64> = (0..10).map(|k| (k % 2) as f64).collect();
        assert_eq!(time_averaged_order(&alt, 0).unwrap(), 0.5);
        assert!(time_averaged_order(&alt, 10).is_err());
        assert!(time_averaged_order(&alt, 11).is_err());

        let series: Vec<f64> = (0..1000).map(|k| ((k * 37) % 101) as f64 / 101.0).collect();
        let one_pass = time_averaged_order(&series, 100).unwrap();
        let w = &series[100..];
        let first = w.iter().sum::<f64>() / w.len() as f64;
        let two_pass = first + w.iter().map(|x| x - first).sum::<f64>() / w.len() as f64;
        assert!((one_pass - two_pass).abs() < 1e-14);
    }

    #[test]
    fn density_profile_cases() {
        let l = 10.0;
        let mut rng = keyed_rng(3, 0, 0);
        let uniform: Vec<Vector3<f64>> = (0..20_000)
            .map(|_| {
                use rand::Rng;
                Vector3::new(rng.random::<f64>() * l, rng.random::<f64>() * l, rng.random::<f64>() * l)
            })
            .collect();
        let rho = 20_000.0 / 1000.0;
        let prof = density_profile(&uniform, &Vector3::x(), 10, l, Dimension::Three).unwrap();
        assert_eq!(prof.counts.iter().sum::<usize>(), 20_000);
        for &d in &prof.densities {
            // 2000 expected per bin, Poisson sd ~ 45 -> 5 sd window
            assert!((d - rho).abs() < 5.0 * (2000f64).sqrt() / 100.0, "{d}");
        }

        let slab: Vec<_> = (0..50).map(|k| Vector3::new(2.1, k as f64 * 0.1, 0.3)).collect();
        let prof = density_profile(&slab, &Vector3::x(), 10, l, Dimension::Three).unwrap();
        assert_eq!(prof.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(prof.counts[2], 50);
        assert!(density_profile(&slab, &Vector3::x(), 3, l, Dimension::Three).is_err());
    }

    #[test]
    fn flat_profile_has_no_band() {
        let rep = detect_bands(&profile_from(vec![2.0; 16]), Vector3::x(), 1.5).unwrap();
        assert!(rep.bands.is_empty());
        assert!((rep.contrast - 1.0).abs() < 1e-15);
    }

    #[test]
    fn top_hat_gives_one_band() {
        // 3 rho over a quarter, rho' elsewhere with the same total as a flat rho profile
        let n = 64;
        let rho = 1.0;
        let low = (rho * n as f64 - 3.0 * rho * (n / 4) as f64) / (3 * n / 4) as f64;
        let d: Vec<f64> = (0..n).map(|b| if (16..32).contains(&b) { 3.0 * rho } else { low }).collect();
        let rep = detect_bands(&profile_from(d), Vector3::x(), 1.5).unwrap();
        assert_eq!(rep.bands.len(), 1);
        assert_eq!((rep.bands[0].start_bin, rep.bands[0].len_bins), (16, 16));
        assert!((rep.contrast - 3.0).abs() < 1e-12);
        assert!(detect_bands(&profile_from(vec![1.0; 8]), Vector3::x(), 1.0).is_err());
    }

    #[test]
    fn band_across_seam_is_one_segment() {
        let mut d = vec![1.0; 32];
        for b in [30, 31, 0, 1, 2] {
            d[b] = 4.0;
        }
        let rep = detect_bands(&profile_from(d), Vector3::x(), 1.5).unwrap();
        assert_eq!(rep.bands.len(), 1);
        assert_eq!((rep.bands[0].start_bin, rep.bands[0].len_bins), (30, 5));
        assert_eq!(rep.bands[0].end, 3.0);
    }

    #[test]
    fn phase_diagram_csv_round_trip() {
        let pd = PhaseDiagram {
            gamma_s_inv_axis: vec![0.2, 1.0, 5.0],
            xi_axis: vec![0.1, 1.5],
            phi: vec![vec![0.9, 0.1], vec![0.7, 0.05], vec![0.4, 0.02]],
            meta: "x".into(),
        };
        let back = PhaseDiagram::from_csv(&pd.to_csv(), "x").unwrap();
        assert_eq!(back, pd);
        assert_eq!(pd.to_csv().lines().count(), 1 + 6);
    }

    proptest! {
        #[test]
        fn polar_order_is_rotation_invariant(seed in 0u64..1000, ax in -1.0f64..1.0, ay in -1.0f64..1.0, angle in 0.0f64..std::f64::consts::TAU) {
            let mut rng = keyed_rng(seed, 0, 0);
            let spins: Vec<_> = (0..50).map(|_| random_unit(Dimension::Three, &mut rng)).collect();
            let axis = nalgebra::Unit::new_normalize(Vector3::new(ax, ay, 0.5));
            let rot = nalgebra::Rotation3::from_axis_angle(&axis, angle);
            let rotated: Vec<_> = spins.iter().map(|s| rot * s).collect();
            prop_assert!((polar_order(&spins).unwrap() - polar_order(&rotated).unwrap()).abs() < 1e-14);
        }

        #[test]
        fn profile_conserves_counts(seed in 0u64..1000, n_bins in 4usize..100, dx in -1.0f64..1.0, dy in -1.0f64..1.0) {
            use rand::Rng;
            let mut rng = keyed_rng(seed, 1, 0);
            let pos: Vec<_> = (0..300).map(|_| Vector3::new(rng.random::<f64>() * 7.0, rng.random::<f64>() * 7.0, rng.random::<f64>() * 7.0)).collect();
            let prof = density_profile(&pos, &Vector3::new(dx, dy, 0.3), n_bins, 7.0, Dimension::Three).unwrap();
            prop_assert_eq!(prof.counts.iter().sum::<usize>(), 300);
        }

        #[test]
        fn bands_invariant_under_cyclic_shift(values in proptest::collection::vec(0.0f64..5.0, 4..64), shift in 0usize..64) {
            let n = values.len();
            let shifted: Vec<f64> = (0..n).map(|b| values[(b + shift) % n]).collect();
            let a = detect_bands(&profile_from(values), Vector3::x(), 1.5).unwrap();
            let b = detect_bands(&profile_from(shifted), Vector3::x(), 1.5).unwrap();
            let mut la: Vec<usize> = a.bands.iter().map(|x| x.len_bins).collect();
            let mut lb: Vec<usize> = b.bands.iter().map(|x| x.len_bins).collect();
            la.sort_unstable();
            lb.sort_unstable();
            prop_assert_eq!(la, lb);
            prop_assert!((a.contrast - b.contrast).abs() < 1e-12);
        }
    }
}
