//! Oracles shared by the integration tests and the acceptance suite. Nothing
//! here calls into the library code it is used to check.
#![allow(dead_code, clippy::needless_range_loop)]

use num_complex::Complex64;
use qvm::Vector3;
use rand::Rng;

/// O(N^2) neighbor lists over the 27 (or 9) periodic images, self included.
pub fn brute_neighbors(positions: &[Vector3<f64>], box_length: f64, r_c: f64, dims: usize) -> Vec<Vec<usize>> {
    let shifts: Vec<Vector3<f64>> = {
        let range = [-1.0, 0.0, 1.0];
        let mut v = Vec::new();
        for &a in &range {
            for &b in &range {
                for &c in &range {
                    if dims == 2 && c != 0.0 {
                        continue;
                    }
                    v.push(Vector3::new(a, b, c) * box_length);
                }
            }
        }
        v
    };
    (0..positions.len())
        .map(|j| {
            (0..positions.len())
                .filter(|&i| {
                    let d = positions[i] - positions[j];
                    shifts.iter().map(|s| (d + s).norm_squared()).fold(f64::INFINITY, f64::min) <= r_c * r_c
                })
                .collect()
        })
        .collect()
}

/// Uniform positions in `[0, L)`, with a fraction pushed against the faces so
/// that periodic pairs are common.
pub fn random_positions(rng: &mut impl Rng, n: usize, box_length: f64, dims: usize, edge_fraction: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            let mut p = Vector3::zeros();
            for c in 0..dims {
                p[c] = rng.random::<f64>() * box_length;
            }
            if rng.random::<f64>() < edge_fraction {
                let c = rng.random_range(0..dims);
                let near_top = rng.random::<bool>();
                let offset = rng.random::<f64>() * 0.5;
                let x = if near_top { box_length - offset } else { offset };
                p[c] = if x >= box_length { 0.0 } else { x };
            }
            p
        })
        .collect()
}

/// Adaptive Dormand-Prince 5(4) integration of `y' = f(y)` from 0 to `t_end`.
pub fn dopri45(f: impl Fn(&[f64]) -> Vec<f64>, y0: &[f64], t_end: f64, tol: f64) -> Vec<f64> {
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = 0.0f64;
    let mut h = 1e-3f64;
    while t < t_end {
        h = h.min(t_end - t);
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let ys: Vec<f64> = (0..n)
                .map(|i| y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>())
                .collect();
            k.push(f(&ys));
        }
        let y5: Vec<f64> = (0..n).map(|i| y[i] + h * (0..7).map(|s| B5[s] * k[s][i]).sum::<f64>()).collect();
        let err = (0..n)
            .map(|i| h * (0..7).map(|s| (B5[s] - B4[s]) * k[s][i]).sum::<f64>())
            .map(|e| e.abs())
            .fold(0.0, f64::max);
        if err <= tol {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    y
}

/// Projected spin ODE for particles that all see each other:
/// `S' = f - (S.f) S` with `f = -(J n / 2) (S_bar x S) - gamma_s (S - S_bar)`.
pub fn all_to_all_spin_rhs(y: &[f64], coupling: f64, gamma_s: f64) -> Vec<f64> {
    let n = y.len() / 3;
    let spins: Vec<Vector3<f64>> = (0..n).map(|j| Vector3::new(y[3 * j], y[3 * j + 1], y[3 * j + 2])).collect();
    let mean = spins.iter().sum::<Vector3<f64>>() / n as f64;
    let mut out = Vec::with_capacity(y.len());
    for s in &spins {
        let f = -(mean * (0.5 * coupling * n as f64)).cross(s) - (s - mean) * gamma_s;
        let g = f - s * s.dot(&f);
        out.extend_from_slice(&[g.x, g.y, g.z]);
    }
    out
}

/// Roots `r` of `r^2 - c1 r - c0` for the least-squares recurrence through `x`.
pub fn prony_roots(x: &[Complex64]) -> [Complex64; 2] {
    // solve the 2x2 least-squares problem via its normal equations
    let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
    let mut rhs = [Complex64::new(0.0, 0.0); 2];
    for w in x.windows(3) {
        let row = [w[1], w[0]];
        for a in 0..2 {
            for b in 0..2 {
                m[a][b] += row[a].conj() * row[b];
            }
            rhs[a] += row[a].conj() * w[2];
        }
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let c1 = (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det;
    let c0 = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
    let disc = (c1 * c1 + 4.0 * c0).sqrt();
    [(c1 + disc) / 2.0, (c1 - disc) / 2.0]
}

/// Converts recurrence roots over `stride` explicit steps of size `dt` into
/// growth rates `mu` of `x ~ exp(mu t)`, sorted by imaginary part (descending).
pub fn rates_from_roots(roots: [Complex64; 2], stride: usize, dt: f64) -> [Complex64; 2] {
    let mut mu = roots.map(|r| (r.powf(1.0 / stride as f64) - 1.0) / dt);
    mu.sort_by(|a, b| b.im.total_cmp(&a.im));
    mu
}

/// Eigenvalues of a complex 2x2 matrix, sorted by imaginary part (descending).
pub fn eig2(m: [[Complex64; 2]; 2]) -> [Complex64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr / 4.0 - det).sqrt();
    let mut e = [tr / 2.0 + disc, tr / 2.0 - disc];
    e.sort_by(|a, b| b.im.total_cmp(&a.im));
    e
}

/// Growth rates of the discrete Goldstone operator for a plane wave along a
/// transverse axis: central first differences, compact Laplacian.
pub fn goldstone_discrete_rates(k: f64, dx: f64, a_i: f64, b: f64, diffusion: f64) -> [Complex64; 2] {
    let i = Complex64::new(0.0, 1.0);
    let s = (k * dx).sin() / dx;
    let c2 = 4.0 * (0.5 * k * dx).sin().powi(2) / (dx * dx);
    // (V, delta_rho)
    eig2([
        [Complex64::from(-diffusion * (s * s + c2)), -i * b * s],
        [-i * a_i * s, Complex64::from(0.0)],
    ])
}

/// Relative distance between two complex numbers.
pub fn rel_err(measured: Complex64, expected: Complex64) -> f64 {
    (measured - expected).norm() / expected.norm()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
