//! Dynamic renormalization-group recursion relations.
//!
//! The flow variables are the diffusion `D`, the noise strength `Delta`, the
//! advection coupling `lambda1` and the pressure coupling `B`. With the
//! reduced coupling `g = lambda1^2 Delta / D^3` and a lowest-order loop
//! coefficient `F31`:
//!
//! ```text
//! dD/dl       = D       [z - 2 + F31 g]
//! dDelta/dl   = Delta   [z - 2 chi - 3 + F31 g]
//! dlambda1/dl = lambda1 [z + chi - 1]
//! dB/dl       = B       [chi_rho - 1 + z - chi]
//! ```
//!
//! Combining the four lines gives the gauge-independent closed equation
//! `dg/dl = g (1 - 2 F31 g)`.

use std::fmt::Write as _;

use num_rational::Rational64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RgError {
    #[error("flow became non-finite at l = {l}")]
    NonFinite { l: f64 },
    #[error("invalid flow setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgState {
    pub diffusion: f64,
    pub delta: f64,
    pub lambda1: f64,
    pub b: f64,
    pub l: f64,
}

impl RgState {
    pub fn new(diffusion: f64, delta: f64, lambda1: f64, b: f64) -> Self {
        Self {
            diffusion,
            delta,
            lambda1,
            b,
            l: 0.0,
        }
    }

    /// State with `D = Delta = B = 1` and `lambda1` chosen so that the reduced
    /// coupling equals `g`.
    pub fn with_reduced_coupling(g: f64) -> Self {
        Self::new(1.0, 1.0, g.sqrt(), 1.0)
    }

    /// `lambda1^2 Delta / D^3`.
    pub fn lambda_bar_sq(&self) -> f64 {
        self.lambda1 * self.lambda1 * self.delta / self.diffusion.powi(3)
    }
}

/// Scaling exponents; also used as the gauge of [`flow_rhs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub z: f64,
    pub chi: f64,
    pub chi_rho: f64,
    /// `F31 g` at the fixed point.
    pub coupling_at_fp: f64,
}

/// Exact rational solution of the four bracket-zero conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RationalExponents {
    pub z: Rational64,
    pub chi: Rational64,
    pub chi_rho: Rational64,
    pub coupling_at_fp: Rational64,
}

impl RationalExponents {
    pub fn to_f64(&self) -> Exponents {
        let f = |r: Rational64| *r.numer() as f64 / *r.denom() as f64;
        Exponents {
            z: f(self.z),
            chi: f(self.chi),
            chi_rho: f(self.chi_rho),
            coupling_at_fp: f(self.coupling_at_fp),
        }
    }
}

/// Gauss-Jordan elimination over the rationals. Returns `None` for singular systems.
fn solve_rational<const N: usize>(
    mut a: [[Rational64; N]; N],
    mut rhs: [Rational64; N],
) -> Option<[Rational64; N]> {
    let zero = Rational64::from_integer(0);
    for col in 0..N {
        let pivot = (col..N).find(|&r| a[r][col] != zero)?;
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        let p = a[col][col];
        for c in 0..N {
            a[col][c] /= p;
        }
        rhs[col] /= p;
        for r in 0..N {
            if r != col && a[r][col] != zero {
                let factor = a[r][col];
                for c in 0..N {
                    let v = a[col][c];
                    a[r][c] -= factor * v;
                }
                let v = rhs[col];
                rhs[r] -= factor * v;
            }
        }
    }
    Some(rhs)
}

fn int(v: i64) -> Rational64 {
    Rational64::from_integer(v)
}

/// Nontrivial fixed point: unknowns `(z, chi, chi_rho, F31 g)`.
pub fn fixed_point_exponents_exact() -> RationalExponents {
    let a = [
        [int(1), int(0), int(0), int(1)],
        [int(1), int(-2), int(0), int(1)],
        [int(1), int(1), int(0), int(0)],
        [int(1), int(-1), int(1), int(0)],
    ];
    let rhs = [int(2), int(3), int(1), int(1)];
    let [z, chi, chi_rho, g] = solve_rational(a, rhs).expect("fixed-point system is nonsingular");
    RationalExponents {
        z,
        chi,
        chi_rho,
        coupling_at_fp: g,
    }
}

pub fn fixed_point_exponents() -> Exponents {
    fixed_point_exponents_exact().to_f64()
}

/// Gaussian fixed point (`g = 0`): the `lambda1` condition drops out and the
/// `D`, `Delta`, `B` brackets fix `(z, chi, chi_rho)`.
pub fn linear_fixed_point_exponents_exact() -> RationalExponents {
    let a = [
        [int(1), int(0), int(0)],
        [int(1), int(-2), int(0)],
        [int(1), int(-1), int(1)],
    ];
    let rhs = [int(2), int(3), int(1)];
    let [z, chi, chi_rho] = solve_rational(a, rhs).expect("linear system is nonsingular");
    RationalExponents {
        z,
        chi,
        chi_rho,
        coupling_at_fp: int(0),
    }
}

/// The four bracket values `[z-2+g, z-2chi-3+g, z+chi-1, chi_rho-1+z-chi]`.
pub fn bracket_residuals(e: &Exponents) -> [f64; 4] {
    let g = e.coupling_at_fp;
    [
        e.z - 2.0 + g,
        e.z - 2.0 * e.chi - 3.0 + g,
        e.z + e.chi - 1.0,
        e.chi_rho - 1.0 + e.z - e.chi,
    ]
}

/// Derivatives `(dD, dDelta, dlambda1, dB)` with respect to `l`.
pub fn flow_rhs(s: &RgState, gauge: &Exponents, f31: f64) -> [f64; 4] {
    let g = f31 * s.lambda_bar_sq();
    [
        s.diffusion * (gauge.z - 2.0 + g),
        s.delta * (gauge.z - 2.0 * gauge.chi - 3.0 + g),
        s.lambda1 * (gauge.z + gauge.chi - 1.0),
        s.b * (gauge.chi_rho - 1.0 + gauge.z - gauge.chi),
    ]
}

/// Closed-form solution of `dg/dl = g (1 - 2 F31 g)`.
pub fn logistic_coupling(g0: f64, f31: f64, l: f64) -> f64 {
    let e = l.exp();
    g0 * e / (1.0 + 2.0 * f31 * g0 * (e - 1.0))
}

/// Right-hand side of the closed reduced-coupling equation.
pub fn reduced_coupling_rhs(g: f64, f31: f64) -> f64 {
    g * (1.0 - 2.0 * f31 * g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub f31: f64,
    pub points: Vec<RgState>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &RgState {
        self.points.last().expect("trajectory always holds the initial state")
    }

    /// Largest deviation between the chain-rule derivative of `g` (from the
    /// four flows) and the closed equation, relative to `max(|g'|, g)`.
    pub fn chain_rule_defect(&self, gauge: &Exponents) -> f64 {
        self.points
            .iter()
            .map(|s| {
                let [dd, ddelta, dl1, _] = flow_rhs(s, gauge, self.f31);
                let g = s.lambda_bar_sq();
                let chain = g * (2.0 * dl1 / s.lambda1 + ddelta / s.delta - 3.0 * dd / s.diffusion);
                let closed = reduced_coupling_rhs(g, self.f31);
                (chain - closed).abs() / closed.abs().max(g).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    pub const CSV_HEADER: &'static str = "l,D,Delta,lambda1,B,lambda_bar_sq";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.l,
                s.diffusion,
                s.delta,
                s.lambda1,
                s.b,
                s.lambda_bar_sq()
            );
        }
        out
    }
}

/// Classical RK4 integration of the four flows from `l = 0` to `l_max`.
pub fn integrate_flow(
    initial: RgState,
    gauge: &Exponents,
    f31: f64,
    l_max: f64,
    dl: f64,
) -> Result<FlowTrajectory, RgError> {
    if !(dl > 0.0) || !(l_max >= 0.0) {
        return Err(RgError::Invalid(format!("need dl > 0 and l_max >= 0, got {dl}, {l_max}")));
    }
    if !(initial.diffusion > 0.0) || !(initial.delta >= 0.0) {
        return Err(RgError::Invalid("need D > 0 and Delta >= 0".into()));
    }
    let n = (l_max / dl).round() as usize;
    let h = l_max / n.max(1) as f64;
    let mut points = Vec::with_capacity(n + 1);
    let mut s = initial;
    points.push(s);
    let shifted = |s: &RgState, k: &[f64; 4], c: f64| RgState {
        diffusion: s.diffusion + c * k[0],
        delta: s.delta + c * k[1],
        lambda1: s.lambda1 + c * k[2],
        b: s.b + c * k[3],
        l: s.l,
    };
    for i in 1..=n {
        let k1 = flow_rhs(&s, gauge, f31);
        let k2 = flow_rhs(&shifted(&s, &k1, h / 2.0), gauge, f31);
        let k3 = flow_rhs(&shifted(&s, &k2, h / 2.0), gauge, f31);
        let k4 = flow_rhs(&shifted(&s, &k3, h), gauge, f31);
        let mut k = [0.0; 4];
        for c in 0..4 {
            k[c] = (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) / 6.0;
        }
        s = shifted(&s, &k, h);
        s.l = i as f64 * h;
        let values = [s.diffusion, s.delta, s.lambda1, s.b];
        if values.iter().any(|v| !v.is_finite()) || !(s.diffusion > 0.0) {
            return Err(RgError::NonFinite { l: s.l });
        }
        points.push(s);
    }
    Ok(FlowTrajectory { f31, points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub long_range_order: bool,
    pub report: String,
}

/// Long-range order exists iff the roughness exponent is negative.
pub fn long_range_order_verdict(e: &Exponents) -> Verdict {
    let long_range_order = e.chi < 0.0;
    let report = if long_range_order {
        format!("chi = {} < 0: velocity fluctuations shrink with scale, true long-range order", e.chi)
    } else {
        format!("chi = {} >= 0: fluctuations do not shrink with scale, no long-range order", e.chi)
    };
    Verdict {
        long_range_order,
        report,
    }
}

/// Plain-text exponent report used by the CLI.
pub fn exponent_report(e: &Exponents, f31: f64) -> String {
    let v = long_range_order_verdict(e);
    let mut out = String::new();
    let _ = writeln!(out, "z = {}", e.z);
    let _ = writeln!(out, "chi = {}", e.chi);
    let _ = writeln!(out, "chi_rho = {}", e.chi_rho);
    let _ = writeln!(out, "F31 * lambda_bar_sq* = {}", e.coupling_at_fp);
    let _ = writeln!(out, "F31 = {f31}");
    let _ = writeln!(out, "lambda_bar_sq* = {}", e.coupling_at_fp / f31);
    let _ = writeln!(out, "long_range_order = {}", v.long_range_order);
    let _ = writeln!(out, "{}", v.report);
    out
}
