//! Per-Fourier-mode operator algebra for the 1D scheme: exact mode
//! matrices for the three space configurations, amplification factors,
//! critical Courant numbers, and printed closed-form expressions kept
//! for cross-checking.
//!
//! The matrix composition in [`scheme_amplification`] is the
//! authoritative amplification oracle. The closed forms are evaluated
//! verbatim and compared against it by [`closed_form_report`]; known
//! divergences (notably case A as c -> 0, where the closed form carries
//! an overall c^2 factor and returns 0 instead of 1) are reported, not
//! hidden.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;
type CMat2 = Matrix2<Complex64>;
type CVec2 = Vector2<Complex64>;

/// The three 1D space configurations analysed in mode space.
///
/// A: piecewise constants recovered through the continuous linears.
/// B: continuous linears with the global L2 projection back.
/// C: continuous linears with the bounded averaging projection back.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeCase {
    A,
    B,
    C,
}

impl ModeCase {
    pub fn label(self) -> &'static str {
        match self {
            ModeCase::A => "A",
            ModeCase::B => "B",
            ModeCase::C => "C",
        }
    }

    pub fn parse(s: &str) -> Option<ModeCase> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Some(ModeCase::A),
            "B" => Some(ModeCase::B),
            "C" => Some(ModeCase::C),
            _ => None,
        }
    }
}

fn expi(phi: f64) -> C64 {
    C64::new(phi.cos(), phi.sin())
}

/// Forward Euler step matrix for one cell's DG1 pair (left trace, right
/// trace) at Courant number c and phase angle phi.
///
/// Row sums are 1 at phi = 0, so the step is exact on the constant mode,
/// and the matrix reduces to the identity at c = 0.
pub fn euler_matrix(c: f64, phi: f64) -> CMat2 {
    let em = expi(-phi);
    CMat2::new(
        C64::new(1.0 - 3.0 * c, 0.0),
        4.0 * c * em - C64::new(c, 0.0),
        C64::new(3.0 * c, 0.0),
        C64::new(1.0 - c, 0.0) - 2.0 * c * em,
    )
}

/// Three-stage Runge-Kutta advection matrix: with the Euler increment
/// L = E - 1, this is 1 + L + L^2/2 + L^3/6.
pub fn advection_matrix(c: f64, phi: f64) -> CMat2 {
    let ident = CMat2::identity();
    let l = euler_matrix(c, phi) - ident;
    let l2 = l * l;
    let l3 = l2 * l;
    ident + l + l2 * C64::new(0.5, 0.0) + l3 * C64::new(1.0 / 6.0, 0.0)
}

/// Per-mode operators of one case: the full scheme is the scalar
/// p^T A j, with j the lift of the mode into the advected pair.
struct ModeOperators {
    /// projection row: V1 pair -> mode coefficient
    p: CVec2,
    /// lift column: mode coefficient -> V1 pair
    j: CVec2,
}

fn mode_operators(case: ModeCase, phi: f64) -> ModeOperators {
    let e_plus = expi(phi);
    let e_minus = expi(-phi);
    let one = C64::new(1.0, 0.0);
    match case {
        ModeCase::A => {
            // recovery averages the two neighbouring cell values, the
            // broken projection takes cell means, injection duplicates.
            let r = CVec2::new((one + e_minus) * 0.5, (e_plus + one) * 0.5);
            let inj = CVec2::new(one, one);
            let p_hat_r = (r[0] + r[1]) * 0.5; // (1/2)(1 1) . r
            let j = r - inj * p_hat_r + inj;
            let p = CVec2::new(C64::new(0.5, 0.0), C64::new(0.5, 0.0));
            ModeOperators { p, j }
        }
        ModeCase::B => {
            // recovery is the identity and the broken projection equals
            // the injection, so the lift is just the injection.
            let j = CVec2::new(one, e_plus);
            let denom = 4.0 + 2.0 * phi.cos();
            let p = CVec2::new(
                (C64::new(2.0, 0.0) + e_minus) / denom,
                (one + 2.0 * e_minus) / denom,
            );
            ModeOperators { p, j }
        }
        ModeCase::C => {
            let j = CVec2::new(one, e_plus);
            let p = CVec2::new(C64::new(0.5, 0.0), e_minus * 0.5);
            ModeOperators { p, j }
        }
    }
}

/// Amplification modulus of one step of the full scheme on mode phi.
pub fn scheme_amplification(case: ModeCase, c: f64, phi: f64) -> f64 {
    let ops = mode_operators(case, phi);
    let a = advection_matrix(c, phi);
    let amp = ops.p.dot(&(a * ops.j));
    amp.norm()
}

/// The printed closed-form |A_k|^2 expressions, evaluated verbatim.
pub fn closed_form_amplification(case: ModeCase, c: f64, phi: f64) -> f64 {
    let (s, s2, s3, s4) = (phi.sin(), (2.0 * phi).sin(), (3.0 * phi).sin(), (4.0 * phi).sin());
    let (co, co2, co3, co4) = (phi.cos(), (2.0 * phi).cos(), (3.0 * phi).cos(), (4.0 * phi).cos());
    let sq = match case {
        ModeCase::A => {
            let bracket = c.powi(3)
                * (13.0 / 4.0 * co - 5.0 / 3.0 * co2 + co3 / 12.0 + co4 / 6.0 - 11.0 / 6.0)
                + c.powi(2)
                    * (29.0 / 12.0 * s - 5.0 / 3.0 * s2 + s3 / 12.0 + s4 / 6.0 - 7.0 / 4.0 * co
                        + 3.0 / 4.0 * co2
                        - co3 / 4.0
                        + 5.0 / 4.0)
                + c * (-3.0 / 4.0 * s + 3.0 / 4.0 * s2 - s3 / 4.0 - co + co2 / 4.0 + 3.0 / 4.0)
                - 3.0 / 2.0 * s
                + s2 * s2 / 4.0
                - 1.0;
            c * c * bracket * bracket
        }
        ModeCase::B => {
            let pref = (c / (co + 2.0)).powi(2);
            let t1 = (c * c * co - c * c + 3.0).powi(2) * s * s;
            let t2 = (-2.0 * c.powi(3) * co + 0.5 * c.powi(3) * co2 + 1.5 * c.powi(3)
                + 3.0 * c * c * co
                - 3.0 * c * c
                + co
                + 2.0)
                .powi(2);
            pref * (t1 + t2)
        }
        ModeCase::C => {
            let t1 = (2.0 / 3.0 * c.powi(3) * s + c.powi(3) * s2 / 6.0
                - c.powi(3) * s3 / 3.0
                - c * c * s
                + 0.5 * c * c * s2
                - c * s)
                .powi(2);
            let t2 = (-7.0 / 3.0 * c.powi(3) * co - c.powi(3) * co2 / 6.0
                + c.powi(3) * co3 / 3.0
                + 13.0 / 6.0 * c.powi(3)
                + 3.0 * c * c * co
                - 0.5 * c * c * co2
                - 2.5 * c * c
                + 1.0)
                .powi(2);
            t1 + t2
        }
    };
    sq.max(0.0).sqrt()
}

/// Reference critical Courant numbers of cases A, B and C, as resolved
/// by [`critical_courant`]. Used as stability guards by the harness.
pub const CRITICAL_COURANT_REFERENCE: [f64; 3] = [0.8506, 0.9930, 0.3625];

/// Number of phase samples used when maximising over modes.
pub const PHI_GRID: usize = 2048;

/// Largest amplification over the phase grid (0, 2pi).
pub fn max_amplification(case: ModeCase, c: f64) -> f64 {
    let mut max = 0.0f64;
    for m in 0..PHI_GRID {
        let phi = 2.0 * std::f64::consts::PI * (m as f64 + 0.5) / PHI_GRID as f64;
        max = max.max(scheme_amplification(case, c, phi));
    }
    max
}

const AMP_THRESHOLD: f64 = 1.0 + 1e-12;
const COURANT_TOL: f64 = 1e-4;

/// Smallest Courant number in [0, 2] at which some mode amplifies, found
/// by bisection to 1e-4.
pub fn critical_courant(case: ModeCase) -> Result<f64> {
    let mut lo = 0.0f64;
    let mut hi = 2.0f64;
    if max_amplification(case, hi) <= AMP_THRESHOLD {
        return Err(Error::NoInstabilityFound);
    }
    while hi - lo > COURANT_TOL {
        let mid = 0.5 * (lo + hi);
        if max_amplification(case, mid) > AMP_THRESHOLD {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical amplification measured on an actual 120-cell style mesh by
/// advecting sine and cosine waves one step and projecting back onto the
/// mode pair. Lives in the advection module to keep the mesh machinery
/// there; re-exported here for the report.
pub use crate::advection::measure_amplification;

/// One row of the closed-form comparison.
#[derive(Clone, Debug)]
pub struct ClosedFormRow {
    pub case: ModeCase,
    pub c: f64,
    pub phi: f64,
    pub oracle: f64,
    pub closed_form: f64,
}

/// Comparison of the printed closed forms against the matrix oracle.
#[derive(Clone, Debug)]
pub struct ClosedFormReport {
    pub rows: Vec<ClosedFormRow>,
    pub max_discrepancy: [f64; 3],
    /// The known divergence: case A at c -> 0 evaluates to 0 instead of 1.
    pub case_a_zero_courant_divergence: bool,
}

/// Scan a (c, phi) grid and compare both amplification routes.
pub fn closed_form_report() -> ClosedFormReport {
    let mut rows = Vec::new();
    let mut max_disc = [0.0f64; 3];
    for (ci, case) in [ModeCase::A, ModeCase::B, ModeCase::C].into_iter().enumerate() {
        for ic in 0..=10 {
            let c = 0.1 * ic as f64;
            for ip in 1..16 {
                let phi = 2.0 * std::f64::consts::PI * ip as f64 / 16.0;
                let oracle = scheme_amplification(case, c, phi);
                let closed = closed_form_amplification(case, c, phi);
                max_disc[ci] = max_disc[ci].max((oracle - closed).abs());
                rows.push(ClosedFormRow {
                    case,
                    c,
                    phi,
                    oracle,
                    closed_form: closed,
                });
            }
        }
    }
    // the specific flagged divergence: at c = 0 the oracle is exactly 1
    // for every mode while the printed case-A form vanishes
    let phi_probe = std::f64::consts::FRAC_PI_2;
    let oracle0 = scheme_amplification(ModeCase::A, 0.0, phi_probe);
    let closed0 = closed_form_amplification(ModeCase::A, 0.0, phi_probe);
    ClosedFormReport {
        rows,
        max_discrepancy: max_disc,
        case_a_zero_courant_divergence: (oracle0 - 1.0).abs() < 1e-12 && closed0.abs() < 1e-12,
    }
}
