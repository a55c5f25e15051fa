//! Dense matrix-exponential kernel.
//!
//! Scaling-and-squaring with diagonal Padé approximants, after Higham's
//! revisited method, with two departures that make the kernel cheap inside a
//! contact integrator:
//!
//! * reduced approximant orders j ∈ {1, 2, 3, 5, 7}, costing 0–4 matrix-matrix
//!   multiplications and skipping the scaling step entirely (the caller keeps
//!   the norm small through balancing and small step sizes);
//! * direct evaluation of `e^A · V` for thin `V`: form `N_j(A)·V` first and
//!   solve the denominator against that small right-hand side instead of
//!   forming the whole exponential.
//!
//! The integrals ∫₀ᵗ x and ∫₀ᵗ∫₀^τ x of a linear system ẋ = Ax + b are
//! recovered from a single exponential of an (n+3)×(n+3) augmented matrix
//! (Van Loan-style block embedding), which is what the exponential stepper
//! actually calls once per step.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// 1-norm threshold above which the order-13 approximant needs scaling.
const THETA_13: f64 = 5.371920351148152;

/// Padé coefficients of the diagonal [j/j] approximants to the exponential,
/// scaled to integers: N_j(A) = Σ c_i A^i and D_j(A) = N_j(-A).
const PADE1: [f64; 2] = [2.0, 1.0];
const PADE2: [f64; 3] = [12.0, 6.0, 1.0];
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

#[derive(Debug, Error)]
pub enum ExpmError {
    /// The Padé denominator could not be solved; the requested order is too
    /// low for the norm of the scaled matrix.
    #[error("Pade denominator numerically singular (order {order}, 1-norm {norm:.3e})")]
    SingularDenominator { order: usize, norm: f64 },
}

/// Approximant selection for the kernel.
///
/// `Reduced(mmm)` picks the fixed order j ∈ {1, 2, 3, 5, 7} that costs `mmm`
/// matrix-matrix multiplications (mmm ∈ 0..=4) and never scales. `Full` is
/// the double-precision policy: order 13 with adaptive power-of-two scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadePolicy {
    Reduced(u8),
    Full,
}

impl PadePolicy {
    /// Policy with the given matrix-multiplication budget, `None` if > 4.
    pub fn reduced(mmm: u8) -> Option<Self> {
        (mmm <= 4).then_some(PadePolicy::Reduced(mmm))
    }

    pub const fn full() -> Self {
        PadePolicy::Full
    }

    /// Order j of the diagonal approximant.
    pub const fn order(self) -> usize {
        match self {
            PadePolicy::Reduced(0) => 1,
            PadePolicy::Reduced(1) => 2,
            PadePolicy::Reduced(2) => 3,
            PadePolicy::Reduced(3) => 5,
            PadePolicy::Reduced(_) => 7,
            PadePolicy::Full => 13,
        }
    }

    /// Scaling exponent s for a matrix of the given 1-norm. Reduced policies
    /// always use s = 0; the full policy scales down to the order-13 radius.
    pub fn scaling(self, norm_1: f64) -> u32 {
        match self {
            PadePolicy::Reduced(_) => 0,
            PadePolicy::Full => {
                if norm_1 > THETA_13 {
                    (norm_1 / THETA_13).log2().ceil().max(0.0) as u32
                } else {
                    0
                }
            }
        }
    }

    /// Parses "full" or an mmm budget "0".."4".
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "full" => Some(PadePolicy::Full),
            other => other.parse::<u8>().ok().and_then(PadePolicy::reduced),
        }
    }
}

impl Default for PadePolicy {
    fn default() -> Self {
        PadePolicy::Full
    }
}

impl std::fmt::Display for PadePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PadePolicy::Reduced(m) => write!(f, "{m}"),
            PadePolicy::Full => write!(f, "full"),
        }
    }
}

/// Integrals of a linear system over one step: `x_int = ∫₀^Δt x(τ) dτ` and
/// `x_int2 = ∫₀^Δt ∫₀^τ x(τ₁) dτ₁ dτ`.
#[derive(Debug, Clone)]
pub struct ExpIntegrals {
    pub x_int: DVector<f64>,
    pub x_int2: DVector<f64>,
}

/// Maximum absolute column sum.
pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Two-sided diagonal balancing with power-of-two factors (Parlett–Reinsch).
///
/// Returns `(d, Ã)` with `Ã = D⁻¹ A D`, `D = diag(d)`. Because the factors
/// are powers of two the similarity is exact in floating point:
/// `exp(A) = D · exp(Ã) · D⁻¹`. Degenerate inputs (zero rows/columns,
/// already-balanced matrices) come back with `d = 1`.
pub fn balance(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    if n == 0 || m.iter().any(|x| !x.is_finite()) {
        return (d, m);
    }

    // Classic sweep: for each row/column pair, pick the power of two that
    // brings the off-diagonal column sum and row sum closest together, and
    // keep sweeping until no factor changes.
    for _ in 0..100 {
        let mut converged = true;
        for i in 0..n {
            let mut c: f64 = (0..n).filter(|&j| j != i).map(|j| m[(j, i)].abs()).sum();
            let r: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / 2.0;
            while c < g {
                f *= 2.0;
                c *= 4.0;
            }
            g = r * 2.0;
            while c > g {
                f /= 2.0;
                c /= 4.0;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                d[i] *= f;
                let inv = 1.0 / f;
                for j in 0..n {
                    m[(i, j)] *= inv;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
    (d, m)
}

/// Odd/even split of the Padé numerator: N_j = V + U, D_j = V − U with
/// U collecting the odd powers (including the leading factor A).
fn pade_uv(a: &DMatrix<f64>, order: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    match order {
        1 => {
            let c = &PADE1;
            (c[1] * a, c[0] * id)
        }
        2 => {
            let c = &PADE2;
            let a2 = a * a;
            (c[1] * a, c[2] * a2 + c[0] * id)
        }
        3 => {
            let c = &PADE3;
            let a2 = a * a;
            let u = a * (c[3] * &a2 + c[1] * &id);
            let v = c[2] * a2 + c[0] * id;
            (u, v)
        }
        5 => {
            let c = &PADE5;
            let a2 = a * a;
            let a4 = &a2 * &a2;
            let u = a * (c[5] * &a4 + c[3] * &a2 + c[1] * &id);
            let v = c[4] * a4 + c[2] * a2 + c[0] * id;
            (u, v)
        }
        7 => {
            let c = &PADE7;
            let a2 = a * a;
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let u = a * (c[7] * &a6 + c[5] * &a4 + c[3] * &a2 + c[1] * &id);
            let v = c[6] * a6 + c[4] * a4 + c[2] * a2 + c[0] * id;
            (u, v)
        }
        13 => {
            let c = &PADE13;
            let a2 = a * a;
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let w = c[13] * &a6 + c[11] * &a4 + c[9] * &a2;
            let u = a * (&a6 * w + c[7] * &a6 + c[5] * &a4 + c[3] * &a2 + c[1] * &id);
            let w2 = c[12] * &a6 + c[10] * &a4 + c[8] * &a2;
            let v = &a6 * w2 + c[6] * a6 + c[4] * a4 + c[2] * a2 + c[0] * id;
            (u, v)
        }
        _ => unreachable!("unsupported Pade order {order}"),
    }
}

/// LU solve of `denom · X = rhs` with a pivot-ratio singularity guard.
fn solve_denominator(
    denom: DMatrix<f64>,
    rhs: DMatrix<f64>,
    order: usize,
    norm: f64,
) -> Result<DMatrix<f64>, ExpmError> {
    let lu = denom.lu();
    let diag = lu.u().diagonal();
    let max_pivot = diag.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let min_pivot = diag.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if !(min_pivot > max_pivot * 1e-14) {
        return Err(ExpmError::SingularDenominator { order, norm });
    }
    lu.solve(&rhs)
        .ok_or(ExpmError::SingularDenominator { order, norm })
}

/// Matrix exponential `e^A` by scaling and squaring with the policy's
/// diagonal Padé approximant.
pub fn pade_expm(a: &DMatrix<f64>, policy: PadePolicy) -> Result<DMatrix<f64>, ExpmError> {
    let norm = one_norm(a);
    let s = policy.scaling(norm);
    let scaled;
    let a_s = if s > 0 {
        scaled = a * 2f64.powi(-(s as i32));
        &scaled
    } else {
        a
    };
    let (u, v) = pade_uv(a_s, policy.order());
    let mut e = solve_denominator(&v - &u, v + u, policy.order(), norm)?;
    for _ in 0..s {
        e = &e * &e;
    }
    Ok(e)
}

/// Product `e^A · V` without forming the full exponential when no squaring is
/// needed: compute `V₁ = N_j(A)·V`, then solve `D_j(A)·X = V₁`. When the full
/// policy scales (s > 0) the squared exponential is formed first and applied
/// to `V`.
pub fn expm_multiply(
    a: &DMatrix<f64>,
    v: &DMatrix<f64>,
    policy: PadePolicy,
) -> Result<DMatrix<f64>, ExpmError> {
    assert!(v.ncols() <= a.nrows(), "V must be a thin matrix");
    let norm = one_norm(a);
    let s = policy.scaling(norm);
    if s > 0 {
        return Ok(pade_expm(a, policy)? * v);
    }
    let (pu, pv) = pade_uv(a, policy.order());
    let rhs = (&pv + &pu) * v;
    solve_denominator(pv - pu, rhs, policy.order(), norm)
}

/// First and second integrals of `ẋ = Ax + b, x(0) = x0` over `[0, Δt]`.
///
/// Builds the augmented matrix
///
/// ```text
///       ⎡ A  b  x0  0 ⎤
///   Ā = ⎢ 0  0  1   0 ⎥        [x_int  x_int2] = [Iₙ 0] · e^{Δt·Ā} · ⎡ 0 ⎤
///       ⎢ 0  0  0   1 ⎥                                              ⎣ I₂⎦
///       ⎣ 0  0  0   0 ⎦
/// ```
///
/// balances `Δt·Ā`, exponentiates with the requested policy, and unwinds the
/// balancing. Works for singular `A` (rank-deficient contact Jacobians).
pub fn compute_integrals(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    dt: f64,
    policy: PadePolicy,
) -> Result<ExpIntegrals, ExpmError> {
    assert!(dt > 0.0, "integration interval must be positive");
    let n = a.nrows();
    let m = n + 3;
    let mut abar = DMatrix::<f64>::zeros(m, m);
    abar.view_mut((0, 0), (n, n)).copy_from(a);
    abar.view_mut((0, n), (n, 1)).copy_from(b);
    abar.view_mut((0, n + 1), (n, 1)).copy_from(x0);
    abar[(n, n + 1)] = 1.0;
    abar[(n + 1, n + 2)] = 1.0;
    abar *= dt;

    let (d, balanced) = balance(&abar);
    // e^{Δt·Ā}·V = D · e^{Ã} · (D⁻¹·V); V holds the unit columns n+1, n+2.
    let mut v = DMatrix::<f64>::zeros(m, 2);
    v[(n + 1, 0)] = 1.0 / d[n + 1];
    v[(n + 2, 1)] = 1.0 / d[n + 2];
    let w = expm_multiply(&balanced, &v, policy)?;

    let mut x_int = DVector::<f64>::zeros(n);
    let mut x_int2 = DVector::<f64>::zeros(n);
    for i in 0..n {
        x_int[i] = d[i] * w[(i, 0)];
        x_int2[i] = d[i] * w[(i, 1)];
    }
    Ok(ExpIntegrals { x_int, x_int2 })
}
