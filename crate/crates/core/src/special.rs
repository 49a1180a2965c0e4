//! Gamma function and the Gauss hypergeometric function on the negative real axis.

use crate::error::{Result, SveError};
use crate::scalar::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn is_nonpositive_integer<T: Real>(x: T) -> bool {
    x <= T::zero() && x == x.round()
}

fn lanczos_positive<T: Real>(x: T) -> T {
    // valid for x >= 1/2
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G + 0.5);
    (T::PI() * T::lit(2.0)).sqrt() * t.powf(x + T::lit(0.5)) * (-t).exp() * acc
}

/// Γ(x) by the Lanczos approximation (g = 7, nine terms) with reflection for x < 1/2.
///
/// Returns NaN at the poles (non-positive integers).
pub fn gamma<T: Real>(x: T) -> T {
    if is_nonpositive_integer(x) {
        return T::nan();
    }
    if x < T::lit(0.5) {
        T::PI() / ((T::PI() * x).sin() * lanczos_positive(T::one() - x))
    } else {
        lanczos_positive(x)
    }
}

/// 1/Γ(x), which is entire: zero at the non-positive integers.
pub fn rgamma<T: Real>(x: T) -> T {
    if is_nonpositive_integer(x) {
        return T::zero();
    }
    if x < T::lit(0.5) {
        (T::PI() * x).sin() * lanczos_positive(T::one() - x) / T::PI()
    } else {
        T::one() / lanczos_positive(x)
    }
}

/// Which parameter the Pfaff transformation keeps in the prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfaffPivot {
    /// ₂F₁(a,b;c;z) = (1−z)^{−a} ₂F₁(a, c−b; c; z/(z−1))
    A,
    /// ₂F₁(a,b;c;z) = (1−z)^{−b} ₂F₁(c−a, b; c; z/(z−1))
    B,
}

/// Largest term count before the power series is declared non-convergent.
pub const MAX_SERIES_TERMS: usize = 100_000;
/// Relative term tolerance of the power series.
pub const SERIES_TOL: f64 = 1e-14;
/// Mapped arguments above this use the connection formula about 1 when it is regular.
const SERIES_SWITCH: f64 = 0.8;
/// Minimum distance of c−a−b from an integer for the connection formula.
const CONNECTION_INTEGER_GAP: f64 = 1e-4;

/// Gauss hypergeometric function ₂F₁(a,b;c;z) for z ≤ 0, via the Pfaff transformation on `a`.
pub fn gauss_2f1<T: Real>(a: T, b: T, c: T, z: T) -> Result<T> {
    gauss_2f1_via(a, b, c, z, PfaffPivot::A)
}

/// Same as [`gauss_2f1`] with an explicit choice of Pfaff pivot.
pub fn gauss_2f1_via<T: Real>(a: T, b: T, c: T, z: T, pivot: PfaffPivot) -> Result<T> {
    if !(a.is_finite() && b.is_finite() && c.is_finite() && z.is_finite()) {
        return Err(SveError::parameter("2F1 arguments must be finite"));
    }
    if is_nonpositive_integer(c) {
        return Err(SveError::domain(format!("2F1: c = {c} is a non-positive integer")));
    }
    if z > T::zero() {
        return Err(SveError::domain(format!("2F1: only z <= 0 is supported, got {z}")));
    }
    if z == T::zero() {
        return Ok(T::one());
    }
    let one_minus_z = T::one() - z;
    let w = z / (z - T::one());
    let (pre, p, q) = match pivot {
        PfaffPivot::A => (one_minus_z.powf(-a), a, c - b),
        PfaffPivot::B => (one_minus_z.powf(-b), c - a, b),
    };
    let f = unit_interval(p, q, c, w, one_minus_z.recip())?;
    Ok(pre * f)
}

/// ₂F₁(a,b;c;w) for w ∈ [0,1); `one_minus_w` is passed separately to avoid cancellation.
fn unit_interval<T: Real>(a: T, b: T, c: T, w: T, one_minus_w: T) -> Result<T> {
    if w <= T::lit(SERIES_SWITCH) {
        return power_series(a, b, c, w);
    }
    let s = c - a - b;
    // The connection formula only needs 1 − w, which stays exact even when w rounds to 1.
    if one_minus_w > T::zero() && (s - s.round()).abs() > T::lit(CONNECTION_INTEGER_GAP) {
        return connection_about_one(a, b, c, one_minus_w);
    }
    if w >= T::one() || one_minus_w <= T::zero() {
        return Err(SveError::numerical(format!(
            "2F1: mapped argument {w} is not below 1 (a={a}, b={b}, c={c})"
        )));
    }
    power_series(a, b, c, w)
}

fn connection_about_one<T: Real>(a: T, b: T, c: T, one_minus_w: T) -> Result<T> {
    let s = c - a - b;
    let gc = gamma(c);
    let first_coeff = gc * gamma(s) * rgamma(c - a) * rgamma(c - b);
    let second_coeff = gc * gamma(-s) * rgamma(a) * rgamma(b);
    let mut total = T::zero();
    if first_coeff != T::zero() {
        total = total + first_coeff * power_series(a, b, T::one() - s, one_minus_w)?;
    }
    if second_coeff != T::zero() {
        total = total
            + second_coeff
                * one_minus_w.powf(s)
                * power_series(c - a, c - b, T::one() + s, one_minus_w)?;
    }
    if !total.is_finite() {
        return Err(SveError::numerical(format!(
            "2F1 connection formula overflowed (a={a}, b={b}, c={c}, 1-w={one_minus_w})"
        )));
    }
    Ok(total)
}

/// Plain hypergeometric power series Σ (a)_k (b)_k / ((c)_k k!) z^k for 0 ≤ z < 1.
pub fn power_series<T: Real>(a: T, b: T, c: T, z: T) -> Result<T> {
    if is_nonpositive_integer(c) {
        return Err(SveError::domain(format!("2F1 series: c = {c} is a non-positive integer")));
    }
    let tol = T::tol_floor(SERIES_TOL);
    let mut sum = T::one();
    let mut term = T::one();
    for k in 0..MAX_SERIES_TERMS {
        let kf = T::from_usize_lossy(k);
        let ratio = (a + kf) * (b + kf) / ((c + kf) * (kf + T::one())) * z;
        term = term * ratio;
        sum = sum + term;
        if term == T::zero() {
            return Ok(sum);
        }
        let r = ratio.abs();
        // Tail bound |term| r/(1−r) once the ratio is contracting.
        if r < T::one() && term.abs() * r / (T::one() - r) <= tol * sum.abs() {
            return Ok(sum);
        }
        if !sum.is_finite() {
            break;
        }
    }
    Err(SveError::numerical(format!(
        "2F1 series did not converge in {MAX_SERIES_TERMS} terms \
         (a={a}, b={b}, c={c}, z={z}, partial sum {sum}, last term {term:e})"
    )))
}
