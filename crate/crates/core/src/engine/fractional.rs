use crate::error::{Result, SveError};
use crate::quadrature::AdaptiveQuad;
use crate::scalar::Real;

use super::grid::SamplePath;

fn check_unit<T: Real>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(SveError::domain(format!("α must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_half<T: Real>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::lit(0.5)) {
        return Err(SveError::parameter(format!("α must lie in (0, 1/2), got {alpha}")));
    }
    Ok(())
}

/// `c_α = B(α, 1−α) = π / sin(πα)`.
pub fn c_alpha<T: Real>(alpha: T) -> Result<T> {
    check_unit(alpha)?;
    Ok(T::PI() / (T::PI() * alpha).sin())
}

/// `∫_0^1 (1−r)^{α−1} r^{−α} dr` by quadrature, with `r = u^{1/(1−α)}` on `[0, 1/2]`
/// and `1 − r = v^{1/α}` on `[1/2, 1]` so that both integrands are bounded.
pub fn c_alpha_quadrature<T: Real>(alpha: T) -> Result<T> {
    check_unit(alpha)?;
    let one = T::one();
    let half = T::lit(0.5);
    let a = one - alpha;
    let quad = AdaptiveQuad::with_tol(T::tol_floor(1e-15), T::tol_floor(1e-14));
    let left = quad.integrate(
        |u: T| {
            let r = u.powf(a.recip());
            (one - r).powf(alpha - one) / a
        },
        T::zero(),
        half.powf(a),
    )?;
    let right = quad.integrate(
        |v: T| {
            let r = one - v.powf(alpha.recip());
            r.powf(-alpha) / alpha
        },
        T::zero(),
        half.powf(alpha),
    )?;
    Ok(left.value + right.value)
}

/// `Y_{t_i} = Σ_{j<i} [∫_{t_j}^{t_{j+1}} (t_i−s)^{α−1} ds] U_{t_j}`.
pub fn frac_forward<T: Real>(alpha: T, path: &SamplePath<T>) -> Result<SamplePath<T>> {
    check_half(alpha)?;
    let grid = *path.grid();
    let n = grid.steps();
    let scale = grid.dt().powf(alpha) / alpha;
    let w: Vec<T> = (0..=n)
        .map(|l| {
            if l == 0 {
                return T::zero();
            }
            let l = T::from_usize_lossy(l);
            scale * (l.powf(alpha) - (l - T::one()).powf(alpha))
        })
        .collect();
    let u = path.values();
    let y = (0..=n)
        .map(|i| (0..i).map(|j| w[i - j] * u[j]).sum())
        .collect();
    SamplePath::new(grid, y)
}

/// Output of [`frac_inverse`].
#[derive(Debug, Clone)]
pub struct FracInverse<T> {
    pub path: SamplePath<T>,
    /// Set when `Y_0` is not zero; the transform pair assumes it is.
    pub warning: Option<String>,
}

/// Relative size of `Y_0` above which [`frac_inverse`] warns.
pub const Y0_TOLERANCE: f64 = 1e-12;

/// `Û = (1/c_α) d/dt ∫_0^t (t−s)^{−α} Y_s ds`.
///
/// The leading term `β t^α/α` of `Y` (with `β` matched at `t_1`) is removed and
/// transformed exactly; the remainder is integrated with product-trapezoid weights.
/// The derivative is the forward difference assigned to `t_i`, and the backward
/// difference at the last node.
pub fn frac_inverse<T: Real>(alpha: T, y: &SamplePath<T>) -> Result<FracInverse<T>> {
    check_half(alpha)?;
    let grid = *y.grid();
    let n = grid.steps();
    if n < 2 {
        return Err(SveError::parameter("frac_inverse needs at least two steps"));
    }
    let ca = c_alpha(alpha)?;
    let dt = grid.dt();
    let one = T::one();
    let yv = y.values();

    let ymax = yv.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let warning = (yv[0].abs() > T::lit(Y0_TOLERANCE) * ymax.max(one)).then(|| {
        format!("Y_0 = {} is not zero; subtract the initial value before inverting", yv[0])
    });

    let beta = alpha * yv[1] / dt.powf(alpha);
    let rem: Vec<T> = (0..=n)
        .map(|j| yv[j] - beta * grid.node(j).powf(alpha) / alpha)
        .collect();

    let e0 = one - alpha;
    let e1 = T::lit(2.0) - alpha;
    let cell = dt.powf(e0);
    // (weight on the left node, weight on the right node) at lag l
    let weights: Vec<(T, T)> = (0..=n)
        .map(|l| {
            if l == 0 {
                return (T::zero(), T::zero());
            }
            let l = T::from_usize_lossy(l);
            let lm = l - one;
            let i0 = (l.powf(e0) - lm.powf(e0)) / e0;
            let i1 = (l.powf(e1) - lm.powf(e1)) / e1;
            (cell * (i1 - lm * i0), cell * (l * i0 - i1))
        })
        .collect();
    let z: Vec<T> = (0..=n)
        .map(|i| {
            let smooth: T = (0..i)
                .map(|j| {
                    let (a, b) = weights[i - j];
                    a * rem[j] + b * rem[j + 1]
                })
                .sum();
            smooth + beta * ca * grid.node(i)
        })
        .collect();

    let mut u: Vec<T> = (0..n).map(|i| (z[i + 1] - z[i]) / (dt * ca)).collect();
    u.push(u[n - 1]);
    Ok(FracInverse {
        path: SamplePath::new(grid, u)?,
        warning,
    })
}
