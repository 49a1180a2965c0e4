use crate::error::{Result, SveError};
use crate::scalar::Real;
use crate::theta_kernel::{KernelSlice, Smooth1D};

/// A compactly supported (or rapidly decaying) test function with `Δ_θ` available.
pub trait TestFunction<T: Real>: Smooth1D<T> + Send + Sync {
    /// Radius outside of which the function is negligible.
    fn support_radius(&self) -> T;
}

/// `exp(−1/(1−(x/c)²))` on `(−c, c)`.
///
/// Its `Δ_θ` behaves like `|x|^{−θ}` at the origin, integrable only for `θ < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicBump<T> {
    pub c: T,
}

/// `h(|x/c|^q)` with `h(u) = exp(−1/(1−u))` and `q = 2 + θ`, so that `Δ_θ` of it is
/// bounded and continuous at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptedBump<T> {
    c: T,
    theta: T,
}

// h and its first two derivatives at u ∈ [0, 1).
fn h_derivs<T: Real>(u: T) -> (T, T, T) {
    if u >= T::one() {
        return (T::zero(), T::zero(), T::zero());
    }
    let v = (T::one() - u).recip();
    let h = (-v).exp();
    let h1 = -h * v * v;
    let h2 = h * (v * v * v * v - T::lit(2.0) * v * v * v);
    (h, h1, h2)
}

impl<T: Real> ClassicBump<T> {
    pub fn new(c: T) -> Result<Self> {
        if !(c.is_finite() && c > T::zero()) {
            return Err(SveError::parameter(format!("bump scale must be positive, got {c}")));
        }
        Ok(Self { c })
    }
}

impl<T: Real> Smooth1D<T> for ClassicBump<T> {
    fn value(&self, x: T) -> T {
        let y = x / self.c;
        h_derivs(y * y).0
    }

    fn d1(&self, x: T) -> T {
        let y = x / self.c;
        let (_, h1, _) = h_derivs(y * y);
        h1 * T::lit(2.0) * y / self.c
    }

    fn d2(&self, x: T) -> T {
        let y = x / self.c;
        let (_, h1, h2) = h_derivs(y * y);
        let two = T::lit(2.0);
        (h2 * two * two * y * y + h1 * two) / (self.c * self.c)
    }
}

impl<T: Real> TestFunction<T> for ClassicBump<T> {
    fn support_radius(&self) -> T {
        self.c
    }
}

impl<T: Real> AdaptedBump<T> {
    pub fn new(c: T, theta: T) -> Result<Self> {
        if !(c.is_finite() && c > T::zero()) {
            return Err(SveError::parameter(format!("bump scale must be positive, got {c}")));
        }
        if !(theta > T::zero()) {
            return Err(SveError::parameter(format!("theta must be positive, got {theta}")));
        }
        Ok(Self { c, theta })
    }

    fn q(&self) -> T {
        T::lit(2.0) + self.theta
    }

    fn u(&self, x: T) -> T {
        (x / self.c).abs().powf(self.q())
    }
}

impl<T: Real> Smooth1D<T> for AdaptedBump<T> {
    fn value(&self, x: T) -> T {
        h_derivs(self.u(x)).0
    }

    fn d1(&self, x: T) -> T {
        let q = self.q();
        let y = x / self.c;
        let (_, h1, _) = h_derivs(self.u(x));
        h1 * q * y.abs().powf(q - T::one()) * y.signum() / self.c
    }

    fn d2(&self, x: T) -> T {
        let q = self.q();
        let ay = (x / self.c).abs();
        let (_, h1, h2) = h_derivs(self.u(x));
        let one = T::one();
        (h2 * q * q * ay.powf(T::lit(2.0) * q - T::lit(2.0)) + h1 * q * (q - one) * ay.powf(q - T::lit(2.0)))
            / (self.c * self.c)
    }

    /// `(2/(q c^q))(h′(u) + q u h″(u))` at `u = |x/c|^q`, continuous at 0.
    fn delta_theta(&self, theta: T, x: T) -> Result<T> {
        if theta != self.theta {
            return crate::theta_kernel::delta_theta_apply(theta, self, x);
        }
        let q = self.q();
        let u = self.u(x);
        let (_, h1, h2) = h_derivs(u);
        Ok(T::lit(2.0) / (q * self.c.powf(q)) * (h1 + q * u * h2))
    }
}

impl<T: Real> TestFunction<T> for AdaptedBump<T> {
    fn support_radius(&self) -> T {
        self.c
    }
}

impl<T: Real> TestFunction<T> for KernelSlice<T> {
    fn support_radius(&self) -> T {
        // p_t(x) < 1e-30 p_t(0) beyond (2t·69)^{1/q}
        (T::lit(138.0) * self.time()).powf(self.kernel().exponent().recip())
    }
}
