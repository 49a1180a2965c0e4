//! The θ-heat kernel `p_t(x) = c_θ t^{−α} exp(−|x|^{2+θ}/(2t))`, the degenerate operator
//! `Δ_θ = (2/(2+θ)²) ∂_x(|x|^{−θ} ∂_x)` it solves, and the convolution semigroup `S_t`.
//!
//! Throughout, `α = 1/(2+θ)` and `q = 2+θ`.

use crate::error::{Result, SveError};
use crate::quadrature::AdaptiveQuad;
use crate::scalar::Real;
use crate::special::gamma;

/// Quadrature nodes and positive weights on a finite interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid<T> {
    points: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> SpatialGrid<T> {
    pub fn from_parts(points: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if points.len() != weights.len() || points.len() < 2 {
            return Err(SveError::parameter(
                "spatial grid needs at least two nodes and one weight per node",
            ));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SveError::parameter("spatial grid points must be strictly increasing"));
        }
        if weights.iter().any(|w| !(*w > T::zero())) {
            return Err(SveError::parameter("spatial grid weights must be positive"));
        }
        Ok(Self { points, weights })
    }

    /// Trapezoid rule with `nodes` equispaced nodes including both ends.
    pub fn trapezoid(a: T, b: T, nodes: usize) -> Result<Self> {
        if nodes < 2 || !(b > a) {
            return Err(SveError::parameter("trapezoid grid needs b > a and at least 2 nodes"));
        }
        let h = (b - a) / T::from_usize_lossy(nodes - 1);
        let points = (0..nodes)
            .map(|i| if i == nodes - 1 { b } else { a + h * T::from_usize_lossy(i) })
            .collect();
        let mut weights = vec![h; nodes];
        weights[0] = h * T::lit(0.5);
        weights[nodes - 1] = h * T::lit(0.5);
        Self::from_parts(points, weights)
    }

    /// Midpoint rule on `cells` equal cells. For symmetric `[−a, a]` and an even cell count
    /// no node sits at the origin.
    pub fn midpoint(a: T, b: T, cells: usize) -> Result<Self> {
        if cells < 2 || !(b > a) {
            return Err(SveError::parameter("midpoint grid needs b > a and at least 2 cells"));
        }
        let h = (b - a) / T::from_usize_lossy(cells);
        let points = (0..cells)
            .map(|i| a + h * (T::from_usize_lossy(i) + T::lit(0.5)))
            .collect();
        Self::from_parts(points, vec![h; cells])
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sum of the weights, i.e. the length of the covered span.
    pub fn span(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// Lower and upper edge of the region the rule integrates over.
    pub fn bounds(&self) -> (T, T) {
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        let total = self.span();
        let covered = last - first;
        // trapezoid: covered == total; midpoint: half a cell extra at each end
        let pad = (total - covered) * T::lit(0.5);
        (first - pad, last + pad)
    }

    pub fn integrate<F: Fn(T) -> T>(&self, f: F) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Upper bound on `∫_X^∞ exp(−x^q/2) dx` for `X > 0`, using `x^q ≥ X^{q−1} x` on `[X, ∞)`.
pub fn stretched_tail_bound<T: Real>(x: T, q: T) -> T {
    if x <= T::zero() {
        return T::infinity();
    }
    T::lit(2.0) * x.powf(T::one() - q) * (-x.powf(q) * T::lit(0.5)).exp()
}

/// Normalisation `c_θ = (∫_ℝ exp(−|x|^{2+θ}/2) dx)^{−1}` by certified-cutoff adaptive quadrature.
pub fn compute_c_theta<T: Real>(theta: T, tol: T) -> Result<T> {
    if !(theta > T::zero()) || !theta.is_finite() {
        return Err(SveError::parameter(format!("theta must be positive, got {theta}")));
    }
    if !(tol > T::zero()) {
        return Err(SveError::parameter("tolerance must be positive"));
    }
    let q = T::lit(2.0) + theta;
    let tail_budget = tol * T::lit(0.1);
    let mut cutoff = T::one();
    while stretched_tail_bound(cutoff, q) >= tail_budget {
        cutoff = cutoff + T::lit(0.25);
        if cutoff > T::lit(1e3) {
            return Err(SveError::numerical("could not certify a cutoff for c_theta"));
        }
    }
    let quad = AdaptiveQuad::with_tol(tail_budget.max(T::tol_floor(1e-15)), T::zero());
    let half = quad
        .integrate(|x| (-x.powf(q) * T::lit(0.5)).exp(), T::zero(), cutoff)
        .map_err(|e| SveError::numerical(format!("c_theta quadrature failed: {e}")))?;
    let mass = half.value * T::lit(2.0);
    let budget = (half.error + stretched_tail_bound(cutoff, q)) * T::lit(2.0);
    if budget > tol * mass {
        return Err(SveError::numerical(format!(
            "c_theta error budget {budget:e} exceeds tolerance {tol:e} (cutoff {cutoff})"
        )));
    }
    Ok(mass.recip())
}

/// `c_θ = q / (2 · 2^{1/q} Γ(1/q))` with `q = 2+θ`, from `∫_0^∞ e^{−x^q/2} dx = 2^{1/q} Γ(1/q)/q`.
pub fn c_theta_closed_form<T: Real>(theta: T) -> T {
    let q = T::lit(2.0) + theta;
    q / (T::lit(2.0) * T::lit(2.0).powf(q.recip()) * gamma(q.recip()))
}

/// Analytic partial derivatives of the heat kernel at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelDerivatives<T> {
    pub dt: T,
    pub dx: T,
    pub delta_theta: T,
}

/// Semigroup value with the kernel mass that fell outside the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncated<T> {
    pub value: T,
    pub tail_mass: T,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaHeatKernel<T> {
    theta: T,
    alpha: T,
    c_theta: T,
}

/// Default tolerance for the normalisation quadrature.
pub const C_THETA_TOL: f64 = 1e-13;
/// Tail mass above which semigroup results are flagged as truncated.
pub const TRUNCATION_WARN: f64 = 1e-8;

impl<T: Real> ThetaHeatKernel<T> {
    pub fn new(theta: T) -> Result<Self> {
        Self::with_tolerance(theta, T::tol_floor(C_THETA_TOL))
    }

    pub fn with_tolerance(theta: T, tol: T) -> Result<Self> {
        let c_theta = compute_c_theta(theta, tol)?;
        Ok(Self {
            theta,
            alpha: (T::lit(2.0) + theta).recip(),
            c_theta,
        })
    }

    /// Kernel matched to a Volterra exponent `α ∈ (0, 1/2)`; keeps `α` bit-for-bit.
    pub fn from_alpha(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::lit(0.5)) {
            return Err(SveError::parameter(format!("alpha must lie in (0, 1/2), got {alpha}")));
        }
        let theta = alpha.recip() - T::lit(2.0);
        let c_theta = compute_c_theta(theta, T::tol_floor(C_THETA_TOL))?;
        Ok(Self { theta, alpha, c_theta })
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn c_theta(&self) -> T {
        self.c_theta
    }

    /// Exponent `q = 2 + θ` of the stretched exponential.
    pub fn exponent(&self) -> T {
        T::lit(2.0) + self.theta
    }

    fn check_time(t: T) -> Result<()> {
        if t == T::zero() {
            return Err(SveError::domain(
                "p_0 is the Dirac mass and cannot be evaluated pointwise",
            ));
        }
        if !(t > T::zero()) {
            return Err(SveError::parameter(format!("time must be positive, got {t}")));
        }
        Ok(())
    }

    #[inline]
    fn eval_unchecked(&self, t: T, x: T) -> T {
        self.c_theta * t.powf(-self.alpha) * (-x.abs().powf(self.exponent()) / (t + t)).exp()
    }

    pub fn eval(&self, t: T, x: T) -> Result<T> {
        Self::check_time(t)?;
        Ok(self.eval_unchecked(t, x))
    }

    /// `p_t(0) / c_θ`, which equals `t^{−α}`.
    pub fn trace_ratio(&self, t: T) -> Result<T> {
        Ok(self.eval(t, T::zero())? / self.c_theta)
    }

    pub fn derivatives(&self, t: T, x: T) -> Result<KernelDerivatives<T>> {
        Self::check_time(t)?;
        let q = self.exponent();
        let p = self.eval_unchecked(t, x);
        let ax = x.abs();
        let axq = ax.powf(q);
        let dt = p * (-self.alpha / t + axq / (T::lit(2.0) * t * t));
        let dx = if x == T::zero() {
            T::zero()
        } else {
            -p * q * ax.powf(q - T::one()) * x.signum() / (t + t)
        };
        // |x|^{−θ} ∂_x p = −(q/2t) x p, so Δ_θ p = −(2/q²)(q/2t) p (1 − q|x|^q/(2t)).
        let delta_theta = -(T::lit(2.0) / (q * q)) * (q / (t + t)) * p * (T::one() - q * axq / (t + t));
        Ok(KernelDerivatives { dt, dx, delta_theta })
    }

    /// `∫_d^∞ p_t(u) du`, bounded above via the stretched-exponential tail.
    pub fn tail_mass(&self, t: T, d: T) -> T {
        if d <= T::zero() {
            return T::lit(0.5);
        }
        (self.c_theta * stretched_tail_bound(d * t.powf(-self.alpha), self.exponent()))
            .min(T::lit(0.5))
    }

    /// `(S_t φ)(x) = ∫ p_t(x−y) φ(y) dy` by the grid's quadrature rule.
    pub fn semigroup_apply<F: Fn(T) -> T>(
        &self,
        t: T,
        phi: F,
        x: T,
        grid: &SpatialGrid<T>,
    ) -> Result<Truncated<T>> {
        Self::check_time(t)?;
        let value = grid.integrate(|y| self.eval_unchecked(t, x - y) * phi(y));
        let (lo, hi) = grid.bounds();
        let tail_mass = self.tail_mass(t, x - lo) + self.tail_mass(t, hi - x);
        Ok(Truncated {
            value,
            tail_mass,
            truncated: tail_mass > T::lit(TRUNCATION_WARN),
        })
    }

    /// `∫ p_t(x) dx` by adaptive quadrature over `|x| ≤ (100 t)^{1/q}`.
    pub fn mass(&self, t: T) -> Result<T> {
        Self::check_time(t)?;
        let r = (T::lit(100.0) * t).powf(self.exponent().recip());
        let quad = AdaptiveQuad::with_tol(T::tol_floor(1e-14), T::tol_floor(1e-13));
        let half = quad.integrate(|x| self.eval_unchecked(t, x), T::zero(), r)?;
        Ok(half.value + half.value)
    }

    /// The kernel at a fixed time as a function of space.
    pub fn at_time(&self, t: T) -> Result<KernelSlice<T>> {
        Self::check_time(t)?;
        Ok(KernelSlice { kernel: *self, t })
    }
}

/// Scalar function of one variable with analytic first and second derivatives.
pub trait Smooth1D<T: Real> {
    fn value(&self, x: T) -> T;
    fn d1(&self, x: T) -> T;
    fn d2(&self, x: T) -> T;

    /// `Δ_θ f(x)`; the default is the expanded divergence form, singular at `x = 0`.
    fn delta_theta(&self, theta: T, x: T) -> Result<T> {
        delta_theta_expanded(theta, self.d1(x), self.d2(x), x)
    }
}

/// `(2/(2+θ)²)(−θ|x|^{−θ−1} sgn(x) f′(x) + |x|^{−θ} f″(x))` for `x ≠ 0`.
pub fn delta_theta_expanded<T: Real>(theta: T, d1: T, d2: T, x: T) -> Result<T> {
    if x == T::zero() {
        return Err(SveError::domain("Delta_theta coefficient |x|^-theta is singular at x = 0"));
    }
    let q = T::lit(2.0) + theta;
    let ax = x.abs();
    let inner = -theta * ax.powf(-theta - T::one()) * x.signum() * d1 + ax.powf(-theta) * d2;
    Ok(T::lit(2.0) / (q * q) * inner)
}

/// Applies `Δ_θ` to `f` through its analytic derivatives (expanded form).
pub fn delta_theta_apply<T: Real, F: Smooth1D<T> + ?Sized>(theta: T, f: &F, x: T) -> Result<T> {
    if !(theta > T::zero()) {
        return Err(SveError::parameter("theta must be positive"));
    }
    delta_theta_expanded(theta, f.d1(x), f.d2(x), x)
}

/// `x ↦ p_t(x)` at fixed `t`.
#[derive(Debug, Clone, Copy)]
pub struct KernelSlice<T> {
    kernel: ThetaHeatKernel<T>,
    t: T,
}

impl<T: Real> KernelSlice<T> {
    pub fn time(&self) -> T {
        self.t
    }

    pub fn kernel(&self) -> &ThetaHeatKernel<T> {
        &self.kernel
    }
}

impl<T: Real> Smooth1D<T> for KernelSlice<T> {
    fn value(&self, x: T) -> T {
        self.kernel.eval_unchecked(self.t, x)
    }

    fn d1(&self, x: T) -> T {
        self.kernel.derivatives(self.t, x).map(|d| d.dx).unwrap_or(T::nan())
    }

    fn d2(&self, x: T) -> T {
        // ∂²_x p = p [ (q|x|^{q−1}/(2t))² − q(q−1)|x|^{q−2}/(2t) ]
        let q = self.kernel.exponent();
        let t2 = self.t + self.t;
        let ax = x.abs();
        let p = self.value(x);
        let g = q * ax.powf(q - T::one()) / t2;
        p * (g * g - q * (q - T::one()) * ax.powf(q - T::lit(2.0)) / t2)
    }

    /// Continuous extension: the composed expression is regular at the origin.
    fn delta_theta(&self, theta: T, x: T) -> Result<T> {
        if theta != self.kernel.theta {
            return delta_theta_apply(theta, self, x);
        }
        self.kernel.derivatives(self.t, x).map(|d| d.delta_theta)
    }
}
