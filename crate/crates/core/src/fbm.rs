//! Fractional Brownian motion: covariance, the Volterra kernel `K_H`, the simplified
//! kernel `C(t−s)^{H−1/2}` and path synthesis from a Brownian driver.

use crate::engine::{BrownianDriver, SamplePath, TimeGrid};
use crate::error::{Result, SveError};
use crate::quadrature::AdaptiveQuad;
use crate::scalar::Real;
use crate::special::{gamma, gauss_2f1};

/// Hurst index and scale constant of the simplified kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbmParams<T> {
    hurst: T,
    scale: T,
}

fn check_hurst<T: Real>(h: T) -> Result<()> {
    if !(h > T::zero() && h < T::one()) {
        return Err(SveError::domain(format!("Hurst index must lie in (0, 1), got {h}")));
    }
    if h == T::lit(0.5) {
        return Err(SveError::domain("Hurst index 1/2 is excluded"));
    }
    Ok(())
}

impl<T: Real> FbmParams<T> {
    pub fn new(hurst: T, scale: T) -> Result<Self> {
        check_hurst(hurst)?;
        if !(scale.is_finite() && scale > T::zero()) {
            return Err(SveError::parameter(format!("scale C must be positive, got {scale}")));
        }
        Ok(Self { hurst, scale })
    }

    /// Parameters usable as an SVE kernel, which needs `H < 1/2`.
    pub fn for_sve(hurst: T, scale: T) -> Result<Self> {
        let p = Self::new(hurst, scale)?;
        if hurst >= T::lit(0.5) {
            return Err(SveError::domain(format!(
                "the SVE kernel needs H in (0, 1/2), got {hurst}"
            )));
        }
        Ok(p)
    }

    pub fn hurst(&self) -> T {
        self.hurst
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// `α = 1/2 − H`.
    pub fn alpha(&self) -> T {
        T::lit(0.5) - self.hurst
    }

    /// `θ = 1/α − 2`.
    pub fn theta(&self) -> T {
        self.alpha().recip() - T::lit(2.0)
    }
}

/// `V_H = Γ(2−2H) cos(πH) / (πH(1−2H))`.
pub fn v_constant<T: Real>(h: T) -> Result<T> {
    check_hurst(h)?;
    let two = T::lit(2.0);
    Ok(gamma(two - two * h) * (T::PI() * h).cos() / (T::PI() * h * (T::one() - two * h)))
}

/// `R_H(s,t) = (V_H/2)(s^{2H} + t^{2H} − |t−s|^{2H})`.
pub fn covariance<T: Real>(h: T, s: T, t: T) -> Result<T> {
    if !(s >= T::zero() && t >= T::zero()) {
        return Err(SveError::parameter(format!("times must be nonnegative, got ({s}, {t})")));
    }
    let v = v_constant(h)?;
    let e = T::lit(2.0) * h;
    Ok(v * T::lit(0.5) * (s.powf(e) + t.powf(e) - (t - s).abs().powf(e)))
}

/// Matrix `[R_H(t_i, t_j)]`.
pub fn covariance_matrix<T: Real>(h: T, times: &[T]) -> Result<Vec<Vec<T>>> {
    times
        .iter()
        .map(|&s| times.iter().map(|&t| covariance(h, s, t)).collect())
        .collect()
}

/// `K_H(t,r) = (t−r)^{H−1/2}/Γ(H+1/2) · ₂F₁(1/2−H, H−1/2; H+1/2; 1−t/r)` for `0 < r < t`.
pub fn kernel_exact<T: Real>(h: T, t: T, r: T) -> Result<T> {
    check_hurst(h)?;
    if !(r > T::zero() && r < t) {
        return Err(SveError::domain(format!("K_H(t, r) needs 0 < r < t, got t={t}, r={r}")));
    }
    kernel_at_gap(h, r, t - r)
}

// K_H(r + gap, r), taking the gap directly so that it keeps full relative precision.
fn kernel_at_gap<T: Real>(h: T, r: T, gap: T) -> Result<T> {
    let half = T::lit(0.5);
    let f = gauss_2f1(half - h, h - half, h + half, -gap / r)?;
    Ok(gap.powf(h - half) / gamma(h + half) * f)
}

/// `C(t−s)^{H−1/2}` for `0 ≤ s < t`, zero otherwise.
pub fn kernel_simple<T: Real>(params: &FbmParams<T>, t: T, s: T) -> T {
    if s < t {
        // same expression as the power-law kernel with α = 1/2 − H
        params.scale * (t - s).powf(-params.alpha())
    } else {
        T::zero()
    }
}

/// `∫_0^{s∧t} K_H(s,r) K_H(t,r) dr` by adaptive quadrature after removing the
/// endpoint singularities with power substitutions.
pub fn covariance_from_kernel<T: Real>(h: T, s: T, t: T) -> Result<T> {
    check_hurst(h)?;
    if !(s >= T::zero() && t >= T::zero()) {
        return Err(SveError::parameter(format!("times must be nonnegative, got ({s}, {t})")));
    }
    let m = s.min(t);
    if m == T::zero() {
        return Ok(T::zero());
    }
    let half = T::lit(0.5);
    let singular = h < half;
    let one = T::one();
    // Both factors in terms of the distance d = m − r to the upper endpoint.
    let product = |r: T, d: T| -> T {
        match (kernel_at_gap(h, r, s - m + d), kernel_at_gap(h, r, t - m + d)) {
            (Ok(a), Ok(b)) => a * b,
            _ => T::nan(),
        }
    };
    let quad = AdaptiveQuad::with_tol(T::tol_floor(1e-14), T::tol_floor(1e-11));
    let mid = m * half;

    // r = (m/2) u^p with p = 1/(1 − |2H−1|) flattens r^{−|2H−1|} at the origin.
    let p0 = one / (one - (T::lit(2.0) * h - one).abs());
    let lower = quad.integrate(
        |u: T| {
            if u <= T::zero() {
                return T::zero();
            }
            let r = mid * u.powf(p0);
            product(r, m - r) * mid * p0 * u.powf(p0 - one)
        },
        T::zero(),
        one,
    )?;

    // r = m − (m/2) u^p flattens (m−r)^{H−1/2}, or (m−r)^{2H−1} on the diagonal.
    let p1 = match (singular, s == t) {
        (false, _) => one,
        (true, true) => one / (T::lit(2.0) * h),
        (true, false) => one / (h + half),
    };
    let upper = quad.integrate(
        |u: T| {
            if u <= T::zero() {
                return T::zero();
            }
            let d = mid * u.powf(p1);
            product(m - d, d) * mid * p1 * u.powf(p1 - one)
        },
        T::zero(),
        one,
    )?;
    Ok(lower.value + upper.value)
}

/// Precomputed midpoint weights `K_H(t_i, t_j + Δ/2)` for repeated synthesis on one grid.
#[derive(Debug, Clone)]
pub struct FbmSynthesizer<T> {
    hurst: T,
    grid: TimeGrid<T>,
    // row i holds the i weights for j < i
    weights: Vec<Vec<T>>,
}

impl<T: Real> FbmSynthesizer<T> {
    pub fn new(hurst: T, grid: TimeGrid<T>) -> Result<Self> {
        check_hurst(hurst)?;
        let dt = grid.dt();
        let half = T::lit(0.5);
        let mut weights = Vec::with_capacity(grid.len());
        for i in 0..=grid.steps() {
            let ti = grid.node(i);
            let row = (0..i)
                .map(|j| kernel_exact(hurst, ti, (T::from_usize_lossy(j) + half) * dt))
                .collect::<Result<Vec<_>>>()?;
            weights.push(row);
        }
        Ok(Self {
            hurst,
            grid,
            weights,
        })
    }

    pub fn hurst(&self) -> T {
        self.hurst
    }

    /// `B^H_{t_i} = Σ_{j<i} K_H(t_i, t_j + Δ/2) ΔB_j`.
    pub fn sample(&self, driver: &BrownianDriver<T>) -> Result<SamplePath<T>> {
        driver.check_grid(&self.grid)?;
        let db = driver.increments();
        let values = self
            .weights
            .iter()
            .map(|row| row.iter().zip(db).map(|(&w, &d)| w * d).sum())
            .collect();
        SamplePath::new(self.grid, values)
    }
}

/// One fBm path on the driver's grid.
pub fn fbm_sample<T: Real>(
    hurst: T,
    grid: TimeGrid<T>,
    driver: &BrownianDriver<T>,
) -> Result<SamplePath<T>> {
    FbmSynthesizer::new(hurst, grid)?.sample(driver)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn v_constant_reference_values() {
        // Γ(3/2) cos(π/4) / (π/8)
        let v = v_constant(0.25_f64).unwrap();
        assert!(rel(v, 1.595_769_121_605_731) < 1e-12, "{v}");
        assert!(v_constant(0.1_f64).unwrap() > 0.0);
        // Γ(1.2) cos(0.4π) / (0.08π), oracle from Python math.gamma
        assert!(rel(v_constant(0.4_f64).unwrap(), 1.128_924_785_893_195) < 1e-12);
        assert!(matches!(v_constant(0.5_f64), Err(SveError::Domain(_))));
    }

    #[test]
    fn covariance_identities() {
        let h = 0.25_f64;
        let v = v_constant(h).unwrap();
        assert!(rel(covariance(h, 1.7, 1.7).unwrap(), v * 1.7f64.sqrt()) < 1e-14);
        assert_eq!(covariance(h, 2.0, 0.0).unwrap(), 0.0);
        assert!(rel(covariance(h, 1.0, 2.0).unwrap(), v / 2f64.sqrt()) < 1e-14);
        assert!(covariance(h, -1.0, 1.0).is_err());
    }

    #[test]
    fn simple_kernel_values() {
        let p = FbmParams::new(0.25_f64, 1.0).unwrap();
        assert_eq!(kernel_simple(&p, 1.0, 0.0), 1.0);
        assert!((kernel_simple(&p, 1.0, 0.5) - 1.189_207_115_002_721).abs() < 1e-14);
        assert_eq!(kernel_simple(&p, 1.0, 1.0), 0.0);
        assert_eq!(kernel_simple(&p, 1.0, 3.0), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(FbmParams::new(0.0_f64, 1.0).is_err());
        assert!(FbmParams::new(0.5_f64, 1.0).is_err());
        assert!(FbmParams::new(0.3_f64, 0.0).is_err());
        assert!(FbmParams::new(0.7_f64, 1.0).is_ok());
        assert!(FbmParams::for_sve(0.7_f64, 1.0).is_err());
        let p = FbmParams::for_sve(0.25_f64, 2.0).unwrap();
        assert_eq!(p.alpha(), 0.25);
        assert_eq!(p.theta(), 2.0);
    }

    #[test]
    fn exact_kernel_near_diagonal() {
        let h = 0.25_f64;
        let t = 1.0;
        for &eps in &[1e-3_f64, 1e-5, 1e-7] {
            let r = t - eps;
            let lead = eps.powf(h - 0.5) / gamma(h + 0.5);
            let ratio = kernel_exact(h, t, r).unwrap() / lead;
            assert!((ratio - 1.0).abs() < 10.0 * eps, "eps={eps}: {ratio}");
        }
        assert!(kernel_exact(h, 1.0, 1.0).is_err());
        assert!(kernel_exact(h, 1.0, 0.0).is_err());
    }

    #[test]
    fn covariance_reconstruction() {
        for &h in &[0.1_f64, 0.25, 0.4, 0.7] {
            for &s in &[0.3, 1.0, 2.0] {
                for &t in &[0.5, 1.0, 1.5] {
                    let q = covariance_from_kernel(h, s, t).unwrap_or_else(|e| panic!("H={h} s={s} t={t}: {e}"));
                    let r = covariance(h, s, t).unwrap();
                    assert!(rel(q, r) < 1e-6, "H={h} s={s} t={t}: {q} vs {r}");
                }
            }
        }
        assert_eq!(covariance_from_kernel(0.25_f64, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn covariance_matrix_is_psd() {
        use nalgebra::DMatrix;
        for &h in &[0.1_f64, 0.25, 0.4, 0.8] {
            let times: Vec<f64> = (1..=12).map(|i| 0.17 * i as f64).collect();
            let m = covariance_matrix(h, &times).unwrap();
            let n = times.len();
            let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
            let trace = mat.trace();
            let min = mat.symmetric_eigenvalues().min();
            assert!(min >= -1e-8 * trace, "H={h}: {min}");
        }
    }

    #[test]
    fn synthesis_starts_at_zero_and_checks_grid() {
        let g = TimeGrid::new(1.0_f64, 16).unwrap();
        let d = BrownianDriver::generate(1, g);
        let p = fbm_sample(0.25, g, &d).unwrap();
        assert_eq!(p.value(0), 0.0);
        let other = TimeGrid::new(1.0_f64, 8).unwrap();
        assert!(fbm_sample(0.25, other, &d).is_err());
        assert!(FbmSynthesizer::new(0.5, g).is_err());
    }

    #[test]
    fn synthesized_moments_match_covariance() {
        let grid = TimeGrid::new(1.0_f64, 256).unwrap();
        for &h in &[0.25_f64, 0.4] {
            let synth = FbmSynthesizer::new(h, grid).unwrap();
            let paths = 10_000;
            let (i, k, l) = (128usize, 256usize, 192usize);
            let mut xs = Vec::with_capacity(paths);
            for seed in 0..paths as u64 {
                let p = synth.sample(&BrownianDriver::generate(seed, grid)).unwrap();
                xs.push((p.value(i), p.value(k), p.value(l)));
            }
            let nf = paths as f64;
            let check = |samples: Vec<f64>, target: f64, what: &str| {
                let mean = samples.iter().sum::<f64>() / nf;
                let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
                let se = (var / nf).sqrt();
                assert!((mean - target).abs() < 3.0 * se, "H={h} {what}: {mean} vs {target} (se {se})");
            };
            let (s, t, u) = (grid.node(i), grid.node(k), grid.node(l));
            check(xs.iter().map(|x| x.1 * x.1).collect(), covariance(h, t, t).unwrap(), "var");
            check(xs.iter().map(|x| x.0 * x.1).collect(), covariance(h, s, t).unwrap(), "cov");
            let inc = v_constant(h).unwrap() * (t - u).powf(2.0 * h);
            check(xs.iter().map(|x| (x.1 - x.2).powi(2)).collect(), inc, "increment");
        }
    }

    proptest! {
        #[test]
        fn pfaff_pivots_agree(a in -1.5f64..1.5, b in -1.5f64..1.5, c in 0.2f64..3.0, z in -200.0f64..0.0) {
            use crate::special::{gauss_2f1_via, PfaffPivot};
            let va = gauss_2f1_via(a, b, c, z, PfaffPivot::A).unwrap();
            let vb = gauss_2f1_via(a, b, c, z, PfaffPivot::B).unwrap();
            prop_assert!((va - vb).abs() <= 1e-10 * va.abs().max(1e-12), "{} vs {}", va, vb);
        }

        #[test]
        fn hypergeometric_symmetry(a in -1.5f64..1.5, b in -1.5f64..1.5, c in 0.2f64..3.0, z in -200.0f64..0.0) {
            let ab = gauss_2f1(a, b, c, z).unwrap();
            let ba = gauss_2f1(b, a, c, z).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-10 * ab.abs().max(1e-12), "{} vs {}", ab, ba);
        }
    }
}
