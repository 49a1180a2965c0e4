use crate::coefficients::CoefficientPair;
use crate::error::{Result, SveError};
use crate::scalar::Real;

use super::grid::{BrownianDriver, SamplePath, TimeGrid};
use super::kernel::{KernelWeights, SingularKernel, StochasticWeights};

/// Magnitude above which a solution is declared to have blown up.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Euler scheme for `X_t = g(t) + ∫K(t,s)b(s,X_s)ds + ∫K(t,s)σ(s,X_s)dB_s` with
/// weights precomputed once per (kernel, grid).
#[derive(Debug, Clone)]
pub struct VolterraSolver<T> {
    kernel: SingularKernel<T>,
    grid: TimeGrid<T>,
    weights: KernelWeights<T>,
}

/// Result of a Picard iteration.
#[derive(Debug, Clone)]
pub struct PicardOutcome<T> {
    pub path: SamplePath<T>,
    pub iterations: usize,
    /// `max_i |U^{(k)}_i − U^{(k−1)}_i|` for each iteration `k`.
    pub gaps: Vec<T>,
}

/// Paths for a sequence of mollification levels on one driver.
#[derive(Debug, Clone)]
pub struct MollifiedOutcome<T> {
    pub levels: Vec<usize>,
    pub paths: Vec<SamplePath<T>>,
    pub order: T,
    /// `gaps[a][b] = (1/n) Σ_i |U^{m_a}_i − U^{m_b}_i|^p`.
    pub gaps: Vec<Vec<T>>,
}

impl<T: Real> VolterraSolver<T> {
    pub fn new(kernel: SingularKernel<T>, grid: TimeGrid<T>) -> Result<Self> {
        Self::with_weights(kernel, grid, StochasticWeights::default())
    }

    pub fn with_weights(kernel: SingularKernel<T>, grid: TimeGrid<T>, mode: StochasticWeights) -> Result<Self> {
        let weights = KernelWeights::build(&kernel, &grid, mode)?;
        Ok(Self { kernel, grid, weights })
    }

    pub fn kernel(&self) -> &SingularKernel<T> {
        &self.kernel
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn weights(&self) -> &KernelWeights<T> {
        &self.weights
    }

    fn g_values(&self, g: impl Fn(T) -> T) -> Vec<T> {
        (0..=self.grid.steps()).map(|i| g(self.grid.node(i))).collect()
    }

    /// One Euler solve with `g` evaluated at the nodes.
    pub fn solve(
        &self,
        coeffs: &CoefficientPair<T>,
        driver: &BrownianDriver<T>,
        g: impl Fn(T) -> T,
    ) -> Result<SamplePath<T>> {
        self.solve_with_forcing(coeffs, driver, &self.g_values(g))
    }

    /// One Euler solve with the forcing given node by node.
    pub fn solve_with_forcing(
        &self,
        coeffs: &CoefficientPair<T>,
        driver: &BrownianDriver<T>,
        g: &[T],
    ) -> Result<SamplePath<T>> {
        driver.check_grid(&self.grid)?;
        let n = self.grid.steps();
        if g.len() != n + 1 {
            return Err(SveError::parameter(format!("forcing has {} values for {} nodes", g.len(), n + 1)));
        }
        let db = driver.increments();
        let limit = T::lit(BLOW_UP_THRESHOLD);
        let mut x = Vec::with_capacity(n + 1);
        let mut drift = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        for i in 0..=n {
            let mut acc = g[i];
            for j in 0..i {
                acc = acc + self.weights.drift(i, j) * drift[j];
            }
            for j in 0..i {
                acc = acc + self.weights.diffusion(i, j) * noise[j];
            }
            let t = self.grid.node(i);
            if !acc.is_finite() || acc.abs() > limit {
                return Err(SveError::BlowUp {
                    step: i,
                    t: t.as_f64(),
                    value: acc.as_f64(),
                });
            }
            x.push(acc);
            if i < n {
                drift.push(coeffs.b.eval(t, acc));
                noise.push(coeffs.sigma.eval(t, acc) * db[i]);
            }
        }
        SamplePath::new(self.grid, x)
    }

    /// Picard iterates `U^{(k)} = Φ(U^{(k−1)})`, `U^{(0)} = g`, on the same driver.
    pub fn picard(
        &self,
        coeffs: &CoefficientPair<T>,
        driver: &BrownianDriver<T>,
        g: impl Fn(T) -> T,
        max_iter: usize,
        tol: T,
    ) -> Result<PicardOutcome<T>> {
        if !coeffs.is_lipschitz() {
            return Err(SveError::parameter(
                "Picard iteration needs Lipschitz coefficients (both exponents equal to 1)",
            ));
        }
        driver.check_grid(&self.grid)?;
        let n = self.grid.steps();
        let db = driver.increments();
        let gv = self.g_values(g);
        let mut current = gv.clone();
        let mut gaps = Vec::new();
        for k in 1..=max_iter {
            let drift: Vec<T> = (0..n)
                .map(|j| coeffs.b.eval(self.grid.node(j), current[j]))
                .collect();
            let noise: Vec<T> = (0..n)
                .map(|j| coeffs.sigma.eval(self.grid.node(j), current[j]) * db[j])
                .collect();
            let mut next = Vec::with_capacity(n + 1);
            for i in 0..=n {
                let mut acc = gv[i];
                for j in 0..i {
                    acc = acc + self.weights.drift(i, j) * drift[j];
                }
                for j in 0..i {
                    acc = acc + self.weights.diffusion(i, j) * noise[j];
                }
                if !acc.is_finite() {
                    return Err(SveError::BlowUp {
                        step: i,
                        t: self.grid.node(i).as_f64(),
                        value: acc.as_f64(),
                    });
                }
                next.push(acc);
            }
            let gap = next
                .iter()
                .zip(&current)
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max);
            gaps.push(gap);
            current = next;
            if gap <= tol {
                return Ok(PicardOutcome {
                    path: SamplePath::new(self.grid, current)?,
                    iterations: k,
                    gaps,
                });
            }
        }
        Err(SveError::NotConverged {
            gaps: gaps.iter().map(|g| g.as_f64()).collect(),
        })
    }

    /// Solves with `(b^m, σ^m)` for each `m` on the same driver and reports pairwise gaps.
    pub fn mollified(
        &self,
        coeffs: &CoefficientPair<T>,
        driver: &BrownianDriver<T>,
        g: impl Fn(T) -> T,
        levels: &[usize],
        order: T,
    ) -> Result<MollifiedOutcome<T>> {
        if levels.is_empty() {
            return Err(SveError::parameter("mollification needs at least one level"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SveError::parameter("mollification levels must be increasing"));
        }
        let gv = self.g_values(g);
        let paths = levels
            .iter()
            .map(|&m| self.solve_with_forcing(&coeffs.mollified(m)?, driver, &gv))
            .collect::<Result<Vec<_>>>()?;
        let gaps = paths
            .iter()
            .map(|a| paths.iter().map(|b| lp_gap(a, b, order)).collect())
            .collect();
        Ok(MollifiedOutcome {
            levels: levels.to_vec(),
            paths,
            order,
            gaps,
        })
    }
}

/// `(1/n) Σ_i |a_i − b_i|^p`.
pub fn lp_gap<T: Real>(a: &SamplePath<T>, b: &SamplePath<T>, p: T) -> T {
    let n = T::from_usize_lossy(a.grid().steps());
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (*x - *y).abs().powf(p))
        .sum::<T>()
        / n
}

/// Gap order: 4 when it lies above the moment window `2/(1−2α)`, else `⌈2/(1−2α)⌉ + 2`.
pub fn default_gap_order(alpha: f64) -> f64 {
    let window = 2.0 / (1.0 - 2.0 * alpha);
    if window < 4.0 {
        4.0
    } else {
        window.ceil() + 2.0
    }
}

/// Euler solve with default weights.
pub fn euler_solve<T: Real>(
    kernel: &SingularKernel<T>,
    coeffs: &CoefficientPair<T>,
    driver: &BrownianDriver<T>,
    g: impl Fn(T) -> T,
) -> Result<SamplePath<T>> {
    VolterraSolver::new(*kernel, *driver.grid())?.solve(coeffs, driver, g)
}

/// Picard iteration with default weights.
pub fn picard_solve<T: Real>(
    kernel: &SingularKernel<T>,
    coeffs: &CoefficientPair<T>,
    driver: &BrownianDriver<T>,
    g: impl Fn(T) -> T,
    max_iter: usize,
    tol: T,
) -> Result<PicardOutcome<T>> {
    VolterraSolver::new(*kernel, *driver.grid())?.picard(coeffs, driver, g, max_iter, tol)
}

/// Mollified solution sequence with default weights.
pub fn mollified_solve<T: Real>(
    kernel: &SingularKernel<T>,
    coeffs: &CoefficientPair<T>,
    driver: &BrownianDriver<T>,
    g: impl Fn(T) -> T,
    levels: &[usize],
    order: T,
) -> Result<MollifiedOutcome<T>> {
    VolterraSolver::new(*kernel, *driver.grid())?.mollified(coeffs, driver, g, levels, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{fixture, HolderCoefficient};
    use crate::quadrature::AdaptiveQuad;

    fn grid(n: usize) -> TimeGrid<f64> {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn zero_coefficients_return_forcing() {
        let g = grid(32);
        let d = BrownianDriver::generate(1, g);
        let k = SingularKernel::power_law(0.3).unwrap();
        let p = euler_solve(&k, &fixture("zero").unwrap(), &d, |t: f64| t.sin() + 2.0).unwrap();
        for (i, v) in p.values().iter().enumerate() {
            assert_eq!(*v, g.node(i).sin() + 2.0);
        }
    }

    #[test]
    fn mismatched_driver_is_rejected() {
        let d = BrownianDriver::generate(1, grid(16));
        let s = VolterraSolver::new(SingularKernel::power_law(0.3).unwrap(), grid(32)).unwrap();
        let err = s.solve(&fixture("lipschitz").unwrap(), &d, |_| 0.0).unwrap_err();
        assert!(matches!(err, SveError::Parameter(_)));
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let d = BrownianDriver::generate(1, grid(64));
        let b = HolderCoefficient::new("x^3", 1.0, 1.0, false, |_, x: f64| x * x * x).unwrap();
        let pair = CoefficientPair::new(b, HolderCoefficient::constant_value("0", 0.0)).unwrap();
        let err = euler_solve(&SingularKernel::power_law(0.3).unwrap(), &pair, &d, |_| 5.0).unwrap_err();
        assert!(matches!(err, SveError::BlowUp { step, .. } if step > 0));
    }

    #[test]
    fn deterministic_solution_matches_fine_quadrature_oracle() {
        // X_t = 1 − ∫_0^t (t−s)^{−α} X_s ds, oracle: product-trapezoid solve on a 8x finer grid
        let alpha = 0.3;
        let k = SingularKernel::power_law(alpha).unwrap();
        let pair = fixture("degenerate").unwrap();
        let oracle = |n: usize| -> Vec<f64> {
            let dt = 1.0 / n as f64;
            let mut x = vec![1.0];
            for i in 1..=n {
                // linear interpolation of X on each cell, last value implicit
                let w = |l: f64| {
                    let i0 = (l.powf(1.0 - alpha) - (l - 1.0).powf(1.0 - alpha)) / (1.0 - alpha);
                    let i1 = (l.powf(2.0 - alpha) - (l - 1.0).powf(2.0 - alpha)) / (2.0 - alpha);
                    (dt.powf(1.0 - alpha) * (i1 - (l - 1.0) * i0), dt.powf(1.0 - alpha) * (l * i0 - i1))
                };
                let mut acc = 1.0;
                for j in 0..i {
                    let (a, b) = w((i - j) as f64);
                    acc -= a * x[j];
                    if j + 1 < i {
                        acc -= b * x[j + 1];
                    }
                }
                let (_, last) = w(1.0);
                x.push(acc / (1.0 + last));
            }
            x
        };
        let mut prev = f64::INFINITY;
        for n in [32, 64, 128] {
            let d = BrownianDriver::generate(0, grid(n));
            let p = euler_solve(&k, &pair, &d, |_| 1.0).unwrap();
            let fine = oracle(8 * n);
            let err = (0..=n)
                .map(|i| (p.value(i) - fine[8 * i]).abs())
                .fold(0.0, f64::max);
            assert!(err < prev, "n={n}: {err} vs {prev}");
            prev = err;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn picard_agrees_with_euler() {
        let g = grid(64);
        let d = BrownianDriver::generate(9, g);
        let k = SingularKernel::power_law(0.25).unwrap();
        for name in ["lipschitz", "degenerate", "zero"] {
            let pair = fixture(name).unwrap();
            let e = euler_solve(&k, &pair, &d, |_| 0.5).unwrap();
            let p = picard_solve(&k, &pair, &d, |_| 0.5, 200, 1e-13).unwrap();
            for (a, b) in e.values().iter().zip(p.path.values()) {
                assert!((a - b).abs() <= 1e-12, "{name}: {a} vs {b}");
            }
            if name == "zero" {
                assert_eq!(p.iterations, 1);
                assert_eq!(p.gaps, vec![0.0]);
            }
        }
    }

    #[test]
    fn picard_gaps_contract_on_short_horizon() {
        let g = TimeGrid::new(0.25, 64).unwrap();
        let d = BrownianDriver::generate(2, g);
        let k = SingularKernel::power_law(0.25).unwrap();
        let out = picard_solve(&k, &fixture("lipschitz").unwrap(), &d, |_| 1.0, 100, 1e-14).unwrap();
        let gaps = &out.gaps;
        assert!(gaps.len() > 3);
        for w in gaps.windows(2).skip(2) {
            assert!(w[1] <= w[0] || w[1] < 1e-14, "{gaps:?}");
        }
    }

    #[test]
    fn picard_rejects_holder_and_reports_non_convergence() {
        let g = grid(32);
        let d = BrownianDriver::generate(2, g);
        let k = SingularKernel::power_law(0.25).unwrap();
        assert!(picard_solve(&k, &fixture("holder").unwrap(), &d, |_| 1.0, 10, 1e-10).is_err());
        let err = picard_solve(&k, &fixture("lipschitz").unwrap(), &d, |_| 1.0, 2, 0.0).unwrap_err();
        assert!(matches!(err, SveError::NotConverged { ref gaps } if gaps.len() == 2));
    }

    #[test]
    fn mollified_lipschitz_paths_stay_close() {
        let g = grid(128);
        let d = BrownianDriver::generate(4, g);
        let k = SingularKernel::power_law(0.25).unwrap();
        let out = mollified_solve(&k, &fixture("lipschitz").unwrap(), &d, |_| 1.0, &[4, 16, 64], 4.0).unwrap();
        let e = euler_solve(&k, &fixture("lipschitz").unwrap(), &d, |_| 1.0).unwrap();
        for p in &out.paths {
            let sup = p.values().iter().zip(e.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(sup < 1e-5, "{sup}");
        }
        assert_eq!(out.gaps[1][1], 0.0);
        assert_eq!(out.gaps[0][2], out.gaps[2][0]);
        assert!(mollified_solve(&k, &fixture("lipschitz").unwrap(), &d, |_| 1.0, &[4, 4], 4.0).is_err());
    }

    #[test]
    fn mollified_deterministic_gap_bounded_by_sup_distance() {
        // σ = 0, b(x) = −sgn|x|^{1/2}: |U^m − U| ≤ sup|b^m − b| · kernel mass · Lipschitz-free bound
        let g = grid(128);
        let d = BrownianDriver::generate(0, g);
        let k = SingularKernel::power_law(0.25).unwrap();
        let b = crate::coefficients::signed_power_drift(0.5).unwrap();
        let pair = CoefficientPair::new(b, HolderCoefficient::constant_value("0", 0.0)).unwrap();
        let out = mollified_solve(&k, &pair, &d, |_| 1.0, &[4, 16, 64], 1.0).unwrap();
        let mass = AdaptiveQuad::default().integrate(|s: f64| (1.0 - s).powf(-0.25), 0.0, 1.0);
        let mass = mass.map(|r| r.value).unwrap_or(4.0 / 3.0);
        for (a, &m) in out.levels.iter().enumerate() {
            let bound = 2.0 * mass * (m as f64).powf(-0.5);
            assert!(out.gaps[a][2] <= bound, "m={m}: {} > {bound}", out.gaps[a][2]);
        }
    }

    #[test]
    fn gap_order_window() {
        assert_eq!(default_gap_order(0.1), 4.0);
        assert_eq!(default_gap_order(0.25), 6.0);
        assert_eq!(default_gap_order(0.3), 7.0);
    }

    #[test]
    fn solves_are_bitwise_deterministic() {
        let g = grid(128);
        let k = SingularKernel::power_law(0.35).unwrap();
        let pair = fixture("holder").unwrap();
        let a = euler_solve(&k, &pair, &BrownianDriver::generate(77, g), |_| 0.3).unwrap();
        let b = euler_solve(&k, &pair, &BrownianDriver::generate(77, g), |_| 0.3).unwrap();
        assert_eq!(a, b);
    }
}
