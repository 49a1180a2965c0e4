//! The θ-heat SPDE driven at the origin: the trace process `X_t(0)` as a Volterra
//! equation, the mild-solution field, and the weak-form residual.

mod test_functions;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use test_functions::{AdaptedBump, ClassicBump, TestFunction};

use crate::coefficients::CoefficientPair;
use crate::engine::{BrownianDriver, SamplePath, SingularKernel, TimeGrid, VolterraSolver};
use crate::error::{Result, SveError};
use crate::io::{fmt_f64, Table};
use crate::scalar::Real;
use crate::theta_kernel::{SpatialGrid, ThetaHeatKernel, TRUNCATION_WARN};

/// Relative tolerance of `(1/c_θ) p_Δ(0) = Δ^{−α}` checked before every trace solve.
pub const TRACE_IDENTITY_TOL: f64 = 1e-12;
/// Cells of the default spatial grid.
pub const DEFAULT_SPACE_CELLS: usize = 4096;

/// Initial condition `X_0(x)`; constants are carried exactly.
#[derive(Clone)]
pub enum InitialField<T> {
    Constant(T),
    /// A function with declared exponential growth rate `λ`.
    Function {
        f: Arc<dyn Fn(T) -> T + Send + Sync>,
        growth: T,
    },
}

impl<T: std::fmt::Debug> std::fmt::Debug for InitialField<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c:?})"),
            Self::Function { growth, .. } => write!(f, "Function {{ growth: {growth:?} }}"),
        }
    }
}

impl<T: Real> InitialField<T> {
    pub fn function(f: impl Fn(T) -> T + Send + Sync + 'static, growth: T) -> Self {
        Self::Function {
            f: Arc::new(f),
            growth,
        }
    }

    pub fn eval(&self, x: T) -> T {
        match self {
            Self::Constant(c) => *c,
            Self::Function { f, .. } => f(x),
        }
    }
}

/// Midpoint grid on `[−L, L]`, `L = 8 T^α max(1, θ)`, which never has a node at 0.
pub fn default_space<T: Real>(kernel: &ThetaHeatKernel<T>, horizon: T) -> Result<SpatialGrid<T>> {
    let half = T::lit(8.0) * horizon.powf(kernel.alpha()) * kernel.theta().max(T::one());
    SpatialGrid::midpoint(-half, half, DEFAULT_SPACE_CELLS)
}

fn semigroup_value<T: Real>(
    kernel: &ThetaHeatKernel<T>,
    x0: &InitialField<T>,
    t: T,
    x: T,
    grid: &SpatialGrid<T>,
) -> Result<T> {
    if t < T::zero() {
        return Err(SveError::parameter(format!("time must be nonnegative, got {t}")));
    }
    match x0 {
        InitialField::Constant(c) => Ok(*c),
        InitialField::Function { f, growth } => {
            if t == T::zero() {
                return Ok(f(x));
            }
            let r = kernel.semigroup_apply(t, |y| f(y), x, grid)?;
            let (lo, hi) = grid.bounds();
            let tail = r.tail_mass * (*growth * (lo.abs().max(hi.abs()) + T::one())).exp();
            if tail > T::lit(TRUNCATION_WARN) {
                return Err(SveError::numerical(format!(
                    "spatial grid [{lo}, {hi}] truncates S_t X_0 at t={t}, x={x}: tail estimate {tail:e}"
                )));
            }
            Ok(r.value)
        }
    }
}

/// `(S_t X_0)(0)`, the forcing of the trace equation; `X_0(0)` at `t = 0`.
pub fn initial_trace<T: Real>(
    kernel: &ThetaHeatKernel<T>,
    x0: &InitialField<T>,
    t: T,
    grid: &SpatialGrid<T>,
) -> Result<T> {
    semigroup_value(kernel, x0, t, T::zero(), grid)
}

/// Checks `(1/c_θ) p_{lΔ}(0) = (lΔ)^{−α}` for every lag on the grid.
pub fn check_trace_identity<T: Real>(kernel: &ThetaHeatKernel<T>, grid: &TimeGrid<T>) -> Result<()> {
    let dt = grid.dt();
    for l in 1..=grid.steps() {
        let gap = T::from_usize_lossy(l) * dt;
        let lhs = kernel.trace_ratio(gap)?;
        let rhs = gap.powf(-kernel.alpha());
        if (lhs - rhs).abs() > T::lit(TRACE_IDENTITY_TOL) * rhs {
            return Err(SveError::numerical(format!(
                "trace identity fails at gap {gap}: {lhs} vs {rhs}"
            )));
        }
    }
    Ok(())
}

/// Inputs of the field equation.
#[derive(Debug, Clone)]
pub struct FieldProblem<T> {
    pub kernel: ThetaHeatKernel<T>,
    pub coeffs: CoefficientPair<T>,
    pub initial: InitialField<T>,
    pub space: SpatialGrid<T>,
}

/// Trace path and everything needed to evaluate the field from it.
#[derive(Debug, Clone)]
pub struct FieldSolution<T> {
    problem: FieldProblem<T>,
    driver: BrownianDriver<T>,
    trace: SamplePath<T>,
    // F_k = b(t_k, X_k(0))Δ + σ(t_k, X_k(0))ΔB_k
    forcing: Vec<T>,
}

/// Solves the trace equation with kernel `(t−s)^{−α}` and forcing `(S_t X_0)(0)`.
pub fn solve_trace<T: Real>(problem: FieldProblem<T>, driver: BrownianDriver<T>) -> Result<FieldSolution<T>> {
    let grid = *driver.grid();
    check_trace_identity(&problem.kernel, &grid)?;
    let g = (0..=grid.steps())
        .map(|i| initial_trace(&problem.kernel, &problem.initial, grid.node(i), &problem.space))
        .collect::<Result<Vec<_>>>()?;
    let solver = VolterraSolver::new(SingularKernel::power_law(problem.kernel.alpha())?, grid)?;
    let trace = solver.solve_with_forcing(&problem.coeffs, &driver, &g)?;
    let dt = grid.dt();
    let forcing = (0..grid.steps())
        .map(|k| {
            let t = grid.node(k);
            let x = trace.value(k);
            problem.coeffs.b.eval(t, x) * dt + problem.coeffs.sigma.eval(t, x) * driver.increments()[k]
        })
        .collect();
    Ok(FieldSolution {
        problem,
        driver,
        trace,
        forcing,
    })
}

/// `⟨p_{lΔ}, φ⟩` and `⟨p_{lΔ}, Δ_θφ⟩` for every lag, shared by all paths on one grid.
#[derive(Debug, Clone)]
pub struct PairingTable<T> {
    phi_values: Vec<T>,
    dphi_values: Vec<T>,
    lag_phi: Vec<T>,
    lag_dphi: Vec<T>,
    phi_at_zero: T,
}

impl<T: Real> PairingTable<T> {
    pub fn new<F: TestFunction<T> + ?Sized>(
        kernel: &ThetaHeatKernel<T>,
        grid: &TimeGrid<T>,
        space: &SpatialGrid<T>,
        phi: &F,
    ) -> Result<Self> {
        let (lo, hi) = space.bounds();
        let r = phi.support_radius();
        if lo > -r || hi < r {
            return Err(SveError::parameter(format!(
                "spatial grid [{lo}, {hi}] does not cover the test function support radius {r}"
            )));
        }
        let theta = kernel.theta();
        let phi_values: Vec<T> = space.points().iter().map(|&x| phi.value(x)).collect();
        let dphi_values = space
            .points()
            .iter()
            .map(|&x| phi.delta_theta(theta, x))
            .collect::<Result<Vec<_>>>()?;
        let dt = grid.dt();
        let mut lag_phi = vec![T::zero(); grid.len()];
        let mut lag_dphi = vec![T::zero(); grid.len()];
        for l in 1..=grid.steps() {
            let s = T::from_usize_lossy(l) * dt;
            let (mut a, mut b) = (T::zero(), T::zero());
            for ((&x, &w), (&f, &d)) in space
                .points()
                .iter()
                .zip(space.weights())
                .zip(phi_values.iter().zip(&dphi_values))
            {
                let p = kernel.eval(s, x)? * w;
                a = a + p * f;
                b = b + p * d;
            }
            lag_phi[l] = a;
            lag_dphi[l] = b;
        }
        Ok(Self {
            phi_values,
            dphi_values,
            lag_phi,
            lag_dphi,
            phi_at_zero: phi.value(T::zero()),
        })
    }

    pub fn phi_at_zero(&self) -> T {
        self.phi_at_zero
    }

    /// `⟨p_{lΔ}, φ⟩`.
    pub fn lag_phi(&self, l: usize) -> T {
        self.lag_phi[l]
    }

    /// `⟨p_{lΔ}, Δ_θφ⟩`.
    pub fn lag_delta_phi(&self, l: usize) -> T {
        self.lag_dphi[l]
    }
}

/// `Z_r = ⟨X_r, φ⟩` and `D_r = ⟨X_r, Δ_θφ⟩` at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairings<T> {
    pub z: Vec<T>,
    pub d: Vec<T>,
}

/// Signed weak-form defect at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakResidual<T> {
    pub t: T,
    pub value: T,
}

/// Field values on a set of points at one node time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub theta: f64,
    pub seed: Option<u64>,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl FieldSnapshot {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["x", "value"]);
        for (x, v) in self.xs.iter().zip(&self.values) {
            t.push(vec![*x, *v]);
        }
        t
    }

    pub fn write_sidecar<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t = {}", fmt_f64(self.t))?;
        writeln!(out, "theta = {}", fmt_f64(self.theta))?;
        match self.seed {
            Some(s) => writeln!(out, "seed = {s}")?,
            None => writeln!(out, "seed = none")?,
        }
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.meta` into `dir`; returns both paths.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let csv = dir.join(format!("{stem}.csv"));
        let meta = dir.join(format!("{stem}.meta"));
        self.to_table().save(&csv)?;
        self.write_sidecar(std::io::BufWriter::new(std::fs::File::create(&meta)?))?;
        Ok((csv, meta))
    }
}

impl<T: Real> FieldSolution<T> {
    pub fn trace(&self) -> &SamplePath<T> {
        &self.trace
    }

    pub fn driver(&self) -> &BrownianDriver<T> {
        &self.driver
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        self.driver.grid()
    }

    pub fn problem(&self) -> &FieldProblem<T> {
        &self.problem
    }

    pub fn kernel(&self) -> &ThetaHeatKernel<T> {
        &self.problem.kernel
    }

    pub fn coeffs(&self) -> &CoefficientPair<T> {
        &self.problem.coeffs
    }

    fn node_index(&self, t: T) -> Result<usize> {
        self.grid().index_of(t).ok_or_else(|| {
            SveError::parameter(format!("t = {t} is not a grid node; the field is only evaluated at nodes"))
        })
    }

    /// `X_{t_i}(x)` by the mild formula with left-point drift weights.
    pub fn field_at_node(&self, i: usize, x: T) -> Result<T> {
        let grid = self.grid();
        let dt = grid.dt();
        let k = &self.problem.kernel;
        let mut acc = semigroup_value(k, &self.problem.initial, grid.node(i), x, &self.problem.space)?;
        let c = k.c_theta();
        for j in 0..i {
            let s = T::from_usize_lossy(i - j) * dt;
            acc = acc + k.eval(s, x)? / c * self.forcing[j];
        }
        Ok(acc)
    }

    /// `X_t(x)` for a node time `t`.
    pub fn field_evaluate(&self, t: T, x: T) -> Result<T> {
        self.field_at_node(self.node_index(t)?, x)
    }

    pub fn snapshot(&self, t: T, xs: &[T]) -> Result<FieldSnapshot> {
        let i = self.node_index(t)?;
        let values = xs
            .iter()
            .map(|&x| self.field_at_node(i, x).map(|v| v.as_f64()))
            .collect::<Result<Vec<_>>>()?;
        Ok(FieldSnapshot {
            t: self.grid().node(i).as_f64(),
            theta: self.kernel().theta().as_f64(),
            seed: self.driver.seed(),
            xs: xs.iter().map(|x| x.as_f64()).collect(),
            values,
        })
    }

    // ⟨S_r X_0, ψ⟩ with ψ given by its values on the spatial grid.
    fn initial_pairing(&self, r: T, psi: &[T]) -> Result<T> {
        let space = &self.problem.space;
        if let InitialField::Constant(c) = self.problem.initial {
            return Ok(c * space.weights().iter().zip(psi).map(|(&w, &v)| w * v).sum::<T>());
        }
        let mut acc = T::zero();
        for ((&x, &w), &v) in space.points().iter().zip(space.weights()).zip(psi) {
            acc = acc + w * v * semigroup_value(&self.problem.kernel, &self.problem.initial, r, x, space)?;
        }
        Ok(acc)
    }

    /// `⟨X_r, φ⟩` and `⟨X_r, Δ_θφ⟩` at every node through the per-lag pairings.
    pub fn pairings(&self, table: &PairingTable<T>) -> Result<Pairings<T>> {
        let grid = self.grid();
        let n = grid.steps();
        if table.lag_phi.len() != n + 1 || table.phi_values.len() != self.problem.space.len() {
            return Err(SveError::parameter("pairing table was built for a different grid"));
        }
        let c = self.kernel().c_theta();
        let scaled: Vec<T> = self.forcing.iter().map(|&f| f / c).collect();
        let mut z = Vec::with_capacity(n + 1);
        let mut d = Vec::with_capacity(n + 1);
        for r in 0..=n {
            let t = grid.node(r);
            let mut zr = self.initial_pairing(t, &table.phi_values)?;
            let mut dr = self.initial_pairing(t, &table.dphi_values)?;
            for k in 0..r {
                zr = zr + table.lag_phi[r - k] * scaled[k];
                dr = dr + table.lag_dphi[r - k] * scaled[k];
            }
            z.push(zr);
            d.push(dr);
        }
        Ok(Pairings { z, d })
    }

    /// `⟨X_{t_i}, φ⟩` and `⟨X_{t_i}, Δ_θφ⟩` by evaluating the field on the spatial grid.
    pub fn pairing_direct<F: TestFunction<T> + ?Sized>(&self, i: usize, phi: &F) -> Result<(T, T)> {
        let theta = self.kernel().theta();
        let space = &self.problem.space;
        let (mut z, mut d) = (T::zero(), T::zero());
        for (&x, &w) in space.points().iter().zip(space.weights()) {
            let v = self.field_at_node(i, x)? * w;
            z = z + v * phi.value(x);
            d = d + v * phi.delta_theta(theta, x)?;
        }
        Ok((z, d))
    }

    /// Weak-form defect at every node:
    /// `⟨X_t,φ⟩ − ⟨X_0,φ⟩ − Σ⟨X_s,Δ_θφ⟩Δ − Σ(φ(0)/c_θ)(bΔ + σΔB)`, left-point in time.
    pub fn weak_form_residuals(&self, table: &PairingTable<T>) -> Result<Vec<WeakResidual<T>>> {
        let pairs = self.pairings(table)?;
        let grid = self.grid();
        let dt = grid.dt();
        let scale = table.phi_at_zero / self.kernel().c_theta();
        let mut drift = T::zero();
        let mut noise = T::zero();
        let mut out = Vec::with_capacity(grid.len());
        for i in 0..=grid.steps() {
            if i > 0 {
                drift = drift + pairs.d[i - 1] * dt;
                noise = noise + scale * self.forcing[i - 1];
            }
            out.push(WeakResidual {
                t: grid.node(i),
                value: pairs.z[i] - pairs.z[0] - drift - noise,
            });
        }
        Ok(out)
    }

    /// Weak-form defect at a single node time.
    pub fn weak_form_residual<F: TestFunction<T> + ?Sized>(&self, phi: &F, t: T) -> Result<T> {
        let i = self.node_index(t)?;
        if i == 0 {
            return Ok(T::zero());
        }
        let table = PairingTable::new(self.kernel(), self.grid(), &self.problem.space, phi)?;
        Ok(self.weak_form_residuals(&table)?[i].value)
    }
}
