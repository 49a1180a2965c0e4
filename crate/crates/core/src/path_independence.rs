//! Additive functionals along a solution, the PDE systems that make them
//! path-independent, and residual reports for both the trace and the field level.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficients::CoefficientPair;
use crate::engine::{BrownianDriver, SamplePath, SingularKernel, TimeGrid, VolterraSolver};
use crate::error::{Result, SveError};
use crate::fbm::FbmParams;
use crate::io::fmt_f64;
use crate::scalar::Real;
use crate::spde::{FieldSolution, PairingTable};
use crate::theta_kernel::{KernelSlice, ThetaHeatKernel};

type Field2<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;
/// `g(r, X|_{[0,r]}, z)`: the path argument holds the values at nodes `0..=r` only.
pub type ProgressiveFn<T> = Arc<dyn Fn(T, &[T], T) -> T + Send + Sync>;

/// Default number of `z` probes.
pub const DEFAULT_Z_PROBES: usize = 41;

/// A scalar field `v(t, z)` with its partial derivatives `∂_t v`, `∂_z v`, `∂²_z v`.
#[derive(Clone)]
pub struct CandidateV<T> {
    name: String,
    v: Field2<T>,
    dt: Field2<T>,
    dz: Field2<T>,
    dzz: Field2<T>,
    bound: Option<T>,
}

impl<T: std::fmt::Debug> std::fmt::Debug for CandidateV<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CandidateV")
            .field("name", &self.name)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

impl<T: Real> CandidateV<T> {
    /// `bound`, when given, bounds `v` and each listed derivative in absolute value.
    pub fn new(
        name: impl Into<String>,
        v: impl Fn(T, T) -> T + Send + Sync + 'static,
        dt: impl Fn(T, T) -> T + Send + Sync + 'static,
        dz: impl Fn(T, T) -> T + Send + Sync + 'static,
        dzz: impl Fn(T, T) -> T + Send + Sync + 'static,
        bound: Option<T>,
    ) -> Self {
        Self {
            name: name.into(),
            v: Arc::new(v),
            dt: Arc::new(dt),
            dz: Arc::new(dz),
            dzz: Arc::new(dzz),
            bound,
        }
    }

    pub fn constant(c: T) -> Self {
        let zero = |_: T, _: T| T::zero();
        Self::new("constant", move |_, _| c, zero, zero, zero, Some(c.abs()))
    }

    /// `v(t, z) = z`.
    pub fn identity() -> Self {
        let zero = |_: T, _: T| T::zero();
        Self::new("identity", |_, z| z, zero, |_, _| T::one(), zero, None)
    }

    /// `v(t, z) = e^{−t} sin z`.
    pub fn exp_sin() -> Self {
        Self::new(
            "exp-sin",
            |t: T, z: T| (-t).exp() * z.sin(),
            |t: T, z: T| -(-t).exp() * z.sin(),
            |t: T, z: T| (-t).exp() * z.cos(),
            |t: T, z: T| -(-t).exp() * z.sin(),
            Some(T::one()),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bound(&self) -> Option<T> {
        self.bound
    }

    pub fn v(&self, t: T, z: T) -> T {
        (self.v)(t, z)
    }

    pub fn dt(&self, t: T, z: T) -> T {
        (self.dt)(t, z)
    }

    pub fn dz(&self, t: T, z: T) -> T {
        (self.dz)(t, z)
    }

    pub fn dzz(&self, t: T, z: T) -> T {
        (self.dzz)(t, z)
    }

    /// Largest deviation between the declared derivatives and central differences
    /// of step `h` at random probes in `[0, horizon] × [−range, range]`.
    /// Also checks the declared bound.
    pub fn check(&self, probes: usize, horizon: T, range: T, h: T, seed: u64) -> Result<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let two = T::lit(2.0);
        let mut worst = T::zero();
        for _ in 0..probes {
            let t = horizon * T::lit(rng.random::<f64>()) + h;
            let z = range * T::lit(rng.random_range(-1.0..1.0));
            let ft = ((self.v)(t + h, z) - (self.v)(t - h, z)) / (two * h);
            let fz = ((self.v)(t, z + h) - (self.v)(t, z - h)) / (two * h);
            let fzz = ((self.v)(t, z + h) - two * (self.v)(t, z) + (self.v)(t, z - h)) / (h * h);
            for (a, b) in [(ft, self.dt(t, z)), (fz, self.dz(t, z)), (fzz, self.dzz(t, z))] {
                worst = worst.max((a - b).abs());
            }
            if let Some(m) = self.bound {
                let vals = [self.v(t, z), self.dt(t, z), self.dz(t, z), self.dzz(t, z)];
                if vals.iter().any(|x| x.abs() > m) {
                    return Err(SveError::domain(format!(
                        "{} exceeds its declared bound {m} at t={t}, z={z}",
                        self.name
                    )));
                }
            }
        }
        Ok(worst)
    }
}

/// `f_{s,t} = ∫ g₁(r, X|_{[0,r]}, X_r) dr + ∫ g₂(r, X|_{[0,r]}, X_r) dB_r`.
#[derive(Clone)]
pub struct AdditiveFunctional<T> {
    pub g1: ProgressiveFn<T>,
    pub g2: ProgressiveFn<T>,
}

impl<T> std::fmt::Debug for AdditiveFunctional<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("AdditiveFunctional { .. }")
    }
}

impl<T: Real> AdditiveFunctional<T> {
    pub fn new(
        g1: impl Fn(T, &[T], T) -> T + Send + Sync + 'static,
        g2: impl Fn(T, &[T], T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            g1: Arc::new(g1),
            g2: Arc::new(g2),
        }
    }

    /// `g₁` at node `i`, reading the path only through node `i`.
    pub fn g1_at(&self, path: &SamplePath<T>, i: usize, z: T) -> T {
        (self.g1)(path.grid().node(i), &path.values()[..=i], z)
    }

    pub fn g2_at(&self, path: &SamplePath<T>, i: usize, z: T) -> T {
        (self.g2)(path.grid().node(i), &path.values()[..=i], z)
    }

    /// Adds `eps` to `g₁`.
    pub fn shift_g1(&self, eps: T) -> Self {
        let g1 = self.g1.clone();
        Self {
            g1: Arc::new(move |r, p, z| g1(r, p, z) + eps),
            g2: self.g2.clone(),
        }
    }

    /// Adds `eps` to `g₂`.
    pub fn shift_g2(&self, eps: T) -> Self {
        let g2 = self.g2.clone();
        Self {
            g1: self.g1.clone(),
            g2: Arc::new(move |r, p, z| g2(r, p, z) + eps),
        }
    }
}

fn node_pair<T: Real>(grid: &TimeGrid<T>, s: T, t: T) -> Result<(usize, usize)> {
    let i = grid
        .index_of(s)
        .ok_or_else(|| SveError::parameter(format!("s = {s} is not a grid node")))?;
    let j = grid
        .index_of(t)
        .ok_or_else(|| SveError::parameter(format!("t = {t} is not a grid node")))?;
    if i >= j {
        return Err(SveError::parameter(format!("need s < t, got s={s}, t={t}")));
    }
    Ok((i, j))
}

/// Left-point sums of `f_{s,t}` along `path`, with `z = X_r`.
pub fn ito_functional<T: Real>(
    af: &AdditiveFunctional<T>,
    path: &SamplePath<T>,
    driver: &BrownianDriver<T>,
    s: T,
    t: T,
) -> Result<T> {
    if path.grid() != driver.grid() {
        return Err(SveError::parameter("path and driver live on different grids"));
    }
    let (i, j) = node_pair(path.grid(), s, t)?;
    let dt = path.grid().dt();
    let db = driver.increments();
    let mut drift = T::zero();
    let mut noise = T::zero();
    for k in i..j {
        let x = path.value(k);
        drift = drift + af.g1_at(path, k, x) * dt;
        noise = noise + af.g2_at(path, k, x) * db[k];
    }
    Ok(drift + noise)
}

/// The functional that makes `v` path-independent:
/// `g₁ = ∂_r v + ½∂²_z v (σ/c_θ)² + ∂_z v b/c_θ`, `g₂ = ∂_z v σ/c_θ`,
/// with `b`, `σ` evaluated at the current path value.
pub fn derive_g_from_v<T: Real>(v: &CandidateV<T>, coeffs: &CoefficientPair<T>, c_theta: T) -> AdditiveFunctional<T> {
    let (v1, c1) = (v.clone(), coeffs.clone());
    let (v2, c2) = (v.clone(), coeffs.clone());
    AdditiveFunctional::new(
        move |r, prefix: &[T], z| lhs1(&v1, &c1, c_theta, r, current(prefix), z),
        move |r, prefix: &[T], z| lhs2(&v2, &c2, c_theta, r, current(prefix), z),
    )
}

fn current<T: Real>(prefix: &[T]) -> T {
    *prefix.last().expect("path prefix includes the current node")
}

fn lhs1<T: Real>(v: &CandidateV<T>, coeffs: &CoefficientPair<T>, c: T, r: T, x: T, z: T) -> T {
    let s = coeffs.sigma.eval(r, x) / c;
    v.dt(r, z) + T::lit(0.5) * v.dzz(r, z) * s * s + v.dz(r, z) * coeffs.b.eval(r, x) / c
}

fn lhs2<T: Real>(v: &CandidateV<T>, coeffs: &CoefficientPair<T>, c: T, r: T, x: T, z: T) -> T {
    v.dz(r, z) * coeffs.sigma.eval(r, x) / c
}

/// Row kind of a [`ResidualReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    /// Drift equation defect at `(r, z)`.
    Residual1,
    /// Diffusion equation defect at `(r, z)`.
    Residual2,
    /// Pathwise gap for the pair `(s, t)`, stored as `(r, z) = (s, t)`.
    Gap,
}

impl ResidualKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Residual1 => "residual1",
            Self::Residual2 => "residual2",
            Self::Gap => "gap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualEntry {
    pub kind: ResidualKind,
    pub r: f64,
    pub z: f64,
    pub value: f64,
}

/// Evaluated residuals and pathwise gaps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
    /// `(n, median gap)` rows when several grids were compared.
    pub refinement: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

impl ResidualReport {
    pub fn push(&mut self, kind: ResidualKind, r: f64, z: f64, value: f64) {
        self.entries.push(ResidualEntry { kind, r, z, value });
    }

    pub fn values(&self, kind: ResidualKind) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().filter(move |e| e.kind == kind).map(|e| e.value)
    }

    /// Largest absolute value of one kind; 0 when there is none.
    pub fn max_abs(&self, kind: ResidualKind) -> f64 {
        self.values(kind).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn median_abs(&self, kind: ResidualKind) -> f64 {
        median(self.values(kind).map(f64::abs).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.is_finite() && e.r.is_finite() && e.z.is_finite())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["kind", "r", "z", "value"])?;
        for e in &self.entries {
            w.write_record([e.kind.as_str().to_owned(), fmt_f64(e.r), fmt_f64(e.z), fmt_f64(e.value)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        use ResidualKind::*;
        let mut s = String::new();
        for kind in [Residual1, Residual2, Gap] {
            let count = self.values(kind).count();
            let _ = writeln!(s, "{}_count = {count}", kind.as_str());
            if count > 0 {
                let _ = writeln!(s, "{}_max_abs = {}", kind.as_str(), fmt_f64(self.max_abs(kind)));
                let _ = writeln!(s, "{}_median_abs = {}", kind.as_str(), fmt_f64(self.median_abs(kind)));
            }
        }
        if !self.refinement.is_empty() {
            let _ = writeln!(s, "# n, median gap");
            for (n, g) in &self.refinement {
                let _ = writeln!(s, "{n}, {}", fmt_f64(*g));
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "# warning: {w}");
        }
        s
    }

    /// Writes `<stem>.csv` and `<stem>.summary.txt` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let csv = dir.join(format!("{stem}.csv"));
        let txt = dir.join(format!("{stem}.summary.txt"));
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
        std::fs::write(&txt, self.summary())?;
        Ok((csv, txt))
    }
}

/// `DEFAULT_Z_PROBES`-style probes over the path range widened by 20%.
pub fn default_zprobes<T: Real>(path: &SamplePath<T>, count: usize) -> Vec<T> {
    let (lo, hi) = path
        .values()
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(a, b), &x| (a.min(x), b.max(x)));
    let width = hi - lo;
    let pad = if width > T::zero() { T::lit(0.1) * width } else { T::one() };
    let (lo, hi) = (lo - pad, hi + pad);
    if count < 2 {
        return vec![(lo + hi) * T::lit(0.5)];
    }
    let step = (hi - lo) / T::from_usize_lossy(count - 1);
    (0..count).map(|k| lo + step * T::from_usize_lossy(k)).collect()
}

/// All pairs `s < t` from `{T/8, T/4, T/2, T}`.
pub fn dyadic_pairs<T: Real>(horizon: T) -> Vec<(T, T)> {
    let pts: Vec<T> = [8.0, 4.0, 2.0, 1.0].iter().map(|&d| horizon / T::lit(d)).collect();
    let mut out = Vec::new();
    for (a, &s) in pts.iter().enumerate() {
        for &t in &pts[a + 1..] {
            out.push((s, t));
        }
    }
    out
}

/// Defects of the drift and diffusion equations at every node and probe,
/// signed as `(v-expression) − g`.
pub fn residual_scan<T: Real>(
    v: &CandidateV<T>,
    af: &AdditiveFunctional<T>,
    coeffs: &CoefficientPair<T>,
    c_theta: T,
    path: &SamplePath<T>,
    zprobes: &[T],
) -> ResidualReport {
    let mut report = ResidualReport::default();
    for i in 0..path.grid().len() {
        let r = path.grid().node(i);
        let x = path.value(i);
        for &z in zprobes {
            let r1 = lhs1(v, coeffs, c_theta, r, x, z) - af.g1_at(path, i, z);
            let r2 = lhs2(v, coeffs, c_theta, r, x, z) - af.g2_at(path, i, z);
            report.push(ResidualKind::Residual1, r.as_f64(), z.as_f64(), r1.as_f64());
            report.push(ResidualKind::Residual2, r.as_f64(), z.as_f64(), r2.as_f64());
        }
    }
    report
}

/// `|f_{s,t} − (v(t, X_t) − v(s, X_s))|` for each pair, appended to `report`.
pub fn pathwise_gaps<T: Real>(
    report: &mut ResidualReport,
    v: &CandidateV<T>,
    af: &AdditiveFunctional<T>,
    path: &SamplePath<T>,
    driver: &BrownianDriver<T>,
    pairs: &[(T, T)],
) -> Result<()> {
    for &(s, t) in pairs {
        let (i, j) = node_pair(path.grid(), s, t)?;
        let f = ito_functional(af, path, driver, s, t)?;
        let gap = (f - (v.v(t, path.value(j)) - v.v(s, path.value(i)))).abs();
        report.push(ResidualKind::Gap, s.as_f64(), t.as_f64(), gap.as_f64());
    }
    Ok(())
}

/// Solves the equation with `kernel`, derives `g` from `v`, and reports the
/// residuals on the default probes together with the pathwise gaps.
pub fn verify_path_independence<T: Real>(
    kernel: SingularKernel<T>,
    v: &CandidateV<T>,
    coeffs: &CoefficientPair<T>,
    x0: T,
    driver: &BrownianDriver<T>,
    pairs: &[(T, T)],
) -> Result<ResidualReport> {
    let path = VolterraSolver::new(kernel, *driver.grid())?.solve(coeffs, driver, |_| x0)?;
    let c = ThetaHeatKernel::from_alpha(kernel.alpha())?.c_theta();
    report_for_path(v, coeffs, c, &path, driver, pairs)
}

fn report_for_path<T: Real>(
    v: &CandidateV<T>,
    coeffs: &CoefficientPair<T>,
    c: T,
    path: &SamplePath<T>,
    driver: &BrownianDriver<T>,
    pairs: &[(T, T)],
) -> Result<ResidualReport> {
    let af = derive_g_from_v(v, coeffs, c);
    let mut report = residual_scan(v, &af, coeffs, c, path, &default_zprobes(path, DEFAULT_Z_PROBES));
    pathwise_gaps(&mut report, v, &af, path, driver, pairs)?;
    Ok(report)
}

/// The fBm specialisation: the path is driven by `C(t−s)^{H−1/2}` and the
/// equations carry `C b`, `C σ`.
pub fn fbm_verify<T: Real>(
    params: &FbmParams<T>,
    v: &CandidateV<T>,
    coeffs: &CoefficientPair<T>,
    x0: T,
    driver: &BrownianDriver<T>,
    pairs: &[(T, T)],
) -> Result<ResidualReport> {
    let kernel = SingularKernel::FbmSimple(*params);
    let path = VolterraSolver::new(kernel, *driver.grid())?.solve(coeffs, driver, |_| x0)?;
    let c = ThetaHeatKernel::from_alpha(params.alpha())?.c_theta();
    report_for_path(v, &coeffs.scaled(params.scale())?, c, &path, driver, pairs)
}

/// `ψ^m = p_{m^{−1/α}}`, with `ψ^m(0) = c_θ m`.
pub fn psi_m<T: Real>(kernel: &ThetaHeatKernel<T>, m: usize) -> Result<KernelSlice<T>> {
    if m == 0 {
        return Err(SveError::parameter("m must be at least 1"));
    }
    kernel.at_time(T::from_usize_lossy(m).powf(-kernel.alpha().recip()))
}

/// The scalar Itô process `Z_r = ⟨X_r, φ⟩` with its drift and diffusion:
/// `dZ = (⟨X_r, Δ_θφ⟩ + b φ(0)/c_θ) dr + σ φ(0)/c_θ dB`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedProcess<T> {
    pub z: Vec<T>,
    pub drift: Vec<T>,
    pub diffusion: Vec<T>,
    pub warning: Option<String>,
}

pub fn paired_process<T: Real>(sol: &FieldSolution<T>, table: &PairingTable<T>) -> Result<PairedProcess<T>> {
    let pairs = sol.pairings(table)?;
    let grid = sol.grid();
    let c = sol.kernel().c_theta();
    let phi0 = table.phi_at_zero();
    let coeffs = sol.coeffs();
    let mut drift = Vec::with_capacity(grid.len());
    let mut diffusion = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let (r, x) = (grid.node(i), sol.trace().value(i));
        drift.push(pairs.d[i] + coeffs.b.eval(r, x) * phi0 / c);
        diffusion.push(coeffs.sigma.eval(r, x) * phi0 / c);
    }
    let sigma_alive = (0..grid.len()).any(|i| coeffs.sigma.eval(grid.node(i), sol.trace().value(i)) != T::zero());
    let warning = (phi0 == T::zero() && sigma_alive)
        .then(|| "φ(0) = 0 while σ is not identically zero: the diffusion of Z degenerates".to_owned());
    Ok(PairedProcess {
        z: pairs.z,
        drift,
        diffusion,
        warning,
    })
}

/// Pathwise gaps `|∫G₁dr + ∫(G₂ + g2_shift)dB − (V(t,Z_t) − V(s,Z_s))|` with
/// `G₁ = ∂_rV + ½∂²_zV·diffusion² + ∂_zV·drift`, `G₂ = ∂_zV·diffusion` of `Z`.
/// A nonzero `g2_shift` breaks the diffusion equation on purpose.
pub fn paired_gaps<T: Real>(
    v: &CandidateV<T>,
    process: &PairedProcess<T>,
    driver: &BrownianDriver<T>,
    pairs: &[(T, T)],
    g2_shift: T,
) -> Result<Vec<T>> {
    let grid = driver.grid();
    if process.z.len() != grid.len() {
        return Err(SveError::parameter("paired process and driver live on different grids"));
    }
    let dt = grid.dt();
    let db = driver.increments();
    let half = T::lit(0.5);
    pairs
        .iter()
        .map(|&(s, t)| {
            let (i, j) = node_pair(grid, s, t)?;
            let mut acc = T::zero();
            for k in i..j {
                let (r, z) = (grid.node(k), process.z[k]);
                let (mu, sd) = (process.drift[k], process.diffusion[k]);
                let g1 = v.dt(r, z) + half * v.dzz(r, z) * sd * sd + v.dz(r, z) * mu;
                let g2 = v.dz(r, z) * sd + g2_shift;
                acc = acc + g1 * dt + g2 * db[k];
            }
            Ok((acc - (v.v(t, process.z[j]) - v.v(s, process.z[i]))).abs())
        })
        .collect()
}

/// Field-level check: residuals of the diffusion equation at `(r, Z_r)` and the
/// pathwise gaps of [`paired_gaps`].
pub fn verify_field_functional<T: Real>(
    v: &CandidateV<T>,
    sol: &FieldSolution<T>,
    table: &PairingTable<T>,
    pairs: &[(T, T)],
    g2_shift: T,
) -> Result<ResidualReport> {
    let process = paired_process(sol, table)?;
    let mut report = ResidualReport::default();
    report.warnings.extend(process.warning.clone());
    let grid = sol.grid();
    for i in 0..grid.len() {
        let r = grid.node(i).as_f64();
        let z = process.z[i].as_f64();
        report.push(ResidualKind::Residual1, r, z, 0.0);
        report.push(ResidualKind::Residual2, r, z, -g2_shift.as_f64());
    }
    for (&(s, t), gap) in pairs.iter().zip(paired_gaps(v, &process, sol.driver(), pairs, g2_shift)?) {
        report.push(ResidualKind::Gap, s.as_f64(), t.as_f64(), gap.as_f64());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{fixture, standard_examples, FIXTURE_NAMES};
    use crate::spde::{default_space, solve_trace, AdaptedBump, FieldProblem, InitialField};
    use crate::theta_kernel::{SpatialGrid, Smooth1D};

    fn setup(name: &str, n: usize, seed: u64) -> (CoefficientPair<f64>, SamplePath<f64>, BrownianDriver<f64>, f64) {
        let coeffs = fixture(name).unwrap();
        let driver = BrownianDriver::generate(seed, TimeGrid::new(1.0, n).unwrap());
        let path = VolterraSolver::new(SingularKernel::power_law(0.25).unwrap(), *driver.grid())
            .unwrap()
            .solve(&coeffs, &driver, |_| 0.5)
            .unwrap();
        let c = ThetaHeatKernel::from_alpha(0.25).unwrap().c_theta();
        (coeffs, path, driver, c)
    }

    #[test]
    fn candidate_derivatives_match_differences() {
        for v in [CandidateV::<f64>::exp_sin(), CandidateV::identity(), CandidateV::constant(3.0)] {
            let e1 = v.check(200, 1.0, 3.0, 1e-3, 9).unwrap();
            let e2 = v.check(200, 1.0, 3.0, 5e-4, 9).unwrap();
            assert!(e1 < 1e-6, "{}: {e1}", v.name());
            assert!(e2 <= e1 / 3.0 || e1 < 1e-9, "{}: {e1} -> {e2}", v.name());
        }
        let liar = CandidateV::new("liar", |_, z: f64| 5.0 * z.sin(), |_, _| 0.0, |_, z: f64| 5.0 * z.cos(), |_, z: f64| -5.0 * z.sin(), Some(1.0));
        assert!(liar.check(50, 1.0, 3.0, 1e-3, 1).is_err());
    }

    #[test]
    fn ito_functional_trivial_cases() {
        let (_, path, driver, _) = setup("lipschitz", 64, 3);
        let one = AdditiveFunctional::new(|_, _, _| 1.0, |_, _, _| 0.0);
        let f = ito_functional(&one, &path, &driver, 0.25, 0.75).unwrap();
        assert!((f - 0.5).abs() < 1e-15);
        let noise = AdditiveFunctional::new(|_, _, _| 0.0, |_, _, _| 1.0);
        let b = driver.path();
        let f = ito_functional(&noise, &path, &driver, 0.25, 0.75).unwrap();
        assert!((f - (b[48] - b[16])).abs() < 1e-14);
        assert!(ito_functional(&one, &path, &driver, 0.5, 0.5).is_err());
        assert!(ito_functional(&one, &path, &driver, 0.51, 0.75).is_err());
    }

    #[test]
    fn ito_integral_of_brownian_motion() {
        // ∫_s^t B dB = (B_t² − B_s² − (t−s))/2, L² error ~ Δ^{1/2}
        let af = AdditiveFunctional::<f64>::new(|_, _, _| 0.0, |_, _, z| z);
        let mut rms = Vec::new();
        for n in [64usize, 256, 1024] {
            let mut sq = 0.0_f64;
            let mut mean = 0.0_f64;
            for seed in 0..400 {
                let driver = BrownianDriver::generate(seed, TimeGrid::new(1.0, n).unwrap());
                let path = SamplePath::new(*driver.grid(), driver.path()).unwrap();
                let f = ito_functional(&af, &path, &driver, 0.0, 1.0).unwrap();
                let b = path.last();
                sq += (f - 0.5 * (b * b - 1.0)).powi(2);
                mean += f;
            }
            assert!((mean / 400.0).abs() < 0.1);
            rms.push((sq / 400.0).sqrt());
        }
        assert!(rms[0] > rms[1] && rms[1] > rms[2], "{rms:?}");
        let ratio = rms[0] / rms[2];
        assert!((ratio - 4.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn progressive_functionals_see_only_the_prefix() {
        let (_, path, _, _) = setup("lipschitz", 32, 5);
        let af = AdditiveFunctional::new(|_, p: &[f64], _| p.len() as f64, |_, p: &[f64], _| p.iter().sum());
        let mut altered = path.values().to_vec();
        for x in &mut altered[11..] {
            *x += 100.0;
        }
        let other = SamplePath::new(*path.grid(), altered).unwrap();
        assert_eq!(af.g1_at(&path, 10, 0.0), 11.0);
        assert_eq!(af.g2_at(&path, 10, 0.0), af.g2_at(&other, 10, 0.0));
        assert_ne!(af.g2_at(&path, 11, 0.0), af.g2_at(&other, 11, 0.0));
    }

    #[test]
    fn derived_functional_examples() {
        let (coeffs, path, _, c) = setup("holder", 32, 1);
        let id = derive_g_from_v(&CandidateV::identity(), &coeffs, c);
        let flat = derive_g_from_v(&CandidateV::constant(2.0), &coeffs, c);
        let es = derive_g_from_v(&CandidateV::exp_sin(), &coeffs, c);
        for i in [0, 7, 32] {
            let (r, x) = (path.grid().node(i), path.value(i));
            let (b, s) = (coeffs.b.eval(r, x) / c, coeffs.sigma.eval(r, x) / c);
            assert_eq!(id.g1_at(&path, i, 0.3), b);
            assert_eq!(id.g2_at(&path, i, 0.3), s);
            assert_eq!(flat.g1_at(&path, i, 0.3), 0.0);
            assert_eq!(flat.g2_at(&path, i, 0.3), 0.0);
            let z = 0.8_f64;
            let e = (-r).exp();
            let g1 = -e * z.sin() - 0.5 * e * z.sin() * s * s + e * z.cos() * b;
            assert!((es.g1_at(&path, i, z) - g1).abs() < 1e-15);
            assert!((es.g2_at(&path, i, z) - e * z.cos() * s).abs() < 1e-15);
        }
    }

    #[test]
    fn construction_closure_on_all_fixtures() {
        for (name, coeffs) in standard_examples::<f64>() {
            let driver = BrownianDriver::generate(4, TimeGrid::new(1.0, 64).unwrap());
            let path = VolterraSolver::new(SingularKernel::power_law(0.25).unwrap(), *driver.grid())
                .unwrap()
                .solve(&coeffs, &driver, |_| 0.5)
                .unwrap();
            let c = ThetaHeatKernel::from_alpha(0.25).unwrap().c_theta();
            for v in [CandidateV::exp_sin(), CandidateV::identity(), CandidateV::constant(1.0)] {
                let af = derive_g_from_v(&v, &coeffs, c);
                let zs = default_zprobes(&path, DEFAULT_Z_PROBES);
                let rep = residual_scan(&v, &af, &coeffs, c, &path, &zs);
                assert!(rep.max_abs(ResidualKind::Residual1) <= 1e-12, "{name}");
                assert!(rep.max_abs(ResidualKind::Residual2) <= 1e-12, "{name}");
                let eps = 1e-3;
                let shifted = residual_scan(&v, &af.shift_g1(eps), &coeffs, c, &path, &zs);
                for (a, b) in shifted.values(ResidualKind::Residual1).zip(rep.values(ResidualKind::Residual1)) {
                    assert!((a - b + eps).abs() < 1e-15);
                }
            }
        }
        assert_eq!(FIXTURE_NAMES.len(), standard_examples::<f64>().len());
    }

    #[test]
    fn missing_diffusion_functional_leaves_residual() {
        let (coeffs, path, _, c) = setup("lipschitz", 16, 2);
        let v = CandidateV::exp_sin();
        let af = derive_g_from_v(&v, &coeffs, c);
        let af = AdditiveFunctional { g1: af.g1, g2: Arc::new(|_, _, _| 0.0) };
        let rep = residual_scan(&v, &af, &coeffs, c, &path, &[0.4]);
        for (k, r2) in rep.values(ResidualKind::Residual2).enumerate() {
            let t = path.grid().node(k);
            assert!((r2 - (-t).exp() * 0.4f64.cos() / c).abs() < 1e-15);
        }
    }

    #[test]
    fn report_csv_and_summary() {
        let mut rep = ResidualReport::default();
        rep.push(ResidualKind::Residual1, 0.0, 1.0, -0.5);
        rep.push(ResidualKind::Gap, 0.125, 1.0, 0.25);
        rep.refinement.push((256, 0.1));
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("kind,r,z,value"));
        assert!(text.contains("gap,1.2500000000000000e-1,1.0000000000000000e0,2.5000000000000000e-1\n"));
        let s = rep.summary();
        assert!(s.contains("residual1_max_abs = 5.0000000000000000e-1"));
        assert!(s.contains("256, 1.0000000000000001e-1"));
        assert!(rep.is_finite());
    }

    #[test]
    fn dyadic_pairs_and_probes() {
        let p = dyadic_pairs(1.0);
        assert_eq!(p.len(), 6);
        assert!(p.contains(&(0.125, 1.0)) && p.contains(&(0.5, 1.0)));
        let (_, path, _, _) = setup("lipschitz", 16, 2);
        let z = default_zprobes(&path, 41);
        assert_eq!(z.len(), 41);
        let lo = path.values().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(z[0] < lo);
    }

    #[test]
    fn fbm_specialisation_matches_power_law_pipeline() {
        let driver = BrownianDriver::generate(21, TimeGrid::new(1.0, 128).unwrap());
        let pairs = dyadic_pairs(1.0);
        let v = CandidateV::exp_sin();
        let coeffs = fixture("holder").unwrap();
        let one = fbm_verify(&FbmParams::new(0.25, 1.0).unwrap(), &v, &coeffs, 0.5, &driver, &pairs).unwrap();
        let generic = verify_path_independence(SingularKernel::power_law(0.25).unwrap(), &v, &coeffs, 0.5, &driver, &pairs).unwrap();
        assert_eq!(one, generic);
        let two = fbm_verify(&FbmParams::new(0.25, 2.0).unwrap(), &v, &coeffs, 0.5, &driver, &pairs).unwrap();
        let absorbed = verify_path_independence(SingularKernel::power_law(0.25).unwrap(), &v, &coeffs.scaled(2.0).unwrap(), 0.5, &driver, &pairs).unwrap();
        assert_eq!(two, absorbed);
        let flat = fbm_verify(&FbmParams::new(0.25, 1.0).unwrap(), &CandidateV::constant(1.0), &coeffs, 0.5, &driver, &pairs).unwrap();
        assert_eq!(flat.max_abs(ResidualKind::Residual1), 0.0);
        assert_eq!(flat.max_abs(ResidualKind::Gap), 0.0);
    }

    #[test]
    fn psi_m_scaling() {
        let k = ThetaHeatKernel::from_alpha(0.25_f64).unwrap();
        let g = SpatialGrid::midpoint(-6.0, 6.0, 24_000).unwrap();
        let smooth = |x: f64| (x * 0.7).cos() / (1.0 + x * x);
        let mut prev = f64::INFINITY;
        for m in [1, 2, 4, 8] {
            let psi = psi_m(&k, m).unwrap();
            assert!((psi.value(0.0) - k.c_theta() * m as f64).abs() < 1e-12 * m as f64);
            assert!((g.integrate(|x| psi.value(x)) - 1.0).abs() < 1e-8);
            let gap = (g.integrate(|x| psi.value(x) * smooth(x)) - 1.0).abs();
            assert!(gap < prev, "m={m}: {gap}");
            prev = gap;
        }
        assert!(psi_m(&k, 0).is_err());
    }

    fn field_solution(n: usize, driver: &BrownianDriver<f64>) -> (FieldSolution<f64>, PairingTable<f64>, AdaptedBump<f64>) {
        let kernel = ThetaHeatKernel::from_alpha(0.25).unwrap();
        let phi = AdaptedBump::new(2.0, kernel.theta()).unwrap();
        let space = SpatialGrid::midpoint(-2.0, 2.0, 2048).unwrap();
        let p = FieldProblem {
            kernel,
            coeffs: fixture("lipschitz").unwrap(),
            initial: InitialField::Constant(0.5),
            space: space.clone(),
        };
        let sol = solve_trace(p, driver.coarsen(driver.grid().steps() / n).unwrap()).unwrap();
        let table = PairingTable::new(&kernel, sol.grid(), &space, &phi).unwrap();
        (sol, table, phi)
    }

    #[test]
    fn field_functional_special_cases() {
        let driver = BrownianDriver::generate(6, TimeGrid::new(1.0, 64).unwrap());
        let (sol, table, phi) = field_solution(64, &driver);
        let pairs = dyadic_pairs(1.0);
        let flat = verify_field_functional(&CandidateV::constant(3.0), &sol, &table, &pairs, 0.0).unwrap();
        assert_eq!(flat.max_abs(ResidualKind::Gap), 0.0);
        // V(t, z) = z: the gap is the weak-form residual increment
        let id = verify_field_functional(&CandidateV::identity(), &sol, &table, &pairs, 0.0).unwrap();
        let weak = sol.weak_form_residuals(&table).unwrap();
        for (e, &(s, t)) in id.entries.iter().filter(|e| e.kind == ResidualKind::Gap).zip(&pairs) {
            let i = sol.grid().index_of(s).unwrap();
            let j = sol.grid().index_of(t).unwrap();
            assert!((e.value - (weak[j].value - weak[i].value).abs()).abs() < 1e-12);
        }
        assert!(sol.weak_form_residual(&phi, 1.0).is_ok());
        assert!(id.warnings.is_empty());
    }

    #[test]
    fn field_functional_gap_shrinks_and_probe_does_not() {
        let v = CandidateV::exp_sin();
        let pairs = dyadic_pairs(1.0);
        let mut med = Vec::new();
        let mut probe = Vec::new();
        for n in [128usize, 256, 512] {
            let (mut g, mut h) = (Vec::new(), Vec::new());
            for seed in 0..32 {
                let driver = BrownianDriver::generate(seed, TimeGrid::new(1.0, 512).unwrap());
                let (sol, table, _) = field_solution(n, &driver);
                let process = paired_process(&sol, &table).unwrap();
                let a = paired_gaps(&v, &process, sol.driver(), &pairs, 0.0).unwrap();
                let b = paired_gaps(&v, &process, sol.driver(), &pairs, 0.5).unwrap();
                g.push(a.into_iter().fold(0.0, f64::max));
                h.push(b.into_iter().fold(0.0, f64::max));
            }
            med.push(median(g));
            probe.push(median(h));
        }
        assert!(med[0] > med[1] && med[1] > med[2], "{med:?}");
        assert!(probe[2] > 0.5 * probe[0] && probe[2] > 10.0 * med[2], "{probe:?}");
    }

    #[test]
    fn degenerate_test_function_warns() {
        struct Odd;
        impl Smooth1D<f64> for Odd {
            fn value(&self, x: f64) -> f64 {
                x * (-x * x).exp()
            }
            fn d1(&self, x: f64) -> f64 {
                (1.0 - 2.0 * x * x) * (-x * x).exp()
            }
            fn d2(&self, x: f64) -> f64 {
                (4.0 * x * x * x - 6.0 * x) * (-x * x).exp()
            }
        }
        impl crate::spde::TestFunction<f64> for Odd {
            fn support_radius(&self) -> f64 {
                1.9
            }
        }
        let kernel = ThetaHeatKernel::from_alpha(0.25).unwrap();
        let space = default_space(&kernel, 1.0).unwrap();
        let p = FieldProblem {
            kernel,
            coeffs: fixture("lipschitz").unwrap(),
            initial: InitialField::Constant(0.0),
            space: space.clone(),
        };
        let sol = solve_trace(p, BrownianDriver::generate(1, TimeGrid::new(1.0, 16).unwrap())).unwrap();
        let table = PairingTable::new(&kernel, sol.grid(), &space, &Odd).unwrap();
        let rep = verify_field_functional(&CandidateV::exp_sin(), &sol, &table, &dyadic_pairs(1.0), 0.0).unwrap();
        assert_eq!(rep.warnings.len(), 1);
    }
}
