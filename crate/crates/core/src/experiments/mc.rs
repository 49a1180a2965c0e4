use rayon::prelude::*;

use crate::coefficients::{fixture, CoefficientPair};
use crate::engine::{default_gap_order, BrownianDriver, SamplePath, TimeGrid, VolterraSolver};
use crate::error::{Result, SveError};
use crate::io::Table;
use crate::path_independence::{dyadic_pairs, paired_gaps, paired_process};
use crate::spde::{solve_trace, AdaptedBump, FieldProblem, InitialField, PairingTable};
use crate::theta_kernel::{SpatialGrid, ThetaHeatKernel};

use super::config::ExperimentConfig;
use super::seeding::sub_seed;
use super::candidate;

/// Number of batches for batch-means standard errors.
pub const BATCHES: usize = 16;

/// Mean and batch-means standard error; fewer samples than batches use one per batch.
pub fn batch_means(samples: &[f64], batches: usize) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let b = batches.min(n);
    if b < 2 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> = (0..b)
        .map(|k| {
            let chunk = &samples[k * n / b..(k + 1) * n / b];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn median(mut xs: Vec<f64>) -> f64 {
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

/// Runs `f` inside a pool of `threads` workers, or the global pool when `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| SveError::parameter(format!("cannot start {k} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Shared per-experiment solver state.
struct Runner {
    solver: VolterraSolver<f64>,
    coeffs: CoefficientPair<f64>,
    x0: f64,
    seed: u64,
}

impl Runner {
    fn new(cfg: &ExperimentConfig, steps: usize) -> Result<Self> {
        cfg.validate()?;
        let grid = TimeGrid::new(cfg.horizon, steps)?;
        Ok(Self {
            solver: VolterraSolver::new(cfg.kernel.kernel()?, grid)?,
            coeffs: fixture(&cfg.fixture)?,
            x0: cfg.x0,
            seed: cfg.seed,
        })
    }

    fn driver(&self, k: usize) -> BrownianDriver<f64> {
        BrownianDriver::generate(sub_seed(self.seed, k as u64), *self.solver.grid())
    }

    fn path(&self, k: usize) -> Result<SamplePath<f64>> {
        let x0 = self.x0;
        self.solver.solve(&self.coeffs, &self.driver(k), |_| x0)
    }

    /// `f(path k)` for every path, in path order.
    fn map<R: Send>(&self, paths: usize, f: impl Fn(SamplePath<f64>) -> R + Sync) -> Result<Vec<R>> {
        (0..paths).into_par_iter().map(|k| self.path(k).map(&f)).collect()
    }
}

/// One path of the configured equation with the experiment seed itself.
pub fn simulate(cfg: &ExperimentConfig) -> Result<SamplePath<f64>> {
    cfg.validate()?;
    let driver = BrownianDriver::generate(cfg.seed, TimeGrid::new(cfg.horizon, cfg.steps)?);
    let x0 = cfg.x0;
    VolterraSolver::new(cfg.kernel.kernel()?, *driver.grid())?.solve(&fixture(&cfg.fixture)?, &driver, |_| x0)
}

/// Lower edge `2/(1−2α)` of the moment window.
pub fn moment_window(alpha: f64) -> f64 {
    2.0 / (1.0 - 2.0 * alpha)
}

fn dyadic_nodes(steps: usize) -> Result<Vec<usize>> {
    if steps % 8 != 0 {
        return Err(SveError::parameter(format!("n must be a multiple of 8 for dyadic times, got {steps}")));
    }
    Ok(vec![steps / 8, steps / 4, steps / 2, steps])
}

/// `E|X_t|^p` at `t ∈ {T/8, T/4, T/2, T}`: columns `t,p,estimate,stderr`.
///
/// With `enforce_window` the order must satisfy `p > 2/(1−2α)`.
pub fn mc_moment(cfg: &ExperimentConfig, enforce_window: bool) -> Result<Table> {
    let alpha = cfg.kernel.alpha();
    let p = cfg.p.unwrap_or_else(|| default_gap_order(alpha));
    let window = moment_window(alpha);
    if !(p.is_finite() && p > 0.0) {
        return Err(SveError::parameter(format!("p must be positive, got {p}")));
    }
    if enforce_window && p <= window {
        return Err(SveError::parameter(format!(
            "p = {p} is outside the moment window p > 2/(1−2α) = {window} for α = {alpha}"
        )));
    }
    let nodes = dyadic_nodes(cfg.steps)?;
    let runner = Runner::new(cfg, cfg.steps)?;
    let samples = with_threads(cfg.threads, || {
        runner.map(cfg.paths, |path| nodes.iter().map(|&i| path.value(i).abs().powf(p)).collect::<Vec<_>>())
    })??;
    let grid = runner.solver.grid();
    let mut table = Table::new(["t", "p", "estimate", "stderr"]);
    for (c, &i) in nodes.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s[c]).collect();
        let (est, se) = batch_means(&col, BATCHES);
        table.push(vec![grid.node(i), p, est, se]);
    }
    Ok(table)
}

/// Output of [`mc_holder_modulus`].
#[derive(Debug, Clone, PartialEq)]
pub struct HolderStudy {
    /// Columns `delta,p,estimate`.
    pub table: Table,
    /// Log-log slope with the smallest lag dropped.
    pub slope: f64,
    /// `p·min(α, 1/2−α, (1−2α)/4)`.
    pub floor: f64,
}

/// Default lags `T·2^{−k}`, `k = 2..=8`, kept when they are grid multiples.
pub fn default_lags(cfg: &ExperimentConfig) -> Vec<f64> {
    (2..=8)
        .map(|k| cfg.horizon / f64::powi(2.0, k))
        .filter(|d| {
            let l = d / cfg.horizon * cfg.steps as f64;
            (l - l.round()).abs() < 1e-9 && l >= 1.0
        })
        .collect()
}

/// `E|X_{T/2+δ} − X_{T/2}|^p` across lags and the fitted log-log slope.
pub fn mc_holder_modulus(cfg: &ExperimentConfig, lags: &[f64]) -> Result<HolderStudy> {
    let p = cfg.p.unwrap_or(2.0);
    if !(p.is_finite() && p > 0.0) {
        return Err(SveError::parameter(format!("p must be positive, got {p}")));
    }
    let mut lags = lags.to_vec();
    lags.sort_by(|a, b| b.total_cmp(a));
    if lags.len() < 3 {
        return Err(SveError::parameter("the slope fit needs at least three lags"));
    }
    let runner = Runner::new(cfg, cfg.steps)?;
    let grid = *runner.solver.grid();
    if cfg.steps % 2 != 0 {
        return Err(SveError::parameter("n must be even so that T/2 is a node"));
    }
    let mid = cfg.steps / 2;
    let offsets = lags
        .iter()
        .map(|&d| {
            if !(d > 0.0 && d <= cfg.horizon / 2.0) {
                return Err(SveError::parameter(format!("lag {d} must lie in (0, T/2]")));
            }
            grid.index_of(grid.node(mid) + d)
                .map(|j| j - mid)
                .ok_or_else(|| SveError::parameter(format!("lag {d} is not a multiple of the step {}", grid.dt())))
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = with_threads(cfg.threads, || {
        runner.map(cfg.paths, |path| {
            offsets
                .iter()
                .map(|&o| (path.value(mid + o) - path.value(mid)).abs().powf(p))
                .collect::<Vec<_>>()
        })
    })??;
    let mut table = Table::new(["delta", "p", "estimate"]);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (c, &d) in lags.iter().enumerate() {
        let est = samples.iter().map(|s| s[c]).sum::<f64>() / samples.len() as f64;
        table.push(vec![d, p, est]);
        if c + 1 < lags.len() {
            xs.push(d.ln());
            ys.push(est.ln());
        }
    }
    let alpha = cfg.kernel.alpha();
    Ok(HolderStudy {
        table,
        slope: fit_slope(&xs, &ys),
        floor: p * alpha.min(0.5 - alpha).min((1.0 - 2.0 * alpha) / 4.0),
    })
}

/// Output of [`convergence_study`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    /// Columns `n,gap`: `E|X^{(n)}_T − X^{(next n)}_T|²`.
    pub table: Table,
    /// Log-log slope of gap against `n`.
    pub slope: f64,
}

fn check_levels(levels: &[usize]) -> Result<usize> {
    if levels.len() < 2 || levels.windows(2).any(|w| w[0] >= w[1]) || levels[0] == 0 {
        return Err(SveError::parameter("levels must be at least two increasing grid sizes"));
    }
    let finest = *levels.last().unwrap();
    if levels.iter().any(|&n| finest % n != 0) {
        return Err(SveError::parameter("every level must divide the finest level"));
    }
    Ok(finest)
}

/// Default levels `n/8, n/4, n/2, n`.
pub fn default_levels(cfg: &ExperimentConfig) -> Vec<usize> {
    [8, 4, 2, 1].iter().map(|d| cfg.steps / d).filter(|&n| n > 0).collect()
}

/// Coupled refinement gaps at `T`: the coarse increments are sums of the fine ones.
pub fn convergence_study(cfg: &ExperimentConfig, levels: &[usize]) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let finest = check_levels(levels)?;
    let coeffs = fixture(&cfg.fixture)?;
    let kernel = cfg.kernel.kernel()?;
    let fine_grid = TimeGrid::new(cfg.horizon, finest)?;
    let solvers = levels
        .iter()
        .map(|&n| VolterraSolver::new(kernel, TimeGrid::new(cfg.horizon, n)?))
        .collect::<Result<Vec<_>>>()?;
    let x0 = cfg.x0;
    let ends = with_threads(cfg.threads, || {
        (0..cfg.paths)
            .into_par_iter()
            .map(|k| {
                let fine = BrownianDriver::generate(sub_seed(cfg.seed, k as u64), fine_grid);
                levels
                    .iter()
                    .zip(&solvers)
                    .map(|(&n, s)| Ok(s.solve(&coeffs, &fine.coarsen(finest / n)?, |_| x0)?.last()))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut table = Table::new(["n", "gap"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for c in 0..levels.len() - 1 {
        let gap = ends.iter().map(|e| (e[c] - e[c + 1]).powi(2)).sum::<f64>() / ends.len() as f64;
        table.push(vec![levels[c] as f64, gap]);
        xs.push((levels[c] as f64).ln());
        ys.push(gap.ln());
    }
    Ok(ConvergenceStudy {
        table,
        slope: fit_slope(&xs, &ys),
    })
}

/// Median over paths of the pairwise mollified-scheme gaps `(m_a, m_b)`.
pub fn mollified_cauchy(cfg: &ExperimentConfig, levels: &[usize]) -> Result<Vec<(usize, usize, f64)>> {
    let runner = Runner::new(cfg, cfg.steps)?;
    let order = cfg.p.unwrap_or_else(|| default_gap_order(cfg.kernel.alpha()));
    let x0 = cfg.x0;
    let gaps = with_threads(cfg.threads, || {
        (0..cfg.paths)
            .into_par_iter()
            .map(|k| {
                let out = runner.solver.mollified(&runner.coeffs, &runner.driver(k), |_| x0, levels, order)?;
                Ok((1..levels.len()).map(|a| out.gaps[a - 1][a]).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok((1..levels.len())
        .map(|a| (levels[a - 1], levels[a], median(gaps.iter().map(|g| g[a - 1]).collect())))
        .collect())
}

/// Cells of the spatial grid on the support of the test function.
pub const FIELD_CELLS: usize = 2048;
/// Scale of the test function bump.
pub const BUMP_SCALE: f64 = 2.0;

/// Median over paths of the largest pathwise gap of `V(t, ⟨X_t, φ⟩)` over dyadic pairs,
/// for each grid size; the drivers are coupled across levels.
pub fn field_refinement(cfg: &ExperimentConfig, levels: &[usize], g2_shift: f64) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    let finest = check_levels(levels)?;
    let kernel = ThetaHeatKernel::from_alpha(cfg.kernel.alpha())?;
    let phi = AdaptedBump::new(BUMP_SCALE, kernel.theta())?;
    let space = SpatialGrid::midpoint(-BUMP_SCALE, BUMP_SCALE, FIELD_CELLS)?;
    let coeffs = fixture(&cfg.fixture)?;
    let v = candidate(&cfg.v)?;
    let pairs = dyadic_pairs(cfg.horizon);
    let fine_grid = TimeGrid::new(cfg.horizon, finest)?;
    let mut out = Vec::new();
    for &n in levels {
        let grid = TimeGrid::new(cfg.horizon, n)?;
        let table = PairingTable::new(&kernel, &grid, &space, &phi)?;
        let gaps = with_threads(cfg.threads, || {
            (0..cfg.paths)
                .into_par_iter()
                .map(|k| {
                    let fine = BrownianDriver::generate(sub_seed(cfg.seed, k as u64), fine_grid);
                    let problem = FieldProblem {
                        kernel,
                        coeffs: coeffs.clone(),
                        initial: InitialField::Constant(cfg.x0),
                        space: space.clone(),
                    };
                    let sol = solve_trace(problem, fine.coarsen(finest / n)?)?;
                    let process = paired_process(&sol, &table)?;
                    let gaps = paired_gaps(&v, &process, sol.driver(), &pairs, g2_shift)?;
                    Ok(gaps.into_iter().fold(0.0, f64::max))
                })
                .collect::<Result<Vec<f64>>>()
        })??;
        out.push((n, median(gaps)));
    }
    Ok(out)
}
