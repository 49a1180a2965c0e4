use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SveError};
use crate::io::Table;
use crate::scalar::Real;

/// Uniform partition `t_i = i·T/n` of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    horizon: T,
    steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > T::zero()) {
            return Err(SveError::parameter(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(SveError::parameter("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `n + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> T {
        self.horizon / T::from_usize_lossy(self.steps)
    }

    pub fn node(&self, i: usize) -> T {
        if i == self.steps {
            return self.horizon;
        }
        self.horizon * T::from_usize_lossy(i) / T::from_usize_lossy(self.steps)
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.steps).map(|i| self.node(i)).collect()
    }

    /// Index of `t` if it is a node (within a relative 1e-9 of one).
    pub fn index_of(&self, t: T) -> Option<usize> {
        let x = t / self.dt();
        let i = x.round();
        if i < T::zero() || (x - i).abs() > T::lit(1e-9) * (T::one() + x.abs()) {
            return None;
        }
        let i = i.to_usize()?;
        (i <= self.steps).then_some(i)
    }

    /// Grid with `steps / factor` steps on the same horizon.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(SveError::parameter(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps
            )));
        }
        Self::new(self.horizon, self.steps / factor)
    }
}

/// Gaussian increments `ΔB_i ~ N(0, Δt)` on a grid, reproducible from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianDriver<T> {
    seed: Option<u64>,
    grid: TimeGrid<T>,
    increments: Vec<T>,
}

impl<T: Real> BrownianDriver<T> {
    /// Draws the increments from ChaCha8 seeded with `seed`.
    pub fn generate(seed: u64, grid: TimeGrid<T>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = grid.dt().as_f64().sqrt();
        let increments = (0..grid.steps())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::lit(z * sd)
            })
            .collect();
        Self {
            seed: Some(seed),
            grid,
            increments,
        }
    }

    pub fn from_increments(grid: TimeGrid<T>, increments: Vec<T>) -> Result<Self> {
        if increments.len() != grid.steps() {
            return Err(SveError::parameter(format!(
                "driver has {} increments but the grid has {} steps",
                increments.len(),
                grid.steps()
            )));
        }
        if increments.iter().any(|x| !x.is_finite()) {
            return Err(SveError::parameter("driver increments must be finite"));
        }
        Ok(Self {
            seed: None,
            grid,
            increments,
        })
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    /// Brownian values `B_{t_i}`, `i = 0..=n`, by cumulative summation.
    pub fn path(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = T::zero();
        out.push(acc);
        for &d in &self.increments {
            acc = acc + d;
            out.push(acc);
        }
        out
    }

    /// Coupled coarse driver: each coarse increment is the sum of `factor` fine ones.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let increments = self
            .increments
            .chunks(factor)
            .map(|c| c.iter().copied().sum())
            .collect();
        Ok(Self {
            seed: self.seed,
            grid,
            increments,
        })
    }

    pub(crate) fn check_grid(&self, grid: &TimeGrid<T>) -> Result<()> {
        if self.grid != *grid {
            return Err(SveError::parameter(format!(
                "driver grid (T={}, n={}) does not match solver grid (T={}, n={})",
                self.grid.horizon(),
                self.grid.steps(),
                grid.horizon(),
                grid.steps()
            )));
        }
        Ok(())
    }
}

/// Values of a process at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath<T> {
    grid: TimeGrid<T>,
    values: Vec<T>,
}

impl<T: Real> SamplePath<T> {
    pub fn new(grid: TimeGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SveError::parameter(format!(
                "path has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SveError::BlowUp {
                step: i,
                t: grid.node(i).as_f64(),
                value: values[i].as_f64(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, i: usize) -> T {
        self.values[i]
    }

    pub fn last(&self) -> T {
        self.values[self.values.len() - 1]
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "value"]);
        for (i, v) in self.values.iter().enumerate() {
            t.push(vec![self.grid.node(i).as_f64(), v.as_f64()]);
        }
        t
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.to_table().write(out)
    }

    /// Reads a `t,value` CSV written by [`SamplePath::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let table = Table::read(input)?;
        if table.headers != ["t", "value"] {
            return Err(SveError::Io(format!("unexpected header {:?}", table.headers)));
        }
        let n = table.rows.len();
        if n < 2 {
            return Err(SveError::Io("path CSV needs at least two rows".into()));
        }
        let horizon = table.rows[n - 1][0];
        let grid = TimeGrid::new(T::lit(horizon), n - 1)?;
        let values = table.rows.iter().map(|r| T::lit(r[1])).collect();
        Self::new(grid, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_nodes() {
        let g = TimeGrid::new(2.0_f64, 8).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(8), 2.0);
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.len(), 9);
        assert_eq!(g.index_of(0.75), Some(3));
        assert_eq!(g.index_of(0.8), None);
        assert_eq!(g.index_of(2.5), None);
        assert!(TimeGrid::new(0.0_f64, 4).is_err());
        assert!(TimeGrid::new(1.0_f64, 0).is_err());
    }

    #[test]
    fn coarse_nodes_coincide_with_fine_nodes() {
        let fine = TimeGrid::new(0.7_f64, 1024).unwrap();
        let coarse = fine.coarsen(4).unwrap();
        for j in 0..=coarse.steps() {
            assert_eq!(coarse.node(j), fine.node(4 * j));
        }
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn driver_is_reproducible() {
        let g = TimeGrid::new(1.0_f64, 64).unwrap();
        let a = BrownianDriver::generate(11, g);
        let b = BrownianDriver::generate(11, g);
        let c = BrownianDriver::generate(12, g);
        assert_eq!(a, b);
        assert_ne!(a.increments(), c.increments());
    }

    #[test]
    fn increment_moments() {
        let g = TimeGrid::new(1.0_f64, 100).unwrap();
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut count = 0.0;
        for seed in 0..400 {
            for &d in BrownianDriver::generate(seed, g).increments() {
                sum += d;
                sq += d * d;
                count += 1.0;
            }
        }
        let mean = sum / count;
        let var = sq / count - mean * mean;
        let dt = g.dt();
        // 4σ bands: sd(mean) = sqrt(dt/N), sd(var) ≈ dt·sqrt(2/N)
        assert!(mean.abs() < 4.0 * (dt / count).sqrt());
        assert!((var - dt).abs() < 4.0 * dt * (2.0 / count).sqrt());
    }

    #[test]
    fn coarsening_sums_increments() {
        let g = TimeGrid::new(1.0_f64, 8).unwrap();
        let d = BrownianDriver::generate(3, g);
        let c = d.coarsen(2).unwrap();
        assert_eq!(c.increments().len(), 4);
        assert_eq!(c.increments()[1], d.increments()[2] + d.increments()[3]);
        assert!((c.path()[4] - d.path()[8]).abs() < 1e-15);
    }

    #[test]
    fn sample_path_rejects_non_finite() {
        let g = TimeGrid::new(1.0_f64, 2).unwrap();
        let err = SamplePath::new(g, vec![0.0, f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, SveError::BlowUp { step: 1, .. }));
        assert!(SamplePath::new(g, vec![0.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = TimeGrid::new(1.0_f64, 3).unwrap();
        let p = SamplePath::new(g, vec![0.1, -2.0 / 3.0, 1e-300, 7.0]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,value\n"));
        let back = SamplePath::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }
}
