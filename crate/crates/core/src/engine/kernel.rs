use crate::error::{Result, SveError};
use crate::fbm::{kernel_exact, kernel_simple, FbmParams};
use crate::quadrature::GAUSS3;
use crate::scalar::Real;

use super::grid::TimeGrid;

/// Volterra kernel `K(t, s)`, singular on the diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingularKernel<T> {
    /// `(t−s)^{−α}`, `0 < α < 1/2`.
    PowerLaw { alpha: T },
    /// `C(t−s)^{H−1/2}`, `0 < H < 1/2`.
    FbmSimple(FbmParams<T>),
    /// The fBm Volterra kernel `K_H(t, s)`, `0 < H < 1/2`.
    FbmExact { hurst: T },
}

impl<T: Real> SingularKernel<T> {
    pub fn power_law(alpha: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::lit(0.5)) {
            return Err(SveError::parameter(format!("α must lie in (0, 1/2), got {alpha}")));
        }
        Ok(Self::PowerLaw { alpha })
    }

    pub fn fbm_simple(hurst: T, scale: T) -> Result<Self> {
        Ok(Self::FbmSimple(FbmParams::for_sve(hurst, scale)?))
    }

    pub fn fbm_exact(hurst: T) -> Result<Self> {
        FbmParams::for_sve(hurst, T::one())?;
        Ok(Self::FbmExact { hurst })
    }

    /// Power `a` such that `K(t,s) ~ (t−s)^{−a}` as `s → t`.
    pub fn singularity_exponent(&self) -> T {
        match self {
            Self::PowerLaw { alpha } => *alpha,
            Self::FbmSimple(p) => p.alpha(),
            Self::FbmExact { hurst } => T::lit(0.5) - *hurst,
        }
    }

    /// Same as [`singularity_exponent`](Self::singularity_exponent); the `α` of the equation.
    pub fn alpha(&self) -> T {
        self.singularity_exponent()
    }

    /// `K(t, s)` for `0 ≤ s < t`.
    pub fn eval(&self, t: T, s: T) -> Result<T> {
        if !(s >= T::zero() && s < t) {
            return Err(SveError::domain(format!("kernel needs 0 <= s < t, got t={t}, s={s}")));
        }
        match self {
            Self::PowerLaw { alpha } => Ok((t - s).powf(-*alpha)),
            Self::FbmSimple(p) => Ok(kernel_simple(p, t, s)),
            Self::FbmExact { hurst } => {
                if s == T::zero() {
                    return Err(SveError::domain("K_H(t, 0) is infinite"));
                }
                kernel_exact(*hurst, t, s)
            }
        }
    }

    fn scale(&self) -> Option<T> {
        match self {
            Self::PowerLaw { .. } => Some(T::one()),
            Self::FbmSimple(p) => Some(p.scale()),
            Self::FbmExact { .. } => None,
        }
    }
}

/// How the stochastic sum weights each cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StochasticWeights {
    /// `sqrt((1/Δ)∫_cell K(t_i,s)² ds)`: the discrete Itô isometry is exact per cell.
    #[default]
    CellRms,
    /// `K(t_i, t_j)`.
    LeftPoint,
}

/// Drift cell integral `∫_{t_j}^{t_{j+1}} (t_i−s)^{−α} ds` at lag `l = i − j ≥ 1`.
pub fn power_drift_weight<T: Real>(alpha: T, dt: T, lag: usize) -> T {
    let one = T::one();
    let e = one - alpha;
    let l = T::from_usize_lossy(lag);
    dt.powf(e) * (l.powf(e) - (l - one).powf(e)) / e
}

/// Cell-RMS diffusion weight of `(t_i−s)^{−α}` at lag `l`.
pub fn power_rms_weight<T: Real>(alpha: T, dt: T, lag: usize) -> T {
    let one = T::one();
    let e = one - T::lit(2.0) * alpha;
    let l = T::from_usize_lossy(lag);
    (dt.powf(-T::lit(2.0) * alpha) * (l.powf(e) - (l - one).powf(e)) / e).sqrt()
}

/// Precomputed cell weights of a kernel on a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelWeights<T> {
    /// Convolution kernels: weights depend on the lag only; index 0 is unused.
    Toeplitz { drift: Vec<T>, diffusion: Vec<T> },
    /// Row `i` holds the weights for `j < i`.
    Dense { drift: Vec<Vec<T>>, diffusion: Vec<Vec<T>> },
}

impl<T: Real> KernelWeights<T> {
    pub fn build(kernel: &SingularKernel<T>, grid: &TimeGrid<T>, mode: StochasticWeights) -> Result<Self> {
        let n = grid.steps();
        let dt = grid.dt();
        if let (Some(c), alpha) = (kernel.scale(), kernel.alpha()) {
            let mut drift = vec![T::zero(); n + 1];
            let mut diffusion = vec![T::zero(); n + 1];
            for l in 1..=n {
                drift[l] = c * power_drift_weight(alpha, dt, l);
                diffusion[l] = c * match mode {
                    StochasticWeights::CellRms => power_rms_weight(alpha, dt, l),
                    StochasticWeights::LeftPoint => (T::from_usize_lossy(l) * dt).powf(-alpha),
                };
            }
            return Ok(Self::Toeplitz { drift, diffusion });
        }
        // K_H is infinite at s = 0, so the diffusion weight uses the cell midpoint.
        let half = T::lit(0.5);
        let mut drift = Vec::with_capacity(n + 1);
        let mut diffusion = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let ti = grid.node(i);
            let mut dr = Vec::with_capacity(i);
            let mut df = Vec::with_capacity(i);
            for j in 0..i {
                let a = grid.node(j);
                let b = if j + 1 == i { ti } else { grid.node(j + 1) };
                let (half_width, mid) = ((b - a) * half, (a + b) * half);
                let mut w = T::zero();
                for (&x, &wt) in GAUSS3.0.iter().zip(GAUSS3.1.iter()) {
                    w = w + T::lit(wt) * kernel.eval(ti, mid + half_width * T::lit(x))?;
                }
                let w = w * half_width;
                dr.push(w);
                df.push(kernel.eval(ti, (T::from_usize_lossy(j) + half) * dt)?);
            }
            drift.push(dr);
            diffusion.push(df);
        }
        Ok(Self::Dense { drift, diffusion })
    }

    #[inline]
    pub fn drift(&self, i: usize, j: usize) -> T {
        match self {
            Self::Toeplitz { drift, .. } => drift[i - j],
            Self::Dense { drift, .. } => drift[i][j],
        }
    }

    #[inline]
    pub fn diffusion(&self, i: usize, j: usize) -> T {
        match self {
            Self::Toeplitz { diffusion, .. } => diffusion[i - j],
            Self::Dense { diffusion, .. } => diffusion[i][j],
        }
    }
}
