//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Result, SveError};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights attached to XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Three-point Gauss–Legendre rule on `[-1, 1]`: (nodes, weights).
pub const GAUSS3: ([f64; 3], [f64; 3]) = (
    [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
    [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveQuad<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Real> Default for AdaptiveQuad<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::tol_floor(1e-13),
            rel_tol: T::tol_floor(1e-13),
            max_intervals: 4000,
        }
    }
}

#[derive(Clone, Copy)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn kronrod<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    let fc = f(mid);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for (k, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * T::lit(x);
        let f1 = f(mid - dx);
        let f2 = f(mid + dx);
        kron = kron + (f1 + f2) * T::lit(w);
        if k % 2 == 1 {
            gauss = gauss + (f1 + f2) * T::lit(WG[k / 2]);
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).abs();
    (value, error)
}

impl<T: Real> AdaptiveQuad<T> {
    pub fn with_tol(abs_tol: T, rel_tol: T) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    /// Integrates `f` over `[a, b]`, bisecting the panel with the largest error estimate
    /// until the summed estimate is below `max(abs_tol, rel_tol * |value|)`.
    pub fn integrate<F: Fn(T) -> T>(&self, f: F, a: T, b: T) -> Result<QuadResult<T>> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(SveError::parameter("quadrature bounds must be finite"));
        }
        if a == b {
            return Ok(QuadResult {
                value: T::zero(),
                error: T::zero(),
                intervals: 0,
            });
        }
        let (value, error) = kronrod(&f, a, b);
        let mut panels = vec![Panel { a, b, value, error }];
        loop {
            let total: T = panels.iter().map(|p| p.value).sum();
            let err: T = panels.iter().map(|p| p.error).sum();
            if !total.is_finite() || !err.is_finite() {
                return Err(SveError::numerical(format!(
                    "non-finite quadrature on [{a}, {b}] after {} panels",
                    panels.len()
                )));
            }
            let target = self.abs_tol.max(self.rel_tol * total.abs());
            if err <= target {
                return Ok(QuadResult {
                    value: total,
                    error: err,
                    intervals: panels.len(),
                });
            }
            if panels.len() >= self.max_intervals {
                return Err(SveError::numerical(format!(
                    "adaptive quadrature on [{a}, {b}] did not reach tolerance {target:e}: \
                     estimate {total}, error {err:e}, {} panels",
                    panels.len()
                )));
            }
            let worst = panels
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            let p = panels.swap_remove(worst);
            let m = (p.a + p.b) * T::lit(0.5);
            if m <= p.a || m >= p.b {
                // Panel cannot be split further in this precision.
                return Ok(QuadResult {
                    value: total,
                    error: err,
                    intervals: panels.len() + 1,
                });
            }
            let (v1, e1) = kronrod(&f, p.a, m);
            let (v2, e2) = kronrod(&f, m, p.b);
            panels.push(Panel {
                a: p.a,
                b: m,
                value: v1,
                error: e1,
            });
            panels.push(Panel {
                a: m,
                b: p.b,
                value: v2,
                error: e2,
            });
        }
    }
}

/// Adaptive integration with the default tolerances.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T) -> Result<QuadResult<T>> {
    AdaptiveQuad::default().integrate(f, a, b)
}

/// Three-point Gauss–Legendre approximation of `∫_a^b f`.
pub fn gauss3<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T) -> T {
    let half = (b - a) * T::lit(0.5);
    let mid = (a + b) * T::lit(0.5);
    GAUSS3
        .0
        .iter()
        .zip(GAUSS3.1.iter())
        .map(|(&x, &w)| T::lit(w) * f(mid + half * T::lit(x)))
        .sum::<T>()
        * half
}
