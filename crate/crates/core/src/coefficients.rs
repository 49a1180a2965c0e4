//! Drift and diffusion coefficients with declared Hölder metadata, the standard
//! fixtures, and lattice mollification.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SveError};
use crate::scalar::Real;

pub type CoeffFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// A coefficient `f(t, x)` together with its claimed regularity:
/// `|f(t,x) − f(t,y)| ≤ L|x−y|^γ` and `|f(t,x)| ≤ L(1+|x|)`.
#[derive(Clone)]
pub struct HolderCoefficient<T> {
    name: String,
    f: CoeffFn<T>,
    gamma: T,
    constant: T,
    decreasing: bool,
}

impl<T: fmt::Debug> fmt::Debug for HolderCoefficient<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HolderCoefficient")
            .field("name", &self.name)
            .field("gamma", &self.gamma)
            .field("constant", &self.constant)
            .field("decreasing", &self.decreasing)
            .finish()
    }
}

impl<T: Real> HolderCoefficient<T> {
    pub fn new<F>(name: impl Into<String>, gamma: T, constant: T, decreasing: bool, f: F) -> Result<Self>
    where
        F: Fn(T, T) -> T + Send + Sync + 'static,
    {
        if !(gamma > T::zero() && gamma <= T::one()) {
            return Err(SveError::parameter(format!("Hölder exponent must lie in (0, 1], got {gamma}")));
        }
        if !(constant.is_finite() && constant >= T::zero()) {
            return Err(SveError::parameter(format!("Hölder constant must be >= 0, got {constant}")));
        }
        Ok(Self {
            name: name.into(),
            f: Arc::new(f),
            gamma,
            constant,
            decreasing,
        })
    }

    /// The constant map `(t, x) ↦ c`.
    pub fn constant_value(name: impl Into<String>, c: T) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(move |_, _| c),
            gamma: T::one(),
            constant: c.abs(),
            decreasing: true,
        }
    }

    /// The affine map `(t, x) ↦ slope·x + offset`.
    pub fn affine(name: impl Into<String>, slope: T, offset: T) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(move |_, x| slope * x + offset),
            gamma: T::one(),
            constant: slope.abs().max(offset.abs()),
            decreasing: slope <= T::zero(),
        }
    }

    #[inline]
    pub fn eval(&self, t: T, x: T) -> T {
        (self.f)(t, x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn constant(&self) -> T {
        self.constant
    }

    pub fn decreasing_in_x(&self) -> bool {
        self.decreasing
    }

    /// `c·f` with the metadata rescaled; `c` must be positive.
    pub fn scaled(&self, c: T) -> Result<Self> {
        if !(c.is_finite() && c > T::zero()) {
            return Err(SveError::parameter(format!("scale must be positive, got {c}")));
        }
        let f = Arc::clone(&self.f);
        Ok(Self {
            name: format!("{}*{}", c, self.name),
            f: Arc::new(move |t, x| c * f(t, x)),
            gamma: self.gamma,
            constant: c * self.constant,
            decreasing: self.decreasing,
        })
    }

    /// Probes the declared Hölder, growth and monotonicity claims at random points.
    pub fn check(&self, cfg: &ProbeConfig) -> std::result::Result<(), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let slack = T::one() + T::lit(cfg.slack);
        let range = cfg.range;
        for k in 0..cfg.probes {
            let t = T::lit(rng.random_range(0.0..=cfg.horizon));
            let x1: f64 = rng.random_range(-range..=range);
            // alternate far pairs with near pairs to probe both ends of the modulus
            let x2 = if k % 2 == 0 {
                rng.random_range(-range..=range)
            } else {
                x1 + 10f64.powf(rng.random_range(-6.0..0.0))
            };
            let (x1, x2) = (T::lit(x1.min(x2)), T::lit(x1.max(x2)));
            let (f1, f2) = (self.eval(t, x1), self.eval(t, x2));
            if !(f1.is_finite() && f2.is_finite()) {
                return Err(format!("{}: non-finite value near x = {x1}", self.name));
            }
            if x1 != x2 {
                let bound = self.constant * (x2 - x1).powf(self.gamma) * slack;
                if (f1 - f2).abs() > bound {
                    return Err(format!(
                        "{}: Hölder bound fails at t={t}, x1={x1}, x2={x2}: {} > {bound}",
                        self.name,
                        (f1 - f2).abs()
                    ));
                }
            }
            for (x, v) in [(x1, f1), (x2, f2)] {
                let bound = self.constant * (T::one() + x.abs()) * slack;
                if v.abs() > bound {
                    return Err(format!("{}: growth bound fails at t={t}, x={x}: {v}", self.name));
                }
            }
            // round-off in the mollifier's weight ratio is tolerated at the same relative slack
            let tie = T::lit(cfg.slack) * f1.abs().max(f2.abs());
            if self.decreasing && f1 < f2 - tie {
                return Err(format!(
                    "{}: not decreasing at t={t}: f({x1}) = {f1} < f({x2}) = {f2}",
                    self.name
                ));
            }
        }
        Ok(())
    }
}

/// Sampling plan for [`HolderCoefficient::check`].
#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub probes: usize,
    pub range: f64,
    pub horizon: f64,
    pub slack: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            probes: 1000,
            range: 20.0,
            horizon: 1.0,
            slack: 1e-9,
            seed: 0,
        }
    }
}

/// Drift `b` and diffusion `σ` of the equation.
#[derive(Debug, Clone)]
pub struct CoefficientPair<T> {
    pub b: HolderCoefficient<T>,
    pub sigma: HolderCoefficient<T>,
}

impl<T: Real> CoefficientPair<T> {
    /// Requires `γ₂ ≥ 1/2` for the diffusion.
    pub fn new(b: HolderCoefficient<T>, sigma: HolderCoefficient<T>) -> Result<Self> {
        if sigma.gamma() < T::lit(0.5) {
            return Err(SveError::parameter(format!(
                "diffusion Hölder exponent must be at least 1/2, got {}",
                sigma.gamma()
            )));
        }
        Ok(Self { b, sigma })
    }

    /// As [`CoefficientPair::new`], additionally requiring the drift to be decreasing in x.
    pub fn theorem_compliant(b: HolderCoefficient<T>, sigma: HolderCoefficient<T>) -> Result<Self> {
        if !b.decreasing_in_x() {
            return Err(SveError::parameter(format!(
                "drift {} is not declared decreasing in x",
                b.name()
            )));
        }
        Self::new(b, sigma)
    }

    pub fn is_lipschitz(&self) -> bool {
        self.b.gamma() == T::one() && self.sigma.gamma() == T::one()
    }

    /// `(c·b, c·σ)`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        Ok(Self {
            b: self.b.scaled(c)?,
            sigma: self.sigma.scaled(c)?,
        })
    }

    /// Both coefficients mollified at level `m`.
    pub fn mollified(&self, m: usize) -> Result<Self> {
        Ok(Self {
            b: mollify(&self.b, m)?,
            sigma: mollify(&self.sigma, m)?,
        })
    }
}

/// Names accepted by [`fixture`].
pub const FIXTURE_NAMES: [&str; 6] = [
    "lipschitz",
    "holder",
    "degenerate",
    "gaussian",
    "zero",
    "bounded-drift",
];

const HOLDER_C0: f64 = 0.1;
const HOLDER_R0: f64 = 10.0;

/// `b(x) = −sgn(x)|x|^γ`, decreasing, with Hölder constant `2^{1−γ}`.
pub fn signed_power_drift<T: Real>(gamma: T) -> Result<HolderCoefficient<T>> {
    let l = T::lit(2.0).powf(T::one() - gamma).max(T::one());
    HolderCoefficient::new(format!("-sgn|x|^{gamma}"), gamma, l, true, move |_, x: T| {
        -x.signum() * x.abs().powf(gamma)
    })
}

/// `σ(x) = (c₀ + min(|x|, R₀))^γ`, bounded below by `c₀^γ` and flat beyond `R₀`.
pub fn flattened_power_diffusion<T: Real>(gamma: T) -> Result<HolderCoefficient<T>> {
    let (c0, r0) = (T::lit(HOLDER_C0), T::lit(HOLDER_R0));
    let l = (c0 + r0).powf(gamma).max(T::one());
    HolderCoefficient::new(format!("(0.1+min|x|)^{gamma}"), gamma, l, false, move |_, x: T| {
        (c0 + x.abs().min(r0)).powf(gamma)
    })
}

/// A named fixture pair.
pub fn fixture<T: Real>(name: &str) -> Result<CoefficientPair<T>> {
    let zero = || HolderCoefficient::constant_value("0", T::zero());
    let one = || HolderCoefficient::constant_value("1", T::one());
    let minus_x = || HolderCoefficient::affine("-x", -T::one(), T::zero());
    match name {
        "lipschitz" => CoefficientPair::theorem_compliant(minus_x(), one()),
        "holder" => CoefficientPair::theorem_compliant(
            signed_power_drift(T::lit(0.5))?,
            flattened_power_diffusion(T::lit(0.5))?,
        ),
        "degenerate" => CoefficientPair::theorem_compliant(minus_x(), zero()),
        "gaussian" => CoefficientPair::theorem_compliant(zero(), one()),
        "zero" => CoefficientPair::theorem_compliant(zero(), zero()),
        "bounded-drift" => {
            let b = HolderCoefficient::new("-tanh x", T::one(), T::one(), true, |_, x: T| -x.tanh())?;
            CoefficientPair::theorem_compliant(b, zero())
        }
        other => Err(SveError::parameter(format!(
            "unknown fixture {other:?}; expected one of {FIXTURE_NAMES:?}"
        ))),
    }
}

/// Every fixture with its name.
pub fn standard_examples<T: Real>() -> Vec<(&'static str, CoefficientPair<T>)> {
    FIXTURE_NAMES
        .iter()
        .map(|&n| (n, fixture(n).expect("fixtures are valid")))
        .collect()
}

/// Lattice nodes per unit bump half-width.
const LATTICE_PER_HALF_WIDTH: f64 = 16.0;

fn bump(y: f64) -> f64 {
    let s = 1.0 - y * y;
    if s <= 0.0 {
        0.0
    } else {
        s * s * s
    }
}

/// Smooth Lipschitz approximant of `f` at scale `1/m`.
///
/// `f^m(t,x) = Σ_j ρ(m(x−u_j)) f(t,u_j) / Σ_j ρ(m(x−u_j))` over lattice nodes
/// `u_j = j/(16m)` with `ρ(y) = (1−y²)³`, so `|f^m − f| ≤ L m^{−γ}`.
pub fn mollify<T: Real>(f: &HolderCoefficient<T>, m: usize) -> Result<HolderCoefficient<T>> {
    if m == 0 {
        return Err(SveError::parameter("mollification level must be at least 1"));
    }
    let mf = m as f64;
    let scale = LATTICE_PER_HALF_WIDTH * mf;
    let l = f.constant().as_f64();
    let g = f.gamma().as_f64();
    let lipschitz = (2.5 * l * mf.powf(1.0 - g)).max(l * (1.0 + 1.0 / mf));
    let inner = Arc::clone(&f.f);
    let eval = move |t: T, x: T| -> T {
        let xs = x.as_f64() * scale;
        let lo = (xs - LATTICE_PER_HALF_WIDTH).ceil() as i64;
        let hi = (xs + LATTICE_PER_HALF_WIDTH).floor() as i64;
        let mut num = T::zero();
        let mut den = T::zero();
        for j in lo..=hi {
            let w = bump((xs - j as f64) / LATTICE_PER_HALF_WIDTH);
            if w > 0.0 {
                let w = T::lit(w);
                num = num + w * inner(t, T::lit(j as f64 / scale));
                den = den + w;
            }
        }
        num / den
    };
    HolderCoefficient::new(
        format!("{}~m{m}", f.name()),
        T::one(),
        T::lit(lipschitz),
        f.decreasing_in_x(),
        eval,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn fixtures_pass_their_own_checks() {
        let cfg = ProbeConfig::default();
        for (name, pair) in standard_examples::<f64>() {
            pair.b.check(&cfg).unwrap_or_else(|e| panic!("{name} b: {e}"));
            pair.sigma.check(&cfg).unwrap_or_else(|e| panic!("{name} sigma: {e}"));
        }
    }

    #[test]
    fn mollified_fixtures_pass_their_own_checks() {
        let cfg = ProbeConfig {
            probes: 2000,
            ..ProbeConfig::default()
        };
        for (name, pair) in standard_examples::<f64>() {
            for m in [1, 4, 16, 64] {
                let p = pair.mollified(m).unwrap();
                p.b.check(&cfg).unwrap_or_else(|e| panic!("{name} m={m} b: {e}"));
                p.sigma.check(&cfg).unwrap_or_else(|e| panic!("{name} m={m} sigma: {e}"));
            }
        }
    }

    #[test]
    fn holder_fixture_example_bound() {
        let b = signed_power_drift(0.5_f64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5000 {
            let x1: f64 = rng.random_range(-20.0..20.0);
            let x2: f64 = rng.random_range(-20.0..20.0);
            let d = (b.eval(0.0, x1) - b.eval(0.0, x2)).abs();
            assert!(d <= 2.0 * (x1 - x2).abs().sqrt() + 1e-12);
        }
    }

    #[test]
    fn pair_validation() {
        let b = HolderCoefficient::affine("-x", -1.0_f64, 0.0);
        let rough = HolderCoefficient::new("rough", 0.3, 1.0, false, |_, x: f64| x.abs().powf(0.3)).unwrap();
        assert!(CoefficientPair::new(b.clone(), rough).is_err());
        let up = HolderCoefficient::affine("x", 1.0_f64, 0.0);
        let one = HolderCoefficient::constant_value("1", 1.0);
        assert!(CoefficientPair::new(up.clone(), one.clone()).is_ok());
        assert!(CoefficientPair::theorem_compliant(up, one).is_err());
        assert!(HolderCoefficient::new("bad", 0.0_f64, 1.0, false, |_, x| x).is_err());
        assert!(fixture::<f64>("nope").is_err());
    }

    #[test]
    fn scaling_multiplies_values_exactly() {
        let p = fixture::<f64>("holder").unwrap();
        let q = p.scaled(2.0).unwrap();
        for &x in &[-3.0, -0.2, 0.0, 0.7, 12.0] {
            assert_eq!(q.b.eval(0.3, x), 2.0 * p.b.eval(0.3, x));
            assert_eq!(q.sigma.eval(0.3, x), 2.0 * p.sigma.eval(0.3, x));
        }
        assert_eq!(q.sigma.constant(), 2.0 * p.sigma.constant());
    }

    #[test]
    fn mollify_reproduces_affine_maps() {
        let f = HolderCoefficient::affine("2x+1", 2.0_f64, 1.0);
        for m in [1, 4, 16] {
            let g = mollify(&f, m).unwrap();
            for k in 0..200 {
                let x = -10.0 + 0.1037 * k as f64;
                let err = (g.eval(0.0, x) - f.eval(0.0, x)).abs();
                assert!(err < 1e-6 * (1.0 + x.abs()), "m={m} x={x}: {err}");
            }
        }
    }

    fn sup_distance(f: &HolderCoefficient<f64>, g: &HolderCoefficient<f64>) -> f64 {
        (0..=20_000)
            .map(|k| -10.0 + 1e-3 * k as f64)
            .map(|x| (f.eval(0.0, x) - g.eval(0.0, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn mollify_square_root_rate() {
        let f = HolderCoefficient::new("|x|^1/2", 0.5_f64, 1.0, false, |_, x: f64| x.abs().sqrt()).unwrap();
        let mut last = f64::INFINITY;
        for m in [4usize, 16, 64] {
            let d = sup_distance(&f, &mollify(&f, m).unwrap());
            assert!(d <= 2.0 / (m as f64).sqrt(), "m={m}: {d}");
            // quadrupling m should roughly halve the distance
            assert!(d < 0.75 * last, "m={m}: {d} vs {last}");
            last = d;
        }
    }

    #[test]
    fn mollify_preserves_monotonicity() {
        let b = signed_power_drift(0.5_f64).unwrap();
        let g = mollify(&b, 8).unwrap();
        assert!(g.decreasing_in_x());
        let mut prev = f64::MAX;
        for k in 0..40_000 {
            let x = -20.0 + 1e-3 * k as f64;
            let v = g.eval(0.0, x);
            assert!(v <= prev + 1e-14 * prev.abs(), "x={x}");
            prev = v;
        }
    }

    proptest! {
        #[test]
        fn mollified_growth_bound(x in -50.0f64..50.0, m in 1usize..100) {
            let f = signed_power_drift(0.5_f64).unwrap();
            let g = mollify(&f, m).unwrap();
            let l = f.constant();
            prop_assert!(g.eval(0.0, x).abs() <= l * (1.0 + x.abs()) + l / m as f64 + 1e-12);
        }
    }
}
