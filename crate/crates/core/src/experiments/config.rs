use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::engine::SingularKernel;
use crate::error::{Result, SveError};
use crate::fbm::FbmParams;

/// Kernel selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    PowerLaw { alpha: f64 },
    FbmSimple { hurst: f64, scale: f64 },
    FbmExact { hurst: f64 },
}

fn parse_params(body: &str) -> Result<Vec<(String, f64)>> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| SveError::parameter(format!("expected key=value in kernel spec, got {kv:?}")))?;
            let v = v
                .trim()
                .parse::<f64>()
                .map_err(|e| SveError::parameter(format!("bad kernel parameter {kv:?}: {e}")))?;
            Ok((k.trim().to_owned(), v))
        })
        .collect()
}

fn take(params: &[(String, f64)], names: &[&str], default: Option<f64>, spec: &str) -> Result<f64> {
    params
        .iter()
        .find(|(k, _)| names.contains(&k.as_str()))
        .map(|(_, v)| *v)
        .or(default)
        .ok_or_else(|| SveError::parameter(format!("kernel spec {spec:?} is missing {}", names[0])))
}

impl FromStr for KernelSpec {
    type Err = SveError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        let params = parse_params(body)?;
        let known: &[&str] = match name.trim() {
            "powerlaw" => &["α", "alpha", "a"],
            "fbm-simple" => &["H", "h", "C", "c"],
            "fbm-exact" => &["H", "h"],
            other => {
                return Err(SveError::parameter(format!(
                    "unknown kernel {other:?}; expected powerlaw, fbm-simple or fbm-exact"
                )))
            }
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            return Err(SveError::parameter(format!("unknown kernel parameter {k:?} in {s:?}")));
        }
        let spec = match name.trim() {
            "powerlaw" => Self::PowerLaw {
                alpha: take(&params, &["α", "alpha", "a"], None, s)?,
            },
            "fbm-simple" => Self::FbmSimple {
                hurst: take(&params, &["H", "h"], None, s)?,
                scale: take(&params, &["C", "c"], Some(1.0), s)?,
            },
            _ => Self::FbmExact {
                hurst: take(&params, &["H", "h"], None, s)?,
            },
        };
        spec.kernel()?;
        Ok(spec)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PowerLaw { alpha } => write!(f, "powerlaw:alpha={alpha}"),
            Self::FbmSimple { hurst, scale } => write!(f, "fbm-simple:H={hurst},C={scale}"),
            Self::FbmExact { hurst } => write!(f, "fbm-exact:H={hurst}"),
        }
    }
}

impl KernelSpec {
    pub fn kernel(&self) -> Result<SingularKernel<f64>> {
        match *self {
            Self::PowerLaw { alpha } => SingularKernel::power_law(alpha),
            Self::FbmSimple { hurst, scale } => SingularKernel::fbm_simple(hurst, scale),
            Self::FbmExact { hurst } => SingularKernel::fbm_exact(hurst),
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            Self::PowerLaw { alpha } => alpha,
            Self::FbmSimple { hurst, .. } | Self::FbmExact { hurst } => 0.5 - hurst,
        }
    }

    pub fn fbm_params(&self) -> Option<FbmParams<f64>> {
        match *self {
            Self::FbmSimple { hurst, scale } => FbmParams::for_sve(hurst, scale).ok(),
            _ => None,
        }
    }
}

/// Which functional `verify-pi` checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyLevel {
    /// Residuals of the drift and diffusion equations along the solved path.
    Trace,
    /// Pathwise gaps of `⟨X, φ⟩` across grid refinements.
    Field,
}

/// Every knob of every subcommand; fields not used by a subcommand are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub fixture: String,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    /// Moment order; `None` picks a per-subcommand default.
    pub p: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub x0: f64,
    /// Grid sizes for `convergence` and field-level `verify-pi`; empty picks a default.
    pub levels: Vec<usize>,
    /// Lags for `mc-holder`; empty picks a default.
    pub lags: Vec<f64>,
    pub zprobes: usize,
    pub v: String,
    pub level: VerifyLevel,
    /// Snapshot time for `field`; `None` is the horizon.
    pub at: Option<f64>,
    pub xmax: f64,
    pub points: usize,
    pub g2_shift: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::PowerLaw { alpha: 0.25 },
            fixture: "lipschitz".into(),
            horizon: 1.0,
            steps: 512,
            paths: 1000,
            p: None,
            seed: 0,
            out: PathBuf::from("."),
            threads: None,
            x0: 0.0,
            levels: Vec::new(),
            lags: Vec::new(),
            zprobes: crate::path_independence::DEFAULT_Z_PROBES,
            v: "exp-sin".into(),
            level: VerifyLevel::Trace,
            at: None,
            xmax: 2.0,
            points: 161,
            g2_shift: 0.0,
        }
    }
}

/// Keys accepted in config files; flags use the same names with `--`.
pub const CONFIG_KEYS: [&str; 20] = [
    "kernel", "fixture", "T", "n", "paths", "p", "seed", "out", "threads", "x0", "levels", "lags", "zprobes", "v",
    "level", "at", "xmax", "points", "g2-shift", "config",
];

fn num<F: FromStr>(key: &str, value: &str) -> Result<F>
where
    F::Err: fmt::Display,
{
    value
        .trim()
        .parse::<F>()
        .map_err(|e| SveError::parameter(format!("bad value {value:?} for {key}: {e}")))
}

fn list<F: FromStr>(key: &str, value: &str) -> Result<Vec<F>>
where
    F::Err: fmt::Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| num(key, s))
        .collect()
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "kernel" => self.kernel = value.trim().parse()?,
            "fixture" => {
                crate::coefficients::fixture::<f64>(value.trim())?;
                self.fixture = value.trim().to_owned();
            }
            "T" => self.horizon = num(key, value)?,
            "n" => self.steps = num(key, value)?,
            "paths" => self.paths = num(key, value)?,
            "p" => self.p = Some(num(key, value)?),
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            "threads" => self.threads = Some(num(key, value)?),
            "x0" => self.x0 = num(key, value)?,
            "levels" => self.levels = list(key, value)?,
            "lags" => self.lags = list(key, value)?,
            "zprobes" => self.zprobes = num(key, value)?,
            "v" => {
                crate::experiments::candidate(value.trim())?;
                self.v = value.trim().to_owned();
            }
            "level" => {
                self.level = match value.trim() {
                    "trace" => VerifyLevel::Trace,
                    "field" => VerifyLevel::Field,
                    other => return Err(SveError::parameter(format!("level must be trace or field, got {other:?}"))),
                }
            }
            "at" => self.at = Some(num(key, value)?),
            "xmax" => self.xmax = num(key, value)?,
            "points" => self.points = num(key, value)?,
            "g2-shift" => self.g2_shift = num(key, value)?,
            "config" => return Err(SveError::parameter("config files cannot include other config files")),
            other => return Err(SveError::parameter(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SveError::parameter(format!("config line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SveError::parameter(format!("T must be positive, got {}", self.horizon)));
        }
        if self.steps == 0 || self.paths == 0 {
            return Err(SveError::parameter("n and paths must be positive"));
        }
        if self.threads == Some(0) {
            return Err(SveError::parameter("threads must be positive"));
        }
        if !self.x0.is_finite() {
            return Err(SveError::parameter("x0 must be finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_specs_parse() {
        assert_eq!("powerlaw:α=0.25".parse::<KernelSpec>().unwrap(), KernelSpec::PowerLaw { alpha: 0.25 });
        assert_eq!("powerlaw:alpha=0.1".parse::<KernelSpec>().unwrap(), KernelSpec::PowerLaw { alpha: 0.1 });
        assert_eq!(
            "fbm-simple:H=0.25,C=2".parse::<KernelSpec>().unwrap(),
            KernelSpec::FbmSimple { hurst: 0.25, scale: 2.0 }
        );
        assert_eq!(
            "fbm-simple:H=0.3".parse::<KernelSpec>().unwrap(),
            KernelSpec::FbmSimple { hurst: 0.3, scale: 1.0 }
        );
        assert_eq!("fbm-exact:H=0.25".parse::<KernelSpec>().unwrap(), KernelSpec::FbmExact { hurst: 0.25 });
        for bad in ["powerlaw:α=0.6", "gauss:H=0.2", "fbm-exact:C=1", "powerlaw:α=x", "fbm-exact:H=0.2,Q=1"] {
            assert!(matches!(bad.parse::<KernelSpec>(), Err(SveError::Parameter(_))), "{bad}");
        }
        let spec = KernelSpec::FbmSimple { hurst: 0.25, scale: 2.0 };
        assert_eq!(spec.to_string().parse::<KernelSpec>().unwrap(), spec);
        assert_eq!(spec.alpha(), 0.25);
    }

    #[test]
    fn config_file_and_overrides() {
        let mut c = ExperimentConfig::default();
        c.apply_file_text("# comment\nkernel = fbm-exact:H=0.3\nT = 2   # horizon\n\nn=64\nlevels = 8, 16,32\n")
            .unwrap();
        assert_eq!(c.kernel, KernelSpec::FbmExact { hurst: 0.3 });
        assert_eq!((c.horizon, c.steps), (2.0, 64));
        assert_eq!(c.levels, vec![8, 16, 32]);
        c.set("n", "128").unwrap();
        assert_eq!(c.steps, 128);
        assert!(c.apply_file_text("bogus = 1").is_err());
        assert!(c.apply_file_text("n 5").is_err());
        assert!(c.set("fixture", "nonexistent").is_err());
        assert!(c.set("level", "x").is_err());
    }
}
