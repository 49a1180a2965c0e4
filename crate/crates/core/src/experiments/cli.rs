use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::{Args, Parser, Subcommand};

use crate::coefficients::fixture;
use crate::engine::{BrownianDriver, TimeGrid};
use crate::error::{Result, SveError};
use crate::io::{fmt_f64, Table};
use crate::path_independence::{dyadic_pairs, fbm_verify, verify_path_independence};
use crate::spde::{default_space, solve_trace, FieldProblem, InitialField};
use crate::theta_kernel::ThetaHeatKernel;

use super::config::{ExperimentConfig, KernelSpec, VerifyLevel};
use super::mc::{
    convergence_study, default_lags, default_levels, field_refinement, mc_holder_modulus, mc_moment, simulate,
};
use super::{candidate, selftest};

#[derive(Parser, Debug)]
#[command(name = "svekit", version, about = "Stochastic Volterra equations with singular kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one path and write path.csv (t,value)
    Simulate(Opts),
    /// Solve the trace equation and write a field snapshot (field.csv, field.meta)
    Field(Opts),
    /// Residual report of the path-independence equations
    #[command(name = "verify-pi")]
    VerifyPi(Opts),
    /// Monte Carlo moments E|X_t|^p at dyadic times
    #[command(name = "mc-moment")]
    McMoment(Opts),
    /// Monte Carlo increment moments and their log-log slope
    #[command(name = "mc-holder")]
    McHolder(Opts),
    /// Coupled refinement gaps at the horizon
    Convergence(Opts),
    /// Run the invariant suite
    Selftest(Opts),
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// powerlaw:α=0.25 | fbm-simple:H=0.25,C=1 | fbm-exact:H=0.25
    #[arg(long)]
    kernel: Option<String>,
    /// lipschitz | holder | degenerate | gaussian | zero | bounded-drift
    #[arg(long)]
    fixture: Option<String>,
    /// Horizon
    #[arg(long = "T")]
    horizon: Option<String>,
    /// Time steps
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    paths: Option<String>,
    /// Moment order
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    /// File of `key = value` lines; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Worker threads
    #[arg(long)]
    threads: Option<String>,
    /// Initial value
    #[arg(long)]
    x0: Option<String>,
    /// Comma-separated grid sizes
    #[arg(long)]
    levels: Option<String>,
    /// Comma-separated lags
    #[arg(long)]
    lags: Option<String>,
    #[arg(long)]
    zprobes: Option<String>,
    /// exp-sin | identity | constant
    #[arg(long)]
    v: Option<String>,
    /// trace | field
    #[arg(long)]
    level: Option<String>,
    /// Snapshot time
    #[arg(long)]
    at: Option<String>,
    /// Snapshot half-width
    #[arg(long)]
    xmax: Option<String>,
    /// Snapshot points
    #[arg(long)]
    points: Option<String>,
    /// Constant added to the diffusion functional
    #[arg(long = "g2-shift")]
    g2_shift: Option<String>,
}

impl Opts {
    fn flags(&self) -> Vec<(&'static str, &String)> {
        [
            ("kernel", &self.kernel),
            ("fixture", &self.fixture),
            ("T", &self.horizon),
            ("n", &self.n),
            ("paths", &self.paths),
            ("p", &self.p),
            ("seed", &self.seed),
            ("out", &self.out),
            ("threads", &self.threads),
            ("x0", &self.x0),
            ("levels", &self.levels),
            ("lags", &self.lags),
            ("zprobes", &self.zprobes),
            ("v", &self.v),
            ("level", &self.level),
            ("at", &self.at),
            ("xmax", &self.xmax),
            ("points", &self.points),
            ("g2-shift", &self.g2_shift),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }

    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| SveError::parameter(format!("cannot read config file {path}: {e}")))?;
            cfg.apply_file_text(&text)?;
        }
        for (k, v) in self.flags() {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(&cfg.out)
}

fn save_table(table: &Table, cfg: &ExperimentConfig, name: &str, out: &mut dyn Write) -> Result<()> {
    let path = out_dir(cfg)?.join(name);
    table.save(&path)?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn save_text(text: &str, cfg: &ExperimentConfig, name: &str, out: &mut dyn Write) -> Result<()> {
    let path = out_dir(cfg)?.join(name);
    std::fs::write(&path, text)?;
    write!(out, "{text}")?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn field(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let kernel = ThetaHeatKernel::from_alpha(cfg.kernel.alpha())?;
    let grid = TimeGrid::new(cfg.horizon, cfg.steps)?;
    let problem = FieldProblem {
        kernel,
        coeffs: fixture(&cfg.fixture)?,
        initial: InitialField::Constant(cfg.x0),
        space: default_space(&kernel, cfg.horizon)?,
    };
    let sol = solve_trace(problem, BrownianDriver::generate(cfg.seed, grid))?;
    if cfg.points < 2 || !(cfg.xmax > 0.0) {
        return Err(SveError::parameter("field snapshot needs points >= 2 and xmax > 0"));
    }
    let step = 2.0 * cfg.xmax / (cfg.points - 1) as f64;
    let xs: Vec<f64> = (0..cfg.points).map(|k| -cfg.xmax + step * k as f64).collect();
    let snap = sol.snapshot(cfg.at.unwrap_or(cfg.horizon), &xs)?;
    let (csv, meta) = snap.save(out_dir(cfg)?, "field")?;
    writeln!(out, "wrote {}\nwrote {}", csv.display(), meta.display())?;
    Ok(())
}

fn verify_pi(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    match cfg.level {
        VerifyLevel::Trace => {
            let v = candidate(&cfg.v)?;
            let driver = BrownianDriver::generate(cfg.seed, TimeGrid::new(cfg.horizon, cfg.steps)?);
            let pairs = dyadic_pairs(cfg.horizon);
            let coeffs = fixture(&cfg.fixture)?;
            let report = match cfg.kernel {
                KernelSpec::FbmSimple { .. } => {
                    let params = cfg.kernel.fbm_params().expect("validated fbm-simple spec");
                    fbm_verify(&params, &v, &coeffs, cfg.x0, &driver, &pairs)?
                }
                _ => verify_path_independence(cfg.kernel.kernel()?, &v, &coeffs, cfg.x0, &driver, &pairs)?,
            };
            if !report.is_finite() {
                return Err(SveError::numerical("residual report has non-finite entries"));
            }
            let (csv, txt) = report.save(out_dir(cfg)?, "verify_pi")?;
            write!(out, "{}", report.summary())?;
            writeln!(out, "wrote {}\nwrote {}", csv.display(), txt.display())?;
        }
        VerifyLevel::Field => {
            let levels = if cfg.levels.is_empty() {
                vec![cfg.steps, 2 * cfg.steps, 4 * cfg.steps]
            } else {
                cfg.levels.clone()
            };
            let rows = field_refinement(cfg, &levels, cfg.g2_shift)?;
            let mut table = Table::new(["n", "median_gap"]);
            let mut summary = String::from("# n, median gap\n");
            for &(n, g) in &rows {
                table.push(vec![n as f64, g]);
                summary.push_str(&format!("{n}, {}\n", fmt_f64(g)));
            }
            let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
            summary.push_str(&format!("decreasing = {decreasing}\n"));
            save_table(&table, cfg, "verify_pi_field.csv", out)?;
            save_text(&summary, cfg, "verify_pi_field.summary.txt", out)?;
        }
    }
    Ok(())
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Simulate(o) => {
            let cfg = o.config()?;
            save_table(&simulate(&cfg)?.to_table(), &cfg, "path.csv", out)?;
        }
        Command::Field(o) => field(&o.config()?, out)?,
        Command::VerifyPi(o) => verify_pi(&o.config()?, out)?,
        Command::McMoment(o) => {
            let cfg = o.config()?;
            save_table(&mc_moment(&cfg, true)?, &cfg, "mc_moment.csv", out)?;
        }
        Command::McHolder(o) => {
            let cfg = o.config()?;
            let lags = if cfg.lags.is_empty() { default_lags(&cfg) } else { cfg.lags.clone() };
            let study = mc_holder_modulus(&cfg, &lags)?;
            save_table(&study.table, &cfg, "mc_holder.csv", out)?;
            let text = format!("slope = {}\nfloor = {}\n", fmt_f64(study.slope), fmt_f64(study.floor));
            save_text(&text, &cfg, "mc_holder.summary.txt", out)?;
        }
        Command::Convergence(o) => {
            let cfg = o.config()?;
            let levels = if cfg.levels.is_empty() { default_levels(&cfg) } else { cfg.levels.clone() };
            let study = convergence_study(&cfg, &levels)?;
            save_table(&study.table, &cfg, "convergence.csv", out)?;
            save_text(&format!("slope = {}\n", fmt_f64(study.slope)), &cfg, "convergence.summary.txt", out)?;
        }
        Command::Selftest(o) => {
            o.config()?;
            let checks = selftest();
            for c in &checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                writeln!(out, "{tag} {}: {}", c.name, c.detail)?;
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(3);
            }
        }
    }
    Ok(0)
}

/// Parses `argv` (program name first) and runs the subcommand, writing progress to `out`.
pub fn run<I, S>(argv: I, out: &mut dyn Write) -> Result<i32>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| SveError::parameter(e.to_string()))?;
    execute(cli.command, out)
}

/// Entry point of the binary: returns the process exit code.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli.command, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        std::iter::once("svekit".to_owned())
            .chain(s.split_whitespace().map(str::to_owned))
            .collect()
    }

    #[test]
    fn simulate_writes_deterministic_csv() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().display();
        let cmd = format!("simulate --kernel powerlaw:α=0.25 --fixture lipschitz --T 1 --n 64 --seed 7 --out {d}");
        let mut sink = Vec::new();
        assert_eq!(run(args(&cmd), &mut sink).unwrap(), 0);
        let first = std::fs::read(dir.path().join("path.csv")).unwrap();
        assert_eq!(run(args(&cmd), &mut sink).unwrap(), 0);
        assert_eq!(first, std::fs::read(dir.path().join("path.csv")).unwrap());
        assert!(first.starts_with(b"t,value\n"));
    }

    #[test]
    fn window_violation_is_a_parameter_error() {
        let dir = tempfile::tempdir().unwrap();
        let cmd = format!("mc-moment --kernel powerlaw:α=0.3 --p 4 --n 64 --paths 4 --out {}", dir.path().display());
        let err = run(args(&cmd), &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("p > 2/(1−2α)"));
    }

    #[test]
    fn bad_input_exit_codes() {
        assert_eq!(cli_main(args("frobnicate")), 2);
        assert_eq!(cli_main(args("simulate --bogus 1")), 2);
        assert_eq!(cli_main(args("simulate --kernel powerlaw:α=0.7")), 2);
        assert_eq!(cli_main(args("simulate --n zero")), 2);
    }

    #[test]
    fn config_file_with_flag_override() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("run.conf");
        std::fs::write(&conf, format!("# run\nn = 16\nseed = 3\nout = {}\n", dir.path().display())).unwrap();
        let cmd = format!("simulate --config {} --n 32", conf.display());
        assert_eq!(run(args(&cmd), &mut Vec::new()).unwrap(), 0);
        let t = Table::load(&dir.path().join("path.csv")).unwrap();
        assert_eq!(t.rows.len(), 33);
    }

    #[test]
    fn verify_pi_closure_summary() {
        let dir = tempfile::tempdir().unwrap();
        let cmd = format!("verify-pi --fixture holder --n 64 --seed 2 --out {}", dir.path().display());
        let mut sink = Vec::new();
        assert_eq!(run(args(&cmd), &mut sink).unwrap(), 0);
        let text = String::from_utf8(sink).unwrap();
        let line = text.lines().find(|l| l.starts_with("residual1_max_abs")).unwrap();
        let v: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
        assert!(v <= 1e-12);
    }
}
