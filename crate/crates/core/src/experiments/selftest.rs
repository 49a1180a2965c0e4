use crate::coefficients::{fixture, standard_examples, ProbeConfig};
use crate::engine::{c_alpha, c_alpha_quadrature, euler_solve, frac_forward, frac_inverse};
use crate::engine::{BrownianDriver, SamplePath, SingularKernel, TimeGrid, VolterraSolver};
use crate::error::Result;
use crate::fbm::{covariance, covariance_from_kernel, FbmParams};
use crate::path_independence::{
    default_zprobes, derive_g_from_v, dyadic_pairs, fbm_verify, residual_scan, verify_path_independence, CandidateV,
    ResidualKind,
};
use crate::spde::{check_trace_identity, default_space, solve_trace, FieldProblem, InitialField};
use crate::theta_kernel::ThetaHeatKernel;

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn heat_kernel_mass() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    for theta in [0.5_f64, 1.0, 2.0, 4.0] {
        let k = ThetaHeatKernel::new(theta)?;
        for t in [0.1, 1.0, 10.0] {
            worst = worst.max((k.mass(t)? - 1.0).abs());
        }
    }
    Ok((worst <= 1e-8, format!("max |mass − 1| = {worst:e}")))
}

fn trace_reduction() -> Result<(bool, String)> {
    for theta in [0.5, 2.0, 4.0] {
        check_trace_identity(&ThetaHeatKernel::new(theta)?, &TimeGrid::new(1.0, 256)?)?;
    }
    let k = ThetaHeatKernel::from_alpha(0.25)?;
    let grid = TimeGrid::new(1.0, 128)?;
    let driver = BrownianDriver::generate(11, grid);
    let coeffs = fixture("holder")?;
    let sol = solve_trace(
        FieldProblem {
            kernel: k,
            coeffs: coeffs.clone(),
            initial: InitialField::Constant(0.3),
            space: default_space(&k, 1.0)?,
        },
        driver.clone(),
    )?;
    let direct = euler_solve(&SingularKernel::power_law(0.25)?, &coeffs, &driver, |_| 0.3)?;
    Ok((sol.trace() == &direct, "trace solve vs Euler on the holder fixture".into()))
}

fn c_alpha_agreement() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    for a in [0.1_f64, 0.25, 0.4] {
        let c = c_alpha(a)?;
        worst = worst.max((c_alpha_quadrature(a)? - c).abs() / c);
    }
    Ok((worst <= 1e-10, format!("max relative gap {worst:e}")))
}

fn fractional_round_trip() -> Result<(bool, String)> {
    let grid = TimeGrid::new(1.0_f64, 500)?;
    let u = SamplePath::new(grid, grid.nodes().into_iter().map(|t| 1.0 + t.sin()).collect())?;
    let back = frac_inverse(0.25, &frac_forward(0.25, &u)?)?.path;
    let err = back.values().iter().zip(u.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        / u.values().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok((err <= 0.05, format!("relative sup error {err:e} at n = 500")))
}

fn fbm_reconstruction() -> Result<(bool, String)> {
    let mut worst = 0.0_f64;
    for h in [0.1_f64, 0.25, 0.4] {
        for (s, t) in [(0.3, 0.7), (1.0, 1.0)] {
            let r = covariance(h, s, t)?;
            worst = worst.max((covariance_from_kernel(h, s, t)? - r).abs() / r.abs());
        }
    }
    Ok((worst <= 1e-3, format!("max relative gap {worst:e}")))
}

fn coefficient_fixtures() -> Result<(bool, String)> {
    let cfg = ProbeConfig {
        probes: 200,
        ..ProbeConfig::default()
    };
    for (name, pair) in standard_examples::<f64>() {
        for c in [&pair.b, &pair.sigma] {
            if let Err(msg) = c.check(&cfg) {
                return Ok((false, format!("{name}: {msg}")));
            }
        }
    }
    Ok((true, "declared Hölder constants hold on probes".into()))
}

fn construction_closure() -> Result<(bool, String)> {
    let kernel = SingularKernel::power_law(0.25)?;
    let c = ThetaHeatKernel::from_alpha(0.25)?.c_theta();
    let mut worst = 0.0_f64;
    for (_, coeffs) in standard_examples::<f64>() {
        let driver = BrownianDriver::generate(3, TimeGrid::new(1.0, 64)?);
        let path = VolterraSolver::new(kernel, *driver.grid())?.solve(&coeffs, &driver, |_| 0.5)?;
        let v = CandidateV::exp_sin();
        let af = derive_g_from_v(&v, &coeffs, c);
        let rep = residual_scan(&v, &af, &coeffs, c, &path, &default_zprobes(&path, 41));
        worst = worst
            .max(rep.max_abs(ResidualKind::Residual1))
            .max(rep.max_abs(ResidualKind::Residual2));
    }
    Ok((worst <= 1e-12, format!("max residual {worst:e}")))
}

fn fbm_absorption() -> Result<(bool, String)> {
    let driver = BrownianDriver::generate(5, TimeGrid::new(1.0, 64)?);
    let coeffs = fixture("holder")?;
    let v = CandidateV::exp_sin();
    let pairs = dyadic_pairs(1.0);
    let power = SingularKernel::power_law(0.25)?;
    let one = fbm_verify(&FbmParams::new(0.25, 1.0)?, &v, &coeffs, 0.5, &driver, &pairs)?
        == verify_path_independence(power, &v, &coeffs, 0.5, &driver, &pairs)?;
    let two = fbm_verify(&FbmParams::new(0.25, 2.0)?, &v, &coeffs, 0.5, &driver, &pairs)?
        == verify_path_independence(power, &v, &coeffs.scaled(2.0)?, 0.5, &driver, &pairs)?;
    Ok((one && two, format!("C = 1 identical: {one}; C = 2 absorbed: {two}")))
}

/// Fast invariant suite across all modules.
pub fn selftest() -> Vec<Check> {
    vec![
        check("heat kernel mass", heat_kernel_mass),
        check("trace reduction", trace_reduction),
        check("c_alpha", c_alpha_agreement),
        check("fractional round trip", fractional_round_trip),
        check("fbm covariance", fbm_reconstruction),
        check("coefficient fixtures", coefficient_fixtures),
        check("construction closure", construction_closure),
        check("fbm absorption", fbm_absorption),
    ]
}
