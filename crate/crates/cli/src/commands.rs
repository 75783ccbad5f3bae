use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;
use varjet::identities::{allwright_sides, eq8_check, scalar_formulas};
use varjet::riccati::{detect_flow, existence_window, frac_solution};
use varjet::selftest::{run_algebra_suite, run_polarize_suite};
use varjet::sysmodel::{riccati_to_system, system_to_riccati};
use varjet::varflow::{integrate_directional, integrate_jets};
use varjet::{DetectConfig, IntegratorConfig, PolySystem, RiccatiCoeffs};

use crate::report::{self, mat_rows, Report};

const EXIT_CODES: &str = "\
Exit status:
  0  success (detection verdicts are report content, never failures)
  2  usage error or inconsistent arguments
  3  I/O error reading an input or writing a report
  4  input document failed to parse
  5  solution blew up before the requested time
  6  lift denominator crossed zero (pole) before the requested time
  7  singular or ill-conditioned matrix
  8  self-test violation
  9  other numerical failure";

#[derive(Debug, Parser)]
#[command(name = "varjet", version, about = "Variational jets, flow identities and Riccati detection")]
#[command(after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Seeded random checks of the Kronecker and c-symmetric algebra.
    Selftest(SelftestArgs),
    /// Flow and its first three jets (full, or along --h) at --t.
    Flow(FlowArgs),
    /// Third-order directional identity along the trajectory.
    VerifyAllwright(AllwrightArgs),
    /// Second-order identity D²φ = Dφ·∫Ψ D²f (Dφ⊗Dφ) along the trajectory.
    VerifyEq8(Eq8Args),
    /// Scalar chain: variations, Schwarzian and its integral form (n = 1).
    Scalar(ScalarArgs),
    /// Whether the system is a vector Riccati equation.
    DetectRiccati(DetectArgs),
    /// Riccati solution through the linear lift, checked against direct integration.
    FracLinear(FracArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Integration {
    /// RK4 step length.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// State norm treated as blow-up.
    #[arg(long, default_value_t = 1e8)]
    pub max_norm: f64,
    /// Also integrate at half the step and report the error estimate.
    #[arg(long)]
    pub richardson: bool,
}

impl Integration {
    fn config(&self) -> Result<IntegratorConfig<f64>, CliError> {
        let cfg = IntegratorConfig {
            step: self.step,
            max_norm: self.max_norm,
            richardson: self.richardson,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn record(&self, r: &mut Report) {
        r.param("step", self.step).param("richardson", self.richardson);
        r.tolerance("max_norm", self.max_norm);
    }
}

#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Report path; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Instances per algebra family.
    #[arg(long, default_value_t = 500)]
    pub instances: usize,
    /// Instances per polarization family.
    #[arg(long, default_value_t = 200)]
    pub polarize_instances: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub polarize_tol: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    #[arg(long, value_name = "PATH")]
    pub system: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau: f64,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub xi: Vec<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    /// Direction; switches to directional jets.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub h: Option<Vec<f64>>,
    #[command(flatten)]
    pub integration: Integration,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct AllwrightArgs {
    #[arg(long, value_name = "PATH")]
    pub system: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau: f64,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub xi: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub h: Vec<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    /// Bound on `residual / (1 + scale)`.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// CSV with columns t, residual, scale.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub integration: Integration,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct Eq8Args {
    #[arg(long, value_name = "PATH")]
    pub system: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau: f64,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub xi: Vec<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub integration: Integration,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct ScalarArgs {
    #[arg(long, value_name = "PATH")]
    pub system: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub xi: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    /// Agreement tolerance for the cross-identities.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Threshold below which the Schwarzian counts as vanishing.
    #[arg(long, default_value_t = 1e-9)]
    pub vanish_tol: f64,
    #[command(flatten)]
    pub integration: Integration,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Structural,
    Flow,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[arg(long, value_name = "PATH")]
    pub system: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    pub mode: Mode,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau: f64,
    /// Time window `lo,hi`; repeatable. Defaults to tau ± 0.3.
    #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
    pub window: Vec<String>,
    /// Number of ξ draws and of h draws.
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// Coefficient tolerance of the structural test.
    #[arg(long, default_value_t = 1e-12)]
    pub structural_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub integration: Integration,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct FracArgs {
    #[arg(long, value_name = "PATH")]
    pub riccati: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau: f64,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub xi: Vec<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    /// Search radius for the ends of the existence interval.
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[command(flatten)]
    pub integration: Integration,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Input {
        path: PathBuf,
        #[source]
        source: varjet::Error,
    },
    #[error(transparent)]
    Numeric(#[from] varjet::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{failed} self-test check(s) failed")]
    Selftest { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 3,
            CliError::Usage(_) => 2,
            CliError::Selftest { .. } => 8,
            CliError::Input { source, .. } | CliError::Numeric(source) => numeric_code(source),
        }
    }
}

fn numeric_code(e: &varjet::Error) -> u8 {
    use varjet::Error as E;
    match e {
        E::Parse(_) => 4,
        E::Dimension { .. } | E::Config(_) => 2,
        E::BlowUp { .. } => 5,
        E::Pole { .. } | E::PoleCrossed { .. } => 6,
        E::Singular { .. } | E::IllConditioned { .. } => 7,
        E::Shape(_) | E::NonFinite(_) | E::OrderUnsupported { .. } => 9,
    }
}

struct Input {
    text: String,
    digest: String,
}

fn read_input(path: &Path) -> Result<Input, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = report::digest(&bytes);
    let text = String::from_utf8(bytes).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        source: varjet::Error::Parse(format!("not UTF-8: {e}")),
    })?;
    Ok(Input { text, digest })
}

fn load_system(path: &Path, r: &mut Report) -> Result<PolySystem<f64>, CliError> {
    let input = read_input(path)?;
    r.input_digest.push(input.digest);
    r.param("system", path.display().to_string());
    PolySystem::from_json(&input.text).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn load_riccati(path: &Path, r: &mut Report) -> Result<RiccatiCoeffs<f64>, CliError> {
    let input = read_input(path)?;
    r.input_digest.push(input.digest);
    r.param("riccati", path.display().to_string());
    RiccatiCoeffs::from_json(&input.text).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(r: &Report, out: &Output) -> Result<(), CliError> {
    r.write(out.out.as_deref()).map_err(|source| CliError::Io {
        path: out.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>")),
        source,
    })
}

fn emit_csv(path: Option<&Path>, t: &[f64], residual: &[f64], scale: &[f64]) -> Result<(), CliError> {
    let Some(path) = path else { return Ok(()) };
    report::write_csv(path, t, residual, scale).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Selftest(a) => selftest(&a),
        Command::Flow(a) => flow(&a),
        Command::VerifyAllwright(a) => verify_allwright(&a),
        Command::VerifyEq8(a) => verify_eq8(&a),
        Command::Scalar(a) => scalar(&a),
        Command::DetectRiccati(a) => detect_riccati(&a),
        Command::FracLinear(a) => frac_linear(&a),
    }
}

fn selftest(a: &SelftestArgs) -> Result<(), CliError> {
    let mut r = Report::new("selftest");
    r.seed = Some(a.seed);
    r.param("instances", a.instances)
        .param("polarize_instances", a.polarize_instances);
    r.tolerance("algebra", a.tol).tolerance("polarize", a.polarize_tol);
    let mut checks = run_algebra_suite(a.seed, a.instances, a.tol);
    checks.extend(run_polarize_suite(a.seed, a.polarize_instances, a.polarize_tol));
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        r.verdict(c.name, c.passed);
    }
    r.verdict("all_passed", failed == 0);
    r.datum("checks", &checks);
    emit(&r, &a.output)?;
    if failed > 0 {
        return Err(CliError::Selftest { failed });
    }
    Ok(())
}

fn flow(a: &FlowArgs) -> Result<(), CliError> {
    let mut r = Report::new("flow");
    let sys = load_system(&a.system, &mut r)?;
    let cfg = a.integration.config()?;
    r.param("tau", a.tau).param("xi", &a.xi).param("t", a.t);
    a.integration.record(&mut r);
    match &a.h {
        Some(h) => {
            r.param("h", h);
            let traj = integrate_directional(&sys, a.tau, &a.xi, h, a.t, &cfg)?;
            let s = traj.last();
            r.extend_data(json!({
                "samples": traj.len(),
                "t": s.t,
                "phi": s.phi,
                "d1": s.u1,
                "d2": s.u2,
                "d3": s.u3,
                "dphi": mat_rows(&s.dphi),
                "i1": s.i1,
                "i2": s.i2,
                "richardson_error": traj.richardson_error,
            }));
        }
        None => {
            let traj = integrate_jets(&sys, a.tau, &a.xi, a.t, &cfg)?;
            let s = traj.last();
            r.extend_data(json!({
                "samples": traj.len(),
                "t": s.t,
                "phi": s.phi,
                "dphi": mat_rows(&s.dphi),
                "d2phi": mat_rows(&s.d2phi),
                "d3phi": mat_rows(&s.d3phi),
                "richardson_error": traj.richardson_error,
            }));
        }
    }
    emit(&r, &a.output)
}

fn verify_allwright(a: &AllwrightArgs) -> Result<(), CliError> {
    let mut r = Report::new("verify-allwright");
    let sys = load_system(&a.system, &mut r)?;
    let cfg = a.integration.config()?;
    r.param("tau", a.tau)
        .param("xi", &a.xi)
        .param("h", &a.h)
        .param("t", a.t);
    a.integration.record(&mut r);
    r.tolerance("normalized", a.tol);
    let traj = integrate_directional(&sys, a.tau, &a.xi, &a.h, a.t, &cfg)?;
    let rep = allwright_sides(&traj);
    r.verdict("identity_holds", rep.max_normalized() <= a.tol);
    r.extend_data(report::allwright_data(&rep));
    r.datum("richardson_error", traj.richardson_error);
    emit_csv(a.csv.as_deref(), &rep.t, &rep.residual_norm, &rep.scale)?;
    emit(&r, &a.output)
}

fn verify_eq8(a: &Eq8Args) -> Result<(), CliError> {
    let mut r = Report::new("verify-eq8");
    let sys = load_system(&a.system, &mut r)?;
    let cfg = a.integration.config()?;
    r.param("tau", a.tau).param("xi", &a.xi).param("t", a.t);
    a.integration.record(&mut r);
    r.tolerance("relative", a.tol);
    let traj = integrate_jets(&sys, a.tau, &a.xi, a.t, &cfg)?;
    let rep = eq8_check(&traj, &sys)?;
    r.verdict("identity_holds", rep.max() <= a.tol);
    r.extend_data(report::eq8_data(&rep));
    emit_csv(a.csv.as_deref(), &rep.t, &rep.residual, &rep.scale)?;
    emit(&r, &a.output)
}

fn scalar(a: &ScalarArgs) -> Result<(), CliError> {
    let mut r = Report::new("scalar");
    let sys = load_system(&a.system, &mut r)?;
    if sys.dim() != 1 {
        return Err(CliError::Usage(format!(
            "scalar needs a one-dimensional system, {} has n = {}",
            a.system.display(),
            sys.dim()
        )));
    }
    let cfg = a.integration.config()?;
    r.param("tau", a.tau).param("xi", a.xi).param("t", a.t);
    a.integration.record(&mut r);
    r.tolerance("agreement", a.tol).tolerance("vanish", a.vanish_tol);
    let s = scalar_formulas(&sys, a.tau, a.xi, a.t, &cfg)?;
    let scale = 1.0 + s.eq4_scale();
    let schwarzian_scaled = s.scaled_schwarzian();
    let gaps = json!({
        "first_variation": rel(s.phi1, s.dphi),
        "second_variation": rel(s.phi2, s.d2phi),
        "schwarzian_integral": rel(s.schwarzian_lhs, s.schwarzian_rhs),
        "eq4_vs_schwarzian": (s.eq4_lhs - schwarzian_scaled).abs() / scale,
        "eq4_vs_integral": (s.eq4_lhs - s.eq4_rhs).abs() / scale,
        "schwarzian_vs_integral": (schwarzian_scaled - s.eq4_rhs).abs() / scale,
    });
    let agree = gaps
        .as_object()
        .map(|m| m.values().all(|v| v.as_f64().is_some_and(|g| g <= a.tol)))
        .unwrap_or(false);
    let vanishing = [s.eq4_lhs, schwarzian_scaled, s.eq4_rhs]
        .iter()
        .all(|v| v.abs() / scale <= a.vanish_tol);
    r.verdict("identities_agree", agree)
        .verdict("schwarzian_vanishes", vanishing);
    r.extend_data(json!({
        "t": s.t,
        "phi": s.phi,
        "dphi": s.dphi,
        "d2phi": s.d2phi,
        "d3phi": s.d3phi,
        "first_variation_quadrature": s.phi1,
        "second_variation_quadrature": s.phi2,
        "schwarzian": s.schwarzian_lhs,
        "schwarzian_integral": s.schwarzian_rhs,
        "scaled_schwarzian": schwarzian_scaled,
        "eq4_lhs": s.eq4_lhs,
        "eq4_rhs": s.eq4_rhs,
        "eq4_scale": s.eq4_scale(),
        "gaps": gaps,
    }));
    emit(&r, &a.output)
}

fn parse_window(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("--window expects `lo,hi`, got `{s}`"));
    let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Ok((lo, hi))
}

fn detect_riccati(a: &DetectArgs) -> Result<(), CliError> {
    let mut r = Report::new("detect-riccati");
    let sys = load_system(&a.system, &mut r)?;
    let mode = a.mode.to_possible_value().map(|v| v.get_name().to_string());
    r.param("mode", mode).param("tau", a.tau);
    let mut structural = None;
    if matches!(a.mode, Mode::Structural | Mode::Both) {
        r.tolerance("structural", a.structural_tol);
        let found = system_to_riccati(&sys, a.structural_tol);
        r.verdict("structural", found.is_some());
        r.datum("riccati", found.as_ref().map(RiccatiCoeffs::to_doc));
        structural = Some(found.is_some());
    }
    if matches!(a.mode, Mode::Flow | Mode::Both) {
        let mut cfg = DetectConfig::around(a.tau);
        if !a.window.is_empty() {
            cfg.windows = a.window.iter().map(|w| parse_window(w)).collect::<Result<_, _>>()?;
        }
        cfg.sample_count = a.samples;
        cfg.tol = a.tol;
        cfg.seed = a.seed;
        cfg.integrator = a.integration.config()?;
        r.seed = Some(a.seed);
        r.param("windows", &cfg.windows).param("samples", a.samples);
        a.integration.record(&mut r);
        r.tolerance("flow", a.tol);
        let det = detect_flow(&sys, a.tau, &cfg)?;
        r.verdict("flow", det.riccati_consistent);
        if let Some(s) = structural {
            r.verdict("agree", s == det.riccati_consistent);
        }
        r.datum(
            "flow",
            json!({
                "max_normalized": det.max_normalized,
                "windows": det.windows,
                "samples": det.samples,
            }),
        );
    }
    emit(&r, &a.output)
}

fn frac_linear(a: &FracArgs) -> Result<(), CliError> {
    let mut r = Report::new("frac-linear");
    let rc = load_riccati(&a.riccati, &mut r)?;
    let cfg = a.integration.config()?;
    r.param("tau", a.tau)
        .param("xi", &a.xi)
        .param("t", a.t)
        .param("horizon", a.horizon);
    a.integration.record(&mut r);
    r.tolerance("relative", a.tol);
    let w = existence_window(&rc, a.tau, &a.xi, a.horizon, &cfg)?;
    r.datum(
        "existence_interval",
        json!({ "lo": w.lo, "hi": w.hi, "lo_pole": w.lo_pole, "hi_pole": w.hi_pole }),
    );
    let sol = frac_solution(&rc, a.tau, &a.xi, a.t, &cfg)?;
    let sys = riccati_to_system(&rc);
    let direct = integrate_jets(&sys, a.tau, &a.xi, a.t, &cfg)?;
    let gap: Vec<f64> = sol
        .phi
        .iter()
        .zip(&direct.samples)
        .map(|(p, s)| {
            let diff = p.iter().zip(&s.phi).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            let size = s.phi.iter().fold(1.0f64, |m, y| m.max(y.abs()));
            diff / size
        })
        .collect();
    let max_gap = gap.iter().fold(0.0f64, |m, g| m.max(*g));
    r.verdict("agree", max_gap <= a.tol);
    let last = sol.maps.last().expect("grid has at least one point");
    r.extend_data(json!({
        "samples": sol.t.len(),
        "t": sol.t,
        "phi": sol.phi,
        "phi_direct": direct.samples.iter().map(|s| &s.phi).collect::<Vec<_>>(),
        "rho": sol.rho,
        "relative_gap": gap,
        "max_relative_gap": max_gap,
        "map": {
            "A": mat_rows(&last.a),
            "beta": last.beta,
            "gamma": last.gamma,
            "delta": last.delta,
        },
    }));
    emit(&r, &a.output)
}
