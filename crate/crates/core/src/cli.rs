//! Command-line front end: `fit`, `simulate` and `degree`.
//!
//! [`run`] never exits the process; it returns the exit code together with
//! the text destined for stdout and stderr, so tests can drive it in-process.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::candidates::{CandidateSolution, PolyMode};
use crate::config::Tolerances;
use crate::degree::{degree_experiment, DegreeConfig};
use crate::error::{Error, Result};
use crate::estimator::{fit, simulate, FitConfig, FitResult};
use crate::io::{parse_group_sizes, parse_number_list, read_group_sizes, read_matrix, read_vector, vector_to_csv};
use crate::likelihood::Mode;
use crate::model::{build_one_way_from_incidence, build_one_way_model, ones_design, ModelSpec, NullBasisMethod, VariancePoint};
use crate::oracle::{oracle_fit, OracleConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NONEXISTENT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mldegree", version, about = "Exact global ML/REML fits for two variance components")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit (sigma1_sq, sigma2_sq) and beta by enumerating all critical points.
    Fit(FitArgs),
    /// Draw y from the model and print it as a headerless CSV column.
    Simulate(SimulateArgs),
    /// Count critical points over standard normal replicates.
    Degree(DegreeArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Fixed-effect design X (CSV).
    #[arg(long, conflicts_with = "w")]
    x: Option<PathBuf>,
    /// One-way mean design: `ones` for W = 1_n, or a CSV path.
    #[arg(long)]
    w: Option<String>,
    /// Covariance kernel V (CSV).
    #[arg(long, conflicts_with_all = ["z", "groups", "groups_file"])]
    v: Option<PathBuf>,
    /// Group incidence matrix Z (CSV); V = Z Z'.
    #[arg(long, conflicts_with_all = ["groups", "groups_file"])]
    z: Option<PathBuf>,
    /// Consecutive group sizes, e.g. "2,2".
    #[arg(long, conflicts_with = "groups_file")]
    groups: Option<String>,
    /// File holding the group sizes.
    #[arg(long)]
    groups_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TolArgs {
    /// Relative threshold for rank and span-membership tests.
    #[arg(long, default_value_t = Tolerances::default().rank)]
    tol_rank: f64,
    /// Relative gap for merging eigenvalues.
    #[arg(long, default_value_t = Tolerances::default().eigen_group)]
    tol_eigen: f64,
    /// Relative size below which leading coefficients are dropped.
    #[arg(long, default_value_t = Tolerances::default().degree_drop)]
    tol_degree_drop: f64,
    /// Relative residual above which a root is spurious.
    #[arg(long, default_value_t = Tolerances::default().spurious)]
    tol_root: f64,
    /// Relative residual required of interior candidates.
    #[arg(long, default_value_t = Tolerances::default().interior)]
    tol_interior: f64,
    /// Log-likelihood gap treated as a tie.
    #[arg(long, default_value_t = Tolerances::default().tie)]
    tol_tie: f64,
    /// Polynomial assembly: exact (rational) or float.
    #[arg(long, default_value = "exact", value_parser = parse_poly_mode)]
    poly: PolyMode,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, default_value = "ml")]
    mode: Mode,
    /// Response vector (CSV column or row).
    #[arg(long)]
    y: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    tol: TolArgs,
    /// Also run the grid-search oracle and report its optimum.
    #[arg(long)]
    oracle: bool,
    /// Write the document here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    sigma1_sq: f64,
    #[arg(long)]
    sigma2_sq: f64,
    /// Fixed effects, comma separated; zero when omitted.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Length of y when no matrix fixes it (only with `--w ones` and no groups).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DegreeArgs {
    #[arg(long, default_value = "ml")]
    mode: Mode,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    tol: TolArgs,
    #[arg(long, default_value_t = 200)]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_poly_mode(s: &str) -> std::result::Result<PolyMode, String> {
    match s {
        "exact" => Ok(PolyMode::Exact),
        "float" => Ok(PolyMode::Float),
        other => Err(format!("unknown polynomial mode '{other}' (exact|float)")),
    }
}

impl TolArgs {
    fn tolerances(&self) -> Result<Tolerances> {
        let t = Tolerances {
            rank: self.tol_rank,
            eigen_group: self.tol_eigen,
            degree_drop: self.tol_degree_drop,
            spurious: self.tol_root,
            interior: self.tol_interior,
            tie: self.tol_tie,
        };
        let all = [t.rank, t.eigen_group, t.degree_drop, t.spurious, t.interior, t.tie];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Input("tolerances must be finite and non-negative".into()));
        }
        Ok(t)
    }
}

/// Output of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl RunOutput {
    fn error(e: &Error) -> Self {
        let code = match e {
            Error::DataInMeanSpace => EXIT_NONEXISTENT,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            stdout: String::new(),
            stderr: error_line(e),
        }
    }
}

/// `error[E_CODE]: message` on a single line.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("error[{}]: {msg}\n", e.code())
}

pub fn run<I, T>(args: I) -> RunOutput
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => RunOutput {
                    code: EXIT_OK,
                    stdout: e.to_string(),
                    stderr: String::new(),
                },
                _ => {
                    let first = e.to_string();
                    let first = first.lines().next().unwrap_or("invalid arguments");
                    let first = first.trim_start_matches("error: ");
                    RunOutput {
                        code: EXIT_INPUT,
                        stdout: String::new(),
                        stderr: format!("error[E_USAGE]: {first}\n"),
                    }
                }
            };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Degree(a) => run_degree(a),
    };
    result.unwrap_or_else(|e| RunOutput::error(&e))
}

fn emit(out: &Option<PathBuf>, text: String, code: i32) -> Result<RunOutput> {
    match out {
        Some(path) => {
            std::fs::write(path, &text)
                .map_err(|e| Error::Input(format!("cannot write {}: {e}", path.display())))?;
            Ok(RunOutput { code, stdout: String::new(), stderr: String::new() })
        }
        None => Ok(RunOutput { code, stdout: text, stderr: String::new() }),
    }
}

fn document(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Builds the model; `n_hint` supplies the length when only `--w ones` and
/// `--v` or `--z` are given and the matrices do not fix it otherwise.
fn build_model(a: &ModelArgs, n_hint: Option<usize>) -> Result<ModelSpec> {
    let sizes = match (&a.groups, &a.groups_file) {
        (Some(g), _) => Some(parse_group_sizes(g)?),
        (None, Some(p)) => Some(read_group_sizes(p)?),
        (None, None) => None,
    };
    let z = a.z.as_deref().map(read_matrix).transpose()?;
    let v = a.v.as_deref().map(read_matrix).transpose()?;
    let kernel_sources = usize::from(v.is_some()) + usize::from(z.is_some() || sizes.is_some());
    if kernel_sources != 1 {
        return Err(Error::Input("supply exactly one of --v or (--z | --groups | --groups-file)".into()));
    }
    let n = sizes
        .as_ref()
        .map(|s| s.iter().sum())
        .or(z.as_ref().map(|z| z.nrows()))
        .or(v.as_ref().map(|v| v.nrows()))
        .or(n_hint)
        .ok_or_else(|| Error::Input("cannot determine n".into()))?;
    let x = match (&a.x, a.w.as_deref()) {
        (Some(p), None) => read_matrix(p)?,
        (None, Some("ones")) => ones_design(n),
        (None, Some(p)) => read_matrix(std::path::Path::new(p))?,
        (None, None) => return Err(Error::Input("supply --x or --w".into())),
        (Some(_), Some(_)) => return Err(Error::Input("--x and --w are mutually exclusive".into())),
    };
    if x.nrows() != n {
        return Err(Error::Dimension(format!("design has {} rows, n = {n}", x.nrows())));
    }
    match (sizes, z, v) {
        (Some(s), None, None) => build_one_way_model(&s, x),
        (None, Some(z), None) => build_one_way_from_incidence(z, x),
        (None, None, Some(v)) => ModelSpec::new(x, v),
        _ => unreachable!("kernel sources validated above"),
    }
}

fn n_from_model_args(a: &ModelArgs) -> Result<Option<usize>> {
    Ok(match (&a.groups, &a.groups_file) {
        (Some(g), _) => Some(parse_group_sizes(g)?.iter().sum()),
        (None, Some(p)) => Some(read_group_sizes(p)?.iter().sum()),
        _ => None,
    })
}

fn complex_pair(z: Option<num_complex::Complex64>) -> Value {
    z.map_or(Value::Null, |z| json!([z.re, z.im]))
}

fn candidate_json(c: &CandidateSolution) -> Value {
    json!({
        "rho_re": c.rho.re,
        "rho_im": c.rho.im,
        "class": c.classification,
        "residual": c.residuals.map(|r| r[0].max(r[1])),
        "sigma1_sq": complex_pair(c.sigma1_sq),
        "sigma2_sq": complex_pair(c.sigma2_sq),
        "multiple": c.multiple,
    })
}

pub fn fit_document(r: &FitResult, tol: &Tolerances, poly: PolyMode) -> Value {
    let d = r.diagnostics.as_ref();
    json!({
        "command": "fit",
        "mode": r.mode,
        "s_hat": r.s_hat,
        "nonexistence": r.nonexistence,
        "beta_hat": r.beta_hat,
        "loglik": r.loglik,
        "winner": r.winner,
        "boundary": r.boundary_point.map(|b| json!({
            "sigma1_sq": b.sigma1_sq,
            "sigma2_sq": b.sigma2_sq,
            "loglik": r.boundary_value,
        })),
        "existence": r.existence,
        "degree_info": d.map(|d| json!({
            "poly_degree": d.poly_degree,
            "bound": d.degree_bound,
            "n_solutions": d.n_solutions,
            "n_poles": d.n_poles,
            "n_spurious": d.n_spurious,
            "multiple_roots": d.multiple_roots,
            "near_threshold": d.near_threshold,
            "boundary_only": d.boundary_only,
        })),
        "candidates": r.candidates.iter().map(candidate_json).collect::<Vec<_>>(),
        "spectrum": d.map(|d| &d.spectrum),
        "theta_check": d.and_then(|d| d.theta),
        "small_sigma2": d.map(|d| d.small_sigma2),
        "poly_mode": poly,
        "tolerances": tol,
    })
}

fn run_fit(a: FitArgs) -> Result<RunOutput> {
    let tol = a.tol.tolerances()?;
    let y = read_vector(&a.y)?;
    let spec = build_model(&a.model, Some(y.len()))?;
    if y.len() != spec.n() {
        return Err(Error::Dimension(format!("y has length {}, n = {}", y.len(), spec.n())));
    }
    let cfg = FitConfig { tol, poly_mode: a.tol.poly, null_basis: NullBasisMethod::Householder };
    let r = fit(&y, &spec, a.mode, &cfg)?;
    let mut doc = fit_document(&r, &tol, a.tol.poly);
    if a.oracle && r.exists() {
        let o = oracle_fit(&y, &spec, a.mode, tol.eigen_group, &OracleConfig::default())?;
        doc["oracle"] = json!({
            "s_hat": o.s_hat,
            "loglik_dense": o.loglik,
            "config": OracleConfig::default(),
        });
    }
    let code = if r.exists() { EXIT_OK } else { EXIT_NONEXISTENT };
    emit(&a.out, document(&doc), code)
}

fn run_simulate(a: SimulateArgs) -> Result<RunOutput> {
    let hint = n_from_model_args(&a.model)?.or(a.n);
    let spec = build_model(&a.model, hint)?;
    let beta = match &a.beta {
        Some(b) => DVector::from_vec(parse_number_list(b)?),
        None => DVector::zeros(spec.p()),
    };
    let s = VariancePoint::new(a.sigma1_sq, a.sigma2_sq)?;
    let y = simulate(&spec, &beta, &s, a.seed)?;
    emit(&a.out, vector_to_csv(&y), EXIT_OK)
}

fn run_degree(a: DegreeArgs) -> Result<RunOutput> {
    let tol = a.tol.tolerances()?;
    let spec = build_model(&a.model, None)?;
    let cfg = DegreeConfig { tol, poly_mode: a.tol.poly };
    let report = degree_experiment(&spec, a.mode, a.reps, a.seed, &cfg)?;
    let mut doc = serde_json::to_value(&report).map_err(|e| Error::Input(e.to_string()))?;
    doc["command"] = json!("degree");
    emit(&a.out, document(&doc), EXIT_OK)
}

/// Convenience for callers holding matrices rather than files.
pub fn fit_json(y: &DVector<f64>, x: DMatrix<f64>, v: DMatrix<f64>, mode: Mode) -> Result<Value> {
    let spec = ModelSpec::new(x, v)?;
    let cfg = FitConfig::default();
    let r = fit(y, &spec, mode, &cfg)?;
    Ok(fit_document(&r, &cfg.tol, cfg.poly_mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_are_single_line() {
        let out = run(["mldegree", "fit", "--mode", "ml"]);
        assert_eq!(out.code, EXIT_INPUT);
        assert!(out.stderr.starts_with("error[E_USAGE]: "));
        assert_eq!(out.stderr.lines().count(), 1);
    }

    #[test]
    fn bad_mode_rejected() {
        let out = run(["mldegree", "degree", "--mode", "foo", "--groups", "2,2", "--w", "ones"]);
        assert_eq!(out.code, EXIT_INPUT);
    }

    #[test]
    fn degree_from_groups() {
        let out = run(["mldegree", "degree", "--groups", "2,2", "--w", "ones", "--reps", "10", "--seed", "3"]);
        assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
        let v: Value = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(v["bound"], 3);
        assert_eq!(v["spectral_bound"], 2);
        assert_eq!(v["violations"], json!([]));
    }

    #[test]
    fn missing_kernel_is_input_error() {
        let out = run(["mldegree", "simulate", "--w", "ones", "--n", "4", "--sigma1-sq", "1", "--sigma2-sq", "1"]);
        assert_eq!(out.code, EXIT_INPUT);
        assert!(out.stderr.starts_with("error[E_INPUT]"));
    }
}
