//! Batch experiment driver for the obstruction laboratory.
//!
//! One command per process; every command reads an optional JSON config file
//! (`"schema": 1`) plus flags that override it, writes machine-readable
//! outputs (JSON on stdout, CSV sample tables into the output directory),
//! and stamps everything with the config hash and the seeds involved, so
//! identical invocations produce byte-identical artifacts.
//!
//! Exit codes: 0 on success/pass, 2 on a scientific failure (a violated
//! inequality, a failed cross-check, a refused precondition), 1 on usage or
//! I/O errors.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use quadrift::brackets::{self, Verdict};
use quadrift::config::default_j_max;
use quadrift::design::{self, DesignOptions};
use quadrift::drift::{self, EnsembleSpec};
use quadrift::propagator::{self, SpectralState};
use quadrift::signals::{ControlGrid, ControlLaw, ControlSpec};
use quadrift::spectral::DipoleSet;
use quadrift::toy;
use quadrift::{Error, ProblemConfig, Result};

#[derive(Parser, Debug)]
#[command(
    name = "quadrift",
    version,
    about = "Quadratic-obstruction laboratory for bilinear Schrödinger control"
)]
struct Cli {
    /// JSON config file with `"schema": 1`; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap the worker-thread pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for CSV/JSON artifacts (default: $QUADRIFT_OUT_DIR, then ".").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Verify the structural hypotheses for a dipole set.
    Check(CheckArgs),
    /// Integrate the truncated equation for one control and export the
    /// trajectory.
    Simulate(SimulateArgs),
    /// Fit the expansion remainder orders over a geometric amplitude sweep.
    ExpansionScan(ExpansionScanArgs),
    /// Measure the drift inequality over a seeded adversarial ensemble.
    DriftScan(DriftScanArgs),
    /// Design a dipole pair realizing a prescribed obstruction order.
    DesignMu(DesignMuArgs),
    /// Tabulate the obstruction coefficients, optionally cross-checked
    /// against the matrix-commutator route.
    Gamma(GammaArgs),
    /// Drive the finite-dimensional companion model.
    Toy(ToyArgs),
    /// Empirical constants of the primitive interpolation inequality.
    InterpCheck(InterpCheckArgs),
}

/// Problem-shape flags shared by the equation-side commands; every one
/// overrides the config file.
#[derive(Args, Debug, Clone, Default)]
struct ProblemFlags {
    /// Obstruction order k.
    #[arg(long)]
    k: Option<usize>,
    /// Target mode K.
    #[arg(long = "K")]
    target_mode: Option<usize>,
    /// Number of control channels r.
    #[arg(long)]
    r: Option<usize>,
    /// Galerkin truncation J.
    #[arg(long = "J")]
    j_max: Option<usize>,
    /// Horizon T.
    #[arg(long = "T")]
    t_final: Option<f64>,
    /// Integrator step.
    #[arg(long)]
    dt: Option<f64>,
    /// Quadrature tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

impl ProblemFlags {
    fn apply(&self, mut config: ProblemConfig) -> ProblemConfig {
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(target) = self.target_mode {
            config.target_mode = target;
        }
        if let Some(r) = self.r {
            config.r = r;
        }
        if let Some(j) = self.j_max {
            config.j_max = j;
        }
        if let Some(t) = self.t_final {
            config.t_final = t;
        }
        if let Some(dt) = self.dt {
            config.dt = dt;
        }
        if let Some(tol) = self.tol {
            config.tol = tol;
        }
        config.normalized()
    }
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Dipole set JSON file.
    #[arg(long)]
    mu: PathBuf,
    #[command(flatten)]
    problem: ProblemFlags,
    /// Write the report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Dipole set JSON file.
    #[arg(long)]
    mu: PathBuf,
    /// Control: a JSON/CSV file, an inline JSON document, or "zero".
    #[arg(long)]
    control: String,
    #[command(flatten)]
    problem: ProblemFlags,
    /// Trajectory CSV path (default <out>/trajectory.csv).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Highest mode exported to the CSV.
    #[arg(long, default_value_t = 8)]
    j_export: usize,
    /// Initial state: the given mode with unit coefficient.
    #[arg(long, default_value_t = 1)]
    initial_mode: usize,
}

#[derive(Args, Debug)]
struct ExpansionScanArgs {
    /// Dipole set JSON file.
    #[arg(long)]
    mu: PathBuf,
    /// Fixed control profile scaled by each amplitude (file, inline JSON, or "zero").
    #[arg(long)]
    control_profile: String,
    /// Comma-separated geometric amplitude list, e.g. 1e-2,5e-3,2.5e-3,1.25e-3.
    #[arg(long)]
    eps_list: String,
    #[command(flatten)]
    problem: ProblemFlags,
    /// Per-point CSV path (default <out>/expansion_scan.csv).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DriftScanArgs {
    /// Dipole set JSON file.
    #[arg(long)]
    mu: PathBuf,
    #[command(flatten)]
    problem: ProblemFlags,
    /// Ensemble size.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Ensemble seed.
    #[arg(long, default_value_t = 0x5EED)]
    seed: u64,
    /// Fourier modes per channel.
    #[arg(long, default_value_t = 6)]
    modes: usize,
    /// Sup-norm budget of the first primitives.
    #[arg(long, default_value_t = 1e-2)]
    primitive_sup: f64,
    /// Fraction of samples with an extra near-resonant component.
    #[arg(long, default_value_t = 0.5)]
    resonant_fraction: f64,
    /// Grid steps override.
    #[arg(long)]
    steps: Option<usize>,
    /// Comma-separated δ list for the unreachable-target sweep.
    #[arg(long, default_value = "1e-2,1e-3")]
    deltas: String,
    /// Per-sample CSV path (default <out>/drift_scan_samples.csv).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DesignMuArgs {
    #[command(flatten)]
    problem: ProblemFlags,
    /// Bumps per channel (default scales with the constraint ladder).
    #[arg(long)]
    bumps: Option<usize>,
    /// Design seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Independent multistart count.
    #[arg(long, default_value_t = 8)]
    starts: usize,
    /// Iteration cap per start.
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Residual tolerance of the equality constraints.
    #[arg(long, default_value_t = 1e-10)]
    residual_tol: f64,
    /// Where to write the designed dipole set (default <out>/designed_mu.json).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GammaArgs {
    /// Dipole set JSON file.
    #[arg(long)]
    mu: PathBuf,
    #[command(flatten)]
    problem: ProblemFlags,
    /// Recompute every entry through the matrix-commutator route and compare.
    #[arg(long)]
    xcheck_commutator: bool,
    /// Largest tolerated relative deviation between the two routes.
    #[arg(long, default_value_t = 1e-6)]
    xcheck_tol: f64,
    /// Table CSV path (default <out>/gamma_table.csv).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ToyWhat {
    /// Integrate the model for a control and export the trajectory.
    Simulate,
    /// Evaluate the bracket words and the exact obstruction certificate.
    Brackets,
    /// Random-ensemble test of the drift bound on the model.
    Drift,
}

#[derive(Args, Debug)]
struct ToyArgs {
    /// Which study to run.
    #[arg(long, value_enum)]
    what: ToyWhat,
    /// simulate: control (file, inline JSON, or "zero").
    #[arg(long, default_value = "zero")]
    control: String,
    /// simulate/drift: horizon.
    #[arg(long = "T")]
    t_final: Option<f64>,
    /// simulate/drift: grid steps (even).
    #[arg(long)]
    steps: Option<usize>,
    /// brackets: obstruction order to search.
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// brackets: drift-bracket depth cap (default 2·order + 2).
    #[arg(long)]
    l_max: Option<usize>,
    /// drift: ensemble size.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    /// drift: ensemble seed.
    #[arg(long, default_value_t = 11)]
    seed: u64,
    /// drift: control sup-norm budget.
    #[arg(long, default_value_t = 0.05)]
    amplitude: f64,
    /// drift: coefficient C of the tested bound.
    #[arg(long, default_value_t = 0.5)]
    coefficient: f64,
    /// simulate: trajectory CSV path (default <out>/toy_trajectory.csv).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InterpCheckArgs {
    /// Primitive depth k (>= 2).
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Comma-separated horizons to scan.
    #[arg(long = "T-list")]
    t_list: String,
    /// Ensemble size per horizon.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Ensemble seed.
    #[arg(long, default_value_t = 0x5EED)]
    seed: u64,
    /// Fourier modes per signal.
    #[arg(long, default_value_t = 6)]
    modes: usize,
    /// Grid steps per signal.
    #[arg(long, default_value_t = 512)]
    steps: usize,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    if let Some(threads) = cli.threads {
        // Ignore the error: the pool can only be initialized once and a
        // pre-initialized pool means another cap is already in force.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }

    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code_for(&err));
        }
    }
}

/// Usage and I/O problems exit 1; everything else is a scientific failure.
fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_)
        | Error::Parse(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<i32> {
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("QUADRIFT_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    let base = load_config_file(cli.config.as_deref())?;
    match cli.command {
        Command::Check(args) => cmd_check(args, base),
        Command::Simulate(args) => cmd_simulate(args, base, &out_dir),
        Command::ExpansionScan(args) => cmd_expansion_scan(args, base, &out_dir),
        Command::DriftScan(args) => cmd_drift_scan(args, base, &out_dir),
        Command::DesignMu(args) => cmd_design_mu(args, base, &out_dir),
        Command::Gamma(args) => cmd_gamma(args, base, &out_dir),
        Command::Toy(args) => cmd_toy(args, &out_dir),
        Command::InterpCheck(args) => cmd_interp_check(args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_config_file(path: Option<&Path>) -> Result<ProblemConfig> {
    let Some(path) = path else {
        return Ok(ProblemConfig::default());
    };
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    match value.get("schema").and_then(Value::as_u64) {
        Some(1) => {}
        Some(other) => {
            return Err(Error::InvalidArgument(format!(
                "config schema {other} is not supported (expected 1)"
            )))
        }
        None => {
            return Err(Error::InvalidArgument(
                "config file must declare \"schema\": 1".into(),
            ))
        }
    }
    let config: ProblemConfig = serde_json::from_value(value)?;
    Ok(config.normalized())
}

fn load_mu(path: &Path) -> Result<DipoleSet> {
    let text = std::fs::read_to_string(path)?;
    let mus = DipoleSet::from_json(&text)?;
    mus.validate()?;
    Ok(mus)
}

/// A control argument is "zero", a path to a JSON spec or CSV grid, or an
/// inline JSON spec.
fn load_control(text: &str, config: &ProblemConfig) -> Result<ControlGrid> {
    let fallback_steps = default_steps(config);
    if text == "zero" {
        return ControlGrid::zero(config.t_final, config.r, fallback_steps);
    }
    let path = Path::new(text);
    if path.exists() {
        if path.extension().is_some_and(|e| e == "csv") {
            return ControlGrid::from_csv(path);
        }
        let body = std::fs::read_to_string(path)?;
        return ControlSpec::from_json(&body)?.sample(fallback_steps);
    }
    if text.trim_start().starts_with('{') {
        return ControlSpec::from_json(text)?.sample(fallback_steps);
    }
    Err(Error::InvalidArgument(format!(
        "control '{text}' is neither an existing file, an inline JSON document, nor \"zero\""
    )))
}

/// Even step count matching the configured dt.
fn default_steps(config: &ProblemConfig) -> usize {
    (((config.t_final / config.dt).ceil() as usize).max(2) + 1) & !1
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("{what}: '{}' is not a number", piece.trim())))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::Parse(format!("{what}: empty list")));
    }
    Ok(values)
}

/// First 8 bytes of the SHA-256 of a JSON value, hex — the config hash for
/// commands whose parameters are not a [`ProblemConfig`].
fn digest_value(value: &Value) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn emit(envelope: &Value, to: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(envelope).expect("JSON envelope serializes");
    match to {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn in_dir(out_dir: &Path, flag: &Option<PathBuf>, default_name: &str) -> PathBuf {
    flag.clone().unwrap_or_else(|| out_dir.join(default_name))
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_check(args: CheckArgs, base: ProblemConfig) -> Result<i32> {
    let config = args.problem.apply(base);
    config.validate()?;
    let mus = load_mu(&args.mu)?;
    let report = brackets::check_hypotheses(&mus, &config)?;
    let overall = report.overall();
    let envelope = json!({
        "schema": 1,
        "command": "check",
        "config": config,
        "config_hash": config.hash(),
        "mu": args.mu.display().to_string(),
        "overall": overall,
        "report": report,
    });
    emit(&envelope, args.json.as_deref())?;
    if overall == Verdict::Pass {
        Ok(0)
    } else {
        eprintln!("hypothesis verdict: {overall:?}");
        Ok(2)
    }
}

fn cmd_simulate(args: SimulateArgs, base: ProblemConfig, out_dir: &Path) -> Result<i32> {
    let config = args.problem.apply(base);
    config.validate()?;
    let mus = load_mu(&args.mu)?;
    let u = load_control(&args.control, &config)?;
    let psi0 = SpectralState::mode(args.initial_mode, config.j_max)?;
    let trajectory = propagator::solve_nonlinear(&mus, &u, &config, &psi0)?;
    let csv_path = in_dir(out_dir, &args.csv, "trajectory.csv");
    trajectory.to_csv(&csv_path, args.j_export)?;
    let summary = trajectory.summary("strang");
    let envelope = json!({
        "schema": 1,
        "command": "simulate",
        "config": config,
        "config_hash": config.hash(),
        "mu": args.mu.display().to_string(),
        "initial_mode": args.initial_mode,
        "csv": csv_path.display().to_string(),
        "summary": summary,
    });
    emit(&envelope, None)?;
    Ok(0)
}

fn cmd_expansion_scan(args: ExpansionScanArgs, base: ProblemConfig, out_dir: &Path) -> Result<i32> {
    let config = args.problem.apply(base);
    config.validate()?;
    let mus = load_mu(&args.mu)?;
    let profile = load_control(&args.control_profile, &config)?;
    let eps_list = parse_f64_list(&args.eps_list, "--eps-list")?;
    let scan = propagator::expansion_order_scan(&mus, &profile, &config, &eps_list)?;

    let csv_path = in_dir(out_dir, &args.csv, "expansion_scan.csv");
    {
        let mut writer = csv::Writer::from_path(&csv_path)?;
        writer.write_record(["eps", "linear_remainder", "quadratic_remainder"])?;
        for p in &scan.points {
            writer.write_record(&[
                format!("{:.17e}", p.eps),
                format!("{:.17e}", p.linear_remainder),
                format!("{:.17e}", p.quadratic_remainder),
            ])?;
        }
        writer.flush()?;
    }

    let fitted = scan.linear_slope.is_some() && scan.quadratic_slope.is_some();
    let envelope = json!({
        "schema": 1,
        "command": "expansion-scan",
        "config": config,
        "config_hash": config.hash(),
        "mu": args.mu.display().to_string(),
        "csv": csv_path.display().to_string(),
        "scan": scan,
    });
    emit(&envelope, None)?;
    if fitted {
        Ok(0)
    } else {
        eprintln!("could not fit both remainder slopes (degenerate or all points excluded)");
        Ok(2)
    }
}

fn cmd_drift_scan(args: DriftScanArgs, base: ProblemConfig, out_dir: &Path) -> Result<i32> {
    let config = args.problem.apply(base);
    config.validate()?;
    let mus = load_mu(&args.mu)?;
    let deltas = parse_f64_list(&args.deltas, "--deltas")?;
    let spec = EnsembleSpec {
        samples: args.samples,
        seed: args.seed,
        modes: args.modes,
        target_primitive_sup: args.primitive_sup,
        resonant_fraction: args.resonant_fraction,
        steps: args.steps,
    };
    let result = drift::drift_scan(&mus, &config, &spec)?;
    let csv_path = in_dir(out_dir, &args.csv, "drift_scan_samples.csv");
    result.to_csv(&csv_path)?;
    let sweep = result
        .fitted_c
        .map(|c| drift::unreachable_target_sweep(c, &deltas));
    let envelope = json!({
        "schema": 1,
        "command": "drift-scan",
        "config": config,
        "config_hash": config.hash(),
        "mu": args.mu.display().to_string(),
        "ensemble": spec,
        "seed": args.seed,
        "csv": csv_path.display().to_string(),
        "passes": result.passes,
        "fitted_c": result.fitted_c,
        "violations": result.violations,
        "dropped": result.dropped,
        "tightest": result.tightest,
        "unreachable_targets": sweep,
    });
    emit(&envelope, None)?;
    if result.passes {
        Ok(0)
    } else {
        eprintln!(
            "drift scan failed: fitted_c = {:?}, violations = {}",
            result.fitted_c, result.violations
        );
        Ok(2)
    }
}

fn cmd_design_mu(args: DesignMuArgs, base: ProblemConfig, out_dir: &Path) -> Result<i32> {
    let mut config = args.problem.apply(base);
    // Defaults that scale with the order: each order weights the series
    // tails by two extra eigenvalue powers, so certification needs a finer
    // truncation and tighter quadrature than the all-purpose defaults.
    if args.problem.j_max.is_none() && config.j_max == default_j_max(config.target_mode) {
        config.j_max = config.j_max.max(48 << (2 * (config.k.max(1) - 1)));
    }
    if args.problem.tol.is_none() && config.k >= 2 && config.tol == 1e-10 {
        config.tol = 1e-12;
    }
    config.validate()?;
    let bumps = args
        .bumps
        .unwrap_or_else(|| design::equality_constraint_count(config.k).max(5) + 3);
    let options = DesignOptions {
        bumps,
        seed: args.seed,
        starts: args.starts.max(1),
        max_iterations: args.max_iterations,
        tol: args.residual_tol,
        init: None,
    };
    let result = design::design_mu(&config, &options)?;
    let mu_path = in_dir(out_dir, &args.json, "designed_mu.json");
    std::fs::write(&mu_path, result.mus.to_json() + "\n")?;
    let result_value: Value = serde_json::from_str(&result.to_json())?;
    let envelope = json!({
        "schema": 1,
        "command": "design-mu",
        "config": config,
        "config_hash": config.hash(),
        "seed": args.seed,
        "bumps": bumps,
        "mu_file": mu_path.display().to_string(),
        "result": result_value,
    });
    emit(&envelope, None)?;
    Ok(0)
}

fn cmd_gamma(args: GammaArgs, base: ProblemConfig, out_dir: &Path) -> Result<i32> {
    let config = args.problem.apply(base);
    config.validate()?;
    let mus = load_mu(&args.mu)?;
    let eigen = quadrift::spectral::eigendata(&config);
    let table = quadrift::spectral::moment_table(&mus, &config)?;
    let cseq = brackets::c_sequence(&table, &config);
    let gamma = brackets::gamma_table(&cseq, &eigen, &config);

    let mut rows_json = Vec::new();
    let mut max_rel = 0.0f64;
    let csv_path = in_dir(out_dir, &args.csv, "gamma_table.csv");
    {
        let mut writer = csv::Writer::from_path(&csv_path)?;
        let mut header = vec!["p", "ell", "L", "value", "tail", "ill_conditioned"];
        if args.xcheck_commutator {
            header.push("commutator");
            header.push("relative_deviation");
        }
        writer.write_record(&header)?;
        for (p, ell, big_l, entry) in gamma.rows() {
            let mut record = vec![
                p.to_string(),
                ell.to_string(),
                big_l.to_string(),
                format!("{:.17e}", entry.value),
                format!("{:.17e}", entry.tail),
                entry.ill_conditioned.to_string(),
            ];
            let mut row = json!({
                "p": p,
                "ell": ell,
                "L": big_l,
                "value": entry.value,
                "tail": entry.tail,
                "ill_conditioned": entry.ill_conditioned,
            });
            if args.xcheck_commutator {
                let other = brackets::commutator_gamma(&table, &eigen, p, ell, big_l, &config);
                let scale = entry.value.abs().max(other.abs());
                // Entries that vanish on both routes agree by construction.
                let rel = if scale < 1e-12 {
                    0.0
                } else {
                    (entry.value - other).abs() / scale
                };
                max_rel = max_rel.max(rel);
                record.push(format!("{other:.17e}"));
                record.push(format!("{rel:.17e}"));
                row["commutator"] = json!(other);
                row["relative_deviation"] = json!(rel);
            }
            rows_json.push(row);
            writer.write_record(&record)?;
        }
        writer.flush()?;
    }

    let agreed = !args.xcheck_commutator || max_rel <= args.xcheck_tol;
    let envelope = json!({
        "schema": 1,
        "command": "gamma",
        "config": config,
        "config_hash": config.hash(),
        "mu": args.mu.display().to_string(),
        "csv": csv_path.display().to_string(),
        "cross_checked": args.xcheck_commutator,
        "max_relative_deviation": if args.xcheck_commutator { json!(max_rel) } else { Value::Null },
        "rows": rows_json,
    });
    emit(&envelope, None)?;
    if agreed {
        Ok(0)
    } else {
        eprintln!(
            "series and commutator routes deviate by {max_rel:.3e} (tolerance {:.3e})",
            args.xcheck_tol
        );
        Ok(2)
    }
}

fn cmd_toy(args: ToyArgs, out_dir: &Path) -> Result<i32> {
    match args.what {
        ToyWhat::Simulate => toy_simulate(&args, out_dir),
        ToyWhat::Brackets => toy_brackets(&args),
        ToyWhat::Drift => toy_drift(&args),
    }
}

fn toy_simulate(args: &ToyArgs, out_dir: &Path) -> Result<i32> {
    let t_final = args.t_final.unwrap_or(0.5);
    let steps = args.steps.unwrap_or(512);
    let u = if args.control == "zero" {
        ControlGrid::zero(t_final, 2, steps)?
    } else {
        // The model has its own horizon defaults; a control document still
        // carries its horizon itself.
        let config = ProblemConfig {
            t_final,
            r: 2,
            ..ProblemConfig::default()
        };
        load_control(&args.control, &config)?
    };
    let rows = toy::toy_trajectory(&u)?;
    let csv_path = in_dir(out_dir, &args.csv, "toy_trajectory.csv");
    {
        let mut writer = csv::Writer::from_path(&csv_path)?;
        writer.write_record(["t", "x1", "x2", "x3", "x4"])?;
        for row in &rows {
            writer.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        writer.flush()?;
    }
    let last = rows.last().expect("trajectory has at least the initial row");
    let params = json!({
        "command": "toy-simulate",
        "T": u.t_final,
        "steps": u.steps(),
        "control": args.control,
    });
    let envelope = json!({
        "schema": 1,
        "command": "toy-simulate",
        "config_hash": digest_value(&params),
        "T": u.t_final,
        "steps": u.steps(),
        "csv": csv_path.display().to_string(),
        "final_state": [last[1], last[2], last[3], last[4]],
        "forbidden_margin": last[4] + last[3] * last[3],
    });
    emit(&envelope, None)?;
    Ok(0)
}

fn toy_brackets(args: &ToyArgs) -> Result<i32> {
    let k = args.order;
    let l_max = args.l_max.unwrap_or(2 * k + 2);
    let fields = toy::toy_fields();
    let words: Vec<Value> = toy::spanning_words(k, 2, l_max)
        .iter()
        .map(|word| {
            let value = toy::evaluate_bracket_word(word, &fields)?;
            Ok(json!({
                "word": word.to_string(),
                "value": value.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
            }))
        })
        .collect::<Result<_>>()?;
    let certificate = toy::obstruction_certificate(&fields, k, l_max)?;
    let form_check = toy::toy_quadratic_form_check()?;
    let certified = certificate.witness.is_some()
        && form_check.form_positive_definite
        && form_check.difference_positive_semidefinite;
    let params = json!({ "command": "toy-brackets", "k": k, "l_max": l_max });
    let certificate_value: Value = serde_json::from_str(&certificate.to_json())?;
    let form_value: Value = serde_json::from_str(&form_check.to_json())?;
    let envelope = json!({
        "schema": 1,
        "command": "toy-brackets",
        "config_hash": digest_value(&params),
        "k": k,
        "l_max": l_max,
        "words": words,
        "certificate": certificate_value,
        "form_check": form_value,
        "certified": certified,
    });
    emit(&envelope, None)?;
    if certified {
        Ok(0)
    } else {
        eprintln!("no definite annihilating form at order {k}");
        Ok(2)
    }
}

fn toy_drift(args: &ToyArgs) -> Result<i32> {
    let t_final = args.t_final.unwrap_or(0.05);
    let steps = args.steps.unwrap_or(400);
    let scan = toy::toy_drift_scan(
        args.samples,
        t_final,
        args.amplitude,
        steps,
        args.seed,
        args.coefficient,
    )?;
    let params = json!({
        "command": "toy-drift",
        "samples": args.samples,
        "T": t_final,
        "amplitude": args.amplitude,
        "steps": steps,
        "seed": args.seed,
        "coefficient": args.coefficient,
    });
    let scan_value: Value = serde_json::from_str(&scan.to_json())?;
    let passes = scan.violations == 0 && scan.worst_forbidden >= -1e-12;
    let envelope = json!({
        "schema": 1,
        "command": "toy-drift",
        "config_hash": digest_value(&params),
        "seed": args.seed,
        "scan": scan_value,
        "passes": passes,
    });
    emit(&envelope, None)?;
    if passes {
        Ok(0)
    } else {
        eprintln!(
            "toy drift bound violated: {} of {} samples, worst margin {:.3e}",
            scan.violations, scan.samples, scan.worst_margin
        );
        Ok(2)
    }
}

fn cmd_interp_check(args: InterpCheckArgs) -> Result<i32> {
    let horizons = parse_f64_list(&args.t_list, "--T-list")?;
    let mut reports = Vec::new();
    for (h_index, &t_final) in horizons.iter().enumerate() {
        if !(t_final > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "--T-list: horizon {t_final} must be positive"
            )));
        }
        let ensemble: Vec<Vec<f64>> = (0..args.samples)
            .map(|s| {
                let law = ControlLaw::RandomFourier {
                    modes: args.modes,
                    amplitude: 1.0,
                    seed: args
                        .seed
                        .wrapping_add((h_index * args.samples + s) as u64),
                };
                let realized = law.realize(t_final);
                (0..=args.steps)
                    .map(|i| realized.eval(t_final * i as f64 / args.steps as f64))
                    .collect()
            })
            .collect();
        let report = drift::interpolation_check(args.k, &ensemble, t_final)?;
        reports.push(report);
    }
    let overall = reports
        .iter()
        .map(|r| r.max_ratio)
        .fold(0.0f64, f64::max);
    let params = json!({
        "command": "interp-check",
        "k": args.k,
        "T_list": horizons,
        "samples": args.samples,
        "seed": args.seed,
        "modes": args.modes,
        "steps": args.steps,
    });
    let envelope = json!({
        "schema": 1,
        "command": "interp-check",
        "config_hash": digest_value(&params),
        "seed": args.seed,
        "k": args.k,
        "reports": reports,
        "largest_ratio": overall,
    });
    emit(&envelope, None)?;
    Ok(0)
}
