//! The `conal` command-line front end.
//!
//! Exit codes: 0 success or ordered, 1 negative verdict, 2 usage error,
//! 3 runtime failure.

mod consensus;
pub mod input;
mod sweep;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cone::ConeSpec;
use crate::diffpos::{monotone_scan, MapSpec};
use crate::error::ConalError;
use crate::order::{order_axiom_probe, spd_order};
use crate::symmat::{SpdPoint, SymMatrix};
use input::{matrix_rows, MatrixInput};

pub use consensus::{ConsensusConfig, NetworkConfig};
pub use sweep::SweepConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "conal",
    version,
    about = "Conal orders, cone fields and differential positivity"
)]
struct Cli {
    /// Worker threads for sweeps.
    #[arg(long, env = "CONAL_THREADS", global = true, hide_env_values = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide Σ₁ ≤ Σ₂ for the affine-invariant cone field.
    Order(OrderArgs),
    /// Cone membership of a tangent vector X at Σ.
    ConeCheck(ConeCheckArgs),
    /// Monotonicity scan of Σ ↦ Σ^r on seeded ordered pairs.
    Monotone(MonotoneArgs),
    /// Sweep of power maps over r, μ and n.
    LoewnerHeinz(SweepArgs),
    /// Simulate an oscillator network and write diagnostics.
    Consensus(ConsensusArgs),
    /// Statistical check of reflexivity, transitivity and antisymmetry.
    ProbeAxioms(ProbeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeChoice {
    Loewner,
    Quad,
}

#[derive(Debug, Args)]
struct ConeFlags {
    #[arg(long, value_enum)]
    cone: Option<ConeChoice>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Args)]
struct CommonFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OrderArgs {
    #[command(flatten)]
    cone: ConeFlags,
    /// Lower point Σ₁: `I2`, `diag(...)`, JSON rows or a file.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    /// Upper point Σ₂.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConeCheckArgs {
    #[command(flatten)]
    cone: ConeFlags,
    /// Base point Σ (identity when omitted).
    #[arg(long, allow_hyphen_values = true)]
    at: Option<String>,
    /// Symmetric tangent vector X.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MonotoneArgs {
    #[command(flatten)]
    cone: ConeFlags,
    #[command(flatten)]
    common: CommonFlags,
    /// Exponent of the power map.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonFlags,
}

#[derive(Debug, Args)]
struct ConsensusArgs {
    #[command(flatten)]
    common: CommonFlags,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[command(flatten)]
    cone: ConeFlags,
    #[command(flatten)]
    common: CommonFlags,
}

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

pub(crate) fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Report printed to stdout, plus the exit code it implies.
pub(crate) struct Outcome {
    code: i32,
    report: Value,
}

pub(crate) fn envelope(command: &str, config: &impl Serialize, result: Value) -> Value {
    json!({
        "tool": "conal",
        "version": crate::VERSION,
        "command": command,
        "config": config,
        "result": result,
    })
}

/// Writes through a temporary sibling so readers never see partial files.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, contents)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

pub(crate) fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))
}

pub(crate) fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports are plain JSON");
    s.push('\n');
    s
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", p.display())))
        }
    }
}

/// Cone selection shared by the matrix commands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConeConfig {
    #[serde(default)]
    pub cone: Option<ConeChoice>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
}

impl ConeConfig {
    fn apply(&mut self, flags: &ConeFlags) {
        if flags.cone.is_some() {
            self.cone = flags.cone;
        }
        if flags.mu.is_some() {
            self.mu = flags.mu;
        }
        if flags.n.is_some() {
            self.n = flags.n;
        }
    }

    /// Builds the spec, taking `n` from the data when not given.
    fn spec(&mut self, inferred_n: Option<usize>) -> CliResult<ConeSpec> {
        let n = match (self.n, inferred_n) {
            (Some(a), Some(b)) if a != b => {
                return Err(usage(format!("--n {a} does not match {b}x{b} matrices")))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(usage("dimension unknown: pass --n")),
        };
        self.n = Some(n);
        match self
            .cone
            .ok_or_else(|| usage("missing --cone {loewner|quad}"))?
        {
            ConeChoice::Loewner => {
                if self.mu.is_some() {
                    return Err(usage("--mu only applies to --cone quad"));
                }
                Ok(ConeSpec::loewner(n))
            }
            ConeChoice::Quad => {
                let mu = self.mu.ok_or_else(|| usage("--cone quad needs --mu"))?;
                ConeSpec::quadratic(n, mu).map_err(usage)
            }
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OrderConfig {
    #[serde(flatten)]
    pub cone: ConeConfig,
    #[serde(default)]
    pub a: Option<MatrixInput>,
    #[serde(default)]
    pub b: Option<MatrixInput>,
}

fn resolve_point(input: &Option<MatrixInput>, flag: &str) -> CliResult<(SpdPoint, MatrixInput)> {
    let m = input
        .as_ref()
        .ok_or_else(|| usage(format!("missing --{flag}")))?
        .resolve()
        .map_err(|e| usage(format!("--{flag}: {e}")))?;
    let rows = MatrixInput::Rows(matrix_rows(&m));
    let p = SpdPoint::from_matrix(m).map_err(|e| usage(format!("--{flag}: {e}")))?;
    Ok((p, rows))
}

fn token(s: &Option<String>) -> Option<MatrixInput> {
    s.as_ref().map(|t| MatrixInput::Token(t.clone()))
}

fn cmd_order(args: &OrderArgs) -> CliResult<Outcome> {
    let mut cfg: OrderConfig = load_config(args.config.as_deref())?;
    cfg.cone.apply(&args.cone);
    if args.a.is_some() {
        cfg.a = token(&args.a);
    }
    if args.b.is_some() {
        cfg.b = token(&args.b);
    }
    let (a, a_rows) = resolve_point(&cfg.a, "a")?;
    let (b, b_rows) = resolve_point(&cfg.b, "b")?;
    cfg.a = Some(a_rows);
    cfg.b = Some(b_rows);
    let spec = cfg.cone.spec(Some(a.dim()))?;
    let verdict = spd_order(&spec, &a, &b).map_err(usage)?;
    let code = if verdict.ordered {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    };
    let result = json!({
        "ordered": verdict.ordered,
        "boundary": verdict.is_boundary(),
        "verdict": verdict,
    });
    Ok(Outcome {
        code,
        report: envelope("order", &cfg, result),
    })
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConeCheckConfig {
    #[serde(flatten)]
    pub cone: ConeConfig,
    #[serde(default)]
    pub at: Option<MatrixInput>,
    #[serde(default)]
    pub x: Option<MatrixInput>,
}

fn cmd_cone_check(args: &ConeCheckArgs) -> CliResult<Outcome> {
    let mut cfg: ConeCheckConfig = load_config(args.config.as_deref())?;
    cfg.cone.apply(&args.cone);
    if args.at.is_some() {
        cfg.at = token(&args.at);
    }
    if args.x.is_some() {
        cfg.x = token(&args.x);
    }
    let x = cfg
        .x
        .as_ref()
        .ok_or_else(|| usage("missing --x"))?
        .resolve()
        .map_err(|e| usage(format!("--x: {e}")))?;
    cfg.x = Some(MatrixInput::Rows(matrix_rows(&x)));
    let x = SymMatrix::new(x).map_err(|e| usage(format!("--x: {e}")))?;
    let at = match &cfg.at {
        Some(_) => resolve_point(&cfg.at, "at")?.0,
        None => SpdPoint::identity(x.dim()),
    };
    cfg.at = Some(MatrixInput::Rows(matrix_rows(at.as_matrix())));
    let spec = cfg.cone.spec(Some(x.dim()))?;
    let margin = spec.margin_at(&at, &x).map_err(usage)?;
    let code = if margin.member {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    };
    Ok(Outcome {
        code,
        report: envelope(
            "cone-check",
            &cfg,
            json!({ "member": margin.member, "margins": margin }),
        ),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MonotoneConfig {
    #[serde(flatten)]
    pub cone: ConeConfig,
    pub r: f64,
    pub pairs: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for MonotoneConfig {
    fn default() -> Self {
        Self {
            cone: ConeConfig {
                n: Some(2),
                ..ConeConfig::default()
            },
            r: 0.5,
            pairs: 500,
            seed: 0,
            threshold: 1e-9,
        }
    }
}

fn cmd_monotone(args: &MonotoneArgs) -> CliResult<Outcome> {
    let mut cfg: MonotoneConfig = load_config(args.common.config.as_deref())?;
    cfg.cone.apply(&args.cone);
    if let Some(r) = args.r {
        cfg.r = r;
    }
    if let Some(t) = args.threshold {
        cfg.threshold = t;
    }
    if let Some(s) = args.common.samples {
        cfg.pairs = s;
    }
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    if !(cfg.r > 0.0) {
        return Err(usage("--r must be positive"));
    }
    let spec = cfg.cone.spec(None)?;
    let report = monotone_scan(
        &MapSpec::Power(cfg.r),
        &spec,
        cfg.pairs,
        cfg.seed,
        cfg.threshold,
    )
    .map_err(usage)?;
    let code = if report.violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    };
    let result = json!({
        "monotone": report.violations.is_empty(),
        "violation_count": report.violations.len(),
        "scan": report,
    });
    Ok(Outcome {
        code,
        report: envelope("monotone", &cfg, result),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    #[serde(flatten)]
    pub cone: ConeConfig,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            cone: ConeConfig {
                n: Some(3),
                ..ConeConfig::default()
            },
            trials: 500,
            seed: 0,
        }
    }
}

fn cmd_probe(args: &ProbeArgs) -> CliResult<Outcome> {
    let mut cfg: ProbeConfig = load_config(args.common.config.as_deref())?;
    cfg.cone.apply(&args.cone);
    if let Some(s) = args.common.samples {
        cfg.trials = s;
    }
    if let Some(s) = args.common.seed {
        cfg.seed = s;
    }
    let spec = cfg.cone.spec(None)?;
    let report = order_axiom_probe(&spec, cfg.trials, cfg.seed).map_err(usage)?;
    let code = if report.failures() == 0 {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    };
    Ok(Outcome {
        code,
        report: envelope(
            "probe-axioms",
            &cfg,
            serde_json::to_value(report).expect("plain data"),
        ),
    })
}

fn configure_threads(threads: Option<usize>) {
    if let Some(t) = threads.filter(|&t| t > 0) {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
}

fn dispatch(cli: &Cli) -> CliResult<(Outcome, Option<PathBuf>)> {
    match &cli.command {
        Command::Order(a) => Ok((cmd_order(a)?, a.out.clone())),
        Command::ConeCheck(a) => Ok((cmd_cone_check(a)?, a.out.clone())),
        Command::Monotone(a) => Ok((cmd_monotone(a)?, a.common.out.clone())),
        Command::ProbeAxioms(a) => Ok((cmd_probe(a)?, a.common.out.clone())),
        // these two write their own artifacts
        Command::LoewnerHeinz(a) => Ok((sweep::run(&a.common)?, None)),
        Command::Consensus(a) => Ok((consensus::run(&a.common)?, None)),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    configure_threads(cli.threads);
    match dispatch(&cli) {
        Ok((outcome, out)) => {
            let text = to_pretty(&outcome.report);
            if let Some(dir) = out {
                if let Err(e) = ensure_dir(&dir)
                    .and_then(|_| write_atomic(&dir.join("report.json"), text.as_bytes()))
                {
                    let _ = writeln!(stderr, "error: {}", e.message());
                    return e.code();
                }
            }
            let _ = stdout.write_all(text.as_bytes());
            outcome.code
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.code()
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(
        args,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    )
}

impl From<ConalError> for CliError {
    fn from(e: ConalError) -> Self {
        match e {
            ConalError::BarrierBreach { .. } | ConalError::Singular { .. } => runtime(e),
            _ => usage(e),
        }
    }
}
