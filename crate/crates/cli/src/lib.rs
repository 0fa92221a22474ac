//! The `tamecheck` command line: `analyze`, `plan`, `catalog` and `verify`.
//!
//! Everything runs through [`run`], which returns the rendered document and
//! an exit code instead of printing, so the binary stays a thin shell.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use tamecheck_core::arch_graph::{parse_spec, SpecError};
use tamecheck_core::bound_engine::{sample_size, PlanMode, SamplePlan};
use tamecheck_core::empirical_lab::{parse_suite, verify_suite, CheckStatus, SuiteOptions, SuiteSummary};
use tamecheck_core::gate_catalog::{catalog_listing, CatalogRecord};
use tamecheck_core::tame_analyzer::{analyze_with, AnalysisReport, AnalyzeOptions, PlanRequest};
use tamecheck_core::{Natural, PfaffFormat};

pub const DEFAULT_SUITE: &str = include_str!("../../../suites/default_suite.json");
pub const CATALOG_VERSION: u32 = 1;

pub mod exit {
    pub const OK: u8 = 0;
    pub const VIOLATION: u8 = 1;
    pub const DIAGNOSTICS: u8 = 2;
    pub const USAGE: u8 = 64;
    pub const DATA: u8 = 65;
    pub const NO_INPUT: u8 = 66;
    pub const IO: u8 = 74;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Human,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Classification,
    Regression,
}

impl From<ModeArg> for PlanMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Classification => PlanMode::Classification,
            ModeArg::Regression => PlanMode::Regression,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tamecheck", version, about = "Definability, format and sample-size analysis of fixed architectures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the document here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "human")]
    pub format: OutputFormat,
}

#[derive(Debug, Args, Clone)]
pub struct PlanArgs {
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Universal constant; defaults to 1.
    #[arg(long = "constant-C", default_value_t = 1.0)]
    pub constant_c: f64,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze an architecture spec.
    Analyze {
        /// Architecture spec (JSON).
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Sample size for a dimension bound `K`, given directly or taken from a spec.
    Plan {
        #[arg(long, conflicts_with = "input")]
        k: Option<u64>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// List the gate catalog.
    Catalog,
    /// Run a verification suite, the embedded default unless one is given.
    Verify {
        /// Suite file.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Overrides the suite seed.
        #[arg(long, env = "TAMECHECK_SEED")]
        seed: Option<u64>,
        /// Largest shattered-set size tried.
        #[arg(long = "max-shatter-d")]
        max_shatter_d: Option<usize>,
        /// Work-unit cap per shattering probe.
        #[arg(long)]
        budget: Option<u64>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Rendered output and exit code of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: u8,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(code: u8, stdout: String) -> Self {
        Outcome { code, stdout, stderr: String::new() }
    }

    fn fail(code: u8, message: impl Into<String>) -> Self {
        let mut stderr = message.into();
        stderr.push('\n');
        Outcome { code, stdout: String::new(), stderr }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogDocument {
    pub catalog_version: u32,
    pub gates: Vec<CatalogRecord>,
}

fn read_input(path: &Path) -> Result<String, Outcome> {
    std::fs::read_to_string(path).map_err(|e| {
        let code = if e.kind() == std::io::ErrorKind::NotFound { exit::NO_INPUT } else { exit::IO };
        Outcome::fail(code, format!("{}: {e}", path.display()))
    })
}

fn spec_failure(path: &Path, err: SpecError) -> Outcome {
    match err {
        SpecError::Syntax { line, column, message } => {
            Outcome::fail(exit::DATA, format!("{}:{line}:{column}: {message}", path.display()))
        }
        SpecError::Field { path: field, message } => Outcome::fail(exit::DATA, format!("{}: {field}: {message}", path.display())),
        SpecError::Invalid(diags) => {
            let mut msg = String::new();
            for d in diags {
                let node = d.node.as_deref().unwrap_or("-");
                let _ = writeln!(msg, "{}: {node}: {}", path.display(), d.message);
            }
            Outcome::fail(exit::DIAGNOSTICS, msg.trim_end())
        }
    }
}

fn machine<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

fn plan_request(args: &PlanArgs) -> PlanRequest {
    PlanRequest { epsilon: args.epsilon, delta: args.delta, constant_c: args.constant_c, mode: args.mode.map(Into::into) }
}

fn analyze_file(path: &Path, args: &PlanArgs) -> Result<AnalysisReport, Outcome> {
    let text = read_input(path)?;
    let graph = parse_spec(&text).map_err(|e| spec_failure(path, e))?;
    let opts = AnalyzeOptions { plan: Some(plan_request(args)) };
    let mut report = analyze_with(&graph, &opts).map_err(|e| Outcome::fail(exit::USAGE, e.to_string()))?;
    report.input_sha256 = Some(hex(&Sha256::digest(text.as_bytes())));
    Ok(report)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Outcome {
    let result = match &cli.command {
        Command::Analyze { input, plan } => analyze_file(input, plan).map(|r| {
            let text = match cli.format {
                OutputFormat::Machine => machine(&r),
                OutputFormat::Human => render_report(&r),
            };
            Outcome::ok(exit::OK, text)
        }),
        Command::Plan { k, input, plan } => cmd_plan(*k, input.as_deref(), plan, cli.format),
        Command::Catalog => {
            let doc = CatalogDocument { catalog_version: CATALOG_VERSION, gates: catalog_listing() };
            let text = match cli.format {
                OutputFormat::Machine => machine(&doc),
                OutputFormat::Human => render_catalog(&doc),
            };
            Ok(Outcome::ok(exit::OK, text))
        }
        Command::Verify { input, seed, max_shatter_d, budget, threads } => {
            let opts = SuiteOptions { seed: *seed, max_d: *max_shatter_d, budget: *budget };
            cmd_verify(input.as_deref(), &opts, *threads, cli.format)
        }
    };
    let outcome = result.unwrap_or_else(|e| e);
    match &cli.output {
        Some(path) if outcome.code <= exit::DIAGNOSTICS && !outcome.stdout.is_empty() => {
            match std::fs::write(path, &outcome.stdout) {
                Ok(()) => Outcome { stdout: String::new(), ..outcome },
                Err(e) => Outcome::fail(exit::IO, format!("{}: {e}", path.display())),
            }
        }
        _ => outcome,
    }
}

fn cmd_plan(k: Option<u64>, input: Option<&Path>, args: &PlanArgs, format: OutputFormat) -> Result<Outcome, Outcome> {
    let k: Natural = match (k, input) {
        (Some(k), _) => k.into(),
        (None, Some(path)) => {
            let report = analyze_file(path, args)?;
            match report.bounds {
                Some(b) => b.pdim_bound,
                None => {
                    return Err(Outcome::fail(
                        exit::DIAGNOSTICS,
                        format!("{}: no explicit bound, K is {}", path.display(), report.k_status),
                    ))
                }
            }
        }
        (None, None) => return Err(Outcome::fail(exit::USAGE, "plan needs --k or --input")),
    };
    let mode = args.mode.map_or(PlanMode::Classification, Into::into);
    let plan = sample_size(mode, &k, args.epsilon, args.delta, args.constant_c).map_err(|e| Outcome::fail(exit::USAGE, e.to_string()))?;
    Ok(Outcome::ok(exit::OK, match format {
        OutputFormat::Machine => machine(&plan),
        OutputFormat::Human => render_plan(&plan),
    }))
}

fn cmd_verify(input: Option<&Path>, opts: &SuiteOptions, threads: Option<usize>, format: OutputFormat) -> Result<Outcome, Outcome> {
    let text = match input {
        Some(path) => read_input(path)?,
        None => DEFAULT_SUITE.to_string(),
    };
    let doc = parse_suite(&text).map_err(|e| {
        let name = input.map_or("default suite".to_string(), |p| p.display().to_string());
        Outcome::fail(exit::DATA, format!("{name}: {e}"))
    })?;
    let summary = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Outcome::fail(exit::USAGE, e.to_string()))?
            .install(|| verify_suite(&doc, opts)),
        None => verify_suite(&doc, opts),
    };
    let code = if summary.violations > 0 {
        exit::VIOLATION
    } else if summary.errors > 0 {
        exit::DIAGNOSTICS
    } else {
        exit::OK
    };
    let stdout = match format {
        OutputFormat::Machine => machine(&summary),
        OutputFormat::Human => render_summary(&summary),
    };
    let mut out = Outcome::ok(code, stdout);
    for c in summary.checks.iter().filter(|c| c.status != CheckStatus::Pass) {
        for v in c.violations.iter().chain(&c.notes) {
            let _ = writeln!(out.stderr, "{}: {v}", c.name);
        }
    }
    Ok(out)
}

fn fmt_opt(f: &Option<PfaffFormat>) -> String {
    f.as_ref().map_or("none".into(), ToString::to_string)
}

pub fn render_report(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "architecture: {}", r.name);
    if let Some(h) = &r.input_sha256 {
        let _ = writeln!(s, "input sha256: {h}");
    }
    let _ = writeln!(s, "parameters: {}", r.param_count);
    let _ = writeln!(s, "structure: {}", r.structure);
    let _ = writeln!(s, "definable: {}", r.definable);
    let _ = writeln!(s, "finite sample complexity: {}", r.finite_sample_complexity);
    let _ = writeln!(s, "K: {}", r.k_status);
    if r.qualitative_only {
        let _ = writeln!(s, "qualitative-only: no Pfaffian format, blocked at {}", r.format_blocked_by.as_deref().unwrap_or("-"));
    }
    let _ = writeln!(s, "net format: {}", fmt_opt(&r.net_format));
    if let Some(loss) = &r.loss {
        let _ = writeln!(s, "loss: {loss}, format {}", fmt_opt(&r.loss_format));
    }
    if let Some(b) = &r.bounds {
        let _ = writeln!(s, "bound inputs: p={} q={} D={} d={} s={}", b.p, b.q, b.chain_degree, b.d, b.s);
        let _ = writeln!(s, "ceil log2 B: {}{}", b.b_log2_ceil, if b.b_exact { "" } else { " (per-factor estimate)" });
        let _ = writeln!(s, "pdim bound: {}", b.pdim_bound);
        if let Some(m) = &b.khovanskii_m {
            let _ = writeln!(s, "khovanskii M: {m}");
        }
    }
    for p in &r.plans {
        let _ = writeln!(s, "plan {}: N = {} ({})", p.mode, p.n, p.formula);
    }
    if !r.obligations.is_empty() {
        let _ = writeln!(s, "obligations:");
        for o in &r.obligations {
            let _ = writeln!(s, "  {}: {}", o.node, o.text);
        }
    }
    let _ = writeln!(s, "node formats:");
    for (id, f) in &r.per_node_formats {
        let _ = writeln!(s, "  {id}: {f}");
    }
    let _ = writeln!(s, "derivation:");
    for line in &r.provenance {
        let _ = writeln!(s, "  {line}");
    }
    for c in &r.caveats {
        let _ = writeln!(s, "note: {c}");
    }
    s
}

pub fn render_plan(p: &SamplePlan) -> String {
    format!(
        "mode: {}\nK: {}\nepsilon: {}\ndelta: {}\nC: {}\nN: {}\nformula: {}\nnote: {}\n",
        p.mode, p.k, p.epsilon, p.delta, p.constant_c, p.n, p.formula, p.caveat
    )
}

pub fn render_catalog(doc: &CatalogDocument) -> String {
    let width = doc.gates.iter().map(|g| g.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for g in &doc.gates {
        let _ = writeln!(s, "{:width$}  {:16}  {:9}  {}", g.name, g.class.to_string(), fmt_opt(&g.format), g.summary);
        for c in &g.caveats {
            let _ = writeln!(s, "{:width$}    - {c}", "");
        }
    }
    s
}

pub fn render_summary(summary: &SuiteSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "suite: {} (seed {})", summary.suite, summary.seed);
    for c in &summary.checks {
        let status = match c.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Violation => "VIOLATION",
            CheckStatus::Error => "ERROR",
        };
        let _ = writeln!(s, "{status:9}  {}  [{}]  observed {}  bounds {}", c.name, c.kind, c.observed, c.bounds);
        for v in c.violations.iter().chain(&c.notes) {
            let _ = writeln!(s, "           {v}");
        }
    }
    for w in &summary.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let _ = writeln!(s, "violations: {}, errors: {}", summary.violations, summary.errors);
    s
}
