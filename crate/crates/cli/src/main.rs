//! `defeasible` command-line driver.
//!
//! Exit codes: 0 success / goal holds, 1 semantic error, 2 usage or I/O
//! error, 3 goal evaluated and does not hold.

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use defeasible_core::loader::{
    has_errors, parse_fact_file, parse_rule_file, serialize_rule_base, validate, Diagnostic, LoadError, Severity,
};
use defeasible_core::proleg_bridge::{export_proleg, import_proleg, BridgeError};
use defeasible_core::reasoner::{evaluate, explain, ExplainFormat, Strategy};
use defeasible_core::strategy_lab::{bench, GenParams};
use defeasible_core::{FactBase, PropositionId, RuleBase};
use defeasible_service::RuleBaseStore;

#[derive(Parser)]
#[command(
    name = "defeasible",
    version,
    about = "Defeasible rule bases: validate, evaluate, benchmark, convert, serve"
)]
struct Cli {
    /// Only print what is needed to act on the result.
    #[arg(long, global = true)]
    quiet: bool,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check a rule file (and optionally a fact file) and print diagnostics.
    Validate {
        rules: PathBuf,
        #[arg(long)]
        facts: Option<PathBuf>,
    },
    /// Evaluate a goal against a rule file and a fact file.
    Eval {
        rules: PathBuf,
        facts: PathBuf,
        goal: String,
        #[arg(long, default_value = "EXCEPTION_FIRST", value_parser = parse_strategy)]
        strategy: Strategy,
        /// Print the proof tree after the verdict.
        #[arg(long)]
        explain: bool,
    },
    /// Differentially test all strategies on generated rule bases and write a CSV cost report.
    Bench {
        #[command(flatten)]
        generator: GenArgs,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a rule file as propositional clause text.
    ExportProleg {
        rules: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Read propositional clause text back into a rule file.
    ImportProleg {
        clauses: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Preload every rule file found in this directory.
        #[arg(long)]
        rules_dir: Option<PathBuf>,
        /// Allowed CORS origin for the case explorer; any origin when omitted.
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = GenParams::default().n_rules)]
    n_rules: usize,
    #[arg(long, default_value_t = GenParams::default().max_conditions)]
    max_conditions: usize,
    #[arg(long, default_value_t = GenParams::default().max_exceptions)]
    max_exceptions: usize,
    #[arg(long, default_value_t = GenParams::default().max_depth)]
    max_depth: usize,
    #[arg(long, default_value_t = GenParams::default().n_leaves)]
    n_leaves: usize,
    #[arg(long, default_value_t = GenParams::default().p_any)]
    p_any: f64,
    #[arg(long, default_value_t = GenParams::default().p_fact)]
    p_fact: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl From<&GenArgs> for GenParams {
    fn from(a: &GenArgs) -> Self {
        GenParams {
            n_rules: a.n_rules,
            max_conditions: a.max_conditions,
            max_exceptions: a.max_exceptions,
            max_depth: a.max_depth,
            n_leaves: a.n_leaves,
            p_any: a.p_any,
            p_fact: a.p_fact,
            seed: a.seed,
        }
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
        .map_err(|e: defeasible_core::reasoner::EvalError| e.to_string())
}

/// A failed command: what to print and which exit code to use.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn semantic(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<LoadError> for Failure {
    fn from(err: LoadError) -> Self {
        let message = format!("{}: {err}", err.code());
        match err {
            LoadError::InvalidRule(_) => Failure::semantic(message),
            _ => Failure::usage(message),
        }
    }
}

impl From<BridgeError> for Failure {
    fn from(err: BridgeError) -> Self {
        let message = format!("{}: {err}", err.code());
        match err {
            BridgeError::Syntax { .. } => Failure::usage(message),
            _ => Failure::semantic(message),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Validate { rules, facts } => cmd_validate(cli, rules, facts.as_deref()),
        Command::Eval {
            rules,
            facts,
            goal,
            strategy,
            explain,
        } => cmd_eval(cli, rules, facts, goal, *strategy, *explain),
        Command::Bench { generator, trials, out } => cmd_bench(cli, generator.into(), *trials, out.as_deref()),
        Command::ExportProleg { rules, out } => cmd_export(cli, rules, out.as_deref()),
        Command::ImportProleg { clauses, out } => cmd_import(cli, clauses, out.as_deref()),
        Command::Serve {
            port,
            bind,
            rules_dir,
            cors_origin,
        } => cmd_serve(cli, bind, *port, rules_dir.as_deref(), cors_origin.as_deref()),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::usage(format!("cannot write to stdout: {e}")))
        }
    }
}

fn print_diagnostics(cli: &Cli, diagnostics: &[Diagnostic], to_stderr: bool) {
    let shown: Vec<&Diagnostic> = diagnostics
        .iter()
        .filter(|d| !cli.quiet || d.severity == Severity::Error)
        .collect();
    let text = if cli.format == Format::Json && !to_stderr {
        serde_json::to_string_pretty(&shown).unwrap_or_default() + "\n"
    } else {
        shown.iter().map(|d| format!("{d}\n")).collect()
    };
    if to_stderr {
        eprint!("{text}");
    } else {
        print!("{text}");
    }
}

/// Reads and validates a rule file; ERROR diagnostics are a semantic failure.
fn load_rules(cli: &Cli, path: &Path, facts: Option<&FactBase>) -> Result<(RuleBase, Vec<Diagnostic>), Failure> {
    let rules = parse_rule_file(&read(path)?)?;
    let (rb, diagnostics) = validate(rules, facts);
    match rb {
        Some(rb) if !has_errors(&diagnostics) => Ok((rb, diagnostics)),
        _ => {
            print_diagnostics(cli, &diagnostics, true);
            Err(Failure::semantic(format!("{} has errors", path.display())))
        }
    }
}

fn load_facts(path: &Path) -> Result<(FactBase, Vec<Diagnostic>), Failure> {
    Ok(parse_fact_file(&read(path)?)?)
}

fn cmd_validate(cli: &Cli, rules: &Path, facts: Option<&Path>) -> Outcome {
    let (facts, mut diagnostics) = match facts {
        Some(path) => {
            let (f, d) = load_facts(path)?;
            (Some(f), d)
        }
        None => (None, Vec::new()),
    };
    let parsed = parse_rule_file(&read(rules)?)?;
    let (rb, more) = validate(parsed, facts.as_ref());
    diagnostics.extend(more);
    diagnostics.sort_by(|a, b| (a.severity, &a.subject, &a.code).cmp(&(b.severity, &b.subject, &b.code)));
    print_diagnostics(cli, &diagnostics, false);
    Ok(if rb.is_some() && !has_errors(&diagnostics) {
        0
    } else {
        1
    })
}

fn cmd_eval(cli: &Cli, rules: &Path, facts: &Path, goal: &str, strategy: Strategy, want_explain: bool) -> Outcome {
    let goal = PropositionId::new(goal).map_err(|e| Failure::usage(format!("BadIdentifier: {e}")))?;
    let (facts, mut diagnostics) = load_facts(facts)?;
    let (rb, more) = load_rules(cli, rules, Some(&facts))?;
    diagnostics.extend(more.into_iter().filter(|d| d.severity != Severity::Info));
    if !cli.quiet {
        print_diagnostics(cli, &diagnostics, true);
    }

    let verdict =
        evaluate(&rb, &facts, &goal, strategy).map_err(|e| Failure::semantic(format!("GuardTripped: {e}")))?;

    match cli.format {
        Format::Json => write_output(None, &explain(&verdict, ExplainFormat::Structured))?,
        Format::Text if !cli.quiet => {
            let mut text = if verdict.holds {
                format!("{goal}: HOLDS\n")
            } else {
                format!("{goal}: DOES NOT HOLD ({})\n", verdict.status())
            };
            if want_explain {
                text.push_str(&String::from_utf8_lossy(&explain(&verdict, ExplainFormat::Text)));
            }
            write_output(None, text.as_bytes())?;
        }
        Format::Text => {}
    }
    Ok(if verdict.holds { 0 } else { 3 })
}

fn cmd_bench(cli: &Cli, params: GenParams, trials: usize, out: Option<&Path>) -> Outcome {
    if trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    let report = bench(&params, trials).map_err(|e| Failure::usage(e.to_string()))?;
    let mut csv = Vec::new();
    report
        .write_csv(&mut csv)
        .map_err(|e| Failure::usage(format!("cannot render CSV: {e}")))?;
    write_output(out, &csv)?;

    if !cli.quiet {
        if cli.format == Format::Json {
            let summary = serde_json::json!({
                "trials": report.trials,
                "mismatches": report.mismatches,
                "stats_by_strategy": report.stats_by_strategy,
            });
            eprintln!("{summary}");
        } else {
            eprintln!("{} trials, {} mismatches", report.trials, report.mismatches.len());
            for s in &report.stats_by_strategy {
                eprintln!(
                    "{:<17} propositions_evaluated mean {:.2} min {} max {}",
                    s.strategy,
                    s.mean_propositions_evaluated,
                    s.min_propositions_evaluated,
                    s.max_propositions_evaluated
                );
            }
        }
    }
    for m in &report.mismatches {
        eprintln!("mismatch: seed {} goal {} {:?}", m.seed, m.goal, m.holds);
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn cmd_export(cli: &Cli, rules: &Path, out: Option<&Path>) -> Outcome {
    let (rb, _) = load_rules(cli, rules, None)?;
    write_output(out, &export_proleg(&rb))?;
    Ok(0)
}

fn cmd_import(cli: &Cli, clauses: &Path, out: Option<&Path>) -> Outcome {
    let (rb, mut diagnostics) = import_proleg(&read(clauses)?)?;
    diagnostics.retain(|d| d.severity != Severity::Info);
    if !cli.quiet {
        print_diagnostics(cli, &diagnostics, true);
    }
    let mut text = serialize_rule_base(&rb);
    text.push(b'\n');
    write_output(out, &text)?;
    Ok(0)
}

fn cmd_serve(cli: &Cli, bind: &str, port: u16, rules_dir: Option<&Path>, cors_origin: Option<&str>) -> Outcome {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .init();

    let store = Arc::new(RuleBaseStore::new());
    if let Some(dir) = rules_dir {
        let loaded = store
            .preload_dir(dir)
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", dir.display())))?;
        if !cli.quiet {
            for handle in loaded {
                eprintln!("loaded {} as {} ({} rules)", handle.name, handle.id, handle.head_count);
            }
        }
    }

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::usage(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((bind, port))
            .await
            .map_err(|e| Failure::usage(format!("cannot listen on {bind}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::usage(e.to_string()))?;
        println!("listening on http://{addr}");
        let _ = io::stdout().flush();
        defeasible_service::serve(listener, store, cors_origin)
            .await
            .map_err(|e| Failure::usage(format!("server error: {e}")))
    })?;
    Ok(0)
}
