//! `jdtc`: run Monte-Carlo experiments and validate scenario files.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jdtc_core::montecarlo::{run_monte_carlo, write_csv, write_raw, Manifest};
use jdtc_core::scenario::{Algorithm, ScenarioConfig};
use jdtc_core::JdtcError;

#[derive(Parser, Debug)]
#[command(name = "jdtc", version, about = "Joint detection, tracking and classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte-Carlo experiment and write the CSV and manifest.
    Run(RunArgs),
    /// Check a scenario file without running it.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioArg {
    Example1,
    Example2,
    FusionDemo,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    #[value(name = "cjde-lmb")]
    CjdeLmb,
    Etd,
    Dte,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::CjdeLmb => Algorithm::CjdeLmb,
            AlgoArg::Etd => Algorithm::Etd,
            AlgoArg::Dte => Algorithm::Dte,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "example1")]
    scenario: ScenarioArg,
    /// JSON scenario file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Weight of the cardinality cost.
    #[arg(long)]
    gamma: Option<f64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Also write per-trial scores.
    #[arg(long)]
    raw: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<JdtcError> for Failure {
    fn from(e: JdtcError) -> Self {
        match e {
            JdtcError::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

/// Loads a scenario file. Missing fields fall back to example 1; errors are
/// reported as `path:line:col: message`.
fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}:1:1: {e}", path.display())))?;
    let anchored = |e: serde_json::Error| Failure::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(anchored)?;
    let has_name = value.get("name").is_some();
    let mut cfg: ScenarioConfig = serde_json::from_str(&text).map_err(anchored)?;
    if !has_name {
        cfg.name = path.file_stem().map_or("file".into(), |s| s.to_string_lossy().into_owned());
    }
    Ok(cfg)
}

fn validate_config(cfg: &ScenarioConfig, path: &Path) -> Result<(), Failure> {
    match cfg.validate() {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            Ok(())
        }
        Err(e) => Err(Failure::Config(format!("{}:1:1: {e}", path.display()))),
    }
}

fn resolve(args: &RunArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&args.config, args.scenario) {
        (Some(path), _) => load_config(path)?,
        (None, ScenarioArg::File) => return Err(Failure::Config("--scenario file needs --config PATH".into())),
        (None, ScenarioArg::Example1) => ScenarioConfig::example1(),
        (None, ScenarioArg::Example2) => ScenarioConfig::example2(100.0),
        (None, ScenarioArg::FusionDemo) => ScenarioConfig::fusion_demo(),
    };
    if let Some(a) = args.algo {
        cfg.algorithm = a.into();
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(g) = args.gamma {
        cfg.coefficients.gamma = g;
    }
    if args.threads == Some(0) {
        return Err(Failure::Config("--threads must be at least 1".into()));
    }
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let cfg = resolve(&args)?;
    let source = args.config.clone().unwrap_or_else(|| PathBuf::from(&cfg.name));
    validate_config(&cfg, &source)?;

    let result = run_monte_carlo(&cfg, args.threads)?;
    let failures = result.trials.iter().filter(|t| t.failure.is_some()).count();
    if failures == result.trials.len() {
        let first = result.trials.iter().find_map(|t| t.failure.clone()).unwrap_or_default();
        return Err(Failure::Runtime(format!("all {failures} trials failed; first: {first}")));
    }
    if failures > 0 {
        eprintln!("warning: {failures} of {} trials failed and were excluded", result.trials.len());
    }

    let io = |what: &str, p: &Path, e: std::io::Error| Failure::Runtime(format!("cannot write {what} {}: {e}", p.display()));
    fs::create_dir_all(&args.out).map_err(|e| io("directory", &args.out, e))?;
    let stem = format!("{}_{}", cfg.name, cfg.algorithm.name());
    let csv = args.out.join(format!("{stem}.csv"));
    let file = fs::File::create(&csv).map_err(|e| io("file", &csv, e))?;
    write_csv(&result.rows, BufWriter::new(file)).map_err(|e| io("file", &csv, e))?;

    let manifest = args.out.join(format!("{stem}.manifest.json"));
    let json = serde_json::to_string_pretty(&Manifest::new(&cfg, &result))
        .map_err(|e| Failure::Runtime(format!("cannot encode manifest: {e}")))?;
    fs::write(&manifest, json + "\n").map_err(|e| io("file", &manifest, e))?;

    if args.raw {
        let raw = args.out.join(format!("{stem}.raw.csv"));
        let file = fs::File::create(&raw).map_err(|e| io("file", &raw, e))?;
        write_raw(&result.trials, BufWriter::new(file)).map_err(|e| io("file", &raw, e))?;
    }
    println!("{} ({} trials) -> {}", stem, cfg.trials, csv.display());
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.config)?;
    validate_config(&cfg, &args.config)?;
    println!("{}: ok", args.config.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Validate(a) => validate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
