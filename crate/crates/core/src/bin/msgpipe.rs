//! Command-line front end: `generate`, `coverage`, `analyze`, `inline`, and
//! `prove` subcommands over the msgpipe library.
//!
//! Settings resolve in three layers: the config file (lowest), then
//! command-line flags, then environment variables (highest). Exit codes:
//! 0 full success, 1 at least one target ended in a Fail outcome, 2 usage or
//! config error, 3 environment error (missing backend or prover pieces).

use clap::{Args, Parser, Subcommand};
use msgpipe::agents::ClauseClass;
use msgpipe::coverage::{feedback_diffs, measure, mutate};
use msgpipe::deps::{render_closure_report, slice, ContextMode, FunctionPath, Workspace};
use msgpipe::frontend::{parse_source, parse_spec_snippet, pretty_print_function, SpecBlock};
use msgpipe::inline::inline_best_effort;
use msgpipe::llm::{ChatBackend, LiveBackend, RecordBackend, ReplayBackend, ScriptedBackend};
use msgpipe::orchestrator::{render_result, run_suite, run_target, Outcome, RunConfig, RunRecord};
use msgpipe::prover::{parse_mock_rules, verify, ProverConfig};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(
    name = "msgpipe",
    about = "Generate and check formal specifications for a Move-language subset",
    version
)]
struct Cli {
    /// Config file with `key = value` lines (default: msgpipe.conf if present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full specification-generation loop.
    Generate(GenerateArgs),
    /// Measure mutation coverage of an existing spec.
    Coverage(CoverageArgs),
    /// Print the dependency closure of a target function.
    Analyze(AnalyzeArgs),
    /// Print the best-effort inlined form of a target function.
    Inline(AnalyzeArgs),
    /// Verify one or more Move source files as-is.
    Prove(ProveArgs),
}

#[derive(Args)]
struct ProverArgs {
    /// Prover kind: `mock` or `external`.
    #[arg(long)]
    prover: Option<String>,
    /// Rule file for the mock prover (pattern<TAB>verdict<TAB>diagnostic).
    #[arg(long)]
    prover_rules: Option<PathBuf>,
    /// Command template for the external prover; `{file}` is substituted.
    #[arg(long)]
    prover_cmd: Option<String>,
    /// Per-verification timeout in seconds.
    #[arg(long)]
    timeout_secs: Option<u64>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Move source files forming the workspace.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Target as `module::function`; omitted = every eligible function.
    #[arg(long)]
    target: Option<String>,
    /// Repair rounds per trial.
    #[arg(long)]
    rounds: Option<u32>,
    /// Independent trials per target.
    #[arg(long)]
    trials: Option<u32>,
    /// Context modes, comma-separated subset of `v1,v2`.
    #[arg(long)]
    modes: Option<String>,
    /// Enable mutation-coverage refinement.
    #[arg(long)]
    coverage: bool,
    /// Chat backend: `live`, `replay`, or `record`.
    #[arg(long)]
    backend: Option<String>,
    /// Replay store path (JSONL) for `replay`/`record` backends.
    #[arg(long)]
    replay_store: Option<PathBuf>,
    /// Write the run summary table here; transcripts go to `<FILE>.transcripts/`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for generated spec files (default: current directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed for mutant sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Mutant budget per coverage pass.
    #[arg(long)]
    mutants: Option<usize>,
    /// Model identifier sent to the chat backend.
    #[arg(long)]
    model: Option<String>,
    /// Disable the abstract-spec fallback; exhausted targets become failures.
    #[arg(long)]
    no_abstract: bool,
    #[command(flatten)]
    prover: ProverArgs,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Target as `module::function`.
    #[arg(long)]
    target: String,
    /// File holding the spec clauses to score (snippet syntax, one per line).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mutants: Option<usize>,
    #[command(flatten)]
    prover: ProverArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Target as `module::function`.
    #[arg(long)]
    target: String,
}

#[derive(Args)]
struct ProveArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[command(flatten)]
    prover: ProverArgs,
}

/// Error categories mapped to exit codes and stable stderr prefixes.
enum CliError {
    /// E002, exit 2: bad config file or inconsistent settings.
    Config(String),
    /// E004, exit 2: unreadable/unparseable input or unknown target.
    Input(String),
    /// E003, exit 3: missing backend or prover pieces.
    Environment(String),
    /// E005, exit 3: runtime failure (I/O, prover transport).
    Runtime(String),
}

impl CliError {
    fn report(&self) -> (u8, String) {
        match self {
            CliError::Config(m) => (2, format!("error[E002]: {m}")),
            CliError::Input(m) => (2, format!("error[E004]: {m}")),
            CliError::Environment(m) => (3, format!("error[E003]: {m}")),
            CliError::Runtime(m) => (3, format!("error[E005]: {m}")),
        }
    }
}

/// Flattened `key = value` settings from the config file.
struct Config(BTreeMap<String, String>);

impl Config {
    fn load(explicit: Option<&Path>) -> Result<Config, CliError> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let default = PathBuf::from("msgpipe.conf");
                if !default.exists() {
                    return Ok(Config(BTreeMap::new()));
                }
                default
            }
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    i + 1
                )));
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Config(map))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|s| s.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                CliError::Config(format!("config key `{key}` has invalid value `{v}`"))
            }),
        }
    }
}

/// config < flag < env, per setting.
fn resolve<T>(env_key: &str, flag: Option<T>, config: Option<T>) -> Option<T>
where
    T: std::str::FromStr,
{
    if let Ok(v) = std::env::var(env_key) {
        if let Ok(parsed) = v.parse() {
            return Some(parsed);
        }
    }
    flag.or(config)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let config = match Config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            let (code, msg) = e.report();
            eprintln!("{msg}");
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Generate(args) => cmd_generate(args, &config),
        Cmd::Coverage(args) => cmd_coverage(args, &config),
        Cmd::Analyze(args) => cmd_analyze(args, false),
        Cmd::Inline(args) => cmd_analyze(args, true),
        Cmd::Prove(args) => cmd_prove(args, &config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let (code, msg) = e.report();
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}

fn load_workspace(files: &[PathBuf]) -> Result<Workspace, CliError> {
    let mut modules = Vec::new();
    for file in files {
        let text = std::fs::read_to_string(file)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", file.display())))?;
        let parsed = parse_source(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
        modules.extend(parsed);
    }
    Ok(Workspace::new(modules))
}

fn parse_target(text: &str) -> Result<FunctionPath, CliError> {
    FunctionPath::parse(text)
        .ok_or_else(|| CliError::Input(format!("target must be `module::function`, got `{text}`")))
}

fn build_prover(args: &ProverArgs, config: &Config) -> Result<ProverConfig, CliError> {
    let kind = resolve(
        "MSGPIPE_PROVER",
        args.prover.clone(),
        config.get("prover").map(|s| s.to_string()),
    )
    .unwrap_or_else(|| "mock".to_string());
    let mut prover = match kind.as_str() {
        "mock" => {
            let rules_path = args
                .prover_rules
                .clone()
                .or_else(|| config.get("prover_rules").map(PathBuf::from));
            let rules = match rules_path {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| {
                        CliError::Environment(format!("cannot read {}: {e}", p.display()))
                    })?;
                    parse_mock_rules(&text)
                        .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                }
                None => Vec::new(),
            };
            ProverConfig::mock(rules)
        }
        "external" => {
            let cmd = args
                .prover_cmd
                .clone()
                .or_else(|| config.get("prover_cmd").map(|s| s.to_string()))
                .ok_or_else(|| {
                    CliError::Environment(
                        "external prover selected but no --prover-cmd / prover_cmd configured"
                            .into(),
                    )
                })?;
            ProverConfig::external(cmd)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown prover kind `{other}` (expected mock|external)"
            )))
        }
    };
    if let Some(secs) = resolve(
        "MSGPIPE_TIMEOUT_SECS",
        args.timeout_secs,
        config.parsed("timeout_secs")?,
    ) {
        prover.timeout = Duration::from_secs(secs);
    }
    Ok(prover)
}

fn build_backend(
    args: &GenerateArgs,
    config: &Config,
) -> Result<Box<dyn ChatBackend>, CliError> {
    let kind = resolve(
        "MSGPIPE_BACKEND",
        args.backend.clone(),
        config.get("backend").map(|s| s.to_string()),
    )
    .unwrap_or_else(|| "replay".to_string());
    let store = args
        .replay_store
        .clone()
        .or_else(|| config.get("replay_store").map(PathBuf::from));
    match kind.as_str() {
        "replay" => {
            let store = store.ok_or_else(|| {
                CliError::Environment("replay backend needs --replay-store".into())
            })?;
            let backend = ReplayBackend::from_file(&store)
                .map_err(|e| CliError::Environment(format!("replay store: {e}")))?;
            Ok(Box::new(backend))
        }
        "live" | "record" => {
            let endpoint = std::env::var("MSGPIPE_ENDPOINT")
                .ok()
                .or_else(|| config.get("endpoint").map(|s| s.to_string()))
                .ok_or_else(|| {
                    CliError::Environment(
                        "live backend needs MSGPIPE_ENDPOINT (or `endpoint` in config)".into(),
                    )
                })?;
            let key = std::env::var("MSGPIPE_API_KEY").map_err(|_| {
                CliError::Environment("live backend needs MSGPIPE_API_KEY in the environment".into())
            })?;
            let live = LiveBackend::new(endpoint, key, 2);
            if kind == "record" {
                let store = store.ok_or_else(|| {
                    CliError::Environment("record backend needs --replay-store".into())
                })?;
                Ok(Box::new(RecordBackend::new(live, store)))
            } else {
                Ok(Box::new(live))
            }
        }
        // Undocumented test hook: a backend with no rules, so every agent
        // call fails and the pipeline exercises its fallback paths.
        "null" => Ok(Box::new(ScriptedBackend::new(Vec::new()))),
        other => Err(CliError::Config(format!(
            "unknown backend `{other}` (expected live|replay|record)"
        ))),
    }
}

fn parse_modes(text: &str) -> Result<Vec<ContextMode>, CliError> {
    let mut modes = Vec::new();
    for part in text.split(',') {
        match part.trim() {
            "v1" => modes.push(ContextMode::Inlined),
            "v2" => modes.push(ContextMode::Listed),
            other => {
                return Err(CliError::Config(format!(
                    "unknown context mode `{other}` (expected v1,v2)"
                )))
            }
        }
    }
    if modes.is_empty() {
        return Err(CliError::Config("at least one context mode required".into()));
    }
    Ok(modes)
}

fn spec_file_stem(target: &FunctionPath) -> String {
    format!("{}__{}", target.module, target.name)
}

fn cmd_generate(args: GenerateArgs, config: &Config) -> Result<u8, CliError> {
    let workspace = load_workspace(&args.files)?;
    let prover = build_prover(&args.prover, config)?;
    let backend = build_backend(&args, config)?;

    let mut run = RunConfig::new(prover);
    if let Some(r) = resolve("MSGPIPE_ROUNDS", args.rounds, config.parsed("rounds")?) {
        if r < 1 {
            return Err(CliError::Config("rounds must be at least 1".into()));
        }
        run.rounds = r;
    }
    if let Some(t) = resolve("MSGPIPE_TRIALS", args.trials, config.parsed("trials")?) {
        if t < 1 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        run.trials = t;
    }
    if let Some(m) = resolve(
        "MSGPIPE_MODES",
        args.modes.clone(),
        config.get("modes").map(|s| s.to_string()),
    ) {
        run.context_modes = parse_modes(&m)?;
    }
    if let Some(s) = resolve("MSGPIPE_SEED", args.seed, config.parsed("seed")?) {
        run.seed = s;
    }
    if let Some(n) = resolve("MSGPIPE_MUTANTS", args.mutants, config.parsed("mutants")?) {
        run.mutants = n;
    }
    if let Some(m) = resolve(
        "MSGPIPE_MODEL",
        args.model.clone(),
        config.get("model").map(|s| s.to_string()),
    ) {
        run.model = m;
    }
    run.coverage_enabled = args.coverage || config.get("coverage") == Some("true");
    run.abstract_fallback = !args.no_abstract;

    let records: Vec<RunRecord> = match &args.target {
        Some(t) => {
            let target = parse_target(t)?;
            if workspace.function(&target).is_none() {
                return Err(CliError::Input(format!("target `{target}` not found")));
            }
            vec![run_target(&workspace, &target, &run, backend.as_ref())]
        }
        None => run_suite(&workspace, &run, backend.as_ref()).records,
    };

    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| config.get("out_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut any_fail = false;
    let mut summary = String::from("target\toutcome\tround\tmode\n");
    for record in &records {
        let row = match &record.outcome {
            Outcome::Success { round, mode, .. } => format!("success\t{round}\t{mode}"),
            Outcome::Abstract { .. } => "abstract\t-\t-".to_string(),
            Outcome::Fail => {
                any_fail = true;
                "fail\t-\t-".to_string()
            }
        };
        summary.push_str(&format!("{}\t{row}\n", record.target));
        if let Some(text) = render_result(&workspace, record) {
            let path = out_dir.join(format!("{}.move", spec_file_stem(&record.target)));
            std::fs::write(&path, text)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
            println!("wrote {}", path.display());
        }
    }
    let counts = records.iter().fold((0, 0, 0), |(s, a, f), r| match r.outcome {
        Outcome::Success { .. } => (s + 1, a, f),
        Outcome::Abstract { .. } => (s, a + 1, f),
        Outcome::Fail => (s, a, f + 1),
    });
    summary.push_str(&format!(
        "totals: success={} abstract={} fail={}\n",
        counts.0, counts.1, counts.2
    ));
    let mut clause_counts: BTreeMap<ClauseClass, usize> = BTreeMap::new();
    for r in &records {
        for (class, n) in &r.clause_counts {
            *clause_counts.entry(*class).or_insert(0) += n;
        }
    }
    if !clause_counts.is_empty() {
        let parts: Vec<String> = clause_counts
            .iter()
            .map(|(c, n)| format!("{c}:{n}"))
            .collect();
        summary.push_str(&format!("clauses: {}\n", parts.join(" ")));
    }
    print!("{summary}");

    if let Some(report) = &args.report {
        std::fs::write(report, &summary)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", report.display())))?;
        let tdir = PathBuf::from(format!("{}.transcripts", report.display()));
        std::fs::create_dir_all(&tdir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", tdir.display())))?;
        for record in &records {
            let path = tdir.join(format!("{}.txt", spec_file_stem(&record.target)));
            std::fs::write(&path, record.transcript_text())
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    Ok(if any_fail { 1 } else { 0 })
}

fn cmd_coverage(args: CoverageArgs, config: &Config) -> Result<u8, CliError> {
    let workspace = load_workspace(&args.files)?;
    let target = parse_target(&args.target)?;
    let f = workspace
        .function(&target)
        .ok_or_else(|| CliError::Input(format!("target `{target}` not found")))?
        .clone();
    let prover = build_prover(&args.prover, config)?;
    let spec_text = std::fs::read_to_string(&args.spec)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.spec.display())))?;
    let (bindings, clauses, helpers) = parse_spec_snippet(&spec_text)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.spec.display())))?;
    let mut spec = SpecBlock::empty(&target.name);
    spec.bindings = bindings;
    spec.clauses = clauses;
    spec.helper_funs = helpers;

    let seed = resolve("MSGPIPE_SEED", args.seed, config.parsed("seed")?).unwrap_or(0);
    let n = resolve("MSGPIPE_MUTANTS", args.mutants, config.parsed("mutants")?).unwrap_or(8);
    let mutants = mutate(&workspace, &target.module, &f, seed, n)
        .map_err(|e| CliError::Input(format!("mutation: {e}")))?;
    let report = measure(&workspace, &target.module, &target.name, &spec, mutants, &prover)
        .map_err(|e| CliError::Runtime(format!("coverage: {e}")))?;
    print!("{}", report.render());
    let diffs = feedback_diffs(&report);
    if !diffs.is_empty() {
        println!("uncovered mutant diffs:");
        print!("{diffs}");
    }
    Ok(0)
}

fn cmd_analyze(args: AnalyzeArgs, inline: bool) -> Result<u8, CliError> {
    let workspace = load_workspace(&args.files)?;
    let target = parse_target(&args.target)?;
    let closure = slice(&workspace, &target)
        .map_err(|e| CliError::Input(e.to_string()))?;
    if inline {
        let report = inline_best_effort(&workspace, &closure);
        print!("{}", report.render());
        println!("inlined function:");
        print!("{}", pretty_print_function(&report.result));
    } else {
        print!("{}", render_closure_report(&closure));
    }
    Ok(0)
}

fn cmd_prove(args: ProveArgs, config: &Config) -> Result<u8, CliError> {
    let prover = build_prover(&args.prover, config)?;
    for file in &args.files {
        let text = std::fs::read_to_string(file)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", file.display())))?;
        // Parse first so `prove` rejects malformed input itself rather than
        // relying on the prover's compile-error classification.
        parse_source(&text).map_err(|e| CliError::Input(format!("{}: {e}", file.display())))?;
        let verdict =
            verify(&text, &prover).map_err(|e| CliError::Runtime(format!("prover: {e}")))?;
        println!("{}: {}", file.display(), verdict.kind);
        for d in &verdict.diagnostics {
            println!("  {d}");
        }
    }
    Ok(0)
}
