//! Prover adapter: drive an external verifier as an opaque subprocess, or a
//! rule-driven mock for hermetic tests, and classify the outcome into four
//! verdicts. Also maps diagnostics to guidance text and to the clause classes
//! responsible for a failure.

use crate::agents::ClauseClass;
use regex::Regex;
use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictKind {
    Pass,
    Counterexample,
    Timeout,
    CompileError,
}

impl std::fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerdictKind::Pass => write!(f, "pass"),
            VerdictKind::Counterexample => write!(f, "counterexample"),
            VerdictKind::Timeout => write!(f, "timeout"),
            VerdictKind::CompileError => write!(f, "compile-error"),
        }
    }
}

/// One frame of a lifted counterexample trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallFrame {
    pub function: String,
    pub line: u32,
    pub assignments: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub struct ProverVerdict {
    pub kind: VerdictKind,
    pub diagnostics: Vec<String>,
    pub counterexample: Option<Vec<CallFrame>>,
    /// Raw tool output lines that did not parse into anything structured.
    pub raw_output: String,
    pub wall_time: Duration,
}

impl ProverVerdict {
    pub fn pass() -> Self {
        ProverVerdict {
            kind: VerdictKind::Pass,
            diagnostics: Vec::new(),
            counterexample: None,
            raw_output: String::new(),
            wall_time: Duration::ZERO,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(
            self.kind,
            VerdictKind::Counterexample | VerdictKind::CompileError
        )
    }
}

#[derive(Debug, Error)]
pub enum ProverError {
    #[error("prover tool not found: {0}")]
    ToolNotFound(String),
    #[error("could not set up prover workspace: {0}")]
    WorkspaceSetupFailed(String),
    #[error("bad mock rule at line {line}: {message}")]
    BadRule { line: usize, message: String },
}

/// One mock rule: if `pattern` matches the module source, produce `verdict`
/// with `diagnostic`. First matching rule wins; no match means Pass.
#[derive(Debug, Clone)]
pub struct MockRule {
    pub pattern: Regex,
    pub verdict: VerdictKind,
    pub diagnostic: String,
}

/// Parse a line-delimited rulefile: `pattern TAB verdict TAB diagnostic-text`.
/// Blank lines and `#` comments are skipped.
pub fn parse_mock_rules(text: &str) -> Result<Vec<MockRule>, ProverError> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(pat), Some(verdict), Some(diag)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(ProverError::BadRule {
                line: line_no,
                message: "expected `pattern TAB verdict TAB diagnostic`".into(),
            });
        };
        let pattern = Regex::new(pat).map_err(|e| ProverError::BadRule {
            line: line_no,
            message: e.to_string(),
        })?;
        let verdict = match verdict {
            "pass" => VerdictKind::Pass,
            "counterexample" => VerdictKind::Counterexample,
            "timeout" => VerdictKind::Timeout,
            "compile_error" => VerdictKind::CompileError,
            other => {
                return Err(ProverError::BadRule {
                    line: line_no,
                    message: format!("unknown verdict `{other}`"),
                })
            }
        };
        rules.push(MockRule {
            pattern,
            verdict,
            diagnostic: diag.to_string(),
        });
    }
    Ok(rules)
}

#[derive(Debug, Clone)]
pub enum ProverBackend {
    /// Command template; `{file}` is replaced with the module source path.
    External { command: String },
    Mock { rules: Vec<MockRule> },
}

#[derive(Debug, Clone)]
pub struct ProverConfig {
    pub backend: ProverBackend,
    pub timeout: Duration,
    /// Workspace parent dir; a fresh temp dir is made per verification.
    pub workspace_dir: Option<PathBuf>,
    /// Bounded parallelism for callers batching verifications.
    pub parallelism: usize,
}

impl ProverConfig {
    pub fn mock(rules: Vec<MockRule>) -> Self {
        ProverConfig {
            backend: ProverBackend::Mock { rules },
            timeout: Duration::from_secs(60),
            workspace_dir: None,
            parallelism: 4,
        }
    }

    pub fn external(command: impl Into<String>) -> Self {
        ProverConfig {
            backend: ProverBackend::External {
                command: command.into(),
            },
            timeout: Duration::from_secs(60),
            workspace_dir: None,
            parallelism: 4,
        }
    }
}

/// Verify `module_source` and classify the result. Tool and workspace
/// problems are errors; everything the tool itself reports is a verdict.
pub fn verify(module_source: &str, config: &ProverConfig) -> Result<ProverVerdict, ProverError> {
    match &config.backend {
        ProverBackend::Mock { rules } => Ok(mock_verify(module_source, rules, config.timeout)),
        ProverBackend::External { command } => {
            external_verify(module_source, command, config)
        }
    }
}

fn mock_verify(source: &str, rules: &[MockRule], timeout: Duration) -> ProverVerdict {
    for rule in rules {
        if rule.pattern.is_match(source) {
            let kind = rule.verdict;
            let diagnostics = if rule.diagnostic.is_empty() {
                Vec::new()
            } else {
                vec![rule.diagnostic.clone()]
            };
            let counterexample = if kind == VerdictKind::Counterexample {
                Some(parse_counterexample(&rule.diagnostic))
            } else {
                None
            };
            return ProverVerdict {
                kind,
                diagnostics,
                counterexample,
                raw_output: rule.diagnostic.clone(),
                wall_time: if kind == VerdictKind::Timeout {
                    timeout
                } else {
                    Duration::ZERO
                },
            };
        }
    }
    ProverVerdict::pass()
}

fn external_verify(
    module_source: &str,
    command: &str,
    config: &ProverConfig,
) -> Result<ProverVerdict, ProverError> {
    let dir = match &config.workspace_dir {
        Some(parent) => tempfile::tempdir_in(parent),
        None => tempfile::tempdir(),
    }
    .map_err(|e| ProverError::WorkspaceSetupFailed(e.to_string()))?;
    let file = dir.path().join("module.move");
    std::fs::File::create(&file)
        .and_then(|mut f| f.write_all(module_source.as_bytes()))
        .map_err(|e| ProverError::WorkspaceSetupFailed(e.to_string()))?;

    let rendered = command.replace("{file}", &file.to_string_lossy());
    let mut parts = rendered.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| ProverError::ToolNotFound("<empty command>".into()))?;
    let start = Instant::now();
    let mut child = std::process::Command::new(program)
        .args(parts)
        .current_dir(dir.path())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .map_err(|_| ProverError::ToolNotFound(program.to_string()))?;

    // Poll for completion under the timeout.
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {
                if start.elapsed() >= config.timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(ProverError::WorkspaceSetupFailed(e.to_string())),
        }
    };
    let wall_time = start.elapsed();

    let Some(status) = status else {
        return Ok(ProverVerdict {
            kind: VerdictKind::Timeout,
            diagnostics: vec![format!(
                "verification exceeded {}s limit",
                config.timeout.as_secs()
            )],
            counterexample: None,
            raw_output: String::new(),
            wall_time: wall_time.max(config.timeout),
        });
    };

    let mut output = String::new();
    use std::io::Read as _;
    if let Some(mut out) = child.stdout.take() {
        let _ = out.read_to_string(&mut output);
    }
    if let Some(mut err) = child.stderr.take() {
        let _ = err.read_to_string(&mut output);
    }
    Ok(classify_output(&output, status.success(), wall_time))
}

/// Map raw tool output (plus exit success) to a verdict.
pub fn classify_output(output: &str, exit_ok: bool, wall_time: Duration) -> ProverVerdict {
    let diagnostics: Vec<String> = output
        .lines()
        .filter(|l| l.contains("error") || l.contains("does not hold") || l.contains("not covered"))
        // "verification successful, 0 errors" is a success banner, not a
        // diagnostic.
        .filter(|l| !l.contains("successful") && !l.contains("0 errors"))
        .map(|l| l.trim().to_string())
        .collect();

    let lower = output.to_lowercase();
    let is_timeout = lower.contains("timeout")
        || lower.contains("timed out")
        || lower.contains("deadline")
        || lower.contains("gave up");

    let is_compile = diagnostics.iter().any(|d| {
        d.contains("cannot compile")
            || d.contains("undefined")
            || d.contains("unknown function")
            || d.contains("unbound")
            || d.contains("unexpected token")
            || d.contains("type mismatch")
            || d.contains("impure")
    });
    let is_ce = diagnostics
        .iter()
        .any(|d| d.contains("does not hold") || d.contains("not covered") || d.contains("abort"));

    let kind = if exit_ok && diagnostics.is_empty() {
        VerdictKind::Pass
    } else if is_timeout {
        VerdictKind::Timeout
    } else if is_compile {
        VerdictKind::CompileError
    } else if is_ce || !diagnostics.is_empty() || !exit_ok {
        VerdictKind::Counterexample
    } else {
        VerdictKind::Pass
    };

    let counterexample = if kind == VerdictKind::Counterexample {
        Some(parse_counterexample(output))
    } else {
        None
    };
    ProverVerdict {
        kind,
        diagnostics,
        counterexample,
        raw_output: output.to_string(),
        wall_time,
    }
}

/// Tolerant counterexample trace parser. Recognized shapes:
/// `at <function> line <n>` opens a frame; `<name> = <value>` indented below
/// it records an assignment. Unrecognized lines are skipped (they stay in
/// `raw_output`).
pub fn parse_counterexample(text: &str) -> Vec<CallFrame> {
    let frame_re = Regex::new(r"at\s+([A-Za-z0-9_:]+)\s+line\s+(\d+)").unwrap();
    let assign_re = Regex::new(r"^\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)$").unwrap();
    let mut frames: Vec<CallFrame> = Vec::new();
    for line in text.lines() {
        if let Some(c) = frame_re.captures(line) {
            frames.push(CallFrame {
                function: c[1].to_string(),
                line: c[2].parse().unwrap_or(0),
                assignments: Vec::new(),
            });
        } else if let Some(c) = assign_re.captures(line) {
            if let Some(frame) = frames.last_mut() {
                frame
                    .assignments
                    .push((c[1].to_string(), c[2].trim().to_string()));
            }
        }
    }
    frames
}

#[derive(Debug, Clone)]
pub struct GuidanceRule {
    pub pattern: Regex,
    pub advice: String,
    pub error_tag: String,
}

/// The stock rulebook: the two most common failure shapes plus a few
/// recurring compile-time mistakes in generated clauses.
pub fn builtin_guidance_rules() -> Vec<GuidanceRule> {
    let rule = |pat: &str, advice: &str, tag: &str| GuidanceRule {
        pattern: Regex::new(pat).expect("builtin pattern compiles"),
        advice: advice.to_string(),
        error_tag: tag.to_string(),
    };
    vec![
        rule(
            r"impure|early return|side.effect",
            "The specification references an impure function (one with early returns or side effects). Write a pure spec helper instead and reference that.",
            "impure-function",
        ),
        rule(
            r"undefined|unbound (function|variable)|unknown (function|name)",
            "The specification references a function or name that does not exist. Only use names defined in the module or declared spec helpers; avoid undefined functions.",
            "undefined-function",
        ),
        rule(
            r"post.condition does not hold",
            "A postcondition is too strong or mis-states the final state. Relate post-state to pre-state with old(..) and re-check each ensures clause against the code path.",
            "ensures-failed",
        ),
        rule(
            r"abort not covered",
            "The code can abort on a path no aborts_if clause covers. Enumerate every assert!, arithmetic overflow/underflow, and missing-resource access, and add an aborts_if for each.",
            "aborts-uncovered",
        ),
        rule(
            r"unexpected token|misplaced",
            "The clause has a syntax problem (often a stray or missing semicolon). Emit one clause per line ending in a semicolon.",
            "syntax",
        ),
    ]
}

/// All matching rules' advice, stable in rulebook order.
pub fn match_guidance(verdict: &ProverVerdict, rules: &[GuidanceRule]) -> Vec<String> {
    let mut out = Vec::new();
    for rule in rules {
        if verdict
            .diagnostics
            .iter()
            .any(|d| rule.pattern.is_match(d))
        {
            out.push(rule.advice.clone());
        }
    }
    out
}

/// Which clause classes a failure is attributed to. Diagnostics naming a
/// clause kind route to that class; a postcondition failure additionally
/// implicates loop invariants when the target has loops; anything
/// unattributable falls back to every active class.
pub fn attribute_failure(
    verdict: &ProverVerdict,
    has_loops: bool,
    active: &[ClauseClass],
) -> BTreeSet<ClauseClass> {
    let mut out = BTreeSet::new();
    for d in &verdict.diagnostics {
        if d.contains("post-condition does not hold") || d.contains("ensures") {
            out.insert(ClauseClass::Ensures);
            if has_loops {
                out.insert(ClauseClass::LoopInvariant);
            }
        }
        if d.contains("abort not covered") || d.contains("aborts_if") {
            out.insert(ClauseClass::AbortsIf);
        }
        if d.contains("modifies") {
            out.insert(ClauseClass::Modifies);
        }
        if d.contains("invariant does not hold") || d.contains("loop invariant") {
            out.insert(ClauseClass::LoopInvariant);
        }
    }
    out.retain(|c| active.contains(c));
    if out.is_empty() {
        out.extend(active.iter().copied());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ce(diags: &[&str]) -> ProverVerdict {
        ProverVerdict {
            kind: VerdictKind::Counterexample,
            diagnostics: diags.iter().map(|s| s.to_string()).collect(),
            counterexample: None,
            raw_output: String::new(),
            wall_time: Duration::ZERO,
        }
    }

    const ALL: &[ClauseClass] = &[
        ClauseClass::AbortsIf,
        ClauseClass::Modifies,
        ClauseClass::Ensures,
        ClauseClass::LoopInvariant,
    ];

    #[test]
    fn mock_rulefile_first_match_wins_default_pass() {
        let rules = parse_mock_rules(
            "aborts_if balance < amount\tpass\t\n\
             ensures\tcounterexample\terror: post-condition does not hold\n",
        )
        .unwrap();
        let config = ProverConfig::mock(rules);

        let v = verify("spec withdraw { aborts_if balance < amount; }", &config).unwrap();
        assert_eq!(v.kind, VerdictKind::Pass);

        let v = verify("spec withdraw { ensures x == 1; }", &config).unwrap();
        assert_eq!(v.kind, VerdictKind::Counterexample);
        assert_eq!(v.diagnostics.len(), 1);

        let v = verify("fun f() { }", &config).unwrap();
        assert_eq!(v.kind, VerdictKind::Pass);
    }

    #[test]
    fn bad_rulefile_lines_are_rejected_with_line_numbers() {
        let err = parse_mock_rules("only-two-fields\tpass\n").unwrap_err();
        match err {
            ProverError::BadRule { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_mock_rules("p\tnot_a_verdict\td\n").unwrap_err();
        assert!(matches!(err, ProverError::BadRule { line: 1, .. }));
    }

    #[test]
    fn mock_timeout_reports_wall_time_at_limit() {
        let rules = parse_mock_rules("while\ttimeout\tsolver gave up\n").unwrap();
        let mut config = ProverConfig::mock(rules);
        config.timeout = Duration::from_secs(7);
        let v = verify("fun f() { while (true) { } }", &config).unwrap();
        assert_eq!(v.kind, VerdictKind::Timeout);
        assert!(v.wall_time >= Duration::from_secs(7));
    }

    #[test]
    fn external_tool_missing_is_an_error_not_a_verdict() {
        let config = ProverConfig::external("definitely-not-a-real-prover {file}");
        let err = verify("module 0x1::m { }", &config).unwrap_err();
        assert!(matches!(err, ProverError::ToolNotFound(_)));
    }

    #[test]
    fn external_process_runs_and_classifies() {
        // `true` exits 0 with no output → Pass.
        let config = ProverConfig::external("true {file}");
        let v = verify("module 0x1::m { }", &config).unwrap();
        assert_eq!(v.kind, VerdictKind::Pass);
        // `false` exits nonzero with no diagnostics → Counterexample bucket.
        let config = ProverConfig::external("false");
        let v = verify("module 0x1::m { }", &config).unwrap();
        assert_eq!(v.kind, VerdictKind::Counterexample);
    }

    #[test]
    fn external_timeout_kills_the_process() {
        let mut config = ProverConfig::external("sleep 30");
        config.timeout = Duration::from_millis(200);
        let start = Instant::now();
        let v = verify("module 0x1::m { }", &config).unwrap();
        assert_eq!(v.kind, VerdictKind::Timeout);
        assert!(start.elapsed() < Duration::from_secs(5));
        assert!(v.wall_time >= config.timeout);
    }

    // Classifier regression corpus: captured diagnostic shapes must map to
    // the same verdict on every run.
    #[test]
    fn diagnostic_corpus_classifies_stably() {
        let corpus: &[(&str, bool, VerdictKind)] = &[
            ("", true, VerdictKind::Pass),
            ("verification succeeded", true, VerdictKind::Pass),
            (
                "error: post-condition does not hold\n    at m::withdraw line 12",
                false,
                VerdictKind::Counterexample,
            ),
            (
                "error: abort not covered by any `aborts_if` clauses",
                false,
                VerdictKind::Counterexample,
            ),
            (
                "error: unknown function `spec_helper` in this scope",
                false,
                VerdictKind::CompileError,
            ),
            (
                "error: undefined spec function `max_value`",
                false,
                VerdictKind::CompileError,
            ),
            (
                "error: unbound variable `balance_post`",
                false,
                VerdictKind::CompileError,
            ),
            (
                "error: unexpected token `;;`",
                false,
                VerdictKind::CompileError,
            ),
            (
                "error: type mismatch in ensures clause",
                false,
                VerdictKind::CompileError,
            ),
            (
                "error: calling impure function `withdraw` inside a spec",
                false,
                VerdictKind::CompileError,
            ),
            (
                "error: global memory invariant does not hold",
                false,
                VerdictKind::Counterexample,
            ),
            (
                "error: loop invariant does not hold at entry\n    at m::sum line 4",
                false,
                VerdictKind::Counterexample,
            ),
            (
                "error: abort happened here with code 1",
                false,
                VerdictKind::Counterexample,
            ),
            (
                "warning: unused variable\nerror: post-condition does not hold",
                false,
                VerdictKind::Counterexample,
            ),
        ];
        for (text, exit_ok, expected) in corpus {
            let v = classify_output(text, *exit_ok, Duration::ZERO);
            assert_eq!(v.kind, *expected, "misclassified: {text:?}");
        }
    }

    #[test]
    fn counterexample_frames_parse_with_assignments() {
        let text = "error: post-condition does not hold\n\
                    at coin::withdraw line 14\n\
                    \tamount = 50\n\
                    \tbalance = 10\n\
                    at coin::transfer line 7\n\
                    \tfrom = 0x1\n";
        let frames = parse_counterexample(text);
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].function, "coin::withdraw");
        assert_eq!(frames[0].line, 14);
        assert_eq!(
            frames[0].assignments,
            [
                ("amount".to_string(), "50".to_string()),
                ("balance".to_string(), "10".to_string())
            ]
        );
        assert_eq!(frames[1].function, "coin::transfer");
    }

    #[test]
    fn guidance_matches_in_rulebook_order() {
        let rules = builtin_guidance_rules();
        let v = ce(&[
            "error: abort not covered by any `aborts_if` clauses",
            "error: undefined function `spec_max`",
        ]);
        let advice = match_guidance(&v, &rules);
        assert_eq!(advice.len(), 2);
        // Rulebook order: undefined-function before aborts-uncovered.
        assert!(advice[0].contains("undefined functions"));
        assert!(advice[1].contains("aborts_if"));
    }

    #[test]
    fn guidance_unmatched_is_empty() {
        let rules = builtin_guidance_rules();
        let v = ce(&["error: something nobody has seen before"]);
        assert!(match_guidance(&v, &rules).is_empty());
    }

    #[test]
    fn attribution_routes_by_diagnostic() {
        let v = ce(&["error: post-condition does not hold"]);
        let classes = attribute_failure(&v, false, ALL);
        assert_eq!(classes.into_iter().collect::<Vec<_>>(), [ClauseClass::Ensures]);

        let classes = attribute_failure(&v, true, ALL);
        assert!(classes.contains(&ClauseClass::LoopInvariant));
        assert!(classes.contains(&ClauseClass::Ensures));

        let v = ce(&["error: abort not covered by any `aborts_if` clauses"]);
        let classes = attribute_failure(&v, false, ALL);
        assert_eq!(
            classes.into_iter().collect::<Vec<_>>(),
            [ClauseClass::AbortsIf]
        );
    }

    #[test]
    fn unattributable_failure_goes_to_all_active() {
        let v = ce(&["error: mysterious solver hiccup"]);
        let active = [ClauseClass::AbortsIf, ClauseClass::Ensures];
        let classes = attribute_failure(&v, false, &active);
        assert_eq!(classes.len(), 2);
    }

    #[test]
    fn attribution_respects_active_set() {
        let v = ce(&["error: post-condition does not hold"]);
        // Ensures not active (hypothetically) → fallback to active set.
        let active = [ClauseClass::AbortsIf];
        let classes = attribute_failure(&v, false, &active);
        assert_eq!(
            classes.into_iter().collect::<Vec<_>>(),
            [ClauseClass::AbortsIf]
        );
    }
}
