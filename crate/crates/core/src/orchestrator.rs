//! The per-target generation loop: build V1/V2 contexts, dispatch clause
//! agents, merge, verify, route verifier feedback to the responsible agents,
//! refine against coverage, and fall back to an abstract spec when every
//! round fails. Plus suite-level aggregation across trials and targets.

use crate::agents::{
    gen_abstract_spec, gen_clauses, precheck_aborts_false, render_snippet, summarize_error,
    AgentError, ClauseClass, ClauseSnippet, PromptBundle,
};
use crate::coverage::{feedback_diffs, measure, mutate};
use crate::deps::{
    build_context, select_targets, slice, ContextMode, FunctionPath, GenerationContext, Workspace,
};
use crate::ensemble::{attach, merge};
use crate::frontend::ast::*;
use crate::frontend::pretty_print;
use crate::inline::inline_best_effort;
use crate::llm::ChatBackend;
use crate::prover::{
    attribute_failure, builtin_guidance_rules, match_guidance, verify, ProverConfig, ProverVerdict,
    VerdictKind,
};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub rounds: u32,
    pub trials: u32,
    pub context_modes: Vec<ContextMode>,
    pub prover: ProverConfig,
    pub coverage_enabled: bool,
    pub seed: u64,
    pub model: String,
    /// Mutant budget per coverage pass.
    pub mutants: usize,
    /// When off, exhausted targets end in Fail instead of an abstract spec.
    pub abstract_fallback: bool,
}

impl RunConfig {
    pub fn new(prover: ProverConfig) -> Self {
        RunConfig {
            rounds: 5,
            trials: 3,
            context_modes: vec![ContextMode::Inlined, ContextMode::Listed],
            prover,
            coverage_enabled: false,
            seed: 0,
            model: "default-model".into(),
            mutants: 8,
            abstract_fallback: true,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Success {
        round: u32,
        mode: ContextMode,
        spec: SpecBlock,
        /// Loop targets: the function with invariants installed.
        annotated: Option<FunctionDef>,
    },
    Abstract {
        spec: SpecBlock,
    },
    Fail,
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Success { .. } => "success",
            Outcome::Abstract { .. } => "abstract",
            Outcome::Fail => "fail",
        }
    }
}

/// One transcript entry. The orchestrator is the only writer.
#[derive(Debug, Clone)]
pub enum Event {
    Precheck {
        trial: u32,
        aborts_skippable: bool,
    },
    AgentCall {
        trial: u32,
        round: u32,
        mode: ContextMode,
        class: ClauseClass,
        ok: bool,
        note: String,
    },
    Verification {
        trial: u32,
        round: u32,
        mode: ContextMode,
        verdict: VerdictKind,
    },
    Guidance {
        trial: u32,
        round: u32,
        classes: Vec<ClauseClass>,
        summary: String,
    },
    CoverageFeedback {
        trial: u32,
        round: u32,
        total: usize,
        covered: usize,
        uncovered: usize,
    },
    AbstractFallback {
        trial: u32,
    },
    Note {
        trial: u32,
        text: String,
    },
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Precheck {
                trial,
                aborts_skippable,
            } => write!(f, "[t{trial}] precheck aborts_if false: skippable={aborts_skippable}"),
            Event::AgentCall {
                trial,
                round,
                mode,
                class,
                ok,
                note,
            } => write!(f, "[t{trial} r{round} {mode}] agent {class}: ok={ok} {note}"),
            Event::Verification {
                trial,
                round,
                mode,
                verdict,
            } => write!(f, "[t{trial} r{round} {mode}] verdict: {verdict}"),
            Event::Guidance {
                trial,
                round,
                classes,
                summary,
            } => {
                let names: Vec<&str> = classes.iter().map(|c| c.tag()).collect();
                write!(f, "[t{trial} r{round}] guidance -> {}: {summary}", names.join(","))
            }
            Event::CoverageFeedback {
                trial,
                round,
                total,
                covered,
                uncovered,
            } => write!(
                f,
                "[t{trial} r{round}] coverage: {covered}/{total} covered, {uncovered} uncovered"
            ),
            Event::AbstractFallback { trial } => write!(f, "[t{trial}] abstract fallback"),
            Event::Note { trial, text } => write!(f, "[t{trial}] {text}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: u32,
    pub outcome: Outcome,
    pub transcript: Vec<Event>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub target: FunctionPath,
    pub outcome: Outcome,
    pub trials: Vec<TrialRecord>,
    /// Clause counts of the final spec, by class.
    pub clause_counts: BTreeMap<ClauseClass, usize>,
}

impl RunRecord {
    pub fn transcript_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            for e in &t.transcript {
                out.push_str(&format!("{e}\n"));
            }
            out.push_str(&format!("trial {} outcome: {}\n", t.trial, t.outcome.label()));
        }
        out
    }
}

/// Drive the full loop for one target.
pub fn run_target(
    workspace: &Workspace,
    target: &FunctionPath,
    config: &RunConfig,
    llm: &dyn ChatBackend,
) -> RunRecord {
    let mut trials = Vec::new();
    for trial in 1..=config.trials {
        trials.push(run_trial(workspace, target, config, llm, trial));
    }

    // Best of trials: success with the earliest round wins; otherwise the
    // first abstract; otherwise fail.
    let mut best: Option<&TrialRecord> = None;
    for t in &trials {
        best = match (best, &t.outcome) {
            (None, _) => Some(t),
            (Some(b), Outcome::Success { round, .. }) => match &b.outcome {
                Outcome::Success { round: br, .. } if *br <= *round => Some(b),
                _ => Some(t),
            },
            (Some(b), Outcome::Abstract { .. }) => match &b.outcome {
                Outcome::Fail => Some(t),
                _ => Some(b),
            },
            (Some(b), Outcome::Fail) => Some(b),
        };
    }
    let outcome = best.map(|t| t.outcome.clone()).unwrap_or(Outcome::Fail);
    let clause_counts = count_clauses(&outcome);
    RunRecord {
        target: target.clone(),
        outcome,
        trials,
        clause_counts,
    }
}

fn count_clauses(outcome: &Outcome) -> BTreeMap<ClauseClass, usize> {
    let mut counts = BTreeMap::new();
    let (spec, annotated) = match outcome {
        Outcome::Success {
            spec, annotated, ..
        } => (Some(spec), annotated.as_ref()),
        Outcome::Abstract { spec } => (Some(spec), None),
        Outcome::Fail => (None, None),
    };
    if let Some(spec) = spec {
        for c in &spec.clauses {
            let class = match c.kind {
                ClauseKind::AbortsIf => ClauseClass::AbortsIf,
                ClauseKind::Modifies => ClauseClass::Modifies,
                ClauseKind::Ensures | ClauseKind::Requires => ClauseClass::Ensures,
            };
            *counts.entry(class).or_insert(0) += 1;
        }
    }
    if let Some(f) = annotated {
        let mut invs = 0;
        if let Some(body) = &f.body {
            body.walk_stmts(&mut |s| {
                if let StmtKind::While { invariants, .. } = &s.kind {
                    invs += invariants.len();
                }
            });
        }
        if invs > 0 {
            counts.insert(ClauseClass::LoopInvariant, invs);
        }
    }
    counts
}

fn run_trial(
    workspace: &Workspace,
    target: &FunctionPath,
    config: &RunConfig,
    llm: &dyn ChatBackend,
    trial: u32,
) -> TrialRecord {
    let mut transcript = Vec::new();
    let module = workspace
        .module(&target.module)
        .expect("target pre-validated");

    let closure = match slice(workspace, target) {
        Ok(c) => c,
        Err(e) => {
            transcript.push(Event::Note {
                trial,
                text: format!("slice failed: {e}"),
            });
            return TrialRecord {
                trial,
                outcome: Outcome::Fail,
                transcript,
            };
        }
    };
    let inline_report = inline_best_effort(workspace, &closure);
    let contexts: Vec<GenerationContext> = config
        .context_modes
        .iter()
        .map(|mode| match mode {
            ContextMode::Inlined => {
                build_context(workspace, &closure, ContextMode::Inlined, Some(&inline_report.result))
            }
            ContextMode::Listed => build_context(workspace, &closure, ContextMode::Listed, None),
        })
        .collect();

    // Strongest-abort precheck: on Pass the AbortsIf agent is never launched.
    let precheck = precheck_aborts_false(module, &target.name, &config.prover);
    transcript.push(Event::Precheck {
        trial,
        aborts_skippable: precheck.is_some(),
    });

    // Guidance per class, replaced (not accumulated) on each failure.
    let mut guidance: BTreeMap<ClauseClass, Vec<String>> = BTreeMap::new();
    // Last snippet per (mode, class), offered back to the model as its
    // previous attempt.
    let mut prior: BTreeMap<(ContextMode, ClauseClass), String> = BTreeMap::new();

    let mut first_pass: Option<(u32, ContextMode)> = None;
    let mut best_spec: Option<(SpecBlock, Option<FunctionDef>, ContextMode)> = None;

    for round in 1..=config.rounds {
        // Dispatch both context branches; collect verdicts.
        let mut passes: Vec<(ContextMode, SpecBlock, Option<FunctionDef>)> = Vec::new();
        let mut failures: Vec<(ContextMode, ProverVerdict, bool, Vec<ClauseClass>)> = Vec::new();

        for ctx in &contexts {
            let mut snippets: Vec<ClauseSnippet> = Vec::new();
            let mut annotated: Option<FunctionDef> = None;
            let mut active: Vec<ClauseClass> = Vec::new();

            for class in ClauseClass::ALL {
                if !class.is_active(ctx) {
                    continue;
                }
                if class == ClauseClass::AbortsIf {
                    if let Some(snippet) = &precheck {
                        snippets.push(snippet.clone());
                        active.push(class);
                        continue;
                    }
                }
                active.push(class);
                let bundle = PromptBundle {
                    user_header: format!("task: clause generation\ntrial: {trial}\nround: {round}\n"),
                    guidance: guidance.get(&class).cloned().unwrap_or_default(),
                    prior_snippet: prior.get(&(ctx.mode, class)).cloned(),
                };
                match gen_clauses(class, ctx, &bundle, llm, &config.model) {
                    Ok(snippet) => {
                        prior.insert((ctx.mode, class), render_snippet(&snippet));
                        if let Some(f) = &snippet.annotated_function {
                            annotated = Some(f.clone());
                        }
                        transcript.push(Event::AgentCall {
                            trial,
                            round,
                            mode: ctx.mode,
                            class,
                            ok: true,
                            note: format!(
                                "{} clause(s), {} binding(s)",
                                snippet.clauses.len(),
                                snippet.bindings.len()
                            ),
                        });
                        snippets.push(snippet);
                    }
                    // One agent failing must not sink the others' clauses.
                    Err(e @ (AgentError::Backend(_) | AgentError::EmptyOutput(_) | AgentError::NoLoops)) => {
                        transcript.push(Event::AgentCall {
                            trial,
                            round,
                            mode: ctx.mode,
                            class,
                            ok: false,
                            note: e.to_string(),
                        });
                    }
                }
            }

            let block = match merge(&target.name, &snippets) {
                Ok(b) => b,
                Err(e) => {
                    transcript.push(Event::Note {
                        trial,
                        text: format!("merge failed on {}: {e}", ctx.mode),
                    });
                    continue;
                }
            };
            let mut specced = match attach(module, block.clone(), annotated.as_ref()) {
                Ok(m) => m,
                Err(e) => {
                    transcript.push(Event::Note {
                        trial,
                        text: format!("attach failed on {}: {e}", ctx.mode),
                    });
                    continue;
                }
            };
            // Modifies agents may emit clauses for callees missing their own.
            for snippet in &snippets {
                for (path, clauses) in &snippet.callee_snippets {
                    let fn_name = path.rsplit("::").next().unwrap_or(path);
                    if specced.function(fn_name).is_some() && specced.spec_for(fn_name).is_none() {
                        let mut callee_block = SpecBlock::empty(fn_name);
                        callee_block.clauses = clauses.clone();
                        if let Ok(m) = attach(&specced, callee_block, None) {
                            specced = m;
                        }
                    }
                }
            }

            let verdict = match verify(&pretty_print(&specced), &config.prover) {
                Ok(v) => v,
                Err(e) => {
                    transcript.push(Event::Note {
                        trial,
                        text: format!("prover unavailable: {e}"),
                    });
                    continue;
                }
            };
            transcript.push(Event::Verification {
                trial,
                round,
                mode: ctx.mode,
                verdict: verdict.kind,
            });
            if verdict.kind == VerdictKind::Pass {
                passes.push((ctx.mode, block, annotated));
            } else {
                failures.push((ctx.mode, verdict, ctx.metadata.has_loops, active));
            }
        }

        if !passes.is_empty() {
            // First verifying branch wins; tie broken toward V2 (Listed).
            passes.sort_by_key(|(mode, _, _)| match mode {
                ContextMode::Listed => 0,
                ContextMode::Inlined => 1,
            });
            let (mode, block, annotated) = passes.into_iter().next().unwrap();
            if first_pass.is_none() {
                first_pass = Some((round, mode));
            }
            best_spec = Some((block.clone(), annotated, mode));

            if !config.coverage_enabled {
                break;
            }
            // Coverage-driven refinement against the same round budget.
            let f = module.function(&target.name).unwrap();
            let coverage = mutate(workspace, &target.module, f, config.seed, config.mutants)
                .and_then(|mutants| {
                    measure(workspace, &target.module, &target.name, &block, mutants, &config.prover)
                });
            match coverage {
                Ok(report) => {
                    transcript.push(Event::CoverageFeedback {
                        trial,
                        round,
                        total: report.total,
                        covered: report.covered,
                        uncovered: report.uncovered.len(),
                    });
                    if report.uncovered.is_empty() || round == config.rounds {
                        break;
                    }
                    let diffs = feedback_diffs(&report);
                    guidance.insert(
                        ClauseClass::Ensures,
                        vec![format!(
                            "The current ensures clauses verify but do not constrain these deleted behaviors; strengthen them:\n{diffs}"
                        )],
                    );
                }
                Err(e) => {
                    transcript.push(Event::Note {
                        trial,
                        text: format!("coverage unavailable: {e}"),
                    });
                    break;
                }
            }
        } else if let Some((mode, verdict, has_loops, active)) = pick_failure(failures) {
            let summary = summarize_error(&verdict, llm, &config.model);
            let mut advice = match_guidance(&verdict, &builtin_guidance_rules());
            advice.push(summary.clone());
            let classes: Vec<ClauseClass> = attribute_failure(&verdict, has_loops, &active)
                .into_iter()
                .collect();
            // Replace (latest verdict only), and only for responsible classes.
            guidance.clear();
            for class in &classes {
                guidance.insert(*class, advice.clone());
            }
            transcript.push(Event::Guidance {
                trial,
                round,
                classes,
                summary: format!("[{mode}] {summary}"),
            });
        }
    }

    let outcome = match (first_pass, best_spec) {
        (Some((round, _)), Some((spec, annotated, mode))) => Outcome::Success {
            round,
            mode,
            spec,
            annotated,
        },
        _ => {
            if config.abstract_fallback {
                transcript.push(Event::AbstractFallback { trial });
                // Abstract generation works off the listed context when
                // available, else the first context.
                let ctx = contexts
                    .iter()
                    .find(|c| c.mode == ContextMode::Listed)
                    .or_else(|| contexts.first());
                match ctx {
                    Some(ctx) => Outcome::Abstract {
                        spec: gen_abstract_spec(ctx, llm, &config.model),
                    },
                    None => Outcome::Fail,
                }
            } else {
                Outcome::Fail
            }
        }
    };
    TrialRecord {
        trial,
        outcome,
        transcript,
    }
}

/// Prefer reporting the V2 branch's failure when both failed.
fn pick_failure(
    mut failures: Vec<(ContextMode, ProverVerdict, bool, Vec<ClauseClass>)>,
) -> Option<(ContextMode, ProverVerdict, bool, Vec<ClauseClass>)> {
    failures.sort_by_key(|(mode, _, _, _)| match mode {
        ContextMode::Listed => 0,
        ContextMode::Inlined => 1,
    });
    failures.into_iter().next()
}

#[derive(Debug)]
pub struct SuiteSummary {
    pub records: Vec<RunRecord>,
    pub success: usize,
    pub abstracted: usize,
    pub failed: usize,
    /// Successful targets by earliest round.
    pub round_histogram: BTreeMap<u32, usize>,
    pub clause_counts: BTreeMap<ClauseClass, usize>,
}

impl SuiteSummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("target\toutcome\tround\tmode\n");
        for r in &self.records {
            match &r.outcome {
                Outcome::Success { round, mode, .. } => {
                    out.push_str(&format!("{}\tsuccess\t{round}\t{mode}\n", r.target));
                }
                Outcome::Abstract { .. } => out.push_str(&format!("{}\tabstract\t-\t-\n", r.target)),
                Outcome::Fail => out.push_str(&format!("{}\tfail\t-\t-\n", r.target)),
            }
        }
        out.push_str(&format!(
            "totals: success={} abstract={} fail={}\n",
            self.success, self.abstracted, self.failed
        ));
        if !self.round_histogram.is_empty() {
            let hist: Vec<String> = self
                .round_histogram
                .iter()
                .map(|(r, n)| format!("r{r}:{n}"))
                .collect();
            out.push_str(&format!("success rounds: {}\n", hist.join(" ")));
        }
        if !self.clause_counts.is_empty() {
            let counts: Vec<String> = self
                .clause_counts
                .iter()
                .map(|(c, n)| format!("{c}:{n}"))
                .collect();
            out.push_str(&format!("clauses: {}\n", counts.join(" ")));
        }
        out
    }
}

/// Run every eligible target in the workspace.
pub fn run_suite(
    workspace: &Workspace,
    config: &RunConfig,
    llm: &dyn ChatBackend,
) -> SuiteSummary {
    let mut records = Vec::new();
    for target in select_targets(workspace) {
        records.push(run_target(workspace, &target, config, llm));
    }
    let mut success = 0;
    let mut abstracted = 0;
    let mut failed = 0;
    let mut round_histogram: BTreeMap<u32, usize> = BTreeMap::new();
    let mut clause_counts: BTreeMap<ClauseClass, usize> = BTreeMap::new();
    for r in &records {
        match &r.outcome {
            Outcome::Success { round, .. } => {
                success += 1;
                *round_histogram.entry(*round).or_insert(0) += 1;
            }
            Outcome::Abstract { .. } => abstracted += 1,
            Outcome::Fail => failed += 1,
        }
        for (class, n) in &r.clause_counts {
            *clause_counts.entry(*class).or_insert(0) += n;
        }
    }
    SuiteSummary {
        records,
        success,
        abstracted,
        failed,
        round_histogram,
        clause_counts,
    }
}

/// Final artifact for a target: the module with the winning spec attached,
/// canonically printed.
pub fn render_result(workspace: &Workspace, record: &RunRecord) -> Option<String> {
    let module = workspace.module(&record.target.module)?;
    let (spec, annotated) = match &record.outcome {
        Outcome::Success {
            spec, annotated, ..
        } => (spec.clone(), annotated.clone()),
        Outcome::Abstract { spec } => (spec.clone(), None),
        Outcome::Fail => return None,
    };
    attach(module, spec, annotated.as_ref())
        .ok()
        .map(|m| pretty_print(&m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_source, pretty_print_spec_block};
    use crate::llm::{ScriptRule, ScriptedBackend};
    use crate::prover::parse_mock_rules;

    const COIN: &str = r#"
module 0x1::coin {
    struct Coin has key, store {
        value: u64,
    }

    struct Balance has key {
        coin: Coin,
    }

    fun withdraw(addr: address, amount: u64) acquires Balance {
        let balance_ref = borrow_global_mut<Balance>(addr);
        assert!(balance_ref.coin.value >= amount, 1);
        balance_ref.coin.value = balance_ref.coin.value - amount;
    }
}
"#;

    fn coin_ws() -> Workspace {
        Workspace::new(parse_source(COIN).unwrap())
    }

    fn rule(m: &str, resp: &str, once: bool) -> ScriptRule {
        ScriptRule {
            match_substring: m.into(),
            response: resp.into(),
            once,
        }
    }

    fn v2_only_config(prover: ProverConfig) -> RunConfig {
        let mut c = RunConfig::new(prover);
        c.context_modes = vec![ContextMode::Listed];
        c.trials = 1;
        c
    }

    /// Round 1 compile error (undefined helper), round 2 pass.
    #[test]
    fn repair_loop_succeeds_on_second_round() {
        let ws = coin_ws();
        let prover_rules = parse_mock_rules(concat!(
            "spec_missing_helper\tcompile_error\terror: undefined function `spec_missing_helper`\n",
            "aborts_if false\tcounterexample\terror: abort not covered by any `aborts_if` clauses\n",
        ))
        .unwrap();
        let backend = ScriptedBackend::new(vec![
            // aborts agent: stable across rounds.
            rule("class: aborts_if", "```\naborts_if global<Balance>(addr).coin.value < amount;\n```", false),
            rule("class: modifies", "```\nmodifies global<Balance>(addr);\n```", false),
            // ensures agent: bad round 1, fixed round 2.
            rule("round: 1\nclass: ensures", "```\nensures spec_missing_helper(addr);\n```", false),
            rule("class: ensures", "```\nensures global<Balance>(addr).coin.value == old(global<Balance>(addr).coin.value) - amount;\n```", false),
            // summarizer
            rule("Prover diagnostics", "The spec calls spec_missing_helper which is undefined; avoid undefined functions.", false),
        ]);
        // Prompt headers put trial/round before class, so round-specific rules
        // must match on the joint substring.
        let config = v2_only_config(ProverConfig::mock(prover_rules));
        let record = run_target(&ws, &FunctionPath::new("coin", "withdraw"), &config, &backend);
        match &record.outcome {
            Outcome::Success { round, .. } => assert_eq!(*round, 2),
            other => panic!("expected success, got {} \n{}", other.label(), record.transcript_text()),
        }
        let text = record.transcript_text();
        assert!(text.contains("undefined"));
        assert!(text.contains("verdict: compile-error"));
        assert!(text.contains("verdict: pass"));
    }

    #[test]
    fn all_rounds_failing_ends_abstract() {
        let ws = coin_ws();
        let prover_rules = parse_mock_rules(
            "ensures\tcounterexample\terror: post-condition does not hold\n\
             aborts_if false\tcounterexample\terror: abort not covered\n",
        )
        .unwrap();
        let backend = ScriptedBackend::new(vec![
            rule("task: abstract specification", "```\nensures [abstract] spec_after(addr) == spec_value(addr, amount);\nfun spec_after(addr: address): u64;\nfun spec_value(addr: address, amount: u64): u64;\n```", false),
            rule("class: aborts_if", "```\naborts_if amount == 0;\n```", false),
            rule("class: modifies", "```\nmodifies global<Balance>(addr);\n```", false),
            rule("class: ensures", "```\nensures global<Balance>(addr).coin.value == 0;\n```", false),
            rule("Prover diagnostics", "The postcondition is wrong.", false),
        ]);
        let config = v2_only_config(ProverConfig::mock(prover_rules));
        let record = run_target(&ws, &FunctionPath::new("coin", "withdraw"), &config, &backend);
        match &record.outcome {
            Outcome::Abstract { spec } => {
                assert!(spec.clauses.iter().all(|c| c.abstract_flag));
                assert_eq!(spec.helper_funs.len(), 2);
            }
            other => panic!("expected abstract, got {}", other.label()),
        }
        // Round bound respected: exactly `rounds` verification events.
        let verifications = record.trials[0]
            .transcript
            .iter()
            .filter(|e| matches!(e, Event::Verification { .. }))
            .count();
        assert_eq!(verifications, config.rounds as usize);
    }

    #[test]
    fn precheck_pass_skips_aborts_agent() {
        let src = "module 0x1::pure {\n    fun double(x: u64): u64 {\n        x + x\n    }\n}\n";
        let ws = Workspace::new(parse_source(src).unwrap());
        // Everything verifies.
        let backend = ScriptedBackend::new(vec![
            rule("class: ensures", "```\nensures result == x + x;\n```", false),
        ]);
        let config = v2_only_config(ProverConfig::mock(Vec::new()));
        let record = run_target(&ws, &FunctionPath::new("pure", "double"), &config, &backend);
        assert!(record.outcome.is_success());
        // No aborts_if agent call in the transcript; precheck did the work.
        let text = record.transcript_text();
        assert!(text.contains("skippable=true"));
        assert!(!text.contains("agent aborts_if"));
        // The final spec still carries aborts_if false.
        if let Outcome::Success { spec, .. } = &record.outcome {
            assert!(spec
                .clauses
                .iter()
                .any(|c| c.kind == ClauseKind::AbortsIf));
        }
    }

    #[test]
    fn feedback_routes_to_ensures_only() {
        let ws = coin_ws();
        let prover_rules = parse_mock_rules(concat!(
            "aborts_if false\tcounterexample\terror: abort not covered\n",
            "wrong_value\tcounterexample\terror: post-condition does not hold\n",
        ))
        .unwrap();
        let backend = ScriptedBackend::new(vec![
            rule("class: aborts_if", "```\naborts_if global<Balance>(addr).coin.value < amount;\n```", false),
            rule("class: modifies", "```\nmodifies global<Balance>(addr);\n```", false),
            rule("round: 1\nclass: ensures", "```\nensures global<Balance>(addr).coin.value == wrong_value(addr);\n```", false),
            rule("class: ensures", "```\nensures true;\n```", false),
            rule("Prover diagnostics", "The ensures clause is wrong.", false),
        ]);
        let config = v2_only_config(ProverConfig::mock(prover_rules));
        let record = run_target(&ws, &FunctionPath::new("coin", "withdraw"), &config, &backend);
        assert!(record.outcome.is_success());
        // Round 2 prompts: the ensures call carries guidance, others do not.
        let calls = backend.calls();
        let round2: Vec<_> = calls
            .iter()
            .filter(|c| c.user_prompt().contains("round: 2"))
            .collect();
        assert!(!round2.is_empty());
        for call in round2 {
            let p = call.user_prompt();
            if p.contains("class: ensures") {
                assert!(p.contains("Guidance from the verifier"));
            } else {
                assert!(!p.contains("Guidance from the verifier"), "leaked into: {p}");
            }
        }
    }

    #[test]
    fn v1_only_success_is_attributed_to_inlined_mode() {
        // Prover passes only when the spec'd module has no call statements
        // left (i.e. the inlined context's module). We simulate: the V2
        // branch's ensures mentions a helper the prover rejects; the V1
        // branch gets a pass. Distinguish branches by the mode header the
        // agents echo back.
        let src = r#"
module 0x1::m {
    struct S has key {
        v: u64,
    }

    fun bump(addr: address) acquires S {
        incr(addr);
    }

    fun incr(addr: address) acquires S {
        let s = borrow_global_mut<S>(addr);
        s.v = s.v + 1;
    }
}
"#;
        let ws = Workspace::new(parse_source(src).unwrap());
        let prover_rules = parse_mock_rules(concat!(
            "v2_marker\tcounterexample\terror: post-condition does not hold\n",
            "aborts_if false\tcounterexample\terror: abort not covered\n",
        ))
        .unwrap();
        let backend = ScriptedBackend::new(vec![
            rule("class: aborts_if", "```\naborts_if !exists<S>(addr);\n```", false),
            rule("class: modifies", "```\nmodifies global<S>(addr);\n```", false),
            rule("mode: v2\ntarget: m::bump\n", "```\nensures global<S>(addr).v == v2_marker(addr);\n```", false),
            rule("class: ensures", "```\nensures global<S>(addr).v == old(global<S>(addr).v) + 1;\n```", false),
            rule("Prover diagnostics", "wrong", false),
        ]);
        let mut config = RunConfig::new(ProverConfig::mock(prover_rules));
        config.trials = 1;
        let record = run_target(&ws, &FunctionPath::new("m", "bump"), &config, &backend);
        match &record.outcome {
            Outcome::Success { mode, round, .. } => {
                assert_eq!(*mode, ContextMode::Inlined);
                assert_eq!(*round, 1);
            }
            other => panic!(
                "expected success, got {}\n{}",
                other.label(),
                record.transcript_text()
            ),
        }
    }

    #[test]
    fn best_of_trials_keeps_earliest_round() {
        let ws = coin_ws();
        // Trial 1 fails round 1 then passes round 2; trial 2 passes round 1.
        let prover_rules = parse_mock_rules(concat!(
            "bad_round\tcounterexample\terror: post-condition does not hold\n",
            "aborts_if false\tcounterexample\terror: abort not covered\n",
        ))
        .unwrap();
        let backend = ScriptedBackend::new(vec![
            rule("class: aborts_if", "```\naborts_if global<Balance>(addr).coin.value < amount;\n```", false),
            rule("class: modifies", "```\nmodifies global<Balance>(addr);\n```", false),
            rule("trial: 1\nround: 1\nclass: ensures", "```\nensures global<Balance>(addr).coin.value == bad_round(addr);\n```", false),
            rule("class: ensures", "```\nensures true;\n```", false),
            rule("Prover diagnostics", "wrong ensures", false),
        ]);
        let mut config = v2_only_config(ProverConfig::mock(prover_rules));
        config.trials = 2;
        let record = run_target(&ws, &FunctionPath::new("coin", "withdraw"), &config, &backend);
        match &record.outcome {
            Outcome::Success { round, .. } => assert_eq!(*round, 1),
            other => panic!("expected success, got {}", other.label()),
        }
        assert_eq!(record.trials.len(), 2);
    }

    #[test]
    fn suite_counts_success_abstract_fail() {
        let src = r#"
module 0x1::trio {
    fun ok(x: u64): u64 {
        x
    }

    fun bad(x: u64): u64 {
        x + 1
    }

    fun worse(x: u64): u64 {
        x + 2
    }
}
"#;
        let ws = Workspace::new(parse_source(src).unwrap());
        // `ok` passes; `bad` and `worse` always fail.
        let prover_rules = parse_mock_rules(concat!(
            "spec bad\tcounterexample\terror: post-condition does not hold\n",
            "spec worse\tcounterexample\terror: post-condition does not hold\n",
        ))
        .unwrap();
        let backend = ScriptedBackend::new(vec![
            rule("class: ensures", "```\nensures result >= x;\n```", false),
            rule("Prover diagnostics", "wrong", false),
            // Abstract fallback answers only for `bad`; `worse` gets the
            // placeholder... but placeholder is still Abstract, so force a
            // Fail by disabling fallback and checking counts another way.
            rule("task: abstract specification", "```\nensures [abstract] result == spec_f(x);\nfun spec_f(x: u64): u64;\n```", false),
        ]);
        let mut config = v2_only_config(ProverConfig::mock(prover_rules.clone()));
        config.rounds = 2;
        let summary = run_suite(&ws, &config, &backend);
        assert_eq!(summary.success, 1);
        assert_eq!(summary.abstracted, 2);
        assert_eq!(summary.failed, 0);

        // With the fallback off, exhausted targets count as failures.
        let backend2 = ScriptedBackend::new(vec![
            rule("class: ensures", "```\nensures result >= x;\n```", false),
            rule("Prover diagnostics", "wrong", false),
        ]);
        let mut config2 = v2_only_config(ProverConfig::mock(prover_rules));
        config2.rounds = 2;
        config2.abstract_fallback = false;
        let summary2 = run_suite(&ws, &config2, &backend2);
        assert_eq!(summary2.success, 1);
        assert_eq!(summary2.abstracted, 0);
        assert_eq!(summary2.failed, 2);
        let rendered = summary2.render();
        assert!(rendered.contains("totals: success=1 abstract=0 fail=2"));
    }

    #[test]
    fn coverage_feedback_drives_refinement() {
        let src = r#"
module 0x1::pair {
    struct Pair has key {
        first: u64,
        second: u64,
    }

    fun bump(addr: address) acquires Pair {
        let p = borrow_global_mut<Pair>(addr);
        p.first = p.first + 1;
        p.second = p.second + 2;
    }
}
"#;
        let ws = Workspace::new(parse_source(src).unwrap());
        // Weak spec passes on the full function; deleting the second update
        // is only caught once the spec mentions `.second`.
        let prover_rules = parse_mock_rules(concat!(
            "(?s)p.first = p.first \\+ 1;.*p.second = p.second \\+ 2;\tpass\t\n",
            "(?s)\\.second ==\tcounterexample\terror: post-condition does not hold\n",
        ))
        .unwrap();
        let backend = ScriptedBackend::new(vec![
            rule("class: modifies", "```\nmodifies global<Pair>(addr);\n```", false),
            // Round 1: weak ensures. After coverage feedback (diff text in
            // guidance), emit the strong version.
            rule("strengthen them", "```\nensures global<Pair>(addr).first == old(global<Pair>(addr).first) + 1;\nensures global<Pair>(addr).second == old(global<Pair>(addr).second) + 2;\n```", false),
            rule("class: ensures", "```\nensures global<Pair>(addr).first == old(global<Pair>(addr).first) + 1;\n```", false),
            rule("Prover diagnostics", "wrong", false),
        ]);
        let mut config = v2_only_config(ProverConfig::mock(prover_rules));
        config.coverage_enabled = true;
        config.mutants = 8;
        let record = run_target(&ws, &FunctionPath::new("pair", "bump"), &config, &backend);
        assert!(record.outcome.is_success(), "{}", record.transcript_text());
        if let Outcome::Success { spec, round, .. } = &record.outcome {
            assert_eq!(*round, 1, "first pass round is recorded");
            // The refined spec mentions both fields.
            let printed = pretty_print_spec_block(spec);
            assert!(printed.contains(".second"), "{printed}");
        }
        let text = record.transcript_text();
        assert!(text.contains("coverage:"));
    }

    #[test]
    fn identical_inputs_identical_records() {
        let ws = coin_ws();
        let run = || {
            let backend = ScriptedBackend::new(vec![
                rule("class: aborts_if", "```\naborts_if global<Balance>(addr).coin.value < amount;\n```", false),
                rule("class: modifies", "```\nmodifies global<Balance>(addr);\n```", false),
                rule("class: ensures", "```\nensures true;\n```", false),
            ]);
            let rules = parse_mock_rules("aborts_if false\tcounterexample\terror: abort not covered\n").unwrap();
            let config = v2_only_config(ProverConfig::mock(rules));
            let record = run_target(&ws, &FunctionPath::new("coin", "withdraw"), &config, &backend);
            (record.transcript_text(), format!("{:?}", record.clause_counts))
        };
        assert_eq!(run(), run());
    }
}
