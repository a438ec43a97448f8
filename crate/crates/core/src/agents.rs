//! Clause-generation agents: one specialized prompt per clause class, output
//! parsing into structured snippets, a post-processing sanitizer for common
//! model slip-ups, plus the error summarizer and abstract-spec fallback.

use crate::deps::GenerationContext;
use crate::frontend::ast::*;
use crate::frontend::{parse_function_snippet, parse_spec_snippet, pretty_print_spec_block};
use crate::llm::{BackendError, ChatBackend, ChatRequest};
use crate::prover::{verify, ProverConfig, VerdictKind};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Ordering is the canonical agent dispatch order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClauseClass {
    AbortsIf,
    Modifies,
    Ensures,
    LoopInvariant,
}

impl ClauseClass {
    pub const ALL: [ClauseClass; 4] = [
        ClauseClass::AbortsIf,
        ClauseClass::Modifies,
        ClauseClass::Ensures,
        ClauseClass::LoopInvariant,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            ClauseClass::AbortsIf => "aborts_if",
            ClauseClass::Modifies => "modifies",
            ClauseClass::Ensures => "ensures",
            ClauseClass::LoopInvariant => "loop_invariant",
        }
    }

    /// System prompt asset for this class.
    pub fn system_prompt(&self) -> &'static str {
        match self {
            ClauseClass::AbortsIf => include_str!("../prompts/aborts_if.txt"),
            ClauseClass::Modifies => include_str!("../prompts/modifies.txt"),
            ClauseClass::Ensures => include_str!("../prompts/ensures.txt"),
            ClauseClass::LoopInvariant => include_str!("../prompts/loop_invariant.txt"),
        }
    }

    /// Whether this agent runs at all for the given context.
    pub fn is_active(&self, ctx: &GenerationContext) -> bool {
        match self {
            ClauseClass::Modifies => ctx.metadata.has_global_mut,
            ClauseClass::LoopInvariant => ctx.metadata.has_loops,
            _ => true,
        }
    }
}

impl fmt::Display for ClauseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub const SUMMARIZER_PROMPT: &str = include_str!("../prompts/summarizer.txt");
pub const ABSTRACT_PROMPT: &str = include_str!("../prompts/abstract.txt");
pub const ENSEMBLER_PROMPT: &str = include_str!("../prompts/ensembler.txt");

#[derive(Debug, Clone)]
pub struct ClauseSnippet {
    pub class: ClauseClass,
    pub bindings: Vec<Binding>,
    pub clauses: Vec<Clause>,
    /// Loop-invariant agent only: the target function with invariants
    /// embedded in its loop bodies.
    pub annotated_function: Option<FunctionDef>,
    /// Modifies agent only: extra clauses destined for callee spec blocks.
    pub callee_snippets: BTreeMap<String, Vec<Clause>>,
    pub raw_model_text: String,
    /// Per-clause parse rejections, for the transcript.
    pub parse_notes: Vec<String>,
}

impl ClauseSnippet {
    pub fn empty(class: ClauseClass) -> Self {
        ClauseSnippet {
            class,
            bindings: Vec::new(),
            clauses: Vec::new(),
            annotated_function: None,
            callee_snippets: BTreeMap::new(),
            raw_model_text: String::new(),
            parse_notes: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
            && self.clauses.is_empty()
            && self.annotated_function.is_none()
            && self.callee_snippets.is_empty()
    }
}

/// Everything an agent call carries besides the context: the composed user
/// header, refinement guidance (round ≥ 2 only), and the previous round's
/// snippet for the model to revise.
#[derive(Debug, Clone, Default)]
pub struct PromptBundle {
    pub user_header: String,
    pub guidance: Vec<String>,
    pub prior_snippet: Option<String>,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("model returned no parseable clause for {0}")]
    EmptyOutput(ClauseClass),
    #[error("loop-invariant agent dispatched on a loop-free context")]
    NoLoops,
}

/// Compose the full user prompt: header, target, dependencies, prior
/// snippet, guidance.
pub fn build_user_prompt(class: ClauseClass, ctx: &GenerationContext, bundle: &PromptBundle) -> String {
    let mut out = String::new();
    out.push_str(&bundle.user_header);
    if !bundle.user_header.ends_with('\n') && !bundle.user_header.is_empty() {
        out.push('\n');
    }
    out.push_str(&format!(
        "class: {class}\nmode: {}\ntarget: {}\n\n",
        ctx.mode, ctx.target
    ));
    out.push_str("Target function:\n```move\n");
    out.push_str(&ctx.target_source);
    out.push_str("\n```\n");
    if !ctx.dependency_sources.is_empty() {
        out.push_str("\nDependencies:\n```move\n");
        for d in &ctx.dependency_sources {
            out.push_str(d);
            out.push_str("\n\n");
        }
        out.push_str("```\n");
    }
    if let Some(prior) = &bundle.prior_snippet {
        out.push_str("\nYour previous attempt:\n```\n");
        out.push_str(prior);
        out.push_str("\n```\n");
    }
    if !bundle.guidance.is_empty() {
        out.push_str("\nGuidance from the verifier:\n");
        for g in &bundle.guidance {
            out.push_str(&format!("- {g}\n"));
        }
    }
    out
}

/// Extract the first fenced code block; chatty text outside fences is
/// ignored. A response with no fence is treated as all-payload.
pub fn extract_fenced(text: &str) -> String {
    let mut in_fence = false;
    let mut out = String::new();
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            if in_fence {
                return out;
            }
            in_fence = true;
            continue;
        }
        if in_fence {
            out.push_str(line);
            out.push('\n');
        }
    }
    if out.is_empty() {
        text.to_string()
    } else {
        out
    }
}

/// Normalize one model-emitted clause line: strip stray backticks, collapse
/// internal whitespace, and make sure the line ends with exactly one
/// semicolon.
pub fn sanitize_line(line: &str) -> String {
    let mut s: String = line.replace('`', "");
    s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    while s.ends_with(';') {
        s.pop();
    }
    s = s.trim_end().to_string();
    if s.is_empty() {
        return s;
    }
    s.push(';');
    s
}

const CLAUSE_STARTERS: [&str; 6] = ["let ", "requires ", "modifies ", "aborts_if ", "ensures ", "fun "];

fn looks_like_clause(line: &str) -> bool {
    CLAUSE_STARTERS.iter().any(|s| line.starts_with(s))
}

/// Parse sanitized fenced output into bindings/clauses/helpers, dropping
/// unparseable lines with a note each. `for <path>:` headers (modifies
/// agent) switch subsequent clauses into a callee bucket.
fn parse_clause_lines(
    class: ClauseClass,
    payload: &str,
    snippet: &mut ClauseSnippet,
) {
    let mut bucket: Option<String> = None;
    for raw in payload.lines() {
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with("//") {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("for ") {
            if let Some(path) = rest.trim().strip_suffix(':') {
                bucket = Some(path.trim().to_string());
                continue;
            }
        }
        let line = sanitize_line(trimmed);
        if line.is_empty() {
            continue;
        }
        if !looks_like_clause(&line) {
            snippet
                .parse_notes
                .push(format!("dropped non-clause line: {line}"));
            continue;
        }
        if line.contains(" if ") || line.contains("if (") {
            snippet
                .parse_notes
                .push(format!("branch form disallowed; use ==> : {line}"));
            continue;
        }
        match parse_spec_snippet(&line) {
            Ok((bindings, clauses, helpers)) => {
                if class == ClauseClass::Modifies
                    && clauses.iter().any(|c| c.kind != ClauseKind::Modifies)
                {
                    snippet
                        .parse_notes
                        .push(format!("non-modifies clause from modifies agent: {line}"));
                    continue;
                }
                match &bucket {
                    Some(path) if !clauses.is_empty() => {
                        snippet
                            .callee_snippets
                            .entry(path.clone())
                            .or_default()
                            .extend(clauses);
                    }
                    _ => {
                        snippet.bindings.extend(bindings);
                        snippet.clauses.extend(clauses);
                    }
                }
                // Helper funs always belong to the target block.
                let _ = helpers;
            }
            Err(e) => snippet.parse_notes.push(format!("unparseable: {line} ({e})")),
        }
    }
}

/// Run one ClauseGen agent: compose the prompt, call the backend, parse and
/// sanitize the answer.
pub fn gen_clauses(
    class: ClauseClass,
    ctx: &GenerationContext,
    bundle: &PromptBundle,
    llm: &dyn ChatBackend,
    model: &str,
) -> Result<ClauseSnippet, AgentError> {
    if class == ClauseClass::LoopInvariant && !ctx.metadata.has_loops {
        return Err(AgentError::NoLoops);
    }
    if class == ClauseClass::Modifies && !ctx.metadata.has_global_mut {
        return Err(AgentError::EmptyOutput(class));
    }

    let request = ChatRequest::new(
        model,
        class.system_prompt(),
        build_user_prompt(class, ctx, bundle),
    );
    let raw = llm.complete(&request)?;
    let payload = extract_fenced(&raw);

    let mut snippet = ClauseSnippet::empty(class);
    snippet.raw_model_text = raw;

    if class == ClauseClass::LoopInvariant {
        match parse_function_snippet(&payload) {
            Ok(f) => {
                if f.has_loops() {
                    snippet.annotated_function = Some(f);
                } else {
                    snippet
                        .parse_notes
                        .push("annotated function lost its loop".into());
                }
            }
            Err(e) => snippet.parse_notes.push(format!("unparseable function: {e}")),
        }
    } else {
        parse_clause_lines(class, &payload, &mut snippet);
    }

    if snippet.is_empty() {
        return Err(AgentError::EmptyOutput(class));
    }
    Ok(snippet)
}

/// Try the strongest abort predicate first: verify the target under
/// `aborts_if false;`. On Pass, abort generation can be skipped entirely.
/// Prover trouble (including timeout) fails open to normal generation.
pub fn precheck_aborts_false(
    module: &SourceModule,
    target_fn: &str,
    prover: &ProverConfig,
) -> Option<ClauseSnippet> {
    let mut with_spec = module.clone();
    with_spec.spec_blocks.retain(|b| b.target_fn != target_fn);
    let mut block = SpecBlock::empty(target_fn);
    let (bindings, clauses, _) = parse_spec_snippet("aborts_if false;").expect("literal parses");
    block.bindings = bindings;
    block.clauses = clauses.clone();
    with_spec.spec_blocks.push(block);

    let source = crate::frontend::pretty_print(&with_spec);
    match verify(&source, prover) {
        Ok(v) if v.kind == VerdictKind::Pass => {
            let mut snippet = ClauseSnippet::empty(ClauseClass::AbortsIf);
            snippet.clauses = clauses;
            snippet.raw_model_text = "<precheck: aborts_if false verified>".into();
            Some(snippet)
        }
        _ => None,
    }
}

/// Summarize a failed verdict into guidance. Backend trouble degrades to the
/// raw diagnostic, truncated.
pub fn summarize_error(
    verdict: &crate::prover::ProverVerdict,
    llm: &dyn ChatBackend,
    model: &str,
) -> String {
    let raw = if verdict.diagnostics.is_empty() {
        verdict.raw_output.clone()
    } else {
        verdict.diagnostics.join("\n")
    };
    let request = ChatRequest::new(
        model,
        SUMMARIZER_PROMPT,
        format!("Prover diagnostics:\n```\n{raw}\n```\n"),
    );
    match llm.complete(&request) {
        Ok(text) => {
            let text = text.trim();
            let mut bounded: String = text.chars().take(900).collect();
            if bounded.len() < text.len() {
                bounded.push_str("...");
            }
            bounded
        }
        Err(e) => {
            log::warn!("summarizer backend failed ({e}); passing raw diagnostic through");
            raw.chars().take(900).collect()
        }
    }
}

/// Last-resort proof template when every round failed: abstract clauses over
/// uninterpreted helpers. A backend failure still yields a minimal placeholder
/// so the pipeline never ends empty-handed.
pub fn gen_abstract_spec(
    ctx: &GenerationContext,
    llm: &dyn ChatBackend,
    model: &str,
) -> SpecBlock {
    let request = ChatRequest::new(
        model,
        ABSTRACT_PROMPT,
        build_user_prompt(ClauseClass::Ensures, ctx, &PromptBundle {
            user_header: "task: abstract specification\n".into(),
            ..Default::default()
        }),
    );
    let mut block = SpecBlock::empty(&ctx.target.name);
    match llm
        .complete(&request)
        .map(|raw| extract_fenced(&raw))
        .and_then(|payload| {
            parse_spec_snippet(&payload).map_err(|e| BackendError::Transport(e.to_string()))
        }) {
        Ok((bindings, mut clauses, helpers)) => {
            for c in &mut clauses {
                c.abstract_flag = true;
            }
            block.bindings = bindings;
            block.clauses = clauses;
            block.helper_funs = helpers;
        }
        Err(e) => {
            log::warn!("abstract-spec generation failed ({e}); emitting placeholder");
            let (_, mut clauses, _) =
                parse_spec_snippet("aborts_if [abstract] true;").expect("literal parses");
            for c in &mut clauses {
                c.abstract_flag = true;
            }
            block.clauses = clauses;
        }
    }
    block
}

/// Render a snippet back to clause text (what `prior_snippet` carries).
pub fn render_snippet(snippet: &ClauseSnippet) -> String {
    if let Some(f) = &snippet.annotated_function {
        return crate::frontend::pretty_print_function(f);
    }
    let mut block = SpecBlock::empty("snippet");
    block.bindings = snippet.bindings.clone();
    block.clauses = snippet.clauses.clone();
    pretty_print_spec_block(&block)
}
