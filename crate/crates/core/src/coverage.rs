//! Mutation-based specification coverage: randomly delete parts of the
//! target's AST, re-verify each mutant against the candidate spec, and
//! report which deletions the spec fails to notice.

use crate::deps::Workspace;
use crate::ensemble::attach;
use crate::frontend::ast::*;
use crate::frontend::check::check_wellformed;
use crate::frontend::{pretty_print, pretty_print_function};
use crate::prover::{verify, ProverConfig, ProverError, VerdictKind};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("function body has no deletable node")]
    NoCandidates,
    #[error("candidate spec does not verify against the unmutated function")]
    PreconditionViolated,
    #[error(transparent)]
    Prover(#[from] ProverError),
}

/// One deletion mutant of the target function.
#[derive(Debug, Clone)]
pub struct Mutant {
    pub id: usize,
    pub deleted_nodes: Vec<NodeId>,
    pub description: String,
    pub function: FunctionDef,
    /// Canonical print of the mutated function.
    pub source: String,
    /// Unified diff vs. the original function.
    pub diff: String,
}

#[derive(Debug)]
pub struct CoverageReport {
    pub total: usize,
    pub covered: usize,
    pub uncovered: Vec<Mutant>,
    /// Timeouts: excluded from the denominator entirely.
    pub excluded: usize,
}

impl CoverageReport {
    pub fn ratio(&self) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(self.covered as f64 / self.total as f64)
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "coverage: {}/{} deletions covered",
            self.covered, self.total
        ));
        if let Some(r) = self.ratio() {
            out.push_str(&format!(" ({:.0}%)", r * 100.0));
        }
        if self.excluded > 0 {
            out.push_str(&format!(", {} timed out (excluded)", self.excluded));
        }
        out.push('\n');
        for m in &self.uncovered {
            out.push_str(&format!("uncovered deletion #{}: {}\n", m.id, m.description));
            out.push_str(&m.diff);
        }
        out
    }
}

/// Deletion candidates: every statement (whole blocks fall out of deleting
/// an `if`/`while` statement) and every assignment right-hand side replaced
/// by a zero literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Candidate {
    DeleteStmt(usize),
    ZeroAssign(usize),
}

fn count_stmts(block: &Block) -> usize {
    let mut n = 0;
    block.walk_stmts(&mut |_| n += 1);
    n
}

fn count_assigns(block: &Block) -> usize {
    let mut n = 0;
    block.walk_stmts(&mut |s| {
        if matches!(s.kind, StmtKind::Assign { .. }) {
            n += 1;
        }
    });
    n
}

/// Remove the statement at flat pre-order index `target`; returns it.
fn delete_nth_stmt(block: &mut Block, counter: &mut usize, target: usize) -> Option<Stmt> {
    let mut idx = 0;
    while idx < block.stmts.len() {
        if *counter == target {
            let removed = block.stmts.remove(idx);
            *counter += 1;
            return Some(removed);
        }
        *counter += 1;
        let stmt = &mut block.stmts[idx];
        let found = match &mut stmt.kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => delete_nth_stmt(then_block, counter, target).or_else(|| {
                else_block
                    .as_mut()
                    .and_then(|e| delete_nth_stmt(e, counter, target))
            }),
            StmtKind::While { body, .. } => delete_nth_stmt(body, counter, target),
            _ => None,
        };
        if found.is_some() {
            return found;
        }
        idx += 1;
    }
    None
}

fn zero_nth_assign(block: &mut Block, counter: &mut usize, target: usize, id: NodeId) -> Option<NodeId> {
    for stmt in &mut block.stmts {
        match &mut stmt.kind {
            StmtKind::Assign { value, .. } => {
                if *counter == target {
                    let old_id = value.id;
                    *value = Expr {
                        id,
                        span: value.span,
                        kind: ExprKind::Literal(Lit::Int(0)),
                    };
                    return Some(old_id);
                }
                *counter += 1;
            }
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                if let Some(n) = zero_nth_assign(then_block, counter, target, id) {
                    return Some(n);
                }
                if let Some(e) = else_block {
                    if let Some(n) = zero_nth_assign(e, counter, target, id) {
                        return Some(n);
                    }
                }
            }
            StmtKind::While { body, .. } => {
                if let Some(n) = zero_nth_assign(body, counter, target, id) {
                    return Some(n);
                }
            }
            _ => {}
        }
    }
    None
}

fn apply(
    f: &FunctionDef,
    candidate: Candidate,
    ids: &mut NodeIdGen,
) -> Option<(FunctionDef, Vec<NodeId>, String)> {
    let mut mutated = f.clone();
    let body = mutated.body.as_mut()?;
    match candidate {
        Candidate::DeleteStmt(n) => {
            let mut counter = 0;
            let removed = delete_nth_stmt(body, &mut counter, n)?;
            let description = format!("deleted statement at line {}", removed.span.line);
            Some((mutated, vec![removed.id], description))
        }
        Candidate::ZeroAssign(n) => {
            let mut counter = 0;
            let old = zero_nth_assign(body, &mut counter, n, ids.fresh())?;
            Some((
                mutated,
                vec![old],
                format!("assignment value replaced by 0 (site {n})"),
            ))
        }
    }
}

/// Whether the mutant keeps the module well-formed (no new diagnostics
/// relative to the original).
fn mutant_is_wellformed(workspace: &Workspace, module_name: &str, original: &FunctionDef, mutated: &FunctionDef) -> bool {
    let Some(module) = workspace.module(module_name) else {
        return false;
    };
    let siblings: Vec<&SourceModule> = workspace
        .modules
        .iter()
        .filter(|m| m.name != module_name)
        .collect();
    let run = |f: &FunctionDef| {
        let mut m = module.clone();
        if let Some(slot) = m.function_mut(&f.name) {
            *slot = f.clone();
        }
        check_wellformed(&m, &siblings).len()
    };
    run(mutated) <= run(original)
}

/// All well-formed deletion mutants, in candidate order. Exposed so tests can
/// pick a specific deletion deterministically.
pub fn all_mutants(
    workspace: &Workspace,
    module_name: &str,
    f: &FunctionDef,
) -> Result<Vec<Mutant>, CoverageError> {
    let Some(body) = &f.body else {
        return Err(CoverageError::NoCandidates);
    };
    let stmts = count_stmts(body);
    let assigns = count_assigns(body);
    if stmts == 0 && assigns == 0 {
        return Err(CoverageError::NoCandidates);
    }
    let mut candidates: Vec<Candidate> = (0..stmts).map(Candidate::DeleteStmt).collect();
    candidates.extend((0..assigns).map(Candidate::ZeroAssign));

    let original_src = pretty_print_function(f);
    let mut ids = NodeIdGen::starting_at(
        workspace
            .modules
            .iter()
            .map(|m| m.next_node_id)
            .max()
            .unwrap_or(0),
    );
    let mut out = Vec::new();
    for candidate in candidates {
        let Some((mutated, deleted_nodes, description)) = apply(f, candidate, &mut ids) else {
            continue;
        };
        let source = pretty_print_function(&mutated);
        if source == original_src {
            continue;
        }
        if !mutant_is_wellformed(workspace, module_name, f, &mutated) {
            continue;
        }
        let id = out.len();
        let diff = similar::TextDiff::from_lines(original_src.as_str(), source.as_str())
            .unified_diff()
            .header("original", &format!("mutant-{id}"))
            .to_string();
        out.push(Mutant {
            id,
            deleted_nodes,
            description,
            function: mutated,
            source,
            diff,
        });
    }
    if out.is_empty() {
        return Err(CoverageError::NoCandidates);
    }
    Ok(out)
}

/// Up to `n` distinct mutants drawn with a seeded generator.
pub fn mutate(
    workspace: &Workspace,
    module_name: &str,
    f: &FunctionDef,
    seed: u64,
    n: usize,
) -> Result<Vec<Mutant>, CoverageError> {
    assert!(n >= 1, "mutant budget must be at least 1");
    let mut all = all_mutants(workspace, module_name, f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all.truncate(n);
    // Re-number so ids are dense and diff headers match.
    for (i, m) in all.iter_mut().enumerate() {
        m.id = i;
        m.diff = similar::TextDiff::from_lines(
            pretty_print_function(f).as_str(),
            m.source.as_str(),
        )
        .unified_diff()
        .header("original", &format!("mutant-{i}"))
        .to_string();
    }
    Ok(all)
}

/// Verify the spec against each mutant. Pass means the deletion went
/// unnoticed (uncovered); a counterexample or compile error means the spec
/// pinned the deleted behavior down (covered); timeouts are excluded.
pub fn measure(
    workspace: &Workspace,
    module_name: &str,
    target_fn: &str,
    spec: &SpecBlock,
    mutants: Vec<Mutant>,
    prover: &ProverConfig,
) -> Result<CoverageReport, CoverageError> {
    let module = workspace
        .module(module_name)
        .ok_or(CoverageError::PreconditionViolated)?;
    let specced = attach(module, spec.clone(), None)
        .map_err(|_| CoverageError::PreconditionViolated)?;
    let baseline = verify(&pretty_print(&specced), prover)?;
    if baseline.kind != VerdictKind::Pass {
        return Err(CoverageError::PreconditionViolated);
    }

    let mut covered = 0;
    let mut excluded = 0;
    let mut uncovered = Vec::new();
    for mutant in mutants {
        let mut m = specced.clone();
        if let Some(slot) = m.function_mut(target_fn) {
            *slot = mutant.function.clone();
        }
        let verdict = verify(&pretty_print(&m), prover)?;
        match verdict.kind {
            VerdictKind::Pass => uncovered.push(mutant),
            VerdictKind::Counterexample | VerdictKind::CompileError => covered += 1,
            VerdictKind::Timeout => {
                log::info!("mutant #{} timed out; excluded from coverage", mutant.id);
                excluded += 1;
            }
        }
    }
    Ok(CoverageReport {
        total: covered + uncovered.len(),
        covered,
        uncovered,
        excluded,
    })
}

/// Concatenated unified diffs of uncovered mutants, in id order — the text
/// injected into the next round's ensures prompt.
pub fn feedback_diffs(report: &CoverageReport) -> String {
    let mut mutants: Vec<&Mutant> = report.uncovered.iter().collect();
    mutants.sort_by_key(|m| m.id);
    mutants
        .iter()
        .map(|m| m.diff.as_str())
        .collect::<Vec<_>>()
        .join("")
}
