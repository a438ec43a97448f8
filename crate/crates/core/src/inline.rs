//! Best-effort monotonic inlining: fold as many callees as possible into a
//! target function's body, keeping each substitution only if the whole module
//! still checks clean, and reverting it otherwise.

use crate::deps::{DependencyClosure, FunctionPath, Workspace};
use crate::frontend::ast::*;
use crate::frontend::check::check_wellformed;
use std::collections::BTreeSet;
use std::fmt;

/// Why a callee was left un-inlined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    /// No call to this function remains in the accumulated body.
    NoCallsite,
    /// Native or bodiless callee.
    NoBody,
    /// Callee uses `return` mid-body; substitution would change control flow.
    EarlyReturn,
    /// A call site sits in expression position we cannot splice into.
    UnsupportedCallsite,
    /// Substitution produced a module that fails the well-formedness check.
    CheckFailed(String),
    /// The target itself (recursion).
    Recursive,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::NoCallsite => write!(f, "no remaining callsite"),
            SkipReason::NoBody => write!(f, "native or bodiless callee"),
            SkipReason::EarlyReturn => write!(f, "callee returns mid-body"),
            SkipReason::UnsupportedCallsite => write!(f, "callsite not in statement position"),
            SkipReason::CheckFailed(code) => write!(f, "well-formedness check failed ({code})"),
            SkipReason::Recursive => write!(f, "recursive call"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InlineReport {
    pub target: FunctionPath,
    /// Callees folded in, in attempt order.
    pub inlined: Vec<FunctionPath>,
    pub skipped: Vec<(FunctionPath, SkipReason)>,
    /// The target with every kept substitution applied.
    pub result: FunctionDef,
}

impl InlineReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "inlining report for {} (transitive callees attempted, nearest first)\n",
            self.target
        ));
        for p in &self.inlined {
            out.push_str(&format!("  inlined {p}\n"));
        }
        for (p, reason) in &self.skipped {
            out.push_str(&format!("  skipped {p}: {reason}\n"));
        }
        out
    }
}

/// Greedily inline the closure's callees into the target, nearest callees
/// first so calls exposed by one substitution can be folded by a later one.
/// Each substitution is kept only if `check_wellformed` stays clean on the
/// modified module; otherwise it is reverted and the callee recorded as
/// skipped. All call sites of one callee are replaced atomically.
pub fn inline_best_effort(workspace: &Workspace, closure: &DependencyClosure) -> InlineReport {
    let target_module = workspace
        .module(&closure.target.module)
        .expect("closure target resolvable");
    let target_def = target_module
        .function(&closure.target.name)
        .expect("closure target resolvable")
        .clone();

    let mut ids = NodeIdGen::starting_at(
        workspace
            .modules
            .iter()
            .map(|m| m.next_node_id)
            .max()
            .unwrap_or(0),
    );
    let mut working = target_def;
    let mut inlined = Vec::new();
    let mut skipped = Vec::new();
    let mut round = 0usize;

    // `closure.callees` is leaves-first; reverse it so direct callees come
    // before the calls their bodies expose.
    for path in closure.callees.iter().rev() {
        round += 1;
        if *path == closure.target {
            skipped.push((path.clone(), SkipReason::Recursive));
            continue;
        }
        let Some(callee) = workspace.function(path) else {
            skipped.push((path.clone(), SkipReason::NoBody));
            continue;
        };
        if callee.body.is_none() || callee.attrs.native {
            skipped.push((path.clone(), SkipReason::NoBody));
            continue;
        }
        if has_early_return(callee.body.as_ref().unwrap()) {
            skipped.push((path.clone(), SkipReason::EarlyReturn));
            continue;
        }

        let mut candidate = working.clone();
        match substitute_all(
            &mut candidate,
            &closure.target.module,
            path,
            callee,
            &mut ids,
            round,
        ) {
            SubstOutcome::NoCallsite => {
                skipped.push((path.clone(), SkipReason::NoCallsite));
            }
            SubstOutcome::Unsupported => {
                skipped.push((path.clone(), SkipReason::UnsupportedCallsite));
            }
            SubstOutcome::Replaced => {
                match recheck(workspace, &closure.target, &working, &candidate) {
                    None => {
                        working = candidate;
                        inlined.push(path.clone());
                    }
                    Some(code) => {
                        skipped.push((path.clone(), SkipReason::CheckFailed(code)));
                    }
                }
            }
        }
    }

    InlineReport {
        target: closure.target.clone(),
        inlined,
        skipped,
        result: working,
    }
}

/// Run the well-formedness check on the target's module with `candidate`
/// swapped in; `None` means the substitution introduced no new diagnostics
/// beyond what the module already reported (a defective sibling must not veto
/// unrelated substitutions).
fn recheck(
    workspace: &Workspace,
    target: &FunctionPath,
    baseline: &FunctionDef,
    candidate: &FunctionDef,
) -> Option<String> {
    let siblings: Vec<&SourceModule> = workspace
        .modules
        .iter()
        .filter(|m| m.name != target.module)
        .collect();
    let count = |f: &FunctionDef| {
        let mut module = workspace.module(&target.module).unwrap().clone();
        *module.function_mut(&target.name).unwrap() = f.clone();
        check_wellformed(&module, &siblings)
    };
    let before = count(baseline);
    let after = count(candidate);
    if after.len() > before.len() {
        after.last().map(|d| format!("{:?}", d.code))
    } else {
        None
    }
}

enum SubstOutcome {
    NoCallsite,
    Unsupported,
    Replaced,
}

/// Replace every call to `path` in the caller's body with the callee's body.
/// Supported call sites are statement-level: `f(..);` and `let x = f(..);`.
/// A call anywhere else makes the whole attempt unsupported.
fn substitute_all(
    caller: &mut FunctionDef,
    caller_module: &str,
    path: &FunctionPath,
    callee: &FunctionDef,
    ids: &mut NodeIdGen,
    round: usize,
) -> SubstOutcome {
    let matches = |module: &Option<String>, name: &str| -> bool {
        name == path.name && module.as_deref().unwrap_or(caller_module) == path.module
    };

    let Some(body) = &caller.body else {
        return SubstOutcome::NoCallsite;
    };

    // Count total call sites vs. statement-position call sites first so the
    // replacement is all-or-nothing.
    let mut total = 0usize;
    body.walk_exprs(&mut |e| {
        if let ExprKind::Call { module, name, .. } = &e.kind {
            if matches(module, name) {
                total += 1;
            }
        }
    });
    if total == 0 {
        return SubstOutcome::NoCallsite;
    }
    let mut stmt_level = 0usize;
    count_stmt_level_calls(body, &matches, &mut stmt_level);
    if stmt_level != total {
        return SubstOutcome::Unsupported;
    }

    let mut site = 0usize;
    let body = caller.body.as_mut().unwrap();
    rewrite_block(body, &matches, callee, ids, round, &mut site);

    // Propagate the callee's declared acquires.
    for a in &callee.acquires {
        if !caller.acquires.contains(a) {
            caller.acquires.push(a.clone());
        }
    }
    SubstOutcome::Replaced
}

fn count_stmt_level_calls(
    block: &Block,
    matches: &impl Fn(&Option<String>, &str) -> bool,
    n: &mut usize,
) {
    for stmt in &block.stmts {
        match &stmt.kind {
            StmtKind::Expr(e) | StmtKind::Let { value: e, .. } => {
                if let ExprKind::Call { module, name, .. } = &e.kind {
                    if matches(module, name) {
                        *n += 1;
                    }
                }
            }
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                count_stmt_level_calls(then_block, matches, n);
                if let Some(e) = else_block {
                    count_stmt_level_calls(e, matches, n);
                }
            }
            StmtKind::While { body, .. } => count_stmt_level_calls(body, matches, n),
            _ => {}
        }
    }
}

fn rewrite_block(
    block: &mut Block,
    matches: &impl Fn(&Option<String>, &str) -> bool,
    callee: &FunctionDef,
    ids: &mut NodeIdGen,
    round: usize,
    site: &mut usize,
) {
    let mut new_stmts = Vec::with_capacity(block.stmts.len());
    for mut stmt in std::mem::take(&mut block.stmts) {
        let replaced = match &stmt.kind {
            StmtKind::Expr(e) => match &e.kind {
                ExprKind::Call { module, name, args, .. } if matches(module, name) => {
                    *site += 1;
                    Some(expand_call(callee, args, None, ids, round, *site, stmt.span))
                }
                _ => None,
            },
            StmtKind::Let { name, value, .. } => match &value.kind {
                ExprKind::Call {
                    module,
                    name: fname,
                    args,
                    ..
                } if matches(module, fname) => {
                    *site += 1;
                    Some(expand_call(
                        callee,
                        args,
                        Some(name.clone()),
                        ids,
                        round,
                        *site,
                        stmt.span,
                    ))
                }
                _ => None,
            },
            _ => None,
        };
        match replaced {
            Some(stmts) => new_stmts.extend(stmts),
            None => {
                match &mut stmt.kind {
                    StmtKind::If {
                        then_block,
                        else_block,
                        ..
                    } => {
                        rewrite_block(then_block, matches, callee, ids, round, site);
                        if let Some(e) = else_block {
                            rewrite_block(e, matches, callee, ids, round, site);
                        }
                    }
                    StmtKind::While { body, .. } => {
                        rewrite_block(body, matches, callee, ids, round, site)
                    }
                    _ => {}
                }
                new_stmts.push(stmt);
            }
        }
    }
    block.stmts = new_stmts;
}

/// Expand one call site into a statement sequence: fresh `let` bindings for
/// the arguments, the callee's statements with every callee-bound name
/// renamed with an `__inl<N>` suffix, and finally the tail value bound to
/// `result_name` (or evaluated for effect) if present.
fn expand_call(
    callee: &FunctionDef,
    args: &[Expr],
    result_name: Option<String>,
    ids: &mut NodeIdGen,
    round: usize,
    site: usize,
    span: crate::diag::Span,
) -> Vec<Stmt> {
    let suffix = format!("__inl{}_{}", round, site);
    let renamed: BTreeSet<String> = callee
        .params
        .iter()
        .map(|(p, _)| p.clone())
        .chain(bound_locals(callee.body.as_ref().unwrap()))
        .collect();

    let mut out = Vec::new();
    for ((param, ty), arg) in callee.params.iter().zip(args) {
        out.push(Stmt {
            id: ids.fresh(),
            span,
            kind: StmtKind::Let {
                name: format!("{param}{suffix}"),
                ty: Some(ty.clone()),
                value: arg.clone(),
            },
        });
    }

    let mut body = callee.body.as_ref().unwrap().clone();
    rename_block(&mut body, &renamed, &suffix);
    refresh_ids(&mut body, ids);
    out.extend(body.stmts);

    if let Some(tail) = body.tail {
        match result_name {
            Some(name) => out.push(Stmt {
                id: ids.fresh(),
                span,
                kind: StmtKind::Let {
                    name,
                    ty: callee.return_type.clone(),
                    value: tail,
                },
            }),
            None => out.push(Stmt {
                id: ids.fresh(),
                span,
                kind: StmtKind::Expr(tail),
            }),
        }
    }
    out
}

fn bound_locals(block: &Block) -> Vec<String> {
    let mut names = Vec::new();
    block.walk_stmts(&mut |s| {
        if let StmtKind::Let { name, .. } = &s.kind {
            names.push(name.clone());
        }
    });
    names
}

fn rename_block(block: &mut Block, renamed: &BTreeSet<String>, suffix: &str) {
    for stmt in &mut block.stmts {
        rename_stmt(stmt, renamed, suffix);
    }
    if let Some(tail) = &mut block.tail {
        rename_expr(tail, renamed, suffix);
    }
}

fn rename_stmt(stmt: &mut Stmt, renamed: &BTreeSet<String>, suffix: &str) {
    match &mut stmt.kind {
        StmtKind::Let { name, value, .. } => {
            rename_expr(value, renamed, suffix);
            if renamed.contains(name) {
                name.push_str(suffix);
            }
        }
        StmtKind::Assign { target, value } => {
            rename_expr(target, renamed, suffix);
            rename_expr(value, renamed, suffix);
        }
        StmtKind::If {
            cond,
            then_block,
            else_block,
        } => {
            rename_expr(cond, renamed, suffix);
            rename_block(then_block, renamed, suffix);
            if let Some(e) = else_block {
                rename_block(e, renamed, suffix);
            }
        }
        StmtKind::While {
            cond,
            invariants,
            body,
        } => {
            rename_expr(cond, renamed, suffix);
            for inv in invariants {
                rename_expr(inv, renamed, suffix);
            }
            rename_block(body, renamed, suffix);
        }
        StmtKind::Assert { cond, code } => {
            rename_expr(cond, renamed, suffix);
            rename_expr(code, renamed, suffix);
        }
        StmtKind::Return(value) => {
            if let Some(v) = value {
                rename_expr(v, renamed, suffix);
            }
        }
        StmtKind::Abort(code) => rename_expr(code, renamed, suffix),
        StmtKind::Expr(e) => rename_expr(e, renamed, suffix),
    }
}

fn rename_expr(expr: &mut Expr, renamed: &BTreeSet<String>, suffix: &str) {
    match &mut expr.kind {
        ExprKind::VarRef(name) => {
            if renamed.contains(name) {
                name.push_str(suffix);
            }
        }
        ExprKind::Literal(_) => {}
        ExprKind::FieldAccess(base, _) => rename_expr(base, renamed, suffix),
        ExprKind::Call { args, .. } => args.iter_mut().for_each(|a| rename_expr(a, renamed, suffix)),
        ExprKind::BorrowGlobal { addr, .. }
        | ExprKind::Exists { addr, .. }
        | ExprKind::Global { addr, .. } => rename_expr(addr, renamed, suffix),
        ExprKind::MoveTo { signer, value, .. } => {
            rename_expr(signer, renamed, suffix);
            rename_expr(value, renamed, suffix);
        }
        ExprKind::Old(inner) => rename_expr(inner, renamed, suffix),
        ExprKind::StructLit { fields, .. } => fields
            .iter_mut()
            .for_each(|(_, e)| rename_expr(e, renamed, suffix)),
        ExprKind::VectorLit(items) => items
            .iter_mut()
            .for_each(|i| rename_expr(i, renamed, suffix)),
        ExprKind::Binary { lhs, rhs, .. } => {
            rename_expr(lhs, renamed, suffix);
            rename_expr(rhs, renamed, suffix);
        }
        ExprKind::Unary { expr: inner, .. } => rename_expr(inner, renamed, suffix),
    }
}

fn refresh_ids(block: &mut Block, ids: &mut NodeIdGen) {
    block.id = ids.fresh();
    for stmt in &mut block.stmts {
        stmt.id = ids.fresh();
        match &mut stmt.kind {
            StmtKind::If {
                then_block,
                else_block,
                ..
            } => {
                refresh_ids(then_block, ids);
                if let Some(e) = else_block {
                    refresh_ids(e, ids);
                }
            }
            StmtKind::While { body, .. } => refresh_ids(body, ids),
            _ => {}
        }
    }
}

fn has_early_return(block: &Block) -> bool {
    let mut found = false;
    block.walk_stmts(&mut |s| {
        if matches!(s.kind, StmtKind::Return(_)) {
            found = true;
        }
    });
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deps::slice;
    use crate::frontend::{parse_source, pretty_print_function};

    fn ws(src: &str) -> Workspace {
        Workspace::new(parse_source(src).unwrap())
    }

    fn report(src: &str, module: &str, target: &str) -> (Workspace, InlineReport) {
        let workspace = ws(src);
        let closure = slice(&workspace, &FunctionPath::new(module, target)).unwrap();
        let report = inline_best_effort(&workspace, &closure);
        (workspace, report)
    }

    const COIN: &str = r#"
module 0x1::coin {
    struct Coin has key, store {
        value: u64,
    }

    struct Balance has key {
        coin: Coin,
    }

    public fun transfer(from: address, to: address, amount: u64) acquires Balance {
        let coin = withdraw(from, amount);
        deposit(to, coin);
    }

    fun withdraw(addr: address, amount: u64): Coin acquires Balance {
        let balance_ref = borrow_global_mut<Balance>(addr);
        assert!(balance_ref.coin.value >= amount, 1);
        balance_ref.coin.value = balance_ref.coin.value - amount;
        Coin { value: amount }
    }

    fun deposit(addr: address, coin: Coin) acquires Balance {
        let balance_ref = borrow_global_mut<Balance>(addr);
        balance_ref.coin.value = balance_ref.coin.value + coin.value;
    }
}
"#;

    #[test]
    fn transfer_inlines_both_callees() {
        let (_, report) = report(COIN, "coin", "transfer");
        assert_eq!(report.inlined.len(), 2, "report: {}", report.render());
        assert!(report.skipped.is_empty());
        let body = report.result.body.as_ref().unwrap();
        assert_eq!(body.count_borrow_global_mut(), 2);
        let printed = pretty_print_function(&report.result);
        assert!(!printed.contains("withdraw("));
        assert!(!printed.contains("deposit("));
    }

    #[test]
    fn inlined_result_checks_clean() {
        let (workspace, report) = report(COIN, "coin", "transfer");
        let mut module = workspace.module("coin").unwrap().clone();
        *module.function_mut("transfer").unwrap() = report.result.clone();
        assert!(check_wellformed(&module, &[]).is_empty());
    }

    #[test]
    fn borrow_global_mut_count_is_preserved() {
        let (workspace, report) = report(COIN, "coin", "transfer");
        let sum: usize = ["transfer", "withdraw", "deposit"]
            .iter()
            .map(|n| {
                workspace
                    .module("coin")
                    .unwrap()
                    .function(n)
                    .unwrap()
                    .body
                    .as_ref()
                    .unwrap()
                    .count_borrow_global_mut()
            })
            .sum();
        assert_eq!(
            report.result.body.as_ref().unwrap().count_borrow_global_mut(),
            sum
        );
    }

    #[test]
    fn zero_callee_target_is_unchanged() {
        let (workspace, report) = report(COIN, "coin", "deposit");
        assert!(report.inlined.is_empty());
        assert!(report.skipped.is_empty());
        assert_eq!(
            pretty_print_function(&report.result),
            pretty_print_function(workspace.module("coin").unwrap().function("deposit").unwrap())
        );
    }

    #[test]
    fn defective_callee_skipped_clean_one_kept() {
        // `bad` touches Balance without declaring acquires, so folding it in
        // trips the check and it is reverted; `good` still lands.
        let src = r#"
module 0x1::m {
    struct Balance has key {
        value: u64,
    }

    fun bad(addr: address) {
        let b = borrow_global_mut<Balance>(addr);
        b.value = 0;
    }

    fun good(x: u64): u64 {
        x + 1
    }

    fun driver(addr: address): u64 {
        bad(addr);
        let y = good(2);
        y
    }
}
"#;
        let (_, report) = report(src, "m", "driver");
        let inlined: Vec<&str> = report.inlined.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(inlined, ["good"]);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].0.name, "bad");
        assert!(matches!(report.skipped[0].1, SkipReason::CheckFailed(_)));
    }

    #[test]
    fn rerun_on_result_is_a_fixpoint() {
        let (workspace, report) = report(COIN, "coin", "transfer");
        let mut module = workspace.module("coin").unwrap().clone();
        *module.function_mut("transfer").unwrap() = report.result.clone();
        let ws2 = Workspace::new(vec![module]);
        let closure = slice(&ws2, &FunctionPath::new("coin", "transfer")).unwrap();
        let second = inline_best_effort(&ws2, &closure);
        assert!(second.inlined.is_empty());
        assert_eq!(
            pretty_print_function(&second.result),
            pretty_print_function(&report.result)
        );
    }

    #[test]
    fn name_collision_gets_renamed_not_shadowed() {
        let src = r#"
module 0x1::m {
    fun incr(value: u64): u64 {
        let bumped = value + 1;
        bumped
    }

    fun driver(): u64 {
        let bumped = 10;
        let out = incr(bumped);
        out + bumped
    }
}
"#;
        let (_, report) = report(src, "m", "driver");
        assert_eq!(report.inlined.len(), 1);
        let printed = pretty_print_function(&report.result);
        assert!(printed.contains("__inl"));
        // Caller's own `bumped` must survive unrenamed.
        assert!(printed.contains("let bumped = 10;"));
    }

    #[test]
    fn transitive_chain_fully_folds() {
        let src = r#"
module 0x1::m {
    fun leaf(x: u64): u64 {
        x * 2
    }

    fun mid(x: u64): u64 {
        let l = leaf(x);
        l + 1
    }

    fun top(x: u64): u64 {
        let m = mid(x);
        m
    }
}
"#;
        let (_, report) = report(src, "m", "top");
        let inlined: Vec<&str> = report.inlined.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(inlined, ["mid", "leaf"]);
        let printed = pretty_print_function(&report.result);
        assert!(!printed.contains("mid("));
        assert!(!printed.contains("leaf("));
    }

    #[test]
    fn early_return_callee_is_skipped() {
        let src = r#"
module 0x1::m {
    fun guard(x: u64): u64 {
        if (x == 0) {
            return 0;
        };
        x - 1
    }

    fun driver(x: u64): u64 {
        let g = guard(x);
        g
    }
}
"#;
        let (_, report) = report(src, "m", "driver");
        assert!(report.inlined.is_empty());
        assert_eq!(report.skipped[0].1, SkipReason::EarlyReturn);
    }

    #[test]
    fn expression_position_call_is_unsupported() {
        let src = r#"
module 0x1::m {
    fun one(): u64 {
        1
    }

    fun driver(): u64 {
        2 + one()
    }
}
"#;
        let (_, report) = report(src, "m", "driver");
        assert!(report.inlined.is_empty());
        assert_eq!(report.skipped[0].1, SkipReason::UnsupportedCallsite);
    }
}
