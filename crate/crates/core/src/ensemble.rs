//! Deterministic ensembler: merge per-class clause snippets into one
//! idiomatic spec block — bindings deduplicated structurally, clauses in
//! canonical order — and attach the result to a module.

use crate::agents::ClauseSnippet;
use crate::frontend::ast::*;
use crate::frontend::printer::exprs_structurally_equal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("conflicting bindings for `{name}`: same kind, different definitions, both renamed candidates collide")]
    ConflictingBindings { name: String },
    #[error("spec target `{0}` not found in module")]
    TargetNotFound(String),
}

/// Merge snippets (at most one per class) into a spec block for `target_fn`.
///
/// Bindings are deduplicated by (kind, name, structurally-equal expr). A name
/// bound to different expressions by different classes is renamed with the
/// class tag as suffix, and references inside that class's clauses follow the
/// rename. Clause order is canonical: modifies, aborts_if, ensures.
pub fn merge(
    target_fn: &str,
    snippets: &[ClauseSnippet],
) -> Result<SpecBlock, EnsembleError> {
    let mut block = SpecBlock::empty(target_fn);
    // (kind, name, expr) of everything kept so far.
    let mut kept: Vec<(BindingKind, String, Expr)> = Vec::new();

    for snippet in snippets {
        // Renames in effect for this snippet's clauses.
        let mut renames: Vec<(String, String)> = Vec::new();
        for b in &snippet.bindings {
            let dup = kept
                .iter()
                .any(|(k, n, e)| *k == b.kind && *n == b.name && exprs_structurally_equal(e, &b.expr));
            if dup {
                continue;
            }
            let collides = kept
                .iter()
                .any(|(k, n, _)| *k == b.kind && *n == b.name);
            let name = if collides {
                let renamed = format!("{}_{}", b.name, snippet.class.tag());
                if kept.iter().any(|(_, n, _)| *n == renamed) {
                    return Err(EnsembleError::ConflictingBindings {
                        name: b.name.clone(),
                    });
                }
                renames.push((b.name.clone(), renamed.clone()));
                renamed
            } else {
                b.name.clone()
            };
            kept.push((b.kind, name.clone(), b.expr.clone()));
            let mut binding = b.clone();
            binding.name = name;
            block.bindings.push(binding);
        }

        for c in &snippet.clauses {
            let mut clause = c.clone();
            for (from, to) in &renames {
                rename_refs(&mut clause.expr, from, to);
            }
            // Drop exact structural duplicates across classes.
            let dup = block
                .clauses
                .iter()
                .any(|k| k.kind == clause.kind && exprs_structurally_equal(&k.expr, &clause.expr));
            if !dup {
                block.clauses.push(clause);
            }
        }
    }

    // Canonical clause order; stable within a kind.
    block.clauses.sort_by_key(|c| c.kind);

    if block
        .clauses
        .iter()
        .any(|c| c.kind == ClauseKind::AbortsIf && is_false_lit(&c.expr))
        && block
            .clauses
            .iter()
            .any(|c| c.kind == ClauseKind::AbortsIf && !is_false_lit(&c.expr))
    {
        log::warn!("merged block contains both `aborts_if false` and concrete abort conditions; keeping both for the prover to adjudicate");
    }
    Ok(block)
}

fn is_false_lit(e: &Expr) -> bool {
    matches!(e.kind, ExprKind::Literal(Lit::Bool(false)))
}

fn rename_refs(expr: &mut Expr, from: &str, to: &str) {
    if let ExprKind::VarRef(name) = &mut expr.kind {
        if name == from {
            *name = to.to_string();
        }
    }
    match &mut expr.kind {
        ExprKind::FieldAccess(base, _) => rename_refs(base, from, to),
        ExprKind::Call { args, .. } => args.iter_mut().for_each(|a| rename_refs(a, from, to)),
        ExprKind::BorrowGlobal { addr, .. }
        | ExprKind::Exists { addr, .. }
        | ExprKind::Global { addr, .. } => rename_refs(addr, from, to),
        ExprKind::MoveTo { signer, value, .. } => {
            rename_refs(signer, from, to);
            rename_refs(value, from, to);
        }
        ExprKind::Old(inner) => rename_refs(inner, from, to),
        ExprKind::StructLit { fields, .. } => {
            fields.iter_mut().for_each(|(_, e)| rename_refs(e, from, to))
        }
        ExprKind::VectorLit(items) => items.iter_mut().for_each(|i| rename_refs(i, from, to)),
        ExprKind::Binary { lhs, rhs, .. } => {
            rename_refs(lhs, from, to);
            rename_refs(rhs, from, to);
        }
        ExprKind::Unary { expr: inner, .. } => rename_refs(inner, from, to),
        ExprKind::Literal(_) | ExprKind::VarRef(_) => {}
    }
}

/// Collect the helper functions snippets may carry (abstract specs).
pub fn merge_helpers(snippets: &[ClauseSnippet]) -> Vec<SpecFun> {
    // ClauseSnippets do not carry helpers today; kept for the abstract path
    // where the orchestrator splices them in directly.
    let _ = snippets;
    Vec::new()
}

/// Attach `block` to the module; when the loop-invariant agent produced an
/// annotated function, its body replaces the target's. Any previous spec
/// block for the target is replaced.
pub fn attach(
    module: &SourceModule,
    block: SpecBlock,
    annotated: Option<&FunctionDef>,
) -> Result<SourceModule, EnsembleError> {
    let mut out = module.clone();
    if out.function(&block.target_fn).is_none() {
        return Err(EnsembleError::TargetNotFound(block.target_fn.clone()));
    }
    if let Some(f) = annotated {
        let slot = out
            .function_mut(&block.target_fn)
            .expect("target checked above");
        slot.body = f.body.clone();
    }
    out.spec_blocks.retain(|b| b.target_fn != block.target_fn);
    if !block.bindings.is_empty() || !block.clauses.is_empty() || !block.helper_funs.is_empty() {
        out.spec_blocks.push(block);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ClauseClass;
    use crate::frontend::{parse_source, parse_spec_snippet, pretty_print};

    fn snippet(class: ClauseClass, text: &str) -> ClauseSnippet {
        let (bindings, clauses, _) = parse_spec_snippet(text).unwrap();
        ClauseSnippet {
            class,
            bindings,
            clauses,
            annotated_function: None,
            callee_snippets: Default::default(),
            raw_model_text: String::new(),
            parse_notes: Vec::new(),
        }
    }

    #[test]
    fn overlapping_bindings_dedup_structurally() {
        let a = snippet(
            ClauseClass::AbortsIf,
            "let balance = global<Balance>(from).coin.value;\naborts_if balance < amount;",
        );
        let e = snippet(
            ClauseClass::Ensures,
            "let balance = global<Balance>(from).coin.value;\nlet post balance_post = global<Balance>(from).coin.value;\nensures balance_post == balance - amount;",
        );
        let block = merge("transfer", &[a, e]).unwrap();
        let names: Vec<&str> = block.bindings.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(names, ["balance", "balance_post"]);
        assert_eq!(block.clauses.len(), 2);
    }

    #[test]
    fn empty_snippet_list_yields_empty_block() {
        let block = merge("transfer", &[]).unwrap();
        assert!(block.bindings.is_empty());
        assert!(block.clauses.is_empty());
        assert_eq!(block.target_fn, "transfer");
    }

    #[test]
    fn clause_order_is_canonical_regardless_of_input_order() {
        let e = snippet(ClauseClass::Ensures, "ensures result == 1;");
        let a = snippet(ClauseClass::AbortsIf, "aborts_if x == 0;");
        let m = snippet(ClauseClass::Modifies, "modifies global<Balance>(addr);");
        // Reverse class order in.
        let block = merge("f", &[e.clone(), a.clone(), m.clone()]).unwrap();
        let kinds: Vec<ClauseKind> = block.clauses.iter().map(|c| c.kind).collect();
        assert_eq!(
            kinds,
            [ClauseKind::Modifies, ClauseKind::AbortsIf, ClauseKind::Ensures]
        );
        // Same output as forward order.
        let block2 = merge("f", &[m, a, e]).unwrap();
        let kinds2: Vec<ClauseKind> = block2.clauses.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, kinds2);
    }

    #[test]
    fn colliding_bindings_renamed_with_class_suffix() {
        let a = snippet(
            ClauseClass::AbortsIf,
            "let bal = global<Balance>(from).coin.value;\naborts_if bal < amount;",
        );
        let e = snippet(
            ClauseClass::Ensures,
            "let bal = global<Balance>(to).coin.value;\nensures bal >= 0;",
        );
        let block = merge("transfer", &[a, e]).unwrap();
        let names: Vec<&str> = block.bindings.iter().map(|b| b.name.as_str()).collect();
        assert_eq!(names, ["bal", "bal_ensures"]);
        // The ensures clause follows the rename.
        let ensures = block
            .clauses
            .iter()
            .find(|c| c.kind == ClauseKind::Ensures)
            .unwrap();
        assert_eq!(
            crate::frontend::pretty_print_expr(&ensures.expr),
            "bal_ensures >= 0"
        );
        // The aborts_if clause keeps the original name.
        let aborts = block
            .clauses
            .iter()
            .find(|c| c.kind == ClauseKind::AbortsIf)
            .unwrap();
        assert!(crate::frontend::pretty_print_expr(&aborts.expr).contains("bal <"));
    }

    #[test]
    fn no_duplicate_binding_names_survive() {
        let a = snippet(ClauseClass::AbortsIf, "let x = 1;\naborts_if x == 0;");
        let m = snippet(ClauseClass::Modifies, "let x = 2;\nmodifies global<B>(addr);");
        let e = snippet(ClauseClass::Ensures, "let x = 3;\nensures x > 0;");
        let block = merge("f", &[a, m, e]).unwrap();
        let mut names: Vec<&str> = block.bindings.iter().map(|b| b.name.as_str()).collect();
        let before = names.len();
        names.dedup();
        assert_eq!(before, names.len());
        assert_eq!(names.len(), 3);
    }

    #[test]
    fn merge_is_idempotent_modulo_class_tags() {
        let a = snippet(
            ClauseClass::AbortsIf,
            "let bal = global<Balance>(from).coin.value;\naborts_if bal < amount;",
        );
        let e = snippet(ClauseClass::Ensures, "ensures result == 1;");
        let once = merge("f", &[a, e]).unwrap();

        let again = snippet(ClauseClass::Ensures, "");
        let mut rewrapped = again;
        rewrapped.bindings = once.bindings.clone();
        rewrapped.clauses = once.clauses.clone();
        let twice = merge("f", &[rewrapped]).unwrap();
        assert_eq!(
            crate::frontend::pretty_print_spec_block(&once),
            crate::frontend::pretty_print_spec_block(&twice)
        );
    }

    #[test]
    fn duplicate_clauses_across_classes_collapse() {
        let a = snippet(ClauseClass::AbortsIf, "aborts_if x == 0;");
        let b = snippet(ClauseClass::Ensures, "aborts_if x == 0;\nensures result == x;");
        let block = merge("f", &[a, b]).unwrap();
        assert_eq!(
            block
                .clauses
                .iter()
                .filter(|c| c.kind == ClauseKind::AbortsIf)
                .count(),
            1
        );
    }

    const MODULE: &str = r#"
module 0x1::m {
    fun f(x: u64): u64 {
        let i = 0;
        while (i < x) {
            i = i + 1;
        }
        i
    }
}
"#;

    #[test]
    fn attach_replaces_spec_and_optionally_body() {
        let module = parse_source(MODULE).unwrap().remove(0);
        let (bindings, clauses, _) = parse_spec_snippet("ensures result == x;").unwrap();
        let mut block = SpecBlock::empty("f");
        block.bindings = bindings;
        block.clauses = clauses;
        let out = attach(&module, block, None).unwrap();
        assert!(out.spec_for("f").is_some());
        let printed = pretty_print(&out);
        assert!(printed.contains("spec f {"));
        assert!(printed.contains("ensures result == x;"));
    }

    #[test]
    fn attach_with_annotated_function_installs_invariants() {
        let module = parse_source(MODULE).unwrap().remove(0);
        let annotated_src = r#"
module 0x1::m {
    fun f(x: u64): u64 {
        let i = 0;
        while (i < x) {
            spec {
                invariant i <= x;
            };
            i = i + 1;
        }
        i
    }
}
"#;
        let annotated = parse_source(annotated_src).unwrap().remove(0);
        let f = annotated.function("f").unwrap();
        let out = attach(&module, SpecBlock::empty("f"), Some(f)).unwrap();
        let mut invs = 0;
        out.function("f")
            .unwrap()
            .body
            .as_ref()
            .unwrap()
            .walk_stmts(&mut |s| {
                if let StmtKind::While { invariants, .. } = &s.kind {
                    invs = invariants.len();
                }
            });
        assert_eq!(invs, 1);
    }

    #[test]
    fn attach_to_missing_target_errors() {
        let module = parse_source(MODULE).unwrap().remove(0);
        let err = attach(&module, SpecBlock::empty("ghost"), None).unwrap_err();
        assert!(matches!(err, EnsembleError::TargetNotFound(_)));
    }
}
