//! Lightweight well-formedness checking: name resolution, arity, loose type
//! unification, and `acquires` coverage for `borrow_global*`/`move_to`.
//!
//! Findings are returned as diagnostics; this function never fails.

use crate::diag::{DiagCode, Diagnostic, Span};
use crate::frontend::ast::*;
use std::collections::{HashMap, HashSet};

/// Check one module against itself plus sibling modules (for cross-module
/// calls). `siblings` may be empty.
pub fn check_wellformed(module: &SourceModule, siblings: &[&SourceModule]) -> Vec<Diagnostic> {
    let mut checker = Checker {
        module,
        siblings,
        diags: Vec::new(),
    };
    checker.run();
    checker.diags
}

/// Convenience for the common single-module case.
pub fn check_module(module: &SourceModule) -> Vec<Diagnostic> {
    check_wellformed(module, &[])
}

struct Checker<'a> {
    module: &'a SourceModule,
    siblings: &'a [&'a SourceModule],
    diags: Vec<Diagnostic>,
}

impl<'a> Checker<'a> {
    fn err(&mut self, code: DiagCode, span: Span, msg: String) {
        self.diags.push(Diagnostic::error(code, span, msg));
    }

    fn run(&mut self) {
        self.check_unique_names();
        for f in &self.module.functions {
            self.check_function(f);
        }
        for block in &self.module.spec_blocks {
            if self.module.function(&block.target_fn).is_none() {
                self.err(
                    DiagCode::SpecTargetMissing,
                    block.span,
                    format!("spec block targets unknown function `{}`", block.target_fn),
                );
            }
        }
    }

    fn check_unique_names(&mut self) {
        let mut seen = HashSet::new();
        for f in &self.module.functions {
            if !seen.insert(f.name.clone()) {
                self.err(
                    DiagCode::DuplicateName,
                    f.span,
                    format!("duplicate function `{}`", f.name),
                );
            }
        }
        let mut seen = HashSet::new();
        for s in &self.module.structs {
            if !seen.insert(s.name.clone()) {
                self.err(
                    DiagCode::DuplicateName,
                    s.span,
                    format!("duplicate struct `{}`", s.name),
                );
            }
        }
    }

    fn lookup_fn(&self, module: &Option<String>, name: &str) -> Option<&'a FunctionDef> {
        match module {
            None => self.module.function(name),
            Some(m) if *m == self.module.name => self.module.function(name),
            Some(m) => self
                .siblings
                .iter()
                .find(|s| s.name == *m)
                .and_then(|s| s.function(name)),
        }
    }

    fn lookup_struct(&self, name: &str) -> Option<&'a StructDef> {
        self.module.struct_def(name).or_else(|| {
            self.siblings
                .iter()
                .find_map(|s| s.struct_def(name))
        })
    }

    fn check_function(&mut self, f: &FunctionDef) {
        let mut seen = HashSet::new();
        for (p, _) in &f.params {
            if !seen.insert(p.clone()) {
                self.err(
                    DiagCode::DuplicateName,
                    f.span,
                    format!("duplicate parameter `{}` in `{}`", p, f.name),
                );
            }
        }
        if f.attrs.native {
            if f.body.is_some() {
                self.err(
                    DiagCode::TypeMismatch,
                    f.span,
                    format!("native function `{}` must not have a body", f.name),
                );
            }
            return;
        }
        let Some(body) = &f.body else {
            self.err(
                DiagCode::TypeMismatch,
                f.span,
                format!("non-native function `{}` must have a body", f.name),
            );
            return;
        };

        let mut env: HashMap<String, Type> = f.params.iter().cloned().collect();
        for c in &self.module.constants {
            env.insert(c.name.clone(), c.ty.clone());
        }
        for stmt in &body.stmts {
            self.check_stmt(f, stmt, &mut env);
        }

        // Tail expression must produce the declared return type when both
        // are known.
        if let (Some(ret), Some(tail)) = (&f.return_type, &body.tail) {
            let env_snapshot = env;
            let ty = self.infer(f, tail, &env_snapshot);
            if !ty.unifies(ret) {
                self.err(
                    DiagCode::TypeMismatch,
                    tail.span,
                    format!("function `{}` returns {ret}, tail expression is {ty}", f.name),
                );
            }
        } else if let Some(tail) = &body.tail {
            self.infer(f, tail, &env);
        } else if f.return_type.is_some()
            && body.tail.is_none()
            && !block_always_exits(body)
        {
            self.err(
                DiagCode::TypeMismatch,
                f.span,
                format!("function `{}` declares a return type but has no value", f.name),
            );
        }
    }

    fn check_block(&mut self, f: &FunctionDef, block: &Block, env: &mut HashMap<String, Type>) {
        for stmt in &block.stmts {
            self.check_stmt(f, stmt, env);
        }
        if let Some(tail) = &block.tail {
            self.infer(f, tail, env);
        }
    }

    fn check_stmt(&mut self, f: &FunctionDef, stmt: &Stmt, env: &mut HashMap<String, Type>) {
        match &stmt.kind {
            StmtKind::Let { name, ty, value } => {
                let inferred = self.infer(f, value, env);
                let bound = match ty {
                    Some(declared) => {
                        if !inferred.unifies(declared) {
                            self.err(
                                DiagCode::TypeMismatch,
                                stmt.span,
                                format!("let `{name}` declared {declared} but value is {inferred}"),
                            );
                        }
                        declared.clone()
                    }
                    None => inferred,
                };
                env.insert(name.clone(), bound);
            }
            StmtKind::Assign { target, value } => {
                let target_ty = self.infer(f, target, env);
                let value_ty = self.infer(f, value, env);
                if !value_ty.unifies(&target_ty) {
                    self.err(
                        DiagCode::TypeMismatch,
                        stmt.span,
                        format!("cannot assign {value_ty} to {target_ty}"),
                    );
                }
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                self.expect_bool(f, cond, env);
                let mut then_env = env.clone();
                self.check_block(f, then_block, &mut then_env);
                if let Some(e) = else_block {
                    let mut else_env = env.clone();
                    self.check_block(f, e, &mut else_env);
                }
            }
            StmtKind::While {
                cond,
                invariants,
                body,
            } => {
                self.expect_bool(f, cond, env);
                for inv in invariants {
                    self.infer(f, inv, env);
                }
                let mut body_env = env.clone();
                self.check_block(f, body, &mut body_env);
            }
            StmtKind::Assert { cond, code } => {
                self.expect_bool(f, cond, env);
                self.infer(f, code, env);
            }
            StmtKind::Return(value) => {
                if let Some(v) = value {
                    let ty = self.infer(f, v, env);
                    if let Some(ret) = &f.return_type {
                        if !ty.unifies(ret) {
                            self.err(
                                DiagCode::TypeMismatch,
                                stmt.span,
                                format!("return type mismatch: expected {ret}, found {ty}"),
                            );
                        }
                    }
                }
            }
            StmtKind::Abort(code) => {
                self.infer(f, code, env);
            }
            StmtKind::Expr(e) => {
                self.infer(f, e, env);
            }
        }
    }

    fn expect_bool(&mut self, f: &FunctionDef, e: &Expr, env: &HashMap<String, Type>) {
        let ty = self.infer(f, e, env);
        if !ty.unifies(&Type::Bool) {
            self.err(
                DiagCode::TypeMismatch,
                e.span,
                format!("expected bool condition, found {ty}"),
            );
        }
    }

    fn check_acquires(&mut self, f: &FunctionDef, struct_name: &str, span: Span, op: &str) {
        if !f.acquires.iter().any(|a| a == struct_name) {
            self.err(
                DiagCode::MissingAcquires,
                span,
                format!(
                    "`{op}<{struct_name}>` in `{}` requires `acquires {struct_name}`",
                    f.name
                ),
            );
        }
    }

    fn infer(&mut self, f: &FunctionDef, e: &Expr, env: &HashMap<String, Type>) -> Type {
        match &e.kind {
            ExprKind::Literal(Lit::Int(_)) => Type::Unknown, // width from context
            ExprKind::Literal(Lit::Bool(_)) => Type::Bool,
            ExprKind::Literal(Lit::Address(_)) => Type::Address,
            ExprKind::VarRef(name) => match env.get(name) {
                Some(ty) => ty.clone(),
                None => {
                    self.err(
                        DiagCode::UnknownName,
                        e.span,
                        format!("unknown name `{name}` in `{}`", f.name),
                    );
                    Type::Unknown
                }
            },
            ExprKind::FieldAccess(base, field) => {
                let base_ty = self.infer(f, base, env);
                match &base_ty {
                    Type::Struct { name, .. } => match self.lookup_struct(name) {
                        Some(def) => match def.fields.iter().find(|(n, _)| n == field) {
                            Some((_, ty)) => ty.clone(),
                            None => {
                                self.err(
                                    DiagCode::UnknownName,
                                    e.span,
                                    format!("struct `{name}` has no field `{field}`"),
                                );
                                Type::Unknown
                            }
                        },
                        None => Type::Unknown,
                    },
                    _ => Type::Unknown,
                }
            }
            ExprKind::Call {
                module,
                name,
                args,
                ..
            } => {
                for a in args {
                    self.infer(f, a, env);
                }
                match self.lookup_fn(module, name) {
                    Some(callee) => {
                        if callee.params.len() != args.len() {
                            self.err(
                                DiagCode::ArityMismatch,
                                e.span,
                                format!(
                                    "`{name}` expects {} argument(s), got {}",
                                    callee.params.len(),
                                    args.len()
                                ),
                            );
                        }
                        callee.return_type.clone().unwrap_or(Type::Unknown)
                    }
                    None => {
                        self.err(
                            DiagCode::UnknownFunction,
                            e.span,
                            format!("call to unknown function `{name}`"),
                        );
                        Type::Unknown
                    }
                }
            }
            ExprKind::BorrowGlobal { mutable, ty, addr } => {
                self.infer(f, addr, env);
                if let Type::Struct { name, .. } = ty {
                    if self.lookup_struct(name).is_none() {
                        self.err(
                            DiagCode::UnknownStruct,
                            e.span,
                            format!("unknown struct `{name}`"),
                        );
                    }
                    let op = if *mutable {
                        "borrow_global_mut"
                    } else {
                        "borrow_global"
                    };
                    self.check_acquires(f, name, e.span, op);
                }
                ty.clone()
            }
            ExprKind::MoveTo { ty, signer, value } => {
                self.infer(f, signer, env);
                let value_ty = self.infer(f, value, env);
                if !value_ty.unifies(ty) {
                    self.err(
                        DiagCode::TypeMismatch,
                        e.span,
                        format!("move_to<{ty}> given value of type {value_ty}"),
                    );
                }
                Type::Unknown
            }
            ExprKind::Exists { ty, addr } | ExprKind::Global { ty, addr } => {
                self.infer(f, addr, env);
                if let Type::Struct { name, .. } = ty {
                    if self.lookup_struct(name).is_none() {
                        self.err(
                            DiagCode::UnknownStruct,
                            e.span,
                            format!("unknown struct `{name}`"),
                        );
                    }
                }
                if matches!(e.kind, ExprKind::Exists { .. }) {
                    Type::Bool
                } else {
                    ty.clone()
                }
            }
            ExprKind::Old(inner) => self.infer(f, inner, env),
            ExprKind::StructLit { name, fields } => {
                match self.lookup_struct(name) {
                    Some(def) => {
                        let def_fields: Vec<(String, Type)> = def.fields.clone();
                        if def_fields.len() != fields.len() {
                            self.err(
                                DiagCode::ArityMismatch,
                                e.span,
                                format!(
                                    "struct `{name}` has {} field(s), literal has {}",
                                    def_fields.len(),
                                    fields.len()
                                ),
                            );
                        }
                        for (fname, value) in fields {
                            let value_ty = self.infer(f, value, env);
                            match def_fields.iter().find(|(n, _)| n == fname) {
                                Some((_, expected)) => {
                                    if !value_ty.unifies(expected) {
                                        self.err(
                                            DiagCode::TypeMismatch,
                                            value.span,
                                            format!(
                                                "field `{fname}` of `{name}` is {expected}, found {value_ty}"
                                            ),
                                        );
                                    }
                                }
                                None => {
                                    self.err(
                                        DiagCode::UnknownName,
                                        value.span,
                                        format!("struct `{name}` has no field `{fname}`"),
                                    );
                                }
                            }
                        }
                    }
                    None => {
                        self.err(
                            DiagCode::UnknownStruct,
                            e.span,
                            format!("unknown struct `{name}`"),
                        );
                        for (_, value) in fields {
                            self.infer(f, value, env);
                        }
                    }
                }
                Type::strukt(name)
            }
            ExprKind::VectorLit(items) => {
                let mut item_ty = Type::Unknown;
                for i in items {
                    let t = self.infer(f, i, env);
                    if !t.unifies(&item_ty) {
                        self.err(
                            DiagCode::TypeMismatch,
                            i.span,
                            format!("vector literal mixes {item_ty} and {t}"),
                        );
                    } else if item_ty == Type::Unknown {
                        item_ty = t;
                    }
                }
                Type::Vector(Box::new(item_ty))
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let lt = self.infer(f, lhs, env);
                let rt = self.infer(f, rhs, env);
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                        if !lt.is_integer() || !rt.is_integer() {
                            self.err(
                                DiagCode::TypeMismatch,
                                e.span,
                                format!("arithmetic on {lt} and {rt}"),
                            );
                        }
                        if lt == Type::Unknown {
                            rt
                        } else {
                            lt
                        }
                    }
                    BinOp::Eq | BinOp::Neq => {
                        if !lt.unifies(&rt) {
                            self.err(
                                DiagCode::TypeMismatch,
                                e.span,
                                format!("comparison between {lt} and {rt}"),
                            );
                        }
                        Type::Bool
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        if !lt.is_integer() || !rt.is_integer() {
                            self.err(
                                DiagCode::TypeMismatch,
                                e.span,
                                format!("ordering on {lt} and {rt}"),
                            );
                        }
                        Type::Bool
                    }
                    BinOp::And | BinOp::Or | BinOp::Implies => {
                        if !lt.unifies(&Type::Bool) || !rt.unifies(&Type::Bool) {
                            self.err(
                                DiagCode::TypeMismatch,
                                e.span,
                                format!("boolean operator on {lt} and {rt}"),
                            );
                        }
                        Type::Bool
                    }
                }
            }
            ExprKind::Unary { op: UnOp::Not, expr } => {
                let ty = self.infer(f, expr, env);
                if !ty.unifies(&Type::Bool) {
                    self.err(
                        DiagCode::TypeMismatch,
                        e.span,
                        format!("`!` applied to {ty}"),
                    );
                }
                Type::Bool
            }
        }
    }
}

fn block_always_exits(block: &Block) -> bool {
    block
        .stmts
        .last()
        .is_some_and(|s| matches!(s.kind, StmtKind::Return(_) | StmtKind::Abort(_)))
}
