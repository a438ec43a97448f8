//! Canonical pretty-printer: 4-space indent, one clause per line, trailing
//! semicolons on clauses. `parse(pretty_print(m))` is structurally equal to
//! `m` modulo spans, and the printed form is the structural normal form used
//! for equality checks.

use crate::frontend::ast::*;

const INDENT: &str = "    ";

pub fn pretty_print(module: &SourceModule) -> String {
    let mut p = Printer::new();
    p.module(module);
    p.out
}

pub fn pretty_print_function(f: &FunctionDef) -> String {
    let mut p = Printer::new();
    p.function(f);
    p.out
}

pub fn pretty_print_spec_block(block: &SpecBlock) -> String {
    let mut p = Printer::new();
    p.spec_block(block);
    p.out
}

pub fn pretty_print_expr(expr: &Expr) -> String {
    let mut p = Printer::new();
    p.expr(expr);
    p.out
}

/// Structural equality modulo node ids and spans, via canonical printing.
pub fn modules_structurally_equal(a: &SourceModule, b: &SourceModule) -> bool {
    pretty_print(a) == pretty_print(b)
}

pub fn exprs_structurally_equal(a: &Expr, b: &Expr) -> bool {
    pretty_print_expr(a) == pretty_print_expr(b)
}

struct Printer {
    out: String,
    depth: usize,
}

impl Printer {
    fn new() -> Self {
        Printer {
            out: String::new(),
            depth: 0,
        }
    }

    fn line(&mut self, text: &str) {
        for _ in 0..self.depth {
            self.out.push_str(INDENT);
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn open(&mut self, text: &str) {
        self.line(text);
        self.depth += 1;
    }

    fn close(&mut self, text: &str) {
        self.depth -= 1;
        self.line(text);
    }

    fn module(&mut self, m: &SourceModule) {
        self.open(&format!("module {}::{} {{", m.address, m.name));
        let mut first = true;
        for s in &m.structs {
            if !first {
                self.line("");
            }
            first = false;
            self.struct_def(s);
        }
        for c in &m.constants {
            if !first {
                self.line("");
            }
            first = false;
            self.line(&format!(
                "const {}: {} = {};",
                c.name,
                c.ty,
                self.render_expr(&c.value)
            ));
        }
        for f in &m.functions {
            if !first {
                self.line("");
            }
            first = false;
            self.function(f);
        }
        for b in &m.spec_blocks {
            if !first {
                self.line("");
            }
            first = false;
            self.spec_block(b);
        }
        self.close("}");
    }

    fn struct_def(&mut self, s: &StructDef) {
        let abilities = if s.abilities.is_empty() {
            String::new()
        } else {
            let list: Vec<&str> = s.abilities.iter().map(|a| a.keyword()).collect();
            format!(" has {}", list.join(", "))
        };
        self.open(&format!("struct {}{} {{", s.name, abilities));
        for (name, ty) in &s.fields {
            self.line(&format!("{name}: {ty},"));
        }
        self.close("}");
    }

    fn function(&mut self, f: &FunctionDef) {
        let vis = match f.visibility {
            Visibility::Public => "public ",
            Visibility::Private => "",
        };
        let native = if f.attrs.native { "native " } else { "" };
        let params: Vec<String> = f
            .params
            .iter()
            .map(|(n, t)| format!("{n}: {t}"))
            .collect();
        let ret = match &f.return_type {
            Some(t) => format!(": {t}"),
            None => String::new(),
        };
        let acquires = if f.acquires.is_empty() {
            String::new()
        } else {
            format!(" acquires {}", f.acquires.join(", "))
        };
        let header = format!(
            "{vis}{native}fun {}({}){}{}",
            f.name,
            params.join(", "),
            ret,
            acquires
        );
        match &f.body {
            None => self.line(&format!("{header};")),
            Some(body) => {
                self.open(&format!("{header} {{"));
                self.block_contents(body);
                self.close("}");
            }
        }
    }

    fn block_contents(&mut self, block: &Block) {
        for stmt in &block.stmts {
            self.stmt(stmt);
        }
        if let Some(tail) = &block.tail {
            let text = self.render_expr(tail);
            self.line(&text);
        }
    }

    fn stmt(&mut self, stmt: &Stmt) {
        match &stmt.kind {
            StmtKind::Let { name, ty, value } => {
                let ty_text = match ty {
                    Some(t) => format!(": {t}"),
                    None => String::new(),
                };
                let v = self.render_expr(value);
                self.line(&format!("let {name}{ty_text} = {v};"));
            }
            StmtKind::Assign { target, value } => {
                let t = self.render_expr(target);
                let v = self.render_expr(value);
                self.line(&format!("{t} = {v};"));
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let c = self.render_expr(cond);
                self.open(&format!("if ({c}) {{"));
                self.block_contents(then_block);
                match else_block {
                    Some(e) => {
                        self.close("} else {");
                        self.depth += 1;
                        self.block_contents(e);
                        self.close("}");
                    }
                    None => self.close("}"),
                }
            }
            StmtKind::While {
                cond,
                invariants,
                body,
            } => {
                let c = self.render_expr(cond);
                self.open(&format!("while ({c}) {{"));
                if !invariants.is_empty() {
                    self.open("spec {");
                    for inv in invariants {
                        let text = self.render_expr(inv);
                        self.line(&format!("invariant {text};"));
                    }
                    self.close("};");
                }
                self.block_contents(body);
                self.close("}");
            }
            StmtKind::Assert { cond, code } => {
                let c = self.render_expr(cond);
                let e = self.render_expr(code);
                self.line(&format!("assert!({c}, {e});"));
            }
            StmtKind::Return(value) => match value {
                Some(v) => {
                    let text = self.render_expr(v);
                    self.line(&format!("return {text};"));
                }
                None => self.line("return;"),
            },
            StmtKind::Abort(code) => {
                let text = self.render_expr(code);
                self.line(&format!("abort {text};"));
            }
            StmtKind::Expr(e) => {
                let text = self.render_expr(e);
                self.line(&format!("{text};"));
            }
        }
    }

    fn spec_block(&mut self, block: &SpecBlock) {
        self.open(&format!("spec {} {{", block.target_fn));
        for (key, value) in &block.pragmas {
            self.line(&format!("pragma {key} = {value};"));
        }
        for binding in &block.bindings {
            let kw = match binding.kind {
                BindingKind::Let => "let",
                BindingKind::LetPost => "let post",
            };
            let e = self.render_expr(&binding.expr);
            self.line(&format!("{kw} {} = {e};", binding.name));
        }
        for clause in &block.clauses {
            let tag = if clause.abstract_flag { " [abstract]" } else { "" };
            let e = self.render_expr(&clause.expr);
            self.line(&format!("{}{tag} {e};", clause.kind.keyword()));
        }
        for f in &block.helper_funs {
            let params: Vec<String> = f
                .params
                .iter()
                .map(|(n, t)| format!("{n}: {t}"))
                .collect();
            let header = format!("fun {}({}): {}", f.name, params.join(", "), f.return_type);
            match &f.body {
                None => self.line(&format!("{header};")),
                Some(body) => {
                    let e = self.render_expr(body);
                    self.open(&format!("{header} {{"));
                    self.line(&e);
                    self.close("}");
                }
            }
        }
        self.close("}");
    }

    fn expr(&mut self, e: &Expr) {
        let text = self.render_expr(e);
        self.out.push_str(&text);
    }

    fn render_expr(&self, e: &Expr) -> String {
        render_prec(e, 0)
    }
}

fn render_prec(e: &Expr, parent_prec: u8) -> String {
    match &e.kind {
        ExprKind::Literal(Lit::Int(n)) => n.to_string(),
        ExprKind::Literal(Lit::Bool(b)) => b.to_string(),
        ExprKind::Literal(Lit::Address(a)) => a.clone(),
        ExprKind::VarRef(name) => name.clone(),
        ExprKind::FieldAccess(base, field) => {
            format!("{}.{field}", render_prec(base, 10))
        }
        ExprKind::Call {
            module,
            name,
            type_args,
            args,
        } => {
            let qual = match module {
                Some(m) => format!("{m}::"),
                None => String::new(),
            };
            let targs = if type_args.is_empty() {
                String::new()
            } else {
                let list: Vec<String> = type_args.iter().map(|t| t.to_string()).collect();
                format!("<{}>", list.join(", "))
            };
            let rendered: Vec<String> = args.iter().map(|a| render_prec(a, 0)).collect();
            format!("{qual}{name}{targs}({})", rendered.join(", "))
        }
        ExprKind::BorrowGlobal { mutable, ty, addr } => {
            let name = if *mutable {
                "borrow_global_mut"
            } else {
                "borrow_global"
            };
            format!("{name}<{ty}>({})", render_prec(addr, 0))
        }
        ExprKind::MoveTo { ty, signer, value } => {
            format!(
                "move_to<{ty}>({}, {})",
                render_prec(signer, 0),
                render_prec(value, 0)
            )
        }
        ExprKind::Exists { ty, addr } => {
            format!("exists<{ty}>({})", render_prec(addr, 0))
        }
        ExprKind::Global { ty, addr } => {
            format!("global<{ty}>({})", render_prec(addr, 0))
        }
        ExprKind::Old(inner) => format!("old({})", render_prec(inner, 0)),
        ExprKind::StructLit { name, fields } => {
            let rendered: Vec<String> = fields
                .iter()
                .map(|(n, v)| format!("{n}: {}", render_prec(v, 0)))
                .collect();
            format!("{name} {{ {} }}", rendered.join(", "))
        }
        ExprKind::VectorLit(items) => {
            let rendered: Vec<String> = items.iter().map(|i| render_prec(i, 0)).collect();
            format!("vector[{}]", rendered.join(", "))
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            // `==>` is right-associative.
            let (lp, rp) = if *op == BinOp::Implies {
                (prec + 1, prec)
            } else {
                (prec, prec + 1)
            };
            let text = format!(
                "{} {} {}",
                render_prec(lhs, lp),
                op.symbol(),
                render_prec(rhs, rp)
            );
            if prec < parent_prec {
                format!("({text})")
            } else {
                text
            }
        }
        ExprKind::Unary { op: UnOp::Not, expr } => {
            format!("!{}", render_prec(expr, 9))
        }
    }
}
