//! Recursive-descent parser for the Move subset.

use crate::diag::Span;
use crate::frontend::ast::*;
use crate::frontend::lexer::{lex, SpannedTok, Tok};
use crate::frontend::ParseError;

/// Parse a source file into its modules.
pub fn parse_source(source: &str) -> Result<Vec<SourceModule>, ParseError> {
    let toks = lex(source)?;
    let mut parser = Parser::new(toks);
    let mut modules = Vec::new();
    while !parser.at_eof() {
        modules.push(parser.module()?);
    }
    if modules.is_empty() {
        return Err(ParseError::syntax(Span::new(1, 1), "expected module"));
    }
    Ok(modules)
}

/// Parse a file that must contain exactly one module.
pub fn parse_module(source: &str) -> Result<SourceModule, ParseError> {
    let mut modules = parse_source(source)?;
    if modules.len() != 1 {
        return Err(ParseError::syntax(
            Span::new(1, 1),
            format!("expected exactly one module, found {}", modules.len()),
        ));
    }
    Ok(modules.pop().unwrap())
}

/// Parse the members of a spec block given without the surrounding
/// `spec <fn> { ... }` wrapper. Used for model-output snippets.
pub fn parse_spec_snippet(
    text: &str,
) -> Result<(Vec<Binding>, Vec<Clause>, Vec<SpecFun>), ParseError> {
    let wrapped = format!("module 0x0::snippet {{ fun snippet() {{ }} spec snippet {{ {text} }} }}");
    let module = parse_module(&wrapped)?;
    let block = module.spec_blocks.into_iter().next().unwrap();
    Ok((block.bindings, block.clauses, block.helper_funs))
}

/// Parse a standalone function definition (e.g. a loop-annotated function
/// returned by a model).
pub fn parse_function_snippet(text: &str) -> Result<FunctionDef, ParseError> {
    let wrapped = format!("module 0x0::snippet {{ {text} }}");
    let module = parse_module(&wrapped)?;
    module
        .functions
        .into_iter()
        .next()
        .ok_or_else(|| ParseError::syntax(Span::new(1, 1), "expected a function definition"))
}

struct Parser {
    toks: Vec<SpannedTok>,
    pos: usize,
    ids: NodeIdGen,
}

impl Parser {
    fn new(toks: Vec<SpannedTok>) -> Self {
        Parser {
            toks,
            pos: 0,
            ids: NodeIdGen::default(),
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        let i = (self.pos + 1).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<Span, ParseError> {
        let span = self.span();
        if *self.peek() == tok {
            self.bump();
            Ok(span)
        } else {
            Err(ParseError::syntax(
                span,
                format!("expected {}, found {}", tok.describe(), self.peek().describe()),
            ))
        }
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<Span, ParseError> {
        let span = self.span();
        if self.eat_kw(kw) {
            Ok(span)
        } else {
            Err(ParseError::syntax(
                span,
                format!("expected `{kw}`, found {}", self.peek().describe()),
            ))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok((s, span))
            }
            other => Err(ParseError::syntax(
                span,
                format!("expected identifier, found {}", other.describe()),
            )),
        }
    }

    // --- items -------------------------------------------------------------

    fn module(&mut self) -> Result<SourceModule, ParseError> {
        let span = self.expect_kw("module")?;
        let address = match self.peek().clone() {
            Tok::AddressLit(a) => {
                self.bump();
                format!("0x{a}")
            }
            Tok::Ident(name) => {
                self.bump();
                name
            }
            other => {
                return Err(ParseError::syntax(
                    self.span(),
                    format!("expected module address, found {}", other.describe()),
                ))
            }
        };
        self.expect(Tok::ColonColon)?;
        let (name, _) = self.ident()?;
        self.expect(Tok::LBrace)?;

        let mut module = SourceModule {
            id: self.ids.fresh(),
            span,
            address,
            name,
            structs: Vec::new(),
            constants: Vec::new(),
            functions: Vec::new(),
            spec_blocks: Vec::new(),
            next_node_id: 0,
        };

        while !matches!(self.peek(), Tok::RBrace) {
            let span = self.span();
            match self.peek().clone() {
                Tok::Ident(kw) => match kw.as_str() {
                    "struct" => module.structs.push(self.struct_def()?),
                    "const" => module.constants.push(self.const_def()?),
                    "public" | "fun" | "native" => module.functions.push(self.function_def()?),
                    "spec" => module.spec_blocks.push(self.spec_block()?),
                    "use" | "friend" | "script" | "entry" | "enum" | "macro" => {
                        return Err(ParseError::unsupported(span, kw))
                    }
                    other => {
                        return Err(ParseError::syntax(
                            span,
                            format!("expected module item, found `{other}`"),
                        ))
                    }
                },
                other => {
                    return Err(ParseError::syntax(
                        span,
                        format!("expected module item, found {}", other.describe()),
                    ))
                }
            }
        }
        self.expect(Tok::RBrace)?;

        // Reflect `pragma verify = false` spec blocks into function attrs.
        let verify_false_targets: Vec<String> = module
            .spec_blocks
            .iter()
            .filter(|b| b.pragmas.iter().any(|(k, v)| k == "verify" && v == "false"))
            .map(|b| b.target_fn.clone())
            .collect();
        for target in verify_false_targets {
            if let Some(f) = module.function_mut(&target) {
                f.attrs.pragma_verify_false = true;
            }
        }
        module.next_node_id = self.ids.high_water();
        Ok(module)
    }

    fn struct_def(&mut self) -> Result<StructDef, ParseError> {
        let span = self.expect_kw("struct")?;
        let (name, _) = self.ident()?;
        let mut abilities = Vec::new();
        if self.eat_kw("has") {
            loop {
                let (ab, ab_span) = self.ident()?;
                let ability = match ab.as_str() {
                    "key" => Ability::Key,
                    "store" => Ability::Store,
                    "copy" => Ability::Copy,
                    "drop" => Ability::Drop,
                    other => {
                        return Err(ParseError::syntax(
                            ab_span,
                            format!("unknown ability `{other}`"),
                        ))
                    }
                };
                abilities.push(ability);
                if !matches!(self.peek(), Tok::Comma) {
                    break;
                }
                self.bump();
            }
        }
        self.expect(Tok::LBrace)?;
        let mut fields = Vec::new();
        while !matches!(self.peek(), Tok::RBrace) {
            let (fname, _) = self.ident()?;
            self.expect(Tok::Colon)?;
            let ty = self.type_ref()?;
            fields.push((fname, ty));
            if matches!(self.peek(), Tok::Comma) {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(StructDef {
            id: self.ids.fresh(),
            span,
            name,
            abilities,
            fields,
        })
    }

    fn const_def(&mut self) -> Result<ConstDef, ParseError> {
        let span = self.expect_kw("const")?;
        let (name, _) = self.ident()?;
        self.expect(Tok::Colon)?;
        let ty = self.type_ref()?;
        self.expect(Tok::Assign)?;
        let value = self.expr(false)?;
        self.expect(Tok::Semi)?;
        Ok(ConstDef {
            id: self.ids.fresh(),
            span,
            name,
            ty,
            value,
        })
    }

    fn function_def(&mut self) -> Result<FunctionDef, ParseError> {
        let span = self.span();
        let visibility = if self.eat_kw("public") {
            Visibility::Public
        } else {
            Visibility::Private
        };
        let native = self.eat_kw("native");
        self.expect_kw("fun")?;
        let (name, _) = self.ident()?;
        if matches!(self.peek(), Tok::Lt) {
            return Err(ParseError::unsupported(self.span(), "type parameters"));
        }
        let params = self.param_list()?;
        let return_type = if matches!(self.peek(), Tok::Colon) {
            self.bump();
            Some(self.type_ref()?)
        } else {
            None
        };
        let mut acquires = Vec::new();
        if self.eat_kw("acquires") {
            loop {
                let (s, _) = self.ident()?;
                acquires.push(s);
                if !matches!(self.peek(), Tok::Comma) {
                    break;
                }
                self.bump();
            }
        }
        let body = if native {
            self.expect(Tok::Semi)?;
            None
        } else {
            Some(self.block()?)
        };
        Ok(FunctionDef {
            id: self.ids.fresh(),
            span,
            name,
            visibility,
            params,
            return_type,
            acquires,
            body,
            attrs: FnAttrs {
                native,
                pragma_verify_false: false,
            },
        })
    }

    fn param_list(&mut self) -> Result<Vec<(String, Type)>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        while !matches!(self.peek(), Tok::RParen) {
            let (name, _) = self.ident()?;
            self.expect(Tok::Colon)?;
            let ty = self.type_ref()?;
            params.push((name, ty));
            if matches!(self.peek(), Tok::Comma) {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(params)
    }

    fn type_ref(&mut self) -> Result<Type, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Amp | Tok::AmpMut => Err(ParseError::unsupported(span, "reference type")),
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "u8" => Ok(Type::U8),
                    "u64" => Ok(Type::U64),
                    "u128" => Ok(Type::U128),
                    "u16" | "u32" | "u256" => Err(ParseError::unsupported(span, name)),
                    "bool" => Ok(Type::Bool),
                    "address" => Ok(Type::Address),
                    "signer" => Ok(Type::Signer),
                    "vector" => {
                        self.expect(Tok::Lt)?;
                        let inner = self.type_ref()?;
                        self.expect(Tok::Gt)?;
                        Ok(Type::Vector(Box::new(inner)))
                    }
                    _ => {
                        if matches!(self.peek(), Tok::ColonColon) {
                            self.bump();
                            let (sname, _) = self.ident()?;
                            Ok(Type::Struct {
                                module: Some(name),
                                name: sname,
                            })
                        } else {
                            Ok(Type::Struct { module: None, name })
                        }
                    }
                }
            }
            other => Err(ParseError::syntax(
                span,
                format!("expected type, found {}", other.describe()),
            )),
        }
    }

    // --- statements --------------------------------------------------------

    fn block(&mut self) -> Result<Block, ParseError> {
        let span = self.expect(Tok::LBrace)?;
        let id = self.ids.fresh();
        let (stmts, tail) = self.stmt_loop()?;
        self.expect(Tok::RBrace)?;
        Ok(Block {
            id,
            span,
            stmts,
            tail,
        })
    }

    /// Loop bodies may open with an embedded `spec { invariant ...; }` group.
    fn loop_body(&mut self) -> Result<(Vec<Expr>, Block), ParseError> {
        let open = self.span();
        self.expect(Tok::LBrace)?;
        let mut invariants = Vec::new();
        if self.at_kw("spec") && matches!(self.peek2(), Tok::LBrace) {
            self.bump();
            self.expect(Tok::LBrace)?;
            while self.at_kw("invariant") {
                self.bump();
                let e = self.expr(true)?;
                self.expect(Tok::Semi)?;
                invariants.push(e);
            }
            self.expect(Tok::RBrace)?;
            self.expect(Tok::Semi)?;
        }
        let id = self.ids.fresh();
        let (stmts, tail) = self.stmt_loop()?;
        self.expect(Tok::RBrace)?;
        Ok((
            invariants,
            Block {
                id,
                span: open,
                stmts,
                tail,
            },
        ))
    }

    fn stmt_loop(&mut self) -> Result<(Vec<Stmt>, Option<Expr>), ParseError> {
        let mut stmts = Vec::new();
        let mut tail = None;
        loop {
            // Tolerate stray semicolons between statements (idiomatic after
            // a block-valued `if` or `while` used as a statement).
            while matches!(self.peek(), Tok::Semi) {
                self.bump();
            }
            if matches!(self.peek(), Tok::RBrace) {
                break;
            }
            match self.single_stmt_or_tail()? {
                StmtOrTail::Stmt(s) => stmts.push(s),
                StmtOrTail::Tail(e) => {
                    tail = Some(e);
                    break;
                }
            }
        }
        Ok((stmts, tail))
    }

    fn single_stmt_or_tail(&mut self) -> Result<StmtOrTail, ParseError> {
        let stmt_span = self.span();
        match self.peek().clone() {
            Tok::Ident(kw) if kw == "let" => {
                self.bump();
                let (name, _) = self.ident()?;
                let ty = if matches!(self.peek(), Tok::Colon) {
                    self.bump();
                    Some(self.type_ref()?)
                } else {
                    None
                };
                self.expect(Tok::Assign)?;
                let value = self.expr(false)?;
                self.expect(Tok::Semi)?;
                Ok(StmtOrTail::Stmt(Stmt {
                    id: self.ids.fresh(),
                    span: stmt_span,
                    kind: StmtKind::Let { name, ty, value },
                }))
            }
            Tok::Ident(kw) if kw == "if" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.expr(false)?;
                self.expect(Tok::RParen)?;
                let then_block = self.block()?;
                let else_block = if self.eat_kw("else") {
                    Some(self.block()?)
                } else {
                    None
                };
                Ok(StmtOrTail::Stmt(Stmt {
                    id: self.ids.fresh(),
                    span: stmt_span,
                    kind: StmtKind::If {
                        cond,
                        then_block,
                        else_block,
                    },
                }))
            }
            Tok::Ident(kw) if kw == "while" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.expr(false)?;
                self.expect(Tok::RParen)?;
                let (invariants, body) = self.loop_body()?;
                Ok(StmtOrTail::Stmt(Stmt {
                    id: self.ids.fresh(),
                    span: stmt_span,
                    kind: StmtKind::While {
                        cond,
                        invariants,
                        body,
                    },
                }))
            }
            Tok::Ident(kw) if kw == "loop" || kw == "break" || kw == "continue" => {
                Err(ParseError::unsupported(stmt_span, kw))
            }
            Tok::Ident(kw) if kw == "return" => {
                self.bump();
                let value = if matches!(self.peek(), Tok::Semi) {
                    None
                } else {
                    Some(self.expr(false)?)
                };
                self.expect(Tok::Semi)?;
                Ok(StmtOrTail::Stmt(Stmt {
                    id: self.ids.fresh(),
                    span: stmt_span,
                    kind: StmtKind::Return(value),
                }))
            }
            Tok::Ident(kw) if kw == "abort" => {
                self.bump();
                let code = self.expr(false)?;
                self.expect(Tok::Semi)?;
                Ok(StmtOrTail::Stmt(Stmt {
                    id: self.ids.fresh(),
                    span: stmt_span,
                    kind: StmtKind::Abort(code),
                }))
            }
            Tok::Ident(kw) if kw == "assert" && matches!(self.peek2(), Tok::Not) => {
                self.bump();
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.expr(false)?;
                self.expect(Tok::Comma)?;
                let code = self.expr(false)?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                Ok(StmtOrTail::Stmt(Stmt {
                    id: self.ids.fresh(),
                    span: stmt_span,
                    kind: StmtKind::Assert { cond, code },
                }))
            }
            _ => {
                let expr = self.expr(false)?;
                match self.peek() {
                    Tok::Assign => {
                        self.bump();
                        let value = self.expr(false)?;
                        self.expect(Tok::Semi)?;
                        Ok(StmtOrTail::Stmt(Stmt {
                            id: self.ids.fresh(),
                            span: stmt_span,
                            kind: StmtKind::Assign {
                                target: expr,
                                value,
                            },
                        }))
                    }
                    Tok::Semi => {
                        self.bump();
                        Ok(StmtOrTail::Stmt(Stmt {
                            id: self.ids.fresh(),
                            span: stmt_span,
                            kind: StmtKind::Expr(expr),
                        }))
                    }
                    Tok::RBrace => Ok(StmtOrTail::Tail(expr)),
                    other => Err(ParseError::syntax(
                        self.span(),
                        format!("expected `;` or `}}`, found {}", other.describe()),
                    )),
                }
            }
        }
    }

    // --- spec blocks -------------------------------------------------------

    fn spec_block(&mut self) -> Result<SpecBlock, ParseError> {
        let span = self.expect_kw("spec")?;
        let (target_fn, _) = self.ident()?;
        self.expect(Tok::LBrace)?;
        let id = self.ids.fresh();
        let mut block = SpecBlock {
            id,
            span,
            target_fn,
            pragmas: Vec::new(),
            bindings: Vec::new(),
            clauses: Vec::new(),
            helper_funs: Vec::new(),
        };
        while !matches!(self.peek(), Tok::RBrace) {
            let member_span = self.span();
            match self.peek().clone() {
                Tok::Ident(kw) if kw == "pragma" => {
                    self.bump();
                    let (key, _) = self.ident()?;
                    self.expect(Tok::Assign)?;
                    let value = match self.bump() {
                        Tok::Ident(v) => v,
                        Tok::Int(n) => n.to_string(),
                        other => {
                            return Err(ParseError::syntax(
                                member_span,
                                format!("expected pragma value, found {}", other.describe()),
                            ))
                        }
                    };
                    self.expect(Tok::Semi)?;
                    block.pragmas.push((key, value));
                }
                Tok::Ident(kw) if kw == "let" => {
                    self.bump();
                    let kind = if self.eat_kw("post") {
                        BindingKind::LetPost
                    } else {
                        BindingKind::Let
                    };
                    let (name, _) = self.ident()?;
                    self.expect(Tok::Assign)?;
                    let expr = self.expr(true)?;
                    self.expect(Tok::Semi)?;
                    block.bindings.push(Binding {
                        id: self.ids.fresh(),
                        span: member_span,
                        kind,
                        name,
                        expr,
                    });
                }
                Tok::Ident(kw)
                    if matches!(kw.as_str(), "requires" | "modifies" | "aborts_if" | "ensures") =>
                {
                    self.bump();
                    let kind = match kw.as_str() {
                        "requires" => ClauseKind::Requires,
                        "modifies" => ClauseKind::Modifies,
                        "aborts_if" => ClauseKind::AbortsIf,
                        _ => ClauseKind::Ensures,
                    };
                    let abstract_flag = if matches!(self.peek(), Tok::LBracket) {
                        self.bump();
                        self.expect_kw("abstract")?;
                        self.expect(Tok::RBracket)?;
                        true
                    } else {
                        false
                    };
                    let expr = self.expr(true)?;
                    self.expect(Tok::Semi)?;
                    block.clauses.push(Clause {
                        id: self.ids.fresh(),
                        span: member_span,
                        kind,
                        expr,
                        abstract_flag,
                    });
                }
                Tok::Ident(kw) if kw == "fun" => {
                    self.bump();
                    let (name, _) = self.ident()?;
                    let params = self.param_list()?;
                    self.expect(Tok::Colon)?;
                    let return_type = self.type_ref()?;
                    let body = if matches!(self.peek(), Tok::Semi) {
                        self.bump();
                        None
                    } else {
                        self.expect(Tok::LBrace)?;
                        let e = self.expr(true)?;
                        self.expect(Tok::RBrace)?;
                        Some(e)
                    };
                    block.helper_funs.push(SpecFun {
                        id: self.ids.fresh(),
                        span: member_span,
                        name,
                        params,
                        return_type,
                        body,
                    });
                }
                Tok::Ident(kw) if kw == "invariant" || kw == "forall" || kw == "choose" => {
                    return Err(ParseError::unsupported(member_span, kw));
                }
                other => {
                    return Err(ParseError::syntax(
                        member_span,
                        format!("expected spec member, found {}", other.describe()),
                    ))
                }
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(block)
    }

    // --- expressions -------------------------------------------------------

    fn expr(&mut self, in_spec: bool) -> Result<Expr, ParseError> {
        self.binary_expr(0, in_spec)
    }

    fn binary_expr(&mut self, min_prec: u8, in_spec: bool) -> Result<Expr, ParseError> {
        let mut lhs = self.unary_expr(in_spec)?;
        loop {
            let op = match self.peek() {
                Tok::Implies if in_spec => BinOp::Implies,
                Tok::Implies => {
                    return Err(ParseError::unsupported(self.span(), "==> outside spec"))
                }
                Tok::OrOr => BinOp::Or,
                Tok::AndAnd => BinOp::And,
                Tok::EqEq => BinOp::Eq,
                Tok::Neq => BinOp::Neq,
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Gt => BinOp::Gt,
                Tok::Ge => BinOp::Ge,
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Mod,
                _ => break,
            };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            let span = self.span();
            self.bump();
            // `==>` is right-associative, the rest left-associative.
            let next_min = if op == BinOp::Implies { prec } else { prec + 1 };
            let rhs = self.binary_expr(next_min, in_spec)?;
            lhs = Expr {
                id: self.ids.fresh(),
                span,
                kind: ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
            };
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self, in_spec: bool) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Tok::Not) {
            let span = self.span();
            self.bump();
            let expr = self.unary_expr(in_spec)?;
            return Ok(Expr {
                id: self.ids.fresh(),
                span,
                kind: ExprKind::Unary {
                    op: UnOp::Not,
                    expr: Box::new(expr),
                },
            });
        }
        self.postfix_expr(in_spec)
    }

    fn postfix_expr(&mut self, in_spec: bool) -> Result<Expr, ParseError> {
        let mut expr = self.primary_expr(in_spec)?;
        while matches!(self.peek(), Tok::Dot) {
            let span = self.span();
            self.bump();
            let (field, _) = self.ident()?;
            expr = Expr {
                id: self.ids.fresh(),
                span,
                kind: ExprKind::FieldAccess(Box::new(expr), field),
            };
        }
        Ok(expr)
    }

    fn type_arg(&mut self) -> Result<Type, ParseError> {
        self.expect(Tok::Lt)?;
        let ty = self.type_ref()?;
        self.expect(Tok::Gt)?;
        Ok(ty)
    }

    fn primary_expr(&mut self, in_spec: bool) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(self.mk(span, ExprKind::Literal(Lit::Int(n))))
            }
            Tok::AddressLit(a) => {
                self.bump();
                Ok(self.mk(span, ExprKind::Literal(Lit::Address(format!("0x{a}")))))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr(in_spec)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Amp | Tok::AmpMut => Err(ParseError::unsupported(span, "borrow expression")),
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "true" => Ok(self.mk(span, ExprKind::Literal(Lit::Bool(true)))),
                    "false" => Ok(self.mk(span, ExprKind::Literal(Lit::Bool(false)))),
                    "borrow_global" | "borrow_global_mut" => {
                        let mutable = name == "borrow_global_mut";
                        let ty = self.type_arg()?;
                        self.expect(Tok::LParen)?;
                        let addr = self.expr(in_spec)?;
                        self.expect(Tok::RParen)?;
                        Ok(self.mk(
                            span,
                            ExprKind::BorrowGlobal {
                                mutable,
                                ty,
                                addr: Box::new(addr),
                            },
                        ))
                    }
                    "move_to" => {
                        let ty = self.type_arg()?;
                        self.expect(Tok::LParen)?;
                        let signer = self.expr(in_spec)?;
                        self.expect(Tok::Comma)?;
                        let value = self.expr(in_spec)?;
                        self.expect(Tok::RParen)?;
                        Ok(self.mk(
                            span,
                            ExprKind::MoveTo {
                                ty,
                                signer: Box::new(signer),
                                value: Box::new(value),
                            },
                        ))
                    }
                    "exists" => {
                        let ty = self.type_arg()?;
                        self.expect(Tok::LParen)?;
                        let addr = self.expr(in_spec)?;
                        self.expect(Tok::RParen)?;
                        Ok(self.mk(
                            span,
                            ExprKind::Exists {
                                ty,
                                addr: Box::new(addr),
                            },
                        ))
                    }
                    "global" => {
                        if !in_spec {
                            return Err(ParseError::unsupported(span, "global outside spec"));
                        }
                        let ty = self.type_arg()?;
                        self.expect(Tok::LParen)?;
                        let addr = self.expr(in_spec)?;
                        self.expect(Tok::RParen)?;
                        Ok(self.mk(
                            span,
                            ExprKind::Global {
                                ty,
                                addr: Box::new(addr),
                            },
                        ))
                    }
                    "old" => {
                        if !in_spec {
                            return Err(ParseError::unsupported(span, "old outside spec"));
                        }
                        self.expect(Tok::LParen)?;
                        let inner = self.expr(in_spec)?;
                        self.expect(Tok::RParen)?;
                        Ok(self.mk(span, ExprKind::Old(Box::new(inner))))
                    }
                    "forall" | "choose" | "min" | "TRACE" => {
                        Err(ParseError::unsupported(span, name))
                    }
                    "vector" if matches!(self.peek(), Tok::LBracket) => {
                        self.bump();
                        let mut items = Vec::new();
                        while !matches!(self.peek(), Tok::RBracket) {
                            items.push(self.expr(in_spec)?);
                            if matches!(self.peek(), Tok::Comma) {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                        self.expect(Tok::RBracket)?;
                        Ok(self.mk(span, ExprKind::VectorLit(items)))
                    }
                    _ => {
                        if matches!(self.peek(), Tok::ColonColon) {
                            self.bump();
                            let (fname, _) = self.ident()?;
                            let args = self.call_args(in_spec)?;
                            Ok(self.mk(
                                span,
                                ExprKind::Call {
                                    module: Some(name),
                                    name: fname,
                                    type_args: Vec::new(),
                                    args,
                                },
                            ))
                        } else if matches!(self.peek(), Tok::LParen) {
                            let args = self.call_args(in_spec)?;
                            Ok(self.mk(
                                span,
                                ExprKind::Call {
                                    module: None,
                                    name,
                                    type_args: Vec::new(),
                                    args,
                                },
                            ))
                        } else if matches!(self.peek(), Tok::LBrace)
                            && name.chars().next().is_some_and(|c| c.is_ascii_uppercase())
                        {
                            self.bump();
                            let mut fields = Vec::new();
                            while !matches!(self.peek(), Tok::RBrace) {
                                let (fname, _) = self.ident()?;
                                self.expect(Tok::Colon)?;
                                let value = self.expr(in_spec)?;
                                fields.push((fname, value));
                                if matches!(self.peek(), Tok::Comma) {
                                    self.bump();
                                } else {
                                    break;
                                }
                            }
                            self.expect(Tok::RBrace)?;
                            Ok(self.mk(span, ExprKind::StructLit { name, fields }))
                        } else {
                            Ok(self.mk(span, ExprKind::VarRef(name)))
                        }
                    }
                }
            }
            other => Err(ParseError::syntax(
                span,
                format!("expected expression, found {}", other.describe()),
            )),
        }
    }

    fn call_args(&mut self, in_spec: bool) -> Result<Vec<Expr>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        while !matches!(self.peek(), Tok::RParen) {
            args.push(self.expr(in_spec)?);
            if matches!(self.peek(), Tok::Comma) {
                self.bump();
            } else {
                break;
            }
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn mk(&mut self, span: Span, kind: ExprKind) -> Expr {
        Expr {
            id: self.ids.fresh(),
            span,
            kind,
        }
    }
}

enum StmtOrTail {
    Stmt(Stmt),
    Tail(Expr),
}
