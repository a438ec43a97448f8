//! AST for the supported Move subset, including specification blocks.
//!
//! Every node carries a stable id and a source span. Structural equality is
//! defined modulo ids and spans; the canonical pretty-printed form is the
//! structural normal form (see [`crate::frontend::printer`]).

use crate::diag::Span;
use std::fmt;

pub type NodeId = u32;

/// Hands out node ids. The parser owns one per parse; transforms that
/// synthesize nodes continue from the module's high-water mark.
#[derive(Debug, Clone, Default)]
pub struct NodeIdGen {
    next: NodeId,
}

impl NodeIdGen {
    pub fn starting_at(next: NodeId) -> Self {
        NodeIdGen { next }
    }

    pub fn fresh(&mut self) -> NodeId {
        let id = self.next;
        self.next += 1;
        id
    }

    pub fn high_water(&self) -> NodeId {
        self.next
    }
}

/// Semantic types in the subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Type {
    U8,
    U64,
    U128,
    Bool,
    Address,
    Signer,
    Vector(Box<Type>),
    Struct {
        module: Option<String>,
        name: String,
    },
    /// Placeholder that unifies with anything (untyped locals, spec results).
    Unknown,
}

impl Type {
    pub fn strukt(name: &str) -> Type {
        Type::Struct {
            module: None,
            name: name.to_string(),
        }
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, Type::U8 | Type::U64 | Type::U128 | Type::Unknown)
    }

    /// Loose unification: `Unknown` absorbs everything.
    pub fn unifies(&self, other: &Type) -> bool {
        match (self, other) {
            (Type::Unknown, _) | (_, Type::Unknown) => true,
            (Type::Vector(a), Type::Vector(b)) => a.unifies(b),
            (Type::Struct { name: a, .. }, Type::Struct { name: b, .. }) => a == b,
            _ => self == other,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::U8 => write!(f, "u8"),
            Type::U64 => write!(f, "u64"),
            Type::U128 => write!(f, "u128"),
            Type::Bool => write!(f, "bool"),
            Type::Address => write!(f, "address"),
            Type::Signer => write!(f, "signer"),
            Type::Vector(inner) => write!(f, "vector<{inner}>"),
            Type::Struct { module, name } => match module {
                Some(m) => write!(f, "{m}::{name}"),
                None => write!(f, "{name}"),
            },
            Type::Unknown => write!(f, "_"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "==",
            BinOp::Neq => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Implies => "==>",
        }
    }

    /// Binding strength, higher binds tighter.
    pub fn precedence(&self) -> u8 {
        match self {
            BinOp::Implies => 1,
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Eq | BinOp::Neq => 4,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 5,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul | BinOp::Div | BinOp::Mod => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Not,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lit {
    /// All integer widths share one representation; the declared or inferred
    /// type disambiguates.
    Int(u128),
    Bool(bool),
    /// Address literal, canonical `0x`-prefixed lowercase hex.
    Address(String),
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub id: NodeId,
    pub span: Span,
    pub kind: ExprKind,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Literal(Lit),
    VarRef(String),
    FieldAccess(Box<Expr>, String),
    Call {
        module: Option<String>,
        name: String,
        type_args: Vec<Type>,
        args: Vec<Expr>,
    },
    BorrowGlobal {
        mutable: bool,
        ty: Type,
        addr: Box<Expr>,
    },
    MoveTo {
        ty: Type,
        signer: Box<Expr>,
        value: Box<Expr>,
    },
    Exists {
        ty: Type,
        addr: Box<Expr>,
    },
    /// Spec-only: state of a global resource.
    Global {
        ty: Type,
        addr: Box<Expr>,
    },
    /// Spec-only: pre-state of an expression.
    Old(Box<Expr>),
    StructLit {
        name: String,
        fields: Vec<(String, Expr)>,
    },
    VectorLit(Vec<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Unary {
        op: UnOp,
        expr: Box<Expr>,
    },
}

#[derive(Debug, Clone)]
pub struct Block {
    pub id: NodeId,
    pub span: Span,
    pub stmts: Vec<Stmt>,
    /// Trailing value expression of the block, if any.
    pub tail: Option<Expr>,
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub id: NodeId,
    pub span: Span,
    pub kind: StmtKind,
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    Let {
        name: String,
        ty: Option<Type>,
        value: Expr,
    },
    Assign {
        target: Expr,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Block,
        else_block: Option<Block>,
    },
    While {
        cond: Expr,
        /// Embedded loop invariants, the only inline spec form.
        invariants: Vec<Expr>,
        body: Block,
    },
    Assert {
        cond: Expr,
        code: Expr,
    },
    Return(Option<Expr>),
    Abort(Expr),
    Expr(Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ability {
    Key,
    Store,
    Copy,
    Drop,
}

impl Ability {
    pub fn keyword(&self) -> &'static str {
        match self {
            Ability::Key => "key",
            Ability::Store => "store",
            Ability::Copy => "copy",
            Ability::Drop => "drop",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StructDef {
    pub id: NodeId,
    pub span: Span,
    pub name: String,
    pub abilities: Vec<Ability>,
    pub fields: Vec<(String, Type)>,
}

#[derive(Debug, Clone)]
pub struct ConstDef {
    pub id: NodeId,
    pub span: Span,
    pub name: String,
    pub ty: Type,
    pub value: Expr,
}

#[derive(Debug, Clone, Default)]
pub struct FnAttrs {
    pub native: bool,
    /// Set when the function's spec block carries `pragma verify = false`.
    pub pragma_verify_false: bool,
}

#[derive(Debug, Clone)]
pub struct FunctionDef {
    pub id: NodeId,
    pub span: Span,
    pub name: String,
    pub visibility: Visibility,
    pub params: Vec<(String, Type)>,
    pub return_type: Option<Type>,
    pub acquires: Vec<String>,
    /// Absent iff the function is native.
    pub body: Option<Block>,
    pub attrs: FnAttrs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindingKind {
    Let,
    LetPost,
}

#[derive(Debug, Clone)]
pub struct Binding {
    pub id: NodeId,
    pub span: Span,
    pub kind: BindingKind,
    pub name: String,
    pub expr: Expr,
}

/// Canonical clause ordering is the declaration order of this enum:
/// requires, then modifies, aborts_if, ensures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClauseKind {
    Requires,
    Modifies,
    AbortsIf,
    Ensures,
}

impl ClauseKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            ClauseKind::Requires => "requires",
            ClauseKind::Modifies => "modifies",
            ClauseKind::AbortsIf => "aborts_if",
            ClauseKind::Ensures => "ensures",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Clause {
    pub id: NodeId,
    pub span: Span,
    pub kind: ClauseKind,
    pub expr: Expr,
    pub abstract_flag: bool,
}

/// A helper function declared inside a spec block. A missing body makes it
/// an uninterpreted function.
#[derive(Debug, Clone)]
pub struct SpecFun {
    pub id: NodeId,
    pub span: Span,
    pub name: String,
    pub params: Vec<(String, Type)>,
    pub return_type: Type,
    pub body: Option<Expr>,
}

#[derive(Debug, Clone)]
pub struct SpecBlock {
    pub id: NodeId,
    pub span: Span,
    pub target_fn: String,
    pub pragmas: Vec<(String, String)>,
    pub bindings: Vec<Binding>,
    pub clauses: Vec<Clause>,
    pub helper_funs: Vec<SpecFun>,
}

impl SpecBlock {
    pub fn empty(target_fn: impl Into<String>) -> Self {
        SpecBlock {
            id: 0,
            span: Span::default(),
            target_fn: target_fn.into(),
            pragmas: Vec::new(),
            bindings: Vec::new(),
            clauses: Vec::new(),
            helper_funs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SourceModule {
    pub id: NodeId,
    pub span: Span,
    pub address: String,
    pub name: String,
    pub structs: Vec<StructDef>,
    pub constants: Vec<ConstDef>,
    pub functions: Vec<FunctionDef>,
    pub spec_blocks: Vec<SpecBlock>,
    /// High-water mark of node ids; transforms allocate fresh ids from here.
    pub next_node_id: NodeId,
}

impl SourceModule {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut FunctionDef> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn spec_for(&self, fn_name: &str) -> Option<&SpecBlock> {
        self.spec_blocks.iter().find(|s| s.target_fn == fn_name)
    }

    pub fn struct_def(&self, name: &str) -> Option<&StructDef> {
        self.structs.iter().find(|s| s.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<&ConstDef> {
        self.constants.iter().find(|c| c.name == name)
    }
}

// --- traversal helpers -----------------------------------------------------

impl Expr {
    /// Visit this expression and all sub-expressions, preorder.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Literal(_) | ExprKind::VarRef(_) => {}
            ExprKind::FieldAccess(base, _) => base.walk(f),
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
            ExprKind::BorrowGlobal { addr, .. }
            | ExprKind::Exists { addr, .. }
            | ExprKind::Global { addr, .. } => addr.walk(f),
            ExprKind::MoveTo { signer, value, .. } => {
                signer.walk(f);
                value.walk(f);
            }
            ExprKind::Old(inner) => inner.walk(f),
            ExprKind::StructLit { fields, .. } => fields.iter().for_each(|(_, e)| e.walk(f)),
            ExprKind::VectorLit(items) => items.iter().for_each(|e| e.walk(f)),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            ExprKind::Unary { expr, .. } => expr.walk(f),
        }
    }
}

impl Block {
    pub fn walk_exprs<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        for stmt in &self.stmts {
            stmt.walk_exprs(f);
        }
        if let Some(tail) = &self.tail {
            tail.walk(f);
        }
    }

    pub fn walk_stmts<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        for stmt in &self.stmts {
            f(stmt);
            match &stmt.kind {
                StmtKind::If {
                    then_block,
                    else_block,
                    ..
                } => {
                    then_block.walk_stmts(f);
                    if let Some(e) = else_block {
                        e.walk_stmts(f);
                    }
                }
                StmtKind::While { body, .. } => body.walk_stmts(f),
                _ => {}
            }
        }
    }

    pub fn contains_while(&self) -> bool {
        let mut found = false;
        self.walk_stmts(&mut |s| {
            if matches!(s.kind, StmtKind::While { .. }) {
                found = true;
            }
        });
        found
    }

    pub fn count_borrow_global_mut(&self) -> usize {
        let mut n = 0;
        self.walk_exprs(&mut |e| {
            if matches!(e.kind, ExprKind::BorrowGlobal { mutable: true, .. }) {
                n += 1;
            }
        });
        n
    }
}

impl Stmt {
    pub fn walk_exprs<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match &self.kind {
            StmtKind::Let { value, .. } => value.walk(f),
            StmtKind::Assign { target, value } => {
                target.walk(f);
                value.walk(f);
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                cond.walk(f);
                then_block.walk_exprs(f);
                if let Some(e) = else_block {
                    e.walk_exprs(f);
                }
            }
            StmtKind::While {
                cond,
                invariants,
                body,
            } => {
                cond.walk(f);
                invariants.iter().for_each(|i| i.walk(f));
                body.walk_exprs(f);
            }
            StmtKind::Assert { cond, code } => {
                cond.walk(f);
                code.walk(f);
            }
            StmtKind::Return(Some(e)) | StmtKind::Abort(e) | StmtKind::Expr(e) => e.walk(f),
            StmtKind::Return(None) => {}
        }
    }
}

impl FunctionDef {
    pub fn has_loops(&self) -> bool {
        self.body.as_ref().is_some_and(|b| b.contains_while())
    }

    /// Direct call targets `(module, name)` appearing in the body.
    pub fn call_targets(&self) -> Vec<(Option<String>, String)> {
        let mut out = Vec::new();
        if let Some(body) = &self.body {
            body.walk_exprs(&mut |e| {
                if let ExprKind::Call { module, name, .. } = &e.kind {
                    out.push((module.clone(), name.clone()));
                }
            });
        }
        out
    }
}
