//! Interprocedural def-use analysis: slice a target function's dependency
//! closure (direct and indirect callees, structs, constants) across modules
//! and pack it as a conversation context.

use crate::frontend::ast::*;
use crate::frontend::{pretty_print_function, printer};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// `module::function`, the unit of addressing across a workspace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionPath {
    pub module: String,
    pub name: String,
}

impl FunctionPath {
    pub fn new(module: impl Into<String>, name: impl Into<String>) -> Self {
        FunctionPath {
            module: module.into(),
            name: name.into(),
        }
    }

    pub fn parse(text: &str) -> Option<FunctionPath> {
        let (module, name) = text.split_once("::")?;
        if module.is_empty() || name.is_empty() || name.contains("::") {
            return None;
        }
        Some(FunctionPath::new(module, name))
    }
}

impl fmt::Display for FunctionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.module, self.name)
    }
}

/// A set of parsed modules forming the analysis universe.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    pub modules: Vec<SourceModule>,
}

impl Workspace {
    pub fn new(modules: Vec<SourceModule>) -> Self {
        Workspace { modules }
    }

    pub fn module(&self, name: &str) -> Option<&SourceModule> {
        self.modules.iter().find(|m| m.name == name)
    }

    pub fn function(&self, path: &FunctionPath) -> Option<&FunctionDef> {
        self.module(&path.module)?.function(&path.name)
    }

    /// Resolve a call site `(module_qualifier, fn_name)` seen inside
    /// `from_module` to a workspace path, if the target exists.
    pub fn resolve_call(
        &self,
        from_module: &str,
        qualifier: &Option<String>,
        name: &str,
    ) -> Option<FunctionPath> {
        let module = qualifier.as_deref().unwrap_or(from_module);
        let path = FunctionPath::new(module, name);
        self.function(&path).map(|_| path)
    }
}

#[derive(Debug, Clone, Error)]
pub enum SliceError {
    #[error("target function `{0}` not found in workspace")]
    TargetNotFound(String),
}

/// Transitive dependency closure of one target function.
#[derive(Debug, Clone)]
pub struct DependencyClosure {
    pub target: FunctionPath,
    /// Callees in topological order, callees before callers.
    pub callees: Vec<FunctionPath>,
    /// Call targets that resolved to native functions; included by signature
    /// only.
    pub native_callees: Vec<FunctionPath>,
    /// Call targets that did not resolve inside the workspace.
    pub external_callees: Vec<String>,
    pub structs: Vec<(String, String)>,
    pub constants: Vec<(String, String)>,
    /// Adjacency: caller path -> resolved callee paths, deterministic order.
    pub call_graph: BTreeMap<FunctionPath, Vec<FunctionPath>>,
    /// Set when the reachable subgraph contains a cycle (recursion).
    pub has_cycle: bool,
}

/// Slice the dependency closure of `target`.
///
/// Reachability is a DFS over resolved call edges; callees are emitted in
/// post-order (leaves first) and each function appears once even under
/// recursion. Structs and constants referenced anywhere in the closure are
/// collected with their defining module.
pub fn slice(workspace: &Workspace, target: &FunctionPath) -> Result<DependencyClosure, SliceError> {
    if workspace.function(target).is_none() {
        return Err(SliceError::TargetNotFound(target.to_string()));
    }

    let mut order: Vec<FunctionPath> = Vec::new();
    let mut visited: BTreeSet<FunctionPath> = BTreeSet::new();
    let mut on_stack: BTreeSet<FunctionPath> = BTreeSet::new();
    let mut has_cycle = false;
    let mut call_graph: BTreeMap<FunctionPath, Vec<FunctionPath>> = BTreeMap::new();
    let mut native: BTreeSet<FunctionPath> = BTreeSet::new();
    let mut external: BTreeSet<String> = BTreeSet::new();

    // Iterative DFS with explicit post-order emission.
    enum Frame {
        Enter(FunctionPath),
        Exit(FunctionPath),
    }
    let mut stack = vec![Frame::Enter(target.clone())];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Enter(path) => {
                if visited.contains(&path) {
                    continue;
                }
                visited.insert(path.clone());
                on_stack.insert(path.clone());
                stack.push(Frame::Exit(path.clone()));

                let Some(def) = workspace.function(&path) else {
                    continue;
                };
                let mut edges = Vec::new();
                for (qualifier, name) in def.call_targets() {
                    match workspace.resolve_call(&path.module, &qualifier, &name) {
                        Some(callee_path) => {
                            if !edges.contains(&callee_path) {
                                edges.push(callee_path.clone());
                            }
                            let callee_def = workspace.function(&callee_path).unwrap();
                            if callee_def.attrs.native {
                                native.insert(callee_path);
                            } else if on_stack.contains(&callee_path) {
                                has_cycle = true;
                            } else if !visited.contains(&callee_path) {
                                stack.push(Frame::Enter(callee_path));
                            }
                        }
                        None => {
                            let qual = qualifier.unwrap_or_else(|| path.module.clone());
                            external.insert(format!("{qual}::{name}"));
                        }
                    }
                }
                call_graph.insert(path, edges);
            }
            Frame::Exit(path) => {
                on_stack.remove(&path);
                if path != *target && !native.contains(&path) {
                    order.push(path);
                }
            }
        }
    }

    let mut closure = DependencyClosure {
        target: target.clone(),
        callees: order,
        native_callees: native.into_iter().collect(),
        external_callees: external.into_iter().collect(),
        structs: Vec::new(),
        constants: Vec::new(),
        call_graph,
        has_cycle,
    };
    collect_data_deps(workspace, &mut closure);
    Ok(closure)
}

fn collect_data_deps(workspace: &Workspace, closure: &mut DependencyClosure) {
    let mut structs: BTreeSet<(String, String)> = BTreeSet::new();
    let mut constants: BTreeSet<(String, String)> = BTreeSet::new();

    let mut paths = vec![closure.target.clone()];
    paths.extend(closure.callees.iter().cloned());
    paths.extend(closure.native_callees.iter().cloned());

    for path in &paths {
        let Some(module) = workspace.module(&path.module) else {
            continue;
        };
        let Some(def) = module.function(&path.name) else {
            continue;
        };

        let mut note_type = |ty: &Type| {
            if let Type::Struct { module: qual, name } = ty {
                let owner = qual.clone().unwrap_or_else(|| path.module.clone());
                if workspace
                    .module(&owner)
                    .and_then(|m| m.struct_def(name))
                    .is_some()
                {
                    structs.insert((owner, name.clone()));
                }
            }
        };

        for (_, ty) in &def.params {
            note_type(ty);
        }
        if let Some(ret) = &def.return_type {
            note_type(ret);
        }
        for name in &def.acquires {
            note_type(&Type::strukt(name));
        }
        if let Some(body) = &def.body {
            body.walk_exprs(&mut |e| match &e.kind {
                ExprKind::BorrowGlobal { ty, .. }
                | ExprKind::MoveTo { ty, .. }
                | ExprKind::Exists { ty, .. }
                | ExprKind::Global { ty, .. } => {
                    if let Type::Struct { module: qual, name } = ty {
                        let owner = qual.clone().unwrap_or_else(|| path.module.clone());
                        if workspace
                            .module(&owner)
                            .and_then(|m| m.struct_def(name))
                            .is_some()
                        {
                            structs.insert((owner, name.clone()));
                        }
                    }
                }
                ExprKind::StructLit { name, .. } => {
                    if module.struct_def(name).is_some() {
                        structs.insert((path.module.clone(), name.clone()));
                    }
                }
                ExprKind::VarRef(name) => {
                    if module.constant(name).is_some() {
                        constants.insert((path.module.clone(), name.clone()));
                    }
                }
                _ => {}
            });
        }
    }

    // Follow struct field types one level deep (e.g. Balance holding Coin).
    let mut worklist: Vec<(String, String)> = structs.iter().cloned().collect();
    while let Some((owner, name)) = worklist.pop() {
        let Some(def) = workspace.module(&owner).and_then(|m| m.struct_def(&name)) else {
            continue;
        };
        for (_, ty) in &def.fields {
            if let Type::Struct { module: qual, name: fname } = ty {
                let field_owner = qual.clone().unwrap_or_else(|| owner.clone());
                let key = (field_owner, fname.clone());
                if workspace
                    .module(&key.0)
                    .and_then(|m| m.struct_def(&key.1))
                    .is_some()
                    && structs.insert(key.clone())
                {
                    worklist.push(key);
                }
            }
        }
    }

    closure.structs = structs.into_iter().collect();
    closure.constants = constants.into_iter().collect();
}

/// Which conversation-context variant a closure is packed as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContextMode {
    /// Inlined target (V1).
    Inlined,
    /// Target with dependencies listed alongside (V2).
    Listed,
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextMode::Inlined => write!(f, "v1"),
            ContextMode::Listed => write!(f, "v2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextMetadata {
    pub has_loops: bool,
    pub has_global_mut: bool,
    pub callee_count: usize,
}

/// The unit handed to clause-generation agents: target source plus dependency
/// sources, in either inlined (V1) or listed (V2) form.
#[derive(Debug, Clone)]
pub struct GenerationContext {
    pub mode: ContextMode,
    pub target: FunctionPath,
    pub target_source: String,
    pub dependency_sources: Vec<String>,
    pub metadata: ContextMetadata,
}

/// Pack a closure as a generation context. `Inlined` mode requires the
/// inliner's output function.
pub fn build_context(
    workspace: &Workspace,
    closure: &DependencyClosure,
    mode: ContextMode,
    inlined: Option<&FunctionDef>,
) -> GenerationContext {
    let target_def = workspace
        .function(&closure.target)
        .expect("closure target resolvable");

    let (target_source, effective_target): (String, &FunctionDef) = match mode {
        ContextMode::Inlined => {
            let f = inlined.expect("Inlined mode requires the inliner's output");
            (pretty_print_function(f), f)
        }
        ContextMode::Listed => (pretty_print_function(target_def), target_def),
    };

    let mut dependency_sources = Vec::new();
    for (owner, name) in &closure.structs {
        if let Some(def) = workspace.module(owner).and_then(|m| m.struct_def(name)) {
            dependency_sources.push(print_struct(def));
        }
    }
    for (owner, name) in &closure.constants {
        if let Some(def) = workspace.module(owner).and_then(|m| m.constant(name)) {
            dependency_sources.push(format!(
                "const {}: {} = {};",
                def.name,
                def.ty,
                printer::pretty_print_expr(&def.value)
            ));
        }
    }
    if mode == ContextMode::Listed {
        for path in &closure.callees {
            if let Some(def) = workspace.function(path) {
                dependency_sources.push(pretty_print_function(def));
            }
        }
    }
    // Native and external callees appear by signature only; the context
    // header notes that their bodies are out of reach.
    for path in &closure.native_callees {
        if let Some(def) = workspace.function(path) {
            dependency_sources.push(pretty_print_function(def));
        }
    }

    let mut has_global_mut = effective_target.body.as_ref().map_or(0, Block::count_borrow_global_mut) > 0;
    let mut has_loops = effective_target.has_loops();
    if mode == ContextMode::Listed {
        for path in &closure.callees {
            if let Some(def) = workspace.function(path) {
                has_loops = has_loops || def.has_loops();
                has_global_mut = has_global_mut
                    || def.body.as_ref().map_or(0, Block::count_borrow_global_mut) > 0;
            }
        }
    }

    GenerationContext {
        mode,
        target: closure.target.clone(),
        target_source,
        dependency_sources,
        metadata: ContextMetadata {
            has_loops,
            has_global_mut,
            callee_count: closure.callees.len(),
        },
    }
}

fn print_struct(def: &StructDef) -> String {
    // Reuse the canonical printer by wrapping in a throwaway module.
    let module = SourceModule {
        id: 0,
        span: Default::default(),
        address: "0x0".to_string(),
        name: "wrapper".to_string(),
        structs: vec![def.clone()],
        constants: Vec::new(),
        functions: Vec::new(),
        spec_blocks: Vec::new(),
        next_node_id: 0,
    };
    let printed = crate::frontend::pretty_print(&module);
    // Strip the module wrapper and one indent level.
    printed
        .lines()
        .skip(1)
        .take_while(|l| !l.starts_with('}'))
        .map(|l| l.strip_prefix("    ").unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Verification targets: non-native functions not under `pragma verify = false`.
pub fn select_targets(workspace: &Workspace) -> Vec<FunctionPath> {
    let mut targets = Vec::new();
    for module in &workspace.modules {
        for f in &module.functions {
            if f.attrs.native || f.attrs.pragma_verify_false {
                continue;
            }
            targets.push(FunctionPath::new(module.name.clone(), f.name.clone()));
        }
    }
    targets
}

/// Human-readable closure report for the `analyze` subcommand.
pub fn render_closure_report(closure: &DependencyClosure) -> String {
    let mut out = String::new();
    out.push_str(&format!("target: {}\n", closure.target));
    out.push_str(&format!("cycle: {}\n", closure.has_cycle));
    out.push_str("callees (topological, callees first):\n");
    for c in &closure.callees {
        out.push_str(&format!("  {c}\n"));
    }
    if !closure.native_callees.is_empty() {
        out.push_str("native callees (signature only):\n");
        for c in &closure.native_callees {
            out.push_str(&format!("  {c}\n"));
        }
    }
    if !closure.external_callees.is_empty() {
        out.push_str("external callees (outside workspace, signatures unavailable):\n");
        for c in &closure.external_callees {
            out.push_str(&format!("  {c}\n"));
        }
    }
    out.push_str("structs:\n");
    for (m, s) in &closure.structs {
        out.push_str(&format!("  {m}::{s}\n"));
    }
    out.push_str("constants:\n");
    for (m, c) in &closure.constants {
        out.push_str(&format!("  {m}::{c}\n"));
    }
    out.push_str("call graph:\n");
    for (caller, callees) in &closure.call_graph {
        let list: Vec<String> = callees.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("  {caller} -> [{}]\n", list.join(", ")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn coin_workspace() -> Workspace {
        let src = r#"
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
        Workspace::new(parse_source(src).unwrap())
    }

    #[test]
    fn transfer_closure_has_both_callees_and_structs() {
        let ws = coin_workspace();
        let closure = slice(&ws, &FunctionPath::new("coin", "transfer")).unwrap();
        let names: Vec<String> = closure.callees.iter().map(|c| c.name.clone()).collect();
        assert_eq!(names.len(), 2);
        assert!(names.contains(&"withdraw".to_string()));
        assert!(names.contains(&"deposit".to_string()));
        let structs: Vec<&str> = closure.structs.iter().map(|(_, s)| s.as_str()).collect();
        assert_eq!(structs, ["Balance", "Coin"]);
        assert!(!closure.has_cycle);
    }

    #[test]
    fn leaf_function_has_empty_callees() {
        let ws = coin_workspace();
        let closure = slice(&ws, &FunctionPath::new("coin", "deposit")).unwrap();
        assert!(closure.callees.is_empty());
        let structs: Vec<&str> = closure.structs.iter().map(|(_, s)| s.as_str()).collect();
        assert!(structs.contains(&"Balance"));
    }

    #[test]
    fn cross_module_chain_is_topological() {
        let src = r#"
module 0x1::a {
    public fun f(x: u64): u64 {
        b::g(x)
    }
}
module 0x1::b {
    public fun g(x: u64): u64 {
        h(x) + 1
    }

    fun h(x: u64): u64 {
        x
    }
}
"#;
        let ws = Workspace::new(parse_source(src).unwrap());
        let closure = slice(&ws, &FunctionPath::new("a", "f")).unwrap();
        let names: Vec<String> = closure.callees.iter().map(|c| c.name.clone()).collect();
        assert_eq!(names, ["h", "g"]);
    }

    #[test]
    fn recursion_is_flagged_not_rejected() {
        let src = r#"
module 0x1::r {
    fun f(x: u64): u64 {
        g(x)
    }

    fun g(x: u64): u64 {
        f(x)
    }
}
"#;
        let ws = Workspace::new(parse_source(src).unwrap());
        let closure = slice(&ws, &FunctionPath::new("r", "f")).unwrap();
        assert!(closure.has_cycle);
        assert_eq!(closure.callees.len(), 1);
    }

    #[test]
    fn missing_target_errors() {
        let ws = coin_workspace();
        let err = slice(&ws, &FunctionPath::new("coin", "missing")).unwrap_err();
        assert!(matches!(err, SliceError::TargetNotFound(_)));
    }

    #[test]
    fn select_targets_excludes_native_and_verify_false() {
        let src = r#"
module 0x1::m {
    native fun ffi(x: u64): u64;

    fun a(): u64 {
        0
    }

    fun b(): u64 {
        1
    }

    fun skipped(): u64 {
        2
    }

    spec skipped {
        pragma verify = false;
    }
}
"#;
        let ws = Workspace::new(parse_source(src).unwrap());
        let targets = select_targets(&ws);
        let names: Vec<&str> = targets.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
    }

    #[test]
    fn fig1_module_has_three_targets() {
        let ws = coin_workspace();
        assert_eq!(select_targets(&ws).len(), 3);
    }

    #[test]
    fn listed_context_contains_callees_and_metadata() {
        let ws = coin_workspace();
        let closure = slice(&ws, &FunctionPath::new("coin", "transfer")).unwrap();
        let ctx = build_context(&ws, &closure, ContextMode::Listed, None);
        assert!(ctx.target_source.contains("fun transfer"));
        let joined = ctx.dependency_sources.join("\n");
        assert!(joined.contains("fun withdraw"));
        assert!(joined.contains("fun deposit"));
        assert!(!ctx.metadata.has_loops);
        assert!(ctx.metadata.has_global_mut);
        assert_eq!(ctx.metadata.callee_count, 2);
    }

    #[test]
    fn identical_input_yields_identical_context() {
        let ws = coin_workspace();
        let closure = slice(&ws, &FunctionPath::new("coin", "transfer")).unwrap();
        let a = build_context(&ws, &closure, ContextMode::Listed, None);
        let b = build_context(&ws, &closure, ContextMode::Listed, None);
        assert_eq!(a.target_source, b.target_source);
        assert_eq!(a.dependency_sources, b.dependency_sources);
    }
}
