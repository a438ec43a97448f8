//! Lexing, parsing, well-formedness checking, and canonical pretty-printing
//! for the supported Move subset (including specification blocks).

pub mod ast;
pub mod check;
pub mod lexer;
pub mod parser;
pub mod printer;

pub use ast::*;
pub use check::{check_module, check_wellformed};
pub use parser::{parse_function_snippet, parse_module, parse_source, parse_spec_snippet};
pub use printer::{
    exprs_structurally_equal, modules_structurally_equal, pretty_print, pretty_print_expr,
    pretty_print_function, pretty_print_spec_block,
};

use crate::diag::Span;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{span}: syntax error: {message}")]
    Syntax { span: Span, message: String },
    #[error("{span}: unsupported construct: {construct}")]
    UnsupportedConstruct { span: Span, construct: String },
}

impl ParseError {
    pub fn syntax(span: Span, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            span,
            message: message.into(),
        }
    }

    pub fn unsupported(span: Span, construct: impl Into<String>) -> Self {
        ParseError::UnsupportedConstruct {
            span,
            construct: construct.into(),
        }
    }

    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. } => *span,
            ParseError::UnsupportedConstruct { span, .. } => *span,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn parses_coin_module() {
        let module = parse_module(COIN).unwrap();
        assert_eq!(module.name, "coin");
        let fn_names: Vec<&str> = module.functions.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(fn_names, ["transfer", "withdraw", "deposit"]);
        let struct_names: Vec<&str> = module.structs.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(struct_names, ["Coin", "Balance"]);
    }

    #[test]
    fn empty_input_is_a_syntax_error() {
        let err = parse_source("").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
        assert!(err.to_string().contains("expected module"));
    }

    #[test]
    fn two_module_file_with_cross_module_call() {
        let src = r#"
module 0x1::a {
    public fun f(x: u64): u64 {
        b::g(x)
    }
}
module 0x1::b {
    public fun g(x: u64): u64 {
        x + 1
    }
}
"#;
        let modules = parse_source(src).unwrap();
        assert_eq!(modules.len(), 2);
        let f = modules[0].function("f").unwrap();
        let calls = f.call_targets();
        assert_eq!(calls, [(Some("b".to_string()), "g".to_string())]);
    }

    #[test]
    fn roundtrip_is_a_fixpoint() {
        let once = parse_module(COIN).unwrap();
        let printed = pretty_print(&once);
        let twice = parse_module(&printed).unwrap();
        assert!(modules_structurally_equal(&once, &twice));
        assert_eq!(printed, pretty_print(&twice));
    }

    #[test]
    fn loop_invariants_roundtrip_inside_body() {
        let src = r#"
module 0x1::looping {
    fun sum_to(n: u64): u64 {
        let i = 0;
        let total = 0;
        while (i < n) {
            spec {
                invariant i <= n;
                invariant total >= i;
            };
            total = total + i;
            i = i + 1;
        }
        total
    }
}
"#;
        let module = parse_module(src).unwrap();
        let f = module.function("sum_to").unwrap();
        let mut inv_count = 0;
        f.body.as_ref().unwrap().walk_stmts(&mut |s| {
            if let StmtKind::While { invariants, .. } = &s.kind {
                inv_count = invariants.len();
            }
        });
        assert_eq!(inv_count, 2);
        let printed = pretty_print(&module);
        assert!(printed.contains("invariant i <= n;"));
        let again = parse_module(&printed).unwrap();
        assert!(modules_structurally_equal(&module, &again));
    }

    #[test]
    fn spec_block_roundtrips() {
        let src = r#"
module 0x1::coin {
    struct Balance has key {
        value: u64,
    }

    fun withdraw(addr: address, amount: u64) acquires Balance {
        let b = borrow_global_mut<Balance>(addr);
        assert!(b.value >= amount, 1);
        b.value = b.value - amount;
    }

    spec withdraw {
        let balance = global<Balance>(addr).value;
        let post balance_post = global<Balance>(addr).value;
        modifies global<Balance>(addr);
        aborts_if balance < amount;
        ensures balance_post == balance - amount;
    }
}
"#;
        let module = parse_module(src).unwrap();
        let block = module.spec_for("withdraw").unwrap();
        assert_eq!(block.bindings.len(), 2);
        assert_eq!(block.bindings[1].kind, BindingKind::LetPost);
        assert_eq!(block.clauses.len(), 3);
        let printed = pretty_print(&module);
        let again = parse_module(&printed).unwrap();
        assert!(modules_structurally_equal(&module, &again));
    }

    #[test]
    fn abstract_clause_and_uninterpreted_helper() {
        let src = r#"
module 0x1::math {
    fun exp(x: u64): u64 {
        x
    }

    spec exp {
        aborts_if [abstract] false;
        ensures [abstract] result == spec_exp(x);
        fun spec_exp(x: u64): u64;
    }
}
"#;
        let module = parse_module(src).unwrap();
        let block = module.spec_for("exp").unwrap();
        assert!(block.clauses.iter().all(|c| c.abstract_flag));
        assert!(block.helper_funs[0].body.is_none());
        let printed = pretty_print(&module);
        assert!(printed.contains("ensures [abstract] result == spec_exp(x);"));
        let again = parse_module(&printed).unwrap();
        assert!(modules_structurally_equal(&module, &again));
    }

    #[test]
    fn unsupported_constructs_are_flagged_with_span() {
        for (src, construct) in [
            ("module 0x1::m { use 0x1::other; }", "use"),
            (
                "module 0x1::m { fun f<T>(x: u64): u64 { x } }",
                "type parameters",
            ),
            (
                "module 0x1::m { fun f(x: u64): u64 { loop { } } }",
                "loop",
            ),
        ] {
            let err = parse_source(src).unwrap_err();
            match err {
                ParseError::UnsupportedConstruct { construct: c, span } => {
                    assert_eq!(c, construct);
                    assert_eq!(span.line, 1);
                }
                other => panic!("expected UnsupportedConstruct, got {other:?}"),
            }
        }
    }

    #[test]
    fn wellformed_coin_is_clean() {
        let module = parse_module(COIN).unwrap();
        assert!(check_module(&module).is_empty());
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let src = r#"
module 0x1::m {
    fun callee(x: u64): u64 {
        x
    }

    fun caller(): u64 {
        callee(1, 2)
    }
}
"#;
        let module = parse_module(src).unwrap();
        let diags = check_module(&module);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, crate::diag::DiagCode::ArityMismatch);
    }

    #[test]
    fn missing_acquires_is_reported() {
        let src = r#"
module 0x1::m {
    struct Balance has key {
        value: u64,
    }

    fun touch(addr: address) {
        let b = borrow_global_mut<Balance>(addr);
        b.value = 0;
    }
}
"#;
        let module = parse_module(src).unwrap();
        let diags = check_module(&module);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, crate::diag::DiagCode::MissingAcquires);
        assert!(diags[0].message.contains("acquires Balance"));
    }

    #[test]
    fn pragma_verify_false_sets_fn_attr() {
        let src = r#"
module 0x1::m {
    fun skipped(): u64 {
        0
    }

    spec skipped {
        pragma verify = false;
    }
}
"#;
        let module = parse_module(src).unwrap();
        assert!(module.function("skipped").unwrap().attrs.pragma_verify_false);
    }

    #[test]
    fn diagnostic_spans_lie_within_input() {
        let src = "module 0x1::m {\n    fun f(): u64 {\n        unknown_var\n    }\n}\n";
        let module = parse_module(src).unwrap();
        let diags = check_module(&module);
        assert!(!diags.is_empty());
        let line_count = src.lines().count() as u32;
        for d in &diags {
            assert!(d.span.line >= 1 && d.span.line <= line_count);
        }
    }
}
