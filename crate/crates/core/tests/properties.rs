//! Randomized invariants, run under proptest's default 256 cases each.

use msgpipe::agents::{sanitize_line, ClauseClass, ClauseSnippet};
use msgpipe::ensemble::merge;
use msgpipe::frontend::{parse_spec_snippet, pretty_print_spec_block, SpecBlock};
use msgpipe::llm::ChatRequest;
use proptest::prelude::*;

// --- chat-request digests ---------------------------------------------------

fn arb_messages() -> impl Strategy<Value = Vec<(bool, String)>> {
    // (is_user, content); first entry plays the system role.
    prop::collection::vec(("[a-z :\\n]{1,40}").prop_map(|s| (true, s)), 1..4)
}

proptest! {
    /// Same request, same digest — across construction order and runs.
    #[test]
    fn digest_is_stable(model in "[a-z0-9-]{1,12}", sys in "[a-z ]{1,30}", user in "[a-z ]{1,60}") {
        let a = ChatRequest::new(&model, &sys, &user);
        let b = ChatRequest::new(&model, &sys, &user);
        prop_assert_eq!(a.digest(), b.digest());
    }

    /// Moving a byte across a message boundary changes the digest: the
    /// canonical form length-prefixes each message, so concatenation tricks
    /// cannot collide.
    #[test]
    fn digest_resists_boundary_shifts(sys in "[a-z]{2,20}", user in "[a-z]{2,20}") {
        let a = ChatRequest::new("m", &sys, &user);
        let shifted_sys = format!("{sys}{}", &user[..1]);
        let shifted_user = user[1..].to_string();
        let b = ChatRequest::new("m", &shifted_sys, &shifted_user);
        prop_assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn digest_depends_on_every_field(sys in "[a-z]{2,20}", user in "[a-z]{2,20}") {
        let base = ChatRequest::new("m", &sys, &user);
        prop_assert_ne!(base.digest(), ChatRequest::new("m2", &sys, &user).digest());
        prop_assert_ne!(base.digest(), ChatRequest::new("m", format!("{sys}x"), &user).digest());
        prop_assert_ne!(base.digest(), ChatRequest::new("m", &sys, format!("{user}x")).digest());
        let _ = arb_messages();
    }
}

// --- sanitizer --------------------------------------------------------------

proptest! {
    /// sanitize_line is idempotent and always yields at most one trailing
    /// semicolon.
    #[test]
    fn sanitize_is_idempotent(line in "[ `a-z0-9_<>().;=+-]{0,60}") {
        let once = sanitize_line(&line);
        let twice = sanitize_line(&once);
        prop_assert_eq!(&once, &twice);
        if !once.is_empty() {
            prop_assert!(once.ends_with(';'));
            prop_assert!(!once.ends_with(";;"));
            prop_assert!(!once.contains('`'));
        }
    }
}

// --- expression round-trips -------------------------------------------------

/// Random arithmetic/boolean expression text in the supported subset.
fn arb_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        "[a-z][a-z0-9_]{0,6}".prop_map(|v| v),
        (0u64..1000).prop_map(|n| n.to_string()),
        Just("result".to_string()),
        Just("global<Balance>(addr).value".to_string()),
        Just("old(global<Balance>(addr).value)".to_string()),
        Just("exists<Balance>(addr)".to_string()),
    ];
    leaf.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} + {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} * {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} <= {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} == {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} && {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) ==> ({b})")),
            inner.clone().prop_map(|a| format!("({a})")),
            inner.clone().prop_map(|a| format!("old({a})")),
        ]
    })
}

proptest! {
    /// parse -> print -> parse is a fixpoint for generated ensures clauses.
    #[test]
    fn clause_roundtrip_fixpoint(expr in arb_expr()) {
        let text = format!("ensures {expr};");
        let Ok((_, clauses, _)) = parse_spec_snippet(&text) else {
            // Generated text may collide with reserved forms; skip those.
            return Ok(());
        };
        prop_assume!(clauses.len() == 1);
        let mut block = SpecBlock::empty("f");
        block.clauses = clauses;
        let printed = pretty_print_spec_block(&block);
        let line = printed.lines().find(|l| l.trim_start().starts_with("ensures"))
            .expect("printed ensures line").trim().to_string();
        let (_, reparsed, _) = parse_spec_snippet(&line).expect("printed clause reparses");
        let mut block2 = SpecBlock::empty("f");
        block2.clauses = reparsed;
        prop_assert_eq!(printed, pretty_print_spec_block(&block2));
    }
}

// --- ensembler --------------------------------------------------------------

fn snippet(class: ClauseClass, text: &str) -> Option<ClauseSnippet> {
    let (bindings, clauses, _) = parse_spec_snippet(text).ok()?;
    let mut s = ClauseSnippet::empty(class);
    s.bindings = bindings;
    s.clauses = clauses;
    Some(s)
}

proptest! {
    /// Merging is insensitive to snippet order up to canonical form.
    #[test]
    fn merge_is_order_insensitive(perm in Just(()).prop_perturb(|_, mut rng| rng.random::<u64>())) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let parts = vec![
            snippet(ClauseClass::AbortsIf, "aborts_if amount == 0;").unwrap(),
            snippet(ClauseClass::Modifies, "modifies global<Balance>(addr);").unwrap(),
            snippet(
                ClauseClass::Ensures,
                "let bal = global<Balance>(addr).value;\nensures bal >= amount;",
            )
            .unwrap(),
        ];
        let baseline = merge("f", &parts).unwrap();
        let mut shuffled = parts.clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm);
        shuffled.shuffle(&mut rng);
        let merged = merge("f", &shuffled).unwrap();
        prop_assert_eq!(
            pretty_print_spec_block(&baseline),
            pretty_print_spec_block(&merged)
        );
    }
}
