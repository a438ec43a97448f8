//! Specification generation pipeline for a Move-language subset: parse and
//! analyze target functions, dispatch clause-generation agents against a chat
//! backend, verify candidate specifications with a prover, and refine them in
//! a bounded feedback loop with mutation-based specification coverage.

pub mod agents;
pub mod coverage;
pub mod deps;
pub mod ensemble;
pub mod diag;
pub mod frontend;
pub mod inline;
pub mod llm;
pub mod orchestrator;
pub mod prover;
