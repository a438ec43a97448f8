//! Source spans and diagnostics shared across the pipeline.

use std::fmt;

/// A point in the input text (1-based line and column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

/// Well-formedness finding codes surfaced by `check_wellformed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagCode {
    UnknownName,
    UnknownFunction,
    UnknownStruct,
    ArityMismatch,
    TypeMismatch,
    MissingAcquires,
    DuplicateName,
    SpecTargetMissing,
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiagCode::UnknownName => "UnknownName",
            DiagCode::UnknownFunction => "UnknownFunction",
            DiagCode::UnknownStruct => "UnknownStruct",
            DiagCode::ArityMismatch => "ArityMismatch",
            DiagCode::TypeMismatch => "TypeMismatch",
            DiagCode::MissingAcquires => "MissingAcquires",
            DiagCode::DuplicateName => "DuplicateName",
            DiagCode::SpecTargetMissing => "SpecTargetMissing",
        };
        write!(f, "{s}")
    }
}

/// A single finding, rendered as `file:line:col: severity: message`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub span: Span,
    pub severity: Severity,
    pub code: DiagCode,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            span,
            severity: Severity::Error,
            code,
            message: message.into(),
        }
    }

    pub fn render(&self, file: &str) -> String {
        format!(
            "{}:{}:{}: {}: {} [{}]",
            file, self.span.line, self.span.col, self.severity, self.message, self.code
        )
    }
}
