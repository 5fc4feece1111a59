//! Compile gating, failure classification and differential testing of
//! generated OpenMP programs.

mod cases;
mod classify;
mod compile;
mod differential;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cases::{CaseEntry, CaseManifest};
pub use classify::{classify_failure, CLASSIFIER_RULES};
pub use compile::{compile_gate, CompileOutcome, CompilerConfig, DEFAULT_COMPILE_TEMPLATE};
pub use differential::{
    differential_validate, normalize_output, outputs_equivalent, DifferentialResult, RunInput,
    DEFAULT_REL_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum ValidationError {
    /// The host cannot run the stage at all (missing compiler, unwritable work dir).
    #[error("environment error: {0}")]
    Environment(String),
    #[error("compilation exceeded {0:?}")]
    CompileTimeout(std::time::Duration),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("case manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureCategory {
    UndeclaredInClause,
    InvalidReduction,
    AtomicMisuse,
    DefaultNoneViolation,
    SyntaxError,
    CollapseMisuse,
    IteratorLimitation,
    DeprecatedConstruct,
    OtherCompileError,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 9] = [
        Self::UndeclaredInClause,
        Self::InvalidReduction,
        Self::AtomicMisuse,
        Self::DefaultNoneViolation,
        Self::SyntaxError,
        Self::CollapseMisuse,
        Self::IteratorLimitation,
        Self::DeprecatedConstruct,
        Self::OtherCompileError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::UndeclaredInClause => "UndeclaredInClause",
            Self::InvalidReduction => "InvalidReduction",
            Self::AtomicMisuse => "AtomicMisuse",
            Self::DefaultNoneViolation => "DefaultNoneViolation",
            Self::SyntaxError => "SyntaxError",
            Self::CollapseMisuse => "CollapseMisuse",
            Self::IteratorLimitation => "IteratorLimitation",
            Self::DeprecatedConstruct => "DeprecatedConstruct",
            Self::OtherCompileError => "OtherCompileError",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown failure category {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DifferentialVerdict {
    Pass,
    Mismatch,
    RuntimeError,
    Skipped,
}

/// Per-case outcome of the compile gate and the differential test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub case_id: String,
    pub compile_ok: bool,
    pub failure_category: Option<FailureCategory>,
    pub diagnostics: String,
    pub differential_verdict: DifferentialVerdict,
    pub threads_tested: Vec<usize>,
    pub excluded_unparallelizable: bool,
}

impl ValidationReport {
    pub fn excluded(case_id: impl Into<String>) -> Self {
        Self {
            case_id: case_id.into(),
            compile_ok: false,
            failure_category: None,
            diagnostics: String::new(),
            differential_verdict: DifferentialVerdict::Skipped,
            threads_tested: Vec::new(),
            excluded_unparallelizable: true,
        }
    }

    /// Checks the cross-field invariants.
    pub fn check(&self) -> Result<(), String> {
        if self.compile_ok && self.failure_category.is_some() {
            return Err(format!("{}: compiled case carries a failure category", self.case_id));
        }
        if self.differential_verdict != DifferentialVerdict::Skipped && !self.compile_ok {
            return Err(format!("{}: differential verdict without a successful compile", self.case_id));
        }
        Ok(())
    }
}
