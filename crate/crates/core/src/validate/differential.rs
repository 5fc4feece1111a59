use std::path::Path;
use std::process::Command;
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;

use super::{DifferentialVerdict, ValidationError};
use crate::process::{run_with_timeout, RunError};

pub const DEFAULT_REL_TOLERANCE: f64 = 1e-6;
/// Absolute slack for values that should be zero but carry rounding noise.
const ABS_FLOOR: f64 = 1e-12;
pub(crate) const ELAPSED_PREFIX: &str = "ELAPSED_SECONDS=";

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?").unwrap());

#[derive(Debug, Clone)]
pub struct RunInput {
    pub args: Vec<String>,
    pub timeout: Duration,
    pub rel_tolerance: f64,
}

impl Default for RunInput {
    fn default() -> Self {
        Self {
            args: Vec::new(),
            timeout: Duration::from_secs(120),
            rel_tolerance: DEFAULT_REL_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifferentialResult {
    pub verdict: DifferentialVerdict,
    pub threads_tested: Vec<usize>,
    /// First divergence or failure, for logs.
    pub detail: Option<String>,
}

/// Canonical output lines: CRLF folded, trailing whitespace and trailing
/// blank lines removed, timing lines dropped.
pub fn normalize_output(text: &str) -> Vec<String> {
    let mut lines: Vec<String> = text
        .replace("\r\n", "\n")
        .replace('\r', "\n")
        .lines()
        .map(|l| l.trim_end().to_string())
        .filter(|l| !l.starts_with(ELAPSED_PREFIX))
        .collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

fn numbers_match(a: &str, b: &str, rel_tol: f64) -> bool {
    if a == b {
        return true;
    }
    let is_int = |s: &str| !s.contains(['.', 'e', 'E']);
    if is_int(a) && is_int(b) {
        // integer results of a correct parallelization are exact
        let parse = |s: &str| s.trim_start_matches('+').parse::<i128>().ok();
        return parse(a).is_some() && parse(a) == parse(b);
    }
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => (x - y).abs() <= rel_tol * x.abs().max(y.abs()) + ABS_FLOOR,
        _ => false,
    }
}

fn lines_match(a: &str, b: &str, rel_tol: f64) -> bool {
    let na: Vec<_> = NUMBER.find_iter(a).collect();
    let nb: Vec<_> = NUMBER.find_iter(b).collect();
    if na.len() != nb.len() {
        return false;
    }
    let (mut pa, mut pb) = (0, 0);
    for (x, y) in na.iter().zip(&nb) {
        if a[pa..x.start()] != b[pb..y.start()] || !numbers_match(x.as_str(), y.as_str(), rel_tol) {
            return false;
        }
        pa = x.end();
        pb = y.end();
    }
    a[pa..] == b[pb..]
}

/// Compares two program outputs: text exactly, integers exactly, other
/// numbers within `rel_tol` relative difference.
pub fn outputs_equivalent(a: &str, b: &str, rel_tol: f64) -> bool {
    let (la, lb) = (normalize_output(a), normalize_output(b));
    la.len() == lb.len() && la.iter().zip(&lb).all(|(x, y)| lines_match(x, y, rel_tol))
}

fn run_once(binary: &Path, threads: Option<usize>, input: &RunInput) -> Result<Result<String, String>, ValidationError> {
    let mut cmd = Command::new(binary);
    cmd.args(&input.args);
    cmd.env("OMP_NUM_THREADS", threads.unwrap_or(1).to_string());
    match run_with_timeout(&mut cmd, input.timeout) {
        Ok(out) if out.success() => Ok(Ok(out.stdout)),
        Ok(out) => Ok(Err(format!("exit status {}: {}", out.status, out.stderr.trim()))),
        Err(RunError::TimedOut { timeout, .. }) => Ok(Err(format!("timed out after {timeout:?}"))),
        Err(RunError::NotFound { program }) => Err(ValidationError::Environment(format!("binary {program} not found"))),
        Err(e) => Ok(Err(e.to_string())),
    }
}

/// Runs the serial reference once and the parallel binary once per thread
/// count (via `OMP_NUM_THREADS`); `Pass` iff every parallel output matches.
pub fn differential_validate(
    serial_binary: &Path,
    parallel_binary: &Path,
    thread_counts: &[usize],
    input: &RunInput,
) -> Result<DifferentialResult, ValidationError> {
    if thread_counts.is_empty() || thread_counts.contains(&0) {
        return Err(ValidationError::InvalidInput("thread counts must be positive and non-empty".into()));
    }
    let result = |verdict, tested: &[usize], detail: Option<String>| DifferentialResult {
        verdict,
        threads_tested: tested.to_vec(),
        detail,
    };
    let reference = match run_once(serial_binary, None, input)? {
        Ok(out) => out,
        Err(why) => return Ok(result(DifferentialVerdict::RuntimeError, &[], Some(format!("serial reference: {why}")))),
    };
    for (i, &t) in thread_counts.iter().enumerate() {
        let tested = &thread_counts[..=i];
        match run_once(parallel_binary, Some(t), input)? {
            Err(why) => {
                return Ok(result(DifferentialVerdict::RuntimeError, tested, Some(format!("{t} threads: {why}"))))
            }
            Ok(out) if !outputs_equivalent(&reference, &out, input.rel_tolerance) => {
                return Ok(result(
                    DifferentialVerdict::Mismatch,
                    tested,
                    Some(format!("{t} threads: output differs from serial")),
                ))
            }
            Ok(_) => {}
        }
    }
    Ok(result(DifferentialVerdict::Pass, thread_counts, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_output("a  \r\nb\t\nELAPSED_SECONDS=0.5\n\n\n"),
            vec!["a".to_string(), "b".to_string()]
        );
    }

    #[test]
    fn float_tolerance() {
        assert!(outputs_equivalent("sum = 0.5\n", "sum = 0.500000000001\n", 1e-6));
        assert!(outputs_equivalent("x=1.000000000001e3", "x=1000", 1e-6));
        assert!(!outputs_equivalent("sum = 0.5\n", "sum = 0.51\n", 1e-6));
        assert!(outputs_equivalent("0.000000", "-0.000000", 1e-6));
        assert!(outputs_equivalent("r 1e-17", "r 0.0", 1e-6));
    }

    #[test]
    fn integers_exact() {
        assert!(outputs_equivalent("count 4999950000", "count 4999950000", 1e-6));
        assert!(!outputs_equivalent("count 4999950000", "count 4999949999", 1e-6));
    }

    #[test]
    fn text_must_match() {
        assert!(!outputs_equivalent("sum 1", "total 1", 1e-6));
        assert!(!outputs_equivalent("a\nb", "a", 1e-6));
        assert!(outputs_equivalent("a\nb\n", "a\nb", 1e-6));
    }

    #[test]
    fn shell_programs() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, body: &str| {
            let p = dir.path().join(name);
            std::fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
            p
        };
        let serial = write("serial", "echo 'sum=10.0'");
        let same = write("same", "echo 'sum=10.000000001'; echo ELAPSED_SECONDS=0.1");
        let racy = write("racy", "if [ \"$OMP_NUM_THREADS\" = 8 ]; then echo sum=9.0; else echo sum=10.0; fi");
        let crash = write("crash", "exit 4");
        let input = RunInput::default();

        let r = differential_validate(&serial, &same, &[1, 8], &input).unwrap();
        assert_eq!(r.verdict, DifferentialVerdict::Pass);
        assert_eq!(r.threads_tested, vec![1, 8]);

        let r = differential_validate(&serial, &racy, &[1, 8], &input).unwrap();
        assert_eq!(r.verdict, DifferentialVerdict::Mismatch);

        let r = differential_validate(&serial, &crash, &[1], &input).unwrap();
        assert_eq!(r.verdict, DifferentialVerdict::RuntimeError);

        let self_check = differential_validate(&racy, &racy, &[1, 2], &input).unwrap();
        assert_eq!(self_check.verdict, DifferentialVerdict::Pass);

        assert!(differential_validate(&serial, &same, &[], &input).is_err());
    }
}
