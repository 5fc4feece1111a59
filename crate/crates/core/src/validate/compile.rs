use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use super::ValidationError;
use crate::process::{run_with_timeout, RunError};

pub const DEFAULT_COMPILE_TEMPLATE: &str = "g++ -fopenmp -std=c++17 -O2 {src} -o {bin}";

const SOURCE_NAME: &str = "main.cc";
const BINARY_NAME: &str = "main";

/// Compiler command template: whitespace-separated words with `{src}` and `{bin}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompilerConfig {
    words: Vec<String>,
    pub timeout: Duration,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_COMPILE_TEMPLATE).expect("default template is valid")
    }
}

impl CompilerConfig {
    pub fn parse(template: &str) -> Result<Self, ValidationError> {
        let words: Vec<String> = template.split_whitespace().map(str::to_string).collect();
        if words.is_empty() {
            return Err(ValidationError::InvalidInput("empty compiler template".into()));
        }
        for ph in ["{src}", "{bin}"] {
            if !words.iter().any(|w| w.contains(ph)) {
                return Err(ValidationError::InvalidInput(format!("compiler template lacks {ph}")));
            }
        }
        Ok(Self {
            words,
            timeout: Duration::from_secs(60),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Same command with every OpenMP-enabling flag removed.
    pub fn without_openmp(&self) -> Self {
        let words = self
            .words
            .iter()
            .filter(|w| !matches!(w.as_str(), "-fopenmp" | "-qopenmp" | "-openmp" | "-mp") && !w.starts_with("-fopenmp="))
            .cloned()
            .collect();
        Self {
            words,
            timeout: self.timeout,
        }
    }

    pub fn program(&self) -> &str {
        &self.words[0]
    }

    pub fn template(&self) -> String {
        self.words.join(" ")
    }

    fn command(&self, src: &str, bin: &str) -> Command {
        let args: Vec<String> = self
            .words
            .iter()
            .map(|w| w.replace("{src}", src).replace("{bin}", bin))
            .collect();
        let mut cmd = Command::new(&args[0]);
        cmd.args(&args[1..]);
        cmd
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileOutcome {
    pub compile_ok: bool,
    pub diagnostics: String,
    pub binary: Option<PathBuf>,
}

/// Writes `source` to `work_dir/main.cc` and compiles it to `work_dir/main`.
///
/// The compiler runs inside `work_dir` with relative paths and `TMPDIR`
/// pointing there, so diagnostics do not depend on where the work dir lives
/// and no artifact escapes it. A non-zero compiler exit is a value
/// (`compile_ok == false`); a missing compiler or a timeout is an error.
pub fn compile_gate(
    config: &CompilerConfig,
    source: &str,
    work_dir: &Path,
) -> Result<CompileOutcome, ValidationError> {
    fs::create_dir_all(work_dir)
        .map_err(|e| ValidationError::Environment(format!("cannot create {}: {e}", work_dir.display())))?;
    fs::write(work_dir.join(SOURCE_NAME), source)?;
    let binary = work_dir.join(BINARY_NAME);
    if binary.exists() {
        fs::remove_file(&binary)?;
    }
    let mut cmd = config.command(SOURCE_NAME, BINARY_NAME);
    cmd.current_dir(work_dir).env("TMPDIR", work_dir).env("LC_ALL", "C");
    let out = match run_with_timeout(&mut cmd, config.timeout) {
        Ok(out) => out,
        Err(RunError::NotFound { program }) => {
            return Err(ValidationError::Environment(format!("compiler `{program}` not found")))
        }
        Err(RunError::TimedOut { timeout, .. }) => return Err(ValidationError::CompileTimeout(timeout)),
        Err(e) => return Err(ValidationError::Environment(e.to_string())),
    };
    let compile_ok = out.success();
    Ok(CompileOutcome {
        compile_ok,
        diagnostics: out.stderr,
        binary: compile_ok.then_some(binary),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_parsing() {
        let c = CompilerConfig::default();
        assert_eq!(c.program(), "g++");
        assert_eq!(c.timeout, Duration::from_secs(60));
        assert_eq!(c.without_openmp().template(), "g++ -std=c++17 -O2 {src} -o {bin}");
        assert!(CompilerConfig::parse("g++ -o {bin}").is_err());
        assert!(CompilerConfig::parse("").is_err());
    }

    #[test]
    fn missing_compiler_is_environment_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = CompilerConfig::parse("no-such-compiler-xyz {src} -o {bin}").unwrap();
        assert!(matches!(
            compile_gate(&c, "int main(){}", dir.path()),
            Err(ValidationError::Environment(_))
        ));
    }

    #[test]
    fn timeout_is_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let c = CompilerConfig::parse("sh -c sleep${IFS}5 {src} {bin}")
            .unwrap()
            .with_timeout(Duration::from_millis(100));
        assert!(matches!(
            compile_gate(&c, "x", dir.path()),
            Err(ValidationError::CompileTimeout(_))
        ));
    }
}
