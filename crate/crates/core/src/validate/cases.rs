use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ValidationError;

/// One line of the case manifest. `serial_path` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub case_id: String,
    pub serial_path: String,
    #[serde(default)]
    pub input_args: Vec<String>,
    #[serde(default)]
    pub unparallelizable: bool,
    /// Where a harvested case came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseManifest {
    pub base_dir: PathBuf,
    pub cases: Vec<CaseEntry>,
}

impl CaseManifest {
    pub fn new(base_dir: impl Into<PathBuf>, cases: Vec<CaseEntry>) -> Result<Self, ValidationError> {
        let mut seen = HashSet::new();
        for (i, c) in cases.iter().enumerate() {
            if !seen.insert(c.case_id.as_str()) {
                return Err(ValidationError::Manifest {
                    line: i + 1,
                    message: format!("duplicate case_id {}", c.case_id),
                });
            }
        }
        Ok(Self {
            base_dir: base_dir.into(),
            cases,
        })
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ValidationError> {
        let mut cases = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CaseEntry = serde_json::from_str(line).map_err(|e| ValidationError::Manifest {
                line: idx + 1,
                message: e.to_string(),
            })?;
            cases.push(entry);
        }
        Self::new(base_dir, cases)
    }

    pub fn load(path: &Path) -> Result<Self, ValidationError> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn to_jsonl(&self) -> String {
        self.cases
            .iter()
            .map(|c| serde_json::to_string(c).expect("case serializes") + "\n")
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ValidationError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn serial_path(&self, case: &CaseEntry) -> PathBuf {
        let p = Path::new(&case.serial_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn read_serial(&self, case: &CaseEntry) -> Result<String, ValidationError> {
        let path = self.serial_path(case);
        fs::read_to_string(&path)
            .map_err(|e| ValidationError::InvalidInput(format!("case {}: cannot read {}: {e}", case.case_id, path.display())))
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_defaults() {
        let text = r#"{"case_id":"case1","serial_path":"cases/case1.cc"}
{"case_id":"case2","serial_path":"/abs/case2.cc","input_args":["100"],"unparallelizable":true}
"#;
        let m = CaseManifest::parse(text, "/data").unwrap();
        assert_eq!(m.len(), 2);
        assert!(!m.cases[0].unparallelizable);
        assert_eq!(m.serial_path(&m.cases[0]), PathBuf::from("/data/cases/case1.cc"));
        assert_eq!(m.serial_path(&m.cases[1]), PathBuf::from("/abs/case2.cc"));
        assert_eq!(m.cases[1].input_args, vec!["100"]);
        let again = CaseManifest::parse(&m.to_jsonl(), "/data").unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn bad_lines_are_named() {
        let text = "{\"case_id\":\"a\",\"serial_path\":\"a.cc\"}\nnot json\n";
        assert!(matches!(CaseManifest::parse(text, "."), Err(ValidationError::Manifest { line: 2, .. })));
        let dup = "{\"case_id\":\"a\",\"serial_path\":\"a.cc\"}\n{\"case_id\":\"a\",\"serial_path\":\"b.cc\"}\n";
        assert!(CaseManifest::parse(dup, ".").is_err());
    }
}
