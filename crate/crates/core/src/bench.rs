//! Thread-sweep benchmarking and strong-scaling speedups.
//!
//! Benchmarked programs time themselves and print `ELAPSED_SECONDS=<float>`
//! as their final output line. The runner holds an exclusive lock file while
//! it measures, so two runners never share the host.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::process::run_with_timeout;

pub const DEFAULT_THREAD_SWEEP: [usize; 4] = [1, 2, 4, 8];
pub const DEFAULT_REPETITIONS: usize = 3;
pub const ELAPSED_PREFIX: &str = "ELAPSED_SECONDS=";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("another benchmark runner holds {0}")]
    LockHeld(PathBuf),
    #[error("case {case_id} at {threads} threads: {message}")]
    Run {
        case_id: String,
        threads: usize,
        message: String,
    },
    #[error("case {case_id} at {threads} threads: {message}")]
    Parse {
        case_id: String,
        threads: usize,
        message: String,
    },
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordSource {
    Measured,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub case_id: String,
    pub threads: usize,
    pub wall_seconds: f64,
    pub repetitions: usize,
    pub source: RecordSource,
    /// More threads requested than the host has logical cores.
    pub oversubscribed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub case_id: String,
    pub threads: usize,
    pub speedup: f64,
}

/// Exclusive host lock, released on drop.
#[derive(Debug)]
pub struct BenchLock {
    path: PathBuf,
}

impl BenchLock {
    pub fn acquire(path: &Path) -> Result<Self, BenchError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        match OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self {
                    path: path.to_path_buf(),
                })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(BenchError::LockHeld(path.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for BenchLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub thread_counts: Vec<usize>,
    pub repetitions: usize,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            thread_counts: DEFAULT_THREAD_SWEEP.to_vec(),
            repetitions: DEFAULT_REPETITIONS,
            args: Vec::new(),
            timeout: Duration::from_secs(600),
        }
    }
}

pub fn host_cores() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Reads the self-reported time from the final non-empty output line.
pub fn parse_elapsed(stdout: &str) -> Result<f64, String> {
    let last = stdout
        .lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .ok_or("program printed nothing")?;
    let value = last
        .strip_prefix(ELAPSED_PREFIX)
        .ok_or_else(|| format!("final line `{last}` is not an {ELAPSED_PREFIX}<float> line"))?;
    let secs: f64 = value.trim().parse().map_err(|_| format!("cannot parse elapsed time `{value}`"))?;
    if !(secs.is_finite() && secs > 0.0) {
        return Err(format!("elapsed time must be positive, got {secs}"));
    }
    Ok(secs)
}

/// Minimum over repetitions of the self-reported time.
pub fn aggregate_min(samples: &[f64]) -> Option<f64> {
    samples.iter().copied().reduce(f64::min)
}

/// Times `binary` at each thread count. The lock argument proves the caller
/// owns the host for the duration of the sweep.
pub fn run_sweep(
    _lock: &BenchLock,
    case_id: &str,
    binary: &Path,
    config: &SweepConfig,
) -> Result<Vec<BenchRecord>, BenchError> {
    if config.thread_counts.is_empty() || config.thread_counts.contains(&0) {
        return Err(BenchError::InvalidInput("thread counts must be positive and non-empty".into()));
    }
    if config.repetitions == 0 {
        return Err(BenchError::InvalidInput("repetitions must be positive".into()));
    }
    let cores = host_cores();
    let mut records = Vec::with_capacity(config.thread_counts.len());
    for &threads in &config.thread_counts {
        let oversubscribed = threads > cores;
        if oversubscribed {
            log::warn!("{case_id}: {threads} threads requested on a {cores}-core host");
        }
        let mut samples = Vec::with_capacity(config.repetitions);
        for _ in 0..config.repetitions {
            let mut cmd = Command::new(binary);
            cmd.args(&config.args).env("OMP_NUM_THREADS", threads.to_string());
            let out = run_with_timeout(&mut cmd, config.timeout).map_err(|e| BenchError::Run {
                case_id: case_id.into(),
                threads,
                message: e.to_string(),
            })?;
            if !out.success() {
                return Err(BenchError::Run {
                    case_id: case_id.into(),
                    threads,
                    message: format!("exit status {}: {}", out.status, out.stderr.trim()),
                });
            }
            samples.push(parse_elapsed(&out.stdout).map_err(|message| BenchError::Parse {
                case_id: case_id.into(),
                threads,
                message,
            })?);
        }
        records.push(BenchRecord {
            case_id: case_id.into(),
            threads,
            wall_seconds: aggregate_min(&samples).expect("repetitions > 0"),
            repetitions: config.repetitions,
            source: RecordSource::Measured,
            oversubscribed,
        });
    }
    Ok(records)
}

/// `speedup(t) = wall_seconds(1) / wall_seconds(t)`, per case in first-seen
/// order, threads ascending. Slowdowns are reported as-is.
pub fn compute_speedups(records: &[BenchRecord]) -> Result<Vec<SpeedupRow>, BenchError> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_case: BTreeMap<&str, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in records {
        if !(r.wall_seconds.is_finite() && r.wall_seconds > 0.0) {
            return Err(BenchError::InvalidInput(format!(
                "{} at {} threads has non-positive time {}",
                r.case_id, r.threads, r.wall_seconds
            )));
        }
        let times = by_case.entry(&r.case_id).or_insert_with(|| {
            order.push(&r.case_id);
            BTreeMap::new()
        });
        if times.insert(r.threads, r.wall_seconds).is_some() {
            return Err(BenchError::InvalidInput(format!(
                "duplicate record for {} at {} threads",
                r.case_id, r.threads
            )));
        }
    }
    let mut rows = Vec::new();
    for case in order {
        let times = &by_case[case];
        let base = *times
            .get(&1)
            .ok_or_else(|| BenchError::InvalidInput(format!("case {case} has no 1-thread baseline")))?;
        for (&threads, &t) in times {
            rows.push(SpeedupRow {
                case_id: case.to_string(),
                threads,
                speedup: base / t,
            });
        }
    }
    Ok(rows)
}

#[derive(Deserialize)]
struct ImportRow {
    case_id: String,
    threads: usize,
    wall_seconds: f64,
}

/// Reads `case_id,threads,wall_seconds` rows (with header) as imported records.
pub fn import_records<R: Read>(reader: R) -> Result<Vec<BenchRecord>, BenchError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| BenchError::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| BenchError::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: ImportRow = record.deserialize(Some(&headers)).map_err(|e| BenchError::Csv {
            line,
            message: e.to_string(),
        })?;
        if !(row.wall_seconds.is_finite() && row.wall_seconds > 0.0) {
            return Err(BenchError::Csv {
                line,
                message: format!("wall_seconds must be positive, got {}", row.wall_seconds),
            });
        }
        if row.threads == 0 {
            return Err(BenchError::Csv {
                line,
                message: "threads must be positive".into(),
            });
        }
        out.push(BenchRecord {
            case_id: row.case_id,
            threads: row.threads,
            wall_seconds: row.wall_seconds,
            repetitions: 1,
            source: RecordSource::Imported,
            oversubscribed: false,
        });
    }
    Ok(out)
}

pub fn import_records_file(path: &Path) -> Result<Vec<BenchRecord>, BenchError> {
    import_records(fs::File::open(path)?)
}

pub fn records_csv(records: &[BenchRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["case_id", "threads", "wall_seconds", "repetitions", "source", "oversubscribed"])
        .expect("in-memory write");
    for r in records {
        let source = match r.source {
            RecordSource::Measured => "Measured",
            RecordSource::Imported => "Imported",
        };
        w.write_record([
            r.case_id.clone(),
            r.threads.to_string(),
            r.wall_seconds.to_string(),
            r.repetitions.to_string(),
            source.to_string(),
            r.oversubscribed.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn speedups_csv(rows: &[SpeedupRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["case_id", "threads", "speedup"]).expect("in-memory write");
    for r in rows {
        w.write_record([r.case_id.clone(), r.threads.to_string(), format!("{:.6}", r.speedup)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn thread_columns<I: Iterator<Item = usize>>(threads: I) -> Vec<usize> {
    let mut t: Vec<usize> = threads.collect();
    t.sort_unstable();
    t.dedup();
    t
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        out.push_str(parts.join(" | ").trim_end());
        out.push('\n');
    };
    line(header, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for r in rows {
        line(r, &mut out);
    }
    out
}

fn thread_label(t: usize, suffix: &str) -> String {
    if t == 1 {
        format!("1 Thread{suffix}")
    } else {
        format!("{t} Threads{suffix}")
    }
}

/// Runtime table: one row per case, one column per thread count, 3 decimals.
pub fn runtime_table(records: &[BenchRecord]) -> String {
    let cols = thread_columns(records.iter().map(|r| r.threads));
    let mut cases: Vec<&str> = Vec::new();
    for r in records {
        if !cases.contains(&r.case_id.as_str()) {
            cases.push(&r.case_id);
        }
    }
    let header: Vec<String> = std::iter::once("Case Name".to_string())
        .chain(cols.iter().map(|t| thread_label(*t, " (s)")))
        .collect();
    let rows: Vec<Vec<String>> = cases
        .iter()
        .map(|c| {
            std::iter::once(c.to_string())
                .chain(cols.iter().map(|t| {
                    records
                        .iter()
                        .find(|r| r.case_id == *c && r.threads == *t)
                        .map(|r| format!("{:.3}", r.wall_seconds))
                        .unwrap_or_else(|| "-".into())
                }))
                .collect()
        })
        .collect();
    table(&header, &rows)
}

pub fn speedup_table(rows: &[SpeedupRow]) -> String {
    let cols = thread_columns(rows.iter().map(|r| r.threads));
    let mut cases: Vec<&str> = Vec::new();
    for r in rows {
        if !cases.contains(&r.case_id.as_str()) {
            cases.push(&r.case_id);
        }
    }
    let header: Vec<String> = std::iter::once("Case Name".to_string())
        .chain(cols.iter().map(|t| thread_label(*t, "")))
        .collect();
    let body: Vec<Vec<String>> = cases
        .iter()
        .map(|c| {
            std::iter::once(c.to_string())
                .chain(cols.iter().map(|t| {
                    rows.iter()
                        .find(|r| r.case_id == *c && r.threads == *t)
                        .map(|r| format!("{:.3}", r.speedup))
                        .unwrap_or_else(|| "-".into())
                }))
                .collect()
        })
        .collect();
    table(&header, &body)
}

/// Tab-separated series: `threads` column then one speedup column per case.
pub fn speedup_series(rows: &[SpeedupRow]) -> String {
    let cols = thread_columns(rows.iter().map(|r| r.threads));
    let mut cases: Vec<&str> = Vec::new();
    for r in rows {
        if !cases.contains(&r.case_id.as_str()) {
            cases.push(&r.case_id);
        }
    }
    let mut out = String::from("threads");
    for c in &cases {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for t in cols {
        let _ = write!(out, "{t}");
        for c in &cases {
            out.push('\t');
            match rows.iter().find(|r| r.case_id == *c && r.threads == t) {
                Some(r) => {
                    let _ = write!(out, "{:.6}", r.speedup);
                }
                None => out.push_str("nan"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(case: &str, threads: usize, secs: f64) -> BenchRecord {
        BenchRecord {
            case_id: case.into(),
            threads,
            wall_seconds: secs,
            repetitions: 1,
            source: RecordSource::Imported,
            oversubscribed: false,
        }
    }

    #[test]
    fn speedup_from_published_numbers() {
        let rows = compute_speedups(&[rec("mm", 1, 179.809), rec("mm", 8, 22.699)]).unwrap();
        assert_eq!(rows[0].speedup, 1.0);
        assert!((rows[1].speedup - 7.922).abs() < 1e-3);
        let rows = compute_speedups(&[rec("j", 1, 7.820), rec("j", 8, 1.363)]).unwrap();
        assert!((rows[1].speedup - 5.737).abs() < 1e-3);
    }

    #[test]
    fn slowdown_not_clamped() {
        let rows = compute_speedups(&[rec("h", 1, 1.169), rec("h", 2, 1.452)]).unwrap();
        assert!((rows[1].speedup - 0.805).abs() < 1e-3);
        assert!(rows[1].speedup < 1.0);
    }

    #[test]
    fn equal_times_give_unit_speedups() {
        let rows = compute_speedups(&[rec("c", 1, 2.0), rec("c", 2, 2.0), rec("c", 4, 2.0)]).unwrap();
        assert!(rows.iter().all(|r| r.speedup == 1.0));
    }

    #[test]
    fn missing_baseline_rejected() {
        assert!(matches!(compute_speedups(&[rec("c", 2, 1.0)]), Err(BenchError::InvalidInput(_))));
        assert!(compute_speedups(&[rec("c", 1, 1.0), rec("c", 1, 2.0)]).is_err());
    }

    #[test]
    fn import_csv() {
        let csv = "case_id,threads,wall_seconds\nA,1,2.0\nA,2,1.0\n";
        let r = import_records(csv.as_bytes()).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|x| x.source == RecordSource::Imported));
        assert!(import_records("".as_bytes()).unwrap().is_empty());
        assert!(import_records("case_id,threads,wall_seconds\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn import_errors_name_line() {
        let csv = "case_id,threads,wall_seconds\nA,1,2.0\nA,2,0\n";
        assert!(matches!(import_records(csv.as_bytes()), Err(BenchError::Csv { line: 3, .. })));
        let csv = "case_id,threads,wall_seconds\nA,1,2.0\nA,x,1.0\n";
        assert!(matches!(import_records(csv.as_bytes()), Err(BenchError::Csv { line: 3, .. })));
        let csv = "case_id,threads,wall_seconds\nA,1,-1\n";
        assert!(import_records(csv.as_bytes()).is_err());
    }

    #[test]
    fn elapsed_parsing() {
        assert_eq!(parse_elapsed("result 5\nELAPSED_SECONDS=0.25\n"), Ok(0.25));
        assert!(parse_elapsed("ELAPSED_SECONDS=0.25\nresult 5\n").is_err());
        assert!(parse_elapsed("ELAPSED_SECONDS=0\n").is_err());
        assert!(parse_elapsed("").is_err());
    }

    #[test]
    fn min_aggregation() {
        assert_eq!(aggregate_min(&[0.5, 0.3, 0.4]), Some(0.3));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.lock");
        let held = BenchLock::acquire(&path).unwrap();
        assert!(matches!(BenchLock::acquire(&path), Err(BenchError::LockHeld(_))));
        drop(held);
        BenchLock::acquire(&path).unwrap();
    }

    #[test]
    fn sweep_with_script() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("prog");
        // counts invocations so each repetition reports a different time
        let counter = dir.path().join("n");
        std::fs::write(
            &script,
            format!(
                "#!/bin/sh\nn=$(cat {c} 2>/dev/null || echo 0); n=$((n+1)); echo $n > {c}\necho ok\necho ELAPSED_SECONDS=0.$((10 - n))$OMP_NUM_THREADS\n",
                c = counter.display()
            ),
        )
        .unwrap();
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let lock = BenchLock::acquire(&dir.path().join("l")).unwrap();
        let cfg = SweepConfig {
            thread_counts: vec![1],
            repetitions: 3,
            ..Default::default()
        };
        let r = run_sweep(&lock, "s", &script, &cfg).unwrap();
        // runs report 0.91, 0.81, 0.71
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].wall_seconds, 0.71);
        assert_eq!(r[0].repetitions, 3);
        let rows = compute_speedups(&r).unwrap();
        assert_eq!(rows[0].speedup, 1.0);
    }

    #[test]
    fn tables_render() {
        let recs = vec![rec("Histogram (Case 4)", 1, 1.169), rec("Histogram (Case 4)", 2, 1.452)];
        let t = runtime_table(&recs);
        assert!(t.contains("1 Thread (s)"));
        assert!(t.contains("1.452"));
        let rows = compute_speedups(&recs).unwrap();
        assert!(speedup_table(&rows).contains("0.805"));
        assert!(speedup_series(&rows).starts_with("threads\tHistogram (Case 4)\n1\t1.000000\n2\t0.805"));
    }

    proptest! {
        #[test]
        fn speedups_scale_invariant(times in prop::collection::vec(0.01f64..100.0, 1..6), scale in 0.001f64..1000.0) {
            let recs: Vec<_> = times.iter().enumerate().map(|(i, t)| rec("c", 1 << i, *t)).collect();
            let scaled: Vec<_> = recs.iter().map(|r| BenchRecord { wall_seconds: r.wall_seconds * scale, ..r.clone() }).collect();
            let a = compute_speedups(&recs).unwrap();
            let b = compute_speedups(&scaled).unwrap();
            prop_assert_eq!(a[0].speedup, 1.0);
            prop_assert_eq!(b[0].speedup, 1.0);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.speedup - y.speedup).abs() <= 1e-12 * x.speedup.max(1.0));
            }
        }
    }
}
