//! JSON ingestion of system descriptions and deterministic output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::TwoInputSystemSpec;
use crate::hinf::DisturbedSystemSpec;
use crate::riccati::ControlledSystemSpec;

/// Any of the three system families, tagged by `"type"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemFile {
    Controlled(ControlledSystemSpec),
    Disturbed(DisturbedSystemSpec),
    TwoInput(TwoInputSystemSpec),
}

impl SystemFile {
    pub fn validate(&self) -> Result<()> {
        match self {
            SystemFile::Controlled(s) => s.validate(),
            SystemFile::Disturbed(s) => s.validate(),
            SystemFile::TwoInput(s) => s.validate(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SystemFile::Controlled(_) => "controlled",
            SystemFile::Disturbed(_) => "disturbed",
            SystemFile::TwoInput(_) => "two_input",
        }
    }
}

/// Parses and validates a system description, including the output-map
/// assumptions of the disturbed and two-input families.
pub fn parse_system(text: &str) -> Result<SystemFile> {
    let sys: SystemFile = from_json(text)?;
    sys.validate()?;
    Ok(sys)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

pub fn load_system(path: &Path) -> Result<SystemFile> {
    parse_system(&read_text(path)?).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json(&read_text(path)?).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// A named table written as CSV with a header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvTable {
    /// File name without extension.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        CsvTable {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Long format `(k, coordinate, value)` for a sequence of vectors.
    pub fn long_format(name: impl Into<String>, seq: &[Vec<f64>]) -> Self {
        let mut t = CsvTable::new(name, &["k", "coordinate", "value"]);
        for (k, v) in seq.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                t.rows.push(vec![k as f64, i as f64, *x]);
            }
        }
        t
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            for (i, x) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                // Shortest round-trip representation, so output is byte-stable.
                let _ = write!(s, "{x:?}");
            }
            s.push('\n');
        }
        s
    }
}

/// Everything a run writes: `report.json`, one CSV per table and an optional
/// plain-text summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub report: serde_json::Value,
    pub tables: Vec<CsvTable>,
    pub summary: String,
}

/// Files written by `emit_outputs`, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

pub fn emit_outputs(out: &RunOutput, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut files = Vec::new();
    let mut write = |name: String, body: &str| -> Result<()> {
        let path = dir.join(&name);
        fs::write(&path, body).map_err(|e| io_error(&path, e))?;
        files.push(name);
        Ok(())
    };
    let mut report = serde_json::to_string_pretty(&out.report).map_err(|e| Error::Parse(e.to_string()))?;
    report.push('\n');
    write("report.json".into(), &report)?;
    for t in &out.tables {
        write(format!("{}.csv", t.name), &t.render())?;
    }
    if !out.summary.is_empty() {
        write("summary.txt".into(), &out.summary)?;
    }
    Ok(Manifest {
        dir: dir.to_path_buf(),
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{OperatorExpr, Space};

    const SCALAR: &str = r#"{
        "type": "controlled",
        "horizon": 1,
        "state_space": {"kind": "euclidean", "dim": 1},
        "input_space": {"kind": "euclidean", "dim": 1},
        "a": {"variant": "identity", "space": {"kind": "euclidean", "dim": 1}},
        "b": {"variant": "dense", "domain": {"kind": "euclidean", "dim": 1},
              "codomain": {"kind": "euclidean", "dim": 1}, "matrix": [[0.5]]},
        "c": {"variant": "zero", "domain": {"kind": "euclidean", "dim": 1},
              "codomain": {"kind": "euclidean", "dim": 1}},
        "d": [
            {"variant": "zero", "domain": {"kind": "euclidean", "dim": 1},
             "codomain": {"kind": "euclidean", "dim": 1}},
            {"variant": "scaled", "factor": 0.2,
             "inner": {"variant": "identity", "space": {"kind": "euclidean", "dim": 1}}}
        ]
    }"#;

    #[test]
    fn scalar_spec_round_trips() {
        let sys = parse_system(SCALAR).unwrap();
        assert_eq!(sys.kind(), "controlled");
        let text = serde_json::to_string(&sys).unwrap();
        let again = parse_system(&text).unwrap();
        assert_eq!(again, sys);
        assert_eq!(serde_json::to_string(&again).unwrap(), text);
    }

    #[test]
    fn schema_errors_are_parse_errors() {
        assert!(matches!(parse_system("{}"), Err(Error::Parse(_))));
        assert!(matches!(parse_system(r#"{"type": "other"}"#), Err(Error::Parse(_))));
        let ragged = SCALAR.replace("[[0.5]]", "[[0.5, 1.0]]");
        assert!(parse_system(&ragged).is_err());
    }

    #[test]
    fn correlated_outputs_are_rejected() {
        let s = Space::euclidean(1);
        let id = || OperatorExpr::identity(s.clone());
        let zero = || OperatorExpr::zero(s.clone(), s.clone());
        let sys = SystemFile::Disturbed(DisturbedSystemSpec {
            horizon: 2,
            state_space: s.clone(),
            disturbance_space: s.clone(),
            output_space: s.clone(),
            a: id().into(),
            c: zero().into(),
            b1: id().into(),
            d1: zero().into(),
            c_bar: id().into(),
            d_bar: OperatorExpr::scaled(0.5, id()).into(),
        });
        let text = serde_json::to_string(&sys).unwrap();
        match parse_system(&text) {
            Err(Error::Assumption {
                assumption,
                k,
                residual,
            }) => {
                assert!(assumption.contains("orthogonality"));
                assert_eq!(k, 0);
                assert_eq!(residual, 0.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn outputs_are_deterministic() {
        let dir = std::env::temp_dir().join(format!("hilbert-ctl-io-{}", std::process::id()));
        let empty = RunOutput {
            report: serde_json::json!({}),
            tables: vec![],
            summary: String::new(),
        };
        let m = emit_outputs(&empty, &dir).unwrap();
        assert_eq!(m.files, vec!["report.json"]);

        let mut t = CsvTable::long_format("traj", &[vec![1.0, 0.1], vec![-2.5, 1e-20]]);
        t.rows.push(vec![f64::NAN, 0.0, 1.0 / 3.0]);
        let out = RunOutput {
            report: serde_json::json!({"value": 0.1 + 0.2}),
            tables: vec![t],
            summary: "ok\n".into(),
        };
        let first = emit_outputs(&out, &dir).unwrap();
        let bytes: Vec<Vec<u8>> = first.files.iter().map(|f| fs::read(dir.join(f)).unwrap()).collect();
        let second = emit_outputs(&out, &dir).unwrap();
        assert_eq!(first, second);
        for (f, b) in second.files.iter().zip(&bytes) {
            assert_eq!(&fs::read(dir.join(f)).unwrap(), b);
        }
        let csv = fs::read_to_string(dir.join("traj.csv")).unwrap();
        assert!(csv.starts_with("k,coordinate,value\n0.0,0.0,1.0\n"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_file_reports_its_path() {
        let err = load_system(Path::new("/nonexistent/system.json")).unwrap_err();
        assert!(matches!(err, Error::Io { ref path, .. } if path.contains("system.json")));
    }
}
