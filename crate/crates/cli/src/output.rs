//! Files written next to a run: TOML tables, plain CSV and the saved model.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aml_core::data::{LabeledExamples, Standardizer};
use aml_core::linalg::SymMatrix;
use aml_core::metric::MetricMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = toml::to_string(value).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_text(path, &text)
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| aml_core::Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })
}

/// Comma-separated rows under a header line. Floats use the shortest
/// round-tripping form, so equal runs give equal bytes.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}

/// Features then the class name, with a generated `f0,f1,...,label` header.
pub fn write_examples(path: &Path, e: &LabeledExamples) -> Result<(), CliError> {
    let mut header: Vec<String> = (0..e.dim()).map(|k| format!("f{k}")).collect();
    header.push("label".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = e.features().iter().zip(e.labels()).map(|(f, &l)| {
        let mut row: Vec<String> = f.iter().map(|v| v.to_string()).collect();
        row.push(e.class_names()[l].clone());
        row
    });
    write_csv(path, &header, rows)
}

/// A learned metric plus the standardization it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dim: usize,
    pub eig_floor: f64,
    /// Row-major `dim × dim`.
    pub matrix: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub standardizer: Standardizer,
}

impl ModelFile {
    pub fn new(metric: &MetricMatrix, standardizer: &Standardizer) -> Self {
        Self {
            dim: metric.dim(),
            eig_floor: metric.floor(),
            matrix: metric.matrix().as_slice().to_vec(),
            eigenvalues: metric.eigen().eigenvalues().to_vec(),
            standardizer: standardizer.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<(MetricMatrix, Standardizer), CliError> {
        let f: ModelFile = read_toml(path)?;
        let bad = |message: String| CliError::Parse {
            path: path.to_path_buf(),
            message,
        };
        if f.standardizer.mean.len() != f.dim || f.standardizer.scale.len() != f.dim {
            return Err(bad(format!("standardizer length differs from dim {}", f.dim)));
        }
        let m = SymMatrix::from_row_major(f.dim, f.matrix).map_err(|e| bad(e.to_string()))?;
        let m = MetricMatrix::new(m, f.eig_floor).map_err(|e| bad(e.to_string()))?;
        Ok((m, f.standardizer))
    }
}

/// Run bookkeeping kept apart from the reproducible outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub command: String,
    pub version: String,
    pub started_unix_seconds: u64,
    pub wall_time_seconds: f64,
    /// Solver wall time per training run.
    pub solver_seconds: Vec<f64>,
}

impl Metadata {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_seconds: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            wall_time_seconds: 0.0,
            solver_seconds: Vec::new(),
        }
    }
}

pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        prepare_dir(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// `key=value` pairs for one stdout line.
pub fn summary_line(fields: &[(&str, f64)]) -> String {
    let mut s = String::new();
    for (i, (k, v)) in fields.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{k}={v:.6}");
    }
    s
}
