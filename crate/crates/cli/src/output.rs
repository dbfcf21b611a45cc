//! Result directory: `records.ndtext`, `summary.tsv`, `config.resolved`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::CliError;

pub const RECORDS_FILE: &str = "records.ndtext";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const CONFIG_FILE: &str = "config.resolved";

/// Header line of `records.ndtext`; the only line that differs between identical runs.
pub fn timestamp_header(command: &str) -> String {
    format!(
        "# linkreg {} {command} generated {}\n",
        env!("CARGO_PKG_VERSION"),
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    )
}

/// One JSON object per line.
pub fn ndtext<T: Serialize>(rows: &[T]) -> String {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).expect("records serialize"));
        s.push('\n');
    }
    s
}

/// Tab-separated table; the header starts with `schema_version`.
#[derive(Debug, Clone, Default)]
pub struct Tsv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Tsv {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        let mut header = vec!["schema_version".to_string()];
        header.extend(columns.iter().map(|c| c.as_ref().to_string()));
        Tsv { header, rows: Vec::new() }
    }

    pub fn push(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len() + 1, self.header.len(), "row width");
        let mut row = vec![crate::SCHEMA_VERSION.to_string()];
        row.extend(cells);
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join("\t");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join("\t"));
            s.push('\n');
        }
        s
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

/// Mean and standard error of the available values; `None` if there are none.
pub fn mean_se(values: impl IntoIterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>, usize) {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return (None, None, 0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let se = if v.len() > 1 {
        Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt())
    } else {
        None
    };
    (Some(m), se, v.len())
}

/// Write every requested artifact and return the directory.
pub fn write_results(cfg: &RunConfig, command: &str, records: &str, summary: &Tsv) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    if cfg.output.formats.contains(&Format::Ndtext) {
        let mut body = timestamp_header(command);
        body.push_str(records);
        write(&dir.join(RECORDS_FILE), &body)?;
    }
    if cfg.output.formats.contains(&Format::Tsv) {
        write(&dir.join(SUMMARY_FILE), &summary.render())?;
    }
    let mut resolved = String::new();
    let _ = writeln!(resolved, "# resolved configuration for `{command}`");
    resolved.push_str(&cfg.to_toml());
    write(&dir.join(CONFIG_FILE), &resolved)?;
    Ok(dir)
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io(path, e))
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Drop `#` lines, leaving what must be reproducible.
pub fn strip_comments(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}
