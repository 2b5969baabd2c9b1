//! Writers for CSV, versioned JSON and two-column plot files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::CliError;

pub const SCHEMA: &str = "qlattice/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Plot,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "plot" => Ok(Format::Plot),
            other => Err(format!("expected csv, json or plot, got `{other}`")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Plot => "plot",
        })
    }
}

/// Fixed-point price with six decimals.
pub fn fixed6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// Scientific notation for errors and probabilities.
pub fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

pub fn opt_sci(x: Option<f64>) -> String {
    x.map(sci).unwrap_or_default()
}

/// CSV document with a fixed header.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            text: header.join(",") + "\n",
        }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        let line: Vec<&str> = fields.iter().map(AsRef::as_ref).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// JSON object tagged with the schema version and command name.
pub fn json_doc(command: &str, body: Value) -> Value {
    let mut map = Map::new();
    map.insert("schema".into(), Value::from(SCHEMA));
    map.insert("command".into(), Value::from(command));
    if let Value::Object(fields) = body {
        map.extend(fields);
    }
    Value::Object(map)
}

/// Writes to the file if given, else to stdout.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn emit_json(path: Option<&Path>, doc: &Value) -> Result<(), CliError> {
    emit(path, &(serde_json::to_string_pretty(doc)? + "\n"))
}

/// One two-column `N abs_err` series per file inside `dir`.
pub fn emit_plot(
    dir: Option<&Path>,
    name: &str,
    title: &str,
    points: &[(usize, f64)],
) -> Result<PathBuf, CliError> {
    let dir = dir.unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.dat"));
    let mut text = format!("# {title}\n# N abs_err\n");
    for (n, err) in points {
        text.push_str(&format!("{n} {}\n", sci(*err)));
    }
    fs::write(&path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(path)
}

/// File-name fragment for a parameter value, e.g. `-1`, `1.1`.
pub fn tag(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(fixed6(8.9470412), "8.947041");
        assert_eq!(fixed6(-0.0000001), "0.000000");
        assert_eq!(sci(0.00123), "1.230000e-3");
        assert_eq!(opt_sci(None), "");
        assert_eq!("JSON".parse::<Format>().unwrap(), Format::Json);
        assert!("xml".parse::<Format>().is_err());
    }

    #[test]
    fn json_doc_is_tagged() {
        let doc = json_doc("price", serde_json::json!({"price": 1.0}));
        assert_eq!(doc["schema"], SCHEMA);
        assert_eq!(doc["command"], "price");
        assert_eq!(doc["price"], 1.0);
    }

    #[test]
    fn csv_rows() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&["1", "2"]);
        assert_eq!(csv.into_string(), "a,b\n1,2\n");
    }
}
