use std::io::Write;

use serde::Serialize;
use veritrack_core::canonical::to_canonical_string;
use veritrack_core::store::Executed;

use crate::args::Format;
use crate::CliError;

pub struct Printer {
    format: Format,
}

impl Printer {
    pub fn new(format: Format) -> Self {
        Self { format }
    }

    pub fn format(&self) -> Format {
        self.format
    }

    pub fn text(&self, s: &str) -> Result<(), CliError> {
        let mut stdout = std::io::stdout().lock();
        stdout
            .write_all(s.as_bytes())
            .and_then(|_| stdout.flush())
            .map_err(|e| CliError::domain("StorageFailure", e.to_string()))
    }

    pub fn json<T: Serialize>(&self, value: &T) -> Result<(), CliError> {
        let mut s = to_canonical_string(value);
        s.push('\n');
        self.text(&s)
    }

    /// A single document: canonical JSON, or the human rendering. There is
    /// no tabular form.
    pub fn value<T: Serialize>(&self, value: &T, human: impl FnOnce(&T) -> String) -> Result<(), CliError> {
        match self.format {
            Format::Json => self.json(value),
            Format::Human => self.text(&human(value)),
            Format::Csv => Err(CliError::Usage("csv output is not available for this command".into())),
        }
    }

    pub fn table(&self, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        match self.format {
            Format::Json => {
                let objects: Vec<serde_json::Map<String, serde_json::Value>> = rows
                    .iter()
                    .map(|row| {
                        header
                            .iter()
                            .zip(row)
                            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.clone())))
                            .collect()
                    })
                    .collect();
                self.json(&objects)
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let failed = |e: csv::Error| CliError::domain("StorageFailure", e.to_string());
                w.write_record(header).map_err(failed)?;
                for row in rows {
                    w.write_record(row).map_err(failed)?;
                }
                let bytes = w
                    .into_inner()
                    .map_err(|e| CliError::domain("StorageFailure", e.to_string()))?;
                self.text(&String::from_utf8_lossy(&bytes))
            }
            Format::Human => {
                let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
                for row in rows {
                    for (w, cell) in widths.iter_mut().zip(row) {
                        *w = (*w).max(cell.chars().count());
                    }
                }
                let render = |cells: Vec<&str>| {
                    let mut line = cells
                        .iter()
                        .zip(&widths)
                        .map(|(c, w)| format!("{c:<w$}"))
                        .collect::<Vec<_>>()
                        .join("  ");
                    line.truncate(line.trim_end().len());
                    line.push('\n');
                    line
                };
                let mut s = render(header.to_vec());
                for row in rows {
                    s.push_str(&render(row.iter().map(String::as_str).collect()));
                }
                self.text(&s)
            }
        }
    }

    pub fn executed(&self, executed: &Executed) -> Result<(), CliError> {
        self.value(executed, |e| {
            format!(
                "#{} {}; project {} is {}\n",
                e.sequence, e.event_type, e.status.project_id, e.status.project_status
            )
        })
    }

    pub fn error(&self, code: &str, message: &str) {
        if self.format == Format::Json {
            let body = serde_json::json!({"error_code": code, "message": message});
            eprintln!("{}", to_canonical_string(&body));
        } else {
            eprintln!("error[{code}]: {message}");
        }
    }
}
