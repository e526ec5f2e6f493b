//! Output files with the config hash and tool version embedded.

use std::fs;
use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use dyson_circ::io::TOOL_VERSION;
use serde_json::{json, Value};

pub const TOOL_NAME: &str = "dyson-circ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Result of one command before it is written out.
pub struct Artifact {
    pub command: &'static str,
    /// CSV table with its header line.
    pub csv: String,
    pub table: Value,
    pub report: Value,
    /// Set when a check failed; the process then exits with status 1.
    pub failed: bool,
}

impl Artifact {
    fn csv_text(&self, hash: &str) -> String {
        format!(
            "# tool: {TOOL_NAME} {TOOL_VERSION}\n# config_hash: {hash}\n# command: {}\n{}",
            self.command, self.csv
        )
    }

    fn envelope(&self, hash: &str, table: bool) -> Value {
        let mut v = json!({
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "config_hash": hash,
            "command": self.command,
            "report": self.report,
        });
        if table {
            v["table"] = self.table.clone();
        }
        v
    }

    /// With `out`, writes `<command>.csv` plus `<command>_report.json`, or a
    /// single `<command>.json`; otherwise prints the same content to stdout.
    pub fn emit(&self, hash: &str, format: Format, out: Option<&Path>) -> std::io::Result<()> {
        let pretty = |v: &Value| serde_json::to_string_pretty(v).expect("serializable") + "\n";
        match out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                match format {
                    Format::Csv => {
                        fs::write(dir.join(format!("{}.csv", self.command)), self.csv_text(hash))?;
                        fs::write(
                            dir.join(format!("{}_report.json", self.command)),
                            pretty(&self.envelope(hash, false)),
                        )?;
                    }
                    Format::Json => {
                        fs::write(
                            dir.join(format!("{}.json", self.command)),
                            pretty(&self.envelope(hash, true)),
                        )?;
                    }
                }
            }
            None => {
                let text = match format {
                    Format::Csv => self.csv_text(hash),
                    Format::Json => pretty(&self.envelope(hash, true)),
                };
                std::io::stdout().lock().write_all(text.as_bytes())?;
            }
        }
        Ok(())
    }
}
