use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::scenario::Scenario;

/// Fixed-width float for CSV: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Builds a CSV body from a header and rows of preformatted fields.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    scenario: &'a str,
    scenario_hash: String,
    seed: Option<u64>,
    refine: bool,
    started: &'a str,
    finished: String,
    exit_code: i32,
    outputs: Vec<OutputEntry>,
}

/// Output directory that remembers what was written, for the manifest.
pub struct OutputDir {
    root: PathBuf,
    started: String,
    files: Vec<(String, String)>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<OutputDir> {
        std::fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            started: now(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.root.join(name), contents)?;
        self.files.push((
            name.to_string(),
            hex::encode(Sha256::digest(contents.as_bytes())),
        ));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn finish(
        self,
        command: &str,
        scenario: &Scenario,
        seed: Option<u64>,
        refine: bool,
        exit_code: i32,
    ) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            scenario: &scenario.name,
            scenario_hash: scenario.content_hash(),
            seed,
            refine,
            started: &self.started,
            finished: now(),
            exit_code,
            outputs: self
                .files
                .iter()
                .map(|(f, h)| OutputEntry {
                    file: f.clone(),
                    sha256: h.clone(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.root.join("manifest.json"), text)?;
        Ok(())
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}
