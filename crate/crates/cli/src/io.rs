//! File reading with input-error classification, provenance stamping and
//! all-or-nothing output writing.

use std::collections::BTreeMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "banff";

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => CliError::input(format!("file not found: {}", path.display())),
        _ => CliError::input(format!("{}: {e}", path.display())),
    })
}

pub fn read_text(path: &Path) -> CliResult<String> {
    String::from_utf8(read_bytes(path)?).map_err(|_| CliError::input(format!("{}: not valid UTF-8", path.display())))
}

/// Runs a core parser and tags its error with the file name.
pub fn parse_file<T>(path: &Path, parse: impl FnOnce(&[u8]) -> banff_core::Result<T>) -> CliResult<T> {
    let bytes = read_bytes(path)?;
    parse(&bytes).map_err(|e| CliError::from(e).in_file(path))
}

/// Tool name, version and effective config.
pub fn provenance(config: &BTreeMap<String, String>) -> Value {
    json!({
        "tool": TOOL,
        "version": banff_core::VERSION,
        "config": config,
    })
}

/// Adds a `provenance` member to a JSON document and re-serializes it with
/// sorted keys and a trailing newline.
pub fn stamp_json(mut doc: Value, config: &BTreeMap<String, String>) -> Vec<u8> {
    if let Value::Object(m) = &mut doc {
        m.insert("provenance".into(), provenance(config));
    }
    let mut out = serde_json::to_vec_pretty(&doc).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

pub fn stamp_json_bytes(bytes: &[u8], config: &BTreeMap<String, String>) -> Vec<u8> {
    let doc: Value = serde_json::from_slice(bytes).expect("core writers emit valid JSON");
    stamp_json(doc, config)
}

/// `#` comment lines carrying the tool version and config, for CSV outputs.
pub fn csv_header(config: &BTreeMap<String, String>) -> String {
    let mut out = format!("# {TOOL} {}\n", banff_core::VERSION);
    for (k, v) in config {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out
}

/// Comment lines for SVG outputs.
pub fn svg_comments(config: &BTreeMap<String, String>) -> Vec<String> {
    std::iter::once(format!("{TOOL} {}", banff_core::VERSION))
        .chain(config.iter().map(|(k, v)| format!("{k}={v}")))
        .collect()
}

/// File-name-safe form of a section id.
pub fn file_stem(section_id: &str) -> String {
    let s: String = section_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with('.') {
        format!("section{s}")
    } else {
        s
    }
}

/// Outputs collected in memory and written only once everything succeeded.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: BTreeMap<String, Vec<u8>>,
}

impl OutputSet {
    pub fn add(&mut self, name: String, bytes: Vec<u8>) -> CliResult<()> {
        if self.files.contains_key(&name) {
            return Err(CliError::input(format!("two outputs would both be written to `{name}`")));
        }
        self.files.insert(name, bytes);
        Ok(())
    }

    /// Writes each file through a temporary sibling and an atomic rename.
    pub fn commit(self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::internal(format!("cannot create {}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let target = dir.join(&name);
            let mut tmp = tempfile::NamedTempFile::new_in(dir)
                .map_err(|e| CliError::internal(format!("cannot write in {}: {e}", dir.display())))?;
            tmp.write_all(&bytes)
                .and_then(|_| tmp.as_file().sync_all())
                .map_err(|e| CliError::internal(format!("cannot write {}: {e}", target.display())))?;
            tmp.persist(&target)
                .map_err(|e| CliError::internal(format!("cannot write {}: {}", target.display(), e.error)))?;
            written.push(target);
        }
        Ok(written)
    }
}
