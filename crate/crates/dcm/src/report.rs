//! Report files: versioned JSON bundles and CSV tables.
//!
//! Reports hold no wall-clock data, so identical inputs give byte-identical
//! files; run times go to `manifest.json` only. Numbers are printed with the
//! shortest representation that parses back to the same `f64`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: &str = "1";
pub const TOOL_NAME: &str = "dcm";

pub const FIT_JSON: &str = "fit.json";
pub const PARAMS_CSV: &str = "params.csv";
pub const CLASSIFICATIONS_CSV: &str = "classifications.csv";
pub const CLASSIFICATIONS_JSON: &str = "classifications.json";
pub const SCORE_TABLE_CSV: &str = "score_table.csv";
pub const ITEM_BARS_CSV: &str = "item_bars.csv";
pub const DIAGNOSTICS_JSON: &str = "diagnostics.json";
pub const INVARIANCE_JSON: &str = "invariance.json";
pub const SIMULATION_CSV: &str = "simulation.csv";
pub const SIMULATION_JSON: &str = "simulation.json";
pub const SIMULATED_RESPONSES_CSV: &str = "simulated_responses.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: C,
    pub data_fingerprint: Option<String>,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &str, config: C, data_fingerprint: Option<String>) -> Self {
        Manifest {
            tool: TOOL_NAME,
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config,
            data_fingerprint,
        }
    }
}

/// Top-level JSON document: schema version, manifest, then the body fields.
#[derive(Debug, Clone, Serialize)]
pub struct Bundle<C: Serialize, B: Serialize> {
    pub schema_version: &'static str,
    pub manifest: Manifest<C>,
    #[serde(flatten)]
    pub body: B,
}

impl<C: Serialize, B: Serialize> Bundle<C, B> {
    pub fn new(manifest: Manifest<C>, body: B) -> Self {
        Bundle {
            schema_version: SCHEMA_VERSION,
            manifest,
            body,
        }
    }
}

/// Write `bytes` to a temporary sibling and rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    file.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Format {
        path: "<report>".into(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// One CSV cell.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Format {
        path: "<csv>".into(),
        message: e.to_string(),
    };
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Format {
        path: "<csv>".into(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Formats {
    pub json: bool,
    pub csv: bool,
}

impl Formats {
    pub fn parse(s: &str) -> Option<Formats> {
        match s {
            "json" => Some(Formats { json: true, csv: false }),
            "csv" => Some(Formats { json: false, csv: true }),
            "both" => Some(Formats { json: true, csv: true }),
            _ => None,
        }
    }
}

/// Output directory plus the list of files written so far.
#[derive(Debug)]
pub struct OutputDir {
    pub dir: PathBuf,
    pub formats: Formats,
    pub written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path, formats: Formats) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            formats,
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        if self.formats.json {
            self.put(name, &to_json(value)?)?;
        }
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        if self.formats.csv {
            self.put(name, &to_csv(header, rows)?)?;
        }
        Ok(())
    }

    /// Written regardless of the format selection.
    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        self.put(name, bytes)
    }

    /// Timing record, kept apart from the deterministic reports.
    pub fn manifest(&mut self, command: &str, started: SystemTime) -> Result<()> {
        #[derive(Serialize)]
        struct RunRecord<'a> {
            schema_version: &'static str,
            tool: &'static str,
            version: &'static str,
            command: &'a str,
            started_unix_ms: u128,
            finished_unix_ms: u128,
            files: Vec<String>,
        }
        let ms = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let record = RunRecord {
            schema_version: SCHEMA_VERSION,
            tool: TOOL_NAME,
            version: env!("CARGO_PKG_VERSION"),
            command,
            started_unix_ms: ms(started),
            finished_unix_ms: ms(SystemTime::now()),
            files: self
                .written
                .iter()
                .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(String::from))
                .collect(),
        };
        let bytes = to_json(&record)?;
        self.put(MANIFEST_JSON, &bytes)
    }
}
