//! Serialization of artifacts and records. Every float is written with 17
//! significant digits, so identical runs give identical bytes.

use std::io;
use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use gcf_lab::DerivedConstants64;
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;

use crate::config::RunConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `d.dddddddddddddddde±x`: 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

// the trait defaults give the compact layout; only floats change
struct SigDigits;

impl Formatter for SigDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with 17-digit floats and a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    value.serialize(&mut ser).map_err(|e| CliError::Io(e.to_string()))?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn csv_line(cells: &[String]) -> String {
    let mut line = cells.join(",");
    line.push('\n');
    line
}

pub fn csv_floats(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|&x| fmt17(x)).collect()
}

/// Inputs, derived constants and metrics of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub inputs: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<DerivedConstants64>,
    pub metrics: serde_json::Value,
    /// File names relative to the record.
    pub artifacts: Vec<String>,
}

/// Wall-clock data, kept out of the record so the record is reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub command: String,
    pub started_unix_ms: u128,
    pub wall_clock_s: f64,
    pub code_version: String,
}

impl RunMeta {
    pub fn new(command: &str, config_hash: &str, started: SystemTime, elapsed: Duration) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            command: command.to_string(),
            started_unix_ms: started.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
            wall_clock_s: elapsed.as_secs_f64(),
            code_version: CODE_VERSION.to_string(),
        }
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
