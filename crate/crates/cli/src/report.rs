//! Aggregation of result records into CSV tables grouped by `(n, alpha)`.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{csv_line, fmt17, ResultRecord, SCHEMA_VERSION};

pub const RECORD_SUFFIX: &str = ".record.json";

pub struct Table {
    pub name: &'static str,
    header: &'static [&'static str],
    rows: Vec<(Key, Vec<String>)>,
}

/// Sort key: `n`, then `alpha`, then the row's own tie-breakers.
type Key = (Option<usize>, Option<f64>, Vec<String>);

fn key_cmp(a: &Key, b: &Key) -> Ordering {
    let alpha = match (a.1, b.1) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (x, y) => x.is_some().cmp(&y.is_some()),
    };
    a.0.cmp(&b.0).then(alpha).then_with(|| a.2.cmp(&b.2))
}

impl Table {
    fn new(name: &'static str, header: &'static [&'static str]) -> Self {
        Self { name, header, rows: Vec::new() }
    }

    fn push(&mut self, n: Option<usize>, alpha: Option<f64>, tie: Vec<String>, cells: Vec<String>) {
        let mut row = vec![opt_int(n), opt_f64(alpha)];
        row.extend(cells);
        self.rows.push(((n, alpha, tie), row));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&mut self) -> String {
        self.rows.sort_by(|a, b| key_cmp(&a.0, &b.0).then_with(|| a.1.cmp(&b.1)));
        let header: Vec<String> = self.header.iter().map(|s| s.to_string()).collect();
        let mut out = csv_line(&header);
        for (_, row) in &self.rows {
            out.push_str(&csv_line(row));
        }
        out
    }
}

fn opt_int(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn num(v: &Value, key: &str) -> Option<f64> {
    v.get(key).and_then(Value::as_f64)
}

fn cell(v: Option<&Value>) -> String {
    match v {
        Some(Value::Number(x)) if x.is_i64() || x.is_u64() => x.to_string(),
        Some(Value::Number(x)) => x.as_f64().map(fmt17).unwrap_or_default(),
        _ => String::new(),
    }
}

fn record_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            record_files(&path, out)?;
        } else if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(RECORD_SUFFIX)) {
            out.push(path);
        }
    }
    Ok(())
}

/// Readable records under `dir`, sorted by path. Unreadable files are
/// logged and skipped; a record from another schema version aborts.
pub fn load_records(dir: &Path) -> Result<(Vec<(String, ResultRecord)>, usize), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Validation(format!("{} is not a directory", dir.display())));
    }
    let mut files = Vec::new();
    record_files(dir, &mut files)?;
    files.sort();
    let mut records = Vec::new();
    let mut skipped = 0;
    for path in files {
        let name = path.strip_prefix(dir).unwrap_or(&path).display().to_string();
        let value: Value = match std::fs::read_to_string(&path).map_err(|e| e.to_string()).and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string())) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("skipping {name}: {e}");
                skipped += 1;
                continue;
            }
        };
        match value.get("schema_version").and_then(Value::as_u64) {
            None => {
                log::warn!("skipping {name}: no schema version");
                skipped += 1;
                continue;
            }
            Some(v) if v != SCHEMA_VERSION as u64 => {
                return Err(CliError::Validation(format!(
                    "{name} has schema version {v}, this build reads {SCHEMA_VERSION}; refusing to aggregate"
                )));
            }
            Some(_) => {}
        }
        match serde_json::from_value::<ResultRecord>(value) {
            Ok(r) => records.push((name, r)),
            Err(e) => {
                log::warn!("skipping {name}: {e}");
                skipped += 1;
            }
        }
    }
    Ok((records, skipped))
}

pub struct Report {
    pub tables: Vec<Table>,
    pub records: usize,
    pub skipped: usize,
}

pub fn build(cfg: &RunConfig) -> Result<Report, CliError> {
    let dir = PathBuf::from(cfg.records.as_deref().expect("validated"));
    let (records, skipped) = load_records(&dir)?;

    let mut summary = Table::new("summary.csv", &["n", "alpha", "command", "config_hash", "record"]);
    let mut staircase = Table::new("k_staircase.csv", &["n", "alpha", "K", "source"]);
    let mut spectrum = Table::new("spectrum.csv", &["n", "alpha", "k", "index", "lambda", "beta_minus", "beta_plus"]);
    let mut radial =
        Table::new("radial.csv", &["n", "alpha", "M", "A_fit", "A", "A_ratio", "corr_exp", "expected_exp", "c_sign"]);
    let mut exponents = Table::new("exponents.csv", &["n", "alpha", "source", "mode", "fitted", "theory"]);

    for (name, rec) in &records {
        let n = rec.constants.map(|c| c.n).or(rec.inputs.n);
        let alpha = rec.constants.map(|c| c.alpha).or(rec.inputs.alpha);
        let m = &rec.metrics;
        let tie = vec![rec.command.clone(), rec.config_hash.clone(), name.clone()];
        summary.push(n, alpha, tie.clone(), vec![rec.command.clone(), rec.config_hash.clone(), name.clone()]);
        match rec.command.as_str() {
            "constants" => staircase.push(n, alpha, tie, vec![cell(m.get("K")), "constants".into()]),
            "spectrum" => {
                let k = m.get("k").and_then(Value::as_u64).unwrap_or(0);
                if k == 0 {
                    staircase.push(n, alpha, tie.clone(), vec![cell(m.get("K")), "spectrum".into()]);
                }
                let lambdas = m.get("lambdas").and_then(Value::as_array).cloned().unwrap_or_default();
                let betas = m.get("betas").and_then(Value::as_array).cloned().unwrap_or_default();
                for (i, lam) in lambdas.iter().enumerate() {
                    let pair = betas.get(i).and_then(Value::as_array);
                    let mut t = tie.clone();
                    t.push(format!("{i:06}"));
                    spectrum.push(
                        n,
                        alpha,
                        t,
                        vec![
                            k.to_string(),
                            i.to_string(),
                            cell(Some(lam)),
                            cell(pair.and_then(|p| p.first())),
                            cell(pair.and_then(|p| p.get(1))),
                        ],
                    );
                }
            }
            "radial" => {
                let ratio = num(m, "A_fit").zip(num(m, "A")).map(|(f, a)| f / a);
                radial.push(
                    n,
                    alpha,
                    tie.clone(),
                    vec![
                        cell(m.get("M")),
                        cell(m.get("A_fit")),
                        cell(m.get("A")),
                        opt_f64(ratio),
                        cell(m.get("corr_exp")),
                        cell(m.get("expected_exp")),
                        cell(m.get("c_sign")),
                    ],
                );
                exponents.push(
                    n,
                    alpha,
                    tie,
                    vec!["radial correction".into(), String::new(), cell(m.get("corr_exp")), cell(m.get("expected_exp"))],
                );
            }
            "exterior" | "march" => {
                for (i, p) in m.get("perturbations").and_then(Value::as_array).into_iter().flatten().enumerate() {
                    let mut t = tie.clone();
                    t.push(format!("{i:06}"));
                    exponents.push(
                        n,
                        alpha,
                        t,
                        vec![
                            format!("{} jacobi", rec.command),
                            cell(p.get("mode")),
                            cell(p.get("fitted_rate")),
                            cell(p.get("beta_plus")),
                        ],
                    );
                }
            }
            "sweep" => sweep_rows(rec, n, &tie, &mut staircase, &mut radial),
            _ => {}
        }
    }
    Ok(Report { tables: vec![summary, staircase, spectrum, radial, exponents], records: records.len(), skipped })
}

fn sweep_rows(rec: &ResultRecord, n: Option<usize>, tie: &[String], staircase: &mut Table, radial: &mut Table) {
    let m = &rec.metrics;
    let cols: Vec<&str> = m.get("columns").and_then(Value::as_array).into_iter().flatten().filter_map(Value::as_str).collect();
    let at = |name: &str| cols.iter().position(|c| *c == name);
    for row in m.get("rows").and_then(Value::as_array).into_iter().flatten().filter_map(Value::as_array) {
        let get = |name: &str| at(name).and_then(|i| row.get(i));
        let alpha = get("alpha").and_then(Value::as_f64);
        let what = m.get("what").and_then(Value::as_str).unwrap_or("");
        if let Some(k) = get("K") {
            staircase.push(n, alpha, tie.to_vec(), vec![cell(Some(k)), format!("sweep {what}")]);
        }
        if what == "radial" {
            let keys = ["M", "A_fit", "A", "A_ratio", "corr_exp", "expected_exp", "c_sign"];
            radial.push(n, alpha, tie.to_vec(), keys.iter().map(|k| cell(get(k))).collect());
        }
    }
}
