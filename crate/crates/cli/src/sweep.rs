//! Parameter sweeps over alpha. Rows are computed in parallel on a pool
//! capped by `GCF_LAB_WORKERS` and written in grid order.

use gcf_lab::{fit_asymptotics, jacobi_count_round, solve_radial, solve_shrinker_curve, FlowParams, ShrinkerProfile};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::commands::{derived, Artifact, Outcome};
use crate::config::{RunConfig, SweepWhat};
use crate::error::CliError;
use crate::output::{csv_line, fmt17};

pub const WORKERS_ENV: &str = "GCF_LAB_WORKERS";

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl Cell {
    fn text(self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt17(x),
        }
    }
}

/// Worker cap from the environment; unset means one per core.
pub fn worker_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Validation(format!("{WORKERS_ENV} = `{v}` is not a positive integer"))),
        },
    }
}

fn columns(what: SweepWhat) -> &'static [&'static str] {
    match what {
        SweepWhat::K => &["alpha", "K"],
        SweepWhat::Constants => &["alpha", "sigma", "A", "kappa", "c1", "c2", "K"],
        SweepWhat::Shrinker => &["alpha", "k", "N", "residual", "h_min", "h_max"],
        SweepWhat::Radial => &["alpha", "M", "A_fit", "A", "A_ratio", "corr_exp", "expected_exp", "c_sign"],
    }
}

fn row(what: SweepWhat, cfg: &RunConfig, alpha: f64) -> Result<Vec<Cell>, CliError> {
    let n = cfg.n.unwrap_or(2);
    let a = Cell::Float(alpha);
    Ok(match what {
        SweepWhat::K => vec![a, Cell::Int(jacobi_count_round(FlowParams::new(n, alpha)?)? as i64)],
        SweepWhat::Constants => {
            let c = derived(n, alpha)?;
            let k = jacobi_count_round(c.params())?;
            vec![a, Cell::Float(c.sigma), Cell::Float(c.big_a), Cell::Float(c.kappa), Cell::Float(c.c1), Cell::Float(c.c2), Cell::Int(k as i64)]
        }
        SweepWhat::Shrinker => {
            let (k, samples) = (cfg.k.unwrap_or(0), cfg.samples.expect("defaulted"));
            let p = if k == 0 { ShrinkerProfile::round(n, alpha, samples)? } else { solve_shrinker_curve(alpha, k, samples)? };
            vec![a, Cell::Int(k as i64), Cell::Int(p.h.n() as i64), Cell::Float(p.residual), Cell::Float(p.h.min()), Cell::Float(p.h.max())]
        }
        SweepWhat::Radial => {
            let m = cfg.m.expect("defaulted");
            let c = derived(n, alpha)?;
            let fit = fit_asymptotics(&solve_radial(m, &c, cfg.l_max.expect("defaulted"))?)?;
            vec![
                a,
                Cell::Float(m),
                Cell::Float(fit.a_fit),
                Cell::Float(fit.a_exact),
                Cell::Float(fit.a_fit / fit.a_exact),
                Cell::Float(fit.correction_exponent),
                Cell::Float(fit.expected_exponent),
                Cell::Int(fit.c_sign as i64),
            ]
        }
    })
}

pub fn run(cfg: &RunConfig, hash: &str) -> Result<Outcome, CliError> {
    let what = cfg.what.expect("defaulted");
    let alphas = cfg.alphas.expect("validated").values();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(cap) = worker_cap()? {
        pool = pool.num_threads(cap);
    }
    let pool = pool.build().map_err(|e| CliError::Io(format!("worker pool: {e}")))?;
    let rows: Vec<Result<Vec<Cell>, CliError>> = pool.install(|| alphas.par_iter().map(|&a| row(what, cfg, a)).collect());

    let cols = columns(what);
    let mut header: Vec<String> = cols.iter().map(|c| c.to_string()).collect();
    header.push("status".into());
    let mut csv = csv_line(&header);
    let mut table = Vec::new();
    let mut failures = Vec::new();
    for (&alpha, r) in alphas.iter().zip(&rows) {
        let mut cells: Vec<String> = match r {
            Ok(cells) => cells.iter().map(|c| c.text()).collect(),
            Err(_) => std::iter::once(fmt17(alpha)).chain(std::iter::repeat_n(String::new(), cols.len() - 1)).collect(),
        };
        match r {
            Ok(c) => {
                cells.push("ok".into());
                table.push(c.clone());
            }
            Err(e) => {
                // keep the cell free of separators
                cells.push(e.to_string().replace([',', '\n'], ";"));
                failures.push(json!({ "alpha": alpha, "error": e.to_string() }));
            }
        }
        csv.push_str(&csv_line(&cells));
    }
    Ok(Outcome {
        summary: format!(
            "sweep {what} over {} alpha values: {} ok, {} failed [{}]",
            alphas.len(),
            table.len(),
            failures.len(),
            &hash[..12.min(hash.len())]
        ),
        metrics: json!({ "what": what.to_string(), "columns": cols, "rows": table, "failures": failures }),
        artifacts: vec![Artifact { suffix: "csv", bytes: csv.into_bytes() }],
        constants: None,
    })
}
