//! Command-line front end for the `gcf-lab` solvers: configuration,
//! artifacts, result records, sweeps and reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod sweep;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use clap::{Args, Parser, Subcommand};

use crate::config::{config_hash, parse_kv, resolve, Command, RunConfig};
use crate::error::CliError;
use crate::output::{to_json, write_file, ResultRecord, RunMeta, CODE_VERSION, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "gcf-lab", version, about = "Translating solitons of the alpha-Gauss curvature flow")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Args)]
struct Invocation {
    /// Configuration file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunConfig,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Derived constants and the round Jacobi count K.
    Constants(Invocation),
    /// Shrinker support function (round or k-fold).
    Shrinker(Invocation),
    /// Spectrum of the linearized operator on a shrinker.
    Spectrum(Invocation),
    /// Rotationally symmetric translator and its asymptotic fit.
    Radial(Invocation),
    /// Exterior solution by fixed-point iteration.
    Exterior(Invocation),
    /// March the translator equation in l.
    March(Invocation),
    /// Sweep a quantity over a range of alpha.
    Sweep(Invocation),
    /// Aggregate result records into tables.
    Report(Invocation),
}

impl Sub {
    fn split(self) -> (Command, Invocation) {
        match self {
            Sub::Constants(i) => (Command::Constants, i),
            Sub::Shrinker(i) => (Command::Shrinker, i),
            Sub::Spectrum(i) => (Command::Spectrum, i),
            Sub::Radial(i) => (Command::Radial, i),
            Sub::Exterior(i) => (Command::Exterior, i),
            Sub::March(i) => (Command::March, i),
            Sub::Sweep(i) => (Command::Sweep, i),
            Sub::Report(i) => (Command::Report, i),
        }
    }
}

/// Runs one invocation and returns the process exit code: 0 on success,
/// 2 on bad input, 3 when a solver fails.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (cmd, inv) = cli.command.split();
    match dispatch(cmd, inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gcf-lab {}: {e}", cmd.name());
            e.exit_code()
        }
    }
}

fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    parse_kv(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn dispatch(cmd: Command, inv: Invocation) -> Result<(), CliError> {
    let file = inv.config.as_deref().map(read_config).transpose()?;
    let cfg = resolve(cmd, file.as_ref(), &inv.flags)?;
    if cmd == Command::Report {
        return run_report(&cfg);
    }
    let hash = config_hash(cmd, &cfg);
    let started = SystemTime::now();
    let clock = Instant::now();
    let outcome = commands::execute(cmd, &cfg, &hash)?;
    let elapsed = clock.elapsed();

    let Some(out) = cfg.out.as_deref() else {
        print_stdout(&outcome.artifacts[0].bytes)?;
        eprintln!("{}", outcome.summary);
        return Ok(());
    };
    let dir = Path::new(out);
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{out}: {e}")))?;
    let stem = format!("{}-{}", cmd.name(), &hash[..12]);
    let mut names = Vec::new();
    for a in &outcome.artifacts {
        let name = format!("{stem}.{}", a.suffix);
        write_file(&dir.join(&name), &a.bytes)?;
        names.push(name);
    }
    let record = ResultRecord {
        schema_version: SCHEMA_VERSION,
        command: cmd.name().to_string(),
        config_hash: hash.clone(),
        code_version: CODE_VERSION.to_string(),
        inputs: RunConfig { out: None, ..cfg.clone() },
        constants: outcome.constants,
        metrics: outcome.metrics,
        artifacts: names,
    };
    write_file(&dir.join(format!("{stem}{}", report::RECORD_SUFFIX)), &to_json(&record)?)?;
    let meta = RunMeta::new(cmd.name(), &hash, started, elapsed);
    write_file(&dir.join(format!("{stem}.meta.json")), &to_json(&meta)?)?;
    println!("{}", outcome.summary);
    Ok(())
}

fn run_report(cfg: &RunConfig) -> Result<(), CliError> {
    let mut rep = report::build(cfg)?;
    let summary = format!(
        "report: {} records ({} skipped), {} rows in {} tables",
        rep.records,
        rep.skipped,
        rep.tables.iter().map(|t| t.len()).sum::<usize>(),
        rep.tables.len()
    );
    match cfg.out.as_deref() {
        None => {
            print_stdout(rep.tables[0].render().as_bytes())?;
            eprintln!("{summary}");
        }
        Some(out) => {
            let dir = Path::new(out);
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{out}: {e}")))?;
            for t in &mut rep.tables {
                write_file(&dir.join(t.name), t.render().as_bytes())?;
            }
            println!("{summary}");
        }
    }
    Ok(())
}

fn print_stdout(bytes: &[u8]) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes).and_then(|_| out.flush()).map_err(CliError::from)
}
