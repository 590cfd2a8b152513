//! Run configuration: `key = value` files, command-line flags, defaults and
//! validation. Flags override file entries.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use clap::Args;
use gcf_lab::circlefield::DEFAULT_N;
use gcf_lab::linearized::field::{MAX_DS, MIN_SPAN};
use gcf_lab::march::BETA_CAP;
use gcf_lab::radial::FIT_MIN_LMAX;
use gcf_lab::ExteriorGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

macro_rules! run_config {
    ($($(#[$doc:meta])* $field:ident : $ty:ty),* $(,)?) => {
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
        pub struct RunConfig {
            $(
                $(#[$doc])*
                #[arg(long)]
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
                match key {
                    $(stringify!($field) => {
                        self.$field = Some(value.parse::<$ty>().map_err(|e| format!("{key} = {value}: {e}"))?);
                    })*
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            }

            pub fn is_set(&self, key: &str) -> bool {
                match key {
                    $(stringify!($field) => self.$field.is_some(),)*
                    _ => false,
                }
            }

            fn clear(&mut self, key: &str) {
                match key {
                    $(stringify!($field) => self.$field = None,)*
                    _ => {}
                }
            }

            /// One `key = value` line per set field, in declaration order.
            pub fn to_kv(&self) -> String {
                let mut out = String::new();
                $(if let Some(v) = &self.$field {
                    let _ = writeln!(out, "{} = {}", stringify!($field), v);
                })*
                out
            }

            /// Copies every field set in `other` over `self`.
            pub fn overlay(&mut self, other: &RunConfig) {
                $(if other.$field.is_some() {
                    self.$field = other.$field.clone();
                })*
            }
        }
    };
}

run_config! {
    /// Dimension of the flow; curves live in the plane (n = 2).
    n: usize,
    /// Flow exponent, in (0, 1/2).
    alpha: f64,
    /// Fold count of the shrinker; 0 for the round one.
    k: usize,
    /// Angular samples (power of two, at least 32).
    samples: usize,
    /// Shrinker profile JSON to read instead of solving.
    shrinker: String,
    /// Tip parameter M of the radial translator.
    m: f64,
    /// Top of the radial integration.
    l_max: f64,
    /// Inner radius R of the exterior domain s >= R.
    r: f64,
    /// Outer end of the exterior grid in s = ln l.
    s_max: f64,
    /// Exterior grid step in s.
    ds: f64,
    /// Weight exponent of the exterior norm; defaults to the widest gap.
    gamma: f64,
    /// Jacobi-field amplitudes, `j:b` pairs separated by commas.
    modes: Modes,
    /// March initial data: blow-down or exterior.
    seed: Seed,
    /// Height where the march starts.
    l_start: f64,
    /// Height where the march stops.
    l_end: f64,
    /// Largest beta+ kept in the march basis.
    beta_cap: f64,
    /// Sweep range `start:stop:step`, inclusive.
    alphas: AlphaRange,
    /// Sweep quantity: K, constants, shrinker or radial.
    what: SweepWhat,
    /// Directory of result records (report).
    records: String,
    /// Output directory; without it the main artifact goes to stdout.
    out: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Modes(pub Vec<(usize, f64)>);

impl FromStr for Modes {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (j, b) = part.split_once(':').ok_or_else(|| format!("mode `{part}` is not of the form j:b"))?;
            let j = j.trim().parse::<usize>().map_err(|e| format!("mode index `{j}`: {e}"))?;
            let b = b.trim().parse::<f64>().map_err(|e| format!("amplitude `{b}`: {e}"))?;
            out.push((j, b));
        }
        Ok(Modes(out))
    }
}

impl fmt::Display for Modes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(j, b)| format!("{j}:{b}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Seed {
    BlowDown,
    Exterior,
}

impl FromStr for Seed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "blow-down" => Ok(Seed::BlowDown),
            "exterior" => Ok(Seed::Exterior),
            _ => Err(format!("seed `{s}` is not blow-down or exterior")),
        }
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Seed::BlowDown => "blow-down",
            Seed::Exterior => "exterior",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepWhat {
    K,
    Constants,
    Shrinker,
    Radial,
}

impl FromStr for SweepWhat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "K" | "k" => Ok(SweepWhat::K),
            "constants" => Ok(SweepWhat::Constants),
            "shrinker" => Ok(SweepWhat::Shrinker),
            "radial" => Ok(SweepWhat::Radial),
            _ => Err(format!("sweep quantity `{s}` is not one of K, constants, shrinker, radial")),
        }
    }
}

impl fmt::Display for SweepWhat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepWhat::K => "K",
            SweepWhat::Constants => "constants",
            SweepWhat::Shrinker => "shrinker",
            SweepWhat::Radial => "radial",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

const MAX_SWEEP_POINTS: usize = 100_000;

impl AlphaRange {
    /// Grid points, rounded to 12 decimals so that `0.05:0.25:0.01` lands
    /// on the decimal values rather than their accumulated sums.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| {
                let v = self.start + i as f64 * self.step;
                format!("{v:.12}").parse().expect("formatted float")
            })
            .collect()
    }
}

impl FromStr for AlphaRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(format!("range `{s}` is not start:stop:step"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("range `{s}`: {e}"));
        let r = AlphaRange { start: num(a)?, stop: num(b)?, step: num(c)? };
        if !(r.step > 0.0 && r.stop >= r.start && r.start.is_finite() && r.stop.is_finite()) {
            return Err(format!("range `{s}` needs start <= stop and step > 0"));
        }
        if (r.stop - r.start) / r.step > MAX_SWEEP_POINTS as f64 {
            return Err(format!("range `{s}` has more than {MAX_SWEEP_POINTS} points"));
        }
        Ok(r)
    }
}

impl fmt::Display for AlphaRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    Constants,
    Shrinker,
    Spectrum,
    Radial,
    Exterior,
    March,
    Sweep,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Shrinker => "shrinker",
            Command::Spectrum => "spectrum",
            Command::Radial => "radial",
            Command::Exterior => "exterior",
            Command::March => "march",
            Command::Sweep => "sweep",
            Command::Report => "report",
        }
    }

    /// Keys the command reads.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Constants => &["n", "alpha", "out"],
            Command::Shrinker => &["n", "alpha", "k", "samples", "out"],
            Command::Spectrum => &PROFILE_OUT,
            Command::Radial => &["n", "alpha", "m", "l_max", "out"],
            Command::Exterior => &EXTERIOR,
            Command::March => &MARCH,
            Command::Sweep => &["n", "alphas", "what", "k", "samples", "m", "l_max", "out"],
            Command::Report => &["records", "out"],
        }
    }
}

const PROFILE_OUT: [&str; 6] = ["n", "alpha", "k", "samples", "shrinker", "out"];
const EXTERIOR: [&str; 11] = ["n", "alpha", "k", "samples", "shrinker", "r", "s_max", "ds", "gamma", "modes", "out"];
const MARCH: [&str; 15] = [
    "n", "alpha", "k", "samples", "shrinker", "r", "s_max", "ds", "gamma", "modes", "seed", "l_start", "l_end",
    "beta_cap", "out",
];

/// Parses a `key = value` file. Blank lines and `#` comments are skipped;
/// dashes in keys are read as underscores.
pub fn parse_kv(text: &str) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        let key = key.trim().replace('-', "_");
        cfg.set(&key, value.trim()).map_err(|e| format!("line {}: {e}", lineno + 1))?;
    }
    Ok(cfg)
}

/// Merges file and flags, keeps the keys `cmd` reads, fills defaults and
/// validates ranges.
pub fn resolve(cmd: Command, file: Option<&RunConfig>, flags: &RunConfig) -> Result<RunConfig, CliError> {
    for key in RunConfig::KEYS {
        if flags.is_set(key) && !cmd.keys().contains(key) {
            return Err(CliError::Validation(format!("--{} does not apply to {}", key.replace('_', "-"), cmd.name())));
        }
    }
    let mut cfg = file.cloned().unwrap_or_default();
    cfg.overlay(flags);
    for key in RunConfig::KEYS {
        if !cmd.keys().contains(key) {
            cfg.clear(key);
        }
    }
    fill_defaults(cmd, &mut cfg);
    validate(cmd, &cfg)?;
    Ok(cfg)
}

fn fill_defaults(cmd: Command, cfg: &mut RunConfig) {
    let keys = cmd.keys();
    let from_file = cfg.shrinker.is_some();
    if keys.contains(&"n") && !from_file {
        cfg.n.get_or_insert(2);
    }
    if keys.contains(&"k") && !from_file {
        cfg.k.get_or_insert(0);
    }
    if keys.contains(&"samples") && !from_file {
        cfg.samples.get_or_insert(DEFAULT_N);
    }
    if keys.contains(&"m") {
        cfg.m.get_or_insert(1.0);
    }
    if keys.contains(&"l_max") {
        cfg.l_max.get_or_insert(1e6);
    }
    if keys.contains(&"r") {
        let r = *cfg.r.get_or_insert(8.0);
        cfg.s_max.get_or_insert(r + 12.0);
        cfg.ds.get_or_insert(0.02);
    }
    if cmd == Command::March {
        let seed = *cfg.seed.get_or_insert(Seed::BlowDown);
        let r = cfg.r.unwrap_or(8.0);
        let l0 = *cfg.l_start.get_or_insert(match seed {
            Seed::BlowDown => 1e4,
            Seed::Exterior => 10.0 * r.exp(),
        });
        cfg.l_end.get_or_insert(1e3 * l0);
        cfg.beta_cap.get_or_insert(BETA_CAP);
    }
    if cmd == Command::Sweep {
        cfg.what.get_or_insert(SweepWhat::K);
    }
}

fn invalid(msg: String) -> CliError {
    CliError::Validation(msg)
}

fn validate(cmd: Command, cfg: &RunConfig) -> Result<(), CliError> {
    if let Some(n) = cfg.n {
        if n < 2 {
            return Err(invalid(format!("n = {n} must be at least 2")));
        }
        let planar = matches!(cmd, Command::Spectrum | Command::Exterior | Command::March) || cfg.k.unwrap_or(0) > 0;
        if planar && n != 2 {
            return Err(invalid(format!("{} works with curves only (n = 2), got n = {n}", cmd.name())));
        }
    }
    if let Some(a) = cfg.alpha {
        if !(a > 0.0 && a < 0.5) {
            return Err(invalid(format!("alpha = {a} must lie in (0, 1/2)")));
        }
    }
    let needs_alpha = matches!(cmd, Command::Constants | Command::Shrinker | Command::Radial)
        || (cfg.shrinker.is_none() && matches!(cmd, Command::Spectrum | Command::Exterior | Command::March));
    if needs_alpha && cfg.alpha.is_none() {
        return Err(invalid(format!("{} needs --alpha", cmd.name())));
    }
    if cfg.shrinker.is_some() && (cfg.alpha.is_some() || cfg.k.is_some() || cfg.samples.is_some() || cfg.n.is_some()) {
        return Err(invalid("--shrinker fixes n, alpha, k and samples; drop those keys".into()));
    }
    if let Some(k) = cfg.k {
        if k == 1 || k == 2 {
            return Err(invalid(format!("fold count k = {k} must be 0 or at least 3")));
        }
    }
    if let Some(s) = cfg.samples {
        if s < 32 || !s.is_power_of_two() || s > 1024 {
            return Err(invalid(format!("samples = {s} must be a power of two in [32, 1024]")));
        }
    }
    if let Some(m) = cfg.m {
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid(format!("M = {m} must be positive")));
        }
    }
    if let Some(l) = cfg.l_max {
        if !(l >= FIT_MIN_LMAX && l.is_finite()) {
            return Err(invalid(format!("l_max = {l} must be at least {FIT_MIN_LMAX:e}")));
        }
    }
    if let (Some(r), Some(s_max), Some(ds)) = (cfg.r, cfg.s_max, cfg.ds) {
        if !(r > 0.0) {
            return Err(invalid(format!("R = {r} must be positive")));
        }
        if !(ds > 0.0 && ds <= MAX_DS) {
            return Err(invalid(format!("ds = {ds} must lie in (0, {MAX_DS}]")));
        }
        if !(s_max - r >= MIN_SPAN) {
            return Err(invalid(format!("S_max - R = {} must be at least {MIN_SPAN}", s_max - r)));
        }
        ExteriorGrid::new(r, s_max, ds, 32).map_err(|e| invalid(e.to_string()))?;
    }
    if let Some(g) = cfg.gamma {
        if !g.is_finite() {
            return Err(invalid(format!("gamma = {g} must be finite")));
        }
    }
    if let Some(modes) = &cfg.modes {
        if modes.0.iter().any(|(_, b)| !b.is_finite()) {
            return Err(invalid("mode amplitudes must be finite".into()));
        }
    }
    for (name, v) in [("l_start", cfg.l_start), ("l_end", cfg.l_end), ("beta_cap", cfg.beta_cap)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} = {v} must be positive")));
            }
        }
    }
    if let (Some(a), Some(b)) = (cfg.l_start, cfg.l_end) {
        if a == b {
            return Err(invalid("l_start and l_end coincide".into()));
        }
    }
    if cmd == Command::March && cfg.seed == Some(Seed::Exterior) {
        let (l0, r, s_max) = (cfg.l_start.unwrap_or(0.0), cfg.r.unwrap_or(0.0), cfg.s_max.unwrap_or(0.0));
        if !(l0.ln() >= r && l0.ln() <= s_max) {
            return Err(invalid(format!("l_start = {l0} must lie in [e^R, e^S_max] for an exterior seed")));
        }
    }
    if cmd == Command::Sweep {
        let range = cfg.alphas.ok_or_else(|| invalid("sweep needs --alphas start:stop:step".into()))?;
        if let Some(bad) = range.values().into_iter().find(|a| !(*a > 0.0 && *a < 0.5)) {
            return Err(invalid(format!("alpha = {bad} in the sweep range is outside (0, 1/2)")));
        }
    }
    if cmd == Command::Report && cfg.records.is_none() {
        return Err(invalid("report needs --records DIR".into()));
    }
    Ok(())
}

/// SHA-256 of the command name and the resolved configuration, output
/// directory excluded.
pub fn config_hash(cmd: Command, cfg: &RunConfig) -> String {
    let mut keyed = cfg.clone();
    keyed.out = None;
    let mut hasher = Sha256::new();
    hasher.update(cmd.name().as_bytes());
    hasher.update(b"\n");
    hasher.update(keyed.to_kv().as_bytes());
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> RunConfig {
        let mut c = RunConfig::default();
        c.n = Some(2);
        c.alpha = Some(0.1);
        c.k = Some(3);
        c.samples = Some(128);
        c.shrinker = Some("profiles/a b.json".into());
        c.m = Some(1.25);
        c.l_max = Some(1e6);
        c.r = Some(8.0);
        c.s_max = Some(20.0);
        c.ds = Some(0.02);
        c.gamma = Some(-0.123456789012345);
        c.modes = Some(Modes(vec![(3, 0.5), (4, -1e-3)]));
        c.seed = Some(Seed::Exterior);
        c.l_start = Some(29809.579870417286);
        c.l_end = Some(2.9809579870417286e7);
        c.beta_cap = Some(2.0);
        c.alphas = Some("0.05:0.25:0.01".parse().unwrap());
        c.what = Some(SweepWhat::Radial);
        c.records = Some("runs".into());
        c.out = Some("out dir".into());
        c
    }

    #[test]
    fn kv_round_trip() {
        let c = full();
        assert_eq!(parse_kv(&c.to_kv()).unwrap(), c);
        assert_eq!(parse_kv("").unwrap(), RunConfig::default());
    }

    #[test]
    fn json_round_trip() {
        let c = full();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
    }

    #[test]
    fn kv_syntax() {
        let c = parse_kv("# comment\nalpha = 0.2  # trailing\n\nl-max=1e5\n").unwrap();
        assert_eq!(c.alpha, Some(0.2));
        assert_eq!(c.l_max, Some(1e5));
        assert!(parse_kv("alpha 0.2").is_err());
        assert!(parse_kv("beta = 1").unwrap_err().contains("unknown key"));
        assert!(parse_kv("alpha = x").is_err());
    }

    #[test]
    fn flags_win_and_foreign_keys_drop() {
        let file = parse_kv("alpha = 0.2\nn = 3\nm = 4\n").unwrap();
        let flags = RunConfig { alpha: Some(0.1), ..RunConfig::default() };
        let cfg = resolve(Command::Constants, Some(&file), &flags).unwrap();
        assert_eq!(cfg.alpha, Some(0.1));
        assert_eq!(cfg.n, Some(3));
        assert_eq!(cfg.m, None);
        let stray = RunConfig { m: Some(2.0), ..flags };
        assert!(matches!(resolve(Command::Constants, None, &stray), Err(CliError::Validation(_))));
    }

    #[test]
    fn ranges_are_checked() {
        let bad = |c: RunConfig, cmd| matches!(resolve(cmd, None, &c), Err(CliError::Validation(_)));
        let base = RunConfig { alpha: Some(0.1), ..RunConfig::default() };
        assert!(bad(RunConfig { alpha: Some(0.6), ..base.clone() }, Command::Constants));
        assert!(bad(RunConfig { alpha: None, ..base.clone() }, Command::Constants));
        assert!(bad(RunConfig { k: Some(2), ..base.clone() }, Command::Shrinker));
        assert!(bad(RunConfig { samples: Some(48), ..base.clone() }, Command::Shrinker));
        assert!(bad(RunConfig { n: Some(3), k: Some(3), ..base.clone() }, Command::Shrinker));
        assert!(bad(RunConfig { l_max: Some(10.0), ..base.clone() }, Command::Radial));
        assert!(bad(RunConfig { s_max: Some(12.0), ..base.clone() }, Command::Exterior));
        assert!(bad(RunConfig { seed: Some(Seed::Exterior), l_start: Some(10.0), ..base.clone() }, Command::March));
        assert!(bad(RunConfig::default(), Command::Sweep));
        assert!(bad(RunConfig { alphas: Some("0.3:0.6:0.1".parse().unwrap()), ..RunConfig::default() }, Command::Sweep));
        assert!(!bad(base.clone(), Command::March));
    }

    #[test]
    fn defaults_enter_the_hash() {
        let explicit = RunConfig { alpha: Some(0.1), n: Some(2), ..RunConfig::default() };
        let implicit = RunConfig { alpha: Some(0.1), ..RunConfig::default() };
        let a = resolve(Command::Constants, None, &explicit).unwrap();
        let b = resolve(Command::Constants, None, &implicit).unwrap();
        assert_eq!(config_hash(Command::Constants, &a), config_hash(Command::Constants, &b));
        let moved = RunConfig { out: Some("elsewhere".into()), ..a.clone() };
        assert_eq!(config_hash(Command::Constants, &a), config_hash(Command::Constants, &moved));
        assert_ne!(config_hash(Command::Constants, &a), config_hash(Command::Shrinker, &a));
    }

    #[test]
    fn alpha_grid_is_decimal() {
        let r: AlphaRange = "0.05:0.25:0.01".parse().unwrap();
        let v = r.values();
        assert_eq!(v.len(), 21);
        assert_eq!(v[1], 0.06);
        assert_eq!(v[20], 0.25);
        assert!("0.3:0.1:0.1".parse::<AlphaRange>().is_err());
        assert!("0.1:0.2".parse::<AlphaRange>().is_err());
    }

    #[test]
    fn modes_parse() {
        let m: Modes = "3:0.5, 4:-1e-3".parse().unwrap();
        assert_eq!(m.0, vec![(3, 0.5), (4, -1e-3)]);
        assert!("3".parse::<Modes>().is_err());
        assert_eq!("".parse::<Modes>().unwrap().0, vec![]);
    }
}
