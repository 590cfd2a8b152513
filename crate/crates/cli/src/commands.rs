//! One function per numerical subcommand. Each returns its artifacts as
//! bytes; writing them out is left to the caller.

use gcf_lab::constants::amplitude_self_check;
use gcf_lab::linearized::JacobiOutcome;
use gcf_lab::march::Direction;
use gcf_lab::{
    convergence_diagnostics, derive_constants, eig_l_full, fit_asymptotics, jacobi_count_round, jacobi_perturb, march,
    picard_zero_seed, seed_blow_down, seed_from_exterior, shrinker_residual, slice_residuals, solve_radial,
    solve_shrinker_curve, threshold_degree, translation_norms, zero_seed_gamma, CircleField, ConvergenceReport,
    DerivedConstants64, ExteriorField64, ExteriorGrid, FlowParams, MarchBasis, MarchOptions, PicardConfig,
    ShrinkerProfile, ShrinkerProfile64, SpectralData64,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Command, RunConfig, Seed};
use crate::error::CliError;
use crate::output::{csv_floats, csv_line, fmt17, to_json, SCHEMA_VERSION};

pub struct Artifact {
    /// File name suffix after the run stem, e.g. `json` or `slices.csv`.
    pub suffix: &'static str,
    pub bytes: Vec<u8>,
}

pub struct Outcome {
    pub summary: String,
    /// The first artifact is the one printed when no output directory is set.
    pub artifacts: Vec<Artifact>,
    pub constants: Option<DerivedConstants64>,
    pub metrics: serde_json::Value,
}

pub fn execute(cmd: Command, cfg: &RunConfig, hash: &str) -> Result<Outcome, CliError> {
    match cmd {
        Command::Constants => constants(cfg, hash),
        Command::Shrinker => shrinker(cfg, hash),
        Command::Spectrum => spectrum(cfg, hash),
        Command::Radial => radial(cfg, hash),
        Command::Exterior => exterior(cfg, hash),
        Command::March => march_cmd(cfg, hash),
        Command::Sweep => crate::sweep::run(cfg, hash),
        Command::Report => unreachable!("report has its own entry point"),
    }
}

fn short(hash: &str) -> &str {
    &hash[..12.min(hash.len())]
}

pub fn derived(n: usize, alpha: f64) -> Result<DerivedConstants64, CliError> {
    Ok(derive_constants(FlowParams::new(n, alpha)?)?)
}

#[derive(Debug, Serialize)]
struct ConstantsJson<'a> {
    schema_version: u32,
    config_hash: &'a str,
    n: usize,
    alpha: f64,
    sigma: f64,
    #[serde(rename = "A")]
    big_a: f64,
    kappa: f64,
    c1: f64,
    c2: f64,
    /// Degree with alpha in [alpha_{l+1}, alpha_l).
    threshold_degree: usize,
    #[serde(rename = "K")]
    k_count: usize,
    sub_affine_critical: bool,
    amplitude_check: f64,
}

fn constants(cfg: &RunConfig, hash: &str) -> Result<Outcome, CliError> {
    let (n, alpha) = (cfg.n.unwrap_or(2), cfg.alpha.expect("validated"));
    let params = FlowParams::new(n, alpha)?;
    let c = derive_constants(params)?;
    let k_count = jacobi_count_round(params)?;
    let out = ConstantsJson {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        n,
        alpha,
        sigma: c.sigma,
        big_a: c.big_a,
        kappa: c.kappa,
        c1: c.c1,
        c2: c.c2,
        threshold_degree: threshold_degree(params)?,
        k_count,
        sub_affine_critical: params.sub_affine_critical(),
        amplitude_check: amplitude_self_check(&c),
    };
    Ok(Outcome {
        summary: format!("constants n={n} alpha={alpha}: sigma={} A={} K={k_count} [{}]", c.sigma, c.big_a, short(hash)),
        metrics: json!({ "K": k_count, "threshold_degree": out.threshold_degree, "amplitude_check": out.amplitude_check }),
        artifacts: vec![Artifact { suffix: "json", bytes: to_json(&out)? }],
        constants: Some(c),
    })
}

/// Profile file written by `shrinker` and read by the later stages.
#[derive(Debug, Serialize, Deserialize)]
pub struct ShrinkerJson {
    pub schema_version: u32,
    pub config_hash: String,
    pub n: usize,
    pub alpha: f64,
    pub k: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub samples: Vec<f64>,
    pub residual: f64,
    #[serde(default)]
    pub shooting_candidates: Vec<f64>,
}

pub fn load_profile(cfg: &RunConfig) -> Result<ShrinkerProfile64, CliError> {
    if let Some(path) = &cfg.shrinker {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{path}: {e}")))?;
        let file: ShrinkerJson =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{path}: not a shrinker profile ({e})")))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "{path}: schema version {} differs from {SCHEMA_VERSION}",
                file.schema_version
            )));
        }
        FlowParams::new(file.n, file.alpha)?;
        let h = CircleField::from_samples(file.samples)?;
        let residual = if file.n == 2 { shrinker_residual(&h, file.alpha)?.sup_norm() } else { file.residual };
        return Ok(ShrinkerProfile {
            n: file.n,
            alpha: file.alpha,
            h,
            symmetry_k: file.k,
            residual,
            shooting_candidates: file.shooting_candidates,
        });
    }
    let (n, alpha) = (cfg.n.unwrap_or(2), cfg.alpha.expect("validated"));
    let (k, samples) = (cfg.k.unwrap_or(0), cfg.samples.expect("defaulted"));
    Ok(if k == 0 { ShrinkerProfile::round(n, alpha, samples)? } else { solve_shrinker_curve(alpha, k, samples)? })
}

fn shrinker(cfg: &RunConfig, hash: &str) -> Result<Outcome, CliError> {
    let p = load_profile(cfg)?;
    let c = derived(p.n, p.alpha)?;
    let out = ShrinkerJson {
        schema_version: SCHEMA_VERSION,
        config_hash: hash.to_string(),
        n: p.n,
        alpha: p.alpha,
        k: p.symmetry_k,
        big_n: p.h.n(),
        samples: p.h.samples().to_vec(),
        residual: p.residual,
        shooting_candidates: p.shooting_candidates.clone(),
    };
    Ok(Outcome {
        summary: format!(
            "shrinker alpha={} k={}: N={} residual={:.3e} h in [{:.6}, {:.6}] [{}]",
            p.alpha,
            p.symmetry_k,
            p.h.n(),
            p.residual,
            p.h.min(),
            p.h.max(),
            short(hash)
        ),
        metrics: json!({
            "k": p.symmetry_k,
            "N": p.h.n(),
            "residual": p.residual,
            "h_min": p.h.min(),
            "h_max": p.h.max(),
            "shooting_candidates": p.shooting_candidates,
        }),
        artifacts: vec![Artifact { suffix: "json", bytes: to_json(&out)? }],
        constants: Some(c),
    })
}

#[derive(Debug, Serialize)]
struct SpectrumJson<'a> {
    schema_version: u32,
    config_hash: &'a str,
    n: usize,
    alpha: f64,
    k: usize,
    #[serde(rename = "N")]
    big_n: usize,
    lambdas: &'a [f64],
    /// `[beta-, beta+]` per eigenvalue.
    betas: Vec<[f64; 2]>,
    #[serde(rename = "K")]
    k_count: usize,
    c_norms: Vec<f64>,
}

/// Modes kept in records; the artifact has all of them.
const RECORD_MODES: usize = 16;

fn spectrum(cfg: &RunConfig, hash: &str) -> Result<Outcome, CliError> {
    let p = load_profile(cfg)?;
    let spec = eig_l_full(&p)?;
    let c_norms = translation_norms(&p, &spec.consts)?;
    let betas: Vec<[f64; 2]> = spec.betas.iter().map(|b| [b.beta_minus, b.beta_plus]).collect();
    let out = SpectrumJson {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        n: p.n,
        alpha: p.alpha,
        k: p.symmetry_k,
        big_n: p.h.n(),
        lambdas: &spec.lambdas,
        betas: betas.clone(),
        k_count: spec.k_count,
        c_norms: c_norms.clone(),
    };
    let top = RECORD_MODES.min(spec.len());
    Ok(Outcome {
        summary: format!(
            "spectrum alpha={} k={}: K={} lambda_3={:.6} beta+_3={:.6} [{}]",
            p.alpha,
            p.symmetry_k,
            spec.k_count,
            spec.lambdas.get(3).copied().unwrap_or(f64::NAN),
            spec.betas.get(3).map_or(f64::NAN, |b| b.beta_plus),
            short(hash)
        ),
        metrics: json!({
            "k": p.symmetry_k,
            "N": p.h.n(),
            "K": spec.k_count,
            "lambdas": &spec.lambdas[..top],
            "betas": &betas[..top],
            "c_norms": c_norms,
        }),
        artifacts: vec![Artifact { suffix: "json", bytes: to_json(&out)? }],
        constants: Some(spec.consts),
    })
}

#[derive(Debug, Serialize)]
struct RadialJson<'a> {
    schema_version: u32,
    config_hash: &'a str,
    n: usize,
    alpha: f64,
    #[serde(rename = "M")]
    m: f64,
    l_max: f64,
    #[serde(rename = "A_fit")]
    a_fit: f64,
    #[serde(rename = "A")]
    a_exact: f64,
    corr_exp: f64,
    expected_exp: f64,
    c_fit: f64,
    c_sign: i8,
    fit_window: [f64; 2],
    model_residual: f64,
    tip_coefficient: f64,
    handover_l: f64,
    handover_slope: f64,
}

fn radial(cfg: &RunConfig, hash: &str) -> Result<Outcome, CliError> {
    let (n, alpha) = (cfg.n.unwrap_or(2), cfg.alpha.expect("validated"));
    let (m, l_max) = (cfg.m.expect("defaulted"), cfg.l_max.expect("defaulted"));
    let c = derived(n, alpha)?;
    let p = solve_radial(m, &c, l_max)?;
    let fit = fit_asymptotics(&p)?;
    let mut csv = String::from("l,f,f_l\n");
    for i in 0..p.l.len() {
        csv.push_str(&csv_line(&csv_floats(&[p.l[i], p.f[i], p.f_l[i]])));
    }
    let summary = RadialJson {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        n,
        alpha,
        m,
        l_max,
        a_fit: fit.a_fit,
        a_exact: fit.a_exact,
        corr_exp: fit.correction_exponent,
        expected_exp: fit.expected_exponent,
        c_fit: fit.c_fit,
        c_sign: fit.c_sign,
        fit_window: [fit.l_lo, fit.l_hi],
        model_residual: fit.model_residual,
        tip_coefficient: p.tip_coefficient,
        handover_l: p.handover_l,
        handover_slope: p.handover_slope,
    };
    Ok(Outcome {
        summary: format!(
            "radial n={n} alpha={alpha} M={m}: A_fit/A={:.9} corr_exp={:.4} (expected {:.4}) c_sign={} [{}]",
            fit.a_fit / fit.a_exact,
            fit.correction_exponent,
            fit.expected_exponent,
            fit.c_sign,
            short(hash)
        ),
        metrics: json!({
            "M": m,
            "A_fit": fit.a_fit,
            "A": fit.a_exact,
            "corr_exp": fit.correction_exponent,
            "expected_exp": fit.expected_exponent,
            "c_sign": fit.c_sign,
            "samples": p.l.len(),
        }),
        artifacts: vec![
            Artifact { suffix: "csv", bytes: csv.into_bytes() },
            Artifact { suffix: "summary.json", bytes: to_json(&summary)? },
        ],
        constants: Some(c),
    })
}

#[derive(Debug, Serialize)]
struct Perturbation {
    mode: usize,
    amplitude: f64,
    beta_plus: f64,
    epsilon: f64,
    fitted_rate: Option<f64>,
    contraction_ratios: Vec<f64>,
    residual: f64,
}

impl Perturbation {
    fn from(j: &JacobiOutcome<f64>) -> Self {
        Self {
            mode: j.mode,
            amplitude: j.amplitude,
            beta_plus: j.rate,
            epsilon: j.epsilon,
            fitted_rate: j.fitted_rate,
            contraction_ratios: j.picard.ratios.clone(),
            residual: j.picard.residual,
        }
    }
}

struct Exterior {
    base: PicardOutcome64,
    perturbations: Vec<Perturbation>,
    field: ExteriorField64,
    spec: SpectralData64,
}

type PicardOutcome64 = gcf_lab::linearized::PicardOutcome<f64>;

/// Zero-seed solution, then one Jacobi perturbation per requested mode.
fn solve_exterior(cfg: &RunConfig, p: &ShrinkerProfile64) -> Result<Exterior, CliError> {
    let spec = eig_l_full(p)?;
    let gamma = cfg.gamma.unwrap_or_else(|| zero_seed_gamma(&spec));
    let grid = ExteriorGrid::new(cfg.r.expect("defaulted"), cfg.s_max.expect("defaulted"), cfg.ds.expect("defaulted"), p.h.n())?;
    let picard = PicardConfig::default();
    let base = picard_zero_seed(&p.h, &spec, grid, gamma, &picard)?;
    let mut field = base.w.clone();
    let mut rate = gamma;
    let mut perturbations = Vec::new();
    for &(j, b) in cfg.modes.as_ref().map_or(&[][..], |m| &m.0[..]) {
        let out = jacobi_perturb(&field, rate, j, b, &p.h, &spec, &picard)?;
        rate = rate.max(out.rate);
        perturbations.push(Perturbation::from(&out));
        field = out.picard.w;
    }
    Ok(Exterior { base, perturbations, field, spec })
}

#[derive(Debug, Serialize)]
struct FieldJson {
    s: Vec<f64>,
    slices: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct ExteriorJson<'a> {
    schema_version: u32,
    config_hash: &'a str,
    alpha: f64,
    k: usize,
    #[serde(rename = "N")]
    big_n: usize,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "S_max")]
    s_max: f64,
    ds: f64,
    gamma: f64,
    contraction_ratios: &'a [f64],
    increments: &'a [f64],
    residual: f64,
    floor_limited: bool,
    slice_residual_max: f64,
    perturbations: &'a [Perturbation],
    field: FieldJson,
}

fn worst_slice_residual(ext: &Exterior, p: &ShrinkerProfile64) -> Result<f64, CliError> {
    Ok(slice_residuals(&ext.field, &p.h, &ext.spec.consts)?.iter().map(|r| r.1).fold(0.0, f64::max))
}

fn exterior(cfg: &RunConfig, hash: &str) -> Result<Outcome, CliError> {
    let p = load_profile(cfg)?;
    let ext = solve_exterior(cfg, &p)?;
    let grid = ext.field.grid;
    let slice_max = worst_slice_residual(&ext, &p)?;
    let out = ExteriorJson {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        alpha: p.alpha,
        k: p.symmetry_k,
        big_n: p.h.n(),
        r: grid.r,
        s_max: grid.s_max(),
        ds: grid.ds,
        gamma: ext.base.gamma,
        contraction_ratios: &ext.base.ratios,
        increments: &ext.base.increments,
        residual: ext.base.residual,
        floor_limited: ext.base.floor_limited,
        slice_residual_max: slice_max,
        perturbations: &ext.perturbations,
        field: FieldJson {
            s: grid.s_values(),
            slices: ext.field.slices.iter().map(|f| f.samples().to_vec()).collect(),
        },
    };
    let max_ratio = ext.base.ratios.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        summary: format!(
            "exterior alpha={} k={} R={} S_max={}: gamma={:.6} max ratio={:.3} residual={:.2e} [{}]",
            p.alpha,
            p.symmetry_k,
            grid.r,
            grid.s_max(),
            ext.base.gamma,
            max_ratio,
            ext.base.residual,
            short(hash)
        ),
        metrics: json!({
            "R": grid.r,
            "S_max": grid.s_max(),
            "gamma": ext.base.gamma,
            "contraction_ratios": ext.base.ratios,
            "residual": ext.base.residual,
            "slice_residual_max": slice_max,
            "perturbations": ext.perturbations,
        }),
        artifacts: vec![Artifact { suffix: "json", bytes: to_json(&out)? }],
        constants: Some(ext.spec.consts),
    })
}

#[derive(Debug, Serialize)]
struct Breakdown {
    l: f64,
    reason: String,
}

#[derive(Debug, Serialize)]
struct MarchJson<'a> {
    schema_version: u32,
    config_hash: &'a str,
    alpha: f64,
    k: usize,
    #[serde(rename = "N")]
    big_n: usize,
    seed: Seed,
    l_start: f64,
    l_end: f64,
    direction: &'static str,
    basis_modes: usize,
    completed: bool,
    breakdown: Option<Breakdown>,
    accepted: usize,
    rejected: usize,
    final_l: f64,
    convergence: Option<ConvergenceReport<f64>>,
    perturbations: &'a [Perturbation],
}

fn march_cmd(cfg: &RunConfig, hash: &str) -> Result<Outcome, CliError> {
    let p = load_profile(cfg)?;
    let basis = MarchBasis::new(&p, cfg.beta_cap.expect("defaulted"))?;
    let (l_start, l_end) = (cfg.l_start.expect("defaulted"), cfg.l_end.expect("defaulted"));
    let seed = cfg.seed.expect("defaulted");
    let (init, perturbations) = match seed {
        Seed::BlowDown => (seed_blow_down(&p.h, &basis.consts, l_start)?, Vec::new()),
        Seed::Exterior => {
            let ext = solve_exterior(cfg, &p)?;
            (seed_from_exterior(&ext.field, &p.h, &basis.consts, l_start)?, ext.perturbations)
        }
    };
    let run = march(&init, l_end, &basis, &MarchOptions::default())?;
    let state = &run.state;
    let n = state.s.n();
    let mut csv = String::from("l");
    for j in 0..n {
        csv.push_str(&format!(",S_{j}"));
    }
    csv.push('\n');
    for cp in &state.history {
        let mut cells = vec![fmt17(cp.l)];
        cells.extend(csv_floats(cp.s.samples()));
        csv.push_str(&csv_line(&cells));
    }
    let convergence = convergence_diagnostics(state, &p.h, &basis.consts).ok();
    let breakdown = run.breakdown.as_ref().map(|e| Breakdown { l: state.l, reason: e.to_string() });
    let out = MarchJson {
        schema_version: SCHEMA_VERSION,
        config_hash: hash,
        alpha: p.alpha,
        k: p.symmetry_k,
        big_n: n,
        seed,
        l_start,
        l_end,
        direction: match run.direction {
            Direction::Up => "up",
            Direction::Down => "down",
        },
        basis_modes: basis.len(),
        completed: run.completed(),
        breakdown,
        accepted: run.accepted,
        rejected: run.rejected,
        final_l: state.l,
        convergence,
        perturbations: &perturbations,
    };
    let status = match &out.breakdown {
        None => "completed".to_string(),
        Some(b) => format!("broke down at l={:.6e} ({})", b.l, b.reason),
    };
    Ok(Outcome {
        summary: format!(
            "march alpha={} k={} {} from {l_start:.6e} to {l_end:.6e}: {status}, {} steps [{}]",
            p.alpha,
            p.symmetry_k,
            seed,
            run.accepted,
            short(hash)
        ),
        metrics: json!({
            "k": p.symmetry_k,
            "completed": out.completed,
            "breakdown": out.breakdown,
            "final_l": state.l,
            "accepted": run.accepted,
            "convergence_rate": out.convergence.as_ref().and_then(|c| c.rate),
            "decade_d": out.convergence.as_ref().map(|c| c.decade_d.clone()),
            "perturbations": perturbations,
        }),
        artifacts: vec![
            Artifact { suffix: "slices.csv", bytes: csv.into_bytes() },
            Artifact { suffix: "diagnostics.json", bytes: to_json(&out)? },
        ],
        constants: Some(basis.consts),
    })
}
