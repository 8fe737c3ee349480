use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use qgraph::approx::{convergence_table, SmoothProfile};
use qgraph::construction::{self, Check, EnvelopeInputs};
use qgraph::current::{affine_graph, branched_graph, random_lipschitz_graph, BranchedSpec, MeshSpec};
use qgraph::energy::{envelope_bracket, envelope_lower_at_zero, EnvelopeBracket, OptimizerConfig, PsiConfig, Target};
use qgraph::measures::{
    adversarial_search, obstruction_report, obstruction_report_current, Comparison, ObstructionRow,
};
use qgraph::Matrix22;

use crate::{Family, ProfileArg, TargetArg};

/// Smallest admissible mixed-to-vertical mass ratio, with its slack.
const RATIO_FLOOR: f64 = 1.0 / 200.0 - 1e-8;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qgraph::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {}", .0.display(), .1)]
    Io(PathBuf, std::io::Error),
    #[error("serialization: {0}")]
    Serialize(String),
}

/// Rendered output plus the names of failed invariants.
pub struct Outcome {
    pub body: String,
    pub extension: &'static str,
    pub failures: Vec<String>,
}

fn json<T: Serialize>(value: &T, failures: Vec<String>) -> Result<Outcome, CliError> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| CliError::Serialize(e.to_string()))?;
    body.push('\n');
    Ok(Outcome { body, extension: "json", failures })
}

fn csv<T: Serialize>(rows: &[T], failures: Vec<String>) -> Result<Outcome, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Serialize(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))?;
    let body = String::from_utf8(bytes).map_err(|e| CliError::Serialize(e.to_string()))?;
    Ok(Outcome { body, extension: "csv", failures })
}

fn optimizer(mesh: usize, starts: usize, seed: u64) -> OptimizerConfig {
    OptimizerConfig { mesh_n: mesh, starts, seed, ..Default::default() }
}

pub fn construct(eps: f64) -> Result<Outcome, CliError> {
    let report = construction::verify(eps)?;
    let failures = report.failures().map(|c| c.name.clone()).collect();
    json(&report, failures)
}

pub fn obstruction(
    eps: f64,
    q: usize,
    samples: usize,
    seed: u64,
    family: Family,
    mesh: usize,
    lipschitz: f64,
) -> Result<Outcome, CliError> {
    if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
        return Err(CliError::Usage(format!("--lipschitz must be finite and nonnegative, got {lipschitz}")));
    }
    let bundle = construction::build(eps)?;
    let mut rows: Vec<ObstructionRow> = Vec::new();
    match family {
        Family::Random => {
            for i in 0..samples as u64 {
                let s = seed.wrapping_add(i);
                let g = random_lipschitz_graph(s, lipschitz, q, mesh)?;
                rows.push(obstruction_report(&g, &bundle, Comparison::Normalized)?.row(&format!("random-{i}"), s));
            }
        }
        Family::Flat => {
            for i in 0..samples {
                let n = mesh + i;
                let g = affine_graph(MeshSpec::unit(n), &[(q as u32, [0.0, 0.0], Matrix22::ZERO)])?;
                rows.push(obstruction_report(&g, &bundle, Comparison::Normalized)?.row(&format!("flat-n{n}"), seed));
            }
        }
        Family::Branched => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..samples {
                let amplitude = rng.gen_range(0.1..1.0);
                let b = branched_graph(BranchedSpec::new(q, amplitude, 1.0))?;
                let report = obstruction_report_current(&b.current, q, &bundle, Comparison::Normalized)?;
                rows.push(report.row(&format!("branched-{i}"), seed));
            }
        }
        Family::Adversarial => {
            for p in adversarial_search(&bundle, q, mesh, samples, seed)? {
                rows.push(p.report.row(&format!("adversarial-{}", p.iteration), seed));
            }
        }
    }
    let failures = rows
        .iter()
        .filter(|r| r.m_v > 0.0 && r.ratio < RATIO_FLOOR)
        .map(|r| format!("mixed_vertical_ratio ({}: {:.6e} < {RATIO_FLOOR:.6e})", r.graph_id, r.ratio))
        .collect();
    csv(&rows, failures)
}

fn target(t: TargetArg) -> Target {
    match t {
        TargetArg::Zero => Target::Zero,
        TargetArg::Ray1 => Target::Ray(0),
        TargetArg::Ray2 => Target::Ray(1),
        TargetArg::Ray3 => Target::Ray(2),
    }
}

#[derive(Serialize)]
struct EnvelopeOutput {
    bracket: EnvelopeBracket,
    checks: Vec<Check>,
}

pub fn envelope(eps: f64, q: usize, t: TargetArg, mesh: usize, starts: usize, seed: u64) -> Result<Outcome, CliError> {
    let bracket = envelope_bracket(eps, q, target(t), &optimizer(mesh, starts, seed))?;
    let mut checks = Vec::new();
    match &bracket.lower {
        Some(lower) => {
            let order = (lower.value - bracket.upper.value).max(0.0);
            checks.push(Check::new("bracket_order", order, 1e-9));
            checks.push(Check::new("lower_positive", if lower.value > 0.0 { 0.0 } else { 1.0 }, 0.0));
            checks.push(Check::new("upper_at_most_q", (bracket.upper.value - q as f64).max(0.0), 1e-12));
            checks.push(Check::new("norm_agreement", lower.norm_agreement, 1e-12));
        }
        None => checks.push(Check::new("upper_zero_at_ray", bracket.upper.value.abs(), 0.0)),
    }
    let failures = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    json(&EnvelopeOutput { bracket, checks }, failures)
}

pub fn approx(profile: ProfileArg, ks: &[usize], eps: f64) -> Result<Outcome, CliError> {
    if ks.is_empty() || ks.iter().any(|&k| k < 2) {
        return Err(CliError::Usage(format!("--k needs integers >= 2, got {ks:?}")));
    }
    let f = match profile {
        ProfileArg::Smooth => SmoothProfile::smooth(),
        ProfileArg::Twosheet => SmoothProfile::two_sheet(),
    };
    let cfg = PsiConfig::new(eps)?;
    let reports = convergence_table(&f, &f.domain, ks, &cfg)?;
    let mut failures = Vec::new();
    for r in &reports {
        if r.bad_set > 2.0 / r.k as f64 {
            failures.push(format!("bad_set_measure (k = {}: {:.6} > {:.6})", r.k, r.bad_set, 2.0 / r.k as f64));
        }
        if r.trace_error > 1e-9 {
            failures.push(format!("boundary_trace (k = {}: {:.3e})", r.k, r.trace_error));
        }
    }
    let rows: Vec<_> = reports.iter().map(|r| r.row()).collect();
    csv(&rows, failures)
}

fn read_inputs(path: &Path) -> Result<EnvelopeInputs, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("missing or malformed envelope inputs in {}: {e}", path.display())))
}

pub fn certificate(
    eps: f64,
    q: usize,
    inputs: Option<&Path>,
    mesh: usize,
    starts: usize,
    seed: u64,
) -> Result<Outcome, CliError> {
    let env = match inputs {
        Some(path) => read_inputs(path)?,
        None => {
            let opt = optimizer(mesh, starts, seed);
            let mut upper = [0.0; 3];
            for (i, u) in upper.iter_mut().enumerate() {
                *u = envelope_bracket(eps, q, Target::Ray(i), &opt)?.upper.value;
            }
            EnvelopeInputs { upper_at_rays: upper, lower_at_zero: envelope_lower_at_zero(eps, q)?.value }
        }
    };
    let cert = construction::certificate(eps, q, &env)?;
    let failures = if cert.valid { Vec::new() } else { vec!["certificate_valid".to_string()] };
    json(&cert, failures)
}
