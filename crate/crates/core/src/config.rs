//! Experiment configuration in a flat `key = value` text format.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored.
//! Unknown keys and out-of-domain values are rejected with the key name
//! and line number.

use std::path::PathBuf;
use std::sync::Arc;

use crate::assembly::TrialSpace;
use crate::error::{Error, Result};
use crate::fespace::{Constraint, Family, FeSpace};
use crate::mesh::initial_square_mesh;
use crate::problem::Preset;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    /// Practical MINRES for the ultra-weak first-order system.
    UltraWeak,
    /// Conforming least-squares method for the mild first-order system,
    /// used as a baseline.
    MildBaseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestEnrichment {
    /// `RT_p x S^0_{p+2}`.
    Standard,
    /// `RT_{p+1} x S^0_{p+3}`.
    Enriched,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Refinement {
    Uniform,
    Adaptive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub formulation: Formulation,
    pub trial_degree: usize,
    pub test_enrichment: TestEnrichment,
    pub refinement: Refinement,
    pub theta: f64,
    pub dof_budget: usize,
    pub compute_gamma: bool,
    /// Compute the error against a reference solution of degree
    /// `reference_degree` on every level.
    pub compute_error: bool,
    pub reference_degree: usize,
    pub data: Preset,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            formulation: Formulation::UltraWeak,
            trial_degree: 0,
            test_enrichment: TestEnrichment::Standard,
            refinement: Refinement::Uniform,
            theta: 0.6,
            dof_budget: 10_000,
            compute_gamma: false,
            compute_error: false,
            reference_degree: 4,
            data: Preset::PaperCorner,
            output: PathBuf::from("trace.csv"),
        }
    }
}

pub const MAX_TRIAL_DEGREE: usize = 3;
pub const MAX_REFERENCE_DEGREE: usize = 4;

impl ExperimentConfig {
    /// Trial dimension on the initial mesh.
    pub fn initial_dofs(&self) -> Result<usize> {
        let mesh = Arc::new(initial_square_mesh(&self.data.data().boundary));
        match self.formulation {
            Formulation::UltraWeak => Ok(TrialSpace::new(&mesh, self.trial_degree)?.dim()),
            Formulation::MildBaseline => {
                let (q, w) = mild_spaces(&mesh, self.trial_degree)?;
                Ok(q.dim() + w.dim())
            }
        }
    }
}

/// Spaces `RT_p ∩ H_{0,Γ_N}(div)` and `S^0_{p+1} ∩ H^1_{0,Γ_D}` of the mild
/// baseline.
pub fn mild_spaces(
    mesh: &Arc<crate::mesh::Triangulation>,
    p: usize,
) -> Result<(Arc<FeSpace>, Arc<FeSpace>)> {
    let q = FeSpace::new(
        mesh.clone(),
        Family::RaviartThomas,
        p,
        Constraint::ZeroNormalTraceNeumann,
    )?;
    let w = FeSpace::new(
        mesh.clone(),
        Family::Lagrange,
        p + 1,
        Constraint::ZeroTraceDirichlet,
    )?;
    Ok((Arc::new(q), Arc::new(w)))
}

fn invalid(key: &str, line: usize, message: impl Into<String>) -> Error {
    Error::ConfigValue {
        key: key.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_bool(key: &str, line: usize, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid(
            key,
            line,
            format!("expected true or false, got `{value}`"),
        )),
    }
}

fn parse_usize(key: &str, line: usize, value: &str) -> Result<usize> {
    value.parse().map_err(|_| {
        invalid(
            key,
            line,
            format!("expected a nonnegative integer, got `{value}`"),
        )
    })
}

/// Parses and validates a configuration; absent keys take their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen: Vec<String> = Vec::new();
    let mut lines = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config(format!(
                "line {line}: expected `key = value`, got `{content}`"
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        if seen.iter().any(|k| k == key) {
            return Err(invalid(key, line, "key given more than once"));
        }
        seen.push(key.to_string());
        lines.push((key.to_string(), line));
        match key {
            "formulation" => {
                cfg.formulation = match value {
                    "ultraweak" => Formulation::UltraWeak,
                    "mild-baseline" => Formulation::MildBaseline,
                    _ => return Err(invalid(key, line, "expected ultraweak or mild-baseline")),
                }
            }
            "trial_degree" => {
                cfg.trial_degree = parse_usize(key, line, value)?;
                if cfg.trial_degree > MAX_TRIAL_DEGREE {
                    return Err(invalid(
                        key,
                        line,
                        format!("must lie in 0..={MAX_TRIAL_DEGREE}"),
                    ));
                }
            }
            "test_enrichment" => {
                cfg.test_enrichment = match value {
                    "standard" => TestEnrichment::Standard,
                    "enriched" => TestEnrichment::Enriched,
                    _ => return Err(invalid(key, line, "expected standard or enriched")),
                }
            }
            "refinement" => {
                cfg.refinement = match value {
                    "uniform" => Refinement::Uniform,
                    "adaptive" => Refinement::Adaptive,
                    _ => return Err(invalid(key, line, "expected uniform or adaptive")),
                }
            }
            "theta" => {
                let theta: f64 = value
                    .parse()
                    .map_err(|_| invalid(key, line, format!("expected a number, got `{value}`")))?;
                if !(theta > 0.0 && theta <= 1.0) {
                    return Err(invalid(
                        key,
                        line,
                        format!("must lie in (0, 1], got {theta}"),
                    ));
                }
                cfg.theta = theta;
            }
            "dof_budget" => cfg.dof_budget = parse_usize(key, line, value)?,
            "compute_gamma" => cfg.compute_gamma = parse_bool(key, line, value)?,
            "compute_error" => cfg.compute_error = parse_bool(key, line, value)?,
            "reference_degree" => {
                cfg.reference_degree = parse_usize(key, line, value)?;
                if cfg.reference_degree > MAX_REFERENCE_DEGREE {
                    return Err(invalid(
                        key,
                        line,
                        format!("at most {MAX_REFERENCE_DEGREE} is supported"),
                    ));
                }
            }
            "data" => {
                cfg.data = Preset::parse(value).ok_or_else(|| {
                    invalid(key, line, "expected paper-corner or manufactured-smooth")
                })?
            }
            "output" => {
                if value.is_empty() {
                    return Err(invalid(key, line, "empty path"));
                }
                cfg.output = PathBuf::from(value);
            }
            _ => return Err(Error::Config(format!("line {line}: unknown key `{key}`"))),
        }
    }
    let line_of = |key: &str| lines.iter().find(|(k, _)| k == key).map_or(0, |(_, l)| *l);
    if cfg.reference_degree <= cfg.trial_degree {
        let key = if line_of("reference_degree") > 0 {
            "reference_degree"
        } else {
            "trial_degree"
        };
        return Err(invalid(
            key,
            line_of(key),
            format!(
                "reference degree {} must exceed trial degree {}",
                cfg.reference_degree, cfg.trial_degree
            ),
        ));
    }
    if cfg.formulation == Formulation::MildBaseline
        && !cfg.data.data().has_homogeneous_boundary_data()
    {
        return Err(invalid(
            "formulation",
            line_of("formulation"),
            format!(
                "the mild baseline needs homogeneous boundary data; `{}` has none",
                cfg.data.name()
            ),
        ));
    }
    let initial = cfg.initial_dofs()?;
    if cfg.dof_budget < initial {
        return Err(invalid(
            "dof_budget",
            line_of("dof_budget"),
            format!(
                "budget {} is below the {initial} trial DOFs of the initial mesh",
                cfg.dof_budget
            ),
        ));
    }
    Ok(cfg)
}
