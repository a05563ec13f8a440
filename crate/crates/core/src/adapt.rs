//! Dörfler marking and the solve, estimate, mark, refine loop.

use std::sync::Arc;

use crate::analysis::{
    error_estimator, error_vs_reference, infsup_gamma, l2_error_scalar, l2_error_vector,
};
use crate::assembly::{assemble_ultraweak, mild_fosls_system, TestSpace, TrialSpace};
use crate::config::{mild_spaces, ExperimentConfig, Formulation, Refinement, TestEnrichment};
use crate::error::{Error, Result};
use crate::fespace::DiscreteFunction;
use crate::mesh::{bisect, initial_square_mesh, uniform_refine, MarkSet, Triangulation};
use crate::problem::ProblemData;
use crate::solve::{solve_saddle, sparse_solve};

/// Total estimator below which a level counts as converged.
pub const CONVERGED_ESTIMATOR: f64 = 1e-12;

/// Result of a bulk-marking step.
#[derive(Clone, Debug, PartialEq)]
pub struct Marking {
    pub marked: MarkSet,
    /// All indicators vanish; nothing is marked.
    pub converged: bool,
}

/// Smallest set `M` with `sum_{T in M} eta_T^2 >= theta sum_T eta_T^2`,
/// picked greedily by decreasing indicator (lower index first on ties).
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Result<Marking> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "marking parameter {theta} outside (0, 1]"
        )));
    }
    if let Some(bad) = indicators.iter().find(|e| !e.is_finite() || **e < 0.0) {
        return Err(Error::InvalidInput(format!(
            "indicators must be finite and nonnegative, got {bad}"
        )));
    }
    let squares: Vec<f64> = indicators.iter().map(|e| e * e).collect();
    let mut order: Vec<usize> = (0..squares.len()).filter(|&i| squares[i] > 0.0).collect();
    if order.is_empty() {
        return Ok(Marking {
            marked: MarkSet::empty(),
            converged: true,
        });
    }
    order.sort_by(|&i, &j| squares[j].total_cmp(&squares[i]).then(i.cmp(&j)));
    // tail sums from the smallest upwards; the prefix stops once the tail
    // left behind is at most (1 - theta) of the total, so theta = 1 keeps
    // every positive indicator regardless of rounding
    let mut tail = vec![0.0; order.len() + 1];
    for k in (0..order.len()).rev() {
        tail[k] = tail[k + 1] + squares[order[k]];
    }
    let allowance = (1.0 - theta) * tail[0];
    let count = (1..=order.len())
        .find(|&k| tail[k] <= allowance)
        .unwrap_or(order.len());
    order.truncate(count);
    Ok(Marking {
        marked: MarkSet::new(order, indicators.len())?,
        converged: false,
    })
}

/// One row of an adaptive or uniform refinement study.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub ntri: usize,
    pub dofs_x: usize,
    pub gamma_tilde: Option<f64>,
    pub estimator: f64,
    pub err_ref: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct AdaptiveTrace {
    pub records: Vec<LevelRecord>,
    /// The estimator of the last level is below [`CONVERGED_ESTIMATOR`].
    pub converged: bool,
}

impl AdaptiveTrace {
    /// `(dofs_x, estimator)` pairs.
    pub fn estimator_series(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .map(|r| (r.dofs_x, r.estimator))
            .collect()
    }

    /// `(dofs_x, err_ref)` pairs of the levels where the error was computed.
    pub fn error_series(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.err_ref.map(|e| (r.dofs_x, e)))
            .collect()
    }
}

/// Everything computed on one mesh.
#[derive(Clone, Debug)]
pub struct LevelOutcome {
    pub record: LevelRecord,
    pub indicators: Vec<f64>,
    /// Trial coefficients of the computed solution.
    pub x: Vec<f64>,
}

/// Test space selected by the configuration.
pub fn test_space(
    mesh: &Arc<Triangulation>,
    p: usize,
    enrichment: TestEnrichment,
) -> Result<TestSpace> {
    match enrichment {
        TestEnrichment::Standard => TestSpace::standard(mesh, p),
        TestEnrichment::Enriched => TestSpace::enriched(mesh, p),
    }
}

/// Ultra-weak MINRES solution of degree `degree` with the enriched test
/// space, used as the reference for `err_ref`.
pub fn reference_solution(
    mesh: &Arc<Triangulation>,
    degree: usize,
    data: &ProblemData,
) -> Result<(TrialSpace, Vec<f64>)> {
    let trial = TrialSpace::new(mesh, degree)?;
    let test = TestSpace::enriched(mesh, degree)?;
    let blocks = assemble_ultraweak(&trial, &test, data)?;
    let sol = solve_saddle(&blocks)?;
    Ok((trial, sol.x))
}

/// Trial dimension of the configured method on `mesh`.
pub fn trial_dofs(mesh: &Arc<Triangulation>, cfg: &ExperimentConfig) -> Result<usize> {
    match cfg.formulation {
        Formulation::UltraWeak => Ok(TrialSpace::new(mesh, cfg.trial_degree)?.dim()),
        Formulation::MildBaseline => {
            let (q, w) = mild_spaces(mesh, cfg.trial_degree)?;
            Ok(q.dim() + w.dim())
        }
    }
}

fn at_level(level: usize, err: Error) -> Error {
    match err {
        Error::InfSup(m) => Error::InfSup(format!("level {level}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("level {level}: {m}")),
        other => other,
    }
}

/// Solves, estimates and optionally measures on one mesh.
pub fn solve_level(
    mesh: &Arc<Triangulation>,
    cfg: &ExperimentConfig,
    level: usize,
) -> Result<LevelOutcome> {
    let data = cfg.data.data();
    let outcome = match cfg.formulation {
        Formulation::UltraWeak => solve_ultraweak_level(mesh, cfg, &data, level),
        Formulation::MildBaseline => solve_mild_level(mesh, cfg, &data, level),
    };
    outcome.map_err(|e| at_level(level, e))
}

fn solve_ultraweak_level(
    mesh: &Arc<Triangulation>,
    cfg: &ExperimentConfig,
    data: &ProblemData,
    level: usize,
) -> Result<LevelOutcome> {
    let trial = TrialSpace::new(mesh, cfg.trial_degree)?;
    let test = test_space(mesh, cfg.trial_degree, cfg.test_enrichment)?;
    let blocks = assemble_ultraweak(&trial, &test, data)?;
    let sol = solve_saddle(&blocks)?;
    let report = error_estimator(&sol, &test, &blocks.a)?;
    let gamma_tilde = if cfg.compute_gamma {
        Some(infsup_gamma(&blocks.a, &blocks.b, &blocks.mx)?.gamma_tilde)
    } else {
        None
    };
    let err_ref = if cfg.compute_error {
        let (rt, xr) = reference_solution(mesh, cfg.reference_degree, data)?;
        Some(error_vs_reference(&trial, &sol.x, &rt, &xr)?)
    } else {
        None
    };
    log::info!(
        "level {level}: ntri={} dofs_x={} estimator={:.6e}",
        mesh.n_triangles(),
        trial.dim(),
        report.estimator
    );
    Ok(LevelOutcome {
        record: LevelRecord {
            level,
            ntri: mesh.n_triangles(),
            dofs_x: trial.dim(),
            gamma_tilde,
            estimator: report.estimator,
            err_ref,
        },
        indicators: report.indicators,
        x: sol.x,
    })
}

/// The mild baseline has no test space: its estimator is the least-squares
/// functional and its error is measured against the exact solution.
fn solve_mild_level(
    mesh: &Arc<Triangulation>,
    cfg: &ExperimentConfig,
    data: &ProblemData,
    level: usize,
) -> Result<LevelOutcome> {
    let (qs, ws) = mild_spaces(mesh, cfg.trial_degree)?;
    let (m, rhs) = mild_fosls_system(&qs, &ws, data)?;
    let z = sparse_solve(&m, &rhs)?;
    let q = DiscreteFunction::new(qs.clone(), z[..qs.dim()].to_vec())?;
    let w = DiscreteFunction::new(ws.clone(), z[qs.dim()..].to_vec())?;
    let indicators = crate::analysis::mild_residual_indicators(&q, &w, data)?;
    let estimator = indicators.iter().map(|e| e * e).sum::<f64>().sqrt();
    let err_ref = match (&data.exact, cfg.compute_error) {
        (Some(exact), true) => {
            let ep = l2_error_vector(&q, |x| (exact.grad)(x))?;
            let eu = l2_error_scalar(&w, |x| (exact.u)(x))?;
            Some(ep.hypot(eu))
        }
        _ => None,
    };
    Ok(LevelOutcome {
        record: LevelRecord {
            level,
            ntri: mesh.n_triangles(),
            dofs_x: z.len(),
            gamma_tilde: None,
            estimator,
            err_ref,
        },
        indicators,
        x: z,
    })
}

/// Runs the refinement study. Level 0 is always solved; afterwards the loop
/// stops before a mesh whose trial dimension would exceed the budget, or
/// when adaptive marking finds nothing to refine because every indicator
/// vanishes. `on_record` sees each row as it is produced.
pub fn adaptive_loop(
    cfg: &ExperimentConfig,
    mut on_record: impl FnMut(&LevelRecord) -> Result<()>,
) -> Result<AdaptiveTrace> {
    refinement_study(cfg, |_, outcome| on_record(&outcome.record))
}

/// [`adaptive_loop`] with access to every mesh and its full outcome.
pub fn refinement_study(
    cfg: &ExperimentConfig,
    mut visit: impl FnMut(&Arc<Triangulation>, &LevelOutcome) -> Result<()>,
) -> Result<AdaptiveTrace> {
    let data = cfg.data.data();
    let mut mesh = Arc::new(initial_square_mesh(&data.boundary));
    let mut trace = AdaptiveTrace::default();
    for level in 0.. {
        let outcome = solve_level(&mesh, cfg, level)?;
        visit(&mesh, &outcome)?;
        trace.converged = outcome.record.estimator < CONVERGED_ESTIMATOR;
        trace.records.push(outcome.record);
        let next = match cfg.refinement {
            Refinement::Uniform => uniform_refine(&mesh),
            Refinement::Adaptive => {
                // a vanishing estimator carries no information to mark with
                if trace.converged {
                    break;
                }
                let marking = doerfler_mark(&outcome.indicators, cfg.theta)?;
                bisect(&mesh, &marking.marked)
            }
        };
        let next = Arc::new(next);
        if trial_dofs(&next, cfg)? > cfg.dof_budget {
            break;
        }
        mesh = next;
    }
    Ok(trace)
}
