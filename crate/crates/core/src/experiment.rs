//! Experiment drivers behind the command line: refinement studies written as
//! CSV, inf-sup sweeps and discrete Helmholtz decomposition sweeps.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::adapt::{adaptive_loop, test_space, AdaptiveTrace, LevelRecord, CONVERGED_ESTIMATOR};
use crate::analysis::{eoc, eoc_fit, helmholtz_verify, infsup_gamma, HelmholtzReport};
use crate::assembly::{assemble_ultraweak, TrialSpace};
use crate::config::{ExperimentConfig, Formulation};
use crate::error::{Error, Result};
use crate::mesh::{
    bisect, initial_square_mesh, uniform_refine, BoundarySpec, MarkSet, Triangulation,
};

pub const CSV_HEADER: [&str; 6] = [
    "level",
    "ntri",
    "dofs_x",
    "gamma_tilde",
    "estimator",
    "err_ref",
];

fn number(v: f64) -> String {
    format!("{v:.16e}")
}

fn optional(v: Option<f64>) -> String {
    v.map(number).unwrap_or_default()
}

fn row(r: &LevelRecord) -> [String; 6] {
    [
        r.level.to_string(),
        r.ntri.to_string(),
        r.dofs_x.to_string(),
        optional(r.gamma_tilde),
        number(r.estimator),
        optional(r.err_ref),
    ]
}

/// CSV writer that flushes after every row, so partial output survives a
/// failure on a later level.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl TraceWriter<File> {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        Self::new(File::create(path)?)
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(sink);
        inner.write_record(CSV_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &LevelRecord) -> Result<()> {
        self.inner.write_record(row(record))?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// Writes a whole trace; an empty trace gives a header-only file.
pub fn emit_csv(trace: &AdaptiveTrace, path: &Path) -> Result<()> {
    let mut w = TraceWriter::create(path)?;
    for r in &trace.records {
        w.write(r)?;
    }
    Ok(())
}

/// Reads a trace written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<LevelRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(Error::InvalidInput(format!("unexpected header {header:?}")));
    }
    let bad = |what: &str, v: &str| Error::InvalidInput(format!("cannot parse {what} `{v}`"));
    let int = |v: &str, what: &str| v.parse::<usize>().map_err(|_| bad(what, v));
    let real = |v: &str, what: &str| v.parse::<f64>().map_err(|_| bad(what, v));
    let opt = |v: &str, what: &str| {
        if v.is_empty() {
            Ok(None)
        } else {
            real(v, what).map(Some)
        }
    };
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(LevelRecord {
                level: int(&rec[0], "level")?,
                ntri: int(&rec[1], "ntri")?,
                dofs_x: int(&rec[2], "dofs_x")?,
                gamma_tilde: opt(&rec[3], "gamma_tilde")?,
                estimator: real(&rec[4], "estimator")?,
                err_ref: opt(&rec[5], "err_ref")?,
            })
        })
        .collect()
}

/// Runs the configured study, streaming rows to `csv_path`, and writes a
/// human-readable summary with observed convergence rates to `summary`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    csv_path: &Path,
    summary: &mut dyn Write,
) -> Result<AdaptiveTrace> {
    let mut writer = TraceWriter::create(csv_path)?;
    let trace = adaptive_loop(cfg, |r| writer.write(r))?;
    write_summary(&trace, summary)?;
    Ok(trace)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"))
}

/// Table of the trace with rates in DOFs between consecutive levels and a
/// least-squares rate over the last three levels.
pub fn write_summary(trace: &AdaptiveTrace, out: &mut dyn Write) -> Result<()> {
    let est = trace.estimator_series();
    let err = trace.error_series();
    let est_rates = if est.len() >= 2 && est.iter().all(|(_, v)| *v > 0.0) {
        eoc(&est)?
    } else {
        Vec::new()
    };
    let err_rates = if err.len() == est.len() && err.len() >= 2 && err.iter().all(|(_, v)| *v > 0.0)
    {
        eoc(&err)?
    } else {
        Vec::new()
    };
    writeln!(
        out,
        "{:>5} {:>8} {:>9} {:>11} {:>11} {:>7} {:>11} {:>7}",
        "level", "ntri", "dofs_x", "gamma", "estimator", "eoc", "err_ref", "eoc"
    )?;
    for (i, r) in trace.records.iter().enumerate() {
        let rate = |rates: &[f64]| {
            if i == 0 {
                "-".to_string()
            } else {
                rates
                    .get(i - 1)
                    .map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
            }
        };
        writeln!(
            out,
            "{:>5} {:>8} {:>9} {:>11} {:>11.4e} {:>7} {:>11} {:>7}",
            r.level,
            r.ntri,
            r.dofs_x,
            fmt_opt(r.gamma_tilde),
            r.estimator,
            rate(&est_rates),
            fmt_opt(r.err_ref),
            rate(&err_rates)
        )?;
    }
    let tail = |s: &[(usize, f64)]| -> Option<f64> {
        if s.len() >= 3 && s.iter().all(|(_, v)| *v > 0.0) {
            eoc_fit(&s[s.len() - 3..]).ok()
        } else {
            None
        }
    };
    if let Some(r) = tail(&est) {
        writeln!(out, "estimator rate over the last 3 levels: {r:.3}")?;
    }
    if let Some(r) = tail(&err) {
        writeln!(out, "err_ref rate over the last 3 levels: {r:.3}")?;
    }
    if trace.converged {
        writeln!(
            out,
            "estimator below {CONVERGED_ESTIMATOR:e} on the last level"
        )?;
    }
    Ok(())
}

/// One row of an inf-sup sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct InfSupRow {
    pub level: usize,
    pub ntri: usize,
    pub dofs_x: usize,
    pub dofs_y: usize,
    pub gamma_tilde: f64,
}

/// Inf-sup constants of the configured trial/test pair on uniformly refined
/// meshes up to the DOF budget.
pub fn infsup_sweep(
    cfg: &ExperimentConfig,
    mut on_row: impl FnMut(&InfSupRow) -> Result<()>,
) -> Result<Vec<InfSupRow>> {
    if cfg.formulation != Formulation::UltraWeak {
        return Err(Error::Unsupported(
            "inf-sup sweeps apply to the ultra-weak formulation".into(),
        ));
    }
    let data = cfg.data.data();
    let mut mesh = Arc::new(initial_square_mesh(&data.boundary));
    let mut rows = Vec::new();
    for level in 0.. {
        let trial = TrialSpace::new(&mesh, cfg.trial_degree)?;
        if level > 0 && trial.dim() > cfg.dof_budget {
            break;
        }
        let test = test_space(&mesh, cfg.trial_degree, cfg.test_enrichment)?;
        let blocks = assemble_ultraweak(&trial, &test, &data)?;
        let report = infsup_gamma(&blocks.a, &blocks.b, &blocks.mx)?;
        let r = InfSupRow {
            level,
            ntri: mesh.n_triangles(),
            dofs_x: trial.dim(),
            dofs_y: test.dim(),
            gamma_tilde: report.gamma_tilde,
        };
        on_row(&r)?;
        rows.push(r);
        mesh = Arc::new(uniform_refine(&mesh));
    }
    Ok(rows)
}

/// Mesh sequence for Helmholtz checks: uniform refinements alternate with
/// local bisection of the triangles touching the origin, so the sequence
/// contains genuinely graded newest-vertex-bisection meshes.
pub fn helmholtz_meshes(boundary: &BoundarySpec, levels: usize) -> Result<Vec<Arc<Triangulation>>> {
    let mut meshes = vec![Arc::new(initial_square_mesh(boundary))];
    while meshes.len() < levels {
        let last = meshes.last().unwrap();
        let next = if meshes.len() % 2 == 1 {
            uniform_refine(last)
        } else {
            let near: Vec<usize> = (0..last.n_triangles())
                .filter(|&t| last.corners(t).iter().any(|c| c[0].hypot(c[1]) < 1e-12))
                .collect();
            bisect(last, &MarkSet::new(near, last.n_triangles())?)
        };
        meshes.push(Arc::new(next));
    }
    meshes.truncate(levels);
    Ok(meshes)
}

/// Helmholtz decomposition reports for both boundary partitions.
pub fn helmholtz_sweep(levels: usize) -> Result<Vec<(&'static str, HelmholtzReport)>> {
    let cases = [
        ("dirichlet", BoundarySpec::dirichlet()),
        ("left-neumann", BoundarySpec::left_neumann()),
    ];
    let mut out = Vec::new();
    for (name, spec) in cases {
        for mesh in helmholtz_meshes(&spec, levels)? {
            out.push((name, helmholtz_verify(&mesh)?));
        }
    }
    Ok(out)
}
