//! Acceptance criteria 1 to 10, one pass/fail line each.
//!
//! Uniform mesh hierarchies and their degree-4 reference solutions are
//! computed once per data set and shared between criteria.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use minresfem::adapt::{doerfler_mark, refinement_study, solve_level, LevelRecord};
use minresfem::analysis::{eoc, eoc_fit, error_estimator, error_vs_exact, error_vs_reference};
use minresfem::assembly::{assemble_ultraweak, SystemBlocks, TestSpace, TrialSpace};
use minresfem::config::{ExperimentConfig, Refinement, TestEnrichment};
use minresfem::experiment::{helmholtz_meshes, infsup_sweep};
use minresfem::fespace::l2_project_scalar;
use minresfem::mesh::{initial_square_mesh, uniform_refine, BoundarySpec, Triangulation};
use minresfem::problem::Preset;
use minresfem::solve::{reduce_spd, solve_saddle, PreconditionerKind};
use minresfem::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REFERENCE_DEGREE: usize = 4;
const BUDGET: usize = 30_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

/// Uniform refinements of the initial mesh of one data set, with reference
/// solutions computed on demand.
struct Hierarchy {
    preset: Preset,
    meshes: Vec<Arc<Triangulation>>,
    references: HashMap<usize, (TrialSpace, Vec<f64>)>,
}

impl Hierarchy {
    fn new(preset: Preset) -> Self {
        let mesh = initial_square_mesh(&preset.data().boundary);
        Self {
            preset,
            meshes: vec![Arc::new(mesh)],
            references: HashMap::new(),
        }
    }

    fn mesh(&mut self, level: usize) -> Arc<Triangulation> {
        while self.meshes.len() <= level {
            let next = uniform_refine(self.meshes.last().unwrap());
            self.meshes.push(Arc::new(next));
        }
        self.meshes[level].clone()
    }

    /// Levels whose degree-`p` trial dimension stays within `budget`.
    fn levels(&mut self, p: usize, budget: usize) -> Vec<usize> {
        let per_triangle = 3 * (p + 1) * (p + 2) / 2;
        (0..)
            .take_while(|l| per_triangle * (4 << (2 * l)) <= budget)
            .collect()
    }

    fn reference(&mut self, level: usize) -> Result<&(TrialSpace, Vec<f64>)> {
        if !self.references.contains_key(&level) {
            let mesh = self.mesh(level);
            let r =
                minresfem::adapt::reference_solution(&mesh, REFERENCE_DEGREE, &self.preset.data())?;
            self.references.insert(level, r);
        }
        Ok(&self.references[&level])
    }

    fn config(&self, p: usize, enrichment: TestEnrichment) -> ExperimentConfig {
        ExperimentConfig {
            trial_degree: p,
            test_enrichment: enrichment,
            data: self.preset,
            ..Default::default()
        }
    }

    /// Solves level `level` and measures against the shared reference.
    fn record(
        &mut self,
        p: usize,
        enrichment: TestEnrichment,
        level: usize,
    ) -> Result<LevelRecord> {
        let mesh = self.mesh(level);
        let cfg = self.config(p, enrichment);
        let outcome = solve_level(&mesh, &cfg, level)?;
        let trial = TrialSpace::new(&mesh, p)?;
        let (rt, xr) = self.reference(level)?;
        let err = error_vs_reference(&trial, &outcome.x, rt, xr)?;
        Ok(LevelRecord {
            err_ref: Some(err),
            ..outcome.record
        })
    }

    fn sweep(
        &mut self,
        p: usize,
        enrichment: TestEnrichment,
        budget: usize,
    ) -> Result<Vec<LevelRecord>> {
        self.levels(p, budget)
            .into_iter()
            .map(|l| self.record(p, enrichment, l))
            .collect()
    }
}

struct Shared {
    corner: Hierarchy,
    smooth: Hierarchy,
    /// Adaptive enriched p = 1 run with errors on its final levels.
    adaptive: Option<Vec<LevelRecord>>,
}

fn last(records: &[LevelRecord], n: usize) -> Vec<(usize, f64)> {
    let s: Vec<(usize, f64)> = records
        .iter()
        .map(|r| (r.dofs_x, r.err_ref.unwrap()))
        .collect();
    s[s.len().saturating_sub(n)..].to_vec()
}

fn fmt_rates(r: &[f64]) -> String {
    r.iter()
        .map(|v| format!("{v:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn helmholtz(_: &mut Shared) -> Result<Verdict> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut additive = true;
    let mut count = 0;
    for spec in [BoundarySpec::dirichlet(), BoundarySpec::left_neumann()] {
        for mesh in helmholtz_meshes(&spec, 6)? {
            let r = minresfem::analysis::helmholtz_verify(&mesh)?;
            additive &= r.dim_rt_div0 + r.dim_grad_cr == 2 * mesh.n_triangles()
                && r.dim_dg2 == 2 * mesh.n_triangles();
            worst = worst.max(r.max_cross_inner_product);
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        additive && worst <= 1e-10 && secs < 30.0,
        format!("{count} meshes, dimensions additive: {additive}, max cross product {worst:.2e} (<= 1e-10), {secs:.1}s (< 30s)"),
    )
}

fn plateau(_: &mut Shared) -> Result<Verdict> {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [0, 1] {
        let cfg = ExperimentConfig {
            trial_degree: p,
            dof_budget: 10_000,
            ..Default::default()
        };
        let rows = infsup_sweep(&cfg, |_| Ok(()))?;
        let g: Vec<f64> = rows.iter().map(|r| r.gamma_tilde).collect();
        let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let tail = &g[g.len().saturating_sub(3)..];
        let hi = tail.iter().cloned().fold(0.0, f64::max);
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let variation = (hi - lo) / hi;
        pass &= rows.len() >= 3 && min >= 0.05 && variation < 0.10;
        parts.push(format!(
            "p={p}: {} levels to {} DOFs, min {min:.4} (>= 0.05), last-3 variation {:.2}% (< 10%)",
            rows.len(),
            rows.last().unwrap().dofs_x,
            100.0 * variation
        ));
    }
    verdict(pass, parts.join("; "))
}

fn mx_norm(blocks: &SystemBlocks, x: &[f64]) -> f64 {
    blocks.mx.bilinear(x, x).max(0.0).sqrt()
}

fn equivalence(sh: &mut Shared) -> Result<Verdict> {
    let mut worst = 0.0f64;
    let mut solves = 0;
    for p in [0, 1] {
        for enrichment in [TestEnrichment::Standard, TestEnrichment::Enriched] {
            for level in sh.corner.levels(p, 10_000) {
                let mesh = sh.corner.mesh(level);
                let trial = TrialSpace::new(&mesh, p)?;
                let test = minresfem::adapt::test_space(&mesh, p, enrichment)?;
                let blocks = assemble_ultraweak(&trial, &test, &Preset::PaperCorner.data())?;
                let saddle = solve_saddle(&blocks)?;
                let reduced = reduce_spd(&blocks, PreconditionerKind::ExactInverse)?;
                let diff: Vec<f64> = saddle
                    .x
                    .iter()
                    .zip(&reduced.x)
                    .map(|(a, b)| a - b)
                    .collect();
                worst = worst.max(mx_norm(&blocks, &diff) / mx_norm(&blocks, &saddle.x));
                solves += 1;
            }
        }
    }
    verdict(
        worst <= 1e-8,
        format!("{solves} solves, max relative X-norm difference {worst:.2e} (<= 1e-8)"),
    )
}

fn quasi_optimality(sh: &mut Shared) -> Result<Verdict> {
    let data = Preset::ManufacturedSmooth.data();
    let exact = data.exact.clone().unwrap();
    let mut worst = 0.0f64;
    let mut count = 0;
    for p in [0, 1] {
        for level in sh.smooth.levels(p, 10_000) {
            let mesh = sh.smooth.mesh(level);
            let trial = TrialSpace::new(&mesh, p)?;
            let test = TestSpace::standard(&mesh, p)?;
            let blocks = assemble_ultraweak(&trial, &test, &data)?;
            let x = solve_saddle(&blocks)?.x;
            let mut best = Vec::with_capacity(trial.dim());
            for k in 0..2 {
                let g = exact.grad.clone();
                best.extend(l2_project_scalar(&trial.scalar, move |x| g(x)[k])?.into_coeffs());
            }
            let u = exact.u.clone();
            best.extend(l2_project_scalar(&trial.scalar, move |x| u(x))?.into_coeffs());
            let ratio =
                error_vs_exact(&trial, &x, &exact)? / error_vs_exact(&trial, &best, &exact)?;
            worst = worst.max(ratio);
            count += 1;
        }
    }
    verdict(
        worst <= 3.0,
        format!("{count} levels, max error / projection error {worst:.3} (<= 3)"),
    )
}

fn smooth_rates(sh: &mut Shared) -> Result<Verdict> {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [0, 1, 2] {
        let records = sh.smooth.sweep(p, TestEnrichment::Standard, BUDGET)?;
        let rates = eoc(&last(&records, 3))?;
        let target = (p + 1) as f64 / 2.0;
        pass &= rates.len() == 2 && rates.iter().all(|r| (r - target).abs() <= 0.15);
        parts.push(format!(
            "p={p}: [{}] vs {target:.1} +- 0.15",
            fmt_rates(&rates)
        ));
    }
    verdict(pass, parts.join("; "))
}

fn saturation(sh: &mut Shared) -> Result<Verdict> {
    let mut fits = Vec::new();
    for p in [0, 2] {
        let records = sh.corner.sweep(p, TestEnrichment::Standard, BUDGET)?;
        fits.push((records.last().unwrap().dofs_x, eoc_fit(&last(&records, 3))?));
    }
    let gap = fits[1].1 - fits[0].1;
    verdict(
        gap < 0.15,
        format!(
            "p=0 rate {:.3} (to {} DOFs), p=2 rate {:.3} (to {} DOFs), gap {gap:.3} (< 0.15)",
            fits[0].1, fits[0].0, fits[1].1, fits[1].0
        ),
    )
}

fn adaptive(sh: &mut Shared) -> Result<Verdict> {
    let cfg = ExperimentConfig {
        trial_degree: 1,
        test_enrichment: TestEnrichment::Enriched,
        refinement: Refinement::Adaptive,
        theta: 0.6,
        dof_budget: BUDGET,
        ..Default::default()
    };
    let mut levels: Vec<(Arc<Triangulation>, Vec<f64>, LevelRecord)> = Vec::new();
    refinement_study(&cfg, |mesh, outcome| {
        levels.push((mesh.clone(), outcome.x.clone(), outcome.record.clone()));
        Ok(())
    })?;
    let data = Preset::PaperCorner.data();
    let start = levels.len().saturating_sub(4);
    let mut tail = Vec::new();
    for (mesh, x, record) in &levels[start..] {
        let trial = TrialSpace::new(mesh, 1)?;
        let (rt, xr) = minresfem::adapt::reference_solution(mesh, REFERENCE_DEGREE, &data)?;
        tail.push(LevelRecord {
            err_ref: Some(error_vs_reference(&trial, x, &rt, &xr)?),
            ..record.clone()
        });
    }
    let adaptive_rate = eoc_fit(&last(&tail, 4))?;
    let estimator_rate = eoc_fit(
        &tail
            .iter()
            .map(|r| (r.dofs_x, r.estimator))
            .collect::<Vec<_>>(),
    )?;
    let uniform = sh.corner.sweep(1, TestEnrichment::Enriched, BUDGET)?;
    let uniform_rate = eoc_fit(&last(&uniform, 4))?;
    sh.adaptive = Some(tail);
    verdict(
        adaptive_rate >= 0.85 && adaptive_rate - uniform_rate >= 0.3,
        format!(
            "{} levels to {} DOFs; final-4 err_ref rate {adaptive_rate:.3} (>= 0.85), estimator rate {estimator_rate:.3}, uniform rate {uniform_rate:.3}, gain {:.3} (>= 0.3)",
            levels.len(),
            levels.last().unwrap().2.dofs_x,
            adaptive_rate - uniform_rate
        ),
    )
}

fn estimator_consistency(sh: &mut Shared) -> Result<Verdict> {
    let data = Preset::PaperCorner.data();
    let mut identity = 0.0f64;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut solves = 0;
    for p in [0, 1] {
        for level in sh.corner.levels(p, BUDGET) {
            let mesh = sh.corner.mesh(level);
            let trial = TrialSpace::new(&mesh, p)?;
            let test = TestSpace::enriched(&mesh, p)?;
            let blocks = assemble_ultraweak(&trial, &test, &data)?;
            let sol = solve_saddle(&blocks)?;
            let report = error_estimator(&sol, &test, &blocks.a)?;
            let y = sol
                .y
                .as_ref()
                .ok_or_else(|| Error::MissingMultipliers("saddle solve".into()))?;
            let e2 = report.estimator * report.estimator;
            let sum: f64 = report.indicators.iter().map(|e| e * e).sum();
            let yay = blocks.a.bilinear(y, y);
            identity = identity
                .max((e2 - sum).abs() / e2)
                .max((e2 - yay).abs() / e2);
            let (rt, xr) = sh.corner.reference(level)?;
            let ratio = report.estimator / error_vs_reference(&trial, &sol.x, rt, xr)?;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            solves += 1;
        }
    }
    if let Some(tail) = &sh.adaptive {
        for r in tail {
            let ratio = r.estimator / r.err_ref.unwrap();
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }
    verdict(
        identity <= 1e-10 && lo >= 0.2 && hi <= 5.0,
        format!("{solves} uniform solves; max identity deviation {identity:.2e} (<= 1e-10); E/err_ref in [{lo:.3}, {hi:.3}] (within [0.2, 5])"),
    )
}

fn minimality(_: &mut Shared) -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_231_017);
    let mut failures = 0;
    for case in 0..200 {
        let n = rng.random_range(1..=15);
        let ind: Vec<f64> = (0..n)
            .map(|_| match case % 3 {
                0 => rng.random_range(0.0..1.0),
                // coarse values give ties and exact zeros
                1 => rng.random_range(0..4) as f64,
                _ => rng.random_range(0.0f64..1.0).powi(6),
            })
            .collect();
        if ind.iter().all(|e| *e == 0.0) {
            continue;
        }
        let theta: f64 = 1.0 - rng.random_range(0.0..1.0);
        let marked = doerfler_mark(&ind, theta)?.marked;
        let sq: Vec<f64> = ind.iter().map(|e| e * e).collect();
        let total: f64 = sq.iter().sum();
        let bulk = |set: &mut dyn Iterator<Item = usize>| {
            set.map(|i| sq[i]).sum::<f64>() >= theta * total * (1.0 - 1e-14)
        };
        let minimum = (0u32..1 << n)
            .filter(|mask| bulk(&mut (0..n).filter(|i| mask >> i & 1 == 1)))
            .map(|mask| mask.count_ones() as usize)
            .min()
            .unwrap();
        if !bulk(&mut marked.indices().iter().copied()) || marked.len() != minimum {
            failures += 1;
        }
    }
    verdict(
        failures == 0,
        format!("200 random cases, {failures} violations of bulk or minimality"),
    )
}

fn determinism(_: &mut Shared) -> Result<Verdict> {
    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "trial_degree = 1\ntest_enrichment = enriched\nrefinement = adaptive\ndof_budget = 1500\ncompute_gamma = true\ncompute_error = true\noutput = trace.csv\n",
    )?;
    let run = |out: &Path| -> Result<Vec<u8>> {
        let status = Command::new(env!("CARGO_BIN_EXE_minresfem"))
            .arg("run")
            .arg(&cfg)
            .arg("--serial")
            .arg("--out")
            .arg(out)
            .output()?;
        if !status.status.success() {
            return Err(Error::Numerical(
                String::from_utf8_lossy(&status.stderr).into_owned(),
            ));
        }
        Ok(std::fs::read(out.join("trace.csv"))?)
    };
    let a = run(&dir.path().join("a"))?;
    let b = run(&dir.path().join("b"))?;
    let rows = a.iter().filter(|c| **c == b'\n').count().saturating_sub(1);
    verdict(
        a == b && rows > 1,
        format!("{rows} rows, {} bytes, identical: {}", a.len(), a == b),
    )
}

type Criterion = fn(&mut Shared) -> Result<Verdict>;

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("discrete Helmholtz decomposition", helmholtz),
        ("inf-sup plateau", plateau),
        ("saddle and SPD reduction agree", equivalence),
        ("quasi-optimality", quasi_optimality),
        ("smooth convergence rates", smooth_rates),
        ("corner saturation", saturation),
        ("adaptive rate recovery", adaptive),
        ("estimator consistency", estimator_consistency),
        ("Dorfler minimality", minimality),
        ("serial determinism", determinism),
    ];
    let mut shared = Shared {
        corner: Hierarchy::new(Preset::PaperCorner),
        smooth: Hierarchy::new(Preset::ManufacturedSmooth),
        adaptive: None,
    };
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check(&mut shared) {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {:>2} {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
