//! Experiment drivers. Every driver writes its outputs plus
//! `effective_config.toml` into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use wavectl_core::{
    assemble_gramian, check_evolution_axioms, controllability_certificate, evaluate_on_grid, growth_bound_violations,
    impulse_bounds, project_to_modes, Error as CoreError, MildSolverF64, ModeBasisF64, SpectralFieldF64,
};

use crate::config::ExperimentSpec;
use crate::error::{CliError, CliResult};

/// `{:.16e}`: 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn create_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn write_text(path: PathBuf, text: &str) -> CliResult<()> {
    fs::write(&path, text).map_err(|e| CliError::io(path, e))
}

fn write_echo(spec: &ExperimentSpec, out: &Path) -> CliResult<()> {
    write_text(out.join("effective_config.toml"), &spec.echo())
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub lambda: f64,
    pub n_modes: usize,
    pub terminal_error: f64,
    pub iterations: usize,
    pub residual: f64,
    pub defect_norms: Vec<f64>,
    pub feasibility_value: f64,
    /// Smallest eigenvalue of the last window's Gramian.
    pub gramian_min_eig: f64,
    pub wall_ms: f64,
    pub error: String,
}

pub const SWEEP_HEADER: [&str; 9] = [
    "lambda",
    "n_modes",
    "terminal_error",
    "iterations",
    "residual",
    "feasibility_value",
    "gramian_min_eig",
    "wall_ms",
    "error",
];

impl RunRecord {
    fn failed(lambda: f64, n_modes: usize, error: String) -> Self {
        Self {
            lambda,
            n_modes,
            terminal_error: f64::NAN,
            iterations: 0,
            residual: f64::NAN,
            defect_norms: Vec::new(),
            feasibility_value: f64::NAN,
            gramian_min_eig: f64::NAN,
            wall_ms: 0.0,
            error,
        }
    }

    fn csv_row(&self) -> Vec<String> {
        vec![
            fmt_f64(self.lambda),
            self.n_modes.to_string(),
            fmt_f64(self.terminal_error),
            self.iterations.to_string(),
            fmt_f64(self.residual),
            fmt_f64(self.feasibility_value),
            fmt_f64(self.gramian_min_eig),
            fmt_f64(self.wall_ms),
            self.error.clone(),
        ]
    }
}

fn solve_record(solver: &MildSolverF64, timing: bool) -> RunRecord {
    let start = Instant::now();
    let lambda = solver.config().lambda;
    let n = solver.config().n_modes;
    let feasibility = solver.feasibility().map(|f| f.value).unwrap_or(f64::NAN);
    let min_eig = solver.gramians().last().map(|g| g.min_eigenvalue()).unwrap_or(f64::NAN);
    let mut rec = match solver.fixed_point_iterate() {
        Ok(sol) => RunRecord {
            lambda,
            n_modes: n,
            terminal_error: sol.terminal_error,
            iterations: sol.iterations,
            residual: sol.final_residual(),
            defect_norms: sol.defects.iter().map(|g| g.norm()).collect(),
            feasibility_value: feasibility,
            gramian_min_eig: min_eig,
            wall_ms: 0.0,
            error: if sol.converged { String::new() } else { format!("no convergence after {} iterations", sol.iterations) },
        },
        Err(e) => RunRecord::failed(lambda, n, e.to_string()),
    };
    if timing {
        rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    rec
}

fn write_records(path: &Path, rows: &[RunRecord]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SWEEP_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r.csv_row()).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn solver_for(spec: &ExperimentSpec, n_modes: usize, lambda: f64) -> CliResult<MildSolverF64> {
    Ok(MildSolverF64::new(spec.instance(n_modes, lambda)?.problem_config()?)?)
}

/// One row per `λ` of `lambda_list` into `sweep.csv`. Rows run in parallel;
/// a failing row fills the `error` column and the sweep carries on.
pub fn run_lambda_sweep(spec: &ExperimentSpec, out: &Path) -> CliResult<Vec<RunRecord>> {
    create_dir(out)?;
    write_echo(spec, out)?;
    let base = solver_for(spec, spec.n_modes(), spec.lambdas[0])?;
    let rows: Vec<RunRecord> = spec
        .lambdas
        .par_iter()
        .map(|&l| match base.with_lambda(l) {
            Ok(s) => solve_record(&s, spec.timing()),
            Err(e) => RunRecord::failed(l, spec.n_modes(), e.to_string()),
        })
        .collect();
    write_records(&out.join("sweep.csv"), &rows)?;
    info!("sweep: {} rows", rows.len());
    Ok(rows)
}

/// One row per `N` of `n_list` at the control `λ`, into `refinement.csv`.
pub fn run_mode_refinement(spec: &ExperimentSpec, out: &Path) -> CliResult<Vec<RunRecord>> {
    create_dir(out)?;
    write_echo(spec, out)?;
    let rows: Vec<RunRecord> = spec
        .n_list
        .par_iter()
        .map(|&n| match solver_for(spec, n, spec.lambda()) {
            Ok(s) => solve_record(&s, spec.timing()),
            Err(e) => RunRecord::failed(spec.lambda(), n, e.to_string()),
        })
        .collect();
    write_records(&out.join("refinement.csv"), &rows)?;
    Ok(rows)
}

/// Outcome of a single run; the caller decides the exit status.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub terminal_error: f64,
    pub verification: f64,
}

fn random_states(rng: &mut ChaCha8Rng, basis: &ModeBasisF64, count: usize) -> CliResult<Vec<SpectralFieldF64>> {
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..basis.grid_size()).map(|_| rng.random_range(-2.0..2.0)).collect();
            Ok(project_to_modes(&v, basis)?)
        })
        .collect()
}

fn field_rows(path: &Path, times: &[f64], fields: &[SpectralFieldF64], basis: &ModeBasisF64) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..basis.grid_size()).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (t, f) in times.iter().zip(fields) {
        let mut row = vec![fmt_f64(*t)];
        row.extend(evaluate_on_grid(f, basis)?.into_iter().map(fmt_f64));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Solves at the control `λ` and writes `trajectory.csv`, `control.csv` and
/// `diagnostics.txt`. Non-convergence still writes everything.
pub fn run_single(spec: &ExperimentSpec, out: &Path) -> CliResult<RunOutcome> {
    create_dir(out)?;
    write_echo(spec, out)?;
    let inst = spec.instance(spec.n_modes(), spec.lambda())?;
    let solver = MildSolverF64::new(inst.problem_config()?)?;
    let basis = solver.basis().clone();
    let sol = solver.fixed_point_iterate()?;
    let report = solver.verify_mild_solution(&sol.trajectory)?;
    let grid = *solver.grid();
    let times: Vec<f64> = (0..=grid.n_steps()).map(|k| grid.time(k)).collect();
    field_rows(&out.join("trajectory.csv"), &times, sol.trajectory.states(), &basis)?;
    field_rows(&out.join("control.csv"), &times, &sol.control, &basis)?;

    let mut d = String::new();
    let _ = writeln!(d, "converged: {}", sol.converged);
    let _ = writeln!(d, "iterations: {}", sol.iterations);
    let _ = writeln!(d, "final_residual: {}", fmt_f64(sol.final_residual()));
    let _ = writeln!(d, "residual_history: {}", sol.residual_history.iter().map(|r| fmt_f64(*r)).collect::<Vec<_>>().join(","));
    if let Some(q) = sol.contraction_ratio() {
        let _ = writeln!(d, "contraction_ratio: {}", fmt_f64(q));
    }
    let _ = writeln!(d, "terminal_error: {}", fmt_f64(sol.terminal_error));
    let _ = writeln!(d, "terminal_identity_residual: {}", fmt_f64(sol.terminal_identity));
    let _ = writeln!(d, "reapplication_residual: {}", fmt_f64(sol.reapplication_residual));
    for (i, g) in sol.defects.iter().enumerate() {
        let _ = writeln!(d, "defect_norm[{i}]: {}", fmt_f64(g.norm()));
    }
    let _ = writeln!(d, "verify.initial_branch: {}", fmt_f64(report.initial_branch));
    let _ = writeln!(d, "verify.impulse_branch: {}", fmt_f64(report.impulse_branch));
    let _ = writeln!(d, "verify.restart_branch: {}", fmt_f64(report.restart_branch));
    let _ = writeln!(d, "verify.initial_condition: {}", fmt_f64(report.initial_condition));
    let _ = writeln!(d, "verify.interface: {}", fmt_f64(report.interface));
    let _ = writeln!(d, "verify.max: {}", fmt_f64(report.max()));
    let f = solver.feasibility()?;
    let _ = writeln!(d, "feasibility_value: {} ({})", fmt_f64(f.value), if f.feasible { "< 1" } else { ">= 1" });
    for (i, g) in solver.gramians().iter().enumerate() {
        let _ = writeln!(d, "gramian_min_eig[{i}]: {}", fmt_f64(g.min_eigenvalue()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed());
    let candidates = random_states(&mut rng, &basis, 16)?;
    for i in 0..inst.impulses.len() {
        let (di, ei) = impulse_bounds(i, &inst, &basis, &candidates)?;
        let _ = writeln!(d, "impulse[{i}]: d = {}, e = {}", fmt_f64(di), fmt_f64(ei));
    }
    write_text(out.join("diagnostics.txt"), &d)?;
    Ok(RunOutcome {
        converged: sol.converged,
        iterations: sol.iterations,
        residual_history: sol.residual_history.clone(),
        terminal_error: sol.terminal_error,
        verification: report.max(),
    })
}

/// Verdict of one control window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowVerdict {
    pub interval: (f64, f64),
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub positive_definite: bool,
    pub zero: bool,
    /// `(n, weight)` of the dominant modes of each null vector.
    pub null_modes: Vec<Vec<(i64, f64)>>,
    /// Simpson Gramian minimum eigenvalue, when the window has positive length.
    pub simpson_min_eigenvalue: Option<f64>,
}

/// Per-window Gramian certificates and the feasibility value for every `λ`
/// of `lambda_list`, into `certificate.txt`.
pub fn run_certificate(spec: &ExperimentSpec, out: &Path) -> CliResult<Vec<WindowVerdict>> {
    create_dir(out)?;
    write_echo(spec, out)?;
    let solver = solver_for(spec, spec.n_modes(), spec.lambda())?;
    let n = spec.n_modes() as i64;
    let mut verdicts = Vec::new();
    let mut text = String::new();
    for (i, g) in solver.gramians().iter().enumerate() {
        let cert = controllability_certificate(g);
        let (a, b) = g.interval();
        let zero = cert.max_eigenvalue <= 0.0;
        let null_modes: Vec<Vec<(i64, f64)>> = cert
            .null_space
            .iter()
            .map(|v| {
                v.iter()
                    .enumerate()
                    .map(|(j, c)| (j as i64 - n, c.norm_sqr()))
                    .filter(|(_, w)| *w > 1e-3)
                    .collect()
            })
            .collect();
        let simpson = if b > a {
            let psi = assemble_gramian(solver.table(), solver.control_operator(), a, b, spec.raw.control.gramian_nodes)?;
            Some(psi.min_eigenvalue())
        } else {
            None
        };
        let verdict = if zero {
            "ZERO GRAMIAN (empty control window)"
        } else if cert.positive_definite {
            "positive definite"
        } else {
            "RANK DEFICIENT"
        };
        let _ = writeln!(text, "window {i}: [{}, {}]", fmt_f64(a), fmt_f64(b));
        let _ = writeln!(text, "  min_eigenvalue: {}", fmt_f64(cert.min_eigenvalue));
        let _ = writeln!(text, "  max_eigenvalue: {}", fmt_f64(cert.max_eigenvalue));
        if let Some(s) = simpson {
            let _ = writeln!(text, "  simpson_min_eigenvalue: {}", fmt_f64(s));
        }
        let _ = writeln!(text, "  verdict: {verdict}");
        if !cert.positive_definite {
            let _ = writeln!(text, "  null_space_dimension: {}", cert.null_space.len());
            for (k, modes) in null_modes.iter().enumerate() {
                let parts: Vec<String> = modes.iter().map(|(m, w)| format!("n={m} ({w:.4})")).collect();
                let _ = writeln!(text, "  null_vector[{k}]: {}", parts.join(", "));
            }
        }
        verdicts.push(WindowVerdict {
            interval: (a, b),
            min_eigenvalue: cert.min_eigenvalue,
            max_eigenvalue: cert.max_eigenvalue,
            positive_definite: cert.positive_definite,
            zero,
            null_modes,
            simpson_min_eigenvalue: simpson,
        });
    }
    let bounds = solver.table().bounds();
    let _ = writeln!(text, "cosine_bound: {}", fmt_f64(bounds.cosine));
    let _ = writeln!(text, "sine_bound: {}", fmt_f64(bounds.sine));
    let _ = writeln!(text, "control_norm: {}", fmt_f64(solver.control_operator().norm()));
    if let Some(nb) = solver.config().nonlocal_bounds {
        let _ = writeln!(text, "m_g: {}", fmt_f64(nb.m_g));
        let _ = writeln!(text, "m_h: {}", fmt_f64(nb.m_h));
    }
    for &l in &spec.lambdas {
        let f = solver.with_lambda(l)?.feasibility()?;
        let _ = writeln!(text, "feasibility[lambda={}]: {} ({})", fmt_f64(l), fmt_f64(f.value), if f.feasible { "< 1" } else { ">= 1" });
    }
    write_text(out.join("certificate.txt"), &text)?;
    Ok(verdicts)
}

/// Evolution-operator axiom residuals and the growth-bound count, into `axioms.txt`.
pub fn run_axioms(spec: &ExperimentSpec, out: &Path) -> CliResult<String> {
    create_dir(out)?;
    write_echo(spec, out)?;
    let solver = solver_for(spec, spec.n_modes(), spec.lambda())?;
    let table = solver.table();
    let r = check_evolution_axioms(table);
    let (checked, violated) = growth_bound_violations(table, 1e-12);
    let b = table.bounds();
    let mut text = String::new();
    let _ = writeln!(text, "epsilon: {}", fmt_f64(r.epsilon));
    let _ = writeln!(text, "s_diagonal: {}", fmt_f64(r.s_diagonal));
    let _ = writeln!(text, "forward_quotient: {}", fmt_f64(r.forward_quotient));
    let _ = writeln!(text, "backward_quotient: {}", fmt_f64(r.backward_quotient));
    let _ = writeln!(text, "cosine_identity: {}", fmt_f64(r.cosine_identity));
    let _ = writeln!(text, "ode_residual: {}", fmt_f64(r.ode_residual));
    let _ = writeln!(text, "lipschitz: {}", fmt_f64(r.lipschitz));
    let _ = writeln!(text, "lipschitz_heuristic: {}", fmt_f64(r.lipschitz_heuristic));
    let _ = writeln!(text, "cosine_bound: {}", fmt_f64(b.cosine));
    let _ = writeln!(text, "sine_bound: {}", fmt_f64(b.sine));
    let _ = writeln!(text, "delta: {}", fmt_f64(b.delta));
    let _ = writeln!(text, "growth_bound: {violated} violations in {checked} samples");
    write_text(out.join("axioms.txt"), &text)?;
    Ok(text)
}

/// Non-convergence as the core error, for the exit status.
pub fn non_convergence(outcome: &RunOutcome) -> CliError {
    CliError::Core(CoreError::NoConvergence {
        iterations: outcome.iterations,
        residual_history: outcome.residual_history.clone(),
    })
}
