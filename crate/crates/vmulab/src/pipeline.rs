//! Batch pipelines: build the problem from a validated config, dispatch the
//! requested command, and persist every artifact plus a manifest with
//! content hashes (written last, so a missing manifest marks an incomplete
//! run). Identical config and seed produce byte-identical artifacts.

use crate::config::{Command, ConfigError, ExperimentConfig};
use crate::diag::{
    caccioppoli_report, comparison_report, decay_exponent, excess_decay_table,
    linearization_experiment, manufactured_problem, singular_flags, SmoothField,
};
use crate::error::{AuditError, DiagError, MeshError, ModelError, SolveError};
use crate::fem::{Ball, DirichletBc, DiscreteField, Mesh, ProblemSpec};
use crate::report::{self, PlotKind};
use crate::snapshot::{snapshot_field, snapshot_to_json};
use crate::solver::{minimize, Solution, Trace};
use crate::tensor::audit::{inequality_audit, SampleSpec};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::sync::Arc;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Diag(#[from] DiagError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// One exit code per error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Mesh(_) | PipelineError::Model(_) | PipelineError::Audit(_) => 3,
            PipelineError::Solve(_) => 4,
            PipelineError::Diag(_) => 5,
            PipelineError::Io(_) => 6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

struct OutputSink {
    dir: PathBuf,
    entries: Vec<ManifestEntry>,
    json: bool,
    csv: bool,
    plots: bool,
}

impl OutputSink {
    fn new(cfg: &ExperimentConfig) -> std::io::Result<Self> {
        let dir = PathBuf::from(&cfg.output.directory);
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            entries: Vec::new(),
            json: cfg.output.json,
            csv: cfg.output.csv,
            plots: cfg.output.write_plots,
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        let digest = Sha256::digest(bytes);
        self.entries.push(ManifestEntry {
            name: name.to_string(),
            sha256: hex::encode(digest),
            bytes: bytes.len(),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        if self.json {
            let text = serde_json::to_string_pretty(value).expect("report serialization");
            self.write_bytes(name, text.as_bytes())?;
        }
        Ok(())
    }

    fn write_csv<F>(&mut self, name: &str, producer: F) -> std::io::Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        if self.csv {
            let mut buf = Vec::new();
            producer(&mut buf)?;
            self.write_bytes(name, &buf)?;
        }
        Ok(())
    }

    fn write_plot(&mut self, kind: PlotKind, csv_name: &str, script_name: &str) -> std::io::Result<()> {
        if self.plots && self.csv {
            let script = report::plot_script(kind, csv_name);
            self.write_bytes(script_name, script.as_bytes())?;
        }
        Ok(())
    }

    /// Writes the manifest last and returns it.
    fn finish(mut self) -> std::io::Result<(Manifest, PathBuf)> {
        self.entries.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = Manifest { files: self.entries.clone() };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok((manifest, self.dir))
    }
}

/// Builds the problem spec (mesh, datum, boundary data) from the config.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<ProblemSpec, PipelineError> {
    let mesh = Arc::new(Mesh::from_descriptor(&cfg.problem.mesh)?);
    let g_expr = &cfg.problem.g;
    let g = DiscreteField::interpolate(mesh.clone(), |x| g_expr.eval(x));
    let bc_expr = &cfg.problem.dirichlet;
    let bc = DirichletBc::on_boundary(&mesh, |x| bc_expr.eval(x));
    Ok(ProblemSpec::new(
        mesh,
        cfg.problem.params,
        cfg.problem.elastic.clone(),
        g,
        bc,
        cfg.problem.penalty_level,
        cfg.problem.quadrature_order,
    )?)
}

#[derive(Serialize)]
struct SolveSummary {
    energy: f64,
    iterations: usize,
    final_grad_norm: f64,
    converged: bool,
    l_path_energies: Vec<(f64, f64)>,
}

fn solve_with_trace(
    spec: &ProblemSpec,
    cfg: &ExperimentConfig,
) -> Result<(Solution, Vec<u8>), PipelineError> {
    let mut initial = DiscreteField::zeros(spec.mesh.clone());
    spec.dirichlet.apply(&mut initial);
    let mut trace_buf = Vec::new();
    let sol = {
        let mut trace = Trace::to(&mut trace_buf);
        minimize(spec, &initial, &cfg.solver, &mut trace)?
    };
    Ok((sol, trace_buf))
}

fn write_solution(
    sink: &mut OutputSink,
    spec: &ProblemSpec,
    sol: &Solution,
    trace: &[u8],
) -> Result<(), PipelineError> {
    let snap = snapshot_field(&sol.field, &spec.params);
    sink.write_bytes("solution.snapshot.json", snapshot_to_json(&snap).as_bytes())?;
    if sink.csv {
        sink.write_bytes("trace.csv", trace)?;
    }
    sink.write_json(
        "summary.json",
        &SolveSummary {
            energy: sol.energy,
            iterations: sol.iterations,
            final_grad_norm: sol.final_grad_norm,
            converged: sol.converged,
            l_path_energies: sol.l_path_energies.clone(),
        },
    )?;
    Ok(())
}

fn require_balls(cfg: &ExperimentConfig) -> Result<(), PipelineError> {
    if cfg.diagnostics.balls.is_empty() {
        return Err(ConfigError::MissingKey("diagnostics.balls".to_string()).into());
    }
    Ok(())
}

/// Runs the configured experiment; returns the manifest and output dir.
pub fn run(cfg: &ExperimentConfig) -> Result<(Manifest, PathBuf), PipelineError> {
    let mut sink = OutputSink::new(cfg)?;
    match cfg.command {
        Command::Audit => {
            let spec = SampleSpec::new(cfg.diagnostics.audit_samples, cfg.seed);
            let mut audits = Vec::new();
            for &lemma in &cfg.diagnostics.audit_lemmas {
                if lemma.needs_positive_mu() && cfg.problem.params.mu <= 0.0 {
                    continue;
                }
                audits.push(inequality_audit(lemma, &spec, &cfg.problem.params)?);
            }
            sink.write_json("audits.json", &audits)?;
            sink.write_csv("audits.csv", |w| report::audits_csv(&audits, w))?;
        }
        Command::Solve => {
            let spec = build_problem(cfg)?;
            let (sol, trace) = solve_with_trace(&spec, cfg)?;
            write_solution(&mut sink, &spec, &sol, &trace)?;
        }
        Command::Excess => {
            require_balls(cfg)?;
            let spec = build_problem(cfg)?;
            let (sol, trace) = solve_with_trace(&spec, cfg)?;
            write_solution(&mut sink, &spec, &sol, &trace)?;
            for (i, ball) in cfg.diagnostics.balls.iter().enumerate() {
                let table = excess_decay_table(
                    &sol.field,
                    &spec.params,
                    spec.quadrature(),
                    &ball.center,
                    ball.radius,
                    cfg.diagnostics.tau,
                    cfg.diagnostics.levels,
                    cfg.diagnostics.decay_constant,
                )?;
                sink.write_json(&format!("excess_{i}.json"), &table)?;
                let csv_name = format!("excess_{i}.csv");
                sink.write_csv(&csv_name, |w| report::excess_table_csv(&table, w))?;
                sink.write_plot(PlotKind::Ratio, &csv_name, &format!("plot_excess_{i}.py"))?;
            }
        }
        Command::Decay => {
            require_balls(cfg)?;
            if cfg.diagnostics.radii.len() < 3 {
                return Err(ConfigError::BadValue {
                    key: "diagnostics.radii".to_string(),
                    message: "need at least 3 radii".to_string(),
                }
                .into());
            }
            let spec = build_problem(cfg)?;
            let (sol, trace) = solve_with_trace(&spec, cfg)?;
            write_solution(&mut sink, &spec, &sol, &trace)?;
            for (i, ball) in cfg.diagnostics.balls.iter().enumerate() {
                let fit = decay_exponent(
                    &sol.field,
                    &spec.params,
                    spec.quadrature(),
                    &ball.center,
                    &cfg.diagnostics.radii,
                )?;
                sink.write_json(&format!("decay_{i}.json"), &fit)?;
                let csv_name = format!("decay_{i}.csv");
                sink.write_csv(&csv_name, |w| report::decay_fit_csv(&fit, w))?;
                sink.write_plot(PlotKind::LogLog, &csv_name, &format!("plot_decay_{i}.py"))?;
            }
        }
        Command::Caccioppoli => {
            require_balls(cfg)?;
            let spec = build_problem(cfg)?;
            let (sol, trace) = solve_with_trace(&spec, cfg)?;
            write_solution(&mut sink, &spec, &sol, &trace)?;
            for (i, ball) in cfg.diagnostics.balls.iter().enumerate() {
                let rep = caccioppoli_report(
                    &sol.field,
                    &spec,
                    &ball.center,
                    ball.radius,
                    cfg.diagnostics.caccioppoli_lambda,
                )?;
                sink.write_json(&format!("caccioppoli_{i}.json"), &rep)?;
                sink.write_csv(&format!("caccioppoli_{i}.csv"), |w| {
                    report::caccioppoli_csv(&rep, w)
                })?;
            }
        }
        Command::Compare => {
            require_balls(cfg)?;
            let spec = build_problem(cfg)?;
            let (sol, trace) = solve_with_trace(&spec, cfg)?;
            write_solution(&mut sink, &spec, &sol, &trace)?;
            for (i, ball_spec) in cfg.diagnostics.balls.iter().enumerate() {
                let ball = Ball::new(&spec.mesh, &ball_spec.center, ball_spec.radius)?;
                let rep = comparison_report(
                    &sol.field,
                    &spec,
                    &ball,
                    &cfg.diagnostics.comparison_xi,
                    &cfg.solver,
                )?;
                sink.write_json(&format!("comparison_{i}.json"), &rep)?;
                sink.write_csv(&format!("comparison_{i}.csv"), |w| {
                    report::comparison_csv(&rep, w)
                })?;
            }
        }
        Command::Linearize => {
            require_balls(cfg)?;
            let spec = build_problem(cfg)?;
            let base = cfg
                .diagnostics
                .base_strain
                .ok_or_else(|| ConfigError::MissingKey("diagnostics.base_strain".to_string()))?;
            let pert_expr = cfg
                .diagnostics
                .perturbation
                .as_ref()
                .ok_or_else(|| ConfigError::MissingKey("diagnostics.perturbation".to_string()))?;
            let pert = DiscreteField::interpolate(spec.mesh.clone(), |x| pert_expr.eval(x));
            let ball_spec = &cfg.diagnostics.balls[0];
            let ball = Ball::new(&spec.mesh, &ball_spec.center, ball_spec.radius)?;
            let rep = linearization_experiment(
                &spec,
                &base,
                &pert,
                &cfg.diagnostics.lambda_sequence,
                &ball,
                &cfg.solver,
            )?;
            sink.write_json("linearization.json", &rep)?;
            sink.write_csv("linearization.csv", |w| report::linearization_csv(&rep, w))?;
            sink.write_plot(PlotKind::Linearization, "linearization.csv", "plot_linearization.py")?;
        }
        Command::Manufactured => {
            let u_star_expr = cfg
                .diagnostics
                .u_star
                .as_ref()
                .ok_or_else(|| ConfigError::MissingKey("diagnostics.u_star".to_string()))?;
            let grads = u_star_expr.gradients(cfg.problem.params.dim);
            let smooth = (u_star_expr.clone(), grads);
            let mesh = Arc::new(Mesh::from_descriptor(&cfg.problem.mesh)?);
            let mp = manufactured_problem(
                &smooth as &dyn SmoothField,
                cfg.problem.params,
                cfg.problem.elastic.clone(),
                mesh,
                cfg.problem.quadrature_order,
            )?;
            let (sol, trace) = solve_with_trace(&mp.spec, cfg)?;
            let err = sol.field.max_diff(&mp.exact);
            #[derive(Serialize)]
            struct ManufacturedSummary {
                nodal_max_error: f64,
                energy: f64,
                iterations: usize,
                converged: bool,
            }
            sink.write_json(
                "manufactured.json",
                &ManufacturedSummary {
                    nodal_max_error: err,
                    energy: sol.energy,
                    iterations: sol.iterations,
                    converged: sol.converged,
                },
            )?;
            let g_snap = snapshot_field(&mp.spec.g, &mp.spec.params);
            sink.write_bytes("g.snapshot.json", snapshot_to_json(&g_snap).as_bytes())?;
            write_solution(&mut sink, &mp.spec, &sol, &trace)?;
        }
        Command::Flags => {
            if cfg.diagnostics.radii.is_empty() {
                return Err(ConfigError::MissingKey("diagnostics.radii".to_string()).into());
            }
            let spec = build_problem(cfg)?;
            let (sol, trace) = solve_with_trace(&spec, cfg)?;
            write_solution(&mut sink, &spec, &sol, &trace)?;
            let flags = singular_flags(
                &sol.field,
                &spec,
                &cfg.diagnostics.radii,
                &cfg.diagnostics.thresholds,
            )?;
            sink.write_json("flags.json", &flags)?;
            sink.write_csv("flags.csv", |w| report::flags_csv(&flags, &spec.mesh, w))?;
        }
    }
    Ok(sink.finish()?)
}
