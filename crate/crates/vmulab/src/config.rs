//! Experiment configuration: a single TOML file with a strict schema
//! (unknown keys rejected) validated into a typed config. Validation errors
//! name the offending key by its dotted path.

use crate::diag::FlagThresholds;
use crate::expr::VectorExpr;
use crate::fem::MeshDescriptor;
use crate::solver::SolverOptions;
use crate::tensor::audit::LemmaId;
use crate::tensor::{ElasticTensor, GrowthParams, SymMatrix, Tensor4};
use serde::Deserialize;
use std::str::FromStr;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("missing required key {0}")]
    MissingKey(String),
    #[error("bad value for {key}: {message}")]
    BadValue { key: String, message: String },
    #[error("unknown command '{0}'")]
    UnknownCommand(String),
    #[error("config declares command '{config}' but '{invoked}' was invoked")]
    CommandMismatch { config: String, invoked: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Audit,
    Solve,
    Excess,
    Decay,
    Caccioppoli,
    Compare,
    Linearize,
    Manufactured,
    Flags,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Audit => "audit",
            Command::Solve => "solve",
            Command::Excess => "excess",
            Command::Decay => "decay",
            Command::Caccioppoli => "caccioppoli",
            Command::Compare => "compare",
            Command::Linearize => "linearize",
            Command::Manufactured => "manufactured",
            Command::Flags => "flags",
        }
    }
}

impl FromStr for Command {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "audit" => Command::Audit,
            "solve" => Command::Solve,
            "excess" => Command::Excess,
            "decay" => Command::Decay,
            "caccioppoli" => Command::Caccioppoli,
            "compare" => Command::Compare,
            "linearize" => Command::Linearize,
            "manufactured" => Command::Manufactured,
            "flags" => Command::Flags,
            other => return Err(ConfigError::UnknownCommand(other.to_string())),
        })
    }
}

// ---------- raw (deserialized) schema ----------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<String>,
    seed: Option<u64>,
    problem: Option<RawProblem>,
    solver: Option<RawSolver>,
    diagnostics: Option<RawDiagnostics>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    params: Option<RawParams>,
    elastic: Option<RawElastic>,
    mesh: Option<RawMesh>,
    g: Option<RawFieldSpec>,
    dirichlet: Option<RawFieldSpec>,
    penalty_level: Option<f64>,
    quadrature_order: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    p: Option<f64>,
    mu: Option<f64>,
    kappa: Option<f64>,
    dim: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElastic {
    kind: Option<String>,
    lame_lambda: Option<f64>,
    lame_mu: Option<f64>,
    entries: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    box_lo: Option<Vec<f64>>,
    box_hi: Option<Vec<f64>>,
    cells_per_axis: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFieldSpec {
    components: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    grad_tol: Option<f64>,
    max_iters: Option<usize>,
    ls_shrink: Option<f64>,
    ls_decrease: Option<f64>,
    l_schedule: Option<Vec<f64>>,
    hessian_shift_floor: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBall {
    center: Option<Vec<f64>>,
    radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    balls: Option<Vec<RawBall>>,
    radii: Option<Vec<f64>>,
    tau: Option<f64>,
    levels: Option<usize>,
    decay_constant: Option<f64>,
    lambda_sequence: Option<Vec<f64>>,
    base_strain: Option<Vec<Vec<f64>>>,
    perturbation: Option<Vec<String>>,
    u_star: Option<Vec<String>>,
    caccioppoli_lambda: Option<f64>,
    comparison_xi: Option<Vec<Vec<Vec<f64>>>>,
    audit_samples: Option<usize>,
    audit_lemmas: Option<Vec<String>>,
    v_oscillation_threshold: Option<f64>,
    v_divergence_threshold: Option<f64>,
    u_oscillation_threshold: Option<f64>,
    u_divergence_threshold: Option<f64>,
    grad_divergence_threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<String>,
    formats: Option<Vec<String>>,
    write_plots: Option<bool>,
}

// ---------- validated schema ----------

#[derive(Debug, Clone)]
pub struct BallSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub params: GrowthParams,
    pub elastic: ElasticTensor,
    pub mesh: MeshDescriptor,
    pub g: VectorExpr,
    pub dirichlet: VectorExpr,
    pub penalty_level: Option<f64>,
    pub quadrature_order: usize,
}

#[derive(Debug, Clone)]
pub struct DiagnosticsConfig {
    pub balls: Vec<BallSpec>,
    pub radii: Vec<f64>,
    pub tau: f64,
    pub levels: usize,
    pub decay_constant: f64,
    pub lambda_sequence: Vec<f64>,
    pub base_strain: Option<SymMatrix>,
    pub perturbation: Option<VectorExpr>,
    pub u_star: Option<VectorExpr>,
    pub caccioppoli_lambda: f64,
    pub comparison_xi: Vec<SymMatrix>,
    pub audit_samples: usize,
    pub audit_lemmas: Vec<LemmaId>,
    pub thresholds: FlagThresholds,
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub directory: String,
    pub json: bool,
    pub csv: bool,
    pub write_plots: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub problem: ProblemConfig,
    pub solver: SolverOptions,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
}

fn require<T>(value: Option<T>, key: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| ConfigError::MissingKey(key.to_string()))
}

fn zero_exprs(dim: usize) -> VectorExpr {
    VectorExpr::parse(&vec!["0".to_string(); dim]).expect("constant zero parses")
}

fn parse_field(
    spec: Option<RawFieldSpec>,
    key: &str,
    dim: usize,
) -> Result<VectorExpr, ConfigError> {
    match spec {
        None => Ok(zero_exprs(dim)),
        Some(raw) => {
            let comps = require(raw.components, &format!("{key}.components"))?;
            if comps.len() != dim {
                return Err(ConfigError::BadValue {
                    key: format!("{key}.components"),
                    message: format!("expected {dim} components, got {}", comps.len()),
                });
            }
            VectorExpr::parse(&comps).map_err(|e| ConfigError::BadValue {
                key: format!("{key}.components"),
                message: e.to_string(),
            })
        }
    }
}

fn parse_sym_matrix(rows: &[Vec<f64>], key: &str, dim: usize) -> Result<SymMatrix, ConfigError> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            message: format!("expected a {dim}x{dim} matrix"),
        });
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    SymMatrix::from_entries(dim, &flat).map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        message: e.to_string(),
    })
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let command: Command = require(raw.command, "command")?.parse()?;
        let seed = raw.seed.unwrap_or(0);

        let problem = require(raw.problem, "problem")?;
        let params_raw = require(problem.params, "problem.params")?;
        let p = require(params_raw.p, "problem.params.p")?;
        let mu = require(params_raw.mu, "problem.params.mu")?;
        let kappa = require(params_raw.kappa, "problem.params.kappa")?;
        let dim = require(params_raw.dim, "problem.params.dim")?;
        let params = GrowthParams::new(p, mu, kappa, dim).map_err(|e| ConfigError::BadValue {
            key: "problem.params".to_string(),
            message: e.to_string(),
        })?;

        let elastic = match problem.elastic {
            None => ElasticTensor::identity(dim),
            Some(raw_el) => {
                let kind = raw_el.kind.unwrap_or_else(|| "identity".to_string());
                match kind.as_str() {
                    "identity" => ElasticTensor::identity(dim),
                    "isotropic" => {
                        let lam = require(raw_el.lame_lambda, "problem.elastic.lame_lambda")?;
                        let mu_s = require(raw_el.lame_mu, "problem.elastic.lame_mu")?;
                        ElasticTensor::isotropic(dim, lam, mu_s).map_err(|e| {
                            ConfigError::BadValue {
                                key: "problem.elastic".to_string(),
                                message: e.to_string(),
                            }
                        })?
                    }
                    "entries" => {
                        let entries = require(raw_el.entries, "problem.elastic.entries")?;
                        if entries.len() != dim * dim * dim * dim {
                            return Err(ConfigError::BadValue {
                                key: "problem.elastic.entries".to_string(),
                                message: format!(
                                    "expected {} entries, got {}",
                                    dim * dim * dim * dim,
                                    entries.len()
                                ),
                            });
                        }
                        let mut t = Tensor4::zeros(dim);
                        let mut idx = 0;
                        for i in 0..dim {
                            for j in 0..dim {
                                for k in 0..dim {
                                    for l in 0..dim {
                                        t.set(i, j, k, l, entries[idx]);
                                        idx += 1;
                                    }
                                }
                            }
                        }
                        ElasticTensor::from_tensor(t).map_err(|e| ConfigError::BadValue {
                            key: "problem.elastic.entries".to_string(),
                            message: e.to_string(),
                        })?
                    }
                    other => {
                        return Err(ConfigError::BadValue {
                            key: "problem.elastic.kind".to_string(),
                            message: format!(
                                "unknown kind '{other}' (expected identity, isotropic, entries)"
                            ),
                        })
                    }
                }
            }
        };

        let mesh_raw = require(problem.mesh, "problem.mesh")?;
        let box_lo = require(mesh_raw.box_lo, "problem.mesh.box_lo")?;
        let box_hi = require(mesh_raw.box_hi, "problem.mesh.box_hi")?;
        let cells = require(mesh_raw.cells_per_axis, "problem.mesh.cells_per_axis")?;
        if box_lo.len() != dim || box_hi.len() != dim {
            return Err(ConfigError::BadValue {
                key: "problem.mesh.box_lo".to_string(),
                message: format!("box corners must have {dim} coordinates"),
            });
        }
        let mesh = MeshDescriptor { dim, box_lo, box_hi, cells_per_axis: cells };

        let g = parse_field(problem.g, "problem.g", dim)?;
        let dirichlet = parse_field(problem.dirichlet, "problem.dirichlet", dim)?;
        if let Some(level) = problem.penalty_level {
            if !(level > 0.0) {
                return Err(ConfigError::BadValue {
                    key: "problem.penalty_level".to_string(),
                    message: "must be positive".to_string(),
                });
            }
        }
        let quadrature_order = problem.quadrature_order.unwrap_or(2);
        if quadrature_order < 2 {
            return Err(ConfigError::BadValue {
                key: "problem.quadrature_order".to_string(),
                message: "must be at least 2".to_string(),
            });
        }

        let defaults = SolverOptions::default();
        let solver = match raw.solver {
            None => defaults,
            Some(s) => SolverOptions {
                grad_tol: s.grad_tol.unwrap_or(defaults.grad_tol),
                max_iters: s.max_iters.unwrap_or(defaults.max_iters),
                ls_shrink: s.ls_shrink.unwrap_or(defaults.ls_shrink),
                ls_decrease: s.ls_decrease.unwrap_or(defaults.ls_decrease),
                l_schedule: s.l_schedule.unwrap_or(defaults.l_schedule),
                hessian_shift_floor: s
                    .hessian_shift_floor
                    .unwrap_or(defaults.hessian_shift_floor),
            },
        };
        if !(solver.grad_tol > 0.0) {
            return Err(ConfigError::BadValue {
                key: "solver.grad_tol".to_string(),
                message: "must be positive".to_string(),
            });
        }
        if !(solver.ls_shrink > 0.0 && solver.ls_shrink < 1.0) {
            return Err(ConfigError::BadValue {
                key: "solver.ls_shrink".to_string(),
                message: "must lie in (0, 1)".to_string(),
            });
        }
        if !(solver.ls_decrease > 0.0 && solver.ls_decrease <= 0.5) {
            return Err(ConfigError::BadValue {
                key: "solver.ls_decrease".to_string(),
                message: "must lie in (0, 0.5]".to_string(),
            });
        }

        let d = raw.diagnostics;
        let diagnostics = {
            let d = d.unwrap_or(RawDiagnostics {
                balls: None,
                radii: None,
                tau: None,
                levels: None,
                decay_constant: None,
                lambda_sequence: None,
                base_strain: None,
                perturbation: None,
                u_star: None,
                caccioppoli_lambda: None,
                comparison_xi: None,
                audit_samples: None,
                audit_lemmas: None,
                v_oscillation_threshold: None,
                v_divergence_threshold: None,
                u_oscillation_threshold: None,
                u_divergence_threshold: None,
                grad_divergence_threshold: None,
            });
            let mut balls = Vec::new();
            for (i, b) in d.balls.unwrap_or_default().into_iter().enumerate() {
                let center = require(b.center, &format!("diagnostics.balls[{i}].center"))?;
                let radius = require(b.radius, &format!("diagnostics.balls[{i}].radius"))?;
                if center.len() != dim {
                    return Err(ConfigError::BadValue {
                        key: format!("diagnostics.balls[{i}].center"),
                        message: format!("expected {dim} coordinates"),
                    });
                }
                balls.push(BallSpec { center, radius });
            }
            let tau = d.tau.unwrap_or(0.5);
            if !(tau > 0.0 && tau < 1.0) {
                return Err(ConfigError::BadValue {
                    key: "diagnostics.tau".to_string(),
                    message: "must lie in (0, 1)".to_string(),
                });
            }
            let base_strain = match d.base_strain {
                None => None,
                Some(rows) => Some(parse_sym_matrix(&rows, "diagnostics.base_strain", dim)?),
            };
            let perturbation = match d.perturbation {
                None => None,
                Some(comps) => Some(
                    parse_field(Some(RawFieldSpec { components: Some(comps) }),
                        "diagnostics.perturbation", dim)?,
                ),
            };
            let u_star = match d.u_star {
                None => None,
                Some(comps) => Some(
                    parse_field(Some(RawFieldSpec { components: Some(comps) }),
                        "diagnostics.u_star", dim)?,
                ),
            };
            let mut comparison_xi = Vec::new();
            for (i, rows) in d.comparison_xi.unwrap_or_default().iter().enumerate() {
                comparison_xi.push(parse_sym_matrix(
                    rows,
                    &format!("diagnostics.comparison_xi[{i}]"),
                    dim,
                )?);
            }
            let mut audit_lemmas = Vec::new();
            match d.audit_lemmas {
                None => audit_lemmas.extend_from_slice(LemmaId::all()),
                Some(tags) => {
                    for tag in tags {
                        audit_lemmas.push(tag.parse().map_err(|e: crate::error::AuditError| {
                            ConfigError::BadValue {
                                key: "diagnostics.audit_lemmas".to_string(),
                                message: e.to_string(),
                            }
                        })?);
                    }
                }
            }
            DiagnosticsConfig {
                balls,
                radii: d.radii.unwrap_or_default(),
                tau,
                levels: d.levels.unwrap_or(3),
                decay_constant: d.decay_constant.unwrap_or(6.0),
                lambda_sequence: d
                    .lambda_sequence
                    .unwrap_or_else(|| vec![0.5, 0.25, 0.125, 0.0625]),
                base_strain,
                perturbation,
                u_star,
                caccioppoli_lambda: d.caccioppoli_lambda.unwrap_or(1.0),
                comparison_xi,
                audit_samples: d.audit_samples.unwrap_or(10_000),
                audit_lemmas,
                thresholds: FlagThresholds {
                    v_oscillation: d.v_oscillation_threshold,
                    v_divergence: d.v_divergence_threshold,
                    u_oscillation: d.u_oscillation_threshold,
                    u_divergence: d.u_divergence_threshold,
                    grad_divergence: d.grad_divergence_threshold,
                },
            }
        };

        let output = match raw.output {
            None => OutputConfig {
                directory: "out".to_string(),
                json: true,
                csv: true,
                write_plots: true,
            },
            Some(o) => {
                let formats = o
                    .formats
                    .unwrap_or_else(|| vec!["json".to_string(), "csv".to_string()]);
                for f in &formats {
                    if f != "json" && f != "csv" {
                        return Err(ConfigError::BadValue {
                            key: "output.formats".to_string(),
                            message: format!("unknown format '{f}'"),
                        });
                    }
                }
                OutputConfig {
                    directory: o.directory.unwrap_or_else(|| "out".to_string()),
                    json: formats.iter().any(|f| f == "json"),
                    csv: formats.iter().any(|f| f == "csv"),
                    write_plots: o.write_plots.unwrap_or(true),
                }
            }
        };

        Ok(ExperimentConfig {
            command,
            seed,
            problem: ProblemConfig {
                params,
                elastic,
                mesh,
                g,
                dirichlet,
                penalty_level: problem.penalty_level,
                quadrature_order,
            },
            solver,
            diagnostics,
            output,
        })
    }
}
