//! Newton continuation with altitude-controlled load increments.
//!
//! The boundary is moved along a load path `lambda -> phi(X; lambda)`. Each
//! major iteration picks the next `lambda` so that moving only the boundary
//! nodes (interior frozen) keeps every signed element altitude at least
//! `(1 - eta)` times its current value, then runs plain Newton from the
//! previous solution. Intermediate steps are solved loosely.

use std::fmt::Write as _;

use crate::assembly::{Assembler, IndefinitePolicy};
use crate::error::{Error, Result};
use crate::field::DisplacementField;
use crate::linalg::norm2;
use crate::material::MaterialParams;
use crate::mesh::{
    annulus_radii, deformed_vertices, min_jacobian, simplex_altitudes, tangled_elements, DirichletSpec, LoadSpec,
    ReferenceMesh,
};
use crate::newton::{initial_residual_norm, run_newton, NewtonSettings, NewtonTraceRow, SolveReport, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Linear,
    PolarRotation,
}

/// Boundary prescription as a function of the load parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadPath {
    kind: PathKind,
    end: DirichletSpec,
    /// Rotation and radial fraction at `lambda = 1` (polar paths only).
    f: f64,
}

impl LoadPath {
    /// `X + lambda (phi_0(X) - X)`.
    pub fn linear(end: DirichletSpec) -> Self {
        Self {
            kind: PathKind::Linear,
            end,
            f: 0.0,
        }
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn end(&self) -> &DirichletSpec {
        &self.end
    }

    pub fn evaluate(&self, mesh: &ReferenceMesh, lambda: f64) -> DirichletSpec {
        if lambda == 1.0 {
            return self.end.clone();
        }
        match self.kind {
            PathKind::Linear => DirichletSpec::from_fn(mesh, |n, x| {
                let y = self.end.position(n).expect("path covers every Dirichlet node");
                [
                    x[0] + lambda * (y[0] - x[0]),
                    x[1] + lambda * (y[1] - x[1]),
                    x[2] + lambda * (y[2] - x[2]),
                ]
            }),
            PathKind::PolarRotation => {
                crate::mesh::annulus_polar_positions(mesh, lambda * self.f, lambda * self.f)
                    .expect("annulus classification checked when the path was built")
            }
        }
    }
}

/// Polar path for the annulus: at `lambda` the outer circle is turned by
/// `lambda f` radians and the inner radius is `r_in + lambda f (r_out - r_in)`.
pub fn make_annulus_polar_path(mesh: &ReferenceMesh, f: f64) -> Result<LoadPath> {
    annulus_radii(mesh)?;
    let end = crate::mesh::annulus_dirichlet(mesh, f)?;
    Ok(LoadPath {
        kind: PathKind::PolarRotation,
        end,
        f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationConfig {
    pub eta: f64,
    pub min_increment: f64,
    pub intermediate_tol: f64,
    pub final_tol: f64,
    pub max_newton_per_step: usize,
    pub line_search: bool,
    pub indefinite: IndefinitePolicy,
    /// The first trial increment is twice this value.
    pub initial_increment: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            eta: 1.0 / 3.0,
            min_increment: 5e-4,
            intermediate_tol: 1e-3,
            final_tol: 1e-10,
            max_newton_per_step: 50,
            line_search: false,
            indefinite: IndefinitePolicy::default(),
            initial_increment: 0.5,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Argument(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.min_increment > 0.0) {
            return Err(Error::Argument(format!(
                "min_increment must be positive, got {}",
                self.min_increment
            )));
        }
        if !(self.initial_increment > 0.0) {
            return Err(Error::Argument("initial_increment must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaStep {
    pub lambda: f64,
    pub increment: f64,
    /// Smallest `altitude_new / altitude_old` over the checked elements.
    pub min_altitude_ratio: f64,
}

/// The increment fell below the minimum before an admissible step was found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaStall {
    pub lambda: f64,
    pub last_trial: f64,
}

/// Signed altitudes of each element touching the boundary, for the current
/// interior and the given boundary positions.
fn boundary_altitudes(
    mesh: &ReferenceMesh,
    u: &DisplacementField,
    elements: &[usize],
) -> Vec<[f64; 4]> {
    let d = mesh.dim();
    elements
        .iter()
        .map(|&e| simplex_altitudes(d, &deformed_vertices(mesh, u, e)[..d + 1]).1)
        .collect()
}

/// Chooses the next load parameter. Trials are `lambda_prev + delta` for
/// `delta = 2 delta_prev, delta_prev, delta_prev / 2, ...`, capped at 1.
/// A trial is accepted when, with only the boundary moved, every signed
/// altitude is at least `(1 - eta)` times its value in the current mesh.
pub fn next_lambda(
    mesh: &ReferenceMesh,
    u_prev: &DisplacementField,
    lambda_prev: f64,
    delta_prev: f64,
    path: &LoadPath,
    eta: f64,
    min_increment: f64,
) -> std::result::Result<LambdaStep, LambdaStall> {
    let touching = mesh.elements_touching_dirichlet();
    let before = boundary_altitudes(mesh, u_prev, &touching);
    let npe = mesh.dim() + 1;
    let mut delta = 2.0 * delta_prev;
    loop {
        let step = delta.min(1.0 - lambda_prev);
        let lambda = if step == 1.0 - lambda_prev { 1.0 } else { lambda_prev + step };
        if step < min_increment && lambda < 1.0 {
            return Err(LambdaStall {
                lambda: lambda_prev,
                last_trial: step,
            });
        }
        let mut trial = u_prev.clone();
        trial.apply_dirichlet(mesh, &path.evaluate(mesh, lambda));
        let after = boundary_altitudes(mesh, &trial, &touching);
        let mut ok = true;
        let mut ratio = f64::INFINITY;
        for (a, b) in after.iter().zip(&before) {
            for k in 0..npe {
                if a[k] < (1.0 - eta) * b[k] {
                    ok = false;
                }
                ratio = ratio.min(a[k] / b[k]);
            }
        }
        if ok {
            return Ok(LambdaStep {
                lambda,
                increment: step,
                min_altitude_ratio: ratio,
            });
        }
        if lambda == 1.0 && step < min_increment {
            return Err(LambdaStall {
                lambda: lambda_prev,
                last_trial: step,
            });
        }
        delta = step / 2.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MajorTraceRow {
    pub major: usize,
    pub lambda: f64,
    pub increment: f64,
    pub newton_iterations: usize,
    pub min_altitude_ratio: f64,
    /// Smallest element determinant right after the boundary update.
    pub min_jacobian_before: f64,
    /// Smallest element determinant after the Newton phase.
    pub min_jacobian: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuationReport {
    pub report: SolveReport,
    pub lambdas: Vec<f64>,
    pub trace: Vec<MajorTraceRow>,
}

/// Newton continuation from the reference configuration to `lambda = 1`.
/// Assumes no body forces or tractions.
pub fn continuation_solve(
    mesh: &ReferenceMesh,
    path: &LoadPath,
    p: &MaterialParams,
    cfg: &ContinuationConfig,
) -> ContinuationReport {
    let mut asm = Assembler::new(mesh, &LoadSpec::none());
    let f0 = initial_residual_norm(&asm, path.end(), p).unwrap_or(f64::NAN);
    let mut u = DisplacementField::zeros(mesh);
    let mut lambda = 0.0;
    let mut delta = cfg.initial_increment;
    let mut lambdas = Vec::new();
    let mut trace = Vec::new();
    let mut history = Vec::new();
    let mut newton_trace: Vec<NewtonTraceRow> = Vec::new();
    let mut newton_iterations = 0;
    let mut message = None;

    let status = loop {
        if let Err(e) = cfg.validate() {
            message = Some(e.to_string());
            break Status::ContinuationStalled;
        }
        let step = match next_lambda(mesh, &u, lambda, delta, path, cfg.eta, cfg.min_increment) {
            Ok(s) => s,
            Err(stall) => {
                message = Some(format!(
                    "increment {:e} below minimum at lambda = {}",
                    stall.last_trial, stall.lambda
                ));
                break Status::ContinuationStalled;
            }
        };
        u.apply_dirichlet(mesh, &path.evaluate(mesh, step.lambda));
        let min_before = min_jacobian(mesh, &u);
        let last = step.lambda == 1.0;
        let settings = if last {
            NewtonSettings {
                tol: cfg.final_tol,
                reference_norm: f0,
                max_iters: cfg.max_newton_per_step,
                line_search: cfg.line_search,
                indefinite: cfg.indefinite,
            }
        } else {
            let fki = asm.residual(&u, p).map(|r| norm2(&r)).unwrap_or(f64::NAN);
            NewtonSettings {
                tol: cfg.intermediate_tol,
                reference_norm: fki,
                max_iters: cfg.max_newton_per_step,
                line_search: cfg.line_search,
                indefinite: cfg.indefinite,
            }
        };
        let run = run_newton(&mut asm, u, p, settings);
        u = run.u;
        newton_iterations += run.iterations;
        history.extend(run.residual_history.iter().copied());
        newton_trace.extend(run.trace.iter().copied());
        lambdas.push(step.lambda);
        trace.push(MajorTraceRow {
            major: lambdas.len(),
            lambda: step.lambda,
            increment: step.increment,
            newton_iterations: run.iterations,
            min_altitude_ratio: step.min_altitude_ratio,
            min_jacobian_before: min_before,
            min_jacobian: min_jacobian(mesh, &u),
        });
        // Inversion takes precedence: a major iteration that leaves inverted
        // elements ends the run whether or not its Newton phase converged.
        let tangled = tangled_elements(mesh, &u);
        if !tangled.is_empty() {
            message = Some(format!(
                "{} inverted elements after major iteration {} (lambda = {})",
                tangled.len(),
                lambdas.len(),
                step.lambda
            ));
            break Status::InvertedAfterMajorIteration;
        }
        if let Some(reason) = run.stalled {
            message = Some(format!("Newton failed at lambda = {}: {reason}", step.lambda));
            break Status::NewtonStalled;
        }
        lambda = step.lambda;
        delta = step.increment;
        if last {
            break Status::Converged;
        }
    };

    ContinuationReport {
        report: SolveReport {
            is_iterations: 0,
            newton_iterations,
            major_iterations: lambdas.len(),
            als_steps: asm.als_steps(),
            status,
            final_u: u,
            residual_history: history,
            initial_residual: f0,
            newton_trace,
            untangle_trace: Vec::new(),
            final_lambda: if status == Status::Converged { 1.0 } else { lambda },
            message,
        },
        lambdas,
        trace,
    }
}

/// `major,lambda,increment,newton_iterations,min_altitude_ratio,min_j_before,min_j`.
pub fn trace_csv(trace: &[MajorTraceRow]) -> String {
    let mut s = String::from("major,lambda,increment,newton_iterations,min_altitude_ratio,min_j_before,min_j\n");
    for r in trace {
        writeln!(
            s,
            "{},{},{:e},{},{},{:e},{:e}",
            r.major,
            r.lambda,
            r.increment,
            r.newton_iterations,
            r.min_altitude_ratio,
            r.min_jacobian_before,
            r.min_jacobian
        )
        .unwrap();
    }
    s
}
