//! Determinant-safeguarded Newton iteration and the UBN driver
//! (untangle, then Newton, no continuation).
//!
//! The line search starts from the full step and backtracks by 0.9 until
//! every element keeps at least a tenth of its current determinant, so no
//! accepted iterate is ever tangled.

use std::fmt::Write as _;

use crate::assembly::{Assembler, IndefinitePolicy};
use crate::error::Error;
use crate::field::DisplacementField;
use crate::linalg::norm2;
use crate::material::MaterialParams;
use crate::mesh::{element_jacobians, simplex_signed_volume, tangled_elements, DirichletSpec, LoadSpec, Point, ReferenceMesh};
use crate::untangle::{iterative_stiffening_with, UntangleFailure, UntangleOptions, UntangleTraceRow, DEFAULT_MAX_ITERS};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_NEWTON: usize = 100;
pub const BACKTRACK: f64 = 0.9;
/// Fraction of an element's current determinant that a step must preserve.
pub const DET_FRACTION: f64 = 0.1;
/// Backtracking stops once `alpha` would reach `0.9^200`.
pub const MAX_BACKTRACKS: i32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Converged,
    UntangleFailed,
    NewtonStalled,
    ContinuationStalled,
    InvertedAfterMajorIteration,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "Converged",
            Status::UntangleFailed => "UntangleFailed",
            Status::NewtonStalled => "NewtonStalled",
            Status::ContinuationStalled => "ContinuationStalled",
            Status::InvertedAfterMajorIteration => "InvertedAfterMajorIteration",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a Newton run gave up.
#[derive(Debug, Clone, PartialEq)]
pub enum StallReason {
    IndefiniteTangent(String),
    LineSearch,
    IterationCap,
    Singular(String),
}

impl std::fmt::Display for StallReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StallReason::IndefiniteTangent(m) => write!(f, "indefinite tangent: {m}"),
            StallReason::LineSearch => write!(f, "line search found no admissible step"),
            StallReason::IterationCap => write!(f, "iteration cap reached"),
            StallReason::Singular(m) => write!(f, "{m}"),
        }
    }
}

/// One accepted Newton update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonTraceRow {
    pub iteration: usize,
    /// Residual norm after the update.
    pub residual: f64,
    pub alpha: f64,
    pub min_jacobian: f64,
    /// `min_e J_new(e) / J_old(e)` over elements with `J_old > 0`.
    pub min_jacobian_ratio: f64,
    /// The tangent was not positive definite at this step.
    pub indefinite: bool,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub is_iterations: usize,
    pub newton_iterations: usize,
    pub major_iterations: usize,
    pub als_steps: usize,
    pub status: Status,
    pub final_u: DisplacementField,
    /// Residual norms, starting with the Newton starting point.
    pub residual_history: Vec<f64>,
    /// `||F_0||`, the residual at zero interior displacement.
    pub initial_residual: f64,
    pub newton_trace: Vec<NewtonTraceRow>,
    pub untangle_trace: Vec<UntangleTraceRow>,
    /// Load parameter reached (1 for UBN).
    pub final_lambda: f64,
    pub message: Option<String>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Fraction of Newton updates that used `alpha < 1`.
    pub fn line_search_activity(&self) -> f64 {
        if self.newton_trace.is_empty() {
            return 0.0;
        }
        let active = self.newton_trace.iter().filter(|r| r.alpha < 1.0).count();
        active as f64 / self.newton_trace.len() as f64
    }

    pub const CSV_HEADER: &'static str = "status,is_iterations,newton_iterations,major_iterations,als_steps,\
final_lambda,initial_residual,final_residual,line_search_activity";

    /// One CSV row matching [`Self::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:e},{:e},{:.4}",
            self.status,
            self.is_iterations,
            self.newton_iterations,
            self.major_iterations,
            self.als_steps,
            self.final_lambda,
            self.initial_residual,
            self.final_residual(),
            self.line_search_activity()
        )
    }
}

/// Per-element determinants along `u0 + alpha s`.
struct StepGeometry {
    dim: usize,
    vref: Vec<f64>,
    x0: Vec<[Point; 4]>,
    dx: Vec<[Point; 4]>,
    j0: Vec<f64>,
}

impl StepGeometry {
    fn new(mesh: &ReferenceMesh, u0: &DisplacementField, s: &[f64]) -> Self {
        let d = mesh.dim();
        let ne = mesh.num_elements();
        let mut x0 = Vec::with_capacity(ne);
        let mut dx = Vec::with_capacity(ne);
        for conn in mesh.elements() {
            let mut a = [[0.0; 3]; 4];
            let mut b = [[0.0; 3]; 4];
            for (k, &n) in conn.iter().enumerate() {
                a[k] = u0.position(mesh, n);
                if let Some(base) = mesh.free_dof(n) {
                    b[k][..d].copy_from_slice(&s[base..base + d]);
                }
            }
            x0.push(a);
            dx.push(b);
        }
        let vref: Vec<f64> = (0..ne).map(|e| mesh.reference_volume(e)).collect();
        let mut g = Self {
            dim: d,
            vref,
            x0,
            dx,
            j0: Vec::new(),
        };
        g.j0 = (0..ne).map(|e| g.jacobian(e, 0.0)).collect();
        g
    }

    fn jacobian(&self, e: usize, alpha: f64) -> f64 {
        let mut pts = [[0.0; 3]; 4];
        for (k, p) in pts.iter_mut().enumerate().take(self.dim + 1) {
            for c in 0..3 {
                p[c] = self.x0[e][k][c] + alpha * self.dx[e][k][c];
            }
        }
        simplex_signed_volume(self.dim, &pts[..self.dim + 1]) / self.vref[e]
    }

    fn admissible(&self, e: usize, alpha: f64) -> bool {
        self.jacobian(e, alpha) >= self.j0[e] * DET_FRACTION
    }
}

/// Largest `alpha = 0.9^k` keeping `J(u0 + alpha s, e) >= J(u0, e) / 10`
/// on every element. Elements are visited in order, shrinking `alpha`
/// as needed, and a final sweep re-checks the whole mesh on the actual
/// stepped field because the determinant is a polynomial in `alpha` and
/// need not be monotone.
///
/// Returns `None` when `alpha` would fall to `0.9^200`.
pub fn line_search_alpha(mesh: &ReferenceMesh, u0: &DisplacementField, s: &[f64]) -> Option<f64> {
    let geo = StepGeometry::new(mesh, u0, s);
    let mut k = 0;
    let mut alpha = 1.0;
    let mut shrink = |alpha: &mut f64| {
        k += 1;
        *alpha *= BACKTRACK;
        k < MAX_BACKTRACKS
    };
    for e in 0..mesh.num_elements() {
        while !geo.admissible(e, alpha) {
            if !shrink(&mut alpha) {
                return None;
            }
        }
    }
    let j_old = element_jacobians(mesh, u0);
    loop {
        let j_new = element_jacobians(mesh, &u0.stepped(mesh, alpha, s));
        if j_new.iter().zip(&j_old).all(|(n, o)| *n >= DET_FRACTION * o) {
            return Some(alpha);
        }
        if !shrink(&mut alpha) {
            return None;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Stop when `||R|| <= tol * reference_norm`.
    pub tol: f64,
    pub reference_norm: f64,
    pub max_iters: usize,
    pub line_search: bool,
    pub indefinite: IndefinitePolicy,
}

#[derive(Debug, Clone)]
pub struct NewtonRun {
    pub u: DisplacementField,
    pub iterations: usize,
    pub stalled: Option<StallReason>,
    pub residual_history: Vec<f64>,
    pub trace: Vec<NewtonTraceRow>,
}

impl NewtonRun {
    pub fn converged(&self) -> bool {
        self.stalled.is_none()
    }
}

fn ratio_stats(old: &[f64], new: &[f64]) -> (f64, f64) {
    let min_j = new.iter().copied().fold(f64::INFINITY, f64::min);
    let ratio = old
        .iter()
        .zip(new)
        .filter(|(o, _)| **o > 0.0)
        .map(|(o, n)| n / o)
        .fold(f64::INFINITY, f64::min);
    (min_j, ratio)
}

/// Residual norm indistinguishable from zero for this mesh and material:
/// a few thousand ulps of a typical nodal force `(lambda + 2 mu) V^((d-1)/d)`.
/// Only matters when the relative target is itself zero (no prescribed
/// motion and no loads).
pub fn roundoff_floor(mesh: &ReferenceMesh, p: &MaterialParams) -> f64 {
    let d = mesh.dim() as f64;
    let volume: f64 = (0..mesh.num_elements()).map(|e| mesh.reference_volume(e)).sum();
    4096.0 * f64::EPSILON * (p.lambda + 2.0 * p.mu) * volume.powf((d - 1.0) / d)
}

/// Newton iteration from `u` on an existing assembler. Each update costs
/// one ALS step; residual evaluations do not.
pub fn run_newton(
    asm: &mut Assembler<'_>,
    mut u: DisplacementField,
    p: &MaterialParams,
    settings: NewtonSettings,
) -> NewtonRun {
    let mesh = asm.mesh();
    let target = (settings.tol * settings.reference_norm).max(roundoff_floor(mesh, p));
    let mut history = Vec::new();
    let mut trace = Vec::new();
    let finish = |u, iterations, stalled, history, trace| NewtonRun {
        u,
        iterations,
        stalled,
        residual_history: history,
        trace,
    };
    let mut r = match asm.residual(&u, p) {
        Ok(r) => r,
        Err(e) => return finish(u, 0, Some(StallReason::Singular(e.to_string())), history, trace),
    };
    let mut jac = element_jacobians(mesh, &u);
    history.push(norm2(&r));
    for it in 0..=settings.max_iters {
        if *history.last().unwrap() <= target {
            return finish(u, it, None, history, trace);
        }
        if it == settings.max_iters {
            break;
        }
        let step = asm
            .newton_system(&u, p)
            .and_then(|sys| asm.solve_tangent(&sys, settings.indefinite));
        let (s, indefinite) = match step {
            Ok(s) => s,
            Err(Error::Indefinite { pivot, value }) => {
                let msg = format!("pivot {pivot} = {value:e}");
                return finish(u, it, Some(StallReason::IndefiniteTangent(msg)), history, trace);
            }
            Err(e) => return finish(u, it, Some(StallReason::Singular(e.to_string())), history, trace),
        };
        let alpha = if settings.line_search {
            match line_search_alpha(mesh, &u, &s) {
                Some(a) => a,
                None => return finish(u, it, Some(StallReason::LineSearch), history, trace),
            }
        } else {
            1.0
        };
        u.add_free(mesh, alpha, &s);
        let new_jac = element_jacobians(mesh, &u);
        let (min_j, ratio) = ratio_stats(&jac, &new_jac);
        jac = new_jac;
        r = match asm.residual(&u, p) {
            Ok(r) => r,
            Err(e) => return finish(u, it + 1, Some(StallReason::Singular(e.to_string())), history, trace),
        };
        let norm = norm2(&r);
        history.push(norm);
        trace.push(NewtonTraceRow {
            iteration: it + 1,
            residual: norm,
            alpha,
            min_jacobian: min_j,
            min_jacobian_ratio: ratio,
            indefinite,
        });
    }
    let n = trace.len();
    finish(u, n, Some(StallReason::IterationCap), history, trace)
}

/// `||R||` at zero interior displacement with the boundary data applied.
pub fn initial_residual_norm(
    asm: &Assembler<'_>,
    dirichlet: &DirichletSpec,
    p: &MaterialParams,
) -> Result<f64, Error> {
    let u0 = DisplacementField::from_dirichlet(asm.mesh(), dirichlet);
    asm.residual(&u0, p).map(|r| norm2(&r))
}

/// Safeguarded Newton from an untangled starting point, stopping at
/// `||R|| <= tol_rel * ||F_0||`.
pub fn newton_solve(
    mesh: &ReferenceMesh,
    dirichlet: &DirichletSpec,
    u_init: DisplacementField,
    p: &MaterialParams,
    loads: &LoadSpec,
    tol_rel: f64,
) -> NewtonRun {
    let mut asm = Assembler::new(mesh, loads);
    let f0 = initial_residual_norm(&asm, dirichlet, p).unwrap_or(f64::NAN);
    run_newton(
        &mut asm,
        u_init,
        p,
        NewtonSettings {
            tol: tol_rel,
            reference_norm: f0,
            max_iters: DEFAULT_MAX_NEWTON,
            line_search: true,
            indefinite: IndefinitePolicy::default(),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UbnOptions {
    pub max_is_iters: usize,
    pub tol: f64,
    pub max_newton: usize,
    pub line_search: bool,
    pub indefinite: IndefinitePolicy,
}

impl Default for UbnOptions {
    fn default() -> Self {
        Self {
            max_is_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            max_newton: DEFAULT_MAX_NEWTON,
            line_search: true,
            indefinite: IndefinitePolicy::default(),
        }
    }
}

pub fn ubn_solve(mesh: &ReferenceMesh, dirichlet: &DirichletSpec, p: &MaterialParams, loads: &LoadSpec) -> SolveReport {
    ubn_solve_with(mesh, dirichlet, p, loads, UbnOptions::default())
}

/// Untangling before Newton: iterative stiffening produces an untangled
/// initial guess, then safeguarded Newton solves the full problem.
pub fn ubn_solve_with(
    mesh: &ReferenceMesh,
    dirichlet: &DirichletSpec,
    p: &MaterialParams,
    loads: &LoadSpec,
    opts: UbnOptions,
) -> SolveReport {
    let mut asm = Assembler::new(mesh, loads);
    let f0 = initial_residual_norm(&asm, dirichlet, p).unwrap_or(f64::NAN);
    let untangled = iterative_stiffening_with(
        &mut asm,
        dirichlet,
        p,
        UntangleOptions {
            max_iters: opts.max_is_iters,
            stiffen: true,
        },
    );
    let outcome = match untangled {
        Ok(o) => o,
        Err(fail) => {
            let (u, trace) = match &fail {
                UntangleFailure::IterationCap { last, .. } => (last.u.clone(), last.trace.clone()),
                UntangleFailure::SolveFailed { .. } => (DisplacementField::from_dirichlet(mesh, dirichlet), Vec::new()),
            };
            return SolveReport {
                is_iterations: fail.iterations(),
                newton_iterations: 0,
                major_iterations: 0,
                als_steps: asm.als_steps(),
                status: Status::UntangleFailed,
                final_u: u,
                residual_history: Vec::new(),
                initial_residual: f0,
                newton_trace: Vec::new(),
                untangle_trace: trace,
                final_lambda: 0.0,
                message: Some(fail.to_string()),
            };
        }
    };
    let run = run_newton(
        &mut asm,
        outcome.u,
        p,
        NewtonSettings {
            tol: opts.tol,
            reference_norm: f0,
            max_iters: opts.max_newton,
            line_search: opts.line_search,
            indefinite: opts.indefinite,
        },
    );
    let status = if run.converged() && tangled_elements(mesh, &run.u).is_empty() {
        Status::Converged
    } else {
        Status::NewtonStalled
    };
    SolveReport {
        is_iterations: outcome.iterations,
        newton_iterations: run.iterations,
        major_iterations: 0,
        als_steps: asm.als_steps(),
        status,
        final_u: run.u,
        residual_history: run.residual_history,
        initial_residual: f0,
        newton_trace: run.trace,
        untangle_trace: outcome.trace,
        final_lambda: 1.0,
        message: run.stalled.map(|r| r.to_string()),
    }
}

/// `iteration,residual,alpha,min_j,min_j_ratio,indefinite` rows.
pub fn trace_csv(trace: &[NewtonTraceRow]) -> String {
    let mut s = String::from("iteration,residual,alpha,min_j,min_j_ratio,indefinite\n");
    for r in trace {
        writeln!(
            s,
            "{},{:e},{},{:e},{:e},{}",
            r.iteration, r.residual, r.alpha, r.min_jacobian, r.min_jacobian_ratio, r.indefinite
        )
        .unwrap();
    }
    s
}
