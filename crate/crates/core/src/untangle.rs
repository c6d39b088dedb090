//! Iterative stiffening.
//!
//! Solve linear elasticity for the prescribed boundary motion, find every
//! inverted element of the resulting deformed mesh and multiply its stiffness
//! by 1.5, then solve again. Repeat until no element is inverted or the
//! iteration cap is hit. An element flagged `k` times carries the factor
//! `1.5^k`.

use std::fmt::Write as _;

use crate::assembly::{Assembler, StiffnessMultipliers};
use crate::error::Error;
use crate::field::DisplacementField;
use crate::material::MaterialParams;
use crate::mesh::{min_jacobian, tangled_elements, DirichletSpec, LoadSpec, ReferenceMesh};

pub const DEFAULT_MAX_ITERS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UntangleOptions {
    pub max_iters: usize,
    /// When false the multipliers stay at 1, so the first iterate is the
    /// plain linear-elastic warp and further iterations repeat it.
    pub stiffen: bool,
}

impl Default for UntangleOptions {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            stiffen: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UntangleTraceRow {
    pub iteration: usize,
    pub inverted: usize,
    pub min_jacobian: f64,
}

#[derive(Debug, Clone)]
pub struct UntangleOutcome {
    pub u: DisplacementField,
    pub iterations: usize,
    pub multipliers: StiffnessMultipliers,
    pub trace: Vec<UntangleTraceRow>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum UntangleFailure {
    #[error("mesh still tangled after {iterations} iterations ({inverted} inverted elements)")]
    IterationCap {
        iterations: usize,
        inverted: usize,
        last: Box<UntangleOutcome>,
    },
    #[error("linear solve failed at iteration {iteration}: {message}")]
    SolveFailed { iteration: usize, message: String },
}

impl UntangleFailure {
    pub fn iterations(&self) -> usize {
        match self {
            Self::IterationCap { iterations, .. } => *iterations,
            Self::SolveFailed { iteration, .. } => *iteration,
        }
    }
}

/// Runs iterative stiffening with a fresh assembler.
pub fn iterative_stiffening(
    mesh: &ReferenceMesh,
    dirichlet: &DirichletSpec,
    p: &MaterialParams,
    loads: &LoadSpec,
    max_iters: usize,
) -> Result<UntangleOutcome, UntangleFailure> {
    let mut asm = Assembler::new(mesh, loads);
    iterative_stiffening_with(
        &mut asm,
        dirichlet,
        p,
        UntangleOptions {
            max_iters,
            stiffen: true,
        },
    )
}

/// Iterative stiffening on an existing assembler; each iteration is one ALS
/// step on that assembler's counter.
pub fn iterative_stiffening_with(
    asm: &mut Assembler<'_>,
    dirichlet: &DirichletSpec,
    p: &MaterialParams,
    opts: UntangleOptions,
) -> Result<UntangleOutcome, UntangleFailure> {
    let mesh = asm.mesh();
    let mut mult = StiffnessMultipliers::ones(mesh.num_elements());
    let mut u = DisplacementField::from_dirichlet(mesh, dirichlet);
    let mut trace = Vec::new();
    for iteration in 1..=opts.max_iters {
        let system = asm.linear_system(dirichlet, p, &mult);
        let x = asm.solve(&system).map_err(|e: Error| UntangleFailure::SolveFailed {
            iteration,
            message: e.to_string(),
        })?;
        u.set_free_vector(mesh, &x);
        let inverted = tangled_elements(mesh, &u);
        trace.push(UntangleTraceRow {
            iteration,
            inverted: inverted.len(),
            min_jacobian: min_jacobian(mesh, &u),
        });
        if inverted.is_empty() {
            return Ok(UntangleOutcome {
                u,
                iterations: iteration,
                multipliers: mult,
                trace,
            });
        }
        if opts.stiffen {
            mult.stiffen(&inverted);
        }
        if iteration == opts.max_iters {
            return Err(UntangleFailure::IterationCap {
                iterations: iteration,
                inverted: inverted.len(),
                last: Box::new(UntangleOutcome {
                    u,
                    iterations: iteration,
                    multipliers: mult,
                    trace,
                }),
            });
        }
    }
    Err(UntangleFailure::IterationCap {
        iterations: 0,
        inverted: tangled_elements(mesh, &u).len(),
        last: Box::new(UntangleOutcome {
            u,
            iterations: 0,
            multipliers: mult,
            trace,
        }),
    })
}

/// `iteration,inverted,min_j` rows.
pub fn trace_csv(trace: &[UntangleTraceRow]) -> String {
    let mut s = String::from("iteration,inverted,min_j\n");
    for r in trace {
        writeln!(s, "{},{},{:e}", r.iteration, r.inverted, r.min_jacobian).unwrap();
    }
    s
}
