mod common;

use common::params;
use proptest::prelude::*;
use ubn_core::assembly::{assemble_linear_system, assemble_residual, solve_spd, StiffnessMultipliers};
use ubn_core::continuation::{continuation_solve, make_annulus_polar_path, ContinuationConfig, LoadPath};
use ubn_core::linalg::norm2;
use ubn_core::mesh::{
    annulus_dirichlet, element_jacobians, generate_annulus, generate_bar, pull_dirichlet, tangled_elements, BarSpec,
    BAR_FIXED,
};
use ubn_core::newton::{line_search_alpha, ubn_solve, BACKTRACK};
use ubn_core::untangle::{iterative_stiffening, iterative_stiffening_with, UntangleFailure, UntangleOptions};
use ubn_core::{DisplacementField, LoadSpec, ReferenceMesh, Status};

fn annulus() -> ReferenceMesh {
    generate_annulus(0.3, 1.0, 120).unwrap()
}

fn check_untangled(mesh: &ReferenceMesh, f_or_pull: f64) -> Result<(), TestCaseError> {
    let d = if mesh.dim() == 2 {
        annulus_dirichlet(mesh, f_or_pull).unwrap()
    } else {
        pull_dirichlet(mesh, BAR_FIXED, [f_or_pull, 0.0, 0.3 * f_or_pull])
    };
    match iterative_stiffening(mesh, &d, &params(), &LoadSpec::none(), 400) {
        Ok(out) => {
            prop_assert!(element_jacobians(mesh, &out.u).iter().all(|&j| j > 0.0));
            for e in 0..mesh.num_elements() {
                let c = out.multipliers.count(e);
                prop_assert_eq!(out.multipliers.factor(e), 1.5f64.powi(c as i32));
            }
            prop_assert!(out.multipliers.counts().iter().all(|&c| (c as usize) < out.iterations));
        }
        Err(UntangleFailure::IterationCap { .. }) => {}
        Err(e) => prop_assert!(false, "{e}"),
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn untangler_postcondition_annulus(f in 0.0f64..0.75) {
        check_untangled(&annulus(), f)?;
    }

    #[test]
    fn untangler_postcondition_bar(pull in 0.0f64..4.0) {
        let bar = generate_bar(&BarSpec { cells: [2, 2, 6], ..BarSpec::default() }).unwrap();
        check_untangled(&bar, pull)?;
    }

    #[test]
    fn line_search_keeps_a_tenth_of_every_jacobian(seed in any::<u64>(), scale in 0.1f64..20.0) {
        use rand::{Rng, SeedableRng};
        let mesh = annulus();
        let u0 = DisplacementField::from_dirichlet(&mesh, &annulus_dirichlet(&mesh, 0.1).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..mesh.num_free_dofs()).map(|_| scale * rng.gen_range(-0.1..0.1)).collect();
        if let Some(alpha) = line_search_alpha(&mesh, &u0, &s) {
            prop_assert!(alpha > 0.0 && alpha <= 1.0);
            let k = (alpha.ln() / BACKTRACK.ln()).round();
            prop_assert!((BACKTRACK.powi(k as i32) - alpha).abs() <= 1e-12 * alpha);
            let j0 = element_jacobians(&mesh, &u0);
            let j1 = element_jacobians(&mesh, &u0.stepped(&mesh, alpha, &s));
            for (a, b) in j1.iter().zip(&j0) {
                prop_assert!(*a >= 0.1 * b);
            }
        }
    }
}

/// Counts after `k` iterations come from re-running with cap `k`
/// (the process is deterministic).
#[test]
fn multipliers_grow_only_on_inverted_elements() {
    let mesh = annulus();
    let d = annulus_dirichlet(&mesh, 0.6).unwrap();
    let p = params();
    let full = iterative_stiffening(&mesh, &d, &p, &LoadSpec::none(), 400).unwrap();
    assert!(full.iterations > 3, "needs a multi-iteration case");
    let mut prev = vec![0u32; mesh.num_elements()];
    for k in 1..full.iterations {
        let Err(UntangleFailure::IterationCap { last, .. }) = iterative_stiffening(&mesh, &d, &p, &LoadSpec::none(), k)
        else {
            panic!("cap {k} should fail");
        };
        let inverted = tangled_elements(&mesh, &last.u);
        for e in 0..mesh.num_elements() {
            let now = last.multipliers.count(e);
            assert!(now >= prev[e]);
            assert_eq!(now - prev[e], u32::from(inverted.contains(&e)), "element {e} at iteration {k}");
        }
        prev = last.multipliers.counts().to_vec();
    }
    assert_eq!(full.multipliers.counts(), &prev[..]);
    let again = iterative_stiffening(&mesh, &d, &p, &LoadSpec::none(), 400).unwrap();
    assert_eq!(again.iterations, full.iterations);
    assert_eq!(again.multipliers, full.multipliers);
}

#[test]
fn unstiffened_first_iterate_is_linear_warp() {
    let mesh = annulus();
    let d = annulus_dirichlet(&mesh, 0.6).unwrap();
    let p = params();
    let mut asm = ubn_core::assembly::Assembler::new(&mesh, &LoadSpec::none());
    let opts = UntangleOptions {
        max_iters: 1,
        stiffen: false,
    };
    let u = match iterative_stiffening_with(&mut asm, &d, &p, opts) {
        Ok(o) => o.u,
        Err(UntangleFailure::IterationCap { last, .. }) => last.u,
        Err(e) => panic!("{e}"),
    };
    let sys = assemble_linear_system(&mesh, &d, &p, &StiffnessMultipliers::ones(mesh.num_elements()), &LoadSpec::none());
    let x = solve_spd(&sys).unwrap();
    for (a, b) in u.free_vector(&mesh).iter().zip(&x) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn ubn_converges_quadratically_to_a_stationary_point() {
    let mesh = annulus();
    let p = params();
    for f in [0.1, 0.3, 0.6] {
        let d = annulus_dirichlet(&mesh, f).unwrap();
        let r = ubn_solve(&mesh, &d, &p, &LoadSpec::none());
        assert_eq!(r.status, Status::Converged, "f = {f}");
        assert_eq!(r.als_steps, r.is_iterations + r.newton_iterations);
        let res = norm2(&assemble_residual(&mesh, &r.final_u, &p, &LoadSpec::none()).unwrap());
        assert!(res <= 1e-10 * r.initial_residual);
        let h: Vec<f64> = r.residual_history.iter().map(|x| x / r.initial_residual).collect();
        let n = h.len();
        assert!(n >= 3);
        let order = h[n - 1].ln() / h[n - 2].ln();
        assert!(order >= 1.7, "f = {f}: order {order}, history {h:?}");
        for row in &r.newton_trace {
            assert!(row.min_jacobian_ratio >= 0.1 && row.min_jacobian > 0.0);
            assert!(row.alpha > 0.0 && row.alpha <= 1.0);
        }
    }
}

#[test]
fn continuation_steps_are_untangled_and_monotone() {
    let mesh = annulus();
    let p = params();
    for f in [0.1, 0.3] {
        let path = make_annulus_polar_path(&mesh, f).unwrap();
        let c = continuation_solve(&mesh, &path, &p, &ContinuationConfig::default());
        assert_eq!(c.report.status, Status::Converged);
        assert!(c.lambdas.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*c.lambdas.last().unwrap(), 1.0);
        assert!(c.trace.iter().all(|t| t.min_jacobian_before > 0.0));
        let newton: usize = c.trace.iter().map(|t| t.newton_iterations).sum();
        assert_eq!(newton, c.report.als_steps);
        assert_eq!(c.report.major_iterations, c.lambdas.len());
    }
}

#[test]
fn linear_path_endpoints() {
    let mesh = generate_bar(&BarSpec::default()).unwrap();
    let d = pull_dirichlet(&mesh, BAR_FIXED, [0.5, 0.0, 1.0]);
    let path = LoadPath::linear(d.clone());
    let start = path.evaluate(&mesh, 0.0);
    let end = path.evaluate(&mesh, 1.0);
    for (n, x) in start.iter() {
        let r = mesh.node(n);
        assert!((0..3).all(|k| (x[k] - r[k]).abs() <= 1e-12));
        let y = end.position(n).unwrap();
        let z = d.position(n).unwrap();
        assert!((0..3).all(|k| (y[k] - z[k]).abs() <= 1e-12));
    }
}

#[test]
fn zero_motion_is_trivial_for_both_methods() {
    let mesh = annulus();
    let p = params();
    let r = ubn_solve(&mesh, &annulus_dirichlet(&mesh, 0.0).unwrap(), &p, &LoadSpec::none());
    assert_eq!(r.status, Status::Converged);
    assert!(r.als_steps <= 2);
    let c = continuation_solve(&mesh, &make_annulus_polar_path(&mesh, 0.0).unwrap(), &p, &ContinuationConfig::default());
    assert_eq!(c.report.status, Status::Converged);
    assert!(c.report.als_steps <= 2);
}
