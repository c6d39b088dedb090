use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ubn_core::assembly::deformation_gradient;
use ubn_core::mesh::{
    element_geometry, generate_annulus, generate_bar, load_triangle_mesh, tangled_elements, write_ele, write_node,
    BarSpec, SliverSpec, BAR_FIXED, BAR_PULLED,
};
use ubn_core::{DisplacementField, ReferenceMesh};

fn random_field(mesh: &ReferenceMesh, amplitude: f64, seed: u64) -> DisplacementField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = mesh.dim();
    let values = (0..mesh.num_nodes())
        .map(|_| {
            let mut v = [0.0; 3];
            for x in v.iter_mut().take(d) {
                *x = rng.gen_range(-amplitude..amplitude);
            }
            v
        })
        .collect();
    DisplacementField::from_values(values)
}

fn facet_measure(pts: &[[f64; 3]]) -> f64 {
    let sub = |a: &[f64; 3], b: &[f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    if pts.len() == 2 {
        let v = sub(&pts[1], &pts[0]);
        (v[0] * v[0] + v[1] * v[1]).sqrt()
    } else {
        let a = sub(&pts[1], &pts[0]);
        let b = sub(&pts[2], &pts[0]);
        let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    }
}

fn meshes() -> Vec<ReferenceMesh> {
    vec![
        generate_annulus(0.3, 1.0, 80).unwrap(),
        generate_bar(&BarSpec {
            cells: [2, 2, 4],
            jitter: 0.2,
            seed: 3,
            ..BarSpec::default()
        })
        .unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tangled_set_matches_gradient_determinants(seed in any::<u64>(), amp in 0.01f64..0.5) {
        for mesh in meshes() {
            let u = random_field(&mesh, amp, seed);
            let from_f: Vec<usize> = (0..mesh.num_elements())
                .filter(|&e| {
                    let det = if mesh.dim() == 2 {
                        deformation_gradient::<2>(&mesh, &u, e).determinant()
                    } else {
                        deformation_gradient::<3>(&mesh, &u, e).determinant()
                    };
                    det <= 0.0
                })
                .collect();
            prop_assert_eq!(tangled_elements(&mesh, &u), from_f);
        }
    }

    #[test]
    fn altitude_identity(seed in any::<u64>(), amp in 0.0f64..0.3) {
        for mesh in meshes() {
            let d = mesh.dim();
            let u = random_field(&mesh, amp, seed);
            for e in 0..mesh.num_elements() {
                let g = element_geometry(&mesh, &u, e);
                let pts: Vec<[f64; 3]> = mesh.element(e).iter().map(|&n| u.position(&mesh, n)).collect();
                for i in 0..=d {
                    let facet: Vec<[f64; 3]> = (0..=d).filter(|&k| k != i).map(|k| pts[k]).collect();
                    let v = g.altitudes[i] * facet_measure(&facet) / d as f64;
                    prop_assert!((v - g.signed_volume).abs() <= 1e-12 * g.signed_volume.abs().max(1e-300));
                }
            }
        }
    }
}

#[test]
fn triangle_files_round_trip() {
    for mesh in meshes() {
        let back = load_triangle_mesh(&write_node(&mesh), &write_ele(&mesh)).unwrap();
        assert_eq!(back.dim(), mesh.dim());
        assert_eq!(back.num_nodes(), mesh.num_nodes());
        for (a, b) in back.nodes().iter().zip(mesh.nodes()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-12);
            }
        }
        assert!(back.elements().eq(mesh.elements()));
        assert_eq!(back.markers(), mesh.markers());
    }
}

#[test]
fn parses_hand_written_triangle_files() {
    let node = "4 2 0 1\n1 0 0 1\n2 1 0 1\n3 1 1 2\n4 0 1 0\n";
    let ele = "2 3 0\n1 1 2 3\n2 1 3 4\n";
    let m = load_triangle_mesh(node, ele).unwrap();
    assert_eq!(m.num_elements(), 2);
    assert_eq!(m.dirichlet_nodes().count(), 3);
    assert_eq!(m.num_free_dofs(), 2);
    assert!(load_triangle_mesh(node, "1 3 0\n1 1 2 9\n").is_err());
    assert!(load_triangle_mesh("x", ele).is_err());
}

#[test]
fn bar_generator_marks_both_ends() {
    let spec = BarSpec::default();
    let m = generate_bar(&spec).unwrap();
    let count = |g| m.markers().iter().filter(|&&x| x == g).count();
    assert_eq!(count(BAR_FIXED), 25);
    assert_eq!(count(BAR_PULLED), 25);
    let total: f64 = (0..m.num_elements()).map(|e| m.reference_volume(e)).sum();
    assert!((total - 24.0).abs() <= 1e-10);
}

#[test]
fn sliver_is_flat_but_positive() {
    let spec = BarSpec {
        sliver: Some(SliverSpec {
            direction: [0.7071, 0.0, 0.7071],
            flatness: 1e-3,
        }),
        ..BarSpec::default()
    };
    let m = generate_bar(&spec).unwrap();
    let vols: Vec<f64> = (0..m.num_elements()).map(|e| m.reference_volume(e)).collect();
    let min = vols.iter().copied().fold(f64::INFINITY, f64::min);
    let typical = vols.iter().sum::<f64>() / vols.len() as f64;
    assert!(min > 0.0 && min < 0.01 * typical, "min {min}, typical {typical}");
}
