//! Symmetric simplex quadrature with positive weights and interior points.
//!
//! Weights are normalized to sum to one, so an integral over a simplex is
//! its measure times the weighted sum.

use crate::field::DisplacementField;
use crate::mesh::{Point, ReferenceMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Barycentric coordinates, `dim + 1` per point.
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

// 6-point, degree 4 on the triangle: two orbits (a, a, 1 - 2a).
const TRI_A1: f64 = 0.445_948_490_915_964_886_318_329_3;
const TRI_W1: f64 = 0.223_381_589_678_011_465_695_007;
const TRI_A2: f64 = 0.091_576_213_509_770_743_459_571_46;
const TRI_W2: f64 = 0.109_951_743_655_321_867_638_326_3;

// 15-point, degree 5 on the tetrahedron (Keast): centroid, two orbits
// (a, a, a, 1 - 3a) and one orbit (b, b, 1/2 - b, 1/2 - b).
const TET_W0: f64 = 16.0 / 135.0;
const TET_A1: f64 = 0.091_971_078_052_723_032_788_845_1;
const TET_W1: f64 = 0.071_937_083_779_018_620_010_380_43;
const TET_A2: f64 = 0.319_793_627_829_629_908_387_625_5;
const TET_W2: f64 = 0.069_068_207_226_272_385_280_620_87;
const TET_B: f64 = 0.056_350_832_689_629_155_741_036_73;
const TET_W3: f64 = 10.0 / 189.0;

fn push_orbit3(rule: &mut QuadratureRule, a: f64, w: f64) {
    let c = 1.0 - 2.0 * a;
    for p in [[a, a, c], [a, c, a], [c, a, a]] {
        rule.points.push(p.to_vec());
        rule.weights.push(w);
    }
}

fn push_orbit4(rule: &mut QuadratureRule, a: f64, w: f64) {
    let c = 1.0 - 3.0 * a;
    for i in 0..4 {
        let mut p = vec![a; 4];
        p[i] = c;
        rule.points.push(p);
        rule.weights.push(w);
    }
}

/// Quadrature on the simplex of dimension `dim`: 6 points of degree 4 for
/// triangles, 15 points of degree 5 for tetrahedra, and 3-point Gauss
/// (degree 5) on edges, used for 2D boundary tractions.
pub fn rule(dim: usize) -> QuadratureRule {
    let mut r = QuadratureRule {
        points: Vec::new(),
        weights: Vec::new(),
    };
    match dim {
        1 => {
            let s = 0.5 * (0.6f64).sqrt();
            for (x, w) in [(0.5 - s, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + s, 5.0 / 18.0)] {
                r.points.push(vec![x, 1.0 - x]);
                r.weights.push(w);
            }
        }
        2 => {
            push_orbit3(&mut r, TRI_A1, TRI_W1);
            push_orbit3(&mut r, TRI_A2, TRI_W2);
        }
        3 => {
            r.points.push(vec![0.25; 4]);
            r.weights.push(TET_W0);
            push_orbit4(&mut r, TET_A1, TET_W1);
            push_orbit4(&mut r, TET_A2, TET_W2);
            let c = 0.5 - TET_B;
            for i in 0..4 {
                for j in i + 1..4 {
                    let mut p = vec![c; 4];
                    p[i] = TET_B;
                    p[j] = TET_B;
                    r.points.push(p);
                    r.weights.push(TET_W3);
                }
            }
        }
        _ => panic!("no quadrature rule for dimension {dim}"),
    }
    debug_assert!(r.is_well_formed(), "malformed rule for dimension {dim}");
    r
}

fn permutations(v: &[f64]) -> Vec<Vec<f64>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Positive weights summing to one, every barycentric coordinate at
    /// least `1e-6`, and closure of the point set (with weights) under all
    /// permutations of the vertices.
    pub fn is_well_formed(&self) -> bool {
        let positive = self.weights.iter().all(|&w| w > 0.0);
        let total = (self.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14;
        let interior = self.points.iter().flatten().all(|&b| b >= 1e-6);
        positive && total && interior && self.is_symmetric()
    }

    pub fn is_symmetric(&self) -> bool {
        self.points.iter().zip(&self.weights).all(|(p, &w)| {
            permutations(p).iter().all(|q| {
                self.points.iter().zip(&self.weights).any(|(r, &wr)| {
                    (wr - w).abs() <= 1e-15 && r.iter().zip(q).all(|(a, b)| (a - b).abs() <= 1e-15)
                })
            })
        })
    }

    /// Weighted sum over the points of `f(barycentric)`; multiply by the
    /// simplex measure to get the integral.
    pub fn apply(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }
}

/// A quadrature point as seen by an integrand.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadPoint<'a> {
    pub barycentric: &'a [f64],
    pub reference: Point,
    pub current: Point,
}

/// Integral of `f` over reference element `e` (deformed positions from `u`
/// are exposed to the integrand but the measure is the reference one).
pub fn integrate_element(
    f: impl Fn(&QuadPoint) -> f64,
    mesh: &ReferenceMesh,
    e: usize,
    u: &DisplacementField,
) -> f64 {
    let r = rule(mesh.dim());
    let conn = mesh.element(e);
    let sum = r.apply(|bary| {
        let mut reference = [0.0; 3];
        let mut current = [0.0; 3];
        for (&b, &n) in bary.iter().zip(conn) {
            let x = mesh.node(n);
            let y = u.position(mesh, n);
            for k in 0..3 {
                reference[k] += b * x[k];
                current[k] += b * y[k];
            }
        }
        f(&QuadPoint {
            barycentric: bary,
            reference,
            current,
        })
    });
    sum * mesh.reference_volume(e)
}
