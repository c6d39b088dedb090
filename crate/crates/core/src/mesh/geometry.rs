use super::{cross, dist, dot, Point, ReferenceMesh};
use crate::field::DisplacementField;

/// Signed measure and signed altitudes of a deformed simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementGeometry {
    pub signed_volume: f64,
    /// `altitudes[i]` is the signed distance from vertex `i` to the opposite facet.
    pub altitudes: Vec<f64>,
}

/// Signed area (2D) or volume (3D) of a simplex given its `dim + 1` vertices.
pub fn simplex_signed_volume(dim: usize, pts: &[Point]) -> f64 {
    let e = |k: usize| {
        [
            pts[k][0] - pts[0][0],
            pts[k][1] - pts[0][1],
            pts[k][2] - pts[0][2],
        ]
    };
    if dim == 2 {
        let (a, b) = (e(1), e(2));
        0.5 * (a[0] * b[1] - b[0] * a[1])
    } else {
        dot(&e(1), &cross(&e(2), &e(3))) / 6.0
    }
}

/// Signed volume and the `dim + 1` signed altitudes `d * V / |facet_i|`.
/// Degenerate facets yield zero altitude.
pub fn simplex_altitudes(dim: usize, pts: &[Point]) -> (f64, [f64; 4]) {
    let vol = simplex_signed_volume(dim, pts);
    let mut alt = [0.0; 4];
    for (i, a) in alt.iter_mut().enumerate().take(dim + 1) {
        let measure = if dim == 2 {
            dist(&pts[(i + 1) % 3], &pts[(i + 2) % 3])
        } else {
            let f: Vec<&Point> = (0..4).filter(|&k| k != i).map(|k| &pts[k]).collect();
            let u = [f[1][0] - f[0][0], f[1][1] - f[0][1], f[1][2] - f[0][2]];
            let v = [f[2][0] - f[0][0], f[2][1] - f[0][1], f[2][2] - f[0][2]];
            let c = cross(&u, &v);
            0.5 * dot(&c, &c).sqrt()
        };
        *a = if measure > 0.0 {
            dim as f64 * vol / measure
        } else {
            0.0
        };
    }
    (vol, alt)
}

pub(crate) fn deformed_vertices(mesh: &ReferenceMesh, u: &DisplacementField, e: usize) -> [Point; 4] {
    let mut pts = [[0.0; 3]; 4];
    for (p, &n) in pts.iter_mut().zip(mesh.element(e)) {
        *p = u.position(mesh, n);
    }
    pts
}

pub fn element_geometry(mesh: &ReferenceMesh, u: &DisplacementField, e: usize) -> ElementGeometry {
    let d = mesh.dim();
    let pts = deformed_vertices(mesh, u, e);
    let (signed_volume, alt) = simplex_altitudes(d, &pts[..d + 1]);
    ElementGeometry {
        signed_volume,
        altitudes: alt[..d + 1].to_vec(),
    }
}

/// Per-element `J = det F`, the same quantity the material law sees (and,
/// for linear elements, the deformed-to-reference volume ratio).
pub fn element_jacobians(mesh: &ReferenceMesh, u: &DisplacementField) -> Vec<f64> {
    (0..mesh.num_elements())
        .map(|e| crate::assembly::element_det(mesh, u, e))
        .collect()
}

pub fn min_jacobian(mesh: &ReferenceMesh, u: &DisplacementField) -> f64 {
    element_jacobians(mesh, u).into_iter().fold(f64::INFINITY, f64::min)
}

/// Elements with `J <= 0` in the configuration `X + u`.
pub fn tangled_elements(mesh: &ReferenceMesh, u: &DisplacementField) -> Vec<usize> {
    element_jacobians(mesh, u)
        .into_iter()
        .enumerate()
        .filter(|&(_, j)| j <= 0.0)
        .map(|(e, _)| e)
        .collect()
}
