//! Synthetic meshes: a ring-layered annulus and a Kuhn-subdivided bar.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{simplex_altitudes, DirichletSpec, Point, ReferenceMesh};
use crate::error::{Error, Result};

/// Marker of the inner circle of a generated annulus.
pub const ANNULUS_INNER: u32 = 1;
/// Marker of the outer circle of a generated annulus.
pub const ANNULUS_OUTER: u32 = 2;
/// Marker of the clamped end (`z = 0`) of a generated bar.
pub const BAR_FIXED: u32 = 1;
/// Marker of the pulled end (`z = lz`) of a generated bar.
pub const BAR_PULLED: u32 = 2;

struct RingPlan {
    radii: Vec<f64>,
    counts: Vec<usize>,
}

impl RingPlan {
    fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn ring_plan(r_inner: f64, r_outer: f64, n_outer: usize) -> RingPlan {
    let h = 2.0 * PI * r_outer / n_outer as f64;
    let layers = (((r_outer - r_inner) / (h * 3f64.sqrt() / 2.0)).round() as usize).max(1);
    let radii: Vec<f64> = (0..=layers)
        .map(|k| r_inner + (r_outer - r_inner) * k as f64 / layers as f64)
        .collect();
    let counts = radii
        .iter()
        .map(|r| ((2.0 * PI * r / h).round() as usize).max(4))
        .collect();
    RingPlan { radii, counts }
}

/// Triangulates the annulus `r_inner <= |x| <= r_outer` with concentric
/// node rings of roughly uniform spacing, choosing the spacing so that the
/// node count lands as close as possible to `target_node_count`.
///
/// Both circles are Dirichlet (markers [`ANNULUS_INNER`], [`ANNULUS_OUTER`]).
pub fn generate_annulus(r_inner: f64, r_outer: f64, target_node_count: usize) -> Result<ReferenceMesh> {
    if !(r_inner > 0.0 && r_inner < r_outer && r_outer.is_finite()) {
        return Err(Error::Argument(format!(
            "annulus radii must satisfy 0 < r_inner < r_outer, got ({r_inner}, {r_outer})"
        )));
    }
    if target_node_count < 16 {
        return Err(Error::Argument(format!(
            "annulus needs at least 16 nodes, got {target_node_count}"
        )));
    }
    let plan = (4..=target_node_count)
        .map(|n| ring_plan(r_inner, r_outer, n))
        .min_by_key(|p| p.total().abs_diff(target_node_count))
        .expect("non-empty range");

    let mut nodes: Vec<Point> = Vec::new();
    let mut markers = Vec::new();
    let mut ring_start = Vec::new();
    let last = plan.radii.len() - 1;
    for (k, (&r, &n)) in plan.radii.iter().zip(&plan.counts).enumerate() {
        ring_start.push(nodes.len());
        let offset = if k % 2 == 1 { 0.5 } else { 0.0 };
        for j in 0..n {
            let t = 2.0 * PI * (j as f64 + offset) / n as f64;
            nodes.push([r * t.cos(), r * t.sin(), 0.0]);
            markers.push(match k {
                0 => ANNULUS_INNER,
                k if k == last => ANNULUS_OUTER,
                _ => 0,
            });
        }
    }

    let mut conn = Vec::new();
    for k in 0..last {
        let (na, nb) = (plan.counts[k], plan.counts[k + 1]);
        let (sa, sb) = (ring_start[k], ring_start[k + 1]);
        let angle = |start: usize, n: usize, i: usize| {
            let p = nodes[start + i % n];
            let mut t = p[1].atan2(p[0]);
            if t < -1e-12 {
                t += 2.0 * PI;
            }
            t + 2.0 * PI * (i / n) as f64
        };
        let (mut i, mut j) = (0usize, 0usize);
        while i < na || j < nb {
            let advance_a = if i == na {
                false
            } else if j == nb {
                true
            } else {
                angle(sa, na, i + 1) <= angle(sb, nb, j + 1)
            };
            if advance_a {
                conn.extend([sa + i % na, sa + (i + 1) % na, sb + j % nb]);
                i += 1;
            } else {
                conn.extend([sa + i % na, sb + (j + 1) % nb, sb + j % nb]);
                j += 1;
            }
        }
    }
    ReferenceMesh::new(2, nodes, conn, markers)
}

/// Inner and outer radii recovered from the Dirichlet nodes of an annulus
/// centred at the origin.
pub fn annulus_radii(mesh: &ReferenceMesh) -> Result<(f64, f64)> {
    if mesh.dim() != 2 {
        return Err(Error::Argument("annulus boundary conditions need a 2D mesh".into()));
    }
    let radius = |n: usize| {
        let p = mesh.node(n);
        p[0].hypot(p[1])
    };
    let (lo, hi) = mesh
        .dirichlet_nodes()
        .map(radius)
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::Argument("mesh has no annular Dirichlet boundary".into()));
    }
    let tol = 1e-9 * hi;
    for n in mesh.dirichlet_nodes() {
        let r = radius(n);
        if (r - lo).abs() > tol && (r - hi).abs() > tol {
            return Err(Error::Classification { node: n });
        }
    }
    Ok((lo, hi))
}

/// Which circle a Dirichlet node lies on.
pub(crate) fn annulus_circle(p: Point, r_inner: f64, r_outer: f64) -> Option<bool> {
    let r = p[0].hypot(p[1]);
    let tol = 1e-9 * r_outer;
    if (r - r_outer).abs() <= tol {
        Some(true)
    } else if (r - r_inner).abs() <= tol {
        Some(false)
    } else {
        None
    }
}

/// Annulus test loading: the outer circle turns by `f` radians and the
/// inner circle moves a fraction `f` of the gap toward the outer one.
pub fn annulus_dirichlet(mesh: &ReferenceMesh, f: f64) -> Result<DirichletSpec> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Argument(format!("f must lie in [0, 1], got {f}")));
    }
    annulus_polar_positions(mesh, f, f)
}

/// Outer circle rotated by `angle`, inner circle moved radially by
/// `fraction` of the gap.
pub(crate) fn annulus_polar_positions(mesh: &ReferenceMesh, angle: f64, fraction: f64) -> Result<DirichletSpec> {
    let (r_in, r_out) = annulus_radii(mesh)?;
    let mut positions = BTreeMap::new();
    for n in mesh.dirichlet_nodes() {
        let p = mesh.node(n);
        // Rotation and radial scaling act on the original point so that a
        // zero motion reproduces it bit for bit.
        let q = match annulus_circle(p, r_in, r_out) {
            Some(true) => {
                let (s, c) = angle.sin_cos();
                [c * p[0] - s * p[1], s * p[0] + c * p[1], 0.0]
            }
            Some(false) => {
                let scale = 1.0 + fraction * (r_out - r_in) / p[0].hypot(p[1]);
                [scale * p[0], scale * p[1], 0.0]
            }
            None => return Err(Error::Classification { node: n }),
        };
        positions.insert(n, q);
    }
    DirichletSpec::new(mesh, positions)
}

/// A flattened tetrahedron planted next to the pulled end of a bar.
#[derive(Debug, Clone, PartialEq)]
pub struct SliverSpec {
    /// Pull direction the sliver is chosen against.
    pub direction: Point,
    /// Final altitude of the flattened vertex as a fraction of its original altitude.
    pub flatness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarSpec {
    pub lengths: Point,
    pub cells: [usize; 3],
    /// Random displacement of strictly interior nodes, as a fraction of the cell size.
    pub jitter: f64,
    pub seed: u64,
    pub sliver: Option<SliverSpec>,
}

impl Default for BarSpec {
    fn default() -> Self {
        Self {
            lengths: [2.0, 2.0, 6.0],
            cells: [4, 4, 12],
            jitter: 0.0,
            seed: 0,
            sliver: None,
        }
    }
}

/// Box `[0,lx] x [0,ly] x [0,lz]` split into cubes of six tetrahedra each
/// (Kuhn subdivision). The `z = 0` face is marked [`BAR_FIXED`] and the
/// `z = lz` face [`BAR_PULLED`]; all other faces are traction-free.
pub fn generate_bar(spec: &BarSpec) -> Result<ReferenceMesh> {
    let [nx, ny, nz] = spec.cells;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::Argument("bar needs at least one cell per direction".into()));
    }
    if spec.lengths.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Argument("bar lengths must be positive".into()));
    }
    if !(0.0..0.25).contains(&spec.jitter) {
        return Err(Error::Argument("jitter must lie in [0, 0.25)".into()));
    }
    let h = [
        spec.lengths[0] / nx as f64,
        spec.lengths[1] / ny as f64,
        spec.lengths[2] / nz as f64,
    ];
    let id = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    let mut markers = Vec::with_capacity(nodes.capacity());
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                let mut p = [i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]];
                let interior = i > 0 && i < nx && j > 0 && j < ny && k > 0 && k < nz;
                if interior && spec.jitter > 0.0 {
                    for (c, hc) in p.iter_mut().zip(h) {
                        *c += spec.jitter * hc * rng.gen_range(-1.0..1.0);
                    }
                }
                nodes.push(p);
                markers.push(if k == 0 {
                    BAR_FIXED
                } else if k == nz {
                    BAR_PULLED
                } else {
                    0
                });
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut conn = Vec::with_capacity(6 * 4 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    conn.push(id(c[0], c[1], c[2]));
                    for axis in perm {
                        c[axis] += 1;
                        conn.push(id(c[0], c[1], c[2]));
                    }
                }
            }
        }
    }
    if let Some(sliver) = &spec.sliver {
        inject_sliver(&mut nodes, &markers, &conn, sliver)?;
    }
    ReferenceMesh::new(3, nodes, conn, markers)
}

/// Moves one free node next to the pulled end toward the opposite face of
/// one of its tetrahedra, chosen so that pulling along `direction` shrinks
/// that tetrahedron's altitude fastest relative to its size.
fn inject_sliver(nodes: &mut [Point], markers: &[u32], conn: &[usize], spec: &SliverSpec) -> Result<()> {
    if !(spec.flatness > 0.0 && spec.flatness < 1.0) {
        return Err(Error::Argument("sliver flatness must lie in (0, 1)".into()));
    }
    let mut star: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (e, tet) in conn.chunks_exact(4).enumerate() {
        for &n in tet {
            star.entry(n).or_default().push(e);
        }
    }
    let tet_points = |nodes: &[Point], e: usize| {
        let mut pts = [[0.0; 3]; 4];
        for (p, &n) in pts.iter_mut().zip(&conn[4 * e..4 * e + 4]) {
            *p = nodes[n];
        }
        pts
    };
    let oriented_volume = |nodes: &[Point], e: usize| {
        let pts = tet_points(nodes, e);
        super::simplex_signed_volume(3, &pts)
    };

    // (score, node, new position)
    let mut best: Option<(f64, usize, Point)> = None;
    for (&p, elems) in &star {
        if markers[p] != 0 {
            continue;
        }
        for &e in elems {
            let tet = &conn[4 * e..4 * e + 4];
            if !tet.iter().any(|&n| markers[n] == BAR_PULLED) {
                continue;
            }
            let local = tet.iter().position(|&n| n == p).unwrap();
            let face: Vec<usize> = tet.iter().copied().filter(|&n| n != p).collect();
            let centroid = {
                let mut c = [0.0; 3];
                for &n in &face {
                    for k in 0..3 {
                        c[k] += nodes[n][k] / 3.0;
                    }
                }
                c
            };
            let old = nodes[p];
            let target = [
                centroid[0] + spec.flatness * (old[0] - centroid[0]),
                centroid[1] + spec.flatness * (old[1] - centroid[1]),
                centroid[2] + spec.flatness * (old[2] - centroid[2]),
            ];
            // Every tetrahedron around p must keep its orientation.
            let mut trial = nodes.to_vec();
            trial[p] = target;
            let keeps_orientation = elems
                .iter()
                .all(|&f| oriented_volume(nodes, f).signum() == oriented_volume(&trial, f).signum());
            if !keeps_orientation {
                continue;
            }
            // Altitude rate of p under a small pull of the pulled vertices.
            let alt = |pts: &[Point; 4]| simplex_altitudes(3, pts).1[local].abs();
            let before = tet_points(&trial, e);
            let mut after = before;
            let eps = 1e-6;
            for (q, &n) in after.iter_mut().zip(tet) {
                if markers[n] == BAR_PULLED {
                    for k in 0..3 {
                        q[k] += eps * spec.direction[k];
                    }
                }
            }
            let a0 = alt(&before);
            let rate = (alt(&after) - a0) / eps;
            let score = rate / a0;
            if score < 0.0 && best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, p, target));
            }
        }
    }
    let (_, node, pos) = best.ok_or_else(|| {
        Error::Argument("no tetrahedron near the pulled end is compressed by this pull direction".into())
    })?;
    nodes[node] = pos;
    Ok(())
}

/// Clamps the nodes of surface group `fixed` and displaces every other
/// Dirichlet node by `displacement`.
pub fn pull_dirichlet(mesh: &ReferenceMesh, fixed: u32, displacement: Point) -> DirichletSpec {
    DirichletSpec::from_fn(mesh, |n, x| {
        if mesh.markers()[n] == fixed {
            x
        } else {
            [
                x[0] + displacement[0],
                x[1] + displacement[1],
                x[2] + displacement[2],
            ]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::DisplacementField;
    use crate::mesh::{tangled_elements, NodeClass};

    #[test]
    fn annulus_matches_target_size() {
        let m = generate_annulus(1.0, 2.0, 182).unwrap();
        let n = m.num_nodes() as f64;
        assert!((n - 182.0).abs() <= 0.25 * 182.0, "{n}");
        let t = m.num_elements() as f64;
        assert!((t - 286.0).abs() <= 0.25 * 286.0, "{t}");
        // Euler characteristic of an annulus: T = 2N - B.
        let b = m.dirichlet_nodes().count();
        assert_eq!(m.num_elements(), 2 * m.num_nodes() - b);
        assert!(m.boundary_facets().iter().all(|f| f.group != 0));
    }

    #[test]
    fn coarse_annulus_is_valid() {
        let m = generate_annulus(1.0, 2.0, 16).unwrap();
        assert!(m.num_nodes() >= 12);
        assert!((0..m.num_elements()).all(|e| m.reference_volume(e) > 0.0));
        assert!(tangled_elements(&m, &DisplacementField::zeros(&m)).is_empty());
        let area: f64 = (0..m.num_elements()).map(|e| m.reference_volume(e)).sum();
        // Inscribed polygons: area below pi * (4 - 1).
        assert!(area < 3.0 * PI && area > 0.6 * 3.0 * PI);
    }

    #[test]
    fn inverted_radii_rejected() {
        assert!(matches!(generate_annulus(2.0, 1.0, 100), Err(Error::Argument(_))));
        assert!(matches!(generate_annulus(1.0, 2.0, 15), Err(Error::Argument(_))));
    }

    #[test]
    fn annulus_dirichlet_motion() {
        let m = generate_annulus(1.0, 2.0, 120).unwrap();
        assert_eq!(annulus_dirichlet(&m, 0.0).unwrap(), DirichletSpec::identity(&m));

        let spec = annulus_dirichlet(&m, 0.1).unwrap();
        for (n, q) in spec.iter() {
            let p = m.node(n);
            let (r0, t0) = (p[0].hypot(p[1]), p[1].atan2(p[0]));
            let (r1, t1) = (q[0].hypot(q[1]), q[1].atan2(q[0]));
            if (r0 - 2.0).abs() < 1e-9 {
                assert!((r1 - 2.0).abs() < 1e-12);
                let dt = (t1 - t0).rem_euclid(2.0 * PI);
                assert!((dt - 0.1).abs() < 1e-12, "{dt}");
            } else {
                assert!((r1 - 1.1).abs() < 1e-12);
                assert!((t1 - t0).abs() < 1e-12);
            }
        }

        let spec = annulus_dirichlet(&m, 1.0).unwrap();
        assert!(spec.iter().all(|(_, q)| (q[0].hypot(q[1]) - 2.0).abs() < 1e-12));
    }

    #[test]
    fn stray_dirichlet_node_is_a_classification_error() {
        let nodes = vec![
            [1.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.0, 1.5, 0.0],
        ];
        let m = ReferenceMesh::new(2, nodes, vec![0, 1, 2], vec![1, 2, 1]).unwrap();
        assert!(matches!(annulus_dirichlet(&m, 0.1), Err(Error::Classification { node: 2 })));
    }

    #[test]
    fn bar_is_conforming() {
        let m = generate_bar(&BarSpec::default()).unwrap();
        assert_eq!(m.num_nodes(), 5 * 5 * 13);
        assert_eq!(m.num_elements(), 6 * 4 * 4 * 12);
        let vol: f64 = (0..m.num_elements()).map(|e| m.reference_volume(e)).sum();
        assert!((vol - 24.0).abs() < 1e-10);
        // Closed surface: 2 triangles per boundary square.
        assert_eq!(m.boundary_facets().len(), 2 * (2 * 16 + 4 * 48));
        let fixed = m.markers().iter().filter(|&&g| g == BAR_FIXED).count();
        assert_eq!(fixed, 25);
        assert!(m.node_class(id_center(&m)) == NodeClass::Interior);
    }

    fn id_center(m: &ReferenceMesh) -> usize {
        m.nodes()
            .iter()
            .position(|p| (p[0] - 1.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12 && (p[2] - 3.0).abs() < 1e-12)
            .unwrap()
    }

    #[test]
    fn jitter_is_seeded() {
        let spec = BarSpec {
            jitter: 0.1,
            seed: 7,
            ..BarSpec::default()
        };
        let a = generate_bar(&spec).unwrap();
        let b = generate_bar(&spec).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        let c = generate_bar(&BarSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.nodes(), c.nodes());
    }

    #[test]
    fn sliver_injection_creates_one_flat_element() {
        let spec = BarSpec {
            sliver: Some(SliverSpec {
                direction: [1.0, 0.0, 1.0],
                flatness: 1e-3,
            }),
            ..BarSpec::default()
        };
        let m = generate_bar(&spec).unwrap();
        let plain = generate_bar(&BarSpec::default()).unwrap();
        let moved: Vec<usize> = (0..m.num_nodes()).filter(|&n| m.node(n) != plain.node(n)).collect();
        assert_eq!(moved.len(), 1);
        let ratios: Vec<f64> = (0..m.num_elements())
            .map(|e| m.reference_volume(e) / plain.reference_volume(e))
            .collect();
        let flat = ratios.iter().filter(|&&r| r < 0.01).count();
        assert!(flat >= 1, "{ratios:?}");
    }

    #[test]
    fn pull_dirichlet_clamps_and_translates() {
        let m = generate_bar(&BarSpec::default()).unwrap();
        let spec = pull_dirichlet(&m, BAR_FIXED, [0.0, 0.0, 1.5]);
        for (n, q) in spec.iter() {
            let p = m.node(n);
            if m.markers()[n] == BAR_FIXED {
                assert_eq!(p, q);
            } else {
                assert_eq!(q[2], p[2] + 1.5);
            }
        }
    }
}
