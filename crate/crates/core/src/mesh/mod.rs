//! Reference meshes of linear triangles and tetrahedra.
//!
//! A [`ReferenceMesh`] is the undeformed body: node coordinates, simplex
//! connectivity, boundary facets and the per-node boundary classification
//! that decides which nodes carry unknowns. It is immutable once built.

mod export;
mod generate;
mod geometry;
mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};

pub use export::{write_svg, write_vtk};
pub use generate::{
    annulus_dirichlet, annulus_radii, generate_annulus, generate_bar, pull_dirichlet, BarSpec, ANNULUS_INNER, ANNULUS_OUTER, BAR_FIXED, BAR_PULLED,
    SliverSpec,
};
pub use geometry::{
    element_geometry, element_jacobians, min_jacobian, simplex_altitudes, simplex_signed_volume,
    tangled_elements, ElementGeometry,
};
pub(crate) use generate::annulus_polar_positions;
pub(crate) use geometry::deformed_vertices;
pub use io::{load_triangle_files, load_triangle_mesh, write_ele, write_node};

/// Node coordinates. The third component is zero for 2D meshes.
pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Dirichlet,
    /// On the boundary but not prescribed (traction or free surface).
    Neumann,
    Interior,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryFacet {
    /// Facet vertices, `dim` of them.
    pub nodes: Vec<usize>,
    /// The single element owning this facet.
    pub element: usize,
    /// Local index of the element vertex opposite the facet.
    pub opposite: usize,
    pub group: u32,
}

#[derive(Debug, Clone)]
pub struct ReferenceMesh {
    dim: usize,
    nodes: Vec<Point>,
    elements: Vec<usize>,
    markers: Vec<u32>,
    node_class: Vec<NodeClass>,
    facets: Vec<BoundaryFacet>,
    free_dof: Vec<Option<usize>>,
    n_free_nodes: usize,
    ref_volume: Vec<f64>,
    grads: Vec<[Point; 4]>,
}

impl ReferenceMesh {
    /// Builds a mesh from coordinates, flat connectivity (`dim + 1` node
    /// indices per element) and per-node boundary markers.
    ///
    /// A nonzero marker makes a node Dirichlet; the marker value doubles as
    /// its surface group. Elements with negative reference volume are
    /// reoriented by swapping their last two vertices.
    pub fn new(
        dim: usize,
        nodes: Vec<Point>,
        mut elements: Vec<usize>,
        markers: Vec<u32>,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Argument(format!("dimension must be 2 or 3, got {dim}")));
        }
        let npe = dim + 1;
        if elements.len() % npe != 0 {
            return Err(Error::Validation(format!(
                "connectivity length {} is not a multiple of {npe}",
                elements.len()
            )));
        }
        if markers.len() != nodes.len() {
            return Err(Error::Validation(format!(
                "{} markers for {} nodes",
                markers.len(),
                nodes.len()
            )));
        }
        if elements.is_empty() {
            return Err(Error::Validation("mesh has no elements".into()));
        }
        if let Some(&bad) = elements.iter().find(|&&n| n >= nodes.len()) {
            return Err(Error::Validation(format!(
                "element references node {bad} but mesh has {} nodes",
                nodes.len()
            )));
        }

        let n_elem = elements.len() / npe;
        let mut ref_volume = Vec::with_capacity(n_elem);
        let mut grads = Vec::with_capacity(n_elem);
        for e in 0..n_elem {
            let conn = &mut elements[e * npe..(e + 1) * npe];
            let mut pts = [[0.0; 3]; 4];
            for (p, &n) in pts.iter_mut().zip(conn.iter()) {
                *p = nodes[n];
            }
            let mut vol = simplex_signed_volume(dim, &pts[..npe]);
            let h = max_edge(&pts[..npe]);
            if !(vol.abs() > 1e-13 * h.powi(dim as i32)) {
                return Err(Error::DegenerateElement { element: e });
            }
            if vol < 0.0 {
                conn.swap(npe - 2, npe - 1);
                pts.swap(npe - 2, npe - 1);
                vol = -vol;
            }
            ref_volume.push(vol);
            grads.push(shape_gradients(dim, &pts[..npe]));
        }

        let facets = boundary_facets(dim, &elements, &markers)?;

        let mut on_boundary = vec![false; nodes.len()];
        for f in &facets {
            for &n in &f.nodes {
                on_boundary[n] = true;
            }
        }
        let node_class: Vec<NodeClass> = markers
            .iter()
            .zip(&on_boundary)
            .map(|(&m, &b)| match (m, b) {
                (m, _) if m != 0 => NodeClass::Dirichlet,
                (_, true) => NodeClass::Neumann,
                _ => NodeClass::Interior,
            })
            .collect();

        let mut free_dof = vec![None; nodes.len()];
        let mut n_free_nodes = 0;
        for (slot, class) in free_dof.iter_mut().zip(&node_class) {
            if *class != NodeClass::Dirichlet {
                *slot = Some(n_free_nodes * dim);
                n_free_nodes += 1;
            }
        }

        Ok(Self {
            dim,
            nodes,
            elements,
            markers,
            node_class,
            facets,
            free_dof,
            n_free_nodes,
            ref_volume,
            grads,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> Point {
        self.nodes[n]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let npe = self.dim + 1;
        &self.elements[e * npe..(e + 1) * npe]
    }

    pub fn elements(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.elements.chunks_exact(self.dim + 1)
    }

    pub fn markers(&self) -> &[u32] {
        &self.markers
    }

    pub fn node_class(&self, n: usize) -> NodeClass {
        self.node_class[n]
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.facets
    }

    /// Nodes with a prescribed position, in increasing order.
    pub fn dirichlet_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&n| self.node_class[n] == NodeClass::Dirichlet)
    }

    /// First free degree of freedom of node `n`, or `None` for Dirichlet nodes.
    pub fn free_dof(&self, n: usize) -> Option<usize> {
        self.free_dof[n]
    }

    /// Number of non-Dirichlet nodes (`m`).
    pub fn num_free_nodes(&self) -> usize {
        self.n_free_nodes
    }

    /// Length of the unknown vector, `dim * m`.
    pub fn num_free_dofs(&self) -> usize {
        self.n_free_nodes * self.dim
    }

    /// Positive reference measure (area or volume) of element `e`.
    pub fn reference_volume(&self, e: usize) -> f64 {
        self.ref_volume[e]
    }

    /// Reference gradients of the `dim + 1` linear shape functions of `e`.
    pub fn shape_gradients(&self, e: usize) -> &[Point] {
        &self.grads[e][..self.dim + 1]
    }

    /// Surface groups that appear on at least one boundary facet.
    pub fn facet_groups(&self) -> BTreeSet<u32> {
        self.facets.iter().map(|f| f.group).collect()
    }

    /// Node-to-node adjacency through shared elements (each list sorted, self excluded).
    pub fn node_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.nodes.len()];
        for conn in self.elements() {
            for &a in conn {
                for &b in conn {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Elements incident to at least one Dirichlet node.
    pub fn elements_touching_dirichlet(&self) -> Vec<usize> {
        (0..self.num_elements())
            .filter(|&e| {
                self.element(e)
                    .iter()
                    .any(|&n| self.node_class[n] == NodeClass::Dirichlet)
            })
            .collect()
    }
}

fn max_edge(pts: &[Point]) -> f64 {
    let mut h: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            h = h.max(dist(&pts[i], &pts[j]));
        }
    }
    h
}

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Gradients of the barycentric coordinates. Rows of the inverse edge matrix
/// give vertices 1..=d; vertex 0 takes minus their sum.
fn shape_gradients(dim: usize, pts: &[Point]) -> [Point; 4] {
    let mut g = [[0.0; 3]; 4];
    let sub = |a: &Point, b: &Point| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    if dim == 2 {
        let e1 = sub(&pts[1], &pts[0]);
        let e2 = sub(&pts[2], &pts[0]);
        let det = e1[0] * e2[1] - e2[0] * e1[1];
        g[1] = [e2[1] / det, -e2[0] / det, 0.0];
        g[2] = [-e1[1] / det, e1[0] / det, 0.0];
    } else {
        let e1 = sub(&pts[1], &pts[0]);
        let e2 = sub(&pts[2], &pts[0]);
        let e3 = sub(&pts[3], &pts[0]);
        let det = dot(&e1, &cross(&e2, &e3));
        // Rows of the inverse of [e1 e2 e3] are the scaled cross products.
        let c23 = cross(&e2, &e3);
        let c31 = cross(&e3, &e1);
        let c12 = cross(&e1, &e2);
        for k in 0..3 {
            g[1][k] = c23[k] / det;
            g[2][k] = c31[k] / det;
            g[3][k] = c12[k] / det;
        }
    }
    for k in 0..3 {
        g[0][k] = -(g[1][k] + g[2][k] + g[3][k]);
    }
    g
}

pub(crate) fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn boundary_facets(dim: usize, elements: &[usize], markers: &[u32]) -> Result<Vec<BoundaryFacet>> {
    let npe = dim + 1;
    let mut count: HashMap<[usize; 3], u32> = HashMap::new();
    let key = |conn: &[usize], opp: usize| {
        let mut k = [usize::MAX; 3];
        let mut idx = 0;
        for (i, &n) in conn.iter().enumerate() {
            if i != opp {
                k[idx] = n;
                idx += 1;
            }
        }
        k[..dim].sort_unstable();
        k
    };
    for conn in elements.chunks_exact(npe) {
        for opp in 0..npe {
            *count.entry(key(conn, opp)).or_insert(0) += 1;
        }
    }
    if let Some((k, c)) = count.iter().find(|(_, &c)| c > 2) {
        return Err(Error::Validation(format!(
            "facet {:?} is shared by {c} elements",
            &k[..dim]
        )));
    }
    let mut facets = Vec::new();
    for (e, conn) in elements.chunks_exact(npe).enumerate() {
        for opp in 0..npe {
            if count[&key(conn, opp)] == 1 {
                let nodes: Vec<usize> = conn
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != opp)
                    .map(|(_, &n)| n)
                    .collect();
                let m0 = markers[nodes[0]];
                let group = if nodes.iter().all(|&n| markers[n] == m0) { m0 } else { 0 };
                facets.push(BoundaryFacet {
                    nodes,
                    element: e,
                    opposite: opp,
                    group,
                });
            }
        }
    }
    Ok(facets)
}

/// Prescribed new positions of the Dirichlet nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSpec {
    positions: BTreeMap<usize, Point>,
}

impl DirichletSpec {
    /// Validates that the map covers exactly the Dirichlet nodes of `mesh`.
    pub fn new(mesh: &ReferenceMesh, positions: BTreeMap<usize, Point>) -> Result<Self> {
        let expected: Vec<usize> = mesh.dirichlet_nodes().collect();
        let got: Vec<usize> = positions.keys().copied().collect();
        if expected != got {
            let missing = expected.iter().find(|n| !positions.contains_key(n));
            let extra = got.iter().find(|n| mesh.node_class(**n) != NodeClass::Dirichlet);
            return Err(Error::Argument(format!(
                "Dirichlet map does not match the Dirichlet nodes (missing {missing:?}, unexpected {extra:?})"
            )));
        }
        Ok(Self { positions })
    }

    /// Every Dirichlet node stays at its reference position.
    pub fn identity(mesh: &ReferenceMesh) -> Self {
        Self::from_fn(mesh, |_, x| x)
    }

    /// Builds the map by evaluating `phi(node, reference_position)`.
    pub fn from_fn(mesh: &ReferenceMesh, mut phi: impl FnMut(usize, Point) -> Point) -> Self {
        let positions = mesh.dirichlet_nodes().map(|n| (n, phi(n, mesh.node(n)))).collect();
        Self { positions }
    }

    pub fn position(&self, node: usize) -> Option<Point> {
        self.positions.get(&node).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Point)> + '_ {
        self.positions.iter().map(|(&n, &p)| (n, p))
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Dead loads: a constant body force per unit reference volume and constant
/// tractions per unit reference area on tagged surface groups.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadSpec {
    pub body_force: Point,
    pub tractions: BTreeMap<u32, Point>,
}

impl LoadSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self, mesh: &ReferenceMesh) -> Result<()> {
        let groups = mesh.facet_groups();
        for tag in self.tractions.keys() {
            if !groups.contains(tag) {
                return Err(Error::Argument(format!("traction references unknown surface group {tag}")));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.body_force == [0.0; 3] && self.tractions.values().all(|t| *t == [0.0; 3])
    }
}
