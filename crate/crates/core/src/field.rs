use crate::mesh::{DirichletSpec, Point, ReferenceMesh};

/// Nodal displacements `u = x - X` for every node of a mesh.
///
/// Dirichlet nodes carry their prescribed displacement; the remaining
/// `dim * m` components form the flat unknown vector, ordered by
/// [`ReferenceMesh::free_dof`].
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    values: Vec<Point>,
}

impl DisplacementField {
    pub fn zeros(mesh: &ReferenceMesh) -> Self {
        Self {
            values: vec![[0.0; 3]; mesh.num_nodes()],
        }
    }

    /// Zero interior displacement with the Dirichlet prescription applied.
    pub fn from_dirichlet(mesh: &ReferenceMesh, dirichlet: &DirichletSpec) -> Self {
        let mut u = Self::zeros(mesh);
        u.apply_dirichlet(mesh, dirichlet);
        u
    }

    pub fn from_values(values: Vec<Point>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn value(&self, node: usize) -> Point {
        self.values[node]
    }

    pub fn set_value(&mut self, node: usize, v: Point) {
        self.values[node] = v;
    }

    /// Overwrites Dirichlet nodes with `phi0(X) - X`; free nodes are untouched.
    pub fn apply_dirichlet(&mut self, mesh: &ReferenceMesh, dirichlet: &DirichletSpec) {
        for (n, x) in dirichlet.iter() {
            let r = mesh.node(n);
            self.values[n] = [x[0] - r[0], x[1] - r[1], x[2] - r[2]];
        }
    }

    /// Deformed position `X + u` of a node.
    pub fn position(&self, mesh: &ReferenceMesh, node: usize) -> Point {
        let r = mesh.node(node);
        let u = self.values[node];
        [r[0] + u[0], r[1] + u[1], r[2] + u[2]]
    }

    pub fn positions(&self, mesh: &ReferenceMesh) -> Vec<Point> {
        (0..mesh.num_nodes()).map(|n| self.position(mesh, n)).collect()
    }

    /// The free-DOF vector of length `dim * m`.
    pub fn free_vector(&self, mesh: &ReferenceMesh) -> Vec<f64> {
        let d = mesh.dim();
        let mut out = vec![0.0; mesh.num_free_dofs()];
        for n in 0..mesh.num_nodes() {
            if let Some(base) = mesh.free_dof(n) {
                out[base..base + d].copy_from_slice(&self.values[n][..d]);
            }
        }
        out
    }

    pub fn set_free_vector(&mut self, mesh: &ReferenceMesh, flat: &[f64]) {
        let d = mesh.dim();
        for n in 0..mesh.num_nodes() {
            if let Some(base) = mesh.free_dof(n) {
                self.values[n][..d].copy_from_slice(&flat[base..base + d]);
            }
        }
    }

    /// `u_free += alpha * step`.
    pub fn add_free(&mut self, mesh: &ReferenceMesh, alpha: f64, step: &[f64]) {
        let d = mesh.dim();
        for n in 0..mesh.num_nodes() {
            if let Some(base) = mesh.free_dof(n) {
                for k in 0..d {
                    self.values[n][k] += alpha * step[base + k];
                }
            }
        }
    }

    /// Returns a copy with `u_free + alpha * step`.
    pub fn stepped(&self, mesh: &ReferenceMesh, alpha: f64, step: &[f64]) -> Self {
        let mut out = self.clone();
        out.add_free(mesh, alpha, step);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square() -> ReferenceMesh {
        let nodes = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.5, 0.5, 0.0],
        ];
        let conn = vec![0, 1, 4, 1, 2, 4, 2, 3, 4, 3, 0, 4];
        ReferenceMesh::new(2, nodes, conn, vec![1, 1, 0, 0, 0]).unwrap()
    }

    #[test]
    fn dirichlet_values_are_prescribed_displacements() {
        let m = square();
        let spec = DirichletSpec::from_fn(&m, |_, x| [x[0] + 0.5, x[1], 0.0]);
        let u = DisplacementField::from_dirichlet(&m, &spec);
        assert_eq!(u.value(0), [0.5, 0.0, 0.0]);
        assert_eq!(u.value(1), [0.5, 0.0, 0.0]);
        assert_eq!(u.value(4), [0.0; 3]);
        assert_eq!(u.free_vector(&m).len(), 6);
    }

    proptest! {
        #[test]
        fn free_vector_round_trip(v in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let m = square();
            let mut u = DisplacementField::from_dirichlet(&m, &DirichletSpec::identity(&m));
            u.set_free_vector(&m, &v);
            prop_assert_eq!(u.free_vector(&m), v);
            prop_assert_eq!(u.value(0), [0.0; 3]);
        }
    }
}
