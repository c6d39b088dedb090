use std::fmt::Write as _;

use super::{element_jacobians, ReferenceMesh};
use crate::field::DisplacementField;

/// SVG drawing of a deformed 2D mesh. Inverted elements are filled red.
pub fn write_svg(mesh: &ReferenceMesh, u: &DisplacementField) -> String {
    let pos = u.positions(mesh);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pos {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let size = 600.0;
    let margin = 10.0;
    let scale = (size - 2.0 * margin) / span;
    let map = |p: &[f64; 3]| {
        (
            margin + (p[0] - lo[0]) * scale,
            size - margin - (p[1] - lo[1]) * scale,
        )
    };
    let jac = element_jacobians(mesh, u);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    )
    .unwrap();
    for (conn, j) in mesh.elements().zip(&jac) {
        let fill = if *j <= 0.0 { "#e04040" } else { "#dde8f4" };
        let pts: Vec<String> = conn
            .iter()
            .map(|&n| {
                let (x, y) = map(&pos[n]);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        writeln!(
            s,
            r##"<polygon points="{}" fill="{fill}" stroke="#203050" stroke-width="0.6"/>"##,
            pts.join(" ")
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Legacy ASCII VTK unstructured grid of the deformed mesh with the
/// displacement as point data and `J` as cell data.
pub fn write_vtk(mesh: &ReferenceMesh, u: &DisplacementField) -> String {
    let npe = mesh.dim() + 1;
    let cell_type = if mesh.dim() == 3 { 10 } else { 5 };
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\ndeformed mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {} double", mesh.num_nodes()).unwrap();
    for p in u.positions(mesh) {
        writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]).unwrap();
    }
    let ne = mesh.num_elements();
    writeln!(s, "CELLS {ne} {}", ne * (npe + 1)).unwrap();
    for conn in mesh.elements() {
        write!(s, "{npe}").unwrap();
        for n in conn {
            write!(s, " {n}").unwrap();
        }
        s.push('\n');
    }
    writeln!(s, "CELL_TYPES {ne}").unwrap();
    for _ in 0..ne {
        writeln!(s, "{cell_type}").unwrap();
    }
    writeln!(s, "POINT_DATA {}", mesh.num_nodes()).unwrap();
    s.push_str("VECTORS displacement double\n");
    for v in u.values() {
        writeln!(s, "{:?} {:?} {:?}", v[0], v[1], v[2]).unwrap();
    }
    writeln!(s, "CELL_DATA {ne}").unwrap();
    s.push_str("SCALARS J double 1\nLOOKUP_TABLE default\n");
    for j in element_jacobians(mesh, u) {
        writeln!(s, "{j:?}").unwrap();
    }
    s
}
