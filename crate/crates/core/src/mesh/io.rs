//! Triangle/TetGen `.node` and `.ele` ASCII files.
//!
//! `.node`: header `N dim nattr nmarker`, then `idx x y [z] [attr...] [marker]`.
//! `.ele`: header `M nodes_per_elem nattr`, then `idx n0 n1 n2 [n3] [attr...]`.
//! `#` starts a comment. Indices may start at 0 or 1; the base is taken
//! from the first node listed and shared by both files.

use std::fmt::Write as _;
use std::path::Path;

use super::{Point, ReferenceMesh};
use crate::error::{Error, Result};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-empty line split into tokens, with its 1-based line number.
    fn next_tokens(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let body = line.split('#').next().unwrap_or("");
            let toks: Vec<&str> = body.split_whitespace().collect();
            if !toks.is_empty() {
                return Some((i + 1, toks));
            }
        }
        None
    }
}

fn parse<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} '{tok}'"),
    })
}

struct NodeTable {
    dim: usize,
    base: usize,
    coords: Vec<Point>,
    markers: Vec<u32>,
}

fn read_nodes(text: &str) -> Result<NodeTable> {
    let mut lines = Lines::new(text);
    let (hl, header) = lines.next_tokens().ok_or(Error::Parse {
        line: 1,
        message: "missing .node header".into(),
    })?;
    if header.len() < 2 {
        return Err(Error::Parse {
            line: hl,
            message: "header needs at least node count and dimension".into(),
        });
    }
    let count: usize = parse(header[0], hl, "node count")?;
    let dim: usize = parse(header[1], hl, "dimension")?;
    if dim != 2 && dim != 3 {
        return Err(Error::Parse {
            line: hl,
            message: format!("dimension must be 2 or 3, got {dim}"),
        });
    }
    let nattr: usize = header.get(2).map_or(Ok(0), |t| parse(t, hl, "attribute count"))?;
    let nmark: usize = header.get(3).map_or(Ok(0), |t| parse(t, hl, "marker count"))?;

    let mut coords = Vec::with_capacity(count);
    let mut markers = Vec::with_capacity(count);
    let mut base = 0;
    for i in 0..count {
        let (ln, toks) = lines.next_tokens().ok_or_else(|| Error::Parse {
            line: lines.last + 1,
            message: format!("expected {count} nodes, found {i}"),
        })?;
        let want = 1 + dim + nattr + nmark.min(1);
        if toks.len() < want {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected {want} fields, found {}", toks.len()),
            });
        }
        let idx: usize = parse(toks[0], ln, "node index")?;
        if i == 0 {
            if idx > 1 {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("first node index must be 0 or 1, got {idx}"),
                });
            }
            base = idx;
        }
        if idx != base + i {
            return Err(Error::Parse {
                line: ln,
                message: format!("node index {idx} out of sequence (expected {})", base + i),
            });
        }
        let mut p = [0.0; 3];
        for (k, slot) in p.iter_mut().enumerate().take(dim) {
            *slot = parse(toks[1 + k], ln, "coordinate")?;
        }
        coords.push(p);
        let marker = if nmark > 0 {
            parse(toks[1 + dim + nattr], ln, "boundary marker")?
        } else {
            0
        };
        markers.push(marker);
    }
    if let Some((ln, _)) = lines.next_tokens() {
        return Err(Error::Parse {
            line: ln,
            message: format!("more node lines than the {count} declared in the header"),
        });
    }
    Ok(NodeTable {
        dim,
        base,
        coords,
        markers,
    })
}

fn read_elements(text: &str, dim: usize, base: usize, n_nodes: usize) -> Result<Vec<usize>> {
    let mut lines = Lines::new(text);
    let (hl, header) = lines.next_tokens().ok_or(Error::Parse {
        line: 1,
        message: "missing .ele header".into(),
    })?;
    if header.len() < 2 {
        return Err(Error::Parse {
            line: hl,
            message: "header needs element count and nodes per element".into(),
        });
    }
    let count: usize = parse(header[0], hl, "element count")?;
    let npe: usize = parse(header[1], hl, "nodes per element")?;
    if npe != dim + 1 {
        return Err(Error::Parse {
            line: hl,
            message: format!("{npe} nodes per element, expected {} for a {dim}D mesh", dim + 1),
        });
    }
    let mut conn = Vec::with_capacity(count * npe);
    for i in 0..count {
        let (ln, toks) = lines.next_tokens().ok_or_else(|| Error::Parse {
            line: lines.last + 1,
            message: format!("expected {count} elements, found {i}"),
        })?;
        if toks.len() < 1 + npe {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected {} fields, found {}", 1 + npe, toks.len()),
            });
        }
        for t in &toks[1..=npe] {
            let raw: usize = parse(t, ln, "node reference")?;
            if raw < base || raw - base >= n_nodes {
                return Err(Error::IndexOutOfRange {
                    line: ln,
                    index: raw,
                    count: n_nodes,
                });
            }
            conn.push(raw - base);
        }
    }
    if let Some((ln, _)) = lines.next_tokens() {
        return Err(Error::Parse {
            line: ln,
            message: format!("more element lines than the {count} declared in the header"),
        });
    }
    Ok(conn)
}

/// Parses a mesh from the contents of a `.node` and an `.ele` file.
pub fn load_triangle_mesh(node_text: &str, ele_text: &str) -> Result<ReferenceMesh> {
    let nodes = read_nodes(node_text)?;
    let conn = read_elements(ele_text, nodes.dim, nodes.base, nodes.coords.len())?;
    ReferenceMesh::new(nodes.dim, nodes.coords, conn, nodes.markers)
}

/// Reads `<stem>.node` and `<stem>.ele`.
pub fn load_triangle_files(stem: impl AsRef<Path>) -> Result<ReferenceMesh> {
    let stem = stem.as_ref();
    let node = std::fs::read_to_string(stem.with_extension("node"))?;
    let ele = std::fs::read_to_string(stem.with_extension("ele"))?;
    load_triangle_mesh(&node, &ele)
}

/// `.node` text with 1-based indices and the boundary marker column.
pub fn write_node(mesh: &ReferenceMesh) -> String {
    let d = mesh.dim();
    let mut s = String::new();
    writeln!(s, "{} {d} 0 1", mesh.num_nodes()).unwrap();
    for (i, (p, m)) in mesh.nodes().iter().zip(mesh.markers()).enumerate() {
        write!(s, "{}", i + 1).unwrap();
        for x in &p[..d] {
            write!(s, " {x:?}").unwrap();
        }
        writeln!(s, " {m}").unwrap();
    }
    s
}

/// `.ele` text with 1-based node references.
pub fn write_ele(mesh: &ReferenceMesh) -> String {
    let mut s = String::new();
    writeln!(s, "{} {} 0", mesh.num_elements(), mesh.dim() + 1).unwrap();
    for (e, conn) in mesh.elements().enumerate() {
        write!(s, "{}", e + 1).unwrap();
        for n in conn {
            write!(s, " {}", n + 1).unwrap();
        }
        writeln!(s).unwrap();
    }
    s
}
