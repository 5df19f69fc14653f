//! Conforming 2D triangle meshes with oriented edges, boundary tags and
//! newest-vertex bisection refinement.
//!
//! Conventions:
//! - Triangles are counterclockwise.
//! - Every edge stores an orientation `verts[0] -> verts[1]`; the unit normal
//!   is the clockwise rotation of the tangent and points from the `left`
//!   element (lower id) to the `right` element, or outward on the boundary.
//! - Each triangle carries a refinement-edge marker (the edge opposite the
//!   marked local vertex); bisection inserts the midpoint of that edge and the
//!   new vertex becomes the peak of both children.

use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("subdivision counts must be at least 1, got {nx} x {ny}")]
    InvalidCounts { nx: usize, ny: usize },
    #[error("degenerate rectangle: [{x0}, {x1}] x [{y0}, {y1}]")]
    DegenerateRect { x0: f64, x1: f64, y0: f64, y1: f64 },
    #[error("triangle id {0} out of range")]
    InvalidTriangle(usize),
    #[error("edge id {0} out of range")]
    InvalidEdge(usize),
}

/// Label for boundary edges; interior edges carry no tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Wall,
    Inflow,
    Outflow,
    /// Full velocity Dirichlet data (strong normal part, weak tangential part).
    GenericDirichlet,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundaryTag::Wall => "wall",
            BoundaryTag::Inflow => "inflow",
            BoundaryTag::Outflow => "outflow",
            BoundaryTag::GenericDirichlet => "dirichlet",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Oriented vertex pair; the tangent runs from `verts[0]` to `verts[1]`.
    pub verts: [usize; 2],
    /// Adjacent triangle with the lower id.
    pub left: usize,
    /// Adjacent triangle with the higher id, `None` on the boundary.
    pub right: Option<usize>,
    /// Unit normal, pointing from `left` to `right` (outward on the boundary).
    pub normal: [f64; 2],
    /// Unit tangent along the stored orientation.
    pub tangent: [f64; 2],
    pub midpoint: [f64; 2],
    pub length: f64,
    pub tag: Option<BoundaryTag>,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// `tri_edges[k][i]` is the edge opposite local vertex `i` of triangle `k`.
    pub tri_edges: Vec<[usize; 3]>,
    /// Local vertex index whose opposite edge is the refinement edge.
    pub refine_peak: Vec<u8>,
    /// For each triangle, the id of the triangle in the mesh this one was
    /// refined from; identity on freshly built meshes.
    pub lineage: Vec<usize>,
    /// Triangle diameters (longest edge).
    pub h_k: Vec<f64>,
}

fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn tri_vertices(&self, k: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[k];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn area(&self, k: usize) -> f64 {
        let [a, b, c] = self.tri_vertices(k);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    pub fn centroid(&self, k: usize) -> [f64; 2] {
        let [a, b, c] = self.tri_vertices(k);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn h_max(&self) -> f64 {
        self.h_k.iter().cloned().fold(0.0, f64::max)
    }

    pub fn domain_area(&self) -> f64 {
        (0..self.n_triangles()).map(|k| self.area(k)).sum()
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..self.n_triangles() {
            let v = self.tri_vertices(k);
            for i in 0..3 {
                let a = v[i];
                let b = v[(i + 1) % 3];
                let c = v[(i + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let w = [c[0] - a[0], c[1] - a[1]];
                let dot = u[0] * w[0] + u[1] * w[1];
                let nu = (u[0] * u[0] + u[1] * u[1]).sqrt();
                let nw = (w[0] * w[0] + w[1] * w[1]).sqrt();
                best = best.min((dot / (nu * nw)).clamp(-1.0, 1.0).acos());
            }
        }
        best
    }

    /// The element together with its edge-neighbours.
    pub fn patch(&self, k: usize) -> Result<Vec<usize>, MeshError> {
        if k >= self.n_triangles() {
            return Err(MeshError::InvalidTriangle(k));
        }
        let mut out = vec![k];
        for &e in &self.tri_edges[k] {
            let edge = &self.edges[e];
            let other = if edge.left == k { edge.right } else { Some(edge.left) };
            if let Some(o) = other {
                out.push(o);
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// (unit normal, unit tangent, midpoint, length) of an edge.
    pub fn edge_geometry(&self, e: usize) -> Result<([f64; 2], [f64; 2], [f64; 2], f64), MeshError> {
        let edge = self.edges.get(e).ok_or(MeshError::InvalidEdge(e))?;
        Ok((edge.normal, edge.tangent, edge.midpoint, edge.length))
    }

    pub fn interior_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_edges()).filter(move |&e| !self.edges[e].is_boundary())
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_edges()).filter(move |&e| self.edges[e].is_boundary())
    }

    /// For an edge adjacent to triangle `k`, the sign of the edge normal
    /// relative to the outward normal of `k` (+1 if they agree).
    pub fn outward_sign(&self, e: usize, k: usize) -> f64 {
        let edge = &self.edges[e];
        if edge.left == k {
            1.0
        } else {
            debug_assert_eq!(edge.right, Some(k));
            -1.0
        }
    }

    /// Re-assign boundary tags from a closure on edge midpoints.
    pub fn retag_boundary(&mut self, f: impl Fn([f64; 2]) -> BoundaryTag) {
        for edge in self.edges.iter_mut() {
            if edge.right.is_none() {
                edge.tag = Some(f(edge.midpoint));
            }
        }
    }

    /// Plain-text export: vertex, triangle and boundary-tag sections.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("vertices {}\n", self.n_vertices()));
        for (i, v) in self.vertices.iter().enumerate() {
            s.push_str(&format!("{} {:.16e} {:.16e}\n", i, v[0], v[1]));
        }
        s.push_str(&format!("triangles {}\n", self.n_triangles()));
        for (i, t) in self.triangles.iter().enumerate() {
            s.push_str(&format!("{} {} {} {}\n", i, t[0], t[1], t[2]));
        }
        let boundary: Vec<&Edge> = self.edges.iter().filter(|e| e.is_boundary()).collect();
        s.push_str(&format!("boundary {}\n", boundary.len()));
        for e in boundary {
            s.push_str(&format!(
                "{} {} {}\n",
                e.verts[0],
                e.verts[1],
                e.tag.expect("boundary edge must carry a tag")
            ));
        }
        s
    }

    /// Assemble edge data from raw vertices/triangles. `tags` maps sorted
    /// boundary vertex pairs to their tag.
    fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        refine_peak: Vec<u8>,
        lineage: Vec<usize>,
        tags: &HashMap<(usize, usize), BoundaryTag>,
    ) -> Mesh {
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tri_edges = vec![[usize::MAX; 3]; triangles.len()];

        for (k, t) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = t[(i + 1) % 3];
                let b = t[(i + 2) % 3];
                let key = sorted_pair(a, b);
                let id = *edge_map.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        verts: [a, b],
                        left: k,
                        right: None,
                        normal: [0.0; 2],
                        tangent: [0.0; 2],
                        midpoint: [0.0; 2],
                        length: 0.0,
                        tag: None,
                    });
                    edges.len() - 1
                });
                if edges[id].left != k {
                    assert!(edges[id].right.is_none(), "edge shared by more than two triangles");
                    edges[id].right = Some(k);
                }
                tri_edges[k][i] = id;
            }
        }

        let centroid = |k: usize| -> [f64; 2] {
            let t = triangles[k];
            [
                (vertices[t[0]][0] + vertices[t[1]][0] + vertices[t[2]][0]) / 3.0,
                (vertices[t[0]][1] + vertices[t[1]][1] + vertices[t[2]][1]) / 3.0,
            ]
        };

        for edge in edges.iter_mut() {
            let [mut a, mut b] = edge.verts;
            let pa = vertices[a];
            let pb = vertices[b];
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            let mut tau = [(pb[0] - pa[0]) / len, (pb[1] - pa[1]) / len];
            let mut nor = [tau[1], -tau[0]];
            // Point the normal from the left element toward the right element
            // (outward on the boundary).
            let cl = centroid(edge.left);
            let target = match edge.right {
                Some(r) => {
                    let cr = centroid(r);
                    [cr[0] - cl[0], cr[1] - cl[1]]
                }
                None => {
                    let m = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
                    [m[0] - cl[0], m[1] - cl[1]]
                }
            };
            if nor[0] * target[0] + nor[1] * target[1] < 0.0 {
                std::mem::swap(&mut a, &mut b);
                tau = [-tau[0], -tau[1]];
                nor = [-nor[0], -nor[1]];
            }
            edge.verts = [a, b];
            edge.tangent = tau;
            edge.normal = nor;
            edge.length = len;
            edge.midpoint = [
                (vertices[a][0] + vertices[b][0]) / 2.0,
                (vertices[a][1] + vertices[b][1]) / 2.0,
            ];
            if edge.right.is_none() {
                edge.tag = Some(
                    *tags
                        .get(&sorted_pair(a, b))
                        .unwrap_or(&BoundaryTag::GenericDirichlet),
                );
            }
        }

        let h_k = (0..triangles.len())
            .map(|k| {
                let v = [
                    vertices[triangles[k][0]],
                    vertices[triangles[k][1]],
                    vertices[triangles[k][2]],
                ];
                (0..3)
                    .map(|i| {
                        let a = v[i];
                        let b = v[(i + 1) % 3];
                        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();

        Mesh {
            vertices,
            triangles,
            edges,
            tri_edges,
            refine_peak,
            lineage,
            h_k,
        }
    }
}

/// Peak local index for the longest-edge refinement rule, with a
/// deterministic tie-break on global vertex ids.
fn longest_edge_peak(vertices: &[[f64; 2]], t: &[usize; 3]) -> u8 {
    let mut best = (f64::NEG_INFINITY, (0usize, 0usize), 0u8);
    for i in 0..3u8 {
        let a = t[(i as usize + 1) % 3];
        let b = t[(i as usize + 2) % 3];
        let pa = vertices[a];
        let pb = vertices[b];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let key = sorted_pair(a, b);
        // Longer edge wins; exact ties prefer the smaller vertex pair.
        if len > best.0 + 1e-14 * len.max(best.0)
            || ((len - best.0).abs() <= 1e-14 * len.max(best.0) && key < best.1)
        {
            best = (len, key, i);
        }
    }
    best.2
}

/// Structured triangulation of a rectangle; each cell is split along the
/// lower-left to upper-right diagonal. Boundary edges are tagged
/// generic-Dirichlet.
pub fn build_rect_mesh(
    nx: usize,
    ny: usize,
    rect: [f64; 4],
) -> Result<Mesh, MeshError> {
    if nx < 1 || ny < 1 {
        return Err(MeshError::InvalidCounts { nx, ny });
    }
    let [x0, y0, x1, y1] = rect;
    if !(x1 > x0) || !(y1 > y0) {
        return Err(MeshError::DegenerateRect { x0, x1, y0, y1 });
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                x0 + (x1 - x0) * i as f64 / nx as f64,
                y0 + (y1 - y0) * j as f64 / ny as f64,
            ]);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let ll = vid(i, j);
            let lr = vid(i + 1, j);
            let ur = vid(i + 1, j + 1);
            let ul = vid(i, j + 1);
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
        }
    }
    let refine_peak = triangles
        .iter()
        .map(|t| longest_edge_peak(&vertices, t))
        .collect();
    let lineage = (0..triangles.len()).collect();
    // All boundary pairs default to generic-Dirichlet inside from_parts.
    let tags = HashMap::new();
    Ok(Mesh::from_parts(vertices, triangles, refine_peak, lineage, &tags))
}

/// Newest-vertex bisection with recursive conformity closure. Every marked
/// triangle is bisected at least once; the result is conforming and records
/// the lineage back to `mesh`.
pub fn refine(mesh: &Mesh, marked: &[usize]) -> Mesh {
    for &k in marked {
        assert!(k < mesh.n_triangles(), "marked triangle {k} out of range");
    }
    if marked.is_empty() {
        let mut copy = mesh.clone();
        copy.lineage = (0..mesh.n_triangles()).collect();
        return copy;
    }

    // Working soup: peak-first triangles, alive flags, midpoint cache.
    let mut verts = mesh.vertices.clone();
    // (peak, a, b) with refinement edge (a, b), counterclockwise.
    let mut tris: Vec<[usize; 3]> = (0..mesh.n_triangles())
        .map(|k| {
            let t = mesh.triangles[k];
            let p = mesh.refine_peak[k] as usize;
            [t[p], t[(p + 1) % 3], t[(p + 2) % 3]]
        })
        .collect();
    let mut alive = vec![true; tris.len()];
    let mut lineage: Vec<usize> = mesh.lineage.clone();
    let mut tags: HashMap<(usize, usize), BoundaryTag> = mesh
        .edges
        .iter()
        .filter(|e| e.is_boundary())
        .map(|e| (sorted_pair(e.verts[0], e.verts[1]), e.tag.unwrap()))
        .collect();

    let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (k, t) in tris.iter().enumerate() {
        for i in 0..3 {
            edge_tris
                .entry(sorted_pair(t[i], t[(i + 1) % 3]))
                .or_default()
                .push(k);
        }
    }
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();

    let neighbor_across = |edge_tris: &HashMap<(usize, usize), Vec<usize>>,
                           alive: &[bool],
                           key: (usize, usize),
                           me: usize|
     -> Option<usize> {
        edge_tris
            .get(&key)
            .and_then(|v| v.iter().find(|&&t| t != me && alive[t]).copied())
    };

    // Split one peak-first triangle at its refinement edge midpoint `m`.
    let split = |t: usize,
                 m: usize,
                 tris: &mut Vec<[usize; 3]>,
                 alive: &mut Vec<bool>,
                 lineage: &mut Vec<usize>,
                 edge_tris: &mut HashMap<(usize, usize), Vec<usize>>| {
        let [p, a, b] = tris[t];
        alive[t] = false;
        for i in 0..3 {
            let key = sorted_pair(tris[t][i], tris[t][(i + 1) % 3]);
            if let Some(v) = edge_tris.get_mut(&key) {
                v.retain(|&x| x != t);
            }
        }
        // Children keep the new vertex as their peak.
        for child in [[m, p, a], [m, b, p]] {
            let id = tris.len();
            tris.push(child);
            alive.push(true);
            lineage.push(lineage[t]);
            for i in 0..3 {
                edge_tris
                    .entry(sorted_pair(child[i], child[(i + 1) % 3]))
                    .or_default()
                    .push(id);
            }
        }
    };

    let guard_limit = 20 * mesh.n_triangles() + 20 * marked.len() + 1000;
    let mut guard = 0usize;
    let mut sorted_marked: Vec<usize> = marked.to_vec();
    sorted_marked.sort_unstable();
    sorted_marked.dedup();

    for &m0 in &sorted_marked {
        if !alive[m0] {
            continue; // already bisected by an earlier closure step
        }
        let mut stack = vec![m0];
        while let Some(&t) = stack.last() {
            guard += 1;
            assert!(guard < guard_limit, "bisection closure did not terminate");
            if !alive[t] {
                stack.pop();
                continue;
            }
            let [_, a, b] = tris[t];
            let key = sorted_pair(a, b);
            let nb = neighbor_across(&edge_tris, &alive, key, t);
            if let Some(n) = nb {
                let [_, na, nb2] = tris[n];
                if sorted_pair(na, nb2) != key {
                    // Incompatible neighbour: bisect it first.
                    stack.push(n);
                    continue;
                }
            }
            let m = *midpoints.entry(key).or_insert_with(|| {
                let pa = verts[key.0];
                let pb = verts[key.1];
                verts.push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]);
                if let Some(tag) = tags.get(&key).copied() {
                    let mid = verts.len() - 1;
                    tags.insert(sorted_pair(key.0, mid), tag);
                    tags.insert(sorted_pair(key.1, mid), tag);
                }
                verts.len() - 1
            });
            split(t, m, &mut tris, &mut alive, &mut lineage, &mut edge_tris);
            if let Some(n) = nb {
                if alive[n] {
                    split(n, m, &mut tris, &mut alive, &mut lineage, &mut edge_tris);
                }
            }
            stack.pop();
        }
    }

    // Compact alive triangles in soup order; children are peak-first so
    // their refinement edge is opposite local vertex 0.
    let mut out_tris = Vec::new();
    let mut out_peak = Vec::new();
    let mut out_lineage = Vec::new();
    for (k, t) in tris.iter().enumerate() {
        if alive[k] {
            out_tris.push(*t);
            out_peak.push(0u8);
            out_lineage.push(lineage[k]);
        }
    }

    Mesh::from_parts(verts, out_tris, out_peak, out_lineage, &tags)
}

/// Structural conformity check used by tests and the invariant suite.
pub fn check_conformity(mesh: &Mesh) -> Result<(), String> {
    for (i, e) in mesh.edges.iter().enumerate() {
        if e.is_boundary() && e.tag.is_none() {
            return Err(format!("boundary edge {i} without tag"));
        }
    }
    for k in 0..mesh.n_triangles() {
        if mesh.area(k) <= 0.0 {
            return Err(format!("triangle {k} not counterclockwise"));
        }
    }
    // A hanging node would show up as a vertex strictly inside a
    // single-triangle ("boundary") edge.
    for e in mesh.edges.iter().filter(|e| e.is_boundary()) {
        let pa = mesh.vertices[e.verts[0]];
        let pb = mesh.vertices[e.verts[1]];
        for (vi, v) in mesh.vertices.iter().enumerate() {
            if vi == e.verts[0] || vi == e.verts[1] {
                continue;
            }
            let cross = (pb[0] - pa[0]) * (v[1] - pa[1]) - (pb[1] - pa[1]) * (v[0] - pa[0]);
            if cross.abs() > 1e-12 * e.length {
                continue;
            }
            let dot = (v[0] - pa[0]) * (pb[0] - pa[0]) + (v[1] - pa[1]) * (pb[1] - pa[1]);
            let t = dot / (e.length * e.length);
            if t > 1e-12 && t < 1.0 - 1e-12 {
                return Err(format!(
                    "hanging node: vertex {vi} inside edge ({}, {})",
                    e.verts[0], e.verts[1]
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT: [f64; 4] = [0.0, 0.0, 1.0, 1.0];

    #[test]
    fn minimal_split_counts() {
        let m = build_rect_mesh(1, 1, UNIT).unwrap();
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_edges(), 5);
        check_conformity(&m).unwrap();
    }

    #[test]
    fn euler_relation_2x2() {
        let m = build_rect_mesh(2, 2, UNIT).unwrap();
        assert_eq!(m.n_triangles(), 8);
        assert_eq!(
            m.n_vertices() as i64 - m.n_edges() as i64 + m.n_triangles() as i64,
            1
        );
    }

    #[test]
    fn structured_4x4_against_construction_oracle() {
        let m = build_rect_mesh(4, 4, UNIT).unwrap();
        assert!((m.h_max() - (2.0f64).sqrt() / 4.0).abs() < 1e-15);
        // Oracle: rebuild edge multiplicity by direct enumeration.
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &m.triangles {
            for i in 0..3 {
                *count.entry(sorted_pair(t[i], t[(i + 1) % 3])).or_insert(0) += 1;
            }
        }
        assert_eq!(count.len(), m.n_edges());
        for e in &m.edges {
            let c = count[&sorted_pair(e.verts[0], e.verts[1])];
            if e.is_boundary() {
                assert_eq!(c, 1);
            } else {
                assert_eq!(c, 2);
            }
        }
        // 16 diagonals plus 12 interior horizontal and 12 interior vertical.
        assert_eq!(m.interior_edges().count(), 16 + 12 + 12);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(build_rect_mesh(0, 1, UNIT).is_err());
        assert!(build_rect_mesh(2, 2, [0.0, 0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn refine_empty_is_identity() {
        let m = build_rect_mesh(2, 2, UNIT).unwrap();
        let r = refine(&m, &[]);
        assert_eq!(r.n_triangles(), m.n_triangles());
        assert_eq!(r.triangles, m.triangles);
        assert_eq!(r.lineage, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn refine_all_preserves_angles() {
        let m = build_rect_mesh(1, 1, UNIT).unwrap();
        let a0 = m.min_angle();
        let marked: Vec<usize> = (0..m.n_triangles()).collect();
        let r = refine(&m, &marked);
        assert!(r.n_triangles() >= 4);
        check_conformity(&r).unwrap();
        assert!(r.min_angle() >= 0.5 * a0 - 1e-12);
        assert!((r.domain_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closure_removes_hanging_nodes() {
        let m = build_rect_mesh(2, 2, UNIT).unwrap();
        let r = refine(&m, &[3]);
        assert!(r.n_triangles() > m.n_triangles());
        check_conformity(&r).unwrap();
    }

    #[test]
    fn repeated_refinement_invariants() {
        let mut m = build_rect_mesh(2, 2, UNIT).unwrap();
        let a0 = m.min_angle();
        for step in 0..6 {
            let marked: Vec<usize> = (0..m.n_triangles()).filter(|k| (k + step) % 3 == 0).collect();
            let n_before = m.n_triangles();
            m = refine(&m, &marked);
            assert!(m.n_triangles() > n_before);
            check_conformity(&m).unwrap();
            assert!(m.min_angle() >= 0.5 * a0 - 1e-12);
            assert!((m.domain_area() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn patch_shapes() {
        let m = build_rect_mesh(4, 4, UNIT).unwrap();
        // An interior triangle has three edge-neighbours.
        let inner = (0..m.n_triangles())
            .find(|&k| m.tri_edges[k].iter().all(|&e| !m.edges[e].is_boundary()))
            .unwrap();
        assert_eq!(m.patch(inner).unwrap().len(), 4);

        let two = build_rect_mesh(1, 1, UNIT).unwrap();
        assert_eq!(two.patch(0).unwrap(), vec![0, 1]);
        assert!(two.patch(7).is_err());
    }

    #[test]
    fn patch_after_refinement_has_no_stale_ids() {
        let m = build_rect_mesh(2, 2, UNIT).unwrap();
        let r = refine(&m, &[0, 1]);
        for k in 0..r.n_triangles() {
            for p in r.patch(k).unwrap() {
                assert!(p < r.n_triangles());
            }
            assert!(r.lineage[k] < m.n_triangles());
        }
    }

    #[test]
    fn edge_geometry_conventions() {
        let m = build_rect_mesh(1, 1, UNIT).unwrap();
        // Bottom edge (0,0)-(1,0).
        let e = (0..m.n_edges())
            .find(|&e| {
                let mp = m.edges[e].midpoint;
                (mp[1] - 0.0).abs() < 1e-14 && (mp[0] - 0.5).abs() < 1e-14
            })
            .unwrap();
        let (n, t, mp, len) = m.edge_geometry(e).unwrap();
        assert!((len - 1.0).abs() < 1e-14);
        assert!(n[0].abs() < 1e-14 && (n[1].abs() - 1.0).abs() < 1e-14);
        assert!(t[1].abs() < 1e-14 && (t[0].abs() - 1.0).abs() < 1e-14);
        assert_eq!(mp, [0.5, 0.0]);
        assert!(m.edge_geometry(99).is_err());

        let big = build_rect_mesh(3, 3, UNIT).unwrap();
        for e in 0..big.n_edges() {
            let (n, t, _, _) = big.edge_geometry(e).unwrap();
            assert!((n[0] * t[0] + n[1] * t[1]).abs() < 1e-14);
            assert!((n[0] * n[0] + n[1] * n[1] - 1.0).abs() < 1e-14);
        }
        // Interior normals point from the left toward the right element.
        for e in big.interior_edges() {
            let edge = &big.edges[e];
            assert!(edge.left < edge.right.unwrap());
            let cl = big.centroid(edge.left);
            let cr = big.centroid(edge.right.unwrap());
            let d = [cr[0] - cl[0], cr[1] - cl[1]];
            assert!(edge.normal[0] * d[0] + edge.normal[1] * d[1] > 0.0);
        }
    }

    #[test]
    fn boundary_tags_inherited_under_refinement() {
        let mut m = build_rect_mesh(2, 2, UNIT).unwrap();
        m.retag_boundary(|mp| {
            if mp[1] < 1e-12 || mp[1] > 1.0 - 1e-12 {
                BoundaryTag::Wall
            } else if mp[0] < 1e-12 {
                BoundaryTag::Inflow
            } else {
                BoundaryTag::Outflow
            }
        });
        let r = refine(&m, &(0..m.n_triangles()).collect::<Vec<_>>());
        for e in r.edges.iter().filter(|e| e.is_boundary()) {
            let mp = e.midpoint;
            let expect = if mp[1] < 1e-12 || mp[1] > 1.0 - 1e-12 {
                BoundaryTag::Wall
            } else if mp[0] < 1e-12 {
                BoundaryTag::Inflow
            } else {
                BoundaryTag::Outflow
            };
            assert_eq!(e.tag, Some(expect), "midpoint {mp:?}");
        }
    }
}
