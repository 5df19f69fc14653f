//! Velocity and pressure finite element spaces.
//!
//! Velocities live in the BDM1 or RT1 H(div) families with edge normal-moment
//! degrees of freedom; pressures are discontinuous polynomials. Element bases
//! are constructed per physical element, dual to moments taken with the
//! mesh's global edge orientation, which makes the normal trace single-valued
//! across edges without any sign bookkeeping in the assembly.

use crate::mesh::Mesh;
use crate::quad::{edge_rule_data, gauss_legendre_unit, tri_rule_data};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("order {0} not implemented")]
    OrderNotImplemented(usize),
    #[error("degenerate element {0}")]
    DegenerateElement(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Bdm,
    Rt,
}

/// Element family and polynomial order. Only k = 1 is implemented; the order
/// travels through all signatures so higher orders extend without interface
/// changes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FamilyOrder {
    pub family: Family,
    pub order: usize,
}

impl FamilyOrder {
    pub fn new(family: Family, order: usize) -> Result<Self, SpaceError> {
        if order != 1 {
            return Err(SpaceError::OrderNotImplemented(order));
        }
        Ok(FamilyOrder { family, order })
    }

    pub fn bdm1() -> Self {
        FamilyOrder { family: Family::Bdm, order: 1 }
    }

    pub fn rt1() -> Self {
        FamilyOrder { family: Family::Rt, order: 1 }
    }

    /// Velocity moments per edge (2 for BDM1, 1 for RT1).
    pub fn moments_per_edge(&self) -> usize {
        match self.family {
            Family::Bdm => 2,
            Family::Rt => 1,
        }
    }

    /// Dofs of one element basis.
    pub fn dofs_per_element(&self) -> usize {
        3 * self.moments_per_edge()
    }

    /// Degree of the postprocessed pressure space (k+1 for BDM, k for RT).
    pub fn postprocess_degree(&self) -> usize {
        match self.family {
            Family::Bdm => self.order + 1,
            Family::Rt => self.order,
        }
    }

    /// Multiplier polynomial degree on edges (P_k for BDM, P_{k-1} for RT).
    pub fn lambda_per_edge(&self) -> usize {
        match self.family {
            Family::Bdm => self.order + 1,
            Family::Rt => self.order,
        }
    }
}

/// Value, divergence and gradient of a vector shape function at a point.
#[derive(Clone, Copy, Debug)]
pub struct ShapeValue {
    pub value: [f64; 2],
    pub divergence: f64,
    /// `gradient[r][c] = d u_r / d x_c`.
    pub gradient: [[f64; 2]; 2],
}

/// Affine element geometry for the contravariant (Piola) map.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub jac: [[f64; 2]; 2],
    pub offset: [f64; 2],
    pub det: f64,
}

impl ElementGeometry {
    pub fn from_vertices(v: [[f64; 2]; 3]) -> Option<Self> {
        let jac = [
            [v[1][0] - v[0][0], v[2][0] - v[0][0]],
            [v[1][1] - v[0][1], v[2][1] - v[0][1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-300 {
            return None;
        }
        Some(ElementGeometry { jac, offset: v[0], det })
    }

    pub fn map_point(&self, xr: [f64; 2]) -> [f64; 2] {
        [
            self.offset[0] + self.jac[0][0] * xr[0] + self.jac[0][1] * xr[1],
            self.offset[1] + self.jac[1][0] * xr[0] + self.jac[1][1] * xr[1],
        ]
    }
}

/// Contravariant Piola transform of a reference shape value: values map with
/// J/det(J), divergences with 1/det(J), gradients with J . G . J^{-1} / det(J).
pub fn piola_map(geom: &ElementGeometry, reference: &ShapeValue) -> Result<ShapeValue, SpaceError> {
    let d = geom.det;
    if d.abs() < 1e-300 {
        return Err(SpaceError::DegenerateElement(usize::MAX));
    }
    let j = geom.jac;
    let v = reference.value;
    let value = [
        (j[0][0] * v[0] + j[0][1] * v[1]) / d,
        (j[1][0] * v[0] + j[1][1] * v[1]) / d,
    ];
    let divergence = reference.divergence / d;
    let jinv = [[j[1][1] / d, -j[0][1] / d], [-j[1][0] / d, j[0][0] / d]];
    let g = reference.gradient;
    // (J G J^{-1}) / det
    let mut jg = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            jg[r][c] = j[r][0] * g[0][c] + j[r][1] * g[1][c];
        }
    }
    let mut gradient = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            gradient[r][c] = (jg[r][0] * jinv[0][c] + jg[r][1] * jinv[1][c]) / d;
        }
    }
    Ok(ShapeValue { value, divergence, gradient })
}

/// Specification of one edge-moment functional: the edge runs `start -> end`,
/// `normal` is the unit normal the moment is taken against, `moment` the
/// Legendre degree (0 or 1) in the arc-length parameter of that orientation.
struct MomentSpec {
    start: [f64; 2],
    end: [f64; 2],
    normal: [f64; 2],
    moment: usize,
}

/// Basis of vector fields dual to prescribed edge moments, expressed in the
/// monomial frame centred at `center` and scaled by `scale`.
fn moment_dual_basis(
    specs: &[MomentSpec],
    family: Family,
    center: [f64; 2],
    scale: f64,
) -> Option<Vec<[f64; 6]>> {
    // Monomial fields in local coordinates xt = (x - c)/s:
    // BDM1: (1,0) (xt,0) (yt,0) (0,1) (0,xt) (0,yt)
    // RT1:  (1,0) (0,1) (xt,yt)
    let nmono = match family {
        Family::Bdm => 6,
        Family::Rt => 3,
    };
    let n = specs.len();
    assert_eq!(n, nmono);
    let mono_eval = |m: usize, xt: [f64; 2]| -> [f64; 2] {
        match (family, m) {
            (Family::Bdm, 0) => [1.0, 0.0],
            (Family::Bdm, 1) => [xt[0], 0.0],
            (Family::Bdm, 2) => [xt[1], 0.0],
            (Family::Bdm, 3) => [0.0, 1.0],
            (Family::Bdm, 4) => [0.0, xt[0]],
            (Family::Bdm, 5) => [0.0, xt[1]],
            (Family::Rt, 0) => [1.0, 0.0],
            (Family::Rt, 1) => [0.0, 1.0],
            (Family::Rt, 2) => [xt[0], xt[1]],
            _ => unreachable!(),
        }
    };
    let gauss = gauss_legendre_unit(3);
    let mut mat = DMatrix::zeros(n, n);
    for (i, spec) in specs.iter().enumerate() {
        for m in 0..nmono {
            let mut acc = 0.0;
            for &(s, w) in &gauss {
                let x = [
                    spec.start[0] + s * (spec.end[0] - spec.start[0]),
                    spec.start[1] + s * (spec.end[1] - spec.start[1]),
                ];
                let xt = [(x[0] - center[0]) / scale, (x[1] - center[1]) / scale];
                let v = mono_eval(m, xt);
                let leg = if spec.moment == 0 { 1.0 } else { 2.0 * s - 1.0 };
                acc += w * (v[0] * spec.normal[0] + v[1] * spec.normal[1]) * leg;
            }
            // Normalised moment: (1/|E|) int (u.n) L_j ds; with the unit
            // parameterisation the |E| factors cancel.
            mat[(i, m)] = acc;
        }
    }
    let lu = mat.lu();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let c = lu.solve(&e)?;
        let mut coeff = [0.0; 6];
        match family {
            Family::Bdm => {
                for m in 0..6 {
                    coeff[m] = c[m];
                }
            }
            Family::Rt => {
                // Expand (a, b, r*(xt, yt)) into the 6-entry BDM layout.
                coeff[0] = c[0];
                coeff[1] = c[2];
                coeff[3] = c[1];
                coeff[5] = c[2];
            }
        }
        out.push(coeff);
    }
    Some(out)
}

fn coeff_eval(coeff: &[f64; 6], center: [f64; 2], scale: f64, x: [f64; 2]) -> [f64; 2] {
    let xt = (x[0] - center[0]) / scale;
    let yt = (x[1] - center[1]) / scale;
    [
        coeff[0] + coeff[1] * xt + coeff[2] * yt,
        coeff[3] + coeff[4] * xt + coeff[5] * yt,
    ]
}

/// Reference-element shape functions with value, divergence and gradient,
/// dual to the reference edge moments.
pub fn shape_values(space: FamilyOrder, ref_point: [f64; 2]) -> Vec<ShapeValue> {
    let v0 = [0.0, 0.0];
    let v1 = [1.0, 0.0];
    let v2 = [0.0, 1.0];
    let s = 0.5f64.sqrt();
    // Edge i is opposite vertex i, traversed counterclockwise, outward normal.
    let edges = [
        (v1, v2, [s, s]),
        (v2, v0, [-1.0, 0.0]),
        (v0, v1, [0.0, -1.0]),
    ];
    let mpe = space.moments_per_edge();
    let mut specs = Vec::new();
    for (start, end, normal) in edges {
        for j in 0..mpe {
            specs.push(MomentSpec { start, end, normal, moment: j });
        }
    }
    let coeffs = moment_dual_basis(&specs, space.family, [0.0, 0.0], 1.0)
        .expect("reference basis is well-defined");
    coeffs
        .iter()
        .map(|c| ShapeValue {
            value: coeff_eval(c, [0.0, 0.0], 1.0, ref_point),
            divergence: c[1] + c[5],
            gradient: [[c[1], c[2]], [c[4], c[5]]],
        })
        .collect()
}

/// Per-element velocity basis dual to the global edge moments of the mesh.
#[derive(Clone, Debug)]
pub struct ElementBasis {
    pub center: [f64; 2],
    pub scale: f64,
    coeffs: Vec<[f64; 6]>,
    /// Constant physical divergence of each shape function.
    pub div: Vec<f64>,
    /// Constant physical gradient of each shape function.
    pub grad: Vec<[[f64; 2]; 2]>,
}

impl ElementBasis {
    pub fn ndof(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, dof: usize, x: [f64; 2]) -> [f64; 2] {
        coeff_eval(&self.coeffs[dof], self.center, self.scale, x)
    }
}

/// Degree-of-freedom bookkeeping for one (mesh, family) pair.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub moments_per_edge: usize,
    pub n_u: usize,
    pub n_p: usize,
    pub n_pstar_per_element: usize,
    pub n_pstar: usize,
    pub lambda_per_edge: usize,
    pub m_per_edge: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh, fam: FamilyOrder) -> Self {
        let mpe = fam.moments_per_edge();
        let pp = (fam.postprocess_degree() + 1) * (fam.postprocess_degree() + 2) / 2;
        DofMap {
            moments_per_edge: mpe,
            n_u: mpe * mesh.n_edges(),
            n_p: mesh.n_triangles(),
            n_pstar_per_element: pp,
            n_pstar: pp * mesh.n_triangles(),
            lambda_per_edge: fam.lambda_per_edge(),
            m_per_edge: 2,
        }
    }

    pub fn u_dof(&self, edge: usize, moment: usize) -> usize {
        debug_assert!(moment < self.moments_per_edge);
        self.moments_per_edge * edge + moment
    }
}

/// A velocity space instance: dof map plus cached per-element bases.
pub struct Space {
    pub fam: FamilyOrder,
    pub dofs: DofMap,
    pub bases: Vec<ElementBasis>,
}

impl Space {
    pub fn new(mesh: &Mesh, fam: FamilyOrder) -> Result<Space, SpaceError> {
        if fam.order != 1 {
            return Err(SpaceError::OrderNotImplemented(fam.order));
        }
        let mpe = fam.moments_per_edge();
        let mut bases = Vec::with_capacity(mesh.n_triangles());
        for k in 0..mesh.n_triangles() {
            let verts = mesh.tri_vertices(k);
            if ElementGeometry::from_vertices(verts).is_none() {
                return Err(SpaceError::DegenerateElement(k));
            }
            let center = mesh.centroid(k);
            let scale = mesh.h_k[k];
            let mut specs = Vec::with_capacity(3 * mpe);
            for i in 0..3 {
                let e = &mesh.edges[mesh.tri_edges[k][i]];
                let start = mesh.vertices[e.verts[0]];
                let end = mesh.vertices[e.verts[1]];
                for j in 0..mpe {
                    specs.push(MomentSpec { start, end, normal: e.normal, moment: j });
                }
            }
            let coeffs = moment_dual_basis(&specs, fam.family, center, scale)
                .ok_or(SpaceError::DegenerateElement(k))?;
            let div = coeffs.iter().map(|c| (c[1] + c[5]) / scale).collect();
            let grad = coeffs
                .iter()
                .map(|c| {
                    [
                        [c[1] / scale, c[2] / scale],
                        [c[4] / scale, c[5] / scale],
                    ]
                })
                .collect();
            bases.push(ElementBasis { center, scale, coeffs, div, grad });
        }
        Ok(Space {
            fam,
            dofs: DofMap::new(mesh, fam),
            bases,
        })
    }

    /// Global velocity dof of local dof `(edge slot, moment)` on element `k`.
    pub fn global_u_dof(&self, mesh: &Mesh, k: usize, slot: usize, moment: usize) -> usize {
        self.dofs.u_dof(mesh.tri_edges[k][slot], moment)
    }

    /// Local-to-global map for all element dofs, local order (slot, moment).
    pub fn element_dofs(&self, mesh: &Mesh, k: usize) -> Vec<usize> {
        let mpe = self.dofs.moments_per_edge;
        let mut out = Vec::with_capacity(3 * mpe);
        for slot in 0..3 {
            for j in 0..mpe {
                out.push(self.dofs.u_dof(mesh.tri_edges[k][slot], j));
            }
        }
        out
    }

    /// Evaluate a coefficient vector as a velocity field on element `k`.
    pub fn eval_velocity(&self, mesh: &Mesh, coeffs: &[f64], k: usize, x: [f64; 2]) -> [f64; 2] {
        let basis = &self.bases[k];
        let mut out = [0.0, 0.0];
        for (loc, gdof) in self.element_dofs(mesh, k).into_iter().enumerate() {
            let v = basis.eval(loc, x);
            out[0] += coeffs[gdof] * v[0];
            out[1] += coeffs[gdof] * v[1];
        }
        out
    }

    /// Constant gradient of the discrete velocity on element `k`.
    pub fn velocity_gradient(&self, mesh: &Mesh, coeffs: &[f64], k: usize) -> [[f64; 2]; 2] {
        let basis = &self.bases[k];
        let mut g = [[0.0; 2]; 2];
        for (loc, gdof) in self.element_dofs(mesh, k).into_iter().enumerate() {
            for r in 0..2 {
                for c in 0..2 {
                    g[r][c] += coeffs[gdof] * basis.grad[loc][r][c];
                }
            }
        }
        g
    }

    /// Constant divergence of the discrete velocity on element `k`.
    pub fn velocity_divergence(&self, mesh: &Mesh, coeffs: &[f64], k: usize) -> f64 {
        let basis = &self.bases[k];
        self.element_dofs(mesh, k)
            .into_iter()
            .enumerate()
            .map(|(loc, gdof)| coeffs[gdof] * basis.div[loc])
            .sum()
    }
}

/// Edge normal-moment interpolation R_h: the coefficients are the normalised
/// moments of `u . n` against Legendre polynomials on each edge.
pub fn interpolate_rh(
    u: &dyn Fn([f64; 2]) -> [f64; 2],
    mesh: &Mesh,
    space: &Space,
) -> Vec<f64> {
    let mpe = space.dofs.moments_per_edge;
    let rule = edge_rule_data();
    let mut out = vec![0.0; space.dofs.n_u];
    for (e, edge) in mesh.edges.iter().enumerate() {
        let a = mesh.vertices[edge.verts[0]];
        let b = mesh.vertices[edge.verts[1]];
        for j in 0..mpe {
            let mut acc = 0.0;
            for &(s, w) in &rule {
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let v = u(x);
                let leg = if j == 0 { 1.0 } else { 2.0 * s - 1.0 };
                acc += w * (v[0] * edge.normal[0] + v[1] * edge.normal[1]) * leg;
            }
            out[space.dofs.u_dof(e, j)] = acc;
        }
    }
    out
}

/// Piecewise polynomial with per-element monomial coefficients in local
/// centred/scaled coordinates.
#[derive(Clone, Debug)]
pub struct ElementPoly {
    pub degree: usize,
    pub coeffs: Vec<Vec<f64>>,
    pub centers: Vec<[f64; 2]>,
    pub scales: Vec<f64>,
}

pub fn n_monomials(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Monomial exponents in the fixed order 1, x, y, x^2, xy, y^2, ...
pub fn monomial_exponents(degree: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for d in 0..=degree as u32 {
        for a in (0..=d).rev() {
            out.push((a, d - a));
        }
    }
    out
}

impl ElementPoly {
    pub fn zeros(mesh: &Mesh, degree: usize) -> Self {
        ElementPoly {
            degree,
            coeffs: vec![vec![0.0; n_monomials(degree)]; mesh.n_triangles()],
            centers: (0..mesh.n_triangles()).map(|k| mesh.centroid(k)).collect(),
            scales: mesh.h_k.clone(),
        }
    }

    pub fn eval(&self, k: usize, x: [f64; 2]) -> f64 {
        let c = self.centers[k];
        let s = self.scales[k];
        let xt = (x[0] - c[0]) / s;
        let yt = (x[1] - c[1]) / s;
        monomial_exponents(self.degree)
            .iter()
            .zip(&self.coeffs[k])
            .map(|(&(a, b), &co)| co * xt.powi(a as i32) * yt.powi(b as i32))
            .sum()
    }

    pub fn grad(&self, k: usize, x: [f64; 2]) -> [f64; 2] {
        let c = self.centers[k];
        let s = self.scales[k];
        let xt = (x[0] - c[0]) / s;
        let yt = (x[1] - c[1]) / s;
        let mut g = [0.0, 0.0];
        for (&(a, b), &co) in monomial_exponents(self.degree).iter().zip(&self.coeffs[k]) {
            if a > 0 {
                g[0] += co * a as f64 * xt.powi(a as i32 - 1) * yt.powi(b as i32) / s;
            }
            if b > 0 {
                g[1] += co * xt.powi(a as i32) * b as f64 * yt.powi(b as i32 - 1) / s;
            }
        }
        g
    }
}

/// Elementwise L^2 projection onto P_degree.
pub fn project_ph(g: &dyn Fn([f64; 2]) -> f64, mesh: &Mesh, degree: usize) -> ElementPoly {
    let mut out = ElementPoly::zeros(mesh, degree);
    let nm = n_monomials(degree);
    let exps = monomial_exponents(degree);
    let rule = tri_rule_data();
    for k in 0..mesh.n_triangles() {
        let verts = mesh.tri_vertices(k);
        let geom = ElementGeometry::from_vertices(verts).expect("nondegenerate");
        let c = out.centers[k];
        let s = out.scales[k];
        let mut mass = DMatrix::zeros(nm, nm);
        let mut rhs = DVector::zeros(nm);
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let xt = (x[0] - c[0]) / s;
            let yt = (x[1] - c[1]) / s;
            let vals: Vec<f64> = exps
                .iter()
                .map(|&(a, b)| xt.powi(a as i32) * yt.powi(b as i32))
                .collect();
            let gv = g(x);
            for i in 0..nm {
                rhs[i] += w * gv * vals[i];
                for j in 0..nm {
                    mass[(i, j)] += w * vals[i] * vals[j];
                }
            }
        }
        let sol = mass.lu().solve(&rhs).expect("element mass matrix invertible");
        out.coeffs[k] = sol.iter().cloned().collect();
    }
    out
}
