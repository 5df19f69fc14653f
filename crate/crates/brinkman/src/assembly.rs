//! Assembly of the mesh-dependent saddle-point system: the velocity form
//! with interior Nitsche terms, the divergence coupling, loads, boundary
//! terms for tangential and pressure data, strong normal-trace conditions
//! and the zero-mean pressure constraint.

use crate::mesh::Mesh;
use crate::problem::{BoundaryCondition, BrinkmanProblem};
use crate::quad::{edge_rule_data, edge_rule_poly, tri_rule_data, tri_rule_poly};
use crate::spaces::{ElementGeometry, Space};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("sigma^2 field supplies {got} values for {need} elements")]
    SigmaLength { got: usize, need: usize },
    #[error("boundary edge {0} carries no boundary condition")]
    MissingCondition(usize),
    #[error("boundary edge {0}: tag has no tangential data for the Nitsche terms")]
    NoTangentialData(usize),
}

/// Interior-penalty configuration. The default penalty is safe for the
/// degree-1 families; coercivity may fail for alpha below the inverse
/// constant, so small values emit a warning.
#[derive(Clone, Copy, Debug)]
pub struct NitscheConfig {
    pub alpha: f64,
}

impl NitscheConfig {
    pub fn new(alpha: f64) -> NitscheConfig {
        assert!(alpha > 0.0, "penalty alpha must be positive");
        if alpha <= 1.0 {
            eprintln!(
                "warning: Nitsche penalty alpha = {alpha} may violate coercivity for degree-1 elements"
            );
        }
        NitscheConfig { alpha }
    }
}

impl Default for NitscheConfig {
    fn default() -> Self {
        NitscheConfig { alpha: 4.0 }
    }
}

/// Strong velocity constraints: `value[dof]` is `Some` on eliminated dofs,
/// `free[dof]` indexes the remaining unknowns.
#[derive(Clone, Debug)]
pub struct BoundaryConstraints {
    pub value: Vec<Option<f64>>,
    pub free: Vec<Option<usize>>,
    pub n_free: usize,
}

impl BoundaryConstraints {
    pub fn unconstrained(n_u: usize) -> Self {
        BoundaryConstraints {
            value: vec![None; n_u],
            free: (0..n_u).map(Some).collect(),
            n_free: n_u,
        }
    }

    /// Expand a free-dof vector to the full dof vector with boundary values.
    pub fn expand(&self, x_free: &[f64]) -> Vec<f64> {
        self.value
            .iter()
            .zip(&self.free)
            .map(|(v, f)| match (v, f) {
                (Some(val), _) => *val,
                (None, Some(idx)) => x_free[*idx],
                _ => unreachable!(),
            })
            .collect()
    }
}

/// Strong normal-trace conditions: boundary dofs on velocity-tagged edges
/// are set to the edge moments of `u_D . n`.
pub fn apply_normal_bc(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
) -> Result<BoundaryConstraints, AssemblyError> {
    let mpe = space.dofs.moments_per_edge;
    let mut value = vec![None; space.dofs.n_u];
    let rule = edge_rule_data();
    for (e, edge) in mesh.edges.iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        let tag = edge.tag.ok_or(AssemblyError::MissingCondition(e))?;
        match problem.condition_for(tag) {
            BoundaryCondition::Pressure { .. } => {}
            BoundaryCondition::Velocity { data, .. } => {
                let a = mesh.vertices[edge.verts[0]];
                let b = mesh.vertices[edge.verts[1]];
                for j in 0..mpe {
                    let mut acc = 0.0;
                    for &(s, w) in &rule {
                        let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                        let ud = data(x);
                        let leg = if j == 0 { 1.0 } else { 2.0 * s - 1.0 };
                        acc += w * (ud[0] * edge.normal[0] + ud[1] * edge.normal[1]) * leg;
                    }
                    value[space.dofs.u_dof(e, j)] = Some(acc);
                }
            }
        }
    }
    let mut free = vec![None; space.dofs.n_u];
    let mut n_free = 0;
    for (i, v) in value.iter().enumerate() {
        if v.is_none() {
            free[i] = Some(n_free);
            n_free += 1;
        }
    }
    Ok(BoundaryConstraints { value, free, n_free })
}

fn sigma_values(problem: &BrinkmanProblem, mesh: &Mesh) -> Result<Vec<f64>, AssemblyError> {
    if let crate::problem::SigmaField::PerElement(v) = &problem.sigma {
        if v.len() != mesh.n_triangles() {
            return Err(AssemblyError::SigmaLength { got: v.len(), need: mesh.n_triangles() });
        }
    }
    Ok((0..mesh.n_triangles())
        .map(|k| problem.sigma.value(mesh, k))
        .collect())
}

/// Velocity-velocity form: sigma^2 mass and t^2 gradient terms per element
/// plus the symmetric interior-penalty terms on interior edges. Triplets are
/// over unconstrained velocity dofs.
pub fn assemble_ah(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
    config: &NitscheConfig,
) -> Result<Vec<(usize, usize, f64)>, AssemblyError> {
    let sigma2 = sigma_values(problem, mesh)?;
    let t2 = problem.t * problem.t;
    let mut trips = Vec::new();
    let rule = tri_rule_poly();

    for k in 0..mesh.n_triangles() {
        let basis = &space.bases[k];
        let nd = basis.ndof();
        let gdofs = space.element_dofs(mesh, k);
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        let mut local = vec![0.0; nd * nd];
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let vals: Vec<[f64; 2]> = (0..nd).map(|i| basis.eval(i, x)).collect();
            for i in 0..nd {
                for j in 0..nd {
                    local[i * nd + j] +=
                        w * sigma2[k] * (vals[i][0] * vals[j][0] + vals[i][1] * vals[j][1]);
                }
            }
        }
        if t2 > 0.0 {
            let area = mesh.area(k);
            for i in 0..nd {
                for j in 0..nd {
                    let gi = basis.grad[i];
                    let gj = basis.grad[j];
                    let frob = gi[0][0] * gj[0][0]
                        + gi[0][1] * gj[0][1]
                        + gi[1][0] * gj[1][0]
                        + gi[1][1] * gj[1][1];
                    local[i * nd + j] += t2 * area * frob;
                }
            }
        }
        for i in 0..nd {
            for j in 0..nd {
                trips.push((gdofs[i], gdofs[j], local[i * nd + j]));
            }
        }
    }

    if t2 > 0.0 {
        let erule = edge_rule_poly();
        for e in mesh.interior_edges() {
            let edge = &mesh.edges[e];
            let (kl, kr) = (edge.left, edge.right.unwrap());
            let tau = edge.tangent;
            let nor = edge.normal;
            let a = mesh.vertices[edge.verts[0]];
            let b = mesh.vertices[edge.verts[1]];
            let he = edge.length;

            // Per (side, local dof): global dof, signed tangential trace at
            // the quadrature points, and the (constant) normal derivative
            // tangential component entering the average.
            let mut entries: Vec<(usize, Vec<f64>, f64)> = Vec::new();
            for (k, sign) in [(kl, 1.0), (kr, -1.0)] {
                let basis = &space.bases[k];
                let gdofs = space.element_dofs(mesh, k);
                for loc in 0..basis.ndof() {
                    let trace: Vec<f64> = erule
                        .iter()
                        .map(|&(s, _)| {
                            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                            let v = basis.eval(loc, x);
                            sign * (v[0] * tau[0] + v[1] * tau[1])
                        })
                        .collect();
                    let g = basis.grad[loc];
                    let dn = tau[0] * (g[0][0] * nor[0] + g[0][1] * nor[1])
                        + tau[1] * (g[1][0] * nor[0] + g[1][1] * nor[1]);
                    entries.push((gdofs[loc], trace, 0.5 * dn));
                }
            }
            for (di, ti, ai) in &entries {
                for (dj, tj, aj) in &entries {
                    let mut jump_jump = 0.0;
                    let mut avg_i_jump_j = 0.0;
                    let mut avg_j_jump_i = 0.0;
                    for (q, &(_, w)) in erule.iter().enumerate() {
                        jump_jump += w * he * ti[q] * tj[q];
                        avg_i_jump_j += w * he * ai * tj[q];
                        avg_j_jump_i += w * he * aj * ti[q];
                    }
                    let v = t2
                        * (config.alpha / he * jump_jump - avg_i_jump_j - avg_j_jump_i);
                    if v != 0.0 {
                        trips.push((*di, *dj, v));
                    }
                }
            }
        }
    }
    Ok(trips)
}

/// Divergence coupling b(v, q) = -(div v, q) as triplets (pressure row,
/// velocity column), and the pressure load G with G_m = -(g, q_m).
pub fn assemble_b(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
    let mut trips = Vec::new();
    let mut g_load = vec![0.0; mesh.n_triangles()];
    let rule = tri_rule_data();
    for k in 0..mesh.n_triangles() {
        let basis = &space.bases[k];
        let area = mesh.area(k);
        for (loc, gdof) in space.element_dofs(mesh, k).into_iter().enumerate() {
            trips.push((k, gdof, -basis.div[loc] * area));
        }
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        let mut gi = 0.0;
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            gi += q.w * geom.det.abs() * (problem.g)(x);
        }
        g_load[k] = -gi;
    }
    (trips, g_load)
}

/// Volume load (f, v).
pub fn assemble_load_f(problem: &BrinkmanProblem, mesh: &Mesh, space: &Space) -> Vec<f64> {
    let mut f = vec![0.0; space.dofs.n_u];
    let rule = tri_rule_data();
    for k in 0..mesh.n_triangles() {
        let basis = &space.bases[k];
        let gdofs = space.element_dofs(mesh, k);
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let fv = (problem.f)(x);
            for (loc, &gdof) in gdofs.iter().enumerate() {
                let v = basis.eval(loc, x);
                f[gdof] += w * (fv[0] * v[0] + fv[1] * v[1]);
            }
        }
    }
    f
}

/// Nitsche terms for tangential boundary data on tagged edges; all terms
/// carry t^2 and vanish for the Darcy limit. Returns matrix triplets and the
/// load contribution.
pub fn assemble_nitsche_boundary(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
    config: &NitscheConfig,
) -> Result<(Vec<(usize, usize, f64)>, Vec<f64>), AssemblyError> {
    let t2 = problem.t * problem.t;
    let mut trips = Vec::new();
    let mut load = vec![0.0; space.dofs.n_u];
    if t2 == 0.0 {
        return Ok((trips, load));
    }
    let erule = edge_rule_data();
    for (e, edge) in mesh.edges.iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        let tag = edge.tag.ok_or(AssemblyError::MissingCondition(e))?;
        let data = match problem.condition_for(tag) {
            BoundaryCondition::Velocity { data, nitsche_tangential: true } => data.clone(),
            _ => continue,
        };
        let k = edge.left;
        let basis = &space.bases[k];
        let gdofs = space.element_dofs(mesh, k);
        let tau = edge.tangent;
        let nor = edge.normal;
        let a = mesh.vertices[edge.verts[0]];
        let b = mesh.vertices[edge.verts[1]];
        let he = edge.length;
        let nd = basis.ndof();

        let traces: Vec<Vec<f64>> = (0..nd)
            .map(|loc| {
                erule
                    .iter()
                    .map(|&(s, _)| {
                        let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                        let v = basis.eval(loc, x);
                        v[0] * tau[0] + v[1] * tau[1]
                    })
                    .collect()
            })
            .collect();
        let dns: Vec<f64> = (0..nd)
            .map(|loc| {
                let g = basis.grad[loc];
                tau[0] * (g[0][0] * nor[0] + g[0][1] * nor[1])
                    + tau[1] * (g[1][0] * nor[0] + g[1][1] * nor[1])
            })
            .collect();
        let data_tau: Vec<f64> = erule
            .iter()
            .map(|&(s, _)| {
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let ud = data(x);
                ud[0] * tau[0] + ud[1] * tau[1]
            })
            .collect();

        for i in 0..nd {
            for j in 0..nd {
                let mut pen = 0.0;
                let mut di_tj = 0.0;
                let mut dj_ti = 0.0;
                for (q, &(_, w)) in erule.iter().enumerate() {
                    pen += w * he * traces[i][q] * traces[j][q];
                    di_tj += w * he * dns[i] * traces[j][q];
                    dj_ti += w * he * dns[j] * traces[i][q];
                }
                let v = t2 * (config.alpha / he * pen - di_tj - dj_ti);
                if v != 0.0 {
                    trips.push((gdofs[i], gdofs[j], v));
                }
            }
            let mut pen = 0.0;
            let mut dv_data = 0.0;
            for (q, &(_, w)) in erule.iter().enumerate() {
                pen += w * he * data_tau[q] * traces[i][q];
                dv_data += w * he * dns[i] * data_tau[q];
            }
            load[gdofs[i]] += t2 * (config.alpha / he * pen - dv_data);
        }
    }
    Ok((trips, load))
}

/// Weak pressure data: the natural boundary term reduces the load by
/// the flux integral of p_D over the tagged edges.
pub fn assemble_pressure_bc(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
) -> Result<Vec<f64>, AssemblyError> {
    let mut load = vec![0.0; space.dofs.n_u];
    let erule = edge_rule_data();
    for (e, edge) in mesh.edges.iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        let tag = edge.tag.ok_or(AssemblyError::MissingCondition(e))?;
        let data = match problem.condition_for(tag) {
            BoundaryCondition::Pressure { data } => data.clone(),
            _ => continue,
        };
        let k = edge.left;
        let basis = &space.bases[k];
        let gdofs = space.element_dofs(mesh, k);
        let a = mesh.vertices[edge.verts[0]];
        let b = mesh.vertices[edge.verts[1]];
        for (loc, &gdof) in gdofs.iter().enumerate() {
            let mut acc = 0.0;
            for &(s, w) in &erule {
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let v = basis.eval(loc, x);
                acc += w * edge.length * data(x) * (v[0] * edge.normal[0] + v[1] * edge.normal[1]);
            }
            load[gdof] -= acc;
        }
    }
    Ok(load)
}

/// Zero-mean pressure constraint row: element areas, so that m . p is the
/// pressure integral.
pub fn assemble_mean_constraint(mesh: &Mesh) -> Vec<f64> {
    (0..mesh.n_triangles()).map(|k| mesh.area(k)).collect()
}

/// The assembled saddle system over free velocity dofs and pressures, with
/// strong constraints folded into the loads.
pub struct SaddleSystem {
    pub n_u_free: usize,
    pub n_p: usize,
    pub a_trips: Vec<(usize, usize, f64)>,
    pub b_trips: Vec<(usize, usize, f64)>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// Element areas when the zero-mean constraint is active.
    pub mean_row: Option<Vec<f64>>,
    pub constraints: BoundaryConstraints,
    pub u_coords: Vec<[f64; 2]>,
    pub p_coords: Vec<[f64; 2]>,
}

impl SaddleSystem {
    pub fn build(
        problem: &BrinkmanProblem,
        mesh: &Mesh,
        space: &Space,
        config: &NitscheConfig,
    ) -> Result<SaddleSystem, AssemblyError> {
        let mut a_all = assemble_ah(problem, mesh, space, config)?;
        let (nb_trips, nb_load) = assemble_nitsche_boundary(problem, mesh, space, config)?;
        a_all.extend(nb_trips);
        let (b_all, mut g) = assemble_b(problem, mesh, space);
        let mut f_all = assemble_load_f(problem, mesh, space);
        let pbc = assemble_pressure_bc(problem, mesh, space)?;
        for i in 0..f_all.len() {
            f_all[i] += nb_load[i] + pbc[i];
        }
        let constraints = apply_normal_bc(problem, mesh, space)?;

        // Symmetric elimination of the constrained dofs.
        let mut f = vec![0.0; constraints.n_free];
        for (i, fi) in constraints.free.iter().enumerate() {
            if let Some(fi) = fi {
                f[*fi] = f_all[i];
            }
        }
        let mut a_trips = Vec::with_capacity(a_all.len());
        for (i, j, v) in a_all {
            match (constraints.free[i], constraints.free[j]) {
                (Some(fi), Some(fj)) => a_trips.push((fi, fj, v)),
                (Some(fi), None) => f[fi] -= v * constraints.value[j].unwrap(),
                _ => {}
            }
        }
        let mut b_trips = Vec::with_capacity(b_all.len());
        for (m, j, v) in b_all {
            match constraints.free[j] {
                Some(fj) => b_trips.push((m, fj, v)),
                None => g[m] -= v * constraints.value[j].unwrap(),
            }
        }

        let mean_row = if problem.has_pressure_boundary() {
            None
        } else {
            Some(assemble_mean_constraint(mesh))
        };

        let mut u_coords = vec![[0.0; 2]; constraints.n_free];
        let mpe = space.dofs.moments_per_edge;
        for e in 0..mesh.n_edges() {
            for j in 0..mpe {
                if let Some(fi) = constraints.free[space.dofs.u_dof(e, j)] {
                    u_coords[fi] = mesh.edges[e].midpoint;
                }
            }
        }
        let p_coords = (0..mesh.n_triangles()).map(|k| mesh.centroid(k)).collect();

        Ok(SaddleSystem {
            n_u_free: constraints.n_free,
            n_p: mesh.n_triangles(),
            a_trips,
            b_trips,
            f,
            g,
            mean_row,
            constraints,
            u_coords,
            p_coords,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_u_free + self.n_p + usize::from(self.mean_row.is_some())
    }

    /// Full symmetric matrix, right-hand side, quasidefinite signs,
    /// dof coordinates and dense rows for the ordering.
    pub fn to_symmetric(
        &self,
    ) -> (
        crate::sparse::SymMatrix,
        Vec<f64>,
        Vec<i8>,
        Vec<[f64; 2]>,
        Vec<usize>,
    ) {
        let nu = self.n_u_free;
        let np = self.n_p;
        let n = self.n_total();
        let mut trips = Vec::with_capacity(2 * self.a_trips.len() + 4 * self.b_trips.len());
        trips.extend(self.a_trips.iter().cloned());
        for &(m, j, v) in &self.b_trips {
            trips.push((nu + m, j, v));
            trips.push((j, nu + m, v));
        }
        if let Some(row) = &self.mean_row {
            let xi = nu + np;
            for (m, &v) in row.iter().enumerate() {
                trips.push((nu + m, xi, v));
                trips.push((xi, nu + m, v));
            }
        }
        let mat = crate::sparse::SymMatrix::from_triplets(n, &trips);
        let mut rhs = vec![0.0; n];
        rhs[..nu].copy_from_slice(&self.f);
        rhs[nu..nu + np].copy_from_slice(&self.g);
        let mut signs = vec![1i8; n];
        for s in signs.iter_mut().take(n).skip(nu) {
            *s = -1;
        }
        let mut coords = Vec::with_capacity(n);
        coords.extend_from_slice(&self.u_coords);
        coords.extend_from_slice(&self.p_coords);
        let mut force_last = Vec::new();
        if self.mean_row.is_some() {
            let c = centroid_of(&self.p_coords);
            coords.push(c);
            force_last.push(nu + np);
        }
        (mat, rhs, signs, coords, force_last)
    }
}

fn centroid_of(pts: &[[f64; 2]]) -> [f64; 2] {
    let mut c = [0.0; 2];
    for p in pts {
        c[0] += p[0];
        c[1] += p[1];
    }
    let n = pts.len().max(1) as f64;
    [c[0] / n, c[1] / n]
}

/// Residual of the discrete equations at the exact solution: the velocity
/// rows (free dofs only) and pressure rows of the bilinear-form action minus
/// the loads, all integrated with the data quadrature. A consistent method
/// yields residuals at quadrature accuracy.
pub fn consistency_residual(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
    config: &NitscheConfig,
) -> Result<(Vec<f64>, Vec<f64>), AssemblyError> {
    let exact = problem
        .exact
        .as_ref()
        .expect("consistency residual needs an exact solution");
    let sigma2 = sigma_values(problem, mesh)?;
    let t2 = problem.t * problem.t;
    let mut res_u = vec![0.0; space.dofs.n_u];
    let rule = tri_rule_data();
    let erule = edge_rule_data();

    // Element terms: (sigma^2 u, v) + t^2 (grad u, grad v) - (div v, p) - (f, v).
    for k in 0..mesh.n_triangles() {
        let basis = &space.bases[k];
        let gdofs = space.element_dofs(mesh, k);
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let u = (exact.u)(x);
            let gu = (exact.grad_u)(x);
            let p = (exact.p)(x);
            let fv = (problem.f)(x);
            for (loc, &gdof) in gdofs.iter().enumerate() {
                let v = basis.eval(loc, x);
                let gv = basis.grad[loc];
                let mut acc = sigma2[k] * (u[0] * v[0] + u[1] * v[1]);
                if t2 > 0.0 {
                    let frob = gu[0][0] * gv[0][0]
                        + gu[0][1] * gv[0][1]
                        + gu[1][0] * gv[1][0]
                        + gu[1][1] * gv[1][1];
                    acc += t2 * frob;
                }
                acc -= basis.div[loc] * p;
                acc -= fv[0] * v[0] + fv[1] * v[1];
                res_u[gdof] += w * acc;
            }
        }
    }

    // Interior edges: the exact solution has no tangential jump, so only
    // -< avg dU/dn, [v_tau] > survives.
    if t2 > 0.0 {
        for e in mesh.interior_edges() {
            let edge = &mesh.edges[e];
            let tau = edge.tangent;
            let nor = edge.normal;
            let a = mesh.vertices[edge.verts[0]];
            let b = mesh.vertices[edge.verts[1]];
            for (k, sign) in [(edge.left, 1.0), (edge.right.unwrap(), -1.0)] {
                let basis = &space.bases[k];
                let gdofs = space.element_dofs(mesh, k);
                for &(s, w) in &erule {
                    let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let gu = (exact.grad_u)(x);
                    let dn_tau = tau[0] * (gu[0][0] * nor[0] + gu[0][1] * nor[1])
                        + tau[1] * (gu[1][0] * nor[0] + gu[1][1] * nor[1]);
                    for (loc, &gdof) in gdofs.iter().enumerate() {
                        let v = basis.eval(loc, x);
                        let vt = sign * (v[0] * tau[0] + v[1] * tau[1]);
                        res_u[gdof] -= w * edge.length * t2 * dn_tau * vt;
                    }
                }
            }
        }
    }

    // Boundary edges: Nitsche terms with the exact traces minus the data
    // terms, and the weak pressure term against the datum.
    for (e, edge) in mesh.edges.iter().enumerate() {
        if !edge.is_boundary() {
            continue;
        }
        let tag = edge.tag.ok_or(AssemblyError::MissingCondition(e))?;
        let k = edge.left;
        let basis = &space.bases[k];
        let gdofs = space.element_dofs(mesh, k);
        let tau = edge.tangent;
        let nor = edge.normal;
        let a = mesh.vertices[edge.verts[0]];
        let b = mesh.vertices[edge.verts[1]];
        match problem.condition_for(tag) {
            BoundaryCondition::Velocity { data, nitsche_tangential } => {
                if t2 == 0.0 {
                    continue;
                }
                for &(s, w) in &erule {
                    let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let gu = (exact.grad_u)(x);
                    let u = (exact.u)(x);
                    let ud = data(x);
                    let dn_tau = tau[0] * (gu[0][0] * nor[0] + gu[0][1] * nor[1])
                        + tau[1] * (gu[1][0] * nor[0] + gu[1][1] * nor[1]);
                    let ut = u[0] * tau[0] + u[1] * tau[1];
                    let udt = ud[0] * tau[0] + ud[1] * tau[1];
                    for (loc, &gdof) in gdofs.iter().enumerate() {
                        let v = basis.eval(loc, x);
                        let gv = basis.grad[loc];
                        let vt = v[0] * tau[0] + v[1] * tau[1];
                        let dvn_tau = tau[0] * (gv[0][0] * nor[0] + gv[0][1] * nor[1])
                            + tau[1] * (gv[1][0] * nor[0] + gv[1][1] * nor[1]);
                        if !*nitsche_tangential {
                            continue;
                        }
                        let acc = config.alpha / edge.length * (ut - udt) * vt
                            - dn_tau * vt
                            - dvn_tau * (ut - udt);
                        res_u[gdof] += w * edge.length * t2 * acc;
                    }
                }
            }
            BoundaryCondition::Pressure { data } => {
                // The discrete form carries no boundary matrix terms here;
                // subtracting the load F -= <p_D, v.n> adds the datum back.
                for &(s, w) in &erule {
                    let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let pd = data(x);
                    for (loc, &gdof) in gdofs.iter().enumerate() {
                        let v = basis.eval(loc, x);
                        let vn = v[0] * nor[0] + v[1] * nor[1];
                        res_u[gdof] += w * edge.length * pd * vn;
                    }
                }
            }
        }
    }

    // Pressure rows: (div u - g, q).
    let mut res_p = vec![0.0; mesh.n_triangles()];
    for k in 0..mesh.n_triangles() {
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let gu = (exact.grad_u)(x);
            res_p[k] += w * (gu[0][0] + gu[1][1] - (problem.g)(x));
        }
    }

    // Restrict to free dofs.
    let constraints = apply_normal_bc(problem, mesh, space)?;
    let free_res = res_u
        .iter()
        .enumerate()
        .filter_map(|(i, &r)| constraints.free[i].map(|_| r))
        .collect();
    Ok((free_res, res_p))
}
