//! Hybridization: discontinuous velocity spaces with normal-continuity
//! multipliers on skeleton edges, a t-weighted tangential multiplier for the
//! interior-penalty coupling, elementwise (or subdomainwise) condensation to
//! a skeleton system, back-substitution, and domain-decomposition skeleton
//! selection.
//!
//! With the t-scaled tangential variable the multiplier mass block is
//! t-independent and the condensed system stays solvable down to t = 0. At
//! t = 0 the tangential block decouples and the skeleton system is symmetric
//! positive definite in the normal multipliers; for t > 0 the condensed
//! system is symmetric quasidefinite and is factored without pivoting.

use crate::assembly::NitscheConfig;
use crate::estimate::TangentialMultiplier;
use crate::mesh::Mesh;
use crate::problem::{BoundaryCondition, BrinkmanProblem};
use crate::quad::{edge_rule_data, edge_rule_poly, tri_rule_data, tri_rule_poly};
use crate::solve::{solve_spd_cg, SolveError, SolverReport};
use crate::sparse::{LdlSolver, SymMatrix};
use crate::spaces::{ElementGeometry, Space};
use nalgebra::{Cholesky, DMatrix, DVector};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HybridError {
    #[error("skeleton is empty")]
    EmptySkeleton,
    #[error("subdomain count {0} does not factor into a grid")]
    BadPartition(usize),
    #[error("partition produced an empty subdomain {0}")]
    EmptySubdomain(usize),
    #[error("subdomain {0} is not edge-connected")]
    DisconnectedSubdomain(usize),
    #[error("singular local velocity block in group {0}")]
    SingularVelocityBlock(usize),
    #[error("singular local pressure Schur block in group {0}")]
    SingularPressureBlock(usize),
    #[error(transparent)]
    Assembly(#[from] crate::assembly::AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Factor(#[from] crate::sparse::FactorError),
}

/// Hybridize every interior edge, or only the interfaces of a geometric
/// partition into `n` subdomains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkeletonMode {
    Full,
    Dd(usize),
}

impl SkeletonMode {
    pub fn label(&self) -> String {
        match self {
            SkeletonMode::Full => "hybrid".into(),
            SkeletonMode::Dd(n) => format!("dd{n}"),
        }
    }
}

/// Element-to-subdomain assignment with the induced skeleton edge set.
#[derive(Clone, Debug)]
pub struct DdSkeleton {
    pub subdomain_of: Vec<usize>,
    pub n_sub: usize,
    pub is_skeleton: Vec<bool>,
}

impl DdSkeleton {
    pub fn n_skeleton_edges(&self) -> usize {
        self.is_skeleton.iter().filter(|&&b| b).count()
    }
}

/// Full hybridization: every element is its own group, every interior edge
/// a skeleton edge.
pub fn make_full_skeleton(mesh: &Mesh) -> DdSkeleton {
    let subdomain_of: Vec<usize> = (0..mesh.n_triangles()).collect();
    let is_skeleton = (0..mesh.n_edges())
        .map(|e| !mesh.edges[e].is_boundary())
        .collect();
    DdSkeleton { subdomain_of, n_sub: mesh.n_triangles(), is_skeleton }
}

/// Geometric grid-of-blocks partition by element barycentre. The grid shape
/// follows the domain aspect ratio among the divisor pairs of `n_sub`.
pub fn make_dd_skeleton(mesh: &Mesh, n_sub: usize) -> Result<DdSkeleton, HybridError> {
    if n_sub == 0 {
        return Err(HybridError::BadPartition(0));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in &mesh.vertices {
        for a in 0..2 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    let aspect = (hi[0] - lo[0]) / (hi[1] - lo[1]);
    let mut best: Option<(f64, usize)> = None;
    for kx in 1..=n_sub {
        if n_sub % kx != 0 {
            continue;
        }
        let ky = n_sub / kx;
        let mismatch = ((kx as f64 / ky as f64).ln() - aspect.ln()).abs();
        if best.map_or(true, |(m, _)| mismatch < m) {
            best = Some((mismatch, kx));
        }
    }
    let kx = best.ok_or(HybridError::BadPartition(n_sub))?.1;
    let ky = n_sub / kx;

    let subdomain_of: Vec<usize> = (0..mesh.n_triangles())
        .map(|k| {
            let c = mesh.centroid(k);
            let ix = (((c[0] - lo[0]) / (hi[0] - lo[0]) * kx as f64) as usize).min(kx - 1);
            let iy = (((c[1] - lo[1]) / (hi[1] - lo[1]) * ky as f64) as usize).min(ky - 1);
            iy * kx + ix
        })
        .collect();

    let mut count = vec![0usize; n_sub];
    for &s in &subdomain_of {
        count[s] += 1;
    }
    if let Some(empty) = count.iter().position(|&c| c == 0) {
        return Err(HybridError::EmptySubdomain(empty));
    }

    let is_skeleton: Vec<bool> = (0..mesh.n_edges())
        .map(|e| {
            let edge = &mesh.edges[e];
            match edge.right {
                Some(r) => subdomain_of[edge.left] != subdomain_of[r],
                None => false,
            }
        })
        .collect();

    // Edge-connectivity of each subdomain.
    let mut seen = vec![false; mesh.n_triangles()];
    for s in 0..n_sub {
        let start = subdomain_of.iter().position(|&x| x == s).unwrap();
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 1;
        while let Some(k) = stack.pop() {
            for &e in &mesh.tri_edges[k] {
                let edge = &mesh.edges[e];
                let other = if edge.left == k { edge.right } else { Some(edge.left) };
                if let Some(o) = other {
                    if subdomain_of[o] == s && !seen[o] {
                        seen[o] = true;
                        reached += 1;
                        stack.push(o);
                    }
                }
            }
        }
        if reached != count[s] {
            return Err(HybridError::DisconnectedSubdomain(s));
        }
    }

    Ok(DdSkeleton { subdomain_of, n_sub, is_skeleton })
}

/// Dof layout of the hybridized (discontinuous across the skeleton)
/// velocity space plus the multipliers.
#[derive(Clone, Debug)]
struct HybridDofs {
    /// Per edge: base velocity dof; skeleton edges carry two sides.
    u_base: Vec<usize>,
    mpe: usize,
    n_u: usize,
    /// Per edge: base lambda dof on skeleton edges.
    lambda_base: Vec<Option<usize>>,
    lpe: usize,
    n_lambda: usize,
    /// Per edge: base tangential-multiplier dof on skeleton edges.
    m_base: Vec<Option<usize>>,
    mpe_t: usize,
    n_m: usize,
}

impl HybridDofs {
    fn new(mesh: &Mesh, space: &Space, skel: &DdSkeleton, m_per_edge: usize) -> HybridDofs {
        let mpe = space.dofs.moments_per_edge;
        let mut u_base = vec![0usize; mesh.n_edges()];
        let mut n_u = 0;
        for e in 0..mesh.n_edges() {
            u_base[e] = n_u;
            n_u += if skel.is_skeleton[e] { 2 * mpe } else { mpe };
        }
        let lpe = space.fam.lambda_per_edge();
        let mut lambda_base = vec![None; mesh.n_edges()];
        let mut n_lambda = 0;
        let mut m_base = vec![None; mesh.n_edges()];
        let mut n_m = 0;
        for e in 0..mesh.n_edges() {
            if skel.is_skeleton[e] {
                lambda_base[e] = Some(n_lambda);
                n_lambda += lpe;
                m_base[e] = Some(n_m);
                n_m += m_per_edge;
            }
        }
        HybridDofs { u_base, mpe, n_u, lambda_base, lpe, n_lambda, m_base, mpe_t: m_per_edge, n_m }
    }

    /// Velocity dof for (edge, side, moment); side 1 only on skeleton edges.
    fn u_dof(&self, skel: &DdSkeleton, e: usize, side: usize, j: usize) -> usize {
        debug_assert!(side == 0 || skel.is_skeleton[e]);
        self.u_base[e] + side * self.mpe + j
    }

    /// Element-local velocity dofs in (slot, moment) order; the side is 1
    /// when the element sits right of a skeleton edge.
    fn element_dofs(&self, mesh: &Mesh, skel: &DdSkeleton, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(3 * self.mpe);
        for slot in 0..3 {
            let e = mesh.tri_edges[k][slot];
            let side = if skel.is_skeleton[e] && mesh.edges[e].right == Some(k) { 1 } else { 0 };
            for j in 0..self.mpe {
                out.push(self.u_dof(skel, e, side, j));
            }
        }
        out
    }
}

/// Assembled hybrid blocks: group-local saddle systems plus the sparse
/// multiplier couplings. Block scaling: D carries the factor t, the
/// multiplier mass block M is t-independent.
pub struct HybridBlocks {
    pub t: f64,
    pub alpha: f64,
    pub n_lambda: usize,
    pub n_m: usize,
    pub groups: Vec<GroupBlock>,
    /// Multiplier mass per skeleton edge, Legendre-diagonal entries scaled
    /// by both element sides: 4 alpha diag(1, 1/3).
    pub m_mass: Vec<(usize, f64)>,
    /// Right-hand side of the tangential-multiplier rows from eliminated
    /// strong boundary dofs.
    pub m_rhs: Vec<f64>,
    /// Nullspace handling for pure-Dirichlet problems: one grounded lambda
    /// dof, pressures re-shifted to zero mean after recovery.
    pub grounded_lambda: Option<usize>,
    pub lambda_coords: Vec<[f64; 2]>,
    pub m_coords: Vec<[f64; 2]>,
    dofs: HybridDofs,
    skeleton: DdSkeleton,
    /// Full-dof constraint data for strong boundary conditions.
    u_value: Vec<Option<f64>>,
    u_free: Vec<Option<usize>>,
    n_u_free: usize,
}

pub struct GroupBlock {
    pub elements: Vec<usize>,
    /// Free hybrid velocity dofs of the group (global free indices).
    pub u_dofs: Vec<usize>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DVector<f64>,
    pub g: DVector<f64>,
    /// (lambda dof, local u dof, coefficient)
    pub c: Vec<(usize, usize, f64)>,
    /// (m dof, local u dof, coefficient), linear in t.
    pub d: Vec<(usize, usize, f64)>,
}

/// Treatment of the tangential interior-penalty terms on skeleton edges:
/// the t-scaled multiplier form (condensable), or the conforming two-sided
/// jumps written on the duplicated traces (exact, not condensable for
/// t > 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TangentialCoupling {
    Multiplier,
    Conforming,
}

/// Assemble the hybrid blocks for the given skeleton. Elements adjacent to
/// skeleton edges use private velocity copies; edges interior to a group
/// keep the conforming form.
pub fn build_hybrid_system(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
    config: &NitscheConfig,
    skel: &DdSkeleton,
) -> Result<HybridBlocks, HybridError> {
    build_hybrid_system_with(problem, mesh, space, config, skel, 2, TangentialCoupling::Multiplier)
}

pub fn build_hybrid_system_with(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
    config: &NitscheConfig,
    skel: &DdSkeleton,
    m_per_edge: usize,
    coupling: TangentialCoupling,
) -> Result<HybridBlocks, HybridError> {
    if skel.n_skeleton_edges() == 0 {
        return Err(HybridError::EmptySkeleton);
    }
    let dofs = HybridDofs::new(mesh, space, skel, m_per_edge);
    let t = problem.t;
    let t2 = t * t;
    let alpha = config.alpha;

    // Strong normal constraints on boundary velocity-tagged edges.
    let mut u_value: Vec<Option<f64>> = vec![None; dofs.n_u];
    {
        let erule = edge_rule_data();
        for (e, edge) in mesh.edges.iter().enumerate() {
            if !edge.is_boundary() {
                continue;
            }
            let tag = edge.tag.expect("boundary edge tagged");
            if let BoundaryCondition::Velocity { data, .. } = problem.condition_for(tag) {
                let a = mesh.vertices[edge.verts[0]];
                let b = mesh.vertices[edge.verts[1]];
                for j in 0..dofs.mpe {
                    let mut acc = 0.0;
                    for &(s, w) in &erule {
                        let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                        let ud = data(x);
                        let leg = if j == 0 { 1.0 } else { 2.0 * s - 1.0 };
                        acc += w * (ud[0] * edge.normal[0] + ud[1] * edge.normal[1]) * leg;
                    }
                    u_value[dofs.u_dof(skel, e, 0, j)] = Some(acc);
                }
            }
        }
    }
    let mut u_free: Vec<Option<usize>> = vec![None; dofs.n_u];
    let mut n_u_free = 0;
    for i in 0..dofs.n_u {
        if u_value[i].is_none() {
            u_free[i] = Some(n_u_free);
            n_u_free += 1;
        }
    }

    // Group membership.
    let mut group_elems: Vec<Vec<usize>> = vec![Vec::new(); skel.n_sub];
    for k in 0..mesh.n_triangles() {
        group_elems[skel.subdomain_of[k]].push(k);
    }

    // Per-group dense assembly over free dofs.
    let mut groups = Vec::with_capacity(skel.n_sub);
    let mut m_rhs = vec![0.0; dofs.n_m];
    let rule_poly = tri_rule_poly();
    let rule_data = tri_rule_data();
    let erule = edge_rule_poly();
    let erule_data = edge_rule_data();

    for (gid, elems) in group_elems.iter().enumerate() {
        // Collect the group's free dofs in deterministic order.
        let mut gdofs: Vec<usize> = Vec::new();
        for &k in elems {
            for d in dofs.element_dofs(mesh, skel, k) {
                if let Some(f) = u_free[d] {
                    gdofs.push(f);
                }
            }
        }
        gdofs.sort_unstable();
        gdofs.dedup();
        let local_of = |free: usize| gdofs.binary_search(&free).expect("dof in group");
        let nu = gdofs.len();
        let np = elems.len();
        let mut a = DMatrix::zeros(nu, nu);
        let mut b = DMatrix::zeros(np, nu);
        let mut f = DVector::zeros(nu);
        let mut g = DVector::zeros(np);
        let mut c_trips = Vec::new();
        let mut d_trips = Vec::new();

        // Scatter with boundary-value elimination folded into f/g.
        let add_a = |a: &mut DMatrix<f64>,
                         f: &mut DVector<f64>,
                         di: usize,
                         dj: usize,
                         v: f64| {
            match (u_free[di], u_free[dj]) {
                (Some(fi), Some(fj)) => a[(local_of(fi), local_of(fj))] += v,
                (Some(fi), None) => f[local_of(fi)] -= v * u_value[dj].unwrap(),
                _ => {}
            }
        };

        for (pk, &k) in elems.iter().enumerate() {
            let basis = &space.bases[k];
            let nd = basis.ndof();
            let ed = dofs.element_dofs(mesh, skel, k);
            let sigma2 = problem.sigma.value(mesh, k);
            let geom =
                ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");

            // Mass and gradient terms.
            for q in &rule_poly {
                let x = geom.map_point([q.x, q.y]);
                let w = q.w * geom.det.abs();
                let vals: Vec<[f64; 2]> = (0..nd).map(|i| basis.eval(i, x)).collect();
                for i in 0..nd {
                    for j in 0..nd {
                        add_a(
                            &mut a,
                            &mut f,
                            ed[i],
                            ed[j],
                            w * sigma2 * (vals[i][0] * vals[j][0] + vals[i][1] * vals[j][1]),
                        );
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
                        add_a(&mut a, &mut f, ed[i], ed[j], t2 * area * frob);
                    }
                }
            }

            // Divergence block and loads.
            for (loc, &d) in ed.iter().enumerate() {
                let v = -basis.div[loc] * mesh.area(k);
                match u_free[d] {
                    Some(fd) => b[(pk, local_of(fd))] += v,
                    None => g[pk] -= v * u_value[d].unwrap(),
                }
            }
            let mut gi = 0.0;
            for q in &rule_data {
                let x = geom.map_point([q.x, q.y]);
                gi += q.w * geom.det.abs() * (problem.g)(x);
                let w = q.w * geom.det.abs();
                let fv = (problem.f)(x);
                for (loc, &d) in ed.iter().enumerate() {
                    if let Some(fd) = u_free[d] {
                        let v = basis.eval(loc, x);
                        f[local_of(fd)] += w * (fv[0] * v[0] + fv[1] * v[1]);
                    }
                }
            }
            g[pk] -= gi;
        }

        // Edge terms.
        for &k in elems {
            for slot in 0..3 {
                let e = mesh.tri_edges[k][slot];
                let edge = &mesh.edges[e];
                if skel.is_skeleton[e] {
                    let basis = &space.bases[k];
                    let ed = dofs.element_dofs(mesh, skel, k);
                    let nd = basis.ndof();
                    let tau = edge.tangent;
                    let nor = edge.normal;
                    let outward = mesh.outward_sign(e, k);
                    let av = mesh.vertices[edge.verts[0]];
                    let bv = mesh.vertices[edge.verts[1]];
                    let he = edge.length;
                    let traces: Vec<Vec<f64>> = (0..nd)
                        .map(|loc| {
                            erule
                                .iter()
                                .map(|&(s, _)| {
                                    let x = [
                                        av[0] + s * (bv[0] - av[0]),
                                        av[1] + s * (bv[1] - av[1]),
                                    ];
                                    let v = basis.eval(loc, x);
                                    v[0] * tau[0] + v[1] * tau[1]
                                })
                                .collect()
                        })
                        .collect();
                    let dns: Vec<f64> = (0..nd)
                        .map(|loc| {
                            let gm = basis.grad[loc];
                            outward
                                * (tau[0] * (gm[0][0] * nor[0] + gm[0][1] * nor[1])
                                    + tau[1] * (gm[1][0] * nor[0] + gm[1][1] * nor[1]))
                        })
                        .collect();
                    // One-sided tangential terms belong to the multiplier
                    // form only.
                    if t2 > 0.0 && coupling == TangentialCoupling::Multiplier {
                        for i in 0..nd {
                            for j in 0..nd {
                                let mut pen = 0.0;
                                let mut didj = 0.0;
                                let mut djdi = 0.0;
                                for (q, &(_, w)) in erule.iter().enumerate() {
                                    pen += w * he * traces[i][q] * traces[j][q];
                                    didj += w * he * dns[i] * traces[j][q];
                                    djdi += w * he * dns[j] * traces[i][q];
                                }
                                add_a(
                                    &mut a,
                                    &mut f,
                                    ed[i],
                                    ed[j],
                                    t2 * (2.0 * alpha / he * pen - didj - djdi),
                                );
                            }
                        }
                    }
                    // Couplings: lambda rows pair with the normal moments
                    // (<v.n, L_j> = |E| on the matching dof), the m rows
                    // with the tangential traces, factor t.
                    let lb = dofs.lambda_base[e].unwrap();
                    for j in 0..dofs.lpe {
                        let d = dofs.u_dof(skel, e, usize::from(edge.right == Some(k)), j);
                        if let Some(fd) = u_free[d] {
                            c_trips.push((lb + j, local_of(fd), outward * he));
                        }
                    }
                    if t > 0.0 && coupling == TangentialCoupling::Multiplier {
                        let mb = dofs.m_base[e].unwrap();
                        for (loc, &d) in ed.iter().enumerate() {
                            for jm in 0..dofs.mpe_t {
                                let mut acc = 0.0;
                                for (q, &(s, w)) in erule.iter().enumerate() {
                                    let leg = if jm == 0 { 1.0 } else { 2.0 * s - 1.0 };
                                    acc += w
                                        * he
                                        * leg
                                        * (dns[loc] - 2.0 * alpha / he * traces[loc][q]);
                                }
                                match u_free[d] {
                                    Some(fd) => d_trips.push((mb + jm, local_of(fd), t * acc)),
                                    // Eliminated dofs feed the multiplier
                                    // right-hand side.
                                    None => m_rhs[mb + jm] -= t * acc * u_value[d].unwrap(),
                                }
                            }
                        }
                    }
                } else if edge.right == Some(k) {
                    // Interior non-skeleton edge, assembled once from the
                    // right element's visit: conforming two-sided terms.
                    if t2 == 0.0 {
                        continue;
                    }
                    let (kl, kr) = (edge.left, k);
                    let tau = edge.tangent;
                    let nor = edge.normal;
                    let av = mesh.vertices[edge.verts[0]];
                    let bv = mesh.vertices[edge.verts[1]];
                    let he = edge.length;
                    let mut entries: Vec<(usize, Vec<f64>, f64)> = Vec::new();
                    for (kk, sign) in [(kl, 1.0), (kr, -1.0)] {
                        let basis = &space.bases[kk];
                        let ed = dofs.element_dofs(mesh, skel, kk);
                        for loc in 0..basis.ndof() {
                            let trace: Vec<f64> = erule
                                .iter()
                                .map(|&(s, _)| {
                                    let x = [
                                        av[0] + s * (bv[0] - av[0]),
                                        av[1] + s * (bv[1] - av[1]),
                                    ];
                                    let v = basis.eval(loc, x);
                                    sign * (v[0] * tau[0] + v[1] * tau[1])
                                })
                                .collect();
                            let gm = basis.grad[loc];
                            let dn = tau[0] * (gm[0][0] * nor[0] + gm[0][1] * nor[1])
                                + tau[1] * (gm[1][0] * nor[0] + gm[1][1] * nor[1]);
                            entries.push((ed[loc], trace, 0.5 * dn));
                        }
                    }
                    for (di, ti, ai) in &entries {
                        for (dj, tj, aj) in &entries {
                            let mut jj = 0.0;
                            let mut aij = 0.0;
                            let mut aji = 0.0;
                            for (q, &(_, w)) in erule.iter().enumerate() {
                                jj += w * he * ti[q] * tj[q];
                                aij += w * he * ai * tj[q];
                                aji += w * he * aj * ti[q];
                            }
                            add_a(
                                &mut a,
                                &mut f,
                                *di,
                                *dj,
                                t2 * (alpha / he * jj - aij - aji),
                            );
                        }
                    }
                } else if edge.is_boundary() {
                    let tag = edge.tag.expect("boundary edge tagged");
                    let basis = &space.bases[k];
                    let ed = dofs.element_dofs(mesh, skel, k);
                    let nd = basis.ndof();
                    let av = mesh.vertices[edge.verts[0]];
                    let bv = mesh.vertices[edge.verts[1]];
                    match problem.condition_for(tag) {
                        BoundaryCondition::Velocity { data, nitsche_tangential: true }
                            if t2 > 0.0 =>
                        {
                            let tau = edge.tangent;
                            let nor = edge.normal;
                            let he = edge.length;
                            let traces: Vec<Vec<f64>> = (0..nd)
                                .map(|loc| {
                                    erule_data
                                        .iter()
                                        .map(|&(s, _)| {
                                            let x = [
                                                av[0] + s * (bv[0] - av[0]),
                                                av[1] + s * (bv[1] - av[1]),
                                            ];
                                            let v = basis.eval(loc, x);
                                            v[0] * tau[0] + v[1] * tau[1]
                                        })
                                        .collect()
                                })
                                .collect();
                            let dns: Vec<f64> = (0..nd)
                                .map(|loc| {
                                    let gm = basis.grad[loc];
                                    tau[0] * (gm[0][0] * nor[0] + gm[0][1] * nor[1])
                                        + tau[1] * (gm[1][0] * nor[0] + gm[1][1] * nor[1])
                                })
                                .collect();
                            let data_tau: Vec<f64> = erule_data
                                .iter()
                                .map(|&(s, _)| {
                                    let x = [
                                        av[0] + s * (bv[0] - av[0]),
                                        av[1] + s * (bv[1] - av[1]),
                                    ];
                                    let ud = data(x);
                                    ud[0] * tau[0] + ud[1] * tau[1]
                                })
                                .collect();
                            for i in 0..nd {
                                for j in 0..nd {
                                    let mut pen = 0.0;
                                    let mut didj = 0.0;
                                    let mut djdi = 0.0;
                                    for (q, &(_, w)) in erule_data.iter().enumerate() {
                                        pen += w * he * traces[i][q] * traces[j][q];
                                        didj += w * he * dns[i] * traces[j][q];
                                        djdi += w * he * dns[j] * traces[i][q];
                                    }
                                    add_a(
                                        &mut a,
                                        &mut f,
                                        ed[i],
                                        ed[j],
                                        t2 * (alpha / he * pen - didj - djdi),
                                    );
                                }
                                if let Some(fd) = u_free[ed[i]] {
                                    let mut pen = 0.0;
                                    let mut dv = 0.0;
                                    for (q, &(_, w)) in erule_data.iter().enumerate() {
                                        pen += w * he * data_tau[q] * traces[i][q];
                                        dv += w * he * dns[i] * data_tau[q];
                                    }
                                    f[local_of(fd)] += t2 * (alpha / he * pen - dv);
                                }
                            }
                        }
                        BoundaryCondition::Pressure { data } => {
                            for (loc, &d) in ed.iter().enumerate() {
                                if let Some(fd) = u_free[d] {
                                    let mut acc = 0.0;
                                    for &(s, w) in &erule_data {
                                        let x = [
                                            av[0] + s * (bv[0] - av[0]),
                                            av[1] + s * (bv[1] - av[1]),
                                        ];
                                        let v = basis.eval(loc, x);
                                        acc += w
                                            * edge.length
                                            * data(x)
                                            * (v[0] * edge.normal[0] + v[1] * edge.normal[1]);
                                    }
                                    f[local_of(fd)] -= acc;
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
        }

        groups.push(GroupBlock {
            elements: elems.clone(),
            u_dofs: gdofs,
            a,
            b,
            f,
            g,
            c: c_trips,
            d: d_trips,
        });
        let _ = gid;
    }

    // Multiplier mass: both sides of each skeleton edge contribute
    // (2 alpha / h) |E| on the Legendre-diagonal.
    let mut m_mass = Vec::new();
    let mut lambda_coords = vec![[0.0; 2]; dofs.n_lambda];
    let mut m_coords = vec![[0.0; 2]; dofs.n_m];
    for e in 0..mesh.n_edges() {
        if let (Some(lb), Some(mb)) = (dofs.lambda_base[e], dofs.m_base[e]) {
            for j in 0..dofs.mpe_t {
                let gram = if j == 0 { 1.0 } else { 1.0 / 3.0 };
                m_mass.push((mb + j, 4.0 * alpha * gram));
                m_coords[mb + j] = mesh.edges[e].midpoint;
            }
            for j in 0..dofs.lpe {
                lambda_coords[lb + j] = mesh.edges[e].midpoint;
            }
        }
    }

    // Pure-Dirichlet problems leave the pressure (and the constant lambda
    // mode) undetermined; ground the first constant-moment lambda dof and
    // shift pressures afterwards.
    let grounded_lambda = if problem.has_pressure_boundary() {
        None
    } else {
        (0..mesh.n_edges()).find_map(|e| dofs.lambda_base[e])
    };

    Ok(HybridBlocks {
        t,
        alpha,
        n_lambda: dofs.n_lambda,
        n_m: dofs.n_m,
        groups,
        m_mass,
        m_rhs,
        grounded_lambda,
        lambda_coords,
        m_coords,
        dofs,
        skeleton: skel.clone(),
        u_value,
        u_free,
        n_u_free,
    })
}

/// Per-group factorization caches for condensation and back-substitution.
struct GroupFactors {
    a_chol: Cholesky<f64, nalgebra::Dyn>,
    s_chol: Cholesky<f64, nalgebra::Dyn>,
    /// Local solution with zero multipliers.
    u0: DVector<f64>,
}

impl GroupFactors {
    /// u-part of the local saddle solve for the load (w, g).
    fn solve_u(&self, g: &GroupBlock, w: &DVector<f64>) -> DVector<f64> {
        let aw = self.a_chol.solve(w);
        let rhs = &g.b * &aw - &g.g;
        let p = self.s_chol.solve(&rhs);
        aw - self.a_chol.solve(&(g.b.transpose() * p))
    }

    /// H' w = A^{-1} w - A^{-1} B' S^{-1} B A^{-1} w (positive semidefinite).
    fn apply_hprime(&self, g: &GroupBlock, w: &DVector<f64>) -> DVector<f64> {
        let aw = self.a_chol.solve(w);
        let baw = &g.b * &aw;
        let p = self.s_chol.solve(&baw);
        aw - self.a_chol.solve(&(g.b.transpose() * p))
    }

    fn solve_p(&self, g: &GroupBlock, w: &DVector<f64>) -> DVector<f64> {
        let aw = self.a_chol.solve(w);
        let rhs = &g.b * &aw - &g.g;
        self.s_chol.solve(&rhs)
    }
}

fn factor_groups(blocks: &HybridBlocks) -> Result<Vec<GroupFactors>, HybridError> {
    let mut out = Vec::with_capacity(blocks.groups.len());
    for (gid, g) in blocks.groups.iter().enumerate() {
        let a_chol = Cholesky::new(g.a.clone())
            .ok_or(HybridError::SingularVelocityBlock(gid))?;
        let ainv_bt = a_chol.solve(&g.b.transpose());
        let s = &g.b * ainv_bt;
        let s_chol = Cholesky::new(s).ok_or(HybridError::SingularPressureBlock(gid))?;
        let factors = GroupFactors { a_chol, s_chol, u0: DVector::zeros(0) };
        let u0 = factors.solve_u(g, &g.f);
        out.push(GroupFactors { u0, ..factors });
    }
    Ok(out)
}

/// The condensed skeleton system. Layout: lambda dofs first, then the scaled
/// tangential dofs. At t = 0 the decoupled tangential rows are flipped so
/// the matrix is symmetric positive definite; for t > 0 the system is
/// symmetric quasidefinite (positive lambda block, negative tangential
/// block after condensation).
pub fn condensed_skeleton_matrix(
    blocks: &HybridBlocks,
) -> Result<(SymMatrix, Vec<f64>), HybridError> {
    let factors = factor_groups(blocks)?;
    condensed_with_factors(blocks, &factors)
}

fn condensed_with_factors(
    blocks: &HybridBlocks,
    factors: &[GroupFactors],
) -> Result<(SymMatrix, Vec<f64>), HybridError> {
    let nl = blocks.n_lambda;
    let n = nl + blocks.n_m;
    let darcy = blocks.t == 0.0;
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; n];

    for (g, fac) in blocks.groups.iter().zip(factors) {
        // Coupling rows of this group: lambda rows then m rows.
        let mut rows: Vec<(usize, Vec<(usize, f64)>)> = Vec::new();
        let mut collect = |trip: &[(usize, usize, f64)], offset: usize| {
            let mut by_row: std::collections::BTreeMap<usize, Vec<(usize, f64)>> =
                std::collections::BTreeMap::new();
            for &(r, c, v) in trip {
                by_row.entry(r + offset).or_default().push((c, v));
            }
            rows.extend(by_row);
        };
        collect(&g.c, 0);
        collect(&g.d, nl);

        // Z H' Z^T and Z u0 contributions.
        let nu = g.u_dofs.len();
        let dense_rows: Vec<(usize, DVector<f64>)> = rows
            .iter()
            .map(|(r, entries)| {
                let mut v = DVector::zeros(nu);
                for &(c, val) in entries {
                    v[c] += val;
                }
                (*r, v)
            })
            .collect();
        let hz: Vec<DVector<f64>> = dense_rows
            .iter()
            .map(|(_, z)| fac.apply_hprime(g, z))
            .collect();
        for (ri, zi) in &dense_rows {
            rhs[*ri] += zi.dot(&fac.u0);
            for ((rj, _), hzj) in dense_rows.iter().zip(&hz) {
                trips.push((*ri, *rj, zi.dot(hzj)));
            }
        }
    }

    // The multiplier rows carry the eliminated-boundary contribution.
    for (md, v) in blocks.m_rhs.iter().enumerate() {
        rhs[nl + md] -= v;
    }
    // Tangential mass block: -M in the quasidefinite arrangement, +M when
    // the block decouples at t = 0 (rows flipped).
    for &(md, v) in &blocks.m_mass {
        let sign = if darcy { 1.0 } else { -1.0 };
        trips.push((nl + md, nl + md, sign * v));
    }
    if darcy {
        for r in rhs.iter_mut().skip(nl) {
            *r = -*r;
        }
    }

    // Grounding: remove the pinned lambda row/column.
    if let Some(g) = blocks.grounded_lambda {
        trips.retain(|&(i, j, _)| i != g && j != g);
        rhs[g] = 0.0;
    }
    // Keep the grounded dof in the numbering with a unit diagonal so the
    // solution vector stays aligned.
    if let Some(g) = blocks.grounded_lambda {
        trips.push((g, g, 1.0));
    }

    Ok((SymMatrix::from_triplets(n, &trips), rhs))
}

pub struct HybridSolution {
    /// Conforming-indexed velocity coefficients (sides agree through the
    /// normal-continuity constraint).
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Scaled tangential multiplier coefficients.
    pub m_scaled: Vec<f64>,
    /// Unscaled tangential multiplier per edge (None in the Darcy limit).
    pub m_tangential: Option<TangentialMultiplier>,
    pub report: SolverReport,
    /// Largest mismatch of the duplicated normal moments across the
    /// skeleton (a consistency diagnostic).
    pub normal_mismatch: f64,
}

/// Solve through elementwise condensation: CG on the positive definite
/// Darcy skeleton, an unshifted quasidefinite factorization for t > 0, then
/// groupwise back-substitution.
pub fn solve_hybrid(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
    config: &NitscheConfig,
    mode: SkeletonMode,
) -> Result<HybridSolution, HybridError> {
    let start = Instant::now();
    let skel = match mode {
        SkeletonMode::Full => make_full_skeleton(mesh),
        SkeletonMode::Dd(n) => make_dd_skeleton(mesh, n)?,
    };
    let blocks = build_hybrid_system(problem, mesh, space, config, &skel)?;
    let factors = factor_groups(&blocks)?;
    let (mat, rhs) = condensed_with_factors(&blocks, &factors)?;

    let nl = blocks.n_lambda;
    let (x, method, iterations, residual) = if blocks.t == 0.0 {
        let diag: Vec<f64> = {
            let mut d = vec![1.0; mat.n];
            for i in 0..mat.n {
                for p in mat.row_ptr[i]..mat.row_ptr[i + 1] {
                    if mat.col_idx[p] == i {
                        d[i] = mat.vals[p].max(1e-300);
                    }
                }
            }
            d
        };
        let cg = solve_spd_cg(&mat, &rhs, 1e-8, 20 * mat.n + 200, Some(&diag))?;
        (cg.x, "skeleton-cg".to_string(), Some(cg.iterations), cg.residual)
    } else {
        let coords: Vec<[f64; 2]> = blocks
            .lambda_coords
            .iter()
            .chain(blocks.m_coords.iter())
            .cloned()
            .collect();
        let solver = LdlSolver::new(mat, &coords, &[], None, 0.0)?;
        let (x, iters, rel) = solver.solve(&rhs)?;
        (x, "skeleton-ldlt".to_string(), Some(iters), rel)
    };

    // Back-substitution.
    let lambda = x[..nl].to_vec();
    let m_scaled = x[nl..].to_vec();
    let mut u_hybrid = vec![0.0; blocks.dofs.n_u];
    for (i, v) in blocks.u_value.iter().enumerate() {
        if let Some(val) = v {
            u_hybrid[i] = *val;
        }
    }
    let mut free_to_full = vec![usize::MAX; blocks.n_u_free];
    for (full, f) in blocks.u_free.iter().enumerate() {
        if let Some(f) = f {
            free_to_full[*f] = full;
        }
    }
    let mut p = vec![0.0; mesh.n_triangles()];
    for (g, fac) in blocks.groups.iter().zip(&factors) {
        let nu = g.u_dofs.len();
        // w = F - C' lambda - D' m.
        let mut w = g.f.clone();
        for &(r, c, v) in &g.c {
            w[c] -= v * lambda[r];
        }
        for &(r, c, v) in &g.d {
            w[c] -= v * m_scaled[r];
        }
        let u_loc = fac.solve_u(g, &w);
        let p_loc = fac.solve_p(g, &w);
        for i in 0..nu {
            u_hybrid[free_to_full[g.u_dofs[i]]] = u_loc[i];
        }
        for (pk, &k) in g.elements.iter().enumerate() {
            p[k] = p_loc[pk];
        }
    }

    // Zero-mean shift for pure-Dirichlet problems.
    if blocks.grounded_lambda.is_some() {
        let area: f64 = (0..mesh.n_triangles()).map(|k| mesh.area(k)).sum();
        let mean: f64 =
            (0..mesh.n_triangles()).map(|k| mesh.area(k) * p[k]).sum::<f64>() / area;
        for v in p.iter_mut() {
            *v -= mean;
        }
    }

    // Collapse the duplicated skeleton moments onto the conforming dof map.
    let mpe = blocks.dofs.mpe;
    let mut u = vec![0.0; space.dofs.n_u];
    let mut mismatch = 0.0f64;
    for e in 0..mesh.n_edges() {
        for j in 0..mpe {
            let left = u_hybrid[blocks.dofs.u_dof(&blocks.skeleton, e, 0, j)];
            if blocks.skeleton.is_skeleton[e] {
                let right = u_hybrid[blocks.dofs.u_dof(&blocks.skeleton, e, 1, j)];
                mismatch = mismatch.max((left - right).abs());
                u[space.dofs.u_dof(e, j)] = 0.5 * (left + right);
            } else {
                u[space.dofs.u_dof(e, j)] = left;
            }
        }
    }

    let m_tangential = if blocks.t > 0.0 {
        let mut per_edge = vec![None; mesh.n_edges()];
        for e in 0..mesh.n_edges() {
            if let Some(mb) = blocks.dofs.m_base[e] {
                let c0 = m_scaled[mb] / blocks.t;
                let c1 = if blocks.dofs.mpe_t > 1 { m_scaled[mb + 1] / blocks.t } else { 0.0 };
                per_edge[e] = Some([c0, c1]);
            }
        }
        Some(TangentialMultiplier { per_edge })
    } else {
        None
    };

    Ok(HybridSolution {
        u,
        p,
        lambda,
        m_scaled,
        m_tangential,
        report: SolverReport {
            method,
            iterations,
            residual,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
        normal_mismatch: mismatch,
    })
}

/// Direct solve of the full hybrid system (no condensation). With
/// `lambda_only` the tangential coupling keeps the conforming two-sided
/// form, which reproduces the conforming solution exactly for every t.
pub fn solve_hybrid_direct(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
    config: &NitscheConfig,
    mode: SkeletonMode,
    lambda_only: bool,
) -> Result<HybridSolution, HybridError> {
    let start = Instant::now();
    let skel = match mode {
        SkeletonMode::Full => make_full_skeleton(mesh),
        SkeletonMode::Dd(n) => make_dd_skeleton(mesh, n)?,
    };
    let coupling = if lambda_only {
        TangentialCoupling::Conforming
    } else {
        TangentialCoupling::Multiplier
    };
    let blocks =
        build_hybrid_system_with(problem, mesh, space, config, &skel, 2, coupling)?;
    let t2 = problem.t * problem.t;

    // Global symmetric system over [u_free | p | lambda | (m)].
    let nu = blocks.n_u_free;
    let np = mesh.n_triangles();
    let nl = blocks.n_lambda;
    let nm = if lambda_only { 0 } else { blocks.n_m };
    let n = nu + np + nl + nm;
    let mut trips = Vec::new();
    let mut rhs = vec![0.0; n];

    for g in &blocks.groups {
        for i in 0..g.u_dofs.len() {
            for j in 0..g.u_dofs.len() {
                let v = g.a[(i, j)];
                if v != 0.0 {
                    trips.push((g.u_dofs[i], g.u_dofs[j], v));
                }
            }
            rhs[g.u_dofs[i]] += g.f[i];
        }
        for (pk, &k) in g.elements.iter().enumerate() {
            for j in 0..g.u_dofs.len() {
                let v = g.b[(pk, j)];
                if v != 0.0 {
                    trips.push((nu + k, g.u_dofs[j], v));
                    trips.push((g.u_dofs[j], nu + k, v));
                }
            }
            rhs[nu + k] += g.g[pk];
        }
        for &(r, c, v) in &g.c {
            trips.push((nu + np + r, g.u_dofs[c], v));
            trips.push((g.u_dofs[c], nu + np + r, v));
        }
        if !lambda_only {
            for &(r, c, v) in &g.d {
                trips.push((nu + np + nl + r, g.u_dofs[c], v));
                trips.push((g.u_dofs[c], nu + np + nl + r, v));
            }
        }
    }
    if !lambda_only {
        for &(md, v) in &blocks.m_mass {
            trips.push((nu + np + nl + md, nu + np + nl + md, v));
        }
        for (md, v) in blocks.m_rhs.iter().enumerate() {
            rhs[nu + np + nl + md] += v;
        }
    }
    if lambda_only && t2 > 0.0 {
        // Conforming two-sided tangential terms across the skeleton.
        let erule = edge_rule_poly();
        for e in 0..mesh.n_edges() {
            if !blocks.skeleton.is_skeleton[e] {
                continue;
            }
            let edge = &mesh.edges[e];
            let tau = edge.tangent;
            let nor = edge.normal;
            let av = mesh.vertices[edge.verts[0]];
            let bv = mesh.vertices[edge.verts[1]];
            let he = edge.length;
            let mut entries: Vec<(usize, Vec<f64>, f64)> = Vec::new();
            for (kk, sign) in [(edge.left, 1.0), (edge.right.unwrap(), -1.0)] {
                let basis = &space.bases[kk];
                let ed = blocks.dofs.element_dofs(mesh, &blocks.skeleton, kk);
                for loc in 0..basis.ndof() {
                    let trace: Vec<f64> = erule
                        .iter()
                        .map(|&(s, _)| {
                            let x = [av[0] + s * (bv[0] - av[0]), av[1] + s * (bv[1] - av[1])];
                            let v = basis.eval(loc, x);
                            sign * (v[0] * tau[0] + v[1] * tau[1])
                        })
                        .collect();
                    let gm = basis.grad[loc];
                    let dn = tau[0] * (gm[0][0] * nor[0] + gm[0][1] * nor[1])
                        + tau[1] * (gm[1][0] * nor[0] + gm[1][1] * nor[1]);
                    entries.push((ed[loc], trace, 0.5 * dn));
                }
            }
            for (di, ti, ai) in &entries {
                for (dj, tj, aj) in &entries {
                    let mut jj = 0.0;
                    let mut aij = 0.0;
                    let mut aji = 0.0;
                    for (q, &(_, w)) in erule.iter().enumerate() {
                        jj += w * he * ti[q] * tj[q];
                        aij += w * he * ai * tj[q];
                        aji += w * he * aj * ti[q];
                    }
                    let v = t2 * (config.alpha / he * jj - aij - aji);
                    match (blocks.u_free[*di], blocks.u_free[*dj]) {
                        (Some(fi), Some(fj)) => trips.push((fi, fj, v)),
                        (Some(fi), None) => rhs[fi] -= v * blocks.u_value[*dj].unwrap(),
                        _ => {}
                    }
                }
            }
        }
    }

    // Grounding for pure-Dirichlet problems.
    if let Some(g) = blocks.grounded_lambda {
        let gd = nu + np + g;
        trips.retain(|&(i, j, _)| i != gd && j != gd);
        trips.push((gd, gd, 1.0));
        rhs[gd] = 0.0;
    }

    let mat = SymMatrix::from_triplets(n, &trips);
    let mut coords = vec![[0.0; 2]; n];
    for e in 0..mesh.n_edges() {
        for side in 0..(if blocks.skeleton.is_skeleton[e] { 2 } else { 1 }) {
            for j in 0..blocks.dofs.mpe {
                if let Some(f) = blocks.u_free[blocks.dofs.u_dof(&blocks.skeleton, e, side, j)] {
                    coords[f] = mesh.edges[e].midpoint;
                }
            }
        }
    }
    for k in 0..np {
        coords[nu + k] = mesh.centroid(k);
    }
    for (i, c) in blocks.lambda_coords.iter().enumerate() {
        coords[nu + np + i] = *c;
    }
    if !lambda_only {
        for (i, c) in blocks.m_coords.iter().enumerate() {
            coords[nu + np + nl + i] = *c;
        }
    }
    let mut signs = vec![1i8; n];
    for s in signs.iter_mut().take(nu + np).skip(nu) {
        *s = -1;
    }
    for s in signs.iter_mut().take(nu + np + nl).skip(nu + np) {
        *s = -1;
    }
    let solver = LdlSolver::new(mat, &coords, &[], Some(&signs), 1e-8)?;
    let (x, iters, rel) = solver.solve(&rhs)?;

    let mut u_hybrid = vec![0.0; blocks.dofs.n_u];
    for (i, v) in blocks.u_value.iter().enumerate() {
        if let Some(val) = v {
            u_hybrid[i] = *val;
        }
    }
    for (i, f) in blocks.u_free.iter().enumerate() {
        if let Some(f) = f {
            u_hybrid[i] = x[*f];
        }
    }
    let mut p: Vec<f64> = x[nu..nu + np].to_vec();
    if blocks.grounded_lambda.is_some() {
        let area: f64 = (0..mesh.n_triangles()).map(|k| mesh.area(k)).sum();
        let mean: f64 =
            (0..mesh.n_triangles()).map(|k| mesh.area(k) * p[k]).sum::<f64>() / area;
        for v in p.iter_mut() {
            *v -= mean;
        }
    }

    let mpe = blocks.dofs.mpe;
    let mut u = vec![0.0; space.dofs.n_u];
    let mut mismatch = 0.0f64;
    for e in 0..mesh.n_edges() {
        for j in 0..mpe {
            let left = u_hybrid[blocks.dofs.u_dof(&blocks.skeleton, e, 0, j)];
            if blocks.skeleton.is_skeleton[e] {
                let right = u_hybrid[blocks.dofs.u_dof(&blocks.skeleton, e, 1, j)];
                mismatch = mismatch.max((left - right).abs());
                u[space.dofs.u_dof(e, j)] = 0.5 * (left + right);
            } else {
                u[space.dofs.u_dof(e, j)] = left;
            }
        }
    }

    let lambda = x[nu + np..nu + np + nl].to_vec();
    let m_scaled = if lambda_only { vec![] } else { x[nu + np + nl..].to_vec() };
    let m_tangential = if !lambda_only && blocks.t > 0.0 {
        let mut per_edge = vec![None; mesh.n_edges()];
        for e in 0..mesh.n_edges() {
            if let Some(mb) = blocks.dofs.m_base[e] {
                per_edge[e] = Some([
                    m_scaled[mb] / blocks.t,
                    if blocks.dofs.mpe_t > 1 { m_scaled[mb + 1] / blocks.t } else { 0.0 },
                ]);
            }
        }
        Some(TangentialMultiplier { per_edge })
    } else {
        None
    };

    Ok(HybridSolution {
        u,
        p,
        lambda,
        m_scaled,
        m_tangential,
        report: SolverReport {
            method: if lambda_only { "hybrid-direct-lambda".into() } else { "hybrid-direct".into() },
            iterations: Some(iters),
            residual: rel,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
        normal_mismatch: mismatch,
    })
}

/// Net flux out of each subdomain minus its divergence source; all entries
/// vanish for a mass-conservative solution.
pub fn subdomain_mass_defect(
    mesh: &Mesh,
    space: &Space,
    skel: &DdSkeleton,
    u: &[f64],
    g: &dyn Fn([f64; 2]) -> f64,
) -> Vec<f64> {
    let rule = tri_rule_data();
    let mut defect = vec![0.0; skel.n_sub];
    for k in 0..mesh.n_triangles() {
        let s = skel.subdomain_of[k];
        for slot in 0..3 {
            let e = mesh.tri_edges[k][slot];
            let edge = &mesh.edges[e];
            let on_boundary = match edge.right {
                None => true,
                Some(r) => skel.subdomain_of[if edge.left == k { r } else { edge.left }] != s,
            };
            if on_boundary {
                let flux = edge.length * u[space.dofs.u_dof(e, 0)];
                defect[s] += mesh.outward_sign(e, k) * flux;
            }
        }
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            defect[s] -= q.w * geom.det.abs() * g(x);
        }
    }
    defect
}
