//! Parameter-weighted mesh-dependent norms, exact-error evaluation and the
//! residual a posteriori estimator (conforming and hybrid variants).
//!
//! Velocity norm: sigma^2 mass + t^2 (broken gradient + tangential jumps).
//! Pressure norm: h_K^2/(sigma^2 h_K^2 + t^2) gradients + edge-weighted
//! pressure jumps. The element indicator measures the strong residual with
//! the same weight; the edge indicator carries the tangential jump, the
//! viscous-flux jump and the postprocessed-pressure jump.

use crate::mesh::Mesh;
use crate::problem::{sigma_bar_sq, BoundaryCondition, BrinkmanProblem};
use crate::quad::{edge_rule_data, tri_rule_data};
use crate::spaces::{ElementGeometry, ElementPoly, Space};

/// Pressure handed to the estimator: the postprocessed field, or the raw
/// piecewise-constant pressure for the ablation study.
pub enum EstimatorPressure<'a> {
    Postprocessed(&'a ElementPoly),
    RawAblation(&'a ElementPoly),
}

impl<'a> EstimatorPressure<'a> {
    fn poly(&self) -> &'a ElementPoly {
        match self {
            EstimatorPressure::Postprocessed(p) | EstimatorPressure::RawAblation(p) => p,
        }
    }
}

/// Tangential multiplier values per edge for the hybrid estimator/norm:
/// Legendre coefficients (constant, linear) of the unscaled tangential
/// scalar on skeleton edges.
#[derive(Clone, Debug)]
pub struct TangentialMultiplier {
    pub per_edge: Vec<Option<[f64; 2]>>,
}

impl TangentialMultiplier {
    pub fn eval(&self, e: usize, s: f64) -> Option<f64> {
        self.per_edge[e].map(|c| c[0] + c[1] * (2.0 * s - 1.0))
    }
}

/// Per-level error and estimator report.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub eta_k: Vec<f64>,
    pub eta_e: Vec<f64>,
    pub eta: f64,
    /// Data-oscillation term (t^2 + sigma^2 h^2)^(1/2) ||g - P_h g||, summed
    /// over elements; reported but excluded from eta.
    pub osc_g: f64,
    pub err_u: Option<f64>,
    pub err_p: Option<f64>,
    pub err_total_rel: Option<f64>,
    pub effectivity: Option<f64>,
    pub n_dofs: usize,
    pub h_max: f64,
    pub t: f64,
    pub h_over_t: f64,
}

fn elem_weight(sigma2: f64, t: f64, h: f64) -> f64 {
    h * h / (sigma2 * h * h + t * t)
}

fn edge_weight(sigma_bar2: f64, t: f64, h: f64) -> f64 {
    h / (sigma_bar2 * h * h + t * t)
}

/// Mesh-dependent velocity norm of a discrete coefficient field; tangential
/// jumps over interior edges only.
pub fn velocity_norm_coeffs(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
    coeffs: &[f64],
) -> f64 {
    let t2 = problem.t * problem.t;
    let rule = tri_rule_data();
    let mut total = 0.0;
    for k in 0..mesh.n_triangles() {
        let sigma2 = problem.sigma.value(mesh, k);
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let v = space.eval_velocity(mesh, coeffs, k, x);
            total += w * sigma2 * (v[0] * v[0] + v[1] * v[1]);
        }
        if t2 > 0.0 {
            let g = space.velocity_gradient(mesh, coeffs, k);
            let frob = g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1];
            total += t2 * mesh.area(k) * frob;
        }
    }
    if t2 > 0.0 {
        let erule = edge_rule_data();
        for e in mesh.interior_edges() {
            let edge = &mesh.edges[e];
            let a = mesh.vertices[edge.verts[0]];
            let b = mesh.vertices[edge.verts[1]];
            let tau = edge.tangent;
            let mut jump2 = 0.0;
            for &(s, w) in &erule {
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let vl = space.eval_velocity(mesh, coeffs, edge.left, x);
                let vr = space.eval_velocity(mesh, coeffs, edge.right.unwrap(), x);
                let jt = (vl[0] - vr[0]) * tau[0] + (vl[1] - vr[1]) * tau[1];
                jump2 += w * edge.length * jt * jt;
            }
            total += t2 / edge.length * jump2;
        }
    }
    total.sqrt()
}

/// Velocity norm of a smooth field (no jump terms).
pub fn velocity_norm_field(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    u: &dyn Fn([f64; 2]) -> [f64; 2],
    grad_u: &dyn Fn([f64; 2]) -> [[f64; 2]; 2],
) -> f64 {
    let t2 = problem.t * problem.t;
    let rule = tri_rule_data();
    let mut total = 0.0;
    for k in 0..mesh.n_triangles() {
        let sigma2 = problem.sigma.value(mesh, k);
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let v = u(x);
            total += w * sigma2 * (v[0] * v[0] + v[1] * v[1]);
            if t2 > 0.0 {
                let g = grad_u(x);
                total += w
                    * t2
                    * (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]);
            }
        }
    }
    total.sqrt()
}

/// Mesh-dependent pressure norm of a piecewise polynomial.
pub fn pressure_norm_poly(problem: &BrinkmanProblem, mesh: &Mesh, p: &ElementPoly) -> f64 {
    let t = problem.t;
    let rule = tri_rule_data();
    let erule = edge_rule_data();
    let mut total = 0.0;
    for k in 0..mesh.n_triangles() {
        let sigma2 = problem.sigma.value(mesh, k);
        let wk = elem_weight(sigma2, t, mesh.h_k[k]);
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let g = p.grad(k, x);
            total += w * wk * (g[0] * g[0] + g[1] * g[1]);
        }
    }
    for e in mesh.interior_edges() {
        let edge = &mesh.edges[e];
        let we = edge_weight(sigma_bar_sq(&problem.sigma, mesh, e), t, edge.length);
        let a = mesh.vertices[edge.verts[0]];
        let b = mesh.vertices[edge.verts[1]];
        let mut jump2 = 0.0;
        for &(s, w) in &erule {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let j = p.eval(edge.left, x) - p.eval(edge.right.unwrap(), x);
            jump2 += w * edge.length * j * j;
        }
        total += we * jump2;
    }
    total.sqrt()
}

/// Exact-error components against the problem's exact solution, in the
/// mesh-dependent norms.
pub struct ExactErrors {
    pub err_u: f64,
    pub err_p: f64,
    pub norm_u: f64,
    pub norm_p: f64,
}

/// For hybrid runs `m` replaces the tangential jump by the per-side
/// mismatch with the multiplier on skeleton edges.
pub fn exact_errors(
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
    u_coeffs: &[f64],
    pstar: &ElementPoly,
    m: Option<&TangentialMultiplier>,
) -> ExactErrors {
    let exact = problem.exact.as_ref().expect("exact solution required");
    let t = problem.t;
    let t2 = t * t;
    let rule = tri_rule_data();
    let erule = edge_rule_data();

    let mut err_u2 = 0.0;
    let mut err_p2 = 0.0;
    let mut norm_u2 = 0.0;
    let mut norm_p2 = 0.0;
    for k in 0..mesh.n_triangles() {
        let sigma2 = problem.sigma.value(mesh, k);
        let wk = elem_weight(sigma2, t, mesh.h_k[k]);
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        let gh = space.velocity_gradient(mesh, u_coeffs, k);
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let ue = (exact.u)(x);
            let uh = space.eval_velocity(mesh, u_coeffs, k, x);
            let du = [ue[0] - uh[0], ue[1] - uh[1]];
            err_u2 += w * sigma2 * (du[0] * du[0] + du[1] * du[1]);
            norm_u2 += w * sigma2 * (ue[0] * ue[0] + ue[1] * ue[1]);
            let gpe = (exact.grad_p)(x);
            let gps = pstar.grad(k, x);
            let dp = [gpe[0] - gps[0], gpe[1] - gps[1]];
            err_p2 += w * wk * (dp[0] * dp[0] + dp[1] * dp[1]);
            norm_p2 += w * wk * (gpe[0] * gpe[0] + gpe[1] * gpe[1]);
            if t2 > 0.0 {
                let ge = (exact.grad_u)(x);
                let dg = [
                    [ge[0][0] - gh[0][0], ge[0][1] - gh[0][1]],
                    [ge[1][0] - gh[1][0], ge[1][1] - gh[1][1]],
                ];
                err_u2 += w
                    * t2
                    * (dg[0][0] * dg[0][0]
                        + dg[0][1] * dg[0][1]
                        + dg[1][0] * dg[1][0]
                        + dg[1][1] * dg[1][1]);
                norm_u2 += w
                    * t2
                    * (ge[0][0] * ge[0][0]
                        + ge[0][1] * ge[0][1]
                        + ge[1][0] * ge[1][0]
                        + ge[1][1] * ge[1][1]);
            }
        }
    }

    // Edge terms: tangential jumps (or multiplier mismatch) for the velocity
    // error and postprocessed-pressure jumps for the pressure error; the
    // exact fields are continuous and drop from the jumps.
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        let a = mesh.vertices[edge.verts[0]];
        let b = mesh.vertices[edge.verts[1]];
        let tau = edge.tangent;
        match edge.right {
            Some(kr) => {
                let we = edge_weight(sigma_bar_sq(&problem.sigma, mesh, e), t, edge.length);
                let mult = m.and_then(|m| m.per_edge[e]);
                let mut ujump2 = 0.0;
                let mut pjump2 = 0.0;
                for &(s, w) in &erule {
                    let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let vl = space.eval_velocity(mesh, u_coeffs, edge.left, x);
                    let vr = space.eval_velocity(mesh, u_coeffs, kr, x);
                    let tl = vl[0] * tau[0] + vl[1] * tau[1];
                    let tr = vr[0] * tau[0] + vr[1] * tau[1];
                    match mult {
                        Some(c) => {
                            let mv = c[0] + c[1] * (2.0 * s - 1.0);
                            ujump2 += w * edge.length * ((tl - mv).powi(2) + (tr - mv).powi(2));
                        }
                        None => {
                            ujump2 += w * edge.length * (tl - tr) * (tl - tr);
                        }
                    }
                    let pj = pstar.eval(edge.left, x) - pstar.eval(kr, x);
                    pjump2 += w * edge.length * pj * pj;
                }
                if t2 > 0.0 {
                    err_u2 += t2 / edge.length * ujump2;
                }
                err_p2 += we * pjump2;
            }
            None => {
                // Tangential-data mismatch on Nitsche-tagged boundary edges.
                if t2 == 0.0 {
                    continue;
                }
                let tag = edge.tag.expect("boundary edge tagged");
                if let BoundaryCondition::Velocity { data, nitsche_tangential: true } =
                    problem.condition_for(tag)
                {
                    let mut mis2 = 0.0;
                    for &(s, w) in &erule {
                        let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                        let vh = space.eval_velocity(mesh, u_coeffs, edge.left, x);
                        let ud = data(x);
                        let d = (vh[0] - ud[0]) * tau[0] + (vh[1] - ud[1]) * tau[1];
                        mis2 += w * edge.length * d * d;
                    }
                    err_u2 += t2 / edge.length * mis2;
                }
            }
        }
    }

    ExactErrors {
        err_u: err_u2.sqrt(),
        err_p: err_p2.sqrt(),
        norm_u: norm_u2.sqrt(),
        norm_p: norm_p2.sqrt(),
    }
}

/// Residual a posteriori estimator. `pressure` should be the postprocessed
/// field (the raw variant is only for the ablation study); pass the
/// tangential multiplier for hybrid solutions.
pub fn estimate(
    u_coeffs: &[f64],
    pressure: EstimatorPressure<'_>,
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
    m: Option<&TangentialMultiplier>,
) -> ErrorReport {
    let pstar = pressure.poly();
    let t = problem.t;
    let t2 = t * t;
    let rule = tri_rule_data();
    let erule = edge_rule_data();

    let mut eta_k = vec![0.0; mesh.n_triangles()];
    let mut osc2_total = 0.0;
    for k in 0..mesh.n_triangles() {
        let sigma2 = problem.sigma.value(mesh, k);
        let h = mesh.h_k[k];
        let wk = elem_weight(sigma2, t, h);
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        let mut resid2 = 0.0;
        let mut gbar = 0.0;
        let mut area = 0.0;
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let uh = space.eval_velocity(mesh, u_coeffs, k, x);
            let gp = pstar.grad(k, x);
            let fv = (problem.f)(x);
            // -t^2 Lap u_h vanishes elementwise for the degree-1 families.
            let r = [
                sigma2 * uh[0] + gp[0] - fv[0],
                sigma2 * uh[1] + gp[1] - fv[1],
            ];
            resid2 += w * (r[0] * r[0] + r[1] * r[1]);
            gbar += w * (problem.g)(x);
            area += w;
        }
        let mut osc2 = 0.0;
        let gmean = gbar / area;
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            let d = (problem.g)(x) - gmean;
            osc2 += w * d * d;
        }
        osc2 *= t2 + sigma2 * h * h;
        osc2_total += osc2;
        eta_k[k] = (wk * resid2).sqrt();
    }

    let mut eta_e = vec![0.0; mesh.n_edges()];
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        let a = mesh.vertices[edge.verts[0]];
        let b = mesh.vertices[edge.verts[1]];
        let tau = edge.tangent;
        let nor = edge.normal;
        match edge.right {
            Some(kr) => {
                let we = edge_weight(sigma_bar_sq(&problem.sigma, mesh, e), t, edge.length);
                let mult = m.and_then(|m| m.per_edge[e]);
                let mut tang2 = 0.0;
                let mut pjump2 = 0.0;
                for &(s, w) in &erule {
                    let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let vl = space.eval_velocity(mesh, u_coeffs, edge.left, x);
                    let vr = space.eval_velocity(mesh, u_coeffs, kr, x);
                    let tl = vl[0] * tau[0] + vl[1] * tau[1];
                    let tr = vr[0] * tau[0] + vr[1] * tau[1];
                    match mult {
                        Some(c) => {
                            let mv = c[0] + c[1] * (2.0 * s - 1.0);
                            tang2 += w * edge.length * ((tl - mv).powi(2) + (tr - mv).powi(2));
                        }
                        None => tang2 += w * edge.length * (tl - tr) * (tl - tr),
                    }
                    let pj = pstar.eval(edge.left, x) - pstar.eval(kr, x);
                    pjump2 += w * edge.length * pj * pj;
                }
                // Viscous-flux jump: constant per edge for degree-1 elements.
                let mut flux2 = 0.0;
                if t2 > 0.0 {
                    let gl = space.velocity_gradient(mesh, u_coeffs, edge.left);
                    let gr = space.velocity_gradient(mesh, u_coeffs, kr);
                    let j = [
                        t2 * ((gl[0][0] - gr[0][0]) * nor[0] + (gl[0][1] - gr[0][1]) * nor[1]),
                        t2 * ((gl[1][0] - gr[1][0]) * nor[0] + (gl[1][1] - gr[1][1]) * nor[1]),
                    ];
                    flux2 = (j[0] * j[0] + j[1] * j[1]) * edge.length;
                }
                let mut s2 = we * (flux2 + pjump2);
                if t2 > 0.0 {
                    s2 += t2 / edge.length * tang2;
                }
                eta_e[e] = s2.sqrt();
            }
            None => {
                if t2 == 0.0 {
                    continue;
                }
                let tag = edge.tag.expect("boundary edge tagged");
                if let BoundaryCondition::Velocity { data, nitsche_tangential: true } =
                    problem.condition_for(tag)
                {
                    let mut mis2 = 0.0;
                    for &(s, w) in &erule {
                        let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                        let vh = space.eval_velocity(mesh, u_coeffs, edge.left, x);
                        let ud = data(x);
                        let d = (vh[0] - ud[0]) * tau[0] + (vh[1] - ud[1]) * tau[1];
                        mis2 += w * edge.length * d * d;
                    }
                    eta_e[e] = (t2 / edge.length * mis2).sqrt();
                }
            }
        }
    }

    let eta = (eta_k.iter().map(|v| v * v).sum::<f64>()
        + eta_e.iter().map(|v| v * v).sum::<f64>())
    .sqrt();

    let n_dofs = space.dofs.n_u + space.dofs.n_p;
    let h_over_t = if t > 0.0 { 1.0 / (t * (n_dofs as f64).sqrt()) } else { f64::INFINITY };

    let mut report = ErrorReport {
        eta_k,
        eta_e,
        eta,
        osc_g: osc2_total.sqrt(),
        err_u: None,
        err_p: None,
        err_total_rel: None,
        effectivity: None,
        n_dofs,
        h_max: mesh.h_max(),
        t,
        h_over_t,
    };

    if problem.exact.is_some() {
        let ee = exact_errors(problem, mesh, space, u_coeffs, pstar, m);
        let total = (ee.err_u * ee.err_u + ee.err_p * ee.err_p).sqrt();
        let norm = (ee.norm_u * ee.norm_u + ee.norm_p * ee.norm_p).sqrt();
        report.err_u = Some(ee.err_u);
        report.err_p = Some(ee.err_p);
        report.err_total_rel = Some(total / norm);
        report.effectivity = Some(if total > 0.0 { eta / total } else { f64::INFINITY });
    }
    report
}

/// L2 distance between div u_h and the elementwise mean of g; the discrete
/// equations enforce this to solver accuracy (div V_h is a subset of Q_h).
pub fn mass_conservation_defect(
    mesh: &Mesh,
    space: &Space,
    u_coeffs: &[f64],
    g: &dyn Fn([f64; 2]) -> f64,
) -> f64 {
    let rule = tri_rule_data();
    let mut total = 0.0;
    for k in 0..mesh.n_triangles() {
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        let mut gbar = 0.0;
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            gbar += q.w * geom.det.abs() * g(x);
        }
        gbar /= mesh.area(k);
        let d = space.velocity_divergence(mesh, u_coeffs, k) - gbar;
        total += mesh.area(k) * d * d;
    }
    total.sqrt()
}

/// CSV row in the fixed schema; rates are NaN where undefined.
pub fn csv_header() -> &'static str {
    "level,N_dofs,h_max,t,h_over_t,err_u,err_p,err_total_rel,eta,effectivity,rate_err,rate_eta"
}

pub fn csv_row(level: usize, r: &ErrorReport, rate_err: f64, rate_eta: f64) -> String {
    let fmt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.12e}"),
        None => "nan".to_string(),
    };
    format!(
        "{},{},{:.12e},{:.6e},{:.6e},{},{},{},{:.12e},{},{:.4},{:.4}",
        level,
        r.n_dofs,
        r.h_max,
        r.t,
        r.h_over_t,
        fmt(r.err_u),
        fmt(r.err_p),
        fmt(r.err_total_rel),
        r.eta,
        fmt(r.effectivity),
        rate_err,
        rate_eta
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;
    use crate::problem::{analytic_case, channel_case, SigmaField};
    use crate::spaces::{interpolate_rh, project_ph, FamilyOrder, Space};

    #[test]
    fn velocity_norm_basic_values() {
        let mesh = build_rect_mesh(2, 2, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let prob = analytic_case(3.1, 2.0, 1.0).unwrap();
        let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();

        let zero = vec![0.0; space.dofs.n_u];
        assert_eq!(velocity_norm_coeffs(&prob, &mesh, &space, &zero), 0.0);

        // Constant (1, 0): only the mass term survives, norm = 1 for any t.
        let ones = interpolate_rh(&|_| [1.0, 0.0], &mesh, &space);
        let n = velocity_norm_coeffs(&prob, &mesh, &space, &ones);
        assert!((n - 1.0).abs() < 1e-12, "norm {n}");

        // Homogeneity.
        let scaled: Vec<f64> = ones.iter().map(|v| -3.5 * v).collect();
        let ns = velocity_norm_coeffs(&prob, &mesh, &space, &scaled);
        assert!((ns - 3.5 * n).abs() < 1e-12);

        // Conforming linear field: jumps vanish; matches the field norm.
        let u = |x: [f64; 2]| [x[0], -x[1]];
        let gu = |_: [f64; 2]| [[1.0, 0.0], [0.0, -1.0]];
        let coeffs = interpolate_rh(&u, &mesh, &space);
        let a = velocity_norm_coeffs(&prob, &mesh, &space, &coeffs);
        let b = velocity_norm_field(&prob, &mesh, &u, &gu);
        assert!((a - b).abs() < 1e-11, "{a} vs {b}");
    }

    #[test]
    fn pressure_norm_values() {
        let mesh = build_rect_mesh(3, 3, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let mut prob = analytic_case(3.1, 0.0, 1.0).unwrap();
        prob.sigma = SigmaField::Constant(1.0);

        // Constant pressure: zero norm.
        let c = project_ph(&|_| 4.2, &mesh, 0);
        assert!(pressure_norm_poly(&prob, &mesh, &c) < 1e-14);

        // q = x with sigma = 1, t = 0: the weights collapse and the norm is
        // |Omega|^(1/2) = 1.
        let q = project_ph(&|x| x[0], &mesh, 1);
        let n = pressure_norm_poly(&prob, &mesh, &q);
        assert!((n - 1.0).abs() < 1e-10, "norm {n}");

        // Homogeneity.
        let q2 = project_ph(&|x| 2.0 * x[0], &mesh, 1);
        let n2 = pressure_norm_poly(&prob, &mesh, &q2);
        assert!((n2 - 2.0 * n).abs() < 1e-10);

        // Weight-formula oracle for t >> sigma h.
        let probt = analytic_case(3.1, 10.0, 1.0).unwrap();
        let nt = pressure_norm_poly(&probt, &mesh, &q);
        let hk = mesh.h_k[0];
        let expect = (hk * hk / (hk * hk + 100.0)).sqrt();
        assert!((nt - expect).abs() < 1e-10, "{nt} vs {expect}");
    }

    #[test]
    fn estimator_vanishes_on_exact_in_space_solution() {
        let mut mesh = build_rect_mesh(2, 2, [0.0, 0.0, 1.0, 1.0]).unwrap();
        mesh.retag_boundary(crate::problem::channel_tags);
        let prob = channel_case(0.0).unwrap();
        let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
        let coeffs = interpolate_rh(&|_| [1.0, 0.0], &mesh, &space);
        let p = project_ph(&|x| 0.5 - x[0], &mesh, 2);
        let rep = estimate(
            &coeffs,
            EstimatorPressure::Postprocessed(&p),
            &prob,
            &mesh,
            &space,
            None,
        );
        assert!(rep.eta < 1e-9, "eta = {}", rep.eta);
        assert!(rep.err_total_rel.unwrap() < 1e-10);

        // Pythagoras of the report.
        let parts = (rep.eta_k.iter().map(|v| v * v).sum::<f64>()
            + rep.eta_e.iter().map(|v| v * v).sum::<f64>())
        .sqrt();
        assert!((parts - rep.eta).abs() <= 1e-12 * rep.eta.max(1.0));

        // Darcy limit: the t^2-weighted edge terms are identically zero and
        // the pressure jumps vanish for the continuous exact pressure.
        for &v in &rep.eta_e {
            assert!(v < 1e-10);
        }
    }

    #[test]
    fn hybrid_norm_reduces_to_conforming_for_average_multiplier() {
        let mesh = build_rect_mesh(2, 2, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let prob = analytic_case(3.1, 1.0, 1.0).unwrap();
        let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
        let exact = prob.exact.clone().unwrap();
        let uf = exact.u.clone();
        let coeffs = interpolate_rh(&move |x| uf(x), &mesh, &space);
        let pf = exact.p.clone();
        let pstar = project_ph(&move |x| pf(x), &mesh, 2);

        let none = exact_errors(&prob, &mesh, &space, &coeffs, &pstar, None);

        // Multiplier = tangential trace average per interior edge: each
        // per-side mismatch is half the jump, so the edge energy halves.
        let erule = crate::quad::edge_rule_data();
        let per_edge: Vec<Option<[f64; 2]>> = (0..mesh.n_edges())
            .map(|e| {
                let edge = &mesh.edges[e];
                edge.right.map(|kr| {
                    let a = mesh.vertices[edge.verts[0]];
                    let b = mesh.vertices[edge.verts[1]];
                    let mut c0 = 0.0;
                    let mut c1 = 0.0;
                    for &(s, w) in &erule {
                        let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                        let vl = space.eval_velocity(&mesh, &coeffs, edge.left, x);
                        let vr = space.eval_velocity(&mesh, &coeffs, kr, x);
                        let avg = 0.5
                            * ((vl[0] + vr[0]) * edge.tangent[0]
                                + (vl[1] + vr[1]) * edge.tangent[1]);
                        c0 += w * avg;
                        c1 += w * avg * (2.0 * s - 1.0) * 3.0;
                    }
                    [c0, c1]
                })
            })
            .collect();
        let m = TangentialMultiplier { per_edge };
        let with_m = exact_errors(&prob, &mesh, &space, &coeffs, &pstar, Some(&m));
        assert!(with_m.err_u <= none.err_u + 1e-12);
        assert!(with_m.err_u >= 0.5 * none.err_u - 1e-12);
    }
}
