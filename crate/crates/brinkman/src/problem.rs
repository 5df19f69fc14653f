//! Problem data: viscosity parameter, permeability field, loads, boundary
//! conditions and exact solutions for the benchmark cases.

use crate::mesh::{BoundaryTag, Mesh};
use std::collections::HashMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("regularity exponent beta must exceed 1, got {0}")]
    BetaOutOfRange(f64),
    #[error("viscosity parameter t must be nonnegative, got {0}")]
    NegativeT(f64),
}

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn([f64; 2]) -> [[f64; 2]; 2] + Send + Sync>;

/// Inverse-permeability field sigma^2, piecewise constant per element.
#[derive(Clone)]
pub enum SigmaField {
    Constant(f64),
    PerElement(Vec<f64>),
    /// Sampled from a permeability raster at element barycentres; refined
    /// elements automatically pick up their own barycentre value.
    Raster(crate::spe10::PermRaster),
}

impl SigmaField {
    pub fn value(&self, mesh: &Mesh, k: usize) -> f64 {
        match self {
            SigmaField::Constant(c) => *c,
            SigmaField::PerElement(v) => v[k],
            SigmaField::Raster(r) => {
                let c = mesh.centroid(k);
                1.0 / r.permeability_at(c).expect("barycentre inside raster")
            }
        }
    }

    /// Field for a refinement of `old_mesh`; per-element values are inherited
    /// through the lineage, raster fields re-sample at the new barycentres.
    pub fn refined(&self, new_mesh: &Mesh) -> SigmaField {
        match self {
            SigmaField::PerElement(v) => SigmaField::PerElement(
                new_mesh.lineage.iter().map(|&p| v[p]).collect(),
            ),
            other => other.clone(),
        }
    }
}

/// Mean of the two adjacent sigma^2 values on an interior edge; the single
/// adjacent value on the boundary.
pub fn sigma_bar_sq(sigma: &SigmaField, mesh: &Mesh, e: usize) -> f64 {
    let edge = &mesh.edges[e];
    let left = sigma.value(mesh, edge.left);
    match edge.right {
        Some(r) => 0.5 * (left + sigma.value(mesh, r)),
        None => left,
    }
}

/// Largest neighbour ratio of sigma^2 over interior edges (>= 1).
pub fn observed_sigma_ratio(sigma: &SigmaField, mesh: &Mesh) -> f64 {
    let mut worst = 1.0f64;
    for e in mesh.interior_edges() {
        let edge = &mesh.edges[e];
        let a = sigma.value(mesh, edge.left);
        let b = sigma.value(mesh, edge.right.unwrap());
        worst = worst.max((a / b).max(b / a));
    }
    worst
}

/// Boundary condition attached to a tag.
#[derive(Clone)]
pub enum BoundaryCondition {
    /// Velocity data: the normal part is imposed strongly through the edge
    /// moments, the tangential part weakly (Nitsche) when enabled.
    Velocity { data: VectorFn, nitsche_tangential: bool },
    /// Weak pressure datum entering the natural boundary term.
    Pressure { data: ScalarFn },
}

#[derive(Clone)]
pub struct ExactSolution {
    pub u: VectorFn,
    pub grad_u: MatrixFn,
    pub p: ScalarFn,
    pub grad_p: VectorFn,
}

#[derive(Clone)]
pub struct BrinkmanProblem {
    /// Effective-viscosity parameter of the scaled equations.
    pub t: f64,
    pub sigma: SigmaField,
    pub f: VectorFn,
    pub g: ScalarFn,
    pub boundary: HashMap<BoundaryTag, BoundaryCondition>,
    pub exact: Option<ExactSolution>,
}

impl BrinkmanProblem {
    pub fn condition_for(&self, tag: BoundaryTag) -> &BoundaryCondition {
        self.boundary
            .get(&tag)
            .unwrap_or_else(|| panic!("no boundary condition for tag {tag}"))
    }

    /// True when some boundary edge carries a weak pressure datum; the
    /// pressure is then pinned by the data and no zero-mean constraint is
    /// needed.
    pub fn has_pressure_boundary(&self) -> bool {
        self.boundary
            .values()
            .any(|c| matches!(c, BoundaryCondition::Pressure { .. }))
    }
}

/// z^gamma for z = x + i y as (Re, Im); principal branch.
fn complex_pow(x: f64, y: f64, gamma: f64) -> (f64, f64) {
    let r = x.hypot(y);
    if r == 0.0 {
        return if gamma > 0.0 { (0.0, 0.0) } else { (f64::INFINITY, f64::INFINITY) };
    }
    let theta = y.atan2(x);
    let rp = r.powf(gamma);
    ((gamma * theta).cos() * rp, (gamma * theta).sin() * rp)
}

/// Mean of r^beta sin(beta theta) over the unit square, by exact integration
/// in y and composite Gauss in x.
fn corner_pressure_mean(beta: f64) -> f64 {
    let g = crate::quad::gauss_legendre_unit(10);
    let panels = 64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = p as f64 / panels as f64;
        let w = 1.0 / panels as f64;
        for &(s, ws) in &g {
            let x: f64 = a + s * w;
            let (re, _) = complex_pow(x, 1.0, beta + 1.0);
            let h = -(re - x.powf(beta + 1.0)) / (beta + 1.0);
            total += ws * w * h;
        }
    }
    total
}

/// Corner-singularity benchmark on the unit square: p = r^beta sin(beta
/// theta) + C with zero mean, u = grad p (harmonic), g = 0, f = (sigma^2+1)
/// grad p, full velocity Dirichlet data on the boundary.
pub fn analytic_case(beta: f64, t: f64, sigma: f64) -> Result<BrinkmanProblem, ProblemError> {
    if !(beta > 1.0) {
        return Err(ProblemError::BetaOutOfRange(beta));
    }
    if t < 0.0 {
        return Err(ProblemError::NegativeT(t));
    }
    let shift = -corner_pressure_mean(beta);
    let sigma2 = sigma * sigma;

    let grad_p: VectorFn = Arc::new(move |x: [f64; 2]| {
        let (re, im) = complex_pow(x[0], x[1], beta - 1.0);
        [beta * im, beta * re]
    });
    let p: ScalarFn = Arc::new(move |x: [f64; 2]| {
        let (_, im) = complex_pow(x[0], x[1], beta);
        im + shift
    });
    let grad_u: MatrixFn = Arc::new(move |x: [f64; 2]| {
        let c = beta * (beta - 1.0);
        let (re, im) = complex_pow(x[0], x[1], beta - 2.0);
        [[c * im, c * re], [c * re, -c * im]]
    });
    let u = grad_p.clone();
    let f: VectorFn = {
        let grad_p = grad_p.clone();
        Arc::new(move |x| {
            let gp = grad_p(x);
            [(sigma2 + 1.0) * gp[0], (sigma2 + 1.0) * gp[1]]
        })
    };

    let mut boundary = HashMap::new();
    boundary.insert(
        BoundaryTag::GenericDirichlet,
        BoundaryCondition::Velocity { data: u.clone(), nitsche_tangential: true },
    );

    Ok(BrinkmanProblem {
        t,
        sigma: SigmaField::Constant(sigma2),
        f,
        g: Arc::new(|_| 0.0),
        boundary,
        exact: Some(ExactSolution { u: u.clone(), grad_u, p, grad_p }),
    })
}

/// Boundary tagging for the unit-square channel: walls at y = 0, 1; inflow
/// at x = 0; outflow at x = 1.
pub fn channel_tags(mp: [f64; 2]) -> BoundaryTag {
    if mp[1] < 1e-12 || mp[1] > 1.0 - 1e-12 {
        BoundaryTag::Wall
    } else if mp[0] < 1e-12 {
        BoundaryTag::Inflow
    } else {
        BoundaryTag::Outflow
    }
}

/// Pressure-driven channel flow on the unit square with sigma = 1, f = 0,
/// g = 0 and p = 1/2 - x. The closed-form x-velocity is evaluated in an
/// overflow-safe form with only nonpositive exponents.
pub fn channel_case(t: f64) -> Result<BrinkmanProblem, ProblemError> {
    if t < 0.0 {
        return Err(ProblemError::NegativeT(t));
    }
    let ux = move |y: f64| -> f64 {
        if t == 0.0 {
            1.0
        } else {
            let e = (-1.0 / t).exp();
            (1.0 + e - (-y / t).exp() - (-(1.0 - y) / t).exp()) / (1.0 + e)
        }
    };
    let dux = move |y: f64| -> f64 {
        if t == 0.0 {
            0.0
        } else {
            let e = (-1.0 / t).exp();
            ((-y / t).exp() - (-(1.0 - y) / t).exp()) / (t * (1.0 + e))
        }
    };

    let u: VectorFn = Arc::new(move |x: [f64; 2]| [ux(x[1]), 0.0]);
    let grad_u: MatrixFn = Arc::new(move |x: [f64; 2]| [[0.0, dux(x[1])], [0.0, 0.0]]);
    let p: ScalarFn = Arc::new(|x: [f64; 2]| 0.5 - x[0]);
    let grad_p: VectorFn = Arc::new(|_| [-1.0, 0.0]);

    let mut boundary = HashMap::new();
    boundary.insert(
        BoundaryTag::Wall,
        BoundaryCondition::Velocity {
            data: Arc::new(|_| [0.0, 0.0]),
            nitsche_tangential: true,
        },
    );
    boundary.insert(
        BoundaryTag::Inflow,
        BoundaryCondition::Pressure { data: Arc::new(|_| 0.5) },
    );
    boundary.insert(
        BoundaryTag::Outflow,
        BoundaryCondition::Pressure { data: Arc::new(|_| -0.5) },
    );

    Ok(BrinkmanProblem {
        t,
        sigma: SigmaField::Constant(1.0),
        f: Arc::new(|_| [0.0, 0.0]),
        g: Arc::new(|_| 0.0),
        boundary,
        exact: Some(ExactSolution { u, grad_u, p, grad_p }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;
    use crate::quad::tri_rule_data;
    use crate::spaces::ElementGeometry;

    #[test]
    fn sigma_bar_is_the_neighbour_mean() {
        let mesh = build_rect_mesh(1, 1, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let sigma = SigmaField::PerElement(vec![1.0, 4.0]);
        let e = mesh.interior_edges().next().unwrap();
        assert_eq!(sigma_bar_sq(&sigma, &mesh, e), 2.5);
        let c = SigmaField::Constant(9.0);
        for e in 0..mesh.n_edges() {
            assert_eq!(sigma_bar_sq(&c, &mesh, e), 9.0);
        }
        // Mean lies between the neighbour values.
        let vals = vec![0.3, 7.1];
        let s = SigmaField::PerElement(vals.clone());
        let sb = sigma_bar_sq(&s, &mesh, e);
        assert!(sb >= vals[0].min(vals[1]) && sb <= vals[0].max(vals[1]));
    }

    #[test]
    fn analytic_case_structure() {
        assert!(analytic_case(0.9, 1.0, 1.0).is_err());
        let prob = analytic_case(3.1, 1.0, 1.0).unwrap();
        let ex = prob.exact.as_ref().unwrap();
        // Harmonic pressure: g = 0 and u = grad p.
        for pt in [[0.3, 0.7], [0.9, 0.1], [0.5, 0.5]] {
            assert_eq!((prob.g)(pt), 0.0);
            let u = (ex.u)(pt);
            let gp = (ex.grad_p)(pt);
            assert!((u[0] - gp[0]).abs() < 1e-14 && (u[1] - gp[1]).abs() < 1e-14);
            // sigma = 1: f = 2 grad p.
            let f = (prob.f)(pt);
            assert!((f[0] - 2.0 * gp[0]).abs() < 1e-13);
            // Strong-form residual with Delta u = 0.
            let du = (ex.grad_u)(pt);
            assert!((du[0][0] + du[1][1]).abs() < 1e-12, "trace of grad u = div u = 0");
            let resid = [u[0] + gp[0] - f[0], u[1] + gp[1] - f[1]];
            assert!(resid[0].abs() < 1e-12 && resid[1].abs() < 1e-12);
        }
        // grad p really is the gradient of p (finite differences).
        let h = 1e-6;
        for pt in [[0.4, 0.6], [0.8, 0.3]] {
            let gp = (ex.grad_p)(pt);
            let fd0 = ((ex.p)([pt[0] + h, pt[1]]) - (ex.p)([pt[0] - h, pt[1]])) / (2.0 * h);
            let fd1 = ((ex.p)([pt[0], pt[1] + h]) - (ex.p)([pt[0], pt[1] - h])) / (2.0 * h);
            assert!((gp[0] - fd0).abs() < 1e-6 && (gp[1] - fd1).abs() < 1e-6);
        }
    }

    #[test]
    fn analytic_pressure_has_zero_mean() {
        // Degree-10 quadrature oracle on a fine mesh.
        let prob = analytic_case(3.1, 1e-6, 1.0).unwrap();
        let ex = prob.exact.as_ref().unwrap();
        let mesh = build_rect_mesh(128, 128, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let rule = tri_rule_data();
        let mut total = 0.0;
        for k in 0..mesh.n_triangles() {
            let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).unwrap();
            for q in &rule {
                let x = geom.map_point([q.x, q.y]);
                total += q.w * geom.det.abs() * (ex.p)(x);
            }
        }
        assert!(total.abs() < 1e-8, "mean pressure {total}");
    }

    #[test]
    fn channel_exact_solution() {
        assert!(channel_case(-0.1).is_err());

        let darcy = channel_case(0.0).unwrap();
        let ex = darcy.exact.as_ref().unwrap();
        for y in [0.0, 0.25, 0.9] {
            assert_eq!((ex.u)([0.3, y]), [1.0, 0.0]);
        }

        for t in [0.5, 0.05, 0.005, 0.001] {
            let prob = channel_case(t).unwrap();
            let ex = prob.exact.as_ref().unwrap();
            // No-slip at the walls.
            assert!((ex.u)([0.2, 0.0])[0].abs() < 1e-14);
            assert!((ex.u)([0.2, 1.0])[0].abs() < 1e-14);
            // Midline value from the closed form.
            let e = (-1.0 / t as f64).exp();
            let expect = (1.0 + e - 2.0 * (-0.5 / t as f64).exp()) / (1.0 + e);
            assert!(((ex.u)([0.5, 0.5])[0] - expect).abs() < 1e-14);
            // ODE residual -t^2 u'' + u = 1 via finite differences.
            let h = 1e-5;
            for y in [0.21, 0.5, 0.83] {
                let up = (ex.u)([0.0, y + h])[0];
                let um = (ex.u)([0.0, y - h])[0];
                let u0 = (ex.u)([0.0, y])[0];
                let upp = (up - 2.0 * u0 + um) / (h * h);
                assert!(
                    (-t * t * upp + u0 - 1.0).abs() < 1e-4,
                    "t={t} y={y}"
                );
            }
            // grad_u consistent with u.
            let g = (ex.grad_u)([0.1, 0.37]);
            let fd = ((ex.u)([0.1, 0.37 + h])[0] - (ex.u)([0.1, 0.37 - h])[0]) / (2.0 * h);
            assert!((g[0][1] - fd).abs() < 1e-6);
        }
        assert!(channel_case(0.5).unwrap().has_pressure_boundary());
    }
}
