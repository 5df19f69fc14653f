//! Elementwise pressure postprocessing into the augmented space (degree
//! k+1 for BDM, k for RT): the elementwise mean is constrained to the raw
//! pressure and the gradient matches the momentum residual projection.

use crate::mesh::Mesh;
use crate::problem::BrinkmanProblem;
use crate::quad::tri_rule_data;
use crate::spaces::{monomial_exponents, n_monomials, ElementGeometry, ElementPoly, Space};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PostprocessError {
    #[error("singular local postprocessing system on element {0}")]
    SingularLocal(usize),
}

/// Wrap the piecewise-constant pressure coefficients as a degree-0 field.
pub fn pressure_to_poly(mesh: &Mesh, p: &[f64]) -> ElementPoly {
    let mut poly = ElementPoly::zeros(mesh, 0);
    for (k, &v) in p.iter().enumerate() {
        poly.coeffs[k][0] = v;
    }
    poly
}

/// Elementwise postprocessed pressure: per element solve the small dense
/// system with the mean constraint as the first row and the gradient
/// equations against the non-constant test monomials. The viscous term
/// t^2 Lap u_h is zero elementwise for the degree-1 velocity families but
/// kept in the formula through the (vanishing) element Laplacian.
pub fn postprocess_pressure(
    u_coeffs: &[f64],
    p: &[f64],
    problem: &BrinkmanProblem,
    mesh: &Mesh,
    space: &Space,
) -> Result<ElementPoly, PostprocessError> {
    let degree = space.fam.postprocess_degree();
    let nm = n_monomials(degree);
    let exps = monomial_exponents(degree);
    let rule = tri_rule_data();
    let mut out = ElementPoly::zeros(mesh, degree);

    for k in 0..mesh.n_triangles() {
        let sigma2 = problem.sigma.value(mesh, k);
        let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).expect("nondegenerate");
        let c = out.centers[k];
        let sc = out.scales[k];
        let area = mesh.area(k);

        let mono_val = |m: usize, x: [f64; 2]| -> f64 {
            let (a, b) = exps[m];
            ((x[0] - c[0]) / sc).powi(a as i32) * ((x[1] - c[1]) / sc).powi(b as i32)
        };
        let mono_grad = |m: usize, x: [f64; 2]| -> [f64; 2] {
            let (a, b) = exps[m];
            let xt = (x[0] - c[0]) / sc;
            let yt = (x[1] - c[1]) / sc;
            let mut g = [0.0, 0.0];
            if a > 0 {
                g[0] = a as f64 * xt.powi(a as i32 - 1) * yt.powi(b as i32) / sc;
            }
            if b > 0 {
                g[1] = xt.powi(a as i32) * b as f64 * yt.powi(b as i32 - 1) / sc;
            }
            g
        };

        let mut mat = DMatrix::zeros(nm, nm);
        let mut rhs = DVector::zeros(nm);
        for q in &rule {
            let x = geom.map_point([q.x, q.y]);
            let w = q.w * geom.det.abs();
            // Mean constraint row.
            for m in 0..nm {
                mat[(0, m)] += w / area * mono_val(m, x);
            }
            // Gradient rows against the non-constant monomials.
            let uh = space.eval_velocity(mesh, u_coeffs, k, x);
            let fv = (problem.f)(x);
            let resid = [fv[0] - sigma2 * uh[0], fv[1] - sigma2 * uh[1]];
            for i in 1..nm {
                let gi = mono_grad(i, x);
                for m in 0..nm {
                    let gm = mono_grad(m, x);
                    mat[(i, m)] += w * (gm[0] * gi[0] + gm[1] * gi[1]);
                }
                rhs[i] += w * (resid[0] * gi[0] + resid[1] * gi[1]);
            }
        }
        rhs[0] = p[k];
        let sol = mat
            .lu()
            .solve(&rhs)
            .ok_or(PostprocessError::SingularLocal(k))?;
        out.coeffs[k] = sol.iter().cloned().collect();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;
    use crate::problem::{analytic_case, channel_case, SigmaField};
    use crate::spaces::{interpolate_rh, project_ph, FamilyOrder, Space};
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn mean_preservation_and_polynomial_reproduction() {
        let mesh = build_rect_mesh(3, 2, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();

        // u constant, p linear, f = sigma^2 u + grad p: the postprocessed
        // pressure reproduces p exactly while p_h is only its mean.
        let mut prob = channel_case(0.0).unwrap();
        prob.sigma = SigmaField::Constant(1.0);
        prob.f = std::sync::Arc::new(|_| [0.0, 0.0]); // sigma^2 (1,0) + (-1,0)
        let u_coeffs = interpolate_rh(&|_| [1.0, 0.0], &mesh, &space);
        let p_means = project_ph(&|x| 0.5 - x[0], &mesh, 0);
        let p_h: Vec<f64> = (0..mesh.n_triangles())
            .map(|k| p_means.eval(k, mesh.centroid(k)))
            .collect();
        let pstar = postprocess_pressure(&u_coeffs, &p_h, &prob, &mesh, &space).unwrap();
        for k in 0..mesh.n_triangles() {
            for pt in [mesh.centroid(k), mesh.tri_vertices(k)[0]] {
                let got = pstar.eval(k, pt);
                let want = 0.5 - pt[0];
                assert!((got - want).abs() < 1e-10, "element {k}: {got} vs {want}");
            }
        }

        // Mean preservation on arbitrary data.
        let prob = analytic_case(3.1, 0.5, 1.0).unwrap();
        let u_coeffs = interpolate_rh(&|x: [f64; 2]| [x[1].sin(), x[0]], &mesh, &space);
        let p_h: Vec<f64> = (0..mesh.n_triangles()).map(|k| (k as f64) * 0.3 - 1.0).collect();
        let pstar = postprocess_pressure(&u_coeffs, &p_h, &prob, &mesh, &space).unwrap();
        let rule = tri_rule_data();
        for k in 0..mesh.n_triangles() {
            let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).unwrap();
            let mut mean = 0.0;
            for q in &rule {
                let x = geom.map_point([q.x, q.y]);
                mean += q.w * geom.det.abs() * pstar.eval(k, x);
            }
            mean /= mesh.area(k);
            assert!((mean - p_h[k]).abs() < 1e-12, "element {k}");
        }
    }

    #[test]
    fn darcy_local_fit_matches_least_squares_oracle() {
        // t = 0, f = 0, sigma = 1: the gradient equations make grad p* the
        // elementwise L2-projection of -u_h; cross-check with an SVD
        // least-squares fit on quadrature samples.
        let mesh = build_rect_mesh(2, 2, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
        let mut prob = channel_case(0.0).unwrap();
        prob.f = std::sync::Arc::new(|_| [0.0, 0.0]);
        prob.sigma = SigmaField::Constant(1.0);
        let u_coeffs = interpolate_rh(&|x: [f64; 2]| [x[0] * x[1], -x[1]], &mesh, &space);
        let p_h = vec![0.0; mesh.n_triangles()];
        let pstar = postprocess_pressure(&u_coeffs, &p_h, &prob, &mesh, &space).unwrap();

        let rule = tri_rule_data();
        let exps = monomial_exponents(2);
        for k in 0..mesh.n_triangles() {
            let geom = ElementGeometry::from_vertices(mesh.tri_vertices(k)).unwrap();
            let c = pstar.centers[k];
            let sc = pstar.scales[k];
            // Least squares over the 5 non-constant monomials.
            let npts = rule.len();
            let mut a = DMatrix::zeros(2 * npts, 5);
            let mut b = DVector::zeros(2 * npts);
            for (qi, q) in rule.iter().enumerate() {
                let x = geom.map_point([q.x, q.y]);
                let w = (q.w * geom.det.abs()).sqrt();
                let uh = space.eval_velocity(&mesh, &u_coeffs, k, x);
                b[2 * qi] = -w * uh[0];
                b[2 * qi + 1] = -w * uh[1];
                for (m, &(ea, eb)) in exps.iter().enumerate().skip(1) {
                    let xt = (x[0] - c[0]) / sc;
                    let yt = (x[1] - c[1]) / sc;
                    let gx = if ea > 0 {
                        ea as f64 * xt.powi(ea as i32 - 1) * yt.powi(eb as i32) / sc
                    } else {
                        0.0
                    };
                    let gy = if eb > 0 {
                        xt.powi(ea as i32) * eb as f64 * yt.powi(eb as i32 - 1) / sc
                    } else {
                        0.0
                    };
                    a[(2 * qi, m - 1)] = w * gx;
                    a[(2 * qi + 1, m - 1)] = w * gy;
                }
            }
            let ls = a.svd(true, true).solve(&b, 1e-12).unwrap();
            for m in 1..6 {
                assert!(
                    (pstar.coeffs[k][m] - ls[m - 1]).abs() < 1e-9,
                    "element {k} monomial {m}: {} vs {}",
                    pstar.coeffs[k][m],
                    ls[m - 1]
                );
            }
        }
    }

    #[test]
    fn rt_family_uses_degree_one() {
        let mesh = build_rect_mesh(2, 2, [0.0, 0.0, 1.0, 1.0]).unwrap();
        let space = Space::new(&mesh, FamilyOrder::rt1()).unwrap();
        let prob = analytic_case(3.1, 0.0, 1.0).unwrap();
        let u_coeffs = vec![0.0; space.dofs.n_u];
        let p_h = vec![1.0; mesh.n_triangles()];
        let pstar = postprocess_pressure(&u_coeffs, &p_h, &prob, &mesh, &space).unwrap();
        assert_eq!(pstar.degree, 1);
        assert_eq!(pstar.coeffs[0].len(), 3);
    }
}
