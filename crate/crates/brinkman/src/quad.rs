//! Quadrature rules on the reference triangle and the unit interval.
//!
//! Triangle rules are collapsed tensor-product Gauss rules (Duffy map),
//! so exactness for a requested polynomial degree follows directly from
//! the 1D Gauss exactness and is verified against monomial integrals in
//! the tests. Edge rules are plain Gauss-Legendre on [0, 1].

/// A quadrature point on the reference triangle {x, y >= 0, x + y <= 1}.
#[derive(Clone, Copy, Debug)]
pub struct TriQuadPoint {
    pub x: f64,
    pub y: f64,
    /// Weight; the weights of a rule sum to 1/2 (reference triangle area).
    pub w: f64,
}

/// Gauss-Legendre nodes and weights on [0, 1], computed by Newton iteration
/// on the Legendre polynomial. Machine-precision for the sizes used here.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1 && n <= 64, "gauss rule size out of range");
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Initial guess (Chebyshev-like) on [-1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_deriv(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map from [-1, 1] to [0, 1].
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Rule on the reference triangle exact for polynomials of total degree `deg`.
pub fn triangle_rule(deg: usize) -> Vec<TriQuadPoint> {
    // Duffy map x = xi*(1-eta), y = eta introduces an extra (1-eta) factor,
    // so the eta direction needs one more degree of exactness.
    let n = (deg + 3) / 2;
    let g = gauss_legendre_unit(n);
    let mut pts = Vec::with_capacity(n * n);
    for &(eta, weta) in &g {
        for &(xi, wxi) in &g {
            pts.push(TriQuadPoint {
                x: xi * (1.0 - eta),
                y: eta,
                w: wxi * weta * (1.0 - eta),
            });
        }
    }
    pts
}

/// Default interior rule for polynomial integrands (mass matrices, traces).
pub fn tri_rule_poly() -> Vec<TriQuadPoint> {
    triangle_rule(4)
}

/// High-order interior rule for non-polynomial data (r^beta fields, boundary layers).
pub fn tri_rule_data() -> Vec<TriQuadPoint> {
    triangle_rule(10)
}

/// Default edge rule for polynomial integrands.
pub fn edge_rule_poly() -> Vec<(f64, f64)> {
    gauss_legendre_unit(4)
}

/// High-order edge rule for data terms.
pub fn edge_rule_data() -> Vec<(f64, f64)> {
    gauss_legendre_unit(10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_integral(a: u32, b: u32) -> f64 {
        // int_T x^a y^b = a! b! / (a + b + 2)!
        let fact = |k: u32| (1..=k).map(|v| v as f64).product::<f64>().max(1.0);
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn triangle_rules_integrate_monomials_exactly() {
        for deg in [2usize, 4, 6, 10] {
            let rule = triangle_rule(deg);
            for a in 0..=deg as u32 {
                for b in 0..=(deg as u32 - a) {
                    let num: f64 = rule
                        .iter()
                        .map(|q| q.w * q.x.powi(a as i32) * q.y.powi(b as i32))
                        .sum();
                    let exact = monomial_integral(a, b);
                    assert!(
                        (num - exact).abs() < 1e-14,
                        "deg {deg} monomial x^{a} y^{b}: {num} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn gauss_rules_integrate_powers_exactly() {
        for n in 1..=12usize {
            let g = gauss_legendre_unit(n);
            let wsum: f64 = g.iter().map(|p| p.1).sum();
            assert!((wsum - 1.0).abs() < 1e-14);
            for k in 0..(2 * n) as u32 {
                let num: f64 = g.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((num - exact).abs() < 1e-13, "n={n} k={k}: {num} vs {exact}");
            }
        }
    }
}
