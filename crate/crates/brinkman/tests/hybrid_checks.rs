//! Hybridization checks: dense condensation algebra, equivalence with the
//! conforming solver, skeleton definiteness, multiplier recovery, and the
//! domain-decomposition skeleton machinery.

use brinkman::assembly::{NitscheConfig, SaddleSystem};
use brinkman::hybrid::{
    build_hybrid_system, build_hybrid_system_with, condensed_skeleton_matrix, make_dd_skeleton,
    make_full_skeleton, solve_hybrid, solve_hybrid_direct, subdomain_mass_defect, SkeletonMode,
    TangentialCoupling,
};
use brinkman::mesh::{build_rect_mesh, BoundaryTag};
use brinkman::problem::{analytic_case, channel_case, channel_tags, BoundaryCondition};
use brinkman::solve::solve_saddle;
use brinkman::spaces::{FamilyOrder, Space};
use nalgebra::DMatrix;
use std::sync::Arc;

const UNIT: [f64; 4] = [0.0, 0.0, 1.0, 1.0];

fn constant_field_problem(t: f64) -> brinkman::problem::BrinkmanProblem {
    let mut prob = analytic_case(3.1, t, 1.0).unwrap();
    prob.f = Arc::new(|_| [1.0, 0.0]);
    prob.g = Arc::new(|_| 0.0);
    prob.exact = Some(brinkman::problem::ExactSolution {
        u: Arc::new(|_| [1.0, 0.0]),
        grad_u: Arc::new(|_| [[0.0, 0.0], [0.0, 0.0]]),
        p: Arc::new(|_| 0.0),
        grad_p: Arc::new(|_| [0.0, 0.0]),
    });
    prob.boundary.clear();
    prob.boundary.insert(
        BoundaryTag::GenericDirichlet,
        BoundaryCondition::Velocity {
            data: Arc::new(|_| [1.0, 0.0]),
            nitsche_tangential: true,
        },
    );
    prob
}

#[test]
fn dense_condensation_identities_on_one_element() {
    // H' = A^{-1} - A^{-1}B'S^{-1}BA^{-1} satisfies B H' = 0 and
    // H' A H' = H' (the paper's H is its negative).
    let mesh = build_rect_mesh(1, 1, UNIT).unwrap();
    let prob = channel_case(0.0).unwrap();
    let mut mesh = mesh;
    mesh.retag_boundary(channel_tags);
    let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
    let skel = make_full_skeleton(&mesh);
    let blocks =
        build_hybrid_system(&prob, &mesh, &space, &NitscheConfig::default(), &skel).unwrap();
    let g = &blocks.groups[0];
    let nu = g.a.nrows();
    let a_inv = g.a.clone().try_inverse().unwrap();
    let s = &g.b * &a_inv * g.b.transpose();
    let s_inv = s.try_inverse().unwrap();
    let hprime = &a_inv - &a_inv * g.b.transpose() * s_inv * &g.b * &a_inv;

    let bh = &g.b * &hprime;
    assert!(bh.amax() < 1e-12, "B H' = {:.3e}", bh.amax());
    let hah = &hprime * &g.a * &hprime;
    let diff = &hah - &hprime;
    assert!(diff.amax() < 1e-12, "H'AH' - H' = {:.3e}", diff.amax());

    // H' is positive semidefinite with rank nu - np.
    let eig = nalgebra::SymmetricEigen::new(hprime.clone());
    let mut negs = 0;
    let mut zeros = 0;
    for &l in eig.eigenvalues.iter() {
        if l < -1e-10 {
            negs += 1;
        } else if l.abs() < 1e-10 {
            zeros += 1;
        }
    }
    assert_eq!(negs, 0);
    assert_eq!(zeros, g.b.nrows());
    assert_eq!(nu, g.a.ncols());
}

#[test]
fn darcy_skeleton_is_spd_and_matches_conforming() {
    let mut mesh = build_rect_mesh(2, 2, UNIT).unwrap();
    mesh.retag_boundary(channel_tags);
    let prob = channel_case(0.0).unwrap();
    let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
    let config = NitscheConfig::default();
    let skel = make_full_skeleton(&mesh);
    let blocks = build_hybrid_system(&prob, &mesh, &space, &config, &skel).unwrap();
    let (mat, _) = condensed_skeleton_matrix(&blocks).unwrap();
    assert!(mat.symmetry_error() < 1e-12);

    // SPD on 100 deterministic pseudo-random vectors.
    let mut dense = DMatrix::<f64>::zeros(mat.n, mat.n);
    for i in 0..mat.n {
        for p in mat.row_ptr[i]..mat.row_ptr[i + 1] {
            dense[(i, mat.col_idx[p])] = mat.vals[p];
        }
    }
    for s in 0..100 {
        let x = nalgebra::DVector::from_iterator(
            mat.n,
            (0..mat.n).map(|i| ((i * 13 + s * 7 + 1) as f64 * 0.831).sin()),
        );
        let q = x.dot(&(&dense * &x));
        assert!(q > 0.0, "sample {s}: x'Sx = {q}");
    }

    // At t = 0 the lambda/tangential coupling block vanishes.
    let nl = blocks.n_lambda;
    for i in 0..nl {
        for p in mat.row_ptr[i]..mat.row_ptr[i + 1] {
            assert!(mat.col_idx[p] < nl, "coupling into the tangential block at t=0");
        }
    }

    // Equivalence with the conforming solution.
    let system = SaddleSystem::build(&prob, &mesh, &space, &config).unwrap();
    let conf = solve_saddle(&system, 1e-10).unwrap();
    let hyb = solve_hybrid(&prob, &mesh, &space, &config, SkeletonMode::Full).unwrap();
    assert!(hyb.normal_mismatch < 1e-8, "normal mismatch {}", hyb.normal_mismatch);
    for (a, b) in hyb.u.iter().zip(&conf.u) {
        assert!((a - b).abs() < 1e-8, "u: {a} vs {b}");
    }
    for (a, b) in hyb.p.iter().zip(&conf.p) {
        assert!((a - b).abs() < 1e-8, "p: {a} vs {b}");
    }
}

#[test]
fn lambda_only_hybridization_reproduces_conforming_brinkman() {
    // Normal-continuity hybridization is exact for every t when the
    // tangential terms keep the conforming form.
    let prob = analytic_case(3.1, 0.7, 1.0).unwrap();
    let mesh = build_rect_mesh(3, 3, UNIT).unwrap();
    let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
    let config = NitscheConfig::default();
    let system = SaddleSystem::build(&prob, &mesh, &space, &config).unwrap();
    let conf = solve_saddle(&system, 1e-10).unwrap();
    let hyb =
        solve_hybrid_direct(&prob, &mesh, &space, &config, SkeletonMode::Full, true).unwrap();
    assert!(hyb.normal_mismatch < 1e-8);
    for (a, b) in hyb.u.iter().zip(&conf.u) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    for (a, b) in hyb.p.iter().zip(&conf.p) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    // Darcy too, through the same direct path.
    let prob0 = constant_field_problem(0.0);
    let hyb0 =
        solve_hybrid_direct(&prob0, &mesh, &space, &config, SkeletonMode::Full, true).unwrap();
    let sys0 = SaddleSystem::build(&prob0, &mesh, &space, &config).unwrap();
    let conf0 = solve_saddle(&sys0, 1e-10).unwrap();
    for (a, b) in hyb0.u.iter().zip(&conf0.u) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn condensed_solution_matches_direct_hybrid_solve() {
    // The condensation path and the full direct solve of the same hybrid
    // formulation agree for t > 0 (both with the scaled multiplier).
    let prob = constant_field_problem(1.0);
    let mesh = build_rect_mesh(2, 2, UNIT).unwrap();
    let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
    let config = NitscheConfig::default();
    let cond = solve_hybrid(&prob, &mesh, &space, &config, SkeletonMode::Full).unwrap();
    let direct =
        solve_hybrid_direct(&prob, &mesh, &space, &config, SkeletonMode::Full, false).unwrap();
    for (a, b) in cond.u.iter().zip(&direct.u) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    for (a, b) in cond.p.iter().zip(&direct.p) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    for (a, b) in cond.m_scaled.iter().zip(&direct.m_scaled) {
        assert!((a - b).abs() < 1e-8, "m: {a} vs {b}");
    }
}

#[test]
fn constant_field_recovers_scaled_tangential_average() {
    // At the exact constant solution the scaled multiplier is t times the
    // tangential trace.
    let t = 1.0;
    let prob = constant_field_problem(t);
    let mesh = build_rect_mesh(2, 2, UNIT).unwrap();
    let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
    let config = NitscheConfig::default();
    let hyb = solve_hybrid(&prob, &mesh, &space, &config, SkeletonMode::Full).unwrap();

    // The discrete solution is exact: u = (1, 0) everywhere.
    let exact = brinkman::spaces::interpolate_rh(&|_| [1.0, 0.0], &mesh, &space);
    for (a, b) in hyb.u.iter().zip(&exact) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    let m = hyb.m_tangential.as_ref().unwrap();
    for e in mesh.interior_edges() {
        let edge = &mesh.edges[e];
        let want = edge.tangent[0]; // (1,0) . tau
        let got = m.per_edge[e].unwrap();
        assert!((got[0] - want).abs() < 1e-8, "edge {e}: {} vs {want}", got[0]);
        assert!(got[1].abs() < 1e-8);
    }
}

#[test]
fn dd_skeleton_construction() {
    let mesh = build_rect_mesh(4, 4, UNIT).unwrap();

    // One subdomain: empty skeleton.
    let one = make_dd_skeleton(&mesh, 1).unwrap();
    assert_eq!(one.n_skeleton_edges(), 0);

    // Two subdomains: a straight interface cut (either orientation).
    let two = make_dd_skeleton(&mesh, 2).unwrap();
    let mids: Vec<[f64; 2]> = (0..mesh.n_edges())
        .filter(|&e| two.is_skeleton[e])
        .map(|e| mesh.edges[e].midpoint)
        .collect();
    assert!(!mids.is_empty());
    let straight = (0..2).any(|axis| {
        mids.iter().all(|m| (m[axis] - mids[0][axis]).abs() < 1e-12)
    });
    assert!(straight, "skeleton not a straight cut: {mids:?}");

    // Sixteen subdomains: every skeleton edge borders two distinct ones.
    let sixteen = make_dd_skeleton(&mesh, 16).unwrap();
    for e in 0..mesh.n_edges() {
        if sixteen.is_skeleton[e] {
            let edge = &mesh.edges[e];
            assert_ne!(
                sixteen.subdomain_of[edge.left],
                sixteen.subdomain_of[edge.right.unwrap()]
            );
        }
    }
    assert_eq!(sixteen.n_sub, 16);

    // Building a hybrid system on an empty skeleton is rejected.
    let prob = constant_field_problem(0.0);
    let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
    assert!(build_hybrid_system(&prob, &mesh, &space, &NitscheConfig::default(), &one).is_err());
}

#[test]
fn dd_solve_and_subdomain_mass_conservation() {
    let prob = analytic_case(3.1, 1e-6, 1.0).unwrap();
    let mesh = build_rect_mesh(8, 8, UNIT).unwrap();
    let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
    let config = NitscheConfig::default();
    let skel = make_dd_skeleton(&mesh, 4).unwrap();
    let hyb = solve_hybrid(&prob, &mesh, &space, &config, SkeletonMode::Dd(4)).unwrap();

    // Mass conservation over subdomain boundaries (g = 0 here).
    let g = prob.g.clone();
    let defect = subdomain_mass_defect(&mesh, &space, &skel, &hyb.u, &move |x| g(x));
    for d in &defect {
        assert!(d.abs() < 1e-9, "subdomain defect {d}");
    }

    // DD with near-Darcy t reproduces the conforming solution closely
    // (the tangential coupling is t^2-weighted).
    let system = SaddleSystem::build(&prob, &mesh, &space, &config).unwrap();
    let conf = solve_saddle(&system, 1e-10).unwrap();
    for (a, b) in hyb.u.iter().zip(&conf.u) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn degree_zero_tangential_space_still_solvable() {
    // Stability holds for any multiplier space; degree 0 only changes the
    // accuracy, the condensed system stays solvable.
    let prob = constant_field_problem(1.0);
    let mesh = build_rect_mesh(2, 2, UNIT).unwrap();
    let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
    let config = NitscheConfig::default();
    let skel = make_full_skeleton(&mesh);
    let blocks = build_hybrid_system_with(
        &prob,
        &mesh,
        &space,
        &config,
        &skel,
        1,
        TangentialCoupling::Multiplier,
    )
    .unwrap();
    let (mat, rhs) = condensed_skeleton_matrix(&blocks).unwrap();
    assert!(mat.symmetry_error() < 1e-12);
    let coords = vec![[0.0, 0.0]; mat.n];
    let solver = brinkman::sparse::LdlSolver::new(mat, &coords, &[], None, 0.0).unwrap();
    let (x, _, rel) = solver.solve(&rhs).unwrap();
    assert!(rel < 1e-10);
    assert_eq!(x.len(), blocks.n_lambda + blocks.n_m);
}

#[test]
fn hybrid_coercivity_samples() {
    // Quadratic form of the (velocity, scaled-multiplier) block against the
    // hybrid norm with the unscaled multiplier.
    let mesh = build_rect_mesh(2, 2, UNIT).unwrap();
    let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
    let config = NitscheConfig::default();
    for t in [1e-3, 1.0, 10.0] {
        let prob = constant_field_problem(t);
        let skel = make_full_skeleton(&mesh);
        let blocks = build_hybrid_system(&prob, &mesh, &space, &config, &skel).unwrap();
        // Assemble the dense (u, m) quadratic form from the blocks. The
        // groups share multiplier dofs, so accumulate globally. Dirichlet
        // dofs are eliminated; the free hybrid dofs are what remains.
        let nu: usize = blocks.groups.iter().map(|g| g.u_dofs.len()).sum();
        let nm = blocks.n_m;
        let mut quad = DMatrix::<f64>::zeros(nu + nm, nu + nm);
        let mut offset = 0;
        for g in &blocks.groups {
            let n = g.u_dofs.len();
            for i in 0..n {
                for j in 0..n {
                    quad[(offset + i, offset + j)] += g.a[(i, j)];
                }
            }
            for &(r, c, v) in &g.d {
                quad[(nu + r, offset + c)] += v;
                quad[(offset + c, nu + r)] += v;
            }
            offset += n;
        }
        for &(md, v) in &blocks.m_mass {
            quad[(nu + md, nu + md)] += v;
        }
        let eig = nalgebra::SymmetricEigen::new(quad);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            min > 1e-12,
            "t={t}: hybrid (u, m) block not positive definite: {min}"
        );
    }
}
