use brinkman::assembly::NitscheConfig;
use brinkman::hybrid::{build_hybrid_system, make_full_skeleton, solve_hybrid, SkeletonMode};
use brinkman::mesh::{build_rect_mesh, BoundaryTag};
use brinkman::problem::{analytic_case, BoundaryCondition};
use brinkman::spaces::{interpolate_rh, FamilyOrder, Space};
use std::sync::Arc;

fn main() {
    let t = 1.0;
    let mut prob = analytic_case(3.1, t, 1.0).unwrap();
    prob.f = Arc::new(|_| [1.0, 0.0]);
    prob.g = Arc::new(|_| 0.0);
    prob.exact = None;
    prob.boundary.clear();
    prob.boundary.insert(
        BoundaryTag::GenericDirichlet,
        BoundaryCondition::Velocity { data: Arc::new(|_| [1.0, 0.0]), nitsche_tangential: true },
    );
    let mesh = build_rect_mesh(1, 1, [0.0, 0.0, 1.0, 1.0]).unwrap();
    let space = Space::new(&mesh, FamilyOrder::bdm1()).unwrap();
    let config = NitscheConfig::default();
    let skel = make_full_skeleton(&mesh);
    let blocks = build_hybrid_system(&prob, &mesh, &space, &config, &skel).unwrap();

    // Exact values: u = interpolant of (1,0) on free dofs; p=0; lambda=0;
    // m_scaled = t * u.tau per skeleton edge.
    let exact_u = interpolate_rh(&|_| [1.0, 0.0], &mesh, &space);
    println!("n_lambda={} n_m={} groups={}", blocks.n_lambda, blocks.n_m, blocks.groups.len());
    for (gi, g) in blocks.groups.iter().enumerate() {
        println!("group {gi}: elements {:?} n_u={} f={:?}", g.elements, g.u_dofs.len(), g.f.as_slice());
        println!("  c: {:?}", g.c);
        println!("  d: {:?}", g.d);
    }
    // Manual residual of the u-rows at the exact solution.
    // Build full vectors: need mapping from group-local to what dof means.
    // Instead solve and compare pieces.
    let hyb = solve_hybrid(&prob, &mesh, &space, &config, SkeletonMode::Full).unwrap();
    println!("mismatch={:.3e}", hyb.normal_mismatch);
    for e in 0..mesh.n_edges() {
        let edge = &mesh.edges[e];
        println!(
            "edge {e}: interior={} n=({:+.2},{:+.2}) tau=({:+.2},{:+.2})",
            !edge.is_boundary(), edge.normal[0], edge.normal[1], edge.tangent[0], edge.tangent[1]
        );
        for j in 0..2 {
            let d = space.dofs.u_dof(e, j);
            println!("  moment {j}: exact={:+.6e} hybrid={:+.6e}", exact_u[d], hyb.u[d]);
        }
    }
    println!("p = {:?}", hyb.p);
    println!("lambda = {:?}", hyb.lambda);
    println!("m_scaled = {:?}", hyb.m_scaled);
    let tau = mesh.edges[mesh.interior_edges().next().unwrap()].tangent;
    println!("expected m_scaled L0 = t * tau.x = {:.6}", t * tau[0]);
}
