use brinkman::adapt::{solve_level, AdaptOptions, MarkingStrategy, StopRule};
use brinkman::mesh::build_rect_mesh;
use brinkman::problem::analytic_case;
use brinkman::quad::{edge_rule_data, tri_rule_data};
use brinkman::spaces::{project_ph, ElementGeometry, FamilyOrder};
use brinkman::estimate::velocity_norm_field;

fn main() {
    for t in [1e-6, 1.0, 1e3] {
        let problem = analytic_case(3.1, t, 1.0).unwrap();
        let exact = problem.exact.clone().unwrap();
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for i in 0..5 {
            let nx = 1usize << (2 + i);
            let mesh = build_rect_mesh(nx, nx, [0.0, 0.0, 1.0, 1.0]).unwrap();
            let opts = AdaptOptions::new(
                FamilyOrder::bdm1(),
                MarkingStrategy::threshold_average(),
                StopRule::Levels(0),
            );
            let state = solve_level(&problem, &mesh, &opts, 0).unwrap();
            // ||| P_h p - p_h |||: piecewise constants, jump terms only.
            let pf = exact.p.clone();
            let php = project_ph(&move |x| pf(x), &mesh, 0);
            let erule = edge_rule_data();
            let mut jump2 = 0.0;
            for e in mesh.interior_edges() {
                let edge = &mesh.edges[e];
                let sb = brinkman::problem::sigma_bar_sq(&problem.sigma, &mesh, e);
                let w_e = edge.length / (sb * edge.length * edge.length + t * t);
                let dl = php.eval(edge.left, edge.midpoint) - state.solution.p[edge.left];
                let dr = php.eval(edge.right.unwrap(), edge.midpoint)
                    - state.solution.p[edge.right.unwrap()];
                let j = dl - dr;
                let mut acc = 0.0;
                for &(_, w) in &erule {
                    acc += w * edge.length * j * j;
                }
                jump2 += w_e * acc;
            }
            let err_u = state.report.err_u.unwrap();
            let total = (err_u * err_u + jump2).sqrt();
            // Normalize by the exact velocity norm.
            let uf = exact.u.clone();
            let gf = exact.grad_u.clone();
            let nu = velocity_norm_field(&problem, &mesh, &move |x| uf(x), &move |x| gf(x));
            errs.push(total / nu);
            hs.push(mesh.h_max());
            let _ = tri_rule_data();
            let _ = ElementGeometry::from_vertices(mesh.tri_vertices(0));
        }
        let (pw, fit) = brinkman::bench::compute_rates(&errs, &hs).unwrap();
        println!("t={t}: apriori-quantity fit={fit:.4} pairwise={pw:?} errs={errs:?}");
    }
}
