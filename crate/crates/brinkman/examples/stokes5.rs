use brinkman::bench::{run_convergence, ConvergenceOpts};
fn main() {
    for t in [1e3, 1e-6] {
        let opts = ConvergenceOpts::uniform(3.1, t, 5);
        let start = std::time::Instant::now();
        let table = run_convergence(&opts).unwrap();
        println!("t = {t}: elapsed {:?}", start.elapsed());
        for (i, r) in table.reports.iter().enumerate() {
            println!(
                "  level {i}: N={} err_u={:.4e} err_p={:.4e} rel={:.6e} eta={:.4e} eff={:.3}",
                r.n_dofs, r.err_u.unwrap(), r.err_p.unwrap(),
                r.err_total_rel.unwrap(), r.eta, r.effectivity.unwrap()
            );
        }
        println!("  pairwise: {:?}", table.rate_err);
        println!("  fit: {:.4}  eta fit: {:.4}  eff spread: {:.3}", table.fit_rate_err, table.fit_rate_eta, table.effectivity_spread());
    }
}
