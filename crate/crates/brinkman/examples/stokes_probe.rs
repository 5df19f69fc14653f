use brinkman::bench::{run_convergence, ConvergenceOpts};

fn main() {
    for alpha in [4.0, 10.0, 40.0] {
        let mut opts = ConvergenceOpts::uniform(3.1, 1e3, 5);
        opts.alpha = alpha;
        let table = run_convergence(&opts).unwrap();
        let eu: Vec<f64> = table.reports.iter().map(|r| r.err_u.unwrap()).collect();
        let ep: Vec<f64> = table.reports.iter().map(|r| r.err_p.unwrap()).collect();
        println!(
            "alpha={alpha}: fit={:.4} err_u={:.3e}..{:.3e} err_p={:.3e}..{:.3e}",
            table.fit_rate_err, eu[0], eu[4], ep[0], ep[4]
        );
    }
    for t in [1e1, 1e2] {
        let opts = ConvergenceOpts::uniform(3.1, t, 5);
        let table = run_convergence(&opts).unwrap();
        println!("t={t}: fit={:.4} pairwise={:?}", table.fit_rate_err, table.rate_err);
    }
}
