use brinkman::bench::{run_convergence, ConvergenceOpts};

#[test]
fn darcy_regime_rate_smoke() {
    let opts = ConvergenceOpts::uniform(3.1, 1e-6, 4);
    let table = run_convergence(&opts).unwrap();
    for (i, r) in table.reports.iter().enumerate() {
        println!(
            "level {i}: N={} h={:.4} rel_err={:.6e} eta={:.6e} eff={:.3}",
            r.n_dofs,
            r.h_max,
            r.err_total_rel.unwrap(),
            r.eta,
            r.effectivity.unwrap()
        );
    }
    println!("pairwise err rates: {:?}", table.rate_err);
    println!("fit rate: {:.4}", table.fit_rate_err);
    assert!((table.fit_rate_err - 2.0).abs() < 0.25, "rate {}", table.fit_rate_err);
}

#[test]
fn stokes_regime_rate_smoke() {
    let opts = ConvergenceOpts::uniform(3.1, 1e3, 4);
    let table = run_convergence(&opts).unwrap();
    for (i, r) in table.reports.iter().enumerate() {
        println!(
            "level {i}: N={} rel_err={:.6e} eta={:.6e} eff={:.3}",
            r.n_dofs,
            r.err_total_rel.unwrap(),
            r.eta,
            r.effectivity.unwrap()
        );
    }
    println!("fit rate: {:.4}", table.fit_rate_err);
    assert!((table.fit_rate_err - 1.0).abs() < 0.25, "rate {}", table.fit_rate_err);
}
