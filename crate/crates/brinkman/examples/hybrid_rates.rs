use brinkman::bench::{run_cond_study, run_convergence_hybrid, ConvergenceOpts};
use brinkman::hybrid::SkeletonMode;

fn main() {
    let start = std::time::Instant::now();
    for t in [1e-6, 1e3] {
        for mode in [SkeletonMode::Full, SkeletonMode::Dd(16)] {
            let opts = ConvergenceOpts::uniform(3.1, t, 4);
            let table = run_convergence_hybrid(&opts, mode).unwrap();
            let eu: Vec<f64> = table.reports.iter().map(|r| r.err_u.unwrap()).collect();
            let (pw_u, fit_u) = brinkman::bench::compute_rates(
                &eu,
                &table.reports.iter().map(|r| r.h_max).collect::<Vec<_>>(),
            )
            .unwrap();
            println!(
                "t={t} {}: total fit={:.4} err_u fit={:.4} pw_u={:?}",
                mode.label(),
                table.fit_rate_err,
                fit_u,
                pw_u
            );
        }
    }
    println!("convergence elapsed {:?}", start.elapsed());

    let start = std::time::Instant::now();
    let rows = run_cond_study(&[16], &[10.0, 100.0, 1000.0], 4).unwrap();
    for (nsub, t, n, lo, hi, kappa) in &rows {
        println!("nsub={nsub} t={t:.0e} n={n} lo={lo:.3e} hi={hi:.3e} kappa={kappa:.3e}");
    }
    let logk: Vec<f64> = rows.iter().map(|r| r.5.ln()).collect();
    let logt: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let slope = (logk[2] - logk[0]) / (logt[2] - logt[0]);
    println!("kappa-vs-t slope = {slope:.3}");

    let rows0 = run_cond_study(&[4, 16, 64], &[0.0], 4).unwrap();
    for (nsub, t, n, lo, hi, kappa) in &rows0 {
        println!("nsub={nsub} t={t:.0e} n={n} lo={lo:.3e} hi={hi:.3e} kappa={kappa:.3e}");
    }
    println!("cond elapsed {:?}", start.elapsed());
}
