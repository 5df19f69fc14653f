use brinkman::adapt::MarkingStrategy;
use brinkman::bench::{run_channel, run_convergence, ConvergenceOpts};

fn main() {
    // Criterion 5: beta = 1.52 adaptive vs uniform slopes (vs N^{-1/2}).
    let start = std::time::Instant::now();
    let uni = run_convergence(&ConvergenceOpts::uniform(1.52, 1e-6, 5)).unwrap();
    let uni_n = brinkman::bench::ConvergenceTable::from_reports(
        "uniform-vs-n".into(),
        1e-6,
        uni.reports.clone(),
        true,
    );
    let ada = run_convergence(&ConvergenceOpts::adaptive(1.52, 1e-6, 33000)).unwrap();
    println!(
        "criterion5: uniform slope {:.3} adaptive slope {:.3} (levels {}), elapsed {:?}",
        uni_n.fit_rate_err,
        ada.fit_rate_err,
        ada.reports.len(),
        start.elapsed()
    );

    // Criterion 3: regime transition grid.
    let start = std::time::Instant::now();
    let mut global_min = (f64::INFINITY, 0.0f64, 0.0f64); // (rate, t, h_mid)
    for t in [1e-3, 1e-2, 1e-1, 1.0, 10.0] {
        let table = run_convergence(&ConvergenceOpts::uniform(3.1, t, 5)).unwrap();
        for (i, r) in table.rate_err.iter().enumerate() {
            let hmid = (table.reports[i].h_max * table.reports[i + 1].h_max).sqrt();
            if *r < global_min.0 {
                global_min = (*r, t, hmid);
            }
        }
        println!("t={t}: pairwise {:?}", table.rate_err);
    }
    let (rate, t, h) = global_min;
    println!(
        "criterion3: min rate {:.3} at t={t} h_mid={h:.4}, log10(h/t)={:.3}, elapsed {:?}",
        rate,
        (h / t).log10(),
        start.elapsed()
    );

    // Criterion 9: channel runs.
    let start = std::time::Instant::now();
    let mut rates = Vec::new();
    for t in [0.5, 0.05, 0.005] {
        let mut last_meshes = Vec::new();
        let table = run_channel(t, MarkingStrategy::threshold_average(), 12000, |lvl, mesh, _| {
            last_meshes.push((lvl, mesh.clone()));
        })
        .unwrap();
        // Wall-refinement audit over the final 3 levels: fraction of new
        // elements within 3t of the walls.
        let n_levels = last_meshes.len();
        let mut newcount = 0usize;
        let mut nearwall = 0usize;
        for w in last_meshes.windows(2).skip(n_levels.saturating_sub(4)) {
            let (prev, cur) = (&w[0].1, &w[1].1);
            let old_of = &cur.lineage;
            let mut children = vec![0usize; prev.n_triangles()];
            for &p in old_of {
                children[p] += 1;
            }
            for k in 0..cur.n_triangles() {
                if children[old_of[k]] > 1 {
                    newcount += 1;
                    let c = cur.centroid(k);
                    let d = c[1].min(1.0 - c[1]);
                    if d <= 3.0 * t {
                        nearwall += 1;
                    }
                }
            }
        }
        let errs: Vec<f64> = table.reports.iter().map(|r| r.err_total_rel.unwrap()).collect();
        println!(
            "t={t}: slope {:.3} levels {} err0={:.3e} errN={:.3e} wall-frac {:.2}",
            table.fit_rate_err,
            table.reports.len(),
            errs[0],
            errs[errs.len() - 1],
            nearwall as f64 / newcount.max(1) as f64
        );
        rates.push(table.fit_rate_err);
    }
    println!("channel rate spread: {:.3}", rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - rates.iter().cloned().fold(f64::INFINITY, f64::min));
    println!("elapsed {:?}", start.elapsed());

    // Channel t = 0: exact at the coarsest level.
    let table = run_channel(0.0, MarkingStrategy::threshold_average(), 200, |_, _, _| {}).unwrap();
    println!(
        "t=0: err {:.3e} eta {:.3e} levels {}",
        table.reports[0].err_total_rel.unwrap(),
        table.reports[0].eta,
        table.reports.len()
    );
}
