use brinkman::adapt::MarkingStrategy;
use brinkman::bench::run_channel;

fn main() {
    for (t, budget) in [(0.5, 60000), (0.05, 60000), (0.005, 60000)] {
        let start = std::time::Instant::now();
        let mut meshes = Vec::new();
        let table = run_channel(t, MarkingStrategy::threshold_average(), budget, |lvl, mesh, _| {
            meshes.push((lvl, mesh.clone()));
        })
        .unwrap();
        let errs: Vec<f64> = table.reports.iter().map(|r| r.err_total_rel.unwrap()).collect();
        let ns: Vec<usize> = table.reports.iter().map(|r| r.n_dofs).collect();
        // Tail fit over the last window where the error decreases.
        let tail = 6.min(errs.len());
        let e_tail = &errs[errs.len() - tail..];
        let h_tail: Vec<f64> = ns[ns.len() - tail..]
            .iter()
            .map(|&n| 1.0 / (n as f64).sqrt())
            .collect();
        let (_, slope) = brinkman::bench::compute_rates(e_tail, &h_tail).unwrap();
        // Wall fraction over the final 3 refinements.
        let mut newcount = 0usize;
        let mut nearwall = 0usize;
        for w in meshes.windows(2).skip(meshes.len().saturating_sub(4)) {
            let (prev, cur) = (&w[0].1, &w[1].1);
            let mut children = vec![0usize; prev.n_triangles()];
            for &p in &cur.lineage {
                children[p] += 1;
            }
            for k in 0..cur.n_triangles() {
                if children[cur.lineage[k]] > 1 {
                    newcount += 1;
                    let c = cur.centroid(k);
                    if c[1].min(1.0 - c[1]) <= 3.0 * t {
                        nearwall += 1;
                    }
                }
            }
        }
        println!(
            "t={t}: levels={} N={}..{} err={:.3e}..{:.3e} full-slope={:.3} tail-slope={:.3} wall={:.2} [{:?}]",
            errs.len(), ns[0], ns[ns.len()-1], errs[0], errs[errs.len()-1],
            table.fit_rate_err, slope, nearwall as f64 / newcount.max(1) as f64,
            start.elapsed()
        );
    }
}
