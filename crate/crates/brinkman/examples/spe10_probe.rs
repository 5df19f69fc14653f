use brinkman::adapt::MarkingStrategy;
use brinkman::bench::{run_spe10, FlowModel};
use brinkman::spe10::{load_spe10, write_synthetic_file, Spe10Modification};

fn main() {
    let dir = std::env::temp_dir().join("spe10_probe");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("perm.dat");
    if !path.exists() {
        write_synthetic_file(&path).unwrap();
    }
    let p = path.to_str().unwrap();

    // Piercing crack with the staged schedule, both models, to 1e5 dofs.
    let mut flows = Vec::new();
    for model in [FlowModel::Darcy, FlowModel::Brinkman] {
        let start = std::time::Instant::now();
        let raster = load_spe10(p, 68, Spe10Modification::PiercingCrack).unwrap();
        let series = run_spe10(&raster, model, MarkingStrategy::staged_default(), 100_000, 1.0).unwrap();
        let last = series.levels.last().unwrap();
        let crack_regime = series
            .final_regime
            .iter()
            .zip(&series.final_sigma2)
            .filter(|(_, &s2)| s2 < 1.0)
            .map(|(r, _)| *r)
            .fold(f64::NEG_INFINITY, f64::max);
        println!(
            "piercing {}: levels={} N={} flow={:.6e} m3/s ({:.3e} ft3/day) max crack t/(sigma h)={:.3} change={:.4} [{:?}]",
            model.label(),
            series.levels.len(),
            last.0,
            last.1,
            last.2,
            crack_regime,
            series.final_relative_change(),
            start.elapsed()
        );
        flows.push(last.1);
    }
    println!("darcy/brinkman flow ratio = {:.3e}", flows[0] / flows[1]);
}
