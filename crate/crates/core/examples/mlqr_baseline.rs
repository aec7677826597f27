// Explore/exploit baseline: excite the actual plant, identify it with
// MOESP, then control with the identified model.

use rilqr::experiment::run_mlqr_replica;
use rilqr::ExperimentConfig;

pub fn run_example() -> rilqr::Result<f64> {
    let cfg = ExperimentConfig::default();
    let mut best = f64::INFINITY;
    println!("{:>10} {:>10} {:>10} {:>10}  identified eigenvalues", "var", "snr", "explore", "exploit");
    for &var in &[0.83, 0.08, 1e-3, 3.2e-5] {
        let out = match run_mlqr_replica(&cfg, var, cfg.seed) {
            Ok(out) => out,
            // too little excitation can leave a destabilizing model
            Err(e) => {
                println!("{var:>10.1e}  failed: {e}");
                continue;
            }
        };
        let ev: Vec<String> = out.estimate.eigenvalues().iter().map(|(re, _)| format!("{re:.4}")).collect();
        println!(
            "{var:>10.1e} {:>10.3e} {:>10.3} {:>10.3}  {}",
            out.snr,
            out.ledger.j_explore,
            out.ledger.j_exploit,
            ev.join(", ")
        );
        best = best.min(out.ledger.j_total);
    }
    Ok(best)
}

#[allow(dead_code)]
fn main() -> rilqr::Result<()> {
    run_example().map(|_| ())
}
