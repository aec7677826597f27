// RiLQR on the actual plant: learn from the similar plant's record, then
// refine online with one rank-one update per sample.

use rilqr::experiment::run_rilqr_replica;
use rilqr::plant::sorted_eigenvalues;
use rilqr::ExperimentConfig;

pub fn run_example() -> rilqr::Result<f64> {
    let cfg = ExperimentConfig::default().with_overrides(&["record_length=20000"])?;
    let run = run_rilqr_replica(&cfg, cfg.seed)?;

    let actual = cfg.actual()?;
    let first = run.gain_trace.first().expect("gain before the run");
    let last = run.gain_trace.last().expect("gain after the run");
    let closed = |k: &nalgebra::DMatrix<f64>| {
        let ev = sorted_eigenvalues(&(&actual.a - &actual.b * k));
        ev.iter().map(|(re, im)| re.hypot(*im)).fold(0.0, f64::max)
    };
    println!("closed-loop spectral radius: {:.4} before, {:.4} after", closed(first), closed(last));
    println!("J_RiLQR over {} steps: {:.3}", run.log.len(), run.ledger.j_total);
    println!("gain held at {} steps", run.held_steps);
    println!("mean update + re-extraction time: {:?}", run.mean_step_time());
    Ok(run.ledger.j_total)
}

#[allow(dead_code)]
fn main() -> rilqr::Result<()> {
    run_example().map(|_| ())
}
