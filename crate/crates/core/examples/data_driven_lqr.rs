// Algorithm 1 on a clean record: the data-driven gain against the gain of
// the true model.

use rilqr::plant::generate_similar_record;
use rilqr::{batch_predictors, lqr_gain, run_algorithm1, ExperimentConfig, RilqrSettings};

pub fn run_example() -> rilqr::Result<f64> {
    let cfg = ExperimentConfig::default().with_overrides(&["record_length=5000", "record_noise_variance=0.0"])?;
    let similar = cfg.similar()?;
    let record = generate_similar_record(&similar, cfg.record_length, cfg.record_input_variance, cfg.seed)?;
    let settings = RilqrSettings::from_config(&cfg, cfg.seed)?;
    let x0 = cfg.initial_state();

    let out = run_algorithm1(&record, &settings, &x0)?;
    let model = lqr_gain(&batch_predictors(&similar.a, &similar.b, cfg.horizon), &settings.weights)?;
    let rel = (&out.gain.kgain - &model.kgain).norm() / model.kgain.norm();

    println!("data-driven first gain block: {:.6?}", out.gain.first_block().as_slice());
    println!("model-based first gain block: {:.6?}", model.first_block().as_slice());
    println!("relative gain error: {rel:.2e}");
    println!("u*(0) at x0 = {:.4?}: {:.4?}", x0.as_slice(), out.u0.as_slice());
    Ok(rel)
}

#[allow(dead_code)]
fn main() -> rilqr::Result<()> {
    run_example().map(|_| ())
}
