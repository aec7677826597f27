// Sketch a noiseless stack, compare projections with and without
// compression, and read the predictors off the compressed factors.

use rilqr::linalg::{principal_angles, qr_decompose};
use rilqr::plant::generate_similar_record;
use rilqr::subspace::{extract_predictors, extract_rblocks, oblique_projection};
use rilqr::{assemble_stack, batch_predictors, compress_initial, LtiSystem, SketchConfig};

pub fn run_example() -> rilqr::Result<f64> {
    let sys = LtiSystem::benchmark_similar(0.0)?;
    let record = generate_similar_record(&sys, 2000, 1.0, 5)?;
    let k = 5;
    let stack = assemble_stack(&record, k)?;
    let layout = stack.layout;
    let tol = rilqr::linalg::DEFAULT_PINV_TOL;

    let full = qr_decompose(&stack.stacked().transpose())?;
    let zeta = oblique_projection(&extract_rblocks(&full, layout)?, &stack.wp(), tol)?.zeta;

    let compressed = compress_initial(&stack, &SketchConfig::default())?;
    let blocks = extract_rblocks(compressed.factorization(), layout)?;
    let projection = oblique_projection(&blocks, &compressed.wp_bar(), tol)?;
    println!(
        "stack {}x{} compressed to {}x{}",
        stack.s(),
        stack.width(),
        stack.s(),
        compressed.width()
    );

    let angles = principal_angles(&zeta, &projection.zeta, layout.n)?;
    let worst = angles.iter().cloned().fold(0.0, f64::max);
    println!("largest principal angle between the projections: {worst:.2e}");

    let estimate = extract_predictors(&blocks, &projection, layout.n)?;
    let learned = estimate.predictors()?;
    let truth = batch_predictors(&sys.a, &sys.b, k - 1);
    let err = (&learned.sx - &truth.sx).norm() / truth.sx.norm();
    let err_u = (&learned.su - &truth.su).norm() / truth.su.norm();
    println!("relative predictor error: S^x {err:.2e}, S^u {err_u:.2e}");
    let sv: Vec<String> = estimate.singular_values.iter().map(|v| format!("{v:.2e}")).collect();
    println!("singular values of the projection: {}", sv.join(" "));
    Ok(worst.max(err).max(err_u))
}

#[allow(dead_code)]
fn main() -> rilqr::Result<()> {
    run_example().map(|_| ())
}
