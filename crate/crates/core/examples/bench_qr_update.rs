// Per-update cost of the rank-one QR update as the stack grows.

use rilqr::bench_qr_update;

pub fn run_example() -> rilqr::Result<f64> {
    let rep = bench_qr_update(&[20, 40, 80], 400, 10, 1)?;
    for p in &rep.points {
        println!("s = {:>4}  N_c = {:>4}  {:>8.2} us/update", p.s, p.nc, p.seconds_per_update * 1e6);
    }
    println!("fitted exponent: {:.2}", rep.exponent);
    Ok(rep.exponent)
}

#[allow(dead_code)]
fn main() -> rilqr::Result<()> {
    run_example().map(|_| ())
}
