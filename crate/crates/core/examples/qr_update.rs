// Rank-one QR update against a from-scratch refactorization.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rilqr::linalg::qr_decompose;

pub fn run_example() -> rilqr::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut gauss = |r, c| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let (nc, s) = (40, 30);

    let mut a: DMatrix<f64> = gauss(nc, s);
    let mut fact = qr_decompose(&a)?;
    for _ in 0..100 {
        let u: DVector<f64> = gauss(nc, 1).column(0).into_owned();
        let v: DVector<f64> = gauss(s, 1).column(0).into_owned();
        fact.rank1_update(&u, &v)?;
        a += &u * v.transpose();
    }

    let oracle = qr_decompose(&a)?;
    let rel = (fact.r() - oracle.r()).norm() / oracle.r().norm();
    println!("100 updates of a {nc}x{s} factorization");
    println!("  relative R error vs refactorization: {rel:.2e}");
    println!("  orthogonality error of q:           {:.2e}", fact.orthogonality_error());
    Ok(rel)
}

#[allow(dead_code)]
fn main() -> rilqr::Result<()> {
    run_example().map(|_| ())
}
