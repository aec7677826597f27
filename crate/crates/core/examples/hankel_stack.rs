// Block-Hankel stack of a short record and the online column builder.

use nalgebra::DVector;
use rilqr::hankel::UpdateColumnBuilder;
use rilqr::plant::generate_similar_record;
use rilqr::{assemble_stack, LtiSystem};

pub fn run_example() -> rilqr::Result<(usize, usize)> {
    let sys = LtiSystem::benchmark_similar(1e-4)?;
    let record = generate_similar_record(&sys, 60, 1.0, 11)?;
    let k = 3;
    let stack = assemble_stack(&record, k)?;
    let layout = stack.layout;
    println!("record of {} samples, depth k = {k}", record.len());
    println!("stack is {} x {}", stack.s(), stack.width());
    println!(
        "  Uf rows {:?}, Up rows {:?}, Yp rows {:?}, Yf rows {:?}",
        layout.uf_rows(),
        layout.up_rows(),
        layout.yp_rows(),
        layout.yf_rows()
    );

    // the builder starts from the newest column and slides one sample per step
    let mut builder = UpdateColumnBuilder::from_record(&record, k)?;
    let last = stack.column(stack.width() - 1);
    assert_eq!(builder.current_column()?, last);
    let h = builder.next_column(&DVector::from_element(1, 0.5), &DVector::from_vec(vec![0.1, -0.2]))?;
    println!("first online column: {:.3?}", h.as_slice());

    let mut csv = Vec::new();
    record.write_csv(&mut csv)?;
    let back = rilqr::SignalRecord::read_csv(csv.as_slice())?;
    assert_eq!(back.len(), record.len());
    Ok((stack.s(), stack.width()))
}

#[allow(dead_code)]
fn main() -> rilqr::Result<()> {
    run_example().map(|_| ())
}
