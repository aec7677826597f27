// A reduced comparison grid written to a temporary results directory.

use rilqr::{reproduce_table2, ExperimentConfig};

pub fn run_example() -> rilqr::Result<usize> {
    let out = std::env::temp_dir().join("rilqr-table2-example");
    let cfg = ExperimentConfig::default().with_overrides(&[
        "seeds=3".to_string(),
        "record_length=5000".to_string(),
        "explore_variances=[1.15, 0.08, 3.2e-5]".to_string(),
        format!("out_dir={:?}", out.display().to_string()),
    ])?;
    let res = reproduce_table2(&cfg)?;
    print!("{}", res.table_csv()?);
    let dir = res.write(&cfg.out_dir)?;
    println!("written to {}", dir.display());
    Ok(res.cases.len())
}

#[allow(dead_code)]
fn main() -> rilqr::Result<()> {
    run_example().map(|_| ())
}
