//! The whole experiment on a reduced scale: collect PI logs, train a
//! 10-step-ahead bundle, and compare it with PI on two flat roads.
//!
//! Pass an output directory to keep the artifacts.

use pfc_lab::pipeline::{run_all, Lab, RunConfig};

fn main() -> pfc_lab::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("pfc-lab-pipeline-example"));
    let mut lab = Lab::new(RunConfig {
        n_list: vec![10],
        out_dir: out,
        ..RunConfig::default()
    })?;
    lab.select_roads(&[1, 3])?;

    let report = run_all(&lab)?;
    print!("{}", report.to_table());
    println!("artifacts in {}", lab.out_dir().display());
    Ok(())
}
