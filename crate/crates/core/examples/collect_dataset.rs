//! Log PI runs on two roads, write them as a dataset and build the
//! 10-step-ahead training pairs.

use pfc_lab::dataset::{build_corpus, TargetKind, FEATURE_NAMES};
use pfc_lab::pipeline::{read_datasets, write_datasets, Lab, RunConfig};

fn main() -> pfc_lab::Result<()> {
    let out = std::env::temp_dir().join("pfc-lab-collect-example");
    let mut lab = Lab::new(RunConfig {
        out_dir: out.clone(),
        ..RunConfig::default()
    })?;
    lab.select_roads(&[1, 5])?;

    let logs = lab.collect()?;
    let manifest = write_datasets(&out, lab.config.dt_s, &logs)?;
    println!("manifest: {}", manifest.display());

    let logs = read_datasets(&manifest)?;
    for (road, records) in &logs {
        println!("{road}: {} records", records.len());
    }
    let corpus = build_corpus(&logs, 10, TargetKind::Controller)?;
    println!("N=10 controller corpus: {} pairs", corpus.len());
    let mid = corpus.len() / 2;
    for (name, value) in FEATURE_NAMES.iter().zip(&corpus.inputs[mid]) {
        println!("  {name:<14} {value:>10.4}");
    }
    println!("  target gas/brake {:?}", corpus.targets[mid]);
    Ok(())
}
