use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pfc_lab::eval::EvalReport;
use pfc_lab::io::write_atomic;
use pfc_lab::pfc::{closed_loop_reference_demo, load_bundle, LinearPlantModel, ReferencePlant};
use pfc_lab::pipeline::{
    bundle_manifest_path, dataset_dir, read_datasets, write_bundle, write_datasets, write_evaluation, Lab, RunConfig,
};
use pfc_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "pfc-lab", version, about = "PI baseline and neural PFC speed-control experiments")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single N-step shift to train or evaluate instead of the configured list.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Comma-separated 1-based road indices, e.g. 1,3,8.
    #[arg(long, global = true, value_delimiter = ',')]
    roads: Option<Vec<usize>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive every road under PI control and log the datasets.
    Collect,
    /// Train controller and plant-model networks from the collected logs.
    Train,
    /// Run PI and every trained bundle over the roads.
    Evaluate,
    /// Print the table for an existing report.
    Report,
    /// Classical PFC on a first-order plant with an output disturbance.
    DemoPfc {
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        target: f64,
        #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
        disturbance: f64,
        /// Ratio of true plant gain to model gain.
        #[arg(long, default_value_t = 1.0)]
        gain_ratio: f64,
        #[arg(long, default_value_t = 60)]
        samples: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn lab(cli: &Cli) -> Result<Lab> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.steps {
        cfg.n_list = vec![n];
    }
    let mut lab = Lab::new(cfg)?;
    if let Some(roads) = &cli.roads {
        lab.select_roads(roads)?;
    }
    Ok(lab)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Collect => {
            let lab = lab(&cli)?;
            let logs = lab.collect()?;
            let manifest = write_datasets(lab.out_dir(), lab.config.dt_s, &logs)?;
            println!("wrote {} datasets, manifest {}", logs.len(), manifest.display());
        }
        Command::Train => {
            let lab = lab(&cli)?;
            let manifest = dataset_dir(lab.out_dir()).join("manifest.json");
            let logs = read_datasets(&manifest)?;
            for &n in &lab.config.n_list {
                let bundle = lab.train(&logs, n)?;
                let path = write_bundle(lab.out_dir(), &bundle)?;
                println!("N={n}: {}", path.display());
            }
        }
        Command::Evaluate => {
            let lab = lab(&cli)?;
            let bundles = lab
                .config
                .n_list
                .iter()
                .map(|&n| load_bundle(bundle_manifest_path(lab.out_dir(), n)))
                .collect::<Result<Vec<_>>>()?;
            let results = lab.evaluate(&bundles);
            let report = write_evaluation(lab.out_dir(), &results)?;
            print!("{}", report.to_table());
            let failed: Vec<String> = results
                .iter()
                .filter_map(|r| r.failure.as_ref().map(|f| format!("{} {}: {f}", r.road, r.controller)))
                .collect();
            if !failed.is_empty() {
                return Err(Error::Evaluation(format!("{} failed runs: {}", failed.len(), failed.join("; "))));
            }
        }
        Command::Report => {
            let lab = lab(&cli)?;
            let table = EvalReport::load(lab.out_dir().join("report.csv"))?.to_table();
            write_atomic(lab.out_dir().join("table.txt"), table.as_bytes())?;
            print!("{table}");
        }
        Command::DemoPfc {
            target,
            disturbance,
            gain_ratio,
            samples,
        } => {
            let model = LinearPlantModel::new(0.8, 2.0)?;
            let plant = ReferencePlant::new(0.8, 2.0 * gain_ratio, *disturbance);
            let traj = closed_loop_reference_demo(plant, model, *target, *samples)?;
            println!("k,y_p,y_m,u");
            for s in &traj {
                println!("{},{:.9},{:.9},{:.9}", s.k, s.plant_output, s.model_output, s.input);
            }
        }
    }
    Ok(())
}
