//! End-to-end orchestration: collect PI logs, train N-step-ahead controller
//! bundles, evaluate them against the PI baseline and write artifacts.
//!
//! Output tree under the run directory:
//!
//! ```text
//! datasets/manifest.json, datasets/<road>.csv
//! bundles/n<N>/{bundle.json, controller.json, plant.json, controller_log.csv, plant_log.csv}
//! report.csv, table.txt
//! traces/<road>_<controller>.csv
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::closed_loop::LoopSettings;
use crate::dataset::{self, build_corpus, DatasetManifest, ManifestEntry, SampleRecord, TargetKind};
use crate::driver::{AccConfig, PiConfig};
use crate::error::{Error, Result};
use crate::eval::{build_report, emit_traces, run_controller, ControllerLabel, ControllerSpec, EvalReport, RunResult};
use crate::io::{write_atomic, write_json};
use crate::mlp::{train_lm, LmConfig, MlpModel, TrainingLog};
use crate::pfc::{BundleManifest, NeuralPfc};
use crate::road::{builtin_suite, RoadProfile};
use crate::vehicle::VehicleParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadSelection {
    Builtin,
    Files(Vec<PathBuf>),
}

/// Run configuration, read from JSON. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Vehicle parameter file; built-in sedan parameters when absent.
    pub plant_file: Option<PathBuf>,
    pub roads: RoadSelection,
    pub dt_s: f64,
    pub max_time_s: f64,
    pub pi: PiConfig,
    pub acc: AccConfig,
    pub lm: LmConfig,
    pub hidden_neurons: usize,
    /// Keep every k-th shifted pair of each road for training.
    pub train_stride: usize,
    pub offset_filter: f64,
    /// Net the controller's gas and brake outputs into a single pedal.
    pub arbitrate_pedals: bool,
    pub n_list: Vec<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            plant_file: None,
            roads: RoadSelection::Builtin,
            dt_s: 0.01,
            max_time_s: 900.0,
            pi: PiConfig::default(),
            acc: AccConfig::default(),
            lm: LmConfig::default(),
            hidden_neurons: 10,
            train_stride: 10,
            offset_filter: 0.9,
            arbitrate_pedals: true,
            n_list: vec![1, 4, 6, 8, 10],
            seed: 1,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0) {
            return Err(Error::Config(format!("dt_s must be positive, got {}", self.dt_s)));
        }
        if self.n_list.is_empty() {
            return Err(Error::Config("n_list must not be empty".into()));
        }
        if self.hidden_neurons == 0 {
            return Err(Error::Config("hidden_neurons must be positive".into()));
        }
        if !(self.pi.kp >= 0.0 && self.pi.ki >= 0.0 && self.pi.integrator_limit > 0.0) {
            return Err(Error::Config("invalid PI gains".into()));
        }
        if !(self.acc.comfort_decel > 0.0 && self.acc.lookahead > 0.0) {
            return Err(Error::Config("ACC parameters must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.offset_filter) {
            return Err(Error::Config("offset_filter must lie in [0, 1)".into()));
        }
        self.lm.validate()
    }

    pub fn loop_settings(&self) -> LoopSettings {
        LoopSettings {
            dt: self.dt_s,
            max_time: self.max_time_s,
        }
    }
}

/// A validated configuration with its plant and roads resolved.
#[derive(Debug, Clone)]
pub struct Lab {
    pub config: RunConfig,
    pub params: VehicleParams,
    pub roads: Vec<RoadProfile>,
}

impl Lab {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let params = match &config.plant_file {
            Some(path) => VehicleParams::from_json_file(path).map_err(as_config)?,
            None => VehicleParams::default(),
        };
        params.validate()?;
        let roads = match &config.roads {
            RoadSelection::Builtin => builtin_suite(),
            RoadSelection::Files(files) => files
                .iter()
                .map(|f| RoadProfile::load(f).map_err(as_config))
                .collect::<Result<_>>()?,
        };
        if roads.is_empty() {
            return Err(Error::Config("no roads selected".into()));
        }
        Ok(Lab { config, params, roads })
    }

    /// Keep only the roads at the given 1-based positions.
    pub fn select_roads(&mut self, indices: &[usize]) -> Result<()> {
        let mut picked = Vec::new();
        for &i in indices {
            let road = self
                .roads
                .get(i.wrapping_sub(1))
                .ok_or_else(|| Error::Config(format!("road index {i} out of range 1..={}", self.roads.len())))?;
            picked.push(road.clone());
        }
        self.roads = picked;
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    /// PI logs for every selected road, in road order.
    pub fn collect(&self) -> Result<Vec<(String, Vec<SampleRecord>)>> {
        let settings = self.config.loop_settings();
        self.roads
            .iter()
            .map(|road| {
                let records = dataset::collect(road, &self.params, &self.config.acc, &self.config.pi, &settings)?;
                Ok((road.name.clone(), records))
            })
            .collect()
    }

    /// Train the controller and plant-model networks for an `n`-step shift.
    pub fn train(&self, logs: &[(String, Vec<SampleRecord>)], n: usize) -> Result<TrainedBundle> {
        let stride = self.config.train_stride;
        let fit = |kind: TargetKind, seed: u64| -> Result<(MlpModel, TrainingLog)> {
            let corpus = build_corpus(logs, n, kind)?.decimate(stride);
            let inputs: Vec<Vec<f64>> = corpus.inputs.iter().map(|x| x.to_vec()).collect();
            let cfg = LmConfig {
                seed,
                ..self.config.lm.clone()
            };
            let (mut model, log) = train_lm(&inputs, &corpus.targets, self.config.hidden_neurons, &cfg)?;
            model.n_shift = n;
            log::info!(
                "N={n} {kind:?}: {} pairs, {} epochs, train mse {:.3e}, stop {:?}",
                corpus.len(),
                log.epochs.len() - 1,
                log.final_train_mse(),
                log.stop
            );
            Ok((model, log))
        };
        let (controller, controller_log) = fit(TargetKind::Controller, self.config.seed)?;
        let (plant, plant_log) = fit(TargetKind::Plant, self.config.seed.wrapping_add(1))?;
        let mut pfc = NeuralPfc::new(controller, plant, self.config.offset_filter)?;
        pfc.arbitrate_pedals = self.config.arbitrate_pedals;
        Ok(TrainedBundle {
            pfc,
            controller_log,
            plant_log,
        })
    }

    /// Run PI and every bundle over every selected road.
    pub fn evaluate(&self, bundles: &[NeuralPfc]) -> Vec<RunResult> {
        let settings = self.config.loop_settings();
        let mut results = Vec::new();
        for road in &self.roads {
            for pfc in bundles {
                results.push(run_controller(road, ControllerSpec::Pfc(pfc), &self.params, &self.config.acc, &settings));
            }
            results.push(run_controller(
                road,
                ControllerSpec::Pi(self.config.pi),
                &self.params,
                &self.config.acc,
                &settings,
            ));
        }
        results
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

pub struct TrainedBundle {
    pub pfc: NeuralPfc,
    pub controller_log: TrainingLog,
    pub plant_log: TrainingLog,
}

pub fn dataset_dir(out: &Path) -> PathBuf {
    out.join("datasets")
}

pub fn bundle_dir(out: &Path, n: usize) -> PathBuf {
    out.join("bundles").join(format!("n{n}"))
}

pub fn bundle_manifest_path(out: &Path, n: usize) -> PathBuf {
    bundle_dir(out, n).join("bundle.json")
}

/// Write one CSV per road plus the manifest. Everything is serialized
/// before the first file is touched.
pub fn write_datasets(out: &Path, dt: f64, logs: &[(String, Vec<SampleRecord>)]) -> Result<PathBuf> {
    let dir = dataset_dir(out);
    let mut files = Vec::new();
    let mut members = Vec::new();
    for (road, records) in logs {
        let file = format!("{road}.csv");
        files.push((dir.join(&file), dataset::records_to_csv(records)?));
        members.push(ManifestEntry {
            road: road.clone(),
            file,
            records: records.len(),
        });
    }
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &DatasetManifest { dt, members })?;
    Ok(manifest_path)
}

pub fn read_datasets(manifest_path: &Path) -> Result<Vec<(String, Vec<SampleRecord>)>> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.load_members(dir)
}

pub fn write_bundle(out: &Path, bundle: &TrainedBundle) -> Result<PathBuf> {
    let n = bundle.pfc.n_shift();
    let dir = bundle_dir(out, n);
    bundle.pfc.controller_net.save(dir.join("controller.json"))?;
    bundle.pfc.plant_net.save(dir.join("plant.json"))?;
    write_atomic(dir.join("controller_log.csv"), bundle.controller_log.to_csv().as_bytes())?;
    write_atomic(dir.join("plant_log.csv"), bundle.plant_log.to_csv().as_bytes())?;
    let manifest = BundleManifest {
        controller_net: "controller.json".into(),
        plant_net: "plant.json".into(),
        n_shift: n,
        offset_filter: bundle.pfc.offset_filter,
        arbitrate_pedals: bundle.pfc.arbitrate_pedals,
    };
    let path = dir.join("bundle.json");
    manifest.save(&path)?;
    Ok(path)
}

pub fn trace_path(out: &Path, road: &str, controller: ControllerLabel) -> PathBuf {
    out.join("traces").join(format!("{road}_{controller}.csv"))
}

/// Write the report CSV, its table rendering and every run's trace.
pub fn write_evaluation(out: &Path, results: &[RunResult]) -> Result<EvalReport> {
    let report = build_report(results)?;
    for r in results.iter().filter(|r| r.is_ok()) {
        emit_traces(r, trace_path(out, &r.road, r.controller))?;
    }
    write_atomic(out.join("report.csv"), report.to_csv().as_bytes())?;
    write_atomic(out.join("table.txt"), report.to_table().as_bytes())?;
    Ok(report)
}

/// Collect, train every N in the configuration, evaluate, and write all
/// artifacts under the output directory.
pub fn run_all(lab: &Lab) -> Result<EvalReport> {
    let out = lab.out_dir().to_path_buf();
    let logs = lab.collect()?;
    write_datasets(&out, lab.config.dt_s, &logs)?;
    let mut bundles = Vec::new();
    for &n in &lab.config.n_list {
        let bundle = lab.train(&logs, n)?;
        write_bundle(&out, &bundle)?;
        bundles.push(bundle.pfc);
    }
    let results = lab.evaluate(&bundles);
    write_evaluation(&out, &results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_fill_missing_keys() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "n_list": [2]}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.n_list, vec![2]);
        assert_eq!(cfg.dt_s, 0.01);
        assert_eq!(cfg.roads, RoadSelection::Builtin);
        let cfg: RunConfig = serde_json::from_str(r#"{"roads": {"files": ["a.json"]}}"#).unwrap();
        assert_eq!(cfg.roads, RoadSelection::Files(vec!["a.json".into()]));
    }

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.n_list.clear();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { dt_s: 0.0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_plant_file_is_config_error() {
        let cfg = RunConfig {
            plant_file: Some("/nonexistent/plant.json".into()),
            ..RunConfig::default()
        };
        let err = Lab::new(cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn road_selection_by_index() {
        let mut lab = Lab::new(RunConfig::default()).unwrap();
        lab.select_roads(&[3, 1]).unwrap();
        let names: Vec<_> = lab.roads.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["road-3", "road-1"]);
        assert!(lab.select_roads(&[0]).is_err());
        assert!(lab.select_roads(&[9]).is_err());
    }
}
