//! Sample logging, CSV persistence and the N-step-ahead shift.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::closed_loop::{drive, LoopSettings};
use crate::driver::{AccConfig, PiConfig, PiDriver};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::road::RoadProfile;
use crate::vehicle::VehicleParams;

/// Number of controller / plant-model input features.
pub const N_FEATURES: usize = 10;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "v_des",
    "v_meas",
    "brake_act",
    "gas_act",
    "gear",
    "steer_angle",
    "steer_torque",
    "rpm",
    "a_meas",
    "a_des",
];

/// Index of the desired-speed channel in the feature vector.
pub const DESIRED_SPEED: usize = 0;
/// Index of the measured-speed channel in the feature vector.
pub const CURRENT_SPEED: usize = 1;

/// One logged control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    #[serde(rename = "t")]
    pub time: f64,
    #[serde(rename = "v_des")]
    pub desired_speed: f64,
    #[serde(rename = "v_meas")]
    pub current_speed: f64,
    #[serde(rename = "brake_act")]
    pub brake_actuator: f64,
    #[serde(rename = "gas_act")]
    pub gas_actuator: f64,
    pub gear: u32,
    pub steer_angle: f64,
    pub steer_torque: f64,
    #[serde(rename = "rpm")]
    pub engine_rpm: f64,
    #[serde(rename = "a_meas")]
    pub current_accel: f64,
    #[serde(rename = "a_des")]
    pub desired_accel: f64,
    pub u_gas: f64,
    pub u_brake: f64,
    #[serde(rename = "fuel_g")]
    pub fuel_consumed: f64,
}

impl SampleRecord {
    /// The ten controller inputs, in logging order.
    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.desired_speed,
            self.current_speed,
            self.brake_actuator,
            self.gas_actuator,
            self.gear as f64,
            self.steer_angle,
            self.steer_torque,
            self.engine_rpm,
            self.current_accel,
            self.desired_accel,
        ]
    }
}

pub const CSV_HEADER: &str =
    "t,v_des,v_meas,brake_act,gas_act,gear,steer_angle,steer_torque,rpm,a_meas,a_des,u_gas,u_brake,fuel_g";

/// Drive `road` under the baseline PI driver and log every step.
pub fn collect(
    road: &RoadProfile,
    params: &VehicleParams,
    acc: &AccConfig,
    pi: &PiConfig,
    settings: &LoopSettings,
) -> Result<Vec<SampleRecord>> {
    let mut driver = PiDriver::new(*pi);
    drive(road, params, acc, settings, &mut driver).map(|(records, _)| records)
}

pub fn records_to_csv(records: &[SampleRecord]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for rec in records {
        writer.serialize(rec).map_err(|e| Error::csv("<memory>", e))?;
    }
    if records.is_empty() {
        return Ok(format!("{CSV_HEADER}\n").into_bytes());
    }
    writer
        .into_inner()
        .map_err(|e| Error::Config(format!("csv flush: {e}")))
}

pub fn write_records(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    write_atomic(path, &records_to_csv(records)?)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?;
    let header: Vec<&str> = header.iter().collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Config(format!(
            "{}: unexpected dataset header {:?}",
            path.display(),
            header
        )));
    }
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<SampleRecord>, _>>()
        .map_err(|e| Error::csv(path, e))
}

/// Member list of a multi-road dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dt: f64,
    pub members: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub road: String,
    pub file: String,
    pub records: usize,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Read every member file, resolving names relative to `dir`.
    pub fn load_members(&self, dir: impl AsRef<Path>) -> Result<Vec<(String, Vec<SampleRecord>)>> {
        self.members
            .iter()
            .map(|m| Ok((m.road.clone(), read_records(dir.as_ref().join(&m.file))?)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    /// (u_gas, u_brake)
    Controller,
    /// current speed
    Plant,
}

impl TargetKind {
    pub fn width(self) -> usize {
        match self {
            TargetKind::Controller => 2,
            TargetKind::Plant => 1,
        }
    }

    fn target_of(self, rec: &SampleRecord) -> Vec<f64> {
        match self {
            TargetKind::Controller => vec![rec.u_gas, rec.u_brake],
            TargetKind::Plant => vec![rec.current_speed],
        }
    }
}

/// Input/target pairs where each target lies `n_shift` steps after its
/// input.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedDataset {
    pub inputs: Vec<[f64; N_FEATURES]>,
    pub targets: Vec<Vec<f64>>,
    pub n_shift: usize,
    pub kind: TargetKind,
    pub source_roads: Vec<String>,
    /// Pair count contributed by each source road, parallel to
    /// `source_roads`.
    pub road_lengths: Vec<usize>,
}

impl ShiftedDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Keep every `stride`-th pair of each road. Road boundaries are kept.
    pub fn decimate(&self, stride: usize) -> ShiftedDataset {
        let stride = stride.max(1);
        let mut out = ShiftedDataset {
            inputs: Vec::new(),
            targets: Vec::new(),
            n_shift: self.n_shift,
            kind: self.kind,
            source_roads: self.source_roads.clone(),
            road_lengths: Vec::new(),
        };
        let mut start = 0;
        for &len in &self.road_lengths {
            let before = out.inputs.len();
            for i in (start..start + len).step_by(stride) {
                out.inputs.push(self.inputs[i]);
                out.targets.push(self.targets[i].clone());
            }
            out.road_lengths.push(out.inputs.len() - before);
            start += len;
        }
        out
    }
}

/// Pair the inputs of record `i` with the targets of record `i + n`.
pub fn shift_n(
    road: &str,
    records: &[SampleRecord],
    n: usize,
    kind: TargetKind,
) -> Result<ShiftedDataset> {
    if records.len() <= n {
        return Err(Error::InsufficientData {
            have: records.len(),
            need: n,
        });
    }
    let count = records.len() - n;
    let inputs = records[..count].iter().map(SampleRecord::features).collect();
    let targets = records[n..].iter().map(|r| kind.target_of(r)).collect();
    Ok(ShiftedDataset {
        inputs,
        targets,
        n_shift: n,
        kind,
        source_roads: vec![road.to_string()],
        road_lengths: vec![count],
    })
}

/// Join per-road shifted datasets, preserving each road's internal order.
pub fn concat(datasets: &[ShiftedDataset]) -> Result<ShiftedDataset> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::Config("concat of an empty dataset list".into()))?;
    let mut out = ShiftedDataset {
        inputs: Vec::new(),
        targets: Vec::new(),
        n_shift: first.n_shift,
        kind: first.kind,
        source_roads: Vec::new(),
        road_lengths: Vec::new(),
    };
    for ds in datasets {
        if ds.n_shift != first.n_shift || ds.kind != first.kind {
            return Err(Error::Config(format!(
                "cannot concatenate datasets with shift {} ({:?}) and {} ({:?})",
                first.n_shift, first.kind, ds.n_shift, ds.kind
            )));
        }
        out.inputs.extend_from_slice(&ds.inputs);
        out.targets.extend(ds.targets.iter().cloned());
        out.source_roads.extend(ds.source_roads.iter().cloned());
        out.road_lengths.extend_from_slice(&ds.road_lengths);
    }
    Ok(out)
}

/// Shift every road separately, then concatenate.
pub fn build_corpus(
    logs: &[(String, Vec<SampleRecord>)],
    n: usize,
    kind: TargetKind,
) -> Result<ShiftedDataset> {
    let parts = logs
        .iter()
        .map(|(road, recs)| shift_n(road, recs, n, kind))
        .collect::<Result<Vec<_>>>()?;
    concat(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn synthetic(count: usize, tag: f64) -> Vec<SampleRecord> {
        (0..count)
            .map(|i| {
                let x = i as f64;
                SampleRecord {
                    time: x * 0.01,
                    desired_speed: tag + x,
                    current_speed: tag + x + 0.5,
                    brake_actuator: 0.0,
                    gas_actuator: 0.1,
                    gear: 2,
                    steer_angle: 0.0,
                    steer_torque: 0.0,
                    engine_rpm: 1000.0 + x,
                    current_accel: 0.0,
                    desired_accel: 0.0,
                    u_gas: (x / count as f64).min(1.0),
                    u_brake: 0.0,
                    fuel_consumed: x,
                }
            })
            .collect()
    }

    #[test]
    fn hundred_samples_shift_ten() {
        let recs = synthetic(100, 0.0);
        let ds = shift_n("r", &recs, 10, TargetKind::Controller).unwrap();
        assert_eq!(ds.len(), 90);
        assert_eq!(ds.inputs[0], recs[0].features());
        assert_eq!(ds.targets[0], vec![recs[10].u_gas, recs[10].u_brake]);
        assert_eq!(ds.targets[89], vec![recs[99].u_gas, recs[99].u_brake]);
    }

    #[test]
    fn zero_shift_aligns() {
        let recs = synthetic(20, 0.0);
        let ds = shift_n("r", &recs, 0, TargetKind::Plant).unwrap();
        assert_eq!(ds.len(), 20);
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(ds.inputs[i], r.features());
            assert_eq!(ds.targets[i], vec![r.current_speed]);
        }
    }

    #[test]
    fn too_few_records() {
        let recs = synthetic(5, 0.0);
        assert!(matches!(
            shift_n("r", &recs, 10, TargetKind::Controller),
            Err(Error::InsufficientData { have: 5, need: 10 })
        ));
        assert!(shift_n("r", &recs, 5, TargetKind::Controller).is_err());
    }

    #[test]
    fn concat_rules() {
        let a = shift_n("a", &synthetic(100, 0.0), 10, TargetKind::Controller).unwrap();
        let b = shift_n("b", &synthetic(100, 1000.0), 10, TargetKind::Controller).unwrap();
        let both = concat(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(both.len(), 180);
        assert_eq!(both.road_lengths, vec![90, 90]);
        assert_eq!(both.source_roads, vec!["a", "b"]);
        assert_eq!(concat(std::slice::from_ref(&a)).unwrap(), a);
        assert!(concat(&[]).is_err());
        let c = shift_n("c", &synthetic(100, 0.0), 4, TargetKind::Controller).unwrap();
        assert!(concat(&[a.clone(), c]).is_err());
        let d = shift_n("d", &synthetic(100, 0.0), 10, TargetKind::Plant).unwrap();
        assert!(concat(&[a, d]).is_err());
    }

    #[test]
    fn decimate_keeps_road_boundaries() {
        let a = shift_n("a", &synthetic(25, 0.0), 3, TargetKind::Plant).unwrap();
        let b = shift_n("b", &synthetic(13, 500.0), 3, TargetKind::Plant).unwrap();
        let both = concat(&[a, b]).unwrap();
        let thin = both.decimate(4);
        assert_eq!(thin.road_lengths, vec![6, 3]);
        assert_eq!(thin.inputs[6], both.inputs[22]);
        assert_eq!(both.decimate(1), both);
    }

    #[test]
    fn csv_header_and_round_trip() {
        let recs = synthetic(7, 3.25);
        let bytes = records_to_csv(&recs).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_records(&path, &recs).unwrap();
        assert_eq!(read_records(&path).unwrap(), recs);
    }

    #[test]
    fn features_follow_header_order() {
        let names: Vec<&str> = CSV_HEADER.split(',').skip(1).take(N_FEATURES).collect();
        assert_eq!(names, FEATURE_NAMES);
    }
}
