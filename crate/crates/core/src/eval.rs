//! Closed-loop comparison runs, tracking/fuel metrics and report output.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use crate::closed_loop::{drive, LoopSettings, SpeedController};
use crate::dataset::SampleRecord;
use crate::driver::{AccConfig, PiConfig, PiDriver};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::pfc::NeuralPfc;
use crate::road::RoadProfile;
use crate::vehicle::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerLabel {
    Pi,
    Pfc(usize),
}

impl fmt::Display for ControllerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerLabel::Pi => write!(f, "PI"),
            ControllerLabel::Pfc(n) => write!(f, "PFC-{n}"),
        }
    }
}

impl std::str::FromStr for ControllerLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "PI" {
            return Ok(ControllerLabel::Pi);
        }
        s.strip_prefix("PFC-")
            .and_then(|n| n.parse().ok())
            .map(ControllerLabel::Pfc)
            .ok_or_else(|| Error::Config(format!("unknown controller label {s:?}")))
    }
}

impl ControllerLabel {
    // PFC variants by N, PI last
    fn sort_key(&self) -> (u8, usize) {
        match self {
            ControllerLabel::Pfc(n) => (0, *n),
            ControllerLabel::Pi => (1, 0),
        }
    }
}

impl Ord for ControllerLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for ControllerLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub v_des: f64,
    pub v_meas: f64,
    pub gear: u32,
    /// g, cumulative
    pub fuel: f64,
    /// `v_meas - v_des`
    pub error: f64,
    pub u_gas: f64,
    pub u_brake: f64,
}

impl From<&SampleRecord> for TracePoint {
    fn from(r: &SampleRecord) -> Self {
        TracePoint {
            t: r.time,
            v_des: r.desired_speed,
            v_meas: r.current_speed,
            gear: r.gear,
            fuel: r.fuel_consumed,
            error: r.current_speed - r.desired_speed,
            u_gas: r.u_gas,
            u_brake: r.u_brake,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub road: String,
    pub controller: ControllerLabel,
    /// `Some(diagnostic)` when the run did not complete.
    pub failure: Option<String>,
    /// (m/s)², summed over steps
    pub sse: f64,
    /// (m/s)² per step
    pub mse: f64,
    /// g
    pub fuel: f64,
    /// s
    pub duration: f64,
    pub trace: Vec<TracePoint>,
    /// Network faults absorbed by the coasting fallback.
    pub model_faults: usize,
}

impl RunResult {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    /// Commands outside `[0, 1]` over the whole trace.
    pub fn pedal_violations(&self) -> usize {
        self.trace
            .iter()
            .filter(|p| !(0.0..=1.0).contains(&p.u_gas) || !(0.0..=1.0).contains(&p.u_brake))
            .count()
    }

    fn failed(road: &str, controller: ControllerLabel, msg: String) -> Self {
        RunResult {
            road: road.to_string(),
            controller,
            failure: Some(msg),
            sse: f64::NAN,
            mse: f64::NAN,
            fuel: f64::NAN,
            duration: f64::NAN,
            trace: Vec::new(),
            model_faults: 0,
        }
    }
}

/// Sum of squared tracking errors, accumulated in trace order.
pub fn sse_of(trace: &[TracePoint]) -> f64 {
    trace.iter().map(|p| p.error * p.error).sum()
}

pub fn result_from_records(
    road: &str,
    controller: ControllerLabel,
    records: &[SampleRecord],
    final_fuel: f64,
    dt: f64,
) -> RunResult {
    let trace: Vec<TracePoint> = records.iter().map(TracePoint::from).collect();
    let sse = sse_of(&trace);
    RunResult {
        road: road.to_string(),
        controller,
        failure: None,
        sse,
        mse: if trace.is_empty() { 0.0 } else { sse / trace.len() as f64 },
        fuel: final_fuel,
        duration: trace.len() as f64 * dt,
        trace,
        model_faults: 0,
    }
}

pub enum ControllerSpec<'a> {
    Pi(PiConfig),
    Pfc(&'a NeuralPfc),
}

/// Drive `road` with the given controller and summarize the run.
pub fn run_controller(
    road: &RoadProfile,
    spec: ControllerSpec<'_>,
    params: &VehicleParams,
    acc: &AccConfig,
    settings: &LoopSettings,
) -> RunResult {
    match spec {
        ControllerSpec::Pi(cfg) => {
            let mut pi = PiDriver::new(cfg);
            run_with(road, ControllerLabel::Pi, &mut pi, params, acc, settings)
        }
        ControllerSpec::Pfc(pfc) => {
            let mut pfc = pfc.clone();
            pfc.reset();
            let label = ControllerLabel::Pfc(pfc.n_shift());
            let mut result = run_with(road, label, &mut pfc, params, acc, settings);
            result.model_faults = pfc.fault_count;
            result
        }
    }
}

fn run_with<C: SpeedController>(
    road: &RoadProfile,
    label: ControllerLabel,
    controller: &mut C,
    params: &VehicleParams,
    acc: &AccConfig,
    settings: &LoopSettings,
) -> RunResult {
    match drive(road, params, acc, settings, controller) {
        Ok((records, last)) => {
            result_from_records(&road.name, label, &records, last.fuel_consumed, settings.dt)
        }
        Err(e) => RunResult::failed(&road.name, label, e.to_string()),
    }
}

/// Fuel consumption enhancement in percent relative to the PI baseline.
pub fn fce(fuel_pfc: f64, fuel_pi: f64) -> Result<f64> {
    if !(fuel_pi > 0.0) {
        return Err(Error::Evaluation(format!("invalid baseline fuel {fuel_pi}")));
    }
    Ok((1.0 - fuel_pfc / fuel_pi) * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub road: String,
    pub controller: ControllerLabel,
    pub sse: f64,
    pub mse: f64,
    pub fuel: f64,
    /// NaN for failed runs.
    pub fce_percent: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    /// PI fuel per road, in road order.
    pub baseline_fuel: Vec<(String, f64)>,
}

pub const REPORT_HEADER: &str = "road,controller,sse,mse,fuel_g,fce_percent";

/// Assemble the comparison table. Roads keep their first-appearance order;
/// within a road rows are ordered by N with PI last.
pub fn build_report(results: &[RunResult]) -> Result<EvalReport> {
    let mut roads: Vec<&str> = Vec::new();
    for r in results {
        if !roads.contains(&r.road.as_str()) {
            roads.push(&r.road);
        }
    }
    let mut baseline_fuel = Vec::new();
    let mut rows = Vec::new();
    for road in roads {
        let pi = results
            .iter()
            .find(|r| r.road == road && r.controller == ControllerLabel::Pi)
            .ok_or_else(|| Error::Evaluation(format!("no PI baseline for {road}")))?;
        if !pi.is_ok() {
            return Err(Error::Evaluation(format!(
                "PI baseline failed on {road}: {}",
                pi.failure.as_deref().unwrap_or("")
            )));
        }
        baseline_fuel.push((road.to_string(), pi.fuel));
        let mut here: Vec<&RunResult> = results.iter().filter(|r| r.road == road).collect();
        here.sort_by_key(|r| r.controller);
        for r in here {
            let fce_percent = match (r.controller, r.is_ok()) {
                (_, false) => f64::NAN,
                (ControllerLabel::Pi, true) => 0.0,
                (_, true) => fce(r.fuel, pi.fuel)?,
            };
            rows.push(ReportRow {
                road: r.road.clone(),
                controller: r.controller,
                sse: r.sse,
                mse: r.mse,
                fuel: r.fuel,
                fce_percent,
                failed: !r.is_ok(),
            });
        }
    }
    Ok(EvalReport { rows, baseline_fuel })
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.road, r.controller, r.sse, r.mse, r.fuel, r.fce_percent
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::Config("report CSV has an unexpected header".into()));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Config(format!("malformed report row {line:?}")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number {s:?} in report")))
            };
            let sse = num(f[2])?;
            rows.push(ReportRow {
                road: f[0].to_string(),
                controller: f[1].parse()?,
                sse,
                mse: num(f[3])?,
                fuel: num(f[4])?,
                fce_percent: num(f[5])?,
                failed: sse.is_nan(),
            });
        }
        let baseline_fuel = rows
            .iter()
            .filter(|r| r.controller == ControllerLabel::Pi)
            .map(|r| (r.road.clone(), r.fuel))
            .collect();
        Ok(EvalReport { rows, baseline_fuel })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn row(&self, road: &str, controller: ControllerLabel) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.road == road && r.controller == controller)
    }

    /// Roads down, controllers across, SSE and FCE % per road.
    pub fn to_table(&self) -> String {
        let mut labels: Vec<ControllerLabel> = Vec::new();
        let mut roads: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !labels.contains(&r.controller) {
                labels.push(r.controller);
            }
            if !roads.contains(&r.road.as_str()) {
                roads.push(&r.road);
            }
        }
        labels.sort();
        let mut out = format!("{:<10} {:<6}", "road", "");
        for l in &labels {
            out.push_str(&format!(" {:>12}", l.to_string()));
        }
        out.push('\n');
        for road in roads {
            for (name, pick) in [("MSE", 0), ("FCE%", 1)] {
                out.push_str(&format!("{:<10} {:<6}", if pick == 0 { road } else { "" }, name));
                for l in &labels {
                    let cell = match self.row(road, *l) {
                        Some(r) if r.failed => "failed".to_string(),
                        Some(r) if pick == 0 => format!("{:.4}", r.mse),
                        Some(r) => format!("{:.4}", r.fce_percent),
                        None => "-".to_string(),
                    };
                    out.push_str(&format!(" {cell:>12}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

pub const TRACE_HEADER: &str = "t,v_des,v_meas,gear,afc_x100,error";

pub fn trace_csv(result: &RunResult) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for p in &result.trace {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.t,
            p.v_des,
            p.v_meas,
            p.gear,
            p.fuel * 100.0,
            p.error
        ));
    }
    out
}

/// Write the run's time series as CSV; fuel is magnified ×100.
pub fn emit_traces(result: &RunResult, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, trace_csv(result).as_bytes())
}

/// Reload a trace file's error column.
pub fn read_trace_errors(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Config(format!("{}: unexpected trace header", path.display())));
    }
    lines
        .map(|l| {
            l.rsplit(',')
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("{}: malformed row {l:?}", path.display())))
        })
        .collect()
}
