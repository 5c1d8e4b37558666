//! Predictive functional control.
//!
//! The classical half works on a first-order linear reference plant: input
//! profiles, the independent model that runs beside the plant, and the
//! steady-state control law that forces the predicted asymptotic output onto
//! the target after correcting it by the measured plant/model offset.
//!
//! [`NeuralPfc`] applies the same correction to a trained controller
//! network. A plant-model network plays the independent model, the offset
//! between measured speed and its prediction shifts the desired-speed input,
//! and the controller output passes through `[0, 1]` amplitude limiters.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::closed_loop::SpeedController;
use crate::dataset::{SampleRecord, CURRENT_SPEED, DESIRED_SPEED, N_FEATURES};
use crate::driver::DriverTarget;
use crate::error::{Error, Result};
use crate::io::write_json;
use crate::mlp::MlpModel;
use crate::vehicle::PedalCommand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileForm {
    Constant,
    Ramp,
    Parabola,
}

/// Polynomial input profile `a + b·k + c·k²`; unused terms are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputProfile {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub form: ProfileForm,
}

impl InputProfile {
    pub fn constant(a: f64) -> Self {
        InputProfile { a, b: 0.0, c: 0.0, form: ProfileForm::Constant }
    }

    pub fn ramp(a: f64, b: f64) -> Self {
        InputProfile { a, b, c: 0.0, form: ProfileForm::Ramp }
    }

    pub fn parabola(a: f64, b: f64, c: f64) -> Self {
        InputProfile { a, b, c, form: ProfileForm::Parabola }
    }

    pub fn value(&self, k: i64) -> Result<f64> {
        if k < 0 {
            return Err(Error::Config(format!("input profile step must be >= 0, got {k}")));
        }
        let k = k as f64;
        Ok(match self.form {
            ProfileForm::Constant => self.a,
            ProfileForm::Ramp => self.a + self.b * k,
            ProfileForm::Parabola => self.a + self.b * k + self.c * k * k,
        })
    }
}

/// First-order model `y(k+1) = p·y(k) + (1 - p)·G·u(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPlantModel {
    pub pole: f64,
    pub steady_state_gain: f64,
    pub model_output: f64,
}

impl LinearPlantModel {
    pub fn new(pole: f64, steady_state_gain: f64) -> Result<Self> {
        if !(pole.abs() < 1.0) {
            return Err(Error::Config(format!("model pole {pole} is not stable")));
        }
        if steady_state_gain == 0.0 || !steady_state_gain.is_finite() {
            return Err(Error::Config("model steady-state gain must be non-zero".into()));
        }
        Ok(LinearPlantModel {
            pole,
            steady_state_gain,
            model_output: 0.0,
        })
    }

    pub fn step(&mut self, u: f64) -> f64 {
        self.model_output = self.pole * self.model_output + (1.0 - self.pole) * self.steady_state_gain * u;
        self.model_output
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IndependentModelState {
    /// `y_p - y_m`
    pub offset: f64,
    pub plant_output: f64,
    pub model_output: f64,
}

pub fn update_independent_model(
    _im: &IndependentModelState,
    y_measured: f64,
    y_model: f64,
) -> IndependentModelState {
    IndependentModelState {
        offset: y_measured - y_model,
        plant_output: y_measured,
        model_output: y_model,
    }
}

/// Steady input that puts the offset-corrected prediction on `r`.
pub fn classical_pfc_law(r: f64, im: &IndependentModelState, model: &LinearPlantModel) -> Result<f64> {
    if model.steady_state_gain == 0.0 {
        return Err(Error::Config("model steady-state gain is zero".into()));
    }
    Ok((r - im.offset) / model.steady_state_gain)
}

/// First-order plant with an additive output disturbance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePlant {
    pub pole: f64,
    pub gain: f64,
    pub disturbance: f64,
    pub state: f64,
}

impl ReferencePlant {
    pub fn new(pole: f64, gain: f64, disturbance: f64) -> Self {
        ReferencePlant { pole, gain, disturbance, state: 0.0 }
    }

    pub fn output(&self) -> f64 {
        self.state + self.disturbance
    }

    pub fn step(&mut self, u: f64) {
        self.state = self.pole * self.state + (1.0 - self.pole) * self.gain * u;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoSample {
    pub k: usize,
    pub plant_output: f64,
    pub model_output: f64,
    pub input: f64,
}

/// Run the classical law against `plant` for `steps` samples.
pub fn closed_loop_reference_demo(
    mut plant: ReferencePlant,
    mut model: LinearPlantModel,
    r: f64,
    steps: usize,
) -> Result<Vec<DemoSample>> {
    let mut im = IndependentModelState::default();
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let y_p = plant.output();
        im = update_independent_model(&im, y_p, model.model_output);
        let u = classical_pfc_law(r, &im, &model)?;
        out.push(DemoSample {
            k,
            plant_output: y_p,
            model_output: model.model_output,
            input: u,
        });
        plant.step(u);
        model.step(u);
    }
    Ok(out)
}

/// Clamp both pedals to `[0, 1]`.
pub fn clamp_command(gas: f64, brake: f64) -> PedalCommand {
    PedalCommand::new(gas.clamp(0.0, 1.0), brake.clamp(0.0, 1.0))
}

/// Net the two pedal demands against each other and hand the remainder to
/// one pedal, as the PI split does, then clamp.
pub fn arbitrate_command(gas: f64, brake: f64) -> PedalCommand {
    let net = gas - brake;
    clamp_command(net, -net)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfcStep {
    pub command: PedalCommand,
    /// Set when a network produced a non-finite value; the command is then
    /// the coasting fallback.
    pub fault: Option<String>,
}

/// Neural controller wrapped with an independent model and amplitude limits.
#[derive(Debug, Clone)]
pub struct NeuralPfc {
    pub controller_net: MlpModel,
    pub plant_net: MlpModel,
    pub im_state: IndependentModelState,
    /// Per-step low-pass coefficient applied to the offset; 0 disables.
    pub offset_filter: f64,
    /// Combine the two network outputs into one pedal before clamping.
    /// Without it the pair can settle where both pedals are pressed, a
    /// state absent from the PI logs.
    pub arbitrate_pedals: bool,
    filtered_offset: f64,
    /// Plant-net predictions still waiting for the instant they refer to.
    pending: VecDeque<f64>,
    pub fault_count: usize,
    pub last_fault: Option<String>,
}

impl NeuralPfc {
    pub fn new(controller_net: MlpModel, plant_net: MlpModel, offset_filter: f64) -> Result<Self> {
        controller_net.validate()?;
        plant_net.validate()?;
        if controller_net.n_in != N_FEATURES || plant_net.n_in != N_FEATURES {
            return Err(Error::Dimension {
                expected: N_FEATURES,
                got: controller_net.n_in.min(plant_net.n_in),
            });
        }
        if controller_net.n_out != 2 || plant_net.n_out != 1 {
            return Err(Error::Config(
                "controller net needs 2 outputs and plant net 1 output".into(),
            ));
        }
        if controller_net.n_shift != plant_net.n_shift {
            return Err(Error::Config(format!(
                "controller net trained for N={} but plant net for N={}",
                controller_net.n_shift, plant_net.n_shift
            )));
        }
        if !(0.0..1.0).contains(&offset_filter) {
            return Err(Error::Config(format!("offset filter {offset_filter} outside [0, 1)")));
        }
        Ok(NeuralPfc {
            controller_net,
            plant_net,
            im_state: IndependentModelState::default(),
            offset_filter,
            arbitrate_pedals: true,
            filtered_offset: 0.0,
            pending: VecDeque::new(),
            fault_count: 0,
            last_fault: None,
        })
    }

    pub fn n_shift(&self) -> usize {
        self.controller_net.n_shift
    }

    pub fn filtered_offset(&self) -> f64 {
        self.filtered_offset
    }

    /// Forget all run-time state.
    pub fn reset(&mut self) {
        self.im_state = IndependentModelState::default();
        self.filtered_offset = 0.0;
        self.pending.clear();
        self.fault_count = 0;
        self.last_fault = None;
    }

    /// Controller-net input: the features with the desired speed replaced
    /// by the offset-corrected target.
    pub fn network_input(&self, features: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut x = *features;
        x[DESIRED_SPEED] = features[DESIRED_SPEED] - self.filtered_offset;
        x
    }

    pub fn step(&mut self, features: &[f64; N_FEATURES]) -> PfcStep {
        let y_p = features[CURRENT_SPEED];

        // The plant net predicts speed N steps ahead; it is compared with the
        // measurement once that instant arrives.
        let prediction = self.plant_net.forward(features).map(|y| y[0]);
        let prediction = match prediction {
            Ok(v) if v.is_finite() => v,
            _ => {
                self.pending.push_back(y_p);
                self.trim_pending();
                return self.fault("plant model produced a non-finite prediction");
            }
        };
        self.pending.push_back(prediction);
        let y_m = if self.pending.len() > self.n_shift() {
            self.pending.pop_front().unwrap_or(y_p)
        } else {
            y_p
        };

        self.im_state = update_independent_model(&self.im_state, y_p, y_m);
        let a = self.offset_filter;
        self.filtered_offset = a * self.filtered_offset + (1.0 - a) * self.im_state.offset;

        let input = self.network_input(features);
        match self.controller_net.forward(&input) {
            Ok(u) if u.iter().all(|v| v.is_finite()) => PfcStep {
                command: if self.arbitrate_pedals {
                    arbitrate_command(u[0], u[1])
                } else {
                    clamp_command(u[0], u[1])
                },
                fault: None,
            },
            _ => self.fault("controller network produced a non-finite command"),
        }
    }

    fn trim_pending(&mut self) {
        while self.pending.len() > self.n_shift() {
            self.pending.pop_front();
        }
    }

    fn fault(&mut self, msg: &str) -> PfcStep {
        self.fault_count += 1;
        self.last_fault = Some(msg.to_string());
        PfcStep {
            command: PedalCommand::COAST,
            fault: Some(msg.to_string()),
        }
    }
}

impl SpeedController for NeuralPfc {
    fn command(&mut self, obs: &SampleRecord, _target: &DriverTarget, _dt: f64) -> Result<PedalCommand> {
        let step = self.step(&obs.features());
        if let Some(msg) = &step.fault {
            log::warn!("t={:.2}s: {msg}; coasting", obs.time);
        }
        Ok(step.command)
    }
}

/// On-disk controller bundle: two model files plus wiring parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub controller_net: String,
    pub plant_net: String,
    pub n_shift: usize,
    pub offset_filter: f64,
    #[serde(default = "default_true")]
    pub arbitrate_pedals: bool,
}

fn default_true() -> bool {
    true
}

impl BundleManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    /// Load the referenced models, resolved relative to the manifest's
    /// directory.
    pub fn instantiate(&self, manifest_path: impl AsRef<Path>) -> Result<NeuralPfc> {
        let dir = manifest_path
            .as_ref()
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let controller = MlpModel::load(dir.join(&self.controller_net))?;
        let plant = MlpModel::load(dir.join(&self.plant_net))?;
        if controller.n_shift != self.n_shift {
            return Err(Error::Config(format!(
                "bundle declares N={} but controller net was trained for N={}",
                self.n_shift, controller.n_shift
            )));
        }
        let mut pfc = NeuralPfc::new(controller, plant, self.offset_filter)?;
        pfc.arbitrate_pedals = self.arbitrate_pedals;
        Ok(pfc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<NeuralPfc> {
    BundleManifest::load(&path)?.instantiate(&path)
}
