//! Fixed-step closed loop shared by data collection and evaluation.

use crate::dataset::SampleRecord;
use crate::driver::{acc_target, AccConfig, DriverTarget, PiDriver};
use crate::error::{Error, Result};
use crate::road::RoadProfile;
use crate::vehicle::{step, PedalCommand, VehicleParams, VehicleState};

/// Anything that turns the logged vehicle observation into pedal positions.
///
/// `obs` carries every input field of the step's record; its control
/// fields are still zero when the controller is called.
pub trait SpeedController {
    fn command(&mut self, obs: &SampleRecord, target: &DriverTarget, dt: f64) -> Result<PedalCommand>;
}

impl SpeedController for PiDriver {
    fn command(&mut self, obs: &SampleRecord, target: &DriverTarget, dt: f64) -> Result<PedalCommand> {
        Ok(PiDriver::command(self, target, obs.current_speed, dt))
    }
}

#[derive(Debug, Clone)]
pub struct LoopSettings {
    pub dt: f64,
    /// Give up when the road is not finished after this many seconds.
    pub max_time: f64,
}

impl Default for LoopSettings {
    fn default() -> Self {
        LoopSettings {
            dt: 0.01,
            max_time: 900.0,
        }
    }
}

/// Drive `road` from standstill to its end, logging one record per step.
///
/// Returns the log and the vehicle state after the final step.
pub fn drive<C: SpeedController + ?Sized>(
    road: &RoadProfile,
    params: &VehicleParams,
    acc: &AccConfig,
    settings: &LoopSettings,
    controller: &mut C,
) -> Result<(Vec<SampleRecord>, VehicleState)> {
    let dt = settings.dt;
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let length = road.total_length();
    let max_steps = (settings.max_time / dt).ceil() as usize;
    let mut state = VehicleState::standstill(params);
    let mut applied = PedalCommand::COAST;
    let mut records = Vec::with_capacity((length / 10.0 / dt) as usize);

    while state.position < length {
        if records.len() >= max_steps {
            return Err(Error::Simulation(format!(
                "{}: road not completed within {} s (position {:.1} of {:.1} m)",
                road.name, settings.max_time, state.position, length
            )));
        }
        let target = acc_target(road, state.position, state.speed, acc, dt)?;
        let mut rec = SampleRecord {
            time: state.time,
            desired_speed: target.desired_speed,
            current_speed: state.speed,
            brake_actuator: applied.brake,
            gas_actuator: applied.gas,
            gear: state.gear,
            steer_angle: 0.0,
            steer_torque: 0.0,
            engine_rpm: state.engine_rpm,
            current_accel: state.acceleration,
            desired_accel: target.desired_accel,
            u_gas: 0.0,
            u_brake: 0.0,
            fuel_consumed: state.fuel_consumed,
        };
        let cmd = controller.command(&rec, &target, dt)?;
        if !cmd.is_valid() {
            return Err(Error::Simulation(format!(
                "{}: controller emitted {cmd:?} at t={:.2}s",
                road.name, state.time
            )));
        }
        rec.u_gas = cmd.gas;
        rec.u_brake = cmd.brake;
        records.push(rec);

        let grade = road.grade_at(state.position)?;
        state = step(&state, cmd, grade, params, dt)?;
        applied = cmd;
    }
    Ok((records, state))
}
