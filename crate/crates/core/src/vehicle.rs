//! Longitudinal vehicle plant.
//!
//! A single-track, straight-line model of a mid-size sedan: interpolated
//! full-load torque curve scaled by the gas pedal, a discrete gearbox with a
//! hysteresis shift schedule, aerodynamic drag, rolling resistance, grade
//! force and a friction brake. Fuel is integrated from a constant brake
//! specific fuel consumption plus an idle floor.
//!
//! The update is semi-implicit Euler: speed first, then position from the
//! new speed. Engine speed is kinematically tied to wheel speed and held at
//! idle when the wheels turn too slowly.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY: f64 = 9.81;

/// Full-load torque curve, encoded as parallel arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueCurve {
    pub rpm: Vec<f64>,
    pub torque_nm: Vec<f64>,
}

impl TorqueCurve {
    /// Piecewise-linear lookup, clamped to the end knots.
    pub fn at(&self, rpm: f64) -> f64 {
        let keys = &self.rpm;
        let vals = &self.torque_nm;
        if rpm <= keys[0] {
            return vals[0];
        }
        let last = keys.len() - 1;
        if rpm >= keys[last] {
            return vals[last];
        }
        // first knot strictly greater than rpm
        let hi = keys.partition_point(|&k| k <= rpm);
        let lo = hi - 1;
        let frac = (rpm - keys[lo]) / (keys[hi] - keys[lo]);
        vals[lo] + frac * (vals[hi] - vals[lo])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub mass: f64,
    pub drag_coefficient: f64,
    pub frontal_area: f64,
    pub air_density: f64,
    pub rolling_resistance_coeff: f64,
    pub wheel_radius: f64,
    /// First gear first.
    pub gear_ratios: Vec<f64>,
    pub final_drive_ratio: f64,
    pub engine_torque_curve: TorqueCurve,
    pub idle_rpm: f64,
    pub redline_rpm: f64,
    pub upshift_rpm: f64,
    pub downshift_rpm: f64,
    pub max_brake_force: f64,
    /// g/kWh
    pub bsfc: f64,
    /// g/s
    pub idle_fuel_rate: f64,
    pub driveline_efficiency: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass: 1600.0,
            drag_coefficient: 0.30,
            frontal_area: 2.2,
            air_density: 1.225,
            rolling_resistance_coeff: 0.012,
            wheel_radius: 0.32,
            gear_ratios: vec![3.6, 2.1, 1.4, 1.0, 0.8],
            final_drive_ratio: 3.2,
            engine_torque_curve: TorqueCurve {
                rpm: vec![800.0, 1000.0, 1500.0, 2000.0, 3000.0, 4000.0, 5000.0, 6000.0, 6500.0],
                torque_nm: vec![150.0, 180.0, 230.0, 270.0, 300.0, 300.0, 280.0, 240.0, 210.0],
            },
            idle_rpm: 800.0,
            redline_rpm: 6500.0,
            upshift_rpm: 2000.0,
            downshift_rpm: 1100.0,
            max_brake_force: 12000.0,
            bsfc: 250.0,
            idle_fuel_rate: 0.15,
            driveline_efficiency: 0.9,
        }
    }
}

impl VehicleParams {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: VehicleParams =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("vehicle params: {msg}")));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if !(self.wheel_radius > 0.0) {
            return bad("wheel_radius must be positive");
        }
        if self.gear_ratios.is_empty() || self.gear_ratios.iter().any(|&g| !(g > 0.0)) {
            return bad("gear ratios must be positive");
        }
        if self.gear_ratios.windows(2).any(|w| w[1] >= w[0]) {
            return bad("gear ratios must strictly decrease with gear number");
        }
        if !(self.idle_rpm < self.downshift_rpm
            && self.downshift_rpm < self.upshift_rpm
            && self.upshift_rpm <= self.redline_rpm)
        {
            return bad("require idle < downshift < upshift <= redline");
        }
        let curve = &self.engine_torque_curve;
        if curve.rpm.is_empty() || curve.rpm.len() != curve.torque_nm.len() {
            return bad("torque curve arrays must be non-empty and equal length");
        }
        if curve.rpm.windows(2).any(|w| w[1] <= w[0]) {
            return bad("torque curve rpm keys must strictly increase");
        }
        if curve.torque_nm.iter().any(|&t| !(t >= 0.0)) {
            return bad("torque values must be non-negative");
        }
        if !(self.driveline_efficiency > 0.0 && self.driveline_efficiency <= 1.0) {
            return bad("driveline_efficiency must lie in (0, 1]");
        }
        if !(self.max_brake_force >= 0.0
            && self.bsfc >= 0.0
            && self.idle_fuel_rate >= 0.0
            && self.final_drive_ratio > 0.0)
        {
            return bad("brake force, bsfc, idle fuel and final drive must be non-negative");
        }
        Ok(())
    }

    /// ½ρC_dA, the quadratic drag constant.
    pub fn drag_constant(&self) -> f64 {
        0.5 * self.air_density * self.drag_coefficient * self.frontal_area
    }

    pub fn gear_count(&self) -> u32 {
        self.gear_ratios.len() as u32
    }

    /// Engine speed implied by wheel speed in `gear`, clamped to the
    /// operating range.
    pub fn slaved_rpm(&self, speed: f64, gear: u32) -> f64 {
        let ratio = self.gear_ratios[(gear - 1) as usize] * self.final_drive_ratio;
        let rpm = speed / self.wheel_radius * ratio * 60.0 / (2.0 * PI);
        rpm.clamp(self.idle_rpm, self.redline_rpm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub time: f64,
    pub position: f64,
    pub speed: f64,
    pub acceleration: f64,
    pub gear: u32,
    pub engine_rpm: f64,
    pub fuel_consumed: f64,
}

impl VehicleState {
    /// Vehicle at `position` moving at `speed`, in the gear the shift
    /// schedule would settle on.
    pub fn at_speed(params: &VehicleParams, position: f64, speed: f64) -> Self {
        let mut gear = 1;
        while gear < params.gear_count()
            && params.slaved_rpm(speed, gear) > params.upshift_rpm
        {
            gear += 1;
        }
        VehicleState {
            time: 0.0,
            position,
            speed,
            acceleration: 0.0,
            gear,
            engine_rpm: params.slaved_rpm(speed, gear),
            fuel_consumed: 0.0,
        }
    }

    pub fn standstill(params: &VehicleParams) -> Self {
        Self::at_speed(params, 0.0, 0.0)
    }
}

/// Normalized pedal positions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PedalCommand {
    pub gas: f64,
    pub brake: f64,
}

impl PedalCommand {
    pub const COAST: PedalCommand = PedalCommand { gas: 0.0, brake: 0.0 };

    pub fn new(gas: f64, brake: f64) -> Self {
        PedalCommand { gas, brake }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.gas) && (0.0..=1.0).contains(&self.brake)
    }
}

/// Full-load torque at `rpm` scaled by the gas pedal.
pub fn engine_torque(params: &VehicleParams, rpm: f64, gas: f64) -> f64 {
    let rpm = rpm.clamp(params.idle_rpm, params.redline_rpm);
    (gas * params.engine_torque_curve.at(rpm)).max(0.0)
}

/// One-step shift decision with a hysteresis band.
pub fn shift_gear(state: &VehicleState, params: &VehicleParams) -> u32 {
    let gear = state.gear;
    if state.engine_rpm > params.upshift_rpm && gear < params.gear_count() {
        gear + 1
    } else if state.engine_rpm < params.downshift_rpm && gear > 1 {
        gear - 1
    } else {
        gear
    }
}

/// Fuel mass flow in g/s.
pub fn fuel_rate(params: &VehicleParams, rpm: f64, torque: f64) -> f64 {
    let power_kw = torque * rpm * 2.0 * PI / 60.0 / 1000.0;
    params.idle_fuel_rate + params.bsfc * power_kw / 3600.0
}

/// Advance the plant by `dt` seconds on a road of the given grade.
pub fn step(
    state: &VehicleState,
    cmd: PedalCommand,
    grade: f64,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    let finite = [
        state.speed,
        state.position,
        state.engine_rpm,
        cmd.gas,
        cmd.brake,
        grade,
        dt,
    ]
    .iter()
    .all(|v| v.is_finite());
    if !finite {
        return Err(Error::Simulation(format!(
            "non-finite input at t={:.3}s (state {state:?}, command {cmd:?}, grade {grade})",
            state.time
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Simulation(format!("time step must be positive, got {dt}")));
    }
    if !cmd.is_valid() {
        return Err(Error::Simulation(format!(
            "pedal command outside [0,1]: {cmd:?}"
        )));
    }

    let ratio = params.gear_ratios[(state.gear - 1) as usize] * params.final_drive_ratio;
    let torque = engine_torque(params, state.engine_rpm, cmd.gas);
    let drive = torque * ratio * params.driveline_efficiency / params.wheel_radius;

    let cos = 1.0 / (1.0 + grade * grade).sqrt();
    let sin = grade * cos;
    let weight = params.mass * GRAVITY;
    let drag = params.drag_constant() * state.speed * state.speed;
    let rolling = params.rolling_resistance_coeff * weight * cos;
    let grade_force = weight * sin;
    let brake = if state.speed > 0.0 {
        cmd.brake * params.max_brake_force
    } else {
        0.0
    };

    let net = if state.speed > 0.0 {
        drive - brake - drag - rolling - grade_force
    } else {
        // static hold: brake and rolling resistance only resist motion, and
        // no rollback is modeled
        let propulsive = drive - grade_force;
        let hold = rolling + cmd.brake * params.max_brake_force;
        (propulsive - hold).max(0.0)
    };

    let speed = (state.speed + net / params.mass * dt).max(0.0);
    let position = state.position + speed * dt;
    let fuel = state.fuel_consumed + fuel_rate(params, state.engine_rpm, torque) * dt;

    let mut next = VehicleState {
        time: state.time + dt,
        position,
        speed,
        acceleration: (speed - state.speed) / dt,
        gear: state.gear,
        engine_rpm: params.slaved_rpm(speed, state.gear),
        fuel_consumed: fuel,
    };
    let gear = shift_gear(&next, params);
    if gear != next.gear {
        next.gear = gear;
        next.engine_rpm = params.slaved_rpm(speed, gear);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn defaults_validate() {
        params().validate().unwrap();
    }

    #[test]
    fn torque_zero_throttle() {
        let p = params();
        for rpm in [500.0, 800.0, 2500.0, 7000.0] {
            assert_eq!(engine_torque(&p, rpm, 0.0), 0.0);
        }
    }

    #[test]
    fn torque_at_knot_and_midpoint() {
        let mut p = params();
        p.engine_torque_curve = TorqueCurve {
            rpm: vec![800.0, 2000.0, 4000.0, 6500.0],
            torque_nm: vec![100.0, 250.0, 200.0, 300.0],
        };
        assert_eq!(engine_torque(&p, 2000.0, 1.0), 250.0);
        // midway between the 200 and 300 knots
        assert_relative_eq!(engine_torque(&p, 5250.0, 0.5), 125.0, epsilon = 1e-12);
    }

    #[test]
    fn shift_rules() {
        let p = params();
        let mut s = VehicleState::standstill(&p);
        s.gear = 2;
        s.engine_rpm = p.upshift_rpm + 1.0;
        assert_eq!(shift_gear(&s, &p), 3);
        s.gear = 1;
        s.engine_rpm = p.downshift_rpm - 1.0;
        assert_eq!(shift_gear(&s, &p), 1);
        s.gear = 3;
        s.engine_rpm = 0.5 * (p.upshift_rpm + p.downshift_rpm);
        assert_eq!(shift_gear(&s, &p), 3);
        s.gear = 5;
        s.engine_rpm = p.redline_rpm;
        assert_eq!(shift_gear(&s, &p), 5);
    }

    #[test]
    fn fuel_rate_formula() {
        let p = params();
        assert_eq!(fuel_rate(&p, 3000.0, 0.0), p.idle_fuel_rate);
        let expected = p.idle_fuel_rate + 250.0 * (100.0 * 3000.0 * 2.0 * PI / 60.0 / 1000.0) / 3600.0;
        assert_relative_eq!(fuel_rate(&p, 3000.0, 100.0), expected, max_relative = 1e-14);
        let above = |t| fuel_rate(&p, 3000.0, t) - p.idle_fuel_rate;
        assert_relative_eq!(above(200.0), 2.0 * above(100.0), max_relative = 1e-14);
    }

    #[test]
    fn launch_from_standstill() {
        let p = params();
        let s = VehicleState::standstill(&p);
        let next = step(&s, PedalCommand::new(1.0, 0.0), 0.0, &p, 0.01).unwrap();
        assert!(next.speed > 0.0);
    }

    #[test]
    fn brake_cannot_reverse() {
        let p = params();
        let s = VehicleState::standstill(&p);
        let next = step(&s, PedalCommand::new(0.0, 1.0), 0.0, &p, 0.01).unwrap();
        assert_eq!(next.speed, 0.0);
        assert_eq!(next.position, s.position);
        // also on an uphill grade
        let next = step(&s, PedalCommand::new(0.0, 0.0), 0.1, &p, 0.01).unwrap();
        assert_eq!(next.speed, 0.0);
    }

    #[test]
    fn hard_braking_stops_at_zero() {
        let p = params();
        let s = VehicleState::at_speed(&p, 0.0, 0.05);
        let next = step(&s, PedalCommand::new(0.0, 1.0), 0.0, &p, 0.01).unwrap();
        assert_eq!(next.speed, 0.0);
    }

    #[test]
    fn frictionless_speed_constant() {
        let mut p = params();
        p.drag_coefficient = 0.0;
        p.rolling_resistance_coeff = 0.0;
        let mut s = VehicleState::at_speed(&p, 0.0, 17.0);
        for _ in 0..1000 {
            s = step(&s, PedalCommand::COAST, 0.0, &p, 0.01).unwrap();
        }
        assert_eq!(s.speed, 17.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params();
        let s = VehicleState::standstill(&p);
        assert!(step(&s, PedalCommand::new(f64::NAN, 0.0), 0.0, &p, 0.01).is_err());
        assert!(step(&s, PedalCommand::new(1.5, 0.0), 0.0, &p, 0.01).is_err());
        assert!(step(&s, PedalCommand::COAST, 0.0, &p, 0.0).is_err());
        assert!(step(&s, PedalCommand::COAST, f64::INFINITY, &p, 0.01).is_err());
    }

    #[test]
    fn validation_catches_bad_params() {
        let mut p = params();
        p.gear_ratios = vec![3.0, 3.0];
        assert!(p.validate().is_err());
        let mut p = params();
        p.downshift_rpm = p.upshift_rpm + 1.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.mass = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn json_field_names() {
        let text = serde_json::to_string(&params()).unwrap();
        for key in ["\"mass\"", "\"engine_torque_curve\"", "\"rpm\"", "\"torque_nm\"", "\"bsfc\""] {
            assert!(text.contains(key), "{key} missing");
        }
        let back: VehicleParams = serde_json::from_str(&text).unwrap();
        assert_eq!(back, params());
    }
}
