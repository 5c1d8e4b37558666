//! Baseline driver: ACC target generation, PI speed controller and the
//! gas/brake arbitration switch.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::road::RoadProfile;
use crate::vehicle::PedalCommand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccConfig {
    /// m/s²
    pub comfort_decel: f64,
    /// m
    pub lookahead: f64,
}

impl Default for AccConfig {
    fn default() -> Self {
        AccConfig {
            comfort_decel: 2.0,
            lookahead: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiConfig {
    pub kp: f64,
    pub ki: f64,
    /// Bound on the magnitude of the error integral.
    pub integrator_limit: f64,
}

impl Default for PiConfig {
    fn default() -> Self {
        PiConfig {
            kp: 0.8,
            ki: 0.3,
            integrator_limit: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverTarget {
    pub desired_speed: f64,
    pub desired_accel: f64,
}

/// Desired speed and acceleration from the road ahead.
///
/// Every limit within the look-ahead window contributes a constant
/// deceleration approach ramp `sqrt(v_lim² + 2·a·d)`; the smallest one wins.
pub fn acc_target(
    road: &RoadProfile,
    position: f64,
    speed: f64,
    cfg: &AccConfig,
    dt: f64,
) -> Result<DriverTarget> {
    let mut desired = road.limit_at(position)?;
    let horizon = position + cfg.lookahead;
    for (start, seg) in road.segment_starts() {
        if start <= position {
            continue;
        }
        if start > horizon {
            break;
        }
        let v_lim = road.effective_limit(seg);
        let ramp = (v_lim * v_lim + 2.0 * cfg.comfort_decel * (start - position)).sqrt();
        desired = desired.min(ramp);
    }
    let desired = desired.min(road.cruise_target);
    let bound = 2.0 * cfg.comfort_decel;
    Ok(DriverTarget {
        desired_speed: desired,
        desired_accel: ((desired - speed) / dt).clamp(-bound, bound),
    })
}

/// One PI update with conditional-integration anti-windup.
///
/// Returns the pedal command and the new integrator value. Positive effort
/// goes to the gas pedal, negative effort to the brake.
pub fn pi_step(
    target: &DriverTarget,
    speed: f64,
    integral: f64,
    cfg: &PiConfig,
    dt: f64,
) -> (PedalCommand, f64) {
    let error = target.desired_speed - speed;
    let candidate = (integral + error * dt).clamp(-cfg.integrator_limit, cfg.integrator_limit);
    let trial = cfg.kp * error + cfg.ki * candidate;
    let winding = (trial > 1.0 && error > 0.0) || (trial < -1.0 && error < 0.0);
    let integral = if winding { integral } else { candidate };
    let effort = cfg.kp * error + cfg.ki * integral;
    (split_effort(effort), integral)
}

fn split_effort(u: f64) -> PedalCommand {
    if u > 0.0 {
        PedalCommand::new(u.min(1.0), 0.0)
    } else if u < 0.0 {
        PedalCommand::new(0.0, (-u).min(1.0))
    } else {
        PedalCommand::COAST
    }
}

/// Controller output while the ACC requests a non-zero acceleration,
/// otherwise the maneuver (fallback) command.
pub fn arbitration_switch(
    controller_cmd: PedalCommand,
    maneuver_cmd: PedalCommand,
    desired_accel: f64,
) -> PedalCommand {
    if desired_accel != 0.0 {
        controller_cmd
    } else {
        maneuver_cmd
    }
}

/// PI loop state owned by a simulation run.
#[derive(Debug, Clone)]
pub struct PiDriver {
    pub cfg: PiConfig,
    pub integral: f64,
}

impl PiDriver {
    pub fn new(cfg: PiConfig) -> Self {
        PiDriver { cfg, integral: 0.0 }
    }

    /// PI command passed through the arbitration switch with a coasting
    /// maneuver fallback.
    pub fn command(&mut self, target: &DriverTarget, speed: f64, dt: f64) -> PedalCommand {
        let (cmd, integral) = pi_step(target, speed, self.integral, &self.cfg, dt);
        self.integral = integral;
        arbitration_switch(cmd, PedalCommand::COAST, target.desired_accel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::{builtin_suite, RoadSegment, KMPH};

    fn target(v: f64) -> DriverTarget {
        DriverTarget {
            desired_speed: v,
            desired_accel: 0.0,
        }
    }

    #[test]
    fn cruise_far_from_zones() {
        let road = &builtin_suite()[0];
        let t = acc_target(road, 10.0, 22.0, &AccConfig::default(), 0.01).unwrap();
        assert!((t.desired_speed - 22.222).abs() < 1e-3);
    }

    #[test]
    fn approach_ramp() {
        let z2 = 20.0 * KMPH;
        let road = RoadProfile::new(
            "ramp",
            vec![
                RoadSegment { length: 1000.0, grade: 0.0, speed_limit: None },
                RoadSegment { length: 400.0, grade: 0.0, speed_limit: Some(z2) },
            ],
            80.0 * KMPH,
        )
        .unwrap();
        let cfg = AccConfig { comfort_decel: 2.0, lookahead: 300.0 };
        let t = acc_target(&road, 950.0, 20.0, &cfg, 0.01).unwrap();
        let expected = (z2 * z2 + 2.0 * 2.0 * 50.0).sqrt();
        assert!((t.desired_speed - expected).abs() < 1e-12);
        assert!((t.desired_speed - 230.864_f64.sqrt()).abs() < 1e-3);
        // inside the zone
        let t = acc_target(&road, 1100.0, 5.0, &cfg, 0.01).unwrap();
        assert_eq!(t.desired_speed, z2);
    }

    #[test]
    fn inside_zone_one() {
        let road = &builtin_suite()[0];
        let t = acc_target(road, 900.0, 14.0, &AccConfig::default(), 0.01).unwrap();
        assert!((t.desired_speed - 13.889).abs() < 1e-3);
    }

    #[test]
    fn desired_accel_clipped() {
        let road = &builtin_suite()[0];
        let cfg = AccConfig::default();
        let t = acc_target(road, 10.0, 0.0, &cfg, 0.01).unwrap();
        assert_eq!(t.desired_accel, 4.0);
        let t = acc_target(road, 900.0, 22.0, &cfg, 0.01).unwrap();
        assert_eq!(t.desired_accel, -4.0);
    }

    #[test]
    fn pi_examples() {
        let p = PiConfig { kp: 1.0, ki: 0.0, integrator_limit: 10.0 };
        let (cmd, i) = pi_step(&target(10.0), 10.0, 0.0, &PiConfig::default(), 0.01);
        assert_eq!(cmd, PedalCommand::COAST);
        assert_eq!(i, 0.0);
        let (cmd, _) = pi_step(&target(10.4), 10.0, 0.0, &p, 0.01);
        assert!((cmd.gas - 0.4).abs() < 1e-12);
        assert_eq!(cmd.brake, 0.0);
        let (cmd, _) = pi_step(&target(8.0), 10.0, 0.0, &p, 0.01);
        assert_eq!(cmd, PedalCommand::new(0.0, 1.0));
    }

    #[test]
    fn integrator_freezes_when_saturated() {
        let cfg = PiConfig::default();
        let mut integral = 0.0;
        for _ in 0..100_000 {
            let (cmd, i) = pi_step(&target(30.0), 0.0, integral, &cfg, 0.01);
            integral = i;
            assert_eq!(cmd.gas, 1.0);
        }
        assert_eq!(integral, 0.0);
        // a tiny integrator gain cannot saturate the output; the clamp holds
        let slow = PiConfig { kp: 0.0, ki: 1e-3, integrator_limit: 5.0 };
        let mut integral = 0.0;
        for _ in 0..100_000 {
            integral = pi_step(&target(1.0), 0.0, integral, &slow, 0.01).1;
            assert!(integral.abs() <= slow.integrator_limit);
        }
        assert_eq!(integral, 5.0);
    }

    #[test]
    fn switch_rule() {
        let a = PedalCommand::new(0.3, 0.0);
        let b = PedalCommand::new(0.0, 0.2);
        assert_eq!(arbitration_switch(a, b, 0.5), a);
        assert_eq!(arbitration_switch(a, b, -0.5), a);
        assert_eq!(arbitration_switch(a, b, 0.0), b);
        assert_eq!(arbitration_switch(a, a, 0.0), a);
        assert_eq!(arbitration_switch(a, a, 1.0), a);
    }
}
