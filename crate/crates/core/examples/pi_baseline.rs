//! Drive every built-in road with the PI baseline and summarize tracking
//! and fuel.

use pfc_lab::closed_loop::LoopSettings;
use pfc_lab::driver::{AccConfig, PiConfig};
use pfc_lab::eval::{run_controller, ControllerSpec};
use pfc_lab::road::builtin_suite;
use pfc_lab::vehicle::VehicleParams;

fn main() {
    let params = VehicleParams::default();
    let acc = AccConfig::default();
    let settings = LoopSettings::default();

    println!("{:<8} {:>9} {:>12} {:>8} {:>9}", "road", "time_s", "sse", "mse", "fuel_g");
    for road in builtin_suite() {
        let r = run_controller(&road, ControllerSpec::Pi(PiConfig::default()), &params, &acc, &settings);
        if let Some(err) = &r.failure {
            println!("{:<8} failed: {err}", road.name);
            continue;
        }
        println!(
            "{:<8} {:>9.1} {:>12.1} {:>8.3} {:>9.1}",
            r.road, r.duration, r.sse, r.mse, r.fuel
        );
    }
}
