//! Coast a car down from 30 m/s with only aerodynamic drag and compare the
//! simulated speed with the closed-form solution.

use pfc_lab::vehicle::{step, PedalCommand, VehicleParams, VehicleState};

fn main() -> pfc_lab::Result<()> {
    let params = VehicleParams {
        rolling_resistance_coeff: 0.0,
        ..VehicleParams::default()
    };
    let k = params.drag_constant();
    let (v0, dt) = (30.0, 0.01);
    let mut state = VehicleState::at_speed(&params, 0.0, v0);

    println!("{:>5} {:>10} {:>10} {:>8}", "t", "simulated", "analytic", "rel_err");
    for i in 1..=1000 {
        state = step(&state, PedalCommand::COAST, 0.0, &params, dt)?;
        if i % 100 == 0 {
            let t = i as f64 * dt;
            let exact = v0 / (1.0 + v0 * k * t / params.mass);
            println!(
                "{t:>5.1} {:>10.4} {exact:>10.4} {:>8.1e}",
                state.speed,
                (state.speed - exact).abs() / exact
            );
        }
    }
    println!("idle fuel burned while coasting: {:.2} g", state.fuel_consumed);
    Ok(())
}
