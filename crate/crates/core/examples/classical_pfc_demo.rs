//! Classical PFC with an independent model: a constant output disturbance
//! and a plant gain the model gets wrong are both rejected.

use pfc_lab::pfc::{closed_loop_reference_demo, LinearPlantModel, ReferencePlant};

fn main() -> pfc_lab::Result<()> {
    let (pole, gain, r) = (0.9, 2.0, 1.0);
    for (d, ratio) in [(0.0, 1.0), (0.3, 1.0), (-0.5, 1.0), (0.3, 1.2), (0.3, 0.8)] {
        let model = LinearPlantModel::new(pole, gain)?;
        let plant = ReferencePlant::new(pole, gain * ratio, d);
        let traj = closed_loop_reference_demo(plant, model, r, 400)?;
        let last = traj.last().expect("non-empty trajectory");
        println!(
            "d={d:+.1} gain x{ratio:.1}: y_p={:.9} u={:.6} offset={:+.6}",
            last.plant_output,
            last.input,
            last.plant_output - last.model_output
        );
    }
    Ok(())
}
