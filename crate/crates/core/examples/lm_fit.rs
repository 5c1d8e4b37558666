//! Fit small networks with Levenberg-Marquardt: an exact line and a noisy
//! sine with a validation split.

use pfc_lab::mlp::{train_lm, LmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pfc_lab::Result<()> {
    let xs = vec![vec![0.0], vec![0.5], vec![1.0]];
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![3.0 * x[0] + 1.0]).collect();
    let cfg = LmConfig {
        validation_fraction: 0.0,
        goal_mse: 0.0,
        max_epochs: 200,
        ..LmConfig::default()
    };
    let (model, log) = train_lm(&xs, &ys, 2, &cfg)?;
    println!(
        "line: {} epochs, stop {:?}, f(0.25) = {:.9}",
        log.epochs.len() - 1,
        log.stop,
        model.forward(&[0.25])?[0]
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<Vec<f64>> = (0..400).map(|i| vec![i as f64 / 400.0 * 6.0]).collect();
    let ys: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| vec![x[0].sin() + rng.gen_range(-0.05..0.05)])
        .collect();
    let (model, log) = train_lm(&xs, &ys, 8, &LmConfig::default())?;
    println!(
        "sine: best epoch {} of {}, stop {:?}",
        log.best_epoch,
        log.epochs.len() - 1,
        log.stop
    );
    for x in [0.5, 1.5, 3.0, 4.5] {
        println!("  sin({x}) = {:.4}, net {:.4}", f64::sin(x), model.forward(&[x])?[0]);
    }
    Ok(())
}
