//! Levenberg-Marquardt training with `μI` damping.
//!
//! Each epoch forms the normal equations `(JᵀJ + μI) δ = Jᵀe` from the
//! current Jacobian, retrying with larger `μ` until a step lowers the
//! training SSE. The normal equations are accumulated block by block in a
//! fixed order, so the result does not depend on how the work is split.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bounds, MlpModel};
use crate::error::{Error, Result};

const BLOCK_SAMPLES: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub mu_init: f64,
    pub mu_increase: f64,
    pub mu_decrease: f64,
    pub mu_max: f64,
    pub max_epochs: usize,
    /// Stop once the normalized training MSE falls to this value.
    pub goal_mse: f64,
    /// Fraction of samples, taken from the tail, held out for validation.
    pub validation_fraction: f64,
    pub max_validation_failures: usize,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            mu_init: 1e-3,
            mu_increase: 10.0,
            mu_decrease: 0.1,
            mu_max: 1e10,
            max_epochs: 1000,
            goal_mse: 1e-7,
            validation_fraction: 0.15,
            max_validation_failures: 6,
            seed: 1,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu_init > 0.0
            && self.mu_increase > 1.0
            && self.mu_decrease > 0.0
            && self.mu_decrease < 1.0
            && self.mu_max >= self.mu_init
            && self.goal_mse >= 0.0
            && (0.0..1.0).contains(&self.validation_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid LM configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Goal,
    MaxEpochs,
    MuMax,
    ValidationStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mu: f64,
    pub train_mse: f64,
    /// NaN when no validation split is used.
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub stop: StopReason,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mu,train_mse,val_mse\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", e.epoch, e.mu, e.train_mse, e.val_mse));
        }
        out
    }

    pub fn final_train_mse(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.train_mse)
    }
}

/// Normalized samples stored flat, row-major.
struct Samples {
    x: Vec<f64>,
    t: Vec<f64>,
    n_in: usize,
    n_out: usize,
}

impl Samples {
    fn new<R: AsRef<[f64]>>(model: &MlpModel, inputs: &[R], targets: &[R]) -> Self {
        let mut x = Vec::with_capacity(inputs.len() * model.n_in);
        let mut t = Vec::with_capacity(targets.len() * model.n_out);
        for (xi, ti) in inputs.iter().zip(targets) {
            x.extend(model.normalize_input(xi.as_ref()));
            t.extend(model.normalize_output(ti.as_ref()));
        }
        Samples {
            x,
            t,
            n_in: model.n_in,
            n_out: model.n_out,
        }
    }

    fn len(&self) -> usize {
        self.x.len() / self.n_in.max(1)
    }

    fn input(&self, s: usize) -> &[f64] {
        &self.x[s * self.n_in..(s + 1) * self.n_in]
    }

    fn target(&self, s: usize) -> &[f64] {
        &self.t[s * self.n_out..(s + 1) * self.n_out]
    }

    fn split(self, n_val: usize) -> (Samples, Samples) {
        let n_train = self.len() - n_val;
        let (xa, xb) = self.x.split_at(n_train * self.n_in);
        let (ta, tb) = self.t.split_at(n_train * self.n_out);
        let make = |x: &[f64], t: &[f64]| Samples {
            x: x.to_vec(),
            t: t.to_vec(),
            n_in: self.n_in,
            n_out: self.n_out,
        };
        (make(xa, ta), make(xb, tb))
    }

    fn sse(&self, model: &MlpModel) -> f64 {
        let mut total = 0.0;
        for s in 0..self.len() {
            let y = model.forward_normalized(self.input(s));
            for (yj, tj) in y.iter().zip(self.target(s)) {
                total += (tj - yj) * (tj - yj);
            }
        }
        total
    }

    fn mse(&self, model: &MlpModel) -> f64 {
        if self.len() == 0 {
            f64::NAN
        } else {
            self.sse(model) / (self.len() * self.n_out) as f64
        }
    }

    /// `JᵀJ`, `Jᵀe` (with `e = t - y`) and the SSE at the model's parameters.
    fn normal_equations(&self, model: &MlpModel) -> (DMatrix<f64>, DVector<f64>, f64) {
        let p = model.param_count();
        let n_out = self.n_out;
        let mut jtj = DMatrix::zeros(p, p);
        let mut jte = DVector::zeros(p);
        let mut sse = 0.0;
        let mut hidden = vec![0.0; model.n_hidden];
        let mut rows = vec![0.0; n_out * p];
        let mut start = 0;
        while start < self.len() {
            let end = (start + BLOCK_SAMPLES).min(self.len());
            let count = (end - start) * n_out;
            let mut block = DMatrix::zeros(count, p);
            let mut err = DVector::zeros(count);
            for s in start..end {
                let xn = self.input(s);
                model.jacobian_rows(xn, &mut hidden, &mut rows);
                let y = model.forward_normalized(xn);
                for j in 0..n_out {
                    let r = (s - start) * n_out + j;
                    for c in 0..p {
                        block[(r, c)] = rows[j * p + c];
                    }
                    let e = self.target(s)[j] - y[j];
                    err[r] = e;
                    sse += e * e;
                }
            }
            jtj.gemm_tr(1.0, &block, &block, 1.0);
            jte.gemv_tr(1.0, &block, &err, 1.0);
            start = end;
        }
        (jtj, jte, sse)
    }
}

/// Train a fresh `n_hidden` network on raw-unit data.
///
/// Normalization bounds come from the full data set; the validation split
/// is the contiguous tail.
pub fn train_lm<R: AsRef<[f64]>>(
    inputs: &[R],
    targets: &[R],
    n_hidden: usize,
    cfg: &LmConfig,
) -> Result<(MlpModel, TrainingLog)> {
    let (n_in, n_out) = shape(inputs, targets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = MlpModel::init(
        n_in,
        n_hidden,
        n_out,
        bounds(inputs, n_in),
        bounds(targets, n_out),
        &mut rng,
    );
    train_lm_from(model, inputs, targets, cfg)
}

fn shape<R: AsRef<[f64]>>(inputs: &[R], targets: &[R]) -> Result<(usize, usize)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Training(format!(
            "need equal, non-zero input and target counts (got {} and {})",
            inputs.len(),
            targets.len()
        )));
    }
    let n_in = inputs[0].as_ref().len();
    let n_out = targets[0].as_ref().len();
    for (x, t) in inputs.iter().zip(targets) {
        if x.as_ref().len() != n_in {
            return Err(Error::Dimension { expected: n_in, got: x.as_ref().len() });
        }
        if t.as_ref().len() != n_out {
            return Err(Error::Dimension { expected: n_out, got: t.as_ref().len() });
        }
        if !t.as_ref().iter().all(|v| v.is_finite()) {
            return Err(Error::Training("non-finite training target".into()));
        }
    }
    Ok((n_in, n_out))
}

/// Continue training `model`, keeping its normalization bounds.
pub fn train_lm_from<R: AsRef<[f64]>>(
    mut model: MlpModel,
    inputs: &[R],
    targets: &[R],
    cfg: &LmConfig,
) -> Result<(MlpModel, TrainingLog)> {
    cfg.validate()?;
    let (n_in, n_out) = shape(inputs, targets)?;
    if n_in != model.n_in || n_out != model.n_out {
        return Err(Error::Dimension {
            expected: model.n_in,
            got: n_in,
        });
    }
    let n_val = (inputs.len() as f64 * cfg.validation_fraction).floor() as usize;
    let n_train = inputs.len() - n_val;
    if n_train == 0 {
        return Err(Error::Training("validation split leaves no training data".into()));
    }
    if n_train * n_out <= model.param_count() {
        log::warn!(
            "{} training residuals for {} parameters; the fit is under-determined",
            n_train * n_out,
            model.param_count()
        );
    }
    let (train, val) = Samples::new(&model, inputs, targets).split(n_val);
    let rows = (train.len() * n_out) as f64;
    let p = model.param_count();

    let mut mu = cfg.mu_init;
    let mut params = model.params();
    let (mut jtj, mut jte, mut sse) = train.normal_equations(&model);
    let mut val_mse = val.mse(&model);
    let mut best = (params.clone(), val_mse, 0usize);
    let mut failures = 0;
    let mut epochs = vec![EpochLog {
        epoch: 0,
        mu,
        train_mse: sse / rows,
        val_mse,
    }];

    let stop = 'train: loop {
        let epoch = epochs.len();
        if !sse.is_finite() {
            return Err(Error::Training(format!("training error became non-finite at epoch {epoch}")));
        }
        if sse / rows <= cfg.goal_mse {
            break StopReason::Goal;
        }
        if epoch > cfg.max_epochs {
            break StopReason::MaxEpochs;
        }

        // search for a damping that lowers the training error
        loop {
            let mut lhs = jtj.clone();
            for d in 0..p {
                lhs[(d, d)] += mu;
            }
            let step = match Cholesky::new(lhs) {
                Some(chol) => chol.solve(&jte),
                None => {
                    mu *= cfg.mu_increase;
                    if mu > cfg.mu_max {
                        return Err(Error::Training(format!(
                            "normal equations singular up to mu={:e} at epoch {epoch}",
                            cfg.mu_max
                        )));
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(w, d)| w + d).collect();
            model.set_params(&trial);
            let trial_sse = train.sse(&model);
            if trial_sse < sse {
                params = trial;
                mu *= cfg.mu_decrease;
                break;
            }
            mu *= cfg.mu_increase;
            if mu > cfg.mu_max {
                model.set_params(&params);
                break 'train StopReason::MuMax;
            }
        }

        let previous = sse;
        (jtj, jte, sse) = train.normal_equations(&model);
        assert!(sse <= previous, "accepted step raised training SSE");
        val_mse = val.mse(&model);
        epochs.push(EpochLog {
            epoch,
            mu,
            train_mse: sse / rows,
            val_mse,
        });

        if val.len() > 0 {
            if val_mse < best.1 {
                best = (params.clone(), val_mse, epoch);
                failures = 0;
            } else {
                failures += 1;
                if failures >= cfg.max_validation_failures {
                    break StopReason::ValidationStop;
                }
            }
        }
    };

    let best_epoch = if val.len() > 0 {
        model.set_params(&best.0);
        best.2
    } else {
        model.set_params(&params);
        epochs.len() - 1
    };
    Ok((
        model,
        TrainingLog {
            epochs,
            stop,
            best_epoch,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xs = vec![vec![0.0], vec![0.5], vec![1.0]];
        let ys = xs.iter().map(|x| vec![3.0 * x[0] + 1.0]).collect();
        (xs, ys)
    }

    fn exact_cfg() -> LmConfig {
        LmConfig {
            goal_mse: 1e-16,
            validation_fraction: 0.0,
            max_epochs: 500,
            ..LmConfig::default()
        }
    }

    #[test]
    fn fits_a_line() {
        let (xs, ys) = line_data();
        let (model, log) = train_lm(&xs, &ys, 2, &exact_cfg()).unwrap();
        let raw_mse: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (model.forward(x).unwrap()[0] - y[0]).powi(2))
            .sum::<f64>()
            / 3.0;
        assert!(raw_mse < 1e-8, "raw mse {raw_mse}, log {:?}", log.stop);
    }

    #[test]
    fn already_optimal_stops_immediately() {
        let (xs, _) = line_data();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = MlpModel::init(1, 3, 1, (vec![0.0], vec![1.0]), (vec![-2.0], vec![2.0]), &mut rng);
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| model.forward(x).unwrap()).collect();
        let (trained, log) = train_lm_from(model.clone(), &xs, &ys, &exact_cfg()).unwrap();
        assert!(log.epochs.len() <= 2);
        assert_eq!(log.stop, StopReason::Goal);
        assert!(log.final_train_mse() < 1e-20);
        assert_eq!(trained, model);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 10.0, (i % 7) as f64]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![(x[0]).sin() + 0.1 * x[1]]).collect();
        let cfg = LmConfig { max_epochs: 30, ..LmConfig::default() };
        let (a, la) = train_lm(&xs, &ys, 4, &cfg).unwrap();
        let (b, lb) = train_lm(&xs, &ys, 4, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn training_error_never_rises() {
        let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 / 20.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![(3.0 * x[0]).cos(), x[0] * x[0]]).collect();
        let cfg = LmConfig { max_epochs: 50, validation_fraction: 0.0, ..LmConfig::default() };
        let (_, log) = train_lm(&xs, &ys, 5, &cfg).unwrap();
        for w in log.epochs.windows(2) {
            assert!(w[1].train_mse <= w[0].train_mse);
        }
        assert!(log.final_train_mse() < log.epochs[0].train_mse);
    }

    #[test]
    fn validation_returns_best_epoch() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![(x[0] / 5.0).sin()]).collect();
        let cfg = LmConfig { max_epochs: 40, ..LmConfig::default() };
        let (model, log) = train_lm(&xs, &ys, 3, &cfg).unwrap();
        let best = log.epochs[log.best_epoch].val_mse;
        assert!(log.epochs.iter().all(|e| e.val_mse >= best));
        // the returned model reproduces the logged validation error
        let val = Samples::new(&model, &xs[43..], &ys[43..]);
        assert!((val.mse(&model) - best).abs() < 1e-12);
    }

    #[test]
    fn log_csv_header() {
        let (xs, ys) = line_data();
        let (_, log) = train_lm(&xs, &ys, 2, &exact_cfg()).unwrap();
        let csv = log.to_csv();
        assert!(csv.starts_with("epoch,mu,train_mse,val_mse\n"));
        assert_eq!(csv.lines().count(), log.epochs.len() + 1);
    }

    #[test]
    fn rejects_bad_data() {
        let xs = vec![vec![0.0], vec![1.0]];
        let ys = vec![vec![0.0], vec![f64::NAN]];
        assert!(train_lm(&xs, &ys, 2, &exact_cfg()).is_err());
        let empty: Vec<Vec<f64>> = vec![];
        assert!(train_lm(&empty, &empty, 2, &exact_cfg()).is_err());
    }
}
