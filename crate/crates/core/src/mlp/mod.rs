//! Two-layer fitting network: tanh hidden layer, linear output layer, and
//! per-feature min-max scaling of inputs and outputs to `[-1, 1]`.
//!
//! Trainable parameters are laid out, everywhere in this crate, as
//!
//! 1. hidden weights `w1`, row-major `n_hidden × n_in`
//! 2. hidden biases `b1`
//! 3. output weights `w2`, row-major `n_out × n_hidden`
//! 4. output biases `b2`

mod lm;

pub use lm::{train_lm, train_lm_from, EpochLog, LmConfig, StopReason, TrainingLog};

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_json;

/// Map each feature affinely so that `min → -1` and `max → +1`.
///
/// Features whose range is empty (`max <= min`) are constant and map to 0.
pub fn normalize(x: &[f64], min: &[f64], max: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(min.iter().zip(max))
        .map(|(&v, (&lo, &hi))| {
            if hi > lo {
                2.0 * (v - lo) / (hi - lo) - 1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Inverse of [`normalize`]. Constant features come back as their `min`.
pub fn denormalize(y: &[f64], min: &[f64], max: &[f64]) -> Vec<f64> {
    y.iter()
        .zip(min.iter().zip(max))
        .map(|(&v, (&lo, &hi))| {
            if hi > lo {
                (v + 1.0) * (hi - lo) / 2.0 + lo
            } else {
                lo
            }
        })
        .collect()
}

/// Column-wise minimum and maximum of a sample set.
pub fn bounds<R: AsRef<[f64]>>(rows: &[R], width: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; width];
    let mut hi = vec![f64::NEG_INFINITY; width];
    for row in rows {
        for (i, &v) in row.as_ref().iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    /// Steps ahead the targets were shifted during training.
    pub n_shift: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub in_min: Vec<f64>,
    pub in_max: Vec<f64>,
    pub out_min: Vec<f64>,
    pub out_max: Vec<f64>,
}

impl MlpModel {
    /// Fresh model with weights drawn uniformly from `[-0.5, 0.5]`.
    pub fn init<R: Rng>(
        n_in: usize,
        n_hidden: usize,
        n_out: usize,
        input_bounds: (Vec<f64>, Vec<f64>),
        output_bounds: (Vec<f64>, Vec<f64>),
        rng: &mut R,
    ) -> Self {
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-0.5..=0.5)).collect::<Vec<f64>>();
        let w1 = draw(n_hidden * n_in);
        let b1 = draw(n_hidden);
        let w2 = draw(n_out * n_hidden);
        let b2 = draw(n_out);
        MlpModel {
            n_in,
            n_hidden,
            n_out,
            n_shift: 0,
            w1,
            b1,
            w2,
            b2,
            in_min: input_bounds.0,
            in_max: input_bounds.1,
            out_min: output_bounds.0,
            out_max: output_bounds.1,
        }
    }

    pub fn param_count(&self) -> usize {
        self.n_hidden * (self.n_in + 1) + self.n_out * (self.n_hidden + 1)
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.extend_from_slice(&self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count());
        let (w1, rest) = p.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, b2) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2.copy_from_slice(b2);
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            (self.w1.len(), self.n_hidden * self.n_in),
            (self.b1.len(), self.n_hidden),
            (self.w2.len(), self.n_out * self.n_hidden),
            (self.b2.len(), self.n_out),
            (self.in_min.len(), self.n_in),
            (self.in_max.len(), self.n_in),
            (self.out_min.len(), self.n_out),
            (self.out_max.len(), self.n_out),
        ];
        for (got, expected) in dims {
            if got != expected {
                return Err(Error::Dimension { expected, got });
            }
        }
        if !self.params().iter().all(|v| v.is_finite()) {
            return Err(Error::Config("model has non-finite weights".into()));
        }
        Ok(())
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        normalize(x, &self.in_min, &self.in_max)
    }

    pub fn normalize_output(&self, y: &[f64]) -> Vec<f64> {
        normalize(y, &self.out_min, &self.out_max)
    }

    /// Hidden activations for a normalized input.
    fn hidden(&self, xn: &[f64], out: &mut [f64]) {
        for (h, slot) in out.iter_mut().enumerate() {
            let row = &self.w1[h * self.n_in..(h + 1) * self.n_in];
            let z: f64 = row.iter().zip(xn).map(|(w, x)| w * x).sum::<f64>() + self.b1[h];
            *slot = z.tanh();
        }
    }

    /// Network output in normalized units.
    pub fn forward_normalized(&self, xn: &[f64]) -> Vec<f64> {
        let mut hidden = vec![0.0; self.n_hidden];
        self.hidden(xn, &mut hidden);
        self.output_from_hidden(&hidden)
    }

    fn output_from_hidden(&self, hidden: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|j| {
                let row = &self.w2[j * self.n_hidden..(j + 1) * self.n_hidden];
                row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>() + self.b2[j]
            })
            .collect()
    }

    /// Raw-unit prediction for a raw-unit input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(Error::Dimension {
                expected: self.n_in,
                got: x.len(),
            });
        }
        let yn = self.forward_normalized(&self.normalize_input(x));
        Ok(denormalize(&yn, &self.out_min, &self.out_max))
    }

    /// Write one sample's Jacobian rows (one per output) into `rows`, a
    /// row-major `n_out × param_count` block.
    pub(crate) fn jacobian_rows(&self, xn: &[f64], hidden: &mut [f64], rows: &mut [f64]) {
        let p = self.param_count();
        let (n_in, n_hid) = (self.n_in, self.n_hidden);
        let b1_off = n_hid * n_in;
        let w2_off = b1_off + n_hid;
        let b2_off = w2_off + self.n_out * n_hid;
        self.hidden(xn, hidden);
        rows.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n_out {
            let row = &mut rows[j * p..(j + 1) * p];
            for h in 0..n_hid {
                // d tanh = 1 - tanh²
                let back = self.w2[j * n_hid + h] * (1.0 - hidden[h] * hidden[h]);
                for i in 0..n_in {
                    row[h * n_in + i] = back * xn[i];
                }
                row[b1_off + h] = back;
                row[w2_off + j * n_hid + h] = hidden[h];
            }
            row[b2_off + j] = 1.0;
        }
    }

    /// Jacobian of the normalized outputs with respect to every parameter,
    /// one row per (sample, output) pair, sample-major.
    pub fn jacobian<R: AsRef<[f64]>>(&self, normalized_inputs: &[R]) -> DMatrix<f64> {
        let p = self.param_count();
        let mut jac = DMatrix::zeros(normalized_inputs.len() * self.n_out, p);
        let mut hidden = vec![0.0; self.n_hidden];
        let mut block = vec![0.0; self.n_out * p];
        for (s, xn) in normalized_inputs.iter().enumerate() {
            self.jacobian_rows(xn.as_ref(), &mut hidden, &mut block);
            for j in 0..self.n_out {
                for c in 0..p {
                    jac[(s * self.n_out + j, c)] = block[j * p + c];
                }
            }
        }
        jac
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: MlpModel = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}
