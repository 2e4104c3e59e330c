//! Dense parameter containers and the scalar nonlinearities used by the heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Entries drawn from `U(-1/sqrt(cols), 1/sqrt(cols))`.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_consistent(&self) -> bool {
        self.data.len() == self.rows * self.cols
    }
}

/// Affine map `y = W x + b` with `W` of shape `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn init<R: Rng>(outputs: usize, inputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Matrix::uniform(outputs, inputs, rng),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs());
        (0..self.outputs())
            .map(|r| dot(self.weight.row(r), x) + self.bias[r])
            .collect()
    }

    /// Accumulates `dL/dW` and `dL/db` for upstream gradient `dy` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs()];
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[r] += g;
            for (gw, &xi) in grad.weight.row_mut(r).iter_mut().zip(x) {
                *gw += g * xi;
            }
            for (d, &w) in dx.iter_mut().zip(self.weight.row(r)) {
                *d += g * w;
            }
        }
        dx
    }

    pub fn is_consistent(&self) -> bool {
        self.weight.is_consistent() && self.bias.len() == self.weight.rows
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
