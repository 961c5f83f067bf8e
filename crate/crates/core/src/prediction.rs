//! Per-output Gaussian-process regressors over discrete time.
//!
//! A `GprBank` imputes the missing state (controller side) or action
//! (actuator side) and forecasts one step ahead. All outputs of a bank share
//! one set of observation times, so the Gram factorization is shared and the
//! per-output posteriors differ only in their weight vectors. The bank keeps
//! the Cholesky factor of `R + sigma_n^2 I` up to date on ingestion;
//! posterior evaluation is read-only.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Kernel hyperparameters of the squared-exponential plus periodic kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    /// Output scale of the squared-exponential term.
    pub h_q: f64,
    /// Time scale of the squared-exponential term, in slots.
    pub h_k: f64,
    /// Frequency of the periodic term.
    pub nu: f64,
    /// Observation noise variance added to the training Gram matrix.
    pub sigma_n2: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            h_q: 1.0,
            h_k: 1.0,
            nu: 1.0,
            sigma_n2: 0.01,
        }
    }
}

/// `h_q^2 exp(-(k1-k2)^2 / (2 h_k^2)) + exp(-2 sin^2(nu pi (k1-k2)))`
pub fn kernel(k1: i64, k2: i64, p: &KernelParams) -> f64 {
    kernel_weighted(k1, k2, p, 1.0)
}

fn kernel_weighted(k1: i64, k2: i64, p: &KernelParams, periodic_weight: f64) -> f64 {
    let lag = (k1 - k2) as f64;
    let se = p.h_q * p.h_q * (-lag * lag / (2.0 * p.h_k * p.h_k)).exp();
    let periodic = (-2.0 * (p.nu * std::f64::consts::PI * lag).sin().powi(2)).exp();
    se + periodic_weight * periodic
}

/// Whether a sample entering the training set was actually received or is
/// the predictor's own output. Direct mode stores received samples only;
/// recursive mode stores both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Observed,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GprMode {
    Direct,
    Recursive,
}

/// Stacked per-output posterior at one test time. The cross-output
/// covariance is diagonal because the outputs are modeled independently.
#[derive(Debug, Clone)]
pub struct GprPrediction {
    pub mean: Vector,
    pub var: Vector,
}

impl GprPrediction {
    pub fn cov(&self) -> Matrix {
        Matrix::from_diagonal(&self.var)
    }
}

/// One bank of independent per-output GPs sharing observation times.
#[derive(Debug, Clone)]
pub struct GprBank {
    outputs: usize,
    params: KernelParams,
    mode: GprMode,
    capacity: Option<usize>,
    times: Vec<i64>,
    /// values[j][i] is output j at times[i].
    values: Vec<Vec<f64>>,
    /// Lower Cholesky factor of the noisy Gram matrix, row-major packed.
    chol: Vec<f64>,
    /// Per-output weight vectors (R + sigma^2 I)^{-1} q_j.
    weights: Vec<Vec<f64>>,
}

impl GprBank {
    pub fn new(outputs: usize, params: KernelParams, mode: GprMode, capacity: Option<usize>) -> Self {
        Self {
            outputs,
            params,
            mode,
            capacity,
            times: Vec::new(),
            values: vec![Vec::new(); outputs],
            chol: Vec::new(),
            weights: vec![Vec::new(); outputs],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    /// Stored samples of one output, oldest first.
    pub fn values(&self, output: usize) -> &[f64] {
        &self.values[output]
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Appends a sample. Direct mode ignores `Predicted` samples; recursive
    /// mode stores both kinds. Evicts the oldest sample past capacity.
    pub fn ingest(&mut self, time: i64, value: &Vector, kind: SampleKind) -> Result<()> {
        if self.mode == GprMode::Direct && kind == SampleKind::Predicted {
            return Ok(());
        }
        if value.len() != self.outputs {
            return Err(Error::Dimension("sample length disagrees with bank outputs".into()));
        }
        if let Some(&last) = self.times.last() {
            if time <= last {
                return Err(Error::NonIncreasingTime { last, got: time });
            }
        }
        self.times.push(time);
        for (j, column) in self.values.iter_mut().enumerate() {
            column.push(value[j]);
        }
        if let Some(cap) = self.capacity {
            if self.times.len() > cap {
                self.times.remove(0);
                for column in self.values.iter_mut() {
                    column.remove(0);
                }
                self.refactor_full();
                return Ok(());
            }
        }
        self.extend_factor();
        Ok(())
    }

    /// Posterior mean and variance of one output at a test time.
    pub fn posterior(&self, output: usize, time: i64) -> Result<(f64, f64)> {
        if output >= self.outputs {
            return Err(Error::Dimension(format!("output {output} out of range")));
        }
        if self.is_empty() {
            return Err(Error::ColdStart);
        }
        let (cross_solve, prior) = self.cross_terms(time);
        let n = self.len();
        let mut mean = 0.0;
        let weights = &self.weights[output];
        for i in 0..n {
            mean += kernel(time, self.times[i], &self.params) * weights[i];
        }
        let var = (prior - cross_solve).max(0.0);
        Ok((mean, var))
    }

    /// Stacks every output's posterior at a test time.
    pub fn predict(&self, time: i64) -> Result<GprPrediction> {
        if self.is_empty() {
            return Err(Error::ColdStart);
        }
        let (cross_solve, prior) = self.cross_terms(time);
        let var_value = (prior - cross_solve).max(0.0);
        let n = self.len();
        let mut mean = Vector::zeros(self.outputs);
        for j in 0..self.outputs {
            let weights = &self.weights[j];
            let mut m = 0.0;
            for i in 0..n {
                m += kernel(time, self.times[i], &self.params) * weights[i];
            }
            mean[j] = m;
        }
        Ok(GprPrediction {
            mean,
            var: Vector::from_element(self.outputs, var_value),
        })
    }

    /// Cold-start policy: before any reception the prediction is the zero
    /// prior mean with the prior variance at the test time.
    pub fn predict_or_prior(&self, time: i64) -> GprPrediction {
        match self.predict(time) {
            Ok(p) => p,
            Err(_) => GprPrediction {
                mean: Vector::zeros(self.outputs),
                var: Vector::from_element(self.outputs, kernel(time, time, &self.params)),
            },
        }
    }

    /// Shared part of every output's posterior at `time`:
    /// returns (rᵀ (R + sigma² I)⁻¹ r, R(time, time)).
    fn cross_terms(&self, time: i64) -> (f64, f64) {
        let n = self.len();
        let mut r = vec![0.0; n];
        for i in 0..n {
            r[i] = kernel(time, self.times[i], &self.params);
        }
        let y = self.forward_substitute(&r);
        let prior = kernel(time, time, &self.params);
        (y.iter().map(|v| v * v).sum::<f64>(), prior)
    }

    /// Solves L y = b for the packed lower factor.
    fn forward_substitute(&self, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.chol[i * (i + 1) / 2 + j] * y[j];
            }
            y[i] = acc / self.chol[i * (i + 1) / 2 + i];
        }
        y
    }

    /// Solves Lᵀ x = y.
    fn backward_substitute(&self, y: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in (i + 1)..n {
                acc -= self.chol[j * (j + 1) / 2 + i] * x[j];
            }
            x[i] = acc / self.chol[i * (i + 1) / 2 + i];
        }
        x
    }

    /// Appends one row to the Cholesky factor and refreshes the weights.
    fn extend_factor(&mut self) {
        let n = self.len();
        let t_new = self.times[n - 1];
        let mut row = vec![0.0; n - 1];
        for i in 0..n - 1 {
            row[i] = kernel(t_new, self.times[i], &self.params);
        }
        let diag = kernel(t_new, t_new, &self.params) + self.params.sigma_n2;

        // z solves L z = row against the factor of the previous n-1 points
        let mut z = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let mut acc = row[i];
            for j in 0..i {
                acc -= self.chol[i * (i + 1) / 2 + j] * z[j];
            }
            z[i] = acc / self.chol[i * (i + 1) / 2 + i];
        }
        let rem = diag - z.iter().map(|v| v * v).sum::<f64>();
        if rem <= 0.0 {
            // roundoff pushed the Schur complement negative; rebuild with jitter
            self.refactor_full();
            return;
        }
        self.chol.extend_from_slice(&z);
        self.chol.push(rem.sqrt());
        self.refresh_weights();
    }

    /// Full refactorization, with a progressively larger jitter if the Gram
    /// matrix is numerically semi-definite.
    fn refactor_full(&mut self) {
        let n = self.len();
        self.chol = vec![0.0; n * (n + 1) / 2];
        let mut jitter = 0.0;
        'attempt: loop {
            for i in 0..n {
                for j in 0..=i {
                    let mut acc = kernel(self.times[i], self.times[j], &self.params);
                    if i == j {
                        acc += self.params.sigma_n2 + jitter;
                    }
                    for k in 0..j {
                        acc -= self.chol[i * (i + 1) / 2 + k] * self.chol[j * (j + 1) / 2 + k];
                    }
                    if i == j {
                        if acc <= 0.0 {
                            jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
                            continue 'attempt;
                        }
                        self.chol[i * (i + 1) / 2 + j] = acc.sqrt();
                    } else {
                        self.chol[i * (i + 1) / 2 + j] = acc / self.chol[j * (j + 1) / 2 + j];
                    }
                }
            }
            break;
        }
        self.refresh_weights();
    }

    fn refresh_weights(&mut self) {
        for j in 0..self.outputs {
            let y = self.forward_substitute(&self.values[j]);
            self.weights[j] = self.backward_substitute(&y);
        }
    }
}

/// Controller-side surrogate for the actuator's training datum: the computed
/// action plus a fresh draw of the downlink estimation error, so the mirror
/// bank sees values with the same noise statistics as the actuator's.
pub fn mirror_action_datum(controller_action: &Vector, est_err_sample: &Vector) -> Vector {
    controller_action + est_err_sample
}
