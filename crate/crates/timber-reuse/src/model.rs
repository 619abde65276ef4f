//! Joint log posterior of the three-class logit model with element-wise
//! horseshoe priors on the coefficients, plus the conditional density used by
//! the discrete lower-threshold update.
//!
//! The continuous block lives on an unconstrained space: intercepts `alpha_c`,
//! standard-normal coefficient innovations `z_{c,j}`, and log-transformed
//! local/global scales. Coefficients are always reconstructed through the
//! non-centered identity `beta_{c,j} = z_{c,j} * tau_hs * lambda_j`, which
//! keeps the half-Cauchy scale funnel away from the gradient-based sampler.
//! The exp transforms of the scales carry explicit log-Jacobian terms.
//!
//! `tau_hs` is the horseshoe global scale; it is unrelated to the decision
//! thresholds `tau1`/`tau2`. The lower threshold `tau2` enters the posterior
//! only by relabeling observations, so its conditional is piecewise-constant
//! and is handled outside the gradient block (see the sampler module).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::grading::{assign_level, ReuseLevel, Thresholds};

/// Number of reuse levels / softmax classes.
pub const NUM_CLASSES: usize = 3;

const LN_2PI: f64 = 1.8378770664093453;

/// Fixed model configuration: predictor count, prior scales, and threshold
/// bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Number of predictors J.
    pub n_predictors: usize,
    /// Normal prior sd for the intercepts.
    pub intercept_scale: f64,
    /// Half-Cauchy scale for the horseshoe global scale tau_hs.
    pub global_scale: f64,
    /// Half-Cauchy scale for the local scales lambda_j.
    pub local_scale: f64,
    /// Fixed upper decision boundary on R.
    pub tau1: f64,
    /// Support of the uniform prior on the lower boundary.
    pub tau2_bounds: (f64, f64),
    /// Sensitivity mode: pin `alpha_1 = 0, beta_1 = 0` instead of soft
    /// identification through the priors.
    pub reference_class: bool,
}

impl ModelSpec {
    pub fn new(n_predictors: usize) -> ModelSpec {
        ModelSpec {
            n_predictors,
            intercept_scale: 5.0,
            global_scale: 1.0,
            local_scale: 1.0,
            tau1: 0.90,
            tau2_bounds: (0.70, 0.85),
            reference_class: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_predictors == 0 {
            return Err(Error::Config("model needs at least one predictor".into()));
        }
        if !(self.intercept_scale > 0.0 && self.global_scale > 0.0 && self.local_scale > 0.0) {
            return Err(Error::Config("prior scales must be positive".into()));
        }
        let (lo, hi) = self.tau2_bounds;
        if !(0.0 < lo && lo < hi && hi < self.tau1 && self.tau1 <= 1.0) {
            return Err(Error::Config(format!(
                "tau2 bounds ({lo}, {hi}) must lie inside (0, tau1 = {})",
                self.tau1
            )));
        }
        Ok(())
    }

    /// Classes with free (sampled) intercept/coefficient rows.
    pub fn free_classes(&self) -> usize {
        if self.reference_class {
            NUM_CLASSES - 1
        } else {
            NUM_CLASSES
        }
    }

    /// Index of the first free class (1 when the reference class is pinned).
    fn class_offset(&self) -> usize {
        NUM_CLASSES - self.free_classes()
    }

    /// Total unconstrained dimension: alphas, innovations, log local scales,
    /// log global scale.
    pub fn dim(&self) -> usize {
        let cf = self.free_classes();
        let j = self.n_predictors;
        cf + cf * j + j + 1
    }

    fn z_offset(&self) -> usize {
        self.free_classes()
    }

    fn eta_lambda_offset(&self) -> usize {
        let cf = self.free_classes();
        cf + cf * self.n_predictors
    }

    fn eta_tau_offset(&self) -> usize {
        self.eta_lambda_offset() + self.n_predictors
    }

    /// Unpack a flat unconstrained vector into named blocks. Pinned rows come
    /// back as explicit zeros.
    pub fn unpack(&self, theta: &[f64]) -> Result<ParameterVector> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.dim(),
                actual: theta.len(),
            });
        }
        let j = self.n_predictors;
        let off = self.class_offset();
        let mut alpha = vec![0.0; NUM_CLASSES];
        let mut z = Array2::zeros((NUM_CLASSES, j));
        for c in off..NUM_CLASSES {
            alpha[c] = theta[c - off];
            for col in 0..j {
                z[(c, col)] = theta[self.z_offset() + (c - off) * j + col];
            }
        }
        let eta_lambda = theta[self.eta_lambda_offset()..self.eta_tau_offset()].to_vec();
        let eta_tau = theta[self.eta_tau_offset()];
        Ok(ParameterVector {
            alpha,
            z,
            eta_lambda,
            eta_tau,
        })
    }

    /// Pack named blocks into the flat unconstrained layout.
    pub fn pack(&self, params: &ParameterVector) -> Vec<f64> {
        let j = self.n_predictors;
        let off = self.class_offset();
        let mut theta = vec![0.0; self.dim()];
        for c in off..NUM_CLASSES {
            theta[c - off] = params.alpha[c];
            for col in 0..j {
                theta[self.z_offset() + (c - off) * j + col] = params.z[(c, col)];
            }
        }
        theta[self.eta_lambda_offset()..self.eta_tau_offset()]
            .copy_from_slice(&params.eta_lambda);
        theta[self.eta_tau_offset()] = params.eta_tau;
        theta
    }
}

/// Named view of the unconstrained state. `alpha` and `z` always have all
/// three class rows; pinned rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub alpha: Vec<f64>,
    pub z: Array2<f64>,
    pub eta_lambda: Vec<f64>,
    pub eta_tau: f64,
}

/// Log posterior value and its gradient over the unconstrained coordinates.
#[derive(Debug, Clone)]
pub struct LogDensityResult {
    pub logp: f64,
    pub grad: Vec<f64>,
}

/// Reconstruct the natural-scale coefficient matrix
/// `beta_{c,j} = z_{c,j} * exp(eta_tau) * exp(eta_lambda_j)`.
pub fn reconstruct_beta(params: &ParameterVector) -> Array2<f64> {
    let tau_hs = params.eta_tau.exp();
    let j = params.eta_lambda.len();
    let mut beta = Array2::zeros((NUM_CLASSES, j));
    for c in 0..NUM_CLASSES {
        for col in 0..j {
            beta[(c, col)] = params.z[(c, col)] * tau_hs * params.eta_lambda[col].exp();
        }
    }
    beta
}

fn logits_for_row(alpha: &[f64], beta: &Array2<f64>, x_row: &[f64]) -> [f64; NUM_CLASSES] {
    let mut logits = [0.0; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let mut acc = alpha[c];
        for (j, &xv) in x_row.iter().enumerate() {
            acc += beta[(c, j)] * xv;
        }
        logits[c] = acc;
    }
    logits
}

fn log_softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &l in logits {
        sum += (l - max).exp();
    }
    let lse = max + sum.ln();
    [logits[0] - lse, logits[1] - lse, logits[2] - lse]
}

/// Class probabilities of the three-way logit, computed with max-subtraction
/// so extreme logits stay finite. Output is a strictly positive simplex.
pub fn class_probabilities(alpha: &[f64], beta: &Array2<f64>, x_row: &[f64]) -> [f64; NUM_CLASSES] {
    let log_p = log_softmax(&logits_for_row(alpha, beta, x_row));
    let mut p = [0.0; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        // exp can underflow to zero for logit gaps beyond ~700; keep the
        // simplex strict by flooring at the smallest positive double.
        p[c] = log_p[c].exp().max(f64::MIN_POSITIVE);
    }
    p
}

/// Categorical log likelihood of the labels under fixed natural-scale
/// parameters. Exposed separately so the likelihood term can be tested in
/// isolation from the priors.
pub fn log_likelihood(
    alpha: &[f64],
    beta: &Array2<f64>,
    labels: &[ReuseLevel],
    x: &Array2<f64>,
) -> f64 {
    let mut total = 0.0;
    for (i, label) in labels.iter().enumerate() {
        let row: Vec<f64> = x.row(i).to_vec();
        let log_p = log_softmax(&logits_for_row(alpha, beta, &row));
        total += log_p[label.class_index()];
    }
    total
}

fn log_half_cauchy(value: f64, scale: f64) -> f64 {
    // density 2 / (pi * s * (1 + (x/s)^2)) on x > 0
    let ratio = value / scale;
    (2.0 / (std::f64::consts::PI * scale)).ln() - (ratio * ratio).ln_1p()
}

/// Log posterior of the continuous block (conditional on the labels implied
/// by the current `tau2`) together with its exact analytic gradient.
pub fn logp_and_grad(
    theta: &[f64],
    labels: &[ReuseLevel],
    features: &FeatureMatrix,
    spec: &ModelSpec,
) -> Result<LogDensityResult> {
    let d = spec.dim();
    if theta.len() != d {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: d,
            actual: theta.len(),
        });
    }
    if labels.len() != features.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: features.n_rows(),
            actual: labels.len(),
        });
    }

    let j = spec.n_predictors;
    if features.n_cols() != j {
        return Err(Error::DimensionMismatch {
            what: "feature columns",
            expected: j,
            actual: features.n_cols(),
        });
    }
    let off = spec.class_offset();
    let params = spec.unpack(theta)?;
    let tau_hs = params.eta_tau.exp();
    let lambdas: Vec<f64> = params.eta_lambda.iter().map(|e| e.exp()).collect();
    let beta = reconstruct_beta(&params);

    let mut logp = 0.0;
    let mut grad = vec![0.0; d];
    // Likelihood gradient accumulators on the natural beta scale.
    let mut g_beta = Array2::<f64>::zeros((NUM_CLASSES, j));

    for (i, label) in labels.iter().enumerate() {
        let mut logits = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            let mut acc = params.alpha[c];
            for col in 0..j {
                acc += beta[(c, col)] * features.x[(i, col)];
            }
            logits[c] = acc;
        }
        let log_p = log_softmax(&logits);
        logp += log_p[label.class_index()];
        for c in 0..NUM_CLASSES {
            let residual = if c == label.class_index() { 1.0 } else { 0.0 } - log_p[c].exp();
            if c >= off {
                grad[c - off] += residual;
            }
            for col in 0..j {
                g_beta[(c, col)] += residual * features.x[(i, col)];
            }
        }
    }

    // Intercept priors: alpha_c ~ N(0, intercept_scale^2).
    let s_a = spec.intercept_scale;
    for c in off..NUM_CLASSES {
        let a = params.alpha[c];
        logp += -0.5 * LN_2PI - s_a.ln() - 0.5 * a * a / (s_a * s_a);
        grad[c - off] += -a / (s_a * s_a);
    }

    // Innovations: z ~ N(0, 1); likelihood reaches z through beta.
    for c in off..NUM_CLASSES {
        for col in 0..j {
            let z = params.z[(c, col)];
            logp += -0.5 * LN_2PI - 0.5 * z * z;
            let idx = spec.z_offset() + (c - off) * j + col;
            grad[idx] += g_beta[(c, col)] * tau_hs * lambdas[col] - z;
        }
    }

    // Local scales: lambda_j ~ Half-Cauchy(local_scale), sampled as
    // eta_lambda = ln(lambda) with its log-Jacobian.
    for col in 0..j {
        let lambda = lambdas[col];
        logp += log_half_cauchy(lambda, spec.local_scale) + params.eta_lambda[col];
        let ratio_sq = (lambda / spec.local_scale).powi(2);
        let mut g = 1.0 - 2.0 * ratio_sq / (1.0 + ratio_sq);
        for c in 0..NUM_CLASSES {
            g += g_beta[(c, col)] * beta[(c, col)];
        }
        grad[spec.eta_lambda_offset() + col] += g;
    }

    // Global scale: tau_hs ~ Half-Cauchy(global_scale), log-transformed.
    logp += log_half_cauchy(tau_hs, spec.global_scale) + params.eta_tau;
    {
        let ratio_sq = (tau_hs / spec.global_scale).powi(2);
        let mut g = 1.0 - 2.0 * ratio_sq / (1.0 + ratio_sq);
        for c in 0..NUM_CLASSES {
            for col in 0..j {
                g += g_beta[(c, col)] * beta[(c, col)];
            }
        }
        grad[spec.eta_tau_offset()] += g;
    }

    if !logp.is_finite() {
        return Err(Error::NonFiniteLogp);
    }
    if let Some(idx) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGrad(idx));
    }
    Ok(LogDensityResult { logp, grad })
}

/// Conditional log density of the lower threshold given the continuous
/// parameters: the categorical likelihood of the labels implied by `tau2`
/// plus the flat prior over its support. Values outside the support return
/// negative infinity.
///
/// Piecewise-constant in `tau2`: the value only changes when `tau2` crosses
/// an observed `R`.
pub fn tau2_conditional_logp(
    tau2: f64,
    r_values: &[f64],
    features: &FeatureMatrix,
    alpha: &[f64],
    beta: &Array2<f64>,
    spec: &ModelSpec,
) -> f64 {
    let (lo, hi) = spec.tau2_bounds;
    if !(lo..=hi).contains(&tau2) {
        return f64::NEG_INFINITY;
    }
    let thresholds = Thresholds::new(spec.tau1, tau2).expect("bounds validated by ModelSpec");
    let labels: Vec<ReuseLevel> = r_values
        .iter()
        .map(|&r| assign_level(r, &thresholds))
        .collect();
    log_likelihood(alpha, beta, &labels, &features.x) - (hi - lo).ln()
}

/// Relabel every observation under the given lower threshold.
pub fn labels_at_tau2(r_values: &[f64], tau1: f64, tau2: f64) -> Result<Vec<ReuseLevel>> {
    let thresholds = Thresholds::new(tau1, tau2)?;
    Ok(r_values
        .iter()
        .map(|&r| assign_level(r, &thresholds))
        .collect())
}
