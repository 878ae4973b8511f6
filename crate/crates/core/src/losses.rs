//! Loss families with their gradients and diagonal Hessians.
//!
//! Every family is written as a negative log-likelihood in the score `F`
//! (or the score vector for the two multi-output families). The Hessian is
//! always the diagonal of the second-derivative matrix; cross terms of the
//! softmax and mean-scale losses are treated as zero.

use serde::{Deserialize, Serialize};
use libm::{erfc, lgamma as ln_gamma};

use crate::error::{Error, Result};

/// Scores are clamped to this magnitude before being exponentiated.
pub const SCORE_CLAMP: f64 = 700.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    SquaredError,
    BinaryLogistic,
    MulticlassSoftmax,
    Poisson,
    Gamma,
    Tobit,
    MeanScaleGaussian,
}

impl LossFamily {
    pub fn name(self) -> &'static str {
        match self {
            LossFamily::SquaredError => "squared",
            LossFamily::BinaryLogistic => "binary",
            LossFamily::MulticlassSoftmax => "multiclass",
            LossFamily::Poisson => "poisson",
            LossFamily::Gamma => "gamma",
            LossFamily::Tobit => "tobit",
            LossFamily::MeanScaleGaussian => "mean-scale",
        }
    }

    /// Classification families are scored by error rate, the rest by NLL.
    pub fn is_classification(self) -> bool {
        matches!(self, LossFamily::BinaryLogistic | LossFamily::MulticlassSoftmax)
    }
}

/// A loss family together with its fixed auxiliary parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub family: LossFamily,
    pub num_outputs: usize,
    /// Gamma shape.
    pub gamma: f64,
    /// Tobit latent standard deviation.
    pub sigma: f64,
    /// Tobit lower censoring threshold; `null` in JSON when unbounded.
    #[serde(with = "unbounded::below")]
    pub y_lower: f64,
    /// Tobit upper censoring threshold.
    #[serde(with = "unbounded::above")]
    pub y_upper: f64,
}

/// JSON has no infinities, so unbounded thresholds travel as `null`.
mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    fn write<S: Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(&v)
        } else {
            s.serialize_none()
        }
    }

    pub mod below {
        use super::*;
        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            write(*v, s)
        }
        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
        }
    }

    pub mod above {
        use super::*;
        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            write(*v, s)
        }
        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
        }
    }
}

impl LossSpec {
    fn scalar(family: LossFamily) -> Self {
        LossSpec {
            family,
            num_outputs: 1,
            gamma: 1.0,
            sigma: 1.0,
            y_lower: f64::NEG_INFINITY,
            y_upper: f64::INFINITY,
        }
    }

    pub fn squared_error() -> Self {
        Self::scalar(LossFamily::SquaredError)
    }

    pub fn binary_logistic() -> Self {
        Self::scalar(LossFamily::BinaryLogistic)
    }

    pub fn multiclass(num_classes: usize) -> Result<Self> {
        let spec = LossSpec { num_outputs: num_classes, ..Self::scalar(LossFamily::MulticlassSoftmax) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn poisson() -> Self {
        Self::scalar(LossFamily::Poisson)
    }

    pub fn gamma(shape: f64) -> Result<Self> {
        let spec = LossSpec { gamma: shape, ..Self::scalar(LossFamily::Gamma) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tobit(sigma: f64, y_lower: f64, y_upper: f64) -> Result<Self> {
        let spec = LossSpec { sigma, y_lower, y_upper, ..Self::scalar(LossFamily::Tobit) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn mean_scale() -> Self {
        LossSpec { num_outputs: 2, ..Self::scalar(LossFamily::MeanScaleGaussian) }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = match self.family {
            LossFamily::MulticlassSoftmax => {
                if self.num_outputs < 2 {
                    return Err(Error::Config(format!(
                        "multiclass loss needs at least 2 classes, got {}",
                        self.num_outputs
                    )));
                }
                self.num_outputs
            }
            LossFamily::MeanScaleGaussian => 2,
            _ => 1,
        };
        if self.num_outputs != expected {
            return Err(Error::Config(format!(
                "{} loss has {} outputs, expected {}",
                self.family.name(),
                self.num_outputs,
                expected
            )));
        }
        match self.family {
            LossFamily::Gamma if !(self.gamma > 0.0 && self.gamma.is_finite()) => {
                Err(Error::Config(format!("gamma shape must be positive, got {}", self.gamma)))
            }
            LossFamily::Tobit => {
                if !(self.sigma > 0.0 && self.sigma.is_finite()) {
                    return Err(Error::Config(format!("tobit sigma must be positive, got {}", self.sigma)));
                }
                if !(self.y_lower < self.y_upper) || !self.y_lower.is_finite() || !self.y_upper.is_finite() {
                    return Err(Error::Config(format!(
                        "tobit thresholds must satisfy y_lower < y_upper, got {} and {}",
                        self.y_lower, self.y_upper
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Checks that `y` lies in the support of the family.
    pub fn check_response(&self, y: f64) -> Result<()> {
        let ok = y.is_finite()
            && match self.family {
                LossFamily::SquaredError | LossFamily::MeanScaleGaussian => true,
                LossFamily::BinaryLogistic => y == 0.0 || y == 1.0,
                LossFamily::MulticlassSoftmax => y >= 0.0 && y.fract() == 0.0 && (y as usize) < self.num_outputs,
                LossFamily::Poisson => y >= 0.0 && y.fract() == 0.0,
                LossFamily::Gamma => y > 0.0,
                LossFamily::Tobit => y >= self.y_lower && y <= self.y_upper,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("response {} is not valid for the {} loss", y, self.family.name())))
        }
    }

    pub fn check_responses(&self, ys: &[f64]) -> Result<()> {
        for (i, &y) in ys.iter().enumerate() {
            self.check_response(y)
                .map_err(|e| Error::Domain(format!("row {i}: {e}")))?;
        }
        Ok(())
    }

    /// Loss value, writing the gradient and diagonal Hessian into the buffers.
    ///
    /// No validation; callers check `y` and the buffer lengths up front.
    pub fn eval_into(&self, y: f64, scores: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        match self.family {
            LossFamily::SquaredError => {
                let r = scores[0] - y;
                grad[0] = r;
                hess[0] = 1.0;
                0.5 * r * r
            }
            LossFamily::BinaryLogistic => {
                let f = scores[0];
                // p = sigmoid(f), q = 1 - p, both without cancellation
                let (p, q) = sigmoid_pair(f);
                grad[0] = if y == 1.0 { -q } else { p };
                hess[0] = p * q;
                if y == 1.0 {
                    softplus(-f)
                } else {
                    softplus(f)
                }
            }
            LossFamily::MulticlassSoftmax => softmax_eval(y as usize, scores, grad, hess),
            LossFamily::Poisson => {
                let f = scores[0].clamp(-SCORE_CLAMP, SCORE_CLAMP);
                let mu = f.exp();
                grad[0] = mu - y;
                hess[0] = mu;
                mu - y * f
            }
            LossFamily::Gamma => {
                let f = scores[0].clamp(-SCORE_CLAMP, SCORE_CLAMP);
                let shape = self.gamma;
                let ratio = y * (-f).exp();
                grad[0] = shape * (1.0 - ratio);
                hess[0] = shape * ratio;
                shape * (f + ratio) - (shape - 1.0) * y.ln() - shape * shape.ln() + ln_gamma(shape)
            }
            LossFamily::Tobit => self.tobit_eval(y, scores[0], grad, hess),
            LossFamily::MeanScaleGaussian => {
                let r = y - scores[0];
                let log_sd = scores[1].clamp(-SCORE_CLAMP, SCORE_CLAMP);
                let inv_var = (-2.0 * log_sd).min(SCORE_CLAMP).exp();
                let scaled = r * r * inv_var;
                grad[0] = -r * inv_var;
                grad[1] = 1.0 - scaled;
                hess[0] = inv_var;
                hess[1] = 2.0 * scaled;
                0.5 * scaled + log_sd + LN_SQRT_2PI
            }
        }
    }

    fn tobit_eval(&self, y: f64, f: f64, grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let sigma = self.sigma;
        let var = sigma * sigma;
        if y == self.y_lower {
            let z = (self.y_lower - f) / sigma;
            let tail = NormalTail::at(z);
            grad[0] = tail.lambda / sigma;
            hess[0] = tail.lambda * tail.z_plus_lambda / var;
            -tail.log_cdf
        } else if y == self.y_upper {
            let u = (f - self.y_upper) / sigma;
            let tail = NormalTail::at(u);
            grad[0] = -tail.lambda / sigma;
            hess[0] = tail.lambda * tail.z_plus_lambda / var;
            -tail.log_cdf
        } else {
            let r = y - f;
            grad[0] = -r / var;
            hess[0] = 1.0 / var;
            0.5 * r * r / var + sigma.ln() + LN_SQRT_2PI
        }
    }
}

/// Loss value with gradient and diagonal Hessian at one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTriplet {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<f64>,
}

/// Evaluates loss, gradient and diagonal Hessian with full input checks.
pub fn eval_loss(spec: &LossSpec, y: f64, scores: &[f64]) -> Result<LossTriplet> {
    check_scores(spec, scores)?;
    spec.check_response(y)?;
    let d = spec.num_outputs;
    let mut gradient = vec![0.0; d];
    let mut hessian = vec![0.0; d];
    let loss = spec.eval_into(y, scores, &mut gradient, &mut hessian);
    Ok(LossTriplet { loss, gradient, hessian })
}

fn check_scores(spec: &LossSpec, scores: &[f64]) -> Result<()> {
    if scores.len() != spec.num_outputs {
        return Err(Error::Input(format!(
            "{} loss expects {} scores, got {}",
            spec.family.name(),
            spec.num_outputs,
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Input(format!("non-finite score {scores:?}")));
    }
    Ok(())
}

/// Maps a score vector to the natural prediction of the family.
///
/// Binary: `[p]`; multiclass: class probabilities; Poisson/Gamma: `[mean]`;
/// squared/Tobit: `[F]`; mean-scale: `[mu, sigma]`.
pub fn score_to_response(spec: &LossSpec, scores: &[f64]) -> Result<Vec<f64>> {
    check_scores(spec, scores)?;
    Ok(match spec.family {
        LossFamily::SquaredError | LossFamily::Tobit => vec![scores[0]],
        LossFamily::BinaryLogistic => vec![sigmoid_pair(scores[0]).0],
        LossFamily::MulticlassSoftmax => softmax(scores),
        LossFamily::Poisson | LossFamily::Gamma => {
            vec![scores[0].clamp(-SCORE_CLAMP, SCORE_CLAMP).exp()]
        }
        LossFamily::MeanScaleGaussian => {
            vec![scores[0], scores[1].clamp(-SCORE_CLAMP, SCORE_CLAMP).exp()]
        }
    })
}

/// `(sigmoid(f), 1 - sigmoid(f))`, each computed from `exp(-|f|)`.
fn sigmoid_pair(f: f64) -> (f64, f64) {
    let e = (-f.abs()).exp();
    let big = 1.0 / (1.0 + e);
    let small = e / (1.0 + e);
    if f >= 0.0 {
        (big, small)
    } else {
        (small, big)
    }
}

fn softplus(f: f64) -> f64 {
    f.max(0.0) + (-f.abs()).exp().ln_1p()
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|&s| (s - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

fn softmax_eval(label: usize, scores: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
    let k = scores.len();
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e = [0.0f64; 64];
    let mut heap;
    let e: &mut [f64] = if k <= e.len() {
        &mut e[..k]
    } else {
        heap = vec![0.0; k];
        &mut heap
    };
    for (ej, &s) in e.iter_mut().zip(scores) {
        *ej = (s - m).exp();
    }
    let total: f64 = e.iter().sum();
    for j in 0..k {
        let p = e[j] / total;
        // 1 - p_j summed from the other classes
        let rest: f64 = e.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, v)| v).sum::<f64>() / total;
        grad[j] = if j == label { -rest } else { p };
        hess[j] = p * rest;
    }
    let others: f64 = e.iter().enumerate().filter(|&(i, _)| i != label).map(|(_, v)| v).sum();
    if scores[label] == m {
        others.ln_1p()
    } else {
        (m - scores[label]) + (e[label] + others).ln()
    }
}

/// `log Phi(z)`, the inverse Mills ratio `phi(z) / Phi(z)` and `z + lambda`.
#[derive(Debug, Clone, Copy)]
struct NormalTail {
    log_cdf: f64,
    lambda: f64,
    z_plus_lambda: f64,
}

impl NormalTail {
    /// Below this the continued fraction is used instead of erfc.
    const SWITCH: f64 = -5.0;

    fn at(z: f64) -> Self {
        if z <= Self::SWITCH {
            let x = -z;
            let tail = mills_tail(x);
            let lambda = x + tail;
            NormalTail {
                log_cdf: -0.5 * x * x - LN_SQRT_2PI - lambda.ln(),
                lambda,
                z_plus_lambda: tail,
            }
        } else {
            let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
            let pdf = (-0.5 * z * z - LN_SQRT_2PI).exp();
            let lambda = pdf / cdf;
            let log_cdf = if z > 0.0 {
                (-0.5 * erfc(z / std::f64::consts::SQRT_2)).ln_1p()
            } else {
                cdf.ln()
            };
            NormalTail { log_cdf, lambda, z_plus_lambda: z + lambda }
        }
    }
}

/// `phi(x) / (1 - Phi(x)) - x` for `x >= 5`, from Laplace's continued fraction
/// `1/(x + 2/(x + 3/(x + ...)))`.
fn mills_tail(x: f64) -> f64 {
    const TERMS: usize = 120;
    let mut t = 0.0;
    for k in (2..=TERMS).rev() {
        t = k as f64 / (x + t);
    }
    1.0 / (x + t)
}
