//! Seeded simulators for the benchmark datasets.
//!
//! All randomness comes from `ChaCha20Rng::seed_from_u64(seed)`, a portable
//! generator, so a given [`SimSpec`] always yields the same dataset. Features
//! are drawn row by row before any response is sampled.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::losses::LossSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFunction {
    Friedman1,
    Friedman3,
    Ridgeway,
}

impl MeanFunction {
    pub fn num_inputs(self) -> usize {
        match self {
            MeanFunction::Friedman1 => 10,
            MeanFunction::Friedman3 => 4,
            MeanFunction::Ridgeway => 2,
        }
    }

    pub fn eval(self, x: &[f64]) -> Result<f64> {
        match self {
            MeanFunction::Friedman1 => friedman1(x),
            MeanFunction::Friedman3 => friedman3(x),
            MeanFunction::Ridgeway => ridgeway(x),
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            MeanFunction::Friedman1 => "f1",
            MeanFunction::Friedman3 => "f3",
            MeanFunction::Ridgeway => "r",
        }
    }

    /// One input vector drawn from the function's design distribution.
    fn sample_inputs<R: Rng>(self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            MeanFunction::Friedman1 | MeanFunction::Ridgeway => {
                out.extend((0..self.num_inputs()).map(|_| rng.random::<f64>()));
            }
            MeanFunction::Friedman3 => {
                // X1 on (0, 100] so the ratio is always defined
                out.push(100.0 * (1.0 - rng.random::<f64>()));
                out.push(40.0 * PI + 520.0 * PI * rng.random::<f64>());
                out.push(rng.random::<f64>());
                out.push(1.0 + 10.0 * rng.random::<f64>());
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Poisson,
    Gamma,
    Tobit,
    MeanScale,
    FhtBinary,
    FhtMulticlass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub mean_fn: MeanFunction,
    pub response: ResponseKind,
    pub n: usize,
    pub seed: u64,
    pub gamma: f64,
    pub sigma: f64,
    pub num_classes: usize,
    /// Read the FHT binary sign term literally as `-1` instead of `(-1)^l`.
    pub fht_literal_sign: bool,
}

impl SimSpec {
    pub fn new(mean_fn: MeanFunction, response: ResponseKind, n: usize, seed: u64) -> Self {
        SimSpec { mean_fn, response, n, seed, gamma: 10.0, sigma: 1.0, num_classes: 5, fht_literal_sign: false }
    }

    /// Parses dataset names such as `poisson_f1`, `tobit_r`, `msr_f3`,
    /// `bin_classif_fht` or `multi_classif_fht`.
    pub fn from_name(name: &str, n: usize, seed: u64) -> Result<Self> {
        let fht = |response| SimSpec::new(MeanFunction::Friedman1, response, n, seed);
        match name {
            "bin_classif_fht" => return Ok(fht(ResponseKind::FhtBinary)),
            "multi_classif_fht" => return Ok(fht(ResponseKind::FhtMulticlass)),
            _ => {}
        }
        let (kind, suffix) = name
            .rsplit_once('_')
            .ok_or_else(|| Error::Config(format!("unknown simulated dataset {name:?}")))?;
        let response = match kind {
            "poisson" => ResponseKind::Poisson,
            "gamma" => ResponseKind::Gamma,
            "tobit" => ResponseKind::Tobit,
            "msr" => ResponseKind::MeanScale,
            _ => return Err(Error::Config(format!("unknown simulated dataset {name:?}"))),
        };
        let mean_fn = match suffix {
            "f1" => MeanFunction::Friedman1,
            "f3" => MeanFunction::Friedman3,
            "r" => MeanFunction::Ridgeway,
            _ => return Err(Error::Config(format!("unknown mean function suffix in {name:?}"))),
        };
        Ok(SimSpec::new(mean_fn, response, n, seed))
    }

    pub fn name(&self) -> String {
        match self.response {
            ResponseKind::FhtBinary => "bin_classif_fht".into(),
            ResponseKind::FhtMulticlass => "multi_classif_fht".into(),
            ResponseKind::Poisson => format!("poisson_{}", self.mean_fn.suffix()),
            ResponseKind::Gamma => format!("gamma_{}", self.mean_fn.suffix()),
            ResponseKind::Tobit => format!("tobit_{}", self.mean_fn.suffix()),
            ResponseKind::MeanScale => format!("msr_{}", self.mean_fn.suffix()),
        }
    }

    pub fn num_features(&self) -> usize {
        match self.response {
            ResponseKind::FhtBinary | ResponseKind::FhtMulticlass => 10,
            ResponseKind::MeanScale => 2 * self.mean_fn.num_inputs(),
            _ => self.mean_fn.num_inputs(),
        }
    }
}

impl FromStr for MeanFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" | "friedman1" => Ok(MeanFunction::Friedman1),
            "f3" | "friedman3" => Ok(MeanFunction::Friedman3),
            "r" | "ridgeway" => Ok(MeanFunction::Ridgeway),
            _ => Err(Error::Config(format!("unknown mean function {s:?}"))),
        }
    }
}

/// A simulated dataset with the loss it was generated for.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset,
    pub loss: LossSpec,
}

fn check_unit_cube(x: &[f64], p: usize, what: &str) -> Result<()> {
    if x.len() != p {
        return Err(Error::Input(format!("{what} takes {p} inputs, got {}", x.len())));
    }
    if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Input(format!("{what} input {v} outside [0, 1]")));
    }
    Ok(())
}

/// `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5`; x6..x10 are inert.
pub fn friedman1(x: &[f64]) -> Result<f64> {
    check_unit_cube(x, 10, "friedman1")?;
    Ok(10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4])
}

/// `5 atan((x2 x3 - 1 - 1/(x2 x4)) / x1) + 0.2`.
pub fn friedman3(x: &[f64]) -> Result<f64> {
    if x.len() != 4 {
        return Err(Error::Input(format!("friedman3 takes 4 inputs, got {}", x.len())));
    }
    let ok = x[0] > 0.0
        && x[0] <= 100.0
        && (40.0 * PI..=560.0 * PI).contains(&x[1])
        && (0.0..=1.0).contains(&x[2])
        && (1.0..=11.0).contains(&x[3]);
    if !ok {
        return Err(Error::Input(format!("friedman3 input {x:?} outside its domain")));
    }
    Ok(5.0 * ((x[1] * x[2] - 1.0 - 1.0 / (x[1] * x[3])) / x[0]).atan() + 0.2)
}

/// `exp(2 sin(3 x1 + 5 x1^2) - 2 sin(3 (x2 + 0.1) + 5 (x2 + 0.1)^2))`.
pub fn ridgeway(x: &[f64]) -> Result<f64> {
    check_unit_cube(x, 2, "ridgeway")?;
    let wave = |t: f64| 2.0 * (3.0 * t + 5.0 * t * t).sin();
    Ok((wave(x[0]) - wave(x[1] + 0.1)).exp())
}

/// FHT binary score `10 * sum_{j<=6} x_j * (1 + sum_{l<=6} s_l x_l)`.
///
/// `s_l = (-1)^l`, or `-1` for every `l` when `literal_sign` is set.
pub fn fht_score(x: &[f64], literal_sign: bool) -> f64 {
    let lin: f64 = x[..6].iter().sum();
    let inner: f64 = x[..6]
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let l = i + 1;
            let s = if literal_sign || l % 2 == 1 { -1.0 } else { 1.0 };
            s * v
        })
        .sum();
    10.0 * lin * (1.0 + inner)
}

/// Class thresholds `t_1..t_{K-1}`: chi-square(10) quantiles at `k/K`.
pub fn fht_thresholds(num_classes: usize) -> Vec<f64> {
    let chi2 = ChiSquared::new(10.0).expect("valid degrees of freedom");
    (1..num_classes).map(|k| chi2.inverse_cdf(k as f64 / num_classes as f64)).collect()
}

pub fn fht_binary(n: usize, seed: u64) -> Result<Simulated> {
    simulate(&SimSpec::new(MeanFunction::Friedman1, ResponseKind::FhtBinary, n, seed))
}

pub fn fht_multiclass(n: usize, seed: u64, num_classes: usize) -> Result<Simulated> {
    let mut spec = SimSpec::new(MeanFunction::Friedman1, ResponseKind::FhtMulticlass, n, seed);
    spec.num_classes = num_classes;
    simulate(&spec)
}

/// Generates the dataset described by `spec`.
pub fn simulate(spec: &SimSpec) -> Result<Simulated> {
    if spec.n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let p = spec.num_features();
    let mut data = Vec::with_capacity(spec.n * p);
    let mut row = Vec::with_capacity(p);
    let mut signal = Vec::with_capacity(spec.n);
    let mut scale_signal = Vec::new();

    match spec.response {
        ResponseKind::FhtBinary | ResponseKind::FhtMulticlass => {
            if spec.response == ResponseKind::FhtMulticlass && spec.n < spec.num_classes {
                return Err(Error::Config(format!("need at least {} rows", spec.num_classes)));
            }
            for _ in 0..spec.n {
                row.clear();
                row.extend((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
                data.extend_from_slice(&row);
            }
        }
        ResponseKind::Poisson | ResponseKind::Gamma => {
            // the mean must be positive; rows where friedman3 dips below zero are redrawn
            for _ in 0..spec.n {
                loop {
                    row.clear();
                    spec.mean_fn.sample_inputs(&mut rng, &mut row);
                    let f = spec.mean_fn.eval(&row)?;
                    if f > 0.0 {
                        signal.push(f);
                        break;
                    }
                }
                data.extend_from_slice(&row);
            }
        }
        ResponseKind::Tobit => {
            for _ in 0..spec.n {
                row.clear();
                spec.mean_fn.sample_inputs(&mut rng, &mut row);
                signal.push(spec.mean_fn.eval(&row)?);
                data.extend_from_slice(&row);
            }
        }
        ResponseKind::MeanScale => {
            let q = spec.mean_fn.num_inputs();
            for _ in 0..spec.n {
                row.clear();
                spec.mean_fn.sample_inputs(&mut rng, &mut row);
                spec.mean_fn.sample_inputs(&mut rng, &mut row);
                signal.push(spec.mean_fn.eval(&row[..q])?);
                scale_signal.push(spec.mean_fn.eval(&row[q..])?);
                data.extend_from_slice(&row);
            }
        }
    }
    let features = Matrix::new(data, spec.n, p)?;
    let scale = (spec.response == ResponseKind::MeanScale).then_some(scale_signal.as_slice());
    sample_response(spec, features, &signal, scale, &mut rng)
}

/// Draws responses for `features` given the signal evaluated on them.
///
/// `signal` is the mean (Poisson, Gamma), the latent mean (Tobit) or the mean
/// function (mean-scale, where `scale_signal` carries the raw log-sd
/// function, rescaled here to [-1, 1]). FHT responses recompute their score
/// from the features and ignore `signal`.
pub fn sample_response<R: Rng>(
    spec: &SimSpec,
    features: Matrix,
    signal: &[f64],
    scale_signal: Option<&[f64]>,
    rng: &mut R,
) -> Result<Simulated> {
    let n = features.n_rows();
    let needs_signal = !matches!(spec.response, ResponseKind::FhtBinary | ResponseKind::FhtMulticlass);
    if needs_signal && signal.len() != n {
        return Err(Error::Input(format!("{} signal values for {} rows", signal.len(), n)));
    }
    if let Some(v) = signal.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite signal value {v}")));
    }
    let (response, loss) = match spec.response {
        ResponseKind::Poisson => {
            let mut y = Vec::with_capacity(n);
            for &mu in signal {
                let dist = Poisson::new(mu)
                    .map_err(|_| Error::Domain(format!("Poisson mean must be positive, got {mu}")))?;
                y.push(dist.sample(rng));
            }
            (y, LossSpec::poisson())
        }
        ResponseKind::Gamma => {
            let mut y = Vec::with_capacity(n);
            for &mu in signal {
                if !(mu > 0.0) {
                    return Err(Error::Domain(format!("Gamma mean must be positive, got {mu}")));
                }
                let dist = Gamma::new(spec.gamma, mu / spec.gamma)
                    .map_err(|e| Error::Config(format!("gamma sampler: {e}")))?;
                y.push(dist.sample(rng));
            }
            (y, LossSpec::gamma(spec.gamma)?)
        }
        ResponseKind::Tobit => {
            if n < 3 {
                return Err(Error::Config("tobit simulation needs at least 3 rows".into()));
            }
            let latent: Vec<f64> = signal
                .iter()
                .map(|&mu| mu + spec.sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut sorted = latent.clone();
            sorted.sort_by(f64::total_cmp);
            let k = n.div_ceil(3);
            let (lo, hi) = (sorted[k - 1], sorted[n - k]);
            let y = latent.iter().map(|z| z.clamp(lo, hi)).collect();
            (y, LossSpec::tobit(spec.sigma, lo, hi)?)
        }
        ResponseKind::MeanScale => {
            let raw = scale_signal.ok_or_else(|| Error::Input("mean-scale sampling needs a scale signal".into()))?;
            if raw.len() != n {
                return Err(Error::Input(format!("{} scale values for {} rows", raw.len(), n)));
            }
            let log_sd = rescale_unit(raw);
            let y = signal
                .iter()
                .zip(&log_sd)
                .map(|(&mu, &ls)| mu + ls.exp() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            (y, LossSpec::mean_scale())
        }
        ResponseKind::FhtBinary => {
            let y = features
                .rows()
                .map(|x| {
                    let p = 1.0 / (1.0 + (-fht_score(x, spec.fht_literal_sign)).exp());
                    if rng.random::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            (y, LossSpec::binary_logistic())
        }
        ResponseKind::FhtMulticlass => {
            let t = fht_thresholds(spec.num_classes);
            let y = features
                .rows()
                .map(|x| {
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    t.iter().filter(|&&tk| tk <= r2).count() as f64
                })
                .collect();
            (y, LossSpec::multiclass(spec.num_classes)?)
        }
    };
    Ok(Simulated { dataset: Dataset::unnamed(features, response)?, loss })
}

/// Affine map of `v` onto [-1, 1] over its own range (zeros if constant).
fn rescale_unit(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter().map(|x| 2.0 * (x - lo) / (hi - lo) - 1.0).collect()
    } else {
        vec![0.0; v.len()]
    }
}
