//! Two-class classification with the private sparse Gaussian mixture estimator.
//!
//! Per repetition the features are balanced by random drop, centered, split
//! 70/30, and `β̂` is fit on the training part with the high-dimensional
//! driver. A test point is assigned to whichever of `+β̂`, `−β̂` is closer,
//! with the sign of `β̂` oriented to maximize training accuracy.

use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::em_engine::{run_high_dim, EmConfig, Regime};
use crate::error::{Error, Result};
use crate::harness::config::Real;
use crate::harness::experiment::with_pool;
use crate::mechanisms::{mix_seed, NoiseOracle, PrivacyBudget};
use crate::models::{gmm, Gmm, GmmSample, ModelKind, ModelSpec, ParamVector};
use crate::oracle::exact_top_k;

/// Numeric features with a two-valued label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl LabeledData {
    pub fn new(feature_names: Vec<String>, features: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::invalid("feature and label counts differ"));
        }
        if feature_names.is_empty() {
            return Err(Error::invalid("no feature columns"));
        }
        if let Some(row) = features.iter().position(|x| x.len() != feature_names.len()) {
            return Err(Error::DimensionMismatch {
                context: "feature row",
                expected: feature_names.len(),
                found: features[row].len(),
            });
        }
        let data = Self {
            feature_names,
            features,
            labels,
        };
        let classes = data.classes();
        if classes.len() != 2 {
            return Err(Error::invalid(format!(
                "classification needs exactly two classes, found {}: {classes:?}",
                classes.len()
            )));
        }
        Ok(data)
    }

    /// Distinct labels in sorted order; the second one is the `+β̂` class.
    pub fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = self.labels.clone();
        c.sort();
        c.dedup();
        c
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }
}

/// Estimator settings for one classification cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationParams {
    pub s_hat: usize,
    /// `+∞` runs the non-private path with a silent noise oracle.
    pub epsilon: f64,
    /// Defaults to `1/(2 n_train)`.
    pub delta: Option<f64>,
    pub eta: f64,
    pub iters: usize,
    pub truncation: f64,
    /// Mixture noise level used in the posterior weights.
    pub sigma: f64,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub s_hat: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub reps: usize,
    /// Mean test misclassification over repetitions.
    pub misclassification_rate: f64,
    /// Sample standard deviation over repetitions divided by `sqrt(reps)`.
    pub std_error: f64,
    pub per_rep: Vec<f64>,
}

fn uniform_index(oracle: &mut NoiseOracle, k: usize) -> usize {
    ((oracle.uniform_open() * k as f64) as usize).min(k - 1)
}

fn shuffle<T>(v: &mut [T], oracle: &mut NoiseOracle) {
    for i in (1..v.len()).rev() {
        let j = uniform_index(oracle, i + 1);
        v.swap(i, j);
    }
}

/// Zero mean and unit variance per column; constant columns are only centered.
fn standardize(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = features.len() as f64;
    let d = features.first().map_or(0, Vec::len);
    let mut out = features.to_vec();
    for j in 0..d {
        let mean = features.iter().map(|x| x[j]).sum::<f64>() / n;
        let var = features.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        for row in out.iter_mut() {
            row[j] = (row[j] - mean) / scale;
        }
    }
    out
}

fn check_params(p: &ClassificationParams, n: usize, d: usize) -> Result<()> {
    if p.s_hat == 0 || p.s_hat > d {
        return Err(Error::config("s_hat", format!("need 1 <= s_hat <= d = {d}, got {}", p.s_hat)));
    }
    if p.epsilon.is_nan() || p.epsilon <= 0.0 {
        return Err(Error::config("epsilon", format!("must be positive, got {}", p.epsilon)));
    }
    if !(p.eta >= 0.0 && p.eta.is_finite()) {
        return Err(Error::config("eta", format!("must be finite and nonnegative, got {}", p.eta)));
    }
    if p.iters == 0 {
        return Err(Error::config("iters", "must be at least 1"));
    }
    if p.truncation.is_nan() || p.truncation <= 0.0 {
        return Err(Error::config("truncation", format!("must be positive, got {}", p.truncation)));
    }
    if p.truncation.is_infinite() && p.epsilon.is_finite() {
        return Err(Error::config("truncation", "infinite truncation requires epsilon = inf"));
    }
    if !(p.sigma > 0.0 && p.sigma.is_finite()) {
        return Err(Error::config("sigma", format!("must be positive, got {}", p.sigma)));
    }
    if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
        return Err(Error::config("train_fraction", "must lie in (0, 1)"));
    }
    if let Some(delta) = p.delta {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("delta", format!("must lie in (0, 1), got {delta}")));
        }
    }
    if n < 2 {
        return Err(Error::invalid("need at least two rows"));
    }
    Ok(())
}

fn accuracy(rows: &[usize], x: &[Vec<f64>], y: &[bool], beta: &[f64], sign: f64) -> f64 {
    let correct = rows
        .iter()
        .filter(|&&i| {
            let score: f64 = x[i].iter().zip(beta).map(|(a, b)| a * b).sum::<f64>() * sign;
            (score > 0.0) == y[i]
        })
        .count();
    correct as f64 / rows.len() as f64
}

struct Prepared {
    x: Vec<Vec<f64>>,
    positive: Vec<bool>,
}

fn prepare(data: &LabeledData) -> Prepared {
    let classes = data.classes();
    Prepared {
        x: standardize(&data.features),
        positive: data.labels.iter().map(|l| *l == classes[1]).collect(),
    }
}

fn run_rep(prep: &Prepared, p: &ClassificationParams, rep: usize, master_seed: u64) -> Result<(f64, f64)> {
    let rep_seed = mix_seed(master_seed, rep as u64);
    let mut split = NoiseOracle::derive(rep_seed, 0);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..prep.x.len()).partition(|&i| prep.positive[i]);
    let larger = if pos.len() > neg.len() { &mut pos } else { &mut neg };
    shuffle(larger, &mut split);
    let keep = pos.len().min(neg.len());
    pos.truncate(keep);
    neg.truncate(keep);
    let mut rows: Vec<usize> = pos.into_iter().chain(neg).collect();
    rows.sort_unstable();

    let d = prep.x[0].len();
    let mut center = vec![0.0; d];
    for &i in &rows {
        center.iter_mut().zip(&prep.x[i]).for_each(|(c, v)| *c += v);
    }
    center.iter_mut().for_each(|c| *c /= rows.len() as f64);
    let x: Vec<Vec<f64>> = prep
        .x
        .iter()
        .map(|row| row.iter().zip(&center).map(|(v, c)| v - c).collect())
        .collect();

    shuffle(&mut rows, &mut split);
    let n_train = ((rows.len() as f64) * p.train_fraction).round() as usize;
    if n_train < p.iters || n_train == rows.len() {
        return Err(Error::invalid(format!(
            "{} balanced rows leave {n_train} for training, need at least iters = {} and a nonempty test set",
            rows.len(),
            p.iters
        )));
    }
    let (train, test) = rows.split_at(n_train);
    let samples: Vec<GmmSample<f64>> = train.iter().map(|&i| GmmSample { y: x[i].clone() }).collect();

    let delta = p.delta.unwrap_or(1.0 / (2.0 * n_train as f64));
    let config = EmConfig {
        eta: p.eta,
        truncation: p.truncation,
        iterations: p.iters,
        s_hat: p.s_hat,
        budget: PrivacyBudget::new(p.epsilon, delta)?,
        regime: Regime::HighDim,
    };
    let flat = vec![1.0 / (d as f64).sqrt(); d];
    let beta0 = ParamVector::new(exact_top_k(&flat, p.s_hat)?.values)?;
    let mut noise = if p.epsilon.is_infinite() {
        NoiseOracle::silent()
    } else {
        let cell = mix_seed(p.s_hat as u64, p.epsilon.to_bits());
        NoiseOracle::derive(mix_seed(rep_seed, cell), 1)
    };
    let fit = run_high_dim(Gmm, &samples, p.sigma, &config, &beta0, &mut noise, None)?;
    let beta = fit.final_beta().as_slice();

    let sign = if accuracy(train, &x, &prep.positive, beta, -1.0) > accuracy(train, &x, &prep.positive, beta, 1.0) {
        -1.0
    } else {
        1.0
    };
    Ok((1.0 - accuracy(test, &x, &prep.positive, beta, sign), delta))
}

/// Repeats the pipeline `reps` times. Balancing and splitting depend only on
/// `(master_seed, rep)`, so different parameter cells see the same splits.
pub fn run_classification(
    data: &LabeledData,
    params: &ClassificationParams,
    reps: usize,
    master_seed: u64,
    jobs: Option<usize>,
) -> Result<ClassificationReport> {
    check_params(params, data.len(), data.dim())?;
    if reps == 0 {
        return Err(Error::config("reps", "must be at least 1"));
    }
    let prep = prepare(data);
    let results = with_pool(jobs, || {
        (0..reps)
            .into_par_iter()
            .map(|rep| run_rep(&prep, params, rep, master_seed))
            .collect::<Result<Vec<_>>>()
    })??;
    let per_rep: Vec<f64> = results.iter().map(|r| r.0).collect();
    let mean = per_rep.iter().sum::<f64>() / reps as f64;
    let std_error = if reps > 1 {
        let var = per_rep.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        (var / reps as f64).sqrt()
    } else {
        0.0
    };
    Ok(ClassificationReport {
        s_hat: params.s_hat,
        epsilon: params.epsilon,
        delta: results[0].1,
        reps,
        misclassification_rate: mean,
        std_error,
        per_rep,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

fn default_train_fraction() -> f64 {
    0.7
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClassificationConfig {
    s_hat: OneOrMany<usize>,
    epsilon: OneOrMany<Real>,
    #[serde(default)]
    delta: Option<f64>,
    eta: f64,
    iters: usize,
    truncation: Real,
    sigma: f64,
    reps: usize,
    master_seed: u64,
    #[serde(default = "default_train_fraction")]
    train_fraction: f64,
}

/// Classification config file: every combination of the listed `s_hat` and
/// `epsilon` values is run with the shared remaining settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationConfig {
    pub cells: Vec<ClassificationParams>,
    pub reps: usize,
    pub master_seed: u64,
}

impl ClassificationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawClassificationConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("field"))
                .unwrap_or("document")
                .to_string();
            Error::config(key, msg)
        })?;
        if raw.reps == 0 {
            return Err(Error::config("reps", "must be at least 1"));
        }
        let s_hats = raw.s_hat.into_vec();
        let epsilons = raw.epsilon.into_vec();
        if s_hats.is_empty() {
            return Err(Error::config("s_hat", "needs at least one value"));
        }
        if epsilons.is_empty() {
            return Err(Error::config("epsilon", "needs at least one value"));
        }
        let mut cells = Vec::new();
        for &s_hat in &s_hats {
            for eps in &epsilons {
                let p = ClassificationParams {
                    s_hat,
                    epsilon: eps.0,
                    delta: raw.delta,
                    eta: raw.eta,
                    iters: raw.iters,
                    truncation: raw.truncation.0,
                    sigma: raw.sigma,
                    train_fraction: raw.train_fraction,
                };
                check_params(&p, usize::MAX, usize::MAX)?;
                cells.push(p);
            }
        }
        Ok(Self {
            cells,
            reps: raw.reps,
            master_seed: raw.master_seed,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Runs every cell of a classification config.
pub fn run_classification_grid(
    data: &LabeledData,
    config: &ClassificationConfig,
    jobs: Option<usize>,
) -> Result<Vec<ClassificationReport>> {
    config
        .cells
        .iter()
        .map(|p| run_classification(data, p, config.reps, config.master_seed, jobs))
        .collect()
}

/// Synthetic two-component Gaussian mixture with labels `pos` / `neg`. The
/// `s_star` signal coordinates are spread evenly over the `d` features, each
/// equal to `1/sqrt(s_star)`.
pub fn gmm_testbed(d: usize, n: usize, sigma: f64, s_star: usize, seed: u64) -> Result<LabeledData> {
    if s_star == 0 || s_star > d {
        return Err(Error::invalid(format!("need 1 <= s_star <= d = {d}, got {s_star}")));
    }
    let stride = d / s_star;
    let mut beta = vec![0.0; d];
    for k in 0..s_star {
        beta[k * stride] = 1.0 / (s_star as f64).sqrt();
    }
    let spec = ModelSpec::new(ModelKind::Gmm, sigma, ParamVector::new(beta)?, 0.0)?;
    let draws = gmm::generate_labeled(&spec, n, &mut NoiseOracle::live(seed))?;
    let (features, labels) = draws
        .into_iter()
        .map(|(s, z)| (s.y, if z > 0 { "pos" } else { "neg" }.to_string()))
        .unzip();
    LabeledData::new((0..d).map(|j| format!("x{j}")).collect(), features, labels)
}
