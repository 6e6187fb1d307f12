//! Differentially private gradient EM drivers.
//!
//! Both drivers split the data into `N₀` disjoint, equally sized batches and
//! take one truncated gradient step per batch. The high-dimensional driver
//! privatizes each step with noisy hard thresholding; the low-dimensional one
//! adds isotropic Gaussian noise.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{noisy_hard_threshold, sample_gaussian, NoiseOracle, PrivacyBudget};
use crate::models::{Dataset, Gmm, LatentModel, Mor, ParamVector, Rmc};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    HighDim,
    LowDim,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig<F> {
    pub eta: F,
    /// Truncation level `T`. `+∞` disables truncation and is only accepted
    /// together with a silent noise oracle.
    pub truncation: F,
    /// Number of iterations `N₀`, one disjoint batch each.
    pub iterations: usize,
    /// Projection sparsity `ŝ`; ignored in the low-dimensional regime.
    pub s_hat: usize,
    pub budget: PrivacyBudget<F>,
    pub regime: Regime,
}

impl<F: Scalar> EmConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta < F::zero() {
            return Err(Error::invalid(format!("step size must be finite and nonnegative, got {}", self.eta)));
        }
        if self.truncation.is_nan() || self.truncation <= F::zero() {
            return Err(Error::invalid(format!("truncation must be positive, got {}", self.truncation)));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iteration count N0 must be positive"));
        }
        if self.regime == Regime::HighDim && self.s_hat == 0 {
            return Err(Error::invalid("high-dimensional regime requires s_hat >= 1"));
        }
        Ok(())
    }
}

/// Iterates of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<F> {
    /// `β⁰ … β^{N₀}`.
    pub betas: Vec<ParamVector<F>>,
    /// `‖βᵗ − β*‖₂` when the truth was supplied.
    pub errors: Option<Vec<F>>,
    /// `min(‖βᵗ − β*‖₂, ‖βᵗ + β*‖₂)` when the truth was supplied.
    pub errors_signfree: Option<Vec<F>>,
    /// Sample ranges consumed by each iteration; empty for full-data runs.
    pub batch_bounds: Vec<Range<usize>>,
}

impl<F: Scalar> Trajectory<F> {
    pub(crate) fn new(
        betas: Vec<ParamVector<F>>,
        batch_bounds: Vec<Range<usize>>,
        true_beta: Option<&ParamVector<F>>,
    ) -> Self {
        let errors = true_beta.map(|b| betas.iter().map(|x| x.l2_distance(b)).collect());
        let errors_signfree = true_beta.map(|b| betas.iter().map(|x| x.sign_free_distance(b)).collect());
        Self {
            betas,
            errors,
            errors_signfree,
            batch_bounds,
        }
    }

    pub fn final_beta(&self) -> &ParamVector<F> {
        self.betas.last().expect("trajectory holds at least beta0")
    }

    pub fn final_error(&self) -> Option<F> {
        self.errors.as_ref().and_then(|e| e.last().copied())
    }
}

/// `N₀` contiguous disjoint ranges of size `⌊n/N₀⌋`; the trailing `n mod N₀`
/// samples are dropped.
pub fn split_batches(n: usize, n0: usize) -> Result<Vec<Range<usize>>> {
    if n0 == 0 {
        return Err(Error::invalid("N0 must be positive"));
    }
    if n0 > n {
        return Err(Error::invalid(format!("N0 = {n0} exceeds the sample size n = {n}")));
    }
    let size = n / n0;
    Ok((0..n0).map(|t| t * size..(t + 1) * size).collect())
}

/// Number of samples actually consumed, `N₀·⌊n/N₀⌋`.
pub fn samples_used(n: usize, n0: usize) -> usize {
    if n0 == 0 {
        0
    } else {
        n0 * (n / n0)
    }
}

fn check_inputs<F: Scalar, M: LatentModel<F>>(
    data: &[M::Sample],
    config: &EmConfig<F>,
    beta0: &ParamVector<F>,
    oracle: &NoiseOracle,
    true_beta: Option<&ParamVector<F>>,
) -> Result<()> {
    config.validate()?;
    if config.truncation.is_infinite() && !oracle.is_silent() {
        return Err(Error::invalid("infinite truncation has unbounded sensitivity; only legal with silent noise"));
    }
    if let Some(s) = data.first() {
        if M::sample_dim(s) != beta0.dim() {
            return Err(Error::DimensionMismatch {
                context: "beta0",
                expected: M::sample_dim(s),
                found: beta0.dim(),
            });
        }
    }
    if let Some(b) = true_beta {
        if b.dim() != beta0.dim() {
            return Err(Error::DimensionMismatch {
                context: "true_beta",
                expected: beta0.dim(),
                found: b.dim(),
            });
        }
    }
    Ok(())
}

/// `β + η·step`, rejecting non-finite coordinates.
fn gradient_step<F: Scalar>(beta: &ParamVector<F>, eta: F, step: &[F]) -> Result<Vec<F>> {
    let out: Vec<F> = beta.as_slice().iter().zip(step).map(|(&b, &g)| b + eta * g).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gradient step"));
    }
    Ok(out)
}

/// High-dimensional private EM: truncated gradient step on batch `t`, then
/// noisy hard thresholding to `ŝ` coordinates with the model's certified
/// sensitivity. Every iterate after `β⁰` has at most `ŝ` nonzeros.
pub fn run_high_dim<F: Scalar, M: LatentModel<F>>(
    _model: M,
    data: &[M::Sample],
    sigma: F,
    config: &EmConfig<F>,
    beta0: &ParamVector<F>,
    oracle: &mut NoiseOracle,
    true_beta: Option<&ParamVector<F>>,
) -> Result<Trajectory<F>> {
    check_inputs::<F, M>(data, config, beta0, oracle, true_beta)?;
    if config.regime != Regime::HighDim {
        return Err(Error::invalid("run_high_dim requires the high_dim regime"));
    }
    if beta0.support_size() > config.s_hat {
        return Err(Error::invalid(format!(
            "beta0 has {} nonzeros, more than s_hat = {}",
            beta0.support_size(),
            config.s_hat
        )));
    }
    if config.s_hat > beta0.dim() {
        return Err(Error::invalid(format!("s_hat = {} exceeds d = {}", config.s_hat, beta0.dim())));
    }
    let batches = split_batches(data.len(), config.iterations)?;
    let n_used = samples_used(data.len(), config.iterations);
    let lambda = if config.truncation.is_finite() {
        M::sensitivity(config.truncation, config.eta, config.iterations, n_used)?
    } else {
        F::zero()
    };

    let mut betas = Vec::with_capacity(config.iterations + 1);
    betas.push(beta0.clone());
    for range in &batches {
        let beta = betas.last().expect("nonempty");
        let step = M::truncated_grad(beta, &data[range.clone()], sigma, config.truncation)?;
        let half = gradient_step(beta, config.eta, &step)?;
        let selection = noisy_hard_threshold(&half, config.s_hat, lambda, &config.budget, oracle)?;
        betas.push(ParamVector::new(selection.values)?);
    }
    Ok(Trajectory::new(betas, batches, true_beta))
}

/// Per-coordinate variance of the Gaussian perturbation in the low-dimensional
/// driver: `2·η²·d·Δ(T)²·N₀²·ln(1.25/δ) / (n² ε²)`.
pub fn low_dim_noise_variance<F: Scalar, M: LatentModel<F>>(
    _model: M,
    eta: F,
    d: usize,
    t: F,
    n0: usize,
    n_used: usize,
    budget: &PrivacyBudget<F>,
) -> Result<F> {
    if !t.is_finite() || t <= F::zero() {
        return Err(Error::invalid(format!("noise calibration needs finite positive truncation, got {t}")));
    }
    if n_used == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let delta_t = M::sensitivity_factor(t);
    let n0 = F::from_count(n0);
    let n = F::from_count(n_used);
    let eps = budget.epsilon();
    Ok(F::lit(2.0) * eta * eta * F::from_count(d) * delta_t * delta_t * n0 * n0
        * (F::lit(1.25) / budget.delta()).ln()
        / (n * n * eps * eps))
}

/// Low-dimensional private EM: truncated gradient step plus i.i.d. Gaussian
/// noise with [`low_dim_noise_variance`] per coordinate.
pub fn run_low_dim<F: Scalar, M: LatentModel<F>>(
    model: M,
    data: &[M::Sample],
    sigma: F,
    config: &EmConfig<F>,
    beta0: &ParamVector<F>,
    oracle: &mut NoiseOracle,
    true_beta: Option<&ParamVector<F>>,
) -> Result<Trajectory<F>> {
    check_inputs::<F, M>(data, config, beta0, oracle, true_beta)?;
    if config.regime != Regime::LowDim {
        return Err(Error::invalid("run_low_dim requires the low_dim regime"));
    }
    let batches = split_batches(data.len(), config.iterations)?;
    let n_used = samples_used(data.len(), config.iterations);
    let d = beta0.dim();
    let std_dev = if config.truncation.is_finite() {
        low_dim_noise_variance(model, config.eta, d, config.truncation, config.iterations, n_used, &config.budget)?
            .sqrt()
    } else {
        F::zero()
    };

    let mut betas = Vec::with_capacity(config.iterations + 1);
    betas.push(beta0.clone());
    for range in &batches {
        let beta = betas.last().expect("nonempty");
        let step = M::truncated_grad(beta, &data[range.clone()], sigma, config.truncation)?;
        let mut next = gradient_step(beta, config.eta, &step)?;
        if std_dev > F::zero() && !oracle.is_silent() {
            for x in next.iter_mut() {
                *x = *x + sample_gaussian(std_dev, oracle)?;
            }
        }
        betas.push(ParamVector::new(next)?);
    }
    Ok(Trajectory::new(betas, batches, true_beta))
}

/// Runs the driver selected by `config.regime`.
pub fn run<F: Scalar, M: LatentModel<F>>(
    model: M,
    data: &[M::Sample],
    sigma: F,
    config: &EmConfig<F>,
    beta0: &ParamVector<F>,
    oracle: &mut NoiseOracle,
    true_beta: Option<&ParamVector<F>>,
) -> Result<Trajectory<F>> {
    match config.regime {
        Regime::HighDim => run_high_dim(model, data, sigma, config, beta0, oracle, true_beta),
        Regime::LowDim => run_low_dim(model, data, sigma, config, beta0, oracle, true_beta),
    }
}

/// [`run`] over a dataset of any model.
pub fn run_dataset<F: Scalar>(
    data: &Dataset<F>,
    sigma: F,
    config: &EmConfig<F>,
    beta0: &ParamVector<F>,
    oracle: &mut NoiseOracle,
    true_beta: Option<&ParamVector<F>>,
) -> Result<Trajectory<F>> {
    match data {
        Dataset::Gmm(d) => run(Gmm, d, sigma, config, beta0, oracle, true_beta),
        Dataset::Mor(d) => run(Mor, d, sigma, config, beta0, oracle, true_beta),
        Dataset::Rmc(d) => run(Rmc, d, sigma, config, beta0, oracle, true_beta),
    }
}

/// Contraction summary of an error sequence: the smallest `κ` such that
/// `e_t ≤ κ·e_{t−1} + floor` for all `t ≥ 1`, with `floor = min_t e_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricDecay<F> {
    pub kappa: F,
    pub floor: F,
}

impl<F: Scalar> GeometricDecay<F> {
    pub fn fit(errors: &[F]) -> Option<Self> {
        if errors.len() < 2 {
            return None;
        }
        let floor = errors.iter().copied().fold(F::infinity(), F::min);
        let kappa = errors
            .windows(2)
            .filter(|w| w[0] > F::zero())
            .map(|w| ((w[1] - floor) / w[0]).max(F::zero()))
            .fold(F::zero(), F::max);
        Some(Self { kappa, floor })
    }
}
