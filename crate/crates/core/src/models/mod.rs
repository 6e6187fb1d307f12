//! Latent variable models: data generators, sample gradients of the EM
//! objective, their truncated versions and the per-model sensitivity constants.

pub mod gmm;
pub mod mor;
pub mod rmc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

pub use gmm::{Gmm, GmmSample};
pub use mor::{Mor, MorSample};
pub use rmc::{Rmc, RmcSample};

/// Dense parameter vector with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<F> {
    values: Vec<F>,
}

impl<F: Scalar> ParamVector<F> {
    pub fn new(values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("parameter vector must have positive dimension"));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self { values })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            values: vec![F::zero(); d],
        }
    }

    /// First `s` coordinates equal to `1/sqrt(s)`, the rest zero.
    pub fn unit_sparse(d: usize, s: usize) -> Result<Self> {
        if s == 0 || s > d {
            return Err(Error::invalid(format!("need 1 <= s <= d, got s = {s}, d = {d}")));
        }
        let v = F::one() / F::from_count(s).sqrt();
        let mut values = vec![F::zero(); d];
        values[..s].iter_mut().for_each(|x| *x = v);
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<F> {
        self.values
    }

    /// Number of nonzero coordinates.
    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|x| **x != F::zero()).count()
    }

    pub fn l2_norm(&self) -> F {
        scalar::l2_norm(&self.values)
    }

    pub fn l2_distance(&self, other: &Self) -> F {
        self.values
            .iter()
            .zip(&other.values)
            .fold(F::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
            .sqrt()
    }

    /// `min(‖self − other‖, ‖self + other‖)`, the error up to the global sign.
    pub fn sign_free_distance(&self, other: &Self) -> F {
        let plus = self
            .values
            .iter()
            .zip(&other.values)
            .fold(F::zero(), |acc, (&a, &b)| acc + (a + b) * (a + b))
            .sqrt();
        self.l2_distance(other).min(plus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gmm,
    Mor,
    Rmc,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Gmm => "gmm",
            ModelKind::Mor => "mor",
            ModelKind::Rmc => "rmc",
        })
    }
}

/// Generative model description. `sigma` is treated as known.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<F> {
    pub kind: ModelKind,
    pub sigma: F,
    pub true_beta: ParamVector<F>,
    /// Per-coordinate missingness probability, regression with missing covariates only.
    pub missing_prob: F,
}

impl<F: Scalar> ModelSpec<F> {
    pub fn new(kind: ModelKind, sigma: F, true_beta: ParamVector<F>, missing_prob: F) -> Result<Self> {
        if sigma.is_nan() || sigma <= F::zero() || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(missing_prob >= F::zero() && missing_prob < F::one()) {
            return Err(Error::invalid(format!("missing_prob must lie in [0, 1), got {missing_prob}")));
        }
        Ok(Self {
            kind,
            sigma,
            true_beta,
            missing_prob,
        })
    }

    pub fn d(&self) -> usize {
        self.true_beta.dim()
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::invalid(format!("model spec is {}, expected {kind}", self.kind)));
        }
        Ok(())
    }
}

/// Model-specific ingredients consumed by the EM drivers.
pub trait LatentModel<F: Scalar>: Copy + Send + Sync {
    type Sample: Clone + Send + Sync;

    const KIND: ModelKind;

    fn sample_dim(sample: &Self::Sample) -> usize;

    /// Sample gradient `∇Q_n(β; β)` averaged over `batch`.
    fn grad(beta: &ParamVector<F>, batch: &[Self::Sample], sigma: F) -> Result<Vec<F>>;

    /// Truncated gradient `f_T(∇Q_n(β; β))`. `t = +∞` disables every clamp and
    /// reproduces [`LatentModel::grad`] bit for bit.
    fn truncated_grad(beta: &ParamVector<F>, batch: &[Self::Sample], sigma: F, t: F) -> Result<Vec<F>>;

    /// Per-record ℓ∞ sensitivity factor Δ(T) of the truncated gradient sum
    /// (`2T`, `4T²` or `6T²`).
    fn sensitivity_factor(t: F) -> F;

    /// Certified ℓ∞ sensitivity `η·Δ(T)·N₀/n` of the gradient step.
    fn sensitivity(t: F, eta: F, n0: usize, n: usize) -> Result<F> {
        if !t.is_finite() || t <= F::zero() {
            return Err(Error::invalid(format!("sensitivity needs finite positive truncation, got {t}")));
        }
        if !eta.is_finite() || eta < F::zero() {
            return Err(Error::invalid(format!("step size must be finite and nonnegative, got {eta}")));
        }
        if n0 == 0 || n == 0 {
            return Err(Error::invalid("N0 and n must be positive"));
        }
        Ok(eta * Self::sensitivity_factor(t) * F::from_count(n0) / F::from_count(n))
    }
}

pub(crate) fn check_batch<F: Scalar, M: LatentModel<F>>(beta: &ParamVector<F>, batch: &[M::Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    for s in batch {
        let found = M::sample_dim(s);
        if found != beta.dim() {
            return Err(Error::DimensionMismatch {
                context: "batch sample",
                expected: beta.dim(),
                found,
            });
        }
    }
    Ok(())
}

pub(crate) fn check_positive<F: Scalar>(name: &str, x: F) -> Result<()> {
    if x.is_nan() || x <= F::zero() {
        return Err(Error::invalid(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

/// A generated dataset of any of the three models.
#[derive(Debug, Clone)]
pub enum Dataset<F> {
    Gmm(Vec<GmmSample<F>>),
    Mor(Vec<MorSample<F>>),
    Rmc(Vec<RmcSample<F>>),
}

impl<F: Scalar> Dataset<F> {
    pub fn generate(spec: &ModelSpec<F>, n: usize, oracle: &mut crate::mechanisms::NoiseOracle) -> Result<Self> {
        Ok(match spec.kind {
            ModelKind::Gmm => Dataset::Gmm(gmm::generate(spec, n, oracle)?),
            ModelKind::Mor => Dataset::Mor(mor::generate(spec, n, oracle)?),
            ModelKind::Rmc => Dataset::Rmc(rmc::generate(spec, n, oracle)?),
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Gmm(v) => v.len(),
            Dataset::Mor(v) => v.len(),
            Dataset::Rmc(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Dataset::Gmm(_) => ModelKind::Gmm,
            Dataset::Mor(_) => ModelKind::Mor,
            Dataset::Rmc(_) => ModelKind::Rmc,
        }
    }
}
