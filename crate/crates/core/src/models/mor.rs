//! Mixture of two symmetric linear regressions `y = z·xᵀβ* + e`.

use super::{check_batch, check_positive, LatentModel, ModelKind, ModelSpec, ParamVector};
use crate::error::{Error, Result};
use crate::mechanisms::{clamp, NoiseOracle};
use crate::scalar::{dot, logistic, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct MorSample<F> {
    pub x: Vec<F>,
    pub y: F,
}

impl<F: Scalar> MorSample<F> {
    pub fn new(x: Vec<F>, y: F) -> Result<Self> {
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture of regression sample"));
        }
        Ok(Self { x, y })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Mor;

/// `1 / (1 + exp(-y·⟨β, x⟩/σ²))`.
pub fn weight<F: Scalar>(beta: &ParamVector<F>, x: &[F], y: F, sigma: F) -> F {
    logistic(y * dot(beta.as_slice(), x) / (sigma * sigma))
}

pub fn generate<F: Scalar>(spec: &ModelSpec<F>, n: usize, oracle: &mut NoiseOracle) -> Result<Vec<MorSample<F>>> {
    spec.expect_kind(ModelKind::Mor)?;
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let beta: Vec<f64> = spec.true_beta.as_slice().iter().map(|b| b.to_f64_lossy()).collect();
    let sigma = spec.sigma.to_f64_lossy();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..beta.len()).map(|_| oracle.standard_normal()).collect();
        let z = oracle.rademacher();
        let y = z * dot(&x, &beta) + sigma * oracle.standard_normal();
        out.push(MorSample {
            x: x.into_iter().map(F::lit).collect(),
            y: F::lit(y),
        });
    }
    Ok(out)
}

// (1/n) Σ [(2w − 1)·Π_T(y)·Π_T(x) − Π_T(x)·Π_T(xᵀβ)]; w uses the raw (x, y).
fn kernel<F: Scalar>(beta: &ParamVector<F>, batch: &[MorSample<F>], sigma: F, t: F) -> Result<Vec<F>> {
    check_batch::<F, Mor>(beta, batch)?;
    check_positive("sigma", sigma)?;
    let two = F::lit(2.0);
    let mut acc = vec![F::zero(); beta.dim()];
    for s in batch {
        let w = weight(beta, &s.x, s.y, sigma);
        let cy = clamp(s.y, t);
        let cxb = clamp(dot(&s.x, beta.as_slice()), t);
        for (a, &x) in acc.iter_mut().zip(&s.x) {
            let cx = clamp(x, t);
            *a = *a + ((two * w - F::one()) * cy * cx - cx * cxb);
        }
    }
    let n = F::from_count(batch.len());
    Ok(acc.into_iter().map(|a| a / n).collect())
}

pub fn grad<F: Scalar>(beta: &ParamVector<F>, batch: &[MorSample<F>], sigma: F) -> Result<Vec<F>> {
    kernel(beta, batch, sigma, F::infinity())
}

pub fn truncated_grad<F: Scalar>(beta: &ParamVector<F>, batch: &[MorSample<F>], sigma: F, t: F) -> Result<Vec<F>> {
    check_positive("truncation level", t)?;
    kernel(beta, batch, sigma, t)
}

/// `4·η·T²·N₀/n`.
pub fn sensitivity<F: Scalar>(t: F, eta: F, n0: usize, n: usize) -> Result<F> {
    Mor::sensitivity(t, eta, n0, n)
}

impl<F: Scalar> LatentModel<F> for Mor {
    type Sample = MorSample<F>;
    const KIND: ModelKind = ModelKind::Mor;

    fn sample_dim(sample: &MorSample<F>) -> usize {
        sample.x.len()
    }

    fn grad(beta: &ParamVector<F>, batch: &[MorSample<F>], sigma: F) -> Result<Vec<F>> {
        grad(beta, batch, sigma)
    }

    fn truncated_grad(beta: &ParamVector<F>, batch: &[MorSample<F>], sigma: F, t: F) -> Result<Vec<F>> {
        truncated_grad(beta, batch, sigma, t)
    }

    // Each per-sample term is bounded by 2T² in ℓ∞.
    fn sensitivity_factor(t: F) -> F {
        F::lit(4.0) * t * t
    }
}
