//! Linear regression `y = xᵀβ* + e` whose covariates are missing completely at
//! random, each coordinate independently with probability `p`.
//!
//! The E-step fills the missing block with its conditional mean
//!
//! ```text
//! m_β = z⊙x + (y − ⟨β, z⊙x⟩) / (σ² + ‖(1−z)⊙β‖²) · (1−z)⊙β
//! ```
//!
//! and the conditional second moment `K_β = diag(1−z) + m mᵀ − u uᵀ` with
//! `u = (1−z)⊙m`. `K_β` is never formed: `K_β β = (1−z)⊙β + m·(mᵀβ) − u·(uᵀβ)`.

use super::{check_batch, check_positive, LatentModel, ModelKind, ModelSpec, ParamVector};
use crate::error::{Error, Result};
use crate::mechanisms::{clamp, NoiseOracle};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct RmcSample<F> {
    /// Observed covariates, zero where missing.
    pub x_obs: Vec<F>,
    /// `true` where the coordinate is observed.
    pub z: Vec<bool>,
    pub y: F,
}

impl<F: Scalar> RmcSample<F> {
    pub fn new(x_obs: Vec<F>, z: Vec<bool>, y: F) -> Result<Self> {
        if x_obs.len() != z.len() {
            return Err(Error::DimensionMismatch {
                context: "observation mask",
                expected: x_obs.len(),
                found: z.len(),
            });
        }
        if !y.is_finite() || x_obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("missing covariate sample"));
        }
        if x_obs.iter().zip(&z).any(|(&x, &obs)| !obs && x != F::zero()) {
            return Err(Error::invalid("x_obs must be zero at missing coordinates"));
        }
        Ok(Self { x_obs, z, y })
    }

    /// Masks a fully observed covariate vector.
    pub fn from_full(x: &[F], z: Vec<bool>, y: F) -> Result<Self> {
        let x_obs = x.iter().zip(&z).map(|(&v, &o)| if o { v } else { F::zero() }).collect();
        Self::new(x_obs, z, y)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Rmc;

/// Conditional mean of the full covariate vector given `(x_obs, y)`.
pub fn m_beta<F: Scalar>(beta: &ParamVector<F>, sample: &RmcSample<F>, sigma: F) -> Vec<F> {
    let b = beta.as_slice();
    let missing_norm_sq = b
        .iter()
        .zip(&sample.z)
        .filter(|(_, &o)| !o)
        .fold(F::zero(), |acc, (&v, _)| acc + v * v);
    let coef = (sample.y - dot(b, &sample.x_obs)) / (sigma * sigma + missing_norm_sq);
    sample
        .x_obs
        .iter()
        .zip(&sample.z)
        .zip(b)
        .map(|((&x, &o), &bj)| if o { x } else { x + coef * bj })
        .collect()
}

/// Samples from fixed covariates: masks each coordinate with probability
/// `spec.missing_prob` and draws `y = xᵀβ* + e`.
pub fn generate_from_covariates<F: Scalar>(
    spec: &ModelSpec<F>,
    xs: &[Vec<F>],
    oracle: &mut NoiseOracle,
) -> Result<Vec<RmcSample<F>>> {
    spec.expect_kind(ModelKind::Rmc)?;
    if xs.is_empty() {
        return Err(Error::invalid("sample size must be positive"));
    }
    let sigma = spec.sigma.to_f64_lossy();
    let keep = 1.0 - spec.missing_prob.to_f64_lossy();
    xs.iter()
        .map(|x| {
            if x.len() != spec.d() {
                return Err(Error::DimensionMismatch {
                    context: "covariates",
                    expected: spec.d(),
                    found: x.len(),
                });
            }
            let y = dot(x, spec.true_beta.as_slice()).to_f64_lossy() + sigma * oracle.standard_normal();
            let z = (0..x.len()).map(|_| oracle.coin(keep)).collect();
            RmcSample::from_full(x, z, F::lit(y))
        })
        .collect()
}

pub fn generate<F: Scalar>(spec: &ModelSpec<F>, n: usize, oracle: &mut NoiseOracle) -> Result<Vec<RmcSample<F>>> {
    spec.expect_kind(ModelKind::Rmc)?;
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let sigma = spec.sigma.to_f64_lossy();
    let keep = 1.0 - spec.missing_prob.to_f64_lossy();
    let beta: Vec<f64> = spec.true_beta.as_slice().iter().map(|b| b.to_f64_lossy()).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..beta.len()).map(|_| oracle.standard_normal()).collect();
        let y = dot(&x, &beta) + sigma * oracle.standard_normal();
        let z: Vec<bool> = (0..beta.len()).map(|_| oracle.coin(keep)).collect();
        let x: Vec<F> = x.into_iter().map(F::lit).collect();
        out.push(RmcSample::from_full(&x, z, F::lit(y))?);
    }
    Ok(out)
}

// (1/n) Σ [Π(y)Π(m) − (1−z)⊙β − Π(m)Π(mᵀβ) + Π(u)Π(uᵀβ)], u = (1−z)⊙m.
fn kernel<F: Scalar>(beta: &ParamVector<F>, batch: &[RmcSample<F>], sigma: F, t: F) -> Result<Vec<F>> {
    check_batch::<F, Rmc>(beta, batch)?;
    check_positive("sigma", sigma)?;
    let b = beta.as_slice();
    let mut acc = vec![F::zero(); beta.dim()];
    for s in batch {
        let m = m_beta(beta, s, sigma);
        let u: Vec<F> = m
            .iter()
            .zip(&s.z)
            .map(|(&mj, &o)| if o { F::zero() } else { mj })
            .collect();
        let cy = clamp(s.y, t);
        let cmb = clamp(dot(&m, b), t);
        let cub = clamp(dot(&u, b), t);
        for j in 0..acc.len() {
            let diag = if s.z[j] { F::zero() } else { b[j] };
            let cm = clamp(m[j], t);
            acc[j] = acc[j] + (cy * cm - diag - cm * cmb + clamp(u[j], t) * cub);
        }
    }
    let n = F::from_count(batch.len());
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// `(1/n) Σ [y·m_β − K_β·β]`.
pub fn grad<F: Scalar>(beta: &ParamVector<F>, batch: &[RmcSample<F>], sigma: F) -> Result<Vec<F>> {
    kernel(beta, batch, sigma, F::infinity())
}

/// Truncated gradient; the `diag(1−z)·β` term is left unclamped.
pub fn truncated_grad<F: Scalar>(beta: &ParamVector<F>, batch: &[RmcSample<F>], sigma: F, t: F) -> Result<Vec<F>> {
    check_positive("truncation level", t)?;
    kernel(beta, batch, sigma, t)
}

/// `6·η·T²·N₀/n`.
pub fn sensitivity<F: Scalar>(t: F, eta: F, n0: usize, n: usize) -> Result<F> {
    Rmc::sensitivity(t, eta, n0, n)
}

impl<F: Scalar> LatentModel<F> for Rmc {
    type Sample = RmcSample<F>;
    const KIND: ModelKind = ModelKind::Rmc;

    fn sample_dim(sample: &RmcSample<F>) -> usize {
        sample.x_obs.len()
    }

    fn grad(beta: &ParamVector<F>, batch: &[RmcSample<F>], sigma: F) -> Result<Vec<F>> {
        grad(beta, batch, sigma)
    }

    fn truncated_grad(beta: &ParamVector<F>, batch: &[RmcSample<F>], sigma: F, t: F) -> Result<Vec<F>> {
        truncated_grad(beta, batch, sigma, t)
    }

    // Three clamped products of magnitude ≤ T² each. The unclamped diag(1−z)·β
    // term only stays inside this bound while ‖β‖∞ ≤ T².
    fn sensitivity_factor(t: F) -> F {
        F::lit(6.0) * t * t
    }
}
