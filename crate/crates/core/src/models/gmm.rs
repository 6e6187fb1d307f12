//! Symmetric two-component Gaussian mixture `y = z·β* + e`, `z = ±1`,
//! `e ~ N(0, σ² I_d)`.

use super::{check_batch, check_positive, LatentModel, ModelKind, ModelSpec, ParamVector};
use crate::error::{Error, Result};
use crate::mechanisms::{clamp, NoiseOracle};
use crate::scalar::{dot, logistic, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct GmmSample<F> {
    pub y: Vec<F>,
}

impl<F: Scalar> GmmSample<F> {
    pub fn new(y: Vec<F>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gmm sample"));
        }
        Ok(Self { y })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Gmm;

/// Posterior probability of the `+β` component: `1 / (1 + exp(-⟨β, y⟩/σ²))`.
pub fn weight<F: Scalar>(beta: &ParamVector<F>, y: &[F], sigma: F) -> F {
    logistic(dot(beta.as_slice(), y) / (sigma * sigma))
}

/// Draws `n` samples together with their latent labels `z ∈ {+1, -1}`.
pub fn generate_labeled<F: Scalar>(
    spec: &ModelSpec<F>,
    n: usize,
    oracle: &mut NoiseOracle,
) -> Result<Vec<(GmmSample<F>, i8)>> {
    spec.expect_kind(ModelKind::Gmm)?;
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let beta = spec.true_beta.as_slice();
    let sigma = spec.sigma.to_f64_lossy();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z = oracle.rademacher();
        let y = beta
            .iter()
            .map(|&b| F::lit(z * b.to_f64_lossy() + sigma * oracle.standard_normal()))
            .collect();
        out.push((GmmSample { y }, if z > 0.0 { 1 } else { -1 }));
    }
    Ok(out)
}

pub fn generate<F: Scalar>(spec: &ModelSpec<F>, n: usize, oracle: &mut NoiseOracle) -> Result<Vec<GmmSample<F>>> {
    Ok(generate_labeled(spec, n, oracle)?.into_iter().map(|(s, _)| s).collect())
}

// (1/n) Σ (2w − 1)·Π_T(y_i) − β; the weight always sees the raw y_i.
fn kernel<F: Scalar>(beta: &ParamVector<F>, batch: &[GmmSample<F>], sigma: F, t: F) -> Result<Vec<F>> {
    check_batch::<F, Gmm>(beta, batch)?;
    check_positive("sigma", sigma)?;
    let two = F::lit(2.0);
    let mut acc = vec![F::zero(); beta.dim()];
    for s in batch {
        let c = two * weight(beta, &s.y, sigma) - F::one();
        for (a, &y) in acc.iter_mut().zip(&s.y) {
            *a = *a + c * clamp(y, t);
        }
    }
    let n = F::from_count(batch.len());
    Ok(acc.iter().zip(beta.as_slice()).map(|(&a, &b)| a / n - b).collect())
}

pub fn grad<F: Scalar>(beta: &ParamVector<F>, batch: &[GmmSample<F>], sigma: F) -> Result<Vec<F>> {
    kernel(beta, batch, sigma, F::infinity())
}

pub fn truncated_grad<F: Scalar>(beta: &ParamVector<F>, batch: &[GmmSample<F>], sigma: F, t: F) -> Result<Vec<F>> {
    check_positive("truncation level", t)?;
    kernel(beta, batch, sigma, t)
}

/// `2·η·T·N₀/n`.
pub fn sensitivity<F: Scalar>(t: F, eta: F, n0: usize, n: usize) -> Result<F> {
    Gmm::sensitivity(t, eta, n0, n)
}

impl<F: Scalar> LatentModel<F> for Gmm {
    type Sample = GmmSample<F>;
    const KIND: ModelKind = ModelKind::Gmm;

    fn sample_dim(sample: &GmmSample<F>) -> usize {
        sample.y.len()
    }

    fn grad(beta: &ParamVector<F>, batch: &[GmmSample<F>], sigma: F) -> Result<Vec<F>> {
        grad(beta, batch, sigma)
    }

    fn truncated_grad(beta: &ParamVector<F>, batch: &[GmmSample<F>], sigma: F, t: F) -> Result<Vec<F>> {
        truncated_grad(beta, batch, sigma, t)
    }

    fn sensitivity_factor(t: F) -> F {
        F::lit(2.0) * t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector<f64> {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn sample(v: &[f64]) -> GmmSample<f64> {
        GmmSample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn weight_examples() {
        assert_eq!(weight(&pv(&[0.0, 0.0]), &[3.0, -1.0], 0.7), 0.5);
        // <β, y>/σ² = ln 3
        let w = weight(&pv(&[3f64.ln()]), &[1.0], 1.0);
        assert!((w - 0.75).abs() < 1e-15);
        let w = weight(&pv(&[-(3f64.ln())]), &[1.0], 1.0);
        assert!((w - 0.25).abs() < 1e-15);
        let b = pv(&[0.4, -1.3]);
        let nb = pv(&[-0.4, 1.3]);
        assert_eq!(weight(&b, &[0.9, 0.2], 0.5) + weight(&nb, &[0.9, 0.2], 0.5), 1.0);
    }

    #[test]
    fn grad_examples() {
        let g = grad(&pv(&[0.0, 0.0]), &[sample(&[1.0, 2.0]), sample(&[-3.0, 0.5])], 1.0).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let w2 = 1.0 / (1.0 + (-2f64).exp());
        let g = grad(&pv(&[1.0]), &[sample(&[2.0])], 1.0).unwrap();
        assert!((g[0] - ((2.0 * w2 - 1.0) * 2.0 - 1.0)).abs() < 1e-14);
        assert!((g[0] - 0.52318).abs() < 1e-5);
    }

    #[test]
    fn truncated_grad_examples() {
        let batch = [sample(&[2.0]), sample(&[-0.5])];
        let b = pv(&[1.0]);
        assert_eq!(truncated_grad(&b, &batch, 1.0, 2.0).unwrap(), grad(&b, &batch, 1.0).unwrap());
        let g = truncated_grad(&pv(&[1.0]), &[sample(&[2.0])], 1.0, 1.5).unwrap();
        assert!((g[0] - 0.14239).abs() < 1e-5);
        let g = truncated_grad(&pv(&[0.0]), &[sample(&[2.0]), sample(&[5.0])], 1.0, 1.5).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn grad_errors() {
        assert!(grad(&pv(&[1.0]), &[], 1.0).is_err());
        assert!(grad(&pv(&[1.0]), &[sample(&[1.0, 2.0])], 1.0).is_err());
        assert!(truncated_grad(&pv(&[1.0]), &[sample(&[1.0])], 1.0, 0.0).is_err());
    }

    #[test]
    fn silent_generator_returns_beta() {
        let spec = ModelSpec::new(ModelKind::Gmm, 0.5, pv(&[1.0, -2.0]), 0.0).unwrap();
        let data = generate(&spec, 5, &mut NoiseOracle::silent()).unwrap();
        assert!(data.iter().all(|s| s.y == vec![1.0, -2.0]));
        assert!(generate(&spec, 0, &mut NoiseOracle::silent()).is_err());
        let wrong = ModelSpec::new(ModelKind::Mor, 0.5, pv(&[1.0]), 0.0).unwrap();
        assert!(generate(&wrong, 3, &mut NoiseOracle::silent()).is_err());
    }

    #[test]
    fn generator_moments() {
        let spec = ModelSpec::new(ModelKind::Gmm, 0.5, pv(&[1.0, 0.0]), 0.0).unwrap();
        let n = 100_000;
        let data = generate(&spec, n, &mut NoiseOracle::live(11)).unwrap();
        for j in 0..2 {
            let mean = data.iter().map(|s| s.y[j]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "coord {j} mean {mean}");
        }
        let m2 = data.iter().map(|s| s.y[0] * s.y[0]).sum::<f64>() / n as f64;
        assert!((m2 / 1.25 - 1.0).abs() < 0.02, "{m2}");
    }
}
