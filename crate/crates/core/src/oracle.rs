//! Brute-force references: exact top-k selection, explicit EM objectives with
//! finite-difference gradients, and non-private gradient EM.
//!
//! These are deliberately written from the objective functions rather than the
//! closed-form gradients in [`crate::models`], so the two can check each other.

use crate::em_engine::{split_batches, Trajectory};
use crate::error::{Error, Result};
use crate::mechanisms::SparseSelection;
use crate::models::{Gmm, GmmSample, LatentModel, Mor, MorSample, ParamVector, Rmc, RmcSample};
use crate::scalar::{logistic, Scalar};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// The `s` largest-magnitude coordinates of `v` by a full stable sort; ties go
/// to the lowest index.
pub fn exact_top_k<F: Scalar>(v: &[F], s: usize) -> Result<SparseSelection<F>> {
    if s == 0 || s > v.len() {
        return Err(Error::invalid(format!("need 1 <= s <= d = {}, got {s}", v.len())));
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().partial_cmp(&v[a].abs()).expect("finite input"));
    let mut support = order[..s].to_vec();
    support.sort_unstable();
    let mut values = vec![F::zero(); v.len()];
    for &j in &support {
        values[j] = v[j];
    }
    Ok(SparseSelection { support, values })
}

/// A model whose EM objective `Q_n(β′; β)` can be evaluated directly.
pub trait ExplicitObjective<F: Scalar>: LatentModel<F> {
    /// `Q_n(β′; β)` averaged over `batch`.
    fn q_value(beta_prime: &[F], beta: &[F], batch: &[Self::Sample], sigma: F) -> Result<F>;

    /// `∇_{β′} Q_n(β′; β)` at `β′ = β`, written from the expanded objective
    /// (materialized matrices, no shared code with the model kernels).
    fn reference_grad(beta: &[F], batch: &[Self::Sample], sigma: F) -> Result<Vec<F>>;
}

fn check_nonempty<T>(batch: &[T]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

fn check_len<F>(context: &'static str, v: &[F], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            context,
            expected: d,
            found: v.len(),
        });
    }
    Ok(())
}

fn inner<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for i in 0..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

impl<F: Scalar> ExplicitObjective<F> for Gmm {
    /// `−(1/2n) Σ [w‖y − β′‖² + (1 − w)‖y + β′‖²]`.
    fn q_value(beta_prime: &[F], beta: &[F], batch: &[GmmSample<F>], sigma: F) -> Result<F> {
        check_nonempty(batch)?;
        check_len("beta", beta, beta_prime.len())?;
        let mut total = F::zero();
        for s in batch {
            check_len("sample", &s.y, beta.len())?;
            let w = logistic(inner(beta, &s.y) / (sigma * sigma));
            let minus: F = s.y.iter().zip(beta_prime).map(|(&y, &b)| (y - b) * (y - b)).sum();
            let plus: F = s.y.iter().zip(beta_prime).map(|(&y, &b)| (y + b) * (y + b)).sum();
            total = total + w * minus + (F::one() - w) * plus;
        }
        Ok(-total / (F::lit(2.0) * F::from_count(batch.len())))
    }

    fn reference_grad(beta: &[F], batch: &[GmmSample<F>], sigma: F) -> Result<Vec<F>> {
        check_nonempty(batch)?;
        let n = F::from_count(batch.len());
        let mut g = vec![F::zero(); beta.len()];
        for s in batch {
            let w = logistic(inner(beta, &s.y) / (sigma * sigma));
            for j in 0..beta.len() {
                g[j] = g[j] + w * (s.y[j] - beta[j]) - (F::one() - w) * (s.y[j] + beta[j]);
            }
        }
        Ok(g.into_iter().map(|x| x / n).collect())
    }
}

impl<F: Scalar> ExplicitObjective<F> for Mor {
    /// `−(1/2n) Σ [w(y − ⟨x, β′⟩)² + (1 − w)(y + ⟨x, β′⟩)²]`.
    fn q_value(beta_prime: &[F], beta: &[F], batch: &[MorSample<F>], sigma: F) -> Result<F> {
        check_nonempty(batch)?;
        check_len("beta", beta, beta_prime.len())?;
        let mut total = F::zero();
        for s in batch {
            check_len("sample", &s.x, beta.len())?;
            let w = logistic(s.y * inner(beta, &s.x) / (sigma * sigma));
            let fit = inner(&s.x, beta_prime);
            total = total + w * (s.y - fit) * (s.y - fit) + (F::one() - w) * (s.y + fit) * (s.y + fit);
        }
        Ok(-total / (F::lit(2.0) * F::from_count(batch.len())))
    }

    fn reference_grad(beta: &[F], batch: &[MorSample<F>], sigma: F) -> Result<Vec<F>> {
        check_nonempty(batch)?;
        let n = F::from_count(batch.len());
        let mut g = vec![F::zero(); beta.len()];
        for s in batch {
            let w = logistic(s.y * inner(beta, &s.x) / (sigma * sigma));
            let fit = inner(&s.x, beta);
            for (gj, &xj) in g.iter_mut().zip(&s.x) {
                *gj = *gj + w * (s.y - fit) * xj - (F::one() - w) * (s.y + fit) * xj;
            }
        }
        Ok(g.into_iter().map(|x| x / n).collect())
    }
}

/// Conditional moments of one missing-covariate record: the fill-in `m` and
/// the dense second-moment matrix `K = diag(1−z) + m mᵀ − u uᵀ`.
fn rmc_moments<F: Scalar>(beta: &[F], s: &RmcSample<F>, sigma: F) -> (Vec<F>, Vec<Vec<F>>) {
    let d = beta.len();
    let miss: Vec<F> = s.z.iter().map(|&o| if o { F::zero() } else { F::one() }).collect();
    let masked_beta: Vec<F> = (0..d).map(|j| miss[j] * beta[j]).collect();
    let denom = sigma * sigma + inner(&masked_beta, &masked_beta);
    let resid = s.y - inner(beta, &s.x_obs);
    let m: Vec<F> = (0..d).map(|j| s.x_obs[j] + resid / denom * masked_beta[j]).collect();
    let u: Vec<F> = (0..d).map(|j| miss[j] * m[j]).collect();
    let mut k = vec![vec![F::zero(); d]; d];
    for i in 0..d {
        for j in 0..d {
            k[i][j] = m[i] * m[j] - u[i] * u[j];
        }
        k[i][i] = k[i][i] + miss[i];
    }
    (m, k)
}

impl<F: Scalar> ExplicitObjective<F> for Rmc {
    /// `(1/n) Σ [y β′ᵀm − ½ β′ᵀ K β′]`.
    fn q_value(beta_prime: &[F], beta: &[F], batch: &[RmcSample<F>], sigma: F) -> Result<F> {
        check_nonempty(batch)?;
        check_len("beta", beta, beta_prime.len())?;
        let d = beta.len();
        let mut total = F::zero();
        for s in batch {
            check_len("sample", &s.x_obs, d)?;
            let (m, k) = rmc_moments(beta, s, sigma);
            let mut quad = F::zero();
            for i in 0..d {
                quad = quad + beta_prime[i] * inner(&k[i], beta_prime);
            }
            total = total + s.y * inner(beta_prime, &m) - F::lit(0.5) * quad;
        }
        Ok(total / F::from_count(batch.len()))
    }

    fn reference_grad(beta: &[F], batch: &[RmcSample<F>], sigma: F) -> Result<Vec<F>> {
        check_nonempty(batch)?;
        let d = beta.len();
        let n = F::from_count(batch.len());
        let mut g = vec![F::zero(); d];
        for s in batch {
            let (m, k) = rmc_moments(beta, s, sigma);
            for i in 0..d {
                g[i] = g[i] + s.y * m[i] - inner(&k[i], beta);
            }
        }
        Ok(g.into_iter().map(|x| x / n).collect())
    }
}

/// `Q_n(β′; β)` for any model with an explicit objective.
pub fn q_value<F: Scalar, M: ExplicitObjective<F>>(
    _model: M,
    beta_prime: &ParamVector<F>,
    beta: &ParamVector<F>,
    batch: &[M::Sample],
    sigma: F,
) -> Result<F> {
    M::q_value(beta_prime.as_slice(), beta.as_slice(), batch, sigma)
}

/// Central difference of `β′ ↦ Q_n(β′; β)` at `β′ = β`.
pub fn finite_diff_grad<F: Scalar, M: ExplicitObjective<F>>(
    _model: M,
    beta: &ParamVector<F>,
    batch: &[M::Sample],
    sigma: F,
    h: F,
) -> Result<Vec<F>> {
    if h.is_nan() || h <= F::zero() {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let b = beta.as_slice();
    let mut probe = b.to_vec();
    let mut out = Vec::with_capacity(b.len());
    for j in 0..b.len() {
        probe[j] = b[j] + h;
        let up = M::q_value(&probe, b, batch, sigma)?;
        probe[j] = b[j] - h;
        let down = M::q_value(&probe, b, batch, sigma)?;
        probe[j] = b[j];
        out.push((up - down) / (F::lit(2.0) * h));
    }
    Ok(out)
}

/// Full-data, untruncated, noiseless gradient EM: `βᵗ⁺¹ = βᵗ + η ∇Q_n(βᵗ; βᵗ)`.
pub fn nonprivate_em<F: Scalar, M: LatentModel<F>>(
    _model: M,
    data: &[M::Sample],
    sigma: F,
    eta: F,
    iterations: usize,
    beta0: &ParamVector<F>,
    true_beta: Option<&ParamVector<F>>,
) -> Result<Trajectory<F>> {
    check_nonempty(data)?;
    if iterations == 0 {
        return Err(Error::invalid("iteration count must be positive"));
    }
    let mut betas = Vec::with_capacity(iterations + 1);
    betas.push(beta0.clone());
    for _ in 0..iterations {
        let beta = betas.last().expect("nonempty");
        let g = M::grad(beta, data, sigma)?;
        let next = beta.as_slice().iter().zip(&g).map(|(&b, &g)| b + eta * g).collect();
        betas.push(ParamVector::new(next)?);
    }
    Ok(Trajectory::new(betas, Vec::new(), true_beta))
}

/// Non-private sample-split gradient EM with exact hard thresholding, built
/// from [`ExplicitObjective::reference_grad`] and [`exact_top_k`]. With a silent
/// oracle and no truncation the high-dimensional private driver must agree
/// with it.
pub fn sparse_gradient_em<F: Scalar, M: ExplicitObjective<F>>(
    _model: M,
    data: &[M::Sample],
    sigma: F,
    eta: F,
    iterations: usize,
    s_hat: usize,
    beta0: &ParamVector<F>,
) -> Result<Trajectory<F>> {
    let batches = split_batches(data.len(), iterations)?;
    let mut betas = Vec::with_capacity(iterations + 1);
    betas.push(beta0.clone());
    for range in &batches {
        let beta = betas.last().expect("nonempty").as_slice();
        let g = M::reference_grad(beta, &data[range.clone()], sigma)?;
        let half: Vec<F> = beta.iter().zip(&g).map(|(&b, &g)| b + eta * g).collect();
        betas.push(ParamVector::new(exact_top_k(&half, s_hat)?.values)?);
    }
    Ok(Trajectory::new(betas, batches, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::NoiseOracle;
    use crate::models::{gmm, ModelKind, ModelSpec};

    #[test]
    fn top_k_examples() {
        let sel = exact_top_k(&[5.0, 1.0, 3.0, 2.0], 2).unwrap();
        assert_eq!(sel.support, vec![0, 2]);
        assert_eq!(sel.values, vec![5.0, 0.0, 3.0, 0.0]);
        assert_eq!(exact_top_k(&[1.0, 1.0, 1.0], 2).unwrap().support, vec![0, 1]);
        let v = [0.3, -2.0, 0.0];
        assert_eq!(exact_top_k(&v, 3).unwrap().values, v.to_vec());
        assert!(exact_top_k(&v, 4).is_err());
    }

    #[test]
    fn gmm_q_examples() {
        let zero = ParamVector::new(vec![0.0, 0.0]).unwrap();
        let y = vec![GmmSample::new(vec![1.0, 2.0]).unwrap()];
        assert!((q_value(Gmm, &zero, &zero, &y, 1.0f64).unwrap() + 2.5).abs() < 1e-15);

        let one = ParamVector::new(vec![1.0]).unwrap();
        let y = vec![GmmSample::new(vec![2.0]).unwrap()];
        let w = 1.0 / (1.0 + (-2.0f64).exp());
        let expected = -0.5 * (w * 1.0 + (1.0 - w) * 9.0);
        let q = q_value(Gmm, &one, &one, &y, 1.0).unwrap();
        assert!((q - expected).abs() < 1e-15);
        assert!((q + 0.97672).abs() < 2e-4);
    }

    #[test]
    fn rmc_q_collapses_to_least_squares() {
        let x = [0.5, -1.0, 2.0];
        let s = RmcSample::from_full(&x, vec![true; 3], 1.5).unwrap();
        let beta = [0.2, 0.1, -0.3];
        let bp = [1.0, -2.0, 0.5];
        let fit: f64 = x.iter().zip(&bp).map(|(a, b)| a * b).sum();
        let expected = 1.5 * fit - 0.5 * fit * fit;
        let q = Rmc::q_value(&bp, &beta, &[s], 1.0).unwrap();
        assert!((q - expected).abs() < 1e-14);
    }

    #[test]
    fn reference_matches_finite_difference() {
        let beta = ParamVector::new(vec![0.4, -0.2, 0.7]).unwrap();
        let data = vec![
            GmmSample::new(vec![1.0, 0.5, -0.3]).unwrap(),
            GmmSample::new(vec![-0.6, 1.2, 0.9]).unwrap(),
        ];
        let fd = finite_diff_grad(Gmm, &beta, &data, 0.8f64, 1e-5).unwrap();
        let r = Gmm::reference_grad(beta.as_slice(), &data, 0.8).unwrap();
        for (a, b) in fd.iter().zip(&r) {
            assert!((a - b).abs() < 1e-8f64);
        }
    }

    #[test]
    fn nonprivate_em_fixed_point_and_recovery() {
        let truth = ParamVector::<f64>::unit_sparse(10, 10).unwrap();
        let spec = ModelSpec::new(ModelKind::Gmm, 0.5, truth.clone(), 0.0).unwrap();
        let data = gmm::generate(&spec, 5000, &mut NoiseOracle::live(9)).unwrap();
        let flat = nonprivate_em(Gmm, &data, 0.5, 0.0, 4, &truth, Some(&truth)).unwrap();
        assert!(flat.betas.iter().all(|b| b == &truth));
        let run = nonprivate_em(Gmm, &data, 0.5, 1.0, 10, &truth, Some(&truth)).unwrap();
        assert!(run.final_error().unwrap() <= 3.0 * (10.0f64 / 5000.0).sqrt());
        assert!(run.batch_bounds.is_empty());
    }
}
