//! Noise mechanisms, the ℓ∞-ball projection and private sparse selection.
//!
//! Every random draw in the crate goes through a [`NoiseOracle`], which wraps a
//! seeded ChaCha stream. An oracle in [`NoiseMode::Silent`] returns exact zeros
//! for every continuous draw, which turns each private routine into its
//! non-private counterpart without a separate code path.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An (ε, δ) differential privacy budget.
///
/// `epsilon = +∞` is accepted and denotes the non-private limit, in which every
/// calibrated noise scale evaluates to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget<F> {
    epsilon: F,
    delta: F,
}

impl<F: Scalar> PrivacyBudget<F> {
    pub fn new(epsilon: F, delta: F) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= F::zero() {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > F::zero() && delta < F::one()) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> F {
        self.epsilon
    }

    pub fn delta(&self) -> F {
        self.delta
    }

    pub fn is_non_private(&self) -> bool {
        self.epsilon.is_infinite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Live,
    /// Every continuous draw is exactly zero. Only for oracle-equivalence checks.
    Silent,
}

/// Seeded source of randomness.
///
/// Identical seed, mode and call sequence give an identical stream. In silent
/// mode continuous draws return `0`, [`NoiseOracle::uniform_open`] returns `0.5`,
/// and coin flips return `true` (so a Rademacher sign is `+1`).
#[derive(Debug, Clone)]
pub struct NoiseOracle {
    seed: u64,
    mode: NoiseMode,
    rng: ChaCha8Rng,
}

impl NoiseOracle {
    pub fn new(seed: u64, mode: NoiseMode) -> Self {
        Self {
            seed,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn live(seed: u64) -> Self {
        Self::new(seed, NoiseMode::Live)
    }

    pub fn silent() -> Self {
        Self::new(0, NoiseMode::Silent)
    }

    /// Independent live oracle for stream `stream` of a master seed.
    pub fn derive(master_seed: u64, stream: u64) -> Self {
        Self::live(mix_seed(master_seed, stream))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn is_silent(&self) -> bool {
        self.mode == NoiseMode::Silent
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        if self.is_silent() {
            return 0.5;
        }
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * SCALE
    }

    pub fn standard_normal(&mut self) -> f64 {
        if self.is_silent() {
            return 0.0;
        }
        StandardNormal.sample(&mut self.rng)
    }

    /// Bernoulli draw that is `true` with probability `p_true`.
    pub fn coin(&mut self, p_true: f64) -> bool {
        if self.is_silent() {
            return true;
        }
        self.uniform_open() < p_true
    }

    /// Equiprobable ±1.
    pub fn rademacher(&mut self) -> f64 {
        if self.coin(0.5) {
            1.0
        } else {
            -1.0
        }
    }
}

/// SplitMix64 finalizer applied to a pair of words.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(a) ^ b.rotate_left(17) ^ 0xD6E8_FEB8_6659_FD93)
}

fn check_truncation<F: Scalar>(t: F) -> Result<()> {
    if t.is_nan() || t <= F::zero() {
        return Err(Error::invalid(format!("truncation level must be positive, got {t}")));
    }
    Ok(())
}

/// Clamp without validation; `t = +∞` is the identity.
#[inline]
pub(crate) fn clamp<F: Scalar>(x: F, t: F) -> F {
    x.max(-t).min(t)
}

/// Projection of `x` onto [-t, t].
pub fn clamp_scalar<F: Scalar>(x: F, t: F) -> Result<F> {
    check_truncation(t)?;
    if !x.is_finite() {
        return Err(Error::invalid(format!("cannot clamp non-finite value {x}")));
    }
    Ok(clamp(x, t))
}

/// Coordinatewise projection onto the ℓ∞ ball of radius `t`.
pub fn clamp_vector<F: Scalar>(v: &[F], t: F) -> Result<Vec<F>> {
    check_truncation(t)?;
    v.iter().map(|&x| clamp_scalar(x, t)).collect()
}

/// One zero-mean Laplace draw with scale `b`, by inverse CDF:
/// `u ~ U(-1/2, 1/2)`, `x = -b sign(u) ln(1 - 2|u|)`.
pub fn sample_laplace<F: Scalar>(scale: F, oracle: &mut NoiseOracle) -> Result<F> {
    if scale.is_nan() || scale <= F::zero() || scale.is_infinite() {
        return Err(Error::invalid(format!("laplace scale must be positive and finite, got {scale}")));
    }
    if oracle.is_silent() {
        return Ok(F::zero());
    }
    Ok(scale * F::lit(unit_laplace(oracle)))
}

fn unit_laplace(oracle: &mut NoiseOracle) -> f64 {
    let u = oracle.uniform_open() - 0.5;
    if u == 0.0 {
        return 0.0;
    }
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub fn sample_gaussian<F: Scalar>(std_dev: F, oracle: &mut NoiseOracle) -> Result<F> {
    if std_dev.is_nan() || std_dev <= F::zero() || std_dev.is_infinite() {
        return Err(Error::invalid(format!("gaussian std_dev must be positive and finite, got {std_dev}")));
    }
    if oracle.is_silent() {
        return Ok(F::zero());
    }
    Ok(std_dev * F::lit(oracle.standard_normal()))
}

/// `d` i.i.d. Laplace draws. A zero scale draws nothing and yields zeros.
fn laplace_vector<F: Scalar>(d: usize, scale: F, oracle: &mut NoiseOracle) -> Result<Vec<F>> {
    if scale == F::zero() || oracle.is_silent() {
        return Ok(vec![F::zero(); d]);
    }
    (0..d).map(|_| sample_laplace(scale, oracle)).collect()
}

/// Sparse vector with an explicit support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSelection<F> {
    /// Selected indices in ascending order.
    pub support: Vec<usize>,
    /// Dense values, zero off the support.
    pub values: Vec<F>,
}

impl<F: Scalar> SparseSelection<F> {
    pub(crate) fn from_support(v: &[F], mut support: Vec<usize>, noise: &[F]) -> Self {
        support.sort_unstable();
        let mut values = vec![F::zero(); v.len()];
        for &j in &support {
            values[j] = v[j] + noise[j];
        }
        Self { support, values }
    }
}

/// Per-round Laplace scale of the peeling selection: `λ·2·sqrt(3 s ln(1/δ)) / ε`.
pub fn peeling_noise_scale<F: Scalar>(lambda: F, s: usize, budget: &PrivacyBudget<F>) -> F {
    let log_inv_delta = (F::one() / budget.delta()).ln();
    lambda * F::lit(2.0) * (F::lit(3.0) * F::from_count(s) * log_inv_delta).sqrt() / budget.epsilon()
}

/// Private top-`s` selection by noisy peeling.
///
/// `lambda` must bound the ℓ∞ change of `v` under replacement of one record.
/// Round `i` draws a fresh Laplace vector over all `d` coordinates (index
/// order) and appends the unselected index maximizing `|v_j| + w_ij`, lowest
/// index first on ties. A final Laplace vector is added to the released values.
pub fn noisy_hard_threshold<F: Scalar>(
    v: &[F],
    s: usize,
    lambda: F,
    budget: &PrivacyBudget<F>,
    oracle: &mut NoiseOracle,
) -> Result<SparseSelection<F>> {
    let d = v.len();
    if s == 0 || s > d {
        return Err(Error::invalid(format!("sparsity must satisfy 1 <= s <= d = {d}, got {s}")));
    }
    if !lambda.is_finite() || lambda < F::zero() {
        return Err(Error::invalid(format!("sensitivity must be finite and nonnegative, got {lambda}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("noisy_hard_threshold input"));
    }
    let scale = peeling_noise_scale(lambda, s, budget);

    let mut selected = vec![false; d];
    let mut support = Vec::with_capacity(s);
    for _ in 0..s {
        let w = laplace_vector(d, scale, oracle)?;
        let mut best: Option<(usize, F)> = None;
        for j in (0..d).filter(|&j| !selected[j]) {
            let score = v[j].abs() + w[j];
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let (j, _) = best.expect("at least one unselected coordinate");
        selected[j] = true;
        support.push(j);
    }
    let released = laplace_vector(d, scale, oracle)?;
    Ok(SparseSelection::from_support(v, support, &released))
}
