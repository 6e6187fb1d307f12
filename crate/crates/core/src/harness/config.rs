//! Experiment configuration files.
//!
//! A config is a JSON document with the keys `model`, `regime`, `sweep`,
//! `fixed` and `master_seed`. `sweep` names exactly one of `n`, `s_star`,
//! `epsilon`, `d` and lists its values; `fixed` holds everything else. Unknown
//! keys anywhere are rejected. `epsilon` and `truncation` accept the string
//! `"inf"`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::em_engine::{samples_used, Regime};
use crate::error::{Error, Result};
use crate::mechanisms::mix_seed;
use crate::models::ModelKind;

/// A real number that may also be written as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(x) => Ok(Real(x)),
            Repr::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(Real(f64::INFINITY)),
                other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{other}\""))),
            },
        }
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    N,
    SStar,
    Epsilon,
    D,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::SStar => "s_star",
            SweepParam::Epsilon => "epsilon",
            SweepParam::D => "d",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "n" => Some(SweepParam::N),
            "s_star" => Some(SweepParam::SStar),
            "epsilon" => Some(SweepParam::Epsilon),
            "d" => Some(SweepParam::D),
            _ => None,
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaRule {
    /// `δ = 1/(2n)`.
    #[default]
    HalfN,
    /// `δ` taken from `fixed.delta`.
    Explicit,
}

/// `T = c_t · σ̂ · sqrt(ln n_used)`; `σ̂` defaults to `fixed.sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TRule {
    pub c_t: f64,
    pub sigma_hat: Option<f64>,
}

impl Default for TRule {
    fn default() -> Self {
        Self {
            c_t: 2.0,
            sigma_hat: None,
        }
    }
}

/// `N₀ = max(min, ⌈c_n · ln n⌉)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct N0Rule {
    pub c_n: f64,
    pub min: usize,
}

impl Default for N0Rule {
    fn default() -> Self {
        Self { c_n: 1.0, min: 5 }
    }
}

/// `ŝ = ⌈factor · s*⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SHatRule {
    pub factor: f64,
}

impl Default for SHatRule {
    fn default() -> Self {
        Self { factor: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedParams {
    pub n: usize,
    pub d: usize,
    pub s_star: usize,
    pub epsilon: Real,
    #[serde(default)]
    pub delta_rule: DeltaRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub sigma: f64,
    pub eta: f64,
    pub reps: usize,
    #[serde(default)]
    pub t_rule: TRule,
    /// Overrides `t_rule` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<Real>,
    #[serde(default)]
    pub n0_rule: N0Rule,
    /// Overrides `n0_rule` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    #[serde(default)]
    pub s_hat_rule: SHatRule,
    /// Overrides `s_hat_rule` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_hat: Option<usize>,
    #[serde(default)]
    pub missing_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum SweepName {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    name: SweepName,
    values: Vec<Real>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelKind,
    regime: Regime,
    sweep: RawSweep,
    fixed: FixedParams,
    master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// A validated experiment definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub regime: Regime,
    pub sweep: Sweep,
    pub fixed: FixedParams,
    pub master_seed: u64,
}

/// Fully resolved parameters of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub n: usize,
    pub d: usize,
    pub s_star: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub eta: f64,
    pub truncation: f64,
    pub n0: usize,
    pub s_hat: usize,
    pub missing_prob: f64,
}

fn as_count(param: SweepParam, x: f64) -> Result<usize> {
    if !(x.is_finite() && x >= 1.0 && x.fract() == 0.0 && x <= u32::MAX as f64) {
        return Err(Error::config(
            "sweep.values",
            format!("{param} values must be positive integers, got {x}"),
        ));
    }
    Ok(x as usize)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("field"))
                .unwrap_or("document")
                .to_string();
            Error::config(key, msg)
        })?;
        let names = match raw.sweep.name {
            SweepName::One(n) => vec![n],
            SweepName::Many(v) => v,
        };
        if names.len() != 1 {
            return Err(Error::config(
                "sweep",
                format!("exactly one parameter may be swept, got {}: {names:?}", names.len()),
            ));
        }
        let param = SweepParam::parse(&names[0]).ok_or_else(|| {
            Error::config("sweep.name", format!("unknown sweep parameter `{}`; expected n, s_star, epsilon or d", names[0]))
        })?;
        let config = Self {
            model: raw.model,
            regime: raw.regime,
            sweep: Sweep {
                param,
                values: raw.sweep.values.into_iter().map(|r| r.0).collect(),
            },
            fixed: raw.fixed,
            master_seed: raw.master_seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let raw = RawConfig {
            model: self.model,
            regime: self.regime,
            sweep: RawSweep {
                name: SweepName::One(self.sweep.param.as_str().to_string()),
                values: self.sweep.values.iter().map(|&x| Real(x)).collect(),
            },
            fixed: self.fixed.clone(),
            master_seed: self.master_seed,
        };
        serde_json::to_string_pretty(&raw).expect("config serializes")
    }

    pub fn reps(&self) -> usize {
        self.fixed.reps
    }

    /// Checks every cell of the sweep and the distinctness of all derived seeds.
    pub fn validate(&self) -> Result<()> {
        if self.fixed.reps == 0 {
            return Err(Error::config("fixed.reps", "must be at least 1"));
        }
        let mut seen = HashSet::new();
        for &v in &self.sweep.values {
            if seen.contains(&v.to_bits()) {
                return Err(Error::config("sweep.values", format!("duplicate value {v}")));
            }
            seen.insert(v.to_bits());
            self.cell(v)?;
        }
        let mut seeds = HashSet::with_capacity(self.sweep.values.len() * self.fixed.reps);
        for &v in &self.sweep.values {
            for rep in 0..self.fixed.reps {
                if !seeds.insert(self.rep_seed(v, rep)) {
                    return Err(Error::config("master_seed", "derived repetition seeds collide"));
                }
            }
        }
        Ok(())
    }

    /// Seed of one repetition: a hash of the master seed, the sweep value and
    /// the repetition index.
    pub fn rep_seed(&self, value: f64, rep: usize) -> u64 {
        mix_seed(mix_seed(self.master_seed, value.to_bits()), rep as u64)
    }

    /// Resolves the parameters of the cell where the swept parameter equals `value`.
    pub fn cell(&self, value: f64) -> Result<CellParams> {
        let f = &self.fixed;
        let (mut n, mut d, mut s_star, mut epsilon) = (f.n, f.d, f.s_star, f.epsilon.0);
        match self.sweep.param {
            SweepParam::N => n = as_count(SweepParam::N, value)?,
            SweepParam::D => d = as_count(SweepParam::D, value)?,
            SweepParam::SStar => s_star = as_count(SweepParam::SStar, value)?,
            SweepParam::Epsilon => epsilon = value,
        }
        if n == 0 {
            return Err(Error::config("fixed.n", "must be positive"));
        }
        if d == 0 {
            return Err(Error::config("fixed.d", "must be positive"));
        }
        if s_star == 0 || s_star > d {
            return Err(Error::config("fixed.s_star", format!("need 1 <= s_star <= d = {d}, got {s_star}")));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::config("fixed.epsilon", format!("must be positive, got {epsilon}")));
        }
        let delta = match f.delta_rule {
            DeltaRule::HalfN => 1.0 / (2.0 * n as f64),
            DeltaRule::Explicit => f
                .delta
                .ok_or_else(|| Error::config("fixed.delta", "required when delta_rule is explicit"))?,
        };
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("fixed.delta", format!("must lie in (0, 1), got {delta}")));
        }
        if !(f.sigma > 0.0 && f.sigma.is_finite()) {
            return Err(Error::config("fixed.sigma", format!("must be positive, got {}", f.sigma)));
        }
        if !(f.eta >= 0.0 && f.eta.is_finite()) {
            return Err(Error::config("fixed.eta", format!("must be finite and nonnegative, got {}", f.eta)));
        }
        if !(f.missing_prob >= 0.0 && f.missing_prob < 1.0) {
            return Err(Error::config("fixed.missing_prob", format!("must lie in [0, 1), got {}", f.missing_prob)));
        }
        let n0 = match f.n0 {
            Some(n0) => n0,
            None => {
                if !(f.n0_rule.c_n > 0.0 && f.n0_rule.c_n.is_finite()) {
                    return Err(Error::config("fixed.n0_rule.c_n", "must be positive"));
                }
                f.n0_rule.min.max((f.n0_rule.c_n * (n as f64).ln()).ceil() as usize)
            }
        };
        if n0 == 0 || n0 > n {
            return Err(Error::config("fixed.n0", format!("need 1 <= N0 <= n = {n}, got {n0}")));
        }
        let truncation = match f.truncation {
            Some(t) => t.0,
            None => {
                let sigma_hat = f.t_rule.sigma_hat.unwrap_or(f.sigma);
                if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
                    return Err(Error::config("fixed.t_rule.sigma_hat", "must be positive"));
                }
                if !(f.t_rule.c_t > 0.0 && f.t_rule.c_t.is_finite()) {
                    return Err(Error::config("fixed.t_rule.c_t", "must be positive"));
                }
                let n_used = samples_used(n, n0) as f64;
                f.t_rule.c_t * sigma_hat * n_used.ln().max(0.0).sqrt()
            }
        };
        if truncation.is_nan() || truncation <= 0.0 {
            return Err(Error::config("fixed.truncation", format!("must be positive, got {truncation}")));
        }
        let s_hat = match f.s_hat {
            Some(s) => s,
            None => {
                if !(f.s_hat_rule.factor > 0.0 && f.s_hat_rule.factor.is_finite()) {
                    return Err(Error::config("fixed.s_hat_rule.factor", "must be positive"));
                }
                (f.s_hat_rule.factor * s_star as f64).ceil() as usize
            }
        };
        if self.regime == Regime::HighDim && (s_hat == 0 || s_hat > d) {
            return Err(Error::config("fixed.s_hat", format!("need 1 <= s_hat <= d = {d}, got {s_hat}")));
        }
        Ok(CellParams {
            n,
            d,
            s_star,
            epsilon,
            delta,
            sigma: f.sigma,
            eta: f.eta,
            truncation,
            n0,
            s_hat,
            missing_prob: f.missing_prob,
        })
    }
}
