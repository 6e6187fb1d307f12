//! Simulation sweeps: data generation, repeated engine runs and aggregation.

use rayon::prelude::*;

use crate::em_engine::{run_dataset, EmConfig, Regime};
use crate::error::{Error, Result};
use crate::harness::config::{CellParams, ExperimentConfig, SweepParam};
use crate::mechanisms::{NoiseOracle, PrivacyBudget};
use crate::models::{Dataset, Gmm, ModelSpec, Mor, ParamVector, Rmc};
use crate::oracle::{exact_top_k, nonprivate_em};

/// Which estimator a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// The configured private driver.
    #[default]
    Private,
    /// Full-data, untruncated, noiseless gradient EM.
    NonPrivate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub method: Method,
    /// Replace the privacy noise stream by a silent oracle.
    pub silent_noise: bool,
    /// Worker threads; `None` uses the rayon default.
    pub jobs: Option<usize>,
}

/// Error trajectory of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub sweep_value: f64,
    pub rep: usize,
    /// `‖βᵗ − β*‖₂` for `t = 0 … N₀`.
    pub errors: Vec<f64>,
    /// `min(‖βᵗ − β*‖₂, ‖βᵗ + β*‖₂)`.
    pub errors_signfree: Vec<f64>,
}

/// Across-repetition summary of one (sweep value, iteration) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStat {
    pub sweep_value: f64,
    pub iteration: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single repetition.
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub sweep_param: SweepParam,
    /// Ordered by (sweep value as configured, rep).
    pub records: Vec<RepRecord>,
    pub stats: Vec<IterationStat>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

impl AggregateResult {
    /// Aggregates records; sweep values keep their order of first appearance.
    pub fn from_records(sweep_param: SweepParam, records: Vec<RepRecord>) -> Self {
        let mut values: Vec<f64> = Vec::new();
        for r in &records {
            if !values.iter().any(|v| v.to_bits() == r.sweep_value.to_bits()) {
                values.push(r.sweep_value);
            }
        }
        let mut stats = Vec::new();
        for &v in &values {
            let cell: Vec<&RepRecord> = records.iter().filter(|r| r.sweep_value.to_bits() == v.to_bits()).collect();
            let iters = cell.iter().map(|r| r.errors.len()).max().unwrap_or(0);
            for t in 0..iters {
                let xs: Vec<f64> = cell.iter().filter_map(|r| r.errors.get(t).copied()).collect();
                let (mean, std) = mean_std(&xs);
                stats.push(IterationStat {
                    sweep_value: v,
                    iteration: t,
                    mean,
                    std,
                    count: xs.len(),
                });
            }
        }
        Self {
            sweep_param,
            records,
            stats,
        }
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        let mut values: Vec<f64> = Vec::new();
        for s in &self.stats {
            if !values.iter().any(|v| v.to_bits() == s.sweep_value.to_bits()) {
                values.push(s.sweep_value);
            }
        }
        values
    }

    /// Mean error at the last iteration, per sweep value.
    pub fn final_means(&self) -> Vec<(f64, f64)> {
        self.sweep_values()
            .into_iter()
            .filter_map(|v| {
                self.stats
                    .iter()
                    .filter(|s| s.sweep_value.to_bits() == v.to_bits())
                    .max_by_key(|s| s.iteration)
                    .map(|s| (v, s.mean))
            })
            .collect()
    }

    /// Mean sign-free error at the last iteration, per sweep value.
    pub fn final_signfree_means(&self) -> Vec<(f64, f64)> {
        self.sweep_values()
            .into_iter()
            .map(|v| {
                let finals: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.sweep_value.to_bits() == v.to_bits())
                    .filter_map(|r| r.errors_signfree.last().copied())
                    .collect();
                (v, mean_std(&finals).0)
            })
            .collect()
    }
}

/// `β* + r·u` with `u` uniform on the unit sphere and `r = ‖β*‖/8`,
/// hard-thresholded to `s_hat` coordinates when `s_hat` is given.
pub fn perturbed_start(
    truth: &ParamVector<f64>,
    s_hat: Option<usize>,
    oracle: &mut NoiseOracle,
) -> Result<ParamVector<f64>> {
    let d = truth.dim();
    let mut u: Vec<f64> = (0..d).map(|_| oracle.standard_normal()).collect();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let radius = truth.l2_norm() / 8.0;
    if norm > 0.0 {
        u.iter_mut().for_each(|x| *x *= radius / norm);
    }
    let start: Vec<f64> = truth.as_slice().iter().zip(&u).map(|(b, p)| b + p).collect();
    match s_hat {
        Some(s) => ParamVector::new(exact_top_k(&start, s)?.values),
        None => ParamVector::new(start),
    }
}

fn run_rep(config: &ExperimentConfig, cell: &CellParams, value: f64, rep: usize, options: &RunOptions) -> Result<RepRecord> {
    let seed = config.rep_seed(value, rep);
    let truth = ParamVector::unit_sparse(cell.d, cell.s_star)?;
    let spec = ModelSpec::new(config.model, cell.sigma, truth.clone(), cell.missing_prob)?;
    let data = Dataset::generate(&spec, cell.n, &mut NoiseOracle::derive(seed, 0))?;
    let high_dim = config.regime == Regime::HighDim;
    let beta0 = perturbed_start(&truth, high_dim.then_some(cell.s_hat), &mut NoiseOracle::derive(seed, 2))?;

    let trajectory = match options.method {
        Method::Private => {
            let em = EmConfig {
                eta: cell.eta,
                truncation: cell.truncation,
                iterations: cell.n0,
                s_hat: cell.s_hat,
                budget: PrivacyBudget::new(cell.epsilon, cell.delta)?,
                regime: config.regime,
            };
            let mut noise = if options.silent_noise {
                NoiseOracle::silent()
            } else {
                NoiseOracle::derive(seed, 1)
            };
            run_dataset(&data, cell.sigma, &em, &beta0, &mut noise, Some(&truth))?
        }
        Method::NonPrivate => match &data {
            Dataset::Gmm(d) => nonprivate_em(Gmm, d, cell.sigma, cell.eta, cell.n0, &beta0, Some(&truth))?,
            Dataset::Mor(d) => nonprivate_em(Mor, d, cell.sigma, cell.eta, cell.n0, &beta0, Some(&truth))?,
            Dataset::Rmc(d) => nonprivate_em(Rmc, d, cell.sigma, cell.eta, cell.n0, &beta0, Some(&truth))?,
        },
    };
    Ok(RepRecord {
        sweep_value: value,
        rep,
        errors: trajectory.errors.unwrap_or_default(),
        errors_signfree: trajectory.errors_signfree.unwrap_or_default(),
    })
}

pub(crate) fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::config("jobs", "must be at least 1")),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every (sweep value, repetition) cell. Cells run concurrently; the
/// result is ordered by (sweep value, rep) regardless of the schedule.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<AggregateResult> {
    config.validate()?;
    let mut tasks = Vec::new();
    for &value in &config.sweep.values {
        let cell = config.cell(value)?;
        for rep in 0..config.reps() {
            tasks.push((value, cell, rep));
        }
    }
    let param = config.sweep.param;
    let records = with_pool(options.jobs, || {
        tasks
            .par_iter()
            .map(|&(value, cell, rep)| {
                run_rep(config, &cell, value, rep, options).map_err(|e| Error::Run {
                    param: param.as_str().to_string(),
                    value,
                    rep,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(AggregateResult::from_records(param, records))
}
