use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prior::PriorFactor;
use super::{
    compute_prior_stats, log_prior_with, responsibilities, MaskModel, MixtureHyperparams,
    MixtureParams, Posteriors, PriorStats, BETA_EPS, MIN_VARIANCE,
};
use crate::dataset::MtsDataset;
use crate::error::{Error, Result};

/// Starting point of a fit.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum InitSpec {
    /// Means copied from randomly chosen records, prior variances, uniform weights.
    #[default]
    RandomRecords,
    /// Start from the given parameters.
    Given(MixtureParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_iterations: usize,
    /// Relative change of the objective below which the fit stops.
    pub tolerance: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            max_iterations: 25,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: MixtureParams,
    pub posteriors: Posteriors,
    pub priors: PriorStats,
    /// Objective at the initialization and after every M-step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Random initialization: means from `G` distinct records (masked cells
/// filled with the prior mean), `sigma2 = s_v^2`, uniform weights and `beta`
/// near the Beta prior mean.
pub fn init_params<R: Rng + ?Sized>(
    dataset: &MtsDataset,
    n_components: usize,
    priors: &PriorStats,
    hp: &MixtureHyperparams,
    mask_model: MaskModel,
    rng: &mut R,
) -> Result<MixtureParams> {
    let n = dataset.n_records();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if n_components == 0 {
        return Err(Error::invalid("number of components must be at least 1"));
    }
    let picks: Vec<usize> = if n_components <= n {
        sample(rng, n, n_components).into_vec()
    } else {
        log::warn!(
            "{n_components} components requested for {n} records; seeds drawn with replacement"
        );
        (0..n_components).map(|_| rng.random_range(0..n)).collect()
    };
    let (n_vars, len) = (dataset.n_vars(), dataset.len());
    let mut mu = Vec::with_capacity(n_components * n_vars * len);
    let mut sigma2 = Vec::with_capacity(n_components * n_vars);
    let mut beta = Vec::with_capacity(n_components * n_vars * len);
    let prior_mean = hp.c0 / (hp.c0 + hp.d0);
    for &pick in &picks {
        let record = dataset.record(pick);
        for v in 0..n_vars {
            let m = priors.mean(v);
            mu.extend((0..len).map(|t| record.get(v, t).unwrap_or(m[t])));
            sigma2.push(priors.std(v).powi(2).max(MIN_VARIANCE));
            for _ in 0..len {
                beta.push(match mask_model {
                    MaskModel::Bernoulli => (prior_mean * (1.0 + rng.random_range(-0.05..0.05)))
                        .clamp(BETA_EPS, 1.0 - BETA_EPS),
                    MaskModel::Ignored => 0.5,
                });
            }
        }
    }
    let theta = vec![1.0 / n_components as f64; n_components];
    MixtureParams::new(n_components, n_vars, len, theta, mu, sigma2, beta)
}

/// M-step of MAP-EM: `mu` (with the previous variances), then `sigma2`, then
/// `beta`, then `theta`. Each block is the exact maximizer of the expected
/// complete-data log-posterior given the others.
pub fn m_step(
    dataset: &MtsDataset,
    posteriors: &Posteriors,
    previous: &MixtureParams,
    priors: &PriorStats,
    hp: &MixtureHyperparams,
    mask_model: MaskModel,
) -> Result<MixtureParams> {
    m_step_with(
        dataset,
        posteriors,
        previous,
        priors,
        &priors.factor()?,
        hp,
        mask_model,
    )
}

fn m_step_with(
    dataset: &MtsDataset,
    posteriors: &Posteriors,
    previous: &MixtureParams,
    priors: &PriorStats,
    factor: &PriorFactor,
    hp: &MixtureHyperparams,
    mask_model: MaskModel,
) -> Result<MixtureParams> {
    let n = dataset.n_records();
    let (n_vars, len) = (dataset.n_vars(), dataset.len());
    let g_count = previous.n_components();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if posteriors.n_records() != n || posteriors.n_components() != g_count {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{g_count} posteriors"),
            found: format!("{}x{}", posteriors.n_records(), posteriors.n_components()),
        });
    }
    if priors.n_vars() != n_vars
        || priors.len() != len
        || previous.n_vars() != n_vars
        || previous.len() != len
    {
        return Err(Error::ShapeMismatch {
            expected: format!("{n_vars}x{len}"),
            found: format!("{}x{}", priors.n_vars(), priors.len()),
        });
    }

    let mut theta = Vec::with_capacity(g_count);
    let mut mu = Vec::with_capacity(g_count * n_vars * len);
    let mut sigma2 = Vec::with_capacity(g_count * n_vars);
    let mut beta = Vec::with_capacity(g_count * n_vars * len);
    let mut weight = vec![0.0; len];
    let mut weighted_sum = vec![0.0; len];

    for g in 0..g_count {
        let n_g: f64 = posteriors.rows().map(|row| row[g]).sum();
        for v in 0..n_vars {
            weight.fill(0.0);
            weighted_sum.fill(0.0);
            for (record, row) in dataset.records().iter().zip(posteriors.rows()) {
                let pi = row[g];
                let (values, mask) = (record.row_values(v), record.row_mask(v));
                for t in 0..len {
                    if mask[t] {
                        weight[t] += pi;
                        weighted_sum[t] += pi * values[t];
                    }
                }
            }

            let s = priors.std(v);
            let m = priors.mean(v);
            let mu_gv = update_mean(
                &factor.kernel,
                s,
                m,
                &weight,
                &weighted_sum,
                previous.sigma2(g, v),
            )
            .ok_or(Error::Singular {
                component: g,
                variable: v,
            })?;

            let mut sq = 0.0;
            for (record, row) in dataset.records().iter().zip(posteriors.rows()) {
                let pi = row[g];
                let (values, mask) = (record.row_values(v), record.row_mask(v));
                for t in 0..len {
                    if mask[t] {
                        let d = values[t] - mu_gv[t];
                        sq += pi * d * d;
                    }
                }
            }
            let total_weight: f64 = weight.iter().sum();
            let denom = hp.n0 + total_weight;
            let var = if denom > 0.0 {
                (hp.n0 * s * s + sq) / denom
            } else {
                s * s
            };
            sigma2.push(var.max(MIN_VARIANCE));
            mu.extend(mu_gv);

            match mask_model {
                MaskModel::Bernoulli => beta.extend(
                    weight
                        .iter()
                        .map(|&obs| update_beta(obs + hp.c0 - 1.0, (n_g - obs) + hp.d0 - 1.0)),
                ),
                MaskModel::Ignored => beta.extend(std::iter::repeat_n(0.5, len)),
            }
        }
        theta.push(n_g / n as f64);
    }
    MixtureParams::new(g_count, n_vars, len, theta, mu, sigma2, beta)
}

/// Posterior mode of `mu` under the prior `N(m, s K)` given per-timestep
/// weights `lambda` and weighted sums `b`:
/// `mu = m + (S^-1 + Lambda / sigma2)^-1 (b - Lambda m) / sigma2`.
///
/// Solved through `sigma2 I + H S H` with `H = diag(sqrt(lambda))`, which
/// stays well conditioned when `S` itself is numerically singular.
fn update_mean(
    kernel: &DMatrix<f64>,
    s: f64,
    m: &[f64],
    lambda: &[f64],
    b: &[f64],
    sigma2: f64,
) -> Option<Vec<f64>> {
    let len = m.len();
    if lambda.iter().all(|&l| l == 0.0) {
        return Some(m.to_vec());
    }
    let cov = kernel * s;
    let h = DVector::from_iterator(len, lambda.iter().map(|l| l.sqrt()));
    let c = DVector::from_iterator(len, (0..len).map(|t| b[t] - lambda[t] * m[t]));
    let w = &cov * c;
    let mut inner = DMatrix::from_fn(len, len, |i, j| h[i] * cov[(i, j)] * h[j]);
    for t in 0..len {
        inner[(t, t)] += sigma2;
    }
    let chol = Cholesky::new(inner)?;
    let z = chol.solve(&w.component_mul(&h));
    let delta = (w - cov * z.component_mul(&h)) / sigma2;
    if delta.iter().any(|d| !d.is_finite()) {
        return None;
    }
    Some(m.iter().zip(delta.iter()).map(|(a, d)| a + d).collect())
}

/// Maximizer of `a ln(beta) + b ln(1 - beta)` over `[eps, 1 - eps]`.
///
/// For `a, b > 0` this is the clamped mode `a / (a + b)`. When a Beta
/// parameter below one makes a coefficient negative the function is convex
/// or monotone, so the boundaries are compared as well.
fn update_beta(a: f64, b: f64) -> f64 {
    let f = |x: f64| a * x.ln() + b * (-x).ln_1p();
    let mode = if a + b > 0.0 { a / (a + b) } else { 0.5 };
    let mut best = mode.clamp(BETA_EPS, 1.0 - BETA_EPS);
    let mut best_val = f(best);
    for x in [BETA_EPS, 1.0 - BETA_EPS] {
        let val = f(x);
        if val > best_val {
            best = x;
            best_val = val;
        }
    }
    best
}

/// MAP-EM fit of a `G`-component mixture; deterministic given `seed`.
pub fn fit_map_em(
    dataset: &MtsDataset,
    n_components: usize,
    hp: &MixtureHyperparams,
    init: &InitSpec,
    stop: StoppingRule,
    seed: u64,
    mask_model: MaskModel,
) -> Result<FitResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fit_map_em_with_rng(dataset, n_components, hp, init, stop, &mut rng, mask_model)
}

pub(crate) fn fit_map_em_with_rng<R: Rng + ?Sized>(
    dataset: &MtsDataset,
    n_components: usize,
    hp: &MixtureHyperparams,
    init: &InitSpec,
    stop: StoppingRule,
    rng: &mut R,
    mask_model: MaskModel,
) -> Result<FitResult> {
    hp.validate()?;
    if dataset.n_records() == 0 {
        return Err(Error::EmptyDataset);
    }
    let priors = compute_prior_stats(dataset, hp.a0, hp.b0)?;
    let factor = priors.factor()?;
    let mut params = match init {
        InitSpec::RandomRecords => {
            init_params(dataset, n_components, &priors, hp, mask_model, rng)?
        }
        InitSpec::Given(p) => {
            if p.n_components() != n_components {
                return Err(Error::invalid(
                    "initial parameters have a different number of components",
                ));
            }
            p.clone()
        }
    };

    let objective = |params: &MixtureParams| -> Result<(Posteriors, f64)> {
        let (post, loglik) = responsibilities(dataset, params, mask_model)?;
        Ok((
            post,
            loglik + log_prior_with(params, &priors, &factor, hp, mask_model),
        ))
    };

    let (mut posteriors, mut current) = objective(&params)?;
    let mut trace = vec![current];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < stop.max_iterations {
        params = m_step_with(
            dataset,
            &posteriors,
            &params,
            &priors,
            &factor,
            hp,
            mask_model,
        )?;
        iterations += 1;
        let (post, value) = objective(&params)?;
        posteriors = post;
        trace.push(value);
        let change = (value - current).abs() / current.abs().max(f64::MIN_POSITIVE);
        current = value;
        if change < stop.tolerance {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        params,
        posteriors,
        priors,
        objective_trace: trace,
        iterations,
        converged,
    })
}
