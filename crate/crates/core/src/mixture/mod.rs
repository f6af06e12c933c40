//! Mixed-mode Bayesian mixture model.
//!
//! Each component `g` carries a time-dependent mean `mu_gv(t)`, a per-variable
//! variance `sigma2_gv` that is constant over time, and per-cell observation
//! probabilities `beta_gvt`. Observed values contribute Gaussian factors and
//! every cell of the mask contributes a Bernoulli factor. With
//! [`MaskModel::Ignored`] the Bernoulli part is dropped, which gives the
//! classical missing-at-random cluster model.

pub(crate) mod em;
mod prior;

pub use em::{fit_map_em, init_params, m_step, FitResult, InitSpec, StoppingRule};
pub use prior::{compute_prior_stats, PriorStats, KERNEL_JITTER};

use prior::PriorFactor;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dataset::{MtsDataset, MtsRecord};
use crate::error::{Error, Result};

/// Observation probabilities are kept inside `[BETA_EPS, 1 - BETA_EPS]`.
pub const BETA_EPS: f64 = 1e-6;

/// Lower bound on component variances.
pub const MIN_VARIANCE: f64 = 1e-8;

/// How the observation mask enters the component density.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaskModel {
    /// Bernoulli factor per cell (informative missingness).
    Bernoulli,
    /// Mask only selects which Gaussian factors are present.
    Ignored,
}

/// Hyperparameters `(a0, b0, c0, d0, N0)` of the priors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureHyperparams {
    /// Decay of the squared-exponential mean-prior kernel.
    pub a0: f64,
    /// Scale of the mean-prior kernel.
    pub b0: f64,
    /// Beta prior on observation probabilities.
    pub c0: f64,
    pub d0: f64,
    /// Strength of the variance prior.
    pub n0: f64,
}

impl MixtureHyperparams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a0 > 0.0 && self.b0 > 0.0 && self.c0 > 0.0 && self.d0 > 0.0 && self.n0 >= 0.0;
        if ok
            && [self.a0, self.b0, self.c0, self.d0, self.n0]
                .iter()
                .all(|x| x.is_finite())
        {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid mixture hyperparameters {self:?}"
            )))
        }
    }
}

impl Default for MixtureHyperparams {
    fn default() -> Self {
        Self {
            a0: 0.1,
            b0: 0.1,
            c0: 1.0,
            d0: 1.0,
            n0: 0.01,
        }
    }
}

/// Fitted mixture parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    n_components: usize,
    n_vars: usize,
    len: usize,
    theta: Vec<f64>,
    /// `G x V x T`
    mu: Vec<f64>,
    /// `G x V`
    sigma2: Vec<f64>,
    /// `G x V x T`
    beta: Vec<f64>,
}

/// Borrowed parameters of one component.
#[derive(Clone, Copy, Debug)]
pub struct Component<'a> {
    pub mu: &'a [f64],
    pub sigma2: &'a [f64],
    pub beta: &'a [f64],
}

impl MixtureParams {
    pub fn new(
        n_components: usize,
        n_vars: usize,
        len: usize,
        theta: Vec<f64>,
        mu: Vec<f64>,
        sigma2: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self> {
        let cells = n_components * n_vars * len;
        if theta.len() != n_components
            || mu.len() != cells
            || beta.len() != cells
            || sigma2.len() != n_components * n_vars
        {
            return Err(Error::invalid(
                "mixture parameter arrays have inconsistent sizes",
            ));
        }
        let params = Self {
            n_components,
            n_vars,
            len,
            theta,
            mu,
            sigma2,
            beta,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        let sum: f64 = self.theta.iter().sum();
        if self.theta.iter().any(|&t| !(t >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mixing weights {:?} are not on the simplex",
                self.theta
            )));
        }
        if self.sigma2.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("variances must be positive and finite"));
        }
        if self.beta.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::invalid(
                "observation probabilities must lie in (0, 1)",
            ));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("component means must be finite"));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.n_components == 0
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn component(&self, g: usize) -> Component<'_> {
        let cells = self.n_vars * self.len;
        Component {
            mu: &self.mu[g * cells..(g + 1) * cells],
            sigma2: &self.sigma2[g * self.n_vars..(g + 1) * self.n_vars],
            beta: &self.beta[g * cells..(g + 1) * cells],
        }
    }

    /// Mean curve `mu_gv`.
    pub fn mu(&self, g: usize, v: usize) -> &[f64] {
        let start = (g * self.n_vars + v) * self.len;
        &self.mu[start..start + self.len]
    }

    pub fn sigma2(&self, g: usize, v: usize) -> f64 {
        self.sigma2[g * self.n_vars + v]
    }

    pub fn beta(&self, g: usize, v: usize) -> &[f64] {
        let start = (g * self.n_vars + v) * self.len;
        &self.beta[start..start + self.len]
    }

    /// Replaces the mixing weights; they are renormalized onto the simplex.
    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        let sum: f64 = theta.iter().sum();
        if theta.len() != self.n_components || !(sum > 0.0) {
            return Err(Error::invalid(
                "mixing weights must be non-negative with positive sum",
            ));
        }
        self.theta = theta.into_iter().map(|t| t / sum).collect();
        self.validate()?;
        Ok(self)
    }

    fn check_geometry(&self, dataset: &MtsDataset) -> Result<()> {
        if dataset.n_vars() != self.n_vars || dataset.len() != self.len {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.n_vars, self.len),
                found: format!("{}x{}", dataset.n_vars(), dataset.len()),
            });
        }
        Ok(())
    }
}

/// Responsibilities `pi[n][g]`, one row per record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posteriors {
    n_components: usize,
    pi: Vec<f64>,
}

impl Posteriors {
    /// Builds posteriors from rows; each row must be a probability vector.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_components = rows.first().map_or(0, Vec::len);
        for r in rows {
            let sum: f64 = r.iter().sum();
            if r.len() != n_components
                || r.iter().any(|&p| !(0.0..=1.0).contains(&p))
                || (sum - 1.0).abs() > 1e-9
            {
                return Err(Error::invalid(
                    "posterior rows must be probability vectors of equal length",
                ));
            }
        }
        Ok(Self {
            n_components,
            pi: rows.concat(),
        })
    }

    pub fn n_records(&self) -> usize {
        self.pi.len().checked_div(self.n_components).unwrap_or(0)
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.pi[n * self.n_components..(n + 1) * self.n_components]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.pi.chunks(self.n_components.max(1))
    }
}

/// Log-density of one record under one component.
///
/// Gaussian factors cover observed cells only; with [`MaskModel::Bernoulli`]
/// every cell also contributes `r log(beta) + (1 - r) log(1 - beta)`.
pub fn log_component_density(
    record: &MtsRecord,
    component: Component<'_>,
    mask_model: MaskModel,
) -> Result<f64> {
    let len = record.len();
    let mut total = 0.0;
    for v in 0..record.n_vars() {
        let sigma2 = component.sigma2[v];
        let log_norm = -0.5 * (2.0 * PI * sigma2).ln();
        let values = record.row_values(v);
        let mask = record.row_mask(v);
        let mu = &component.mu[v * len..(v + 1) * len];
        let beta = &component.beta[v * len..(v + 1) * len];
        for t in 0..len {
            if mask[t] {
                let x = values[t];
                if !x.is_finite() {
                    return Err(Error::invalid(format!(
                        "non-finite observed value in record `{}`",
                        record.id()
                    )));
                }
                let d = x - mu[t];
                total += log_norm - d * d / (2.0 * sigma2);
            }
            if mask_model == MaskModel::Bernoulli {
                total += if mask[t] {
                    beta[t].ln()
                } else {
                    (-beta[t]).ln_1p()
                };
            }
        }
    }
    Ok(total)
}

/// Posterior responsibilities together with the observed-data log-likelihood.
pub(crate) fn responsibilities(
    dataset: &MtsDataset,
    params: &MixtureParams,
    mask_model: MaskModel,
) -> Result<(Posteriors, f64)> {
    params.check_geometry(dataset)?;
    let g_count = params.n_components;
    let log_theta: Vec<f64> = params.theta.iter().map(|t| t.ln()).collect();
    let mut pi = Vec::with_capacity(dataset.n_records() * g_count);
    let mut loglik = 0.0;
    let mut terms = vec![0.0; g_count];
    for (n, record) in dataset.records().iter().enumerate() {
        for (g, term) in terms.iter_mut().enumerate() {
            *term = log_theta[g] + log_component_density(record, params.component(g), mask_model)?;
        }
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Underflow(n));
        }
        let sum: f64 = terms.iter().map(|l| (l - max).exp()).sum();
        loglik += max + sum.ln();
        pi.extend(terms.iter().map(|l| (l - max).exp() / sum));
    }
    Ok((
        Posteriors {
            n_components: g_count,
            pi,
        },
        loglik,
    ))
}

/// E-step: responsibilities `pi_g ∝ theta_g p_g(U)`, computed in log space.
pub fn e_step(
    dataset: &MtsDataset,
    params: &MixtureParams,
    mask_model: MaskModel,
) -> Result<Posteriors> {
    responsibilities(dataset, params, mask_model).map(|(p, _)| p)
}

/// Sum of the log-priors of all component parameters.
pub(crate) fn log_prior(
    params: &MixtureParams,
    priors: &PriorStats,
    hp: &MixtureHyperparams,
    mask_model: MaskModel,
) -> Result<f64> {
    Ok(log_prior_with(
        params,
        priors,
        &priors.factor()?,
        hp,
        mask_model,
    ))
}

pub(crate) fn log_prior_with(
    params: &MixtureParams,
    priors: &PriorStats,
    factor: &PriorFactor,
    hp: &MixtureHyperparams,
    mask_model: MaskModel,
) -> f64 {
    let mut total = 0.0;
    for g in 0..params.n_components {
        for v in 0..params.n_vars {
            let s = priors.std(v);
            total += factor.log_density(params.mu(g, v), priors.mean(v), s);
            let sigma2 = params.sigma2(g, v);
            // sigma^{-N0} exp(-N0 s^2 / (2 sigma^2))
            total += -0.5 * hp.n0 * sigma2.ln() - hp.n0 * s * s / (2.0 * sigma2);
            if mask_model == MaskModel::Bernoulli {
                total += params
                    .beta(g, v)
                    .iter()
                    .map(|&b| (hp.c0 - 1.0) * b.ln() + (hp.d0 - 1.0) * (-b).ln_1p())
                    .sum::<f64>();
            }
        }
    }
    total
}

/// Observed-data log-likelihood plus log-priors; MAP-EM never decreases it.
pub fn penalized_log_posterior(
    dataset: &MtsDataset,
    params: &MixtureParams,
    priors: &PriorStats,
    hp: &MixtureHyperparams,
    mask_model: MaskModel,
) -> Result<f64> {
    let (_, loglik) = responsibilities(dataset, params, mask_model)?;
    Ok(loglik + log_prior(params, priors, hp, mask_model)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_1x1x2(beta: f64) -> MixtureParams {
        MixtureParams::new(
            1,
            1,
            2,
            vec![1.0],
            vec![0.0, 0.0],
            vec![1.0],
            vec![beta, beta],
        )
        .unwrap()
    }

    #[test]
    fn all_missing_is_pure_bernoulli() {
        let r = MtsRecord::from_rows("a", &[vec![None, None]]).unwrap();
        let p = params_1x1x2(0.5);
        let ld = log_component_density(&r, p.component(0), MaskModel::Bernoulli).unwrap();
        assert!((ld - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        let ld = log_component_density(&r, p.component(0), MaskModel::Ignored).unwrap();
        assert_eq!(ld, 0.0);
    }

    #[test]
    fn gaussian_peak_normalization() {
        // x = mu and sigma2 = 1/(2 pi): the Gaussian log-density is exactly 0
        let r = MtsRecord::from_rows("a", &[vec![Some(0.7)]]).unwrap();
        let sigma2 = 1.0 / (2.0 * PI);
        let p = MixtureParams::new(
            1,
            1,
            1,
            vec![1.0],
            vec![0.7],
            vec![sigma2],
            vec![1.0 - BETA_EPS],
        )
        .unwrap();
        let ld = log_component_density(&r, p.component(0), MaskModel::Bernoulli).unwrap();
        assert!((ld - (1.0 - BETA_EPS).ln()).abs() < 1e-14);
        assert!(ld.abs() < 2e-6);
    }

    #[test]
    fn single_component_posteriors_are_one() {
        let records = vec![
            MtsRecord::from_rows("a", &[vec![Some(1.0), None]]).unwrap(),
            MtsRecord::from_rows("b", &[vec![None, Some(-3.0)]]).unwrap(),
        ];
        let d = MtsDataset::unnamed(records, None, 1, 2).unwrap();
        let post = e_step(&d, &params_1x1x2(0.4), MaskModel::Bernoulli).unwrap();
        assert!(post.rows().all(|r| r == [1.0]));
    }

    #[test]
    fn identical_components_split_evenly() {
        let records = vec![MtsRecord::from_rows("a", &[vec![Some(1.0), None]]).unwrap()];
        let d = MtsDataset::unnamed(records, None, 1, 2).unwrap();
        let p = MixtureParams::new(
            2,
            1,
            2,
            vec![0.5, 0.5],
            vec![0.0; 4],
            vec![1.0, 1.0],
            vec![0.3; 4],
        )
        .unwrap();
        let post = e_step(&d, &p, MaskModel::Bernoulli).unwrap();
        assert_eq!(post.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn fully_missing_record_follows_mixing_weights() {
        let records = vec![MtsRecord::from_rows("a", &[vec![None, None]]).unwrap()];
        let d = MtsDataset::unnamed(records, None, 1, 2).unwrap();
        let p = MixtureParams::new(
            2,
            1,
            2,
            vec![0.3, 0.7],
            vec![0.0, 1.0, 5.0, -2.0],
            vec![1.0, 3.0],
            vec![0.2; 4],
        )
        .unwrap();
        let post = e_step(&d, &p, MaskModel::Bernoulli).unwrap();
        assert!((post.row(0)[0] - 0.3).abs() < 1e-15);
        assert!((post.row(0)[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn underflow_is_reported() {
        let records = vec![
            MtsRecord::from_rows("a", &[vec![Some(0.0)]]).unwrap(),
            MtsRecord::from_rows("b", &[vec![Some(1e300)]]).unwrap(),
        ];
        let d = MtsDataset::unnamed(records, None, 1, 1).unwrap();
        let p = MixtureParams::new(1, 1, 1, vec![1.0], vec![0.0], vec![1e-300], vec![0.5]).unwrap();
        assert!(matches!(
            e_step(&d, &p, MaskModel::Ignored),
            Err(Error::Underflow(1))
        ));
    }

    #[test]
    fn objective_with_no_data_is_log_prior() {
        let d = MtsDataset::unnamed(vec![], None, 1, 2).unwrap();
        let template = MtsDataset::unnamed(
            vec![MtsRecord::from_rows("a", &[vec![Some(1.0), Some(2.0)]]).unwrap()],
            None,
            1,
            2,
        )
        .unwrap();
        let priors = compute_prior_stats(&template, 0.5, 0.1).unwrap();
        let hp = MixtureHyperparams::default();
        let p = params_1x1x2(0.4);
        let obj = penalized_log_posterior(&d, &p, &priors, &hp, MaskModel::Bernoulli).unwrap();
        let lp = log_prior(&p, &priors, &hp, MaskModel::Bernoulli).unwrap();
        assert_eq!(obj, lp);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(MixtureParams::new(1, 1, 1, vec![0.9], vec![0.0], vec![1.0], vec![0.5]).is_err());
        assert!(MixtureParams::new(1, 1, 1, vec![1.0], vec![0.0], vec![0.0], vec![0.5]).is_err());
        assert!(MixtureParams::new(1, 1, 1, vec![1.0], vec![0.0], vec![1.0], vec![1.0]).is_err());
    }
}
