use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::dataset::{observed_moments, MtsDataset};
use crate::error::{Error, Result};

/// Relative diagonal jitter added to the prior kernel before factorization.
pub const KERNEL_JITTER: f64 = 1e-8;

/// Empirical statistics defining the informative priors of one dataset view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorStats {
    n_vars: usize,
    len: usize,
    /// Row-major `V x T` empirical means `m_v(t)`.
    means: Vec<f64>,
    /// Empirical standard deviations `s_v`.
    stds: Vec<f64>,
    a0: f64,
    b0: f64,
}

impl PriorStats {
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Empirical mean curve of variable `v`.
    pub fn mean(&self, v: usize) -> &[f64] {
        &self.means[v * self.len..(v + 1) * self.len]
    }

    pub fn std(&self, v: usize) -> f64 {
        self.stds[v]
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// The squared-exponential matrix `K[t, t'] = b0 * exp(-a0 (t - t')^2)`, without jitter.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        rbf_matrix(self.len, self.a0, self.b0)
    }

    /// Jittered kernel matrix; the prior covariance of variable `v` is `s_v` times this.
    pub fn jittered_kernel(&self) -> DMatrix<f64> {
        let mut k = self.kernel_matrix();
        for t in 0..self.len {
            k[(t, t)] += KERNEL_JITTER * self.b0;
        }
        k
    }

    pub(crate) fn factor(&self) -> Result<PriorFactor> {
        let k = self.jittered_kernel();
        let chol = Cholesky::new(k.clone())
            .ok_or_else(|| Error::invalid("prior kernel matrix is not positive definite"))?;
        let log_det = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        Ok(PriorFactor {
            kernel: k,
            chol,
            log_det_kernel: log_det,
        })
    }
}

pub(crate) struct PriorFactor {
    pub kernel: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det_kernel: f64,
}

impl PriorFactor {
    /// `log N(mu | m, s * K)`.
    pub fn log_density(&self, mu: &[f64], m: &[f64], s: f64) -> f64 {
        let len = mu.len();
        let diff = DVector::from_iterator(len, mu.iter().zip(m).map(|(a, b)| a - b));
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("non-singular factor");
        let quad = z.norm_squared() / s;
        let log_det = len as f64 * s.ln() + self.log_det_kernel;
        -0.5 * (len as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
    }
}

pub(crate) fn rbf_matrix(len: usize, a0: f64, b0: f64) -> DMatrix<f64> {
    DMatrix::from_fn(len, len, |i, j| {
        let d = i as f64 - j as f64;
        b0 * (-a0 * d * d).exp()
    })
}

/// Empirical means per timestep (falling back to the pooled mean where no
/// record observes a cell), pooled standard deviations, and the kernel
/// hyperparameters of the mean prior.
pub fn compute_prior_stats(dataset: &MtsDataset, a0: f64, b0: f64) -> Result<PriorStats> {
    if !(a0 > 0.0) || !(b0 > 0.0) {
        return Err(Error::invalid(format!(
            "kernel hyperparameters must be positive (a0={a0}, b0={b0})"
        )));
    }
    let (n_vars, len) = (dataset.n_vars(), dataset.len());
    let mut means = Vec::with_capacity(n_vars * len);
    let mut stds = Vec::with_capacity(n_vars);
    for v in 0..n_vars {
        let (pooled_mean, pooled_std) = observed_moments(dataset.observed_values(v))
            .ok_or_else(|| Error::NoObservations(dataset.variable_names()[v].clone()))?;
        for t in 0..len {
            let (sum, count) = dataset
                .records()
                .iter()
                .filter_map(|r| r.get(v, t))
                .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
            means.push(if count > 0 {
                sum / count as f64
            } else {
                pooled_mean
            });
        }
        // a single observation or a constant variable has no spread
        stds.push(if pooled_std > 1e-12 { pooled_std } else { 1.0 });
    }
    Ok(PriorStats {
        n_vars,
        len,
        means,
        stds,
        a0,
        b0,
    })
}
