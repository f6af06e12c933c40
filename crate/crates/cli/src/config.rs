//! Run settings shared by `train`, `evaluate` and `benchmark`.
//!
//! The same struct is parsed from command-line flags and from a flat TOML
//! file, so every file key has a flag of the same name (`q_inits` is
//! `--q-inits`). Flags win over the file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Deserializer};
use tckim_core::eval::{EvalOptions, Protocol, DEFAULT_K_GRID};
use tckim_core::kernel::{ComponentRange, EnsembleConfig, HyperparamRanges, Mode};
use tckim_core::mixture::StoppingRule;

use crate::error::CliError;

/// Closed interval written `lo,hi` on the command line and `[lo, hi]` in the file.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
pub struct Interval<T>(pub T, pub T);

impl<T: FromStr + PartialOrd + fmt::Display> FromStr for Interval<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (lo, hi) = s
            .split_once(',')
            .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<T>()
                .map_err(|_| format!("invalid bound `{}`", x.trim()))
        };
        Ok(Interval(parse(lo)?, parse(hi)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// Stratified k-fold cross-validation.
    Kfold,
    /// Undersample negatives, then repeated stratified holdout.
    Undersample,
}

fn mode_from_str<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mode>, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map(Some).map_err(serde::de::Error::custom)
}

#[derive(Clone, Debug, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Kernel variant: im, tck, b or zero [default: im]
    #[arg(long)]
    #[serde(default, deserialize_with = "mode_from_str")]
    pub mode: Option<Mode>,
    /// Seed of every random draw [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for all cores; results do not depend on it [default: 0]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Random initializations per component count [default: 15]
    #[arg(long)]
    pub q_inits: Option<usize>,
    /// Component counts `min,max` [default: max(2, ceil(N/200)) .. +20]
    #[arg(long)]
    pub components: Option<Interval<usize>>,
    /// Fraction of records each base model is fitted on [default: 0.8]
    #[arg(long)]
    pub subsample_fraction: Option<f64>,
    /// Shortest sampled time segment [default: 6]
    #[arg(long)]
    pub min_segment_length: Option<usize>,
    /// Fewest sampled variables [default: 1]
    #[arg(long)]
    pub min_attributes: Option<usize>,
    /// Range of the prior kernel bandwidth a0 [default: 0.001,1]
    #[arg(long)]
    pub a0: Option<Interval<f64>>,
    /// Range of the prior kernel scale b0 [default: 0.005,0.2]
    #[arg(long)]
    pub b0: Option<Interval<f64>>,
    /// Range of the variance prior strength N0 [default: 0.001,0.2]
    #[arg(long)]
    pub n0: Option<Interval<f64>>,
    /// Range of c0 times N [default: 0.1,2]
    #[arg(long)]
    pub c0_times_n: Option<Interval<f64>>,
    /// Range of d0 times N [default: 0.1,2]
    #[arg(long)]
    pub d0_times_n: Option<Interval<f64>>,
    /// EM iteration cap [default: 25]
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Relative objective change that stops EM [default: 1e-6]
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Standardize variables before training [default: true]
    #[arg(long)]
    pub standardize: Option<bool>,
    /// KPCA embedding dimension [default: 3]
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// Candidate neighbor counts [default: 1,3,5,7,9,11,15,21]
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Option<Vec<usize>>,
    /// Folds of the inner cross-validation choosing k [default: 5]
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Label counted as positive [default: largest label]
    #[arg(long)]
    pub positive_label: Option<u32>,
    /// Evaluation protocol [default: kfold]
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolKind>,
    /// Outer folds for kfold [default: 5]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Negatives kept per positive for undersample [default: 2]
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Held-out fraction for undersample [default: 0.2]
    #[arg(long)]
    pub test_frac: Option<f64>,
    /// Holdout repetitions for undersample [default: 10]
    #[arg(long)]
    pub repeats: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Field-wise `self` where set, otherwise `base`.
    pub fn or(self, base: RunConfig) -> RunConfig {
        RunConfig {
            mode: self.mode.or(base.mode),
            seed: self.seed.or(base.seed),
            workers: self.workers.or(base.workers),
            q_inits: self.q_inits.or(base.q_inits),
            components: self.components.or(base.components),
            subsample_fraction: self.subsample_fraction.or(base.subsample_fraction),
            min_segment_length: self.min_segment_length.or(base.min_segment_length),
            min_attributes: self.min_attributes.or(base.min_attributes),
            a0: self.a0.or(base.a0),
            b0: self.b0.or(base.b0),
            n0: self.n0.or(base.n0),
            c0_times_n: self.c0_times_n.or(base.c0_times_n),
            d0_times_n: self.d0_times_n.or(base.d0_times_n),
            max_iterations: self.max_iterations.or(base.max_iterations),
            tolerance: self.tolerance.or(base.tolerance),
            standardize: self.standardize.or(base.standardize),
            embedding_dim: self.embedding_dim.or(base.embedding_dim),
            k_grid: self.k_grid.or(base.k_grid),
            cv_folds: self.cv_folds.or(base.cv_folds),
            positive_label: self.positive_label.or(base.positive_label),
            protocol: self.protocol.or(base.protocol),
            folds: self.folds.or(base.folds),
            ratio: self.ratio.or(base.ratio),
            test_frac: self.test_frac.or(base.test_frac),
            repeats: self.repeats.or(base.repeats),
        }
    }

    /// Flags layered over the optional config file.
    pub fn resolve(flags: RunConfig, file: Option<&Path>) -> Result<RunConfig, CliError> {
        Ok(match file {
            Some(path) => flags.or(Self::load(path)?),
            None => flags,
        })
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig, CliError> {
        let d = EnsembleConfig::default();
        let h = HyperparamRanges::default();
        let pair = |x: Option<Interval<f64>>, default: (f64, f64)| {
            x.map_or(default, |Interval(lo, hi)| (lo, hi))
        };
        let config = EnsembleConfig {
            q_inits: self.q_inits.unwrap_or(d.q_inits),
            components: self
                .components
                .map(|Interval(min, max)| ComponentRange { min, max }),
            subsample_fraction: self.subsample_fraction.unwrap_or(d.subsample_fraction),
            min_segment_length: self.min_segment_length.unwrap_or(d.min_segment_length),
            min_attributes: self.min_attributes.unwrap_or(d.min_attributes),
            hyperparams: HyperparamRanges {
                a0: pair(self.a0, h.a0),
                b0: pair(self.b0, h.b0),
                n0: pair(self.n0, h.n0),
                c0_times_n: pair(self.c0_times_n, h.c0_times_n),
                d0_times_n: pair(self.d0_times_n, h.d0_times_n),
            },
            stopping: StoppingRule {
                max_iterations: self.max_iterations.unwrap_or(d.stopping.max_iterations),
                tolerance: self.tolerance.unwrap_or(d.stopping.tolerance),
            },
            mode: self.mode.unwrap_or(d.mode),
            standardize: self.standardize.unwrap_or(d.standardize),
            seed: self.seed.unwrap_or(d.seed),
            workers: self.workers.unwrap_or(d.workers),
        };
        if config.stopping.max_iterations == 0 || !(config.stopping.tolerance >= 0.0) {
            return Err(CliError::Input(
                "max_iterations must be positive and tolerance non-negative".into(),
            ));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn eval_options(&self) -> Result<EvalOptions, CliError> {
        let options = EvalOptions {
            embedding_dim: self.embedding_dim.unwrap_or(3),
            k_grid: self
                .k_grid
                .clone()
                .unwrap_or_else(|| DEFAULT_K_GRID.to_vec()),
            cv_folds: self.cv_folds.unwrap_or(5),
            positive_label: self.positive_label,
        };
        if options.embedding_dim == 0 {
            return Err(CliError::Input("embedding_dim must be at least 1".into()));
        }
        if options.k_grid.is_empty() || options.k_grid.contains(&0) {
            return Err(CliError::Input(
                "k_grid must be a non-empty list of positive counts".into(),
            ));
        }
        if options.cv_folds < 2 {
            return Err(CliError::Input("cv_folds must be at least 2".into()));
        }
        Ok(options)
    }

    pub fn protocol(&self) -> Result<Protocol, CliError> {
        match self.protocol.unwrap_or(ProtocolKind::Kfold) {
            ProtocolKind::Kfold => {
                let folds = self.folds.unwrap_or(5);
                if folds < 2 {
                    return Err(CliError::Input("folds must be at least 2".into()));
                }
                Ok(Protocol::KFold { folds })
            }
            ProtocolKind::Undersample => {
                let (ratio, test_fraction, repeats) = (
                    self.ratio.unwrap_or(2.0),
                    self.test_frac.unwrap_or(0.2),
                    self.repeats.unwrap_or(10),
                );
                if !(ratio > 0.0) || !(test_fraction > 0.0 && test_fraction < 1.0) || repeats == 0 {
                    return Err(CliError::Input(
                        "undersample needs ratio > 0, test_frac in (0, 1) and repeats >= 1".into(),
                    ));
                }
                Ok(Protocol::UndersampleHoldout {
                    ratio,
                    test_fraction,
                    repeats,
                })
            }
        }
    }
}
