use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    complement, kernel_rank, knn_classify, kpca_fit, kpca_project, metrics, select_k_cv,
    stratified_folds,
};
use super::{Metrics, DEFAULT_K_GRID};
use crate::dataset::{Label, MtsDataset};
use crate::error::{Error, Result};
use crate::kernel::{kernel_test_with_workers, train_tck_im, EnsembleConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Protocol {
    /// Stratified k-fold cross-validation.
    KFold { folds: usize },
    /// Keep every positive, `ratio` negatives per positive, then hold out a
    /// stratified `test_fraction`; repeated `repeats` times.
    UndersampleHoldout {
        ratio: f64,
        test_fraction: f64,
        repeats: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub embedding_dim: usize,
    pub k_grid: Vec<usize>,
    /// Folds of the inner cross-validation choosing `k`.
    pub cv_folds: usize,
    /// Defaults to the largest label.
    pub positive_label: Option<Label>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            embedding_dim: 3,
            k_grid: DEFAULT_K_GRID.to_vec(),
            cv_folds: 5,
            positive_label: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation over folds divided by `sqrt(folds)`.
    pub se: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, se: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, se }
    }
}

/// Record ids on each side of one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub positive_label: Label,
    pub folds: Vec<Metrics>,
    pub chosen_k: Vec<usize>,
    pub embedding_dims: Vec<usize>,
    pub sensitivity: MetricSummary,
    pub specificity: MetricSummary,
    pub precision: MetricSummary,
    pub f1: MetricSummary,
    pub accuracy: MetricSummary,
    pub audit: Vec<FoldAudit>,
}

impl EvalReport {
    fn from_folds(
        positive_label: Label,
        folds: Vec<Metrics>,
        chosen_k: Vec<usize>,
        embedding_dims: Vec<usize>,
        audit: Vec<FoldAudit>,
    ) -> Self {
        let summary =
            |f: fn(&Metrics) -> f64| MetricSummary::of(&folds.iter().map(f).collect::<Vec<_>>());
        Self {
            positive_label,
            sensitivity: summary(|m| m.sensitivity),
            specificity: summary(|m| m.specificity),
            precision: summary(|m| m.precision),
            f1: summary(|m| m.f1),
            accuracy: summary(|m| m.accuracy),
            folds,
            chosen_k,
            embedding_dims,
            audit,
        }
    }

    pub fn degenerate_folds(&self) -> usize {
        self.folds.iter().filter(|m| m.degenerate).count()
    }

    /// `metric,mean,se` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::from("metric,mean,se\n");
        for (name, s) in [
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
            ("precision", self.precision),
            ("f1", self.f1),
            ("accuracy", self.accuracy),
        ] {
            let _ = writeln!(out, "{name},{},{}", s.mean, s.se);
        }
        out
    }
}

fn derived_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

struct FoldOutcome {
    metrics: Metrics,
    k: usize,
    dim: usize,
}

fn run_fold(
    dataset: &MtsDataset,
    labels: &[Label],
    train: &[usize],
    test: &[usize],
    config: &EnsembleConfig,
    options: &EvalOptions,
    positive: Label,
    seed: u64,
) -> Result<FoldOutcome> {
    let train_ds = dataset.select_records(train);
    let test_ds = dataset.select_records(test);
    let config = EnsembleConfig {
        seed,
        ..config.clone()
    };
    let (trained, gram) = train_tck_im(&train_ds, &config)?;
    let cross = kernel_test_with_workers(&trained, &test_ds, config.workers)?;

    let rank = kernel_rank(&gram)?;
    let dim = options.embedding_dim.min(rank);
    if dim == 0 {
        return Err(Error::RankDeficient {
            requested: options.embedding_dim,
            achievable: 0,
        });
    }
    if dim < options.embedding_dim {
        log::warn!(
            "kernel rank {rank} is below the embedding dimension {}; using {dim}",
            options.embedding_dim
        );
    }
    let (state, train_embed) = kpca_fit(&gram, dim)?;
    let test_embed: DMatrix<f64> = kpca_project(&state, &cross)?;

    let train_labels: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<Label> = test.iter().map(|&i| labels[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cv_folds = options.cv_folds.min(train.len());
    let k = select_k_cv(
        &train_embed,
        &train_labels,
        cv_folds,
        &options.k_grid,
        positive,
        &mut rng,
    )?;
    let pred = knn_classify(&train_embed, &train_labels, &test_embed, k.min(train.len()))?;
    Ok(FoldOutcome {
        metrics: metrics(&test_labels, &pred, positive)?,
        k,
        dim,
    })
}

fn audit(dataset: &MtsDataset, train: &[usize], test: &[usize]) -> FoldAudit {
    let ids = |idx: &[usize]| {
        idx.iter()
            .map(|&i| dataset.record(i).id().to_string())
            .collect()
    };
    FoldAudit {
        train_ids: ids(train),
        test_ids: ids(test),
    }
}

/// Trains the kernel on each training split, embeds both splits with KPCA,
/// picks `k` by inner cross-validation on the training embedding and scores
/// kNN predictions on the held-out records.
pub fn evaluate_pipeline(
    dataset: &MtsDataset,
    config: &EnsembleConfig,
    protocol: Protocol,
    options: &EvalOptions,
    seed: u64,
) -> Result<EvalReport> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::invalid("evaluation needs a labeled dataset"))?
        .to_vec();
    let mut classes = labels.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() != 2 {
        return Err(Error::invalid(format!(
            "evaluation needs exactly two classes, found {}",
            classes.len()
        )));
    }
    let positive = options.positive_label.unwrap_or(classes[1]);
    if !classes.contains(&positive) {
        return Err(Error::invalid(format!(
            "positive label {positive} does not occur in the data"
        )));
    }
    let n = dataset.n_records();

    let splits: Vec<(Vec<usize>, Vec<usize>)> = match protocol {
        Protocol::KFold { folds } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            stratified_folds(&labels, folds, &mut rng)?
                .into_iter()
                .map(|test| (complement(n, &test), test))
                .collect()
        }
        Protocol::UndersampleHoldout {
            ratio,
            test_fraction,
            repeats,
        } => {
            if !(ratio > 0.0) || !(test_fraction > 0.0 && test_fraction < 1.0) || repeats == 0 {
                return Err(Error::invalid(
                    "undersampling needs ratio > 0, test fraction in (0, 1) and repeats >= 1",
                ));
            }
            (0..repeats)
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(r as u64 + 1);
                    undersample_split(&labels, positive, ratio, test_fraction, &mut rng)
                })
                .collect::<Result<_>>()?
        }
    };

    let mut folds = Vec::with_capacity(splits.len());
    let mut ks = Vec::with_capacity(splits.len());
    let mut dims = Vec::with_capacity(splits.len());
    let mut audits = Vec::with_capacity(splits.len());
    for (i, (train, test)) in splits.iter().enumerate() {
        let outcome = run_fold(
            dataset,
            &labels,
            train,
            test,
            config,
            options,
            positive,
            derived_seed(seed, i as u64 + 1),
        )?;
        log::info!(
            "fold {}: k={}, dim={}, f1={:.4}, accuracy={:.4}",
            i + 1,
            outcome.k,
            outcome.dim,
            outcome.metrics.f1,
            outcome.metrics.accuracy
        );
        folds.push(outcome.metrics);
        ks.push(outcome.k);
        dims.push(outcome.dim);
        audits.push(audit(dataset, train, test));
    }
    Ok(EvalReport::from_folds(positive, folds, ks, dims, audits))
}

fn undersample_split<R: Rng + ?Sized>(
    labels: &[Label],
    positive: Label,
    ratio: f64,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let positives: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == positive)
        .collect();
    let mut negatives: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] != positive)
        .collect();
    let keep = ((ratio * positives.len() as f64).round() as usize).min(negatives.len());
    negatives.shuffle(rng);
    negatives.truncate(keep);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut class in [positives, negatives] {
        if class.len() < 2 {
            return Err(Error::invalid(
                "each class needs at least two records for a holdout split",
            ));
        }
        class.shuffle(rng);
        let n_test =
            ((test_fraction * class.len() as f64).round() as usize).clamp(1, class.len() - 1);
        test.extend_from_slice(&class[..n_test]);
        train.extend_from_slice(&class[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
