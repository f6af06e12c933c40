//! Ensemble kernel: randomized mixture fits whose posterior cosine
//! similarities are summed into a Gram matrix.

mod gram;
mod model;

pub use gram::{linear_kernel, load_gram, parse_gram, save_gram, write_gram, GramKind, GramMatrix};
pub use model::{load_model, read_model, save_model, write_model, MODEL_MAGIC};

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_standardization, concat_missingness_indicators, impute, standardize, ImputeStrategy,
    MtsDataset, StandardizationStats,
};
use crate::error::{Error, Result};
use crate::mixture::{
    e_step, em::fit_map_em_with_rng, InitSpec, MaskModel, MixtureHyperparams, MixtureParams,
    Posteriors, StoppingRule,
};

/// Kernel variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Mixed-mode mixtures: observed values and the observation mask.
    Im,
    /// Observed values only; missing cells are marginalized out.
    Tck,
    /// Missingness indicators appended as extra variables, then `Tck`.
    B,
    /// Missing cells set to zero, then `Tck`.
    Zero,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Im, Mode::Tck, Mode::B, Mode::Zero];

    fn mask_model(self) -> MaskModel {
        match self {
            Mode::Im => MaskModel::Bernoulli,
            _ => MaskModel::Ignored,
        }
    }

    /// Dataset transform applied (after standardization) before fitting and testing.
    pub fn prepare(self, dataset: &MtsDataset) -> Result<MtsDataset> {
        match self {
            Mode::Im | Mode::Tck => Ok(dataset.clone()),
            Mode::B => Ok(concat_missingness_indicators(dataset)),
            Mode::Zero => impute(dataset, ImputeStrategy::Zero),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Im => "im",
            Mode::Tck => "tck",
            Mode::B => "b",
            Mode::Zero => "zero",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "im" | "tck_im" => Ok(Mode::Im),
            "tck" => Ok(Mode::Tck),
            "b" | "tck_b" => Ok(Mode::B),
            "zero" | "0" | "tck_0" => Ok(Mode::Zero),
            _ => Err(Error::invalid(format!(
                "unknown mode `{s}` (expected im, tck, b or zero)"
            ))),
        }
    }
}

/// Sampling intervals of the base-model hyperparameters. `c0` and `d0` are
/// given as multiples of `1/N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperparamRanges {
    pub a0: (f64, f64),
    pub b0: (f64, f64),
    pub n0: (f64, f64),
    pub c0_times_n: (f64, f64),
    pub d0_times_n: (f64, f64),
}

impl Default for HyperparamRanges {
    fn default() -> Self {
        Self {
            a0: (0.001, 1.0),
            b0: (0.005, 0.2),
            n0: (0.001, 0.2),
            c0_times_n: (0.1, 2.0),
            d0_times_n: (0.1, 2.0),
        }
    }
}

impl HyperparamRanges {
    fn validate(&self) -> Result<()> {
        let ranges = [self.a0, self.b0, self.n0, self.c0_times_n, self.d0_times_n];
        if ranges
            .iter()
            .all(|&(lo, hi)| lo > 0.0 && lo <= hi && hi.is_finite())
        {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid hyperparameter ranges {self:?}"
            )))
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Inclusive range of component counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentRange {
    pub min: usize,
    pub max: usize,
}

impl ComponentRange {
    /// `{I .. I + 20}` with `I = max(2, ceil(N / 200))`.
    pub fn default_for(n_records: usize) -> Self {
        let min = n_records.div_ceil(200).max(2);
        Self { min, max: min + 20 }
    }

    pub fn len(&self) -> usize {
        self.max + 1 - self.min
    }

    pub fn is_empty(&self) -> bool {
        self.max < self.min
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Number of random initializations `Q` per component count.
    pub q_inits: usize,
    /// Component counts; `None` selects [`ComponentRange::default_for`].
    pub components: Option<ComponentRange>,
    pub subsample_fraction: f64,
    pub min_segment_length: usize,
    pub min_attributes: usize,
    pub hyperparams: HyperparamRanges,
    pub stopping: StoppingRule,
    pub mode: Mode,
    /// Standardize variables before training and store the statistics.
    pub standardize: bool,
    pub seed: u64,
    /// Worker threads; 0 uses all available cores. Does not affect results.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            q_inits: 15,
            components: None,
            subsample_fraction: 0.8,
            min_segment_length: 6,
            min_attributes: 1,
            hyperparams: HyperparamRanges::default(),
            stopping: StoppingRule::default(),
            mode: Mode::Im,
            standardize: true,
            seed: 0,
            workers: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn component_range(&self, n_records: usize) -> ComponentRange {
        self.components
            .unwrap_or_else(|| ComponentRange::default_for(n_records))
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_inits == 0 {
            return Err(Error::invalid("q_inits must be at least 1"));
        }
        if let Some(c) = self.components {
            if c.min == 0 || c.is_empty() {
                return Err(Error::invalid(format!(
                    "invalid component range {}..={}",
                    c.min, c.max
                )));
            }
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::invalid("subsample_fraction must lie in (0, 1]"));
        }
        if self.min_segment_length == 0 || self.min_attributes == 0 {
            return Err(Error::invalid(
                "min_segment_length and min_attributes must be at least 1",
            ));
        }
        self.hyperparams.validate()
    }
}

/// Randomized settings of one base model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseModelSpec {
    /// Position in the plan; also selects the model's random stream.
    pub index: usize,
    /// Initialization number within its component count.
    pub q1: usize,
    pub n_components: usize,
    pub hyperparams: MixtureHyperparams,
    /// Half-open time segment `[start, end)`.
    pub segment: (usize, usize),
    /// Sorted variable indices.
    pub attributes: Vec<usize>,
    /// Sorted training-record indices.
    pub samples: Vec<usize>,
}

/// Draws `Q * |I_C|` base-model settings for data of shape `N x V x T`.
pub fn sample_ensemble_plan(
    config: &EnsembleConfig,
    n_records: usize,
    n_vars: usize,
    len: usize,
) -> Result<Vec<BaseModelSpec>> {
    config.validate()?;
    if n_records == 0 || len == 0 {
        return Err(Error::EmptyDataset);
    }
    if config.min_attributes > n_vars {
        return Err(Error::invalid(format!(
            "min_attributes {} exceeds the number of variables {n_vars}",
            config.min_attributes
        )));
    }
    let range = config.component_range(n_records);
    let min_len = config.min_segment_length.min(len);
    let n_samples =
        ((config.subsample_fraction * n_records as f64).ceil() as usize).clamp(1, n_records);
    let n = n_records as f64;
    let hr = &config.hyperparams;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut plan = Vec::with_capacity(config.q_inits * range.len());
    for n_components in range.min..=range.max {
        for q1 in 0..config.q_inits {
            let hyperparams = MixtureHyperparams {
                a0: uniform(&mut rng, hr.a0),
                b0: uniform(&mut rng, hr.b0),
                n0: uniform(&mut rng, hr.n0),
                c0: uniform(&mut rng, hr.c0_times_n) / n,
                d0: uniform(&mut rng, hr.d0_times_n) / n,
            };
            let seg_len = rng.random_range(min_len..=len);
            let start = rng.random_range(0..=len - seg_len);
            let n_attr = rng.random_range(config.min_attributes..=n_vars);
            let mut attributes = sample(&mut rng, n_vars, n_attr).into_vec();
            attributes.sort_unstable();
            let mut samples = sample(&mut rng, n_records, n_samples).into_vec();
            samples.sort_unstable();
            plan.push(BaseModelSpec {
                index: plan.len(),
                q1,
                n_components,
                hyperparams,
                segment: (start, start + seg_len),
                attributes,
                samples,
            });
        }
    }
    Ok(plan)
}

/// A fitted base model with the posteriors of every training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseModel {
    pub spec: BaseModelSpec,
    /// Variables actually modeled: `spec.attributes` minus those with no
    /// observed cell in the fitting view.
    pub variables: Vec<usize>,
    pub params: MixtureParams,
    pub train_posteriors: Posteriors,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

/// Trained ensemble; everything needed to evaluate the kernel on new data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedKernel {
    pub config: EnsembleConfig,
    /// Variables and length of the raw input data.
    pub n_vars: usize,
    pub len: usize,
    pub n_train: usize,
    pub standardization: Option<StandardizationStats>,
    pub planned: usize,
    pub models: Vec<BaseModel>,
}

impl TrainedKernel {
    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    /// Applies the training standardization and the mode transform.
    pub fn prepare(&self, dataset: &MtsDataset) -> Result<MtsDataset> {
        if dataset.n_vars() != self.n_vars || dataset.len() != self.len {
            return Err(Error::ShapeMismatch {
                expected: format!("{} variables x {} timesteps", self.n_vars, self.len),
                found: format!(
                    "{} variables x {} timesteps",
                    dataset.n_vars(),
                    dataset.len()
                ),
            });
        }
        let scaled = match &self.standardization {
            Some(stats) => apply_standardization(dataset, stats)?,
            None => dataset.clone(),
        };
        self.mode().prepare(&scaled)
    }
}

fn view(dataset: &MtsDataset, variables: &[usize], segment: (usize, usize)) -> MtsDataset {
    dataset.restrict(variables, segment.0..segment.1)
}

fn fit_base_model(
    prepared: &MtsDataset,
    spec: &BaseModelSpec,
    config: &EnsembleConfig,
) -> Result<BaseModel> {
    let subset = prepared.select_records(&spec.samples);
    let restricted = view(&subset, &spec.attributes, spec.segment);
    let variables: Vec<usize> = spec
        .attributes
        .iter()
        .enumerate()
        .filter(|&(i, _)| restricted.observed_values(i).next().is_some())
        .map(|(_, &v)| v)
        .collect();
    if variables.is_empty() {
        return Err(Error::invalid(
            "no variable has an observed cell in the sampled view",
        ));
    }
    let fit_view = if variables.len() == spec.attributes.len() {
        restricted
    } else {
        view(&subset, &variables, spec.segment)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(spec.index as u64 + 1);
    let fit = fit_map_em_with_rng(
        &fit_view,
        spec.n_components,
        &spec.hyperparams,
        &InitSpec::RandomRecords,
        config.stopping,
        &mut rng,
        config.mode.mask_model(),
    )?;
    let train_posteriors = e_step(
        &view(prepared, &variables, spec.segment),
        &fit.params,
        config.mode.mask_model(),
    )?;
    Ok(BaseModel {
        spec: spec.clone(),
        variables,
        objective: *fit
            .objective_trace
            .last()
            .expect("trace starts at the initialization"),
        params: fit.params,
        train_posteriors,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

fn unit_rows(post: &Posteriors) -> Vec<Vec<f64>> {
    post.rows()
        .map(|row| {
            let norm = row.iter().map(|p| p * p).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|p| p / norm).collect()
            } else {
                vec![0.0; row.len()]
            }
        })
        .collect()
}

/// Cosine of two non-negative unit vectors, clamped to `[0, 1]` against rounding.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Trains the ensemble and returns it with the in-sample Gram matrix.
///
/// Base models are fitted in parallel; their contributions are summed in plan
/// order, so the result does not depend on the number of workers. Failed
/// fits are skipped and the Gram diagonal equals the number of successes.
pub fn train_tck_im(
    dataset: &MtsDataset,
    config: &EnsembleConfig,
) -> Result<(TrainedKernel, GramMatrix)> {
    config.validate()?;
    let n = dataset.n_records();
    if n < 2 {
        return Err(Error::invalid(format!(
            "training needs at least 2 records, found {n}"
        )));
    }
    let (scaled, standardization) = if config.standardize {
        let (d, stats) = standardize(dataset)?;
        (d, Some(stats))
    } else {
        (dataset.clone(), None)
    };
    let prepared = config.mode.prepare(&scaled)?;
    let plan = sample_ensemble_plan(config, n, prepared.n_vars(), prepared.len())?;
    let results: Vec<Result<BaseModel>> = with_pool(config.workers, || {
        plan.par_iter()
            .map(|spec| fit_base_model(&prepared, spec, config))
            .collect()
    })?;

    let mut models = Vec::with_capacity(plan.len());
    for (spec, result) in plan.iter().zip(results) {
        match result {
            Ok(model) => {
                log::info!(
                    "model {} (q1={}, G={}): ok, {} iterations{}, objective {:.6}",
                    spec.index,
                    spec.q1,
                    spec.n_components,
                    model.iterations,
                    if model.converged {
                        ""
                    } else {
                        " (not converged)"
                    },
                    model.objective
                );
                models.push(model);
            }
            Err(e) => log::warn!(
                "model {} (q1={}, G={}): failed: {e}",
                spec.index,
                spec.q1,
                spec.n_components
            ),
        }
    }
    if models.is_empty() {
        return Err(Error::AllModelsFailed(plan.len()));
    }
    log::info!("{} of {} base models trained", models.len(), plan.len());

    let mut gram = GramMatrix::zeros(GramKind::InSample, n, n);
    for model in &models {
        let unit = unit_rows(&model.train_posteriors);
        for i in 0..n {
            for j in i..n {
                let c = dot(&unit[i], &unit[j]);
                gram.add_at(i, j, c);
                if j != i {
                    gram.add_at(j, i, c);
                }
            }
        }
    }
    gram.set_models(models.len());
    let trained = TrainedKernel {
        config: config.clone(),
        n_vars: dataset.n_vars(),
        len: dataset.len(),
        n_train: n,
        standardization,
        planned: plan.len(),
        models,
    };
    Ok((trained, gram))
}

/// Kernel between the training records (rows) and `test` (columns).
pub fn kernel_test(trained: &TrainedKernel, test: &MtsDataset) -> Result<GramMatrix> {
    kernel_test_with_workers(trained, test, 0)
}

pub fn kernel_test_with_workers(
    trained: &TrainedKernel,
    test: &MtsDataset,
    workers: usize,
) -> Result<GramMatrix> {
    let unit = unit_posteriors(trained, test, workers)?;
    let (n, m) = (trained.n_train, test.n_records());
    let mut gram = GramMatrix::zeros(GramKind::Cross, n, m);
    for (model, test) in trained.models.iter().zip(&unit) {
        let train = unit_rows(&model.train_posteriors);
        for (i, a) in train.iter().enumerate() {
            for (j, b) in test.iter().enumerate() {
                gram.add_at(i, j, dot(a, b));
            }
        }
    }
    gram.set_models(trained.models.len());
    Ok(gram)
}

/// Kernel among the records of `dataset` under a trained ensemble. On the
/// training set this reproduces the in-sample Gram matrix.
pub fn kernel_within(
    trained: &TrainedKernel,
    dataset: &MtsDataset,
    workers: usize,
) -> Result<GramMatrix> {
    let unit = unit_posteriors(trained, dataset, workers)?;
    let m = dataset.n_records();
    let mut gram = GramMatrix::zeros(GramKind::InSample, m, m);
    for rows in &unit {
        for i in 0..m {
            for j in i..m {
                let c = dot(&rows[i], &rows[j]);
                gram.add_at(i, j, c);
                if j != i {
                    gram.add_at(j, i, c);
                }
            }
        }
    }
    gram.set_models(trained.models.len());
    Ok(gram)
}

fn unit_posteriors(
    trained: &TrainedKernel,
    dataset: &MtsDataset,
    workers: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let prepared = trained.prepare(dataset)?;
    let mask_model = trained.mode().mask_model();
    let posteriors: Vec<Result<Posteriors>> = with_pool(workers, || {
        trained
            .models
            .par_iter()
            .map(|model| {
                e_step(
                    &view(&prepared, &model.variables, model.spec.segment),
                    &model.params,
                    mask_model,
                )
            })
            .collect()
    })?;
    posteriors.into_iter().map(|p| Ok(unit_rows(&p?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MtsRecord;

    fn toy(n: usize, seed: u64) -> MtsDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..n)
            .map(|i| {
                let mut values = Vec::new();
                let mut mask = Vec::new();
                for v in 0..2 {
                    for t in 0..8 {
                        let observed = t == 0 || rng.random::<f64>() > 0.3;
                        let x = if i % 2 == 0 { 1.0 } else { -1.0 }
                            * (t as f64 * 0.4 + v as f64).cos()
                            + rng.random_range(-0.5..0.5);
                        values.push(if observed { x } else { f64::NAN });
                        mask.push(observed);
                    }
                }
                MtsRecord::new(i.to_string(), 2, 8, values, mask).unwrap()
            })
            .collect();
        MtsDataset::unnamed(records, None, 2, 8).unwrap()
    }

    fn small_config(mode: Mode) -> EnsembleConfig {
        EnsembleConfig {
            q_inits: 3,
            components: Some(ComponentRange { min: 2, max: 3 }),
            mode,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn plan_sizes() {
        let c = EnsembleConfig {
            components: Some(ComponentRange { min: 2, max: 22 }),
            ..Default::default()
        };
        assert_eq!(sample_ensemble_plan(&c, 100, 4, 30).unwrap().len(), 315);
        let c = EnsembleConfig {
            q_inits: 10,
            components: Some(ComponentRange { min: 2, max: 3 }),
            ..Default::default()
        };
        assert_eq!(sample_ensemble_plan(&c, 100, 4, 30).unwrap().len(), 20);
    }

    #[test]
    fn default_component_range() {
        assert_eq!(
            ComponentRange::default_for(100),
            ComponentRange { min: 2, max: 22 }
        );
        assert_eq!(
            ComponentRange::default_for(1000),
            ComponentRange { min: 5, max: 25 }
        );
    }

    #[test]
    fn plan_respects_ranges_and_is_deterministic() {
        let c = EnsembleConfig {
            seed: 4,
            ..Default::default()
        };
        let plan = sample_ensemble_plan(&c, 50, 5, 20).unwrap();
        assert_eq!(plan, sample_ensemble_plan(&c, 50, 5, 20).unwrap());
        for s in &plan {
            let h = s.hyperparams;
            assert!((0.001..=1.0).contains(&h.a0));
            assert!((0.005..=0.2).contains(&h.b0));
            assert!((0.001..=0.2).contains(&h.n0));
            assert!((0.1 / 50.0..=2.0 / 50.0).contains(&h.c0));
            assert!((0.1 / 50.0..=2.0 / 50.0).contains(&h.d0));
            assert!(s.segment.1 - s.segment.0 >= 6 && s.segment.1 <= 20);
            assert!(!s.attributes.is_empty() && s.attributes.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(s.samples.len(), 40);
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("IM".parse::<Mode>().unwrap(), Mode::Im);
        assert_eq!("zero".parse::<Mode>().unwrap(), Mode::Zero);
        assert!("gak".parse::<Mode>().is_err());
        for m in Mode::ALL {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
    }

    #[test]
    fn gram_invariants_and_test_consistency() {
        let d = toy(16, 1);
        let (trained, gram) = train_tck_im(&d, &small_config(Mode::Im)).unwrap();
        let q = trained.models.len() as f64;
        assert_eq!(gram.models(), trained.models.len());
        for i in 0..16 {
            assert!((gram.get(i, i) - q).abs() < 1e-9);
            for j in 0..16 {
                assert_eq!(gram.get(i, j), gram.get(j, i));
                assert!(gram.get(i, j) >= 0.0 && gram.get(i, j) <= q + 1e-9);
            }
        }
        let cross = kernel_test(&trained, &d).unwrap();
        assert_eq!(cross.entries(), gram.entries());
        let within = kernel_within(&trained, &d, 2).unwrap();
        assert_eq!(within.kind(), GramKind::InSample);
        assert_eq!(within.entries(), gram.entries());
    }

    #[test]
    fn identical_records_have_full_similarity() {
        let base = toy(6, 2);
        let mut records = base.records().to_vec();
        records.push(records[0].clone());
        let d = MtsDataset::unnamed(records, None, 2, 8).unwrap();
        let (trained, gram) = train_tck_im(&d, &small_config(Mode::Im)).unwrap();
        let q = trained.models.len() as f64;
        assert!((gram.get(0, 6) - q).abs() < 1e-9);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let d = toy(12, 3);
        let mut c = small_config(Mode::Tck);
        c.workers = 1;
        let (_, a) = train_tck_im(&d, &c).unwrap();
        c.workers = 3;
        let (_, b) = train_tck_im(&d, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_modes_train() {
        let d = toy(10, 4);
        for mode in Mode::ALL {
            let (trained, gram) = train_tck_im(&d, &small_config(mode)).unwrap();
            assert_eq!(gram.rows(), 10);
            let expected_vars = if mode == Mode::B { 4 } else { 2 };
            assert!(trained
                .models
                .iter()
                .all(|m| m.variables.iter().all(|&v| v < expected_vars)));
        }
    }

    #[test]
    fn empty_test_set() {
        let d = toy(8, 5);
        let (trained, _) = train_tck_im(&d, &small_config(Mode::Im)).unwrap();
        let empty = MtsDataset::unnamed(vec![], None, 2, 8).unwrap();
        let k = kernel_test(&trained, &empty).unwrap();
        assert_eq!((k.rows(), k.cols()), (8, 0));
    }

    #[test]
    fn geometry_mismatch_is_rejected() {
        let d = toy(8, 5);
        let (trained, _) = train_tck_im(&d, &small_config(Mode::Im)).unwrap();
        let other = d.restrict(&[0], 0..8);
        assert!(matches!(
            kernel_test(&trained, &other),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
