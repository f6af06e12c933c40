//! Incompletely observed multivariate time series.
//!
//! A record is a `V x T` matrix of values paired with a boolean observation
//! mask of the same shape. Cells whose mask is `false` hold `NaN`, so any
//! accidental arithmetic on an absent cell poisons the result instead of
//! silently producing a number.

mod ingest;
mod io;

pub use ingest::{ingest_long_format, read_long_events, IngestReport, LongEvent};
pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset, MISSING_TOKEN};

use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};

/// Class label. Classes are conventionally numbered `1..=n_classes`.
pub type Label = u32;

/// Suffix appended to variable names of missingness-indicator variables.
pub const INDICATOR_SUFFIX: &str = "__obs";

/// One multivariate time series with its observation mask.
///
/// Equality compares ids, shapes, masks and the bits of observed values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MtsRecord {
    id: String,
    n_vars: usize,
    len: usize,
    /// Row-major `n_vars x len`; `NaN` wherever `mask` is false.
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl PartialEq for MtsRecord {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.n_vars == other.n_vars
            && self.len == other.len
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), &m)| !m || a.to_bits() == b.to_bits())
    }
}

impl MtsRecord {
    /// Builds a record from row-major values and mask.
    ///
    /// Values under a `false` mask are discarded. Observed values must be finite.
    pub fn new(
        id: impl Into<String>,
        n_vars: usize,
        len: usize,
        mut values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let id = id.into();
        let cells = n_vars * len;
        if values.len() != cells || mask.len() != cells {
            return Err(Error::ShapeMismatch {
                expected: format!("{cells} cells ({n_vars}x{len})"),
                found: format!("{} values, {} mask entries", values.len(), mask.len()),
            });
        }
        for (i, (x, &r)) in values.iter_mut().zip(&mask).enumerate() {
            if !r {
                *x = f64::NAN;
            } else if !x.is_finite() {
                return Err(Error::invalid(format!(
                    "record `{id}`: non-finite observed value at variable {}, time {}",
                    i / len.max(1),
                    i % len.max(1)
                )));
            }
        }
        Ok(Self {
            id,
            n_vars,
            len,
            values,
            mask,
        })
    }

    /// A record with every cell observed.
    pub fn complete(
        id: impl Into<String>,
        n_vars: usize,
        len: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::new(id, n_vars, len, values, mask)
    }

    /// Builds a record from per-variable rows where `None` marks a missing cell.
    pub fn from_rows(id: impl Into<String>, rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_vars = rows.len();
        let len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::invalid("ragged rows"));
        }
        let mut values = Vec::with_capacity(n_vars * len);
        let mut mask = Vec::with_capacity(n_vars * len);
        for cell in rows.iter().flatten() {
            values.push(cell.unwrap_or(f64::NAN));
            mask.push(cell.is_some());
        }
        Self::new(id, n_vars, len, values, mask)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0 || self.n_vars == 0
    }

    #[inline]
    pub fn is_observed(&self, v: usize, t: usize) -> bool {
        self.mask[v * self.len + t]
    }

    /// The observed value at `(v, t)`, or `None` if the cell is missing.
    #[inline]
    pub fn get(&self, v: usize, t: usize) -> Option<f64> {
        let i = v * self.len + t;
        self.mask[i].then(|| self.values[i])
    }

    /// Raw row of variable `v`; missing cells are `NaN`.
    pub fn row_values(&self, v: usize) -> &[f64] {
        &self.values[v * self.len..(v + 1) * self.len]
    }

    pub fn row_mask(&self, v: usize) -> &[bool] {
        &self.mask[v * self.len..(v + 1) * self.len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&r| r).count()
    }

    /// Copies out a sub-view restricted to `vars` and the time `segment`.
    pub fn restrict(&self, vars: &[usize], segment: Range<usize>) -> MtsRecord {
        let len = segment.len();
        let mut values = Vec::with_capacity(vars.len() * len);
        let mut mask = Vec::with_capacity(vars.len() * len);
        for &v in vars {
            values.extend_from_slice(&self.row_values(v)[segment.clone()]);
            mask.extend_from_slice(&self.row_mask(v)[segment.clone()]);
        }
        MtsRecord {
            id: self.id.clone(),
            n_vars: vars.len(),
            len,
            values,
            mask,
        }
    }

    fn map_observed(&self, mut f: impl FnMut(usize, f64) -> f64) -> MtsRecord {
        let mut out = self.clone();
        for (i, x) in out.values.iter_mut().enumerate() {
            if out.mask[i] {
                *x = f(i / self.len, *x);
            }
        }
        out
    }
}

/// A collection of records sharing the same number of variables and length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtsDataset {
    records: Vec<MtsRecord>,
    labels: Option<Vec<Label>>,
    variable_names: Vec<String>,
    len: usize,
}

impl MtsDataset {
    /// Validates shapes and label count. `len` is needed so empty datasets keep a geometry.
    pub fn new(
        records: Vec<MtsRecord>,
        labels: Option<Vec<Label>>,
        variable_names: Vec<String>,
        len: usize,
    ) -> Result<Self> {
        let n_vars = variable_names.len();
        for r in &records {
            if r.n_vars != n_vars || r.len != len {
                return Err(Error::ShapeMismatch {
                    expected: format!("{n_vars}x{len}"),
                    found: format!("{}x{} in record `{}`", r.n_vars, r.len, r.id),
                });
            }
        }
        if let Some(l) = &labels {
            if l.len() != records.len() {
                return Err(Error::invalid(format!(
                    "{} labels for {} records",
                    l.len(),
                    records.len()
                )));
            }
        }
        Ok(Self {
            records,
            labels,
            variable_names,
            len,
        })
    }

    /// Like [`MtsDataset::new`] but with generated names `x1..xV`.
    pub fn unnamed(
        records: Vec<MtsRecord>,
        labels: Option<Vec<Label>>,
        n_vars: usize,
        len: usize,
    ) -> Result<Self> {
        let names = (1..=n_vars).map(|v| format!("x{v}")).collect();
        Self::new(records, labels, names, len)
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn n_vars(&self) -> usize {
        self.variable_names.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[MtsRecord] {
        &self.records
    }

    pub fn record(&self, n: usize) -> &MtsRecord {
        &self.records[n]
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn with_labels(mut self, labels: Option<Vec<Label>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.records.len() {
                return Err(Error::invalid(format!(
                    "{} labels for {} records",
                    l.len(),
                    self.records.len()
                )));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Subset of records in the given order, keeping labels aligned.
    pub fn select_records(&self, indices: &[usize]) -> MtsDataset {
        MtsDataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            variable_names: self.variable_names.clone(),
            len: self.len,
        }
    }

    /// Restricts every record to `vars` and the time `segment`.
    pub fn restrict(&self, vars: &[usize], segment: Range<usize>) -> MtsDataset {
        MtsDataset {
            records: self
                .records
                .iter()
                .map(|r| r.restrict(vars, segment.clone()))
                .collect(),
            labels: self.labels.clone(),
            variable_names: vars
                .iter()
                .map(|&v| self.variable_names[v].clone())
                .collect(),
            len: segment.len(),
        }
    }

    /// Observed values of variable `v` across all records and timesteps.
    pub fn observed_values(&self, v: usize) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().flat_map(move |r| {
            r.row_values(v)
                .iter()
                .zip(r.row_mask(v))
                .filter_map(|(&x, &m)| m.then_some(x))
        })
    }

    fn with_records(&self, records: Vec<MtsRecord>) -> MtsDataset {
        MtsDataset {
            records,
            labels: self.labels.clone(),
            variable_names: self.variable_names.clone(),
            len: self.len,
        }
    }
}

/// Mean and population standard deviation of the observed values, or `None` if there are none.
pub(crate) fn observed_moments(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let xs: Vec<f64> = values.collect();
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Per-variable missing rates and the overall rate.
pub fn missing_rates(dataset: &MtsDataset) -> Result<(Vec<f64>, f64)> {
    if dataset.is_empty() || dataset.len() == 0 || dataset.n_vars() == 0 {
        return Err(Error::EmptyDataset);
    }
    let per_var_cells = (dataset.n_records() * dataset.len()) as f64;
    let rates: Vec<f64> = (0..dataset.n_vars())
        .map(|v| {
            let missing: usize = dataset
                .records()
                .iter()
                .map(|r| r.row_mask(v).iter().filter(|&&m| !m).count())
                .sum();
            missing as f64 / per_var_cells
        })
        .collect();
    let overall = rates.iter().sum::<f64>() / rates.len() as f64;
    Ok((rates, overall))
}

/// Drops variables whose dataset-wide missing rate exceeds `threshold`.
pub fn drop_high_missing_variables(
    dataset: &MtsDataset,
    threshold: f64,
) -> Result<(MtsDataset, Vec<String>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "threshold {threshold} outside (0, 1]"
        )));
    }
    let (rates, _) = missing_rates(dataset)?;
    let (keep, dropped): (Vec<usize>, Vec<usize>) =
        (0..dataset.n_vars()).partition(|&v| rates[v] <= threshold);
    if keep.is_empty() {
        return Err(Error::AllVariablesDropped(threshold));
    }
    let names = dropped
        .iter()
        .map(|&v| dataset.variable_names()[v].clone())
        .collect();
    Ok((dataset.restrict(&keep, 0..dataset.len()), names))
}

/// Per-variable location and scale used for standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl StandardizationStats {
    pub fn identity(n_vars: usize) -> Self {
        Self {
            means: vec![0.0; n_vars],
            stds: vec![1.0; n_vars],
        }
    }
}

/// Standardizes each variable to zero mean and unit (population) standard
/// deviation over its observed cells, pooled over records and timesteps.
///
/// A variable with constant observed values keeps a unit scale.
pub fn standardize(dataset: &MtsDataset) -> Result<(MtsDataset, StandardizationStats)> {
    let mut means = Vec::with_capacity(dataset.n_vars());
    let mut stds = Vec::with_capacity(dataset.n_vars());
    for v in 0..dataset.n_vars() {
        let name = &dataset.variable_names()[v];
        let (mean, std) = observed_moments(dataset.observed_values(v))
            .ok_or_else(|| Error::NoObservations(name.clone()))?;
        means.push(mean);
        if std > 0.0 {
            stds.push(std);
        } else {
            log::warn!("variable `{name}` is constant on its observed cells; using unit scale");
            stds.push(1.0);
        }
    }
    let stats = StandardizationStats { means, stds };
    let out = apply_standardization(dataset, &stats)?;
    Ok((out, stats))
}

/// Applies previously computed statistics, e.g. training statistics to a test set.
pub fn apply_standardization(
    dataset: &MtsDataset,
    stats: &StandardizationStats,
) -> Result<MtsDataset> {
    check_stats(dataset, stats)?;
    let records = dataset
        .records()
        .iter()
        .map(|r| r.map_observed(|v, x| (x - stats.means[v]) / stats.stds[v]))
        .collect();
    Ok(dataset.with_records(records))
}

/// Inverse of [`apply_standardization`].
pub fn unstandardize(dataset: &MtsDataset, stats: &StandardizationStats) -> Result<MtsDataset> {
    check_stats(dataset, stats)?;
    let records = dataset
        .records()
        .iter()
        .map(|r| r.map_observed(|v, x| x * stats.stds[v] + stats.means[v]))
        .collect();
    Ok(dataset.with_records(records))
}

fn check_stats(dataset: &MtsDataset, stats: &StandardizationStats) -> Result<()> {
    if stats.means.len() != dataset.n_vars() || stats.stds.len() != dataset.n_vars() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} variables", dataset.n_vars()),
            found: format!("statistics for {}", stats.means.len()),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImputeStrategy {
    /// Per-variable mean of the observed cells.
    Mean,
    Zero,
    /// Last observation carried forward; leading gaps take the variable mean.
    Locf,
}

/// Fills every missing cell; the returned dataset is fully observed.
pub fn impute(dataset: &MtsDataset, strategy: ImputeStrategy) -> Result<MtsDataset> {
    let fill_means: Option<Vec<f64>> = match strategy {
        ImputeStrategy::Zero => None,
        ImputeStrategy::Mean | ImputeStrategy::Locf => Some(
            (0..dataset.n_vars())
                .map(|v| {
                    observed_moments(dataset.observed_values(v))
                        .map(|(m, _)| m)
                        .ok_or_else(|| Error::NoObservations(dataset.variable_names()[v].clone()))
                })
                .collect::<Result<_>>()?,
        ),
    };
    let len = dataset.len();
    let records = dataset
        .records()
        .iter()
        .map(|r| {
            let mut values = r.values.clone();
            for v in 0..r.n_vars {
                let row = &mut values[v * len..(v + 1) * len];
                let mask = r.row_mask(v);
                let mut last: Option<f64> = None;
                for t in 0..len {
                    if mask[t] {
                        last = Some(row[t]);
                        continue;
                    }
                    row[t] = match strategy {
                        ImputeStrategy::Zero => 0.0,
                        ImputeStrategy::Mean => fill_means.as_ref().unwrap()[v],
                        ImputeStrategy::Locf => last.unwrap_or(fill_means.as_ref().unwrap()[v]),
                    };
                }
            }
            MtsRecord::complete(r.id.clone(), r.n_vars, len, values)
        })
        .collect::<Result<_>>()?;
    Ok(dataset.with_records(records))
}

/// Appends one fully observed `{0,1}` indicator variable per original variable.
pub fn concat_missingness_indicators(dataset: &MtsDataset) -> MtsDataset {
    let len = dataset.len();
    let records = dataset
        .records()
        .iter()
        .map(|r| {
            let mut values = r.values.clone();
            let mut mask = r.mask.clone();
            values.extend(r.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
            mask.extend(std::iter::repeat_n(true, r.mask.len()));
            MtsRecord {
                id: r.id.clone(),
                n_vars: 2 * r.n_vars,
                len,
                values,
                mask,
            }
        })
        .collect();
    let mut names = dataset.variable_names().to_vec();
    names.extend(
        dataset
            .variable_names()
            .iter()
            .map(|n| format!("{n}{INDICATOR_SUFFIX}")),
    );
    MtsDataset {
        records,
        labels: dataset.labels.clone(),
        variable_names: names,
        len,
    }
}
