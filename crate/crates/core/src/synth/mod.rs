//! Synthetic benchmarks: length normalization, label-correlated missingness
//! injection and a labeled Gaussian toy generator.

mod inject;
mod length;

pub use inject::{
    draw_signs, inject_label_rate, inject_mnar_threshold, inject_with, tune_e, InjectionReport,
    Scheme, SignMode, TUNE_TOLERANCE,
};
pub use length::{target_length, transform_lengths, window_size};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Label, MtsDataset, MtsRecord};
use crate::error::{Error, Result};

/// Fully observed labeled data: class `c` of variable `v` follows
/// `separation * sin(2 pi t / T + v pi / 3 + (c - 1) pi / n_classes)` plus
/// unit Gaussian noise. Labels are `1..=n_classes`, assigned round-robin.
pub fn make_gaussian_toy(
    n_records: usize,
    n_vars: usize,
    len: usize,
    n_classes: usize,
    separation: f64,
    seed: u64,
) -> Result<MtsDataset> {
    if n_records == 0 || n_vars == 0 || len == 0 || n_classes == 0 {
        return Err(Error::invalid("toy dimensions must be positive"));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::invalid(format!(
            "class separation must be a non-negative number, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<Label> = (0..n_records)
        .map(|i| (i % n_classes) as Label + 1)
        .collect();
    let records = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let phase = (label - 1) as f64 * PI / n_classes as f64;
            let values = (0..n_vars)
                .flat_map(|v| (0..len).map(move |t| (v, t)))
                .map(|(v, t)| {
                    let angle = 2.0 * PI * t as f64 / len as f64 + v as f64 * PI / 3.0 + phase;
                    let noise: f64 = rng.sample(StandardNormal);
                    separation * angle.sin() + noise
                })
                .collect();
            MtsRecord::complete(i.to_string(), n_vars, len, values)
        })
        .collect::<Result<Vec<_>>>()?;
    let names = (0..n_vars).map(|v| format!("x{}", v + 1)).collect();
    MtsDataset::new(records, Some(labels), names, len)
}
