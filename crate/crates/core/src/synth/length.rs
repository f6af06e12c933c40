use crate::dataset::{MtsDataset, MtsRecord};
use crate::error::{Error, Result};

/// Target number of windows.
const TARGET_WINDOWS: usize = 25;

/// Window width `ceil(T_max / 25)` of the length transform.
pub fn window_size(t_max: usize) -> Result<usize> {
    if t_max == 0 {
        return Err(Error::invalid("longest series has length 0"));
    }
    Ok(t_max.div_ceil(TARGET_WINDOWS))
}

/// Output length `ceil(T_max / ceil(T_max / 25))`.
pub fn target_length(t_max: usize) -> Result<usize> {
    Ok(t_max.div_ceil(window_size(t_max)?))
}

/// Brings records of different native lengths to a common length by
/// averaging the observed cells of consecutive windows.
///
/// `native_lengths[n]` is the length of record `n`; cells at or beyond it
/// are treated as missing padding. Windows without observed cells stay
/// missing.
pub fn transform_lengths(dataset: &MtsDataset, native_lengths: &[usize]) -> Result<MtsDataset> {
    if native_lengths.len() != dataset.n_records() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} lengths", dataset.n_records()),
            found: native_lengths.len().to_string(),
        });
    }
    let t_max = native_lengths.iter().copied().max().unwrap_or(0);
    if t_max > dataset.len() {
        return Err(Error::invalid(format!(
            "native length {t_max} exceeds the stored length {}",
            dataset.len()
        )));
    }
    let w = window_size(t_max)?;
    let out_len = t_max.div_ceil(w);
    let n_vars = dataset.n_vars();
    let records = dataset
        .records()
        .iter()
        .zip(native_lengths)
        .map(|(r, &native)| {
            let mut values = Vec::with_capacity(n_vars * out_len);
            let mut mask = Vec::with_capacity(n_vars * out_len);
            for v in 0..n_vars {
                for j in 0..out_len {
                    let window = j * w..((j + 1) * w).min(native);
                    let (sum, count) = window
                        .filter_map(|t| r.get(v, t))
                        .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
                    mask.push(count > 0);
                    values.push(if count > 0 {
                        sum / count as f64
                    } else {
                        f64::NAN
                    });
                }
            }
            MtsRecord::new(r.id(), n_vars, out_len, values, mask)
        })
        .collect::<Result<Vec<_>>>()?;
    MtsDataset::new(
        records,
        dataset.labels().map(<[_]>::to_vec),
        dataset.variable_names().to_vec(),
        out_len,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_lengths() {
        assert_eq!(target_length(315).unwrap(), 25);
        assert_eq!(target_length(205).unwrap(), 23);
        assert_eq!(target_length(198).unwrap(), 25);
        assert_eq!(target_length(29).unwrap(), 15);
        assert_eq!(target_length(25).unwrap(), 25);
        assert!(target_length(0).is_err());
    }

    #[test]
    fn window_means_and_padding() {
        // T_max = 29 -> w = 2, T = 15
        let long = MtsRecord::complete("a", 1, 29, (0..29).map(f64::from).collect()).unwrap();
        let mut cells: Vec<Option<f64>> = (0..29)
            .map(|t| (t < 3).then_some(t as f64 * 10.0))
            .collect();
        cells[1] = None;
        let short = MtsRecord::from_rows("b", &[cells]).unwrap();
        let d = MtsDataset::unnamed(vec![long, short], Some(vec![1, 2]), 1, 29).unwrap();
        let out = transform_lengths(&d, &[29, 3]).unwrap();
        assert_eq!(out.len(), 15);
        assert_eq!(out.record(0).get(0, 0), Some(0.5));
        assert_eq!(out.record(0).get(0, 14), Some(28.0));
        assert_eq!(out.record(1).get(0, 0), Some(0.0));
        assert_eq!(out.record(1).get(0, 1), Some(20.0));
        assert!((2..15).all(|t| out.record(1).get(0, t).is_none()));
        assert_eq!(out.labels(), Some(&[1, 2][..]));
    }
}
