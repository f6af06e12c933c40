//! Long-format event ingestion: `(sample_id, timestamp, variable, value)` rows
//! binned onto a fixed time grid.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MtsDataset, MtsRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongEvent {
    pub sample_id: String,
    pub timestamp: f64,
    pub variable: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    /// Events with `timestamp >= horizon`.
    pub dropped_after_horizon: usize,
    pub n_events: usize,
}

/// Reads a CSV with header `sample_id,timestamp,variable,value`.
pub fn read_long_events(path: impl AsRef<Path>) -> Result<Vec<LongEvent>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let expected = ["sample_id", "timestamp", "variable", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut events = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| row.get(i).unwrap_or_default();
        let number = |i: usize, what: &str| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("invalid {what} `{}`", field(i)),
                })
        };
        if row.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", row.len()),
            });
        }
        events.push(LongEvent {
            sample_id: field(0).to_string(),
            timestamp: number(1, "timestamp")?,
            variable: field(2).to_string(),
            value: number(3, "value")?,
        });
    }
    Ok(events)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths {
            len, expected_len, ..
        } => Error::Parse {
            line,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Bins events onto `n_bins` half-open intervals of width `horizon / n_bins`.
///
/// Co-binned events are averaged and empty bins are missing. Samples appear
/// in order of first occurrence; events at or after `horizon` are dropped and
/// counted in the report.
pub fn ingest_long_format(
    events: &[LongEvent],
    variables: &[String],
    n_bins: usize,
    horizon: f64,
) -> Result<(MtsDataset, IngestReport)> {
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be at least 1"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if events.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let var_index: HashMap<&str, usize> = variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();
    let n_vars = variables.len();

    let mut sample_index: HashMap<&str, usize> = HashMap::new();
    let mut samples: Vec<&str> = Vec::new();
    // (sum, count) per sample, per cell
    let mut acc: Vec<Vec<(f64, u32)>> = Vec::new();
    let mut report = IngestReport {
        n_events: events.len(),
        ..Default::default()
    };

    for e in events {
        let v = *var_index
            .get(e.variable.as_str())
            .ok_or_else(|| Error::UnknownVariable(e.variable.clone()))?;
        if !(e.timestamp >= 0.0) {
            return Err(Error::invalid(format!(
                "negative timestamp {} for sample `{}`",
                e.timestamp, e.sample_id
            )));
        }
        let s = *sample_index.entry(e.sample_id.as_str()).or_insert_with(|| {
            samples.push(e.sample_id.as_str());
            acc.push(vec![(0.0, 0); n_vars * n_bins]);
            samples.len() - 1
        });
        if e.timestamp >= horizon {
            report.dropped_after_horizon += 1;
            continue;
        }
        let bin = bin_of(e.timestamp, horizon, n_bins);
        let cell = &mut acc[s][v * n_bins + bin];
        cell.0 += e.value;
        cell.1 += 1;
    }
    if report.dropped_after_horizon > 0 {
        log::info!(
            "dropped {} events at or after horizon {horizon}",
            report.dropped_after_horizon
        );
    }

    let records = samples
        .iter()
        .zip(acc)
        .map(|(id, cells)| {
            let mask: Vec<bool> = cells.iter().map(|c| c.1 > 0).collect();
            let values = cells
                .iter()
                .map(|c| if c.1 > 0 { c.0 / c.1 as f64 } else { f64::NAN })
                .collect();
            MtsRecord::new(*id, n_vars, n_bins, values, mask)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        MtsDataset::new(records, None, variables.to_vec(), n_bins)?,
        report,
    ))
}

/// Half-open binning robust to rounding at exact boundaries `t * width`.
fn bin_of(timestamp: f64, horizon: f64, n_bins: usize) -> usize {
    let edge = |b: usize| b as f64 * horizon / n_bins as f64;
    let mut bin = (timestamp * n_bins as f64 / horizon).floor() as usize;
    if edge(bin + 1) <= timestamp {
        bin += 1;
    } else if bin > 0 && edge(bin) > timestamp {
        bin -= 1;
    }
    bin.min(n_bins - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(id: &str, ts: f64, var: &str, value: f64) -> LongEvent {
        LongEvent {
            sample_id: id.into(),
            timestamp: ts,
            variable: var.into(),
            value,
        }
    }

    fn vocab() -> Vec<String> {
        vec!["HR".into(), "Lactate".into()]
    }

    #[test]
    fn averages_co_binned_events() {
        let events = [ev("p1", 0.2, "HR", 60.0), ev("p1", 0.7, "HR", 80.0)];
        let (d, report) = ingest_long_format(&events, &vocab(), 48, 48.0).unwrap();
        assert_eq!(d.len(), 48);
        assert_eq!(d.record(0).get(0, 0), Some(70.0));
        assert!(d.record(0).row_mask(1).iter().all(|&m| !m));
        assert_eq!(report.dropped_after_horizon, 0);
    }

    #[test]
    fn late_event_lands_in_last_bin() {
        let events = [ev("p1", 47.5, "HR", 1.0), ev("p1", 48.0, "HR", 2.0)];
        let (d, report) = ingest_long_format(&events, &vocab(), 48, 48.0).unwrap();
        assert_eq!(d.record(0).get(0, 47), Some(1.0));
        assert_eq!(report.dropped_after_horizon, 1);
    }

    #[test]
    fn boundary_belongs_to_upper_bin() {
        assert_eq!(bin_of(0.3, 1.0, 10), 3);
        assert_eq!(bin_of(0.7, 1.0, 10), 7);
        assert_eq!(bin_of(0.0, 1.0, 10), 0);
        assert_eq!(bin_of(2.0, 48.0, 48), 2);
        assert_eq!(bin_of(47.5, 48.0, 48), 47);
    }

    #[test]
    fn rejects_unknown_variable_and_empty_input() {
        let events = [ev("p1", 1.0, "SpO2", 97.0)];
        match ingest_long_format(&events, &vocab(), 4, 4.0) {
            Err(Error::UnknownVariable(name)) => assert_eq!(name, "SpO2"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            ingest_long_format(&[], &vocab(), 4, 4.0),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn keeps_sample_order() {
        let events = [
            ev("b", 0.0, "HR", 1.0),
            ev("a", 0.0, "HR", 2.0),
            ev("b", 1.0, "HR", 3.0),
        ];
        let (d, _) = ingest_long_format(&events, &vocab(), 2, 2.0).unwrap();
        assert_eq!(d.record(0).id(), "b");
        assert_eq!(d.record(1).id(), "a");
        assert_eq!(d.record(0).get(0, 1), Some(3.0));
    }
}
