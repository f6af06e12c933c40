//! Text dataset format.
//!
//! ```text
//! #mts N=<n> V=<v> T=<t>
//! name_1,...,name_V
//! #labels l_1,...,l_N        (optional)
//! <N blocks of V rows, T comma-separated cells; missing cells are NA>
//! ```
//!
//! Values are written with the shortest representation that round-trips, so
//! `parse_dataset(write_dataset(d)) == d` holds bit for bit. Record ids are
//! not stored; loaded records are numbered `0..N`.

use std::fmt::Write as _;
use std::path::Path;

use super::{Label, MtsDataset, MtsRecord};
use crate::error::{Error, Result};

pub const MISSING_TOKEN: &str = "NA";

pub fn write_dataset(dataset: &MtsDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "#mts N={} V={} T={}",
        dataset.n_records(),
        dataset.n_vars(),
        dataset.len()
    );
    out.push_str(&dataset.variable_names().join(","));
    out.push('\n');
    if let Some(labels) = dataset.labels() {
        let joined: Vec<String> = labels.iter().map(Label::to_string).collect();
        let _ = writeln!(out, "#labels {}", joined.join(","));
    }
    for r in dataset.records() {
        for v in 0..r.n_vars() {
            let cells: Vec<String> = (0..r.len())
                .map(|t| match r.get(v, t) {
                    Some(x) => x.to_string(),
                    None => MISSING_TOKEN.to_string(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn save_dataset(dataset: &MtsDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_dataset(dataset))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<MtsDataset> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: &str) -> Result<(usize, usize, usize)> {
    let rest = line
        .strip_prefix("#mts")
        .ok_or_else(|| parse_err(1, "expected header `#mts N=<n> V=<v> T=<t>`"))?;
    let (mut n, mut v, mut t) = (None, None, None);
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field `{field}`")))?;
        let value: usize = value
            .parse()
            .map_err(|_| parse_err(1, format!("non-integer header value `{field}`")))?;
        match key {
            "N" => n = Some(value),
            "V" => v = Some(value),
            "T" => t = Some(value),
            _ => return Err(parse_err(1, format!("unknown header key `{key}`"))),
        }
    }
    match (n, v, t) {
        (Some(n), Some(v), Some(t)) => Ok((n, v, t)),
        _ => Err(parse_err(1, "header must define N, V and T")),
    }
}

pub fn parse_dataset(text: &str) -> Result<MtsDataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let (n, n_vars, len) = parse_header(header)?;

    let (_, names_line) = lines
        .next()
        .ok_or_else(|| parse_err(2, "missing variable-name line"))?;
    let names: Vec<String> = if names_line.is_empty() {
        Vec::new()
    } else {
        names_line
            .split(',')
            .map(|s| s.trim().to_string())
            .collect()
    };
    if names.len() != n_vars {
        return Err(parse_err(
            2,
            format!("expected {n_vars} variable names, found {}", names.len()),
        ));
    }

    let mut labels: Option<Vec<Label>> = None;
    let mut rows: Vec<(usize, &str)> = Vec::with_capacity(n * n_vars);
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#labels") {
            if labels.is_some() || !rows.is_empty() {
                return Err(parse_err(lineno, "labels line must precede data rows"));
            }
            let parsed = rest
                .trim()
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| s.trim().parse::<Label>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(lineno, format!("bad label: {e}")))?;
            if parsed.len() != n {
                return Err(parse_err(
                    lineno,
                    format!("expected {n} labels, found {}", parsed.len()),
                ));
            }
            labels = Some(parsed);
            continue;
        }
        rows.push((lineno, line));
    }

    let last_line = rows.last().map_or(2, |r| r.0);
    if n_vars == 0 || !rows.len().is_multiple_of(n_vars) {
        return Err(parse_err(
            last_line,
            format!("{} data rows is not a multiple of V={n_vars}", rows.len()),
        ));
    }
    if rows.len() != n * n_vars {
        return Err(parse_err(
            last_line,
            format!(
                "expected {} data rows for N={n}, found {}",
                n * n_vars,
                rows.len()
            ),
        ));
    }

    let mut records = Vec::with_capacity(n);
    for (idx, block) in rows.chunks(n_vars.max(1)).enumerate() {
        let mut values = Vec::with_capacity(n_vars * len);
        let mut mask = Vec::with_capacity(n_vars * len);
        for &(lineno, line) in block {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != len {
                return Err(parse_err(
                    lineno,
                    format!("expected {len} cells, found {}", cells.len()),
                ));
            }
            for cell in cells {
                let cell = cell.trim();
                if cell == MISSING_TOKEN {
                    values.push(f64::NAN);
                    mask.push(false);
                } else {
                    let x: f64 = cell
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("non-numeric cell `{cell}`")))?;
                    if !x.is_finite() {
                        return Err(parse_err(lineno, format!("non-finite cell `{cell}`")));
                    }
                    values.push(x);
                    mask.push(true);
                }
            }
        }
        records.push(MtsRecord::new(idx.to_string(), n_vars, len, values, mask)?);
    }
    MtsDataset::new(records, labels, names, len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_missing_token() {
        let text = "#mts N=1 V=2 T=3\na,b\n1,NA,3\nNA,NA,0.5\n";
        let d = parse_dataset(text).unwrap();
        assert_eq!(d.record(0).get(0, 1), None);
        assert_eq!(d.record(0).get(1, 2), Some(0.5));
        assert!(d.labels().is_none());
    }

    #[test]
    fn row_count_not_divisible_reports_line() {
        let text = "#mts N=2 V=2 T=2\na,b\n#labels 1,2\n1,2\n3,4\n5,6\n";
        match parse_dataset(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_row_reports_line() {
        let text = "#mts N=1 V=2 T=2\na,b\n1,2\n3\n";
        match parse_dataset(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_header_and_cells() {
        assert!(matches!(
            parse_dataset("mts N=1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        let text = "#mts N=1 V=1 T=2\na\n1,abc\n";
        assert!(matches!(
            parse_dataset(text),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn labels_roundtrip() {
        let text = "#mts N=2 V=1 T=2\nhr\n#labels 1,2\n0.1,NA\n-0.25,2\n";
        let d = parse_dataset(text).unwrap();
        assert_eq!(d.labels(), Some(&[1, 2][..]));
        assert_eq!(write_dataset(&d), text);
    }
}
