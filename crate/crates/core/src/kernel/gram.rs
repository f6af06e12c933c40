use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::dataset::MtsDataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GramKind {
    /// Training records against themselves (`N x N`).
    InSample,
    /// Training records (rows) against test records (columns).
    Cross,
}

impl GramKind {
    fn tag(self) -> &'static str {
        match self {
            GramKind::InSample => "in",
            GramKind::Cross => "cross",
        }
    }
}

/// Dense kernel matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    kind: GramKind,
    rows: usize,
    cols: usize,
    /// Number of base models summed into the entries.
    models: usize,
    entries: Vec<f64>,
}

impl GramMatrix {
    pub fn new(
        kind: GramKind,
        rows: usize,
        cols: usize,
        models: usize,
        entries: Vec<f64>,
    ) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{} entries", rows * cols),
                found: entries.len().to_string(),
            });
        }
        if kind == GramKind::InSample && rows != cols {
            return Err(Error::invalid("an in-sample Gram matrix must be square"));
        }
        Ok(Self {
            kind,
            rows,
            cols,
            models,
            entries,
        })
    }

    pub(crate) fn zeros(kind: GramKind, rows: usize, cols: usize) -> Self {
        Self {
            kind,
            rows,
            cols,
            models: 0,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn kind(&self) -> GramKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn models(&self) -> usize {
        self.models
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.entries)
    }

    /// Sub-matrix with the given rows and columns.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> GramMatrix {
        let kind = if rows == cols {
            self.kind
        } else {
            GramKind::Cross
        };
        let entries = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| self.get(i, j)))
            .collect();
        GramMatrix {
            kind,
            rows: rows.len(),
            cols: cols.len(),
            models: self.models,
            entries,
        }
    }

    pub(crate) fn add_at(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.cols + j] += value;
    }

    pub(crate) fn set_models(&mut self, models: usize) {
        self.models = models;
    }
}

/// Text form: a `#gram kind=<in|cross> rows=<N> cols=<M> models=<Q>` header
/// followed by one comma-separated line per row. Values carry 17 significant
/// digits, enough to round-trip every `f64`.
pub fn write_gram(gram: &GramMatrix) -> String {
    let mut out = format!(
        "#gram kind={} rows={} cols={} models={}\n",
        gram.kind.tag(),
        gram.rows,
        gram.cols,
        gram.models
    );
    for i in 0..gram.rows {
        for (j, x) in gram.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_gram(text: &str) -> Result<GramMatrix> {
    let perr = |line: usize, message: String| Error::Parse { line, message };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let rest = header
        .strip_prefix("#gram")
        .ok_or_else(|| perr(1, "expected `#gram` header".into()))?;
    let (mut kind, mut rows, mut cols, mut models) = (None, None, None, None);
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| perr(1, format!("malformed header field `{field}`")))?;
        let number = || {
            value
                .parse::<usize>()
                .map_err(|_| perr(1, format!("bad value in `{field}`")))
        };
        match key {
            "kind" => {
                kind = Some(match value {
                    "in" => GramKind::InSample,
                    "cross" => GramKind::Cross,
                    _ => return Err(perr(1, format!("unknown kind `{value}`"))),
                })
            }
            "rows" => rows = Some(number()?),
            "cols" => cols = Some(number()?),
            "models" => models = Some(number()?),
            _ => return Err(perr(1, format!("unknown header key `{key}`"))),
        }
    }
    let (Some(kind), Some(rows), Some(cols), Some(models)) = (kind, rows, cols, models) else {
        return Err(perr(
            1,
            "header must define kind, rows, cols and models".into(),
        ));
    };
    let mut entries = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            // a row of a zero-column matrix is an empty line
            if cols == 0 && seen < rows {
                seen += 1;
            }
            continue;
        }
        seen += 1;
        let before = entries.len();
        for cell in line.split(',') {
            let x: f64 = cell
                .trim()
                .parse()
                .map_err(|_| perr(lineno, format!("non-numeric entry `{}`", cell.trim())))?;
            entries.push(x);
        }
        if entries.len() - before != cols {
            return Err(perr(
                lineno,
                format!("expected {cols} entries, found {}", entries.len() - before),
            ));
        }
    }
    if seen != rows {
        return Err(perr(
            text.lines().count(),
            format!("expected {rows} rows, found {seen}"),
        ));
    }
    GramMatrix::new(kind, rows, cols, models, entries)
}

pub fn save_gram(gram: &GramMatrix, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_gram(gram))?;
    Ok(())
}

pub fn load_gram(path: impl AsRef<Path>) -> Result<GramMatrix> {
    parse_gram(&std::fs::read_to_string(path)?)
}

/// `K[n, m] = <vec(X_n), vec(X_m)>` for fully observed data.
pub fn linear_kernel(dataset: &MtsDataset) -> Result<GramMatrix> {
    if let Some(r) = dataset
        .records()
        .iter()
        .find(|r| r.mask().iter().any(|&m| !m))
    {
        return Err(Error::invalid(format!(
            "linear kernel needs complete data; record `{}` has missing cells (impute first)",
            r.id()
        )));
    }
    let n = dataset.n_records();
    let mut gram = GramMatrix::zeros(GramKind::InSample, n, n);
    for i in 0..n {
        for j in i..n {
            let a = dataset.record(i).values();
            let b = dataset.record(j).values();
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            gram.entries[i * n + j] = dot;
            gram.entries[j * n + i] = dot;
        }
    }
    Ok(gram)
}
