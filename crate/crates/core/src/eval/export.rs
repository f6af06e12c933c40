use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Csv,
    Svg,
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "svg" | "svg_scatter" => Ok(Self::Svg),
            _ => Err(Error::invalid(format!(
                "unknown embedding format `{s}` (expected csv or svg)"
            ))),
        }
    }
}

fn check(embedding: &DMatrix<f64>, ids: &[String], labels: Option<&[Label]>) -> Result<()> {
    let n = embedding.nrows();
    if ids.len() != n || labels.is_some_and(|l| l.len() != n) {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} ids and labels"),
            found: format!("{} ids", ids.len()),
        });
    }
    Ok(())
}

/// `id,dim1,...,dimd,label`; the label column is empty for unlabeled data.
pub fn write_embedding_csv(
    embedding: &DMatrix<f64>,
    ids: &[String],
    labels: Option<&[Label]>,
) -> Result<String> {
    check(embedding, ids, labels)?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend((1..=embedding.ncols()).map(|j| format!("dim{j}")));
    header.push("label".into());
    let io = |e: csv::Error| Error::Format(e.to_string());
    writer.write_record(&header).map_err(io)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(embedding.row(i).iter().map(|x| x.to_string()));
        row.push(labels.map(|l| l[i].to_string()).unwrap_or_default());
        writer.write_record(&row).map_err(io)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Scatter plot of the first two embedding dimensions, colored by label.
pub fn write_embedding_svg(
    embedding: &DMatrix<f64>,
    ids: &[String],
    labels: Option<&[Label]>,
) -> Result<String> {
    check(embedding, ids, labels)?;
    if embedding.ncols() < 2 {
        return Err(Error::invalid(
            "an SVG scatter needs at least two embedding dimensions",
        ));
    }
    let (size, margin) = (480.0, 30.0);
    let range = |j: usize| {
        let col = embedding.column(j);
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else {
            (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0)
        }
    };
    let (x_range, y_range) = (range(0), range(1));
    let scale =
        |v: f64, (lo, hi): (f64, f64)| margin + (v - lo) / (hi - lo) * (size - 2.0 * margin);

    let mut classes: Vec<Label> = labels.map(<[Label]>::to_vec).unwrap_or_default();
    classes.sort_unstable();
    classes.dedup();
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..embedding.nrows() {
        let color = match labels {
            Some(l) => PALETTE[classes.binary_search(&l[i]).unwrap_or(0) % PALETTE.len()],
            None => PALETTE[0],
        };
        let x = scale(embedding[(i, 0)], x_range);
        let y = size - scale(embedding[(i, 1)], y_range);
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}" fill-opacity="0.8"/>"#
        );
    }
    for (c, label) in classes.iter().enumerate() {
        let y = 16.0 + 14.0 * c as f64;
        let color = PALETTE[c % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<circle cx="10" cy="{}" r="4" fill="{color}"/>"#,
            y - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{y}" font-family="sans-serif" font-size="11">{label}</text>"#
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn export_embedding(
    embedding: &DMatrix<f64>,
    ids: &[String],
    labels: Option<&[Label]>,
    path: impl AsRef<Path>,
    format: EmbeddingFormat,
) -> Result<()> {
    let text = match format {
        EmbeddingFormat::Csv => write_embedding_csv(embedding, ids, labels)?,
        EmbeddingFormat::Svg => write_embedding_svg(embedding, ids, labels)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}
