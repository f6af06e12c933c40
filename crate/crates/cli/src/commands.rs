use std::collections::HashMap;
use std::fs;
use std::path::Path;

use tckim_core::dataset::{
    drop_high_missing_variables, ingest_long_format, load_dataset, missing_rates, read_long_events,
    write_dataset,
};
use tckim_core::eval::EmbeddingFormat;
use tckim_core::eval::{
    evaluate_pipeline, kernel_rank, kpca_fit, write_embedding_csv, write_embedding_svg,
};
use tckim_core::kernel::{kernel_within, load_model, train_tck_im, write_gram, write_model};
use tckim_core::synth::{inject_with, TUNE_TOLERANCE};
use tckim_core::{Label, MtsDataset};

use crate::benchmark::{run_benchmark, BenchmarkSpec};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::{BenchmarkArgs, EmbedArgs, EvaluateArgs, IngestArgs, InjectArgs, TrainArgs};

/// Largest per-variable deviation from the target accepted by `inject`.
const INJECT_TOLERANCE: f64 = 0.01;

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn load(path: &Path) -> CliResult<MtsDataset> {
    load_dataset(path).map_err(|e| match e {
        tckim_core::Error::Io(io) => {
            CliError::Input(format!("cannot read {}: {io}", path.display()))
        }
        other => CliError::Input(format!("{}: {other}", path.display())),
    })
}

fn read_labels(path: &Path) -> CliResult<HashMap<String, Label>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "sample_id,label" => {}
        _ => {
            return Err(CliError::Input(format!(
                "{}: line 1: expected header `sample_id,label`",
                path.display()
            )))
        }
    }
    let mut labels = HashMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || {
            CliError::Input(format!(
                "{}: line {}: expected `sample_id,label`",
                path.display(),
                i + 1
            ))
        };
        let (id, label) = line.split_once(',').ok_or_else(bad)?;
        let label: Label = label.trim().parse().map_err(|_| bad())?;
        if labels.insert(id.trim().to_string(), label).is_some() {
            return Err(CliError::Input(format!(
                "{}: line {}: duplicate sample `{}`",
                path.display(),
                i + 1,
                id.trim()
            )));
        }
    }
    Ok(labels)
}

pub fn ingest(args: IngestArgs) -> CliResult<()> {
    let events = read_long_events(&args.events)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.events.display())))?;
    let variables = match args.variables {
        Some(v) => v,
        None => {
            let mut seen = Vec::new();
            for e in &events {
                if !seen.contains(&e.variable) {
                    seen.push(e.variable.clone());
                }
            }
            seen
        }
    };
    let (mut dataset, report) = ingest_long_format(&events, &variables, args.bins, args.horizon)?;
    if report.dropped_after_horizon > 0 {
        log::warn!(
            "{} events at or after the horizon were dropped",
            report.dropped_after_horizon
        );
    }
    if let Some(path) = &args.labels {
        let table = read_labels(path)?;
        let labels = dataset
            .records()
            .iter()
            .map(|r| {
                table
                    .get(r.id())
                    .copied()
                    .ok_or_else(|| CliError::Input(format!("no label for sample `{}`", r.id())))
            })
            .collect::<CliResult<Vec<_>>>()?;
        dataset = dataset.with_labels(Some(labels))?;
    }
    if let Some(threshold) = args.drop_missing_above {
        let (kept, dropped) = drop_high_missing_variables(&dataset, threshold)?;
        if !dropped.is_empty() {
            println!("dropped variables: {}", dropped.join(","));
        }
        dataset = kept;
    }
    let (rates, overall) = missing_rates(&dataset)?;
    println!("variable,missing_rate");
    for (name, rate) in dataset.variable_names().iter().zip(&rates) {
        println!("{name},{rate:.4}");
    }
    println!("overall,{overall:.4}");
    write(&args.out, &write_dataset(&dataset))
}

pub fn inject(args: InjectArgs) -> CliResult<()> {
    let dataset = load(&args.dataset)?;
    if dataset.labels().is_none() {
        return Err(CliError::Input(format!(
            "{} has no labels",
            args.dataset.display()
        )));
    }
    let (injected, report) = inject_with(&dataset, args.scheme, args.rho, args.seed, args.signs)?;
    print!("{}", report.to_text());
    let deviation = report.max_deviation();
    if deviation > INJECT_TOLERANCE {
        return Err(CliError::Infeasible(format!(
            "realized correlations {:?} miss the target {} by up to {deviation:.4} (tuning tolerance {TUNE_TOLERANCE})",
            report.realized, args.rho
        )));
    }
    write(&args.out, &write_dataset(&injected))?;
    if let Some(path) = &args.report {
        write(path, &report.to_text())?;
    }
    Ok(())
}

pub fn train(args: TrainArgs) -> CliResult<()> {
    let settings = RunConfig::resolve(args.settings, args.config.as_deref())?;
    let config = settings.ensemble()?;
    let dataset = load(&args.dataset)?;
    let (trained, gram) = train_tck_im(&dataset, &config)?;
    println!(
        "trained {} of {} base models ({} mode)",
        trained.models.len(),
        trained.planned,
        config.mode
    );
    let model = write_model(&trained)?;
    write(&args.model_out, &model)?;
    write(&args.gram_out, &write_gram(&gram))
}

pub fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    let settings = RunConfig::resolve(args.settings, args.config.as_deref())?;
    let config = settings.ensemble()?;
    let options = settings.eval_options()?;
    let protocol = settings.protocol()?;
    let dataset = load(&args.dataset)?;
    if dataset.labels().is_none() {
        return Err(CliError::Input(format!(
            "{} has no labels",
            args.dataset.display()
        )));
    }
    let report = evaluate_pipeline(&dataset, &config, protocol, &options, config.seed)?;
    println!("{:<12} {:>8} {:>8}", "metric", "mean", "se");
    for (name, s) in [
        ("sensitivity", report.sensitivity),
        ("specificity", report.specificity),
        ("f1", report.f1),
        ("precision", report.precision),
        ("accuracy", report.accuracy),
    ] {
        println!("{name:<12} {:>8.4} {:>8.4}", s.mean, s.se);
    }
    if report.degenerate_folds() > 0 {
        log::warn!(
            "{} folds had an empty denominator in some metric",
            report.degenerate_folds()
        );
    }
    let audit = match &args.audit_out {
        Some(_) => Some(
            serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Input(format!("cannot encode report: {e}")))?,
        ),
        None => None,
    };
    write(&args.report_out, &report.to_text())?;
    if let (Some(path), Some(text)) = (&args.audit_out, audit) {
        write(path, &text)?;
    }
    Ok(())
}

pub fn benchmark(args: BenchmarkArgs) -> CliResult<()> {
    let settings = RunConfig::resolve(args.settings, args.config.as_deref())?;
    let config = settings.ensemble()?;
    if args.seeds == 0 || args.rhos.is_empty() || args.schemes.is_empty() || args.modes.is_empty() {
        return Err(CliError::Input(
            "benchmark needs at least one seed, rho, scheme and mode".into(),
        ));
    }
    if !args.out_dir.is_dir() {
        return Err(CliError::Input(format!(
            "{} is not a directory",
            args.out_dir.display()
        )));
    }
    let spec = BenchmarkSpec {
        seeds: (0..args.seeds).map(|i| config.seed + i).collect(),
        rhos: args.rhos,
        schemes: args.schemes,
        modes: args.modes,
        n_records: args.n_records,
        n_vars: args.n_vars,
        len: args.len,
        separation: args.separation,
        protocol: settings.protocol()?,
        options: settings.eval_options()?,
        config,
    };
    let table = run_benchmark(&spec)?;
    let grid = table.grid_csv();
    print!("{grid}");
    write(&args.out_dir.join("accuracy.csv"), &grid)?;
    write(&args.out_dir.join("runs.csv"), &table.runs_csv())
}

pub fn embed(args: EmbedArgs) -> CliResult<()> {
    if args.dim == 0 {
        return Err(CliError::Input("dim must be at least 1".into()));
    }
    if args.format == EmbeddingFormat::Svg && args.dim < 2 {
        return Err(CliError::Input("an SVG scatter needs dim >= 2".into()));
    }
    let trained = load_model(&args.model)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.model.display())))?;
    let dataset = load(&args.dataset)?;
    let gram = kernel_within(&trained, &dataset, args.workers)?;
    let rank = kernel_rank(&gram)?;
    let dim = args.dim.min(rank);
    if dim < args.dim {
        log::warn!(
            "kernel rank {rank} is below the requested dimension {}; using {dim}",
            args.dim
        );
    }
    let (_, embedding) = kpca_fit(&gram, dim)?;
    let ids: Vec<String> = dataset
        .records()
        .iter()
        .map(|r| r.id().to_string())
        .collect();
    let text = match args.format {
        EmbeddingFormat::Csv => write_embedding_csv(&embedding, &ids, dataset.labels())?,
        EmbeddingFormat::Svg => write_embedding_svg(&embedding, &ids, dataset.labels())?,
    };
    write(&args.out, &text)
}
