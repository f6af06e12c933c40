//! Acceptance suite: one pass/fail line per criterion. Exits nonzero if any
//! criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tckim_cli::{run_benchmark, BenchmarkSpec};
use tckim_core::dataset::save_dataset;
use tckim_core::eval::{kpca_fit, kpca_project, metrics, EvalOptions, Metrics, Protocol};
use tckim_core::kernel::{kernel_test, train_tck_im, ComponentRange, EnsembleConfig, Mode};
use tckim_core::mixture::{
    compute_prior_stats, e_step, fit_map_em, m_step, InitSpec, MaskModel, MixtureHyperparams,
    MixtureParams, Posteriors, PriorStats, StoppingRule, BETA_EPS,
};
use tckim_core::synth::{inject_label_rate, make_gaussian_toy, target_length, Scheme};
use tckim_core::{MtsDataset, MtsRecord};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, v: usize, t: usize, missing: f64) -> MtsDataset {
    let records = (0..n)
        .map(|i| {
            let mut values = Vec::with_capacity(v * t);
            let mut mask = Vec::with_capacity(v * t);
            for _ in 0..v * t {
                let observed = rng.random::<f64>() >= missing;
                values.push(if observed {
                    rng.random_range(-3.0..3.0)
                } else {
                    f64::NAN
                });
                mask.push(observed);
            }
            MtsRecord::new(i.to_string(), v, t, values, mask).unwrap()
        })
        .collect();
    MtsDataset::unnamed(records, None, v, t).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, g: usize, v: usize, t: usize) -> MixtureParams {
    let raw: Vec<f64> = (0..g).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    MixtureParams::new(
        g,
        v,
        t,
        raw.iter().map(|x| x / total).collect(),
        (0..g * v * t)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect(),
        (0..g * v).map(|_| rng.random_range(0.1..4.0)).collect(),
        (0..g * v * t)
            .map(|_| rng.random_range(0.02..0.98))
            .collect(),
    )
    .unwrap()
}

/// Hyperparameters drawn like the ensemble draws them for `n` records.
fn random_hyperparams(rng: &mut ChaCha8Rng, n: usize) -> MixtureHyperparams {
    MixtureHyperparams {
        a0: rng.random_range(0.001..1.0),
        b0: rng.random_range(0.005..0.2),
        c0: rng.random_range(0.1..2.0) / n as f64,
        d0: rng.random_range(0.1..2.0) / n as f64,
        n0: rng.random_range(0.001..0.2),
    }
}

fn criterion_1() -> Outcome {
    let got: Vec<usize> = [315, 205, 198, 29]
        .iter()
        .map(|&t| target_length(t).unwrap())
        .collect();
    check(
        got == [25, 23, 25, 15],
        format!("T_max 315/205/198/29 -> {got:?}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let (n, g, v, t) = (
            rng.random_range(1..=30),
            rng.random_range(1..=5),
            rng.random_range(1..=4),
            rng.random_range(1..=12),
        );
        let missing = rng.random_range(0.0..0.9);
        let d = random_dataset(&mut rng, n, v, t, missing);
        let p = random_params(&mut rng, g, v, t);
        let mode = if i % 2 == 0 {
            MaskModel::Bernoulli
        } else {
            MaskModel::Ignored
        };
        let post = e_step(&d, &p, mode).map_err(|e| format!("instance {i}: {e}"))?;
        for row in post.rows() {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    check(
        worst <= 1e-12,
        format!("200 instances, max |row sum - 1| = {worst:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..20 {
        let d = random_dataset(&mut rng, 40, 2, 10, 0.5);
        let g = 2 + i % 2;
        let hp = random_hyperparams(&mut rng, 40);
        let mode = if i < 10 {
            MaskModel::Bernoulli
        } else {
            MaskModel::Ignored
        };
        let stop = StoppingRule {
            max_iterations: 50,
            tolerance: 0.0,
        };
        let fit = fit_map_em(&d, g, &hp, &InitSpec::RandomRecords, stop, i as u64, mode)
            .map_err(|e| format!("instance {i}: {e}"))?;
        for w in fit.objective_trace.windows(2) {
            // drop relative to the previous value; must stay below the slack
            worst = worst.max((w[0] - w[1]) / w[0].abs().max(1.0));
        }
    }
    check(
        worst <= 1e-8,
        format!("20 fits, largest relative decrease {worst:.2e}"),
    )
}

/// Expected complete-data log-posterior, written out cell by cell.
fn q_function(
    d: &MtsDataset,
    post: &Posteriors,
    p: &Params,
    priors: &PriorStats,
    k_inv: &DMatrix<f64>,
    log_det_k: f64,
    hp: &MixtureHyperparams,
) -> f64 {
    let (g_count, t_len) = (p.theta.len(), d.len());
    let mut q = 0.0;
    for (n, record) in d.records().iter().enumerate() {
        for g in 0..g_count {
            let mut ll = p.theta[g].ln();
            for t in 0..t_len {
                let (mu, beta) = (p.mu[g * t_len + t], p.beta[g * t_len + t]);
                match record.get(0, t) {
                    Some(x) => {
                        ll += -0.5 * (2.0 * PI * p.sigma2[g]).ln()
                            - (x - mu).powi(2) / (2.0 * p.sigma2[g]);
                        ll += beta.ln();
                    }
                    None => ll += (1.0 - beta).ln(),
                }
            }
            q += post.row(n)[g] * ll;
        }
    }
    let s = priors.std(0);
    let m = DVector::from_column_slice(priors.mean(0));
    for g in 0..g_count {
        let diff = DVector::from_column_slice(&p.mu[g * t_len..(g + 1) * t_len]) - &m;
        let quad = (diff.transpose() * k_inv * &diff)[(0, 0)] / s;
        q += -0.5 * (t_len as f64 * (2.0 * PI * s).ln() + log_det_k + quad);
        q += -0.5 * hp.n0 * p.sigma2[g].ln() - hp.n0 * s * s / (2.0 * p.sigma2[g]);
        for t in 0..t_len {
            let b = p.beta[g * t_len + t];
            q += (hp.c0 - 1.0) * b.ln() + (hp.d0 - 1.0) * (1.0 - b).ln();
        }
    }
    q
}

#[derive(Clone)]
struct Params {
    theta: Vec<f64>,
    mu: Vec<f64>,
    sigma2: Vec<f64>,
    beta: Vec<f64>,
}

impl Params {
    fn of(p: &MixtureParams) -> Self {
        let g = p.n_components();
        Params {
            theta: p.theta().to_vec(),
            mu: (0..g).flat_map(|g| p.mu(g, 0).to_vec()).collect(),
            sigma2: (0..g).map(|g| p.sigma2(g, 0)).collect(),
            beta: (0..g).flat_map(|g| p.beta(g, 0).to_vec()).collect(),
        }
    }
}

/// Maximizer of `f` on `[lo, hi]`: dense grid, then golden-section search
/// around the best grid point.
fn maximize(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let steps = 4000;
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|i| lo + i as f64 * h)
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut e) = (b - r * (b - a), a + r * (b - a));
    let (mut fc, mut fe) = (f(c), f(e));
    for _ in 0..200 {
        if fc >= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + r * (b - a);
            fe = f(e);
        }
    }
    let x = (a + b) / 2.0;
    // the endpoints of the domain are candidates too
    [lo, x, hi]
        .into_iter()
        .max_by(|p, q| f(*p).total_cmp(&f(*q)))
        .unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for i in 0..10 {
        let d = random_dataset(&mut rng, 5, 1, 4, 0.3);
        let hp = random_hyperparams(&mut rng, 5);
        let previous = random_params(&mut rng, 2, 1, 4);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let a = rng.random_range(0.05..0.95);
                vec![a, 1.0 - a]
            })
            .collect();
        let post = Posteriors::from_rows(&rows).unwrap();
        let priors =
            compute_prior_stats(&d, hp.a0, hp.b0).map_err(|e| format!("instance {i}: {e}"))?;
        let updated = m_step(&d, &post, &previous, &priors, &hp, MaskModel::Bernoulli)
            .map_err(|e| format!("instance {i}: {e}"))?;
        let k = priors.jittered_kernel();
        let k_inv = k
            .clone()
            .try_inverse()
            .ok_or("prior kernel not invertible")?;
        let log_det_k = k.determinant().ln();
        let closed = Params::of(&updated);
        let prev = Params::of(&previous);
        let q = |p: &Params| q_function(&d, &post, p, &priors, &k_inv, log_det_k, &hp);
        let mut record = |name: &str, got: f64, want: f64| {
            if (got - want).abs() > worst {
                worst = (got - want).abs();
                worst_at = format!("instance {i}, {name}: closed {got:.6}, numeric {want:.6}");
            }
        };

        // mean coordinates, with the variances the update used
        for c in 0..8 {
            let base = Params {
                sigma2: prev.sigma2.clone(),
                ..closed.clone()
            };
            let x = maximize(
                |x| {
                    let mut p = base.clone();
                    p.mu[c] = x;
                    q(&p)
                },
                closed.mu[c] - 10.0,
                closed.mu[c] + 10.0,
            );
            record("mu", closed.mu[c], x);
        }
        for g in 0..2 {
            let log_s = maximize(
                |y| {
                    let mut p = closed.clone();
                    p.sigma2[g] = y.exp();
                    q(&p)
                },
                1e-8f64.ln(),
                (100.0f64).ln(),
            );
            record("sigma2", closed.sigma2[g], log_s.exp());
        }
        for c in 0..8 {
            let x = maximize(
                |x| {
                    let mut p = closed.clone();
                    p.beta[c] = x;
                    q(&p)
                },
                BETA_EPS,
                1.0 - BETA_EPS,
            );
            record("beta", closed.beta[c], x);
        }
        let x = maximize(
            |x| {
                let mut p = closed.clone();
                p.theta = vec![x, 1.0 - x];
                q(&p)
            },
            1e-9,
            1.0 - 1e-9,
        );
        record("theta", closed.theta[0], x);
    }
    check(
        worst <= 1e-4,
        format!("10 instances, max |closed - numeric| = {worst:.2e} ({worst_at})"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut notes = (0.0f64, 0.0f64, f64::INFINITY);
    for i in 0..20 {
        let n = rng.random_range(4..=50);
        let (v, t) = (rng.random_range(1..=3), rng.random_range(4..=12));
        let missing = rng.random_range(0.0..0.6);
        let d = random_dataset(&mut rng, n, v, t, missing);
        let min = rng.random_range(2..=3);
        let config = EnsembleConfig {
            q_inits: rng.random_range(1..=5),
            components: Some(ComponentRange {
                min,
                max: min + rng.random_range(0..=2),
            }),
            mode: Mode::ALL[i % 4],
            seed: i as u64,
            min_segment_length: 3,
            ..Default::default()
        };
        let (_, gram) = train_tck_im(&d, &config).map_err(|e| format!("instance {i}: {e}"))?;
        let q = gram.models() as f64;
        let k = gram.to_matrix();
        let asym = (&k - k.transpose()).abs().max();
        let diag = (0..n).map(|j| (k[(j, j)] - q).abs()).fold(0.0, f64::max);
        let in_range = k.iter().all(|&x| (0.0..=q).contains(&x));
        let min_eig = SymmetricEigen::new(k).eigenvalues.min();
        notes = (
            notes.0.max(asym),
            notes.1.max(diag),
            notes.2.min(min_eig / q),
        );
        if asym > 1e-9 || diag > 1e-9 || !in_range || min_eig < -1e-8 * q {
            return Err(format!(
                "instance {i}: asymmetry {asym:.2e}, diagonal error {diag:.2e}, in range {in_range}, min eigenvalue {min_eig:.2e}"
            ));
        }
    }
    Ok(format!(
        "20 ensembles, max asymmetry {:.1e}, max diagonal error {:.1e}, min eigenvalue/count {:.1e}",
        notes.0, notes.1, notes.2
    ))
}

fn criterion_6() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let d = inject_label_rate(&make_gaussian_toy(60, 3, 12, 2, 1.0, 6).unwrap(), 0.5, 6)
        .unwrap()
        .0;
    let data = dir.path().join("d.mts");
    save_dataset(&d, &data).map_err(|e| e.to_string())?;
    let mut grams = Vec::new();
    for (run, workers) in [(0, "1"), (1, "4"), (2, "4")] {
        let (model, gram) = (
            dir.path().join(format!("m{run}")),
            dir.path().join(format!("g{run}")),
        );
        let out = Command::new(env!("CARGO_BIN_EXE_tckim"))
            .args(["train", "--dataset", data.to_str().unwrap()])
            .args([
                "--model-out",
                model.to_str().unwrap(),
                "--gram-out",
                gram.to_str().unwrap(),
            ])
            .args([
                "--q-inits",
                "5",
                "--components",
                "2,4",
                "--seed",
                "42",
                "--workers",
                workers,
            ])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        grams.push(fs::read(gram).map_err(|e| e.to_string())?);
    }
    check(
        grams[0] == grams[1] && grams[1] == grams[2],
        format!(
            "Gram files of {} bytes, workers 1 vs 4 and a rerun identical",
            grams[0].len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let spec = BenchmarkSpec {
        seeds: (0..5).collect(),
        rhos: vec![0.2, 0.8],
        schemes: vec![Scheme::LabelRate],
        modes: vec![Mode::Im, Mode::Tck],
        n_records: 200,
        n_vars: 3,
        len: 20,
        separation: 0.65,
        config: EnsembleConfig {
            q_inits: 10,
            components: Some(ComponentRange { min: 2, max: 3 }),
            ..Default::default()
        },
        protocol: Protocol::KFold { folds: 5 },
        options: EvalOptions::default(),
    };
    let table = run_benchmark(&spec).map_err(|e| e.to_string())?;
    let acc = |rho, mode| table.mean_accuracy(rho, Scheme::LabelRate, mode).unwrap();
    let (im2, im8, tck2, tck8) = (
        acc(0.2, Mode::Im),
        acc(0.8, Mode::Im),
        acc(0.2, Mode::Tck),
        acc(0.8, Mode::Tck),
    );
    let (a, b, c) = (im8 >= im2, im8 >= tck8 + 0.05, im2 >= tck2 - 0.02);
    check(
        a && b && c,
        format!(
            "IM {im2:.3} -> {im8:.3}, TCK {tck2:.3} -> {tck8:.3}; IM rises: {a}, IM(0.8) >= TCK(0.8)+0.05: {b}, IM(0.2) >= TCK(0.2)-0.02: {c}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let d = make_gaussian_toy(500, 4, 10, 2, 1.0, 8).unwrap();
    let mut worst: f64 = 0.0;
    let mut rates = Vec::new();
    for rho in [0.2, 0.4, 0.6, 0.8] {
        let (_, report) = inject_label_rate(&d, rho, 80).map_err(|e| e.to_string())?;
        worst = worst.max(report.max_deviation());
        rates.push(report.missing_rate);
    }
    let rates_ok = rates.iter().all(|r| (r - 0.5).abs() <= 0.05);
    check(
        worst <= 0.01 && rates_ok,
        format!("max per-variable deviation {worst:.4}, missing rates {rates:.3?}"),
    )
}

fn criterion_9() -> Outcome {
    let m = Metrics::from_counts(3, 1, 1, 5);
    // 3 TP, 1 FP, 1 FN, 5 TN as label vectors
    let y_true = [1, 1, 1, 0, 1, 0, 0, 0, 0, 0];
    let y_pred = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
    let from_labels = metrics(&y_true, &y_pred, 1).map_err(|e| e.to_string())?;
    let want = [3.0 / 4.0, 5.0 / 6.0, 3.0 / 4.0, 8.0 / 10.0];
    let err = [m, from_labels]
        .iter()
        .flat_map(|m| {
            [m.sensitivity, m.specificity, m.f1, m.accuracy]
                .into_iter()
                .zip(want)
        })
        .map(|(got, want)| (got - want).abs())
        .fold(0.0, f64::max);
    check(
        err <= 1e-12,
        format!(
            "sensitivity {}, specificity {}, F1 {}, accuracy {} (max error {err:.1e})",
            m.sensitivity, m.specificity, m.f1, m.accuracy
        ),
    )
}

fn criterion_10() -> Outcome {
    let d = inject_label_rate(&make_gaussian_toy(40, 2, 10, 2, 1.0, 10).unwrap(), 0.6, 10)
        .unwrap()
        .0;
    let config = EnsembleConfig {
        q_inits: 4,
        components: Some(ComponentRange { min: 2, max: 4 }),
        seed: 10,
        ..Default::default()
    };
    let (trained, gram) = train_tck_im(&d, &config).map_err(|e| e.to_string())?;
    let cross = kernel_test(&trained, &d).map_err(|e| e.to_string())?;
    let kernel_err = (gram.to_matrix() - cross.to_matrix()).abs().max();
    let (state, embed) = kpca_fit(&gram, 3).map_err(|e| e.to_string())?;
    let projected = kpca_project(&state, &cross).map_err(|e| e.to_string())?;
    let embed_err = (embed - projected).abs().max();
    check(
        kernel_err <= 1e-9 && embed_err <= 1e-8,
        format!("kernel difference {kernel_err:.1e}, embedding difference {embed_err:.1e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("length transform fixtures", criterion_1),
        ("E-step rows sum to one", criterion_2),
        ("MAP-EM monotonicity", criterion_3),
        ("M-step matches numerical maximization", criterion_4),
        ("Gram matrix invariants", criterion_5),
        ("determinism across worker counts", criterion_6),
        ("informative-missingness trend", criterion_7),
        ("injection correlation targeting", criterion_8),
        ("metrics fixture", criterion_9),
        ("out-of-sample consistency", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
