use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{observed_moments, Label, MtsDataset, MtsRecord};
use crate::error::{Error, Result};

/// Bisection stops once the mean realized correlation is this close to the target.
pub const TUNE_TOLERANCE: f64 = 1e-3;
const MAX_BISECTIONS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Per-cell missingness with a label-shifted rate.
    LabelRate,
    /// Above-mean cells go missing with a label-shifted rate.
    MnarThreshold,
}

impl Scheme {
    /// Largest `E` keeping every interval endpoint within `[-0.2, 1.2]`.
    pub fn e_max(self, n_classes: usize) -> f64 {
        let spread = n_classes.saturating_sub(1).max(1) as f64;
        match self {
            Scheme::LabelRate => 0.5 / spread,
            Scheme::MnarThreshold => 0.6 / spread,
        }
    }

    /// Unclipped rate for base draw `u` in `[0, 1)`.
    fn rate(self, e: f64, sign: i8, shift: f64, u: f64) -> f64 {
        match (self, sign) {
            (Scheme::LabelRate, _) => 0.3 + e * f64::from(sign) * shift + 0.4 * u,
            (Scheme::MnarThreshold, s) if s < 0 => 0.7 - e * shift + 0.3 * u,
            (Scheme::MnarThreshold, _) => 0.3 + e * shift + 0.3 * u,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::LabelRate => "label_rate",
            Scheme::MnarThreshold => "mnar_threshold",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "label_rate" | "label-rate" | "1" => Ok(Scheme::LabelRate),
            "mnar_threshold" | "mnar-threshold" | "mnar" | "2" => Ok(Scheme::MnarThreshold),
            _ => Err(Error::invalid(format!(
                "unknown scheme `{s}` (expected label_rate or mnar_threshold)"
            ))),
        }
    }
}

/// How the per-variable signs `c_v` are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignMode {
    /// Half of the variables get `+1` (one extra for odd `V`), in random order.
    #[default]
    Balanced,
    /// Independent fair coin per variable.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionReport {
    pub scheme: Scheme,
    pub target: f64,
    pub e: f64,
    pub e_max: f64,
    pub signs: Vec<i8>,
    /// `|Pearson(gamma_v, y)|` per variable.
    pub realized: Vec<f64>,
    pub missing_rate: f64,
    /// Fraction of rates clipped to `[0, 1]`.
    pub clipped_fraction: f64,
}

impl InjectionReport {
    pub fn mean_realized(&self) -> f64 {
        self.realized.iter().sum::<f64>() / self.realized.len().max(1) as f64
    }

    /// Largest per-variable deviation from the target.
    pub fn max_deviation(&self) -> f64 {
        self.realized
            .iter()
            .map(|r| (r - self.target).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let join = |xs: Vec<String>| xs.join(",");
        let mut out = String::new();
        let _ = writeln!(out, "scheme={}", self.scheme);
        let _ = writeln!(out, "target={}", self.target);
        let _ = writeln!(out, "E={}", self.e);
        let _ = writeln!(out, "E_max={}", self.e_max);
        let _ = writeln!(
            out,
            "signs={}",
            join(self.signs.iter().map(i8::to_string).collect())
        );
        let _ = writeln!(
            out,
            "realized={}",
            join(self.realized.iter().map(f64::to_string).collect())
        );
        let _ = writeln!(out, "mean_realized={}", self.mean_realized());
        let _ = writeln!(out, "missing_rate={}", self.missing_rate);
        let _ = writeln!(out, "clipped_fraction={}", self.clipped_fraction);
        out
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn draw_signs(n_vars: usize, mode: SignMode, seed: u64) -> Vec<i8> {
    let mut rng = stream(seed, 0);
    match mode {
        SignMode::Balanced => {
            let mut signs: Vec<i8> = (0..n_vars)
                .map(|v| if v % 2 == 0 { 1 } else { -1 })
                .collect();
            signs.shuffle(&mut rng);
            signs
        }
        SignMode::Independent => (0..n_vars)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect(),
    }
}

/// Base draws `u[v][n]` in `[0, 1)`, stratified within each class: the
/// members of a class of size `m` receive one draw from each of the strata
/// `[i/m, (i+1)/m)` in random order.
fn base_draws(labels: &[Label], n_vars: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, 1);
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    (0..n_vars)
        .map(|_| {
            let mut u = vec![0.0; labels.len()];
            for group in &members {
                let m = group.len() as f64;
                let mut strata: Vec<usize> = (0..group.len()).collect();
                strata.shuffle(&mut rng);
                for (&n, &s) in group.iter().zip(&strata) {
                    u[n] = (s as f64 + rng.random::<f64>()) / m;
                }
            }
            u
        })
        .collect()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

struct Rates {
    gamma: Vec<Vec<f64>>,
    realized: Vec<f64>,
    clipped: usize,
}

fn rates(scheme: Scheme, e: f64, signs: &[i8], labels: &[Label], draws: &[Vec<f64>]) -> Rates {
    let min_label = labels.iter().copied().min().unwrap_or(1);
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let mut clipped = 0;
    let gamma: Vec<Vec<f64>> = signs
        .iter()
        .zip(draws)
        .map(|(&sign, u)| {
            labels
                .iter()
                .zip(u)
                .map(|(&l, &u)| {
                    let raw = scheme.rate(e, sign, f64::from(l - min_label), u);
                    if !(0.0..=1.0).contains(&raw) {
                        clipped += 1;
                    }
                    raw.clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect();
    let realized = gamma.iter().map(|g| pearson(g, &y).abs()).collect();
    Rates {
        gamma,
        realized,
        clipped,
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

fn n_classes(labels: &[Label]) -> Result<usize> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid(
            "injection needs at least two classes (correlation with a constant label is undefined)",
        ));
    }
    Ok(*classes.last().unwrap() as usize - *classes.first().unwrap() as usize + 1)
}

fn tune_on_draws(
    scheme: Scheme,
    target: f64,
    signs: &[i8],
    labels: &[Label],
    draws: &[Vec<f64>],
) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::invalid(format!(
            "target correlation {target} must lie in [0, 1)"
        )));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let objective = |e: f64| mean(&rates(scheme, e, signs, labels, draws).realized);
    let e_max = scheme.e_max(n_classes(labels)?);
    let best = objective(e_max);
    if best <= target {
        return Err(Error::Infeasible { target, max: best });
    }
    let (mut lo, mut hi) = (0.0, e_max);
    let mut e = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTIONS {
        e = 0.5 * (lo + hi);
        let r = objective(e);
        if (r - target).abs() < TUNE_TOLERANCE {
            break;
        }
        if r < target {
            lo = e;
        } else {
            hi = e;
        }
    }
    Ok(e)
}

/// Finds `E` such that the mean over variables of `|Pearson(gamma_v, y)|`
/// matches `target`, by bisection over `[0, E_max]` on the rate draws
/// derived from `seed`.
pub fn tune_e(
    labels: &[Label],
    signs: &[i8],
    target: f64,
    scheme: Scheme,
    seed: u64,
) -> Result<f64> {
    let draws = base_draws(labels, signs.len(), seed);
    tune_on_draws(scheme, target, signs, labels, &draws)
}

fn labels_of(dataset: &MtsDataset) -> Result<&[Label]> {
    dataset
        .labels()
        .ok_or_else(|| Error::invalid("injection needs a labeled dataset"))
}

fn inject(
    dataset: &MtsDataset,
    scheme: Scheme,
    target: f64,
    seed: u64,
    sign_mode: SignMode,
) -> Result<(MtsDataset, InjectionReport)> {
    let labels = labels_of(dataset)?;
    let n_vars = dataset.n_vars();
    let signs = draw_signs(n_vars, sign_mode, seed);
    let draws = base_draws(labels, n_vars, seed);
    let e = tune_on_draws(scheme, target, &signs, labels, &draws)?;
    let Rates {
        gamma,
        realized,
        clipped,
    } = rates(scheme, e, &signs, labels, &draws);

    let thresholds: Vec<f64> = match scheme {
        Scheme::LabelRate => vec![f64::NEG_INFINITY; n_vars],
        Scheme::MnarThreshold => (0..n_vars)
            .map(|v| {
                observed_moments(dataset.observed_values(v))
                    .map(|m| m.0)
                    .ok_or_else(|| Error::NoObservations(dataset.variable_names()[v].clone()))
            })
            .collect::<Result<_>>()?,
    };

    let mut rng = stream(seed, 2);
    let (mut total, mut missing) = (0usize, 0usize);
    let records = dataset
        .records()
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let mut mask = r.mask().to_vec();
            let mut values = r.values().to_vec();
            for v in 0..n_vars {
                for t in 0..r.len() {
                    let i = v * r.len() + t;
                    let u: f64 = rng.random();
                    if mask[i] && values[i] > thresholds[v] && u < gamma[v][n] {
                        mask[i] = false;
                        values[i] = f64::NAN;
                    }
                    total += 1;
                    missing += usize::from(!mask[i]);
                }
            }
            MtsRecord::new(r.id(), n_vars, r.len(), values, mask)
        })
        .collect::<Result<Vec<_>>>()?;
    let out = MtsDataset::new(
        records,
        Some(labels.to_vec()),
        dataset.variable_names().to_vec(),
        dataset.len(),
    )?;
    let report = InjectionReport {
        scheme,
        target,
        e,
        e_max: scheme.e_max(n_classes(labels)?),
        signs,
        realized,
        missing_rate: missing as f64 / total.max(1) as f64,
        clipped_fraction: clipped as f64 / (n_vars * labels.len()).max(1) as f64,
    };
    Ok((out, report))
}

/// Masks each cell `(n, v, t)` independently with probability `gamma_nv`,
/// `gamma_nv ~ U[0.3 + E c_v (y_n - 1), 0.7 + E c_v (y_n - 1)]`, with `E`
/// tuned to the target correlation.
pub fn inject_label_rate(
    dataset: &MtsDataset,
    target: f64,
    seed: u64,
) -> Result<(MtsDataset, InjectionReport)> {
    inject(
        dataset,
        Scheme::LabelRate,
        target,
        seed,
        SignMode::default(),
    )
}

/// Masks cells above the variable mean with probability `gamma_nv`, drawn
/// from `U[0.7 - E (y - 1), 1 - E (y - 1)]` for `c_v = -1` and
/// `U[0.3 + E (y - 1), 0.6 + E (y - 1)]` for `c_v = 1`.
pub fn inject_mnar_threshold(
    dataset: &MtsDataset,
    target: f64,
    seed: u64,
) -> Result<(MtsDataset, InjectionReport)> {
    inject(
        dataset,
        Scheme::MnarThreshold,
        target,
        seed,
        SignMode::default(),
    )
}

/// Either scheme with an explicit sign mode.
pub fn inject_with(
    dataset: &MtsDataset,
    scheme: Scheme,
    target: f64,
    seed: u64,
    sign_mode: SignMode,
) -> Result<(MtsDataset, InjectionReport)> {
    inject(dataset, scheme, target, seed, sign_mode)
}
