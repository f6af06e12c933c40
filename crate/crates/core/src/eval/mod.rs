//! Kernel PCA embeddings, kNN classification and evaluation protocols.

mod export;
mod pipeline;

pub use export::{export_embedding, write_embedding_csv, write_embedding_svg, EmbeddingFormat};
pub use pipeline::{
    evaluate_pipeline, EvalOptions, EvalReport, FoldAudit, MetricSummary, Protocol,
};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::kernel::GramMatrix;

/// Eigenvalues at or below this fraction of the centered trace count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Default neighbor counts tried by [`select_k_cv`].
pub const DEFAULT_K_GRID: [usize; 8] = [1, 3, 5, 7, 9, 11, 15, 21];

/// Everything needed to project new kernel columns onto a KPCA embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpcaState {
    row_means: Vec<f64>,
    grand_mean: f64,
    /// Descending.
    eigenvalues: Vec<f64>,
    /// `N x d`, one eigenvector per column.
    eigenvectors: DMatrix<f64>,
    rank: usize,
}

impl KpcaState {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of eigenvalues of the centered kernel above the rank tolerance.
    pub fn rank(&self) -> usize {
        self.rank
    }
}

fn symmetric(k: &GramMatrix) -> Result<DMatrix<f64>> {
    if k.rows() != k.cols() {
        return Err(Error::ShapeMismatch {
            expected: "square kernel matrix".into(),
            found: format!("{}x{}", k.rows(), k.cols()),
        });
    }
    let m = k.to_matrix();
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::invalid(format!(
                    "kernel matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(m)
}

/// Double-centers `K`: `K - 1 r^T - r 1^T + g` with row means `r` and grand mean `g`.
pub fn center_kernel(k: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, f64) {
    let n = k.nrows();
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
    let grand = if n == 0 {
        0.0
    } else {
        row_means.iter().sum::<f64>() / n as f64
    };
    let centered = DMatrix::from_fn(n, n, |i, j| k[(i, j)] - row_means[i] - row_means[j] + grand);
    (centered, row_means, grand)
}

/// Numerical rank of a (centered) kernel matrix.
pub fn kernel_rank(k: &GramMatrix) -> Result<usize> {
    let (centered, _, _) = center_kernel(&symmetric(k)?);
    Ok(sorted_eigen(centered).2)
}

fn sorted_eigen(centered: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, usize) {
    let trace = centered.trace();
    let eig = SymmetricEigen::new(centered);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    let rank = if trace > 0.0 {
        values
            .iter()
            .filter(|&&l| l > RANK_TOLERANCE * trace)
            .count()
    } else {
        0
    };
    (values, vectors, rank)
}

/// Kernel PCA of an in-sample Gram matrix; returns the state and the `N x d`
/// embedding `v_j * sqrt(lambda_j)`. Each eigenvector is signed so that its
/// largest-magnitude coordinate is positive.
pub fn kpca_fit(k: &GramMatrix, d: usize) -> Result<(KpcaState, DMatrix<f64>)> {
    if d == 0 {
        return Err(Error::invalid("embedding dimension must be at least 1"));
    }
    let (centered, row_means, grand_mean) = center_kernel(&symmetric(k)?);
    let n = centered.nrows();
    let (values, vectors, rank) = sorted_eigen(centered);
    if d > rank {
        return Err(Error::RankDeficient {
            requested: d,
            achievable: rank,
        });
    }
    let mut eigenvectors = DMatrix::zeros(n, d);
    for j in 0..d {
        let mut v = vectors.column(j).into_owned();
        let pivot = v.iter().enumerate().fold(
            0,
            |best, (i, x)| if x.abs() > v[best].abs() { i } else { best },
        );
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        eigenvectors.set_column(j, &v);
    }
    let eigenvalues = values[..d].to_vec();
    let embedding = DMatrix::from_fn(n, d, |i, j| eigenvectors[(i, j)] * eigenvalues[j].sqrt());
    Ok((
        KpcaState {
            row_means,
            grand_mean,
            eigenvalues,
            eigenvectors,
            rank,
        },
        embedding,
    ))
}

/// Projects test columns `K_cross` (training rows x test columns) onto the
/// embedding, centering with the stored training statistics.
pub fn kpca_project(state: &KpcaState, k_cross: &GramMatrix) -> Result<DMatrix<f64>> {
    let n = state.row_means.len();
    if k_cross.rows() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} rows"),
            found: k_cross.rows().to_string(),
        });
    }
    let m = k_cross.cols();
    let d = state.dim();
    let kc = k_cross.to_matrix();
    let mut out = DMatrix::zeros(m, d);
    for j in 0..m {
        let col = kc.column(j);
        let mean = if n == 0 { 0.0 } else { col.sum() / n as f64 };
        let centered = DVector::from_fn(n, |i, _| {
            col[i] - mean - state.row_means[i] + state.grand_mean
        });
        for c in 0..d {
            out[(j, c)] = state.eigenvectors.column(c).dot(&centered) / state.eigenvalues[c].sqrt();
        }
    }
    Ok(out)
}

fn squared_distance(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols())
        .map(|c| (a[(i, c)] - b[(j, c)]).powi(2))
        .sum()
}

/// Euclidean k-nearest-neighbor majority vote. Ties go to the label with the
/// smaller summed distance, then to the smaller label.
pub fn knn_classify(
    train: &DMatrix<f64>,
    train_labels: &[Label],
    test: &DMatrix<f64>,
    k: usize,
) -> Result<Vec<Label>> {
    let n = train.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if train_labels.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} labels"),
            found: train_labels.len().to_string(),
        });
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in [1, {n}]")));
    }
    if test.ncols() != train.ncols() && test.nrows() > 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("{} dimensions", train.ncols()),
            found: test.ncols().to_string(),
        });
    }
    let mut predictions = Vec::with_capacity(test.nrows());
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    for j in 0..test.nrows() {
        dist.clear();
        dist.extend((0..n).map(|i| (squared_distance(train, i, test, j).sqrt(), i)));
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // (label, votes, summed distance)
        let mut tally: Vec<(Label, usize, f64)> = Vec::new();
        for &(d, i) in &dist[..k] {
            match tally.iter_mut().find(|t| t.0 == train_labels[i]) {
                Some(t) => {
                    t.1 += 1;
                    t.2 += d;
                }
                None => tally.push((train_labels[i], 1, d)),
            }
        }
        let best = tally
            .iter()
            .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
            .expect("k >= 1");
        predictions.push(best.0);
    }
    Ok(predictions)
}

/// Confusion counts and derived binary metrics for one positive label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Some ratio was 0/0 and was reported as 0.
    pub degenerate: bool,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let mut degenerate = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                degenerate = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let sensitivity = ratio(tp, tp + fn_);
        let specificity = ratio(tn, tn + fp);
        let precision = ratio(tp, tp + fp);
        let accuracy = ratio(tp + tn, tp + fp + fn_ + tn);
        // 2 prec sens / (prec + sens) = 2 TP / (2 TP + FP + FN)
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        Self {
            tp,
            fp,
            fn_,
            tn,
            sensitivity,
            specificity,
            precision,
            f1,
            accuracy,
            degenerate,
        }
    }
}

pub fn metrics(y_true: &[Label], y_pred: &[Label], positive: Label) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::ShapeMismatch {
            expected: y_true.len().to_string(),
            found: y_pred.len().to_string(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t == positive, p == positive) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

/// Splits `0..labels.len()` into `folds` disjoint test sets; each class is
/// shuffled and dealt round-robin so fold class proportions stay balanced.
pub fn stratified_folds<R: Rng + ?Sized>(
    labels: &[Label],
    folds: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > labels.len() {
        return Err(Error::invalid(format!(
            "cannot split {} records into {folds} folds",
            labels.len()
        )));
    }
    let mut classes: Vec<Label> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for class in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        for i in members {
            out[next].push(i);
            next = (next + 1) % folds;
        }
    }
    for fold in &mut out {
        fold.sort_unstable();
    }
    Ok(out)
}

/// Complement of a sorted index set within `0..n`.
pub(crate) fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut is_test = vec![false; n];
    for &i in test {
        is_test[i] = true;
    }
    (0..n).filter(|&i| !is_test[i]).collect()
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Picks the `k` from `k_grid` with the best mean F1 over stratified folds of
/// the embedding; ties go to the smaller `k`. Values of `k` larger than a
/// fold's training set are capped at its size.
pub fn select_k_cv<R: Rng + ?Sized>(
    embedding: &DMatrix<f64>,
    labels: &[Label],
    folds: usize,
    k_grid: &[usize],
    positive: Label,
    rng: &mut R,
) -> Result<usize> {
    if k_grid.is_empty() || k_grid.contains(&0) {
        return Err(Error::invalid(
            "k grid must be non-empty with positive values",
        ));
    }
    if k_grid.len() == 1 {
        return Ok(k_grid[0]);
    }
    let splits = stratified_folds(labels, folds, rng)?;
    let mut best = (f64::NEG_INFINITY, k_grid[0]);
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    for &k in &grid {
        let mut total = 0.0;
        for test in &splits {
            let train = complement(labels.len(), test);
            let train_labels: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
            let pred = knn_classify(
                &select_rows(embedding, &train),
                &train_labels,
                &select_rows(embedding, test),
                k.min(train.len()),
            )?;
            let truth: Vec<Label> = test.iter().map(|&i| labels[i]).collect();
            total += metrics(&truth, &pred, positive)?.f1;
        }
        let mean = total / splits.len() as f64;
        if mean > best.0 {
            best = (mean, k);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GramKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gram(m: &DMatrix<f64>) -> GramMatrix {
        let entries = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        GramMatrix::new(GramKind::InSample, m.nrows(), m.ncols(), 1, entries).unwrap()
    }

    fn random_psd(n: usize, rank: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
        &x * x.transpose()
    }

    #[test]
    fn confusion_fixture() {
        let m = Metrics::from_counts(3, 1, 1, 5);
        assert_eq!(m.sensitivity, 0.75);
        assert!((m.specificity - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.f1, 0.75);
        assert_eq!(m.accuracy, 0.8);
        assert!(!m.degenerate);
    }

    #[test]
    fn degenerate_metrics_flagged() {
        let m = metrics(&[0, 0, 0], &[0, 0, 0], 1).unwrap();
        assert_eq!((m.sensitivity, m.precision, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.specificity, 1.0);
        assert!(m.degenerate);
        let perfect = metrics(&[1, 0, 1], &[1, 0, 1], 1).unwrap();
        assert_eq!(
            (
                perfect.sensitivity,
                perfect.specificity,
                perfect.f1,
                perfect.accuracy
            ),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn centering_zeroes_row_sums() {
        let k = random_psd(7, 3, 1);
        let (c, _, _) = center_kernel(&k);
        for i in 0..7 {
            assert!(c.row(i).sum().abs() < 1e-9);
        }
    }

    #[test]
    fn constant_kernel_has_rank_zero() {
        let k = DMatrix::from_element(4, 4, 2.5);
        assert!(matches!(
            kpca_fit(&gram(&k), 1),
            Err(Error::RankDeficient {
                requested: 1,
                achievable: 0
            })
        ));
    }

    #[test]
    fn embedding_reconstructs_centered_kernel() {
        let k = random_psd(9, 3, 2);
        let (c, _, _) = center_kernel(&k);
        let rank = kernel_rank(&gram(&k)).unwrap();
        assert_eq!(rank, 3);
        let (_, y) = kpca_fit(&gram(&k), rank).unwrap();
        assert!((&y * y.transpose() - c).amax() < 1e-8);
        assert!(matches!(
            kpca_fit(&gram(&k), 4),
            Err(Error::RankDeficient { achievable: 3, .. })
        ));
    }

    #[test]
    fn projection_of_training_columns_recovers_embedding() {
        let k = random_psd(10, 5, 3);
        let g = gram(&k);
        let (state, y) = kpca_fit(&g, 3).unwrap();
        let cross = GramMatrix::new(GramKind::Cross, 10, 10, 1, g.entries().to_vec()).unwrap();
        let p = kpca_project(&state, &cross).unwrap();
        assert!((p - &y).amax() < 1e-8);
        let empty = GramMatrix::new(GramKind::Cross, 10, 0, 1, vec![]).unwrap();
        assert_eq!(kpca_project(&state, &empty).unwrap().nrows(), 0);
    }

    #[test]
    fn sign_convention() {
        let k = random_psd(8, 4, 5);
        let (_, y) = kpca_fit(&gram(&k), 2).unwrap();
        for j in 0..2 {
            let col = y.column(j);
            let pivot = col
                .iter()
                .fold(0.0f64, |m, &x| if x.abs() > m.abs() { x } else { m });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn knn_rules() {
        let train = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 10.0]);
        let labels = [1, 2, 2, 2];
        let q = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert_eq!(knn_classify(&train, &labels, &q, 1).unwrap(), vec![1]);
        assert_eq!(knn_classify(&train, &labels, &q, 4).unwrap(), vec![2]);
        // k = 2 tie: labels 1 (distance 0) and 2 (distance 1)
        assert_eq!(knn_classify(&train, &labels, &q, 2).unwrap(), vec![1]);
        // equal distances: smaller label
        let train = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        assert_eq!(knn_classify(&train, &[5, 3], &q, 2).unwrap(), vec![3]);
        assert!(knn_classify(&DMatrix::zeros(0, 1), &[], &q, 1).is_err());
    }

    #[test]
    fn knn_one_reproduces_training_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(20, 3, |_, _| rng.random::<f64>());
        let labels: Vec<Label> = (0..20).map(|i| (i % 3) as Label).collect();
        assert_eq!(knn_classify(&x, &labels, &x, 1).unwrap(), labels);
    }

    #[test]
    fn folds_partition_records() {
        let labels: Vec<Label> = (0..23).map(|i| if i < 8 { 1 } else { 0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let folds = stratified_folds(&labels, 5, &mut rng).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for f in &folds {
            let pos = f.iter().filter(|&&i| labels[i] == 1).count();
            assert!((1..=2).contains(&pos));
        }
        let two = stratified_folds(&[0, 1], 2, &mut rng).unwrap();
        assert!(two.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn k_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = DMatrix::from_fn(20, 2, |i, _| {
            if i < 10 {
                0.0 + i as f64 * 0.01
            } else {
                5.0 + i as f64 * 0.01
            }
        });
        let labels: Vec<Label> = (0..20).map(|i| if i < 10 { 1 } else { 2 }).collect();
        assert_eq!(select_k_cv(&x, &labels, 5, &[7], 2, &mut rng).unwrap(), 7);
        assert_eq!(
            select_k_cv(&x, &labels, 5, &[5, 3, 1], 2, &mut rng).unwrap(),
            1
        );
        let a = select_k_cv(
            &x,
            &labels,
            5,
            &DEFAULT_K_GRID,
            2,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let b = select_k_cv(
            &x,
            &labels,
            5,
            &DEFAULT_K_GRID,
            2,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
