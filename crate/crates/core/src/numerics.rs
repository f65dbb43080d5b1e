//! Normalization, PCA-derived sensors and least-squares fitting.
//!
//! Everything here works on [`Matrix`] values whose rows are cycles and whose
//! columns are sensors.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Per-sensor z-normalization statistics pooled over all training cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    /// Indices of sensors with zero variance, ascending.
    pub dropped: Vec<usize>,
}

impl NormStats {
    pub fn sensor_count(&self) -> usize {
        self.mean.len()
    }

    pub fn retained_count(&self) -> usize {
        self.mean.len() - self.dropped.len()
    }

    fn is_dropped(&self, j: usize) -> bool {
        self.dropped.binary_search(&j).is_ok()
    }
}

/// Pools every cycle of every instance and computes per-sensor mean and
/// population standard deviation. Zero-variance sensors are recorded in
/// `dropped`.
pub fn fit_norm_stats(train: &[Matrix]) -> Result<NormStats> {
    let first = train.iter().find(|m| !m.is_empty()).ok_or(Error::NoTrainingData)?;
    let m = first.cols();
    let mut n = 0usize;
    let mut sum = vec![0.0; m];
    for series in train {
        if series.cols() != m {
            return Err(Error::Dimension {
                context: "fit_norm_stats sensor count",
                expected: m,
                found: series.cols(),
            });
        }
        for row in series.iter_rows() {
            for (s, &x) in sum.iter_mut().zip(row) {
                *s += x;
            }
            n += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    // second pass keeps the variance free of cancellation
    let mut ss = vec![0.0; m];
    for series in train {
        for row in series.iter_rows() {
            for ((acc, &x), mu) in ss.iter_mut().zip(row).zip(&mean) {
                let d = x - mu;
                *acc += d * d;
            }
        }
    }
    let std: Vec<f64> = ss.iter().map(|s| (s / n as f64).sqrt()).collect();
    let dropped = std
        .iter()
        .enumerate()
        .filter(|(j, &s)| s <= f64::EPSILON * mean[*j].abs().max(1.0) * 16.0)
        .map(|(j, _)| j)
        .collect();
    Ok(NormStats { mean, std, dropped })
}

/// Applies `(x - mean) / std` per retained sensor, removing dropped columns.
pub fn apply_norm(series: &Matrix, stats: &NormStats) -> Result<Matrix> {
    if series.cols() != stats.sensor_count() {
        return Err(Error::Dimension {
            context: "apply_norm sensor count",
            expected: stats.sensor_count(),
            found: series.cols(),
        });
    }
    let keep: Vec<usize> = (0..series.cols()).filter(|&j| !stats.is_dropped(j)).collect();
    let mut out = Matrix::zeros(series.rows(), keep.len());
    for r in 0..series.rows() {
        let src = series.row(r);
        for (k, &j) in keep.iter().enumerate() {
            out.set(r, k, (src[j] - stats.mean[j]) / stats.std[j]);
        }
    }
    Ok(out)
}

/// Normalization hook for data with several operating regimes.
///
/// Each regime gets its own statistics; the caller supplies a regime label
/// for every cycle. A sensor dropped in any regime is dropped in all of them
/// so the normalized column layout does not depend on the regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeNormStats {
    pub regimes: Vec<NormStats>,
}

impl RegimeNormStats {
    pub fn fit(train: &[Matrix], labels: &[Vec<usize>], n_regimes: usize) -> Result<Self> {
        if train.len() != labels.len() {
            return Err(Error::Dimension {
                context: "regime labels",
                expected: train.len(),
                found: labels.len(),
            });
        }
        let mut per_regime: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_regimes];
        for (series, lab) in train.iter().zip(labels) {
            if lab.len() != series.rows() {
                return Err(Error::Dimension {
                    context: "regime labels per cycle",
                    expected: series.rows(),
                    found: lab.len(),
                });
            }
            for (row, &k) in series.iter_rows().zip(lab) {
                let bucket = per_regime
                    .get_mut(k)
                    .ok_or_else(|| Error::invalid(format!("regime label {k} >= {n_regimes}")))?;
                bucket.push(row.to_vec());
            }
        }
        let mut regimes = per_regime
            .iter()
            .map(|rows| fit_norm_stats(&[Matrix::from_rows(rows)?]))
            .collect::<Result<Vec<_>>>()?;
        let mut dropped: Vec<usize> = regimes.iter().flat_map(|s| s.dropped.clone()).collect();
        dropped.sort_unstable();
        dropped.dedup();
        for s in &mut regimes {
            s.dropped = dropped.clone();
        }
        Ok(Self { regimes })
    }

    pub fn apply(&self, series: &Matrix, labels: &[usize]) -> Result<Matrix> {
        if labels.len() != series.rows() {
            return Err(Error::Dimension {
                context: "regime labels per cycle",
                expected: series.rows(),
                found: labels.len(),
            });
        }
        let mut rows = Vec::with_capacity(series.rows());
        for (r, &k) in labels.iter().enumerate() {
            let stats = self
                .regimes
                .get(k)
                .ok_or_else(|| Error::invalid(format!("unknown regime {k}")))?;
            let one = apply_norm(&series.slice_rows(r, 1), stats)?;
            rows.push(one.row(0).to_vec());
        }
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, 0));
        }
        Matrix::from_rows(&rows)
    }
}

/// Principal directions used to derive decorrelated sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// `p × m` matrix; row `k` is the k-th principal direction.
    pub components: Matrix,
    /// Eigenvalues of the sample covariance for the kept components, descending.
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn p(&self) -> usize {
        self.components.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.cols()
    }
}

/// Fits `p` principal components to the rows of `normalized`.
///
/// Components are the leading eigenvectors of the sample covariance, ordered
/// by descending eigenvalue, with the largest-magnitude entry made positive.
pub fn pca_fit(normalized: &Matrix, p: usize) -> Result<PcaModel> {
    let m = normalized.cols();
    if p == 0 || p > m {
        return Err(Error::invalid(format!(
            "number of principal components {p} must be in 1..={m}"
        )));
    }
    let n = normalized.rows();
    if n < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 rows, got {n}")));
    }
    let mut mean = vec![0.0; m];
    for row in normalized.iter_rows() {
        for (a, &x) in mean.iter_mut().zip(row) {
            *a += x;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let mut cov = Matrix::zeros(m, m);
    let mut centered = vec![0.0; m];
    for row in normalized.iter_rows() {
        for ((c, &x), mu) in centered.iter_mut().zip(row).zip(&mean) {
            *c = x - mu;
        }
        for i in 0..m {
            let ci = centered[i];
            for j in i..m {
                let v = cov.get(i, j) + ci * centered[j];
                cov.set(i, j, v);
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            let v = cov.get(i, j) / (n - 1) as f64;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    let (values, vectors) = symmetric_eigen(&cov);
    let mut order: Vec<usize> = (0..m).collect();
    // stable sort: ties keep index order, so the result is reproducible
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let mut components = Matrix::zeros(p, m);
    let mut variances = Vec::with_capacity(p);
    for (k, &idx) in order.iter().take(p).enumerate() {
        let mut v: Vec<f64> = (0..m).map(|r| vectors.get(r, idx)).collect();
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.row_mut(k).copy_from_slice(&v);
        variances.push(values[idx].max(0.0));
    }
    Ok(PcaModel {
        components,
        variances,
    })
}

/// Projects each row onto the principal directions: `z_t = C x_t`.
pub fn pca_transform(normalized: &Matrix, model: &PcaModel) -> Result<Matrix> {
    if normalized.cols() != model.input_dim() {
        return Err(Error::Dimension {
            context: "pca_transform column count",
            expected: model.input_dim(),
            found: normalized.cols(),
        });
    }
    normalized.matmul(&model.components.transpose())
}

/// Maps derived sensors back to the normalized space: `x_t = Cᵀ z_t`.
pub fn pca_inverse_transform(derived: &Matrix, model: &PcaModel) -> Result<Matrix> {
    if derived.cols() != model.p() {
        return Err(Error::Dimension {
            context: "pca_inverse_transform column count",
            expected: model.p(),
            found: derived.cols(),
        });
    }
    derived.matmul(&model.components)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
///
/// Returns eigenvalues and a matrix whose columns are the matching
/// eigenvectors. Unordered.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut a = a.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let total: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * total * 1e-2 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| a.get(i, i)).collect(), v)
}

/// Linear map `h = θᵀz + θ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsModel {
    pub theta: Vec<f64>,
    pub theta0: f64,
}

/// Least-squares fit of `targets` on the rows of `inputs` plus an intercept,
/// solved through the normal equations.
///
/// A numerically singular Gram matrix gets a small Tikhonov term added to its
/// diagonal before the solve is retried.
pub fn ols_fit(inputs: &Matrix, targets: &[f64]) -> Result<OlsModel> {
    if inputs.rows() != targets.len() {
        return Err(Error::Dimension {
            context: "ols_fit targets",
            expected: inputs.rows(),
            found: targets.len(),
        });
    }
    let p = inputs.cols();
    let k = p + 1;
    if inputs.rows() < k {
        return Err(Error::Underdetermined {
            rows: inputs.rows(),
            unknowns: k,
        });
    }
    let mut gram = Matrix::zeros(k, k);
    let mut rhs = vec![0.0; k];
    let mut aug = vec![1.0; k];
    for (row, &h) in inputs.iter_rows().zip(targets) {
        aug[..p].copy_from_slice(row);
        for i in 0..k {
            rhs[i] += aug[i] * h;
            for j in i..k {
                gram.set(i, j, gram.get(i, j) + aug[i] * aug[j]);
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            gram.set(i, j, gram.get(j, i));
        }
    }
    let solution = match cholesky_solve(&gram, &rhs, true) {
        Some(x) => x,
        None => {
            let scale = (0..k).map(|i| gram.get(i, i)).fold(1.0_f64, f64::max);
            let mut ridged = gram.clone();
            for i in 0..k {
                ridged.set(i, i, ridged.get(i, i) + 1e-10 * scale);
            }
            cholesky_solve(&ridged, &rhs, false)
                .ok_or_else(|| Error::invalid("least-squares Gram matrix is not positive definite"))?
        }
    };
    let theta0 = solution[p];
    let theta = solution[..p].to_vec();
    if !theta0.is_finite() || theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("least-squares solution is not finite"));
    }
    Ok(OlsModel { theta, theta0 })
}

/// Solves `G x = b` for symmetric positive definite `G`. With `strict`, pivots
/// below a relative threshold count as singular.
fn cholesky_solve(g: &Matrix, b: &[f64], strict: bool) -> Option<Vec<f64>> {
    let n = g.rows();
    let max_diag = (0..n).map(|i| g.get(i, i).abs()).fold(0.0_f64, f64::max);
    let floor = if strict {
        max_diag * f64::EPSILON * n as f64 * 4.0
    } else {
        0.0
    };
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = g.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > floor) {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = g.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    Some(x)
}

pub fn ols_predict(model: &OlsModel, z: &[f64]) -> Result<f64> {
    if z.len() != model.theta.len() {
        return Err(Error::Dimension {
            context: "ols_predict input",
            expected: model.theta.len(),
            found: z.len(),
        });
    }
    Ok(dot(&model.theta, z) + model.theta0)
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// input has zero rank variance or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    pearson(&rx, &ry)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}
