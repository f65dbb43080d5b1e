//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use hirul::health::HiCurve;
use hirul::lstm::LstmEdModel;
use hirul::matching::{MatchConfig, RulCandidate};
use hirul::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for entries whose true gradient is essentially zero.
pub const FD_FLOOR: f64 = 1e-6;

pub fn random_window(p: usize, l: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..p * l).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(l, p, data).unwrap()
}

/// Model with every parameter drawn from `[-0.5, 0.5)`, so the forget bias
/// and zero output bias of the default init do not hide gradient paths.
pub fn random_model(p: usize, c: usize, l: usize, seed: u64) -> (LstmEdModel, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = LstmEdModel::init(p, c, l, &mut rng);
    for block in m.param_slices_mut() {
        for v in block.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let w = random_window(p, l, &mut rng);
    (m, w)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel: f64,
    pub max_abs: f64,
    pub entries: usize,
}

/// Compares BPTT gradients with central differences of the window loss.
pub fn finite_difference_check(model: &LstmEdModel, window: &Matrix) -> GradCheck {
    let (_, grad) = model.grad_bptt(window).unwrap();
    let analytic: Vec<f64> = grad.param_slices().iter().flat_map(|s| s.iter().copied()).collect();
    let mut probe = model.clone();
    let mut out = GradCheck {
        max_rel: 0.0,
        max_abs: 0.0,
        entries: 0,
    };
    let mut k = 0;
    for b in 0..6 {
        let len = probe.param_slices()[b].len();
        for i in 0..len {
            let orig = probe.param_slices()[b][i];
            probe.param_slices_mut()[b][i] = orig + FD_STEP;
            let up = probe.window_loss(window).unwrap();
            probe.param_slices_mut()[b][i] = orig - FD_STEP;
            let down = probe.window_loss(window).unwrap();
            probe.param_slices_mut()[b][i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[k];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(FD_FLOOR);
            out.max_rel = out.max_rel.max(rel);
            out.max_abs = out.max_abs.max(abs);
            out.entries += 1;
            k += 1;
        }
    }
    out
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().partial_cmp(&aug[y][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, piv);
        let d = aug[col][col];
        assert!(d.abs() > 1e-14, "singular matrix in oracle");
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// `[θ; θ₀] = (AᵀA)⁻¹ Aᵀ y` with `A = [X 1]`.
pub fn ols_oracle(x: &Matrix, y: &[f64]) -> (Vec<f64>, f64) {
    let k = x.cols() + 1;
    let rows: Vec<Vec<f64>> = x
        .iter_rows()
        .map(|r| {
            let mut v = r.to_vec();
            v.push(1.0);
            v
        })
        .collect();
    let mut ata = vec![vec![0.0; k]; k];
    let mut aty = vec![0.0; k];
    for (r, &t) in rows.iter().zip(y) {
        for i in 0..k {
            aty[i] += r[i] * t;
            for j in 0..k {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    let inv = gauss_jordan_inverse(&ata);
    let sol: Vec<f64> = inv.iter().map(|row| row.iter().zip(&aty).map(|(a, b)| a * b).sum()).collect();
    (sol[..k - 1].to_vec(), sol[k - 1])
}

/// Enumerates every `(train, lag)` pair directly from the definitions.
pub fn brute_force_match(test: &HiCurve, trains: &[&HiCurve], cfg: &MatchConfig) -> (Vec<RulCandidate>, Option<f64>) {
    let n = test.len();
    let mut all = Vec::new();
    for (u, tr) in trains.iter().enumerate() {
        for lag in 1..=cfg.tau {
            if lag + n > tr.len() {
                continue;
            }
            let mut acc = 0.0;
            for i in 0..n {
                let diff = test.values[i] - tr.values[i + lag];
                acc += diff * diff;
            }
            let d2 = acc / n as f64;
            all.push(RulCandidate {
                train_index: u,
                lag,
                distance_sq: d2,
                similarity: (-d2 / cfg.lambda).exp(),
                estimate: (tr.len() - n - lag) as f64,
            });
        }
    }
    let mut s_max = 0.0f64;
    for c in &all {
        if c.similarity > s_max {
            s_max = c.similarity;
        }
    }
    let kept: Vec<RulCandidate> = all.into_iter().filter(|c| c.similarity >= cfg.alpha * s_max).collect();
    if kept.is_empty() {
        return (kept, None);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in &kept {
        num += c.similarity * c.estimate;
        den += c.similarity;
    }
    let est = (num / den).min(cfg.r_max);
    (kept, Some(est))
}

pub fn random_curve(len: usize, rng: &mut ChaCha8Rng) -> HiCurve {
    HiCurve::new((0..len).map(|_| rng.random_range(0.0..1.0)).collect())
}

/// Spearman rank correlation through explicit average ranks.
pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    // correlated columns so the spectrum is not flat
    let mix: Vec<f64> = (0..cols * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let base: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        for j in 0..cols {
            data.push((0..cols).map(|k| mix[j * cols + k] * base[k]).sum::<f64>() + 0.3 * j as f64);
        }
    }
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn covariance(x: &Matrix) -> Matrix {
    let (n, m) = (x.rows(), x.cols());
    let means: Vec<f64> = (0..m).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let mut c = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let s: f64 = x.iter_rows().map(|r| (r[i] - means[i]) * (r[j] - means[j])).sum();
            c.set(i, j, s / (n - 1) as f64);
        }
    }
    c
}
