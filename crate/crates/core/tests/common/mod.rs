//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::HashMap;

use dimred::classifier::{rbf_kernel, SvmModel};
use dimred::data::{Dataset, FeatureMatrix, LabelVector};
use dimred::rng::SplitMix64;

pub fn random_matrix(rng: &mut SplitMix64, n: usize, d: usize) -> FeatureMatrix {
    let values = (0..n * d).map(|_| rng.next_f64()).collect();
    FeatureMatrix::new(n, d, values).unwrap()
}

/// Balanced binary labels in shuffled order.
pub fn balanced_labels(rng: &mut SplitMix64, n: usize) -> Vec<usize> {
    let mut y: Vec<usize> = (0..n).map(|i| i % 2).collect();
    rng.shuffle(&mut y);
    y
}

pub fn dataset(x: FeatureMatrix, y: Vec<usize>) -> Dataset {
    Dataset::unnamed(x, LabelVector::new(y).unwrap()).unwrap()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Centered scatter matrix `XcᵀXc`.
pub fn scatter(x: &FeatureMatrix) -> Vec<Vec<f64>> {
    let (n, d) = (x.n_rows(), x.n_cols());
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let mut s = vec![vec![0.0; d]; d];
    for i in 0..n {
        for a in 0..d {
            for b in 0..d {
                s[a][b] += (x.get(i, a) - mean[a]) * (x.get(i, b) - mean[b]);
            }
        }
    }
    s
}

/// ReliefF weights by direct evaluation: every neighbor set is found by a
/// full sort of the other samples, every term is added one at a time.
pub fn literal_relieff(x: &FeatureMatrix, y: &[usize], k: usize) -> Vec<f64> {
    let (n, d) = (x.n_rows(), x.n_cols());
    let n_classes = y.iter().max().unwrap() + 1;
    let prior: Vec<f64> = (0..n_classes)
        .map(|c| y.iter().filter(|&&l| l == c).count() as f64 / n as f64)
        .collect();
    let dist = |a: usize, b: usize| (0..d).map(|j| (x.get(a, j) - x.get(b, j)).abs()).sum::<f64>();
    let mut w = vec![0.0; d];
    let m = n as f64;
    for i in 0..n {
        for c in 0..n_classes {
            let mut others: Vec<usize> = (0..n).filter(|&l| l != i && y[l] == c).collect();
            others.sort_by(|&a, &b| {
                dist(i, a)
                    .partial_cmp(&dist(i, b))
                    .unwrap()
                    .then_with(|| x.row(a).partial_cmp(x.row(b)).unwrap())
                    .then(a.cmp(&b))
            });
            let kk = k.min(others.len());
            for &l in &others[..kk] {
                for j in 0..d {
                    let diff = (x.get(i, j) - x.get(l, j)).abs();
                    if c == y[i] {
                        w[j] -= diff / (m * kk as f64);
                    } else {
                        w[j] += prior[c] / (1.0 - prior[y[i]]) * diff / (m * kk as f64);
                    }
                }
            }
        }
    }
    w
}

fn entropy_bits(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// `H(A) + H(B) - H(A, B)` in bits.
pub fn mi_oracle(a: &[i64], b: &[i64]) -> f64 {
    let n = a.len() as f64;
    let mut ca: HashMap<i64, usize> = HashMap::new();
    let mut cb: HashMap<i64, usize> = HashMap::new();
    let mut cab: HashMap<(i64, i64), usize> = HashMap::new();
    for (&u, &v) in a.iter().zip(b) {
        *ca.entry(u).or_default() += 1;
        *cb.entry(v).or_default() += 1;
        *cab.entry((u, v)).or_default() += 1;
    }
    entropy_bits(ca.into_values(), n) + entropy_bits(cb.into_values(), n) - entropy_bits(cab.into_values(), n)
}

/// Greedy mRMR recomputing the whole-set relevance `D` and redundancy `R`
/// from scratch for every candidate.
pub fn brute_force_mrmr(cols: &[Vec<i64>], y: &[i64], steps: usize, quotient: bool) -> Vec<usize> {
    let d = cols.len();
    let score = |set: &[usize]| {
        let t = set.len() as f64;
        let dd: f64 = set.iter().map(|&j| mi_oracle(&cols[j], y)).sum::<f64>() / t;
        let mut rr = 0.0;
        for &a in set {
            for &b in set {
                rr += mi_oracle(&cols[a], &cols[b]);
            }
        }
        rr /= t * t;
        if quotient {
            dd / (rr + 1e-12)
        } else {
            dd - rr
        }
    };
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < steps {
        let scores: Vec<f64> = (0..d)
            .map(|j| {
                if chosen.contains(&j) {
                    f64::NEG_INFINITY
                } else if chosen.is_empty() {
                    mi_oracle(&cols[j], y)
                } else {
                    let mut s = chosen.clone();
                    s.push(j);
                    score(&s)
                }
            })
            .collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        chosen.push(scores.iter().position(|&s| s >= best - 1e-12).unwrap());
    }
    chosen
}

/// Full dual variables of a trained model, zero outside the support set.
pub fn full_alphas(model: &SvmModel, n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n];
    for (&i, &v) in model.support_indices.iter().zip(&model.alphas) {
        a[i] = v;
    }
    a
}

/// Largest violation of the soft-margin KKT conditions over the training
/// set, including the equality constraint.
pub fn kkt_residual(model: &SvmModel, x: &FeatureMatrix, y: &[f64]) -> f64 {
    let n = x.n_rows();
    let alpha = full_alphas(model, n);
    let c = model.c;
    let mut worst = alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs();
    for i in 0..n {
        let margin = y[i] * model.decision_value(x.row(i));
        let r = if alpha[i] <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha[i] >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(r).max((-alpha[i]).max(alpha[i] - c));
    }
    worst
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Exact dual optimum by enumerating every assignment of each multiplier to
/// `{0, C, free}` and solving the stationarity system on the free set.
pub fn brute_force_dual(x: &FeatureMatrix, y: &[f64], c: f64, gamma: f64) -> f64 {
    let n = x.n_rows();
    let k: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| rbf_kernel(x.row(i), x.row(j), gamma)).collect())
        .collect();
    let objective = |a: &[f64]| {
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * a[j] * y[i] * y[j] * k[i][j];
            }
        }
        a.iter().sum::<f64>() - 0.5 * quad
    };
    let mut best = f64::NEG_INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut rest = code;
        for s in state.iter_mut() {
            *s = (rest % 3) as u8;
            rest /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if !free.is_empty() {
            // Unknowns: alpha_F and b. Rows: y_i f(x_i) = 1 for i in F, and
            // sum_i alpha_i y_i = 0.
            let m = free.len();
            let mut a = vec![vec![0.0; m + 1]; m + 1];
            let mut rhs = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[r][s] = y[i] * y[j] * k[i][j];
                }
                a[r][m] = y[i];
                let fixed: f64 = (0..n)
                    .filter(|&j| state[j] == 1)
                    .map(|j| y[i] * y[j] * c * k[i][j])
                    .sum();
                rhs[r] = 1.0 - fixed;
            }
            for (s, &j) in free.iter().enumerate() {
                a[m][s] = y[j];
            }
            rhs[m] = -(0..n).filter(|&j| state[j] == 1).map(|j| c * y[j]).sum::<f64>();
            let Some(sol) = solve(a, rhs) else { continue };
            if free.iter().zip(&sol).any(|(_, &v)| v < -1e-12 || v > c + 1e-12) {
                continue;
            }
            for (&i, &v) in free.iter().zip(&sol) {
                alpha[i] = v.clamp(0.0, c);
            }
        }
        if alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs() > 1e-9 {
            continue;
        }
        best = best.max(objective(&alpha));
    }
    best
}
