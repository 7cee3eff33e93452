#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use submatrix_core::ProbabilityMatrix;

/// Uniform draws sorted along rows, then along columns. Sorting columns keeps
/// rows sorted, so the result is monotone. `ties` rounds to one decimal first.
pub fn random_monotone<R: Rng>(rng: &mut R, n: usize, m: usize, ties: bool) -> ProbabilityMatrix {
    let mut g = DMatrix::from_fn(n, m, |_, _| {
        let v: f64 = rng.random();
        if ties {
            (v * 10.0).round() / 10.0
        } else {
            v
        }
    });
    for i in 0..n {
        let mut row: Vec<f64> = g.row(i).iter().copied().collect();
        row.sort_by(|a, b| b.total_cmp(a));
        for (j, v) in row.into_iter().enumerate() {
            g[(i, j)] = v;
        }
    }
    for j in 0..m {
        let mut col: Vec<f64> = g.column(j).iter().copied().collect();
        col.sort_by(|a, b| b.total_cmp(a));
        for (i, v) in col.into_iter().enumerate() {
            g[(i, j)] = v;
        }
    }
    ProbabilityMatrix::from_matrix(g).unwrap().certified().unwrap()
}

/// Exhaustive scan: for every size k, the smallest probability anywhere in
/// `[k] ∪ {i}` × `[k] ∪ {j}`, skipping the target only when it sits outside
/// `[k]` in both coordinates. Returns `(k, k · min)` for the largest best k,
/// with `k` 1-based and `i`, `j` 0-based.
pub fn oracle_kstar(p: &DMatrix<f64>, i: usize, j: usize) -> (usize, f64) {
    let (n, m) = p.shape();
    let mut best = (0, f64::NEG_INFINITY);
    for k in 1..=n.min(m) {
        let mut rows: Vec<usize> = (0..k).collect();
        if i >= k {
            rows.push(i);
        }
        let mut cols: Vec<usize> = (0..k).collect();
        if j >= k {
            cols.push(j);
        }
        let skip_target = i >= k && j >= k;
        let mut lo = f64::INFINITY;
        for &a in &rows {
            for &b in &cols {
                if skip_target && (a, b) == (i, j) {
                    continue;
                }
                lo = lo.min(p[(a, b)]);
            }
        }
        let v = k as f64 * lo;
        if v >= best.1 {
            best = (k, v);
        }
    }
    best
}

/// `argmax_i i · P_ii`, largest index on ties, 1-based.
pub fn oracle_istar(p: &DMatrix<f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for k in 1..=p.nrows().min(p.ncols()) {
        let v = k as f64 * p[(k - 1, k - 1)];
        if v >= best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Best rank-r Frobenius residual from the eigenvalues of MᵀM, without an SVD.
pub fn tail_energy(m: &DMatrix<f64>, r: usize) -> f64 {
    let g = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let mut ev: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev.iter().skip(r).map(|v| v.max(0.0)).sum::<f64>().sqrt()
}

/// Comma-separated grid parsed with plain string splitting.
pub fn parse_grid_plain(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|t| match t.trim() {
                    "nan" => f64::NAN,
                    "inf" => f64::INFINITY,
                    "-inf" => f64::NEG_INFINITY,
                    s => s.parse().unwrap(),
                })
                .collect()
        })
        .collect()
}

/// Mean of the finite cells selected by `keep`, summed in row-major order.
pub fn region_mean(grid: &[Vec<f64>], keep: impl Fn(usize, usize) -> bool) -> Option<f64> {
    let (mut s, mut c) = (0.0, 0usize);
    for (i, row) in grid.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if keep(i, j) && v.is_finite() {
                s += v;
                c += 1;
            }
        }
    }
    (c > 0).then(|| s / c as f64)
}
