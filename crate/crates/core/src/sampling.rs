//! Sampling probability matrices and Bernoulli observation masks.
//!
//! A [`ProbabilityMatrix`] holds the entrywise observation probabilities `P`.
//! Everything downstream of the selector needs `P` to be *monotone*: entries
//! are non-increasing down every column and along every row. The certificate
//! is recorded on the matrix once checked, so later stages can refuse
//! uncertified input cheaply.
//!
//! Indices in this module are 0-based.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    p: DMatrix<f64>,
    monotone: bool,
}

impl ProbabilityMatrix {
    /// Validates a row-major grid. The monotone certificate starts unset.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::EmptyMatrix);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::RaggedGrid {
                    row: i,
                    expected: m,
                    found: row.len(),
                });
            }
        }
        Self::from_matrix(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }

    pub fn from_matrix(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() == 0 || p.ncols() == 0 {
            return Err(Error::EmptyMatrix);
        }
        for j in 0..p.ncols() {
            for i in 0..p.nrows() {
                let v = p[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        Ok(Self { p, monotone: false })
    }

    pub fn nrows(&self) -> usize {
        self.p.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.p.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.p.shape()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.p
    }

    pub fn is_certified_monotone(&self) -> bool {
        self.monotone
    }

    /// Checks monotonicity and records the certificate when it holds.
    pub fn certify_monotone(&mut self) -> bool {
        self.monotone = is_monotone(&self.p);
        self.monotone
    }

    /// Builder form of [`certify_monotone`](Self::certify_monotone).
    pub fn certified(mut self) -> Result<Self> {
        if self.certify_monotone() {
            Ok(self)
        } else {
            Err(Error::NotMonotone)
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.p.row(i).iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        self.p.column(j).iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.p.min()
    }

    pub fn max(&self) -> f64 {
        self.p.max()
    }
}

/// True iff `p[i][j] >= p[i'][j']` whenever `i <= i'` and `j <= j'`.
///
/// Only right and down neighbours are compared; the pairwise property follows
/// by transitivity along any monotone lattice path.
pub fn is_monotone(p: &DMatrix<f64>) -> bool {
    let (n, m) = p.shape();
    for j in 0..m {
        for i in 0..n {
            let v = p[(i, j)];
            if i + 1 < n && p[(i + 1, j)] > v {
                return false;
            }
            if j + 1 < m && p[(i, j + 1)] > v {
                return false;
            }
        }
    }
    true
}

/// Row and column orderings. Position `k` of the permuted matrix holds
/// original row `rows[k]` (likewise for columns).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotonePermutation {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl MonotonePermutation {
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            rows: (0..n).collect(),
            cols: (0..m).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rows.iter().enumerate().all(|(k, &r)| k == r)
            && self.cols.iter().enumerate().all(|(k, &c)| k == c)
    }

    pub fn inverse(&self) -> Self {
        Self {
            rows: invert(&self.rows),
            cols: invert(&self.cols),
        }
    }

    /// Reorders any grid of matching shape.
    pub fn apply_to<T: nalgebra::Scalar>(&self, grid: &DMatrix<T>) -> Result<DMatrix<T>> {
        let shape = (self.rows.len(), self.cols.len());
        if grid.shape() != shape {
            return Err(Error::dims(shape, grid.shape()));
        }
        Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| {
            grid[(self.rows[i], self.cols[j])].clone()
        }))
    }

    fn validate(&self) -> Result<()> {
        for perm in [&self.rows, &self.cols] {
            let mut seen = vec![false; perm.len()];
            for &k in perm.iter() {
                if k >= perm.len() || std::mem::replace(&mut seen[k], true) {
                    return Err(Error::Config(format!("not a permutation: {perm:?}")));
                }
            }
        }
        Ok(())
    }
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &v) in perm.iter().enumerate() {
        inv[v] = k;
    }
    inv
}

/// Sorts rows by descending row sum, then columns by descending column sum of
/// the row-sorted matrix (stable under ties), and verifies the result.
pub fn find_monotone_permutations(p: &ProbabilityMatrix) -> Result<MonotonePermutation> {
    let (n, m) = p.shape();
    let mut rows: Vec<usize> = (0..n).collect();
    rows.sort_by(|&a, &b| p.row_sum(b).total_cmp(&p.row_sum(a)));
    let row_sorted = DMatrix::from_fn(n, m, |i, j| p.get(rows[i], j));
    let col_sums: Vec<f64> = (0..m).map(|j| row_sorted.column(j).sum()).collect();
    let mut cols: Vec<usize> = (0..m).collect();
    cols.sort_by(|&a, &b| col_sums[b].total_cmp(&col_sums[a]));

    let perm = MonotonePermutation { rows, cols };
    if is_monotone(&perm.apply_to(p.as_matrix())?) {
        Ok(perm)
    } else {
        Err(Error::NotMonotonizable)
    }
}

/// Returns the permuted matrix; the certificate is re-checked, not carried over.
pub fn apply_permutations(
    p: &ProbabilityMatrix,
    perm: &MonotonePermutation,
) -> Result<ProbabilityMatrix> {
    perm.validate()?;
    let mut out = ProbabilityMatrix {
        p: perm.apply_to(p.as_matrix())?,
        monotone: false,
    };
    out.certify_monotone();
    Ok(out)
}

/// Two-by-two block-constant matrix of size `(n1 + n2)²`.
pub fn make_block_p(
    n1: usize,
    n2: usize,
    q11: f64,
    q12: f64,
    q21: f64,
    q22: f64,
) -> Result<ProbabilityMatrix> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::EmptyMatrix);
    }
    let n = n1 + n2;
    let grid = DMatrix::from_fn(n, n, |i, j| match (i < n1, j < n1) {
        (true, true) => q11,
        (true, false) => q12,
        (false, true) => q21,
        (false, false) => q22,
    });
    let mut p = ProbabilityMatrix::from_matrix(grid)?;
    p.certify_monotone();
    Ok(p)
}

/// Row and column factors of a rank-one probability matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneFactors {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl RankOneFactors {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || beta.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        for (v, row, col) in alpha
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, k, 0))
            .chain(beta.iter().enumerate().map(|(k, &v)| (v, 0, k)))
        {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { row, col, value: v });
            }
        }
        Ok(Self { alpha, beta })
    }

    /// Both factors sorted in descending order.
    pub fn sorted(mut self) -> Self {
        sort_descending(&mut self.alpha);
        sort_descending(&mut self.beta);
        self
    }
}

fn sort_descending(v: &mut [f64]) {
    v.sort_by(|a, b| b.total_cmp(a));
}

/// Outer product `alpha betaᵀ`; certified when it comes out monotone.
pub fn make_rank_one_p(factors: &RankOneFactors) -> Result<ProbabilityMatrix> {
    let RankOneFactors { alpha, beta } = factors;
    let grid = DMatrix::from_fn(alpha.len(), beta.len(), |i, j| alpha[i] * beta[j]);
    let mut p = ProbabilityMatrix::from_matrix(grid)?;
    p.certify_monotone();
    Ok(p)
}

/// Draws `n` values, the first `split` from `0.5·Beta(5,2) + 0.5` and the
/// rest from `0.5·Beta(5,2)`, returned in descending order.
pub fn sample_beta_mixture_factors<R: Rng + ?Sized>(
    n: usize,
    split: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if split == 0 || split > n {
        return Err(Error::Config(format!(
            "split index {split} must lie in [1, {n}]"
        )));
    }
    let beta = Beta::new(5.0, 2.0).expect("valid Beta parameters");
    let mut out: Vec<f64> = (0..n)
        .map(|k| {
            let x = 0.5 * beta.sample(rng);
            if k < split {
                x + 0.5
            } else {
                x
            }
        })
        .collect();
    sort_descending(&mut out);
    Ok(out)
}

/// Observation mask; `true` marks an observed entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    bits: DMatrix<bool>,
}

impl Mask {
    pub fn full(n: usize, m: usize) -> Self {
        Self {
            bits: DMatrix::from_element(n, m, true),
        }
    }

    pub fn from_bits(bits: DMatrix<bool>) -> Self {
        Self { bits }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.bits.shape()
    }

    #[inline]
    pub fn observed(&self, i: usize, j: usize) -> bool {
        self.bits[(i, j)]
    }

    pub fn bits(&self) -> &DMatrix<bool> {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        self.bits.map(|b| if b { 1.0 } else { 0.0 })
    }
}

/// Independent Bernoulli(`P_ij`) draw per entry, in column-major order.
pub fn sample_mask<R: Rng + ?Sized>(p: &ProbabilityMatrix, rng: &mut R) -> Mask {
    let m = p.as_matrix();
    Mask {
        bits: m.map(|q| rng.random::<f64>() < q),
    }
}

/// Structured description of a probability matrix, as stored in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbabilityDescriptor {
    Block {
        n1: usize,
        n2: usize,
        q11: f64,
        q12: f64,
        q21: f64,
        q22: f64,
    },
    RankOne {
        alpha: Vec<f64>,
        beta: Vec<f64>,
    },
    /// Beta-mixture factors; the row factor is drawn first, then the column
    /// factor, from one generator seeded with `seed`.
    RankOneBeta {
        n: usize,
        m: usize,
        split: usize,
        seed: u64,
    },
    Csv {
        path: std::path::PathBuf,
    },
}

impl ProbabilityDescriptor {
    pub fn build(&self) -> Result<ProbabilityMatrix> {
        match self {
            Self::Block {
                n1,
                n2,
                q11,
                q12,
                q21,
                q22,
            } => make_block_p(*n1, *n2, *q11, *q12, *q21, *q22),
            Self::RankOne { alpha, beta } => {
                make_rank_one_p(&RankOneFactors::new(alpha.clone(), beta.clone())?)
            }
            Self::RankOneBeta { n, m, split, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let alpha = sample_beta_mixture_factors(*n, *split, &mut rng)?;
                let beta = sample_beta_mixture_factors(*m, *split, &mut rng)?;
                make_rank_one_p(&RankOneFactors::new(alpha, beta)?)
            }
            Self::Csv { path } => {
                let mut p = ProbabilityMatrix::from_matrix(crate::grid_io::read_grid(path)?)?;
                p.certify_monotone();
                Ok(p)
            }
        }
    }

    /// Row/column split for block-structured aggregates, if any.
    pub fn block_split(&self) -> Option<usize> {
        match self {
            Self::Block { n1, .. } => Some(*n1),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&[f64]]) -> ProbabilityMatrix {
        ProbabilityMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn validation_accepts_boundaries_and_rejects_out_of_range() {
        grid(&[&[0.3, 0.3], &[0.3, 0.05]]);
        grid(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let err = ProbabilityMatrix::from_rows(&[vec![0.5, 1.1]]).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { row: 0, col: 1, .. }));
        assert!(matches!(
            ProbabilityMatrix::from_rows(&[]).unwrap_err(),
            Error::EmptyMatrix
        ));
        assert!(matches!(
            ProbabilityMatrix::from_rows(&[vec![]]).unwrap_err(),
            Error::EmptyMatrix
        ));
        assert!(matches!(
            ProbabilityMatrix::from_rows(&[vec![0.1], vec![f64::NAN]]).unwrap_err(),
            Error::OutOfRange { .. }
        ));
        assert!(!grid(&[&[0.3]]).is_certified_monotone());
    }

    #[test]
    fn monotone_checks() {
        let mut a = grid(&[&[0.3, 0.3], &[0.3, 0.05]]);
        assert!(a.certify_monotone());
        assert!(a.is_certified_monotone());
        let mut b = grid(&[&[0.1, 0.9], &[0.2, 0.3]]);
        assert!(!b.certify_monotone());
        assert!(is_monotone(&DMatrix::from_element(4, 7, 0.42)));
    }

    #[test]
    fn permutation_discovery() {
        let p = grid(&[&[0.1, 0.9], &[0.05, 0.3]]);
        let perm = find_monotone_permutations(&p).unwrap();
        assert_eq!(perm.rows, vec![0, 1]);
        assert_eq!(perm.cols, vec![1, 0]);
        let q = apply_permutations(&p, &perm).unwrap();
        assert_eq!(q.as_matrix(), &DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.05]));
        assert!(q.is_certified_monotone());

        let sorted = grid(&[&[0.5, 0.5, 0.2], &[0.5, 0.5, 0.1]]);
        assert!(find_monotone_permutations(&sorted).unwrap().is_identity());

        let eye = grid(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            find_monotone_permutations(&eye),
            Err(Error::NotMonotonizable)
        ));
    }

    #[test]
    fn identity_matrix_has_no_monotone_permutation_by_exhaustion() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let perms = [[0usize, 1], [1, 0]];
        for r in perms {
            for c in perms {
                let q = DMatrix::from_fn(2, 2, |i, j| eye[(r[i], c[j])]);
                assert!(!is_monotone(&q));
            }
        }
    }

    #[test]
    fn permutation_round_trip_and_mismatch() {
        let p = grid(&[&[0.1, 0.9, 0.4], &[0.2, 0.3, 0.7]]);
        let perm = MonotonePermutation {
            rows: vec![1, 0],
            cols: vec![2, 0, 1],
        };
        let q = apply_permutations(&p, &perm).unwrap();
        let back = apply_permutations(&q, &perm.inverse()).unwrap();
        assert_eq!(back.as_matrix(), p.as_matrix());
        let id = MonotonePermutation::identity(2, 3);
        assert_eq!(apply_permutations(&p, &id).unwrap().as_matrix(), p.as_matrix());
        let bad = MonotonePermutation::identity(3, 3);
        assert!(matches!(
            apply_permutations(&p, &bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn block_constructions() {
        let p = make_block_p(50, 50, 0.3, 0.3, 0.3, 0.05).unwrap();
        assert_eq!(p.shape(), (100, 100));
        assert_eq!(p.get(49, 99), 0.3);
        assert_eq!(p.get(99, 49), 0.3);
        assert_eq!(p.get(50, 50), 0.05);
        assert!(p.is_certified_monotone());

        let c = make_block_p(3, 2, 0.4, 0.4, 0.4, 0.4).unwrap();
        assert!(c.as_matrix().iter().all(|&v| v == 0.4));

        assert!(make_block_p(2, 2, 1.0, 0.5, 0.5, 0.25)
            .unwrap()
            .is_certified_monotone());
        assert!(matches!(
            make_block_p(2, 2, 1.0, 0.5, 1.5, 0.25),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn rank_one_constructions() {
        let ones = RankOneFactors::new(vec![1.0; 3], vec![1.0; 4]).unwrap();
        assert!(make_rank_one_p(&ones).unwrap().as_matrix().iter().all(|&v| v == 1.0));
        let f = RankOneFactors::new(vec![1.0, 0.5], vec![1.0, 0.5]).unwrap();
        let p = make_rank_one_p(&f).unwrap();
        assert_eq!(p.as_matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.25]));
        assert!(p.is_certified_monotone());
        assert!(RankOneFactors::new(vec![1.2], vec![0.5]).is_err());
    }

    #[test]
    fn beta_mixture_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = sample_beta_mixture_factors(100, 80, &mut rng).unwrap();
            assert!(a.windows(2).all(|w| w[0] >= w[1]));
            assert!(a[..80].iter().all(|&x| x >= 0.5));
            assert!(a[80..].iter().all(|&x| x <= 0.5));
        }
        let a = sample_beta_mixture_factors(30, 30, &mut rng).unwrap();
        assert!(a.iter().all(|&x| (0.5..=1.0).contains(&x)));
        assert!(sample_beta_mixture_factors(10, 0, &mut rng).is_err());
        assert!(sample_beta_mixture_factors(10, 11, &mut rng).is_err());
    }

    #[test]
    fn beta_mixture_high_component_mean() {
        // Beta(5,2) has mean 5/7.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = sample_beta_mixture_factors(100_000, 100_000, &mut rng).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - (0.5 * 5.0 / 7.0 + 0.5)).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn beta_mixture_rank_one_extremes() {
        let desc = ProbabilityDescriptor::RankOneBeta {
            n: 100,
            m: 100,
            split: 80,
            seed: 0,
        };
        let p = desc.build().unwrap();
        assert!(p.is_certified_monotone());
        assert!(p.max() > 0.9 && p.max() <= 1.0, "max {}", p.max());
        assert!(p.min() < 0.1, "min {}", p.min());
    }

    #[test]
    fn mask_extremes_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ones = ProbabilityMatrix::from_matrix(DMatrix::from_element(6, 4, 1.0)).unwrap();
        assert_eq!(sample_mask(&ones, &mut rng).count(), 24);
        let zeros = ProbabilityMatrix::from_matrix(DMatrix::from_element(6, 4, 0.0)).unwrap();
        assert_eq!(sample_mask(&zeros, &mut rng).count(), 0);

        let p = ProbabilityMatrix::from_matrix(DMatrix::from_element(100, 100, 0.3)).unwrap();
        let mut misses = 0;
        for _ in 0..200 {
            let frac = sample_mask(&p, &mut rng).count() as f64 / 1e4;
            if !(0.27..=0.33).contains(&frac) {
                misses += 1;
            }
        }
        assert!(misses <= 2, "{misses} of 200 masks outside [0.27, 0.33]");
    }

    #[test]
    fn mask_is_seed_deterministic() {
        let p = make_block_p(5, 5, 0.7, 0.4, 0.4, 0.1).unwrap();
        let a = sample_mask(&p, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_mask(&p, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn descriptor_json_shape() {
        let d: ProbabilityDescriptor = serde_json::from_str(
            r#"{"kind":"block","n1":50,"n2":50,"q11":0.3,"q12":0.3,"q21":0.3,"q22":0.05}"#,
        )
        .unwrap();
        assert_eq!(d.block_split(), Some(50));
        assert_eq!(d.build().unwrap().shape(), (100, 100));
        let s = serde_json::to_string(&ProbabilityDescriptor::RankOne {
            alpha: vec![1.0],
            beta: vec![0.5],
        })
        .unwrap();
        assert!(s.starts_with(r#"{"kind":"rank_one""#), "{s}");
    }
}
