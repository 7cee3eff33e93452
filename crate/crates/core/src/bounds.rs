//! Entrywise error rates with every absolute constant set to one.
//!
//! These are rates, not calibrated bounds: they are meant for comparing entries
//! against each other and for checking scaling behaviour. `log` is natural.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampling::ProbabilityMatrix;
use crate::selector::{kstar, SubmatrixPlan};

/// `r (r + sigma) sqrt(log⁵(n/delta) / (k* p*))` for a computed plan, where
/// `n` is the row count of the full matrix.
pub fn upper_rate_for_plan(plan: &SubmatrixPlan, n: usize, r: usize, sigma: f64, delta: f64) -> f64 {
    let denom = plan.k_star as f64 * plan.p_star;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    let log = (n as f64 / delta).ln();
    let r = r as f64;
    r * (r + sigma) * (log.powi(5) / denom).sqrt()
}

/// Upper-bound rate at `(i, j)`. Infinite when no submatrix size has a
/// positive objective.
pub fn upper_rate(
    p: &ProbabilityMatrix,
    i: usize,
    j: usize,
    r: usize,
    sigma: f64,
    delta: f64,
) -> Result<f64> {
    match kstar(p, i, j) {
        Ok(plan) => Ok(upper_rate_for_plan(&plan, p.nrows(), r, sigma, delta)),
        Err(Error::AllZero { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// `sigma sqrt(r / min(column sum at j, row sum at i))`. Needs no monotonicity.
pub fn lower_rate(p: &ProbabilityMatrix, i: usize, j: usize, r: usize, sigma: f64) -> f64 {
    lower_rate_from_sums(p.row_sum(i), p.col_sum(j), r, sigma)
}

fn lower_rate_from_sums(row_sum: f64, col_sum: f64, r: usize, sigma: f64) -> f64 {
    let mass = row_sum.min(col_sum);
    if mass <= 0.0 {
        return f64::INFINITY;
    }
    sigma * (r as f64 / mass).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePair {
    pub upper: f64,
    pub lower: f64,
}

/// Closed-form rates for a 2×2 block matrix, log factors and constants dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRateTable {
    pub top_left: RatePair,
    pub top_right: RatePair,
    pub bottom_left: RatePair,
    pub bottom_right: RatePair,
    /// `n1 q11 >= n q12`, `n1 q11 >= n q21`, `n1 q12 >= n q22`, `n1 q21 >= n q22`.
    pub dominance: [bool; 4],
}

impl BlockRateTable {
    pub fn dominance_holds(&self) -> bool {
        self.dominance.iter().all(|&b| b)
    }

    pub fn blocks(&self) -> [(&'static str, RatePair); 4] {
        [
            ("top_left", self.top_left),
            ("top_right", self.top_right),
            ("bottom_left", self.bottom_left),
            ("bottom_right", self.bottom_right),
        ]
    }
}

fn inv_sqrt(x: f64) -> f64 {
    if x <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / x.sqrt()
    }
}

pub fn block_rates(n1: usize, n2: usize, q11: f64, q12: f64, q21: f64, q22: f64) -> BlockRateTable {
    let (a, b) = (n1 as f64, n2 as f64);
    let n = a + b;
    let q_off = q12.min(q21);
    BlockRateTable {
        top_left: RatePair {
            upper: inv_sqrt(a * q11),
            lower: inv_sqrt(a * q11 + b * q12),
        },
        top_right: RatePair {
            upper: inv_sqrt(a * q12),
            lower: inv_sqrt(a * q12 + b * q22),
        },
        bottom_left: RatePair {
            upper: inv_sqrt(a * q21),
            lower: inv_sqrt(a * q21 + b * q22),
        },
        bottom_right: RatePair {
            upper: inv_sqrt(a * q_off),
            lower: inv_sqrt(a * q_off + b * q22),
        },
        dominance: [
            a * q11 >= n * q12,
            a * q11 >= n * q21,
            a * q12 >= n * q22,
            a * q21 >= n * q22,
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreconditionSummary {
    /// Entries failing `p* >= log(n/delta) / k*`.
    pub flagged: usize,
    pub total: usize,
    /// Whether `min P >= log(n/delta) / (n + m)`, the whole-matrix condition.
    pub whole_matrix_ok: bool,
}

#[derive(Debug, Clone)]
pub struct Preconditions {
    pub ok: DMatrix<bool>,
    pub summary: PreconditionSummary,
}

pub fn precondition_flags(p: &ProbabilityMatrix, delta: f64) -> Result<Preconditions> {
    if !p.is_certified_monotone() {
        return Err(Error::NotMonotone);
    }
    let (n, m) = p.shape();
    let log = (n as f64 / delta).ln();
    let mut ok = DMatrix::from_element(n, m, false);
    for j in 0..m {
        for i in 0..n {
            ok[(i, j)] = match kstar(p, i, j) {
                Ok(plan) => plan.p_star >= log / plan.k_star as f64,
                Err(Error::AllZero { .. }) => false,
                Err(e) => return Err(e),
            };
        }
    }
    let flagged = ok.iter().filter(|&&b| !b).count();
    Ok(Preconditions {
        ok,
        summary: PreconditionSummary {
            flagged,
            total: n * m,
            whole_matrix_ok: p.min() >= log / (n + m) as f64,
        },
    })
}

/// Everything the bound calculator produces for one probability matrix.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub upper_rate: DMatrix<f64>,
    pub lower_rate: DMatrix<f64>,
    pub preconditions: Preconditions,
    pub delta: f64,
    pub block_summary: Option<BlockRateTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct BlockParams {
    pub n1: usize,
    pub n2: usize,
    pub q11: f64,
    pub q12: f64,
    pub q21: f64,
    pub q22: f64,
}

pub fn bound_report(
    p: &ProbabilityMatrix,
    r: usize,
    sigma: f64,
    delta: f64,
    block: Option<BlockParams>,
) -> Result<BoundReport> {
    let (n, m) = p.shape();
    let row_sums: Vec<f64> = (0..n).map(|i| p.row_sum(i)).collect();
    let col_sums: Vec<f64> = (0..m).map(|j| p.col_sum(j)).collect();
    let mut upper = DMatrix::zeros(n, m);
    let mut lower = DMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            upper[(i, j)] = upper_rate(p, i, j, r, sigma, delta)?;
            lower[(i, j)] = lower_rate_from_sums(row_sums[i], col_sums[j], r, sigma);
        }
    }
    Ok(BoundReport {
        upper_rate: upper,
        lower_rate: lower,
        preconditions: precondition_flags(p, delta)?,
        delta,
        block_summary: block.map(|b| block_rates(b.n1, b.n2, b.q11, b.q12, b.q21, b.q22)),
    })
}
