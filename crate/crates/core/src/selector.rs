//! Per-entry submatrix selection.
//!
//! For a target `(i, j)` the selector scans submatrix sizes `k` and scores each
//! by `k · min(P[max(i,k)][k], P[k][max(j,k)])` (1-based), the product of the
//! submatrix size and the smallest probability on its last row and column
//! (the target itself excepted). The best `k` is `k*`; the submatrix handed to
//! the estimator is rows `[k*] ∪ {i}` by columns `[k*] ∪ {j}`.
//!
//! All argmaxes break ties toward the largest index. With that rule the core
//! size `i* = argmax_i i·P_ii` equals `k*` for every target inside the core,
//! exactly.
//!
//! Rust indices here are 0-based; `k_star` and `i_star` are sizes.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampling::ProbabilityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaleMode {
    Plain,
    /// Both target indices fall outside `[k*]`; the target's own divisor is floored.
    FloorTarget,
}

impl RescaleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RescaleMode::Plain => "plain",
            RescaleMode::FloorTarget => "floor_target",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmatrixPlan {
    pub target: (usize, usize),
    pub k_star: usize,
    pub p_star: f64,
    /// Attained objective `k* · p*`.
    pub objective: f64,
    /// `0..k*`, then the target row if it lies outside.
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub mode: RescaleMode,
    /// Position of the target inside the extracted submatrix.
    pub target_pos: (usize, usize),
}

/// Score of size `k` (1-based size) for 0-based target `(i, j)`.
#[inline]
pub fn objective(p: &ProbabilityMatrix, i: usize, j: usize, k: usize) -> (f64, f64) {
    let last = k - 1;
    let q = p.get(i.max(last), last).min(p.get(last, j.max(last)));
    (k as f64 * q, q)
}

fn require_certificate(p: &ProbabilityMatrix) -> Result<()> {
    if p.is_certified_monotone() {
        Ok(())
    } else {
        Err(Error::NotMonotone)
    }
}

pub fn kstar(p: &ProbabilityMatrix, i: usize, j: usize) -> Result<SubmatrixPlan> {
    require_certificate(p)?;
    let (n, m) = p.shape();
    if i >= n || j >= m {
        return Err(Error::dims((n, m), (i + 1, j + 1)));
    }
    let mut best = (0.0, 0.0, 0usize);
    for k in 1..=n.min(m) {
        let (obj, q) = objective(p, i, j, k);
        if obj >= best.0 {
            best = (obj, q, k);
        }
    }
    let (obj, p_star, k_star) = best;
    if obj <= 0.0 {
        return Err(Error::AllZero { row: i, col: j });
    }
    Ok(build_plan(i, j, k_star, p_star, obj))
}

fn build_plan(i: usize, j: usize, k_star: usize, p_star: f64, objective: f64) -> SubmatrixPlan {
    let mut rows: Vec<usize> = (0..k_star).collect();
    let mut cols: Vec<usize> = (0..k_star).collect();
    let row_outside = i >= k_star;
    let col_outside = j >= k_star;
    if row_outside {
        rows.push(i);
    }
    if col_outside {
        cols.push(j);
    }
    let target_pos = (
        if row_outside { k_star } else { i },
        if col_outside { k_star } else { j },
    );
    SubmatrixPlan {
        target: (i, j),
        k_star,
        p_star,
        objective,
        rows,
        cols,
        mode: if row_outside && col_outside {
            RescaleMode::FloorTarget
        } else {
            RescaleMode::Plain
        },
        target_pos,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreSubmatrix {
    pub i_star: usize,
    pub objective: f64,
}

/// Largest maximiser of `i · P_ii` over `i = 1..=min(n, m)`.
pub fn istar(p: &ProbabilityMatrix) -> Result<CoreSubmatrix> {
    let mut best = CoreSubmatrix {
        i_star: 0,
        objective: 0.0,
    };
    for k in 1..=p.nrows().min(p.ncols()) {
        let obj = k as f64 * p.get(k - 1, k - 1);
        if obj >= best.objective {
            best = CoreSubmatrix {
                i_star: k,
                objective: obj,
            };
        }
    }
    if best.objective <= 0.0 {
        return Err(Error::AllZero { row: 0, col: 0 });
    }
    Ok(best)
}

/// Checks `k*(i, j) = i*` across the core. Exhaustive when `n <= 64`,
/// otherwise 200 pairs drawn from a fixed-seed generator.
pub fn verify_core_lemma(p: &ProbabilityMatrix) -> Result<bool> {
    require_certificate(p)?;
    let core = istar(p)?.i_star;
    let check = |i: usize, j: usize| -> Result<bool> { Ok(kstar(p, i, j)?.k_star == core) };
    if p.nrows() <= 64 {
        for i in 0..core {
            for j in 0..core {
                if !check(i, j)? {
                    return Ok(false);
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..200 {
            let (i, j) = (rng.random_range(0..core), rng.random_range(0..core));
            if !check(i, j)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Entries sharing one submatrix, hence one SVD.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanGroup {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub k_star: usize,
    pub mode: RescaleMode,
    /// Indices into [`PlanSet::plans`].
    pub members: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PlanSet {
    pub shape: (usize, usize),
    /// Column-major over entries: plan for `(i, j)` is at `j * n + i`.
    pub plans: Vec<SubmatrixPlan>,
    pub group_of: Vec<usize>,
    /// Sorted by `(rows, cols)`.
    pub groups: Vec<PlanGroup>,
}

impl PlanSet {
    pub fn plan(&self, i: usize, j: usize) -> &SubmatrixPlan {
        &self.plans[j * self.shape.0 + i]
    }

    pub fn group_id(&self, i: usize, j: usize) -> usize {
        self.group_of[j * self.shape.0 + i]
    }

    /// One row per entry: `i,j,k_star,p_star,mode,group_id`, 1-based indices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,k_star,p_star,mode,group_id\n");
        let (n, m) = self.shape;
        for i in 0..n {
            for j in 0..m {
                let plan = self.plan(i, j);
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    i + 1,
                    j + 1,
                    plan.k_star,
                    crate::grid_io::format_value(plan.p_star),
                    plan.mode.as_str(),
                    self.group_id(i, j) + 1
                ));
            }
        }
        out
    }
}

pub fn plan_all(p: &ProbabilityMatrix) -> Result<PlanSet> {
    require_certificate(p)?;
    let (n, m) = p.shape();
    let mut plans = Vec::with_capacity(n * m);
    for j in 0..m {
        for i in 0..n {
            plans.push(kstar(p, i, j)?);
        }
    }
    let mut keyed: BTreeMap<(&[usize], &[usize]), Vec<usize>> = BTreeMap::new();
    for (idx, plan) in plans.iter().enumerate() {
        keyed
            .entry((plan.rows.as_slice(), plan.cols.as_slice()))
            .or_default()
            .push(idx);
    }
    let mut group_of = vec![0; plans.len()];
    let groups: Vec<PlanGroup> = keyed
        .into_iter()
        .enumerate()
        .map(|(gid, ((rows, cols), members))| {
            for &idx in &members {
                group_of[idx] = gid;
            }
            let first = &plans[members[0]];
            PlanGroup {
                rows: rows.to_vec(),
                cols: cols.to_vec(),
                k_star: first.k_star,
                mode: first.mode,
                members,
            }
        })
        .collect();
    Ok(PlanSet {
        shape: (n, m),
        plans,
        group_of,
        groups,
    })
}
