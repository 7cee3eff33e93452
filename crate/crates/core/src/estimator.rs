//! Rescaled hard-thresholded SVD, on the whole matrix or per selected submatrix.
//!
//! The estimator divides each observation by its sampling probability and keeps
//! the best rank-r approximation of the result. The submatrix variant runs the
//! same procedure on the rows and columns chosen by the selector and reads off
//! the target entry. When the target sits outside `[k*]` in both coordinates
//! its own probability is the smallest in the submatrix, so its divisor is
//! floored to `max(1/2, p*)`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::{Mask, ProbabilityMatrix};
use crate::selector::{plan_all, PlanGroup, PlanSet, RescaleMode, SubmatrixPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct RescaledMatrix {
    pub values: DMatrix<f64>,
    pub denominators: DMatrix<f64>,
    /// Entries whose divisor was replaced by the floor.
    pub floored: Vec<(usize, usize)>,
}

fn check_shapes(y: &DMatrix<f64>, mask: &Mask, p: &DMatrix<f64>) -> Result<()> {
    if mask.shape() != y.shape() {
        return Err(Error::dims(y.shape(), mask.shape()));
    }
    if p.shape() != y.shape() {
        return Err(Error::dims(y.shape(), p.shape()));
    }
    Ok(())
}

fn rescale_raw(
    y: &DMatrix<f64>,
    mask: &Mask,
    p: &DMatrix<f64>,
    floored: &[(usize, usize)],
    floor: f64,
) -> Result<RescaledMatrix> {
    check_shapes(y, mask, p)?;
    let mut denominators = p.clone();
    for &(i, j) in floored {
        if i >= y.nrows() || j >= y.ncols() {
            return Err(Error::dims(y.shape(), (i + 1, j + 1)));
        }
        denominators[(i, j)] = floor;
    }
    let (n, m) = y.shape();
    let mut values = DMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            if mask.observed(i, j) {
                let d = denominators[(i, j)];
                if d <= 0.0 {
                    return Err(Error::DivisionByZeroProbability { row: i, col: j });
                }
                values[(i, j)] = y[(i, j)] / d;
            }
        }
    }
    Ok(RescaledMatrix {
        values,
        denominators,
        floored: floored.to_vec(),
    })
}

/// `Y_ij / P_ij` on observed entries, 0 elsewhere.
pub fn rescale(y: &DMatrix<f64>, mask: &Mask, p: &DMatrix<f64>) -> Result<RescaledMatrix> {
    rescale_raw(y, mask, p, &[], 0.0)
}

/// As [`rescale`], but entries in `floored` are divided by `max(1/2, p_ref)`.
pub fn rescale_with_floor(
    y: &DMatrix<f64>,
    mask: &Mask,
    p: &DMatrix<f64>,
    floored: &[(usize, usize)],
    p_ref: f64,
) -> Result<RescaledMatrix> {
    rescale_raw(y, mask, p, floored, floor_divisor(p_ref))
}

#[inline]
pub fn floor_divisor(p_ref: f64) -> f64 {
    p_ref.max(0.5)
}

/// Top-r singular triplets, values descending.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// n×r
    pub u: DMatrix<f64>,
    pub singular_values: nalgebra::DVector<f64>,
    /// m×r
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (k, s) in self.singular_values.iter().enumerate() {
            us.column_mut(k).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Single entry of the reconstruction.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        (0..self.singular_values.len())
            .map(|k| self.u[(i, k)] * self.singular_values[k] * self.v[(j, k)])
            .sum()
    }
}

const SVD_EPS: f64 = 1e-14;
const SVD_MAX_ITER: usize = 10_000;

pub fn truncated_svd(m: &DMatrix<f64>, r: usize) -> Result<TruncatedSvd> {
    let (n, c) = m.shape();
    if r == 0 || r > n.min(c) {
        return Err(Error::InvalidRank {
            rank: r,
            rows: n,
            cols: c,
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite input to SVD".into()));
    }
    let svd = nalgebra::SVD::try_new(m.clone(), true, true, SVD_EPS, SVD_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure(format!("SVD of {n}x{c} did not converge")))?;
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    Ok(TruncatedSvd {
        u: u.columns(0, r).into_owned(),
        singular_values: svd.singular_values.rows(0, r).into_owned(),
        v: v_t.rows(0, r).transpose(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EstimateSource {
    Whole,
    /// Submatrix completion, with the number of distinct SVDs run.
    Sub { groups: usize },
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub m_hat: DMatrix<f64>,
    pub rank: usize,
    pub source: EstimateSource,
}

/// Rescale the full matrix and truncate to rank `r`.
pub fn svt_whole(
    y: &DMatrix<f64>,
    mask: &Mask,
    p: &ProbabilityMatrix,
    r: usize,
) -> Result<Estimate> {
    let scaled = rescale(y, mask, p.as_matrix())?;
    let svd = truncated_svd(&scaled.values, r)?;
    Ok(Estimate {
        m_hat: svd.reconstruct(),
        rank: r,
        source: EstimateSource::Whole,
    })
}

struct Submatrix {
    y: DMatrix<f64>,
    mask: Mask,
    p: DMatrix<f64>,
}

fn extract(
    y: &DMatrix<f64>,
    mask: &Mask,
    p: &ProbabilityMatrix,
    rows: &[usize],
    cols: &[usize],
) -> Submatrix {
    let (a, b) = (rows.len(), cols.len());
    Submatrix {
        y: DMatrix::from_fn(a, b, |r, c| y[(rows[r], cols[c])]),
        mask: Mask::from_bits(DMatrix::from_fn(a, b, |r, c| {
            mask.observed(rows[r], cols[c])
        })),
        p: DMatrix::from_fn(a, b, |r, c| p.get(rows[r], cols[c])),
    }
}

/// Rescales and factors one submatrix. In floor mode the floored entry is the
/// bottom-right corner, which is where the target lands.
fn fit_submatrix(
    y: &DMatrix<f64>,
    mask: &Mask,
    p: &ProbabilityMatrix,
    r: usize,
    rows: &[usize],
    cols: &[usize],
    k_star: usize,
    mode: RescaleMode,
    p_star: f64,
) -> Result<TruncatedSvd> {
    if r > k_star {
        return Err(Error::RankExceedsSubmatrix { rank: r, k_star });
    }
    let sub = extract(y, mask, p, rows, cols);
    let scaled = match mode {
        RescaleMode::Plain => rescale(&sub.y, &sub.mask, &sub.p)?,
        RescaleMode::FloorTarget => rescale_with_floor(
            &sub.y,
            &sub.mask,
            &sub.p,
            &[(rows.len() - 1, cols.len() - 1)],
            p_star,
        )?,
    };
    truncated_svd(&scaled.values, r)
}

fn check_inputs(y: &DMatrix<f64>, mask: &Mask, p: &ProbabilityMatrix) -> Result<()> {
    check_shapes(y, mask, p.as_matrix())
}

/// Submatrix-completion estimate of the single entry `plan.target`.
pub fn estimate_entry(
    y: &DMatrix<f64>,
    mask: &Mask,
    p: &ProbabilityMatrix,
    r: usize,
    plan: &SubmatrixPlan,
) -> Result<f64> {
    check_inputs(y, mask, p)?;
    let svd = fit_submatrix(
        y,
        mask,
        p,
        r,
        &plan.rows,
        &plan.cols,
        plan.k_star,
        plan.mode,
        plan.p_star,
    )?;
    Ok(svd.entry(plan.target_pos.0, plan.target_pos.1))
}

fn run_group(
    y: &DMatrix<f64>,
    mask: &Mask,
    p: &ProbabilityMatrix,
    r: usize,
    plans: &PlanSet,
    group: &PlanGroup,
) -> Result<Vec<((usize, usize), f64)>> {
    // p* only matters in floor mode, where the group is a single entry.
    let p_star = plans.plans[group.members[0]].p_star;
    let svd = fit_submatrix(
        y,
        mask,
        p,
        r,
        &group.rows,
        &group.cols,
        group.k_star,
        group.mode,
        p_star,
    )?;
    Ok(group
        .members
        .iter()
        .map(|&idx| {
            let plan = &plans.plans[idx];
            (plan.target, svd.entry(plan.target_pos.0, plan.target_pos.1))
        })
        .collect())
}

/// Estimates every entry, running one SVD per plan group. Groups execute in
/// parallel; each writes a disjoint set of entries.
pub fn estimate_all(
    y: &DMatrix<f64>,
    mask: &Mask,
    p: &ProbabilityMatrix,
    r: usize,
) -> Result<Estimate> {
    let plans = plan_all(p)?;
    estimate_all_with_plans(y, mask, p, r, &plans)
}

/// [`estimate_all`] with a precomputed plan set, for callers that reuse one
/// probability matrix across many observation draws.
pub fn estimate_all_with_plans(
    y: &DMatrix<f64>,
    mask: &Mask,
    p: &ProbabilityMatrix,
    r: usize,
    plans: &PlanSet,
) -> Result<Estimate> {
    check_inputs(y, mask, p)?;
    if plans.shape != p.shape() {
        return Err(Error::dims(p.shape(), plans.shape));
    }
    let results: Vec<Vec<((usize, usize), f64)>> = plans
        .groups
        .par_iter()
        .map(|g| run_group(y, mask, p, r, plans, g))
        .collect::<Result<_>>()?;
    let mut m_hat = DMatrix::zeros(p.nrows(), p.ncols());
    for ((i, j), v) in results.into_iter().flatten() {
        m_hat[(i, j)] = v;
    }
    Ok(Estimate {
        m_hat,
        rank: r,
        source: EstimateSource::Sub {
            groups: plans.groups.len(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{make_block_p, sample_mask};
    use crate::selector::kstar;
    use crate::signal::{observe, SignalInstance};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn rescale_basics() {
        let y = DMatrix::from_row_slice(2, 2, &[0.6, 1.0, 2.0, 3.0]);
        let ones = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(rescale(&y, &Mask::full(2, 2), &ones).unwrap().values, y);

        let mask = Mask::from_bits(DMatrix::from_row_slice(2, 2, &[true, false, false, false]));
        let p = DMatrix::from_element(2, 2, 0.3);
        let y = DMatrix::from_row_slice(2, 2, &[0.6, 0.0, 0.0, 0.0]);
        let out = rescale(&y, &mask, &p).unwrap();
        assert_relative_eq!(out.values[(0, 0)], 2.0, epsilon = 1e-15);
        assert_eq!(out.values[(1, 1)], 0.0);
        assert!(out.floored.is_empty());
    }

    #[test]
    fn rescale_rejects_zero_probability_on_observed_entry() {
        let p = DMatrix::from_row_slice(1, 2, &[0.5, 0.0]);
        let y = DMatrix::from_element(1, 2, 1.0);
        let err = rescale(&y, &Mask::full(1, 2), &p).unwrap_err();
        assert!(matches!(err, Error::DivisionByZeroProbability { row: 0, col: 1 }));
        // unobserved zero-probability entries are fine
        let mask = Mask::from_bits(DMatrix::from_row_slice(1, 2, &[true, false]));
        assert!(rescale(&y, &mask, &p).is_ok());
        // and floored ones use the floor instead
        let out = rescale_with_floor(&y, &Mask::full(1, 2), &p, &[(0, 1)], 0.3).unwrap();
        assert_eq!(out.values[(0, 1)], 2.0);
    }

    #[test]
    fn floor_divisor_branches() {
        let p = DMatrix::from_row_slice(2, 2, &[0.3, 0.3, 0.3, 0.05]);
        let y = DMatrix::from_element(2, 2, 1.0);
        let out = rescale_with_floor(&y, &Mask::full(2, 2), &p, &[(1, 1)], 0.3).unwrap();
        assert_eq!(out.denominators[(1, 1)], 0.5);
        assert_eq!(out.denominators[(0, 1)], 0.3);
        assert_eq!(out.floored, vec![(1, 1)]);

        let out = rescale_with_floor(&y, &Mask::full(2, 2), &p, &[(1, 1)], 0.8).unwrap();
        assert_eq!(out.denominators[(1, 1)], 0.8);

        let a = rescale_with_floor(&y, &Mask::full(2, 2), &p, &[], 0.9).unwrap();
        assert_eq!(a, rescale(&y, &Mask::full(2, 2), &p).unwrap());
    }

    #[test]
    fn truncated_svd_on_diagonal() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let svd = truncated_svd(&d, 2).unwrap();
        assert_eq!(svd.singular_values.as_slice(), &[3.0, 2.0]);
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 0.0]));
        assert_relative_eq!(svd.reconstruct(), expect, epsilon = 1e-12);
        assert_relative_eq!(svd.entry(1, 1), 2.0, epsilon = 1e-12);
        assert!(matches!(truncated_svd(&d, 4), Err(Error::InvalidRank { .. })));
        assert!(matches!(truncated_svd(&d, 0), Err(Error::InvalidRank { .. })));
    }

    #[test]
    fn truncated_svd_rejects_nan() {
        let mut d = DMatrix::from_element(3, 3, 1.0);
        d[(1, 2)] = f64::NAN;
        assert!(matches!(truncated_svd(&d, 1), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn truncated_svd_exact_on_low_rank_input() {
        let inst = SignalInstance::generate(20, 15, 3, &mut rng(1)).unwrap();
        let rec = truncated_svd(&inst.m_star, 3).unwrap().reconstruct();
        let rel = (&rec - &inst.m_star).norm() / inst.m_star.norm();
        assert!(rel < 1e-8, "{rel}");
        // wide input too
        let wide = inst.m_star.transpose();
        let rec = truncated_svd(&wide, 3).unwrap().reconstruct();
        assert!((&rec - &wide).norm() / wide.norm() < 1e-8);
    }

    #[test]
    fn whole_and_sub_agree_for_constant_probabilities() {
        let p = make_block_p(10, 8, 0.6, 0.6, 0.6, 0.6).unwrap();
        let inst = SignalInstance::generate(18, 18, 2, &mut rng(2)).unwrap();
        let mask = sample_mask(&p, &mut rng(3));
        let obs = observe(&inst.m_star, &mask, 0.1, &mut rng(4)).unwrap();
        let whole = svt_whole(&obs.y, &mask, &p, 2).unwrap();
        let sub = estimate_all(&obs.y, &mask, &p, 2).unwrap();
        assert_eq!(sub.source, EstimateSource::Sub { groups: 1 });
        assert_relative_eq!(whole.m_hat, sub.m_hat, epsilon = 1e-9);
        let plan = kstar(&p, 5, 17).unwrap();
        let e = estimate_entry(&obs.y, &mask, &p, 2, &plan).unwrap();
        assert_relative_eq!(e, whole.m_hat[(5, 17)], epsilon = 1e-9);
    }

    #[test]
    fn whole_estimate_is_invariant_to_joint_scaling() {
        let p = make_block_p(5, 5, 0.4, 0.4, 0.4, 0.4).unwrap();
        let inst = SignalInstance::generate(10, 10, 2, &mut rng(8)).unwrap();
        let mask = sample_mask(&p, &mut rng(9));
        let obs = observe(&inst.m_star, &mask, 0.1, &mut rng(10)).unwrap();
        let p2 = make_block_p(5, 5, 0.2, 0.2, 0.2, 0.2).unwrap();
        let a = svt_whole(&obs.y, &mask, &p, 2).unwrap();
        let b = svt_whole(&(obs.y.clone() * 0.5), &mask, &p2, 2).unwrap();
        assert_relative_eq!(a.m_hat, b.m_hat, epsilon = 1e-10);
    }

    #[test]
    fn core_entry_matches_whole_svt_on_the_core() {
        let p = make_block_p(20, 20, 0.3, 0.3, 0.3, 0.05).unwrap();
        let inst = SignalInstance::generate(40, 40, 2, &mut rng(5)).unwrap();
        let mask = sample_mask(&p, &mut rng(6));
        let obs = observe(&inst.m_star, &mask, 0.1, &mut rng(7)).unwrap();

        let core = |g: &DMatrix<f64>| g.view((0, 0), (20, 20)).into_owned();
        let core_p = ProbabilityMatrix::from_matrix(core(p.as_matrix())).unwrap();
        let core_mask = Mask::from_bits(mask.bits().view((0, 0), (20, 20)).into_owned());
        let whole_core = svt_whole(&core(&obs.y), &core_mask, &core_p, 2).unwrap();

        let plan = kstar(&p, 3, 11).unwrap();
        let e = estimate_entry(&obs.y, &mask, &p, 2, &plan).unwrap();
        assert_relative_eq!(e, whole_core.m_hat[(3, 11)], epsilon = 1e-12);

        let all = estimate_all(&obs.y, &mask, &p, 2).unwrap();
        for &(i, j) in &[(0, 0), (3, 11), (25, 4), (4, 33), (30, 30), (39, 39)] {
            let plan = kstar(&p, i, j).unwrap();
            let single = estimate_entry(&obs.y, &mask, &p, 2, &plan).unwrap();
            assert_eq!(single.to_bits(), all.m_hat[(i, j)].to_bits(), "({i},{j})");
        }
    }

    #[test]
    fn rank_larger_than_submatrix_is_an_error() {
        let p = make_block_p(2, 6, 0.9, 0.05, 0.05, 0.01).unwrap();
        let plan = kstar(&p, 0, 0).unwrap();
        assert_eq!(plan.k_star, 2);
        let y = DMatrix::zeros(8, 8);
        let mask = Mask::full(8, 8);
        assert!(matches!(
            estimate_entry(&y, &mask, &p, 3, &plan),
            Err(Error::RankExceedsSubmatrix { rank: 3, k_star: 2 })
        ));
    }

    #[test]
    fn noiseless_full_observation_is_exact() {
        let inst = SignalInstance::generate(30, 30, 3, &mut rng(11)).unwrap();
        let p = make_block_p(15, 15, 1.0, 1.0, 1.0, 1.0).unwrap();
        let mask = Mask::full(30, 30);
        let sub = estimate_all(&inst.m_star, &mask, &p, 3).unwrap();
        let whole = svt_whole(&inst.m_star, &mask, &p, 3).unwrap();
        for est in [sub, whole] {
            let rel = (&est.m_hat - &inst.m_star).norm() / inst.m_star.norm();
            assert!(rel < 1e-9, "{rel}");
        }
    }

    #[test]
    fn shape_mismatches_are_reported() {
        let p = make_block_p(2, 2, 0.5, 0.5, 0.5, 0.5).unwrap();
        let y = DMatrix::zeros(4, 3);
        assert!(matches!(
            svt_whole(&y, &Mask::full(4, 3), &p, 1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            estimate_all(&DMatrix::zeros(4, 4), &Mask::full(4, 3), &p, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
