//! Repeated-trial comparison of submatrix completion against whole-matrix SVT.
//!
//! Each trial draws a fresh signal, mask and noise from its own sub-seed
//! (`seed + trial`), runs both estimators and records entrywise absolute
//! errors. Trials run in parallel; their results are summed in trial order so
//! the averages do not depend on scheduling.

mod config;
mod render;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use config::ExperimentConfig;
pub use render::{load_report, render_outputs, OutputFiles};

use crate::bounds::{bound_report, BoundReport};
use crate::error::{Error, Result};
use crate::estimator::{estimate_all_with_plans, svt_whole};
use crate::sampling::{
    apply_permutations, find_monotone_permutations, sample_mask, MonotonePermutation,
    ProbabilityMatrix,
};
use crate::selector::{istar, plan_all, PlanSet};
use crate::signal::{observe, ObservationSet, SignalInstance};

pub const HISTOGRAM_BINS: usize = 50;

/// A config with its probability matrix built, certified and planned.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Probabilities in the original index order.
    pub p_original: ProbabilityMatrix,
    /// Monotone probabilities the estimators run on.
    pub p: ProbabilityMatrix,
    /// Present when the input had to be reordered to become monotone.
    pub permutation: Option<MonotonePermutation>,
    pub plans: PlanSet,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let p_original = config.probability.build()?;
        if p_original.shape() != (config.n, config.m) {
            return Err(Error::Config(format!(
                "probability matrix is {}x{} but n x m is {}x{}",
                p_original.nrows(),
                p_original.ncols(),
                config.n,
                config.m
            )));
        }
        let (p, permutation) = if p_original.is_certified_monotone() {
            (p_original.clone(), None)
        } else {
            let perm = find_monotone_permutations(&p_original)?;
            (apply_permutations(&p_original, &perm)?, Some(perm))
        };
        let plans = plan_all(&p)?;
        Ok(Self {
            config,
            p_original,
            p,
            permutation,
            plans,
        })
    }

    /// Absolute errors of both estimators for one trial, in the working
    /// (monotone) index order.
    pub fn run_trial(&self, trial: usize) -> Result<TrialErrors> {
        let cfg = &self.config;
        let (signal, obs) = self.draw(trial)?;
        let sub = estimate_all_with_plans(&obs.y, &obs.mask, &self.p, cfg.r, &self.plans)?;
        let whole = svt_whole(&obs.y, &obs.mask, &self.p, cfg.r)?;
        Ok(TrialErrors {
            sub: (&sub.m_hat - &signal.m_star).abs(),
            whole: (&whole.m_hat - &signal.m_star).abs(),
        })
    }

    /// Signal, then mask, then noise, all from the trial's sub-seed.
    /// Grids are in the working (monotone) index order.
    pub fn draw(&self, trial: usize) -> Result<(SignalInstance, ObservationSet)> {
        let cfg = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.trial_seed(trial));
        let signal = SignalInstance::generate(cfg.n, cfg.m, cfg.r, &mut rng)?;
        let mask = sample_mask(&self.p, &mut rng);
        let obs = observe(&signal.m_star, &mask, cfg.sigma, &mut rng)?;
        Ok((signal, obs))
    }

    pub fn to_original_order(&self, grid: DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.permutation {
            Some(perm) => perm.inverse().apply_to(&grid),
            None => Ok(grid),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialErrors {
    pub sub: DMatrix<f64>,
    pub whole: DMatrix<f64>,
}

pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialErrors> {
    Experiment::prepare(config.clone())?.run_trial(trial)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub name: String,
    /// Mean relative improvement over counted entries; `None` when empty.
    pub mean_rel_improvement: Option<f64>,
    pub mean_e_sub: f64,
    pub mean_e_whole: f64,
    /// Entries with a defined relative improvement.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupShape {
    pub rows: usize,
    pub cols: usize,
    pub groups: usize,
    pub entries: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub probability: DMatrix<f64>,
    pub e_sub: DMatrix<f64>,
    pub e_whole: DMatrix<f64>,
    /// `(e_whole - e_sub) / e_whole`; NaN where `e_whole == 0`.
    pub rel_improvement: DMatrix<f64>,
    /// Overall first, then named regions.
    pub aggregates: Vec<Aggregate>,
    pub fraction_positive: f64,
    pub excluded: usize,
    pub histogram: Histogram,
    pub i_star: usize,
    pub group_shapes: Vec<GroupShape>,
    pub bounds: BoundReport,
}

impl ExperimentReport {
    pub fn aggregate(&self, name: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.name == name)
    }

    pub fn mean_improvement(&self, name: &str) -> Option<f64> {
        self.aggregate(name).and_then(|a| a.mean_rel_improvement)
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let exp = Experiment::prepare(config.clone())?;
    let trials: Vec<TrialErrors> = (0..config.trials)
        .into_par_iter()
        .map(|t| exp.run_trial(t))
        .collect::<Result<_>>()?;
    let (n, m) = (config.n, config.m);
    let mut e_sub = DMatrix::zeros(n, m);
    let mut e_whole = DMatrix::zeros(n, m);
    for t in &trials {
        e_sub += &t.sub;
        e_whole += &t.whole;
    }
    let k = config.trials as f64;
    e_sub /= k;
    e_whole /= k;
    let e_sub = exp.to_original_order(e_sub)?;
    let e_whole = exp.to_original_order(e_whole)?;
    assemble_report(&exp, e_sub, e_whole)
}

/// Derived statistics from averaged error grids (original index order).
pub fn assemble_report(
    exp: &Experiment,
    e_sub: DMatrix<f64>,
    e_whole: DMatrix<f64>,
) -> Result<ExperimentReport> {
    let cfg = &exp.config;
    if e_sub.shape() != (cfg.n, cfg.m) || e_whole.shape() != (cfg.n, cfg.m) {
        return Err(Error::dims((cfg.n, cfg.m), e_sub.shape()));
    }
    let rel = e_sub.zip_map(&e_whole, |s, w| if w > 0.0 { (w - s) / w } else { f64::NAN });
    let i_star = istar(&exp.p)?.i_star;

    let mut regions: Vec<(String, Box<dyn Fn(usize, usize) -> bool>)> =
        vec![("overall".into(), Box::new(|_, _| true))];
    match cfg.probability.block_split() {
        Some(s) => {
            regions.push(("top_left".into(), Box::new(move |i, j| i < s && j < s)));
            regions.push(("off_diagonal".into(), Box::new(move |i, j| (i < s) != (j < s))));
            regions.push(("top_right".into(), Box::new(move |i, j| i < s && j >= s)));
            regions.push(("bottom_left".into(), Box::new(move |i, j| i >= s && j < s)));
            regions.push(("bottom_right".into(), Box::new(move |i, j| i >= s && j >= s)));
        }
        None if exp.permutation.is_none() => {
            regions.push(("core".into(), Box::new(move |i, j| i < i_star && j < i_star)));
            regions.push((
                "outside_core".into(),
                Box::new(move |i, j| i >= i_star || j >= i_star),
            ));
        }
        None => {}
    }
    let aggregates = regions
        .iter()
        .map(|(name, inside)| aggregate(name, &rel, &e_sub, &e_whole, inside))
        .collect();

    let finite: Vec<f64> = rel.iter().copied().filter(|v| v.is_finite()).collect();
    let excluded = rel.len() - finite.len();
    let fraction_positive = if finite.is_empty() {
        0.0
    } else {
        finite.iter().filter(|&&v| v > 0.0).count() as f64 / finite.len() as f64
    };

    let mut shapes: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
    for g in &exp.plans.groups {
        let e = shapes.entry((g.rows.len(), g.cols.len())).or_default();
        e.0 += 1;
        e.1 += g.members.len();
    }
    let group_shapes = shapes
        .into_iter()
        .map(|((rows, cols), (groups, entries))| GroupShape {
            rows,
            cols,
            groups,
            entries,
        })
        .collect();

    let bounds = bound_report(&exp.p, cfg.r, cfg.sigma, cfg.delta, cfg.block_params())?;
    let bounds = match &exp.permutation {
        None => bounds,
        Some(perm) => {
            let inv = perm.inverse();
            BoundReport {
                upper_rate: inv.apply_to(&bounds.upper_rate)?,
                lower_rate: inv.apply_to(&bounds.lower_rate)?,
                preconditions: crate::bounds::Preconditions {
                    ok: inv.apply_to(&bounds.preconditions.ok)?,
                    summary: bounds.preconditions.summary.clone(),
                },
                ..bounds
            }
        }
    };

    Ok(ExperimentReport {
        config: cfg.clone(),
        probability: exp.p_original.as_matrix().clone(),
        histogram: histogram(&finite, HISTOGRAM_BINS),
        e_sub,
        e_whole,
        rel_improvement: rel,
        aggregates,
        fraction_positive,
        excluded,
        i_star,
        group_shapes,
        bounds,
    })
}

fn aggregate(
    name: &str,
    rel: &DMatrix<f64>,
    e_sub: &DMatrix<f64>,
    e_whole: &DMatrix<f64>,
    inside: &dyn Fn(usize, usize) -> bool,
) -> Aggregate {
    let (mut rel_sum, mut count) = (0.0, 0usize);
    let (mut sub_sum, mut whole_sum, mut cells) = (0.0, 0.0, 0usize);
    // Row-major order, the same order a reader of the CSV grids would use.
    for i in 0..rel.nrows() {
        for j in 0..rel.ncols() {
            if !inside(i, j) {
                continue;
            }
            cells += 1;
            sub_sum += e_sub[(i, j)];
            whole_sum += e_whole[(i, j)];
            let v = rel[(i, j)];
            if v.is_finite() {
                rel_sum += v;
                count += 1;
            }
        }
    }
    Aggregate {
        name: name.to_owned(),
        mean_rel_improvement: (count > 0).then(|| rel_sum / count as f64),
        mean_e_sub: sub_sum / cells.max(1) as f64,
        mean_e_whole: whole_sum / cells.max(1) as f64,
        count,
    }
}

/// Equal-width bins spanning the data range; the top edge is inclusive.
pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    if values.is_empty() {
        return Histogram {
            edges: vec![0.0, 1.0],
            counts: vec![0],
        };
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { edges, counts }
}
