//! Permutation-test p-values.
//!
//! The observed statistic is compared with the statistic of every
//! equal-sized relabeling of `X ∪ Y` (exact mode) or of uniformly sampled
//! relabelings (Monte Carlo mode). A relabeling counts when its statistic is
//! strictly greater than the observed one; the observed labeling is part of
//! the enumeration.
//!
//! Work is split into contiguous blocks of partition ranks or sample
//! indices, and the per-block counts are integers, so the result does not
//! depend on how many workers run.

use std::fmt;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, Combinations};
use crate::error::{Error, Result};
use crate::model::SimilarityMatrix;
use crate::seed;

pub const DEFAULT_EXACT_THRESHOLD: u64 = 1_000_000;
pub const DEFAULT_SAMPLE_COUNT: u64 = 10_000;

/// Below this many partitions or samples a single thread does the work.
const PARALLEL_CUTOFF: u64 = 8_192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    MonteCarlo,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::MonteCarlo => "monte_carlo",
        })
    }
}

/// How exceedances turn into a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `#{stat > observed} / N`.
    #[default]
    Strict,
    /// `(#{stat >= observed} + 1) / (N + 1)`; never zero.
    GePlusOne,
}

impl fmt::Display for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tail::Strict => "strict",
            Tail::GePlusOne => "ge_plus_one",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationConfig {
    pub exact_threshold: u64,
    pub sample_count: u64,
    pub seed: u64,
    pub tail: Tail,
    pub workers: usize,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
            sample_count: DEFAULT_SAMPLE_COUNT,
            seed: 42,
            tail: Tail::Strict,
            workers: default_workers(),
        }
    }
}

pub fn default_workers() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationPlan {
    pub n_total: usize,
    pub n_x: usize,
    pub mode: Mode,
    /// `C(n_total, n_x)` when it fits in 64 bits.
    pub partition_count: Option<u64>,
    pub sample_count: u64,
    /// Stream seed for Monte Carlo sampling, already keyed by test id.
    pub seed: u64,
    pub exact_threshold: u64,
    pub tail: Tail,
    pub workers: usize,
}

impl PermutationPlan {
    pub fn new(
        n_total: usize,
        n_x: usize,
        config: &PermutationConfig,
        test_id: &str,
    ) -> Result<Self> {
        if n_x == 0 || n_x >= n_total {
            return Err(Error::Config(format!(
                "need 0 < n_x < n_total, got n_x = {n_x}, n_total = {n_total}"
            )));
        }
        if config.sample_count == 0 {
            return Err(Error::Config("sample_count must be at least 1".into()));
        }
        if config.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let partition_count = binomial(n_total, n_x);
        let mode = match partition_count {
            Some(c) if c <= config.exact_threshold => Mode::Exact,
            _ => Mode::MonteCarlo,
        };
        Ok(Self {
            n_total,
            n_x,
            mode,
            partition_count,
            sample_count: config.sample_count,
            seed: seed::derive(config.seed, &format!("permutation/{test_id}")),
            exact_threshold: config.exact_threshold,
            tail: config.tail,
            workers: config.workers,
        })
    }

    pub fn for_matrix(
        sim: &SimilarityMatrix,
        config: &PermutationConfig,
        test_id: &str,
    ) -> Result<Self> {
        Self::new(sim.n_total(), sim.n_x(), config, test_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub p_value: f64,
    /// Relabelings whose statistic is strictly greater than the observed one.
    pub exceed_count: u64,
    /// Relabelings whose statistic equals the observed one (exact mode
    /// always includes the observed labeling here).
    pub tie_count: u64,
    pub evaluated_count: u64,
    pub observed_statistic: f64,
    pub mode: Mode,
    pub tail: Tail,
    /// `sqrt(p (1 - p) / N)`; Monte Carlo only.
    pub standard_error: Option<f64>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct Counts {
    exceed: u64,
    tie: u64,
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts {
            exceed: self.exceed + o.exceed,
            tie: self.tie + o.tie,
        }
    }
}

impl Counts {
    #[inline]
    fn record(&mut self, stat: f64, observed: f64) {
        if stat > observed {
            self.exceed += 1;
        } else if stat == observed {
            self.tie += 1;
        }
    }
}

/// Statistic of the relabeling that puts the sorted indices `chosen` in X.
/// Both sums run in index order, so the observed labeling `0..n_x`
/// reproduces `test_statistic` bit for bit.
#[inline]
pub fn subset_statistic(diff: &[f64], chosen: &[usize]) -> f64 {
    let (mut sx, mut sy) = (0.0, 0.0);
    let mut next = chosen.iter().peekable();
    for (i, &d) in diff.iter().enumerate() {
        if next.peek() == Some(&&i) {
            sx += d;
            next.next();
        } else {
            sy += d;
        }
    }
    sx - sy
}

#[inline]
fn mask_statistic(diff: &[f64], in_x: &[bool]) -> f64 {
    let (mut sx, mut sy) = (0.0, 0.0);
    for (&d, &x) in diff.iter().zip(in_x) {
        if x {
            sx += d;
        } else {
            sy += d;
        }
    }
    sx - sy
}

fn observed_statistic(sim: &SimilarityMatrix) -> f64 {
    let observed: Vec<usize> = (0..sim.n_x()).collect();
    subset_statistic(sim.diff(), &observed)
}

/// Splits `0..total` into at most `workers` contiguous blocks and sums the
/// counts produced by `work(start, len)`.
fn parallel_count<F>(total: u64, workers: usize, work: F) -> Counts
where
    F: Fn(u64, u64) -> Counts + Sync,
{
    let workers = workers.max(1) as u64;
    if workers == 1 || total < PARALLEL_CUTOFF {
        return work(0, total);
    }
    let blocks = workers.min(total);
    let bound = |i: u64| ((total as u128 * i as u128) / blocks as u128) as u64;
    thread::scope(|scope| {
        let handles: Vec<_> = (0..blocks)
            .map(|i| {
                let (start, end) = (bound(i), bound(i + 1));
                let work = &work;
                scope.spawn(move || work(start, end - start))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("permutation worker panicked"))
            .fold(Counts::default(), |a, b| a + b)
    })
}

fn finish(
    plan: &PermutationPlan,
    counts: Counts,
    evaluated: u64,
    observed: f64,
) -> PermutationOutcome {
    let p_value = match plan.tail {
        Tail::Strict => counts.exceed as f64 / evaluated as f64,
        Tail::GePlusOne => (counts.exceed + counts.tie + 1) as f64 / (evaluated + 1) as f64,
    };
    let standard_error = match plan.mode {
        Mode::Exact => None,
        Mode::MonteCarlo => Some((p_value * (1.0 - p_value) / evaluated as f64).sqrt()),
    };
    PermutationOutcome {
        p_value,
        exceed_count: counts.exceed,
        tie_count: counts.tie,
        evaluated_count: evaluated,
        observed_statistic: observed,
        mode: plan.mode,
        tail: plan.tail,
        standard_error,
    }
}

fn check_plan(sim: &SimilarityMatrix, plan: &PermutationPlan, mode: Mode) -> Result<()> {
    if plan.mode != mode {
        return Err(Error::Config(format!(
            "plan is {}, expected {mode}",
            plan.mode
        )));
    }
    if plan.n_total != sim.n_total() || plan.n_x != sim.n_x() {
        return Err(Error::Config(format!(
            "plan sizes ({}, {}) do not match matrix ({}, {})",
            plan.n_total,
            plan.n_x,
            sim.n_total(),
            sim.n_x()
        )));
    }
    Ok(())
}

/// Enumerates every `n_x`-subset of the targets.
pub fn exact_pvalue(sim: &SimilarityMatrix, plan: &PermutationPlan) -> Result<PermutationOutcome> {
    check_plan(sim, plan, Mode::Exact)?;
    let (n, k) = (plan.n_total, plan.n_x);
    let total = plan.partition_count.ok_or(Error::Overflow { n, k })?;
    let diff = sim.diff();
    let observed = observed_statistic(sim);

    let counts = parallel_count(total, plan.workers, |start, len| {
        let mut counts = Counts::default();
        Combinations::range(n, k, start, len)
            .expect("block lies inside the rank range")
            .for_each_subset(|subset| counts.record(subset_statistic(diff, subset), observed));
        counts
    });
    Ok(finish(plan, counts, total, observed))
}

/// Samples `sample_count` uniform `n_x`-subsets with replacement. Sample
/// `i` draws from ChaCha stream `i` under the plan's key, so each sample is
/// a pure function of `(seed, test_id, i)`.
pub fn mc_pvalue(sim: &SimilarityMatrix, plan: &PermutationPlan) -> Result<PermutationOutcome> {
    check_plan(sim, plan, Mode::MonteCarlo)?;
    let (n, k) = (plan.n_total, plan.n_x);
    let diff = sim.diff();
    let observed = observed_statistic(sim);
    let base = ChaCha8Rng::seed_from_u64(plan.seed);

    let counts = parallel_count(plan.sample_count, plan.workers, |start, len| {
        let mut counts = Counts::default();
        let mut in_x = vec![false; n];
        let mut rng = base.clone();
        for sample in start..start + len {
            rng.set_stream(sample);
            rng.set_word_pos(0);
            in_x.fill(false);
            for i in rand::seq::index::sample(&mut rng, n, k) {
                in_x[i] = true;
            }
            counts.record(mask_statistic(diff, &in_x), observed);
        }
        counts
    });
    Ok(finish(plan, counts, plan.sample_count, observed))
}

/// Plans and dispatches to exact or Monte Carlo mode.
pub fn pvalue(
    sim: &SimilarityMatrix,
    config: &PermutationConfig,
    test_id: &str,
) -> Result<PermutationOutcome> {
    let plan = PermutationPlan::for_matrix(sim, config, test_id)?;
    match plan.mode {
        Mode::Exact => exact_pvalue(sim, &plan),
        Mode::MonteCarlo => mc_pvalue(sim, &plan),
    }
}
