//! Effect sizes, suite execution and the sweep analyses built on top of
//! per-test results: significance-threshold curves, per-layer counts,
//! absolute-effect-size summaries and the model-by-test effect matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_similarity_matrix, sum_in_order, AssociationScores, TestInstance, TestLabels,
};
use crate::permutation::{self, Mode, PermutationConfig};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_GRID_MIN: f64 = 1e-4;
pub const DEFAULT_GRID_MAX: f64 = 1e-1;
pub const DEFAULT_GRID_POINTS: usize = 200;

/// Denominator of the pooled standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaConvention {
    /// Divide by `n`. Bounds `|d|` by 2 for equal-sized groups.
    #[default]
    Population,
    /// Divide by `n - 1`.
    Sample,
}

impl fmt::Display for SigmaConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaConvention::Population => "population",
            SigmaConvention::Sample => "sample",
        })
    }
}

/// `(mean(x) - mean(y)) / sigma(x ∪ y)`.
///
/// Pooled sums are formed per group and then added, so exchanging the
/// groups negates the result exactly.
pub fn effect_size(scores: &AssociationScores, sigma: SigmaConvention) -> Result<f64> {
    let (xs, ys) = (scores.x_scores(), scores.y_scores());
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput(
            "effect size needs scores for both targets",
        ));
    }
    let first = xs[0];
    if xs.iter().chain(ys).all(|&v| v == first) {
        return Err(Error::DegenerateVariance);
    }
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let n = nx + ny;
    let (sx, sy) = (
        sum_in_order(xs.iter().copied()),
        sum_in_order(ys.iter().copied()),
    );
    let mean = (sx + sy) / n;
    let sq = |v: &f64| (v - mean) * (v - mean);
    let ss = sum_in_order(xs.iter().map(sq)) + sum_in_order(ys.iter().map(sq));
    let denom = match sigma {
        SigmaConvention::Population => n,
        SigmaConvention::Sample => n - 1.0,
    };
    let sd = (ss / denom).sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((sx / nx - sy / ny) / sd)
}

/// An effect size, or the marker for a test whose pooled scores have no
/// spread. Never NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", content = "value", rename_all = "snake_case")]
pub enum EffectSize {
    Finite(f64),
    DegenerateVariance,
}

impl EffectSize {
    pub fn value(&self) -> Option<f64> {
        match self {
            EffectSize::Finite(d) => Some(*d),
            EffectSize::DegenerateVariance => None,
        }
    }
}

impl fmt::Display for EffectSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EffectSize::Finite(d) => write!(f, "{d:.2}"),
            EffectSize::DegenerateVariance => f.write_str("degenerate"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub alpha: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: String,
    pub model_tag: String,
    pub layer: Option<u32>,
    pub labels: Option<TestLabels>,
    pub effect_size: EffectSize,
    pub p_value: f64,
    pub statistic: f64,
    pub mode: Mode,
    pub seed: u64,
    pub exceed_count: u64,
    pub tie_count: u64,
    pub evaluated_count: u64,
    pub standard_error: Option<f64>,
    pub significant_at: Vec<Significance>,
}

impl TestResult {
    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

/// A test that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestFailure {
    pub test_id: String,
    pub message: String,
}

impl TestFailure {
    pub fn new(test_id: impl Into<String>, error: &Error) -> Self {
        Self {
            test_id: test_id.into(),
            message: error.to_string(),
        }
    }
}

pub type TestOutcome = std::result::Result<TestResult, TestFailure>;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub permutation: PermutationConfig,
    pub sigma: SigmaConvention,
    /// Extra significance levels; 0.05 is always reported.
    pub alphas: Vec<f64>,
    pub normalize: bool,
    pub model_tag: String,
    pub layer: Option<u32>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            permutation: PermutationConfig::default(),
            sigma: SigmaConvention::Population,
            alphas: vec![DEFAULT_ALPHA],
            normalize: false,
            model_tag: "model".into(),
            layer: None,
        }
    }
}

impl AnalysisConfig {
    /// Sorted, de-duplicated significance levels including 0.05.
    pub fn significance_levels(&self) -> Result<Vec<f64>> {
        let mut levels = self.alphas.clone();
        levels.push(DEFAULT_ALPHA);
        for &a in &levels {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("alpha {a} must lie in (0, 1)")));
            }
        }
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        Ok(levels)
    }
}

pub fn run_test(t: &TestInstance, config: &AnalysisConfig) -> Result<TestResult> {
    let levels = config.significance_levels()?;
    run_test_with_levels(t, config, &levels, config.permutation.workers)
        .map_err(|e| e.in_test(t.test_id()))
}

fn run_test_with_levels(
    t: &TestInstance,
    config: &AnalysisConfig,
    levels: &[f64],
    workers: usize,
) -> Result<TestResult> {
    let normalized;
    let t = if config.normalize {
        normalized = t.normalized()?;
        &normalized
    } else {
        t
    };
    let sim = build_similarity_matrix(t)?;
    let scores = sim.scores();
    let permutation = PermutationConfig {
        workers,
        ..config.permutation
    };
    let outcome = permutation::pvalue(&sim, &permutation, t.test_id())?;
    let effect = match effect_size(&scores, config.sigma) {
        Ok(d) => EffectSize::Finite(d),
        Err(Error::DegenerateVariance) => EffectSize::DegenerateVariance,
        Err(e) => return Err(e),
    };
    let significant_at = levels
        .iter()
        .map(|&alpha| Significance {
            alpha,
            significant: outcome.p_value <= alpha,
        })
        .collect();
    Ok(TestResult {
        test_id: t.test_id().to_owned(),
        model_tag: config.model_tag.clone(),
        layer: config.layer,
        labels: t.labels().cloned(),
        effect_size: effect,
        p_value: outcome.p_value,
        statistic: scores.statistic(),
        mode: outcome.mode,
        seed: config.permutation.seed,
        exceed_count: outcome.exceed_count,
        tie_count: outcome.tie_count,
        evaluated_count: outcome.evaluated_count,
        standard_error: outcome.standard_error,
        significant_at,
    })
}

/// Runs every test, in parallel across tests. Failures are isolated per
/// test; output order follows input order.
pub fn run_suite(suite: &[TestInstance], config: &AnalysisConfig) -> Result<Vec<TestOutcome>> {
    let entries: Vec<std::result::Result<&TestInstance, TestFailure>> =
        suite.iter().map(Ok).collect();
    run_entries(&entries, config)
}

/// Like [`run_suite`], with load failures passed through in place.
pub fn run_entries<T: std::borrow::Borrow<TestInstance> + Sync>(
    entries: &[std::result::Result<T, TestFailure>],
    config: &AnalysisConfig,
) -> Result<Vec<TestOutcome>> {
    if entries.is_empty() {
        return Err(Error::Config("suite contains no tests".into()));
    }
    let levels = config.significance_levels()?;
    let budget = config.permutation.workers.max(1);
    let lanes = budget.min(entries.len());
    let per_test = (budget / lanes).max(1);

    let run_one = |entry: &std::result::Result<T, TestFailure>| -> TestOutcome {
        let t = entry.as_ref().map_err(Clone::clone)?.borrow();
        run_test_with_levels(t, config, &levels, per_test)
            .map_err(|e| TestFailure::new(t.test_id(), &e))
    };

    if lanes == 1 {
        return Ok(entries.iter().map(run_one).collect());
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<TestOutcome>>> = Mutex::new(vec![None; entries.len()]);
    thread::scope(|scope| {
        for _ in 0..lanes {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(entry) = entries.get(i) else { break };
                let outcome = run_one(entry);
                slots.lock().expect("result slots poisoned")[i] = Some(outcome);
            });
        }
    });
    Ok(slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|o| o.expect("every slot filled"))
        .collect())
}

pub fn count_significant<'a, I>(results: I, alpha: f64) -> usize
where
    I: IntoIterator<Item = &'a TestResult>,
{
    results
        .into_iter()
        .filter(|r| r.is_significant(alpha))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub p_t: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    pub model_tag: String,
    pub points: Vec<ThresholdPoint>,
}

/// `points` thresholds spaced evenly in log space over `[min, max]`, with
/// both endpoints exact.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max < 1.0 && min < max) {
        return Err(Error::Config(format!(
            "threshold grid bounds must satisfy 0 < min < max < 1, got [{min}, {max}]"
        )));
    }
    if points < 2 {
        return Err(Error::Config(format!(
            "threshold grid needs at least 2 points, got {points}"
        )));
    }
    let (lo, hi) = (min.ln(), max.ln());
    let step = (hi - lo) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| (lo + step * i as f64).exp()).collect();
    grid[0] = min;
    grid[points - 1] = max;
    validate_grid(&grid)?;
    Ok(grid)
}

pub fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_POINTS)
        .expect("default grid is valid")
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::Config(
            "threshold grid values must lie in (0, 1)".into(),
        ));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "threshold grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Number of tests with `p <= p_t` at each grid threshold.
pub fn threshold_curve(
    results: &[TestResult],
    grid: &[f64],
    model_tag: impl Into<String>,
) -> ThresholdCurve {
    let mut p_values: Vec<f64> = results.iter().map(|r| r.p_value).collect();
    p_values.sort_by(f64::total_cmp);
    let points = grid
        .iter()
        .map(|&p_t| ThresholdPoint {
            p_t,
            count: p_values.partition_point(|&p| p <= p_t),
        })
        .collect();
    ThresholdCurve {
        model_tag: model_tag.into(),
        points,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCount {
    pub layer: u32,
    pub significant: usize,
    pub tests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub model_tag: String,
    pub alpha: f64,
    pub counts: Vec<LayerCount>,
}

pub fn layer_profile(
    per_layer: &BTreeMap<u32, Vec<TestResult>>,
    alpha: f64,
    model_tag: impl Into<String>,
) -> Result<LayerProfile> {
    if per_layer.is_empty() {
        return Err(Error::EmptyInput("layer profile needs at least one layer"));
    }
    let counts = per_layer
        .iter()
        .map(|(&layer, results)| LayerCount {
            layer,
            significant: count_significant(results, alpha),
            tests: results.len(),
        })
        .collect();
    Ok(LayerProfile {
        model_tag: model_tag.into(),
        alpha,
        counts,
    })
}

/// Box-plot statistics of `|d|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub model_tag: String,
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub mean: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Tukey hinges over `values`; whiskers span the full range.
pub fn summarize_abs(values: &[f64], model_tag: impl Into<String>) -> Result<EffectSummary> {
    let mut v: Vec<f64> = values
        .iter()
        .filter(|d| d.is_finite())
        .map(|d| d.abs())
        .collect();
    if v.is_empty() {
        return Err(Error::EmptyInput("no finite effect sizes to summarize"));
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    // The median belongs to both halves when n is odd.
    let half = n.div_ceil(2);
    let mean = sum_in_order(v.iter().copied()) / n as f64;
    Ok(EffectSummary {
        model_tag: model_tag.into(),
        n,
        median: median_sorted(&v),
        q1: median_sorted(&v[..half]),
        q3: median_sorted(&v[n - half..]),
        whisker_low: v[0],
        whisker_high: v[n - 1],
        mean,
    })
}

pub fn abs_effect_summary(
    results: &[TestResult],
    model_tag: impl Into<String>,
) -> Result<EffectSummary> {
    let values: Vec<f64> = results
        .iter()
        .filter_map(|r| r.effect_size.value())
        .collect();
    summarize_abs(&values, model_tag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCell {
    pub effect_size: EffectSize,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub model_tag: String,
    pub cells: Vec<Option<EffectCell>>,
}

/// Signed effect sizes, one row per model and one column per test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectMatrix {
    pub alpha: f64,
    pub test_ids: Vec<String>,
    pub rows: Vec<EffectRow>,
}

/// Rows and columns appear in first-seen order.
pub fn effect_matrix(results: &[TestResult], alpha: f64) -> EffectMatrix {
    let mut test_ids: Vec<String> = Vec::new();
    let mut models: Vec<String> = Vec::new();
    for r in results {
        if !test_ids.contains(&r.test_id) {
            test_ids.push(r.test_id.clone());
        }
        if !models.contains(&r.model_tag) {
            models.push(r.model_tag.clone());
        }
    }
    let rows = models
        .into_iter()
        .map(|model_tag| {
            let cells = test_ids
                .iter()
                .map(|id| {
                    results
                        .iter()
                        .find(|r| r.model_tag == model_tag && &r.test_id == id)
                        .map(|r| EffectCell {
                            effect_size: r.effect_size,
                            significant: r.is_significant(alpha),
                        })
                })
                .collect();
            EffectRow { model_tag, cells }
        })
        .collect();
    EffectMatrix {
        alpha,
        test_ids,
        rows,
    }
}
