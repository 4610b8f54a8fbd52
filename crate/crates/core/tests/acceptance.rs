//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Built with `harness = false` so the lines always reach stdout.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ieat_core::analysis::{
    self, default_grid, effect_matrix, effect_size, AnalysisConfig, SigmaConvention,
};
use ieat_core::io::results::{write_matrix_csv, write_results_csv};
use ieat_core::io::{default_suite_manifest, ConfigEcho, ResultsDocument};
use ieat_core::model::{build_similarity_matrix, SimilarityMatrix};
use ieat_core::permutation::{exact_pvalue, mc_pvalue, PermutationConfig, PermutationPlan};
use ieat_core::synth::{generate, oracle_pvalue, SynthSpec};
use ieat_core::{Mode, TestInstance, TestResult};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use common::{gaussian, random_instance, random_small_instance, rng};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn plan(sim: &SimilarityMatrix, exact_threshold: u64, workers: usize) -> PermutationPlan {
    let config = PermutationConfig {
        exact_threshold,
        workers,
        ..PermutationConfig::default()
    };
    PermutationPlan::for_matrix(sim, &config, "R").unwrap()
}

fn single_threaded() -> AnalysisConfig {
    AnalysisConfig {
        permutation: PermutationConfig {
            workers: 1,
            ..PermutationConfig::default()
        },
        ..AnalysisConfig::default()
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut mismatches = 0;
    let mut sizes = [0usize; 9];
    for i in 0..500 {
        let n_x = 2 + i % 7;
        sizes[n_x] += 1;
        let t = random_small_instance(&mut r, n_x);
        let sim = build_similarity_matrix(&t).unwrap();
        let engine = exact_pvalue(&sim, &plan(&sim, u64::MAX, 4)).unwrap();
        let oracle = oracle_pvalue(&t).unwrap();
        if engine.exceed_count != oracle.exceed_count
            || engine.evaluated_count != oracle.evaluated_count
        {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        mismatches == 0 && elapsed < Duration::from_secs(60),
        format!(
            "500 instances (n_x 2..8: {:?}), {mismatches} mismatches, {elapsed:.2?}",
            &sizes[2..]
        ),
    )
}

fn hand_cases() -> Outcome {
    let sim = SimilarityMatrix::from_diff(vec![1.0, 1.0, -1.0, -1.0], 2).unwrap();
    let a = exact_pvalue(&sim, &plan(&sim, u64::MAX, 1)).unwrap();
    let d = effect_size(&sim.scores(), SigmaConvention::Population).unwrap();
    let sim = SimilarityMatrix::from_diff(vec![1.0, -1.0, 1.0, -1.0], 2).unwrap();
    let b = exact_pvalue(&sim, &plan(&sim, u64::MAX, 1)).unwrap();
    check(
        a.exceed_count == 0
            && a.evaluated_count == 6
            && a.p_value == 0.0
            && d == 2.0
            && b.exceed_count == 1
            && b.p_value == 1.0 / 6.0,
        format!(
            "[1,1,-1,-1]: p = {}/{} d = {d}; [1,-1,1,-1]: p = {}/{}",
            a.exceed_count, a.evaluated_count, b.exceed_count, b.evaluated_count
        ),
    )
}

fn effect_bound() -> Outcome {
    let mut r = rng(2);
    let mut max = 0.0f64;
    for _ in 0..1000 {
        let n_x = r.random_range(1..=12);
        let t = random_small_instance(&mut r, n_x);
        let scores = build_similarity_matrix(&t).unwrap().scores();
        if let Ok(d) = effect_size(&scores, SigmaConvention::Population) {
            max = max.max(d.abs());
        }
    }
    // Two-point groups reach the bound exactly.
    let sim = SimilarityMatrix::from_diff(vec![0.3, 0.3, 0.3, -0.2, -0.2, -0.2], 3).unwrap();
    let extreme = effect_size(&sim.scores(), SigmaConvention::Population).unwrap();
    max = max.max(extreme.abs());
    check(
        max <= 2.0 + 1e-12,
        format!("1000 instances, max |d| = {max}"),
    )
}

fn mc_consistency() -> Outcome {
    let mut within = 0;
    let mut interior = 0;
    for i in 0..100u64 {
        let spec = SynthSpec {
            dimension: 16,
            bias_strength: (i % 10) as f64 * 0.01,
            noise_scale: 0.5,
            seed: 1000 + i,
            ..SynthSpec::default()
        };
        let t = generate(&spec, "S").unwrap();
        let sim = build_similarity_matrix(&t).unwrap();
        let exact = exact_pvalue(&sim, &plan(&sim, u64::MAX, 4))
            .unwrap()
            .p_value;
        let mc = mc_pvalue(&sim, &plan(&sim, 0, 4)).unwrap();
        assert_eq!(mc.evaluated_count, 10_000);
        let bound = 3.0 * (exact * (1.0 - exact) / 10_000.0).sqrt();
        if (mc.p_value - exact).abs() <= bound {
            within += 1;
        }
        if exact > 0.0 && exact < 1.0 {
            interior += 1;
        }
    }
    check(
        within >= 99,
        format!("{within}/100 within 3 standard errors ({interior} with 0 < p < 1)"),
    )
}

fn invariance() -> Outcome {
    let mut r = rng(3);
    let config = single_threaded();
    let (mut max_d, mut max_p) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n_x = r.random_range(2..=7);
        let t = random_small_instance(&mut r, n_x);
        let dim = t.dimension();
        let q = DMatrix::from_vec(dim, dim, gaussian(&mut r, dim * dim))
            .qr()
            .q();
        let scale = 10f64.powf(r.random_range(-3.0..3.0));
        let base = analysis::run_test(&t, &config).unwrap();
        let scaled = t
            .map_vectors(|v| v.iter().map(|x| x * scale).collect())
            .unwrap();
        let rotated = t
            .map_vectors(|v| {
                (&q * DVector::from_column_slice(v))
                    .iter()
                    .copied()
                    .collect()
            })
            .unwrap();
        for other in [scaled, rotated] {
            let o = analysis::run_test(&other, &config).unwrap();
            max_d = max_d
                .max((base.effect_size.value().unwrap() - o.effect_size.value().unwrap()).abs());
            max_p = max_p.max((base.p_value - o.p_value).abs());
        }
    }
    check(
        max_d <= 1e-6 && max_p <= 1e-6,
        format!(
            "100 instances, scaling and rotation: max |dd| = {max_d:.1e}, max |dp| = {max_p:.1e}"
        ),
    )
}

fn null_calibration() -> Outcome {
    let config = single_threaded();
    let hits = (0..1000u64)
        .filter(|&seed| {
            let t = generate(
                &SynthSpec {
                    seed,
                    ..SynthSpec::default()
                },
                "S",
            )
            .unwrap();
            analysis::run_test(&t, &config).unwrap().p_value <= 0.05
        })
        .count();
    let fraction = hits as f64 / 1000.0;
    check(
        (0.03..=0.07).contains(&fraction),
        format!("beta = 0, 1000 seeds: {hits} with p <= 0.05 (fraction {fraction})"),
    )
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn monotonicity() -> Outcome {
    let config = single_threaded();
    let seeds = 100u64;
    let betas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mut means = Vec::new();
    let mut detected = 0;
    for &beta in &betas {
        let mut sum = 0.0;
        for seed in 0..seeds {
            let spec = SynthSpec {
                bias_strength: beta,
                noise_scale: 0.3,
                seed,
                ..SynthSpec::default()
            };
            let r = analysis::run_test(&generate(&spec, "S").unwrap(), &config).unwrap();
            sum += r.effect_size.value().unwrap();
            if beta == 1.0 && r.p_value <= 0.01 {
                detected += 1;
            }
        }
        means.push(sum / seeds as f64);
    }
    let increasing = means.windows(2).all(|w| w[0] < w[1]);
    let rho = spearman(&betas, &means);
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.3}")).collect();
    check(
        increasing && rho >= 0.95 && detected * 100 >= 95 * seeds,
        format!(
            "mean d [{}], spearman {rho}, beta = 1 detected at 0.01 in {detected}/{seeds}",
            shown.join(", ")
        ),
    )
}

fn small_suite() -> Vec<TestInstance> {
    (0..6u64)
        .map(|i| {
            let spec = SynthSpec {
                dimension: 24,
                n_targets: 5 + i as usize,
                bias_strength: i as f64 * 0.05,
                noise_scale: 0.3,
                seed: i,
                ..SynthSpec::default()
            };
            generate(&spec, &format!("T{}", i + 1)).unwrap()
        })
        .collect()
}

fn echo(config: &AnalysisConfig) -> ConfigEcho {
    let p = config.permutation;
    ConfigEcho {
        suite_name: "acceptance".into(),
        model_tag: config.model_tag.clone(),
        seed: p.seed,
        sample_count: p.sample_count,
        exact_threshold: p.exact_threshold,
        alphas: config.significance_levels().unwrap(),
        sigma: config.sigma,
        tail: p.tail,
        normalize: config.normalize,
        grid: None,
    }
}

fn document(suite: &[TestInstance], config: &AnalysisConfig) -> ResultsDocument {
    let mut doc = ResultsDocument::new(echo(config));
    doc.results = analysis::run_suite(suite, config)
        .unwrap()
        .into_iter()
        .map(|o| o.unwrap())
        .collect();
    doc
}

fn determinism() -> Outcome {
    let suite = small_suite();
    let with = |workers: usize, exact_threshold: u64| AnalysisConfig {
        permutation: PermutationConfig {
            workers,
            exact_threshold,
            sample_count: 2000,
            seed: 7,
            ..PermutationConfig::default()
        },
        alphas: vec![0.01],
        ..AnalysisConfig::default()
    };
    let first = document(&suite, &with(4, 5000)).to_json();
    let second = document(&suite, &with(4, 5000)).to_json();
    let modes: Vec<Mode> = document(&suite, &with(1, 5000))
        .results
        .iter()
        .map(|r| r.mode)
        .collect();
    let counts = |workers| -> Vec<(u64, u64)> {
        document(&suite, &with(workers, 5000))
            .results
            .iter()
            .map(|r| (r.exceed_count, r.tie_count))
            .collect()
    };
    let (c1, c2, c8) = (counts(1), counts(2), counts(8));
    let both_modes = modes.contains(&Mode::Exact) && modes.contains(&Mode::MonteCarlo);
    check(
        first == second && c1 == c2 && c1 == c8 && both_modes,
        format!(
            "documents identical: {}, {} bytes; exceed counts equal for 1/2/8 workers: {} (modes {modes:?})",
            first == second,
            first.len(),
            c1 == c2 && c1 == c8
        ),
    )
}

fn best_of<F: FnMut()>(runs: usize, mut f: F) -> Duration {
    (0..runs)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed()
        })
        .min()
        .unwrap()
}

fn performance() -> Outcome {
    let mut r = rng(4);
    let t = random_instance(&mut r, 8, 8, 8, 64);
    let sim = build_similarity_matrix(&t).unwrap();
    let exact_plan = plan(&sim, u64::MAX, ieat_core::permutation::default_workers());
    assert_eq!(exact_plan.partition_count, Some(12_870));
    let exact = best_of(3, || {
        exact_pvalue(&sim, &exact_plan).unwrap();
    });

    let t = random_instance(&mut r, 40, 40, 40, 64);
    let sim = build_similarity_matrix(&t).unwrap();
    let mc_plan = plan(&sim, 0, ieat_core::permutation::default_workers());
    assert_eq!(mc_plan.sample_count, 10_000);
    let mc = best_of(3, || {
        mc_pvalue(&sim, &mc_plan).unwrap();
    });
    check(
        exact < Duration::from_millis(100) && mc < Duration::from_secs(1),
        format!("exact C(16,8) in {exact:.2?}; 10000 samples at 40/40 in {mc:.2?}"),
    )
}

const ROSTER: [(&str, &str, &str, &str, &str); 15] = [
    ("T1", "Young", "Old", "Pleasant", "Unpleasant"),
    ("T2", "Other", "Arab-Muslim", "Pleasant", "Unpleasant"),
    (
        "T3",
        "European American",
        "Asian American",
        "American",
        "Foreign",
    ),
    ("T4", "Disabled", "Not-Disabled", "Pleasant", "Unpleasant"),
    ("T5", "Male", "Female", "Career", "Family"),
    ("T6", "Male", "Female", "Science", "Liberal Arts"),
    ("T7", "Flower", "Insect", "Pleasant", "Unpleasant"),
    (
        "T8",
        "European American",
        "Native American",
        "Pleasant",
        "Unpleasant",
    ),
    (
        "T9",
        "European American",
        "African American",
        "Pleasant",
        "Unpleasant",
    ),
    ("T10", "Christianity", "Judaism", "Pleasant", "Unpleasant"),
    ("T11", "Gay", "Straight", "Pleasant", "Unpleasant"),
    ("T12", "Light Skin", "Dark Skin", "Pleasant", "Unpleasant"),
    ("T13", "White", "Black", "Tool", "Weapon"),
    ("T14", "White", "Black", "Tool", "Weapon (Modern)"),
    ("T15", "Thin", "Fat", "Pleasant", "Unpleasant"),
];

fn structure() -> Outcome {
    let manifest = default_suite_manifest();
    let roster: Vec<(&str, &str, &str, &str, &str)> = manifest
        .tests
        .iter()
        .map(|t| (&*t.test_id, &*t.x_name, &*t.y_name, &*t.a_name, &*t.b_name))
        .collect();
    let manifest_ok = roster == ROSTER && manifest.validate().is_ok();

    let grid = default_grid();
    let grid_ok = grid.len() == 200 && grid[0] == 1e-4 && grid[199] == 1e-1;

    // Two models over the fifteen tests, as in the paper's effect table.
    let mut results: Vec<TestResult> = Vec::new();
    for (m, tag) in ["vit-a", "vit-b"].iter().enumerate() {
        let config = AnalysisConfig {
            model_tag: tag.to_string(),
            ..single_threaded()
        };
        for (i, row) in ROSTER.iter().enumerate() {
            let spec = SynthSpec {
                dimension: 16,
                n_targets: 5,
                bias_strength: (i % 4) as f64 * 0.1,
                noise_scale: 0.4,
                seed: (m * 100 + i) as u64,
                ..SynthSpec::default()
            };
            let t = generate(&spec, row.0).unwrap();
            results.push(analysis::run_test(&t, &config).unwrap());
        }
    }
    let mut doc = ResultsDocument::new(echo(&single_threaded()));
    doc.results = results.clone();
    let mut csv = Vec::new();
    write_results_csv(&doc, &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let rows_ok = lines.len() == 31
        && lines[1..]
            .iter()
            .all(|l| l.split(',').count() == header.len())
        && ["model_tag", "test_id", "effect_size", "p_value", "sig_0.05"]
            .iter()
            .all(|c| header.contains(c));

    let mut matrix = Vec::new();
    write_matrix_csv(&effect_matrix(&results, 0.05), &mut matrix).unwrap();
    let matrix = String::from_utf8(matrix).unwrap();
    let mlines: Vec<&str> = matrix.lines().collect();
    let expected_header = std::iter::once("model".to_string())
        .chain(ROSTER.iter().map(|r| r.0.to_string()))
        .collect::<Vec<_>>()
        .join(",");
    let matrix_ok =
        mlines.len() == 3 && mlines[0] == expected_header && mlines[1].starts_with("vit-a,");

    check(
        manifest_ok && grid_ok && rows_ok && matrix_ok,
        format!(
            "manifest matches 15-test roster: {manifest_ok}; grid [{:e}, {:e}] x {}: {grid_ok}; \
             results CSV {} rows x {} columns: {rows_ok}; effect matrix 2 x 15: {matrix_ok}",
            grid[0],
            grid[grid.len() - 1],
            grid.len(),
            lines.len() - 1,
            header.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("hand-computed cases", hand_cases),
        ("effect-size bound", effect_bound),
        ("monte carlo consistency", mc_consistency),
        ("invariance", invariance),
        ("null calibration", null_calibration),
        ("power and monotonicity", monotonicity),
        ("determinism", determinism),
        ("performance", performance),
        ("structure", structure),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{elapsed:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{elapsed:.1?}]");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
