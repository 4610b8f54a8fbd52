use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ieat_core::analysis::{
    self, abs_effect_summary, effect_matrix, layer_profile, log_grid, threshold_curve,
    AnalysisConfig, SigmaConvention, TestFailure, TestOutcome, TestResult, DEFAULT_ALPHA,
};
use ieat_core::io::results::{
    write_csv_file, write_curves_csv, write_layers_csv, write_matrix_csv,
};
use ieat_core::io::{
    load_suite_from, read_results, save_concept_binary, save_concept_text, write_results,
    ConfigEcho, GridEcho, ReportFormat, ResultsDocument, SuiteManifest, SuiteOptions, TestSpec,
};
use ieat_core::permutation::{
    default_workers, PermutationConfig, DEFAULT_EXACT_THRESHOLD, DEFAULT_SAMPLE_COUNT,
};
use ieat_core::synth::{generate, SynthSpec};
use ieat_core::{Error, Tail};

use crate::{
    EngineArgs, Format, LayersArgs, RunArgs, Sigma, StimulusFormat, SweepArgs, SynthArgs, TailArg,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

const DEFAULT_SEED: u64 = 42;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    fn from_error(e: Error) -> Self {
        if e.is_config() {
            Self::config(e.to_string())
        } else {
            Self::data(e.to_string())
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn report_format(explicit: Option<Format>, path: &Path) -> ReportFormat {
    match explicit {
        Some(Format::Json) => ReportFormat::Json,
        Some(Format::Csv) => ReportFormat::Csv,
        None => ReportFormat::from_path(path),
    }
}

fn read_manifest(path: &Path) -> Result<SuiteManifest, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    SuiteManifest::from_json(&text, path).map_err(|e| Failure::config(e.to_string()))
}

fn analysis_config(
    engine: &EngineArgs,
    manifest: &SuiteManifest,
    layer: Option<u32>,
) -> Result<(AnalysisConfig, ConfigEcho), Failure> {
    let opts: &SuiteOptions = &manifest.options;
    let seed = engine.seed.or(opts.seed).unwrap_or(DEFAULT_SEED);
    let sample_count = engine
        .sample_count
        .or(opts.sample_count)
        .unwrap_or(DEFAULT_SAMPLE_COUNT);
    if sample_count == 0 {
        return Err(Failure::config("--sample-count must be at least 1"));
    }
    let exact_threshold = engine
        .exact_threshold
        .or(opts.exact_threshold)
        .unwrap_or(DEFAULT_EXACT_THRESHOLD);
    let workers = engine.workers.unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(Failure::config("--workers must be at least 1"));
    }
    let alphas = if engine.alphas.is_empty() {
        opts.thresholds
            .clone()
            .unwrap_or_else(|| vec![DEFAULT_ALPHA])
    } else {
        engine.alphas.clone()
    };
    let sigma = match engine.sigma {
        Sigma::Population => SigmaConvention::Population,
        Sigma::Sample => SigmaConvention::Sample,
    };
    let tail = match engine.tail {
        TailArg::Strict => Tail::Strict,
        TailArg::GePlusOne => Tail::GePlusOne,
    };
    let normalize = engine.normalize || opts.normalize.unwrap_or(false);
    let model_tag = engine
        .model_tag
        .clone()
        .or_else(|| manifest.model_tag.clone())
        .unwrap_or_else(|| manifest.suite_name.clone());

    let config = AnalysisConfig {
        permutation: PermutationConfig {
            exact_threshold,
            sample_count,
            seed,
            tail,
            workers,
        },
        sigma,
        alphas,
        normalize,
        model_tag: model_tag.clone(),
        layer: layer.or(manifest.layer),
    };
    let levels = config
        .significance_levels()
        .map_err(|e| Failure::config(e.to_string()))?;
    let echo = ConfigEcho {
        suite_name: manifest.suite_name.clone(),
        model_tag,
        seed,
        sample_count,
        exact_threshold,
        alphas: levels,
        sigma,
        tail,
        normalize,
        grid: None,
    };
    Ok((config, echo))
}

fn split(outcomes: Vec<TestOutcome>) -> (Vec<TestResult>, Vec<TestFailure>) {
    let mut results = Vec::new();
    let mut errors = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => errors.push(f),
        }
    }
    (results, errors)
}

fn exit_status(results: usize, errors: usize) -> u8 {
    match (results, errors) {
        (_, 0) => EXIT_OK,
        (0, _) => EXIT_DATA,
        _ => EXIT_PARTIAL,
    }
}

fn print_results(results: &[TestResult], errors: &[TestFailure]) {
    println!(
        "{:<6} {:<22} {:<22} {:>8} {:>10} {:<12} sig@0.05",
        "test", "targets", "attributes", "d", "p", "mode"
    );
    for r in results {
        let (targets, attributes) = r
            .labels
            .as_ref()
            .map(|l| (format!("{}/{}", l.x, l.y), format!("{}/{}", l.a, l.b)))
            .unwrap_or_default();
        println!(
            "{:<6} {:<22} {:<22} {:>8} {:>10} {:<12} {}",
            r.test_id,
            truncate(&targets, 22),
            truncate(&attributes, 22),
            r.effect_size.to_string(),
            format_p(r.p_value),
            r.mode.to_string(),
            if r.is_significant(DEFAULT_ALPHA) {
                "*"
            } else {
                ""
            }
        );
    }
    for e in errors {
        println!("{:<6} FAILED: {}", e.test_id, e.message);
    }
    println!(
        "{} results, {} failures, {} significant at 0.05",
        results.len(),
        errors.len(),
        analysis::count_significant(results, DEFAULT_ALPHA)
    );
}

fn format_p(p: f64) -> String {
    if p == 0.0 || p >= 1e-3 {
        format!("{p:.4}")
    } else {
        format!("{p:.2e}")
    }
}

fn truncate(s: &str, width: usize) -> String {
    if s.chars().count() <= width {
        s.to_owned()
    } else {
        let mut t: String = s.chars().take(width - 1).collect();
        t.push('~');
        t
    }
}

pub fn run(args: RunArgs) -> CmdResult {
    let manifest = read_manifest(&args.suite)?;
    let (config, echo) = analysis_config(&args.engine, &manifest, args.layer)?;
    let base = args
        .suite
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let suite = load_suite_from(manifest, &base);
    let outcomes =
        analysis::run_entries(&suite.run_entries(), &config).map_err(Failure::from_error)?;
    let (results, errors) = split(outcomes);

    let mut doc = ResultsDocument::new(echo);
    doc.results = results;
    doc.errors = errors;
    let format = report_format(args.format, &args.out);
    write_results(&doc, &args.out, format).map_err(Failure::from_error)?;
    print_results(&doc.results, &doc.errors);
    Ok(exit_status(doc.results.len(), doc.errors.len()))
}

/// Groups results by model tag, keeping first-seen order.
fn by_model(results: &[TestResult]) -> Vec<(String, Vec<TestResult>)> {
    let mut groups: Vec<(String, Vec<TestResult>)> = Vec::new();
    for r in results {
        match groups.iter_mut().find(|(tag, _)| *tag == r.model_tag) {
            Some((_, rs)) => rs.push(r.clone()),
            None => groups.push((r.model_tag.clone(), vec![r.clone()])),
        }
    }
    groups
}

pub fn sweep(args: SweepArgs) -> CmdResult {
    let grid = log_grid(args.grid_min, args.grid_max, args.grid_points)
        .map_err(|e| Failure::config(e.to_string()))?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::config(format!(
            "alpha {} must lie in (0, 1)",
            args.alpha
        )));
    }
    let mut docs = Vec::with_capacity(args.results.len());
    for path in &args.results {
        docs.push(read_results(path).map_err(|e| Failure::config(e.to_string()))?);
    }

    let mut results = Vec::new();
    let mut errors = Vec::new();
    for d in &docs {
        results.extend(d.results.iter().cloned());
        errors.extend(d.errors.iter().cloned());
    }
    if results.is_empty() {
        return Err(Failure::data("results documents contain no test results"));
    }
    let groups = by_model(&results);

    let mut echo = docs[0].config.clone();
    echo.model_tag = groups
        .iter()
        .map(|(t, _)| t.as_str())
        .collect::<Vec<_>>()
        .join(",");
    echo.grid = Some(GridEcho {
        min: args.grid_min,
        max: args.grid_max,
        points: args.grid_points,
    });
    let mut doc = ResultsDocument::new(echo);
    for (tag, rs) in &groups {
        doc.threshold_curves
            .push(threshold_curve(rs, &grid, tag.clone()));
        if let Ok(summary) = abs_effect_summary(rs, tag.clone()) {
            doc.effect_summaries.push(summary);
        }
    }
    doc.effect_matrix = Some(effect_matrix(&results, args.alpha));
    doc.results = results;
    doc.errors = errors;

    match report_format(args.format, &args.out) {
        ReportFormat::Json => write_results(&doc, &args.out, ReportFormat::Json),
        ReportFormat::Csv => {
            write_csv_file(&args.out, |w| write_curves_csv(&doc.threshold_curves, w))
        }
    }
    .map_err(Failure::from_error)?;
    if let Some(path) = &args.matrix {
        let matrix = doc.effect_matrix.as_ref().expect("matrix computed above");
        write_csv_file(path, |w| write_matrix_csv(matrix, w)).map_err(Failure::from_error)?;
    }

    println!(
        "{:<24} {:>6} {:>10} {:>10} {:>8} {:>8}",
        "model", "tests", "n@1e-4", "n@0.1", "mean|d|", "med|d|"
    );
    for (tag, rs) in &groups {
        let curve = doc
            .threshold_curves
            .iter()
            .find(|c| &c.model_tag == tag)
            .expect("curve per model");
        let summary = doc.effect_summaries.iter().find(|s| &s.model_tag == tag);
        println!(
            "{:<24} {:>6} {:>10} {:>10} {:>8} {:>8}",
            truncate(tag, 24),
            rs.len(),
            curve.points.first().map_or(0, |p| p.count),
            curve.points.last().map_or(0, |p| p.count),
            summary.map_or("-".into(), |s| format!("{:.2}", s.mean)),
            summary.map_or("-".into(), |s| format!("{:.2}", s.median)),
        );
    }
    Ok(EXIT_OK)
}

/// Layer index from a directory name: its trailing digits.
fn layer_index(name: &str) -> Option<u32> {
    let digits: String = name
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn layer_dirs(root: &Path) -> Result<BTreeMap<u32, PathBuf>, Failure> {
    let entries =
        fs::read_dir(root).map_err(|e| Failure::config(format!("{}: {e}", root.display())))?;
    let mut dirs = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| Failure::data(format!("{}: {e}", root.display())))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(index) = layer_index(&name) else {
            return Err(Failure::config(format!(
                "layer directory `{name}` has no trailing layer number"
            )));
        };
        if let Some(prev) = dirs.insert(index, path.clone()) {
            return Err(Failure::config(format!(
                "layer {index} appears twice: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    if dirs.is_empty() {
        return Err(Failure::data(format!(
            "{} contains no layer directories",
            root.display()
        )));
    }
    Ok(dirs)
}

pub fn layers(args: LayersArgs) -> CmdResult {
    let manifest = read_manifest(&args.suite)?;
    let (config, echo) = analysis_config(&args.engine, &manifest, None)?;
    let dirs = layer_dirs(&args.layers_root)?;

    let mut per_layer: BTreeMap<u32, Vec<TestResult>> = BTreeMap::new();
    let mut all_results = Vec::new();
    let mut all_errors = Vec::new();
    for (&layer, dir) in &dirs {
        let empty = fs::read_dir(dir)
            .map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?
            .next()
            .is_none();
        if empty {
            return Err(Failure::data(format!(
                "layer {layer}: directory {} is empty",
                dir.display()
            )));
        }
        let suite = load_suite_from(manifest.clone(), dir);
        let layer_config = AnalysisConfig {
            layer: Some(layer),
            ..config.clone()
        };
        let outcomes = analysis::run_entries(&suite.run_entries(), &layer_config)
            .map_err(Failure::from_error)?;
        let (results, errors) = split(outcomes);
        all_errors.extend(errors.into_iter().map(|mut f| {
            f.message = format!("layer {layer}: {}", f.message);
            f
        }));
        all_results.extend(results.iter().cloned());
        per_layer.insert(layer, results);
    }

    let mut doc = ResultsDocument::new(echo);
    for &alpha in &doc.config.alphas {
        let profile = layer_profile(&per_layer, alpha, config.model_tag.clone())
            .map_err(Failure::from_error)?;
        doc.layer_profiles.push(profile);
    }
    doc.results = all_results;
    doc.errors = all_errors;
    match report_format(args.format, &args.out) {
        ReportFormat::Json => write_results(&doc, &args.out, ReportFormat::Json),
        ReportFormat::Csv => {
            write_csv_file(&args.out, |w| write_layers_csv(&doc.layer_profiles, w))
        }
    }
    .map_err(Failure::from_error)?;

    let alphas: Vec<String> = doc
        .layer_profiles
        .iter()
        .map(|p| format!("n@{}", p.alpha))
        .collect();
    println!("{:<6} {}", "layer", alphas.join(" "));
    for (i, layer) in per_layer.keys().enumerate() {
        let counts: Vec<String> = doc
            .layer_profiles
            .iter()
            .map(|p| {
                format!(
                    "{:>w$}",
                    p.counts[i].significant,
                    w = format!("n@{}", p.alpha).len()
                )
            })
            .collect();
        println!("{:<6} {}", layer, counts.join(" "));
    }
    if !doc.errors.is_empty() {
        println!("{} failures", doc.errors.len());
    }
    Ok(exit_status(doc.results.len(), doc.errors.len()))
}

pub fn synth(args: SynthArgs) -> CmdResult {
    let spec = SynthSpec {
        dimension: args.dim,
        n_targets: args.n_targets,
        n_a: args.n_attributes,
        n_b: args.n_attributes,
        bias_strength: args.beta,
        noise_scale: args.noise,
        seed: args.seed,
    };
    spec.validate()
        .map_err(|e| Failure::config(e.to_string()))?;
    let instance = generate(&spec, &args.test_id).map_err(Failure::from_error)?;

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::config(format!("{}: {e}", args.out_dir.display())))?;
    let ext = match args.format {
        StimulusFormat::Text => "txt",
        StimulusFormat::Emb1 => "emb",
    };
    let mut concept_files = BTreeMap::new();
    for set in [instance.x(), instance.y(), instance.a(), instance.b()] {
        let file = format!("{}.{ext}", set.name().to_lowercase());
        let path = args.out_dir.join(&file);
        match args.format {
            StimulusFormat::Text => save_concept_text(set, &path),
            StimulusFormat::Emb1 => save_concept_binary(set, &path),
        }
        .map_err(Failure::from_error)?;
        concept_files.insert(set.name().to_owned(), file);
    }
    let manifest = SuiteManifest {
        schema_version: ieat_core::io::manifest::SCHEMA_VERSION,
        suite_name: format!("synth-beta{}", args.beta),
        dimension: Some(args.dim),
        model_tag: Some("synthetic".into()),
        layer: None,
        tests: vec![TestSpec {
            test_id: args.test_id.clone(),
            x_name: instance.x().name().into(),
            y_name: instance.y().name().into(),
            a_name: instance.a().name().into(),
            b_name: instance.b().name().into(),
            labels: None,
        }],
        concept_files,
        options: SuiteOptions {
            seed: Some(args.seed),
            ..SuiteOptions::default()
        },
    };
    let manifest_path = args.out_dir.join("suite.json");
    fs::write(&manifest_path, manifest.to_json())
        .map_err(|e| Failure::config(format!("{}: {e}", manifest_path.display())))?;
    println!("wrote {}", manifest_path.display());
    Ok(EXIT_OK)
}

pub fn manifest(out: &Path) -> CmdResult {
    fs::write(out, ieat_core::io::manifest::default_suite_manifest_json())
        .map_err(|e| Failure::config(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}
