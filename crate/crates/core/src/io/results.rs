//! Results documents (JSON) and the tabular CSV reports derived from them.
//!
//! Floats are written with the shortest decimal representation that parses
//! back to the same `f64`, so every number survives a write/read cycle.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    EffectMatrix, EffectSize, EffectSummary, LayerProfile, SigmaConvention, TestFailure,
    TestResult, ThresholdCurve,
};
use crate::error::{Error, Result};
use crate::permutation::Tail;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown output format `{other}` (json|csv)"
            ))),
        }
    }
}

impl ReportFormat {
    /// Guesses from the file extension; JSON unless it ends in `.csv`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineInfo {
    pub name: String,
    pub version: String,
}

impl Default for EngineInfo {
    fn default() -> Self {
        Self {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridEcho {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

/// Every option that can change a number in the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub suite_name: String,
    pub model_tag: String,
    pub seed: u64,
    pub sample_count: u64,
    pub exact_threshold: u64,
    pub alphas: Vec<f64>,
    pub sigma: SigmaConvention,
    pub tail: Tail,
    pub normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridEcho>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub engine: EngineInfo,
    pub config: ConfigEcho,
    pub results: Vec<TestResult>,
    #[serde(default)]
    pub errors: Vec<TestFailure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub threshold_curves: Vec<ThresholdCurve>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layer_profiles: Vec<LayerProfile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effect_summaries: Vec<EffectSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect_matrix: Option<EffectMatrix>,
}

impl ResultsDocument {
    pub fn new(config: ConfigEcho) -> Self {
        Self {
            engine: EngineInfo::default(),
            config,
            results: Vec::new(),
            errors: Vec::new(),
            threshold_curves: Vec::new(),
            layer_profiles: Vec::new(),
            effect_summaries: Vec::new(),
            effect_matrix: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json(path, e))
    }
}

pub fn read_results(path: &Path) -> Result<ResultsDocument> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ResultsDocument::from_json(&text, path)
}

/// JSON writes the whole document. CSV writes the per-test table, one row
/// per `(model_tag, test_id)`.
pub fn write_results(doc: &ResultsDocument, path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => fs::write(path, doc.to_json()).map_err(|e| Error::io(path, e)),
        ReportFormat::Csv => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            write_results_csv(doc, BufWriter::new(file)).map_err(|e| Error::csv(path, e))
        }
    }
}

fn alpha_columns(results: &[TestResult]) -> Vec<f64> {
    let mut alphas: Vec<f64> = results
        .iter()
        .flat_map(|r| r.significant_at.iter().map(|s| s.alpha))
        .collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    alphas
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn effect_fields(e: &EffectSize) -> (String, &'static str) {
    match e {
        EffectSize::Finite(d) => (d.to_string(), "finite"),
        EffectSize::DegenerateVariance => (String::new(), "degenerate_variance"),
    }
}

pub fn write_results_csv<W: Write>(doc: &ResultsDocument, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let alphas = alpha_columns(&doc.results);
    let mut header: Vec<String> = [
        "model_tag",
        "layer",
        "test_id",
        "effect_size",
        "effect_state",
        "p_value",
        "statistic",
        "mode",
        "exceed_count",
        "evaluated_count",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(alphas.iter().map(|a| format!("sig_{a}")));
    w.write_record(&header)?;
    for r in &doc.results {
        let (d, state) = effect_fields(&r.effect_size);
        let mut row = vec![
            r.model_tag.clone(),
            opt(r.layer),
            r.test_id.clone(),
            d,
            state.to_string(),
            r.p_value.to_string(),
            r.statistic.to_string(),
            r.mode.to_string(),
            r.exceed_count.to_string(),
            r.evaluated_count.to_string(),
        ];
        row.extend(alphas.iter().map(|&a| {
            r.significant_at
                .iter()
                .find(|s| s.alpha == a)
                .map(|s| s.significant.to_string())
                .unwrap_or_default()
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Wide effect table: one row per model, one column per test. Cells hold
/// the signed effect size with a trailing `*` when significant.
pub fn write_matrix_csv<W: Write>(matrix: &EffectMatrix, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["model".to_string()];
    header.extend(matrix.test_ids.iter().cloned());
    w.write_record(&header)?;
    for row in &matrix.rows {
        let mut record = vec![row.model_tag.clone()];
        record.extend(row.cells.iter().map(|cell| match cell {
            None => String::new(),
            Some(c) => {
                let mark = if c.significant { "*" } else { "" };
                match c.effect_size {
                    EffectSize::Finite(d) => format!("{d}{mark}"),
                    EffectSize::DegenerateVariance => format!("degenerate{mark}"),
                }
            }
        }));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format plot data: `model_tag,p_t,count`.
pub fn write_curves_csv<W: Write>(curves: &[ThresholdCurve], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model_tag", "p_t", "count"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([c.model_tag.clone(), p.p_t.to_string(), p.count.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `model_tag,alpha,layer,significant,tests`.
pub fn write_layers_csv<W: Write>(profiles: &[LayerProfile], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model_tag", "alpha", "layer", "significant", "tests"])?;
    for p in profiles {
        for c in &p.counts {
            w.write_record([
                p.model_tag.clone(),
                p.alpha.to_string(),
                c.layer.to_string(),
                c.significant.to_string(),
                c.tests.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(BufWriter<File>) -> csv::Result<()>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write(BufWriter::new(file)).map_err(|e| Error::csv(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Significance;
    use crate::permutation::Mode;

    pub(crate) fn doc_with(n: usize) -> ResultsDocument {
        let mut doc = ResultsDocument::new(ConfigEcho {
            suite_name: "s".into(),
            model_tag: "m".into(),
            seed: 42,
            sample_count: 10_000,
            exact_threshold: 1_000_000,
            alphas: vec![0.05],
            sigma: SigmaConvention::Population,
            tail: Tail::Strict,
            normalize: false,
            grid: None,
        });
        for i in 0..n {
            doc.results.push(TestResult {
                test_id: format!("T{}", i + 1),
                model_tag: "m".into(),
                layer: None,
                labels: None,
                effect_size: if i == 1 {
                    EffectSize::DegenerateVariance
                } else {
                    EffectSize::Finite(1.75 - 0.1 * i as f64)
                },
                p_value: (i as f64 + 1.0) / 7.0,
                statistic: 0.1 * i as f64 - 1.0 / 3.0,
                mode: Mode::Exact,
                seed: 42,
                exceed_count: i as u64,
                tie_count: 1,
                evaluated_count: 12_870,
                standard_error: None,
                significant_at: vec![Significance {
                    alpha: 0.05,
                    significant: i == 0,
                }],
            });
        }
        doc
    }

    #[test]
    fn json_roundtrip_is_identity() {
        let doc = doc_with(15);
        let back = ResultsDocument::from_json(&doc.to_json(), Path::new("r.json")).unwrap();
        assert_eq!(back, doc);
        for (a, b) in back.results.iter().zip(&doc.results) {
            assert_eq!(a.p_value.to_bits(), b.p_value.to_bits());
            assert_eq!(a.statistic.to_bits(), b.statistic.to_bits());
        }
    }

    #[test]
    fn effect_of_one_point_seven_five_survives() {
        let doc = doc_with(1);
        let json = doc.to_json();
        assert!(json.contains("\"value\": 1.75"), "{json}");
        let back = ResultsDocument::from_json(&json, Path::new("r.json")).unwrap();
        assert_eq!(back.results[0].effect_size, EffectSize::Finite(1.75));
    }

    #[test]
    fn csv_has_one_row_per_result() {
        let doc = doc_with(15);
        let mut buf = Vec::new();
        write_results_csv(&doc, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 16);
        assert_eq!(
            lines[0],
            "model_tag,layer,test_id,effect_size,effect_state,p_value,statistic,mode,exceed_count,evaluated_count,sig_0.05"
        );
        assert!(lines[2].contains(",degenerate_variance,"));
        assert!(lines[1].starts_with("m,,T1,1.75,finite,"));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("JSON".parse::<ReportFormat>().unwrap(), ReportFormat::Json);
        assert!("xml".parse::<ReportFormat>().is_err());
        assert_eq!(
            ReportFormat::from_path(Path::new("a/b.CSV")),
            ReportFormat::Csv
        );
        assert_eq!(
            ReportFormat::from_path(Path::new("a/b")),
            ReportFormat::Json
        );
    }
}
