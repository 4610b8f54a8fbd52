//! Suite manifests: which tests to run and where each concept's
//! embeddings live.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "suite_name": "ieat-default",
//!   "dimension": 768,
//!   "model_tag": "vit-mae-b",
//!   "tests": [
//!     { "test_id": "T5", "x_name": "Male", "y_name": "Female",
//!       "a_name": "Career", "b_name": "Family" }
//!   ],
//!   "concept_files": { "Male": "male.emb", "Female": "female.emb", "...": "..." },
//!   "options": { "thresholds": [0.05], "seed": 42 }
//! }
//! ```
//!
//! Concept paths are relative to a base directory, by default the
//! manifest's own directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::TestFailure;
use crate::error::{Error, Result};
use crate::io::load_concept;
use crate::model::{ConceptSet, Role, TestInstance, TestLabels};

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_MANIFEST: &str = include_str!("../../data/default_suite.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpec {
    pub test_id: String,
    pub x_name: String,
    pub y_name: String,
    pub a_name: String,
    pub b_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<TestLabels>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_threshold: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub schema_version: u32,
    pub suite_name: String,
    /// Expected dimension; inferred from the concept files when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
    pub tests: Vec<TestSpec>,
    pub concept_files: BTreeMap<String, String>,
    #[serde(default)]
    pub options: SuiteOptions,
}

impl SuiteManifest {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let manifest: SuiteManifest =
            serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// Structural checks that do not touch concept files.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.tests.is_empty() {
            return Err(Error::Config("manifest lists no tests".into()));
        }
        if self.dimension == Some(0) {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        let mut ids = HashSet::new();
        for t in &self.tests {
            if !ids.insert(t.test_id.as_str()) {
                return Err(Error::Config(format!("duplicate test id `{}`", t.test_id)));
            }
            for name in [&t.x_name, &t.y_name, &t.a_name, &t.b_name] {
                if !self.concept_files.contains_key(name) {
                    return Err(Error::MissingConcept {
                        name: name.clone(),
                        reason: format!(
                            "test {} references it but concept_files has no entry",
                            t.test_id
                        ),
                    }
                    .in_test(&t.test_id));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// The fifteen image embedding association tests, with conventional file
/// names for each concept. Embedding files are not included.
pub fn default_suite_manifest() -> SuiteManifest {
    SuiteManifest::from_json(DEFAULT_MANIFEST, Path::new("default_suite.json"))
        .expect("bundled manifest is valid")
}

pub fn default_suite_manifest_json() -> &'static str {
    DEFAULT_MANIFEST
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub test_id: String,
    pub instance: Result<TestInstance>,
}

#[derive(Debug, Clone)]
pub struct LoadedSuite {
    pub manifest: SuiteManifest,
    pub base_dir: PathBuf,
    pub dimension: Option<usize>,
    pub entries: Vec<SuiteEntry>,
}

impl LoadedSuite {
    /// All instances, or the first load error.
    pub fn instances(&self) -> Result<Vec<TestInstance>> {
        self.entries.iter().map(|e| e.instance.clone()).collect()
    }

    /// Entries in the shape `analysis::run_entries` expects.
    pub fn run_entries(&self) -> Vec<std::result::Result<&TestInstance, TestFailure>> {
        self.entries
            .iter()
            .map(|e| {
                e.instance
                    .as_ref()
                    .map_err(|err| TestFailure::new(&e.test_id, err))
            })
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &Error)> {
        self.entries.iter().filter_map(|e| {
            e.instance
                .as_ref()
                .err()
                .map(|err| (e.test_id.as_str(), err))
        })
    }
}

/// Reads the manifest at `path` and loads its concepts relative to the
/// manifest's directory.
pub fn load_suite(path: &Path) -> Result<LoadedSuite> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = SuiteManifest::from_json(&text, path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(load_suite_from(manifest, &base))
}

/// Loads every concept once, then assembles each test. Problems with a
/// concept file fail only the tests that use it.
pub fn load_suite_from(manifest: SuiteManifest, base_dir: &Path) -> LoadedSuite {
    let mut used: Vec<&str> = Vec::new();
    for t in &manifest.tests {
        for name in [&t.x_name, &t.y_name, &t.a_name, &t.b_name] {
            if !used.contains(&name.as_str()) {
                used.push(name);
            }
        }
    }

    let mut concepts: BTreeMap<&str, Result<ConceptSet>> = BTreeMap::new();
    for &name in &used {
        let loaded = match manifest.concept_files.get(name) {
            None => Err(Error::MissingConcept {
                name: name.to_owned(),
                reason: "no entry in concept_files".into(),
            }),
            Some(rel) => {
                let path = base_dir.join(rel);
                if path.is_file() {
                    load_concept(&path, name, Role::TargetX, false)
                        .map_err(|e| e.context(format!("concept `{name}`")))
                } else {
                    Err(Error::MissingConcept {
                        name: name.to_owned(),
                        reason: format!("file {} not found", path.display()),
                    })
                }
            }
        };
        concepts.insert(name, loaded);
    }

    // Manifest dimension wins; otherwise the first loadable concept in
    // test order sets it.
    let dimension = manifest.dimension.or_else(|| {
        used.iter()
            .find_map(|n| concepts[n].as_ref().ok().map(ConceptSet::dimension))
    });

    let entries = manifest
        .tests
        .iter()
        .map(|spec| {
            let fetch = |name: &str, role: Role| -> Result<ConceptSet> {
                let set = concepts[name].clone()?;
                if let Some(d) = dimension {
                    if set.dimension() != d {
                        return Err(Error::InconsistentDimension {
                            name: name.to_owned(),
                            expected: d,
                            found: set.dimension(),
                        });
                    }
                }
                Ok(set.with_role(role))
            };
            let instance = (|| {
                let labels = spec.labels.clone().or_else(|| {
                    Some(TestLabels {
                        x: spec.x_name.clone(),
                        y: spec.y_name.clone(),
                        a: spec.a_name.clone(),
                        b: spec.b_name.clone(),
                    })
                });
                TestInstance::new(
                    spec.test_id.clone(),
                    fetch(&spec.x_name, Role::TargetX)?,
                    fetch(&spec.y_name, Role::TargetY)?,
                    fetch(&spec.a_name, Role::AttributeA)?,
                    fetch(&spec.b_name, Role::AttributeB)?,
                    labels,
                )
            })()
            .map_err(|e| e.in_test(&spec.test_id));
            SuiteEntry {
                test_id: spec.test_id.clone(),
                instance,
            }
        })
        .collect();

    LoadedSuite {
        base_dir: base_dir.to_path_buf(),
        dimension,
        entries,
        manifest,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_roster() {
        let m = default_suite_manifest();
        assert_eq!(m.tests.len(), 15);
        assert_eq!(m.concept_files.len(), 35);
        let t5 = &m.tests[4];
        assert_eq!(
            (
                t5.test_id.as_str(),
                t5.x_name.as_str(),
                t5.y_name.as_str(),
                t5.a_name.as_str(),
                t5.b_name.as_str()
            ),
            ("T5", "Male", "Female", "Career", "Family")
        );
        assert_eq!(m.concept_files["Weapon (Modern)"], "weapon_modern.emb");
    }

    #[test]
    fn json_roundtrip() {
        let m = default_suite_manifest();
        let again = SuiteManifest::from_json(&m.to_json(), Path::new("m.json")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn structural_errors() {
        let mut m = default_suite_manifest();
        m.schema_version = 2;
        assert!(m.validate().unwrap_err().is_config());

        let mut m = default_suite_manifest();
        m.concept_files.remove("Thin");
        let err = m.validate().unwrap_err();
        assert!(matches!(err.root(), Error::MissingConcept { name, .. } if name == "Thin"));

        let mut m = default_suite_manifest();
        m.tests[1].test_id = "T1".into();
        assert!(m.validate().is_err());

        assert!(SuiteManifest::from_json(
            "{\"schema_version\": 1, \"bogus\": 3}",
            Path::new("m.json")
        )
        .is_err());
    }

    #[test]
    fn missing_files_fail_per_test() {
        let dir = tempfile::tempdir().unwrap();
        let suite = load_suite_from(default_suite_manifest(), dir.path());
        assert_eq!(suite.entries.len(), 15);
        assert!(suite.entries.iter().all(|e| matches!(
            e.instance.as_ref().unwrap_err().root(),
            Error::MissingConcept { .. }
        )));
        assert!(suite.instances().is_err());
    }
}
