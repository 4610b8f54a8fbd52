//! File formats: embedding sets (text and `EMB1`), suite manifests and
//! results documents.

pub mod binary;
pub mod manifest;
pub mod results;
pub mod text;

use std::fs::File;
use std::io::Read;
use std::path::Path;

pub use binary::{load_concept_binary, save_concept_binary, write_concept_binary};
pub use manifest::{
    default_suite_manifest, load_suite, load_suite_from, LoadedSuite, SuiteManifest, SuiteOptions,
    TestSpec,
};
pub use results::{
    read_results, write_results, ConfigEcho, GridEcho, ReportFormat, ResultsDocument,
};
pub use text::{load_concept_text, save_concept_text, write_concept_text};

use crate::error::{Error, Result};
use crate::model::{ConceptSet, Role};

/// Loads a concept file in either format, recognising `EMB1` by its magic
/// bytes.
pub fn load_concept(path: &Path, name: &str, role: Role, normalize: bool) -> Result<ConceptSet> {
    let mut head = [0u8; 4];
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
    if n == 4 && head == binary::MAGIC {
        load_concept_binary(path, name, role, normalize)
    } else {
        load_concept_text(path, name, role, normalize)
    }
}
