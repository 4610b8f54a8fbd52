//! Embedding association tests for image-embedding spaces.
//!
//! Given embeddings for two target concepts `X`, `Y` and two attribute
//! concepts `A`, `B`, the engine computes the differential-association test
//! statistic, its permutation p-value (exact enumeration of all equal-sized
//! relabelings, or seeded Monte Carlo when that is too many), and the
//! effect size. On top of per-test results it provides the sweep analyses
//! used to compare models: significance-threshold curves, per-layer counts,
//! absolute-effect-size summaries and a model-by-test effect matrix.
//!
//! ```
//! use ieat_core::{analysis, synth};
//!
//! let spec = synth::SynthSpec { bias_strength: 1.0, ..Default::default() };
//! let test = synth::generate(&spec, "S1").unwrap();
//! let result = analysis::run_test(&test, &Default::default()).unwrap();
//! assert!(result.p_value <= 0.05);
//! ```

pub mod analysis;
pub mod combinatorics;
pub mod error;
pub mod io;
pub mod model;
pub mod permutation;
pub mod seed;
pub mod synth;

pub use analysis::{run_suite, run_test, AnalysisConfig, EffectSize, SigmaConvention, TestResult};
pub use error::{Error, Result};
pub use model::{ConceptSet, Embedding, Role, TestInstance};
pub use permutation::{Mode, PermutationConfig, Tail};
