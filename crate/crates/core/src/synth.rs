//! Synthetic test instances with a planted bias, and a brute-force
//! reference p-value.
//!
//! Geometry: one random unit direction `u` separates the attributes
//! (`A = u + noise`, `B = -u + noise`). Targets sit at `X = beta u + noise`
//! and `Y = -beta u + noise`. With `beta = 0` X and Y are exchangeable given
//! A and B, so the permutation test is exactly calibrated.
//!
//! The noise draws do not depend on `beta`: two specs that differ only in
//! strength share every random number.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConceptSet, Embedding, Role, TestInstance};
use crate::seed;

/// Largest partition count the reference enumerator accepts.
pub const ORACLE_LIMIT: u64 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dimension: usize,
    /// Size of each target set.
    pub n_targets: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub bias_strength: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dimension: 64,
            n_targets: 8,
            n_a: 8,
            n_b: 8,
            bias_strength: 0.0,
            noise_scale: 0.05,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.n_targets == 0 || self.n_a == 0 || self.n_b == 0 {
            return Err(Error::Config(
                "dimension and all set sizes must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.bias_strength) {
            return Err(Error::Config(format!(
                "bias strength {} outside [0, 1]",
                self.bias_strength
            )));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise scale {} must be positive",
                self.noise_scale
            )));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn draw_set(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    name: &str,
    role: Role,
    size: usize,
    center: &[f64],
) -> Result<ConceptSet> {
    let prefix = name.to_lowercase();
    let members = (0..size)
        .map(|i| {
            let noise = gaussian(rng, spec.dimension, spec.noise_scale);
            let v = center.iter().zip(noise).map(|(c, e)| c + e).collect();
            Embedding::new(format!("{prefix}{i}"), unit(v))
        })
        .collect::<Result<Vec<_>>>()?;
    ConceptSet::new(name, role, members)
}

/// Builds a planted-bias instance named `test_id`, with concept sets named
/// `X`, `Y`, `A` and `B`.
pub fn generate(spec: &SynthSpec, test_id: &str) -> Result<TestInstance> {
    generate_named(spec, test_id, ["X", "Y", "A", "B"])
}

/// As [`generate`], with caller-chosen concept names `[x, y, a, b]`.
pub fn generate_named(spec: &SynthSpec, test_id: &str, names: [&str; 4]) -> Result<TestInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, "synth"));
    let mut u = unit(gaussian(&mut rng, spec.dimension, 1.0));
    if u.iter().any(|v| !v.is_finite()) {
        u = vec![0.0; spec.dimension];
        u[0] = 1.0;
    }
    let scaled = |k: f64| -> Vec<f64> { u.iter().map(|v| k * v).collect() };
    let beta = spec.bias_strength;

    let a = draw_set(
        &mut rng,
        spec,
        names[2],
        Role::AttributeA,
        spec.n_a,
        &scaled(1.0),
    )?;
    let b = draw_set(
        &mut rng,
        spec,
        names[3],
        Role::AttributeB,
        spec.n_b,
        &scaled(-1.0),
    )?;
    let x = draw_set(
        &mut rng,
        spec,
        names[0],
        Role::TargetX,
        spec.n_targets,
        &scaled(beta),
    )?;
    let y = draw_set(
        &mut rng,
        spec,
        names[1],
        Role::TargetY,
        spec.n_targets,
        &scaled(-beta),
    )?;
    TestInstance::new(test_id, x, y, a, b, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOutcome {
    pub p_value: f64,
    pub exceed_count: u64,
    pub evaluated_count: u64,
}

/// Reference permutation p-value: recomputes every cosine and walks all
/// bitmasks of the right weight, one thread, no shared code with the
/// engine. Arithmetic is ordered like the engine's (left-to-right sums in
/// member order) so that exceedance counts agree exactly.
pub fn oracle_pvalue(t: &TestInstance) -> Result<OracleOutcome> {
    let targets: Vec<&[f64]> = t
        .x()
        .members()
        .iter()
        .chain(t.y().members())
        .map(|m| m.vector())
        .collect();
    let n = targets.len();
    let k = t.x().len();

    let mut count: u64 = 1;
    for i in 0..k {
        count = count * (n - i) as u64 / (i as u64 + 1);
        if count > ORACLE_LIMIT {
            return Err(Error::TooLarge {
                n,
                k,
                limit: ORACLE_LIMIT,
            });
        }
    }

    fn dot(u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..u.len() {
            s += u[i] * v[i];
        }
        s
    }
    fn cos(u: &[f64], v: &[f64]) -> f64 {
        let c = dot(u, v) / (dot(u, u).sqrt() * dot(v, v).sqrt());
        c.clamp(-1.0, 1.0)
    }
    fn mean_cos(w: &[f64], set: &ConceptSet) -> f64 {
        let mut s = 0.0;
        for m in set.members() {
            s += cos(w, m.vector());
        }
        s / set.len() as f64
    }

    let scores: Vec<f64> = targets
        .iter()
        .map(|w| mean_cos(w, t.a()) - mean_cos(w, t.b()))
        .collect();
    let stat = |mask: u32| {
        let (mut sx, mut sy) = (0.0, 0.0);
        for (i, s) in scores.iter().enumerate() {
            if mask & (1 << i) != 0 {
                sx += s;
            } else {
                sy += s;
            }
        }
        sx - sy
    };

    let observed = stat((1u32 << k) - 1);
    let mut exceed = 0;
    let mut evaluated = 0;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        evaluated += 1;
        if stat(mask) > observed {
            exceed += 1;
        }
    }
    Ok(OracleOutcome {
        p_value: exceed as f64 / evaluated as f64,
        exceed_count: exceed,
        evaluated_count: evaluated,
    })
}
