#![allow(dead_code)]

use ieat_core::{ConceptSet, Embedding, Role, TestInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn set(
    rng: &mut ChaCha8Rng,
    name: &str,
    role: Role,
    n: usize,
    dim: usize,
    offset: &[f64],
) -> ConceptSet {
    let members = (0..n)
        .map(|i| {
            let v = gaussian(rng, dim)
                .iter()
                .zip(offset)
                .map(|(g, o)| g + o)
                .collect();
            Embedding::new(format!("{name}{i}"), v).unwrap()
        })
        .collect();
    ConceptSet::new(name, role, members).unwrap()
}

/// Gaussian sets with random per-set offsets, so instances range from null
/// to strongly associated.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n_x: usize,
    n_a: usize,
    n_b: usize,
    dim: usize,
) -> TestInstance {
    let shift = rng.random_range(0.0..1.5);
    let offset = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        gaussian(rng, dim).iter().map(|v| v * shift).collect()
    };
    let (ox, oy, oa, ob) = (offset(rng), offset(rng), offset(rng), offset(rng));
    let x = set(rng, "X", Role::TargetX, n_x, dim, &ox);
    let y = set(rng, "Y", Role::TargetY, n_x, dim, &oy);
    let a = set(rng, "A", Role::AttributeA, n_a, dim, &oa);
    let b = set(rng, "B", Role::AttributeB, n_b, dim, &ob);
    TestInstance::new("R", x, y, a, b, None).unwrap()
}

/// Random instance with set sizes and dimension drawn from small ranges.
pub fn random_small_instance(rng: &mut ChaCha8Rng, n_x: usize) -> TestInstance {
    let n_a = rng.random_range(1..=6);
    let n_b = rng.random_range(1..=6);
    let dim = rng.random_range(2..=16);
    random_instance(rng, n_x, n_a, n_b, dim)
}
