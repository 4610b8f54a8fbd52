//! Domain types and the numeric kernel.
//!
//! Everything here is immutable once constructed. Validation happens in the
//! constructors, so a [`TestInstance`] that exists is always evaluable: all
//! four concept sets share one dimension, every vector is finite and
//! non-zero, and the two target sets have equal size.
//!
//! Accumulation is plain left-to-right `f64` addition in member order. The
//! permutation engine compares statistics for exact equality, so the order
//! in which terms are added is part of the contract.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed when checking that cosines lie in `[-1, 1]`.
pub const COSINE_SLACK: f64 = 1e-12;

/// Left-to-right sum starting from `+0.0`.
#[inline]
pub(crate) fn sum_in_order<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().fold(0.0, |acc, v| acc + v)
}

#[inline]
fn mean_in_order(values: &[f64]) -> f64 {
    sum_in_order(values.iter().copied()) / values.len() as f64
}

#[inline]
fn dot(u: &[f64], v: &[f64]) -> f64 {
    sum_in_order(u.iter().zip(v).map(|(a, b)| a * b))
}

#[inline]
fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

#[inline]
fn cosine_with_norms(u: &[f64], u_norm: f64, v: &[f64], v_norm: f64) -> f64 {
    (dot(u, v) / (u_norm * v_norm)).clamp(-1.0, 1.0)
}

/// Cosine similarity of two vectors, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
            id: None,
            row: None,
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector { id: None });
    }
    Ok(cosine_with_norms(u, nu, v, nv))
}

/// The role a concept set plays in an association test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    TargetX,
    TargetY,
    AttributeA,
    AttributeB,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::TargetX => "X",
            Role::TargetY => "Y",
            Role::AttributeA => "A",
            Role::AttributeB => "B",
        };
        f.write_str(s)
    }
}

/// One labeled stimulus vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    id: String,
    vector: Vec<f64>,
    norm: f64,
}

impl Embedding {
    /// Rejects empty, non-finite and zero vectors.
    pub fn new(id: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if vector.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
                id: Some(id),
                row: None,
            });
        }
        if let Some(index) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { id, index });
        }
        let norm = norm(&vector);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroVector { id: Some(id) });
        }
        Ok(Self { id, vector, norm })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn dimension(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Same embedding rescaled to unit length.
    pub fn normalized(&self) -> Result<Self> {
        let vector = self.vector.iter().map(|v| v / self.norm).collect();
        Embedding::new(self.id.clone(), vector)
    }

    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        if self.dimension() != other.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: other.dimension(),
                id: Some(other.id.clone()),
                row: None,
            });
        }
        Ok(cosine_with_norms(
            &self.vector,
            self.norm,
            &other.vector,
            other.norm,
        ))
    }
}

/// A named, ordered collection of embeddings playing one role.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSet {
    name: String,
    role: Role,
    dimension: usize,
    members: Vec<Embedding>,
}

impl ConceptSet {
    pub fn new(name: impl Into<String>, role: Role, members: Vec<Embedding>) -> Result<Self> {
        let name = name.into();
        let Some(first) = members.first() else {
            return Err(Error::EmptyConceptSet { name });
        };
        let dimension = first.dimension();
        let mut seen = HashSet::with_capacity(members.len());
        for (row, m) in members.iter().enumerate() {
            if m.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: m.dimension(),
                    id: Some(m.id.clone()),
                    row: Some(row + 1),
                });
            }
            if !seen.insert(m.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: m.id.clone(),
                    set: name,
                });
            }
        }
        Ok(Self {
            name,
            role,
            dimension,
            members,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn members(&self) -> &[Embedding] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Same members under another role. Concept files are shared between
    /// tests, and a concept's role depends on the test that uses it.
    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn normalized(&self) -> Result<Self> {
        let members = self
            .members
            .iter()
            .map(Embedding::normalized)
            .collect::<Result<Vec<_>>>()?;
        ConceptSet::new(self.name.clone(), self.role, members)
    }

    /// Applies `f` to every vector. Used by invariance checks.
    pub fn map_vectors<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let members = self
            .members
            .iter()
            .map(|m| Embedding::new(m.id.clone(), f(&m.vector)))
            .collect::<Result<Vec<_>>>()?;
        ConceptSet::new(self.name.clone(), self.role, members)
    }

    fn mean_cosine(&self, w: &Embedding) -> Result<f64> {
        let cosines = self
            .members
            .iter()
            .map(|m| w.cosine(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_in_order(&cosines))
    }
}

/// Differential association of one stimulus with two attribute sets: mean
/// cosine to `a_set` minus mean cosine to `b_set`. Always within `[-2, 2]`.
pub fn diff_association(w: &Embedding, a_set: &ConceptSet, b_set: &ConceptSet) -> Result<f64> {
    for set in [a_set, b_set] {
        if set.is_empty() {
            return Err(Error::EmptyConceptSet {
                name: set.name.clone(),
            });
        }
        if set.dimension != w.dimension() {
            return Err(Error::DimensionMismatch {
                expected: set.dimension,
                found: w.dimension(),
                id: Some(w.id.clone()),
                row: None,
            });
        }
    }
    Ok(a_set.mean_cosine(w)? - b_set.mean_cosine(w)?)
}

/// Optional display names for the four concepts of a test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestLabels {
    pub x: String,
    pub y: String,
    pub a: String,
    pub b: String,
}

/// One association test `(X, Y, A, B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestInstance {
    test_id: String,
    x: ConceptSet,
    y: ConceptSet,
    a: ConceptSet,
    b: ConceptSet,
    labels: Option<TestLabels>,
}

impl TestInstance {
    pub fn new(
        test_id: impl Into<String>,
        x: ConceptSet,
        y: ConceptSet,
        a: ConceptSet,
        b: ConceptSet,
        labels: Option<TestLabels>,
    ) -> Result<Self> {
        let test_id = test_id.into();
        for (set, expected) in [
            (&x, Role::TargetX),
            (&y, Role::TargetY),
            (&a, Role::AttributeA),
            (&b, Role::AttributeB),
        ] {
            if set.role != expected {
                return Err(Error::RoleMismatch {
                    test_id,
                    name: set.name.clone(),
                    expected,
                    found: set.role,
                });
            }
        }
        let dimension = x.dimension;
        for set in [&y, &a, &b] {
            if set.dimension != dimension {
                return Err(Error::InconsistentDimension {
                    name: set.name.clone(),
                    expected: dimension,
                    found: set.dimension,
                }
                .in_test(test_id));
            }
        }
        if x.len() != y.len() {
            return Err(Error::UnequalTargets {
                test_id,
                x: x.len(),
                y: y.len(),
            });
        }
        let x_ids: HashSet<String> = x.members.iter().map(|m| qualified_id(&x, m)).collect();
        if let Some(m) = y
            .members
            .iter()
            .find(|m| x_ids.contains(&qualified_id(&y, m)))
        {
            return Err(Error::OverlappingTargets {
                test_id,
                id: qualified_id(&y, m),
            });
        }
        Ok(Self {
            test_id,
            x,
            y,
            a,
            b,
            labels,
        })
    }

    pub fn test_id(&self) -> &str {
        &self.test_id
    }

    pub fn x(&self) -> &ConceptSet {
        &self.x
    }

    pub fn y(&self) -> &ConceptSet {
        &self.y
    }

    pub fn a(&self) -> &ConceptSet {
        &self.a
    }

    pub fn b(&self) -> &ConceptSet {
        &self.b
    }

    pub fn labels(&self) -> Option<&TestLabels> {
        self.labels.as_ref()
    }

    pub fn dimension(&self) -> usize {
        self.x.dimension
    }

    /// Instance with X and Y exchanged.
    pub fn swap_targets(&self) -> Result<Self> {
        TestInstance::new(
            self.test_id.clone(),
            self.y.clone().with_role(Role::TargetX),
            self.x.clone().with_role(Role::TargetY),
            self.a.clone(),
            self.b.clone(),
            self.labels.clone(),
        )
    }

    /// Instance with A and B exchanged.
    pub fn swap_attributes(&self) -> Result<Self> {
        TestInstance::new(
            self.test_id.clone(),
            self.x.clone(),
            self.y.clone(),
            self.b.clone().with_role(Role::AttributeA),
            self.a.clone().with_role(Role::AttributeB),
            self.labels.clone(),
        )
    }

    /// Instance with every vector transformed by `f`.
    pub fn map_vectors<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        TestInstance::new(
            self.test_id.clone(),
            self.x.map_vectors(&mut f)?,
            self.y.map_vectors(&mut f)?,
            self.a.map_vectors(&mut f)?,
            self.b.map_vectors(&mut f)?,
            self.labels.clone(),
        )
    }

    pub fn normalized(&self) -> Result<Self> {
        TestInstance::new(
            self.test_id.clone(),
            self.x.normalized()?,
            self.y.normalized()?,
            self.a.normalized()?,
            self.b.normalized()?,
            self.labels.clone(),
        )
    }
}

fn qualified_id(set: &ConceptSet, m: &Embedding) -> String {
    format!("{}/{}", set.name, m.id)
}

/// Cosines of every target stimulus against every attribute stimulus, plus
/// the per-target differential association. Built once per test; every
/// partition statistic is then a function of `diff` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: Vec<String>,
    n_x: usize,
    a_cols: usize,
    b_cols: usize,
    a_block: Vec<f64>,
    b_block: Vec<f64>,
    diff: Vec<f64>,
}

impl SimilarityMatrix {
    /// Row ids (`set/id`), X members first, then Y members.
    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_total(&self) -> usize {
        self.rows.len()
    }

    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.a_block[i * self.a_cols..(i + 1) * self.a_cols]
    }

    pub fn b_row(&self, i: usize) -> &[f64] {
        &self.b_block[i * self.b_cols..(i + 1) * self.b_cols]
    }

    pub fn a_shape(&self) -> (usize, usize) {
        (self.rows.len(), self.a_cols)
    }

    pub fn b_shape(&self) -> (usize, usize) {
        (self.rows.len(), self.b_cols)
    }

    pub fn diff(&self) -> &[f64] {
        &self.diff
    }

    pub fn scores(&self) -> AssociationScores {
        AssociationScores::new(
            self.diff[..self.n_x].to_vec(),
            self.diff[self.n_x..].to_vec(),
        )
    }

    /// Builds a matrix straight from a differential-association column. The
    /// first `n_x` entries belong to X.
    pub fn from_diff(diff: Vec<f64>, n_x: usize) -> Result<Self> {
        if n_x == 0 || n_x >= diff.len() {
            return Err(Error::Config(format!(
                "n_x = {n_x} must lie strictly between 0 and {}",
                diff.len()
            )));
        }
        if diff.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config(
                "diff column contains non-finite values".into(),
            ));
        }
        let rows = (0..diff.len()).map(|i| format!("t{i}")).collect();
        Ok(Self {
            rows,
            n_x,
            a_cols: 0,
            b_cols: 0,
            a_block: Vec::new(),
            b_block: Vec::new(),
            diff,
        })
    }
}

pub fn build_similarity_matrix(t: &TestInstance) -> Result<SimilarityMatrix> {
    let targets: Vec<(&ConceptSet, &Embedding)> =
        t.x.members
            .iter()
            .map(|m| (&t.x, m))
            .chain(t.y.members.iter().map(|m| (&t.y, m)))
            .collect();
    let n = targets.len();
    let mut a_block = Vec::with_capacity(n * t.a.len());
    let mut b_block = Vec::with_capacity(n * t.b.len());
    let mut diff = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);

    for (set, w) in targets {
        let tag = |e: Error| e.context(format!("target `{}/{}`", set.name, w.id));
        let start_a = a_block.len();
        for m in &t.a.members {
            a_block.push(w.cosine(m).map_err(tag)?);
        }
        let start_b = b_block.len();
        for m in &t.b.members {
            b_block.push(w.cosine(m).map_err(tag)?);
        }
        diff.push(mean_in_order(&a_block[start_a..]) - mean_in_order(&b_block[start_b..]));
        rows.push(qualified_id(set, w));
    }

    Ok(SimilarityMatrix {
        rows,
        n_x: t.x.len(),
        a_cols: t.a.len(),
        b_cols: t.b.len(),
        a_block,
        b_block,
        diff,
    })
}

/// Differential associations of X and Y members and the resulting statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationScores {
    x_scores: Vec<f64>,
    y_scores: Vec<f64>,
    statistic: f64,
}

impl AssociationScores {
    pub fn new(x_scores: Vec<f64>, y_scores: Vec<f64>) -> Self {
        let statistic = test_statistic(&x_scores, &y_scores);
        Self {
            x_scores,
            y_scores,
            statistic,
        }
    }

    pub fn x_scores(&self) -> &[f64] {
        &self.x_scores
    }

    pub fn y_scores(&self) -> &[f64] {
        &self.y_scores
    }

    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.y_scores.clone(), self.x_scores.clone())
    }
}

/// `sum(x_scores) - sum(y_scores)`, each sum taken left to right.
pub fn test_statistic(x_scores: &[f64], y_scores: &[f64]) -> f64 {
    sum_in_order(x_scores.iter().copied()) - sum_in_order(y_scores.iter().copied())
}
