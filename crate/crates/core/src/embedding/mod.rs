//! Embedding vectors, providers, and profile/project aggregation.
//!
//! A student vector is the proficiency-weighted mean of the embeddings of
//! their skills, domain preferences and experience text. A project vector
//! weights required skills 1.5, optional skills 0.75 and the description 1.0.
//! Both are L2-normalized so that cosine similarity reduces to a dot product.

mod offline;
mod remote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ProjectSpec, StudentProfile, Taxonomy};

pub use offline::{fnv1a64, OfflineEmbedder, DEFAULT_OFFLINE_DIM};
pub use remote::{RemoteConfig, RemoteProvider};

pub const REQUIRED_SKILL_WEIGHT: f64 = 1.5;
pub const OPTIONAL_SKILL_WEIGHT: f64 = 0.75;
pub const DESCRIPTION_WEIGHT: f64 = 1.0;
pub const DOMAIN_PREFERENCE_WEIGHT: f64 = 1.0;
pub const EXPERIENCE_TEXT_WEIGHT: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("text to embed is empty")]
    EmptyText,
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("profile has nothing to embed")]
    EmptyProfile,
    #[error("project has nothing to embed")]
    EmptyProject,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("network error: {0}")]
    Network(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("provider error: {0}")]
    Provider(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

/// A dense vector. Constructed through [`EmbeddingVector::normalized`] it
/// has unit Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(EmbedError::ZeroVector);
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    /// Wraps raw values without normalizing.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Normalized mean of `vectors`; the result keeps their common dimension.
pub fn mean_direction<'a, I>(vectors: I) -> Result<EmbeddingVector, EmbedError>
where
    I: IntoIterator<Item = &'a EmbeddingVector>,
{
    let mut acc: Option<Vec<f64>> = None;
    for v in vectors {
        match acc.as_mut() {
            None => acc = Some(v.as_slice().to_vec()),
            Some(a) => {
                if a.len() != v.dim() {
                    return Err(EmbedError::DimensionMismatch {
                        expected: a.len(),
                        actual: v.dim(),
                    });
                }
                a.iter_mut().zip(v.as_slice()).for_each(|(x, y)| *x += y);
            }
        }
    }
    EmbeddingVector::normalized(acc.ok_or(EmbedError::ZeroVector)?)
}

/// One text to embed. The area hint lets the offline embedder place skills
/// of the same technical area near each other; remote providers ignore it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TextItem {
    pub text: String,
    pub area_hint: Option<String>,
}

impl TextItem {
    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            area_hint: None,
        }
    }

    pub fn with_area(text: impl Into<String>, area: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            area_hint: Some(area.into()),
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    /// Embeds every item; output order matches input order.
    fn embed_batch(&self, items: &[TextItem]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn dimension(&self) -> usize;

    /// Monetary estimate per embedded text, in USD.
    fn cost_per_text(&self) -> f64;

    /// Running count of texts sent through this provider.
    fn texts_embedded(&self) -> u64;

    fn estimated_cost(&self) -> f64 {
        self.texts_embedded() as f64 * self.cost_per_text()
    }
}

/// Weighted terms making up one student or project vector.
fn student_terms(profile: &StudentProfile) -> Vec<(TextItem, f64)> {
    let mut terms: Vec<(TextItem, f64)> = profile
        .skills
        .iter()
        .map(|s| (TextItem::with_area(&s.skill_name, &s.area), s.proficiency.weight()))
        .collect();
    terms.extend(
        profile
            .domain_preferences
            .iter()
            .map(|d| (TextItem::plain(d), DOMAIN_PREFERENCE_WEIGHT)),
    );
    if !profile.experience_text.trim().is_empty() {
        terms.push((TextItem::plain(profile.experience_text.trim()), EXPERIENCE_TEXT_WEIGHT));
    }
    terms
}

fn skill_item(skill: &str, taxonomy: &Taxonomy) -> TextItem {
    TextItem {
        text: skill.to_string(),
        area_hint: taxonomy.area_of(skill).map(str::to_string),
    }
}

fn project_terms(spec: &ProjectSpec, taxonomy: &Taxonomy) -> Vec<(TextItem, f64)> {
    let mut terms: Vec<(TextItem, f64)> = spec
        .required_skills
        .iter()
        .map(|s| (skill_item(s, taxonomy), REQUIRED_SKILL_WEIGHT))
        .collect();
    terms.extend(
        spec.optional_skills
            .iter()
            .map(|s| (skill_item(s, taxonomy), OPTIONAL_SKILL_WEIGHT)),
    );
    if !spec.description.trim().is_empty() {
        terms.push((TextItem::plain(spec.description.trim()), DESCRIPTION_WEIGHT));
    }
    terms
}

/// Normalized weighted mean of term embeddings.
///
/// Terms are summed in a canonical order (sorted by text, hint, weight) so
/// that permuting a profile's skills leaves the result bit-identical.
pub fn weighted_mean(
    terms: &[(TextItem, f64)],
    lookup: &BTreeMap<TextItem, EmbeddingVector>,
    dim: usize,
) -> Result<EmbeddingVector, EmbedError> {
    let mut order: Vec<&(TextItem, f64)> = terms.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut acc = vec![0.0; dim];
    let mut weight_sum = 0.0;
    for (item, w) in order {
        let v = lookup.get(item).ok_or(EmbedError::ZeroVector)?;
        if v.dim() != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
        acc.iter_mut().zip(v.as_slice()).for_each(|(a, x)| *a += w * x);
        weight_sum += w;
    }
    if weight_sum <= 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    acc.iter_mut().for_each(|a| *a /= weight_sum);
    EmbeddingVector::normalized(acc)
}

/// Builds student and project vectors from a provider.
pub struct ProfileEmbedder<'a> {
    provider: &'a dyn EmbeddingProvider,
    taxonomy: &'a Taxonomy,
}

impl<'a> ProfileEmbedder<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider, taxonomy: &'a Taxonomy) -> Self {
        Self { provider, taxonomy }
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider
    }

    pub fn embed_student(&self, profile: &StudentProfile) -> Result<EmbeddingVector, EmbedError> {
        let terms = student_terms(profile);
        if terms.is_empty() {
            return Err(EmbedError::EmptyProfile);
        }
        let mut out = self.embed_groups(&[terms])?;
        Ok(out.remove(0))
    }

    pub fn embed_project(&self, spec: &ProjectSpec) -> Result<EmbeddingVector, EmbedError> {
        let terms = project_terms(spec, self.taxonomy);
        if terms.is_empty() {
            return Err(EmbedError::EmptyProject);
        }
        let mut out = self.embed_groups(&[terms])?;
        Ok(out.remove(0))
    }

    /// Embeds every student and project, sending each distinct text to the
    /// provider once.
    pub fn embed_all(
        &self,
        students: &[StudentProfile],
        projects: &[ProjectSpec],
    ) -> Result<BTreeMap<String, EmbeddingVector>, EmbedError> {
        let mut groups = Vec::with_capacity(students.len() + projects.len());
        for s in students {
            let t = student_terms(s);
            if t.is_empty() {
                return Err(EmbedError::EmptyProfile);
            }
            groups.push(t);
        }
        for p in projects {
            let t = project_terms(p, self.taxonomy);
            if t.is_empty() {
                return Err(EmbedError::EmptyProject);
            }
            groups.push(t);
        }
        let vectors = self.embed_groups(&groups)?;
        let ids = students
            .iter()
            .map(|s| s.student_id.clone())
            .chain(projects.iter().map(|p| p.project_id.clone()));
        Ok(ids.zip(vectors).collect())
    }

    pub fn embed_cohort(&self, cohort: &mut crate::domain::Cohort) -> Result<(), EmbedError> {
        cohort.embeddings = self.embed_all(&cohort.students, &cohort.projects)?;
        Ok(())
    }

    fn embed_groups(&self, groups: &[Vec<(TextItem, f64)>]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut unique: Vec<TextItem> = groups.iter().flatten().map(|(t, _)| t.clone()).collect();
        unique.sort();
        unique.dedup();
        let vectors = self.provider.embed_batch(&unique)?;
        if vectors.len() != unique.len() {
            return Err(EmbedError::Provider(format!(
                "expected {} vectors, got {}",
                unique.len(),
                vectors.len()
            )));
        }
        let lookup: BTreeMap<TextItem, EmbeddingVector> = unique.into_iter().zip(vectors).collect();
        let dim = self.provider.dimension();
        groups.iter().map(|g| weighted_mean(g, &lookup, dim)).collect()
    }
}
