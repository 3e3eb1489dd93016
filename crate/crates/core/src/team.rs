//! Greedy complementarity-based team formation.
//!
//! A team starts from the candidate with the best adjusted match score for
//! the project. Each following member maximizes
//! `alpha * cos(candidate, project) - beta * cos(team_avg, candidate)`,
//! where `team_avg` is the renormalized mean of the current members.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ProjectSpec, StudentProfile};
use crate::embedding::{mean_direction, EmbedError, EmbeddingVector};
use crate::index::{cosine_similarity, IndexError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplementarityParams {
    pub alpha: f64,
    pub beta: f64,
    pub min_fit: f64,
    pub min_variance: f64,
}

impl Default for ComplementarityParams {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.4,
            min_fit: 0.6,
            min_variance: 0.002,
        }
    }
}

impl ComplementarityParams {
    pub fn validate(&self) -> Result<(), TeamError> {
        if self.alpha >= 0.0 && self.beta >= 0.0 && self.min_variance >= 0.0 && self.min_fit.is_finite() {
            Ok(())
        } else {
            Err(TeamError::InvalidParams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeamError {
    #[error("candidate pool has {0} students, need at least 2")]
    PoolTooSmall(usize),
    #[error("no embedding for `{0}`")]
    NoEmbeddings(String),
    #[error("target size {target} outside [2, {max}]")]
    InvalidTargetSize { target: usize, max: usize },
    #[error("team diversity needs at least 2 members")]
    TooFewMembers,
    #[error("degenerate team average (zero vector)")]
    ZeroVector,
    #[error("invalid complementarity parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl From<EmbedError> for TeamError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::DimensionMismatch { expected, actual } => {
                TeamError::Index(IndexError::DimensionMismatch { expected, actual })
            }
            _ => TeamError::ZeroVector,
        }
    }
}

/// A student eligible for a team, with their vector and adjusted match
/// score for the project under consideration.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub profile: &'a StudentProfile,
    pub embedding: &'a EmbeddingVector,
    pub score: f64,
}

impl Candidate<'_> {
    pub fn id(&self) -> &str {
        &self.profile.student_id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamSuggestion {
    pub project_id: String,
    /// Members in selection order; the first is the seed.
    pub members: Vec<String>,
    /// Complementarity of each member after the seed at the moment it joined.
    pub step_scores: Vec<f64>,
    pub team_fit: f64,
    pub diversity_variance: f64,
    pub mean_pairwise_distance: f64,
    pub areas_covered: BTreeSet<String>,
    pub meets_thresholds: bool,
}

pub fn complementarity(
    team_avg: &EmbeddingVector,
    candidate: &EmbeddingVector,
    project: &EmbeddingVector,
    params: &ComplementarityParams,
) -> Result<f64, TeamError> {
    let fit = cosine_similarity(candidate, project)?;
    let redundancy = cosine_similarity(team_avg, candidate)?;
    Ok(params.alpha * fit - params.beta * redundancy)
}

/// Mean per-dimension population variance across members, and the mean
/// cosine distance over unordered member pairs.
pub fn team_diversity(members: &[&EmbeddingVector]) -> Result<(f64, f64), TeamError> {
    if members.len() < 2 {
        return Err(TeamError::TooFewMembers);
    }
    let dim = members[0].dim();
    if let Some(bad) = members.iter().find(|m| m.dim() != dim) {
        return Err(TeamError::Index(IndexError::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        }));
    }
    let n = members.len() as f64;
    let mut variance_sum = 0.0;
    for d in 0..dim {
        let mean = members.iter().map(|m| m.as_slice()[d]).sum::<f64>() / n;
        let var = members
            .iter()
            .map(|m| {
                let x = m.as_slice()[d] - mean;
                x * x
            })
            .sum::<f64>()
            / n;
        variance_sum += var;
    }
    let diversity_variance = variance_sum / dim as f64;

    let mut dist_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..members.len() {
        for j in (i + 1)..members.len() {
            dist_sum += 1.0 - cosine_similarity(members[i], members[j])?;
            pairs += 1;
        }
    }
    Ok((diversity_variance, dist_sum / pairs as f64))
}

pub fn areas_covered<'a, I>(members: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a StudentProfile>,
{
    members
        .into_iter()
        .flat_map(|m| m.skills.iter().map(|s| s.area.clone()))
        .collect()
}

/// Computes every metric of a team whose members are given in order.
/// Step scores are replayed: member `i` is scored against the average of
/// members `0..i`.
pub fn describe_team(
    project: &ProjectSpec,
    project_vec: &EmbeddingVector,
    members: &[Candidate<'_>],
    params: &ComplementarityParams,
) -> Result<TeamSuggestion, TeamError> {
    if members.len() < 2 {
        return Err(TeamError::TooFewMembers);
    }
    let mut step_scores = Vec::with_capacity(members.len() - 1);
    for i in 1..members.len() {
        let avg = mean_direction(members[..i].iter().map(|c| c.embedding))?;
        step_scores.push(complementarity(&avg, members[i].embedding, project_vec, params)?);
    }
    let vectors: Vec<&EmbeddingVector> = members.iter().map(|c| c.embedding).collect();
    let team_avg = mean_direction(vectors.iter().copied())?;
    let team_fit = cosine_similarity(&team_avg, project_vec)?;
    let (diversity_variance, mean_pairwise_distance) = team_diversity(&vectors)?;
    let meets_thresholds = team_fit >= params.min_fit && diversity_variance >= params.min_variance;
    Ok(TeamSuggestion {
        project_id: project.project_id.clone(),
        members: members.iter().map(|c| c.id().to_string()).collect(),
        step_scores,
        team_fit,
        diversity_variance,
        mean_pairwise_distance,
        areas_covered: areas_covered(members.iter().map(|c| c.profile)),
        meets_thresholds,
    })
}

/// Greedily grows a team of up to `target_size` from `pool`.
///
/// Ties are broken by ascending student id both when picking the seed and
/// when growing. Stops early if the pool runs out.
pub fn form_team(
    project: &ProjectSpec,
    project_vec: &EmbeddingVector,
    pool: &[Candidate<'_>],
    target_size: usize,
    params: &ComplementarityParams,
) -> Result<TeamSuggestion, TeamError> {
    let max = project.team_size_max as usize;
    if target_size < 2 || target_size > max {
        return Err(TeamError::InvalidTargetSize { target: target_size, max });
    }
    if pool.len() < 2 {
        return Err(TeamError::PoolTooSmall(pool.len()));
    }

    let mut remaining: Vec<Candidate<'_>> = pool.to_vec();
    remaining.sort_by(|a, b| a.id().cmp(b.id()));

    let seed_pos = remaining
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |best, (i, c)| match best {
            Some((_, s)) if c.score <= s => best,
            _ => Some((i, c.score)),
        })
        .map(|(i, _)| i)
        .expect("pool is non-empty");
    let mut members = vec![remaining.remove(seed_pos)];

    while members.len() < target_size && !remaining.is_empty() {
        let avg = mean_direction(members.iter().map(|c| c.embedding))?;
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in remaining.iter().enumerate() {
            let score = complementarity(&avg, c.embedding, project_vec, params)?;
            // Strict improvement keeps the lowest id on ties.
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (pos, _) = best.expect("remaining is non-empty");
        members.push(remaining.remove(pos));
    }

    describe_team(project, project_vec, &members, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DifficultyLevel, ProficiencyLevel, SkillEntry};
    use proptest::prelude::*;

    fn unit(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::normalized(x.to_vec()).unwrap()
    }

    fn profile(id: &str, areas: &[&str]) -> StudentProfile {
        StudentProfile {
            student_id: id.into(),
            skills: areas
                .iter()
                .enumerate()
                .map(|(i, a)| SkillEntry::new(format!("{a}-{i}"), ProficiencyLevel::Intermediate, *a))
                .collect(),
            domain_preferences: Default::default(),
            experience_text: String::new(),
            derived_level: None,
        }
    }

    fn project(max: u32) -> ProjectSpec {
        ProjectSpec {
            project_id: "p".into(),
            title: "t".into(),
            description: String::new(),
            required_skills: vec!["x".into()],
            optional_skills: vec![],
            domain: "ai-ml".into(),
            difficulty: DifficultyLevel::Intermediate,
            team_size_max: max,
            capacity: max,
            applications_count: 0,
            weekly_hours: None,
        }
    }

    #[test]
    fn complementarity_cases() {
        let p = ComplementarityParams::default();
        let v = unit(&[1.0, 0.0, 0.0]);
        assert!((complementarity(&v, &v, &v, &p).unwrap() - 0.2).abs() < 1e-12);

        // cos(c,p)=0.8, cos(t,c)=0.3
        let c = unit(&[1.0, 0.0, 0.0]);
        let proj = unit(&[0.8, 0.6, 0.0]);
        let t = unit(&[0.3, 0.0, (1.0f64 - 0.09).sqrt()]);
        assert!((complementarity(&t, &c, &proj, &p).unwrap() - 0.36).abs() < 1e-12);

        let c = unit(&[0.0, 0.0, 1.0]);
        let t = unit(&[1.0, 0.0, 0.0]);
        let proj = unit(&[0.0, 1.0, 0.0]);
        assert_eq!(complementarity(&t, &c, &proj, &p).unwrap(), 0.0);
    }

    #[test]
    fn diversity_cases() {
        let a = unit(&[1.0, 0.0]);
        let b = unit(&[0.0, 1.0]);
        let (var, dist) = team_diversity(&[&a, &a, &a]).unwrap();
        assert_eq!((var, dist), (0.0, 0.0));
        let (var, dist) = team_diversity(&[&a, &b]).unwrap();
        assert!((dist - 1.0).abs() < 1e-12);
        // Naive loop: per-dimension population variance of {1,0} and {0,1}.
        let mut naive = 0.0;
        for d in 0..2 {
            let xs = [a.as_slice()[d], b.as_slice()[d]];
            let m = (xs[0] + xs[1]) / 2.0;
            naive += ((xs[0] - m).powi(2) + (xs[1] - m).powi(2)) / 2.0;
        }
        assert!((var - naive / 2.0).abs() < 1e-12);
        assert!((var - 0.25).abs() < 1e-12);
        assert_eq!(team_diversity(&[&a]), Err(TeamError::TooFewMembers));
    }

    #[test]
    fn areas_union() {
        let a = profile("a", &["backend"]);
        let b = profile("b", &["data-ml", "design-ux"]);
        assert_eq!(areas_covered([&a]).len(), 1);
        let both = areas_covered([&a, &b]);
        assert_eq!(both.into_iter().collect::<Vec<_>>(), ["backend", "data-ml", "design-ux"]);
    }

    #[test]
    fn pair_pool_is_forced() {
        let (pa, pb) = (profile("a", &["backend"]), profile("b", &["frontend"]));
        let (va, vb) = (unit(&[1.0, 0.2]), unit(&[0.2, 1.0]));
        let pool = [
            Candidate { profile: &pa, embedding: &va, score: 0.3 },
            Candidate { profile: &pb, embedding: &vb, score: 0.9 },
        ];
        let t = form_team(&project(4), &unit(&[1.0, 1.0]), &pool, 2, &Default::default()).unwrap();
        assert_eq!(t.members, ["b", "a"]);
        assert_eq!(t.step_scores.len(), 1);
    }

    #[test]
    fn duplicate_of_seed_loses_to_orthogonal() {
        // Seed s has fit 0.6 with p; dup == s; orth also has fit 0.6 and is
        // exactly orthogonal to s.
        let p = unit(&[1.0, 0.0, 0.0]);
        let s = unit(&[0.6, 0.8, 0.0]);
        let dup = s.clone();
        let orth = EmbeddingVector::from_raw(vec![0.6, -0.45, 0.4375f64.sqrt()]);
        assert!((orth.norm() - 1.0).abs() < 1e-12);
        assert!(s.dot(&orth).abs() < 1e-12);
        // By hand: dup -> 0.6*0.6 - 0.4*1 = -0.04; orth -> 0.36 - 0 = 0.36.
        let (ps, pd, po) = (profile("s", &["a"]), profile("d", &["a"]), profile("o", &["b"]));
        let pool = [
            Candidate { profile: &ps, embedding: &s, score: 0.9 },
            Candidate { profile: &pd, embedding: &dup, score: 0.8 },
            Candidate { profile: &po, embedding: &orth, score: 0.8 },
        ];
        let t = form_team(&project(3), &p, &pool, 2, &Default::default()).unwrap();
        assert_eq!(t.members, ["s", "o"]);
        assert!((t.step_scores[0] - 0.36).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let pa = profile("a", &["backend"]);
        let va = unit(&[1.0]);
        let one = [Candidate { profile: &pa, embedding: &va, score: 0.1 }];
        assert_eq!(
            form_team(&project(3), &va, &one, 2, &Default::default()),
            Err(TeamError::PoolTooSmall(1))
        );
        assert_eq!(
            form_team(&project(3), &va, &one, 4, &Default::default()),
            Err(TeamError::InvalidTargetSize { target: 4, max: 3 })
        );
    }

    #[test]
    fn seed_ties_break_by_id() {
        let (pa, pb, pc) = (profile("c", &["x"]), profile("a", &["x"]), profile("b", &["x"]));
        let v = [unit(&[1.0, 0.0]), unit(&[0.0, 1.0]), unit(&[1.0, 1.0])];
        let pool = [
            Candidate { profile: &pa, embedding: &v[0], score: 0.5 },
            Candidate { profile: &pb, embedding: &v[1], score: 0.5 },
            Candidate { profile: &pc, embedding: &v[2], score: 0.5 },
        ];
        let t = form_team(&project(3), &unit(&[1.0, 1.0]), &pool, 2, &Default::default()).unwrap();
        assert_eq!(t.members[0], "a");
    }

    proptest! {
        #[test]
        fn diversity_bounds(raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 2..6)) {
            let vs: Vec<EmbeddingVector> = raw.into_iter().filter_map(|r| EmbeddingVector::normalized(r).ok()).collect();
            prop_assume!(vs.len() >= 2);
            let refs: Vec<&EmbeddingVector> = vs.iter().collect();
            let (var, dist) = team_diversity(&refs).unwrap();
            prop_assert!(var >= 0.0);
            prop_assert!((0.0..=2.0).contains(&dist));
            let identical = vs.iter().all(|v| v == &vs[0]);
            prop_assert_eq!(var == 0.0, identical);
        }
    }
}
