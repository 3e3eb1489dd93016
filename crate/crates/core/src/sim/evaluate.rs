use serde::{Deserialize, Serialize};

use super::{AllocationResult, Policy, SimError};
use crate::domain::Cohort;
use crate::embedding::EmbeddingVector;
use crate::index::cosine_similarity;
use crate::team::{areas_covered, team_diversity};

/// Outcome metrics of one allocation. Percentages are in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub policy: Policy,
    pub mean_match_similarity: f64,
    pub within_one_level_pct: f64,
    pub mean_pairwise_distance: f64,
    pub teams_covering_3plus_areas_pct: f64,
    pub students_assigned: usize,
    pub teams_formed: usize,
}

/// Scores an allocation. Every sum runs left to right over ascending ids.
///
/// Pairwise distance averages over teams with at least two members; area
/// coverage counts every non-empty team.
pub fn evaluate(cohort: &Cohort, result: &AllocationResult) -> Result<PolicyMetrics, SimError> {
    let missing = cohort
        .students
        .iter()
        .filter(|s| !result.assignments.contains_key(&s.student_id))
        .count();
    if missing > 0 {
        return Err(SimError::UnassignedStudents(missing));
    }
    let vec_of = |id: &str| -> Result<&EmbeddingVector, SimError> {
        cohort.embedding(id).ok_or_else(|| SimError::NotEmbedded(id.to_string()))
    };

    let mut sim_sum = 0.0;
    let mut within = 0usize;
    // assignments is a BTreeMap, so this walks student ids in order.
    for (sid, pid) in &result.assignments {
        let student = cohort.student(sid).ok_or_else(|| SimError::UnknownId(sid.clone()))?;
        let project = cohort.project(pid).ok_or_else(|| SimError::UnknownId(pid.clone()))?;
        sim_sum += cosine_similarity(vec_of(sid)?, vec_of(pid)?)?;
        if project.difficulty.gap(student.level()).abs() <= 1 {
            within += 1;
        }
    }
    let n = result.assignments.len();

    let mut dist_sum = 0.0;
    let mut multi = 0usize;
    let mut covering = 0usize;
    let mut teams = 0usize;
    for members in result.teams.values() {
        if members.is_empty() {
            continue;
        }
        teams += 1;
        let profiles = members
            .iter()
            .map(|m| cohort.student(m).ok_or_else(|| SimError::UnknownId(m.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        if areas_covered(profiles.iter().copied()).len() >= 3 {
            covering += 1;
        }
        if members.len() >= 2 {
            let vecs = members.iter().map(|m| vec_of(m)).collect::<Result<Vec<_>, _>>()?;
            dist_sum += team_diversity(&vecs)?.1;
            multi += 1;
        }
    }

    let ratio = |num: f64, den: usize| if den == 0 { 0.0 } else { num / den as f64 };
    Ok(PolicyMetrics {
        policy: result.policy,
        mean_match_similarity: ratio(sim_sum, n),
        within_one_level_pct: 100.0 * ratio(within as f64, n),
        mean_pairwise_distance: ratio(dist_sum, multi),
        teams_covering_3plus_areas_pct: 100.0 * ratio(covering as f64, teams),
        students_assigned: n,
        teams_formed: teams,
    })
}
