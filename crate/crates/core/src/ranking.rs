//! Hybrid recommendation scoring.
//!
//! The raw cosine similarity is clamped to `[0, 1]` and then multiplied by
//! three adjustment factors:
//!
//! * a quadratic difficulty penalty `min(gamma * (level_p - level_s)^2, cap)`,
//!   applied as `1 - penalty`;
//! * a domain boost when the project's domain is one the student prefers;
//! * a demand factor `exp(-lambda * r)` for subscription ratio `r`, with
//!   projects at or over capacity excluded outright.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Cohort, DifficultyLevel, ProjectSpec, StudentProfile};
use crate::index::{Backend, IndexError, VectorIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingParams {
    pub gamma: f64,
    pub penalty_cap: f64,
    pub domain_boost: f64,
    pub lambda: f64,
    pub k_default: usize,
    pub min_display_score: f64,
}

impl Default for RankingParams {
    fn default() -> Self {
        Self {
            gamma: 0.075,
            penalty_cap: 0.30,
            domain_boost: 1.15,
            lambda: 0.5,
            k_default: 10,
            min_display_score: 0.0,
        }
    }
}

impl RankingParams {
    pub fn validate(&self) -> Result<(), RankingError> {
        let ok = self.gamma >= 0.0
            && (0.0..1.0).contains(&self.penalty_cap)
            && self.domain_boost >= 1.0
            && self.lambda >= 0.0
            && self.k_default >= 1
            && self.min_display_score.is_finite();
        if ok {
            Ok(())
        } else {
            Err(RankingError::InvalidParams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("project `{0}` is at capacity")]
    ProjectFull(String),
    #[error("unknown student `{0}`")]
    StudentUnknown(String),
    #[error("cohort has no projects")]
    EmptyCohort,
    #[error("no embedding for `{0}`")]
    MissingEmbedding(String),
    #[error("invalid ranking parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// One scored (student, project) pair with every factor that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecommendation {
    pub student_id: String,
    pub project_id: String,
    pub raw_similarity: f64,
    pub clamped_similarity: f64,
    pub difficulty_penalty: f64,
    pub domain_boost_applied: bool,
    /// The multiplier actually applied for the domain (1.0 when not matched).
    pub boost_factor: f64,
    pub demand_factor: f64,
    pub final_score: f64,
    pub matched_required_skills: Vec<String>,
    pub student_level: DifficultyLevel,
    pub project_difficulty: DifficultyLevel,
    pub rank: u32,
}

impl ScoredRecommendation {
    /// Match percentage as shown on a recommendation card.
    pub fn match_percent(&self) -> u32 {
        (self.final_score * 100.0).round().max(0.0) as u32
    }
}

pub fn difficulty_penalty(level_s: DifficultyLevel, level_p: DifficultyLevel, params: &RankingParams) -> f64 {
    let gap = f64::from(level_p.gap(level_s));
    (params.gamma * gap * gap).min(params.penalty_cap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DemandFactor {
    Active(f64),
    /// Subscription ratio is at least 1: the project is full.
    Excluded,
}

pub fn demand_factor(applications: u32, capacity: u32, params: &RankingParams) -> DemandFactor {
    let r = f64::from(applications) / f64::from(capacity.max(1));
    if r >= 1.0 {
        DemandFactor::Excluded
    } else {
        DemandFactor::Active((-params.lambda * r).exp())
    }
}

pub fn score_pair(
    student: &StudentProfile,
    project: &ProjectSpec,
    raw_similarity: f64,
    params: &RankingParams,
) -> Result<ScoredRecommendation, RankingError> {
    let demand = match demand_factor(project.applications_count, project.capacity, params) {
        DemandFactor::Active(f) => f,
        DemandFactor::Excluded => return Err(RankingError::ProjectFull(project.project_id.clone())),
    };
    let clamped = raw_similarity.clamp(0.0, 1.0);
    let student_level = student.level();
    let penalty = difficulty_penalty(student_level, project.difficulty, params);
    let boosted = student.domain_preferences.contains(&project.domain);
    let boost_factor = if boosted { params.domain_boost } else { 1.0 };
    let final_score = clamped * (1.0 - penalty) * boost_factor * demand;

    let matched_required_skills = project
        .required_skills
        .iter()
        .filter(|req| student.skill_names().any(|s| s == req.as_str()))
        .cloned()
        .collect();

    Ok(ScoredRecommendation {
        student_id: student.student_id.clone(),
        project_id: project.project_id.clone(),
        raw_similarity,
        clamped_similarity: clamped,
        difficulty_penalty: penalty,
        domain_boost_applied: boosted,
        boost_factor,
        demand_factor: demand,
        final_score,
        matched_required_skills,
        student_level,
        project_difficulty: project.difficulty,
        rank: 1,
    })
}

/// Final score descending, then project id ascending.
pub fn recommendation_order(a: &ScoredRecommendation, b: &ScoredRecommendation) -> std::cmp::Ordering {
    b.final_score
        .total_cmp(&a.final_score)
        .then_with(|| a.project_id.cmp(&b.project_id))
}

/// Builds the project index for a cohort.
pub fn project_index(cohort: &Cohort, backend: Backend) -> Result<VectorIndex, RankingError> {
    let mut items = Vec::with_capacity(cohort.projects.len());
    for p in &cohort.projects {
        let v = cohort
            .embedding(&p.project_id)
            .ok_or_else(|| RankingError::MissingEmbedding(p.project_id.clone()))?;
        items.push((p.project_id.clone(), v.clone()));
    }
    Ok(VectorIndex::build(backend, items)?)
}

/// Top-`k` projects for one student by adjusted score. Full projects and
/// results below `min_display_score` are dropped.
///
/// With the brute-force index every project is scored. With the
/// approximate index only a similarity shortlist (four times `k`, at least
/// 32) is rescored.
pub fn recommend(
    student_id: &str,
    cohort: &Cohort,
    projects: &VectorIndex,
    params: &RankingParams,
    k: usize,
) -> Result<Vec<ScoredRecommendation>, RankingError> {
    let student = cohort
        .student(student_id)
        .ok_or_else(|| RankingError::StudentUnknown(student_id.to_string()))?;
    let by_id: BTreeMap<&str, &ProjectSpec> =
        cohort.projects.iter().map(|p| (p.project_id.as_str(), p)).collect();
    recommend_for(student, cohort, &by_id, projects, params, k)
}

fn recommend_for(
    student: &StudentProfile,
    cohort: &Cohort,
    by_id: &BTreeMap<&str, &ProjectSpec>,
    projects: &VectorIndex,
    params: &RankingParams,
    k: usize,
) -> Result<Vec<ScoredRecommendation>, RankingError> {
    if cohort.projects.is_empty() || projects.is_empty() {
        return Err(RankingError::EmptyCohort);
    }
    if k == 0 {
        return Err(RankingError::Index(IndexError::InvalidK));
    }
    let query = cohort
        .embedding(&student.student_id)
        .ok_or_else(|| RankingError::MissingEmbedding(student.student_id.clone()))?;
    let shortlist = match projects.backend() {
        Backend::BruteForce => projects.len(),
        Backend::Approximate(_) => (k * 4).max(32).min(projects.len()),
    };
    let mut scored = Vec::new();
    for (pid, sim) in projects.top_k(query, shortlist)? {
        let Some(project) = by_id.get(pid.as_str()) else {
            continue;
        };
        match score_pair(student, project, sim, params) {
            Ok(rec) if rec.final_score >= params.min_display_score => scored.push(rec),
            Ok(_) | Err(RankingError::ProjectFull(_)) => {}
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(recommendation_order);
    scored.truncate(k);
    for (i, rec) in scored.iter_mut().enumerate() {
        rec.rank = i as u32 + 1;
    }
    Ok(scored)
}

/// Recommendations for every student, in student order.
pub fn recommend_all(
    cohort: &Cohort,
    projects: &VectorIndex,
    params: &RankingParams,
    k: usize,
) -> Result<Vec<Vec<ScoredRecommendation>>, RankingError> {
    let by_id: BTreeMap<&str, &ProjectSpec> =
        cohort.projects.iter().map(|p| (p.project_id.as_str(), p)).collect();
    cohort
        .students
        .iter()
        .map(|s| recommend_for(s, cohort, &by_id, projects, params, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ProficiencyLevel, SkillEntry};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    const TOL: f64 = 1e-9;

    fn student(level: ProficiencyLevel, prefs: &[&str]) -> StudentProfile {
        let mut s = StudentProfile {
            student_id: "s1".into(),
            skills: vec![
                SkillEntry::new("python", level, "backend"),
                SkillEntry::new("sql", level, "backend"),
            ],
            domain_preferences: prefs.iter().map(|p| p.to_string()).collect::<BTreeSet<_>>(),
            experience_text: String::new(),
            derived_level: None,
        };
        s.derived_level = Some(s.level());
        s
    }

    fn project(difficulty: DifficultyLevel, domain: &str, apps: u32, cap: u32) -> ProjectSpec {
        ProjectSpec {
            project_id: "p1".into(),
            title: "t".into(),
            description: String::new(),
            required_skills: vec!["python".into(), "react".into()],
            optional_skills: vec![],
            domain: domain.into(),
            difficulty,
            team_size_max: cap,
            capacity: cap,
            applications_count: apps,
            weekly_hours: None,
        }
    }

    #[test]
    fn penalty_cases() {
        let p = RankingParams::default();
        use DifficultyLevel::*;
        assert_eq!(difficulty_penalty(Intermediate, Intermediate, &p), 0.0);
        assert!((difficulty_penalty(Beginner, Intermediate, &p) - 0.075).abs() < TOL);
        assert!((difficulty_penalty(Advanced, Intermediate, &p) - 0.075).abs() < TOL);
        assert!((difficulty_penalty(Beginner, Advanced, &p) - 0.30).abs() < TOL);
        let steep = RankingParams { gamma: 1.0, ..p };
        assert!((difficulty_penalty(Beginner, Advanced, &steep) - 0.30).abs() < TOL);
    }

    #[test]
    fn demand_cases() {
        let p = RankingParams::default();
        assert_eq!(demand_factor(0, 4, &p), DemandFactor::Active(1.0));
        match demand_factor(2, 4, &p) {
            DemandFactor::Active(f) => assert!((f - (-0.25f64).exp()).abs() < TOL && (f - 0.77880).abs() < 1e-5),
            DemandFactor::Excluded => panic!("not full"),
        }
        assert_eq!(demand_factor(4, 4, &p), DemandFactor::Excluded);
        assert_eq!(demand_factor(5, 4, &p), DemandFactor::Excluded);
    }

    #[test]
    fn composed_scores() {
        let p = RankingParams::default();
        // intermediate student on intermediate project, domain matched
        let s = student(ProficiencyLevel::Intermediate, &["ai-ml"]);
        let r = score_pair(&s, &project(DifficultyLevel::Intermediate, "ai-ml", 0, 4), 0.8, &p).unwrap();
        assert!((r.final_score - 0.92).abs() < TOL);
        assert!(r.domain_boost_applied);
        assert_eq!(r.matched_required_skills, vec!["python".to_string()]);

        let s = student(ProficiencyLevel::Beginner, &[]);
        let r = score_pair(&s, &project(DifficultyLevel::Advanced, "ai-ml", 0, 4), 0.8, &p).unwrap();
        assert!((r.final_score - 0.56).abs() < TOL);

        let r = score_pair(&s, &project(DifficultyLevel::Beginner, "ai-ml", 0, 4), -0.1, &p).unwrap();
        assert_eq!(r.clamped_similarity, 0.0);
        assert_eq!(r.final_score, 0.0);
    }

    #[test]
    fn full_project_is_error() {
        let p = RankingParams::default();
        let s = student(ProficiencyLevel::Beginner, &[]);
        assert_eq!(
            score_pair(&s, &project(DifficultyLevel::Beginner, "x", 3, 3), 0.5, &p),
            Err(RankingError::ProjectFull("p1".into()))
        );
    }

    #[test]
    fn params_validation() {
        assert!(RankingParams::default().validate().is_ok());
        assert!(RankingParams { penalty_cap: 1.0, ..Default::default() }.validate().is_err());
        assert!(RankingParams { domain_boost: 0.9, ..Default::default() }.validate().is_err());
        assert!(RankingParams { lambda: -1.0, ..Default::default() }.validate().is_err());
    }

    fn arb_level() -> impl Strategy<Value = DifficultyLevel> {
        (0u8..3).prop_map(|c| DifficultyLevel::from_code(c).unwrap())
    }

    proptest! {
        #[test]
        fn penalty_within_bounds(a in arb_level(), b in arb_level(), gamma in 0.0f64..5.0, cap in 0.0f64..0.99) {
            let p = RankingParams { gamma, penalty_cap: cap, ..Default::default() };
            let pen = difficulty_penalty(a, b, &p);
            prop_assert!((0.0..=cap).contains(&pen));
        }

        #[test]
        fn final_score_matches_product(raw in -1.0f64..1.0, apps in 0u32..5, lvl in 1u8..=4, d in arb_level(), pref in any::<bool>()) {
            let p = RankingParams::default();
            let prefs: &[&str] = if pref { &["ai-ml"] } else { &[] };
            let s = student(ProficiencyLevel::from_code(lvl).unwrap(), prefs);
            let proj = project(d, "ai-ml", apps, 5);
            let r = score_pair(&s, &proj, raw, &p).unwrap();
            let expect = r.clamped_similarity * (1.0 - r.difficulty_penalty)
                * if r.domain_boost_applied { p.domain_boost } else { 1.0 } * r.demand_factor;
            prop_assert!((r.final_score - expect).abs() < TOL);
            prop_assert!(r.matched_required_skills.iter().all(|m| proj.required_skills.contains(m)));
        }

        #[test]
        fn monotone_in_similarity(a in -1.0f64..1.0, b in -1.0f64..1.0, apps in 0u32..4, d in arb_level()) {
            let p = RankingParams::default();
            let s = student(ProficiencyLevel::Advanced, &["ai-ml"]);
            let proj = project(d, "ai-ml", apps, 4);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let slo = score_pair(&s, &proj, lo, &p).unwrap().final_score;
            let shi = score_pair(&s, &proj, hi, &p).unwrap().final_score;
            prop_assert!(shi >= slo);
        }

        #[test]
        fn monotone_in_demand(raw in 0.0f64..1.0, a in 0u32..6, b in 0u32..6) {
            let p = RankingParams::default();
            let s = student(ProficiencyLevel::Advanced, &[]);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let at = |apps| score_pair(&s, &project(DifficultyLevel::Advanced, "x", apps, 6), raw, &p)
                .map(|r| r.final_score).unwrap_or(0.0);
            prop_assert!(at(hi) <= at(lo));
        }
    }
}
