//! Shared domain types: students, projects, ordinal scales and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;

/// Self-assessed skill proficiency. The ordinal code doubles as the
/// aggregation weight for the student embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProficiencyLevel {
    Beginner,
    Intermediate,
    Advanced,
    Expert,
}

impl ProficiencyLevel {
    pub const ALL: [ProficiencyLevel; 4] = [
        ProficiencyLevel::Beginner,
        ProficiencyLevel::Intermediate,
        ProficiencyLevel::Advanced,
        ProficiencyLevel::Expert,
    ];

    pub fn code(self) -> u8 {
        match self {
            ProficiencyLevel::Beginner => 1,
            ProficiencyLevel::Intermediate => 2,
            ProficiencyLevel::Advanced => 3,
            ProficiencyLevel::Expert => 4,
        }
    }

    pub fn weight(self) -> f64 {
        f64::from(self.code())
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.code() == code)
    }
}

/// Project difficulty, also the scale student experience is mapped onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyLevel {
    Beginner,
    Intermediate,
    Advanced,
}

impl DifficultyLevel {
    pub const ALL: [DifficultyLevel; 3] = [
        DifficultyLevel::Beginner,
        DifficultyLevel::Intermediate,
        DifficultyLevel::Advanced,
    ];

    pub fn code(self) -> u8 {
        match self {
            DifficultyLevel::Beginner => 0,
            DifficultyLevel::Intermediate => 1,
            DifficultyLevel::Advanced => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.code() == code)
    }

    /// Signed gap `self - other` on the shared scale.
    pub fn gap(self, other: DifficultyLevel) -> i32 {
        i32::from(self.code()) - i32::from(other.code())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DifficultyLevel::Beginner => "beginner",
            DifficultyLevel::Intermediate => "intermediate",
            DifficultyLevel::Advanced => "advanced",
        }
    }
}

impl fmt::Display for DifficultyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillEntry {
    pub skill_name: String,
    pub proficiency: ProficiencyLevel,
    pub area: String,
}

impl SkillEntry {
    pub fn new(name: impl Into<String>, proficiency: ProficiencyLevel, area: impl Into<String>) -> Self {
        Self {
            skill_name: name.into(),
            proficiency,
            area: area.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub student_id: String,
    pub skills: Vec<SkillEntry>,
    #[serde(default)]
    pub domain_preferences: BTreeSet<String>,
    #[serde(default)]
    pub experience_text: String,
    /// Filled in by [`validate_student`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_level: Option<DifficultyLevel>,
}

impl StudentProfile {
    /// The cached level if present, otherwise computed on the fly.
    pub fn level(&self) -> DifficultyLevel {
        self.derived_level.unwrap_or_else(|| derive_student_level(self))
    }

    pub fn skill_names(&self) -> impl Iterator<Item = &str> {
        self.skills.iter().map(|s| s.skill_name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSpec {
    pub project_id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub required_skills: Vec<String>,
    #[serde(default)]
    pub optional_skills: Vec<String>,
    pub domain: String,
    pub difficulty: DifficultyLevel,
    pub team_size_max: u32,
    pub capacity: u32,
    #[serde(default)]
    pub applications_count: u32,
    /// Estimated weekly time commitment in hours, when the supervisor gave one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weekly_hours: Option<u32>,
}

impl ProjectSpec {
    /// Subscription ratio `applications / capacity`.
    pub fn subscription_ratio(&self) -> f64 {
        f64::from(self.applications_count) / f64::from(self.capacity.max(1))
    }
}

/// A set of students and projects plus the embedding of every member.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub students: Vec<StudentProfile>,
    pub projects: Vec<ProjectSpec>,
    #[serde(default)]
    pub embeddings: BTreeMap<String, EmbeddingVector>,
}

impl Cohort {
    pub fn new(students: Vec<StudentProfile>, projects: Vec<ProjectSpec>) -> Self {
        Self {
            students,
            projects,
            embeddings: BTreeMap::new(),
        }
    }

    pub fn student(&self, id: &str) -> Option<&StudentProfile> {
        self.students.iter().find(|s| s.student_id == id)
    }

    pub fn project(&self, id: &str) -> Option<&ProjectSpec> {
        self.projects.iter().find(|p| p.project_id == id)
    }

    pub fn embedding(&self, id: &str) -> Option<&EmbeddingVector> {
        self.embeddings.get(id)
    }

    /// True when every student and project has an embedding.
    pub fn is_embedded(&self) -> bool {
        self.students.iter().all(|s| self.embeddings.contains_key(&s.student_id))
            && self.projects.iter().all(|p| self.embeddings.contains_key(&p.project_id))
    }

    pub fn total_capacity(&self) -> u64 {
        self.projects.iter().map(|p| u64::from(p.capacity.min(p.team_size_max))).sum()
    }

    /// Checks id uniqueness across students and projects, which share the
    /// embedding map.
    pub fn check_ids(&self) -> Result<(), ValidationError> {
        let mut seen = BTreeSet::new();
        let ids = self
            .students
            .iter()
            .map(|s| &s.student_id)
            .chain(self.projects.iter().map(|p| &p.project_id));
        for id in ids {
            if !seen.insert(id.as_str()) {
                return Err(ValidationError::DuplicateId(id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail")]
pub enum ValidationError {
    #[error("id must not be empty")]
    EmptyId,
    #[error("profile has no skills")]
    EmptySkills,
    #[error("skill name must not be empty")]
    EmptySkillName,
    #[error("duplicate skill `{0}`")]
    DuplicateSkill(String),
    #[error("unknown technical area `{0}`")]
    UnknownArea(String),
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("project has no required skills")]
    EmptyRequiredSkills,
    #[error("skill `{0}` is both required and optional")]
    OverlappingSkill(String),
    #[error("title must not be empty")]
    EmptyTitle,
    #[error("capacity must be at least 1")]
    ZeroCapacity,
    #[error("team_size_max must be at least 1")]
    ZeroTeamSize,
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
}

/// The closed vocabularies: technical areas (each owning a slice of the
/// skill pool) and project domains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub areas: BTreeMap<String, Vec<String>>,
    pub domains: Vec<String>,
}

const DEFAULT_TAXONOMY: &str = include_str!("../data/taxonomy.toml");

impl Default for Taxonomy {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }
}

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("skill `{0}` appears in more than one area")]
    SkillInTwoAreas(String),
    #[error("taxonomy needs at least one area and one domain")]
    Empty,
}

impl Taxonomy {
    pub fn from_toml(text: &str) -> Result<Self, TaxonomyError> {
        let raw: Taxonomy = toml::from_str(text)?;
        raw.normalized()
    }

    fn normalized(self) -> Result<Self, TaxonomyError> {
        let mut seen = BTreeSet::new();
        let mut areas = BTreeMap::new();
        for (area, skills) in self.areas {
            let skills: Vec<String> = skills.iter().map(|s| normalize_token(s)).collect();
            for s in &skills {
                if !seen.insert(s.clone()) {
                    return Err(TaxonomyError::SkillInTwoAreas(s.clone()));
                }
            }
            areas.insert(normalize_token(&area), skills);
        }
        let domains: Vec<String> = self.domains.iter().map(|d| normalize_token(d)).collect();
        if areas.is_empty() || domains.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        Ok(Self { areas, domains })
    }

    pub fn area_names(&self) -> impl Iterator<Item = &str> {
        self.areas.keys().map(String::as_str)
    }

    pub fn has_area(&self, area: &str) -> bool {
        self.areas.contains_key(area)
    }

    pub fn has_domain(&self, domain: &str) -> bool {
        self.domains.iter().any(|d| d == domain)
    }

    pub fn area_of(&self, skill: &str) -> Option<&str> {
        self.areas
            .iter()
            .find(|(_, skills)| skills.iter().any(|s| s == skill))
            .map(|(a, _)| a.as_str())
    }

    pub fn skill_pool_size(&self) -> usize {
        self.areas.values().map(Vec::len).sum()
    }

    /// All skills with their area, area-major in sorted area order.
    pub fn skills(&self) -> impl Iterator<Item = (&str, &str)> {
        self.areas
            .iter()
            .flat_map(|(a, skills)| skills.iter().map(move |s| (s.as_str(), a.as_str())))
    }
}

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_token(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalizes a student profile and reports every violation found.
///
/// On success the returned profile has normalized skill, area and domain
/// tokens and a populated `derived_level`.
pub fn validate_student(
    profile: &StudentProfile,
    taxonomy: &Taxonomy,
) -> Result<StudentProfile, Vec<ValidationError>> {
    let mut errors = Vec::new();
    let student_id = profile.student_id.trim().to_string();
    if student_id.is_empty() {
        errors.push(ValidationError::EmptyId);
    }
    if profile.skills.is_empty() {
        errors.push(ValidationError::EmptySkills);
    }

    let mut names = BTreeSet::new();
    let mut skills = Vec::with_capacity(profile.skills.len());
    for entry in &profile.skills {
        let name = normalize_token(&entry.skill_name);
        let area = normalize_token(&entry.area);
        if name.is_empty() {
            errors.push(ValidationError::EmptySkillName);
            continue;
        }
        if !names.insert(name.clone()) {
            errors.push(ValidationError::DuplicateSkill(name.clone()));
        }
        if !taxonomy.has_area(&area) {
            errors.push(ValidationError::UnknownArea(area.clone()));
        }
        skills.push(SkillEntry {
            skill_name: name,
            proficiency: entry.proficiency,
            area,
        });
    }

    let mut domain_preferences = BTreeSet::new();
    for d in &profile.domain_preferences {
        let d = normalize_token(d);
        if !taxonomy.has_domain(&d) {
            errors.push(ValidationError::UnknownDomain(d.clone()));
        }
        domain_preferences.insert(d);
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    let mut out = StudentProfile {
        student_id,
        skills,
        domain_preferences,
        experience_text: profile.experience_text.trim().to_string(),
        derived_level: None,
    };
    out.derived_level = Some(derive_student_level(&out));
    Ok(out)
}

pub fn validate_project(
    spec: &ProjectSpec,
    taxonomy: &Taxonomy,
) -> Result<ProjectSpec, Vec<ValidationError>> {
    let mut errors = Vec::new();
    let project_id = spec.project_id.trim().to_string();
    if project_id.is_empty() {
        errors.push(ValidationError::EmptyId);
    }
    if spec.title.trim().is_empty() {
        errors.push(ValidationError::EmptyTitle);
    }
    if spec.required_skills.is_empty() {
        errors.push(ValidationError::EmptyRequiredSkills);
    }

    let mut seen = BTreeSet::new();
    let mut normalize_list = |list: &[String], errors: &mut Vec<ValidationError>| {
        let mut out = Vec::with_capacity(list.len());
        for raw in list {
            let s = normalize_token(raw);
            if s.is_empty() {
                errors.push(ValidationError::EmptySkillName);
                continue;
            }
            if !seen.insert(s.clone()) {
                errors.push(ValidationError::DuplicateSkill(s.clone()));
            }
            out.push(s);
        }
        out
    };
    let required = normalize_list(&spec.required_skills, &mut errors);
    let optional = normalize_list(&spec.optional_skills, &mut errors);
    // Overlaps surface as duplicates above; report them with the clearer variant.
    for s in &optional {
        if required.contains(s) {
            errors.retain(|e| e != &ValidationError::DuplicateSkill(s.clone()));
            errors.push(ValidationError::OverlappingSkill(s.clone()));
        }
    }

    let domain = normalize_token(&spec.domain);
    if !taxonomy.has_domain(&domain) {
        errors.push(ValidationError::UnknownDomain(domain.clone()));
    }
    if spec.capacity == 0 {
        errors.push(ValidationError::ZeroCapacity);
    }
    if spec.team_size_max == 0 {
        errors.push(ValidationError::ZeroTeamSize);
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(ProjectSpec {
        project_id,
        title: spec.title.trim().to_string(),
        description: spec.description.trim().to_string(),
        required_skills: required,
        optional_skills: optional,
        domain,
        difficulty: spec.difficulty,
        team_size_max: spec.team_size_max,
        capacity: spec.capacity,
        applications_count: spec.applications_count,
        weekly_hours: spec.weekly_hours,
    })
}

/// Maps mean proficiency onto the project difficulty scale:
/// below 2 is beginner, below 3 intermediate, otherwise advanced.
pub fn derive_student_level(profile: &StudentProfile) -> DifficultyLevel {
    if profile.skills.is_empty() {
        return DifficultyLevel::Beginner;
    }
    let total: u32 = profile.skills.iter().map(|s| u32::from(s.proficiency.code())).sum();
    let n = profile.skills.len() as u32;
    // Integer comparisons avoid rounding at the 2.0 / 3.0 boundaries.
    if total < 2 * n {
        DifficultyLevel::Beginner
    } else if total < 3 * n {
        DifficultyLevel::Intermediate
    } else {
        DifficultyLevel::Advanced
    }
}
