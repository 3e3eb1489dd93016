//! Semantic project matching and complementarity-based team formation.
//!
//! Students and projects are embedded into one vector space, projects are
//! ranked per student with difficulty, domain and demand adjustments, and
//! teams are grown greedily to balance project fit against redundancy.

pub mod config;
pub mod domain;
pub mod embedding;
pub mod index;
pub mod ranking;
pub mod sim;
pub mod team;

pub use config::{ConfigError, EngineConfig, IndexConfig, IndexKind, ProviderConfig, ProviderKind};
pub use domain::{
    derive_student_level, validate_project, validate_student, Cohort, DifficultyLevel, ProficiencyLevel,
    ProjectSpec, SkillEntry, StudentProfile, Taxonomy, ValidationError,
};
pub use embedding::{EmbedError, EmbeddingProvider, EmbeddingVector, OfflineEmbedder, ProfileEmbedder};
pub use index::{cosine_similarity, Backend, HnswParams, IndexError, VectorIndex};
pub use ranking::{recommend, score_pair, RankingError, RankingParams, ScoredRecommendation};
pub use team::{form_team, Candidate, ComplementarityParams, TeamError, TeamSuggestion};
pub use sim::{
    allocate_random, allocate_teamup, evaluate, generate_cohort, run_experiment, AllocationResult, ExperimentConfig,
    ExperimentReport, GeneratorConfig, Policy, PolicyMetrics, SimError,
};
