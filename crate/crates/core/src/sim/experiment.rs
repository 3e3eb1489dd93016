use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    allocate_random, allocate_teamup, evaluate, generate_cohort, percentile, AllocationResult, ExperimentReport,
    ExperimentTimings, GeneratorConfig, Policy, PolicyReport, PolicyTiming, SimError,
};
use crate::domain::Cohort;
use crate::embedding::{EmbeddingProvider, ProfileEmbedder};
use crate::index::Backend;
use crate::ranking::{project_index, recommend, recommend_all, RankingParams};
use crate::team::ComplementarityParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    pub ranking: RankingParams,
    pub complementarity: ComplementarityParams,
    /// Seed for the random arm; the generator seed when absent.
    pub random_seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub cohort: Cohort,
    pub allocations: Vec<AllocationResult>,
    pub report: ExperimentReport,
    pub timings: ExperimentTimings,
}

impl ExperimentRun {
    pub fn allocation(&self, policy: Policy) -> Option<&AllocationResult> {
        self.allocations.iter().find(|a| a.policy == policy)
    }
}

/// Generates a cohort, embeds it, allocates it under both policies and
/// scores both allocations.
pub fn run_experiment(config: &ExperimentConfig, provider: &dyn EmbeddingProvider) -> Result<ExperimentRun, SimError> {
    let start = Instant::now();
    let mut cohort = generate_cohort(&config.generator)?;

    let texts_before = provider.texts_embedded();
    let t = Instant::now();
    ProfileEmbedder::new(provider, &config.generator.taxonomy).embed_cohort(&mut cohort)?;
    let embedding_seconds = t.elapsed().as_secs_f64();
    let texts_embedded = provider.texts_embedded() - texts_before;
    let cost = texts_embedded as f64 * provider.cost_per_text();

    let index = project_index(&cohort, Backend::BruteForce)?;
    let k = config.ranking.k_default;
    let mut latencies = Vec::with_capacity(cohort.students.len());
    for s in &cohort.students {
        let t = Instant::now();
        recommend(&s.student_id, &cohort, &index, &config.ranking, k)?;
        latencies.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let t = Instant::now();
    recommend_all(&cohort, &index, &config.ranking, k)?;
    let batch_recommend_seconds = t.elapsed().as_secs_f64();

    let mut allocations = Vec::new();
    let mut reports = Vec::new();
    let mut timing = Vec::new();
    for policy in [Policy::Teamup, Policy::Random] {
        let t = Instant::now();
        let alloc = match policy {
            Policy::Random => allocate_random(&cohort, config.random_seed.unwrap_or(config.generator.seed))?,
            Policy::Teamup => allocate_teamup(&cohort, &config.ranking, &config.complementarity)?,
        };
        let runtime = t.elapsed().as_secs_f64();
        let metrics = evaluate(&cohort, &alloc)?;
        let queries = policy == Policy::Teamup;
        reports.push(PolicyReport {
            metrics,
            estimated_embedding_cost_usd: if queries { cost } else { 0.0 },
        });
        timing.push(PolicyTiming {
            policy,
            total_runtime_seconds: runtime,
            per_query_latency_ms_p50: queries.then(|| percentile(&latencies, 50.0)).flatten(),
            per_query_latency_ms_p95: queries.then(|| percentile(&latencies, 95.0)).flatten(),
        });
        allocations.push(alloc);
    }

    let report = ExperimentReport {
        seed: config.generator.seed,
        n_students: cohort.students.len(),
        n_projects: cohort.projects.len(),
        texts_embedded,
        policies: reports,
    };
    let timings = ExperimentTimings {
        total_runtime_seconds: start.elapsed().as_secs_f64(),
        embedding_seconds,
        batch_recommend_seconds,
        policies: timing,
    };
    Ok(ExperimentRun {
        cohort,
        allocations,
        report,
        timings,
    })
}
