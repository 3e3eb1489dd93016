//! The file-based pipeline behind the subcommands. Every step reads and
//! writes plain files under the output directory so steps can be rerun
//! independently.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use teamup_core::sim::{allocation_csv, write_atomic, PolicyReport, ALLOCATION_CSV_HEADER};
use teamup_core::{
    allocate_random, allocate_teamup, evaluate, generate_cohort, AllocationResult, Cohort, EmbeddingProvider,
    EngineConfig, ExperimentReport, Policy, ProfileEmbedder,
};

use crate::CliError;

/// File names under the output directory.
#[derive(Debug, Clone)]
pub struct OutDir(pub PathBuf);

impl OutDir {
    pub fn cohort(&self) -> PathBuf {
        self.0.join("cohort.json")
    }

    pub fn allocation(&self, policy: Policy) -> PathBuf {
        self.0.join(format!("allocation_{policy}.json"))
    }

    pub fn report_json(&self) -> PathBuf {
        self.0.join("report.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.0.join("report.csv")
    }

    pub fn timings(&self) -> PathBuf {
        self.0.join("timings.json")
    }

    pub fn allocations_csv(&self) -> PathBuf {
        self.0.join("allocations.csv")
    }

    pub fn store(&self) -> PathBuf {
        self.0.join("store.snap")
    }
}

/// `cohort.json`: the embedded cohort plus what embedding it cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortFile {
    pub seed: u64,
    pub texts_embedded: u64,
    pub estimated_embedding_cost_usd: f64,
    pub cohort: Cohort,
}

pub fn generate(cfg: &EngineConfig, provider: &dyn EmbeddingProvider) -> Result<CohortFile, CliError> {
    let mut cohort = generate_cohort(&cfg.generator)?;
    let before = provider.texts_embedded();
    ProfileEmbedder::new(provider, &cfg.generator.taxonomy).embed_cohort(&mut cohort)?;
    let texts_embedded = provider.texts_embedded() - before;
    Ok(CohortFile {
        seed: cfg.generator.seed,
        texts_embedded,
        estimated_embedding_cost_usd: texts_embedded as f64 * provider.cost_per_text(),
        cohort,
    })
}

/// The random arm uses `random_seed`, else the config's, else the cohort seed.
pub fn allocate(
    cfg: &EngineConfig,
    file: &CohortFile,
    policy: Policy,
    random_seed: Option<u64>,
) -> Result<AllocationResult, CliError> {
    Ok(match policy {
        Policy::Teamup => allocate_teamup(&file.cohort, &cfg.ranking, &cfg.complementarity)?,
        Policy::Random => allocate_random(
            &file.cohort,
            random_seed.or(cfg.random_seed).unwrap_or(file.seed),
        )?,
    })
}

/// Embedding cost is charged to TeamUp only; the random arm never queries
/// embeddings.
pub fn report(file: &CohortFile, allocations: &[AllocationResult]) -> Result<ExperimentReport, CliError> {
    let mut policies = Vec::with_capacity(allocations.len());
    for a in allocations {
        policies.push(PolicyReport {
            metrics: evaluate(&file.cohort, a)?,
            estimated_embedding_cost_usd: if a.policy == Policy::Teamup {
                file.estimated_embedding_cost_usd
            } else {
                0.0
            },
        });
    }
    Ok(ExperimentReport {
        seed: file.seed,
        n_students: file.cohort.students.len(),
        n_projects: file.cohort.projects.len(),
        texts_embedded: file.texts_embedded,
        policies,
    })
}

/// One CSV for all given allocations; `allocation_id` is the policy name.
pub fn export(file: &CohortFile, allocations: &[AllocationResult]) -> Result<String, CliError> {
    let mut out = ALLOCATION_CSV_HEADER.join(",");
    out.push('\n');
    for a in allocations {
        let csv = allocation_csv(&file.cohort, a.policy.as_str(), a)?;
        // Drop the repeated header.
        out.push_str(csv.split_once('\n').map_or("", |(_, rows)| rows));
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    s.push('\n');
    write_text(path, &s)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// `Ok(None)` when the file does not exist.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => {
            return Err(CliError::Write {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        }
    };
    serde_json::from_str(&text).map(Some).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_cohort(out: &OutDir) -> Result<CohortFile, CliError> {
    let path = out.cohort();
    read_json(&path)?.ok_or(CliError::MissingCohort(path))
}

pub fn load_allocation(out: &OutDir, policy: Policy) -> Result<AllocationResult, CliError> {
    let path = out.allocation(policy);
    read_json(&path)?.ok_or(CliError::MissingAllocation(path))
}
