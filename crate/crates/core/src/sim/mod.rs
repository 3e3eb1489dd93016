//! Synthetic cohorts and the TeamUp-versus-random allocation experiment.

mod allocate;
mod evaluate;
mod experiment;
mod generator;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use allocate::{allocate_random, allocate_teamup, describe_allocated_team, AllocationResult};
pub use evaluate::{evaluate, PolicyMetrics};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentRun};
pub use generator::{generate_cohort, GeneratorConfig};
pub use report::{
    allocation_csv, percentile, write_atomic, ExperimentReport, ExperimentTimings, PolicyReport, PolicyTiming,
    ALLOCATION_CSV_HEADER, CSV_HEADER, METRIC_NAMES,
};

use crate::embedding::EmbedError;
use crate::index::IndexError;
use crate::ranking::RankingError;
use crate::team::TeamError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Random,
    Teamup,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::Teamup => "teamup",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Policy::Random),
            "teamup" => Ok(Policy::Teamup),
            other => Err(SimError::InvalidConfig(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient capacity: {students} students but {seats} seats")]
    InsufficientCapacity { students: usize, seats: u64 },
    #[error("{0} students are unassigned")]
    UnassignedStudents(usize),
    #[error("allocation references unknown id `{0}`")]
    UnknownId(String),
    #[error("cohort is not embedded (missing `{0}`)")]
    NotEmbedded(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Team(#[from] TeamError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
