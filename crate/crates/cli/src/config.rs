use std::path::Path;

use serde::{Deserialize, Serialize};
use teamup_core::EngineConfig;
use teamup_service::ServiceConfig;

use crate::CliError;

/// Engine settings at the top level plus a `[service]` table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CliConfig {
    #[serde(flatten)]
    pub engine: EngineConfig,
    pub service: ServiceConfig,
}

impl CliConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: CliConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.engine.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml_str(&text)
            }
        }
    }
}

/// Shown under `--help`. Kept in sync with the config structs by a test.
pub const CONFIG_HELP: &str = r#"CONFIG FILE (TOML; every key is optional, defaults shown)

random_seed = <generator.seed>      seed of the random allocation arm

[generator]
n_students = 250
n_projects = 60
skills_per_student = [4, 12]        inclusive range per student
skill_pool_size = 85                must equal the taxonomy's skill count
team_size_range = [2, 5]            project team_size_max range
required_skills_range = [2, 6]
optional_skills_range = [0, 4]
domain_preferences_range = [1, 3]
project_areas_range = [1, 3]        areas a project draws required skills from
focus_share = 0.0                   chance each skill comes from the student's focus area
seed = 42

[generator.taxonomy]
domains = ["ai-ml", ...]            project domains

[generator.taxonomy.areas]
<area> = ["<skill>", ...]           technical areas; together they partition the skill pool

[ranking]
gamma = 0.075                       difficulty penalty per squared level gap
penalty_cap = 0.3
domain_boost = 1.15                 multiplier when the project domain is preferred
lambda = 0.5                        demand decay
k_default = 10                      recommendations per student (--k)
min_display_score = 0.0

[complementarity]
alpha = 0.6                         weight of project fit
beta = 0.4                          weight of redundancy with the team
min_fit = 0.6
min_variance = 0.002

[provider]
kind = "offline"                    "offline" or "remote" (--provider)
offline_dim = 256

[provider.remote]
endpoint = ""
token_env = "TEAMUP_EMBEDDING_TOKEN"
dimension = 1536
batch_size = 64
cost_per_text = 0.0                 USD, used for the cost estimate
max_attempts = 3
backoff_base_ms = 500
timeout_secs = 30
min_interval_ms = 0

[index]
backend = "brute-force"             "brute-force" or "approximate"
m = 16
ef_construction = 200
ef_search = 64
seed = 24301

[service]
host = "127.0.0.1"
port = 8080                         --serve-port
store_path = "<out>/store.snap"
cache_ttl_secs = 300

[service.auth]                      no tokens set: auth disabled
student_token = "..."
supervisor_token = "..."
coordinator_token = "..."
"#;
