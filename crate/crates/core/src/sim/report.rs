use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AllocationResult, Policy, PolicyMetrics, SimError};
use crate::domain::Cohort;
use crate::index::cosine_similarity;

pub const CSV_HEADER: [&str; 3] = ["policy", "metric", "value"];

/// CSV rows are written per policy in this metric order.
pub const METRIC_NAMES: [&str; 7] = [
    "mean_match_similarity",
    "within_one_level_pct",
    "mean_pairwise_distance",
    "teams_covering_3plus_areas_pct",
    "students_assigned",
    "teams_formed",
    "estimated_embedding_cost_usd",
];

/// Columns of the per-student allocation export, one row per team member.
pub const ALLOCATION_CSV_HEADER: [&str; 8] = [
    "allocation_id",
    "project_id",
    "project_title",
    "member_order",
    "student_id",
    "student_level",
    "project_difficulty",
    "match_similarity",
];

/// Allocation export: teams in project-id order, members in team order
/// (`member_order` starts at 1).
pub fn allocation_csv(cohort: &Cohort, allocation_id: &str, alloc: &AllocationResult) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ALLOCATION_CSV_HEADER)?;
    for (pid, members) in &alloc.teams {
        let project = cohort.project(pid).ok_or_else(|| SimError::UnknownId(pid.clone()))?;
        let pv = cohort.embedding(pid).ok_or_else(|| SimError::NotEmbedded(pid.clone()))?;
        for (i, sid) in members.iter().enumerate() {
            let student = cohort.student(sid).ok_or_else(|| SimError::UnknownId(sid.clone()))?;
            let sv = cohort.embedding(sid).ok_or_else(|| SimError::NotEmbedded(sid.clone()))?;
            let sim = cosine_similarity(sv, pv)?;
            w.write_record([
                allocation_id,
                pid,
                project.title.as_str(),
                &(i + 1).to_string(),
                sid,
                student.level().as_str(),
                project.difficulty.as_str(),
                &sim.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| SimError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    #[serde(flatten)]
    pub metrics: PolicyMetrics,
    pub estimated_embedding_cost_usd: f64,
}

impl PolicyReport {
    fn values(&self) -> [String; 7] {
        let m = &self.metrics;
        [
            m.mean_match_similarity.to_string(),
            m.within_one_level_pct.to_string(),
            m.mean_pairwise_distance.to_string(),
            m.teams_covering_3plus_areas_pct.to_string(),
            m.students_assigned.to_string(),
            m.teams_formed.to_string(),
            self.estimated_embedding_cost_usd.to_string(),
        ]
    }
}

/// Deterministic part of an experiment: same inputs, same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExperimentReport {
    pub seed: u64,
    pub n_students: usize,
    pub n_projects: usize,
    pub texts_embedded: u64,
    pub policies: Vec<PolicyReport>,
}

impl ExperimentReport {
    pub fn policy(&self, policy: Policy) -> Option<&PolicyReport> {
        self.policies.iter().find(|p| p.metrics.policy == policy)
    }

    pub fn to_csv_string(&self) -> Result<String, SimError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for p in &self.policies {
            for (name, value) in METRIC_NAMES.iter().zip(p.values()) {
                w.write_record([p.metrics.policy.as_str(), name, value.as_str()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| SimError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json_string(&self) -> Result<String, SimError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json_str(s: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SimError> {
        write_atomic(path, self.to_csv_string()?.as_bytes())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), SimError> {
        write_atomic(path, self.to_json_string()?.as_bytes())
    }
}

/// Wall-clock measurements, kept apart from the report so reports stay
/// byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExperimentTimings {
    pub total_runtime_seconds: f64,
    pub embedding_seconds: f64,
    pub batch_recommend_seconds: f64,
    pub policies: Vec<PolicyTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTiming {
    pub policy: Policy,
    pub total_runtime_seconds: f64,
    /// Single-student recommendation latency; only the TeamUp policy issues
    /// queries.
    pub per_query_latency_ms_p50: Option<f64>,
    pub per_query_latency_ms_p95: Option<f64>,
}

/// Nearest-rank percentile of `samples` for `q` in `(0, 100]`.
pub fn percentile(samples: &[f64], q: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * s.len() as f64).ceil().max(1.0) as usize;
    Some(s[rank.min(s.len()) - 1])
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let r = ExperimentReport::default();
        assert_eq!(r.to_csv_string().unwrap(), "policy,metric,value\n");
    }

    #[test]
    fn nearest_rank() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&xs, 50.0), Some(10.0));
        assert_eq!(percentile(&xs, 95.0), Some(19.0));
        assert_eq!(percentile(&xs, 100.0), Some(20.0));
        assert_eq!(percentile(&[], 50.0), None);
    }
}
