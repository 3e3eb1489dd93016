use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use teamup_core::domain::Cohort;
use teamup_core::sim::describe_allocated_team;
use teamup_core::team::TeamSuggestion;
use teamup_core::{
    allocate_random, allocate_teamup, evaluate, Backend, ComplementarityParams, EmbeddingProvider, EmbeddingVector,
    PolicyMetrics, ProfileEmbedder, ProjectSpec, RankingParams, SimError, StudentProfile, Taxonomy, VectorIndex,
};

use crate::cache::{Clock, RecommendationCache};
use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::store::{RecordKind, Store, StoreError};

/// Engine settings shared by every request.
#[derive(Debug, Clone)]
pub struct EngineSettings {
    pub taxonomy: Taxonomy,
    pub ranking: RankingParams,
    pub complementarity: ComplementarityParams,
    pub backend: Backend,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            taxonomy: Taxonomy::default(),
            ranking: RankingParams::default(),
            complementarity: ComplementarityParams::default(),
            backend: Backend::BruteForce,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub allocation_id: String,
    pub sequence: u32,
    pub student_id: String,
    pub from_project: String,
    pub to_project: String,
}

/// A finished allocation run: the TeamUp allocation (which overrides
/// modify) plus metrics for it and for the random arm of each seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRecord {
    pub id: String,
    pub seeds: Vec<u64>,
    pub allocation: teamup_core::AllocationResult,
    /// TeamUp first, kept current through overrides; then one random
    /// allocation per seed.
    pub metrics: Vec<PolicyMetrics>,
    pub teams: BTreeMap<String, TeamSuggestion>,
    pub overrides: Vec<OverrideRecord>,
}

/// Immutable state read by requests. Writers build a new view and swap it
/// in whole.
#[derive(Debug, Clone)]
pub struct CohortView {
    pub store: Store,
    pub cohort: Cohort,
    pub index: VectorIndex,
}

impl CohortView {
    pub fn from_store(store: Store, backend: &Backend) -> Result<Self, StoreError> {
        let bad = |e: serde_json::Error| StoreError::CorruptSnapshot(e.to_string());
        let mut cohort = Cohort::default();
        for r in store.of_kind(RecordKind::Student) {
            cohort.students.push(serde_json::from_value(r.payload.clone()).map_err(bad)?);
        }
        for r in store.of_kind(RecordKind::Project) {
            cohort.projects.push(serde_json::from_value(r.payload.clone()).map_err(bad)?);
        }
        for r in store.of_kind(RecordKind::Embedding) {
            let v: EmbeddingVector = serde_json::from_value(r.payload.clone()).map_err(bad)?;
            cohort.embeddings.insert(r.id.clone(), v);
        }
        let mut items = Vec::with_capacity(cohort.projects.len());
        for p in &cohort.projects {
            let v = cohort
                .embeddings
                .get(&p.project_id)
                .ok_or_else(|| StoreError::CorruptSnapshot(format!("project {} has no embedding", p.project_id)))?;
            items.push((p.project_id.clone(), v.clone()));
        }
        let index = VectorIndex::build(backend.clone(), items)
            .map_err(|e| StoreError::CorruptSnapshot(e.to_string()))?;
        Ok(Self { store, cohort, index })
    }

    pub fn allocation(&self, id: &str) -> Option<AllocationRecord> {
        self.store.decode(RecordKind::Allocation, id).and_then(Result::ok)
    }

    /// Allocation with the highest id, which is the most recent one.
    pub fn latest_allocation(&self) -> Option<AllocationRecord> {
        let id = self.store.of_kind(RecordKind::Allocation).last()?.id.clone();
        self.allocation(&id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done,
    Failed { error: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AllocationRequest {
    pub seeds: Vec<u64>,
    pub ranking: Option<RankingParams>,
    pub complementarity: Option<ComplementarityParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRequest {
    pub student_id: String,
    pub from_project: String,
    pub to_project: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverrideResponse {
    pub allocation_id: String,
    #[serde(rename = "override")]
    pub record: OverrideRecord,
    pub from_team: TeamSuggestion,
    pub to_team: TeamSuggestion,
    pub metrics: PolicyMetrics,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub engine: EngineSettings,
    pub cache: RecommendationCache,
    provider: Arc<dyn EmbeddingProvider>,
    clock: Arc<dyn Clock>,
    view: RwLock<Arc<CohortView>>,
    writer: Mutex<()>,
    jobs: Mutex<BTreeMap<String, JobStatus>>,
    job_running: AtomicBool,
}

impl AppState {
    /// Restores from `config.store_path` when that file exists.
    pub fn new(
        config: ServiceConfig,
        engine: EngineSettings,
        provider: Arc<dyn EmbeddingProvider>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, StoreError> {
        let store = match &config.store_path {
            Some(p) if p.exists() => Store::restore(p)?,
            _ => Store::new(),
        };
        let view = CohortView::from_store(store, &engine.backend)?;
        Ok(Self {
            cache: RecommendationCache::new(Duration::from_secs(config.cache_ttl_secs)),
            config,
            engine,
            provider,
            clock,
            view: RwLock::new(Arc::new(view)),
            writer: Mutex::new(()),
            jobs: Mutex::new(BTreeMap::new()),
            job_running: AtomicBool::new(false),
        })
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn view(&self) -> Arc<CohortView> {
        self.view.read().clone()
    }

    /// Single-writer commit: `f` edits a copy of the store, the view is
    /// rebuilt from it, persisted, swapped in, and the cache is dropped.
    /// Nothing changes if `f` or persistence fails.
    pub fn commit<T>(
        &self,
        f: impl FnOnce(&CohortView, &mut Store, DateTime<Utc>) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let _guard = self.writer.lock();
        let current = self.view();
        let mut store = current.store.clone();
        let out = f(&current, &mut store, self.now())?;
        let next = CohortView::from_store(store, &self.engine.backend)?;
        if let Some(path) = &self.config.store_path {
            next.store.persist(path)?;
        }
        *self.view.write() = Arc::new(next);
        self.cache.invalidate_all();
        Ok(out)
    }

    fn embedder(&self) -> ProfileEmbedder<'_> {
        ProfileEmbedder::new(self.provider.as_ref(), &self.engine.taxonomy)
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    /// Creates (`create = true`) or replaces a student.
    pub fn write_student(&self, profile: &StudentProfile, create: bool) -> Result<StudentProfile, ApiError> {
        let p = teamup_core::validate_student(profile, &self.engine.taxonomy).map_err(ApiError::invalid)?;
        let v = self.embedder().embed_student(&p)?;
        self.commit(|view, store, now| {
            check_presence(view, RecordKind::Student, &p.student_id, create)?;
            store.put(RecordKind::Student, &p.student_id, &p, now)?;
            store.put(RecordKind::Embedding, &p.student_id, &v, now)?;
            Ok(p.clone())
        })
    }

    pub fn write_project(&self, spec: &ProjectSpec, create: bool) -> Result<ProjectSpec, ApiError> {
        let p = teamup_core::validate_project(spec, &self.engine.taxonomy).map_err(ApiError::invalid)?;
        let v = self.embedder().embed_project(&p)?;
        self.commit(|view, store, now| {
            check_presence(view, RecordKind::Project, &p.project_id, create)?;
            store.put(RecordKind::Project, &p.project_id, &p, now)?;
            store.put(RecordKind::Embedding, &p.project_id, &v, now)?;
            Ok(p.clone())
        })
    }

    /// Loads a whole cohort, embedding anything without a vector.
    pub fn import_cohort(&self, cohort: &Cohort) -> Result<(), ApiError> {
        cohort
            .check_ids()
            .map_err(|e| ApiError::invalid(vec![e]))?;
        let mut students = Vec::with_capacity(cohort.students.len());
        for s in &cohort.students {
            students.push(teamup_core::validate_student(s, &self.engine.taxonomy).map_err(ApiError::invalid)?);
        }
        let mut projects = Vec::with_capacity(cohort.projects.len());
        for p in &cohort.projects {
            projects.push(teamup_core::validate_project(p, &self.engine.taxonomy).map_err(ApiError::invalid)?);
        }
        let mut embeddings = cohort.embeddings.clone();
        let missing_s: Vec<StudentProfile> = students
            .iter()
            .filter(|s| !embeddings.contains_key(&s.student_id))
            .cloned()
            .collect();
        let missing_p: Vec<ProjectSpec> = projects
            .iter()
            .filter(|p| !embeddings.contains_key(&p.project_id))
            .cloned()
            .collect();
        if !missing_s.is_empty() || !missing_p.is_empty() {
            embeddings.extend(self.embedder().embed_all(&missing_s, &missing_p)?);
        }
        self.commit(|_, store, now| {
            for s in &students {
                store.put(RecordKind::Student, &s.student_id, s, now)?;
                store.put(RecordKind::Embedding, &s.student_id, &embeddings[&s.student_id], now)?;
            }
            for p in &projects {
                store.put(RecordKind::Project, &p.project_id, p, now)?;
                store.put(RecordKind::Embedding, &p.project_id, &embeddings[&p.project_id], now)?;
            }
            Ok(())
        })
    }

    pub fn job_status(&self, id: &str) -> Option<JobStatus> {
        self.jobs.lock().get(id).cloned()
    }

    /// Starts an allocation run in the background and returns its id.
    /// Only one run may be in flight.
    pub fn start_allocation(self: &Arc<Self>, req: AllocationRequest) -> Result<String, ApiError> {
        let ranking = req.ranking.clone().unwrap_or_else(|| self.engine.ranking.clone());
        let comp = req
            .complementarity
            .clone()
            .unwrap_or_else(|| self.engine.complementarity.clone());
        ranking.validate()?;
        comp.validate()?;
        let seeds = if req.seeds.is_empty() { vec![42] } else { req.seeds.clone() };

        if self
            .job_running
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .is_err()
        {
            return Err(ApiError::conflict("job_running", "an allocation run is already in progress"));
        }
        let id = {
            let mut jobs = self.jobs.lock();
            let view = self.view();
            let stored = view.store.of_kind(RecordKind::Allocation).count();
            let id = format!("a{:04}", stored.max(jobs.len()) + 1);
            jobs.insert(id.clone(), JobStatus::Running);
            id
        };

        let state = Arc::clone(self);
        let job_id = id.clone();
        std::thread::spawn(move || {
            let view = state.view();
            let result = compute_allocation(&view.cohort, &job_id, &seeds, &ranking, &comp)
                .map_err(ApiError::from)
                .and_then(|rec| {
                    state.commit(|_, store, now| {
                        store.put(RecordKind::Allocation, &rec.id, &rec, now)?;
                        Ok(())
                    })
                });
            let status = match result {
                Ok(()) => JobStatus::Done,
                Err(e) => JobStatus::Failed { error: e.body.message },
            };
            state.jobs.lock().insert(job_id, status);
            state.job_running.store(false, Ordering::SeqCst);
        });
        Ok(id)
    }

    pub fn apply_override(&self, allocation_id: &str, req: &OverrideRequest) -> Result<OverrideResponse, ApiError> {
        if self.job_status(allocation_id) == Some(JobStatus::Running) {
            return Err(ApiError::conflict("job_running", "allocation run has not finished"));
        }
        let comp = self.engine.complementarity.clone();
        self.commit(|view, store, now| {
            let mut rec = view
                .allocation(allocation_id)
                .ok_or_else(|| ApiError::not_found("allocation", allocation_id))?;
            let cohort = &view.cohort;
            let to = cohort
                .project(&req.to_project)
                .ok_or_else(|| ApiError::not_found("project", &req.to_project))?;
            if cohort.project(&req.from_project).is_none() {
                return Err(ApiError::not_found("project", &req.from_project));
            }
            if req.from_project == req.to_project {
                return Err(ApiError::unprocessable("same_project", "source and target are the same project"));
            }
            match rec.allocation.assignments.get(&req.student_id) {
                Some(p) if *p == req.from_project => {}
                Some(p) => {
                    return Err(ApiError::conflict(
                        "wrong_source",
                        format!("student `{}` is on `{p}`, not `{}`", req.student_id, req.from_project),
                    ))
                }
                None => return Err(ApiError::not_found("assignment for student", &req.student_id)),
            }
            let size = |p: &str| rec.allocation.teams.get(p).map_or(0, Vec::len);
            if size(&req.to_project) >= to.team_size_max as usize {
                return Err(ApiError::conflict(
                    "project_full",
                    format!("project `{}` is full ({} members)", req.to_project, to.team_size_max),
                ));
            }
            if size(&req.from_project) <= 2 {
                return Err(ApiError::conflict(
                    "team_too_small",
                    format!("project `{}` would drop below 2 members", req.from_project),
                ));
            }
            if size(&req.to_project) == 0 {
                return Err(ApiError::conflict(
                    "team_too_small",
                    format!("project `{}` has no team; a one-person team is not allowed", req.to_project),
                ));
            }

            rec.allocation.reassign(&req.student_id, &req.to_project)?;
            let mut describe = |pid: &str| -> Result<TeamSuggestion, ApiError> {
                let t = describe_allocated_team(cohort, pid, &rec.allocation.teams[pid], &comp)?;
                rec.teams.insert(pid.to_string(), t.clone());
                Ok(t)
            };
            let from_team = describe(&req.from_project)?;
            let to_team = describe(&req.to_project)?;
            let metrics = evaluate(cohort, &rec.allocation)?;
            rec.metrics[0] = metrics.clone();
            let record = OverrideRecord {
                allocation_id: allocation_id.to_string(),
                sequence: rec.overrides.len() as u32 + 1,
                student_id: req.student_id.clone(),
                from_project: req.from_project.clone(),
                to_project: req.to_project.clone(),
            };
            rec.overrides.push(record.clone());
            store.put(
                RecordKind::Override,
                &format!("{allocation_id}-{:04}", record.sequence),
                &record,
                now,
            )?;
            store.put(RecordKind::Allocation, allocation_id, &rec, now)?;
            Ok(OverrideResponse {
                allocation_id: allocation_id.to_string(),
                record,
                from_team,
                to_team,
                metrics,
            })
        })
    }
}

fn check_presence(view: &CohortView, kind: RecordKind, id: &str, create: bool) -> Result<(), ApiError> {
    let exists = view.store.contains(kind, id);
    if create && view.store.contains(RecordKind::Embedding, id) {
        return Err(ApiError::conflict("duplicate_id", format!("id `{id}` already exists")));
    }
    if !create && !exists {
        let what = if kind == RecordKind::Student { "student" } else { "project" };
        return Err(ApiError::not_found(what, id));
    }
    Ok(())
}

/// Runs TeamUp once and the random arm once per seed on a fixed cohort.
pub fn compute_allocation(
    cohort: &Cohort,
    id: &str,
    seeds: &[u64],
    ranking: &RankingParams,
    comp: &ComplementarityParams,
) -> Result<AllocationRecord, SimError> {
    if cohort.students.len() < 2 {
        return Err(SimError::InvalidConfig("need at least 2 students to allocate".into()));
    }
    let mut allocation = allocate_teamup(cohort, ranking, comp)?;
    allocation.seed = None;
    let mut metrics = vec![evaluate(cohort, &allocation)?];
    for &seed in seeds {
        metrics.push(evaluate(cohort, &allocate_random(cohort, seed)?)?);
    }
    let mut teams = BTreeMap::new();
    for (pid, members) in &allocation.teams {
        if members.len() >= 2 {
            teams.insert(pid.clone(), describe_allocated_team(cohort, pid, members, comp)?);
        }
    }
    Ok(AllocationRecord {
        id: id.to_string(),
        seeds: seeds.to_vec(),
        allocation,
        metrics,
        teams,
        overrides: Vec::new(),
    })
}
