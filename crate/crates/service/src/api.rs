use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use teamup_core::sim::allocation_csv;
use teamup_core::team::Candidate;
use teamup_core::{
    cosine_similarity, form_team, recommend, score_pair, DifficultyLevel, ProjectSpec, RankingError, StudentProfile,
};

use crate::auth::{authorize, ANY, COORDINATOR, PROJECT_WRITE, STAFF, STUDENT_WRITE};
use crate::error::ApiError;
use crate::state::{AllocationRequest, AppState, JobStatus, OverrideRequest};

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/students", post(create_student).get(list_students))
        .route("/students/{id}", get(get_student).put(update_student))
        .route("/students/{id}/recommendations", get(recommendations))
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/{id}", get(get_project).put(update_project))
        .route("/teams/suggest", post(suggest_team))
        .route("/allocations/run", post(run_allocation))
        .route("/allocations/{id}", get(get_allocation))
        .route("/allocations/{id}/override", post(override_allocation))
        .route("/metrics/cohort", get(cohort_metrics))
        .route("/export/allocations.csv", get(export_csv))
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}

async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let start = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(
        method = %method,
        path = %path,
        status = resp.status().as_u16(),
        elapsed_ms = start.elapsed().as_secs_f64() * 1e3,
        "request"
    );
    resp
}

fn json_body(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn health() -> &'static str {
    "ok"
}

async fn create_student(
    State(s): State<Shared>,
    headers: HeaderMap,
    Json(p): Json<StudentProfile>,
) -> ApiResult<(StatusCode, Json<StudentProfile>)> {
    authorize(&s.config.auth, &headers, STUDENT_WRITE)?;
    Ok((StatusCode::CREATED, Json(s.write_student(&p, true)?)))
}

async fn update_student(
    State(s): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(mut p): Json<StudentProfile>,
) -> ApiResult<Json<StudentProfile>> {
    authorize(&s.config.auth, &headers, STUDENT_WRITE)?;
    if p.student_id.trim().is_empty() {
        p.student_id = id.clone();
    }
    if p.student_id.trim() != id {
        return Err(ApiError::unprocessable("id_mismatch", "body id differs from path id"));
    }
    Ok(Json(s.write_student(&p, false)?))
}

async fn get_student(State(s): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<StudentProfile>> {
    authorize(&s.config.auth, &headers, ANY)?;
    let view = s.view();
    view.cohort
        .student(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("student", &id))
}

async fn list_students(State(s): State<Shared>, headers: HeaderMap) -> ApiResult<Json<Vec<StudentProfile>>> {
    authorize(&s.config.auth, &headers, STAFF)?;
    Ok(Json(s.view().cohort.students.clone()))
}

async fn create_project(
    State(s): State<Shared>,
    headers: HeaderMap,
    Json(p): Json<ProjectSpec>,
) -> ApiResult<(StatusCode, Json<ProjectSpec>)> {
    authorize(&s.config.auth, &headers, PROJECT_WRITE)?;
    Ok((StatusCode::CREATED, Json(s.write_project(&p, true)?)))
}

async fn update_project(
    State(s): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(mut p): Json<ProjectSpec>,
) -> ApiResult<Json<ProjectSpec>> {
    authorize(&s.config.auth, &headers, PROJECT_WRITE)?;
    if p.project_id.trim().is_empty() {
        p.project_id = id.clone();
    }
    if p.project_id.trim() != id {
        return Err(ApiError::unprocessable("id_mismatch", "body id differs from path id"));
    }
    Ok(Json(s.write_project(&p, false)?))
}

async fn get_project(State(s): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Json<ProjectSpec>> {
    authorize(&s.config.auth, &headers, ANY)?;
    let view = s.view();
    view.cohort
        .project(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("project", &id))
}

async fn list_projects(State(s): State<Shared>, headers: HeaderMap) -> ApiResult<Json<Vec<ProjectSpec>>> {
    authorize(&s.config.auth, &headers, ANY)?;
    Ok(Json(s.view().cohort.projects.clone()))
}

/// Optional per-request overrides of the ranking parameters.
#[derive(Debug, Default, Deserialize, Serialize)]
struct RecQuery {
    k: Option<usize>,
    gamma: Option<f64>,
    penalty_cap: Option<f64>,
    domain_boost: Option<f64>,
    lambda: Option<f64>,
    min_display_score: Option<f64>,
}

async fn recommendations(
    State(s): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<RecQuery>,
) -> ApiResult<Response> {
    authorize(&s.config.auth, &headers, ANY)?;
    let mut params = s.engine.ranking.clone();
    params.gamma = q.gamma.unwrap_or(params.gamma);
    params.penalty_cap = q.penalty_cap.unwrap_or(params.penalty_cap);
    params.domain_boost = q.domain_boost.unwrap_or(params.domain_boost);
    params.lambda = q.lambda.unwrap_or(params.lambda);
    params.min_display_score = q.min_display_score.unwrap_or(params.min_display_score);
    params.validate()?;
    let k = q.k.unwrap_or(params.k_default);
    if k == 0 {
        return Err(ApiError::unprocessable("invalid_parameters", "k must be at least 1"));
    }
    let key = serde_json::to_string(&(k, &params)).map_err(|e| ApiError::internal(e.to_string()))?;

    let now = s.now();
    if let Some(body) = s.cache.get(&id, &key, now) {
        let mut resp = json_body(StatusCode::OK, body.as_ref().clone());
        resp.headers_mut().insert("x-cache", HeaderValue::from_static("hit"));
        return Ok(resp);
    }
    // Read the generation before the view so a concurrent write makes
    // this result uncacheable.
    let generation = s.cache.generation();
    let view = s.view();
    let recs = match recommend(&id, &view.cohort, &view.index, &params, k) {
        Err(RankingError::EmptyCohort) if view.cohort.student(&id).is_some() => Vec::new(),
        other => other?,
    };
    let body = Arc::new(serde_json::to_string(&recs).map_err(|e| ApiError::internal(e.to_string()))?);
    s.cache.put(&id, &key, body.clone(), generation, now);
    let mut resp = json_body(StatusCode::OK, body.as_ref().clone());
    resp.headers_mut().insert("x-cache", HeaderValue::from_static("miss"));
    Ok(resp)
}

#[derive(Debug, Deserialize)]
struct SuggestRequest {
    project_id: String,
    target_size: usize,
    /// Candidate students; every stored student when absent.
    #[serde(default)]
    pool: Option<Vec<String>>,
}

async fn suggest_team(
    State(s): State<Shared>,
    headers: HeaderMap,
    Json(req): Json<SuggestRequest>,
) -> ApiResult<Json<teamup_core::TeamSuggestion>> {
    authorize(&s.config.auth, &headers, STAFF)?;
    let view = s.view();
    let cohort = &view.cohort;
    let project = cohort
        .project(&req.project_id)
        .ok_or_else(|| ApiError::not_found("project", &req.project_id))?;
    let pv = cohort
        .embedding(&project.project_id)
        .ok_or_else(|| ApiError::internal("project has no embedding"))?;
    let ids: Vec<String> = match &req.pool {
        Some(ids) => ids.clone(),
        None => cohort.students.iter().map(|s| s.student_id.clone()).collect(),
    };
    // Score against the project as if it had no applications yet, so a
    // full project can still be staffed from scratch.
    let fresh = ProjectSpec {
        applications_count: 0,
        ..project.clone()
    };
    let mut pool = Vec::with_capacity(ids.len());
    for id in &ids {
        let profile = cohort.student(id).ok_or_else(|| ApiError::not_found("student", id))?;
        let e = cohort
            .embedding(id)
            .ok_or_else(|| ApiError::internal("student has no embedding"))?;
        let sim = cosine_similarity(e, pv).map_err(|err| ApiError::internal(err.to_string()))?;
        let score = score_pair(profile, &fresh, sim, &s.engine.ranking)?.final_score;
        pool.push(Candidate {
            profile,
            embedding: e,
            score,
        });
    }
    let team = form_team(project, pv, &pool, req.target_size, &s.engine.complementarity)?;
    Ok(Json(team))
}

#[derive(Debug, Serialize)]
struct RunAccepted {
    allocation_id: String,
    status: &'static str,
}

async fn run_allocation(
    State(s): State<Shared>,
    headers: HeaderMap,
    body: Option<Json<AllocationRequest>>,
) -> ApiResult<(StatusCode, Json<RunAccepted>)> {
    authorize(&s.config.auth, &headers, COORDINATOR)?;
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let id = s.start_allocation(req)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(RunAccepted {
            allocation_id: id,
            status: "running",
        }),
    ))
}

async fn get_allocation(State(s): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult<Response> {
    authorize(&s.config.auth, &headers, ANY)?;
    if let Some(rec) = s.view().allocation(&id) {
        let mut v = serde_json::to_value(&rec).map_err(|e| ApiError::internal(e.to_string()))?;
        v["status"] = "done".into();
        return Ok(Json(v).into_response());
    }
    match s.job_status(&id) {
        Some(status @ (JobStatus::Running | JobStatus::Failed { .. })) => {
            let mut v = serde_json::to_value(&status).map_err(|e| ApiError::internal(e.to_string()))?;
            v["id"] = id.into();
            Ok(Json(v).into_response())
        }
        // Done jobs are served from the store above.
        _ => Err(ApiError::not_found("allocation", &id)),
    }
}

async fn override_allocation(
    State(s): State<Shared>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(req): Json<OverrideRequest>,
) -> ApiResult<Json<crate::state::OverrideResponse>> {
    authorize(&s.config.auth, &headers, COORDINATOR)?;
    Ok(Json(s.apply_override(&id, &req)?))
}

#[derive(Debug, Serialize)]
struct ProjectDemand {
    project_id: String,
    title: String,
    applications_count: u32,
    capacity: u32,
    subscription_ratio: f64,
    assigned: usize,
}

#[derive(Debug, Serialize)]
struct AllocationProgress {
    allocation_id: Option<String>,
    assigned: usize,
    unassigned: usize,
}

#[derive(Debug, Serialize)]
struct CohortMetrics {
    students: usize,
    projects: usize,
    skill_frequency: BTreeMap<String, usize>,
    area_frequency: BTreeMap<String, usize>,
    level_counts: BTreeMap<String, usize>,
    project_demand: Vec<ProjectDemand>,
    allocation_progress: AllocationProgress,
}

async fn cohort_metrics(State(s): State<Shared>, headers: HeaderMap) -> ApiResult<Json<CohortMetrics>> {
    authorize(&s.config.auth, &headers, STAFF)?;
    let view = s.view();
    let cohort = &view.cohort;
    let mut skill_frequency = BTreeMap::new();
    let mut area_frequency = BTreeMap::new();
    let mut level_counts: BTreeMap<String, usize> =
        DifficultyLevel::ALL.iter().map(|l| (l.to_string(), 0)).collect();
    for st in &cohort.students {
        for sk in &st.skills {
            *skill_frequency.entry(sk.skill_name.clone()).or_insert(0) += 1;
            *area_frequency.entry(sk.area.clone()).or_insert(0) += 1;
        }
        *level_counts.entry(st.level().to_string()).or_insert(0) += 1;
    }
    let latest = view.latest_allocation();
    let project_demand = cohort
        .projects
        .iter()
        .map(|p| ProjectDemand {
            project_id: p.project_id.clone(),
            title: p.title.clone(),
            applications_count: p.applications_count,
            capacity: p.capacity,
            subscription_ratio: p.subscription_ratio(),
            assigned: latest
                .as_ref()
                .and_then(|a| a.allocation.teams.get(&p.project_id))
                .map_or(0, Vec::len),
        })
        .collect();
    let assigned = latest.as_ref().map_or(0, |a| {
        a.allocation
            .assignments
            .keys()
            .filter(|k| cohort.student(k).is_some())
            .count()
    });
    Ok(Json(CohortMetrics {
        students: cohort.students.len(),
        projects: cohort.projects.len(),
        skill_frequency,
        area_frequency,
        level_counts,
        project_demand,
        allocation_progress: AllocationProgress {
            allocation_id: latest.map(|a| a.id),
            assigned,
            unassigned: cohort.students.len() - assigned,
        },
    }))
}

pub use teamup_core::sim::ALLOCATION_CSV_HEADER as EXPORT_COLUMNS;

#[derive(Debug, Deserialize)]
struct ExportQuery {
    allocation_id: Option<String>,
}

async fn export_csv(State(s): State<Shared>, headers: HeaderMap, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    authorize(&s.config.auth, &headers, COORDINATOR)?;
    let view = s.view();
    let rec = match &q.allocation_id {
        Some(id) => view.allocation(id).ok_or_else(|| ApiError::not_found("allocation", id))?,
        None => view
            .latest_allocation()
            .ok_or_else(|| ApiError::not_found("allocation", "latest"))?,
    };
    let bytes = allocation_csv(&view.cohort, &rec.id, &rec.allocation)?;
    Ok((
        StatusCode::OK,
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"allocations.csv\""),
        ],
        bytes,
    )
        .into_response())
}
