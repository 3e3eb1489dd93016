use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use serde_json::{json, Value};
use teamup_core::{generate_cohort, GeneratorConfig, OfflineEmbedder};
use teamup_service::{router, AppState, AuthConfig, EngineSettings, ManualClock, ServiceConfig, EXPORT_COLUMNS};
use tower::ServiceExt;

struct Harness {
    state: Arc<AppState>,
    clock: Arc<ManualClock>,
    app: Router,
}

fn harness(config: ServiceConfig) -> Harness {
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2026, 1, 5, 9, 0, 0).unwrap()));
    let state = Arc::new(
        AppState::new(
            config,
            EngineSettings::default(),
            Arc::new(OfflineEmbedder::default()),
            clock.clone(),
        )
        .unwrap(),
    );
    Harness {
        app: router(state.clone()),
        state,
        clock,
    }
}

fn small_cohort(seed: u64) -> teamup_core::Cohort {
    generate_cohort(&GeneratorConfig {
        n_students: 30,
        n_projects: 14,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn seeded(config: ServiceConfig) -> Harness {
    let h = harness(config);
    h.state.import_cohort(&small_cohort(7)).unwrap();
    h
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply { status, headers, body }
}

async fn get(app: &Router, uri: &str) -> Reply {
    call(app, "GET", uri, None, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, "POST", uri, None, Some(body)).await
}

fn student_json(id: &str) -> Value {
    json!({
        "student_id": id,
        "skills": [
            {"skill_name": "python", "proficiency": "advanced", "area": "data-ml"},
            {"skill_name": "pandas", "proficiency": "intermediate", "area": "data-ml"}
        ],
        "domain_preferences": ["healthcare"],
        "experience_text": "built a clinic triage model in python"
    })
}

async fn wait_for(app: &Router, id: &str) -> Value {
    for _ in 0..500 {
        let r = get(app, &format!("/allocations/{id}")).await;
        assert_eq!(r.status, StatusCode::OK);
        let v = r.json();
        if v["status"] != "running" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("allocation {id} never finished");
}

async fn run_allocation(app: &Router) -> Value {
    let r = post(app, "/allocations/run", json!({"seeds": [42]})).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&r.body));
    let id = r.json()["allocation_id"].as_str().unwrap().to_string();
    let done = wait_for(app, &id).await;
    assert_eq!(done["status"], "done", "{done}");
    done
}

#[tokio::test]
async fn health_and_student_crud() {
    let h = harness(ServiceConfig::default());
    assert_eq!(get(&h.app, "/health").await.status, StatusCode::OK);

    let r = post(&h.app, "/students", student_json("s900")).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let level = r.json()["derived_level"].clone();
    let profile: teamup_core::StudentProfile = serde_json::from_value(student_json("s900")).unwrap();
    assert_eq!(level, json!(teamup_core::derive_student_level(&profile)));

    let dup = post(&h.app, "/students", student_json("s900")).await;
    assert_eq!(dup.status, StatusCode::CONFLICT);
    assert_eq!(dup.json()["error"], "duplicate_id");

    let fetched = get(&h.app, "/students/s900").await;
    assert_eq!(fetched.json()["student_id"], "s900");
    assert_eq!(get(&h.app, "/students/nobody").await.status, StatusCode::NOT_FOUND);

    let mut edited = student_json("s900");
    edited["experience_text"] = json!("now mostly dashboards");
    let put = call(&h.app, "PUT", "/students/s900", None, Some(edited)).await;
    assert_eq!(put.status, StatusCode::OK);
    assert_eq!(get(&h.app, "/students/s900").await.json()["experience_text"], "now mostly dashboards");

    let missing = call(&h.app, "PUT", "/students/s901", None, Some(student_json("s901"))).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    let mismatch = call(&h.app, "PUT", "/students/s900", None, Some(student_json("s901"))).await;
    assert_eq!(mismatch.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn invalid_profiles_list_every_violation() {
    let h = harness(ServiceConfig::default());
    let bad = json!({
        "student_id": "",
        "skills": [
            {"skill_name": "python", "proficiency": "expert", "area": "underwater-basket-weaving"},
            {"skill_name": "python", "proficiency": "beginner", "area": "data-ml"}
        ],
        "domain_preferences": ["astrology"]
    });
    let r = post(&h.app, "/students", bad).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let v = r.json();
    assert_eq!(v["error"], "validation_failed");
    let kinds: Vec<&str> = v["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x["error"].as_str().unwrap())
        .collect();
    for k in ["EmptyId", "UnknownArea", "DuplicateSkill", "UnknownDomain"] {
        assert!(kinds.contains(&k), "{k} missing from {kinds:?}");
    }

    let bad_project = json!({
        "project_id": "p900", "title": "", "required_skills": [], "domain": "healthcare",
        "difficulty": "beginner", "team_size_max": 0, "capacity": 0
    });
    let r = post(&h.app, "/projects", bad_project).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["violations"].as_array().unwrap().len() >= 4);
    // Nothing was written.
    assert_eq!(get(&h.app, "/projects").await.json(), json!([]));
}

#[tokio::test]
async fn recommendations_are_cached_for_five_minutes() {
    let h = seeded(ServiceConfig::default());
    let uri = "/students/s001/recommendations?k=5";
    let first = get(&h.app, uri).await;
    assert_eq!(first.status, StatusCode::OK);
    assert_eq!(first.headers["x-cache"], "miss");
    let recs = first.json();
    assert_eq!(recs.as_array().unwrap().len(), 5);
    let scores: Vec<f64> = recs
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["final_score"].as_f64().unwrap())
        .collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    h.clock.advance(Duration::from_secs(299));
    let hit = get(&h.app, uri).await;
    assert_eq!(hit.headers["x-cache"], "hit");
    assert_eq!(hit.body, first.body);

    // Different parameters are a different entry.
    assert_eq!(get(&h.app, "/students/s001/recommendations?k=3").await.headers["x-cache"], "miss");

    h.clock.advance(Duration::from_secs(1));
    let expired = get(&h.app, uri).await;
    assert_eq!(expired.headers["x-cache"], "miss");
    assert_eq!(expired.body, first.body);
}

#[tokio::test]
async fn writes_invalidate_cached_recommendations() {
    let h = seeded(ServiceConfig::default());
    let uri = "/students/s001/recommendations?k=10";
    get(&h.app, uri).await;
    assert_eq!(get(&h.app, uri).await.headers["x-cache"], "hit");

    let project = json!({
        "project_id": "p900", "title": "Clinic triage assistant",
        "description": "python model for triaging clinic visits",
        "required_skills": ["python"], "domain": "healthcare",
        "difficulty": "intermediate", "team_size_max": 4, "capacity": 4
    });
    assert_eq!(post(&h.app, "/projects", project).await.status, StatusCode::CREATED);
    let after = get(&h.app, uri).await;
    assert_eq!(after.headers["x-cache"], "miss");
}

#[tokio::test]
async fn recommendation_errors() {
    let h = seeded(ServiceConfig::default());
    assert_eq!(
        get(&h.app, "/students/ghost/recommendations").await.status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        get(&h.app, "/students/s001/recommendations?k=0").await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        get(&h.app, "/students/s001/recommendations?lambda=-1").await.status,
        StatusCode::UNPROCESSABLE_ENTITY
    );
}

#[tokio::test]
async fn team_suggestions() {
    let h = seeded(ServiceConfig::default());
    let pid = h
        .state
        .view()
        .cohort
        .projects
        .iter()
        .find(|p| p.team_size_max >= 3)
        .unwrap()
        .project_id
        .clone();
    let r = post(&h.app, "/teams/suggest", json!({"project_id": pid, "target_size": 3})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    let team = r.json();
    assert_eq!(team["members"].as_array().unwrap().len(), 3);

    let again = post(&h.app, "/teams/suggest", json!({"project_id": pid, "target_size": 3})).await;
    assert_eq!(again.body, r.body);

    let small = post(
        &h.app,
        "/teams/suggest",
        json!({"project_id": pid, "target_size": 3, "pool": ["s001"]}),
    )
    .await;
    assert_eq!(small.status, StatusCode::CONFLICT);
    assert_eq!(small.json()["error"], "pool_too_small");

    let zero = post(&h.app, "/teams/suggest", json!({"project_id": "p001", "target_size": 0})).await;
    assert_eq!(zero.status, StatusCode::UNPROCESSABLE_ENTITY);
    let ghost = post(&h.app, "/teams/suggest", json!({"project_id": "p999", "target_size": 2})).await;
    assert_eq!(ghost.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn allocation_job_override_and_export() {
    let h = seeded(ServiceConfig::default());
    assert_eq!(get(&h.app, "/export/allocations.csv").await.status, StatusCode::NOT_FOUND);

    let done = run_allocation(&h.app).await;
    let id = done["id"].as_str().unwrap().to_string();
    assert_eq!(id, "a0001");
    let assignments = done["allocation"]["assignments"].as_object().unwrap();
    assert_eq!(assignments.len(), 30);
    assert_eq!(done["metrics"].as_array().unwrap().len(), 2);
    assert_eq!(done["metrics"][0]["policy"], "teamup");
    assert_eq!(done["metrics"][1]["policy"], "random");

    // Find a legal move: from a team of 3+ into a started team with room.
    let teams = done["allocation"]["teams"].as_object().unwrap().clone();
    let view = h.state.view();
    let max = |pid: &str| view.cohort.project(pid).unwrap().team_size_max as usize;
    let (from, members) = teams
        .iter()
        .find(|(_, m)| m.as_array().unwrap().len() >= 3)
        .expect("a team of three");
    let to = teams
        .iter()
        .find(|(p, m)| *p != from && m.as_array().unwrap().len() < max(p))
        .map(|(p, _)| p.clone())
        .expect("a team with room");
    let student = members[0].as_str().unwrap();
    let r = post(
        &h.app,
        &format!("/allocations/{id}/override"),
        json!({"student_id": student, "from_project": from, "to_project": to}),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.body));
    let v = r.json();
    assert_eq!(v["override"]["sequence"], 1);
    let after = get(&h.app, &format!("/allocations/{id}")).await.json();
    assert_eq!(after["allocation"]["assignments"][student], json!(to));
    assert_eq!(after["overrides"].as_array().unwrap().len(), 1);
    assert_eq!(after["metrics"][0], v["metrics"]);

    // Moving them again from the old team is a stale request.
    let stale = post(
        &h.app,
        &format!("/allocations/{id}/override"),
        json!({"student_id": student, "from_project": from, "to_project": to}),
    )
    .await;
    assert_eq!(stale.status, StatusCode::CONFLICT);

    let csv = get(&h.app, "/export/allocations.csv").await;
    assert_eq!(csv.status, StatusCode::OK);
    let text = String::from_utf8(csv.body).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), EXPORT_COLUMNS.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.starts_with("a0001,")));
    assert!(rows.iter().any(|r| r.contains(&format!(",{to},")) && r.contains(student)));
}

#[tokio::test]
async fn override_into_full_project_is_rejected_without_change() {
    let h = seeded(ServiceConfig::default());
    let done = run_allocation(&h.app).await;
    let id = done["id"].as_str().unwrap();
    let view = h.state.view();
    let teams = done["allocation"]["teams"].as_object().unwrap();
    let max = |pid: &str| view.cohort.project(pid).unwrap().team_size_max as usize;
    let full = teams
        .iter()
        .find(|(p, m)| m.as_array().unwrap().len() == max(p))
        .map(|(p, _)| p.clone())
        .expect("some project filled up");
    let (from, members) = teams.iter().find(|(p, _)| **p != full).unwrap();
    let before = get(&h.app, &format!("/allocations/{id}")).await.body;

    let r = post(
        &h.app,
        &format!("/allocations/{id}/override"),
        json!({"student_id": members[0], "from_project": from, "to_project": full}),
    )
    .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["error"], "project_full");
    assert_eq!(get(&h.app, &format!("/allocations/{id}")).await.body, before);

    let unknown = post(
        &h.app,
        "/allocations/a0999/override",
        json!({"student_id": "s001", "from_project": "p001", "to_project": "p002"}),
    )
    .await;
    assert_eq!(unknown.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cohort_metrics_shape() {
    let h = seeded(ServiceConfig::default());
    let m = get(&h.app, "/metrics/cohort").await.json();
    assert_eq!(m["students"], 30);
    assert_eq!(m["projects"], 14);
    let levels: u64 = m["level_counts"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(levels, 30);
    let skills: u64 = m["skill_frequency"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    let areas: u64 = m["area_frequency"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(skills, areas);
    assert_eq!(m["project_demand"].as_array().unwrap().len(), 14);
    assert_eq!(m["allocation_progress"]["assigned"], 0);
    assert_eq!(m["allocation_progress"]["unassigned"], 30);

    run_allocation(&h.app).await;
    let m = get(&h.app, "/metrics/cohort").await.json();
    assert_eq!(m["allocation_progress"]["allocation_id"], "a0001");
    assert_eq!(m["allocation_progress"]["assigned"], 30);
    let assigned: u64 = m["project_demand"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["assigned"].as_u64().unwrap())
        .sum();
    assert_eq!(assigned, 30);
}

#[tokio::test]
async fn role_tokens_gate_endpoints() {
    let auth = AuthConfig {
        student_token: Some("stu".into()),
        supervisor_token: Some("sup".into()),
        coordinator_token: Some("coord".into()),
    };
    let h = seeded(ServiceConfig {
        auth,
        ..ServiceConfig::default()
    });
    let recs = "/students/s001/recommendations";
    assert_eq!(call(&h.app, "GET", recs, None, None).await.status, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&h.app, "GET", recs, Some("nope"), None).await.status, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&h.app, "GET", recs, Some("stu"), None).await.status, StatusCode::OK);

    let run = json!({"seeds": [1]});
    for (token, want) in [("stu", StatusCode::FORBIDDEN), ("sup", StatusCode::FORBIDDEN)] {
        let r = call(&h.app, "POST", "/allocations/run", Some(token), Some(run.clone())).await;
        assert_eq!(r.status, want);
    }
    let project = json!({
        "project_id": "p900", "title": "Ward dashboard", "required_skills": ["python"],
        "domain": "healthcare", "difficulty": "beginner", "team_size_max": 3, "capacity": 3
    });
    let r = call(&h.app, "POST", "/projects", Some("stu"), Some(project.clone())).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    let r = call(&h.app, "POST", "/projects", Some("sup"), Some(project)).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(
        call(&h.app, "GET", "/metrics/cohort", Some("stu"), None).await.status,
        StatusCode::FORBIDDEN
    );
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        store_path: Some(dir.path().join("store.snap")),
        ..ServiceConfig::default()
    };
    let uri = "/students/s005/recommendations?k=10";
    let (before_recs, before_alloc) = {
        let h = seeded(config.clone());
        post(&h.app, "/students", student_json("s900")).await;
        let done = run_allocation(&h.app).await;
        (get(&h.app, uri).await.body, done)
    };

    let h = harness(config.clone());
    let recs = get(&h.app, uri).await;
    assert_eq!(recs.headers["x-cache"], "miss");
    assert_eq!(recs.body, before_recs);
    assert_eq!(get(&h.app, "/students/s900").await.status, StatusCode::OK);
    assert_eq!(get(&h.app, "/allocations/a0001").await.json(), before_alloc);

    // A second run after restart does not reuse the id.
    let r = post(&h.app, "/allocations/run", json!({})).await;
    assert_eq!(r.json()["allocation_id"], "a0002");
    wait_for(&h.app, "a0002").await;
}

#[test]
fn corrupt_snapshot_refuses_to_start() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.snap");
    let config = ServiceConfig {
        store_path: Some(path.clone()),
        ..ServiceConfig::default()
    };
    {
        let h = harness(config.clone());
        h.state.import_cohort(&small_cohort(3)).unwrap();
    }
    let mut bytes = std::fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n - 10] ^= 0x01;
    std::fs::write(&path, &bytes).unwrap();

    let err = AppState::new(
        config,
        EngineSettings::default(),
        Arc::new(OfflineEmbedder::default()),
        Arc::new(teamup_service::SystemClock),
    )
    .err()
    .expect("corrupt snapshot rejected");
    assert!(matches!(err, teamup_service::StoreError::CorruptSnapshot(_)), "{err}");
}

#[tokio::test]
async fn second_run_while_running_conflicts() {
    let h = harness(ServiceConfig::default());
    h.state
        .import_cohort(
            &generate_cohort(&GeneratorConfig {
                seed: 11,
                ..GeneratorConfig::default()
            })
            .unwrap(),
        )
        .unwrap();
    let first = post(&h.app, "/allocations/run", json!({"seeds": [1, 2, 3]})).await;
    assert_eq!(first.status, StatusCode::ACCEPTED);
    let second = post(&h.app, "/allocations/run", json!({})).await;
    let id = first.json()["allocation_id"].as_str().unwrap().to_string();
    // The first job may already be done on a fast machine; either way the
    // second request must not corrupt it.
    assert!(matches!(second.status, StatusCode::CONFLICT | StatusCode::ACCEPTED));
    let done = wait_for(&h.app, &id).await;
    assert_eq!(done["metrics"].as_array().unwrap().len(), 4);
    assert_eq!(done["allocation"]["assignments"].as_object().unwrap().len(), 250);
    if second.status == StatusCode::ACCEPTED {
        let id2 = second.json()["allocation_id"].as_str().unwrap().to_string();
        wait_for(&h.app, &id2).await;
    }
}
