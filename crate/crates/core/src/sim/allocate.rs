use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Policy, SimError};
use crate::domain::{Cohort, ProjectSpec};
use crate::embedding::EmbeddingVector;
use crate::index::cosine_similarity;
use crate::ranking::{score_pair, RankingError, RankingParams};
use crate::team::{describe_team, form_team, Candidate, ComplementarityParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub policy: Policy,
    pub seed: Option<u64>,
    pub assignments: BTreeMap<String, String>,
    /// Members of each team in the order they joined.
    pub teams: BTreeMap<String, Vec<String>>,
}

impl AllocationResult {
    fn from_teams(policy: Policy, seed: Option<u64>, teams: BTreeMap<String, Vec<String>>) -> Self {
        let teams: BTreeMap<String, Vec<String>> = teams.into_iter().filter(|(_, m)| !m.is_empty()).collect();
        let assignments = teams
            .iter()
            .flat_map(|(p, ms)| ms.iter().map(move |s| (s.clone(), p.clone())))
            .collect();
        Self {
            policy,
            seed,
            assignments,
            teams,
        }
    }

    /// Moves `student` from its current team to `project`.
    pub fn reassign(&mut self, student: &str, project: &str) -> Result<(), SimError> {
        let from = self
            .assignments
            .get(student)
            .cloned()
            .ok_or_else(|| SimError::UnknownId(student.to_string()))?;
        if let Some(ms) = self.teams.get_mut(&from) {
            ms.retain(|m| m != student);
            if ms.is_empty() {
                self.teams.remove(&from);
            }
        }
        self.teams.entry(project.to_string()).or_default().push(student.to_string());
        self.assignments.insert(student.to_string(), project.to_string());
        Ok(())
    }
}

fn check_capacity(cohort: &Cohort) -> Result<(), SimError> {
    let seats: u64 = cohort.projects.iter().map(|p| u64::from(p.team_size_max)).sum();
    if seats < cohort.students.len() as u64 {
        return Err(SimError::InsufficientCapacity {
            students: cohort.students.len(),
            seats,
        });
    }
    Ok(())
}

fn sorted_projects(cohort: &Cohort) -> Vec<&ProjectSpec> {
    let mut ps: Vec<&ProjectSpec> = cohort.projects.iter().collect();
    ps.sort_by(|a, b| a.project_id.cmp(&b.project_id));
    ps
}

/// Gets rid of one-person teams. A lone student first moves to another
/// started team with room; failing that, it pulls the newest member of the
/// lowest-id team that can spare one.
fn repair_singletons(teams: &mut BTreeMap<String, Vec<String>>, max: &BTreeMap<&str, usize>) {
    loop {
        let Some(lone) = teams.iter().find(|(_, m)| m.len() == 1).map(|(p, _)| p.clone()) else {
            return;
        };
        let host = teams
            .iter()
            .find(|(p, m)| **p != lone && !m.is_empty() && m.len() < max[p.as_str()])
            .map(|(p, _)| p.clone());
        if let Some(host) = host {
            let s = teams.get_mut(&lone).expect("exists").pop().expect("one member");
            teams.get_mut(&host).expect("exists").push(s);
            continue;
        }
        let donor = teams.iter().find(|(p, m)| **p != lone && m.len() > 2).map(|(p, _)| p.clone());
        match donor {
            Some(donor) => {
                let s = teams.get_mut(&donor).expect("exists").pop().expect("non-empty");
                teams.get_mut(&lone).expect("exists").push(s);
            }
            // A single student overall, nothing to pair with.
            None => return,
        }
    }
}

/// Shuffles students with `seed` and deals them round-robin over the
/// projects in id order, skipping full ones.
pub fn allocate_random(cohort: &Cohort, seed: u64) -> Result<AllocationResult, SimError> {
    check_capacity(cohort)?;
    let projects = sorted_projects(cohort);
    let mut students: Vec<&str> = cohort.students.iter().map(|s| s.student_id.as_str()).collect();
    students.sort_unstable();
    students.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let max: BTreeMap<&str, usize> = projects
        .iter()
        .map(|p| (p.project_id.as_str(), p.team_size_max as usize))
        .collect();
    let mut teams: BTreeMap<String, Vec<String>> =
        projects.iter().map(|p| (p.project_id.clone(), Vec::new())).collect();
    let mut cursor = 0usize;
    for s in students {
        loop {
            let p = projects[cursor % projects.len()];
            cursor += 1;
            let team = teams.get_mut(&p.project_id).expect("initialized");
            if team.len() < max[p.project_id.as_str()] {
                team.push(s.to_string());
                break;
            }
        }
    }
    teams.retain(|_, m| !m.is_empty());
    repair_singletons(&mut teams, &max);
    Ok(AllocationResult::from_teams(Policy::Random, Some(seed), teams))
}

fn embedding_of<'a>(cohort: &'a Cohort, id: &str) -> Result<&'a EmbeddingVector, SimError> {
    cohort.embedding(id).ok_or_else(|| SimError::NotEmbedded(id.to_string()))
}

/// Project-major greedy allocation.
///
/// Each round picks the not-yet-staffed project whose best adjusted score
/// over the unassigned students is highest (ties to the lower id), forms a
/// team for it from all unassigned students, commits it and records the
/// new applications against the project. A lone leftover student joins the
/// team with room that scores it highest.
pub fn allocate_teamup(
    cohort: &Cohort,
    ranking: &RankingParams,
    comp: &ComplementarityParams,
) -> Result<AllocationResult, SimError> {
    ranking.validate()?;
    comp.validate()?;
    check_capacity(cohort)?;

    let mut projects: Vec<ProjectSpec> = sorted_projects(cohort).into_iter().cloned().collect();
    let mut students: Vec<_> = cohort.students.iter().collect();
    students.sort_by(|a, b| a.student_id.cmp(&b.student_id));

    let student_vecs: Vec<&EmbeddingVector> = students
        .iter()
        .map(|s| embedding_of(cohort, &s.student_id))
        .collect::<Result<_, _>>()?;
    let project_vecs: Vec<&EmbeddingVector> = projects
        .iter()
        .map(|p| embedding_of(cohort, &p.project_id))
        .collect::<Result<_, _>>()?;
    let mut sim = vec![vec![0.0; projects.len()]; students.len()];
    for (i, sv) in student_vecs.iter().enumerate() {
        for (j, pv) in project_vecs.iter().enumerate() {
            sim[i][j] = cosine_similarity(sv, pv)?;
        }
    }

    // None when the project is full for its current demand.
    let score = |i: usize, p: &ProjectSpec, j: usize| -> Result<Option<f64>, SimError> {
        match score_pair(students[i], p, sim[i][j], ranking) {
            Ok(r) => Ok(Some(r.final_score)),
            Err(RankingError::ProjectFull(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    };

    let mut unassigned: BTreeSet<usize> = (0..students.len()).collect();
    let mut staffed = vec![false; projects.len()];
    let mut teams: BTreeMap<String, Vec<String>> = BTreeMap::new();

    while unassigned.len() >= 2 {
        let mut pick: Option<(usize, f64)> = None;
        for (j, p) in projects.iter().enumerate() {
            if staffed[j] {
                continue;
            }
            let mut best: Option<f64> = None;
            for &i in &unassigned {
                if let Some(s) = score(i, p, j)? {
                    best = Some(best.map_or(s, |b: f64| b.max(s)));
                }
            }
            if let Some(b) = best {
                if pick.is_none_or(|(_, pb)| b > pb) {
                    pick = Some((j, b));
                }
            }
        }
        let Some((j, _)) = pick else { break };

        let room = (projects[j].team_size_max - projects[j].applications_count.min(projects[j].team_size_max)) as usize;
        let mut target = room.min(unassigned.len());
        if unassigned.len() - target == 1 && target > 2 {
            target -= 1;
        }
        staffed[j] = true;
        if target < 2 {
            continue;
        }

        let mut pool = Vec::with_capacity(unassigned.len());
        for &i in &unassigned {
            let s = score(i, &projects[j], j)?.unwrap_or(0.0);
            pool.push(Candidate {
                profile: students[i],
                embedding: student_vecs[i],
                score: s,
            });
        }
        let team = form_team(&projects[j], project_vecs[j], &pool, target, comp)?;
        for m in &team.members {
            let i = students.partition_point(|s| s.student_id.as_str() < m.as_str());
            unassigned.remove(&i);
        }
        projects[j].applications_count += team.members.len() as u32;
        teams.insert(projects[j].project_id.clone(), team.members);
    }

    // Leftovers: best-scoring started team with room, else any project.
    let max: BTreeMap<&str, usize> = cohort
        .projects
        .iter()
        .map(|p| (p.project_id.as_str(), p.team_size_max as usize))
        .collect();
    for i in unassigned {
        let mut best: Option<(usize, f64)> = None;
        for (j, p) in projects.iter().enumerate() {
            let size = teams.get(&p.project_id).map_or(0, Vec::len);
            if size == 0 || size >= p.team_size_max as usize {
                continue;
            }
            let s = sim[i][j].clamp(0.0, 1.0);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        let j = match best {
            Some((j, _)) => j,
            None => projects
                .iter()
                .position(|p| teams.get(&p.project_id).map_or(0, Vec::len) < p.team_size_max as usize)
                .expect("capacity was checked"),
        };
        teams
            .entry(projects[j].project_id.clone())
            .or_default()
            .push(students[i].student_id.clone());
        projects[j].applications_count += 1;
    }
    repair_singletons(&mut teams, &max);
    Ok(AllocationResult::from_teams(Policy::Teamup, None, teams))
}

/// Team metrics for an allocated team, keeping the stored member order.
pub fn describe_allocated_team(
    cohort: &Cohort,
    project_id: &str,
    members: &[String],
    comp: &ComplementarityParams,
) -> Result<crate::team::TeamSuggestion, SimError> {
    let project = cohort
        .project(project_id)
        .ok_or_else(|| SimError::UnknownId(project_id.to_string()))?;
    let pv = embedding_of(cohort, project_id)?;
    let mut cands = Vec::with_capacity(members.len());
    for m in members {
        let profile = cohort.student(m).ok_or_else(|| SimError::UnknownId(m.clone()))?;
        cands.push(Candidate {
            profile,
            embedding: embedding_of(cohort, m)?,
            score: 0.0,
        });
    }
    Ok(describe_team(project, pv, &cands, comp)?)
}
