use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::domain::{
    derive_student_level, Cohort, DifficultyLevel, ProficiencyLevel, ProjectSpec, SkillEntry, StudentProfile,
    Taxonomy,
};

/// Synthetic cohort settings. All ranges are inclusive `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_students: usize,
    pub n_projects: usize,
    pub skills_per_student: [usize; 2],
    pub skill_pool_size: usize,
    pub team_size_range: [u32; 2],
    pub required_skills_range: [usize; 2],
    pub optional_skills_range: [usize; 2],
    pub domain_preferences_range: [usize; 2],
    /// Number of technical areas a project draws its required skills from.
    pub project_areas_range: [usize; 2],
    /// Probability that each of a student's skills comes from their focus
    /// area rather than the whole pool.
    pub focus_share: f64,
    pub seed: u64,
    pub taxonomy: Taxonomy,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_students: 250,
            n_projects: 60,
            skills_per_student: [4, 12],
            skill_pool_size: 85,
            team_size_range: [2, 5],
            required_skills_range: [2, 6],
            optional_skills_range: [0, 4],
            domain_preferences_range: [1, 3],
            project_areas_range: [1, 3],
            focus_share: 0.0,
            seed: 42,
            taxonomy: Taxonomy::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        let ordered = |r: [usize; 2]| r[0] <= r[1];
        if self.n_students == 0 || self.n_projects == 0 {
            return bad("n_students and n_projects must be positive");
        }
        if self.taxonomy.skill_pool_size() != self.skill_pool_size {
            return Err(SimError::InvalidConfig(format!(
                "skill_pool_size is {} but the taxonomy holds {} skills",
                self.skill_pool_size,
                self.taxonomy.skill_pool_size()
            )));
        }
        if !ordered(self.skills_per_student) || self.skills_per_student[0] == 0 {
            return bad("skills_per_student must be an ordered range starting at 1 or more");
        }
        if self.skills_per_student[1] > self.skill_pool_size {
            return bad("skills_per_student exceeds the skill pool");
        }
        if self.team_size_range[0] < 2 || self.team_size_range[0] > self.team_size_range[1] {
            return bad("team_size_range must be ordered with a minimum of 2");
        }
        if !ordered(self.required_skills_range) || self.required_skills_range[0] == 0 {
            return bad("required_skills_range must be ordered and start at 1 or more");
        }
        if !ordered(self.optional_skills_range)
            || self.required_skills_range[1] + self.optional_skills_range[1] > self.skill_pool_size
        {
            return bad("optional_skills_range is invalid");
        }
        let n_domains = self.taxonomy.domains.len();
        if !ordered(self.domain_preferences_range) || self.domain_preferences_range[1] > n_domains {
            return bad("domain_preferences_range is invalid");
        }
        let n_areas = self.taxonomy.areas.len();
        if !ordered(self.project_areas_range) || self.project_areas_range[0] == 0 || self.project_areas_range[1] > n_areas {
            return bad("project_areas_range is invalid");
        }
        if !(0.0..=1.0).contains(&self.focus_share) {
            return bad("focus_share must lie in [0, 1]");
        }
        let max_seats = self.n_projects as u64 * u64::from(self.team_size_range[1]);
        if max_seats < self.n_students as u64 {
            return bad("even maximal team sizes cannot seat every student");
        }
        Ok(())
    }
}

fn pick_range(rng: &mut ChaCha8Rng, r: [usize; 2]) -> usize {
    rng.random_range(r[0]..=r[1])
}

const PROJECT_NOUNS: [&str; 12] = [
    "platform", "dashboard", "assistant", "pipeline", "marketplace", "tracker", "simulator", "portal",
    "analyzer", "toolkit", "service", "app",
];

const EXPERIENCE_TEMPLATES: [&str; 4] = [
    "built a {d} project using {a} and {b}",
    "internship work with {a} and {b} on a {d} team",
    "coursework projects applying {a} and {b} to {d}",
    "hackathon prototype for {d} written with {a} and {b}",
];

/// Generates a cohort deterministically from `config.seed`.
///
/// Students draw 4 to 12 skills without replacement, uniformly from the
/// pool unless `focus_share` biases them toward one focus area;
/// proficiencies are uniform over the four levels. Projects draw
/// required skills from one to three areas, a uniform difficulty and a
/// uniform team size; sizes are then raised one project at a time until the
/// cohort fits.
pub fn generate_cohort(config: &GeneratorConfig) -> Result<Cohort, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tax = &config.taxonomy;
    let areas: Vec<&str> = tax.area_names().collect();
    let pool: Vec<(&str, &str)> = tax.skills().collect();

    let sw = width(config.n_students);
    let mut students = Vec::with_capacity(config.n_students);
    for i in 0..config.n_students {
        let focus = *areas.choose(&mut rng).expect("taxonomy has areas");
        let n_skills = pick_range(&mut rng, config.skills_per_student);
        let mut taken: BTreeSet<&str> = BTreeSet::new();
        let mut skills = Vec::with_capacity(n_skills);
        while skills.len() < n_skills {
            let from_focus = rng.random_bool(config.focus_share);
            let choices: Vec<&(&str, &str)> = pool
                .iter()
                .filter(|(s, a)| !taken.contains(s) && (!from_focus || *a == focus))
                .collect();
            let choices = if choices.is_empty() {
                pool.iter().filter(|(s, _)| !taken.contains(s)).collect()
            } else {
                choices
            };
            let &&(skill, area) = choices.choose(&mut rng).expect("pool larger than skill count");
            taken.insert(skill);
            let level = ProficiencyLevel::from_code(rng.random_range(1..=4)).expect("codes 1..=4");
            skills.push(SkillEntry::new(skill, level, area));
        }

        let n_prefs = pick_range(&mut rng, config.domain_preferences_range);
        let domain_preferences: BTreeSet<String> = tax
            .domains
            .choose_multiple(&mut rng, n_prefs)
            .cloned()
            .collect();

        let mut by_level: Vec<&SkillEntry> = skills.iter().collect();
        by_level.sort_by(|a, b| b.proficiency.cmp(&a.proficiency));
        let template = EXPERIENCE_TEMPLATES.choose(&mut rng).expect("templates");
        let pref = domain_preferences.iter().next().map(String::as_str).unwrap_or("software");
        let experience_text = template
            .replace("{a}", &by_level[0].skill_name)
            .replace("{b}", &by_level[by_level.len().min(2) - 1].skill_name)
            .replace("{d}", pref);

        let mut s = StudentProfile {
            student_id: format!("s{:0sw$}", i + 1),
            skills,
            domain_preferences,
            experience_text,
            derived_level: None,
        };
        s.derived_level = Some(derive_student_level(&s));
        students.push(s);
    }

    let pw = width(config.n_projects);
    let mut projects = Vec::with_capacity(config.n_projects);
    for j in 0..config.n_projects {
        let domain = tax.domains.choose(&mut rng).expect("taxonomy has domains").clone();
        let difficulty = *DifficultyLevel::ALL.choose(&mut rng).expect("levels");
        let team_size = rng.random_range(config.team_size_range[0]..=config.team_size_range[1]);

        let n_areas = pick_range(&mut rng, config.project_areas_range);
        let project_areas: Vec<&str> = areas.choose_multiple(&mut rng, n_areas).copied().collect();
        let area_pool: Vec<&str> = pool
            .iter()
            .filter(|(_, a)| project_areas.contains(a))
            .map(|(s, _)| *s)
            .collect();
        let n_req = pick_range(&mut rng, config.required_skills_range).min(area_pool.len());
        let required: Vec<String> = area_pool
            .choose_multiple(&mut rng, n_req)
            .map(|s| s.to_string())
            .collect();
        let rest: Vec<&str> = pool
            .iter()
            .map(|(s, _)| *s)
            .filter(|s| !required.iter().any(|r| r == s))
            .collect();
        let n_opt = pick_range(&mut rng, config.optional_skills_range).min(rest.len());
        let optional: Vec<String> = rest.choose_multiple(&mut rng, n_opt).map(|s| s.to_string()).collect();

        let noun = PROJECT_NOUNS.choose(&mut rng).expect("nouns");
        let title = format!("{domain} {noun} {}", j + 1);
        let description = format!(
            "{} {domain} {noun} built with {}",
            difficulty.as_str(),
            required.join(" and ")
        );
        projects.push(ProjectSpec {
            project_id: format!("p{:0pw$}", j + 1),
            title,
            description,
            required_skills: required,
            optional_skills: optional,
            domain,
            difficulty,
            team_size_max: team_size,
            capacity: team_size,
            applications_count: 0,
            weekly_hours: Some(rng.random_range(6..=12)),
        });
    }

    // Raise team sizes until every student can be seated.
    let mut seats: u64 = projects.iter().map(|p| u64::from(p.team_size_max)).sum();
    while seats < config.n_students as u64 {
        let open: Vec<usize> = (0..projects.len())
            .filter(|&i| projects[i].team_size_max < config.team_size_range[1])
            .collect();
        let &i = open.choose(&mut rng).expect("validated: maximal sizes seat everyone");
        let p = &mut projects[i];
        let new_size = rng.random_range(p.team_size_max + 1..=config.team_size_range[1]);
        seats += u64::from(new_size - p.team_size_max);
        p.team_size_max = new_size;
        p.capacity = new_size;
    }

    Ok(Cohort::new(students, projects))
}

fn width(n: usize) -> usize {
    n.to_string().len().max(3)
}
