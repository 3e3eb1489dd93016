use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use sha2::{Digest, Sha256};
use teamup_core::domain::{ProficiencyLevel, SkillEntry, StudentProfile};
use teamup_core::embedding::{weighted_mean, TextItem};
use teamup_core::*;

#[test]
fn offline_vectors_match_golden_hashes() {
    let golden = include_str!("data/offline_golden.tsv");
    let e = OfflineEmbedder::default();
    let mut n = 0;
    for line in golden.lines() {
        let mut cols = line.split('\t');
        let (text, area, hash) = (cols.next().unwrap(), cols.next().unwrap(), cols.next().unwrap());
        let v = e.embed_text(text, Some(area).filter(|a| !a.is_empty())).unwrap();
        let mut h = Sha256::new();
        for x in v.as_slice() {
            h.update(x.to_le_bytes());
        }
        let got: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(got, hash, "{text:?}");
        n += 1;
    }
    assert_eq!(n, 10);
}

fn unit_vectors(dim: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n).prop_filter("non-zero", |vs| {
        vs.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
    })
}

fn lookup(vs: &[Vec<f64>]) -> (Vec<TextItem>, BTreeMap<TextItem, EmbeddingVector>) {
    let items: Vec<TextItem> = (0..vs.len()).map(|i| TextItem::plain(format!("t{i}"))).collect();
    let map = items
        .iter()
        .zip(vs)
        .map(|(t, v)| (t.clone(), EmbeddingVector::normalized(v.clone()).unwrap()))
        .collect();
    (items, map)
}

proptest! {
    #[test]
    fn weight_scale_does_not_change_direction(
        vs in unit_vectors(6, 4),
        ws in prop::collection::vec(0.1f64..4.0, 4),
        c in 0.01f64..100.0,
    ) {
        let (items, map) = lookup(&vs);
        let terms: Vec<_> = items.iter().cloned().zip(ws.iter().copied()).collect();
        let scaled: Vec<_> = items.iter().cloned().zip(ws.iter().map(|w| w * c)).collect();
        let (Ok(a), Ok(b)) = (weighted_mean(&terms, &map, 6), weighted_mean(&scaled, &map, 6)) else {
            return Ok(());
        };
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn term_order_does_not_matter(
        vs in unit_vectors(5, 5),
        ws in prop::collection::vec(0.1f64..4.0, 5),
        seed in any::<u64>(),
    ) {
        let (items, map) = lookup(&vs);
        let terms: Vec<_> = items.iter().cloned().zip(ws.iter().copied()).collect();
        let mut shuffled = terms.clone();
        let n = shuffled.len();
        for i in 0..n {
            let j = (seed.rotate_left(i as u32 * 7) as usize) % n;
            shuffled.swap(i, j);
        }
        let a = weighted_mean(&terms, &map, 5);
        let b = weighted_mean(&shuffled, &map, 5);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn student_vector_ignores_skill_order(rot in 0usize..6) {
        let names = ["python", "sql", "react", "figma", "docker", "kotlin"];
        let areas = ["backend", "backend", "frontend", "design-ux", "devops", "mobile"];
        let mut skills: Vec<SkillEntry> = names
            .iter()
            .zip(areas)
            .enumerate()
            .map(|(i, (n, a))| SkillEntry::new(*n, ProficiencyLevel::ALL[i % 4], a))
            .collect();
        let base = StudentProfile {
            student_id: "s".into(),
            skills: skills.clone(),
            domain_preferences: BTreeSet::from(["fintech".to_string()]),
            experience_text: "built a payments api".into(),
            derived_level: None,
        };
        skills.rotate_left(rot);
        let rotated = StudentProfile { skills, ..base.clone() };
        let e = OfflineEmbedder::default();
        let tax = Taxonomy::default();
        let pe = ProfileEmbedder::new(&e, &tax);
        prop_assert_eq!(pe.embed_student(&base).unwrap(), pe.embed_student(&rotated).unwrap());
    }
}

#[test]
fn embed_all_sends_each_text_once() {
    let e = OfflineEmbedder::default();
    let tax = Taxonomy::default();
    let cohort = generate_cohort(&GeneratorConfig {
        n_students: 30,
        n_projects: 10,
        ..Default::default()
    })
    .unwrap();
    let map = ProfileEmbedder::new(&e, &tax)
        .embed_all(&cohort.students, &cohort.projects)
        .unwrap();
    assert_eq!(map.len(), 40);
    let mut distinct = BTreeSet::new();
    for s in &cohort.students {
        for sk in &s.skills {
            distinct.insert((sk.skill_name.clone(), Some(sk.area.clone())));
        }
        for d in &s.domain_preferences {
            distinct.insert((d.clone(), None));
        }
        distinct.insert((s.experience_text.clone(), None));
    }
    for p in &cohort.projects {
        for sk in p.required_skills.iter().chain(&p.optional_skills) {
            distinct.insert((sk.clone(), tax.area_of(sk).map(str::to_string)));
        }
        distinct.insert((p.description.clone(), None));
    }
    assert_eq!(e.texts_embedded(), distinct.len() as u64);
    assert_eq!(e.estimated_cost(), 0.0);
}
