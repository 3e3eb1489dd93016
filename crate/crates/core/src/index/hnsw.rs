use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct HnswParams {
    /// Max neighbors per node above layer 0 (layer 0 keeps `2 * m`).
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Seed for level assignment, so graphs are reproducible.
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 64,
            seed: 0x5eed,
        }
    }
}

/// (distance, node) ordered by distance then node index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored(f64, usize);

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone)]
struct Node {
    id: String,
    vector: Vec<f64>,
    /// `links[layer]` for layers `0..=level`.
    links: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Hnsw {
    params: HnswParams,
    nodes: Vec<Node>,
    entry: Option<usize>,
    max_level: usize,
    rng: ChaCha8Rng,
}

impl Hnsw {
    pub fn new(params: HnswParams) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Self {
            params,
            nodes: Vec::new(),
            entry: None,
            max_level: 0,
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn distance(&self, q: &[f64], node: usize) -> f64 {
        let v = &self.nodes[node].vector;
        let nq = dot(q, q).sqrt();
        let nv = dot(v, v).sqrt();
        1.0 - dot(q, v) / (nq * nv)
    }

    fn random_level(&mut self) -> usize {
        let ml = 1.0 / (self.params.m.max(2) as f64).ln();
        let u: f64 = self.rng.random_range(f64::EPSILON..1.0);
        ((-u.ln() * ml).floor() as usize).min(16)
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    pub fn insert(&mut self, id: &str, vector: &[f64]) {
        let level = self.random_level();
        let new = self.nodes.len();
        self.nodes.push(Node {
            id: id.to_string(),
            vector: vector.to_vec(),
            links: vec![Vec::new(); level + 1],
        });
        let Some(mut ep) = self.entry else {
            self.entry = Some(new);
            self.max_level = level;
            return;
        };

        let q = vector.to_vec();
        for layer in ((level + 1)..=self.max_level).rev() {
            ep = self.greedy_closest(&q, ep, layer);
        }
        let mut entry_points = vec![ep];
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&q, &entry_points, self.params.ef_construction, layer);
            let neighbors = self.select_neighbors(&found, self.params.m);
            self.nodes[new].links[layer] = neighbors.clone();
            for &n in &neighbors {
                self.nodes[n].links[layer].push(new);
                if self.nodes[n].links[layer].len() > self.max_links(layer) {
                    self.shrink(n, layer);
                }
            }
            entry_points = found.iter().map(|s| s.1).collect();
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = Some(new);
        }
    }

    /// Keeps the closest neighbors of `node` on `layer`, chosen with the
    /// diversity heuristic.
    fn shrink(&mut self, node: usize, layer: usize) {
        let base = self.nodes[node].vector.clone();
        let mut scored: Vec<Scored> = self.nodes[node].links[layer]
            .iter()
            .map(|&n| Scored(self.distance(&base, n), n))
            .collect();
        scored.sort();
        let kept = self.select_neighbors(&scored, self.max_links(layer));
        self.nodes[node].links[layer] = kept;
    }

    /// Heuristic selection: a candidate is kept if it is closer to the base
    /// than to every neighbor already kept; remaining slots are filled with
    /// the nearest discarded candidates. `candidates` must be sorted by
    /// distance ascending.
    fn select_neighbors(&self, candidates: &[Scored], m: usize) -> Vec<usize> {
        let mut kept: Vec<usize> = Vec::with_capacity(m);
        let mut skipped = Vec::new();
        for &Scored(d, c) in candidates {
            if kept.len() >= m {
                break;
            }
            let cv = &self.nodes[c].vector;
            let dominated = kept.iter().any(|&k| self.distance(cv, k) < d);
            if dominated {
                skipped.push(c);
            } else {
                kept.push(c);
            }
        }
        for c in skipped {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn greedy_closest(&self, q: &[f64], start: usize, layer: usize) -> usize {
        let mut best = Scored(self.distance(q, start), start);
        loop {
            let mut improved = false;
            for &n in &self.nodes[best.1].links[layer] {
                let cand = Scored(self.distance(q, n), n);
                if cand < best {
                    best = cand;
                    improved = true;
                }
            }
            if !improved {
                return best.1;
            }
        }
    }

    /// Best-first search on one layer; returns up to `ef` nodes sorted by
    /// distance ascending.
    fn search_layer(&self, q: &[f64], entry_points: &[usize], ef: usize, layer: usize) -> Vec<Scored> {
        let mut visited: HashSet<usize> = entry_points.iter().copied().collect();
        let mut candidates: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        let mut results: BinaryHeap<Scored> = BinaryHeap::new();
        for &ep in entry_points {
            let s = Scored(self.distance(q, ep), ep);
            candidates.push(Reverse(s));
            results.push(s);
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse(current)) = candidates.pop() {
            let worst = results.peek().map_or(f64::INFINITY, |s| s.0);
            if current.0 > worst && results.len() >= ef {
                break;
            }
            for &n in &self.nodes[current.1].links[layer] {
                if !visited.insert(n) {
                    continue;
                }
                let s = Scored(self.distance(q, n), n);
                let worst = results.peek().map_or(f64::INFINITY, |s| s.0);
                if results.len() < ef || s.0 < worst {
                    candidates.push(Reverse(s));
                    results.push(s);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    /// Ids of (approximately) the `k` nearest nodes to `q` by cosine.
    pub fn search(&self, q: &[f64], k: usize) -> Vec<String> {
        let Some(mut ep) = self.entry else {
            return Vec::new();
        };
        for layer in (1..=self.max_level).rev() {
            ep = self.greedy_closest(q, ep, layer);
        }
        let ef = self.params.ef_search.max(k);
        self.search_layer(q, &[ep], ef, 0)
            .into_iter()
            .take(k)
            .map(|s| self.nodes[s.1].id.clone())
            .collect()
    }
}
