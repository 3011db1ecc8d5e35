//! Hierarchical navigable small-world graph over the bank rows.
//!
//! Construction is sequential in row order with a seeded level generator,
//! so the graph is a pure function of (rows, params, seed). Search only
//! reads the graph.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distance::sq_l2;

const MAX_LEVEL: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    dist: f64,
    id: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Generation-stamped visited set; reset is O(1).
struct Visited {
    stamp: u32,
    marks: Vec<u32>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            stamp: 0,
            marks: vec![0; n],
        }
    }

    fn reset(&mut self) {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.stamp = 1;
        }
    }

    /// Marks `id`; returns false if it was already marked.
    fn insert(&mut self, id: u32) -> bool {
        let slot = &mut self.marks[id as usize];
        if *slot == self.stamp {
            false
        } else {
            *slot = self.stamp;
            true
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Hnsw {
    max_degree: usize,
    ef_search: usize,
    entry: u32,
    top_level: usize,
    /// `links[node][level]`
    links: Vec<Vec<Vec<u32>>>,
}

struct View<'a> {
    rows: &'a [f32],
    dim: usize,
}

impl View<'_> {
    #[inline]
    fn row(&self, id: u32) -> &[f32] {
        let i = id as usize;
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn dist(&self, q: &[f32], id: u32) -> f64 {
        sq_l2(q, self.row(id))
    }
}

impl Hnsw {
    pub(crate) fn build(
        rows: &[f32],
        dim: usize,
        max_degree: usize,
        ef_construction: usize,
        ef_search: usize,
        seed: u64,
    ) -> Self {
        let n = rows.len() / dim;
        let view = View { rows, dim };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let level_mult = 1.0 / (max_degree.max(2) as f64).ln();
        let mut graph = Hnsw {
            max_degree,
            ef_search,
            entry: 0,
            top_level: 0,
            links: Vec::with_capacity(n),
        };
        let mut visited = Visited::new(n);

        for i in 0..n {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let level = ((-u.ln() * level_mult).floor() as usize).min(MAX_LEVEL);
            graph.links.push(vec![Vec::new(); level + 1]);
            let id = i as u32;
            if i == 0 {
                graph.top_level = level;
                continue;
            }
            let q = view.row(id);
            let mut ep = Candidate {
                dist: view.dist(q, graph.entry),
                id: graph.entry,
            };
            for l in (level + 1..=graph.top_level).rev() {
                ep = graph.greedy(&view, q, ep, l);
            }
            for l in (0..=level.min(graph.top_level)).rev() {
                let found = graph.search_layer(&view, q, &[ep], ef_construction, l, &mut visited);
                let cap = graph.capacity(l);
                let chosen = select_neighbors(&view, &found, cap);
                for &nb in &chosen {
                    graph.links[nb as usize][l].push(id);
                    if graph.links[nb as usize][l].len() > cap {
                        graph.shrink(&view, nb, l);
                    }
                }
                graph.links[i][l] = chosen;
                ep = found[0];
            }
            if level > graph.top_level {
                graph.top_level = level;
                graph.entry = id;
            }
        }
        graph
    }

    fn capacity(&self, level: usize) -> usize {
        if level == 0 {
            self.max_degree * 2
        } else {
            self.max_degree
        }
    }

    fn shrink(&mut self, view: &View<'_>, node: u32, level: usize) {
        let base = view.row(node);
        let mut cands: Vec<Candidate> = self.links[node as usize][level]
            .iter()
            .map(|&id| Candidate {
                dist: view.dist(base, id),
                id,
            })
            .collect();
        cands.sort();
        self.links[node as usize][level] = select_neighbors(view, &cands, self.capacity(level));
    }

    fn greedy(&self, view: &View<'_>, q: &[f32], mut cur: Candidate, level: usize) -> Candidate {
        loop {
            let mut improved = false;
            for &nb in &self.links[cur.id as usize][level] {
                let c = Candidate {
                    dist: view.dist(q, nb),
                    id: nb,
                };
                if c < cur {
                    cur = c;
                    improved = true;
                }
            }
            if !improved {
                return cur;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` candidates, ascending.
    fn search_layer(
        &self,
        view: &View<'_>,
        q: &[f32],
        entries: &[Candidate],
        ef: usize,
        level: usize,
        visited: &mut Visited,
    ) -> Vec<Candidate> {
        visited.reset();
        let mut frontier: BinaryHeap<Reverse<Candidate>> = BinaryHeap::new();
        let mut best: BinaryHeap<Candidate> = BinaryHeap::new();
        for &e in entries {
            if visited.insert(e.id) {
                frontier.push(Reverse(e));
                best.push(e);
            }
        }
        while let Some(Reverse(c)) = frontier.pop() {
            let worst = best.peek().map_or(f64::INFINITY, |w| w.dist);
            if c.dist > worst && best.len() >= ef {
                break;
            }
            for &nb in &self.links[c.id as usize][level] {
                if !visited.insert(nb) {
                    continue;
                }
                let cand = Candidate {
                    dist: view.dist(q, nb),
                    id: nb,
                };
                if best.len() < ef || cand < *best.peek().expect("non-empty") {
                    frontier.push(Reverse(cand));
                    best.push(cand);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Approximate nearest row: `(id, squared distance)`.
    pub(crate) fn nearest(&self, rows: &[f32], dim: usize, q: &[f32]) -> (usize, f64) {
        let view = View { rows, dim };
        let mut ep = Candidate {
            dist: view.dist(q, self.entry),
            id: self.entry,
        };
        for l in (1..=self.top_level).rev() {
            ep = self.greedy(&view, q, ep, l);
        }
        let mut visited = Visited::new(self.links.len());
        let found = self.search_layer(&view, q, &[ep], self.ef_search.max(1), 0, &mut visited);
        let best = found[0];
        (best.id as usize, best.dist)
    }
}

/// Diversity heuristic: keep a candidate only if it is closer to the base
/// than to every already kept neighbor, then backfill with the closest
/// discarded ones. `sorted` must be ascending by distance to the base.
fn select_neighbors(view: &View<'_>, sorted: &[Candidate], cap: usize) -> Vec<u32> {
    let mut kept: Vec<u32> = Vec::with_capacity(cap);
    let mut discarded = Vec::new();
    for c in sorted {
        if kept.len() >= cap {
            break;
        }
        let row = view.row(c.id);
        let diverse = kept.iter().all(|&k| sq_l2(row, view.row(k)) > c.dist);
        if diverse {
            kept.push(c.id);
        } else {
            discarded.push(c.id);
        }
    }
    for id in discarded {
        if kept.len() >= cap {
            break;
        }
        kept.push(id);
    }
    kept
}
