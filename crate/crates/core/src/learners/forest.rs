//! Random forest with class-weighted bootstrap and Gini splits.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::data::TrainingData;
use super::tree::{Node, Tree};
use super::RandomForestSpec;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestLeaf {
    pub probs: Vec<f64>,
    /// Bootstrap samples that reached this leaf.
    pub samples: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree<ForestLeaf>>,
}

impl Forest {
    pub(crate) fn fit(data: &TrainingData, spec: &RandomForestSpec, seed: u64) -> Forest {
        let sampler = WeightedIndex::new(data.rows.iter().map(|r| r.weight))
            .expect("class weights are positive");
        let mut scratch = Scratch::new(data);
        let trees = (0..spec.ntree)
            .map(|t| {
                let mut rng = rng::rng(rng::derive(seed, t as u64));
                scratch.bootstrap(data, &sampler, &mut rng);
                let tree = scratch.grow(data, spec, &mut rng);
                scratch.reset();
                tree
            })
            .collect();
        Forest { trees }
    }

    /// Mean of the leaf distributions reached in each tree.
    pub fn predict_by(&self, k: usize, bit: impl Fn(u32) -> bool + Copy) -> Vec<f64> {
        let mut out = vec![0.0; k];
        for tree in &self.trees {
            for (o, p) in out.iter_mut().zip(&tree.leaf_by(bit).probs) {
                *o += p;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// Per-tree working buffers, reused across trees.
struct Scratch {
    k: usize,
    pattern_unit: Vec<u32>,
    unit_pattern: Vec<u32>,
    unit_counts: Vec<f64>,
    order: Vec<u32>,
    candidate_slot: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl Scratch {
    fn new(data: &TrainingData) -> Self {
        Scratch {
            k: data.k(),
            pattern_unit: vec![NONE; data.n_patterns()],
            unit_pattern: Vec::new(),
            unit_counts: Vec::new(),
            order: Vec::new(),
            candidate_slot: vec![NONE; data.n_features],
        }
    }

    fn bootstrap(&mut self, data: &TrainingData, sampler: &WeightedIndex<f64>, rng: &mut rng::Rng) {
        for _ in 0..data.rows.len() {
            let row = data.rows[sampler.sample(rng)];
            let p = row.pattern as usize;
            let mut u = self.pattern_unit[p];
            if u == NONE {
                u = self.unit_pattern.len() as u32;
                self.pattern_unit[p] = u;
                self.unit_pattern.push(row.pattern);
                self.unit_counts.extend(std::iter::repeat_n(0.0, self.k));
            }
            self.unit_counts[u as usize * self.k + row.label as usize] += 1.0;
        }
        self.order = (0..self.unit_pattern.len() as u32).collect();
    }

    fn reset(&mut self) {
        for &p in &self.unit_pattern {
            self.pattern_unit[p as usize] = NONE;
        }
        self.unit_pattern.clear();
        self.unit_counts.clear();
    }

    fn class_counts(&self, units: &[u32]) -> Vec<f64> {
        let mut c = vec![0.0; self.k];
        for &u in units {
            let row = &self.unit_counts[u as usize * self.k..(u as usize + 1) * self.k];
            c.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        c
    }

    fn grow(&mut self, data: &TrainingData, spec: &RandomForestSpec, rng: &mut rng::Rng) -> Tree<ForestLeaf> {
        let k = self.k;
        let nodesize = spec.nodesize as f64;
        let mtry = spec.mtry.min(data.n_features).max(1);
        let mut tree = Tree::new();
        let root = tree.push(Node::Split { feature: 0, left: 0, right: 0 });
        let mut stack = vec![(root, 0usize, self.order.len())];
        let mut right = vec![0.0; mtry * k];

        while let Some((node, lo, hi)) = stack.pop() {
            let counts = self.class_counts(&self.order[lo..hi]);
            let n: f64 = counts.iter().sum();
            let pure = counts.iter().any(|&c| c == n);

            let mut best: Option<(u32, f64)> = None;
            if !pure && n >= 2.0 * nodesize {
                let candidates = rand::seq::index::sample(rng, data.n_features, mtry);
                for (slot, f) in candidates.iter().enumerate() {
                    self.candidate_slot[f] = slot as u32;
                }
                right.iter_mut().for_each(|r| *r = 0.0);
                for &u in &self.order[lo..hi] {
                    let p = self.unit_pattern[u as usize];
                    let uc = &self.unit_counts[u as usize * k..(u as usize + 1) * k];
                    for &f in &data.active[p as usize] {
                        let slot = self.candidate_slot[f as usize];
                        if slot != NONE {
                            let r = &mut right[slot as usize * k..(slot as usize + 1) * k];
                            r.iter_mut().zip(uc).for_each(|(a, b)| *a += b);
                        }
                    }
                }
                let parent = gini_mass(&counts, n);
                for (slot, f) in candidates.iter().enumerate() {
                    self.candidate_slot[f] = NONE;
                    let r = &right[slot * k..(slot + 1) * k];
                    let n_right: f64 = r.iter().sum();
                    let n_left = n - n_right;
                    if n_right < nodesize || n_left < nodesize {
                        continue;
                    }
                    let left: Vec<f64> = counts.iter().zip(r).map(|(c, r)| c - r).collect();
                    let decrease = parent - gini_mass(&left, n_left) - gini_mass(r, n_right);
                    if decrease > 1e-12 && best.is_none_or(|(_, d)| decrease > d) {
                        best = Some((f as u32, decrease));
                    }
                }
            }

            match best {
                Some((feature, _)) => {
                    let mid = self.partition(data, lo, hi, feature);
                    let left = tree.push(Node::Split { feature: 0, left: 0, right: 0 });
                    let right_node = tree.push(Node::Split { feature: 0, left: 0, right: 0 });
                    tree.nodes[node as usize] = Node::Split {
                        feature,
                        left,
                        right: right_node,
                    };
                    stack.push((right_node, mid, hi));
                    stack.push((left, lo, mid));
                }
                None => {
                    tree.nodes[node as usize] = Node::Leaf(ForestLeaf {
                        probs: counts.iter().map(|c| c / n).collect(),
                        samples: n as u32,
                    });
                }
            }
        }
        tree
    }

    /// Units with the feature unset first; returns the boundary.
    fn partition(&mut self, data: &TrainingData, lo: usize, hi: usize, feature: u32) -> usize {
        let mut mid = lo;
        for i in lo..hi {
            let u = self.order[i];
            if !data.bit(self.unit_pattern[u as usize], feature) {
                self.order.swap(i, mid);
                mid += 1;
            }
        }
        mid
    }
}

/// `n * gini(counts)`, i.e. `n - sum(c^2)/n`.
fn gini_mass(counts: &[f64], n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    n - counts.iter().map(|c| c * c).sum::<f64>() / n
}
