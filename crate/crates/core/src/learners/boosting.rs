//! Multiclass gradient-boosted trees on the softmax loss.
//!
//! Each round fits one regression tree per class to the per-class gradient
//! and diagonal Hessian of the weighted multinomial negative log-likelihood,
//! all computed from the same current scores. Leaves take the Newton value
//! `-G / (H + lambda)` scaled by the learning rate. Splits are exact greedy;
//! with binary attributes the only threshold is 0.5.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::data::TrainingData;
use super::tree::{Node, Tree};
use super::BoostingSpec;
use crate::rng;

const MIN_HESSIAN: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    /// Initial scores: log of the weighted class base rates.
    pub base: Vec<f64>,
    /// Round-major: tree `r * k + c` scores class `c` in round `r`.
    pub trees: Vec<Tree<f64>>,
}

impl BoostedTrees {
    pub fn scores_by(&self, bit: impl Fn(u32) -> bool + Copy) -> Vec<f64> {
        let k = self.base.len();
        let mut s = self.base.clone();
        for (i, tree) in self.trees.iter().enumerate() {
            s[i % k] += *tree.leaf_by(bit);
        }
        s
    }

    pub fn rounds(&self) -> usize {
        self.trees.len() / self.base.len().max(1)
    }
}

pub fn softmax_in_place(s: &mut [f64]) {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in s.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    s.iter_mut().for_each(|v| *v /= z);
}

fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Weighted mean negative log-likelihood of the training rows.
fn training_loss(data: &TrainingData, scores: &[f64]) -> f64 {
    let k = data.k();
    let lse: Vec<f64> = scores.chunks(k).map(log_sum_exp).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for r in &data.rows {
        let p = r.pattern as usize;
        num += r.weight * (lse[p] - scores[p * k + r.label as usize]);
        den += r.weight;
    }
    num / den
}

pub(crate) struct BoostingFit {
    pub model: BoostedTrees,
    /// Training loss before the first round and after each round, if requested.
    pub loss: Vec<f64>,
}

pub(crate) fn fit(data: &TrainingData, spec: &BoostingSpec, seed: u64, trace_loss: bool) -> BoostingFit {
    let k = data.k();
    let np = data.n_patterns();

    let mut class_mass = vec![0.0; k];
    for r in &data.rows {
        class_mass[r.label as usize] += r.weight;
    }
    let total: f64 = class_mass.iter().sum();
    let base: Vec<f64> = class_mass.iter().map(|m| (m / total).ln()).collect();

    let mut scores: Vec<f64> = (0..np).flat_map(|_| base.iter().copied()).collect();
    let mut loss = Vec::new();
    if trace_loss {
        loss.push(training_loss(data, &scores));
    }

    let mut builder = TreeBuilder::new(data);
    let mut trees = Vec::with_capacity(spec.ntrees * k);
    let mut probs = vec![0.0; np * k];

    for round in 0..spec.ntrees {
        let mut rng = rng::rng(rng::derive(seed, round as u64));
        builder.aggregate(data, spec.subsample, &mut rng);

        probs.copy_from_slice(&scores);
        probs.chunks_mut(k).for_each(softmax_in_place);

        let round_trees: Vec<Tree<f64>> = (0..k)
            .map(|class| {
                builder.gradients(&probs, k, class);
                builder.grow(data, spec, &mut rng)
            })
            .collect();

        for p in 0..np {
            let bit = |f: u32| data.bit(p as u32, f);
            for (class, tree) in round_trees.iter().enumerate() {
                scores[p * k + class] += *tree.leaf_by(bit);
            }
        }
        trees.extend(round_trees);
        if trace_loss {
            loss.push(training_loss(data, &scores));
        }
    }

    BoostingFit {
        model: BoostedTrees { base, trees },
        loss,
    }
}

struct TreeBuilder {
    k: usize,
    /// Sampled patterns this round and their per-class weight mass.
    unit_pattern: Vec<u32>,
    unit_mass: Vec<f64>,
    pattern_unit: Vec<u32>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    order: Vec<u32>,
    candidate_slot: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl TreeBuilder {
    fn new(data: &TrainingData) -> Self {
        TreeBuilder {
            k: data.k(),
            unit_pattern: Vec::new(),
            unit_mass: Vec::new(),
            pattern_unit: vec![NONE; data.n_patterns()],
            grad: Vec::new(),
            hess: Vec::new(),
            order: Vec::new(),
            candidate_slot: vec![NONE; data.n_features],
        }
    }

    /// Bernoulli row subsample, aggregated per pattern.
    fn aggregate(&mut self, data: &TrainingData, subsample: f64, rng: &mut rng::Rng) {
        for &p in &self.unit_pattern {
            self.pattern_unit[p as usize] = NONE;
        }
        self.unit_pattern.clear();
        self.unit_mass.clear();
        for r in &data.rows {
            if subsample < 1.0 && rng.random::<f64>() >= subsample {
                continue;
            }
            let p = r.pattern as usize;
            let mut u = self.pattern_unit[p];
            if u == NONE {
                u = self.unit_pattern.len() as u32;
                self.pattern_unit[p] = u;
                self.unit_pattern.push(r.pattern);
                self.unit_mass.extend(std::iter::repeat_n(0.0, self.k));
            }
            self.unit_mass[u as usize * self.k + r.label as usize] += r.weight;
        }
    }

    fn gradients(&mut self, probs: &[f64], k: usize, class: usize) {
        let n = self.unit_pattern.len();
        self.grad.resize(n, 0.0);
        self.hess.resize(n, 0.0);
        for u in 0..n {
            let mass = &self.unit_mass[u * k..(u + 1) * k];
            let total: f64 = mass.iter().sum();
            let p = probs[self.unit_pattern[u] as usize * k + class];
            self.grad[u] = p * total - mass[class];
            self.hess[u] = (p * (1.0 - p)).max(MIN_HESSIAN) * total;
        }
        self.order = (0..n as u32).collect();
    }

    fn grow(&mut self, data: &TrainingData, spec: &BoostingSpec, rng: &mut rng::Rng) -> Tree<f64> {
        let lambda = spec.reg_lambda;
        let leaf_value = |g: f64, h: f64| -spec.learning_rate * g / (h + lambda);
        let mut tree = Tree::new();
        let root = tree.push(Node::Leaf(0.0));
        let (g0, h0) = self.sums(0, self.order.len());
        let mut frontier = vec![(root, 0usize, self.order.len(), g0, h0)];

        let nf = data.n_features;
        let per_level = if spec.colsample_bylevel >= 1.0 {
            nf
        } else {
            ((spec.colsample_bylevel * nf as f64).round() as usize).clamp(1, nf)
        };
        let mut gr = vec![0.0; per_level];
        let mut hr = vec![0.0; per_level];

        for _depth in 0..spec.max_depth {
            if frontier.is_empty() {
                break;
            }
            let candidates: Vec<u32> = if per_level == nf {
                (0..nf as u32).collect()
            } else {
                let mut c: Vec<u32> = rand::seq::index::sample(rng, nf, per_level)
                    .iter()
                    .map(|f| f as u32)
                    .collect();
                c.sort_unstable();
                c
            };
            for (slot, &f) in candidates.iter().enumerate() {
                self.candidate_slot[f as usize] = slot as u32;
            }

            let mut next = Vec::new();
            for (node, lo, hi, g, h) in frontier.drain(..) {
                gr.iter_mut().for_each(|v| *v = 0.0);
                hr.iter_mut().for_each(|v| *v = 0.0);
                for &u in &self.order[lo..hi] {
                    let (gu, hu) = (self.grad[u as usize], self.hess[u as usize]);
                    for &f in &data.active[self.unit_pattern[u as usize] as usize] {
                        let slot = self.candidate_slot[f as usize];
                        if slot != NONE {
                            gr[slot as usize] += gu;
                            hr[slot as usize] += hu;
                        }
                    }
                }
                let parent = g * g / (h + lambda);
                let mut best: Option<(usize, f64)> = None;
                for slot in 0..candidates.len() {
                    let (g_r, h_r) = (gr[slot], hr[slot]);
                    let (g_l, h_l) = (g - g_r, h - h_r);
                    if h_l < spec.min_child_weight || h_r < spec.min_child_weight || h_l <= 0.0 || h_r <= 0.0 {
                        continue;
                    }
                    let gain = g_l * g_l / (h_l + lambda) + g_r * g_r / (h_r + lambda) - parent;
                    if gain > 1e-12 && best.is_none_or(|(_, b)| gain > b) {
                        best = Some((slot, gain));
                    }
                }
                match best {
                    Some((slot, _)) => {
                        let feature = candidates[slot];
                        let mid = self.partition(data, lo, hi, feature);
                        let (g_r, h_r) = (gr[slot], hr[slot]);
                        let left = tree.push(Node::Leaf(0.0));
                        let right = tree.push(Node::Leaf(0.0));
                        tree.nodes[node as usize] = Node::Split { feature, left, right };
                        next.push((left, lo, mid, g - g_r, h - h_r));
                        next.push((right, mid, hi, g_r, h_r));
                    }
                    None => tree.nodes[node as usize] = Node::Leaf(leaf_value(g, h)),
                }
            }
            for &f in &candidates {
                self.candidate_slot[f as usize] = NONE;
            }
            frontier = next;
        }
        for (node, _, _, g, h) in frontier {
            tree.nodes[node as usize] = Node::Leaf(leaf_value(g, h));
        }
        tree
    }

    fn sums(&self, lo: usize, hi: usize) -> (f64, f64) {
        self.order[lo..hi].iter().fold((0.0, 0.0), |(g, h), &u| {
            (g + self.grad[u as usize], h + self.hess[u as usize])
        })
    }

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
