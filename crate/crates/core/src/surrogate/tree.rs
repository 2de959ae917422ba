//! Regression trees grown level by level over presorted feature orders.
//!
//! Each level costs `O(n * d)`: for every feature the samples are visited in
//! sorted order once, and split statistics are accumulated for all open
//! nodes of that level at the same time.

use rand::seq::index;
use rand::Rng;

use crate::rng::RandomSource;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Node {
    Leaf { value: f64 },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub(crate) fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature as usize] <= threshold { left as usize } else { right as usize };
                }
            }
        }
    }

    pub(crate) fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub(crate) fn set_leaf_value(&mut self, leaf: usize, value: f64) {
        self.nodes[leaf] = Node::Leaf { value };
    }

    #[cfg(test)]
    pub(crate) fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Row-major design matrix plus one ascending sample order per feature.
#[derive(Debug, Clone)]
pub(crate) struct Presorted {
    n: usize,
    d: usize,
    x: Vec<f64>,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub(crate) fn new(inputs: &[Vec<f64>]) -> Self {
        let n = inputs.len();
        let d = inputs.first().map_or(0, Vec::len);
        let x: Vec<f64> = inputs.iter().flat_map(|r| r.iter().copied()).collect();
        let order = (0..d)
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| x[a as usize * d + f].total_cmp(&x[b as usize * d + f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { n, d, x, order }
    }

    pub(crate) fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn d(&self) -> usize {
        self.d
    }

    #[inline]
    fn at(&self, i: usize, f: usize) -> f64 {
        self.x[i * self.d + f]
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SplitRule {
    /// Exhaustive search over midpoints between consecutive distinct values.
    Best,
    /// One uniform threshold per feature between the node's min and max.
    RandomThreshold,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub rule: SplitRule,
    pub max_depth: Option<usize>,
    /// Features examined per node; `>= d` means all of them.
    pub max_features: usize,
}

pub(crate) struct GrownTree {
    pub tree: Tree,
    /// Leaf node index per sample; `None` for zero-weight samples.
    pub leaf_of_sample: Vec<Option<usize>>,
}

#[derive(Clone)]
struct Open {
    node: u32,
    depth: usize,
    w: f64,
    sum: f64,
    lo: f64,
    hi: f64,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grows one variance-reduction tree on `targets` with per-sample `weights`
/// (bootstrap multiplicities; zero excludes a sample).
pub(crate) fn grow(
    data: &Presorted,
    targets: &[f64],
    weights: &[f64],
    params: TreeParams,
    rng: &mut RandomSource,
) -> GrownTree {
    let (n, d) = (data.n(), data.d());
    debug_assert_eq!(targets.len(), n);
    debug_assert_eq!(weights.len(), n);

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut node_of: Vec<u32> = weights.iter().map(|&w| if w > 0.0 { 0 } else { NONE }).collect();
    let mut open = vec![Open { node: 0, depth: 0, w: 0.0, sum: 0.0, lo: f64::INFINITY, hi: f64::NEG_INFINITY }];
    let mut slot_of: Vec<u32> = vec![0];

    while !open.is_empty() {
        for o in open.iter_mut() {
            o.w = 0.0;
            o.sum = 0.0;
            o.lo = f64::INFINITY;
            o.hi = f64::NEG_INFINITY;
        }
        for i in 0..n {
            if node_of[i] == NONE {
                continue;
            }
            let s = slot_of[node_of[i] as usize];
            if s == NONE {
                continue;
            }
            let o = &mut open[s as usize];
            o.w += weights[i];
            o.sum += weights[i] * targets[i];
            o.lo = o.lo.min(targets[i]);
            o.hi = o.hi.max(targets[i]);
        }

        let m = open.len();
        let splittable: Vec<bool> = open
            .iter()
            .map(|o| o.w >= 2.0 && o.hi > o.lo && params.max_depth.is_none_or(|md| o.depth < md))
            .collect();

        // feature subsets, drawn in node order for determinism
        let all_features = params.max_features >= d;
        let mut allowed = vec![all_features; if all_features { 0 } else { m * d }];
        if !all_features {
            for s in 0..m {
                if splittable[s] {
                    for f in index::sample(rng, d, params.max_features.max(1)) {
                        allowed[s * d + f] = true;
                    }
                }
            }
        }
        let is_allowed = |s: usize, f: usize| all_features || allowed[s * d + f];

        let mut best: Vec<Option<Best>> = vec![None; m];
        let mut left_w = vec![0.0; m];
        let mut left_sum = vec![0.0; m];
        let mut last = vec![f64::NAN; m];
        let mut lo = vec![f64::NAN; m];
        let mut hi = vec![f64::NAN; m];
        let mut thr = vec![f64::NAN; m];

        for f in 0..d {
            left_w.fill(0.0);
            left_sum.fill(0.0);
            match params.rule {
                SplitRule::Best => {
                    last.fill(f64::NAN);
                    for &i in &data.order[f] {
                        let i = i as usize;
                        let Some(s) = open_slot(&node_of, &slot_of, i) else { continue };
                        if !splittable[s] || !is_allowed(s, f) {
                            continue;
                        }
                        let x = data.at(i, f);
                        if left_w[s] > 0.0 && x > last[s] {
                            let o = &open[s];
                            let (rw, rs) = (o.w - left_w[s], o.sum - left_sum[s]);
                            let gain = left_sum[s] * left_sum[s] / left_w[s] + rs * rs / rw;
                            if best[s].is_none_or(|b| gain > b.gain) {
                                let mut t = 0.5 * (last[s] + x);
                                if t >= x {
                                    t = last[s];
                                }
                                best[s] = Some(Best { gain, feature: f, threshold: t });
                            }
                        }
                        left_w[s] += weights[i];
                        left_sum[s] += weights[i] * targets[i];
                        last[s] = x;
                    }
                }
                SplitRule::RandomThreshold => {
                    lo.fill(f64::NAN);
                    for &i in &data.order[f] {
                        let i = i as usize;
                        let Some(s) = open_slot(&node_of, &slot_of, i) else { continue };
                        if !splittable[s] || !is_allowed(s, f) {
                            continue;
                        }
                        let x = data.at(i, f);
                        if lo[s].is_nan() {
                            lo[s] = x;
                        }
                        hi[s] = x;
                    }
                    for s in 0..m {
                        thr[s] = f64::NAN;
                        if splittable[s] && is_allowed(s, f) && hi[s] > lo[s] {
                            let u: f64 = rng.random();
                            thr[s] = lo[s] + u * (hi[s] - lo[s]);
                            if thr[s] >= hi[s] {
                                thr[s] = lo[s];
                            }
                        }
                    }
                    for &i in &data.order[f] {
                        let i = i as usize;
                        let Some(s) = open_slot(&node_of, &slot_of, i) else { continue };
                        if thr[s].is_nan() {
                            continue;
                        }
                        if data.at(i, f) <= thr[s] {
                            left_w[s] += weights[i];
                            left_sum[s] += weights[i] * targets[i];
                        }
                    }
                    for s in 0..m {
                        if thr[s].is_nan() {
                            continue;
                        }
                        let o = &open[s];
                        let (rw, rs) = (o.w - left_w[s], o.sum - left_sum[s]);
                        if left_w[s] <= 0.0 || rw <= 0.0 {
                            continue;
                        }
                        let gain = left_sum[s] * left_sum[s] / left_w[s] + rs * rs / rw;
                        if best[s].is_none_or(|b| gain > b.gain) {
                            best[s] = Some(Best { gain, feature: f, threshold: thr[s] });
                        }
                    }
                }
            }
        }

        let mut next = Vec::new();
        for (s, o) in open.iter().enumerate() {
            match best[s] {
                Some(b) if splittable[s] => {
                    let left = nodes.len() as u32;
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[o.node as usize] =
                        Node::Split { feature: b.feature as u32, threshold: b.threshold, left, right: left + 1 };
                    for child in [left, left + 1] {
                        next.push(Open { node: child, depth: o.depth + 1, w: 0.0, sum: 0.0, lo: 0.0, hi: 0.0 });
                    }
                }
                _ => {
                    nodes[o.node as usize] = Node::Leaf { value: if o.w > 0.0 { o.sum / o.w } else { 0.0 } };
                }
            }
        }
        for i in 0..n {
            let node = node_of[i];
            if node == NONE {
                continue;
            }
            if let Node::Split { feature, threshold, left, right } = nodes[node as usize] {
                node_of[i] = if data.at(i, feature as usize) <= threshold { left } else { right };
            }
        }
        slot_of = vec![NONE; nodes.len()];
        for (s, o) in next.iter().enumerate() {
            slot_of[o.node as usize] = s as u32;
        }
        open = next;
    }

    let leaf_of_sample = node_of.iter().map(|&v| (v != NONE).then_some(v as usize)).collect();
    GrownTree { tree: Tree { nodes }, leaf_of_sample }
}

#[inline]
fn open_slot(node_of: &[u32], slot_of: &[u32], i: usize) -> Option<usize> {
    let node = node_of[i];
    if node == NONE {
        return None;
    }
    let s = slot_of[node as usize];
    (s != NONE).then_some(s as usize)
}
