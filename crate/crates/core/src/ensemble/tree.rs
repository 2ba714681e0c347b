use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dataset::DesignMatrix;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tree node. Rows with `x[feature] > threshold` go right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        n: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] > *threshold { right } else { left },
            }
        }
    }

    fn uses_feature(&self, f: usize) -> bool {
        match self {
            Node::Leaf { .. } => false,
            Node::Split {
                feature, left, right, ..
            } => *feature == f || left.uses_feature(f) || right.uses_feature(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub root: Node,
    pub n_splits: usize,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.root.predict(row)
    }

    pub fn uses_feature(&self, f: usize) -> bool {
        self.root.uses_feature(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Features considered at each node.
    pub mtry: usize,
    /// `None` grows until leaves cannot be split.
    pub max_splits: Option<usize>,
    pub min_leaf: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Reduction in the sum of squared errors.
    pub gain: f64,
}

/// Best split over `features` for the samples in `order`, each list sorted by
/// its feature. Scans features in the given order and thresholds upward and
/// only replaces on a strictly larger gain.
fn best_split(
    x: &DesignMatrix,
    rows: &[usize],
    y: &[f64],
    order: &[Vec<u32>],
    features: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let n = order[0].len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let total: f64 = order[0].iter().map(|&s| y[s as usize]).sum();
    let mean = total / n as f64;
    let sse: f64 = order[0].iter().map(|&s| (y[s as usize] - mean).powi(2)).sum();
    if sse <= 0.0 {
        return None;
    }
    let base = total * total / n as f64;
    let mut best: Option<Split> = None;
    for &f in features {
        let list = &order[f];
        let mut left_sum = 0.0;
        let mut b = x.get(rows[list[0] as usize], f);
        for k in 0..n - 1 {
            let s = list[k] as usize;
            left_sum += y[s];
            let nl = k + 1;
            let a = b;
            b = x.get(rows[list[k + 1] as usize], f);
            if a == b || nl < min_leaf.max(1) || n - nl < min_leaf.max(1) {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64 - base;
            if best.is_none_or(|bst| gain > bst.gain) {
                let mut threshold = 0.5 * (a + b);
                if threshold >= b {
                    threshold = a;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    // Gains at rounding level are not splits.
    best.filter(|s| s.gain > 1e-12 * sse)
}

/// Candidate leaf in best-first growth.
struct Pending<'a> {
    id: usize,
    order: Cow<'a, [Vec<u32>]>,
    split: Option<Split>,
}

struct Ranked(f64, usize);

impl PartialEq for Ranked {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ranked {
    /// Larger gain first, then earlier node.
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0).then(o.1.cmp(&self.1))
    }
}

enum Slot {
    Leaf(f64, usize),
    Split(usize, f64, usize, usize),
}

/// Per-feature orderings of a fixed row sample, reusable across trees fitted
/// to different targets on the same rows.
#[derive(Debug, Clone)]
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &DesignMatrix, rows: &[usize]) -> Self {
        let order = (0..x.n_cols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
                idx.sort_by(|&a, &b| x.get(rows[a as usize], f).total_cmp(&x.get(rows[b as usize], f)));
                idx
            })
            .collect();
        Presorted { order }
    }

    /// Orderings of the sub-sample `keep[k]` of the rows, indexed by
    /// position in the sub-sample. Sorting is inherited, not redone.
    pub fn restrict(&self, keep: &[bool]) -> Self {
        let mut rank = vec![u32::MAX; keep.len()];
        let mut next = 0;
        for (k, &kept) in keep.iter().enumerate() {
            if kept {
                rank[k] = next;
                next += 1;
            }
        }
        let order = self
            .order
            .iter()
            .map(|o| {
                o.iter()
                    .filter(|&&s| keep[s as usize])
                    .map(|&s| rank[s as usize])
                    .collect()
            })
            .collect();
        Presorted { order }
    }
}

/// Grows a regression tree on `rows` of `x` (repeats allowed) with targets
/// `y[k]` for `rows[k]`.
///
/// Splits maximize the SSE reduction among `mtry` features drawn without
/// replacement at each node, midpoint thresholds between consecutive
/// distinct values, children at least `min_leaf` rows. Growth is best-first
/// so a `max_splits` cap keeps the most useful splits.
pub fn fit_tree(
    x: &DesignMatrix,
    rows: &[usize],
    y: &[f64],
    params: &TreeParams,
    rng: &mut Rng,
) -> Result<RegressionTree> {
    fit_tree_presorted(x, rows, y, &Presorted::new(x, rows), params, rng)
}

/// [`fit_tree`] with orderings computed once by the caller for `rows`.
pub fn fit_tree_presorted(
    x: &DesignMatrix,
    rows: &[usize],
    y: &[f64],
    presorted: &Presorted,
    params: &TreeParams,
    rng: &mut Rng,
) -> Result<RegressionTree> {
    let p = x.n_cols();
    if rows.len() != y.len() {
        return Err(Error::Alignment(format!("{} rows but {} targets", rows.len(), y.len())));
    }
    if rows.is_empty() {
        return Err(Error::Data("no rows to fit a tree".into()));
    }
    if params.mtry == 0 || params.mtry > p {
        return Err(Error::InvalidArgument(format!(
            "mtry = {} with {p} features",
            params.mtry
        )));
    }

    let draw = |rng: &mut Rng| -> Vec<usize> {
        if params.mtry == p {
            (0..p).collect()
        } else {
            let mut f = sample(rng, p, params.mtry).into_vec();
            f.sort_unstable();
            f
        }
    };
    let leaf = |order: &[Vec<u32>]| {
        let n = order[0].len();
        let s: f64 = order[0].iter().map(|&k| y[k as usize]).sum();
        (s / n as f64, n)
    };

    if presorted.order.len() != p || presorted.order.iter().any(|o| o.len() != rows.len()) {
        return Err(Error::Alignment("presorted orderings do not match the rows".into()));
    }
    let mut slots: Vec<Option<Slot>> = vec![None];
    let mut heap = BinaryHeap::new();
    let mut pending: Vec<Option<Pending>> = Vec::new();
    let search = |order: &[Vec<u32>], rng: &mut Rng| best_split(x, rows, y, order, &draw(rng), params.min_leaf);
    fn push<'a>(
        order: Cow<'a, [Vec<u32>]>,
        id: usize,
        split: Option<Split>,
        heap: &mut BinaryHeap<Ranked>,
        pending: &mut Vec<Option<Pending<'a>>>,
    ) {
        let key = pending.len();
        heap.push(Ranked(split.map_or(f64::NEG_INFINITY, |s| s.gain), key));
        pending.push(Some(Pending { id, order, split }));
    }
    let cap = params.max_splits.unwrap_or(usize::MAX);
    let mut n_splits = 0;
    if cap == 0 {
        let (v, n) = leaf(&presorted.order);
        return Ok(RegressionTree {
            root: Node::Leaf { value: v, n },
            n_splits,
        });
    }
    let root = search(&presorted.order, rng);
    push(Cow::Borrowed(&presorted.order), 0, root, &mut heap, &mut pending);

    while let Some(Ranked(_, key)) = heap.pop() {
        let node = pending[key].take().expect("each candidate popped once");
        let split = match node.split {
            Some(s) if n_splits < cap => s,
            _ => {
                let (v, n) = leaf(&node.order);
                slots[node.id] = Some(Slot::Leaf(v, n));
                continue;
            }
        };
        n_splits += 1;
        let (li, ri) = (slots.len(), slots.len() + 1);
        slots.push(None);
        slots.push(None);
        slots[node.id] = Some(Slot::Split(split.feature, split.threshold, li, ri));
        let right = |s: &u32| x.get(rows[*s as usize], split.feature) > split.threshold;
        if n_splits == cap {
            // No further splits: the children are leaves.
            let (r, l): (Vec<u32>, Vec<u32>) = node.order[0].iter().partition(|s| right(s));
            for (id, part) in [(li, l), (ri, r)] {
                let (v, n) = leaf(std::slice::from_ref(&part));
                slots[id] = Some(Slot::Leaf(v, n));
            }
            continue;
        }
        let goes_right: Vec<bool> = {
            let mut m = vec![false; rows.len()];
            for s in node.order[0].iter() {
                m[*s as usize] = right(s);
            }
            m
        };
        let (mut lo, mut ro) = (Vec::with_capacity(p), Vec::with_capacity(p));
        for list in node.order.iter() {
            let (r, l): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&s| goes_right[s as usize]);
            lo.push(l);
            ro.push(r);
        }
        let (ls, rs) = (search(&lo, rng), search(&ro, rng));
        push(Cow::Owned(lo), li, ls, &mut heap, &mut pending);
        push(Cow::Owned(ro), ri, rs, &mut heap, &mut pending);
    }

    fn build(slots: &mut [Option<Slot>], id: usize) -> Node {
        match slots[id].take().expect("every slot resolved") {
            Slot::Leaf(value, n) => Node::Leaf { value, n },
            Slot::Split(feature, threshold, l, r) => Node::Split {
                feature,
                threshold,
                left: Box::new(build(slots, l)),
                right: Box::new(build(slots, r)),
            },
        }
    }
    Ok(RegressionTree {
        root: build(&mut slots, 0),
        n_splits,
    })
}
