//! Small from-scratch classifiers used to score feature bundles.
//!
//! Both learners are fully seeded; the same seed and data produce the same
//! model bit for bit. Training is sequential on purpose so results do not
//! depend on scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Activation, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Forest,
    Feedforward,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LearnerParams {
    pub kind: LearnerKind,
    pub trees: usize,
    pub max_depth: usize,
    pub min_split: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            kind: LearnerKind::Forest,
            trees: 20,
            max_depth: 8,
            min_split: 4,
            epochs: 40,
            batch: 128,
            lr: 1e-2,
        }
    }
}

/// Row-major matrix view shared by the learners.
#[derive(Debug, Clone, Copy)]
pub struct Matrix<'a> {
    pub values: &'a [f64],
    pub n: usize,
    pub d: usize,
}

impl<'a> Matrix<'a> {
    pub fn new(values: &'a [f64], n: usize, d: usize) -> Self {
        assert_eq!(values.len(), n * d);
        Self { values, n, d }
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }
}

pub enum Model {
    Forest(Forest),
    Feedforward(FeedforwardClassifier),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> u8 {
        match self {
            Model::Forest(f) => f.predict(x),
            Model::Feedforward(m) => m.predict(x),
        }
    }
}

pub fn train(xs: Matrix, labels: &[u8], params: &LearnerParams, seed: u64) -> Model {
    match params.kind {
        LearnerKind::Forest => Model::Forest(Forest::train(xs, labels, params, seed)),
        LearnerKind::Feedforward => {
            Model::Feedforward(FeedforwardClassifier::train(xs, labels, params, seed))
        }
    }
}

pub fn accuracy(model: &Model, xs: Matrix, labels: &[u8]) -> f64 {
    let hits = (0..xs.n).filter(|&i| model.predict(xs.row(i)) == labels[i]).count();
    hits as f64 / xs.n as f64
}

/// Deterministic train/test row split: shuffles indices with the seed and
/// takes the first `ratio` share for training. Both sides stay non-empty.
pub fn holdout_split(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    assert!(n >= 2, "need at least two rows to split");
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let cut = ((n as f64 * ratio) as usize).clamp(1, n - 1);
    let test = idx.split_off(cut);
    (idx, test)
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Node {
    Leaf(u8),
    Split { feat: usize, thr: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(c) => return c,
                Node::Split { feat, thr, left, right } => {
                    at = if x[feat] <= thr { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub fn train(xs: Matrix, labels: &[u8], params: &LearnerParams, seed: u64) -> Self {
        let trees = (0..params.trees)
            .map(|t| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(t as u64 + 1)));
                let rows: Vec<usize> =
                    (0..xs.n).map(|_| rng.random_range(0..xs.n)).collect();
                let mut nodes = Vec::new();
                grow(xs, labels, &rows, 0, params, &mut rng, &mut nodes);
                Tree { nodes }
            })
            .collect();
        Self { trees }
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        let ones: usize = self.trees.iter().map(|t| usize::from(t.predict(x))).sum();
        u8::from(2 * ones > self.trees.len())
    }
}

fn majority(labels: &[u8], rows: &[usize]) -> u8 {
    let ones = rows.iter().filter(|&&i| labels[i] == 1).count();
    u8::from(2 * ones > rows.len())
}

fn gini(ones: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = ones as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

/// Appends the subtree for `rows` to `nodes`, returning its root index.
fn grow(
    xs: Matrix,
    labels: &[u8],
    rows: &[usize],
    depth: usize,
    params: &LearnerParams,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let ones = rows.iter().filter(|&&i| labels[i] == 1).count();
    let pure = ones == 0 || ones == rows.len();
    if pure || depth >= params.max_depth || rows.len() < params.min_split {
        nodes.push(Node::Leaf(majority(labels, rows)));
        return nodes.len() - 1;
    }

    // subsample ~sqrt(d) candidate features without replacement
    let mtry = (xs.d as f64).sqrt().ceil() as usize;
    let mut feats: Vec<usize> = (0..xs.d).collect();
    for i in 0..mtry.min(xs.d) {
        let j = rng.random_range(i..xs.d);
        feats.swap(i, j);
    }
    feats.truncate(mtry.min(xs.d));

    let parent = gini(ones, rows.len());
    let mut best: Option<(f64, usize, f64)> = None; // (impurity, feat, thr)
    for &feat in &feats {
        let mut vals: Vec<f64> = rows.iter().map(|&i| xs.row(i)[feat]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        if vals.len() < 2 {
            continue;
        }
        // cap threshold candidates on wide columns
        let step = vals.len().div_ceil(33).max(1);
        for w in (0..vals.len() - 1).step_by(step) {
            let thr = 0.5 * (vals[w] + vals[w + 1]);
            let (mut lo, mut l1, mut hi, mut h1) = (0usize, 0usize, 0usize, 0usize);
            for &i in rows {
                if xs.row(i)[feat] <= thr {
                    lo += 1;
                    l1 += usize::from(labels[i] == 1);
                } else {
                    hi += 1;
                    h1 += usize::from(labels[i] == 1);
                }
            }
            if lo == 0 || hi == 0 {
                continue;
            }
            let w_imp = (lo as f64 * gini(l1, lo) + hi as f64 * gini(h1, hi)) / rows.len() as f64;
            if best.map_or(w_imp < parent - 1e-12, |(b, _, _)| w_imp < b) {
                best = Some((w_imp, feat, thr));
            }
        }
    }

    let Some((_, feat, thr)) = best else {
        nodes.push(Node::Leaf(majority(labels, rows)));
        return nodes.len() - 1;
    };

    let (lrows, rrows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| xs.row(i)[feat] <= thr);
    let at = nodes.len();
    nodes.push(Node::Leaf(0)); // placeholder
    let left = grow(xs, labels, &lrows, depth + 1, params, rng, nodes);
    let right = grow(xs, labels, &rrows, depth + 1, params, rng, nodes);
    nodes[at] = Node::Split { feat, thr, left, right };
    at
}

// ---------------------------------------------------------------------------
// Feedforward classifier
// ---------------------------------------------------------------------------

/// Two-hidden-layer network trained with logistic loss on z-scored inputs.
pub struct FeedforwardClassifier {
    net: Mlp,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl FeedforwardClassifier {
    pub fn train(xs: Matrix, labels: &[u8], params: &LearnerParams, seed: u64) -> Self {
        let mut mean = vec![0.0; xs.d];
        let mut scale = vec![0.0; xs.d];
        for i in 0..xs.n {
            for (m, &v) in mean.iter_mut().zip(xs.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= xs.n as f64;
        }
        for i in 0..xs.n {
            for (s, (&v, m)) in scale.iter_mut().zip(xs.row(i).iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scale {
            *s = (*s / xs.n as f64).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::new(&[xs.d, 64, 32, 1], Activation::Tanh, false, &mut rng);
        let mut grads = net.zero_gradients();
        let mut order: Vec<usize> = (0..xs.n).collect();
        let mut z = vec![0.0; xs.d];

        for _ in 0..params.epochs {
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            for chunk in order.chunks(params.batch.max(1)) {
                grads.reset();
                for &i in chunk {
                    normalize(xs.row(i), &mean, &scale, &mut z);
                    let logit = net.forward1(&z);
                    let p = 1.0 / (1.0 + (-logit).exp());
                    net.backward(&z, &[p - f64::from(labels[i])], &mut grads);
                }
                grads.scale(1.0 / chunk.len() as f64);
                net.apply_gradients(&grads, params.lr);
            }
        }
        Self { net, mean, scale }
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut z = vec![0.0; x.len()];
        normalize(x, &self.mean, &self.scale, &mut z);
        u8::from(self.net.forward1(&z) > 0.0)
    }
}

fn normalize(x: &[f64], mean: &[f64], scale: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = (x[i] - mean[i]) / scale[i];
    }
}
