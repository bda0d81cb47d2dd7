//! Online gain regressors for bargaining under incomplete information.
//!
//! The task party learns f(quote) -> gain to judge quotes it has not tried;
//! the data party learns g(bundle) -> gain to judge bundles whose gain it has
//! never observed. Both train incrementally from realized outcomes: each
//! observation lands in a replay buffer and triggers a fixed number of
//! gradient steps on uniformly resampled entries.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::market::QuotedPrice;
use crate::nn::{Activation, Gradients, Mlp};
use crate::{FeatureId, Gain};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot parse error: {0}")]
    Parse(String),
    #[error("snapshot holds {got} parameters, estimator has {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("feature {0:?} has no embedding")]
    UnknownFeature(String),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EstimatorParams {
    pub hidden: [usize; 3],
    pub embed_dim: usize,
    pub lr: f64,
    /// Gradient steps per observation, resampled from the replay buffer.
    pub replay_steps: usize,
    /// Global gradient-norm ceiling; keeps parameters finite whatever the
    /// targets look like.
    pub clip_norm: f64,
}

impl Default for EstimatorParams {
    fn default() -> Self {
        Self { hidden: [64, 32, 16], embed_dim: 16, lr: 1e-2, replay_steps: 10, clip_norm: 5.0 }
    }
}

fn dims(input: usize, hidden: &[usize; 3]) -> Vec<usize> {
    vec![input, hidden[0], hidden[1], hidden[2], 1]
}

/// Maps a price quote to a predicted relative gain.
///
/// Inputs are normalized by the owner's own constants (p by the unit value,
/// the two payment bounds by the budget), so the raw quote scale never
/// reaches the network. The output layer starts at zero: an untrained
/// estimator predicts a gain of exactly 0.
pub struct PriceGainEstimator {
    net: Mlp,
    grads: Gradients,
    unit_value: f64,
    budget: f64,
    params: EstimatorParams,
    buffer: Vec<([f64; 3], f64)>,
    rng: ChaCha8Rng,
}

impl PriceGainEstimator {
    pub fn new(unit_value: f64, budget: f64, params: EstimatorParams, seed: u64) -> Self {
        assert!(unit_value > 0.0 && budget > 0.0, "normalizers must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&dims(3, &params.hidden), Activation::Tanh, true, &mut rng);
        let grads = net.zero_gradients();
        Self { net, grads, unit_value, budget, params, buffer: Vec::new(), rng }
    }

    fn encode(&self, q: &QuotedPrice) -> [f64; 3] {
        [q.p / self.unit_value, q.base / self.budget, q.cap / self.budget]
    }

    pub fn predict(&self, q: &QuotedPrice) -> Gain {
        self.net.forward1(&self.encode(q))
    }

    /// One gradient step on the squared error; returns the pre-step loss.
    pub fn update(&mut self, q: &QuotedPrice, target: Gain) -> f64 {
        let x = self.encode(q);
        step(&mut self.net, &mut self.grads, &x, target, self.params.lr, self.params.clip_norm)
    }

    /// Records a realized outcome and replays buffered samples; returns the
    /// buffer MSE after the updates.
    pub fn observe(&mut self, q: &QuotedPrice, target: Gain) -> f64 {
        let x = self.encode(q);
        self.buffer.push((x, target));
        for _ in 0..self.params.replay_steps {
            let (x, t) = self.buffer[self.rng.random_range(0..self.buffer.len())];
            step(&mut self.net, &mut self.grads, &x, t, self.params.lr, self.params.clip_norm);
        }
        self.buffer_mse()
    }

    /// Mean squared prediction error over the replay buffer; 0 when empty.
    pub fn buffer_mse(&self) -> f64 {
        if self.buffer.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .buffer
            .iter()
            .map(|(x, t)| {
                let e = self.net.forward1(x) - t;
                e * e
            })
            .sum();
        sum / self.buffer.len() as f64
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn snapshot(&self) -> Vec<f64> {
        self.net.params()
    }

    pub fn restore(&mut self, params: &[f64]) -> Result<(), EstimatorError> {
        self.net
            .set_params(params)
            .map_err(|expected| EstimatorError::ShapeMismatch { expected, got: params.len() })
    }

    pub fn save_to(&self, path: &Path) -> Result<(), EstimatorError> {
        write_snapshot(path, &self.snapshot())
    }

    pub fn load_from(&mut self, path: &Path) -> Result<(), EstimatorError> {
        let params = read_snapshot(path)?;
        self.restore(&params)
    }
}

fn step(
    net: &mut Mlp,
    grads: &mut Gradients,
    x: &[f64],
    target: f64,
    lr: f64,
    clip_norm: f64,
) -> f64 {
    let pred = net.forward1(x);
    let err = pred - target;
    grads.reset();
    net.backward(x, &[2.0 * err], grads);
    grads.clip(clip_norm);
    net.apply_gradients(grads, lr);
    err * err
}

/// Maps a feature bundle to a predicted relative gain.
///
/// Every feature in the universe owns a trainable embedding; a bundle is
/// represented by the arithmetic mean of its members' embeddings, so the
/// prediction cannot depend on listing order or duplicates. Updates flow
/// into both the regressor and the member embeddings (only the members).
pub struct BundleGainEstimator {
    embeddings: BTreeMap<FeatureId, Vec<f64>>,
    net: Mlp,
    grads: Gradients,
    params: EstimatorParams,
    buffer: Vec<(Vec<FeatureId>, f64)>,
    rng: ChaCha8Rng,
}

impl BundleGainEstimator {
    pub fn new(
        universe: impl IntoIterator<Item = FeatureId>,
        params: EstimatorParams,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&dims(params.embed_dim, &params.hidden), Activation::Tanh, true, &mut rng);
        let grads = net.zero_gradients();
        // small-variance init keeps early bundle representations near zero
        let embeddings = universe
            .into_iter()
            .map(|f| {
                let e: Vec<f64> =
                    (0..params.embed_dim).map(|_| 0.1 * (2.0 * rng.random::<f64>() - 1.0)).collect();
                (f, e)
            })
            .collect();
        Self { embeddings, net, grads, params, buffer: Vec::new(), rng }
    }

    pub fn embedding(&self, feature: &str) -> Option<&[f64]> {
        self.embeddings.get(feature).map(Vec::as_slice)
    }

    fn canonical(features: &[FeatureId]) -> Vec<FeatureId> {
        let mut key = features.to_vec();
        key.sort_unstable();
        key.dedup();
        key
    }

    fn mean_embedding(&self, members: &[FeatureId]) -> Result<Vec<f64>, EstimatorError> {
        let mut mean = vec![0.0; self.params.embed_dim];
        for f in members {
            let e = self
                .embeddings
                .get(f)
                .ok_or_else(|| EstimatorError::UnknownFeature(f.clone()))?;
            for (m, v) in mean.iter_mut().zip(e) {
                *m += v;
            }
        }
        let k = members.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        Ok(mean)
    }

    pub fn predict(&self, features: &[FeatureId]) -> Result<Gain, EstimatorError> {
        let members = Self::canonical(features);
        Ok(self.net.forward1(&self.mean_embedding(&members)?))
    }

    /// One gradient step on the squared error; returns the pre-step loss.
    pub fn update(&mut self, features: &[FeatureId], target: Gain) -> Result<f64, EstimatorError> {
        let members = Self::canonical(features);
        self.step_members(&members, target)
    }

    fn step_members(&mut self, members: &[FeatureId], target: f64) -> Result<f64, EstimatorError> {
        let mean = self.mean_embedding(members)?;
        let pred = self.net.forward1(&mean);
        let err = pred - target;
        self.grads.reset();
        let grad_in = self.net.backward(&mean, &[2.0 * err], &mut self.grads);

        // clip the regressor and embedding gradients as one parameter vector;
        // each of the k member embeddings receives grad_in / k
        let k = members.len().max(1) as f64;
        let emb_sq: f64 = grad_in.iter().map(|g| g * g).sum::<f64>() / k;
        let norm = (self.grads.squared_norm() + emb_sq).sqrt();
        let scale = if norm > self.params.clip_norm { self.params.clip_norm / norm } else { 1.0 };

        self.grads.scale(scale);
        self.net.apply_gradients(&self.grads, self.params.lr);
        let emb_step = self.params.lr * scale / k;
        for f in members {
            let e = self.embeddings.get_mut(f).expect("checked by mean_embedding");
            for (v, g) in e.iter_mut().zip(&grad_in) {
                *v -= emb_step * g;
            }
        }
        Ok(err * err)
    }

    /// Records a realized outcome and replays buffered samples; returns the
    /// buffer MSE after the updates.
    pub fn observe(&mut self, features: &[FeatureId], target: Gain) -> Result<f64, EstimatorError> {
        let members = Self::canonical(features);
        self.mean_embedding(&members)?; // validate before buffering
        self.buffer.push((members, target));
        for _ in 0..self.params.replay_steps {
            let at = self.rng.random_range(0..self.buffer.len());
            let (members, t) = self.buffer[at].clone();
            self.step_members(&members, t)?;
        }
        Ok(self.buffer_mse())
    }

    /// Mean squared prediction error over the replay buffer; 0 when empty.
    pub fn buffer_mse(&self) -> f64 {
        if self.buffer.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .buffer
            .iter()
            .map(|(members, t)| {
                let mean = self.mean_embedding(members).expect("buffered members embedded");
                let e = self.net.forward1(&mean) - t;
                e * e
            })
            .sum();
        sum / self.buffer.len() as f64
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Embeddings (in feature-id order) followed by regressor parameters.
    pub fn snapshot(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.embeddings.values().flatten().copied().collect();
        out.extend(self.net.params());
        out
    }

    pub fn restore(&mut self, params: &[f64]) -> Result<(), EstimatorError> {
        let emb_len = self.embeddings.len() * self.params.embed_dim;
        let expected = emb_len + self.net.param_count();
        if params.len() != expected {
            return Err(EstimatorError::ShapeMismatch { expected, got: params.len() });
        }
        for (e, chunk) in self.embeddings.values_mut().zip(params.chunks(self.params.embed_dim)) {
            e.copy_from_slice(chunk);
        }
        self.net.set_params(&params[emb_len..]).expect("length checked");
        Ok(())
    }

    pub fn save_to(&self, path: &Path) -> Result<(), EstimatorError> {
        write_snapshot(path, &self.snapshot())
    }

    pub fn load_from(&mut self, path: &Path) -> Result<(), EstimatorError> {
        let params = read_snapshot(path)?;
        self.restore(&params)
    }
}

fn write_snapshot(path: &Path, params: &[f64]) -> Result<(), EstimatorError> {
    let mut text = String::with_capacity(params.len() * 20);
    for v in params {
        text.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn read_snapshot(path: &Path) -> Result<Vec<f64>, EstimatorError> {
    std::fs::read_to_string(path)?
        .lines()
        .map(|l| l.trim().parse::<f64>().map_err(|e| EstimatorError::Parse(format!("{l:?}: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::QuotedPrice;

    fn quote(p: f64, base: f64, cap: f64) -> QuotedPrice {
        QuotedPrice::new(p, base, cap).unwrap()
    }

    fn est() -> PriceGainEstimator {
        PriceGainEstimator::new(10.0, 5.0, EstimatorParams::default(), 42)
    }

    #[test]
    fn untrained_estimator_predicts_zero() {
        let e = est();
        for q in [quote(1.0, 0.5, 2.0), quote(9.0, 0.0, 5.0), quote(0.1, 1.0, 1.0)] {
            assert_eq!(e.predict(&q), 0.0);
        }
    }

    #[test]
    fn prediction_is_deterministic() {
        let mut a = est();
        let mut b = est();
        let q = quote(2.0, 1.0, 3.0);
        for _ in 0..50 {
            a.update(&q, 0.3);
            b.update(&q, 0.3);
        }
        assert_eq!(a.predict(&q), a.predict(&q));
        assert_eq!(a.predict(&q), b.predict(&q));
    }

    #[test]
    fn exact_prediction_gives_zero_loss_and_no_movement() {
        let mut e = est();
        let q = quote(1.0, 0.5, 2.0);
        let before = e.snapshot();
        let loss = e.update(&q, 0.0); // untrained prediction is exactly 0
        assert_eq!(loss, 0.0);
        assert_eq!(e.snapshot(), before);
    }

    #[test]
    fn repeated_updates_converge_to_target() {
        let mut e = est();
        let q = quote(3.0, 1.0, 2.5);
        let mut prev = f64::INFINITY;
        let mut losses = Vec::new();
        for _ in 0..500 {
            losses.push(e.update(&q, 0.1));
        }
        assert!((e.predict(&q) - 0.1).abs() < 1e-2, "got {}", e.predict(&q));
        for (i, &l) in losses.iter().enumerate().skip(50) {
            assert!(l <= prev + 1e-12, "loss rose at step {i}");
            prev = l;
        }
    }

    #[test]
    fn update_step_matches_finite_difference_gradient() {
        let mut e = est();
        let q = quote(2.0, 0.7, 1.9);
        // a couple of warm-up steps so we are not at the zero-output point
        e.update(&q, 0.4);
        e.update(&q, 0.4);
        let theta = e.snapshot();
        let x = e.encode(&q);
        let loss_at = |e: &mut PriceGainEstimator, params: &[f64]| -> f64 {
            e.restore(params).unwrap();
            let d = e.net.forward1(&x) - 0.4;
            d * d
        };
        e.restore(&theta).unwrap();
        e.update(&q, 0.4);
        let after = e.snapshot();
        let h = 1e-5;
        for idx in [0usize, 7, 63, theta.len() - 1] {
            let mut plus = theta.clone();
            plus[idx] += h;
            let mut minus = theta.clone();
            minus[idx] -= h;
            let fd = (loss_at(&mut e, &plus) - loss_at(&mut e, &minus)) / (2.0 * h);
            let step = (theta[idx] - after[idx]) / 1e-2; // lr
            assert!(
                (fd - step).abs() <= 1e-4 * fd.abs().max(1.0),
                "param {idx}: fd {fd} vs step {step}"
            );
        }
    }

    #[test]
    fn huge_targets_stay_finite_under_clipping() {
        let mut e = est();
        let q = quote(5.0, 2.0, 4.0);
        for _ in 0..200 {
            e.update(&q, 1e6);
        }
        assert!(e.snapshot().iter().all(|v| v.is_finite()));
        assert!(e.predict(&q).is_finite());
    }

    #[test]
    fn buffer_mse_drops_on_a_stationary_rule() {
        let mut e = est();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut mse_at = Vec::new();
        for _ in 0..100 {
            let p = 1.0 + 9.0 * rng.random::<f64>();
            let base = 2.0 * rng.random::<f64>();
            let cap = base + 3.0 * rng.random::<f64>();
            let q = quote(p, base, cap);
            let truth = 0.1 + 0.2 * (p / 10.0) - 0.1 * (cap / 5.0);
            mse_at.push(e.observe(&q, truth));
        }
        assert!(
            mse_at[99] < mse_at[4],
            "mse at round 100 ({}) should beat round 5 ({})",
            mse_at[99],
            mse_at[4]
        );
    }

    fn feats(names: &[&str]) -> Vec<FeatureId> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn bundle_est() -> BundleGainEstimator {
        BundleGainEstimator::new(feats(&["a", "b", "c", "d"]), EstimatorParams::default(), 7)
    }

    #[test]
    fn bundle_prediction_ignores_order_and_duplicates() {
        let mut e = bundle_est();
        for _ in 0..30 {
            e.update(&feats(&["a", "b"]), 0.2).unwrap();
        }
        let ab = e.predict(&feats(&["a", "b"])).unwrap();
        let ba = e.predict(&feats(&["b", "a"])).unwrap();
        let abb = e.predict(&feats(&["a", "b", "b"])).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab, abb);
        assert!(matches!(
            e.predict(&feats(&["zz"])),
            Err(EstimatorError::UnknownFeature(_))
        ));
    }

    #[test]
    fn untrained_bundle_estimator_predicts_zero() {
        let e = bundle_est();
        assert_eq!(e.predict(&feats(&["a"])).unwrap(), 0.0);
        assert_eq!(e.predict(&feats(&["a", "b", "c", "d"])).unwrap(), 0.0);
    }

    #[test]
    fn absent_features_keep_their_embeddings() {
        let mut e = bundle_est();
        let d_before = e.embedding("d").unwrap().to_vec();
        let a_before = e.embedding("a").unwrap().to_vec();
        for _ in 0..20 {
            e.update(&feats(&["a", "b"]), 0.5).unwrap();
        }
        assert_eq!(e.embedding("d").unwrap(), d_before.as_slice());
        assert_ne!(e.embedding("a").unwrap(), a_before.as_slice());
    }

    #[test]
    fn bundle_updates_converge_to_target() {
        let mut e = bundle_est();
        let f = feats(&["b", "c"]);
        for _ in 0..500 {
            e.update(&f, 0.1).unwrap();
        }
        let got = e.predict(&f).unwrap();
        assert!((got - 0.1).abs() < 1e-2, "got {got}");
    }

    #[test]
    fn bundle_buffer_mse_drops_on_a_stationary_rule() {
        let universe = feats(&["a", "b", "c", "d", "e", "f"]);
        let mut e = BundleGainEstimator::new(universe.clone(), EstimatorParams::default(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w = [0.05, 0.1, 0.02, 0.08, 0.12, 0.04];
        let mut mse_at = Vec::new();
        for _ in 0..100 {
            let members: Vec<FeatureId> = universe
                .iter()
                .enumerate()
                .filter(|_| rng.random::<f64>() < 0.5)
                .map(|(_, f)| f.clone())
                .collect();
            if members.is_empty() {
                mse_at.push(*mse_at.last().unwrap_or(&f64::INFINITY));
                continue;
            }
            let total: f64 = members
                .iter()
                .map(|f| w[universe.iter().position(|u| u == f).unwrap()])
                .sum();
            let truth = 0.4 * (1.0 - (-3.0 * total).exp());
            mse_at.push(e.observe(&members, truth).unwrap());
        }
        assert!(
            mse_at[99] < mse_at[4],
            "mse at round 100 ({}) should beat round 5 ({})",
            mse_at[99],
            mse_at[4]
        );
    }

    #[test]
    fn snapshots_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = bundle_est();
        for _ in 0..10 {
            e.update(&feats(&["a", "c"]), 0.3).unwrap();
        }
        let path = dir.path().join("g.params");
        e.save_to(&path).unwrap();
        let pred = e.predict(&feats(&["a", "c"])).unwrap();

        let mut fresh = bundle_est();
        assert_ne!(fresh.predict(&feats(&["a", "c"])).unwrap(), pred);
        fresh.load_from(&path).unwrap();
        assert_eq!(fresh.predict(&feats(&["a", "c"])).unwrap(), pred);

        let mut small = BundleGainEstimator::new(feats(&["a"]), EstimatorParams::default(), 7);
        assert!(matches!(
            small.load_from(&path),
            Err(EstimatorError::ShapeMismatch { .. })
        ));
    }
}
