//! Sources of the relative performance gain a feature bundle delivers.
//!
//! The simulator treats gain measurement as a black box behind [`GainOracle`]:
//! synthetic oracles answer from a lookup table or a closed-form rule, the
//! VFL oracle trains a classifier on the task party's features plus the
//! offered bundle and compares held-out accuracy against the task-only model.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::learner::{self, LearnerParams, Matrix};
use crate::market::FeatureBundle;
use crate::Gain;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("bundle {0:?} not in gain table")]
    UnknownBundle(String),
    #[error("feature {0:?} not in the data party's universe")]
    UnknownFeature(String),
    #[error("baseline performance is zero; relative gain undefined")]
    DegenerateBaseline,
    #[error("need at least {0} rows")]
    TooFewRows(usize),
}

/// Measures the relative gain `(M - M0) / M0` of adding a bundle, where `M0`
/// is the task party's standalone performance. Implementations must be
/// deterministic: repeated calls with the same bundle return the same value.
pub trait GainOracle {
    /// Standalone performance `M0`. Computed once and cached.
    fn baseline(&mut self) -> Result<f64, OracleError>;
    /// Relative gain of `bundle` over the baseline.
    fn gain(&mut self, bundle: &FeatureBundle) -> Result<Gain, OracleError>;
}

enum SyntheticRule {
    /// Direct bundle-id -> gain lookup.
    Table(BTreeMap<String, Gain>),
    /// `gmax * (1 - exp(-sum of feature weights))`; monotone in bundle
    /// contents with diminishing returns, capped at `gmax`.
    Parametric { gmax: f64, weights: BTreeMap<String, f64> },
}

/// Closed-form oracle for tests and cheap experiments.
pub struct SyntheticOracle {
    rule: SyntheticRule,
    baseline: f64,
}

impl SyntheticOracle {
    pub fn table(gains: BTreeMap<String, Gain>) -> Self {
        Self { rule: SyntheticRule::Table(gains), baseline: 1.0 }
    }

    pub fn parametric(gmax: f64, weights: BTreeMap<String, f64>) -> Self {
        Self { rule: SyntheticRule::Parametric { gmax, weights }, baseline: 1.0 }
    }

    /// Overrides the nominal baseline reported by [`GainOracle::baseline`].
    pub fn with_baseline(mut self, m0: f64) -> Self {
        self.baseline = m0;
        self
    }
}

impl GainOracle for SyntheticOracle {
    fn baseline(&mut self) -> Result<f64, OracleError> {
        Ok(self.baseline)
    }

    fn gain(&mut self, bundle: &FeatureBundle) -> Result<Gain, OracleError> {
        match &self.rule {
            SyntheticRule::Table(gains) => gains
                .get(&bundle.id)
                .copied()
                .ok_or_else(|| OracleError::UnknownBundle(bundle.id.clone())),
            SyntheticRule::Parametric { gmax, weights } => {
                let mut total = 0.0;
                for f in &bundle.features {
                    total += weights
                        .get(f)
                        .ok_or_else(|| OracleError::UnknownFeature(f.clone()))?;
                }
                Ok(gmax * (1.0 - (-total).exp()))
            }
        }
    }
}

/// Gain measured by actually training on the vertically split dataset.
///
/// A bundle names original data-party features; each brings its whole
/// indicator group. Results are memoized per feature set because training
/// dominates the cost of a bargaining session.
pub struct VflOracle {
    dataset: Dataset,
    params: LearnerParams,
    seed: u64,
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
    m0: Option<f64>,
    memo: BTreeMap<Vec<String>, Gain>,
}

impl VflOracle {
    pub fn new(dataset: Dataset, params: LearnerParams, seed: u64) -> Result<Self, OracleError> {
        if dataset.n_rows < 10 {
            return Err(OracleError::TooFewRows(10));
        }
        let (train_rows, test_rows) = learner::holdout_split(dataset.n_rows, 0.8, seed);
        Ok(Self {
            dataset,
            params,
            seed,
            train_rows,
            test_rows,
            m0: None,
            memo: BTreeMap::new(),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    /// Accuracy of a model trained on the task block plus the given
    /// data-block columns.
    fn accuracy_with(&self, data_cols: &[usize], model_seed: u64) -> f64 {
        let dt = self.dataset.task.width();
        let d = dt + data_cols.len();
        let pack = |rows: &[usize]| -> (Vec<f64>, Vec<u8>) {
            let mut xs = Vec::with_capacity(rows.len() * d);
            let mut ys = Vec::with_capacity(rows.len());
            for &i in rows {
                xs.extend_from_slice(self.dataset.task.row(i));
                let dr = self.dataset.data.row(i);
                xs.extend(data_cols.iter().map(|&c| dr[c]));
                ys.push(self.dataset.labels[i]);
            }
            (xs, ys)
        };
        let (txs, tys) = pack(&self.train_rows);
        let model = learner::train(
            Matrix::new(&txs, self.train_rows.len(), d),
            &tys,
            &self.params,
            model_seed,
        );
        let (exs, eys) = pack(&self.test_rows);
        learner::accuracy(&model, Matrix::new(&exs, self.test_rows.len(), d), &eys)
    }

    fn resolve_columns(&self, names: &[String]) -> Result<Vec<usize>, OracleError> {
        let mut cols = Vec::new();
        for name in names {
            let group = self
                .dataset
                .data
                .group(name)
                .ok_or_else(|| OracleError::UnknownFeature(name.clone()))?;
            cols.extend(group.cols.clone());
        }
        cols.sort_unstable();
        cols.dedup();
        Ok(cols)
    }
}

fn fnv1a(parts: &[String]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0x1f)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

impl GainOracle for VflOracle {
    fn baseline(&mut self) -> Result<f64, OracleError> {
        if let Some(m0) = self.m0 {
            return Ok(m0);
        }
        let m0 = self.accuracy_with(&[], self.seed ^ fnv1a(&[]));
        if m0 <= 0.0 {
            return Err(OracleError::DegenerateBaseline);
        }
        self.m0 = Some(m0);
        Ok(m0)
    }

    fn gain(&mut self, bundle: &FeatureBundle) -> Result<Gain, OracleError> {
        let mut key: Vec<String> = bundle.features.iter().cloned().collect();
        key.sort_unstable();
        key.dedup();
        if let Some(&g) = self.memo.get(&key) {
            return Ok(g);
        }
        let cols = self.resolve_columns(&key)?;
        let m0 = self.baseline()?;
        let m = self.accuracy_with(&cols, self.seed ^ fnv1a(&key));
        let g = (m - m0) / m0;
        self.memo.insert(key, g);
        Ok(g)
    }
}
