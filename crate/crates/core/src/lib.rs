//! Bilateral bargaining over machine-learning feature bundles.
//!
//! A buyer (the "task party") owns a prediction task and quotes prices for
//! model-performance gain; a seller (the "data party") owns feature bundles
//! with private reserved prices and answers those quotes. The crate provides
//! the pricing math, buyer/seller strategies under full and partial
//! information, gain oracles (synthetic rules and a small vertical federated
//! learning stack trained from scratch), a line-delimited message protocol
//! with in-memory and TCP transports, brute-force equilibrium verifiers, and
//! a batch experiment harness.

pub mod baselines;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod estimator;
pub mod fixtures;
pub mod harness;
pub mod learner;
pub mod market;
pub mod math;
pub mod nn;
pub mod oracle;
pub mod scalar;
pub mod strategy;
pub mod transport;
pub mod verifier;
pub mod wire;

/// Monetary amounts (prices, payments, profits).
pub type Money = f64;
/// Relative model-performance improvement delivered by a bundle.
pub type Gain = f64;
/// 1-based bargaining round counter.
pub type Round = u32;
/// Identifier of a feature bundle within a catalog.
pub type BundleId = String;
/// Identifier of a single seller-side feature.
pub type FeatureId = String;

/// Wire-level sentinel for "no bundle to offer"; catalog ids must not collide.
pub const NO_OFFER_ID: &str = "-";

pub use market::{
    BundleCatalog, CatalogEntry, CostKind, CostModel, FeatureBundle, MarketError, QuotedPrice,
    ReservedPrice, TaskEconomics, Tolerances,
};
pub use scalar::Real;
