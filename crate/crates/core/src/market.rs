//! Market primitives: quotes, reserved prices, bundle catalogs, buyer
//! economics, bargaining costs and decision tolerances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{math, BundleId, FeatureId, Gain, Money, Round};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("unit price must be positive, got {0}")]
    NonPositiveUnitPrice(Money),
    #[error("negative price {0}")]
    NegativePrice(Money),
    #[error("payment cap {cap} is below base payment {base}")]
    CapBelowBase { base: Money, cap: Money },
    #[error("unit value {unit_value} must exceed unit price {p} for a breakeven gain")]
    UnitValueNotAboveUnitPrice { unit_value: Money, p: Money },
    #[error("unit value and budget must be positive")]
    BadEconomics,
    #[error("negative cost parameter {0}")]
    NegativeCost(f64),
    #[error("exponential cost base must be at least 1, got {0}")]
    DecreasingCost(f64),
    #[error("cost scale must be positive, got {0}")]
    BadCostScale(f64),
    #[error("negative tolerance {0}")]
    NegativeTolerance(f64),
    #[error("bundle {0:?} has no features")]
    EmptyBundle(String),
    #[error("bundle id {0:?} is empty or contains whitespace, quotes or commas")]
    BadBundleId(String),
    #[error("duplicate bundle id {0:?}")]
    DuplicateBundleId(String),
    #[error("catalog has no entries")]
    EmptyCatalog,
    #[error("no known gain for catalog bundle {0:?}")]
    MissingKnownGain(String),
    #[error("target gain must be positive and finite, got {0}")]
    BadTargetGain(f64),
    #[error("candidate count must be positive")]
    BadSampleCount,
    #[error("quote sampling range is empty, negative or out of order")]
    BadQuoteRange,
    #[error("no initial quote fits the unit-value and budget limits")]
    InfeasibleInitialQuote,
    #[error("quote space exhausted: the previous quote sits at the price ceilings")]
    QuoteSpaceExhausted,
    #[error("no valid quote candidate was sampled")]
    EmptyCandidateSet,
    #[error("growth factor must exceed 1, got {0}")]
    BadGrowthFactor(f64),
    #[error("quote violates the unit-value or budget limit")]
    InadmissibleQuote,
}

fn ensure_finite(v: f64) -> Result<f64, MarketError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(MarketError::NonFinite(v))
    }
}

/// Buyer's price quote: per-unit gain price `p`, guaranteed base payment `P0`
/// and payment cap `Ph`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuotedPrice {
    pub p: Money,
    #[serde(rename = "P0")]
    pub base: Money,
    #[serde(rename = "Ph")]
    pub cap: Money,
}

impl QuotedPrice {
    pub fn new(p: Money, base: Money, cap: Money) -> Result<Self, MarketError> {
        ensure_finite(p)?;
        ensure_finite(base)?;
        ensure_finite(cap)?;
        if p <= 0.0 {
            return Err(MarketError::NonPositiveUnitPrice(p));
        }
        if base < 0.0 {
            return Err(MarketError::NegativePrice(base));
        }
        if cap < base {
            return Err(MarketError::CapBelowBase { base, cap });
        }
        Ok(Self { p, base, cap })
    }

    /// Builds the quote whose implied [`target_gain`](Self::target_gain) is
    /// `gain`, i.e. `Ph = P0 + p * gain`.
    ///
    /// Rounding of the cap can land the implied target a few ulps under the
    /// request, which would hide an exact-gain bundle from the seller's
    /// search; the cap is nudged upward until the target is at least `gain`.
    pub fn for_target(p: Money, base: Money, gain: Gain) -> Result<Self, MarketError> {
        ensure_finite(gain)?;
        let mut cap = ensure_finite(base + p * gain)?;
        for _ in 0..4 {
            if gain <= 0.0 || math::target_gain(p, base, cap) >= gain {
                break;
            }
            cap = cap.next_up();
        }
        Self::new(p, base, cap)
    }

    /// Settled payment for a realized gain.
    pub fn payment(&self, gain: Gain) -> Money {
        math::payment(self.p, self.base, self.cap, gain)
    }

    /// Gain at which the payment rule saturates the cap.
    pub fn target_gain(&self) -> Gain {
        math::target_gain(self.p, self.base, self.cap)
    }

    /// Seller's distance from the best obtainable payment.
    pub fn settlement_gap(&self, gain: Gain) -> Money {
        math::data_objective_gap(self.p, self.base, self.cap, gain)
    }
}

/// Seller's private floor for a bundle: minimum unit price and minimum base
/// payment a quote must meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservedPrice {
    pub p: Money,
    #[serde(rename = "P")]
    pub base: Money,
}

impl ReservedPrice {
    pub fn new(p: Money, base: Money) -> Result<Self, MarketError> {
        ensure_finite(p)?;
        ensure_finite(base)?;
        if p < 0.0 {
            return Err(MarketError::NegativePrice(p));
        }
        if base < 0.0 {
            return Err(MarketError::NegativePrice(base));
        }
        Ok(Self { p, base })
    }

    /// A quote affords this bundle when it meets both floors.
    pub fn met_by(&self, q: &QuotedPrice) -> bool {
        self.p <= q.p && self.base <= q.base
    }
}

/// A sellable combination of seller-side features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub id: BundleId,
    pub features: Vec<FeatureId>,
}

impl FeatureBundle {
    pub fn new(id: impl Into<BundleId>, features: Vec<FeatureId>) -> Result<Self, MarketError> {
        let id = id.into();
        validate_bundle_id(&id)?;
        if features.is_empty() {
            return Err(MarketError::EmptyBundle(id));
        }
        Ok(Self { id, features })
    }
}

// ids travel through the space-delimited wire format and comma-separated
// result tables, so keep them to printable tokens
fn validate_bundle_id(id: &str) -> Result<(), MarketError> {
    let ok = !id.is_empty()
        && id != crate::NO_OFFER_ID
        && !id.chars().any(|c| c.is_whitespace() || c == '"' || c == ',');
    if ok {
        Ok(())
    } else {
        Err(MarketError::BadBundleId(id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub bundle: FeatureBundle,
    pub reserved: ReservedPrice,
}

/// The seller's full offering, order-preserving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleCatalog {
    entries: Vec<CatalogEntry>,
}

impl BundleCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, MarketError> {
        if entries.is_empty() {
            return Err(MarketError::EmptyCatalog);
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            validate_bundle_id(&e.bundle.id)?;
            if e.bundle.features.is_empty() {
                return Err(MarketError::EmptyBundle(e.bundle.id.clone()));
            }
            if !seen.insert(e.bundle.id.as_str()) {
                return Err(MarketError::DuplicateBundleId(e.bundle.id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.bundle.id == id)
    }

    /// Entries whose reserved price the quote meets, in catalog order.
    pub fn affordable(&self, q: &QuotedPrice) -> Vec<&CatalogEntry> {
        self.entries.iter().filter(|e| e.reserved.met_by(q)).collect()
    }
}

/// Buyer-side economics: value of one unit of gain and the payment budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskEconomics {
    pub unit_value: Money,
    pub budget: Money,
}

impl TaskEconomics {
    pub fn new(unit_value: Money, budget: Money) -> Result<Self, MarketError> {
        ensure_finite(unit_value)?;
        ensure_finite(budget)?;
        if unit_value <= 0.0 || budget <= 0.0 {
            return Err(MarketError::BadEconomics);
        }
        Ok(Self { unit_value, budget })
    }

    /// Quotes the buyer may issue: unit price below the unit value, cap within budget.
    pub fn admits(&self, q: &QuotedPrice) -> bool {
        q.p < self.unit_value && q.cap <= self.budget
    }

    /// Buyer's net profit before bargaining costs.
    pub fn net_profit(&self, q: &QuotedPrice, gain: Gain) -> Money {
        math::task_net_profit(self.unit_value, gain, q.payment(gain))
    }

    /// Smallest gain with non-negative net profit in the linear payment region.
    pub fn breakeven_gain(&self, q: &QuotedPrice) -> Result<Gain, MarketError> {
        math::breakeven_gain(self.unit_value, q.p, q.base).ok_or(
            MarketError::UnitValueNotAboveUnitPrice {
                unit_value: self.unit_value,
                p: q.p,
            },
        )
    }
}

/// How a party's cumulative bargaining cost depends on the round count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    None,
    Constant { c: f64 },
    Linear { a: f64 },
    Exponential { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(flatten)]
    pub kind: CostKind,
    pub scale: f64,
}

impl CostModel {
    pub fn new(kind: CostKind, scale: f64) -> Result<Self, MarketError> {
        ensure_finite(scale)?;
        if scale <= 0.0 {
            return Err(MarketError::BadCostScale(scale));
        }
        match kind {
            CostKind::None => {}
            CostKind::Constant { c } => {
                ensure_finite(c)?;
                if c < 0.0 {
                    return Err(MarketError::NegativeCost(c));
                }
            }
            CostKind::Linear { a } => {
                ensure_finite(a)?;
                if a < 0.0 {
                    return Err(MarketError::NegativeCost(a));
                }
            }
            // a < 1 would shrink with T, violating the non-decreasing contract
            CostKind::Exponential { a } => {
                ensure_finite(a)?;
                if a < 1.0 {
                    return Err(MarketError::DecreasingCost(a));
                }
            }
        }
        Ok(Self { kind, scale })
    }

    pub fn free() -> Self {
        Self { kind: CostKind::None, scale: 1.0 }
    }

    pub fn is_free(&self) -> bool {
        matches!(self.kind, CostKind::None)
    }

    /// Cumulative cost of having bargained for `round` rounds.
    pub fn eval(&self, round: Round) -> Money {
        let raw = match self.kind {
            CostKind::None => 0.0,
            CostKind::Constant { c } => c,
            CostKind::Linear { a } => a * f64::from(round),
            CostKind::Exponential { a } => a.powi(round as i32),
        };
        raw * self.scale
    }

    /// Revenue left after this party's bargaining cost at `round`.
    pub fn net(&self, base_revenue: Money, round: Round) -> Money {
        base_revenue - self.eval(round)
    }
}

/// Acceptance slacks for both parties, with and without bargaining costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Seller's slack on the gap between target and offered gain.
    pub eps_d: f64,
    /// Buyer's slack on realized gain against the quote target.
    pub eps_t: f64,
    /// Seller's slack in the cost-aware acceptance comparison.
    pub eps_dc: f64,
    /// Buyer's slack in the cost-aware acceptance comparison.
    pub eps_tc: f64,
}

impl Tolerances {
    pub fn new(eps_d: f64, eps_t: f64, eps_dc: f64, eps_tc: f64) -> Result<Self, MarketError> {
        for v in [eps_d, eps_t, eps_dc, eps_tc] {
            ensure_finite(v)?;
            if v < 0.0 {
                return Err(MarketError::NegativeTolerance(v));
            }
        }
        Ok(Self { eps_d, eps_t, eps_dc, eps_tc })
    }

    pub fn uniform(eps: f64) -> Result<Self, MarketError> {
        Self::new(eps, eps, eps, eps)
    }
}
