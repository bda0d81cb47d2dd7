//! Non-strategic reference agents: a buyer that escalates every price
//! component geometrically, and a seller that offers a uniformly random
//! affordable bundle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market::{BundleCatalog, MarketError, QuotedPrice, TaskEconomics};
use crate::strategy::{CaseId, Decision};

/// Buyer requote rule that multiplies `p`, `P0` and `Ph` by a fixed growth
/// factor each round, saturating at the unit value and the budget.
///
/// Unlike the strategic buyer it makes no attempt to keep the implied
/// target gain stable; once a component hits its ceiling the target drifts.
#[derive(Debug, Clone)]
pub struct IncreasePriceState {
    econ: TaskEconomics,
    growth: f64,
    current: QuotedPrice,
}

impl IncreasePriceState {
    /// `growth` must be finite and greater than 1.
    pub fn new(
        econ: TaskEconomics,
        growth: f64,
        initial: QuotedPrice,
    ) -> Result<Self, MarketError> {
        if !growth.is_finite() || growth <= 1.0 {
            return Err(MarketError::BadGrowthFactor(growth));
        }
        Ok(Self { econ, growth, current: initial })
    }

    pub fn current_quote(&self) -> &QuotedPrice {
        &self.current
    }

    /// Scales every component by the growth factor, clamping `p` to the
    /// unit value and `P0`, `Ph` to the budget. Fails once the previous
    /// quote already sits at all three ceilings.
    pub fn requote(&mut self) -> Result<QuotedPrice, MarketError> {
        let next = QuotedPrice::new(
            (self.current.p * self.growth).min(self.econ.unit_value),
            (self.current.base * self.growth).min(self.econ.budget),
            (self.current.cap * self.growth).min(self.econ.budget),
        )?;
        if next == self.current {
            return Err(MarketError::QuoteSpaceExhausted);
        }
        self.current = next;
        Ok(next)
    }
}

/// Seller that offers a uniformly random affordable bundle. It never
/// accepts on its own; only the buyer's verdicts end the session.
#[derive(Debug, Clone)]
pub struct RandomBundleState {
    rng: ChaCha8Rng,
}

impl RandomBundleState {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform draw over the bundles whose reserved price the quote meets.
    /// An empty affordable set is a seller-side breakdown.
    pub fn offer(&mut self, catalog: &BundleCatalog, quote: &QuotedPrice) -> Decision {
        let affordable = catalog.affordable(quote);
        if affordable.is_empty() {
            return Decision::BreakdownFail {
                case: CaseId::NoAffordable,
                reason: "no catalog bundle is affordable at this quote".into(),
            };
        }
        let pick = self.rng.random_range(0..affordable.len());
        Decision::ContinueWithBundle(affordable[pick].bundle.id.clone())
    }
}
