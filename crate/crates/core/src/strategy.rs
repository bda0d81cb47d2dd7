//! Party decision logic: quote generation, bundle selection and every
//! termination rule, for both full-information and estimated-gain bargaining,
//! with optional per-round bargaining costs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::market::{
    BundleCatalog, CatalogEntry, CostModel, FeatureBundle, MarketError, QuotedPrice,
    ReservedPrice, TaskEconomics, Tolerances,
};
use crate::{math, BundleId, Gain, Round};

/// Which termination or continuation rule fired. Numeric codes are the
/// full-information cases, roman codes the estimated-gain cases; the last
/// three come from the session runner rather than a party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CaseId {
    /// Seller finds no affordable bundle.
    NoAffordable,
    /// Seller accepts: offered gain is within tolerance of the target.
    DataAccept,
    /// Seller counters with the nearest bundle below the target.
    DataCounter,
    /// Buyer quits: realized gain cannot repay the guaranteed payment.
    TaskLoss,
    /// Buyer accepts: realized gain reaches the target within tolerance.
    TaskAccept,
    /// Buyer counters with a higher quote.
    TaskCounter,
    /// Seller finds no affordable bundle after exploration ended.
    NoAffordableImperfect,
    /// Seller accepts on predicted gains.
    DataAcceptImperfect,
    /// Seller counters on predicted gains.
    DataCounterImperfect,
    /// Buyer quits on a realized loss after exploration ended.
    TaskLossImperfect,
    /// Buyer accepts on realized gain.
    TaskAcceptImperfect,
    /// Buyer counters with a fresh estimated quote.
    TaskCounterImperfect,
    /// Exploration phase suppressed a termination.
    Exploring,
    /// Quote sampling space is exhausted at the price ceilings.
    Exhausted,
    /// Round limit reached.
    MaxRounds,
    /// Transport failure ended the session.
    Transport,
}

impl CaseId {
    pub fn code(self) -> &'static str {
        match self {
            CaseId::NoAffordable => "1",
            CaseId::DataAccept => "2",
            CaseId::DataCounter => "3",
            CaseId::TaskLoss => "4",
            CaseId::TaskAccept => "5",
            CaseId::TaskCounter => "6",
            CaseId::NoAffordableImperfect => "I",
            CaseId::DataAcceptImperfect => "II",
            CaseId::DataCounterImperfect => "III",
            CaseId::TaskLossImperfect => "IV",
            CaseId::TaskAcceptImperfect => "V",
            CaseId::TaskCounterImperfect => "VI",
            CaseId::Exploring => "VII",
            CaseId::Exhausted => "exhausted",
            CaseId::MaxRounds => "max_rounds",
            CaseId::Transport => "transport",
        }
    }

    pub const ALL: [CaseId; 16] = [
        CaseId::NoAffordable,
        CaseId::DataAccept,
        CaseId::DataCounter,
        CaseId::TaskLoss,
        CaseId::TaskAccept,
        CaseId::TaskCounter,
        CaseId::NoAffordableImperfect,
        CaseId::DataAcceptImperfect,
        CaseId::DataCounterImperfect,
        CaseId::TaskLossImperfect,
        CaseId::TaskAcceptImperfect,
        CaseId::TaskCounterImperfect,
        CaseId::Exploring,
        CaseId::Exhausted,
        CaseId::MaxRounds,
        CaseId::Transport,
    ];
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for CaseId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CaseId::ALL
            .iter()
            .copied()
            .find(|c| c.code() == s)
            .ok_or_else(|| format!("unknown case code {s:?}"))
    }
}

/// Outcome of one party's turn.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// Buyer stays in with a new quote.
    ContinueWithQuote(QuotedPrice),
    /// Seller stays in and offers this bundle for the next evaluation.
    ContinueWithBundle(BundleId),
    /// Stay in without a payload; the counterparty moves next.
    Continue,
    /// Deal agreed. The seller reports which bundle it commits to sell;
    /// the buyer's acceptance carries no bundle.
    AcceptSuccess { bundle: Option<BundleId> },
    /// Bargaining ends without a deal.
    BreakdownFail { case: CaseId, reason: String },
}

/// Buyer's judgement of a realized gain, before any requote is attempted.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskVerdict {
    /// The gain cannot repay the guaranteed payment.
    Loss { reason: String },
    Accept,
    Continue,
}

/// Slack on the overshoot boundary of bundle selection. Quote targets carry
/// rounding from repeated arithmetic (a geometric requote chain drifts by a
/// few ulps), so a bundle whose gain exceeds the target by at most this much
/// still counts as conforming rather than overshooting.
const CONFORMITY_SLACK: f64 = 1e-12;

/// Absolute sampling intervals for the opening quote.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuoteRanges {
    pub p: (f64, f64),
    pub base: (f64, f64),
}

impl QuoteRanges {
    /// Opening ranges that leave bargaining headroom toward the ceilings.
    pub fn defaults(econ: &TaskEconomics) -> Self {
        Self {
            p: (0.1 * econ.unit_value, 0.3 * econ.unit_value),
            base: (0.05 * econ.budget, 0.2 * econ.budget),
        }
    }

    fn validate(&self) -> Result<(), MarketError> {
        let ok = self.p.0 > 0.0
            && self.p.0 <= self.p.1
            && self.base.0 >= 0.0
            && self.base.0 <= self.base.1
            && self.p.1.is_finite()
            && self.base.1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(MarketError::BadQuoteRange)
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    range.0 + (range.1 - range.0) * rng.random::<f64>()
}

/// Uniform draw from (0, 1]; keeps sampled prices strictly above the floor.
fn gt0(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Candidate preference shared by all quote searches: cheaper cap first,
/// then cheaper unit price.
fn prefer_quote(a: &QuotedPrice, b: &QuotedPrice) -> bool {
    a.cap < b.cap || (a.cap == b.cap && a.p < b.p)
}

/// Buyer-side bargaining state.
#[derive(Debug, Clone)]
pub struct TaskState {
    pub econ: TaskEconomics,
    pub target: Gain,
    pub tol: Tolerances,
    pub cost: CostModel,
    pub sample_count: usize,
    pub ranges: QuoteRanges,
    current_quote: Option<QuotedPrice>,
    rng: ChaCha8Rng,
}

impl TaskState {
    pub fn new(
        econ: TaskEconomics,
        target: Gain,
        tol: Tolerances,
        cost: CostModel,
        seed: u64,
    ) -> Result<Self, MarketError> {
        if !(target.is_finite() && target > 0.0) {
            return Err(MarketError::BadTargetGain(target));
        }
        Ok(Self {
            econ,
            target,
            tol,
            cost,
            sample_count: 64,
            ranges: QuoteRanges::defaults(&econ),
            current_quote: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_ranges(mut self, ranges: QuoteRanges) -> Result<Self, MarketError> {
        ranges.validate()?;
        self.ranges = ranges;
        Ok(self)
    }

    pub fn with_sample_count(mut self, n: usize) -> Result<Self, MarketError> {
        if n == 0 {
            return Err(MarketError::BadSampleCount);
        }
        self.sample_count = n;
        Ok(self)
    }

    pub fn current_quote(&self) -> Option<QuotedPrice> {
        self.current_quote
    }

    /// Installs an externally chosen opening quote instead of drawing one.
    pub fn install_quote(&mut self, q: QuotedPrice) -> Result<(), MarketError> {
        if !self.econ.admits(&q) {
            return Err(MarketError::InadmissibleQuote);
        }
        self.current_quote = Some(q);
        Ok(())
    }

    fn active_quote(&self) -> QuotedPrice {
        self.current_quote.expect("no quote has been issued yet")
    }

    /// Draws the opening quote from the configured ranges; the cap follows
    /// from the target-gain rule.
    pub fn initial_quote(&mut self) -> Result<QuotedPrice, MarketError> {
        self.ranges.validate()?;
        for _ in 0..1024 {
            let p = draw(&mut self.rng, self.ranges.p);
            let base = draw(&mut self.rng, self.ranges.base);
            let Ok(q) = QuotedPrice::for_target(p, base, self.target) else { continue };
            if self.econ.admits(&q) {
                self.current_quote = Some(q);
                return Ok(q);
            }
        }
        Err(MarketError::InfeasibleInitialQuote)
    }

    /// Samples a batch of strictly sweeter quotes above the current one and
    /// keeps the cheapest by cap. The unit price and cap both rise, the base
    /// payment never falls, and the target gain is preserved.
    pub fn requote(&mut self) -> Result<QuotedPrice, MarketError> {
        let prev = self.active_quote();
        let (u, b) = (self.econ.unit_value, self.econ.budget);
        if prev.p >= u || prev.cap >= b {
            return Err(MarketError::QuoteSpaceExhausted);
        }
        for _ in 0..16 {
            let mut best: Option<QuotedPrice> = None;
            for _ in 0..self.sample_count {
                let p = prev.p + (u - prev.p) * gt0(&mut self.rng);
                let cap = prev.cap + (b - prev.cap) * gt0(&mut self.rng);
                let base = cap - p * self.target;
                if base < prev.base {
                    continue;
                }
                let Ok(q) = QuotedPrice::for_target(p, base, self.target) else { continue };
                if q.cap > b || q.p > u {
                    continue;
                }
                if !(q.p > prev.p && q.cap > prev.cap && q.base >= prev.base) {
                    continue;
                }
                if best.as_ref().is_none_or(|c| prefer_quote(&q, c)) {
                    best = Some(q);
                }
            }
            if let Some(q) = best {
                self.current_quote = Some(q);
                return Ok(q);
            }
        }
        Err(MarketError::QuoteSpaceExhausted)
    }

    /// Buyer's judgement of a realized gain against a given quote, with no
    /// requote attempted. Lets alternative requote rules reuse the standard
    /// termination cases.
    pub fn classify_perfect(&self, q: &QuotedPrice, realized: Gain, round: Round) -> TaskVerdict {
        let breakeven =
            math::breakeven_gain(self.econ.unit_value, q.p, q.base).unwrap_or(f64::INFINITY);
        if realized < breakeven {
            return TaskVerdict::Loss {
                reason: format!("realized gain {realized} is below the breakeven {breakeven}"),
            };
        }
        if realized >= q.target_gain() - self.tol.eps_t {
            return TaskVerdict::Accept;
        }
        if !self.cost.is_free() && self.accept_with_cost(q, realized, round) {
            return TaskVerdict::Accept;
        }
        TaskVerdict::Continue
    }

    /// Buyer's verdict on a realized gain under full information.
    pub fn decide_perfect(&mut self, realized: Gain, round: Round) -> Decision {
        let q = self.active_quote();
        match self.classify_perfect(&q, realized, round) {
            TaskVerdict::Loss { reason } => {
                Decision::BreakdownFail { case: CaseId::TaskLoss, reason }
            }
            TaskVerdict::Accept => Decision::AcceptSuccess { bundle: None },
            TaskVerdict::Continue => match self.requote() {
                Ok(next) => Decision::ContinueWithQuote(next),
                Err(_) => Decision::BreakdownFail {
                    case: CaseId::Exhausted,
                    reason: "quote space exhausted at the unit-value and budget ceilings".into(),
                },
            },
        }
    }

    /// Cost-aware acceptance: settling now must beat the best continuation
    /// value net of the next round's cost, within the configured slack.
    pub fn accept_with_cost(&self, q: &QuotedPrice, realized: Gain, round: Round) -> bool {
        let u = self.econ.unit_value;
        let settle_now = u * realized - (q.base + q.p * realized) - self.cost.eval(round);
        let keep_bargaining =
            u * q.target_gain() - q.cap - self.cost.eval(round + 1) - self.tol.eps_tc;
        settle_now >= keep_bargaining
    }

    /// Buyer's verdict on a realized gain when gains are only estimated.
    /// Failure is suppressed while rounds remain in the exploration budget;
    /// acceptance is not.
    pub fn decide_imperfect(&self, realized: Gain, round: Round, explore_rounds: Round) -> Decision {
        let q = self.active_quote();
        let breakeven = math::breakeven_gain(self.econ.unit_value, q.p, q.base)
            .unwrap_or(f64::INFINITY);
        if realized < breakeven {
            if round < explore_rounds {
                return Decision::Continue;
            }
            return Decision::BreakdownFail {
                case: CaseId::TaskLossImperfect,
                reason: format!("realized gain {realized} is below the breakeven {breakeven}"),
            };
        }
        if realized >= q.target_gain() - self.tol.eps_t {
            return Decision::AcceptSuccess { bundle: None };
        }
        Decision::Continue
    }

    /// Samples fresh target-conforming candidates and picks the one whose
    /// predicted gain promises the highest net profit. Candidates predicted
    /// to miss the target are dropped first; if none survive, the best
    /// overall candidate is quoted anyway.
    pub fn quote_with_estimator(
        &mut self,
        predict: impl Fn(&QuotedPrice) -> Gain,
    ) -> Result<QuotedPrice, MarketError> {
        let (u, b) = (self.econ.unit_value, self.econ.budget);
        let p_hi = u.min(b / self.target);
        let mut kept: Option<(f64, QuotedPrice)> = None;
        let mut all: Option<(f64, QuotedPrice)> = None;
        for _ in 0..self.sample_count {
            let p = p_hi * gt0(&mut self.rng);
            let base = (b - p * self.target) * self.rng.random::<f64>();
            let Ok(q) = QuotedPrice::for_target(p, base.max(0.0), self.target) else { continue };
            if q.cap > b || q.p > u {
                continue;
            }
            let predicted = predict(&q);
            let profit = self.econ.net_profit(&q, predicted);
            let better = |slot: &Option<(f64, QuotedPrice)>| {
                slot.as_ref()
                    .is_none_or(|(bp, bq)| profit > *bp || (profit == *bp && prefer_quote(&q, bq)))
            };
            if better(&all) {
                all = Some((profit, q));
            }
            if predicted >= self.target - self.tol.eps_t && better(&kept) {
                kept = Some((profit, q));
            }
        }
        let (_, q) = kept.or(all).ok_or(MarketError::EmptyCandidateSet)?;
        self.current_quote = Some(q);
        Ok(q)
    }
}

/// Seller-side bargaining state.
#[derive(Debug, Clone)]
pub struct DataState {
    pub catalog: BundleCatalog,
    known_gains: Option<BTreeMap<BundleId, Gain>>,
    pub tol: Tolerances,
    pub cost: CostModel,
}

impl DataState {
    /// Full-information seller: the realized gain of every catalog bundle is
    /// known up front.
    pub fn perfect(
        catalog: BundleCatalog,
        gains: BTreeMap<BundleId, Gain>,
        tol: Tolerances,
        cost: CostModel,
    ) -> Result<Self, MarketError> {
        for e in catalog.entries() {
            if !gains.contains_key(&e.bundle.id) {
                return Err(MarketError::MissingKnownGain(e.bundle.id.clone()));
            }
        }
        Ok(Self { catalog, known_gains: Some(gains), tol, cost })
    }

    pub fn imperfect(catalog: BundleCatalog, tol: Tolerances, cost: CostModel) -> Self {
        Self { catalog, known_gains: None, tol, cost }
    }

    pub fn known_gain(&self, id: &str) -> Option<Gain> {
        self.known_gains.as_ref().and_then(|g| g.get(id)).copied()
    }

    /// Seller's verdict on a quote under full information.
    pub fn decide_perfect(&self, q: &QuotedPrice, round: Round) -> Decision {
        let affordable = self.catalog.affordable(q);
        if affordable.is_empty() {
            return Decision::BreakdownFail {
                case: CaseId::NoAffordable,
                reason: "no catalog bundle is affordable at this quote".into(),
            };
        }
        let gains = self.known_gains.as_ref().expect("full-information seller knows all gains");
        let t = q.target_gain();

        // nearest bundle that does not overshoot the target
        let mut selected: Option<(&CatalogEntry, Gain, f64)> = None;
        for e in &affordable {
            let g = gains[&e.bundle.id];
            let gap = t - g;
            if gap < -CONFORMITY_SLACK {
                continue;
            }
            let wins = selected.as_ref().is_none_or(|(se, _, sgap)| {
                gap < *sgap || (gap == *sgap && e.bundle.id < se.bundle.id)
            });
            if wins {
                selected = Some((e, g, gap));
            }
        }

        let Some((entry, gain, gap)) = selected else {
            // everything affordable overshoots: the cap is the best payment
            // available, so sell the strongest bundle at it
            let best = affordable
                .iter()
                .max_by(|a, b| {
                    let (ga, gb) = (gains[&a.bundle.id], gains[&b.bundle.id]);
                    ga.partial_cmp(&gb)
                        .unwrap()
                        .then_with(|| b.bundle.id.cmp(&a.bundle.id))
                })
                .unwrap();
            return Decision::AcceptSuccess { bundle: Some(best.bundle.id.clone()) };
        };

        if gap <= self.tol.eps_d {
            return Decision::AcceptSuccess { bundle: Some(entry.bundle.id.clone()) };
        }
        if !self.cost.is_free() {
            let (best_gain, best_reserved) = self.best_below_target(t);
            if self.accept_with_cost(q, gain, best_gain, best_reserved, round) {
                return Decision::AcceptSuccess { bundle: Some(entry.bundle.id.clone()) };
            }
        }
        Decision::ContinueWithBundle(entry.bundle.id.clone())
    }

    /// Gain of the catalog bundle closest to the target from below together
    /// with its reserved price; the target itself when every bundle
    /// overshoots. This is the payment the seller can still hope for.
    pub fn best_below_target(&self, target: Gain) -> (Gain, Option<ReservedPrice>) {
        let gains = self.known_gains.as_ref().expect("full-information seller knows all gains");
        let mut best: Option<(&CatalogEntry, Gain)> = None;
        for e in self.catalog.entries() {
            let g = gains[&e.bundle.id];
            if g > target + CONFORMITY_SLACK {
                continue;
            }
            let wins = best.as_ref().is_none_or(|(be, bg)| {
                g > *bg || (g == *bg && e.bundle.id < be.bundle.id)
            });
            if wins {
                best = Some((e, g));
            }
        }
        match best {
            Some((e, g)) => (g, Some(e.reserved)),
            None => (target, None),
        }
    }

    /// Cost-aware acceptance: selling the selected bundle now must beat
    /// selling the best future bundle at a sweetened quote, net of the next
    /// round's cost, within the configured slack.
    pub fn accept_with_cost(
        &self,
        q: &QuotedPrice,
        selected_gain: Gain,
        best_gain: Gain,
        best_reserved: Option<ReservedPrice>,
        round: Round,
    ) -> bool {
        let (p_l, base_l) = best_reserved.map_or((q.p, q.base), |r| (r.p, r.base));
        let settle_now = q.base + q.p * selected_gain - self.cost.eval(round);
        let keep_bargaining = base_l.max(q.base) + p_l.max(q.p) * best_gain
            - self.cost.eval(round + 1)
            - self.tol.eps_dc;
        settle_now >= keep_bargaining
    }

    /// Seller's verdict on a quote when gains are only estimated. During the
    /// exploration budget every would-be termination turns into a
    /// continuation so that outcomes keep feeding the estimators.
    pub fn decide_imperfect(
        &self,
        predict: impl Fn(&FeatureBundle) -> Gain,
        q: &QuotedPrice,
        round: Round,
        explore_rounds: Round,
    ) -> Decision {
        let exploring = round < explore_rounds;
        let affordable = self.catalog.affordable(q);
        if affordable.is_empty() {
            if exploring {
                return Decision::Continue;
            }
            return Decision::BreakdownFail {
                case: CaseId::NoAffordableImperfect,
                reason: "no catalog bundle is affordable at this quote".into(),
            };
        }
        let t = q.target_gain();
        let estimates: Vec<(&CatalogEntry, Gain)> =
            affordable.iter().map(|e| (*e, predict(&e.bundle))).collect();

        let offer = |e: &CatalogEntry| {
            if exploring {
                Decision::ContinueWithBundle(e.bundle.id.clone())
            } else {
                Decision::AcceptSuccess { bundle: Some(e.bundle.id.clone()) }
            }
        };

        // nearest predicted gain that does not overshoot the target
        let mut nearest: Option<(&CatalogEntry, f64)> = None;
        for &(e, g) in &estimates {
            let gap = t - g;
            if gap < -CONFORMITY_SLACK {
                continue;
            }
            let wins = nearest.as_ref().is_none_or(|(ne, ngap)| {
                gap < *ngap || (gap == *ngap && e.bundle.id < ne.bundle.id)
            });
            if wins {
                nearest = Some((e, gap));
            }
        }
        if let Some((e, gap)) = nearest {
            if gap <= self.tol.eps_d {
                return offer(e);
            }
        }

        let by_gain = |a: &&(&CatalogEntry, Gain), b: &&(&CatalogEntry, Gain)| {
            a.1.partial_cmp(&b.1).unwrap().then_with(|| b.0.bundle.id.cmp(&a.0.bundle.id))
        };
        let strongest = estimates.iter().max_by(by_gain).unwrap();
        if t > strongest.1 {
            // no bundle is predicted to ever reach the target
            return offer(strongest.0);
        }
        let weakest = estimates.iter().min_by(by_gain).unwrap();
        if t < weakest.1 {
            // every bundle is predicted to overshoot; the cheapest one wins
            return offer(weakest.0);
        }

        let (e, _) = nearest.expect("target is within the predicted gain range");
        Decision::ContinueWithBundle(e.bundle.id.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::CostKind;

    fn s1_catalog() -> BundleCatalog {
        let entry = |id: &str, feats: &[&str], p: f64, base: f64| CatalogEntry {
            bundle: FeatureBundle::new(id, feats.iter().map(|s| s.to_string()).collect())
                .unwrap(),
            reserved: ReservedPrice::new(p, base).unwrap(),
        };
        BundleCatalog::new(vec![
            entry("F1", &["a"], 5.0, 0.5),
            entry("F2", &["a", "b"], 8.0, 1.0),
            entry("F3", &["a", "b", "c"], 12.0, 2.0),
        ])
        .unwrap()
    }

    fn s1_gains() -> BTreeMap<BundleId, Gain> {
        [("F1", 0.05), ("F2", 0.10), ("F3", 0.20)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    fn tols(eps_d: f64, eps_t: f64) -> Tolerances {
        Tolerances::new(eps_d, eps_t, 0.0, 0.0).unwrap()
    }

    fn q(p: f64, base: f64, cap: f64) -> QuotedPrice {
        QuotedPrice::new(p, base, cap).unwrap()
    }

    fn perfect_seller(eps_d: f64) -> DataState {
        DataState::perfect(s1_catalog(), s1_gains(), tols(eps_d, 1e-3), CostModel::free())
            .unwrap()
    }

    #[test]
    fn seller_accepts_exact_target_bundle() {
        let s = perfect_seller(1e-3);
        let d = s.decide_perfect(&q(10.0, 1.2, 2.2), 1);
        assert_eq!(d, Decision::AcceptSuccess { bundle: Some("F2".into()) });
    }

    #[test]
    fn seller_fails_when_nothing_is_affordable() {
        let s = perfect_seller(1e-3);
        match s.decide_perfect(&q(10.0, 0.4, 1.4), 1) {
            Decision::BreakdownFail { case: CaseId::NoAffordable, .. } => {}
            other => panic!("expected case-1 breakdown, got {other:?}"),
        }
    }

    #[test]
    fn seller_counters_with_nearest_bundle_below_target() {
        let s = perfect_seller(1e-3);
        let d = s.decide_perfect(&q(9.0, 1.0, 2.35), 1);
        assert_eq!(d, Decision::ContinueWithBundle("F2".into()));
    }

    #[test]
    fn seller_accepts_best_bundle_when_everything_overshoots() {
        let catalog = s1_catalog();
        let gains: BTreeMap<BundleId, Gain> =
            [("F1", 0.30), ("F2", 0.40), ("F3", 0.50)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
        let s = DataState::perfect(catalog, gains, tols(1e-3, 1e-3), CostModel::free()).unwrap();
        // target 0.1; F1 and F2 affordable, both overshoot
        let d = s.decide_perfect(&q(10.0, 1.2, 2.2), 1);
        assert_eq!(d, Decision::AcceptSuccess { bundle: Some("F2".into()) });
    }

    #[test]
    fn seller_breaks_gain_ties_by_smaller_id() {
        let entry = |id: &str| CatalogEntry {
            bundle: FeatureBundle::new(id, vec!["x".into()]).unwrap(),
            reserved: ReservedPrice::new(1.0, 0.1).unwrap(),
        };
        let catalog = BundleCatalog::new(vec![entry("B"), entry("A")]).unwrap();
        let gains: BTreeMap<BundleId, Gain> =
            [("A", 0.05), ("B", 0.05)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let s = DataState::perfect(catalog, gains, tols(1e-3, 1e-3), CostModel::free()).unwrap();
        let d = s.decide_perfect(&q(10.0, 1.2, 2.2), 1);
        assert_eq!(d, Decision::ContinueWithBundle("A".into()));
    }

    #[test]
    fn seller_never_offers_unaffordable_or_overqualified_bundles() {
        let s = perfect_seller(1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = 20.0 * rng.random::<f64>();
            let base = 3.0 * rng.random::<f64>();
            let cap = base + 3.0 * rng.random::<f64>();
            let Ok(quote) = QuotedPrice::new(p.max(0.01), base, cap) else { continue };
            match s.decide_perfect(&quote, 1) {
                Decision::ContinueWithBundle(id) => {
                    let e = s.catalog.get(&id).unwrap();
                    assert!(e.reserved.met_by(&quote));
                    // counter-offers never overshoot the implied target
                    assert!(s.known_gain(&id).unwrap() <= quote.target_gain());
                }
                Decision::AcceptSuccess { bundle: Some(id) } => {
                    assert!(s.catalog.get(&id).unwrap().reserved.met_by(&quote));
                }
                _ => {}
            }
        }
    }

    fn buyer(target: f64, seed: u64) -> TaskState {
        TaskState::new(
            TaskEconomics::new(50.0, 10.0).unwrap(),
            target,
            tols(1e-3, 1e-3),
            CostModel::free(),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn buyer_accepts_a_realized_gain_at_target() {
        let mut b = buyer(0.1, 1);
        b.current_quote = Some(q(10.0, 1.2, 2.2));
        assert_eq!(b.decide_perfect(0.10, 1), Decision::AcceptSuccess { bundle: None });
    }

    #[test]
    fn buyer_quits_below_breakeven() {
        let mut b = buyer(0.1, 1);
        b.current_quote = Some(q(10.0, 1.2, 2.2));
        match b.decide_perfect(0.02, 1) {
            Decision::BreakdownFail { case: CaseId::TaskLoss, .. } => {}
            other => panic!("expected case-4 breakdown, got {other:?}"),
        }
    }

    #[test]
    fn buyer_requotes_between_breakeven_and_target() {
        let mut b = buyer(0.1, 1);
        let prev = q(10.0, 1.2, 2.2);
        b.current_quote = Some(prev);
        match b.decide_perfect(0.05, 1) {
            Decision::ContinueWithQuote(next) => {
                assert!(next.p > prev.p && next.cap > prev.cap && next.base >= prev.base);
                assert!((next.target_gain() - 0.1).abs() < 1e-9);
            }
            other => panic!("expected a requote, got {other:?}"),
        }
    }

    #[test]
    fn opening_quote_honors_ranges_and_target() {
        let mut b = buyer(0.1, 3);
        let quote = b.initial_quote().unwrap();
        assert!(quote.p >= 5.0 && quote.p <= 15.0);
        assert!(quote.base >= 0.5 && quote.base <= 2.0);
        assert!(quote.cap <= 10.0);
        assert!(quote.target_gain() >= 0.1 && (quote.target_gain() - 0.1).abs() < 1e-12);

        let mut again = buyer(0.1, 3);
        assert_eq!(again.initial_quote().unwrap(), quote);
    }

    #[test]
    fn opening_quote_rejects_impossible_ranges() {
        let econ = TaskEconomics::new(50.0, 0.5).unwrap();
        let mut b = TaskState::new(econ, 0.1, tols(1e-3, 1e-3), CostModel::free(), 1)
            .unwrap()
            .with_ranges(QuoteRanges { p: (1.0, 2.0), base: (1.0, 2.0) })
            .unwrap();
        assert!(matches!(b.initial_quote(), Err(MarketError::InfeasibleInitialQuote)));
    }

    #[test]
    fn requote_rises_monotonically_until_exhaustion() {
        let mut b = buyer(0.1, 9);
        let mut prev = b.initial_quote().unwrap();
        let mut steps = 0;
        loop {
            match b.requote() {
                Ok(next) => {
                    assert!(next.p > prev.p, "unit price must rise");
                    assert!(next.cap > prev.cap, "cap must rise");
                    assert!(next.base >= prev.base, "base must not fall");
                    assert!(next.cap <= 10.0 && next.p <= 50.0);
                    let t = next.target_gain();
                    assert!(t >= 0.1 && (t - 0.1).abs() < 1e-9);
                    prev = next;
                    steps += 1;
                    assert!(steps < 10_000, "requotes should exhaust eventually");
                }
                Err(MarketError::QuoteSpaceExhausted) => break,
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(steps > 3, "expected several requotes, got {steps}");
    }

    #[test]
    fn requote_fails_at_the_ceilings() {
        let mut b = buyer(0.1, 2);
        b.current_quote = Some(q(50.0, 5.0, 10.0));
        assert!(matches!(b.requote(), Err(MarketError::QuoteSpaceExhausted)));
    }

    #[test]
    fn requote_is_deterministic_per_seed() {
        let run = || {
            let mut b = buyer(0.1, 77);
            b.initial_quote().unwrap();
            b.requote().unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn buyer_cost_check_matches_hand_arithmetic() {
        // settle-now 0.8 vs continuation 2.8: keep bargaining
        let b = buyer(0.1, 1);
        assert!(!b.accept_with_cost(&q(10.0, 1.2, 2.2), 0.05, 1));
        // at the target the two sides tie exactly under constant cost
        // (binary-exact numbers: target (3-1)/8 = 0.25)
        let mut b2 = buyer(0.25, 1);
        b2.cost = CostModel::new(CostKind::Constant { c: 0.4 }, 1.0).unwrap();
        assert!(b2.accept_with_cost(&q(8.0, 1.0, 3.0), 0.25, 3));
        // steep rising cost makes settling at 0.05 worthwhile
        let mut b3 = buyer(0.1, 1);
        b3.cost = CostModel::new(CostKind::Linear { a: 3.0 }, 1.0).unwrap();
        assert!(b3.accept_with_cost(&q(10.0, 1.2, 2.2), 0.05, 1));
    }

    #[test]
    fn seller_cost_check_matches_hand_arithmetic() {
        let mut s = perfect_seller(1e-3);
        s.cost = CostModel::new(CostKind::Constant { c: 0.2 }, 1.0).unwrap();
        s.tol = Tolerances::new(1e-3, 1e-3, 0.01, 0.0).unwrap();
        let quote = q(9.0, 1.0, 2.35);
        // selling F2 now (1.9 - c) vs holding out for F2 later (1.89 - c)
        let (bg, br) = s.best_below_target(quote.target_gain());
        assert_eq!(bg, 0.10);
        assert!(s.accept_with_cost(&quote, 0.10, bg, br, 1));
        // selling F1 now (1.45 - c) loses to that continuation
        assert!(!s.accept_with_cost(&quote, 0.05, bg, br, 1));
    }

    #[test]
    fn seller_cost_check_accepts_under_dominating_future_cost() {
        let mut s = perfect_seller(0.0);
        s.cost = CostModel::new(CostKind::Exponential { a: 10.0 }, 1.0).unwrap();
        s.tol = Tolerances::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let quote = q(9.0, 1.0, 2.35);
        let (bg, br) = s.best_below_target(quote.target_gain());
        assert!(s.accept_with_cost(&quote, 0.05, bg, br, 2));
    }

    #[test]
    fn seller_cost_check_is_tight_at_identical_terms() {
        // zero cost, zero slack, same bundle on both sides: equality accepts
        let s = perfect_seller(1e-3);
        let quote = q(10.0, 1.2, 2.2);
        assert!(s.accept_with_cost(&quote, 0.10, 0.10, Some(ReservedPrice::new(8.0, 1.0).unwrap()), 1));
    }

    #[test]
    fn cost_aware_continue_becomes_accept() {
        // same state as the counter-offer test, but a steep cost flips it
        let mut s = perfect_seller(1e-3);
        s.cost = CostModel::new(CostKind::Linear { a: 2.0 }, 1.0).unwrap();
        let d = s.decide_perfect(&q(9.0, 1.0, 2.35), 1);
        assert_eq!(d, Decision::AcceptSuccess { bundle: Some("F2".into()) });
    }

    fn predicted<'a>(vals: &'a [(&'a str, f64)]) -> impl Fn(&FeatureBundle) -> Gain + 'a {
        move |b: &FeatureBundle| {
            vals.iter().find(|(id, _)| *id == b.id).map(|(_, g)| *g).unwrap()
        }
    }

    #[test]
    fn estimated_seller_accepts_within_tolerance_after_exploration() {
        let s = DataState::imperfect(s1_catalog(), tols(5e-2, 1e-3), CostModel::free());
        let est = [("F1", 0.04), ("F2", 0.09), ("F3", 0.3)];
        let quote = q(10.0, 1.2, 2.2); // target 0.1, affords F1 and F2
        let d = s.decide_imperfect(predicted(&est), &quote, 120, 100);
        assert_eq!(d, Decision::AcceptSuccess { bundle: Some("F2".into()) });
        // same state during exploration: offer the same bundle, keep going
        let d = s.decide_imperfect(predicted(&est), &quote, 3, 100);
        assert_eq!(d, Decision::ContinueWithBundle("F2".into()));
    }

    #[test]
    fn estimated_seller_accepts_strongest_when_target_is_out_of_reach() {
        let s = DataState::imperfect(s1_catalog(), tols(5e-2, 1e-3), CostModel::free());
        let est = [("F1", 0.04), ("F2", 0.09), ("F3", 0.3)];
        let quote = q(10.0, 1.2, 6.2); // target 0.5 above every estimate
        let d = s.decide_imperfect(predicted(&est), &quote, 120, 100);
        assert_eq!(d, Decision::AcceptSuccess { bundle: Some("F2".into()) });
        let d = s.decide_imperfect(predicted(&est), &quote, 0, 100);
        assert_eq!(d, Decision::ContinueWithBundle("F2".into()));
    }

    #[test]
    fn estimated_seller_accepts_weakest_when_everything_overshoots() {
        let s = DataState::imperfect(s1_catalog(), tols(5e-2, 1e-3), CostModel::free());
        let est = [("F1", 0.04), ("F2", 0.09), ("F3", 0.3)];
        let quote = q(10.0, 1.2, 1.4); // target 0.02 under every estimate
        let d = s.decide_imperfect(predicted(&est), &quote, 120, 100);
        assert_eq!(d, Decision::AcceptSuccess { bundle: Some("F1".into()) });
    }

    #[test]
    fn estimated_seller_counters_when_target_is_bracketed() {
        let s = DataState::imperfect(s1_catalog(), tols(1e-3, 1e-3), CostModel::free());
        let est = [("F1", 0.04), ("F2", 0.15), ("F3", 0.3)];
        let quote = q(10.0, 1.2, 2.2); // target 0.1: F1 under, F2 over
        let d = s.decide_imperfect(predicted(&est), &quote, 120, 100);
        assert_eq!(d, Decision::ContinueWithBundle("F1".into()));
    }

    #[test]
    fn estimated_seller_explores_through_empty_affordable_sets() {
        let s = DataState::imperfect(s1_catalog(), tols(5e-2, 1e-3), CostModel::free());
        let est = [("F1", 0.04), ("F2", 0.09), ("F3", 0.3)];
        let quote = q(10.0, 0.4, 1.4);
        assert_eq!(s.decide_imperfect(predicted(&est), &quote, 3, 100), Decision::Continue);
        match s.decide_imperfect(predicted(&est), &quote, 120, 100) {
            Decision::BreakdownFail { case: CaseId::NoAffordableImperfect, .. } => {}
            other => panic!("expected case-I breakdown, got {other:?}"),
        }
    }

    #[test]
    fn estimated_buyer_suppresses_failure_but_not_success_while_exploring() {
        let mut b = buyer(0.1, 1);
        b.current_quote = Some(q(10.0, 1.2, 2.2));
        assert_eq!(b.decide_imperfect(0.02, 3, 100), Decision::Continue);
        match b.decide_imperfect(0.02, 120, 100) {
            Decision::BreakdownFail { case: CaseId::TaskLossImperfect, .. } => {}
            other => panic!("expected case-IV breakdown, got {other:?}"),
        }
        // success is honored even in round 1
        assert_eq!(b.decide_imperfect(0.10, 1, 100), Decision::AcceptSuccess { bundle: None });
        assert_eq!(b.decide_imperfect(0.05, 120, 100), Decision::Continue);
    }

    #[test]
    fn estimator_guided_quote_stays_target_conforming() {
        let mut b = buyer(0.1, 21);
        // untrained estimator: every prediction is zero, fallback path
        let quote = b.quote_with_estimator(|_| 0.0).unwrap();
        assert!(quote.p <= 50.0 && quote.cap <= 10.0);
        assert!(quote.target_gain() >= 0.1 && (quote.target_gain() - 0.1).abs() < 1e-9);

        let mut again = buyer(0.1, 21);
        assert_eq!(again.quote_with_estimator(|_| 0.0).unwrap(), quote);
    }

    #[test]
    fn estimator_guided_quote_prefers_predicted_profit() {
        // prediction rises with cheaper caps; the chosen quote should be
        // no worse than a run that predicts zero everywhere
        let mut b = buyer(0.1, 33);
        let quote = b.quote_with_estimator(|q| if q.cap < 2.0 { 0.2 } else { 0.0 }).unwrap();
        let profit_at = |q: &QuotedPrice| 50.0 * 0.2 - q.payment(0.2);
        let mut base = buyer(0.1, 33);
        let plain = base.quote_with_estimator(|_| 0.0).unwrap();
        assert!(profit_at(&quote) >= profit_at(&plain));
    }

    #[test]
    fn case_codes_round_trip() {
        for case in CaseId::ALL {
            assert_eq!(case.code().parse::<CaseId>().unwrap(), case);
        }
        assert!("xx".parse::<CaseId>().is_err());
    }

    #[test]
    fn decisions_are_pure() {
        let s = perfect_seller(1e-3);
        let quote = q(9.0, 1.0, 2.35);
        assert_eq!(s.decide_perfect(&quote, 1), s.decide_perfect(&quote, 1));
        let est = [("F1", 0.04), ("F2", 0.09), ("F3", 0.3)];
        let si = DataState::imperfect(s1_catalog(), tols(5e-2, 1e-3), CostModel::free());
        assert_eq!(
            si.decide_imperfect(predicted(&est), &quote, 7, 100),
            si.decide_imperfect(predicted(&est), &quote, 7, 100)
        );
    }
}
