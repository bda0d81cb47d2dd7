//! Brute-force audits of the pricing rules on small markets. Every check
//! enumerates or samples its claim directly and reports counterexamples
//! instead of panicking, so reports can be serialized and acted on.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{
    BundleCatalog, CatalogEntry, CostKind, CostModel, FeatureBundle, MarketError, QuotedPrice,
    ReservedPrice, TaskEconomics, Tolerances,
};
use crate::strategy::{DataState, Decision, TaskState};
use crate::{BundleId, Gain, Money};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifierError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("{count} bundles exceed the exhaustive-search limit of {MAX_AUDIT_BUNDLES}")]
    TooManyBundles { count: usize },
    #[error("bundle {0} has no known gain")]
    MissingGain(BundleId),
    #[error("bundle {0} has a non-finite or negative gain {1}")]
    BadGain(BundleId, f64),
    #[error("bundles {0} and {1} share the gain {2}; selections would be ambiguous")]
    DuplicateGain(BundleId, BundleId, f64),
    #[error("bad grid axis: {0}")]
    BadAxis(String),
}

/// Largest catalog the exhaustive checks will take on.
pub const MAX_AUDIT_BUNDLES: usize = 8;

/// Grid points used per axis unless configured otherwise.
pub const DEFAULT_GRID_STEPS: usize = 50;

/// Market states sampled by the constant-cost reduction check.
pub const COST_CHECK_STATES: usize = 1000;

/// Evenly spaced sample points over a closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Self {
        Self { lo, hi, steps }
    }

    fn validate(&self, what: &str) -> Result<(), VerifierError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(VerifierError::BadAxis(format!(
                "{what} range [{}, {}] is not an ordered finite interval",
                self.lo, self.hi
            )));
        }
        if self.steps == 0 {
            return Err(VerifierError::BadAxis(format!("{what} axis has zero steps")));
        }
        Ok(())
    }

    /// Endpoints are hit exactly; a degenerate interval yields one point.
    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 || self.lo == self.hi {
            return vec![self.lo];
        }
        let span = self.hi - self.lo;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.hi
                } else {
                    self.lo + span * i as f64 / (self.steps - 1) as f64
                }
            })
            .collect()
    }

}

/// Search ranges for quote enumeration. The payment-cap axis runs from each
/// candidate's base payment up to the buyer's budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub p: Axis,
    pub base: Axis,
    pub cap_steps: usize,
}

impl GridSpec {
    pub fn new(p_range: (f64, f64), base_range: (f64, f64)) -> Self {
        Self {
            p: Axis::new(p_range.0, p_range.1, DEFAULT_GRID_STEPS),
            base: Axis::new(base_range.0, base_range.1, DEFAULT_GRID_STEPS),
            cap_steps: DEFAULT_GRID_STEPS,
        }
    }

    fn validate(&self, econ: &TaskEconomics) -> Result<(), VerifierError> {
        self.p.validate("unit price")?;
        self.base.validate("base payment")?;
        if self.p.lo <= 0.0 {
            return Err(VerifierError::BadAxis("unit prices must be positive".into()));
        }
        if self.p.hi >= econ.unit_value {
            return Err(VerifierError::BadAxis(format!(
                "unit price axis reaches {}, at or above the unit value {}",
                self.p.hi, econ.unit_value
            )));
        }
        if self.base.lo < 0.0 {
            return Err(VerifierError::BadAxis("base payments must be non-negative".into()));
        }
        if self.cap_steps == 0 {
            return Err(VerifierError::BadAxis("payment cap axis has zero steps".into()));
        }
        Ok(())
    }
}

/// A market small enough to audit by exhaustive enumeration: a catalog with
/// known per-bundle gains, the buyer's economics, acceptance slacks, and the
/// quote grid to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallInstance {
    pub catalog: BundleCatalog,
    pub gains: BTreeMap<BundleId, Gain>,
    pub econ: TaskEconomics,
    pub tol: Tolerances,
    pub grid: GridSpec,
    #[serde(default)]
    pub seed: u64,
}

impl SmallInstance {
    pub fn new(
        catalog: BundleCatalog,
        gains: BTreeMap<BundleId, Gain>,
        econ: TaskEconomics,
        tol: Tolerances,
        grid: GridSpec,
        seed: u64,
    ) -> Result<Self, VerifierError> {
        let inst = Self { catalog, gains, econ, tol, grid, seed };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), VerifierError> {
        let count = self.catalog.entries().len();
        if count > MAX_AUDIT_BUNDLES {
            return Err(VerifierError::TooManyBundles { count });
        }
        let mut seen: Vec<(f64, &BundleId)> = Vec::with_capacity(count);
        for e in self.catalog.entries() {
            let id = &e.bundle.id;
            let g = *self.gains.get(id).ok_or_else(|| VerifierError::MissingGain(id.clone()))?;
            if !g.is_finite() || g < 0.0 {
                return Err(VerifierError::BadGain(id.clone(), g));
            }
            if let Some((_, other)) = seen.iter().find(|(sg, _)| *sg == g) {
                return Err(VerifierError::DuplicateGain((*other).clone(), id.clone(), g));
            }
            seen.push((g, id));
        }
        self.grid.validate(&self.econ)?;
        Ok(())
    }

    /// A randomized instance whose cheapest-to-license bundle is affordable
    /// at every grid point, so sweeps always elicit offers.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=MAX_AUDIT_BUNDLES);
        let unit_value = 30.0 + 40.0 * rng.random::<f64>();
        let budget = 6.0 + 6.0 * rng.random::<f64>();
        let econ = TaskEconomics::new(unit_value, budget).unwrap();

        let mut gain = 0.02 + 0.03 * rng.random::<f64>();
        let mut entries = Vec::with_capacity(n);
        let mut gains = BTreeMap::new();
        for i in 0..n {
            let id = format!("F{}", i + 1);
            let p_l = 1.0 + 6.0 * rng.random::<f64>();
            let base_l = 0.05 + 1.2 * rng.random::<f64>();
            entries.push(CatalogEntry {
                bundle: FeatureBundle::new(id.clone(), vec![format!("x{i}")]).unwrap(),
                reserved: ReservedPrice::new(p_l, base_l).unwrap(),
            });
            gains.insert(id, gain);
            gain += 0.004 + 0.05 * rng.random::<f64>();
        }
        let catalog = BundleCatalog::new(entries).unwrap();

        let p_max = catalog.entries().iter().map(|e| e.reserved.p).fold(0.0, f64::max);
        let base_min =
            catalog.entries().iter().map(|e| e.reserved.base).fold(f64::INFINITY, f64::min);
        let base_max = catalog.entries().iter().map(|e| e.reserved.base).fold(0.0, f64::max);
        let grid = GridSpec::new(
            (p_max, (2.0 * p_max).min(0.9 * unit_value)),
            (base_min, (1.4 * base_max).min(0.5 * budget)),
        );
        let tol = Tolerances::new(0.05, 1e-3, 0.0, 0.0).unwrap();
        Self::new(catalog, gains, econ, tol, grid, seed).unwrap()
    }

    fn seller(&self) -> DataState {
        DataState::perfect(self.catalog.clone(), self.gains.clone(), self.tol, CostModel::free())
            .expect("validated instances have a gain for every bundle")
    }

    /// Gain of the bundle licensed most cheaply; a quote at or above that
    /// bundle's reserved price always draws an offer.
    pub fn anchor_gain(&self) -> Gain {
        let e = self
            .catalog
            .entries()
            .iter()
            .min_by(|a, b| a.reserved.base.partial_cmp(&b.reserved.base).unwrap())
            .expect("catalogs are non-empty");
        self.gains[&e.bundle.id]
    }
}

/// What the seller does with a quote: the offered bundle, its gain, and
/// whether the offer already settles the trade.
fn selection(
    seller: &DataState,
    gains: &BTreeMap<BundleId, Gain>,
    q: &QuotedPrice,
) -> Option<(BundleId, Gain, bool)> {
    match seller.decide_perfect(q, 1) {
        Decision::AcceptSuccess { bundle: Some(id) } => {
            let g = gains[&id];
            Some((id, g, true))
        }
        Decision::ContinueWithBundle(id) => {
            let g = gains[&id];
            Some((id, g, false))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The claim's preconditions do not hold for these inputs.
    NotApplicable,
}

/// Outcome of one audit: how many cases ran and which ones broke. At most
/// [`CheckReport::KEPT_FAILURES`] counterexamples are retained verbatim.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    pub cases: usize,
    pub failure_count: usize,
    pub failures: Vec<String>,
}

impl CheckReport {
    pub const KEPT_FAILURES: usize = 16;

    fn from_cases(name: &str, cases: usize, mut failures: Vec<String>) -> Self {
        let failure_count = failures.len();
        failures.truncate(Self::KEPT_FAILURES);
        Self {
            name: name.into(),
            status: if failure_count == 0 { CheckStatus::Pass } else { CheckStatus::Fail },
            cases,
            failure_count,
            failures,
        }
    }

    fn not_applicable(name: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::NotApplicable,
            cases: 0,
            failure_count: 0,
            failures: vec![why.into()],
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * f64::max(1.0, f64::max(a.abs(), b.abs()))
}

fn fmt_quote(q: &QuotedPrice) -> String {
    format!("p={} P0={} Ph={}", q.p, q.base, q.cap)
}

/// Identity tolerance for values that differ only by rounding of the same
/// arithmetic.
const EXACT_TOL: f64 = 1e-12;

/// Checks that replacing a quote with the conforming quote targeting exactly
/// the gain it elicits changes nothing: same bundle, same gain, identical
/// payment on both sides, and a payment cap pinned to the settlement.
pub fn theorem1_check(inst: &SmallInstance, q: &QuotedPrice) -> CheckReport {
    const NAME: &str = "canonical_quote";
    if !inst.econ.admits(q) {
        return CheckReport::not_applicable(NAME, "the buyer's economics do not admit this quote");
    }
    let seller = inst.seller();
    let Some((id, dg, _)) = selection(&seller, &inst.gains, q) else {
        return CheckReport::not_applicable(NAME, "the quote elicits no offer");
    };
    if dg > q.target_gain() {
        return CheckReport::not_applicable(
            NAME,
            "every affordable bundle overshoots the target, so the payment saturates at the cap",
        );
    }

    let mut failures = Vec::new();
    let canon = match QuotedPrice::for_target(q.p, q.base, dg) {
        Ok(c) => c,
        Err(e) => {
            return CheckReport::from_cases(
                NAME,
                1,
                vec![format!("no conforming quote at p={} P0={} gain={dg}: {e}", q.p, q.base)],
            );
        }
    };

    match selection(&seller, &inst.gains, &canon) {
        Some((cid, cdg, _)) => {
            if cid != id {
                failures.push(format!(
                    "the conforming quote {} draws {cid}, the original {} drew {id}",
                    fmt_quote(&canon),
                    fmt_quote(q)
                ));
            }
            if cdg != dg {
                failures.push(format!("elicited gain moved from {dg} to {cdg}"));
            }
        }
        None => failures.push(format!("the conforming quote {} draws no offer", fmt_quote(&canon))),
    }

    let linear = q.base + q.p * dg;
    for (label, v) in [
        ("original payment", q.payment(dg)),
        ("conforming payment", canon.payment(dg)),
    ] {
        if !close(v, linear, EXACT_TOL) {
            failures.push(format!("{label} {v} differs from the base-plus-price form {linear}"));
        }
    }
    let (net_q, net_c) = (inst.econ.net_profit(q, dg), inst.econ.net_profit(&canon, dg));
    if !close(net_q, net_c, EXACT_TOL) {
        failures.push(format!("buyer net moved from {net_q} to {net_c}"));
    }
    let t = canon.target_gain();
    if t < dg || !close(t, dg, 1e-9) {
        failures.push(format!("conforming target {t} is not pinned to the elicited gain {dg}"));
    }
    CheckReport::from_cases(NAME, 5, failures)
}

/// Sweeps the quote grid for every quote that elicits the given gain and
/// checks that none of them beats the cheapest conforming quote on the
/// buyer's net. Saturated (overshooting) settlements are out of scope.
pub fn lemma1_check(inst: &SmallInstance, dg: Gain) -> CheckReport {
    const NAME: &str = "conforming_quote_dominance";
    let seller = inst.seller();
    let budget = inst.econ.budget;

    let mut members: Vec<QuotedPrice> = Vec::new();
    for &p in &inst.grid.p.points() {
        for &base in &inst.grid.base.points() {
            if base > budget {
                continue;
            }
            for &cap in &Axis::new(base, budget, inst.grid.cap_steps).points() {
                let Ok(q) = QuotedPrice::new(p, base, cap) else { continue };
                if !inst.econ.admits(&q) {
                    continue;
                }
                match selection(&seller, &inst.gains, &q) {
                    Some((_, g, _)) if g == dg && g <= q.target_gain() => members.push(q),
                    _ => {}
                }
            }
        }
    }
    if members.is_empty() {
        return CheckReport::not_applicable(NAME, "no grid quote elicits this gain");
    }

    // one conforming candidate per distinct (p, P0); the grid's own members
    // back it up should a cap nudge land just past the budget
    let mut pairs: Vec<(u64, u64)> =
        members.iter().map(|q| (q.p.to_bits(), q.base.to_bits())).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut candidates: Vec<QuotedPrice> = Vec::new();
    for (pb, bb) in pairs {
        let (p, base) = (f64::from_bits(pb), f64::from_bits(bb));
        let Ok(c) = QuotedPrice::for_target(p, base, dg) else { continue };
        if !inst.econ.admits(&c) {
            continue;
        }
        if matches!(selection(&seller, &inst.gains, &c), Some((_, g, _)) if g == dg) {
            candidates.push(c);
        }
    }
    candidates.extend(members.iter().copied());
    let canon = candidates
        .into_iter()
        .min_by(|a, b| (a.cap, a.p).partial_cmp(&(b.cap, b.p)).unwrap())
        .expect("members are non-empty");

    let canon_net = inst.econ.net_profit(&canon, dg);
    let slack = EXACT_TOL * f64::max(1.0, inst.econ.unit_value);
    let cases = members.len();
    let failures: Vec<String> = members
        .iter()
        .filter(|m| inst.econ.net_profit(m, dg) > canon_net + slack)
        .map(|m| {
            format!(
                "grid quote {} nets {}, beating the conforming quote {} at {}",
                fmt_quote(m),
                inst.econ.net_profit(m, dg),
                fmt_quote(&canon),
                canon_net
            )
        })
        .collect();
    CheckReport::from_cases(NAME, cases, failures)
}

/// Which party's acceptance rule to audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSide {
    Seller,
    Buyer,
}

/// Under a constant per-round cost the cost-aware acceptance rule collapses
/// to a plain slack on the gain gap. Samples random market states and checks
/// the literal rule against the closed form, decision for decision.
pub fn constant_cost_check(
    side: CostSide,
    inst: &SmallInstance,
    cost: CostModel,
    eps_c: f64,
) -> CheckReport {
    let name = match side {
        CostSide::Seller => "seller_constant_cost_reduction",
        CostSide::Buyer => "buyer_constant_cost_reduction",
    };
    if !matches!(cost.kind, CostKind::Constant { .. }) {
        return CheckReport::not_applicable(
            name,
            "the closed-form slack only exists for constant per-round costs",
        );
    }

    let u = inst.econ.unit_value;
    let tol = Tolerances::new(inst.tol.eps_d, inst.tol.eps_t, eps_c, eps_c).unwrap();
    let buyer = TaskState::new(inst.econ, 0.1, tol, cost, inst.seed).unwrap();
    let seller = DataState::imperfect(inst.catalog.clone(), tol, cost);

    let g_lo = inst.gains.values().copied().fold(f64::INFINITY, f64::min);
    let g_hi = inst.gains.values().copied().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(inst.seed ^ side as u64);
    let mut failures = Vec::new();

    for case in 0..COST_CHECK_STATES {
        let p_hi = inst.grid.p.hi.min(0.98 * u);
        let p = rng.random_range(inst.grid.p.lo..=p_hi);
        let base = rng.random_range(inst.grid.base.lo..=inst.grid.base.hi.max(inst.grid.base.lo));
        let t_raw = rng.random_range(0.5 * g_lo..=1.3 * g_hi);
        let q = QuotedPrice::new(p, base, base + p * t_raw).unwrap();
        let t = q.target_gain();
        let dg = rng.random_range(0.0..=1.5 * t);
        let round = rng.random_range(1..=40u32);

        let (literal, threshold) = match side {
            CostSide::Buyer => {
                (buyer.accept_with_cost(&q, dg, round), t - eps_c / (u - p))
            }
            CostSide::Seller => {
                let reserved = ReservedPrice::new(
                    rng.random_range(0.3 * p..=1.7 * p),
                    rng.random_range(0.0..=2.0 * base + 0.2),
                )
                .unwrap();
                let literal = seller.accept_with_cost(&q, dg, t, Some(reserved), round);
                let eps_d = (eps_c
                    - (reserved.base.max(q.base) + reserved.p.max(q.p) * t - q.cap))
                    / q.p;
                (literal, t - eps_d)
            }
        };
        if literal != (dg >= threshold) {
            failures.push(format!(
                "case {case}: {} dg={dg} round={round}: literal rule said {literal}, \
                 closed-form threshold {threshold} says {}",
                fmt_quote(&q),
                dg >= threshold
            ));
        }
    }
    CheckReport::from_cases(name, COST_CHECK_STATES, failures)
}

/// A settled grid quote together with what it bought and earned.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub quote: QuotedPrice,
    pub bundle: BundleId,
    pub gain: Gain,
    pub payment: Money,
    pub net: Money,
}

/// Result of sweeping the whole quote grid against the seller's strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// Admissible quotes examined.
    pub examined: usize,
    /// Quotes the seller settled immediately within the gain-gap slack.
    pub settled: usize,
    /// Highest-net settlement; ties prefer lower caps, then lower unit prices.
    pub best: Option<EquilibriumPoint>,
}

fn better(a: &EquilibriumPoint, b: &EquilibriumPoint) -> bool {
    let ka = (-a.net, a.quote.cap, a.quote.p, a.quote.base);
    let kb = (-b.net, b.quote.cap, b.quote.p, b.quote.base);
    (ka, &a.bundle) < (kb, &b.bundle)
}

/// Exhaustively searches the quote grid for the settlement that maximizes
/// the buyer's net. Only immediate within-slack acceptances count; saturated
/// all-overshoot sales are skipped because their payment is pinned to the
/// cap rather than negotiated.
pub fn exhaustive_equilibrium(inst: &SmallInstance) -> EquilibriumReport {
    let seller = inst.seller();
    let budget = inst.econ.budget;
    let (examined, settled, best) = inst
        .grid
        .p
        .points()
        .par_iter()
        .map(|&p| {
            let mut examined = 0usize;
            let mut settled = 0usize;
            let mut best: Option<EquilibriumPoint> = None;
            for &base in &inst.grid.base.points() {
                if base > budget {
                    continue;
                }
                for &cap in &Axis::new(base, budget, inst.grid.cap_steps).points() {
                    let Ok(q) = QuotedPrice::new(p, base, cap) else { continue };
                    if !inst.econ.admits(&q) {
                        continue;
                    }
                    examined += 1;
                    let Some((id, g, accepted)) = selection(&seller, &inst.gains, &q) else {
                        continue;
                    };
                    if !accepted || g > q.target_gain() {
                        continue;
                    }
                    settled += 1;
                    let point = EquilibriumPoint {
                        quote: q,
                        bundle: id,
                        gain: g,
                        payment: q.payment(g),
                        net: inst.econ.net_profit(&q, g),
                    };
                    if best.as_ref().is_none_or(|b| better(&point, b)) {
                        best = Some(point);
                    }
                }
            }
            (examined, settled, best)
        })
        .reduce(
            || (0, 0, None),
            |a, b| {
                let best = match (a.2, b.2) {
                    (Some(x), Some(y)) => Some(if better(&x, &y) { x } else { y }),
                    (x, y) => x.or(y),
                };
                (a.0 + b.0, a.1 + b.1, best)
            },
        );
    EquilibriumReport { examined, settled, best }
}

/// Bundle of every check run against one instance.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub checks: Vec<CheckReport>,
    pub equilibrium: EquilibriumReport,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }
}

/// Runs the full battery on one instance: the canonical-quote identity and
/// grid dominance for every catalog gain, both constant-cost reductions, and
/// the exhaustive settlement search.
pub fn full_audit(inst: &SmallInstance) -> AuditReport {
    let p_mid = 0.5 * (inst.grid.p.lo + inst.grid.p.hi);
    let base_mid = 0.5 * (inst.grid.base.lo + inst.grid.base.hi);
    let mut checks = Vec::new();
    for (id, &g) in &inst.gains {
        if let Ok(q) = QuotedPrice::for_target(p_mid, base_mid, g) {
            let mut report = theorem1_check(inst, &q);
            report.name = format!("{}[{id}]", report.name);
            checks.push(report);
        }
        let mut report = lemma1_check(inst, g);
        report.name = format!("{}[{id}]", report.name);
        checks.push(report);
    }
    let cost = CostModel::new(CostKind::Constant { c: 0.25 }, 1.0).unwrap();
    checks.push(constant_cost_check(CostSide::Seller, inst, cost, 0.25));
    checks.push(constant_cost_check(CostSide::Buyer, inst, cost, 0.25));
    AuditReport { checks, equilibrium: exhaustive_equilibrium(inst) }
}
