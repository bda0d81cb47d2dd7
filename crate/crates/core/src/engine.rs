//! Session runner: alternating quote, bundle and gain turns between the
//! buyer and the seller, in process or over a transport, with replayable
//! transcripts.
//!
//! A round is one quote. Within it the seller answers with a bundle (or
//! `-` for none), the buyer evaluates the bundle and reports the gain, and
//! one side either settles, walks away, or the buyer opens the next round.
//! After a gain report the seller either accepts or repeats its offer
//! verbatim; the repeat is a turn-keeping acknowledgement and is not part
//! of the canonical log, which is therefore identical across transports.

use std::collections::{BTreeMap, BTreeSet};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{IncreasePriceState, RandomBundleState};
use crate::estimator::{BundleGainEstimator, EstimatorParams, PriceGainEstimator};
use crate::market::{
    BundleCatalog, CostModel, MarketError, QuotedPrice, TaskEconomics, Tolerances,
};
use crate::oracle::{GainOracle, OracleError};
use crate::strategy::{CaseId, DataState, Decision, QuoteRanges, TaskState, TaskVerdict};
use crate::transport::{in_memory_pair, Transport, TransportError};
use crate::wire::{self, Message};
use crate::{BundleId, FeatureId, Gain, Money, Round, NO_OFFER_ID};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("invalid session config: {0}")]
    BadConfig(String),
    #[error("protocol violation: expected {expected}, got {got:?}")]
    Protocol { expected: String, got: Message },
    #[error("offered bundle {0:?} is not in the catalog")]
    UnknownBundle(String),
    #[error("party thread panicked")]
    WorkerPanic,
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoSetting {
    /// Both parties know every bundle's realized gain up front.
    Perfect,
    /// Gains are learned online from per-round reports.
    Imperfect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TaskAgent {
    Strategic,
    /// Multiplies all price components by `growth` each round.
    IncreasePrice { growth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataAgent {
    Strategic,
    /// Offers a uniformly random affordable bundle.
    RandomBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub setting: InfoSetting,
    pub econ: TaskEconomics,
    pub target_gain: Gain,
    pub tolerances: Tolerances,
    pub task_cost: CostModel,
    pub data_cost: CostModel,
    pub catalog: BundleCatalog,
    pub max_rounds: Round,
    /// Imperfect setting only: rounds during which would-be failures are
    /// suppressed so the estimators keep getting data.
    pub explore_rounds: Round,
    pub task_agent: TaskAgent,
    pub data_agent: DataAgent,
    /// Fixed opening quote; drawn from `quote_ranges` when absent.
    pub initial_quote: Option<QuotedPrice>,
    pub quote_ranges: Option<QuoteRanges>,
    pub sample_count: Option<usize>,
    pub estimator: EstimatorParams,
    pub task_seed: u64,
    pub data_seed: u64,
    pub f_seed: u64,
    pub g_seed: u64,
}

impl SessionConfig {
    pub fn new(econ: TaskEconomics, target_gain: Gain, catalog: BundleCatalog) -> Self {
        Self {
            setting: InfoSetting::Perfect,
            econ,
            target_gain,
            tolerances: Tolerances::uniform(1e-3).expect("constant tolerance"),
            task_cost: CostModel::free(),
            data_cost: CostModel::free(),
            catalog,
            max_rounds: 500,
            explore_rounds: 100,
            task_agent: TaskAgent::Strategic,
            data_agent: DataAgent::Strategic,
            initial_quote: None,
            quote_ranges: None,
            sample_count: None,
            estimator: EstimatorParams::default(),
            task_seed: 1,
            data_seed: 2,
            f_seed: 3,
            g_seed: 4,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_rounds == 0 {
            return Err(EngineError::BadConfig("max_rounds must be at least 1".into()));
        }
        if !(self.target_gain.is_finite() && self.target_gain > 0.0) {
            return Err(EngineError::BadConfig("target gain must be positive and finite".into()));
        }
        if self.setting == InfoSetting::Imperfect {
            if self.explore_rounds > self.max_rounds {
                return Err(EngineError::BadConfig(
                    "exploration cannot outlast the round limit".into(),
                ));
            }
            if self.task_agent != TaskAgent::Strategic || self.data_agent != DataAgent::Strategic
            {
                return Err(EngineError::BadConfig(
                    "reference agents run under full information only".into(),
                ));
            }
        }
        if let Some(q) = self.initial_quote {
            if !self.econ.admits(&q) {
                return Err(EngineError::BadConfig(
                    "initial quote violates the unit-value or budget limit".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Metrics captured for one round (one quote).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: Round,
    pub quote: QuotedPrice,
    pub bundle: Option<BundleId>,
    pub realized: Option<Gain>,
    /// Payment the quote implies for the realized gain.
    pub payment: Option<Money>,
    /// Buyer's pre-cost profit at that payment.
    pub task_net: Option<Money>,
    /// Cumulative bargaining cost borne by each party through this round.
    pub task_cost: Money,
    pub data_cost: Money,
    pub f_mse: Option<f64>,
    pub g_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SessionOutcome {
    Success {
        round: Round,
        bundle: BundleId,
        quote: QuotedPrice,
        gain: Gain,
        payment: Money,
        /// Buyer's profit before bargaining costs.
        task_net: Money,
        /// Final unit price over the sold bundle's reserved unit price.
        premium_p: Money,
        /// Final base payment over the sold bundle's reserved base.
        premium_base: Money,
    },
    Failure {
        round: Round,
        case: CaseId,
        reason: String,
    },
}

impl SessionOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, SessionOutcome::Success { .. })
    }

    pub fn round(&self) -> Round {
        match *self {
            SessionOutcome::Success { round, .. } | SessionOutcome::Failure { round, .. } => round,
        }
    }
}

/// Replayable record of one session: rerunning its config reproduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub config: SessionConfig,
    pub messages: Vec<Message>,
    pub rounds: Vec<RoundRecord>,
    pub outcome: SessionOutcome,
}

impl SessionTranscript {
    pub fn is_success(&self) -> bool {
        self.outcome.is_success()
    }

    pub fn to_json(&self) -> Result<String, EngineError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        Ok(serde_json::from_str(text)?)
    }

    /// The canonical log in wire form, one message per line.
    pub fn wire_log(&self) -> String {
        wire::encode_log(&self.messages)
    }
}

/// What the seller side hands back after a session over a transport.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPartyReport {
    pub messages: Vec<Message>,
    pub outcome: SessionOutcome,
    /// Replay-buffer MSE of the bundle-gain estimator per gain round.
    pub g_mse: BTreeMap<Round, f64>,
}

/// Realized gain of every catalog bundle, the full-information seller's
/// knowledge base.
pub fn perfect_gain_table(
    catalog: &BundleCatalog,
    oracle: &mut dyn GainOracle,
) -> Result<BTreeMap<BundleId, Gain>, OracleError> {
    let mut table = BTreeMap::new();
    for e in catalog.entries() {
        table.insert(e.bundle.id.clone(), oracle.gain(&e.bundle)?);
    }
    Ok(table)
}

fn feature_universe(catalog: &BundleCatalog) -> Vec<FeatureId> {
    let mut set = BTreeSet::new();
    for e in catalog.entries() {
        set.extend(e.bundle.features.iter().cloned());
    }
    set.into_iter().collect()
}

fn send_logged(
    transport: &mut dyn Transport,
    log: &mut Vec<Message>,
    msg: Message,
) -> Result<(), TransportError> {
    transport.send(&msg)?;
    log.push(msg);
    Ok(())
}

enum Received {
    Msg(Message),
    TimedOut,
}

fn receive(transport: &mut dyn Transport) -> Result<Received, EngineError> {
    match transport.receive() {
        Ok(m) => Ok(Received::Msg(m)),
        Err(TransportError::Timeout) => Ok(Received::TimedOut),
        Err(e) => Err(e.into()),
    }
}

/// Best-effort terminal notice when the peer went quiet.
fn timeout_breakdown(
    transport: &mut dyn Transport,
    log: &mut Vec<Message>,
    round: Round,
    who: &str,
) -> SessionOutcome {
    let reason = format!("timed out waiting for the {who}");
    let msg = Message::Breakdown {
        round: round.max(1),
        case: CaseId::Transport,
        reason: reason.clone(),
    };
    let _ = transport.send(&msg);
    log.push(msg);
    SessionOutcome::Failure { round: round.max(1), case: CaseId::Transport, reason }
}

fn protocol(expected: impl Into<String>, got: Message) -> EngineError {
    EngineError::Protocol { expected: expected.into(), got }
}

enum NextMove {
    Accept,
    Fail(CaseId, String),
    Quote(QuotedPrice),
}

/// Buyer's move after a gain report, under whichever agent and setting the
/// config selects.
fn task_next_move(
    cfg: &SessionConfig,
    task: &mut TaskState,
    escalator: &mut Option<IncreasePriceState>,
    f: Option<&PriceGainEstimator>,
    quote: &QuotedPrice,
    realized: Gain,
    round: Round,
) -> NextMove {
    if let Some(esc) = escalator {
        return match task.classify_perfect(quote, realized, round) {
            TaskVerdict::Loss { reason } => NextMove::Fail(CaseId::TaskLoss, reason),
            TaskVerdict::Accept => NextMove::Accept,
            TaskVerdict::Continue => match esc.requote() {
                Ok(q) => NextMove::Quote(q),
                Err(_) => NextMove::Fail(
                    CaseId::Exhausted,
                    "escalation reached the unit-value and budget ceilings".into(),
                ),
            },
        };
    }
    match cfg.setting {
        InfoSetting::Perfect => match task.decide_perfect(realized, round) {
            Decision::AcceptSuccess { .. } => NextMove::Accept,
            Decision::BreakdownFail { case, reason } => NextMove::Fail(case, reason),
            Decision::ContinueWithQuote(q) => NextMove::Quote(q),
            other => unreachable!("buyer decision without a quote payload: {other:?}"),
        },
        InfoSetting::Imperfect => {
            match task.decide_imperfect(realized, round, cfg.explore_rounds) {
                Decision::AcceptSuccess { .. } => NextMove::Accept,
                Decision::BreakdownFail { case, reason } => NextMove::Fail(case, reason),
                Decision::Continue => next_estimated_quote(task, f),
                other => unreachable!("unexpected buyer decision: {other:?}"),
            }
        }
    }
}

fn next_estimated_quote(task: &mut TaskState, f: Option<&PriceGainEstimator>) -> NextMove {
    let est = f.expect("imperfect sessions carry a price-gain estimator");
    match task.quote_with_estimator(|q| est.predict(q)) {
        Ok(q) => NextMove::Quote(q),
        Err(e) => NextMove::Fail(CaseId::Exhausted, format!("no further quote available: {e}")),
    }
}

/// Runs the buyer's side of a session over a transport. The buyer hosts the
/// gain oracle and reports realized gains to the seller.
pub fn run_task_party(
    cfg: &SessionConfig,
    oracle: &mut dyn GainOracle,
    transport: &mut dyn Transport,
) -> Result<SessionTranscript, EngineError> {
    cfg.validate()?;
    let mut task = TaskState::new(
        cfg.econ,
        cfg.target_gain,
        cfg.tolerances,
        cfg.task_cost,
        cfg.task_seed,
    )?;
    if let Some(r) = cfg.quote_ranges {
        task = task.with_ranges(r)?;
    }
    if let Some(n) = cfg.sample_count {
        task = task.with_sample_count(n)?;
    }
    let mut f = match cfg.setting {
        InfoSetting::Imperfect => Some(PriceGainEstimator::new(
            cfg.econ.unit_value,
            cfg.econ.budget,
            cfg.estimator.clone(),
            cfg.f_seed,
        )),
        InfoSetting::Perfect => None,
    };
    let initial = match cfg.initial_quote {
        Some(q) => {
            task.install_quote(q)?;
            q
        }
        None => task.initial_quote()?,
    };
    let mut escalator = match cfg.task_agent {
        TaskAgent::Strategic => None,
        TaskAgent::IncreasePrice { growth } => {
            Some(IncreasePriceState::new(cfg.econ, growth, initial)?)
        }
    };

    let mut log = Vec::new();
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut round: Round = 1;
    let mut quote = initial;
    let record = |round: Round, quote: QuotedPrice, cfg: &SessionConfig| RoundRecord {
        round,
        quote,
        bundle: None,
        realized: None,
        payment: None,
        task_net: None,
        task_cost: cfg.task_cost.eval(round),
        data_cost: cfg.data_cost.eval(round),
        f_mse: None,
        g_mse: None,
    };

    send_logged(
        transport,
        &mut log,
        Message::QuoteOffer { round, p: quote.p, base: quote.base, cap: quote.cap },
    )?;

    let outcome = 'session: loop {
        // seller's answer to the standing quote
        let msg = match receive(transport)? {
            Received::Msg(m) => m,
            Received::TimedOut => {
                rounds.push(record(round, quote, cfg));
                break 'session timeout_breakdown(transport, &mut log, round, "seller");
            }
        };
        let bundle_id = match msg {
            Message::Breakdown { round: r, case, ref reason } if r == round => {
                log.push(msg.clone());
                rounds.push(record(round, quote, cfg));
                break 'session SessionOutcome::Failure { round: r, case, reason: reason.clone() };
            }
            Message::BundleOffer { round: r, ref bundle_id } if r == round => {
                log.push(msg.clone());
                bundle_id.clone()
            }
            other => return Err(protocol(format!("a bundle offer for round {round}"), other)),
        };

        if bundle_id == NO_OFFER_ID {
            // nothing to evaluate; open the next round straight away
            rounds.push(record(round, quote, cfg));
            if round == cfg.max_rounds {
                let reason = format!("round limit {} reached", cfg.max_rounds);
                send_logged(
                    transport,
                    &mut log,
                    Message::Breakdown { round, case: CaseId::MaxRounds, reason: reason.clone() },
                )?;
                break 'session SessionOutcome::Failure {
                    round,
                    case: CaseId::MaxRounds,
                    reason,
                };
            }
            match next_estimated_quote(&mut task, f.as_ref()) {
                NextMove::Quote(q) => {
                    round += 1;
                    quote = q;
                    send_logged(
                        transport,
                        &mut log,
                        Message::QuoteOffer { round, p: q.p, base: q.base, cap: q.cap },
                    )?;
                    continue 'session;
                }
                NextMove::Fail(case, reason) => {
                    send_logged(
                        transport,
                        &mut log,
                        Message::Breakdown { round, case, reason: reason.clone() },
                    )?;
                    break 'session SessionOutcome::Failure { round, case, reason };
                }
                NextMove::Accept => unreachable!("no gain to accept on an empty offer"),
            }
        }

        let entry = cfg
            .catalog
            .get(&bundle_id)
            .ok_or_else(|| EngineError::UnknownBundle(bundle_id.clone()))?;
        let realized = oracle.gain(&entry.bundle)?;
        send_logged(transport, &mut log, Message::GainReport { round, delta_g: realized })?;
        let f_mse = f.as_mut().map(|est| est.observe(&quote, realized));
        let payment = quote.payment(realized);
        rounds.push(RoundRecord {
            bundle: Some(bundle_id.clone()),
            realized: Some(realized),
            payment: Some(payment),
            task_net: Some(cfg.econ.net_profit(&quote, realized)),
            f_mse,
            ..record(round, quote, cfg)
        });
        let success = |r: Round, pay: Money| SessionOutcome::Success {
            round: r,
            bundle: bundle_id.clone(),
            quote,
            gain: realized,
            payment: pay,
            task_net: cfg.econ.unit_value * realized - pay,
            premium_p: quote.p - entry.reserved.p,
            premium_base: quote.base - entry.reserved.base,
        };

        // seller either settles or repeats its offer to pass the turn back
        let msg2 = match receive(transport)? {
            Received::Msg(m) => m,
            Received::TimedOut => {
                break 'session timeout_breakdown(transport, &mut log, round, "seller")
            }
        };
        match msg2 {
            Message::Accept { round: r, payment: pay } if r == round => {
                log.push(msg2.clone());
                break 'session success(r, pay);
            }
            Message::Breakdown { round: r, case, ref reason } if r == round => {
                log.push(msg2.clone());
                break 'session SessionOutcome::Failure { round: r, case, reason: reason.clone() };
            }
            Message::BundleOffer { round: r, bundle_id: ref b2 }
                if r == round && *b2 == bundle_id =>
            {
                // acknowledgement only; the buyer decides now
                match task_next_move(cfg, &mut task, &mut escalator, f.as_ref(), &quote, realized, round)
                {
                    NextMove::Accept => {
                        send_logged(
                            transport,
                            &mut log,
                            Message::Accept { round, payment },
                        )?;
                        break 'session success(round, payment);
                    }
                    NextMove::Fail(case, reason) => {
                        send_logged(
                            transport,
                            &mut log,
                            Message::Breakdown { round, case, reason: reason.clone() },
                        )?;
                        break 'session SessionOutcome::Failure { round, case, reason };
                    }
                    NextMove::Quote(q) => {
                        if round == cfg.max_rounds {
                            let reason = format!("round limit {} reached", cfg.max_rounds);
                            send_logged(
                                transport,
                                &mut log,
                                Message::Breakdown {
                                    round,
                                    case: CaseId::MaxRounds,
                                    reason: reason.clone(),
                                },
                            )?;
                            break 'session SessionOutcome::Failure {
                                round,
                                case: CaseId::MaxRounds,
                                reason,
                            };
                        }
                        round += 1;
                        quote = q;
                        send_logged(
                            transport,
                            &mut log,
                            Message::QuoteOffer { round, p: q.p, base: q.base, cap: q.cap },
                        )?;
                    }
                }
            }
            other => {
                return Err(protocol(
                    format!("settlement or repeated offer for round {round}"),
                    other,
                ))
            }
        }
    };

    Ok(SessionTranscript { config: cfg.clone(), messages: log, rounds, outcome })
}

/// Runs the seller's side of a session over a transport. Under full
/// information the caller supplies the realized gain of every catalog
/// bundle; otherwise gains are learned from the buyer's reports.
pub fn run_data_party(
    cfg: &SessionConfig,
    known_gains: Option<BTreeMap<BundleId, Gain>>,
    transport: &mut dyn Transport,
) -> Result<DataPartyReport, EngineError> {
    cfg.validate()?;
    let data = match cfg.setting {
        InfoSetting::Perfect => {
            let gains = known_gains.ok_or_else(|| {
                EngineError::BadConfig("the full-information seller needs a gain table".into())
            })?;
            DataState::perfect(cfg.catalog.clone(), gains, cfg.tolerances, cfg.data_cost)?
        }
        InfoSetting::Imperfect => {
            DataState::imperfect(cfg.catalog.clone(), cfg.tolerances, cfg.data_cost)
        }
    };
    let mut g = match cfg.setting {
        InfoSetting::Imperfect => Some(BundleGainEstimator::new(
            feature_universe(&cfg.catalog),
            cfg.estimator.clone(),
            cfg.g_seed,
        )),
        InfoSetting::Perfect => None,
    };
    let mut random_seller = match cfg.data_agent {
        DataAgent::RandomBundle => Some(RandomBundleState::new(cfg.data_seed)),
        DataAgent::Strategic => None,
    };

    let mut log = Vec::new();
    let mut g_mse = BTreeMap::new();
    let mut round: Round = 0;
    // last offer: bundle id, accept intent, the quote it answers
    let mut pending: Option<(BundleId, bool, QuotedPrice)> = None;
    let mut last_gain: Option<Gain> = None;

    let outcome = 'session: loop {
        let msg = match receive(transport)? {
            Received::Msg(m) => m,
            Received::TimedOut => {
                break 'session timeout_breakdown(transport, &mut log, round, "buyer")
            }
        };
        match msg {
            Message::QuoteOffer { round: r, p, base, cap } => {
                if r != round + 1 || r > cfg.max_rounds {
                    return Err(protocol(format!("a quote for round {}", round + 1), msg));
                }
                round = r;
                let q = QuotedPrice::new(p, base, cap)?;
                log.push(msg.clone());
                let decision = match &mut random_seller {
                    Some(rs) => rs.offer(&data.catalog, &q),
                    None => match cfg.setting {
                        InfoSetting::Perfect => data.decide_perfect(&q, round),
                        InfoSetting::Imperfect => {
                            let est = g.as_ref().expect("imperfect seller has an estimator");
                            data.decide_imperfect(
                                |b| {
                                    est.predict(&b.features)
                                        .expect("catalog features are embedded")
                                },
                                &q,
                                round,
                                cfg.explore_rounds,
                            )
                        }
                    },
                };
                match decision {
                    Decision::BreakdownFail { case, reason } => {
                        send_logged(
                            transport,
                            &mut log,
                            Message::Breakdown { round, case, reason: reason.clone() },
                        )?;
                        break 'session SessionOutcome::Failure { round, case, reason };
                    }
                    Decision::Continue => {
                        pending = None;
                        send_logged(
                            transport,
                            &mut log,
                            Message::BundleOffer { round, bundle_id: NO_OFFER_ID.into() },
                        )?;
                    }
                    Decision::ContinueWithBundle(id) => {
                        pending = Some((id.clone(), false, q));
                        send_logged(
                            transport,
                            &mut log,
                            Message::BundleOffer { round, bundle_id: id },
                        )?;
                    }
                    Decision::AcceptSuccess { bundle: Some(id) } => {
                        pending = Some((id.clone(), true, q));
                        send_logged(
                            transport,
                            &mut log,
                            Message::BundleOffer { round, bundle_id: id },
                        )?;
                    }
                    other => unreachable!("seller decisions carry a bundle: {other:?}"),
                }
            }
            Message::GainReport { round: r, delta_g } => {
                let Some((id, intent, q)) = pending.clone() else {
                    return Err(protocol("a quote (no offer is pending)", msg));
                };
                if r != round {
                    return Err(protocol(format!("a gain report for round {round}"), msg));
                }
                log.push(msg.clone());
                last_gain = Some(delta_g);
                if let Some(est) = g.as_mut() {
                    let feats =
                        &cfg.catalog.get(&id).expect("offered from the catalog").bundle.features;
                    let mse = est.observe(feats, delta_g).expect("catalog features are embedded");
                    g_mse.insert(round, mse);
                }
                if intent {
                    let payment = q.payment(delta_g);
                    send_logged(transport, &mut log, Message::Accept { round, payment })?;
                    break 'session seller_success(cfg, round, &id, q, delta_g, payment);
                }
                // pass the turn back by repeating the offer
                transport.send(&Message::BundleOffer { round, bundle_id: id })?;
            }
            Message::Accept { round: r, payment } if r == round => {
                let Some((id, _, q)) = pending.clone() else {
                    return Err(protocol("a quote (no offer is pending)", msg));
                };
                log.push(msg.clone());
                let gain = last_gain.expect("acceptance follows a gain report");
                break 'session seller_success(cfg, round, &id, q, gain, payment);
            }
            // a terminal may overtake the quote it follows by one round
            Message::Breakdown { round: r, case, ref reason }
                if r == round || r == round + 1 =>
            {
                log.push(msg.clone());
                break 'session SessionOutcome::Failure { round: r, case, reason: reason.clone() };
            }
            other => return Err(protocol(format!("a message for round {round}"), other)),
        }
    };

    Ok(DataPartyReport { messages: log, outcome, g_mse })
}

fn seller_success(
    cfg: &SessionConfig,
    round: Round,
    bundle: &str,
    quote: QuotedPrice,
    gain: Gain,
    payment: Money,
) -> SessionOutcome {
    let reserved = cfg.catalog.get(bundle).expect("offered from the catalog").reserved;
    SessionOutcome::Success {
        round,
        bundle: bundle.to_string(),
        quote,
        gain,
        payment,
        task_net: cfg.econ.unit_value * gain - payment,
        premium_p: quote.p - reserved.p,
        premium_base: quote.base - reserved.base,
    }
}

/// Runs a whole session in process over an in-memory transport pair and
/// merges both parties' views into one transcript.
pub fn run_session(
    cfg: &SessionConfig,
    oracle: &mut dyn GainOracle,
) -> Result<SessionTranscript, EngineError> {
    cfg.validate()?;
    let known = match cfg.setting {
        InfoSetting::Perfect => Some(perfect_gain_table(&cfg.catalog, oracle)?),
        InfoSetting::Imperfect => None,
    };
    let (mut buyer_end, mut seller_end) = in_memory_pair();
    let (task_res, data_res) = thread::scope(|s| {
        let handle = s.spawn(move || run_data_party(cfg, known, &mut seller_end));
        let task_res = run_task_party(cfg, oracle, &mut buyer_end);
        (task_res, handle.join())
    });
    let report = data_res.map_err(|_| EngineError::WorkerPanic)??;
    let mut transcript = task_res?;
    for rec in &mut transcript.rounds {
        rec.g_mse = report.g_mse.get(&rec.round).copied();
    }
    debug_assert_eq!(transcript.messages, report.messages);
    debug_assert_eq!(transcript.outcome, report.outcome);
    Ok(transcript)
}

/// [`run_session`] with the config forced into the learning setting.
pub fn run_session_imperfect(
    cfg: &SessionConfig,
    oracle: &mut dyn GainOracle,
) -> Result<SessionTranscript, EngineError> {
    let mut cfg = cfg.clone();
    cfg.setting = InfoSetting::Imperfect;
    run_session(&cfg, oracle)
}
