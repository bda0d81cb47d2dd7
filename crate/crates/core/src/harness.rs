//! Batch execution and metrics. Runs a configured experiment over many
//! seeded repetitions, in parallel, and turns the transcripts into the
//! plot-ready artifacts: raw per-round CSV, summary statistics, price
//! density histograms, and estimator error curves.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{CatalogSection, CostSection, ExperimentConfig, OracleSection};
use crate::dataset::{Dataset, DatasetError, DatasetSchema};
use crate::engine::{run_session, EngineError, SessionConfig, SessionOutcome, SessionTranscript};
use crate::market::{
    BundleCatalog, CatalogEntry, CostModel, FeatureBundle, MarketError, QuotedPrice,
    ReservedPrice, TaskEconomics, Tolerances,
};
use crate::oracle::{GainOracle, OracleError, SyntheticOracle, VflOracle};
use crate::strategy::TaskState;
use crate::Round;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Sample mean with a 95% confidence half-width (1.96 standard errors).
/// One observation has zero width by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

impl MeanCi {
    fn from(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = mean(xs);
        let ci95 = if n < 2 { 0.0 } else { 1.96 * sample_std(xs) / (n as f64).sqrt() };
        Self { mean, ci95, n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    fn from(xs: &[f64]) -> Self {
        Self { mean: mean(xs), std: sample_std(xs), n: xs.len() }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Cross-run statistics for one bargaining round, over the runs still alive
/// and holding an offer at that round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerRoundStats {
    pub round: Round,
    pub net: MeanCi,
    pub payment: MeanCi,
    pub gain: MeanCi,
}

/// Final-quote statistics over successful runs only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalState {
    pub p: MeanStd,
    pub base: MeanStd,
    pub cap: MeanStd,
    /// Final unit price minus the sold bundle's reserved unit price.
    pub premium_p: MeanStd,
    /// Final base payment minus the sold bundle's reserved base.
    pub premium_base: MeanStd,
    pub gain: MeanStd,
    pub net: MeanStd,
    pub payment: MeanStd,
    pub task_cost: MeanStd,
    pub data_cost: MeanStd,
}

/// Aggregated batch outcome. Failed runs never contribute numeric values to
/// the aggregates; they are counted under their termination case instead.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub runs: usize,
    pub successes: usize,
    pub failure_rate: f64,
    /// Failure count per termination case code.
    pub failures: BTreeMap<String, usize>,
    /// Termination round distribution over all runs.
    pub rounds: BTreeMap<Round, usize>,
    pub per_round: Vec<PerRoundStats>,
    /// Absent when every run failed.
    pub final_state: Option<FinalState>,
}

/// Everything one batch (one agent, one cost model) produced.
#[derive(Debug, Clone)]
pub struct BatchArtifacts {
    pub label: String,
    pub raw_csv: String,
    pub summary: MetricsSummary,
    pub density_csv: String,
    /// True when no run succeeded and the density artifact is header-only.
    pub density_empty: bool,
    /// Estimator error curves; only emitted for imperfect-information runs.
    pub mse_csv: Option<String>,
    pub transcripts: Vec<SessionTranscript>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub batches: Vec<BatchArtifacts>,
}

/// Catalog, shared dataset, and resolved market constants for one
/// experiment; fixed across repetitions, agents, and costs.
struct Prepared {
    econ: TaskEconomics,
    tol: Tolerances,
    catalog: BundleCatalog,
    dataset: Option<Dataset>,
    initial: Option<QuotedPrice>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    let econ = cfg.economics()?;
    let tol = cfg.resolved_tolerances()?;

    let dataset = match &cfg.oracle {
        OracleSection::Dataset { csv, schema, .. } => {
            let schema = DatasetSchema::from_path(schema)?;
            Some(Dataset::load(csv, &schema)?)
        }
        _ => None,
    };

    let catalog = match &cfg.catalog {
        CatalogSection::Explicit { bundles } => {
            let entries = bundles
                .iter()
                .map(|b| {
                    Ok(CatalogEntry {
                        bundle: FeatureBundle::new(b.id.clone(), b.features.clone())?,
                        reserved: ReservedPrice::new(b.p, b.base)?,
                    })
                })
                .collect::<Result<Vec<_>, MarketError>>()?;
            BundleCatalog::new(entries)?
        }
        CatalogSection::Sampled { count, alpha, beta, seed } => {
            let features: Vec<String> = match (&cfg.oracle, &dataset) {
                (OracleSection::Parametric { weights, .. }, _) => {
                    weights.keys().cloned().collect()
                }
                (_, Some(ds)) => ds.data.groups.iter().map(|g| g.name.clone()).collect(),
                _ => unreachable!("validation rejects sampled catalogs over gain tables"),
            };
            let seed = seed.unwrap_or(cfg.experiment.seed_base ^ 0x9e37_79b9_7f4a_7c15);
            sample_catalog(&features, *count, *alpha, *beta, seed)?
        }
    };

    Ok(Prepared { econ, tol, catalog, dataset, initial: cfg.initial_quote()? })
}

/// Seeded random catalog: bundle sizes uniform in [1, d], reserved prices
/// proportional to size.
pub fn sample_catalog(
    features: &[String],
    count: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<BundleCatalog, MarketError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = features.len();
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let size = rng.random_range(1..=d);
        let mut picked: Vec<String> = rand::seq::index::sample(&mut rng, d, size)
            .into_iter()
            .map(|j| features[j].clone())
            .collect();
        picked.sort_unstable();
        entries.push(CatalogEntry {
            bundle: FeatureBundle::new(format!("B{:02}", i + 1), picked)?,
            reserved: ReservedPrice::new(alpha * size as f64, beta * size as f64)?,
        });
    }
    BundleCatalog::new(entries)
}

/// Per-repetition seeds, all derived from `seed_base + rep` in a fixed
/// order so every agent kind sees the same opening quote and oracle.
struct RepSeeds {
    quote: u64,
    task: u64,
    data: u64,
    oracle: u64,
    f: u64,
    g: u64,
}

impl RepSeeds {
    fn derive(seed_base: u64, rep: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed_base.wrapping_add(rep as u64));
        Self {
            quote: rng.random(),
            task: rng.random(),
            data: rng.random(),
            oracle: rng.random(),
            f: rng.random(),
            g: rng.random(),
        }
    }
}

fn build_oracle(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    oracle_seed: u64,
) -> Result<Box<dyn GainOracle>, HarnessError> {
    Ok(match &cfg.oracle {
        OracleSection::Table { gains } => Box::new(SyntheticOracle::table(gains.clone())),
        OracleSection::Parametric { gmax, weights } => {
            Box::new(SyntheticOracle::parametric(*gmax, weights.clone()))
        }
        OracleSection::Dataset { params, .. } => {
            let ds = prep.dataset.as_ref().expect("dataset oracles load their data up front");
            Box::new(VflOracle::new(ds.clone(), params.clone(), oracle_seed)?)
        }
    })
}

fn run_one(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    cost: CostModel,
    rep: usize,
) -> Result<SessionTranscript, HarnessError> {
    let seeds = RepSeeds::derive(cfg.experiment.seed_base, rep);

    let initial = match prep.initial {
        Some(q) => q,
        None => {
            let mut drawer =
                TaskState::new(prep.econ, cfg.target_gain, prep.tol, CostModel::free(), seeds.quote)?;
            if let Some(ranges) = cfg.quote_ranges() {
                drawer = drawer.with_ranges(ranges)?;
            }
            drawer.initial_quote()?
        }
    };

    let (task_agent, data_agent) = cfg.experiment.agent.parties(cfg.experiment.growth);
    let mut session = SessionConfig::new(prep.econ, cfg.target_gain, prep.catalog.clone());
    session.setting = cfg.experiment.setting;
    session.tolerances = prep.tol;
    session.task_cost = cost;
    session.data_cost = cost;
    session.max_rounds = cfg.session.max_rounds;
    session.explore_rounds = cfg.session.explore_rounds;
    session.task_agent = task_agent;
    session.data_agent = data_agent;
    session.initial_quote = Some(initial);
    session.quote_ranges = cfg.quote_ranges();
    session.sample_count = cfg.session.sample_count;
    session.task_seed = seeds.task;
    session.data_seed = seeds.data;
    session.f_seed = seeds.f;
    session.g_seed = seeds.g;

    let mut oracle = build_oracle(cfg, prep, seeds.oracle)?;
    Ok(run_session(&session, oracle.as_mut())?)
}

/// Runs every repetition for one cost model. Repetitions execute in
/// parallel; results are ordered by repetition index.
pub fn run_batch(cfg: &ExperimentConfig, cost: &CostSection) -> Result<BatchArtifacts, HarnessError> {
    let prep = prepare(cfg)?;
    let model = cost.model()?;
    let transcripts: Vec<SessionTranscript> = (0..cfg.experiment.repetitions)
        .into_par_iter()
        .map(|rep| run_one(cfg, &prep, model, rep))
        .collect::<Result<_, _>>()?;

    let raw_csv = raw_csv(&transcripts, &prep.catalog)?;
    let summary = summarize(&transcripts);
    let finals = final_settlements(&transcripts, &prep.catalog);
    let (density_csv, density_empty) = emit_density(&finals)?;
    let mse_csv = match cfg.experiment.setting {
        crate::engine::InfoSetting::Imperfect => Some(emit_mse_curves(&transcripts)?),
        crate::engine::InfoSetting::Perfect => None,
    };
    Ok(BatchArtifacts {
        label: cost.label(),
        raw_csv,
        summary,
        density_csv,
        density_empty,
        mse_csv,
        transcripts,
    })
}

/// Runs the experiment over its whole cost list.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    let mut batches = Vec::new();
    for cost in cfg.cost_list() {
        batches.push(run_batch(cfg, &cost)?);
    }
    Ok(ExperimentResult { batches })
}

/// Final quote and the sold bundle's reserved price, per successful run.
pub fn final_settlements(
    transcripts: &[SessionTranscript],
    catalog: &BundleCatalog,
) -> Vec<(QuotedPrice, ReservedPrice)> {
    transcripts
        .iter()
        .filter_map(|t| match &t.outcome {
            SessionOutcome::Success { quote, bundle, .. } => {
                catalog.get(bundle).map(|e| (*quote, e.reserved))
            }
            SessionOutcome::Failure { .. } => None,
        })
        .collect()
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per run per round, with enough context (reserved prices, final
/// status) to recompute every summary statistic from the file alone.
fn raw_csv(
    transcripts: &[SessionTranscript],
    catalog: &BundleCatalog,
) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "rep", "round", "p", "base", "cap", "bundle", "reserved_p", "reserved_base", "gain",
        "payment", "net", "task_cost", "data_cost", "f_mse", "g_mse", "status", "case",
        "final_round",
    ])?;
    for (rep, t) in transcripts.iter().enumerate() {
        let (status, case) = match &t.outcome {
            SessionOutcome::Success { .. } => ("success", String::new()),
            SessionOutcome::Failure { case, .. } => ("failure", case.code().to_string()),
        };
        let final_round = t.outcome.round().to_string();
        for r in &t.rounds {
            let reserved = r.bundle.as_deref().and_then(|id| catalog.get(id)).map(|e| e.reserved);
            w.write_record([
                rep.to_string(),
                r.round.to_string(),
                r.quote.p.to_string(),
                r.quote.base.to_string(),
                r.quote.cap.to_string(),
                r.bundle.clone().unwrap_or_default(),
                csv_opt(reserved.map(|x| x.p)),
                csv_opt(reserved.map(|x| x.base)),
                csv_opt(r.realized),
                csv_opt(r.payment),
                csv_opt(r.task_net),
                r.task_cost.to_string(),
                r.data_cost.to_string(),
                csv_opt(r.f_mse),
                csv_opt(r.g_mse),
                status.to_string(),
                case.clone(),
                final_round.clone(),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("vec writer")).expect("csv is utf-8"))
}

pub fn summarize(transcripts: &[SessionTranscript]) -> MetricsSummary {
    let runs = transcripts.len();
    let successes = transcripts.iter().filter(|t| t.outcome.is_success()).count();

    let mut failures: BTreeMap<String, usize> = BTreeMap::new();
    let mut rounds: BTreeMap<Round, usize> = BTreeMap::new();
    for t in transcripts {
        *rounds.entry(t.outcome.round()).or_default() += 1;
        if let SessionOutcome::Failure { case, .. } = &t.outcome {
            *failures.entry(case.code().to_string()).or_default() += 1;
        }
    }

    let mut per_round_acc: BTreeMap<Round, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for t in transcripts {
        for r in &t.rounds {
            if let (Some(gain), Some(payment), Some(net)) = (r.realized, r.payment, r.task_net) {
                let slot = per_round_acc.entry(r.round).or_default();
                slot.0.push(net);
                slot.1.push(payment);
                slot.2.push(gain);
            }
        }
    }
    let per_round = per_round_acc
        .into_iter()
        .map(|(round, (net, payment, gain))| PerRoundStats {
            round,
            net: MeanCi::from(&net),
            payment: MeanCi::from(&payment),
            gain: MeanCi::from(&gain),
        })
        .collect();

    let mut fin: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for t in transcripts {
        let SessionOutcome::Success {
            round,
            quote,
            gain,
            payment,
            task_net,
            premium_p,
            premium_base,
            ..
        } = &t.outcome
        else {
            continue;
        };
        fin.entry("p").or_default().push(quote.p);
        fin.entry("base").or_default().push(quote.base);
        fin.entry("cap").or_default().push(quote.cap);
        fin.entry("premium_p").or_default().push(*premium_p);
        fin.entry("premium_base").or_default().push(*premium_base);
        fin.entry("gain").or_default().push(*gain);
        fin.entry("net").or_default().push(*task_net);
        fin.entry("payment").or_default().push(*payment);
        let record = t.rounds.iter().find(|r| r.round == *round);
        fin.entry("task_cost").or_default().push(record.map_or(0.0, |r| r.task_cost));
        fin.entry("data_cost").or_default().push(record.map_or(0.0, |r| r.data_cost));
    }
    let final_state = (successes > 0).then(|| FinalState {
        p: MeanStd::from(&fin["p"]),
        base: MeanStd::from(&fin["base"]),
        cap: MeanStd::from(&fin["cap"]),
        premium_p: MeanStd::from(&fin["premium_p"]),
        premium_base: MeanStd::from(&fin["premium_base"]),
        gain: MeanStd::from(&fin["gain"]),
        net: MeanStd::from(&fin["net"]),
        payment: MeanStd::from(&fin["payment"]),
        task_cost: MeanStd::from(&fin["task_cost"]),
        data_cost: MeanStd::from(&fin["data_cost"]),
    });

    MetricsSummary {
        runs,
        successes,
        failure_rate: (runs - successes) as f64 / runs.max(1) as f64,
        failures,
        rounds,
        per_round,
        final_state,
    }
}

const DENSITY_BINS: usize = 20;

/// Histograms of final quoted prices against the sold bundles' reserved
/// prices, sharing bin edges per metric so the two series line up. Returns
/// the CSV and whether it is empty (no successful runs).
pub fn emit_density(
    finals: &[(QuotedPrice, ReservedPrice)],
) -> Result<(String, bool), HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "series", "bin_lo", "bin_hi", "count"])?;
    let empty = finals.is_empty();
    let metrics: [(&str, Vec<f64>, Vec<f64>); 2] = [
        (
            "unit_price",
            finals.iter().map(|(q, _)| q.p).collect(),
            finals.iter().map(|(_, r)| r.p).collect(),
        ),
        (
            "base_payment",
            finals.iter().map(|(q, _)| q.base).collect(),
            finals.iter().map(|(_, r)| r.base).collect(),
        ),
    ];
    for (metric, final_vals, reserved_vals) in &metrics {
        if final_vals.is_empty() {
            continue;
        }
        let all = final_vals.iter().chain(reserved_vals.iter());
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = if lo == hi { 1 } else { DENSITY_BINS };
        let width = if bins == 1 { 0.0 } else { (hi - lo) / bins as f64 };
        for (series, vals) in [("final", final_vals), ("reserved", reserved_vals)] {
            let mut counts = vec![0usize; bins];
            for &v in vals.iter() {
                let idx = if bins == 1 {
                    0
                } else {
                    (((v - lo) / width) as usize).min(bins - 1)
                };
                counts[idx] += 1;
            }
            for (i, count) in counts.iter().enumerate() {
                let (b_lo, b_hi) = if bins == 1 {
                    (lo, hi)
                } else {
                    (lo + width * i as f64, lo + width * (i + 1) as f64)
                };
                w.write_record([
                    metric.to_string(),
                    series.to_string(),
                    b_lo.to_string(),
                    b_hi.to_string(),
                    count.to_string(),
                ])?;
            }
        }
    }
    Ok((String::from_utf8(w.into_inner().expect("vec writer")).expect("csv is utf-8"), empty))
}

/// Mean estimator error per round across runs, one column per party's
/// estimator, with the number of contributing runs.
pub fn emit_mse_curves(transcripts: &[SessionTranscript]) -> Result<String, HarnessError> {
    let mut acc: BTreeMap<Round, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for t in transcripts {
        for r in &t.rounds {
            if let Some(f) = r.f_mse {
                acc.entry(r.round).or_default().0.push(f);
            }
            if let Some(g) = r.g_mse {
                acc.entry(r.round).or_default().1.push(g);
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["round", "f_mse", "f_runs", "g_mse", "g_runs"])?;
    for (round, (f, g)) in acc {
        w.write_record([
            round.to_string(),
            if f.is_empty() { String::new() } else { mean(&f).to_string() },
            f.len().to_string(),
            if g.is_empty() { String::new() } else { mean(&g).to_string() },
            g.len().to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("vec writer")).expect("csv is utf-8"))
}

#[derive(Serialize)]
struct SweepEntry<'a> {
    label: &'a str,
    summary: &'a MetricsSummary,
}

/// Writes one directory per cost label (or the directory itself for a
/// single batch): raw.csv, summary.json, density.csv, transcripts.jsonl,
/// mse.csv for imperfect runs, and sweep.json when sweeping.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let nested = result.batches.len() > 1;
    for batch in &result.batches {
        let target = if nested { dir.join(&batch.label) } else { dir.to_path_buf() };
        std::fs::create_dir_all(&target)?;
        std::fs::write(target.join("raw.csv"), &batch.raw_csv)?;
        let mut summary = serde_json::to_string_pretty(&batch.summary)?;
        summary.push('\n');
        std::fs::write(target.join("summary.json"), summary)?;
        std::fs::write(target.join("density.csv"), &batch.density_csv)?;
        if let Some(mse) = &batch.mse_csv {
            std::fs::write(target.join("mse.csv"), mse)?;
        }
        let mut lines = String::new();
        for t in &batch.transcripts {
            lines.push_str(&serde_json::to_string(t)?);
            lines.push('\n');
        }
        std::fs::write(target.join("transcripts.jsonl"), lines)?;
    }
    if nested {
        let entries: Vec<SweepEntry> = result
            .batches
            .iter()
            .map(|b| SweepEntry { label: &b.label, summary: &b.summary })
            .collect();
        let mut sweep = serde_json::to_string_pretty(&entries)?;
        sweep.push('\n');
        std::fs::write(dir.join("sweep.json"), sweep)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s1_toml(reps: usize, agent: &str) -> String {
        format!(
            r#"
            target_gain = 0.1

            [experiment]
            repetitions = {reps}
            seed_base = 42
            agent = "{agent}"

            [economics]
            unit_value = 50.0
            budget = 10.0

            [oracle]
            kind = "table"
            [oracle.gains]
            F1 = 0.05
            F2 = 0.1
            F3 = 0.2

            [catalog]
            kind = "explicit"
            [[catalog.bundles]]
            id = "F1"
            features = ["a"]
            p = 5.0
            base = 0.5
            [[catalog.bundles]]
            id = "F2"
            features = ["b", "c"]
            p = 8.0
            base = 1.0
            [[catalog.bundles]]
            id = "F3"
            features = ["a", "b", "c", "d"]
            p = 12.0
            base = 2.0
        "#
        )
    }

    fn s1_config(reps: usize, agent: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&s1_toml(reps, agent)).unwrap()
    }

    #[test]
    fn batches_are_reproducible_byte_for_byte() {
        let cfg = s1_config(8, "strategic");
        let a = run_batch(&cfg, &CostSection::None).unwrap();
        let b = run_batch(&cfg, &CostSection::None).unwrap();
        assert_eq!(a.raw_csv, b.raw_csv);
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
        assert_eq!(a.density_csv, b.density_csv);
        assert_eq!(a.transcripts, b.transcripts);
    }

    #[test]
    fn single_repetition_has_zero_interval_width() {
        let cfg = s1_config(1, "strategic");
        let batch = run_batch(&cfg, &CostSection::None).unwrap();
        assert_eq!(batch.summary.runs, 1);
        for row in &batch.summary.per_round {
            assert_eq!(row.net.ci95, 0.0);
            assert_eq!(row.payment.ci95, 0.0);
        }
        if let Some(fs) = &batch.summary.final_state {
            assert_eq!(fs.p.std, 0.0);
        }
    }

    #[test]
    fn agents_share_the_opening_quote_per_repetition() {
        let strategic = run_batch(&s1_config(5, "strategic"), &CostSection::None).unwrap();
        let escalating = run_batch(&s1_config(5, "increase_price"), &CostSection::None).unwrap();
        let random = run_batch(&s1_config(5, "random_bundle"), &CostSection::None).unwrap();
        for rep in 0..5 {
            let q = |b: &BatchArtifacts| b.transcripts[rep].rounds[0].quote;
            assert_eq!(q(&strategic), q(&escalating));
            assert_eq!(q(&strategic), q(&random));
        }
    }

    #[test]
    fn summary_marks_failures_without_poisoning_aggregates() {
        // budget too small for any bundle's base payment: every run fails
        let mut cfg = s1_config(4, "strategic");
        cfg.initial_quote =
            Some(crate::config::QuoteSection { p: 10.0, base: 0.05, cap: 0.08 });
        cfg.quote_ranges = None;
        cfg.economics.budget = 0.09;
        let batch = run_batch(&cfg, &CostSection::None).unwrap();
        assert_eq!(batch.summary.successes, 0);
        assert_eq!(batch.summary.failure_rate, 1.0);
        assert!(batch.summary.final_state.is_none());
        assert!(batch.density_empty);
        assert_eq!(batch.summary.failures.values().sum::<usize>(), 4);
        let lines: Vec<&str> = batch.density_csv.lines().collect();
        assert_eq!(lines, vec!["metric,series,bin_lo,bin_hi,count"]);
    }

    #[test]
    fn identical_finals_collapse_to_one_bin() {
        let q = QuotedPrice::new(8.0, 1.0, 1.8).unwrap();
        let r = ReservedPrice::new(8.0, 1.0).unwrap();
        let (csv, empty) = emit_density(&[(q, r), (q, r), (q, r)]).unwrap();
        assert!(!empty);
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 4, "{csv}");
        for row in rows {
            assert!(row.ends_with(",3"), "{row}");
        }
    }

    #[test]
    fn strategic_buyer_beats_the_reference_agents_on_mean_net() {
        // openings start below the sweet spot so every agent has to bargain
        // upward; a generous sample count keeps the adaptive requotes fine
        let run = |agent: &str| {
            let mut cfg = s1_config(100, agent);
            cfg.quote_ranges =
                Some(crate::config::RangesSection { p: (8.2, 15.0), base: (0.5, 2.0) });
            cfg.session.sample_count = Some(1024);
            let batch = run_batch(&cfg, &CostSection::None).unwrap();
            let fs = batch.summary.final_state.expect("some runs succeed");
            (fs.net.mean, batch.summary.failure_rate)
        };
        let (strategic, s_fail) = run("strategic");
        let (escalating, i_fail) = run("increase_price");
        let (random, r_fail) = run("random_bundle");
        assert!(strategic >= escalating, "{strategic} vs {escalating}");
        assert!(strategic >= random, "{strategic} vs {random}");
        assert!(r_fail > s_fail, "random seller should fail most: {r_fail} vs {s_fail}");
        assert!(r_fail > i_fail, "random seller should fail most: {r_fail} vs {i_fail}");
    }

    #[test]
    fn sweep_writes_one_directory_per_cost() {
        let mut cfg = s1_config(3, "strategic");
        cfg.costs = vec![
            CostSection::None,
            CostSection::Linear { a: 0.1, scale: 1.0 },
        ];
        let result = run_experiment(&cfg).unwrap();
        assert_eq!(result.batches.len(), 2);
        let dir = tempfile::tempdir().unwrap();
        write_artifacts(&result, dir.path()).unwrap();
        assert!(dir.path().join("none/raw.csv").is_file());
        assert!(dir.path().join("linear_0.1/summary.json").is_file());
        assert!(dir.path().join("sweep.json").is_file());
        assert!(!dir.path().join("raw.csv").exists());
    }

    #[test]
    fn sampled_catalogs_price_by_bundle_size() {
        let features: Vec<String> = (0..6).map(|i| format!("x{i}")).collect();
        let catalog = sample_catalog(&features, 12, 0.5, 0.1, 9).unwrap();
        assert_eq!(catalog.entries().len(), 12);
        for e in catalog.entries() {
            let size = e.bundle.features.len() as f64;
            assert_eq!(e.reserved.p, 0.5 * size);
            assert_eq!(e.reserved.base, 0.1 * size);
            assert!((1.0..=6.0).contains(&size));
        }
        let again = sample_catalog(&features, 12, 0.5, 0.1, 9).unwrap();
        assert_eq!(catalog, again);
    }

    #[test]
    fn parametric_oracles_drive_sampled_catalogs_end_to_end() {
        let text = r#"
            target_gain = 0.08

            [experiment]
            repetitions = 4
            seed_base = 11

            [economics]
            unit_value = 50.0
            budget = 10.0

            [oracle]
            kind = "parametric"
            gmax = 0.3
            [oracle.weights]
            a = 1.0
            b = 2.0
            c = 1.5
            d = 0.5

            [catalog]
            kind = "sampled"
            count = 10
            alpha = 1.0
            beta = 0.15
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let batch = run_batch(&cfg, &CostSection::None).unwrap();
        assert_eq!(batch.transcripts.len(), 4);
        assert!(batch.summary.successes > 0, "failures: {:?}", batch.summary.failures);
    }

    #[test]
    fn mse_curves_are_empty_without_observations() {
        let csv = emit_mse_curves(&[]).unwrap();
        assert_eq!(csv, "round,f_mse,f_runs,g_mse,g_runs\n");
    }
}
