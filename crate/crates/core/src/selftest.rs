//! Offline end-to-end run of both studies against the built-in mocks.
//!
//! Everything written under the output directory is a pure function of the
//! configuration: timestamps come from a fixed clock and every mock is
//! seeded, so repeated runs produce identical trees.

use std::fmt;
use std::path::Path;

use chrono::{TimeZone, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::config::Config;
use crate::gateway::{Decoding, Gateway, GatewayError, ProviderId};
use crate::lexicon::CategoryLexicon;
use crate::memory::MemoryConfig;
use crate::persona::{special_profiles, PromptStrategy, TraitLevel, TraitName};
use crate::report::{self, Format, ModelLabels};
use crate::runner::{self, ExecuteOptions, FixedClock, RecordStore, RunnerError, TrialRecord};
use crate::simulator::{
    self, participation_stats, Conversation, DecisionPolicy, SimError, SimulationOptions, SimulationResult,
    ThresholdPolicy,
};

pub const NOISE_PROVIDER: &str = "mock:anchor-noise";

#[derive(Debug, Error)]
pub enum SelftestError {
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

pub fn fixed_clock() -> FixedClock {
    FixedClock(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).single().expect("valid date"))
}

fn run_study1(
    config: &Config,
    providers: &[&str],
    runs: u32,
    keep: impl Fn(&runner::TrialSpec) -> bool,
    path: &Path,
) -> Result<Vec<TrialRecord>, SelftestError> {
    let ids: Vec<ProviderId> = providers.iter().map(|p| ProviderId::new(*p)).collect();
    let plan: Vec<_> = runner::build_plan(&ids, runs)?.into_iter().filter(|s| keep(s)).collect();
    let gateway = Gateway::from_config(config, &ids, true)?;
    let clock = fixed_clock();
    let mut opts = ExecuteOptions::new(&clock);
    opts.decoding = Decoding::from(config.decoding);
    let mut store = RecordStore::open(path)?;
    runner::execute(&plan, &gateway, &mut store, &opts)?;
    Ok(store.records().to_vec())
}

/// Single-High personas, one per trait, in trait order.
pub fn simulation_personas() -> Vec<crate::persona::PersonaProfile> {
    special_profiles().single_high
}

/// Replays every conversation once per single-High persona under the
/// configured threshold policy.
pub fn run_study2(
    config: &Config,
    conversations: &[Conversation],
    provider: &str,
) -> Result<Vec<SimulationResult>, SelftestError> {
    let id = ProviderId::new(provider);
    let gateway = Gateway::from_config(config, std::slice::from_ref(&id), true)?;
    let mut opts = SimulationOptions::from_config(&config.simulation, Decoding::from(config.decoding));
    opts.provider = id;
    let policy = DecisionPolicy::Threshold(ThresholdPolicy::from_config(
        &config.policy,
        &config.simulation.agent_name,
        config.seed,
    ));
    Ok(simulator::simulate_all(conversations, &simulation_personas(), &gateway, &policy, &opts)?)
}

fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

/// Runs both studies into `out` and checks the mechanisms each mock is built
/// to exhibit.
pub fn run(config: &Config, out: &Path) -> Result<SelftestReport, SelftestError> {
    let mut report = SelftestReport::default();
    std::fs::create_dir_all(out.join("study1"))?;
    for f in ["anchor.jsonl", "anchor_noise.jsonl", "refuser.jsonl"] {
        let p = out.join("study1").join(f);
        if p.exists() {
            std::fs::remove_file(p)?;
        }
    }

    let four: Vec<ProviderId> = ["a", "b", "c", "d"].map(ProviderId::new).to_vec();
    let n4 = runner::build_plan(&four, 5)?.len();
    let n1 = runner::build_plan(&four[..1], 5)?.len();
    report.check("grid", n4 == 2020 && n1 == 505, format!("{n4} trials for 4 providers, {n1} for 1"));

    // exact anchors
    let anchor = run_study1(config, &["mock:anchor"], 1, |_| true, &out.join("study1/anchor.jsonl"))?;
    let obs = report::persona_observations(&anchor);
    let exact = TraitName::ALL.iter().all(|&t| {
        let of = |l: TraitLevel| obs.iter().filter(move |o| o.trait_name == t && o.level == l).map(|o| o.score);
        of(TraitLevel::High).all(|s| s == 5.0) && of(TraitLevel::Low).all(|s| s == 1.0)
    });
    let labels = ModelLabels::from_config(config);
    let a = report::analyze(&anchor, &labels);
    let diffs_exact = a.controllability.len() == 5
        && a.controllability.iter().all(|r| r.contrast.mean_high - r.contrast.mean_rest == 4.0);
    report.check(
        "anchor-exact",
        exact && diffs_exact,
        format!("{} records; high 5.000, low 1.000, difference 4.000 for every trait", anchor.len()),
    );

    // noisy anchors
    let runs = config.runs_per_config;
    let noisy =
        run_study1(config, &[NOISE_PROVIDER], runs, |_| true, &out.join("study1/anchor_noise.jsonl"))?;
    let a = report::analyze(&noisy, &labels);
    let (d, sd_hi, sd_lo) = match &a.headline {
        Some(h) => (h.test.and_then(|t| t.effect).unwrap_or(f64::NAN), h.high.sd, h.low.sd),
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    report.check(
        "anchor-noise-effect",
        (6.0..=14.0).contains(&d),
        format!("pooled d = {}, SD high = {}, SD low = {}", fmt3(d), fmt3(sd_hi), fmt3(sd_lo)),
    );

    // refusals
    let refusers = run_study1(
        config,
        &["mock:refuser", "mock:refuser:context"],
        runs,
        |s| !s.strategy.requires_profile(),
        &out.join("study1/refuser.jsonl"),
    )?;
    let summary = runner::ExperimentSummary::from_records(&refusers);
    let plain = summary.cell(&ProviderId::new("mock:refuser"), PromptStrategy::NoPrompt).refusal_rate();
    let framed = summary.cell(&ProviderId::new("mock:refuser:context"), PromptStrategy::TeamContext).refusal_rate();
    report.check(
        "refusal-framing",
        plain == Some(1.0) && framed == Some(0.0),
        format!("no prompt {:?}, team context {:?}", plain, framed),
    );

    // study 2
    let conversations = Conversation::fixtures();
    let sims = run_study2(config, &conversations, "mock:script")?;
    simulator::write_outputs(&out.join("study2"), &sims)?;
    let untouched = sims.iter().all(|r| {
        conversations.iter().any(|c| c.id == r.conversation_id && c.messages == r.original)
    });
    report.check("transcripts-unchanged", untouched, format!("{} simulations", sims.len()));

    let mem = MemoryConfig {
        capacity: config.simulation.stm_capacity,
        snapshot_every: config.simulation.snapshot_every,
        include_agent_turns: config.simulation.include_agent_turns,
    };
    let cadence = sims.iter().all(|r| r.ltm_log.len() == r.original.len() / mem.snapshot_every);
    report.check("memory-cadence", cadence, format!("one snapshot per {} messages", mem.snapshot_every));

    let rows = participation_stats(&sims);
    let turns: Vec<(String, usize)> = rows.iter().map(|r| (r.condition.clone(), r.n_turns)).collect();
    let ordered = rows.len() == 5 && {
        let e = rows[TraitName::Extraversion.index()].n_turns;
        let n = rows[TraitName::Neuroticism.index()].n_turns;
        rows.iter().enumerate().all(|(k, r)| {
            k == TraitName::Extraversion.index() || r.n_turns < e
        }) && rows.iter().enumerate().all(|(k, r)| k == TraitName::Neuroticism.index() || r.n_turns > n)
    };
    report.check("participation-order", ordered, format!("{turns:?}"));

    // tables
    let lex = CategoryLexicon::builtin();
    let corpora = report::marker_corpora(&sims, lex);
    let mut records = noisy;
    records.extend(refusers);
    let (analysis, tables) = report::build_tables(&records, &sims, &corpora, &labels);
    report::write_tables(out, &tables, &[Format::Md, Format::Csv])?;
    std::fs::write(out.join("analysis.json"), serde_json::to_string_pretty(&analysis)? + "\n")?;
    let shapes = tables.iter().all(|t| t.header == t.kind.header());
    report.check("tables", shapes && tables.len() == 7, format!("{} tables written", tables.len()));

    std::fs::write(out.join("selftest.txt"), report.to_string())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn personas_are_single_high() {
        let ps = simulation_personas();
        assert_eq!(ps.len(), 5);
        for (k, p) in ps.iter().enumerate() {
            assert_eq!(p.single_high_trait(), Some(TraitName::ALL[k]));
        }
    }
}
