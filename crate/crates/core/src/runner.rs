//! The BFI administration grid: plan construction, concurrent execution, and
//! a resumable JSONL record store.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{make_tag, ChatRequest, Decoding, Gateway, GatewayError, ProviderId};
use crate::inventory::{parse_numeric_response, Inventory, ResponseVector, SurveyReply, TraitScores};
use crate::persona::{enumerate_binary_profiles, special_profiles, PersonaError, PersonaProfile, PromptStrategy, PromptTemplates};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("provider list is empty")]
    EmptyProviderList,
    #[error("runs per configuration must be >= 1")]
    ZeroRuns,
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error("record store {path}: {message}")]
    Store { path: String, message: String },
}

fn store_err(path: &Path, e: impl std::fmt::Display) -> RunnerError {
    RunnerError::Store { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrialSpec {
    pub provider: ProviderId,
    pub strategy: PromptStrategy,
    pub profile: Option<PersonaProfile>,
    pub run_index: u32,
}

impl TrialSpec {
    pub fn new(
        provider: ProviderId,
        strategy: PromptStrategy,
        profile: Option<PersonaProfile>,
        run_index: u32,
    ) -> Result<Self, RunnerError> {
        match (strategy.requires_profile(), profile.is_some()) {
            (true, false) => return Err(PersonaError::ProfileMissing(strategy).into()),
            (false, true) => return Err(PersonaError::ProfileUnexpected(strategy).into()),
            _ => {}
        }
        if run_index == 0 {
            return Err(RunnerError::ZeroRuns);
        }
        Ok(Self { provider, strategy, profile, run_index })
    }

    /// Unique key of the trial within any plan.
    pub fn id(&self) -> String {
        let code = self.profile.map(|p| p.code()).unwrap_or_else(|| "-".into());
        format!("{}|{}|{}|r{}", self.provider, self.strategy, code, self.run_index)
    }
}

/// Every administration for `providers`: the 32 binary profiles and the
/// all-medium profile under each persona strategy, plus the two baselines,
/// each repeated `runs` times. Providers are interleaved innermost.
pub fn build_plan(providers: &[ProviderId], runs: u32) -> Result<Vec<TrialSpec>, RunnerError> {
    if providers.is_empty() {
        return Err(RunnerError::EmptyProviderList);
    }
    if runs == 0 {
        return Err(RunnerError::ZeroRuns);
    }
    let mut profiles = enumerate_binary_profiles();
    profiles.push(special_profiles().all_medium);
    let mut cells: Vec<(PromptStrategy, Option<PersonaProfile>)> = Vec::new();
    for strategy in PromptStrategy::PERSONA {
        cells.extend(profiles.iter().map(|p| (strategy, Some(*p))));
    }
    cells.push((PromptStrategy::NoPrompt, None));
    cells.push((PromptStrategy::TeamContext, None));

    let mut plan = Vec::with_capacity(cells.len() * runs as usize * providers.len());
    for (strategy, profile) in cells {
        for run in 1..=runs {
            for p in providers {
                plan.push(TrialSpec { provider: p.clone(), strategy, profile, run_index: run });
            }
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Scores { scores: TraitScores, responses: ResponseVector },
    Refusal { matched_pattern: String },
    ParseError { found: usize },
    /// The trial never got a completion; retried on resume.
    GatewayError { error: String, message: String },
}

impl Outcome {
    /// What the inventory parser makes of `raw_text`.
    pub fn classify(raw_text: &str) -> Outcome {
        match parse_numeric_response(raw_text) {
            Ok(SurveyReply::Answered(v)) => Outcome::Scores { scores: Inventory::bfi44().score(&v), responses: v },
            Ok(SurveyReply::Refused(r)) => Outcome::Refusal { matched_pattern: r.matched_pattern },
            Err(e) => Outcome::ParseError { found: e.found },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Scores { .. } => "scores",
            Outcome::Refusal { .. } => "refusal",
            Outcome::ParseError { .. } => "parse_error",
            Outcome::GatewayError { .. } => "gateway_error",
        }
    }

    pub fn scores(&self) -> Option<&TraitScores> {
        match self {
            Outcome::Scores { scores, .. } => Some(scores),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema: u32,
    /// Position in the plan.
    pub seq: usize,
    pub trial_id: String,
    pub spec: TrialSpec,
    pub raw_text: String,
    pub outcome: Outcome,
    pub decoding: Decoding,
    pub started_at: String,
    pub finished_at: String,
    pub latency_ms: u64,
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always the same instant; for reproducible output.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

fn stamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Append-only JSONL store of trial records.
#[derive(Debug)]
pub struct RecordStore {
    path: PathBuf,
    records: Vec<TrialRecord>,
}

impl RecordStore {
    /// Opens or creates the store. Unreadable trailing lines (an interrupted
    /// write), superseded duplicates and gateway failures are dropped, and
    /// the file is rewritten if anything was dropped.
    pub fn open(path: &Path) -> Result<Self, RunnerError> {
        let mut records = Vec::new();
        let mut dirty = false;
        if path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(path).map_err(|e| store_err(path, e))?)
                .lines()
                .collect::<Result<_, _>>()
                .map_err(|e| store_err(path, e))?;
            let last = lines.len();
            for (n, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<TrialRecord>(line) {
                    Ok(r) => records.push(r),
                    Err(_) if n + 1 == last => dirty = true,
                    Err(e) => return Err(store_err(path, format!("line {}: {e}", n + 1))),
                }
            }
        }
        let mut seen = HashSet::new();
        let mut kept: Vec<TrialRecord> = Vec::with_capacity(records.len());
        // later lines win
        for r in records.into_iter().rev() {
            if matches!(r.outcome, Outcome::GatewayError { .. }) || !seen.insert(r.trial_id.clone()) {
                dirty = true;
                continue;
            }
            kept.push(r);
        }
        kept.reverse();
        let store = Self { path: path.to_path_buf(), records: kept };
        if dirty {
            store.rewrite()?;
        }
        Ok(store)
    }

    fn rewrite(&self) -> Result<(), RunnerError> {
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp).map_err(|e| store_err(&tmp, e))?);
            for r in &self.records {
                write_line(&mut w, r).map_err(|e| store_err(&tmp, e))?;
            }
            w.flush().map_err(|e| store_err(&tmp, e))?;
        }
        std::fs::rename(&tmp, &self.path).map_err(|e| store_err(&self.path, e))
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn completed_ids(&self) -> HashSet<String> {
        self.records.iter().map(|r| r.trial_id.clone()).collect()
    }
}

fn write_line<W: Write>(w: &mut W, r: &TrialRecord) -> std::io::Result<()> {
    let line = serde_json::to_string(r).map_err(std::io::Error::other)?;
    writeln!(w, "{line}")
}

/// Reads every record from a results file without modifying it.
pub fn load_records(path: &Path) -> Result<Vec<TrialRecord>, RunnerError> {
    let file = File::open(path).map_err(|e| store_err(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| store_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| store_err(path, format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub struct ExecuteOptions<'a> {
    pub workers: usize,
    pub decoding: Decoding,
    pub templates: &'a PromptTemplates,
    pub clock: &'a dyn Clock,
}

impl<'a> ExecuteOptions<'a> {
    pub fn new(clock: &'a dyn Clock) -> Self {
        Self { workers: 8, decoding: Decoding::default(), templates: PromptTemplates::builtin(), clock }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub scored: usize,
    pub refusals: usize,
    pub parse_errors: usize,
    pub gateway_errors: usize,
}

impl Tally {
    pub fn total(&self) -> usize {
        self.scored + self.refusals + self.parse_errors + self.gateway_errors
    }

    fn add(&mut self, o: &Outcome) {
        match o {
            Outcome::Scores { .. } => self.scored += 1,
            Outcome::Refusal { .. } => self.refusals += 1,
            Outcome::ParseError { .. } => self.parse_errors += 1,
            Outcome::GatewayError { .. } => self.gateway_errors += 1,
        }
    }

    /// Refusals over all trials that reached the model.
    pub fn refusal_rate(&self) -> Option<f64> {
        let n = self.scored + self.refusals + self.parse_errors;
        (n > 0).then(|| self.refusals as f64 / n as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentSummary {
    /// Trials sent to the gateway during this call.
    pub executed: usize,
    /// Trials already in the store and skipped.
    pub skipped: usize,
    pub by_cell: BTreeMap<(ProviderId, PromptStrategy), Tally>,
}

impl ExperimentSummary {
    pub fn from_records<'r>(records: impl IntoIterator<Item = &'r TrialRecord>) -> Self {
        let mut s = ExperimentSummary::default();
        for r in records {
            s.by_cell.entry((r.spec.provider.clone(), r.spec.strategy)).or_default().add(&r.outcome);
        }
        s
    }

    pub fn total(&self) -> Tally {
        self.by_cell.values().fold(Tally::default(), |mut acc, t| {
            acc.scored += t.scored;
            acc.refusals += t.refusals;
            acc.parse_errors += t.parse_errors;
            acc.gateway_errors += t.gateway_errors;
            acc
        })
    }

    pub fn cell(&self, provider: &ProviderId, strategy: PromptStrategy) -> Tally {
        self.by_cell.get(&(provider.clone(), strategy)).copied().unwrap_or_default()
    }
}

fn run_trial(
    seq: usize,
    spec: &TrialSpec,
    gateway: &Gateway,
    opts: &ExecuteOptions<'_>,
) -> Result<TrialRecord, RunnerError> {
    let prompt = opts.templates.render(spec.profile.as_ref(), spec.strategy)?;
    let started = opts.clock.now();
    let id = spec.id();
    let request = ChatRequest {
        system_text: prompt.system_text,
        user_text: Inventory::bfi44().render_survey(),
        decoding: opts.decoding,
        provider: spec.provider.clone(),
        tag: make_tag("bfi", &id, u64::from(spec.run_index)),
    };
    let (raw_text, outcome, latency_ms) = match gateway.complete(&request) {
        Ok(resp) => {
            let outcome = Outcome::classify(&resp.text);
            (resp.text, outcome, resp.latency_ms)
        }
        Err(e) => {
            (String::new(), Outcome::GatewayError { error: GatewayError::kind(&e).to_string(), message: e.to_string() }, 0)
        }
    };
    Ok(TrialRecord {
        schema: SCHEMA_VERSION,
        seq,
        trial_id: id,
        spec: spec.clone(),
        raw_text,
        outcome,
        decoding: opts.decoding,
        started_at: stamp(started),
        finished_at: stamp(opts.clock.now()),
        latency_ms,
    })
}

/// Runs every trial of `plan` not already in `store`. Records are appended
/// in plan order regardless of completion order. Gateway failures are
/// persisted per trial; only store failures abort.
pub fn execute(
    plan: &[TrialSpec],
    gateway: &Gateway,
    store: &mut RecordStore,
    opts: &ExecuteOptions<'_>,
) -> Result<ExperimentSummary, RunnerError> {
    let done = store.completed_ids();
    let pending: Vec<(usize, &TrialSpec)> =
        plan.iter().enumerate().filter(|(_, s)| !done.contains(&s.id())).collect();
    let skipped = plan.len() - pending.len();

    let file = OpenOptions::new().create(true).append(true).open(&store.path).map_err(|e| store_err(&store.path, e))?;
    let mut out = BufWriter::new(file);
    let next = AtomicUsize::new(0);
    let workers = opts.workers.clamp(1, pending.len().max(1));
    let path = store.path.clone();

    let mut fresh: Vec<TrialRecord> = Vec::with_capacity(pending.len());
    std::thread::scope(|scope| -> Result<(), RunnerError> {
        let (tx, rx) = mpsc::channel::<(usize, Result<TrialRecord, RunnerError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (pending, next) = (&pending, &next);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(seq, spec)) = pending.get(k) else { break };
                if tx.send((k, run_trial(seq, spec, gateway, opts))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut buffer: BTreeMap<usize, TrialRecord> = BTreeMap::new();
        let mut expect = 0;
        let mut failure = None;
        for (k, rec) in rx {
            match rec {
                Ok(r) => {
                    buffer.insert(k, r);
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    // stop handing out work
                    next.store(pending.len(), Ordering::Relaxed);
                }
            }
            while let Some(r) = buffer.remove(&expect) {
                write_line(&mut out, &r).and_then(|_| out.flush()).map_err(|e| store_err(&path, e))?;
                fresh.push(r);
                expect += 1;
            }
        }
        failure.map_or(Ok(()), Err)
    })?;

    store.records.extend(fresh);
    let mut summary = ExperimentSummary::from_records(store.records.iter());
    summary.executed = pending.len();
    summary.skipped = skipped;
    Ok(summary)
}

/// Distinct providers in plan order.
pub fn plan_providers(plan: &[TrialSpec]) -> Vec<ProviderId> {
    let mut seen = BTreeSet::new();
    plan.iter().filter(|s| seen.insert(s.provider.clone())).map(|s| s.provider.clone()).collect()
}
