//! Runner resume and cassette record/replay over whole plans.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use persona_align::config::Config;
use persona_align::gateway::{ChatRequest, ChatResponse, Completer, Gateway, GatewayError, ProviderId, RetryPolicy};
use persona_align::runner::{self, build_plan, ExecuteOptions, RecordStore, TrialRecord};
use persona_align::selftest::fixed_clock;

struct Counting {
    inner: Arc<dyn Completer>,
    calls: AtomicUsize,
}

impl Completer for Counting {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req)
    }
}

fn noisy_gateway() -> (Gateway, Arc<Counting>) {
    let config = Config::mock_only();
    let ids = [ProviderId::new("mock:anchor-noise")];
    let inner: Arc<dyn Completer> = Arc::new(Gateway::from_config(&config, &ids, true).unwrap());
    let counting = Arc::new(Counting { inner, calls: AtomicUsize::new(0) });
    let gw = Gateway::builder().mock(ids[0].clone(), counting.clone()).build();
    (gw, counting)
}

fn run(gw: &Gateway, path: &std::path::Path) -> Vec<TrialRecord> {
    let plan = build_plan(&[ProviderId::new("mock:anchor-noise")], 1).unwrap();
    let clock = fixed_clock();
    let mut store = RecordStore::open(path).unwrap();
    runner::execute(&plan, gw, &mut store, &ExecuteOptions::new(&clock)).unwrap();
    store.records().to_vec()
}

#[test]
fn completed_run_resumes_with_no_calls() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let (gw, counter) = noisy_gateway();
    let first = run(&gw, &path);
    assert_eq!(first.len(), 101);
    assert_eq!(counter.calls.load(Ordering::SeqCst), 101);
    let second = run(&gw, &path);
    assert_eq!(counter.calls.load(Ordering::SeqCst), 101);
    assert_eq!(first, second);
}

#[test]
fn interrupted_run_finishes_only_missing_trials() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let (gw, _) = noisy_gateway();
    let full = run(&gw, &path);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    // keep 40 whole lines plus half of the 41st, as after a kill mid-write
    let cut = format!("{}\n{}", lines[..40].join("\n"), &lines[40][..lines[40].len() / 2]);
    std::fs::write(&path, cut).unwrap();

    let (gw, counter) = noisy_gateway();
    let resumed = run(&gw, &path);
    assert_eq!(counter.calls.load(Ordering::SeqCst), 61);
    assert_eq!(resumed, full);
    let ids: std::collections::BTreeSet<_> = resumed.iter().map(|r| r.trial_id.clone()).collect();
    assert_eq!(ids.len(), 101);
}

#[test]
fn gateway_failures_are_retried_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    let failing = |_: &ChatRequest| -> Result<ChatResponse, GatewayError> { Err(GatewayError::Transport("down".into())) };
    let gw = Gateway::builder()
        .mock(ProviderId::new("mock:anchor-noise"), Arc::new(failing))
        .retry(RetryPolicy::immediate(2))
        .build();
    let broken = run(&gw, &path);
    assert!(broken.iter().all(|r| r.outcome.label() == "gateway_error"));

    let (gw, counter) = noisy_gateway();
    let fixed = run(&gw, &path);
    assert_eq!(counter.calls.load(Ordering::SeqCst), 101);
    assert!(fixed.iter().all(|r| r.outcome.label() == "scores"));
    assert_eq!(runner::load_records(&path).unwrap().len(), 101);
}

#[test]
fn cassette_replay_reproduces_records() {
    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("calls.jsonl");
    let config = Config::mock_only();
    let ids = [ProviderId::new("mock:anchor-noise")];
    let recording = Gateway::builder_from_config(&config, &ids, true).unwrap().record_to(&cassette).unwrap().build();
    let recorded = run(&recording, &dir.path().join("a.jsonl"));
    recording.flush().unwrap();

    // no backends at all: every answer must come from the cassette
    let replay = Gateway::builder().offline(true).replay_from(&cassette).unwrap().build();
    let replayed = run(&replay, &dir.path().join("b.jsonl"));
    assert_eq!(recorded, replayed);
    assert_eq!(replay.backend_calls(), 0);
}

#[test]
fn replay_miss_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cassette = dir.path().join("empty.jsonl");
    std::fs::write(&cassette, "").unwrap();
    let replay = Gateway::builder().replay_from(&cassette).unwrap().build();
    let records = run(&replay, &dir.path().join("r.jsonl"));
    assert!(records.iter().all(|r| matches!(&r.outcome, runner::Outcome::GatewayError { error, .. } if error == "replay_miss")));
}
