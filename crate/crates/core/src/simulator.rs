//! Replays recorded team conversations with an injected persona agent that
//! decides after every message whether to speak. The recorded messages are
//! never modified; agent turns are kept alongside them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{PolicyConfig, SimulationConfig};
use crate::gateway::{make_tag, ChatRequest, Completer, Decoding, ProviderId};
use crate::memory::{ContextBundle, LtmSlot, MemoryConfig, MemoryError, MemoryStore, SnapshotTarget};
use crate::persona::{PersonaError, PersonaProfile, PromptStrategy, PromptTemplates, TraitName};
use crate::stats::SampleSummary;

const FIXTURES: [(&str, &str); 6] = [
    ("conv01", include_str!("../data/fixtures/transcripts/conv01.jsonl")),
    ("conv02", include_str!("../data/fixtures/transcripts/conv02.jsonl")),
    ("conv03", include_str!("../data/fixtures/transcripts/conv03.jsonl")),
    ("conv04", include_str!("../data/fixtures/transcripts/conv04.jsonl")),
    ("conv05", include_str!("../data/fixtures/transcripts/conv05.jsonl")),
    ("conv06", include_str!("../data/fixtures/transcripts/conv06.jsonl")),
];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("conversation {0} is empty")]
    EmptyConversation(String),
    #[error("{path}: {message}")]
    Transcript { path: String, message: String },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TranscriptMessage {
    pub index: u32,
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub messages: Vec<TranscriptMessage>,
}

impl Conversation {
    /// Validates that indices run 1, 2, 3, ... without gaps.
    pub fn new(id: impl Into<String>, messages: Vec<TranscriptMessage>) -> Result<Self, SimError> {
        let id = id.into();
        for (k, m) in messages.iter().enumerate() {
            if m.index as usize != k + 1 {
                return Err(SimError::Transcript {
                    path: id.clone(),
                    message: format!("message {} has index {}, expected {}", k + 1, m.index, k + 1),
                });
            }
        }
        Ok(Self { id, messages })
    }

    /// One message per line; the id is the file stem.
    pub fn load_jsonl(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Transcript { path: path.display().to_string(), message: e.to_string() })?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Conversation::parse_jsonl(id, &text).map_err(|e| match e {
            SimError::Transcript { message, .. } => SimError::Transcript { path: path.display().to_string(), message },
            other => other,
        })
    }

    pub fn parse_jsonl(id: impl Into<String>, text: &str) -> Result<Self, SimError> {
        let id = id.into();
        let bad = |message: String| SimError::Transcript { path: id.clone(), message };
        let mut messages = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            messages.push(serde_json::from_str(line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?);
        }
        Conversation::new(id.clone(), messages)
    }

    /// The bundled sample transcripts.
    pub fn fixtures() -> Vec<Self> {
        FIXTURES
            .iter()
            .map(|(id, text)| Conversation::parse_jsonl(*id, text).expect("bundled transcript is valid"))
            .collect()
    }

    /// Every `*.jsonl` file in `dir`, sorted by file name.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>, SimError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        paths.iter().map(|p| Conversation::load_jsonl(p)).collect()
    }

    /// Content hash used to check that replay leaves the input untouched.
    pub fn digest(messages: &[TranscriptMessage]) -> String {
        let bytes = serde_json::to_vec(messages).expect("messages serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTurn {
    /// Index of the original message this turn follows.
    pub after_index: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision_rationale: Option<String>,
    pub persona: PersonaProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Contribute,
    Silent,
}

/// Contribution probability from persona base rate and conversational
/// triggers, compared against a uniform draw keyed by (seed, conversation,
/// message). The draw does not depend on the persona, so conditions replayed
/// over the same transcript share their random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPolicy {
    pub base_rate: BTreeMap<TraitName, f64>,
    pub addressed_bonus: f64,
    pub question_bonus: f64,
    pub gap_weight: f64,
    pub gap_saturation: u32,
    pub agent_name: String,
    pub seed: u64,
}

impl ThresholdPolicy {
    pub fn from_config(policy: &PolicyConfig, agent_name: &str, seed: u64) -> Self {
        Self {
            base_rate: policy.base_rate.clone(),
            addressed_bonus: policy.addressed_bonus,
            question_bonus: policy.question_bonus,
            gap_weight: policy.gap_weight,
            gap_saturation: policy.gap_saturation.max(1),
            agent_name: agent_name.to_string(),
            seed,
        }
    }

    /// Every trait at `rate` and no triggers.
    pub fn flat(rate: f64) -> Self {
        Self {
            base_rate: TraitName::ALL.into_iter().map(|t| (t, rate)).collect(),
            addressed_bonus: 0.0,
            question_bonus: 0.0,
            gap_weight: 0.0,
            gap_saturation: 1,
            agent_name: "Alex".into(),
            seed: 0,
        }
    }

    /// Single-High personas use their trait's rate; anything else the mean.
    pub fn base_for(&self, persona: &PersonaProfile) -> f64 {
        match persona.single_high_trait() {
            Some(t) => self.base_rate.get(&t).copied().unwrap_or(0.0),
            None if self.base_rate.is_empty() => 0.0,
            None => self.base_rate.values().sum::<f64>() / self.base_rate.len() as f64,
        }
    }

    fn addressed(&self, text: &str) -> bool {
        let name = self.agent_name.to_lowercase();
        !name.is_empty()
            && text.split(|c: char| !c.is_alphanumeric()).any(|w| w.to_lowercase() == name)
    }

    pub fn probability(&self, persona: &PersonaProfile, message: &TranscriptMessage, since_last_turn: u32) -> f64 {
        let mut p = self.base_for(persona);
        if self.addressed(&message.text) {
            p += self.addressed_bonus;
        }
        if message.text.contains('?') {
            p += self.question_bonus;
        }
        p += self.gap_weight * (f64::from(since_last_turn) / f64::from(self.gap_saturation)).min(1.0);
        p.clamp(0.0, 1.0)
    }

    pub fn draw(&self, conversation: &str, index: u32) -> f64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((conversation.len() as u64).to_le_bytes());
        h.update(conversation.as_bytes());
        h.update(index.to_le_bytes());
        let d = h.finalize();
        let bits = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        // 53 random bits in [0, 1)
        (bits >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionPolicy {
    /// Ask the model for a one-word CONTRIBUTE / SILENT verdict.
    LlmJudge,
    Threshold(ThresholdPolicy),
    AlwaysContribute,
    AlwaysSilent,
}

impl DecisionPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            DecisionPolicy::LlmJudge => "llm_judge",
            DecisionPolicy::Threshold(_) => "threshold",
            DecisionPolicy::AlwaysContribute => "always_contribute",
            DecisionPolicy::AlwaysSilent => "always_silent",
        }
    }
}

/// Strict verdict parsing. Anything but a bare CONTRIBUTE or SILENT
/// (case and surrounding punctuation aside) is malformed.
pub fn parse_verdict(text: &str) -> Option<Decision> {
    let word = text.trim().trim_matches(|c: char| !c.is_alphanumeric());
    if word.eq_ignore_ascii_case("CONTRIBUTE") {
        Some(Decision::Contribute)
    } else if word.eq_ignore_ascii_case("SILENT") {
        Some(Decision::Silent)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOptions {
    pub provider: ProviderId,
    /// Decoding for judge and snapshot calls.
    pub decoding: Decoding,
    /// Token cap for generated turns.
    pub generation_tokens: u32,
    pub agent_name: String,
    pub memory: MemoryConfig,
    pub strategy: PromptStrategy,
    pub templates: &'static PromptTemplates,
}

impl SimulationOptions {
    pub fn new(provider: ProviderId) -> Self {
        Self {
            provider,
            decoding: Decoding::default(),
            generation_tokens: 80,
            agent_name: "Alex".into(),
            memory: MemoryConfig::default(),
            strategy: PromptStrategy::ZeroShot,
            templates: PromptTemplates::builtin(),
        }
    }

    pub fn from_config(sim: &SimulationConfig, decoding: Decoding) -> Self {
        Self {
            provider: ProviderId::new(sim.provider.clone()),
            decoding,
            generation_tokens: sim.max_tokens,
            agent_name: sim.agent_name.clone(),
            memory: MemoryConfig {
                capacity: sim.stm_capacity,
                snapshot_every: sim.snapshot_every,
                include_agent_turns: sim.include_agent_turns,
            },
            strategy: PromptStrategy::ZeroShot,
            templates: PromptTemplates::builtin(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Injected agent turns.
    pub turns: usize,
    /// Messages after which the agent did not speak, skipped turns included.
    pub silent_passes: usize,
    /// Contribute decisions whose generation call failed.
    pub skipped: usize,
    /// Whitespace-delimited words over all injected turns.
    pub words: usize,
    pub judge_malformed: usize,
    pub snapshot_gaps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub conversation_id: String,
    pub persona: PersonaProfile,
    pub policy: String,
    pub original: Vec<TranscriptMessage>,
    pub injected: Vec<AgentTurn>,
    pub ltm_log: Vec<LtmSlot>,
    pub counters: Counters,
}

impl SimulationResult {
    /// "High Extraversion" for single-High personas, else the profile code.
    pub fn condition(&self) -> String {
        condition_label(&self.persona)
    }
}

pub fn condition_label(p: &PersonaProfile) -> String {
    match p.single_high_trait() {
        Some(t) => format!("High {}", t.label()),
        None => p.code(),
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn generation_prompt(ctx: &ContextBundle, agent_name: &str) -> String {
    format!(
        "You are {agent_name}, a student taking part in this team discussion.\n\n{}\n\
         Write your next contribution to the discussion as {agent_name}. Stay in character, \
         respond to what was just said, and keep it under 60 words. Reply with the message text only.",
        ctx.render()
    )
}

fn judge_prompt(ctx: &ContextBundle, agent_name: &str) -> String {
    format!(
        "You are {agent_name}, a student taking part in this team discussion.\n\n{}\n\
         Based on your personality and the conversation, decide whether to say something now. \
         Reply with exactly one word: CONTRIBUTE or SILENT.",
        ctx.render()
    )
}

/// Replays `conversation` with the persona agent. One decision is made
/// after every original message.
pub fn run_simulation(
    conversation: &Conversation,
    persona: &PersonaProfile,
    completer: &dyn Completer,
    policy: &DecisionPolicy,
    opts: &SimulationOptions,
) -> Result<SimulationResult, SimError> {
    if conversation.messages.is_empty() {
        return Err(SimError::EmptyConversation(conversation.id.clone()));
    }
    let system_text = opts.templates.render(Some(persona), opts.strategy)?.system_text;
    let scope = format!("{}|{}", conversation.id, persona.code());
    let mut memory = MemoryStore::new(
        opts.memory,
        SnapshotTarget {
            provider: opts.provider.clone(),
            system_text: system_text.clone(),
            decoding: opts.decoding,
            scope: scope.clone(),
        },
    );
    let mut injected = Vec::new();
    let mut counters = Counters::default();
    let mut since_last_turn = 0u32;
    let (mut judge_seq, mut gen_seq) = (0u64, 0u64);

    for msg in &conversation.messages {
        memory.observe(msg, completer)?;
        since_last_turn += 1;
        let ctx = memory.context_view();

        let (decision, rationale) = match policy {
            DecisionPolicy::AlwaysContribute => (Decision::Contribute, None),
            DecisionPolicy::AlwaysSilent => (Decision::Silent, None),
            DecisionPolicy::Threshold(t) => {
                let p = t.probability(persona, msg, since_last_turn);
                let u = t.draw(&conversation.id, msg.index);
                let d = if u < p { Decision::Contribute } else { Decision::Silent };
                (d, Some(format!("p={p:.3} u={u:.3}")))
            }
            DecisionPolicy::LlmJudge => {
                judge_seq += 1;
                let req = ChatRequest {
                    system_text: system_text.clone(),
                    user_text: judge_prompt(&ctx, &opts.agent_name),
                    decoding: Decoding { max_tokens: 5, ..opts.decoding },
                    provider: opts.provider.clone(),
                    tag: make_tag("decide", &scope, judge_seq),
                };
                let verdict = completer.complete(&req).ok().and_then(|r| parse_verdict(&r.text));
                if verdict.is_none() {
                    counters.judge_malformed += 1;
                }
                (verdict.unwrap_or(Decision::Silent), None)
            }
        };

        if decision == Decision::Silent {
            counters.silent_passes += 1;
            continue;
        }
        gen_seq += 1;
        let req = ChatRequest {
            system_text: system_text.clone(),
            user_text: generation_prompt(&ctx, &opts.agent_name),
            decoding: Decoding { max_tokens: opts.generation_tokens, ..opts.decoding },
            provider: opts.provider.clone(),
            tag: make_tag("generate", &scope, gen_seq),
        };
        match completer.complete(&req) {
            Ok(resp) => {
                let text = resp.text.trim().to_string();
                counters.turns += 1;
                counters.words += word_count(&text);
                since_last_turn = 0;
                memory.observe_agent_turn(TranscriptMessage {
                    index: msg.index,
                    speaker: opts.agent_name.clone(),
                    text: text.clone(),
                });
                injected.push(AgentTurn { after_index: msg.index, text, decision_rationale: rationale, persona: *persona });
            }
            Err(_) => {
                counters.skipped += 1;
                counters.silent_passes += 1;
            }
        }
    }
    counters.snapshot_gaps = memory.gaps();
    Ok(SimulationResult {
        conversation_id: conversation.id.clone(),
        persona: *persona,
        policy: policy.name().to_string(),
        original: conversation.messages.clone(),
        injected,
        ltm_log: memory.ltm().to_vec(),
        counters,
    })
}

/// Replays every conversation once per persona, conversations outermost.
pub fn simulate_all(
    conversations: &[Conversation],
    personas: &[PersonaProfile],
    completer: &dyn Completer,
    policy: &DecisionPolicy,
    opts: &SimulationOptions,
) -> Result<Vec<SimulationResult>, SimError> {
    let mut out = Vec::with_capacity(conversations.len() * personas.len());
    for conv in conversations {
        for persona in personas {
            out.push(run_simulation(conv, persona, completer, policy, opts)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationRow {
    pub condition: String,
    pub n_turns: usize,
    pub total_words: usize,
    /// Absent when there are no turns.
    pub mean_words: Option<f64>,
    /// Absent with fewer than two turns.
    pub sd_words: Option<f64>,
    /// Word count of every turn, for the between-condition test.
    pub turn_words: Vec<f64>,
}

/// Per-condition turn counts and words per turn. Conditions are ordered by
/// their High trait, then by profile code.
pub fn participation_stats(results: &[SimulationResult]) -> Vec<ParticipationRow> {
    let mut groups: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for r in results {
        let key = (r.persona.single_high_trait().map_or(TraitName::ALL.len(), TraitName::index), r.condition());
        let words = groups.entry(key).or_default();
        words.extend(r.injected.iter().map(|t| word_count(&t.text) as f64));
    }
    groups
        .into_iter()
        .map(|((_, condition), words)| {
            let summary = SampleSummary::from_slice(&words);
            ParticipationRow {
                condition,
                n_turns: words.len(),
                total_words: words.iter().sum::<f64>() as usize,
                mean_words: summary.map(|s| s.mean),
                sd_words: summary.filter(|s| s.n >= 2).map(|s| s.sd),
                turn_words: words,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceLine {
    pub conversation: String,
    pub persona: PersonaProfile,
    pub condition: String,
    pub after_index: u32,
    pub words: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LtmLine {
    pub conversation: String,
    pub persona: PersonaProfile,
    pub condition: String,
    #[serde(flatten)]
    pub slot: LtmSlot,
}

pub fn utterance_lines(results: &[SimulationResult]) -> Vec<UtteranceLine> {
    results
        .iter()
        .flat_map(|r| {
            r.injected.iter().map(|t| UtteranceLine {
                conversation: r.conversation_id.clone(),
                persona: r.persona,
                condition: r.condition(),
                after_index: t.after_index,
                words: word_count(&t.text),
                text: t.text.clone(),
            })
        })
        .collect()
}

pub fn ltm_lines(results: &[SimulationResult]) -> Vec<LtmLine> {
    results
        .iter()
        .flat_map(|r| {
            r.ltm_log.iter().map(|slot| LtmLine {
                conversation: r.conversation_id.clone(),
                persona: r.persona,
                condition: r.condition(),
                slot: slot.clone(),
            })
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, SimError> {
    let bad = |message: String| SimError::Transcript { path: path.display().to_string(), message };
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?);
        }
    }
    Ok(out)
}

/// Writes `results.json`, `utterances.jsonl` and `ltm.jsonl` into `dir`.
pub fn write_outputs(dir: &Path, results: &[SimulationResult]) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("results.json"))?);
    serde_json::to_writer_pretty(&mut w, results).map_err(std::io::Error::other)?;
    w.write_all(b"\n")?;
    w.flush()?;
    write_jsonl(&dir.join("utterances.jsonl"), &utterance_lines(results))?;
    write_jsonl(&dir.join("ltm.jsonl"), &ltm_lines(results))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{FixedScript, ScriptBook};
    use crate::persona::special_profiles;

    fn convo(n: u32) -> Conversation {
        let msgs = (1..=n)
            .map(|i| TranscriptMessage {
                index: i,
                speaker: format!("S{}", i % 4 + 1),
                text: if i % 5 == 0 { format!("Alex, what do you think about point {i}?") } else { format!("point {i}") },
            })
            .collect();
        Conversation::new("c1", msgs).unwrap()
    }

    fn script() -> FixedScript {
        FixedScript { book: ScriptBook::builtin().clone() }
    }

    fn high_e() -> PersonaProfile {
        special_profiles().single_high[TraitName::Extraversion.index()]
    }

    #[test]
    fn degenerate_policies() {
        let opts = SimulationOptions::new("mock:script".into());
        let c = convo(30);
        let silent = run_simulation(&c, &high_e(), &script(), &DecisionPolicy::AlwaysSilent, &opts).unwrap();
        assert_eq!((silent.injected.len(), silent.counters.silent_passes), (0, 30));
        let all = run_simulation(&c, &high_e(), &script(), &DecisionPolicy::AlwaysContribute, &opts).unwrap();
        assert_eq!(all.injected.len(), 30);
        assert_eq!(all.original, c.messages);
        assert_eq!(all.ltm_log.len(), 1);
    }

    #[test]
    fn threshold_saturation() {
        let c = convo(25);
        let p = high_e();
        let one = ThresholdPolicy::flat(1.0);
        let zero = ThresholdPolicy::flat(0.0);
        for m in &c.messages {
            assert!(one.draw("c1", m.index) < one.probability(&p, m, 3));
            assert_eq!(zero.probability(&p, m, 3), 0.0);
        }
    }

    #[test]
    fn judge_alternates_with_scripted_verdicts() {
        let opts = SimulationOptions::new("mock:script".into());
        let c = convo(10);
        let r = run_simulation(&c, &high_e(), &script(), &DecisionPolicy::LlmJudge, &opts).unwrap();
        let after: Vec<u32> = r.injected.iter().map(|t| t.after_index).collect();
        assert_eq!(after, [1, 3, 5, 7, 9]);
        assert_eq!(r.counters.judge_malformed, 0);
    }

    #[test]
    fn malformed_verdicts_count_as_silent() {
        assert_eq!(parse_verdict(" contribute. "), Some(Decision::Contribute));
        assert_eq!(parse_verdict("SILENT"), Some(Decision::Silent));
        assert_eq!(parse_verdict("I think I should contribute"), None);
        let book = ScriptBook::from_pairs([("decide", vec!["maybe"]), ("snapshot", vec!["{}"])]);
        let opts = SimulationOptions::new("mock:script".into());
        let r = run_simulation(&convo(20), &high_e(), &FixedScript { book }, &DecisionPolicy::LlmJudge, &opts).unwrap();
        assert_eq!(r.counters.judge_malformed, 20);
        assert_eq!(r.counters.silent_passes, 20);
        assert_eq!(r.counters.snapshot_gaps, 1);
    }

    #[test]
    fn failed_generation_is_a_skipped_turn() {
        let book = ScriptBook::from_pairs([("snapshot", vec!["{}"])]);
        let opts = SimulationOptions::new("mock:script".into());
        let r = run_simulation(&convo(4), &high_e(), &FixedScript { book }, &DecisionPolicy::AlwaysContribute, &opts)
            .unwrap();
        assert_eq!((r.counters.turns, r.counters.skipped, r.counters.silent_passes), (0, 4, 4));
    }

    #[test]
    fn participation_hand_count() {
        let p = high_e();
        let turn = |t: &str| AgentTurn { after_index: 1, text: t.into(), decision_rationale: None, persona: p };
        let r = SimulationResult {
            conversation_id: "c".into(),
            persona: p,
            policy: "x".into(),
            original: vec![],
            injected: vec![turn("one two three"), turn("a b c d e")],
            ltm_log: vec![],
            counters: Counters::default(),
        };
        let rows = participation_stats(std::slice::from_ref(&r));
        assert_eq!(rows[0].condition, "High Extraversion");
        assert_eq!((rows[0].n_turns, rows[0].total_words), (2, 8));
        assert_eq!(rows[0].mean_words, Some(4.0));
        let empty = SimulationResult { injected: vec![], ..r };
        let rows = participation_stats(&[empty]);
        assert_eq!((rows[0].n_turns, rows[0].mean_words), (0, None));
    }

    #[test]
    fn rejects_non_contiguous_indices() {
        let m = |i| TranscriptMessage { index: i, speaker: "S1".into(), text: "x".into() };
        assert!(Conversation::new("c", vec![m(1), m(3)]).is_err());
        assert!(Conversation::new("c", vec![m(2)]).is_err());
    }
}
