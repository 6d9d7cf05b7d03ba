//! Two-tier agent memory: a bounded window of recent messages and a log of
//! structured reflections written every `snapshot_every` original messages.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{make_tag, ChatRequest, Completer, Decoding, ProviderId};
use crate::simulator::TranscriptMessage;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("no JSON object found in snapshot output")]
    NoJson,
    #[error("snapshot field {0:?} is missing or has the wrong type")]
    Schema(String),
    #[error("expected message index {expected}, got {got}")]
    OutOfOrder { expected: u32, got: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub capacity: usize,
    pub snapshot_every: usize,
    /// Whether the agent's own turns enter the short-term window.
    pub include_agent_turns: bool,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self { capacity: 20, snapshot_every: 20, include_agent_turns: true }
    }
}

/// Inclusive range of original message indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRange {
    pub first: u32,
    pub last: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongTermMemoryEntry {
    pub summary: String,
    pub insights: Vec<String>,
    pub key_points: Vec<String>,
    pub personal_reflection: String,
}

impl LongTermMemoryEntry {
    /// All free text of the entry, for word-category scoring.
    pub fn text(&self) -> String {
        let mut parts = vec![self.summary.as_str()];
        parts.extend(self.insights.iter().map(String::as_str));
        parts.extend(self.key_points.iter().map(String::as_str));
        parts.push(&self.personal_reflection);
        parts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LtmSlot {
    Entry { covers: MessageRange, entry: LongTermMemoryEntry },
    /// Both snapshot attempts failed.
    Gap { covers: MessageRange, error: String },
}

impl LtmSlot {
    pub fn covers(&self) -> MessageRange {
        match self {
            LtmSlot::Entry { covers, .. } | LtmSlot::Gap { covers, .. } => *covers,
        }
    }

    pub fn entry(&self) -> Option<&LongTermMemoryEntry> {
        match self {
            LtmSlot::Entry { entry, .. } => Some(entry),
            LtmSlot::Gap { .. } => None,
        }
    }
}

fn first_json_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    text.match_indices('{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(m))) => Some(m),
            _ => None,
        }
    })
}

/// Extracts the first JSON object in `text` and checks the four-field
/// reflection schema. Surrounding prose is ignored; strings are trimmed.
pub fn parse_ltm_json(text: &str) -> Result<LongTermMemoryEntry, MemoryError> {
    let obj = first_json_object(text).ok_or(MemoryError::NoJson)?;
    let string = |k: &str| -> Result<String, MemoryError> {
        obj.get(k).and_then(Value::as_str).map(|s| s.trim().to_string()).ok_or_else(|| MemoryError::Schema(k.into()))
    };
    let list = |k: &str| -> Result<Vec<String>, MemoryError> {
        let arr = obj.get(k).and_then(Value::as_array).ok_or_else(|| MemoryError::Schema(k.into()))?;
        arr.iter()
            .map(|v| v.as_str().map(|s| s.trim().to_string()).ok_or_else(|| MemoryError::Schema(k.into())))
            .collect()
    };
    Ok(LongTermMemoryEntry {
        summary: string("summary")?,
        insights: list("insights")?,
        key_points: list("key_points")?,
        personal_reflection: string("personal_reflection")?,
    })
}

/// What the decision and generation steps see.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBundle {
    pub window: Vec<TranscriptMessage>,
    pub latest: Option<(MessageRange, LongTermMemoryEntry)>,
}

impl ContextBundle {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some((_, e)) = &self.latest {
            out.push_str("Your long-term memory of this conversation:\n");
            out.push_str(&format!("Summary: {}\n", e.summary));
            for k in &e.key_points {
                out.push_str(&format!("- {k}\n"));
            }
            out.push_str(&format!("Reflection: {}\n\n", e.personal_reflection));
        }
        out.push_str("Recent messages:\n");
        for m in &self.window {
            out.push_str(&format!("[{}] {}: {}\n", m.index, m.speaker, m.text));
        }
        out
    }
}

/// Where snapshot requests go.
#[derive(Debug, Clone)]
pub struct SnapshotTarget {
    pub provider: ProviderId,
    pub system_text: String,
    pub decoding: Decoding,
    /// Conversation id used in request tags.
    pub scope: String,
}

#[derive(Debug, Clone)]
pub struct MemoryStore {
    config: MemoryConfig,
    target: SnapshotTarget,
    stm: VecDeque<TranscriptMessage>,
    // input for the next snapshot
    segment: Vec<TranscriptMessage>,
    ltm: Vec<LtmSlot>,
    messages_seen: u32,
    requests: u64,
}

impl MemoryStore {
    pub fn new(config: MemoryConfig, target: SnapshotTarget) -> Self {
        Self {
            config,
            target,
            stm: VecDeque::with_capacity(config.capacity + 1),
            segment: Vec::new(),
            ltm: Vec::new(),
            messages_seen: 0,
            requests: 0,
        }
    }

    fn push_stm(&mut self, msg: TranscriptMessage) {
        self.stm.push_back(msg);
        while self.stm.len() > self.config.capacity {
            self.stm.pop_front();
        }
    }

    /// Takes in the next original message, snapshotting on the cadence.
    pub fn observe(&mut self, msg: &TranscriptMessage, completer: &dyn Completer) -> Result<(), MemoryError> {
        let expected = self.messages_seen + 1;
        if msg.index != expected {
            return Err(MemoryError::OutOfOrder { expected, got: msg.index });
        }
        self.messages_seen = expected;
        self.push_stm(msg.clone());
        self.segment.push(msg.clone());
        if (self.messages_seen as usize).is_multiple_of(self.config.snapshot_every) {
            self.snapshot(completer);
        }
        Ok(())
    }

    /// The agent's own contribution. Never advances the cadence.
    pub fn observe_agent_turn(&mut self, turn: TranscriptMessage) {
        if self.config.include_agent_turns {
            self.push_stm(turn.clone());
            self.segment.push(turn);
        }
    }

    fn snapshot_prompt(&self) -> String {
        let previous = self
            .ltm
            .iter()
            .rev()
            .find_map(LtmSlot::entry)
            .map(|e| e.summary.as_str())
            .unwrap_or("(none yet)");
        let mut out = format!(
            "Update your long-term memory of this team conversation.\n\nPrevious summary: {previous}\n\nNew messages:\n"
        );
        for m in &self.segment {
            out.push_str(&format!("[{}] {}: {}\n", m.index, m.speaker, m.text));
        }
        out.push_str(
            "\nRespond with one JSON object and nothing else, using exactly these fields:\n\
             {\"summary\": \"brief overview from your perspective\", \"insights\": [\"...\"], \
             \"key_points\": [\"...\"], \"personal_reflection\": \"...\"}",
        );
        out
    }

    fn snapshot(&mut self, completer: &dyn Completer) {
        let n = self.messages_seen;
        let covers = MessageRange { first: n + 1 - self.config.snapshot_every as u32, last: n };
        let user_text = self.snapshot_prompt();
        let mut last_error = String::new();
        for _ in 0..2 {
            self.requests += 1;
            let req = ChatRequest {
                system_text: self.target.system_text.clone(),
                user_text: user_text.clone(),
                decoding: self.target.decoding,
                provider: self.target.provider.clone(),
                tag: make_tag("snapshot", &self.target.scope, self.requests),
            };
            match completer.complete(&req) {
                Ok(resp) => match parse_ltm_json(&resp.text) {
                    Ok(entry) => {
                        self.ltm.push(LtmSlot::Entry { covers, entry });
                        self.segment.clear();
                        return;
                    }
                    Err(e) => last_error = e.to_string(),
                },
                Err(e) => last_error = e.to_string(),
            }
        }
        self.ltm.push(LtmSlot::Gap { covers, error: last_error });
        self.segment.clear();
    }

    pub fn context_view(&self) -> ContextBundle {
        let latest = self.ltm.iter().rev().find_map(|s| match s {
            LtmSlot::Entry { covers, entry } => Some((*covers, entry.clone())),
            LtmSlot::Gap { .. } => None,
        });
        ContextBundle { window: self.stm.iter().cloned().collect(), latest }
    }

    pub fn ltm(&self) -> &[LtmSlot] {
        &self.ltm
    }

    pub fn stm(&self) -> impl Iterator<Item = &TranscriptMessage> {
        self.stm.iter()
    }

    pub fn stm_len(&self) -> usize {
        self.stm.len()
    }

    pub fn messages_seen(&self) -> u32 {
        self.messages_seen
    }

    pub fn gaps(&self) -> usize {
        self.ltm.iter().filter(|s| matches!(s, LtmSlot::Gap { .. })).count()
    }
}
