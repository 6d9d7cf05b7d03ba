//! Deterministic stand-ins for hosted models.
//!
//! * `mock:anchor`: answers the survey with the profile's anchors.
//! * `mock:anchor-noise[:σ]`: anchors plus a rounded Gaussian step per item.
//! * `mock:refuser[:context]`: always declines; the `context` variant only
//!   declines when no system message is present.
//! * `mock:script`: canned replies looked up by request kind and persona.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, ChatResponse, Completer, GatewayError, Tag};
use crate::inventory::{Inventory, ResponseVector};
use crate::persona::{parse_trait_line, PersonaProfile};

pub const REFUSAL_TEXT: &str = "I cannot provide personal responses as if I were a human with subjective experiences.";

const BUILTIN_SCRIPT: &str = include_str!("../../data/mock_script.json");

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MockKind {
    Anchor,
    AnchorNoise { sigma: f64 },
    Refuser { context_sensitive: bool },
    Script,
}

impl MockKind {
    pub const ROSTER: [&'static str; 4] = ["mock:anchor", "mock:anchor-noise", "mock:refuser", "mock:script"];

    /// `default_sigma` is used for a bare `mock:anchor-noise`.
    pub fn parse(id: &str, default_sigma: f64) -> Option<Self> {
        let rest = id.strip_prefix("mock:")?;
        let (name, arg) = match rest.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (rest, None),
        };
        match (name, arg) {
            ("anchor", None) => Some(MockKind::Anchor),
            ("anchor-noise", None) => Some(MockKind::AnchorNoise { sigma: default_sigma }),
            ("anchor-noise", Some(s)) => {
                let sigma: f64 = s.parse().ok()?;
                (sigma >= 0.0 && sigma.is_finite()).then_some(MockKind::AnchorNoise { sigma })
            }
            ("refuser", None) => Some(MockKind::Refuser { context_sensitive: false }),
            ("refuser", Some("context")) => Some(MockKind::Refuser { context_sensitive: true }),
            ("script", None) => Some(MockKind::Script),
            _ => None,
        }
    }

    pub fn build(self, seed: u64, book: &ScriptBook) -> Arc<dyn Completer> {
        match self {
            MockKind::Anchor => Arc::new(AnchorEcho { sigma: 0.0, seed }),
            MockKind::AnchorNoise { sigma } => Arc::new(AnchorEcho { sigma, seed }),
            MockKind::Refuser { context_sensitive } => Arc::new(Refuser { context_sensitive, seed }),
            MockKind::Script => Arc::new(FixedScript { book: book.clone() }),
        }
    }
}

fn reply(text: String) -> ChatResponse {
    ChatResponse { text, latency_ms: 0, usage: None }
}

fn request_rng(seed: u64, req: &ChatRequest) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in [&req.system_text, &req.user_text, &req.tag] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// The profile encoded in the system message; all-medium answers when the
/// request carries no persona.
fn target_profile(req: &ChatRequest) -> PersonaProfile {
    parse_trait_line(&req.system_text).unwrap_or_else(|| PersonaProfile::uniform(crate::persona::TraitLevel::Medium))
}

/// Echoes the anchors of the prompted profile, optionally perturbed.
#[derive(Debug, Clone, Copy)]
pub struct AnchorEcho {
    pub sigma: f64,
    pub seed: u64,
}

impl AnchorEcho {
    pub fn answers(&self, req: &ChatRequest) -> ResponseVector {
        let anchors = Inventory::bfi44().anchor_responses(&target_profile(req));
        if self.sigma == 0.0 {
            return anchors;
        }
        let mut rng = request_rng(self.seed, req);
        let noisy = anchors
            .values()
            .iter()
            .map(|&v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (f64::from(v) + (self.sigma * z).round()).clamp(1.0, 5.0) as u8
            })
            .collect();
        ResponseVector::new(noisy).expect("clamped to the Likert range")
    }
}

impl Completer for AnchorEcho {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        Ok(reply(self.answers(req).to_comma_list()))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Refuser {
    pub context_sensitive: bool,
    seed: u64,
}

impl Completer for Refuser {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if self.context_sensitive && !req.system_text.trim().is_empty() {
            return AnchorEcho { sigma: 0.0, seed: self.seed }.complete(req);
        }
        Ok(reply(REFUSAL_TEXT.to_string()))
    }
}

/// Canned replies keyed by `kind@trait`, then `kind`, then `default`.
/// The trait is the single High trait of the prompted persona, if any.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptBook(pub BTreeMap<String, Vec<String>>);

impl ScriptBook {
    pub fn builtin() -> &'static ScriptBook {
        static BOOK: OnceLock<ScriptBook> = OnceLock::new();
        BOOK.get_or_init(|| serde_json::from_str(BUILTIN_SCRIPT).expect("builtin script book is valid"))
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, Vec<V>)>,
        K: Into<String>,
        V: Into<String>,
    {
        ScriptBook(pairs.into_iter().map(|(k, v)| (k.into(), v.into_iter().map(Into::into).collect())).collect())
    }

    pub fn lookup(&self, req: &ChatRequest) -> Option<&str> {
        let tag = Tag::parse(&req.tag);
        let persona_key = parse_trait_line(&req.system_text)
            .and_then(|p| p.single_high_trait())
            .map(|t| format!("{}@{}", tag.kind, t.as_str()));
        let lines = persona_key
            .and_then(|k| self.0.get(&k))
            .or_else(|| self.0.get(tag.kind))
            .or_else(|| self.0.get("default"))
            .filter(|v| !v.is_empty())?;
        let i = ((tag.seq - 1) % lines.len() as u64) as usize;
        Some(&lines[i])
    }
}

#[derive(Debug, Clone)]
pub struct FixedScript {
    pub book: ScriptBook,
}

impl Completer for FixedScript {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.book
            .lookup(req)
            .map(|t| reply(t.to_string()))
            .ok_or_else(|| GatewayError::InvalidRequest(format!("script book has no entry for tag {}", req.tag)))
    }
}
