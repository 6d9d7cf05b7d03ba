use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, ChatResponse, GatewayError};

/// Stable hash of everything that determines a completion. The tag is
/// deliberately left out so a cassette survives renumbered runs.
pub fn fingerprint(req: &ChatRequest) -> String {
    let canonical = serde_json::json!([
        req.provider.as_str(),
        req.system_text,
        req.user_text,
        req.decoding.temperature,
        req.decoding.max_tokens,
    ]);
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteRecord {
    pub fingerprint: String,
    pub provider: String,
    pub tag: String,
    pub response: ChatResponse,
}

/// Append-only JSONL log of request fingerprints and responses.
#[derive(Debug, Default)]
pub struct Cassette {
    records: Vec<CassetteRecord>,
    by_tag: HashMap<(String, String), usize>,
    by_fingerprint: HashMap<String, Vec<usize>>,
    cursor: HashMap<String, usize>,
    sink: Option<BufWriter<File>>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Cassette(format!("{}: {e}", path.display()))
}

impl Cassette {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut c = Cassette::default();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| io_err(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CassetteRecord =
                serde_json::from_str(&line).map_err(|e| io_err(path, format!("line {}: {e}", n + 1)))?;
            c.index(rec);
        }
        Ok(c)
    }

    pub fn open_for_record(path: &Path) -> Result<Self, GatewayError> {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_err(path, e))?;
        Ok(Cassette { sink: Some(BufWriter::new(file)), ..Default::default() })
    }

    fn index(&mut self, rec: CassetteRecord) {
        let i = self.records.len();
        self.by_tag.entry((rec.fingerprint.clone(), rec.tag.clone())).or_insert(i);
        self.by_fingerprint.entry(rec.fingerprint.clone()).or_default().push(i);
        self.records.push(rec);
    }

    pub fn record(&mut self, req: &ChatRequest, resp: &ChatResponse) -> Result<(), GatewayError> {
        let rec = CassetteRecord {
            fingerprint: fingerprint(req),
            provider: req.provider.to_string(),
            tag: req.tag.clone(),
            response: resp.clone(),
        };
        if let Some(sink) = self.sink.as_mut() {
            let line = serde_json::to_string(&rec).map_err(|e| GatewayError::Cassette(e.to_string()))?;
            writeln!(sink, "{line}").and_then(|_| sink.flush()).map_err(|e| GatewayError::Cassette(e.to_string()))?;
        }
        self.index(rec);
        Ok(())
    }

    /// Exact (fingerprint, tag) match first; otherwise the next unreplayed
    /// response recorded for the same fingerprint.
    pub fn replay(&mut self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let fp = fingerprint(req);
        if let Some(&i) = self.by_tag.get(&(fp.clone(), req.tag.clone())) {
            return Ok(self.records[i].response.clone());
        }
        let Some(slots) = self.by_fingerprint.get(&fp) else {
            return Err(GatewayError::ReplayMiss { fingerprint: fp, tag: req.tag.clone() });
        };
        let pos = self.cursor.entry(fp.clone()).or_insert(0);
        let i = slots[(*pos).min(slots.len() - 1)];
        *pos += 1;
        Ok(self.records[i].response.clone())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn flush(&mut self) -> Result<(), GatewayError> {
        if let Some(s) = self.sink.as_mut() {
            s.flush().map_err(|e| GatewayError::Cassette(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::Decoding;
    use super::*;

    fn req(user: &str, tag: &str) -> ChatRequest {
        ChatRequest::new("p".into(), "sys", user, Decoding::default(), tag).unwrap()
    }

    fn resp(t: &str) -> ChatResponse {
        ChatResponse { text: t.into(), latency_ms: 5, usage: None }
    }

    #[test]
    fn fingerprint_ignores_tag_but_not_decoding() {
        let a = req("u", "bfi/x#1");
        let b = req("u", "bfi/y#2");
        assert_eq!(fingerprint(&a), fingerprint(&b));
        let mut c = a.clone();
        c.decoding.temperature = 0.0;
        assert_ne!(fingerprint(&a), fingerprint(&c));
    }

    #[test]
    fn replay_prefers_tag_then_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut rec = Cassette::open_for_record(&path).unwrap();
        rec.record(&req("u", "t#1"), &resp("first")).unwrap();
        rec.record(&req("u", "t#2"), &resp("second")).unwrap();
        drop(rec);
        let mut c = Cassette::load(&path).unwrap();
        assert_eq!(c.replay(&req("u", "t#2")).unwrap().text, "second");
        assert_eq!(c.replay(&req("u", "other#9")).unwrap().text, "first");
        assert_eq!(c.replay(&req("u", "other#10")).unwrap().text, "second");
        assert!(matches!(c.replay(&req("v", "t#1")), Err(GatewayError::ReplayMiss { .. })));
    }
}
