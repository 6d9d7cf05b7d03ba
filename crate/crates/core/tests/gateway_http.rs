//! Live client against a local HTTP server with scripted replies.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use persona_align::config::ApiStyle;
use persona_align::gateway::{ChatRequest, Completer, Decoding, Gateway, GatewayError, LiveClient, ProviderId, RetryPolicy};
use serde_json::Value;

#[derive(Debug, Clone)]
struct Seen {
    headers: Vec<(String, String)>,
    body: Value,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Serves `replies` in order, one per connection, and records each request.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            loop {
                line.clear();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                if let Some((k, v)) = l.split_once(':') {
                    headers.push((k.trim().to_string(), v.trim().to_string()));
                }
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map_or(0, |(_, v)| v.parse().unwrap());
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { headers, body: serde_json::from_slice(&buf).unwrap_or(Value::Null) });
            let mut stream = stream;
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn openai_ok(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 3}
    })
    .to_string()
}

fn request(provider: &str, system: &str) -> ChatRequest {
    ChatRequest::new(ProviderId::new(provider), system, "Rate these items.", Decoding { temperature: 0.5, max_tokens: 64 }, "t/x#1")
        .unwrap()
}

#[test]
fn openai_payload_and_headers() {
    let (url, seen) = serve(vec![(200, openai_ok("1, 2, 3"))]);
    let client = LiveClient::new("p", ApiStyle::Openai, &url, "model-x", "secret");
    let resp = client.complete(&request("p", "You are calm.")).unwrap();
    assert_eq!(resp.text, "1, 2, 3");
    assert_eq!(resp.usage.unwrap().completion_tokens, Some(3));
    let s = seen.lock().unwrap()[0].clone();
    assert_eq!(s.header("authorization"), Some("Bearer secret"));
    assert_eq!(s.body["model"], "model-x");
    assert_eq!(s.body["messages"][0]["role"], "system");
    assert_eq!(s.body["messages"][0]["content"], "You are calm.");
    assert_eq!(s.body["messages"][1]["content"], "Rate these items.");
    assert_eq!(s.body["temperature"], 0.5);
    assert_eq!(s.body["max_tokens"], 64);
}

#[test]
fn openai_without_system_text_sends_user_only() {
    let (url, seen) = serve(vec![(200, openai_ok("ok"))]);
    let client = LiveClient::new("p", ApiStyle::Openai, &url, "m", "k");
    client.complete(&request("p", "")).unwrap();
    let s = seen.lock().unwrap()[0].clone();
    assert_eq!(s.body["messages"].as_array().unwrap().len(), 1);
}

#[test]
fn anthropic_payload_and_headers() {
    let body = serde_json::json!({
        "content": [{"type": "text", "text": "5, "}, {"type": "text", "text": "4"}],
        "usage": {"input_tokens": 9, "output_tokens": 2}
    })
    .to_string();
    let (url, seen) = serve(vec![(200, body)]);
    let client = LiveClient::new("a", ApiStyle::Anthropic, &url, "claude-x", "k2");
    let resp = client.complete(&request("a", "Team setting.")).unwrap();
    assert_eq!(resp.text, "5, 4");
    let s = seen.lock().unwrap()[0].clone();
    assert_eq!(s.header("x-api-key"), Some("k2"));
    assert_eq!(s.header("anthropic-version"), Some("2023-06-01"));
    assert_eq!(s.body["system"], "Team setting.");
    assert_eq!(s.body["messages"][0]["role"], "user");
}

#[test]
fn rate_limit_is_retried_through_the_gateway() {
    let (url, seen) = serve(vec![(429, "{}".into()), (503, "{}".into()), (200, openai_ok("3"))]);
    let client = LiveClient::new("p", ApiStyle::Openai, &url, "m", "k");
    let gw = Gateway::builder().live(ProviderId::new("p"), Arc::new(client), 2).retry(RetryPolicy::immediate(5)).build();
    let resp = gw.complete(&request("p", "s")).unwrap();
    assert_eq!(resp.text, "3");
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert_eq!(gw.live_calls(), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, seen) = serve(vec![(401, "{\"error\":\"bad key\"}".into()), (200, openai_ok("never"))]);
    let client = LiveClient::new("p", ApiStyle::Openai, &url, "m", "k");
    let gw = Gateway::builder().live(ProviderId::new("p"), Arc::new(client), 1).retry(RetryPolicy::immediate(5)).build();
    let err = gw.complete(&request("p", "s")).unwrap_err();
    assert!(matches!(err, GatewayError::Auth { .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn persistent_rate_limit_surfaces_after_cap() {
    let (url, seen) = serve(vec![(429, "{}".into()); 3]);
    let client = LiveClient::new("p", ApiStyle::Openai, &url, "m", "k");
    let gw = Gateway::builder().live(ProviderId::new("p"), Arc::new(client), 1).retry(RetryPolicy::immediate(3)).build();
    let err = gw.complete(&request("p", "s")).unwrap_err();
    assert!(matches!(err, GatewayError::RateLimited { attempts: 3, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn unexpected_body_is_a_transport_error() {
    let (url, _) = serve(vec![(200, "{\"nothing\": true}".into())]);
    let client = LiveClient::new("p", ApiStyle::Openai, &url, "m", "k");
    assert!(matches!(client.complete(&request("p", "s")), Err(GatewayError::Transport(_))));
}
