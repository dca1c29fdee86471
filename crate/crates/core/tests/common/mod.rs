#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use aapm_core::agent::MOCK_SKIP_MARKER;
use aapm_core::synthetic::{NEGATIVE_WORDS, POSITIVE_WORDS};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Minimal HTTP/1.1 server answering each POST with `handler(body)`.
pub struct StubServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
}

impl StubServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&Value) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0u8; len];
                if reader.read_exact(&mut body).is_err() {
                    continue;
                }
                counter.fetch_add(1, Ordering::SeqCst);
                let parsed: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                let (status, reply) = handler(&parsed);
                let head = format!(
                    "HTTP/1.1 {status} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    reply.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(reply.as_bytes());
                let _ = stream.flush();
            }
        });
        Self { url, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

pub fn completion(content: &str) -> String {
    serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] }).to_string()
}

fn last_user(body: &Value) -> String {
    body["messages"]
        .as_array()
        .into_iter()
        .flatten()
        .rev()
        .find(|m| m["role"] == "user")
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default()
        .to_string()
}

/// Deterministic stand-in for a chat model: answers the opening analysis
/// prompt with an action object, everything else with plain text that keeps
/// the sentiment words of the prompt.
pub fn stub_chat_reply(body: &Value) -> String {
    let prompt = last_user(body);
    let digest = hex::encode(&Sha256::digest(prompt.as_bytes())[..4]);
    let lower = prompt.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).collect();
    let pos: Vec<&str> = POSITIVE_WORDS.iter().copied().filter(|w| words.contains(w)).collect();
    let neg: Vec<&str> = NEGATIVE_WORDS.iter().copied().filter(|w| words.contains(w)).collect();
    let mut text = format!(
        "Assessment {digest}: positive signals [{}], negative signals [{}] across {} words.",
        pos.join(" "),
        neg.join(" "),
        words.len()
    );
    let irrelevant = prompt.contains(MOCK_SKIP_MARKER);
    if irrelevant {
        text = format!("{MOCK_SKIP_MARKER} {text}");
    }
    if prompt.contains("Reply with a single JSON object") {
        if irrelevant {
            return r#"{"action": "skip"}"#.to_string();
        }
        return serde_json::json!({ "action": "report", "text": text }).to_string();
    }
    text
}

pub const REPLAY_GOLDEN: [(&str, &str); 3] = [
    ("agent-run/reports.jsonl", "reports.jsonl"),
    ("agent-run/notes.jsonl", "notes.jsonl"),
    ("embed/daily.jsonl", "daily.jsonl"),
];

pub fn replay_fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay")
}

/// Bundled replay config with its output redirected to `out`.
pub fn replay_config(out: &std::path::Path) -> aapm_core::pipeline::RunConfig {
    let mut cfg =
        aapm_core::pipeline::RunConfig::load(&replay_fixture_dir().join("aapm.toml")).expect("fixture config");
    cfg.paths.output = out.join("output");
    cfg.paths.cache = out.join("cache");
    cfg
}
