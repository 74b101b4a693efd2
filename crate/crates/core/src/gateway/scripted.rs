//! Deterministic replay backend: responses are served per tag, in file order.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::io::BufRead;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;
use crate::gateway::{Backend, ChatRequest, ChatResponse, Gateway, RequestTag, Usage};

/// One line of a replay file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tag: RequestTag,
    pub text: String,
}

pub struct ScriptedGateway {
    queues: Mutex<HashMap<RequestTag, VecDeque<String>>>,
}

impl ScriptedGateway {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let mut queues: HashMap<RequestTag, VecDeque<String>> = HashMap::new();
        for e in entries {
            queues.entry(e.tag).or_default().push_back(e.text);
        }
        ScriptedGateway {
            queues: Mutex::new(queues),
        }
    }

    /// Load a JSONL replay file of `{tag, text}` objects.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            entries.push(entry);
        }
        Ok(ScriptedGateway::new(entries))
    }

    pub fn remaining(&self, tag: RequestTag) -> usize {
        self.queues
            .lock()
            .unwrap()
            .get(&tag)
            .map(|q| q.len())
            .unwrap_or(0)
    }
}

impl Gateway for ScriptedGateway {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut queues = self.queues.lock().unwrap();
        let text = queues
            .get_mut(&request.tag)
            .and_then(|q| q.pop_front())
            .ok_or_else(|| GatewayError::ScriptExhausted(request.tag.as_str().to_string()))?;
        Ok(ChatResponse {
            text,
            usage: Usage::default(),
            backend: Backend::Scripted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: RequestTag) -> ChatRequest {
        ChatRequest {
            system: "s".into(),
            user: "u".into(),
            temperature: 0.0,
            max_tokens: 64,
            tag,
        }
    }

    #[test]
    fn replays_in_order_then_exhausts() {
        let gw = ScriptedGateway::new(vec![
            ScriptEntry { tag: RequestTag::Mutate, text: "one".into() },
            ScriptEntry { tag: RequestTag::Mutate, text: "two".into() },
        ]);
        assert_eq!(gw.complete(&req(RequestTag::Mutate)).unwrap().text, "one");
        assert_eq!(gw.complete(&req(RequestTag::Mutate)).unwrap().text, "two");
        assert!(matches!(
            gw.complete(&req(RequestTag::Mutate)),
            Err(GatewayError::ScriptExhausted(_))
        ));
    }

    #[test]
    fn queues_are_keyed_by_tag() {
        let gw = ScriptedGateway::new(vec![
            ScriptEntry { tag: RequestTag::Annotate, text: "{}".into() },
            ScriptEntry { tag: RequestTag::Mutate, text: "m".into() },
        ]);
        assert_eq!(gw.complete(&req(RequestTag::Mutate)).unwrap().text, "m");
        assert_eq!(gw.complete(&req(RequestTag::Annotate)).unwrap().text, "{}");
    }

    #[test]
    fn load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.jsonl");
        std::fs::write(
            &path,
            "{\"tag\":\"mutate\",\"text\":\"hello\"}\n{\"tag\":\"abduce\",\"text\":\"why\"}\n",
        )
        .unwrap();
        let gw = ScriptedGateway::load(&path).unwrap();
        assert_eq!(gw.remaining(RequestTag::Mutate), 1);
        assert_eq!(gw.complete(&req(RequestTag::Abduce)).unwrap().text, "why");
    }
}
