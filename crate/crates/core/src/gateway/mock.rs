//! Scripted backend for offline runs.
//!
//! The response table is a record file. Each entry either pins an exact
//! request digest or describes a rule: every `contains` substring must occur
//! in the request transcript and `role`/`seed`, when given, must match.
//! Digest entries win; otherwise the first matching rule answers. An entry
//! replies with `reply` or fails with `fail`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendFailure, ChatBackend, ChatRequest, ModelRole};
use crate::records::{read_records, RecordError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    Unavailable,
    Timeout,
    Auth,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<ModelRole>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<MockFailure>,
}

impl MockEntry {
    pub fn rule(contains: &[&str], reply: impl Into<String>) -> Self {
        Self {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            reply: Some(reply.into()),
            ..Self::default()
        }
    }

    pub fn for_digest(digest: impl Into<String>, reply: impl Into<String>) -> Self {
        Self {
            digest: Some(digest.into()),
            reply: Some(reply.into()),
            ..Self::default()
        }
    }

    pub fn role(mut self, role: ModelRole) -> Self {
        self.role = Some(role);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn failing(contains: &[&str], fail: MockFailure) -> Self {
        Self {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            fail: Some(fail),
            ..Self::default()
        }
    }

    fn matches_rule(&self, request: &ChatRequest, transcript: &str) -> bool {
        self.digest.is_none()
            && self.role.is_none_or(|r| r == request.model_role)
            && self.seed.is_none_or(|s| request.seed == Some(s))
            && self
                .contains
                .iter()
                .all(|c| transcript.contains(c.as_str()))
    }

    fn respond(&self) -> Result<String, BackendFailure> {
        match (self.fail, &self.reply) {
            (Some(MockFailure::Unavailable), _) => Err(BackendFailure::Transient {
                reason: "scripted unavailability".into(),
                timeout: false,
            }),
            (Some(MockFailure::Timeout), _) => Err(BackendFailure::Transient {
                reason: "scripted timeout".into(),
                timeout: true,
            }),
            (Some(MockFailure::Auth), _) => Err(BackendFailure::Auth("scripted".into())),
            (None, Some(reply)) => Ok(reply.clone()),
            (None, None) => Err(BackendFailure::Permanent(
                "mock entry has neither reply nor fail".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    entries: Vec<MockEntry>,
}

impl MockBackend {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        Self { entries }
    }

    pub fn from_file(path: &Path) -> Result<Self, RecordError> {
        Ok(Self::new(read_records(path)?))
    }

    pub fn entries(&self) -> &[MockEntry] {
        &self.entries
    }
}

impl ChatBackend for MockBackend {
    fn send(&self, request: &ChatRequest) -> Result<String, BackendFailure> {
        let digest = request.digest();
        if let Some(entry) = self
            .entries
            .iter()
            .find(|e| e.digest.as_deref() == Some(digest.as_str()))
        {
            return entry.respond();
        }
        let transcript = request.transcript();
        self.entries
            .iter()
            .find(|e| e.matches_rule(request, &transcript))
            .ok_or_else(|| {
                BackendFailure::Permanent(format!("no scripted reply for request {digest}"))
            })?
            .respond()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    fn req(text: &str, seed: Option<u64>) -> ChatRequest {
        let mut r = ChatRequest::new(ModelRole::Llm, Message::user(text));
        r.seed = seed;
        r
    }

    #[test]
    fn digest_entries_take_priority() {
        let r = req("what?", None);
        let mock = MockBackend::new(vec![
            MockEntry::rule(&["what"], "rule"),
            MockEntry::for_digest(r.digest(), "pinned"),
        ]);
        assert_eq!(mock.send(&r).unwrap(), "pinned");
        assert_eq!(mock.send(&req("what now?", None)).unwrap(), "rule");
    }

    #[test]
    fn rules_filter_on_role_and_seed() {
        let mock = MockBackend::new(vec![
            MockEntry::rule(&["q"], "mllm").role(ModelRole::Mllm),
            MockEntry::rule(&["q"], "seed 3").seed(3),
            MockEntry::rule(&["q"], "default"),
        ]);
        assert_eq!(mock.send(&req("q", Some(3))).unwrap(), "seed 3");
        assert_eq!(mock.send(&req("q", Some(4))).unwrap(), "default");
        assert!(matches!(
            mock.send(&req("zzz", None)),
            Err(BackendFailure::Permanent(_))
        ));
    }

    #[test]
    fn replies_are_stable() {
        let mock = MockBackend::new(vec![MockEntry::rule(&[], "same")]);
        let r = req("x", Some(1));
        assert_eq!(mock.send(&r), mock.send(&r.clone()));
    }
}
