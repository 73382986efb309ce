//! Text-completion backends.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::observation_section;
use super::response::{RankedActivity, Top3};
use crate::activity::ActivityCode;

/// Environment variable holding the API key for [`ChatCompletionBackend`].
pub const API_KEY_ENV: &str = "SEMTRAJ_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection resets, 429 and 5xx.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

pub trait Backend: Send + Sync {
    fn submit(&self, prompt: &str) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn submit(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).submit(prompt)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn submit(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).submit(prompt)
    }
}

/// Keyword rule: if any keyword appears as a word in the observation, reply
/// with `reply`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub keywords: Vec<String>,
    pub reply: Vec<(u8, f64)>,
}

impl MockRule {
    pub fn new(keywords: &[&str], reply: &[(u8, f64)]) -> Self {
        Self {
            keywords: keywords.iter().map(|k| k.to_lowercase()).collect(),
            reply: reply.to_vec(),
        }
    }
}

/// Deterministic rule-table backend. Rules are tried in order against the
/// words of the prompt's observation section; the first match wins and no
/// match answers `14: 0.5`.
#[derive(Debug, Clone)]
pub struct MockBackend {
    rules: Vec<MockRule>,
    default: Top3,
}

impl MockBackend {
    pub fn new(rules: Vec<MockRule>) -> Self {
        let default = Top3::from_pairs(vec![RankedActivity::new(ActivityCode::SOMETHING_ELSE, 0.5)])
            .unwrap()
            .0;
        Self { rules, default }
    }

    pub fn rules(&self) -> &[MockRule] {
        &self.rules
    }

    /// Top-3 answer for an observation text.
    pub fn answer(&self, observation: &str) -> Top3 {
        let lower = observation.to_lowercase();
        let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
        self.rules
            .iter()
            .find(|rule| rule.keywords.iter().any(|k| contains_phrase(&words, k)))
            .and_then(|rule| {
                let pairs = rule
                    .reply
                    .iter()
                    .filter_map(|&(c, p)| ActivityCode::new(u64::from(c)).ok().map(|c| RankedActivity::new(c, p)))
                    .collect();
                Top3::from_pairs(pairs).ok().map(|(t, _)| t)
            })
            .unwrap_or_else(|| self.default.clone())
    }
}

fn contains_phrase(words: &[&str], phrase: &str) -> bool {
    let needle: Vec<&str> = phrase.split_whitespace().collect();
    !needle.is_empty() && words.windows(needle.len()).any(|w| w == needle.as_slice())
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(default_mock_rules())
    }
}

impl Backend for MockBackend {
    fn submit(&self, prompt: &str) -> Result<String, BackendError> {
        let observation = observation_section(prompt).unwrap_or(prompt);
        Ok(self.answer(observation).render())
    }
}

pub fn default_mock_rules() -> Vec<MockRule> {
    vec![
        MockRule::new(&["kfc", "mcdonald", "restaurant", "fast food", "food court", "bakery"], &[(7, 0.7), (5, 0.2), (14, 0.1)]),
        MockRule::new(&["cafe", "coffee"], &[(7, 0.45), (9, 0.4), (14, 0.1)]),
        MockRule::new(&["school", "university", "college", "kindergarten"], &[(3, 0.8), (2, 0.1), (14, 0.1)]),
        MockRule::new(&["childcare", "nursing home", "daycare"], &[(4, 0.7), (2, 0.2), (14, 0.1)]),
        MockRule::new(&["hospital", "clinic", "doctors", "dentist", "pharmacy"], &[(12, 0.8), (5, 0.1), (14, 0.1)]),
        MockRule::new(&["place of worship", "church", "mosque", "temple"], &[(13, 0.8), (9, 0.1), (14, 0.1)]),
        MockRule::new(&["gym", "fitness", "fitness centre", "sports centre", "swimming pool", "stadium"], &[(10, 0.7), (9, 0.2), (14, 0.1)]),
        MockRule::new(&["park", "cinema", "theatre", "museum", "attraction"], &[(9, 0.7), (10, 0.2), (14, 0.1)]),
        MockRule::new(&["supermarket", "mall", "shop", "convenience", "clothes", "marketplace"], &[(5, 0.7), (7, 0.2), (14, 0.1)]),
        MockRule::new(&["bank", "hairdresser", "car repair", "laundry", "beauty"], &[(6, 0.7), (5, 0.2), (14, 0.1)]),
        MockRule::new(&["post office", "townhall", "library", "fuel"], &[(8, 0.7), (6, 0.2), (14, 0.1)]),
        MockRule::new(&["parking", "bus station", "taxi", "train station"], &[(15, 0.6), (11, 0.3), (14, 0.1)]),
        MockRule::new(&["office", "industrial", "commercial", "warehouse"], &[(2, 0.8), (6, 0.1), (14, 0.1)]),
        MockRule::new(&["house", "apartments", "residential", "detached"], &[(1, 0.6), (11, 0.3), (14, 0.1)]),
    ]
}

/// POSTs `{"prompt": ...}` and reads `{"text": ...}` back.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    endpoint: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct PromptRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct TextReply {
    text: String,
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

fn map_ureq_error(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Status(code, resp) => {
            let body = resp.into_string().unwrap_or_default();
            let msg = format!("HTTP {code}: {}", body.chars().take(200).collect::<String>());
            if code == 429 || code >= 500 {
                BackendError::Transient(msg)
            } else {
                BackendError::Fatal(msg)
            }
        }
        ureq::Error::Transport(t) => BackendError::Transient(t.to_string()),
    }
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            agent: agent(timeout),
        }
    }
}

impl Backend for HttpBackend {
    fn submit(&self, prompt: &str) -> Result<String, BackendError> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .send_json(PromptRequest { prompt })
            .map_err(map_ureq_error)?;
        let reply: TextReply = resp
            .into_json()
            .map_err(|e| BackendError::Fatal(format!("malformed reply body: {e}")))?;
        Ok(reply.text)
    }
}

/// Adapter for chat-completion style APIs.
#[derive(Debug, Clone)]
pub struct ChatCompletionBackend {
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
}

impl ChatCompletionBackend {
    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| BackendError::Fatal(format!("environment variable {API_KEY_ENV} is not set")))?;
        Ok(Self::new(endpoint, model, api_key, timeout))
    }

    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: api_key.into(),
            agent: agent(timeout),
        }
    }
}

impl Backend for ChatCompletionBackend {
    fn submit(&self, prompt: &str) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let resp = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(map_ureq_error)?;
        let value: serde_json::Value = resp
            .into_json()
            .map_err(|e| BackendError::Fatal(format!("malformed reply body: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| BackendError::Fatal("reply has no choices[0].message.content".into()))
    }
}
