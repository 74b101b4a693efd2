//! Language-model transport with two interchangeable backends: a live
//! chat-completion endpoint and a deterministic scripted replay for tests.

pub mod live;
pub mod prompts;
pub mod scripted;

use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

pub use live::LiveGateway;
pub use scripted::ScriptedGateway;

/// Maximum accepted response body.
pub const MAX_RESPONSE_BYTES: usize = 4 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestTag {
    Mutate,
    ProposeFactors,
    Annotate,
    Abduce,
    Summarize,
}

impl RequestTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RequestTag::Mutate => "mutate",
            RequestTag::ProposeFactors => "propose_factors",
            RequestTag::Annotate => "annotate",
            RequestTag::Abduce => "abduce",
            RequestTag::Summarize => "summarize",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: RequestTag,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Live,
    Scripted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub backend: Backend,
}

pub trait Gateway: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}
