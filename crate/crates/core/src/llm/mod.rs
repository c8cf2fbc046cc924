//! LLM-backed knowledge base: TF partition extraction and per-gene regulator
//! proposals through a chat-completion client with a persistent cache.

pub mod answer;
pub mod client;
pub mod kb;
pub mod template;

use thiserror::Error;

pub use answer::{parse_answer, render_answer, AnswerList};
pub use client::{
    CachedClient, ChatClient, ChatExchange, ChatRequest, FixtureClient, FnClient, HttpChatClient,
    HttpConfig, Message, ResponseCache, API_KEY_ENV,
};
pub use kb::{build_llm_grn, extract_tf_partition, propose_regulators, window_starts, LlmGrnOptions, LlmKb};
pub use template::{PromptTemplate, TemplateKind};

use crate::grn::GrnError;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("answer has no <Answer>...</Answer> pair")]
    MissingTags,
    #[error("answer lists no symbols")]
    EmptyAnswer,
    #[error("invalid prompt template: {0}")]
    Template(String),
    #[error("chat client error: {0}")]
    Client(String),
    #[error("gave up after {attempts} requests: {reason}")]
    RetriesExhausted { attempts: usize, reason: String },
    #[error("no TF survived validation")]
    EmptyPartition,
    #[error("invalid request: {0}")]
    InvalidInput(String),
    #[error("cache: {0}")]
    Cache(String),
    #[error("gene {gene}: {source}")]
    ForGene {
        gene: String,
        #[source]
        source: Box<LlmError>,
    },
    #[error(transparent)]
    Grn(#[from] GrnError),
}
