//! The `<Answer> [A, B, C] </Answer>` grammar.

use super::LlmError;
use crate::grn::normalize_symbol;

pub const OPEN_TAG: &str = "<Answer>";
pub const CLOSE_TAG: &str = "</Answer>";

/// Ordered, deduplicated, normalized gene symbols extracted from a reply.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerList {
    symbols: Vec<String>,
}

impl AnswerList {
    pub fn new<I, S>(symbols: I) -> Result<Self, LlmError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<String> = Vec::new();
        for s in symbols {
            let sym = normalize_symbol(s.as_ref());
            if !sym.is_empty() && !out.contains(&sym) {
                out.push(sym);
            }
        }
        if out.is_empty() {
            return Err(LlmError::EmptyAnswer);
        }
        Ok(Self { symbols: out })
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn into_vec(self) -> Vec<String> {
        self.symbols
    }
}

/// Takes the text between the first `<Answer>` and the next `</Answer>`,
/// strips optional brackets, splits on commas and normalizes each symbol.
pub fn parse_answer(raw: &str) -> Result<AnswerList, LlmError> {
    let start = raw.find(OPEN_TAG).ok_or(LlmError::MissingTags)?;
    let body_start = start + OPEN_TAG.len();
    let len = raw[body_start..].find(CLOSE_TAG).ok_or(LlmError::MissingTags)?;
    let mut body = raw[body_start..body_start + len].trim();
    if let Some(rest) = body.strip_prefix('[') {
        body = rest;
    }
    if let Some(rest) = body.strip_suffix(']') {
        body = rest;
    }
    AnswerList::new(body.split(','))
}

/// Inverse of [`parse_answer`] for normalized lists.
pub fn render_answer(list: &[String]) -> String {
    format!("{OPEN_TAG} [{}] {CLOSE_TAG}", list.join(", "))
}
