//! Prompt templates for TF extraction and regulator selection.

use serde::{Deserialize, Serialize};

use super::LlmError;

pub const CONTEXT: &str = "{CONTEXT}";
pub const GENE: &str = "{GENE-X}";
pub const LIST: &str = "{LIST-OF-TFs}";
/// Optional: number of regulators requested.
pub const COUNT: &str = "{K}";

pub const REGULATOR_SELECTION: &str = "We need to find transcriptomic factors related to {CONTEXT}.  What are the transcriptomic factors genes related to {GENE-X} out of {LIST-OF-TFs}. Which of these {K} TFs have a causal relationship with {GENE-X} gene? Do not include any genes beyond these. Give potential candidates. Think step by step and return the answer in the format <Answer> [first suggestion, second suggestion, third suggestion, fourth suggestion and so on....] </Answer>. You have to return the {K} potential TFs that are related to the give gene only, otherwise your answer will be disqualified.";

pub const TF_EXTRACTION: &str = "We need to find transcriptomic factors related to {CONTEXT} out of given genes.  What are the transcriptomic factors genes out of {LIST-OF-TFs}. Which of these can be transcriptomic factors? Do not include any TFs beyond these. Give potential candidates. Return the answer in the format <Answer> [first suggestion, second suggestion, third suggestion, fourth suggestion and so on....] </Answer>. Describe the reasoning first and then return answer in requested format with the potential TFs.";

pub const SYSTEM_PROMPT: &str = "You are an expert in gene regulation and single-cell transcriptomics.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    TfExtraction,
    RegulatorSelection,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    kind: TemplateKind,
    text: String,
}

fn count(text: &str, placeholder: &str) -> usize {
    text.matches(placeholder).count()
}

impl PromptTemplate {
    /// `{CONTEXT}` and `{LIST-OF-TFs}` must appear exactly once; regulator
    /// selection also needs `{GENE-X}` at least once.
    pub fn new(kind: TemplateKind, text: impl Into<String>) -> Result<Self, LlmError> {
        let text = text.into();
        for p in [CONTEXT, LIST] {
            let n = count(&text, p);
            if n != 1 {
                return Err(LlmError::Template(format!("{p} appears {n} times, expected once")));
            }
        }
        match kind {
            TemplateKind::RegulatorSelection if count(&text, GENE) == 0 => {
                return Err(LlmError::Template(format!("{GENE} missing")));
            }
            TemplateKind::TfExtraction if count(&text, GENE) > 0 => {
                return Err(LlmError::Template(format!("{GENE} not allowed in TF extraction")));
            }
            _ => {}
        }
        Ok(Self { kind, text })
    }

    pub fn default_for(kind: TemplateKind) -> Self {
        let text = match kind {
            TemplateKind::TfExtraction => TF_EXTRACTION,
            TemplateKind::RegulatorSelection => REGULATOR_SELECTION,
        };
        Self::new(kind, text).expect("built-in template is valid")
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn render(&self, context: &str, list: &[String], gene: Option<&str>, k: Option<usize>) -> String {
        let mut out = self
            .text
            .replace(CONTEXT, context)
            .replace(LIST, &format!("[{}]", list.join(", ")));
        if let Some(g) = gene {
            out = out.replace(GENE, g);
        }
        if let Some(k) = k {
            out = out.replace(COUNT, &k.to_string());
        }
        out
    }
}
