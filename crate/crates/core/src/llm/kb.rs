use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::answer::{parse_answer, OPEN_TAG};
use super::client::{ChatClient, ChatRequest, Message};
use super::template::{PromptTemplate, TemplateKind, SYSTEM_PROMPT};
use super::LlmError;
use crate::grn::{validate_grn, GeneVocabulary, Grn, TfPartition};

/// Request-level settings shared by every query of one knowledge base.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmGrnOptions {
    pub model: String,
    pub temperature: f64,
    /// Total requests allowed per gene (or per window) before giving up.
    pub max_retries: usize,
    /// Maximum number of requests in flight.
    pub concurrency: usize,
}

impl Default for LlmGrnOptions {
    fn default() -> Self {
        Self {
            model: "gpt-4".into(),
            temperature: 0.0,
            max_retries: 3,
            concurrency: 4,
        }
    }
}

/// A chat client bound to a biological context, prompt templates and options.
pub struct LlmKb<'a> {
    pub client: &'a dyn ChatClient,
    pub context: String,
    pub options: LlmGrnOptions,
    pub tf_template: PromptTemplate,
    pub regulator_template: PromptTemplate,
}

impl<'a> LlmKb<'a> {
    pub fn new(client: &'a dyn ChatClient, context: impl Into<String>, options: LlmGrnOptions) -> Self {
        Self {
            client,
            context: context.into(),
            options,
            tf_template: PromptTemplate::default_for(TemplateKind::TfExtraction),
            regulator_template: PromptTemplate::default_for(TemplateKind::RegulatorSelection),
        }
    }

    fn request(&self, prompt: String) -> ChatRequest {
        ChatRequest {
            model: self.options.model.clone(),
            temperature: self.options.temperature,
            messages: vec![Message::system(SYSTEM_PROMPT), Message::user(prompt)],
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, LlmError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.options.concurrency.max(1))
            .build()
            .map_err(|e| LlmError::InvalidInput(e.to_string()))
    }
}

fn correction(prompt: &str, reason: &str) -> String {
    format!(
        "{prompt}\n\nYour previous answer was rejected: {reason}. Reply again and end with the list in the format {OPEN_TAG} [...] </Answer>."
    )
}

/// Window start offsets: 0, stride, 2·stride, … plus a final window aligned to
/// the end when the strided windows leave a tail uncovered.
pub fn window_starts(n: usize, window: usize, stride: usize) -> Result<Vec<usize>, LlmError> {
    if window == 0 || window > n {
        return Err(LlmError::InvalidInput(format!("window {window} must be in 1..={n}")));
    }
    if stride == 0 || stride > window {
        return Err(LlmError::InvalidInput(format!("stride {stride} must be in 1..={window}")));
    }
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|s| s + window <= n).collect();
    if *starts.last().unwrap() + window < n {
        starts.push(n - window);
    }
    Ok(starts)
}

fn query_window(kb: &LlmKb, genes: &[String]) -> Result<Vec<String>, LlmError> {
    let prompt = kb.tf_template.render(&kb.context, genes, None, None);
    let attempts = kb.options.max_retries.max(1);
    let mut text = prompt.clone();
    let mut reason = String::new();
    for _ in 0..attempts {
        let reply = kb.client.complete(&kb.request(text.clone()))?;
        match parse_answer(&reply) {
            Ok(list) => return Ok(list.into_vec()),
            Err(LlmError::EmptyAnswer) => return Ok(Vec::new()),
            Err(e) => {
                reason = e.to_string();
                text = correction(&prompt, &reason);
            }
        }
    }
    Err(LlmError::RetriesExhausted { attempts, reason })
}

/// Asks which genes of each sliding window are TFs; the union of accepted
/// answers becomes the TF side, everything else the target side.
pub fn extract_tf_partition(
    vocab: &GeneVocabulary,
    kb: &LlmKb,
    window: usize,
    stride: usize,
    validate_membership: bool,
) -> Result<TfPartition, LlmError> {
    let starts = window_starts(vocab.len(), window, stride)?;
    let symbols = vocab.symbols();
    let answers: Vec<Result<Vec<String>, LlmError>> = kb.pool()?.install(|| {
        starts
            .par_iter()
            .map(|&s| query_window(kb, &symbols[s..s + window]))
            .collect()
    });
    let mut tfs = BTreeSet::new();
    for (&s, answer) in starts.iter().zip(answers) {
        let answer = answer?;
        let win = &symbols[s..s + window];
        for sym in answer {
            let keep = if validate_membership {
                win.contains(&sym)
            } else {
                vocab.contains(&sym)
            };
            if keep {
                tfs.insert(sym);
            } else {
                log::debug!("dropping proposed TF {sym} outside window at {s}");
            }
        }
    }
    if tfs.is_empty() {
        return Err(LlmError::EmptyPartition);
    }
    Ok(TfPartition::from_vocabulary(vocab, tfs.iter())?)
}

/// Asks for exactly `k` regulators of `gene` drawn from `tf_list`, re-asking
/// with a correction note until the answer is valid or the budget runs out.
pub fn propose_regulators(
    gene: &str,
    tf_list: &[String],
    kb: &LlmKb,
    k: usize,
) -> Result<Vec<String>, LlmError> {
    if k == 0 || tf_list.len() < k {
        return Err(LlmError::InvalidInput(format!(
            "need 1 <= k <= {} offered TFs, got k = {k}",
            tf_list.len()
        )));
    }
    if tf_list.iter().any(|t| t == gene) {
        return Err(LlmError::InvalidInput(format!("{gene} is itself in the TF list")));
    }
    let prompt = kb.regulator_template.render(&kb.context, tf_list, Some(gene), Some(k));
    let attempts = kb.options.max_retries.max(1);
    let mut text = prompt.clone();
    let mut reason = String::new();
    for _ in 0..attempts {
        let reply = kb.client.complete(&kb.request(text.clone()))?;
        let outcome = parse_answer(&reply).and_then(|list| {
            if let Some(bad) = list.symbols().iter().find(|s| !tf_list.contains(s)) {
                return Err(LlmError::InvalidInput(format!("{bad} is not in the offered TF list")));
            }
            if list.len() != k {
                return Err(LlmError::InvalidInput(format!(
                    "expected {k} TFs, got {}",
                    list.len()
                )));
            }
            Ok(list.into_vec())
        });
        match outcome {
            Ok(v) => return Ok(v),
            Err(e) => {
                reason = match e {
                    LlmError::InvalidInput(m) => m,
                    other => other.to_string(),
                };
                text = correction(&prompt, &reason);
            }
        }
    }
    Err(LlmError::RetriesExhausted { attempts, reason })
}

/// Proposes regulators for every target and assembles the validated graph.
/// Results are assembled in target symbol order whatever the completion order.
pub fn build_llm_grn(partition: &TfPartition, kb: &LlmKb, k: usize) -> Result<Grn, LlmError> {
    let tf_list: Vec<String> = partition.tfs().iter().cloned().collect();
    let targets: Vec<&String> = partition.targets().iter().collect();
    let results: Vec<Result<Vec<String>, LlmError>> = kb.pool()?.install(|| {
        targets
            .par_iter()
            .map(|g| propose_regulators(g, &tf_list, kb, k))
            .collect()
    });
    let mut edges = Vec::with_capacity(targets.len() * k);
    for (gene, r) in targets.iter().zip(results) {
        let regs = r.map_err(|e| LlmError::ForGene {
            gene: (*gene).clone(),
            source: Box::new(e),
        })?;
        edges.extend(regs.into_iter().map(|t| (t, (*gene).clone())));
    }
    Ok(validate_grn(partition, &edges, k)?)
}
