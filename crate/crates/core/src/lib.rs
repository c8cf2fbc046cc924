pub mod expression;
pub mod grn;
pub mod inference;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod synth;
