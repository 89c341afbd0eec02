//! Change impact analysis over natural-language requirements with LLM
//! prompting, refinement, ranking and entailment-gated selection, plus the
//! comparison baselines, evaluation metrics and a prompt-detail importance
//! analysis.

pub mod ablation;
pub mod baselines;
pub mod corpus;
pub mod entailment;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod promptkit;
pub mod cli;
pub mod config;
