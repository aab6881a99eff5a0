//! Library for bi-temporal remote-sensing change analysis tooling: change-map
//! ingestion and structured fact extraction, instruction-record dataset
//! generation, chat-backend plumbing for open-ended QA, a multi-task metric
//! suite, and a numerically verified difference-perception kernel.

pub mod changemap;
pub mod config;
pub mod instructgen;
pub mod kernel;
pub mod metrics;
pub mod llmclient;
