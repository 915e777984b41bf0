//! Pipeline orchestration behind the `topicscope` command.

pub mod config;
pub mod pipeline;
