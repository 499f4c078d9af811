//! Knowledge-graph construction from unstructured text.

pub mod chunker;
pub mod digest;
pub mod eval;
pub mod extractor;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod prompting;
pub mod prompts;
pub mod resolver;
pub mod schema;
