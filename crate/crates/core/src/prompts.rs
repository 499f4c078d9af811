//! Versioned prompt templates and their output grammars.
//!
//! The built-in set is compiled in from `resources/prompts.toml`; a file with
//! the same layout can replace it at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::llm::ChatMessage;

const BUILTIN: &str = include_str!("../resources/prompts.toml");

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{\{([a-z_]+)\}\}").expect("placeholder pattern"));

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt file: {0}")]
    Io(#[from] std::io::Error),
    #[error("prompt file is not valid: {0}")]
    Parse(String),
    #[error("template {task} is missing")]
    MissingTask { task: TaskId },
    #[error("template {task}: grammar must be anchored with ^ and $")]
    UnanchoredGrammar { task: TaskId },
    #[error("template {task}: grammar lacks capture group `{group}`")]
    MissingGroup { task: TaskId, group: &'static str },
    #[error("template {task}: bad regular expression: {source}")]
    Regex { task: TaskId, source: regex::Error },
    #[error("template {task}: placeholder `{name}` is not bound")]
    Unbound { task: TaskId, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskId {
    EntityExtraction,
    MentionRecognition,
    RelationExtraction,
    PredicateDescription,
    Summarization,
    ClusterDisambiguation,
    ConceptShrinkage,
    HypernymGeneration,
}

impl TaskId {
    pub const ALL: [TaskId; 8] = [
        TaskId::EntityExtraction,
        TaskId::MentionRecognition,
        TaskId::RelationExtraction,
        TaskId::PredicateDescription,
        TaskId::Summarization,
        TaskId::ClusterDisambiguation,
        TaskId::ConceptShrinkage,
        TaskId::HypernymGeneration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::EntityExtraction => "entity-extraction",
            TaskId::MentionRecognition => "mention-recognition",
            TaskId::RelationExtraction => "relation-extraction",
            TaskId::PredicateDescription => "predicate-description",
            TaskId::Summarization => "summarization",
            TaskId::ClusterDisambiguation => "cluster-disambiguation",
            TaskId::ConceptShrinkage => "concept-shrinkage",
            TaskId::HypernymGeneration => "hypernym-generation",
        }
    }

    /// Capture groups the grammar of this task must define.
    fn required_groups(self) -> &'static [&'static str] {
        match self {
            TaskId::EntityExtraction => &["number", "label", "description", "types"],
            TaskId::MentionRecognition => &["number", "label", "answer"],
            TaskId::RelationExtraction => &[
                "subject_number",
                "subject_label",
                "predicate",
                "object_number",
                "object_label",
            ],
            TaskId::PredicateDescription => &["predicate", "description"],
            TaskId::Summarization => &["text"],
            TaskId::ClusterDisambiguation => &["items"],
            TaskId::ConceptShrinkage => &["label"],
            TaskId::HypernymGeneration => &["hypernym", "relation", "items"],
        }
    }

    fn has_items(self) -> bool {
        matches!(self, TaskId::ClusterDisambiguation | TaskId::HypernymGeneration)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Deserialize)]
struct RawTemplate {
    system: String,
    user: String,
    grammar: String,
    item_grammar: Option<String>,
    item_separator: Option<String>,
}

/// Line grammar of a task: an anchored line pattern plus, for list-valued
/// lines, the pattern of one numbered item.
#[derive(Debug, Clone)]
pub struct OutputGrammar {
    pub task: TaskId,
    pub line: Regex,
    pub item: Option<(Regex, String)>,
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub task: TaskId,
    pub system: String,
    pub user: String,
    pub grammar: OutputGrammar,
}

impl PromptTemplate {
    /// Binds every placeholder, producing the system and user messages.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<Vec<ChatMessage>, PromptError> {
        Ok(vec![
            ChatMessage::system(self.fill(&self.system, bindings)?),
            ChatMessage::user(self.fill(&self.user, bindings)?),
        ])
    }

    fn fill(&self, text: &str, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        if let Some(missing) = PLACEHOLDER
            .captures_iter(text)
            .map(|c| c[1].to_string())
            .find(|name| !bindings.iter().any(|(k, _)| k == name))
        {
            return Err(PromptError::Unbound {
                task: self.task,
                name: missing,
            });
        }
        // Single pass, so bound values are never rescanned for placeholders.
        let filled = PLACEHOLDER.replace_all(text, |caps: &regex::Captures<'_>| {
            bindings
                .iter()
                .find(|(k, _)| *k == &caps[1])
                .map(|(_, v)| v.to_string())
                .unwrap_or_default()
        });
        Ok(filled.trim().to_string())
    }
}

/// All task templates of one prompt version.
#[derive(Debug, Clone)]
pub struct PromptSet {
    version: String,
    digest: String,
    templates: BTreeMap<TaskId, PromptTemplate>,
}

impl PromptSet {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("built-in prompt templates are valid")
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(source: &str) -> Result<Self, PromptError> {
        let mut table: toml::Table = toml::from_str(source).map_err(|e| PromptError::Parse(e.to_string()))?;
        let version = match table.remove("version") {
            Some(toml::Value::String(v)) => v,
            _ => return Err(PromptError::Parse("missing string `version`".into())),
        };
        let mut templates = BTreeMap::new();
        for task in TaskId::ALL {
            let raw: RawTemplate = table
                .remove(task.as_str())
                .ok_or(PromptError::MissingTask { task })?
                .try_into()
                .map_err(|e: toml::de::Error| PromptError::Parse(format!("{task}: {e}")))?;
            templates.insert(task, compile(task, raw)?);
        }
        Ok(Self {
            version,
            digest: sha256_hex(source),
            templates,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Digest of the template source, part of stage cache keys.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn get(&self, task: TaskId) -> &PromptTemplate {
        &self.templates[&task]
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

fn compile(task: TaskId, raw: RawTemplate) -> Result<PromptTemplate, PromptError> {
    let anchored = |p: &str| p.starts_with('^') && p.ends_with('$');
    if !anchored(&raw.grammar) || raw.item_grammar.as_deref().is_some_and(|p| !anchored(p)) {
        return Err(PromptError::UnanchoredGrammar { task });
    }
    let line = Regex::new(&raw.grammar).map_err(|source| PromptError::Regex { task, source })?;
    let names: Vec<&str> = line.capture_names().flatten().collect();
    for group in task.required_groups() {
        if !names.contains(group) {
            return Err(PromptError::MissingGroup { task, group });
        }
    }
    let item = if task.has_items() {
        let pattern = raw.item_grammar.ok_or(PromptError::MissingGroup {
            task,
            group: "item_grammar",
        })?;
        let regex = Regex::new(&pattern).map_err(|source| PromptError::Regex { task, source })?;
        for group in ["number", "label"] {
            if !regex.capture_names().flatten().any(|n| n == group) {
                return Err(PromptError::MissingGroup { task, group });
            }
        }
        Some((regex, raw.item_separator.unwrap_or_else(|| "|".into())))
    } else {
        None
    };
    Ok(PromptTemplate {
        task,
        system: raw.system,
        user: raw.user,
        grammar: OutputGrammar { task, line, item },
    })
}

/// `1. first\n2. second` with 1-based numbering.
pub fn numbered_list<I, S>(items: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    items
        .into_iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}
