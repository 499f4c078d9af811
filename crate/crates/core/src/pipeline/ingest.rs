//! Corpus ingestion: one document per file, the file stem is the id.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::digest::{digest_fields, sha256_hex};
use crate::llm::Tokenizer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentEntry {
    pub id: String,
    /// File name inside the input directory.
    pub file: String,
    pub digest: String,
    pub bytes: usize,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tokenizer: String,
    pub documents: Vec<DocumentEntry>,
    pub skipped: Vec<SkippedFile>,
}

impl Manifest {
    /// Digest over document ids and contents; independent of file order
    /// and timestamps.
    pub fn digest(&self) -> String {
        digest_fields(
            std::iter::once(self.tokenizer.clone())
                .chain(self.documents.iter().map(|d| format!("{}={}", d.id, d.digest))),
        )
    }

    pub fn document(&self, id: &str) -> Option<&DocumentEntry> {
        self.documents.iter().find(|d| d.id == id)
    }
}

/// A read corpus: manifest plus document texts by id.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: Manifest,
    pub texts: BTreeMap<String, String>,
}

/// Reads every regular, non-hidden file of `dir` in name order. Files that
/// are not UTF-8, or whose stem repeats an earlier file's, are skipped with
/// a reason. At least one document is required.
pub fn ingest(dir: &Path, tokenizer: &dyn Tokenizer) -> Result<Corpus, PipelineError> {
    let listing = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut files: Vec<_> = listing
        .filter_map(Result::ok)
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|name| !name.starts_with('.'))
        .collect();
    files.sort();

    let mut documents = Vec::new();
    let mut skipped = Vec::new();
    let mut texts = BTreeMap::new();
    for file in files {
        let path = dir.join(&file);
        let bytes = fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
        let id = Path::new(&file)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.clone());
        if texts.contains_key(&id) {
            skipped.push(SkippedFile {
                file,
                reason: format!("document id `{id}` already taken by another file"),
            });
            continue;
        }
        let text = match String::from_utf8(bytes) {
            Ok(text) => text,
            Err(e) => {
                skipped.push(SkippedFile {
                    file,
                    reason: format!("not valid UTF-8: {}", e.utf8_error()),
                });
                continue;
            }
        };
        documents.push(DocumentEntry {
            id: id.clone(),
            file,
            digest: sha256_hex(text.as_bytes()),
            bytes: text.len(),
            tokens: tokenizer.count(&text),
        });
        texts.insert(id, text);
    }
    if documents.is_empty() {
        return Err(PipelineError::EmptyCorpus(dir.to_path_buf()));
    }
    Ok(Corpus {
        manifest: Manifest {
            tokenizer: tokenizer.name().to_string(),
            documents,
            skipped,
        },
        texts,
    })
}
