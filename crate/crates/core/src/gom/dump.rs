//! Plain-text memory dumps for offline retrieval.
//!
//! One memory per line, tab separated:
//!
//! ```text
//! id <TAB> opinion <TAB> content <TAB> e1,e2,...[ <TAB> k1,k2,...]
//! ```
//!
//! The optional fifth field is the keyword embedding; when absent the
//! content embedding is reused. Blank lines and lines starting with `#` are
//! skipped. Memories are inserted in file order.

use std::path::Path;

use super::memory::{MemoryGraph, MemoryNode};
use crate::error::{Error, Result};
use crate::model::Opinion;

/// Reals separated by commas and/or whitespace.
pub fn parse_reals(text: &str) -> std::result::Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| format!("not a real number: {s:?}"))
        })
        .collect()
}

pub fn parse_memory_line(line: &str) -> std::result::Result<MemoryNode, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if !(4..=5).contains(&fields.len()) {
        return Err(format!(
            "expected 4 or 5 tab-separated fields, got {}",
            fields.len()
        ));
    }
    let node_id: u64 = fields[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad id {:?}", fields[0]))?;
    let opinion: f64 = fields[1]
        .trim()
        .parse()
        .map_err(|_| format!("bad opinion {:?}", fields[1]))?;
    if !(-1.0..=1.0).contains(&opinion) {
        return Err(format!("opinion {opinion} outside [-1, 1]"));
    }
    let content_embedding = parse_reals(fields[3])?;
    let keyword_embedding = match fields.get(4) {
        Some(k) => parse_reals(k)?,
        None => content_embedding.clone(),
    };
    Ok(MemoryNode {
        node_id,
        content: fields[2].to_string(),
        content_embedding,
        keyword_embedding,
        opinion: Opinion::new(opinion),
        step_created: 0,
    })
}

pub fn read_memory_dump(path: &Path, knn: usize) -> Result<MemoryGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut graph = MemoryGraph::new(knn);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let node = parse_memory_line(line).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        graph.insert(node)?;
    }
    Ok(graph)
}

pub fn read_query(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reals(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message,
    })
}
