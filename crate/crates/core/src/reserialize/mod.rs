//! DFS reserialization of STEP files.
//!
//! The reference DAG is expanded depth-first from its roots with each entity
//! expanded once. Entities are emitted in post-order, so every reference
//! points backwards, each branch forms a contiguous run, and ids are
//! renumbered `1..=N` in emission order. Reals are rounded to a fixed number
//! of significant digits and, optionally, every multi-entity branch is
//! preceded by a comment carrying its statistics:
//!
//! ```text
//! /* STEPLLM branch children=2 depth=2 size=3 */
//! #3=A(#1,#2);
//! ```

mod floats;
mod tree;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_graph, canonical_form, ensure_acyclic, find_roots, structural_hashes, GraphError};
use crate::step::{parse_annotation_body, BranchStats, StepFile};

pub use floats::{
    file_precision, format_real, normalize_floats, normalize_real, real_precision, MAX_SIG_DIGITS, MIN_SIG_DIGITS,
};
pub use tree::{annotate_branches, BranchAnnotation, SerializationTree, TreeNode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReserializeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("sig_digits must be in [{MIN_SIG_DIGITS}, {MAX_SIG_DIGITS}], got {0}")]
    InvalidSigDigits(u32),
}

/// Order in which the roots of a multi-root file are expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootOrder {
    /// Ascending original entity id.
    #[default]
    OriginalId,
    /// By `(type_name, structural hash)`, independent of the original ids.
    Canonical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReserializeOptions {
    pub sig_digits: u32,
    pub annotate: bool,
    pub root_order: RootOrder,
}

impl Default for ReserializeOptions {
    fn default() -> Self {
        ReserializeOptions {
            sig_digits: 6,
            annotate: true,
            root_order: RootOrder::OriginalId,
        }
    }
}

impl ReserializeOptions {
    pub fn validate(&self) -> Result<(), ReserializeError> {
        if (MIN_SIG_DIGITS..=MAX_SIG_DIGITS).contains(&self.sig_digits) {
            Ok(())
        } else {
            Err(ReserializeError::InvalidSigDigits(self.sig_digits))
        }
    }
}

/// Output of [`reserialize_with_map`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reserialized {
    pub file: StepFile,
    /// Original id to new id.
    pub id_map: BTreeMap<u64, u64>,
}

/// Builds the pruned DFS tree of an acyclic file with the chosen root order.
pub fn serialization_tree(file: &StepFile, root_order: RootOrder) -> Result<SerializationTree, ReserializeError> {
    let graph = build_graph(file)?;
    ensure_acyclic(&graph)?;
    let mut roots = find_roots(&graph);
    if root_order == RootOrder::Canonical {
        let hashes = structural_hashes(file)?;
        roots = crate::graph::canonical::canonical_root_order(file, &roots, &hashes);
    }
    Ok(SerializationTree::build(&graph, &roots))
}

pub fn reserialize_dfs(file: &StepFile, opts: &ReserializeOptions) -> Result<StepFile, ReserializeError> {
    reserialize_with_map(file, opts).map(|r| r.file)
}

/// DFS reserialization that also reports how ids were renumbered.
pub fn reserialize_with_map(file: &StepFile, opts: &ReserializeOptions) -> Result<Reserialized, ReserializeError> {
    opts.validate()?;
    let tree = serialization_tree(file, opts.root_order)?;

    let by_id: HashMap<u64, usize> = file.entities.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
    let mut id_map = BTreeMap::new();
    for (n, &node) in tree.expanded_post_order().iter().enumerate() {
        id_map.insert(tree.node(node).entity, n as u64 + 1);
    }

    let entities = tree
        .expanded_post_order()
        .iter()
        .map(|&node| {
            let tn = tree.node(node);
            let source = &file.entities[by_id[&tn.entity]];
            let mut entity = source
                .map_references(|old| id_map[&old])
                .map_reals(|r| normalize_real(r, opts.sig_digits));
            entity.id = id_map[&tn.entity];
            entity.annotation = (opts.annotate && tn.subtree_size > 1).then_some(BranchStats {
                child_count: tn.child_count,
                branch_depth: tn.branch_depth,
                subtree_size: tn.subtree_size,
            });
            entity
        })
        .collect();

    Ok(Reserialized {
        file: StepFile {
            header: file.header.clone(),
            entities,
            trailing_complete: true,
        },
        id_map,
    })
}

/// Removes every branch-annotation comment from `text`.
///
/// A comment alone on its line is removed together with that line; an inline
/// one is cut out in place. Other comments and string literals are untouched.
pub fn strip_annotations(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut copied_to = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\'' => {
                i = match text[i + 1..].find('\'') {
                    Some(close) => i + 1 + close + 1,
                    None => bytes.len(),
                };
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let Some(close) = text[i + 2..].find("*/") else {
                    break;
                };
                let end = i + 2 + close + 2;
                if parse_annotation_body(&text[i + 2..i + 2 + close]).is_none() {
                    i = end;
                    continue;
                }
                let line_start = text[..i].rfind('\n').map_or(0, |p| p + 1);
                let line_end = text[end..].find('\n').map_or(bytes.len(), |p| end + p);
                let alone = text[line_start.max(copied_to)..i].bytes().all(|b| b == b' ' || b == b'\t')
                    && line_start >= copied_to
                    && text[end..line_end].trim_end_matches('\r').bytes().all(|b| b == b' ' || b == b'\t');
                if alone {
                    out.push_str(&text[copied_to..line_start]);
                    copied_to = if line_end < bytes.len() { line_end + 1 } else { line_end };
                } else {
                    out.push_str(&text[copied_to..i]);
                    if out.ends_with('/') && text[end..].starts_with('*') {
                        out.push(' ');
                    }
                    copied_to = end;
                }
                i = end;
            }
            _ => i += 1,
        }
    }
    out.push_str(&text[copied_to..]);
    out
}

/// Whether two acyclic files describe the same model: equal canonical forms
/// once both are rounded to the coarser of their real precisions, but never
/// to fewer than [`MIN_SIG_DIGITS`] digits.
pub fn verify_equivalence(a: &StepFile, b: &StepFile) -> Result<bool, ReserializeError> {
    let precision = match (file_precision(a), file_precision(b)) {
        (Some(pa), Some(pb)) => pa.min(pb),
        (Some(p), None) | (None, Some(p)) => p,
        (None, None) => MAX_SIG_DIGITS,
    }
    .clamp(MIN_SIG_DIGITS, MAX_SIG_DIGITS);
    let ca = canonical_form(&normalize_floats(a, precision))?;
    let cb = canonical_form(&normalize_floats(b, precision))?;
    Ok(ca == cb)
}
