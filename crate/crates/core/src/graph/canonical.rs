//! Renaming- and order-invariant encoding of a reference DAG.
//!
//! Every entity gets a Merkle-style structural hash (type name, parameters,
//! and the hashes of referenced entities). Roots are visited in order of
//! `(type_name, structural hash)` and entities are labelled in DFS post-order,
//! children in parameter order. Only roots with identical structure fall back
//! to the original id, which cannot change the encoding unless those roots
//! also share descendants in different patterns; full graph isomorphism is
//! not attempted.

use std::collections::HashMap;

use super::{build_graph, ensure_acyclic, find_roots, GraphError};
use crate::fnv::Fnv64;
use crate::step::{EntityInstance, ParamValue, StepFile};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CanonicalParam {
    /// IEEE bits of the value, `-0.0` folded into `0.0`.
    Real(u64),
    Integer(i64),
    Text(String),
    Enum(String),
    /// Canonical label of the referenced entity.
    Ref(usize),
    List(Vec<CanonicalParam>),
    Omitted,
    Derived,
    Typed(String, Box<CanonicalParam>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonicalNode {
    pub type_name: String,
    pub params: Vec<CanonicalParam>,
    /// Remaining keywords of a complex instance.
    pub parts: Vec<(String, Vec<CanonicalParam>)>,
}

/// Entities listed by canonical label; roots are labels of unreferenced entities
/// in visiting order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonicalGraph {
    pub nodes: Vec<CanonicalNode>,
    pub roots: Vec<usize>,
}

fn real_bits(value: f64) -> u64 {
    if value == 0.0 {
        0.0f64.to_bits()
    } else {
        value.to_bits()
    }
}

fn hash_param(h: &mut Fnv64, p: &ParamValue, child_hash: &HashMap<u64, u64>) {
    match p {
        ParamValue::Real(r) => {
            h.write_u8(1);
            h.write_u64(real_bits(r.value()));
        }
        ParamValue::Integer(i) => {
            h.write_u8(2);
            h.write_u64(*i as u64);
        }
        ParamValue::Text(s) => {
            h.write_u8(3);
            h.write_str(s);
        }
        ParamValue::Enum(e) => {
            h.write_u8(4);
            h.write_str(e);
        }
        ParamValue::Reference(id) => {
            h.write_u8(5);
            h.write_u64(child_hash[id]);
        }
        ParamValue::List(items) => {
            h.write_u8(6);
            h.write_u64(items.len() as u64);
            for item in items {
                hash_param(h, item, child_hash);
            }
        }
        ParamValue::Omitted => h.write_u8(7),
        ParamValue::Derived => h.write_u8(8),
        ParamValue::Typed(name, inner) => {
            h.write_u8(9);
            h.write_str(name);
            hash_param(h, inner, child_hash);
        }
    }
}

fn hash_entity(e: &EntityInstance, child_hash: &HashMap<u64, u64>) -> u64 {
    let mut h = Fnv64::new();
    let parts = std::iter::once((&e.type_name, &e.params))
        .chain(e.complex_parts.iter().flatten().map(|p| (&p.type_name, &p.params)));
    for (name, params) in parts {
        h.write_str(name);
        h.write_u64(params.len() as u64);
        for p in params {
            hash_param(&mut h, p, child_hash);
        }
    }
    h.finish()
}

/// Structural hash of every entity. Requires an acyclic, fully resolved file.
pub fn structural_hashes(file: &StepFile) -> Result<HashMap<u64, u64>, GraphError> {
    let graph = build_graph(file)?;
    let order = match graph.dependency_order() {
        Some(order) => order,
        None => {
            ensure_acyclic(&graph)?;
            unreachable!("dependency order exists for acyclic graphs");
        }
    };
    let by_id: HashMap<u64, &EntityInstance> = file.entities.iter().map(|e| (e.id, e)).collect();
    let mut hashes = HashMap::with_capacity(order.len());
    for id in order {
        let h = hash_entity(by_id[&id], &hashes);
        hashes.insert(id, h);
    }
    Ok(hashes)
}

/// Root ids sorted by `(type_name, structural hash, id)`.
pub(crate) fn canonical_root_order(file: &StepFile, roots: &[u64], hashes: &HashMap<u64, u64>) -> Vec<u64> {
    let type_of: HashMap<u64, &str> = file.entities.iter().map(|e| (e.id, e.type_name.as_str())).collect();
    let mut sorted = roots.to_vec();
    sorted.sort_by(|a, b| (type_of[a], hashes[a], *a).cmp(&(type_of[b], hashes[b], *b)));
    sorted
}

fn encode_param(p: &ParamValue, label: &HashMap<u64, usize>) -> CanonicalParam {
    match p {
        ParamValue::Real(r) => CanonicalParam::Real(real_bits(r.value())),
        ParamValue::Integer(i) => CanonicalParam::Integer(*i),
        ParamValue::Text(s) => CanonicalParam::Text(s.clone()),
        ParamValue::Enum(e) => CanonicalParam::Enum(e.clone()),
        ParamValue::Reference(id) => CanonicalParam::Ref(label[id]),
        ParamValue::List(items) => CanonicalParam::List(items.iter().map(|i| encode_param(i, label)).collect()),
        ParamValue::Omitted => CanonicalParam::Omitted,
        ParamValue::Derived => CanonicalParam::Derived,
        ParamValue::Typed(name, inner) => CanonicalParam::Typed(name.clone(), Box::new(encode_param(inner, label))),
    }
}

/// Computes the canonical encoding of an acyclic file.
pub fn canonical_form(file: &StepFile) -> Result<CanonicalGraph, GraphError> {
    let graph = build_graph(file)?;
    ensure_acyclic(&graph)?;
    let hashes = structural_hashes(file)?;
    let roots = canonical_root_order(file, &find_roots(&graph), &hashes);

    // Post-order DFS labelling.
    let mut label: HashMap<u64, usize> = HashMap::with_capacity(graph.len());
    let mut order: Vec<u64> = Vec::with_capacity(graph.len());
    let mut root_labels = Vec::with_capacity(roots.len());
    let mut visited = std::collections::HashSet::with_capacity(graph.len());
    for &root in &roots {
        visited.insert(root);
        let mut stack: Vec<(u64, usize)> = vec![(root, 0)];
        while let Some((id, next)) = stack.last_mut() {
            let edges = graph.out_edges(*id);
            if let Some(&child) = edges.get(*next) {
                *next += 1;
                if visited.insert(child) {
                    stack.push((child, 0));
                }
            } else {
                let id = *id;
                stack.pop();
                label.insert(id, order.len());
                order.push(id);
            }
        }
        root_labels.push(label[&root]);
    }

    let by_id: HashMap<u64, &EntityInstance> = file.entities.iter().map(|e| (e.id, e)).collect();
    let nodes = order
        .iter()
        .map(|id| {
            let e = by_id[id];
            CanonicalNode {
                type_name: e.type_name.clone(),
                params: e.params.iter().map(|p| encode_param(p, &label)).collect(),
                parts: e
                    .complex_parts
                    .iter()
                    .flatten()
                    .map(|part| {
                        (
                            part.type_name.clone(),
                            part.params.iter().map(|p| encode_param(p, &label)).collect(),
                        )
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(CanonicalGraph {
        nodes,
        roots: root_labels,
    })
}
