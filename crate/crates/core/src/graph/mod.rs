//! Cross-reference graph over the entities of a [`StepFile`].

pub(crate) mod canonical;

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::step::StepFile;

pub use canonical::{canonical_form, structural_hashes, CanonicalGraph, CanonicalNode, CanonicalParam};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("entity #{from} references missing entity #{to}")]
    DanglingReference { from: u64, to: u64 },
    #[error("reference graph contains a cycle through {}", format_cycle(.0))]
    CyclicModel(Vec<u64>),
}

fn format_cycle(cycle: &[u64]) -> String {
    cycle.iter().map(|id| format!("#{id}")).collect::<Vec<_>>().join(" -> ")
}

/// Directed graph whose edges are the `#id` references of each entity.
///
/// Nodes are stored in file order; `out_edges[i]` lists the ids referenced by
/// `nodes[i]` in parameter order with duplicates kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefGraph {
    nodes: Vec<u64>,
    index: HashMap<u64, usize>,
    out_edges: Vec<Vec<u64>>,
    in_degree: Vec<usize>,
}

impl RefGraph {
    pub fn nodes(&self) -> &[u64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.index.contains_key(&id)
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn out_edges(&self, id: u64) -> &[u64] {
        self.position(id).map_or(&[], |i| &self.out_edges[i])
    }

    pub fn in_degree(&self, id: u64) -> usize {
        self.position(id).map_or(0, |i| self.in_degree[i])
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    /// A topological order (every entity after the entities it references),
    /// or `None` if the graph has a cycle.
    pub fn dependency_order(&self) -> Option<Vec<u64>> {
        // Kahn's algorithm on reversed edges: an entity is ready once all of
        // its referenced entities have been emitted.
        let n = self.nodes.len();
        let mut pending: Vec<usize> = self.out_edges.iter().map(Vec::len).collect();
        let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, edges) in self.out_edges.iter().enumerate() {
            for to in edges {
                dependents[self.index[to]].push(i);
            }
        }
        let mut ready: VecDeque<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_front() {
            order.push(self.nodes[i]);
            for &d in &dependents[i] {
                pending[d] -= 1;
                if pending[d] == 0 {
                    ready.push_back(d);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

/// Builds the reference graph, failing on the first unresolved reference.
pub fn build_graph(file: &StepFile) -> Result<RefGraph, GraphError> {
    let n = file.entities.len();
    let mut index = HashMap::with_capacity(n);
    for (i, e) in file.entities.iter().enumerate() {
        index.insert(e.id, i);
    }
    let mut out_edges = Vec::with_capacity(n);
    let mut in_degree = vec![0usize; n];
    for e in &file.entities {
        let refs = e.references();
        for &to in &refs {
            match index.get(&to) {
                Some(&j) => in_degree[j] += 1,
                None => return Err(GraphError::DanglingReference { from: e.id, to }),
            }
        }
        out_edges.push(refs);
    }
    Ok(RefGraph {
        nodes: file.entities.iter().map(|e| e.id).collect(),
        index,
        out_edges,
        in_degree,
    })
}

/// Number of DATA-section entity instances; header records are not counted.
pub fn entity_count(file: &StepFile) -> usize {
    file.entities.len()
}

/// Entities that nothing references, ascending by id.
pub fn find_roots(graph: &RefGraph) -> Vec<u64> {
    let mut roots: Vec<u64> = graph
        .nodes
        .iter()
        .zip(&graph.in_degree)
        .filter(|(_, &deg)| deg == 0)
        .map(|(&id, _)| id)
        .collect();
    roots.sort_unstable();
    roots
}

/// One representative cycle per cyclic strongly connected component.
///
/// Each cycle starts at the smallest id of its component and follows a
/// shortest path back to it. Cycles are sorted by their first id.
pub fn detect_cycles(graph: &RefGraph) -> Vec<Vec<u64>> {
    let n = graph.nodes.len();
    let succ: Vec<Vec<usize>> = graph
        .out_edges
        .iter()
        .map(|edges| edges.iter().map(|to| graph.index[to]).collect())
        .collect();
    let components = strongly_connected_components(&succ);

    let mut cycles = Vec::new();
    let mut component_of = vec![usize::MAX; n];
    for (c, members) in components.iter().enumerate() {
        for &m in members {
            component_of[m] = c;
        }
    }
    for (c, members) in components.iter().enumerate() {
        let self_loop = members.len() == 1 && succ[members[0]].contains(&members[0]);
        if members.len() < 2 && !self_loop {
            continue;
        }
        let start = *members.iter().min_by_key(|&&m| graph.nodes[m]).expect("non-empty component");
        if self_loop {
            cycles.push(vec![graph.nodes[start]]);
            continue;
        }
        // Shortest path start -> ... -> start inside the component.
        let mut parent = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        let mut found = None;
        for &s in &succ[start] {
            if component_of[s] == c && parent[s] == usize::MAX {
                parent[s] = start;
                if s == start {
                    found = Some(start);
                    break;
                }
                queue.push_back(s);
            }
        }
        while found.is_none() {
            let Some(u) = queue.pop_front() else { break };
            for &v in &succ[u] {
                if component_of[v] != c {
                    continue;
                }
                if v == start {
                    found = Some(u);
                    break;
                }
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        let mut path = Vec::new();
        let mut cur = found.expect("a cyclic component has a cycle through every member");
        while cur != start {
            path.push(graph.nodes[cur]);
            cur = parent[cur];
        }
        path.push(graph.nodes[start]);
        path.reverse();
        cycles.push(path);
    }
    cycles.sort_by_key(|c| c[0]);
    cycles
}

/// Iterative Tarjan; components are returned in completion order.
fn strongly_connected_components(succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = succ.len();
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next_index = 0;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        let mut call_stack: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut child)) = call_stack.last_mut() {
            if let Some(&w) = succ[v].get(*child) {
                *child += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call_stack.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
                continue;
            }
            call_stack.pop();
            if let Some(&(parent, _)) = call_stack.last() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
            if lowlink[v] == index[v] {
                let mut component = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack holds the component");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                components.push(component);
            }
        }
    }
    components
}

/// Fails with [`GraphError::CyclicModel`] on the first cycle found.
pub fn ensure_acyclic(graph: &RefGraph) -> Result<(), GraphError> {
    match detect_cycles(graph).into_iter().next() {
        Some(cycle) => Err(GraphError::CyclicModel(cycle)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::step::parse_step;

    fn file(data: &str) -> StepFile {
        parse_step(&format!("ISO-10303-21;\nHEADER;\nENDSEC;\nDATA;\n{data}\nENDSEC;\nEND-ISO-10303-21;\n")).unwrap()
    }

    #[test]
    fn builds_edges_in_parameter_order() {
        let g = build_graph(&file("#1=A(#2,#3);\n#2=B();\n#3=C(#2);")).unwrap();
        assert_eq!(g.out_edges(1), &[2, 3]);
        assert_eq!(g.out_edges(3), &[2]);
        assert_eq!(g.in_degree(2), 2);
        assert_eq!(find_roots(&g), vec![1]);
        assert!(detect_cycles(&g).is_empty());
    }

    #[test]
    fn single_entity_has_no_edges() {
        let g = build_graph(&file("#4=POINT();")).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(find_roots(&g), vec![4]);
    }

    #[test]
    fn dangling_reference_is_reported() {
        assert_eq!(
            build_graph(&file("#1=A(#9);")).unwrap_err(),
            GraphError::DanglingReference { from: 1, to: 9 }
        );
    }

    #[test]
    fn duplicate_edges_are_kept() {
        let g = build_graph(&file("#1=A((#2,#2));\n#2=B();")).unwrap();
        assert_eq!(g.out_edges(1), &[2, 2]);
        assert_eq!(g.in_degree(2), 2);
    }

    #[test]
    fn roots_of_disconnected_chains_are_sorted() {
        let g = build_graph(&file("#5=A(#6);\n#6=B();\n#2=C(#3);\n#3=D();")).unwrap();
        assert_eq!(find_roots(&g), vec![2, 5]);
    }

    #[test]
    fn cycles_and_self_loops() {
        let g = build_graph(&file("#1=A(#2);\n#2=B(#1);")).unwrap();
        assert!(find_roots(&g).is_empty());
        assert_eq!(detect_cycles(&g), vec![vec![1, 2]]);
        assert!(g.dependency_order().is_none());

        let g = build_graph(&file("#1=A(#1);")).unwrap();
        assert_eq!(detect_cycles(&g), vec![vec![1]]);
        assert!(matches!(ensure_acyclic(&g), Err(GraphError::CyclicModel(_))));
    }

    #[test]
    fn reports_one_cycle_per_component() {
        let g = build_graph(&file("#1=A(#2);\n#2=B(#3);\n#3=C(#1,#4);\n#4=D(#5);\n#5=E(#4);\n#6=F(#1);")).unwrap();
        assert_eq!(detect_cycles(&g), vec![vec![1, 2, 3], vec![4, 5]]);
    }

    #[test]
    fn entity_count_ignores_header() {
        assert_eq!(entity_count(&file("#1=A();")), 1);
        assert_eq!(entity_count(&file("")), 0);
    }
}
