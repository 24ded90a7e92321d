use std::collections::HashSet;

use crate::graph::RefGraph;

/// One occurrence of an entity in the DFS expansion of the reference graph.
///
/// An entity is expanded at its first encounter only; later references to it
/// become leaf stubs (`expanded == false`) with no children and zero stats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub entity: u64,
    pub children: Vec<usize>,
    pub expanded: bool,
    /// Distinct entities referenced directly.
    pub child_count: usize,
    /// Height of the pruned subtree in edges; 0 for leaves and stubs.
    pub branch_depth: usize,
    /// Expanded nodes in the subtree, this one included.
    pub subtree_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchAnnotation {
    pub owner: u64,
    pub child_count: usize,
    pub branch_depth: usize,
    pub subtree_size: usize,
}

/// Pruned hierarchical expansion of a reference DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializationTree {
    nodes: Vec<TreeNode>,
    roots: Vec<usize>,
    /// Expanded tree nodes in DFS post-order.
    post_order: Vec<usize>,
}

impl SerializationTree {
    /// Expands `graph` depth-first from `roots`, visiting children in
    /// parameter order. The graph must be acyclic.
    pub fn build(graph: &RefGraph, roots: &[u64]) -> SerializationTree {
        let mut nodes: Vec<TreeNode> = Vec::with_capacity(graph.edge_count() + roots.len());
        let mut root_nodes = Vec::with_capacity(roots.len());
        let mut post_order = Vec::with_capacity(graph.len());
        let mut expanded: HashSet<u64> = HashSet::with_capacity(graph.len());

        let new_node = |nodes: &mut Vec<TreeNode>, entity: u64, is_expanded: bool| {
            nodes.push(TreeNode {
                entity,
                children: Vec::new(),
                expanded: is_expanded,
                child_count: 0,
                branch_depth: 0,
                subtree_size: 0,
            });
            nodes.len() - 1
        };

        for &root in roots {
            if !expanded.insert(root) {
                continue;
            }
            let root_node = new_node(&mut nodes, root, true);
            root_nodes.push(root_node);
            let mut stack: Vec<(usize, usize)> = vec![(root_node, 0)];
            while let Some(&(node, next)) = stack.last() {
                let entity = nodes[node].entity;
                let edges = graph.out_edges(entity);
                if let Some(&child) = edges.get(next) {
                    stack.last_mut().expect("stack is non-empty").1 += 1;
                    let first_visit = expanded.insert(child);
                    let child_node = new_node(&mut nodes, child, first_visit);
                    nodes[node].children.push(child_node);
                    if first_visit {
                        stack.push((child_node, 0));
                    }
                    continue;
                }
                stack.pop();
                let distinct: HashSet<u64> = edges.iter().copied().collect();
                let (depth, size) = nodes[node]
                    .children
                    .iter()
                    .map(|&c| &nodes[c])
                    .fold((0usize, 1usize), |(depth, size), c| {
                        (depth.max(c.branch_depth + 1), size + c.subtree_size)
                    });
                let n = &mut nodes[node];
                n.child_count = distinct.len();
                n.branch_depth = depth;
                n.subtree_size = size;
                post_order.push(node);
            }
        }
        SerializationTree {
            nodes,
            roots: root_nodes,
            post_order,
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn node(&self, index: usize) -> &TreeNode {
        &self.nodes[index]
    }

    /// Entity ids in emission order: DFS post-order over expanded nodes, so
    /// every entity follows all entities it references.
    pub fn emission_order(&self) -> Vec<u64> {
        self.post_order.iter().map(|&i| self.nodes[i].entity).collect()
    }

    /// Expanded node indices in emission order.
    pub fn expanded_post_order(&self) -> &[usize] {
        &self.post_order
    }
}

/// Branch statistics for every expanded node whose subtree holds more than one
/// expanded entity, in emission order.
pub fn annotate_branches(tree: &SerializationTree) -> Vec<BranchAnnotation> {
    tree.expanded_post_order()
        .iter()
        .map(|&i| tree.node(i))
        .filter(|n| n.subtree_size > 1)
        .map(|n| BranchAnnotation {
            owner: n.entity,
            child_count: n.child_count,
            branch_depth: n.branch_depth,
            subtree_size: n.subtree_size,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, find_roots};
    use crate::step::parse_step;

    fn tree(data: &str) -> SerializationTree {
        let file =
            parse_step(&format!("ISO-10303-21;\nHEADER;\nENDSEC;\nDATA;\n{data}\nENDSEC;\nEND-ISO-10303-21;\n")).unwrap();
        let graph = build_graph(&file).unwrap();
        SerializationTree::build(&graph, &find_roots(&graph))
    }

    #[test]
    fn three_leaf_children() {
        let t = tree("#1=A(#2,#3,#4);\n#2=L();\n#3=L();\n#4=L();");
        let ann = annotate_branches(&t);
        assert_eq!(
            ann,
            vec![BranchAnnotation {
                owner: 1,
                child_count: 3,
                branch_depth: 1,
                subtree_size: 4
            }]
        );
    }

    #[test]
    fn leaves_carry_no_annotation() {
        let t = tree("#1=L();");
        assert!(annotate_branches(&t).is_empty());
        assert_eq!(t.node(t.roots()[0]).subtree_size, 1);
    }

    #[test]
    fn chain_depth() {
        let t = tree("#1=A(#2);\n#2=A(#3);\n#3=A(#4);\n#4=A(#5);\n#5=L();");
        let ann = annotate_branches(&t);
        let root = ann.iter().find(|a| a.owner == 1).unwrap();
        assert_eq!(root.branch_depth, 4);
        assert_eq!(root.subtree_size, 5);
        assert_eq!(ann.len(), 4);
    }

    #[test]
    fn shared_child_expands_once() {
        let t = tree("#10=A(#7,#23);\n#7=B();\n#23=C(#7);");
        assert_eq!(t.emission_order(), vec![7, 23, 10]);
        let expansions = t.nodes().iter().filter(|n| n.entity == 7 && n.expanded).count();
        let stubs = t.nodes().iter().filter(|n| n.entity == 7 && !n.expanded).count();
        assert_eq!((expansions, stubs), (1, 1));
        let root = t.node(t.roots()[0]);
        assert_eq!((root.child_count, root.branch_depth, root.subtree_size), (2, 2, 3));
    }

    #[test]
    fn duplicate_reference_counts_once() {
        let t = tree("#1=A(#2,#2);\n#2=L();");
        let root = t.node(t.roots()[0]);
        assert_eq!(root.children.len(), 2);
        assert_eq!(root.child_count, 1);
        assert_eq!(root.subtree_size, 2);
    }
}
