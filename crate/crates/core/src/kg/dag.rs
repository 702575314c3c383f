use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{InputRef, KnowledgeGraph, SourcePath};

/// A `(supernode, chunk)` node of the dataflow graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkId {
    pub supernode: String,
    pub chunk: String,
}

impl ChunkId {
    pub fn new(supernode: impl Into<String>, chunk: impl Into<String>) -> Self {
        Self {
            supernode: supernode.into(),
            chunk: chunk.into(),
        }
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.supernode, self.chunk)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DagError {
    #[error("unresolved reference `{name}` at {path}")]
    UnresolvedRef { path: SourcePath, name: String },
    #[error("cycle through {}", .nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" -> "))]
    Cycle { nodes: Vec<ChunkId> },
}

/// One resolved chunk input.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub slot: String,
    pub producer: usize,
    pub source: InputRef,
}

/// Dependency graph over chunks, nodes indexed in authoring order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    pub nodes: Vec<ChunkId>,
    /// Per node, its resolved inputs in slot binding order.
    pub inputs: Vec<Vec<Link>>,
    /// Topological order with ties broken by authoring order.
    pub order: Vec<usize>,
}

impl Dag {
    pub fn build(graph: &KnowledgeGraph) -> Result<Self, DagError> {
        let nodes: Vec<ChunkId> = graph
            .supernodes
            .iter()
            .flat_map(|(sn, s)| s.chunks.keys().map(move |c| ChunkId::new(sn, c)))
            .collect();
        let index_of = |id: &ChunkId| nodes.iter().position(|n| n == id);

        let mut inputs = Vec::with_capacity(nodes.len());
        for id in &nodes {
            let chunk = graph.chunk(id).expect("node comes from graph");
            let mut links = Vec::new();
            for (slot, input) in chunk.inputs_in_slot_order() {
                let path = SourcePath::slot(&id.supernode, &id.chunk, slot);
                let target = resolve(graph, &id.supernode, input).ok_or_else(|| DagError::UnresolvedRef {
                    path: path.clone(),
                    name: input.name().to_string(),
                })?;
                let producer = index_of(&target).expect("resolved ids exist");
                links.push(Link {
                    slot: slot.to_string(),
                    producer,
                    source: input.clone(),
                });
            }
            inputs.push(links);
        }

        let mut dag = Dag {
            nodes,
            inputs,
            order: Vec::new(),
        };
        dag.order = dag.linear_extension(|i| i)?;
        Ok(dag)
    }

    pub fn index_of(&self, id: &ChunkId) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn predecessors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.inputs[node].iter().map(|l| l.producer)
    }

    /// Kahn's algorithm; among ready nodes the smallest `rank` fires first.
    pub fn linear_extension<K: Ord>(&self, rank: impl Fn(usize) -> K) -> Result<Vec<usize>, DagError> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut succs = vec![Vec::new(); n];
        for (consumer, links) in self.inputs.iter().enumerate() {
            for l in links {
                indegree[consumer] += 1;
                succs[l.producer].push(consumer);
            }
        }
        let mut ready: BinaryHeap<Reverse<(K, usize)>> = (0..n).filter(|&i| indegree[i] == 0).map(|i| Reverse((rank(i), i))).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse((_, node))) = ready.pop() {
            order.push(node);
            for &s in &succs[node] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(Reverse((rank(s), s)));
                }
            }
        }
        if order.len() < n {
            return Err(DagError::Cycle {
                nodes: self.find_cycle(&indegree),
            });
        }
        Ok(order)
    }

    /// Every node upstream of `node` (exclusive).
    pub fn ancestors(&self, node: usize) -> Vec<usize> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = self.predecessors(node).collect();
        while let Some(p) = stack.pop() {
            if !std::mem::replace(&mut seen[p], true) {
                stack.extend(self.predecessors(p));
            }
        }
        (0..self.nodes.len()).filter(|&i| seen[i]).collect()
    }

    // Walks predecessor links among the nodes Kahn could not release until a
    // node repeats; the repeated stretch is a cycle.
    fn find_cycle(&self, indegree: &[usize]) -> Vec<ChunkId> {
        let stuck = |i: usize| indegree[i] > 0;
        let Some(start) = (0..self.nodes.len()).find(|&i| stuck(i)) else {
            return Vec::new();
        };
        let mut walk = vec![start];
        let mut cur = start;
        loop {
            let next = self
                .predecessors(cur)
                .find(|&p| stuck(p))
                .expect("a stuck node has a stuck predecessor");
            if let Some(pos) = walk.iter().position(|&w| w == next) {
                let mut cycle: Vec<usize> = walk[pos..].to_vec();
                cycle.reverse();
                // rotate so the earliest-authored node leads
                let lead = cycle.iter().enumerate().min_by_key(|(_, &n)| n).map(|(i, _)| i).unwrap_or(0);
                cycle.rotate_left(lead);
                return cycle.into_iter().map(|i| self.nodes[i].clone()).collect();
            }
            walk.push(next);
            cur = next;
        }
    }
}

/// Resolves an input link made in supernode `from_sn` to the producing chunk.
/// A supernode link targets the chunk holding that supernode's
/// `supernode_output` agent.
pub fn resolve(graph: &KnowledgeGraph, from_sn: &str, input: &InputRef) -> Option<ChunkId> {
    match input {
        InputRef::Chunk(name) => {
            let sn = graph.supernodes.get(from_sn)?;
            sn.chunks.contains_key(name).then(|| ChunkId::new(from_sn, name))
        }
        InputRef::Supernode(name) => {
            let (chunk, _) = graph.supernode_output_chunk(name)?;
            Some(ChunkId::new(name, chunk))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::parse_json_plan;

    fn dag(text: &str) -> Result<Dag, DagError> {
        Dag::build(&parse_json_plan(text).unwrap())
    }

    #[test]
    fn two_cycle() {
        let e = dag(r#"{"chunks": {"s": {
            "a": {"input": "from b", "agents": {"x": {}}},
            "b": {"input": "from a", "agents": {"y": {}}}}}}"#)
        .unwrap_err();
        match e {
            DagError::Cycle { nodes } => {
                assert_eq!(nodes, vec![ChunkId::new("s", "a"), ChunkId::new("s", "b")]);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn self_loop_is_cycle() {
        let e = dag(r#"{"chunks": {"s": {"a": {"input": "from a", "agents": {"x": {}}}}}}"#).unwrap_err();
        assert!(matches!(e, DagError::Cycle { ref nodes } if nodes.len() == 1));
    }

    #[test]
    fn dangling_chunk_name() {
        let e = dag(r#"{"chunks": {"s": {"a": {"input": "from missing_chunk", "agents": {"x": {}}}}}}"#).unwrap_err();
        match e {
            DagError::UnresolvedRef { path, name } => {
                assert_eq!(name, "missing_chunk");
                assert_eq!(path.to_string(), "s/a/input");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn supernode_ref_needs_output_flag() {
        let text = r#"{"chunks": {
            "img": {"load": {"agents": {"reader": {}}}},
            "t": {"p": {"input": "img", "agents": {"x": {}}}}}}"#;
        assert!(matches!(dag(text), Err(DagError::UnresolvedRef { .. })));
    }

    #[test]
    fn ties_follow_authoring_order() {
        let text = r#"{"chunks": {
            "img": {"load": {"agents": {"reader": {"supernode_output": true}}}},
            "b": {"p": {"input": "img", "agents": {"x": {}}}},
            "a": {"p": {"input": "img", "agents": {"x": {}}}, "q": {"input": "from p", "agents": {"x": {}}}}}}"#;
        let d = dag(text).unwrap();
        let names: Vec<String> = d.order.iter().map(|&i| d.nodes[i].to_string()).collect();
        assert_eq!(names, vec!["img/load", "b/p", "a/p", "a/q"]);
        let rev = d.linear_extension(std::cmp::Reverse).unwrap();
        let names: Vec<String> = rev.iter().map(|&i| d.nodes[i].to_string()).collect();
        assert_eq!(names, vec!["img/load", "a/p", "a/q", "b/p"]);
        assert_eq!(d.ancestors(3), vec![0, 2]);
    }
}
