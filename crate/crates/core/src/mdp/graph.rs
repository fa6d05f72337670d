use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Coord;

pub type NodeId = usize;

/// Undirected location graph with positive edge costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationGraph {
    nodes: Vec<Coord>,
    /// Neighbors of each node, sorted by node id.
    adjacency: Vec<Vec<(NodeId, f64)>>,
    start: NodeId,
    goal: NodeId,
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    node: NodeId,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // Min-heap on cost, then lowest node id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl LocationGraph {
    pub fn new(nodes: Vec<Coord>, edges: &[(NodeId, NodeId, f64)], start: NodeId, goal: NodeId) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        for id in [start, goal] {
            if id >= n {
                return Err(Error::InvalidNode(id));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v, cost) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidNode(u.max(v)));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            if !(cost > 0.0 && cost.is_finite()) {
                return Err(Error::InvalidGraph(format!("edge ({u},{v}) has cost {cost}")));
            }
            adjacency[u].push((v, cost));
            adjacency[v].push((u, cost));
        }
        for list in &mut adjacency {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            list.dedup_by_key(|e| e.0);
        }
        let graph = LocationGraph {
            nodes,
            adjacency,
            start,
            goal,
        };
        let reach = graph.costs_from(start);
        if let Some(unreached) = reach.iter().position(|c| c.is_infinite()) {
            return Err(Error::InvalidGraph(format!(
                "graph is not connected: node {unreached} unreachable from {start}"
            )));
        }
        Ok(graph)
    }

    /// 4-connected `n`×`n` grid. Node `y * n + x` sits at coordinate `(x, y)`.
    pub fn grid(n: usize, step_cost: f64, start: NodeId, goal: NodeId) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("grid size must be positive".into()));
        }
        let nodes = (0..n * n).map(|i| [(i % n) as f64, (i / n) as f64]).collect();
        let mut edges = Vec::with_capacity(2 * n * n);
        for y in 0..n {
            for x in 0..n {
                let id = y * n + x;
                if x + 1 < n {
                    edges.push((id, id + 1, step_cost));
                }
                if y + 1 < n {
                    edges.push((id, id + n, step_cost));
                }
            }
        }
        Self::new(nodes, &edges, start, goal)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Coord] {
        &self.nodes
    }

    pub fn coord(&self, node: NodeId) -> Coord {
        self.nodes[node]
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn goal(&self) -> NodeId {
        self.goal
    }

    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[node]
    }

    pub fn edge_cost(&self, from: NodeId, to: NodeId) -> Option<f64> {
        let list = self.adjacency.get(from)?;
        list.binary_search_by(|e| e.0.cmp(&to)).ok().map(|i| list[i].1)
    }

    /// Dijkstra from `source`; unreachable nodes get `f64::INFINITY`.
    pub fn costs_from(&self, source: NodeId) -> Vec<f64> {
        self.dijkstra(source).0
    }

    fn dijkstra(&self, source: NodeId) -> (Vec<f64>, Vec<Option<NodeId>>) {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Frontier {
            cost: 0.0,
            node: source,
        });
        while let Some(Frontier { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for &(next, w) in &self.adjacency[node] {
                let candidate = cost + w;
                if candidate < dist[next] {
                    dist[next] = candidate;
                    parent[next] = Some(node);
                    heap.push(Frontier {
                        cost: candidate,
                        node: next,
                    });
                }
            }
        }
        (dist, parent)
    }

    pub fn shortest_path_cost(&self, from: NodeId, to: NodeId) -> Result<f64> {
        self.check(from)?;
        self.check(to)?;
        if from == to {
            return Ok(0.0);
        }
        let cost = self.costs_from(from)[to];
        if cost.is_finite() {
            Ok(cost)
        } else {
            Err(Error::Unreachable { from, to })
        }
    }

    /// Node sequence of a shortest path, both endpoints included.
    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Result<Vec<NodeId>> {
        self.check(from)?;
        self.check(to)?;
        let (dist, parent) = self.dijkstra(from);
        if dist[to].is_infinite() {
            return Err(Error::Unreachable { from, to });
        }
        let mut path = vec![to];
        let mut cur = to;
        while let Some(p) = parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Ok(path)
    }

    fn check(&self, node: NodeId) -> Result<()> {
        if node < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::InvalidNode(node))
        }
    }
}

/// Free-function form of [`LocationGraph::shortest_path_cost`].
pub fn shortest_path_cost(graph: &LocationGraph, from: NodeId, to: NodeId) -> Result<f64> {
    graph.shortest_path_cost(from, to)
}
