use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{geom, Vec3};

/// Undirected weighted graph in compressed adjacency form.
///
/// Neighbor lists are sorted by vertex index and carry Euclidean edge lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
}

impl Graph {
    /// Builds the graph over `positions.len()` vertices; duplicate edges collapse.
    pub fn from_edges(positions: &[Vec3], edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let n = positions.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for (v, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &u in list.iter() {
                neighbors.push(u);
                weights.push(geom::dist(positions[v], positions[u]));
            }
            offsets.push(neighbors.len());
        }
        Self {
            offsets,
            neighbors,
            weights,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[v]..self.offsets[v + 1];
        self.neighbors[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[self.offsets[a]..self.offsets[a + 1]]
            .binary_search(&b)
            .is_ok()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_vertices();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for (u, _) in self.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }
}

/// Result of a multi-source shortest path run.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    /// Distance to the nearest source; infinite when unreachable.
    pub distances: Vec<f64>,
    /// Position in the source list of the nearest source (0 when unreachable).
    pub labels: Vec<usize>,
}

#[derive(Clone, Copy)]
struct Entry {
    dist: f64,
    label: usize,
    vertex: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so the max-heap pops the smallest (dist, label, vertex).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.label.cmp(&self.label))
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

/// Multi-source Dijkstra. Labels are ordered lexicographically by
/// `(distance, source rank)`, so exact ties resolve to the earlier source.
pub fn shortest_paths(graph: &Graph, sources: &[usize]) -> ShortestPaths {
    let n = graph.num_vertices();
    let mut distances = vec![f64::INFINITY; n];
    let mut labels = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for (rank, &s) in sources.iter().enumerate() {
        if labels[s] == usize::MAX {
            distances[s] = 0.0;
            labels[s] = rank;
            heap.push(Entry {
                dist: 0.0,
                label: rank,
                vertex: s,
            });
        }
    }
    while let Some(Entry { dist, label, vertex }) = heap.pop() {
        if done[vertex] {
            continue;
        }
        done[vertex] = true;
        for (u, w) in graph.neighbors(vertex) {
            if done[u] {
                continue;
            }
            let nd = dist + w;
            let better = match nd.total_cmp(&distances[u]) {
                Ordering::Less => true,
                Ordering::Equal => label < labels[u],
                Ordering::Greater => false,
            };
            if better {
                distances[u] = nd;
                labels[u] = label;
                heap.push(Entry {
                    dist: nd,
                    label,
                    vertex: u,
                });
            }
        }
    }
    for l in labels.iter_mut() {
        if *l == usize::MAX {
            *l = 0;
        }
    }
    ShortestPaths { distances, labels }
}
