//! Weighted bipartite state/signal graph of a point of the simplex.

use serde::{Deserialize, Serialize};

use crate::game::{OccupationMeasure, Vertex};

// Union by size with path compression.
#[derive(Debug, Clone)]
struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// How edges of the graph are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `x_ij / (x_i x_j)`.
    #[default]
    Efficiency,
    /// `x_ij / x_j`: how often signal `j` is decoded as state `i`.
    PerSignal,
    /// `x_ij / x_i`: how often state `i` is encoded as signal `j`.
    PerState,
}

/// A connected component, with its vertices and edges in index order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Component {
    pub states: Vec<usize>,
    pub signals: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl Component {
    pub fn is_isolated_vertex(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.states.len() + self.signals.len()
    }

    /// The single state or single signal of a component satisfying the
    /// star condition, preferring the state for one-edge components.
    pub fn hub(&self) -> Option<Vertex> {
        if self.states.len() == 1 {
            Some(Vertex::State(self.states[0]))
        } else if self.signals.len() == 1 {
            Some(Vertex::Signal(self.signals[0]))
        } else {
            None
        }
    }
}

/// Bipartite graph on states and signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub num_states: usize,
    pub num_signals: usize,
    adjacency: Vec<bool>,
    weights: Vec<f64>,
    components: Vec<Component>,
}

impl BipartiteGraph {
    /// Unweighted graph from an explicit edge list (weights all 1).
    pub fn from_edges(num_states: usize, num_signals: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![false; num_states * num_signals];
        for &(i, j) in edges {
            assert!(i < num_states && j < num_signals, "edge ({i}, {j}) out of range");
            adjacency[i * num_signals + j] = true;
        }
        let weights = adjacency.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect();
        Self::assemble(num_states, num_signals, adjacency, weights)
    }

    /// Edge `{i, j}` iff `x_ij > threshold`.
    pub fn from_measure(x: &OccupationMeasure, threshold: f64, mode: WeightMode) -> Self {
        let (m1, m2) = (x.num_states(), x.num_signals());
        let mut adjacency = vec![false; m1 * m2];
        let mut weights = vec![0.0; m1 * m2];
        for i in 0..m1 {
            for j in 0..m2 {
                let w = x.get(i, j);
                if w > threshold {
                    adjacency[i * m2 + j] = true;
                    let (xi, xj) = (x.state_marginal(i), x.signal_marginal(j));
                    weights[i * m2 + j] = match mode {
                        WeightMode::Efficiency => w / (xi * xj),
                        WeightMode::PerSignal => w / xj,
                        WeightMode::PerState => w / xi,
                    };
                }
            }
        }
        Self::assemble(m1, m2, adjacency, weights)
    }

    fn assemble(m1: usize, m2: usize, adjacency: Vec<bool>, weights: Vec<f64>) -> Self {
        let mut sets = DisjointSets::new(m1 + m2);
        for i in 0..m1 {
            for j in 0..m2 {
                if adjacency[i * m2 + j] {
                    sets.union(i, m1 + j);
                }
            }
        }
        // Components are ordered by their smallest vertex (states first).
        let mut label = vec![usize::MAX; m1 + m2];
        let mut components: Vec<Component> = Vec::new();
        for v in 0..m1 + m2 {
            let root = sets.find(v);
            if label[root] == usize::MAX {
                label[root] = components.len();
                components.push(Component {
                    states: vec![],
                    signals: vec![],
                    edges: vec![],
                });
            }
            let c = &mut components[label[root]];
            if v < m1 {
                c.states.push(v);
            } else {
                c.signals.push(v - m1);
            }
        }
        for i in 0..m1 {
            for j in 0..m2 {
                if adjacency[i * m2 + j] {
                    components[label[sets.find(i)]].edges.push((i, j));
                }
            }
        }
        Self {
            num_states: m1,
            num_signals: m2,
            adjacency,
            weights,
            components,
        }
    }

    pub fn has_edge(&self, state: usize, signal: usize) -> bool {
        self.adjacency[state * self.num_signals + signal]
    }

    /// Weight of an edge, `None` for non-edges.
    pub fn weight(&self, state: usize, signal: usize) -> Option<f64> {
        self.has_edge(state, signal)
            .then(|| self.weights[state * self.num_signals + signal])
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_states)
            .flat_map(|i| (0..self.num_signals).map(move |j| (i, j)))
            .filter(|&(i, j)| self.has_edge(i, j))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count()
    }

    pub fn degree(&self, v: Vertex) -> usize {
        match v {
            Vertex::State(i) => (0..self.num_signals).filter(|&j| self.has_edge(i, j)).count(),
            Vertex::Signal(j) => (0..self.num_states).filter(|&i| self.has_edge(i, j)).count(),
        }
    }

    /// All components, isolated vertices included.
    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn isolated_vertices(&self) -> Vec<Vertex> {
        self.components
            .iter()
            .filter(|c| c.is_isolated_vertex())
            .flat_map(|c| {
                c.states
                    .iter()
                    .map(|&i| Vertex::State(i))
                    .chain(c.signals.iter().map(|&j| Vertex::Signal(j)))
            })
            .collect()
    }

    /// Every component has a single state or a single signal, and no vertex
    /// is isolated.
    pub fn satisfies_property_p(&self) -> bool {
        self.components
            .iter()
            .all(|c| !c.is_isolated_vertex() && (c.states.len() == 1 || c.signals.len() == 1))
    }

    /// Component index of every vertex, states first then signals.
    pub fn component_labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.num_states + self.num_signals];
        for (k, c) in self.components.iter().enumerate() {
            for &i in &c.states {
                labels[i] = k;
            }
            for &j in &c.signals {
                labels[self.num_states + j] = k;
            }
        }
        labels
    }

    /// Canonical edge list up to relabeling of states and of signals, or
    /// `None` when brute force over all relabelings is too expensive.
    pub fn canonical_form(&self) -> Option<Vec<(usize, usize)>> {
        let (m1, m2) = (self.num_states, self.num_signals);
        let count = factorial(m1).checked_mul(factorial(m2))?;
        if count > 40_320 {
            return None;
        }
        let edges = self.edges();
        let state_perms = permutations(m1);
        let signal_perms = permutations(m2);
        let mut best: Option<Vec<(usize, usize)>> = None;
        for sp in &state_perms {
            for gp in &signal_perms {
                let mut relabeled: Vec<(usize, usize)> =
                    edges.iter().map(|&(i, j)| (sp[i], gp[j])).collect();
                relabeled.sort_unstable();
                if best.as_ref().is_none_or(|b| relabeled < *b) {
                    best = Some(relabeled);
                }
            }
        }
        best
    }
}

fn factorial(n: usize) -> usize {
    (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k)).unwrap_or(usize::MAX)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                rec(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}
