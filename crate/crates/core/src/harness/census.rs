use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::harness::replication::ReplicationResult;

/// Terminal graphs sharing one exact edge set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusClass {
    pub edges: Vec<(usize, usize)>,
    pub count: usize,
    pub unresolved: usize,
    pub frequency: f64,
    pub mean_terminal_potential: f64,
    pub property_p: bool,
}

/// Classes merged under relabeling of states and of signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismClass {
    pub canonical_edges: Vec<(usize, usize)>,
    pub count: usize,
    pub frequency: f64,
    pub property_p: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub replications: usize,
    pub unresolved: usize,
    /// Replications that are resolved and whose graph has the star property.
    pub resolved_with_property_p: usize,
    /// Ordered by decreasing count, ties by edge list.
    pub classes: Vec<CensusClass>,
    /// Empty when the game is too large for brute-force canonical forms.
    pub isomorphism_classes: Vec<IsomorphismClass>,
}

impl Census {
    pub fn class(&self, edges: &[(usize, usize)]) -> Option<&CensusClass> {
        self.classes.iter().find(|c| c.edges == edges)
    }

    /// Resolved classes that violate the star property.
    pub fn resolved_violations(&self) -> Vec<&CensusClass> {
        self.classes
            .iter()
            .filter(|c| !c.property_p && c.count > c.unresolved)
            .collect()
    }

    pub fn frequency_sum(&self) -> f64 {
        self.classes.iter().map(|c| c.frequency).sum()
    }
}

/// Groups terminal limit graphs by exact edge set.
pub fn limit_graph_census(results: &[ReplicationResult]) -> Census {
    let total = results.len();
    let mut by_edges: BTreeMap<Vec<(usize, usize)>, (usize, usize, f64, bool)> = BTreeMap::new();
    let mut by_iso: BTreeMap<Vec<(usize, usize)>, (usize, bool)> = BTreeMap::new();
    let mut canonical_ok = true;
    for r in results {
        let edges = r.limit_graph.edges();
        let e = by_edges.entry(edges).or_insert((0, 0, 0.0, r.property_p));
        e.0 += 1;
        e.1 += r.unresolved as usize;
        e.2 += r.terminal_potential();
        match r.limit_graph.canonical_form() {
            Some(c) => by_iso.entry(c).or_insert((0, r.property_p)).0 += 1,
            None => canonical_ok = false,
        }
    }
    let freq = |c: usize| if total == 0 { 0.0 } else { c as f64 / total as f64 };
    let mut classes: Vec<CensusClass> = by_edges
        .into_iter()
        .map(|(edges, (count, unresolved, h, property_p))| CensusClass {
            edges,
            count,
            unresolved,
            frequency: freq(count),
            mean_terminal_potential: h / count as f64,
            property_p,
        })
        .collect();
    classes.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.edges.cmp(&b.edges)));
    let mut isomorphism_classes: Vec<IsomorphismClass> = if canonical_ok {
        by_iso
            .into_iter()
            .map(|(canonical_edges, (count, property_p))| IsomorphismClass {
                canonical_edges,
                count,
                frequency: freq(count),
                property_p,
            })
            .collect()
    } else {
        Vec::new()
    };
    isomorphism_classes.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.canonical_edges.cmp(&b.canonical_edges)));
    Census {
        replications: total,
        unresolved: results.iter().filter(|r| r.unresolved).count(),
        resolved_with_property_p: results.iter().filter(|r| !r.unresolved && r.property_p).count(),
        classes,
        isomorphism_classes,
    }
}

/// Edge list of the signaling system matching state `i` to signal `perm[i]`.
pub fn signaling_system_edges(perm: &[usize]) -> Vec<(usize, usize)> {
    let mut e: Vec<(usize, usize)> = perm.iter().enumerate().map(|(i, &j)| (i, j)).collect();
    e.sort();
    e
}
