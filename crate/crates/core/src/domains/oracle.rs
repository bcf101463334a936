//! Ground-truth abstract graphs for the shipped domains. Each node is an
//! analytic region of problem space; option dynamics are deterministic at
//! node granularity, which is what makes them usable as test oracles and as
//! the source of optimal plans for the transfer harness.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct AbstractNode {
    pub name: String,
    /// A representative problem-space state inside the region.
    pub anchor: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct AbstractGraph {
    pub nodes: Vec<AbstractNode>,
    /// (node, option) -> successor node. Absent key means the option fails
    /// (or is not applicable) from that region.
    pub edges: BTreeMap<(usize, String), usize>,
}

impl AbstractGraph {
    pub fn successor(&self, node: usize, option_id: &str) -> Option<usize> {
        self.edges.get(&(node, option_id.to_string())).copied()
    }

    /// All (o1, o2) chains of length two starting at `node`, with the node
    /// reached by each.
    pub fn two_step_chains(&self, node: usize) -> Vec<(String, String, usize)> {
        let mut chains = Vec::new();
        for ((n0, o1), n1) in &self.edges {
            if *n0 != node {
                continue;
            }
            for ((m0, o2), n2) in &self.edges {
                if m0 == n1 {
                    chains.push((o1.clone(), o2.clone(), *n2));
                }
            }
        }
        chains
    }

    pub fn options_at(&self, node: usize) -> Vec<String> {
        self.edges
            .keys()
            .filter(|(n, _)| *n == node)
            .map(|(_, o)| o.clone())
            .collect()
    }
}

/// Analytic ground truth exposed by each domain for tests and the transfer
/// harness: region membership, region sampling, and the option graph.
pub trait DomainOracle {
    fn abstract_graph(&self) -> AbstractGraph;

    /// Region containing a problem-space state, if any.
    fn node_of_state(&self, state: &[f64]) -> Option<usize>;

    /// A problem-space state drawn from within the region.
    fn sample_node_state(&self, node: usize, rng: &mut ChaCha8Rng) -> Vec<f64>;
}
