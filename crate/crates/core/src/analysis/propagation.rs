//! Confidence propagation over derivation chains.
//!
//! A derived claim is never more certain than its weakest basis, scaled by
//! the strength of the inference: `conf = r * min(basis)`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("node {0:?} already exists")]
    Duplicate(String),
    #[error("derived node {0:?} has no basis")]
    EmptyBasis(String),
    #[error("node {node:?} cites unknown basis {basis:?}")]
    UnknownBasis { node: String, basis: String },
    #[error("derivation cycle through {0:?}")]
    Cycle(Vec<String>),
    #[error("strength {0} outside [0, 1]")]
    Strength(f64),
}

pub fn propagate(strength: f64, basis: &[f64]) -> Option<f64> {
    basis.iter().copied().reduce(f64::min).map(|m| strength * m)
}

#[derive(Debug, Clone, PartialEq)]
struct Derivation {
    strength: f64,
    basis: Vec<String>,
}

/// Explicit facts are leaves with fixed confidence; derived nodes take
/// `strength * min(basis)` and may build on other derived nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfidenceGraph {
    leaves: BTreeMap<String, f64>,
    derived: BTreeMap<String, Derivation>,
}

impl ConfidenceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn exists(&self, id: &str) -> bool {
        self.leaves.contains_key(id) || self.derived.contains_key(id)
    }

    pub fn add_leaf(&mut self, id: &str, confidence: f64) -> Result<(), GraphError> {
        if self.exists(id) {
            return Err(GraphError::Duplicate(id.to_string()));
        }
        self.leaves
            .insert(id.to_string(), confidence.clamp(0.0, 1.0));
        Ok(())
    }

    pub fn set_leaf(&mut self, id: &str, confidence: f64) {
        if let Some(c) = self.leaves.get_mut(id) {
            *c = confidence.clamp(0.0, 1.0);
        }
    }

    /// Basis ids may name nodes added later; resolution is checked by
    /// [`ConfidenceGraph::compute`].
    pub fn add_derived(
        &mut self,
        id: &str,
        strength: f64,
        basis: &[String],
    ) -> Result<(), GraphError> {
        if self.exists(id) {
            return Err(GraphError::Duplicate(id.to_string()));
        }
        if basis.is_empty() {
            return Err(GraphError::EmptyBasis(id.to_string()));
        }
        if !(0.0..=1.0).contains(&strength) {
            return Err(GraphError::Strength(strength));
        }
        self.derived.insert(
            id.to_string(),
            Derivation {
                strength,
                basis: basis.to_vec(),
            },
        );
        Ok(())
    }

    pub fn basis(&self, id: &str) -> Option<&[String]> {
        self.derived.get(id).map(|d| d.basis.as_slice())
    }

    pub fn strength(&self, id: &str) -> Option<f64> {
        self.derived.get(id).map(|d| d.strength)
    }

    /// Derived nodes in dependency order (Kahn's algorithm, ties by id).
    pub fn topological_order(&self) -> Result<Vec<String>, GraphError> {
        let mut indegree: BTreeMap<&str, usize> = BTreeMap::new();
        let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (id, d) in &self.derived {
            let mut pending = 0;
            for b in &d.basis {
                if self.derived.contains_key(b) {
                    pending += 1;
                    dependents.entry(b.as_str()).or_default().push(id.as_str());
                } else if !self.leaves.contains_key(b) {
                    return Err(GraphError::UnknownBasis {
                        node: id.clone(),
                        basis: b.clone(),
                    });
                }
            }
            indegree.insert(id.as_str(), pending);
        }
        let mut ready: BTreeSet<&str> = indegree
            .iter()
            .filter(|(_, n)| **n == 0)
            .map(|(k, _)| *k)
            .collect();
        let mut order = Vec::with_capacity(self.derived.len());
        while let Some(id) = ready.pop_first() {
            order.push(id.to_string());
            for dep in dependents.get(id).into_iter().flatten() {
                let n = indegree.get_mut(dep).expect("dependent registered");
                *n -= 1;
                if *n == 0 {
                    ready.insert(dep);
                }
            }
        }
        if order.len() < self.derived.len() {
            let stuck = indegree
                .into_iter()
                .filter(|(id, _)| !order.iter().any(|o| o == id))
                .map(|(id, _)| id.to_string())
                .collect();
            return Err(GraphError::Cycle(stuck));
        }
        Ok(order)
    }

    /// Confidence of every node.
    pub fn compute(&self) -> Result<BTreeMap<String, f64>, GraphError> {
        let mut conf = self.leaves.clone();
        for id in self.topological_order()? {
            let d = &self.derived[&id];
            let basis: Vec<f64> = d.basis.iter().map(|b| conf[b]).collect();
            let c = propagate(d.strength, &basis).expect("basis is non-empty");
            conf.insert(id, c);
        }
        Ok(conf)
    }

    /// Remove derived nodes that sit on a cycle or depend (transitively) on
    /// an unknown basis. Returns the removed ids.
    pub fn prune_invalid(&mut self) -> Vec<String> {
        let mut removed = Vec::new();
        loop {
            match self.topological_order() {
                Ok(_) => return removed,
                Err(GraphError::UnknownBasis { node, .. }) => {
                    self.derived.remove(&node);
                    removed.push(node);
                }
                Err(GraphError::Cycle(nodes)) => {
                    for n in nodes {
                        self.derived.remove(&n);
                        removed.push(n);
                    }
                }
                Err(_) => return removed,
            }
        }
    }
}
