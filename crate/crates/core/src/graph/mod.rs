//! Causal DAGs, d-separation, and conditional-instrument validity checks.

mod civ;
mod dag;
mod dsep;

pub use civ::{is_valid_civ, is_valid_civ_set, CivVerdict, Witness};
pub use dag::Dag;
pub use dsep::{connecting_trail, d_connecting_path, d_separated, d_separated_idx};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("graph contains a directed cycle through {nodes:?}")]
    Cycle { nodes: Vec<String> },
    #[error("line {line}: duplicate edge {from} -> {to}")]
    DuplicateEdge { from: String, to: String, line: usize },
    #[error("line {line}: self-loop on {node}")]
    SelfLoop { node: String, line: usize },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("edge {from} -> {to} is not in the graph")]
    MissingEdge { from: String, to: String },
    #[error("{0}")]
    Precondition(String),
}

/// Convenience wrapper: the manipulated graph with `treatment -> outcome`
/// deleted.
pub fn remove_treatment_edge(g: &Dag, treatment: &str, outcome: &str) -> Result<Dag, GraphError> {
    g.without_edge(treatment, outcome)
}
