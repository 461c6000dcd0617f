use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::dsep::connecting_trail;
use super::{Dag, GraphError};

/// Evidence attached to a failed condition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Condition (i): the candidate is d-separated from the treatment, so
    /// there is no connecting path to show.
    NoConnectingPath { from: String, to: String },
    /// Condition (ii): an open path from the candidate to the outcome in the
    /// graph without the treatment edge.
    OpenPath { nodes: Vec<String> },
    /// Condition (iii): a conditioning node that descends from the outcome.
    OutcomeDescendant { node: String },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::NoConnectingPath { from, to } => write!(f, "no d-connecting path between {from} and {to}"),
            Witness::OpenPath { nodes } => write!(f, "open path {}", nodes.join(" - ")),
            Witness::OutcomeDescendant { node } => write!(f, "{node} is a descendant of the outcome"),
        }
    }
}

/// Outcome of checking the three conditional-instrument conditions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CivVerdict {
    /// (i) candidate and treatment are d-connected given the conditioning set.
    pub relevant: bool,
    /// (ii) candidate and outcome are d-separated given the conditioning set
    /// once the treatment -> outcome edge is removed.
    pub exogenous_given_z: bool,
    /// (iii) no conditioning node descends from the outcome.
    pub z_clean: bool,
    pub valid: bool,
    pub relevance_witness: Option<Witness>,
    pub exogeneity_witness: Option<Witness>,
    pub cleanliness_witness: Option<Witness>,
}

impl fmt::Display for CivVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "valid: {}", self.valid)?;
        let line = |f: &mut fmt::Formatter<'_>, label: &str, ok: bool, w: &Option<Witness>| -> fmt::Result {
            match w {
                Some(w) => writeln!(f, "  {label}: {ok} ({w})"),
                None => writeln!(f, "  {label}: {ok}"),
            }
        };
        line(f, "(i) relevant", self.relevant, &self.relevance_witness)?;
        line(f, "(ii) exogenous given Z", self.exogenous_given_z, &self.exogeneity_witness)?;
        line(f, "(iii) Z free of outcome descendants", self.z_clean, &self.cleanliness_witness)
    }
}

/// Checks whether `candidate` is a conditional instrument for
/// `treatment -> outcome` given `conditioning`.
pub fn is_valid_civ(
    g: &Dag,
    candidate: &str,
    conditioning: &[&str],
    treatment: &str,
    outcome: &str,
) -> Result<CivVerdict, GraphError> {
    let q = g.node(candidate)?;
    let w = g.node(treatment)?;
    let y = g.node(outcome)?;
    let z: BTreeSet<usize> = conditioning.iter().map(|n| g.node(n)).collect::<Result<_, _>>()?;
    if z.contains(&q) {
        return Err(GraphError::Precondition(format!(
            "candidate `{candidate}` is in the conditioning set"
        )));
    }
    for (role, v, name) in [("treatment", w, treatment), ("outcome", y, outcome)] {
        if z.contains(&v) || v == q {
            return Err(GraphError::Precondition(format!(
                "{role} `{name}` must differ from the candidate and the conditioning set"
            )));
        }
    }
    if w == y {
        return Err(GraphError::Precondition("treatment and outcome coincide".into()));
    }
    let manipulated = g.without_edge(treatment, outcome)?;

    let relevant = connecting_trail(g, q, w, &z).is_some();
    let relevance_witness = (!relevant).then(|| Witness::NoConnectingPath {
        from: candidate.to_string(),
        to: treatment.to_string(),
    });

    let open = connecting_trail(&manipulated, q, y, &z);
    let exogenous_given_z = open.is_none();
    let exogeneity_witness = open.map(|t| Witness::OpenPath {
        nodes: t.into_iter().map(|v| g.name(v).to_string()).collect(),
    });

    let outcome_desc = g.descendants(y);
    let offending = z.iter().find(|v| outcome_desc.contains(v));
    let z_clean = offending.is_none();
    let cleanliness_witness = offending.map(|&v| Witness::OutcomeDescendant {
        node: g.name(v).to_string(),
    });

    Ok(CivVerdict {
        relevant,
        exogenous_given_z,
        z_clean,
        valid: relevant && exogenous_given_z && z_clean,
        relevance_witness,
        exogeneity_witness,
        cleanliness_witness,
    })
}

/// Set-valued candidate: the members are merged into one virtual node
/// before running [`is_valid_civ`].
pub fn is_valid_civ_set(
    g: &Dag,
    candidates: &[&str],
    conditioning: &[&str],
    treatment: &str,
    outcome: &str,
) -> Result<CivVerdict, GraphError> {
    const VIRTUAL: &str = "__civ_set";
    let merged = g.collapse(candidates, VIRTUAL)?;
    is_valid_civ(&merged, VIRTUAL, conditioning, treatment, outcome)
}
