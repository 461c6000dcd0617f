use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use super::GraphError;

/// Directed acyclic graph over named nodes, each flagged observed or latent.
/// Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dag {
    names: Vec<String>,
    latent: Vec<bool>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Default)]
struct Builder {
    names: Vec<String>,
    latent: Vec<bool>,
    edges: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

impl Builder {
    fn node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.names.push(name.to_string());
        self.latent.push(false);
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }

    fn edge(&mut self, from: &str, to: &str, line: usize) -> Result<(), GraphError> {
        if from == to {
            return Err(GraphError::SelfLoop {
                node: from.to_string(),
                line,
            });
        }
        let (a, b) = (self.node(from), self.node(to));
        if self.edges.contains(&(a, b)) {
            return Err(GraphError::DuplicateEdge {
                from: from.to_string(),
                to: to.to_string(),
                line,
            });
        }
        self.edges.push((a, b));
        Ok(())
    }

    fn finish(self) -> Result<Dag, GraphError> {
        let n = self.names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            children[a].push(b);
            parents[b].push(a);
        }
        let dag = Dag {
            names: self.names,
            latent: self.latent,
            parents,
            children,
            index: self.index,
        };
        dag.check_acyclic()?;
        Ok(dag)
    }
}

impl Dag {
    /// Builds a graph from `(parent, child)` name pairs plus extra isolated
    /// or latent-only nodes.
    pub fn from_edges<S: AsRef<str>>(edges: &[(S, S)], latent: &[S]) -> Result<Self, GraphError> {
        let mut b = Builder::default();
        for (i, (from, to)) in edges.iter().enumerate() {
            for name in [from.as_ref(), to.as_ref()] {
                if !valid_name(name) {
                    return Err(GraphError::Syntax {
                        line: i + 1,
                        message: format!("invalid node name `{name}`"),
                    });
                }
            }
            b.edge(from.as_ref(), to.as_ref(), i + 1)?;
        }
        for name in latent {
            let i = b.node(name.as_ref());
            b.latent[i] = true;
        }
        b.finish()
    }

    /// Parses the line-oriented edge-list format: `A -> B` declares an edge,
    /// `latent U` flags a node, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut b = Builder::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| GraphError::Syntax {
                line: line_no,
                message,
            };
            if let Some(rest) = line.strip_prefix("latent").filter(|r| r.starts_with(char::is_whitespace)) {
                let names: Vec<&str> = rest.split_whitespace().collect();
                if names.is_empty() {
                    return Err(syntax("`latent` needs at least one node name".into()));
                }
                for name in names {
                    if !valid_name(name) {
                        return Err(syntax(format!("invalid node name `{name}`")));
                    }
                    let idx = b.node(name);
                    b.latent[idx] = true;
                }
                continue;
            }
            let Some((from, to)) = line.split_once("->") else {
                return Err(syntax(format!("expected `A -> B` or `latent A`, got `{line}`")));
            };
            let (from, to) = (from.trim(), to.trim());
            for name in [from, to] {
                if !valid_name(name) {
                    return Err(syntax(format!("invalid node name `{name}`")));
                }
            }
            b.edge(from, to, line_no)?;
        }
        b.finish()
    }

    fn check_acyclic(&self) -> Result<(), GraphError> {
        let n = self.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if seen == n {
            Ok(())
        } else {
            let nodes = (0..n)
                .filter(|&v| indeg[v] > 0)
                .map(|v| self.names[v].clone())
                .collect();
            Err(GraphError::Cycle { nodes })
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn is_latent(&self, v: usize) -> bool {
        self.latent[v]
    }

    pub fn node(&self, name: &str) -> Result<usize, GraphError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn parents_of(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children_of(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.children[from].contains(&to)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(a, cs)| cs.iter().map(move |&b| (a, b)))
    }

    /// Strict descendants of `v` (transitive closure of children, excluding `v`).
    pub fn descendants(&self, v: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<usize> = self.children[v].clone();
        while let Some(u) = stack.pop() {
            if out.insert(u) {
                stack.extend_from_slice(&self.children[u]);
            }
        }
        out
    }

    /// Name-based convenience over [`Dag::descendants`].
    pub fn descendants_of(&self, name: &str) -> Result<BTreeSet<String>, GraphError> {
        let v = self.node(name)?;
        Ok(self
            .descendants(v)
            .into_iter()
            .map(|u| self.names[u].clone())
            .collect())
    }

    /// `nodes` together with all of their ancestors.
    pub fn ancestral_closure(&self, nodes: &BTreeSet<usize>) -> Vec<bool> {
        let mut mark = vec![false; self.len()];
        let mut stack: Vec<usize> = nodes.iter().copied().collect();
        while let Some(u) = stack.pop() {
            if !mark[u] {
                mark[u] = true;
                stack.extend_from_slice(&self.parents[u]);
            }
        }
        mark
    }

    /// Copy of the graph with the single edge `from -> to` deleted.
    pub fn without_edge(&self, from: &str, to: &str) -> Result<Dag, GraphError> {
        let (a, b) = (self.node(from)?, self.node(to)?);
        if !self.has_edge(a, b) {
            return Err(GraphError::MissingEdge {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        let mut g = self.clone();
        g.children[a].retain(|&c| c != b);
        g.parents[b].retain(|&p| p != a);
        Ok(g)
    }

    /// Replaces the node set `group` by one node `name` carrying the union of
    /// the group's outside edges.
    pub fn collapse(&self, group: &[&str], name: &str) -> Result<Dag, GraphError> {
        let members: BTreeSet<usize> = group.iter().map(|g| self.node(g)).collect::<Result<_, _>>()?;
        if members.is_empty() {
            return Err(GraphError::Precondition("cannot collapse an empty node set".into()));
        }
        if self.index.contains_key(name) && !group.contains(&name) {
            return Err(GraphError::Precondition(format!("node `{name}` already exists")));
        }
        let rename = |v: usize| -> String {
            if members.contains(&v) {
                name.to_string()
            } else {
                self.names[v].clone()
            }
        };
        let mut b = Builder::default();
        for v in 0..self.len() {
            let i = b.node(&rename(v));
            if !members.contains(&v) && self.latent[v] {
                b.latent[i] = true;
            }
        }
        for (x, y) in self.edges() {
            if members.contains(&x) && members.contains(&y) {
                continue;
            }
            let e = (b.index[&rename(x)], b.index[&rename(y)]);
            if !b.edges.contains(&e) {
                b.edges.push(e);
            }
        }
        b.finish()
    }
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (v, name) in self.names.iter().enumerate() {
            if self.latent[v] {
                writeln!(f, "latent {name}")?;
            }
        }
        for (a, b) in self.edges() {
            writeln!(f, "{} -> {}", self.names[a], self.names[b])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_chain() {
        let g = Dag::parse("A -> B\nB -> C").unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn comments_blank_lines_and_latent() {
        let g = Dag::parse("# header\n\nlatent U\nU -> W  # confounder\nU -> Y\n").unwrap();
        assert!(g.is_latent(g.node("U").unwrap()));
        assert!(!g.is_latent(g.node("W").unwrap()));
    }

    #[test]
    fn detects_cycle() {
        let err = Dag::parse("A -> B\nB -> A").unwrap_err();
        assert!(matches!(err, GraphError::Cycle { .. }));
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = Dag::parse("A -> B\nB => C\n").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 2, .. }));
        let err = Dag::parse("A -> 1B").unwrap_err();
        assert!(matches!(err, GraphError::Syntax { line: 1, .. }));
    }

    #[test]
    fn duplicate_and_self_edges_rejected() {
        assert!(matches!(
            Dag::parse("A -> B\nA -> B").unwrap_err(),
            GraphError::DuplicateEdge { line: 2, .. }
        ));
        assert!(matches!(Dag::parse("A -> A").unwrap_err(), GraphError::SelfLoop { .. }));
    }

    #[test]
    fn descendants_of_chain_and_sink() {
        let g = Dag::parse("A -> B\nB -> C").unwrap();
        let d = g.descendants_of("A").unwrap();
        assert_eq!(d, ["B", "C"].iter().map(|s| s.to_string()).collect());
        assert!(g.descendants_of("C").unwrap().is_empty());
        assert!(g.descendants_of("Q").is_err());
    }

    #[test]
    fn edge_removal() {
        let g = Dag::parse("A -> B").unwrap();
        let h = g.without_edge("A", "B").unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.edge_count(), 0);
        assert!(matches!(h.without_edge("A", "B"), Err(GraphError::MissingEdge { .. })));
    }

    #[test]
    fn display_round_trips() {
        let g = Dag::parse("latent U\nU -> W\nU -> Y\nW -> Y\nS -> W").unwrap();
        assert_eq!(Dag::parse(&g.to_string()).unwrap(), g);
    }

    #[test]
    fn collapse_merges_outside_edges() {
        let g = Dag::parse("A -> W\nB -> W\nX -> A\nW -> Y").unwrap();
        let h = g.collapse(&["A", "B"], "Q").unwrap();
        assert_eq!(h.len(), 4);
        let q = h.node("Q").unwrap();
        assert!(h.has_edge(q, h.node("W").unwrap()));
        assert!(h.has_edge(h.node("X").unwrap(), q));
    }
}
