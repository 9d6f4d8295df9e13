//! Rooted latent-tree graphs.
//!
//! A graph has latent nodes (the root plus any number of nested latent
//! parents) and observed leaf children. Every child hangs off exactly one
//! latent, every non-root latent hangs off exactly one latent, and the latent
//! declaration order is topological (parents before their dependents).
//!
//! Graphs are written in a line-oriented language:
//!
//! ```text
//! # comment
//! latent p1
//! latent p2 : p1
//! child  c1 : p2
//! child  c2 : p1
//! ```

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of a node: `[A-Za-z_][A-Za-z0-9_]*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Result<Self, GraphError> {
        let name = name.into();
        if is_token(&name) {
            Ok(Self(name))
        } else {
            Err(GraphError::InvalidName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn is_token(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl TryFrom<String> for NodeId {
    type Error = GraphError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        NodeId::new(value)
    }
}

impl TryFrom<&str> for NodeId {
    type Error = GraphError;
    fn try_from(value: &str) -> Result<Self, Self::Error> {
        NodeId::new(value)
    }
}

impl From<NodeId> for String {
    fn from(id: NodeId) -> Self {
        id.0
    }
}

impl Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid node name `{0}`")]
    InvalidName(String),
    #[error("invalid graph: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("`{0}` is not a child node")]
    NotAChild(String),
    #[error("expected two distinct children, got `{0}` twice")]
    SameNode(String),
    #[error("invalid removal order: {0}")]
    InvalidOrder(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// A broken structural invariant, together with the offending nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoLatents,
    NoChildren,
    NoRoot,
    MultipleRoots(Vec<NodeId>),
    DuplicateNode(NodeId),
    UnknownParent { node: NodeId, parent: NodeId },
    ChildAsParent { node: NodeId, parent: NodeId },
    ParentDeclaredAfter { node: NodeId, parent: NodeId },
    Cycle(Vec<NodeId>),
}

impl Violation {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::NoLatents => "no-latents",
            Violation::NoChildren => "no-children",
            Violation::NoRoot => "no-root",
            Violation::MultipleRoots(_) => "multiple-roots",
            Violation::DuplicateNode(_) => "duplicate-node",
            Violation::UnknownParent { .. } => "unknown-parent",
            Violation::ChildAsParent { .. } => "child-as-parent",
            Violation::ParentDeclaredAfter { .. } => "parent-declared-after",
            Violation::Cycle(_) => "cycle",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |nodes: &[NodeId]| {
            nodes
                .iter()
                .map(NodeId::as_str)
                .collect::<Vec<_>>()
                .join(", ")
        };
        match self {
            Violation::NoLatents | Violation::NoChildren | Violation::NoRoot => {
                f.write_str(self.kind())
            }
            Violation::MultipleRoots(n) | Violation::Cycle(n) => {
                write!(f, "{}: {}", self.kind(), list(n))
            }
            Violation::DuplicateNode(n) => write!(f, "{}: {}", self.kind(), n),
            Violation::UnknownParent { node, parent }
            | Violation::ChildAsParent { node, parent }
            | Violation::ParentDeclaredAfter { node, parent } => {
                write!(f, "{}: {} -> {}", self.kind(), node, parent)
            }
        }
    }
}

/// Rooted latent tree with leaf children.
///
/// Construction never fails; structural problems are recorded and reported
/// by [`TreeGraph::validate`]. Operations that need a well-formed tree check
/// validity first.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeGraph {
    latents: Vec<NodeId>,
    latent_parents: Vec<Option<NodeId>>,
    children: Vec<NodeId>,
    child_parents: Vec<NodeId>,
    latent_parent_idx: Vec<Option<usize>>,
    child_parent_idx: Vec<Option<usize>>,
    violations: Vec<Violation>,
}

impl TreeGraph {
    /// Builds a graph from declarations without rejecting malformed input.
    pub fn from_declarations(
        latents: Vec<(NodeId, Option<NodeId>)>,
        children: Vec<(NodeId, NodeId)>,
    ) -> Self {
        let (latents, latent_parents): (Vec<_>, Vec<_>) = latents.into_iter().unzip();
        let (children, child_parents): (Vec<_>, Vec<_>) = children.into_iter().unzip();

        let mut latent_index: HashMap<&str, usize> = HashMap::new();
        for (i, l) in latents.iter().enumerate() {
            latent_index.entry(l.as_str()).or_insert(i);
        }
        let latent_parent_idx: Vec<Option<usize>> = latent_parents
            .iter()
            .map(|p| p.as_ref().and_then(|p| latent_index.get(p.as_str()).copied()))
            .collect();
        let child_parent_idx: Vec<Option<usize>> = child_parents
            .iter()
            .map(|p| latent_index.get(p.as_str()).copied())
            .collect();

        let mut graph = Self {
            latents,
            latent_parents,
            children,
            child_parents,
            latent_parent_idx,
            child_parent_idx,
            violations: Vec::new(),
        };
        graph.violations = graph.compute_violations();
        graph
    }

    /// Builds a graph and rejects it if any invariant is violated.
    pub fn new(
        latents: Vec<(NodeId, Option<NodeId>)>,
        children: Vec<(NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        let g = Self::from_declarations(latents, children);
        if g.is_valid() {
            Ok(g)
        } else {
            Err(GraphError::Invalid(g.violations))
        }
    }

    fn compute_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.latents.is_empty() {
            out.push(Violation::NoLatents);
        }
        if self.children.is_empty() {
            out.push(Violation::NoChildren);
        }

        let mut seen = HashSet::new();
        let mut reported = HashSet::new();
        for n in self.latents.iter().chain(&self.children) {
            if !seen.insert(n.as_str()) && reported.insert(n.as_str()) {
                out.push(Violation::DuplicateNode(n.clone()));
            }
        }

        let child_names: HashSet<&str> = self.children.iter().map(NodeId::as_str).collect();
        let classify = |node: &NodeId, parent: &NodeId, resolved: Option<usize>| match resolved {
            Some(_) => None,
            None if child_names.contains(parent.as_str()) => Some(Violation::ChildAsParent {
                node: node.clone(),
                parent: parent.clone(),
            }),
            None => Some(Violation::UnknownParent {
                node: node.clone(),
                parent: parent.clone(),
            }),
        };

        let mut roots = Vec::new();
        for (i, (node, parent)) in self.latents.iter().zip(&self.latent_parents).enumerate() {
            match parent {
                None => roots.push(node.clone()),
                Some(p) => {
                    if let Some(v) = classify(node, p, self.latent_parent_idx[i]) {
                        out.push(v);
                    } else if self.latent_parent_idx[i].is_some_and(|pi| pi >= i) {
                        out.push(Violation::ParentDeclaredAfter {
                            node: node.clone(),
                            parent: p.clone(),
                        });
                    }
                }
            }
        }
        for (k, (node, parent)) in self.children.iter().zip(&self.child_parents).enumerate() {
            if let Some(v) = classify(node, parent, self.child_parent_idx[k]) {
                out.push(v);
            }
        }
        if !self.latents.is_empty() {
            match roots.len() {
                0 => out.push(Violation::NoRoot),
                1 => {}
                _ => out.push(Violation::MultipleRoots(roots)),
            }
        }

        // Cycles among latents: walk parent pointers, colouring nodes by walk.
        let mut walk_of = vec![usize::MAX; self.latents.len()];
        for start in 0..self.latents.len() {
            if walk_of[start] != usize::MAX {
                continue;
            }
            let mut path: Vec<usize> = Vec::new();
            let mut cur = Some(start);
            while let Some(i) = cur {
                if walk_of[i] == start {
                    let pos = path.iter().position(|&p| p == i).unwrap_or(0);
                    let mut cyc: Vec<NodeId> =
                        path[pos..].iter().map(|&j| self.latents[j].clone()).collect();
                    cyc.sort();
                    out.push(Violation::Cycle(cyc));
                    break;
                }
                if walk_of[i] != usize::MAX {
                    break;
                }
                walk_of[i] = start;
                path.push(i);
                cur = self.latent_parent_idx[i];
            }
        }
        out
    }

    /// Every violated invariant; empty for a well-formed graph.
    pub fn validate(&self) -> Vec<Violation> {
        self.violations.clone()
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn ensure_valid(&self) -> Result<(), GraphError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(GraphError::Invalid(self.violations.clone()))
        }
    }

    pub fn latents(&self) -> &[NodeId] {
        &self.latents
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    pub fn latent_count(&self) -> usize {
        self.latents.len()
    }

    pub fn child_count(&self) -> usize {
        self.children.len()
    }

    /// The first latent without a parent.
    pub fn root(&self) -> Option<&NodeId> {
        self.latents
            .iter()
            .zip(&self.latent_parents)
            .find(|(_, p)| p.is_none())
            .map(|(n, _)| n)
    }

    pub fn latent_index(&self, name: &str) -> Option<usize> {
        self.latents.iter().position(|n| n.as_str() == name)
    }

    pub fn child_index(&self, name: &str) -> Option<usize> {
        self.children.iter().position(|n| n.as_str() == name)
    }

    pub fn is_latent(&self, name: &str) -> bool {
        self.latent_index(name).is_some()
    }

    pub fn is_child(&self, name: &str) -> bool {
        self.child_index(name).is_some()
    }

    /// Declared parent of any node; `None` for the root or unknown names.
    pub fn parent_of(&self, name: &str) -> Option<&NodeId> {
        if let Some(i) = self.latent_index(name) {
            return self.latent_parents[i].as_ref();
        }
        self.child_index(name).map(|k| &self.child_parents[k])
    }

    pub(crate) fn latent_parent_index(&self, i: usize) -> Option<usize> {
        self.latent_parent_idx[i]
    }

    /// Parent latent index of child `k`. Only meaningful on valid graphs.
    pub(crate) fn child_parent_index(&self, k: usize) -> usize {
        self.child_parent_idx[k].expect("child parent resolved on a valid graph")
    }

    /// Latent indices from `start` up to the root, inclusive.
    fn latent_chain(&self, start: usize) -> Vec<usize> {
        let mut chain = vec![start];
        let mut cur = self.latent_parent_idx[start];
        while let Some(i) = cur {
            if chain.contains(&i) {
                break;
            }
            chain.push(i);
            cur = self.latent_parent_idx[i];
        }
        chain
    }

    /// Latent indices of the ancestors of child `k`, nearest first.
    pub(crate) fn child_ancestor_indices(&self, k: usize) -> Vec<usize> {
        match self.child_parent_idx[k] {
            Some(p) => self.latent_chain(p),
            None => Vec::new(),
        }
    }

    /// Ancestors of `node`, from its parent up to the root.
    pub fn ancestors(&self, node: &str) -> Result<Vec<NodeId>, GraphError> {
        let idx = if let Some(i) = self.latent_index(node) {
            match self.latent_parent_idx[i] {
                Some(p) => self.latent_chain(p),
                None => Vec::new(),
            }
        } else if let Some(k) = self.child_index(node) {
            self.child_ancestor_indices(k)
        } else {
            return Err(GraphError::UnknownNode(node.to_string()));
        };
        Ok(idx.into_iter().map(|i| self.latents[i].clone()).collect())
    }

    /// Ancestors shared by two children, starting with the node where the
    /// two upward paths meet and ending at the root.
    pub fn common_ancestors(&self, a: &str, b: &str) -> Result<Vec<NodeId>, GraphError> {
        let (ka, kb) = self.child_pair(a, b)?;
        Ok(self
            .common_ancestor_indices(ka, kb)
            .into_iter()
            .map(|i| self.latents[i].clone())
            .collect())
    }

    fn child_pair(&self, a: &str, b: &str) -> Result<(usize, usize), GraphError> {
        let find = |n: &str| {
            self.child_index(n).ok_or_else(|| {
                if self.is_latent(n) {
                    GraphError::NotAChild(n.to_string())
                } else {
                    GraphError::UnknownNode(n.to_string())
                }
            })
        };
        let (ka, kb) = (find(a)?, find(b)?);
        if ka == kb {
            return Err(GraphError::SameNode(a.to_string()));
        }
        Ok((ka, kb))
    }

    pub(crate) fn common_ancestor_indices(&self, ka: usize, kb: usize) -> Vec<usize> {
        let chain_b = self.child_ancestor_indices(kb);
        self.child_ancestor_indices(ka)
            .into_iter()
            .filter(|i| chain_b.contains(i))
            .collect()
    }

    /// Copy of the graph with latent `idx` deleted; its dependents move to
    /// its parent. The latent must not be the root.
    pub(crate) fn without_latent(&self, idx: usize) -> TreeGraph {
        let parent = self.latent_parents[idx]
            .clone()
            .expect("only non-root latents are removed in place");
        let removed = &self.latents[idx];
        let reparent = |p: &NodeId| {
            if p == removed {
                parent.clone()
            } else {
                p.clone()
            }
        };
        let latents = self
            .latents
            .iter()
            .zip(&self.latent_parents)
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, (n, p))| (n.clone(), p.as_ref().map(reparent)))
            .collect();
        let children = self
            .children
            .iter()
            .zip(&self.child_parents)
            .map(|(n, p)| (n.clone(), reparent(p)))
            .collect();
        TreeGraph::from_declarations(latents, children)
    }

    /// Generates the nested sequence obtained by deleting one latent at a
    /// time. The default order is the reverse of the declaration order, so
    /// the root goes last.
    pub fn contract(&self, order: Option<&[NodeId]>) -> Result<ModelSequence, GraphError> {
        self.ensure_valid()?;
        let order = match order {
            Some(o) => {
                self.check_order(o)?;
                o.to_vec()
            }
            None => self.latents.iter().rev().cloned().collect(),
        };

        let mut models = Vec::with_capacity(order.len() + 1);
        let mut current = self.clone();
        for (step, name) in order.iter().enumerate() {
            let idx = current
                .latent_index(name.as_str())
                .expect("order checked to be a permutation of latents");
            let next = if step + 1 == order.len() {
                None
            } else {
                Some(current.without_latent(idx))
            };
            models.push(SequenceModel::Graph(current));
            match next {
                Some(g) => current = g,
                None => break,
            }
        }
        models.push(SequenceModel::Identity {
            children: self.children.clone(),
        });
        Ok(ModelSequence {
            models,
            removal_order: order,
        })
    }

    pub(crate) fn check_order(&self, order: &[NodeId]) -> Result<(), GraphError> {
        if order.len() != self.latents.len() {
            return Err(GraphError::InvalidOrder(format!(
                "expected {} latents, got {}",
                self.latents.len(),
                order.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in order {
            if !self.is_latent(n.as_str()) {
                return Err(GraphError::InvalidOrder(format!("`{n}` is not a latent")));
            }
            if !seen.insert(n.as_str()) {
                return Err(GraphError::InvalidOrder(format!("`{n}` appears twice")));
            }
        }
        let root = self.root().expect("valid graph has a root");
        if order.last() != Some(root) {
            return Err(GraphError::InvalidOrder(format!(
                "the root `{root}` must be removed last"
            )));
        }
        Ok(())
    }

    /// Child pairs grouped by their set of common ancestors.
    pub fn correlation_classes(&self) -> Vec<CorrelationClass> {
        let mut by_key: BTreeMap<Vec<usize>, Vec<(usize, usize)>> = BTreeMap::new();
        for a in 0..self.children.len() {
            for b in a + 1..self.children.len() {
                let mut key = self.common_ancestor_indices(a, b);
                key.sort_unstable();
                by_key.entry(key).or_default().push((a, b));
            }
        }
        let mut classes: Vec<CorrelationClass> = by_key
            .into_iter()
            .map(|(key, pairs)| {
                let shared = {
                    let (a, b) = pairs[0];
                    self.common_ancestor_indices(a, b)
                        .into_iter()
                        .map(|i| self.latents[i].clone())
                        .collect()
                };
                debug_assert!(!key.is_empty());
                CorrelationClass {
                    shared_ancestors: shared,
                    pairs,
                }
            })
            .collect();
        classes.sort_by_key(|c| c.pairs[0]);
        classes
    }

    /// Child pairs grouped by the (unordered) pair of their parents. All
    /// pairs in a group have the same correlation for any variances.
    pub fn pair_groups(&self) -> Vec<PairGroup> {
        let mut by_key: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for a in 0..self.children.len() {
            for b in a + 1..self.children.len() {
                let (pa, pb) = (self.child_parent_idx[a], self.child_parent_idx[b]);
                let key = match (pa, pb) {
                    (Some(x), Some(y)) => (x.min(y), x.max(y)),
                    _ => continue,
                };
                by_key.entry(key).or_default().push((a, b));
            }
        }
        let mut groups: Vec<PairGroup> = by_key
            .into_values()
            .map(|pairs| {
                let (a, b) = pairs[0];
                PairGroup {
                    label: format!("{},{}", self.children[a], self.children[b]),
                    pairs,
                }
            })
            .collect();
        groups.sort_by_key(|g| g.pairs[0]);
        groups
    }

    /// Serializes back to the declaration language.
    pub fn to_dsl(&self) -> String {
        let mut s = String::new();
        for (n, p) in self.latents.iter().zip(&self.latent_parents) {
            match p {
                Some(p) => s.push_str(&format!("latent {n} : {p}\n")),
                None => s.push_str(&format!("latent {n}\n")),
            }
        }
        for (n, p) in self.children.iter().zip(&self.child_parents) {
            s.push_str(&format!("child {n} : {p}\n"));
        }
        s
    }
}

impl fmt::Display for TreeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dsl())
    }
}

impl std::str::FromStr for TreeGraph {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_graph(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationClass {
    /// Meeting point first, root last.
    pub shared_ancestors: Vec<NodeId>,
    /// Child index pairs `(a, b)` with `a < b`.
    pub pairs: Vec<(usize, usize)>,
}

impl CorrelationClass {
    pub fn label(&self) -> String {
        self.shared_ancestors
            .iter()
            .map(NodeId::as_str)
            .collect::<Vec<_>>()
            .join("+")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGroup {
    /// `"a,b"` for the first pair of the group in child order.
    pub label: String,
    pub pairs: Vec<(usize, usize)>,
}

/// One member of a contraction sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceModel {
    Graph(TreeGraph),
    /// All latents removed: the children are independent.
    Identity { children: Vec<NodeId> },
}

impl SequenceModel {
    pub fn graph(&self) -> Option<&TreeGraph> {
        match self {
            SequenceModel::Graph(g) => Some(g),
            SequenceModel::Identity { .. } => None,
        }
    }

    pub fn latent_count(&self) -> usize {
        self.graph().map_or(0, TreeGraph::latent_count)
    }
}

/// Nested models from the input graph down to independence.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSequence {
    models: Vec<SequenceModel>,
    removal_order: Vec<NodeId>,
}

impl ModelSequence {
    pub fn models(&self) -> &[SequenceModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn removal_order(&self) -> &[NodeId] {
        &self.removal_order
    }

    /// `(flexible graph, removed latent)` for each nested pair, in removal
    /// order. The base of step `k` is model `k + 1`.
    pub fn steps(&self) -> impl Iterator<Item = (&TreeGraph, &NodeId)> {
        self.models
            .iter()
            .filter_map(SequenceModel::graph)
            .zip(&self.removal_order)
    }
}

/// Parses the graph declaration language. Node order follows declaration
/// order; the result satisfies every structural invariant.
pub fn parse_graph(text: &str) -> Result<TreeGraph, GraphError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut latents = Vec::new();
    let mut children = Vec::new();
    for (lineno, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let tokens = tokenize(line, lineno + 1)?;
        if tokens.is_empty() {
            continue;
        }
        let err = |col: usize, msg: &str| GraphError::Syntax {
            line: lineno + 1,
            column: col,
            message: msg.to_string(),
        };
        let (kw, kw_col) = &tokens[0];
        let name = match tokens.get(1) {
            Some((Tok::Ident(n), _)) => NodeId(n.clone()),
            Some((Tok::Colon, c)) => return Err(err(*c, "expected a node name")),
            None => return Err(err(line.len() + 1, "expected a node name")),
        };
        let parent = match tokens.get(2) {
            None => None,
            Some((Tok::Colon, c)) => match tokens.get(3) {
                Some((Tok::Ident(p), _)) => Some(NodeId(p.clone())),
                Some((Tok::Colon, c2)) => return Err(err(*c2, "expected a parent name")),
                None => return Err(err(*c + 1, "expected a parent name after ':'")),
            },
            Some((Tok::Ident(_), c)) => return Err(err(*c, "expected ':' before the parent")),
        };
        if let Some((_, c)) = tokens.get(4) {
            return Err(err(*c, "unexpected trailing input"));
        }
        match kw {
            Tok::Ident(k) if k == "latent" => latents.push((name, parent)),
            Tok::Ident(k) if k == "child" => match parent {
                Some(p) => children.push((name, p)),
                None => return Err(err(line.len() + 1, "a child needs ': PARENT'")),
            },
            _ => return Err(err(*kw_col, "expected `latent` or `child`")),
        }
    }
    TreeGraph::new(latents, children)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Colon,
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<(Tok, usize)>, GraphError> {
    let mut out = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == ':' {
            out.push((Tok::Colon, i + 1));
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start + 1));
        } else {
            return Err(GraphError::Syntax {
                line: lineno,
                column: i + 1,
                message: format!("unexpected character {c:?}"),
            });
        }
    }
    Ok(out)
}
