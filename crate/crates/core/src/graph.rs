//! Named directed acyclic graphs with reachability, d-separation and backdoor
//! queries.
//!
//! Graphs are immutable once built. Node names are exact, case-sensitive
//! strings.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("node sets overlap on `{0}`")]
    OverlappingSets(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A set of node names, ordered first by size and then lexicographically by
/// the sorted member list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(BTreeSet<String>);

impl NodeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn insert(&mut self, name: impl Into<String>) -> bool {
        self.0.insert(name.into())
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn to_vec(&self) -> Vec<String> {
        self.0.iter().cloned().collect()
    }
}

impl Ord for NodeSet {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.0.iter().cmp(other.0.iter()))
    }
}

impl PartialOrd for NodeSet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Into<String>> FromIterator<S> for NodeSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        NodeSet(iter.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "}}")
    }
}

/// Serialized form of a graph: node list plus `[parent, child]` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl CausalGraph {
    /// Build and validate a DAG. Nodes keep the given order; nodes that only
    /// appear in `edges` are rejected.
    pub fn new<N, E, A, B>(nodes: N, edges: E) -> Result<Self, GraphError>
    where
        N: IntoIterator,
        N::Item: Into<String>,
        E: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let names: Vec<String> = nodes.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(n.clone()));
            }
        }
        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        let mut edge_list = Vec::new();
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *index
                .get(a)
                .ok_or_else(|| GraphError::UnknownNode(a.to_string()))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| GraphError::UnknownNode(b.to_string()))?;
            if ia == ib {
                return Err(GraphError::SelfLoop(a.to_string()));
            }
            if !seen.insert((ia, ib)) {
                return Err(GraphError::DuplicateEdge(a.to_string(), b.to_string()));
            }
            edge_list.push((ia, ib));
            parents[ib].push(ia);
            children[ia].push(ib);
        }
        let g = CausalGraph {
            names,
            index,
            edges: edge_list,
            parents,
            children,
        };
        if let Some(cycle) = g.find_cycle() {
            return Err(GraphError::CycleDetected(
                cycle.into_iter().map(|i| g.names[i].clone()).collect(),
            ));
        }
        Ok(g)
    }

    pub fn nodes(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.edges
            .iter()
            .map(|&(a, b)| (self.names[a].as_str(), self.names[b].as_str()))
    }

    pub fn has_edge(&self, parent: &str, child: &str) -> bool {
        match (self.index.get(parent), self.index.get(child)) {
            (Some(&a), Some(&b)) => self.children[a].contains(&b),
            _ => false,
        }
    }

    pub fn parents(&self, v: &str) -> Result<NodeSet, GraphError> {
        let i = self.idx(v)?;
        Ok(self.parents[i].iter().map(|&p| self.names[p].clone()).collect())
    }

    pub fn children(&self, v: &str) -> Result<NodeSet, GraphError> {
        let i = self.idx(v)?;
        Ok(self.children[i].iter().map(|&c| self.names[c].clone()).collect())
    }

    fn idx(&self, v: &str) -> Result<usize, GraphError> {
        self.index
            .get(v)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(v.to_string()))
    }

    fn idx_set(&self, set: &NodeSet) -> Result<Vec<usize>, GraphError> {
        set.iter().map(|v| self.idx(v)).collect()
    }

    fn find_cycle(&self) -> Option<Vec<usize>> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.len()];
        let mut stack: Vec<usize> = Vec::new();
        for start in 0..self.len() {
            if state[start] != 0 {
                continue;
            }
            let mut frames: Vec<(usize, usize)> = vec![(start, 0)];
            state[start] = 1;
            stack.push(start);
            while let Some(&mut (v, ref mut next)) = frames.last_mut() {
                if let Some(&c) = self.children[v].get(*next) {
                    *next += 1;
                    match state[c] {
                        0 => {
                            state[c] = 1;
                            stack.push(c);
                            frames.push((c, 0));
                        }
                        1 => {
                            let pos = stack.iter().position(|&s| s == c).unwrap();
                            let mut cycle = stack[pos..].to_vec();
                            cycle.push(c);
                            return Some(cycle);
                        }
                        _ => {}
                    }
                } else {
                    state[v] = 2;
                    stack.pop();
                    frames.pop();
                }
            }
        }
        None
    }

    /// Topological order of node names; ties broken by declaration order.
    pub fn topological_order(&self) -> Vec<String> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..self.len()).filter(|&i| indeg[i] == 0).collect();
        let mut out = Vec::with_capacity(self.len());
        while let Some(v) = ready.pop_first() {
            out.push(self.names[v].clone());
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        out
    }

    fn closure(&self, starts: &[usize], up: bool) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue: VecDeque<usize> = starts.iter().copied().collect();
        while let Some(v) = queue.pop_front() {
            let next = if up { &self.parents[v] } else { &self.children[v] };
            for &w in next {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    fn collect(&self, mask: &[bool]) -> NodeSet {
        mask.iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| self.names[i].clone())
            .collect()
    }

    /// Strict ancestors of `v`.
    pub fn ancestors(&self, v: &str) -> Result<NodeSet, GraphError> {
        let i = self.idx(v)?;
        Ok(self.collect(&self.closure(&[i], true)))
    }

    /// Strict descendants of `v`.
    pub fn descendants(&self, v: &str) -> Result<NodeSet, GraphError> {
        let i = self.idx(v)?;
        Ok(self.collect(&self.closure(&[i], false)))
    }

    /// Whether `a` and `b` are d-separated given `z`.
    ///
    /// Uses the reachable-set ("Bayes ball") traversal: a node is reachable
    /// from `a` along an active trail iff it is not d-separated from `a`.
    pub fn d_separated(&self, a: &NodeSet, b: &NodeSet, z: &NodeSet) -> Result<bool, GraphError> {
        let ai = self.idx_set(a)?;
        let bi = self.idx_set(b)?;
        let zi = self.idx_set(z)?;
        for (x, y) in [(a, b), (a, z), (b, z)] {
            if let Some(common) = x.iter().find(|n| y.contains(n)) {
                return Err(GraphError::OverlappingSets(common.to_string()));
            }
        }
        let reach = self.reachable(&ai, &zi);
        Ok(!bi.iter().any(|&v| reach[v]))
    }

    fn reachable(&self, sources: &[usize], z: &[usize]) -> Vec<bool> {
        let n = self.len();
        let mut in_z = vec![false; n];
        for &v in z {
            in_z[v] = true;
        }
        // Z together with all of its ancestors: colliders in this set are open.
        let mut anc_z = self.closure(z, true);
        for &v in z {
            anc_z[v] = true;
        }

        const UP: usize = 0; // arrived from a child
        const DOWN: usize = 1; // arrived from a parent
        let mut visited = vec![[false; 2]; n];
        let mut reach = vec![false; n];
        let mut queue: VecDeque<(usize, usize)> = sources.iter().map(|&s| (s, UP)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if !in_z[v] {
                reach[v] = true;
            }
            if dir == UP && !in_z[v] {
                for &p in &self.parents[v] {
                    queue.push_back((p, UP));
                }
                for &c in &self.children[v] {
                    queue.push_back((c, DOWN));
                }
            } else if dir == DOWN {
                if !in_z[v] {
                    for &c in &self.children[v] {
                        queue.push_back((c, DOWN));
                    }
                }
                if anc_z[v] {
                    for &p in &self.parents[v] {
                        queue.push_back((p, UP));
                    }
                }
            }
        }
        reach
    }

    /// Backdoor criterion for the ordered pair `(x, y)` relative to `z`.
    pub fn satisfies_backdoor(&self, x: &str, y: &str, z: &NodeSet) -> Result<bool, GraphError> {
        let xi = self.idx(x)?;
        let yi = self.idx(y)?;
        let zi = self.idx_set(z)?;
        if xi == yi {
            return Err(GraphError::InvalidQuery(format!(
                "treatment and outcome are both `{x}`"
            )));
        }
        if z.contains(x) || z.contains(y) {
            return Err(GraphError::OverlappingSets(
                if z.contains(x) { x } else { y }.to_string(),
            ));
        }
        let desc = self.closure(&[xi], false);
        if zi.iter().any(|&v| desc[v]) {
            return Ok(false);
        }
        Ok(!self.without_outgoing(xi).reachable(&[xi], &zi)[yi])
    }

    /// Copy of the graph with every edge leaving node `v` removed.
    fn without_outgoing(&self, v: usize) -> CausalGraph {
        let mut g = self.clone();
        g.edges.retain(|&(a, _)| a != v);
        for &c in &self.children[v] {
            g.parents[c].retain(|&p| p != v);
        }
        g.children[v].clear();
        g
    }

    /// All minimal backdoor-admissible sets of size at most `max_size`,
    /// ordered by size and then lexicographically.
    pub fn find_backdoor_sets(&self, x: &str, y: &str, max_size: usize) -> Result<Vec<NodeSet>, GraphError> {
        self.idx(x)?;
        self.idx(y)?;
        if x == y {
            return Err(GraphError::InvalidQuery(format!(
                "treatment and outcome are both `{x}`"
            )));
        }
        let desc = self.descendants(x)?;
        let mut candidates: Vec<&str> = self
            .names
            .iter()
            .map(String::as_str)
            .filter(|&n| n != x && n != y && !desc.contains(n))
            .collect();
        candidates.sort_unstable();

        let mut found: Vec<NodeSet> = Vec::new();
        for size in 0..=max_size.min(candidates.len()) {
            for combo in combinations(candidates.len(), size) {
                let set: NodeSet = combo.iter().map(|&i| candidates[i]).collect();
                if found.iter().any(|f| f.is_subset(&set)) {
                    continue;
                }
                if self.satisfies_backdoor(x, y, &set)? {
                    found.push(set);
                }
            }
        }
        Ok(found)
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            nodes: self.names.clone(),
            edges: self
                .edges()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }

    pub fn from_document(doc: &GraphDocument) -> Result<Self, GraphError> {
        CausalGraph::new(doc.nodes.iter().cloned(), doc.edges.iter().cloned())
    }

    /// Line-oriented text form: a `nodes:` header listing every node in
    /// order, then one `parent -> child` line per edge.
    pub fn to_text(&self) -> String {
        let mut out = String::from("nodes:");
        for n in &self.names {
            out.push(' ');
            out.push_str(n);
        }
        out.push('\n');
        for (a, b) in self.edges() {
            out.push_str(&format!("{a} -> {b}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let parsed = EdgeListText::parse(text)?;
        if let Some((line, _, _)) = parsed.undirected.first() {
            return Err(GraphError::Parse {
                line: *line,
                message: "undirected edge in a DAG file".into(),
            });
        }
        CausalGraph::new(
            parsed.nodes,
            parsed.directed.into_iter().map(|(_, a, b)| (a, b)),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDocument = serde_json::from_str(text).map_err(|e| GraphError::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::from_document(&doc)
    }

    /// Parse either the text or the JSON form, chosen by the first
    /// non-blank character.
    pub fn parse_any(text: &str) -> Result<Self, GraphError> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_text(text)
        }
    }
}

/// Raw contents of an edge-list file: nodes in first-mention order plus
/// directed (`->`) and undirected (`--`) edges tagged with their line number.
#[derive(Debug, Clone, Default)]
pub struct EdgeListText {
    pub nodes: Vec<String>,
    pub directed: Vec<(usize, String, String)>,
    pub undirected: Vec<(usize, String, String)>,
}

impl EdgeListText {
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut out = EdgeListText::default();
        let mut known = BTreeSet::new();
        let mut note = |out: &mut EdgeListText, name: &str| {
            if known.insert(name.to_string()) {
                out.nodes.push(name.to_string());
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("nodes:") {
                for name in rest.split(|c: char| c.is_whitespace() || c == ',') {
                    if !name.is_empty() {
                        check_name(name, line_no)?;
                        note(&mut out, name);
                    }
                }
                continue;
            }
            let (sep, directed) = if line.contains("->") {
                ("->", true)
            } else if line.contains("--") {
                ("--", false)
            } else {
                return Err(GraphError::Parse {
                    line: line_no,
                    message: format!("expected `a -> b`, `a -- b` or `nodes:`, got `{line}`"),
                });
            };
            let mut parts = line.splitn(2, sep);
            let a = parts.next().unwrap_or("").trim();
            let b = parts.next().unwrap_or("").trim();
            check_name(a, line_no)?;
            check_name(b, line_no)?;
            note(&mut out, a);
            note(&mut out, b);
            let edge = (line_no, a.to_string(), b.to_string());
            if directed {
                out.directed.push(edge);
            } else {
                out.undirected.push(edge);
            }
        }
        Ok(out)
    }
}

fn check_name(name: &str, line: usize) -> Result<(), GraphError> {
    if name.is_empty()
        || name.contains(char::is_whitespace)
        || name.contains("->")
        || name.contains("--")
        || name.contains(',')
    {
        return Err(GraphError::Parse {
            line,
            message: format!("invalid node name `{name}`"),
        });
    }
    Ok(())
}

/// Index combinations of `k` out of `n`, in lexicographic order.
pub(crate) fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut current: Option<Vec<usize>> = if k <= n { Some((0..k).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = current.clone()?;
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                current = None;
                break;
            }
            i -= 1;
            if next[i] < n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                current = Some(next);
                break;
            }
        }
        Some(out)
    })
}
