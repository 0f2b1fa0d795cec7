//! Constraint-based structure learning over discrete data.
//!
//! The pipeline is the PC-stable variant: a G² conditional-independence test,
//! skeleton search with separating sets, v-structure orientation and the four
//! Meek propagation rules. The result is a CPDAG with directed and undirected
//! edges.
//!
//! Results depend only on the joint counts and on the declared variable
//! order of the input table, never on row order or thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::estimate::{EstimateError, JointTable};
use crate::graph::{combinations, CausalGraph, EdgeListText, GraphError, NodeSet};

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_MAX_COND: usize = 3;

/// A stratum whose size is below `POOL_FACTOR * r * c` (for an `r x c`
/// table) has an average expected cell count under 5 and is pooled.
pub const POOL_FACTOR: u64 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscoveryError {
    #[error("variable `{0}` is constant; the test is undefined")]
    DegenerateTable(String),
    #[error("invalid test: {0}")]
    InvalidQuery(String),
    #[error("discovery needs at least two variables")]
    TooFewVariables,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CiTestResult {
    /// G² likelihood-ratio statistic.
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
    pub independent: bool,
    /// Number of strata that were merged into the pooled stratum.
    pub pooled_strata: usize,
}

/// G² test of `a ⊥ b | cond` on the counts of `t`.
///
/// Each observed stratum of `cond` contributes
/// `2 Σ n_ab ln(n_ab n / (n_a n_b))` and `(r_s − 1)(c_s − 1)` degrees of
/// freedom, where `r_s`, `c_s` count the non-empty rows and columns of that
/// stratum. Strata smaller than `POOL_FACTOR · r · c` are merged into one
/// pooled stratum before testing. With zero degrees of freedom the p-value
/// is 1.
pub fn ci_test(t: &JointTable, a: &str, b: &str, cond: &[&str], alpha: f64) -> Result<CiTestResult, DiscoveryError> {
    check_alpha(alpha)?;
    if a == b {
        return Err(DiscoveryError::InvalidQuery(format!("`{a}` tested against itself")));
    }
    let mut seen = BTreeSet::new();
    for c in cond {
        if *c == a || *c == b || !seen.insert(*c) {
            return Err(DiscoveryError::InvalidQuery(format!(
                "conditioning set repeats `{c}`"
            )));
        }
    }
    let pos = |v: &str| {
        t.variables()
            .iter()
            .position(|n| n == v)
            .ok_or_else(|| DiscoveryError::Estimate(EstimateError::UnknownVariable(v.to_string())))
    };
    let pa = pos(a)?;
    let pb = pos(b)?;
    let pc: Vec<usize> = cond.iter().map(|c| pos(c)).collect::<Result<_, _>>()?;
    let la = t.levels(a)?;
    let lb = t.levels(b)?;

    let mut strata: BTreeMap<Vec<i64>, Vec<u64>> = BTreeMap::new();
    let mut seen_a = BTreeSet::new();
    let mut seen_b = BTreeSet::new();
    for (cell, n) in t.cells() {
        let ia = la.binary_search(&cell[pa]).expect("level declared");
        let ib = lb.binary_search(&cell[pb]).expect("level declared");
        seen_a.insert(ia);
        seen_b.insert(ib);
        let key: Vec<i64> = pc.iter().map(|&p| cell[p]).collect();
        strata.entry(key).or_insert_with(|| vec![0; la.len() * lb.len()])[ia * lb.len() + ib] += n;
    }
    if seen_a.len() < 2 {
        return Err(DiscoveryError::DegenerateTable(a.to_string()));
    }
    if seen_b.len() < 2 {
        return Err(DiscoveryError::DegenerateTable(b.to_string()));
    }

    let cells = (la.len() * lb.len()) as u64;
    let mut pooled = vec![0u64; la.len() * lb.len()];
    let mut pooled_strata = 0;
    let mut tables = Vec::with_capacity(strata.len());
    let n_strata = strata.len();
    for (_, counts) in strata {
        let n: u64 = counts.iter().sum();
        if n_strata > 1 && n < POOL_FACTOR * cells {
            for (p, c) in pooled.iter_mut().zip(&counts) {
                *p += c;
            }
            pooled_strata += 1;
        } else {
            tables.push(counts);
        }
    }
    if pooled_strata > 0 {
        tables.push(pooled);
    }

    let mut statistic = 0.0;
    let mut dof = 0u64;
    for counts in &tables {
        let (g, d) = g2_stratum(counts, la.len(), lb.len());
        statistic += g;
        dof += d;
    }
    let statistic = statistic.max(0.0);
    let p_value = if dof == 0 {
        1.0
    } else {
        let chi = ChiSquared::new(dof as f64).expect("positive dof");
        chi.sf(statistic).clamp(0.0, 1.0)
    };
    Ok(CiTestResult {
        statistic,
        dof,
        p_value,
        independent: p_value > alpha,
        pooled_strata,
    })
}

fn g2_stratum(counts: &[u64], r: usize, c: usize) -> (f64, u64) {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return (0.0, 0);
    }
    let rows: Vec<u64> = (0..r).map(|i| counts[i * c..(i + 1) * c].iter().sum()).collect();
    let cols: Vec<u64> = (0..c).map(|j| (0..r).map(|i| counts[i * c + j]).sum()).collect();
    let mut g = 0.0;
    for i in 0..r {
        for j in 0..c {
            let o = counts[i * c + j];
            if o > 0 {
                let e = rows[i] as f64 * cols[j] as f64 / n as f64;
                g += o as f64 * (o as f64 / e).ln();
            }
        }
    }
    let nr = rows.iter().filter(|&&x| x > 0).count() as u64;
    let nc = cols.iter().filter(|&&x| x > 0).count() as u64;
    (2.0 * g, nr.saturating_sub(1) * nc.saturating_sub(1))
}

fn check_alpha(alpha: f64) -> Result<(), DiscoveryError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(DiscoveryError::InvalidAlpha(alpha))
    }
}

/// Unordered pair with the lexicographically smaller name first.
fn pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Undirected adjacency structure with separating sets for removed edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub nodes: Vec<String>,
    /// Unordered adjacencies, smaller name first.
    pub edges: BTreeSet<(String, String)>,
    pub sepsets: BTreeMap<(String, String), NodeSet>,
    pub alpha: f64,
    pub tests_run: usize,
}

impl Skeleton {
    pub fn adjacent(&self, a: &str, b: &str) -> bool {
        self.edges.contains(&pair(a, b))
    }

    pub fn sepset(&self, a: &str, b: &str) -> Option<&NodeSet> {
        self.sepsets.get(&pair(a, b))
    }
}

/// Separating set found for one edge (if any) and the number of tests run.
type EdgeOutcome = (Option<Vec<usize>>, usize);

/// PC-stable skeleton search.
///
/// Starts from the complete graph over the table's variables. At level `l`
/// every remaining edge `(a, b)` is tested against conditioning sets of size
/// `l` drawn from the neighbours of `a` (then of `b`) as they stood at the
/// start of the level. Tests of one level run in parallel; removals are
/// committed afterwards in declared-variable order.
///
/// A constant variable is disconnected from everything with an empty
/// separating set.
pub fn learn_skeleton(t: &JointTable, alpha: f64, max_cond: usize) -> Result<Skeleton, DiscoveryError> {
    check_alpha(alpha)?;
    let nodes = t.variables().to_vec();
    let k = nodes.len();
    if k < 2 {
        return Err(DiscoveryError::TooFewVariables);
    }
    let mut adj = vec![vec![true; k]; k];
    for (i, row) in adj.iter_mut().enumerate() {
        row[i] = false;
    }
    let mut sepsets = BTreeMap::new();
    let mut tests_run = 0;

    let observed: Vec<usize> = (0..k)
        .map(|i| {
            let m = t.marginalize(&[nodes[i].as_str()]).expect("own variable");
            m.cells().count()
        })
        .collect();
    for i in 0..k {
        if observed[i] < 2 {
            for j in 0..k {
                if adj[i][j] {
                    adj[i][j] = false;
                    adj[j][i] = false;
                    sepsets.insert(pair(&nodes[i], &nodes[j]), NodeSet::new());
                }
            }
        }
    }

    for level in 0..=max_cond {
        let snapshot = adj.clone();
        let neighbours = |v: usize, other: usize| -> Vec<usize> {
            (0..k).filter(|&w| snapshot[v][w] && w != other).collect()
        };
        let candidates: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
            .filter(|&(i, j)| snapshot[i][j])
            .filter(|&(i, j)| neighbours(i, j).len() >= level || neighbours(j, i).len() >= level)
            .collect();
        if candidates.is_empty() {
            break;
        }
        let outcomes: Vec<Result<EdgeOutcome, DiscoveryError>> = candidates
            .par_iter()
            .map(|&(i, j)| {
                let mut run = 0;
                let mut tried = BTreeSet::new();
                for (from, other) in [(i, j), (j, i)] {
                    let pool = neighbours(from, other);
                    for combo in combinations(pool.len(), level) {
                        let mut s: Vec<usize> = combo.iter().map(|&c| pool[c]).collect();
                        s.sort_unstable();
                        if !tried.insert(s.clone()) {
                            continue;
                        }
                        let cond: Vec<&str> = s.iter().map(|&c| nodes[c].as_str()).collect();
                        run += 1;
                        let r = ci_test(t, &nodes[i], &nodes[j], &cond, alpha)?;
                        if r.independent {
                            return Ok((Some(s), run));
                        }
                    }
                }
                Ok((None, run))
            })
            .collect();
        for (&(i, j), outcome) in candidates.iter().zip(outcomes) {
            let (sep, run) = outcome?;
            tests_run += run;
            if let Some(s) = sep {
                adj[i][j] = false;
                adj[j][i] = false;
                let set: NodeSet = s.iter().map(|&c| nodes[c].clone()).collect();
                sepsets.insert(pair(&nodes[i], &nodes[j]), set);
            }
        }
        log::debug!("skeleton level {level}: {} tests so far", tests_run);
    }

    let mut edges = BTreeSet::new();
    for i in 0..k {
        for j in i + 1..k {
            if adj[i][j] {
                edges.insert(pair(&nodes[i], &nodes[j]));
            }
        }
    }
    Ok(Skeleton {
        nodes,
        edges,
        sepsets,
        alpha,
        tests_run,
    })
}

/// A partially directed graph: the output of structure learning.
#[derive(Debug, Clone, PartialEq)]
pub struct CpdagResult {
    pub nodes: Vec<String>,
    /// `(parent, child)` pairs.
    pub directed: BTreeSet<(String, String)>,
    /// Unordered pairs, smaller name first.
    pub undirected: BTreeSet<(String, String)>,
    pub sepsets: BTreeMap<(String, String), NodeSet>,
    pub alpha: f64,
    /// Edges left undirected because orientation evidence disagreed.
    pub conflicts: BTreeSet<(String, String)>,
}

#[derive(Serialize)]
struct SepsetEntry<'a> {
    a: &'a str,
    b: &'a str,
    set: &'a NodeSet,
}

#[derive(Serialize)]
struct CpdagDocument<'a> {
    schema: &'static str,
    nodes: &'a [String],
    directed: Vec<[&'a str; 2]>,
    undirected: Vec<[&'a str; 2]>,
    sepsets: Vec<SepsetEntry<'a>>,
    alpha: f64,
    conflicts: Vec<[&'a str; 2]>,
}

impl CpdagResult {
    pub fn adjacent(&self, a: &str, b: &str) -> bool {
        self.undirected.contains(&pair(a, b))
            || self.directed.contains(&(a.to_string(), b.to_string()))
            || self.directed.contains(&(b.to_string(), a.to_string()))
    }

    pub fn has_directed(&self, a: &str, b: &str) -> bool {
        self.directed.contains(&(a.to_string(), b.to_string()))
    }

    pub fn has_undirected(&self, a: &str, b: &str) -> bool {
        self.undirected.contains(&pair(a, b))
    }

    /// Same directed and undirected edges (sepsets and alpha ignored).
    pub fn same_pattern(&self, other: &CpdagResult) -> bool {
        self.directed == other.directed && self.undirected == other.undirected
    }

    /// Whether the directed part contains a cycle.
    pub fn directed_cyclic(&self) -> bool {
        find_directed_cycle(&self.nodes, &self.directed).is_some()
    }

    /// Edge-list text: `nodes:` header, `a -> b` and `a -- b` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# alpha = {}", self.alpha);
        let _ = writeln!(s, "nodes: {}", self.nodes.join(" "));
        for (a, b) in &self.directed {
            let _ = writeln!(s, "{a} -> {b}");
        }
        for (a, b) in &self.undirected {
            let _ = writeln!(s, "{a} -- {b}");
        }
        s
    }

    /// Parse edge-list text. Separating sets are not part of the format.
    pub fn from_text(text: &str, alpha: f64) -> Result<Self, DiscoveryError> {
        let doc = EdgeListText::parse(text)?;
        let known: BTreeSet<&str> = doc.nodes.iter().map(String::as_str).collect();
        let mut out = CpdagResult {
            nodes: doc.nodes.clone(),
            directed: BTreeSet::new(),
            undirected: BTreeSet::new(),
            sepsets: BTreeMap::new(),
            alpha,
            conflicts: BTreeSet::new(),
        };
        for (line, a, b) in doc.directed.iter().chain(&doc.undirected) {
            if a == b || !known.contains(a.as_str()) {
                return Err(GraphError::Parse {
                    line: *line,
                    message: format!("invalid edge {a} {b}"),
                }
                .into());
            }
            if out.adjacent(a, b) {
                return Err(GraphError::DuplicateEdge(a.clone(), b.clone()).into());
            }
            if doc.directed.iter().any(|(l, x, y)| l == line && x == a && y == b) {
                out.directed.insert((a.clone(), b.clone()));
            } else {
                out.undirected.insert(pair(a, b));
            }
        }
        Ok(out)
    }

    /// Graphviz rendering; undirected edges use `dir=none`.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph cpdag {\n");
        for n in &self.nodes {
            let _ = writeln!(s, "  \"{n}\";");
        }
        for (a, b) in &self.directed {
            let _ = writeln!(s, "  \"{a}\" -> \"{b}\";");
        }
        for (a, b) in &self.undirected {
            let _ = writeln!(s, "  \"{a}\" -> \"{b}\" [dir=none];");
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> String {
        let doc = CpdagDocument {
            schema: crate::SCHEMA_VERSION,
            nodes: &self.nodes,
            directed: self.directed.iter().map(|(a, b)| [a.as_str(), b.as_str()]).collect(),
            undirected: self.undirected.iter().map(|(a, b)| [a.as_str(), b.as_str()]).collect(),
            sepsets: self
                .sepsets
                .iter()
                .map(|((a, b), set)| SepsetEntry { a, b, set })
                .collect(),
            alpha: self.alpha,
            conflicts: self.conflicts.iter().map(|(a, b)| [a.as_str(), b.as_str()]).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("cpdag serializes")
    }
}

fn find_directed_cycle(nodes: &[String], directed: &BTreeSet<(String, String)>) -> Option<Vec<(String, String)>> {
    let idx: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let k = nodes.len();
    let mut out = vec![Vec::new(); k];
    for (a, b) in directed {
        out[idx[a.as_str()]].push(idx[b.as_str()]);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; k];
    let mut parent = vec![usize::MAX; k];
    for root in 0..k {
        if state[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state[root] = 1;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < out[v].len() {
                let w = out[v][*next];
                *next += 1;
                match state[w] {
                    0 => {
                        state[w] = 1;
                        parent[w] = v;
                        stack.push((w, 0));
                    }
                    1 => {
                        let mut cycle = vec![(nodes[v].clone(), nodes[w].clone())];
                        let mut cur = v;
                        while cur != w {
                            let p = parent[cur];
                            cycle.push((nodes[p].clone(), nodes[cur].clone()));
                            cur = p;
                        }
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                state[v] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Orient every unshielded triple `a -- c -- b` with `c` outside the
/// separating set of `(a, b)` as `a → c ← b`.
///
/// When two triples demand opposite directions on one edge, the edge stays
/// undirected and is listed in `conflicts`. Any directed cycle produced by
/// inconsistent tests is likewise undone.
pub fn orient_v_structures(skel: &Skeleton) -> CpdagResult {
    let mut proposals: BTreeSet<(String, String)> = BTreeSet::new();
    let neighbours = |v: &str| -> Vec<&str> {
        skel.nodes
            .iter()
            .map(String::as_str)
            .filter(|w| *w != v && skel.adjacent(v, w))
            .collect()
    };
    for c in &skel.nodes {
        let nb = neighbours(c);
        for (i, a) in nb.iter().enumerate() {
            for b in &nb[i + 1..] {
                if skel.adjacent(a, b) {
                    continue;
                }
                let in_sepset = skel.sepset(a, b).is_some_and(|s| s.contains(c));
                if !in_sepset {
                    proposals.insert((a.to_string(), c.clone()));
                    proposals.insert((b.to_string(), c.clone()));
                }
            }
        }
    }
    let mut out = CpdagResult {
        nodes: skel.nodes.clone(),
        directed: BTreeSet::new(),
        undirected: BTreeSet::new(),
        sepsets: skel.sepsets.clone(),
        alpha: skel.alpha,
        conflicts: BTreeSet::new(),
    };
    for (a, b) in &skel.edges {
        let ab = proposals.contains(&(a.clone(), b.clone()));
        let ba = proposals.contains(&(b.clone(), a.clone()));
        match (ab, ba) {
            (true, true) => {
                log::warn!("conflicting v-structure orientation on {a} -- {b}");
                out.conflicts.insert((a.clone(), b.clone()));
                out.undirected.insert((a.clone(), b.clone()));
            }
            (true, false) => {
                out.directed.insert((a.clone(), b.clone()));
            }
            (false, true) => {
                out.directed.insert((b.clone(), a.clone()));
            }
            (false, false) => {
                out.undirected.insert((a.clone(), b.clone()));
            }
        }
    }
    while let Some(cycle) = find_directed_cycle(&out.nodes, &out.directed) {
        for (a, b) in cycle {
            out.directed.remove(&(a.clone(), b.clone()));
            out.undirected.insert(pair(&a, &b));
            out.conflicts.insert(pair(&a, &b));
        }
    }
    out
}

struct Mixed {
    k: usize,
    /// `dir[a][b]`: a → b.
    dir: Vec<Vec<bool>>,
    /// `und[a][b] == und[b][a]`: a -- b.
    und: Vec<Vec<bool>>,
}

impl Mixed {
    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.dir[a][b] || self.dir[b][a] || self.und[a][b]
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.k];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend((0..self.k).filter(|&w| self.dir[v][w] && !seen[w]));
        }
        false
    }

    /// Orient `a -- b` as `a → b` unless that closes a directed cycle.
    fn orient(&mut self, a: usize, b: usize) -> bool {
        if !self.und[a][b] || self.reaches(b, a) {
            return false;
        }
        self.und[a][b] = false;
        self.und[b][a] = false;
        self.dir[a][b] = true;
        true
    }

    fn rule1(&self, a: usize, b: usize) -> bool {
        // c → a, c not adjacent to b
        (0..self.k).any(|c| c != b && self.dir[c][a] && !self.adjacent(c, b))
    }

    fn rule2(&self, a: usize, b: usize) -> bool {
        // a → c → b
        (0..self.k).any(|c| self.dir[a][c] && self.dir[c][b])
    }

    fn rule3(&self, a: usize, b: usize) -> bool {
        // a -- c → b, a -- d → b, c and d non-adjacent
        let mids: Vec<usize> = (0..self.k).filter(|&c| self.und[a][c] && self.dir[c][b]).collect();
        mids.iter()
            .enumerate()
            .any(|(i, &c)| mids[i + 1..].iter().any(|&d| !self.adjacent(c, d)))
    }

    fn rule4(&self, a: usize, b: usize) -> bool {
        // a -- c → d → b, a adjacent to d, c not adjacent to b
        (0..self.k).any(|c| {
            c != b
                && self.und[a][c]
                && !self.adjacent(c, b)
                && (0..self.k).any(|d| d != a && self.dir[c][d] && self.dir[d][b] && self.adjacent(a, d))
        })
    }
}

/// Apply Meek's rules R1-R4 until no undirected edge can be oriented.
///
/// Orientations are only ever added. An orientation that would close a
/// directed cycle is skipped. Running the function on its own output
/// changes nothing.
pub fn complete_orientation(partial: &CpdagResult) -> CpdagResult {
    let idx: BTreeMap<&str, usize> = partial
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let k = partial.nodes.len();
    let mut g = Mixed {
        k,
        dir: vec![vec![false; k]; k],
        und: vec![vec![false; k]; k],
    };
    for (a, b) in &partial.directed {
        g.dir[idx[a.as_str()]][idx[b.as_str()]] = true;
    }
    for (a, b) in &partial.undirected {
        let (i, j) = (idx[a.as_str()], idx[b.as_str()]);
        g.und[i][j] = true;
        g.und[j][i] = true;
    }
    let frozen: BTreeSet<(usize, usize)> = partial
        .conflicts
        .iter()
        .map(|(a, b)| (idx[a.as_str()], idx[b.as_str()]))
        .flat_map(|(i, j)| [(i, j), (j, i)])
        .collect();

    loop {
        let mut changed = false;
        for a in 0..k {
            for b in 0..k {
                if !g.und[a][b] || frozen.contains(&(a, b)) {
                    continue;
                }
                if (g.rule1(a, b) || g.rule2(a, b) || g.rule3(a, b) || g.rule4(a, b)) && g.orient(a, b) {
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut out = partial.clone();
    out.directed.clear();
    out.undirected.clear();
    for a in 0..k {
        for b in 0..k {
            if g.dir[a][b] {
                out.directed.insert((partial.nodes[a].clone(), partial.nodes[b].clone()));
            }
            if a < b && g.und[a][b] {
                out.undirected.insert(pair(&partial.nodes[a], &partial.nodes[b]));
            }
        }
    }
    out
}

/// Skeleton, v-structures and Meek completion in one call.
pub fn discover(t: &JointTable, alpha: f64, max_cond: usize) -> Result<CpdagResult, DiscoveryError> {
    let skel = learn_skeleton(t, alpha, max_cond)?;
    Ok(complete_orientation(&orient_v_structures(&skel)))
}

/// The CPDAG of the Markov-equivalence class of a DAG.
///
/// Separating sets come from the local Markov property: for non-adjacent
/// `a`, `b` with `a` not a descendant of `b`, the parents of `b` separate them.
pub fn true_cpdag(g: &CausalGraph) -> Result<CpdagResult, DiscoveryError> {
    let nodes = g.nodes().to_vec();
    let mut edges = BTreeSet::new();
    let mut sepsets = BTreeMap::new();
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            if g.has_edge(a, b) || g.has_edge(b, a) {
                edges.insert(pair(a, b));
            } else if g.descendants(b)?.contains(a) {
                sepsets.insert(pair(a, b), g.parents(a)?);
            } else {
                sepsets.insert(pair(a, b), g.parents(b)?);
            }
        }
    }
    let skel = Skeleton {
        nodes,
        edges,
        sepsets,
        alpha: 0.0,
        tests_run: 0,
    };
    Ok(complete_orientation(&orient_v_structures(&skel)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(vars: &[&str], cells: &[(&[i64], u64)]) -> JointTable {
        JointTable::from_counts(
            vars.iter().map(|v| v.to_string()).collect(),
            vec![vec![0, 1]; vars.len()],
            cells.iter().map(|(c, n)| (c.to_vec(), *n)),
        )
        .unwrap()
    }

    fn cpdag(nodes: &[&str], directed: &[(&str, &str)], undirected: &[(&str, &str)]) -> CpdagResult {
        CpdagResult {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            directed: directed.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            undirected: undirected.iter().map(|(a, b)| pair(a, b)).collect(),
            sepsets: BTreeMap::new(),
            alpha: 0.01,
            conflicts: BTreeSet::new(),
        }
    }

    #[test]
    fn copy_is_dependent() {
        let t = table(&["a", "b"], &[(&[0, 0], 500), (&[1, 1], 500)]);
        let r = ci_test(&t, "a", "b", &[], 0.01).unwrap();
        assert!(!r.independent);
        assert_eq!(r.dof, 1);
        assert!(r.p_value < 1e-100);
        // 2 n ln 2 for a perfect copy of a fair coin
        assert!((r.statistic - 2.0 * 1000.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn balanced_table_is_independent() {
        let t = table(
            &["a", "b"],
            &[(&[0, 0], 250), (&[0, 1], 250), (&[1, 0], 250), (&[1, 1], 250)],
        );
        let r = ci_test(&t, "a", "b", &[], 0.01).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.independent);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_variable_is_degenerate() {
        let t = table(&["a", "b"], &[(&[0, 0], 5), (&[0, 1], 5)]);
        assert_eq!(
            ci_test(&t, "a", "b", &[], 0.01),
            Err(DiscoveryError::DegenerateTable("a".into()))
        );
    }

    #[test]
    fn bad_queries_rejected() {
        let t = table(&["a", "b", "c"], &[(&[0, 0, 0], 5), (&[1, 1, 1], 5)]);
        assert!(matches!(ci_test(&t, "a", "a", &[], 0.01), Err(DiscoveryError::InvalidQuery(_))));
        assert!(matches!(ci_test(&t, "a", "b", &["a"], 0.01), Err(DiscoveryError::InvalidQuery(_))));
        assert!(matches!(ci_test(&t, "a", "b", &[], 1.5), Err(DiscoveryError::InvalidAlpha(_))));
    }

    #[test]
    fn sparse_strata_are_pooled() {
        let t = table(
            &["a", "b", "c"],
            &[
                (&[0, 0, 0], 100),
                (&[0, 1, 0], 100),
                (&[1, 0, 0], 100),
                (&[1, 1, 0], 100),
                (&[0, 0, 1], 3),
                (&[1, 1, 1], 3),
            ],
        );
        let r = ci_test(&t, "a", "b", &["c"], 0.01).unwrap();
        assert_eq!(r.pooled_strata, 1);
    }

    #[test]
    fn rule1_orients_away_from_collider_free_path() {
        let p = cpdag(&["a", "b", "c"], &[("a", "b")], &[("b", "c")]);
        let out = complete_orientation(&p);
        assert!(out.has_directed("b", "c"));
        assert!(out.undirected.is_empty());
    }

    #[test]
    fn undirected_square_unchanged() {
        let p = cpdag(&["a", "b", "c", "d"], &[], &[("a", "b"), ("b", "c"), ("c", "d"), ("a", "d")]);
        assert_eq!(complete_orientation(&p), p);
    }

    #[test]
    fn rule2_avoids_cycle() {
        let p = cpdag(&["a", "b", "c"], &[("a", "b"), ("b", "c")], &[("a", "c")]);
        assert!(complete_orientation(&p).has_directed("a", "c"));
    }

    #[test]
    fn rule3_orients_into_common_child() {
        // a -- c → b, a -- d → b, a -- b, c and d non-adjacent
        let p = cpdag(
            &["a", "b", "c", "d"],
            &[("c", "b"), ("d", "b")],
            &[("a", "b"), ("a", "c"), ("a", "d")],
        );
        assert!(complete_orientation(&p).has_directed("a", "b"));
    }

    #[test]
    fn rule4_orients() {
        // a -- c → d → b, a -- d, a -- b, c and b non-adjacent
        let p = cpdag(
            &["a", "b", "c", "d"],
            &[("c", "d"), ("d", "b")],
            &[("a", "b"), ("a", "c"), ("a", "d")],
        );
        assert!(complete_orientation(&p).has_directed("a", "b"));
    }

    #[test]
    fn completion_is_idempotent() {
        let p = cpdag(&["a", "b", "c", "d"], &[("a", "b")], &[("b", "c"), ("c", "d")]);
        let once = complete_orientation(&p);
        assert_eq!(complete_orientation(&once), once);
    }

    #[test]
    fn true_cpdag_of_basic_structures() {
        let chain = CausalGraph::new(["X", "M", "Y"], [("X", "M"), ("M", "Y")]).unwrap();
        let c = true_cpdag(&chain).unwrap();
        assert!(c.directed.is_empty());
        assert_eq!(c.undirected.len(), 2);

        let collider = CausalGraph::new(["X", "C", "Y"], [("X", "C"), ("Y", "C")]).unwrap();
        let c = true_cpdag(&collider).unwrap();
        assert!(c.has_directed("X", "C") && c.has_directed("Y", "C"));
        assert!(c.undirected.is_empty());

        let v_plus = CausalGraph::new(["A", "B", "C", "D"], [("A", "C"), ("B", "C"), ("C", "D")]).unwrap();
        let c = true_cpdag(&v_plus).unwrap();
        assert!(c.has_directed("C", "D"));
    }

    #[test]
    fn shielded_triple_not_oriented() {
        let tri = CausalGraph::new(["a", "b", "c"], [("a", "b"), ("b", "c"), ("a", "c")]).unwrap();
        let c = true_cpdag(&tri).unwrap();
        assert!(c.directed.is_empty());
        assert_eq!(c.undirected.len(), 3);
    }

    #[test]
    fn conflicting_orientations_flagged() {
        // a -- b -- c -- d, sepsets exclude the middle nodes so both b and c
        // look like colliders, and b -- c gets opposite demands.
        let skel = Skeleton {
            nodes: ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect(),
            edges: [pair("a", "b"), pair("b", "c"), pair("c", "d")].into_iter().collect(),
            sepsets: [
                (pair("a", "c"), NodeSet::new()),
                (pair("b", "d"), NodeSet::new()),
                (pair("a", "d"), NodeSet::new()),
            ]
            .into_iter()
            .collect(),
            alpha: 0.01,
            tests_run: 0,
        };
        let p = orient_v_structures(&skel);
        assert!(p.conflicts.contains(&pair("b", "c")));
        assert!(p.has_undirected("b", "c"));
        assert!(p.has_directed("a", "b") && p.has_directed("d", "c"));
        assert!(!p.directed_cyclic());
    }

    #[test]
    fn text_round_trip() {
        let p = cpdag(&["a", "b", "c"], &[("a", "b")], &[("b", "c")]);
        let back = CpdagResult::from_text(&p.to_text(), 0.01).unwrap();
        assert!(back.same_pattern(&p));
        assert!(p.to_dot().contains("\"b\" -> \"c\" [dir=none]"));
    }

    #[test]
    fn skeleton_of_independent_pair_is_empty() {
        let t = table(
            &["a", "b"],
            &[(&[0, 0], 250), (&[0, 1], 250), (&[1, 0], 250), (&[1, 1], 250)],
        );
        let s = learn_skeleton(&t, 0.01, 3).unwrap();
        assert!(s.edges.is_empty());
        assert_eq!(s.sepset("a", "b"), Some(&NodeSet::new()));
    }

    #[test]
    fn skeleton_of_copy_keeps_edge() {
        let t = table(&["a", "b"], &[(&[0, 0], 500), (&[1, 1], 500)]);
        let s = learn_skeleton(&t, 0.01, 3).unwrap();
        assert!(s.adjacent("a", "b"));
    }
}
