//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pns_core::scm_oracle::{Exogenous, Mechanism};
use pns_core::{CausalGraph, ScmSpec};
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// d-separation by path enumeration

/// Every simple path between `a` and `b` in the skeleton, as node lists.
pub fn simple_paths(g: &CausalGraph, a: &str, b: &str) -> Vec<Vec<String>> {
    let mut nbrs: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (p, c) in g.edges() {
        nbrs.entry(p).or_default().push(c);
        nbrs.entry(c).or_default().push(p);
    }
    let mut out = Vec::new();
    let mut path = vec![a.to_string()];
    fn walk(
        nbrs: &BTreeMap<&str, Vec<&str>>,
        target: &str,
        path: &mut Vec<String>,
        out: &mut Vec<Vec<String>>,
    ) {
        let last = path.last().unwrap().clone();
        if last == target {
            out.push(path.clone());
            return;
        }
        for &n in nbrs.get(last.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            if path.iter().any(|p| p == n) {
                continue;
            }
            path.push(n.to_string());
            walk(nbrs, target, path, out);
            path.pop();
        }
    }
    walk(&nbrs, b, &mut path, &mut out);
    out
}

/// Whether `z` blocks a path: some interior node is a non-collider in `z`,
/// or a collider with neither itself nor a descendant in `z`.
pub fn path_blocked(g: &CausalGraph, path: &[String], z: &BTreeSet<String>) -> bool {
    for i in 1..path.len().saturating_sub(1) {
        let (prev, mid, next) = (&path[i - 1], &path[i], &path[i + 1]);
        let collider = g.has_edge(prev, mid) && g.has_edge(next, mid);
        if collider {
            let desc = g.descendants(mid).unwrap();
            let opened = z.contains(mid) || desc.iter().any(|d| z.contains(d));
            if !opened {
                return true;
            }
        } else if z.contains(mid) {
            return true;
        }
    }
    false
}

pub fn brute_dsep(g: &CausalGraph, a: &str, b: &str, z: &BTreeSet<String>) -> bool {
    simple_paths(g, a, b).iter().all(|p| path_blocked(g, p, z))
}

pub fn brute_dsep_sets(g: &CausalGraph, a: &BTreeSet<String>, b: &BTreeSet<String>, z: &BTreeSet<String>) -> bool {
    a.iter().all(|x| b.iter().all(|y| brute_dsep(g, x, y, z)))
}

/// DAG over `V0..V{n-1}` with a random hidden order and edge probability `p`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64) -> CausalGraph {
    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((names[order[i]].clone(), names[order[j]].clone()));
            }
        }
    }
    CausalGraph::new(names.clone(), edges).unwrap()
}

/// DAG over `V0..V{n-1}` whose upper-triangular edge mask is `mask`.
pub fn dag_from_mask(n: usize, mask: u64) -> CausalGraph {
    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    let mut edges = Vec::new();
    let mut bit = 0;
    for i in 0..n {
        for j in i + 1..n {
            if mask >> bit & 1 == 1 {
                edges.push((names[i].clone(), names[j].clone()));
            }
            bit += 1;
        }
    }
    CausalGraph::new(names, edges).unwrap()
}

// ---------------------------------------------------------------------------
// SAS transport writer

/// Encode a binary64 as an IBM hexadecimal float. Every finite double in
/// the IBM range fits: 53 significant bits plus at most 3 bits of hex
/// normalisation is 56.
pub fn f64_to_ibm(v: f64) -> [u8; 8] {
    if v == 0.0 {
        return [0; 8];
    }
    let bits = v.to_bits();
    let sign = (bits >> 63) as u8;
    let biased = ((bits >> 52) & 0x7ff) as i64;
    assert!(biased != 0 && biased != 0x7ff, "subnormal or non-finite");
    let m = (bits & ((1u64 << 52) - 1)) | (1u64 << 52);
    // v = m * 2^e2
    let e2 = biased - 1075;
    let s = (e2 + 56).rem_euclid(4);
    let e16 = (e2 + 56 - s) / 4;
    let fraction = m << s;
    let exp_byte = e16 + 64;
    assert!((0..128).contains(&exp_byte), "outside the IBM range");
    let mut out = [0u8; 8];
    out[0] = (sign << 7) | exp_byte as u8;
    out[1..].copy_from_slice(&fraction.to_be_bytes()[1..]);
    out
}

pub enum XptValues {
    /// Values with the stored byte length (2..=8, truncating the fraction).
    Num(Vec<Option<f64>>, usize),
    Char(Vec<String>, usize),
}

pub struct XptColumn {
    pub name: String,
    pub label: String,
    pub values: XptValues,
}

impl XptColumn {
    pub fn num(name: &str, values: Vec<Option<f64>>) -> Self {
        XptColumn {
            name: name.into(),
            label: format!("{name} label"),
            values: XptValues::Num(values, 8),
        }
    }

    pub fn text(name: &str, values: Vec<&str>, len: usize) -> Self {
        XptColumn {
            name: name.into(),
            label: String::new(),
            values: XptValues::Char(values.into_iter().map(String::from).collect(), len),
        }
    }

    fn width(&self) -> usize {
        match &self.values {
            XptValues::Num(_, w) | XptValues::Char(_, w) => *w,
        }
    }

    fn rows(&self) -> usize {
        match &self.values {
            XptValues::Num(v, _) => v.len(),
            XptValues::Char(v, _) => v.len(),
        }
    }
}

fn padded(s: &str, n: usize) -> Vec<u8> {
    let mut b = s.as_bytes().to_vec();
    assert!(b.len() <= n, "`{s}` longer than {n}");
    b.resize(n, b' ');
    b
}

fn pad_record(buf: &mut Vec<u8>) {
    while !buf.len().is_multiple_of(80) {
        buf.push(b' ');
    }
}

const ZEROS30: &str = "000000000000000000000000000000";

/// A complete transport file with one member per entry of `members`.
pub fn write_xpt_members(members: &[(&str, &str, Vec<XptColumn>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(padded(&format!("HEADER RECORD*******LIBRARY HEADER RECORD!!!!!!!{ZEROS30}"), 80));
    out.extend(padded("SAS     SAS     SASLIB  9.4     X64_10PR                        01JAN24:00:00:00", 80));
    out.extend(padded("01JAN24:00:00:00", 80));
    for (name, label, cols) in members {
        write_member(&mut out, name, label, cols);
    }
    out
}

pub fn write_xpt(name: &str, cols: Vec<XptColumn>) -> Vec<u8> {
    write_xpt_members(&[(name, "", cols)])
}

fn write_member(out: &mut Vec<u8>, name: &str, label: &str, cols: &[XptColumn]) {
    out.extend(padded(
        "HEADER RECORD*******MEMBER  HEADER RECORD!!!!!!!000000000000000001600000000140",
        80,
    ));
    out.extend(padded(&format!("HEADER RECORD*******DSCRPTR HEADER RECORD!!!!!!!{ZEROS30}"), 80));
    let mut d1 = padded("SAS     ", 8);
    d1.extend(padded(name, 8));
    d1.extend(padded("SASDATA 9.4     X64_10PR", 24));
    d1.extend(padded("", 24));
    d1.extend(padded("01JAN24:00:00:00", 16));
    out.extend(d1);
    let mut d2 = padded("01JAN24:00:00:00", 16);
    d2.extend(padded("", 16));
    d2.extend(padded(label, 40));
    d2.extend(padded("", 8));
    out.extend(d2);
    out.extend(padded(
        &format!("HEADER RECORD*******NAMESTR HEADER RECORD!!!!!!!000000{:04}00000000000000000000", cols.len()),
        80,
    ));
    let mut pos = 0i32;
    for (i, c) in cols.iter().enumerate() {
        let mut ns = vec![0u8; 140];
        let numeric = matches!(c.values, XptValues::Num(..));
        ns[0..2].copy_from_slice(&(if numeric { 1i16 } else { 2 }).to_be_bytes());
        ns[4..6].copy_from_slice(&(c.width() as i16).to_be_bytes());
        ns[6..8].copy_from_slice(&(i as i16 + 1).to_be_bytes());
        ns[8..16].copy_from_slice(&padded(&c.name, 8));
        ns[16..56].copy_from_slice(&padded(&c.label, 40));
        ns[56..64].copy_from_slice(&padded("", 8));
        ns[72..80].copy_from_slice(&padded("", 8));
        ns[84..88].copy_from_slice(&pos.to_be_bytes());
        pos += c.width() as i32;
        out.extend(ns);
    }
    pad_record(out);
    out.extend(padded(&format!("HEADER RECORD*******OBS     HEADER RECORD!!!!!!!{ZEROS30}"), 80));
    let n = cols.first().map_or(0, XptColumn::rows);
    for r in 0..n {
        for c in cols {
            match &c.values {
                XptValues::Num(v, w) => match v[r] {
                    Some(x) => out.extend(&f64_to_ibm(x)[..*w]),
                    None => {
                        out.push(b'.');
                        out.extend(std::iter::repeat_n(0u8, w - 1));
                    }
                },
                XptValues::Char(v, w) => out.extend(padded(&v[r], *w)),
            }
        }
    }
    pad_record(out);
}

// ---------------------------------------------------------------------------
// SCM evaluation by direct recursion

#[derive(Debug, Clone, PartialEq)]
pub struct BruteProfile {
    pub p_yx: f64,
    pub p_yxp: f64,
    pub pns: f64,
    /// Observational joint over all endogenous variables, declared order.
    pub joint: BTreeMap<Vec<u32>, f64>,
}

fn eval_var(
    m: &ScmSpec,
    name: &str,
    u: &BTreeMap<&str, u32>,
    forced: Option<(&str, u32)>,
    memo: &mut BTreeMap<String, u32>,
) -> u32 {
    if let Some((f, v)) = forced {
        if f == name {
            return v;
        }
    }
    if let Some(&v) = memo.get(name) {
        return v;
    }
    let mech: &Mechanism = m.endogenous().iter().find(|e| e.name == name).unwrap();
    let mut index = 0usize;
    for p in &mech.parents {
        let card = m.endogenous().iter().find(|e| &e.name == p).unwrap().levels as usize;
        index = index * card + eval_var(m, p, u, forced, memo) as usize;
    }
    for e in &mech.exogenous {
        let card = m.exogenous().iter().find(|x| &x.name == e).unwrap().probs.len();
        index = index * card + u[e.as_str()] as usize;
    }
    let v = mech.table[index];
    memo.insert(name.to_string(), v);
    v
}

/// Exact profile by iterating every exogenous assignment with an odometer
/// and evaluating variables by memoised recursion over parents.
pub fn brute_profile(m: &ScmSpec, x: &str, y: &str) -> BruteProfile {
    let exo: &[Exogenous] = m.exogenous();
    let mut digits = vec![0u32; exo.len()];
    let mut out = BruteProfile {
        p_yx: 0.0,
        p_yxp: 0.0,
        pns: 0.0,
        joint: BTreeMap::new(),
    };
    loop {
        let p: f64 = exo.iter().zip(&digits).map(|(e, &d)| e.probs[d as usize]).product();
        let u: BTreeMap<&str, u32> = exo.iter().zip(&digits).map(|(e, &d)| (e.name.as_str(), d)).collect();
        let y1 = eval_var(m, y, &u, Some((x, 1)), &mut BTreeMap::new());
        let y0 = eval_var(m, y, &u, Some((x, 0)), &mut BTreeMap::new());
        let mut memo = BTreeMap::new();
        let factual: Vec<u32> = m
            .endogenous()
            .iter()
            .map(|e| eval_var(m, &e.name, &u, None, &mut memo))
            .collect();
        if y1 == 1 {
            out.p_yx += p;
        }
        if y0 == 1 {
            out.p_yxp += p;
        }
        if y1 == 1 && y0 == 0 {
            out.pns += p;
        }
        *out.joint.entry(factual).or_insert(0.0) += p;

        let mut i = digits.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            digits[i] += 1;
            if (digits[i] as usize) < exo[i].probs.len() {
                break;
            }
            digits[i] = 0;
        }
    }
}

// ---------------------------------------------------------------------------
// Fixture models

fn exo(name: &str, probs: &[f64]) -> Exogenous {
    Exogenous {
        name: name.into(),
        probs: probs.to_vec(),
    }
}

fn mech(name: &str, parents: &[&str], exogenous: &[&str], table: &[u32]) -> Mechanism {
    Mechanism {
        name: name.into(),
        parents: parents.iter().map(|s| s.to_string()).collect(),
        exogenous: exogenous.iter().map(|s| s.to_string()).collect(),
        levels: 2,
        table: table.to_vec(),
    }
}

/// `v := parent XOR noise` table with inputs (parent, noise).
const NOISY_COPY: [u32; 4] = [0, 1, 1, 0];

/// X → M → Y, each link copying its parent with probability 3/4.
pub fn chain_scm() -> ScmSpec {
    ScmSpec::new(
        vec![exo("U_X", &[0.5, 0.5]), exo("U_M", &[0.75, 0.25]), exo("U_Y", &[0.75, 0.25])],
        vec![
            mech("X", &[], &["U_X"], &[0, 1]),
            mech("M", &["X"], &["U_M"], &NOISY_COPY),
            mech("Y", &["M"], &["U_Y"], &NOISY_COPY),
        ],
        None,
    )
    .unwrap()
}

/// X ← M → Y.
pub fn fork_scm() -> ScmSpec {
    ScmSpec::new(
        vec![exo("U_M", &[0.5, 0.5]), exo("U_X", &[0.75, 0.25]), exo("U_Y", &[0.75, 0.25])],
        vec![
            mech("M", &[], &["U_M"], &[0, 1]),
            mech("X", &["M"], &["U_X"], &NOISY_COPY),
            mech("Y", &["M"], &["U_Y"], &NOISY_COPY),
        ],
        None,
    )
    .unwrap()
}

/// X → C ← Y with `C := X OR Y` when the noise is 1 and `X AND Y`
/// otherwise.
pub fn collider_scm() -> ScmSpec {
    // inputs (X, Y, N), N fastest
    let table = [0, 0, 0, 1, 0, 1, 1, 1];
    ScmSpec::new(
        vec![exo("U_X", &[0.5, 0.5]), exo("U_Y", &[0.5, 0.5]), exo("U_C", &[0.5, 0.5])],
        vec![
            mech("X", &[], &["U_X"], &[0, 1]),
            mech("Y", &[], &["U_Y"], &[0, 1]),
            mech("C", &["X", "Y"], &["U_C"], &table),
        ],
        None,
    )
    .unwrap()
}

/// Two independent fair coins.
pub fn coins_scm() -> ScmSpec {
    ScmSpec::new(
        vec![exo("U_A", &[0.5, 0.5]), exo("U_B", &[0.5, 0.5])],
        vec![mech("A", &[], &["U_A"], &[0, 1]), mech("B", &[], &["U_B"], &[0, 1])],
        None,
    )
    .unwrap()
}

/// Diabetes → DietCoke, Diabetes → Fatness,
/// DietCoke → Fatness.
pub fn diet_graph() -> CausalGraph {
    CausalGraph::new(
        ["Diabetes", "DietCoke", "Fatness"],
        [("Diabetes", "DietCoke"), ("Diabetes", "Fatness"), ("DietCoke", "Fatness")],
    )
    .unwrap()
}
