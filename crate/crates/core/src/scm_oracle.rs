//! Finite structural causal models with an enumerable exogenous space.
//!
//! Every endogenous variable is a truth table over its endogenous parents and
//! its exogenous inputs. Enumerating all exogenous assignments gives exact
//! interventional, counterfactual and observational probabilities, which
//! serve as ground truth for the estimators and bounds in this crate.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DiscreteDataset, DiscreteVariable};
use crate::estimate::{Event, JointTable};
use crate::graph::{CausalGraph, GraphError};
use crate::numeric::CompensatedSum;
use crate::pns::{CausalQuantities, JointCells, StratumQuantities};

/// Name of the generator used by [`sample`], written into dataset metadata.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Default limit on the number of exogenous assignments enumerated.
pub const DEFAULT_STATE_CAP: u64 = 1 << 24;

/// Exogenous assignments handled per work unit. Fixed so that reductions do
/// not depend on the thread count.
const CHUNK: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("exogenous space has {size} states, cap is {cap}")]
    StateSpaceTooLarge { size: u64, cap: u64 },
    #[error("variable `{0}` must be endogenous and binary")]
    NonBinaryVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error("probabilities are not multiples of a common power of two")]
    InexactJoint,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exogenous {
    pub name: String,
    /// Probability of each level `0..probs.len()`.
    pub probs: Vec<f64>,
}

/// Truth table of one endogenous variable.
///
/// Inputs are `parents` followed by `exogenous`; the table is row-major with
/// the last input varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub name: String,
    pub parents: Vec<String>,
    pub exogenous: Vec<String>,
    pub levels: u32,
    pub table: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Input {
    Endo(usize),
    Exo(usize),
}

#[derive(Debug, Clone)]
pub struct ScmSpec {
    exogenous: Vec<Exogenous>,
    endogenous: Vec<Mechanism>,
    graph: CausalGraph,
    seed: Option<u64>,
    order: Vec<usize>,
    inputs: Vec<Vec<(Input, usize)>>,
}

impl PartialEq for ScmSpec {
    fn eq(&self, other: &Self) -> bool {
        self.exogenous == other.exogenous
            && self.endogenous == other.endogenous
            && self.seed == other.seed
    }
}

impl ScmSpec {
    pub fn new(
        exogenous: Vec<Exogenous>,
        endogenous: Vec<Mechanism>,
        seed: Option<u64>,
    ) -> Result<Self, OracleError> {
        let bad = |m: String| OracleError::InvalidSpec(m);
        let mut names = BTreeSet::new();
        let mut exo_index = HashMap::new();
        for (i, u) in exogenous.iter().enumerate() {
            if !names.insert(u.name.as_str()) {
                return Err(bad(format!("duplicate name `{}`", u.name)));
            }
            exo_index.insert(u.name.as_str(), i);
            if u.probs.is_empty() || u.probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(bad(format!("`{}` has an invalid distribution", u.name)));
            }
            let s: f64 = u.probs.iter().copied().collect::<CompensatedSum>().value();
            if (s - 1.0).abs() > 1e-12 {
                return Err(bad(format!("`{}` probabilities sum to {s}", u.name)));
            }
        }
        let mut endo_index = HashMap::new();
        for (i, m) in endogenous.iter().enumerate() {
            if !names.insert(m.name.as_str()) {
                return Err(bad(format!("duplicate name `{}`", m.name)));
            }
            endo_index.insert(m.name.as_str(), i);
            if m.levels == 0 {
                return Err(bad(format!("`{}` has no levels", m.name)));
            }
        }

        let mut inputs = Vec::with_capacity(endogenous.len());
        for m in &endogenous {
            let mut ins = Vec::new();
            for p in &m.parents {
                let &i = endo_index
                    .get(p.as_str())
                    .ok_or_else(|| OracleError::UnknownVariable(p.clone()))?;
                ins.push((Input::Endo(i), endogenous[i].levels as usize));
            }
            for u in &m.exogenous {
                let &i = exo_index
                    .get(u.as_str())
                    .ok_or_else(|| OracleError::UnknownVariable(u.clone()))?;
                ins.push((Input::Exo(i), exogenous[i].probs.len()));
            }
            let size: usize = ins.iter().map(|&(_, card)| card).product();
            if m.table.len() != size {
                return Err(bad(format!(
                    "`{}` table has {} entries, inputs need {size}",
                    m.name,
                    m.table.len()
                )));
            }
            if let Some(v) = m.table.iter().find(|&&v| v >= m.levels) {
                return Err(bad(format!("`{}` table outputs {v}, has {} levels", m.name, m.levels)));
            }
            inputs.push(ins);
        }

        let graph = CausalGraph::new(
            endogenous.iter().map(|m| m.name.clone()),
            endogenous
                .iter()
                .flat_map(|m| m.parents.iter().map(move |p| (p.clone(), m.name.clone()))),
        )?;
        let order = graph
            .topological_order()
            .iter()
            .map(|n| endo_index[n.as_str()])
            .collect();
        Ok(ScmSpec {
            exogenous,
            endogenous,
            graph,
            seed,
            order,
            inputs,
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn exogenous(&self) -> &[Exogenous] {
        &self.exogenous
    }

    pub fn endogenous(&self) -> &[Mechanism] {
        &self.endogenous
    }

    pub fn endogenous_names(&self) -> Vec<&str> {
        self.endogenous.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn endogenous_index(&self, name: &str) -> Result<usize, OracleError> {
        self.endogenous
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| OracleError::UnknownVariable(name.to_string()))
    }

    /// Endogenous variables other than `x` and `y`.
    pub fn covariates(&self, x: &str, y: &str) -> Vec<String> {
        self.endogenous
            .iter()
            .map(|m| m.name.clone())
            .filter(|n| n != x && n != y)
            .collect()
    }

    /// True when no exogenous variable feeds two mechanisms, so the induced
    /// graph alone licenses backdoor reasoning.
    pub fn is_markovian(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.endogenous
            .iter()
            .flat_map(|m| m.exogenous.iter())
            .all(|u| seen.insert(u))
    }

    /// Number of joint exogenous assignments.
    pub fn state_count(&self) -> u64 {
        self.exogenous
            .iter()
            .map(|u| u.probs.len() as u64)
            .try_fold(1u64, |acc, k| acc.checked_mul(k))
            .unwrap_or(u64::MAX)
    }

    /// Decode the `index`-th exogenous assignment (last variable fastest)
    /// and its probability.
    pub fn exogenous_state(&self, mut index: u64) -> (Vec<u32>, f64) {
        let mut u = vec![0u32; self.exogenous.len()];
        let mut p = 1.0;
        for (i, e) in self.exogenous.iter().enumerate().rev() {
            let k = e.probs.len() as u64;
            u[i] = (index % k) as u32;
            index /= k;
            p *= e.probs[u[i] as usize];
        }
        (u, p)
    }

    /// Values of every endogenous variable under exogenous assignment `u`,
    /// optionally with one variable forced to a level.
    pub fn evaluate(&self, u: &[u32], intervention: Option<(usize, u32)>) -> Vec<u32> {
        let mut v = vec![0u32; self.endogenous.len()];
        for &i in &self.order {
            if let Some((target, level)) = intervention {
                if target == i {
                    v[i] = level;
                    continue;
                }
            }
            let mut idx = 0usize;
            for &(input, card) in &self.inputs[i] {
                let val = match input {
                    Input::Endo(j) => v[j],
                    Input::Exo(j) => u[j],
                } as usize;
                idx = idx * card + val;
            }
            v[i] = self.endogenous[i].table[idx];
        }
        v
    }

    fn binary_index(&self, name: &str) -> Result<usize, OracleError> {
        let i = self
            .endogenous_index(name)
            .map_err(|_| OracleError::NonBinaryVariable(name.to_string()))?;
        if self.endogenous[i].levels != 2 {
            return Err(OracleError::NonBinaryVariable(name.to_string()));
        }
        Ok(i)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ScmDocument::from_spec(self)).expect("model serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, OracleError> {
        let doc: ScmDocument =
            toml::from_str(text).map_err(|e| OracleError::InvalidSpec(e.to_string()))?;
        doc.into_spec()
    }
}

/// One cell of the counterfactual joint: factual values of every endogenous
/// variable together with `Y` under `do(X=1)` and `do(X=0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualCell {
    pub factual: Vec<u32>,
    pub y_treated: u32,
    pub y_control: u32,
    pub prob: f64,
}

/// Exact quantities for the pair `(X, Y)` with `x = 1`, `y = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualProfile {
    pub x: String,
    pub y: String,
    pub variables: Vec<String>,
    /// `P(Y_{X=1} = 1)`
    pub p_yx: f64,
    /// `P(Y_{X=0} = 1)`
    pub p_yxp: f64,
    /// `P(Y_{X=1} = 1, Y_{X=0} = 0)`
    pub exact_pns: f64,
    /// Observational joint of all endogenous variables.
    pub observational: BTreeMap<Vec<u32>, f64>,
    pub cells: Vec<CounterfactualCell>,
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerationOptions {
    pub state_cap: u64,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

pub fn enumerate_counterfactuals(m: &ScmSpec, x: &str, y: &str) -> Result<CounterfactualProfile, OracleError> {
    enumerate_counterfactuals_with(m, x, y, EnumerationOptions::default())
}

pub fn enumerate_counterfactuals_with(
    m: &ScmSpec,
    x: &str,
    y: &str,
    opts: EnumerationOptions,
) -> Result<CounterfactualProfile, OracleError> {
    let xi = m.binary_index(x)?;
    let yi = m.binary_index(y)?;
    if xi == yi {
        return Err(OracleError::InvalidSpec("treatment and outcome coincide".into()));
    }
    let size = m.state_count();
    if size > opts.state_cap {
        return Err(OracleError::StateSpaceTooLarge {
            size,
            cap: opts.state_cap,
        });
    }

    type Key = (Vec<u32>, u32, u32);
    let n_chunks = size.div_ceil(CHUNK);
    let partials: Vec<BTreeMap<Key, f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc: BTreeMap<Key, f64> = BTreeMap::new();
            for idx in c * CHUNK..((c + 1) * CHUNK).min(size) {
                let (u, p) = m.exogenous_state(idx);
                if p == 0.0 {
                    continue;
                }
                let factual = m.evaluate(&u, None);
                let treated = m.evaluate(&u, Some((xi, 1)))[yi];
                let control = m.evaluate(&u, Some((xi, 0)))[yi];
                *acc.entry((factual, treated, control)).or_insert(0.0) += p;
            }
            acc
        })
        .collect();
    let mut merged: BTreeMap<Key, f64> = BTreeMap::new();
    for part in partials {
        for (k, p) in part {
            *merged.entry(k).or_insert(0.0) += p;
        }
    }

    let mut p_yx = CompensatedSum::new();
    let mut p_yxp = CompensatedSum::new();
    let mut pns = CompensatedSum::new();
    let mut observational: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let mut cells = Vec::with_capacity(merged.len());
    for ((factual, treated, control), p) in merged {
        if treated == 1 {
            p_yx.add(p);
        }
        if control == 1 {
            p_yxp.add(p);
        }
        if treated == 1 && control == 0 {
            pns.add(p);
        }
        *observational.entry(factual.clone()).or_insert(0.0) += p;
        cells.push(CounterfactualCell {
            factual,
            y_treated: treated,
            y_control: control,
            prob: p,
        });
    }
    Ok(CounterfactualProfile {
        x: x.to_string(),
        y: y.to_string(),
        variables: m.endogenous_names().iter().map(|s| s.to_string()).collect(),
        p_yx: p_yx.value(),
        p_yxp: p_yxp.value(),
        exact_pns: pns.value(),
        observational,
        cells,
    })
}

impl CounterfactualProfile {
    fn index(&self, name: &str) -> Result<usize, OracleError> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| OracleError::UnknownVariable(name.to_string()))
    }

    fn xy_index(&self) -> (usize, usize) {
        (self.index(&self.x).unwrap(), self.index(&self.y).unwrap())
    }

    /// Population quantities for the bounds, exactly.
    pub fn quantities(&self) -> CausalQuantities {
        let strata = self.stratum_quantities(&[]).expect("no covariates");
        strata[0].quantities
    }

    /// Exact per-stratum quantities for covariates `z` (conditional on the
    /// factual value of `z`). Strata with zero probability are omitted.
    pub fn stratum_quantities(&self, z: &[&str]) -> Result<Vec<StratumQuantities>, OracleError> {
        let zi: Vec<usize> = z.iter().map(|v| self.index(v)).collect::<Result<_, _>>()?;
        let (xi, yi) = self.xy_index();
        #[derive(Default)]
        struct Acc {
            weight: f64,
            treated: f64,
            control: f64,
            cells: [f64; 4],
        }
        let mut acc: BTreeMap<Vec<u32>, Acc> = BTreeMap::new();
        for c in &self.cells {
            let key: Vec<u32> = zi.iter().map(|&i| c.factual[i]).collect();
            let a = acc.entry(key).or_default();
            a.weight += c.prob;
            if c.y_treated == 1 {
                a.treated += c.prob;
            }
            if c.y_control == 1 {
                a.control += c.prob;
            }
            let (xv, yv) = (c.factual[xi], c.factual[yi]);
            let slot = match (xv, yv) {
                (1, 1) => 0,
                (1, 0) => 1,
                (0, 1) => 2,
                _ => 3,
            };
            a.cells[slot] += c.prob;
        }
        Ok(acc
            .into_iter()
            .filter(|(_, a)| a.weight > 0.0)
            .map(|(key, a)| {
                let w = a.weight;
                let label = z
                    .iter()
                    .zip(&key)
                    .fold(Event::new(), |e, (v, &l)| e.with(*v, l as i64));
                StratumQuantities {
                    z_label: label,
                    weight: w,
                    quantities: CausalQuantities::new(
                        a.treated / w,
                        a.control / w,
                        JointCells {
                            xy: a.cells[0] / w,
                            xy_not: a.cells[1] / w,
                            x_not_y: a.cells[2] / w,
                            x_not_y_not: a.cells[3] / w,
                        },
                    ),
                }
            })
            .collect())
    }

    /// Observational marginal over `vars`.
    pub fn marginal(&self, vars: &[&str]) -> Result<BTreeMap<Vec<u32>, f64>, OracleError> {
        let idx: Vec<usize> = vars.iter().map(|v| self.index(v)).collect::<Result<_, _>>()?;
        let mut out = BTreeMap::new();
        for (cell, &p) in &self.observational {
            *out.entry(idx.iter().map(|&i| cell[i]).collect()).or_insert(0.0) += p;
        }
        Ok(out)
    }

    /// The observational joint over `vars` as integer counts, exact when all
    /// cell probabilities share a power-of-two denominator of at most 2^52.
    pub fn joint_table(&self, vars: &[&str], levels: &[u32]) -> Result<JointTable, OracleError> {
        let marginal = self.marginal(vars)?;
        let bits = (0..=52)
            .find(|&b| {
                let scale = (1u64 << b) as f64;
                marginal.values().all(|&p| (p * scale).fract() == 0.0)
            })
            .ok_or(OracleError::InexactJoint)?;
        let scale = (1u64 << bits) as f64;
        JointTable::from_counts(
            vars.iter().map(|v| v.to_string()).collect(),
            levels.iter().map(|&k| (0..k as i64).collect()).collect(),
            marginal
                .into_iter()
                .map(|(cell, p)| (cell.into_iter().map(i64::from).collect(), (p * scale) as u64)),
        )
        .map_err(|e| OracleError::InvalidSpec(e.to_string()))
    }
}

/// `n` i.i.d. draws of every endogenous variable from the observational
/// distribution. Deterministic in `seed`.
pub fn sample(m: &ScmSpec, n: usize, seed: u64) -> DiscreteDataset {
    sample_stream(m, n, seed, 0)
}

/// As [`sample`], drawing from an independent stream of the same seed.
pub fn sample_stream(m: &ScmSpec, n: usize, seed: u64, stream: u64) -> DiscreteDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let cumulative: Vec<Vec<f64>> = m
        .exogenous
        .iter()
        .map(|u| {
            u.probs
                .iter()
                .scan(0.0, |acc, &p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let mut columns = vec![Vec::with_capacity(n); m.endogenous.len()];
    let mut u = vec![0u32; m.exogenous.len()];
    for _ in 0..n {
        for (slot, cum) in u.iter_mut().zip(&cumulative) {
            let r: f64 = rng.random();
            *slot = cum
                .iter()
                .position(|&c| r < c)
                .unwrap_or(cum.len() - 1) as u32;
        }
        for (col, v) in columns.iter_mut().zip(m.evaluate(&u, None)) {
            col.push(v as i64);
        }
    }
    let variables = m
        .endogenous
        .iter()
        .map(|e| DiscreteVariable {
            name: e.name.clone(),
            levels: (0..e.levels as i64).collect(),
        })
        .collect();
    let mut d = DiscreteDataset::new(variables, columns).expect("sampled levels are declared");
    d.set_meta("rng", RNG_ALGORITHM);
    d.set_meta("seed", seed.to_string());
    d.set_meta("stream", stream.to_string());
    d
}

/// Role of the covariates in a generated model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariateRole {
    /// Each covariate causes both treatment and outcome.
    #[default]
    Confounder,
    /// Each covariate causes only the outcome.
    OutcomeOnly,
    /// Each covariate independently picks confounder, outcome-only or
    /// treatment-only.
    Mixed,
}

/// Denominator of the generated exogenous probabilities.
const PROB_DENOMINATOR: u32 = 16;

fn dyadic_distribution(rng: &mut ChaCha8Rng, levels: usize) -> Vec<f64> {
    // `levels - 1` distinct cut points in 1..16 give weights >= 1/16.
    let mut cuts = BTreeSet::new();
    while cuts.len() < levels - 1 {
        cuts.insert(rng.random_range(1..PROB_DENOMINATOR));
    }
    let mut prev = 0;
    let mut out = Vec::with_capacity(levels);
    for c in cuts.into_iter().chain([PROB_DENOMINATOR]) {
        out.push((c - prev) as f64 / PROB_DENOMINATOR as f64);
        prev = c;
    }
    out
}

/// Random binary model `Z1..Zk -> X -> Y` in which every covariate is a
/// non-descendant of `X`.
///
/// Exogenous probabilities are multiples of 1/16, so every enumerated
/// probability is exact in binary64. `X` takes both values in every
/// covariate stratum (positivity holds).
pub fn random_scm(n_covariates: usize, seed: u64, role: CovariateRole) -> Result<ScmSpec, OracleError> {
    if n_covariates > 4 {
        return Err(OracleError::InvalidSpec(format!(
            "at most 4 covariates supported, got {n_covariates}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exogenous = Vec::new();
    let mut endogenous = Vec::new();
    let mut x_parents = Vec::new();
    let mut y_parents = vec!["X".to_string()];

    for i in 1..=n_covariates {
        let name = format!("Z{i}");
        let u = format!("U_{name}");
        exogenous.push(Exogenous {
            name: u.clone(),
            probs: dyadic_distribution(&mut rng, 2),
        });
        let parents: Vec<String> = (1..i)
            .filter(|_| rng.random_bool(0.3))
            .map(|j| format!("Z{j}"))
            .collect();
        let rows = 1usize << parents.len();
        let mut table: Vec<u32> = (0..rows * 2).map(|_| rng.random_range(0..2)).collect();
        if table.iter().all(|&v| v == table[0]) {
            table[1] ^= 1;
        }
        endogenous.push(Mechanism {
            name: name.clone(),
            parents,
            exogenous: vec![u],
            levels: 2,
            table,
        });
        let r = match role {
            CovariateRole::Confounder => 0,
            CovariateRole::OutcomeOnly => 1,
            CovariateRole::Mixed => rng.random_range(0..3),
        };
        if r != 1 {
            x_parents.push(name.clone());
        }
        if r != 2 {
            y_parents.push(name);
        }
    }

    exogenous.push(Exogenous {
        name: "U_X".into(),
        probs: dyadic_distribution(&mut rng, 3),
    });
    let mut x_table = Vec::with_capacity(3 << x_parents.len());
    for _ in 0..1usize << x_parents.len() {
        x_table.extend([0, 1, rng.random_range(0..2)]);
    }
    endogenous.push(Mechanism {
        name: "X".into(),
        parents: x_parents,
        exogenous: vec!["U_X".into()],
        levels: 2,
        table: x_table,
    });

    exogenous.push(Exogenous {
        name: "U_Y".into(),
        probs: dyadic_distribution(&mut rng, 4),
    });
    let y_rows = 1usize << y_parents.len();
    endogenous.push(Mechanism {
        name: "Y".into(),
        table: (0..y_rows * 4).map(|_| rng.random_range(0..2)).collect(),
        parents: y_parents,
        exogenous: vec!["U_Y".into()],
        levels: 2,
    });
    ScmSpec::new(exogenous, endogenous, Some(seed))
}

#[derive(Serialize, Deserialize)]
struct ScmDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    exogenous: Vec<Exogenous>,
    mechanisms: Vec<MechanismDocument>,
}

#[derive(Serialize, Deserialize)]
struct MechanismDocument {
    name: String,
    #[serde(default)]
    parents: Vec<String>,
    #[serde(default)]
    exogenous: Vec<String>,
    levels: u32,
    /// Each row lists the input values followed by the output.
    rows: Vec<Vec<u32>>,
}

impl ScmDocument {
    fn from_spec(m: &ScmSpec) -> Self {
        let mechanisms = m
            .endogenous
            .iter()
            .zip(&m.inputs)
            .map(|(mech, inputs)| {
                let cards: Vec<usize> = inputs.iter().map(|&(_, c)| c).collect();
                let rows = mech
                    .table
                    .iter()
                    .enumerate()
                    .map(|(idx, &out)| {
                        let mut row = vec![0u32; cards.len()];
                        let mut rest = idx;
                        for (slot, &c) in row.iter_mut().zip(&cards).rev() {
                            *slot = (rest % c) as u32;
                            rest /= c;
                        }
                        row.push(out);
                        row
                    })
                    .collect();
                MechanismDocument {
                    name: mech.name.clone(),
                    parents: mech.parents.clone(),
                    exogenous: mech.exogenous.clone(),
                    levels: mech.levels,
                    rows,
                }
            })
            .collect();
        ScmDocument {
            seed: m.seed,
            exogenous: m.exogenous.clone(),
            mechanisms,
        }
    }

    fn into_spec(self) -> Result<ScmSpec, OracleError> {
        let exo_card: HashMap<&str, usize> = self
            .exogenous
            .iter()
            .map(|u| (u.name.as_str(), u.probs.len()))
            .collect();
        let endo_card: HashMap<&str, usize> = self
            .mechanisms
            .iter()
            .map(|m| (m.name.as_str(), m.levels as usize))
            .collect();
        let mut endogenous = Vec::with_capacity(self.mechanisms.len());
        for m in &self.mechanisms {
            let mut cards = Vec::new();
            for p in &m.parents {
                cards.push(
                    *endo_card
                        .get(p.as_str())
                        .ok_or_else(|| OracleError::UnknownVariable(p.clone()))?,
                );
            }
            for u in &m.exogenous {
                cards.push(
                    *exo_card
                        .get(u.as_str())
                        .ok_or_else(|| OracleError::UnknownVariable(u.clone()))?,
                );
            }
            let size: usize = cards.iter().product();
            let mut table = vec![None; size];
            for row in &m.rows {
                if row.len() != cards.len() + 1 {
                    return Err(OracleError::InvalidSpec(format!(
                        "`{}` row {row:?} needs {} inputs and an output",
                        m.name,
                        cards.len()
                    )));
                }
                let mut idx = 0usize;
                for (&v, &c) in row.iter().zip(&cards) {
                    if v as usize >= c {
                        return Err(OracleError::InvalidSpec(format!(
                            "`{}` row {row:?} has an input out of range",
                            m.name
                        )));
                    }
                    idx = idx * c + v as usize;
                }
                if table[idx].replace(row[cards.len()]).is_some() {
                    return Err(OracleError::InvalidSpec(format!(
                        "`{}` row {row:?} repeats an input assignment",
                        m.name
                    )));
                }
            }
            let table = table
                .into_iter()
                .collect::<Option<Vec<u32>>>()
                .ok_or_else(|| OracleError::InvalidSpec(format!("`{}` truth table is not total", m.name)))?;
            endogenous.push(Mechanism {
                name: m.name.clone(),
                parents: m.parents.clone(),
                exogenous: m.exogenous.clone(),
                levels: m.levels,
                table,
            });
        }
        ScmSpec::new(self.exogenous, endogenous, self.seed)
    }
}
