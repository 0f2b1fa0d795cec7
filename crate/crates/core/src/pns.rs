//! Bounds on the probability of necessity and sufficiency,
//! `PNS = P(y_x, y'_{x'})`.
//!
//! Three bound families are provided:
//!
//! - [`pns_bounds_tp`]: population bounds from `P(y_x)`, `P(y_{x'})` and the
//!   observational joint of `(X, Y)`.
//! - [`pns_bounds_thm1`]: the same max/min terms evaluated within each stratum
//!   of a covariate set containing no descendant of `X`, then averaged with
//!   weights `P(z)`.
//! - [`pns_bounds_thm2`]: observational bounds when the covariates satisfy the
//!   backdoor criterion, needing only `P(y | x, z)`, `P(y | x', z)` and `P(z)`.
//!
//! Every interval records which max/min argument was active in each stratum.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{DatasetError, DiscreteDataset};
use crate::estimate::{self, tabulate, DoEstimate, EstimateError, Event, JointTable};
use crate::graph::{CausalGraph, GraphError, NodeSet};
use crate::numeric::{clamp_unit, CompensatedSum};

/// Tolerance for probability-vector invariants.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnsError {
    #[error("invalid quantities: {0}")]
    InvalidQuantities(String),
    #[error("stratum weights sum to {sum}, expected 1")]
    WeightMismatch { sum: f64 },
    #[error("no admissible adjustment set: {0}")]
    NoAdmissibleSet(String),
    #[error("positivity violation: stratum {stratum} has no rows with {treatment}")]
    PositivityViolation { stratum: String, treatment: String },
    #[error(transparent)]
    Estimate(EstimateError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl From<EstimateError> for PnsError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::PositivityViolation { stratum, treatment } => {
                PnsError::PositivityViolation { stratum, treatment }
            }
            other => PnsError::Estimate(other),
        }
    }
}

/// The four observational cells `P(x,y)`, `P(x,y')`, `P(x',y)`, `P(x',y')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointCells {
    pub xy: f64,
    pub xy_not: f64,
    pub x_not_y: f64,
    pub x_not_y_not: f64,
}

impl JointCells {
    pub fn sum(&self) -> f64 {
        CompensatedSum::from_iter([self.xy, self.xy_not, self.x_not_y, self.x_not_y_not]).value()
    }
}

/// Inputs to the population bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CausalQuantities {
    /// `P(y_x)`
    pub p_yx: f64,
    /// `P(y_{x'})`
    pub p_yxp: f64,
    pub joint: JointCells,
    /// `P(y)`
    pub p_y: f64,
}

impl CausalQuantities {
    /// Quantities with `P(y)` derived from the joint cells.
    pub fn new(p_yx: f64, p_yxp: f64, joint: JointCells) -> Self {
        CausalQuantities {
            p_yx,
            p_yxp,
            joint,
            p_y: joint.xy + joint.x_not_y,
        }
    }

    pub fn validate(&self) -> Result<(), PnsError> {
        let named = [
            ("P(y_x)", self.p_yx),
            ("P(y_x')", self.p_yxp),
            ("P(x,y)", self.joint.xy),
            ("P(x,y')", self.joint.xy_not),
            ("P(x',y)", self.joint.x_not_y),
            ("P(x',y')", self.joint.x_not_y_not),
            ("P(y)", self.p_y),
        ];
        for (name, v) in named {
            if !(v.is_finite() && (-TOLERANCE..=1.0 + TOLERANCE).contains(&v)) {
                return Err(PnsError::InvalidQuantities(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        let s = self.joint.sum();
        if (s - 1.0).abs() > TOLERANCE {
            return Err(PnsError::InvalidQuantities(format!(
                "joint cells sum to {s}, expected 1"
            )));
        }
        let py = self.joint.xy + self.joint.x_not_y;
        if (py - self.p_y).abs() > TOLERANCE {
            return Err(PnsError::InvalidQuantities(format!(
                "P(y) = {} but P(x,y) + P(x',y) = {py}",
                self.p_y
            )));
        }
        Ok(())
    }

    /// Exchange the roles of `(x, x')` and `(y, y')`. The bounds of the
    /// swapped quantities bound `P(y'_{x'}, y_x)`.
    pub fn swapped(&self) -> Self {
        CausalQuantities::new(
            1.0 - self.p_yxp,
            1.0 - self.p_yx,
            JointCells {
                xy: self.joint.x_not_y_not,
                xy_not: self.joint.x_not_y,
                x_not_y: self.joint.xy_not,
                x_not_y_not: self.joint.xy,
            },
        )
    }
}

/// Quantities for one covariate stratum `z`, all conditional on `z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumQuantities {
    pub z_label: Event,
    /// `P(z)`
    pub weight: f64,
    pub quantities: CausalQuantities,
}

/// Which bound formula produced an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum BoundMethod {
    #[serde(rename = "tp")]
    Population,
    #[serde(rename = "thm1")]
    Covariate,
    #[serde(rename = "thm2")]
    BackdoorCovariate,
}

impl BoundMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            BoundMethod::Population => "tp",
            BoundMethod::Covariate => "thm1",
            BoundMethod::BackdoorCovariate => "thm2",
        }
    }
}

impl fmt::Display for BoundMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One argument of a bound's max (lower) or min (upper).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundTerm {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "P(y_x)-P(y_x')")]
    EffectDifference,
    #[serde(rename = "P(y)-P(y_x')")]
    OutcomeOverControl,
    #[serde(rename = "P(y_x)-P(y)")]
    TreatedOverOutcome,
    #[serde(rename = "P(y_x)")]
    TreatedResponse,
    #[serde(rename = "P(y'_x')")]
    ControlNonResponse,
    #[serde(rename = "P(x,y)+P(x',y')")]
    ObservedAgreement,
    #[serde(rename = "P(y_x)-P(y_x')+P(x,y')+P(x',y)")]
    EffectPlusDisagreement,
    #[serde(rename = "P(y|x,z)-P(y|x',z)")]
    StratumEffect,
    #[serde(rename = "P(y|x,z)")]
    StratumTreated,
    #[serde(rename = "P(y'|x',z)")]
    StratumControlNon,
}

impl fmt::Display for BoundTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("term serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// The active max/min argument within one stratum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumBinding {
    pub stratum: Event,
    pub weight: f64,
    pub lower_term: BoundTerm,
    pub lower_value: f64,
    pub upper_term: BoundTerm,
    pub upper_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PnsInterval {
    pub lower: f64,
    pub upper: f64,
    pub method: BoundMethod,
    pub binding: Vec<StratumBinding>,
}

impl PnsInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, p: f64, tol: f64) -> bool {
        p >= self.lower - tol && p <= self.upper + tol
    }
}

const TP_LOWER: [BoundTerm; 4] = [
    BoundTerm::Zero,
    BoundTerm::EffectDifference,
    BoundTerm::OutcomeOverControl,
    BoundTerm::TreatedOverOutcome,
];
const TP_UPPER: [BoundTerm; 4] = [
    BoundTerm::TreatedResponse,
    BoundTerm::ControlNonResponse,
    BoundTerm::ObservedAgreement,
    BoundTerm::EffectPlusDisagreement,
];

fn tp_terms(q: &CausalQuantities) -> ([f64; 4], [f64; 4]) {
    let j = &q.joint;
    (
        [0.0, q.p_yx - q.p_yxp, q.p_y - q.p_yxp, q.p_yx - q.p_y],
        [
            q.p_yx,
            1.0 - q.p_yxp,
            j.xy + j.x_not_y_not,
            q.p_yx - q.p_yxp + j.xy_not + j.x_not_y,
        ],
    )
}

/// Index and value of the first maximal element.
fn arg_max(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, v[0]), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
}

/// Index and value of the first minimal element.
fn arg_min(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, v[0]), |best, (i, &x)| if x < best.1 { (i, x) } else { best })
}

fn finish(
    lower: f64,
    upper: f64,
    method: BoundMethod,
    binding: Vec<StratumBinding>,
) -> Result<PnsInterval, PnsError> {
    let (lower, upper) = (clamp_unit(lower), clamp_unit(upper));
    if lower > upper + TOLERANCE {
        return Err(PnsError::InvalidQuantities(format!(
            "lower bound {lower} exceeds upper bound {upper}: experimental and observational inputs are incompatible"
        )));
    }
    Ok(PnsInterval {
        lower: lower.min(upper),
        upper,
        method,
        binding,
    })
}

/// Population bounds from interventional and observational quantities.
pub fn pns_bounds_tp(q: &CausalQuantities) -> Result<PnsInterval, PnsError> {
    q.validate()?;
    let (lo, up) = tp_terms(q);
    let (li, lv) = arg_max(&lo);
    let (ui, uv) = arg_min(&up);
    finish(
        lv,
        uv,
        BoundMethod::Population,
        vec![StratumBinding {
            stratum: Event::new(),
            weight: 1.0,
            lower_term: TP_LOWER[li],
            lower_value: lv,
            upper_term: TP_UPPER[ui],
            upper_value: uv,
        }],
    )
}

fn check_weights<'a>(weights: impl Iterator<Item = &'a f64>) -> Result<(), PnsError> {
    let mut acc = CompensatedSum::new();
    for &w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(PnsError::WeightMismatch { sum: w });
        }
        acc.add(w);
    }
    let sum = acc.value();
    if (sum - 1.0).abs() > TOLERANCE {
        return Err(PnsError::WeightMismatch { sum });
    }
    Ok(())
}

/// Covariate-stratified bounds for strata of a set containing no descendant
/// of the treatment. Strata with zero weight are skipped.
pub fn pns_bounds_thm1(strata: &[StratumQuantities]) -> Result<PnsInterval, PnsError> {
    check_weights(strata.iter().map(|s| &s.weight))?;
    let mut lower = CompensatedSum::new();
    let mut upper = CompensatedSum::new();
    let mut binding = Vec::with_capacity(strata.len());
    for s in strata {
        s.quantities.validate()?;
        if s.weight == 0.0 {
            continue;
        }
        let (lo, up) = tp_terms(&s.quantities);
        let (li, lv) = arg_max(&lo);
        let (ui, uv) = arg_min(&up);
        lower.add(lv * s.weight);
        upper.add(uv * s.weight);
        binding.push(StratumBinding {
            stratum: s.z_label.clone(),
            weight: s.weight,
            lower_term: TP_LOWER[li],
            lower_value: lv,
            upper_term: TP_UPPER[ui],
            upper_value: uv,
        });
    }
    finish(lower.value(), upper.value(), BoundMethod::Covariate, binding)
}

/// Treatment and outcome of a bounds query: single binary variables.
#[derive(Debug, Clone, PartialEq)]
struct BinaryQuery {
    x_var: String,
    x: i64,
    x_not: i64,
    y_var: String,
    y: i64,
    y_not: i64,
}

impl BinaryQuery {
    fn new(t: &JointTable, x: &Event, y: &Event) -> Result<Self, PnsError> {
        let (xv, xl) = x
            .sole()
            .ok_or_else(|| PnsError::InvalidQuantities(format!("treatment {x} must name one variable")))?;
        let (yv, yl) = y
            .sole()
            .ok_or_else(|| PnsError::InvalidQuantities(format!("outcome {y} must name one variable")))?;
        if xv == yv {
            return Err(EstimateError::Overlap(xv.to_string()).into());
        }
        Ok(BinaryQuery {
            x_not: t.complement(xv, xl)?,
            y_not: t.complement(yv, yl)?,
            x_var: xv.to_string(),
            x: xl,
            y_var: yv.to_string(),
            y: yl,
        })
    }

    fn x_event(&self, level: i64) -> Event {
        Event::single(&self.x_var, level)
    }

    fn y_event(&self, level: i64) -> Event {
        Event::single(&self.y_var, level)
    }
}

/// Per-stratum counts of the four `(x, y)` cells.
struct StratumCounts {
    z: Event,
    n_z: u64,
    xy: u64,
    xy_not: u64,
    x_not_y: u64,
    x_not_y_not: u64,
}

impl StratumCounts {
    fn n_x(&self) -> u64 {
        self.xy + self.xy_not
    }

    fn n_x_not(&self) -> u64 {
        self.x_not_y + self.x_not_y_not
    }
}

fn stratum_counts(t: &JointTable, q: &BinaryQuery, adjust: &[&str]) -> Result<Vec<StratumCounts>, PnsError> {
    for z in adjust {
        if *z == q.x_var || *z == q.y_var {
            return Err(EstimateError::Overlap(z.to_string()).into());
        }
    }
    let cell = |z: &Event, xl: i64, yl: i64| -> Result<u64, PnsError> {
        Ok(t.count(&z.and(&q.x_event(xl))?.and(&q.y_event(yl))?)?)
    };
    t.strata(adjust)?
        .into_iter()
        .map(|(z, n_z)| {
            let c = StratumCounts {
                xy: cell(&z, q.x, q.y)?,
                xy_not: cell(&z, q.x, q.y_not)?,
                x_not_y: cell(&z, q.x_not, q.y)?,
                x_not_y_not: cell(&z, q.x_not, q.y_not)?,
                z,
                n_z,
            };
            for (n, level) in [(c.n_x(), q.x), (c.n_x_not(), q.x_not)] {
                if n == 0 {
                    return Err(PnsError::PositivityViolation {
                        stratum: c.z.to_string(),
                        treatment: q.x_event(level).to_string(),
                    });
                }
            }
            Ok(c)
        })
        .collect()
}

/// Observational bounds under a backdoor-admissible adjustment set.
pub fn pns_bounds_thm2(t: &JointTable, x: &Event, y: &Event, adjust: &[&str]) -> Result<PnsInterval, PnsError> {
    let q = BinaryQuery::new(t, x, y)?;
    let total = t.total() as f64;
    let mut lower = CompensatedSum::new();
    let mut upper = CompensatedSum::new();
    let mut binding = Vec::new();
    for s in stratum_counts(t, &q, adjust)? {
        let weight = s.n_z as f64 / total;
        let treated = s.xy as f64 / s.n_x() as f64;
        let control = s.x_not_y as f64 / s.n_x_not() as f64;
        let control_non = s.x_not_y_not as f64 / s.n_x_not() as f64;
        let (li, lv) = arg_max(&[0.0, treated - control]);
        let (ui, uv) = arg_min(&[treated, control_non]);
        lower.add(lv * weight);
        upper.add(uv * weight);
        binding.push(StratumBinding {
            stratum: s.z,
            weight,
            lower_term: [BoundTerm::Zero, BoundTerm::StratumEffect][li],
            lower_value: lv,
            upper_term: [BoundTerm::StratumTreated, BoundTerm::StratumControlNon][ui],
            upper_value: uv,
        });
    }
    finish(lower.value(), upper.value(), BoundMethod::BackdoorCovariate, binding)
}

/// Per-stratum quantities under the backdoor assumption, where
/// `P(y_x | z) = P(y | x, z)`.
pub fn backdoor_strata(
    t: &JointTable,
    x: &Event,
    y: &Event,
    adjust: &[&str],
) -> Result<Vec<StratumQuantities>, PnsError> {
    let q = BinaryQuery::new(t, x, y)?;
    let total = t.total() as f64;
    stratum_counts(t, &q, adjust)?
        .into_iter()
        .map(|s| {
            let n = s.n_z as f64;
            let joint = JointCells {
                xy: s.xy as f64 / n,
                xy_not: s.xy_not as f64 / n,
                x_not_y: s.x_not_y as f64 / n,
                x_not_y_not: s.x_not_y_not as f64 / n,
            };
            Ok(StratumQuantities {
                weight: n / total,
                quantities: CausalQuantities::new(
                    s.xy as f64 / s.n_x() as f64,
                    s.x_not_y as f64 / s.n_x_not() as f64,
                    joint,
                ),
                z_label: s.z,
            })
        })
        .collect()
}

/// Population quantities with interventional terms from the adjustment
/// formula. Returns them with both do-estimates.
pub fn adjusted_quantities(
    t: &JointTable,
    x: &Event,
    y: &Event,
    adjust: &[&str],
) -> Result<(CausalQuantities, DoEstimate, DoEstimate), PnsError> {
    let q = BinaryQuery::new(t, x, y)?;
    let treated = estimate::do_adjust(t, &q.x_event(q.x), y, adjust)?;
    let control = estimate::do_adjust(t, &q.x_event(q.x_not), y, adjust)?;
    let total = t.total() as f64;
    let cell = |xl: i64, yl: i64| -> Result<f64, PnsError> {
        Ok(t.count(&q.x_event(xl).and(&q.y_event(yl))?)? as f64 / total)
    };
    let joint = JointCells {
        xy: cell(q.x, q.y)?,
        xy_not: cell(q.x, q.y_not)?,
        x_not_y: cell(q.x_not, q.y)?,
        x_not_y_not: cell(q.x_not, q.y_not)?,
    };
    Ok((
        CausalQuantities::new(treated.value, control.value, joint),
        treated,
        control,
    ))
}

/// How [`pns_report`] picks the adjustment set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdjustmentPolicy {
    /// Use exactly these variables, admissible or not.
    Explicit(Vec<String>),
    /// First minimal backdoor set (by size, then name) up to the given size.
    FirstMinimal { max_size: usize },
    /// First minimal set for the main report, plus thm2 bounds for every
    /// other minimal set.
    AllMinimal { max_size: usize },
}

impl Default for AdjustmentPolicy {
    fn default() -> Self {
        AdjustmentPolicy::FirstMinimal { max_size: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlternativeBounds {
    pub adjustment: NodeSet,
    pub n_used: usize,
    pub thm2: PnsInterval,
}

/// Full provenance of a bounds computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PnsReport {
    pub treatment: Event,
    pub outcome: Event,
    pub adjustment: NodeSet,
    /// Whether the adjustment set passes the backdoor criterion in the graph.
    pub admissible: bool,
    pub n_used: usize,
    /// Rows removed because a variable of this analysis was missing.
    pub n_dropped: usize,
    pub quantities: CausalQuantities,
    pub do_treated: DoEstimate,
    pub do_control: DoEstimate,
    pub tp: PnsInterval,
    pub thm1: PnsInterval,
    pub thm2: PnsInterval,
    pub alternatives: Vec<AlternativeBounds>,
}

impl PnsReport {
    pub fn interval(&self, method: BoundMethod) -> &PnsInterval {
        match method {
            BoundMethod::Population => &self.tp,
            BoundMethod::Covariate => &self.thm1,
            BoundMethod::BackdoorCovariate => &self.thm2,
        }
    }
}

/// Identify an adjustment set in `graph`, estimate, and bound PNS.
pub fn pns_report(
    data: &DiscreteDataset,
    graph: &CausalGraph,
    x: &Event,
    y: &Event,
    policy: &AdjustmentPolicy,
) -> Result<PnsReport, PnsError> {
    let (xv, _) = x
        .sole()
        .ok_or_else(|| PnsError::InvalidQuantities(format!("treatment {x} must name one variable")))?;
    let (yv, _) = y
        .sole()
        .ok_or_else(|| PnsError::InvalidQuantities(format!("outcome {y} must name one variable")))?;
    for v in [xv, yv] {
        if !graph.contains(v) {
            return Err(PnsError::NoAdmissibleSet(format!("`{v}` is not a node of the graph")));
        }
    }

    let (chosen, others) = match policy {
        AdjustmentPolicy::Explicit(vars) => (vars.iter().cloned().collect::<NodeSet>(), Vec::new()),
        AdjustmentPolicy::FirstMinimal { max_size } | AdjustmentPolicy::AllMinimal { max_size } => {
            let mut sets = graph.find_backdoor_sets(xv, yv, *max_size)?.into_iter();
            let first = sets.next().ok_or_else(|| {
                PnsError::NoAdmissibleSet(format!(
                    "no backdoor set of size <= {max_size} for {xv} -> {yv}"
                ))
            })?;
            let rest = if matches!(policy, AdjustmentPolicy::AllMinimal { .. }) {
                sets.collect()
            } else {
                Vec::new()
            };
            (first, rest)
        }
    };
    let admissible = graph.satisfies_backdoor(xv, yv, &chosen).unwrap_or(false);
    if !admissible {
        log::warn!("adjustment set {chosen} does not satisfy the backdoor criterion for {xv} -> {yv}");
    }

    let (t, n_used, n_dropped) = analysis_table(data, xv, yv, &chosen)?;
    let z: Vec<String> = chosen.to_vec();
    let z_refs: Vec<&str> = z.iter().map(String::as_str).collect();
    let (quantities, do_treated, do_control) = adjusted_quantities(&t, x, y, &z_refs)?;
    let tp = pns_bounds_tp(&quantities)?;
    let thm1 = pns_bounds_thm1(&backdoor_strata(&t, x, y, &z_refs)?)?;
    let thm2 = pns_bounds_thm2(&t, x, y, &z_refs)?;

    let mut alternatives = Vec::with_capacity(others.len());
    for set in others {
        let (t, n_used, _) = analysis_table(data, xv, yv, &set)?;
        let vars = set.to_vec();
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        alternatives.push(AlternativeBounds {
            thm2: pns_bounds_thm2(&t, x, y, &refs)?,
            adjustment: set,
            n_used,
        });
    }

    Ok(PnsReport {
        treatment: x.clone(),
        outcome: y.clone(),
        adjustment: chosen,
        admissible,
        n_used,
        n_dropped,
        quantities,
        do_treated,
        do_control,
        tp,
        thm1,
        thm2,
        alternatives,
    })
}

/// Complete-case table over `x`, `y` and the adjustment set.
pub(crate) fn analysis_table(
    data: &DiscreteDataset,
    x: &str,
    y: &str,
    adjust: &NodeSet,
) -> Result<(JointTable, usize, usize), PnsError> {
    let mut vars: Vec<&str> = vec![x, y];
    vars.extend(adjust.iter());
    let (complete, dropped) = data.complete_cases(&vars)?;
    if complete.n() == 0 {
        return Err(EstimateError::EmptyTable.into());
    }
    Ok((tabulate(&complete, &vars)?, complete.n(), dropped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str) -> Event {
        s.parse().unwrap()
    }

    fn q(p_yx: f64, p_yxp: f64, cells: [f64; 4]) -> CausalQuantities {
        CausalQuantities::new(
            p_yx,
            p_yxp,
            JointCells {
                xy: cells[0],
                xy_not: cells[1],
                x_not_y: cells[2],
                x_not_y_not: cells[3],
            },
        )
    }

    #[test]
    fn tp_deterministic_effect() {
        let b = pns_bounds_tp(&q(1.0, 0.0, [0.5, 0.0, 0.0, 0.5])).unwrap();
        assert_eq!((b.lower, b.upper), (1.0, 1.0));
        assert_eq!(b.method, BoundMethod::Population);
        assert_eq!(b.binding[0].lower_term, BoundTerm::EffectDifference);
    }

    #[test]
    fn tp_no_information() {
        let b = pns_bounds_tp(&q(0.5, 0.5, [0.25; 4])).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.5));
        assert_eq!(b.binding[0].lower_term, BoundTerm::Zero);
        assert_eq!(b.binding[0].upper_term, BoundTerm::TreatedResponse);
    }

    #[test]
    fn tp_rejects_invalid() {
        let bad = q(1.2, 0.0, [0.5, 0.0, 0.0, 0.5]);
        assert!(matches!(pns_bounds_tp(&bad), Err(PnsError::InvalidQuantities(m)) if m.contains("P(y_x)")));
        let bad = q(0.5, 0.5, [0.3, 0.3, 0.3, 0.3]);
        assert!(matches!(pns_bounds_tp(&bad), Err(PnsError::InvalidQuantities(m)) if m.contains("sum")));
        let mut bad = q(0.5, 0.5, [0.25; 4]);
        bad.p_y = 0.9;
        assert!(matches!(pns_bounds_tp(&bad), Err(PnsError::InvalidQuantities(m)) if m.contains("P(y)")));
        // P(x,y) = 0 yet P(y_x) = 0.9 with P(x) = 0.5 cannot come from one model
        let incompatible = q(0.9, 0.1, [0.0, 0.5, 0.5, 0.0]);
        assert!(pns_bounds_tp(&incompatible).is_err());
    }

    #[test]
    fn thm1_single_stratum_matches_tp() {
        let base = q(0.7, 0.2, [0.3, 0.1, 0.15, 0.45]);
        let tp = pns_bounds_tp(&base).unwrap();
        let t1 = pns_bounds_thm1(&[StratumQuantities {
            z_label: Event::new(),
            weight: 1.0,
            quantities: base,
        }])
        .unwrap();
        assert_eq!(tp.lower.to_bits(), t1.lower.to_bits());
        assert_eq!(tp.upper.to_bits(), t1.upper.to_bits());
    }

    #[test]
    fn thm1_two_deterministic_strata() {
        let s = |z: i64, w: f64| StratumQuantities {
            z_label: Event::single("Z", z),
            weight: w,
            quantities: q(1.0, 0.0, [0.4, 0.0, 0.0, 0.6]),
        };
        let b = pns_bounds_thm1(&[s(0, 0.3), s(1, 0.7)]).unwrap();
        assert_eq!((b.lower, b.upper), (1.0, 1.0));
        assert_eq!(b.binding.len(), 2);
    }

    #[test]
    fn thm1_weight_checks() {
        let s = |w: f64| StratumQuantities {
            z_label: Event::new(),
            weight: w,
            quantities: q(0.5, 0.5, [0.25; 4]),
        };
        assert!(matches!(
            pns_bounds_thm1(&[s(0.5), s(0.4)]),
            Err(PnsError::WeightMismatch { .. })
        ));
        assert!(matches!(
            pns_bounds_thm1(&[s(1.5), s(-0.5)]),
            Err(PnsError::WeightMismatch { .. })
        ));
        // zero-weight strata are skipped
        let b = pns_bounds_thm1(&[s(1.0), s(0.0)]).unwrap();
        assert_eq!(b.binding.len(), 1);
    }

    fn xy_table(counts: [(i64, i64, u64); 4]) -> JointTable {
        JointTable::from_counts(
            vec!["X".into(), "Y".into()],
            vec![vec![0, 1], vec![0, 1]],
            counts.map(|(x, y, c)| (vec![x, y], c)),
        )
        .unwrap()
    }

    #[test]
    fn thm2_no_covariates() {
        // P(y|x) = 0.8, P(y|x') = 0.3
        let t = xy_table([(1, 1, 8), (1, 0, 2), (0, 1, 3), (0, 0, 7)]);
        let b = pns_bounds_thm2(&t, &ev("X=1"), &ev("Y=1"), &[]).unwrap();
        assert!((b.lower - 0.5).abs() < 1e-15);
        assert!((b.upper - 0.7).abs() < 1e-15);
        assert_eq!(b.binding[0].upper_term, BoundTerm::StratumControlNon);
    }

    #[test]
    fn thm2_zero_effect_lower_is_zero() {
        let t = xy_table([(1, 1, 4), (1, 0, 6), (0, 1, 8), (0, 0, 12)]);
        let b = pns_bounds_thm2(&t, &ev("X=1"), &ev("Y=1"), &[]).unwrap();
        assert_eq!(b.lower, 0.0);
    }

    #[test]
    fn thm2_222_table() {
        let t = crate::estimate::tests::table_222();
        let b = pns_bounds_thm2(&t, &ev("X=1"), &ev("Y=1"), &["Z"]).unwrap();
        let lower = 0.6 * (0.5 - 0.25) + 0.4 * (20.0 / 30.0 - 0.5);
        assert!((b.lower - lower).abs() < 1e-15);
        assert_eq!(format!("{:.4}", b.lower), "0.2167");
        assert!((b.upper - 0.5).abs() < 1e-15);

        // thm1 on the backdoor strata can only be tighter
        let t1 = pns_bounds_thm1(&backdoor_strata(&t, &ev("X=1"), &ev("Y=1"), &["Z"]).unwrap()).unwrap();
        assert!(t1.lower >= b.lower - 1e-15 && t1.upper <= b.upper + 1e-15);
    }

    #[test]
    fn thm2_positivity() {
        let t = JointTable::from_counts(
            vec!["Z".into(), "X".into(), "Y".into()],
            vec![vec![0, 1]; 3],
            [(vec![0, 0, 1], 3), (vec![0, 1, 1], 2), (vec![1, 1, 0], 4)],
        )
        .unwrap();
        match pns_bounds_thm2(&t, &ev("X=1"), &ev("Y=1"), &["Z"]) {
            Err(PnsError::PositivityViolation { stratum, treatment }) => {
                assert_eq!((stratum.as_str(), treatment.as_str()), ("Z=1", "X=0"))
            }
            other => panic!("expected positivity violation, got {other:?}"),
        }
    }

    #[test]
    fn swap_is_an_involution() {
        let base = q(0.7, 0.2, [0.3, 0.1, 0.15, 0.45]);
        let back = base.swapped().swapped();
        assert!((back.p_yx - base.p_yx).abs() < 1e-15);
        assert!((back.p_y - base.p_y).abs() < 1e-15);
        assert!(base.swapped().validate().is_ok());
    }

    fn diet_data() -> (DiscreteDataset, CausalGraph) {
        // rows expanded from the 2x2x2 table with Diabetes as the stratum
        let mut cols = (Vec::new(), Vec::new(), Vec::new());
        let t = crate::estimate::tests::table_222();
        for (cell, c) in t.cells() {
            for _ in 0..c {
                cols.0.push(cell[0]);
                cols.1.push(cell[1]);
                cols.2.push(cell[2]);
            }
        }
        let d = DiscreteDataset::from_columns(vec![
            ("Diabetes", cols.0),
            ("DietCoke", cols.1),
            ("Fatness", cols.2),
        ])
        .unwrap();
        let g = CausalGraph::new(
            ["Diabetes", "DietCoke", "Fatness"],
            [
                ("Diabetes", "DietCoke"),
                ("Diabetes", "Fatness"),
                ("DietCoke", "Fatness"),
            ],
        )
        .unwrap();
        (d, g)
    }

    #[test]
    fn report_auto_selects_adjustment() {
        let (d, g) = diet_data();
        let r = pns_report(&d, &g, &ev("DietCoke=1"), &ev("Fatness=1"), &AdjustmentPolicy::default()).unwrap();
        assert_eq!(r.adjustment, ["Diabetes"].into_iter().collect());
        assert!(r.admissible);
        assert_eq!(r.n_used, 100);
        assert!((r.do_treated.value - (0.3 + 0.4 * 20.0 / 30.0)).abs() < 1e-15);
        assert!((r.thm2.lower - (0.15 + 0.4 * (20.0 / 30.0 - 0.5))).abs() < 1e-15);
        assert!(r.thm1.lower >= r.thm2.lower - 1e-15);
    }

    #[test]
    fn report_explicit_override() {
        let (d, g) = diet_data();
        let r = pns_report(
            &d,
            &g,
            &ev("DietCoke=1"),
            &ev("Fatness=1"),
            &AdjustmentPolicy::Explicit(vec![]),
        )
        .unwrap();
        assert!(r.adjustment.is_empty());
        assert!(!r.admissible);
    }

    #[test]
    fn report_missing_treatment_node() {
        let (d, _) = diet_data();
        let g = CausalGraph::new(["Diabetes", "Fatness"], [("Diabetes", "Fatness")]).unwrap();
        assert!(matches!(
            pns_report(&d, &g, &ev("DietCoke=1"), &ev("Fatness=1"), &AdjustmentPolicy::default()),
            Err(PnsError::NoAdmissibleSet(_))
        ));
    }
}
