//! Subpopulation analysis: constraint filters, the worst-case sample-size
//! rule and per-subgroup do-estimates with backdoor-covariate bounds.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{DatasetError, DiscreteDataset};
use crate::estimate::Event;
use crate::graph::{combinations, CausalGraph, NodeSet};
use crate::numeric::fmt_prob;
use crate::pns::{adjusted_quantities, analysis_table, pns_bounds_thm2, PnsError, PnsInterval};

/// Supported confidence levels and their two-sided normal quantiles.
pub const Z_TABLE: [(f64, f64); 3] = [(0.90, 1.645), (0.95, 1.96), (0.99, 2.576)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubgroupError {
    #[error("margin must lie in (0, 1), got {0}")]
    InvalidMargin(f64),
    #[error("confidence must be one of 0.90, 0.95, 0.99, got {0}")]
    InvalidConfidence(f64),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("subgroup `{name}` constrains `{variable}` more than once")]
    DuplicateVariable { name: String, variable: String },
    #[error("subgroup `{name}` has contradictory constraints on `{variable}`")]
    Contradictory { name: String, variable: String },
    #[error("subgroup `{name}`: level {level} is not declared for `{variable}`")]
    InvalidLevel { name: String, variable: String, level: i64 },
    #[error("cannot parse subgroup `{0}`; expected `[NAME:]VAR=L[|L...][,VAR=L...]`")]
    Parse(String),
    #[error("subgroup `{0}` has no rows")]
    EmptySubgroup(String),
    #[error("subgroup `{subgroup}`: positivity violation: stratum {stratum} has no rows with {treatment}")]
    PositivityViolation {
        subgroup: String,
        stratum: String,
        treatment: String,
    },
    #[error("subgroup `{subgroup}`: {source}")]
    Pns { subgroup: String, source: PnsError },
    #[error("invalid scan: {0}")]
    InvalidScan(String),
}

/// Number of observations that bound the margin of error of a proportion by
/// `margin` at the given confidence, using the worst case `p = 0.5`.
pub fn required_n(margin: f64, confidence: f64) -> Result<u64, SubgroupError> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(SubgroupError::InvalidMargin(margin));
    }
    let z = z_value(confidence)?;
    let n = z * z * 0.25 / (margin * margin);
    // Guard against results like 96.04000000000001 rounding up twice.
    Ok((n - 1e-9).ceil() as u64)
}

/// Margin of error of a proportion at `n` observations, worst case.
pub fn margin_of_error(n: usize, confidence: f64) -> Result<f64, SubgroupError> {
    let z = z_value(confidence)?;
    Ok(if n == 0 {
        f64::INFINITY
    } else {
        z * (0.25 / n as f64).sqrt()
    })
}

fn z_value(confidence: f64) -> Result<f64, SubgroupError> {
    Z_TABLE
        .iter()
        .find(|(c, _)| (c - confidence).abs() < 1e-9)
        .map(|&(_, z)| z)
        .ok_or(SubgroupError::InvalidConfidence(confidence))
}

/// `variable ∈ levels`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Constraint {
    pub variable: String,
    pub levels: Vec<i64>,
}

impl Constraint {
    pub fn new(variable: impl Into<String>, levels: impl IntoIterator<Item = i64>) -> Self {
        let set: BTreeSet<i64> = levels.into_iter().collect();
        Constraint {
            variable: variable.into(),
            levels: set.into_iter().collect(),
        }
    }

    pub fn matches(&self, level: i64) -> bool {
        self.levels.binary_search(&level).is_ok()
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let levels: Vec<String> = self.levels.iter().map(i64::to_string).collect();
        write!(f, "{}={}", self.variable, levels.join("|"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubgroupSpec {
    pub name: String,
    pub constraints: Vec<Constraint>,
}

impl SubgroupSpec {
    /// A validated spec. Constraints are kept in the given order.
    pub fn new(name: impl Into<String>, constraints: Vec<Constraint>) -> Result<Self, SubgroupError> {
        let name = name.into();
        let mut seen: Vec<&Constraint> = Vec::new();
        for c in &constraints {
            if c.levels.is_empty() {
                return Err(SubgroupError::Contradictory {
                    name,
                    variable: c.variable.clone(),
                });
            }
            if let Some(prev) = seen.iter().find(|p| p.variable == c.variable) {
                let overlap = prev.levels.iter().any(|l| c.matches(*l));
                return Err(if overlap {
                    SubgroupError::DuplicateVariable {
                        name,
                        variable: c.variable.clone(),
                    }
                } else {
                    SubgroupError::Contradictory {
                        name,
                        variable: c.variable.clone(),
                    }
                });
            }
            seen.push(c);
        }
        Ok(SubgroupSpec { name, constraints })
    }

    /// The whole population.
    pub fn everyone() -> Self {
        SubgroupSpec {
            name: "All".into(),
            constraints: Vec::new(),
        }
    }

    /// Spec named after its constraints, e.g. `age60=1,man=1`.
    pub fn from_constraints(constraints: Vec<Constraint>) -> Result<Self, SubgroupError> {
        let name = constraints
            .iter()
            .map(Constraint::to_string)
            .collect::<Vec<_>>()
            .join(",");
        Self::new(name, constraints)
    }

    /// Check variables and levels against a dataset schema.
    pub fn validate_against(&self, d: &DiscreteDataset) -> Result<(), SubgroupError> {
        for c in &self.constraints {
            let var = d
                .variable(&c.variable)
                .map_err(|_| SubgroupError::UnknownVariable(c.variable.clone()))?;
            if let Some(&level) = c.levels.iter().find(|l| var.levels.binary_search(l).is_err()) {
                return Err(SubgroupError::InvalidLevel {
                    name: self.name.clone(),
                    variable: c.variable.clone(),
                    level,
                });
            }
        }
        Ok(())
    }
}

impl FromStr for SubgroupSpec {
    type Err = SubgroupError;

    /// `Old_Man:age60=1,man=1` or `age60=1,activity=1|2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SubgroupError::Parse(s.to_string());
        let (name, body) = match s.split_once(':') {
            Some((n, b)) => (Some(n.trim()), b),
            None => (None, s),
        };
        let mut constraints = Vec::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (var, levels) = part.split_once('=').ok_or_else(bad)?;
            let levels: Vec<i64> = levels
                .split('|')
                .map(|l| l.trim().parse().map_err(|_| bad()))
                .collect::<Result<_, _>>()?;
            if var.trim().is_empty() {
                return Err(bad());
            }
            constraints.push(Constraint::new(var.trim(), levels));
        }
        match name {
            Some(n) if !n.is_empty() => SubgroupSpec::new(n, constraints),
            Some(_) => Err(bad()),
            None => SubgroupSpec::from_constraints(constraints),
        }
    }
}

impl fmt::Display for SubgroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Rows matching every constraint. Missing cells never match.
pub fn filter_subgroup(d: &DiscreteDataset, spec: &SubgroupSpec) -> Result<DiscreteDataset, SubgroupError> {
    let mut keep = vec![true; d.n()];
    for c in &spec.constraints {
        let col = d
            .column(&c.variable)
            .map_err(|_| SubgroupError::UnknownVariable(c.variable.clone()))?;
        for (k, &v) in keep.iter_mut().zip(col) {
            *k = *k && c.matches(v);
        }
    }
    Ok(d.select_rows(&keep))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupConfig {
    /// Target margin of error for the size rule.
    pub margin: f64,
    pub confidence: f64,
}

impl Default for SubgroupConfig {
    fn default() -> Self {
        SubgroupConfig {
            margin: 0.05,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupReport {
    pub spec: SubgroupSpec,
    /// Rows in the subgroup with complete `X`, `Y` and adjustment values.
    pub n: usize,
    /// Subgroup rows dropped for missing analysis values.
    pub n_dropped: usize,
    pub adjustment: NodeSet,
    /// Whether the adjustment set passes the backdoor criterion.
    pub admissible: bool,
    pub interval: PnsInterval,
    pub do_x1: f64,
    pub do_x0: f64,
    pub meets_size: bool,
    /// Worst-case margin of error at `n`.
    pub margin: f64,
    pub required_n: u64,
}

fn wrap(subgroup: &str, e: PnsError) -> SubgroupError {
    match e {
        PnsError::PositivityViolation { stratum, treatment } => SubgroupError::PositivityViolation {
            subgroup: subgroup.to_string(),
            stratum,
            treatment,
        },
        source => SubgroupError::Pns {
            subgroup: subgroup.to_string(),
            source,
        },
    }
}

/// Do-estimates and the backdoor-covariate interval within one subgroup.
///
/// The adjustment set is applied inside the subgroup as given. Subgroups
/// below the size rule are reported with `meets_size = false`.
pub fn analyze_subgroup(
    d: &DiscreteDataset,
    spec: &SubgroupSpec,
    graph: &CausalGraph,
    x: &Event,
    y: &Event,
    adjust: &NodeSet,
    config: &SubgroupConfig,
) -> Result<SubgroupReport, SubgroupError> {
    let required = required_n(config.margin, config.confidence)?;
    spec.validate_against(d)?;
    let sub = filter_subgroup(d, spec)?;
    if sub.n() == 0 {
        return Err(SubgroupError::EmptySubgroup(spec.name.clone()));
    }
    let (xv, yv) = match (x.sole(), y.sole()) {
        (Some((xv, _)), Some((yv, _))) => (xv, yv),
        _ => {
            return Err(wrap(
                &spec.name,
                PnsError::InvalidQuantities("treatment and outcome must each name one variable".into()),
            ))
        }
    };
    let admissible = graph.satisfies_backdoor(xv, yv, adjust).unwrap_or(false);
    let (t, n, n_dropped) = analysis_table(&sub, xv, yv, adjust).map_err(|e| wrap(&spec.name, e))?;
    let z = adjust.to_vec();
    let refs: Vec<&str> = z.iter().map(String::as_str).collect();
    let (_, treated, control) = adjusted_quantities(&t, x, y, &refs).map_err(|e| wrap(&spec.name, e))?;
    let interval = pns_bounds_thm2(&t, x, y, &refs).map_err(|e| wrap(&spec.name, e))?;
    Ok(SubgroupReport {
        spec: spec.clone(),
        n,
        n_dropped,
        adjustment: adjust.clone(),
        admissible,
        interval,
        do_x1: treated.value,
        do_x0: control.value,
        meets_size: n as u64 >= required,
        margin: margin_of_error(n, config.confidence)?,
        required_n: required,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanConfig {
    /// Largest number of variables constrained at once.
    pub depth: usize,
    /// Subgroups with fewer matching rows are skipped, not analysed.
    pub min_n: usize,
    pub sizing: SubgroupConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            depth: 1,
            min_n: 0,
            sizing: SubgroupConfig::default(),
        }
    }
}

/// A candidate subgroup that was not analysed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedGroup {
    pub spec: SubgroupSpec,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    /// Sorted by lower bound (descending), then name.
    pub reports: Vec<SubgroupReport>,
    /// In enumeration order.
    pub skipped: Vec<SkippedGroup>,
}

/// Candidate subgroups: for each set of up to `depth` variables (in the
/// given order), every combination of their declared levels.
pub fn enumerate_specs(d: &DiscreteDataset, vars: &[&str], depth: usize) -> Result<Vec<SubgroupSpec>, SubgroupError> {
    let mut levels = Vec::with_capacity(vars.len());
    for v in vars {
        let var = d
            .variable(v)
            .map_err(|_| SubgroupError::UnknownVariable(v.to_string()))?;
        levels.push(var.levels.clone());
    }
    let distinct: BTreeSet<&&str> = vars.iter().collect();
    if distinct.len() != vars.len() {
        return Err(SubgroupError::InvalidScan("candidate variables repeat".into()));
    }
    let mut out = Vec::new();
    for k in 1..=depth.min(vars.len()) {
        for combo in combinations(vars.len(), k) {
            let mut assignment = vec![0usize; k];
            'levels: loop {
                let constraints = combo
                    .iter()
                    .zip(&assignment)
                    .map(|(&vi, &li)| Constraint::new(vars[vi], [levels[vi][li]]))
                    .collect();
                out.push(SubgroupSpec::from_constraints(constraints)?);
                for pos in (0..k).rev() {
                    assignment[pos] += 1;
                    if assignment[pos] < levels[combo[pos]].len() {
                        continue 'levels;
                    }
                    assignment[pos] = 0;
                }
                break;
            }
        }
    }
    Ok(out)
}

/// Analyse every candidate subgroup over `vars` up to the configured depth.
///
/// Groups under `min_n` rows and groups whose analysis fails (for example a
/// positivity violation) are listed in `skipped` with the reason.
#[allow(clippy::too_many_arguments)]
pub fn scan_subgroups(
    d: &DiscreteDataset,
    vars: &[&str],
    graph: &CausalGraph,
    x: &Event,
    y: &Event,
    adjust: &NodeSet,
    config: &ScanConfig,
) -> Result<ScanResult, SubgroupError> {
    required_n(config.sizing.margin, config.sizing.confidence)?;
    for v in vars {
        if x.get(v).is_some() || y.get(v).is_some() {
            return Err(SubgroupError::InvalidScan(format!(
                "`{v}` is the treatment or outcome"
            )));
        }
    }
    let specs = enumerate_specs(d, vars, config.depth)?;
    let outcomes: Vec<Result<SubgroupReport, SkippedGroup>> = specs
        .par_iter()
        .map(|spec| {
            let n = filter_subgroup(d, spec).map(|s| s.n()).unwrap_or(0);
            if n < config.min_n.max(1) {
                return Err(SkippedGroup {
                    spec: spec.clone(),
                    n,
                    reason: format!("{n} rows, floor is {}", config.min_n.max(1)),
                });
            }
            analyze_subgroup(d, spec, graph, x, y, adjust, &config.sizing).map_err(|e| SkippedGroup {
                spec: spec.clone(),
                n,
                reason: e.to_string(),
            })
        })
        .collect();
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => reports.push(r),
            Err(s) => skipped.push(s),
        }
    }
    sort_reports(&mut reports);
    Ok(ScanResult { reports, skipped })
}

/// Lower bound descending, ties by name.
pub fn sort_reports(reports: &mut [SubgroupReport]) {
    reports.sort_by(|a, b| {
        b.interval
            .lower
            .total_cmp(&a.interval.lower)
            .then_with(|| a.spec.name.cmp(&b.spec.name))
    });
}

/// Aligned text table in the style `Subpopulation | Bounds of PNS`.
pub fn render_table(reports: &[SubgroupReport]) -> String {
    let header = ["Subpopulation", "Bounds of PNS", "n", "do(x)", "do(x')", "size"];
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            [
                r.spec.name.clone(),
                format!("[{}, {}]", fmt_prob(r.interval.lower), fmt_prob(r.interval.upper)),
                r.n.to_string(),
                fmt_prob(r.do_x1),
                fmt_prob(r.do_x0),
                if r.meets_size { "ok".into() } else { format!("< {}", r.required_n) },
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header.map(String::from));
    out.push('\n');
    out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

impl From<DatasetError> for SubgroupError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::UnknownVariable(v) => SubgroupError::UnknownVariable(v),
            other => SubgroupError::InvalidScan(other.to_string()),
        }
    }
}
