//! Contingency tables, conditional relative frequencies and the backdoor
//! adjustment formula.
//!
//! Estimates are plug-in maximum-likelihood frequencies. Additive smoothing
//! is opt-in through [`AdjustOptions`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{DiscreteDataset, MISSING_LEVEL};
use crate::numeric::CompensatedSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{variable}` has {count} missing cells; select complete cases first")]
    MissingValues { variable: String, count: usize },
    #[error("level {level} is not declared for `{variable}`")]
    InvalidLevel { variable: String, level: i64 },
    #[error("variable `{0}` appears in more than one role")]
    Overlap(String),
    #[error("conditioning event {0} has no support")]
    EmptyCondition(String),
    #[error("positivity violation: stratum {stratum} has no rows with {treatment}")]
    PositivityViolation { stratum: String, treatment: String },
    #[error("variable `{variable}` must be binary, has levels {levels:?}")]
    NonBinary { variable: String, levels: Vec<i64> },
    #[error("table is empty")]
    EmptyTable,
    #[error("cannot parse event `{0}`; expected `VAR=LEVEL[,VAR=LEVEL]`")]
    BadEvent(String),
}

/// A partial assignment of levels to variables.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Event(BTreeMap<String, i64>);

impl Event {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(var: impl Into<String>, level: i64) -> Self {
        let mut e = Event::new();
        e.0.insert(var.into(), level);
        e
    }

    pub fn with(mut self, var: impl Into<String>, level: i64) -> Self {
        self.0.insert(var.into(), level);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, var: &str) -> Option<i64> {
        self.0.get(var).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Union of two events over disjoint variables.
    pub fn and(&self, other: &Event) -> Result<Event, EstimateError> {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            if out.0.insert(k.to_string(), v).is_some() {
                return Err(EstimateError::Overlap(k.to_string()));
            }
        }
        Ok(out)
    }

    /// The single variable of a one-variable event.
    pub fn sole(&self) -> Option<(&str, i64)> {
        (self.0.len() == 1).then(|| self.iter().next().unwrap())
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "{{}}");
        }
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl FromStr for Event {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut e = Event::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| EstimateError::BadEvent(s.to_string()))?;
            let level: i64 = v
                .trim()
                .parse()
                .map_err(|_| EstimateError::BadEvent(s.to_string()))?;
            let k = k.trim();
            if k.is_empty() || e.0.insert(k.to_string(), level).is_some() {
                return Err(EstimateError::BadEvent(s.to_string()));
            }
        }
        Ok(e)
    }
}

/// Joint count table over a list of discrete variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointTable {
    variables: Vec<String>,
    levels: Vec<Vec<i64>>,
    counts: BTreeMap<Vec<i64>, u64>,
    total: u64,
}

impl JointTable {
    /// Table from explicit cell counts. Zero cells are dropped.
    pub fn from_counts(
        variables: Vec<String>,
        levels: Vec<Vec<i64>>,
        counts: impl IntoIterator<Item = (Vec<i64>, u64)>,
    ) -> Result<Self, EstimateError> {
        let mut seen = BTreeSet::new();
        for v in &variables {
            if !seen.insert(v) {
                return Err(EstimateError::Overlap(v.clone()));
            }
        }
        let mut map = BTreeMap::new();
        let mut total = 0u64;
        for (cell, c) in counts {
            if cell.len() != variables.len() {
                return Err(EstimateError::BadEvent(format!("{cell:?}")));
            }
            for ((var, lv), &l) in variables.iter().zip(&levels).zip(&cell) {
                if lv.binary_search(&l).is_err() {
                    return Err(EstimateError::InvalidLevel {
                        variable: var.clone(),
                        level: l,
                    });
                }
            }
            if c > 0 {
                *map.entry(cell).or_insert(0) += c;
                total += c;
            }
        }
        if total == 0 {
            return Err(EstimateError::EmptyTable);
        }
        Ok(JointTable {
            variables,
            levels,
            counts: map,
            total,
        })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn levels(&self, var: &str) -> Result<&[i64], EstimateError> {
        Ok(&self.levels[self.position(var)?])
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cells(&self) -> impl Iterator<Item = (&[i64], u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    fn position(&self, var: &str) -> Result<usize, EstimateError> {
        self.variables
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| EstimateError::UnknownVariable(var.to_string()))
    }

    fn check_event(&self, e: &Event) -> Result<Vec<(usize, i64)>, EstimateError> {
        e.iter()
            .map(|(var, level)| {
                let p = self.position(var)?;
                if self.levels[p].binary_search(&level).is_err() {
                    return Err(EstimateError::InvalidLevel {
                        variable: var.to_string(),
                        level,
                    });
                }
                Ok((p, level))
            })
            .collect()
    }

    /// Number of observations consistent with `e`.
    pub fn count(&self, e: &Event) -> Result<u64, EstimateError> {
        let pattern = self.check_event(e)?;
        Ok(self
            .counts
            .iter()
            .filter(|(cell, _)| pattern.iter().all(|&(p, l)| cell[p] == l))
            .map(|(_, &c)| c)
            .sum())
    }

    /// Marginal table over `vars` (in the given order).
    pub fn marginalize(&self, vars: &[&str]) -> Result<JointTable, EstimateError> {
        let pos: Vec<usize> = vars.iter().map(|v| self.position(v)).collect::<Result<_, _>>()?;
        let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
        for (cell, &c) in &self.counts {
            *counts.entry(pos.iter().map(|&p| cell[p]).collect()).or_insert(0) += c;
        }
        JointTable::from_counts(
            vars.iter().map(|v| v.to_string()).collect(),
            pos.iter().map(|&p| self.levels[p].clone()).collect(),
            counts,
        )
    }

    /// The other level of a binary variable.
    pub fn complement(&self, var: &str, level: i64) -> Result<i64, EstimateError> {
        let levels = self.levels(var)?;
        if levels.len() != 2 {
            return Err(EstimateError::NonBinary {
                variable: var.to_string(),
                levels: levels.to_vec(),
            });
        }
        match levels.iter().position(|&l| l == level) {
            Some(i) => Ok(levels[1 - i]),
            None => Err(EstimateError::InvalidLevel {
                variable: var.to_string(),
                level,
            }),
        }
    }

    /// Non-empty strata of `vars`, in ascending level order, with counts.
    pub fn strata(&self, vars: &[&str]) -> Result<Vec<(Event, u64)>, EstimateError> {
        if vars.is_empty() {
            return Ok(vec![(Event::new(), self.total)]);
        }
        let m = self.marginalize(vars)?;
        Ok(m.counts
            .iter()
            .map(|(cell, &c)| {
                let e = vars
                    .iter()
                    .zip(cell)
                    .fold(Event::new(), |e, (v, &l)| e.with(*v, l));
                (e, c)
            })
            .collect())
    }
}

/// Exact count table over `vars`.
pub fn tabulate(d: &DiscreteDataset, vars: &[&str]) -> Result<JointTable, EstimateError> {
    let mut cols = Vec::with_capacity(vars.len());
    let mut levels = Vec::with_capacity(vars.len());
    for v in vars {
        let col = d
            .column(v)
            .map_err(|_| EstimateError::UnknownVariable(v.to_string()))?;
        let missing = col.iter().filter(|&&c| c == MISSING_LEVEL).count();
        if missing > 0 {
            return Err(EstimateError::MissingValues {
                variable: v.to_string(),
                count: missing,
            });
        }
        cols.push(col);
        levels.push(d.variable(v).expect("column exists").levels.clone());
    }
    let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
    for r in 0..d.n() {
        *counts.entry(cols.iter().map(|c| c[r]).collect()).or_insert(0) += 1;
    }
    JointTable::from_counts(vars.iter().map(|v| v.to_string()).collect(), levels, counts)
}

/// A conditional frequency and the size of its conditioning set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub support: u64,
}

/// `P(event | given)` as a relative frequency.
pub fn prob(t: &JointTable, event: &Event, given: &Event) -> Result<Estimate, EstimateError> {
    let joint = event.and(given)?;
    let support = t.count(given)?;
    if support == 0 {
        return Err(EstimateError::EmptyCondition(given.to_string()));
    }
    let hits = t.count(&joint)?;
    Ok(Estimate {
        value: hits as f64 / support as f64,
        support,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdjustOptions {
    /// Additive smoothing applied to each `P(y | x, z)`; 0 disables it.
    pub alpha: f64,
}

/// Per-stratum terms of an adjustment-formula estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustStratum {
    pub stratum: Event,
    pub n_z: u64,
    pub n_xz: u64,
    pub n_xyz: u64,
    pub weight: f64,
    pub conditional: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoEstimate {
    pub value: f64,
    pub strata: Vec<AdjustStratum>,
}

/// `P(y | do(x)) = Σ_z P(y | x, z) P(z)` over the non-empty strata of `adjust`.
pub fn do_adjust(
    t: &JointTable,
    x: &Event,
    y: &Event,
    adjust: &[&str],
) -> Result<DoEstimate, EstimateError> {
    do_adjust_with(t, x, y, adjust, AdjustOptions::default())
}

pub fn do_adjust_with(
    t: &JointTable,
    x: &Event,
    y: &Event,
    adjust: &[&str],
    opts: AdjustOptions,
) -> Result<DoEstimate, EstimateError> {
    let xy = x.and(y)?;
    for z in adjust {
        if xy.get(z).is_some() {
            return Err(EstimateError::Overlap(z.to_string()));
        }
    }
    t.check_event(&xy)?;
    // number of joint outcomes of y, for smoothing
    let y_cells: f64 = y
        .variables()
        .map(|v| t.levels(v).map(|l| l.len() as f64))
        .product::<Result<f64, _>>()?;

    let total = t.total() as f64;
    let mut acc = CompensatedSum::new();
    let mut strata = Vec::new();
    for (z, n_z) in t.strata(adjust)? {
        let xz = x.and(&z)?;
        let n_xz = t.count(&xz)?;
        let n_xyz = t.count(&xy.and(&z)?)?;
        let conditional = if opts.alpha > 0.0 {
            (n_xyz as f64 + opts.alpha) / (n_xz as f64 + opts.alpha * y_cells)
        } else {
            if n_xz == 0 {
                return Err(EstimateError::PositivityViolation {
                    stratum: z.to_string(),
                    treatment: x.to_string(),
                });
            }
            n_xyz as f64 / n_xz as f64
        };
        let weight = n_z as f64 / total;
        acc.add(conditional * weight);
        strata.push(AdjustStratum {
            stratum: z,
            n_z,
            n_xz,
            n_xyz,
            weight,
            conditional,
        });
    }
    Ok(DoEstimate {
        value: acc.value(),
        strata,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn ev(s: &str) -> Event {
        s.parse().unwrap()
    }

    /// The hand-built 2x2x2 table; cells are (z, x, y).
    pub(crate) fn table_222() -> JointTable {
        JointTable::from_counts(
            vec!["Z".into(), "X".into(), "Y".into()],
            vec![vec![0, 1]; 3],
            [
                (vec![0, 0, 0], 30),
                (vec![0, 0, 1], 10),
                (vec![0, 1, 0], 10),
                (vec![0, 1, 1], 10),
                (vec![1, 0, 0], 5),
                (vec![1, 0, 1], 5),
                (vec![1, 1, 0], 10),
                (vec![1, 1, 1], 20),
            ],
        )
        .unwrap()
    }

    #[test]
    fn event_parse_and_display() {
        let e = ev("Y=1, X=0");
        assert_eq!(e.to_string(), "X=0,Y=1");
        assert!("X".parse::<Event>().is_err());
        assert!("X=1,X=0".parse::<Event>().is_err());
        assert!("".parse::<Event>().unwrap().is_empty());
    }

    #[test]
    fn tabulate_counts() {
        let d = DiscreteDataset::from_columns(vec![("x", vec![1; 4]), ("y", vec![1; 4])]).unwrap();
        let t = tabulate(&d, &["x", "y"]).unwrap();
        assert_eq!(t.count(&ev("x=1,y=1")).unwrap(), 4);
        assert!(matches!(
            tabulate(&d, &["nope"]),
            Err(EstimateError::UnknownVariable(_))
        ));
    }

    #[test]
    fn tabulate_rejects_missing() {
        let d = DiscreteDataset::from_columns(vec![("x", vec![1, MISSING_LEVEL])]).unwrap();
        assert!(matches!(
            tabulate(&d, &["x"]),
            Err(EstimateError::MissingValues { count: 1, .. })
        ));
    }

    #[test]
    fn conditional_frequency() {
        let t = JointTable::from_counts(
            vec!["x".into(), "y".into()],
            vec![vec![0, 1], vec![0, 1]],
            [(vec![1, 1], 3), (vec![1, 0], 1)],
        )
        .unwrap();
        let p = prob(&t, &ev("y=1"), &ev("x=1")).unwrap();
        assert_eq!((p.value, p.support), (0.75, 4));
        assert_eq!(prob(&t, &ev("y=1"), &Event::new()).unwrap().value, 0.75);
        assert_eq!(
            prob(&t, &ev("y=1"), &ev("x=0")),
            Err(EstimateError::EmptyCondition("x=0".into()))
        );
    }

    #[test]
    fn adjustment_222() {
        let t = table_222();
        let d = do_adjust(&t, &ev("X=1"), &ev("Y=1"), &["Z"]).unwrap();
        let expected = 0.6 * 0.5 + 0.4 * (20.0 / 30.0);
        assert!((d.value - expected).abs() < 1e-15);
        assert_eq!(format!("{:.4}", d.value), "0.5667");
        assert_eq!(d.strata.len(), 2);
        assert_eq!((d.strata[1].n_z, d.strata[1].n_xz, d.strata[1].n_xyz), (40, 30, 20));
    }

    #[test]
    fn adjustment_without_covariates_is_conditional() {
        let t = table_222();
        let d = do_adjust(&t, &ev("X=1"), &ev("Y=1"), &[]).unwrap();
        let p = prob(&t, &ev("Y=1"), &ev("X=1")).unwrap();
        assert_eq!(d.value.to_bits(), p.value.to_bits());
    }

    #[test]
    fn positivity_violation_names_stratum() {
        let t = JointTable::from_counts(
            vec!["Z".into(), "X".into(), "Y".into()],
            vec![vec![0, 1]; 3],
            [(vec![0, 0, 1], 3), (vec![0, 1, 1], 2), (vec![1, 0, 0], 4)],
        )
        .unwrap();
        match do_adjust(&t, &ev("X=1"), &ev("Y=1"), &["Z"]) {
            Err(EstimateError::PositivityViolation { stratum, .. }) => assert_eq!(stratum, "Z=1"),
            other => panic!("expected positivity error, got {other:?}"),
        }
        // smoothing makes the empty arm defined
        let s = do_adjust_with(&t, &ev("X=1"), &ev("Y=1"), &["Z"], AdjustOptions { alpha: 1.0 })
            .unwrap();
        assert!(s.value > 0.0 && s.value < 1.0);
    }

    #[test]
    fn complement_requires_binary() {
        let t = table_222();
        assert_eq!(t.complement("X", 1).unwrap(), 0);
        assert!(matches!(
            t.complement("X", 3),
            Err(EstimateError::InvalidLevel { .. })
        ));
    }
}
