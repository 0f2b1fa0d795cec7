//! Threshold and code-map recoding of raw survey columns into binary
//! analysis variables.
//!
//! Rules are read from TOML:
//!
//! ```toml
//! passthrough = ["RIAGENDR"]
//!
//! [[rule]]
//! target = "Y"
//! source = "BMXBMI"
//! op = "ge"
//! value = 30.0
//!
//! [[rule]]
//! target = "hyperlipidemia"
//! missing = "keep"
//! any = [
//!   { source = "LBXTC", op = "gt", value = 240.0 },
//!   { source = "LBDLDL", op = "ge", value = 160.0 },
//! ]
//! ```
//!
//! A rule with several conditions (`any`) is 1 when at least one known
//! condition holds, 0 when every condition is known and false, and missing
//! otherwise.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use super::{
    Cell, DatasetError, DiscreteDataset, DiscreteVariable, RawTable, MISSING_LEVEL,
    NHANES_MISSING_CODES,
};

#[derive(Debug, Clone, PartialEq)]
pub enum RecodeOp {
    Ge(f64),
    Gt(f64),
    Le(f64),
    Lt(f64),
    /// 1 when the value is in the set, 0 otherwise.
    In(Vec<f64>),
    /// Explicit code → level table; codes outside it are an error.
    Map(Vec<(f64, i64)>),
}

impl RecodeOp {
    fn apply(&self, v: f64) -> Option<i64> {
        let b = |c: bool| Some(c as i64);
        match self {
            RecodeOp::Ge(t) => b(v >= *t),
            RecodeOp::Gt(t) => b(v > *t),
            RecodeOp::Le(t) => b(v <= *t),
            RecodeOp::Lt(t) => b(v < *t),
            RecodeOp::In(set) => b(set.contains(&v)),
            RecodeOp::Map(pairs) => pairs.iter().find(|(k, _)| *k == v).map(|&(_, l)| l),
        }
    }

    fn is_coded(&self) -> bool {
        matches!(self, RecodeOp::In(_) | RecodeOp::Map(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub source: String,
    pub op: RecodeOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Rows whose target is missing are removed.
    #[default]
    Drop,
    /// The target keeps [`MISSING_LEVEL`]; analyses drop such rows only when
    /// they use the variable.
    Keep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecodeRule {
    pub target: String,
    /// Disjunction when more than one.
    pub conditions: Vec<Condition>,
    pub missing_policy: MissingPolicy,
    /// Raw values treated as missing for this rule's sources.
    pub missing_codes: Vec<f64>,
}

impl RecodeRule {
    /// Single-source rule. Coded ops (`in`, `map`) default to the NHANES
    /// refused/don't-know codes; threshold ops only treat empty cells as
    /// missing.
    pub fn new(target: impl Into<String>, source: impl Into<String>, op: RecodeOp) -> Self {
        let missing_codes = if op.is_coded() {
            NHANES_MISSING_CODES.to_vec()
        } else {
            Vec::new()
        };
        RecodeRule {
            target: target.into(),
            conditions: vec![Condition {
                source: source.into(),
                op,
            }],
            missing_policy: MissingPolicy::Drop,
            missing_codes,
        }
    }

    pub fn any_of(target: impl Into<String>, conditions: Vec<Condition>) -> Self {
        RecodeRule {
            target: target.into(),
            conditions,
            missing_policy: MissingPolicy::Drop,
            missing_codes: Vec::new(),
        }
    }

    pub fn with_policy(mut self, policy: MissingPolicy) -> Self {
        self.missing_policy = policy;
        self
    }

    pub fn with_missing_codes(mut self, codes: Vec<f64>) -> Self {
        self.missing_codes = codes;
        self
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |message: &str| DatasetError::InvalidRule {
            target: self.target.clone(),
            message: message.to_string(),
        };
        if self.conditions.is_empty() {
            return Err(bad("no conditions"));
        }
        for c in &self.conditions {
            if let RecodeOp::Map(pairs) = &c.op {
                if self.conditions.len() > 1 {
                    return Err(bad("`map` cannot be combined with other conditions"));
                }
                if pairs.iter().any(|&(_, l)| l != 0 && l != 1) {
                    return Err(bad("`map` targets must be 0 or 1"));
                }
                let codes: BTreeSet<u64> = pairs.iter().map(|(k, _)| k.to_bits()).collect();
                if codes.len() != pairs.len() {
                    return Err(bad("`map` lists a code twice"));
                }
                if pairs.iter().any(|(k, _)| self.missing_codes.contains(k)) {
                    return Err(bad("`map` code is also a missing code"));
                }
            }
        }
        Ok(())
    }
}

/// Rules plus the raw integer-coded columns copied through unchanged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecodeConfig {
    pub rules: Vec<RecodeRule>,
    pub passthrough: Vec<String>,
}

/// Bookkeeping returned next to a recoded dataset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecodeReport {
    pub input_rows: usize,
    pub dropped_rows: usize,
    /// Rows whose value was missing, per target (before any drop).
    pub missing_by_target: BTreeMap<String, usize>,
}

/// Recode `t` into a discrete dataset holding the rule targets (in rule
/// order) followed by the passthrough columns.
pub fn apply_recode(
    t: &RawTable,
    config: &RecodeConfig,
) -> Result<(DiscreteDataset, RecodeReport), DatasetError> {
    let mut targets = BTreeSet::new();
    for r in &config.rules {
        r.validate()?;
        if !targets.insert(r.target.as_str()) {
            return Err(DatasetError::InvalidRule {
                target: r.target.clone(),
                message: "target defined twice".into(),
            });
        }
    }
    for p in &config.passthrough {
        if !targets.insert(p.as_str()) {
            return Err(DatasetError::InvalidRule {
                target: p.clone(),
                message: "passthrough column clashes with a target".into(),
            });
        }
    }

    // Resolve columns up front so unknown sources fail before any work.
    let rule_cols: Vec<Vec<usize>> = config
        .rules
        .iter()
        .map(|r| {
            r.conditions
                .iter()
                .map(|c| t.column_index(&c.source))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    let pass_cols: Vec<usize> = config
        .passthrough
        .iter()
        .map(|p| t.column_index(p))
        .collect::<Result<_, _>>()?;

    let n_out = config.rules.len() + pass_cols.len();
    let mut columns: Vec<Vec<i64>> = vec![Vec::with_capacity(t.n_rows()); n_out];
    let mut report = RecodeReport {
        input_rows: t.n_rows(),
        ..Default::default()
    };

    for row in &t.rows {
        let mut values = Vec::with_capacity(n_out);
        let mut drop = false;
        for (rule, cols) in config.rules.iter().zip(&rule_cols) {
            let v = recode_cell(t, row, rule, cols)?;
            if v.is_none() {
                *report
                    .missing_by_target
                    .entry(rule.target.clone())
                    .or_default() += 1;
                drop |= rule.missing_policy == MissingPolicy::Drop;
            }
            values.push(v.unwrap_or(MISSING_LEVEL));
        }
        for (&c, name) in pass_cols.iter().zip(&config.passthrough) {
            let cell = &row[c];
            let v = if t.schema[c].is_missing(cell) {
                *report.missing_by_target.entry(name.clone()).or_default() += 1;
                MISSING_LEVEL
            } else {
                match cell {
                    Cell::Num(v) if v.fract() == 0.0 && *v != MISSING_LEVEL as f64 => *v as i64,
                    other => {
                        return Err(DatasetError::UnmappedValue {
                            variable: name.clone(),
                            target: name.clone(),
                            value: other.to_string(),
                        })
                    }
                }
            };
            values.push(v);
        }
        if drop {
            report.dropped_rows += 1;
            continue;
        }
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    if t.n_rows() > 0 && report.dropped_rows == t.n_rows() {
        return Err(DatasetError::EmptyDataset);
    }

    let variables = config
        .rules
        .iter()
        .map(|r| r.target.clone())
        .chain(config.passthrough.iter().cloned())
        .zip(&columns)
        .enumerate()
        .map(|(i, (name, col))| {
            let levels: BTreeSet<i64> = if i < config.rules.len() {
                [0, 1].into()
            } else {
                col.iter().copied().filter(|&c| c != MISSING_LEVEL).collect()
            };
            DiscreteVariable {
                name,
                levels: levels.into_iter().collect(),
            }
        })
        .collect();
    Ok((DiscreteDataset::new(variables, columns)?, report))
}

fn recode_cell(
    t: &RawTable,
    row: &[Cell],
    rule: &RecodeRule,
    cols: &[usize],
) -> Result<Option<i64>, DatasetError> {
    let mut any_true = false;
    let mut any_missing = false;
    for (cond, &c) in rule.conditions.iter().zip(cols) {
        let cell = &row[c];
        let missing = t.schema[c].is_missing(cell)
            || matches!(cell, Cell::Num(v) if rule.missing_codes.contains(v));
        if missing {
            any_missing = true;
            continue;
        }
        let unmapped = || DatasetError::UnmappedValue {
            variable: cond.source.clone(),
            target: rule.target.clone(),
            value: cell.to_string(),
        };
        let v = cell.as_f64().ok_or_else(unmapped)?;
        if v.is_nan() {
            return Err(unmapped());
        }
        if cond.op.apply(v).ok_or_else(unmapped)? == 1 {
            any_true = true;
        }
    }
    Ok(if any_true {
        Some(1)
    } else if any_missing {
        None
    } else {
        Some(0)
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    #[serde(default)]
    passthrough: Vec<String>,
    #[serde(default)]
    rule: Vec<RuleDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    target: String,
    source: Option<String>,
    op: Option<String>,
    value: Option<f64>,
    values: Option<Vec<f64>>,
    map: Option<BTreeMap<String, i64>>,
    any: Option<Vec<ConditionDoc>>,
    missing: Option<String>,
    missing_codes: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditionDoc {
    source: String,
    op: String,
    value: Option<f64>,
    values: Option<Vec<f64>>,
    map: Option<BTreeMap<String, i64>>,
}

impl ConditionDoc {
    fn into_condition(self, target: &str) -> Result<Condition, DatasetError> {
        let bad = |message: String| DatasetError::InvalidRule {
            target: target.to_string(),
            message,
        };
        let threshold = |v: Option<f64>| v.ok_or_else(|| bad(format!("`{}` needs `value`", self.op)));
        let op = match self.op.as_str() {
            "ge" => RecodeOp::Ge(threshold(self.value)?),
            "gt" => RecodeOp::Gt(threshold(self.value)?),
            "le" => RecodeOp::Le(threshold(self.value)?),
            "lt" => RecodeOp::Lt(threshold(self.value)?),
            "in" => RecodeOp::In(
                self.values
                    .clone()
                    .ok_or_else(|| bad("`in` needs `values`".into()))?,
            ),
            "map" => {
                let map = self
                    .map
                    .clone()
                    .ok_or_else(|| bad("`map` needs a `map` table".into()))?;
                let mut pairs = Vec::with_capacity(map.len());
                for (k, v) in map {
                    let code: f64 = k
                        .parse()
                        .map_err(|_| bad(format!("map key `{k}` is not numeric")))?;
                    pairs.push((code, v));
                }
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                RecodeOp::Map(pairs)
            }
            other => return Err(bad(format!("unknown op `{other}`"))),
        };
        Ok(Condition {
            source: self.source,
            op,
        })
    }
}

impl RecodeConfig {
    pub fn from_toml(text: &str) -> Result<Self, DatasetError> {
        let doc: ConfigDoc = toml::from_str(text).map_err(|e| DatasetError::InvalidRule {
            target: "<config>".into(),
            message: e.to_string(),
        })?;
        let mut rules = Vec::with_capacity(doc.rule.len());
        for r in doc.rule {
            let bad = |message: &str| DatasetError::InvalidRule {
                target: r.target.clone(),
                message: message.to_string(),
            };
            let single = match (r.source, r.op) {
                (Some(source), Some(op)) => Some(ConditionDoc {
                    source,
                    op,
                    value: r.value,
                    values: r.values,
                    map: r.map,
                }),
                (None, None) => None,
                _ => return Err(bad("`source` and `op` go together")),
            };
            let mut rule = match (single, r.any) {
                (Some(c), None) => {
                    let cond = c.into_condition(&r.target)?;
                    RecodeRule::new(r.target.clone(), cond.source, cond.op)
                }
                (None, Some(list)) => RecodeRule::any_of(
                    r.target.clone(),
                    list.into_iter()
                        .map(|c| c.into_condition(&r.target))
                        .collect::<Result<_, _>>()?,
                ),
                (Some(_), Some(_)) => return Err(bad("give either `source`/`op` or `any`, not both")),
                (None, None) => return Err(bad("missing `source`/`op` or `any`")),
            };
            rule.missing_policy = match r.missing.as_deref() {
                None | Some("drop") => MissingPolicy::Drop,
                Some("keep") => MissingPolicy::Keep,
                Some(other) => return Err(bad(&format!("unknown missing policy `{other}`"))),
            };
            if let Some(codes) = r.missing_codes {
                rule.missing_codes = codes;
            }
            rule.validate()?;
            rules.push(rule);
        }
        Ok(RecodeConfig {
            rules,
            passthrough: doc.passthrough,
        })
    }

    /// Every raw column the config reads.
    pub fn sources(&self) -> BTreeSet<&str> {
        self.rules
            .iter()
            .flat_map(|r| r.conditions.iter().map(|c| c.source.as_str()))
            .chain(self.passthrough.iter().map(String::as_str))
            .collect()
    }
}

/// The bundled NHANES 2003-2006 recode configuration.
pub const NHANES_DEFAULT_CONFIG: &str = include_str!("../../config/nhanes_recode.toml");

pub fn nhanes_default_config() -> RecodeConfig {
    RecodeConfig::from_toml(NHANES_DEFAULT_CONFIG).expect("bundled recode config parses")
}

#[cfg(test)]
mod tests {
    use super::super::{VarKind, VariableSchema};
    use super::*;

    fn table(cols: &[(&str, Vec<Cell>)]) -> RawTable {
        let n = cols[0].1.len();
        RawTable::new(
            cols.iter()
                .map(|(n, _)| VariableSchema::new(*n, VarKind::Continuous))
                .collect(),
            (0..n)
                .map(|r| cols.iter().map(|(_, c)| c[r].clone()).collect())
                .collect(),
        )
        .unwrap()
    }

    fn nums(v: &[f64]) -> Vec<Cell> {
        v.iter().map(|&x| Cell::Num(x)).collect()
    }

    fn recode_one(rule: RecodeRule, t: &RawTable) -> Vec<i64> {
        let target = rule.target.clone();
        let cfg = RecodeConfig {
            rules: vec![rule],
            passthrough: vec![],
        };
        let (d, _) = apply_recode(t, &cfg).unwrap();
        d.column(&target).unwrap().to_vec()
    }

    #[test]
    fn default_config_thresholds() {
        let cfg = nhanes_default_config();
        let rule = |name: &str| cfg.rules.iter().find(|r| r.target == name).unwrap().clone();

        let bmi = table(&[("BMXBMI", nums(&[31.2, 29.9, 30.0]))]);
        assert_eq!(recode_one(rule("Y"), &bmi), [1, 0, 1]);

        let a1c = table(&[("LBXGH", nums(&[6.5, 6.4, 5.8]))]);
        assert_eq!(recode_one(rule("diabetes"), &a1c), [1, 0, 0]);

        let coke_src = rule("X").conditions[0].source.clone();
        let coke = table(&[(coke_src.as_str(), nums(&[1.0, 2.0, 3.0, 4.0, 5.0]))]);
        assert_eq!(recode_one(rule("X"), &coke), [0, 1, 1, 1, 1]);

        let lipids = table(&[
            ("LBXTC", nums(&[241.0, 200.0, 200.0, 240.0])),
            ("LBDLDL", nums(&[100.0, 160.0, 100.0, 159.0])),
            ("LBXTR", nums(&[100.0, 100.0, 201.0, 200.0])),
        ]);
        assert_eq!(recode_one(rule("hyperlipidemia"), &lipids), [1, 1, 1, 0]);
    }

    #[test]
    fn disjunction_with_missing_sources() {
        let t = table(&[
            ("a", vec![Cell::Num(5.0), Cell::Missing, Cell::Missing]),
            ("b", vec![Cell::Missing, Cell::Num(0.0), Cell::Missing]),
        ]);
        let rule = RecodeRule::any_of(
            "t",
            vec![
                Condition {
                    source: "a".into(),
                    op: RecodeOp::Gt(1.0),
                },
                Condition {
                    source: "b".into(),
                    op: RecodeOp::Gt(1.0),
                },
            ],
        )
        .with_policy(MissingPolicy::Keep);
        assert_eq!(recode_one(rule, &t), [1, MISSING_LEVEL, MISSING_LEVEL]);
    }

    #[test]
    fn map_rejects_unknown_codes() {
        let t = table(&[("f", nums(&[1.0, 6.0]))]);
        let rule = RecodeRule::new("x", "f", RecodeOp::Map(vec![(1.0, 0), (2.0, 1)]));
        let cfg = RecodeConfig {
            rules: vec![rule],
            passthrough: vec![],
        };
        assert!(matches!(
            apply_recode(&t, &cfg),
            Err(DatasetError::UnmappedValue { .. })
        ));
    }

    #[test]
    fn coded_ops_drop_refusals_by_default() {
        let t = table(&[("f", nums(&[1.0, 7.0, 9.0, 2.0]))]);
        let rule = RecodeRule::new("x", "f", RecodeOp::Map(vec![(1.0, 0), (2.0, 1)]));
        let cfg = RecodeConfig {
            rules: vec![rule],
            passthrough: vec![],
        };
        let (d, report) = apply_recode(&t, &cfg).unwrap();
        assert_eq!(d.column("x").unwrap(), [0, 1]);
        assert_eq!(report.dropped_rows, 2);
        assert_eq!(d.missing_count("x").unwrap(), 0);
    }

    #[test]
    fn passthrough_and_unknown_source() {
        let t = table(&[("g", nums(&[1.0, 2.0, 2.0])), ("v", nums(&[0.0, 5.0, 1.0]))]);
        let cfg = RecodeConfig {
            rules: vec![RecodeRule::new("hi", "v", RecodeOp::Ge(1.0))],
            passthrough: vec!["g".into()],
        };
        let (d, _) = apply_recode(&t, &cfg).unwrap();
        assert_eq!(d.variable_names().collect::<Vec<_>>(), ["hi", "g"]);
        assert_eq!(d.variable("g").unwrap().levels, [1, 2]);

        let cfg = RecodeConfig {
            rules: vec![RecodeRule::new("hi", "nope", RecodeOp::Ge(1.0))],
            passthrough: vec![],
        };
        assert_eq!(
            apply_recode(&t, &cfg),
            Err(DatasetError::UnknownVariable("nope".into()))
        );
    }

    #[test]
    fn toml_parse_errors() {
        assert!(RecodeConfig::from_toml("[[rule]]\ntarget='a'\nsource='b'\nop='zz'\nvalue=1").is_err());
        assert!(RecodeConfig::from_toml("[[rule]]\ntarget='a'\nsource='b'\nop='ge'").is_err());
        assert!(RecodeConfig::from_toml("[[rule]]\ntarget='a'").is_err());
        let cfg = RecodeConfig::from_toml(
            "[[rule]]\ntarget='a'\nsource='b'\nop='in'\nvalues=[1,2]\nmissing='keep'\nmissing_codes=[]",
        )
        .unwrap();
        assert_eq!(cfg.rules[0].missing_policy, MissingPolicy::Keep);
        assert!(cfg.rules[0].missing_codes.is_empty());
    }
}
