//! Oracle containment suite.
//!
//! Random binary models are enumerated exactly and every bound is fed exact
//! quantities. A check fails when the true PNS falls outside an interval, a
//! refinement is wider than the interval it refines, or an estimator
//! disagrees with the oracle.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::estimate::{do_adjust, Event};
use crate::graph::{combinations, NodeSet};
use crate::pns::{pns_bounds_thm1, pns_bounds_thm2, pns_bounds_tp, PnsInterval};
use crate::scm_oracle::{enumerate_counterfactuals, random_scm, CovariateRole, OracleError};

/// Containment tolerance.
pub const CONTAINMENT_TOL: f64 = 1e-9;
/// Tolerance between the adjustment formula and the oracle on exact joints.
pub const ADJUSTMENT_TOL: f64 = 1e-12;

pub const CHECK_NAMES: [&str; 8] = [
    "tp_containment",
    "tp_swapped_containment",
    "thm1_containment",
    "thm1_refines_tp",
    "thm1_empty_reduction",
    "thm2_containment",
    "adjustment_exact",
    "consistency_unconfounded",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationConfig {
    /// Number of models; seeds run from `first_seed`.
    pub seeds: u64,
    pub first_seed: u64,
    /// Covariate counts cycle through `0..=max_covariates`.
    pub max_covariates: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            seeds: 1000,
            first_seed: 0,
            max_covariates: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub seed: u64,
    pub covariates: usize,
    pub role: String,
    pub check: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSummary {
    pub name: &'static str,
    pub checked: u64,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub config: ValidationConfig,
    pub models: u64,
    pub checks: Vec<CheckSummary>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn checked(&self, name: &str) -> u64 {
        self.checks.iter().find(|c| c.name == name).map_or(0, |c| c.checked)
    }
}

/// Model layout for a seed: covariate count and role.
pub fn model_for_seed(seed: u64, max_covariates: usize) -> (usize, CovariateRole) {
    let k = (seed % (max_covariates as u64 + 1)) as usize;
    let role = match (seed / (max_covariates as u64 + 1)) % 3 {
        0 => CovariateRole::Confounder,
        1 => CovariateRole::OutcomeOnly,
        _ => CovariateRole::Mixed,
    };
    (k, role)
}

#[derive(Default)]
struct Tally {
    checked: BTreeMap<&'static str, u64>,
    violations: Vec<Violation>,
}

struct Ctx<'a> {
    seed: u64,
    covariates: usize,
    role: CovariateRole,
    tally: &'a mut Tally,
}

impl Ctx<'_> {
    fn check(&mut self, name: &'static str, ok: bool, detail: impl FnOnce() -> String) {
        *self.tally.checked.entry(name).or_insert(0) += 1;
        if !ok {
            self.tally.violations.push(Violation {
                seed: self.seed,
                covariates: self.covariates,
                role: format!("{:?}", self.role),
                check: name,
                detail: detail(),
            });
        }
    }
}

fn contains(iv: &PnsInterval, p: f64) -> bool {
    iv.contains(p, CONTAINMENT_TOL)
}

fn check_model(seed: u64, max_covariates: usize) -> Result<Tally, OracleError> {
    let (k, role) = model_for_seed(seed, max_covariates);
    let m = random_scm(k, seed, role)?;
    let profile = enumerate_counterfactuals(&m, "X", "Y")?;
    let pns = profile.exact_pns;
    let mut tally = Tally::default();
    let mut ctx = Ctx {
        seed,
        covariates: k,
        role,
        tally: &mut tally,
    };

    let q = profile.quantities();
    let tp = pns_bounds_tp(&q);
    ctx.check("tp_containment", tp.as_ref().is_ok_and(|iv| contains(iv, pns)), || {
        format!("pns {pns} vs {tp:?}")
    });
    let swapped = pns_bounds_tp(&q.swapped());
    ctx.check(
        "tp_swapped_containment",
        swapped.as_ref().is_ok_and(|iv| contains(iv, pns)),
        || format!("pns {pns} vs {swapped:?}"),
    );

    let covariates = m.covariates("X", "Y");
    let mut vars: Vec<&str> = vec!["X", "Y"];
    vars.extend(covariates.iter().map(String::as_str));
    let joint = profile
        .joint_table(&vars, &vec![2; vars.len()])
        .map_err(|e| OracleError::InvalidSpec(format!("seed {seed}: {e}")))?;
    let x = Event::single("X", 1);
    let y = Event::single("Y", 1);
    let x0 = Event::single("X", 0);

    for size in 0..=covariates.len() {
        for combo in combinations(covariates.len(), size) {
            let z: Vec<&str> = combo.iter().map(|&i| covariates[i].as_str()).collect();
            let label = format!("{z:?}");

            let strata = profile.stratum_quantities(&z)?;
            let thm1 = pns_bounds_thm1(&strata);
            ctx.check("thm1_containment", thm1.as_ref().is_ok_and(|iv| contains(iv, pns)), || {
                format!("Z={label}: pns {pns} vs {thm1:?}")
            });
            if let (Ok(t1), Ok(tp)) = (&thm1, &tp) {
                ctx.check(
                    "thm1_refines_tp",
                    t1.lower >= tp.lower - CONTAINMENT_TOL && t1.upper <= tp.upper + CONTAINMENT_TOL,
                    || format!("Z={label}: thm1 [{}, {}] vs tp [{}, {}]", t1.lower, t1.upper, tp.lower, tp.upper),
                );
                if z.is_empty() {
                    ctx.check(
                        "thm1_empty_reduction",
                        t1.lower.to_bits() == tp.lower.to_bits() && t1.upper.to_bits() == tp.upper.to_bits(),
                        || format!("thm1 [{}, {}] vs tp [{}, {}]", t1.lower, t1.upper, tp.lower, tp.upper),
                    );
                }
            }

            let set: NodeSet = z.iter().copied().collect();
            if !m.graph().satisfies_backdoor("X", "Y", &set).unwrap_or(false) {
                continue;
            }
            let thm2 = pns_bounds_thm2(&joint, &x, &y, &z);
            ctx.check("thm2_containment", thm2.as_ref().is_ok_and(|iv| contains(iv, pns)), || {
                format!("Z={label}: pns {pns} vs {thm2:?}")
            });
            let treated = do_adjust(&joint, &x, &y, &z);
            let control = do_adjust(&joint, &x0, &y, &z);
            let ok = match (&treated, &control) {
                (Ok(a), Ok(b)) => {
                    (a.value - profile.p_yx).abs() <= ADJUSTMENT_TOL
                        && (b.value - profile.p_yxp).abs() <= ADJUSTMENT_TOL
                }
                _ => false,
            };
            ctx.check("adjustment_exact", ok, || {
                format!(
                    "Z={label}: do estimates {:?} / {:?} vs oracle {} / {}",
                    treated.as_ref().map(|d| d.value),
                    control.as_ref().map(|d| d.value),
                    profile.p_yx,
                    profile.p_yxp
                )
            });
            if z.is_empty() {
                let obs = joint.count(&x.clone().with("Y", 1)).unwrap_or(0) as f64
                    / joint.count(&x).unwrap_or(1).max(1) as f64;
                ctx.check(
                    "consistency_unconfounded",
                    (obs - profile.p_yx).abs() <= ADJUSTMENT_TOL,
                    || format!("P(y|x) {obs} vs P(y_x) {}", profile.p_yx),
                );
            }
        }
    }
    Ok(tally)
}

/// Run every check over the configured model suite.
///
/// Models are generated and checked in parallel; the report lists
/// violations in seed order.
pub fn run_validation(config: &ValidationConfig) -> Result<ValidationReport, OracleError> {
    let seeds: Vec<u64> = (config.first_seed..config.first_seed + config.seeds).collect();
    let tallies: Vec<Tally> = seeds
        .par_iter()
        .map(|&s| check_model(s, config.max_covariates))
        .collect::<Result<_, _>>()?;
    let mut checked: BTreeMap<&'static str, u64> = BTreeMap::new();
    let mut violations = Vec::new();
    for t in tallies {
        for (k, v) in t.checked {
            *checked.entry(k).or_insert(0) += v;
        }
        violations.extend(t.violations);
    }
    let checks = CHECK_NAMES
        .iter()
        .map(|&name| CheckSummary {
            name,
            checked: checked.get(name).copied().unwrap_or(0),
            violations: violations.iter().filter(|v| v.check == name).count() as u64,
        })
        .collect();
    Ok(ValidationReport {
        config: config.clone(),
        models: config.seeds,
        checks,
        violations,
    })
}
