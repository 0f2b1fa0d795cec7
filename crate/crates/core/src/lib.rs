//! Causal identification and bounding of the probability of necessity and
//! sufficiency (PNS) over discrete observational data.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: named DAGs with d-separation and backdoor queries.
//! - [`dataset`]: SAS transport (XPT) and CSV ingestion, key merges and
//!   recoding into binary analysis variables.
//! - [`estimate`]: contingency tables, conditional frequencies and the
//!   backdoor adjustment formula.
//! - [`pns`]: population, covariate-stratified and observational
//!   backdoor-covariate bounds on PNS.
//! - [`scm_oracle`]: finite structural causal models whose exogenous space is
//!   enumerated exactly. Used as ground truth for every bound.
//! - [`discovery`]: G² conditional-independence tests and PC-style CPDAG
//!   learning.
//! - [`subgroup`]: subpopulation filtering, the worst-case sample-size rule and
//!   per-subgroup bounds.
//! - [`validation`]: the oracle containment suite shared by the CLI and tests.

pub mod dataset;
pub mod discovery;
pub mod estimate;
pub mod graph;
pub mod numeric;
pub mod pns;
pub mod scm_oracle;
pub mod subgroup;
pub mod validation;

pub use dataset::{DiscreteDataset, RawTable};
pub use estimate::{Event, JointTable};
pub use graph::{CausalGraph, NodeSet};
pub use pns::{CausalQuantities, PnsInterval, StratumQuantities};
pub use scm_oracle::{CounterfactualProfile, ScmSpec};

/// Version tag written into every structured document this crate emits.
pub const SCHEMA_VERSION: &str = "v1";
